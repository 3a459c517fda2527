//! Construction-level checks for the complex-structure-adapted screen and
//! the almost contact pack, on the flat indefinite Kaehler geometries.

use nalgebra::DVector;
use nullgeo::expr::ScalarField;
use nullgeo::hypersurface::{AstVecField, Embedding, HyperGeometry};
use nullgeo::kaehler::KaehlerStructure;

fn sf(t: &str, d: usize) -> ScalarField {
    ScalarField::parse(t, d).unwrap()
}

fn r42(xi0: &str) -> KaehlerStructure {
    let rows = [
        ["-1", "0", "0", "0"],
        ["0", "-1", "0", "0"],
        ["0", "0", "1", "0"],
        ["0", "0", "0", "1"],
    ];
    let jrows = [
        ["0", "-1", "0", "0"],
        ["1", "0", "0", "0"],
        ["0", "0", "0", "-1"],
        ["0", "0", "1", "0"],
    ];
    let amb = nullgeo::ambient::AmbientManifold::new(
        4,
        2,
        rows.iter().map(|r| r.iter().map(|t| sf(t, 4)).collect()).collect(),
        Some(jrows.iter().map(|r| r.iter().map(|t| sf(t, 4)).collect()).collect()),
    )
    .unwrap();
    let emb = Embedding::new(vec![sf("x0", 3), sf("x1", 3), sf("x0", 3), sf("x2", 3)]);
    let xi = AstVecField::new(vec![sf(xi0, 3), sf("0", 3), sf("0", 3)]);
    let screen = vec![
        AstVecField::new(vec![sf("0", 3), sf("1", 3), sf("0", 3)]),
        AstVecField::new(vec![sf("0", 3), sf("0", 3), sf("1", 3)]),
    ];
    let geo = HyperGeometry::new(amb, emb, xi, screen).unwrap();
    let grid: Vec<Vec<f64>> = vec![
        vec![0.1, 0.2, -0.3],
        vec![0.4, -0.1, 0.2],
        vec![-0.2, 0.3, 0.1],
    ];
    KaehlerStructure::build(&geo, &sf("0", 4), &[0.0; 3], &grid).unwrap()
}

#[test]
fn screen_iteration_converges_and_pack_invariants_hold() {
    let ks = r42("1");
    assert!(ks.iterations <= 5, "iteration took {} steps", ks.iterations);
    assert_eq!(ks.d0_rank, 0);
    for u in [[0.1, 0.2, -0.3], [0.4, -0.1, 0.2]] {
        let kp = ks.point(&u).unwrap();
        let fp = &kp.wp.ip.fp;
        // Normalization and isotropy of the frame pair.
        assert!((fp.pair(&fp.n_amb, &fp.xi_amb).v - 1.0).abs() < 1e-12);
        assert!(fp.pair(&fp.n_amb, &fp.n_amb).v.abs() < 1e-12);
        // U and V isotropic, theta0(U) = 1, F U = 0, theta0# = V.
        let ua = fp.push(&kp.u_chart);
        let va = fp.push(&kp.v_chart);
        assert!(fp.pair(&ua, &ua).v.abs() < 1e-12);
        assert!(fp.pair(&va, &va).v.abs() < 1e-12);
        assert!((kp.theta0_of(&kp.u_chart.v) - 1.0).abs() < 1e-12);
        assert!(kp.f_apply(&kp.u_chart.v).amax() < 1e-12);
        let sharp = kp.wp.kit.sharp(&kp.theta0.clone()).unwrap();
        assert!((&sharp.v - &kp.v_chart.v).norm() < 1e-12);
        // F^2 = -id + theta0 (x) U on random probes.
        let x = DVector::from_column_slice(&[0.3, 0.8, -0.4]);
        let ffx = kp.f_apply(&kp.f_apply(&x));
        let expect = -&x + &kp.u_chart.v * kp.theta0_of(&x);
        assert!((ffx - expect).amax() < 1e-12);
    }
}

#[test]
fn rescaled_radical_scales_the_pack_consistently() {
    // xi -> e^rho xi forces N -> e^-rho N, so theta0 = g0(., -J xi) scales by
    // e^rho while theta0(U) stays 1.
    let ks1 = r42("1");
    let ks2 = r42("exp(0.2*x1)");
    let u = [0.3, 0.5, -0.2];
    let kp1 = ks1.point(&u).unwrap();
    let kp2 = ks2.point(&u).unwrap();
    let rho = (0.2f64 * u[1]).exp();
    let x = DVector::from_column_slice(&[0.4, -0.7, 0.2]);
    assert!((kp2.theta0_of(&x) - rho * kp1.theta0_of(&x)).abs() < 1e-12);
    assert!((kp2.theta0_of(&kp2.u_chart.v) - 1.0).abs() < 1e-12);
}

#[test]
fn techn_identities_hold_with_nonzero_phi() {
    let ks = r42("exp(0.2*x1)");
    for u in [[0.1, 0.2, -0.3], [0.4, -0.1, 0.2]] {
        let kp = ks.point(&u).unwrap();
        // phi is nonzero here, so the identities are not vacuous.
        assert!(kp.wp.phi_of(&kp.wp.ip.fp.screen_chart[0].v.clone()).abs() > 1e-3);
        let x = DVector::from_column_slice(&[0.3, 0.8, -0.4]);
        let y = DVector::from_column_slice(&[-0.5, 0.2, 0.9]);
        let t = nullgeo::kaehler::techn_residuals(&kp, &x, &y).unwrap();
        assert!(t.i < 1e-12 && t.ii < 1e-12 && t.iii < 1e-12 && t.iv < 1e-12);
    }
}

#[test]
fn curved_embedding_is_rejected_for_screen_construction() {
    let rows = [
        ["-1", "0", "0", "0"],
        ["0", "-1", "0", "0"],
        ["0", "0", "1", "0"],
        ["0", "0", "0", "1"],
    ];
    let jrows = [
        ["0", "-1", "0", "0"],
        ["1", "0", "0", "0"],
        ["0", "0", "0", "-1"],
        ["0", "0", "1", "0"],
    ];
    let amb = nullgeo::ambient::AmbientManifold::new(
        4,
        2,
        rows.iter().map(|r| r.iter().map(|t| sf(t, 4)).collect()).collect(),
        Some(jrows.iter().map(|r| r.iter().map(|t| sf(t, 4)).collect()).collect()),
    )
    .unwrap();
    // Quadratic embedding: the Jacobian is not constant.
    let emb = Embedding::new(vec![
        sf("x0 + 0.1*x1^2", 3),
        sf("x1", 3),
        sf("x0 + 0.1*x1^2", 3),
        sf("x2", 3),
    ]);
    let xi = AstVecField::new(vec![sf("1", 3), sf("0", 3), sf("0", 3)]);
    let screen = vec![
        AstVecField::new(vec![sf("0", 3), sf("1", 3), sf("0", 3)]),
        AstVecField::new(vec![sf("0", 3), sf("0", 3), sf("1", 3)]),
    ];
    let geo = HyperGeometry::new(amb, emb, xi, screen).unwrap();
    let err = KaehlerStructure::build(&geo, &sf("0", 4), &[0.0; 3], &[vec![0.0; 3]])
        .err()
        .expect("curved chart must be rejected");
    assert!(err.to_string().contains("affine embedding chart"), "{err}");
}
