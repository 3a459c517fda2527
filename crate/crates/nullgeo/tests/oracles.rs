//! Brute-force oracles that stay independent of the symbolic pipeline:
//! parallel-transport holonomy around small coordinate squares against the
//! assembled curvature, and Richardson-extrapolated differences against
//! exact jets of constructed frame quantities.

use nalgebra::DVector;
use nullgeo::ambient::AmbientManifold;
use nullgeo::expr::ScalarField;

fn sf(t: &str, d: usize) -> ScalarField {
    ScalarField::parse(t, d).unwrap()
}

fn curved_ambient() -> AmbientManifold {
    let rows = [
        ["-1", "0", "0", "0"],
        ["0", "1", "0", "0"],
        ["0", "0", "1", "0"],
        ["0", "0", "0", "1"],
    ];
    AmbientManifold::new(
        4,
        1,
        rows.iter()
            .map(|r| r.iter().map(|t| sf(t, 4)).collect())
            .collect(),
        None,
    )
    .unwrap()
    .conformally_rescaled(&sf("0.2*x2 + 0.1*x1*x3", 4))
}

/// RK4 parallel transport of z along the straight segment from x in
/// direction dir (already scaled by the segment length).
fn transport_segment(
    amb: &AmbientManifold,
    x: &mut DVector<f64>,
    z: &mut DVector<f64>,
    dir: &DVector<f64>,
    steps: usize,
) {
    let m = amb.dim;
    let h = 1.0 / steps as f64;
    let rhs = |pos: &DVector<f64>, zz: &DVector<f64>| -> DVector<f64> {
        let gamma = amb.christoffel(pos.as_slice()).unwrap();
        let mut out = DVector::zeros(m);
        for a in 0..m {
            let mut s = 0.0;
            for b in 0..m {
                for c in 0..m {
                    s -= gamma[a][(b, c)] * dir[b] * zz[c];
                }
            }
            out[a] = s;
        }
        out
    };
    for _ in 0..steps {
        let k1 = rhs(x, z);
        let x_half = &*x + dir * (0.5 * h);
        let k2 = rhs(&x_half, &(&*z + &k1 * (0.5 * h)));
        let k3 = rhs(&x_half, &(&*z + &k2 * (0.5 * h)));
        let x_full = &*x + dir * h;
        let k4 = rhs(&x_full, &(&*z + &k3 * h));
        *z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        *x = x_full;
    }
}

/// Holonomy around an eps-square in the (a,b) coordinate plane recovers
/// eps^2 R(e_a, e_b)Z in the crate's curvature convention.
#[test]
fn holonomy_oracle_matches_riemann() {
    let amb = curved_ambient();
    let x0 = DVector::from_column_slice(&[0.1, 0.4, -0.2, 0.3]);
    let z0 = DVector::from_column_slice(&[0.7, -0.3, 0.5, 0.2]);
    let eps = 1e-3;
    let steps = 8;
    for (a, b) in [(1usize, 2usize), (2, 3), (0, 2)] {
        let mut ea = DVector::zeros(4);
        ea[a] = eps;
        let mut eb = DVector::zeros(4);
        eb[b] = eps;
        let mut x = x0.clone();
        let mut z = z0.clone();
        transport_segment(&amb, &mut x, &mut z, &ea, steps);
        transport_segment(&amb, &mut x, &mut z, &eb, steps);
        transport_segment(&amb, &mut x, &mut z, &(-&ea), steps);
        transport_segment(&amb, &mut x, &mut z, &(-&eb), steps);
        assert!((&x - &x0).norm() < 1e-14, "loop did not close");
        let holonomy = (&z - &z0) / (eps * eps);
        let mut xa = DVector::zeros(4);
        xa[a] = 1.0;
        let mut yb = DVector::zeros(4);
        yb[b] = 1.0;
        let riemann = amb.riemann_apply(x0.as_slice(), &xa, &yb, &z0).unwrap();
        let scale = riemann.amax().max(1e-6);
        let rel = (&holonomy - &riemann).amax() / scale;
        assert!(
            rel <= 1e-3,
            "holonomy vs curvature in plane ({a},{b}): relative error {rel:.3e}\n\
             holonomy {holonomy} riemann {riemann}"
        );
    }
}

/// Second derivatives recovered by one Richardson step on central second
/// differences reach curvature-level accuracy for metric components.
#[test]
fn richardson_second_differences_match_exact() {
    let amb = curved_ambient();
    let x = [0.1, 0.4, -0.2, 0.3];
    let mut worst: f64 = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            let field = &amb.metric[a][b];
            for i in 0..4 {
                for j in 0..4 {
                    let exact = field.exact_partial(i).exact_partial(j).eval(&x).unwrap();
                    let fd =
                        nullgeo::expr::fd_second_partial(field, i, j, &x, 1e-4).unwrap();
                    worst = worst.max((exact - fd).abs() / (1.0 + exact.abs()));
                }
            }
        }
    }
    assert!(worst <= 1e-6, "second-difference oracle drift {worst:.3e}");
}

/// Frame quantities built through linear solves carry exact first jets:
/// compare against Richardson differences of the constructed values.
#[test]
fn constructed_frame_jets_match_richardson_differences() {
    use nullgeo::hypersurface::{AstVecField, Embedding, HyperGeometry};
    let amb = curved_ambient();
    let emb = Embedding::new(vec![sf("x0", 3), sf("x0", 3), sf("x1", 3), sf("x2", 3)]);
    let xi = AstVecField::new(vec![sf("1", 3), sf("0", 3), sf("0", 3)]);
    let screen = vec![
        AstVecField::new(vec![sf("0", 3), sf("1", 3), sf("0.1*x2", 3)]),
        AstVecField::new(vec![sf("0", 3), sf("0", 3), sf("1", 3)]),
    ];
    let geo = HyperGeometry::new(amb, emb, xi, screen).unwrap();
    let u = [0.2, 0.3, -0.4];
    let fp = geo.frame(&u).unwrap();
    for k in 0..3 {
        let eval = |uu: &[f64]| -> Result<Vec<f64>, nullgeo::expr::ExprError> {
            let f = geo
                .frame(uu)
                .map_err(|e| nullgeo::expr::ExprError::Domain(e.to_string()))?;
            let mut out: Vec<f64> = f.n_amb.v.iter().copied().collect();
            out.extend(f.eta.v.iter().copied());
            Ok(out)
        };
        let fd = nullgeo::expr::fd_vector_partial(eval, k, &u, 1e-5).unwrap();
        for a in 0..4 {
            assert!(
                (fp.n_amb.d[k][a] - fd[a]).abs() < 1e-9,
                "dN/du{k}[{a}] exact {} vs fd {}",
                fp.n_amb.d[k][a],
                fd[a]
            );
        }
        for al in 0..3 {
            assert!((fp.eta.d[k][al] - fd[4 + al]).abs() < 1e-9);
        }
    }
}
