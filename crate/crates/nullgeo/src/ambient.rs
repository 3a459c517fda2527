//! The ambient pseudo-Riemannian manifold in a single chart: metric
//! evaluation, Levi-Civita connection, curvature, and the optional parallel
//! complex structure. The same machinery is reused at leaf dimension for the
//! intrinsic Riemannian pipeline on screen leaves.
//!
//! Curvature sign convention throughout the crate:
//! R(X,Y) = ∇_{[X,Y]} − [∇_X, ∇_Y], the negative of the more common choice.
//! With this convention Ric(X,Y) = tr(Z ↦ R(X,Z)Y) still equals the familiar
//! Ricci tensor (the unit 2-sphere has Ric = +g).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::ScalarField;

#[derive(Clone)]
pub struct AmbientManifold {
    pub dim: usize,
    /// Signature index: number of negative eigenvalues of the metric.
    pub index: usize,
    pub metric: Vec<Vec<ScalarField>>,
    pub complex_structure: Option<Vec<Vec<ScalarField>>>,
}

/// Pointwise metric data with exact first and second derivatives, plus the
/// derived Christoffel symbols and their first derivatives.
pub struct MetricJet {
    pub g: DMatrix<f64>,
    /// dg[c][(a,b)] = ∂_c g_ab
    pub dg: Vec<DMatrix<f64>>,
    /// ddg[c][d][(a,b)] = ∂_c ∂_d g_ab
    pub ddg: Vec<Vec<DMatrix<f64>>>,
    pub ginv: DMatrix<f64>,
    /// dginv[c] = ∂_c g^{-1} = −g⁻¹ (∂_c g) g⁻¹
    pub dginv: Vec<DMatrix<f64>>,
    /// gamma[a][(b,c)] = Γ^a_{bc}
    pub gamma: Vec<DMatrix<f64>>,
    /// dgamma[d][a][(b,c)] = ∂_d Γ^a_{bc}
    pub dgamma: Vec<Vec<DMatrix<f64>>>,
}

impl AmbientManifold {
    pub fn new(
        dim: usize,
        index: usize,
        metric: Vec<Vec<ScalarField>>,
        complex_structure: Option<Vec<Vec<ScalarField>>>,
    ) -> Result<AmbientManifold> {
        if metric.len() != dim || metric.iter().any(|row| row.len() != dim) {
            return Err(Error::schema(format!(
                "metric must be a {dim}x{dim} matrix of expressions"
            )));
        }
        if let Some(j) = &complex_structure {
            if j.len() != dim || j.iter().any(|row| row.len() != dim) {
                return Err(Error::schema(format!(
                    "complex structure must be a {dim}x{dim} matrix of expressions"
                )));
            }
        }
        Ok(AmbientManifold {
            dim,
            index,
            metric,
            complex_structure,
        })
    }

    /// Conformally rescaled copy: metric entries multiplied by e^{-2 factor}.
    /// The complex structure, if any, is carried over unchanged.
    pub fn conformally_rescaled(&self, factor: &ScalarField) -> AmbientManifold {
        use crate::expr::{Expr, Func};
        let scale = Expr::func(
            Func::Exp,
            Expr::mul(Expr::Num(-2.0), factor.ast().clone()),
        );
        let scale_field = ScalarField::from_ast(scale, self.dim);
        let metric = self
            .metric
            .iter()
            .map(|row| row.iter().map(|e| e.mul(&scale_field)).collect())
            .collect();
        AmbientManifold {
            dim: self.dim,
            index: self.index,
            metric,
            complex_structure: self.complex_structure.clone(),
        }
    }

    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim;
        let mut g = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                g[(a, b)] = self.metric[a][b].eval(x)?;
            }
        }
        Ok(g)
    }

    pub fn metric_d1_at(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        let n = self.dim;
        let mut dg = vec![DMatrix::zeros(n, n); n];
        for a in 0..n {
            for b in 0..n {
                let parts = self.metric[a][b].partials();
                for c in 0..n {
                    dg[c][(a, b)] = parts[c].eval(x)?;
                }
            }
        }
        Ok(dg)
    }

    pub fn metric_jet(&self, x: &[f64]) -> Result<MetricJet> {
        let n = self.dim;
        let g = self.metric_at(x)?;
        let dg = self.metric_d1_at(x)?;
        let mut ddg = vec![vec![DMatrix::zeros(n, n); n]; n];
        for a in 0..n {
            for b in 0..n {
                let parts = self.metric[a][b].partials();
                for c in 0..n {
                    let second = parts[c].partials();
                    for d in 0..n {
                        ddg[c][d][(a, b)] = second[d].eval(x)?;
                    }
                }
            }
        }
        let ginv = g.clone().try_inverse().ok_or_else(|| {
            Error::numerical(format!("singular ambient metric at {x:?}"))
        })?;
        let dginv: Vec<DMatrix<f64>> = dg.iter().map(|dgc| -(&ginv * dgc * &ginv)).collect();

        // Koszul formula: Γ^a_{bc} = ½ g^{ad}(∂_b g_{dc} + ∂_c g_{bd} − ∂_d g_{bc}).
        let mut gamma_lower = vec![DMatrix::zeros(n, n); n]; // [d][(b,c)]
        for d in 0..n {
            for b in 0..n {
                for c in 0..n {
                    gamma_lower[d][(b, c)] =
                        0.5 * (dg[b][(d, c)] + dg[c][(b, d)] - dg[d][(b, c)]);
                }
            }
        }
        let mut gamma = vec![DMatrix::zeros(n, n); n];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let mut s = 0.0;
                    for d in 0..n {
                        s += ginv[(a, d)] * gamma_lower[d][(b, c)];
                    }
                    gamma[a][(b, c)] = s;
                }
            }
        }
        // ∂_e Γ^a_{bc} from second metric derivatives and ∂g⁻¹.
        let mut dgamma = vec![vec![DMatrix::zeros(n, n); n]; n];
        for e in 0..n {
            let mut dgamma_lower = vec![DMatrix::zeros(n, n); n];
            for d in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        dgamma_lower[d][(b, c)] = 0.5
                            * (ddg[b][e][(d, c)] + ddg[c][e][(b, d)] - ddg[d][e][(b, c)]);
                    }
                }
            }
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        let mut s = 0.0;
                        for d in 0..n {
                            s += dginv[e][(a, d)] * gamma_lower[d][(b, c)]
                                + ginv[(a, d)] * dgamma_lower[d][(b, c)];
                        }
                        dgamma[e][a][(b, c)] = s;
                    }
                }
            }
        }
        Ok(MetricJet {
            g,
            dg,
            ddg,
            ginv,
            dginv,
            gamma,
            dgamma,
        })
    }

    /// Γ^a_{bc} at x.
    pub fn christoffel(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        Ok(self.metric_jet(x)?.gamma)
    }

    /// Curvature operator in the crate convention applied to vectors:
    /// R(X,Y)Z = −[∇_X∇_Y − ∇_Y∇_X − ∇_{[X,Y]}]Z expressed through
    /// coordinate components.
    pub fn riemann_apply(
        &self,
        x: &[f64],
        xv: &DVector<f64>,
        yv: &DVector<f64>,
        zv: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let mj = self.metric_jet(x)?;
        Ok(riemann_apply_from_jet(&mj, xv, yv, zv))
    }

    /// Ricci tensor Ric(X,Y) = tr(Z ↦ R(X,Z)Y); equals the conventional
    /// Ricci tensor of the Levi-Civita connection.
    pub fn ricci(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let mj = self.metric_jet(x)?;
        Ok(ricci_from_jet(&mj))
    }

    pub fn scalar_curvature(&self, x: &[f64]) -> Result<f64> {
        let mj = self.metric_jet(x)?;
        let ric = ricci_from_jet(&mj);
        let mut s = 0.0;
        for a in 0..self.dim {
            for b in 0..self.dim {
                s += mj.ginv[(a, b)] * ric[(a, b)];
            }
        }
        Ok(s)
    }

    pub fn complex_at(&self, x: &[f64]) -> Result<Option<DMatrix<f64>>> {
        let Some(jfields) = &self.complex_structure else {
            return Ok(None);
        };
        let n = self.dim;
        let mut j = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                j[(a, b)] = jfields[a][b].eval(x)?;
            }
        }
        Ok(Some(j))
    }

    /// Structure checks at one point: symmetry, nondegeneracy, declared
    /// signature index, and (when J is present) J² = −I, compatibility
    /// ḡ(JX,JY) = ḡ(X,Y), and ∇J = 0.
    pub fn validate_at(&self, x: &[f64], tol: f64) -> Result<()> {
        let n = self.dim;
        let g = self.metric_at(x)?;
        let scale = g.amax().max(1.0);
        for a in 0..n {
            for b in 0..n {
                if (g[(a, b)] - g[(b, a)]).abs() > tol * scale {
                    return Err(Error::geometry(format!(
                        "ambient metric not symmetric at {x:?}: g[{a}{b}]={} g[{b}{a}]={}",
                        g[(a, b)],
                        g[(b, a)]
                    )));
                }
            }
        }
        let eig = g.clone().symmetric_eigen();
        let max_abs = eig.eigenvalues.amax();
        let mut neg = 0usize;
        for ev in eig.eigenvalues.iter() {
            if ev.abs() <= 1e-10 * max_abs {
                return Err(Error::geometry(format!(
                    "ambient metric degenerate at {x:?} (eigenvalue {ev})"
                )));
            }
            if *ev < 0.0 {
                neg += 1;
            }
        }
        if neg != self.index {
            return Err(Error::geometry(format!(
                "ambient metric has index {neg} at {x:?}, declared {}",
                self.index
            )));
        }
        if let Some(j) = self.complex_at(x)? {
            let jj = &j * &j;
            let id = DMatrix::<f64>::identity(n, n);
            if (&jj + &id).amax() > tol {
                return Err(Error::geometry(format!(
                    "complex structure J^2 != -I at {x:?} (residual {})",
                    (&jj + &id).amax()
                )));
            }
            let pulled = j.transpose() * &g * &j;
            if (&pulled - &g).amax() > tol * scale {
                return Err(Error::geometry(format!(
                    "complex structure not metric-compatible at {x:?} (residual {})",
                    (&pulled - &g).amax()
                )));
            }
            let res = self.nabla_j_residual(x)?;
            if res > tol {
                return Err(Error::geometry(format!(
                    "complex structure not parallel at {x:?} (|nabla J| = {res})"
                )));
            }
        }
        Ok(())
    }

    /// max |(∇_b J)^a_c| at x; zero for a Kaehler structure.
    pub fn nabla_j_residual(&self, x: &[f64]) -> Result<f64> {
        let Some(jfields) = &self.complex_structure else {
            return Ok(0.0);
        };
        let n = self.dim;
        let mj = self.metric_jet(x)?;
        let j = self.complex_at(x)?.unwrap();
        let mut worst = 0.0f64;
        for b in 0..n {
            for a in 0..n {
                for c in 0..n {
                    let mut v = jfields[a][c].exact_partial(b).eval(x)?;
                    for e in 0..n {
                        v += mj.gamma[a][(b, e)] * j[(e, c)] - mj.gamma[e][(b, c)] * j[(a, e)];
                    }
                    worst = worst.max(v.abs());
                }
            }
        }
        Ok(worst)
    }

    /// Metricity residual max |∂_c g_ab − Γ^e_{ca} g_eb − Γ^e_{cb} g_ae|,
    /// with the metric derivative taken by central differences so the check
    /// is independent of the symbolic pipeline.
    pub fn metricity_residual_fd(&self, x: &[f64], h: f64) -> Result<f64> {
        let n = self.dim;
        let mj = self.metric_jet(x)?;
        let mut worst = 0.0f64;
        for c in 0..n {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[c] += h;
            lo[c] -= h;
            let ghi = self.metric_at(&hi)?;
            let glo = self.metric_at(&lo)?;
            for a in 0..n {
                for b in 0..n {
                    let fd = (ghi[(a, b)] - glo[(a, b)]) / (2.0 * h);
                    let mut conn = 0.0;
                    for e in 0..n {
                        conn += mj.gamma[e][(c, a)] * mj.g[(e, b)]
                            + mj.gamma[e][(c, b)] * mj.g[(a, e)];
                    }
                    worst = worst.max((fd - conn).abs());
                }
            }
        }
        Ok(worst)
    }
}

/// Standard-convention components R^a_{dbc} assembled from Γ and ∂Γ, then
/// negated and contracted: R(X,Y)Z with the crate convention.
pub fn riemann_apply_from_jet(
    mj: &MetricJet,
    xv: &DVector<f64>,
    yv: &DVector<f64>,
    zv: &DVector<f64>,
) -> DVector<f64> {
    let n = mj.g.nrows();
    let mut out = DVector::zeros(n);
    for a in 0..n {
        let mut acc = 0.0;
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut r_std = mj.dgamma[b][a][(c, d)] - mj.dgamma[c][a][(b, d)];
                    for e in 0..n {
                        r_std += mj.gamma[a][(b, e)] * mj.gamma[e][(c, d)]
                            - mj.gamma[a][(c, e)] * mj.gamma[e][(b, d)];
                    }
                    acc -= r_std * xv[b] * yv[c] * zv[d];
                }
            }
        }
        out[a] = acc;
    }
    out
}

pub fn ricci_from_jet(mj: &MetricJet) -> DMatrix<f64> {
    let n = mj.g.nrows();
    // Ric_bd = ∂_a Γ^a_{bd} − ∂_b Γ^a_{ad} + Γ^a_{ae}Γ^e_{bd} − Γ^a_{be}Γ^e_{ad}
    let mut ric = DMatrix::zeros(n, n);
    for b in 0..n {
        for d in 0..n {
            let mut s = 0.0;
            for a in 0..n {
                s += mj.dgamma[a][a][(b, d)] - mj.dgamma[b][a][(a, d)];
                for e in 0..n {
                    s += mj.gamma[a][(a, e)] * mj.gamma[e][(b, d)]
                        - mj.gamma[a][(b, e)] * mj.gamma[e][(a, d)];
                }
            }
            ric[(b, d)] = s;
        }
    }
    ric
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ScalarField;

    fn sf(text: &str, dim: usize) -> ScalarField {
        ScalarField::parse(text, dim).unwrap()
    }

    pub fn minkowski4() -> AmbientManifold {
        let entries = [
            ["-1", "0", "0", "0"],
            ["0", "1", "0", "0"],
            ["0", "0", "1", "0"],
            ["0", "0", "0", "1"],
        ];
        let metric = entries
            .iter()
            .map(|row| row.iter().map(|t| sf(t, 4)).collect())
            .collect();
        AmbientManifold::new(4, 1, metric, None).unwrap()
    }

    #[test]
    fn flat_metric_has_zero_christoffels() {
        let amb = minkowski4();
        let x = [0.3, -0.2, 1.0, 0.5];
        let gamma = amb.christoffel(&x).unwrap();
        for g in &gamma {
            assert!(g.amax() == 0.0);
        }
    }

    #[test]
    fn flat_curvature_vanishes() {
        let amb = minkowski4();
        let x = [0.3, -0.2, 1.0, 0.5];
        let xv = DVector::from_column_slice(&[1.0, 0.2, -0.4, 0.9]);
        let yv = DVector::from_column_slice(&[0.0, 1.0, 0.5, -0.3]);
        let zv = DVector::from_column_slice(&[0.7, 0.7, 0.1, 0.0]);
        let r = amb.riemann_apply(&x, &xv, &yv, &zv).unwrap();
        assert!(r.amax() < 1e-14);
    }

    #[test]
    fn conformally_flat_christoffels_match_hand_formula() {
        // g = e^{-2f} diag(-1,1,1,1) with f = 0.3*x2:
        // Γ^a_{bc} = −(δ^a_b f_c + δ^a_c f_b − η_{bc} η^{ad} f_d).
        let amb = minkowski4().conformally_rescaled(&sf("0.3*x2", 4));
        let x = [0.1, 0.2, -0.3, 0.4];
        let gamma = amb.christoffel(&x).unwrap();
        let df = [0.0, 0.0, 0.3, 0.0];
        let eta = [-1.0, 1.0, 1.0, 1.0];
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let mut expect = 0.0;
                    if a == b {
                        expect -= df[c];
                    }
                    if a == c {
                        expect -= df[b];
                    }
                    if b == c {
                        expect += eta[b] * df[a] / eta[a];
                    }
                    assert!(
                        (gamma[a][(b, c)] - expect).abs() < 1e-12,
                        "Gamma^{a}_{b}{c} = {} expected {}",
                        gamma[a][(b, c)],
                        expect
                    );
                }
            }
        }
    }

    #[test]
    fn metricity_oracle_off_diagonal_metric() {
        // Metric with one coordinate-dependent off-diagonal entry.
        let entries = [
            ["-1", "0", "0", "0"],
            ["0", "1", "x1", "0"],
            ["0", "x1", "2", "0"],
            ["0", "0", "0", "1"],
        ];
        let metric = entries
            .iter()
            .map(|row| row.iter().map(|t| sf(t, 4)).collect())
            .collect();
        let amb = AmbientManifold::new(4, 1, metric, None).unwrap();
        let x = [0.0, 0.3, 0.0, 0.0];
        let res = amb.metricity_residual_fd(&x, 1e-5).unwrap();
        assert!(res < 1e-9, "metricity residual {res}");
        // Christoffels symmetric in the lower indices.
        let gamma = amb.christoffel(&x).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    assert!((gamma[a][(b, c)] - gamma[a][(c, b)]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn sphere_ricci_equals_metric() {
        // Unit 2-sphere: ds² = dθ² + sin²θ dφ², Ric = g.
        let metric = vec![
            vec![sf("1", 2), sf("0", 2)],
            vec![sf("0", 2), sf("sin(x0)^2", 2)],
        ];
        let amb = AmbientManifold::new(2, 0, metric, None).unwrap();
        let x = [0.9, 0.4];
        let ric = amb.ricci(&x).unwrap();
        let g = amb.metric_at(&x).unwrap();
        assert!((&ric - &g).amax() < 1e-10, "Ric != g: {ric}");
        let scal = amb.scalar_curvature(&x).unwrap();
        assert!((scal - 2.0).abs() < 1e-10);
    }

    #[test]
    fn first_bianchi_for_curved_metric() {
        let amb = minkowski4().conformally_rescaled(&sf("0.2*x2 + 0.1*x1*x3", 4));
        let x = [0.1, 0.4, -0.2, 0.3];
        let vecs = [
            DVector::from_column_slice(&[1.0, 0.3, -0.2, 0.5]),
            DVector::from_column_slice(&[0.2, -1.0, 0.4, 0.1]),
            DVector::from_column_slice(&[-0.6, 0.2, 0.9, -0.3]),
        ];
        let r1 = amb.riemann_apply(&x, &vecs[0], &vecs[1], &vecs[2]).unwrap();
        let r2 = amb.riemann_apply(&x, &vecs[1], &vecs[2], &vecs[0]).unwrap();
        let r3 = amb.riemann_apply(&x, &vecs[2], &vecs[0], &vecs[1]).unwrap();
        let total = &r1 + &r2 + &r3;
        let scale = r1.amax().max(r2.amax()).max(r3.amax()).max(1.0);
        assert!(total.amax() < 1e-10 * scale, "Bianchi residual {}", total.amax());
    }

    #[test]
    fn antisymmetry_in_first_arguments() {
        let amb = minkowski4().conformally_rescaled(&sf("0.2*x2", 4));
        let x = [0.1, 0.4, -0.2, 0.3];
        let xv = DVector::from_column_slice(&[1.0, 0.3, -0.2, 0.5]);
        let zv = DVector::from_column_slice(&[-0.6, 0.2, 0.9, -0.3]);
        let r = amb.riemann_apply(&x, &xv, &xv, &zv).unwrap();
        assert!(r.amax() < 1e-12);
    }

    #[test]
    fn declared_index_checked() {
        let amb = minkowski4();
        assert!(amb.validate_at(&[0.0, 0.0, 0.0, 0.0], 1e-8).is_ok());
        let wrong = AmbientManifold::new(4, 2, amb.metric.clone(), None).unwrap();
        assert!(wrong.validate_at(&[0.0; 4], 1e-8).is_err());
    }
}
