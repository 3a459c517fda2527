//! Totally umbilical screen foliations: umbilicity detection with the
//! proportionality function λ, the closed forms for D^g-derivatives of S
//! they imply, the Einstein-Weyl consequences, and the transfer between the
//! hypersurface structure and the intrinsic Riemannian Weyl structure on a
//! leaf of the screen foliation.
//!
//! Leaves are realized as level sets of the chart coordinate spanned by ξ;
//! the built-in geometries keep ξ along a coordinate axis and the screen
//! tangent to its level sets, so the leaf metric and Weyl 1-form restrict
//! symbolically.

use nalgebra::{DMatrix, DVector};

use crate::ambient::AmbientManifold;
use crate::error::{Error, Result};
use crate::expr::ScalarField;
use crate::jet::{inverse_jet, Jet, MatJet};
use crate::weyl::{CurvatureTensor, WeylPoint, WeylStructure};

/// λ at one point, with chart partials (so ξ·λ is exact).
pub fn lambda_jet(wp: &WeylPoint) -> Result<Jet> {
    let d = wp.chart_dim();
    let n = d - 1;
    // C(W_i, W_j) from the coordinate components of C.
    let mut cw = MatJet::zeros(n, n, d);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Jet::constant(0.0, d);
            for alpha in 0..d {
                acc = acc.add(
                    &wp.ip
                        .c_form
                        .get(alpha, j)
                        .mul(&wp.ip.fp.screen_chart[i].get(alpha)),
                );
            }
            cw.set(i, j, &acc);
        }
    }
    let ginv = inverse_jet(&wp.ip.fp.gram)
        .ok_or_else(|| Error::numerical("screen Gram matrix singular"))?;
    let mut tr = Jet::constant(0.0, d);
    for i in 0..n {
        for j in 0..n {
            tr = tr.add(&ginv.get(i, j).mul(&cw.get(j, i)));
        }
    }
    Ok(tr.scale(1.0 / n as f64))
}

/// Umbilicity residual at one point: max |C(e_α, P e_β) − λ g_{αβ}|
/// over all coordinate slots, normalized by the metric scale.
pub fn umbilicity_residual(wp: &WeylPoint, lambda: f64) -> Result<f64> {
    let d = wp.chart_dim();
    let mut worst = 0.0f64;
    let scale = wp.ip.fp.g_ind.v.amax().max(1.0);
    for alpha in 0..d {
        let e_alpha = crate::jet::VecJet::constant(
            DVector::from_fn(d, |i, _| f64::from(i == alpha)),
            d,
        );
        for beta in 0..d {
            let e_beta = crate::jet::VecJet::constant(
                DVector::from_fn(d, |i, _| f64::from(i == beta)),
                d,
            );
            let c = wp.ip.c_apply(&e_alpha, &e_beta)?.v;
            let g = wp.ip.fp.g_ind.v[(alpha, beta)];
            worst = worst.max((c - lambda * g).abs() / scale);
        }
    }
    Ok(worst)
}

/// ξ·λ at one point.
pub fn xi_dot_lambda(wp: &WeylPoint) -> Result<f64> {
    let lj = lambda_jet(wp)?;
    let xi = &wp.ip.fp.xi_chart.v;
    Ok(lj.d.iter().zip(xi.iter()).map(|(dl, x)| dl * x).sum())
}

/// Right side of the umbilical closed form for (D^g_Z S)(X, Y):
/// (Z·λ)g(X,Y) + θ(X)(D_Zη)(Y) + θ(Y)(D_Zη)(X) + η(X)(D_Zθ)(Y) + η(Y)(D_Zθ)(X).
pub fn umbilical_ds_rhs(
    wp: &WeylPoint,
    z_lambda: f64,
    z: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> f64 {
    let eta = wp.ip.fp.eta.clone();
    z_lambda * wp.g(x, y)
        + wp.theta_of(x) * wp.cov_deriv_covector(&eta, z, y)
        + wp.theta_of(y) * wp.cov_deriv_covector(&eta, z, x)
        + wp.eta_of(x) * wp.cov_deriv_covector(&wp.theta, z, y)
        + wp.eta_of(y) * wp.cov_deriv_covector(&wp.theta, z, x)
}

/// Einstein-Weyl consequence for the Ricci tensor under a totally umbilical
/// screen: Ric^D(X,Y) = Ric^g − 2dθ + (2−n)(D_Xθ)(Y) + (n−2)θ(X)θ(Y)
/// + (2−n)|θ♯|²g − gδθ − (ξ·λ)g.
pub fn facts_ricci_rhs(
    ws: &WeylStructure,
    wp: &WeylPoint,
    xi_lambda: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<f64> {
    let n = wp.screen_rank() as f64;
    let g_xy = wp.g(x, y);
    Ok(wp.ricci_g(&ws.scaled, x, y)? - 2.0 * wp.dtheta(x, y)
        + (2.0 - n) * wp.cov_deriv_covector(&wp.theta, x, y)
        + (n - 2.0) * wp.theta_of(x) * wp.theta_of(y)
        + (2.0 - n) * wp.norm2_theta.v * g_xy
        - g_xy * wp.delta_theta
        - xi_lambda * g_xy)
}

/// Einstein-Weyl consequence for the scalar curvature under a totally
/// umbilical screen, as the exact trace of `facts_ricci_rhs`:
/// Scal^D_g = scal^g + (2−n)(n−1)|θ♯|² + 2(1−n)δθ + (2−n)C(ξ,θ♯) − n(ξ·λ).
/// Under umbilicity C(ξ,·) vanishes, which removes the φ-pairing a loose
/// trace would introduce.
pub fn facts_scalar_rhs(ws: &WeylStructure, wp: &WeylPoint, xi_lambda: f64) -> Result<f64> {
    let n = wp.screen_rank() as f64;
    let c_xi_theta = wp
        .ip
        .c_apply(&wp.ip.fp.xi_chart.clone(), &wp.theta_sharp)?
        .v;
    Ok(wp.scal_g(&ws.scaled)?
        + (2.0 - n) * (n - 1.0) * wp.norm2_theta.v
        + 2.0 * (1.0 - n) * wp.delta_theta
        + (2.0 - n) * c_xi_theta
        - n * xi_lambda)
}

/// Intrinsic Riemannian Weyl pipeline on one leaf of the screen foliation.
pub struct LeafPipeline {
    /// Index of the chart coordinate transverse to the leaves (spanned by ξ).
    pub k0: usize,
    /// The leaf is the level set u^{k0} = level.
    pub level: f64,
    /// Leaf dimension n.
    pub n: usize,
    /// The leaf as a Riemannian manifold with exact metric expressions.
    pub leaf: AmbientManifold,
    /// θ_g restricted to the leaf (components over the leaf chart).
    pub theta: Vec<ScalarField>,
}

/// Everything the transfer checks need at one leaf point.
pub struct LeafPoint {
    /// Leaf coordinates.
    pub v: Vec<f64>,
    /// Full chart coordinates (level inserted at k0).
    pub u: Vec<f64>,
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    /// Levi-Civita Ricci and scalar of the leaf metric.
    pub ricci_lc: DMatrix<f64>,
    pub scal_lc: f64,
    /// Curvature tensor of the leaf Weyl connection D'.
    pub weyl_tensor: CurvatureTensor,
    /// θ', θ♯' and derived scalars.
    pub theta_vals: DVector<f64>,
    pub theta_sharp: DVector<f64>,
    pub norm2_theta: f64,
    /// div'(θ♯') on the leaf.
    pub div_theta: f64,
    /// Γ' of the Levi-Civita connection (for covariant derivatives).
    pub gamma_lc: Vec<DMatrix<f64>>,
}

impl LeafPipeline {
    /// Detects the transverse coordinate, validates that ξ is aligned with
    /// it and the screen is tangent to its level sets, and restricts the
    /// metric and θ_g symbolically.
    pub fn new(ws: &WeylStructure, level: f64, probe: &[Vec<f64>]) -> Result<LeafPipeline> {
        let d = ws.chart_dim();
        // ξ must be a (possibly scaled) coordinate field.
        let mut k0 = None;
        for u in probe {
            let xi = ws.base.xi.value(u)?;
            let mut nonzero = Vec::new();
            for (k, c) in xi.iter().enumerate() {
                if c.abs() > 1e-10 {
                    nonzero.push(k);
                }
            }
            if nonzero.len() != 1 {
                return Err(Error::geometry(
                    "leaf extraction requires xi aligned with a single chart coordinate",
                ));
            }
            match k0 {
                None => k0 = Some(nonzero[0]),
                Some(k) if k == nonzero[0] => {}
                _ => {
                    return Err(Error::geometry(
                        "xi changes coordinate direction across the grid",
                    ))
                }
            }
        }
        let k0 = k0.ok_or_else(|| Error::geometry("empty probe grid"))?;
        for u in probe {
            for w in &ws.base.screen {
                let wv = w.value(u)?;
                if wv[k0].abs() > 1e-10 {
                    return Err(Error::geometry(
                        "leaf extraction requires the screen tangent to the xi level sets",
                    ));
                }
            }
        }
        let n = d - 1;
        let pullback = ws.scaled.pullback_metric_asts();
        let mut leaf_metric = vec![vec![ScalarField::zero(n); n]; n];
        let keep: Vec<usize> = (0..d).filter(|k| *k != k0).collect();
        for (i, &a) in keep.iter().enumerate() {
            for (j, &b) in keep.iter().enumerate() {
                leaf_metric[i][j] = pullback[a][b].restrict_coord(k0, level);
            }
        }
        let leaf = AmbientManifold::new(n, 0, leaf_metric, None)?;
        let theta = keep
            .iter()
            .map(|&a| ws.theta_g[a].restrict_coord(k0, level))
            .collect();
        Ok(LeafPipeline {
            k0,
            level,
            n,
            leaf,
            theta,
        })
    }

    pub fn to_chart(&self, v: &[f64]) -> Vec<f64> {
        let mut u = Vec::with_capacity(v.len() + 1);
        u.extend_from_slice(&v[..self.k0]);
        u.push(self.level);
        u.extend_from_slice(&v[self.k0..]);
        u
    }

    /// Drops the k0 component of a chart vector.
    pub fn restrict_vector(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.n,
            x.iter()
                .enumerate()
                .filter(|(k, _)| *k != self.k0)
                .map(|(_, c)| *c),
        )
    }

    /// Extends a leaf vector by zero in the k0 slot.
    pub fn extend_vector(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n + 1);
        let mut j = 0;
        for k in 0..self.n + 1 {
            if k == self.k0 {
                continue;
            }
            out[k] = x[j];
            j += 1;
        }
        out
    }

    pub fn point(&self, v: &[f64]) -> Result<LeafPoint> {
        let n = self.n;
        let mj = self.leaf.metric_jet(v)?;
        // Positive definiteness of the leaf metric.
        let eig = mj.g.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|e| *e <= 0.0) {
            return Err(Error::geometry(format!(
                "leaf metric not positive definite at {v:?}"
            )));
        }
        let ricci_lc = crate::ambient::ricci_from_jet(&mj);
        let mut scal_lc = 0.0;
        for i in 0..n {
            for j in 0..n {
                scal_lc += mj.ginv[(i, j)] * ricci_lc[(i, j)];
            }
        }

        let mut theta_vals = DVector::zeros(n);
        let mut dtheta = DMatrix::zeros(n, n); // ∂_i θ_j
        for j in 0..n {
            let (val, dd) = self.theta[j].jet(v)?;
            theta_vals[j] = val;
            for i in 0..n {
                dtheta[(i, j)] = dd[i];
            }
        }
        let theta_sharp = mj.ginv.clone() * &theta_vals;
        let norm2_theta = theta_vals.dot(&theta_sharp);
        // ∂_k θ♯ = g⁻¹(∂_k θ − ∂_k g · θ♯).
        let mut dsharp = Vec::with_capacity(n);
        for k in 0..n {
            let rhs = dtheta.row(k).transpose() - &mj.dg[k] * &theta_sharp;
            dsharp.push(&mj.ginv * rhs);
        }
        let mut div_theta = 0.0;
        for i in 0..n {
            div_theta += dsharp[i][i];
            for e in 0..n {
                div_theta += mj.gamma[i][(i, e)] * theta_sharp[e];
            }
        }

        // Weyl connection coefficients Γ'^k_{ij} = Γ_LC + δθ-terms and their
        // exact partials, then the curvature tensor in the crate convention.
        let mut conn = vec![DMatrix::zeros(n, n); n];
        let mut dconn = vec![vec![DMatrix::zeros(n, n); n]; n]; // [k][l](i,j)
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut val = mj.gamma[l][(i, j)];
                    if l == j {
                        val += theta_vals[i];
                    }
                    if l == i {
                        val += theta_vals[j];
                    }
                    val -= mj.g[(i, j)] * theta_sharp[l];
                    conn[l][(i, j)] = val;
                    for k in 0..n {
                        let mut dv = mj.dgamma[k][l][(i, j)];
                        if l == j {
                            dv += dtheta[(k, i)];
                        }
                        if l == i {
                            dv += dtheta[(k, j)];
                        }
                        dv -= mj.dg[k][(i, j)] * theta_sharp[l] + mj.g[(i, j)] * dsharp[k][l];
                        dconn[k][l][(i, j)] = dv;
                    }
                }
            }
        }
        let mut r = vec![vec![DMatrix::zeros(n, n); n]; n];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for l in 0..n {
                        let mut std = dconn[a][l][(b, c)] - dconn[b][l][(a, c)];
                        for e in 0..n {
                            std += conn[l][(a, e)] * conn[e][(b, c)]
                                - conn[l][(b, e)] * conn[e][(a, c)];
                        }
                        r[a][b][(l, c)] = -std;
                    }
                }
            }
        }
        Ok(LeafPoint {
            v: v.to_vec(),
            u: self.to_chart(v),
            g: mj.g.clone(),
            ginv: mj.ginv.clone(),
            ricci_lc,
            scal_lc,
            weyl_tensor: CurvatureTensor { d: n, r },
            theta_vals,
            theta_sharp,
            norm2_theta,
            div_theta,
            gamma_lc: mj.gamma,
        })
    }
}

impl LeafPoint {
    /// Ric^{D'}(x, y) = tr(Z ↦ R^{D'}(x, Z)y).
    pub fn ricci_weyl(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let n = self.g.nrows();
        let mut acc = 0.0;
        for a in 0..n {
            let e = DVector::from_fn(n, |i, _| f64::from(i == a));
            acc += self.weyl_tensor.apply(x, &e, y)[a];
        }
        acc
    }

    pub fn scal_weyl(&self) -> f64 {
        let n = self.g.nrows();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let ei = DVector::from_fn(n, |k, _| f64::from(k == i));
                let ej = DVector::from_fn(n, |k, _| f64::from(k == j));
                acc += self.ginv[(i, j)] * self.ricci_weyl(&ei, &ej);
            }
        }
        acc
    }

    /// Leaf Einstein-Weyl fit: Sym Ric^{D'} = Λ' g', least squares over all
    /// components with the post-fit residual.
    pub fn einstein_weyl_fit(&self) -> (f64, f64, f64) {
        let n = self.g.nrows();
        let mut sym = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let ei = DVector::from_fn(n, |k, _| f64::from(k == i));
                let ej = DVector::from_fn(n, |k, _| f64::from(k == j));
                sym[(i, j)] = self.ricci_weyl(&ei, &ej) + self.ricci_weyl(&ej, &ei);
            }
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            for j in 0..n {
                num += sym[(i, j)] * self.g[(i, j)];
                den += self.g[(i, j)] * self.g[(i, j)];
            }
        }
        let lambda = num / den;
        let resid = (&sym - &self.g * lambda).amax();
        let scale = sym.amax().max(self.g.amax() * lambda.abs()).max(1.0);
        (lambda, resid, scale)
    }

    /// (∇'_x θ')(y) on the leaf.
    pub fn cov_deriv_theta(&self, dtheta_exact: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let n = self.g.nrows();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut t = dtheta_exact[(i, j)];
                for l in 0..n {
                    t -= self.gamma_lc[l][(i, j)] * self.theta_vals[l];
                }
                acc += x[i] * t * y[j];
            }
        }
        acc
    }

    /// Scal^{g'} + c_div · div'θ' + c_norm · |θ♯'|², the right side of the
    /// leaf scalar relation with explicit coefficients.
    pub fn scalar_relation_rhs(&self, c_div: f64, c_norm: f64) -> f64 {
        self.scal_lc + c_div * self.div_theta + c_norm * self.norm2_theta
    }
}
