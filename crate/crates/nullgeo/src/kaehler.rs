//! Lightlike real hypersurfaces of (indefinite) Kaehler manifolds: the
//! screen built from the complex structure, the almost contact pack
//! (F, θ₀, U), the covariant-derivative identities it satisfies, and the
//! closedness criterion dθ₀ = ½ φ ∧ θ₀.
//!
//! The screen containing J̄(TM⊥) ⊕ J̄(tr TM) is found by a pointwise
//! fixed-point iteration at a reference point and then promoted to constant
//! direction fields plus the exact field V = −J̄ξ; the construction
//! requires an affine embedding chart (constant Jacobian), which every
//! built-in Kaehler geometry satisfies, and is re-validated pointwise.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::ScalarField;
use crate::hypersurface::{AstVecField, HyperGeometry};
use crate::jet::{Jet, MatJet, VecJet};
use crate::weyl::{WeylPoint, WeylStructure};

/// A lightlike hypersurface of a Kaehler ambient with the J̄-built screen.
pub struct KaehlerStructure {
    /// Weyl machinery over the J̄-built screen, with θ₀(X) = g₀(X, V).
    pub ws: WeylStructure,
    /// θ₀ component expressions (also stored in `ws`).
    pub theta0: Vec<ScalarField>,
    /// Rank of the almost complex distribution D₀ (2m − 4).
    pub d0_rank: usize,
    /// Iterations the frame construction needed at the reference point.
    pub iterations: usize,
}

/// Chart components of an ambient-component field, valid when the embedding
/// Jacobian is constant.
fn ambient_to_chart_const_jac(
    geo: &HyperGeometry,
    amb_asts: &[ScalarField],
    probe: &[f64],
) -> Result<Vec<ScalarField>> {
    let d = geo.chart_dim();
    let m = geo.ambient.dim;
    for comp in &geo.embedding.comps {
        for p in comp.partials() {
            for pp in p.partials() {
                if !pp.is_zero_ast() {
                    return Err(Error::geometry(
                        "the J-built screen requires an affine embedding chart",
                    ));
                }
            }
        }
    }
    let mut jac = DMatrix::zeros(m, d);
    for a in 0..m {
        for al in 0..d {
            jac[(a, al)] = geo.embedding.comps[a].partials()[al].eval(probe)?;
        }
    }
    let pinv = (jac.transpose() * &jac)
        .try_inverse()
        .ok_or_else(|| Error::geometry("embedding jacobian is rank deficient"))?
        * jac.transpose();
    let mut out = Vec::with_capacity(d);
    for gamma in 0..d {
        let mut acc = ScalarField::zero(d);
        for a in 0..m {
            acc = acc.add(&amb_asts[a].scale(pinv[(gamma, a)]));
        }
        out.push(acc);
    }
    Ok(out)
}

fn transversal_numeric(
    g: &DMatrix<f64>,
    xi_amb: &DVector<f64>,
    screen_amb: &[DVector<f64>],
) -> Result<DVector<f64>> {
    let m = g.nrows();
    let mut a = DMatrix::zeros(m, m);
    a.set_row(0, &(g * xi_amb).transpose());
    for (i, w) in screen_amb.iter().enumerate() {
        a.set_row(1 + i, &(g * w).transpose());
    }
    a.set_row(m - 1, &xi_amb.transpose());
    let mut rhs = DVector::zeros(m);
    rhs[0] = 1.0;
    let n0 = a
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| Error::geometry("transversal system singular during screen iteration"))?;
    let q = (n0.transpose() * g * &n0)[(0, 0)];
    Ok(&n0 - xi_amb * (q / 2.0))
}

impl KaehlerStructure {
    /// Fixed-point construction of the J̄-adapted screen.
    ///
    /// Starting from the provisional screen of `geo`, repeat: solve the
    /// transversal N, recompute U = −J̄N, re-form the screen as
    /// {V, U, D₀-completion} with D₀ the ḡ-orthogonal complement of
    /// {ξ, N, V, U}, until N stabilizes.
    pub fn build(
        geo: &HyperGeometry,
        f_ambient: &ScalarField,
        u0: &[f64],
        grid: &[Vec<f64>],
    ) -> Result<KaehlerStructure> {
        let m = geo.ambient.dim;
        let d = geo.chart_dim();
        if geo.ambient.complex_structure.is_none() {
            return Err(Error::geometry(
                "Kaehler construction requires an ambient complex structure",
            ));
        }
        geo.ambient.validate_at(&geo.embedding.eval(u0)?, 1e-8)?;

        let x0 = geo.embedding.eval(u0)?;
        let g0 = geo.ambient.metric_at(&x0)?;
        let jbar = geo.ambient.complex_at(&x0)?.unwrap();
        let mut jac = DMatrix::zeros(m, d);
        for a in 0..m {
            for al in 0..d {
                jac[(a, al)] = geo.embedding.comps[a].partials()[al].eval(u0)?;
            }
        }
        let xi_amb = &jac * geo.xi.value(u0)?;
        let v_amb = -(&jbar * &xi_amb);

        let mut screen_amb: Vec<DVector<f64>> = geo
            .screen
            .iter()
            .map(|w| Ok(&jac * w.value(u0)?))
            .collect::<Result<Vec<_>>>()?;
        let mut n_prev: Option<DVector<f64>> = None;
        let mut iterations = 0;
        let d0_rank = m - 4;
        for it in 0..50 {
            iterations = it + 1;
            let n_amb = transversal_numeric(&g0, &xi_amb, &screen_amb)?;
            let u_amb = -(&jbar * &n_amb);
            // D0: g-orthogonal complement of {xi, N, V, U}, i.e. the kernel
            // of the row system, via the eigenvectors of Aᵀ A.
            let mut rows = DMatrix::zeros(4, m);
            rows.set_row(0, &(&g0 * &xi_amb).transpose());
            rows.set_row(1, &(&g0 * &n_amb).transpose());
            rows.set_row(2, &(&g0 * &v_amb).transpose());
            rows.set_row(3, &(&g0 * &u_amb).transpose());
            let gram_rows = rows.transpose() * &rows;
            let eig = gram_rows.symmetric_eigen();
            let max_ev = eig.eigenvalues.amax().max(1.0);
            let mut d0 = Vec::new();
            for k in 0..m {
                if eig.eigenvalues[k].abs() <= 1e-18 * max_ev {
                    d0.push(eig.eigenvectors.column(k).into_owned());
                }
            }
            if d0.len() != d0_rank {
                return Err(Error::geometry(format!(
                    "complex distribution completion has rank {} (expected {d0_rank})",
                    d0.len()
                )));
            }
            let mut next = vec![v_amb.clone(), u_amb];
            next.extend(d0);
            screen_amb = next;
            if let Some(prev) = &n_prev {
                if (prev - &n_amb).norm() <= 1e-10 {
                    break;
                }
            }
            n_prev = Some(n_amb);
            if it == 49 {
                return Err(Error::geometry(format!(
                    "screen iteration did not converge in 50 steps (last residual {})",
                    (n_prev.as_ref().unwrap() - transversal_numeric(&g0, &xi_amb, &screen_amb)?)
                        .norm()
                )));
            }
        }

        // Promote: V as the exact field −J̄(Jξ); U and D₀ as constant
        // direction fields (only the span matters for the machinery).
        let xi_amb_ast = &geo.xi_amb_ast;
        let mut v_field_amb = Vec::with_capacity(m);
        for a in 0..m {
            let mut acc = ScalarField::zero(d);
            for b in 0..m {
                let jf = geo.ambient.complex_structure.as_ref().unwrap()[a][b]
                    .compose(&geo.embedding.comps);
                acc = acc.add(&jf.mul(&xi_amb_ast[b]));
            }
            v_field_amb.push(acc.scale(-1.0));
        }
        let v_field = ambient_to_chart_const_jac(geo, &v_field_amb, u0)?;
        let pinv = {
            let jtj = (jac.transpose() * &jac).try_inverse().unwrap();
            jtj * jac.transpose()
        };
        let mut screen_fields = vec![AstVecField::new(v_field)];
        for w_amb in screen_amb.iter().skip(1) {
            let w_chart = &pinv * w_amb;
            screen_fields.push(AstVecField::constant(w_chart.as_slice(), d));
        }
        let built = HyperGeometry::new(
            geo.ambient.clone(),
            geo.embedding.clone(),
            geo.xi.clone(),
            screen_fields,
        )?;

        // θ₀(e_α) = ḡ(J e_α, V) assembled symbolically.
        let mut theta0 = Vec::with_capacity(d);
        for alpha in 0..d {
            let mut acc = ScalarField::zero(d);
            for a in 0..m {
                for b in 0..m {
                    let gab = geo.ambient.metric[a][b].compose(&geo.embedding.comps);
                    let term = geo.embedding.comps[a].partials()[alpha]
                        .mul(&gab)
                        .mul(&v_field_amb[b]);
                    acc = acc.add(&term);
                }
            }
            theta0.push(acc);
        }

        let ws = WeylStructure::new(built, f_ambient.clone(), theta0.clone())?;

        // Pointwise validation across the grid: U(u) = −J̄N(u) must lie in
        // the screen span, and the ambient must stay Kaehler.
        for u in grid {
            geo.ambient.validate_at(&geo.embedding.eval(u)?, 1e-8)?;
            let kp = KaehlerPoint::at(&ws, u)?;
            let resid = kp.u_span_residual()?;
            if resid > 1e-8 {
                return Err(Error::geometry(format!(
                    "J-built screen is not constant along the chart: U leaves the screen span \
                     at {u:?} (residual {resid})"
                )));
            }
        }

        Ok(KaehlerStructure {
            ws,
            theta0,
            d0_rank,
            iterations,
        })
    }

    pub fn point(&self, u: &[f64]) -> Result<KaehlerPoint> {
        KaehlerPoint::at(&self.ws, u)
    }
}

/// Almost contact data at one point, with exact jets.
pub struct KaehlerPoint {
    pub wp: WeylPoint,
    /// J̄ along the embedding with chart jets.
    pub jbar: MatJet,
    /// U = −J̄N and V = −J̄ξ in chart components.
    pub u_chart: VecJet,
    pub v_chart: VecJet,
    /// θ₀ component jets.
    pub theta0: VecJet,
    /// F = J̄∘σ as a chart (1,1)-tensor.
    pub f_mat: MatJet,
}

impl KaehlerPoint {
    pub fn at(ws: &WeylStructure, u: &[f64]) -> Result<KaehlerPoint> {
        let wp = ws.point(u)?;
        let d = wp.chart_dim();
        let m = wp.ip.fp.amb_dim;
        let jfields = ws
            .base
            .ambient
            .complex_structure
            .as_ref()
            .ok_or_else(|| Error::geometry("missing complex structure"))?;
        // J̄(Φ(u)) with chart jets via the chain rule.
        let mut jbar = MatJet::zeros(m, m, d);
        for a in 0..m {
            for b in 0..m {
                let val = jfields[a][b].eval(&wp.ip.fp.x)?;
                let mut dd = vec![0.0; d];
                let parts = jfields[a][b].partials();
                for (k, dk) in dd.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for dd2 in 0..m {
                        s += parts[dd2].eval(&wp.ip.fp.x)? * wp.ip.fp.jac.v[(dd2, k)];
                    }
                    *dk = s;
                }
                jbar.set(a, b, &Jet::new(val, dd));
            }
        }
        let u_amb = jbar.matvec(&wp.ip.fp.n_amb).neg();
        let v_amb = jbar.matvec(&wp.ip.fp.xi_amb).neg();
        let (u_chart, u_trans) = wp.ip.fp.split(&u_amb)?;
        if u_trans.v.abs() > 1e-8 {
            return Err(Error::geometry(format!(
                "U = -JN is not tangent at {u:?} (transversal component {})",
                u_trans.v
            )));
        }
        let (v_chart, v_trans) = wp.ip.fp.split(&v_amb)?;
        if v_trans.v.abs() > 1e-8 {
            return Err(Error::geometry(format!(
                "V = -J xi is not tangent at {u:?} (transversal component {})",
                v_trans.v
            )));
        }
        let mut theta0 = VecJet::zeros(d, d);
        for alpha in 0..d {
            let (v, dd) = ws.theta0[alpha].jet(u)?;
            theta0.set(alpha, &Jet::new(v, dd));
        }

        // F e_β = J̄(σ e_β) with σX = X − θ₀(X)U, expressed in the chart.
        let mut f_mat = MatJet::zeros(d, d, d);
        for beta in 0..d {
            let e_beta = VecJet::constant(DVector::from_fn(d, |i, _| f64::from(i == beta)), d);
            let sigma = e_beta.sub(&u_chart.scale_jet(&theta0.get(beta)));
            let sigma_amb = wp.ip.fp.push(&sigma);
            let j_sigma = jbar.matvec(&sigma_amb);
            let (chart, _) = wp.ip.fp.split(&j_sigma)?;
            f_mat.set_column(beta, &chart);
        }
        Ok(KaehlerPoint {
            wp,
            jbar,
            u_chart,
            v_chart,
            theta0,
            f_mat,
        })
    }

    /// Least-squares residual of expanding U over the screen basis.
    pub fn u_span_residual(&self) -> Result<f64> {
        let fp = &self.wp.ip.fp;
        let n = fp.screen_chart.len();
        let mut basis = DMatrix::zeros(fp.nvars, n);
        for (i, w) in fp.screen_chart.iter().enumerate() {
            basis.set_column(i, &w.v);
        }
        let coeffs = basis
            .clone()
            .svd(true, true)
            .solve(&self.u_chart.v, 1e-12)
            .map_err(Error::numerical)?;
        Ok((basis * coeffs - &self.u_chart.v).norm() / self.u_chart.v.norm().max(1e-12))
    }

    pub fn theta0_of(&self, x: &DVector<f64>) -> f64 {
        self.theta0.v.dot(x)
    }

    pub fn f_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.f_mat.v * x
    }

    /// (D^{g₀}_x F)(y) tensorially from the F-component jets.
    pub fn cov_deriv_f(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let d = self.wp.chart_dim();
        let mut out = DVector::zeros(d);
        for gamma in 0..d {
            let mut acc = 0.0;
            for alpha in 0..d {
                if x[alpha] == 0.0 {
                    continue;
                }
                for beta in 0..d {
                    let mut t = self.f_mat.d[alpha][(gamma, beta)];
                    for delta in 0..d {
                        t += self.wp.ip.conn[gamma].v[(alpha, delta)]
                            * self.f_mat.v[(delta, beta)]
                            - self.wp.ip.conn[delta].v[(alpha, beta)]
                                * self.f_mat.v[(gamma, delta)];
                    }
                    acc += x[alpha] * t * y[beta];
                }
            }
            out[gamma] = acc;
        }
        out
    }

    /// dθ₀(x, y) from the exact component jets.
    pub fn dtheta0(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let d = self.theta0.len();
        let mut acc = 0.0;
        for alpha in 0..d {
            for beta in 0..d {
                acc += 0.5
                    * (self.theta0.d[alpha][beta] - self.theta0.d[beta][alpha])
                    * x[alpha]
                    * y[beta];
            }
        }
        acc
    }

    /// ½ [φ ∧ θ₀](x, y).
    pub fn half_phi_wedge_theta(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        0.5 * (self.wp.phi_of(x) * self.theta0_of(y) - self.wp.phi_of(y) * self.theta0_of(x))
    }
}

/// Residuals of the four covariant-derivative identities of the almost
/// contact pack at one point, for given probe vectors.
pub struct TechnResiduals {
    pub i: f64,
    pub ii: f64,
    pub iii: f64,
    pub iv: f64,
    pub scale: f64,
}

pub fn techn_residuals(
    kp: &KaehlerPoint,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<TechnResiduals> {
    let wp = &kp.wp;
    let d = wp.chart_dim();
    let b = &wp.ip.b_form.v;
    let bx = |a: &DVector<f64>, c: &DVector<f64>| (a.transpose() * b * c)[(0, 0)];

    // (i): (D_X θ₀)(Y) = θ₀(Y) φ(X) − B(X, FY).
    let lhs_i = wp.cov_deriv_covector(&kp.theta0, x, y);
    let fy = kp.f_apply(y);
    let rhs_i = kp.theta0_of(y) * wp.phi_of(x) - bx(x, &fy);
    let scale_i = lhs_i.abs().max(rhs_i.abs());

    // (ii): (D_X F)(Y) = θ₀(Y) A_N X − B(X,Y) U.
    let lhs_ii = kp.cov_deriv_f(x, y);
    let an_x = wp.ip.a_n_apply(x)?;
    let rhs_ii = an_x * kp.theta0_of(y) - &kp.u_chart.v * bx(x, y);
    let diff_ii = (&lhs_ii - &rhs_ii).amax();
    let scale_ii = lhs_ii.amax().max(rhs_ii.amax());

    // (iii): φ(X) = −θ₀(D_X U).
    let du = wp.ip.nabla_value(x, &kp.u_chart);
    let lhs_iii = wp.phi_of(x);
    let rhs_iii = -kp.theta0.v.dot(&du);
    let scale_iii = lhs_iii.abs().max(rhs_iii.abs());

    // (iv): D_X θ₀♯ = F(A*_ξ X) + φ(X) θ₀♯.
    let theta0_sharp = wp.kit.sharp(&kp.theta0.clone())?;
    let lhs_iv = wp.ip.nabla_value(x, &theta0_sharp);
    let xj = VecJet::constant(x.clone(), d);
    let astar_x = wp.ip.a_star_apply(&xj)?;
    let rhs_iv = kp.f_apply(&astar_x.v) + &theta0_sharp.v * wp.phi_of(x);
    let diff_iv = (&lhs_iv - &rhs_iv).amax();
    let scale_iv = lhs_iv.amax().max(rhs_iv.amax());

    Ok(TechnResiduals {
        i: (lhs_i - rhs_i).abs() / (1.0 + scale_i),
        ii: diff_ii / (1.0 + scale_ii),
        iii: (lhs_iii - rhs_iii).abs() / (1.0 + scale_iii),
        iv: diff_iv / (1.0 + scale_iv),
        scale: scale_i.max(scale_ii).max(scale_iii).max(scale_iv),
    })
}
