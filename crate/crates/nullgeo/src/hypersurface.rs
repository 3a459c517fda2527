//! The lightlike hypersurface package: induced degenerate metric, radical
//! generator, screen frame, the unique transversal N with ḡ(N,ξ)=1 and
//! ḡ(N,N)=ḡ(N,W)=0, and the Gauss–Weingarten objects (B, C, τ, φ, shape
//! operators, induced connection coefficients).
//!
//! One `HyperGeometry` bundles an ambient metric with an embedding, a
//! radical field ξ and an explicit screen. The Weyl layer instantiates the
//! same machinery a second time over the conformally rescaled ambient, so
//! everything here is written against an arbitrary `AmbientManifold`.

use nalgebra::{DMatrix, DVector};

use crate::ambient::AmbientManifold;
use crate::error::{Error, Result};
use crate::expr::ScalarField;
use crate::jet::{solve_jet, Jet, MatJet, VecJet};

/// Scale-free threshold for radical detection: the smallest singular value
/// must fall below RANK_TOL times the largest, and the second smallest must
/// not.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Clone)]
pub struct Embedding {
    /// Ambient components as functions of the chart coordinates.
    pub comps: Vec<ScalarField>,
}

impl Embedding {
    pub fn new(comps: Vec<ScalarField>) -> Embedding {
        Embedding { comps }
    }

    pub fn ambient_dim(&self) -> usize {
        self.comps.len()
    }

    pub fn chart_dim(&self) -> usize {
        self.comps[0].dim()
    }

    pub fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.comps
            .iter()
            .map(|c| c.eval(u).map_err(Error::from))
            .collect()
    }
}

/// A tangent vector field given by chart-component expressions.
#[derive(Clone)]
pub struct AstVecField {
    pub comps: Vec<ScalarField>,
}

impl AstVecField {
    pub fn new(comps: Vec<ScalarField>) -> AstVecField {
        AstVecField { comps }
    }

    pub fn constant(v: &[f64], dim: usize) -> AstVecField {
        AstVecField {
            comps: v.iter().map(|c| ScalarField::constant(*c, dim)).collect(),
        }
    }

    pub fn coordinate(k: usize, dim: usize) -> AstVecField {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        AstVecField::constant(&v, dim)
    }

    pub fn len(&self) -> usize {
        self.comps.len()
    }

    pub fn jet(&self, u: &[f64]) -> Result<VecJet> {
        let nvars = self.comps[0].dim();
        let mut out = VecJet::zeros(self.comps.len(), nvars);
        for (i, c) in self.comps.iter().enumerate() {
            let (v, d) = c.jet(u)?;
            out.set(i, &Jet::new(v, d));
        }
        Ok(out)
    }

    pub fn value(&self, u: &[f64]) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(self.comps.len());
        for (i, c) in self.comps.iter().enumerate() {
            v[i] = c.eval(u)?;
        }
        Ok(v)
    }

    /// Exact Lie bracket [self, other] assembled symbolically.
    pub fn lie_bracket(&self, other: &AstVecField) -> AstVecField {
        let dim = self.comps[0].dim();
        let mut comps = Vec::with_capacity(self.comps.len());
        for gamma in 0..self.comps.len() {
            let mut acc = ScalarField::zero(dim);
            for alpha in 0..dim {
                let t1 = self.comps[alpha].mul(&other.comps[gamma].exact_partial(alpha));
                let t2 = other.comps[alpha].mul(&self.comps[gamma].exact_partial(alpha));
                acc = acc.add(&t1.sub(&t2));
            }
            comps.push(acc);
        }
        AstVecField { comps }
    }
}

/// Kernel direction of a degenerate Gram matrix: unit euclidean norm, first
/// component of magnitude above threshold made positive.
pub fn radical_generator(g: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = g.nrows();
    let eig = g.clone().symmetric_eigen();
    let mut mags: Vec<(usize, f64)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, ev)| (i, ev.abs()))
        .collect();
    mags.sort_by(|a, b| a.1.total_cmp(&b.1));
    let sigma_max = mags[n - 1].1;
    if mags[0].1 > RANK_TOL * sigma_max {
        return Err(Error::geometry(format!(
            "induced metric has no radical direction: singular values {:?}",
            mags.iter().map(|(_, s)| *s).collect::<Vec<_>>()
        )));
    }
    if n > 1 && mags[1].1 <= RANK_TOL * sigma_max {
        return Err(Error::geometry(format!(
            "induced metric kernel has dimension > 1: singular values {:?}",
            mags.iter().map(|(_, s)| *s).collect::<Vec<_>>()
        )));
    }
    let mut xi = eig.eigenvectors.column(mags[0].0).into_owned();
    xi /= xi.norm();
    for i in 0..n {
        if xi[i].abs() > 1e-12 {
            if xi[i] < 0.0 {
                xi = -xi;
            }
            break;
        }
    }
    Ok(xi)
}

/// Pointwise frame data with exact first-order jets in the chart variables.
pub struct FramePoint {
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    /// Chart dimension (number of jet variables).
    pub nvars: usize,
    pub amb_dim: usize,
    /// Jacobian ∂Φ^A/∂u^α with u-jets.
    pub jac: MatJet,
    /// Ambient metric along the embedding with u-jets.
    pub g_amb: MatJet,
    /// Ambient Christoffels Γ̄^A_{BC} at Φ(u), plus their u-partials.
    pub gamma_amb: Vec<DMatrix<f64>>,
    pub dgamma_amb_u: Vec<Vec<DMatrix<f64>>>,
    /// Induced (degenerate) metric, pullback of the ambient metric.
    pub g_ind: MatJet,
    pub xi_chart: VecJet,
    pub xi_amb: VecJet,
    pub screen_chart: Vec<VecJet>,
    pub screen_amb: Vec<VecJet>,
    /// Screen Gram matrix g(W_i, W_j).
    pub gram: MatJet,
    /// The transversal N (ambient components).
    pub n_amb: VecJet,
    /// η(e_α) = ḡ(N, ∂_α Φ) as a chart covector.
    pub eta: VecJet,
}

impl FramePoint {
    /// ḡ(v, w) at this point (ambient components).
    pub fn pair(&self, v: &VecJet, w: &VecJet) -> Jet {
        self.g_amb.bilinear(v, w)
    }

    /// ḡ-contraction Γ̄(v, w)^A = Γ̄^A_{BC} v^B w^C with u-jets.
    pub fn gamma_contract(&self, v: &VecJet, w: &VecJet) -> VecJet {
        let m = self.amb_dim;
        let mut out = VecJet::zeros(m, self.nvars);
        for a in 0..m {
            let mut val = 0.0;
            for b in 0..m {
                for c in 0..m {
                    val += self.gamma_amb[a][(b, c)] * v.v[b] * w.v[c];
                }
            }
            let mut d = vec![0.0; self.nvars];
            for (k, dk) in d.iter_mut().enumerate() {
                let mut s = 0.0;
                for b in 0..m {
                    for c in 0..m {
                        s += self.dgamma_amb_u[k][a][(b, c)] * v.v[b] * w.v[c]
                            + self.gamma_amb[a][(b, c)]
                                * (v.d[k][b] * w.v[c] + v.v[b] * w.d[k][c]);
                    }
                }
                *dk = s;
            }
            out.set(a, &Jet::new(val, d));
        }
        out
    }

    /// Expands an ambient tangent vector in the frame {ξ, W_i} and returns
    /// chart components: T = η̂(T)ξ + Σ cᵢWᵢ with Gram·c = [ḡ(Wᵢ, T)].
    pub fn decompose_tangent(&self, t_amb: &VecJet) -> Result<VecJet> {
        let n = self.screen_amb.len();
        let a = self.pair(&self.n_amb, t_amb);
        let mut rhs = VecJet::zeros(n, self.nvars);
        for i in 0..n {
            rhs.set(i, &self.pair(&self.screen_amb[i], t_amb));
        }
        let c = solve_jet(&self.gram, &rhs)
            .ok_or_else(|| Error::numerical("degenerate screen Gram matrix".to_string()))?;
        let mut out = self.xi_chart.scale_jet(&a);
        for i in 0..n {
            out = out.add(&self.screen_chart[i].scale_jet(&c.get(i)));
        }
        Ok(out)
    }

    /// Transversal coefficient of an arbitrary ambient vector: ḡ(T, ξ).
    pub fn transversal_coeff(&self, t_amb: &VecJet) -> Jet {
        self.pair(t_amb, &self.xi_amb)
    }

    /// Splits an ambient vector along T M̄|_M = TM ⊕ tr(TM): returns chart
    /// components of the tangent part and the N-coefficient.
    pub fn split(&self, t_amb: &VecJet) -> Result<(VecJet, Jet)> {
        let b = self.transversal_coeff(t_amb);
        let tangent = t_amb.sub(&self.n_amb.scale_jet(&b));
        Ok((self.decompose_tangent(&tangent)?, b))
    }

    /// η applied to a chart vector.
    pub fn eta_apply(&self, v: &VecJet) -> Jet {
        self.eta.dot(v)
    }

    /// Push a chart vector to ambient components.
    pub fn push(&self, v_chart: &VecJet) -> VecJet {
        self.jac.matvec(v_chart)
    }
}

#[derive(Clone)]
pub struct HyperGeometry {
    pub ambient: AmbientManifold,
    pub embedding: Embedding,
    pub xi: AstVecField,
    pub screen: Vec<AstVecField>,
    /// Ambient components of ξ and the screen fields, assembled symbolically
    /// so covariant derivatives keep exact jets.
    pub xi_amb_ast: Vec<ScalarField>,
    pub screen_amb_ast: Vec<Vec<ScalarField>>,
}

impl HyperGeometry {
    pub fn new(
        ambient: AmbientManifold,
        embedding: Embedding,
        xi: AstVecField,
        screen: Vec<AstVecField>,
    ) -> Result<HyperGeometry> {
        let m = ambient.dim;
        let d = embedding.chart_dim();
        if embedding.ambient_dim() != m {
            return Err(Error::schema(format!(
                "embedding has {} components, ambient dimension is {m}",
                embedding.ambient_dim()
            )));
        }
        if d + 1 != m {
            return Err(Error::schema(format!(
                "chart dimension {d} must be ambient dimension {m} minus one"
            )));
        }
        if xi.len() != d {
            return Err(Error::schema(format!(
                "xi has {} components, chart dimension is {d}",
                xi.len()
            )));
        }
        if screen.len() != d - 1 {
            return Err(Error::schema(format!(
                "screen must have {} fields (chart dimension minus one), got {}",
                d - 1,
                screen.len()
            )));
        }
        for w in &screen {
            if w.len() != d {
                return Err(Error::schema(
                    "screen field component count must equal chart dimension".to_string(),
                ));
            }
        }
        let xi_amb_ast = push_field_ast(&embedding, &xi);
        let screen_amb_ast = screen.iter().map(|w| push_field_ast(&embedding, w)).collect();
        Ok(HyperGeometry {
            ambient,
            embedding,
            xi,
            screen,
            xi_amb_ast,
            screen_amb_ast,
        })
    }

    pub fn chart_dim(&self) -> usize {
        self.embedding.chart_dim()
    }

    pub fn screen_rank(&self) -> usize {
        self.screen.len()
    }

    /// Same hypersurface data over a conformally rescaled ambient metric.
    pub fn conformally_rescaled(&self, factor_ambient: &ScalarField) -> Result<HyperGeometry> {
        HyperGeometry::new(
            self.ambient.conformally_rescaled(factor_ambient),
            self.embedding.clone(),
            self.xi.clone(),
            self.screen.clone(),
        )
    }

    /// Induced metric at u (pullback J^T ḡ J), value only.
    pub fn induced_metric(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.chart_dim();
        let m = self.ambient.dim;
        let x = self.embedding.eval(u)?;
        let g = self.ambient.metric_at(&x)?;
        let mut jac = DMatrix::zeros(m, d);
        for a in 0..m {
            let parts = self.embedding.comps[a].partials();
            for al in 0..d {
                jac[(a, al)] = parts[al].eval(u)?;
            }
        }
        Ok(jac.transpose() * g * jac)
    }

    /// Checks the rank-n lightlike condition and returns the singular values
    /// (descending) alongside the metric.
    pub fn lightlike_check(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.induced_metric(u)?;
        let eig = g.clone().symmetric_eigen();
        let mut sv: Vec<f64> = eig.eigenvalues.iter().map(|e| e.abs()).collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let n = sv.len();
        let smallest = sv[n - 1];
        let second = sv[n - 2];
        if smallest > RANK_TOL * sv[0] {
            return Err(Error::geometry(format!(
                "hypersurface is not lightlike at {u:?}: induced metric has rank {n} != {} \
                 (singular values {sv:?})",
                n - 1
            )));
        }
        if second <= RANK_TOL * sv[0] {
            return Err(Error::geometry(format!(
                "induced metric rank deficit exceeds one at {u:?} (singular values {sv:?})"
            )));
        }
        Ok(g)
    }

    /// Full frame assembly at u.
    pub fn frame(&self, u: &[f64]) -> Result<FramePoint> {
        let d = self.chart_dim();
        let m = self.ambient.dim;
        let x = self.embedding.eval(u)?;
        let mj = self.ambient.metric_jet(&x)?;

        let mut jac = MatJet::zeros(m, d, d);
        for a in 0..m {
            let parts = self.embedding.comps[a].partials();
            for al in 0..d {
                let (v, dd) = parts[al].jet(u)?;
                jac.set(a, al, &Jet::new(v, dd));
            }
        }

        // Chain rule: u-derivatives of ambient-metric data along Φ.
        let mut g_amb = MatJet::zeros(m, m, d);
        g_amb.v = mj.g.clone();
        for k in 0..d {
            let mut dm = DMatrix::zeros(m, m);
            for dd in 0..m {
                dm += &mj.dg[dd] * jac.v[(dd, k)];
            }
            g_amb.d[k] = dm;
        }
        let mut dgamma_amb_u = vec![vec![DMatrix::zeros(m, m); m]; d];
        for (k, slot) in dgamma_amb_u.iter_mut().enumerate() {
            for a in 0..m {
                let mut acc = DMatrix::zeros(m, m);
                for dd in 0..m {
                    acc += &mj.dgamma[dd][a] * jac.v[(dd, k)];
                }
                slot[a] = acc;
            }
        }

        let xi_chart = self.xi.jet(u)?;
        let screen_chart = self
            .screen
            .iter()
            .map(|w| w.jet(u))
            .collect::<Result<Vec<_>>>()?;
        let xi_amb = jac.matvec(&xi_chart);
        let screen_amb: Vec<VecJet> = screen_chart.iter().map(|w| jac.matvec(w)).collect();

        let g_ind = jac.transpose().matmul(&g_amb).matmul(&jac);

        // Radical and rank diagnostics.
        let eig = g_ind.v.clone().symmetric_eigen();
        let mut sv: Vec<f64> = eig.eigenvalues.iter().map(|e| e.abs()).collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        if sv[d - 1] > RANK_TOL * sv[0] || sv[d - 2] <= RANK_TOL * sv[0] {
            return Err(Error::geometry(format!(
                "hypersurface is not lightlike at {u:?} (singular values {sv:?})"
            )));
        }
        let kernel_res = (&g_ind.v * &xi_chart.v).norm();
        if kernel_res > 1e-7 * sv[0] * xi_chart.v.norm().max(1.0) {
            return Err(Error::geometry(format!(
                "xi does not span the radical at {u:?}: |g xi| = {kernel_res}"
            )));
        }

        let mut gram = MatJet::zeros(d - 1, d - 1, d);
        for i in 0..d - 1 {
            for j in 0..d - 1 {
                gram.set(i, j, &g_ind.bilinear(&screen_chart[i], &screen_chart[j]));
            }
        }
        if gram.v.clone().full_piv_lu().determinant().abs()
            < 1e-12 * gram.v.amax().max(1.0).powi((d - 1) as i32)
        {
            return Err(Error::geometry(format!(
                "screen Gram matrix is singular at {u:?}"
            )));
        }

        // Transversal: n+1 defining rows plus a euclidean gauge row pin down
        // N0; the quadratic condition ḡ(N,N)=0 then fixes N = N0 − ½ḡ(N0,N0)ξ.
        let mut a_mat = MatJet::zeros(m, m, d);
        let row0 = g_amb.matvec(&xi_amb);
        for c in 0..m {
            a_mat.set(0, c, &row0.get(c));
        }
        for (i, w_amb) in screen_amb.iter().enumerate() {
            let row = g_amb.matvec(w_amb);
            for c in 0..m {
                a_mat.set(1 + i, c, &row.get(c));
            }
        }
        for c in 0..m {
            a_mat.set(m - 1, c, &xi_amb.get(c));
        }
        let mut rhs = VecJet::zeros(m, d);
        rhs.v[0] = 1.0;
        let n0 = solve_jet(&a_mat, &rhs).ok_or_else(|| {
            Error::geometry(format!(
                "transversal system singular at {u:?} (degenerate screen)"
            ))
        })?;
        let q = g_amb.bilinear(&n0, &n0);
        let n_amb = n0.add(&xi_amb.scale_jet(&q.scale(-0.5)));

        let w = g_amb.matvec(&n_amb);
        let eta = jac.transpose().matvec(&w);

        Ok(FramePoint {
            u: u.to_vec(),
            x,
            nvars: d,
            amb_dim: m,
            jac,
            g_amb,
            gamma_amb: mj.gamma,
            dgamma_amb_u,
            g_ind,
            xi_chart,
            xi_amb,
            screen_chart,
            screen_amb,
            gram,
            n_amb,
            eta,
        })
    }

    /// ∇̄ along the coordinate direction e_α of a field given by ambient
    /// component expressions over the chart; exact u-jets.
    pub fn nabla_bar_coord(
        &self,
        fp: &FramePoint,
        alpha: usize,
        amb_asts: &[ScalarField],
    ) -> Result<VecJet> {
        let m = fp.amb_dim;
        let d = fp.nvars;
        let mut dw = VecJet::zeros(m, d);
        let mut w = VecJet::zeros(m, d);
        for a in 0..m {
            let (v, vd) = amb_asts[a].jet(fp.u.as_slice())?;
            w.set(a, &Jet::new(v, vd));
            let pa = amb_asts[a].exact_partial(alpha);
            let (pv, pd) = pa.jet(fp.u.as_slice())?;
            dw.set(a, &Jet::new(pv, pd));
        }
        Ok(dw.add(&fp.gamma_contract(&fp.jac.column(alpha), &w)))
    }

    /// ∇̄ along e_α of a constructed field supplied as a closure producing
    /// ambient-component jets; value-level output (the closure's jets supply
    /// the ∂_α term, so no finite differences are involved).
    pub fn nabla_bar_coord_value(
        &self,
        fp: &FramePoint,
        alpha: usize,
        w: &VecJet,
    ) -> DVector<f64> {
        let m = fp.amb_dim;
        let mut out = w.d[alpha].clone();
        for a in 0..m {
            let mut s = 0.0;
            for b in 0..m {
                for c in 0..m {
                    s += self_gamma(fp, a, b, c) * fp.jac.v[(b, alpha)] * w.v[c];
                }
            }
            out[a] += s;
        }
        out
    }

    /// Gauss–Weingarten objects at u, γ-indexed connection coefficients of
    /// the induced connection included.
    pub fn induced_point(&self, u: &[f64]) -> Result<InducedPoint> {
        let fp = self.frame(u)?;
        let d = fp.nvars;
        let n = d - 1;

        // Ambient derivative of coordinate frames: H_{αβ} = ∂²Φ + Γ̄(J eα, J eβ).
        let mut b_form = MatJet::zeros(d, d, d);
        let mut conn: Vec<MatJet> = (0..d).map(|_| MatJet::zeros(d, d, d)).collect();
        for alpha in 0..d {
            for beta in alpha..d {
                let mut hess = VecJet::zeros(fp.amb_dim, d);
                for a in 0..fp.amb_dim {
                    let pa = self.embedding.comps[a].partials()[alpha].partials()[beta].clone();
                    let (v, dd) = pa.jet(u)?;
                    hess.set(a, &Jet::new(v, dd));
                }
                let h = hess.add(&fp.gamma_contract(&fp.jac.column(alpha), &fp.jac.column(beta)));
                let b = fp.pair(&h, &fp.xi_amb);
                let tangent = h.sub(&fp.n_amb.scale_jet(&b));
                let chart = fp.decompose_tangent(&tangent)?;
                b_form.set(alpha, beta, &b);
                b_form.set(beta, alpha, &b);
                for gamma in 0..d {
                    let e = chart.get(gamma);
                    conn[gamma].set(alpha, beta, &e);
                    conn[gamma].set(beta, alpha, &e);
                }
            }
        }

        // C(e_α, W_i) = η(∇̄_{e_α} W_i), φ(e_α) = η(∇̄_{e_α} ξ).
        let mut c_form = MatJet::zeros(d, n, d);
        for alpha in 0..d {
            for i in 0..n {
                let dw = self.nabla_bar_coord(&fp, alpha, &self.screen_amb_ast[i])?;
                c_form.set(alpha, i, &fp.pair(&fp.n_amb, &dw));
            }
        }
        let mut phi = VecJet::zeros(d, d);
        let mut xi_cov = Vec::with_capacity(d);
        for alpha in 0..d {
            let dxi = self.nabla_bar_coord(&fp, alpha, &self.xi_amb_ast)?;
            phi.set(alpha, &fp.pair(&fp.n_amb, &dxi));
            xi_cov.push(dxi);
        }

        Ok(InducedPoint {
            fp,
            b_form,
            conn,
            c_form,
            phi,
            xi_cov,
        })
    }

    /// Symbolic pullback metric g_{αβ}(u) for downstream exact restriction.
    pub fn pullback_metric_asts(&self) -> Vec<Vec<ScalarField>> {
        let d = self.chart_dim();
        let m = self.ambient.dim;
        let mut out = vec![vec![ScalarField::zero(d); d]; d];
        for alpha in 0..d {
            for beta in alpha..d {
                let mut acc = ScalarField::zero(d);
                for a in 0..m {
                    for b in 0..m {
                        let gab = self.ambient.metric[a][b].compose(&self.embedding.comps);
                        let term = self.embedding.comps[a].partials()[alpha]
                            .mul(&self.embedding.comps[b].partials()[beta])
                            .mul(&gab);
                        acc = acc.add(&term);
                    }
                }
                out[alpha][beta] = acc.clone();
                out[beta][alpha] = acc;
            }
        }
        out
    }
}

fn self_gamma(fp: &FramePoint, a: usize, b: usize, c: usize) -> f64 {
    fp.gamma_amb[a][(b, c)]
}

/// Ambient components of a chart field, assembled symbolically:
/// V_amb^A = Σ_α ∂_α Φ^A · V^α.
pub fn push_field_ast(emb: &Embedding, v: &AstVecField) -> Vec<ScalarField> {
    let d = emb.chart_dim();
    (0..emb.ambient_dim())
        .map(|a| {
            let mut acc = ScalarField::zero(d);
            for alpha in 0..d {
                acc = acc.add(&emb.comps[a].partials()[alpha].mul(&v.comps[alpha]));
            }
            acc
        })
        .collect()
}

/// All Gauss–Weingarten data at one point.
pub struct InducedPoint {
    pub fp: FramePoint,
    /// B(e_α, e_β).
    pub b_form: MatJet,
    /// conn[γ](α,β) = coefficients of the induced connection ∇_{e_α} e_β.
    pub conn: Vec<MatJet>,
    /// C(e_α, W_i) for the screen basis fields.
    pub c_form: MatJet,
    /// φ(e_α) with ∇_X ξ = −A*_ξ X + φ(X)ξ.
    pub phi: VecJet,
    /// ∇̄_{e_α} ξ as ambient jets (tangent since B(·, ξ) = 0).
    pub xi_cov: Vec<VecJet>,
}

impl InducedPoint {
    pub fn chart_dim(&self) -> usize {
        self.fp.nvars
    }

    /// B(x, y) for chart vectors.
    pub fn b_apply(&self, x: &VecJet, y: &VecJet) -> Jet {
        self.b_form.bilinear(x, y)
    }

    /// Connection action: Γ(x, y)^γ = Γ^γ_{αβ} x^α y^β.
    pub fn conn_apply(&self, x: &VecJet, y: &VecJet) -> VecJet {
        let d = self.chart_dim();
        let mut out = VecJet::zeros(d, self.fp.nvars);
        for gamma in 0..d {
            out.set(gamma, &self.conn[gamma].bilinear(x, y));
        }
        out
    }

    /// ∇_x V for a field with chart-component jets: x^α(∂_α V^γ + Γ^γ_{αβ}V^β),
    /// value-level output, tensorial in x.
    pub fn nabla_value(&self, x: &DVector<f64>, v: &VecJet) -> DVector<f64> {
        let d = self.chart_dim();
        let mut out = DVector::zeros(d);
        for gamma in 0..d {
            let mut s = 0.0;
            for alpha in 0..d {
                let mut t = v.d[alpha][gamma];
                for beta in 0..d {
                    t += self.conn[gamma].v[(alpha, beta)] * v.v[beta];
                }
                s += x[alpha] * t;
            }
            out[gamma] = s;
        }
        out
    }

    /// ∇_{e_α} V with exact jets, for fields whose second partials are
    /// available (dv2[k][α] = ∂_k ∂_α V).
    pub fn nabla_coord_jet(&self, alpha: usize, v: &VecJet, dv2: &[Vec<DVector<f64>>]) -> VecJet {
        let d = self.chart_dim();
        let mut out = VecJet::zeros(d, self.fp.nvars);
        for gamma in 0..d {
            let mut val = v.d[alpha][gamma];
            for beta in 0..d {
                val += self.conn[gamma].v[(alpha, beta)] * v.v[beta];
            }
            let mut dd = vec![0.0; self.fp.nvars];
            for (k, dk) in dd.iter_mut().enumerate() {
                let mut s = dv2[k][alpha][gamma];
                for beta in 0..d {
                    s += self.conn[gamma].d[k][(alpha, beta)] * v.v[beta]
                        + self.conn[gamma].v[(alpha, beta)] * v.d[k][beta];
                }
                *dk = s;
            }
            out.set(gamma, &Jet::new(val, dd));
        }
        out
    }

    /// Shape operator of the screen: A*_ξ x = φ(x)ξ − ∇_x ξ (chart components).
    pub fn a_star_apply(&self, x: &VecJet) -> Result<VecJet> {
        let d = self.chart_dim();
        let mut acc = VecJet::zeros(d, self.fp.nvars);
        for alpha in 0..d {
            let (chart, _b) = self.fp.split(&self.xi_cov[alpha])?;
            acc = acc.add(&chart.scale_jet(&x.get(alpha)));
        }
        let phi_x = self.phi.dot(x);
        Ok(self.fp.xi_chart.scale_jet(&phi_x).sub(&acc))
    }

    /// (∇_{e_α} g)_{βγ} = ∂_α g_{βγ} − Γ^δ_{αβ} g_{δγ} − Γ^δ_{αγ} g_{βδ}.
    pub fn nabla_g_component(&self, alpha: usize, beta: usize, gamma: usize) -> f64 {
        let d = self.chart_dim();
        let mut s = self.g().d[alpha][(beta, gamma)];
        for delta in 0..d {
            s -= self.conn[delta].v[(alpha, beta)] * self.g().v[(delta, gamma)]
                + self.conn[delta].v[(alpha, gamma)] * self.g().v[(beta, delta)];
        }
        s
    }

    pub fn g(&self) -> &MatJet {
        &self.fp.g_ind
    }

    /// C(x, Py) for arbitrary chart vectors: expands Py over the screen basis
    /// and contracts the C components (tensorial in both slots).
    pub fn c_apply(&self, x: &VecJet, y: &VecJet) -> Result<Jet> {
        let n = self.fp.screen_chart.len();
        let mut rhs = VecJet::zeros(n, self.fp.nvars);
        for i in 0..n {
            rhs.set(i, &self.g().bilinear(&self.fp.screen_chart[i], y));
        }
        let c = solve_jet(&self.fp.gram, &rhs)
            .ok_or_else(|| Error::numerical("degenerate screen Gram matrix"))?;
        let mut acc = Jet::constant(0.0, self.fp.nvars);
        for i in 0..n {
            let ci = self.c_form.column(i).dot(x);
            acc = acc.add(&ci.mul(&c.get(i)));
        }
        Ok(acc)
    }

    /// τ(e_α) = ḡ(∇̄_{e_α} N, ξ), value-level.
    pub fn tau_values(&self) -> DVector<f64> {
        let d = self.chart_dim();
        let m = self.fp.amb_dim;
        let mut out = DVector::zeros(d);
        for alpha in 0..d {
            let mut dn = self.fp.n_amb.d[alpha].clone();
            for a in 0..m {
                let mut s = 0.0;
                for b in 0..m {
                    for c in 0..m {
                        s += self.fp.gamma_amb[a][(b, c)]
                            * self.fp.jac.v[(b, alpha)]
                            * self.fp.n_amb.v[c];
                    }
                }
                dn[a] += s;
            }
            out[alpha] = (self.fp.g_amb.v.clone() * dn).dot(&self.fp.xi_amb.v);
        }
        out
    }

    /// A_N x = −(tangent part of ∇̄_x N), value-level chart components.
    pub fn a_n_apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.chart_dim();
        let m = self.fp.amb_dim;
        let mut dn = DVector::zeros(m);
        for alpha in 0..d {
            let mut col = self.fp.n_amb.d[alpha].clone();
            for a in 0..m {
                let mut s = 0.0;
                for b in 0..m {
                    for c in 0..m {
                        s += self.fp.gamma_amb[a][(b, c)]
                            * self.fp.jac.v[(b, alpha)]
                            * self.fp.n_amb.v[c];
                    }
                }
                col[a] += s;
            }
            dn += col * x[alpha];
        }
        // ∇̄_x N = −A_N x + τ(x) N: strip the transversal part then negate.
        let tau = (self.fp.g_amb.v.clone() * &dn).dot(&self.fp.xi_amb.v);
        let tangent_amb = &dn - &self.fp.n_amb.v * tau;
        let vj = VecJet::constant(tangent_amb, self.fp.nvars);
        let (chart, _) = self.fp.split(&vj)?;
        Ok(-chart.v)
    }
}

/// Outcome of the total-geodesibility scan.
#[derive(Debug, Clone)]
pub struct GeodesicReport {
    pub totally_geodesic: bool,
    pub max_b_norm: f64,
    /// Metric-compatibility residual of the induced connection, which must
    /// vanish exactly when B does.
    pub max_nabla_g: f64,
}

/// Scans the grid: totally geodesic iff max ‖B‖ ≤ tol; cross-checks that a
/// vanishing B forces a metric induced connection.
pub fn check_totally_geodesic(
    geo: &HyperGeometry,
    grid: &[Vec<f64>],
    tol: f64,
) -> Result<GeodesicReport> {
    let mut max_b = 0.0f64;
    let mut max_ng = 0.0f64;
    for u in grid {
        let ip = geo.induced_point(u)?;
        max_b = max_b.max(ip.b_form.v.amax());
        let d = ip.chart_dim();
        for alpha in 0..d {
            for beta in 0..d {
                for gamma in 0..d {
                    max_ng = max_ng.max(ip.nabla_g_component(alpha, beta, gamma).abs());
                }
            }
        }
    }
    Ok(GeodesicReport {
        totally_geodesic: max_b <= tol,
        max_b_norm: max_b,
        max_nabla_g: max_ng,
    })
}

/// Screen integrability: max |η([Wᵢ, Wⱼ])| over the grid.
pub fn screen_integrability_residual(geo: &HyperGeometry, grid: &[Vec<f64>]) -> Result<f64> {
    let n = geo.screen_rank();
    let mut worst = 0.0f64;
    let mut brackets = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            brackets.push(geo.screen[i].lie_bracket(&geo.screen[j]));
        }
    }
    for u in grid {
        let fp = geo.frame(u)?;
        for br in &brackets {
            let bj = br.jet(u)?;
            worst = worst.max(fp.eta_apply(&bj).v.abs());
        }
    }
    Ok(worst)
}

/// Gram–Schmidt completion of a screen from the coordinate basis at a
/// reference point. Convenience only: the result is a constant frame, valid
/// near the reference point, and is not a canonical choice.
pub fn complete_screen_at(geo: &HyperGeometry, u0: &[f64]) -> Result<Vec<AstVecField>> {
    let d = geo.chart_dim();
    let g = geo.lightlike_check(u0)?;
    let xi = geo.xi.value(u0)?;
    let mut chosen: Vec<DVector<f64>> = Vec::new();
    for k in 0..d {
        if chosen.len() == d - 1 {
            break;
        }
        let mut v = DVector::zeros(d);
        v[k] = 1.0;
        // Remove the ξ direction (euclidean projection) and g-orthogonalize
        // against the vectors already chosen.
        let v0 = &v - &xi * (v.dot(&xi) / xi.dot(&xi));
        let mut w = v0.clone();
        for c in chosen.iter() {
            let denom = (c.transpose() * &g * c)[(0, 0)];
            if denom.abs() < 1e-12 {
                continue;
            }
            let coef = (c.transpose() * &g * &v0)[(0, 0)] / denom;
            w -= c * coef;
        }
        let norm2 = (w.transpose() * &g * &w)[(0, 0)];
        if norm2.abs() > 1e-8 {
            chosen.push(&w / norm2.abs().sqrt());
        }
    }
    if chosen.len() != d - 1 {
        return Err(Error::geometry(
            "failed to complete a nondegenerate screen from the coordinate basis",
        ));
    }
    Ok(chosen
        .into_iter()
        .map(|w| AstVecField::constant(w.as_slice(), d))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ScalarField;

    fn sf(t: &str, d: usize) -> ScalarField {
        ScalarField::parse(t, d).unwrap()
    }

    fn minkowski4() -> AmbientManifold {
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
    }

    /// Null hyperplane x̄0 = x̄1 in R^4_1: (u,v,w) ↦ (u,u,v,w).
    fn null_hyperplane() -> HyperGeometry {
        let emb = Embedding::new(vec![sf("x0", 3), sf("x0", 3), sf("x1", 3), sf("x2", 3)]);
        let xi = AstVecField::new(vec![sf("1", 3), sf("0", 3), sf("0", 3)]);
        let screen = vec![
            AstVecField::new(vec![sf("0", 3), sf("1", 3), sf("0", 3)]),
            AstVecField::new(vec![sf("0", 3), sf("0", 3), sf("1", 3)]),
        ];
        HyperGeometry::new(minkowski4(), emb, xi, screen).unwrap()
    }

    /// Light cone x̄0 = r in spherical chart (u, v, w) = (r, θ, φ).
    fn light_cone() -> HyperGeometry {
        let emb = Embedding::new(vec![
            sf("x0", 3),
            sf("x0*sin(x1)*cos(x2)", 3),
            sf("x0*sin(x1)*sin(x2)", 3),
            sf("x0*cos(x1)", 3),
        ]);
        let xi = AstVecField::new(vec![sf("1", 3), sf("0", 3), sf("0", 3)]);
        let screen = vec![
            AstVecField::new(vec![sf("0", 3), sf("1", 3), sf("0", 3)]),
            AstVecField::new(vec![sf("0", 3), sf("0", 3), sf("1", 3)]),
        ];
        HyperGeometry::new(minkowski4(), emb, xi, screen).unwrap()
    }

    #[test]
    fn null_hyperplane_induced_metric() {
        let geo = null_hyperplane();
        let g = geo.induced_metric(&[0.3, -0.5, 0.7]).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[0., 0., 0., 0., 1., 0., 0., 0., 1.]);
        assert!((g - expect).amax() < 1e-14);
    }

    #[test]
    fn spacelike_slice_rejected() {
        let emb = Embedding::new(vec![sf("0", 3), sf("x0", 3), sf("x1", 3), sf("x2", 3)]);
        let xi = AstVecField::new(vec![sf("1", 3), sf("0", 3), sf("0", 3)]);
        let screen = vec![
            AstVecField::new(vec![sf("0", 3), sf("1", 3), sf("0", 3)]),
            AstVecField::new(vec![sf("0", 3), sf("0", 3), sf("1", 3)]),
        ];
        let geo = HyperGeometry::new(minkowski4(), emb, xi, screen).unwrap();
        let err = geo.lightlike_check(&[0.1, 0.2, 0.3]).unwrap_err();
        assert!(err.to_string().contains("not lightlike"), "{err}");
    }

    #[test]
    fn radical_generator_explicit_kernels() {
        let g = DMatrix::from_row_slice(3, 3, &[0., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let xi = radical_generator(&g).unwrap();
        assert!((xi - DVector::from_column_slice(&[1., 0., 0.])).norm() < 1e-12);
        let g = DMatrix::from_row_slice(3, 3, &[1., 0., 0., 0., 0., 0., 0., 0., 1.]);
        let xi = radical_generator(&g).unwrap();
        assert!((xi - DVector::from_column_slice(&[0., 1., 0.])).norm() < 1e-12);
    }

    #[test]
    fn radical_generator_construct_then_recover() {
        // Gram built as Aᵀ diag(0,1,...,1) A has kernel along A⁻¹ e0.
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[1.2, 0.3, -0.4, 0.0, 0.9, 0.5, 0.7, -0.2, 1.1],
        );
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.0, 1.0, 1.0]));
        let g = a.transpose() * d * &a;
        let xi = radical_generator(&g).unwrap();
        let e0 = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        let mut expected = a.full_piv_lu().solve(&e0).unwrap();
        expected /= expected.norm();
        let aligned = (xi.clone() - &expected).norm().min((xi + &expected).norm());
        assert!(aligned < 1e-10, "kernel misaligned by {aligned}");
    }

    #[test]
    fn transversal_matches_hand_solution() {
        let geo = null_hyperplane();
        let fp = geo.frame(&[0.3, -0.5, 0.7]).unwrap();
        // For ξ = (1,1,0,0): N = ½(−1,1,0,0).
        let expect = DVector::from_column_slice(&[-0.5, 0.5, 0.0, 0.0]);
        assert!((fp.n_amb.v.clone() - expect).norm() < 1e-12, "N = {}", fp.n_amb.v);
        // Eqs. 1–2.
        assert!((fp.pair(&fp.n_amb, &fp.xi_amb).v - 1.0).abs() < 1e-12);
        assert!(fp.pair(&fp.n_amb, &fp.n_amb).v.abs() < 1e-12);
        for w in &fp.screen_amb {
            assert!(fp.pair(&fp.n_amb, w).v.abs() < 1e-12);
        }
    }

    #[test]
    fn null_hyperplane_is_totally_geodesic() {
        let geo = null_hyperplane();
        let grid: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0, 0.0],
            vec![0.5, -0.3, 0.8],
            vec![-1.0, 0.4, 0.2],
        ];
        let rep = check_totally_geodesic(&geo, &grid, 1e-10).unwrap();
        assert!(rep.totally_geodesic);
        assert!(rep.max_b_norm < 1e-14);
        assert!(rep.max_nabla_g < 1e-12);
    }

    #[test]
    fn light_cone_not_geodesic_but_b_proportional_to_g() {
        let geo = light_cone();
        let grid: Vec<Vec<f64>> = vec![vec![1.2, 0.9, 0.4], vec![1.5, 1.1, 0.7]];
        let rep = check_totally_geodesic(&geo, &grid, 1e-8).unwrap();
        assert!(!rep.totally_geodesic);
        assert!(rep.max_b_norm > 1e-2);
        // On the cone B = ρ g: components proportional pointwise.
        for u in &grid {
            let ip = geo.induced_point(u).unwrap();
            let g = &ip.fp.g_ind.v;
            let b = &ip.b_form.v;
            let rho = b[(1, 1)] / g[(1, 1)];
            for al in 0..3 {
                for be in 0..3 {
                    assert!(
                        (b[(al, be)] - rho * g[(al, be)]).abs() < 1e-9 * (1.0 + g.amax()),
                        "B not umbilical at ({al},{be})"
                    );
                }
            }
            // Eq. 20 holds even though B != 0.
            for alpha in 0..3 {
                for beta in 0..3 {
                    for gamma in 0..3 {
                        let lhs = ip.nabla_g_component(alpha, beta, gamma);
                        let rhs = ip.b_form.v[(alpha, beta)] * ip.fp.eta.v[gamma]
                            + ip.b_form.v[(alpha, gamma)] * ip.fp.eta.v[beta];
                        assert!(
                            (lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()),
                            "Eq20 residual {}",
                            (lhs - rhs).abs()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn b_degeneracies_and_shape_operator() {
        // On the cone, check B(X,ξ)=0, B(X,Y)=g(A*X,Y), A*ξ=0.
        let geo = light_cone();
        let u = vec![1.3, 0.8, 0.5];
        let ip = geo.induced_point(&u).unwrap();
        let bxi = &ip.b_form.v * &ip.fp.xi_chart.v;
        assert!(bxi.norm() < 1e-12, "B(.,xi) = {bxi}");
        let astar_xi = ip.a_star_apply(&ip.fp.xi_chart).unwrap();
        assert!(astar_xi.v.norm() < 1e-12);
        // B(e_α, e_β) = g(A* e_α, e_β).
        for alpha in 0..3 {
            let e = VecJet::constant(DVector::from_fn(3, |i, _| f64::from(i == alpha)), 3);
            let a_e = ip.a_star_apply(&e).unwrap();
            for beta in 0..3 {
                let g_row = ip.fp.g_ind.v.row(beta).transpose();
                let rhs = g_row.dot(&a_e.v);
                let lhs = ip.b_form.v[(alpha, beta)];
                assert!((lhs - rhs).abs() < 1e-10, "eq18 at ({alpha},{beta})");
            }
        }
    }

    #[test]
    fn induced_connection_torsion_free() {
        let geo = light_cone();
        let ip = geo.induced_point(&[1.1, 0.7, 0.3]).unwrap();
        for gamma in 0..3 {
            let m = &ip.conn[gamma].v;
            assert!((m - m.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn frame_jets_match_finite_differences() {
        // d/du of N and of the Gram matrix vs central differences.
        let geo = light_cone();
        let u = vec![1.2, 0.9, 0.4];
        let fp = geo.frame(&u).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[k] += h;
            dn[k] -= h;
            let f_up = geo.frame(&up).unwrap();
            let f_dn = geo.frame(&dn).unwrap();
            let fd_n = (&f_up.n_amb.v - &f_dn.n_amb.v) / (2.0 * h);
            assert!(
                (&fp.n_amb.d[k] - &fd_n).norm() < 1e-6,
                "dN/du{k} jet {} fd {}",
                fp.n_amb.d[k],
                fd_n
            );
            let fd_gram = (&f_up.gram.v - &f_dn.gram.v) / (2.0 * h);
            assert!((&fp.gram.d[k] - &fd_gram).amax() < 1e-6);
        }
    }

    #[test]
    fn screen_completion_produces_valid_frame() {
        let geo = null_hyperplane();
        let screen = complete_screen_at(&geo, &[0.0, 0.0, 0.0]).unwrap();
        let geo2 = HyperGeometry::new(
            geo.ambient.clone(),
            geo.embedding.clone(),
            geo.xi.clone(),
            screen,
        )
        .unwrap();
        let fp = geo2.frame(&[0.1, 0.2, 0.3]).unwrap();
        assert!(fp.gram.v.determinant().abs() > 1e-6);
    }
}
