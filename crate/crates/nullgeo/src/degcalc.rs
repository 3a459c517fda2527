//! Pseudo-inversion machinery for the degenerate induced metric: the ♭/♯
//! isomorphisms built from g and η, the associate nondegenerate metric
//! g̃ = g + η⊗η, and gradient / divergence / Laplacian with respect to the
//! degenerate metric, evaluated in a quasiorthonormal frame {ξ, W₁…Wₙ}.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::ScalarField;
use crate::hypersurface::InducedPoint;
use crate::jet::{solve_jet, Jet, MatJet, VecJet};

/// Pointwise kit: coordinate components of g, η, g̃ and the adapted frame
/// with the frame-matrix inverse g^{[αβ]}.
pub struct DegKit {
    pub nvars: usize,
    pub g: MatJet,
    pub eta: VecJet,
    pub gtilde: MatJet,
    /// Adapted frame in chart components: frame[0] = ξ, frame[1..] = Wᵢ.
    pub frame: Vec<VecJet>,
    /// g̃(F_α, F_β) and its inverse (the pseudo-inverse in this frame).
    pub frame_gt: DMatrix<f64>,
    pub frame_gt_inv: DMatrix<f64>,
}

impl DegKit {
    pub fn new(ip: &InducedPoint) -> Result<DegKit> {
        let d = ip.chart_dim();
        let g = ip.fp.g_ind.clone();
        let eta = ip.fp.eta.clone();
        let mut gtilde = g.clone();
        for a in 0..d {
            for b in 0..d {
                let e = gtilde.get(a, b).add(&eta.get(a).mul(&eta.get(b)));
                gtilde.set(a, b, &e);
            }
        }
        let mut frame = Vec::with_capacity(d);
        frame.push(ip.fp.xi_chart.clone());
        for w in &ip.fp.screen_chart {
            frame.push(w.clone());
        }
        let mut frame_gt = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                frame_gt[(a, b)] = (frame[a].v.transpose() * &gtilde.v * &frame[b].v)[(0, 0)];
            }
        }
        let frame_gt_inv = frame_gt.clone().try_inverse().ok_or_else(|| {
            Error::numerical("associate metric singular in the adapted frame")
        })?;
        Ok(DegKit {
            nvars: d,
            g,
            eta,
            gtilde,
            frame,
            frame_gt,
            frame_gt_inv,
        })
    }

    /// X^♭ = g(X,·) + η(X)η(·), as coordinate covector components. Equals
    /// g̃·X, so ♭ is the linear isomorphism given by the associate metric.
    pub fn flat(&self, x: &VecJet) -> VecJet {
        self.gtilde.matvec(x)
    }

    /// Inverse of ♭.
    pub fn sharp(&self, omega: &VecJet) -> Result<VecJet> {
        solve_jet(&self.gtilde, omega)
            .ok_or_else(|| Error::numerical("associate metric singular (sharp)"))
    }

    /// ω(X) for coordinate covector/vector components.
    pub fn pair(&self, omega: &VecJet, x: &VecJet) -> Jet {
        omega.dot(x)
    }

    /// g(x, y).
    pub fn g_apply(&self, x: &VecJet, y: &VecJet) -> Jet {
        self.g.bilinear(x, y)
    }

    /// g̃(x, y).
    pub fn gtilde_apply(&self, x: &VecJet, y: &VecJet) -> Jet {
        self.gtilde.bilinear(x, y)
    }

    /// η(x).
    pub fn eta_apply(&self, x: &VecJet) -> Jet {
        self.eta.dot(x)
    }

    /// grad f = Σ g^{[αβ]} (F_α·f) F_β over the adapted frame.
    pub fn grad(&self, f: &ScalarField, u: &[f64]) -> Result<VecJet> {
        let (_, df) = f.jet(u)?;
        let df = VecJet::constant(DVector::from_vec(df), self.nvars);
        self.grad_from_df(&df)
    }

    /// Same, from precomputed differential component jets.
    pub fn grad_from_df(&self, df: &VecJet) -> Result<VecJet> {
        let d = self.nvars;
        let mut out = VecJet::zeros(d, self.nvars);
        for alpha in 0..d {
            let fa = df.dot(&self.frame[alpha]);
            for beta in 0..d {
                let w = self.frame_gt_inv[(alpha, beta)];
                out = out.add(&self.frame[beta].scale_jet(&fa.scale(w)));
            }
        }
        Ok(out)
    }

    /// Independent gradient route: solve g̃·v = df in coordinates.
    pub fn grad_by_solve(&self, df: &VecJet) -> Result<VecJet> {
        self.sharp(df)
    }

    /// div X = Σ g^{[αβ]} g̃(∇_{F_α} X, F_β); the connection comes from the
    /// hypersurface machinery that produced `ip`.
    pub fn div(&self, ip: &InducedPoint, field: &VecJet) -> f64 {
        let d = self.nvars;
        let mut acc = 0.0;
        for alpha in 0..d {
            let cov = ip.nabla_value(&self.frame[alpha].v, field);
            for beta in 0..d {
                acc += self.frame_gt_inv[(alpha, beta)]
                    * (cov.transpose() * &self.gtilde.v * &self.frame[beta].v)[(0, 0)];
            }
        }
        acc
    }

    /// Δf = Σ g^{[αβ]} g̃(∇_{F_α} grad f, F_β).
    pub fn laplacian(&self, ip: &InducedPoint, f: &ScalarField, u: &[f64]) -> Result<f64> {
        let d = self.nvars;
        let mut df = VecJet::zeros(d, d);
        let parts = f.partials();
        for (alpha, pa) in parts.iter().enumerate() {
            let (v, dd) = pa.jet(u)?;
            df.set(alpha, &Jet::new(v, dd));
        }
        let grad = self.grad_by_solve(&df)?;
        let mut acc = 0.0;
        for alpha in 0..d {
            let cov = ip.nabla_value(&self.frame[alpha].v, &grad);
            for beta in 0..d {
                acc += self.frame_gt_inv[(alpha, beta)]
                    * (cov.transpose() * &self.gtilde.v * &self.frame[beta].v)[(0, 0)];
            }
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::AmbientManifold;
    use crate::expr::ScalarField;
    use crate::hypersurface::{AstVecField, Embedding, HyperGeometry};

    fn sf(t: &str, d: usize) -> ScalarField {
        ScalarField::parse(t, d).unwrap()
    }

    fn null_hyperplane() -> HyperGeometry {
        let rows = [
            ["-1", "0", "0", "0"],
            ["0", "1", "0", "0"],
            ["0", "0", "1", "0"],
            ["0", "0", "0", "1"],
        ];
        let amb = AmbientManifold::new(
            4,
            1,
            rows.iter()
                .map(|r| r.iter().map(|t| sf(t, 4)).collect())
                .collect(),
            None,
        )
        .unwrap();
        let emb = Embedding::new(vec![sf("x0", 3), sf("x0", 3), sf("x1", 3), sf("x2", 3)]);
        let xi = AstVecField::new(vec![sf("1", 3), sf("0", 3), sf("0", 3)]);
        let screen = vec![
            AstVecField::new(vec![sf("0", 3), sf("1", 3), sf("0", 3)]),
            AstVecField::new(vec![sf("0", 3), sf("0", 3), sf("1", 3)]),
        ];
        HyperGeometry::new(amb, emb, xi, screen).unwrap()
    }

    fn kit_at(geo: &HyperGeometry, u: &[f64]) -> (InducedPoint, DegKit) {
        let ip = geo.induced_point(u).unwrap();
        let kit = DegKit::new(&ip).unwrap();
        (ip, kit)
    }

    #[test]
    fn flat_of_xi_is_eta() {
        let geo = null_hyperplane();
        let (ip, kit) = kit_at(&geo, &[0.2, 0.4, -0.1]);
        let fx = kit.flat(&ip.fp.xi_chart);
        assert!((&fx.v - &kit.eta.v).norm() < 1e-12);
        // flat(W) = g(W,·) for screen fields.
        for w in &ip.fp.screen_chart {
            let fw = kit.flat(w);
            let gw = kit.g.matvec(w);
            assert!((&fw.v - &gw.v).norm() < 1e-12);
        }
    }

    #[test]
    fn sharp_inverts_flat_and_eta_maps_to_xi() {
        let geo = null_hyperplane();
        let (ip, kit) = kit_at(&geo, &[0.0, 0.3, 0.9]);
        let sharp_eta = kit.sharp(&kit.eta.clone()).unwrap();
        assert!((&sharp_eta.v - &ip.fp.xi_chart.v).norm() < 1e-12);
        let zero = VecJet::zeros(3, 3);
        assert!(kit.sharp(&zero).unwrap().v.norm() < 1e-15);
    }

    #[test]
    fn gradient_on_flat_hyperplane() {
        // g = diag(0,1,1), f = v (second chart coordinate): grad f = ∂v.
        let geo = null_hyperplane();
        let (_ip, kit) = kit_at(&geo, &[0.1, 0.5, -0.2]);
        let f = sf("x1", 3);
        let grad = kit.grad(&f, &[0.1, 0.5, -0.2]).unwrap();
        let expect = DVector::from_column_slice(&[0.0, 1.0, 0.0]);
        assert!((&grad.v - &expect).norm() < 1e-12, "grad = {}", grad.v);
    }

    #[test]
    fn laplacian_of_v_squared_is_two() {
        let geo = null_hyperplane();
        let u = [0.1, 0.5, -0.2];
        let (ip, kit) = kit_at(&geo, &u);
        let f = sf("x1^2", 3);
        let lap = kit.laplacian(&ip, &f, &u).unwrap();
        assert!((lap - 2.0).abs() < 1e-10, "laplacian = {lap}");
        // f = const gives zero.
        let c = sf("7", 3);
        assert!(kit.laplacian(&ip, &c, &u).unwrap().abs() < 1e-12);
    }

    #[test]
    fn gtilde_restricted_to_screen_equals_g() {
        let geo = null_hyperplane();
        let (ip, kit) = kit_at(&geo, &[0.3, 0.1, 0.7]);
        for wi in &ip.fp.screen_chart {
            for wj in &ip.fp.screen_chart {
                let gt = kit.gtilde_apply(wi, wj).v;
                let g = kit.g_apply(wi, wj).v;
                assert!((gt - g).abs() < 1e-12);
            }
        }
    }
}
