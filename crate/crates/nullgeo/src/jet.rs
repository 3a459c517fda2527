//! First-order jets: values carrying their exact partials with respect to
//! the chart coordinates. Propagating jets through products and linear
//! solves keeps every constructed quantity (transversal, Gram inverses,
//! connection coefficients, sharps) exactly differentiable once, so the
//! closed-form curvature evaluations never stack finite differences.

use nalgebra::{DMatrix, DVector};

/// Scalar jet: value plus gradient with respect to `nvars` chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: Vec<f64>,
}

impl Jet {
    pub fn constant(v: f64, nvars: usize) -> Jet {
        Jet {
            v,
            d: vec![0.0; nvars],
        }
    }

    pub fn new(v: f64, d: Vec<f64>) -> Jet {
        Jet { v, d }
    }

    pub fn nvars(&self) -> usize {
        self.d.len()
    }

    pub fn add(&self, o: &Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            d: self.d.iter().zip(&o.d).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        Jet {
            v: self.v - o.v,
            d: self.d.iter().zip(&o.d).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            d: self
                .d
                .iter()
                .zip(&o.d)
                .map(|(a, b)| a * o.v + self.v * b)
                .collect(),
        }
    }

    pub fn div(&self, o: &Jet) -> Jet {
        let inv = 1.0 / o.v;
        Jet {
            v: self.v * inv,
            d: self
                .d
                .iter()
                .zip(&o.d)
                .map(|(a, b)| (a - self.v * inv * b) * inv)
                .collect(),
        }
    }

    pub fn neg(&self) -> Jet {
        Jet {
            v: -self.v,
            d: self.d.iter().map(|a| -a).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Jet {
        Jet {
            v: c * self.v,
            d: self.d.iter().map(|a| c * a).collect(),
        }
    }

    pub fn exp(&self) -> Jet {
        let e = self.v.exp();
        Jet {
            v: e,
            d: self.d.iter().map(|a| e * a).collect(),
        }
    }
}

/// Vector of jets, stored as value vector plus one partial vector per chart
/// coordinate.
#[derive(Debug, Clone)]
pub struct VecJet {
    pub v: DVector<f64>,
    pub d: Vec<DVector<f64>>,
}

impl VecJet {
    pub fn zeros(len: usize, nvars: usize) -> VecJet {
        VecJet {
            v: DVector::zeros(len),
            d: (0..nvars).map(|_| DVector::zeros(len)).collect(),
        }
    }

    pub fn constant(v: DVector<f64>, nvars: usize) -> VecJet {
        let len = v.len();
        VecJet {
            v,
            d: (0..nvars).map(|_| DVector::zeros(len)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn nvars(&self) -> usize {
        self.d.len()
    }

    pub fn get(&self, i: usize) -> Jet {
        Jet {
            v: self.v[i],
            d: self.d.iter().map(|dk| dk[i]).collect(),
        }
    }

    pub fn set(&mut self, i: usize, j: &Jet) {
        self.v[i] = j.v;
        for (k, dk) in self.d.iter_mut().enumerate() {
            dk[i] = j.d[k];
        }
    }

    pub fn from_jets(jets: &[Jet]) -> VecJet {
        let nvars = jets[0].nvars();
        let mut out = VecJet::zeros(jets.len(), nvars);
        for (i, j) in jets.iter().enumerate() {
            out.set(i, j);
        }
        out
    }

    pub fn add(&self, o: &VecJet) -> VecJet {
        VecJet {
            v: &self.v + &o.v,
            d: self.d.iter().zip(&o.d).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &VecJet) -> VecJet {
        VecJet {
            v: &self.v - &o.v,
            d: self.d.iter().zip(&o.d).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale_jet(&self, c: &Jet) -> VecJet {
        VecJet {
            v: &self.v * c.v,
            d: self
                .d
                .iter()
                .enumerate()
                .map(|(k, dk)| dk * c.v + &self.v * c.d[k])
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> VecJet {
        VecJet {
            v: &self.v * c,
            d: self.d.iter().map(|dk| dk * c).collect(),
        }
    }

    pub fn neg(&self) -> VecJet {
        self.scale(-1.0)
    }

    pub fn dot(&self, o: &VecJet) -> Jet {
        Jet {
            v: self.v.dot(&o.v),
            d: self
                .d
                .iter()
                .zip(&o.d)
                .map(|(da, db)| da.dot(&o.v) + self.v.dot(db))
                .collect(),
        }
    }
}

/// Matrix of jets.
#[derive(Debug, Clone)]
pub struct MatJet {
    pub v: DMatrix<f64>,
    pub d: Vec<DMatrix<f64>>,
}

impl MatJet {
    pub fn zeros(r: usize, c: usize, nvars: usize) -> MatJet {
        MatJet {
            v: DMatrix::zeros(r, c),
            d: (0..nvars).map(|_| DMatrix::zeros(r, c)).collect(),
        }
    }

    pub fn constant(v: DMatrix<f64>, nvars: usize) -> MatJet {
        let (r, c) = v.shape();
        MatJet {
            v,
            d: (0..nvars).map(|_| DMatrix::zeros(r, c)).collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.v.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v.ncols()
    }

    pub fn nvars(&self) -> usize {
        self.d.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Jet {
        Jet {
            v: self.v[(i, j)],
            d: self.d.iter().map(|dk| dk[(i, j)]).collect(),
        }
    }

    pub fn set(&mut self, i: usize, j: usize, jet: &Jet) {
        self.v[(i, j)] = jet.v;
        for (k, dk) in self.d.iter_mut().enumerate() {
            dk[(i, j)] = jet.d[k];
        }
    }

    pub fn add(&self, o: &MatJet) -> MatJet {
        MatJet {
            v: &self.v + &o.v,
            d: self.d.iter().zip(&o.d).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &MatJet) -> MatJet {
        MatJet {
            v: &self.v - &o.v,
            d: self.d.iter().zip(&o.d).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale_jet(&self, c: &Jet) -> MatJet {
        MatJet {
            v: &self.v * c.v,
            d: self
                .d
                .iter()
                .enumerate()
                .map(|(k, dk)| dk * c.v + &self.v * c.d[k])
                .collect(),
        }
    }

    pub fn transpose(&self) -> MatJet {
        MatJet {
            v: self.v.transpose(),
            d: self.d.iter().map(|dk| dk.transpose()).collect(),
        }
    }

    pub fn matmul(&self, o: &MatJet) -> MatJet {
        MatJet {
            v: &self.v * &o.v,
            d: self
                .d
                .iter()
                .zip(&o.d)
                .map(|(da, db)| da * &o.v + &self.v * db)
                .collect(),
        }
    }

    pub fn matvec(&self, x: &VecJet) -> VecJet {
        VecJet {
            v: &self.v * &x.v,
            d: self
                .d
                .iter()
                .zip(&x.d)
                .map(|(da, db)| da * &x.v + &self.v * db)
                .collect(),
        }
    }

    /// x^T A y with jets.
    pub fn bilinear(&self, x: &VecJet, y: &VecJet) -> Jet {
        x.dot(&self.matvec(y))
    }

    pub fn column(&self, j: usize) -> VecJet {
        VecJet {
            v: self.v.column(j).into_owned(),
            d: self.d.iter().map(|dk| dk.column(j).into_owned()).collect(),
        }
    }

    pub fn set_column(&mut self, j: usize, col: &VecJet) {
        self.v.set_column(j, &col.v);
        for (k, dk) in self.d.iter_mut().enumerate() {
            dk.set_column(j, &col.d[k]);
        }
    }
}

/// Exact solve of A x = b with derivative propagation:
/// xₖ' = A⁻¹ (bₖ' − Aₖ' x). Returns `None` when A is singular.
pub fn solve_jet(a: &MatJet, b: &VecJet) -> Option<VecJet> {
    let lu = a.v.clone().full_piv_lu();
    let x = lu.solve(&b.v)?;
    let d = a
        .d
        .iter()
        .zip(&b.d)
        .map(|(dak, dbk)| {
            let rhs = dbk - dak * &x;
            lu.solve(&rhs)
        })
        .collect::<Option<Vec<_>>>()?;
    Some(VecJet { v: x, d })
}

/// Inverse with derivative propagation: (A⁻¹)ₖ' = −A⁻¹ Aₖ' A⁻¹.
pub fn inverse_jet(a: &MatJet) -> Option<MatJet> {
    let inv = a.v.clone().try_inverse()?;
    let d = a
        .d
        .iter()
        .map(|dak| -(&inv * dak * &inv))
        .collect::<Vec<_>>();
    Some(MatJet { v: inv, d })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Every jet operation is cross-checked against a central difference of
    // the same construction evaluated at perturbed inputs.
    fn mat_at(t: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[
            2.0 + t,
            0.3,
            t * t,
            0.1,
            1.5 - t,
            0.0,
            0.2 * t,
            0.4,
            3.0,
        ])
    }

    fn rhs_at(t: f64) -> DVector<f64> {
        DVector::from_column_slice(&[1.0, t, 2.0 - t])
    }

    fn mat_jet(t: f64) -> MatJet {
        // One chart variable t; entries' exact t-derivatives written by hand.
        let mut m = MatJet::zeros(3, 3, 1);
        m.v = mat_at(t);
        m.d[0] = DMatrix::from_row_slice(3, 3, &[
            1.0,
            0.0,
            2.0 * t,
            0.0,
            -1.0,
            0.0,
            0.2,
            0.0,
            0.0,
        ]);
        m
    }

    fn rhs_jet(t: f64) -> VecJet {
        VecJet {
            v: rhs_at(t),
            d: vec![DVector::from_column_slice(&[0.0, 1.0, -1.0])],
        }
    }

    #[test]
    fn solve_jet_matches_finite_difference() {
        let t = 0.4;
        let x = solve_jet(&mat_jet(t), &rhs_jet(t)).unwrap();
        let h = 1e-6;
        let xp = mat_at(t + h).full_piv_lu().solve(&rhs_at(t + h)).unwrap();
        let xm = mat_at(t - h).full_piv_lu().solve(&rhs_at(t - h)).unwrap();
        let fd = (xp - xm) / (2.0 * h);
        for i in 0..3 {
            assert!(
                (x.d[0][i] - fd[i]).abs() < 1e-7,
                "component {i}: jet {} vs fd {}",
                x.d[0][i],
                fd[i]
            );
        }
    }

    #[test]
    fn inverse_jet_matches_finite_difference() {
        let t = 0.4;
        let inv = inverse_jet(&mat_jet(t)).unwrap();
        let h = 1e-6;
        let fp = mat_at(t + h).try_inverse().unwrap();
        let fm = mat_at(t - h).try_inverse().unwrap();
        let fd = (fp - fm) / (2.0 * h);
        for i in 0..3 {
            for j in 0..3 {
                assert!((inv.d[0][(i, j)] - fd[(i, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn product_rule_through_matmul() {
        let t = 0.7;
        let m = mat_jet(t);
        let prod = m.matmul(&m.transpose());
        let h = 1e-6;
        let fp = mat_at(t + h) * mat_at(t + h).transpose();
        let fm = mat_at(t - h) * mat_at(t - h).transpose();
        let fd = (fp - fm) / (2.0 * h);
        for i in 0..3 {
            for j in 0..3 {
                assert!((prod.d[0][(i, j)] - fd[(i, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn scalar_jet_arithmetic() {
        let a = Jet::new(2.0, vec![1.0, 0.0]);
        let b = Jet::new(3.0, vec![0.0, 1.0]);
        let q = a.mul(&b).div(&b); // should reduce to a
        assert!((q.v - a.v).abs() < 1e-14);
        assert!((q.d[0] - a.d[0]).abs() < 1e-14);
        assert!((q.d[1] - a.d[1]).abs() < 1e-14);
    }
}
