//! Problem-description files: JSON schema, expression parsing, structural
//! validation, and sample-grid generation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ambient::AmbientManifold;
use crate::error::{Error, Result};
use crate::expr::ScalarField;
use crate::hypersurface::{radical_generator, AstVecField, Embedding, HyperGeometry};
use crate::kaehler::KaehlerStructure;
use crate::weyl::WeylStructure;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpecFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub ambient: AmbientSpec,
    pub hypersurface: HypersurfaceSpec,
    #[serde(default)]
    pub conformal: Option<ConformalSpec>,
    #[serde(default)]
    pub weyl: Option<WeylSpec>,
    pub grid: GridSpec,
    #[serde(default)]
    pub tolerances: Option<ToleranceSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbientSpec {
    pub dim: usize,
    pub index: usize,
    pub metric: Vec<Vec<String>>,
    #[serde(default)]
    pub complex_structure: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypersurfaceSpec {
    pub chart_dim: usize,
    pub embedding: Vec<String>,
    #[serde(default)]
    pub xi: Option<Vec<String>>,
    pub screen: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConformalSpec {
    /// Conformal factor as an expression in the ambient coordinates,
    /// restricted along the hypersurface.
    pub f: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeylSpec {
    /// Chart components of the horizontal 1-form θ₀.
    pub theta0: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub ranges: Vec<[f64; 2]>,
    #[serde(default = "default_points_per_axis")]
    pub points_per_axis: usize,
    #[serde(default)]
    pub seed: u64,
    /// Seeded pseudo-random interior points added on top of the grid.
    #[serde(default = "default_random_points")]
    pub random_points: usize,
}

fn default_points_per_axis() -> usize {
    5
}

fn default_random_points() -> usize {
    100
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default = "tol_algebraic")]
    pub algebraic: f64,
    #[serde(default = "tol_derivative")]
    pub derivative: f64,
    #[serde(default = "tol_curvature")]
    pub curvature: f64,
}

fn tol_algebraic() -> f64 {
    1e-8
}
fn tol_derivative() -> f64 {
    1e-6
}
fn tol_curvature() -> f64 {
    1e-4
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec {
            algebraic: tol_algebraic(),
            derivative: tol_derivative(),
            curvature: tol_curvature(),
        }
    }
}

/// A fully validated geometry with its sampling data.
pub struct LoadedGeometry {
    pub file: GeometrySpecFile,
    /// Content hash of the spec JSON (canonicalized serialization).
    pub fingerprint: String,
    pub base: HyperGeometry,
    pub weyl: Option<WeylStructure>,
    pub kaehler: Option<KaehlerStructure>,
    pub tol: ToleranceSpec,
}

impl LoadedGeometry {
    pub fn from_json(text: &str) -> Result<LoadedGeometry> {
        let file: GeometrySpecFile =
            serde_json::from_str(text).map_err(|e| Error::schema(e.to_string()))?;
        LoadedGeometry::from_file(file)
    }

    pub fn from_file(file: GeometrySpecFile) -> Result<LoadedGeometry> {
        let m = file.ambient.dim;
        let d = file.hypersurface.chart_dim;
        if d + 1 != m {
            return Err(Error::schema(format!(
                "chart_dim {d} must equal ambient dim {m} minus one"
            )));
        }
        if file.grid.ranges.len() != d {
            return Err(Error::schema(format!(
                "grid must declare {d} coordinate ranges"
            )));
        }
        if file.hypersurface.screen.len() != d - 1 {
            return Err(Error::schema(format!(
                "screen must have {} fields, got {}",
                d - 1,
                file.hypersurface.screen.len()
            )));
        }
        if file.weyl.is_some() && file.ambient.complex_structure.is_some() {
            return Err(Error::schema(
                "weyl.theta0 and ambient.complex_structure are mutually exclusive: \
                 the complex structure determines theta0"
                    .to_string(),
            ));
        }

        let parse_matrix = |rows: &[Vec<String>], dim: usize| -> Result<Vec<Vec<ScalarField>>> {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(Error::schema(format!("expected a {dim}x{dim} matrix")));
            }
            rows.iter()
                .map(|r| {
                    r.iter()
                        .map(|t| ScalarField::parse(t, dim).map_err(Error::from))
                        .collect()
                })
                .collect()
        };
        let metric = parse_matrix(&file.ambient.metric, m)?;
        let complex = match &file.ambient.complex_structure {
            Some(rows) => Some(parse_matrix(rows, m)?),
            None => None,
        };
        let ambient = AmbientManifold::new(m, file.ambient.index, metric, complex)?;

        if file.hypersurface.embedding.len() != m {
            return Err(Error::schema(format!(
                "embedding must have {m} components"
            )));
        }
        let embedding = Embedding::new(
            file.hypersurface
                .embedding
                .iter()
                .map(|t| ScalarField::parse(t, d).map_err(Error::from))
                .collect::<Result<Vec<_>>>()?,
        );

        let grid = sample_grid(&file.grid);
        let center = grid_center(&file.grid);

        let xi = match &file.hypersurface.xi {
            Some(comps) => {
                if comps.len() != d {
                    return Err(Error::schema(format!("xi must have {d} components")));
                }
                AstVecField::new(
                    comps
                        .iter()
                        .map(|t| ScalarField::parse(t, d).map_err(Error::from))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            None => {
                // Auto-detect the radical at the grid center and use it as a
                // constant field; validated across the grid below.
                let probe = HyperGeometry::new(
                    ambient.clone(),
                    embedding.clone(),
                    AstVecField::constant(&vec![0.0; d], d),
                    (0..d - 1).map(|k| AstVecField::coordinate(k, d)).collect(),
                )?;
                let g = probe.lightlike_check(&center)?;
                let kernel = radical_generator(&g)?;
                AstVecField::constant(kernel.as_slice(), d)
            }
        };
        let screen: Vec<AstVecField> = file
            .hypersurface
            .screen
            .iter()
            .map(|comps| {
                if comps.len() != d {
                    return Err(Error::schema(format!(
                        "screen fields must have {d} components"
                    )));
                }
                Ok(AstVecField::new(
                    comps
                        .iter()
                        .map(|t| ScalarField::parse(t, d).map_err(Error::from))
                        .collect::<Result<Vec<_>>>()?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;

        let base = HyperGeometry::new(ambient, embedding, xi, screen)?;

        // Structural validation at the grid corners and center: ambient
        // signature and the lightlike rank condition (a clean "not
        // lightlike" diagnostic beats a late solver failure).
        for u in probe_points(&file.grid) {
            base.ambient
                .validate_at(&base.embedding.eval(&u)?, 1e-8)?;
            base.lightlike_check(&u)?;
        }

        let f_ambient = match &file.conformal {
            Some(c) => ScalarField::parse(&c.f, m)?,
            None => ScalarField::zero(m),
        };

        let mut kaehler = None;
        let mut weyl = None;
        if base.ambient.complex_structure.is_some() {
            let ks = KaehlerStructure::build(&base, &f_ambient, &center, &grid)?;
            weyl = Some(ks.ws.clone());
            kaehler = Some(ks);
        } else if file.weyl.is_some() || file.conformal.is_some() {
            let theta0 = match &file.weyl {
                Some(w) => {
                    if w.theta0.len() != d {
                        return Err(Error::schema(format!(
                            "theta0 must have {d} components"
                        )));
                    }
                    w.theta0
                        .iter()
                        .map(|t| ScalarField::parse(t, d).map_err(Error::from))
                        .collect::<Result<Vec<_>>>()?
                }
                None => vec![ScalarField::zero(d); d],
            };
            weyl = Some(WeylStructure::new(base.clone(), f_ambient, theta0)?);
        }

        let canonical = serde_json::to_string(&file).map_err(|e| Error::schema(e.to_string()))?;
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let fingerprint = format!("{:x}", hasher.finalize());
        let tol = file.tolerances.unwrap_or_default();

        Ok(LoadedGeometry {
            file,
            fingerprint,
            base,
            weyl,
            kaehler,
            tol,
        })
    }

    pub fn chart_dim(&self) -> usize {
        self.base.chart_dim()
    }

    /// Uniform grid points.
    pub fn grid_points(&self) -> Vec<Vec<f64>> {
        sample_grid(&self.file.grid)
    }

    /// Seeded pseudo-random interior points; `count` overrides the spec.
    pub fn random_points(&self, count: Option<usize>, seed: Option<u64>) -> Vec<Vec<f64>> {
        let n = count.unwrap_or(self.file.grid.random_points);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(self.file.grid.seed));
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(
                self.file
                    .grid
                    .ranges
                    .iter()
                    .map(|[lo, hi]| rng.gen_range(*lo..*hi))
                    .collect(),
            );
        }
        out
    }
}

pub fn sample_grid(grid: &GridSpec) -> Vec<Vec<f64>> {
    let d = grid.ranges.len();
    let k = grid.points_per_axis.max(1);
    let mut out = Vec::with_capacity(k.pow(d as u32));
    let mut idx = vec![0usize; d];
    loop {
        let p: Vec<f64> = (0..d)
            .map(|i| {
                let [lo, hi] = grid.ranges[i];
                if k == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * idx[i] as f64 / (k - 1) as f64
                }
            })
            .collect();
        out.push(p);
        let mut carry = d;
        for i in (0..d).rev() {
            idx[i] += 1;
            if idx[i] < k {
                carry = i;
                break;
            }
            idx[i] = 0;
        }
        if carry == d {
            break;
        }
    }
    out
}

fn grid_center(grid: &GridSpec) -> Vec<f64> {
    grid.ranges.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
}

fn probe_points(grid: &GridSpec) -> Vec<Vec<f64>> {
    let mut pts = vec![grid_center(grid)];
    let d = grid.ranges.len();
    for mask in 0..(1usize << d) {
        let p: Vec<f64> = (0..d)
            .map(|i| {
                let [lo, hi] = grid.ranges[i];
                if mask & (1 << i) != 0 {
                    hi
                } else {
                    lo
                }
            })
            .collect();
        pts.push(p);
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_expected_size_and_is_deterministic() {
        let g = GridSpec {
            ranges: vec![[-1.0, 1.0], [0.0, 2.0], [0.5, 1.5]],
            points_per_axis: 5,
            seed: 7,
            random_points: 10,
        };
        let pts = sample_grid(&g);
        assert_eq!(pts.len(), 125);
        assert_eq!(pts[0], vec![-1.0, 0.0, 0.5]);
        assert_eq!(pts[124], vec![1.0, 2.0, 1.5]);
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{"ambient": {"dim": 4, "index": 1, "metric": []}, "bogus": 1}"#;
        assert!(serde_json::from_str::<GeometrySpecFile>(text).is_err());
    }
}
