use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use stokes_lab::fit::geometric_grid;
use stokes_lab::{Complex64, OperatorCoeffs};

use crate::error::Failure;

/// A complex number as `[re, im]`.
pub type Pair = [f64; 2];

pub fn complex(p: Pair) -> Complex64 {
    Complex64::new(p[0], p[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub coeffs: Coeffs,
    pub lambda_grid: LambdaGrid,
    pub s: f64,
    pub mu: f64,
    /// Probe abscissa `X` of the lower-bound sweep.
    pub x_probe: f64,
    pub level: usize,
    pub tolerances: Tolerances,
    pub output_dir: PathBuf,
    pub growth: GrowthSection,
    pub sibuya: SibuyaSection,
    pub spectrum: SpectrumSection,
    pub bichar: BicharSection,
    pub hamilton: HamiltonSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            coeffs: Coeffs::default(),
            lambda_grid: LambdaGrid::default(),
            s: 4.0,
            mu: 0.4,
            x_probe: 0.5,
            level: 0,
            tolerances: Tolerances::default(),
            output_dir: PathBuf::from("out"),
            growth: GrowthSection::default(),
            sibuya: SibuyaSection::default(),
            spectrum: SpectrumSection::default(),
            bichar: BicharSection::default(),
            hamilton: HamiltonSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coeffs {
    pub b0: Pair,
    pub b1: Pair,
    pub b2: Pair,
}

impl Default for Coeffs {
    fn default() -> Self {
        Coeffs { b0: [0.0, 0.0], b1: [0.0, 0.0], b2: [0.0, 1.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid { min: 100.0, max: 1000.0, count: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub ode: f64,
    pub newton: f64,
    pub eigen: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { ode: 1e-12, newton: 1e-10, eigen: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowthSection {
    pub h: f64,
    pub k_max: usize,
    pub x0: f64,
}

impl Default for GrowthSection {
    fn default() -> Self {
        GrowthSection { h: 1.0, k_max: 40, x0: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SibuyaSection {
    pub a2: Pair,
    pub a3: Pair,
    /// Points where the connection identity is checked.
    pub points: Vec<Pair>,
}

impl Default for SibuyaSection {
    fn default() -> Self {
        SibuyaSection {
            a2: [1.0, 0.5],
            a3: [-0.5, 1.0],
            points: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.5], [0.75, -1.3]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumMethod {
    Spectral,
    Stokes,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub beta: Pair,
    /// Highest level, inclusive.
    pub k_max: usize,
    pub method: SpectrumMethod,
    pub max_disagreement: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection { beta: [0.1, 0.0], k_max: 2, method: SpectrumMethod::Both, max_disagreement: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BicharSection {
    pub x0_range: Pair,
    pub tol: f64,
    pub samples: usize,
}

impl Default for BicharSection {
    fn default() -> Self {
        BicharSection { x0_range: [-1.0, 1.0], tol: 1e-13, samples: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HamiltonSection {
    /// `(x0, x1, x2, xi0, xi1, xi2)`.
    pub rho: [f64; 6],
}

impl Default for HamiltonSection {
    fn default() -> Self {
        HamiltonSection { rho: [0.0, 0.0, 0.0, 0.0, 0.0, 1.0] }
    }
}

impl RunConfig {
    /// Reads `path`, applies `key=value` overrides and validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        let mut doc: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("{} is not valid JSON: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Failure::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let g = &self.lambda_grid;
        let t = &self.tolerances;
        let checks = [
            (g.count >= 5, "lambda_grid.count must be at least 5"),
            (g.min > 0.0 && g.max > g.min, "lambda_grid needs 0 < min < max"),
            (self.s > 3.0 && self.s <= 10.0, "s must satisfy 3 < s <= 10"),
            (self.mu > 0.0 && self.mu < 5.0 / 6.0, "mu must satisfy 0 < mu < 5/6"),
            (complex(self.coeffs.b2).norm() > 0.0, "coeffs.b2 must be nonzero"),
            (t.ode >= 1e-12 && t.newton > 0.0 && t.eigen > 0.0, "tolerances must be positive, ode >= 1e-12"),
            (self.growth.h > 0.0, "growth.h must be positive"),
            (self.bichar.samples > 0 && self.bichar.tol > 0.0, "bichar needs samples > 0 and tol > 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Failure::config(msg.to_string()));
            }
        }
        let finite = serde_json::to_value(self)
            .map_err(|e| Failure::config(e.to_string()))
            .map(|v| all_numbers_finite(&v))?;
        if !finite {
            return Err(Failure::config("non-finite number in config".into()));
        }
        Ok(())
    }

    pub fn operator(&self) -> Result<OperatorCoeffs, Failure> {
        OperatorCoeffs::new(complex(self.coeffs.b0), complex(self.coeffs.b1), complex(self.coeffs.b2))
            .map_err(|e| Failure::config(e.to_string()))
    }

    pub fn lambdas(&self) -> Vec<f64> {
        geometric_grid(self.lambda_grid.min, self.lambda_grid.max, self.lambda_grid.count)
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn all_numbers_finite(v: &Value) -> bool {
    match v {
        Value::Null => false,
        Value::Array(a) => a.iter().all(all_numbers_finite),
        Value::Object(m) => m.values().all(all_numbers_finite),
        _ => true,
    }
}

/// `a.b.c=value`, with `value` parsed as JSON when possible and taken as a
/// string otherwise.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<(), Failure> {
    let (key, raw) =
        spec.split_once('=').ok_or_else(|| Failure::config(format!("override `{spec}` is not key=value")))?;
    if key.is_empty() {
        return Err(Failure::config(format!("override `{spec}` has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = node else {
            return Err(Failure::config(format!("override `{key}`: `{}` is not an object", parts[..i].join("."))));
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}
