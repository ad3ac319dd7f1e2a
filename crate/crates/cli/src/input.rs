//! JSON input files: bare matrices, problem instances, sweep grids and
//! hybrid-plan slices.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use gbspe_core::advantage::{AdvantageMode, Normalization};
use gbspe_core::estimators::SliceInput;
use gbspe_core::linalg::max_orthogonality_error;
use gbspe_core::{MultiIndex, ProblemInstance, ProblemShape, SymmetricMatrix};

use crate::error::{read_error, CliError, CliResult};

/// Coefficient vectors further than this from the unit sphere are
/// normalised with a warning.
pub const NORM_WARNING: f64 = 1e-9;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| read_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| read_error(path, e))
}

pub fn read_matrix(path: &Path) -> CliResult<SymmetricMatrix> {
    let rows: Vec<Vec<f64>> = read_json(path)?;
    Ok(SymmetricMatrix::from_rows(&rows)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: u32,
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors; identity when absent.
    #[serde(default)]
    pub basis: Option<Vec<Vec<f64>>>,
    /// Sparse map from "i1,i2,..." to `a_I`; absent patterns are zero.
    pub coefficients: BTreeMap<String, f64>,
}

impl InstanceFile {
    pub fn build(&self) -> CliResult<ProblemInstance> {
        let shape = ProblemShape::new(self.n, self.k)?;
        if self.eigenvalues.len() != self.n {
            return Err(CliError::config(format!(
                "eigenvalues: expected {} values, got {}",
                self.n,
                self.eigenvalues.len()
            )));
        }
        if let Some(l) = self.eigenvalues.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(CliError::config(format!("eigenvalues: {l} is outside (0, 1)")));
        }
        let basis = match &self.basis {
            Some(b) => {
                if b.len() != self.n || b.iter().any(|r| r.len() != self.n) {
                    return Err(CliError::config(format!("basis: must be {0}x{0}", self.n)));
                }
                let err = max_orthogonality_error(b);
                if !(err <= 1e-9) {
                    return Err(CliError::config(format!("basis: not orthogonal (error {err:e})")));
                }
                b.clone()
            }
            None => (0..self.n).map(|i| (0..self.n).map(|j| f64::from(u8::from(i == j))).collect()).collect(),
        };
        let covariance = SymmetricMatrix::from_spectrum(&self.eigenvalues, &basis);

        let patterns = shape.patterns();
        let mut a = vec![0.0; patterns.len()];
        for (key, &value) in &self.coefficients {
            let index: MultiIndex = key
                .parse()
                .map_err(|_| CliError::config(format!("coefficients: key `{key}` is not a multi-index")))?;
            if index.len() != self.n || index.degree() != 2 * self.k {
                return Err(CliError::config(format!(
                    "coefficients: `{key}` needs {} entries summing to {}",
                    self.n,
                    2 * self.k
                )));
            }
            if !value.is_finite() {
                return Err(CliError::config(format!("coefficients: `{key}` is not finite")));
            }
            let pos = patterns.binary_search(&index).expect("valid pattern is enumerated");
            a[pos] = value;
        }
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(CliError::config("coefficients: all zero"));
        }
        if (norm - 1.0).abs() > NORM_WARNING {
            warn!("coefficients have norm {norm}; normalising to the unit sphere");
        }
        for x in &mut a {
            *x /= norm;
        }
        Ok(ProblemInstance::new(shape, a, covariance)?)
    }
}

pub fn read_instance(path: &Path) -> CliResult<ProblemInstance> {
    read_json::<InstanceFile>(path)?.build()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: u32,
    pub mode: AdvantageMode,
}

fn default_seed() -> u64 {
    0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub cells: Vec<GridCell>,
    pub n1: usize,
    pub n2: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub budget: Option<u128>,
    #[serde(default)]
    pub normalization: Option<Normalization>,
}

pub fn read_slices(path: &Path) -> CliResult<Vec<SliceInput>> {
    read_json(path)
}
