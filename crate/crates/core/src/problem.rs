//! Points `(a, B)` of the problem space: a unit coefficient vector over the
//! degree-`2K` patterns and a covariance with spectrum in `(0, 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    eigendecompose, sample_haar_orthogonal, sample_unit_sphere, vandermonde_abs,
    EigenDecomposition, SymmetricMatrix,
};
use crate::multiindex::{count_sigma, enumerate_degree, MultiIndex};
use crate::rng::RngStream;

/// Number of modes `N` and half-degree `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemShape {
    pub n: usize,
    pub k: u32,
}

impl ProblemShape {
    pub fn new(n: usize, k: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("N", "must be at least 1"));
        }
        if k == 0 {
            return Err(Error::invalid("K", "must be at least 1"));
        }
        Ok(ProblemShape { n, k })
    }

    /// sigma(N, K), the length of the coefficient vector.
    pub fn sigma(&self) -> u128 {
        count_sigma(self.n, self.k)
    }

    pub fn patterns(&self) -> Vec<MultiIndex> {
        enumerate_degree(self.n, 2 * self.k)
    }
}

/// Tolerance on `sum a_I^2 = 1`.
pub const SPHERE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    shape: ProblemShape,
    patterns: Vec<MultiIndex>,
    coefficients: Vec<f64>,
    covariance: SymmetricMatrix,
    eigen: EigenDecomposition,
}

impl ProblemInstance {
    /// `coefficients` follow the canonical pattern order of
    /// [`ProblemShape::patterns`].
    pub fn new(shape: ProblemShape, coefficients: Vec<f64>, covariance: SymmetricMatrix) -> Result<Self> {
        let eigen = eigendecompose(&covariance)?;
        Self::with_eigen(shape, coefficients, covariance, eigen)
    }

    pub fn with_eigen(
        shape: ProblemShape,
        coefficients: Vec<f64>,
        covariance: SymmetricMatrix,
        eigen: EigenDecomposition,
    ) -> Result<Self> {
        if covariance.dim() != shape.n {
            return Err(Error::invalid(
                "covariance",
                format!("dimension {} does not match N = {}", covariance.dim(), shape.n),
            ));
        }
        let patterns = shape.patterns();
        if coefficients.len() != patterns.len() {
            return Err(Error::invalid(
                "coefficients",
                format!("expected {} values, got {}", patterns.len(), coefficients.len()),
            ));
        }
        let norm2: f64 = coefficients.iter().map(|a| a * a).sum();
        if (norm2 - 1.0).abs() > SPHERE_TOLERANCE {
            return Err(Error::invalid("coefficients", format!("sum of squares is {norm2}, not 1")));
        }
        if let Some(bad) = eigen.eigenvalues.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
            return Err(Error::invalid("covariance", format!("eigenvalue {bad} is outside (0, 1)")));
        }
        Ok(ProblemInstance { shape, patterns, coefficients, covariance, eigen })
    }

    pub fn shape(&self) -> ProblemShape {
        self.shape
    }

    pub fn patterns(&self) -> &[MultiIndex] {
        &self.patterns
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficient(&self, index: &MultiIndex) -> f64 {
        self.patterns.binary_search(index).map(|p| self.coefficients[p]).unwrap_or(0.0)
    }

    pub fn covariance(&self) -> &SymmetricMatrix {
        &self.covariance
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eigen
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.eigenvalues
    }

    /// Same covariance, coefficients replaced (and validated).
    pub fn with_coefficients(&self, coefficients: Vec<f64>) -> Result<Self> {
        Self::with_eigen(self.shape, coefficients, self.covariance.clone(), self.eigen.clone())
    }
}

/// Uniform spectrum on (0,1)^N, `B = U^T diag(lambda) U` with Haar `U`.
/// Returns the covariance, its decomposition and `|Vandermonde(lambda)|`.
pub fn sample_covariance(rng: &mut RngStream, n: usize) -> (SymmetricMatrix, EigenDecomposition, f64) {
    let u = sample_haar_orthogonal(rng, n);
    let lambda: Vec<f64> = (0..n).map(|_| rng.open01()).collect();
    let weight = vandermonde_abs(&lambda);
    // Columns of U^T are the eigenvectors.
    let ut: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| u[j][i]).collect()).collect();
    let covariance = SymmetricMatrix::from_spectrum(&lambda, &ut);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| lambda[y].total_cmp(&lambda[x]));
    let eigen = EigenDecomposition {
        eigenvalues: order.iter().map(|&k| lambda[k]).collect(),
        basis: (0..n).map(|i| order.iter().map(|&k| ut[i][k]).collect()).collect(),
    };
    (covariance, eigen, weight)
}

/// One draw from the problem-space measure plus its Vandermonde weight.
pub fn sample_problem_instance(rng: &mut RngStream, shape: ProblemShape) -> Result<(ProblemInstance, f64)> {
    let (covariance, eigen, weight) = sample_covariance(rng, shape.n);
    let sigma = usize::try_from(shape.sigma())
        .map_err(|_| Error::invalid("shape", "coefficient vector too large"))?;
    let a = sample_unit_sphere(rng, sigma);
    let instance = ProblemInstance::with_eigen(shape, a, covariance, eigen)?;
    Ok((instance, weight))
}
