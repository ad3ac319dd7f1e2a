//! Shared fixtures for the benchmarks.

use gbspe_core::linalg::sample_haar_orthogonal;
use gbspe_core::{RngStream, SymmetricMatrix};

/// Dense symmetric matrix with entries uniform in (-1, 1).
pub fn signed_matrix(seed: u64, n: usize) -> SymmetricMatrix {
    let mut rng = RngStream::new(seed);
    let mut upper = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            upper[i * n + j] = 2.0 * rng.uniform() - 1.0;
        }
    }
    SymmetricMatrix::from_fn(n, |i, j| upper[i.min(j) * n + i.max(j)])
}

/// Covariance with a Haar basis and spectrum uniform in (0, 1).
pub fn covariance(seed: u64, n: usize) -> SymmetricMatrix {
    let mut rng = RngStream::new(seed);
    let spectrum: Vec<f64> = (0..n).map(|_| rng.open01()).collect();
    let basis = sample_haar_orthogonal(&mut rng, n);
    SymmetricMatrix::from_spectrum(&spectrum, &basis)
}
