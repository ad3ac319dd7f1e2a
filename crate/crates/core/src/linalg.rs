//! Small dense symmetric linear algebra and the samplers behind the
//! problem-space measure (Haar rotations, sphere points, uniform spectra).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Dense real symmetric matrix, stored row-major. Only the upper triangle is
/// ever read from input; the lower triangle mirrors it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    /// Builds the matrix from `f(i, j)` evaluated on `i <= j`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        SymmetricMatrix { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self::from_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    /// Rows must form a square, symmetric array (to 1e-12 relative).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("matrix", "rows must form a square array"));
        }
        for i in 0..dim {
            for j in i + 1..dim {
                let (a, b) = (rows[i][j], rows[j][i]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::invalid("matrix", "entries must be finite"));
                }
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::invalid(
                        "matrix",
                        format!("entry ({i},{j}) = {a} differs from ({j},{i}) = {b}"),
                    ));
                }
            }
        }
        Ok(Self::from_fn(dim, |i, j| rows[i][j]))
    }

    /// `basis * diag(values) * basis^T`.
    pub fn from_spectrum(values: &[f64], basis: &[Vec<f64>]) -> Self {
        let n = values.len();
        Self::from_fn(n, |i, j| (0..n).map(|k| basis[i][k] * values[k] * basis[j][k]).sum())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim.max(1)).take(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymmetricMatrix { dim: self.dim, data: self.data.iter().map(|v| v * c).collect() }
    }

    /// Simultaneous row/column permutation: result(i, j) = self(p[i], p[j]).
    pub fn permuted(&self, p: &[usize]) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(p[i], p[j]))
    }

    /// Stable 64-bit FNV-1a digest of the dimension and entry bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: [u8; 8]| {
            for b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat((self.dim as u64).to_le_bytes());
        for v in &self.data {
            eat(v.to_bits().to_le_bytes());
        }
        h
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymmetricMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<SymmetricMatrix> for Vec<Vec<f64>> {
    fn from(m: SymmetricMatrix) -> Self {
        m.rows()
    }
}

/// Eigenvalues sorted descending with the matching orthonormal eigenvectors
/// stored as the columns of `basis`, so that `B = U diag(lambda) U^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
}

impl EigenDecomposition {
    pub fn largest(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn reconstruct(&self) -> SymmetricMatrix {
        SymmetricMatrix::from_spectrum(&self.eigenvalues, &self.basis)
    }

    /// max |U^T U - I|.
    pub fn orthogonality_error(&self) -> f64 {
        max_orthogonality_error(&self.basis)
    }
}

pub fn max_orthogonality_error(q: &[Vec<f64>]) -> f64 {
    let n = q.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = (0..n).map(|k| q[k][i] * q[k][j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition.
pub fn eigendecompose(s: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let n = s.dim();
    if n == 0 {
        return Err(Error::invalid("matrix", "dimension must be at least 1"));
    }
    let mut a = s.rows();
    let mut v: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let scale = a.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()));

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off == 0.0 || off.sqrt() <= 1e-16 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - sn * akq;
                    a[k][q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - sn * aqk;
                    a[q][k] = sn * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - sn * vkq;
                    row[q] = sn * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j].abs())
            .fold(0.0, f64::max);
        if off > 1e-13 * scale.max(1e-300) {
            return Err(Error::NonConvergence("Jacobi eigendecomposition"));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y][y].total_cmp(&a[x][x]));
    let eigenvalues = order.iter().map(|&k| a[k][k]).collect();
    let basis = (0..n).map(|i| order.iter().map(|&k| v[i][k]).collect()).collect();
    Ok(EigenDecomposition { eigenvalues, basis })
}

fn determinant(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a = m.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    det
}

/// Haar-distributed rotation in SO(N), returned as rows.
///
/// Gram-Schmidt on the columns of an i.i.d. standard Gaussian matrix gives
/// the QR factor with positive `diag(R)`, which is Haar on O(N); the last
/// column is negated when the determinant is -1.
pub fn sample_haar_orthogonal(rng: &mut RngStream, n: usize) -> Vec<Vec<f64>> {
    loop {
        let z: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.normal()).collect()).collect();
        let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| z[i][j]).collect()).collect();
        let mut degenerate = false;
        for j in 0..n {
            // Re-orthogonalise twice for accuracy at the 1e-15 level.
            for _ in 0..2 {
                for k in 0..j {
                    let dot: f64 = (0..n).map(|i| cols[j][i] * cols[k][i]).sum();
                    for i in 0..n {
                        cols[j][i] -= dot * cols[k][i];
                    }
                }
            }
            let norm = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                degenerate = true;
                break;
            }
            cols[j].iter_mut().for_each(|x| *x /= norm);
        }
        if degenerate {
            continue;
        }
        let mut q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect();
        if determinant(&q) < 0.0 {
            for row in q.iter_mut() {
                row[n - 1] = -row[n - 1];
            }
        }
        return q;
    }
}

/// Uniform point on the unit sphere in `dim` dimensions.
pub fn sample_unit_sphere(rng: &mut RngStream, dim: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return g.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// prod_{i<j} |lambda_i - lambda_j|; 1 for a single value.
pub fn vandermonde_abs(eigenvalues: &[f64]) -> f64 {
    let mut prod = 1.0;
    for (i, a) in eigenvalues.iter().enumerate() {
        for b in &eigenvalues[i + 1..] {
            prod *= (a - b).abs();
        }
    }
    prod
}
