use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbs::{mean_photon_number, solve_scaling};

fn check_domain(eigenvalues: &[f64], t: f64) -> Result<f64> {
    let largest = eigenvalues.iter().copied().fold(0.0, f64::max);
    if !(t > 0.0 && t * largest < 1.0) {
        return Err(Error::ScalingDomain { t, limit: 1.0 / largest });
    }
    Ok(largest)
}

/// `gamma(t) = -2K log t - (1/2) sum log(1 - t^2 lambda^2)`, the log of the
/// `t`-dependent factor `t^-2K / d_t` shared by the GBS variances.
pub fn gamma(eigenvalues: &[f64], k: u32, t: f64) -> Result<f64> {
    check_domain(eigenvalues, t)?;
    let s: f64 = eigenvalues.iter().map(|l| (1.0 - t * t * l * l).ln()).sum();
    Ok(-2.0 * k as f64 * t.ln() - 0.5 * s)
}

/// `gamma'(t) = (m_t - 2K) / t`.
pub fn gamma_derivative(eigenvalues: &[f64], k: u32, t: f64) -> Result<f64> {
    let m = mean_photon_number(eigenvalues, t)?;
    Ok((m - 2.0 * k as f64) / t)
}

/// Evidence that the tuned scaling minimises `gamma` on `(0, 1/lambda_1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCertificate {
    pub t0: f64,
    pub gamma_t0: f64,
    pub derivative_t0: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub argmin: usize,
    /// Grid point closest to `t0`.
    pub nearest: usize,
    /// `gamma(t0) <= gamma(t)` at every grid point.
    pub dominates_grid: bool,
}

/// Solves `m_t = 2K` and evaluates `gamma` at the midpoints of `points`
/// equal cells partitioning `(0, 1/lambda_1)`.
pub fn optimal_t_certificate(eigenvalues: &[f64], k: u32, points: usize) -> Result<ScalingCertificate> {
    if points == 0 {
        return Err(Error::invalid("points", "at least one grid point is required"));
    }
    let t0 = solve_scaling(eigenvalues, 2.0 * k as f64)?;
    let largest = check_domain(eigenvalues, t0)?;
    let gamma_t0 = gamma(eigenvalues, k, t0)?;
    let derivative_t0 = gamma_derivative(eigenvalues, k, t0)?;
    let step = 1.0 / (largest * points as f64);
    let grid: Vec<f64> = (0..points).map(|i| (i as f64 + 0.5) * step).collect();
    let values = grid.iter().map(|&t| gamma(eigenvalues, k, t)).collect::<Result<Vec<_>>>()?;
    let argmin = (0..points).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    let nearest = (0..points)
        .min_by(|&a, &b| (grid[a] - t0).abs().total_cmp(&(grid[b] - t0).abs()))
        .unwrap_or(0);
    let slack = 1e-12 * gamma_t0.abs().max(1.0);
    let dominates_grid = values.iter().all(|&v| gamma_t0 <= v + slack);
    Ok(ScalingCertificate {
        t0,
        gamma_t0,
        derivative_t0,
        grid,
        values,
        argmin,
        nearest,
        dominates_grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_vanishes_at_tuned_scaling() {
        let eig = [0.9, 0.5, 0.2];
        for k in 1..=4 {
            let c = optimal_t_certificate(&eig, k, 200).unwrap();
            assert!(c.derivative_t0.abs() < 1e-8, "k={k}: {}", c.derivative_t0);
            assert!(c.dominates_grid);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let eig = [0.7, 0.3];
        let t = 0.9;
        let h = 1e-6;
        let fd = (gamma(&eig, 2, t + h).unwrap() - gamma(&eig, 2, t - h).unwrap()) / (2.0 * h);
        assert!((fd - gamma_derivative(&eig, 2, t).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn grid_minimum_brackets_t0() {
        let mut rng = crate::rng::RngStream::new(61);
        for _ in 0..200 {
            let n = 1 + (rng.uniform() * 5.0) as usize;
            let k = 1 + (rng.uniform() * 6.0) as u32;
            let eig: Vec<f64> = (0..n).map(|_| rng.open01()).collect();
            let c = optimal_t_certificate(&eig, k, 200).unwrap();
            assert!(c.dominates_grid);
            assert!(c.argmin.abs_diff(c.nearest) <= 1);
            let (lo, hi) = (c.argmin.min(c.nearest), c.argmin.max(c.nearest));
            if lo != hi {
                assert!(c.grid[lo] <= c.t0 && c.t0 <= c.grid[hi]);
            }
        }
    }

    #[test]
    fn domain_is_enforced() {
        assert!(gamma(&[0.5], 1, 2.0).is_err());
        assert!(gamma(&[0.5], 1, 0.0).is_err());
    }
}
