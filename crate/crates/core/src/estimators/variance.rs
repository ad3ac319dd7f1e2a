use crate::error::{Error, Result};
use crate::gbs::{build_degree_sampler, GbsProgram};
use crate::hafnian::{hafnian_multiindex, HafnianCache};
use crate::multiindex::count_sigma;
use crate::problem::{ProblemInstance, ProblemShape};

use super::{dot, gbsi_weights, SliceTables};

/// Largest admissible number of `(J, J')` pairs in the MC second-moment
/// matrices.
pub const DEFAULT_PAIR_BUDGET: u128 = 100_000_000;

/// Refuses shapes whose `sigma^2` pair count exceeds `budget`.
pub fn check_pair_budget(shape: ProblemShape, budget: u128) -> Result<()> {
    let sigma = shape.sigma();
    let pairs = sigma.saturating_mul(sigma);
    if pairs > budget {
        // Distinct entries of the pair matrix are the degree-4K patterns.
        let hafnians = count_sigma(shape.n, 2 * shape.k);
        return Err(Error::BudgetExceeded { pairs, hafnians, budget });
    }
    Ok(())
}

/// `second - mu^2`, clamped at zero. A negative value beyond rounding of the
/// summed terms is reported as an internal error.
pub(crate) fn finish_variance(second: f64, mu: f64, scale: f64) -> Result<f64> {
    let v = second - mu * mu;
    if v < -1e-12 * scale.max(1.0) {
        return Err(Error::Internal(format!("variance {v} is negative beyond rounding")));
    }
    Ok(v.max(0.0))
}

/// Leading-order GBS-P MSE `(1/4)((t^-2K / d_t) sum a_J^2 J! - mu^2)`.
pub fn variance_gbsp(instance: &ProblemInstance, program: &GbsProgram, cache: &HafnianCache) -> Result<f64> {
    let tables = SliceTables::new(instance, cache)?;
    let k = instance.shape().k as i32;
    let mu = dot(instance.coefficients(), &tables.hafnians);
    let s: f64 = instance
        .coefficients()
        .iter()
        .zip(&tables.factorials)
        .map(|(a, f)| a * a * f)
        .sum();
    let second = program.t.powi(-2 * k) / program.d_t * s;
    Ok(0.25 * finish_variance(second, mu, second)?)
}

/// GBS-I per-sample variance
/// `(1/d_t) sum a_J^2 J! t^-4K Haf((tB)_J)^2 - mu^2`.
pub fn variance_gbsi(instance: &ProblemInstance, program: &GbsProgram, cache: &HafnianCache) -> Result<f64> {
    let tables = SliceTables::new(instance, cache)?;
    let k = instance.shape().k as i32;
    let t = program.t;
    let coeffs = instance.coefficients();
    let mu: f64 = coeffs.iter().zip(&tables.hafnians).map(|(a, h)| a * h * h).sum();
    let t_4k = t.powi(-4 * k);
    let t_k = t.powi(k);
    let second: f64 = coeffs
        .iter()
        .zip(tables.hafnians.iter().zip(&tables.factorials))
        .map(|(a, (h, f))| {
            let scaled = t_k * h;
            a * a * f * t_4k * scaled * scaled
        })
        .sum::<f64>()
        / program.d_t;
    finish_variance(second, mu, second)
}

/// Variance of the single-draw GBS-I weight computed from the categorical
/// law itself: `sum_J p_J w_J^2 - (sum_J p_J w_J)^2`, OTHER carrying weight 0.
pub fn variance_gbsi_direct(
    instance: &ProblemInstance,
    program: &GbsProgram,
    cache: &HafnianCache,
) -> Result<f64> {
    let tables = SliceTables::new(instance, cache)?;
    let sampler = build_degree_sampler(program, instance.shape().k, cache)?;
    let w = gbsi_weights(instance, program, &tables);
    let p = &sampler.probabilities;
    let mean: f64 = p.iter().zip(&w).map(|(p, w)| p * w).sum();
    let second: f64 = p.iter().zip(&w).map(|(p, w)| p * w * w).sum();
    finish_variance(second, mean, second)
}

/// `M_{JJ'} = Haf(B_{J+J'})` over the degree-`2K` patterns.
#[derive(Debug, Clone)]
pub struct PairTable {
    pub sigma: usize,
    /// Row-major `sigma x sigma`.
    pub entries: Vec<f64>,
}

impl PairTable {
    pub fn new(instance: &ProblemInstance, cache: &HafnianCache, budget: u128) -> Result<Self> {
        check_pair_budget(instance.shape(), budget)?;
        let patterns = instance.patterns();
        let b = instance.covariance();
        let sigma = patterns.len();
        let mut entries = vec![0.0; sigma * sigma];
        for i in 0..sigma {
            for j in i..sigma {
                let v = hafnian_multiindex(b, &patterns[i].checked_add(&patterns[j])?, cache)?;
                entries[i * sigma + j] = v;
                entries[j * sigma + i] = v;
            }
        }
        Ok(PairTable { sigma, entries })
    }

    /// `x^T M x` with `M` optionally squared entrywise.
    pub fn quadratic_form(&self, x: &[f64], squared: bool) -> f64 {
        let s = self.sigma;
        let mut total = 0.0;
        for i in 0..s {
            let row = &self.entries[i * s..(i + 1) * s];
            let inner: f64 = if squared {
                row.iter().zip(x).map(|(m, y)| m * m * y).sum()
            } else {
                dot(row, x)
            };
            total += x[i] * inner;
        }
        total
    }
}

/// `a^T M a - mu_haf^2`, the variance of `f(X) = sum a_I X^I`.
pub fn variance_mc_haf(instance: &ProblemInstance, cache: &HafnianCache, budget: u128) -> Result<f64> {
    let pairs = PairTable::new(instance, cache, budget)?;
    let tables = SliceTables::new(instance, cache)?;
    let mu = dot(instance.coefficients(), &tables.hafnians);
    let second = pairs.quadratic_form(instance.coefficients(), false);
    finish_variance(second, mu, second.abs())
}

/// `sum a_J a_J' Haf(B_{J+J'})^2 - mu_hafsq^2`, the variance of
/// `sum a_I X^I Y^I` with independent `X, Y ~ N(0, B)`.
pub fn variance_mc_hafsq(instance: &ProblemInstance, cache: &HafnianCache, budget: u128) -> Result<f64> {
    let pairs = PairTable::new(instance, cache, budget)?;
    let tables = SliceTables::new(instance, cache)?;
    let mu: f64 = instance
        .coefficients()
        .iter()
        .zip(&tables.hafnians)
        .map(|(a, h)| a * h * h)
        .sum();
    let second = pairs.quadratic_form(instance.coefficients(), true);
    finish_variance(second, mu, second.abs())
}
