//! The GBS output distribution `P_tB(I) = d_t / I! * Haf((tB)_I)^2`.
//!
//! Samples outside degree `2K` carry no weight in any estimator here
//! (`a_I = 0` off the slice), so the sampler keeps the degree-`2K` patterns
//! explicitly and lumps everything else into a single OTHER outcome.

use crate::error::{Error, Result};
use crate::hafnian::{hafnian_multiindex, HafnianCache};
use crate::linalg::SymmetricMatrix;
use crate::multiindex::{enumerate_degree, MultiIndex};
use crate::problem::ProblemInstance;
use crate::rng::RngStream;

/// Relative tolerance on the mean photon number after tuning.
pub const SCALING_TOLERANCE: f64 = 1e-10;

const SCALING_GRID: usize = 64;
const BISECTION_STEPS: usize = 400;

fn spectral_radius(eigenvalues: &[f64]) -> f64 {
    eigenvalues.iter().fold(0.0, |m: f64, l| m.max(l.abs()))
}

fn check_domain(eigenvalues: &[f64], t: f64) -> Result<()> {
    let rho = spectral_radius(eigenvalues);
    if !(t >= 0.0) || t * rho >= 1.0 {
        return Err(Error::ScalingDomain { t, limit: 1.0 / rho });
    }
    Ok(())
}

/// `m_tB = sum_n t^2 l_n^2 / (1 - t^2 l_n^2)`.
pub fn mean_photon_number(eigenvalues: &[f64], t: f64) -> Result<f64> {
    check_domain(eigenvalues, t)?;
    Ok(eigenvalues
        .iter()
        .map(|l| {
            let x = (t * l).powi(2);
            x / (1.0 - x)
        })
        .sum())
}

/// `d_t = prod_n sqrt(1 - t^2 l_n^2)`.
pub fn normalization(eigenvalues: &[f64], t: f64) -> Result<f64> {
    check_domain(eigenvalues, t)?;
    Ok(eigenvalues.iter().map(|l| (1.0 - (t * l).powi(2)).sqrt()).product())
}

/// The `t` in `(0, 1/lambda_1)` with `m_tB = target`: a coarse grid
/// brackets the root, then bisection refines it.
pub fn solve_scaling(eigenvalues: &[f64], target: f64) -> Result<f64> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::invalid("target mean photon number", format!("{target} is not positive")));
    }
    let rho = spectral_radius(eigenvalues);
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid("eigenvalues", "need at least one nonzero eigenvalue"));
    }
    let upper = 1.0 / rho;
    let m = |t: f64| mean_photon_number(eigenvalues, t);

    let mut lo = 0.0;
    let mut hi = upper;
    for i in 1..SCALING_GRID {
        let t = upper * i as f64 / SCALING_GRID as f64;
        if m(t)? >= target {
            hi = t;
            break;
        }
        lo = t;
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let value = m(mid)?;
        if (value - target).abs() <= SCALING_TOLERANCE * target {
            return Ok(mid);
        }
        if value < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (m(lo)? - target).abs() <= SCALING_TOLERANCE * target {
        return Ok(lo);
    }
    Err(Error::NonConvergence("mean photon number bisection"))
}

/// `(2k)! / (4^k (k!)^2)` for `k = 0..=max`.
fn central_binomial_weights(max: u32) -> Vec<f64> {
    let mut w = Vec::with_capacity(max as usize + 1);
    w.push(1.0);
    for k in 1..=max {
        let prev = w[k as usize - 1];
        w.push(prev * (2 * k - 1) as f64 / (2 * k) as f64);
    }
    w
}

/// Total probability of degree `2K` in closed form:
/// `d_t * sum_{k_1+..+k_N=K} prod_l (2k_l)!/(4^k_l (k_l!)^2) (t l_l)^(2 k_l)`.
pub fn degree_mass_closed_form(eigenvalues: &[f64], t: f64, k: u32) -> Result<f64> {
    let d_t = normalization(eigenvalues, t)?;
    let w = central_binomial_weights(k);
    // Coefficients of x^0..x^K in prod_l sum_j w_j (t l)^(2j) x^j.
    let mut poly = vec![0.0; k as usize + 1];
    poly[0] = 1.0;
    for l in eigenvalues {
        let mu2 = (t * l).powi(2);
        let factor: Vec<f64> = (0..=k).map(|j| w[j as usize] * mu2.powi(j as i32)).collect();
        let mut next = vec![0.0; k as usize + 1];
        for (a, pa) in poly.iter().enumerate() {
            for (b, fb) in factor.iter().enumerate().take(k as usize + 1 - a) {
                next[a + b] += pa * fb;
            }
        }
        poly = next;
    }
    Ok(d_t * poly[k as usize])
}

/// `B` with the scaling tuned so that the mean photon number is `2K`.
#[derive(Debug, Clone)]
pub struct GbsProgram {
    pub covariance: SymmetricMatrix,
    pub eigenvalues: Vec<f64>,
    pub t: f64,
    pub d_t: f64,
    pub target_mean_photons: f64,
}

impl GbsProgram {
    pub fn tune(covariance: SymmetricMatrix, eigenvalues: Vec<f64>, k: u32) -> Result<Self> {
        let target = 2.0 * k as f64;
        let t = solve_scaling(&eigenvalues, target)?;
        Self::with_scaling(covariance, eigenvalues, t, target)
    }

    pub fn for_instance(instance: &ProblemInstance) -> Result<Self> {
        Self::tune(
            instance.covariance().clone(),
            instance.eigenvalues().to_vec(),
            instance.shape().k,
        )
    }

    /// A program at an arbitrary scaling (no tuning).
    pub fn with_scaling(
        covariance: SymmetricMatrix,
        eigenvalues: Vec<f64>,
        t: f64,
        target_mean_photons: f64,
    ) -> Result<Self> {
        let d_t = normalization(&eigenvalues, t)?;
        Ok(GbsProgram { covariance, eigenvalues, t, d_t, target_mean_photons })
    }

    pub fn mean_photon_number(&self) -> f64 {
        mean_photon_number(&self.eigenvalues, self.t).expect("t validated at construction")
    }
}

/// Exact categorical law of a GBS run restricted to degree `2K`, plus OTHER.
#[derive(Debug, Clone)]
pub struct DegreeSampler {
    pub patterns: Vec<MultiIndex>,
    pub probabilities: Vec<f64>,
    pub other_mass: f64,
    cumulative: Vec<f64>,
}

impl DegreeSampler {
    pub fn from_probabilities(patterns: Vec<MultiIndex>, probabilities: Vec<f64>) -> Result<Self> {
        if patterns.len() != probabilities.len() {
            return Err(Error::invalid("probabilities", "one per pattern"));
        }
        if probabilities.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid("probabilities", "must be nonnegative"));
        }
        let mut acc = 0.0;
        let cumulative: Vec<f64> = probabilities
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let other_mass = 1.0 - acc;
        if other_mass < -1e-10 {
            return Err(Error::Internal(format!("degree mass {acc} exceeds 1")));
        }
        Ok(DegreeSampler { patterns, probabilities, other_mass: other_mass.max(0.0), cumulative })
    }

    pub fn degree_mass(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Pattern position for a uniform draw, or `None` for OTHER.
    fn locate(&self, u: f64) -> Option<usize> {
        let pos = self.cumulative.partition_point(|&c| c <= u);
        (pos < self.cumulative.len()).then_some(pos)
    }
}

/// `p_I = d_t / I! * t^(2K) * Haf(B_I)^2` over `|I| = 2K`.
pub fn build_degree_sampler(program: &GbsProgram, k: u32, cache: &HafnianCache) -> Result<DegreeSampler> {
    let patterns = enumerate_degree(program.covariance.dim(), 2 * k);
    let t2k = program.t.powi(2 * k as i32);
    let probabilities = patterns
        .iter()
        .map(|i| {
            let h = hafnian_multiindex(&program.covariance, i, cache)?;
            Ok(program.d_t / i.factorial() * t2k * h * h)
        })
        .collect::<Result<Vec<_>>>()?;
    DegreeSampler::from_probabilities(patterns, probabilities)
}

/// Occurrence counts of each degree-`2K` pattern among `n` draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleTally {
    pub n: u64,
    pub counts: Vec<u64>,
    pub other_count: u64,
}

impl SampleTally {
    /// Empirical frequency `S_n^(J) / n` of each pattern.
    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.n as f64).collect()
    }
}

/// `n` independent draws by inverse CDF over the canonical pattern order.
pub fn draw_tally(sampler: &DegreeSampler, rng: &mut RngStream, n: u64) -> Result<SampleTally> {
    if n == 0 {
        return Err(Error::invalid("n", "at least one draw is required"));
    }
    let mut counts = vec![0u64; sampler.patterns.len()];
    let mut other_count = 0;
    for _ in 0..n {
        match sampler.locate(rng.uniform()) {
            Some(p) => counts[p] += 1,
            None => other_count += 1,
        }
    }
    Ok(SampleTally { n, counts, other_count })
}
