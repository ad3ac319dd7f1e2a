//! GBS-P, GBS-I and plain Monte Carlo on a single degree-`2K` slice: exact
//! targets, point estimates, variance functionals and guaranteed sample
//! sizes.

mod certificate;
mod hybrid;
mod montecarlo;
pub(crate) mod variance;

pub use certificate::{gamma, gamma_derivative, optimal_t_certificate, ScalingCertificate};
pub use hybrid::{hybrid_plan, HybridPlan, Method, SliceInput, SlicePlan};
pub use montecarlo::{
    empirical_mse, mc_estimate_haf, mc_estimate_hafsq, Estimator, GaussianSampler, MseReport,
};
pub use variance::{
    check_pair_budget, variance_gbsi, variance_gbsi_direct, variance_gbsp, variance_mc_haf,
    variance_mc_hafsq, PairTable, DEFAULT_PAIR_BUDGET,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbs::{GbsProgram, SampleTally};
use crate::hafnian::{hafnian_multiindex, sign_of, HafnianCache};
use crate::problem::ProblemInstance;

/// Which target is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    /// `mu_haf = sum a_I Haf(B_I)`, estimated by GBS-P.
    Haf,
    /// `mu_hafsq = sum a_I Haf(B_I)^2`, estimated by GBS-I.
    HafSq,
}

/// Multiplicative accuracy `eps` reached with failure probability `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracySpec {
    pub eps: f64,
    pub delta: f64,
}

impl AccuracySpec {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::invalid("eps", format!("{eps} is not in (0, 1)")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta", format!("{delta} is not in (0, 1)")));
        }
        Ok(AccuracySpec { eps, delta })
    }
}

/// Per-pattern quantities shared by every estimator on one instance.
#[derive(Debug, Clone)]
pub struct SliceTables {
    /// Unscaled `Haf(B_J)` in canonical order.
    pub hafnians: Vec<f64>,
    /// `J!`.
    pub factorials: Vec<f64>,
}

impl SliceTables {
    pub fn new(instance: &ProblemInstance, cache: &HafnianCache) -> Result<Self> {
        let b = instance.covariance();
        let hafnians = instance
            .patterns()
            .iter()
            .map(|j| hafnian_multiindex(b, j, cache))
            .collect::<Result<Vec<_>>>()?;
        let factorials = instance.patterns().iter().map(|j| j.factorial()).collect();
        Ok(SliceTables { hafnians, factorials })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `mu_haf = sum_{|I|=2K} a_I Haf(B_I)`.
pub fn mu_haf(instance: &ProblemInstance, cache: &HafnianCache) -> Result<f64> {
    let tables = SliceTables::new(instance, cache)?;
    Ok(dot(instance.coefficients(), &tables.hafnians))
}

/// `mu_hafsq = sum_{|I|=2K} a_I Haf(B_I)^2`.
pub fn mu_hafsq(instance: &ProblemInstance, cache: &HafnianCache) -> Result<f64> {
    let tables = SliceTables::new(instance, cache)?;
    Ok(instance.coefficients().iter().zip(&tables.hafnians).map(|(a, h)| a * h * h).sum())
}

/// `alpha_J = a_J t^-K sign(Haf(B_J)) sqrt(J! / d_t)`.
pub fn gbsp_weights(instance: &ProblemInstance, program: &GbsProgram, tables: &SliceTables) -> Vec<f64> {
    let k = instance.shape().k as i32;
    let t_k = program.t.powi(-k);
    instance
        .coefficients()
        .iter()
        .zip(tables.hafnians.iter().zip(&tables.factorials))
        .map(|(a, (h, f))| a * t_k * sign_of(*h) as f64 * (f / program.d_t).sqrt())
        .collect()
}

/// `w_I = I! a_I t^-2K / d_t`, the per-sample GBS-I weight.
pub fn gbsi_weights(instance: &ProblemInstance, program: &GbsProgram, tables: &SliceTables) -> Vec<f64> {
    let k = instance.shape().k as i32;
    let t_2k = program.t.powi(-2 * k);
    instance
        .coefficients()
        .iter()
        .zip(&tables.factorials)
        .map(|(a, f)| f * a * t_2k / program.d_t)
        .collect()
}

fn check_tally(instance: &ProblemInstance, tally: &SampleTally) -> Result<()> {
    if tally.counts.len() != instance.patterns().len() {
        return Err(Error::invalid("tally", "one count per degree-2K pattern is required"));
    }
    if tally.n == 0 {
        return Err(Error::invalid("tally", "empty tally"));
    }
    Ok(())
}

/// `sum_J alpha_J sqrt(S_n^(J) / n)`; OTHER draws contribute nothing.
pub fn gbsp_estimate(
    instance: &ProblemInstance,
    program: &GbsProgram,
    tally: &SampleTally,
    cache: &HafnianCache,
) -> Result<f64> {
    check_tally(instance, tally)?;
    let tables = SliceTables::new(instance, cache)?;
    Ok(gbsp_from_frequencies(&gbsp_weights(instance, program, &tables), &tally.frequencies()))
}

pub fn gbsp_from_frequencies(alpha: &[f64], freq: &[f64]) -> f64 {
    alpha.iter().zip(freq).map(|(a, f)| a * f.sqrt()).sum()
}

/// Average GBS-I weight over the draws; OTHER draws weigh 0.
pub fn gbsi_estimate(
    instance: &ProblemInstance,
    program: &GbsProgram,
    tally: &SampleTally,
    cache: &HafnianCache,
) -> Result<f64> {
    check_tally(instance, tally)?;
    let tables = SliceTables::new(instance, cache)?;
    Ok(gbsi_from_frequencies(&gbsi_weights(instance, program, &tables), &tally.frequencies()))
}

pub fn gbsi_from_frequencies(weights: &[f64], freq: &[f64]) -> f64 {
    dot(weights, freq)
}

/// Chebyshev/Markov sample size `ceil(V / (delta eps^2 mu^2))`, at least 1.
pub fn guaranteed_sample_size(v: f64, mu: f64, spec: AccuracySpec) -> Result<u64> {
    let v = v.max(0.0);
    if mu == 0.0 || mu.abs() < 1e-12 * v.sqrt() {
        return Err(Error::IllPosed { mu, sqrt_v: v.sqrt() });
    }
    let n = (v / (spec.delta * spec.eps * spec.eps * mu * mu)).ceil();
    // Saturating conversion: sizes beyond u64 are reported as u64::MAX.
    Ok((n as u64).max(1))
}

/// Targets, variances and guaranteed sizes of the GBS estimator and of
/// plain MC for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub kind: ProblemKind,
    pub mu: f64,
    pub v_gbs: f64,
    pub v_mc: f64,
    pub n_gbs: u64,
    pub n_mc: u64,
    pub t: f64,
    /// GBS-P sizes come from a leading-order MSE and hold only for large n.
    pub asymptotic: bool,
}

impl VarianceReport {
    pub fn compute(
        instance: &ProblemInstance,
        kind: ProblemKind,
        spec: AccuracySpec,
        cache: &HafnianCache,
        pair_budget: u128,
    ) -> Result<Self> {
        let program = GbsProgram::for_instance(instance)?;
        let (mu, v_gbs, v_mc) = match kind {
            ProblemKind::Haf => (
                mu_haf(instance, cache)?,
                variance_gbsp(instance, &program, cache)?,
                variance_mc_haf(instance, cache, pair_budget)?,
            ),
            ProblemKind::HafSq => (
                mu_hafsq(instance, cache)?,
                variance_gbsi(instance, &program, cache)?,
                variance_mc_hafsq(instance, cache, pair_budget)?,
            ),
        };
        Ok(VarianceReport {
            kind,
            mu,
            v_gbs,
            v_mc,
            n_gbs: guaranteed_sample_size(v_gbs, mu, spec)?,
            n_mc: guaranteed_sample_size(v_mc, mu, spec)?,
            t: program.t,
            asymptotic: kind == ProblemKind::Haf,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbs::build_degree_sampler;
    use crate::linalg::SymmetricMatrix;
    use crate::problem::{sample_problem_instance, ProblemShape};
    use crate::rng::RngStream;

    fn two_mode_instance(a: [f64; 3]) -> ProblemInstance {
        let b = SymmetricMatrix::from_rows(&[vec![0.55, -0.2], vec![-0.2, 0.35]]).unwrap();
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        ProblemInstance::new(
            ProblemShape::new(2, 1).unwrap(),
            a.iter().map(|x| x / norm).collect(),
            b,
        )
        .unwrap()
    }

    #[test]
    fn accuracy_spec_bounds() {
        assert!(AccuracySpec::new(0.1, 0.1).is_ok());
        assert!(AccuracySpec::new(0.0, 0.1).is_err());
        assert!(AccuracySpec::new(0.1, 1.0).is_err());
    }

    #[test]
    fn targets_small_cases() {
        let cache = HafnianCache::new();
        let inst = two_mode_instance([0.3, -0.5, 0.8]);
        let a = inst.coefficients();
        let b = inst.covariance();
        // Canonical order (0,2), (1,1), (2,0).
        let expect = a[0] * b.get(1, 1) + a[1] * b.get(0, 1) + a[2] * b.get(0, 0);
        assert!((mu_haf(&inst, &cache).unwrap() - expect).abs() < 1e-15);

        let one_hot = two_mode_instance([0.0, 1.0, 0.0]);
        assert_eq!(mu_haf(&one_hot, &cache).unwrap(), -0.2);
        assert!((mu_hafsq(&one_hot, &cache).unwrap() - 0.04).abs() < 1e-16);

        let positive = two_mode_instance([0.2, 0.5, 0.1]);
        assert!(mu_hafsq(&positive, &cache).unwrap() >= 0.0);
    }

    #[test]
    fn population_limit_recovers_targets() {
        let cache = HafnianCache::new();
        let mut rng = RngStream::new(31);
        for shape in [ProblemShape::new(2, 1).unwrap(), ProblemShape::new(3, 2).unwrap()] {
            for _ in 0..5 {
                let (inst, _) = sample_problem_instance(&mut rng, shape).unwrap();
                let program = GbsProgram::for_instance(&inst).unwrap();
                let sampler = build_degree_sampler(&program, shape.k, &cache).unwrap();
                let tables = SliceTables::new(&inst, &cache).unwrap();
                let p = &sampler.probabilities;
                let via_p = gbsp_from_frequencies(&gbsp_weights(&inst, &program, &tables), p);
                let mu = mu_haf(&inst, &cache).unwrap();
                assert!((via_p - mu).abs() <= 1e-10 * mu.abs().max(1e-3));
                let via_i = gbsi_from_frequencies(&gbsi_weights(&inst, &program, &tables), p);
                let mu2 = mu_hafsq(&inst, &cache).unwrap();
                assert!((via_i - mu2).abs() <= 1e-12 * mu2.abs().max(1e-6));
            }
        }
    }

    #[test]
    fn all_other_tally_gives_zero() {
        let cache = HafnianCache::new();
        let inst = two_mode_instance([0.3, -0.5, 0.8]);
        let program = GbsProgram::for_instance(&inst).unwrap();
        let tally = SampleTally { n: 10, counts: vec![0, 0, 0], other_count: 10 };
        assert_eq!(gbsp_estimate(&inst, &program, &tally, &cache).unwrap(), 0.0);
        assert_eq!(gbsi_estimate(&inst, &program, &tally, &cache).unwrap(), 0.0);
        let bad = SampleTally { n: 10, counts: vec![0, 0], other_count: 10 };
        assert!(gbsp_estimate(&inst, &program, &bad, &cache).is_err());
    }

    #[test]
    fn sample_size_examples() {
        let spec = AccuracySpec::new(0.1, 0.1).unwrap();
        assert_eq!(guaranteed_sample_size(0.0, 1.0, spec).unwrap(), 1);
        assert_eq!(guaranteed_sample_size(1.0, 1.0, spec).unwrap(), 1000);
        assert!(matches!(guaranteed_sample_size(1.0, 0.0, spec), Err(Error::IllPosed { .. })));
        assert!(matches!(guaranteed_sample_size(1.0, 1e-13, spec), Err(Error::IllPosed { .. })));
    }

    #[test]
    fn negating_coefficients() {
        let cache = HafnianCache::new();
        let spec = AccuracySpec::new(0.2, 0.1).unwrap();
        let mut rng = RngStream::new(41);
        let (inst, _) = sample_problem_instance(&mut rng, ProblemShape::new(3, 1).unwrap()).unwrap();
        let neg = inst.with_coefficients(inst.coefficients().iter().map(|a| -a).collect()).unwrap();
        assert_eq!(mu_haf(&neg, &cache).unwrap(), -mu_haf(&inst, &cache).unwrap());
        assert_eq!(mu_hafsq(&neg, &cache).unwrap(), -mu_hafsq(&inst, &cache).unwrap());
        for kind in [ProblemKind::Haf, ProblemKind::HafSq] {
            let r1 = VarianceReport::compute(&inst, kind, spec, &cache, DEFAULT_PAIR_BUDGET).unwrap();
            let r2 = VarianceReport::compute(&neg, kind, spec, &cache, DEFAULT_PAIR_BUDGET).unwrap();
            assert!((r1.v_gbs - r2.v_gbs).abs() <= 1e-12 * r1.v_gbs.abs().max(1e-300));
            assert!((r1.v_mc - r2.v_mc).abs() <= 1e-12 * r1.v_mc.abs().max(1e-300));
            assert_eq!(r1.n_gbs, r2.n_gbs);
            assert_eq!(r1.n_mc, r2.n_mc);
        }
    }

    #[test]
    fn size_order_follows_variance_order() {
        let cache = HafnianCache::new();
        let mut rng = RngStream::new(43);
        for _ in 0..20 {
            let (inst, _) = sample_problem_instance(&mut rng, ProblemShape::new(2, 2).unwrap()).unwrap();
            for (eps, delta) in [(0.01, 0.05), (0.3, 0.5), (0.9, 0.9)] {
                let spec = AccuracySpec::new(eps, delta).unwrap();
                for kind in [ProblemKind::Haf, ProblemKind::HafSq] {
                    let r = VarianceReport::compute(&inst, kind, spec, &cache, DEFAULT_PAIR_BUDGET).unwrap();
                    // ceil() can only merge, never invert, the order.
                    if r.v_mc > r.v_gbs {
                        assert!(r.n_mc >= r.n_gbs);
                    } else {
                        assert!(r.n_mc <= r.n_gbs);
                    }
                    assert_eq!(r.asymptotic, kind == ProblemKind::Haf);
                }
            }
        }
    }
}
