use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbs::{build_degree_sampler, draw_tally, GbsProgram};
use crate::hafnian::HafnianCache;
use crate::linalg::EigenDecomposition;
use crate::multiindex::MultiIndex;
use crate::problem::ProblemInstance;
use crate::rng::RngStream;

use super::{
    dot, gbsi_from_frequencies, gbsi_weights, gbsp_from_frequencies, gbsp_weights, variance_gbsi,
    variance_gbsp, variance_mc_haf, variance_mc_hafsq, SliceTables, DEFAULT_PAIR_BUDGET,
};

/// Draws `X ~ N(0, B)` as `U diag(sqrt(lambda)) z`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    factor: Vec<Vec<f64>>,
}

impl GaussianSampler {
    pub fn new(eigen: &EigenDecomposition) -> Self {
        let roots: Vec<f64> = eigen.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
        let factor = eigen
            .basis
            .iter()
            .map(|row| row.iter().zip(&roots).map(|(u, r)| u * r).collect())
            .collect();
        GaussianSampler { factor }
    }

    pub fn dim(&self) -> usize {
        self.factor.len()
    }

    pub fn draw_into(&self, rng: &mut RngStream, z: &mut [f64], out: &mut [f64]) {
        for zi in z.iter_mut() {
            *zi = rng.normal();
        }
        for (o, row) in out.iter_mut().zip(&self.factor) {
            *o = dot(row, z);
        }
    }
}

/// Evaluates `sum_I a_I x^I` over a fixed pattern list.
struct MonomialEvaluator<'a> {
    patterns: &'a [MultiIndex],
    coefficients: &'a [f64],
    max_power: usize,
    powers: Vec<f64>,
}

impl<'a> MonomialEvaluator<'a> {
    fn new(instance: &'a ProblemInstance) -> Self {
        let max_power = 2 * instance.shape().k as usize;
        MonomialEvaluator {
            patterns: instance.patterns(),
            coefficients: instance.coefficients(),
            max_power,
            powers: vec![1.0; instance.shape().n * (max_power + 1)],
        }
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        let stride = self.max_power + 1;
        for (i, &xi) in x.iter().enumerate() {
            let row = &mut self.powers[i * stride..(i + 1) * stride];
            for e in 1..stride {
                row[e] = row[e - 1] * xi;
            }
        }
        self.patterns
            .iter()
            .zip(self.coefficients)
            .map(|(p, a)| {
                a * p
                    .entries()
                    .iter()
                    .enumerate()
                    .map(|(i, &e)| self.powers[i * stride + e as usize])
                    .product::<f64>()
            })
            .sum()
    }
}

fn mc_mean(instance: &ProblemInstance, rng: &mut RngStream, n: u64, squared: bool) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "at least one draw is required"));
    }
    let sampler = GaussianSampler::new(instance.eigen());
    let dim = sampler.dim();
    let mut eval = MonomialEvaluator::new(instance);
    let (mut z, mut x, mut y) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut total = 0.0;
    for _ in 0..n {
        sampler.draw_into(rng, &mut z, &mut x);
        if squared {
            // X^I Y^I = (X o Y)^I.
            sampler.draw_into(rng, &mut z, &mut y);
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi *= yi;
            }
        }
        total += eval.eval(&x);
    }
    Ok(total / n as f64)
}

/// Sample mean of `sum a_I X^I` over `n` draws `X ~ N(0, B)`.
pub fn mc_estimate_haf(instance: &ProblemInstance, rng: &mut RngStream, n: u64) -> Result<f64> {
    mc_mean(instance, rng, n, false)
}

/// Sample mean of `sum a_I X^I Y^I` over `n` independent pairs.
pub fn mc_estimate_hafsq(instance: &ProblemInstance, rng: &mut RngStream, n: u64) -> Result<f64> {
    mc_mean(instance, rng, n, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    GbsP,
    GbsI,
    McHaf,
    McHafSq,
}

impl Estimator {
    pub fn targets_hafsq(self) -> bool {
        matches!(self, Estimator::GbsI | Estimator::McHafSq)
    }
}

/// Replicated run of one estimator at a fixed sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub estimator: Estimator,
    pub n: u64,
    pub replicas: usize,
    pub target: f64,
    pub mean: f64,
    pub mse: f64,
    /// `V / n` from the closed-form variance.
    pub predicted_mse: f64,
    /// Replicas with relative error above `eps`, if one was given.
    pub failures: usize,
    pub estimates: Vec<f64>,
}

/// Runs `replicas` independent estimates on substreams of `rng` (so the
/// result does not depend on the thread count).
pub fn empirical_mse(
    instance: &ProblemInstance,
    estimator: Estimator,
    n: u64,
    replicas: usize,
    rng: &RngStream,
    cache: &HafnianCache,
    eps: Option<f64>,
) -> Result<MseReport> {
    if replicas == 0 {
        return Err(Error::invalid("replicas", "at least one replica is required"));
    }
    let tables = SliceTables::new(instance, cache)?;
    let target = if estimator.targets_hafsq() {
        instance.coefficients().iter().zip(&tables.hafnians).map(|(a, h)| a * h * h).sum()
    } else {
        dot(instance.coefficients(), &tables.hafnians)
    };
    let k = instance.shape().k;
    let (gbs, variance) = match estimator {
        Estimator::GbsP | Estimator::GbsI => {
            let program = GbsProgram::for_instance(instance)?;
            let sampler = build_degree_sampler(&program, k, cache)?;
            let (weights, v) = if estimator == Estimator::GbsP {
                (gbsp_weights(instance, &program, &tables), variance_gbsp(instance, &program, cache)?)
            } else {
                (gbsi_weights(instance, &program, &tables), variance_gbsi(instance, &program, cache)?)
            };
            (Some((sampler, weights)), v)
        }
        Estimator::McHaf => (None, variance_mc_haf(instance, cache, DEFAULT_PAIR_BUDGET)?),
        Estimator::McHafSq => (None, variance_mc_hafsq(instance, cache, DEFAULT_PAIR_BUDGET)?),
    };

    let estimates = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng.substream(r as u64);
            match (&gbs, estimator) {
                (Some((sampler, w)), Estimator::GbsP) => {
                    let tally = draw_tally(sampler, &mut stream, n)?;
                    Ok(gbsp_from_frequencies(w, &tally.frequencies()))
                }
                (Some((sampler, w)), _) => {
                    let tally = draw_tally(sampler, &mut stream, n)?;
                    Ok(gbsi_from_frequencies(w, &tally.frequencies()))
                }
                (None, Estimator::McHaf) => mc_estimate_haf(instance, &mut stream, n),
                _ => mc_estimate_hafsq(instance, &mut stream, n),
            }
        })
        .collect::<Result<Vec<f64>>>()?;

    let count = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / count;
    let mse = estimates.iter().map(|e| (e - target).powi(2)).sum::<f64>() / count;
    let failures = eps.map_or(0, |eps| {
        estimates.iter().filter(|e| (*e - target).abs() > eps * target.abs()).count()
    });
    Ok(MseReport {
        estimator,
        n,
        replicas,
        target,
        mean,
        mse,
        predicted_mse: variance / n as f64,
        failures,
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{mu_haf, mu_hafsq};
    use crate::problem::{sample_problem_instance, ProblemShape};

    fn within_se(values: &[f64], target: f64, k: f64) -> bool {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean - target).abs() <= k * (var / n).sqrt()
    }

    #[test]
    fn gaussian_sampler_covariance() {
        let mut rng = RngStream::new(5);
        let (inst, _) = sample_problem_instance(&mut rng, ProblemShape::new(3, 1).unwrap()).unwrap();
        let s = GaussianSampler::new(inst.eigen());
        let draws = 200_000;
        let mut acc = [[0.0; 3]; 3];
        let (mut z, mut x) = ([0.0; 3], [0.0; 3]);
        for _ in 0..draws {
            s.draw_into(&mut rng, &mut z, &mut x);
            for i in 0..3 {
                for j in 0..3 {
                    acc[i][j] += x[i] * x[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let est = acc[i][j] / draws as f64;
                assert!((est - inst.covariance().get(i, j)).abs() < 0.01);
            }
        }
    }

    #[test]
    fn mc_means_are_unbiased() {
        let cache = HafnianCache::new();
        let mut rng = RngStream::new(6);
        let (inst, _) = sample_problem_instance(&mut rng, ProblemShape::new(2, 1).unwrap()).unwrap();
        let mu = mu_haf(&inst, &cache).unwrap();
        let mu2 = mu_hafsq(&inst, &cache).unwrap();
        let a: Vec<f64> = (0..400).map(|r| mc_estimate_haf(&inst, &mut rng.substream(r), 500).unwrap()).collect();
        let b: Vec<f64> =
            (0..400).map(|r| mc_estimate_hafsq(&inst, &mut rng.substream(1000 + r), 500).unwrap()).collect();
        assert!(within_se(&a, mu, 4.0));
        assert!(within_se(&b, mu2, 4.0));
    }

    #[test]
    fn replicated_runs_match_closed_forms() {
        let cache = HafnianCache::new();
        let mut rng = RngStream::new(9);
        let (inst, _) = sample_problem_instance(&mut rng, ProblemShape::new(2, 2).unwrap()).unwrap();
        for est in [Estimator::GbsI, Estimator::McHaf, Estimator::McHafSq] {
            let r = empirical_mse(&inst, est, 200, 2000, &rng.substream(77), &cache, None).unwrap();
            // Ratio of an MSE estimate to its expectation; loose band for 2000 replicas.
            let ratio = r.mse / r.predicted_mse;
            assert!((0.8..1.25).contains(&ratio), "{est:?}: ratio {ratio}");
        }
    }

    #[test]
    fn replicas_are_schedule_independent() {
        let cache = HafnianCache::new();
        let mut rng = RngStream::new(10);
        let (inst, _) = sample_problem_instance(&mut rng, ProblemShape::new(2, 1).unwrap()).unwrap();
        let base = RngStream::new(11);
        let a = empirical_mse(&inst, Estimator::GbsP, 100, 16, &base, &cache, None).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool
            .install(|| empirical_mse(&inst, Estimator::GbsP, 100, 16, &base, &cache, None))
            .unwrap();
        assert_eq!(a.estimates, b.estimates);
    }
}
