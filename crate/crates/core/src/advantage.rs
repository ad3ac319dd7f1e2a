//! Monte Carlo estimate of the share of the problem space in which a GBS
//! estimator needs fewer guaranteed samples than plain MC, plus statistics
//! of the efficiency ratio `V_mc / V_gbs`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::variance::finish_variance;
use crate::estimators::{check_pair_budget, PairTable, SliceTables, DEFAULT_PAIR_BUDGET};
use crate::gbs::GbsProgram;
use crate::hafnian::HafnianCache;
use crate::linalg::{sample_unit_sphere, vandermonde_abs};
use crate::problem::{sample_covariance, ProblemInstance, ProblemShape};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvantageMode {
    /// GBS-P against MC on `mu_haf`.
    #[serde(alias = "gbsp")]
    GbspVsMcHaf,
    /// GBS-I against MC on `mu_hafsq`.
    #[serde(alias = "gbsi")]
    GbsiVsMcHafSq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `sum |Delta| H / sum |Delta|`.
    SelfNormalized,
    /// `(1/(n1 n2)) sum |Delta| H`, times `c_N = 1 / E|Delta|` estimated
    /// from a separate stream of spectra.
    RawTimesCn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageConfig {
    pub shape: ProblemShape,
    pub mode: AdvantageMode,
    pub n1: usize,
    pub n2: usize,
    pub seed: u64,
    /// Largest admissible `sigma^2` pair count.
    pub budget: u128,
    pub normalization: Normalization,
    /// Spectra drawn to estimate `c_N` in raw mode.
    pub cn_draws: usize,
}

impl AdvantageConfig {
    pub fn new(shape: ProblemShape, mode: AdvantageMode, n1: usize, n2: usize, seed: u64) -> Self {
        AdvantageConfig {
            shape,
            mode,
            n1,
            n2,
            seed,
            budget: DEFAULT_PAIR_BUDGET,
            normalization: Normalization::SelfNormalized,
            cn_draws: 100_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 {
            return Err(Error::invalid("n1", "must be at least 1"));
        }
        if self.n2 == 0 {
            return Err(Error::invalid("n2", "must be at least 1"));
        }
        if self.normalization == Normalization::RawTimesCn && self.cn_draws == 0 {
            return Err(Error::invalid("cn_draws", "must be at least 1 in raw mode"));
        }
        Ok(())
    }
}

/// One `(B, a)` draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub l: usize,
    pub m: usize,
    pub vandermonde: f64,
    pub v_mc: f64,
    pub v_gbs: f64,
    /// 1 iff `v_mc >= v_gbs`.
    pub h: u8,
    pub ratio: f64,
    /// Ill-posed target (`mu` numerically zero); excluded from the estimate.
    pub skipped: bool,
}

impl TrialRecord {
    pub fn indicator(v_mc: f64, v_gbs: f64) -> u8 {
        u8::from(v_mc >= v_gbs)
    }
}

/// Everything about one covariance draw that the inner coefficient draws
/// share.
#[derive(Debug, Clone)]
pub struct MatrixTrial {
    pub mode: AdvantageMode,
    pub vandermonde: f64,
    pub instance_shape: ProblemShape,
    pub t: f64,
    pub d_t: f64,
    hafnians: Vec<f64>,
    factorials: Vec<f64>,
    pairs: PairTable,
}

impl MatrixTrial {
    /// Draws a Haar basis and a uniform spectrum, tunes `t` and computes all
    /// hafnians the variances need.
    pub fn draw(
        rng: &mut RngStream,
        shape: ProblemShape,
        mode: AdvantageMode,
        cache: &HafnianCache,
        budget: u128,
    ) -> Result<Self> {
        check_pair_budget(shape, budget)?;
        let (covariance, eigen, vandermonde) = sample_covariance(rng, shape.n);
        let sigma = shape.sigma() as usize;
        // Placeholder coefficients; only B matters for the shared tables.
        let mut a = vec![0.0; sigma];
        a[0] = 1.0;
        let instance = ProblemInstance::with_eigen(shape, a, covariance, eigen)?;
        let program = GbsProgram::for_instance(&instance)?;
        let tables = SliceTables::new(&instance, cache)?;
        let pairs = PairTable::new(&instance, cache, budget)?;
        Ok(MatrixTrial {
            mode,
            vandermonde,
            instance_shape: shape,
            t: program.t,
            d_t: program.d_t,
            hafnians: tables.hafnians,
            factorials: tables.factorials,
            pairs,
        })
    }

    /// `(mu, V_mc, V_gbs)` for coefficients `a`.
    pub fn moments(&self, a: &[f64]) -> Result<(f64, f64, f64)> {
        let k = self.instance_shape.k as i32;
        let c = self.t.powi(-2 * k) / self.d_t;
        match self.mode {
            AdvantageMode::GbspVsMcHaf => {
                let mu: f64 = a.iter().zip(&self.hafnians).map(|(a, h)| a * h).sum();
                let s = c * a.iter().zip(&self.factorials).map(|(a, f)| a * a * f).sum::<f64>();
                let v_gbs = 0.25 * finish_variance(s, mu, s)?;
                let m2 = self.pairs.quadratic_form(a, false);
                Ok((mu, finish_variance(m2, mu, m2.abs())?, v_gbs))
            }
            AdvantageMode::GbsiVsMcHafSq => {
                let mu: f64 = a.iter().zip(&self.hafnians).map(|(a, h)| a * h * h).sum();
                let s = c * a
                    .iter()
                    .zip(self.hafnians.iter().zip(&self.factorials))
                    .map(|(a, (h, f))| a * a * f * h * h)
                    .sum::<f64>();
                let v_gbs = finish_variance(s, mu, s)?;
                let m2 = self.pairs.quadratic_form(a, true);
                Ok((mu, finish_variance(m2, mu, m2.abs())?, v_gbs))
            }
        }
    }

    pub fn record(&self, l: usize, m: usize, a: &[f64]) -> Result<TrialRecord> {
        let (mu, v_mc, v_gbs) = self.moments(a)?;
        let skipped = mu == 0.0 || mu.abs() < 1e-12 * v_mc.max(v_gbs).sqrt();
        Ok(TrialRecord {
            l,
            m,
            vandermonde: self.vandermonde,
            v_mc,
            v_gbs,
            h: TrialRecord::indicator(v_mc, v_gbs),
            ratio: v_mc / v_gbs,
            skipped,
        })
    }
}

/// A single `(B, a)` draw: one covariance, then one coefficient vector.
pub fn advantage_trial(
    rng: &mut RngStream,
    shape: ProblemShape,
    mode: AdvantageMode,
    cache: &HafnianCache,
    budget: u128,
) -> Result<TrialRecord> {
    let trial = MatrixTrial::draw(rng, shape, mode, cache, budget)?;
    let a = sample_unit_sphere(rng, shape.sigma() as usize);
    trial.record(0, 0, &a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageResult {
    pub percentage: f64,
    pub stderr: f64,
    pub records: Vec<TrialRecord>,
    /// Running estimate after each outer draw; the last entry is `percentage`.
    pub trace: Vec<f64>,
    pub skipped: usize,
    /// `c_N` estimate used in raw mode.
    pub cn: Option<f64>,
}

/// Per-outer-draw sums: `sum |Delta| H`, `|Delta| * kept` and `kept`.
#[derive(Debug, Clone, Copy, Default)]
struct OuterSums {
    num: f64,
    den: f64,
    kept: f64,
}

fn aggregate(sums: &[OuterSums], normalization: Normalization, cn: f64) -> (Vec<f64>, f64) {
    let ratio = |num: f64, den: f64, kept: f64| -> f64 {
        let v = match normalization {
            Normalization::SelfNormalized => {
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            }
            Normalization::RawTimesCn => {
                if kept > 0.0 {
                    num / kept * cn
                } else {
                    0.0
                }
            }
        };
        v.clamp(0.0, 1.0)
    };

    let mut trace = Vec::with_capacity(sums.len());
    let (mut num, mut den, mut kept) = (0.0, 0.0, 0.0);
    for s in sums {
        num += s.num;
        den += s.den;
        kept += s.kept;
        trace.push(ratio(num, den, kept));
    }

    // Delete-one jackknife over outer draws.
    let count = sums.len();
    let stderr = if count < 2 {
        0.0
    } else {
        let loo: Vec<f64> =
            sums.iter().map(|s| ratio(num - s.num, den - s.den, kept - s.kept)).collect();
        let mean = loo.iter().sum::<f64>() / count as f64;
        let ss: f64 = loo.iter().map(|x| (x - mean).powi(2)).sum();
        ((count - 1) as f64 / count as f64 * ss).sqrt()
    };
    (trace, stderr)
}

/// `1 / mean |Delta(lambda)|` over uniform spectra in `(0,1)^N`.
pub fn estimate_cn(rng: &mut RngStream, n: usize, draws: usize) -> f64 {
    let total: f64 = (0..draws)
        .map(|_| {
            let lambda: Vec<f64> = (0..n).map(|_| rng.open01()).collect();
            vandermonde_abs(&lambda)
        })
        .sum();
    draws as f64 / total
}

fn run_outer(config: &AdvantageConfig, master: &RngStream, l: usize) -> Result<Vec<TrialRecord>> {
    let mut rng = master.substream(l as u64);
    // Each matrix is new, so a private cache keeps memory bounded.
    let cache = HafnianCache::new();
    let trial = MatrixTrial::draw(&mut rng, config.shape, config.mode, &cache, config.budget)?;
    let sigma = config.shape.sigma() as usize;
    (0..config.n2)
        .map(|m| {
            let a = sample_unit_sphere(&mut rng, sigma);
            trial.record(l, m, &a)
        })
        .collect()
}

/// Estimates the percentage from `n1` covariance draws with `n2`
/// coefficient draws each. `indicator` may override `H` (used by tests);
/// records always carry the true indicator.
pub fn estimate_percentage_with(
    config: &AdvantageConfig,
    indicator: impl Fn(&TrialRecord) -> u8 + Sync,
) -> Result<AdvantageResult> {
    config.validate()?;
    check_pair_budget(config.shape, config.budget)?;
    let master = RngStream::new(config.seed);
    let per_outer = (0..config.n1)
        .into_par_iter()
        .map(|l| run_outer(config, &master, l))
        .collect::<Result<Vec<_>>>()?;

    let sums: Vec<OuterSums> = per_outer
        .iter()
        .map(|records| {
            records.iter().filter(|r| !r.skipped).fold(OuterSums::default(), |acc, r| OuterSums {
                num: acc.num + r.vandermonde * f64::from(indicator(r)),
                den: acc.den + r.vandermonde,
                kept: acc.kept + 1.0,
            })
        })
        .collect();
    let records: Vec<TrialRecord> = per_outer.into_iter().flatten().collect();
    let skipped = records.iter().filter(|r| r.skipped).count();
    if skipped == records.len() {
        return Err(Error::invalid("trials", "every trial was ill-posed"));
    }
    let cn = match config.normalization {
        Normalization::SelfNormalized => None,
        Normalization::RawTimesCn => {
            let mut side = master.substream(u64::MAX);
            Some(estimate_cn(&mut side, config.shape.n, config.cn_draws))
        }
    };
    let (trace, stderr) = aggregate(&sums, config.normalization, cn.unwrap_or(1.0));
    let percentage = *trace.last().expect("n1 >= 1");
    Ok(AdvantageResult { percentage, stderr, records, trace, skipped, cn })
}

pub fn estimate_percentage(config: &AdvantageConfig) -> Result<AdvantageResult> {
    estimate_percentage_with(config, |r| r.h)
}

/// Lower edge of the first and upper edge of the last regular log10 bin.
pub const LOG_BIN_MIN: i32 = -4;
pub const LOG_BIN_MAX: i32 = 12;

/// Counts per unit-width log10 bin `[b, b+1)` for `b` in `-4..12`, plus
/// underflow and overflow.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHistogram {
    pub underflow: u64,
    pub bins: Vec<u64>,
    pub overflow: u64,
}

impl LogHistogram {
    fn new() -> Self {
        LogHistogram { underflow: 0, bins: vec![0; (LOG_BIN_MAX - LOG_BIN_MIN) as usize], overflow: 0 }
    }

    fn add(&mut self, log_ratio: f64) {
        if log_ratio.is_nan() || log_ratio < LOG_BIN_MIN as f64 {
            self.underflow += 1;
        } else if log_ratio >= LOG_BIN_MAX as f64 {
            self.overflow += 1;
        } else {
            self.bins[(log_ratio.floor() as i32 - LOG_BIN_MIN) as usize] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.underflow + self.overflow + self.bins.iter().sum::<u64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub count: usize,
    /// log10 ratio at 0%, 10%, ..., 100%.
    pub deciles: Vec<f64>,
    pub median_log10: f64,
    pub all: LogHistogram,
    pub advantage: LogHistogram,
    pub no_advantage: LogHistogram,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Deciles and log10 histograms of `V_mc / V_gbs` over non-skipped records.
pub fn efficiency_ratio_summary(records: &[TrialRecord]) -> Result<RatioSummary> {
    let kept: Vec<&TrialRecord> = records.iter().filter(|r| !r.skipped).collect();
    if kept.is_empty() {
        return Err(Error::invalid("records", "no usable records"));
    }
    let mut all = LogHistogram::new();
    let mut advantage = LogHistogram::new();
    let mut no_advantage = LogHistogram::new();
    let mut logs = Vec::with_capacity(kept.len());
    for r in &kept {
        let lr = r.ratio.log10();
        all.add(lr);
        if r.h == 1 {
            advantage.add(lr);
        } else {
            no_advantage.add(lr);
        }
        logs.push(lr);
    }
    logs.sort_by(f64::total_cmp);
    let deciles: Vec<f64> = (0..=10).map(|d| quantile(&logs, d as f64 / 10.0)).collect();
    Ok(RatioSummary {
        count: kept.len(),
        median_log10: deciles[5],
        deciles,
        all,
        advantage,
        no_advantage,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub k: u32,
    pub mode: AdvantageMode,
    pub status: CellStatus,
    pub percentage: Option<f64>,
    pub stderr: Option<f64>,
    pub skipped_trials: usize,
    /// Wall time in seconds; the only field that varies between runs.
    pub runtime: f64,
}

/// Runs every cell in order, emitting each row to `sink` as it completes.
/// Cells refused by the budget guard are emitted with status `skipped`.
pub fn sweep(configs: &[AdvantageConfig], mut sink: impl FnMut(&SweepRow) -> Result<()>) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(configs.len());
    for config in configs {
        let start = Instant::now();
        let row = match estimate_percentage(config) {
            Ok(res) => SweepRow {
                n: config.shape.n,
                k: config.shape.k,
                mode: config.mode,
                status: CellStatus::Ok,
                percentage: Some(res.percentage),
                stderr: Some(res.stderr),
                skipped_trials: res.skipped,
                runtime: start.elapsed().as_secs_f64(),
            },
            Err(Error::BudgetExceeded { .. }) => SweepRow {
                n: config.shape.n,
                k: config.shape.k,
                mode: config.mode,
                status: CellStatus::Skipped,
                percentage: None,
                stderr: None,
                skipped_trials: 0,
                runtime: start.elapsed().as_secs_f64(),
            },
            Err(e) => return Err(e),
        };
        sink(&row)?;
        rows.push(row);
    }
    Ok(rows)
}
