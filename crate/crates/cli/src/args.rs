use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gbspe_core::advantage::{AdvantageMode, Normalization};
use gbspe_core::estimators::{Estimator, DEFAULT_PAIR_BUDGET};
use gbspe_core::ProblemKind;

#[derive(Debug, Parser)]
#[command(name = "gbspe", version, about = "GBS versus Monte Carlo estimators for Gaussian expectation problems")]
pub struct Cli {
    /// Persistent hafnian cache log (created if missing).
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hafnian of B_I for a matrix and a multi-index (all ones if omitted).
    Hafnian {
        #[arg(long)]
        matrix: PathBuf,
        /// Multi-index such as 2,0,1.
        #[arg(long)]
        index: Option<String>,
    },
    /// Scaling t with mean photon number 2K.
    SolveT {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long = "K")]
        k: u32,
    },
    /// Exact target and both variances.
    Variances {
        #[arg(long)]
        instance: PathBuf,
        /// Must agree with the instance file when given.
        #[arg(long = "K")]
        k: Option<u32>,
        #[arg(long, value_enum)]
        mode: KindArg,
        #[arg(long, default_value_t = DEFAULT_PAIR_BUDGET)]
        budget: u128,
    },
    /// Guaranteed sample sizes of the GBS estimator and of MC.
    SampleSize {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, value_enum)]
        mode: KindArg,
        #[arg(long, default_value_t = DEFAULT_PAIR_BUDGET)]
        budget: u128,
    },
    /// Replicated estimator runs against the closed-form variance.
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        replicas: usize,
        #[arg(long, value_enum)]
        estimator: EstimatorArg,
        /// Target of the MC estimator.
        #[arg(long, value_enum, default_value_t = KindArg::Haf)]
        mode: KindArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Percentage of the problem space where the GBS estimator wins.
    Advantage(AdvantageArgs),
    /// Runs `advantage` over a grid of cells.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        /// Output CSV.
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Per-degree choice between MC and GBS under a split accuracy budget.
    HybridPlan {
        #[arg(long)]
        slices: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
    },
}

#[derive(Debug, Args)]
pub struct AdvantageArgs {
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long = "K")]
    pub k: u32,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 30)]
    pub n1: usize,
    #[arg(long, default_value_t = 100)]
    pub n2: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_PAIR_BUDGET)]
    pub budget: u128,
    #[arg(long, value_enum, default_value_t = NormalizationArg::SelfNormalized)]
    pub normalization: NormalizationArg,
    /// Spectra drawn for the c_N estimate in raw mode.
    #[arg(long, default_value_t = 100_000)]
    pub cn_draws: usize,
    /// Directory for records.csv and summary.json.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Haf,
    Hafsq,
}

impl From<KindArg> for ProblemKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Haf => ProblemKind::Haf,
            KindArg::Hafsq => ProblemKind::HafSq,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    /// GBS-P against MC on the hafnian sum.
    Gbsp,
    /// GBS-I against MC on the squared-hafnian sum.
    Gbsi,
}

impl From<ModeArg> for AdvantageMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Gbsp => AdvantageMode::GbspVsMcHaf,
            ModeArg::Gbsi => AdvantageMode::GbsiVsMcHafSq,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    Gbsp,
    Gbsi,
    Mc,
}

impl EstimatorArg {
    pub fn resolve(self, kind: KindArg) -> Estimator {
        match (self, kind) {
            (EstimatorArg::Gbsp, _) => Estimator::GbsP,
            (EstimatorArg::Gbsi, _) => Estimator::GbsI,
            (EstimatorArg::Mc, KindArg::Haf) => Estimator::McHaf,
            (EstimatorArg::Mc, KindArg::Hafsq) => Estimator::McHafSq,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormalizationArg {
    SelfNormalized,
    RawTimesCn,
}

impl From<NormalizationArg> for Normalization {
    fn from(n: NormalizationArg) -> Self {
        match n {
            NormalizationArg::SelfNormalized => Normalization::SelfNormalized,
            NormalizationArg::RawTimesCn => Normalization::RawTimesCn,
        }
    }
}
