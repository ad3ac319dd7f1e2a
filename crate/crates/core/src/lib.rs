//! Numerical core for comparing Gaussian boson sampling (GBS) estimators
//! against plain Monte Carlo on Gaussian expectation problems.
//!
//! A problem instance is a pair `(a, B)`: a unit coefficient vector over all
//! multi-indices of degree `2K` and a covariance matrix with spectrum in
//! `(0, 1)`. The two targets are
//!
//! * `mu_haf   = sum_I a_I Haf(B_I)`
//! * `mu_hafsq = sum_I a_I Haf(B_I)^2`
//!
//! which the GBS-P and GBS-I estimators approximate from samples of the GBS
//! output distribution `P_tB`, tuned so that its mean photon number is `2K`.
//! The [`advantage`] module estimates the fraction of the problem space in
//! which a GBS estimator needs fewer guaranteed samples than Monte Carlo.

pub mod advantage;
pub mod error;
pub mod estimators;
pub mod gbs;
pub mod hafnian;
pub mod linalg;
pub mod multiindex;
pub mod problem;
pub mod rng;

pub use advantage::{
    AdvantageConfig, AdvantageMode, AdvantageResult, Normalization, RatioSummary, SweepRow,
    TrialRecord,
};
pub use error::{Error, Result};
pub use estimators::{AccuracySpec, ProblemKind, VarianceReport};
pub use gbs::{DegreeSampler, GbsProgram, SampleTally};
pub use hafnian::HafnianCache;
pub use linalg::{EigenDecomposition, SymmetricMatrix};
pub use multiindex::MultiIndex;
pub use problem::{ProblemInstance, ProblemShape};
pub use rng::RngStream;
