//! Monte Carlo global envelope tests.
//!
//! Curves are ranked by extreme rank, rank counts, functional depth or a
//! scaled deviation measure; the resulting tests come with graphical
//! envelopes where the ordering allows one. Point pattern simulators and
//! summary-function estimators turn spatial hypotheses into curve bundles.

pub mod composite;
pub mod curves;
pub mod envelopes;
pub mod error;
pub mod measures;
pub mod montecarlo;
mod optim;
pub mod pointproc;
pub mod rng;
pub mod summaries;

pub use curves::{pointwise_ranks, two_sided_ranks, FunctionalSample, Grid, HalfRank, RankTableau, TiePolicy};
pub use envelopes::{
    classify, critical_rank, kth_envelope, p_interval, scaled_mad_envelope, Envelope, EnvelopeDecision, EnvelopeKind,
    PInterval, Strictness,
};
pub use error::{Error, Result};
pub use measures::{deviation, extreme_rank, mbd, mhrd, rank_counts, DeviationKind, DeviationSpec, Scaling};
pub use montecarlo::{
    global_envelope_test, test_sample, OrderingKind, Simulated, TestConfig, TestReport, TieStrategy,
};
pub use pointproc::{Intensity, MatClustSpec, ModelSpec, Point, PointPattern, StraussSpec, Window};
