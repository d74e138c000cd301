//! Sequential multiple testing with local false discovery rates.
//!
//! Many data streams are sampled in lockstep. At every stage each stream gets
//! an lfdr value; sampling stops once the stage's ordered lfdr values separate
//! into a rejection set with average lfdr ≤ α and an acceptance set with
//! average (1 − lfdr) ≤ β. The lfdr values come from the true model (oracle)
//! or from z-scores via a null-proportion estimate and a kernel density.
//!
//! Layout:
//! - [`decision`], [`error`]: shared types (truth/decision vectors, error counts, results)
//! - [`models`]: two-group models, sufficient statistics, null distributions
//! - [`lfdr`]: oracle and estimated lfdr, π₀ estimators, KDE
//! - [`boundary`]: reject/accept counts, cutoffs, stop check, final split
//! - [`runner`]: the stage loop
//! - [`competitors`]: GAP rules, BH, fixed-sample lfdr step-up
//! - [`sim`]: simulation examples and the Monte Carlo harness
//! - [`app`]: case-control CSV ingestion, preprocessing, replay
//! - [`report`]: JSON/CSV output

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod boundary;
pub mod competitors;
pub mod decision;
pub mod error;
pub mod lfdr;
pub mod models;
pub mod report;
pub mod runner;
pub mod sim;
pub mod special;

pub use boundary::{decide, select_s, BoundarySnapshot, StopCriterion};
pub use decision::{error_counts, DecisionVector, ErrorCounts, Outcome, SequentialResult, TruthVector};
pub use error::{Error, Result};
pub use lfdr::LfdrVector;
pub use models::TwoGroupModel;
pub use runner::{run_data_driven, run_oracle, run_sequential, Rule, RunConfig, StageSource};
