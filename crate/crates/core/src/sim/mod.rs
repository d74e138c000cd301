//! Data generators for the seven simulation examples and the Monte Carlo harness.

mod experiment;
mod streams;

pub use experiment::{
    bh_matched_sample_size, calibrate_gap_sb, fixed_sample_bh, run_experiment, run_replicate, run_replicates,
    savings_pct, BhMatch, ExperimentConfig, McSummary, Procedure, ReplicateOutcome, BH_SEARCH_CAP, DATA_DRIVEN_PILOT,
    DISCRETE_PILOT,
};
pub use streams::{generate_stage, SimStreams, StageObservations, E7_NULL_DRAWS};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::TruthVector;
use crate::error::{Error, Result};
use crate::models::{DistributionSpec, Side, TwoGroupModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExampleId {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
}

impl ExampleId {
    pub const ALL: [ExampleId; 7] =
        [ExampleId::E1, ExampleId::E2, ExampleId::E3, ExampleId::E4, ExampleId::E5, ExampleId::E6, ExampleId::E7];
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ExampleId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let t = t.strip_prefix("EX").map(|r| format!("E{}", r.trim())).unwrap_or(t);
        ExampleId::ALL
            .into_iter()
            .find(|id| id.to_string() == t)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown example '{s}' (expected E1..E7)")))
    }
}

/// Which statistic a family is summarised by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    /// Σ x
    Sum,
    /// Σ x²
    SumOfSquares,
    /// one-sample t against zero
    OneSampleT,
    /// case − control two-sample t
    TwoSampleT,
    /// accumulated log-likelihood ratio with a simulated null
    Llr,
}

/// One simulation example: family, number of streams and non-null proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleSpec {
    pub id: ExampleId,
    pub m: usize,
    pub pi1: f64,
}

impl ExampleSpec {
    pub fn new(id: ExampleId, m: usize, pi1: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("m must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&pi1) {
            return Err(Error::InvalidParameter(format!("pi1 must lie in [0,1], got {pi1}")));
        }
        Ok(ExampleSpec { id, m, pi1 })
    }

    /// Null density f₀.
    pub fn null(&self) -> DistributionSpec {
        use DistributionSpec::*;
        match self.id {
            ExampleId::E1 | ExampleId::E3 | ExampleId::E5 | ExampleId::E6 => Gaussian { mean: 0.0, sd: 1.0 },
            ExampleId::E2 => Exponential { rate: 1.0 },
            ExampleId::E4 => Binomial { size: 7, p: 0.1 },
            ExampleId::E7 => Cauchy { location: 0.0, scale: 1.0 },
        }
    }

    /// Alternative components (weight, density).
    pub fn alternative(&self) -> Vec<(f64, DistributionSpec)> {
        use DistributionSpec::*;
        match self.id {
            ExampleId::E1 | ExampleId::E6 => vec![(1.0, Gaussian { mean: 0.25, sd: 1.0 })],
            ExampleId::E2 => vec![(1.0, Exponential { rate: 1.2 })],
            ExampleId::E3 => vec![(1.0, Gaussian { mean: 0.0, sd: 1.2 })],
            ExampleId::E4 => vec![(1.0, Binomial { size: 7, p: 0.3 })],
            ExampleId::E5 => {
                vec![(0.75, Gaussian { mean: 0.25, sd: 1.0 }), (0.25, Gaussian { mean: -0.5, sd: 1.0 })]
            }
            ExampleId::E7 => vec![(1.0, Cauchy { location: 0.25, scale: 1.0 })],
        }
    }

    /// The two-group model with π₀ = 1 − π₁ (needs 0 < π₁ < 1).
    pub fn model(&self) -> Result<TwoGroupModel> {
        TwoGroupModel::mixture(1.0 - self.pi1, self.null(), self.alternative())
    }

    /// Same densities with a stand-in π₀ for data generation when π₁ ∈ {0, 1}.
    pub(crate) fn generating_model(&self) -> TwoGroupModel {
        TwoGroupModel { pi0: 0.5, null: self.null(), alt: self.alternative() }
    }

    pub fn statistic(&self) -> StatisticKind {
        match self.id {
            ExampleId::E1 | ExampleId::E2 | ExampleId::E4 => StatisticKind::Sum,
            ExampleId::E3 => StatisticKind::SumOfSquares,
            ExampleId::E5 => StatisticKind::TwoSampleT,
            ExampleId::E6 => StatisticKind::OneSampleT,
            ExampleId::E7 => StatisticKind::Llr,
        }
    }

    /// Tail of the p-values (for Storey and BH).
    pub fn side(&self) -> Side {
        match self.id {
            ExampleId::E2 => Side::Lower,
            ExampleId::E5 | ExampleId::E6 => Side::TwoSided,
            _ => Side::Upper,
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.id == ExampleId::E4
    }

    pub fn two_sample(&self) -> bool {
        self.id == ExampleId::E5
    }

    /// Smallest stage at which the statistic is defined.
    pub fn min_stage(&self) -> usize {
        match self.statistic() {
            StatisticKind::OneSampleT | StatisticKind::TwoSampleT => 2,
            _ => 1,
        }
    }

    /// Rough stopping-stage scale, used to size the stage cap.
    pub fn typical_asn(&self) -> usize {
        match self.id {
            ExampleId::E1 => 150,
            ExampleId::E2 => 250,
            ExampleId::E3 => 130,
            ExampleId::E4 => 55,
            ExampleId::E5 => 480,
            ExampleId::E6 => 135,
            ExampleId::E7 => 280,
        }
    }
}

// RNG stream purposes
pub(crate) const PURPOSE_TRUTH: u64 = 1;
pub(crate) const PURPOSE_DATA: u64 = 2;
pub(crate) const PURPOSE_CALIBRATION: u64 = 3;
pub(crate) const PURPOSE_NULL_TABLE: u64 = 4;
pub(crate) const PURPOSE_REPLAY: u64 = 5;

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent, reproducible generator for (seed, purpose, index).
pub fn substream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(purpose)));
    rng.set_stream(index);
    rng
}

/// θᵢ iid Bernoulli(π₁).
pub fn generate_truth<R: Rng + ?Sized>(m: usize, pi1: f64, rng: &mut R) -> Result<TruthVector> {
    if !(0.0..=1.0).contains(&pi1) {
        return Err(Error::InvalidParameter(format!("pi1 must lie in [0,1], got {pi1}")));
    }
    Ok(TruthVector((0..m).map(|_| rng.random::<f64>() < pi1).collect()))
}
