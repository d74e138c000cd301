//! Monte Carlo experiments: replicate loop, summaries, GAP calibration and BH matching.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    generate_truth, splitmix64, substream, ExampleSpec, SimStreams, PURPOSE_CALIBRATION, PURPOSE_DATA,
    PURPOSE_NULL_TABLE, PURPOSE_TRUTH,
};
use crate::boundary::StopCriterion;
use crate::competitors::{bh, calibrate_gap_sb as calibrate_grid, gap_ao_cutoff, run_gap};
use crate::decision::{error_counts, fdp, fnp, DecisionVector, Outcome};
use crate::error::{Error, Result};
use crate::runner::{run_sequential, Rule, RunConfig, StageSource};

/// Default pilot for the data-driven rule: the cross-sectional estimators need
/// a few stages of signal before their output is informative.
pub const DATA_DRIVEN_PILOT: usize = 20;
/// Warm-up for the discrete plug-in: the Storey estimate from a handful of
/// tied binomial p-values is too coarse before a few stages accumulate.
pub const DISCRETE_PILOT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "procedure", rename_all = "snake_case")]
pub enum Procedure {
    Oracle,
    DataDriven,
    GapAo,
    GapSb { cutoff: f64 },
    BhFixed { n: usize },
}

impl Procedure {
    pub fn label(&self) -> &'static str {
        match self {
            Procedure::Oracle => "oracle",
            Procedure::DataDriven => "data_driven",
            Procedure::GapAo => "gap_ao",
            Procedure::GapSb { .. } => "gap_sb",
            Procedure::BhFixed { .. } => "bh",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub beta: f64,
    pub runs: usize,
    /// Replicates per grid point when calibrating the GAPsb cutoff.
    pub calibration_runs: usize,
    pub seed: u64,
    /// Overrides the procedure's default pilot.
    pub pilot_k: Option<usize>,
    /// Overrides 100 × the example's typical stopping stage.
    pub max_stages: Option<usize>,
    /// Stop rule; by default the count rule for discrete statistics, cutoff separation otherwise.
    pub criterion: Option<StopCriterion>,
    /// Frequency-grid step of the null-proportion estimator.
    pub lambda: f64,
    pub storey_lambda: f64,
    pub welch: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            alpha: 0.05,
            beta: 0.10,
            runs: 200,
            calibration_runs: 50,
            seed: 0,
            pilot_k: None,
            max_stages: None,
            criterion: None,
            lambda: 0.1,
            storey_lambda: 0.5,
            welch: false,
        }
    }
}

impl ExperimentConfig {
    fn run_config(&self, spec: &ExampleSpec, procedure: &Procedure) -> RunConfig {
        let default_pilot = match procedure {
            Procedure::DataDriven if spec.is_discrete() => DISCRETE_PILOT,
            Procedure::DataDriven => DATA_DRIVEN_PILOT,
            _ => 1,
        };
        RunConfig {
            alpha: self.alpha,
            beta: self.beta,
            // t statistics need a few observations for a usable variance
            pilot_k: self.pilot_k.unwrap_or(default_pilot).max(if spec.min_stage() > 1 { 3 } else { 1 }),
            max_stages: self.max_stages.unwrap_or(100 * spec.typical_asn()),
            criterion: self.criterion.unwrap_or(if spec.is_discrete() {
                StopCriterion::CountCover
            } else {
                StopCriterion::CutoffSeparation
            }),
            record_trace: false,
        }
    }
}

/// What one replicate produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub stopping_time: usize,
    pub fdp: f64,
    pub fnp: f64,
    pub discoveries: usize,
    pub outcome: Outcome,
}

/// Averages over replicates; rates in percent, SE = sd/√runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub asn: f64,
    pub se_asn: f64,
    pub fdr_hat_pct: f64,
    pub se_fdr_pct: f64,
    pub fnr_hat_pct: f64,
    pub se_fnr_pct: f64,
    pub runs: usize,
    pub truncated: usize,
    pub exhausted: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub savings_pct: Option<f64>,
}

fn mean_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl McSummary {
    pub fn from_outcomes(outcomes: &[ReplicateOutcome]) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidParameter("no replicates".into()));
        }
        let (asn, se_asn) = mean_se(outcomes.iter().map(|o| o.stopping_time as f64));
        let (fdr, se_fdr) = mean_se(outcomes.iter().map(|o| o.fdp));
        let (fnr, se_fnr) = mean_se(outcomes.iter().map(|o| o.fnp));
        Ok(McSummary {
            asn,
            se_asn,
            fdr_hat_pct: 100.0 * fdr,
            se_fdr_pct: 100.0 * se_fdr,
            fnr_hat_pct: 100.0 * fnr,
            se_fnr_pct: 100.0 * se_fnr,
            runs: outcomes.len(),
            truncated: outcomes.iter().filter(|o| o.outcome == Outcome::Truncated).count(),
            exhausted: outcomes.iter().filter(|o| o.outcome == Outcome::Exhausted).count(),
            savings_pct: None,
        })
    }

    pub fn with_savings_against(mut self, other_asn: f64) -> Self {
        self.savings_pct = Some(savings_pct(self.asn, other_asn));
        self
    }
}

/// 100·(1 − ASN_ref / ASN_other): sample-size saving of the reference over the other procedure.
pub fn savings_pct(asn_ref: f64, asn_other: f64) -> f64 {
    100.0 * (1.0 - asn_ref / asn_other)
}

fn replicate_streams(spec: &ExampleSpec, seed: u64, index: usize) -> Result<SimStreams> {
    let i = index as u64;
    let truth = generate_truth(spec.m, spec.pi1, &mut substream(seed, PURPOSE_TRUTH, i))?;
    SimStreams::new(*spec, truth, substream(seed, PURPOSE_DATA, i), substream(seed, PURPOSE_NULL_TABLE, i))
}

fn calibration_seed(seed: u64) -> u64 {
    splitmix64(seed ^ splitmix64(PURPOSE_CALIBRATION))
}

/// BH at a fixed per-stream sample size n on already-built streams.
pub fn fixed_sample_bh(streams: &mut SimStreams, n: usize, alpha: f64) -> Result<DecisionVector> {
    while streams.stage() < n {
        if !streams.advance()? {
            return Err(Error::InsufficientData(format!("streams exhausted before n = {n}")));
        }
    }
    Ok(bh(&streams.pvalues()?, alpha))
}

/// One replicate: fresh truth and data from the (seed, index) substreams.
pub fn run_replicate(
    spec: &ExampleSpec,
    procedure: &Procedure,
    cfg: &ExperimentConfig,
    index: usize,
) -> Result<ReplicateOutcome> {
    let mut streams = replicate_streams(spec, cfg.seed, index)?.with_welch(cfg.welch);
    let truth = streams.truth().clone();
    let run_cfg = cfg.run_config(spec, procedure);
    let (stopping_time, decisions, outcome) = match *procedure {
        Procedure::Oracle => {
            let mut streams = streams.without_null_bank();
            let res = run_sequential(&mut streams, &Rule::Oracle { model: spec.model()? }, &run_cfg)?;
            (res.stopping_time, res.decisions, res.outcome)
        }
        Procedure::DataDriven => {
            let rule = if spec.is_discrete() {
                Rule::DiscretePlugIn { model: spec.generating_model(), storey_lambda: cfg.storey_lambda }
            } else {
                Rule::DataDriven { lambda: cfg.lambda }
            };
            let res = run_sequential(&mut streams, &rule, &run_cfg)?;
            (res.stopping_time, res.decisions, res.outcome)
        }
        Procedure::GapAo | Procedure::GapSb { .. } => {
            let k = streams.truth().alternatives();
            let cutoff = match *procedure {
                Procedure::GapSb { cutoff } => cutoff,
                _ => gap_ao_cutoff(k, spec.m, cfg.alpha, cfg.beta)?,
            };
            let mut streams = streams.without_null_bank();
            let res = run_gap(&mut streams, &spec.generating_model(), k, cutoff, run_cfg.max_stages)?;
            (res.stopping_time, res.decisions, res.outcome)
        }
        Procedure::BhFixed { n } => {
            let n = n.max(spec.min_stage());
            let d = fixed_sample_bh(&mut streams, n, cfg.alpha)?;
            (n, d, Outcome::Stopped)
        }
    };
    let counts = error_counts(&truth, &decisions)?;
    Ok(ReplicateOutcome { index, stopping_time, fdp: fdp(&counts), fnp: fnp(&counts), discoveries: counts.r, outcome })
}

/// All replicates, in parallel, summarised in replicate order.
pub fn run_experiment(spec: &ExampleSpec, procedure: &Procedure, cfg: &ExperimentConfig) -> Result<McSummary> {
    let outcomes = run_replicates(spec, procedure, cfg)?;
    McSummary::from_outcomes(&outcomes)
}

pub fn run_replicates(
    spec: &ExampleSpec,
    procedure: &Procedure,
    cfg: &ExperimentConfig,
) -> Result<Vec<ReplicateOutcome>> {
    if cfg.runs == 0 {
        return Err(Error::InvalidParameter("runs must be >= 1".into()));
    }
    (0..cfg.runs)
        .into_par_iter()
        .map(|i| run_replicate(spec, procedure, cfg, i).map_err(|e| e.in_replicate(i)))
        .collect()
}

/// Smallest cutoff on the 0.1-grid (cap 50) meeting f̂dr ≤ α and f̂nr ≤ β over
/// `cfg.calibration_runs` replicates. The calibration replicates use their own seed, shared by all grid points.
pub fn calibrate_gap_sb(spec: &ExampleSpec, cfg: &ExperimentConfig) -> Result<f64> {
    let calib = ExperimentConfig { seed: calibration_seed(cfg.seed), runs: cfg.calibration_runs, ..cfg.clone() };
    calibrate_grid(cfg.alpha, cfg.beta, 0.1, 50.0, |c| {
        let outcomes = run_replicates(spec, &Procedure::GapSb { cutoff: c }, &calib)?;
        if let Some(o) = outcomes.iter().find(|o| o.outcome != Outcome::Stopped) {
            return Err(Error::CalibrationFailure(format!(
                "replicate {} did not stop at cutoff {c:.1} (hypotheses indistinguishable?)",
                o.index
            )));
        }
        let s = McSummary::from_outcomes(&outcomes)?;
        Ok((s.fdr_hat_pct / 100.0, s.fnr_hat_pct / 100.0))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhMatch {
    pub n_hat: usize,
    pub summary: McSummary,
    /// |f̂nr(n̂) − target| ≤ 0.5 percentage points.
    pub within_tolerance: bool,
}

/// Upper limit of the sample-size search.
pub const BH_SEARCH_CAP: usize = 1_000_000;

/// Smallest fixed n whose BH f̂nr (percent) is at most `target_fnr_pct`,
/// found by doubling then bisection over common random numbers.
pub fn bh_matched_sample_size(spec: &ExampleSpec, target_fnr_pct: f64, cfg: &ExperimentConfig) -> Result<BhMatch> {
    let eval = |n: usize| run_experiment(spec, &Procedure::BhFixed { n }, cfg);
    let start = spec.min_stage();
    let mut hi = start;
    let mut hi_summary = eval(hi)?;
    let mut lo = None;
    while hi_summary.fnr_hat_pct > target_fnr_pct {
        lo = Some(hi);
        hi *= 2;
        if hi > BH_SEARCH_CAP {
            return Err(Error::SearchFailure(format!(
                "BH f̂nr stays above {target_fnr_pct}% for n up to {BH_SEARCH_CAP}"
            )));
        }
        hi_summary = eval(hi)?;
    }
    if let Some(mut lo) = lo {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let s = eval(mid)?;
            if s.fnr_hat_pct <= target_fnr_pct {
                hi = mid;
                hi_summary = s;
            } else {
                lo = mid;
            }
        }
    }
    let within = (hi_summary.fnr_hat_pct - target_fnr_pct).abs() <= 0.5;
    Ok(BhMatch { n_hat: hi, summary: hi_summary, within_tolerance: within })
}
