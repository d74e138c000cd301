//! Sequential runner: pilot, per-stage lfdr, boundary check, stop and decide.

use log::{debug, trace};
use serde::{Deserialize, Serialize};

use crate::boundary::{decide, select_s, BoundarySnapshot, StopCriterion};
use crate::decision::{Outcome, SequentialResult, StageTrace};
use crate::error::{Error, Result};
use crate::lfdr::{data_driven_lfdr, estimate_pi0_storey, oracle_lfdr, oracle_lfdr_value, LfdrKind, LfdrVector};
use crate::models::{StreamState, TwoGroupModel};

/// Supplies stage-by-stage observations for m streams.
pub trait StageSource {
    /// Number of streams m.
    fn m(&self) -> usize;
    /// Current stage n (0 before any data).
    fn stage(&self) -> usize;
    /// Ingests one more stage; `Ok(false)` when no data remain.
    fn advance(&mut self) -> Result<bool>;
    fn states(&self) -> &[StreamState];
    /// z-scores Φ⁻¹(F₀(Sₙ)) for the current statistics.
    fn zscores(&self) -> Result<Vec<f64>>;
    /// p-values of the current statistics.
    fn pvalues(&self) -> Result<Vec<f64>>;
}

/// How lfdr values are produced at each stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    /// Known two-group model; lfdr from the accumulated LLR.
    Oracle { model: TwoGroupModel },
    /// π̂₀ from the characteristic-function estimator plus a KDE of z-scores.
    DataDriven { lambda: f64 },
    /// Discrete statistics: Storey π̂₀ on p-values, known densities for the ratio.
    DiscretePlugIn { model: TwoGroupModel, storey_lambda: f64 },
}

impl Rule {
    pub fn data_driven() -> Self {
        Rule::DataDriven { lambda: 0.1 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Rule::Oracle { .. } => "oracle",
            Rule::DataDriven { .. } => "data_driven",
            Rule::DiscretePlugIn { .. } => "discrete_plug_in",
        }
    }

    /// lfdr values for the current stage and the π₀ used.
    pub fn evaluate(&self, source: &dyn StageSource) -> Result<(LfdrVector, f64)> {
        let n = source.stage();
        match self {
            Rule::Oracle { model } => Ok((oracle_lfdr(source.states(), model), model.pi0)),
            Rule::DataDriven { lambda } => {
                let z = source.zscores()?;
                data_driven_lfdr(&z, *lambda, n)
            }
            Rule::DiscretePlugIn { model, storey_lambda } => {
                let p = source.pvalues()?;
                let pi0 = estimate_pi0_storey(&p, *storey_lambda)?.pi0_hat;
                // π̂₀ = 1 would put all mass on the null; keep it inside (0,1)
                let pi0_use = pi0.min(1.0 - 1e-6);
                let values = source
                    .states()
                    .iter()
                    .map(|s| oracle_lfdr_value(pi0_use, model.combine_llr(&s.component_llr)))
                    .collect();
                Ok((LfdrVector { values, stage: n, kind: LfdrKind::Estimated }, pi0_use))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Stages observed before the first boundary evaluation.
    pub pilot_k: usize,
    /// Safety cap; hitting it yields a truncated result.
    pub max_stages: usize,
    pub criterion: StopCriterion,
    pub record_trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 0.05,
            beta: 0.10,
            pilot_k: 1,
            max_stages: 10_000,
            criterion: StopCriterion::default(),
            record_trace: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let level = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must lie in (0,1), got {v}")))
            }
        };
        level("alpha", self.alpha)?;
        level("beta", self.beta)?;
        if self.pilot_k == 0 {
            return Err(Error::InvalidParameter("pilot_k must be >= 1".into()));
        }
        if self.max_stages < self.pilot_k {
            return Err(Error::InvalidParameter(format!(
                "max_stages ({}) below pilot_k ({})",
                self.max_stages, self.pilot_k
            )));
        }
        Ok(())
    }
}

/// Runs the boundary until it stops, the cap is hit or the data run out.
pub fn run_sequential(source: &mut dyn StageSource, rule: &Rule, cfg: &RunConfig) -> Result<SequentialResult> {
    cfg.validate()?;
    let m = source.m();
    if m == 0 {
        return Err(Error::InsufficientData("no streams".into()));
    }
    while source.stage() < cfg.pilot_k {
        if !source.advance()? {
            return Err(Error::Config(format!(
                "data exhausted at stage {} before the pilot of {}",
                source.stage(),
                cfg.pilot_k
            )));
        }
    }
    let mut traces = cfg.record_trace.then(Vec::new);
    loop {
        let n = source.stage();
        let (lfdr, pi0) = rule.evaluate(source).map_err(|e| e.at_stage(n))?;
        let estimated = !matches!(rule, Rule::Oracle { .. });
        let snap = BoundarySnapshot::build(&lfdr, cfg.alpha, cfg.beta, cfg.criterion);
        let record = StageTrace {
            n,
            r: snap.r,
            a: snap.a,
            t_lower: snap.t_lower,
            t_upper: snap.t_upper,
            pi0_hat: estimated.then_some(pi0),
        };
        trace!("stage {n}: r={} a={} tl={:.4} tu={:.4} pi0={pi0:.4}", snap.r, snap.a, snap.t_lower, snap.t_upper);
        if let Some(t) = traces.as_mut() {
            t.push(record);
        }

        // An estimated all-accept snapshot with nothing rejectable usually means
        // π̂₀ has hit its upper clamp rather than that the data are null.
        let premature = matches!(rule, Rule::DataDriven { .. }) && snap.r == 0 && snap.a >= m;
        let outcome = if snap.stopped && !premature {
            Some(Outcome::Stopped)
        } else if n >= cfg.max_stages {
            Some(Outcome::Truncated)
        } else if !source.advance()? {
            Some(Outcome::Exhausted)
        } else {
            None
        };
        if let Some(outcome) = outcome {
            let s = if outcome == Outcome::Stopped {
                select_s(snap.r, snap.a, m, pi0, cfg.alpha, cfg.beta).map_err(|e| e.at_stage(n))?.s
            } else {
                snap.r
            };
            debug!("{} finished at stage {n} ({outcome:?}), r={} a={} s={s}", rule.name(), snap.r, snap.a);
            return Ok(SequentialResult {
                stopping_time: n,
                decisions: decide(&lfdr.values, s),
                outcome,
                r: snap.r,
                a: snap.a,
                s,
                t_lower: snap.t_lower,
                t_upper: snap.t_upper,
                pi0_hat: estimated.then_some(pi0),
                trace: traces,
            });
        }
    }
}

pub fn run_oracle(model: &TwoGroupModel, source: &mut dyn StageSource, cfg: &RunConfig) -> Result<SequentialResult> {
    run_sequential(source, &Rule::Oracle { model: model.clone() }, cfg)
}

pub fn run_data_driven(source: &mut dyn StageSource, lambda: f64, cfg: &RunConfig) -> Result<SequentialResult> {
    run_sequential(source, &Rule::DataDriven { lambda }, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{update_llr, DistributionSpec, StreamState};
    use crate::special::norm_quantile;

    /// Replays fixed per-stage observation vectors.
    struct Fixed {
        model: TwoGroupModel,
        data: Vec<Vec<f64>>,
        states: Vec<StreamState>,
        n: usize,
    }

    impl Fixed {
        fn new(model: TwoGroupModel, data: Vec<Vec<f64>>) -> Self {
            let m = data[0].len();
            Fixed { model, data, states: (0..m).map(|i| StreamState::new(i, 1)).collect(), n: 0 }
        }
    }

    impl StageSource for Fixed {
        fn m(&self) -> usize {
            self.states.len()
        }
        fn stage(&self) -> usize {
            self.n
        }
        fn advance(&mut self) -> Result<bool> {
            let Some(row) = self.data.get(self.n) else { return Ok(false) };
            for (s, &x) in self.states.iter_mut().zip(row) {
                update_llr(s, &self.model, x);
                s.case.push(x);
                s.stat = s.case.sum();
            }
            self.n += 1;
            Ok(true)
        }
        fn states(&self) -> &[StreamState] {
            &self.states
        }
        fn zscores(&self) -> Result<Vec<f64>> {
            Ok(self.states.iter().map(|s| s.stat / (self.n as f64).sqrt()).collect())
        }
        fn pvalues(&self) -> Result<Vec<f64>> {
            Ok(self.zscores()?.iter().map(|z| crate::special::norm_sf(*z)).collect())
        }
    }

    fn e1(pi0: f64) -> TwoGroupModel {
        TwoGroupModel::new(
            pi0,
            DistributionSpec::Gaussian { mean: 0.0, sd: 1.0 },
            DistributionSpec::Gaussian { mean: 0.25, sd: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn single_stream_hand_trace() {
        // π₀ = ½ so t = 1/(1 + e^Λ); with α = β = 0.3 the stream is decided once
        // Λ ≥ log(7/3) (reject) or Λ ≤ −log(7/3) (accept).
        let x = 4.0 * (7.0f64 / 3.0).ln() + 0.125 + 0.01; // one big step over the reject edge
        let data = vec![vec![0.5], vec![0.2], vec![x]];
        let cfg = RunConfig { alpha: 0.3, beta: 0.3, criterion: StopCriterion::CountCover, ..Default::default() };
        let mut src = Fixed::new(e1(0.5), data);
        let res = run_oracle(&e1(0.5), &mut src, &cfg).unwrap();
        // after stage 1: Λ = 0.25·0.5 − 0.03125 = 0.09375 → t ≈ 0.477, undecided
        // after stage 2: Λ = 0.09375 + 0.25·0.2 − 0.03125 = 0.1125 → undecided
        assert_eq!(res.stopping_time, 3);
        assert!(res.stopped());
        assert_eq!(res.decisions.0, vec![true]);
    }

    #[test]
    fn degenerate_model_truncates() {
        let g = DistributionSpec::Gaussian { mean: 0.0, sd: 1.0 };
        let model = TwoGroupModel::degenerate(0.8, g).unwrap();
        let data: Vec<Vec<f64>> = (0..50).map(|i| vec![norm_quantile((i as f64 + 0.5) / 50.0); 10]).collect();
        let cfg = RunConfig { max_stages: 20, record_trace: true, ..Default::default() };
        let mut src = Fixed::new(model.clone(), data);
        let res = run_oracle(&model, &mut src, &cfg).unwrap();
        assert_eq!(res.outcome, Outcome::Truncated);
        assert_eq!(res.stopping_time, 20);
        let trace = res.trace.unwrap();
        assert_eq!(trace.len(), 20);
        assert!(trace.windows(2).all(|w| w[0].n < w[1].n));
    }

    #[test]
    fn exhaustion_is_flagged() {
        let data = vec![vec![0.0; 4]; 3];
        let mut src = Fixed::new(e1(0.8), data);
        let res = run_oracle(&e1(0.8), &mut src, &RunConfig::default()).unwrap();
        assert_eq!(res.outcome, Outcome::Exhausted);
        assert_eq!(res.stopping_time, 3);
    }

    #[test]
    fn estimated_all_accept_keeps_sampling() {
        // identical z-scores give lfdr ≡ 1: the oracle-free rule must not read that as a decision
        let data = vec![vec![0.0; 30]; 4];
        let mut src = Fixed::new(e1(0.8), data);
        let res = run_data_driven(&mut src, 0.1, &RunConfig::default()).unwrap();
        assert_eq!(res.outcome, Outcome::Exhausted);
        assert_eq!(res.stopping_time, 4);
        assert_eq!(res.discoveries(), 0);
    }

    #[test]
    fn pilot_longer_than_data() {
        let mut src = Fixed::new(e1(0.8), vec![vec![0.0; 2]; 2]);
        let cfg = RunConfig { pilot_k: 5, ..Default::default() };
        assert!(matches!(run_oracle(&e1(0.8), &mut src, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert!(RunConfig { beta: 1.0, ..Default::default() }.validate().is_err());
        assert!(RunConfig { pilot_k: 0, ..Default::default() }.validate().is_err());
    }
}
