//! Simulated streams for one replicate.

use std::cell::OnceCell;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ExampleSpec, StatisticKind};
use crate::decision::TruthVector;
use crate::error::{Error, Result};
use crate::models::{
    one_sample_t, pvalue, two_sample_t, update_llr, zscore, EmpiricalTable, NullDist, StreamState, TwoGroupModel,
};
use crate::runner::StageSource;

/// Size of the simulated null bank behind the LLR statistic.
pub const E7_NULL_DRAWS: usize = 100_000;

/// One stage of data: a case draw per stream, plus a control draw for two-sample designs.
#[derive(Debug, Clone, PartialEq)]
pub struct StageObservations {
    pub case: Vec<f64>,
    pub control: Option<Vec<f64>>,
}

/// Draws one stage: stream i uses f₁ (its own mixture component) when θᵢ = 1, f₀ otherwise.
pub fn generate_stage<R: Rng + ?Sized>(
    spec: &ExampleSpec,
    truth: &TruthVector,
    components: &[usize],
    rng: &mut R,
) -> StageObservations {
    let model = spec.generating_model();
    let case = truth.0.iter().zip(components).map(|(&t, &c)| model.sample(t, c, rng)).collect();
    let control = spec.two_sample().then(|| (0..truth.len()).map(|_| model.null.sample(rng)).collect());
    StageObservations { case, control }
}

/// Null streams advanced in lockstep; their LLRs tabulate the null of the LLR statistic.
#[derive(Debug, Clone)]
struct NullBank {
    llr: Vec<f64>,
    rng: ChaCha8Rng,
    /// Built on first use at each stage.
    table: OnceCell<Arc<EmpiricalTable>>,
}

impl NullBank {
    fn advance(&mut self, model: &TwoGroupModel) {
        let alt = &model.alt[0].1;
        for l in self.llr.iter_mut() {
            let x = model.null.sample(&mut self.rng);
            *l += alt.log_density(x) - model.null.log_density(x);
        }
        self.table = OnceCell::new();
    }

    fn table(&self) -> Result<Arc<EmpiricalTable>> {
        if let Some(t) = self.table.get() {
            return Ok(t.clone());
        }
        let t = Arc::new(EmpiricalTable::new(self.llr.clone())?);
        Ok(self.table.get_or_init(|| t).clone())
    }
}

/// The m streams of one replicate, advanced one stage at a time.
#[derive(Debug, Clone)]
pub struct SimStreams {
    spec: ExampleSpec,
    model: TwoGroupModel,
    truth: TruthVector,
    components: Vec<usize>,
    rng: ChaCha8Rng,
    states: Vec<StreamState>,
    n: usize,
    welch: bool,
    bank: Option<NullBank>,
    max_stage: Option<usize>,
}

impl SimStreams {
    /// `rng` drives the data; `null_rng` drives the simulated null bank (LLR statistic only).
    pub fn new(spec: ExampleSpec, truth: TruthVector, mut rng: ChaCha8Rng, null_rng: ChaCha8Rng) -> Result<Self> {
        if truth.len() != spec.m {
            return Err(Error::Dimension { expected: spec.m, got: truth.len() });
        }
        let model = spec.generating_model();
        let components = truth.0.iter().map(|_| model.draw_component(&mut rng)).collect();
        let states = (0..spec.m).map(|i| StreamState::new(i, model.components())).collect();
        let bank = (spec.statistic() == StatisticKind::Llr).then(|| NullBank {
            llr: vec![0.0; E7_NULL_DRAWS],
            rng: null_rng,
            table: OnceCell::new(),
        });
        Ok(SimStreams { spec, model, truth, components, rng, states, n: 0, welch: false, bank, max_stage: None })
    }

    /// Use the unequal-variance statistic for two-sample designs.
    pub fn with_welch(mut self, welch: bool) -> Self {
        self.welch = welch;
        self
    }

    /// Drop the simulated null bank when only likelihood ratios are needed.
    pub fn without_null_bank(mut self) -> Self {
        self.bank = None;
        self
    }

    /// Refuse to advance past this stage (for fixed-sample analyses).
    pub fn with_max_stage(mut self, n: usize) -> Self {
        self.max_stage = Some(n);
        self
    }

    pub fn truth(&self) -> &TruthVector {
        &self.truth
    }

    pub fn spec(&self) -> &ExampleSpec {
        &self.spec
    }

    /// Current statistic of every stream together with its null distribution.
    fn statistics(&self) -> Result<Vec<(f64, NullDist)>> {
        let n = self.n;
        if n < self.spec.min_stage() {
            return Err(Error::InsufficientData(format!("statistic undefined at stage {n}")));
        }
        let nf = n as f64;
        let shared =
            |null: NullDist| -> Vec<(f64, NullDist)> { self.states.iter().map(|s| (s.stat, null.clone())).collect() };
        Ok(match self.spec.statistic() {
            StatisticKind::Sum => shared(match self.spec.id {
                super::ExampleId::E2 => NullDist::gamma(nf, 1.0)?,
                super::ExampleId::E4 => NullDist::binomial(7 * n as u64, 0.1)?,
                _ => NullDist::Normal { mean: 0.0, sd: nf.sqrt() },
            }),
            StatisticKind::SumOfSquares => shared(NullDist::scaled_chi_squared(nf, 1.0)?),
            StatisticKind::Llr => {
                let bank = self.bank.as_ref().ok_or_else(|| Error::Config("missing null bank".into()))?;
                shared(NullDist::Empirical(bank.table()?))
            }
            StatisticKind::OneSampleT => {
                let null = NullDist::student_t(nf - 1.0)?;
                let mut out = Vec::with_capacity(self.states.len());
                for s in &self.states {
                    out.push((one_sample_t(&s.case)?.0, null.clone()));
                }
                out
            }
            StatisticKind::TwoSampleT => {
                let mut out = Vec::with_capacity(self.states.len());
                let pooled = NullDist::student_t(2.0 * nf - 2.0)?;
                for s in &self.states {
                    let (t, df) = two_sample_t(&s.case, &s.control, self.welch)?;
                    let null = if self.welch { NullDist::student_t(df)? } else { pooled.clone() };
                    out.push((t, null));
                }
                out
            }
        })
    }
}

impl StageSource for SimStreams {
    fn m(&self) -> usize {
        self.spec.m
    }

    fn stage(&self) -> usize {
        self.n
    }

    fn advance(&mut self) -> Result<bool> {
        if self.max_stage.is_some_and(|cap| self.n >= cap) {
            return Ok(false);
        }
        let obs = generate_stage(&self.spec, &self.truth, &self.components, &mut self.rng);
        let kind = self.spec.statistic();
        for (i, s) in self.states.iter_mut().enumerate() {
            let x = obs.case[i];
            update_llr(s, &self.model, x);
            s.case.push(x);
            if let Some(ctrl) = &obs.control {
                s.control.push(ctrl[i]);
            }
            s.stat = match kind {
                StatisticKind::Sum => s.case.sum(),
                StatisticKind::SumOfSquares => s.case.sum_sq(),
                StatisticKind::Llr => s.cum_llr,
                StatisticKind::OneSampleT | StatisticKind::TwoSampleT => f64::NAN,
            };
        }
        if let Some(bank) = self.bank.as_mut() {
            bank.advance(&self.model);
        }
        self.n += 1;
        Ok(true)
    }

    fn states(&self) -> &[StreamState] {
        &self.states
    }

    fn zscores(&self) -> Result<Vec<f64>> {
        self.statistics()?.iter().map(|(s, null)| zscore(*s, null)).collect()
    }

    fn pvalues(&self) -> Result<Vec<f64>> {
        let side = self.spec.side();
        Ok(self.statistics()?.iter().map(|(s, null)| pvalue(*s, null, side)).collect())
    }
}
