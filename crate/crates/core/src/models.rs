//! Per-observation distributions, two-group models, stream state and null CDFs.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Binomial as BinomialDist, Cauchy as CauchyDist, Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Gamma, StudentsT};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::special::{log_sum_exp, norm_cdf, norm_quantile, norm_sf};

/// Magnitude at which a log-likelihood ratio saturates (≈ log f64::MAX).
pub const LLR_SATURATION: f64 = 709.0;

/// Clamp applied to null CDF values before inversion.
pub const Z_EPS: f64 = 1e-15;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistributionSpec {
    Gaussian { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    Binomial { size: u32, p: f64 },
    Cauchy { location: f64, scale: f64 },
    Empirical(Arc<EmpiricalTable>),
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            DistributionSpec::Gaussian { mean, sd } if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) => {
                bad(format!("gaussian needs finite mean and sd > 0 (sd={sd})"))
            }
            DistributionSpec::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => {
                bad(format!("exponential rate must be > 0 (rate={rate})"))
            }
            DistributionSpec::Binomial { size, p } if size == 0 || !(0.0..=1.0).contains(&p) => {
                bad(format!("binomial needs size >= 1 and p in [0,1] (size={size}, p={p})"))
            }
            DistributionSpec::Cauchy { location, scale }
                if !(scale > 0.0 && scale.is_finite() && location.is_finite()) =>
            {
                bad(format!("cauchy scale must be > 0 (scale={scale})"))
            }
            DistributionSpec::Empirical(ref t) if t.values.is_empty() => bad("empty empirical table".into()),
            _ => Ok(()),
        }
    }

    /// Natural-log density (or mass). Outside the support this is −∞.
    /// Empirical tables carry no density and return NaN.
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            DistributionSpec::Gaussian { mean, sd } => {
                let u = (x - mean) / sd;
                -0.5 * u * u - sd.ln() - LN_SQRT_2PI
            }
            DistributionSpec::Exponential { rate } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * x
                }
            }
            DistributionSpec::Binomial { size, p } => {
                if x < 0.0 || x > size as f64 || x.fract() != 0.0 {
                    return f64::NEG_INFINITY;
                }
                let k = x as u64;
                let n = size as u64;
                let term = |count: u64, prob: f64| if count == 0 { 0.0 } else { count as f64 * prob.ln() };
                ln_binomial(n, k) + term(k, p) + term(n - k, 1.0 - p)
            }
            DistributionSpec::Cauchy { location, scale } => {
                let u = (x - location) / scale;
                -(std::f64::consts::PI * scale * (1.0 + u * u)).ln()
            }
            DistributionSpec::Empirical(_) => f64::NAN,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DistributionSpec::Gaussian { mean, sd } => Normal::new(*mean, *sd).expect("validated").sample(rng),
            DistributionSpec::Exponential { rate } => Exp::new(*rate).expect("validated").sample(rng),
            DistributionSpec::Binomial { size, p } => {
                BinomialDist::new(*size as u64, *p).expect("validated").sample(rng) as f64
            }
            DistributionSpec::Cauchy { location, scale } => {
                CauchyDist::new(*location, *scale).expect("validated").sample(rng)
            }
            DistributionSpec::Empirical(t) => t.values[rng.random_range(0..t.values.len())],
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, DistributionSpec::Binomial { .. })
    }
}

/// Sorted simulated-null table with a continuity-corrected interpolated CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalTable {
    values: Vec<f64>,
}

impl EmpiricalTable {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData("empirical table needs at least one draw".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("NaN in empirical table".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalTable { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// 0.5/(N+1) below the minimum, (i+1)/(N+1) at the i-th order statistic
    /// (linear in between), (N+0.5)/(N+1) above the maximum.
    pub fn cdf(&self, x: f64) -> f64 {
        let v = &self.values;
        let n = v.len();
        let denom = (n + 1) as f64;
        if x < v[0] {
            return 0.5 / denom;
        }
        if x > v[n - 1] {
            return (n as f64 + 0.5) / denom;
        }
        // last index with v[i] <= x
        let hi = v.partition_point(|&y| y <= x);
        let i = hi - 1;
        if i + 1 >= n || v[i] == x {
            return (hi as f64) / denom;
        }
        let frac = (x - v[i]) / (v[i + 1] - v[i]);
        (i as f64 + 1.0 + frac) / denom
    }
}

/// A null distribution whose CDF and survival function can be evaluated.
pub trait NullCdf {
    fn cdf(&self, x: f64) -> f64;
    /// P(S > x), or P(S ≥ x) for discrete nulls (the upper p-value).
    fn sf(&self, x: f64) -> f64;
}

/// Null distributions of the test statistics used by the examples and the data pipeline.
#[derive(Debug, Clone)]
pub enum NullDist {
    Normal {
        mean: f64,
        sd: f64,
    },
    StudentT(StudentsT),
    Gamma(Gamma),
    /// scale² · χ²(df)
    ScaledChiSquared {
        dist: ChiSquared,
        scale2: f64,
    },
    Binomial(Binomial),
    Empirical(Arc<EmpiricalTable>),
}

impl NullDist {
    pub fn student_t(df: f64) -> Result<Self> {
        StudentsT::new(0.0, 1.0, df)
            .map(NullDist::StudentT)
            .map_err(|e| Error::InvalidParameter(format!("t null: {e}")))
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Gamma::new(shape, rate).map(NullDist::Gamma).map_err(|e| Error::InvalidParameter(format!("gamma null: {e}")))
    }

    pub fn scaled_chi_squared(df: f64, scale: f64) -> Result<Self> {
        ChiSquared::new(df)
            .map(|dist| NullDist::ScaledChiSquared { dist, scale2: scale * scale })
            .map_err(|e| Error::InvalidParameter(format!("chi-squared null: {e}")))
    }

    pub fn binomial(trials: u64, p: f64) -> Result<Self> {
        Binomial::new(p, trials)
            .map(NullDist::Binomial)
            .map_err(|e| Error::InvalidParameter(format!("binomial null: {e}")))
    }
}

impl NullCdf for NullDist {
    fn cdf(&self, x: f64) -> f64 {
        match self {
            NullDist::Normal { mean, sd } => norm_cdf((x - mean) / sd),
            NullDist::StudentT(d) => d.cdf(x),
            NullDist::Gamma(d) => d.cdf(x),
            NullDist::ScaledChiSquared { dist, scale2 } => dist.cdf(x / scale2),
            NullDist::Binomial(d) => {
                if x < 0.0 {
                    0.0
                } else {
                    d.cdf(x.floor() as u64)
                }
            }
            NullDist::Empirical(t) => t.cdf(x),
        }
    }

    fn sf(&self, x: f64) -> f64 {
        match self {
            NullDist::Normal { mean, sd } => norm_sf((x - mean) / sd),
            NullDist::StudentT(d) => d.sf(x),
            NullDist::Gamma(d) => d.sf(x),
            NullDist::ScaledChiSquared { dist, scale2 } => dist.sf(x / scale2),
            NullDist::Binomial(d) => {
                let k = x.ceil();
                if k <= 0.0 {
                    1.0
                } else {
                    d.sf(k as u64 - 1)
                }
            }
            NullDist::Empirical(t) => 1.0 - t.cdf(x),
        }
    }
}

impl NullCdf for EmpiricalTable {
    fn cdf(&self, x: f64) -> f64 {
        EmpiricalTable::cdf(self, x)
    }
    fn sf(&self, x: f64) -> f64 {
        1.0 - EmpiricalTable::cdf(self, x)
    }
}

/// Φ⁻¹(F₀(stat)), evaluated through the smaller tail and clamped to [ε, 1−ε].
pub fn zscore(stat: f64, null: &dyn NullCdf) -> Result<f64> {
    if !stat.is_finite() {
        return Err(Error::InvalidParameter(format!("non-finite statistic {stat}")));
    }
    let f = null.cdf(stat);
    if f <= 0.5 {
        Ok(norm_quantile(f.clamp(Z_EPS, 1.0 - Z_EPS)))
    } else {
        let upper = null.sf(stat);
        Ok(-norm_quantile(upper.clamp(Z_EPS, 1.0 - Z_EPS)))
    }
}

/// Tail used to turn a statistic into a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Upper,
    Lower,
    TwoSided,
}

pub fn pvalue(stat: f64, null: &dyn NullCdf, side: Side) -> f64 {
    let p = match side {
        Side::Upper => null.sf(stat),
        Side::Lower => null.cdf(stat),
        Side::TwoSided => 2.0 * null.cdf(stat).min(null.sf(stat)),
    };
    p.clamp(0.0, 1.0)
}

/// π₀ plus a null density and a (possibly mixed) alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupModel {
    pub pi0: f64,
    pub null: DistributionSpec,
    /// Mixture components (weight, density); weights sum to one.
    pub alt: Vec<(f64, DistributionSpec)>,
}

impl TwoGroupModel {
    pub fn new(pi0: f64, null: DistributionSpec, alt: DistributionSpec) -> Result<Self> {
        Self::mixture(pi0, null, vec![(1.0, alt)])
    }

    pub fn mixture(pi0: f64, null: DistributionSpec, alt: Vec<(f64, DistributionSpec)>) -> Result<Self> {
        let model = TwoGroupModel { pi0, null, alt };
        model.validate_parameters()?;
        if model.alt.len() == 1 && model.alt[0].1 == model.null {
            return Err(Error::InvalidParameter("null and alternative are identical".into()));
        }
        Ok(model)
    }

    /// A model whose arms coincide: useful only as a diagnostic (it never stops).
    pub fn degenerate(pi0: f64, spec: DistributionSpec) -> Result<Self> {
        let model = TwoGroupModel { pi0, null: spec.clone(), alt: vec![(1.0, spec)] };
        model.validate_parameters()?;
        Ok(model)
    }

    fn validate_parameters(&self) -> Result<()> {
        if !(self.pi0 > 0.0 && self.pi0 < 1.0) {
            return Err(Error::InvalidParameter(format!("pi0 must lie in (0,1), got {}", self.pi0)));
        }
        if self.alt.is_empty() {
            return Err(Error::InvalidParameter("alternative needs at least one component".into()));
        }
        self.null.validate()?;
        let mut total = 0.0;
        for (w, spec) in &self.alt {
            if !(*w > 0.0) {
                return Err(Error::InvalidParameter(format!("mixture weight must be > 0, got {w}")));
            }
            spec.validate()?;
            total += w;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {total}")));
        }
        if matches!(self.null, DistributionSpec::Empirical(_))
            || self.alt.iter().any(|(_, s)| matches!(s, DistributionSpec::Empirical(_)))
        {
            return Err(Error::InvalidParameter("likelihood models need parametric densities".into()));
        }
        Ok(())
    }

    pub fn components(&self) -> usize {
        self.alt.len()
    }

    pub fn is_simple(&self) -> bool {
        self.alt.len() == 1
    }

    /// Draws the stream-level alternative component.
    pub fn draw_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.alt.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (c, (w, _)) in self.alt.iter().enumerate() {
            acc += w;
            if u < acc {
                return c;
            }
        }
        self.alt.len() - 1
    }

    pub fn sample<R: Rng + ?Sized>(&self, theta: bool, component: usize, rng: &mut R) -> f64 {
        if theta {
            self.alt[component].1.sample(rng)
        } else {
            self.null.sample(rng)
        }
    }

    /// Stream log-likelihood ratio from per-component accumulated LLRs.
    pub fn combine_llr(&self, component_llr: &[f64]) -> f64 {
        if component_llr.len() == 1 {
            return component_llr[0];
        }
        let terms: Vec<f64> = self.alt.iter().zip(component_llr).map(|((w, _), l)| w.ln() + l).collect();
        log_sum_exp(&terms)
    }
}

/// Running mean / sum of squared deviations (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub n: usize,
    pub mean: f64,
    pub m2: f64,
    /// Plain running sum (exact for integer data).
    pub total: f64,
}

impl ArmStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.total += x;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut s = ArmStats::default();
        xs.iter().for_each(|&x| s.push(x));
        s
    }

    pub fn sum(&self) -> f64 {
        self.total
    }

    pub fn sum_sq(&self) -> f64 {
        self.m2 + self.n as f64 * self.mean * self.mean
    }

    /// Sample variance with denominator n − 1.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

/// Per-hypothesis state at the current stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamState {
    pub stream_id: usize,
    /// Stages observed for this stream.
    pub n: usize,
    /// Λₙ: accumulated log-likelihood ratio (mixture-combined when needed).
    pub cum_llr: f64,
    pub component_llr: Vec<f64>,
    /// Set once an observation had zero density under exactly one hypothesis.
    pub saturated: bool,
    /// Current test statistic Sₙ.
    pub stat: f64,
    pub case: ArmStats,
    pub control: ArmStats,
}

impl StreamState {
    pub fn new(stream_id: usize, components: usize) -> Self {
        StreamState {
            stream_id,
            n: 0,
            cum_llr: 0.0,
            component_llr: vec![0.0; components.max(1)],
            saturated: false,
            stat: 0.0,
            case: ArmStats::default(),
            control: ArmStats::default(),
        }
    }
}

/// Adds log f₁(x) − log f₀(x) to the stream's LLR and bumps n.
pub fn update_llr(state: &mut StreamState, model: &TwoGroupModel, x: f64) {
    if state.component_llr.len() != model.components() {
        state.component_llr.resize(model.components(), 0.0);
    }
    let l0 = model.null.log_density(x);
    for (c, (_, alt)) in model.alt.iter().enumerate() {
        let slot = &mut state.component_llr[c];
        let inc = alt.log_density(x) - l0;
        if inc.is_nan() {
            // outside both supports: no information
            continue;
        }
        if inc.is_infinite() {
            state.saturated = true;
            *slot = LLR_SATURATION.copysign(inc);
        } else if slot.abs() < LLR_SATURATION || !state.saturated {
            *slot += inc;
        }
    }
    state.cum_llr = model.combine_llr(&state.component_llr);
    state.n += 1;
}

/// Pooled (or Welch) two-sample t of case minus control.
pub fn two_sample_t(case: &ArmStats, control: &ArmStats, welch: bool) -> Result<(f64, f64)> {
    let (n1, n2) = (case.n, control.n);
    if n1 < 2 || n2 < 2 {
        return Err(Error::InsufficientData(format!(
            "two-sample t needs >= 2 observations per arm (case {n1}, control {n2})"
        )));
    }
    let diff = case.mean - control.mean;
    let (f1, f2) = (n1 as f64, n2 as f64);
    if welch {
        let (v1, v2) = (case.variance() / f1, control.variance() / f2);
        let se2 = v1 + v2;
        if !(se2 > 0.0) {
            return Err(Error::DegenerateSample("both arms have zero variance".into()));
        }
        let df = se2 * se2 / (v1 * v1 / (f1 - 1.0) + v2 * v2 / (f2 - 1.0));
        Ok((diff / se2.sqrt(), df))
    } else {
        let pooled = (case.m2 + control.m2) / (f1 + f2 - 2.0);
        if !(pooled > 0.0) {
            return Err(Error::DegenerateSample("pooled standard deviation is zero".into()));
        }
        let t = diff / (pooled.sqrt() * (1.0 / f1 + 1.0 / f2).sqrt());
        Ok((t, f1 + f2 - 2.0))
    }
}

/// One-sample t of the mean against zero, with n − 1 degrees of freedom.
pub fn one_sample_t(arm: &ArmStats) -> Result<(f64, f64)> {
    if arm.n < 2 {
        return Err(Error::InsufficientData("one-sample t needs >= 2 observations".into()));
    }
    let sd = arm.variance().sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateSample("zero sample variance".into()));
    }
    Ok((arm.mean / (sd / (arm.n as f64).sqrt()), (arm.n - 1) as f64))
}

/// Tabulates `draws` simulated null statistics.
pub fn empirical_null_cdf<R, F>(draws: usize, rng: &mut R, mut statistic: F) -> Result<EmpiricalTable>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> f64,
{
    if draws < 1000 {
        return Err(Error::InvalidParameter(format!("empirical null needs >= 1000 draws, got {draws}")));
    }
    EmpiricalTable::new((0..draws).map(|_| statistic(rng)).collect())
}
