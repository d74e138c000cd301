//! Adaptive stopping boundary: rejection/acceptance counts, cutoffs,
//! stopping check, choice of s and the final decision, plus the
//! Q̂ / Q̂′ level-set diagnostics.

use serde::{Deserialize, Serialize};

use crate::decision::DecisionVector;
use crate::error::{Error, Result};
use crate::lfdr::LfdrVector;

/// Indices that sort `values` ascending; ties keep index order.
pub fn stable_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    idx
}

/// Largest q with mean of the q smallest values ≤ α (0 if none), on sorted input.
pub fn reject_count_sorted(sorted: &[f64], alpha: f64) -> usize {
    let mut sum = 0.0;
    let mut r = 0;
    for (q, &t) in sorted.iter().enumerate() {
        sum += t;
        if sum <= alpha * (q + 1) as f64 {
            r = q + 1;
        }
    }
    r
}

/// Largest q with mean of (1 − t) over the q largest values ≤ β (0 if none), on sorted input.
pub fn accept_count_sorted(sorted: &[f64], beta: f64) -> usize {
    let mut sum = 0.0;
    let mut a = 0;
    for (q, &t) in sorted.iter().rev().enumerate() {
        sum += 1.0 - t;
        if sum <= beta * (q + 1) as f64 {
            a = q + 1;
        }
    }
    a
}

fn sorted_values(values: &[f64]) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

pub fn reject_count(lfdr: &LfdrVector, alpha: f64) -> usize {
    reject_count_sorted(&sorted_values(&lfdr.values), alpha)
}

pub fn accept_count(lfdr: &LfdrVector, beta: f64) -> usize {
    accept_count_sorted(&sorted_values(&lfdr.values), beta)
}

/// (t_lower, t_upper) from sorted values: t_lower = t⁽ʳ⁺¹⁾ (1 when r = m),
/// t_upper = t⁽ᵐ⁻ᵃ⁾ (0 when a = m, so that it equals inf{t: Q̂′(t) ≤ β}).
pub fn cutoffs_sorted(sorted: &[f64], r: usize, a: usize) -> (f64, f64) {
    let m = sorted.len();
    let lower = if r >= m { 1.0 } else { sorted[r] };
    let upper = if a >= m { 0.0 } else { sorted[m - a - 1] };
    (lower, upper)
}

pub fn cutoffs(lfdr: &LfdrVector, r: usize, a: usize) -> (f64, f64) {
    cutoffs_sorted(&sorted_values(&lfdr.values), r, a)
}

/// Count rule: stop iff r + a ≥ m.
pub fn stop_check(r: usize, a: usize, m: usize) -> bool {
    r + a >= m
}

/// Which stopping rule the runner applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCriterion {
    /// r + a ≥ m.
    CountCover,
    /// t_lower > t_upper; r = m or a = m stops outright.
    #[default]
    CutoffSeparation,
}

impl StopCriterion {
    pub fn stops(self, sorted: &[f64], r: usize, a: usize) -> bool {
        let m = sorted.len();
        match self {
            StopCriterion::CountCover => stop_check(r, a, m),
            StopCriterion::CutoffSeparation => {
                if r >= m {
                    return true;
                }
                if a >= m {
                    return true;
                }
                let (lower, upper) = cutoffs_sorted(sorted, r, a);
                lower > upper
            }
        }
    }
}

/// Boundary state at one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySnapshot {
    pub stage: usize,
    /// Ascending lfdr values.
    pub sorted: Vec<f64>,
    /// `order[k]` is the original index of `sorted[k]`.
    pub order: Vec<usize>,
    pub r: usize,
    pub a: usize,
    pub t_lower: f64,
    pub t_upper: f64,
    pub stopped: bool,
}

impl BoundarySnapshot {
    pub fn build(lfdr: &LfdrVector, alpha: f64, beta: f64, criterion: StopCriterion) -> Self {
        let order = stable_order(&lfdr.values);
        let sorted: Vec<f64> = order.iter().map(|&i| lfdr.values[i]).collect();
        let r = reject_count_sorted(&sorted, alpha);
        let a = accept_count_sorted(&sorted, beta);
        let (t_lower, t_upper) = cutoffs_sorted(&sorted, r, a);
        let stopped = criterion.stops(&sorted, r, a);
        BoundarySnapshot { stage: lfdr.stage, sorted, order, r, a, t_lower, t_upper, stopped }
    }

    pub fn m(&self) -> usize {
        self.sorted.len()
    }
}

/// The split of the undecided region [m − a, r].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SSelection {
    pub s: usize,
    pub p1: f64,
    pub alpha1: f64,
    pub beta1: f64,
}

/// α₁, β₁ and p₁ = π₀α₁ / ((1 − π₀)β₁).
pub fn split_levels(pi0: f64, alpha: f64, beta: f64) -> (f64, f64, f64) {
    let ob = beta / (1.0 - beta);
    let oa = alpha / (1.0 - alpha);
    let alpha1 = ((1.0 - pi0) / pi0 - ob) / ((1.0 - alpha) / alpha - ob);
    let beta1 = (pi0 / (1.0 - pi0) - oa) / ((1.0 - beta) / beta - oa);
    let p1 = pi0 * alpha1 / ((1.0 - pi0) * beta1);
    (alpha1, beta1, p1)
}

/// s = (m − a) + ⌊(r + a − m)·p₁⌋ clamped to [m − a, r]; s = r when the
/// split levels are unusable.
pub fn select_s(r: usize, a: usize, m: usize, pi0: f64, alpha: f64, beta: f64) -> Result<SSelection> {
    if !stop_check(r, a, m) {
        return Err(Error::NotStopped { r, a, m });
    }
    let (alpha1, beta1, p1) = split_levels(pi0, alpha, beta);
    let lo = m.saturating_sub(a);
    if !(alpha1 > 0.0) || !(beta1 > 0.0) || !p1.is_finite() {
        return Ok(SSelection { s: r, p1, alpha1, beta1 });
    }
    let width = (r + a - m) as f64;
    let s = lo + (width * p1).floor().max(0.0) as usize;
    Ok(SSelection { s: s.clamp(lo, r), p1, alpha1, beta1 })
}

/// δᵢ = 1 iff tᵢ ≤ t⁽ˢ⁾ (s = 0 rejects nothing).
pub fn decide(lfdr: &[f64], s: usize) -> DecisionVector {
    if s == 0 {
        return DecisionVector::none(lfdr.len());
    }
    let sorted = sorted_values(lfdr);
    let threshold = sorted[s.min(sorted.len()) - 1];
    DecisionVector(lfdr.iter().map(|&t| t <= threshold).collect())
}

/// Q̂(t): mean of the lfdr values ≤ t (0 if there are none).
pub fn qhat(lfdr: &[f64], t: f64) -> f64 {
    let (sum, n) = lfdr.iter().filter(|&&v| v <= t).fold((0.0, 0usize), |(s, n), &v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Q̂′(t): mean of 1 − lfdr over values ≥ t (0 if there are none).
pub fn qhat_prime(lfdr: &[f64], t: f64) -> f64 {
    let (sum, n) = lfdr.iter().filter(|&&v| v >= t).fold((0.0, 0usize), |(s, n), &v| (s + 1.0 - v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// sup{t ∈ [0,1]: Q̂(t) ≤ α}, found by evaluating Q̂ at the jump points.
pub fn qhat_sup_level(lfdr: &[f64], alpha: f64) -> f64 {
    // Q̂ is right-continuous and nondecreasing: the sup is the first jump above α.
    sorted_values(lfdr).into_iter().find(|&v| qhat(lfdr, v) > alpha).unwrap_or(1.0)
}

/// inf{t ∈ [0,1]: Q̂′(t) ≤ β}, found by evaluating Q̂′ at the jump points.
pub fn qhat_prime_inf_level(lfdr: &[f64], beta: f64) -> f64 {
    // Q̂′ is left-continuous and nonincreasing: the inf is the last jump above β.
    sorted_values(lfdr).into_iter().rev().find(|&v| qhat_prime(lfdr, v) > beta).unwrap_or(0.0)
}
