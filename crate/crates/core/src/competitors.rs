//! Competing procedures: the GAP rule, BH step-up and the fixed-sample lfdr rule.

use crate::boundary::{decide, reject_count_sorted};
use crate::decision::{DecisionVector, Outcome, SequentialResult};
use crate::error::{Error, Result};
use crate::lfdr::LfdrVector;
use crate::models::TwoGroupModel;
use crate::runner::StageSource;

/// log(K(m − K) / min(α, β)).
pub fn gap_ao_cutoff(k: usize, m: usize, alpha: f64, beta: f64) -> Result<f64> {
    if k == 0 || k >= m {
        return Err(Error::InvalidK { k, m });
    }
    Ok(((k * (m - k)) as f64 / alpha.min(beta)).ln())
}

/// Gap Λ⁽ᴷ⁾ − Λ⁽ᴷ⁺¹⁾ between the K-th and (K+1)-th largest values.
pub fn ordered_gap(llr: &[f64], k: usize) -> f64 {
    let mut buf = llr.to_vec();
    // descending: after partitioning, buf[..k] holds the k largest
    let (_, kth, rest) = buf.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    let kth = *kth;
    let next = rest.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    kth - next
}

/// Rejects the K largest LLRs; ties go to the lower index.
fn top_k(llr: &[f64], k: usize) -> DecisionVector {
    let mut idx: Vec<usize> = (0..llr.len()).collect();
    idx.sort_by(|&i, &j| llr[j].total_cmp(&llr[i]).then(i.cmp(&j)));
    let mut d = vec![false; llr.len()];
    idx[..k].iter().for_each(|&i| d[i] = true);
    DecisionVector(d)
}

/// Observes one stage at a time until the ordered LLR gap at rank K reaches `cutoff`.
pub fn run_gap(
    source: &mut dyn StageSource,
    model: &TwoGroupModel,
    k: usize,
    cutoff: f64,
    max_stages: usize,
) -> Result<SequentialResult> {
    let m = source.m();
    if k == 0 || k >= m {
        return Err(Error::InvalidK { k, m });
    }
    if !model.is_simple() {
        return Err(Error::InvalidParameter(
            "the GAP rule needs simple hypotheses (single-component alternative)".into(),
        ));
    }
    if source.stage() == 0 && !source.advance()? {
        return Err(Error::InsufficientData("no observations".into()));
    }
    loop {
        let n = source.stage();
        let llr: Vec<f64> = source.states().iter().map(|s| s.cum_llr).collect();
        let gap = ordered_gap(&llr, k);
        let outcome = if gap >= cutoff {
            Some(Outcome::Stopped)
        } else if n >= max_stages {
            Some(Outcome::Truncated)
        } else if !source.advance()? {
            Some(Outcome::Exhausted)
        } else {
            None
        };
        if let Some(outcome) = outcome {
            return Ok(SequentialResult {
                stopping_time: n,
                decisions: top_k(&llr, k),
                outcome,
                r: k,
                a: m - k,
                s: k,
                t_lower: f64::NAN,
                t_upper: f64::NAN,
                pi0_hat: None,
                trace: None,
            });
        }
    }
}

/// Smallest grid cutoff (step, 2·step, … ≤ cap) whose evaluated (f̂dr, f̂nr)
/// meets (α, β). `evaluate` returns proportions, not percentages.
pub fn calibrate_gap_sb<F>(alpha: f64, beta: f64, step: f64, cap: f64, mut evaluate: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    if !(step > 0.0) || cap < step {
        return Err(Error::InvalidParameter(format!("bad calibration grid (step {step}, cap {cap})")));
    }
    let points = (cap / step + 1e-9).floor() as usize;
    for i in 1..=points {
        let c = (i as f64 * step * 1e6).round() / 1e6;
        let (fdr, fnr) = evaluate(c)?;
        log::debug!("gap calibration: c={c:.1} fdr={fdr:.4} fnr={fnr:.4}");
        if fdr <= alpha && fnr <= beta {
            return Ok(c);
        }
    }
    Err(Error::CalibrationFailure(format!("no cutoff up to {cap} met fdr <= {alpha} and fnr <= {beta}")))
}

/// Benjamini–Hochberg step-up at level α.
pub fn bh(pvalues: &[f64], alpha: f64) -> DecisionVector {
    let m = pvalues.len();
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let kstar = (1..=m).rev().find(|&k| sorted[k - 1] <= k as f64 * alpha / m as f64).unwrap_or(0);
    if kstar == 0 {
        return DecisionVector::none(m);
    }
    let threshold = sorted[kstar - 1];
    DecisionVector(pvalues.iter().map(|&p| p <= threshold).collect())
}

/// Fixed-sample lfdr step-up: reject the largest prefix whose mean lfdr ≤ α.
pub fn adaptz_fixed(lfdr: &LfdrVector, alpha: f64) -> DecisionVector {
    let mut sorted = lfdr.values.clone();
    sorted.sort_by(f64::total_cmp);
    decide(&lfdr.values, reject_count_sorted(&sorted, alpha))
}
