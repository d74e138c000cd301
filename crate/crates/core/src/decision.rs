//! Truth/decision vectors, error counts and the result of a sequential run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// θ: `true` where the alternative holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthVector(pub Vec<bool>);

/// δ: `true` where the null is rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionVector(pub Vec<bool>);

impl TruthVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn alternatives(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

impl DecisionVector {
    pub fn none(m: usize) -> Self {
        DecisionVector(vec![false; m])
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn rejections(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

/// V (false rejections), R (rejections), W (false acceptances) out of m.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub v: usize,
    pub r: usize,
    pub w: usize,
    pub m: usize,
}

pub fn error_counts(truth: &TruthVector, decisions: &DecisionVector) -> Result<ErrorCounts> {
    if truth.len() != decisions.len() {
        return Err(Error::Dimension { expected: truth.len(), got: decisions.len() });
    }
    let mut c = ErrorCounts { v: 0, r: 0, w: 0, m: truth.len() };
    for (&theta, &delta) in truth.0.iter().zip(&decisions.0) {
        match (theta, delta) {
            (false, true) => {
                c.v += 1;
                c.r += 1;
            }
            (true, true) => c.r += 1,
            (true, false) => c.w += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

/// False discovery proportion V / (R ∨ 1).
pub fn fdp(c: &ErrorCounts) -> f64 {
    c.v as f64 / c.r.max(1) as f64
}

/// False nondiscovery proportion W / ((m − R) ∨ 1).
pub fn fnp(c: &ErrorCounts) -> f64 {
    c.w as f64 / (c.m - c.r).max(1) as f64
}

/// Boundary state recorded at one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub n: usize,
    pub r: usize,
    pub a: usize,
    pub t_lower: f64,
    pub t_upper: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi0_hat: Option<f64>,
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// The boundary stopped.
    Stopped,
    /// The stage cap was hit first.
    Truncated,
    /// The data source ran out of observations first.
    Exhausted,
}

/// (T, δ) plus diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialResult {
    pub stopping_time: usize,
    pub decisions: DecisionVector,
    pub outcome: Outcome,
    pub r: usize,
    pub a: usize,
    pub s: usize,
    pub t_lower: f64,
    pub t_upper: f64,
    pub pi0_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<StageTrace>>,
}

impl SequentialResult {
    pub fn stopped(&self) -> bool {
        self.outcome == Outcome::Stopped
    }
    pub fn discoveries(&self) -> usize {
        self.decisions.rejections()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tv(v: &[u8]) -> TruthVector {
        TruthVector(v.iter().map(|&x| x == 1).collect())
    }
    fn dv(v: &[u8]) -> DecisionVector {
        DecisionVector(v.iter().map(|&x| x == 1).collect())
    }

    #[test]
    fn counts_examples() {
        let c = error_counts(&tv(&[0, 1, 0]), &dv(&[1, 1, 0])).unwrap();
        assert_eq!((c.v, c.r, c.w), (1, 2, 0));
        let c = error_counts(&tv(&[1, 1]), &dv(&[0, 0])).unwrap();
        assert_eq!((c.v, c.r, c.w), (0, 0, 2));
        let c = error_counts(&tv(&[0, 0, 1, 1]), &dv(&[1, 0, 1, 0])).unwrap();
        assert_eq!((c.v, c.r, c.w), (1, 2, 1));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(error_counts(&tv(&[0, 1]), &dv(&[1])), Err(Error::Dimension { expected: 2, got: 1 })));
    }

    #[test]
    fn proportions() {
        let c = |v, r, w, m| ErrorCounts { v, r, w, m };
        assert_eq!(fdp(&c(1, 2, 0, 4)), 0.5);
        assert_eq!(fdp(&c(0, 0, 0, 4)), 0.0);
        assert_eq!(fdp(&c(3, 10, 0, 20)), 0.3);
        assert_eq!(fnp(&c(0, 5, 0, 10)), 0.0);
        assert_eq!(fnp(&c(0, 4, 0, 4)), 0.0);
        assert_eq!(fnp(&c(0, 2, 1, 4)), 0.5);
    }
}
