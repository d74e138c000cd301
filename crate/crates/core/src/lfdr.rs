//! Local false discovery rates: the oracle path and the estimated path
//! (null proportion + kernel density on z-scores).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{StreamState, TwoGroupModel};
use crate::special::norm_pdf;

/// Lower clamp for π̂₀.
pub const PI0_MIN: f64 = 0.01;
/// Floor applied to estimated densities.
pub const DENSITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LfdrKind {
    Oracle,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfdrVector {
    pub values: Vec<f64>,
    pub stage: usize,
    pub kind: LfdrKind,
}

impl LfdrVector {
    /// Wraps values, rejecting anything outside [0, 1].
    pub fn new(values: Vec<f64>, stage: usize, kind: LfdrKind) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("lfdr[{i}] = {v} outside [0,1]")));
        }
        Ok(LfdrVector { values, stage, kind })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// t = π₀ / (π₀ + (1 − π₀)·e^Λ), computed without overflow.
pub fn oracle_lfdr_value(pi0: f64, llr: f64) -> f64 {
    let x = ((1.0 - pi0) / pi0).ln() + llr;
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

pub fn oracle_lfdr(states: &[StreamState], model: &TwoGroupModel) -> LfdrVector {
    let stage = states.first().map_or(0, |s| s.n);
    let values = states.iter().map(|s| oracle_lfdr_value(model.pi0, s.cum_llr)).collect();
    LfdrVector { values, stage, kind: LfdrKind::Oracle }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pi0Method {
    JinCai,
    Storey,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullProportionEstimate {
    pub pi0_hat: f64,
    pub method: Pi0Method,
    pub tuning: f64,
}

const XI_POINTS: usize = 101;

/// Characteristic-function estimate of π₀ under a N(0,1) null.
///
/// For each frequency t on the grid {0, λ, 2λ, …} up to √(log m) the
/// non-null fraction is estimated as
/// `1 − Σᵢ wᵢ·exp((tξᵢ)²/2)·Re φ̂(tξᵢ) / Σᵢ wᵢ` with ξᵢ = i/100 and the
/// triangular weight wᵢ = 1 − ξᵢ; the largest value over the grid is kept
/// and π̂₀ = 1 − that, clamped to [0.01, 1].
pub fn estimate_pi0_jincai(z: &[f64], lambda: f64) -> Result<NullProportionEstimate> {
    let m = z.len();
    if m < 2 {
        return Err(Error::InsufficientData(format!("pi0 estimation needs m >= 2, got {m}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
    }
    let tmax = (m as f64).ln().sqrt();
    let steps = (tmax / lambda + 1e-9).floor() as usize;
    // every frequency t·ξᵢ = (k·i)·δ with δ = λ/100
    let delta = lambda / (XI_POINTS - 1) as f64;
    let ecf = cosine_moments(z, delta, steps * (XI_POINTS - 1));

    let w: Vec<f64> = (0..XI_POINTS).map(|i| 1.0 - i as f64 / (XI_POINTS - 1) as f64).collect();
    let wsum: f64 = w.iter().sum();
    let mut best = 0.0f64;
    for k in 0..=steps {
        let t = k as f64 * lambda;
        let mut acc = 0.0;
        for (i, wi) in w.iter().enumerate() {
            let xi = i as f64 / (XI_POINTS - 1) as f64;
            let f = (0.5 * (t * xi).powi(2)).exp();
            acc += wi * f * ecf[k * i];
        }
        best = best.max(1.0 - acc / wsum);
    }
    Ok(NullProportionEstimate { pi0_hat: (1.0 - best).clamp(PI0_MIN, 1.0), method: Pi0Method::JinCai, tuning: lambda })
}

/// Single-frequency cosine estimate `mean(cos(t z))·exp(t²/2)` at t = √(2λ log m).
/// Kept for comparison only: with well-separated alternatives it
/// under-estimates π₀ noticeably, so it is not the default.
pub fn estimate_pi0_cosine(z: &[f64], lambda: f64) -> Result<NullProportionEstimate> {
    let m = z.len();
    if m < 2 {
        return Err(Error::InsufficientData(format!("pi0 estimation needs m >= 2, got {m}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
    }
    let t = (2.0 * lambda * (m as f64).ln()).sqrt();
    let c = z.iter().map(|x| (t * x).cos()).sum::<f64>() / m as f64;
    Ok(NullProportionEstimate {
        pi0_hat: (c * (0.5 * t * t).exp()).clamp(PI0_MIN, 1.0),
        method: Pi0Method::JinCai,
        tuning: lambda,
    })
}

/// `out[q] = mean_j cos(q·δ·z_j)` for q = 0..=qmax via the Chebyshev recurrence.
fn cosine_moments(z: &[f64], delta: f64, qmax: usize) -> Vec<f64> {
    let m = z.len() as f64;
    let two_c: Vec<f64> = z.iter().map(|x| 2.0 * (delta * x).cos()).collect();
    let mut prev = vec![1.0; z.len()];
    let mut cur: Vec<f64> = two_c.iter().map(|c| 0.5 * c).collect();
    let mut out = Vec::with_capacity(qmax + 1);
    out.push(1.0);
    if qmax == 0 {
        return out;
    }
    out.push(cur.iter().sum::<f64>() / m);
    for _ in 2..=qmax {
        let mut s = 0.0;
        for ((p, c), tc) in prev.iter_mut().zip(cur.iter_mut()).zip(&two_c) {
            let next = tc * *c - *p;
            *p = *c;
            *c = next;
            s += next;
        }
        out.push(s / m);
    }
    out
}

/// Storey's estimator #{p > λ} / (m(1 − λ)), clamped to [0.01, 1].
pub fn estimate_pi0_storey(pvalues: &[f64], lambda: f64) -> Result<NullProportionEstimate> {
    if pvalues.is_empty() {
        return Err(Error::InsufficientData("no p-values".into()));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!("storey lambda must lie in (0,1), got {lambda}")));
    }
    if let Some(p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidParameter(format!("p-value {p} outside [0,1]")));
    }
    let above = pvalues.iter().filter(|&&p| p > lambda).count() as f64;
    let raw = above / (pvalues.len() as f64 * (1.0 - lambda));
    Ok(NullProportionEstimate { pi0_hat: raw.clamp(PI0_MIN, 1.0), method: Pi0Method::Storey, tuning: lambda })
}

/// Gaussian kernel density estimate with Silverman's rule-of-thumb bandwidth.
#[derive(Debug, Clone)]
pub struct Kde {
    sample: Vec<f64>,
    h: f64,
}

/// Linear interpolation quantile (type 7).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman bandwidth 0.9·min(sd, IQR/1.34)·m^(−1/5); falls back to sd when the IQR is zero.
pub fn silverman_bandwidth(z: &[f64]) -> Result<f64> {
    let m = z.len();
    if m < 2 {
        return Err(Error::InsufficientData(format!("kde needs m >= 2, got {m}")));
    }
    let mean = z.iter().sum::<f64>() / m as f64;
    let sd = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::DegenerateSample("z-scores have zero spread".into()));
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * (m as f64).powf(-0.2))
}

/// Sample sizes up to this use exact O(m²) evaluation.
const EXACT_LIMIT: usize = 600;
/// Kernel truncation in bandwidths for the binned path.
const KERNEL_REACH: f64 = 6.0;

impl Kde {
    pub fn new(z: &[f64]) -> Result<Self> {
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite z-score".into()));
        }
        let h = silverman_bandwidth(z)?;
        Ok(Kde { sample: z.to_vec(), h })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    /// f̂(x), floored at 1e−12.
    pub fn density(&self, x: f64) -> f64 {
        let s: f64 = self.sample.iter().map(|z| norm_pdf((x - z) / self.h)).sum();
        (s / (self.sample.len() as f64 * self.h)).max(DENSITY_FLOOR)
    }

    /// f̂ at many points; large inputs use linear binning on a fine grid.
    pub fn density_many(&self, xs: &[f64]) -> Vec<f64> {
        let m = self.sample.len();
        if m <= EXACT_LIMIT && xs.len() <= EXACT_LIMIT {
            return xs.iter().map(|&x| self.density(x)).collect();
        }
        match self.binned() {
            Some(grid) => xs.iter().map(|&x| grid.eval(x).max(DENSITY_FLOOR)).collect(),
            None => xs.iter().map(|&x| self.density(x)).collect(),
        }
    }

    fn binned(&self) -> Option<BinnedGrid> {
        let h = self.h;
        let lo = self.sample.iter().cloned().fold(f64::INFINITY, f64::min) - KERNEL_REACH * h;
        let hi = self.sample.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + KERNEL_REACH * h;
        let step_target = h / 25.0;
        let points = (((hi - lo) / step_target).ceil() as usize + 1).max(1024);
        if points > 1 << 17 {
            return None;
        }
        let dx = (hi - lo) / (points - 1) as f64;
        let mut counts = vec![0.0; points];
        for &z in &self.sample {
            let pos = (z - lo) / dx;
            let i = (pos.floor() as usize).min(points - 2);
            let f = pos - i as f64;
            counts[i] += 1.0 - f;
            counts[i + 1] += f;
        }
        let reach = (KERNEL_REACH * h / dx).ceil() as usize;
        let kernel: Vec<f64> = (0..=reach).map(|k| norm_pdf(k as f64 * dx / h)).collect();
        let scale = 1.0 / (self.sample.len() as f64 * h);
        let mut dens = vec![0.0; points];
        for (i, &c) in counts.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let a = i.saturating_sub(reach);
            let b = (i + reach).min(points - 1);
            for (j, d) in dens.iter_mut().enumerate().take(b + 1).skip(a) {
                *d += c * kernel[i.abs_diff(j)];
            }
        }
        dens.iter_mut().for_each(|d| *d *= scale);
        Some(BinnedGrid { lo, dx, dens })
    }
}

struct BinnedGrid {
    lo: f64,
    dx: f64,
    dens: Vec<f64>,
}

impl BinnedGrid {
    fn eval(&self, x: f64) -> f64 {
        let pos = (x - self.lo) / self.dx;
        if pos < 0.0 || pos > (self.dens.len() - 1) as f64 {
            return 0.0;
        }
        let i = (pos.floor() as usize).min(self.dens.len() - 2);
        let f = pos - i as f64;
        self.dens[i] * (1.0 - f) + self.dens[i + 1] * f
    }
}

/// t̂ⱼ = clamp(π̂₀·φ(zⱼ)/f̂(zⱼ), 0, 1) given densities already evaluated at z.
pub fn estimated_lfdr_from_density(z: &[f64], pi0: f64, density: &[f64], stage: usize) -> Result<LfdrVector> {
    if z.len() != density.len() {
        return Err(Error::Dimension { expected: z.len(), got: density.len() });
    }
    let values =
        z.iter().zip(density).map(|(&zi, &f)| (pi0 * norm_pdf(zi) / f.max(DENSITY_FLOOR)).clamp(0.0, 1.0)).collect();
    Ok(LfdrVector { values, stage, kind: LfdrKind::Estimated })
}

pub fn estimated_lfdr(z: &[f64], pi0: &NullProportionEstimate, kde: &Kde, stage: usize) -> Result<LfdrVector> {
    let dens = kde.density_many(z);
    estimated_lfdr_from_density(z, pi0.pi0_hat, &dens, stage)
}

/// π̂₀ (characteristic-function estimator) plus KDE, returning the lfdr and π̂₀.
/// Identical scores carry no evidence against any null: every lfdr is 1.
pub fn data_driven_lfdr(z: &[f64], lambda: f64, stage: usize) -> Result<(LfdrVector, f64)> {
    if !z.is_empty() && z.windows(2).all(|w| w[0] == w[1]) {
        return Ok((LfdrVector::new(vec![1.0; z.len()], stage, LfdrKind::Estimated)?, 1.0));
    }
    let pi0 = estimate_pi0_jincai(z, lambda)?;
    let kde = Kde::new(z)?;
    Ok((estimated_lfdr(z, &pi0, &kde, stage)?, pi0.pi0_hat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn mixture(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = Vec::with_capacity(n);
        let mut alt = Vec::with_capacity(n);
        for _ in 0..n {
            let a = rand::Rng::random::<f64>(&mut rng) < 0.2;
            let e: f64 = StandardNormal.sample(&mut rng);
            z.push(if a { 3.0 + e } else { e });
            alt.push(a);
        }
        (z, alt)
    }

    #[test]
    fn oracle_examples() {
        assert_abs_diff_eq!(oracle_lfdr_value(0.5, 0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(oracle_lfdr_value(0.8, 4f64.ln()), 0.5, epsilon = 1e-15);
        assert!(oracle_lfdr_value(0.8, 709.0) < 1e-300);
        assert_eq!(oracle_lfdr_value(0.8, f64::INFINITY), 0.0);
        assert_eq!(oracle_lfdr_value(0.8, f64::NEG_INFINITY), 1.0);
    }

    #[test]
    fn jincai_degenerate_and_errors() {
        assert_eq!(estimate_pi0_jincai(&[0.0, 0.0], 0.1).unwrap().pi0_hat, 1.0);
        assert!(matches!(estimate_pi0_jincai(&[0.0], 0.1), Err(Error::InsufficientData(_))));
        assert!(estimate_pi0_jincai(&[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn jincai_pure_null() {
        let p = estimate_pi0_jincai(&normals(10_000, 1), 0.1).unwrap().pi0_hat;
        assert!((0.95..=1.0).contains(&p), "{p}");
    }

    #[test]
    fn jincai_mixture() {
        let (z, _) = mixture(10_000, 2);
        let p = estimate_pi0_jincai(&z, 0.1).unwrap().pi0_hat;
        assert!((0.7..=0.9).contains(&p), "{p}");
    }

    #[test]
    fn cosine_moments_match_direct() {
        let z = normals(50, 5);
        let mom = cosine_moments(&z, 0.003, 900);
        for q in [0usize, 1, 2, 17, 450, 900] {
            let direct = z.iter().map(|x| (q as f64 * 0.003 * x).cos()).sum::<f64>() / 50.0;
            assert_abs_diff_eq!(mom[q], direct, epsilon = 1e-11);
        }
    }

    #[test]
    fn storey_examples() {
        let s = |p: &[f64]| estimate_pi0_storey(p, 0.5).unwrap().pi0_hat;
        assert_eq!(s(&[0.9, 0.8, 0.7, 0.6]), 1.0);
        assert_eq!(s(&[0.01, 0.02, 0.9, 0.95]), 1.0);
        let mut p = vec![0.01; 9];
        p.push(0.9);
        assert_abs_diff_eq!(s(&p), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn kde_two_points() {
        let k = Kde::new(&[-1.0, 1.0]).unwrap();
        let h = k.bandwidth();
        // sd = √2, IQR/1.34 = 1/1.34
        assert_abs_diff_eq!(h, 0.9 * (1.0 / 1.34) * 2f64.powf(-0.2), epsilon = 1e-15);
        assert_abs_diff_eq!(k.density(0.0), norm_pdf(1.0 / h) / h, epsilon = 1e-15);
    }

    #[test]
    fn kde_degenerate() {
        assert!(matches!(Kde::new(&[0.0, 0.0, 0.0]), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn kde_recovers_normal() {
        let z = normals(10_000, 7);
        let k = Kde::new(&z).unwrap();
        let grid: Vec<f64> = (0..=600).map(|i| -3.0 + i as f64 * 0.01).collect();
        let d = k.density_many(&grid);
        let sup = grid.iter().zip(&d).map(|(x, f)| (f - norm_pdf(*x)).abs()).fold(0.0, f64::max);
        assert!(sup < 0.02, "{sup}");
    }

    #[test]
    fn binned_matches_exact() {
        let (z, _) = mixture(3000, 9);
        let k = Kde::new(&z).unwrap();
        let fast = k.density_many(&z);
        for (x, f) in z.iter().zip(&fast).step_by(97) {
            let exact = k.density(*x);
            assert!((f - exact).abs() < 1e-4 * exact.max(1e-3), "{f} vs {exact}");
        }
    }

    #[test]
    fn estimated_examples() {
        let z = [-1.0, 0.0, 2.0];
        let phi: Vec<f64> = z.iter().map(|&x| norm_pdf(x)).collect();
        let t = estimated_lfdr_from_density(&z, 1.0, &phi, 1).unwrap();
        assert!(t.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let t = estimated_lfdr_from_density(&z, 0.5, &phi, 1).unwrap();
        assert!(t.values.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn estimated_close_to_oracle() {
        let (z, _) = mixture(10_000, 4);
        let pi0 = estimate_pi0_jincai(&z, 0.1).unwrap();
        let k = Kde::new(&z).unwrap();
        let est = estimated_lfdr(&z, &pi0, &k, 1).unwrap();
        let mae = z
            .iter()
            .zip(&est.values)
            .map(|(&x, &t)| {
                let f0 = norm_pdf(x);
                let oracle = 0.8 * f0 / (0.8 * f0 + 0.2 * norm_pdf(x - 3.0));
                (t - oracle).abs()
            })
            .sum::<f64>()
            / z.len() as f64;
        assert!(mae < 0.05, "{mae}");
    }
}
