//! Standard normal helpers.

use libm::erfc;
use statrs::function::erf::erfc_inv;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail 1 − Φ(x), accurate for large x.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Φ⁻¹(p) for p in (0, 1); ±∞ at the endpoints.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        // 1 − p is exact here
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

/// Φ⁻¹(p) for p ≤ ½: a rough erfc⁻¹ start polished by Newton steps on the lower tail.
fn lower_quantile(p: f64) -> f64 {
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..2 {
        let d = norm_pdf(x);
        if d <= 0.0 {
            break;
        }
        x -= (norm_cdf(x) - p) / d;
    }
    x
}

/// log Σ exp(xᵢ) without overflow.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + xs.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn round_trip() {
        let mut x = -6.0;
        while x <= 6.0 {
            // through the smaller tail, as the z-score map does
            let back = if x <= 0.0 { norm_quantile(norm_cdf(x)) } else { -norm_quantile(norm_sf(x)) };
            assert_abs_diff_eq!(back, x, epsilon = 1e-9);
            x += 0.01;
        }
    }

    #[test]
    fn known_values() {
        assert_abs_diff_eq!(norm_quantile(0.975), 1.959963984540054, epsilon = 1e-12);
        assert_abs_diff_eq!(norm_pdf(0.0), 0.3989422804014327, epsilon = 1e-15);
        assert_abs_diff_eq!(norm_sf(8.0), 6.22096057427178e-16, epsilon = 1e-25);
        assert_abs_diff_eq!(log_sum_exp(&[0.0, 0.0]), 2f64.ln(), epsilon = 1e-15);
    }
}
