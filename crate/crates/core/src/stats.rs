//! Distribution functions and the hypothesis tests used by the ownership tester.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Standard normal CDF. Values below 1e-300 are reported as exactly zero.
pub fn std_normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let p = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
    if p < 1e-300 {
        0.0
    } else {
        p.min(1.0)
    }
}

/// Upper tail `P(T > t)` of Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    if t == f64::INFINITY {
        return 0.0;
    }
    if t == f64::NEG_INFINITY {
        return 1.0;
    }
    match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => dist.sf(t).clamp(0.0, 1.0),
        // df collapses to +inf for huge samples
        Err(_) => 1.0 - std_normal_cdf(t),
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n - 1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linear-interpolated percentile, `q` in [0, 100].
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(xs: &[f64]) -> f64 {
    percentile(xs, 50.0)
}

/// Outcome of one two-sample test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// mean(public) - mean(private)
    pub delta_mu: f64,
    pub p_value: f64,
    pub n_per_side: usize,
    pub t_stat: f64,
    pub df: f64,
}

/// One-sided Welch test of `H0: mean(public) <= mean(private)` against
/// `H1: mean(public) > mean(private)`.
///
/// Degenerate case: both sides constant. Equal means give `p = 0.5`,
/// otherwise the statistic is infinite and `p` is 0 or 1.
pub fn welch_one_sided(c_public: &[f64], c_private: &[f64]) -> Result<TestResult> {
    let (na, nb) = (c_public.len(), c_private.len());
    if na < 2 || nb < 2 {
        return Err(Error::SizeMismatch(format!(
            "welch test needs at least 2 samples per side, got {na} and {nb}"
        )));
    }
    let (ma, mb) = (mean(c_public), mean(c_private));
    let va = sample_variance(c_public) / na as f64;
    let vb = sample_variance(c_private) / nb as f64;
    let delta_mu = ma - mb;
    let se2 = va + vb;
    if !(se2.is_finite() && delta_mu.is_finite()) {
        return Err(Error::NonFinite("welch test input".into()));
    }
    let n_per_side = na.min(nb);
    if se2 == 0.0 {
        let (t_stat, p_value) = if delta_mu == 0.0 {
            (0.0, 0.5)
        } else if delta_mu > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (f64::NEG_INFINITY, 1.0)
        };
        return Ok(TestResult {
            delta_mu,
            p_value,
            n_per_side,
            t_stat,
            df: (na + nb - 2) as f64,
        });
    }
    let t_stat = delta_mu / se2.sqrt();
    let df = se2 * se2 / (va * va / (na as f64 - 1.0) + vb * vb / (nb as f64 - 1.0));
    Ok(TestResult {
        delta_mu,
        p_value: student_t_sf(t_stat, df),
        n_per_side,
        t_stat,
        df,
    })
}

/// Plain harmonic mean `n / sum(1/p)` of p-values, without the asymptotic
/// correction of the strict harmonic-mean p-value test.
pub fn harmonic_mean_p(ps: &[f64]) -> Result<f64> {
    if ps.is_empty() {
        return Err(Error::Empty("harmonic mean of no p-values".into()));
    }
    let mut inv = 0.0;
    for &p in ps {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidParameter(format!("p-value {p} outside (0, 1]")));
        }
        inv += 1.0 / p;
    }
    Ok(ps.len() as f64 / inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normal_cdf_reference_points() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert_abs_diff_eq!(std_normal_cdf(1.959964), 0.975, epsilon = 1e-6);
        assert_abs_diff_eq!(std_normal_cdf(-1.0), 0.158_655_253_931_457_05, epsilon = 1e-9);
        assert_eq!(std_normal_cdf(-40.0), 0.0);
        assert_eq!(std_normal_cdf(40.0), 1.0);
    }

    #[test]
    fn normal_cdf_deep_tail_matches_asymptotic_series() {
        // Mills-ratio expansion: phi(z)/|z| * (1 - 1/z^2 + 3/z^4 - 15/z^6 + 105/z^8)
        let z: f64 = -10.6066;
        let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let z2 = z * z;
        let series = phi / z.abs() * (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2)
            + 105.0 / (z2 * z2 * z2 * z2));
        let got = std_normal_cdf(z);
        assert!((got - series).abs() / series < 1e-4, "{got} vs {series}");
        assert!(got > 1.3e-26 && got < 1.5e-26);
    }

    #[test]
    fn welch_reference_example() {
        let r = welch_one_sided(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(r.t_stat, 12f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.df, 2.0, epsilon = 1e-12);
        // t with 2 df: sf(t) = 0.5 * (1 - t / sqrt(2 + t^2))
        let t = 12f64.sqrt();
        let expected = 0.5 * (1.0 - t / (2.0 + t * t).sqrt());
        assert_abs_diff_eq!(r.p_value, expected, epsilon = 1e-10);
        assert_abs_diff_eq!(r.p_value, 0.037, epsilon = 5e-4);
        assert_abs_diff_eq!(r.delta_mu, 2.0);
    }

    #[test]
    fn welch_identical_samples_is_half() {
        let a = [0.3, 1.2, -0.4, 2.2];
        let r = welch_one_sided(&a, &a).unwrap();
        assert_eq!(r.t_stat, 0.0);
        assert_abs_diff_eq!(r.p_value, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn welch_constant_sides() {
        let r = welch_one_sided(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(r.p_value, 0.5);
        let r = welch_one_sided(&[2.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!(r.p_value, 0.0);
        let r = welch_one_sided(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn welch_swap_gives_complement() {
        let a = [0.1, 0.5, 0.9, 1.7, 0.3];
        let b = [0.0, -0.2, 0.4, 0.1];
        let ab = welch_one_sided(&a, &b).unwrap();
        let ba = welch_one_sided(&b, &a).unwrap();
        assert_abs_diff_eq!(ab.p_value + ba.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn welch_rejects_undersized() {
        assert!(welch_one_sided(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn harmonic_mean_cases() {
        assert_eq!(harmonic_mean_p(&[0.3]).unwrap(), 0.3);
        assert_abs_diff_eq!(harmonic_mean_p(&[0.01, 0.01, 0.01]).unwrap(), 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(harmonic_mean_p(&[0.1, 0.001]).unwrap(), 2.0 / 1010.0, epsilon = 1e-15);
        assert!(harmonic_mean_p(&[]).is_err());
        assert!(harmonic_mean_p(&[0.1, 0.0]).is_err());
        assert!(harmonic_mean_p(&[1.5]).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 4.0);
        assert_abs_diff_eq!(percentile(&v, 50.0), 2.5);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normal_cdf_is_monotone(a in -40.0f64..40.0, b in -40.0f64..40.0) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(std_normal_cdf(lo) <= std_normal_cdf(hi));
            }

            #[test]
            fn harmonic_mean_is_bracketed(ps in prop::collection::vec(1e-12f64..=1.0, 1..40)) {
                let h = harmonic_mean_p(&ps).unwrap();
                let lo = ps.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = ps.iter().cloned().fold(0.0, f64::max);
                prop_assert!(h >= lo * (1.0 - 1e-12) && h <= hi * (1.0 + 1e-12));
            }

            #[test]
            fn welch_p_in_unit_interval(
                a in prop::collection::vec(-5.0f64..5.0, 2..12),
                b in prop::collection::vec(-5.0f64..5.0, 2..12),
            ) {
                let r = welch_one_sided(&a, &b).unwrap();
                prop_assert!((0.0..=1.0).contains(&r.p_value));
            }
        }
    }
}
