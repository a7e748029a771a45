//! Statistical plumbing: normal CDF, Kolmogorov distribution, one- and
//! two-sample Kolmogorov-Smirnov tests, and small-sample summaries.
//!
//! The special functions are written from the defining series/continued
//! fractions rather than coefficient tables, and are pinned by tests against
//! published reference values.

use serde::Serialize;
use std::f64::consts::FRAC_2_SQRT_PI;

/// Error function. Series for |x| <= 3, continued fraction beyond.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 3.0 {
        // erf(x) = (2x/sqrt(pi)) e^{-x^2} sum_n (2x^2)^n / (2n+1)!!
        // All terms positive: no cancellation.
        let z = 2.0 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut n = 0u32;
        while term > 1e-18 * sum {
            n += 1;
            term *= z / (2.0 * f64::from(n) + 1.0);
            sum += term;
        }
        FRAC_2_SQRT_PI * x * (-x * x).exp() * sum
    } else {
        1.0 - erfc(x)
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 3.0 {
        return 1.0 - erf(x);
    }
    // A&S 7.1.14: sqrt(pi) e^{x^2} erfc(x) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    let mut t = x;
    for k in (1..=48).rev() {
        t = x + (0.5 * k as f64) / t;
    }
    (-x * x).exp() / (std::f64::consts::PI.sqrt() * t)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Survival function of the Kolmogorov distribution,
/// P(sup_t |B^0(t)| / ... > t) = 2 sum_k (-1)^{k-1} e^{-2 k^2 t^2}.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.18 {
        // Jacobi-theta dual series: accurate where the alternating series is slow.
        let f = std::f64::consts::PI * std::f64::consts::PI / (8.0 * t * t);
        let mut cdf = 0.0;
        for k in 0..10 {
            let odd = (2 * k + 1) as f64;
            cdf += (-odd * odd * f).exp();
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / t;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sf = 0.0;
        for k in 1..=10 {
            let kf = k as f64;
            let term = 2.0 * (-2.0 * kf * kf * t * t).exp();
            sf += if k % 2 == 1 { term } else { -term };
        }
        sf.clamp(0.0, 1.0)
    }
}

/// Outcome of a Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub sample_size: usize,
}

/// One-sample KS test of `data` against the continuous CDF `cdf`.
/// The p-value uses Stephens' finite-sample scaling of the asymptotic law.
pub fn ks_one_sample<F: Fn(f64) -> f64>(data: &[f64], cdf: F) -> KsOutcome {
    assert!(!data.is_empty(), "KS test on empty sample");
    let mut xs = data.to_vec();
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).expect("non-finite sample value"));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i as f64 + 1.0) / n - f);
    }
    let scale = n.sqrt() + 0.12 + 0.11 / n.sqrt();
    KsOutcome { statistic: d, p_value: kolmogorov_sf(scale * d), sample_size: xs.len() }
}

/// Two-sample KS statistic (max distance between empirical CDFs).
pub fn ks_two_sample_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(|u, v| u.partial_cmp(v).expect("non-finite sample value"));
    ys.sort_unstable_by(|u, v| u.partial_cmp(v).expect("non-finite sample value"));
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Large-sample critical value for the two-sample KS statistic at level `alpha`.
pub fn ks_two_sample_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Bonferroni-adjusted p-value.
pub fn bonferroni(p: f64, tests: usize) -> f64 {
    (p * tests as f64).min(1.0)
}

/// Two-pass sample summary.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Fourth central moment (biased, 1/n normalization).
    pub fourth_central: f64,
}

impl Summary {
    pub fn from_slice(xs: &[f64]) -> Self {
        assert!(xs.len() >= 2, "summary needs at least two observations");
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let mut m2 = 0.0;
        let mut m4 = 0.0;
        for &x in xs {
            let d = x - mean;
            m2 += d * d;
            m4 += d * d * d * d;
        }
        Summary {
            n: xs.len(),
            mean,
            variance: m2 / (n - 1.0),
            fourth_central: m4 / n,
        }
    }

    pub fn se_mean(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }

    /// Standard error of the sample variance (moment formula).
    pub fn se_variance(&self) -> f64 {
        let n = self.n as f64;
        let v = self.variance;
        ((self.fourth_central - v * v * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }
}

/// Pearson correlation of two equal-length samples.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn erf_reference_values() {
        assert_abs_diff_eq!(erf(0.5), 0.5204998778130465, epsilon = 1e-14);
        assert_abs_diff_eq!(erf(1.0), 0.8427007929497149, epsilon = 1e-14);
        assert_abs_diff_eq!(erf(2.0), 0.9953222650189527, epsilon = 1e-14);
        assert_abs_diff_eq!(erfc(3.0), 2.209049699858544e-5, epsilon = 1e-18);
        assert_abs_diff_eq!(erfc(5.0), 1.5374597944280347e-12, epsilon = 1e-24);
        assert_abs_diff_eq!(erf(-1.0), -0.8427007929497149, epsilon = 1e-14);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_cdf(1.959963984540054), 0.975, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_cdf(-3.0), 1.3498980316300946e-3, epsilon = 1e-14);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // Critical points of the asymptotic KS law.
        assert_abs_diff_eq!(kolmogorov_sf(1.3581015), 0.05, epsilon = 2e-4);
        assert_abs_diff_eq!(kolmogorov_sf(1.6276236), 0.01, epsilon = 1e-4);
        // Both series representations agree at the branch point (the slope
        // there is about -0.58, hence the window below).
        assert_abs_diff_eq!(kolmogorov_sf(1.18), 0.1234538094297657, epsilon = 1e-12);
        let lo = kolmogorov_sf(1.18 - 1e-9);
        let hi = kolmogorov_sf(1.18 + 1e-9);
        assert_abs_diff_eq!(lo, hi, epsilon = 5e-9);
    }

    #[test]
    fn ks_one_sample_uniform_grid_is_small() {
        // A perfect uniform grid should have D = 1/(2n) against U(0,1).
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let out = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert_abs_diff_eq!(out.statistic, 0.5 / n as f64, epsilon = 1e-12);
        assert!(out.p_value > 0.999);
    }

    #[test]
    fn ks_two_sample_identical_is_zero() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample_statistic(&xs, &xs), 0.0);
        let ys: Vec<f64> = (0..100).map(|i| i as f64 + 1000.0).collect();
        assert_eq!(ks_two_sample_statistic(&xs, &ys), 1.0);
    }

    #[test]
    fn summary_matches_hand_values() {
        let s = Summary::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(s.mean, 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.variance, 5.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn pearson_of_linear_data_is_one() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 7.0).collect();
        assert_abs_diff_eq!(pearson(&xs, &ys), 1.0, epsilon = 1e-12);
    }
}
