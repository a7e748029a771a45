//! Special-function helpers backing the analytic coefficient tails.

/// Trigamma: psi1(x) = sum_{j>=0} 1/(x+j)^2 for x > 0.
///
/// Recurrence up to x >= 20, then the asymptotic expansion
/// 1/x + 1/(2x^2) + 1/(6x^3) - 1/(30x^5) + 1/(42x^7) - 1/(30x^9).
pub(crate) fn trigamma(mut x: f64) -> f64 {
    assert!(x > 0.0);
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        * (1.0
            + inv
                * (0.5
                    + inv
                        * (1.0 / 6.0
                            + inv2
                                * (-1.0 / 30.0 + inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0))))))
}

/// Hurwitz zeta: zeta(s, a) = sum_{j>=0} (a+j)^{-s} for s > 1, a >= 1.
///
/// Direct terms below the Euler-Maclaurin boundary, then the tail expansion
/// with Bernoulli corrections through B6.
pub(crate) fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    assert!(s > 1.0 && a >= 1.0);
    let boundary = a.max(25.0);
    let mut acc = 0.0;
    let mut j = a;
    while j < boundary {
        acc += j.powf(-s);
        j += 1.0;
    }
    let m = j;
    let minv = 1.0 / m;
    let mpow = m.powf(-s);
    let b4 = -s * (s + 1.0) * (s + 2.0) / 720.0;
    let b6 = s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) / 30240.0;
    acc + mpow
        * (m / (s - 1.0) + 0.5 + minv * (s / 12.0 + minv * minv * (b4 + minv * minv * b6)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn trigamma_reference_values() {
        let pi2_6 = std::f64::consts::PI * std::f64::consts::PI / 6.0;
        assert_abs_diff_eq!(trigamma(1.0), pi2_6, epsilon = 1e-13);
        assert_abs_diff_eq!(trigamma(2.0), pi2_6 - 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(trigamma(10.0), 0.10516633568168575, epsilon = 1e-13);
    }

    #[test]
    fn hurwitz_zeta_reference_values() {
        assert_abs_diff_eq!(hurwitz_zeta(2.0, 1.0), 1.6449340668482264, epsilon = 1e-13);
        assert_abs_diff_eq!(hurwitz_zeta(1.5, 1.0), 2.612375348685488, epsilon = 1e-12);
        assert_abs_diff_eq!(hurwitz_zeta(3.0, 1.0), 1.2020569031595943, epsilon = 1e-13);
        // Consistency with trigamma: zeta(2, a) = psi1(a).
        assert_abs_diff_eq!(hurwitz_zeta(2.0, 7.0), trigamma(7.0), epsilon = 1e-13);
    }

    #[test]
    fn hurwitz_zeta_shift_identity() {
        // zeta(s, a) = a^{-s} + zeta(s, a+1)
        let s = 1.2;
        let a = 3.0;
        assert_abs_diff_eq!(
            hurwitz_zeta(s, a),
            a.powf(-s) + hurwitz_zeta(s, a + 1.0),
            epsilon = 1e-12
        );
    }
}
