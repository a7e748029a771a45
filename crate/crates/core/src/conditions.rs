//! Condition evaluators and frequency classification.
//!
//! Three summability conditions control which limit laws apply:
//!   - full:       sum_n ||P_0 X_n||_2 = sum_n |a_n| < infinity
//!   - weak:       sum_n ||P_0 (X_{n+1} - X_n)||_2 = |a_1| + sum |a_{n+1} - a_n| < infinity
//!   - regularity: ||E_{-n} X_0||_2 = sqrt(sum_{j>=n} a_j^2) -> 0
//!
//! Verdicts for the library families are analytic (closed-form tail
//! comparisons), never sampled. The per-component limit variance
//! sigma^2(theta) = |A(e^{i theta})|^2 / 2 is computed from the transfer
//! function and cross-checked by a frozen-past Monte Carlo estimator.

use crate::error::{CoreError, Result};
use crate::model::{
    cond_exp_x, sample_past, CoefficientFamily, CoefficientKind, CondBase, InnovationDistribution,
    PastRealization,
};
use crate::rng::{mix, stream_rng, StreamKind};
use crate::stats::Summary;
use crate::transform::{transfer_partial, transfer_prefix, transfer_series};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Converges,
    Diverges,
    Unknown,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Converges => "converges",
            Verdict::Diverges => "diverges",
            Verdict::Unknown => "unknown",
        }
    }
}

/// Partial sums and analytic verdicts for the three conditions.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub n_terms: usize,
    /// sum_{n<=N} |a_n| for N = 1..n_terms.
    pub hannan_partial_sums: Vec<f64>,
    pub hannan_verdict: Verdict,
    /// Analytic sum_{n>n_terms} |a_n| (None when divergent).
    pub hannan_tail: Option<f64>,
    /// |a_1| + sum_{1<=n<=N} |a_{n+1} - a_n| for N = 0..n_terms-1.
    pub weak_hannan_partial_sums: Vec<f64>,
    pub weak_hannan_verdict: Verdict,
    pub weak_hannan_tail: Option<f64>,
    /// ||E_{-n} X_0||_2 = sqrt(tail_sq_sum(n)) for n = 1..n_terms.
    pub regularity_decay: Vec<f64>,
    pub regularity_verdict: Verdict,
}

pub fn evaluate_conditions(family: &CoefficientFamily, n_terms: usize) -> ConditionReport {
    assert!(n_terms >= 1);

    let mut hannan = Vec::with_capacity(n_terms);
    let mut acc = 0.0;
    for n in 1..=n_terms {
        acc += family.coef(n).abs();
        hannan.push(acc);
    }

    let mut weak = Vec::with_capacity(n_terms);
    let mut acc = family.coef(1).abs();
    weak.push(acc);
    for n in 1..n_terms {
        acc += (family.coef(n + 1) - family.coef(n)).abs();
        weak.push(acc);
    }

    let regularity: Vec<f64> = (1..=n_terms).map(|n| family.tail_sq_sum(n).sqrt()).collect();

    let (hannan_verdict, weak_verdict) = match family.kind() {
        CoefficientKind::Geometric { .. } | CoefficientKind::Finite { .. } => {
            (Verdict::Converges, Verdict::Converges)
        }
        CoefficientKind::Harmonic => (Verdict::Diverges, Verdict::Converges),
        CoefficientKind::Power { exponent } => (
            if *exponent > 1.0 { Verdict::Converges } else { Verdict::Diverges },
            Verdict::Converges,
        ),
    };

    // For monotone nonincreasing coefficients the difference tail telescopes
    // to a_{N+1}; finite lists are summed exactly.
    let weak_tail = match family.kind() {
        CoefficientKind::Finite { coeffs } => {
            let mut tail = 0.0;
            for n in n_terms..=coeffs.len() + 1 {
                tail += (family.coef(n + 1) - family.coef(n)).abs();
            }
            Some(tail)
        }
        _ => Some(family.coef(n_terms + 1)),
    };

    ConditionReport {
        n_terms,
        hannan_partial_sums: hannan,
        hannan_verdict,
        hannan_tail: family.abs_tail(n_terms + 1),
        weak_hannan_partial_sums: weak,
        weak_hannan_verdict: weak_verdict,
        weak_hannan_tail: weak_tail,
        regularity_decay: regularity,
        regularity_verdict: Verdict::Converges,
    }
}

/// Classification of a frequency against the isotropic-limit set and the
/// point spectrum of the underlying shift.
#[derive(Debug, Clone, Serialize)]
pub struct FrequencyClass {
    pub theta: f64,
    /// Member of the full-measure set where the isotropic complex-Gaussian
    /// limit applies.
    pub in_i: bool,
    /// Whether e^{-2i theta} lies in the point spectrum. The i.i.d. base is
    /// weakly mixing, so the point spectrum is {1} and this holds exactly at
    /// theta in {0, pi}.
    pub e2theta_in_spec: bool,
    /// |A(e^{i theta})|^2 / 2 where the transfer series converges.
    pub sigma2_closed: Option<f64>,
    /// Analytic uncertainty of sigma2_closed from the series tail.
    pub sigma2_uncertainty: f64,
    pub notes: String,
}

/// True when theta is an integer multiple of pi/m (i.e. e^{2im theta} = 1).
fn excluded_by_roots(theta: f64, m_roots: u32) -> bool {
    let x = theta * m_roots as f64 / std::f64::consts::PI;
    (x - x.round()).abs() < 1e-9
}

pub fn classify_frequency(family: &CoefficientFamily, theta: f64) -> FrequencyClass {
    classify_frequency_with_roots(family, theta, 1)
}

/// `m_roots` generalizes the reported exclusion set to the m-th roots of
/// unity. It affects the notes only: the implemented base is an i.i.d. shift,
/// whose point spectrum is {1} (m = 1).
pub fn classify_frequency_with_roots(
    family: &CoefficientFamily,
    theta: f64,
    m_roots: u32,
) -> FrequencyClass {
    let e2theta_in_spec = excluded_by_roots(theta, 1);
    let converges = family.series_converges_at(theta);
    let in_i = !e2theta_in_spec && converges;

    let (sigma2_closed, sigma2_uncertainty) = if converges {
        match transfer_series(family, theta) {
            Ok(series) => {
                let a = series.value.norm();
                (
                    Some(a * a / 2.0),
                    (2.0 * a * series.tail_bound + series.tail_bound * series.tail_bound) / 2.0,
                )
            }
            Err(_) => (None, 0.0),
        }
    } else {
        (None, 0.0)
    };

    let mut notes = String::new();
    if e2theta_in_spec {
        notes.push_str("e^{-2i theta} = 1: anisotropic limit; ");
    }
    if !converges {
        notes.push_str("transfer series divergent here; ");
    }
    if m_roots != 1 && excluded_by_roots(theta, m_roots) {
        notes.push_str(&format!("excluded by the m={m_roots} roots-of-unity formula; "));
    }
    if notes.is_empty() {
        notes.push_str("isotropic complex-Gaussian limit applies");
    }

    FrequencyClass {
        theta,
        in_i,
        e2theta_in_spec,
        sigma2_closed,
        sigma2_uncertainty,
        notes: notes.trim_end_matches(['；', ' ', ';'].as_ref()).to_string(),
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub replicates: usize,
}

/// Frozen-past Monte Carlo estimator of
/// sigma^2(theta) = E_0 |S_n(theta) - E_0 S_n(theta)|^2 / (2n).
pub fn sigma2_estimator(
    past: &PastRealization,
    family: &CoefficientFamily,
    innov: &InnovationDistribution,
    theta: f64,
    n: usize,
    replicates: usize,
) -> Result<Estimate> {
    if n < 16 {
        return Err(CoreError::InvalidParameter("sigma2 estimator needs n >= 16".into()));
    }
    if replicates < 100 {
        return Err(CoreError::InvalidParameter("sigma2 estimator needs >= 100 replicates".into()));
    }
    // S_n - E_0 S_n = sum_{m=1..n-1} x_m e^{im theta} A_{n-1-m}: the frozen
    // past cancels, so one endpoint evaluation is O(n).
    let weights = transfer_prefix(family, theta, n - 1);
    let master = past.master_seed();
    let values: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(master, StreamKind::Future(rep));
            let mut u = num_complex::Complex64::new(0.0, 0.0);
            let mut rot = crate::transform::Rotor::starting_at(theta, 1);
            for m in 1..n {
                let x: f64 = innov.sample(&mut rng);
                u += rot.current() * x * weights[n - 1 - m];
                rot.advance();
            }
            u.norm_sqr() / (2.0 * n as f64)
        })
        .collect();
    let s = Summary::from_slice(&values);
    Ok(Estimate { value: s.mean, std_error: s.se_mean(), replicates })
}

/// Exact finite-n second moment E_0 |S_n - E_0 S_n|^2 / (2n)
/// = sum_{p=0}^{n-2} |A_p|^2 / (2n): the deterministic value the estimator
/// converges to at fixed n.
pub fn sigma2_finite_n_exact(family: &CoefficientFamily, theta: f64, n: usize) -> f64 {
    let weights = transfer_prefix(family, theta, n.max(1));
    weights[..n.saturating_sub(1)].iter().map(|w| w.norm_sqr()).sum::<f64>() / (2.0 * n as f64)
}

/// Library functionals for the conditional ergodic-average check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ErgodicFunctional {
    /// Y = x_0^2 (expectation 1).
    InnovationSquare,
    /// Y = |X_0|^2 (expectation sum a_j^2).
    ProcessSquare,
    /// Y = |D_{0,r}(theta)|^2 (expectation |d0_coef|^2).
    MartingaleDiffSquare { theta: f64, r: usize },
}

impl ErgodicFunctional {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "x0_sq" => Ok(Self::InnovationSquare),
            "process_sq" => Ok(Self::ProcessSquare),
            other => Err(CoreError::UnsupportedFunctional(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicCheck {
    pub empirical: f64,
    /// Spread of the per-past averages (zero for a single past).
    pub across_past_se: f64,
    pub expected: f64,
    pub pasts: usize,
    pub n_terms: usize,
}

/// Conditional ergodic averages (1/N) sum_{t<N} E_0 T^t Y under frozen pasts,
/// with E_0 T^t Y in closed form, compared against EY.
pub fn ergodic_average_check(
    family: &CoefficientFamily,
    innov: &InnovationDistribution,
    functional: ErgodicFunctional,
    n_terms: usize,
    pasts: usize,
    depth: usize,
    master_seed: u64,
) -> Result<ErgodicCheck> {
    if n_terms < 1 || pasts < 1 {
        return Err(CoreError::InvalidParameter("ergodic check needs n_terms, pasts >= 1".into()));
    }
    let expected = match functional {
        ErgodicFunctional::InnovationSquare => 1.0,
        ErgodicFunctional::ProcessSquare => family.sq_norm(),
        ErgodicFunctional::MartingaleDiffSquare { theta, r } => {
            transfer_partial(family, theta, r).norm_sqr()
        }
    };

    let averages: Vec<f64> = (0..pasts as u64)
        .map(|p| {
            let past = sample_past(family, innov, depth, mix(master_seed, p));
            let x0_sq = past.x0() * past.x0();
            let mut acc = 0.0;
            for t in 0..n_terms {
                acc += match functional {
                    ErgodicFunctional::InnovationSquare => {
                        if t == 0 {
                            x0_sq
                        } else {
                            1.0
                        }
                    }
                    ErgodicFunctional::ProcessSquare => {
                        // E_0 |X_t|^2 = (E_0 X_t)^2 + sum_{j<t} a_j^2.
                        let mean = cond_exp_x(&past, family, t, CondBase::Zero);
                        let cond_var = if t == 0 {
                            0.0
                        } else {
                            family.sq_norm() - family.tail_sq_sum(t)
                        };
                        mean * mean + cond_var
                    }
                    ErgodicFunctional::MartingaleDiffSquare { theta, r } => {
                        let d0_sq = transfer_partial(family, theta, r).norm_sqr();
                        if t == 0 {
                            d0_sq * x0_sq
                        } else {
                            d0_sq
                        }
                    }
                };
            }
            acc / n_terms as f64
        })
        .collect();

    let (empirical, se) = if pasts >= 2 {
        let s = Summary::from_slice(&averages);
        (s.mean, s.se_mean())
    } else {
        (averages[0], 0.0)
    };

    Ok(ErgodicCheck { empirical, across_past_se: se, expected, pasts, n_terms })
}
