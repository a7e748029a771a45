//! The concrete stationary model: causal linear processes
//! `X_k = sum_{j>=1} a_j x_{k-j}` over unit-variance i.i.d. innovations.
//!
//! The innovations with index `<= 0` form the frozen past (the concrete
//! meaning of conditioning on the time-zero sigma-algebra); innovations with
//! index `>= 1` are resampled per replicate. The past is truncated at a
//! configurable depth `L`: innovations below index `-L` are treated as zero
//! and the induced L2 error is reported, never silently absorbed.
//!
//! With that convention every conditional expectation of the process is a
//! finite sum, so the identities checked elsewhere in the crate hold exactly
//! (up to rounding) for the truncated model.

use crate::error::{CoreError, Result};
use crate::rng::{stream_rng, StreamKind};
use crate::special::{hurwitz_zeta, trigamma};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Default truncation index echoed into reports.
pub const DEFAULT_EFFECTIVE_LENGTH: usize = 4096;

/// Coefficient sequence (a_j)_{j>=1} of the linear process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CoefficientKind {
    /// a_j = rho^j with 0 < rho < 1.
    Geometric { rho: f64 },
    /// a_j = 1/j.
    Harmonic,
    /// a_j = j^{-exponent} with exponent > 1/2.
    Power { exponent: f64 },
    /// Explicit list a_1..a_J, zero beyond.
    Finite { coeffs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientFamily {
    kind: CoefficientKind,
    /// Truncation index J beyond which coefficients are treated as their
    /// analytic tail (or zero for finite lists). Lag sums over `j` are cut at
    /// `j <= k + L` by the past truncation, which realizes the nominal cutoff
    /// `max(effective_length, L + horizon)` because deeper lags multiply
    /// zeroed innovations.
    effective_length: usize,
}

impl CoefficientFamily {
    pub fn geometric(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(CoreError::InvalidParameter(
                "geometric ratio must be in (0,1)".into(),
            ));
        }
        Ok(Self { kind: CoefficientKind::Geometric { rho }, effective_length: DEFAULT_EFFECTIVE_LENGTH })
    }

    pub fn harmonic() -> Self {
        Self { kind: CoefficientKind::Harmonic, effective_length: DEFAULT_EFFECTIVE_LENGTH }
    }

    pub fn power(exponent: f64) -> Result<Self> {
        if !exponent.is_finite() || exponent <= 0.5 {
            return Err(CoreError::InvalidParameter(
                "power exponent must exceed 1/2 for square summability".into(),
            ));
        }
        Ok(Self { kind: CoefficientKind::Power { exponent }, effective_length: DEFAULT_EFFECTIVE_LENGTH })
    }

    pub fn finite(coeffs: Vec<f64>) -> Self {
        let effective_length = coeffs.len().max(1);
        Self { kind: CoefficientKind::Finite { coeffs }, effective_length }
    }

    pub fn with_effective_length(mut self, effective_length: usize) -> Self {
        self.effective_length = effective_length.max(1);
        self
    }

    pub fn kind(&self) -> &CoefficientKind {
        &self.kind
    }

    pub fn effective_length(&self) -> usize {
        self.effective_length
    }

    /// a_j. Total: returns 0 for j = 0 and for j beyond a finite list.
    pub fn coef(&self, j: usize) -> f64 {
        if j == 0 {
            return 0.0;
        }
        match &self.kind {
            CoefficientKind::Geometric { rho } => rho.powi(j as i32),
            CoefficientKind::Harmonic => 1.0 / j as f64,
            CoefficientKind::Power { exponent } => (j as f64).powf(-exponent),
            CoefficientKind::Finite { coeffs } => coeffs.get(j - 1).copied().unwrap_or(0.0),
        }
    }

    /// Analytic tail sum_{j>=n} a_j^2 (n >= 1).
    pub fn tail_sq_sum(&self, n: usize) -> f64 {
        assert!(n >= 1, "tail_sq_sum is indexed from 1");
        match &self.kind {
            CoefficientKind::Geometric { rho } => {
                let r2 = rho * rho;
                r2.powi(n as i32) / (1.0 - r2)
            }
            CoefficientKind::Harmonic => trigamma(n as f64),
            CoefficientKind::Power { exponent } => hurwitz_zeta(2.0 * exponent, n as f64),
            CoefficientKind::Finite { coeffs } => {
                coeffs.iter().skip(n - 1).map(|a| a * a).sum()
            }
        }
    }

    /// Squared L2 norm of X_0: sum_j a_j^2.
    pub fn sq_norm(&self) -> f64 {
        self.tail_sq_sum(1)
    }

    /// Whether sum_j |a_j| converges.
    pub fn is_absolutely_summable(&self) -> bool {
        match &self.kind {
            CoefficientKind::Geometric { .. } | CoefficientKind::Finite { .. } => true,
            CoefficientKind::Harmonic => false,
            CoefficientKind::Power { exponent } => *exponent > 1.0,
        }
    }

    /// Analytic sum_{j>=n} |a_j| (None when divergent).
    pub fn abs_tail(&self, n: usize) -> Option<f64> {
        assert!(n >= 1);
        match &self.kind {
            CoefficientKind::Geometric { rho } => Some(rho.powi(n as i32) / (1.0 - rho)),
            CoefficientKind::Harmonic => None,
            CoefficientKind::Power { exponent } if *exponent > 1.0 => {
                Some(hurwitz_zeta(*exponent, n as f64))
            }
            CoefficientKind::Power { .. } => None,
            CoefficientKind::Finite { coeffs } => {
                Some(coeffs.iter().skip(n - 1).map(|a| a.abs()).sum())
            }
        }
    }

    /// Pointwise convergence of sum_k a_k e^{ik theta} at this frequency
    /// (theta in [0, 2pi)). Monotone families converge away from zero by the
    /// Dirichlet test; absolutely summable ones converge everywhere.
    pub fn series_converges_at(&self, theta: f64) -> bool {
        if self.is_absolutely_summable() {
            return true;
        }
        theta.rem_euclid(2.0 * std::f64::consts::PI) != 0.0
    }

    pub fn label(&self) -> String {
        match &self.kind {
            CoefficientKind::Geometric { rho } => format!("geometric(rho={rho})"),
            CoefficientKind::Harmonic => "harmonic".to_string(),
            CoefficientKind::Power { exponent } => format!("power(exponent={exponent})"),
            CoefficientKind::Finite { coeffs } => format!("finite(len={})", coeffs.len()),
        }
    }
}

/// Unit-variance innovation law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InnovationKind {
    StandardNormal,
    Rademacher,
    CenteredUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InnovationDistribution {
    kind: InnovationKind,
}

impl InnovationDistribution {
    pub fn new(kind: InnovationKind) -> Self {
        Self { kind }
    }

    pub fn standard_normal() -> Self {
        Self::new(InnovationKind::StandardNormal)
    }

    pub fn kind(&self) -> InnovationKind {
        self.kind
    }

    /// Always 1 after normalization.
    pub fn variance(&self) -> f64 {
        1.0
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self.kind {
            InnovationKind::StandardNormal => rng.sample(rand_distr::StandardNormal),
            InnovationKind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            InnovationKind::CenteredUniform => {
                let half_width = 3.0_f64.sqrt();
                rng.random::<f64>() * (2.0 * half_width) - half_width
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            InnovationKind::StandardNormal => "standard_normal",
            InnovationKind::Rademacher => "rademacher",
            InnovationKind::CenteredUniform => "centered_uniform",
        }
    }
}

/// Frozen past innovations x_0, x_{-1}, ..., x_{-L}: the realization on which
/// the conditional (quenched) measures are based. Innovations below index
/// `-L` are zero; the L2 cost of that truncation is `truncation_error_bound`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PastRealization {
    depth: usize,
    /// `values[i]` = x_{-i}; length depth + 1.
    values: Vec<f64>,
    master_seed: u64,
    truncation_error_bound: f64,
}

impl PastRealization {
    /// Build a past from explicit values (`values[i]` = x_{-i}).
    pub fn from_values(values: Vec<f64>, family: &CoefficientFamily, master_seed: u64) -> Self {
        assert!(!values.is_empty());
        let depth = values.len() - 1;
        let truncation_error_bound = family.tail_sq_sum(depth + 1).sqrt();
        Self { depth, values, master_seed, truncation_error_bound }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// sigma_x * sqrt(sum_{j > L} a_j^2): L2 error of dropping the deep past.
    pub fn truncation_error_bound(&self) -> f64 {
        self.truncation_error_bound
    }

    /// x_index for index <= 0 (zero below the truncation depth).
    pub fn x(&self, index: i64) -> f64 {
        assert!(index <= 0, "past innovations have indices <= 0");
        let i = (-index) as usize;
        self.values.get(i).copied().unwrap_or(0.0)
    }

    pub fn x0(&self) -> f64 {
        self.values[0]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Draw a frozen past of depth `L` (values x_0..x_{-L} in stream order).
pub fn sample_past(
    family: &CoefficientFamily,
    innov: &InnovationDistribution,
    depth: usize,
    master_seed: u64,
) -> PastRealization {
    assert!(depth >= 1, "past depth must be >= 1");
    let mut rng = stream_rng(master_seed, StreamKind::Past);
    let values: Vec<f64> = (0..=depth).map(|_| innov.sample(&mut rng)).collect();
    PastRealization::from_values(values, family, master_seed)
}

/// One future draw plus derived process values and the cached frozen-past
/// conditional expectations E_0 X_k.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryBundle {
    horizon: usize,
    /// x_1 .. x_{n-1}.
    future: Vec<f64>,
    /// X_0 .. X_{n-1}.
    values: Vec<f64>,
    /// E_0 X_k for k = 0 .. n-1 (depends only on the past).
    past_contrib: Vec<f64>,
    x0: f64,
    replicate_index: u64,
    replicate_seed: u64,
}

impl TrajectoryBundle {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// x_m for 1 <= m <= n-1.
    pub fn future_x(&self, m: usize) -> f64 {
        assert!(m >= 1 && m < self.horizon);
        self.future[m - 1]
    }

    pub fn future(&self) -> &[f64] {
        &self.future
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cached E_0 X_k.
    pub fn cond_exp_zero(&self, k: usize) -> f64 {
        self.past_contrib[k]
    }

    pub fn past_contrib(&self) -> &[f64] {
        &self.past_contrib
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn replicate_index(&self) -> u64 {
        self.replicate_index
    }

    pub fn replicate_seed(&self) -> u64 {
        self.replicate_seed
    }
}

/// Simulate one future replicate over the frozen past. Pure in
/// (past, family, innov, n, replicate_index): the replicate stream is derived
/// from the past's master seed, so replicates can be generated in any order.
pub fn simulate_future(
    past: &PastRealization,
    family: &CoefficientFamily,
    innov: &InnovationDistribution,
    n: usize,
    replicate_index: u64,
) -> TrajectoryBundle {
    assert!(n >= 1, "horizon must be >= 1");
    let replicate_seed =
        crate::rng::stream_seed(past.master_seed(), StreamKind::Future(replicate_index));
    let mut rng = stream_rng(past.master_seed(), StreamKind::Future(replicate_index));
    let future: Vec<f64> = (0..n.saturating_sub(1)).map(|_| innov.sample(&mut rng)).collect();

    // The convolution loops touch every lag; evaluate the coefficients once.
    let coefs: Vec<f64> = (0..n + past.depth()).map(|j| family.coef(j)).collect();

    // E_0 X_k = sum_{i=0..L} a_{k+i} x_{-i}, ascending lag.
    let past_contrib: Vec<f64> = (0..n)
        .map(|k| {
            let mut acc = 0.0;
            for (i, xv) in past.values.iter().enumerate() {
                acc += coefs[k + i] * xv;
            }
            acc
        })
        .collect();

    // X_k = (future lags 1..k-1, ascending) + E_0 X_k.
    let values: Vec<f64> = (0..n)
        .map(|k| {
            let mut acc = 0.0;
            for j in 1..k {
                acc += coefs[j] * future[k - j - 1];
            }
            acc + past_contrib[k]
        })
        .collect();

    TrajectoryBundle {
        horizon: n,
        future,
        values,
        past_contrib,
        x0: past.x0(),
        replicate_index,
        replicate_seed,
    }
}

/// Conditioning time for [`cond_exp_x`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondBase {
    /// E_0: condition on innovations with index <= 0.
    Zero,
    /// E_{-1}: condition on innovations with index <= -1.
    MinusOne,
}

/// Closed-form conditional expectation of X_k (k >= 0) given the frozen past:
/// E_0 X_k = sum_{j>=k} a_j x_{k-j}, E_{-1} X_k = sum_{j>=k+1} a_j x_{k-j},
/// truncated at lag k + L. Pure; summed in ascending lag order.
pub fn cond_exp_x(
    past: &PastRealization,
    family: &CoefficientFamily,
    k: usize,
    base: CondBase,
) -> f64 {
    let start = match base {
        CondBase::Zero => k.max(1),
        CondBase::MinusOne => k + 1,
    };
    let mut acc = 0.0;
    for j in start..=(k + past.depth()) {
        acc += family.coef(j) * past.x(k as i64 - j as i64);
    }
    acc
}

/// Scalar c_k with P_0 X_k = c_k x_0: zero at k = 0, a_k for k >= 1.
pub fn projection_coef(family: &CoefficientFamily, k: usize) -> f64 {
    if k == 0 {
        0.0
    } else {
        family.coef(k)
    }
}

/// Joint view of a frozen past and one future draw, addressable by raw
/// innovation index. Backs the conditional expectations E_b X_m with b >= 1
/// needed by the decomposition terms.
#[derive(Debug, Clone, Copy)]
pub struct InnovationView<'a> {
    past: &'a PastRealization,
    future: &'a [f64],
}

impl<'a> InnovationView<'a> {
    pub fn new(past: &'a PastRealization, bundle: &'a TrajectoryBundle) -> Self {
        Self { past, future: bundle.future() }
    }

    pub fn x(&self, index: i64) -> f64 {
        if index <= 0 {
            self.past.x(index)
        } else {
            self.future[(index - 1) as usize]
        }
    }

    /// E_base X_m = sum_{j >= max(1, m-base)} a_j x_{m-j}, truncated at
    /// lag m + L. `base` may be any time the view covers.
    pub fn cond_exp(&self, family: &CoefficientFamily, m: usize, base: i64) -> f64 {
        let start = (m as i64 - base).max(1) as usize;
        let mut acc = 0.0;
        for j in start..=(m + self.past.depth()) {
            acc += family.coef(j) * self.x(m as i64 - j as i64);
        }
        acc
    }
}
