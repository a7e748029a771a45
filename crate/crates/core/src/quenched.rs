//! The quenched protocol: freeze one past, resample futures, and test the
//! normalized transform paths against their limit laws.
//!
//! Conditioning on the time-zero sigma-algebra is realized concretely by
//! fixing the innovations with index <= 0 and redrawing only those with
//! index >= 1. Because the frozen past cancels from S_q - E_0 S_q, each
//! centered path value is a pure linear form in the future innovations,
//!   W_n(theta)(t) = (1/sqrt n) sum_{m=1}^{q-1} x_m e^{im theta} A_{q-1-m},
//! with q = floor(nt) and A_p the partial transfer sums. Replicates are
//! embarrassingly parallel; aggregation is always in replicate-index order,
//! so reports are bit-identical at any thread count.

use crate::conditions::{classify_frequency, evaluate_conditions, Verdict};
use crate::error::{CoreError, Result};
use crate::model::{sample_past, CoefficientFamily, InnovationDistribution, PastRealization};
use crate::rng::{mix, stream_rng, StreamKind};
use crate::stats::{
    bonferroni, ks_one_sample, ks_two_sample_critical, ks_two_sample_statistic, normal_cdf,
    pearson, Summary,
};
use crate::transform::{transfer_prefix, transfer_series, MartingaleOrder, Rotor};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ThetaMode {
    Fixed(f64),
    UniformRandom,
}

/// One quenched experiment: a family, one frozen past, and the replication
/// plan. `replicates >= 200` is enforced because every test here emits
/// p-values.
#[derive(Debug, Clone, Serialize)]
pub struct QuenchedExperiment {
    pub family: CoefficientFamily,
    pub innovation: InnovationDistribution,
    pub past: PastRealization,
    pub theta_mode: ThetaMode,
    pub n: usize,
    /// Path horizon m; paths live on [0, m].
    pub horizon: f64,
    pub replicates: usize,
    /// Strictly increasing times in (0, horizon].
    pub time_grid: Vec<f64>,
    pub significance: f64,
    pub tolerances: TolerancePolicy,
}

impl QuenchedExperiment {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        family: CoefficientFamily,
        innovation: InnovationDistribution,
        past: PastRealization,
        theta_mode: ThetaMode,
        n: usize,
        horizon: f64,
        replicates: usize,
        time_grid: Vec<f64>,
        significance: f64,
    ) -> Result<Self> {
        if n < 2 {
            return Err(CoreError::InvalidParameter("experiment needs n >= 2".into()));
        }
        if replicates < 200 {
            return Err(CoreError::InvalidParameter(
                "tests emitting p-values need >= 200 replicates".into(),
            ));
        }
        if !(significance > 0.0 && significance < 1.0) {
            return Err(CoreError::InvalidParameter("significance must lie in (0,1)".into()));
        }
        if time_grid.is_empty()
            || time_grid.windows(2).any(|w| w[0] >= w[1])
            || time_grid.iter().any(|&t| !(t > 0.0 && t <= horizon))
        {
            return Err(CoreError::InvalidParameter(
                "time_grid must be strictly increasing within (0, horizon]".into(),
            ));
        }
        Ok(Self {
            family,
            innovation,
            past,
            theta_mode,
            n,
            horizon,
            replicates,
            time_grid,
            significance,
            tolerances: TolerancePolicy::default(),
        })
    }

    pub fn master_seed(&self) -> u64 {
        self.past.master_seed()
    }

    fn fixed_theta(&self) -> Result<f64> {
        match self.theta_mode {
            ThetaMode::Fixed(theta) => Ok(theta),
            ThetaMode::UniformRandom => Err(CoreError::InvalidParameter(
                "this test needs a fixed frequency; use run_averaged_frequency_test".into(),
            )),
        }
    }

    /// Abort when the past truncation is too coarse relative to the limit
    /// scale sigma.
    fn check_truncation_gate(&self, sigma: f64) -> Result<()> {
        let bound = self.past.truncation_error_bound();
        let limit = 0.02 * sigma;
        if bound > limit {
            return Err(CoreError::TruncationGate { bound, limit });
        }
        Ok(())
    }
}

/// Every tolerance a verdict depends on, echoed into the report.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TolerancePolicy {
    /// Relative tolerance on per-component variances.
    pub var_rel_tol: f64,
    /// |corr(Re, Im)| bound for the isotropic limit.
    pub isotropy_corr_tol: f64,
    /// Var Im / Var Re bound at anisotropic frequencies.
    pub anisotropy_im_ratio: f64,
    /// z-score bound on mean targets.
    pub mean_z_tol: f64,
    /// Increment correlations must stay below this multiple of 1/sqrt(R).
    pub increment_corr_mult: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self {
            var_rel_tol: 0.10,
            isotropy_corr_tol: 0.05,
            anisotropy_im_ratio: 0.01,
            mean_z_tol: 3.0,
            increment_corr_mult: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReportKind {
    FddFixed,
    Anisotropy,
    AveragedFrequency,
}

/// A KS test with its Bonferroni-adjusted p-value and verdict.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsChecked {
    pub statistic: f64,
    pub p_value: f64,
    pub p_adjusted: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimePointStats {
    pub t: f64,
    /// Partial-sum index floor(n t).
    pub q: usize,
    pub var_re: f64,
    pub var_re_se: f64,
    pub var_im: f64,
    pub var_im_se: f64,
    pub target_var_re: f64,
    pub target_var_im: f64,
    pub corr_re_im: f64,
    pub ks_re: KsChecked,
    pub ks_im: Option<KsChecked>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IncrementStats {
    pub from_t: f64,
    pub to_t: f64,
    pub corr_re: f64,
    pub corr_im: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Statistics of the frequency-averaged mixture law.
#[derive(Debug, Clone, Serialize)]
pub struct MixtureStats {
    pub mean_sq_modulus: f64,
    pub se: f64,
    /// Parseval target: sum_k a_k^2.
    pub target: f64,
    pub z: f64,
    pub var_re: f64,
    pub var_im: f64,
    /// Per-component target: sum_k a_k^2 / 2.
    pub target_component: f64,
    pub angle_ks: KsChecked,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FddTestReport {
    pub kind: ReportKind,
    /// None in averaged-frequency mode.
    pub theta: Option<f64>,
    /// Per-component limit variance backing the targets (None when averaged).
    pub sigma2: Option<f64>,
    pub scale_n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    pub significance: f64,
    /// Number of KS tests entering the Bonferroni correction.
    pub bonferroni_factor: usize,
    pub tolerances: TolerancePolicy,
    pub points: Vec<TimePointStats>,
    pub increments: Vec<IncrementStats>,
    pub mixture: Option<MixtureStats>,
    pub pass: bool,
}

/// Partial-sum index floor(n t), capped by the experiment's path horizon.
fn floor_index(n: usize, horizon: f64, t: f64) -> usize {
    let q_max = (n as f64 * horizon + 1e-9).floor() as usize;
    ((n as f64 * t + 1e-9).floor() as usize).min(q_max)
}

/// W(t_i) for one replicate, as a linear form in fresh future innovations.
fn replicate_w_values(
    exp: &QuenchedExperiment,
    theta: f64,
    weights: &[Complex64],
    qs: &[usize],
    rep: u64,
) -> Vec<Complex64> {
    let q_max = *qs.iter().max().unwrap();
    let mut rng = stream_rng(exp.master_seed(), StreamKind::Future(rep));
    let future: Vec<f64> =
        (0..q_max.saturating_sub(1)).map(|_| exp.innovation.sample(&mut rng)).collect();
    let scale = 1.0 / (exp.n as f64).sqrt();
    qs.iter()
        .map(|&q| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut rot = Rotor::starting_at(theta, 1);
            for m in 1..q {
                acc += rot.current() * future[m - 1] * weights[q - 1 - m];
                rot.advance();
            }
            acc * scale
        })
        .collect()
}

struct ComponentColumns {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

fn collect_columns(samples: &[Vec<Complex64>], points: usize) -> ComponentColumns {
    let mut re = vec![Vec::with_capacity(samples.len()); points];
    let mut im = vec![Vec::with_capacity(samples.len()); points];
    for row in samples {
        for (i, v) in row.iter().enumerate() {
            re[i].push(v.re);
            im[i].push(v.im);
        }
    }
    ComponentColumns { re, im }
}

fn ks_standard_normal(values: &[f64], scale: f64, factor: usize, alpha: f64) -> KsChecked {
    if scale == 0.0 {
        return KsChecked { statistic: 0.0, p_value: 1.0, p_adjusted: 1.0, pass: true };
    }
    let standardized: Vec<f64> = values.iter().map(|v| v / scale).collect();
    let out = ks_one_sample(&standardized, normal_cdf);
    let p_adjusted = bonferroni(out.p_value, factor);
    KsChecked { statistic: out.statistic, p_value: out.p_value, p_adjusted, pass: p_adjusted > alpha }
}

fn within_rel(value: f64, target: f64, rel: f64) -> bool {
    if target == 0.0 {
        value == 0.0
    } else {
        (value - target).abs() <= rel * target
    }
}

/// Raw per-replicate values of W(t) at the experiment's time grid, for a
/// fixed frequency. Replicate `rep` uses the same future stream in every
/// test, so plot data regenerated from this sampler matches the reports.
pub fn w_samples(exp: &QuenchedExperiment, theta: f64) -> Vec<Vec<Complex64>> {
    let qs: Vec<usize> = exp.time_grid.iter().map(|&t| floor_index(exp.n, exp.horizon, t)).collect();
    let q_max = *qs.iter().max().unwrap();
    let weights = transfer_prefix(&exp.family, theta, q_max.max(1));
    (0..exp.replicates as u64)
        .into_par_iter()
        .map(|rep| replicate_w_values(exp, theta, &weights, &qs, rep))
        .collect()
}

/// Fixed-frequency finite-dimensional test of W_n(theta) against the
/// isotropic limit: per-component variances sigma^2(theta) t, vanishing
/// Re/Im correlation, Gaussian marginals, orthogonal increments.
pub fn run_fdd_test(exp: &QuenchedExperiment) -> Result<FddTestReport> {
    let theta = exp.fixed_theta()?;
    let class = classify_frequency(&exp.family, theta);
    if !class.in_i {
        return Err(CoreError::FrequencyNotIsotropic { theta });
    }
    let sigma2 = class.sigma2_closed.expect("isotropic frequencies carry a closed form");
    exp.check_truncation_gate(sigma2.sqrt())?;

    let qs: Vec<usize> = exp.time_grid.iter().map(|&t| floor_index(exp.n, exp.horizon, t)).collect();
    let samples = w_samples(exp, theta);

    let tol = exp.tolerances;
    let factor = 2 * exp.time_grid.len();
    let cols = collect_columns(&samples, qs.len());

    let mut points = Vec::with_capacity(qs.len());
    for (i, (&t, &q)) in exp.time_grid.iter().zip(&qs).enumerate() {
        let sre = Summary::from_slice(&cols.re[i]);
        let sim = Summary::from_slice(&cols.im[i]);
        let target = sigma2 * t;
        let corr = pearson(&cols.re[i], &cols.im[i]);
        let scale = (sigma2 * t).sqrt();
        let ks_re = ks_standard_normal(&cols.re[i], scale, factor, exp.significance);
        let ks_im = ks_standard_normal(&cols.im[i], scale, factor, exp.significance);
        let pass = within_rel(sre.variance, target, tol.var_rel_tol)
            && within_rel(sim.variance, target, tol.var_rel_tol)
            && corr.abs() < tol.isotropy_corr_tol
            && ks_re.pass
            && ks_im.pass;
        points.push(TimePointStats {
            t,
            q,
            var_re: sre.variance,
            var_re_se: sre.se_variance(),
            var_im: sim.variance,
            var_im_se: sim.se_variance(),
            target_var_re: target,
            target_var_im: target,
            corr_re_im: corr,
            ks_re,
            ks_im: Some(ks_im),
            pass,
        });
    }

    let increments = increment_stats(exp, &samples, &cols);
    let pass = points.iter().all(|p| p.pass) && increments.iter().all(|inc| inc.pass);

    Ok(FddTestReport {
        kind: ReportKind::FddFixed,
        theta: Some(theta),
        sigma2: Some(sigma2),
        scale_n: exp.n,
        replicates: exp.replicates,
        master_seed: exp.master_seed(),
        significance: exp.significance,
        bonferroni_factor: factor,
        tolerances: tol,
        points,
        increments,
        mixture: None,
        pass,
    })
}

fn increment_stats(
    exp: &QuenchedExperiment,
    samples: &[Vec<Complex64>],
    cols: &ComponentColumns,
) -> Vec<IncrementStats> {
    let threshold = exp.tolerances.increment_corr_mult / (exp.replicates as f64).sqrt();
    let mut out = Vec::new();
    for i in 0..exp.time_grid.len().saturating_sub(1) {
        let dre: Vec<f64> = samples.iter().map(|row| row[i + 1].re - row[i].re).collect();
        let dim: Vec<f64> = samples.iter().map(|row| row[i + 1].im - row[i].im).collect();
        let corr_re = pearson(&cols.re[i], &dre);
        let corr_im = pearson(&cols.im[i], &dim);
        out.push(IncrementStats {
            from_t: exp.time_grid[i],
            to_t: exp.time_grid[i + 1],
            corr_re,
            corr_im,
            threshold,
            pass: corr_re.abs() < threshold && corr_im.abs() < threshold,
        });
    }
    out
}

/// Probe at the point-spectrum frequencies theta in {0, pi}: for real
/// coefficients the limit is a rotated *real* Brownian motion, so the
/// isotropic split fails: Var Re -> A(e^{i theta})^2 t and Var Im -> 0.
pub fn run_anisotropy_probe(exp: &QuenchedExperiment) -> Result<FddTestReport> {
    let theta = exp.fixed_theta()?;
    let over_pi = theta / std::f64::consts::PI;
    if (over_pi - over_pi.round()).abs() > 1e-9 {
        return Err(CoreError::InvalidParameter(
            "anisotropy probe expects theta in {0, pi}".into(),
        ));
    }
    let series = transfer_series(&exp.family, theta)?;
    let a = series.value.norm();
    exp.check_truncation_gate(a / std::f64::consts::SQRT_2)?;

    let qs: Vec<usize> = exp.time_grid.iter().map(|&t| floor_index(exp.n, exp.horizon, t)).collect();
    let samples = w_samples(exp, theta);

    let tol = exp.tolerances;
    let factor = exp.time_grid.len();
    let cols = collect_columns(&samples, qs.len());

    let mut points = Vec::with_capacity(qs.len());
    for (i, (&t, &q)) in exp.time_grid.iter().zip(&qs).enumerate() {
        let sre = Summary::from_slice(&cols.re[i]);
        let sim = Summary::from_slice(&cols.im[i]);
        let target = a * a * t;
        let ks_re = ks_standard_normal(&cols.re[i], (a * a * t).sqrt(), factor, exp.significance);
        let im_ok = if target == 0.0 {
            sim.variance == 0.0
        } else {
            sim.variance < tol.anisotropy_im_ratio * sre.variance.max(f64::MIN_POSITIVE)
        };
        let pass = within_rel(sre.variance, target, tol.var_rel_tol) && im_ok && ks_re.pass;
        points.push(TimePointStats {
            t,
            q,
            var_re: sre.variance,
            var_re_se: sre.se_variance(),
            var_im: sim.variance,
            var_im_se: sim.se_variance(),
            target_var_re: target,
            target_var_im: 0.0,
            corr_re_im: pearson(&cols.re[i], &cols.im[i]),
            ks_re,
            ks_im: None,
            pass,
        });
    }

    let increments = increment_stats(exp, &samples, &cols);
    let pass = points.iter().all(|p| p.pass);

    Ok(FddTestReport {
        kind: ReportKind::Anisotropy,
        theta: Some(theta),
        sigma2: Some(a * a / 2.0),
        scale_n: exp.n,
        replicates: exp.replicates,
        master_seed: exp.master_seed(),
        significance: exp.significance,
        bonferroni_factor: factor,
        tolerances: tol,
        points,
        increments,
        mixture: None,
        pass,
    })
}

/// Raw W(1) samples of the averaged-frequency protocol: replicate `rep`
/// draws its frequency uniformly and then its future, all from one stream.
pub fn averaged_w1_samples(exp: &QuenchedExperiment) -> Vec<Complex64> {
    let n = exp.n;
    let scale = 1.0 / (n as f64).sqrt();
    let master = exp.master_seed();
    let family = exp.family.clone();
    let innovation = exp.innovation;
    (0..exp.replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(master, StreamKind::Future(rep));
            let theta: f64 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            let weights = transfer_prefix(&family, theta, n.max(1));
            let mut acc = Complex64::new(0.0, 0.0);
            let mut rot = Rotor::starting_at(theta, 1);
            for m in 1..n {
                let x: f64 = innovation.sample(&mut rng);
                acc += rot.current() * x * weights[n - 1 - m];
                rot.advance();
            }
            acc * scale
        })
        .collect()
}

/// Averaged-frequency law: each replicate draws its own uniform frequency
/// and future. Checks the Parseval identity E|W(1)|^2 = sum_k a_k^2 and the
/// rotational symmetry of W(1) in the complex plane.
pub fn run_averaged_frequency_test(exp: &QuenchedExperiment) -> Result<FddTestReport> {
    if exp.theta_mode != ThetaMode::UniformRandom {
        return Err(CoreError::InvalidParameter(
            "averaged-frequency test needs theta_mode = uniform_random".into(),
        ));
    }
    let report = evaluate_conditions(&exp.family, 8);
    if report.regularity_verdict != Verdict::Converges {
        return Err(CoreError::InvalidParameter(
            "averaged-frequency test requires the regularity condition".into(),
        ));
    }
    let target = exp.family.sq_norm();
    exp.check_truncation_gate((target / 2.0).sqrt())?;

    let ends = averaged_w1_samples(exp);
    let sq: Vec<f64> = ends.iter().map(|w| w.norm_sqr()).collect();
    let re: Vec<f64> = ends.iter().map(|w| w.re).collect();
    let im: Vec<f64> = ends.iter().map(|w| w.im).collect();
    let s = Summary::from_slice(&sq);
    let z = if target == 0.0 {
        if s.mean == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (s.mean - target).abs() / s.se_mean()
    };

    let angle_ks = if target == 0.0 {
        KsChecked { statistic: 0.0, p_value: 1.0, p_adjusted: 1.0, pass: true }
    } else {
        let angles: Vec<f64> =
            ends.iter().map(|w| w.im.atan2(w.re).rem_euclid(2.0 * std::f64::consts::PI)).collect();
        let out = ks_one_sample(&angles, |x| (x / (2.0 * std::f64::consts::PI)).clamp(0.0, 1.0));
        KsChecked {
            statistic: out.statistic,
            p_value: out.p_value,
            p_adjusted: out.p_value,
            pass: out.p_value > exp.significance,
        }
    };

    let tol = exp.tolerances;
    let mixture = MixtureStats {
        mean_sq_modulus: s.mean,
        se: s.se_mean(),
        target,
        z,
        var_re: Summary::from_slice(&re).variance,
        var_im: Summary::from_slice(&im).variance,
        target_component: target / 2.0,
        angle_ks,
        pass: z <= tol.mean_z_tol && angle_ks.pass,
    };
    let pass = mixture.pass;

    Ok(FddTestReport {
        kind: ReportKind::AveragedFrequency,
        theta: None,
        sigma2: None,
        scale_n: exp.n,
        replicates: exp.replicates,
        master_seed: exp.master_seed(),
        significance: exp.significance,
        bonferroni_factor: 1,
        tolerances: tol,
        points: Vec::new(),
        increments: Vec::new(),
        mixture: Some(mixture),
        pass,
    })
}

/// Which path the functional test drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PathSource {
    /// The centered transform path W_n(theta).
    CenteredTransform,
    /// The martingale path V_{n,r}(theta).
    Martingale(MartingaleOrder),
}

#[derive(Debug, Clone, Serialize)]
pub struct PathFunctionalReport {
    pub theta: f64,
    pub source: PathSource,
    pub sigma: f64,
    pub scale_n: usize,
    pub replicates: usize,
    pub master_seed: u64,
    /// Two-sample KS distance between max_{t<=1} Re path and the matched
    /// discretized Brownian reference.
    pub ks_distance: f64,
    pub critical_value: f64,
    pub significance: f64,
    pub pass: bool,
}

/// Raw samples behind the path-functional test: the per-replicate running
/// maxima of Re of the requested path, and the matched Brownian reference
/// scaled by sigma. Returns (maxima, reference, sigma).
pub fn path_max_samples(
    exp: &QuenchedExperiment,
    source: PathSource,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let theta = exp.fixed_theta()?;
    let class = classify_frequency(&exp.family, theta);
    if !class.in_i {
        return Err(CoreError::FrequencyNotIsotropic { theta });
    }
    let sigma2 = class.sigma2_closed.expect("isotropic frequencies carry a closed form");
    exp.check_truncation_gate(sigma2.sqrt())?;
    let sigma = match source {
        PathSource::CenteredTransform => sigma2.sqrt(),
        PathSource::Martingale(order) => {
            let approx = crate::transform::martingale_approximant(&exp.family, theta, order)?;
            (approx.second_moment() / 2.0).sqrt()
        }
    };

    let n = exp.n;
    let scale = 1.0 / (n as f64).sqrt();
    let master = exp.master_seed();
    let family = exp.family.clone();
    let innovation = exp.innovation;
    let x0 = exp.past.x0();

    let maxima: Vec<f64> = (0..exp.replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(master, StreamKind::Future(rep));
            let future: Vec<f64> = (0..n - 1).map(|_| innovation.sample(&mut rng)).collect();
            let mut acc = Complex64::new(0.0, 0.0);
            let mut rot = Rotor::new(theta);
            let mut max_re = 0.0f64; // the path starts at 0
            match source {
                PathSource::CenteredTransform => {
                    let parts = crate::transform::future_parts(&family, &future);
                    for &f in &parts {
                        acc += rot.current() * f;
                        rot.advance();
                        max_re = max_re.max(acc.re);
                    }
                }
                PathSource::Martingale(order) => {
                    let d0 = crate::transform::martingale_approximant(&family, theta, order)
                        .expect("order validated above")
                        .d0_coef;
                    for k in 0..n {
                        let x = if k == 0 { x0 } else { future[k - 1] };
                        acc += rot.current() * x;
                        rot.advance();
                        max_re = max_re.max((d0 * acc).re);
                    }
                }
            }
            max_re * scale
        })
        .collect();

    let reference: Vec<f64> = (0..exp.replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(master, StreamKind::Reference(rep));
            let mut acc = 0.0f64;
            let mut max = 0.0f64;
            for _ in 0..n {
                let g: f64 = rng.sample(rand_distr::StandardNormal);
                acc += g;
                max = max.max(acc);
            }
            sigma * max * scale
        })
        .collect();

    Ok((maxima, reference, sigma))
}

/// Running-max functional test: the empirical law of max_{t<=1} Re W(t) is
/// compared against sigma(theta) times the running max of a standard random
/// walk with the same number of steps, so discretization bias cancels.
pub fn run_path_functional_test(
    exp: &QuenchedExperiment,
    source: PathSource,
) -> Result<PathFunctionalReport> {
    let theta = exp.fixed_theta()?;
    let (maxima, reference, sigma) = path_max_samples(exp, source)?;
    let ks_distance = ks_two_sample_statistic(&maxima, &reference);
    let critical_value = ks_two_sample_critical(exp.significance, maxima.len(), reference.len());

    Ok(PathFunctionalReport {
        theta,
        source,
        sigma,
        scale_n: exp.n,
        replicates: exp.replicates,
        master_seed: exp.master_seed(),
        ks_distance,
        critical_value,
        significance: exp.significance,
        pass: ks_distance < critical_value,
    })
}

/// Per-past variance estimates of Re W(1) across independent frozen pasts.
#[derive(Debug, Clone, Serialize)]
pub struct DispersionReport {
    pub theta: f64,
    pub per_past_var: Vec<f64>,
    pub per_past_se: Vec<f64>,
    pub pooled_var: f64,
    pub max_abs_z: f64,
    pub pass: bool,
}

/// The quenched limit does not depend on the frozen past. Estimate
/// Var Re W(1) under `pasts` independent pasts and check the spread is
/// explained by Monte Carlo error alone (each deviation within 3 SE).
#[allow(clippy::too_many_arguments)]
pub fn past_dispersion_check(
    family: &CoefficientFamily,
    innov: &InnovationDistribution,
    theta: f64,
    n: usize,
    replicates: usize,
    pasts: usize,
    depth: usize,
    base_seed: u64,
) -> Result<DispersionReport> {
    if pasts < 2 {
        return Err(CoreError::InvalidParameter("dispersion check needs >= 2 pasts".into()));
    }
    let mut per_past_var = Vec::with_capacity(pasts);
    let mut per_past_se = Vec::with_capacity(pasts);
    for k in 0..pasts as u64 {
        let past = sample_past(family, innov, depth, mix(base_seed, k));
        let exp = QuenchedExperiment::new(
            family.clone(),
            *innov,
            past,
            ThetaMode::Fixed(theta),
            n,
            1.0,
            replicates,
            vec![1.0],
            0.01,
        )?;
        let report = run_fdd_test(&exp)?;
        per_past_var.push(report.points[0].var_re);
        per_past_se.push(report.points[0].var_re_se);
    }
    let pooled_var = per_past_var.iter().sum::<f64>() / pasts as f64;
    let max_abs_z = per_past_var
        .iter()
        .zip(&per_past_se)
        .map(|(&v, &se)| ((v - pooled_var) / se).abs())
        .fold(0.0f64, f64::max);
    Ok(DispersionReport {
        theta,
        per_past_var,
        per_past_se,
        pooled_var,
        max_abs_z,
        pass: max_abs_z < 3.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InnovationDistribution;

    fn normal() -> InnovationDistribution {
        InnovationDistribution::standard_normal()
    }

    fn experiment(
        family: CoefficientFamily,
        theta_mode: ThetaMode,
        n: usize,
        replicates: usize,
        seed: u64,
    ) -> QuenchedExperiment {
        let past = sample_past(&family, &normal(), 64, seed);
        QuenchedExperiment::new(
            family,
            normal(),
            past,
            theta_mode,
            n,
            1.0,
            replicates,
            vec![0.5, 1.0],
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn experiment_validation() {
        let fam = CoefficientFamily::geometric(0.5).unwrap();
        let past = sample_past(&fam, &normal(), 8, 1);
        // Too few replicates for p-values.
        assert!(QuenchedExperiment::new(
            fam.clone(),
            normal(),
            past.clone(),
            ThetaMode::Fixed(1.0),
            64,
            1.0,
            100,
            vec![1.0],
            0.01
        )
        .is_err());
        // Unsorted grid.
        assert!(QuenchedExperiment::new(
            fam,
            normal(),
            past,
            ThetaMode::Fixed(1.0),
            64,
            1.0,
            256,
            vec![1.0, 0.5],
            0.01
        )
        .is_err());
    }

    #[test]
    fn fdd_test_geometric_passes() {
        // The 10% variance tolerance corresponds to ~3 sigma at R = 2000;
        // smaller replicate counts would make this test flaky.
        let exp = experiment(
            CoefficientFamily::geometric(0.5).unwrap(),
            ThetaMode::Fixed(std::f64::consts::FRAC_PI_2),
            1024,
            2000,
            11,
        );
        let report = run_fdd_test(&exp).unwrap();
        assert!(report.pass, "report: {report:?}");
        assert!((report.sigma2.unwrap() - 0.1).abs() < 1e-12);
        for p in &report.points {
            assert!(p.ks_re.p_adjusted > 0.01);
        }
    }

    #[test]
    fn fdd_test_rejects_spectrum_frequency() {
        let exp = experiment(
            CoefficientFamily::geometric(0.5).unwrap(),
            ThetaMode::Fixed(std::f64::consts::PI),
            256,
            256,
            3,
        );
        let err = run_fdd_test(&exp).unwrap_err();
        assert!(err.to_string().contains("run_anisotropy_probe"));
    }

    #[test]
    fn fdd_test_null_process_degenerate() {
        let exp =
            experiment(CoefficientFamily::finite(vec![]), ThetaMode::Fixed(1.0), 256, 256, 3);
        let report = run_fdd_test(&exp).unwrap();
        assert!(report.pass);
        for p in &report.points {
            assert_eq!(p.var_re, 0.0);
            assert_eq!(p.var_im, 0.0);
        }
    }

    #[test]
    fn fdd_report_is_deterministic() {
        let make = || {
            let exp = experiment(
                CoefficientFamily::geometric(0.5).unwrap(),
                ThetaMode::Fixed(1.1),
                256,
                250,
                99,
            );
            serde_json::to_string(&run_fdd_test(&exp).unwrap()).unwrap()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn anisotropy_probe_geometric_at_pi() {
        let exp = experiment(
            CoefficientFamily::geometric(0.5).unwrap(),
            ThetaMode::Fixed(std::f64::consts::PI),
            1024,
            600,
            5,
        );
        let report = run_anisotropy_probe(&exp).unwrap();
        assert!(report.pass, "report: {report:?}");
        let p = &report.points[1];
        assert!((p.target_var_re - 1.0 / 9.0).abs() < 1e-12);
        assert!(p.var_im < 1e-20, "theta = pi keeps the path exactly real");
    }

    #[test]
    fn anisotropy_probe_rejects_divergent_series() {
        let exp =
            experiment(CoefficientFamily::harmonic(), ThetaMode::Fixed(0.0), 256, 256, 5);
        assert!(run_anisotropy_probe(&exp).is_err());
    }

    #[test]
    fn anisotropy_probe_rejects_interior_theta() {
        let exp = experiment(
            CoefficientFamily::geometric(0.5).unwrap(),
            ThetaMode::Fixed(1.0),
            256,
            256,
            5,
        );
        assert!(run_anisotropy_probe(&exp).is_err());
    }

    #[test]
    fn averaged_frequency_needs_uniform_mode() {
        let exp = experiment(
            CoefficientFamily::geometric(0.5).unwrap(),
            ThetaMode::Fixed(1.0),
            256,
            256,
            5,
        );
        assert!(run_averaged_frequency_test(&exp).is_err());
    }

    #[test]
    fn averaged_frequency_parseval() {
        let exp = experiment(
            CoefficientFamily::geometric(0.5).unwrap(),
            ThetaMode::UniformRandom,
            1024,
            1200,
            17,
        );
        let report = run_averaged_frequency_test(&exp).unwrap();
        let mix = report.mixture.as_ref().unwrap();
        assert!((mix.target - 1.0 / 3.0).abs() < 1e-12);
        assert!(mix.pass, "mixture: {mix:?}");
    }

    #[test]
    fn averaged_frequency_null_process() {
        let exp =
            experiment(CoefficientFamily::finite(vec![]), ThetaMode::UniformRandom, 256, 256, 5);
        let report = run_averaged_frequency_test(&exp).unwrap();
        let mix = report.mixture.as_ref().unwrap();
        assert_eq!(mix.mean_sq_modulus, 0.0);
        assert!(mix.pass);
    }

    #[test]
    fn path_functional_test_geometric() {
        let exp = experiment(
            CoefficientFamily::geometric(0.5).unwrap(),
            ThetaMode::Fixed(std::f64::consts::FRAC_PI_2),
            1024,
            600,
            23,
        );
        let report = run_path_functional_test(&exp, PathSource::CenteredTransform).unwrap();
        assert!(report.pass, "ks {} vs crit {}", report.ks_distance, report.critical_value);

        let report =
            run_path_functional_test(&exp, PathSource::Martingale(MartingaleOrder::Infinite))
                .unwrap();
        assert!(report.pass, "martingale path: ks {}", report.ks_distance);
    }

    #[test]
    fn dispersion_check_small() {
        let fam = CoefficientFamily::geometric(0.5).unwrap();
        let report = past_dispersion_check(
            &fam,
            &normal(),
            std::f64::consts::FRAC_PI_2,
            512,
            300,
            3,
            32,
            7,
        )
        .unwrap();
        assert!(report.pass, "max |z| = {}", report.max_abs_z);
    }
}
