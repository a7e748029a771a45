//! Experiment orchestration: dispatches subcommands against one frozen past,
//! writes the CSV/plot artifacts, and assembles the run manifest.
//!
//! Statistical failures are verdicts (`fail`), precondition violations from
//! the library are recorded as `error` with the originating message; both
//! make the process exit nonzero. Only I/O problems abort the run.

use crate::config::{RunConfig, ThetaSpec};
use crate::output::{num, OutputSink, EXACT};
use qdftlab_core::rng::{avalanche, mix, mix_constants};
use qdftlab_core::{
    classify_frequency_with_roots, decay_diagnostic, decomposition_residual, evaluate_conditions,
    m_path, run_anisotropy_probe, run_averaged_frequency_test, run_fdd_test,
    run_path_functional_test, sample_past, sigma2_estimator, sigma2_finite_n_exact,
    simulate_future, w_path, w_samples, CoreError, FddTestReport, MartingaleOrder,
    PastRealization, PathSource, QuenchedExperiment, ThetaMode,
};
use serde::Serialize;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Conditions,
    Simulate,
    DecomposeCheck,
    Decay,
    FddTest,
    Anisotropy,
    AvgFreq,
    PathTest,
    All,
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Conditions => "conditions",
            Action::Simulate => "simulate",
            Action::DecomposeCheck => "decompose-check",
            Action::Decay => "decay",
            Action::FddTest => "fdd-test",
            Action::Anisotropy => "anisotropy",
            Action::AvgFreq => "avg-freq",
            Action::PathTest => "path-test",
            Action::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Error,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRecord {
    pub id: String,
    pub status: Status,
    pub detail: String,
    pub millis: u128,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub mix_constants: String,
    pub config: RunConfig,
    pub experiments: Vec<ExperimentRecord>,
    pub files: Vec<String>,
    pub total_millis: u128,
    pub overall: Status,
}

const FDD_HEADER: &[&str] = &[
    "test",
    "theta",
    "t",
    "q",
    "var_re",
    "var_re_err",
    "var_im",
    "var_im_err",
    "target_var_re",
    "target_var_re_err",
    "target_var_im",
    "target_var_im_err",
    "corr_re_im",
    "corr_re_im_err",
    "ks_stat_re",
    "ks_stat_re_err",
    "ks_p_re",
    "ks_p_re_err",
    "ks_p_re_adj",
    "ks_p_re_adj_err",
    "ks_stat_im",
    "ks_stat_im_err",
    "ks_p_im",
    "ks_p_im_err",
    "ks_p_im_adj",
    "ks_p_im_adj_err",
    "mean_sq",
    "mean_sq_err",
    "mean_sq_target",
    "mean_sq_target_err",
    "angle_ks_stat",
    "angle_ks_stat_err",
    "angle_ks_p",
    "angle_ks_p_err",
    "verdict",
];

struct Runner<'a> {
    config: &'a RunConfig,
    past: PastRealization,
    sink: OutputSink,
    records: Vec<ExperimentRecord>,
    fdd_rows: Vec<Vec<String>>,
    sigma2_rows: Vec<Vec<String>>,
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

impl<'a> Runner<'a> {
    fn fixed_thetas(&self) -> Option<&[f64]> {
        match &self.config.theta {
            ThetaSpec::Fixed(list) => Some(list),
            ThetaSpec::Uniform => None,
        }
    }

    fn is_spectrum_frequency(theta: f64) -> bool {
        let x = theta / std::f64::consts::PI;
        (x - x.round()).abs() < 1e-9
    }

    fn experiment(&self, theta_mode: ThetaMode) -> Result<QuenchedExperiment, CoreError> {
        let c = self.config;
        QuenchedExperiment::new(
            c.family.clone(),
            c.innovation,
            self.past.clone(),
            theta_mode,
            c.n,
            c.m,
            c.replicates,
            c.time_grid.clone(),
            c.significance,
        )
    }

    fn record<F>(&mut self, id: String, body: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut Self) -> anyhow::Result<(Status, String)>,
    {
        let start = Instant::now();
        let (status, detail) = body(self)?;
        self.records.push(ExperimentRecord {
            id,
            status,
            detail,
            millis: start.elapsed().as_millis(),
        });
        Ok(())
    }

    // ------------------------------------------------------------------
    // conditions
    // ------------------------------------------------------------------
    fn run_conditions(&mut self) -> anyhow::Result<()> {
        self.record("conditions".to_string(), |this| {
            let n_terms = 128;
            let report = evaluate_conditions(&this.config.family, n_terms);
            let mut rows = Vec::with_capacity(n_terms);
            for i in 0..n_terms {
                rows.push(vec![
                    (i + 1).to_string(),
                    num(report.hannan_partial_sums[i]),
                    EXACT.into(),
                    num(report.weak_hannan_partial_sums[i]),
                    EXACT.into(),
                    num(report.regularity_decay[i]),
                    EXACT.into(),
                    report.hannan_verdict.as_str().into(),
                    report.weak_hannan_verdict.as_str().into(),
                    report.regularity_verdict.as_str().into(),
                ]);
            }
            this.sink.write_csv(
                "conditions.csv",
                &[
                    "n",
                    "hannan_partial",
                    "hannan_partial_err",
                    "weak_hannan_partial",
                    "weak_hannan_partial_err",
                    "regularity_decay",
                    "regularity_decay_err",
                    "hannan_verdict",
                    "weak_hannan_verdict",
                    "regularity_verdict",
                ],
                &rows,
            )?;
            let detail = format!(
                "hannan={} weak_hannan={} regularity={}",
                report.hannan_verdict.as_str(),
                report.weak_hannan_verdict.as_str(),
                report.regularity_verdict.as_str()
            );
            Ok((Status::Pass, detail))
        })
    }

    // ------------------------------------------------------------------
    // simulate
    // ------------------------------------------------------------------
    fn run_simulate(&mut self) -> anyhow::Result<()> {
        self.record("simulate".to_string(), |this| {
            let c = this.config;
            let horizon = (c.n as f64 * c.m).ceil() as usize;
            let theta = match &c.theta {
                ThetaSpec::Fixed(list) => list[0],
                ThetaSpec::Uniform => std::f64::consts::FRAC_PI_2,
            };
            let reps = 3.min(c.replicates) as u64;
            for rep in 0..reps {
                let bundle = simulate_future(&this.past, &c.family, &c.innovation, horizon, rep);
                let rows: Vec<Vec<f64>> = (0..horizon)
                    .map(|k| vec![k as f64, bundle.values()[k], bundle.cond_exp_zero(k)])
                    .collect();
                this.sink.write_dat(
                    &format!("paths/trajectory_rep{rep}.dat"),
                    &["k", "X_k", "E0_X_k"],
                    &rows,
                )?;

                let wp = w_path(&bundle, &this.past, &c.family, theta, c.m, c.grid_points)
                    .map_err(anyhow::Error::from)?;
                let rows: Vec<Vec<f64>> = (0..=wp.grid_points)
                    .map(|g| vec![wp.time_at(g), wp.values[g].re, wp.values[g].im])
                    .collect();
                this.sink.write_dat(
                    &format!("paths/wpath_rep{rep}.dat"),
                    &["t", "re", "im"],
                    &rows,
                )?;

                let r = *c.r_list.last().unwrap();
                let vp = m_path(
                    &bundle,
                    &c.family,
                    theta,
                    MartingaleOrder::Finite(r),
                    c.m,
                    c.grid_points,
                )
                .map_err(anyhow::Error::from)?;
                let rows: Vec<Vec<f64>> = (0..=vp.grid_points)
                    .map(|g| vec![vp.time_at(g), vp.values[g].re, vp.values[g].im])
                    .collect();
                this.sink.write_dat(
                    &format!("paths/vpath_rep{rep}.dat"),
                    &["t", "re", "im"],
                    &rows,
                )?;
            }
            Ok((Status::Pass, format!("{reps} replicates at theta={theta} written under paths/")))
        })
    }

    // ------------------------------------------------------------------
    // decompose-check
    // ------------------------------------------------------------------
    fn run_decompose(&mut self) -> anyhow::Result<()> {
        self.record("decompose-check".to_string(), |this| {
            let c = this.config;
            let cases = 1000u64;
            let mut rows = Vec::with_capacity(cases as usize);
            let mut worst = 0.0f64;
            for case in 0..cases {
                let bits = mix(c.master_seed, 0x00DE_C0DE + case);
                let theta = (bits % 628_318) as f64 * 1e-5;
                let r = 1 + ((bits >> 20) % 8) as usize;
                let n = 2 + ((bits >> 32) % 63) as usize;
                let seed = avalanche(bits);
                let past = sample_past(&c.family, &c.innovation, 16, seed);
                let bundle = simulate_future(&past, &c.family, &c.innovation, 64, case);
                let check = decomposition_residual(&bundle, &past, &c.family, theta, r, n)
                    .map_err(anyhow::Error::from)?;
                let rel = check.residual.norm() / (1.0 + check.lhs.norm());
                worst = worst.max(rel);
                rows.push(vec![
                    case.to_string(),
                    num(theta),
                    r.to_string(),
                    n.to_string(),
                    seed.to_string(),
                    num(check.lhs.norm()),
                    EXACT.into(),
                    num(check.residual.norm()),
                    EXACT.into(),
                    num(rel),
                    EXACT.into(),
                    verdict(rel < 1e-9).into(),
                ]);
            }
            this.sink.write_csv(
                "decompose.csv",
                &[
                    "case",
                    "theta",
                    "r",
                    "n",
                    "seed",
                    "lhs_abs",
                    "lhs_abs_err",
                    "residual_abs",
                    "residual_abs_err",
                    "rel_residual",
                    "rel_residual_err",
                    "verdict",
                ],
                &rows,
            )?;
            let pass = worst < 1e-9;
            Ok((
                if pass { Status::Pass } else { Status::Fail },
                format!("{cases} tuples, worst relative residual {worst:.3e}"),
            ))
        })
    }

    // ------------------------------------------------------------------
    // decay
    // ------------------------------------------------------------------
    fn run_decay(&mut self) -> anyhow::Result<()> {
        let Some(thetas) = self.fixed_thetas().map(<[f64]>::to_vec) else {
            return self.record("decay".to_string(), |_| {
                Ok((Status::Skipped, "needs fixed frequencies (theta != uniform)".into()))
            });
        };
        let mut rows = Vec::new();
        for (ti, theta) in thetas.iter().copied().enumerate() {
            self.record(format!("decay theta={theta}"), |this| {
                let c = this.config;
                let matrix = match decay_diagnostic(
                    &this.past,
                    &c.family,
                    &c.innovation,
                    theta,
                    &c.r_list,
                    &c.n_list,
                    c.replicates,
                ) {
                    Ok(m) => m,
                    Err(e) => return Ok((Status::Error, e.to_string())),
                };
                for (i, &r) in matrix.r_values.iter().enumerate() {
                    let mut curve = Vec::new();
                    for (j, &nn) in matrix.n_values.iter().enumerate() {
                        rows.push(vec![
                            num(theta),
                            r.to_string(),
                            nn.to_string(),
                            num(matrix.mean[i][j]),
                            num(matrix.std_error[i][j]),
                        ]);
                        curve.push(vec![nn as f64, matrix.mean[i][j], matrix.std_error[i][j]]);
                    }
                    this.sink.write_dat(
                        &format!("paths/decay_theta{ti}_r{r}.dat"),
                        &["N", "value", "stderr"],
                        &curve,
                    )?;
                }
                let last = matrix.mean.last().unwrap().last().unwrap();
                Ok((Status::Pass, format!("largest-(r,N) cell {last:.4e}")))
            })?;
        }
        if !rows.is_empty() {
            self.sink.write_csv(
                "decay.csv",
                &["theta", "r", "N", "value", "value_err"],
                &rows,
            )?;
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // fdd-test (+ sigma2 table)
    // ------------------------------------------------------------------
    fn run_fdd(&mut self, route_spectral: bool) -> anyhow::Result<()> {
        let Some(thetas) = self.fixed_thetas().map(<[f64]>::to_vec) else {
            return self.record("fdd-test".to_string(), |_| {
                Ok((Status::Skipped, "needs fixed frequencies (theta != uniform)".into()))
            });
        };
        for (ti, theta) in thetas.iter().copied().enumerate() {
            if route_spectral && Self::is_spectrum_frequency(theta) {
                self.record(format!("fdd theta={theta}"), |_| {
                    Ok((Status::Skipped, "spectrum frequency; covered by the anisotropy probe".into()))
                })?;
                continue;
            }
            self.record(format!("fdd theta={theta}"), |this| {
                this.push_sigma2_row(theta)?;
                let exp = match this.experiment(ThetaMode::Fixed(theta)) {
                    Ok(e) => e,
                    Err(e) => return Ok((Status::Error, e.to_string())),
                };
                match run_fdd_test(&exp) {
                    Ok(report) => {
                        this.push_fdd_points("fdd", &report);
                        this.write_fdd_cdf_overlays(ti, theta, &exp, &report)?;
                        Ok((
                            if report.pass { Status::Pass } else { Status::Fail },
                            fdd_detail(&report),
                        ))
                    }
                    Err(e) => Ok((Status::Error, e.to_string())),
                }
            })?;
        }
        Ok(())
    }

    fn push_sigma2_row(&mut self, theta: f64) -> anyhow::Result<()> {
        let c = self.config;
        let class = classify_frequency_with_roots(&c.family, theta, c.spec_roots);
        let (closed, closed_err) = match class.sigma2_closed {
            Some(v) => (
                num(v),
                if class.sigma2_uncertainty == 0.0 {
                    EXACT.to_string()
                } else {
                    num(class.sigma2_uncertainty)
                },
            ),
            None => (String::new(), String::new()),
        };
        let (est, est_err) =
            match sigma2_estimator(&self.past, &c.family, &c.innovation, theta, c.n, c.replicates)
            {
                Ok(e) => (num(e.value), num(e.std_error)),
                Err(_) => (String::new(), String::new()),
            };
        let finite_n = sigma2_finite_n_exact(&c.family, theta, c.n);
        self.sigma2_rows.push(vec![
            num(theta),
            c.n.to_string(),
            c.replicates.to_string(),
            closed,
            closed_err,
            est,
            est_err,
            num(finite_n),
            EXACT.into(),
        ]);
        Ok(())
    }

    fn push_fdd_points(&mut self, test: &str, report: &FddTestReport) {
        let theta_label = report.theta.map(num).unwrap_or_else(|| "uniform".into());
        for p in &report.points {
            let (ks_im_stat, ks_im_p, ks_im_adj) = match &p.ks_im {
                Some(k) => (num(k.statistic), num(k.p_value), num(k.p_adjusted)),
                None => (String::new(), String::new(), String::new()),
            };
            let im_err = if p.ks_im.is_some() { EXACT.to_string() } else { String::new() };
            self.fdd_rows.push(vec![
                test.into(),
                theta_label.clone(),
                num(p.t),
                p.q.to_string(),
                num(p.var_re),
                num(p.var_re_se),
                num(p.var_im),
                num(p.var_im_se),
                num(p.target_var_re),
                EXACT.into(),
                num(p.target_var_im),
                EXACT.into(),
                num(p.corr_re_im),
                EXACT.into(),
                num(p.ks_re.statistic),
                EXACT.into(),
                num(p.ks_re.p_value),
                EXACT.into(),
                num(p.ks_re.p_adjusted),
                EXACT.into(),
                ks_im_stat,
                im_err.clone(),
                ks_im_p,
                im_err.clone(),
                ks_im_adj,
                im_err,
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                verdict(p.pass).into(),
            ]);
        }
        if let Some(mix) = &report.mixture {
            self.fdd_rows.push(vec![
                test.into(),
                theta_label,
                num(1.0),
                report.scale_n.to_string(),
                num(mix.var_re),
                EXACT.into(),
                num(mix.var_im),
                EXACT.into(),
                num(mix.target_component),
                EXACT.into(),
                num(mix.target_component),
                EXACT.into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                num(mix.mean_sq_modulus),
                num(mix.se),
                num(mix.target),
                EXACT.into(),
                num(mix.angle_ks.statistic),
                EXACT.into(),
                num(mix.angle_ks.p_value),
                EXACT.into(),
                verdict(mix.pass).into(),
            ]);
        }
    }

    fn write_fdd_cdf_overlays(
        &mut self,
        theta_index: usize,
        theta: f64,
        exp: &QuenchedExperiment,
        report: &FddTestReport,
    ) -> anyhow::Result<()> {
        let samples = w_samples(exp, theta);
        let sigma2 = report.sigma2.unwrap_or(0.0);
        if sigma2 == 0.0 {
            return Ok(());
        }
        for (i, point) in report.points.iter().enumerate() {
            let scale = (sigma2 * point.t).sqrt();
            let mut xs: Vec<f64> = samples.iter().map(|row| row[i].re / scale).collect();
            xs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            let n = xs.len() as f64;
            let rows: Vec<Vec<f64>> = xs
                .iter()
                .enumerate()
                .map(|(k, &x)| vec![x, (k as f64 + 1.0) / n, qdftlab_core::stats::normal_cdf(x)])
                .collect();
            self.sink.write_dat(
                &format!("paths/fdd_cdf_theta{theta_index}_t{i}.dat"),
                &["x", "empirical_cdf", "normal_cdf"],
                &rows,
            )?;
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // anisotropy
    // ------------------------------------------------------------------
    fn run_anisotropy(&mut self) -> anyhow::Result<()> {
        // Default probe frequencies when the config names no spectrum point:
        // both of {0, pi} where the coefficient series converges.
        let defaults = || {
            [0.0, std::f64::consts::PI]
                .into_iter()
                .filter(|&t| self.config.family.series_converges_at(t))
                .collect::<Vec<f64>>()
        };
        let thetas: Vec<f64> = match self.fixed_thetas() {
            Some(list) => {
                let spectral: Vec<f64> = list
                    .iter()
                    .copied()
                    .filter(|t| Self::is_spectrum_frequency(*t))
                    .collect();
                if spectral.is_empty() {
                    defaults()
                } else {
                    spectral
                }
            }
            None => defaults(),
        };
        for theta in thetas {
            self.record(format!("anisotropy theta={theta}"), |this| {
                let exp = match this.experiment(ThetaMode::Fixed(theta)) {
                    Ok(e) => e,
                    Err(e) => return Ok((Status::Error, e.to_string())),
                };
                match run_anisotropy_probe(&exp) {
                    Ok(report) => {
                        this.push_fdd_points("anisotropy", &report);
                        Ok((
                            if report.pass { Status::Pass } else { Status::Fail },
                            fdd_detail(&report),
                        ))
                    }
                    Err(e) => Ok((Status::Error, e.to_string())),
                }
            })?;
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // avg-freq
    // ------------------------------------------------------------------
    fn run_avg_freq(&mut self) -> anyhow::Result<()> {
        self.record("avg-freq".to_string(), |this| {
            let exp = match this.experiment(ThetaMode::UniformRandom) {
                Ok(e) => e,
                Err(e) => return Ok((Status::Error, e.to_string())),
            };
            match run_averaged_frequency_test(&exp) {
                Ok(report) => {
                    this.push_fdd_points("avg_freq", &report);
                    let mix = report.mixture.as_ref().expect("averaged report carries mixture");
                    if mix.target > 0.0 {
                        let ends = qdftlab_core::averaged_w1_samples(&exp);
                        let two_pi = 2.0 * std::f64::consts::PI;
                        let mut angles: Vec<f64> =
                            ends.iter().map(|w| w.im.atan2(w.re).rem_euclid(two_pi)).collect();
                        angles.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
                        let n = angles.len() as f64;
                        let rows: Vec<Vec<f64>> = angles
                            .iter()
                            .enumerate()
                            .map(|(k, &a)| vec![a, (k as f64 + 1.0) / n, a / two_pi])
                            .collect();
                        this.sink.write_dat(
                            "paths/angle_cdf.dat",
                            &["angle", "empirical_cdf", "uniform_cdf"],
                            &rows,
                        )?;
                    }
                    let detail = format!(
                        "E|W(1)|^2 = {:.5} +- {:.5} (target {:.5}), angle KS p = {:.4}",
                        mix.mean_sq_modulus, mix.se, mix.target, mix.angle_ks.p_value
                    );
                    Ok((if report.pass { Status::Pass } else { Status::Fail }, detail))
                }
                Err(e) => Ok((Status::Error, e.to_string())),
            }
        })
    }

    // ------------------------------------------------------------------
    // path-test
    // ------------------------------------------------------------------
    fn run_path_test(&mut self, route_spectral: bool) -> anyhow::Result<()> {
        let Some(thetas) = self.fixed_thetas().map(<[f64]>::to_vec) else {
            return self.record("path-test".to_string(), |_| {
                Ok((Status::Skipped, "needs fixed frequencies (theta != uniform)".into()))
            });
        };
        let mut rows = Vec::new();
        for (ti, theta) in thetas.iter().copied().enumerate() {
            if route_spectral && Self::is_spectrum_frequency(theta) {
                self.record(format!("path-test theta={theta}"), |_| {
                    Ok((Status::Skipped, "spectrum frequency; covered by the anisotropy probe".into()))
                })?;
                continue;
            }
            let mut sources = vec![("w", PathSource::CenteredTransform)];
            if self.config.family.is_absolutely_summable() {
                sources.push(("v_inf", PathSource::Martingale(MartingaleOrder::Infinite)));
            }
            for (tag, source) in sources {
                self.record(format!("path-test theta={theta} source={tag}"), |this| {
                    let exp = match this.experiment(ThetaMode::Fixed(theta)) {
                        Ok(e) => e,
                        Err(e) => return Ok((Status::Error, e.to_string())),
                    };
                    match run_path_functional_test(&exp, source) {
                        Ok(report) => {
                            rows.push(vec![
                                num(theta),
                                tag.to_string(),
                                exp.n.to_string(),
                                exp.replicates.to_string(),
                                num(report.sigma),
                                EXACT.into(),
                                num(report.ks_distance),
                                EXACT.into(),
                                num(report.critical_value),
                                EXACT.into(),
                                verdict(report.pass).into(),
                            ]);
                            let (maxima, reference, _) =
                                qdftlab_core::path_max_samples(&exp, source)
                                    .expect("samples agree with the report");
                            this.write_two_sample_overlay(
                                &format!("paths/pathmax_cdf_theta{ti}_{tag}.dat"),
                                &maxima,
                                &reference,
                            )?;
                            Ok((
                                if report.pass { Status::Pass } else { Status::Fail },
                                format!(
                                    "KS distance {:.4} vs critical {:.4}",
                                    report.ks_distance, report.critical_value
                                ),
                            ))
                        }
                        Err(e) => Ok((Status::Error, e.to_string())),
                    }
                })?;
            }
        }
        if !rows.is_empty() {
            self.sink.write_csv(
                "pathtest.csv",
                &[
                    "theta",
                    "source",
                    "n",
                    "replicates",
                    "sigma",
                    "sigma_err",
                    "ks_distance",
                    "ks_distance_err",
                    "critical_value",
                    "critical_value_err",
                    "verdict",
                ],
                &rows,
            )?;
        }
        Ok(())
    }

    fn write_two_sample_overlay(
        &mut self,
        name: &str,
        a: &[f64],
        b: &[f64],
    ) -> anyhow::Result<()> {
        let mut xs: Vec<f64> = a.iter().chain(b).copied().collect();
        xs.sort_unstable_by(|u, v| u.partial_cmp(v).unwrap());
        let mut a_sorted = a.to_vec();
        let mut b_sorted = b.to_vec();
        a_sorted.sort_unstable_by(|u, v| u.partial_cmp(v).unwrap());
        b_sorted.sort_unstable_by(|u, v| u.partial_cmp(v).unwrap());
        let ecdf = |sorted: &[f64], x: f64| {
            let count = sorted.partition_point(|&v| v <= x);
            count as f64 / sorted.len() as f64
        };
        let rows: Vec<Vec<f64>> =
            xs.iter().map(|&x| vec![x, ecdf(&a_sorted, x), ecdf(&b_sorted, x)]).collect();
        self.sink.write_dat(name, &["x", "test_cdf", "reference_cdf"], &rows)?;
        Ok(())
    }

    fn finalize(&mut self) -> anyhow::Result<()> {
        if !self.sigma2_rows.is_empty() {
            let rows = std::mem::take(&mut self.sigma2_rows);
            self.sink.write_csv(
                "sigma2.csv",
                &[
                    "theta",
                    "n",
                    "replicates",
                    "sigma2_closed",
                    "sigma2_closed_err",
                    "sigma2_estimate",
                    "sigma2_estimate_err",
                    "sigma2_finite_n",
                    "sigma2_finite_n_err",
                ],
                &rows,
            )?;
        }
        if !self.fdd_rows.is_empty() {
            let rows = std::mem::take(&mut self.fdd_rows);
            self.sink.write_csv("fdd.csv", FDD_HEADER, &rows)?;
        }
        Ok(())
    }
}

fn fdd_detail(report: &FddTestReport) -> String {
    let points: Vec<String> = report
        .points
        .iter()
        .map(|p| {
            format!(
                "t={}: var_re {:.4} / var_im {:.4} (target {:.4}) ks_p_adj {:.3}",
                p.t, p.var_re, p.var_im, p.target_var_re, p.ks_re.p_adjusted
            )
        })
        .collect();
    points.join("; ")
}

/// Run one subcommand. Returns the manifest and the process exit code
/// (nonzero when any verdict failed or any experiment errored).
pub fn execute(action: Action, config: &RunConfig, out_dir: &Path) -> anyhow::Result<(RunManifest, i32)> {
    let start = Instant::now();
    let sink = OutputSink::new(out_dir)?;
    let past = sample_past(
        &config.family,
        &config.innovation,
        config.past_depth,
        config.master_seed,
    );
    let mut runner = Runner {
        config,
        past,
        sink,
        records: Vec::new(),
        fdd_rows: Vec::new(),
        sigma2_rows: Vec::new(),
    };

    match action {
        Action::Conditions => runner.run_conditions()?,
        Action::Simulate => runner.run_simulate()?,
        Action::DecomposeCheck => runner.run_decompose()?,
        Action::Decay => runner.run_decay()?,
        Action::FddTest => runner.run_fdd(false)?,
        Action::Anisotropy => runner.run_anisotropy()?,
        Action::AvgFreq => runner.run_avg_freq()?,
        Action::PathTest => runner.run_path_test(false)?,
        Action::All => {
            runner.run_conditions()?;
            runner.run_decompose()?;
            runner.run_simulate()?;
            runner.run_fdd(true)?;
            runner.run_anisotropy()?;
            runner.run_avg_freq()?;
            runner.run_decay()?;
            runner.run_path_test(true)?;
        }
    }
    runner.finalize()?;

    let overall = if runner.records.iter().any(|r| r.status == Status::Error) {
        Status::Error
    } else if runner.records.iter().any(|r| r.status == Status::Fail) {
        Status::Fail
    } else {
        Status::Pass
    };

    let mut files = runner.sink.sorted_files();
    files.push("run.json".to_string());
    files.sort();

    let manifest = RunManifest {
        tool: "qdftlab",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: action.name(),
        mix_constants: mix_constants(),
        config: config.clone(),
        experiments: std::mem::take(&mut runner.records),
        files,
        total_millis: start.elapsed().as_millis(),
        overall,
    };
    let body = serde_json::to_vec_pretty(&manifest)?;
    runner.sink.write_atomic("run.json", &body)?;

    let exit = if manifest.overall == Status::Pass { 0 } else { 1 };
    Ok((manifest, exit))
}
