//! Dispatch of a validated configuration to the computational routes, and the
//! files each route produces.

use std::io;
use std::path::PathBuf;
use std::time::Instant;

use qdc_core::classical::{
    default_classical_dt, default_steps_per_period, integrate_classical, lyapunov_max, occupied_cells, poincare_section_with,
    ClassicalPath, ClassicalState, LyapunovEstimate, PoincareSet,
};
use qdc_core::master::{default_master_dt, integrate_master_with, MasterDiagnostics, MasterRun};
use qdc_core::observables::{number_stats, shape_metrics, wigner, WignerGrid};
use qdc_core::qsd::{EnsembleSpec, EnsembleSummary, DEFAULT_QSD_DT};
use qdc_core::{DensityMatrix, Error};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{ConfigErrors, ExperimentConfig, Mode, WignerSource};
use crate::csv_row;
use crate::ensemble::run_ensemble_parallel;
use crate::output::{artifact_path, Csv, OutputSet};

/// Grid resolution used for the occupied-cell diagnostic of a section.
pub const CELL_GRID: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error("{context}: {source}")]
    Numeric {
        context: &'static str,
        #[source]
        source: Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl RunError {
    /// Process exit status: 2 for configuration problems, 3 for numerical or
    /// truncation failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numeric { source, .. } => match source {
                Error::InvalidDimension(_) | Error::InvalidArgument(_) | Error::Shape { .. } => 2,
                _ => 3,
            },
            RunError::Io { .. } => 1,
        }
    }
}

fn numeric(context: &'static str) -> impl FnOnce(Error) -> RunError {
    move |source| RunError::Numeric { context, source }
}

/// One sample of a number-statistics time series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub t: f64,
    pub mean_n: f64,
    pub var_n: f64,
    pub fano: Option<f64>,
    /// Standard errors; present for ensemble routes only.
    pub se_mean_n: Option<f64>,
    pub se_fano: Option<f64>,
    pub support_width_95: usize,
    pub flatness: f64,
    pub transient: bool,
}

/// A full number distribution kept for output.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub t: f64,
    pub p_n: Vec<f64>,
    pub se_p_n: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub points: Vec<SeriesPoint>,
    pub distributions: Vec<Distribution>,
}

/// Post-transient extremes of a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrema {
    pub fano_min: f64,
    pub t_fano_min: f64,
    pub fano_max: f64,
    pub t_fano_max: f64,
    pub mean_n_min: f64,
    pub mean_n_max: f64,
}

impl Series {
    pub fn settled(&self) -> impl Iterator<Item = &SeriesPoint> {
        self.points.iter().filter(|p| !p.transient)
    }

    pub fn extrema(&self) -> Option<Extrema> {
        let mut e: Option<Extrema> = None;
        for p in self.settled() {
            let Some(f) = p.fano else { continue };
            let x = e.get_or_insert(Extrema {
                fano_min: f,
                t_fano_min: p.t,
                fano_max: f,
                t_fano_max: p.t,
                mean_n_min: p.mean_n,
                mean_n_max: p.mean_n,
            });
            if f < x.fano_min {
                x.fano_min = f;
                x.t_fano_min = p.t;
            }
            if f > x.fano_max {
                x.fano_max = f;
                x.t_fano_max = p.t;
            }
            x.mean_n_min = x.mean_n_min.min(p.mean_n);
            x.mean_n_max = x.mean_n_max.max(p.mean_n);
        }
        e
    }

    fn series_csv(&self, with_errors: bool) -> String {
        let mut head = vec!["t[1/gamma]", "mean_n[quanta]", "var_n[quanta^2]", "fano[1]"];
        if with_errors {
            head.extend(["se_mean_n[quanta]", "se_fano[1]"]);
        }
        head.extend(["support_width_95[levels]", "flatness[1]", "transient"]);
        let mut c = Csv::new(&head);
        for p in &self.points {
            if with_errors {
                csv_row!(c, p.t, p.mean_n, p.var_n, p.fano, p.se_mean_n, p.se_fano, p.support_width_95, p.flatness, p.transient);
            } else {
                csv_row!(c, p.t, p.mean_n, p.var_n, p.fano, p.support_width_95, p.flatness, p.transient);
            }
        }
        c.into_string()
    }

    fn pn_csv(&self, with_errors: bool) -> String {
        let mut head = vec!["t[1/gamma]", "n[level]", "p_n[1]"];
        if with_errors {
            head.push("se_p_n[1]");
        }
        let mut c = Csv::new(&head);
        for d in &self.distributions {
            for (n, &p) in d.p_n.iter().enumerate() {
                match &d.se_p_n {
                    Some(se) if with_errors => csv_row!(c, d.t, n, p, se[n]),
                    _ => csv_row!(c, d.t, n, p),
                }
            }
        }
        c.into_string()
    }
}

fn extrema_json(e: Option<Extrema>) -> Value {
    match e {
        None => Value::Null,
        Some(e) => json!({
            "fano_min": e.fano_min,
            "t_fano_min": e.t_fano_min,
            "fano_max": e.fano_max,
            "t_fano_max": e.t_fano_max,
            "mean_n_min": e.mean_n_min,
            "mean_n_max": e.mean_n_max,
        }),
    }
}

fn in_window(cfg: &ExperimentConfig, t: f64) -> bool {
    cfg.pn_window.is_some_and(|(a, b)| t >= a - 1e-9 && t <= b + 1e-9)
}

fn shape_of(p_n: &[f64]) -> (usize, f64) {
    shape_metrics(p_n).map_or((0, f64::NAN), |s| (s.support_width_95, s.flatness))
}

/// The master-equation step a config selects.
pub fn master_dt(cfg: &ExperimentConfig) -> f64 {
    cfg.dt.unwrap_or_else(|| default_master_dt(&cfg.params))
}

pub fn qsd_dt(cfg: &ExperimentConfig) -> f64 {
    cfg.dt.unwrap_or(DEFAULT_QSD_DT)
}

fn master_run(cfg: &ExperimentConfig, dt: f64, t_final: f64, sample_times: Vec<f64>) -> Result<MasterRun, RunError> {
    let rho0 = cfg.initial.density_matrix(cfg.params.dim).map_err(numeric("initial state"))?;
    let run = MasterRun { params: cfg.params, rho0, t_final, dt, sample_times };
    run.validate().map_err(numeric("master equation"))?;
    Ok(run)
}

/// Number statistics from the master equation at the configured samples.
pub fn master_series(cfg: &ExperimentConfig) -> Result<(Series, MasterDiagnostics), RunError> {
    master_series_dt(cfg, master_dt(cfg))
}

fn master_series_dt(cfg: &ExperimentConfig, dt: f64) -> Result<(Series, MasterDiagnostics), RunError> {
    let run = master_run(cfg, dt, cfg.t_final, cfg.sample_times())?;
    let mut series = Series { points: Vec::new(), distributions: Vec::new() };
    let diag = integrate_master_with(&run, |t, rho| {
        let s = number_stats(rho)?;
        let (w, flat) = shape_of(&s.p_n);
        series.points.push(SeriesPoint {
            t,
            mean_n: s.mean_n,
            var_n: s.var_n,
            fano: s.fano,
            se_mean_n: None,
            se_fano: None,
            support_width_95: w,
            flatness: flat,
            transient: t < cfg.transient,
        });
        if in_window(cfg, t) {
            series.distributions.push(Distribution { t, p_n: s.p_n, se_p_n: None });
        }
        Ok(())
    })
    .map_err(numeric("master equation"))?;
    Ok((series, diag))
}

fn ensemble_spec(cfg: &ExperimentConfig, dt: f64, t_final: f64, sample_times: Vec<f64>) -> EnsembleSpec {
    let mut spec = EnsembleSpec::new(cfg.params, cfg.n_traj, cfg.base_seed, dt, t_final, sample_times);
    spec.initial = cfg.initial;
    spec.batches = cfg.batches;
    spec
}

fn run_qsd(spec: &EnsembleSpec, workers: Option<usize>) -> Result<EnsembleSummary, RunError> {
    Ok(run_ensemble_parallel(spec, workers).map_err(numeric("quantum state diffusion"))?.summary())
}

/// Number statistics from a QSD ensemble at the configured samples.
pub fn qsd_series(cfg: &ExperimentConfig) -> Result<(Series, EnsembleSummary), RunError> {
    qsd_series_dt(cfg, qsd_dt(cfg))
}

fn qsd_series_dt(cfg: &ExperimentConfig, dt: f64) -> Result<(Series, EnsembleSummary), RunError> {
    let spec = ensemble_spec(cfg, dt, cfg.t_final, cfg.sample_times());
    spec.validate().map_err(numeric("quantum state diffusion"))?;
    let summary = run_qsd(&spec, cfg.workers)?;
    let mut series = Series { points: Vec::new(), distributions: Vec::new() };
    for s in &summary.samples {
        let (w, flat) = shape_of(&s.p_n);
        series.points.push(SeriesPoint {
            t: s.t,
            mean_n: s.mean_n,
            var_n: s.var_n,
            fano: s.fano,
            se_mean_n: Some(s.se_mean_n),
            se_fano: Some(s.se_fano),
            support_width_95: w,
            flatness: flat,
            transient: s.t < cfg.transient,
        });
        if in_window(cfg, s.t) {
            series.distributions.push(Distribution { t: s.t, p_n: s.p_n.clone(), se_p_n: Some(s.se_p_n.clone()) });
        }
    }
    Ok((series, summary))
}

/// Density matrices handed to the Wigner evaluator, with their times.
pub fn wigner_states(cfg: &ExperimentConfig) -> Result<Vec<(f64, DensityMatrix)>, RunError> {
    match cfg.wigner_source {
        WignerSource::State => Ok(vec![(0.0, cfg.initial.density_matrix(cfg.params.dim).map_err(numeric("initial state"))?)]),
        WignerSource::Master => {
            let t_final = *cfg.wigner_times.last().expect("validated non-empty");
            let run = master_run(cfg, master_dt(cfg), t_final, cfg.wigner_times.clone())?;
            let mut out = Vec::new();
            integrate_master_with(&run, |t, rho| {
                out.push((t, rho.clone()));
                Ok(())
            })
            .map_err(numeric("master equation"))?;
            Ok(out)
        }
        WignerSource::Qsd => {
            let t_final = *cfg.wigner_times.last().expect("validated non-empty");
            let mut spec = ensemble_spec(cfg, qsd_dt(cfg), t_final, cfg.wigner_times.clone());
            spec.rho_samples = (0..cfg.wigner_times.len()).collect();
            spec.validate().map_err(numeric("quantum state diffusion"))?;
            Ok(run_qsd(&spec, cfg.workers)?.rho)
        }
    }
}

pub fn wigner_grids(cfg: &ExperimentConfig) -> Result<Vec<(f64, WignerGrid)>, RunError> {
    use rayon::prelude::*;
    let states = wigner_states(cfg)?;
    let grids: Result<Vec<_>, Error> = states.par_iter().map(|(t, rho)| wigner(rho, &cfg.grid).map(|g| (*t, g))).collect();
    grids.map_err(numeric("Wigner function"))
}

pub fn classical_path(cfg: &ExperimentConfig) -> Result<ClassicalPath, RunError> {
    let dt = cfg.dt.unwrap_or_else(|| default_classical_dt(&cfg.params));
    let stride = ((cfg.record_step / dt).round() as usize).max(1);
    integrate_classical(ClassicalState { alpha: cfg.alpha0 }, &cfg.params, cfg.t_final, dt, stride).map_err(numeric("classical integration"))
}

pub fn poincare(cfg: &ExperimentConfig) -> Result<PoincareSet, RunError> {
    let spp = cfg.steps_per_period.unwrap_or_else(|| default_steps_per_period(&cfg.params));
    poincare_section_with(&cfg.params, ClassicalState { alpha: cfg.alpha0 }, cfg.strobe_t0, cfg.n_points, spp)
        .map_err(numeric("Poincare section"))
}

pub fn lyapunov(cfg: &ExperimentConfig) -> Result<LyapunovEstimate, RunError> {
    lyapunov_max(&cfg.params, ClassicalState { alpha: cfg.alpha0 }, cfg.t_total).map_err(numeric("Lyapunov exponent"))
}

/// Files (by suffix) and diagnostics produced by one route.
struct Artifacts {
    files: Vec<(&'static str, String)>,
    diagnostics: Map<String, Value>,
}

fn compute(cfg: &ExperimentConfig) -> Result<Artifacts, RunError> {
    let mut files = Vec::new();
    let mut d = Map::new();
    match cfg.mode {
        Mode::Classical => {
            let path = classical_path(cfg)?;
            let mut c = Csv::new(&["t[1/gamma]", "x[Re alpha]", "y[Im alpha]"]);
            for (t, a) in path.times.iter().zip(&path.alphas) {
                csv_row!(c, *t, a.re, a.im);
            }
            files.push(("path.csv", c.into_string()));
            let last = path.alphas.last().copied().unwrap_or_default();
            d.insert("rows".into(), json!(path.times.len()));
            d.insert("final_alpha".into(), json!([last.re, last.im]));
        }
        Mode::Poincare => {
            let set = poincare(cfg)?;
            let mut c = Csv::new(&["n", "t[1/gamma]", "x[Re alpha]", "y[Im alpha]", "transient"]);
            for (n, ((t, (x, y)), tr)) in set.times.iter().zip(&set.points).zip(&set.transient).enumerate() {
                csv_row!(c, n, *t, *x, *y, *tr);
            }
            files.push(("poincare.csv", c.into_string()));
            d.insert("period".into(), json!(set.period));
            d.insert("n_points".into(), json!(set.points.len()));
            d.insert("occupied_cells_settled".into(), json!(occupied_cells(set.settled(), CELL_GRID)));
            d.insert("occupied_cells_all".into(), json!(occupied_cells(set.points.iter().copied(), CELL_GRID)));
            d.insert("cell_grid".into(), json!(CELL_GRID));
        }
        Mode::Lyapunov => {
            let l = lyapunov(cfg)?;
            let mut c = Csv::new(&["t_total[1/gamma]", "lambda_max[gamma]", "stderr[gamma]", "intervals"]);
            csv_row!(c, cfg.t_total, l.lambda, l.stderr, l.intervals);
            files.push(("lyapunov.csv", c.into_string()));
            d.insert("lambda_max".into(), json!(l.lambda));
            d.insert("stderr".into(), json!(l.stderr));
            d.insert("intervals".into(), json!(l.intervals));
        }
        Mode::Master => {
            let (series, diag) = master_series(cfg)?;
            files.push(("series.csv", series.series_csv(false)));
            if !series.distributions.is_empty() {
                files.push(("pn.csv", series.pn_csv(false)));
            }
            d.insert("dt".into(), json!(diag.dt));
            d.insert("steps".into(), json!(diag.steps));
            d.insert("max_trace_drift_rate".into(), json!(diag.max_trace_drift_rate));
            d.insert("max_leakage".into(), json!(diag.max_leakage));
            d.insert("min_diagonal".into(), json!(diag.min_diagonal));
            d.insert("max_hermiticity_error".into(), json!(diag.max_hermiticity_error));
            d.insert("extrema".into(), extrema_json(series.extrema()));
            if cfg.dt_study {
                let (half, _) = master_series_dt(cfg, diag.dt / 2.0)?;
                d.insert("dt_study".into(), dt_study_json(diag.dt / 2.0, &series, &half));
            }
        }
        Mode::Qsd => {
            let (series, summary) = qsd_series(cfg)?;
            files.push(("series.csv", series.series_csv(true)));
            if !series.distributions.is_empty() {
                files.push(("pn.csv", series.pn_csv(true)));
            }
            d.insert("dt".into(), json!(qsd_dt(cfg)));
            d.insert("n_traj".into(), json!(summary.n_traj));
            d.insert("mean_abs_norm_drift".into(), json!(summary.mean_abs_norm_drift));
            d.insert("max_leakage".into(), json!(summary.max_leakage));
            d.insert("extrema".into(), extrema_json(series.extrema()));
            if cfg.dt_study {
                let (half, _) = qsd_series_dt(cfg, qsd_dt(cfg) / 2.0)?;
                d.insert("dt_study".into(), dt_study_json(qsd_dt(cfg) / 2.0, &series, &half));
            }
        }
        Mode::Wigner => {
            let grids = wigner_grids(cfg)?;
            let mut c = Csv::new(&["t[1/gamma]", "x[Re alpha]", "y[Im alpha]", "w[1/area]"]);
            let mut snaps = Vec::new();
            for (t, g) in &grids {
                for (j, &y) in g.y_axis.iter().enumerate() {
                    for (i, &x) in g.x_axis.iter().enumerate() {
                        csv_row!(c, *t, x, y, g.at(i, j));
                    }
                }
                let (px, py, pw) = g.argmax();
                let max = g.max_abs();
                snaps.push(json!({
                    "t": t,
                    "riemann_sum": g.riemann_sum(),
                    "max_abs": max,
                    "boundary_ratio": if max > 0.0 { g.boundary_max() / max } else { 0.0 },
                    "covers_support": g.covers_support(),
                    "argmax": { "x": px, "y": py, "w": pw },
                }));
                if !g.covers_support() {
                    eprintln!("warning: Wigner grid does not cover the state's support at t = {t}");
                }
            }
            files.push(("wigner.csv", c.into_string()));
            d.insert("snapshots".into(), Value::Array(snaps));
        }
    }
    Ok(Artifacts { files, diagnostics: d })
}

fn dt_study_json(half_dt: f64, full: &Series, half: &Series) -> Value {
    let mut rel_n = 0.0_f64;
    let mut abs_f = 0.0_f64;
    for (a, b) in full.points.iter().zip(&half.points) {
        if a.mean_n > 0.0 {
            rel_n = rel_n.max((a.mean_n - b.mean_n).abs() / a.mean_n);
        }
        if let (Some(fa), Some(fb)) = (a.fano, b.fano) {
            abs_f = abs_f.max((fa - fb).abs());
        }
    }
    json!({ "half_dt": half_dt, "max_rel_diff_mean_n": rel_n, "max_abs_diff_fano": abs_f })
}

/// `sha256:<hex>` of the canonical JSON form of the configuration.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(&cfg.to_value()).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

/// What a completed run wrote.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub manifest: Value,
}

/// Runs the configured experiment and writes its artifacts plus a
/// `<out>.manifest.json`. On failure nothing written by this run is left
/// behind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let art = compute(cfg)?;
    let wall = start.elapsed().as_secs_f64();

    let mut set = OutputSet::new();
    let mut names = Vec::new();
    for (suffix, text) in &art.files {
        let path = artifact_path(&cfg.out, suffix);
        set.write(path.clone(), text.as_bytes()).map_err(|source| RunError::Io { path: path.clone(), source })?;
        names.push(path.to_string_lossy().into_owned());
    }
    let manifest_path = artifact_path(&cfg.out, "manifest.json");
    names.push(manifest_path.to_string_lossy().into_owned());
    let workers = match cfg.mode {
        Mode::Qsd | Mode::Wigner => cfg.workers.unwrap_or_else(rayon::current_num_threads),
        _ => 1,
    };
    let manifest = json!({
        "tool": "qdc",
        "version": env!("CARGO_PKG_VERSION"),
        "mode": cfg.mode.name(),
        "preset": cfg.preset,
        "config_hash": config_hash(cfg),
        "seed": cfg.base_seed,
        "workers": workers,
        "wall_time_s": wall,
        "outputs": names,
        "diagnostics": Value::Object(art.diagnostics),
        "config": cfg.to_value(),
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    set.write(manifest_path.clone(), text.as_bytes()).map_err(|source| RunError::Io { path: manifest_path, source })?;
    Ok(RunReport { files: set.commit(), manifest })
}
