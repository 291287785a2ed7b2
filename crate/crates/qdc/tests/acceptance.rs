//! End-to-end acceptance run against the published regimes.
//!
//! Prints one `PASS`/`FAIL` line per criterion and exits non-zero when any
//! criterion fails. The heavy runs (three D = 300 master integrations, a
//! Wigner snapshot run and a 3000-trajectory D = 300 ensemble) take about an
//! hour on one core, so the target is excluded from the default test run:
//!
//! ```text
//! cargo test -p qdc --test acceptance            # every criterion
//! cargo test -p qdc --test acceptance -- 1 2 9   # a subset
//! ```

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use qdc::config::{resolve, ExperimentConfig, Mode};
use qdc::ensemble::run_ensemble_parallel;
use qdc::run::{lyapunov, master_series, poincare, qsd_series, wigner_grids, Series};
use qdc_core::classical::occupied_cells;
use qdc_core::master::{integrate_master, MasterRun};
use qdc_core::observables::{number_stats, shape_metrics, wigner, GridSpec};
use qdc_core::qsd::{draw_noise, run_trajectory, trajectory_rng, EnsembleSpec};
use qdc_core::{Complex64, DensityMatrix, ModelParams};
use rayon::prelude::*;
use serde_json::{json, Value};

const PERIOD: f64 = 2.0 * PI / 5.0;

fn config(mode: Mode, preset: &str, overrides: Value) -> ExperimentConfig {
    resolve(Some(mode), Some(preset), &overrides).unwrap_or_else(|e| panic!("{preset}: {e}"))
}

fn fano_of(series: &Series) -> Vec<(f64, f64)> {
    series.settled().filter_map(|p| p.fano.map(|f| (p.t, f))).collect()
}

fn interpolate(samples: &[(f64, f64)], t: f64) -> Option<f64> {
    let k = samples.partition_point(|s| s.0 < t);
    if k == 0 || k >= samples.len() {
        return samples.get(k).filter(|s| (s.0 - t).abs() < 1e-9).map(|s| s.1);
    }
    let ((t0, f0), (t1, f1)) = (samples[k - 1], samples[k]);
    Some(f0 + (f1 - f0) * (t - t0) / (t1 - t0))
}

/// Largest `|F(t + T) − F(t)|` over the second-to-last modulation period,
/// relative to the post-transient range of `F`.
fn periodicity_defect(fano: &[(f64, f64)]) -> f64 {
    let t_end = fano.last().map_or(0.0, |s| s.0);
    let (lo, hi) = fano.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.1), b.max(s.1)));
    let mut worst = 0.0_f64;
    for &(t, f) in fano.iter().filter(|s| s.0 >= t_end - 2.0 * PERIOD && s.0 <= t_end - PERIOD) {
        if let Some(g) = interpolate(fano, t + PERIOD) {
            worst = worst.max((g - f).abs());
        }
    }
    worst / (hi - lo)
}

fn fano_range(fano: &[(f64, f64)]) -> (f64, f64) {
    fano.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.1), b.max(s.1)))
}

/// Master-equation series of a figure preset with `P_n` kept for every
/// post-transient sample.
fn master_figure(preset: &str, extra: Value) -> Series {
    let mut doc = json!({ "pn_window": [20.0, 40.0] });
    qdc::config::merge(&mut doc, &extra);
    let cfg = config(Mode::Master, preset, doc);
    let start = Instant::now();
    let (series, diag) = master_series(&cfg).expect("master run");
    eprintln!(
        "  [{preset} {extra}] master D={} dt={:.3e}: {:.0} s, max leakage {:.1e}, trace drift rate {:.1e}",
        cfg.params.dim,
        diag.dt,
        start.elapsed().as_secs_f64(),
        diag.max_leakage,
        diag.max_trace_drift_rate
    );
    series
}

#[derive(Default)]
struct Runs {
    regular: Option<Series>,
    chaotic: Option<Series>,
}

impl Runs {
    fn regular(&mut self) -> &Series {
        self.regular.get_or_insert_with(|| master_figure("fig3-regular", json!({})))
    }

    fn chaotic(&mut self) -> &Series {
        self.chaotic.get_or_insert_with(|| master_figure("fig3-chaotic", json!({})))
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn small_params() -> ModelParams {
    ModelParams {
        chi: 0.1,
        delta_det: 0.0,
        omega1: Complex64::new(0.5, 0.0),
        omega2: Complex64::new(0.5, 0.0),
        delta_mod: 5.0,
        n_bath: 0.0,
        gamma: 1.0,
        dim: 20,
    }
}

fn criterion_1() -> Verdict {
    const M: u64 = 2000;
    let p = small_params();
    let times: Vec<f64> = (1..=10).map(f64::from).collect();
    let master = integrate_master(&MasterRun::new(p, 10.0, times.clone()).unwrap()).unwrap();
    let spec = EnsembleSpec::new(p, M, 1, 1e-3, 10.0, times.clone());
    let records: Vec<_> = (0..M).into_par_iter().map(|i| run_trajectory(&spec, i).expect("trajectory")).collect();
    let m = M as f64;
    let mut worst_n = 0.0_f64;
    let mut worst_p = 0.0_f64;
    let mut misses = 0;
    for (k, (t, rho)) in master.samples.iter().enumerate() {
        let exact = number_stats(rho).unwrap();
        let mean = records.iter().map(|r| r.mean_n[k]).sum::<f64>() / m;
        let var = records.iter().map(|r| (r.mean_n[k] - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let z = (mean - exact.mean_n).abs() / (var / m).sqrt();
        worst_n = worst_n.max(z);
        if z > 3.0 {
            misses += 1;
            eprintln!("  t = {t}: <n> {mean} vs {} ({z:.2} SE)", exact.mean_n);
        }
        for n in 0..p.dim {
            let pm = records.iter().map(|r| r.p_n[k][n]).sum::<f64>() / m;
            let pv = records.iter().map(|r| (r.p_n[k][n] - pm).powi(2)).sum::<f64>() / (m - 1.0);
            let se = (pv / m).sqrt();
            let diff = (pm - exact.p_n[n]).abs();
            // Below 1e-12 both numbers are round-off.
            if diff > 3.0 * se + 1e-12 {
                misses += 1;
                eprintln!("  t = {t}, n = {n}: P_n {pm:e} vs {:e} ({:.2} SE)", exact.p_n[n], diff / se);
            }
            if diff > 1e-12 {
                worst_p = worst_p.max(diff / se);
            }
        }
    }
    verdict(
        misses == 0,
        format!("QSD (M={M}) vs master at 10 times: max |d<n>| = {worst_n:.2} SE, max |dP_n| = {worst_p:.2} SE (bins above round-off), {misses} comparisons beyond 3 SE"),
    )
}

fn criterion_2() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (preset, chaotic) in [("fig1", true), ("fig3-regular", false)] {
        let cfg = config(Mode::Poincare, preset, json!({ "strobe_t0": 6.96 }));
        let set = poincare(&cfg).expect("section");
        let cells = occupied_cells(set.settled(), 100);
        let l = lyapunov(&cfg).expect("lyapunov");
        let ok = if chaotic { l.lambda > 3.0 * l.stderr && cells > 1000 } else { l.lambda <= l.stderr && cells < 50 };
        pass &= ok;
        parts.push(format!(
            "{} lambda = {:.4} +- {:.4} over {} gamma^-1, {cells} cells ({})",
            if chaotic { "chaotic" } else { "regular" },
            l.lambda,
            l.stderr,
            cfg.t_total,
            if ok { "ok" } else { "miss" }
        ));
    }
    verdict(pass, parts.join("; "))
}

fn criterion_3(runs: &mut Runs) -> Verdict {
    let master = runs.regular().clone();
    let fano = fano_of(&master);
    let (lo, hi) = fano_range(&fano);
    let defect = periodicity_defect(&fano);
    let periodic = defect <= 0.1;
    let in_range = (0.07..=0.20).contains(&lo) && (0.5..=0.8).contains(&hi);

    let cfg = config(Mode::Qsd, "fig3-regular", json!({}));
    let start = Instant::now();
    let (qsd, summary) = qsd_series(&cfg).expect("QSD ensemble");
    eprintln!("  [fig3-regular] QSD M={}: {:.0} s, mean |norm drift| {:.1e}", summary.n_traj, start.elapsed().as_secs_f64(), summary.mean_abs_norm_drift);
    let mut zs = Vec::new();
    for q in qsd.settled() {
        let Some(m) = master.points.iter().find(|m| (m.t - q.t).abs() < 1e-9) else { continue };
        if let (Some(fq), Some(fm), Some(se)) = (q.fano, m.fano, q.se_fano) {
            zs.push((fq - fm).abs() / se);
        }
    }
    let within2 = zs.iter().filter(|&&z| z <= 2.0).count() as f64 / zs.len().max(1) as f64;
    let zmax = zs.iter().copied().fold(0.0, f64::max);
    let agree = !zs.is_empty() && zmax <= 4.0 && within2 >= 0.9;
    verdict(
        periodic && in_range && agree,
        format!(
            "master F in [{lo:.4}, {hi:.4}] (need min in [0.07,0.20], max in [0.5,0.8]); periodicity defect {:.1}% of range (need <= 10%); QSD vs master: {:.0}% of samples within 2 SE, max {zmax:.2} SE (need >= 90%, <= 4)",
            100.0 * defect,
            100.0 * within2
        ),
    )
}

fn criterion_4(runs: &mut Runs) -> Verdict {
    let s = runs.chaotic();
    let fano = fano_of(s);
    let (lo, hi) = fano_range(&fano);
    let t_end = fano.last().map_or(0.0, |x| x.0);
    let (plo, phi) = fano_range(&fano.iter().copied().filter(|x| x.0 >= t_end - PERIOD).collect::<Vec<_>>());
    let alternates = plo < 1.0 && phi > 1.0;
    let (nlo, nhi) = s.settled().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.mean_n), b.max(p.mean_n)));
    let pass = alternates && (0.24..=0.40).contains(&lo) && (1.6..=2.4).contains(&hi) && nlo >= 55.0 && nhi <= 150.0;
    verdict(
        pass,
        format!("F in [{lo:.4}, {hi:.4}] (need [0.24,0.40] / [1.6,2.4]); last period F in [{plo:.3}, {phi:.3}] (must straddle 1); <n> in [{nlo:.2}, {nhi:.2}] (need within [55,150])"),
    )
}

fn shape_at(series: &Series, t: f64) -> (usize, usize, f64) {
    let d = series.distributions.iter().find(|d| (d.t - t).abs() < 1e-9).expect("distribution kept");
    let s = shape_metrics(&d.p_n).unwrap();
    (s.support_width_95, s.window_end(), s.flatness)
}

fn criterion_5(runs: &mut Runs) -> Verdict {
    let reg = runs.regular().clone();
    let e = reg.extrema().expect("regular extrema");
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, t) in [("F_min", e.t_fano_min), ("F_max", e.t_fano_max)] {
        let (w, _, flat) = shape_at(&reg, t);
        let ok = flat > 2.0 && w < 80;
        pass &= ok;
        parts.push(format!("regular {label} at t={t:.2}: flatness {flat:.3}, width95 {w}"));
    }
    let cha = runs.chaotic();
    let e = cha.extrema().expect("chaotic extrema");
    let (w, end, flat) = shape_at(cha, e.t_fano_max);
    pass &= flat < 1.5 && end > 150;
    parts.push(format!("chaotic F_max at t={:.2}: flatness {flat:.3}, width95 {w}, window ends at n={end}", e.t_fano_max));
    verdict(pass, format!("{} (need regular flatness > 2 and width < 80; chaotic flatness < 1.5 reaching past n=150)", parts.join("; ")))
}

fn criterion_6() -> Verdict {
    let cfg = config(Mode::Master, "fig3-regular", json!({ "params": { "omega2": 0.0 }, "t_final": 30.0, "sample_times": [25.0, 30.0] }));
    let start = Instant::now();
    let (series, diag) = master_series(&cfg).expect("single-drive run");
    eprintln!("  [single drive] master: {:.0} s, max leakage {:.1e}", start.elapsed().as_secs_f64(), diag.max_leakage);
    let (a, b) = (&series.points[0], &series.points[1]);
    let f = b.fano.unwrap_or(f64::NAN);
    let drift = (f - a.fano.unwrap_or(f64::NAN)).abs();
    verdict((0.25..=0.45).contains(&f) && drift < 1e-3, format!("steady F = {f:.4} at <n> = {:.3} (need [0.25,0.45]); |F(30) - F(25)| = {drift:.1e}", b.mean_n))
}

fn criterion_7() -> Verdict {
    let cfg = config(Mode::Wigner, "fig2", json!({}));
    let grids = wigner_grids(&cfg).expect("Wigner snapshots");
    let mut pass = true;
    let mut parts = Vec::new();
    for (t, g) in &grids {
        let (x, y, _) = g.argmax();
        let r = ((x - 0.0).powi(2) + (y + 10.0).powi(2)).sqrt();
        let sum = g.riemann_sum();
        pass &= r <= 2.0 && (sum - 1.0).abs() <= 1e-3;
        parts.push(format!("t={t:.3}: peak ({x:.2}, {y:.2}) at distance {r:.2}, sum {sum:.6}"));
    }
    verdict(pass, format!("{} (need distance <= 2 from (0,-10), |sum - 1| <= 1e-3)", parts.join("; ")))
}

fn criterion_8(runs: &mut Runs) -> Verdict {
    let (lo, hi) = fano_range(&fano_of(runs.chaotic()));
    let noisy = master_figure("fig3-chaotic", json!({ "params": { "n_bath": 0.05 } }));
    let (nlo, nhi) = fano_range(&fano_of(&noisy));
    let (dlo, dhi) = ((nlo - lo).abs(), (nhi - hi).abs());
    verdict(dlo <= 0.15 && dhi <= 0.15, format!("N=0.002: F in [{lo:.4}, {hi:.4}]; N=0.05: F in [{nlo:.4}, {nhi:.4}]; shifts {dlo:.4} / {dhi:.4} (need <= 0.15)"))
}

fn criterion_9() -> Verdict {
    let mut checks: Vec<(&str, bool, String)> = Vec::new();

    let mut run = MasterRun::new(ModelParams { n_bath: 0.1, dim: 24, ..small_params() }, 4.0, (0..=8).map(|k| 0.5 * k as f64).collect()).unwrap();
    run.rho0 = DensityMatrix::coherent(24, Complex64::new(0.4, -0.2)).unwrap();
    let out = integrate_master(&run).unwrap();
    let d = out.diagnostics;
    checks.push((
        "trace/Hermiticity/positivity",
        d.max_trace_drift_rate < 1e-8 && d.max_hermiticity_error < 1e-10 && d.min_diagonal >= -1e-8,
        format!("trace drift {:.1e}/t, Hermiticity {:.1e}, min diagonal {:.1e}", d.max_trace_drift_rate, d.max_hermiticity_error, d.min_diagonal),
    ));

    let p = ModelParams { n_bath: 0.05, dim: 24, ..small_params() };
    let drift = |dt: f64| {
        let spec = EnsembleSpec::new(p, 4, 3, dt, 2.0, vec![2.0]);
        (0..4).map(|i| run_trajectory(&spec, i).unwrap().diagnostics.mean_abs_norm_drift).sum::<f64>() / 4.0
    };
    let ratio = drift(2e-3) / drift(1e-3);
    checks.push(("QSD norm drift order", (1.7..2.3).contains(&ratio), format!("drift ratio under dt halving {ratio:.3}")));

    let dt = 1e-3;
    let n = 1_000_000;
    let mut rng = trajectory_rng(5, 0);
    let (mut m1, mut m2, mut a2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), 0.0);
    for _ in 0..n {
        let w = draw_noise(&mut rng, dt).dxi1;
        m1 += w;
        m2 += w * w;
        a2 += w.norm_sqr();
    }
    let nf = n as f64;
    let (m1, m2, a2) = ((m1 / nf).norm(), (m2 / nf).norm(), a2 / nf);
    checks.push((
        "Wiener moments",
        m1 < 5.0 * (dt / nf).sqrt() && m2 < 5.0 * dt / nf.sqrt() && (a2 - dt).abs() < 5.0 * dt / nf.sqrt(),
        format!("|<dxi>| {m1:.1e}, |<dxi^2>| {m2:.1e}, <|dxi|^2>/dt {:.5}", a2 / dt),
    ));

    let rho = &integrate_master(&MasterRun::new(ModelParams { dim: 16, ..small_params() }, 3.0, vec![3.0]).unwrap()).unwrap().samples[0].1;
    let grid = GridSpec { x_min: -7.0, x_max: 7.0, nx: 141, y_min: -7.0, y_max: 7.0, ny: 141 };
    let w = wigner(rho, &grid).unwrap();
    let pn = number_stats(rho).unwrap().p_n;
    let worst = (0..8)
        .map(|k| {
            let wk = wigner(&DensityMatrix::fock(16, k).unwrap(), &grid).unwrap();
            let overlap = PI * grid.dx() * grid.dy() * w.values.iter().zip(&wk.values).map(|(a, b)| a * b).sum::<f64>();
            (overlap - pn[k]).abs()
        })
        .fold(0.0, f64::max);
    checks.push(("Wigner-P_n overlap", worst < 2e-3, format!("max |overlap - P_n| {worst:.1e}")));

    let p = ModelParams { chi: 0.1, delta_det: -1.0, omega1: Complex64::new(1.5, 0.0), omega2: Complex64::new(1.0, 0.0), delta_mod: 2.0, n_bath: 0.01, gamma: 1.0, dim: 40 };
    let mut coarse = MasterRun::new(p, 6.0, (1..=10).map(|k| 0.6 * k as f64).collect()).unwrap();
    coarse.dt = 4e-3;
    let fine = MasterRun { dt: 2e-3, ..coarse.clone() };
    let (a, b) = (integrate_master(&coarse).unwrap(), integrate_master(&fine).unwrap());
    let rel = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|((_, x), (_, y))| {
            let (nx, ny) = (number_stats(x).unwrap().mean_n, number_stats(y).unwrap().mean_n);
            (nx - ny).abs() / ny
        })
        .fold(0.0, f64::max);
    checks.push(("master dt halving", rel < 1e-4, format!("max relative change of <n> {rel:.1e}")));

    let mut spec = EnsembleSpec::new(small_params(), 53, 21, 1e-3, 0.5, vec![0.25, 0.5]);
    spec.rho_samples = vec![1];
    let reference = run_ensemble_parallel(&spec, Some(1)).unwrap();
    let same = [4, 8].iter().all(|&w| run_ensemble_parallel(&spec, Some(w)).unwrap() == reference);
    checks.push(("bitwise determinism", same, "1, 4 and 8 workers".into()));

    let pass = checks.iter().all(|c| c.1);
    let detail = checks.iter().map(|(name, ok, d)| format!("{name}: {} ({d})", if *ok { "ok" } else { "miss" })).collect::<Vec<_>>().join("; ");
    verdict(pass, detail)
}

const TITLES: [&str; 9] = [
    "oracle equivalence, small instance",
    "classical regime classification",
    "regular-regime Fano factor",
    "chaotic-regime Fano factor",
    "distribution shape transition",
    "single-drive benchmark",
    "regular-regime Wigner peak",
    "noise robustness",
    "property suite",
];

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).filter(|k| (1..=9).contains(k)).collect();
    let wanted = |k: usize| selected.is_empty() || selected.contains(&k);
    let mut runs = Runs::default();
    let mut failed = 0;
    for k in (1..=9).filter(|&k| wanted(k)) {
        let start = Instant::now();
        let v = match k {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(&mut runs),
            4 => criterion_4(&mut runs),
            5 => criterion_5(&mut runs),
            6 => criterion_6(),
            7 => criterion_7(),
            8 => criterion_8(&mut runs),
            _ => criterion_9(),
        };
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {k} {}: {} | {} [{:.0} s]",
            if v.pass { "PASS" } else { "FAIL" },
            TITLES[k - 1],
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
