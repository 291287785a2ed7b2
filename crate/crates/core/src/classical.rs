//! Mean-field limit of the oscillator:
//!
//! ```text
//! dα/dt = −½γα − i(Δ + χ(1 + 2|α|²))α − i(Ω₁ + Ω₂ e^{−iδt})
//! ```
//!
//! with stroboscopic (Poincaré) sampling once per modulation period and a
//! tangent-space estimate of the largest Lyapunov exponent.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // redundant only when std is linked into the build
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fock::{times_minus_i, ModelParams};

/// `|α|` beyond which a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e4;
/// Leading strobe points flagged as transient.
pub const POINCARE_TRANSIENT: usize = 100;

/// Mean-field amplitude `α = X + iY`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassicalState {
    pub alpha: Complex64,
}

impl ClassicalState {
    pub fn new(x: f64, y: f64) -> Self {
        Self { alpha: Complex64::new(x, y) }
    }
}

/// Right-hand side of the mean-field equation.
#[inline]
pub fn classical_rhs(s: ClassicalState, t: f64, p: &ModelParams) -> Complex64 {
    let a = s.alpha;
    let freq = p.delta_det + p.chi * (1.0 + 2.0 * a.norm_sqr());
    -0.5 * p.gamma * a + times_minus_i(a * freq + p.drive(t))
}

#[inline]
fn rk4(a: Complex64, t: f64, h: f64, p: &ModelParams) -> Complex64 {
    let f = |a: Complex64, t: f64| classical_rhs(ClassicalState { alpha: a }, t, p);
    let k1 = f(a, t);
    let k2 = f(a + k1 * (0.5 * h), t + 0.5 * h);
    let k3 = f(a + k2 * (0.5 * h), t + 0.5 * h);
    let k4 = f(a + k3 * h, t + h);
    a + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

fn check(a: Complex64, t: f64) -> Result<()> {
    if !(a.norm() <= DIVERGENCE_LIMIT) {
        Err(Error::Divergence { time: t })
    } else {
        Ok(())
    }
}

/// Largest step admitted by [`integrate_classical`].
pub fn max_classical_dt(p: &ModelParams) -> f64 {
    match p.modulation_period() {
        Some(period) => (1e-3 * period).min(1e-3),
        None => 1e-3,
    }
}

/// Step used when none is requested: a quarter of the admissible bound, which
/// keeps the fourth-order error of a γ⁻¹-scale run near 1e-9 relative in the
/// strongly driven regimes.
pub fn default_classical_dt(p: &ModelParams) -> f64 {
    0.25 * max_classical_dt(p)
}

/// Sampled path of the mean-field amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalPath {
    pub times: Vec<f64>,
    pub alphas: Vec<Complex64>,
}

/// Fixed-step RK4 from `t = 0` to `t_final`, keeping every `stride`-th point
/// (and always the endpoints).
pub fn integrate_classical(s0: ClassicalState, p: &ModelParams, t_final: f64, dt: f64, stride: usize) -> Result<ClassicalPath> {
    if !(dt > 0.0) || dt > max_classical_dt(p) * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument("dt outside (0, max_classical_dt]"));
    }
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidArgument("t_final must be finite and non-negative"));
    }
    let stride = stride.max(1);
    let steps = (t_final / dt - 1e-9).ceil().max(0.0) as usize;
    let mut path = ClassicalPath { times: vec![0.0], alphas: vec![s0.alpha] };
    let mut a = s0.alpha;
    check(a, 0.0)?;
    for k in 0..steps {
        let t = k as f64 * dt;
        let h = if k + 1 == steps { t_final - t } else { dt };
        a = rk4(a, t, h, p);
        check(a, t + h)?;
        if (k + 1) % stride == 0 || k + 1 == steps {
            path.times.push(t + h);
            path.alphas.push(a);
        }
    }
    Ok(path)
}

/// Advances from `t0` to `t1` in exactly `n` equal RK4 steps.
fn advance(mut a: Complex64, t0: f64, t1: f64, n: usize, p: &ModelParams) -> Result<Complex64> {
    let h = (t1 - t0) / n as f64;
    for k in 0..n {
        let t = t0 + k as f64 * h;
        a = rk4(a, t, h, p);
        check(a, t + h)?;
    }
    Ok(a)
}

/// Strobe points at `t_n = t0 + n·2π/δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincareSet {
    pub t0: f64,
    pub period: f64,
    pub times: Vec<f64>,
    pub points: Vec<(f64, f64)>,
    pub transient: Vec<bool>,
}

impl PoincareSet {
    /// Points after the transient.
    pub fn settled(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().zip(&self.transient).filter(|(_, &tr)| !tr).map(|(p, _)| *p)
    }
}

/// Records `n_points` strobe samples starting at `t0`. The period is divided
/// into `steps_per_period` equal steps, so strobe times are hit exactly.
pub fn poincare_section_with(p: &ModelParams, s0: ClassicalState, t0: f64, n_points: usize, steps_per_period: usize) -> Result<PoincareSet> {
    let period = p.modulation_period().ok_or(Error::InvalidArgument("modulation frequency must be non-zero"))?;
    if !(t0 >= 0.0) {
        return Err(Error::InvalidArgument("t0 must be non-negative"));
    }
    let h = period / steps_per_period.max(1) as f64;
    if h > max_classical_dt(p) * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument("steps_per_period too small"));
    }
    let lead = ((t0 / h).ceil() as usize).max(1);
    let mut a = advance(s0.alpha, 0.0, t0, lead, p)?;
    let mut set = PoincareSet {
        t0,
        period,
        times: Vec::with_capacity(n_points),
        points: Vec::with_capacity(n_points),
        transient: Vec::with_capacity(n_points),
    };
    for n in 0..n_points {
        let t = t0 + n as f64 * period;
        if n > 0 {
            a = advance(a, t - period, t, steps_per_period, p)?;
        }
        set.times.push(t);
        set.points.push((a.re, a.im));
        set.transient.push(n < POINCARE_TRANSIENT);
    }
    Ok(set)
}

/// Default resolution: the period split into steps no longer than
/// [`default_classical_dt`].
pub fn default_steps_per_period(p: &ModelParams) -> usize {
    match p.modulation_period() {
        Some(period) => (period / default_classical_dt(p)).ceil() as usize,
        None => 4000,
    }
}

pub fn poincare_section(p: &ModelParams, s0: ClassicalState, t0: f64, n_points: usize) -> Result<PoincareSet> {
    poincare_section_with(p, s0, t0, n_points, default_steps_per_period(p))
}

/// Number of occupied cells of a `grid × grid` partition of the bounding box
/// of `points`, padded by 5% of its width on each side. Boxes narrower than
/// `1e-6·(1 + max|coordinate|)` are widened to that size so that a fixed
/// point counts as a single cell instead of resolving round-off.
pub fn occupied_cells<I>(points: I, grid: usize) -> usize
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let pts: Vec<(f64, f64)> = points.into_iter().collect();
    if pts.is_empty() || grid == 0 {
        return 0;
    }
    let span = |get: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(get).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(get).fold(f64::NEG_INFINITY, f64::max);
        let floor = 1e-6 * (1.0 + lo.abs().max(hi.abs()));
        let mid = 0.5 * (lo + hi);
        let half = (0.5 * (hi - lo)).max(0.5 * floor) * 1.1;
        (mid - half, 2.0 * half)
    };
    let (x0, wx) = span(|p| p.0);
    let (y0, wy) = span(|p| p.1);
    let mut seen = vec![false; grid * grid];
    let cell = |v: f64, lo: f64, w: f64| (((v - lo) / w * grid as f64) as usize).min(grid - 1);
    for (x, y) in pts {
        seen[cell(y, y0, wy) * grid + cell(x, x0, wx)] = true;
    }
    seen.iter().filter(|&&b| b).count()
}

/// Largest Lyapunov exponent with its error bar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovEstimate {
    /// In units of γ.
    pub lambda: f64,
    /// Bootstrap standard error over blocks of renormalization intervals.
    pub stderr: f64,
    pub intervals: usize,
}

/// Linearization of the mean-field flow: `dv/dt = A v + B v*`.
#[inline]
fn tangent_rhs(a: Complex64, v: Complex64, p: &ModelParams) -> Complex64 {
    let lin = Complex64::new(-0.5 * p.gamma, -(p.delta_det + p.chi + 4.0 * p.chi * a.norm_sqr()));
    let cross = times_minus_i(a * a * (2.0 * p.chi));
    lin * v + cross * v.conj()
}

#[inline]
fn rk4_tangent(a: Complex64, v: Complex64, t: f64, h: f64, p: &ModelParams) -> (Complex64, Complex64) {
    let f = |a: Complex64, t: f64| classical_rhs(ClassicalState { alpha: a }, t, p);
    let k1 = f(a, t);
    let l1 = tangent_rhs(a, v, p);
    let a2 = a + k1 * (0.5 * h);
    let v2 = v + l1 * (0.5 * h);
    let k2 = f(a2, t + 0.5 * h);
    let l2 = tangent_rhs(a2, v2, p);
    let a3 = a + k2 * (0.5 * h);
    let v3 = v + l2 * (0.5 * h);
    let k3 = f(a3, t + 0.5 * h);
    let l3 = tangent_rhs(a3, v3, p);
    let a4 = a + k3 * h;
    let v4 = v + l3 * h;
    let k4 = f(a4, t + h);
    let l4 = tangent_rhs(a4, v4, p);
    (
        a + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0),
        v + (l1 + (l2 + l3) * 2.0 + l4) * (h / 6.0),
    )
}

/// Benettin estimate: the tangent vector is co-integrated with the flow,
/// renormalized every unit of time, and its log-growth averaged. The first
/// `min(100, t_total/5)` time units are discarded as transient.
pub fn lyapunov_max(p: &ModelParams, s0: ClassicalState, t_total: f64) -> Result<LyapunovEstimate> {
    if !(t_total >= 500.0) || !t_total.is_finite() {
        return Err(Error::InvalidArgument("t_total must be at least 500"));
    }
    let steps_per_unit = (1.0 / default_classical_dt(p)).ceil() as usize;
    let h = 1.0 / steps_per_unit as f64;
    let transient = (t_total / 5.0).min(100.0).floor() as usize;
    let intervals = t_total.floor() as usize - transient;

    let mut a = s0.alpha;
    let mut t = 0.0;
    for _ in 0..transient {
        a = advance(a, t, t + 1.0, steps_per_unit, p)?;
        t += 1.0;
    }
    let mut v = Complex64::new(1.0, 0.0);
    let mut logs = Vec::with_capacity(intervals);
    for _ in 0..intervals {
        for k in 0..steps_per_unit {
            let (na, nv) = rk4_tangent(a, v, t + k as f64 * h, h, p);
            a = na;
            v = nv;
        }
        t += 1.0;
        check(a, t)?;
        let g = v.norm();
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::NumericOverflow { time: t });
        }
        logs.push(g.ln());
        v /= g;
    }
    let lambda = logs.iter().sum::<f64>() / intervals as f64;
    Ok(LyapunovEstimate { lambda, stderr: block_bootstrap_stderr(&logs, 10, 1000), intervals })
}

/// Standard error of the mean of `xs` from a bootstrap over block means.
fn block_bootstrap_stderr(xs: &[f64], block: usize, resamples: usize) -> f64 {
    let means: Vec<f64> = xs.chunks_exact(block).map(|c| c.iter().sum::<f64>() / block as f64).collect();
    let nb = means.len();
    if nb < 2 {
        return f64::NAN;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6c79_6170);
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let s: f64 = (0..nb).map(|_| means[rng.random_range(0..nb)]).sum();
        stats.push(s / nb as f64);
    }
    let mu = stats.iter().sum::<f64>() / resamples as f64;
    (stats.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (resamples - 1) as f64).sqrt()
}
