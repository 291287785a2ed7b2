//! Quantum-state-diffusion trajectories and their ensemble reduction.
//!
//! A trajectory obeys the Itô equation
//!
//! ```text
//! |dΨ⟩ = −iH|Ψ⟩dt − ½ Σᵢ (Lᵢ†Lᵢ − 2⟨Lᵢ†⟩Lᵢ + ⟨Lᵢ⟩⟨Lᵢ†⟩)|Ψ⟩dt + Σᵢ (Lᵢ − ⟨Lᵢ⟩)|Ψ⟩dξᵢ
//! ```
//!
//! with independent complex Wiener increments. Each step adds the noise
//! increment by Euler–Maruyama and then integrates the drift with the
//! expectation values frozen: the stiff diagonal part `Δn + χn²` (and the
//! diagonal damping) exactly, the banded drive and feedback couplings with an
//! integrating-factor Runge–Kutta scheme. The state is renormalized after
//! every step.
//!
//! Trajectory `i` draws its noise from a ChaCha stream selected by
//! `(base_seed, i)`, so any trajectory can be re-run on its own. Ensembles are
//! reduced in blocks of [`BLOCK_SIZE`] consecutive trajectories; blocks are
//! merged strictly in index order, which keeps the output bit-identical no
//! matter how the blocks are scheduled.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // redundant only when std is linked into the build
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fock::{leakage_start, raised_number, sqrt_table, times_minus_i, DensityMatrix, InitialState, ModelParams, StateVector, LEAKAGE_LIMIT};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Trajectories per reduction block.
pub const BLOCK_SIZE: u64 = 8;

/// Amplitudes with `|c|²` below this at the edge of the occupied window are
/// dropped.
const TRIM: f64 = 1e-32;

/// Default QSD step for the published regimes.
pub const DEFAULT_QSD_DT: f64 = 5e-4;

/// Complex Wiener increments of the two dissipation channels over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseIncrement {
    pub dxi1: Complex64,
    pub dxi2: Complex64,
}

impl NoiseIncrement {
    pub const ZERO: Self = Self { dxi1: ZERO, dxi2: ZERO };
}

/// The RNG stream of trajectory `index`.
pub fn trajectory_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

fn complex_wiener<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

/// Draws `dξ = (g₁ + i g₂)·√(dt/2)` for both channels.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, dt: f64) -> NoiseIncrement {
    let scale = (0.5 * dt).sqrt();
    let dxi1 = complex_wiener(rng, scale);
    let dxi2 = complex_wiener(rng, scale);
    NoiseIncrement { dxi1, dxi2 }
}

/// Reusable single-trajectory integrator.
#[derive(Debug, Clone)]
pub struct QsdStepper {
    params: ModelParams,
    dt: f64,
    sqrt: Vec<f64>,
    /// `exp[(−iE_n − ½Γ_n)·dt/2]`, the exact diagonal propagator over half a step.
    half_prop: Vec<Complex64>,
    s1: f64,
    s2: f64,
    y: Vec<Complex64>,
    acc: Vec<Complex64>,
    stage: Vec<Complex64>,
    k: Vec<Complex64>,
    lo: usize,
    hi: usize,
}

/// Per-step report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// `‖ψ‖² − 1` before renormalization.
    pub norm_drift: f64,
}

/// Levels by which the occupied window can grow during one step: one for the
/// noise kick and one per drift stage, plus a guard level.
const GROWTH: usize = 6;

impl QsdStepper {
    pub fn new(params: ModelParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument("dt must be positive"));
        }
        let d = params.dim;
        let g1 = params.emission_rate();
        let g2 = params.absorption_rate();
        let loss: Vec<f64> = (0..d).map(|n| g1 * n as f64 + g2 * raised_number(n, d)).collect();
        let half_prop = (0..d)
            .map(|n| {
                let (s, c) = (0.5 * dt * params.level_energy(n)).sin_cos();
                Complex64::new(c, -s) * (-0.25 * dt * loss[n]).exp()
            })
            .collect();
        Ok(Self {
            sqrt: sqrt_table(d),
            half_prop,
            s1: g1.sqrt(),
            s2: g2.sqrt(),
            y: vec![ZERO; d],
            acc: vec![ZERO; d],
            stage: vec![ZERO; d],
            k: vec![ZERO; d],
            lo: 0,
            hi: d,
            params,
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Recomputes the occupied window from the amplitudes of `state`.
    pub fn attach(&mut self, state: &StateVector) -> Result<()> {
        let d = self.params.dim;
        if state.dim() != d {
            return Err(Error::Shape { expected: d, found: state.dim() });
        }
        let nz = |c: &Complex64| c.norm_sqr() > 0.0;
        self.lo = state.amps.iter().position(nz).unwrap_or(0);
        self.hi = state.amps.iter().rposition(nz).map_or(1, |k| k + 1);
        Ok(())
    }

    /// Advances a normalized `state` from `t` to `t + dt`. The occupied window
    /// must have been set by [`attach`](Self::attach) or a previous step.
    ///
    /// The Itô noise increment `Σᵢ (Lᵢ − ⟨Lᵢ⟩)ψ dξᵢ` is added first
    /// (Euler–Maruyama). The drift, linear in ψ once `⟨Lᵢ⟩` are frozen at the
    /// start of the step, is then integrated with an integrating-factor RK4:
    /// the diagonal `−iE_n − ½Γ_n` exactly, the banded drive and
    /// `⟨Lᵢ†⟩Lᵢ` couplings by the four stages.
    pub fn step(&mut self, state: &mut StateVector, t: f64, noise: &NoiseIncrement) -> Result<StepReport> {
        let d = self.params.dim;
        let h = self.dt;
        let c = &mut state.amps;
        let s = &self.sqrt;
        let (lo, hi) = (self.lo.saturating_sub(GROWTH), (self.hi + GROWTH).min(d));

        let mut mean_a = ZERO;
        for n in self.lo..self.hi.min(d - 1) {
            mean_a += c[n].conj() * c[n + 1] * s[n + 1];
        }
        let l1 = mean_a * self.s1;
        let l2 = mean_a.conj() * self.s2;
        let shift = 0.5 * (l1.norm_sqr() + l2.norm_sqr());

        // Noise kick: y = ψ + dξ₁(√γ₁ a − ⟨L₁⟩)ψ + dξ₂(√γ₂ a† − ⟨L₂⟩)ψ.
        let kick_diag = -(noise.dxi1 * l1) - noise.dxi2 * l2 + 1.0;
        let kick_down = noise.dxi1 * self.s1;
        let kick_up = noise.dxi2 * self.s2;
        let y = &mut self.y;
        for n in lo..hi {
            let mut v = c[n] * kick_diag;
            if n + 1 < hi {
                v += kick_down * (s[n + 1] * c[n + 1]);
            }
            if n > lo {
                v += kick_up * (s[n] * c[n - 1]);
            }
            y[n] = v;
        }

        // Banded drift N(t)ψ = B(t) a ψ + C(t) a† ψ on [lo, hi).
        let down = |t: f64| times_minus_i(self.params.drive(t).conj()) + l1.conj() * self.s1;
        let up = |t: f64| times_minus_i(self.params.drive(t)) + l2.conj() * self.s2;
        let apply = |b: Complex64, cu: Complex64, x: &[Complex64], out: &mut [Complex64]| {
            for n in lo..hi {
                let mut v = ZERO;
                if n + 1 < hi {
                    v += b * (s[n + 1] * x[n + 1]);
                }
                if n > lo {
                    v += cu * (s[n] * x[n - 1]);
                }
                out[n] = v;
            }
        };
        let e = &self.half_prop;
        let (acc, stage, k) = (&mut self.acc, &mut self.stage, &mut self.k);
        let (th, t1) = (t + 0.5 * h, t + h);

        apply(down(t), up(t), y, k);
        for n in lo..hi {
            let e2 = e[n] * e[n];
            acc[n] = e2 * (y[n] + k[n] * (h / 6.0));
            stage[n] = e[n] * (y[n] + k[n] * (0.5 * h));
        }
        let (bh, ch) = (down(th), up(th));
        apply(bh, ch, stage, k);
        for n in lo..hi {
            acc[n] += e[n] * k[n] * (h / 3.0);
            stage[n] = e[n] * y[n] + k[n] * (0.5 * h);
        }
        apply(bh, ch, stage, k);
        for n in lo..hi {
            acc[n] += e[n] * k[n] * (h / 3.0);
            stage[n] = e[n] * (e[n] * y[n] + k[n] * h);
        }
        apply(down(t1), up(t1), stage, k);
        let damp = (-shift * h).exp();
        let mut norm = 0.0;
        for n in lo..hi {
            let v = (acc[n] + k[n] * (h / 6.0)) * damp;
            norm += v.norm_sqr();
            acc[n] = v;
        }
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::NumericOverflow { time: t1 });
        }
        let scale = 1.0 / norm.sqrt();
        for n in lo..hi {
            c[n] = acc[n] * scale;
        }

        let (mut lo, mut hi) = (lo, hi);
        while hi > lo + 1 && c[hi - 1].norm_sqr() < TRIM {
            c[hi - 1] = ZERO;
            hi -= 1;
        }
        while lo + 1 < hi && c[lo].norm_sqr() < TRIM {
            c[lo] = ZERO;
            lo += 1;
        }
        self.lo = lo;
        self.hi = hi;

        let watch = leakage_start(d);
        if hi > watch {
            let leak: f64 = c[watch..].iter().map(|z| z.norm_sqr()).sum();
            if leak >= LEAKAGE_LIMIT {
                return Err(Error::TruncationOverflow { time: t1, leakage: leak });
            }
        }
        Ok(StepReport { norm_drift: norm - 1.0 })
    }
}

/// One QSD step of a normalized state.
pub fn qsd_step(s: &StateVector, t: f64, dt: f64, noise: &NoiseIncrement, p: &ModelParams) -> Result<(StateVector, StepReport)> {
    let mut stepper = QsdStepper::new(*p, dt)?;
    let mut out = s.clone();
    stepper.attach(&out)?;
    let report = stepper.step(&mut out, t, noise)?;
    Ok((out, report))
}

/// Everything needed to run an ensemble reproducibly.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub params: ModelParams,
    pub n_traj: u64,
    pub base_seed: u64,
    pub dt: f64,
    pub t_final: f64,
    pub sample_times: Vec<f64>,
    pub initial: InitialState,
    /// Indices into `sample_times` at which the full ensemble density matrix
    /// is accumulated.
    pub rho_samples: Vec<usize>,
    /// Number of contiguous trajectory batches used for error estimates.
    pub batches: usize,
}

impl EnsembleSpec {
    pub fn new(params: ModelParams, n_traj: u64, base_seed: u64, dt: f64, t_final: f64, sample_times: Vec<f64>) -> Self {
        Self {
            params,
            n_traj,
            base_seed,
            dt,
            t_final,
            sample_times,
            initial: InitialState::Vacuum,
            rho_samples: Vec::new(),
            batches: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_traj == 0 {
            return Err(Error::InvalidArgument("n_traj must be at least 1"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument("dt must be positive"));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidArgument("t_final must be finite and non-negative"));
        }
        if self.sample_times.iter().any(|&t| !(t >= 0.0 && t <= self.t_final)) {
            return Err(Error::InvalidArgument("sample times must lie in [0, t_final]"));
        }
        if self.sample_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("sample times must be sorted"));
        }
        if self.rho_samples.iter().any(|&k| k >= self.sample_times.len()) {
            return Err(Error::InvalidArgument("rho sample index out of range"));
        }
        if self.batches == 0 {
            return Err(Error::InvalidArgument("batches must be at least 1"));
        }
        Ok(())
    }

    /// Step indices at which each sample is taken (nearest grid point).
    pub fn sample_steps(&self) -> Vec<u64> {
        self.sample_times.iter().map(|&t| (t / self.dt).round() as u64).collect()
    }

    pub fn total_steps(&self) -> u64 {
        (self.t_final / self.dt).round() as u64
    }

    pub fn n_blocks(&self) -> u64 {
        self.n_traj.div_ceil(BLOCK_SIZE)
    }

    fn batch_of(&self, index: u64) -> usize {
        let b = self.batches.min(self.n_traj as usize).max(1) as u64;
        (index * b / self.n_traj) as usize
    }
}

/// Numerical health of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrajectoryDiagnostics {
    pub steps: u64,
    /// Mean of `|‖ψ‖² − 1|` before renormalization, per step.
    pub mean_abs_norm_drift: f64,
    pub max_leakage: f64,
}

/// Integrates trajectory `index` and calls `observer(k, t, ψ)` at each sample.
pub fn run_trajectory_with<F>(spec: &EnsembleSpec, index: u64, mut observer: F) -> Result<TrajectoryDiagnostics>
where
    F: FnMut(usize, f64, &StateVector),
{
    spec.validate()?;
    if index >= spec.n_traj {
        return Err(Error::InvalidArgument("trajectory index out of range"));
    }
    let wrap = |e: Error| Error::Trajectory { index, source: Box::new(e) };
    let mut rng = trajectory_rng(spec.base_seed, index);
    let mut stepper = QsdStepper::new(spec.params, spec.dt).map_err(wrap)?;
    let mut state = spec.initial.state_vector(spec.params.dim).map_err(wrap)?;
    stepper.attach(&state).map_err(wrap)?;

    let sample_steps = spec.sample_steps();
    let total = spec.total_steps().max(sample_steps.last().copied().unwrap_or(0));
    let mut next_sample = 0usize;
    let mut drift_sum = 0.0;
    let mut max_leak = 0.0_f64;

    let mut step = 0u64;
    loop {
        if next_sample < sample_steps.len() && sample_steps[next_sample] == step {
            max_leak = max_leak.max(state.leakage());
        }
        while next_sample < sample_steps.len() && sample_steps[next_sample] == step {
            observer(next_sample, step as f64 * spec.dt, &state);
            next_sample += 1;
        }
        if step >= total {
            break;
        }
        let noise = draw_noise(&mut rng, spec.dt);
        let report = stepper.step(&mut state, step as f64 * spec.dt, &noise).map_err(wrap)?;
        drift_sum += report.norm_drift.abs();
        step += 1;
    }
    Ok(TrajectoryDiagnostics {
        steps: step,
        mean_abs_norm_drift: if step > 0 { drift_sum / step as f64 } else { 0.0 },
        max_leakage: max_leak,
    })
}

/// Samples of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub mean_n: Vec<f64>,
    pub mean_n2: Vec<f64>,
    pub p_n: Vec<Vec<f64>>,
    /// States at `spec.rho_samples`, in that order.
    pub snapshots: Vec<StateVector>,
    pub diagnostics: TrajectoryDiagnostics,
}

pub fn run_trajectory(spec: &EnsembleSpec, index: u64) -> Result<TrajectoryRecord> {
    let n = spec.sample_times.len();
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(n),
        mean_n: Vec::with_capacity(n),
        mean_n2: Vec::with_capacity(n),
        p_n: Vec::with_capacity(n),
        snapshots: Vec::new(),
        diagnostics: TrajectoryDiagnostics::default(),
    };
    let mut snaps: Vec<Option<StateVector>> = vec![None; spec.rho_samples.len()];
    rec.diagnostics = run_trajectory_with(spec, index, |k, t, s| {
        let (m1, m2) = s.number_moments();
        rec.times.push(t);
        rec.mean_n.push(m1);
        rec.mean_n2.push(m2);
        rec.p_n.push(s.amps.iter().map(|c| c.norm_sqr()).collect());
        for (slot, &want) in snaps.iter_mut().zip(&spec.rho_samples) {
            if want == k {
                *slot = Some(s.clone());
            }
        }
    })?;
    rec.snapshots = snaps.into_iter().flatten().collect();
    Ok(rec)
}

/// Running sums over trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAccumulator {
    dim: usize,
    n_batches: usize,
    pub times: Vec<f64>,
    pub count: u64,
    sum_n: Vec<f64>,
    sum_n2: Vec<f64>,
    sum_n_sq: Vec<f64>,
    p_sum: Vec<f64>,
    p_sq: Vec<f64>,
    batch_n: Vec<f64>,
    batch_n2: Vec<f64>,
    batch_count: Vec<u64>,
    rho_sum: Vec<Vec<Complex64>>,
    rho_samples: Vec<usize>,
    drift_sum: f64,
    max_leakage: f64,
}

impl EnsembleAccumulator {
    pub fn new(spec: &EnsembleSpec) -> Self {
        let ns = spec.sample_times.len();
        let d = spec.params.dim;
        let nb = spec.batches.min(spec.n_traj.max(1) as usize).max(1);
        let dt = spec.dt;
        Self {
            dim: d,
            n_batches: nb,
            times: spec.sample_steps().iter().map(|&k| k as f64 * dt).collect(),
            count: 0,
            sum_n: vec![0.0; ns],
            sum_n2: vec![0.0; ns],
            sum_n_sq: vec![0.0; ns],
            p_sum: vec![0.0; ns * d],
            p_sq: vec![0.0; ns * d],
            batch_n: vec![0.0; nb * ns],
            batch_n2: vec![0.0; nb * ns],
            batch_count: vec![0; nb],
            rho_sum: spec.rho_samples.iter().map(|_| vec![ZERO; d * d]).collect(),
            rho_samples: spec.rho_samples.clone(),
            drift_sum: 0.0,
            max_leakage: 0.0,
        }
    }

    /// Runs trajectory `index` and folds it into the sums.
    pub fn add_trajectory(&mut self, spec: &EnsembleSpec, index: u64) -> Result<()> {
        let d = self.dim;
        let ns = self.times.len();
        let batch = spec.batch_of(index);
        let Self { sum_n, sum_n2, sum_n_sq, p_sum, p_sq, batch_n, batch_n2, rho_sum, rho_samples, .. } = self;
        let diag = run_trajectory_with(spec, index, |k, _t, s| {
            let (m1, m2) = s.number_moments();
            sum_n[k] += m1;
            sum_n2[k] += m2;
            sum_n_sq[k] += m1 * m1;
            batch_n[batch * ns + k] += m1;
            batch_n2[batch * ns + k] += m2;
            let ps = &mut p_sum[k * d..(k + 1) * d];
            let pq = &mut p_sq[k * d..(k + 1) * d];
            for (n, c) in s.amps.iter().enumerate() {
                let p = c.norm_sqr();
                ps[n] += p;
                pq[n] += p * p;
            }
            for (slot, &want) in rho_sum.iter_mut().zip(rho_samples.iter()) {
                if want == k {
                    for m in 0..d {
                        let cm = s.amps[m];
                        if cm == ZERO {
                            continue;
                        }
                        let row = &mut slot[m * d..(m + 1) * d];
                        for (r, cn) in row.iter_mut().zip(&s.amps) {
                            *r += cm * cn.conj();
                        }
                    }
                }
            }
        })?;
        self.batch_count[batch] += 1;
        self.count += 1;
        self.drift_sum += diag.mean_abs_norm_drift;
        self.max_leakage = self.max_leakage.max(diag.max_leakage);
        Ok(())
    }

    /// Adds the sums of `other`, which must come from the same spec.
    pub fn merge(&mut self, other: &Self) {
        fn add(a: &mut [f64], b: &[f64]) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        add(&mut self.sum_n, &other.sum_n);
        add(&mut self.sum_n2, &other.sum_n2);
        add(&mut self.sum_n_sq, &other.sum_n_sq);
        add(&mut self.p_sum, &other.p_sum);
        add(&mut self.p_sq, &other.p_sq);
        add(&mut self.batch_n, &other.batch_n);
        add(&mut self.batch_n2, &other.batch_n2);
        self.batch_count.iter_mut().zip(&other.batch_count).for_each(|(x, y)| *x += y);
        for (a, b) in self.rho_sum.iter_mut().zip(&other.rho_sum) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.count += other.count;
        self.drift_sum += other.drift_sum;
        self.max_leakage = self.max_leakage.max(other.max_leakage);
    }

    /// Ensemble statistics at every sample time.
    pub fn summary(&self) -> EnsembleSummary {
        let m = self.count.max(1) as f64;
        let d = self.dim;
        let ns = self.times.len();
        let mut samples = Vec::with_capacity(ns);
        for k in 0..ns {
            let mean_n = self.sum_n[k] / m;
            let mean_n2 = self.sum_n2[k] / m;
            let var_n = mean_n2 - mean_n * mean_n;
            let fano = if mean_n > 0.0 { Some(var_n / mean_n) } else { None };
            let se = |sum: f64, sq: f64| {
                if self.count > 1 {
                    let mu = sum / m;
                    ((sq / m - mu * mu).max(0.0) / (m - 1.0)).sqrt()
                } else {
                    f64::NAN
                }
            };
            let se_mean_n = se(self.sum_n[k], self.sum_n_sq[k]);
            let p_n: Vec<f64> = self.p_sum[k * d..(k + 1) * d].iter().map(|p| p / m).collect();
            let se_p_n = (0..d).map(|n| se(self.p_sum[k * d + n], self.p_sq[k * d + n])).collect();

            let mut fanos = Vec::with_capacity(self.n_batches);
            for b in 0..self.n_batches {
                let cnt = self.batch_count[b];
                if cnt == 0 {
                    continue;
                }
                let bm = self.batch_n[b * ns + k] / cnt as f64;
                let bm2 = self.batch_n2[b * ns + k] / cnt as f64;
                if bm > 0.0 {
                    fanos.push((bm2 - bm * bm) / bm);
                }
            }
            let se_fano = if fanos.len() > 1 {
                let nb = fanos.len() as f64;
                let mu = fanos.iter().sum::<f64>() / nb;
                let var = fanos.iter().map(|f| (f - mu) * (f - mu)).sum::<f64>() / (nb - 1.0);
                (var / nb).sqrt()
            } else {
                f64::NAN
            };
            samples.push(SampleStats { t: self.times[k], mean_n, var_n, fano, se_mean_n, se_fano, p_n, se_p_n });
        }
        let rho = self
            .rho_sum
            .iter()
            .zip(&self.rho_samples)
            .map(|(sum, &k)| {
                let data = sum.iter().map(|z| z / m).collect();
                let mut r = DensityMatrix::from_data(d, data).expect("accumulator dimension");
                r.hermitize();
                (self.times[k], r)
            })
            .collect();
        EnsembleSummary {
            n_traj: self.count,
            samples,
            rho,
            mean_abs_norm_drift: self.drift_sum / m,
            max_leakage: self.max_leakage,
        }
    }
}

/// Ensemble moments at one sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    pub t: f64,
    pub mean_n: f64,
    pub var_n: f64,
    /// `None` when `⟨n⟩ = 0`.
    pub fano: Option<f64>,
    pub se_mean_n: f64,
    pub se_fano: f64,
    pub p_n: Vec<f64>,
    pub se_p_n: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub n_traj: u64,
    pub samples: Vec<SampleStats>,
    /// Ensemble density matrices at the requested samples.
    pub rho: Vec<(f64, DensityMatrix)>,
    pub mean_abs_norm_drift: f64,
    pub max_leakage: f64,
}

/// Accumulator for one block of consecutive trajectories.
pub fn run_block(spec: &EnsembleSpec, block: u64) -> Result<EnsembleAccumulator> {
    let mut acc = EnsembleAccumulator::new(spec);
    let start = block * BLOCK_SIZE;
    let end = (start + BLOCK_SIZE).min(spec.n_traj);
    for index in start..end {
        acc.add_trajectory(spec, index)?;
    }
    Ok(acc)
}

/// Sequential ensemble run; the reduction order matches any parallel
/// schedule that merges blocks in index order.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleAccumulator> {
    spec.validate()?;
    let mut acc = EnsembleAccumulator::new(spec);
    for b in 0..spec.n_blocks() {
        acc.merge(&run_block(spec, b)?);
    }
    Ok(acc)
}
