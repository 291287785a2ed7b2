//! Deterministic integration of the Lindblad master equation
//!
//! ```text
//! dρ/dt = −i[H(t), ρ] + Σᵢ (Lᵢ ρ Lᵢ† − ½{Lᵢ†Lᵢ, ρ})
//! ```
//!
//! in the truncated Fock basis. The generator is split into a part that is
//! diagonal in the `|m⟩⟨n|` basis (Kerr/detuning phases and the anticommutator
//! damping) and a banded remainder (drive commutator and quantum jumps). The
//! diagonal part is propagated exactly and the remainder with a fixed-step
//! fourth-order integrating-factor Runge-Kutta scheme, so the step size is set
//! by the drive and jump couplings rather than by `χD²`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // redundant only when std is linked into the build
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fock::{raised_number, sqrt_table, times_minus_i, DensityMatrix, ModelParams, LEAKAGE_LIMIT};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Largest step admitted for a parameter set.
pub fn max_master_dt(p: &ModelParams) -> f64 {
    let scale = [
        p.delta_det.abs(),
        p.chi * p.dim as f64,
        p.omega1.norm() + p.omega2.norm(),
        p.delta_mod.abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if scale > 0.0 {
        (0.1 / scale).min(0.01)
    } else {
        0.01
    }
}

/// Default fixed step: the admissible bound, tightened so that the explicit
/// stages stay inside the stability region of the banded couplings, and
/// rounded down to an integer number of steps per unit time.
pub fn default_master_dt(p: &ModelParams) -> f64 {
    let top = (p.dim.max(2) - 1) as f64;
    let coupling = 4.0 * (p.omega1.norm() + p.omega2.norm()) * top.sqrt()
        + 2.0 * (p.emission_rate() + p.absorption_rate()) * (top + 1.0);
    let mut dt = max_master_dt(p).min(1e-3);
    if coupling > 0.0 {
        dt = dt.min(2.5 / coupling);
    }
    1.0 / (1.0 / dt).ceil()
}

/// A master-equation run description.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterRun {
    pub params: ModelParams,
    pub rho0: DensityMatrix,
    pub t_final: f64,
    pub dt: f64,
    pub sample_times: Vec<f64>,
}

impl MasterRun {
    /// Vacuum start with the default step.
    pub fn new(params: ModelParams, t_final: f64, sample_times: Vec<f64>) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            rho0: DensityMatrix::vacuum(params.dim)?,
            dt: default_master_dt(&params),
            params,
            t_final,
            sample_times,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.rho0.dim() != self.params.dim {
            return Err(Error::Shape { expected: self.params.dim, found: self.rho0.dim() });
        }
        if !(self.dt > 0.0) || self.dt > max_master_dt(&self.params) * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument("dt outside (0, max_master_dt]"));
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
        Ok(())
    }
}

/// Convergence and validity diagnostics of a master run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MasterDiagnostics {
    pub dt: f64,
    pub steps: u64,
    /// Largest `|Tr ρ(t) − 1| / t` seen at the samples before renormalization.
    pub max_trace_drift_rate: f64,
    /// Largest top-level population seen.
    pub max_leakage: f64,
    /// Smallest diagonal entry seen at the samples.
    pub min_diagonal: f64,
    /// Largest Hermiticity defect seen at the samples before re-Hermitization.
    pub max_hermiticity_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterOutput {
    pub samples: Vec<(f64, DensityMatrix)>,
    pub diagnostics: MasterDiagnostics,
}

/// The Lindblad generator split into its exactly solvable diagonal part and
/// the banded couplings.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    params: ModelParams,
    sqrt: Vec<f64>,
    /// Diagonal rates `−i(E_m − E_n) − κ_m − κ_n` in row-major order.
    diag: Vec<Complex64>,
}

impl Liouvillian {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        let d = params.dim;
        let g1 = params.emission_rate();
        let g2 = params.absorption_rate();
        let half_loss: Vec<f64> = (0..d)
            .map(|k| 0.5 * (g1 * k as f64 + g2 * raised_number(k, d)))
            .collect();
        let energy: Vec<f64> = (0..d).map(|k| params.level_energy(k)).collect();
        let mut diag = Vec::with_capacity(d * d);
        for m in 0..d {
            for n in 0..d {
                diag.push(Complex64::new(-half_loss[m] - half_loss[n], -(energy[m] - energy[n])));
            }
        }
        Ok(Self { sqrt: sqrt_table(d), params, diag })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    /// Elementwise factors `exp(λ_{mn} h)`.
    pub fn diagonal_propagator(&self, h: f64) -> Vec<Complex64> {
        self.diag.iter().map(|l| (l * h).exp()).collect()
    }

    /// Banded part of the generator (drive commutator and jump terms) applied
    /// to a Hermitian `rho`; `out` is fully overwritten and Hermitian.
    pub fn apply_coupling(&self, t: f64, rho: &[Complex64], out: &mut [Complex64]) {
        let d = self.params.dim;
        let s = &self.sqrt;
        let f = self.params.drive(t);
        let fc = f.conj();
        let g1 = self.params.emission_rate();
        let g2 = self.params.absorption_rate();

        for m in 0..d {
            let cur = &rho[m * d..(m + 1) * d];
            let prev = if m > 0 { &rho[(m - 1) * d..m * d] } else { &rho[0..0] };
            let next = if m + 1 < d { &rho[(m + 1) * d..(m + 2) * d] } else { &rho[0..0] };
            let row = &mut out[m * d..(m + 1) * d];
            let sm = s[m];
            let sm1 = if m + 1 < d { s[m + 1] } else { 0.0 };
            for n in m..d {
                // [V, ρ]_{mn} with V = f a† + f* a
                let mut comm = ZERO;
                if m > 0 {
                    comm += f * (sm * prev[n]);
                }
                if m + 1 < d {
                    comm += fc * (sm1 * next[n]);
                }
                if n + 1 < d {
                    comm -= f * (s[n + 1] * cur[n + 1]);
                }
                if n > 0 {
                    comm -= fc * (s[n] * cur[n - 1]);
                }
                let mut v = times_minus_i(comm);
                if m + 1 < d && n + 1 < d {
                    v += next[n + 1] * (g1 * sm1 * s[n + 1]);
                }
                if m > 0 && n > 0 && g2 != 0.0 {
                    v += prev[n - 1] * (g2 * sm * s[n]);
                }
                row[n] = v;
            }
        }
        for m in 0..d {
            out[m * d + m].im = 0.0;
            for n in m + 1..d {
                out[n * d + m] = out[m * d + n].conj();
            }
        }
    }

    /// Full right-hand side `dρ/dt`.
    pub fn rhs(&self, t: f64, rho: &[Complex64], out: &mut [Complex64]) {
        self.apply_coupling(t, rho, out);
        for ((o, r), l) in out.iter_mut().zip(rho).zip(&self.diag) {
            *o += l * r;
        }
    }
}

/// `dρ/dt` of the master equation at time `t`.
pub fn lindblad_rhs(rho: &DensityMatrix, t: f64, p: &ModelParams) -> Result<DensityMatrix> {
    p.validate()?;
    if rho.dim() != p.dim {
        return Err(Error::Shape { expected: p.dim, found: rho.dim() });
    }
    let l = Liouvillian::new(*p)?;
    let mut out = DensityMatrix::zeros(p.dim)?;
    l.rhs(t, rho.as_slice(), out.as_mut_slice());
    Ok(out)
}

/// Fixed-step integrating-factor RK4 propagator.
pub struct MasterStepper {
    gen: Liouvillian,
    dt: f64,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    k: [Vec<Complex64>; 4],
    stage: Vec<Complex64>,
}

impl MasterStepper {
    pub fn new(params: ModelParams, dt: f64) -> Result<Self> {
        let gen = Liouvillian::new(params)?;
        let n = params.dim * params.dim;
        Ok(Self {
            half: gen.diagonal_propagator(0.5 * dt),
            full: gen.diagonal_propagator(dt),
            gen,
            dt,
            k: [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]],
            stage: vec![ZERO; n],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn generator(&self) -> &Liouvillian {
        &self.gen
    }

    /// Advances `rho` from `t` to `t + dt`.
    pub fn step(&mut self, t: f64, rho: &mut [Complex64]) {
        let (half, full) = (core::mem::take(&mut self.half), core::mem::take(&mut self.full));
        self.advance(t, self.dt, &half, &full, rho);
        self.half = half;
        self.full = full;
    }

    /// Advances by an arbitrary `h`, used to land on sample times that are not
    /// on the step grid.
    pub fn step_by(&mut self, t: f64, h: f64, rho: &mut [Complex64]) {
        let half = self.gen.diagonal_propagator(0.5 * h);
        let full = self.gen.diagonal_propagator(h);
        self.advance(t, h, &half, &full, rho);
    }

    fn advance(&mut self, t: f64, h: f64, half: &[Complex64], full: &[Complex64], rho: &mut [Complex64]) {
        let [k1, k2, k3, k4] = &mut self.k;
        let u = &mut self.stage;
        let hh = 0.5 * h;

        self.gen.apply_coupling(t, rho, k1);
        for i in 0..u.len() {
            u[i] = half[i] * (rho[i] + k1[i] * hh);
        }
        self.gen.apply_coupling(t + hh, u, k2);
        for i in 0..u.len() {
            u[i] = half[i] * rho[i] + k2[i] * hh;
        }
        self.gen.apply_coupling(t + hh, u, k3);
        for i in 0..u.len() {
            u[i] = full[i] * rho[i] + half[i] * k3[i] * h;
        }
        self.gen.apply_coupling(t + h, u, k4);
        let h6 = h / 6.0;
        for i in 0..rho.len() {
            rho[i] = full[i] * (rho[i] + k1[i] * h6) + half[i] * ((k2[i] + k3[i]) * (2.0 * h6)) + k4[i] * h6;
        }
    }
}

fn check_leakage(rho: &DensityMatrix, time: f64, diag: &mut MasterDiagnostics) -> Result<()> {
    if !rho.is_finite() {
        return Err(Error::NumericOverflow { time });
    }
    let leak = rho.leakage();
    diag.max_leakage = diag.max_leakage.max(leak);
    if leak >= LEAKAGE_LIMIT {
        return Err(Error::TruncationOverflow { time, leakage: leak });
    }
    Ok(())
}

/// Integrates `run` and hands every sample, re-Hermitized and trace-normalized,
/// to `observer`.
pub fn integrate_master_with<F>(run: &MasterRun, mut observer: F) -> Result<MasterDiagnostics>
where
    F: FnMut(f64, &DensityMatrix) -> Result<()>,
{
    run.validate()?;
    let mut stepper = MasterStepper::new(run.params, run.dt)?;
    let dt = run.dt;
    let mut diag = MasterDiagnostics { dt, min_diagonal: f64::INFINITY, ..Default::default() };
    let mut rho = run.rho0.clone();
    let mut scratch = rho.clone();
    let total_steps = (run.t_final / dt - 1e-9).ceil().max(0.0) as u64;
    let check_every = ((1.0 / dt).round() as u64).max(1);
    let mut samples = run.sample_times.iter().copied().peekable();
    let tol = 1e-9 * dt;

    let mut emit = |t: f64, state: &DensityMatrix, diag: &mut MasterDiagnostics| -> Result<()> {
        check_leakage(state, t, diag)?;
        let mut out = state.clone();
        diag.max_hermiticity_error = diag.max_hermiticity_error.max(out.hermiticity_error());
        let drift = (out.trace().re - 1.0).abs();
        if t > 0.0 {
            diag.max_trace_drift_rate = diag.max_trace_drift_rate.max(drift / t);
        }
        out.hermitize();
        out.normalize_trace();
        for k in 0..out.dim() {
            diag.min_diagonal = diag.min_diagonal.min(out.get(k, k).re);
        }
        observer(t, &out)
    };

    let mut step = 0u64;
    loop {
        let t = step as f64 * dt;
        let t_next = if step + 1 >= total_steps { run.t_final } else { (step + 1) as f64 * dt };
        while let Some(&ts) = samples.peek() {
            if (ts - t).abs() <= tol {
                emit(t, &rho, &mut diag)?;
                samples.next();
            } else if ts < t_next - tol || (step >= total_steps && ts <= run.t_final) {
                scratch.as_mut_slice().copy_from_slice(rho.as_slice());
                stepper.step_by(t, ts - t, scratch.as_mut_slice());
                emit(ts, &scratch, &mut diag)?;
                samples.next();
            } else {
                break;
            }
        }
        if step >= total_steps {
            break;
        }
        let h = t_next - t;
        if (h - dt).abs() <= tol {
            stepper.step(t, rho.as_mut_slice());
        } else {
            stepper.step_by(t, h, rho.as_mut_slice());
        }
        step += 1;
        diag.steps = step;
        if step % check_every == 0 {
            check_leakage(&rho, t_next, &mut diag)?;
        }
    }
    if diag.min_diagonal == f64::INFINITY {
        diag.min_diagonal = 0.0;
    }
    Ok(diag)
}

/// Integrates `run`, returning the density matrix at each sample time.
pub fn integrate_master(run: &MasterRun) -> Result<MasterOutput> {
    let mut samples = Vec::with_capacity(run.sample_times.len());
    let diagnostics = integrate_master_with(run, |t, rho| {
        samples.push((t, rho.clone()));
        Ok(())
    })?;
    Ok(MasterOutput { samples, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::StateVector;

    fn quiet(dim: usize) -> ModelParams {
        ModelParams {
            chi: 0.0,
            delta_det: 0.0,
            omega1: ZERO,
            omega2: ZERO,
            delta_mod: 0.0,
            n_bath: 0.0,
            gamma: 1.0,
            dim,
        }
    }

    /// Dense reference generator built from explicit operator matrices.
    fn dense_rhs(rho: &DensityMatrix, t: f64, p: &ModelParams) -> Vec<Complex64> {
        let d = p.dim;
        let h = crate::fock::hamiltonian_operator(p, t).unwrap().to_dense();
        let a = crate::fock::build_lowering(d).unwrap().to_dense();
        let ad = crate::fock::build_raising(d).unwrap().to_dense();
        let mul = |x: &[Complex64], y: &[Complex64]| {
            let mut z = vec![ZERO; d * d];
            for i in 0..d {
                for k in 0..d {
                    let xik = x[i * d + k];
                    if xik == ZERO {
                        continue;
                    }
                    for j in 0..d {
                        z[i * d + j] += xik * y[k * d + j];
                    }
                }
            }
            z
        };
        let r = rho.as_slice();
        let mut out = vec![ZERO; d * d];
        let hr = mul(&h, r);
        let rh = mul(r, &h);
        for i in 0..d * d {
            out[i] = times_minus_i(hr[i] - rh[i]);
        }
        for (l, ld, rate) in [(&a, &ad, p.emission_rate()), (&ad, &a, p.absorption_rate())] {
            let lrl = mul(&mul(l, r), ld);
            let ll = mul(ld, l);
            let llr = mul(&ll, r);
            let rll = mul(r, &ll);
            for i in 0..d * d {
                out[i] += (lrl[i] - (llr[i] + rll[i]) * 0.5) * rate;
            }
        }
        out
    }

    #[test]
    fn vacuum_is_stationary_without_drive() {
        let out = lindblad_rhs(&DensityMatrix::vacuum(6).unwrap(), 0.0, &quiet(6)).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn single_quantum_decays() {
        let out = lindblad_rhs(&DensityMatrix::fock(5, 1).unwrap(), 0.0, &quiet(5)).unwrap();
        assert!((out.get(0, 0).re - 1.0).abs() < 1e-15);
        assert!((out.get(1, 1).re + 1.0).abs() < 1e-15);
        for m in 0..5 {
            for n in 0..5 {
                if m != n {
                    assert_eq!(out.get(m, n), ZERO);
                }
            }
        }
    }

    #[test]
    fn thermal_state_is_stationary() {
        let p = ModelParams { n_bath: 0.3, ..quiet(60) };
        // Geometric occupation; the truncation only affects levels with
        // vanishing population.
        let rho = DensityMatrix::thermal(60, 0.3).unwrap();
        let out = lindblad_rhs(&rho, 0.0, &p).unwrap();
        assert!(out.max_abs() < 1e-10, "{}", out.max_abs());
    }

    #[test]
    fn banded_rhs_matches_dense_reference() {
        let p = ModelParams { dim: 9, n_bath: 0.2, ..ModelParams::regular() };
        let mut amps: Vec<Complex64> = (0..9).map(|k| Complex64::new(1.0 / (1.0 + k as f64), 0.3 * k as f64)).collect();
        let mut s = StateVector { amps: core::mem::take(&mut amps) };
        s.normalize();
        let mut rho = DensityMatrix::from_pure(&s);
        let mix = DensityMatrix::thermal(9, 0.7).unwrap();
        for (x, y) in rho.as_mut_slice().iter_mut().zip(mix.as_slice()) {
            *x = *x * 0.6 + y * 0.4;
        }
        let fast = lindblad_rhs(&rho, 0.37, &p).unwrap();
        let slow = dense_rhs(&rho, 0.37, &p);
        for (a, b) in fast.as_slice().iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10);
        }
        assert!(fast.hermiticity_error() < 1e-12);
        assert!(fast.trace().norm() < 1e-10);
    }

    #[test]
    fn damped_coherent_amplitude() {
        let p = quiet(30);
        let run = MasterRun {
            params: p,
            rho0: DensityMatrix::coherent(30, Complex64::new(1.0, 0.0)).unwrap(),
            t_final: 2.0,
            dt: 1e-3,
            sample_times: vec![0.5, 1.0, 2.0],
        };
        let out = integrate_master(&run).unwrap();
        let (t, rho) = out.samples.last().unwrap();
        assert_eq!(*t, 2.0);
        assert!((rho.expect_lowering().re - (-1.0f64).exp()).abs() < 1e-4);
        for (_, r) in &out.samples {
            assert!((r.trace().re - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn off_grid_samples_land_exactly() {
        let p = ModelParams { dim: 24, omega1: Complex64::new(0.5, 0.0), ..quiet(24) };
        let times = vec![0.0, 0.0123, 0.5, 0.77777, 1.0];
        let run = MasterRun { params: p, rho0: DensityMatrix::vacuum(24).unwrap(), t_final: 1.0, dt: 0.01, sample_times: times.clone() };
        let out = integrate_master(&run).unwrap();
        let got: Vec<f64> = out.samples.iter().map(|s| s.0).collect();
        assert_eq!(got, times);
    }

    #[test]
    fn rejects_bad_runs() {
        let p = ModelParams { dim: 8, ..ModelParams::regular() };
        let mut run = MasterRun::new(p, 1.0, vec![0.5]).unwrap();
        run.dt = 0.5;
        assert!(run.validate().is_err());
        let mut run = MasterRun::new(p, 1.0, vec![2.0]).unwrap();
        assert!(integrate_master(&run).is_err());
        run.sample_times = vec![0.5, 0.1];
        assert!(run.validate().is_err());
        run.sample_times = vec![];
        run.rho0 = DensityMatrix::vacuum(5).unwrap();
        assert!(matches!(run.validate(), Err(Error::Shape { .. })));
    }

    #[test]
    fn leakage_triggers_truncation_error() {
        let p = ModelParams { dim: 16, omega1: Complex64::new(6.0, 0.0), ..quiet(16) };
        let run = MasterRun::new(p, 3.0, vec![3.0]).unwrap();
        match integrate_master(&run) {
            Err(Error::TruncationOverflow { time, .. }) => assert!(time > 0.0 && time <= 3.0),
            other => panic!("expected truncation overflow, got {other:?}"),
        }
    }

    #[test]
    fn default_dt_respects_bound() {
        for p in [ModelParams::regular(), ModelParams::chaotic(), quiet(4)] {
            let dt = default_master_dt(&p);
            assert!(dt > 0.0 && dt <= max_master_dt(&p));
        }
    }
}
