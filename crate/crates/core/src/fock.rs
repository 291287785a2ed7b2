//! Truncated Fock basis, model parameters and the oscillator Hamiltonian.
//!
//! The Hamiltonian (with `hbar = 1`) is
//!
//! ```text
//! H(t) = Δ a†a + [(Ω₁ + Ω₂ e^{-iδt}) a† + h.c.] + χ (a†a)²
//! ```
//!
//! and dissipation enters through `L₁ = √((N+1)γ) a` and `L₂ = √(Nγ) a†`.
//! Operators are never materialized as dense matrices; everything acts through
//! the tridiagonal structure of the ladder operators.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // redundant only when std is linked into the build
use num_traits::Float;

use crate::error::{Error, Result};

/// Number of top Fock levels watched by the truncation-leakage monitor.
pub const LEAKAGE_LEVELS: usize = 10;

/// First level of the watched band: the top [`LEAKAGE_LEVELS`] levels, or the
/// upper half of the basis when it is smaller than `2 * LEAKAGE_LEVELS`.
#[inline]
pub fn leakage_start(dim: usize) -> usize {
    dim - LEAKAGE_LEVELS.min(dim / 2)
}
/// Population allowed in the watched levels before a run is declared invalid.
pub const LEAKAGE_LIMIT: f64 = 1e-6;

/// Physical parameters, all in units of the decay rate `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Kerr anharmonicity χ.
    pub chi: f64,
    /// Detuning Δ = ω₀ − ω₁.
    pub delta_det: f64,
    /// Rabi coupling of the first drive.
    pub omega1: Complex64,
    /// Rabi coupling of the second drive.
    pub omega2: Complex64,
    /// Modulation frequency δ = ω₂ − ω₁.
    pub delta_mod: f64,
    /// Mean thermal occupation N of the bath.
    pub n_bath: f64,
    /// Decay rate γ.
    pub gamma: f64,
    /// Fock truncation D.
    pub dim: usize,
}

impl ModelParams {
    /// Parameters of the classically regular regime (Ω₂ = 35).
    pub fn regular() -> Self {
        Self {
            chi: 0.1,
            delta_det: -15.0,
            omega1: Complex64::new(27.0, 0.0),
            omega2: Complex64::new(35.0, 0.0),
            delta_mod: 5.0,
            n_bath: 0.002,
            gamma: 1.0,
            dim: 300,
        }
    }

    /// Parameters of the classically chaotic regime (Ω₁ = Ω₂ = 27).
    pub fn chaotic() -> Self {
        Self {
            omega2: Complex64::new(27.0, 0.0),
            ..Self::regular()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidDimension(self.dim));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument("gamma must be positive and finite"));
        }
        if !(self.n_bath >= 0.0) || !self.n_bath.is_finite() {
            return Err(Error::InvalidArgument("n_bath must be non-negative and finite"));
        }
        let finite = [self.chi, self.delta_det, self.delta_mod]
            .iter()
            .all(|v| v.is_finite())
            && [self.omega1, self.omega2]
                .iter()
                .all(|w| w.re.is_finite() && w.im.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("parameters must be finite"));
        }
        Ok(())
    }

    /// Complex drive amplitude `Ω₁ + Ω₂ e^{-iδt}` multiplying `a†`.
    #[inline]
    pub fn drive(&self, t: f64) -> Complex64 {
        let (s, c) = (self.delta_mod * t).sin_cos();
        self.omega1 + self.omega2 * Complex64::new(c, -s)
    }

    /// Diagonal energy `Δ n + χ n²` of level `n`.
    #[inline]
    pub fn level_energy(&self, n: usize) -> f64 {
        let n = n as f64;
        self.delta_det * n + self.chi * n * n
    }

    /// Emission rate `(N+1)γ` (coefficient of `L₁†L₁ = (N+1)γ a†a`).
    #[inline]
    pub fn emission_rate(&self) -> f64 {
        (self.n_bath + 1.0) * self.gamma
    }

    /// Absorption rate `Nγ`.
    #[inline]
    pub fn absorption_rate(&self) -> f64 {
        self.n_bath * self.gamma
    }

    /// Modulation period `2π/δ`.
    pub fn modulation_period(&self) -> Option<f64> {
        if self.delta_mod == 0.0 {
            None
        } else {
            Some(2.0 * core::f64::consts::PI / self.delta_mod.abs())
        }
    }
}

/// Mean thermal occupation `1/(e^x − 1)` for `x = ħω/k_BT`.
pub fn mean_thermal_occupation(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidArgument("x = hbar*omega/kT must be positive"));
    }
    Ok(1.0 / x.exp_m1())
}

/// Precomputed `√n` for `n = 0..=dim`.
pub(crate) fn sqrt_table(dim: usize) -> Vec<f64> {
    (0..=dim).map(|n| (n as f64).sqrt()).collect()
}

/// Diagonal of the truncated product `a a†`: `n + 1` below the cutoff, zero on
/// the last level.
#[inline]
pub(crate) fn raised_number(n: usize, dim: usize) -> f64 {
    if n + 1 < dim {
        (n + 1) as f64
    } else {
        0.0
    }
}

/// Tridiagonal operator in the Fock basis.
///
/// `sub[k]` is the element `(k+1, k)` and `sup[k]` is `(k, k+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedOperator {
    pub diag: Vec<f64>,
    pub sub: Vec<Complex64>,
    pub sup: Vec<Complex64>,
}

impl BandedOperator {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let d = self.dim();
        if v.len() != d {
            return Err(Error::Shape { expected: d, found: v.len() });
        }
        let mut out: Vec<Complex64> = v.iter().zip(&self.diag).map(|(c, &e)| c * e).collect();
        for k in 0..d - 1 {
            out[k] += self.sup[k] * v[k + 1];
            out[k + 1] += self.sub[k] * v[k];
        }
        Ok(out)
    }

    /// Hermitian adjoint.
    pub fn adjoint(&self) -> Self {
        Self {
            diag: self.diag.clone(),
            sub: self.sup.iter().map(|c| c.conj()).collect(),
            sup: self.sub.iter().map(|c| c.conj()).collect(),
        }
    }

    /// Dense row-major copy, mostly useful for tests.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let d = self.dim();
        let mut m = vec![Complex64::new(0.0, 0.0); d * d];
        for k in 0..d {
            m[k * d + k] = Complex64::new(self.diag[k], 0.0);
        }
        for k in 0..d - 1 {
            m[k * d + k + 1] = self.sup[k];
            m[(k + 1) * d + k] = self.sub[k];
        }
        m
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        Err(Error::InvalidDimension(dim))
    } else {
        Ok(())
    }
}

/// Annihilation operator `a`: superdiagonal `√1, √2, …, √(D−1)`.
pub fn build_lowering(dim: usize) -> Result<BandedOperator> {
    check_dim(dim)?;
    Ok(BandedOperator {
        diag: vec![0.0; dim],
        sub: vec![Complex64::new(0.0, 0.0); dim - 1],
        sup: (1..dim).map(|n| Complex64::new((n as f64).sqrt(), 0.0)).collect(),
    })
}

/// Creation operator `a†`.
pub fn build_raising(dim: usize) -> Result<BandedOperator> {
    Ok(build_lowering(dim)?.adjoint())
}

/// Number operator `a†a`.
pub fn build_number(dim: usize) -> Result<BandedOperator> {
    check_dim(dim)?;
    Ok(BandedOperator {
        diag: (0..dim).map(|n| n as f64).collect(),
        sub: vec![Complex64::new(0.0, 0.0); dim - 1],
        sup: vec![Complex64::new(0.0, 0.0); dim - 1],
    })
}

/// `(a†a)²`.
pub fn build_number_squared(dim: usize) -> Result<BandedOperator> {
    let mut op = build_number(dim)?;
    op.diag.iter_mut().for_each(|n| *n *= *n);
    Ok(op)
}

/// The Hamiltonian at time `t` as a banded operator.
pub fn hamiltonian_operator(p: &ModelParams, t: f64) -> Result<BandedOperator> {
    p.validate()?;
    let d = p.dim;
    let f = p.drive(t);
    Ok(BandedOperator {
        diag: (0..d).map(|n| p.level_energy(n)).collect(),
        sub: (1..d).map(|n| f * (n as f64).sqrt()).collect(),
        sup: (1..d).map(|n| f.conj() * (n as f64).sqrt()).collect(),
    })
}

/// Computes `H(t)|ψ⟩` without normalization.
pub fn apply_hamiltonian(p: &ModelParams, t: f64, s: &StateVector) -> Result<StateVector> {
    p.validate()?;
    let d = p.dim;
    if s.dim() != d {
        return Err(Error::Shape { expected: d, found: s.dim() });
    }
    let f = p.drive(t);
    let fc = f.conj();
    let c = &s.amps;
    let mut out = Vec::with_capacity(d);
    for n in 0..d {
        let mut v = c[n] * p.level_energy(n);
        if n > 0 {
            v += f * (n as f64).sqrt() * c[n - 1];
        }
        if n + 1 < d {
            v += fc * ((n + 1) as f64).sqrt() * c[n + 1];
        }
        out.push(v);
    }
    if out.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NumericOverflow { time: t });
    }
    Ok(StateVector { amps: out })
}

/// Pure state `Σ c_n |n⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amps: Vec<Complex64>,
}

impl StateVector {
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        check_dim(amps.len())?;
        Ok(Self { amps })
    }

    pub fn fock(dim: usize, n: usize) -> Result<Self> {
        check_dim(dim)?;
        if n >= dim {
            return Err(Error::InvalidArgument("Fock index outside the truncated basis"));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[n] = Complex64::new(1.0, 0.0);
        Ok(Self { amps })
    }

    pub fn vacuum(dim: usize) -> Result<Self> {
        Self::fock(dim, 0)
    }

    /// Coherent state `|α⟩`, renormalized inside the truncated basis.
    pub fn coherent(dim: usize, alpha: Complex64) -> Result<Self> {
        check_dim(dim)?;
        let mut amps = Vec::with_capacity(dim);
        let mut c = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
        for n in 0..dim {
            amps.push(c);
            c = c * alpha / ((n + 1) as f64).sqrt();
        }
        let mut s = Self { amps };
        s.normalize();
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Rescales to unit norm and returns the squared norm beforehand.
    pub fn normalize(&mut self) -> f64 {
        let n2 = self.norm_sqr();
        if n2 > 0.0 {
            let s = 1.0 / n2.sqrt();
            self.amps.iter_mut().for_each(|c| *c *= s);
        }
        n2
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// `⟨a⟩` for a normalized state.
    pub fn expect_lowering(&self) -> Complex64 {
        self.amps
            .windows(2)
            .enumerate()
            .map(|(n, w)| w[0].conj() * w[1] * ((n + 1) as f64).sqrt())
            .sum()
    }

    /// `(⟨n⟩, ⟨n²⟩)`.
    pub fn number_moments(&self) -> (f64, f64) {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (n, c) in self.amps.iter().enumerate() {
            let p = c.norm_sqr();
            let n = n as f64;
            m1 += n * p;
            m2 += n * n * p;
        }
        (m1, m2)
    }

    /// Population in the watched top levels (see [`leakage_start`]).
    pub fn leakage(&self) -> f64 {
        self.amps[leakage_start(self.dim())..]
            .iter()
            .map(|c| c.norm_sqr())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Row-major density matrix `ρ_{mn} = ⟨m|ρ|n⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn zeros(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { dim, data: vec![Complex64::new(0.0, 0.0); dim * dim] })
    }

    pub fn from_data(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        check_dim(dim)?;
        if data.len() != dim * dim {
            return Err(Error::Shape { expected: dim * dim, found: data.len() });
        }
        Ok(Self { dim, data })
    }

    pub fn from_pure(s: &StateVector) -> Self {
        let d = s.dim();
        let mut data = Vec::with_capacity(d * d);
        for m in 0..d {
            for n in 0..d {
                data.push(s.amps[m] * s.amps[n].conj());
            }
        }
        Self { dim: d, data }
    }

    pub fn fock(dim: usize, n: usize) -> Result<Self> {
        Ok(Self::from_pure(&StateVector::fock(dim, n)?))
    }

    pub fn vacuum(dim: usize) -> Result<Self> {
        Self::fock(dim, 0)
    }

    pub fn coherent(dim: usize, alpha: Complex64) -> Result<Self> {
        Ok(Self::from_pure(&StateVector::coherent(dim, alpha)?))
    }

    /// Thermal state with mean occupation `mean`, renormalized after truncation.
    pub fn thermal(dim: usize, mean: f64) -> Result<Self> {
        if !(mean >= 0.0) {
            return Err(Error::InvalidArgument("thermal mean must be non-negative"));
        }
        let mut rho = Self::zeros(dim)?;
        let ratio = mean / (1.0 + mean);
        let mut p = 1.0 / (1.0 + mean);
        let mut total = 0.0;
        for n in 0..dim {
            rho.data[n * dim + n] = Complex64::new(p, 0.0);
            total += p;
            p *= ratio;
        }
        rho.scale(1.0 / total);
        Ok(rho)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.data[m * self.dim + n]
    }

    #[inline]
    pub fn set(&mut self, m: usize, n: usize, v: Complex64) {
        self.data[m * self.dim + n] = v;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|k| self.get(k, k)).sum()
    }

    /// Real parts of the diagonal (`P_n`).
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|k| self.get(k, k).re).collect()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|c| *c *= s);
    }

    /// Replaces ρ by (ρ + ρ†)/2.
    pub fn hermitize(&mut self) {
        let d = self.dim;
        for m in 0..d {
            let k = m * d + m;
            self.data[k] = Complex64::new(self.data[k].re, 0.0);
            for n in m + 1..d {
                let avg = (self.data[m * d + n] + self.data[n * d + m].conj()) * 0.5;
                self.data[m * d + n] = avg;
                self.data[n * d + m] = avg.conj();
            }
        }
    }

    /// Divides by the real part of the trace.
    pub fn normalize_trace(&mut self) -> f64 {
        let tr = self.trace().re;
        if tr != 0.0 {
            self.scale(1.0 / tr);
        }
        tr
    }

    /// Largest elementwise deviation `|ρ_{mn} − conj(ρ_{nm})|`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0_f64;
        for m in 0..d {
            for n in m..d {
                worst = worst.max((self.get(m, n) - self.get(n, m).conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Population in the watched top levels (see [`leakage_start`]).
    pub fn leakage(&self) -> f64 {
        (leakage_start(self.dim)..self.dim).map(|k| self.get(k, k).re).sum()
    }

    /// `⟨a⟩ = Tr(ρ a) = Σ_n √(n+1) ρ_{n+1,n}`.
    pub fn expect_lowering(&self) -> Complex64 {
        (0..self.dim - 1)
            .map(|n| self.get(n + 1, n) * ((n + 1) as f64).sqrt())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Initial condition shared by the master-equation and trajectory routes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InitialState {
    #[default]
    Vacuum,
    Fock(usize),
    Coherent(Complex64),
}

impl InitialState {
    pub fn state_vector(&self, dim: usize) -> Result<StateVector> {
        match *self {
            InitialState::Vacuum => StateVector::vacuum(dim),
            InitialState::Fock(n) => StateVector::fock(dim, n),
            InitialState::Coherent(a) => StateVector::coherent(dim, a),
        }
    }

    pub fn density_matrix(&self, dim: usize) -> Result<DensityMatrix> {
        Ok(DensityMatrix::from_pure(&self.state_vector(dim)?))
    }
}

/// `−i·z`.
#[inline]
pub(crate) fn times_minus_i(z: Complex64) -> Complex64 {
    Complex64::new(z.im, -z.re)
}
