//! Excitation-number statistics, distribution shape metrics and the Wigner
//! function of a density matrix.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // redundant only when std is linked into the build
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fock::DensityMatrix;

const FRAC_2_PI: f64 = core::f64::consts::FRAC_2_PI;

/// Number distribution and its first two moments.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberStats {
    pub mean_n: f64,
    pub var_n: f64,
    /// `Var(n)/⟨n⟩`; `None` when `⟨n⟩ = 0`.
    pub fano: Option<f64>,
    /// `P_n = ⟨n|ρ|n⟩`, negative round-off clamped to zero.
    pub p_n: Vec<f64>,
}

/// `P_n`, `⟨n⟩`, `Var(n)` and the Fano factor.
pub fn number_stats(rho: &DensityMatrix) -> Result<NumberStats> {
    let raw = rho.diagonal();
    let total: f64 = raw.iter().sum();
    if !((total - 1.0).abs() <= 1e-8) {
        return Err(Error::InvalidArgument("density matrix trace differs from 1"));
    }
    if raw.iter().any(|&p| p < -1e-10 || !p.is_finite()) {
        return Err(Error::InvalidArgument("negative population in density matrix"));
    }
    let (m1, m2) = raw.iter().enumerate().fold((0.0, 0.0), |(a, b), (n, &p)| {
        let n = n as f64;
        (a + n * p, b + n * n * p)
    });
    let var_n = m2 - m1 * m1;
    Ok(NumberStats {
        mean_n: m1,
        var_n,
        fano: if m1 > 0.0 { Some(var_n / m1) } else { None },
        p_n: raw.into_iter().map(|p| p.max(0.0)).collect(),
    })
}

/// Shape descriptors of a number distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeMetrics {
    /// Length of the shortest contiguous window holding 95% of the probability.
    pub support_width_95: usize,
    /// First level of that window.
    pub window_start: usize,
    /// Peak-to-mean ratio of `P_n` inside the window (≥ 1, 1 when flat).
    pub flatness: f64,
}

impl ShapeMetrics {
    /// Last level of the 95% window.
    pub fn window_end(&self) -> usize {
        self.window_start + self.support_width_95 - 1
    }
}

pub fn shape_metrics(p_n: &[f64]) -> Result<ShapeMetrics> {
    let total: f64 = p_n.iter().sum();
    if p_n.is_empty() || !(total > 0.0) {
        return Err(Error::InvalidArgument("empty probability vector"));
    }
    let target = 0.95 * total - 1e-12;
    let mut best: Option<(usize, usize)> = None;
    let mut end = 0;
    let mut acc = 0.0;
    for start in 0..p_n.len() {
        while end < p_n.len() && acc < target {
            acc += p_n[end];
            end += 1;
        }
        if acc < target {
            break;
        }
        if best.is_none_or(|(w, _)| end - start < w) {
            best = Some((end - start, start));
        }
        acc -= p_n[start];
    }
    let (width, start) = best.expect("window covering 95% exists");
    let window = &p_n[start..start + width];
    let peak = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = window.iter().sum::<f64>() / width as f64;
    Ok(ShapeMetrics { support_width_95: width, window_start: start, flatness: peak / mean })
}

/// Uniform phase-space grid with inclusive endpoints; `X = Re α`, `Y = Im α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { x_min: -20.0, x_max: 20.0, nx: 201, y_min: -20.0, y_max: 20.0, ny: 201 }
    }
}

impl GridSpec {
    pub fn square(half_width: f64, n: usize) -> Self {
        Self { x_min: -half_width, x_max: half_width, nx: n, y_min: -half_width, y_max: half_width, ny: n }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 || !(self.x_max > self.x_min) || !(self.y_max > self.y_min) {
            return Err(Error::InvalidArgument("grid needs at least 2x2 points and increasing bounds"));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.dy()
    }
}

/// Wigner function sampled on a grid, stored row by row in `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub spec: GridSpec,
    pub x_axis: Vec<f64>,
    pub y_axis: Vec<f64>,
    /// `values[j * nx + i] = W(x_i, y_j)`.
    pub values: Vec<f64>,
}

impl WignerGrid {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.spec.nx + i]
    }

    /// `Σ W ΔX ΔY`.
    pub fn riemann_sum(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.dx() * self.spec.dy()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Largest `|W|` on the grid boundary.
    pub fn boundary_max(&self) -> f64 {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        let mut m = 0.0_f64;
        for i in 0..nx {
            m = m.max(self.at(i, 0).abs()).max(self.at(i, ny - 1).abs());
        }
        for j in 0..ny {
            m = m.max(self.at(0, j).abs()).max(self.at(nx - 1, j).abs());
        }
        m
    }

    /// False when the boundary carries more than `1e-4` of the peak, i.e. the
    /// grid does not cover the state's support.
    pub fn covers_support(&self) -> bool {
        self.boundary_max() <= 1e-4 * self.max_abs()
    }

    /// Location and value of the global maximum.
    pub fn argmax(&self) -> (f64, f64, f64) {
        let (mut best, mut at) = (f64::NEG_INFINITY, 0);
        for (k, &v) in self.values.iter().enumerate() {
            if v > best {
                best = v;
                at = k;
            }
        }
        let nx = self.spec.nx;
        (self.x_axis[at % nx], self.y_axis[at / nx], best)
    }
}

/// Sums `Σ_n (−1)^n c_n g_n` where `g_n = √(n!/(n+k)!) x^{k/2} e^{−x/2} L_n^{(k)}(x)`,
/// running the Laguerre recurrence in a rescaled form so that neither the
/// tiny starting value nor large intermediate values leave the `f64` range.
fn laguerre_column(x: f64, k: usize, coeffs: impl Iterator<Item = Complex64>, ln_fact_k: f64) -> Complex64 {
    const BIG: f64 = 1e200;
    let ln_big = BIG.ln();
    let kf = k as f64;
    let mut scale = if k == 0 { -0.5 * x } else { 0.5 * kf * x.ln() - 0.5 * x - 0.5 * ln_fact_k };
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut sign = 1.0;
    for (n, c) in coeffs.enumerate() {
        if n > 0 {
            let nf = (n - 1) as f64;
            let next = ((2.0 * nf + kf + 1.0 - x) * cur - (nf * (nf + kf)).sqrt() * prev) / ((nf + 1.0) * (nf + kf + 1.0)).sqrt();
            prev = cur;
            cur = next;
            if cur.abs() > BIG {
                prev /= BIG;
                cur /= BIG;
                acc /= BIG;
                scale += ln_big;
            }
        }
        acc += c * (sign * cur);
        sign = -sign;
    }
    if scale < -700.0 {
        let mag = acc.norm();
        if mag == 0.0 || scale + mag.ln() < -690.0 {
            return Complex64::new(0.0, 0.0);
        }
    }
    acc * scale.exp()
}

/// Wigner function normalized to `∫ W dX dY = 1`:
///
/// ```text
/// W(α) = (2/π) Tr[ρ D(α) (−1)^{a†a} D(α)†]
/// ```
///
/// evaluated from the closed-form Fock-basis kernel
/// `⟨n|…|n+k⟩ = (−1)^n √(n!/(n+k)!) (2α*)^k e^{−2|α|²} L_n^{(k)}(4|α|²)`.
pub fn wigner(rho: &DensityMatrix, grid: &GridSpec) -> Result<WignerGrid> {
    grid.validate()?;
    let d = rho.dim();
    let mut ln_fact = Vec::with_capacity(d);
    let mut acc = 0.0;
    for k in 0..d {
        if k > 0 {
            acc += (k as f64).ln();
        }
        ln_fact.push(acc);
    }
    // Skip diagonals of ρ that are identically zero.
    let live: Vec<bool> = (0..d).map(|k| (0..d - k).any(|n| rho.get(n + k, n).norm() > 1e-300)).collect();

    let x_axis: Vec<f64> = (0..grid.nx).map(|i| grid.x(i)).collect();
    let y_axis: Vec<f64> = (0..grid.ny).map(|j| grid.y(j)).collect();
    let mut values = Vec::with_capacity(grid.nx * grid.ny);
    for &y in &y_axis {
        for &x in &x_axis {
            values.push(wigner_point(rho, Complex64::new(x, y), &ln_fact, &live));
        }
    }
    Ok(WignerGrid { spec: *grid, x_axis, y_axis, values })
}

/// Wigner function at a single phase-space point.
pub fn wigner_at(rho: &DensityMatrix, alpha: Complex64) -> f64 {
    let d = rho.dim();
    let mut ln_fact = Vec::with_capacity(d);
    let mut acc = 0.0;
    for k in 0..d {
        if k > 0 {
            acc += (k as f64).ln();
        }
        ln_fact.push(acc);
    }
    let live: Vec<bool> = (0..d).map(|k| (0..d - k).any(|n| rho.get(n + k, n).norm() > 1e-300)).collect();
    wigner_point(rho, alpha, &ln_fact, &live)
}

fn wigner_point(rho: &DensityMatrix, alpha: Complex64, ln_fact: &[f64], live: &[bool]) -> f64 {
    let d = rho.dim();
    let r2 = alpha.norm_sqr();
    let x = 4.0 * r2;
    let diag = laguerre_column(x, 0, (0..d).map(|n| rho.get(n, n)), 0.0).re;
    if r2 == 0.0 {
        return FRAC_2_PI * diag;
    }
    let u = alpha.conj() / r2.sqrt();
    let mut phase = Complex64::new(1.0, 0.0);
    let mut off = 0.0;
    for k in 1..d {
        phase *= u;
        if !live[k] {
            continue;
        }
        let col = laguerre_column(x, k, (0..d - k).map(|n| rho.get(n + k, n)), ln_fact[k]);
        off += (phase * col).re;
    }
    FRAC_2_PI * (diag + 2.0 * off)
}
