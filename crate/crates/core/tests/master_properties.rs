use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;
use qdc_core::master::{integrate_master, integrate_master_with, max_master_dt, MasterRun};
use qdc_core::observables::{number_stats, wigner, GridSpec};
use qdc_core::{Complex64, DensityMatrix, ModelParams};

fn small(dim: usize) -> ModelParams {
    ModelParams {
        chi: 0.1,
        delta_det: 0.0,
        omega1: Complex64::new(0.5, 0.0),
        omega2: Complex64::new(0.5, 0.0),
        delta_mod: 5.0,
        n_bath: 0.0,
        gamma: 1.0,
        dim,
    }
}

fn min_eigenvalue(rho: &DensityMatrix) -> f64 {
    let d = rho.dim();
    let m = DMatrix::from_fn(d, d, |i, j| {
        let c = rho.get(i, j);
        Complex::new(c.re, c.im)
    });
    m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn invariants_hold_at_every_sample(
        dim in 24usize..=32,
        chi in 0.0f64..0.3,
        delta in -3.0f64..3.0,
        w1 in 0.0f64..0.3,
        w2 in 0.0f64..0.3,
        phase in 0.0f64..6.3,
        n_bath in 0.0f64..0.3,
    ) {
        let p = ModelParams {
            chi,
            delta_det: delta,
            omega1: Complex64::new(w1, 0.0),
            omega2: Complex64::from_polar(w2, phase),
            delta_mod: 3.0,
            n_bath,
            gamma: 1.0,
            dim,
        };
        let times: Vec<f64> = (0..=8).map(|k| 0.5 * k as f64).collect();
        let mut run = MasterRun::new(p, 4.0, times).unwrap();
        run.rho0 = DensityMatrix::coherent(dim, Complex64::new(0.4, -0.2)).unwrap();
        let out = integrate_master(&run).unwrap();
        let d = out.diagnostics;
        prop_assert!(d.max_trace_drift_rate < 1e-8, "trace drift {}", d.max_trace_drift_rate);
        prop_assert!(d.max_hermiticity_error < 1e-10, "hermiticity {}", d.max_hermiticity_error);
        prop_assert!(d.min_diagonal >= -1e-8);
        for (t, rho) in &out.samples {
            prop_assert!((rho.trace().re - 1.0).abs() < 1e-8 && rho.trace().im.abs() < 1e-12, "t = {}", t);
            prop_assert!(rho.hermiticity_error() == 0.0);
            let ev = min_eigenvalue(rho);
            prop_assert!(ev >= -1e-7, "t = {}: min eigenvalue {}", t, ev);
        }
    }
}

#[test]
fn halving_dt_leaves_mean_number_unchanged() {
    let p = ModelParams { chi: 0.1, delta_det: -1.0, omega1: Complex64::new(1.5, 0.0), omega2: Complex64::new(1.0, 0.0), delta_mod: 2.0, n_bath: 0.01, gamma: 1.0, dim: 40 };
    let times: Vec<f64> = (1..=10).map(|k| 0.6 * k as f64).collect();
    let mut coarse = MasterRun::new(p, 6.0, times.clone()).unwrap();
    coarse.dt = max_master_dt(&p).min(4e-3);
    let mut fine = coarse.clone();
    fine.dt = coarse.dt / 2.0;
    let a = integrate_master(&coarse).unwrap();
    let b = integrate_master(&fine).unwrap();
    for ((t, ra), (_, rb)) in a.samples.iter().zip(&b.samples) {
        let na = number_stats(ra).unwrap().mean_n;
        let nb = number_stats(rb).unwrap().mean_n;
        assert!((na - nb).abs() < 1e-4 * nb.abs(), "t = {t}: {na} vs {nb}");
    }
}

#[test]
fn single_drive_relaxes_to_a_fixed_point() {
    let mut p = small(20);
    p.omega2 = Complex64::new(0.0, 0.0);
    p.n_bath = 0.01;
    let out = integrate_master(&MasterRun::new(p, 46.0, vec![45.0, 46.0]).unwrap()).unwrap();
    let diff = out.samples[0].1.max_abs_diff(&out.samples[1].1);
    assert!(diff < 1e-8, "{diff}");
}

#[test]
fn wigner_overlap_reproduces_populations_of_an_evolved_state() {
    let p = small(16);
    let out = integrate_master(&MasterRun::new(p, 3.0, vec![3.0]).unwrap()).unwrap();
    let rho = &out.samples[0].1;
    let grid = GridSpec { x_min: -7.0, x_max: 7.0, nx: 141, y_min: -7.0, y_max: 7.0, ny: 141 };
    let w = wigner(rho, &grid).unwrap();
    assert!((w.riemann_sum() - 1.0).abs() < 1e-3);
    let stats = number_stats(rho).unwrap();
    let area = grid.dx() * grid.dy();
    for n in 0..8 {
        let wn = wigner(&DensityMatrix::fock(16, n).unwrap(), &grid).unwrap();
        let overlap: f64 = w.values.iter().zip(&wn.values).map(|(a, b)| a * b).sum::<f64>() * area * std::f64::consts::PI;
        assert!((overlap - stats.p_n[n]).abs() < 2e-3, "n = {n}: {overlap} vs {}", stats.p_n[n]);
    }
}

#[test]
fn observer_sees_every_sample_in_order() {
    let times = vec![0.0, 0.3, 0.3, 1.0];
    let run = MasterRun::new(small(12), 1.0, times.clone()).unwrap();
    let mut seen = Vec::new();
    integrate_master_with(&run, |t, _| {
        seen.push(t);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, times);
}
