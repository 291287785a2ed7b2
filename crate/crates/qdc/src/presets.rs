//! Named parameter sets for reproducing each figure with one command. A
//! preset pins the physical parameters together with every run default
//! (initial state, step, truncation, ensemble size) so that the mode given on
//! the command line fully determines the computation.

use core::f64::consts::PI;

use serde_json::{json, Value};

pub const NAMES: [&str; 7] = ["fig1", "fig2", "fig3-regular", "fig3-chaotic", "fig4", "fig5a", "fig5b"];

/// Strobe offset used for the regular-regime Wigner snapshots.
pub const REGULAR_STROBE: f64 = 7.13;
/// Strobe offset used for the chaotic-regime section and snapshots.
pub const CHAOTIC_STROBE: f64 = 6.96;
/// Length of the time series produced by the figure presets.
pub const SERIES_T_FINAL: f64 = 40.0;
/// Strobe indices of the Wigner snapshots; all lie past the transient.
pub const WIGNER_STROBES: [u32; 3] = [20, 21, 22];

const DELTA_MOD: f64 = 5.0;

fn params(omega2: f64) -> Value {
    json!({
        "chi": 0.1,
        "delta": -15.0,
        "omega1": [27.0, 0.0],
        "omega2": [omega2, 0.0],
        "delta_mod": DELTA_MOD,
        "n_bath": 0.002,
        "gamma": 1.0,
        "dim": 300,
    })
}

pub fn strobe_times(t0: f64) -> Vec<f64> {
    WIGNER_STROBES.iter().map(|&n| t0 + (2.0 * PI / DELTA_MOD) * n as f64).collect()
}

fn base(omega2: f64, strobe_t0: f64) -> Value {
    json!({
        "params": params(omega2),
        "initial": { "state": "vacuum" },
        "t_final": SERIES_T_FINAL,
        "dt": null,
        "sample_step": 0.05,
        "transient": 20.0,
        "strobe_t0": strobe_t0,
        "n_points": 20000,
        "steps_per_period": null,
        "alpha0": [0.0, 0.0],
        "record_step": 0.01,
        "t_total": 25000.0,
        "n_traj": 3000,
        "base_seed": 1,
        "batches": 20,
        "wigner_source": "master",
        "wigner_times": strobe_times(strobe_t0),
    })
}

/// The preset document, or `None` for an unknown name.
pub fn preset(name: &str) -> Option<Value> {
    let period = 2.0 * PI / DELTA_MOD;
    let last_period = json!([SERIES_T_FINAL - period, SERIES_T_FINAL]);
    let mut v = match name {
        "fig1" | "fig3-chaotic" | "fig4" | "fig5b" => base(27.0, CHAOTIC_STROBE),
        "fig2" | "fig3-regular" | "fig5a" => base(35.0, REGULAR_STROBE),
        _ => return None,
    };
    if matches!(name, "fig5a" | "fig5b") {
        v["pn_window"] = last_period;
    }
    v["out"] = json!(name);
    Some(v)
}
