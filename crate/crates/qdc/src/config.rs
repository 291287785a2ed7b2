//! Experiment configuration: a JSON document, optionally layered on top of a
//! named preset. Parsing never stops at the first problem; every error found
//! is reported together.

use std::fmt;

use qdc_core::observables::GridSpec;
use qdc_core::{Complex64, InitialState, ModelParams};
use serde_json::{json, Map, Value};

use crate::presets;

/// Which computational route a run dispatches to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Classical,
    Poincare,
    Lyapunov,
    Master,
    Qsd,
    Wigner,
}

impl Mode {
    pub const ALL: [Mode; 6] = [Mode::Classical, Mode::Poincare, Mode::Lyapunov, Mode::Master, Mode::Qsd, Mode::Wigner];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Classical => "classical",
            Mode::Poincare => "poincare",
            Mode::Lyapunov => "lyapunov",
            Mode::Master => "master",
            Mode::Qsd => "qsd",
            Mode::Wigner => "wigner",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the density matrix handed to the Wigner evaluator comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WignerSource {
    /// The configured initial state, evaluated once at `t = 0`.
    State,
    Master,
    Qsd,
}

impl WignerSource {
    fn name(self) -> &'static str {
        match self {
            WignerSource::State => "state",
            WignerSource::Master => "master",
            WignerSource::Qsd => "qsd",
        }
    }
}

/// Sample grid for time series.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    /// Every `step` from `step` up to `t_final` (plus `t = 0`).
    Step(f64),
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub preset: Option<String>,
    pub params: ModelParams,
    pub initial: InitialState,
    pub t_final: f64,
    /// Integration step; `None` selects the route's default.
    pub dt: Option<f64>,
    pub sampling: Sampling,
    /// Samples earlier than this are flagged as transient.
    pub transient: f64,
    /// Samples inside this closed interval also get their full `P_n` written.
    pub pn_window: Option<(f64, f64)>,
    pub dt_study: bool,
    pub strobe_t0: f64,
    pub n_points: usize,
    pub steps_per_period: Option<usize>,
    pub alpha0: Complex64,
    /// Spacing of rows in the classical path output.
    pub record_step: f64,
    pub t_total: f64,
    pub n_traj: u64,
    pub base_seed: u64,
    pub batches: usize,
    pub wigner_source: WignerSource,
    pub wigner_times: Vec<f64>,
    pub grid: GridSpec,
    pub workers: Option<usize>,
    pub out: String,
}

/// Every problem found in a configuration document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} configuration error(s)", self.0.len())?;
        for e in &self.0 {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ExperimentConfig {
    pub fn sample_times(&self) -> Vec<f64> {
        match &self.sampling {
            Sampling::Times(ts) => ts.clone(),
            Sampling::Step(h) => {
                let n = (self.t_final / h + 1e-9).floor() as usize;
                (0..=n).map(|k| k as f64 * h).collect()
            }
        }
    }

    /// Canonical JSON form; parsing it back yields an identical config.
    pub fn to_value(&self) -> Value {
        let p = &self.params;
        let initial = match self.initial {
            InitialState::Vacuum => json!({ "state": "vacuum" }),
            InitialState::Fock(n) => json!({ "state": "fock", "n": n }),
            InitialState::Coherent(a) => json!({ "state": "coherent", "alpha": [a.re, a.im] }),
        };
        let mut m = Map::new();
        m.insert("mode".into(), json!(self.mode.name()));
        if let Some(name) = &self.preset {
            m.insert("preset".into(), json!(name));
        }
        m.insert(
            "params".into(),
            json!({
                "chi": p.chi,
                "delta": p.delta_det,
                "omega1": [p.omega1.re, p.omega1.im],
                "omega2": [p.omega2.re, p.omega2.im],
                "delta_mod": p.delta_mod,
                "n_bath": p.n_bath,
                "gamma": p.gamma,
                "dim": p.dim,
            }),
        );
        m.insert("initial".into(), initial);
        m.insert("t_final".into(), json!(self.t_final));
        m.insert("dt".into(), json!(self.dt));
        match &self.sampling {
            Sampling::Step(h) => m.insert("sample_step".into(), json!(h)),
            Sampling::Times(ts) => m.insert("sample_times".into(), json!(ts)),
        };
        m.insert("transient".into(), json!(self.transient));
        m.insert("pn_window".into(), self.pn_window.map_or(Value::Null, |(a, b)| json!([a, b])));
        m.insert("dt_study".into(), json!(self.dt_study));
        m.insert("strobe_t0".into(), json!(self.strobe_t0));
        m.insert("n_points".into(), json!(self.n_points));
        m.insert("steps_per_period".into(), json!(self.steps_per_period));
        m.insert("alpha0".into(), json!([self.alpha0.re, self.alpha0.im]));
        m.insert("record_step".into(), json!(self.record_step));
        m.insert("t_total".into(), json!(self.t_total));
        m.insert("n_traj".into(), json!(self.n_traj));
        m.insert("base_seed".into(), json!(self.base_seed));
        m.insert("batches".into(), json!(self.batches));
        m.insert("wigner_source".into(), json!(self.wigner_source.name()));
        m.insert("wigner_times".into(), json!(self.wigner_times));
        let g = &self.grid;
        m.insert(
            "grid".into(),
            json!({ "x_min": g.x_min, "x_max": g.x_max, "nx": g.nx, "y_min": g.y_min, "y_max": g.y_max, "ny": g.ny }),
        );
        m.insert("workers".into(), json!(self.workers));
        m.insert("out".into(), json!(self.out));
        Value::Object(m)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("config serializes")
    }
}

const TOP_KEYS: &[&str] = &[
    "mode", "preset", "params", "initial", "t_final", "dt", "sample_step", "sample_times", "transient", "pn_window",
    "dt_study", "strobe_t0", "n_points", "steps_per_period", "alpha0", "record_step", "t_total", "n_traj",
    "base_seed", "batches", "wigner_source", "wigner_times", "grid", "workers", "out",
];
const PARAM_KEYS: &[&str] = &["chi", "delta", "omega1", "omega2", "delta_mod", "n_bath", "gamma", "dim"];
const INITIAL_KEYS: &[&str] = &["state", "n", "alpha"];
const GRID_KEYS: &[&str] = &["x_min", "x_max", "nx", "y_min", "y_max", "ny"];

/// Recursively overlays `top` onto `base`; objects merge key by key, anything
/// else replaces.
pub fn merge(base: &mut Value, top: &Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, t) => *b = t.clone(),
    }
}

/// Parses a configuration document. The preset, if any, comes from the
/// `preset` key of the document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ConfigErrors(vec![format!("invalid JSON: {e}")]))?;
    resolve(None, None, &doc)
}

/// Builds a config from an optional mode and preset forced by the caller and
/// a document whose keys override the preset.
pub fn resolve(mode: Option<Mode>, preset: Option<&str>, doc: &Value) -> Result<ExperimentConfig, ConfigErrors> {
    let mut errors = Vec::new();
    if !doc.is_object() {
        return Err(ConfigErrors(vec!["configuration must be a JSON object".into()]));
    }
    let doc_preset = doc.get("preset").and_then(Value::as_str);
    if doc.get("preset").is_some_and(|v| !v.is_string() && !v.is_null()) {
        errors.push("preset: expected a string".into());
    }
    let preset_name = match (preset, doc_preset) {
        (Some(a), Some(b)) if a != b => {
            errors.push(format!("preset: command line asks for '{a}' but the file names '{b}'"));
            Some(a)
        }
        (Some(a), _) => Some(a),
        (None, b) => b,
    };
    let mut merged = match preset_name {
        Some(name) => match presets::preset(name) {
            Some(v) => v,
            None => {
                errors.push(format!("preset: unknown preset '{name}' (known: {})", presets::NAMES.join(", ")));
                json!({})
            }
        },
        None => json!({}),
    };
    merge(&mut merged, doc);
    // The two sampling keys are alternatives; the file's choice replaces the preset's.
    if let Value::Object(m) = &mut merged {
        for (mine, other) in [("sample_times", "sample_step"), ("sample_step", "sample_times")] {
            if doc.get(mine).is_some() && doc.get(other).is_none() {
                m.remove(other);
            }
        }
    }
    if let Some(m) = mode {
        if let Some(s) = doc.get("mode").and_then(Value::as_str) {
            if s != m.name() {
                errors.push(format!("mode: command line asks for '{m}' but the file names '{s}'"));
            }
        }
        merged["mode"] = json!(m.name());
    }
    if let Some(name) = preset_name {
        merged["preset"] = json!(name);
    }
    let mut r = Reader { errors };
    let cfg = r.config(&merged);
    match cfg {
        Some(c) if r.errors.is_empty() => Ok(c),
        _ => Err(ConfigErrors(r.errors)),
    }
}

struct Reader {
    errors: Vec<String>,
}

impl Reader {
    fn err(&mut self, key: &str, msg: impl fmt::Display) {
        self.errors.push(format!("{key}: {msg}"));
    }

    fn unknown_keys(&mut self, prefix: &str, obj: &Map<String, Value>, allowed: &[&str]) {
        for k in obj.keys() {
            if !allowed.contains(&k.as_str()) {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                self.err(&path, "unknown key");
            }
        }
    }

    fn get<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
        obj.get(key).filter(|v| !v.is_null())
    }

    fn f64_at(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<f64> {
        match Self::get(obj, key) {
            None => None,
            Some(v) => match v.as_f64() {
                Some(x) if x.is_finite() => Some(x),
                _ => {
                    self.err(path, "expected a finite number");
                    None
                }
            },
        }
    }

    fn req_f64(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> f64 {
        match Self::get(obj, key) {
            None => {
                self.err(path, "missing required key");
                f64::NAN
            }
            Some(_) => self.f64_at(obj, key, path).unwrap_or(f64::NAN),
        }
    }

    fn opt_f64(&mut self, obj: &Map<String, Value>, key: &str, default: f64) -> f64 {
        self.f64_at(obj, key, key).unwrap_or(default)
    }

    fn u64_at(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<u64> {
        match Self::get(obj, key) {
            None => None,
            Some(v) => match v.as_u64() {
                Some(x) => Some(x),
                None => {
                    self.err(path, "expected a non-negative integer");
                    None
                }
            },
        }
    }

    fn complex_at(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<Complex64> {
        let v = Self::get(obj, key)?;
        if let Some(x) = v.as_f64() {
            return Some(Complex64::new(x, 0.0));
        }
        if let Some(a) = v.as_array() {
            if let [re, im] = a.as_slice() {
                if let (Some(re), Some(im)) = (re.as_f64(), im.as_f64()) {
                    if re.is_finite() && im.is_finite() {
                        return Some(Complex64::new(re, im));
                    }
                }
            }
        }
        self.err(path, "expected a number or a [re, im] pair");
        None
    }

    fn f64_list(&mut self, v: &Value, path: &str) -> Option<Vec<f64>> {
        let Some(a) = v.as_array() else {
            self.err(path, "expected an array of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(a.len());
        for x in a {
            match x.as_f64() {
                Some(x) if x.is_finite() => out.push(x),
                _ => {
                    self.err(path, "expected an array of finite numbers");
                    return None;
                }
            }
        }
        Some(out)
    }

    fn object<'a>(&mut self, v: Option<&'a Value>, path: &str) -> Option<&'a Map<String, Value>> {
        match v {
            None | Some(Value::Null) => None,
            Some(Value::Object(m)) => Some(m),
            Some(_) => {
                self.err(path, "expected an object");
                None
            }
        }
    }

    fn config(&mut self, doc: &Value) -> Option<ExperimentConfig> {
        let top = doc.as_object()?;
        self.unknown_keys("", top, TOP_KEYS);

        let mode = match Self::get(top, "mode") {
            None => {
                self.err("mode", "missing required key");
                None
            }
            Some(v) => match v.as_str().and_then(Mode::from_name) {
                Some(m) => Some(m),
                None => {
                    let names: Vec<_> = Mode::ALL.iter().map(|m| m.name()).collect();
                    self.err("mode", format!("unknown mode {v} (expected one of {})", names.join(", ")));
                    None
                }
            },
        };
        let preset = Self::get(top, "preset").and_then(Value::as_str).map(str::to_owned);

        let params = self.params(top);
        let initial = self.initial(top);

        let t_final = match mode {
            Some(Mode::Master | Mode::Qsd | Mode::Classical) => self.req_f64(top, "t_final", "t_final"),
            _ => self.opt_f64(top, "t_final", 0.0),
        };
        if !(t_final >= 0.0) && !t_final.is_nan() {
            self.err("t_final", "must be non-negative");
        }
        let dt = self.f64_at(top, "dt", "dt");
        if dt.is_some_and(|h| h <= 0.0) {
            self.err("dt", "must be positive");
        }

        let sampling = match (Self::get(top, "sample_step"), Self::get(top, "sample_times")) {
            (Some(_), Some(_)) => {
                self.err("sample_times", "give either sample_step or sample_times, not both");
                Sampling::Step(1.0)
            }
            (Some(_), None) => {
                let h = self.f64_at(top, "sample_step", "sample_step").unwrap_or(1.0);
                if !(h > 0.0) {
                    self.err("sample_step", "must be positive");
                }
                Sampling::Step(h)
            }
            (None, Some(v)) => {
                let ts = self.f64_list(v, "sample_times").unwrap_or_default();
                if ts.windows(2).any(|w| w[1] < w[0]) {
                    self.err("sample_times", "must be sorted in increasing order");
                }
                if ts.iter().any(|&t| t < 0.0 || (t_final.is_finite() && t > t_final)) {
                    self.err("sample_times", "must lie in [0, t_final]");
                }
                Sampling::Times(ts)
            }
            (None, None) => Sampling::Step(1.0),
        };

        let transient = self.opt_f64(top, "transient", 20.0);
        let pn_window = match Self::get(top, "pn_window") {
            None => None,
            Some(v) => match self.f64_list(v, "pn_window").as_deref() {
                Some(&[a, b]) if a <= b => Some((a, b)),
                Some(_) => {
                    self.err("pn_window", "expected [t_start, t_end] with t_start <= t_end");
                    None
                }
                None => None,
            },
        };
        let dt_study = match Self::get(top, "dt_study") {
            None => false,
            Some(Value::Bool(b)) => *b,
            Some(_) => {
                self.err("dt_study", "expected true or false");
                false
            }
        };

        let strobe_t0 = self.opt_f64(top, "strobe_t0", 0.0);
        if strobe_t0 < 0.0 {
            self.err("strobe_t0", "must be non-negative");
        }
        let n_points = self.u64_at(top, "n_points", "n_points").unwrap_or(20000) as usize;
        if n_points == 0 {
            self.err("n_points", "must be at least 1");
        }
        let steps_per_period = self.u64_at(top, "steps_per_period", "steps_per_period").map(|s| s as usize);
        if steps_per_period == Some(0) {
            self.err("steps_per_period", "must be at least 1");
        }
        let alpha0 = self.complex_at(top, "alpha0", "alpha0").unwrap_or_default();
        let record_step = self.opt_f64(top, "record_step", 0.01);
        if !(record_step > 0.0) {
            self.err("record_step", "must be positive");
        }
        let t_total = self.opt_f64(top, "t_total", 25000.0);
        if !(t_total >= 500.0) {
            self.err("t_total", "must be at least 500");
        }
        let n_traj = self.u64_at(top, "n_traj", "n_traj").unwrap_or(3000);
        if n_traj == 0 {
            self.err("n_traj", "must be at least 1");
        }
        let base_seed = self.u64_at(top, "base_seed", "base_seed").unwrap_or(1);
        let batches = self.u64_at(top, "batches", "batches").unwrap_or(20) as usize;
        if batches == 0 {
            self.err("batches", "must be at least 1");
        }

        let wigner_source = match Self::get(top, "wigner_source").map(|v| v.as_str()) {
            None | Some(Some("state")) => WignerSource::State,
            Some(Some("master")) => WignerSource::Master,
            Some(Some("qsd")) => WignerSource::Qsd,
            Some(_) => {
                self.err("wigner_source", "expected one of state, master, qsd");
                WignerSource::State
            }
        };
        let wigner_times = match Self::get(top, "wigner_times") {
            None => Vec::new(),
            Some(v) => self.f64_list(v, "wigner_times").unwrap_or_default(),
        };
        if wigner_times.windows(2).any(|w| w[1] < w[0]) || wigner_times.iter().any(|&t| t < 0.0) {
            self.err("wigner_times", "must be non-negative and sorted");
        }
        if mode == Some(Mode::Wigner) && wigner_source != WignerSource::State && wigner_times.is_empty() {
            self.err("wigner_times", "required when wigner_source is master or qsd");
        }
        let grid = self.grid(top);

        let workers = self.u64_at(top, "workers", "workers").map(|w| w as usize);
        if workers == Some(0) {
            self.err("workers", "must be at least 1");
        }
        let out = match Self::get(top, "out") {
            None => "qdc-out".to_owned(),
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(_) => {
                self.err("out", "expected a non-empty string");
                String::new()
            }
        };

        Some(ExperimentConfig {
            mode: mode?,
            preset,
            params: params?,
            initial: initial?,
            t_final,
            dt,
            sampling,
            transient,
            pn_window,
            dt_study,
            strobe_t0,
            n_points,
            steps_per_period,
            alpha0,
            record_step,
            t_total,
            n_traj,
            base_seed,
            batches,
            wigner_source,
            wigner_times,
            grid,
            workers,
            out,
        })
    }

    fn params(&mut self, top: &Map<String, Value>) -> Option<ModelParams> {
        let Some(p) = self.object(top.get("params"), "params") else {
            if top.get("params").is_none_or(Value::is_null) {
                self.err("params", "missing required key");
            }
            return None;
        };
        self.unknown_keys("params", p, PARAM_KEYS);
        let chi = self.req_f64(p, "chi", "params.chi");
        let delta_det = self.req_f64(p, "delta", "params.delta");
        let omega1 = match Self::get(p, "omega1") {
            None => {
                self.err("params.omega1", "missing required key");
                None
            }
            Some(_) => self.complex_at(p, "omega1", "params.omega1"),
        };
        let omega2 = self.complex_at(p, "omega2", "params.omega2").unwrap_or_default();
        let delta_mod = self.req_f64(p, "delta_mod", "params.delta_mod");
        let n_bath = self.f64_at(p, "n_bath", "params.n_bath").unwrap_or(0.0);
        if n_bath < 0.0 {
            self.err("params.n_bath", "must be non-negative");
        }
        let gamma = self.f64_at(p, "gamma", "params.gamma").unwrap_or(1.0);
        if !(gamma > 0.0) {
            self.err("params.gamma", "must be positive");
        }
        let dim = self.u64_at(p, "dim", "params.dim").unwrap_or(300) as usize;
        if dim < 2 {
            self.err("params.dim", format!("invalid dimension {dim} (need at least 2)"));
        }
        let omega1 = omega1?;
        if chi.is_nan() || delta_det.is_nan() || delta_mod.is_nan() {
            return None;
        }
        Some(ModelParams { chi, delta_det, omega1, omega2, delta_mod, n_bath, gamma, dim })
    }

    fn initial(&mut self, top: &Map<String, Value>) -> Option<InitialState> {
        let Some(obj) = self.object(top.get("initial"), "initial") else {
            return if top.get("initial").is_none_or(Value::is_null) { Some(InitialState::Vacuum) } else { None };
        };
        self.unknown_keys("initial", obj, INITIAL_KEYS);
        match Self::get(obj, "state").and_then(Value::as_str) {
            None | Some("vacuum") => Some(InitialState::Vacuum),
            Some("fock") => match self.u64_at(obj, "n", "initial.n") {
                Some(n) => Some(InitialState::Fock(n as usize)),
                None => {
                    if Self::get(obj, "n").is_none() {
                        self.err("initial.n", "missing required key");
                    }
                    None
                }
            },
            Some("coherent") => match Self::get(obj, "alpha") {
                None => {
                    self.err("initial.alpha", "missing required key");
                    None
                }
                Some(_) => self.complex_at(obj, "alpha", "initial.alpha").map(InitialState::Coherent),
            },
            Some(other) => {
                self.err("initial.state", format!("unknown state '{other}' (expected vacuum, fock, coherent)"));
                None
            }
        }
    }

    fn grid(&mut self, top: &Map<String, Value>) -> GridSpec {
        let d = GridSpec::default();
        let Some(g) = self.object(top.get("grid"), "grid") else {
            return d;
        };
        self.unknown_keys("grid", g, GRID_KEYS);
        let spec = GridSpec {
            x_min: self.f64_at(g, "x_min", "grid.x_min").unwrap_or(d.x_min),
            x_max: self.f64_at(g, "x_max", "grid.x_max").unwrap_or(d.x_max),
            nx: self.u64_at(g, "nx", "grid.nx").map_or(d.nx, |n| n as usize),
            y_min: self.f64_at(g, "y_min", "grid.y_min").unwrap_or(d.y_min),
            y_max: self.f64_at(g, "y_max", "grid.y_max").unwrap_or(d.y_max),
            ny: self.u64_at(g, "ny", "grid.ny").map_or(d.ny, |n| n as usize),
        };
        if spec.validate().is_err() {
            self.err("grid", "needs nx, ny >= 2 and increasing bounds");
        }
        spec
    }
}
