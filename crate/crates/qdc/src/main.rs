use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use qdc::config::{resolve, ConfigErrors, Mode};
use qdc::run::run_experiment;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Classical,
    Poincare,
    Lyapunov,
    Master,
    Qsd,
    Wigner,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Classical => Mode::Classical,
            ModeArg::Poincare => Mode::Poincare,
            ModeArg::Lyapunov => Mode::Lyapunov,
            ModeArg::Master => Mode::Master,
            ModeArg::Qsd => Mode::Qsd,
            ModeArg::Wigner => Mode::Wigner,
        }
    }
}

/// Simulator for a doubly driven dissipative Kerr oscillator.
#[derive(Debug, Parser)]
#[command(name = "qdc", version)]
struct Cli {
    /// Computational route to run.
    #[arg(value_enum)]
    mode: ModeArg,
    /// JSON configuration file; its keys override the preset.
    #[arg(long, value_name = "FILE", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Named parameter set: fig1, fig2, fig3-regular, fig3-chaotic, fig4, fig5a, fig5b.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Base seed of the trajectory ensemble.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path prefix.
    #[arg(long, value_name = "PREFIX")]
    out: Option<String>,
    /// Worker threads for ensemble and grid work (default: `QDC_WORKERS`, else
    /// all cores).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Print the fully resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

/// Optional override of the worker count when `--workers` is absent.
const WORKERS_ENV: &str = "QDC_WORKERS";

fn load(cli: &Cli) -> Result<qdc::ExperimentConfig, ConfigErrors> {
    let mut doc = match &cli.config {
        None => json!({}),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))?;
            serde_json::from_str::<Value>(&text).map_err(|e| ConfigErrors(vec![format!("{}: invalid JSON: {e}", path.display())]))?
        }
    };
    if let Value::Object(m) = &mut doc {
        if let Some(s) = cli.seed {
            m.insert("base_seed".into(), json!(s));
        }
        if let Some(o) = &cli.out {
            m.insert("out".into(), json!(o));
        }
        if let Some(w) = cli.workers {
            m.insert("workers".into(), json!(w));
        } else if let Ok(w) = std::env::var(WORKERS_ENV) {
            let n = w.trim().parse::<usize>().map_err(|_| ConfigErrors(vec![format!("{WORKERS_ENV}: expected a positive integer, got {w:?}")]))?;
            m.insert("workers".into(), json!(n));
        }
    }
    resolve(Some(cli.mode.into()), cli.preset.as_deref(), &doc)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("qdc: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.print_config {
        println!("{}", cfg.to_json_string());
        return ExitCode::SUCCESS;
    }
    match run_experiment(&cfg) {
        Ok(report) => {
            for f in &report.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qdc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
