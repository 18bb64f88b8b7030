use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stratowave::SpectralMeasure;
use stratowave_cli::{parse_measure, run, CliError, Command, ConfigError, RunConfig};

/// Picard, Feynman-Kac and chaos-expansion solvers for the Stratonovich
/// wave equation with time-independent Gaussian noise.
#[derive(Parser, Debug)]
#[command(name = "stratowave", version)]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (all cores by default). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// CSV destination; the JSON summary goes next to it as `<out>.summary.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// `fixture`, `zero`, `riesz:ALPHA`, `gaussian:MASS:BANDWIDTH` or JSON.
    #[arg(long, global = true)]
    measure: Option<String>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    eps: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    t: Option<f64>,
    /// Comma-separated coordinates.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
    #[arg(long, global = true)]
    n_paths: Option<usize>,
    #[arg(long, global = true)]
    n_realizations: Option<usize>,
    #[arg(long, global = true)]
    n_iters: Option<usize>,
    #[arg(long, global = true)]
    n_max: Option<usize>,
    #[arg(long, global = true)]
    max_jumps: Option<usize>,
    #[arg(long, global = true)]
    n_freq: Option<usize>,
    #[arg(long, global = true)]
    n_t: Option<usize>,
    #[arg(long, global = true)]
    n_x: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Run the invariant suite; exits 1 if any check fails.
    Verify {
        /// Skip the cross-method reconciliation.
        #[arg(long)]
        quick: bool,
    },
    /// Evaluate one noise realization on the spatial grid.
    Noise,
    /// Picard iterates on one noise realization.
    Picard,
    /// Feynman-Kac estimates of one realization and of the first two moments.
    Fk,
    /// Chaos moment series, or the term census with `--census N`.
    Chaos {
        #[arg(long)]
        census: Option<usize>,
    },
    /// Reconcile Picard, Feynman-Kac and chaos on the same measure.
    Compare,
}

fn build_config(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
                line: None,
                message: format!("{}: {e}", path.display()),
            })?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(d) = o.dim {
        cfg.dim = d;
        if cfg.x.len() != d {
            cfg.x.resize(d, 0.0);
        }
    }
    if let Some(m) = &o.measure {
        cfg.measure = parse_measure(m, cfg.dim)?;
    } else if o.dim.is_some() && cfg.measure == SpectralMeasure::atom_fixture() {
        // `--dim 2` alone moves the default fixture to the plane.
        cfg.measure = parse_measure("fixture", cfg.dim)?;
    }
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = o.$field.clone() { cfg.$field = v; } )* };
    }
    set!(eps, t, x, n_paths, n_realizations, n_iters, n_max, max_jumps, n_freq);
    if let Some(v) = o.n_t {
        cfg.grid.n_t = v;
    }
    if let Some(v) = o.n_x {
        cfg.grid.n_x = v;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = &cli.out {
        cfg.out_path = Some(p.display().to_string());
    }
    cfg.command = match &cli.command {
        Sub::Verify { quick } => {
            cfg.quick = *quick;
            Command::Verify
        }
        Sub::Noise => Command::Noise,
        Sub::Picard => Command::Picard,
        Sub::Fk => Command::Fk,
        Sub::Chaos { census } => {
            if census.is_some() {
                cfg.census = *census;
            }
            Command::Chaos
        }
        Sub::Compare => Command::Compare,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let cfg = build_config(cli)?;
    let out = run(&cfg, cli.threads)?;
    match &cfg.out_path {
        Some(path) => {
            std::fs::write(path, &out.csv)?;
            let summary = serde_json::to_string_pretty(&out.summary).expect("summary serializes");
            std::fs::write(format!("{path}.summary.json"), summary + "\n")?;
        }
        None => print!("{}", out.csv),
    }
    Ok(if out.failed_checks > 0 { 1 } else { 0 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STRATOWAVE_LOG", "error")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("stratowave: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
