//! Command-line front end: `sqjcm <bn|revival|evolve|validate|sweep|run>`.

pub mod config;
pub mod output;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

pub use config::{Command, Overrides, RawConfig, RunConfig};
pub use run::{execute, RunOutcome};

use crate::dynamics::HamiltonianForm;
use crate::error::{Error, Result};
use crate::validate::{Mutation, Suite};

#[derive(Debug, Parser)]
#[command(name = "sqjcm", version, about = "Collapse and revival with squeezed coherent photons")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Expansion coefficients of the initial field (bn.csv).
    Bn(CommonArgs),
    /// Ground-state probability from the closed-form series (p_scoh.csv, p_coh.csv).
    Revival(CommonArgs),
    /// Ground-state probability by direct integration (p_evolve.csv).
    Evolve(CommonArgs),
    /// Invariant suite with a JSON report (validation.json).
    Validate(CommonArgs),
    /// Runs the sweep command over the cartesian product of sweep_axes.
    Sweep(CommonArgs),
    /// Runs the command named in the configuration file.
    Run(CommonArgs),
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep points evaluated concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    r: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    phi: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    chi: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    #[arg(long = "t-max", allow_negative_numbers = true)]
    t_max: Option<f64>,
    #[arg(long = "t-steps")]
    t_steps: Option<usize>,
    #[arg(long = "tail-target")]
    tail_target: Option<f64>,
    #[arg(long)]
    retained: Option<usize>,
    #[arg(long)]
    buffer: Option<usize>,
    /// Validation suite: full or smoke.
    #[arg(long, value_parser = parse_enum::<Suite>)]
    suite: Option<Suite>,
    /// Also write the unsqueezed coherent-field curve (revival).
    #[arg(long = "compare-jcm")]
    compare_jcm: bool,
    /// Hamiltonian for evolve: full or ultrastrong.
    #[arg(long, value_parser = parse_enum::<HamiltonianForm>)]
    hamiltonian: Option<HamiltonianForm>,
    /// Use fixed-step RK4 with this step in λt instead of the Chebyshev propagator.
    #[arg(long = "rk4-dt")]
    rk4_dt: Option<f64>,
    /// Command run at each sweep point (default revival).
    #[arg(long = "sweep-command", value_parser = parse_enum::<Command>)]
    sweep_command: Option<Command>,
    /// Injects a known defect into the validation suite.
    #[arg(long = "inject-mutation", hide = true, value_parser = parse_enum::<Mutation>)]
    inject_mutation: Option<Mutation>,
}

impl CommonArgs {
    fn overrides(&self, command: Option<Command>) -> Overrides {
        Overrides {
            command,
            a: self.a,
            theta: self.theta,
            r: self.r,
            phi: self.phi,
            b: self.b,
            chi: self.chi,
            lambda: self.lambda,
            delta: self.delta,
            t_max: self.t_max,
            t_steps: self.t_steps,
            tail_target: self.tail_target,
            retained: self.retained,
            buffer: self.buffer,
            output_dir: self.out.clone(),
            emit_svg: self.svg,
            suite: self.suite,
            compare_jcm: self.compare_jcm,
            hamiltonian: self.hamiltonian,
            rk4_dt: self.rk4_dt,
            sweep_command: self.sweep_command,
            jobs: self.jobs,
        }
    }
}

/// Builds the effective configuration from parsed arguments.
fn configure(cli: Cli) -> Result<RunConfig> {
    let (args, command) = match cli.command {
        Sub::Bn(a) => (a, Some(Command::Bn)),
        Sub::Revival(a) => (a, Some(Command::Revival)),
        Sub::Evolve(a) => (a, Some(Command::Evolve)),
        Sub::Validate(a) => (a, Some(Command::Validate)),
        Sub::Sweep(a) => (a, Some(Command::Sweep)),
        Sub::Run(a) => (a, None),
    };
    if command.is_none() && args.config.is_none() {
        return Err(Error::config("run: --config is required"));
    }
    let raw = match &args.config {
        Some(path) => config::read_config_file(path)?,
        None => RawConfig::default(),
    };
    let mut cfg = config::resolve(raw, &args.overrides(command))?;
    cfg.mutation = args.inject_mutation;
    Ok(cfg)
}

/// Parses `args` (including the program name), runs and returns the process
/// exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cfg = match configure(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match execute(&cfg) {
        Ok(outcome) => {
            if let Some(err) = &outcome.manifest.status.error {
                eprintln!("error: {err}");
            }
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
