//! Run configuration: strict JSON file format, command-line overrides and
//! validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::HamiltonianForm;
use crate::error::{Error, Result};
use crate::fock::TruncationSpec;
use crate::states::{ModelParams, RawParams, DEFAULT_TAIL_TARGET};
use crate::validate::{Mutation, Suite};

/// Largest number of grid points a sweep may expand to.
pub const MAX_SWEEP_POINTS: usize = 100_000;

/// Names of the parameters a sweep axis may vary.
pub const PARAM_FIELDS: [&str; 8] = ["a", "theta", "r", "phi", "b", "chi", "lambda", "delta"];

/// Subcommand selected for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Bn,
    Revival,
    Evolve,
    Validate,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Bn => "bn",
            Command::Revival => "revival",
            Command::Evolve => "evolve",
            Command::Validate => "validate",
            Command::Sweep => "sweep",
        }
    }
}

/// One sweep dimension: a parameter name and the values it takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub field: String,
    pub values: Vec<f64>,
}

/// Configuration file contents before defaults and overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub command: Option<Command>,
    pub params: Option<RawParams>,
    pub t_max: Option<f64>,
    pub t_steps: Option<usize>,
    pub tail_target: Option<f64>,
    pub truncation: Option<RawTruncationFields>,
    pub output_dir: Option<PathBuf>,
    pub emit_svg: Option<bool>,
    pub sweep_axes: Option<Vec<SweepAxis>>,
    pub sweep_command: Option<Command>,
    pub suite: Option<Suite>,
    pub compare_jcm: Option<bool>,
    pub hamiltonian: Option<HamiltonianForm>,
    pub rk4_dt: Option<f64>,
    pub jobs: Option<usize>,
}

/// `truncation` object of the configuration file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTruncationFields {
    pub retained: Option<usize>,
    pub buffer: Option<usize>,
}

/// Values given on the command line; each one replaces the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub command: Option<Command>,
    pub a: Option<f64>,
    pub theta: Option<f64>,
    pub r: Option<f64>,
    pub phi: Option<f64>,
    pub b: Option<f64>,
    pub chi: Option<f64>,
    pub lambda: Option<f64>,
    pub delta: Option<f64>,
    pub t_max: Option<f64>,
    pub t_steps: Option<usize>,
    pub tail_target: Option<f64>,
    pub retained: Option<usize>,
    pub buffer: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub emit_svg: bool,
    pub suite: Option<Suite>,
    pub compare_jcm: bool,
    pub hamiltonian: Option<HamiltonianForm>,
    pub rk4_dt: Option<f64>,
    pub sweep_command: Option<Command>,
    pub jobs: Option<usize>,
}

/// Fully resolved and validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub params: ModelParams,
    pub t_max: f64,
    pub t_steps: usize,
    pub tail_target: f64,
    pub truncation: TruncationSpec,
    pub output_dir: PathBuf,
    pub emit_svg: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_axes: Option<Vec<SweepAxis>>,
    pub sweep_command: Command,
    pub suite: Suite,
    pub compare_jcm: bool,
    pub hamiltonian: HamiltonianForm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rk4_dt: Option<f64>,
    /// Sweep points evaluated concurrently.
    pub jobs: usize,
    /// Deliberate defect for exercising the validation suite; never read
    /// from a configuration file.
    #[serde(skip)]
    pub mutation: Option<Mutation>,
}

/// Reads and parses a configuration file.
pub fn read_config_file(path: &Path) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Parses configuration JSON; unknown keys are rejected by name.
pub fn parse_config_str(text: &str) -> Result<RawConfig> {
    serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(format!("{name} must be a finite number > 0, got {v}")))
    }
}

/// Combines file values, command-line overrides and defaults.
pub fn resolve(raw: RawConfig, over: &Overrides) -> Result<RunConfig> {
    let command = over
        .command
        .or(raw.command)
        .ok_or_else(|| Error::config("command: missing (give a subcommand or a \"command\" key)"))?;

    let mut p = raw.params.unwrap_or_default();
    let fields: [(&mut f64, Option<f64>); 8] = [
        (&mut p.a, over.a),
        (&mut p.theta, over.theta),
        (&mut p.r, over.r),
        (&mut p.phi, over.phi),
        (&mut p.b, over.b),
        (&mut p.chi, over.chi),
        (&mut p.lambda, over.lambda),
        (&mut p.delta, over.delta),
    ];
    for (slot, value) in fields {
        if let Some(v) = value {
            *slot = v;
        }
    }
    let params = ModelParams::try_from(p).map_err(|e| Error::config(format!("params: {e}")))?;

    let t_max = positive("t_max", over.t_max.or(raw.t_max).unwrap_or(30.0))?;
    let t_steps = over.t_steps.or(raw.t_steps).unwrap_or(3001);
    if t_steps < 2 {
        return Err(Error::config(format!("t_steps must be >= 2, got {t_steps}")));
    }
    let tail_target = positive("tail_target", over.tail_target.or(raw.tail_target).unwrap_or(DEFAULT_TAIL_TARGET))?;
    if tail_target > 1e-3 {
        return Err(Error::config(format!("tail_target must be <= 1e-3, got {tail_target}")));
    }

    let file_trunc = raw.truncation.unwrap_or_default();
    let retained = over.retained.or(file_trunc.retained);
    let buffer = over.buffer.or(file_trunc.buffer);
    let truncation = match (retained, buffer) {
        (None, None) => Ok(TruncationSpec::default()),
        (Some(n), None) => TruncationSpec::with_retained(n),
        (n, Some(nb)) => TruncationSpec::new(n.unwrap_or(TruncationSpec::default().retained()), nb),
    }
    .map_err(|e| Error::config(format!("truncation: {e}")))?;

    let rk4_dt = over.rk4_dt.or(raw.rk4_dt).map(|dt| positive("rk4_dt", dt)).transpose()?;

    let jobs = over.jobs.or(raw.jobs).unwrap_or(1);
    if jobs == 0 {
        return Err(Error::config("jobs must be >= 1"));
    }

    let sweep_axes = raw.sweep_axes;
    if let Some(axes) = &sweep_axes {
        validate_axes(axes)?;
    }
    let sweep_command = over.sweep_command.or(raw.sweep_command).unwrap_or(Command::Revival);
    if matches!(sweep_command, Command::Sweep) {
        return Err(Error::config("sweep_command: a sweep cannot run nested sweeps"));
    }
    if command == Command::Sweep && sweep_axes.as_ref().is_none_or(|a| a.is_empty()) {
        return Err(Error::config("sweep_axes: a sweep needs at least one axis"));
    }

    Ok(RunConfig {
        command,
        params,
        t_max,
        t_steps,
        tail_target,
        truncation,
        output_dir: over.output_dir.clone().or(raw.output_dir).unwrap_or_else(|| PathBuf::from("out")),
        emit_svg: over.emit_svg || raw.emit_svg.unwrap_or(false),
        sweep_axes,
        sweep_command,
        suite: over.suite.or(raw.suite).unwrap_or_default(),
        compare_jcm: over.compare_jcm || raw.compare_jcm.unwrap_or(false),
        hamiltonian: over.hamiltonian.or(raw.hamiltonian).unwrap_or_default(),
        rk4_dt,
        jobs,
        mutation: None,
    })
}

fn validate_axes(axes: &[SweepAxis]) -> Result<()> {
    let mut points = 1usize;
    for (i, axis) in axes.iter().enumerate() {
        if !PARAM_FIELDS.contains(&axis.field.as_str()) {
            return Err(Error::config(format!(
                "sweep_axes[{i}].field: unknown parameter \"{}\" (expected one of {})",
                axis.field,
                PARAM_FIELDS.join(", ")
            )));
        }
        if axes[..i].iter().any(|a| a.field == axis.field) {
            return Err(Error::config(format!("sweep_axes[{i}].field: \"{}\" repeated", axis.field)));
        }
        if axis.values.is_empty() {
            return Err(Error::config(format!("sweep_axes[{i}].values: empty")));
        }
        if let Some(v) = axis.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::config(format!("sweep_axes[{i}].values: non-finite value {v}")));
        }
        points = points.saturating_mul(axis.values.len());
    }
    if points > MAX_SWEEP_POINTS {
        return Err(Error::config(format!(
            "sweep_axes: {points} grid points exceed the limit of {MAX_SWEEP_POINTS}"
        )));
    }
    Ok(())
}

impl RunConfig {
    /// Copy of `self` with one parameter replaced.
    pub fn with_param(&self, field: &str, value: f64) -> Result<RunConfig> {
        let mut raw = RawParams::from(self.params);
        let slot = match field {
            "a" => &mut raw.a,
            "theta" => &mut raw.theta,
            "r" => &mut raw.r,
            "phi" => &mut raw.phi,
            "b" => &mut raw.b,
            "chi" => &mut raw.chi,
            "lambda" => &mut raw.lambda,
            "delta" => &mut raw.delta,
            other => return Err(Error::config(format!("unknown parameter \"{other}\""))),
        };
        *slot = value;
        let mut out = self.clone();
        out.params = ModelParams::try_from(raw)?;
        Ok(out)
    }

    /// Evenly spaced `λt` grid.
    pub fn time_grid(&self) -> Result<Vec<f64>> {
        crate::dynamics::uniform_grid(self.t_max, self.t_steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let raw = parse_config_str(r#"{"command":"revival","params":{"b":2},"t_max":30,"t_steps":3000}"#).unwrap();
        let cfg = resolve(raw, &Overrides::default()).unwrap();
        assert_eq!(cfg.command, Command::Revival);
        assert_eq!(cfg.params.b(), 2.0);
        assert_eq!((cfg.params.a(), cfg.params.r(), cfg.params.lambda(), cfg.params.delta()), (0.0, 0.0, 1.0, 0.0));
        assert_eq!(cfg.t_steps, 3000);
        assert_eq!(cfg.truncation, TruncationSpec::default());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_config_str(r#"{"command":"bn","betta":2}"#).unwrap_err();
        assert!(err.to_string().contains("betta"), "{err}");
        let err = parse_config_str(r#"{"command":"bn","params":{"betta":2}}"#).unwrap_err();
        assert!(err.to_string().contains("betta"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn flags_override_file() {
        let raw = parse_config_str(r#"{"command":"revival","params":{"b":2}}"#).unwrap();
        let over = Overrides {
            b: Some(5.0),
            ..Overrides::default()
        };
        assert_eq!(resolve(raw, &over).unwrap().params.b(), 5.0);
    }

    #[test]
    fn invalid_values_name_their_field() {
        let raw = parse_config_str(r#"{"command":"revival","t_steps":1}"#).unwrap();
        assert!(resolve(raw, &Overrides::default()).unwrap_err().to_string().contains("t_steps"));
        let raw = parse_config_str(r#"{"command":"revival","t_max":-1}"#).unwrap();
        assert!(resolve(raw, &Overrides::default()).unwrap_err().to_string().contains("t_max"));
        let raw = parse_config_str(r#"{"command":"revival","params":{"b":-1}}"#).unwrap();
        assert!(resolve(raw, &Overrides::default()).unwrap_err().to_string().contains("params"));
        let raw = parse_config_str(r#"{"command":"sweep","sweep_axes":[{"field":"q","values":[1]}]}"#).unwrap();
        assert!(resolve(raw, &Overrides::default()).unwrap_err().to_string().contains("sweep_axes[0].field"));
    }

    #[test]
    fn sweep_needs_axes() {
        let raw = parse_config_str(r#"{"command":"sweep","sweep_axes":[]}"#).unwrap();
        let err = resolve(raw, &Overrides::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let raw = parse_config_str(r#"{"command":"sweep"}"#).unwrap();
        assert!(resolve(raw, &Overrides::default()).is_err());
    }

    #[test]
    fn sweep_point_limit() {
        let axis = |f: &str| SweepAxis {
            field: f.into(),
            values: (0..400).map(f64::from).collect(),
        };
        assert!(validate_axes(&[axis("a"), axis("b")]).is_err());
        assert!(validate_axes(&[axis("a")]).is_ok());
    }
}
