//! Flat `key = value` experiment configuration.
//!
//! One pair per line, `#` starts a comment, lists are comma separated.
//! Keys are case sensitive; see `docs/config.md` for the full list.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{Boundary, GridSpec};
use crate::krylov::KrylovConfig;
use crate::poisson::Projection;
use crate::stepper::{AuditMode, StepperConfig, StressForm};
use crate::tensor::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Accuracy1,
    Accuracy2,
    Defect,
    EnergyAudit,
    Custom,
}

impl Experiment {
    pub const ALL: [Experiment; 5] =
        [Experiment::Accuracy1, Experiment::Accuracy2, Experiment::Defect, Experiment::EnergyAudit, Experiment::Custom];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Accuracy1 => "accuracy1",
            Experiment::Accuracy2 => "accuracy2",
            Experiment::Defect => "defect",
            Experiment::EnergyAudit => "energy_audit",
            Experiment::Custom => "custom",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let norm = s.replace('-', "_");
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == norm)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

/// Initial condition families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initial {
    /// `n0 = (sin 2pi x sin 2pi y, 0)`.
    Accuracy1,
    /// `n0 = (sin 2pi x sin 2pi y, cos 2pi x cos 2pi y)`.
    Accuracy2,
    /// Regularized +1 defect at a quarter of the box.
    Defect,
}

/// Boundary condition for `Q` on wall grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QBc {
    /// `Q` held at its initial wall values.
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dim: usize,
    pub n: usize,
    pub length: f64,
    pub bc: Boundary,
    pub q_bc: QBc,
    pub initial: Initial,
    /// Defect-core regularization; `None` means one grid spacing.
    pub epsilon: Option<f64>,
    pub params: ModelParams,
    /// Time step, or the largest step of an accuracy sweep.
    pub dt: f64,
    /// Number of runs in an accuracy sweep, `dt / 2^k` for `k < levels`.
    pub levels: usize,
    /// Step sizes of the energy audit.
    pub dt_list: Vec<f64>,
    /// Steps per audit step size.
    pub steps: usize,
    pub t_end: f64,
    pub snapshots: Vec<f64>,
    pub output: PathBuf,
    pub krylov: KrylovConfig,
    pub precondition: bool,
    pub audit: AuditMode,
    pub stress: StressForm,
    pub projection: Projection,
    /// Progress log interval in steps; 0 disables.
    pub log_every: usize,
    /// Worker threads for the runs of an accuracy sweep.
    pub threads: usize,
}

impl ExperimentConfig {
    /// Defaults of the given experiment.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = ExperimentConfig {
            experiment,
            dim: 2,
            n: 128,
            length: 1.0,
            bc: Boundary::Periodic,
            q_bc: QBc::Dirichlet,
            initial: Initial::Defect,
            epsilon: None,
            params: ModelParams::default(),
            dt: 1e-3,
            levels: 6,
            dt_list: vec![1e-4, 1e-2, 0.1, 1.0],
            steps: 50,
            t_end: 1.0,
            snapshots: Vec::new(),
            output: PathBuf::from(format!("out/{}", experiment.name())),
            krylov: KrylovConfig::default(),
            precondition: true,
            audit: AuditMode::Warn,
            stress: StressForm::PressureAbsorbed,
            projection: Projection::Exact,
            log_every: 1000,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        match experiment {
            Experiment::Accuracy1 | Experiment::Accuracy2 => {
                c.bc = Boundary::Wall;
                c.initial = if experiment == Experiment::Accuracy1 { Initial::Accuracy1 } else { Initial::Accuracy2 };
                c.dt = 8e-5;
                c.t_end = 0.1;
            }
            Experiment::Defect => {
                c.t_end = 200.0;
                c.snapshots = vec![0.0, 1.0, 10.0, 20.0, 60.0, 200.0];
            }
            Experiment::EnergyAudit | Experiment::Custom => {}
        }
        c
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::uniform(self.dim, self.n, self.length, self.bc)
    }

    pub fn stepper_config(&self) -> StepperConfig {
        StepperConfig {
            krylov: self.krylov,
            audit: self.audit,
            precondition: self.precondition,
            stress: self.stress,
            projection: self.projection,
        }
    }

    /// Checks every invariant; `line` is reported for errors (0 when the
    /// config was not parsed from text).
    pub fn validate(&self) -> Result<()> {
        let err = |message: String| Err(Error::Config { line: 0, message });
        self.grid_spec().validate()?;
        self.params.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return err(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return err(format!("t_end must be > 0, got {}", self.t_end));
        }
        if let Some(&t) = self.snapshots.iter().find(|&&t| !(0.0..=self.t_end).contains(&t)) {
            return err(format!("snapshots entry {t} outside [0, {}]", self.t_end));
        }
        if let Some(&d) = self.dt_list.iter().find(|&&d| !(d > 0.0 && d.is_finite())) {
            return err(format!("dt_list entries must be > 0, got {d}"));
        }
        if matches!(self.experiment, Experiment::Accuracy1 | Experiment::Accuracy2) && self.levels < 3 {
            return err(format!("levels must be >= 3 to compute an order, got {}", self.levels));
        }
        if self.experiment == Experiment::EnergyAudit && (self.dt_list.is_empty() || self.steps == 0) {
            return err("energy_audit needs a nonempty dt_list and steps > 0".into());
        }
        if matches!(self.experiment, Experiment::Defect | Experiment::EnergyAudit) && self.bc != Boundary::Periodic {
            return err(format!("{} runs on a periodic box", self.experiment));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) {
                return err(format!("epsilon must be > 0, got {e}"));
            }
        }
        if self.krylov.tol <= 0.0 || self.krylov.max_iter == 0 || self.krylov.restart == 0 {
            return err("tol, max_iter and restart must be positive".into());
        }
        if self.threads == 0 {
            return err("threads must be >= 1".into());
        }
        Ok(())
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}` for `{key}`"))
}

fn parse_list(key: &str, v: &str) -> std::result::Result<Vec<f64>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_value(key, s.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("cannot parse `{v}` for `{key}` (expected true or false)")),
    }
}

fn apply(c: &mut ExperimentConfig, key: &str, v: &str) -> std::result::Result<(), String> {
    let p = &mut c.params;
    match key {
        "experiment" => {}
        "dim" => c.dim = parse_value(key, v)?,
        "n" => c.n = parse_value(key, v)?,
        "L" => c.length = parse_value(key, v)?,
        "bc" => {
            c.bc = match v {
                "periodic" => Boundary::Periodic,
                "wall" => Boundary::Wall,
                _ => return Err(format!("bc must be periodic or wall, got `{v}`")),
            }
        }
        "q_bc" => {
            c.q_bc = match v {
                "dirichlet" => QBc::Dirichlet,
                "neumann" => QBc::Neumann,
                _ => return Err(format!("q_bc must be dirichlet or neumann, got `{v}`")),
            }
        }
        "initial" => {
            c.initial = match v {
                "accuracy1" => Initial::Accuracy1,
                "accuracy2" => Initial::Accuracy2,
                "defect" => Initial::Defect,
                _ => return Err(format!("initial must be accuracy1, accuracy2 or defect, got `{v}`")),
            }
        }
        "epsilon" => c.epsilon = Some(parse_value(key, v)?),
        "a" => p.a = parse_value(key, v)?,
        "eta" => p.eta = parse_value(key, v)?,
        "alpha" => p.alpha = parse_value(key, v)?,
        "beta" => p.beta = parse_value(key, v)?,
        "gamma" => p.gamma = parse_value(key, v)?,
        "K" => p.k = parse_value(key, v)?,
        "M" => p.m = parse_value(key, v)?,
        "C0" => p.c0 = parse_value(key, v)?,
        "S_Q" => p.s_q = parse_value(key, v)?,
        "dt" => c.dt = parse_value(key, v)?,
        "levels" => c.levels = parse_value(key, v)?,
        "dt_list" => c.dt_list = parse_list(key, v)?,
        "steps" => c.steps = parse_value(key, v)?,
        "t_end" => c.t_end = parse_value(key, v)?,
        "snapshots" => c.snapshots = parse_list(key, v)?,
        "output" => c.output = PathBuf::from(v),
        "tol" => c.krylov.tol = parse_value(key, v)?,
        "max_iter" => c.krylov.max_iter = parse_value(key, v)?,
        "restart" => c.krylov.restart = parse_value(key, v)?,
        "precondition" => c.precondition = parse_bool(key, v)?,
        "audit" => {
            c.audit = match v {
                "warn" => AuditMode::Warn,
                "abort" => AuditMode::Abort,
                _ => return Err(format!("audit must be warn or abort, got `{v}`")),
            }
        }
        "stress" => {
            c.stress = match v {
                "pressure_absorbed" => StressForm::PressureAbsorbed,
                "model" => StressForm::Model,
                _ => return Err(format!("stress must be pressure_absorbed or model, got `{v}`")),
            }
        }
        "projection" => {
            c.projection = match v {
                "exact" => Projection::Exact,
                "laplace5" => Projection::Laplace5,
                _ => return Err(format!("projection must be exact or laplace5, got `{v}`")),
            }
        }
        "log_every" => c.log_every = parse_value(key, v)?,
        "threads" => c.threads = parse_value(key, v)?,
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

/// Parses and validates a config. Omitted keys take the defaults of the
/// chosen experiment.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(Error::Config { line, message: format!("expected `key = value`, got `{content}`") });
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(Error::Config { line, message: "empty key".into() });
        }
        if let Some(first) = seen.insert(k.clone(), line) {
            return Err(Error::Config { line, message: format!("duplicate key `{k}` (first set on line {first})") });
        }
        pairs.push((line, k, v));
    }
    let Some((exp_line, _, exp)) = pairs.iter().find(|(_, k, _)| k == "experiment") else {
        return Err(Error::Config { line: 0, message: "experiment required".into() });
    };
    let experiment: Experiment = exp.parse().map_err(|message| Error::Config { line: *exp_line, message })?;
    let mut cfg = ExperimentConfig::defaults(experiment);
    for (line, k, v) in &pairs {
        apply(&mut cfg, k, v).map_err(|message| Error::Config { line: *line, message })?;
    }
    cfg.validate().map_err(|e| {
        let (name, message) = match e {
            Error::InvalidParam { name, reason } => (name.to_string(), format!("invalid `{name}`: {reason}")),
            Error::Config { message, .. } => {
                let key = message.split_whitespace().next().unwrap_or("").to_string();
                (key, message)
            }
            other => (String::new(), other.to_string()),
        };
        Error::Config { line: seen.get(name.as_str()).copied().unwrap_or(0), message }
    })?;
    Ok(cfg)
}
