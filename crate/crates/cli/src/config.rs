//! Experiment configuration: JSON file plus command-line flags, with flags
//! taking precedence over file values.

use std::fmt;
use std::path::PathBuf;

use jetflow_core::flow::{OdeMethod, OdeSolverSpec};
use jetflow_core::scheme::{ExpansionOrder, JetBase, JetVariant};
use jetflow_core::Scheme;
use serde::Deserialize;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Raw key/value layer shared by the config file and the flag set. `None`
/// means "not specified here".
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub problem: Option<String>,
    pub scheme: Option<String>,
    pub ode: Option<String>,
    pub substeps: Option<usize>,
    pub expansion_base: Option<String>,
    pub horizon: Option<f64>,
    pub steps: Option<Vec<usize>>,
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
    pub study: Option<String>,
    pub observable: Option<String>,
    pub expectation: Option<f64>,
    pub reference: Option<String>,
    pub refine_factor: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
}

impl ConfigLayer {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {}", path.display(), e)))?;
        serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("bad config {}: {}", path.display(), e)))
    }

    /// Overlay `self` on top of `base`: values present here win.
    pub fn over(self, base: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            problem: self.problem.or(base.problem),
            scheme: self.scheme.or(base.scheme),
            ode: self.ode.or(base.ode),
            substeps: self.substeps.or(base.substeps),
            expansion_base: self.expansion_base.or(base.expansion_base),
            horizon: self.horizon.or(base.horizon),
            steps: self.steps.or(base.steps),
            n_paths: self.n_paths.or(base.n_paths),
            seed: self.seed.or(base.seed),
            study: self.study.or(base.study),
            observable: self.observable.or(base.observable),
            expectation: self.expectation.or(base.expectation),
            reference: self.reference.or(base.reference),
            refine_factor: self.refine_factor.or(base.refine_factor),
            out: self.out.or(base.out),
            format: self.format.or(base.format),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyKind {
    Strong,
    Weak,
    Drift,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Strong => "strong",
            StudyKind::Weak => "weak",
            StudyKind::Drift => "drift",
        }
    }
}

/// Scalar observable of the final state, for weak studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observable {
    /// First state component. For scalar problems this is g(x) = x.
    Identity,
    Component(usize),
}

impl Observable {
    pub fn index(self) -> usize {
        match self {
            Observable::Identity => 0,
            Observable::Component(i) => i,
        }
    }

    pub fn name(self) -> String {
        match self {
            Observable::Identity => String::from("identity"),
            Observable::Component(i) => format!("component:{}", i),
        }
    }
}

/// Where reference values come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceKind {
    /// Analytic when the problem has a closed-form solution, numeric
    /// otherwise.
    Auto,
    Analytic,
    Numeric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Fully resolved configuration for `simulate` and `convergence`.
#[derive(Debug)]
pub struct ExperimentConfig {
    pub problem: String,
    pub scheme: Scheme,
    pub horizon: f64,
    pub steps: Vec<usize>,
    pub n_paths: usize,
    pub seed: u64,
    pub study: StudyKind,
    pub observable: Observable,
    pub expectation: Option<f64>,
    pub reference: ReferenceKind,
    pub refine_factor: usize,
    pub out: PathBuf,
    pub format: OutputFormat,
}

fn parse_study(s: &str) -> Result<StudyKind, ConfigError> {
    match s {
        "strong" => Ok(StudyKind::Strong),
        "weak" => Ok(StudyKind::Weak),
        "drift" => Ok(StudyKind::Drift),
        other => err(format!(
            "unknown study '{}', expected strong, weak, or drift",
            other
        )),
    }
}

fn parse_observable(s: &str) -> Result<Observable, ConfigError> {
    if s == "identity" {
        return Ok(Observable::Identity);
    }
    if let Some(idx) = s.strip_prefix("component:") {
        return match idx.parse::<usize>() {
            Ok(i) => Ok(Observable::Component(i)),
            Err(_) => err(format!("bad component index in observable '{}'", s)),
        };
    }
    err(format!(
        "unknown observable '{}', expected identity or component:<i>",
        s
    ))
}

fn parse_reference(s: &str) -> Result<ReferenceKind, ConfigError> {
    match s {
        "auto" => Ok(ReferenceKind::Auto),
        "analytic" => Ok(ReferenceKind::Analytic),
        "numeric" => Ok(ReferenceKind::Numeric),
        other => err(format!(
            "unknown reference '{}', expected auto, analytic, or numeric",
            other
        )),
    }
}

fn parse_format(s: &str) -> Result<OutputFormat, ConfigError> {
    match s {
        "csv" => Ok(OutputFormat::Csv),
        "json" => Ok(OutputFormat::Json),
        other => err(format!("unknown format '{}', expected csv or json", other)),
    }
}

fn parse_ode(s: &str) -> Result<OdeMethod, ConfigError> {
    match s {
        "exact" => Ok(OdeMethod::Exact),
        "euler" => Ok(OdeMethod::Euler),
        "rk4" => Ok(OdeMethod::Rk4),
        "adams8" => Ok(OdeMethod::Adams8),
        other => err(format!(
            "unknown ode method '{}', expected exact, euler, rk4, or adams8",
            other
        )),
    }
}

fn parse_base(s: &str) -> Result<JetBase, ConfigError> {
    match s {
        "dt" => Ok(JetBase::Dt),
        "dw2" => Ok(JetBase::Dw2),
        other => err(format!(
            "unknown expansion base '{}', expected dt or dw2",
            other
        )),
    }
}

/// Build the scheme from its descriptor strings. `substeps` defaults to 4
/// for adams8 and 1 otherwise.
pub fn build_scheme(
    scheme: &str,
    ode: Option<&str>,
    substeps: Option<usize>,
    expansion_base: Option<&str>,
) -> Result<Scheme, ConfigError> {
    let base = parse_base(expansion_base.unwrap_or("dt"))?;
    let solver = || -> Result<OdeSolverSpec, ConfigError> {
        let method = parse_ode(ode.unwrap_or("rk4"))?;
        let n = substeps.unwrap_or(match method {
            OdeMethod::Adams8 => 4,
            _ => 1,
        });
        OdeSolverSpec::new(method, n).map_err(|e| ConfigError(format!("bad solver: {}", e)))
    };
    match scheme {
        "em" | "euler-maruyama" => Ok(Scheme::EulerMaruyama),
        "jet-dt" => Ok(Scheme::Jet {
            variant: JetVariant::DtJet,
            solver: solver()?,
        }),
        "jet-dw2" => Ok(Scheme::Jet {
            variant: JetVariant::Dw2Jet,
            solver: solver()?,
        }),
        "expand2" => Ok(Scheme::Jet {
            variant: JetVariant::Expansion {
                base,
                order: ExpansionOrder::Two,
            },
            solver: OdeSolverSpec::default_production(),
        }),
        "expand3" => Ok(Scheme::Jet {
            variant: JetVariant::Expansion {
                base,
                order: ExpansionOrder::Three,
            },
            solver: OdeSolverSpec::default_production(),
        }),
        other => err(format!(
            "unknown scheme '{}', expected em, jet-dt, jet-dw2, expand2, or expand3",
            other
        )),
    }
}

/// Parse a comma-separated list of step counts.
pub fn parse_steps(s: &str) -> Result<Vec<usize>, ConfigError> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        match part.parse::<usize>() {
            Ok(v) => out.push(v),
            Err(_) => return err(format!("bad step count '{}'", part)),
        }
    }
    if out.is_empty() {
        return err("step list is empty");
    }
    Ok(out)
}

/// Which command the config is being resolved for; sets the defaults.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    Simulate,
    Convergence,
}

impl ExperimentConfig {
    /// Resolve a merged layer into a validated configuration.
    pub fn resolve(layer: ConfigLayer, cmd: CommandKind) -> Result<Self, ConfigError> {
        let problem = match layer.problem {
            Some(p) => p,
            None => return err("no problem given; pass --problem or set it in the config file"),
        };
        let scheme = build_scheme(
            layer.scheme.as_deref().unwrap_or("jet-dt"),
            layer.ode.as_deref(),
            layer.substeps,
            layer.expansion_base.as_deref(),
        )?;
        let horizon = layer.horizon.unwrap_or(1.0);
        if !(horizon > 0.0) || !horizon.is_finite() {
            return err(format!("horizon must be positive and finite, got {}", horizon));
        }
        let steps = match layer.steps {
            Some(s) if !s.is_empty() => s,
            Some(_) => return err("step list is empty"),
            None => match cmd {
                CommandKind::Simulate => vec![100],
                CommandKind::Convergence => vec![16, 32, 64, 128, 256],
            },
        };
        if cmd == CommandKind::Simulate && steps.len() != 1 {
            return err("simulate takes a single step count");
        }
        if steps.contains(&0) {
            return err("step counts must be positive");
        }
        Ok(ExperimentConfig {
            problem,
            scheme,
            horizon,
            steps,
            n_paths: layer.n_paths.unwrap_or(2000),
            seed: layer.seed.unwrap_or(42),
            study: parse_study(layer.study.as_deref().unwrap_or("strong"))?,
            observable: parse_observable(layer.observable.as_deref().unwrap_or("identity"))?,
            expectation: layer.expectation,
            reference: parse_reference(layer.reference.as_deref().unwrap_or("auto"))?,
            refine_factor: layer.refine_factor.unwrap_or(8),
            out: layer.out.unwrap_or_else(|| PathBuf::from(".")),
            format: parse_format(layer.format.as_deref().unwrap_or("csv"))?,
        })
    }
}

/// File-name-safe form of a scheme identifier.
pub fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| if c == '/' || c == ':' { '-' } else { c })
        .collect()
}
