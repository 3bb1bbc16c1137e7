//! Run configuration: JSON ingestion, defaults and validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use peaklab::geometry::MAX_GRID_DIM;
use peaklab::leastenergy::NonlinearOptions;
use peaklab::radial::MAX_EXPONENT;
use peaklab::{DomainSpec64, LinearSolveOptions, Preconditioner};

/// Rejected configuration, with the offending field and its line when known.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("{}", self.render())]
pub struct ConfigError {
    pub field: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn render(&self) -> String {
        let mut s = String::from("config error");
        if let Some(l) = self.line {
            s.push_str(&format!(" at line {l}"));
            if let Some(c) = self.column {
                s.push_str(&format!(", column {c}"));
            }
        }
        if let Some(f) = &self.field {
            s.push_str(&format!(" in field `{f}`"));
        }
        s.push_str(": ");
        s.push_str(&self.message);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Solve,
    Sweep,
    Green,
    Robin,
    Pohozaev,
    Concentration,
    FullReport,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Green => "green",
            ExperimentKind::Robin => "robin",
            ExperimentKind::Pohozaev => "pohozaev",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::FullReport => "full-report",
        }
    }

    fn needs_exponents(&self) -> bool {
        !matches!(self, ExperimentKind::Green | ExperimentKind::Robin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainName {
    Ball,
    Ellipsoid,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    FixedPoint,
    Minimization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreconditionerName {
    Diagonal,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: MethodName,
    /// Warm-start each exponent from the previous one.
    pub continuation: bool,
    pub step_tolerance: f64,
    pub residual_tolerance: f64,
    pub max_iterations: usize,
    pub decrease_tolerance: f64,
    pub decrease_window: usize,
    pub linear_tolerance: f64,
    pub linear_max_iterations: Option<usize>,
    pub preconditioner: PreconditionerName,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let n = NonlinearOptions::default();
        Self {
            method: MethodName::FixedPoint,
            continuation: true,
            step_tolerance: n.step_tolerance,
            residual_tolerance: n.residual_tolerance,
            max_iterations: n.max_iterations,
            decrease_tolerance: n.decrease_tolerance,
            decrease_window: n.decrease_window,
            linear_tolerance: n.linear.rel_tolerance,
            linear_max_iterations: n.linear.max_iterations,
            preconditioner: PreconditionerName::Diagonal,
        }
    }
}

impl SolverConfig {
    pub fn nonlinear(&self) -> NonlinearOptions {
        NonlinearOptions {
            step_tolerance: self.step_tolerance,
            residual_tolerance: self.residual_tolerance,
            max_iterations: self.max_iterations,
            decrease_tolerance: self.decrease_tolerance,
            decrease_window: self.decrease_window,
            linear: self.linear(),
        }
    }

    pub fn linear(&self) -> LinearSolveOptions {
        LinearSolveOptions {
            rel_tolerance: self.linear_tolerance,
            max_iterations: self.linear_max_iterations,
            preconditioner: match self.preconditioner {
                PreconditionerName::Diagonal => Preconditioner::Diagonal,
                PreconditionerName::None => Preconditioner::None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RobinConfig {
    /// Probe spacing; defaults to `2h`.
    pub spacing: Option<f64>,
    /// Minimal probe distance to the boundary; defaults to `3h`.
    pub margin: Option<f64>,
    /// Solve one orthant and reflect.
    pub symmetric: Option<bool>,
    /// Gradient magnitude below which a lattice cell seeds a Newton search.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    pub domain: DomainName,
    #[serde(rename = "N")]
    pub dim: usize,
    #[serde(rename = "R", default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub semiaxes: Option<Vec<f64>>,
    #[serde(default)]
    pub extents: Option<Vec<f64>>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub h: Option<f64>,
    /// Solve the radial ODE instead of the grid problem (balls only).
    #[serde(default)]
    pub radial: bool,
    #[serde(default = "default_radial_tol")]
    pub radial_tol: f64,
    #[serde(default)]
    pub p: Vec<f64>,
    /// Base point for the Green and boundary-identity experiments.
    #[serde(default)]
    pub source: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub robin: RobinConfig,
    /// Write field snapshots.
    #[serde(default = "yes")]
    pub snapshots: bool,
    #[serde(default)]
    pub output: Option<String>,
    /// Every code path is deterministic; kept for forward compatibility.
    #[serde(default = "yes")]
    pub deterministic: bool,
}

fn default_radial_tol() -> f64 {
    1e-12
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn kind(&self) -> ExperimentKind {
        self.kind.unwrap_or(ExperimentKind::Sweep)
    }

    pub fn domain_spec(&self) -> Result<DomainSpec64, peaklab::Error> {
        let n = self.dim;
        let center = self.center.clone().unwrap_or_else(|| vec![0.0; n]);
        let kind = match self.domain {
            DomainName::Ball => peaklab::DomainKind::Ball {
                radius: self.radius.unwrap_or(1.0),
            },
            DomainName::Ellipsoid => peaklab::DomainKind::Ellipsoid {
                semiaxes: self.semiaxes.clone().unwrap_or_default(),
            },
            DomainName::Box => peaklab::DomainKind::Box {
                extents: self.extents.clone().unwrap_or_default(),
            },
        };
        DomainSpec64::new(kind, center)
    }

    pub fn grid_h(&self) -> f64 {
        self.h.unwrap_or(f64::NAN)
    }

    pub fn source_point(&self) -> Vec<f64> {
        self.source
            .clone()
            .or_else(|| self.center.clone())
            .unwrap_or_else(|| vec![0.0; self.dim])
    }

    pub fn robin_spacing(&self) -> f64 {
        self.robin.spacing.unwrap_or(2.0 * self.grid_h())
    }

    pub fn robin_margin(&self) -> f64 {
        self.robin.margin.unwrap_or(3.0 * self.grid_h())
    }

    pub fn robin_symmetric(&self) -> bool {
        self.robin.symmetric.unwrap_or(true)
    }

    pub fn robin_threshold(&self) -> f64 {
        self.robin.threshold.unwrap_or(0.0)
    }

    /// Copy with every default made explicit, as echoed in the manifest.
    pub fn resolved(&self) -> RunConfig {
        let mut c = self.clone();
        c.kind = Some(self.kind());
        if c.domain == DomainName::Ball && c.radius.is_none() {
            c.radius = Some(1.0);
        }
        if c.center.is_none() {
            c.center = Some(vec![0.0; self.dim]);
        }
        if matches!(
            self.kind(),
            ExperimentKind::Green | ExperimentKind::Pohozaev | ExperimentKind::FullReport
        ) && c.source.is_none()
        {
            c.source = Some(self.source_point());
        }
        if !self.radial {
            c.robin.spacing = Some(self.robin_spacing());
            c.robin.margin = Some(self.robin_margin());
        }
        c.robin.symmetric = Some(self.robin_symmetric());
        c.robin.threshold = Some(self.robin_threshold());
        c
    }
}

/// 1-based line of the first occurrence of `"key"` in the text.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let pat = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&pat)).map(|i| i + 1)
}

fn field_error(text: &str, field: &str, message: impl Into<String>) -> ConfigError {
    let leaf = field.rsplit('.').next().unwrap_or(field);
    ConfigError {
        field: Some(field.to_string()),
        line: line_of(text, leaf),
        column: None,
        message: message.into(),
    }
}

/// Extracts the field name from serde's unknown/missing field messages.
fn serde_field(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let end = start + msg[start..].find('`')?;
    Some(msg[start..end].to_string())
}

/// Parses and validates a JSON configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg = deserialize(text)?;
    validate(&cfg, text)?;
    Ok(cfg)
}

/// JSON decoding without validation.
pub(crate) fn deserialize(text: &str) -> Result<RunConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        let field = if msg.contains("unknown field") || msg.contains("missing field") {
            serde_field(&msg)
        } else {
            None
        };
        ConfigError {
            field,
            line: Some(e.line()),
            column: Some(e.column()),
            message: msg,
        }
    })
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

pub(crate) fn validate(c: &RunConfig, text: &str) -> Result<(), ConfigError> {
    let err = |field: &str, msg: String| Err(field_error(text, field, msg));
    let n = c.dim;
    if n <= 2 {
        return err("N", format!("dimension must exceed 2, got {n}"));
    }
    if !c.deterministic {
        return err("deterministic", "only deterministic runs are supported".into());
    }
    let check_vec = |field: &str, v: &Option<Vec<f64>>| -> Result<(), ConfigError> {
        match v {
            None => Err(field_error(text, field, format!("required for this domain ({n} entries)"))),
            Some(v) if v.len() != n => Err(field_error(
                text,
                field,
                format!("expected {n} entries, got {}", v.len()),
            )),
            Some(v) if !v.iter().all(|x| positive(*x)) => {
                Err(field_error(text, field, "entries must be positive".to_string()))
            }
            _ => Ok(()),
        }
    };
    let stray = |field: &str, present: bool| -> Result<(), ConfigError> {
        if present {
            Err(field_error(text, field, "not used by this domain".to_string()))
        } else {
            Ok(())
        }
    };
    match c.domain {
        DomainName::Ball => {
            if let Some(r) = c.radius {
                if !positive(r) {
                    return err("R", format!("radius must be positive, got {r}"));
                }
            }
            stray("semiaxes", c.semiaxes.is_some())?;
            stray("extents", c.extents.is_some())?;
        }
        DomainName::Ellipsoid => {
            check_vec("semiaxes", &c.semiaxes)?;
            stray("R", c.radius.is_some())?;
            stray("extents", c.extents.is_some())?;
        }
        DomainName::Box => {
            check_vec("extents", &c.extents)?;
            stray("R", c.radius.is_some())?;
            stray("semiaxes", c.semiaxes.is_some())?;
        }
    }
    if let Some(ctr) = &c.center {
        if ctr.len() != n || !ctr.iter().all(|x| x.is_finite()) {
            return err("center", format!("expected {n} finite entries"));
        }
    }
    if let Some(y) = &c.source {
        if y.len() != n || !y.iter().all(|x| x.is_finite()) {
            return err("source", format!("expected {n} finite entries"));
        }
    }
    let kind = c.kind();
    if c.radial {
        if c.domain != DomainName::Ball {
            return err("radial", "the radial path needs a ball".into());
        }
        if !matches!(
            kind,
            ExperimentKind::Solve | ExperimentKind::Sweep | ExperimentKind::Pohozaev
        ) {
            return err(
                "radial",
                format!("the radial path supports solve, sweep and pohozaev, not {}", kind.name()),
            );
        }
        if !(c.radial_tol > 0.0 && c.radial_tol < 1e-3) {
            return err("radial_tol", format!("must lie in (0, 1e-3), got {}", c.radial_tol));
        }
    } else {
        match c.h {
            None => return err("h", "grid spacing is required unless radial is set".into()),
            Some(h) if !positive(h) => return err("h", format!("must be positive, got {h}")),
            _ => {}
        }
        if n > MAX_GRID_DIM {
            return err("N", format!("grids are limited to dimension {MAX_GRID_DIM}, got {n}"));
        }
    }
    let bound = (n as f64 - 2.0) / 2.0;
    if kind.needs_exponents() {
        if c.p.is_empty() {
            return err("p", "at least one exponent is required".into());
        }
        for &p in &c.p {
            if !(p.is_finite() && p > bound) {
                return err("p", format!("every exponent must exceed (N-2)/2 = {bound}, got {p}"));
            }
            if c.radial && p > MAX_EXPONENT {
                return err("p", format!("radial exponents are limited to {MAX_EXPONENT}, got {p}"));
            }
        }
        let sequential = !c.radial && c.solver.continuation && kind != ExperimentKind::Solve;
        if sequential {
            if c.p.windows(2).any(|w| !(w[1] > w[0])) {
                return err("p", "continuation needs a strictly increasing schedule".into());
            }
            if c.p[0] > 5.0 {
                return err("p", format!("continuation must start at p <= 5, got {}", c.p[0]));
            }
        }
    }
    if !c.radial {
        if let Err(e) = c.solver.nonlinear().validate() {
            return err("solver", e.to_string());
        }
        if c.solver.max_iterations == 0 && c.solver.method == MethodName::FixedPoint {
            return err("solver.max_iterations", "must be at least 1".into());
        }
        let h = c.grid_h();
        if let Some(s) = c.robin.spacing {
            if !(s >= 2.0 * h) {
                return err("robin.spacing", format!("must be at least 2h = {}, got {s}", 2.0 * h));
            }
        }
        if let Some(m) = c.robin.margin {
            if !(m >= 3.0 * h) {
                return err("robin.margin", format!("must be at least 3h = {}, got {m}", 3.0 * h));
            }
        }
        if let Some(t) = c.robin.threshold {
            if !(t >= 0.0 && t.is_finite()) {
                return err("robin.threshold", format!("must be non-negative, got {t}"));
            }
        }
    }
    if let Err(e) = c.domain_spec() {
        return err("domain", e.to_string());
    }
    Ok(())
}
