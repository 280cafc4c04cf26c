//! JSON run configuration shared by the command-line driver and the Python
//! bindings.

use crate::error::{OptimError, SolveError};
use crate::optimizer::{AdmissibleSet, OptimOptions};
use crate::sensitivity::{ForcingSeries, Target};
use crate::spectral::{SpectralField, Tables};
use crate::state::{ControlTrajectory, Scheme, SolverConfig, Trajectory};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeCoeff {
    pub k: usize,
    pub m: usize,
    pub c: f64,
}

/// A field given inline as a mode list.
pub type FieldSpec = Vec<ModeCoeff>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub n_intervals: usize,
    /// One mode list per interval; omitted means the zero control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<FieldSpec>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// Constant-in-time target field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<FieldSpec>,
    /// Target trajectory generated by simulating this control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_control: Option<ControlSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum AdmissibleKind {
    Ball,
    Box,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibleSpec {
    pub kind: AdmissibleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSpec {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_armijo_c1")]
    pub armijo_c1: f64,
    #[serde(default = "default_shrink")]
    pub shrink: f64,
    #[serde(default = "default_tol_vi")]
    pub tol_vi: f64,
}

fn default_max_iter() -> usize {
    200
}
fn default_armijo_c1() -> f64 {
    1e-4
}
fn default_shrink() -> f64 {
    0.5
}
fn default_tol_vi() -> f64 {
    1e-6
}

impl Default for OptimizeSpec {
    fn default() -> Self {
        Self {
            max_iter: default_max_iter(),
            armijo_c1: default_armijo_c1(),
            shrink: default_shrink(),
            tol_vi: default_tol_vi(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjointSpec {
    /// Constant-in-time forcing; omitted means f = y - y_d (tracking).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_modes: Option<FieldSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearizeSpec {
    pub w: ControlSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckSpec {
    #[serde(default = "default_rhos")]
    pub rhos: Vec<f64>,
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default = "default_fd_rho")]
    pub fd_rho: f64,
}

fn default_rhos() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3]
}
fn default_directions() -> usize {
    5
}
fn default_fd_rho() -> f64 {
    1e-4
}

impl Default for GradcheckSpec {
    fn default() -> Self {
        Self {
            rhos: default_rhos(),
            directions: default_directions(),
            fd_rho: default_fd_rho(),
        }
    }
}

/// Top-level run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub nu: f64,
    pub alpha: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "K")]
    pub k_trunc: usize,
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Collocation points per direction; defaults to 2K+2.
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_d: Option<TargetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admissible: Option<AdmissibleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjoint: Option<AdjointSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linearize: Option<LinearizeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradcheck: Option<GradcheckSpec>,
}

fn default_lambda() -> f64 {
    1e-3
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

impl ConfigError {
    fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field,
            message: message.into(),
        }
    }
}

/// Parses and validates a configuration file.
pub fn parse_config(path: &std::path::Path) -> Result<ProblemConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ProblemConfig, ConfigError> {
    let cfg: ProblemConfig = serde_json::from_str(text)?;
    validate(&cfg)?;
    Ok(cfg)
}

fn validate_field_spec(
    spec: &[ModeCoeff],
    k_trunc: usize,
    field: &'static str,
) -> Result<(), ConfigError> {
    for mc in spec {
        if mc.k < 1 || mc.k > k_trunc || mc.m < 1 || mc.m > k_trunc {
            return Err(ConfigError::invalid(
                field,
                format!("mode ({},{}) outside 1..={}", mc.k, mc.m, k_trunc),
            ));
        }
        if !mc.c.is_finite() {
            return Err(ConfigError::invalid(field, "non-finite coefficient"));
        }
    }
    Ok(())
}

fn validate(cfg: &ProblemConfig) -> Result<(), ConfigError> {
    if !(cfg.nu > 0.0) {
        return Err(ConfigError::invalid(
            "nu",
            format!("viscosity must be positive, got {}", cfg.nu),
        ));
    }
    if !(cfg.alpha >= 0.0) {
        return Err(ConfigError::invalid(
            "alpha",
            format!("must be nonnegative, got {}", cfg.alpha),
        ));
    }
    if !(cfg.t_final > 0.0) {
        return Err(ConfigError::invalid("T", "horizon must be positive"));
    }
    if cfg.k_trunc < 1 {
        return Err(ConfigError::invalid("K", "truncation must be at least 1"));
    }
    if !(cfg.dt > 0.0) {
        return Err(ConfigError::invalid("dt", "step must be positive"));
    }
    if cfg.dt > cfg.t_final {
        return Err(ConfigError::invalid(
            "dt",
            format!("step {} exceeds horizon {}", cfg.dt, cfg.t_final),
        ));
    }
    let steps = cfg.t_final / cfg.dt;
    if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
        return Err(ConfigError::invalid("dt", "must divide T into whole steps"));
    }
    if let Some(m) = cfg.m_points {
        if m < 2 * cfg.k_trunc + 2 {
            return Err(ConfigError::invalid(
                "M",
                format!("needs at least 2K+2 = {}", 2 * cfg.k_trunc + 2),
            ));
        }
    }
    if !(cfg.lambda >= 0.0) {
        return Err(ConfigError::invalid("lambda", "must be nonnegative"));
    }
    if let Some(y0) = &cfg.y0 {
        validate_field_spec(y0, cfg.k_trunc, "y0")?;
    }
    let n_steps = steps.round() as usize;
    let check_control = |spec: &ControlSpec, field: &'static str| -> Result<(), ConfigError> {
        if spec.n_intervals < 1 {
            return Err(ConfigError::invalid(field, "needs at least one interval"));
        }
        if n_steps % spec.n_intervals != 0 {
            return Err(ConfigError::invalid(
                field,
                format!(
                    "n_intervals {} must divide the {} time steps",
                    spec.n_intervals, n_steps
                ),
            ));
        }
        if let Some(values) = &spec.values {
            if values.len() != spec.n_intervals {
                return Err(ConfigError::invalid(
                    field,
                    format!(
                        "expected {} interval values, got {}",
                        spec.n_intervals,
                        values.len()
                    ),
                ));
            }
            for v in values {
                validate_field_spec(v, cfg.k_trunc, field)?;
            }
        }
        Ok(())
    };
    if let Some(c) = &cfg.control {
        check_control(c, "control")?;
    }
    if let Some(t) = &cfg.y_d {
        match (&t.modes, &t.from_control) {
            (Some(modes), None) => validate_field_spec(modes, cfg.k_trunc, "y_d")?,
            (None, Some(ctrl)) => check_control(ctrl, "y_d.from_control")?,
            _ => {
                return Err(ConfigError::invalid(
                    "y_d",
                    "give exactly one of `modes` or `from_control`",
                ))
            }
        }
    }
    if let Some(l) = &cfg.linearize {
        check_control(&l.w, "linearize.w")?;
    }
    if let Some(a) = &cfg.admissible {
        match a.kind {
            AdmissibleKind::Ball => {
                let r = a.radius.ok_or_else(|| {
                    ConfigError::invalid("admissible.radius", "required for kind = ball")
                })?;
                if !(r > 0.0) {
                    return Err(ConfigError::invalid("admissible.radius", "must be positive"));
                }
            }
            AdmissibleKind::Box => {
                let lo = a.lo.ok_or_else(|| {
                    ConfigError::invalid("admissible.lo", "required for kind = box")
                })?;
                let hi = a.hi.ok_or_else(|| {
                    ConfigError::invalid("admissible.hi", "required for kind = box")
                })?;
                if lo > hi {
                    return Err(ConfigError::invalid("admissible.lo", "must not exceed hi"));
                }
            }
        }
    }
    if let Some(o) = &cfg.optimize {
        if o.max_iter == 0 {
            return Err(ConfigError::invalid("optimize.max_iter", "must be positive"));
        }
        if !(o.shrink > 0.0 && o.shrink < 1.0) {
            return Err(ConfigError::invalid("optimize.shrink", "must lie in (0,1)"));
        }
        if !(o.armijo_c1 > 0.0 && o.armijo_c1 < 1.0) {
            return Err(ConfigError::invalid(
                "optimize.armijo_c1",
                "must lie in (0,1)",
            ));
        }
    }
    if let Some(g) = &cfg.gradcheck {
        if g.rhos.iter().any(|r| !(0.0..1.0).contains(r) || *r == 0.0) {
            return Err(ConfigError::invalid(
                "gradcheck.rhos",
                "entries must lie in (0,1)",
            ));
        }
    }
    Ok(())
}

impl ProblemConfig {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            nu: self.nu,
            alpha: self.alpha,
            t_final: self.t_final,
            k_trunc: self.k_trunc,
            dt: self.dt,
            scheme: self.scheme,
        }
    }

    pub fn tables(&self) -> Result<Tables, SolveError> {
        Tables::new(self.k_trunc, self.alpha, self.m_points)
            .map_err(|e| SolveError::Config(e.to_string()))
    }

    pub fn field_from_spec(&self, spec: &[ModeCoeff]) -> SpectralField {
        let mut f = SpectralField::zeros(self.k_trunc);
        for mc in spec {
            f.coeff_mut()[(mc.k - 1) * self.k_trunc + (mc.m - 1)] = mc.c;
        }
        f
    }

    pub fn initial_field(&self) -> SpectralField {
        match &self.y0 {
            Some(spec) => self.field_from_spec(spec),
            None => SpectralField::zeros(self.k_trunc),
        }
    }

    pub fn control_from_spec(&self, spec: &ControlSpec) -> ControlTrajectory {
        let values = match &spec.values {
            Some(values) => values.iter().map(|v| self.field_from_spec(v)).collect(),
            None => vec![SpectralField::zeros(self.k_trunc); spec.n_intervals],
        };
        ControlTrajectory::new(self.t_final, values)
    }

    pub fn control(&self) -> ControlTrajectory {
        match &self.control {
            Some(spec) => self.control_from_spec(spec),
            None => ControlTrajectory::zeros(self.t_final, 1, self.k_trunc),
        }
    }

    /// Builds the tracking target, simulating the reference control if needed.
    pub fn target(&self, tables: &Tables) -> Result<Target, SolveError> {
        match &self.y_d {
            None => Ok(Target::Field(SpectralField::zeros(self.k_trunc))),
            Some(TargetSpec {
                modes: Some(modes), ..
            }) => Ok(Target::Field(self.field_from_spec(modes))),
            Some(TargetSpec {
                from_control: Some(ctrl),
                ..
            }) => {
                let u = self.control_from_spec(ctrl);
                let traj: Trajectory = crate::state::simulate(
                    tables,
                    &self.solver_config(),
                    &self.initial_field(),
                    &u,
                )?;
                Ok(Target::Trajectory(traj))
            }
            Some(_) => Err(SolveError::Config("y_d under-specified".into())),
        }
    }

    pub fn adjoint_forcing(&self, tables: &Tables) -> Result<ForcingSeries, SolveError> {
        match &self.adjoint {
            Some(AdjointSpec { f_modes: Some(m) }) => {
                Ok(ForcingSeries::Constant(self.field_from_spec(m)))
            }
            _ => {
                let y_d = self.target(tables)?;
                let traj = crate::state::simulate(
                    tables,
                    &self.solver_config(),
                    &self.initial_field(),
                    &self.control(),
                )?;
                Ok(ForcingSeries::tracking_deviation(&traj, &y_d))
            }
        }
    }

    pub fn admissible_set(&self, n_intervals: usize) -> Result<AdmissibleSet, OptimError> {
        let n_modes = self.k_trunc * self.k_trunc;
        match &self.admissible {
            None => Ok(AdmissibleSet::Ball { radius: 1.0 }),
            Some(a) => match a.kind {
                AdmissibleKind::Ball => Ok(AdmissibleSet::Ball {
                    radius: a.radius.unwrap_or(1.0),
                }),
                AdmissibleKind::Box => Ok(AdmissibleSet::uniform_box(
                    n_intervals,
                    n_modes,
                    a.lo.unwrap_or(-1.0),
                    a.hi.unwrap_or(1.0),
                )),
            },
        }
    }

    pub fn optim_options(&self) -> OptimOptions {
        let spec = self.optimize.clone().unwrap_or_default();
        OptimOptions {
            max_iter: spec.max_iter,
            armijo_c1: spec.armijo_c1,
            shrink: spec.shrink,
            tol_vi: spec.tol_vi,
            max_shrinks: 40,
        }
    }
}
