//! Strict JSON configuration. Every field has a concrete default so the
//! resolved configuration can be echoed back verbatim.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use ctrlcurv::families::{
    flat_normal_form_problem, riemannian_problem, translation_invariant_problem, zermelo_problem, FlatNormalForm,
    RiemannianFrame, ZermeloSpec,
};
use ctrlcurv::invariants::{Axis, SampleGrid, COLLINEARITY_LIMIT, FLATNESS_TOLERANCE, MIN_INVARIANT_DEGREE};
use ctrlcurv::{ControlDomain, ControlProblem, Dynamics, Expr};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extremal: Option<ExtremalConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_degree")]
    pub jet_degree: usize,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
}

fn default_degree() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Riemannian {
        /// `euclidean`, `half_plane`, `sphere`, `perturbed_sphere` or `custom`.
        frame: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        e1: Option<[String; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        e2: Option<[String; 2]>,
    },
    Zermelo {
        x1: String,
        x2: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
    ZermeloLinear {
        a: f64,
        b: f64,
    },
    FlatNormalForm {
        a1: String,
        a2: String,
        #[serde(default)]
        u0: f64,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
    TranslationInvariant {
        f1: String,
        f2: String,
    },
    Custom {
        f1: String,
        f2: String,
        #[serde(default = "default_phi")]
        phi: String,
        #[serde(default)]
        energy: f64,
        #[serde(default)]
        domain: DomainConfig,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
}

fn default_phi() -> String {
    "1".into()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    #[default]
    Circle,
    Interval([f64; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl From<AxisConfig> for Axis {
    fn from(a: AxisConfig) -> Axis {
        Axis::new(a.min, a.max, a.count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_state_axis")]
    pub q1: AxisConfig,
    #[serde(default = "default_state_axis")]
    pub q2: AxisConfig,
    /// Sampled half-open: the upper endpoint is excluded.
    #[serde(default = "default_control_axis")]
    pub u: AxisConfig,
}

fn default_state_axis() -> AxisConfig {
    AxisConfig {
        min: -1.0,
        max: 1.0,
        count: 5,
    }
}

fn default_control_axis() -> AxisConfig {
    AxisConfig {
        min: 0.0,
        max: TAU,
        count: 8,
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            q1: default_state_axis(),
            q2: default_state_axis(),
            u: default_control_axis(),
        }
    }
}

impl GridConfig {
    pub fn sample_grid(&self) -> SampleGrid {
        SampleGrid::new(self.q1.into(), self.q2.into(), self.u.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtremalConfig {
    pub q0: [f64; 2],
    pub u0: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Uniform output samples; 0 writes the accepted integrator mesh.
    #[serde(default)]
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorTolerances {
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
}

fn default_rtol() -> f64 {
    1e-9
}

fn default_atol() -> f64 {
    1e-11
}

impl Default for IntegratorTolerances {
    fn default() -> Self {
        IntegratorTolerances {
            rtol: default_rtol(),
            atol: default_atol(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_collinearity")]
    pub collinearity: f64,
    #[serde(default = "default_flatness")]
    pub flatness: f64,
    #[serde(default)]
    pub integrator: IntegratorTolerances,
    /// Thresholds of the `validate` checks.
    #[serde(default = "default_bnk")]
    pub bnk: f64,
    #[serde(default = "default_bnk")]
    pub pde_for_c: f64,
    #[serde(default = "default_kappa_agreement")]
    pub kappa_agreement: f64,
}

fn default_collinearity() -> f64 {
    COLLINEARITY_LIMIT
}

fn default_flatness() -> f64 {
    FLATNESS_TOLERANCE
}

fn default_bnk() -> f64 {
    1e-4
}

fn default_kappa_agreement() -> f64 {
    1e-5
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            collinearity: default_collinearity(),
            flatness: default_flatness(),
            integrator: IntegratorTolerances::default(),
            bnk: default_bnk(),
            pde_for_c: default_bnk(),
            kappa_agreement: default_kappa_agreement(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    /// Anchor control of the natural parameter for the `c` checks.
    #[serde(default)]
    pub anchor: f64,
    /// Offset added to the bracket `κ` before the checks (fault injection).
    #[serde(default)]
    pub kappa_bias: f64,
    /// Strength `ε` of the pure feedback `u + ε sin u` in the invariance check.
    #[serde(default = "default_feedback_eps")]
    pub feedback_epsilon: f64,
}

fn default_feedback_eps() -> f64 {
    0.2
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            anchor: 0.0,
            kappa_bias: 0.0,
            feedback_epsilon: default_feedback_eps(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::config(msg.into())
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Config::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Config, CliError> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), CliError> {
        let positive = [
            ("tolerances.collinearity", self.tolerances.collinearity),
            ("tolerances.flatness", self.tolerances.flatness),
            ("tolerances.integrator.rtol", self.tolerances.integrator.rtol),
            ("tolerances.integrator.atol", self.tolerances.integrator.atol),
            ("tolerances.bnk", self.tolerances.bnk),
            ("tolerances.pde_for_c", self.tolerances.pde_for_c),
            ("tolerances.kappa_agreement", self.tolerances.kappa_agreement),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be a positive number, got {v}")));
            }
        }
        for (name, a) in [("q1", self.grid.q1), ("q2", self.grid.q2), ("u", self.grid.u)] {
            if a.count == 0 {
                return Err(invalid(format!("grid.{name}.count must be at least 1")));
            }
            if !(a.min.is_finite() && a.max.is_finite() && a.min <= a.max) {
                return Err(invalid(format!("grid.{name} needs finite min <= max")));
            }
        }
        if self.jet_degree < MIN_INVARIANT_DEGREE {
            return Err(invalid(format!(
                "jet_degree must be at least {MIN_INVARIANT_DEGREE}, got {}",
                self.jet_degree
            )));
        }
        if self.jet_degree > 12 {
            return Err(invalid(format!("jet_degree must be at most 12, got {}", self.jet_degree)));
        }
        if let Some(e) = &self.extremal {
            let finite = e.q0.iter().all(|x| x.is_finite()) && e.u0.is_finite();
            if !finite || !(e.horizon.is_finite() && e.horizon != 0.0) {
                return Err(invalid("extremal needs finite q0, u0 and a nonzero finite T"));
            }
            if e.samples == 1 {
                return Err(invalid("extremal.samples must be 0 or at least 2"));
            }
        }
        if !self.validate.feedback_epsilon.is_finite() || self.validate.feedback_epsilon.abs() >= 1.0 {
            return Err(invalid("validate.feedback_epsilon must lie in (-1, 1)"));
        }
        Ok(())
    }
}

fn parse_expr(s: &str, what: &str) -> Result<Expr, CliError> {
    s.parse().map_err(|e| invalid(format!("{what}: {e}")))
}

/// The built problem with what `validate` needs to know about its family.
pub struct BuiltProblem {
    pub dynamics: Box<dyn Dynamics<f64>>,
    pub frame: Option<RiemannianFrame>,
}

fn lib_err(e: ctrlcurv::Error) -> CliError {
    invalid(format!("problem: {e}"))
}

impl ProblemConfig {
    pub fn family(&self) -> &'static str {
        match self {
            ProblemConfig::Riemannian { .. } => "riemannian",
            ProblemConfig::Zermelo { .. } => "zermelo",
            ProblemConfig::ZermeloLinear { .. } => "zermelo_linear",
            ProblemConfig::FlatNormalForm { .. } => "flat_normal_form",
            ProblemConfig::TranslationInvariant { .. } => "translation_invariant",
            ProblemConfig::Custom { .. } => "custom",
        }
    }

    pub fn build(&self) -> Result<BuiltProblem, CliError> {
        let boxed = |p: ControlProblem| -> Box<dyn Dynamics<f64>> { Box::new(p) };
        Ok(match self {
            ProblemConfig::Riemannian { frame, epsilon, e1, e2 } => {
                let frame = match (frame.as_str(), epsilon, e1, e2) {
                    ("euclidean", None, None, None) => RiemannianFrame::euclidean(),
                    ("half_plane", None, None, None) => RiemannianFrame::half_plane(),
                    ("sphere", None, None, None) => RiemannianFrame::sphere(),
                    ("perturbed_sphere", Some(eps), None, None) if eps.is_finite() => {
                        RiemannianFrame::perturbed_sphere(*eps)
                    }
                    ("custom", None, Some(e1), Some(e2)) => RiemannianFrame::new(
                        [parse_expr(&e1[0], "e1")?, parse_expr(&e1[1], "e1")?],
                        [parse_expr(&e2[0], "e2")?, parse_expr(&e2[1], "e2")?],
                    )
                    .map_err(lib_err)?,
                    _ => {
                        return Err(invalid(format!(
                            "frame `{frame}`: use euclidean, half_plane, sphere, perturbed_sphere (with epsilon) or custom (with e1, e2)"
                        )))
                    }
                };
                BuiltProblem {
                    dynamics: boxed(riemannian_problem(&frame).map_err(lib_err)?),
                    frame: Some(frame),
                }
            }
            ProblemConfig::Zermelo { x1, x2, params } => {
                let spec = ZermeloSpec::new(parse_expr(x1, "x1")?, parse_expr(x2, "x2")?).with_params(params.clone());
                BuiltProblem {
                    dynamics: boxed(zermelo_problem(&spec).map_err(lib_err)?),
                    frame: None,
                }
            }
            ProblemConfig::ZermeloLinear { a, b } => {
                if !(a.is_finite() && b.is_finite()) {
                    return Err(invalid("zermelo_linear needs finite a and b"));
                }
                BuiltProblem {
                    dynamics: boxed(zermelo_problem(&ZermeloSpec::linear(*a, *b)).map_err(lib_err)?),
                    frame: None,
                }
            }
            ProblemConfig::FlatNormalForm { a1, a2, u0, params } => {
                let form = FlatNormalForm::new(parse_expr(a1, "a1")?, parse_expr(a2, "a2")?, *u0, params).map_err(lib_err)?;
                BuiltProblem {
                    dynamics: Box::new(flat_normal_form_problem(&form)),
                    frame: None,
                }
            }
            ProblemConfig::TranslationInvariant { f1, f2 } => BuiltProblem {
                dynamics: boxed(
                    translation_invariant_problem(parse_expr(f1, "f1")?, parse_expr(f2, "f2")?).map_err(lib_err)?,
                ),
                frame: None,
            },
            ProblemConfig::Custom {
                f1,
                f2,
                phi,
                energy,
                domain,
                params,
            } => {
                let domain = match domain {
                    DomainConfig::Circle => ControlDomain::Circle,
                    DomainConfig::Interval([lo, hi]) if lo < hi => ControlDomain::Interval { lo: *lo, hi: *hi },
                    DomainConfig::Interval(_) => return Err(invalid("domain interval needs lo < hi")),
                };
                let p = ControlProblem::builder(parse_expr(f1, "f1")?, parse_expr(f2, "f2")?)
                    .phi(parse_expr(phi, "phi")?)
                    .energy(*energy)
                    .domain(domain)
                    .params(params.clone())
                    .build()
                    .map_err(lib_err)?;
                BuiltProblem {
                    dynamics: boxed(p),
                    frame: None,
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_filled_in() {
        let cfg = Config::from_json(r#"{"problem": {"family": "zermelo_linear", "a": 0.8, "b": 0.5}}"#).unwrap();
        assert_eq!(cfg.jet_degree, 6);
        assert_eq!(cfg.grid.u.count, 8);
        assert_eq!(cfg.tolerances.integrator.rtol, 1e-9);
        let echoed = serde_json::to_string(&cfg).unwrap();
        assert_eq!(Config::from_json(&echoed).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"problem": {"family": "zermelo_linear", "a": 0.8, "b": 0.5, "c": 1}}"#,
            r#"{"problem": {"family": "zermelo_linear", "a": 0.8, "b": 0.5}, "gird": {}}"#,
            r#"{"problem": {"family": "zermelo_linear", "a": 0.8, "b": 0.5}, "tolerances": {"flat": 1}}"#,
            r#"{"problem": {"family": "nope"}}"#,
        ] {
            assert!(Config::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn numeric_constraints() {
        let base = r#"{"problem": {"family": "zermelo_linear", "a": 0.8, "b": 0.5}, "#;
        for tail in [
            r#""tolerances": {"flatness": 0}}"#,
            r#""grid": {"u": {"min": 0, "max": 1, "count": 0}}}"#,
            r#""jet_degree": 3}"#,
            r#""extremal": {"q0": [0, 0], "u0": 0, "T": 0}}"#,
        ] {
            assert!(Config::from_json(&format!("{base}{tail}")).is_err(), "{tail}");
        }
    }

    #[test]
    fn frames_need_matching_fields() {
        let p: ProblemConfig = serde_json::from_str(r#"{"family": "riemannian", "frame": "sphere", "epsilon": 0.1}"#).unwrap();
        assert!(p.build().is_err());
        let p: ProblemConfig = serde_json::from_str(r#"{"family": "riemannian", "frame": "perturbed_sphere", "epsilon": 0.1}"#).unwrap();
        assert!(p.build().is_ok());
    }
}
