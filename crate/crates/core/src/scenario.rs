//! Scenario documents: a JSON description of one simulation, sweep or
//! verification run.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "instance": "so3-s2",
//!   "mode": "lifted",
//!   "k": 1.0,
//!   "y0": [0, 0, 1],
//!   "input": {"type": "sinusoid", "amplitude": [0.5, -0.3, 0.8], "frequency": 0.2},
//!   "init": {"plant": {"rotvec": [0, 0, 0]}, "observer": {"rotvec": [2.0, 0.5, 0]}},
//!   "integrator": {"method": "rk4-project", "step": 0.001},
//!   "t_end": 10.0,
//!   "sample_every": 10
//! }
//! ```
//!
//! Every field except `instance` has a default. Unknown keys are rejected.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifold::circle::{CirclePoint, PlanarRotation};
use crate::manifold::{
    act, group_exp, section, AlgebraElement, GroupElement, Mat3, OutputPoint, Vec3,
};
use crate::observer::CostFunction;
use crate::sim::{
    CircleSimulation, IntegratorSpec, MonteCarloSpec, Simulation, DEFAULT_THRESHOLD, MAX_STEP,
};
use crate::system::{InputSignal, Segment};

pub const SCHEMA_VERSION: u32 = 1;
/// Unit-norm tolerance for directions given in a scenario.
pub const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid field `{path}`: {message}")]
    Field { path: String, message: String },
    #[error("cannot read scenario {path}: {message}")]
    Read { path: String, message: String },
    #[error("unknown preset `{name}` (available: {})", available.join(", "))]
    UnknownPreset {
        name: String,
        available: Vec<&'static str>,
    },
}

impl ScenarioError {
    fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Field {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Instance {
    #[serde(rename = "so3-s2")]
    So3S2,
    #[serde(rename = "so2-s1")]
    So2S1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Projected,
    Lifted,
    CoSim,
    Synchrony,
    MonteCarlo,
    Verify,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Projected => "projected",
            Mode::Lifted => "lifted",
            Mode::CoSim => "co-sim",
            Mode::Synchrony => "synchrony",
            Mode::MonteCarlo => "monte-carlo",
            Mode::Verify => "verify",
        };
        f.write_str(s)
    }
}

/// Initial state of the plant or the observer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StateInit {
    /// Row-major rotation matrix.
    Rotation([[f64; 3]; 3]),
    /// Rotation vector, mapped through the exponential.
    Rotvec([f64; 3]),
    /// Output direction; the group state is taken from the minimal-angle section.
    Output([f64; 3]),
    /// Planar rotation angle (circle instance only).
    Angle(f64),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<StateInit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<StateInit>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            seed: 0,
        }
    }
}

fn default_samples() -> usize {
    1000
}
fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_k() -> f64 {
    1.0
}
fn default_t_end() -> f64 {
    10.0
}
fn default_sample_every() -> usize {
    10
}
fn default_mode() -> Mode {
    Mode::Projected
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub instance: Instance,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_k")]
    pub k: f64,
    /// Reference direction; defaults to `e₃` on the sphere and `e₁` on the circle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<[f64; 3]>,
    #[serde(default)]
    pub input: InputSignal,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySpec>,
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        if inner.is_data() && path != "." {
            ScenarioError::field(path, inner.to_string())
        } else {
            ScenarioError::Syntax {
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

fn unit_direction(v: [f64; 3], path: &str) -> Result<OutputPoint, ScenarioError> {
    let v = Vec3::from(v);
    let n = v.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
        return Err(ScenarioError::field(
            path,
            format!("{path} not unit norm (norm {n})"),
        ));
    }
    OutputPoint::new(v).map_err(|e| ScenarioError::field(path, e.to_string()))
}

fn finite3(v: &[f64; 3], path: &str) -> Result<(), ScenarioError> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(ScenarioError::field(path, "components must be finite"))
    }
}

impl Scenario {
    /// A scenario with every optional field at its default.
    pub fn minimal(instance: Instance) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            instance,
            mode: default_mode(),
            k: default_k(),
            y0: None,
            input: InputSignal::default(),
            init: InitSpec::default(),
            integrator: IntegratorSpec::default(),
            t_end: default_t_end(),
            sample_every: default_sample_every(),
            threshold: default_threshold(),
            monte_carlo: None,
            verify: None,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::field(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(ScenarioError::field(
                "k",
                format!("gain must be positive, got {}", self.k),
            ));
        }
        self.reference()?;
        self.input
            .validate()
            .map_err(|e| ScenarioError::field(e.field, e.message))?;
        let h = self.integrator.step;
        if !(h > 0.0 && h <= MAX_STEP) {
            return Err(ScenarioError::field(
                "integrator.step",
                format!("step must lie in (0, {MAX_STEP}], got {h}"),
            ));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(ScenarioError::field("t_end", "must be positive and finite"));
        }
        if self.sample_every == 0 {
            return Err(ScenarioError::field("sample_every", "must be at least 1"));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(ScenarioError::field("threshold", "must be positive"));
        }
        if let Some(mc) = &self.monte_carlo {
            if mc.runs == 0 {
                return Err(ScenarioError::field(
                    "monte_carlo.runs",
                    "must be at least 1",
                ));
            }
            if !(mc.exclusion >= 0.0 && mc.exclusion < std::f64::consts::PI) {
                return Err(ScenarioError::field(
                    "monte_carlo.exclusion",
                    "must lie in [0, π)",
                ));
            }
            if !(mc.threshold.is_finite() && mc.threshold > 0.0) {
                return Err(ScenarioError::field(
                    "monte_carlo.threshold",
                    "must be positive",
                ));
            }
        }
        if self.mode == Mode::MonteCarlo && self.monte_carlo.is_none() {
            return Err(ScenarioError::field(
                "monte_carlo",
                "required in monte-carlo mode",
            ));
        }
        match self.instance {
            Instance::So3S2 => {
                self.plant_state()?;
                match self.mode {
                    Mode::Projected | Mode::Synchrony => {
                        self.observer_output()?;
                    }
                    Mode::Lifted | Mode::CoSim => {
                        self.observer_state()?;
                    }
                    Mode::MonteCarlo | Mode::Verify => {}
                }
            }
            Instance::So2S1 => {
                if !matches!(self.mode, Mode::Projected | Mode::Lifted) {
                    return Err(ScenarioError::field(
                        "mode",
                        "the so2-s1 instance supports only projected and lifted modes",
                    ));
                }
                self.circle_states()?;
            }
        }
        Ok(())
    }

    /// Resolved reference direction.
    pub fn reference(&self) -> Result<OutputPoint, ScenarioError> {
        match (self.instance, self.y0) {
            (_, Some(v)) => {
                let y0 = unit_direction(v, "y0")?;
                if self.instance == Instance::So2S1 && y0.dir().z.abs() > UNIT_TOL {
                    return Err(ScenarioError::field(
                        "y0",
                        "circle reference must lie in the xy-plane",
                    ));
                }
                Ok(y0)
            }
            (Instance::So3S2, None) => Ok(OutputPoint::e3()),
            (Instance::So2S1, None) => Ok(OutputPoint::e1()),
        }
    }

    fn group_from(&self, init: &StateInit, path: &str) -> Result<GroupElement, ScenarioError> {
        let y0 = self.reference()?;
        match init {
            StateInit::Rotation(rows) => {
                let m = Mat3::from_fn(|i, j| rows[i][j]);
                GroupElement::from_matrix(m)
                    .map_err(|e| ScenarioError::field(format!("{path}.rotation"), e.to_string()))
            }
            StateInit::Rotvec(v) => {
                finite3(v, &format!("{path}.rotvec"))?;
                Ok(group_exp(&AlgebraElement(Vec3::from(*v))))
            }
            StateInit::Output(v) => {
                let p = format!("{path}.output");
                let y = unit_direction(*v, &p)?;
                section(&y, &y0).map_err(|e| ScenarioError::field(p, e.to_string()))
            }
            StateInit::Angle(_) => Err(ScenarioError::field(
                format!("{path}.angle"),
                "angles apply to the so2-s1 instance only",
            )),
        }
    }

    /// Plant initial state; identity when absent.
    pub fn plant_state(&self) -> Result<GroupElement, ScenarioError> {
        match &self.init.plant {
            None => Ok(GroupElement::identity()),
            Some(init) => self.group_from(init, "init.plant"),
        }
    }

    fn default_observer() -> StateInit {
        StateInit::Rotvec([FRAC_PI_2, 0.0, 0.0])
    }

    /// Lifted observer initial state; a quarter turn about `e₁` when absent.
    pub fn observer_state(&self) -> Result<GroupElement, ScenarioError> {
        let init = self
            .init
            .observer
            .clone()
            .unwrap_or_else(Self::default_observer);
        self.group_from(&init, "init.observer")
    }

    /// Projected observer initial output.
    pub fn observer_output(&self) -> Result<OutputPoint, ScenarioError> {
        match &self.init.observer {
            Some(StateInit::Output(v)) => unit_direction(*v, "init.observer.output"),
            _ => Ok(act(&self.observer_state()?, &self.reference()?)),
        }
    }

    /// Circle instance initial states `(φ, φ̂)`; defaults `(0, π/2)`.
    pub fn circle_states(&self) -> Result<(PlanarRotation, PlanarRotation), ScenarioError> {
        let angle = |init: &Option<StateInit>, path: &str, default: f64| match init {
            None => Ok(PlanarRotation::new(default)),
            Some(StateInit::Angle(a)) if a.is_finite() => Ok(PlanarRotation::new(*a)),
            Some(StateInit::Angle(_)) => Err(ScenarioError::field(
                format!("{path}.angle"),
                "must be finite",
            )),
            Some(_) => Err(ScenarioError::field(
                path,
                "the so2-s1 instance takes {\"angle\": radians}",
            )),
        };
        Ok((
            angle(&self.init.plant, "init.plant", 0.0)?,
            angle(&self.init.observer, "init.observer", FRAC_PI_2)?,
        ))
    }

    pub fn cost(&self) -> CostFunction {
        CostFunction::new(self.k).expect("gain validated at parse time")
    }

    pub fn simulation(&self) -> Result<Simulation, ScenarioError> {
        Ok(
            Simulation::new(self.input.clone(), self.integrator, self.t_end)
                .with_reference(self.reference()?)
                .with_sample_every(self.sample_every),
        )
    }

    pub fn circle_simulation(&self) -> Result<CircleSimulation, ScenarioError> {
        let y0 = self.reference()?.dir();
        Ok(CircleSimulation {
            k: self.k,
            y0: CirclePoint::new(y0.y.atan2(y0.x)),
            input: self.input.clone(),
            integrator: self.integrator,
            t_end: self.t_end,
            sample_every: self.sample_every,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

pub const PRESETS: [&str; 4] = [
    "metni-s2",
    "explicit-complementary",
    "autonomy-demo",
    "almost-global-sweep",
];

/// Canned scenarios for the attitude example.
pub fn preset(name: &str) -> Result<Scenario, ScenarioError> {
    let gyro = InputSignal::sinusoid(Vec3::new(0.5, -0.3, 0.8), 0.2, 0.0);
    let mut s = Scenario::minimal(Instance::So3S2);
    match name {
        // projected observer on the sphere only
        "metni-s2" => {
            s.mode = Mode::Projected;
            s.input = gyro;
            s.init.observer = Some(StateInit::Output([1.0, 0.0, 0.0]));
        }
        "explicit-complementary" => {
            s.mode = Mode::Lifted;
            s.input = gyro;
            s.init.observer = Some(StateInit::Rotvec([2.0, 0.5, 0.0]));
        }
        "autonomy-demo" => {
            s.mode = Mode::Projected;
            s.input = InputSignal::Sum {
                terms: vec![
                    InputSignal::sinusoid(Vec3::new(1.5, 0.0, -1.0), 0.7, 0.3),
                    InputSignal::PiecewiseConstant {
                        segments: vec![
                            Segment {
                                start: 0.0,
                                value: [0.0, 2.0, 0.0],
                            },
                            Segment {
                                start: 2.5,
                                value: [-1.0, 0.0, 1.0],
                            },
                            Segment {
                                start: 6.0,
                                value: [0.0, 0.0, 0.0],
                            },
                        ],
                    },
                ],
            };
            s.init.observer = Some(StateInit::Rotvec([2.9, 0.0, 0.0]));
        }
        "almost-global-sweep" => {
            s.mode = Mode::MonteCarlo;
            s.t_end = 15.0;
            s.sample_every = 100;
            s.monte_carlo = Some(MonteCarloSpec::new(1000, 20_090_101));
        }
        _ => {
            return Err(ScenarioError::UnknownPreset {
                name: name.to_string(),
                available: PRESETS.to_vec(),
            })
        }
    }
    s.validate()?;
    Ok(s)
}
