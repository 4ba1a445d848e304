//! The plant: left-invariant kinematics `Ẋ = X·u` on SO(3), its output
//! `y = act(X, y0)` on S², and the projected dynamics `ẏ = −u × y`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifold::{
    act, hat, in_stabiliser, AlgebraElement, GroupElement, Mat3, OutputPoint, TangentVector, Vec3,
};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {message}")]
pub struct InputSignalError {
    pub field: String,
    pub message: String,
}

impl InputSignalError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// One piece of a piecewise-constant signal, active from `start` until the
/// next segment's start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: f64,
    pub value: [f64; 3],
}

/// Measured angular velocity `u(t)` in body coordinates (rad/s).
///
/// The admissible class is closed under sums and contains constants,
/// sinusoids `a·sin(2πft + φ)` and right-continuous piecewise constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputSignal {
    Constant {
        value: [f64; 3],
    },
    Sinusoid {
        amplitude: [f64; 3],
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    PiecewiseConstant {
        segments: Vec<Segment>,
    },
    Sum {
        terms: Vec<InputSignal>,
    },
}

impl Default for InputSignal {
    fn default() -> Self {
        InputSignal::Constant { value: [0.0; 3] }
    }
}

impl InputSignal {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(v: Vec3) -> Self {
        InputSignal::Constant { value: v.into() }
    }

    pub fn sinusoid(amplitude: Vec3, frequency: f64, phase: f64) -> Self {
        InputSignal::Sinusoid {
            amplitude: amplitude.into(),
            frequency,
            phase,
        }
    }

    pub fn validate(&self) -> Result<(), InputSignalError> {
        self.validate_at("input")
    }

    fn validate_at(&self, path: &str) -> Result<(), InputSignalError> {
        let finite = |v: &[f64; 3], field: String| {
            if v.iter().all(|c| c.is_finite()) {
                Ok(())
            } else {
                Err(InputSignalError::new(field, "components must be finite"))
            }
        };
        match self {
            InputSignal::Constant { value } => finite(value, format!("{path}.value")),
            InputSignal::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                finite(amplitude, format!("{path}.amplitude"))?;
                if !(frequency.is_finite() && *frequency >= 0.0) {
                    return Err(InputSignalError::new(
                        format!("{path}.frequency"),
                        "must be finite and non-negative",
                    ));
                }
                if !phase.is_finite() {
                    return Err(InputSignalError::new(
                        format!("{path}.phase"),
                        "must be finite",
                    ));
                }
                Ok(())
            }
            InputSignal::PiecewiseConstant { segments } => {
                let Some(first) = segments.first() else {
                    return Err(InputSignalError::new(
                        format!("{path}.segments"),
                        "needs at least one segment",
                    ));
                };
                if first.start != 0.0 {
                    return Err(InputSignalError::new(
                        format!("{path}.segments[0].start"),
                        "first segment must start at 0",
                    ));
                }
                for (i, s) in segments.iter().enumerate() {
                    finite(&s.value, format!("{path}.segments[{i}].value"))?;
                    if i > 0 && !(s.start > segments[i - 1].start && s.start.is_finite()) {
                        return Err(InputSignalError::new(
                            format!("{path}.segments[{i}].start"),
                            "segment starts must be finite and strictly increasing",
                        ));
                    }
                }
                Ok(())
            }
            InputSignal::Sum { terms } => {
                for (i, term) in terms.iter().enumerate() {
                    term.validate_at(&format!("{path}.terms[{i}]"))?;
                }
                Ok(())
            }
        }
    }

    /// `u(t)`. Piecewise signals are right-continuous: at a switch time the
    /// new segment's value applies.
    pub fn eval(&self, t: f64) -> AlgebraElement {
        AlgebraElement(self.eval_vec(t))
    }

    /// Left limit `u(t⁻)`; differs from [`eval`](Self::eval) only at switch
    /// times of piecewise signals.
    pub fn eval_left(&self, t: f64) -> AlgebraElement {
        AlgebraElement(self.eval_vec_left(t))
    }

    /// Switch times of the piecewise-constant parts that lie in `(0, ∞)`,
    /// sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_breakpoints(&mut out);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn collect_breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            InputSignal::PiecewiseConstant { segments } => {
                out.extend(segments.iter().map(|s| s.start).filter(|&t| t > 0.0))
            }
            InputSignal::Sum { terms } => terms.iter().for_each(|s| s.collect_breakpoints(out)),
            InputSignal::Constant { .. } | InputSignal::Sinusoid { .. } => {}
        }
    }

    fn eval_vec_left(&self, t: f64) -> Vec3 {
        match self {
            InputSignal::PiecewiseConstant { segments } => {
                let idx = segments.partition_point(|s| s.start < t);
                if idx == 0 {
                    segments
                        .first()
                        .map_or(Vec3::zeros(), |s| Vec3::from(s.value))
                } else {
                    Vec3::from(segments[idx - 1].value)
                }
            }
            InputSignal::Sum { terms } => terms.iter().map(|s| s.eval_vec_left(t)).sum(),
            _ => self.eval_vec(t),
        }
    }

    fn eval_vec(&self, t: f64) -> Vec3 {
        match self {
            InputSignal::Constant { value } => Vec3::from(*value),
            InputSignal::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => Vec3::from(*amplitude) * (TAU * frequency * t + phase).sin(),
            InputSignal::PiecewiseConstant { segments } => {
                let idx = segments.partition_point(|s| s.start <= t);
                if idx == 0 {
                    Vec3::zeros()
                } else {
                    Vec3::from(segments[idx - 1].value)
                }
            }
            InputSignal::Sum { terms } => terms.iter().map(|s| s.eval_vec(t)).sum(),
        }
    }

    /// `∫₀ᵗ u(s) ds`, in closed form.
    pub fn integral(&self, t: f64) -> Vec3 {
        match self {
            InputSignal::Constant { value } => Vec3::from(*value) * t,
            InputSignal::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                let a = Vec3::from(*amplitude);
                if *frequency == 0.0 {
                    a * (phase.sin() * t)
                } else {
                    let w = TAU * frequency;
                    a * ((phase.cos() - (w * t + phase).cos()) / w)
                }
            }
            InputSignal::PiecewiseConstant { segments } => {
                let mut acc = Vec3::zeros();
                for (i, s) in segments.iter().enumerate() {
                    if s.start >= t {
                        break;
                    }
                    let end = segments.get(i + 1).map_or(t, |n| n.start.min(t));
                    acc += Vec3::from(s.value) * (end - s.start);
                }
                acc
            }
            InputSignal::Sum { terms } => terms.iter().map(|s| s.integral(t)).sum(),
        }
    }
}

/// Plant state `X(t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantState {
    pub x: GroupElement,
    pub t: f64,
}

/// `Ẋ = X·hat(u)`.
pub fn plant_vector_field(x: &GroupElement, u: &AlgebraElement) -> Mat3 {
    x.matrix() * u.hat()
}

/// `y = act(X, y0)`.
pub fn output(x: &GroupElement, y0: &OutputPoint) -> OutputPoint {
    act(x, y0)
}

/// Velocity of the projected system, `ẏ = −hat(u)·y`.
pub fn project_dynamics(y: &OutputPoint, u: &AlgebraElement) -> TangentVector {
    TangentVector::project(*y, -(hat(&u.0) * y.dir()))
}

/// Two plant states are indistinguishable from the output iff they differ
/// by an element of the stabiliser of `y0`.
pub fn indistinguishable(x: &GroupElement, y: &GroupElement, y0: &OutputPoint) -> bool {
    in_stabiliser(&(x * &y.inverse()), y0)
}
