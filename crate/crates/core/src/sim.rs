//! Time integration of the plant together with the projected or lifted
//! observer, plus run summaries and seeded Monte Carlo sweeps.
//!
//! Two discretizations are available. `lie-euler` advances every group state
//! by `X ← X·exp(h·A)` and every sphere state through the action, so states
//! never leave their manifold. `rk4-project` takes a classical four-stage step
//! in the ambient space and then projects (polar factor on SO(3), normalization
//! on S²).

use std::ops::{Add, Mul};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifold::circle::{self, CirclePoint, PlanarRotation};
use crate::manifold::{
    act, group_exp, hat, orthonormality_drift_of, orthonormalize, AlgebraElement, GroupElement,
    Mat3, OutputPoint, Vec3,
};
use crate::observer::{
    canonical_error_from_group, circle_innovation, error_angle, error_angle_closed_form,
    lifted_correction, CostFunction, Innovation, ObserverError,
};
use crate::sampling::{haar_rotation_excluding, run_rng, uniform_sphere_excluding};
use crate::system::InputSignal;

/// Largest accepted step (s).
pub const MAX_STEP: f64 = 1e-2;
/// Default convergence threshold on the error angle (rad).
pub const DEFAULT_THRESHOLD: f64 = 1e-3;
/// Upper edge of the small-angle window used to fit the local rate (rad).
pub const RATE_WINDOW: f64 = 0.1;
/// Lower edge of the rate window; below it the angle is dominated by rounding.
pub const RATE_FLOOR: f64 = 1e-8;
/// Minimum number of window samples before a rate is reported.
pub const RATE_MIN_SAMPLES: usize = 10;
/// Default antipodal exclusion radius for random initializations (rad).
pub const DEFAULT_EXCLUSION: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("step size {0} outside (0, {MAX_STEP}]")]
    StepSize(f64),
    #[error("horizon {0} must be positive and finite")]
    Horizon(f64),
    #[error("sample_every must be at least 1")]
    SampleEvery,
    #[error("non-finite state at t = {t} ({what})")]
    NonFinite { t: f64, what: &'static str },
    #[error(transparent)]
    Observer(#[from] ObserverError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LieEuler,
    Rk4Project,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub method: Method,
    pub step: f64,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            method: Method::Rk4Project,
            step: 1e-3,
        }
    }
}

impl IntegratorSpec {
    pub fn new(method: Method, step: f64) -> Self {
        Self { method, step }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.step > 0.0 && self.step <= MAX_STEP) {
            return Err(SimError::StepSize(self.step));
        }
        Ok(())
    }
}

/// Everything a run needs apart from the initial states and the innovation.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub y0: OutputPoint,
    pub input: InputSignal,
    pub integrator: IntegratorSpec,
    pub t_end: f64,
    pub sample_every: usize,
}

impl Simulation {
    pub fn new(input: InputSignal, integrator: IntegratorSpec, t_end: f64) -> Self {
        Self {
            y0: OutputPoint::e3(),
            input,
            integrator,
            t_end,
            sample_every: 1,
        }
    }

    pub fn with_reference(mut self, y0: OutputPoint) -> Self {
        self.y0 = y0;
        self
    }

    pub fn with_sample_every(mut self, n: usize) -> Self {
        self.sample_every = n;
        self
    }

    fn validate(&self) -> Result<(), SimError> {
        self.integrator.validate()?;
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(SimError::Horizon(self.t_end));
        }
        if self.sample_every == 0 {
            return Err(SimError::SampleEvery);
        }
        Ok(())
    }

    /// Step times `(t_start, h)`; the last step is shortened to land on `t_end`.
    fn steps(&self) -> Vec<(f64, f64)> {
        let h = self.integrator.step;
        let full = (self.t_end / h + 1e-9).floor() as usize;
        let mut out: Vec<(f64, f64)> = (0..full).map(|i| (i as f64 * h, h)).collect();
        let covered = full as f64 * h;
        if self.t_end - covered > 1e-12 {
            out.push((covered, self.t_end - covered));
        }
        out
    }
}

/// One recorded instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: GroupElement,
    pub xhat: Option<GroupElement>,
    pub y: OutputPoint,
    pub yhat: OutputPoint,
    pub theta: f64,
    pub drift: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub samples: Vec<Sample>,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.theta).collect()
    }

    pub fn last(&self) -> &Sample {
        self.samples
            .last()
            .expect("records hold at least the initial sample")
    }

    pub fn max_drift(&self) -> f64 {
        self.samples.iter().map(|s| s.drift).fold(0.0, f64::max)
    }

    pub fn summarize(&self, threshold: f64) -> RunSummary {
        RunSummary::from_record(self, threshold)
    }
}

/// Per-run metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub initial_angle: f64,
    pub final_angle: f64,
    pub t_converged: Option<f64>,
    /// Least-squares decay rate of `ln θ` over samples with `θ` in
    /// `(RATE_FLOOR, RATE_WINDOW)`.
    pub fitted_rate: Option<f64>,
    pub max_drift: f64,
}

impl RunSummary {
    pub fn from_record(record: &TrajectoryRecord, threshold: f64) -> Self {
        let s = &record.samples;
        let t_converged = s.iter().find(|p| p.theta < threshold).map(|p| p.t);
        let window: Vec<(f64, f64)> = s
            .iter()
            .filter(|p| p.theta < RATE_WINDOW && p.theta > RATE_FLOOR)
            .map(|p| (p.t, p.theta.ln()))
            .collect();
        Self {
            initial_angle: s.first().map_or(f64::NAN, |p| p.theta),
            final_angle: record.last().theta,
            t_converged,
            fitted_rate: fit_decay_rate(&window),
            max_drift: record.max_drift(),
        }
    }

    pub fn converged(&self) -> bool {
        self.t_converged.is_some()
    }
}

/// Negative least-squares slope of `(t, ln θ)` pairs.
fn fit_decay_rate(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < RATE_MIN_SAMPLES {
        return None;
    }
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, l) in points {
        sxy += (t - mt) * (l - ml);
        sxx += (t - mt) * (t - mt);
    }
    (sxx > 0.0).then(|| -sxy / sxx)
}

#[derive(Clone, Copy)]
struct Pair<A, B>(A, B);

impl<A: Add<Output = A>, B: Add<Output = B>> Add for Pair<A, B> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Pair(self.0 + rhs.0, self.1 + rhs.1)
    }
}

impl<A: Mul<f64, Output = A>, B: Mul<f64, Output = B>> Mul<f64> for Pair<A, B> {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Pair(self.0 * s, self.1 * s)
    }
}

/// Classical RK4 over `[t, t + h]`. The field receives the stage input, which
/// [`stage_inputs`] samples so that a step ending on a switch time sees the
/// left limit there.
fn rk4_step<S, F>(state: S, inputs: &[Vec3; 3], h: f64, f: F) -> S
where
    S: Copy + Add<Output = S> + Mul<f64, Output = S>,
    F: Fn(&Vec3, S) -> S,
{
    let k1 = f(&inputs[0], state);
    let k2 = f(&inputs[1], state + k1 * (0.5 * h));
    let k3 = f(&inputs[1], state + k2 * (0.5 * h));
    let k4 = f(&inputs[2], state + k3 * h);
    state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Input at the start, midpoint and (left-limit) end of `[t, t + h]`.
fn stage_inputs(input: &InputSignal, t: f64, h: f64) -> [Vec3; 3] {
    [
        input.eval(t).vec(),
        input.eval(t + 0.5 * h).vec(),
        input.eval_left(t + h).vec(),
    ]
}

/// Splits `[t, t + h]` at the switch times inside it, so no integrator step
/// straddles a jump of the input.
fn split_at(breaks: &[f64], t: f64, h: f64) -> Vec<(f64, f64)> {
    let end = t + h;
    let lo = breaks.partition_point(|&b| b <= t + 1e-12);
    let hi = breaks.partition_point(|&b| b < end - 1e-12);
    let mut out = Vec::with_capacity(hi - lo + 1);
    let mut start = t;
    for &b in &breaks[lo..hi] {
        out.push((start, b - start));
        start = b;
    }
    out.push((start, end - start));
    out
}

fn finite_mat(m: &Mat3) -> bool {
    m.iter().all(|v| v.is_finite())
}

fn finite_vec(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

fn advance_plant(x: &GroupElement, u: &AlgebraElement, h: f64) -> GroupElement {
    x * &group_exp(&u.scale(h))
}

/// Plant on SO(3) and projected observer `ŷ̇ = −u × ŷ + innovation(ŷ, y)` on S².
pub fn simulate_projected<I: Innovation + ?Sized>(
    sim: &Simulation,
    innovation: &I,
    x0: GroupElement,
    yhat0: OutputPoint,
) -> Result<TrajectoryRecord, SimError> {
    sim.validate()?;
    let y0 = sim.y0;
    let sample = |t: f64, x: GroupElement, yhat: OutputPoint| {
        let y = act(&x, &y0);
        Sample {
            t,
            x,
            xhat: None,
            y,
            yhat,
            theta: error_angle(&yhat, &y),
            drift: x.drift(),
        }
    };
    let steps = sim.steps();
    let mut record = TrajectoryRecord {
        samples: Vec::with_capacity(steps.len() / sim.sample_every + 2),
    };
    let (mut x, mut yhat) = (x0, yhat0);
    record.samples.push(sample(0.0, x, yhat));
    let breaks = sim.input.breakpoints();
    for (i, &(t, h)) in steps.iter().enumerate() {
        for (t, h) in split_at(&breaks, t, h) {
            match sim.integrator.method {
                Method::LieEuler => {
                    let u = sim.input.eval(t);
                    let y = act(&x, &y0).dir();
                    let a = lifted_correction(innovation, &yhat.dir(), &y, &u.vec());
                    x = advance_plant(&x, &u, h);
                    yhat = act(&group_exp(&AlgebraElement(a * h)), &yhat);
                }
                Method::Rk4Project => {
                    let field = |u: &Vec3, Pair(xm, yh): Pair<Mat3, Vec3>| {
                        let y = xm.transpose() * y0.dir();
                        Pair(xm * hat(u), -u.cross(&yh) + innovation.innovation(&yh, &y))
                    };
                    let inputs = stage_inputs(&sim.input, t, h);
                    let Pair(xm, yh) = rk4_step(Pair(*x.matrix(), yhat.dir()), &inputs, h, field);
                    if !finite_mat(&xm) || !finite_vec(&yh) {
                        return Err(SimError::NonFinite {
                            t: t + h,
                            what: "projected state",
                        });
                    }
                    x = GroupElement::from_matrix_unchecked(orthonormalize(&xm));
                    yhat = OutputPoint::renormalized(yh);
                }
            }
        }
        if !finite_mat(x.matrix()) || !finite_vec(&yhat.dir()) {
            return Err(SimError::NonFinite {
                t: t + h,
                what: "projected state",
            });
        }
        if (i + 1) % sim.sample_every == 0 || i + 1 == steps.len() {
            record.samples.push(sample(t + h, x, yhat));
        }
    }
    Ok(record)
}

/// Plant and lifted observer `X̂̇ = X̂·hat(u + v × ŷ)` both on SO(3), where `v`
/// is the projected innovation. The recorded angle is that of the canonical
/// error `act(X̂X⁻¹, y0)` from `y0`.
pub fn simulate_lifted<I: Innovation + ?Sized>(
    sim: &Simulation,
    innovation: &I,
    x0: GroupElement,
    xhat0: GroupElement,
) -> Result<TrajectoryRecord, SimError> {
    sim.validate()?;
    let y0 = sim.y0;
    let sample = |t: f64, x: GroupElement, xhat: GroupElement| {
        let e = canonical_error_from_group(&xhat, &x, &y0);
        Sample {
            t,
            x,
            xhat: Some(xhat),
            y: act(&x, &y0),
            yhat: act(&xhat, &y0),
            theta: error_angle(&e, &y0),
            drift: xhat.drift(),
        }
    };
    let steps = sim.steps();
    let mut record = TrajectoryRecord {
        samples: Vec::with_capacity(steps.len() / sim.sample_every + 2),
    };
    let (mut x, mut xhat) = (x0, xhat0);
    record.samples.push(sample(0.0, x, xhat));
    let breaks = sim.input.breakpoints();
    for (i, &(t, h)) in steps.iter().enumerate() {
        for (t, h) in split_at(&breaks, t, h) {
            match sim.integrator.method {
                Method::LieEuler => {
                    let u = sim.input.eval(t);
                    let y = act(&x, &y0).dir();
                    let yh = act(&xhat, &y0).dir();
                    let a = lifted_correction(innovation, &yh, &y, &u.vec());
                    x = advance_plant(&x, &u, h);
                    xhat = &xhat * &group_exp(&AlgebraElement(a * h));
                }
                Method::Rk4Project => {
                    let field = |u: &Vec3, Pair(xm, xh): Pair<Mat3, Mat3>| {
                        let y = xm.transpose() * y0.dir();
                        let yh = xh.transpose() * y0.dir();
                        let a = lifted_correction(innovation, &yh, &y, u);
                        Pair(xm * hat(u), xh * hat(&a))
                    };
                    let inputs = stage_inputs(&sim.input, t, h);
                    let Pair(xm, xh) =
                        rk4_step(Pair(*x.matrix(), *xhat.matrix()), &inputs, h, field);
                    if !finite_mat(&xm) || !finite_mat(&xh) {
                        return Err(SimError::NonFinite {
                            t: t + h,
                            what: "lifted state",
                        });
                    }
                    x = GroupElement::from_matrix_unchecked(orthonormalize(&xm));
                    xhat = GroupElement::from_matrix_unchecked(orthonormalize(&xh));
                }
            }
        }
        if !finite_mat(x.matrix()) || !finite_mat(xhat.matrix()) {
            return Err(SimError::NonFinite {
                t: t + h,
                what: "lifted state",
            });
        }
        if (i + 1) % sim.sample_every == 0 || i + 1 == steps.len() {
            record.samples.push(sample(t + h, x, xhat));
        }
    }
    Ok(record)
}

/// Lifted and projected observers run side by side from matching initial
/// conditions.
#[derive(Clone, Debug)]
pub struct CoSimReport {
    pub projected: TrajectoryRecord,
    pub lifted: TrajectoryRecord,
    /// `max_t ‖act(X̂(t), y0) − ŷ(t)‖`.
    pub max_consistency: f64,
}

pub fn co_simulate<I: Innovation + ?Sized>(
    sim: &Simulation,
    innovation: &I,
    x0: GroupElement,
    xhat0: GroupElement,
) -> Result<CoSimReport, SimError> {
    let yhat0 = act(&xhat0, &sim.y0);
    let projected = simulate_projected(sim, innovation, x0, yhat0)?;
    let lifted = simulate_lifted(sim, innovation, x0, xhat0)?;
    let max_consistency = projected
        .samples
        .iter()
        .zip(&lifted.samples)
        .map(|(p, l)| p.yhat.distance_to(&l.yhat))
        .fold(0.0, f64::max);
    Ok(CoSimReport {
        projected,
        lifted,
        max_consistency,
    })
}

/// `max_t |θ(t) − θ(0)|`: zero for a synchronous pair (innovation off).
pub fn check_synchrony(record: &TrajectoryRecord) -> f64 {
    let theta0 = record.samples.first().map_or(0.0, |s| s.theta);
    record
        .samples
        .iter()
        .map(|s| (s.theta - theta0).abs())
        .fold(0.0, f64::max)
}

/// Largest pointwise range of `θ(t)` across records sampled at the same times.
pub fn pointwise_spread(records: &[TrajectoryRecord]) -> f64 {
    let Some(first) = records.first() else {
        return 0.0;
    };
    (0..first.samples.len())
        .map(|i| {
            let (lo, hi) =
                records
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                        let th = r.samples[i].theta;
                        (lo.min(th), hi.max(th))
                    });
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// `max_t |θ(t) − 2·atan(tan(θ0/2)e^{−kt})|`.
pub fn closed_form_deviation(record: &TrajectoryRecord, k: f64) -> Result<f64, SimError> {
    let theta0 = record.samples[0].theta;
    let mut worst = 0.0_f64;
    for s in &record.samples {
        let oracle = error_angle_closed_form(theta0, k, s.t)?;
        worst = worst.max((s.theta - oracle).abs());
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Realization {
    Projected,
    Lifted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub runs: usize,
    pub seed: u64,
    #[serde(default = "default_realization")]
    pub realization: Realization,
    #[serde(default = "default_exclusion")]
    pub exclusion: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_realization() -> Realization {
    Realization::Projected
}

fn default_exclusion() -> f64 {
    DEFAULT_EXCLUSION
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

impl MonteCarloSpec {
    pub fn new(runs: usize, seed: u64) -> Self {
        Self {
            runs,
            seed,
            realization: Realization::Projected,
            exclusion: DEFAULT_EXCLUSION,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub runs: Vec<RunSummary>,
    pub converged_fraction: f64,
}

/// Seeded sweep over random observer initializations, uniform on S² for the
/// projected observer or Haar on SO(3) for the lifted one, excluding a cap of
/// radius `exclusion` around the antipode of the initial output. Runs execute
/// in parallel and are merged by index.
pub fn monte_carlo(
    sim: &Simulation,
    cost: &CostFunction,
    x0: GroupElement,
    spec: &MonteCarloSpec,
) -> Result<MonteCarloReport, SimError> {
    let y_init = act(&x0, &sim.y0);
    let runs = (0..spec.runs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = run_rng(spec.seed, i);
            let record = match spec.realization {
                Realization::Projected => {
                    let yhat0 = uniform_sphere_excluding(&mut rng, &y_init, spec.exclusion);
                    simulate_projected(sim, cost, x0, yhat0)?
                }
                Realization::Lifted => {
                    let xhat0 = haar_rotation_excluding(&mut rng, &sim.y0, &y_init, spec.exclusion);
                    simulate_lifted(sim, cost, x0, xhat0)?
                }
            };
            Ok(record.summarize(spec.threshold))
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let converged = runs.iter().filter(|r| r.converged()).count();
    let converged_fraction = if runs.is_empty() {
        0.0
    } else {
        converged as f64 / runs.len() as f64
    };
    Ok(MonteCarloReport {
        runs,
        converged_fraction,
    })
}

/// Circle instance setup. The input is the rotation rate about the plane
/// normal, taken from the third component of `input`.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleSimulation {
    pub k: f64,
    pub y0: CirclePoint,
    pub input: InputSignal,
    pub integrator: IntegratorSpec,
    pub t_end: f64,
    pub sample_every: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircleSample {
    pub t: f64,
    pub x: PlanarRotation,
    pub xhat: PlanarRotation,
    pub y: CirclePoint,
    pub yhat: CirclePoint,
    /// `|ŷ − y|` wrapped into `[0, π]`.
    pub theta: f64,
    /// Closed-form observer output at `t`.
    pub yhat_oracle: CirclePoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircleReport {
    pub samples: Vec<CircleSample>,
    /// `max_t |ŷ(t) − ŷ_oracle(t)|`.
    pub max_deviation: f64,
    /// `|φ̂ − φ|` at `t_end`.
    pub final_state_error: f64,
}

/// Simulates the circle plant `φ̇ = ω` and the lifted observer
/// `φ̂̇ = ω + k sin(ŷ − y)` (equivalently `ŷ̇ = −ω − k sin(ŷ − y)`), and compares
/// `ŷ` against `y_exact(t) + 2·atan(tan(δ0/2)e^{−kt})`, with `y_exact` from the
/// closed-form input integral.
pub fn so2_oracle_run(
    sim: &CircleSimulation,
    x0: PlanarRotation,
    xhat0: PlanarRotation,
) -> Result<CircleReport, SimError> {
    sim.integrator.validate()?;
    CostFunction::new(sim.k)?;
    if !(sim.t_end.is_finite() && sim.t_end > 0.0) {
        return Err(SimError::Horizon(sim.t_end));
    }
    if sim.sample_every == 0 {
        return Err(SimError::SampleEvery);
    }
    let delta0 = circle::difference(&circle::act(&xhat0, &sim.y0), &circle::act(&x0, &sim.y0));
    if delta0.abs() >= std::f64::consts::PI {
        return Err(ObserverError::InitialAngleOutOfRange(delta0.abs()).into());
    }
    let k = sim.k;
    let y0 = sim.y0.angle();
    let oracle = |t: f64| {
        let y_exact = y0 - x0.angle() - sim.input.integral(t).z;
        let delta = 2.0 * ((delta0 * 0.5).tan() * (-k * t).exp()).atan();
        CirclePoint::new(y_exact + delta)
    };
    let sample = |t: f64, x: f64, xhat: f64| {
        let (x, xhat) = (PlanarRotation::new(x), PlanarRotation::new(xhat));
        let y = circle::act(&x, &sim.y0);
        let yhat = circle::act(&xhat, &sim.y0);
        CircleSample {
            t,
            x,
            xhat,
            y,
            yhat,
            theta: circle::difference(&yhat, &y).abs(),
            yhat_oracle: oracle(t),
        }
    };

    let h = sim.integrator.step;
    let full = (sim.t_end / h + 1e-9).floor() as usize;
    let mut steps: Vec<(f64, f64)> = (0..full).map(|i| (i as f64 * h, h)).collect();
    if sim.t_end - full as f64 * h > 1e-12 {
        steps.push((full as f64 * h, sim.t_end - full as f64 * h));
    }

    // unwrapped angles during integration
    let (mut x, mut xhat) = (x0.angle(), xhat0.angle());
    let field = |u: &Vec3, Pair(x, xh): Pair<f64, f64>| {
        let w = u.z;
        let (y, yh) = (y0 - x, y0 - xh);
        Pair(w, w - circle_innovation(k, yh, y))
    };
    let breaks = sim.input.breakpoints();
    let mut samples = vec![sample(0.0, x, xhat)];
    for (i, &(t, h)) in steps.iter().enumerate() {
        for (t, h) in split_at(&breaks, t, h) {
            match sim.integrator.method {
                Method::LieEuler => {
                    let Pair(dx, dxh) = field(&sim.input.eval(t).vec(), Pair(x, xhat));
                    x += h * dx;
                    xhat += h * dxh;
                }
                Method::Rk4Project => {
                    let inputs = stage_inputs(&sim.input, t, h);
                    let Pair(nx, nxh) = rk4_step(Pair(x, xhat), &inputs, h, field);
                    x = nx;
                    xhat = nxh;
                }
            }
        }
        if !(x.is_finite() && xhat.is_finite()) {
            return Err(SimError::NonFinite {
                t: t + h,
                what: "circle state",
            });
        }
        if (i + 1) % sim.sample_every == 0 || i + 1 == steps.len() {
            samples.push(sample(t + h, x, xhat));
        }
    }
    let max_deviation = samples
        .iter()
        .map(|s| circle::difference(&s.yhat, &s.yhat_oracle).abs())
        .fold(0.0, f64::max);
    let last = samples.last().expect("initial sample present");
    let final_state_error = circle::wrap(last.xhat.angle() - last.x.angle()).abs();
    Ok(CircleReport {
        samples,
        max_deviation,
        final_state_error,
    })
}

/// `‖XᵀX − I‖_F` after `steps` Lie–Euler updates with a constant input.
pub fn lie_euler_drift(u: &AlgebraElement, h: f64, steps: usize) -> f64 {
    let inc = group_exp(&u.scale(h));
    let mut x = GroupElement::identity();
    let mut worst = 0.0_f64;
    for _ in 0..steps {
        x = &x * &inc;
        worst = worst.max(orthonormality_drift_of(x.matrix()));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observer::NoInnovation;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn sim(input: InputSignal, t_end: f64) -> Simulation {
        Simulation::new(input, IntegratorSpec::default(), t_end)
    }

    #[test]
    fn steps_split_at_switch_times() {
        assert_eq!(split_at(&[], 0.0, 0.1), vec![(0.0, 0.1)]);
        let pieces = split_at(&[0.05, 0.07, 0.2], 0.0, 0.1);
        assert_eq!(pieces.len(), 3);
        assert_eq!(pieces[1], (0.05, 0.07 - 0.05));
        assert!((pieces[2].0 + pieces[2].1 - 0.1).abs() < 1e-15);
        // a switch on the step boundary does not create an empty piece
        assert_eq!(split_at(&[0.1], 0.0, 0.1), vec![(0.0, 0.1)]);
        assert_eq!(split_at(&[0.1], 0.1, 0.1), vec![(0.1, 0.1)]);
    }

    #[test]
    fn stage_inputs_take_left_limit_at_end() {
        let u = InputSignal::PiecewiseConstant {
            segments: vec![
                crate::system::Segment {
                    start: 0.0,
                    value: [1.0, 0.0, 0.0],
                },
                crate::system::Segment {
                    start: 0.5,
                    value: [2.0, 0.0, 0.0],
                },
            ],
        };
        let s = stage_inputs(&u, 0.4, 0.1);
        assert_eq!([s[0].x, s[1].x, s[2].x], [1.0, 1.0, 1.0]);
        let s = stage_inputs(&u, 0.5, 0.1);
        assert_eq!([s[0].x, s[1].x, s[2].x], [2.0, 2.0, 2.0]);
    }

    #[test]
    fn step_schedule_lands_on_horizon() {
        let s = Simulation::new(
            InputSignal::zero(),
            IntegratorSpec::new(Method::Rk4Project, 3e-3),
            0.01,
        );
        let steps = s.steps();
        assert_eq!(steps.len(), 4);
        let (t, h) = *steps.last().unwrap();
        assert!((t + h - 0.01).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_setup() {
        let mut s = sim(InputSignal::zero(), 1.0);
        s.integrator.step = 0.02;
        let c = CostFunction::default();
        let e3 = OutputPoint::e3();
        assert_eq!(
            simulate_projected(&s, &c, GroupElement::identity(), e3).unwrap_err(),
            SimError::StepSize(0.02)
        );
        s.integrator.step = -1.0;
        assert!(simulate_projected(&s, &c, GroupElement::identity(), e3).is_err());
        let s = sim(InputSignal::zero(), 0.0);
        assert_eq!(
            simulate_lifted(&s, &c, GroupElement::identity(), GroupElement::identity())
                .unwrap_err(),
            SimError::Horizon(0.0)
        );
    }

    #[test]
    fn non_finite_input_aborts() {
        let s = sim(InputSignal::constant(Vec3::new(f64::NAN, 0.0, 0.0)), 0.1);
        let err = simulate_projected(
            &s,
            &CostFunction::default(),
            GroupElement::identity(),
            OutputPoint::e1(),
        )
        .unwrap_err();
        assert!(matches!(err, SimError::NonFinite { .. }));
    }

    #[test]
    fn diagonal_is_invariant() {
        let s = sim(
            InputSignal::sinusoid(Vec3::new(0.5, -1.0, 0.3), 0.2, 0.1),
            2.0,
        );
        let x0 = GroupElement::rotation_x(0.3);
        let rec = simulate_projected(&s, &CostFunction::default(), x0, act(&x0, &s.y0)).unwrap();
        assert!(rec.samples.iter().all(|p| p.theta <= 1e-9));
    }

    #[test]
    fn quarter_turn_decay_matches_closed_form() {
        let s = sim(InputSignal::zero(), 1.0);
        let rec = simulate_projected(
            &s,
            &CostFunction::default(),
            GroupElement::identity(),
            OutputPoint::e1(),
        )
        .unwrap();
        let oracle = error_angle_closed_form(FRAC_PI_2, 1.0, 1.0).unwrap();
        assert!((rec.last().theta - oracle).abs() < 1e-5);
        assert!((rec.last().theta - 0.7051).abs() < 1e-4);
    }

    #[test]
    fn antipodal_start_is_stationary() {
        let s = sim(InputSignal::zero(), 2.0);
        let rec = simulate_projected(
            &s,
            &CostFunction::default(),
            GroupElement::identity(),
            OutputPoint::e3().antipode(),
        )
        .unwrap();
        assert!(rec.samples.iter().all(|p| (p.theta - PI).abs() <= 1e-9));
    }

    #[test]
    fn lifted_matched_start_stays_matched() {
        let s = sim(
            InputSignal::sinusoid(Vec3::new(1.0, 0.2, -0.4), 0.5, 0.0),
            2.0,
        );
        let x0 = GroupElement::rotation_y(0.7);
        let rec = simulate_lifted(&s, &CostFunction::default(), x0, x0).unwrap();
        assert!(rec.samples.iter().all(|p| p.theta <= 1e-9));
    }

    #[test]
    fn synchrony_with_innovation_off() {
        let s = sim(
            InputSignal::sinusoid(Vec3::new(0.3, 1.0, -0.5), 0.4, 0.2),
            3.0,
        );
        let rec = simulate_projected(
            &s,
            &NoInnovation,
            GroupElement::identity(),
            OutputPoint::e1(),
        )
        .unwrap();
        assert!(check_synchrony(&rec) <= 1e-8);
        let same = simulate_projected(
            &s,
            &NoInnovation,
            GroupElement::identity(),
            OutputPoint::e3(),
        )
        .unwrap();
        assert!(check_synchrony(&same) <= 1e-9);
        let corrected = simulate_projected(
            &s,
            &CostFunction::default(),
            GroupElement::identity(),
            OutputPoint::e1(),
        )
        .unwrap();
        assert!(check_synchrony(&corrected) > 0.5);
    }

    #[test]
    fn summary_fields() {
        let mut s = sim(InputSignal::zero(), 12.0);
        s.sample_every = 10;
        let rec = simulate_projected(
            &s,
            &CostFunction::new(2.0).unwrap(),
            GroupElement::identity(),
            OutputPoint::e1(),
        )
        .unwrap();
        let summary = rec.summarize(DEFAULT_THRESHOLD);
        assert!((summary.initial_angle - FRAC_PI_2).abs() < 1e-15);
        let rate = summary.fitted_rate.unwrap();
        assert!((rate - 2.0).abs() < 0.02 * 2.0, "rate {rate}");
        // closed form crossing time for θ = 1e-3
        let t_cross = ((1e-3_f64 / 2.0).tan() / (FRAC_PI_2 / 2.0).tan()).ln() / -2.0;
        let tc = summary.t_converged.unwrap();
        assert!(tc >= t_cross - 1e-9 && tc <= t_cross + 0.01 + 1e-9);
        assert!(summary.max_drift < 1e-12);
    }

    #[test]
    fn decay_rate_needs_enough_samples() {
        let pts: Vec<(f64, f64)> = (0..9).map(|i| (i as f64, -(i as f64))).collect();
        assert_eq!(fit_decay_rate(&pts), None);
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
        assert!((fit_decay_rate(&pts).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let s = sim(InputSignal::zero(), 1.0).with_sample_every(50);
        let spec = MonteCarloSpec::new(8, 42);
        let a = monte_carlo(
            &s,
            &CostFunction::default(),
            GroupElement::identity(),
            &spec,
        )
        .unwrap();
        let b = monte_carlo(
            &s,
            &CostFunction::default(),
            GroupElement::identity(),
            &spec,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.runs.len(), 8);
        let other = monte_carlo(
            &s,
            &CostFunction::default(),
            GroupElement::identity(),
            &MonteCarloSpec::new(8, 43),
        )
        .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn circle_matched_start() {
        let c = CircleSimulation {
            k: 1.0,
            y0: CirclePoint::new(0.3),
            input: InputSignal::sinusoid(Vec3::new(0.0, 0.0, 1.0), 0.3, 0.0),
            integrator: IntegratorSpec::new(Method::Rk4Project, 1e-3),
            t_end: 2.0,
            sample_every: 10,
        };
        let r = so2_oracle_run(&c, PlanarRotation::new(0.5), PlanarRotation::new(0.5)).unwrap();
        assert!(r.max_deviation <= 1e-10);
        assert!(r.final_state_error <= 1e-12);
    }

    #[test]
    fn circle_rejects_antipodal_start() {
        let c = CircleSimulation {
            k: 1.0,
            y0: CirclePoint::new(0.0),
            input: InputSignal::zero(),
            integrator: IntegratorSpec::default(),
            t_end: 1.0,
            sample_every: 1,
        };
        assert!(so2_oracle_run(&c, PlanarRotation::new(0.0), PlanarRotation::new(PI)).is_err());
    }

    #[test]
    fn lie_euler_stays_on_group() {
        assert!(lie_euler_drift(&AlgebraElement::new(0.7, -1.3, 2.1), 1e-3, 10_000) <= 1e-9);
    }
}
