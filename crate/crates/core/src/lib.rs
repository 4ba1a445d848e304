//! Observers for left-invariant systems on Lie groups whose outputs live on a
//! homogeneous space acted on from the right.
//!
//! The concrete instance is attitude kinematics on SO(3) observed through a
//! single body-frame direction on S², with the planar SO(2)/S¹ problem as a
//! scalar reference case.

pub mod manifold;
pub mod observer;
pub mod runner;
pub mod sampling;
pub mod scenario;
pub mod sim;
pub mod system;
pub mod verify;

pub use manifold::{
    act, group_exp, hat, in_stabiliser, riemannian_inner, section, vee, AlgebraElement,
    GeometryError, GroupElement, OutputPoint, TangentVector,
};
pub use observer::{CostFunction, HorizontalSubspace, Innovation};
pub use runner::{run, RunError, RunOutcome};
pub use scenario::{parse_scenario, preset, Scenario, ScenarioError, PRESETS};
pub use sim::{IntegratorSpec, Method, RunSummary, Simulation, TrajectoryRecord};
pub use system::InputSignal;
pub use verify::{verify_suite, PropertyResult};
