//! Gradient observers on S² and their lift to SO(3).
//!
//! With the invariant cost `f(ŷ, y) = k(1 − ⟨ŷ, y⟩)` the projected observer is
//!
//! ```text
//! ŷ̇ = −u × ŷ + k (I − ŷŷᵀ) y
//! ```
//!
//! and its horizontal lift is the complementary filter
//! `X̂̇ = X̂ · hat(u + k y × ŷ)` with `ŷ = act(X̂, y0)`.
//!
//! Sign conventions follow from the right action `act(R, y) = Rᵀy`: moving
//! `X̂` along `X̂·hat(Ω)` moves `ŷ` with velocity `−Ω × ŷ`. The horizontal
//! lift of `v ∈ T_ŷ S²` is therefore `X̂·hat(v × ŷ)`, i.e. `X̂·hat(−Ω̄(v))`
//! where `Ω̄(v) = ŷ × v` solves `Ω̄ × ŷ = v`, `Ω̄ ⊥ ŷ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::manifold::{
    act, hat, section, vee, AlgebraElement, GeometryError, GroupElement, Mat3, OutputPoint,
    TangentVector, Vec3,
};
use crate::sampling::{haar_rotation, uniform_sphere};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObserverError {
    #[error("gain must be positive and finite, got {0}")]
    InvalidGain(f64),
    #[error("initial angle {0} is outside [0, π)")]
    InitialAngleOutOfRange(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A correction term for the projected observer, evaluated on raw ambient
/// vectors so integrator stages can use it directly. The result should be
/// tangent at `yhat` whenever `yhat` is a unit vector.
pub trait Innovation: Send + Sync {
    fn innovation(&self, yhat: &Vec3, y: &Vec3) -> Vec3;
}

/// The invariant cost `f(ŷ, y) = (k/2)‖ŷ − y‖² = k(1 − ⟨ŷ, y⟩)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostFunction {
    k: f64,
}

impl Default for CostFunction {
    fn default() -> Self {
        Self { k: 1.0 }
    }
}

impl CostFunction {
    pub fn new(k: f64) -> Result<Self, ObserverError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(ObserverError::InvalidGain(k));
        }
        Ok(Self { k })
    }

    pub fn gain(&self) -> f64 {
        self.k
    }
}

impl Innovation for CostFunction {
    fn innovation(&self, yhat: &Vec3, y: &Vec3) -> Vec3 {
        (y - yhat * yhat.dot(y)) * self.k
    }
}

/// Innovation switched off: the observer is a pure internal model.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoInnovation;

impl Innovation for NoInnovation {
    fn innovation(&self, _yhat: &Vec3, _y: &Vec3) -> Vec3 {
        Vec3::zeros()
    }
}

/// `f(ŷ, y) = ‖A(ŷ − y)‖²` for a non-scalar weight `A`. Not invariant under
/// the action, so its gradient is not equivariant; kept as a negative control.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnisotropicCost {
    weight: Mat3,
}

impl AnisotropicCost {
    pub fn new(weight: Mat3) -> Self {
        Self { weight }
    }

    /// `diag(1, 2, 4)`.
    pub fn standard() -> Self {
        Self::new(Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 4.0)))
    }

    pub fn value(&self, yhat: &OutputPoint, y: &OutputPoint) -> f64 {
        (self.weight * (yhat.dir() - y.dir())).norm_squared()
    }

    pub fn grad1(&self, yhat: &OutputPoint, y: &OutputPoint) -> TangentVector {
        let g = self.weight.transpose() * self.weight * (yhat.dir() - y.dir()) * 2.0;
        TangentVector::project(*yhat, g)
    }
}

impl Innovation for AnisotropicCost {
    fn innovation(&self, yhat: &Vec3, y: &Vec3) -> Vec3 {
        let g = self.weight.transpose() * self.weight * (yhat - y) * 2.0;
        -(g - yhat * yhat.dot(&g))
    }
}

/// `f(ŷ, y) = k(1 − ⟨ŷ, y⟩)`.
pub fn cost(c: &CostFunction, yhat: &OutputPoint, y: &OutputPoint) -> f64 {
    c.k * (1.0 - yhat.dir().dot(&y.dir()))
}

/// `grad₁ f(ŷ, y) = −k(I − ŷŷᵀ)y` under the embedded metric.
pub fn grad1_cost(c: &CostFunction, yhat: &OutputPoint, y: &OutputPoint) -> TangentVector {
    TangentVector::project(*yhat, -y.dir() * c.k)
}

/// `k(I − ŷŷᵀ)y`, the negative gradient.
pub fn innovation_s2(c: &CostFunction, yhat: &OutputPoint, y: &OutputPoint) -> TangentVector {
    TangentVector::project(*yhat, y.dir() * c.k)
}

/// The same innovation written as `k(ŷ × y) × ŷ`.
pub fn innovation_s2_cross_form(c: &CostFunction, yhat: &OutputPoint, y: &OutputPoint) -> Vec3 {
    yhat.dir().cross(&y.dir()).cross(&yhat.dir()) * c.k
}

/// Internal model plus innovation, `−u × ŷ + k(I − ŷŷᵀ)y`.
pub fn projected_observer_field(
    c: &CostFunction,
    yhat: &OutputPoint,
    y: &OutputPoint,
    u: &AlgebraElement,
) -> TangentVector {
    let d = yhat.dir();
    TangentVector::project(*yhat, -u.vec().cross(&d) + c.innovation(&d, &y.dir()))
}

/// `Ω̄(v) = ŷ × v`, the unique solution of `Ω̄ × ŷ = v` orthogonal to `ŷ`.
/// Tangency of `v` is enforced when the [`TangentVector`] is built.
pub fn omega_bar(v: &TangentVector) -> AlgebraElement {
    AlgebraElement(v.base().dir().cross(&v.vec()))
}

/// The horizontal distribution `H(X̂) = {ω×·X̂ : ω ⊥ y0}` complementary to the
/// stabiliser of `y0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HorizontalSubspace {
    y0: OutputPoint,
}

impl HorizontalSubspace {
    pub fn new(y0: OutputPoint) -> Self {
        Self { y0 }
    }

    pub fn reference(&self) -> OutputPoint {
        self.y0
    }

    /// Body-frame algebra element of the lift, `v × ŷ`.
    pub fn lift_algebra(
        &self,
        xhat: &GroupElement,
        v: &TangentVector,
    ) -> Result<AlgebraElement, GeometryError> {
        let yhat = act(xhat, &self.y0);
        let distance = yhat.distance_to(&v.base());
        if distance > crate::manifold::STABILISER_TOL {
            return Err(GeometryError::BaseMismatch { distance });
        }
        Ok(-omega_bar(v))
    }

    /// `(v)^H = X̂·hat(v × ŷ)`: the unique horizontal tangent at `X̂` that
    /// `act(·, y0)` maps to `v`.
    pub fn horizontal_lift(
        &self,
        xhat: &GroupElement,
        v: &TangentVector,
    ) -> Result<Mat3, GeometryError> {
        Ok(xhat.matrix() * self.lift_algebra(xhat, v)?.hat())
    }

    /// Component of a group tangent `g ∈ T_X̂ SO(3)` along the stabiliser
    /// direction; zero iff `g ∈ H(X̂)`.
    pub fn vertical_residual(&self, xhat: &GroupElement, g: &Mat3) -> Result<f64, GeometryError> {
        let body = vee(&(xhat.matrix().transpose() * g))?;
        Ok(body.dot(&act(xhat, &self.y0).dir()).abs())
    }
}

/// Body-frame velocity of the lifted observer for an arbitrary innovation:
/// `u + v × ŷ` with `v` the projected innovation.
pub fn lifted_correction<I: Innovation + ?Sized>(
    innovation: &I,
    yhat: &Vec3,
    y: &Vec3,
    u: &Vec3,
) -> Vec3 {
    u + innovation.innovation(yhat, y).cross(yhat)
}

/// The complementary filter in body coordinates: `u + k(y × ŷ)`, to be
/// integrated as `X̂̇ = X̂·hat(·)`.
pub fn lifted_observer_field(
    c: &CostFunction,
    xhat: &GroupElement,
    y: &OutputPoint,
    u: &AlgebraElement,
    y0: &OutputPoint,
) -> AlgebraElement {
    let yhat = act(xhat, y0);
    AlgebraElement(u.vec() + y.dir().cross(&yhat.dir()) * c.k)
}

/// The same field assembled as `X̂u − (grad₁ f)^H`, as a group tangent.
pub fn lifted_observer_field_from_gradient(
    c: &CostFunction,
    xhat: &GroupElement,
    y: &OutputPoint,
    u: &AlgebraElement,
    y0: &OutputPoint,
) -> Result<Mat3, GeometryError> {
    let yhat = act(xhat, y0);
    let lift = HorizontalSubspace::new(*y0).horizontal_lift(xhat, &grad1_cost(c, &yhat, y))?;
    Ok(xhat.matrix() * u.hat() - lift)
}

/// `f̃(X̂, X) = f(act(X̂, y0), act(X, y0))`.
pub fn lifted_cost(
    c: &CostFunction,
    xhat: &GroupElement,
    x: &GroupElement,
    y0: &OutputPoint,
) -> f64 {
    cost(c, &act(xhat, y0), &act(x, y0))
}

/// Gradient of `f̃` in its first argument for the metric
/// `⟨A·X̂, B·X̂⟩ = ½ tr(AᵀB)`: `k·X̂·hat(ŷ × y)`.
pub fn grad1_lifted_cost(
    c: &CostFunction,
    xhat: &GroupElement,
    x: &GroupElement,
    y0: &OutputPoint,
) -> Mat3 {
    let yhat = act(xhat, y0).dir();
    let y = act(x, y0).dir();
    xhat.matrix() * hat(&(yhat.cross(&y) * c.k))
}

/// Right-invariant group error `E_r = X̂·X⁻¹`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupError {
    pub e: GroupElement,
}

impl GroupError {
    pub fn new(xhat: &GroupElement, x: &GroupElement) -> Self {
        Self {
            e: xhat * &x.inverse(),
        }
    }

    pub fn canonical(&self, y0: &OutputPoint) -> OutputPoint {
        act(&self.e, y0)
    }
}

/// Canonical error `e = act(X̂·X⁻¹, y0)`; `e = y0` means no output error.
pub fn canonical_error_from_group(
    xhat: &GroupElement,
    x: &GroupElement,
    y0: &OutputPoint,
) -> OutputPoint {
    GroupError::new(xhat, x).canonical(y0)
}

/// Geodesic angle between two points of S², in `[0, π]`.
///
/// Computed as `atan2(‖ŷ × y‖, ŷ·y)`, which agrees with
/// `arccos(clamp(ŷ·y))` but keeps full relative precision near 0 and π.
pub fn error_angle(yhat: &OutputPoint, y: &OutputPoint) -> f64 {
    let (a, b) = (yhat.dir(), y.dir());
    a.cross(&b).norm().atan2(a.dot(&b))
}

/// Solution of `θ̇ = −k sin θ`: `2·atan(tan(θ0/2)·e^{−kt})`.
pub fn error_angle_closed_form(theta0: f64, k: f64, t: f64) -> Result<f64, ObserverError> {
    if !(0.0..std::f64::consts::PI).contains(&theta0) {
        return Err(ObserverError::InitialAngleOutOfRange(theta0));
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(ObserverError::InvalidGain(k));
    }
    Ok(2.0 * ((theta0 * 0.5).tan() * (-k * t).exp()).atan())
}

/// Largest `‖Sᵀ·g(ŷ, y) − g(Sᵀŷ, Sᵀy)‖` over random `(S, ŷ, y)`, where `g` is
/// the innovation. Zero (to rounding) exactly when the innovation is equivariant.
pub fn check_innovation_equivariance<I: Innovation + ?Sized>(
    innovation: &I,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let s = haar_rotation(&mut rng);
        let yhat = uniform_sphere(&mut rng);
        let y = uniform_sphere(&mut rng);
        let st = s.matrix().transpose();
        let lhs = st * innovation.innovation(&yhat.dir(), &y.dir());
        let rhs = innovation.innovation(&act(&s, &yhat).dir(), &act(&s, &y).dir());
        worst = worst.max((lhs - rhs).norm());
    }
    worst
}

/// An invariant cost built from a single-argument candidate `f̂` with its
/// minimum at `y0`: `f(y₁, y₂) = f̂(act(X₁·X₂⁻¹, y0))` for representatives
/// `act(Xᵢ, y0) = yᵢ`.
///
/// Well defined when `f̂` is constant on stabiliser orbits.
pub struct InvariantCost<F> {
    candidate: F,
    y0: OutputPoint,
}

impl<F: Fn(&OutputPoint) -> f64> InvariantCost<F> {
    pub fn evaluate(&self, y1: &OutputPoint, y2: &OutputPoint) -> Result<f64, GeometryError> {
        let x1 = section(y1, &self.y0)?;
        let x2 = section(y2, &self.y0)?;
        Ok((self.candidate)(&act(&(x1 * x2.inverse()), &self.y0)))
    }

    pub fn reference(&self) -> OutputPoint {
        self.y0
    }
}

pub fn make_invariant_cost<F: Fn(&OutputPoint) -> f64>(
    candidate: F,
    y0: OutputPoint,
) -> InvariantCost<F> {
    InvariantCost { candidate, y0 }
}

/// Circle instance: innovation `−k sin(ŷ − y)` of the cost `k(1 − cos(ŷ − y))`.
pub fn circle_innovation(k: f64, yhat: f64, y: f64) -> f64 {
    -k * (yhat - y).sin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn k(v: f64) -> CostFunction {
        CostFunction::new(v).unwrap()
    }

    /// Finite-difference directional derivative of `cost` at `yhat` along the
    /// great circle in direction `w`.
    fn fd_directional(c: &CostFunction, yhat: &OutputPoint, y: &OutputPoint, w: &Vec3) -> f64 {
        let eps = 1e-6;
        let n = w.norm();
        let step =
            |s: f64| OutputPoint::new(yhat.dir() * (s * n).cos() + w / n * (s * n).sin()).unwrap();
        (cost(c, &step(eps), y) - cost(c, &step(-eps), y)) / (2.0 * eps)
    }

    #[test]
    fn cost_examples() {
        let (e1, e2) = (OutputPoint::e1(), OutputPoint::e2());
        assert_eq!(cost(&k(1.0), &e1, &e1), 0.0);
        assert_eq!(cost(&k(1.0), &e1, &e2), 1.0);
        assert_eq!(cost(&k(2.0), &e1, &e1.antipode()), 4.0);
        let half_norm = 0.5 * (e1.dir() - e2.dir()).norm_squared();
        assert!((half_norm - cost(&k(1.0), &e1, &e2)).abs() < 1e-15);
    }

    #[test]
    fn gain_must_be_positive() {
        assert_eq!(
            CostFunction::new(-1.0),
            Err(ObserverError::InvalidGain(-1.0))
        );
        assert!(CostFunction::new(0.0).is_err());
        assert!(CostFunction::new(f64::NAN).is_err());
    }

    #[test]
    fn gradient_examples() {
        let (e1, e2) = (OutputPoint::e1(), OutputPoint::e2());
        let y = OutputPoint::from_xyz(0.2, 0.4, -0.9).unwrap();
        assert!(grad1_cost(&k(3.0), &y, &y).norm() < 1e-15);
        let g = grad1_cost(&k(1.0), &e1, &e2);
        assert!((g.vec() - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-15);
        // finite-difference oracle along the tangent basis at e1
        for w in [Vec3::y(), Vec3::z()] {
            let fd = fd_directional(&k(1.0), &e1, &e2, &w);
            assert!((fd - g.vec().dot(&w)).abs() < 1e-9);
        }
        let anti = grad1_cost(&k(1.0), &e1, &e1.antipode());
        assert!(anti.norm() < 1e-15);
        for w in [Vec3::y(), Vec3::z()] {
            assert!(fd_directional(&k(1.0), &e1, &e1.antipode(), &w).abs() < 1e-9);
        }
    }

    #[test]
    fn innovation_examples() {
        let (e1, e2) = (OutputPoint::e1(), OutputPoint::e2());
        let y = OutputPoint::from_xyz(-0.3, 0.1, 0.5).unwrap();
        assert!(innovation_s2(&k(2.0), &y, &y).norm() < 1e-15);
        let v = innovation_s2(&k(2.0), &e1, &e2);
        assert_eq!(v.vec(), Vec3::new(0.0, 2.0, 0.0));
        let g = grad1_cost(&k(2.0), &e1, &e2);
        assert_eq!(v.vec(), -g.vec());
    }

    #[test]
    fn projected_field_examples() {
        let (e1, e2) = (OutputPoint::e1(), OutputPoint::e2());
        let y = OutputPoint::from_xyz(0.6, -0.2, 0.1).unwrap();
        let u = AlgebraElement::new(0.4, 0.0, -1.0);
        let v = projected_observer_field(&k(1.5), &y, &y, &u);
        assert!((v.vec() + u.hat() * y.dir()).norm() < 1e-15);
        let v = projected_observer_field(&k(1.0), &e1, &e2, &AlgebraElement::ZERO);
        assert!((v.vec() - Vec3::y()).norm() < 1e-15);
        let v = projected_observer_field(&k(1.0), &e1, &e2, &AlgebraElement::new(0.0, 0.0, 1.0));
        assert!(v.vec().norm() < 1e-15);
    }

    #[test]
    fn omega_bar_examples() {
        let v = TangentVector::new(OutputPoint::e3(), Vec3::x()).unwrap();
        let w = omega_bar(&v);
        assert_eq!(w.vec(), Vec3::y());
        assert_eq!(w.vec().cross(&Vec3::z()), Vec3::x());
        let zero = TangentVector::zero(OutputPoint::e1());
        assert_eq!(omega_bar(&zero).vec(), Vec3::zeros());
    }

    #[test]
    fn lift_examples() {
        let e3 = OutputPoint::e3();
        let h = HorizontalSubspace::new(e3);
        let id = GroupElement::identity();
        let zero = h.horizontal_lift(&id, &TangentVector::zero(e3)).unwrap();
        assert_eq!(zero, Mat3::zeros());
        let v = TangentVector::new(e3, Vec3::x()).unwrap();
        let lift = h.horizontal_lift(&id, &v).unwrap();
        // v × ŷ = e1 × e3 = −e2
        assert_eq!(lift, hat(&-Vec3::y()));
        assert!(h.vertical_residual(&id, &lift).unwrap() < 1e-15);
        let wrong_base = TangentVector::new(OutputPoint::e1(), Vec3::y()).unwrap();
        assert!(matches!(
            h.horizontal_lift(&id, &wrong_base),
            Err(GeometryError::BaseMismatch { .. })
        ));
    }

    #[test]
    fn lifted_field_examples() {
        let y0 = OutputPoint::e1();
        let xhat = GroupElement::rotation_z(-FRAC_PI_2);
        assert!(act(&xhat, &y0).distance_to(&OutputPoint::e2()) < 1e-15);
        let f = lifted_observer_field(
            &k(1.0),
            &xhat,
            &OutputPoint::e1(),
            &AlgebraElement::ZERO,
            &y0,
        );
        assert!((f.vec() - Vec3::z()).norm() < 1e-15);
        let u = AlgebraElement::new(0.1, 0.2, 0.3);
        let y = act(&xhat, &y0);
        assert_eq!(lifted_observer_field(&k(1.0), &xhat, &y, &u, &y0), u);
    }

    #[test]
    fn lifted_cost_examples() {
        let y0 = OutputPoint::e1();
        let x = GroupElement::rotation_x(0.3);
        assert_eq!(lifted_cost(&k(1.0), &x, &x, &y0), 0.0);
        let xhat = GroupElement::rotation_z(-FRAC_PI_2);
        let c = lifted_cost(&k(1.0), &xhat, &GroupElement::identity(), &y0);
        assert!((c - 1.0).abs() < 1e-15);
        let x = GroupElement::rotation_y(0.4);
        let xhat = x * GroupElement::rotation_x(0.2);
        assert!(xhat.matrix().norm() > 0.0);
        let y = act(&x, &y0);
        let xhat = section(&y, &y0).unwrap();
        assert!(grad1_lifted_cost(&k(2.0), &xhat, &x, &y0).norm() < 1e-15);
    }

    #[test]
    fn canonical_error_examples() {
        let e3 = OutputPoint::e3();
        let x = GroupElement::rotation_y(1.3);
        assert!(canonical_error_from_group(&x, &x, &e3).distance_to(&e3) < 1e-15);
        let rx = GroupElement::rotation_x(0.9);
        let e = canonical_error_from_group(&rx, &GroupElement::identity(), &e3);
        assert!(e.distance_to(&act(&rx, &e3)) < 1e-15);
    }

    #[test]
    fn error_angle_examples() {
        let (e1, e2) = (OutputPoint::e1(), OutputPoint::e2());
        assert_eq!(error_angle(&e1, &e1), 0.0);
        assert!((error_angle(&e1, &e2) - FRAC_PI_2).abs() < 1e-15);
        assert!((error_angle(&e1, &e1.antipode()) - PI).abs() < 1e-15);
    }

    #[test]
    fn closed_form_examples() {
        assert!((error_angle_closed_form(1.2, 0.7, 0.0).unwrap() - 1.2).abs() < 1e-15);
        assert_eq!(error_angle_closed_form(0.0, 2.0, 3.0).unwrap(), 0.0);
        assert_eq!(
            error_angle_closed_form(PI, 1.0, 1.0),
            Err(ObserverError::InitialAngleOutOfRange(PI))
        );
        assert!(error_angle_closed_form(-0.1, 1.0, 1.0).is_err());
    }

    #[test]
    fn anisotropic_cost_gradient_matches_finite_difference() {
        let c = AnisotropicCost::standard();
        let yhat = OutputPoint::from_xyz(0.3, -0.5, 0.8).unwrap();
        let y = OutputPoint::from_xyz(-0.2, 0.9, 0.1).unwrap();
        let g = c.grad1(&yhat, &y);
        let inn = c.innovation(&yhat.dir(), &y.dir());
        assert!((g.vec() + inn).norm() < 1e-14);
        let w = TangentVector::project(yhat, Vec3::new(1.0, 0.3, -0.2)).vec();
        let n = w.norm();
        let eps = 1e-6;
        let step =
            |s: f64| OutputPoint::new(yhat.dir() * (s * n).cos() + w / n * (s * n).sin()).unwrap();
        let fd = (c.value(&step(eps), &y) - c.value(&step(-eps), &y)) / (2.0 * eps);
        assert!((fd - g.vec().dot(&w)).abs() < 1e-7);
    }

    #[test]
    fn equivariance_examples() {
        assert!(check_innovation_equivariance(&k(1.0), 0, 1) == 0.0);
        assert!(check_innovation_equivariance(&k(1.7), 200, 3) < 1e-12);
        assert!(check_innovation_equivariance(&AnisotropicCost::standard(), 200, 3) > 1e-3);
        assert_eq!(check_innovation_equivariance(&NoInnovation, 10, 3), 0.0);
    }

    #[test]
    fn invariant_cost_from_candidate() {
        let y0 = OutputPoint::e3();
        let c = k(1.3);
        let f = make_invariant_cost(
            move |z: &OutputPoint| 1.3 * (1.0 - z.dir().dot(&Vec3::z())),
            y0,
        );
        let y = OutputPoint::from_xyz(0.4, 0.1, -0.3).unwrap();
        assert!(f.evaluate(&y, &y).unwrap().abs() < 1e-15);
        assert!((f.evaluate(&y, &y0).unwrap() - cost(&c, &y, &y0)).abs() < 1e-15);
        assert_eq!(
            f.evaluate(&y0.antipode(), &y),
            Err(GeometryError::Antipodal)
        );
    }
}
