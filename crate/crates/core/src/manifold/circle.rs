//! The planar instance: SO(2) acting on the circle S¹.
//!
//! Both the group and the output space are stored as wrapped angles in
//! `(−π, π]`. A rotation by `φ` acts on a point at angle `y` by
//! `act(φ, y) = y − φ`, the planar counterpart of `Rᵀ y`.
//! The stabiliser of every point is trivial.

use std::f64::consts::{PI, TAU};

/// Wraps an angle into `(−π, π]`.
pub fn wrap(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanarRotation(f64);

impl PlanarRotation {
    pub fn new(angle: f64) -> Self {
        Self(wrap(angle))
    }

    pub fn identity() -> Self {
        Self(0.0)
    }

    pub fn angle(&self) -> f64 {
        self.0
    }

    pub fn compose(&self, rhs: &Self) -> Self {
        Self::new(self.0 + rhs.0)
    }

    pub fn inverse(&self) -> Self {
        Self::new(-self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CirclePoint(f64);

impl CirclePoint {
    pub fn new(angle: f64) -> Self {
        Self(wrap(angle))
    }

    pub fn angle(&self) -> f64 {
        self.0
    }

    /// Embedding into the plane `z = 0`.
    pub fn to_xyz(&self) -> [f64; 3] {
        [self.0.cos(), self.0.sin(), 0.0]
    }
}

pub fn act(x: &PlanarRotation, y: &CirclePoint) -> CirclePoint {
    CirclePoint::new(y.0 - x.0)
}

/// Signed geodesic difference `a − b` in `(−π, π]`.
pub fn difference(a: &CirclePoint, b: &CirclePoint) -> f64 {
    wrap(a.0 - b.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_range() {
        assert_eq!(wrap(PI), PI);
        assert!((wrap(-PI) - PI).abs() < 1e-15);
        assert!((wrap(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap(7.0) - (7.0 - TAU)).abs() < 1e-15);
    }

    #[test]
    fn right_action_law() {
        let (x, y) = (PlanarRotation::new(0.4), PlanarRotation::new(2.9));
        let p = CirclePoint::new(-1.3);
        let lhs = act(&x, &act(&y, &p));
        let rhs = act(&y.compose(&x), &p);
        assert!(difference(&lhs, &rhs).abs() < 1e-15);
    }

    #[test]
    fn stabiliser_is_trivial() {
        let p = CirclePoint::new(0.5);
        assert_eq!(act(&PlanarRotation::identity(), &p), p);
        assert!(difference(&act(&PlanarRotation::new(1e-3), &p), &p).abs() > 0.0);
    }
}
