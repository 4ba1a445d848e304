//! Rotation-group and sphere primitives.
//!
//! The state group is SO(3) stored as a 3×3 rotation matrix. The output space
//! is the unit sphere S², on which SO(3) acts from the right through
//! `act(R, y) = Rᵀ y`, so that `act(X, act(Y, y)) = act(Y·X, y)`.
//!
//! Every rotation produced here stays orthogonal to within [`ORTHOGONALITY_TOL`];
//! compositions are re-projected onto the group once their drift passes
//! [`REORTHONORMALIZE_TRIGGER`].

use std::fmt;
use std::ops::{Add, Mul, Neg};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub mod circle;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Largest admissible `‖XᵀX − I‖_F` for a group element.
pub const ORTHOGONALITY_TOL: f64 = 1e-9;
/// Drift above which a composed rotation is projected back onto SO(3).
pub const REORTHONORMALIZE_TRIGGER: f64 = 1e-12;
/// Distance under which a point counts as fixed by a rotation.
pub const STABILISER_TOL: f64 = 1e-9;
/// Largest admissible normal component of a tangent vector.
pub const TANGENCY_TOL: f64 = 1e-12;
/// Largest admissible symmetric part accepted by [`vee`].
pub const ANTISYMMETRY_TOL: f64 = 1e-9;
/// Distance to `−y0` below which [`section`] refuses to answer.
pub const ANTIPODAL_TOL: f64 = 1e-9;

/// Series/closed-form switch point for the exponential.
const SMALL_ANGLE: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not antisymmetric (‖A + Aᵀ‖_F = {residual:e})")]
    NotAntisymmetric { residual: f64 },
    #[error("matrix is not a rotation (‖XᵀX − I‖_F = {drift:e}, det = {det})")]
    NotRotation { drift: f64, det: f64 },
    #[error("vector of norm {norm} cannot be normalized onto the sphere")]
    DegenerateDirection { norm: f64 },
    #[error("vector is not tangent at its base point (normal component {residual:e})")]
    NotTangent { residual: f64 },
    #[error("tangent vectors live at different base points (distance {distance:e})")]
    BaseMismatch { distance: f64 },
    #[error("section undefined: output is antipodal to the reference direction")]
    Antipodal,
}

/// The hat isomorphism R³ → so(3), `hat(a)·b = a × b`.
pub fn hat(omega: &Vec3) -> Mat3 {
    Mat3::new(
        0.0, -omega.z, omega.y, //
        omega.z, 0.0, -omega.x, //
        -omega.y, omega.x, 0.0,
    )
}

/// Inverse of [`hat`]. Rejects matrices with a non-negligible symmetric part.
pub fn vee(a: &Mat3) -> Result<Vec3, GeometryError> {
    let residual = (a + a.transpose()).norm();
    if !(residual <= ANTISYMMETRY_TOL) {
        return Err(GeometryError::NotAntisymmetric { residual });
    }
    // read off the antisymmetric part so round-off in `a` averages out
    Ok(Vec3::new(
        0.5 * (a[(2, 1)] - a[(1, 2)]),
        0.5 * (a[(0, 2)] - a[(2, 0)]),
        0.5 * (a[(1, 0)] - a[(0, 1)]),
    ))
}

/// A velocity in the Lie algebra so(3), stored as its R³ coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlgebraElement(pub Vec3);

impl AlgebraElement {
    pub const ZERO: Self = Self(Vec3::new(0.0, 0.0, 0.0));

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vec3::new(x, y, z))
    }

    pub fn vec(&self) -> Vec3 {
        self.0
    }

    pub fn hat(&self) -> Mat3 {
        hat(&self.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0 * s)
    }
}

impl Add for AlgebraElement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl Neg for AlgebraElement {
    type Output = Self;
    fn neg(self) -> Self {
        Self(-self.0)
    }
}

impl From<Vec3> for AlgebraElement {
    fn from(v: Vec3) -> Self {
        Self(v)
    }
}

/// A rotation matrix in SO(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupElement(Mat3);

impl GroupElement {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Accepts a matrix that is already a rotation to within [`ORTHOGONALITY_TOL`].
    pub fn from_matrix(m: Mat3) -> Result<Self, GeometryError> {
        let drift = orthogonality_drift(&m);
        let det = m.determinant();
        if !(drift <= ORTHOGONALITY_TOL) || (det - 1.0).abs() > ORTHOGONALITY_TOL {
            return Err(GeometryError::NotRotation { drift, det });
        }
        Ok(Self(m))
    }

    /// Projects an arbitrary invertible matrix onto the nearest rotation.
    /// Matrices with negative determinant are rejected.
    pub fn from_matrix_projected(m: Mat3) -> Result<Self, GeometryError> {
        let det = m.determinant();
        if !(det > 0.0) {
            return Err(GeometryError::NotRotation {
                drift: orthogonality_drift(&m),
                det,
            });
        }
        Ok(Self(orthonormalize(&m)))
    }

    /// Wraps an integrator result without checks. Callers are responsible for
    /// projecting when the drift matters.
    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `‖XᵀX − I‖_F`.
    pub fn drift(&self) -> f64 {
        orthogonality_drift(&self.0)
    }

    pub fn rotation_x(angle: f64) -> Self {
        group_exp(&AlgebraElement::new(angle, 0.0, 0.0))
    }

    pub fn rotation_y(angle: f64) -> Self {
        group_exp(&AlgebraElement::new(0.0, angle, 0.0))
    }

    pub fn rotation_z(angle: f64) -> Self {
        group_exp(&AlgebraElement::new(0.0, 0.0, angle))
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let c = 0.5 * (self.0.trace() - 1.0);
        c.clamp(-1.0, 1.0).acos()
    }

    /// Composition with re-projection once drift exceeds the trigger.
    pub fn compose(&self, rhs: &Self) -> Self {
        let m = self.0 * rhs.0;
        if orthogonality_drift(&m) > REORTHONORMALIZE_TRIGGER {
            Self(orthonormalize(&m))
        } else {
            Self(m)
        }
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;
    fn mul(self, rhs: GroupElement) -> GroupElement {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a GroupElement> for &'a GroupElement {
    type Output = GroupElement;
    fn mul(self, rhs: &GroupElement) -> GroupElement {
        self.compose(rhs)
    }
}

/// `‖mᵀm − I‖_F`.
pub fn orthonormality_drift_of(m: &Mat3) -> f64 {
    orthogonality_drift(m)
}

fn orthogonality_drift(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

/// Orthogonal polar factor of `m`.
///
/// Near-orthogonal inputs take a few Newton–Schulz steps
/// `X ← X(3I − XᵀX)/2`, which converge quadratically to the polar factor;
/// anything further away goes through an SVD.
pub fn orthonormalize(m: &Mat3) -> Mat3 {
    let mut x = *m;
    if orthogonality_drift(&x) < 0.1 {
        for _ in 0..8 {
            let gram = x.transpose() * x;
            let d = (gram - Mat3::identity()).norm();
            if d <= 4.0 * f64::EPSILON {
                break;
            }
            x = x * (Mat3::identity() * 3.0 - gram) * 0.5;
        }
        return x;
    }
    let svd = x.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    x = r;
    x
}

/// Matrix exponential of `hat(ω)` by Rodrigues' formula.
///
/// `exp(Ω×) = I + A·Ω× + B·Ω×²` with `A = sin θ/θ`, `B = (1 − cos θ)/θ²`.
/// Below `θ = 1e-4` both coefficients come from their Taylor series.
pub fn group_exp(omega: &AlgebraElement) -> GroupElement {
    let w = omega.0;
    let theta_sq = w.norm_squared();
    let theta = theta_sq.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (
            1.0 - theta_sq / 6.0 + theta_sq * theta_sq / 120.0,
            0.5 - theta_sq / 24.0 + theta_sq * theta_sq / 720.0,
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta_sq)
    };
    let k = hat(&w);
    GroupElement(Mat3::identity() + k * a + k * k * b)
}

/// A point on the unit sphere S².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutputPoint(Vec3);

impl OutputPoint {
    /// Normalizes `v` onto the sphere.
    pub fn new(v: Vec3) -> Result<Self, GeometryError> {
        let norm = v.norm();
        if !(norm.is_finite() && norm > 1e-12) {
            return Err(GeometryError::DegenerateDirection { norm });
        }
        Ok(Self(v / norm))
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        Self::new(Vec3::new(x, y, z))
    }

    /// Renormalizes a vector known to be close to the sphere, e.g. an
    /// integrator stage. Panics on a zero vector.
    pub(crate) fn renormalized(v: Vec3) -> Self {
        let n = v.norm();
        debug_assert!(n > 0.0);
        Self(v / n)
    }

    pub fn e1() -> Self {
        Self(Vec3::x())
    }

    pub fn e2() -> Self {
        Self(Vec3::y())
    }

    pub fn e3() -> Self {
        Self(Vec3::z())
    }

    pub fn dir(&self) -> Vec3 {
        self.0
    }

    pub fn antipode(&self) -> Self {
        Self(-self.0)
    }

    pub fn distance_to(&self, other: &Self) -> f64 {
        (self.0 - other.0).norm()
    }

    /// Tangent projector `I − yyᵀ`.
    pub fn tangent_projector(&self) -> Mat3 {
        Mat3::identity() - self.0 * self.0.transpose()
    }
}

impl fmt::Display for OutputPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0.x, self.0.y, self.0.z)
    }
}

/// A tangent vector to S² at `base`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVector {
    base: OutputPoint,
    vec: Vec3,
}

impl TangentVector {
    /// Checks tangency to within [`TANGENCY_TOL`] (relative to `‖v‖` when it exceeds one).
    pub fn new(base: OutputPoint, vec: Vec3) -> Result<Self, GeometryError> {
        let residual = vec.dot(&base.0).abs();
        if !(residual <= TANGENCY_TOL * vec.norm().max(1.0)) {
            return Err(GeometryError::NotTangent { residual });
        }
        Ok(Self { base, vec })
    }

    /// Orthogonal projection of an ambient vector onto `T_base S²`.
    pub fn project(base: OutputPoint, ambient: Vec3) -> Self {
        let d = base.0;
        Self {
            base,
            vec: ambient - d * d.dot(&ambient),
        }
    }

    pub fn zero(base: OutputPoint) -> Self {
        Self {
            base,
            vec: Vec3::zeros(),
        }
    }

    pub fn base(&self) -> OutputPoint {
        self.base
    }

    pub fn vec(&self) -> Vec3 {
        self.vec
    }

    pub fn norm(&self) -> f64 {
        self.vec.norm()
    }
}

/// The right action `(X, y) ↦ Xᵀ y`, renormalized.
pub fn act(x: &GroupElement, y: &OutputPoint) -> OutputPoint {
    OutputPoint::renormalized(x.0.transpose() * y.0)
}

/// Pushes a tangent vector forward along `act(X, ·)`.
pub fn act_tangent(x: &GroupElement, v: &TangentVector) -> TangentVector {
    TangentVector {
        base: act(x, &v.base),
        vec: x.0.transpose() * v.vec,
    }
}

/// Whether `X` fixes `y0`.
pub fn in_stabiliser(x: &GroupElement, y0: &OutputPoint) -> bool {
    act(x, y0).distance_to(y0) <= STABILISER_TOL
}

/// A representative `X` with `act(X, y0) = y`: the transpose of the
/// minimal-angle rotation carrying `y0` onto `y` about the axis `y0 × y`.
///
/// Undefined when `y = −y0`; that case returns [`GeometryError::Antipodal`].
pub fn section(y: &OutputPoint, y0: &OutputPoint) -> Result<GroupElement, GeometryError> {
    if y.distance_to(&y0.antipode()) <= ANTIPODAL_TOL {
        return Err(GeometryError::Antipodal);
    }
    let axis = y0.0.cross(&y.0);
    let c = y0.0.dot(&y.0);
    let k = hat(&axis);
    // rotation Q with Q·y0 = y; its transpose satisfies Xᵀy0 = y
    let q = Mat3::identity() + k + k * k / (1.0 + c);
    Ok(GroupElement(orthonormalize(&q).transpose()))
}

/// The embedded Euclidean metric on `T_y S²`, which is invariant under [`act`].
pub fn riemannian_inner(v: &TangentVector, w: &TangentVector) -> Result<f64, GeometryError> {
    let distance = v.base.distance_to(&w.base);
    if distance > STABILISER_TOL {
        return Err(GeometryError::BaseMismatch { distance });
    }
    Ok(v.vec.dot(&w.vec))
}

/// The right-invariant metric on SO(3) scaled by one half:
/// `⟨A·X, B·X⟩ = ½ tr(Aᵀ B)` for `A, B ∈ so(3)`.
pub fn group_inner(a: &Mat3, b: &Mat3) -> f64 {
    0.5 * (a.transpose() * b).trace()
}
