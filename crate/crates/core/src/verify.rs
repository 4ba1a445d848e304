//! Randomized residual checks of the observer identities on SO(3)/S².
//!
//! Each check draws `samples` random states from a seeded generator and
//! reports the worst residual against a fixed tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::manifold::{
    act, group_exp, group_inner, hat, riemannian_inner, section, AlgebraElement, GroupElement,
    OutputPoint, TangentVector, Vec3,
};
use crate::observer::{
    check_innovation_equivariance, cost, grad1_cost, grad1_lifted_cost, innovation_s2,
    innovation_s2_cross_form, lifted_cost, lifted_observer_field,
    lifted_observer_field_from_gradient, omega_bar, AnisotropicCost, CostFunction,
    HorizontalSubspace,
};
use crate::sampling::{haar_rotation, uniform_sphere};
use crate::system::project_dynamics;

/// Central-difference step used by every finite-difference check.
pub const FD_STEP: f64 = 1e-6;

pub const TOL_IDENTITY: f64 = 1e-12;
pub const TOL_SECTION: f64 = 1e-9;
pub const TOL_FD_TANGENT: f64 = 1e-6;
pub const TOL_FD_GRADIENT: f64 = 1e-5;
pub const TOL_NEGATIVE_CONTROL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    /// Passes when the residual is at most the tolerance.
    Upper,
    /// Passes when the residual is at least the tolerance (negative controls).
    Lower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl PropertyResult {
    pub fn upper(name: &str, max_residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            max_residual,
            tolerance,
            bound: Bound::Upper,
            pass: max_residual <= tolerance,
        }
    }

    pub fn lower(name: &str, max_residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            max_residual,
            tolerance,
            bound: Bound::Lower,
            pass: max_residual >= tolerance,
        }
    }
}

struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn gain(&mut self) -> CostFunction {
        CostFunction::new(self.rng.random_range(0.25..4.0)).expect("positive gain")
    }

    fn algebra(&mut self) -> AlgebraElement {
        AlgebraElement::new(
            self.rng.sample(StandardNormal),
            self.rng.sample(StandardNormal),
            self.rng.sample(StandardNormal),
        )
    }

    fn rotation(&mut self) -> GroupElement {
        haar_rotation(&mut self.rng)
    }

    fn point(&mut self) -> OutputPoint {
        uniform_sphere(&mut self.rng)
    }

    fn tangent(&mut self, base: OutputPoint) -> TangentVector {
        TangentVector::project(base, self.algebra().vec())
    }

    fn max_over(&mut self, samples: usize, mut f: impl FnMut(&mut Self) -> f64) -> f64 {
        (0..samples).map(|_| f(self)).fold(0.0, f64::max)
    }
}

/// Great-circle step of length `s·‖w‖` from `y` along tangent `w`.
fn sphere_step(y: &OutputPoint, w: &Vec3, s: f64) -> OutputPoint {
    let n = w.norm();
    if n == 0.0 {
        return *y;
    }
    OutputPoint::new(y.dir() * (s * n).cos() + w / n * (s * n).sin()).expect("unit step")
}

/// Runs the full sweep.
pub fn verify_suite(samples: usize, seed: u64) -> Vec<PropertyResult> {
    let mut out = Vec::new();
    let mut s = Sampler::new(seed);

    out.push(PropertyResult::upper(
        "right_action_law",
        s.max_over(samples, |s| {
            let (x, y, p) = (s.rotation(), s.rotation(), s.point());
            act(&x, &act(&y, &p)).distance_to(&act(&(y * x), &p))
        }),
        TOL_IDENTITY,
    ));

    out.push(PropertyResult::upper(
        "section_consistency",
        s.max_over(samples, |s| {
            let (y0, y) = (s.point(), s.point());
            match section(&y, &y0) {
                Ok(x) => act(&x, &y0).distance_to(&y),
                Err(_) => 0.0,
            }
        }),
        TOL_SECTION,
    ));

    out.push(PropertyResult::upper(
        "projected_velocity_fd",
        s.max_over(samples, |s| {
            let (y0, x, u) = (s.point(), s.rotation(), s.algebra());
            let p = act(&(x * group_exp(&u.scale(FD_STEP))), &y0).dir();
            let m = act(&(x * group_exp(&u.scale(-FD_STEP))), &y0).dir();
            let fd = (p - m) / (2.0 * FD_STEP);
            (fd - project_dynamics(&act(&x, &y0), &u).vec()).norm()
        }),
        TOL_FD_TANGENT,
    ));

    out.push(PropertyResult::upper(
        "cost_invariance",
        s.max_over(samples, |s| {
            let (c, r, a, b) = (s.gain(), s.rotation(), s.point(), s.point());
            (cost(&c, &act(&r, &a), &act(&r, &b)) - cost(&c, &a, &b)).abs()
        }),
        TOL_IDENTITY,
    ));

    out.push(PropertyResult::upper(
        "innovation_cross_form",
        s.max_over(samples, |s| {
            let (c, a, b) = (s.gain(), s.point(), s.point());
            (innovation_s2(&c, &a, &b).vec() - innovation_s2_cross_form(&c, &a, &b)).norm()
        }),
        TOL_IDENTITY,
    ));

    let eq_seed: u64 = s.rng.random();
    out.push(PropertyResult::upper(
        "innovation_equivariance",
        (0..4)
            .map(|i| {
                let k = 0.5 * (i + 1) as f64;
                check_innovation_equivariance(
                    &CostFunction::new(k).expect("positive gain"),
                    samples / 4 + 1,
                    eq_seed.wrapping_add(i),
                )
            })
            .fold(0.0, f64::max),
        TOL_IDENTITY,
    ));
    out.push(PropertyResult::lower(
        "equivariance_negative_control",
        check_innovation_equivariance(&AnisotropicCost::standard(), samples, eq_seed),
        TOL_NEGATIVE_CONTROL,
    ));

    out.push(PropertyResult::upper(
        "cost_gradient_fd",
        s.max_over(samples, |s| {
            let (c, yhat, y) = (s.gain(), s.point(), s.point());
            let w = s.tangent(yhat).vec();
            let fd = (cost(&c, &sphere_step(&yhat, &w, FD_STEP), &y)
                - cost(&c, &sphere_step(&yhat, &w, -FD_STEP), &y))
                / (2.0 * FD_STEP);
            (fd - grad1_cost(&c, &yhat, &y).vec().dot(&w)).abs()
        }),
        TOL_FD_GRADIENT,
    ));

    out.push(PropertyResult::upper(
        "omega_bar_constraints",
        s.max_over(samples, |s| {
            let base = s.point();
            let v = s.tangent(base);
            let w = omega_bar(&v).vec();
            (w.cross(&base.dir()) - v.vec())
                .norm()
                .max(w.dot(&base.dir()).abs())
        }),
        TOL_IDENTITY,
    ));

    out.push(PropertyResult::upper(
        "metric_identity",
        s.max_over(samples, |s| {
            let base = s.point();
            let (v, w) = (s.tangent(base), s.tangent(base));
            let euclid = riemannian_inner(&v, &w).expect("same base");
            let group = group_inner(&omega_bar(&v).hat(), &omega_bar(&w).hat());
            (euclid - group).abs()
        }),
        TOL_IDENTITY,
    ));

    out.push(PropertyResult::upper(
        "lift_round_trip_fd",
        s.max_over(samples, |s| {
            let (y0, xhat) = (s.point(), s.rotation());
            let v = s.tangent(act(&xhat, &y0));
            let h = HorizontalSubspace::new(y0);
            let a = h.lift_algebra(&xhat, &v).expect("matching base");
            let p = act(&(xhat * group_exp(&a.scale(FD_STEP))), &y0).dir();
            let m = act(&(xhat * group_exp(&a.scale(-FD_STEP))), &y0).dir();
            ((p - m) / (2.0 * FD_STEP) - v.vec()).norm()
        }),
        TOL_FD_TANGENT,
    ));

    out.push(PropertyResult::upper(
        "lift_is_horizontal",
        s.max_over(samples, |s| {
            let (y0, xhat) = (s.point(), s.rotation());
            let v = s.tangent(act(&xhat, &y0));
            let h = HorizontalSubspace::new(y0);
            let g = h.horizontal_lift(&xhat, &v).expect("matching base");
            h.vertical_residual(&xhat, &g)
                .expect("antisymmetric body velocity")
        }),
        TOL_IDENTITY,
    ));

    out.push(PropertyResult::upper(
        "lifted_cost_right_invariance",
        s.max_over(samples, |s| {
            let (c, y0, xhat, x, z) = (
                s.gain(),
                s.point(),
                s.rotation(),
                s.rotation(),
                s.rotation(),
            );
            (lifted_cost(&c, &(xhat * z), &(x * z), &y0) - lifted_cost(&c, &xhat, &x, &y0)).abs()
        }),
        TOL_IDENTITY,
    ));

    out.push(PropertyResult::upper(
        "lifted_gradient_identity",
        s.max_over(samples, |s| {
            let (c, y0, xhat, x) = (s.gain(), s.point(), s.rotation(), s.rotation());
            let yhat = act(&xhat, &y0);
            let lift = HorizontalSubspace::new(y0)
                .horizontal_lift(&xhat, &grad1_cost(&c, &yhat, &act(&x, &y0)))
                .expect("matching base");
            (grad1_lifted_cost(&c, &xhat, &x, &y0) - lift).norm()
        }),
        TOL_IDENTITY,
    ));

    out.push(PropertyResult::upper(
        "lifted_cost_gradient_fd",
        s.max_over(samples, |s| {
            let (c, y0, xhat, x, w) =
                (s.gain(), s.point(), s.rotation(), s.rotation(), s.algebra());
            let fd = (lifted_cost(&c, &(xhat * group_exp(&w.scale(FD_STEP))), &x, &y0)
                - lifted_cost(&c, &(xhat * group_exp(&w.scale(-FD_STEP))), &x, &y0))
                / (2.0 * FD_STEP);
            let tangent = xhat.matrix() * w.hat();
            let g = grad1_lifted_cost(&c, &xhat, &x, &y0);
            // ⟨X̂A, X̂B⟩ = ½ tr(AᵀB) with A = X̂ᵀ·tangent, B = X̂ᵀ·g
            let xt = xhat.matrix().transpose();
            (fd - group_inner(&(xt * tangent), &(xt * g))).abs()
        }),
        TOL_FD_GRADIENT,
    ));

    out.push(PropertyResult::upper(
        "two_forms_identity",
        s.max_over(samples, |s| {
            let (c, y0, xhat, y, u) = (s.gain(), s.point(), s.rotation(), s.point(), s.algebra());
            let direct = xhat.matrix() * lifted_observer_field(&c, &xhat, &y, &u, &y0).hat();
            let via_gradient =
                lifted_observer_field_from_gradient(&c, &xhat, &y, &u, &y0).expect("matching base");
            (direct - via_gradient).norm()
        }),
        TOL_IDENTITY,
    ));

    // the same hat-map convention is used everywhere, so this also pins hat
    out.push(PropertyResult::upper(
        "hat_cross_product",
        s.max_over(samples, |s| {
            let (a, b) = (s.algebra().vec(), s.algebra().vec());
            (hat(&a) * b - a.cross(&b)).norm()
        }),
        TOL_IDENTITY,
    ));

    out
}
