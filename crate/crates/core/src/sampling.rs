//! Seeded random draws of initial conditions.

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::manifold::{act, GroupElement, OutputPoint, Vec3};
use crate::observer::error_angle;

fn gaussian3<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

/// Uniform point on S² from a normalized Gaussian triple.
pub fn uniform_sphere<R: Rng + ?Sized>(rng: &mut R) -> OutputPoint {
    loop {
        if let Ok(p) = OutputPoint::new(gaussian3(rng)) {
            return p;
        }
    }
}

/// Haar-distributed rotation: QR of a Gaussian matrix with the sign of each
/// column fixed by `diag(R) > 0`, then mapped into SO(3).
pub fn haar_rotation<R: Rng + ?Sized>(rng: &mut R) -> GroupElement {
    let g = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..3 {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(2).neg_mut();
    }
    GroupElement::from_matrix_projected(q).expect("Q has positive determinant")
}

/// Uniform point on S² whose angle to `-avoid` is at least `exclusion`.
pub fn uniform_sphere_excluding<R: Rng + ?Sized>(
    rng: &mut R,
    avoid: &OutputPoint,
    exclusion: f64,
) -> OutputPoint {
    let antipode = avoid.antipode();
    loop {
        let p = uniform_sphere(rng);
        if error_angle(&p, &antipode) >= exclusion {
            return p;
        }
    }
}

/// Haar rotation whose output `act(X, y0)` keeps at least `exclusion` away
/// from the antipode of `avoid`.
pub fn haar_rotation_excluding<R: Rng + ?Sized>(
    rng: &mut R,
    y0: &OutputPoint,
    avoid: &OutputPoint,
    exclusion: f64,
) -> GroupElement {
    let antipode = avoid.antipode();
    loop {
        let x = haar_rotation(rng);
        if error_angle(&act(&x, y0), &antipode) >= exclusion {
            return x;
        }
    }
}

/// Independent generator for run `index` of a seeded sweep; the stream does
/// not depend on how runs are scheduled.
pub fn run_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
