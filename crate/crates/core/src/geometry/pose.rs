use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_6, PI, TAU};

use serde::{Deserialize, Serialize};

use super::{Mat3, Vec3};
use crate::error::{Error, Result};

/// Camera pose relative to an object centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub azimuth: f64,
    pub elevation: f64,
    pub roll: f64,
    pub distance: f64,
}

fn wrap_tau(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid may round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl Pose {
    pub fn new(azimuth: f64, elevation: f64, roll: f64, distance: f64) -> Self {
        Self {
            azimuth,
            elevation,
            roll,
            distance,
        }
    }

    /// Maps the angles into `azimuth, roll in [0, 2pi)` and
    /// `elevation in [-pi/2, pi/2]` without changing the rotation.
    pub fn canonical(self) -> Self {
        let mut el = (self.elevation + PI).rem_euclid(TAU) - PI;
        let mut az = self.azimuth;
        let mut roll = self.roll;
        if el > FRAC_PI_2 {
            el = PI - el;
            az += PI;
            roll += PI;
        } else if el < -FRAC_PI_2 {
            el = -PI - el;
            az += PI;
            roll += PI;
        }
        Self {
            azimuth: wrap_tau(az),
            elevation: el,
            roll: wrap_tau(roll),
            distance: self.distance,
        }
    }

    pub fn is_canonical(&self) -> bool {
        (0.0..TAU).contains(&self.azimuth)
            && (-FRAC_PI_2..=FRAC_PI_2).contains(&self.elevation)
            && (0.0..TAU).contains(&self.roll)
            && self.distance > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.azimuth, self.elevation, self.roll, self.distance]
            .iter()
            .all(|x| x.is_finite());
        if !finite || self.distance <= 0.0 {
            return Err(Error::invalid(format!("invalid pose {self:?}")));
        }
        Ok(())
    }

    pub fn rotation(&self) -> Mat3 {
        pose_to_rotation(self)
    }

    /// Returns a pose with the three angles offset by `delta`.
    pub fn offset(&self, delta: [f64; 3]) -> Self {
        Self {
            azimuth: self.azimuth + delta[0],
            elevation: self.elevation + delta[1],
            roll: self.roll + delta[2],
            distance: self.distance,
        }
    }

    pub fn angles(&self) -> [f64; 3] {
        [self.azimuth, self.elevation, self.roll]
    }
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Object-to-camera rotation `R = Rz(roll) * Rx(elevation) * Ry(azimuth)`.
///
/// Azimuth turns the object about its up axis first, elevation then tilts it
/// about the camera's horizontal axis, and roll finally spins it about the
/// optical axis.
pub fn pose_to_rotation(pose: &Pose) -> Mat3 {
    rot_z(pose.roll) * rot_x(pose.elevation) * rot_y(pose.azimuth)
}

/// Rodrigues rotation of `angle` about `axis` (normalized internally).
pub fn axis_angle_rotation(axis: Vec3, angle: f64) -> Mat3 {
    let k = axis.normalize();
    let kx = Mat3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Mat3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

/// Errors unless `r` is orthonormal with positive determinant (tolerance 1e-6).
pub fn check_rotation(r: &Mat3) -> Result<()> {
    let dev = (r.transpose() * r - Mat3::identity()).norm();
    if !(dev <= 1e-6) || r.determinant() <= 0.0 {
        return Err(Error::invalid(format!(
            "not a rotation matrix (|R^T R - I| = {dev:e})"
        )));
    }
    Ok(())
}

/// Geodesic distance between two rotations, in `[0, pi]`: the angle of
/// `pred^T gt`, read as `atan2(sin, cos)` from its skew part and trace so it
/// stays accurate near 0 and pi.
pub fn rotation_error(pred: &Mat3, gt: &Mat3) -> Result<f64> {
    check_rotation(pred)?;
    check_rotation(gt)?;
    let rel = pred.transpose() * gt;
    let sin = 0.5
        * Vec3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        )
        .norm();
    let cos = 0.5 * (rel.trace() - 1.0);
    Ok(sin.atan2(cos))
}

/// A deterministic azimuth x elevation x roll grid of `count` poses.
///
/// `count` is split as `n_az * n_el * n_roll` with `(n_el, n_roll)` taken
/// from the first of `(4,3) (4,1) (2,3) (2,1) (1,3) (1,1)` that divides it;
/// 144 gives 12 x 4 x 3. Azimuths are spaced evenly over the full circle,
/// elevations at bin centres of `[-pi/3, pi/3]`, rolls at bin centres of
/// `[-pi/6, pi/6]`.
pub fn template_pose_grid(count: usize, distance: f64) -> Result<Vec<Pose>> {
    if count == 0 {
        return Err(Error::invalid("template count must be positive"));
    }
    if !(distance > 0.0) {
        return Err(Error::invalid("template distance must be positive"));
    }
    let (n_el, n_roll) = [(4, 3), (4, 1), (2, 3), (2, 1), (1, 3), (1, 1)]
        .into_iter()
        .find(|&(e, r)| count.is_multiple_of(e * r) && count / (e * r) >= e.max(r).min(count))
        .ok_or_else(|| Error::invalid(format!("cannot factor {count} template poses")))?;
    let n_az = count / (n_el * n_roll);

    let centred = |i: usize, n: usize, half_range: f64| {
        if n == 1 {
            0.0
        } else {
            -half_range + (i as f64 + 0.5) * 2.0 * half_range / n as f64
        }
    };

    let mut poses = Vec::with_capacity(count);
    for a in 0..n_az {
        for e in 0..n_el {
            for r in 0..n_roll {
                poses.push(
                    Pose::new(
                        TAU * a as f64 / n_az as f64,
                        centred(e, n_el, FRAC_PI_3),
                        centred(r, n_roll, FRAC_PI_6),
                        distance,
                    )
                    .canonical(),
                );
            }
        }
    }
    Ok(poses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut impl Rng) -> Pose {
        Pose::new(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            5.0,
        )
    }

    #[test]
    fn canonical_pose_is_identity() {
        let r = pose_to_rotation(&Pose::new(0.0, 0.0, 0.0, 5.0));
        assert!((r - Mat3::identity()).norm() < 1e-15);
    }

    #[test]
    fn half_turn_azimuth_rotates_about_up_axis() {
        let r = pose_to_rotation(&Pose::new(PI, 0.0, 0.0, 5.0));
        let expect = axis_angle_rotation(Vec3::y(), PI);
        assert!((r - expect).norm() < 1e-12);
    }

    #[test]
    fn rotations_are_orthonormal() {
        let r = pose_to_rotation(&Pose::new(PI / 3.0, PI / 6.0, 0.0, 5.0));
        assert!((r.transpose() * r - Mat3::identity()).norm() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonicalization_preserves_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = random_pose(&mut rng);
            let c = p.canonical();
            assert!(c.is_canonical(), "{c:?}");
            assert!((p.rotation() - c.rotation()).norm() < 1e-9);
        }
    }

    #[test]
    fn rotation_error_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let r = random_pose(&mut rng).rotation();
            assert_eq!(rotation_error(&r, &r).unwrap(), 0.0);
            let axis = Vec3::new(rng.random(), rng.random(), rng.random()) - Vec3::repeat(0.5);
            let gt = r * axis_angle_rotation(axis, PI / 6.0);
            let e = rotation_error(&r, &gt).unwrap();
            assert!((e - PI / 6.0).abs() < 1e-9, "{e}");
            let flip = rotation_error(&r, &(r * axis_angle_rotation(axis, PI))).unwrap();
            assert!((flip - PI).abs() < 1e-9, "{flip}");
        }
        let mut bad = Mat3::identity();
        bad[(0, 0)] = 1.1;
        assert!(rotation_error(&bad, &Mat3::identity()).is_err());
    }

    #[test]
    fn template_grid_shapes() {
        let g = template_pose_grid(144, 5.0).unwrap();
        assert_eq!(g.len(), 144);
        let one = template_pose_grid(1, 5.0).unwrap();
        assert_eq!(one.len(), 1);
        assert!((one[0].rotation() - Mat3::identity()).norm() < 1e-12);
        assert!(template_pose_grid(0, 5.0).is_err());
    }

    #[test]
    fn template_grid_poses_are_pairwise_distinct() {
        let g = template_pose_grid(144, 5.0).unwrap();
        let rots: Vec<Mat3> = g.iter().map(Pose::rotation).collect();
        let mut min = f64::INFINITY;
        for i in 0..rots.len() {
            for j in (i + 1)..rots.len() {
                min = min.min(rotation_error(&rots[i], &rots[j]).unwrap());
            }
        }
        assert!(min > 0.1, "closest template pair {min}");
    }
}
