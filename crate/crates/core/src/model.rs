//! Target kinematics, UAV poses and planar/slant geometry.
//!
//! The target follows a constant-velocity model in the ground plane. Both
//! UAVs fly at a fixed altitude, so a pose is a horizontal position plus a
//! height that never changes over an episode.

use nalgebra::{Matrix4, Vector2, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack applied to the speed and separation checks.
pub const CONSTRAINT_SLACK: f64 = 1e-9;

/// Planar position and velocity of the ground target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl TargetState {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { x, y, vx, vy }
    }

    /// Target moving at `speed` along `heading_deg` (counter-clockwise from +x).
    pub fn with_heading(x: f64, y: f64, speed: f64, heading_deg: f64) -> Self {
        let h = heading_deg.to_radians();
        Self::new(x, y, speed * h.cos(), speed * h.sin())
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.vx, self.vy)
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }
}

/// Horizontal position and fixed flight altitude of a UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavPose {
    pub qx: f64,
    pub qy: f64,
    pub height: f64,
}

impl UavPose {
    pub fn new(qx: f64, qy: f64, height: f64) -> Result<Self> {
        if !(height > 0.0) || !height.is_finite() {
            return Err(Error::InvalidInput(format!("UAV height must be positive, got {height}")));
        }
        Ok(Self { qx, qy, height })
    }

    pub fn horizontal(&self) -> Vector2<f64> {
        Vector2::new(self.qx, self.qy)
    }

    /// Same altitude, new horizontal position.
    pub fn moved_to(&self, q: Vector2<f64>) -> Self {
        Self { qx: q[0], qy: q[1], height: self.height }
    }

    pub fn horizontal_distance(&self, other: &UavPose) -> f64 {
        (self.horizontal() - other.horizontal()).norm()
    }
}

/// Per-component variances of the process noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionNoise {
    pub sigma2_x: f64,
    pub sigma2_y: f64,
    pub sigma2_vx: f64,
    pub sigma2_vy: f64,
}

impl MotionNoise {
    pub fn new(sigma2_x: f64, sigma2_y: f64, sigma2_vx: f64, sigma2_vy: f64) -> Result<Self> {
        let n = Self { sigma2_x, sigma2_y, sigma2_vx, sigma2_vy };
        if n.as_array().iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!("motion noise variances must be >= 0: {n:?}")));
        }
        Ok(n)
    }

    pub fn zero() -> Self {
        Self { sigma2_x: 0.0, sigma2_y: 0.0, sigma2_vx: 0.0, sigma2_vy: 0.0 }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            sigma2_x: self.sigma2_x * k,
            sigma2_y: self.sigma2_y * k,
            sigma2_vx: self.sigma2_vx * k,
            sigma2_vy: self.sigma2_vy * k,
        }
    }

    fn as_array(&self) -> [f64; 4] {
        [self.sigma2_x, self.sigma2_y, self.sigma2_vx, self.sigma2_vy]
    }

    /// Diagonal process covariance Q.
    pub fn covariance(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::from(self.as_array()))
    }

    /// One zero-mean Gaussian draw with these variances.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector4<f64> {
        let mut w = Vector4::zeros();
        for (i, var) in self.as_array().iter().enumerate() {
            // Always consume one draw per component so streams stay aligned.
            let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
            w[i] = z * var.sqrt();
        }
        w
    }
}

/// Constant-velocity state transition matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionMatrix(pub Matrix4<f64>);

impl TransitionMatrix {
    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn apply(&self, s: &TargetState) -> TargetState {
        TargetState::from_vector(&(self.0 * s.to_vector()))
    }
}

pub fn build_transition_matrix(dt: f64) -> Result<TransitionMatrix> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
    }
    let mut g = Matrix4::identity();
    g[(0, 2)] = dt;
    g[(1, 3)] = dt;
    Ok(TransitionMatrix(g))
}

/// Advance the target one slot: position moves by velocity times `dt`, and
/// every component receives an independent Gaussian perturbation.
pub fn propagate_target<R: Rng + ?Sized>(
    s: &TargetState,
    dt: f64,
    noise: &MotionNoise,
    rng: &mut R,
) -> Result<TargetState> {
    let g = build_transition_matrix(dt)?;
    let w = noise.sample(rng);
    Ok(TargetState::from_vector(&(g.0 * s.to_vector() + w)))
}

pub fn slant_distance(p: &UavPose, t: &TargetState) -> f64 {
    let dx = p.qx - t.x;
    let dy = p.qy - t.y;
    (dx * dx + dy * dy + p.height * p.height).sqrt()
}

/// Angle between the vertical array axis and the target, in degrees.
pub fn elevation_angle_deg(p: &UavPose, t: &TargetState) -> f64 {
    let d = slant_distance(p, t);
    (p.height / d).clamp(-1.0, 1.0).acos().to_degrees()
}

pub fn check_speed(prev: &UavPose, next: &UavPose, vmax: f64, dt: f64) -> bool {
    prev.horizontal_distance(next) <= vmax * dt + CONSTRAINT_SLACK
}

pub fn check_separation(a: &UavPose, b: &UavPose, dmin: f64) -> bool {
    a.horizontal_distance(b) >= dmin - CONSTRAINT_SLACK
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pose(x: f64, y: f64) -> UavPose {
        UavPose::new(x, y, 50.0).unwrap()
    }

    #[test]
    fn transition_matrix_layout() {
        let g = build_transition_matrix(0.5).unwrap();
        let mut expected = Matrix4::identity();
        expected[(0, 2)] = 0.5;
        expected[(1, 3)] = 0.5;
        assert_eq!(g.0, expected);

        let tiny = build_transition_matrix(1e-300).unwrap();
        assert_relative_eq!(tiny.0, Matrix4::identity(), epsilon = 1e-12);

        let s = g.apply(&TargetState::new(100.0, 100.0, 10.0, 0.0));
        assert_eq!(s, TargetState::new(105.0, 100.0, 10.0, 0.0));
    }

    #[test]
    fn transition_rejects_nonpositive_dt() {
        assert!(matches!(build_transition_matrix(0.0), Err(Error::InvalidConfig(_))));
        assert!(matches!(build_transition_matrix(-0.5), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn noiseless_propagation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = TargetState::new(100.0, 100.0, 7.071, 7.071);
        let n = propagate_target(&s, 0.5, &MotionNoise::zero(), &mut rng).unwrap();
        assert_relative_eq!(n.x, 103.5355, epsilon = 1e-9);
        assert_relative_eq!(n.y, 103.5355, epsilon = 1e-9);
        assert_eq!(n.vx, 7.071);

        let rest = TargetState::new(3.0, -4.0, 0.0, 0.0);
        assert_eq!(propagate_target(&rest, 0.5, &MotionNoise::zero(), &mut rng).unwrap(), rest);
    }

    #[test]
    fn seeded_propagation_is_deterministic() {
        let noise = MotionNoise::new(1.0, 1.0, 0.5, 0.5).unwrap();
        let s = TargetState::with_heading(100.0, 100.0, 10.0, 45.0);
        let a = propagate_target(&s, 0.5, &noise, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = propagate_target(&s, 0.5, &noise, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, propagate_target(&s, 0.5, &MotionNoise::zero(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap());
    }

    #[test]
    fn distances_and_angles() {
        let t = TargetState::new(100.0, 100.0, 0.0, 0.0);
        let p = pose(140.0, 100.0);
        assert_relative_eq!(slant_distance(&p, &t), 64.03124237432849, epsilon = 1e-12);
        assert_eq!(slant_distance(&pose(100.0, 100.0), &t), 50.0);
        assert_eq!(slant_distance(&pose(130.0, 140.0), &t), slant_distance(&pose(140.0, 130.0), &t));

        assert_relative_eq!(elevation_angle_deg(&pose(150.0, 100.0), &t), 45.0, epsilon = 1e-12);
        assert_eq!(elevation_angle_deg(&pose(100.0, 100.0), &t), 0.0);
        assert_relative_eq!(elevation_angle_deg(&p, &t), 38.659808254090095, epsilon = 1e-9);
    }

    #[test]
    fn speed_check_boundary() {
        let a = pose(0.0, 0.0);
        assert!(check_speed(&a, &pose(10.0, 0.0), 20.0, 0.5));
        assert!(check_speed(&a, &a, 20.0, 0.5));
        assert!(!check_speed(&a, &pose(10.001, 0.0), 20.0, 0.5));
    }

    #[test]
    fn separation_check() {
        assert!(check_separation(&pose(140.0, 100.0), &pose(120.0, 200.0), 40.0));
        assert!(!check_separation(&pose(1.0, 1.0), &pose(1.0, 1.0), 40.0));
        assert!(check_separation(&pose(1.0, 1.0), &pose(1.0, 1.0), 0.0));
    }

    #[test]
    fn pose_rejects_nonpositive_height() {
        assert!(UavPose::new(0.0, 0.0, 0.0).is_err());
        assert!(MotionNoise::new(1.0, -1.0, 0.0, 0.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn transition_semigroup(dt1 in 0.01f64..5.0, dt2 in 0.01f64..5.0,
                                    x in -1e3f64..1e3, y in -1e3f64..1e3,
                                    vx in -30f64..30.0, vy in -30f64..30.0) {
                let s = TargetState::new(x, y, vx, vy);
                let two = build_transition_matrix(dt2).unwrap().apply(&build_transition_matrix(dt1).unwrap().apply(&s));
                let one = build_transition_matrix(dt1 + dt2).unwrap().apply(&s);
                prop_assert!((two.to_vector() - one.to_vector()).norm() < 1e-9);
            }

            #[test]
            fn slant_at_least_height(qx in -500f64..500.0, qy in -500f64..500.0,
                                     x in -500f64..500.0, y in -500f64..500.0, h in 1f64..200.0) {
                let p = UavPose::new(qx, qy, h).unwrap();
                let t = TargetState::new(x, y, 0.0, 0.0);
                prop_assert!(slant_distance(&p, &t) >= h);
            }

            #[test]
            fn elevation_monotone_in_offset(r in 0f64..500.0, dr in 1e-3f64..50.0, h in 1f64..200.0) {
                let t = TargetState::new(0.0, 0.0, 0.0, 0.0);
                let a = elevation_angle_deg(&UavPose::new(r, 0.0, h).unwrap(), &t);
                let b = elevation_angle_deg(&UavPose::new(r + dr, 0.0, h).unwrap(), &t);
                prop_assert!(b > a);
                prop_assert!((0.0..90.0).contains(&a));
            }

            #[test]
            fn zero_noise_matches_transition(x in -1e3f64..1e3, vx in -30f64..30.0, seed in any::<u64>()) {
                let s = TargetState::new(x, -x, vx, 2.0 * vx);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p = propagate_target(&s, 0.5, &MotionNoise::zero(), &mut rng).unwrap();
                prop_assert_eq!(p, build_transition_matrix(0.5).unwrap().apply(&s));
            }
        }
    }
}
