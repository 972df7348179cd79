//! Bistatic delay measurements and the position CRB they induce.
//!
//! Each leg `m` (UAV-m to target) contributes one delay `τ_m = d_m / c`
//! with variance `a_τ² σ_r² d_m⁴ / (G P_t N_t N_r ξ)`. The Fisher information
//! of the target position follows from the position block of the measurement
//! Jacobian; the CRB is the trace of its inverse.

use nalgebra::{Matrix2, Matrix2x4, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{slant_distance, TargetState, UavPose};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// FIM condition numbers above this are treated as singular geometry.
pub const MAX_FIM_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingParams {
    pub a_tau: f64,
    /// Receiver noise power in watts.
    pub sigma2_r: f64,
    /// Matched-filter gain.
    pub g_mf: f64,
    pub n_t: usize,
    pub n_r: usize,
    /// Transmit power in watts.
    pub p_t: f64,
    /// Squared reflection-coefficient magnitude.
    pub xi: f64,
    pub c: f64,
}

impl SensingParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.a_tau, self.sigma2_r, self.g_mf, self.p_t, self.xi, self.c];
        if pos.iter().all(|v| *v > 0.0 && v.is_finite()) && self.n_t > 0 && self.n_r > 0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("sensing parameters must be positive: {self:?}")))
        }
    }

    /// Delay variance per unit of `d⁴` (s²/m⁴).
    pub fn variance_coefficient(&self) -> f64 {
        self.a_tau * self.a_tau * self.sigma2_r
            / (self.g_mf * self.p_t * self.n_t as f64 * self.n_r as f64 * self.xi)
    }
}

/// Per-leg delays in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub tau1: f64,
    pub tau2: f64,
}

impl Measurement {
    pub fn as_vector(&self) -> nalgebra::Vector2<f64> {
        nalgebra::Vector2::new(self.tau1, self.tau2)
    }
}

/// Diagonal delay-noise covariance `R = diag(σ²_τ,1, σ²_τ,2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementNoise {
    pub var1: f64,
    pub var2: f64,
}

impl MeasurementNoise {
    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.var1, 0.0, 0.0, self.var2)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { var1: self.var1 * k, var2: self.var2 * k }
    }

    fn check(&self) -> Result<()> {
        if self.var1 > 0.0 && self.var2 > 0.0 && self.var1.is_finite() && self.var2.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidCovariance)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    /// Trace of the inverse FIM, in m².
    pub crb: f64,
    pub p_a: f64,
    pub p_b: f64,
    pub p_c: f64,
    pub fim_condition: f64,
}

pub fn delay_noise_variance(uav: &UavPose, target: &TargetState, params: &SensingParams) -> f64 {
    let d = slant_distance(uav, target);
    params.variance_coefficient() * d.powi(4)
}

pub fn noise_covariance(
    q1: &UavPose,
    q2: &UavPose,
    target: &TargetState,
    params: &SensingParams,
) -> MeasurementNoise {
    MeasurementNoise {
        var1: delay_noise_variance(q1, target, params),
        var2: delay_noise_variance(q2, target, params),
    }
}

pub fn true_delays(q1: &UavPose, q2: &UavPose, target: &TargetState, params: &SensingParams) -> Measurement {
    Measurement {
        tau1: slant_distance(q1, target) / params.c,
        tau2: slant_distance(q2, target) / params.c,
    }
}

/// Noisy delays drawn around the true ones. Returns the covariance used.
pub fn generate_measurement<R: Rng + ?Sized>(
    q1: &UavPose,
    q2: &UavPose,
    target: &TargetState,
    params: &SensingParams,
    rng: &mut R,
) -> (Measurement, MeasurementNoise) {
    generate_measurement_scaled(q1, q2, target, params, 1.0, rng)
}

/// As [`generate_measurement`], with both variances multiplied by `scale`.
pub fn generate_measurement_scaled<R: Rng + ?Sized>(
    q1: &UavPose,
    q2: &UavPose,
    target: &TargetState,
    params: &SensingParams,
    scale: f64,
    rng: &mut R,
) -> (Measurement, MeasurementNoise) {
    let truth = true_delays(q1, q2, target, params);
    let noise = noise_covariance(q1, q2, target, params).scaled(scale);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let z1: f64 = std_normal.sample(rng);
    let z2: f64 = std_normal.sample(rng);
    let meas = Measurement {
        tau1: truth.tau1 + z1 * noise.var1.sqrt(),
        tau2: truth.tau2 + z2 * noise.var2.sqrt(),
    };
    (meas, noise)
}

/// Jacobian of the delay pair with respect to `[x, y, vx, vy]`.
pub fn measurement_jacobian(
    q1: &UavPose,
    q2: &UavPose,
    state: &TargetState,
    params: &SensingParams,
) -> Matrix2x4<f64> {
    let mut e = Matrix2x4::zeros();
    for (row, q) in [q1, q2].into_iter().enumerate() {
        let d = slant_distance(q, state);
        e[(row, 0)] = (state.x - q.qx) / (params.c * d);
        e[(row, 1)] = (state.y - q.qy) / (params.c * d);
    }
    e
}

/// Position FIM `Cᵀ R⁻¹ C` with `C` the position block of the Jacobian.
pub fn fim(
    q1: &UavPose,
    q2: &UavPose,
    target: &TargetState,
    noise: &MeasurementNoise,
    params: &SensingParams,
) -> Result<Matrix2<f64>> {
    noise.check()?;
    let e = measurement_jacobian(q1, q2, target, params);
    let c = e.fixed_columns::<2>(0).into_owned();
    let r_inv = Matrix2::new(1.0 / noise.var1, 0.0, 0.0, 1.0 / noise.var2);
    let p = c.transpose() * r_inv * c;
    Ok((p + p.transpose()) * 0.5)
}

/// Condition number of a symmetric PSD 2×2 matrix.
pub fn condition_2x2(m: &Matrix2<f64>) -> f64 {
    let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let hi = mean + rad;
    let lo = mean - rad;
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Per-leg quantities shared by the CRB and its gradient.
struct Leg {
    dx: f64,
    dy: f64,
    d2: f64,
    w: f64,
}

fn leg(q: &UavPose, target: &TargetState, params: &SensingParams) -> Leg {
    let dx = target.x - q.qx;
    let dy = target.y - q.qy;
    let d2 = dx * dx + dy * dy + q.height * q.height;
    let var = params.variance_coefficient() * d2 * d2;
    Leg { dx, dy, d2, w: 1.0 / (params.c * params.c * var * d2) }
}

/// CRB from the scalar FIM entries `P_a`, `P_b`, `P_c`.
pub fn crb(q1: &UavPose, q2: &UavPose, target: &TargetState, params: &SensingParams) -> Result<CrbReport> {
    let (mut p_a, mut p_b, mut p_c) = (0.0, 0.0, 0.0);
    for q in [q1, q2] {
        let l = leg(q, target, params);
        p_a += l.w * l.dx * l.dx;
        p_b += l.w * l.dy * l.dy;
        p_c += l.w * l.dx * l.dy;
    }
    let fim_condition = condition_2x2(&Matrix2::new(p_a, p_c, p_c, p_b));
    if !(fim_condition <= MAX_FIM_CONDITION) {
        return Err(Error::GeometrySingular { condition: fim_condition });
    }
    let crb = (p_a + p_b) / (p_a * p_b - p_c * p_c);
    Ok(CrbReport { crb, p_a, p_b, p_c, fim_condition })
}

/// CRB with the target replaced by its EKF prediction.
pub fn predicted_crb(
    q1: &UavPose,
    q2: &UavPose,
    predicted_target: &TargetState,
    params: &SensingParams,
) -> Result<CrbReport> {
    crb(q1, q2, predicted_target, params)
}

/// Analytic gradient of the predicted CRB with respect to
/// `(q1x, q1y, q2x, q2y)`, including the distance dependence of the delay
/// noise variances.
pub fn crb_gradient(
    q1: &UavPose,
    q2: &UavPose,
    predicted_target: &TargetState,
    params: &SensingParams,
) -> Result<Vector4<f64>> {
    let report = crb(q1, q2, predicted_target, params)?;
    let (p_a, p_b, p_c) = (report.p_a, report.p_b, report.p_c);
    let sum = p_a + p_b;
    let det = p_a * p_b - p_c * p_c;

    let mut grad = Vector4::zeros();
    for (m, q) in [q1, q2].into_iter().enumerate() {
        let Leg { dx: a, dy: b, d2, w } = leg(q, predicted_target, params);
        // w ∝ d2⁻³ and d2 decreases by 2a per unit step of qx.
        let dw_x = 6.0 * a * w / d2;
        let dw_y = 6.0 * b * w / d2;
        let partials = [
            (dw_x * a * a - 2.0 * w * a, dw_x * b * b, dw_x * a * b - w * b),
            (dw_y * a * a, dw_y * b * b - 2.0 * w * b, dw_y * a * b - w * a),
        ];
        for (axis, (da, db, dc)) in partials.into_iter().enumerate() {
            let d_sum = da + db;
            let d_det = da * p_b + p_a * db - 2.0 * p_c * dc;
            grad[2 * m + axis] = (d_sum * det - sum * d_det) / (det * det);
        }
    }
    Ok(grad)
}
