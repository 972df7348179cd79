//! Extended Kalman filter for the constant-velocity target with the
//! two-delay measurement.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TargetState, TransitionMatrix};
use crate::sensing::{Measurement, MeasurementNoise};

/// State estimate with its covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EkfBelief {
    pub x_hat: TargetState,
    pub m: Matrix4<f64>,
}

impl EkfBelief {
    pub fn new(x_hat: TargetState, m: Matrix4<f64>) -> Self {
        Self { x_hat, m }
    }

    pub fn position_covariance(&self) -> Matrix2<f64> {
        self.m.fixed_view::<2, 2>(0, 0).into_owned()
    }
}

fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

/// Prediction step: `x̂ ← G x̂`, `M ← G M Gᵀ + Q`.
pub fn time_update(belief: &EkfBelief, g: &TransitionMatrix, q: &Matrix4<f64>) -> EkfBelief {
    let gm = g.matrix();
    EkfBelief {
        x_hat: g.apply(&belief.x_hat),
        m: symmetrize(&(gm * belief.m * gm.transpose() + q)),
    }
}

/// `K = M Eᵀ (R + E M Eᵀ)⁻¹`.
pub fn kalman_gain(m_pred: &Matrix4<f64>, e: &Matrix2x4<f64>, r: &MeasurementNoise) -> Result<Matrix4x2<f64>> {
    let s = r.matrix() + e * m_pred * e.transpose();
    let s_inv = s
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::NumericalBreakdown("innovation covariance is singular".into()))?;
    Ok(m_pred * e.transpose() * s_inv)
}

/// Correction step. The covariance is resymmetrized afterwards.
pub fn measurement_update(
    pred: &EkfBelief,
    k: &Matrix4x2<f64>,
    y: &Measurement,
    predicted_meas: &Measurement,
    e: &Matrix2x4<f64>,
) -> EkfBelief {
    let innovation = y.as_vector() - predicted_meas.as_vector();
    let x = pred.x_hat.to_vector() + k * innovation;
    let m = (Matrix4::identity() - k * e) * pred.m;
    EkfBelief { x_hat: TargetState::from_vector(&x), m: symmetrize(&m) }
}
