//! Air-to-ground channel between the transmitting UAV and the target.
//!
//! The link uses an elevation-dependent LoS probability, a power-law path
//! loss and a half-wavelength ULA steering vector. On top of that sit the
//! predicted channel, its error ball and the robust SNR test, which comes in
//! two forms: a closed-form worst case and an S-procedure LMI check.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{elevation_angle_deg, slant_distance, TargetState, UavPose};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Channel and transmitter parameters, all in linear units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub e1: f64,
    pub e2: f64,
    /// Power gain at the 1 m reference distance.
    pub beta0: f64,
    /// NLoS attenuation factor applied to the reference gain.
    pub kappa_nlos: f64,
    pub alpha: f64,
    pub n_t: usize,
    /// Transmit power in watts.
    pub p_t: f64,
    /// Receiver noise power in watts.
    pub sigma2_c: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta0 > 0.0
            && self.kappa_nlos > 0.0
            && self.kappa_nlos <= 1.0
            && self.alpha > 0.0
            && self.n_t >= 1
            && self.p_t > 0.0
            && self.sigma2_c > 0.0
            && self.e1.is_finite()
            && self.e2.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("channel parameters out of range: {self:?}")))
        }
    }

    /// Smallest channel norm whose matched SNR reaches `gamma_c`.
    pub fn required_norm(&self, gamma_c: f64) -> f64 {
        (gamma_c * self.sigma2_c / self.p_t).sqrt()
    }
}

/// Complex gain vector across the transmit array.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector(pub DVector<Complex<f64>>);

impl ChannelVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.norm_squared()
    }

    /// Hermitian inner product `selfᴴ other`.
    pub fn inner(&self, other: &ChannelVector) -> Complex<f64> {
        self.0.dotc(&other.0)
    }

    pub fn distance(&self, other: &ChannelVector) -> f64 {
        (&self.0 - &other.0).norm()
    }

    /// Unit-power beamformer matched to this channel. A zero channel yields
    /// the zero vector.
    pub fn matched_beamformer(&self) -> ChannelVector {
        let n = self.norm();
        if n == 0.0 {
            return ChannelVector(DVector::zeros(self.len()));
        }
        ChannelVector(self.0.unscale(n))
    }
}

/// Radius of the ball bounding the channel prediction error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBall {
    pub epsilon: f64,
}

impl ErrorBall {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidInput(format!("error radius must be >= 0, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }
}

pub fn los_probability(theta_deg: f64, params: &ChannelParams) -> Result<f64> {
    if !(0.0..=90.0).contains(&theta_deg) {
        return Err(Error::InvalidInput(format!("angle {theta_deg} outside [0, 90] degrees")));
    }
    Ok(1.0 / (1.0 + params.e1 * (-params.e2 * (theta_deg - params.e1)).exp()))
}

/// Large-scale power gain `β_d · d^{-α}`.
pub fn channel_gain(theta_deg: f64, d: f64, params: &ChannelParams) -> Result<f64> {
    let p_los = los_probability(theta_deg, params)?;
    let beta_d = params.beta0 * (p_los + (1.0 - p_los) * params.kappa_nlos);
    Ok(beta_d * d.powf(-params.alpha))
}

/// Half-wavelength ULA response, normalized to unit norm.
pub fn steering_vector(theta_deg: f64, n_t: usize) -> ChannelVector {
    let cos_theta = theta_deg.to_radians().cos();
    let scale = 1.0 / (n_t as f64).sqrt();
    ChannelVector(DVector::from_fn(n_t, |k, _| {
        Complex::from_polar(scale, PI * k as f64 * cos_theta)
    }))
}

pub fn channel_vector(uav1: &UavPose, target: &TargetState, params: &ChannelParams) -> ChannelVector {
    let theta = elevation_angle_deg(uav1, target);
    let d = slant_distance(uav1, target);
    // theta comes from acos, always inside [0, 90].
    let gain = channel_gain(theta, d, params).expect("elevation angle within range");
    let a = steering_vector(theta, params.n_t);
    ChannelVector(a.0.scale(gain.sqrt()))
}

/// Channel evaluated at the EKF's predicted target state.
pub fn predicted_channel(
    uav1: &UavPose,
    predicted_target: &TargetState,
    params: &ChannelParams,
) -> ChannelVector {
    channel_vector(uav1, predicted_target, params)
}

/// Received SNR `P_t |hᴴ f|² / σ_c²` (linear).
pub fn snr(h: &ChannelVector, f: &ChannelVector, params: &ChannelParams) -> f64 {
    debug_assert!(f.norm() <= 1.0 + 1e-9, "beamformer exceeds unit power");
    params.p_t * h.inner(f).norm_sqr() / params.sigma2_c
}

pub fn snr_db(h: &ChannelVector, f: &ChannelVector, params: &ChannelParams) -> f64 {
    linear_to_db(snr(h, f, params))
}

/// Symmetric PSD check, tolerating round-off of `1e-10` (absolute, or
/// relative once entries exceed one).
pub(crate) fn is_psd4(m: &Matrix4<f64>) -> bool {
    if !m.iter().all(|v| v.is_finite()) {
        return false;
    }
    let tol = 1e-10 * m.abs().max().max(1.0);
    if (m - m.transpose()).abs().max() > tol {
        return false;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min() >= -tol
}

/// Error ball radius `ψ · ‖M‖_F` from the predicted covariance.
pub fn error_radius(m_pred: &Matrix4<f64>, psi: f64) -> Result<ErrorBall> {
    if !(psi >= 0.0) || !psi.is_finite() {
        return Err(Error::InvalidInput(format!("psi must be >= 0, got {psi}")));
    }
    if !is_psd4(m_pred) {
        return Err(Error::InvalidCovariance);
    }
    ErrorBall::new(psi * m_pred.norm())
}

/// Worst-case SNR over the error ball with the beamformer matched to the
/// predicted channel: `P_t (‖ĥ‖ − ε)₊² / σ_c²`.
pub fn worst_case_snr(h_hat: &ChannelVector, ball: &ErrorBall, params: &ChannelParams) -> f64 {
    let margin = (h_hat.norm() - ball.epsilon).max(0.0);
    params.p_t * margin * margin / params.sigma2_c
}

/// The robust-SNR LMI at multiplier `mu`, after congruence scaling by
/// `diag(I, 1/‖ĥ‖)`:
///
/// ```text
/// [ μI + uuᴴ        u             ]
/// [ uᴴ        1 − μ e² − s        ]  ⪰ 0
/// ```
///
/// with `u = ĥ/‖ĥ‖`, `e = ε/‖ĥ‖` and `s = γ_c σ_c² / (P_t ‖ĥ‖²)`. This is the
/// `[I; ĥᴴ] X [I; ĥᴴ]ᴴ + diag(μI, −με² − γσ²/P_t)` block form with `X = uuᴴ`,
/// the projector of the matched beamformer.
fn scaled_lmi(u: &DVector<Complex<f64>>, e: f64, s: f64, mu: f64) -> DMatrix<Complex<f64>> {
    let n = u.len();
    let mut a = DMatrix::<Complex<f64>>::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = u[i] * u[j].conj();
        }
        a[(i, i)] += Complex::new(mu, 0.0);
        a[(i, n)] = u[i];
        a[(n, i)] = u[i].conj();
    }
    a[(n, n)] = Complex::new(1.0 - mu * e * e - s, 0.0);
    a
}

fn lmi_min_eigenvalue(u: &DVector<Complex<f64>>, e: f64, s: f64, mu: f64) -> (f64, f64) {
    let a = scaled_lmi(u, e, s, mu);
    let scale = 1.0 + mu + s;
    (a.symmetric_eigenvalues().min(), scale)
}

/// Whether some multiplier `μ ≥ 0` makes the robust-SNR LMI positive
/// semidefinite. `λ_min` of an affine matrix pencil is concave in `μ`, so a
/// ternary search over a bracket finds its maximum.
pub fn robust_snr_lmi_feasible(
    h_hat: &ChannelVector,
    ball: &ErrorBall,
    gamma_c: f64,
    params: &ChannelParams,
) -> bool {
    if gamma_c <= 0.0 {
        return true;
    }
    let norm = h_hat.norm();
    if norm == 0.0 {
        return false;
    }
    let u = h_hat.0.unscale(norm);
    let e = ball.epsilon / norm;
    let s = gamma_c * params.sigma2_c / (params.p_t * norm * norm);
    if !s.is_finite() {
        return false;
    }

    let feasible_at = |mu: f64| {
        let (lambda, scale) = lmi_min_eigenvalue(&u, e, s, mu);
        (lambda, lambda >= -1e-13 * scale)
    };

    let mut lo = 0.0;
    let mut hi = if e > 0.0 { (10.0 * (1.0 + 1.0 / e)).min(1e12) } else { 1e12 };
    if feasible_at(lo).1 || feasible_at(hi).1 {
        return true;
    }
    for _ in 0..300 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        let (l1, ok1) = feasible_at(m1);
        let (l2, ok2) = feasible_at(m2);
        if ok1 || ok2 {
            return true;
        }
        if l1 < l2 {
            lo = m1;
        } else {
            hi = m2;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    feasible_at(0.5 * (lo + hi)).1
}

/// One (prediction, truth) pair used to calibrate the error-ball scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub uav1: UavPose,
    pub predicted: TargetState,
    pub m_pred: Matrix4<f64>,
    pub truth: TargetState,
}

/// Smallest `ψ` such that `‖h_true − ĥ‖ ≤ ψ ‖M_pred‖_F` holds on at least a
/// `coverage` fraction of the samples.
pub fn psi_from_samples<I>(samples: I, coverage: f64, params: &ChannelParams) -> Result<f64>
where
    I: IntoIterator<Item = CalibrationSample>,
{
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(Error::InvalidInput(format!("coverage must lie in (0, 1), got {coverage}")));
    }
    let mut ratios = Vec::new();
    let mut any_nonzero = false;
    for s in samples {
        let h_true = channel_vector(&s.uav1, &s.truth, params);
        let h_hat = predicted_channel(&s.uav1, &s.predicted, params);
        let err = h_true.distance(&h_hat);
        let m = s.m_pred.norm();
        if m > 0.0 {
            any_nonzero = true;
            ratios.push(err / m);
        } else if err > 0.0 {
            ratios.push(f64::INFINITY);
        } else {
            ratios.push(0.0);
        }
    }
    if ratios.is_empty() || !any_nonzero {
        return Err(Error::CalibrationDegenerate);
    }
    ratios.sort_by(f64::total_cmp);
    let k = ((coverage * ratios.len() as f64).ceil() as usize).clamp(1, ratios.len());
    Ok(ratios[k - 1])
}
