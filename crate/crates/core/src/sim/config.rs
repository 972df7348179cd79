//! Scenario configuration in file units and its resolved linear form.
//!
//! Power-like keys are written in dB (`beta0`, `gamma_c`) or dBm (`p_t`,
//! `sigma2_c`, `sigma2_r`) and converted when the scenario is resolved.
//! `gamma_c = 0` switches the communication constraint off.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, dbm_to_watts, ChannelParams};
use crate::error::{Error, Result};
use crate::model::{MotionNoise, TargetState, UavPose};
use crate::sensing::{SensingParams, SPEED_OF_LIGHT};
use crate::trajopt::{Mobility, PlannerParams};

fn default_alpha() -> f64 {
    2.0
}
fn default_kappa() -> f64 {
    0.01
}
fn default_one() -> f64 {
    1.0
}
fn default_eta() -> f64 {
    1e-3
}
fn default_k_max() -> usize {
    20
}
fn default_heading() -> f64 {
    45.0
}
fn default_gamma_c() -> f64 {
    25.0
}
fn default_m1() -> [f64; 4] {
    [1.0, 1.0, 0.5, 0.5]
}
fn default_psi() -> f64 {
    DEFAULT_PSI
}

/// Error-ball scale from `calibrate-psi` on the default scenario
/// (10⁴ samples, 95 % coverage, seed 0).
pub const DEFAULT_PSI: f64 = 7.223916915000576e-7;

/// Scenario exactly as written in the JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Episode length in seconds.
    pub t_total: f64,
    /// Slot length in seconds.
    pub dt: f64,
    pub e1: f64,
    pub e2: f64,
    /// dB.
    pub beta0: f64,
    /// dBm.
    pub sigma2_c: f64,
    /// dBm.
    pub sigma2_r: f64,
    /// dBm.
    pub p_t: f64,
    pub n_t: usize,
    pub n_r: usize,
    /// Position process-noise variances (m²).
    pub sigma2_x: f64,
    pub sigma2_y: f64,
    /// Velocity process-noise variances ((m/s)²).
    pub sigma2_vx: f64,
    pub sigma2_vy: f64,
    pub a_tau: f64,
    pub g_mf: f64,
    /// Initial target position.
    pub u1: [f64; 2],
    /// Initial target speed in m/s.
    pub target_speed: f64,
    pub q1_init: [f64; 2],
    pub q2_init: [f64; 2],
    /// Flight altitude of UAV-1 and UAV-2.
    pub height: f64,
    pub d_min: f64,
    pub v_max: f64,

    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_kappa")]
    pub kappa_nlos: f64,
    #[serde(default = "default_one")]
    pub xi: f64,
    #[serde(default = "default_psi")]
    pub psi: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Target heading in degrees counter-clockwise from +x.
    #[serde(default = "default_heading")]
    pub heading: f64,
    /// dB; zero disables the constraint.
    #[serde(default = "default_gamma_c")]
    pub gamma_c: f64,
    /// Diagonal of the initial belief covariance.
    #[serde(default = "default_m1")]
    pub m1_diag: [f64; 4],
    #[serde(default = "default_one")]
    pub process_noise_scale: f64,
    #[serde(default = "default_one")]
    pub measurement_noise_scale: f64,
}

impl ScenarioFile {
    /// The published parameter set with the documented defaults filled in.
    pub fn s4_default() -> Self {
        Self {
            t_total: 15.0,
            dt: 0.5,
            e1: 25.0,
            e2: 0.112,
            beta0: -60.0,
            sigma2_c: -110.0,
            sigma2_r: -110.0,
            p_t: 40.0,
            n_t: 16,
            n_r: 16,
            sigma2_x: 1.0,
            sigma2_y: 1.0,
            sigma2_vx: 0.5,
            sigma2_vy: 0.5,
            a_tau: 1.2e-7,
            g_mf: 10.0,
            u1: [100.0, 100.0],
            target_speed: 10.0,
            q1_init: [140.0, 100.0],
            q2_init: [120.0, 200.0],
            height: 50.0,
            d_min: 40.0,
            v_max: 20.0,
            alpha: default_alpha(),
            kappa_nlos: default_kappa(),
            xi: 1.0,
            psi: DEFAULT_PSI,
            eta: default_eta(),
            k_max: default_k_max(),
            heading: default_heading(),
            gamma_c: default_gamma_c(),
            m1_diag: default_m1(),
            process_noise_scale: 1.0,
            measurement_noise_scale: 1.0,
        }
    }

    /// Parse JSON text; errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let parsed: std::result::Result<Self, _> = serde_path_to_error::deserialize(&mut de);
        let file = parsed.map_err(|e| {
            let inner = e.inner().to_string();
            let path = e.path().to_string();
            let field = if path != "." {
                path
            } else if let Some(name) = inner.split('`').nth(1) {
                name.to_string()
            } else {
                "<document>".to_string()
            };
            Error::Config { field, message: inner }
        })?;
        de.end().map_err(|e| Error::Config { field: "<document>".into(), message: e.to_string() })?;
        Ok(file)
    }

    /// Copy with one scalar key replaced, as used by parameter sweeps.
    pub fn with_value(&self, key: &str, value: f64) -> Result<Self> {
        let mut v = serde_json::to_value(self).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let obj = v.as_object_mut().expect("struct serializes to an object");
        match obj.get(key) {
            Some(serde_json::Value::Number(_)) => {}
            Some(_) => return Err(Error::InvalidConfig(format!("`{key}` is not a scalar key"))),
            None => return Err(Error::InvalidConfig(format!("unknown config key `{key}`"))),
        }
        let num = if obj[key].is_u64() {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::InvalidConfig(format!("`{key}` must be a nonnegative integer")));
            }
            serde_json::Value::from(value as u64)
        } else {
            serde_json::Number::from_f64(value)
                .map(serde_json::Value::Number)
                .ok_or_else(|| Error::InvalidConfig(format!("non-finite value for `{key}`")))?
        };
        obj.insert(key.to_string(), num);
        serde_json::from_value(v).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn resolve(&self) -> Result<ScenarioConfig> {
        ScenarioConfig::from_file(self.clone())
    }
}

fn field_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

fn require(ok: bool, field: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(field_err(field, message))
    }
}

/// Validated scenario in linear units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub file: ScenarioFile,
    /// Number of slots `N = T/ΔT`.
    pub n_slots: usize,
    pub dt: f64,
    pub sensing: SensingParams,
    pub channel: ChannelParams,
    pub motion: MotionNoise,
    pub initial_target: TargetState,
    pub q1_init: UavPose,
    pub q2_init: UavPose,
    pub m1: Matrix4<f64>,
    pub planner: PlannerParams,
    pub process_noise_scale: f64,
    pub measurement_noise_scale: f64,
}

impl ScenarioConfig {
    pub fn from_file(f: ScenarioFile) -> Result<Self> {
        let finite = |field: &str, v: f64| require(v.is_finite(), field, "must be finite");
        for (k, v) in [
            ("t_total", f.t_total),
            ("dt", f.dt),
            ("e1", f.e1),
            ("e2", f.e2),
            ("beta0", f.beta0),
            ("sigma2_c", f.sigma2_c),
            ("sigma2_r", f.sigma2_r),
            ("p_t", f.p_t),
            ("target_speed", f.target_speed),
            ("heading", f.heading),
            ("gamma_c", f.gamma_c),
        ] {
            finite(k, v)?;
        }
        require(f.dt > 0.0, "dt", "must be positive")?;
        require(f.t_total > 0.0, "t_total", "must be positive")?;
        let ratio = f.t_total / f.dt;
        require((ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0), "t_total", "t_total/dt must be an integer")?;
        let n_slots = ratio.round() as usize;
        require(n_slots >= 2, "t_total", "episode needs at least two slots")?;
        require(f.height > 0.0 && f.height.is_finite(), "height", "must be positive")?;
        require(f.d_min >= 0.0 && f.d_min.is_finite(), "d_min", "must be nonnegative")?;
        require(f.v_max > 0.0 && f.v_max.is_finite(), "v_max", "must be positive")?;
        require(f.n_t >= 1, "n_t", "must be at least 1")?;
        require(f.n_r >= 1, "n_r", "must be at least 1")?;
        require(f.psi >= 0.0 && f.psi.is_finite(), "psi", "must be nonnegative")?;
        require(f.eta > 0.0 && f.eta.is_finite(), "eta", "must be positive")?;
        require(f.k_max >= 1, "k_max", "must be at least 1")?;
        require(f.gamma_c >= 0.0, "gamma_c", "must be >= 0 dB (0 disables the constraint)")?;
        require(f.m1_diag.iter().all(|v| *v >= 0.0 && v.is_finite()), "m1_diag", "entries must be nonnegative")?;
        for (k, v) in [("process_noise_scale", f.process_noise_scale), ("measurement_noise_scale", f.measurement_noise_scale)] {
            require(v >= 0.0 && v.is_finite(), k, "must be nonnegative")?;
        }
        for (k, v) in [("u1", f.u1), ("q1_init", f.q1_init), ("q2_init", f.q2_init)] {
            require(v.iter().all(|x| x.is_finite()), k, "coordinates must be finite")?;
        }

        let sensing = SensingParams {
            a_tau: f.a_tau,
            sigma2_r: dbm_to_watts(f.sigma2_r),
            g_mf: f.g_mf,
            n_t: f.n_t,
            n_r: f.n_r,
            p_t: dbm_to_watts(f.p_t),
            xi: f.xi,
            c: SPEED_OF_LIGHT,
        };
        sensing.validate().map_err(|e| field_err("a_tau/g_mf/xi", e.to_string()))?;
        let channel = ChannelParams {
            e1: f.e1,
            e2: f.e2,
            beta0: db_to_linear(f.beta0),
            kappa_nlos: f.kappa_nlos,
            alpha: f.alpha,
            n_t: f.n_t,
            p_t: dbm_to_watts(f.p_t),
            sigma2_c: dbm_to_watts(f.sigma2_c),
        };
        channel.validate().map_err(|e| field_err("kappa_nlos/alpha", e.to_string()))?;
        let motion = MotionNoise::new(f.sigma2_x, f.sigma2_y, f.sigma2_vx, f.sigma2_vy)
            .map_err(|e| field_err("sigma2_x/sigma2_y/sigma2_vx/sigma2_vy", e.to_string()))?;
        let q1_init = UavPose::new(f.q1_init[0], f.q1_init[1], f.height)?;
        let q2_init = UavPose::new(f.q2_init[0], f.q2_init[1], f.height)?;
        let planner = PlannerParams {
            sensing,
            channel,
            v_max: f.v_max,
            dt: f.dt,
            d_min: f.d_min,
            gamma_c: if f.gamma_c == 0.0 { 0.0 } else { db_to_linear(f.gamma_c) },
            psi: f.psi,
            eta: f.eta,
            k_max: f.k_max,
            mobility: Mobility::BOTH,
        };
        Ok(Self {
            n_slots,
            dt: f.dt,
            sensing,
            channel,
            motion,
            initial_target: TargetState::with_heading(f.u1[0], f.u1[1], f.target_speed, f.heading),
            q1_init,
            q2_init,
            m1: Matrix4::from_diagonal(&Vector4::from(f.m1_diag)),
            planner,
            process_noise_scale: f.process_noise_scale,
            measurement_noise_scale: f.measurement_noise_scale,
            file: f,
        })
    }

    /// Process-noise model actually used (and assumed by the filter).
    pub fn process_noise(&self) -> MotionNoise {
        self.motion.scaled(self.process_noise_scale)
    }
}
