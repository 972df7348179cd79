//! Episode orchestration: the per-slot loop of prediction, planning,
//! measurement and correction, plus baselines, batches and ψ calibration.

pub mod config;

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    channel_vector, linear_to_db, predicted_channel, psi_from_samples, robust_snr_lmi_feasible, snr, worst_case_snr,
    CalibrationSample, ErrorBall,
};
use crate::ekf::{kalman_gain, measurement_update, time_update, EkfBelief};
use crate::error::{Error, Result};
use crate::model::{build_transition_matrix, check_separation, check_speed, propagate_target, TargetState, UavPose};
use crate::sensing::{
    crb, generate_measurement_scaled, measurement_jacobian, noise_covariance, predicted_crb, true_delays, Measurement,
};
use crate::trajopt::{sca_step, Mobility, ScaOutcome, ScaTrace, SnrStatus};
pub use config::{ScenarioConfig, ScenarioFile};

/// How the UAVs are allowed to move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    /// Both UAVs replanned every slot.
    Proposed,
    /// UAV-1 replanned, UAV-2 parked at the given horizontal position.
    SemiDynamic { q2: [f64; 2] },
    /// Both UAVs hold their initial positions.
    Static,
    /// Both UAVs replanned with the communication constraint removed.
    NoComm,
}

impl Policy {
    pub fn label(&self) -> String {
        match self {
            Policy::Proposed => "proposed".into(),
            Policy::SemiDynamic { q2 } => format!("semi-dynamic({},{})", q2[0], q2[1]),
            Policy::Static => "static".into(),
            Policy::NoComm => "no-comm".into(),
        }
    }

    fn mobility(&self) -> Mobility {
        match self {
            Policy::Proposed | Policy::NoComm => Mobility::BOTH,
            Policy::SemiDynamic { .. } => Mobility::TRANSMITTER_ONLY,
            Policy::Static => Mobility::NONE,
        }
    }
}

/// Independent random streams per slot so that noise draws do not depend
/// on the policy.
#[derive(Debug, Clone, Copy)]
enum Stream {
    InitialBelief = 0,
    Process = 1,
    Measurement = 2,
}

fn substream(seed: u64, slot: usize, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((slot as u64) << 8) | purpose as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotLog {
    pub n: usize,
    pub truth: TargetState,
    /// Belief after the measurement update.
    pub belief: EkfBelief,
    pub predicted: EkfBelief,
    pub q1: UavPose,
    pub q2: UavPose,
    pub measurement: Measurement,
    /// CRB at the predicted target (planning objective); NaN if singular.
    pub pred_crb: f64,
    /// CRB at the true target under the actual noise; NaN if singular.
    pub crb_at_truth: f64,
    /// Realized SNR with the true channel and the matched beamformer.
    pub snr_db: f64,
    pub wc_snr_db: f64,
    /// LMI verdict for the predicted channel; `None` without a constraint.
    pub lmi_feasible: Option<bool>,
    pub epsilon: f64,
    /// Feasible UAV-1-to-target distances; NaN when none exist.
    pub snr_inner: f64,
    pub snr_outer: f64,
    pub snr_status: SnrStatus,
    pub sca: ScaTrace,
    /// Planner error that forced the previous poses to be held.
    pub fallback: Option<String>,
    pub violations: usize,
}

impl SlotLog {
    pub fn sca_iters(&self) -> usize {
        self.sca.iterations
    }

    pub fn position_error(&self) -> f64 {
        (self.belief.x_hat.position() - self.truth.position()).norm()
    }

    pub fn inter_uav_distance(&self) -> f64 {
        self.q1.horizontal_distance(&self.q2)
    }

    pub fn uav1_target_distance(&self) -> f64 {
        (self.q1.horizontal() - self.truth.position()).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub rmse: f64,
    pub mean_crb: f64,
    pub max_crb: f64,
    pub mean_pred_crb: f64,
    /// Fraction of slots whose realized SNR meets the threshold.
    pub snr_satisfaction: f64,
    pub mean_d12: f64,
    pub mean_d1t: f64,
    pub violations: usize,
    pub infeasible_slots: usize,
    pub final_error: f64,
}

fn finite_mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.filter(|x| x.is_finite()).fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl EpisodeSummary {
    pub fn from_slots(slots: &[SlotLog], gamma_c_db: Option<f64>) -> Self {
        let n = slots.len().max(1) as f64;
        let satisfied = slots.iter().filter(|s| gamma_c_db.is_none_or(|g| s.snr_db >= g)).count();
        Self {
            rmse: (slots.iter().map(|s| s.position_error().powi(2)).sum::<f64>() / n).sqrt(),
            mean_crb: finite_mean(slots.iter().map(|s| s.crb_at_truth)),
            max_crb: slots.iter().map(|s| s.crb_at_truth).filter(|x| x.is_finite()).fold(f64::NAN, f64::max),
            mean_pred_crb: finite_mean(slots.iter().map(|s| s.pred_crb)),
            snr_satisfaction: satisfied as f64 / n,
            mean_d12: finite_mean(slots.iter().map(SlotLog::inter_uav_distance)),
            mean_d1t: finite_mean(slots.iter().map(SlotLog::uav1_target_distance)),
            violations: slots.iter().map(|s| s.violations).sum(),
            infeasible_slots: slots.iter().filter(|s| s.snr_status == SnrStatus::Infeasible).count(),
            final_error: slots.last().map_or(f64::NAN, SlotLog::position_error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeLog {
    pub config: ScenarioFile,
    pub policy: Policy,
    pub seed: u64,
    pub slots: Vec<SlotLog>,
    pub summary: EpisodeSummary,
}

impl EpisodeLog {
    /// Threshold in dB when the communication constraint is active.
    pub fn gamma_c_db(&self) -> Option<f64> {
        (self.policy != Policy::NoComm && self.config.gamma_c > 0.0).then_some(self.config.gamma_c)
    }

    pub fn recompute_summary(&self) -> EpisodeSummary {
        EpisodeSummary::from_slots(&self.slots, self.gamma_c_db())
    }
}

fn held(q1: &UavPose, q2: &UavPose, ball: ErrorBall) -> ScaOutcome {
    ScaOutcome {
        q1: *q1,
        q2: *q2,
        trace: ScaTrace { converged: true, ..Default::default() },
        ball,
        snr_band: crate::trajopt::SnrBand::UNCONSTRAINED,
        snr_status: SnrStatus::Inactive,
    }
}

/// Run one episode of `N` slots; slot 1 holds the initial values.
pub fn run_episode(config: &ScenarioConfig, policy: Policy, seed: u64) -> Result<EpisodeLog> {
    let g = build_transition_matrix(config.dt)?;
    let process = config.process_noise();
    let q_cov = process.covariance();
    let mut planner = config.planner;
    planner.mobility = policy.mobility();
    if policy == Policy::NoComm {
        planner.gamma_c = 0.0;
    }
    let gamma_c_db = (planner.gamma_c > 0.0).then_some(config.file.gamma_c);

    let mut truth = config.initial_target;
    let init = process.sample(&mut substream(seed, 1, Stream::InitialBelief));
    let mut belief = EkfBelief::new(TargetState::from_vector(&(truth.to_vector() + init)), config.m1);
    let mut q1 = config.q1_init;
    let mut q2 = match policy {
        Policy::SemiDynamic { q2 } => config.q2_init.moved_to(Vector2::new(q2[0], q2[1])),
        _ => config.q2_init,
    };

    let mut slots = Vec::with_capacity(config.n_slots.saturating_sub(1));
    for n in 2..=config.n_slots {
        truth = propagate_target(&truth, config.dt, &process, &mut substream(seed, n, Stream::Process))?;
        let predicted = time_update(&belief, &g, &q_cov);

        let ball = crate::channel::error_radius(&predicted.m, planner.psi)?;
        let (prev1, prev2) = (q1, q2);
        let (outcome, fallback) = if planner.mobility == Mobility::NONE {
            (held(&q1, &q2, ball), None)
        } else {
            match sca_step(&q1, &q2, &predicted.x_hat, &predicted.m, &planner) {
                Ok(o) => (o, None),
                Err(
                    e @ (Error::GeometrySingular { .. }
                    | Error::SubproblemInfeasible { .. }
                    | Error::NumericalBreakdown(_)
                    | Error::DegenerateLinearization),
                ) => (held(&q1, &q2, ball), Some(e.to_string())),
                Err(e) => return Err(e),
            }
        };
        q1 = outcome.q1;
        q2 = outcome.q2;

        let (y, _) = generate_measurement_scaled(
            &q1,
            &q2,
            &truth,
            &config.sensing,
            config.measurement_noise_scale,
            &mut substream(seed, n, Stream::Measurement),
        );
        let e = measurement_jacobian(&q1, &q2, &predicted.x_hat, &config.sensing);
        let r = noise_covariance(&q1, &q2, &predicted.x_hat, &config.sensing).scaled(config.measurement_noise_scale);
        let k = kalman_gain(&predicted.m, &e, &r)?;
        let predicted_meas = true_delays(&q1, &q2, &predicted.x_hat, &config.sensing);
        belief = measurement_update(&predicted, &k, &y, &predicted_meas, &e);

        let h_hat = predicted_channel(&q1, &predicted.x_hat, &config.channel);
        let h_true = channel_vector(&q1, &truth, &config.channel);
        let realized = snr(&h_true, &h_hat.matched_beamformer(), &config.channel);
        let wc = worst_case_snr(&h_hat, &outcome.ball, &config.channel);
        let lmi = (planner.gamma_c > 0.0).then(|| robust_snr_lmi_feasible(&h_hat, &outcome.ball, planner.gamma_c, &config.channel));

        let mut violations = 0;
        if planner.mobility.uav1 && !check_speed(&prev1, &q1, planner.v_max, planner.dt) {
            violations += 1;
        }
        if planner.mobility.uav2 && !check_speed(&prev2, &q2, planner.v_max, planner.dt) {
            violations += 1;
        }
        if planner.mobility != Mobility::NONE && !check_separation(&q1, &q2, planner.d_min) {
            violations += 1;
        }
        if outcome.snr_status == SnrStatus::Satisfied && wc < planner.gamma_c * (1.0 - 1e-9) {
            violations += 1;
        }

        let actual_crb = crb(&q1, &q2, &truth, &config.sensing).map_or(f64::NAN, |c| c.crb * config.measurement_noise_scale);
        slots.push(SlotLog {
            n,
            truth,
            belief,
            predicted,
            q1,
            q2,
            measurement: y,
            pred_crb: predicted_crb(&q1, &q2, &predicted.x_hat, &config.sensing).map_or(f64::NAN, |c| c.crb),
            crb_at_truth: actual_crb,
            snr_db: linear_to_db(realized),
            wc_snr_db: linear_to_db(wc),
            lmi_feasible: lmi,
            epsilon: outcome.ball.epsilon,
            snr_inner: outcome.snr_band.inner,
            snr_outer: outcome.snr_band.outer,
            snr_status: outcome.snr_status,
            sca: outcome.trace,
            fallback,
            violations,
        });
    }

    let summary = EpisodeSummary::from_slots(&slots, gamma_c_db);
    Ok(EpisodeLog { config: config.file.clone(), policy, seed, slots, summary })
}

/// Episodes for every seed, run in parallel; output order follows `seeds`.
pub fn run_batch(config: &ScenarioConfig, policy: Policy, seeds: &[u64]) -> Result<Vec<EpisodeLog>> {
    seeds.par_iter().map(|s| run_episode(config, policy, *s)).collect()
}

/// One batch per value of `key` (in file units).
pub fn run_sweep(
    file: &ScenarioFile,
    policy: Policy,
    key: &str,
    values: &[f64],
    seeds: &[u64],
) -> Result<Vec<(f64, Vec<EpisodeLog>)>> {
    // Validate the key even when there is nothing to run.
    file.with_value(key, 0.0).or_else(|e| match e {
        Error::InvalidConfig(m) if m.starts_with("unknown") || m.contains("not a scalar") => Err(Error::InvalidConfig(m)),
        _ => Ok(file.clone()),
    })?;
    values
        .iter()
        .map(|v| {
            let cfg = file.with_value(key, *v)?.resolve()?;
            Ok((*v, run_batch(&cfg, policy, seeds)?))
        })
        .collect()
}

/// Aggregates over a group of episodes sharing one policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: String,
    pub episodes: usize,
    pub rmse: f64,
    pub mean_crb: f64,
    pub max_crb: f64,
    pub snr_satisfaction: f64,
    pub mean_d12: f64,
    pub mean_d1t: f64,
    pub violations: usize,
    pub infeasible_slots: usize,
}

/// Per-policy aggregates, pooled over all slots of all episodes, in order of
/// first appearance.
pub fn summarize(episodes: &[EpisodeLog]) -> Result<Vec<PolicySummary>> {
    if episodes.is_empty() {
        return Err(Error::InvalidInput("nothing to summarize".into()));
    }
    let mut labels: Vec<String> = Vec::new();
    for e in episodes {
        let l = e.policy.label();
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    Ok(labels
        .into_iter()
        .map(|label| {
            let group: Vec<&EpisodeLog> = episodes.iter().filter(|e| e.policy.label() == label).collect();
            let pooled: Vec<&SlotLog> = group.iter().flat_map(|e| e.slots.iter()).collect();
            let n = pooled.len().max(1) as f64;
            let satisfied: usize = group
                .iter()
                .map(|e| {
                    let g = e.gamma_c_db();
                    e.slots.iter().filter(|s| g.is_none_or(|g| s.snr_db >= g)).count()
                })
                .sum();
            PolicySummary {
                policy: label,
                episodes: group.len(),
                rmse: (pooled.iter().map(|s| s.position_error().powi(2)).sum::<f64>() / n).sqrt(),
                mean_crb: finite_mean(pooled.iter().map(|s| s.crb_at_truth)),
                max_crb: pooled.iter().map(|s| s.crb_at_truth).filter(|x| x.is_finite()).fold(f64::NAN, f64::max),
                snr_satisfaction: satisfied as f64 / n,
                mean_d12: finite_mean(pooled.iter().map(|s| s.inter_uav_distance())),
                mean_d1t: finite_mean(pooled.iter().map(|s| s.uav1_target_distance())),
                violations: pooled.iter().map(|s| s.violations).sum(),
                infeasible_slots: pooled.iter().filter(|s| s.snr_status == SnrStatus::Infeasible).count(),
            }
        })
        .collect())
}

/// (prediction, truth) pairs from communication-free episodes, one per
/// slot, until `trials` samples are collected.
pub fn calibration_samples(config: &ScenarioConfig, trials: usize, seed: u64) -> Result<Vec<CalibrationSample>> {
    let per_episode = config.n_slots - 1;
    let episodes = trials.div_ceil(per_episode);
    let seeds: Vec<u64> = (0..episodes as u64).map(|i| seed.wrapping_add(i)).collect();
    let logs = run_batch(config, Policy::NoComm, &seeds)?;
    Ok(logs
        .iter()
        .flat_map(|l| l.slots.iter())
        .take(trials)
        .map(|s| CalibrationSample { uav1: s.q1, predicted: s.predicted.x_hat, m_pred: s.predicted.m, truth: s.truth })
        .collect())
}

/// Smallest ψ whose error ball covers the channel prediction error with the
/// requested empirical frequency.
pub fn calibrate_psi(config: &ScenarioConfig, trials: usize, coverage: f64, seed: u64) -> Result<f64> {
    if trials < 1000 {
        return Err(Error::InvalidInput(format!("calibration needs at least 1000 trials, got {trials}")));
    }
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(Error::InvalidInput(format!("coverage must lie in (0, 1), got {coverage}")));
    }
    let samples = calibration_samples(config, trials, seed)?;
    psi_from_samples(samples, coverage, &config.channel)
}

#[cfg(test)]
mod tests;
