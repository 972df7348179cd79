//! Per-slot joint placement of both UAVs.
//!
//! Each slot runs successive convex approximation on the predicted CRB:
//! the objective is replaced by its first-order expansion, the collision
//! constraint by its linearization (an inner approximation), and the robust
//! SNR requirement by a disc around the predicted target. The resulting
//! convex subproblem is solved with a small barrier method. Candidates are
//! only accepted when the true predicted CRB decreases.

pub mod barrier;

use nalgebra::{DVector, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::channel::{channel_gain, linear_to_db, ChannelParams, ErrorBall};
use crate::error::{Error, Result};
use crate::model::{TargetState, UavPose, CONSTRAINT_SLACK};
use crate::sensing::{crb_gradient, predicted_crb, SensingParams};
use barrier::{Constraint, Problem};

/// Maximum step halvings before a rejected SCA candidate ends the slot.
pub const MAX_HALVINGS: usize = 8;

/// First-order model of the predicted CRB around an expansion point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surrogate {
    pub base_value: f64,
    /// `(∂/∂q1x, ∂/∂q1y, ∂/∂q2x, ∂/∂q2y)`.
    pub gradient: Vector4<f64>,
    pub q1: UavPose,
    pub q2: UavPose,
}

impl Surrogate {
    pub fn eval(&self, q1: &UavPose, q2: &UavPose) -> f64 {
        self.base_value + self.gradient.dot(&(stack(q1, q2) - stack(&self.q1, &self.q2)))
    }
}

fn stack(q1: &UavPose, q2: &UavPose) -> Vector4<f64> {
    Vector4::new(q1.qx, q1.qy, q2.qx, q2.qy)
}

/// Linear constraint `normalᵀ (q1x, q1y, q2x, q2y) ≥ offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vector4<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn contains(&self, q1: &UavPose, q2: &UavPose) -> bool {
        self.normal.dot(&stack(q1, q2)) >= self.offset - CONSTRAINT_SLACK * self.normal.norm()
    }
}

pub fn linearize_crb(
    q1_k: &UavPose,
    q2_k: &UavPose,
    predicted_target: &TargetState,
    params: &SensingParams,
) -> Result<Surrogate> {
    let base_value = predicted_crb(q1_k, q2_k, predicted_target, params)?.crb;
    let gradient = crb_gradient(q1_k, q2_k, predicted_target, params)?;
    Ok(Surrogate { base_value, gradient, q1: *q1_k, q2: *q2_k })
}

/// `2(q1ᵏ−q2ᵏ)ᵀ(q1−q2) − ‖q1ᵏ−q2ᵏ‖² ≥ d_min²`, the tangent lower bound of
/// `‖q1−q2‖²` at the expansion point.
pub fn linearize_collision(q1_k: &UavPose, q2_k: &UavPose, dmin: f64) -> Result<Halfspace> {
    let diff = q1_k.horizontal() - q2_k.horizontal();
    if diff.norm() <= 1e-6 {
        return Err(Error::DegenerateLinearization);
    }
    Ok(Halfspace {
        normal: Vector4::new(2.0 * diff[0], 2.0 * diff[1], -2.0 * diff[0], -2.0 * diff[1]),
        offset: dmin * dmin + diff.norm_squared(),
    })
}

/// Worst-case SNR with UAV-1 at horizontal distance `r` from the target.
fn worst_case_snr_at(r: f64, height: f64, ball: &ErrorBall, params: &ChannelParams) -> f64 {
    let d = (r * r + height * height).sqrt();
    let theta = (height / d).clamp(-1.0, 1.0).acos().to_degrees();
    let norm = channel_gain(theta, d, params).expect("angle from acos").sqrt();
    let margin = (norm - ball.epsilon).max(0.0);
    params.p_t * margin * margin / params.sigma2_c
}

/// Range of horizontal UAV-1-to-target distances meeting the robust SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrBand {
    pub inner: f64,
    pub outer: f64,
}

impl SnrBand {
    pub const UNCONSTRAINED: SnrBand = SnrBand { inner: 0.0, outer: f64::INFINITY };
}

fn bisect(mut feasible: f64, mut infeasible: f64, ok: impl Fn(f64) -> bool) -> f64 {
    while (feasible - infeasible).abs() > 1e-3 {
        let mid = 0.5 * (feasible + infeasible);
        if ok(mid) {
            feasible = mid;
        } else {
            infeasible = mid;
        }
    }
    feasible
}

/// First interval of horizontal distances (from the predicted target) on
/// which the worst-case SNR meets `gamma_c`: a 1 m grid scan outward from
/// zero, refined by bisection to 1 mm. The channel is weakest directly
/// overhead under the LoS model, so `inner` can be positive.
pub fn snr_feasible_band(
    _predicted_target: &TargetState,
    height: f64,
    ball: &ErrorBall,
    gamma_c: f64,
    params: &ChannelParams,
) -> Result<SnrBand> {
    if !(gamma_c >= 0.0) {
        return Err(Error::InvalidInput(format!("gamma_c must be >= 0, got {gamma_c}")));
    }
    if gamma_c == 0.0 {
        return Ok(SnrBand::UNCONSTRAINED);
    }
    let ok = |r: f64| worst_case_snr_at(r, height, ball, params) >= gamma_c;
    // ‖h‖² ≤ β₀ d^{-α}, so nothing beyond this distance can be feasible.
    let required = params.required_norm(gamma_c) + ball.epsilon;
    let d_cap = (params.beta0 / (required * required)).powf(1.0 / params.alpha);
    let r_cap = (d_cap * d_cap - height * height).max(0.0).sqrt() + 1.0;

    let mut r = 0.0;
    while !ok(r) {
        r += 1.0;
        if r > r_cap {
            return Err(Error::SnrInfeasible {
                overhead_db: linear_to_db(worst_case_snr_at(0.0, height, ball, params)),
            });
        }
    }
    let inner = if r == 0.0 { 0.0 } else { bisect(r, r - 1.0, ok) };
    while r <= r_cap {
        r += 1.0;
        if !ok(r) {
            return Ok(SnrBand { inner, outer: bisect(r - 1.0, r, ok) });
        }
    }
    Ok(SnrBand { inner, outer: r_cap })
}

/// Outer radius of [`snr_feasible_band`]; infinite when `gamma_c == 0`.
pub fn snr_feasible_radius(
    predicted_target: &TargetState,
    height: f64,
    ball: &ErrorBall,
    gamma_c: f64,
    params: &ChannelParams,
) -> Result<f64> {
    Ok(snr_feasible_band(predicted_target, height, ball, gamma_c, params)?.outer)
}

/// Tangent lower bound of `‖q1 − center‖ ≥ r` at `q1_k`:
/// `uᵀ(q1 − center) ≥ r` with `u` the unit vector from `center` to `q1_k`.
pub fn linearize_keepout(q1_k: &UavPose, center: &Vector2<f64>, r: f64) -> Result<Halfspace> {
    let diff = q1_k.horizontal() - center;
    let dist = diff.norm();
    if dist <= 1e-6 {
        return Err(Error::DegenerateLinearization);
    }
    let u = diff / dist;
    Ok(Halfspace { normal: Vector4::new(u[0], u[1], 0.0, 0.0), offset: r + u.dot(center) })
}

/// Which UAVs the planner may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mobility {
    pub uav1: bool,
    pub uav2: bool,
}

impl Mobility {
    pub const BOTH: Mobility = Mobility { uav1: true, uav2: true };
    pub const TRANSMITTER_ONLY: Mobility = Mobility { uav1: true, uav2: false };
    pub const NONE: Mobility = Mobility { uav1: false, uav2: false };
}

/// Disc constraint on one UAV's horizontal position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: Vector2<f64>,
    pub radius: f64,
}

impl Disc {
    pub fn contains(&self, q: &UavPose) -> bool {
        (q.horizontal() - self.center).norm() <= self.radius + CONSTRAINT_SLACK
    }
}

/// Constraint set of one convex subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotConstraints {
    /// Reachable set of UAV-1 this slot; `None` when it is held fixed.
    pub speed1: Option<Disc>,
    pub speed2: Option<Disc>,
    pub collision: Halfspace,
    /// Robust-SNR disc around the predicted target; `None` when inactive.
    pub snr: Option<Disc>,
    /// Linearized lower bound on UAV-1's distance from the predicted target.
    pub snr_inner: Option<Halfspace>,
}

impl SlotConstraints {
    pub fn contains(&self, q1: &UavPose, q2: &UavPose) -> bool {
        self.speed1.is_none_or(|d| d.contains(q1))
            && self.speed2.is_none_or(|d| d.contains(q2))
            && self.collision.contains(q1, q2)
            && self.snr.is_none_or(|d| d.contains(q1))
            && self.snr_inner.is_none_or(|h| h.contains(q1, q2))
    }
}

/// Minimize the affine surrogate over the slot constraints, starting from the
/// surrogate's expansion point. A zero gradient keeps the expansion point.
pub fn solve_subproblem(surrogate: &Surrogate, constraints: &SlotConstraints) -> Result<(UavPose, UavPose)> {
    let (q1k, q2k) = (surrogate.q1, surrogate.q2);
    let movable1 = constraints.speed1.is_some();
    let movable2 = constraints.speed2.is_some();
    let n = 2 * (movable1 as usize + movable2 as usize);
    if n == 0 {
        return Ok((q1k, q2k));
    }
    let off2 = if movable1 { 2 } else { 0 };

    let mut objective = DVector::zeros(n);
    let mut start = DVector::zeros(n);
    let mut cons = Vec::new();
    let g = surrogate.gradient;
    let h = constraints.collision;
    let mut lin = DVector::zeros(n);
    // Collision halfspace, rewritten as −normalᵀz ≤ −offset + fixed part.
    let mut rhs = -h.offset;
    if let Some(d) = constraints.speed1 {
        objective[0] = g[0];
        objective[1] = g[1];
        start[0] = q1k.qx;
        start[1] = q1k.qy;
        lin[0] = -h.normal[0];
        lin[1] = -h.normal[1];
        cons.push(Constraint::Disc { offset: 0, center: d.center, radius: d.radius });
        if let Some(s) = constraints.snr {
            if s.radius.is_finite() {
                cons.push(Constraint::Disc { offset: 0, center: s.center, radius: s.radius });
            }
        }
        if let Some(k) = constraints.snr_inner {
            let a = DVector::from_fn(n, |i, _| if i < 2 { -k.normal[i] } else { 0.0 });
            cons.push(Constraint::Halfspace { a, b: -k.offset });
        }
    } else {
        rhs += h.normal[0] * q1k.qx + h.normal[1] * q1k.qy;
    }
    if let Some(d) = constraints.speed2 {
        objective[off2] = g[2];
        objective[off2 + 1] = g[3];
        start[off2] = q2k.qx;
        start[off2 + 1] = q2k.qy;
        lin[off2] = -h.normal[2];
        lin[off2 + 1] = -h.normal[3];
        cons.push(Constraint::Disc { offset: off2, center: d.center, radius: d.radius });
    } else {
        rhs += h.normal[2] * q2k.qx + h.normal[3] * q2k.qy;
    }
    if lin.norm() > 0.0 {
        cons.push(Constraint::Halfspace { a: lin, b: rhs });
    }

    let problem = Problem { objective, constraints: cons };
    let sol = problem.solve(&start)?;
    let q1 = if movable1 { q1k.moved_to(Vector2::new(sol.z[0], sol.z[1])) } else { q1k };
    let q2 = if movable2 { q2k.moved_to(Vector2::new(sol.z[off2], sol.z[off2 + 1])) } else { q2k };
    Ok((q1, q2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    pub sensing: SensingParams,
    pub channel: ChannelParams,
    pub v_max: f64,
    pub dt: f64,
    pub d_min: f64,
    /// Linear SNR threshold; zero disables the communication constraint.
    pub gamma_c: f64,
    pub psi: f64,
    /// Relative objective change that stops the SCA loop.
    pub eta: f64,
    pub k_max: usize,
    pub mobility: Mobility,
}

/// Per-slot record of the SCA iterations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScaTrace {
    /// Predicted CRB of every accepted iterate, starting at the slot's start.
    pub objectives: Vec<f64>,
    /// Displacement of each accepted step in the stacked `(q1, q2)` space.
    pub step_norms: Vec<f64>,
    pub converged: bool,
    /// Number of subproblems solved.
    pub iterations: usize,
    pub halvings: usize,
    /// The first step moved UAV-1 back into the SNR band and may raise the
    /// objective.
    pub feasibility_move: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SnrStatus {
    /// No communication constraint this slot.
    Inactive,
    Satisfied,
    /// No horizontal distance meets the target; poses were held.
    Infeasible,
    /// A feasible band exists but UAV-1 cannot reach it this slot.
    Unreachable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaOutcome {
    pub q1: UavPose,
    pub q2: UavPose,
    pub trace: ScaTrace,
    pub ball: ErrorBall,
    pub snr_band: SnrBand,
    pub snr_status: SnrStatus,
}

fn objective_or_inf(q1: &UavPose, q2: &UavPose, target: &TargetState, params: &SensingParams) -> f64 {
    predicted_crb(q1, q2, target, params).map_or(f64::INFINITY, |r| r.crb)
}

/// One slot of the SCA loop, starting from the previous poses.
pub fn sca_step(
    prev_q1: &UavPose,
    prev_q2: &UavPose,
    predicted_target: &TargetState,
    m_pred: &nalgebra::Matrix4<f64>,
    params: &PlannerParams,
) -> Result<ScaOutcome> {
    let ball = crate::channel::error_radius(m_pred, params.psi)?;
    let reach = params.v_max * params.dt;
    let speed1 = params.mobility.uav1.then(|| Disc { center: prev_q1.horizontal(), radius: reach });
    let speed2 = params.mobility.uav2.then(|| Disc { center: prev_q2.horizontal(), radius: reach });

    let mut status = if params.gamma_c > 0.0 { SnrStatus::Satisfied } else { SnrStatus::Inactive };
    let band = match snr_feasible_band(predicted_target, prev_q1.height, &ball, params.gamma_c, &params.channel) {
        Ok(b) => b,
        Err(Error::SnrInfeasible { .. }) => {
            let f0 = objective_or_inf(prev_q1, prev_q2, predicted_target, &params.sensing);
            return Ok(ScaOutcome {
                q1: *prev_q1,
                q2: *prev_q2,
                trace: ScaTrace { objectives: vec![f0], converged: true, ..Default::default() },
                ball,
                snr_band: SnrBand { inner: f64::NAN, outer: f64::NAN },
                snr_status: SnrStatus::Infeasible,
            });
        }
        Err(e) => return Err(e),
    };
    let center = predicted_target.position();
    let mut active = params.mobility.uav1 && band != SnrBand::UNCONSTRAINED;

    let mut q1 = *prev_q1;
    let mut q2 = *prev_q2;
    let mut trace = ScaTrace::default();
    trace.objectives.push(objective_or_inf(&q1, &q2, predicted_target, &params.sensing));

    if active {
        // Move UAV-1 to the nearest point of the band if it starts outside.
        let offset = q1.horizontal() - center;
        let dist = offset.norm();
        let goal = dist.clamp(band.inner, band.outer);
        if (goal - dist).abs() > CONSTRAINT_SLACK {
            let dir = if dist > 1e-9 { offset / dist } else { Vector2::new(1.0, 0.0) };
            let gap = (goal - dist).abs();
            let step = gap.min(reach);
            let cand = q1.moved_to(center + dir * (dist + (goal - dist).signum() * step));
            if step < gap || !crate::model::check_separation(&cand, &q2, params.d_min) {
                status = SnrStatus::Unreachable;
                active = false;
            } else {
                trace.feasibility_move = true;
                trace.step_norms.push((cand.horizontal() - q1.horizontal()).norm());
                q1 = cand;
                trace.objectives.push(objective_or_inf(&q1, &q2, predicted_target, &params.sensing));
            }
        }
    }
    let snr = (active && band.outer.is_finite()).then_some(Disc { center, radius: band.outer });

    let mut f_k = *trace.objectives.last().expect("start objective recorded");
    if !f_k.is_finite() {
        return Err(Error::GeometrySingular { condition: f64::INFINITY });
    }

    while trace.iterations < params.k_max {
        let surrogate = linearize_crb(&q1, &q2, predicted_target, &params.sensing)?;
        let snr_inner = if active && band.inner > 0.0 {
            Some(linearize_keepout(&q1, &center, band.inner)?)
        } else {
            None
        };
        let constraints = SlotConstraints {
            speed1,
            speed2,
            collision: linearize_collision(&q1, &q2, params.d_min)?,
            snr,
            snr_inner,
        };
        trace.iterations += 1;
        if surrogate.gradient == Vector4::zeros() {
            trace.converged = true;
            break;
        }
        let (mut c1, mut c2) = solve_subproblem(&surrogate, &constraints)?;

        let mut accepted = false;
        for halving in 0..=MAX_HALVINGS {
            let f_c = objective_or_inf(&c1, &c2, predicted_target, &params.sensing);
            if f_c < f_k {
                accepted = true;
                trace.halvings += halving;
                break;
            }
            if halving < MAX_HALVINGS {
                c1 = q1.moved_to((q1.horizontal() + c1.horizontal()) * 0.5);
                c2 = q2.moved_to((q2.horizontal() + c2.horizontal()) * 0.5);
            }
        }
        if !accepted {
            trace.halvings += MAX_HALVINGS;
            // No decrease along the surrogate's direction: ΔF = 0.
            trace.converged = true;
            break;
        }
        let f_c = objective_or_inf(&c1, &c2, predicted_target, &params.sensing);
        trace.step_norms.push((stack(&c1, &c2) - stack(&q1, &q2)).norm());
        let delta = f_k - f_c;
        q1 = c1;
        q2 = c2;
        trace.objectives.push(f_c);
        let done = delta <= params.eta * f_k;
        f_k = f_c;
        if done {
            trace.converged = true;
            break;
        }
    }

    Ok(ScaOutcome { q1, q2, trace, ball, snr_band: band, snr_status: status })
}
