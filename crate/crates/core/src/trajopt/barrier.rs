//! Log-barrier interior-point solver for tiny problems with a linear
//! objective, disc constraints on coordinate pairs, and linear inequalities.
//!
//! ```text
//! minimize    cᵀz
//! subject to  ‖z[i..i+2] − center‖ ≤ radius    (discs)
//!             aᵀz ≤ b                          (halfspaces)
//! ```
//!
//! A phase-I problem (`minimize s` with every constraint relaxed by `s`)
//! supplies a strictly feasible start when the given one sits on a boundary.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};

/// Barrier is reduced until the duality-gap proxy `m/t` falls below this.
pub const GAP_TOLERANCE: f64 = 1e-8;
const BARRIER_GROWTH: f64 = 10.0;
const NEWTON_TOLERANCE: f64 = 1e-12;
const MAX_NEWTON_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `‖z[offset], z[offset+1] − center‖ ≤ radius`.
    Disc { offset: usize, center: Vector2<f64>, radius: f64 },
    /// `aᵀz ≤ b`.
    Halfspace { a: DVector<f64>, b: f64 },
}

impl Constraint {
    /// Scaled constraint value; negative means strictly inside.
    ///
    /// Discs use `(‖z − c‖² − r²) / 2r` and halfspaces are normalized by
    /// `‖a‖`, so both read roughly as signed distances in the units of `z`.
    fn value(&self, z: &DVector<f64>) -> f64 {
        match self {
            Constraint::Disc { offset, center, radius } => {
                let dx = z[*offset] - center[0];
                let dy = z[*offset + 1] - center[1];
                (dx * dx + dy * dy - radius * radius) / (2.0 * radius)
            }
            Constraint::Halfspace { a, b } => (a.dot(z) - b) / a.norm(),
        }
    }

    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            Constraint::Disc { offset, center, radius } => {
                let mut g = DVector::zeros(z.len());
                g[*offset] = (z[*offset] - center[0]) / radius;
                g[*offset + 1] = (z[*offset + 1] - center[1]) / radius;
                g
            }
            Constraint::Halfspace { a, .. } => a / a.norm(),
        }
    }

    fn add_hessian(&self, weight: f64, h: &mut DMatrix<f64>) {
        if let Constraint::Disc { offset, radius, .. } = self {
            h[(*offset, *offset)] += weight / radius;
            h[(*offset + 1, *offset + 1)] += weight / radius;
        }
    }

    /// Unscaled violation used for feasibility reporting (meters for discs).
    pub fn violation(&self, z: &DVector<f64>) -> f64 {
        match self {
            Constraint::Disc { offset, center, radius } => {
                Vector2::new(z[*offset] - center[0], z[*offset + 1] - center[1]).norm() - radius
            }
            Constraint::Halfspace { a, b } => (a.dot(z) - b) / a.norm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub objective: DVector<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub z: DVector<f64>,
    /// Barrier gap bound `m/t` at termination.
    pub gap: f64,
    /// Norm of the Lagrangian gradient using the barrier dual estimates.
    pub kkt_residual: f64,
    pub newton_steps: usize,
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.objective.len()
    }

    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        self.constraints.iter().map(|c| c.violation(z)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Solve from `start`, which must be feasible (possibly on a boundary).
    pub fn solve(&self, start: &DVector<f64>) -> Result<Solution> {
        let n = self.dim();
        if self.constraints.is_empty() {
            return Err(Error::InvalidInput("barrier solver needs at least one constraint".into()));
        }
        let c_norm = self.objective.norm();
        if c_norm == 0.0 {
            return Ok(Solution { z: start.clone(), gap: 0.0, kkt_residual: 0.0, newton_steps: 0 });
        }
        let c = &self.objective / c_norm;

        let interior = self.interior_point(start)?;
        let Some(mut z) = interior else {
            // Feasible set has no interior: the start is the only candidate.
            return Ok(Solution { z: start.clone(), gap: 0.0, kkt_residual: 0.0, newton_steps: 0 });
        };

        let m = self.constraints.len() as f64;
        let mut t = 1.0;
        let mut steps = 0;
        loop {
            steps += self.center(&c, t, &mut z)?;
            if m / t < GAP_TOLERANCE {
                break;
            }
            t *= BARRIER_GROWTH;
        }
        let kkt_residual = self.kkt_residual(&c, t, &z);
        debug_assert_eq!(z.len(), n);
        Ok(Solution { z, gap: m / t, kkt_residual, newton_steps: steps })
    }

    fn barrier_value(&self, c: &DVector<f64>, t: f64, z: &DVector<f64>) -> Option<f64> {
        let mut v = t * c.dot(z);
        for con in &self.constraints {
            let g = con.value(z);
            if !(g < 0.0) {
                return None;
            }
            v -= (-g).ln();
        }
        Some(v)
    }

    /// Newton centering on `t·cᵀz − Σ log(−g_i(z))`. Returns steps taken.
    fn center(&self, c: &DVector<f64>, t: f64, z: &mut DVector<f64>) -> Result<usize> {
        let n = z.len();
        for step in 0..MAX_NEWTON_STEPS {
            let mut grad = c * t;
            let mut hess = DMatrix::<f64>::zeros(n, n);
            for con in &self.constraints {
                let g = con.value(z);
                let dg = con.gradient(z);
                grad += &dg / (-g);
                hess += &dg * dg.transpose() / (g * g);
                con.add_hessian(1.0 / (-g), &mut hess);
            }
            let dir = match hess.clone().cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => {
                    // Unbounded directions (no constraint curvature): regularize.
                    let reg = hess + DMatrix::identity(n, n) * 1e-9;
                    -reg.lu().solve(&grad).ok_or_else(|| {
                        Error::NumericalBreakdown("barrier Newton system is singular".into())
                    })?
                }
            };
            let decrement = -grad.dot(&dir);
            if decrement / 2.0 <= NEWTON_TOLERANCE {
                return Ok(step);
            }
            let f0 = self.barrier_value(c, t, z).expect("iterate stays interior");
            let mut s = 1.0;
            loop {
                let cand = &*z + &dir * s;
                if let Some(f) = self.barrier_value(c, t, &cand) {
                    if f <= f0 - 0.25 * s * decrement {
                        *z = cand;
                        break;
                    }
                }
                s *= 0.5;
                if s < 1e-14 {
                    return Ok(step);
                }
            }
        }
        Ok(MAX_NEWTON_STEPS)
    }

    fn kkt_residual(&self, c: &DVector<f64>, t: f64, z: &DVector<f64>) -> f64 {
        let mut r = c.clone();
        for con in &self.constraints {
            let lambda = 1.0 / (t * -con.value(z));
            r += con.gradient(z) * lambda;
        }
        r.norm()
    }

    /// Strictly feasible point near `start`, or `None` when the feasible set
    /// has an empty interior but `start` itself is feasible.
    fn interior_point(&self, start: &DVector<f64>) -> Result<Option<DVector<f64>>> {
        let worst = self.constraints.iter().map(|c| c.value(start)).fold(f64::NEG_INFINITY, f64::max);
        if worst < -1e-9 {
            return Ok(Some(start.clone()));
        }
        // Phase I over (z, s): minimize s subject to g_i(z) ≤ s. The relaxed
        // constraints are folded into a barrier directly.
        let n = start.len();
        let mut z = start.clone();
        let mut s = worst + 1.0;
        let m = self.constraints.len() as f64;
        let mut t = 1.0;
        let phase_value = |z: &DVector<f64>, s: f64, t: f64| -> Option<f64> {
            let mut v = t * s;
            for con in &self.constraints {
                let slack = s - con.value(z);
                if !(slack > 0.0) {
                    return None;
                }
                v -= slack.ln();
            }
            Some(v)
        };
        for _ in 0..40 {
            for _ in 0..MAX_NEWTON_STEPS {
                let mut grad = DVector::zeros(n + 1);
                let mut hess = DMatrix::<f64>::zeros(n + 1, n + 1);
                grad[n] = t;
                for con in &self.constraints {
                    let slack = s - con.value(&z);
                    let mut dg = DVector::zeros(n + 1);
                    dg.rows_mut(0, n).copy_from(&con.gradient(&z));
                    dg[n] = -1.0;
                    // Gradient of −log(s − g) is dg / slack with dg = (∇g, −1).
                    grad += &dg / slack;
                    hess += &dg * dg.transpose() / (slack * slack);
                    let mut sub = DMatrix::<f64>::zeros(n, n);
                    con.add_hessian(1.0 / slack, &mut sub);
                    let mut block = hess.view_mut((0, 0), (n, n));
                    block += &sub;
                }
                let dir = -(hess + DMatrix::identity(n + 1, n + 1) * 1e-12)
                    .lu()
                    .solve(&grad)
                    .ok_or_else(|| Error::NumericalBreakdown("phase-I Newton system is singular".into()))?;
                let decrement = -grad.dot(&dir);
                if decrement / 2.0 <= NEWTON_TOLERANCE {
                    break;
                }
                let f0 = phase_value(&z, s, t).expect("phase-I iterate interior");
                let mut step = 1.0;
                loop {
                    let cz = &z + dir.rows(0, n) * step;
                    let cs = s + dir[n] * step;
                    if let Some(f) = phase_value(&cz, cs, t) {
                        if f <= f0 - 0.25 * step * decrement {
                            z = cz;
                            s = cs;
                            break;
                        }
                    }
                    step *= 0.5;
                    if step < 1e-14 {
                        break;
                    }
                }
                if s < -1e-6 {
                    return Ok(Some(z));
                }
            }
            if s < -1e-6 {
                return Ok(Some(z));
            }
            if m / t < 1e-10 {
                break;
            }
            t *= BARRIER_GROWTH;
        }
        let start_violation = self.max_violation(start);
        if start_violation <= 1e-9 {
            Ok(None)
        } else {
            Err(Error::SubproblemInfeasible { violation: start_violation.max(s) })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disc(offset: usize, x: f64, y: f64, r: f64) -> Constraint {
        Constraint::Disc { offset, center: Vector2::new(x, y), radius: r }
    }

    #[test]
    fn linear_over_disc() {
        let p = Problem { objective: DVector::from_vec(vec![1.0, 1.0]), constraints: vec![disc(0, 3.0, -2.0, 10.0)] };
        let sol = p.solve(&DVector::from_vec(vec![3.0, -2.0])).unwrap();
        let expected = DVector::from_vec(vec![3.0 - 10.0 / 2f64.sqrt(), -2.0 - 10.0 / 2f64.sqrt()]);
        assert!((sol.z - expected).norm() < 1e-6);
        assert!(sol.kkt_residual < 1e-6);
    }

    #[test]
    fn zero_objective_keeps_start() {
        let p = Problem { objective: DVector::zeros(2), constraints: vec![disc(0, 0.0, 0.0, 1.0)] };
        let start = DVector::from_vec(vec![0.3, 0.1]);
        assert_eq!(p.solve(&start).unwrap().z, start);
    }

    #[test]
    fn boundary_start_uses_phase_one() {
        // Start on the disc boundary and on the halfspace boundary.
        let p = Problem {
            objective: DVector::from_vec(vec![0.0, -1.0]),
            constraints: vec![
                disc(0, 0.0, 0.0, 1.0),
                Constraint::Halfspace { a: DVector::from_vec(vec![1.0, 0.0]), b: 0.0 },
            ],
        };
        let sol = p.solve(&DVector::from_vec(vec![0.0, -1.0])).unwrap();
        assert!((sol.z[1] - 1.0).abs() < 1e-6 && sol.z[0].abs() < 1e-3);
    }

    #[test]
    fn infeasible_start_is_reported() {
        let p = Problem {
            objective: DVector::from_vec(vec![1.0, 0.0]),
            constraints: vec![disc(0, 0.0, 0.0, 1.0), disc(0, 5.0, 0.0, 1.0)],
        };
        assert!(matches!(
            p.solve(&DVector::from_vec(vec![0.0, 0.0])),
            Err(Error::SubproblemInfeasible { .. })
        ));
    }

    #[test]
    fn touching_discs_have_no_interior() {
        let p = Problem {
            objective: DVector::from_vec(vec![0.0, 1.0]),
            constraints: vec![disc(0, 0.0, 0.0, 1.0), disc(0, 2.0, 0.0, 1.0)],
        };
        let start = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(p.solve(&start).unwrap().z, start);
    }

    #[test]
    fn beats_random_feasible_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let c = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let a = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let cons = vec![
                disc(0, 0.0, 0.0, 10.0),
                disc(2, 30.0, 0.0, 10.0),
                Constraint::Halfspace { b: a.dot(&DVector::from_vec(vec![0.0, 0.0, 30.0, 0.0])) + 1.0, a },
            ];
            let p = Problem { objective: c.clone(), constraints: cons };
            let start = DVector::from_vec(vec![0.0, 0.0, 30.0, 0.0]);
            let sol = p.solve(&start).unwrap();
            assert!(p.max_violation(&sol.z) <= 1e-9);
            let best = c.dot(&sol.z);
            for _ in 0..2000 {
                let z = DVector::from_vec(vec![
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    30.0 + rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                ]);
                if p.max_violation(&z) <= 0.0 {
                    assert!(c.dot(&z) >= best - 1e-6 * c.norm());
                }
            }
        }
    }
}
