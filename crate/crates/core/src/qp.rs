//! Minimal-deviation safety QP over the four rotor thrusts:
//!
//! ```text
//! min ||u - u_des||^2   s.t.   a_i . u + b_i >= 0,   lo <= u <= hi (optional)
//! ```
//!
//! The Hessian is the identity, so the problem is a Euclidean projection onto
//! a polyhedron. It is solved with a dual active-set iteration that starts at
//! `u_des` and adds the most violated constraint at each outer step,
//! dropping active constraints whose multiplier would turn negative.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::Vec4;
use crate::error::{Error, Result};

pub const DEGENERATE_GRADIENT_NORM: f64 = 1e-10;
pub const ITERATION_LIMIT: usize = 100;
const FEASIBILITY_TOL: f64 = 1e-12;
const DEPENDENCE_TOL: f64 = 1e-14;

/// Linear class-K function `kappa(h) = gamma * h`, extended to negative `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassKappa {
    pub gamma: f64,
}

impl Default for ClassKappa {
    fn default() -> Self {
        Self { gamma: 1.0 }
    }
}

impl ClassKappa {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma.is_finite() {
            Ok(Self { gamma })
        } else {
            Err(Error::InvalidConfig(format!(
                "class-K gain must be positive, got {gamma}"
            )))
        }
    }

    pub fn eval(&self, h: f64) -> f64 {
        self.gamma * h
    }
}

/// `row . u + offset >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSafetyConstraint {
    pub row: Vec4,
    pub offset: f64,
    pub label: String,
}

impl AffineSafetyConstraint {
    pub fn new(row: Vec4, offset: f64, label: impl Into<String>) -> Self {
        Self {
            row,
            offset,
            label: label.into(),
        }
    }

    pub fn slack(&self, u: &Vec4) -> f64 {
        self.row.dot(u) + self.offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputBounds {
    pub lower: Vec4,
    pub upper: Vec4,
}

impl InputBounds {
    pub const DEFAULT_MAX_THRUST: f64 = 0.15;

    pub fn thrust_box(max_thrust: f64) -> Self {
        Self {
            lower: Vec4::zeros(),
            upper: Vec4::repeat(max_thrust),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            if !(self.lower[i] <= self.upper[i]) {
                return Err(Error::InvalidConfig(format!(
                    "input bound {i}: lower {} exceeds upper {}",
                    self.lower[i], self.upper[i]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub u_des: Vec4,
    pub constraints: Vec<AffineSafetyConstraint>,
    pub bounds: Option<InputBounds>,
}

impl QpProblem {
    pub fn new(u_des: Vec4, constraints: Vec<AffineSafetyConstraint>) -> Self {
        Self {
            u_des,
            constraints,
            bounds: None,
        }
    }

    pub fn with_bounds(mut self, bounds: InputBounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    /// Safety constraints first, then bounds as `u_i - lo_i >= 0` and
    /// `hi_i - u_i >= 0`.
    fn rows(&self) -> Vec<AffineSafetyConstraint> {
        let mut rows = self.constraints.clone();
        if let Some(bounds) = &self.bounds {
            for i in 0..4 {
                let mut e = Vec4::zeros();
                e[i] = 1.0;
                rows.push(AffineSafetyConstraint::new(
                    e,
                    -bounds.lower[i],
                    format!("lower[{i}]"),
                ));
                rows.push(AffineSafetyConstraint::new(
                    -e,
                    bounds.upper[i],
                    format!("upper[{i}]"),
                ));
            }
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u_star: Vec4,
    /// Labels of constraints (and bounds) in the final working set.
    pub active_set: Vec<String>,
    /// One multiplier per safety constraint, in problem order.
    pub multipliers: Vec<f64>,
    pub lower_multipliers: Vec4,
    pub upper_multipliers: Vec4,
    pub kkt_residual: f64,
}

impl QpSolution {
    pub fn is_unmodified(&self) -> bool {
        self.active_set.is_empty()
    }
}

fn check_gradient(c: &AffineSafetyConstraint) -> Result<()> {
    let norm = c.row.norm();
    if !(norm > DEGENERATE_GRADIENT_NORM) {
        return Err(Error::DegenerateGradient {
            label: c.label.clone(),
            norm,
        });
    }
    if !c.offset.is_finite() || !c.row.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateGradient {
            label: c.label.clone(),
            norm,
        });
    }
    Ok(())
}

/// Closed-form projection onto a single halfspace.
pub fn solve_single(u_des: &Vec4, constraint: &AffineSafetyConstraint) -> Result<QpSolution> {
    check_gradient(constraint)?;
    let slack = constraint.slack(u_des);
    let (u_star, lambda, active_set) = if slack >= 0.0 {
        (*u_des, 0.0, Vec::new())
    } else {
        let lambda = -slack / constraint.row.norm_squared();
        (
            u_des + constraint.row * lambda,
            lambda,
            vec![constraint.label.clone()],
        )
    };
    let kkt_residual = kkt_residual(u_des, &u_star, std::slice::from_ref(constraint), &[lambda]);
    Ok(QpSolution {
        u_star,
        active_set,
        multipliers: vec![lambda],
        lower_multipliers: Vec4::zeros(),
        upper_multipliers: Vec4::zeros(),
        kkt_residual,
    })
}

/// Max of stationarity norm, primal infeasibility, dual infeasibility and
/// complementary slackness.
pub fn kkt_residual(
    u_des: &Vec4,
    u_star: &Vec4,
    rows: &[AffineSafetyConstraint],
    multipliers: &[f64],
) -> f64 {
    let mut stationarity = u_star - u_des;
    let mut worst: f64 = 0.0;
    for (c, &lambda) in rows.iter().zip(multipliers) {
        stationarity -= c.row * lambda;
        let slack = c.slack(u_star);
        worst = worst.max(-slack).max(-lambda).max((lambda * slack).abs());
    }
    worst.max(stationarity.norm())
}

struct WorkingSet {
    members: Vec<usize>,
}

impl WorkingSet {
    /// Returns (primal direction z, dual direction r) for adding row `p`:
    /// `z = a_p - N r`, `r = (N^T N)^-1 N^T a_p`.
    fn directions(&self, rows: &[AffineSafetyConstraint], p: usize) -> (Vec4, Vec<f64>) {
        let ap = rows[p].row;
        if self.members.is_empty() {
            return (ap, Vec::new());
        }
        let k = self.members.len();
        let n = DMatrix::from_fn(4, k, |i, j| rows[self.members[j]].row[i]);
        let gram = n.transpose() * &n;
        let rhs = n.transpose() * DVector::from_column_slice(ap.as_slice());
        let r = gram.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(k));
        let nr = &n * &r;
        let z = ap - Vec4::from_column_slice(nr.as_slice());
        (z, r.iter().copied().collect())
    }
}

pub fn solve(problem: &QpProblem) -> Result<QpSolution> {
    if let Some(bounds) = &problem.bounds {
        bounds.validate()?;
    }
    let rows = problem.rows();
    for c in &rows {
        check_gradient(c)?;
    }
    // Ties on the entering rule resolve by label, then by position.
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&i, &j| rows[i].label.cmp(&rows[j].label).then(i.cmp(&j)));

    let mut u = problem.u_des;
    let mut lambda = vec![0.0; rows.len()];
    let mut working = WorkingSet {
        members: Vec::new(),
    };
    let mut iterations = 0;

    loop {
        let mut entering: Option<(usize, f64)> = None;
        for &i in &order {
            if working.members.contains(&i) {
                continue;
            }
            let slack = rows[i].slack(&u);
            let scale = 1.0 + rows[i].offset.abs() + rows[i].row.norm() * u.norm();
            if slack < -FEASIBILITY_TOL * scale && entering.is_none_or(|(_, s)| slack < s) {
                entering = Some((i, slack));
            }
        }
        let Some((p, _)) = entering else {
            break;
        };

        // Raise lambda_p until constraint p is satisfied, dropping blockers.
        loop {
            iterations += 1;
            if iterations > ITERATION_LIMIT {
                return Err(Error::IterationLimit {
                    limit: ITERATION_LIMIT,
                });
            }
            let (z, r) = working.directions(&rows, p);
            let z_sq = z.norm_squared();
            let slack_p = rows[p].slack(&u);

            let mut partial: Option<(usize, f64)> = None;
            for (slot, &rj) in r.iter().enumerate() {
                if rj > 0.0 {
                    let t = lambda[working.members[slot]] / rj;
                    if partial.is_none_or(|(_, best)| t < best) {
                        partial = Some((slot, t));
                    }
                }
            }
            let full = if z_sq > DEPENDENCE_TOL * rows[p].row.norm_squared() {
                Some(-slack_p / z_sq)
            } else {
                None
            };

            match (partial, full) {
                (None, None) => {
                    let mut labels: Vec<String> = working
                        .members
                        .iter()
                        .map(|&i| rows[i].label.clone())
                        .collect();
                    labels.push(rows[p].label.clone());
                    return Err(Error::Infeasible { labels });
                }
                (Some((slot, t)), full) if full.is_none_or(|tf| t < tf) => {
                    if full.is_some() {
                        u += z * t;
                    }
                    for (k, &rj) in r.iter().enumerate() {
                        let idx = working.members[k];
                        lambda[idx] = (lambda[idx] - t * rj).max(0.0);
                    }
                    lambda[p] += t;
                    let dropped = working.members.remove(slot);
                    lambda[dropped] = 0.0;
                }
                (_, Some(t)) => {
                    u += z * t;
                    for (k, &rj) in r.iter().enumerate() {
                        let idx = working.members[k];
                        lambda[idx] = (lambda[idx] - t * rj).max(0.0);
                    }
                    lambda[p] += t;
                    working.members.push(p);
                    break;
                }
                (Some(_), None) => unreachable!("covered by the guarded arm"),
            }
        }
    }

    let mut members = working.members.clone();
    members.sort_by(|&i, &j| rows[i].label.cmp(&rows[j].label).then(i.cmp(&j)));
    let active_set = members.iter().map(|&i| rows[i].label.clone()).collect();
    let n_safety = problem.constraints.len();
    let mut lower_multipliers = Vec4::zeros();
    let mut upper_multipliers = Vec4::zeros();
    if problem.bounds.is_some() {
        for i in 0..4 {
            lower_multipliers[i] = lambda[n_safety + 2 * i];
            upper_multipliers[i] = lambda[n_safety + 2 * i + 1];
        }
    }
    let kkt_residual = kkt_residual(&problem.u_des, &u, &rows, &lambda);
    Ok(QpSolution {
        u_star: u,
        active_set,
        multipliers: lambda[..n_safety].to_vec(),
        lower_multipliers,
        upper_multipliers,
        kkt_residual,
    })
}
