//! Closed-loop simulation: reference -> PD tracker -> barrier rows -> QP ->
//! RK4 step, one QP per integration step.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::c3bf::{self, body_center_kinematics, BarrierEvaluation, Obstacle, Shape};
use crate::dynamics::{self, ControlInput, QuadrotorParams, QuadrotorState, Vec3, Vec4};
use crate::error::{Error, Result};
use crate::hocbf::{self, HocbfConfig};
use crate::qp::{self, AffineSafetyConstraint, ClassKappa, InputBounds, QpProblem};
use crate::tracking::{ReferenceTrajectory, TrackingController};

/// Penetration depth tolerated before a step is flagged as a violation, m.
pub const SEPARATION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    None,
    #[default]
    C3bf,
    Hocbf {
        gamma: f64,
    },
}

impl FilterKind {
    pub fn name(&self) -> String {
        match self {
            FilterKind::None => "none".into(),
            FilterKind::C3bf => "c3bf".into(),
            FilterKind::Hocbf { gamma } => format!("hocbf(gamma={gamma})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub initial_state: QuadrotorState,
    pub reference: ReferenceTrajectory,
}

fn default_duration() -> f64 {
    10.0
}

fn default_dt() -> f64 {
    dynamics::DEFAULT_DT
}

fn default_kappa() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Half-width of the uniform jitter applied to obstacle centers, m.
    #[serde(default)]
    pub placement_jitter: f64,
    #[serde(default)]
    pub filter: FilterKind,
    /// Gain of the linear class-K function.
    #[serde(default = "default_kappa")]
    pub kappa_gamma: f64,
    #[serde(default)]
    pub params: QuadrotorParams,
    #[serde(default)]
    pub controller: TrackingController,
    #[serde(default)]
    pub input_bounds: Option<InputBounds>,
    pub initial_state: QuadrotorState,
    pub reference: ReferenceTrajectory,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    /// Further vehicles running the same filter; each sees the others as
    /// constant-velocity spheres refreshed every step.
    #[serde(default)]
    pub peers: Vec<AgentSpec>,
}

pub fn agent_label(index: usize) -> String {
    format!("agent-{index}")
}

fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario configs serialize")
    }

    /// Reads, parses and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let config = Self::from_toml_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn agent_count(&self) -> usize {
        1 + self.peers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.dt > 0.0 && self.dt <= self.duration) {
            return bad(format!("dt must be in (0, duration], got {}", self.dt));
        }
        if !(self.placement_jitter >= 0.0) {
            return bad(format!(
                "placement_jitter must be non-negative, got {}",
                self.placement_jitter
            ));
        }
        ClassKappa::new(self.kappa_gamma)?;
        if let FilterKind::Hocbf { gamma } = self.filter {
            HocbfConfig::new(gamma)?;
        }
        self.params.validate()?;
        self.controller.gains.validate()?;
        if !(self.controller.thrust_guard > 0.0) {
            return bad("controller.thrust_guard must be positive".into());
        }
        if let Some(bounds) = &self.input_bounds {
            bounds.validate()?;
        }
        self.initial_state.validate()?;
        self.reference.validate()?;
        for peer in &self.peers {
            peer.initial_state.validate()?;
            peer.reference.validate()?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for obstacle in &self.obstacles {
            if !valid_label(&obstacle.label) {
                return bad(format!(
                    "obstacle label `{}` must be non-empty ASCII alphanumerics, '-', '_' or '.'",
                    obstacle.label
                ));
            }
            if obstacle.label.starts_with("agent-") {
                return bad(format!("obstacle label `{}` is reserved", obstacle.label));
            }
            if !seen.insert(obstacle.label.clone()) {
                return bad(format!("duplicate obstacle label `{}`", obstacle.label));
            }
            obstacle.validate()?;
        }
        Ok(())
    }

    /// Obstacles after the seeded placement jitter.
    pub fn placed_obstacles(&self) -> Vec<Obstacle> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let jitter = self.placement_jitter;
        self.obstacles
            .iter()
            .map(|o| {
                let mut placed = o.clone();
                if jitter > 0.0 {
                    let offset = Vec3::from_fn(|_, _| rng.random_range(-jitter..=jitter));
                    placed.center += offset;
                }
                placed
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub state: QuadrotorState,
    pub u_des: Vec4,
    pub u_star: Vec4,
    /// Per obstacle, in `SimTrace::obstacle_labels` order.
    pub h: Vec<f64>,
    pub separation: Vec<f64>,
    pub tracking_error: f64,
    pub active_set: Vec<String>,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub obstacle_labels: Vec<String>,
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `+inf` when there are no obstacles.
    pub min_separation: f64,
    pub min_h: f64,
    pub max_intervention: f64,
    /// Fraction of steps where the filter changed the input.
    pub intervention_duty_cycle: f64,
    pub tracking_rms: f64,
    pub success: bool,
}

pub fn compute_metrics(trace: &SimTrace) -> Metrics {
    let n = trace.records.len().max(1) as f64;
    let mut min_separation = f64::INFINITY;
    let mut min_h = f64::INFINITY;
    let mut max_intervention: f64 = 0.0;
    let mut modified = 0usize;
    let mut squared_error = 0.0;
    let mut flagged = false;
    for rec in &trace.records {
        min_separation = rec
            .separation
            .iter()
            .copied()
            .fold(min_separation, f64::min);
        min_h = rec.h.iter().copied().fold(min_h, f64::min);
        let delta = (rec.u_star - rec.u_des).norm();
        max_intervention = max_intervention.max(delta);
        if rec.u_star != rec.u_des {
            modified += 1;
        }
        squared_error += rec.tracking_error * rec.tracking_error;
        flagged |= !rec.violations.is_empty();
    }
    Metrics {
        min_separation,
        min_h,
        max_intervention,
        intervention_duty_cycle: modified as f64 / n,
        tracking_rms: (squared_error / n).sqrt(),
        success: !flagged && min_separation >= -SEPARATION_TOLERANCE,
    }
}

/// Evaluates the barrier the selected filter uses (the collision-cone one
/// when unfiltered, for logging).
fn evaluate(
    filter: &FilterKind,
    state: &QuadrotorState,
    obstacle: &Obstacle,
    params: &QuadrotorParams,
    kappa: &ClassKappa,
    t: f64,
) -> Result<(BarrierEvaluation, AffineSafetyConstraint)> {
    match filter {
        FilterKind::None | FilterKind::C3bf => c3bf::barrier(state, obstacle, params, kappa, t),
        FilterKind::Hocbf { gamma } => hocbf::barrier_ho(
            state,
            obstacle,
            params,
            kappa,
            &HocbfConfig { gamma: *gamma },
            t,
        ),
    }
}

/// Separation from the obstacle actually present, independent of the
/// filter's model of it.
fn true_separation(
    state: &QuadrotorState,
    obstacle: &Obstacle,
    params: &QuadrotorParams,
    t: f64,
) -> f64 {
    let rel = c3bf::relative_state_sphere(state, obstacle, params, t);
    let r = obstacle.inflated_radius(params);
    match &obstacle.shape {
        Shape::Sphere { .. } => rel.position.norm() - r,
        Shape::Cylinder { axis, .. } => (c3bf::projection_operator(axis) * rel.position).norm() - r,
    }
}

/// Sphere standing in for another vehicle, centered on its body center.
fn peer_obstacle(
    index: usize,
    state: &QuadrotorState,
    params: &QuadrotorParams,
    t: f64,
) -> Obstacle {
    let body = body_center_kinematics(state, params);
    Obstacle::sphere(
        agent_label(index),
        params.body_width / 2.0,
        body.position - body.velocity * t,
        body.velocity,
    )
}

/// Runs every agent; the first trace belongs to the primary vehicle.
pub fn run_agents(config: &ScenarioConfig) -> Result<Vec<SimTrace>> {
    config.validate()?;
    let params = &config.params;
    let kappa = ClassKappa::new(config.kappa_gamma)?;
    let statics = config.placed_obstacles();
    let n_agents = config.agent_count();
    let references: Vec<&ReferenceTrajectory> = std::iter::once(&config.reference)
        .chain(config.peers.iter().map(|p| &p.reference))
        .collect();
    let mut states: Vec<QuadrotorState> = std::iter::once(config.initial_state)
        .chain(config.peers.iter().map(|p| p.initial_state))
        .collect();

    let labels_for = |agent: usize| -> Vec<String> {
        statics
            .iter()
            .map(|o| o.label.clone())
            .chain((0..n_agents).filter(|&j| j != agent).map(agent_label))
            .collect()
    };
    let mut traces: Vec<SimTrace> = (0..n_agents)
        .map(|i| SimTrace {
            obstacle_labels: labels_for(i),
            records: Vec::with_capacity(config.n_steps() + 1),
        })
        .collect();

    let n_steps = config.n_steps();
    for k in 0..=n_steps {
        let t = k as f64 * config.dt;
        let peers: Vec<Obstacle> = states
            .iter()
            .enumerate()
            .map(|(j, s)| peer_obstacle(j, s, params, t))
            .collect();
        let mut inputs = Vec::with_capacity(n_agents);
        for agent in 0..n_agents {
            let wrap = |e: Error| Error::Simulation {
                step: k,
                agent,
                source: Box::new(e),
            };
            let state = &states[agent];
            let obstacles: Vec<&Obstacle> = statics
                .iter()
                .chain(
                    peers
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != agent)
                        .map(|(_, o)| o),
                )
                .collect();

            let u_des = config
                .controller
                .track(state, references[agent], params, t)
                .map_err(wrap)?;

            let mut h = Vec::with_capacity(obstacles.len());
            let mut separation = Vec::with_capacity(obstacles.len());
            let mut violations = Vec::new();
            let mut rows = Vec::with_capacity(obstacles.len());
            for obstacle in &obstacles {
                let (eval, row) =
                    evaluate(&config.filter, state, obstacle, params, &kappa, t).map_err(wrap)?;
                let sep = true_separation(state, obstacle, params, t);
                if sep < -SEPARATION_TOLERANCE {
                    violations.push(obstacle.label.clone());
                }
                h.push(eval.h);
                separation.push(sep);
                rows.push(row);
            }

            let (u_star, active_set) = if config.filter == FilterKind::None {
                (u_des.0, Vec::new())
            } else {
                let mut problem = QpProblem::new(u_des.0, rows);
                problem.bounds = config.input_bounds;
                let solution = qp::solve(&problem).map_err(wrap)?;
                (solution.u_star, solution.active_set)
            };

            let tracking_error = (state.position - references[agent].sample(t).position).norm();
            traces[agent].records.push(StepRecord {
                t,
                state: *state,
                u_des: u_des.0,
                u_star,
                h,
                separation,
                tracking_error,
                active_set,
                violations,
            });
            inputs.push(ControlInput(u_star));
        }
        if k == n_steps {
            break;
        }
        for agent in 0..n_agents {
            states[agent] = dynamics::step(&states[agent], &inputs[agent], config.dt, params)
                .map_err(|e| Error::Simulation {
                    step: k,
                    agent,
                    source: Box::new(e),
                })?;
        }
    }
    Ok(traces)
}

pub fn run(config: &ScenarioConfig) -> Result<SimTrace> {
    Ok(run_agents(config)?.swap_remove(0))
}

fn ego_config(name: &str, description: &str, obstacles: Vec<Obstacle>) -> ScenarioConfig {
    let start = Vec3::new(0.0, 0.0, 1.0);
    ScenarioConfig {
        name: name.into(),
        description: description.into(),
        duration: 10.0,
        dt: dynamics::DEFAULT_DT,
        seed: 0,
        placement_jitter: 0.0,
        filter: FilterKind::C3bf,
        kappa_gamma: 1.0,
        params: QuadrotorParams::default(),
        controller: TrackingController::default(),
        input_bounds: None,
        initial_state: QuadrotorState::at_rest(start),
        reference: ReferenceTrajectory::Line {
            start,
            velocity: Vec3::new(1.0, 0.0, 0.0),
        },
        obstacles,
        peers: Vec::new(),
    }
}

/// Default obstacle radius before inflation, m.
pub const DEFAULT_OBSTACLE_RADIUS: f64 = 0.15;

pub fn builtin_scenarios() -> Vec<ScenarioConfig> {
    let r = DEFAULT_OBSTACLE_RADIUS;
    let still = Vec3::zeros();
    let body_height = 1.0 + QuadrotorParams::default().center_offset;
    let mut two_agent = ego_config(
        "two-agent",
        "Two vehicles swap places head-on, each filtering against the other",
        Vec::new(),
    );
    two_agent.reference = ReferenceTrajectory::Line {
        start: Vec3::new(0.0, 0.02, 1.0),
        velocity: Vec3::new(1.0, 0.0, 0.0),
    };
    two_agent.initial_state = QuadrotorState::at_rest(Vec3::new(0.0, 0.02, 1.0));
    two_agent.peers.push(AgentSpec {
        initial_state: QuadrotorState::at_rest(Vec3::new(6.0, -0.02, 1.0)),
        reference: ReferenceTrajectory::Line {
            start: Vec3::new(6.0, -0.02, 1.0),
            velocity: Vec3::new(-1.0, 0.0, 0.0),
        },
    });

    vec![
        ego_config(
            "static-overtake",
            "Static sphere slightly off the 1 m/s path; the vehicle steers around it",
            vec![Obstacle::sphere(
                "sphere",
                r,
                Vec3::new(3.0, 0.1, 1.0),
                still,
            )],
        ),
        ego_config(
            "static-brake",
            "Static sphere dead ahead with no lateral offset; the filter lifts the vehicle over it",
            vec![Obstacle::sphere(
                "sphere",
                r,
                Vec3::new(3.0, 0.0, body_height),
                still,
            )],
        ),
        ego_config(
            "moving-head-on",
            "Sphere approaching head-on at 1 m/s from 4 m",
            vec![Obstacle::sphere(
                "sphere",
                r,
                Vec3::new(4.0, 0.1, 1.0),
                Vec3::new(-1.0, 0.0, 0.0),
            )],
        ),
        ego_config(
            "moving-slow",
            "Sphere moving ahead along the path at 0.1 m/s; the vehicle overtakes it",
            vec![Obstacle::sphere(
                "sphere",
                r,
                Vec3::new(1.5, 0.05, 1.0),
                Vec3::new(0.1, 0.0, 0.0),
            )],
        ),
        ego_config(
            "cylinder-side",
            "Vertical cylinder across the path, avoided from the side",
            vec![Obstacle::cylinder(
                "pole",
                r,
                Vec3::z(),
                1.0,
                Vec3::new(3.0, 0.1, 1.0),
                still,
            )],
        ),
        ego_config(
            "cylinder-top",
            "Horizontal cylinder just below the path, passed over the top",
            vec![Obstacle::cylinder(
                "bar",
                r,
                Vec3::y(),
                1.0,
                Vec3::new(3.0, 0.0, 0.9),
                still,
            )],
        ),
        ego_config(
            "multi-obstacle",
            "Corridor of static and moving spheres and a vertical cylinder",
            vec![
                Obstacle::sphere("s1", r, Vec3::new(2.0, 0.1, 1.0), still),
                Obstacle::sphere("s2", r, Vec3::new(4.0, -0.15, 1.05), still),
                Obstacle::cylinder("pole", r, Vec3::z(), 1.0, Vec3::new(6.0, 0.1, 1.0), still),
                Obstacle::sphere("s3", r, Vec3::new(9.0, 0.0, 1.1), Vec3::new(-0.3, 0.0, 0.0)),
            ],
        ),
        two_agent,
    ]
}

pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}
