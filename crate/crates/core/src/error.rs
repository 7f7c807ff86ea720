use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("singular attitude: |cos(pitch)| = {cos_pitch:e} is below 1e-9")]
    SingularAttitude { cos_pitch: f64 },

    #[error("attitude left the small-angle regime (roll = {roll}, pitch = {pitch})")]
    AttitudeOutOfRange { roll: f64, pitch: f64 },

    #[error("state became non-finite")]
    NonFiniteState,

    #[error("degenerate thrust command: g + z_acc = {denominator} is not above {threshold}")]
    DegenerateThrust { denominator: f64, threshold: f64 },

    #[error("degenerate constraint gradient for `{label}` (norm {norm:e})")]
    DegenerateGradient { label: String, norm: f64 },

    #[error("infeasible QP; blocking constraints: {}", labels.join(", "))]
    Infeasible { labels: Vec<String> },

    #[error("QP did not converge within {limit} iterations")]
    IterationLimit { limit: usize },

    #[error("invalid obstacle `{label}`: {reason}")]
    InvalidObstacle { label: String, reason: String },

    #[error("effective cone half-angle undefined: cosine ratio {ratio} exceeds 1")]
    HalfAngleOutOfRange { ratio: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("simulation aborted at step {step} (agent {agent}): {source}")]
    Simulation {
        step: usize,
        agent: usize,
        source: Box<Error>,
    },

    #[error("trace parse error on line {line}: {reason}")]
    TraceParse { line: usize, reason: String },
}
