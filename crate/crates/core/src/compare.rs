//! Paired runs of one scenario under two filters.

use serde::Serialize;

use crate::c3bf::{body_center_kinematics, cone_half_angle};
use crate::error::{Error, Result};
use crate::hocbf::{effective_half_angle, encompassing_radius};
use crate::sim::{self, compute_metrics, FilterKind, Metrics, ScenarioConfig, SimTrace};

/// Penalties swept by default when comparing against the higher-order barrier.
pub const DEFAULT_GAMMA_SWEEP: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Debug)]
pub struct FilterRun {
    pub filter: FilterKind,
    /// Aborted runs keep their error so a comparison can still be reported.
    pub outcome: Result<SimTrace>,
    /// Ratio of the implied to the true cone half-angle against the first
    /// obstacle, per step; only for the higher-order barrier, `None` where
    /// undefined.
    pub cone_ratio: Option<Vec<Option<f64>>>,
}

impl FilterRun {
    fn new(config: &ScenarioConfig) -> Self {
        let outcome = sim::run(config);
        let cone_ratio = match (&config.filter, &outcome) {
            (FilterKind::Hocbf { gamma }, Ok(trace)) => {
                Some(cone_ratio_trace(config, trace, *gamma))
            }
            _ => None,
        };
        Self {
            filter: config.filter,
            outcome,
            cone_ratio,
        }
    }

    pub fn metrics(&self) -> Option<Metrics> {
        self.outcome.as_ref().ok().map(compute_metrics)
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            filter: self.filter.name(),
            metrics: self.metrics(),
            error: self.outcome.as_ref().err().map(|e| e.to_string()),
        }
    }
}

/// Implied/true half-angle ratio along a trace. Undefined inside the
/// obstacle, at zero relative speed, or where the implied cone does not
/// exist.
pub fn cone_ratio_trace(config: &ScenarioConfig, trace: &SimTrace, gamma: f64) -> Vec<Option<f64>> {
    let Some(obstacle) = config.placed_obstacles().into_iter().next() else {
        return vec![None; trace.records.len()];
    };
    let r = encompassing_radius(&obstacle);
    trace
        .records
        .iter()
        .map(|rec| {
            let body = body_center_kinematics(&rec.state, &config.params);
            let p = (obstacle.center_at(rec.t) - body.position).norm();
            let v = (obstacle.velocity - body.velocity).norm();
            if p <= r || v == 0.0 {
                return None;
            }
            let implied = effective_half_angle(v, p, r, gamma).ok()?;
            Some(implied / cone_half_angle(p, r))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub filter: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub a: RunSummary,
    pub b: RunSummary,
    /// `a.min_separation - b.min_separation` when both runs completed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_separation_gap: Option<f64>,
}

#[derive(Debug)]
pub struct Comparison {
    pub scenario: String,
    pub a: FilterRun,
    pub b: FilterRun,
}

impl Comparison {
    pub fn report(&self) -> ComparisonReport {
        let a = self.a.summary();
        let b = self.b.summary();
        let min_separation_gap = match (&a.metrics, &b.metrics) {
            (Some(ma), Some(mb)) => Some(ma.min_separation - mb.min_separation),
            _ => None,
        };
        ComparisonReport {
            scenario: self.scenario.clone(),
            a,
            b,
            min_separation_gap,
        }
    }

    pub fn runs(&self) -> [&FilterRun; 2] {
        [&self.a, &self.b]
    }
}

/// Runs both configurations, which must differ only in their filter.
pub fn compare(a: &ScenarioConfig, b: &ScenarioConfig) -> Result<Comparison> {
    a.validate()?;
    b.validate()?;
    let mut aligned = b.clone();
    aligned.filter = a.filter;
    if aligned != *a {
        return Err(Error::InvalidConfig(
            "compared configurations must differ only in the filter".into(),
        ));
    }
    let (run_a, run_b) = std::thread::scope(|scope| {
        let handle = scope.spawn(|| FilterRun::new(b));
        let run_a = FilterRun::new(a);
        (run_a, handle.join().expect("simulation thread panicked"))
    });
    Ok(Comparison {
        scenario: a.name.clone(),
        a: run_a,
        b: run_b,
    })
}

/// The collision-cone filter against the higher-order one at each penalty.
pub fn gamma_sweep(config: &ScenarioConfig, gammas: &[f64]) -> Result<Vec<Comparison>> {
    let mut cone = config.clone();
    cone.filter = FilterKind::C3bf;
    gammas
        .iter()
        .map(|&gamma| {
            let mut ho = config.clone();
            ho.filter = FilterKind::Hocbf { gamma };
            compare(&cone, &ho)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub sections: Vec<ComparisonReport>,
}

pub fn report_to_toml<T: Serialize>(report: &T) -> String {
    toml::to_string(report).expect("reports serialize")
}
