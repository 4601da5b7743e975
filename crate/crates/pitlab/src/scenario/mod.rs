//! Scenario schema, prior-driven stratified sampling with category quotas,
//! rule-based pre-screening, and histogram/KL reporting of distributional
//! consistency between a generated suite and its prior.

mod hist;
mod prior;
mod road;
mod screen;
mod suite;

pub use hist::{
    attribute_histograms, kl_divergence, prior_histograms, Binning, Histogram, HistogramSet,
};
pub use prior::{
    apportion, default_prior, sample_scenarios, AttributePrior, CategoryQuotas, PriorSpec,
};
pub use road::{RoadSpec, RoadTopology, MAX_CURVATURE};
pub use screen::{prescreen, RejectReason, Screen};
pub use suite::{load_suite, save_suite, SuiteManifest};

use crate::dynamics::PresetId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid prior: {reason}")]
    InvalidPrior { reason: String },
    #[error("invalid scenario: {reason}")]
    InvalidScenario { reason: String },
    #[error("histogram binning mismatch: {expected} vs {got} bins")]
    BinningMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A circular static-or-drifting obstruction on the road.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub radius: f64,
}

impl ObstacleSpec {
    pub fn at_time(&self, t: f64) -> [f64; 2] {
        [self.position[0] + self.velocity[0] * t, self.position[1] + self.velocity[1] * t]
    }
}

/// Everything needed to set up one run: road, friction, both vehicles'
/// initial conditions (the bullet starts `gap` behind the target's rear
/// bumper, offset laterally, both near the road start), obstacles, vehicle
/// preset, and the run's RNG seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: String,
    pub road: RoadSpec,
    pub mu: f64,
    pub v_target0: f64,
    pub v_bullet0: f64,
    /// Bumper-to-bumper longitudinal gap at t = 0, bullet behind target.
    pub gap: f64,
    /// Bullet lateral offset from the target's lane line at t = 0.
    pub lateral_offset: f64,
    /// Target heading relative to the local road direction at t = 0.
    pub heading_diff: f64,
    pub obstacles: Vec<ObstacleSpec>,
    pub preset: PresetId,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |reason: &str| Err(ScenarioError::InvalidScenario { reason: reason.into() });
        if let Err(reason) = self.road.validate() {
            return Err(ScenarioError::InvalidScenario { reason });
        }
        if !(0.2..=1.0).contains(&self.mu) {
            return bad("mu outside [0.2, 1.0]");
        }
        if self.v_target0 < 0.0 || self.v_bullet0 < 0.0 {
            return bad("initial speeds must be non-negative");
        }
        if !(self.gap > 0.0) {
            return bad("initial gap must be positive");
        }
        if self.obstacles.iter().any(|o| !(o.radius > 0.0)) {
            return bad("obstacle radius must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn plain_scenario() -> ScenarioSpec {
        ScenarioSpec {
            id: "su-000".into(),
            road: RoadSpec {
                topology: RoadTopology::StraightUrban,
                lane_count: 2,
                lane_width: 3.5,
                half_width: 7.0,
                length: 400.0,
            },
            mu: 0.9,
            v_target0: 14.0,
            v_bullet0: 17.0,
            gap: 6.0,
            lateral_offset: 0.4,
            heading_diff: 0.02,
            obstacles: vec![],
            preset: PresetId::FullSize,
            seed: 42,
        }
    }

    #[test]
    fn json_round_trip_is_identity() {
        let mut s = plain_scenario();
        s.obstacles.push(ObstacleSpec { position: [90.0, -5.5], velocity: [0.0, 0.0], radius: 0.6 });
        let text = serde_json::to_string(&s).unwrap();
        let back: ScenarioSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn validation_catches_each_field() {
        assert!(plain_scenario().validate().is_ok());
        let mut s = plain_scenario();
        s.mu = 0.1;
        assert!(s.validate().is_err());
        let mut s = plain_scenario();
        s.gap = 0.0;
        assert!(s.validate().is_err());
        let mut s = plain_scenario();
        s.v_target0 = -1.0;
        assert!(s.validate().is_err());
        let mut s = plain_scenario();
        s.obstacles.push(ObstacleSpec { position: [0.0, 0.0], velocity: [0.0, 0.0], radius: 0.0 });
        assert!(s.validate().is_err());
    }

    #[test]
    fn obstacles_drift_linearly() {
        let o = ObstacleSpec { position: [10.0, 2.0], velocity: [1.5, -0.5], radius: 0.5 };
        assert_eq!(o.at_time(2.0), [13.0, 1.0]);
    }
}
