//! Rule-based pre-screening: cheap closed-form checks that throw out
//! scenarios which are geometrically invalid, provably un-closable before
//! the road ends, blocked by an obstacle in the approach corridor, or
//! trivial because there is effectively no closing speed.

use super::{RoadTopology, ScenarioSpec};
use crate::dynamics::VehiclePreset;
use serde::{Deserialize, Serialize};

/// Longitudinal clearance the bullet needs past the contact point.
const CONTACT_MARGIN: f64 = 20.0;
/// Minimum closing speed for a scenario to be worth simulating.
const MIN_CLOSING_SPEED: f64 = 0.5;

/// Bullet speed cap used for the catch-up feasibility bound.
pub(crate) fn speed_limit(topology: &RoadTopology) -> f64 {
    match topology {
        RoadTopology::StraightUrban => 22.0,
        RoadTopology::StraightHighway => 38.0,
        RoadTopology::Curved { .. } => 26.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    /// Overlapping or off-road initial placement.
    InvalidGeometry,
    /// Even at the road's speed cap the bullet cannot reach the target's
    /// rear quarter before the road runs out.
    CannotClose,
    /// An obstacle sits inside the straight-line approach corridor.
    ObstacleBlocksApproach,
    /// Closing speed below the threshold: nothing to immobilize.
    TrivialRelativeSpeed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Screen {
    Keep,
    Reject(RejectReason),
}

/// Pure, total screening decision for one scenario.
pub fn prescreen(spec: &ScenarioSpec) -> Screen {
    let preset = VehiclePreset::by_id(spec.preset);
    let half_span = 0.5 * preset.target.width.max(preset.bullet.width);

    // 1. Geometry: positive gap, both vehicles inside the road band.
    if spec.gap <= 0.0 {
        return Screen::Reject(RejectReason::InvalidGeometry);
    }
    if spec.lateral_offset.abs() + half_span > spec.road.half_width {
        return Screen::Reject(RejectReason::InvalidGeometry);
    }

    // 2. Catch-up bound: with closing speed capped by the road's limit, the
    // bullet must reach contact with road to spare.
    let v_close_cap = speed_limit(&spec.road.topology) - spec.v_target0;
    if v_close_cap < MIN_CLOSING_SPEED {
        return Screen::Reject(RejectReason::CannotClose);
    }
    let t_close = spec.gap / v_close_cap;
    let bullet_travel = speed_limit(&spec.road.topology) * t_close;
    if bullet_travel > spec.road.length - CONTACT_MARGIN {
        return Screen::Reject(RejectReason::CannotClose);
    }

    // 3. Approach corridor: the band the bullet sweeps from its start to the
    // expected contact station, one vehicle-width wide around the target's
    // path line.
    let contact_station = spec.gap + spec.v_target0 * t_close + preset.target.length;
    for o in &spec.obstacles {
        let (s, lateral) = spec.road.station_of(o.position);
        let in_band = lateral.abs() < o.radius + half_span;
        if in_band && s > 0.0 && s < contact_station + CONTACT_MARGIN {
            return Screen::Reject(RejectReason::ObstacleBlocksApproach);
        }
    }

    // 4. Trivial: no meaningful closing speed at the initial condition.
    if spec.v_bullet0 - spec.v_target0 < MIN_CLOSING_SPEED {
        return Screen::Reject(RejectReason::TrivialRelativeSpeed);
    }

    Screen::Keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::plain_scenario;
    use crate::scenario::{ObstacleSpec, RoadSpec};

    #[test]
    fn clean_mid_speed_scenario_keeps() {
        assert_eq!(prescreen(&plain_scenario()), Screen::Keep);
    }

    #[test]
    fn slower_bullet_on_short_road_cannot_close() {
        let mut s = plain_scenario();
        s.v_bullet0 = 12.0;
        s.v_target0 = 15.0;
        s.gap = 20.0;
        s.road = RoadSpec { length: 60.0, ..s.road };
        // Closed-form check: cap 22 m/s gives closing speed 7 m/s, so
        // t_close = 20/7 s and the bullet covers 22 * 20/7 = 62.9 m — past
        // the 60 - 20 = 40 m available. Must be caught before the trivial
        // relative-speed rule.
        assert_eq!(prescreen(&s), Screen::Reject(RejectReason::CannotClose));
    }

    #[test]
    fn non_positive_gap_is_invalid_geometry() {
        let mut s = plain_scenario();
        s.gap = 0.0;
        assert_eq!(prescreen(&s), Screen::Reject(RejectReason::InvalidGeometry));
        s.gap = -3.0;
        assert_eq!(prescreen(&s), Screen::Reject(RejectReason::InvalidGeometry));
    }

    #[test]
    fn off_road_start_is_invalid_geometry() {
        let mut s = plain_scenario();
        s.lateral_offset = 6.8;
        assert_eq!(prescreen(&s), Screen::Reject(RejectReason::InvalidGeometry));
    }

    #[test]
    fn target_already_at_the_speed_cap_cannot_be_caught() {
        let mut s = plain_scenario();
        s.v_target0 = 21.8;
        s.v_bullet0 = 25.0;
        assert_eq!(prescreen(&s), Screen::Reject(RejectReason::CannotClose));
    }

    #[test]
    fn obstacle_in_the_corridor_blocks_approach() {
        let mut s = plain_scenario();
        // Dead ahead in the target's lane line, well before contact.
        s.obstacles.push(ObstacleSpec { position: [15.0, 0.3], velocity: [0.0, 0.0], radius: 0.5 });
        assert_eq!(prescreen(&s), Screen::Reject(RejectReason::ObstacleBlocksApproach));

        // Same obstacle near the road edge is fine.
        s.obstacles[0].position = [15.0, 6.0];
        assert_eq!(prescreen(&s), Screen::Keep);
    }

    #[test]
    fn no_closing_speed_is_trivial() {
        let mut s = plain_scenario();
        s.v_bullet0 = s.v_target0 + 0.3;
        assert_eq!(prescreen(&s), Screen::Reject(RejectReason::TrivialRelativeSpeed));
    }

    #[test]
    fn most_default_prior_samples_survive() {
        let specs = crate::scenario::sample_scenarios(&crate::scenario::default_prior(), 200, 17).unwrap();
        let kept = specs.iter().filter(|s| prescreen(s) == Screen::Keep).count();
        assert!(kept >= 150, "only {kept}/200 kept — prior and screen disagree");
    }
}
