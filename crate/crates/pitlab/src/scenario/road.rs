//! Road geometry: straight or constant-curvature centerline with a drivable
//! band of `±half_width`. Positions are expressed in world coordinates with
//! the road starting at the origin heading along +x; the station/lateral
//! helpers convert world points into road-aligned coordinates for boundary
//! checks and reference headings.

use serde::{Deserialize, Serialize};

pub const MAX_CURVATURE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadTopology {
    StraightUrban,
    StraightHighway,
    /// Constant-curvature arc; positive curves left. Units 1/m.
    Curved { curvature: f64 },
}

impl RoadTopology {
    pub fn curvature(&self) -> f64 {
        match self {
            RoadTopology::Curved { curvature } => *curvature,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec {
    pub topology: RoadTopology,
    pub lane_count: usize,
    pub lane_width: f64,
    /// Half the drivable band, measured from the centerline.
    pub half_width: f64,
    /// Usable centerline length from the start.
    pub length: f64,
}

impl RoadSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lane_width > 0.0 && self.half_width > 0.0 && self.length > 0.0) {
            return Err("road widths and length must be positive".into());
        }
        if self.lane_count == 0 {
            return Err("road needs at least one lane".into());
        }
        let kappa = self.topology.curvature();
        if !(kappa.abs() <= MAX_CURVATURE) {
            return Err(format!("curvature {kappa} outside |k| <= {MAX_CURVATURE}"));
        }
        Ok(())
    }

    /// Road-aligned coordinates of a world point: (station along the
    /// centerline, signed lateral offset, positive to the left of travel).
    pub fn station_of(&self, p: [f64; 2]) -> (f64, f64) {
        let kappa = self.topology.curvature();
        if kappa == 0.0 {
            return (p[0], p[1]);
        }
        // Arc center sits at (0, 1/kappa). Station is arc length swept from
        // the start azimuth; lateral is the radial surplus toward the center.
        let r = 1.0 / kappa;
        let dx = p[0];
        let dy = p[1] - r;
        let d = (dx * dx + dy * dy).sqrt();
        let lateral = kappa.signum() * (r.abs() - d);
        // Angle of the point around the center, measured from the start
        // direction (start point is at angle -sign(kappa) * pi/2).
        let ang = dy.atan2(dx) - (-r.signum() * std::f64::consts::FRAC_PI_2);
        let swept = crate::math::wrap_to_pi(ang) * r.signum();
        (swept * r.abs(), lateral)
    }

    /// Centerline heading at a given station.
    pub fn heading_at(&self, s: f64) -> f64 {
        self.topology.curvature() * s
    }

    /// World point and heading of the centerline at a given station.
    pub fn centerline_at(&self, s: f64) -> ([f64; 2], f64) {
        let kappa = self.topology.curvature();
        if kappa == 0.0 {
            return ([s, 0.0], 0.0);
        }
        let r = 1.0 / kappa;
        let th = kappa * s;
        ([r * th.sin(), r * (1.0 - th.cos())], th)
    }

    /// Distance from a world point to the nearest road boundary; negative
    /// once outside the band.
    pub fn boundary_margin(&self, p: [f64; 2]) -> f64 {
        let (_, lateral) = self.station_of(p);
        self.half_width - lateral.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn curved(kappa: f64) -> RoadSpec {
        RoadSpec {
            topology: RoadTopology::Curved { curvature: kappa },
            lane_count: 2,
            lane_width: 3.5,
            half_width: 7.0,
            length: 400.0,
        }
    }

    #[test]
    fn straight_road_coordinates_are_identity() {
        let road = RoadSpec {
            topology: RoadTopology::StraightUrban,
            lane_count: 2,
            lane_width: 3.5,
            half_width: 7.0,
            length: 400.0,
        };
        assert_eq!(road.station_of([12.0, -3.0]), (12.0, -3.0));
        assert_eq!(road.heading_at(55.0), 0.0);
        assert_eq!(road.centerline_at(55.0), ([55.0, 0.0], 0.0));
        assert_abs_diff_eq!(road.boundary_margin([10.0, 5.0]), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn curved_centerline_points_have_zero_lateral() {
        for &kappa in &[0.004, -0.007, 0.02] {
            let road = curved(kappa);
            for &s in &[0.0, 10.0, 60.0, 150.0] {
                let (p, th) = road.centerline_at(s);
                let (s_back, lat) = road.station_of(p);
                assert_abs_diff_eq!(s_back, s, epsilon = 1e-9);
                assert_abs_diff_eq!(lat, 0.0, epsilon = 1e-9);
                assert_abs_diff_eq!(th, road.heading_at(s), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn lateral_sign_is_left_positive() {
        // Walk a point off the centerline along the local left normal; its
        // lateral must equal the walked distance for either bend direction.
        for &kappa in &[0.005, -0.005] {
            let road = curved(kappa);
            let s = 80.0;
            let (p, th) = road.centerline_at(s);
            let left = [-th.sin(), th.cos()];
            let q = [p[0] + 2.5 * left[0], p[1] + 2.5 * left[1]];
            let (s_q, lat) = road.station_of(q);
            assert_abs_diff_eq!(lat, 2.5, epsilon = 1e-9);
            assert_abs_diff_eq!(s_q, s, epsilon = 1e-9);
            assert_abs_diff_eq!(road.boundary_margin(q), 7.0 - 2.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn validation_rejects_bad_geometry() {
        assert!(curved(0.03).validate().is_err());
        let mut bad = curved(0.01);
        bad.half_width = 0.0;
        assert!(bad.validate().is_err());
        assert!(curved(0.02).validate().is_ok());
    }
}
