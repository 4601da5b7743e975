//! Prior-driven scenario sampling. Category counts follow the quota split
//! exactly through largest-remainder apportionment; continuous attributes
//! are drawn by inverse-CDF from per-attribute priors (uniform ranges or
//! binned histograms). Everything is deterministic per seed.

use super::road::{RoadSpec, RoadTopology};
use super::{ObstacleSpec, ScenarioError, ScenarioSpec};
use crate::dynamics::PresetId;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One attribute's sampling law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributePrior {
    /// Uniform on [lo, hi).
    Range { lo: f64, hi: f64 },
    /// Piecewise-uniform over bins: `edges` has one more entry than
    /// `masses`; masses sum to 1.
    Histogram { edges: Vec<f64>, masses: Vec<f64> },
}

impl AttributePrior {
    pub fn validate(&self, name: &str) -> Result<(), ScenarioError> {
        let fail = |reason: String| Err(ScenarioError::InvalidPrior { reason });
        match self {
            AttributePrior::Range { lo, hi } => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return fail(format!("{name}: range must satisfy lo < hi"));
                }
            }
            AttributePrior::Histogram { edges, masses } => {
                if edges.len() != masses.len() + 1 || masses.is_empty() {
                    return fail(format!("{name}: need edges = masses + 1"));
                }
                if edges.windows(2).any(|w| !(w[0] < w[1])) {
                    return fail(format!("{name}: edges must strictly increase"));
                }
                if masses.iter().any(|&m| !(m >= 0.0)) {
                    return fail(format!("{name}: masses must be non-negative"));
                }
                let total: f64 = masses.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return fail(format!("{name}: masses sum to {total}, expected 1"));
                }
            }
        }
        Ok(())
    }

    /// Inverse-CDF draw.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.gen();
        match self {
            AttributePrior::Range { lo, hi } => lo + u * (hi - lo),
            AttributePrior::Histogram { edges, masses } => {
                let mut acc = 0.0;
                for (i, &m) in masses.iter().enumerate() {
                    if u < acc + m || i == masses.len() - 1 {
                        let frac = if m > 0.0 { (u - acc) / m } else { 0.5 };
                        return edges[i] + frac.clamp(0.0, 1.0) * (edges[i + 1] - edges[i]);
                    }
                    acc += m;
                }
                unreachable!("masses sum to 1")
            }
        }
    }

    /// Probability mass the prior assigns to [lo, hi).
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        if !(lo < hi) {
            return 0.0;
        }
        match self {
            AttributePrior::Range { lo: a, hi: b } => {
                let overlap = (hi.min(*b) - lo.max(*a)).max(0.0);
                overlap / (b - a)
            }
            AttributePrior::Histogram { edges, masses } => {
                let mut total = 0.0;
                for (i, &m) in masses.iter().enumerate() {
                    let (a, b) = (edges[i], edges[i + 1]);
                    let overlap = (hi.min(b) - lo.max(a)).max(0.0);
                    total += m * overlap / (b - a);
                }
                total
            }
        }
    }

    /// Support bounds (used to build default binnings).
    pub fn support(&self) -> (f64, f64) {
        match self {
            AttributePrior::Range { lo, hi } => (*lo, *hi),
            AttributePrior::Histogram { edges, .. } => (edges[0], *edges.last().unwrap()),
        }
    }
}

/// Road-category mix. The three entries must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryQuotas {
    pub straight_urban: f64,
    pub straight_highway: f64,
    pub curved: f64,
}

impl CategoryQuotas {
    pub fn as_array(&self) -> [f64; 3] {
        [self.straight_urban, self.straight_highway, self.curved]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub quotas: CategoryQuotas,
    pub v_target0: AttributePrior,
    /// Bullet speed surplus over the target: v_bullet0 = v_target0 + delta_v.
    pub delta_v: AttributePrior,
    pub gap: AttributePrior,
    pub lateral_offset: AttributePrior,
    pub heading_diff: AttributePrior,
    pub mu: AttributePrior,
    /// Curvature draw for the curved category only.
    pub curvature: AttributePrior,
    /// Independent inclusion probability for each of `max_obstacles` slots.
    pub obstacle_prob: f64,
    pub max_obstacles: usize,
    pub preset: PresetId,
}

impl PriorSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let q = self.quotas.as_array();
        if q.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(ScenarioError::InvalidPrior { reason: "quotas must lie in [0, 1]".into() });
        }
        let total: f64 = q.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ScenarioError::InvalidPrior {
                reason: format!("quotas sum to {total}, expected 1"),
            });
        }
        if !(0.0..=1.0).contains(&self.obstacle_prob) {
            return Err(ScenarioError::InvalidPrior { reason: "obstacle_prob outside [0, 1]".into() });
        }
        self.v_target0.validate("v_target0")?;
        self.delta_v.validate("delta_v")?;
        self.gap.validate("gap")?;
        self.lateral_offset.validate("lateral_offset")?;
        self.heading_diff.validate("heading_diff")?;
        self.mu.validate("mu")?;
        self.curvature.validate("curvature")?;
        let (klo, khi) = self.curvature.support();
        if klo < -super::road::MAX_CURVATURE || khi > super::road::MAX_CURVATURE {
            return Err(ScenarioError::InvalidPrior {
                reason: "curvature prior exceeds the road curvature cap".into(),
            });
        }
        Ok(())
    }
}

/// Distribute `n` seats over fractional `shares` by largest remainder:
/// every share gets its floor, leftovers go to the largest fractional
/// parts (ties to the earlier index).
pub fn apportion(shares: &[f64], n: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = shares.iter().map(|s| (s * n as f64).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] * n as f64 - (shares[a] * n as f64).floor();
        let fb = shares[b] * n as f64 - (shares[b] * n as f64).floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for i in 0..n.saturating_sub(assigned) {
        counts[order[i % order.len()]] += 1;
    }
    counts
}

fn road_for(category: usize, curvature: f64) -> RoadSpec {
    match category {
        0 => RoadSpec {
            topology: RoadTopology::StraightUrban,
            lane_count: 2,
            lane_width: 3.5,
            half_width: 7.0,
            length: 400.0,
        },
        1 => RoadSpec {
            topology: RoadTopology::StraightHighway,
            lane_count: 3,
            lane_width: 3.75,
            half_width: 11.25,
            length: 600.0,
        },
        _ => RoadSpec {
            topology: RoadTopology::Curved { curvature },
            lane_count: 2,
            lane_width: 3.5,
            half_width: 7.0,
            length: 500.0,
        },
    }
}

/// Draw `n` scenarios honoring the category quotas exactly. The stream of
/// random values is fixed by `seed`; ids encode category and index.
pub fn sample_scenarios(
    prior: &PriorSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<ScenarioSpec>, ScenarioError> {
    if n == 0 {
        return Err(ScenarioError::InvalidPrior { reason: "need n >= 1".into() });
    }
    prior.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = apportion(&prior.quotas.as_array(), n);
    let tags = ["su", "sh", "cv"];
    let mut out = Vec::with_capacity(n);

    for (cat, &count) in counts.iter().enumerate() {
        for i in 0..count {
            let curvature = prior.curvature.sample(&mut rng);
            let road = road_for(cat, curvature);
            let v_target0 = prior.v_target0.sample(&mut rng).max(0.0);
            let delta_v = prior.delta_v.sample(&mut rng);
            let spec = ScenarioSpec {
                id: format!("{}-{:03}", tags[cat], i),
                road,
                mu: prior.mu.sample(&mut rng).clamp(0.2, 1.0),
                v_target0,
                v_bullet0: (v_target0 + delta_v).max(0.0),
                gap: prior.gap.sample(&mut rng).max(0.1),
                lateral_offset: prior.lateral_offset.sample(&mut rng),
                heading_diff: prior.heading_diff.sample(&mut rng),
                obstacles: sample_obstacles(prior, &road, &mut rng),
                preset: prior.preset,
                seed: rng.gen(),
            };
            out.push(spec);
        }
    }
    Ok(out)
}

fn sample_obstacles(prior: &PriorSpec, road: &RoadSpec, rng: &mut impl Rng) -> Vec<ObstacleSpec> {
    let mut obstacles = Vec::new();
    for _ in 0..prior.max_obstacles {
        // Draw the slot's attributes unconditionally so the RNG stream
        // doesn't depend on which slots are filled.
        let s = rng.gen_range(0.15..0.8) * road.length;
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let lateral = side * rng.gen_range(0.55..0.9) * road.half_width;
        let radius = rng.gen_range(0.3..0.9);
        let include = rng.gen_bool(prior.obstacle_prob);
        if include {
            let (c, th) = road.centerline_at(s);
            let left = [-th.sin(), th.cos()];
            obstacles.push(ObstacleSpec {
                position: [c[0] + lateral * left[0], c[1] + lateral * left[1]],
                velocity: [0.0, 0.0],
                radius,
            });
        }
    }
    obstacles
}

/// The checked-in default prior: quota mix 22.0 / 17.9 / 60.1 percent,
/// moderate urban-pursuit speeds, small closing-speed surplus, and grippy to
/// slippery roads.
pub fn default_prior() -> PriorSpec {
    PriorSpec {
        quotas: CategoryQuotas { straight_urban: 0.220, straight_highway: 0.179, curved: 0.601 },
        v_target0: AttributePrior::Range { lo: 8.0, hi: 18.0 },
        delta_v: AttributePrior::Range { lo: 2.0, hi: 5.0 },
        gap: AttributePrior::Range { lo: 3.0, hi: 8.0 },
        lateral_offset: AttributePrior::Range { lo: -1.0, hi: 1.0 },
        heading_diff: AttributePrior::Range { lo: -0.12, hi: 0.12 },
        mu: AttributePrior::Histogram {
            edges: vec![0.55, 0.65, 0.75, 0.85, 0.95],
            masses: vec![0.2, 0.2, 0.3, 0.3],
        },
        curvature: AttributePrior::Range { lo: -0.006, hi: 0.006 },
        obstacle_prob: 0.35,
        max_obstacles: 2,
        preset: PresetId::FullSize,
    }
}
