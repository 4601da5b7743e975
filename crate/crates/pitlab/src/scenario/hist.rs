//! Attribute histograms over a declared binning and the KL divergence used
//! to compare a generated suite against its prior.

use super::prior::{AttributePrior, PriorSpec};
use super::{RoadTopology, ScenarioError, ScenarioSpec};
use serde::{Deserialize, Serialize};

/// Normalized mass vector; bin geometry lives in the [`Binning`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Declared bin edges per continuous attribute (the category attribute is
/// categorical with one bin per road type).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub speed: Vec<f64>,
    pub mu: Vec<f64>,
    pub gap: Vec<f64>,
    pub heading: Vec<f64>,
}

impl Binning {
    /// Ten uniform bins per attribute spanning the prior's support.
    pub fn for_prior(prior: &PriorSpec) -> Self {
        let edges = |p: &AttributePrior| {
            let (lo, hi) = p.support();
            (0..=10).map(|i| lo + (hi - lo) * i as f64 / 10.0).collect::<Vec<f64>>()
        };
        Self {
            speed: edges(&prior.v_target0),
            mu: edges(&prior.mu),
            gap: edges(&prior.gap),
            heading: edges(&prior.heading_diff),
        }
    }
}

/// Histograms of the five reported attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSet {
    pub category: Histogram,
    pub speed: Histogram,
    pub mu: Histogram,
    pub gap: Histogram,
    pub heading: Histogram,
}

/// Values outside the declared edges are clamped into the end bins, so the
/// masses always sum to 1.
fn bin_values(values: &[f64], edges: &[f64]) -> Histogram {
    let k = edges.len() - 1;
    let mut counts = vec![0usize; k];
    for &v in values {
        let mut idx = match edges.binary_search_by(|e| e.partial_cmp(&v).unwrap()) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        idx = idx.min(k - 1);
        counts[idx] += 1;
    }
    let n = values.len() as f64;
    Histogram { masses: counts.iter().map(|&c| c as f64 / n).collect() }
}

fn category_index(t: &RoadTopology) -> usize {
    match t {
        RoadTopology::StraightUrban => 0,
        RoadTopology::StraightHighway => 1,
        RoadTopology::Curved { .. } => 2,
    }
}

/// Empirical attribute histograms of a suite under a declared binning.
pub fn attribute_histograms(specs: &[ScenarioSpec], binning: &Binning) -> HistogramSet {
    assert!(!specs.is_empty(), "need at least one scenario");
    let n = specs.len() as f64;
    let mut cat = vec![0usize; 3];
    for s in specs {
        cat[category_index(&s.road.topology)] += 1;
    }
    let collect = |f: fn(&ScenarioSpec) -> f64| specs.iter().map(f).collect::<Vec<f64>>();
    HistogramSet {
        category: Histogram { masses: cat.iter().map(|&c| c as f64 / n).collect() },
        speed: bin_values(&collect(|s| s.v_target0), &binning.speed),
        mu: bin_values(&collect(|s| s.mu), &binning.mu),
        gap: bin_values(&collect(|s| s.gap), &binning.gap),
        heading: bin_values(&collect(|s| s.heading_diff), &binning.heading),
    }
}

/// The histograms the prior itself implies under a binning — the reference
/// side of the distributional-consistency comparison.
pub fn prior_histograms(prior: &PriorSpec, binning: &Binning) -> HistogramSet {
    let expect = |p: &AttributePrior, edges: &[f64]| {
        let k = edges.len() - 1;
        let mut masses: Vec<f64> = (0..k).map(|i| p.mass_in(edges[i], edges[i + 1])).collect();
        // Tail mass outside the declared edges clamps into the end bins,
        // mirroring the empirical binning rule.
        masses[0] += p.mass_in(f64::NEG_INFINITY, edges[0]);
        masses[k - 1] += p.mass_in(edges[k], f64::INFINITY);
        Histogram { masses }
    };
    HistogramSet {
        category: Histogram { masses: prior.quotas.as_array().to_vec() },
        speed: expect(&prior.v_target0, &binning.speed),
        mu: expect(&prior.mu, &binning.mu),
        gap: expect(&prior.gap, &binning.gap),
        heading: expect(&prior.heading_diff, &binning.heading),
    }
}

/// `KL(p || q) = sum p_i ln(p_i / q_i)` over a shared binning; `q` is floored
/// at 1e-6 and renormalized, zero-mass `p` bins contribute nothing.
pub fn kl_divergence(p: &Histogram, q: &Histogram) -> Result<f64, ScenarioError> {
    if p.masses.len() != q.masses.len() {
        return Err(ScenarioError::BinningMismatch { expected: p.masses.len(), got: q.masses.len() });
    }
    let floored: Vec<f64> = q.masses.iter().map(|&m| m.max(1e-6)).collect();
    let z: f64 = floored.iter().sum();
    let mut kl = 0.0;
    for (&pi, qi) in p.masses.iter().zip(&floored) {
        if pi > 0.0 {
            kl += pi * (pi / (qi / z)).ln();
        }
    }
    Ok(kl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{default_prior, sample_scenarios};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_binning() -> Binning {
        Binning::for_prior(&default_prior())
    }

    #[test]
    fn single_scenario_is_a_unit_point_mass() {
        let specs = sample_scenarios(&default_prior(), 1, 4).unwrap();
        let h = attribute_histograms(&specs, &unit_binning());
        for hist in [&h.category, &h.speed, &h.mu, &h.gap, &h.heading] {
            assert_abs_diff_eq!(hist.total(), 1.0, epsilon = 1e-12);
            assert_eq!(hist.masses.iter().filter(|&&m| m > 0.0).count(), 1);
            assert_eq!(hist.masses.iter().cloned().fold(0.0, f64::max), 1.0);
        }
    }

    #[test]
    fn masses_sum_to_one() {
        let specs = sample_scenarios(&default_prior(), 137, 8).unwrap();
        let h = attribute_histograms(&specs, &unit_binning());
        for hist in [&h.category, &h.speed, &h.mu, &h.gap, &h.heading] {
            assert_abs_diff_eq!(hist.total(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn merging_equal_halves_averages_histograms() {
        let b = unit_binning();
        let all = sample_scenarios(&default_prior(), 200, 31).unwrap();
        // Interleave so the halves have the same category mix.
        let half_a: Vec<_> = all.iter().step_by(2).cloned().collect();
        let half_b: Vec<_> = all.iter().skip(1).step_by(2).cloned().collect();
        let merged: Vec<_> = half_a.iter().chain(&half_b).cloned().collect();
        let (ha, hb, hm) = (
            attribute_histograms(&half_a, &b),
            attribute_histograms(&half_b, &b),
            attribute_histograms(&merged, &b),
        );
        for ((a, bb), m) in ha
            .speed
            .masses
            .iter()
            .zip(&hb.speed.masses)
            .zip(&hm.speed.masses)
        {
            assert_abs_diff_eq!(0.5 * (a + bb), *m, epsilon = 1e-12);
        }
    }

    #[test]
    fn kl_of_identical_histograms_is_exactly_zero() {
        let p = Histogram { masses: vec![0.25, 0.5, 0.25] };
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_versus_uniform_is_ln_two() {
        let p = Histogram { masses: vec![1.0, 0.0] };
        let q = Histogram { masses: vec![0.5, 0.5] };
        assert_abs_diff_eq!(kl_divergence(&p, &q).unwrap(), std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn kl_matches_direct_summation_oracle() {
        let p = Histogram { masses: vec![0.1, 0.2, 0.3, 0.4] };
        let q = Histogram { masses: vec![0.3, 0.3, 0.2, 0.2] };
        // Independent hand evaluation with no flooring active (all q > 1e-6).
        let want: f64 = [(0.1f64, 0.3f64), (0.2, 0.3), (0.3, 0.2), (0.4, 0.2)]
            .iter()
            .map(|(pi, qi)| pi * (pi / qi).ln())
            .sum();
        assert_abs_diff_eq!(kl_divergence(&p, &q).unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn mismatched_binning_is_an_error() {
        let p = Histogram { masses: vec![1.0] };
        let q = Histogram { masses: vec![0.5, 0.5] };
        assert!(matches!(
            kl_divergence(&p, &q),
            Err(ScenarioError::BinningMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn generated_suite_tracks_its_prior() {
        let prior = default_prior();
        let b = Binning::for_prior(&prior);
        let specs = sample_scenarios(&prior, 1000, 77).unwrap();
        let emp = attribute_histograms(&specs, &b);
        let exp = prior_histograms(&prior, &b);
        for (p, q, name) in [
            (&emp.category, &exp.category, "category"),
            (&emp.speed, &exp.speed, "speed"),
            (&emp.mu, &exp.mu, "mu"),
            (&emp.gap, &exp.gap, "gap"),
            (&emp.heading, &exp.heading, "heading"),
        ] {
            let kl = kl_divergence(p, q).unwrap();
            assert!(kl < 0.05, "{name}: KL {kl} too large");
        }
    }

    proptest! {
        #[test]
        fn gibbs_inequality_on_random_pairs(
            raw_p in proptest::collection::vec(0.0f64..1.0, 6),
            raw_q in proptest::collection::vec(1e-3f64..1.0, 6),
        ) {
            let sp: f64 = raw_p.iter().sum();
            prop_assume!(sp > 1e-9);
            let sq: f64 = raw_q.iter().sum();
            let p = Histogram { masses: raw_p.iter().map(|v| v / sp).collect() };
            let q = Histogram { masses: raw_q.iter().map(|v| v / sq).collect() };
            let kl = kl_divergence(&p, &q).unwrap();
            prop_assert!(kl >= -1e-12, "KL = {kl}");
        }
    }
}
