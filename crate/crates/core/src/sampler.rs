//! Ancestral sampling of feasible scenes from a hand-specified prior.
//!
//! Attributes are drawn in topological order of the prior DAG:
//! topology binaries, then traffic direction and lane counts, then the
//! remaining existence binaries, then continuous values. Every conditional
//! only puts mass on values consistent with the already-drawn parents, so
//! samples are feasible without rejection.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{split, SplitMix64};
use crate::schema::{
    bin, cont, SceneParams, Side, CURVATURE_RANGE, DELIMITER_WIDTH_RANGE,
    LANE_CLASSES, LANE_WIDTH_RANGE, MAX_SIDE_LANES, NUM_BINARY, NUM_CONTINUOUS, NUM_MULTICLASS,
    SIDEWALK_WIDTH_RANGE, SIDE_ROAD_DISTANCE_RANGE, SIDE_ROAD_WIDTH_RANGE,
};

#[derive(Debug, Error, PartialEq)]
pub enum PriorError {
    #[error("probability `{0}` must lie in [0, 1]")]
    Probability(&'static str),
    #[error("weights `{0}` must be finite, nonnegative and not all zero")]
    Weights(&'static str),
    #[error("bounds `{0}` must be ordered and inside the attribute range")]
    Bounds(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformRange {
    pub min: f64,
    pub max: f64,
}

/// Normal distribution truncated to the lane-width range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub std: f64,
}

/// Distribution parameters of the scene prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub side_road_left: f64,
    pub side_road_right: f64,
    /// Only drawn when at least one side road exists.
    pub main_road_ends: f64,
    pub crosswalk_near_intersection: f64,
    pub crosswalk_near_midblock: f64,
    /// Only drawn at an intersection whose main road continues.
    pub crosswalk_far: f64,
    pub crosswalk_left: f64,
    pub crosswalk_right: f64,
    pub oneway_main: f64,
    /// Weights over 0..=6 lanes; index 0 is ignored because two-way traffic
    /// needs an opposing lane. All-zero weights on 1..=6 force one-way traffic.
    pub lanes_left_twoway: [f64; LANE_CLASSES],
    pub lanes_left_oneway: [f64; LANE_CLASSES],
    pub lanes_right: [f64; LANE_CLASSES],
    pub delimiter_median: f64,
    pub sidewalk_left: f64,
    pub sidewalk_right: f64,
    pub delimiter_with_sidewalk: f64,
    pub delimiter_without_sidewalk: f64,
    pub main_road_curved: f64,
    pub lane_width: TruncatedNormal,
    pub side_road_distance: UniformRange,
    pub side_road_width: UniformRange,
    pub delimiter_width: UniformRange,
    pub sidewalk_width: UniformRange,
    pub curvature: UniformRange,
    /// Curvatures with magnitude below this are never drawn.
    pub curvature_dead_zone: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            side_road_left: 0.3,
            side_road_right: 0.3,
            main_road_ends: 0.25,
            crosswalk_near_intersection: 0.4,
            crosswalk_near_midblock: 0.05,
            crosswalk_far: 0.3,
            crosswalk_left: 0.5,
            crosswalk_right: 0.5,
            oneway_main: 0.15,
            lanes_left_twoway: [0.0, 0.45, 0.3, 0.15, 0.05, 0.03, 0.02],
            lanes_left_oneway: [0.5, 0.25, 0.12, 0.06, 0.04, 0.02, 0.01],
            lanes_right: [0.5, 0.25, 0.12, 0.06, 0.04, 0.02, 0.01],
            delimiter_median: 0.2,
            sidewalk_left: 0.5,
            sidewalk_right: 0.5,
            delimiter_with_sidewalk: 0.6,
            delimiter_without_sidewalk: 0.1,
            main_road_curved: 0.2,
            lane_width: TruncatedNormal { mean: 3.5, std: 0.5 },
            side_road_distance: range(SIDE_ROAD_DISTANCE_RANGE),
            side_road_width: range(SIDE_ROAD_WIDTH_RANGE),
            delimiter_width: range(DELIMITER_WIDTH_RANGE),
            sidewalk_width: range(SIDEWALK_WIDTH_RANGE),
            curvature: range(CURVATURE_RANGE),
            curvature_dead_zone: 0.002,
        }
    }
}

fn range((min, max): (f64, f64)) -> UniformRange {
    UniformRange { min, max }
}

impl PriorConfig {
    /// Every Bernoulli probability set to zero and all lane mass on zero
    /// lanes.
    pub fn degenerate() -> Self {
        let mut lanes = [0.0; LANE_CLASSES];
        lanes[0] = 1.0;
        PriorConfig {
            side_road_left: 0.0,
            side_road_right: 0.0,
            main_road_ends: 0.0,
            crosswalk_near_intersection: 0.0,
            crosswalk_near_midblock: 0.0,
            crosswalk_far: 0.0,
            crosswalk_left: 0.0,
            crosswalk_right: 0.0,
            oneway_main: 0.0,
            lanes_left_twoway: lanes,
            lanes_left_oneway: lanes,
            lanes_right: lanes,
            delimiter_median: 0.0,
            sidewalk_left: 0.0,
            sidewalk_right: 0.0,
            delimiter_with_sidewalk: 0.0,
            delimiter_without_sidewalk: 0.0,
            main_road_curved: 0.0,
            ..PriorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), PriorError> {
        let probs = [
            (self.side_road_left, "side_road_left"),
            (self.side_road_right, "side_road_right"),
            (self.main_road_ends, "main_road_ends"),
            (self.crosswalk_near_intersection, "crosswalk_near_intersection"),
            (self.crosswalk_near_midblock, "crosswalk_near_midblock"),
            (self.crosswalk_far, "crosswalk_far"),
            (self.crosswalk_left, "crosswalk_left"),
            (self.crosswalk_right, "crosswalk_right"),
            (self.oneway_main, "oneway_main"),
            (self.delimiter_median, "delimiter_median"),
            (self.sidewalk_left, "sidewalk_left"),
            (self.sidewalk_right, "sidewalk_right"),
            (self.delimiter_with_sidewalk, "delimiter_with_sidewalk"),
            (self.delimiter_without_sidewalk, "delimiter_without_sidewalk"),
            (self.main_road_curved, "main_road_curved"),
        ];
        for (p, name) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(PriorError::Probability(name));
            }
        }

        let weights_ok = |w: &[f64]| w.iter().all(|x| x.is_finite() && *x >= 0.0);
        if !weights_ok(&self.lanes_left_twoway) {
            return Err(PriorError::Weights("lanes_left_twoway"));
        }
        for (w, name) in [
            (&self.lanes_left_oneway, "lanes_left_oneway"),
            (&self.lanes_right, "lanes_right"),
        ] {
            if !weights_ok(w) || w.iter().sum::<f64>() <= 0.0 {
                return Err(PriorError::Weights(name));
            }
        }

        let inside = |r: &UniformRange, (lo, hi): (f64, f64)| r.min <= r.max && r.min >= lo && r.max <= hi;
        for (r, bounds, name) in [
            (&self.side_road_distance, SIDE_ROAD_DISTANCE_RANGE, "side_road_distance"),
            (&self.side_road_width, SIDE_ROAD_WIDTH_RANGE, "side_road_width"),
            (&self.delimiter_width, DELIMITER_WIDTH_RANGE, "delimiter_width"),
            (&self.sidewalk_width, SIDEWALK_WIDTH_RANGE, "sidewalk_width"),
            (&self.curvature, CURVATURE_RANGE, "curvature"),
        ] {
            if !inside(r, bounds) {
                return Err(PriorError::Bounds(name));
            }
        }
        let dz = self.curvature_dead_zone;
        let usable: f64 = curvature_segments(&self.curvature, dz)
            .iter()
            .map(|(a, b)| (b - a).max(0.0))
            .sum();
        if !(dz >= 0.0 && dz.is_finite()) || usable <= 0.0 {
            return Err(PriorError::Bounds("curvature_dead_zone"));
        }
        let lw = self.lane_width;
        if !(lw.std > 0.0 && lw.std.is_finite())
            || !(LANE_WIDTH_RANGE.0..=LANE_WIDTH_RANGE.1).contains(&lw.mean)
        {
            return Err(PriorError::Bounds("lane_width"));
        }
        Ok(())
    }
}

/// The parts of the curvature range outside the dead zone.
fn curvature_segments(r: &UniformRange, dead_zone: f64) -> [(f64, f64); 2] {
    [(r.min, r.max.min(-dead_zone)), (r.min.max(dead_zone), r.max)]
}

fn bernoulli<R: Rng>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn uniform<R: Rng>(rng: &mut R, r: UniformRange) -> f64 {
    r.min + (r.max - r.min) * rng.random::<f64>()
}

fn categorical<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    WeightedIndex::new(weights)
        .expect("prior weights validated")
        .sample(rng)
}

fn lane_width<R: Rng>(rng: &mut R, tn: TruncatedNormal) -> f64 {
    let normal = Normal::new(tn.mean, tn.std).expect("prior validated");
    loop {
        let x = normal.sample(rng);
        if (LANE_WIDTH_RANGE.0..=LANE_WIDTH_RANGE.1).contains(&x) {
            return x;
        }
    }
}

fn curvature<R: Rng>(rng: &mut R, r: UniformRange, dead_zone: f64) -> f64 {
    let segs = curvature_segments(&r, dead_zone);
    let lens = segs.map(|(a, b)| (b - a).max(0.0));
    let total = lens[0] + lens[1];
    let t = total * rng.random::<f64>();
    if t < lens[0] {
        segs[0].0 + t
    } else {
        (segs[1].0 + (t - lens[0])).min(segs[1].1)
    }
}

/// Draws one feasible scene. Deterministic in `(prior, seed)`.
pub fn sample_scene(prior: &PriorConfig, seed: u64) -> SceneParams {
    let mut rng = SplitMix64::new(seed);
    let rng = &mut rng;
    let mut b = [false; NUM_BINARY];
    let mut lanes = [0u8; NUM_MULTICLASS];
    let mut c: [Option<f64>; NUM_CONTINUOUS] = [None; NUM_CONTINUOUS];

    // topology
    b[bin::SIDE_ROAD_LEFT] = bernoulli(rng, prior.side_road_left);
    b[bin::SIDE_ROAD_RIGHT] = bernoulli(rng, prior.side_road_right);
    let intersection = b[bin::SIDE_ROAD_LEFT] || b[bin::SIDE_ROAD_RIGHT];
    b[bin::MAIN_ROAD_ENDS] = intersection && bernoulli(rng, prior.main_road_ends);
    b[bin::MAIN_ROAD_CURVED] = bernoulli(rng, prior.main_road_curved);

    // traffic direction and lanes
    let mut twoway_weights = prior.lanes_left_twoway;
    twoway_weights[0] = 0.0;
    let twoway_possible = twoway_weights.iter().sum::<f64>() > 0.0;
    b[bin::ONEWAY_MAIN] = !twoway_possible || bernoulli(rng, prior.oneway_main);
    let left_weights = if b[bin::ONEWAY_MAIN] {
        &prior.lanes_left_oneway
    } else {
        &twoway_weights
    };
    lanes[Side::Left.lanes()] = categorical(rng, left_weights) as u8;
    lanes[Side::Right.lanes()] = categorical(rng, &prior.lanes_right) as u8;

    // existence binaries
    b[bin::CROSSWALK_NEAR] = bernoulli(
        rng,
        if intersection {
            prior.crosswalk_near_intersection
        } else {
            prior.crosswalk_near_midblock
        },
    );
    b[bin::CROSSWALK_FAR] =
        intersection && !b[bin::MAIN_ROAD_ENDS] && bernoulli(rng, prior.crosswalk_far);
    b[bin::CROSSWALK_LEFT] = b[bin::SIDE_ROAD_LEFT] && bernoulli(rng, prior.crosswalk_left);
    b[bin::CROSSWALK_RIGHT] = b[bin::SIDE_ROAD_RIGHT] && bernoulli(rng, prior.crosswalk_right);
    b[bin::DELIMITER_MEDIAN] = !b[bin::ONEWAY_MAIN]
        && lanes[Side::Left.lanes()] >= 1
        && bernoulli(rng, prior.delimiter_median);
    b[bin::SIDEWALK_LEFT] = bernoulli(rng, prior.sidewalk_left);
    b[bin::SIDEWALK_RIGHT] = bernoulli(rng, prior.sidewalk_right);
    for side in Side::BOTH {
        let p = if b[side.sidewalk()] {
            prior.delimiter_with_sidewalk
        } else {
            prior.delimiter_without_sidewalk
        };
        b[side.delimiter()] = bernoulli(rng, p);
    }

    // continuous values
    c[cont::EGO_LANE_WIDTH] = Some(lane_width(rng, prior.lane_width));
    for side in Side::BOTH {
        for lane in 1..=MAX_SIDE_LANES {
            if lanes[side.lanes()] as usize >= lane {
                c[side.lane_width(lane)] = Some(lane_width(rng, prior.lane_width));
            }
        }
    }
    for side in Side::BOTH {
        if b[side.side_road()] {
            c[side.dist_side_road()] = Some(uniform(rng, prior.side_road_distance));
            c[side.side_road_width()] = Some(uniform(rng, prior.side_road_width));
        }
        if b[side.delimiter()] {
            c[side.delimiter_width()] = Some(uniform(rng, prior.delimiter_width));
        }
        if b[side.sidewalk()] {
            c[side.sidewalk_width()] = Some(uniform(rng, prior.sidewalk_width));
        }
    }
    if b[bin::MAIN_ROAD_CURVED] {
        c[cont::CURVATURE] = Some(curvature(rng, prior.curvature, prior.curvature_dead_zone));
    }

    SceneParams {
        binary: b,
        multiclass: lanes,
        continuous: c,
    }
}

/// Scenes together with the sub-seed each was drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub scenes: Vec<SceneParams>,
    pub seeds: Vec<u64>,
}

/// Seed of element `index` in a batch rooted at `base_seed`.
pub fn scene_seed(base_seed: u64, index: u64) -> u64 {
    split(base_seed, index)
}

pub fn sample_batch(prior: &PriorConfig, base_seed: u64, n: usize) -> SampleBatch {
    let seeds: Vec<u64> = (0..n as u64).map(|i| scene_seed(base_seed, i)).collect();
    let scenes = seeds.iter().map(|&s| sample_scene(prior, s)).collect();
    SampleBatch { scenes, seeds }
}

/// Laplace-smoothed joint probabilities `M_ij(a, b)` for every pair of
/// binary attributes, indexed `[a][b]` with `a` the value of attribute `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceTables {
    pub samples: usize,
    tables: Vec<[[f64; 2]; 2]>,
}

pub const COOCCURRENCE_SMOOTHING: f64 = 1.0;

impl CooccurrenceTables {
    /// Every pair independent and uniform.
    pub fn uniform() -> Self {
        CooccurrenceTables {
            samples: 0,
            tables: vec![[[0.25; 2]; 2]; NUM_BINARY * NUM_BINARY],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> [[f64; 2]; 2] {
        self.tables[i * NUM_BINARY + j]
    }

    pub fn set(&mut self, i: usize, j: usize, table: [[f64; 2]; 2]) {
        self.tables[i * NUM_BINARY + j] = table;
        self.tables[j * NUM_BINARY + i] = [[table[0][0], table[1][0]], [table[0][1], table[1][1]]];
    }

    /// Marginal of attribute `i` taken from its table with `j`.
    pub fn marginal(&self, i: usize, j: usize) -> [f64; 2] {
        let t = self.get(i, j);
        [t[0][0] + t[0][1], t[1][0] + t[1][1]]
    }

    /// `M_ij(a, b) / (P_i(a) P_j(b))`, the ratio of the joint to the product
    /// of its marginals.
    pub fn lift(&self, i: usize, j: usize) -> [[f64; 2]; 2] {
        let t = self.get(i, j);
        let pi = self.marginal(i, j);
        let pj = self.marginal(j, i);
        let mut out = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                out[a][b] = t[a][b] / (pi[a] * pj[b]);
            }
        }
        out
    }
}

/// Pairwise co-occurrence statistics of the binary attributes.
pub fn estimate_cooccurrence(scenes: &[SceneParams]) -> CooccurrenceTables {
    let mut counts = vec![[[0usize; 2]; 2]; NUM_BINARY * NUM_BINARY];
    for s in scenes {
        for i in 0..NUM_BINARY {
            for j in 0..NUM_BINARY {
                counts[i * NUM_BINARY + j][s.binary[i] as usize][s.binary[j] as usize] += 1;
            }
        }
    }
    let alpha = COOCCURRENCE_SMOOTHING;
    let denom = scenes.len() as f64 + 4.0 * alpha;
    let tables = counts
        .iter()
        .map(|c| {
            let mut t = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    t[a][b] = (c[a][b] as f64 + alpha) / denom;
                }
            }
            t
        })
        .collect();
    CooccurrenceTables {
        samples: scenes.len(),
        tables,
    }
}

/// Co-occurrence statistics of `n` scenes drawn from `prior`.
pub fn prior_cooccurrence(prior: &PriorConfig, seed: u64, n: usize) -> CooccurrenceTables {
    estimate_cooccurrence(&sample_batch(prior, seed, n).scenes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{default_schema, mc, validate};

    #[test]
    fn default_prior_is_valid() {
        assert_eq!(PriorConfig::default().validate(), Ok(()));
        assert_eq!(PriorConfig::degenerate().validate(), Ok(()));
    }

    #[test]
    fn invalid_priors() {
        let mut p = PriorConfig::default();
        p.side_road_left = 1.5;
        assert_eq!(p.validate(), Err(PriorError::Probability("side_road_left")));
        let mut p = PriorConfig::default();
        p.lanes_right = [0.0; 7];
        assert_eq!(p.validate(), Err(PriorError::Weights("lanes_right")));
        let mut p = PriorConfig::default();
        p.side_road_width.max = 30.0;
        assert_eq!(p.validate(), Err(PriorError::Bounds("side_road_width")));
        let mut p = PriorConfig::default();
        p.lane_width.std = 0.0;
        assert_eq!(p.validate(), Err(PriorError::Bounds("lane_width")));
    }

    #[test]
    fn degenerate_prior_forces_oneway() {
        let schema = default_schema();
        for seed in 0..50 {
            let s = sample_scene(&PriorConfig::degenerate(), seed);
            assert!(s.binary[bin::ONEWAY_MAIN]);
            assert_eq!(s.multiclass, [0, 0]);
            assert_eq!(s.binary.iter().filter(|b| **b).count(), 1);
            assert!(validate(&s, &schema).is_feasible());
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let p = PriorConfig::default();
        assert_eq!(sample_scene(&p, 42), sample_scene(&p, 42));
        assert_ne!(sample_scene(&p, 42), sample_scene(&p, 43));
    }

    #[test]
    fn batch_prefix_and_single() {
        let p = PriorConfig::default();
        let small = sample_batch(&p, 7, 100);
        let large = sample_batch(&p, 7, 1000);
        assert_eq!(small.scenes[..], large.scenes[..100]);
        assert_eq!(small.seeds[..], large.seeds[..100]);
        let one = sample_batch(&p, 7, 1);
        assert_eq!(one.scenes[0], sample_scene(&p, split(7, 0)));
    }

    #[test]
    fn curvature_avoids_dead_zone() {
        let p = PriorConfig::default();
        let mut rng = SplitMix64::new(3);
        for _ in 0..10_000 {
            let k = curvature(&mut rng, p.curvature, p.curvature_dead_zone);
            assert!(k.abs() >= 0.002 && (-0.02..=0.02).contains(&k), "{k}");
        }
    }

    #[test]
    fn cooccurrence_always_both_true() {
        let mut s = SceneParams::minimal(3.5);
        s.binary[bin::SIDE_ROAD_LEFT] = true;
        let n = 96;
        let scenes = vec![s; n];
        let t = estimate_cooccurrence(&scenes);
        let a = 1.0 / (n as f64 + 4.0);
        // side_road_left and oneway_main are both always true
        let m = t.get(bin::SIDE_ROAD_LEFT, bin::ONEWAY_MAIN);
        assert_eq!(m[0][0], a);
        assert_eq!(m[0][1], a);
        assert_eq!(m[1][0], a);
        assert!((m[1][1] - (1.0 - 3.0 * a)).abs() < 1e-15);
    }

    #[test]
    fn cooccurrence_normalized_and_symmetric() {
        let batch = sample_batch(&PriorConfig::default(), 11, 500);
        let t = estimate_cooccurrence(&batch.scenes);
        for i in 0..NUM_BINARY {
            for j in 0..NUM_BINARY {
                let m = t.get(i, j);
                let sum: f64 = m.iter().flatten().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!(m.iter().flatten().all(|x| *x > 0.0));
                let mt = t.get(j, i);
                for a in 0..2 {
                    for b in 0..2 {
                        assert_eq!(m[a][b], mt[b][a]);
                    }
                }
            }
        }
    }

    #[test]
    fn lift_of_uniform_is_one() {
        let t = CooccurrenceTables::uniform();
        assert_eq!(t.lift(0, 5), [[1.0; 2]; 2]);
    }

    #[test]
    fn lane_widths_follow_counts() {
        let schema = default_schema();
        for seed in 0..200 {
            let s = sample_scene(&PriorConfig::default(), seed);
            for side in Side::BOTH {
                for lane in 1..=MAX_SIDE_LANES {
                    assert_eq!(s.continuous[side.lane_width(lane)].is_some(), s.lanes(side) >= lane);
                }
            }
            if !s.binary[bin::ONEWAY_MAIN] {
                assert!(s.multiclass[mc::LANES_LEFT] >= 1);
            }
            assert!(validate(&s, &schema).is_feasible());
        }
    }
}
