//! Single-frame and temporal CRF energies over attribute labelings.
//!
//! Per frame the energy sums `-ln p` unaries for every attribute, a pairwise
//! co-occurrence cost for every unordered pair of binaries, and a penalty for
//! every violated feasibility clique. Consecutive frames of a sequence are
//! tied by a Potts cost on discrete attributes and a truncated linear cost on
//! continuous bins.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{cont_label, Labeling};
use crate::prediction::{AttributePrediction, PredictionError};
use crate::probability::{bin_specs, BinSpec, BinningConfig};
use crate::sampler::CooccurrenceTables;
use crate::schema::{AttributeRef, AttributeSchema, AttributeView, ConstraintId, Rule, NUM_BINARY};

/// Finite stand-in for an infinite constraint penalty.
pub const DEFAULT_PENALTY: f64 = 1e9;
/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CrfError {
    #[error("no frames given")]
    Empty,
    #[error("frame {frame}: {source}")]
    Prediction { frame: usize, source: PredictionError },
    #[error("co-occurrence entry ({i}, {j}) is not positive")]
    ZeroCooccurrence { i: usize, j: usize },
    #[error("soft energy can reach {bound}, not below the penalty {penalty}")]
    PenaltyTooSmall { bound: f64, penalty: f64 },
    #[error("labeling does not match the model: {0}")]
    Dimension(String),
}

/// How the binary co-occurrence table becomes a pairwise cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseForm {
    /// `-ln M(a, b)`.
    JointProbability,
    /// `-ln M(a, b) / (P_i(a) P_j(b))`, the joint relative to independence.
    Lift,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalWeights {
    pub lambda_disc: f64,
    /// Cost per bin step.
    pub lambda_cont: f64,
    /// Truncation in bins; also the cost of switching activity.
    pub tau: f64,
}

impl Default for TemporalWeights {
    fn default() -> Self {
        TemporalWeights {
            lambda_disc: 1.0,
            lambda_cont: 0.05,
            tau: 10.0,
        }
    }
}

impl TemporalWeights {
    pub fn is_zero(&self) -> bool {
        self.lambda_disc == 0.0 && (self.lambda_cont == 0.0 || self.tau == 0.0)
    }

    pub fn discrete(&self, a: usize, b: usize) -> f64 {
        if a == b {
            0.0
        } else {
            self.lambda_disc
        }
    }

    pub fn continuous(&self, a: Option<u16>, b: Option<u16>) -> f64 {
        match (a, b) {
            (None, None) => 0.0,
            (Some(x), Some(y)) => self.lambda_cont * (x.abs_diff(y) as f64).min(self.tau),
            _ => self.lambda_cont * self.tau,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrfConfig {
    pub pairwise: PairwiseForm,
    pub penalty: f64,
    pub temporal: TemporalWeights,
    pub binning: BinningConfig,
}

impl Default for CrfConfig {
    fn default() -> Self {
        CrfConfig {
            pairwise: PairwiseForm::Lift,
            penalty: DEFAULT_PENALTY,
            temporal: TemporalWeights::default(),
            binning: BinningConfig::default(),
        }
    }
}

/// Unary costs of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameUnaries {
    pub binary: [[f64; 2]; NUM_BINARY],
    pub multiclass: Vec<Vec<f64>>,
    pub continuous: Vec<Vec<f64>>,
}

impl FrameUnaries {
    pub fn cost(&self, attr: AttributeRef, label: usize) -> f64 {
        match attr {
            AttributeRef::Binary(i) => self.binary[i][label],
            AttributeRef::Multiclass(p) => self.multiclass[p][label],
            AttributeRef::Continuous(m) => self.continuous[m][label],
        }
    }

    pub fn domain(&self, attr: AttributeRef) -> usize {
        match attr {
            AttributeRef::Binary(_) => 2,
            AttributeRef::Multiclass(p) => self.multiclass[p].len(),
            AttributeRef::Continuous(m) => self.continuous[m].len(),
        }
    }
}

fn nll(p: f64) -> f64 {
    -p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR).ln()
}

impl FrameUnaries {
    pub fn from_prediction(pred: &AttributePrediction) -> Self {
        FrameUnaries {
            binary: pred.binary.map(|p| [nll(1.0 - p), nll(p)]),
            multiclass: pred.multiclass.iter().map(|d| d.iter().map(|&p| nll(p)).collect()).collect(),
            continuous: pred
                .continuous
                .iter()
                .map(|d| d.weights().iter().map(|&p| nll(p)).collect())
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairTable {
    pub i: usize,
    pub j: usize,
    /// `cost[a][b]` for `x_i = a`, `x_j = b`.
    pub cost: [[f64; 2]; 2],
}

/// A feasibility constraint as a dense conflict table over the reduced
/// states of its attributes: binaries and lane counts by label, continuous
/// attributes by activity only (0 inactive, 1 active).
#[derive(Clone, Debug, PartialEq)]
pub struct Clique {
    pub id: ConstraintId,
    pub vars: Vec<AttributeRef>,
    pub radix: Vec<usize>,
    pub conflict: Vec<bool>,
}

struct ReducedView<'a> {
    vars: &'a [AttributeRef],
    states: &'a [usize],
}

impl ReducedView<'_> {
    fn state(&self, attr: AttributeRef) -> usize {
        let k = self.vars.iter().position(|v| *v == attr).expect("literal outside clique");
        self.states[k]
    }
}

impl AttributeView for ReducedView<'_> {
    fn binary(&self, index: usize) -> bool {
        self.state(AttributeRef::Binary(index)) != 0
    }
    fn class(&self, index: usize) -> u8 {
        self.state(AttributeRef::Multiclass(index)) as u8
    }
    fn is_active(&self, index: usize) -> bool {
        self.state(AttributeRef::Continuous(index)) != 0
    }
}

impl Clique {
    pub fn from_rule(id: ConstraintId, rule: &Rule, schema: &AttributeSchema) -> Self {
        let vars = rule.attributes();
        let radix: Vec<usize> = vars
            .iter()
            .map(|v| match v {
                AttributeRef::Multiclass(p) => schema.multiclass[*p].classes as usize,
                _ => 2,
            })
            .collect();
        let size: usize = radix.iter().product();
        let mut states = vec![0; vars.len()];
        let conflict = (0..size)
            .map(|mut idx| {
                for k in (0..vars.len()).rev() {
                    states[k] = idx % radix[k];
                    idx /= radix[k];
                }
                rule.violated(&ReducedView { vars: &vars, states: &states })
            })
            .collect();
        Clique {
            id,
            vars,
            radix,
            conflict,
        }
    }

    /// Reduced state of one attribute under a labeling.
    pub fn reduced(attr: AttributeRef, labeling: &Labeling) -> usize {
        match attr {
            AttributeRef::Binary(i) => usize::from(labeling.binary[i]),
            AttributeRef::Multiclass(p) => labeling.multiclass[p] as usize,
            AttributeRef::Continuous(m) => usize::from(labeling.continuous[m].is_some()),
        }
    }

    /// Conflict lookup with reduced states supplied per attribute.
    pub fn violated_with(&self, state: impl Fn(AttributeRef) -> usize) -> bool {
        let mut idx = 0;
        for (v, r) in self.vars.iter().zip(&self.radix) {
            idx = idx * r + state(*v);
        }
        self.conflict[idx]
    }

    pub fn violated(&self, labeling: &Labeling) -> bool {
        self.violated_with(|a| Self::reduced(a, labeling))
    }

    pub fn involves(&self, attr: AttributeRef) -> bool {
        self.vars.contains(&attr)
    }
}

/// The instantiated CRF for one frame or a sequence of frames.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyModel {
    pub frames: Vec<FrameUnaries>,
    pub pairwise: Vec<PairTable>,
    pub cliques: Vec<Clique>,
    pub specs: Vec<BinSpec>,
    pub penalty: f64,
    pub temporal: TemporalWeights,
}

pub fn pairwise_tables(cooc: &CooccurrenceTables, form: PairwiseForm) -> Result<Vec<PairTable>, CrfError> {
    let mut out = Vec::new();
    for i in 0..NUM_BINARY {
        for j in i + 1..NUM_BINARY {
            let joint = cooc.get(i, j);
            if joint.iter().flatten().any(|&p| p.is_nan() || p <= 0.0) {
                return Err(CrfError::ZeroCooccurrence { i, j });
            }
            let table = match form {
                PairwiseForm::JointProbability => joint,
                PairwiseForm::Lift => cooc.lift(i, j),
            };
            out.push(PairTable {
                i,
                j,
                cost: table.map(|row| row.map(|p| -p.ln())),
            });
        }
    }
    Ok(out)
}

pub fn build_energy(
    preds: &[AttributePrediction],
    cooc: &CooccurrenceTables,
    schema: &AttributeSchema,
    cfg: &CrfConfig,
) -> Result<EnergyModel, CrfError> {
    if preds.is_empty() {
        return Err(CrfError::Empty);
    }
    let specs = bin_specs(schema, &cfg.binning);
    for (frame, p) in preds.iter().enumerate() {
        p.validate(schema, &specs)
            .map_err(|source| CrfError::Prediction { frame, source })?;
    }
    let model = EnergyModel {
        frames: preds.iter().map(FrameUnaries::from_prediction).collect(),
        pairwise: pairwise_tables(cooc, cfg.pairwise)?,
        cliques: schema
            .constraints
            .iter()
            .map(|c| Clique::from_rule(c.id, &c.rule, schema))
            .collect(),
        specs,
        penalty: cfg.penalty,
        temporal: cfg.temporal,
    };
    let bound = model.soft_energy_bound();
    if bound >= model.penalty {
        return Err(CrfError::PenaltyTooSmall {
            bound,
            penalty: model.penalty,
        });
    }
    Ok(model)
}

/// Energy split by potential type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub unary: f64,
    pub pairwise: f64,
    pub conflicts: usize,
    pub temporal: f64,
}

impl EnergyBreakdown {
    pub fn total(&self, penalty: f64) -> f64 {
        self.unary + self.pairwise + self.conflicts as f64 * penalty + self.temporal
    }
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

impl EnergyModel {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn attributes(&self) -> impl Iterator<Item = AttributeRef> + '_ {
        let f = &self.frames[0];
        (0..NUM_BINARY)
            .map(AttributeRef::Binary)
            .chain((0..f.multiclass.len()).map(AttributeRef::Multiclass))
            .chain((0..f.continuous.len()).map(AttributeRef::Continuous))
    }

    /// Largest total of all non-penalty terms.
    pub fn soft_energy_bound(&self) -> f64 {
        let mut bound = 0.0;
        let pair_max: f64 = self.pairwise.iter().map(|p| max_of(&p.cost.concat())).sum();
        for f in &self.frames {
            bound += f.binary.iter().map(|u| max_of(u)).sum::<f64>();
            bound += f.multiclass.iter().map(|u| max_of(u)).sum::<f64>();
            bound += f.continuous.iter().map(|u| max_of(u)).sum::<f64>();
            bound += pair_max;
        }
        let t = &self.temporal;
        let f = &self.frames[0];
        let per_link = (NUM_BINARY + f.multiclass.len()) as f64 * t.lambda_disc
            + f.continuous.len() as f64 * t.lambda_cont * t.tau;
        bound + per_link * (self.frames.len() - 1) as f64
    }

    pub fn check_labeling(&self, frame: usize, l: &Labeling) -> Result<(), CrfError> {
        let f = &self.frames[frame];
        for (p, &c) in l.multiclass.iter().enumerate() {
            if c as usize >= f.multiclass[p].len() {
                return Err(CrfError::Dimension(format!("class {c} outside lane-count domain")));
            }
        }
        for (m, &b) in l.continuous.iter().enumerate() {
            let spec = &self.specs[m];
            let ok = match b {
                None => spec.inactive_bin,
                Some(j) => (j as usize) < spec.bins,
            };
            if !ok {
                return Err(CrfError::Dimension(format!("continuous attribute {m} label {b:?}")));
            }
        }
        Ok(())
    }

    /// Unary cost of one attribute label in `frame`.
    pub fn unary(&self, frame: usize, attr: AttributeRef, label: usize) -> f64 {
        self.frames[frame].cost(attr, label)
    }

    pub fn label(&self, l: &Labeling, attr: AttributeRef) -> usize {
        l.get(attr, &self.specs)
    }

    pub fn frame_breakdown(&self, frame: usize, l: &Labeling) -> EnergyBreakdown {
        let f = &self.frames[frame];
        let mut e = EnergyBreakdown::default();
        for i in 0..NUM_BINARY {
            e.unary += f.binary[i][usize::from(l.binary[i])];
        }
        for (p, &c) in l.multiclass.iter().enumerate() {
            e.unary += f.multiclass[p][c as usize];
        }
        for (m, &b) in l.continuous.iter().enumerate() {
            e.unary += f.continuous[m][cont_label(b, &self.specs[m])];
        }
        for pt in &self.pairwise {
            e.pairwise += pt.cost[usize::from(l.binary[pt.i])][usize::from(l.binary[pt.j])];
        }
        e.conflicts = self.cliques.iter().filter(|c| c.violated(l)).count();
        e
    }

    /// Energy of one frame without temporal terms.
    pub fn frame_energy(&self, frame: usize, l: &Labeling) -> f64 {
        self.frame_breakdown(frame, l).total(self.penalty)
    }

    /// Temporal cost between two consecutive frames.
    pub fn link_energy(&self, a: &Labeling, b: &Labeling) -> f64 {
        let t = &self.temporal;
        let mut e = 0.0;
        for (x, y) in a.binary.iter().zip(&b.binary) {
            e += t.discrete(usize::from(*x), usize::from(*y));
        }
        for (x, y) in a.multiclass.iter().zip(&b.multiclass) {
            e += t.discrete(*x as usize, *y as usize);
        }
        for (x, y) in a.continuous.iter().zip(&b.continuous) {
            e += t.continuous(*x, *y);
        }
        e
    }

    /// Temporal cost of one attribute between consecutive labels.
    pub fn link_cost(&self, attr: AttributeRef, a: &Labeling, b: &Labeling) -> f64 {
        let t = &self.temporal;
        match attr {
            AttributeRef::Continuous(m) => t.continuous(a.continuous[m], b.continuous[m]),
            _ => t.discrete(self.label(a, attr), self.label(b, attr)),
        }
    }

    pub fn breakdown(&self, seq: &[Labeling]) -> Result<EnergyBreakdown, CrfError> {
        if seq.len() != self.frames.len() {
            return Err(CrfError::Dimension(format!(
                "{} labelings for {} frames",
                seq.len(),
                self.frames.len()
            )));
        }
        let mut total = EnergyBreakdown::default();
        for (t, l) in seq.iter().enumerate() {
            self.check_labeling(t, l)?;
            let e = self.frame_breakdown(t, l);
            total.unary += e.unary;
            total.pairwise += e.pairwise;
            total.conflicts += e.conflicts;
        }
        for w in seq.windows(2) {
            total.temporal += self.link_energy(&w[0], &w[1]);
        }
        Ok(total)
    }
}

/// Total energy of a labeling sequence (one labeling per frame).
pub fn energy_of(model: &EnergyModel, seq: &[Labeling]) -> Result<f64, CrfError> {
    Ok(model.breakdown(seq)?.total(model.penalty))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{corrupt, corrupt_sequence, NoiseConfig};
    use crate::sampler::{sample_scene, PriorConfig};
    use crate::schema::{bin, cont, default_schema, validate};
    use proptest::prelude::*;

    fn uniform_prediction(schema: &AttributeSchema, specs: &[BinSpec]) -> AttributePrediction {
        use crate::probability::BinDistribution;
        AttributePrediction {
            binary: [0.5; NUM_BINARY],
            multiclass: std::array::from_fn(|p| {
                let k = schema.multiclass[p].classes as usize;
                vec![1.0 / k as f64; k]
            }),
            continuous: specs
                .iter()
                .map(|s| BinDistribution::from_unnormalized(vec![1.0; s.labels()]).unwrap())
                .collect(),
        }
    }

    fn noisy_model(seed: u64, frames: usize) -> (AttributeSchema, EnergyModel, crate::schema::SceneParams) {
        let schema = default_schema();
        let cfg = CrfConfig::default();
        let specs = bin_specs(&schema, &cfg.binning);
        let gt = sample_scene(&PriorConfig::default(), seed);
        let noise = NoiseConfig {
            seed,
            ..NoiseConfig::default()
        };
        let preds = corrupt_sequence(&gt, frames, &schema, &specs, &noise).unwrap();
        let cooc = crate::sampler::prior_cooccurrence(&PriorConfig::default(), 0, 2000);
        (schema.clone(), build_energy(&preds, &cooc, &schema, &cfg).unwrap(), gt)
    }

    #[test]
    fn uniform_model_is_flat_on_feasible_labelings() {
        let schema = default_schema();
        let cfg = CrfConfig::default();
        let specs = bin_specs(&schema, &cfg.binning);
        let model = build_energy(&[uniform_prediction(&schema, &specs)], &CooccurrenceTables::uniform(), &schema, &cfg).unwrap();
        let e0 = energy_of(&model, &[Labeling::canonical(0)]).unwrap();
        for seed in 0..50 {
            let l = Labeling::from_scene(&sample_scene(&PriorConfig::default(), seed), &specs);
            let e = energy_of(&model, &[l]).unwrap();
            assert!((e - e0).abs() < 1e-9);
        }
    }

    #[test]
    fn q1_violation_costs_the_penalty() {
        let (_, model, _) = noisy_model(1, 1);
        let mut l = Labeling::canonical(5);
        l.continuous[cont::DIST_SIDE_ROAD_LEFT] = Some(3);
        assert!(energy_of(&model, &[l]).unwrap() >= DEFAULT_PENALTY);
    }

    #[test]
    fn hand_summed_toy_model() {
        // A model where only three attributes carry non-constant costs:
        // side_road_left, dist_side_road_left and crosswalk_left.
        let schema = default_schema();
        let cfg = CrfConfig::default();
        let specs = bin_specs(&schema, &cfg.binning);
        let mut pred = uniform_prediction(&schema, &specs);
        pred.binary[bin::SIDE_ROAD_LEFT] = 0.8;
        pred.binary[bin::CROSSWALK_LEFT] = 0.25;
        let mut w = vec![1.0; specs[cont::DIST_SIDE_ROAD_LEFT].labels()];
        w[0] = 63.0; // inactive mass 63/127
        pred.continuous[cont::DIST_SIDE_ROAD_LEFT] = crate::probability::BinDistribution::from_unnormalized(w).unwrap();
        let mut cooc = CooccurrenceTables::uniform();
        cooc.set(bin::SIDE_ROAD_LEFT, bin::CROSSWALK_LEFT, [[0.4, 0.1], [0.2, 0.3]]);
        let model = build_energy(&[pred], &cooc, &schema, &cfg).unwrap();

        let base = Labeling::canonical(0);
        let e_base = energy_of(&model, &[base.clone()]).unwrap();
        let mut l = base.clone();
        l.binary[bin::SIDE_ROAD_LEFT] = true;
        l.binary[bin::CROSSWALK_LEFT] = true;
        l.continuous[cont::DIST_SIDE_ROAD_LEFT] = Some(7);
        // width_left stays inactive: q2 fires once
        let lift = |a: usize, b: usize| {
            let m: [[f64; 2]; 2] = [[0.4, 0.1], [0.2, 0.3]];
            let pi = [0.5, 0.5];
            let pj = [0.6, 0.4];
            -(m[a][b] / (pi[a] * pj[b])).ln()
        };
        let expected_delta = (-(0.8f64).ln() + (0.2f64).ln())
            + (-(0.25f64).ln() + (0.75f64).ln())
            + (-(1.0f64 / 127.0).ln() + (63.0f64 / 127.0).ln())
            + (lift(1, 1) - lift(0, 0))
            + DEFAULT_PENALTY;
        let e = energy_of(&model, &[l]).unwrap();
        assert!((e - e_base - expected_delta).abs() < 1e-6, "{} vs {}", e - e_base, expected_delta);
    }

    #[test]
    fn temporal_terms() {
        let (_, model, gt) = noisy_model(3, 4);
        let l = Labeling::from_scene(&gt, &model.specs);
        let seq = vec![l.clone(); 4];
        assert_eq!(model.breakdown(&seq).unwrap().temporal, 0.0);
        let mut alt = seq.clone();
        alt[1].binary[bin::CROSSWALK_NEAR] ^= true;
        alt[2].multiclass[1] = (alt[2].multiclass[1] + 1) % 7;
        // changes: 0->1, 1->2 (binary), 1->2, 2->3 (class) = 4
        assert_eq!(model.breakdown(&alt).unwrap().temporal, 4.0 * model.temporal.lambda_disc);
    }

    #[test]
    fn dimension_errors() {
        let (_, model, gt) = noisy_model(3, 2);
        let l = Labeling::from_scene(&gt, &model.specs);
        assert!(energy_of(&model, &[l.clone()]).is_err());
        let mut bad = l.clone();
        bad.multiclass[0] = 9;
        assert!(energy_of(&model, &[l, bad]).is_err());
    }

    #[test]
    fn zero_cooccurrence_rejected() {
        let schema = default_schema();
        let cfg = CrfConfig::default();
        let specs = bin_specs(&schema, &cfg.binning);
        let mut cooc = CooccurrenceTables::uniform();
        cooc.set(0, 1, [[0.5, 0.5], [0.0, 0.0]]);
        assert_eq!(
            build_energy(&[uniform_prediction(&schema, &specs)], &cooc, &schema, &cfg),
            Err(CrfError::ZeroCooccurrence { i: 0, j: 1 })
        );
    }

    /// Independent energy: unaries straight from the prediction, the
    /// co-occurrence lift recomputed by hand, conflicts via `validate`.
    fn naive_energy(pred: &AttributePrediction, cooc: &CooccurrenceTables, l: &Labeling, specs: &[BinSpec], schema: &AttributeSchema) -> f64 {
        let clamp = |p: f64| -(p.max(1e-9).min(1.0 - 1e-9)).ln();
        let mut e = 0.0;
        for i in 0..NUM_BINARY {
            e += clamp(if l.binary[i] { pred.binary[i] } else { 1.0 - pred.binary[i] });
        }
        for p in 0..2 {
            e += clamp(pred.multiclass[p][l.multiclass[p] as usize]);
        }
        for m in 0..l.continuous.len() {
            e += clamp(pred.continuous[m].weights()[l.get(AttributeRef::Continuous(m), specs)]);
        }
        for i in 0..NUM_BINARY {
            for j in 0..NUM_BINARY {
                if i < j {
                    let t = cooc.get(i, j);
                    let (a, b) = (usize::from(l.binary[i]), usize::from(l.binary[j]));
                    let pi = t[a][0] + t[a][1];
                    let pj = t[0][b] + t[1][b];
                    e -= (t[a][b] / (pi * pj)).ln();
                }
            }
        }
        let conflicts = validate(&l.to_scene(specs), schema).len();
        e + conflicts as f64 * DEFAULT_PENALTY
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn decomposes_like_naive_sum(seed in 0u64..10_000, flips in proptest::collection::vec(any::<bool>(), 14)) {
            let schema = default_schema();
            let cfg = CrfConfig::default();
            let specs = bin_specs(&schema, &cfg.binning);
            let gt = sample_scene(&PriorConfig::default(), seed);
            let pred = corrupt(&gt, &schema, &specs, &NoiseConfig { seed, ..NoiseConfig::default() }).unwrap();
            let cooc = crate::sampler::prior_cooccurrence(&PriorConfig::default(), seed, 500);
            let model = build_energy(&[pred.clone()], &cooc, &schema, &cfg).unwrap();
            let mut l = pred.argmax_labeling(&specs);
            for (b, f) in l.binary.iter_mut().zip(&flips) {
                *b ^= *f;
            }
            let e = energy_of(&model, &[l.clone()]).unwrap();
            let naive = naive_energy(&pred, &cooc, &l, &specs, &schema);
            prop_assert!((e - naive).abs() <= 1e-6 * naive.abs().max(1.0), "{} vs {}", e, naive);
            let b = model.breakdown(&[l.clone()]).unwrap();
            prop_assert_eq!(b.conflicts == 0, validate(&l.to_scene(&specs), &schema).is_feasible());
            prop_assert_eq!(e < DEFAULT_PENALTY, b.conflicts == 0);
        }

        #[test]
        fn flip_delta_is_local(seed in 0u64..10_000, i in 0usize..14) {
            let (_, model, gt) = noisy_model(seed, 1);
            let l = Labeling::from_scene(&gt, &model.specs);
            let mut f = l.clone();
            f.binary[i] ^= true;
            let attr = AttributeRef::Binary(i);
            let unary = model.unary(0, attr, usize::from(f.binary[i])) - model.unary(0, attr, usize::from(l.binary[i]));
            let pair: f64 = model.pairwise.iter().filter(|p| p.i == i || p.j == i).map(|p| {
                p.cost[usize::from(f.binary[p.i])][usize::from(f.binary[p.j])] - p.cost[usize::from(l.binary[p.i])][usize::from(l.binary[p.j])]
            }).sum();
            let cliques: f64 = model.cliques.iter().filter(|c| c.involves(attr)).map(|c| {
                (f64::from(u8::from(c.violated(&f))) - f64::from(u8::from(c.violated(&l)))) * model.penalty
            }).sum();
            let delta = energy_of(&model, &[f]).unwrap() - energy_of(&model, &[l]).unwrap();
            prop_assert!((delta - (unary + pair + cliques)).abs() < 1e-6);
        }
    }
}
