//! Sequence inference: per-frame solutions refined by exact chain moves.
//!
//! Each move picks one attribute group (a binary with its dependent values,
//! a lane count with its widths, or a single continuous attribute) and
//! re-chooses its state in every frame at once by dynamic programming over
//! the chain, all other attributes fixed. Candidate states per frame always
//! include the current one, so no move raises the energy.

use serde::{Deserialize, Serialize};

use super::solver::{FrameContext, SearchSpace, SolveReport, SolverConfig, Structure};
use super::InferenceError;
use crate::crf::{energy_of, EnergyModel};
use crate::labeling::{cont_bin, Labeling};
use crate::schema::{AttributeRef, NUM_BINARY, NUM_CONTINUOUS, NUM_MULTICLASS};

/// Upper bound on sweeps over all attribute groups.
pub const TEMPORAL_PASSES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalReport {
    pub frames: Vec<SolveReport>,
    /// Sequence energy of the independent per-frame solutions.
    pub initial_energy: f64,
    pub final_energy: f64,
    pub passes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalSolution {
    pub labelings: Vec<Labeling>,
    pub report: TemporalReport,
}

/// Chain minimization. `unary[t][c]` is the cost of candidate `c` in frame
/// `t`, `pair(t, a, b)` the link cost between candidate `a` at `t` and `b`
/// at `t + 1`. Returns the chosen candidate per frame and its total.
pub fn viterbi(unary: &[Vec<f64>], pair: impl Fn(usize, usize, usize) -> f64) -> (Vec<usize>, f64) {
    let frames = unary.len();
    let mut cost = unary[0].clone();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(frames);
    back.push(Vec::new());
    for t in 1..frames {
        let mut next = vec![f64::INFINITY; unary[t].len()];
        let mut arg = vec![0; unary[t].len()];
        for (b, u) in unary[t].iter().enumerate() {
            for (a, c) in cost.iter().enumerate() {
                let v = c + pair(t - 1, a, b);
                if v < next[b] {
                    next[b] = v;
                    arg[b] = a;
                }
            }
            next[b] += u;
        }
        cost = next;
        back.push(arg);
    }
    let (mut k, mut total) = (0, f64::INFINITY);
    for (c, &v) in cost.iter().enumerate() {
        if v < total {
            (k, total) = (c, v);
        }
    }
    let mut path = vec![0; frames];
    for t in (0..frames).rev() {
        path[t] = k;
        if t > 0 {
            k = back[t][k];
        }
    }
    (path, total)
}

enum Group {
    Controller(AttributeRef),
    Single(usize),
}

impl Group {
    fn attributes(&self, st: &Structure) -> Vec<AttributeRef> {
        match *self {
            Group::Controller(a) => std::iter::once(a)
                .chain(st.dependents(a).iter().map(|&m| AttributeRef::Continuous(m)))
                .collect(),
            Group::Single(m) => vec![AttributeRef::Continuous(m)],
        }
    }
}

struct Sequence<'a> {
    model: &'a EnergyModel,
    space: &'a SearchSpace,
    st: &'a Structure,
}

impl Sequence<'_> {
    fn ctx(&self, frame: usize) -> FrameContext<'_> {
        FrameContext {
            model: self.model,
            frame,
            space: self.space,
            st: self.st,
        }
    }

    /// Candidate labelings of frame `t` for a controller group: the current
    /// one, then every allowed controller value with settled dependents,
    /// optionally carrying over active dependent bins from other frames.
    fn controller_candidates(&self, ctrl: AttributeRef, t: usize, seq: &[Labeling]) -> Vec<Labeling> {
        let ctx = self.ctx(t);
        let mut out = vec![seq[t].clone()];
        for &v in self.space.allowed(ctrl) {
            let mut base = seq[t].clone();
            base.set(ctrl, v, &self.model.specs);
            ctx.settle_dependents(ctrl, &mut base);
            for (u, other) in seq.iter().enumerate() {
                let mut cand = base.clone();
                if u != t {
                    for &m in self.st.dependents(ctrl) {
                        if cand.continuous[m].is_some() && other.continuous[m].is_some() {
                            cand.continuous[m] = other.continuous[m];
                        }
                    }
                }
                if self.space.contains(self.model, &cand) && !out.contains(&cand) {
                    out.push(cand);
                }
            }
        }
        out
    }

    /// Applies one chain move; returns whether the sequence changed.
    fn step(&self, group: &Group, seq: &mut [Labeling]) -> bool {
        let frames = seq.len();
        let attrs = group.attributes(self.st);
        let (cands, unary): (Vec<Vec<Labeling>>, Vec<Vec<f64>>) = (0..frames)
            .map(|t| {
                let ctx = self.ctx(t);
                match *group {
                    Group::Controller(ctrl) => {
                        let c = self.controller_candidates(ctrl, t, seq);
                        let u = c.iter().map(|l| ctx.energy(l)).collect();
                        (c, u)
                    }
                    Group::Single(m) => {
                        let attr = AttributeRef::Continuous(m);
                        let current = self.model.label(&seq[t], attr);
                        let labels =
                            std::iter::once(current).chain(self.space.allowed(attr).iter().copied().filter(|&x| x != current));
                        let mut c = Vec::new();
                        let mut u = Vec::new();
                        for label in labels {
                            let mut l = seq[t].clone();
                            l.continuous[m] = cont_bin(label, &self.model.specs[m]);
                            u.push(ctx.energy(&l));
                            c.push(l);
                        }
                        (c, u)
                    }
                }
            })
            .unzip();
        let pair = |t: usize, a: usize, b: usize| -> f64 {
            attrs
                .iter()
                .map(|&attr| self.model.link_cost(attr, &cands[t][a], &cands[t + 1][b]))
                .sum()
        };
        let current: f64 = unary.iter().map(|u| u[0]).sum::<f64>() + (0..frames - 1).map(|t| pair(t, 0, 0)).sum::<f64>();
        let (path, best) = viterbi(&unary, pair);
        if best < current && path.iter().any(|&c| c != 0) {
            for (t, &c) in path.iter().enumerate() {
                seq[t] = cands[t][c].clone();
            }
            true
        } else {
            false
        }
    }
}

/// Minimizes the full sequence energy of a multi-frame model.
pub fn minimize_temporal(model: &EnergyModel, cfg: &SolverConfig) -> Result<TemporalSolution, InferenceError> {
    let st = Structure::new(model);
    let space = SearchSpace::full(model);
    let frames = model.num_frames();
    let mut seq = Vec::with_capacity(frames);
    let mut reports = Vec::with_capacity(frames);
    for t in 0..frames {
        let ctx = FrameContext {
            model,
            frame: t,
            space: &space,
            st: &st,
        };
        let sol = ctx.solve(&ctx.unary_argmin(), cfg);
        seq.push(sol.labeling);
        reports.push(sol.report);
    }
    let initial_energy = energy_of(model, &seq)?;
    let mut passes = 0;
    if frames > 1 && !model.temporal.is_zero() {
        let sequence = Sequence {
            model,
            space: &space,
            st: &st,
        };
        let mut groups: Vec<Group> = (0..NUM_BINARY)
            .map(|i| Group::Controller(AttributeRef::Binary(i)))
            .chain((0..NUM_MULTICLASS).map(|p| Group::Controller(AttributeRef::Multiclass(p))))
            .collect();
        groups.extend((0..NUM_CONTINUOUS).map(Group::Single));
        while passes < TEMPORAL_PASSES {
            passes += 1;
            let mut changed = false;
            for g in &groups {
                changed |= sequence.step(g, &mut seq);
            }
            if !changed {
                break;
            }
        }
    }
    let final_energy = energy_of(model, &seq)?;
    Ok(TemporalSolution {
        labelings: seq,
        report: TemporalReport {
            frames: reports,
            initial_energy,
            final_energy,
            passes,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crf::{build_energy, CrfConfig, TemporalWeights};
    use crate::inference::solver::{minimize_energy, unary_argmin};
    use crate::noise::{corrupt_sequence, NoiseConfig};
    use crate::prediction::AttributePrediction;
    use crate::probability::bin_specs;
    use crate::sampler::{prior_cooccurrence, sample_scene, PriorConfig};
    use crate::schema::{bin, default_schema, validate};

    fn sequence(seed: u64, frames: usize, noise: NoiseConfig) -> Vec<AttributePrediction> {
        let schema = default_schema();
        let specs = bin_specs(&schema, &Default::default());
        let gt = sample_scene(&PriorConfig::default(), seed);
        corrupt_sequence(&gt, frames, &schema, &specs, &NoiseConfig { seed, ..noise }).unwrap()
    }

    fn model(preds: &[AttributePrediction], temporal: TemporalWeights) -> EnergyModel {
        let cooc = prior_cooccurrence(&PriorConfig::default(), 0, 2000);
        let cfg = CrfConfig {
            temporal,
            ..CrfConfig::default()
        };
        build_energy(preds, &cooc, &default_schema(), &cfg).unwrap()
    }

    #[test]
    fn single_frame_equals_minimize_energy() {
        let preds = sequence(4, 1, NoiseConfig::default());
        let m = model(&preds, TemporalWeights::default());
        let cfg = SolverConfig::default();
        let t = minimize_temporal(&m, &cfg).unwrap();
        let s = minimize_energy(&m, &unary_argmin(&m, 0), &cfg).unwrap();
        assert_eq!(t.labelings, vec![s.labeling]);
    }

    #[test]
    fn zero_weights_reproduce_per_frame_results() {
        let preds = sequence(5, 4, NoiseConfig::default());
        let zero = TemporalWeights {
            lambda_disc: 0.0,
            lambda_cont: 0.0,
            tau: 10.0,
        };
        let m = model(&preds, zero);
        let cfg = SolverConfig::default();
        let t = minimize_temporal(&m, &cfg).unwrap();
        for (k, p) in preds.iter().enumerate() {
            let single = model(std::slice::from_ref(p), zero);
            let s = minimize_energy(&single, &unary_argmin(&single, 0), &cfg).unwrap();
            assert_eq!(t.labelings[k], s.labeling);
        }
        assert_eq!(t.report.passes, 0);
    }

    #[test]
    fn outlier_frame_is_smoothed() {
        let quiet = NoiseConfig {
            epsilon: 0.001,
            sigma_n: 0.0,
            ..NoiseConfig::default()
        };
        let mut preds = sequence(6, 5, quiet);
        let truth = preds[0].binary[bin::CROSSWALK_NEAR] > 0.5;
        preds[2].binary[bin::CROSSWALK_NEAR] = if truth { 0.05 } else { 0.95 };
        let weights = TemporalWeights {
            lambda_disc: 5.0,
            ..TemporalWeights::default()
        };
        let m = model(&preds, weights);
        let sol = minimize_temporal(&m, &SolverConfig::default()).unwrap();
        assert!(sol.labelings.iter().all(|l| l.binary[bin::CROSSWALK_NEAR] == truth));
        assert!(sol.report.final_energy < sol.report.initial_energy);
        // chain brute force over this attribute, everything else as returned
        let mut best = f64::INFINITY;
        for code in 0..32u32 {
            let mut seq = sol.labelings.clone();
            for (t, l) in seq.iter_mut().enumerate() {
                l.binary[bin::CROSSWALK_NEAR] = code >> t & 1 == 1;
            }
            best = best.min(energy_of(&m, &seq).unwrap());
        }
        assert!((sol.report.final_energy - best).abs() < 1e-9);
    }

    #[test]
    fn never_worse_than_per_frame_and_feasible() {
        for seed in 0..6 {
            let preds = sequence(seed, 5, NoiseConfig::default());
            let m = model(&preds, TemporalWeights::default());
            let sol = minimize_temporal(&m, &SolverConfig::default()).unwrap();
            assert!(sol.report.final_energy <= sol.report.initial_energy);
            for l in &sol.labelings {
                assert!(validate(&l.to_scene(&m.specs), &default_schema()).is_feasible());
            }
        }
    }

    #[test]
    fn viterbi_matches_enumeration() {
        let unary = vec![vec![0.0, 1.0, 2.5], vec![2.0, 0.0, 0.3], vec![0.1, 0.4, 0.0], vec![1.0, 0.0, 1.0]];
        let pair = |t: usize, a: usize, b: usize| (a as f64 - b as f64).abs() * (0.3 + t as f64 * 0.2);
        let (path, total) = viterbi(&unary, pair);
        let mut best = f64::INFINITY;
        for code in 0..81 {
            let p: Vec<usize> = (0..4).map(|t| code / 3usize.pow(t) % 3).collect();
            let e: f64 = (0..4).map(|t| unary[t][p[t]]).sum::<f64>() + (0..3).map(|t| pair(t, p[t], p[t + 1])).sum::<f64>();
            best = best.min(e);
        }
        assert!((total - best).abs() < 1e-12);
        let e: f64 = (0..4).map(|t| unary[t][path[t]]).sum::<f64>() + (0..3).map(|t| pair(t, path[t], path[t + 1])).sum::<f64>();
        assert!((e - total).abs() < 1e-12);
    }
}
