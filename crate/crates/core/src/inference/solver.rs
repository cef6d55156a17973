//! Single-frame minimization by block coordinate descent.
//!
//! Continuous attributes whose cliques involve only one controlling binary
//! or lane count are eliminated by min-marginalization, so each block is
//! solved against the exact frame energy:
//! (a) all binaries at once with QPBO, lane counts and free-standing
//!     continuous values held fixed;
//! (b) each lane count jointly with its lane widths;
//! (c) each remaining continuous attribute on its own.
//! Steps that would raise the energy are rejected, and the best of several
//! starts is returned.

use rand::Rng;
use rand_distr::Gumbel;
use serde::{Deserialize, Serialize};

use super::qpbo::{BinaryProblem, Fill};
use super::InferenceError;
use crate::crf::{Clique, EnergyModel};
use crate::labeling::{cont_bin, Labeling};
use crate::rng::{split, SplitMix64};
use crate::schema::{AttributeRef, NUM_ATTRIBUTES, NUM_BINARY, NUM_CONTINUOUS, NUM_MULTICLASS};

/// Position of an attribute in canonical order.
pub fn flat_index(attr: AttributeRef) -> usize {
    match attr {
        AttributeRef::Binary(i) => i,
        AttributeRef::Multiclass(p) => NUM_BINARY + p,
        AttributeRef::Continuous(m) => NUM_BINARY + NUM_MULTICLASS + m,
    }
}

/// Inverse of [`flat_index`].
pub fn attribute_at(index: usize) -> AttributeRef {
    if index < NUM_BINARY {
        AttributeRef::Binary(index)
    } else if index < NUM_BINARY + NUM_MULTICLASS {
        AttributeRef::Multiclass(index - NUM_BINARY)
    } else {
        AttributeRef::Continuous(index - NUM_BINARY - NUM_MULTICLASS)
    }
}

/// Allowed labels per attribute (domain indices, ascending).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    allowed: Vec<Vec<usize>>,
}

impl SearchSpace {
    pub fn full(model: &EnergyModel) -> Self {
        let f = &model.frames[0];
        SearchSpace {
            allowed: (0..NUM_ATTRIBUTES).map(|k| (0..f.domain(attribute_at(k))).collect()).collect(),
        }
    }

    /// Every attribute frozen at its label in `base` except `free`.
    pub fn frozen_except(model: &EnergyModel, base: &Labeling, free: &[AttributeRef]) -> Self {
        let mut space = Self::full(model);
        for k in 0..NUM_ATTRIBUTES {
            let attr = attribute_at(k);
            if !free.contains(&attr) {
                space.allowed[k] = vec![model.label(base, attr)];
            }
        }
        space
    }

    pub fn allowed(&self, attr: AttributeRef) -> &[usize] {
        &self.allowed[flat_index(attr)]
    }

    pub fn is_free(&self, attr: AttributeRef) -> bool {
        self.allowed(attr).len() > 1
    }

    /// Restricts an attribute to `labels`, which must be non-empty and
    /// inside its domain.
    pub fn restrict(&mut self, model: &EnergyModel, attr: AttributeRef, mut labels: Vec<usize>) -> Result<(), InferenceError> {
        labels.sort_unstable();
        labels.dedup();
        let domain = model.frames[0].domain(attr);
        if labels.is_empty() || labels.iter().any(|&l| l >= domain) {
            return Err(InferenceError::Domain(format!("{attr:?}: {labels:?} not a subset of 0..{domain}")));
        }
        self.allowed[flat_index(attr)] = labels;
        Ok(())
    }

    /// Number of labelings in the space, saturating at `u128::MAX`.
    pub fn size(&self) -> u128 {
        self.allowed.iter().fold(1u128, |acc, a| acc.saturating_mul(a.len() as u128))
    }

    pub fn contains(&self, model: &EnergyModel, l: &Labeling) -> bool {
        (0..NUM_ATTRIBUTES).all(|k| self.allowed[k].binary_search(&model.label(l, attribute_at(k))).is_ok())
    }

    /// Moves every attribute outside its allowed set to the nearest allowed
    /// label (the lower one on ties).
    pub fn project(&self, model: &EnergyModel, l: &Labeling) -> Labeling {
        let mut out = l.clone();
        for (k, allowed) in self.allowed.iter().enumerate() {
            let attr = attribute_at(k);
            let cur = model.label(l, attr);
            if allowed.binary_search(&cur).is_err() {
                let near = *allowed.iter().min_by_key(|&&a| a.abs_diff(cur)).expect("non-empty domain");
                out.set(attr, near, &model.specs);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Perturbed-argmax starts in addition to the given initialization.
    pub restarts: usize,
    pub seed: u64,
    pub fill: Fill,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 50,
            restarts: 10,
            seed: 0,
            fill: Fill::Exhaustive { max_unlabeled: 16 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Descent passes of the winning start.
    pub iterations: usize,
    pub restarts: usize,
    /// 0 for the given initialization, 1 for the canonical layout, then the
    /// perturbed starts.
    pub best_start: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameSolution {
    pub labeling: Labeling,
    pub report: SolveReport,
}

/// Which attributes each clique touches, and which continuous attributes
/// can be eliminated through their single controller.
#[derive(Clone, Debug)]
pub(crate) struct Structure {
    pub cliques_of: Vec<Vec<usize>>,
    pub controller: [Option<AttributeRef>; NUM_CONTINUOUS],
    pub dependents: Vec<Vec<usize>>,
}

impl Structure {
    pub fn new(model: &EnergyModel) -> Self {
        let mut cliques_of = vec![Vec::new(); NUM_ATTRIBUTES];
        for (c, clique) in model.cliques.iter().enumerate() {
            for v in &clique.vars {
                cliques_of[flat_index(*v)].push(c);
            }
        }
        let mut controller = [None; NUM_CONTINUOUS];
        let mut dependents = vec![Vec::new(); NUM_ATTRIBUTES];
        for (m, ctrl) in controller.iter_mut().enumerate() {
            let me = AttributeRef::Continuous(m);
            let mut others: Vec<AttributeRef> = cliques_of[flat_index(me)]
                .iter()
                .flat_map(|&c| model.cliques[c].vars.iter().copied())
                .filter(|v| *v != me)
                .collect();
            others.sort();
            others.dedup();
            if let [only] = others[..] {
                if !matches!(only, AttributeRef::Continuous(_)) {
                    *ctrl = Some(only);
                    dependents[flat_index(only)].push(m);
                }
            }
        }
        Structure {
            cliques_of,
            controller,
            dependents,
        }
    }

    pub fn dependents(&self, attr: AttributeRef) -> &[usize] {
        &self.dependents[flat_index(attr)]
    }

    fn is_binary_dependent(&self, attr: AttributeRef) -> bool {
        matches!(attr, AttributeRef::Continuous(m) if matches!(self.controller[m], Some(AttributeRef::Binary(_))))
    }
}

/// Reduced clique state of a domain label.
fn reduced_of(model: &EnergyModel, attr: AttributeRef, label: usize) -> usize {
    match attr {
        AttributeRef::Continuous(m) => usize::from(!model.specs[m].is_inactive_label(label)),
        _ => label,
    }
}

/// Lowest-cost candidate, keeping `current` when it ties the minimum.
fn argmin_keep(current: usize, candidates: impl Iterator<Item = (usize, f64)>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    let mut current_cost = None;
    for (label, cost) in candidates {
        if label == current {
            current_cost = Some(cost);
        }
        if cost < best.1 {
            best = (label, cost);
        }
    }
    match current_cost {
        Some(c) if c <= best.1 => (current, c),
        _ => best,
    }
}

/// One frame of a model together with a search space.
pub(crate) struct FrameContext<'a> {
    pub model: &'a EnergyModel,
    pub frame: usize,
    pub space: &'a SearchSpace,
    pub st: &'a Structure,
}

impl FrameContext<'_> {
    pub fn energy(&self, l: &Labeling) -> f64 {
        self.model.frame_energy(self.frame, l)
    }

    fn unary(&self, attr: AttributeRef, label: usize) -> f64 {
        self.model.unary(self.frame, attr, label)
    }

    fn clique_cost(&self, c: &Clique, l: &Labeling, overrides: &[(AttributeRef, usize)]) -> f64 {
        let violated = c.violated_with(|a| match overrides.iter().find(|(o, _)| *o == a) {
            Some(&(_, state)) => state,
            None => Clique::reduced(a, l),
        });
        if violated {
            self.model.penalty
        } else {
            0.0
        }
    }

    /// Cost of an attribute's label counting its unary and every clique it
    /// touches, with the controller optionally overridden.
    fn local_cost(&self, attr: AttributeRef, label: usize, l: &Labeling, ctrl: Option<(AttributeRef, usize)>) -> f64 {
        let mut overrides = vec![(attr, reduced_of(self.model, attr, label))];
        overrides.extend(ctrl);
        self.unary(attr, label)
            + self.st.cliques_of[flat_index(attr)]
                .iter()
                .map(|&c| self.clique_cost(&self.model.cliques[c], l, &overrides))
                .sum::<f64>()
    }

    /// Best label and min-marginal cost of dependent `m` with its
    /// controller at `state`.
    pub fn dependent_best(&self, m: usize, state: usize, l: &Labeling) -> (usize, f64) {
        let attr = AttributeRef::Continuous(m);
        let ctrl = self.st.controller[m].expect("dependent attribute");
        let current = self.model.label(l, attr);
        argmin_keep(
            current,
            self.space
                .allowed(attr)
                .iter()
                .map(|&label| (label, self.local_cost(attr, label, l, Some((ctrl, state))))),
        )
    }

    /// Sets every dependent of `ctrl` to its best label given the
    /// controller's value in `l`.
    pub fn settle_dependents(&self, ctrl: AttributeRef, l: &mut Labeling) {
        let state = self.model.label(l, ctrl);
        for &m in self.st.dependents(ctrl) {
            let (label, _) = self.dependent_best(m, state, l);
            l.continuous[m] = cont_bin(label, &self.model.specs[m]);
        }
    }

    fn binary_block(&self, l: &Labeling, fill: Fill) -> Labeling {
        let model = self.model;
        let free: Vec<usize> = (0..NUM_BINARY)
            .filter(|&i| self.space.is_free(AttributeRef::Binary(i)))
            .collect();
        let mut var_of = [None; NUM_BINARY];
        for (k, &i) in free.iter().enumerate() {
            var_of[i] = Some(k);
        }
        let mut prob = BinaryProblem::new(free.len());
        for (k, &i) in free.iter().enumerate() {
            let attr = AttributeRef::Binary(i);
            let cost = [0, 1].map(|v| {
                self.unary(attr, v)
                    + self
                        .st
                        .dependents(attr)
                        .iter()
                        .map(|&m| self.dependent_best(m, v, l).1)
                        .sum::<f64>()
            });
            prob.add_unary(k, cost);
        }
        for pt in &model.pairwise {
            let (xi, xj) = (usize::from(l.binary[pt.i]), usize::from(l.binary[pt.j]));
            match (var_of[pt.i], var_of[pt.j]) {
                (Some(a), Some(b)) => prob.add_pairwise(a, b, pt.cost),
                (Some(a), None) => prob.add_unary(a, [pt.cost[0][xj], pt.cost[1][xj]]),
                (None, Some(b)) => prob.add_unary(b, pt.cost[xi]),
                (None, None) => {}
            }
        }
        for c in &model.cliques {
            if c.vars.iter().any(|&a| self.st.is_binary_dependent(a)) {
                continue;
            }
            let vars: Vec<AttributeRef> = c
                .vars
                .iter()
                .copied()
                .filter(|a| matches!(a, AttributeRef::Binary(i) if var_of[*i].is_some()))
                .collect();
            if vars.is_empty() {
                continue;
            }
            assert!(vars.len() <= 3, "clique {:?} has more than three free binaries", c.id);
            let table: Vec<f64> = (0..1usize << vars.len())
                .map(|bits| {
                    let overrides: Vec<(AttributeRef, usize)> = vars
                        .iter()
                        .enumerate()
                        .map(|(k, &a)| (a, bits >> (vars.len() - 1 - k) & 1))
                        .collect();
                    self.clique_cost(c, l, &overrides)
                })
                .collect();
            if table.iter().any(|&x| x != 0.0) {
                let idx: Vec<usize> = vars
                    .iter()
                    .map(|a| match a {
                        AttributeRef::Binary(i) => var_of[*i].expect("free binary"),
                        _ => unreachable!(),
                    })
                    .collect();
                prob.add_factor(&idx, &table);
            }
        }
        let hint: Vec<bool> = free.iter().map(|&i| l.binary[i]).collect();
        let sol = prob.solve(&hint, fill);
        let mut out = l.clone();
        for (k, &i) in free.iter().enumerate() {
            out.binary[i] = sol.labels[k];
        }
        for i in 0..NUM_BINARY {
            self.settle_dependents(AttributeRef::Binary(i), &mut out);
        }
        out
    }

    fn multiclass_block(&self, l: &Labeling) -> Labeling {
        let mut out = l.clone();
        for p in 0..NUM_MULTICLASS {
            let attr = AttributeRef::Multiclass(p);
            let deps = self.st.dependents(attr);
            let own: Vec<usize> = self.st.cliques_of[flat_index(attr)]
                .iter()
                .copied()
                .filter(|&c| {
                    !self.model.cliques[c]
                        .vars
                        .iter()
                        .any(|v| matches!(v, AttributeRef::Continuous(m) if deps.contains(m)))
                })
                .collect();
            let cost = |k: usize| {
                self.unary(attr, k)
                    + deps.iter().map(|&m| self.dependent_best(m, k, &out).1).sum::<f64>()
                    + own
                        .iter()
                        .map(|&c| self.clique_cost(&self.model.cliques[c], &out, &[(attr, k)]))
                        .sum::<f64>()
            };
            let current = out.multiclass[p] as usize;
            let (k, _) = argmin_keep(current, self.space.allowed(attr).iter().map(|&k| (k, cost(k))));
            out.multiclass[p] = k as u8;
            self.settle_dependents(attr, &mut out);
        }
        out
    }

    fn continuous_block(&self, l: &Labeling) -> Labeling {
        let mut out = l.clone();
        for m in 0..NUM_CONTINUOUS {
            if self.st.controller[m].is_some() {
                continue;
            }
            let attr = AttributeRef::Continuous(m);
            let current = self.model.label(&out, attr);
            let (label, _) = argmin_keep(
                current,
                self.space
                    .allowed(attr)
                    .iter()
                    .map(|&label| (label, self.local_cost(attr, label, &out, None))),
            );
            out.continuous[m] = cont_bin(label, &self.model.specs[m]);
        }
        out
    }

    /// Descent from `start` (assumed inside the space); returns the final
    /// labeling, its energy and the number of passes.
    pub fn descend(&self, start: Labeling, cfg: &SolverConfig) -> (Labeling, f64, usize) {
        let mut l = start;
        let mut e = self.energy(&l);
        let mut passes = 0;
        while passes < cfg.max_iterations {
            passes += 1;
            let mut improved = false;
            for block in 0..3 {
                let cand = match block {
                    0 => self.binary_block(&l, cfg.fill),
                    1 => self.multiclass_block(&l),
                    _ => self.continuous_block(&l),
                };
                let ce = self.energy(&cand);
                if ce < e {
                    l = cand;
                    e = ce;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        (l, e, passes)
    }

    /// Per-attribute unary argmin over the space (lowest label on ties).
    pub fn unary_argmin(&self) -> Labeling {
        self.perturbed_argmin(None)
    }

    fn perturbed_argmin(&self, mut rng: Option<&mut SplitMix64>) -> Labeling {
        let gumbel = Gumbel::new(0.0, 1.0).expect("unit Gumbel");
        let mut l = Labeling::canonical(0);
        for k in 0..NUM_ATTRIBUTES {
            let attr = attribute_at(k);
            let mut best = (usize::MAX, f64::INFINITY);
            for &label in self.space.allowed(attr) {
                let noise = rng.as_deref_mut().map_or(0.0, |r| r.sample(gumbel));
                let cost = self.unary(attr, label) - noise;
                if cost < best.1 {
                    best = (label, cost);
                }
            }
            l.set(attr, best.0, &self.model.specs);
        }
        l
    }

    pub fn solve(&self, init: &Labeling, cfg: &SolverConfig) -> FrameSolution {
        let initial_energy = self.energy(init);
        let mut starts = vec![self.space.project(self.model, init), self.space.project(self.model, &Labeling::canonical(0))];
        for r in 0..cfg.restarts {
            let mut rng = SplitMix64::new(split(cfg.seed, r as u64));
            starts.push(self.perturbed_argmin(Some(&mut rng)));
        }
        let mut best: Option<(Labeling, f64, usize, usize)> = None;
        for (k, s) in starts.into_iter().enumerate() {
            let (l, e, passes) = self.descend(s, cfg);
            if best.as_ref().is_none_or(|b| e < b.1) {
                best = Some((l, e, passes, k));
            }
        }
        let (labeling, final_energy, iterations, best_start) = best.expect("at least one start");
        FrameSolution {
            labeling,
            report: SolveReport {
                initial_energy,
                final_energy,
                iterations,
                restarts: cfg.restarts,
                best_start,
            },
        }
    }
}

/// Minimizes the energy of one frame over a search space.
pub fn minimize_frame(
    model: &EnergyModel,
    frame: usize,
    init: &Labeling,
    space: &SearchSpace,
    cfg: &SolverConfig,
) -> Result<FrameSolution, InferenceError> {
    if frame >= model.num_frames() {
        return Err(InferenceError::Frame {
            frame,
            frames: model.num_frames(),
        });
    }
    model.check_labeling(frame, init)?;
    let st = Structure::new(model);
    let ctx = FrameContext {
        model,
        frame,
        space,
        st: &st,
    };
    Ok(ctx.solve(init, cfg))
}

/// Minimizes a single-frame model over its full label space.
pub fn minimize_energy(model: &EnergyModel, init: &Labeling, cfg: &SolverConfig) -> Result<FrameSolution, InferenceError> {
    if model.num_frames() != 1 {
        return Err(InferenceError::NotSingleFrame(model.num_frames()));
    }
    minimize_frame(model, 0, init, &SearchSpace::full(model), cfg)
}

/// Per-attribute unary argmin of one frame.
pub fn unary_argmin(model: &EnergyModel, frame: usize) -> Labeling {
    let st = Structure::new(model);
    let space = SearchSpace::full(model);
    FrameContext {
        model,
        frame,
        space: &space,
        st: &st,
    }
    .unary_argmin()
}
