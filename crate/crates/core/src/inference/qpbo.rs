//! Roof-duality QPBO on quadratic pseudo-boolean energies, plus a reduction
//! of cubic factors to quadratic form with one auxiliary variable each.
//!
//! In the doubled graph node `p` stands for `x_p` and node `n + p` for its
//! complement. A node on the source side means its literal is 0. Every
//! term is represented on both copies, so the cut of a consistent labeling
//! is twice its energy above the constant.

use serde::{Deserialize, Serialize};

use super::maxflow::{quantize, FlowNetwork};

/// Per-variable result of QPBO: `Some(value)` where persistency holds.
pub type PartialLabeling = Vec<Option<bool>>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadraticProblem {
    pub unary: Vec<[f64; 2]>,
    pub pairs: Vec<(usize, usize, [[f64; 2]; 2])>,
    pub constant: f64,
}

impl QuadraticProblem {
    pub fn new(vars: usize) -> Self {
        QuadraticProblem {
            unary: vec![[0.0; 2]; vars],
            pairs: Vec::new(),
            constant: 0.0,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.unary.len()
    }

    pub fn add_var(&mut self) -> usize {
        self.unary.push([0.0; 2]);
        self.unary.len() - 1
    }

    pub fn add_unary(&mut self, v: usize, cost: [f64; 2]) {
        self.unary[v][0] += cost[0];
        self.unary[v][1] += cost[1];
    }

    /// `cost[a][b]` applies when `x_i = a` and `x_j = b`.
    pub fn add_pairwise(&mut self, i: usize, j: usize, cost: [[f64; 2]; 2]) {
        if i == j {
            self.add_unary(i, [cost[0][0], cost[1][1]]);
        } else {
            self.pairs.push((i, j, cost));
        }
    }

    pub fn energy(&self, x: &[bool]) -> f64 {
        let u: f64 = self.unary.iter().zip(x).map(|(c, &b)| c[usize::from(b)]).sum();
        let p: f64 = self
            .pairs
            .iter()
            .map(|&(i, j, c)| c[usize::from(x[i])][usize::from(x[j])])
            .sum();
        self.constant + u + p
    }

    /// Every pairwise term satisfies `E(0,1) + E(1,0) >= E(0,0) + E(1,1)`.
    pub fn is_submodular(&self) -> bool {
        self.pairs.iter().all(|(_, _, c)| c[0][1] + c[1][0] >= c[0][0] + c[1][1])
    }
}

/// Doubled graph whose arcs come in mirror pairs `(2k, 2k + 1)`.
struct Doubled {
    n: usize,
    arcs: Vec<(usize, usize, i64)>,
}

impl Doubled {
    fn mirror(&self, u: usize) -> usize {
        let n = self.n;
        match u {
            _ if u < n => u + n,
            _ if u < 2 * n => u - n,
            _ if u == 2 * n => 2 * n + 1,
            _ => 2 * n,
        }
    }

    fn add(&mut self, u: usize, w: usize, capacity: f64) {
        let c = quantize(capacity);
        if c > 0 && u != w {
            self.arcs.push((u, w, c));
            self.arcs.push((self.mirror(w), self.mirror(u), c));
        }
    }
}

/// Strongly connected components, numbered in the order Tarjan's
/// algorithm completes them (every arc leads to an equal or lower number).
fn tarjan(adj: &[Vec<usize>]) -> Vec<usize> {
    struct State<'a> {
        adj: &'a [Vec<usize>],
        index: Vec<usize>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        comp: Vec<usize>,
        next: usize,
        comps: usize,
    }
    fn visit(st: &mut State<'_>, v: usize) {
        st.index[v] = st.next;
        st.low[v] = st.next;
        st.next += 1;
        st.stack.push(v);
        st.on_stack[v] = true;
        for k in 0..st.adj[v].len() {
            let w = st.adj[v][k];
            if st.index[w] == usize::MAX {
                visit(st, w);
                st.low[v] = st.low[v].min(st.low[w]);
            } else if st.on_stack[w] {
                st.low[v] = st.low[v].min(st.index[w]);
            }
        }
        if st.low[v] == st.index[v] {
            while let Some(w) = st.stack.pop() {
                st.on_stack[w] = false;
                st.comp[w] = st.comps;
                if w == v {
                    break;
                }
            }
            st.comps += 1;
        }
    }
    let n = adj.len();
    let mut st = State {
        adj,
        index: vec![usize::MAX; n],
        low: vec![0; n],
        on_stack: vec![false; n],
        stack: Vec::new(),
        comp: vec![usize::MAX; n],
        next: 0,
        comps: 0,
    };
    for v in 0..n {
        if st.index[v] == usize::MAX {
            visit(&mut st, v);
        }
    }
    st.comp
}

/// Solves the roof-dual relaxation and reads off the persistent labels.
///
/// The max flow is symmetrized over mirror arcs, so the residual graph is
/// closed under complementation. Nodes reachable from the source are fixed
/// to the source side; the rest are assigned whole components at a time in
/// reverse topological order, as in 2-SAT. A variable stays unlabeled only
/// when both of its literals share a component.
pub fn qpbo(problem: &QuadraticProblem) -> PartialLabeling {
    let n = problem.num_vars();
    let (s, t) = (2 * n, 2 * n + 1);
    let mut g = Doubled { n, arcs: Vec::new() };
    // linear coefficient on x = 1 after reparametrization
    let mut slope: Vec<f64> = problem.unary.iter().map(|c| c[1] - c[0]).collect();
    for &(i, j, c) in &problem.pairs {
        let [[a, b], [cc, d]] = c;
        slope[i] += cc - a;
        slope[j] += d - cc;
        // remaining term: lambda * (1 - x_i) * x_j
        let lambda = b + cc - a - d;
        if lambda >= 0.0 {
            g.add(i, j, lambda);
        } else {
            // lambda (1 - x_i) x_j = lambda x_j - lambda x_i x_j
            slope[j] += lambda;
            g.add(n + j, i, -lambda);
        }
    }
    for (p, &k) in slope.iter().enumerate() {
        if k > 0.0 {
            g.add(s, p, k);
        } else if k < 0.0 {
            g.add(p, t, -k);
        }
    }
    let mut net = FlowNetwork::new(2 * n + 2, s, t);
    for &(u, w, c) in &g.arcs {
        net.add_arc_units(u, w, c);
    }
    let flow = net.max_flow().flows;

    // residual graph of the symmetric flow f + mirror(f) under doubled capacities
    let mut adj = vec![Vec::new(); 2 * n + 2];
    for (k, &(u, w, c)) in g.arcs.iter().enumerate() {
        let sym = flow[k] + flow[k ^ 1];
        if 2 * c - sym > 0 {
            adj[u].push(w);
        }
        if sym > 0 {
            adj[w].push(u);
        }
    }
    let mut in_source = vec![None; 2 * n + 2];
    let mut stack = vec![s];
    in_source[s] = Some(true);
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            if in_source[w].is_none() {
                in_source[w] = Some(true);
                stack.push(w);
            }
        }
    }
    for u in 0..2 * n + 2 {
        if in_source[u] == Some(true) {
            in_source[g.mirror(u)] = Some(false);
        }
    }
    let comp = tarjan(&adj);
    let mut order: Vec<usize> = (0..2 * n + 2).collect();
    order.sort_by_key(|&u| comp[u]);
    let mut comp_side: Vec<Option<bool>> = vec![None; 2 * n + 2];
    for &u in &order {
        if in_source[u].is_some() {
            continue;
        }
        let (cu, cm) = (comp[u], comp[g.mirror(u)]);
        if cu == cm {
            continue;
        }
        if comp_side[cu].is_none() {
            comp_side[cu] = Some(true);
            comp_side[cm] = Some(false);
        }
        in_source[u] = comp_side[cu];
    }
    (0..n)
        .map(|p| match (in_source[p], in_source[n + p]) {
            (Some(true), Some(false)) => Some(false),
            (Some(false), Some(true)) => Some(true),
            _ => None,
        })
        .collect()
}

/// How variables QPBO leaves unlabeled are completed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Fill {
    /// Greedy single-variable sweeps from the hint.
    Icm,
    /// Enumerate the unlabeled variables when there are at most
    /// `max_unlabeled` of them, otherwise fall back to ICM.
    Exhaustive { max_unlabeled: usize },
}

#[derive(Clone, Debug, PartialEq)]
struct Factor {
    vars: Vec<usize>,
    table: Vec<f64>,
}

impl Factor {
    fn value(&self, x: &[bool]) -> f64 {
        let idx = self.vars.iter().fold(0, |acc, &v| acc << 1 | usize::from(x[v]));
        self.table[idx]
    }
}

/// A pseudo-boolean energy with factors of arity at most three.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BinaryProblem {
    vars: usize,
    constant: f64,
    factors: Vec<Factor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinarySolution {
    pub labels: Vec<bool>,
    /// Variables QPBO labeled directly.
    pub persistent: Vec<bool>,
    pub energy: f64,
}

impl BinaryProblem {
    pub fn new(vars: usize) -> Self {
        BinaryProblem {
            vars,
            ..Self::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.vars
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    pub fn add_unary(&mut self, v: usize, cost: [f64; 2]) {
        self.add_factor(&[v], &cost);
    }

    pub fn add_pairwise(&mut self, i: usize, j: usize, cost: [[f64; 2]; 2]) {
        self.add_factor(&[i, j], &cost.concat());
    }

    /// `table[k]` is the cost of the assignment whose bits, read with the
    /// first variable most significant, spell `k`.
    pub fn add_factor(&mut self, vars: &[usize], table: &[f64]) {
        assert!((1..=3).contains(&vars.len()), "factor arity must be 1..=3");
        assert_eq!(table.len(), 1 << vars.len(), "table size");
        assert!(vars.iter().all(|&v| v < self.vars), "variable out of range");
        for (k, v) in vars.iter().enumerate() {
            assert!(!vars[..k].contains(v), "repeated variable in factor");
        }
        self.factors.push(Factor {
            vars: vars.to_vec(),
            table: table.to_vec(),
        });
    }

    pub fn energy(&self, x: &[bool]) -> f64 {
        self.constant + self.factors.iter().map(|f| f.value(x)).sum::<f64>()
    }

    /// Equivalent quadratic problem; variables past `num_vars()` are
    /// auxiliaries whose minimization recovers the original energy.
    pub fn to_quadratic(&self) -> QuadraticProblem {
        let mut q = QuadraticProblem::new(self.vars);
        q.constant = self.constant;
        for f in &self.factors {
            let t = &f.table;
            match f.vars[..] {
                [v] => q.add_unary(v, [t[0], t[1]]),
                [i, j] => q.add_pairwise(i, j, [[t[0], t[1]], [t[2], t[3]]]),
                [x, y, z] => {
                    q.constant += t[0];
                    q.add_unary(x, [0.0, t[4] - t[0]]);
                    q.add_unary(y, [0.0, t[2] - t[0]]);
                    q.add_unary(z, [0.0, t[1] - t[0]]);
                    let prod = |c: f64| [[0.0, 0.0], [0.0, c]];
                    q.add_pairwise(x, y, prod(t[6] - t[4] - t[2] + t[0]));
                    q.add_pairwise(x, z, prod(t[5] - t[4] - t[1] + t[0]));
                    q.add_pairwise(y, z, prod(t[3] - t[2] - t[1] + t[0]));
                    let d = t[7] - t[6] - t[5] - t[3] + t[4] + t[2] + t[1] - t[0];
                    if d < 0.0 {
                        // d xyz = min_w d w (x + y + z - 2)
                        let w = q.add_var();
                        for v in [x, y, z] {
                            q.add_pairwise(w, v, prod(d));
                        }
                        q.add_unary(w, [0.0, -2.0 * d]);
                    } else if d > 0.0 {
                        // xyz = min_w w (x + y + z - 1) + xy + yz + zx - x - y - z + 1
                        let w = q.add_var();
                        for v in [x, y, z] {
                            q.add_pairwise(w, v, prod(d));
                            q.add_unary(v, [0.0, -d]);
                        }
                        q.add_unary(w, [0.0, -d]);
                        q.add_pairwise(x, y, prod(d));
                        q.add_pairwise(y, z, prod(d));
                        q.add_pairwise(x, z, prod(d));
                        q.constant += d;
                    }
                }
                _ => unreachable!("factor arity checked on insert"),
            }
        }
        q
    }

    /// Persistent labels of the original variables.
    pub fn qpbo(&self) -> PartialLabeling {
        let mut labels = qpbo(&self.to_quadratic());
        labels.truncate(self.vars);
        labels
    }

    /// QPBO followed by completion of the unlabeled variables, which start
    /// from `hint`.
    pub fn solve(&self, hint: &[bool], fill: Fill) -> BinarySolution {
        assert_eq!(hint.len(), self.vars);
        let partial = self.qpbo();
        let persistent: Vec<bool> = partial.iter().map(Option::is_some).collect();
        let mut x: Vec<bool> = partial.iter().zip(hint).map(|(p, &h)| p.unwrap_or(h)).collect();
        let free: Vec<usize> = (0..self.vars).filter(|&v| !persistent[v]).collect();
        match fill {
            Fill::Exhaustive { max_unlabeled } if free.len() <= max_unlabeled => self.enumerate_free(&mut x, &free),
            _ => self.icm(&mut x, &free),
        }
        let energy = self.energy(&x);
        BinarySolution {
            labels: x,
            persistent,
            energy,
        }
    }

    fn icm(&self, x: &mut [bool], free: &[usize]) {
        let mut current = self.energy(x);
        for _ in 0..100 {
            let mut changed = false;
            for &v in free {
                x[v] ^= true;
                let e = self.energy(x);
                if e < current {
                    current = e;
                    changed = true;
                } else {
                    x[v] ^= true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    fn enumerate_free(&self, x: &mut [bool], free: &[usize]) {
        let mut best = (self.energy(x), x.to_vec());
        for mask in 0u64..1 << free.len() {
            for (k, &v) in free.iter().enumerate() {
                x[v] = mask >> k & 1 == 1;
            }
            let e = self.energy(x);
            if e < best.0 {
                best = (e, x.to_vec());
            }
        }
        x.copy_from_slice(&best.1);
    }
}
