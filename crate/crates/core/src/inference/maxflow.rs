//! Shortest-augmenting-path max-flow (Edmonds-Karp) on integer capacities.
//!
//! Real capacities are quantized to multiples of [`FLOW_QUANTUM`] so the
//! algorithm runs in exact integer arithmetic.

use std::collections::VecDeque;

pub const FLOW_QUANTUM: f64 = 1e-6;

/// Capacity in flow units; negative or non-finite inputs are a caller bug.
pub fn quantize(capacity: f64) -> i64 {
    assert!(
        capacity.is_finite() && capacity >= 0.0,
        "capacity must be finite and nonnegative, got {capacity}"
    );
    (capacity / FLOW_QUANTUM).round() as i64
}

#[derive(Clone, Debug)]
struct Arc {
    to: usize,
    cap: i64,
}

#[derive(Clone, Debug)]
pub struct FlowNetwork {
    source: usize,
    sink: usize,
    /// Arcs are stored in pairs: `2k` forward, `2k + 1` its residual twin.
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaxFlow {
    /// Flow in units of [`FLOW_QUANTUM`].
    pub units: i64,
    pub value: f64,
    /// Nodes reachable from the source in the final residual graph; the
    /// minimum cut separates these from the rest.
    pub source_side: Vec<bool>,
    /// Flow on each arc, aligned with [`FlowNetwork::arcs`].
    pub flows: Vec<i64>,
}

impl FlowNetwork {
    pub fn new(nodes: usize, source: usize, sink: usize) -> Self {
        assert!(source < nodes && sink < nodes && source != sink);
        FlowNetwork {
            source,
            sink,
            arcs: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    pub fn nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Adds a directed arc with a real capacity.
    pub fn add_arc(&mut self, from: usize, to: usize, capacity: f64) {
        self.add_arc_units(from, to, quantize(capacity));
    }

    /// Adds a directed arc with a capacity in flow units.
    pub fn add_arc_units(&mut self, from: usize, to: usize, units: i64) {
        assert!(units >= 0, "negative capacity");
        if units == 0 || from == to {
            return;
        }
        self.adj[from].push(self.arcs.len());
        self.arcs.push(Arc { to, cap: units });
        self.adj[to].push(self.arcs.len());
        self.arcs.push(Arc { to: from, cap: 0 });
    }

    /// Arcs as `(from, to, units)` in insertion order.
    pub fn arcs(&self) -> Vec<(usize, usize, i64)> {
        (0..self.arcs.len())
            .step_by(2)
            .map(|k| (self.arcs[k + 1].to, self.arcs[k].to, self.arcs[k].cap))
            .collect()
    }

    /// Capacity of the cut leaving `source_side`, in flow units.
    pub fn cut_units(&self, source_side: &[bool]) -> i64 {
        self.arcs()
            .into_iter()
            .filter(|&(u, v, _)| source_side[u] && !source_side[v])
            .map(|(_, _, c)| c)
            .sum()
    }

    pub fn max_flow(&self) -> MaxFlow {
        let n = self.nodes();
        let mut arcs = self.arcs.clone();
        let mut units = 0i64;
        let mut pred = vec![usize::MAX; n];
        loop {
            pred.iter_mut().for_each(|p| *p = usize::MAX);
            let mut seen = vec![false; n];
            seen[self.source] = true;
            let mut queue = VecDeque::from([self.source]);
            while let Some(u) = queue.pop_front() {
                if u == self.sink {
                    break;
                }
                for &a in &self.adj[u] {
                    let v = arcs[a].to;
                    if arcs[a].cap > 0 && !seen[v] {
                        seen[v] = true;
                        pred[v] = a;
                        queue.push_back(v);
                    }
                }
            }
            if !seen[self.sink] {
                return MaxFlow {
                    units,
                    value: units as f64 * FLOW_QUANTUM,
                    source_side: seen,
                    flows: (0..arcs.len()).step_by(2).map(|k| arcs[k + 1].cap).collect(),
                };
            }
            let mut bottleneck = i64::MAX;
            let mut v = self.sink;
            while v != self.source {
                let a = pred[v];
                bottleneck = bottleneck.min(arcs[a].cap);
                v = arcs[a ^ 1].to;
            }
            let mut v = self.sink;
            while v != self.source {
                let a = pred[v];
                arcs[a].cap -= bottleneck;
                arcs[a ^ 1].cap += bottleneck;
                v = arcs[a ^ 1].to;
            }
            units += bottleneck;
        }
    }
}
