//! Integral maximum flow (Dinic's algorithm) over edge-masked subgraphs.
//!
//! The solver is built once per game and reused for every coalition: the arc
//! layout never changes, only the residual capacities are reset from a mask.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::game::{Coalition, GameInstance};

const UNREACHED: u32 = u32::MAX;

/// Reusable Dinic solver bound to one game's topology.
///
/// Edge `i` of the game owns arcs `2i` (forward) and `2i + 1` (residual
/// back-arc), so `arc ^ 1` is always the partner arc.
#[derive(Debug, Clone)]
pub struct MaxFlowSolver {
    source: usize,
    sink: usize,
    capacity: Vec<u64>,
    controller: Vec<usize>,
    head: Vec<usize>,
    adjacency: Vec<usize>,
    active_head: Vec<usize>,
    active: Vec<usize>,
    enabled: Vec<bool>,
    arc_to: Vec<usize>,
    residual: Vec<u64>,
    level: Vec<u32>,
    next_arc: Vec<usize>,
    queue: VecDeque<usize>,
    path: Vec<usize>,
}

impl MaxFlowSolver {
    pub fn new(instance: &GameInstance) -> Self {
        let n = instance.node_count();
        let edges = instance.edges();
        let mut arc_to = Vec::with_capacity(2 * edges.len());
        let mut degree = vec![0usize; n + 1];
        for e in edges {
            arc_to.push(e.dst);
            arc_to.push(e.src);
            degree[e.src] += 1;
            degree[e.dst] += 1;
        }
        let mut head = vec![0usize; n + 1];
        for v in 0..n {
            head[v + 1] = head[v] + degree[v];
        }
        let mut fill = head.clone();
        let mut adjacency = vec![0usize; 2 * edges.len()];
        for (i, e) in edges.iter().enumerate() {
            adjacency[fill[e.src]] = 2 * i;
            fill[e.src] += 1;
            adjacency[fill[e.dst]] = 2 * i + 1;
            fill[e.dst] += 1;
        }

        MaxFlowSolver {
            source: instance.source(),
            sink: instance.sink(),
            capacity: edges.iter().map(|e| e.capacity).collect(),
            controller: edges.iter().map(|e| e.controller).collect(),
            active_head: vec![0; n + 1],
            active: Vec::with_capacity(2 * edges.len()),
            enabled: vec![false; edges.len()],
            head,
            adjacency,
            arc_to,
            residual: vec![0; 2 * edges.len()],
            level: vec![UNREACHED; n],
            next_arc: vec![0; n],
            queue: VecDeque::with_capacity(n),
            path: Vec::with_capacity(n),
        }
    }

    /// Maximum flow using only the edges where `mask[i]` is true.
    pub fn solve(&mut self, mask: &[bool]) -> Result<u64> {
        if mask.len() != self.capacity.len() {
            return Err(Error::MaskLength {
                expected: self.capacity.len(),
                got: mask.len(),
            });
        }
        self.enabled.copy_from_slice(mask);
        Ok(self.run())
    }

    /// Maximum flow through the edges controlled by `coalition`'s members.
    ///
    /// The coalition width is not checked here; callers in hot loops are
    /// expected to have validated it once.
    pub fn coalition_value(&mut self, coalition: Coalition) -> u64 {
        let bits = coalition.bits();
        for (enabled, &agent) in self.enabled.iter_mut().zip(&self.controller) {
            *enabled = bits >> agent & 1 == 1;
        }
        self.run()
    }

    /// Resets residual capacities from `enabled` and rebuilds the adjacency
    /// lists with the arcs of enabled edges only.
    fn load(&mut self) {
        for (i, &on) in self.enabled.iter().enumerate() {
            self.residual[2 * i] = if on { self.capacity[i] } else { 0 };
            self.residual[2 * i + 1] = 0;
        }
        self.active.clear();
        self.active_head[0] = 0;
        for v in 0..self.level.len() {
            for &arc in &self.adjacency[self.head[v]..self.head[v + 1]] {
                if self.enabled[arc >> 1] {
                    self.active.push(arc);
                }
            }
            self.active_head[v + 1] = self.active.len();
        }
    }

    fn run(&mut self) -> u64 {
        self.load();
        let mut total = 0u64;
        while self.build_levels() {
            self.next_arc
                .copy_from_slice(&self.active_head[..self.level.len()]);
            total += self.blocking_flow();
        }
        total
    }

    /// BFS over arcs with spare residual capacity. Returns whether the sink
    /// is reachable.
    fn build_levels(&mut self) -> bool {
        self.level.fill(UNREACHED);
        self.queue.clear();
        self.level[self.source] = 0;
        self.queue.push_back(self.source);
        while let Some(u) = self.queue.pop_front() {
            for &arc in &self.active[self.active_head[u]..self.active_head[u + 1]] {
                let v = self.arc_to[arc];
                if self.residual[arc] > 0 && self.level[v] == UNREACHED {
                    self.level[v] = self.level[u] + 1;
                    if v == self.sink {
                        // Nodes at the sink's depth or deeper cannot be on a
                        // shortest augmenting path.
                        self.queue.clear();
                        break;
                    }
                    self.queue.push_back(v);
                }
            }
        }
        self.level[self.sink] != UNREACHED
    }

    /// Saturates the level graph with an iterative DFS, advancing each
    /// node's arc pointer past arcs that can no longer carry flow.
    fn blocking_flow(&mut self) -> u64 {
        let sink_level = self.level[self.sink];
        let mut pushed = 0u64;
        let mut u = self.source;
        self.path.clear();
        loop {
            if u == self.sink {
                let bottleneck = self
                    .path
                    .iter()
                    .map(|&a| self.residual[a])
                    .min()
                    .expect("path to sink is non-empty");
                for &a in &self.path {
                    self.residual[a] -= bottleneck;
                    self.residual[a ^ 1] += bottleneck;
                }
                pushed += bottleneck;
                let cut = self
                    .path
                    .iter()
                    .position(|&a| self.residual[a] == 0)
                    .expect("bottleneck arc is saturated");
                self.path.truncate(cut);
                u = match self.path.last() {
                    Some(&a) => self.arc_to[a],
                    None => self.source,
                };
                continue;
            }

            let mut advanced = false;
            while self.next_arc[u] < self.active_head[u + 1] {
                let arc = self.active[self.next_arc[u]];
                let v = self.arc_to[arc];
                let next_level = self.level[u] + 1;
                if self.residual[arc] > 0
                    && self.level[v] == next_level
                    && (next_level < sink_level || v == self.sink)
                {
                    self.path.push(arc);
                    u = v;
                    advanced = true;
                    break;
                }
                self.next_arc[u] += 1;
            }
            if advanced {
                continue;
            }

            // Dead end: prune u from this phase and retreat.
            if u == self.source {
                return pushed;
            }
            self.level[u] = UNREACHED;
            let arc = self.path.pop().expect("non-source node has a parent arc");
            u = self.arc_to[arc ^ 1];
            self.next_arc[u] += 1;
        }
    }
}

/// Exact maximum s→t flow using only the unmasked edges of `instance`.
pub fn max_flow(instance: &GameInstance, edge_mask: &[bool]) -> Result<u64> {
    MaxFlowSolver::new(instance).solve(edge_mask)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::example::worked_example;
    use crate::game::{restrict, Edge};
    use proptest::prelude::*;

    /// Minimum over every vertex partition with the source on one side and
    /// the sink on the other of the enabled capacity crossing it.
    pub(crate) fn brute_force_min_cut(instance: &GameInstance, mask: &[bool]) -> u64 {
        let n = instance.node_count();
        let (s, t) = (instance.source(), instance.sink());
        let others: Vec<usize> = (0..n).filter(|&v| v != s && v != t).collect();
        let mut best = u64::MAX;
        for subset in 0u64..1 << others.len() {
            let mut source_side = vec![false; n];
            source_side[s] = true;
            for (k, &v) in others.iter().enumerate() {
                source_side[v] = subset >> k & 1 == 1;
            }
            let cut: u64 = instance
                .edges()
                .iter()
                .zip(mask)
                .filter(|(e, &on)| on && source_side[e.src] && !source_side[e.dst])
                .map(|(e, _)| e.capacity)
                .sum();
            best = best.min(cut);
        }
        best
    }

    #[test]
    fn worked_example_flows() {
        let g = worked_example();
        assert_eq!(max_flow(&g, &[true; 5]).unwrap(), 5);
        assert_eq!(max_flow(&g, &[false; 5]).unwrap(), 0);
        let pair = restrict(&g, Coalition::from_members(&[1, 2], 3)).unwrap();
        assert_eq!(max_flow(&g, &pair).unwrap(), 2);
        let pair = restrict(&g, Coalition::from_members(&[0, 2], 3)).unwrap();
        assert_eq!(max_flow(&g, &pair).unwrap(), 3);
        assert_eq!(brute_force_min_cut(&g, &pair), 3);
    }

    #[test]
    fn mask_length_is_checked() {
        let g = worked_example();
        assert!(matches!(
            max_flow(&g, &[true; 4]),
            Err(Error::MaskLength {
                expected: 5,
                got: 4
            })
        ));
    }

    #[test]
    fn disconnected_sink_is_zero() {
        let g = GameInstance::new(
            4,
            0,
            3,
            1,
            vec![Edge::new(0, 1, 5, 0), Edge::new(1, 2, 5, 0)],
        )
        .unwrap();
        assert_eq!(max_flow(&g, &[true, true]).unwrap(), 0);
    }

    #[test]
    fn solver_is_reusable_across_masks() {
        let g = worked_example();
        let mut solver = MaxFlowSolver::new(&g);
        for bits in 0..8u64 {
            let c = Coalition::from_bits(bits, 3);
            let fresh = max_flow(&g, &restrict(&g, c).unwrap()).unwrap();
            assert_eq!(solver.coalition_value(c), fresh);
        }
    }

    #[test]
    fn classic_textbook_network() {
        // CLRS figure 26.1, flow 23.
        let edges = vec![
            Edge::new(0, 1, 16, 0),
            Edge::new(0, 2, 13, 0),
            Edge::new(2, 1, 4, 0),
            Edge::new(1, 3, 12, 0),
            Edge::new(3, 2, 9, 0),
            Edge::new(2, 4, 14, 0),
            Edge::new(4, 3, 7, 0),
            Edge::new(3, 5, 20, 0),
            Edge::new(4, 5, 4, 0),
        ];
        let g = GameInstance::new(6, 0, 5, 1, edges).unwrap();
        assert_eq!(max_flow(&g, &[true; 9]).unwrap(), 23);
    }

    /// Random valid games with at most `max_nodes` nodes and `max_agents`
    /// agents. Pairs are kept with probability 1/2, topped up so at least
    /// `m` edges exist, and the first `m` edges go to distinct agents.
    pub(crate) fn arb_game(
        max_nodes: usize,
        max_agents: usize,
    ) -> impl Strategy<Value = GameInstance> {
        (3..=max_nodes)
            .prop_flat_map(move |n| {
                let pairs: Vec<(usize, usize)> = (0..n)
                    .flat_map(|u| (0..n).map(move |v| (u, v)))
                    .filter(|&(u, v)| u != v && v != 0 && u != n - 1)
                    .collect();
                let k = pairs.len();
                (Just(n), 1..=max_agents.min(k), Just(pairs))
            })
            .prop_flat_map(|(n, m, pairs)| {
                let k = pairs.len();
                (
                    Just(n),
                    Just(m),
                    Just(pairs),
                    proptest::collection::vec((any::<bool>(), 1u64..=10, 0..m), k),
                )
            })
            .prop_map(|(n, m, pairs, picks)| {
                let mut edges = Vec::new();
                for (i, (&(u, v), (keep, c, a))) in pairs.iter().zip(picks).enumerate() {
                    if keep || pairs.len() - i <= m - edges.len().min(m) {
                        edges.push(Edge::new(u, v, c, a));
                    }
                }
                let offset = edges[0].controller;
                for (i, e) in edges.iter_mut().take(m).enumerate() {
                    e.controller = (i + offset) % m;
                }
                GameInstance::new(n, 0, n - 1, m, edges).expect("generated game is valid")
            })
    }

    proptest! {
        #[test]
        fn max_flow_equals_min_cut(g in arb_game(7, 3), bits in any::<u64>()) {
            let mask = restrict(&g, Coalition::from_bits(bits, g.agent_count())).unwrap();
            prop_assert_eq!(max_flow(&g, &mask).unwrap(), brute_force_min_cut(&g, &mask));
        }

        #[test]
        fn value_is_monotone_in_coalition(g in arb_game(7, 6), a in any::<u64>(), b in any::<u64>()) {
            let m = g.agent_count();
            let small = Coalition::from_bits(a & b, m);
            let large = Coalition::from_bits(a, m);
            let mut solver = MaxFlowSolver::new(&g);
            prop_assert!(solver.coalition_value(small) <= solver.coalition_value(large));
        }
    }
}
