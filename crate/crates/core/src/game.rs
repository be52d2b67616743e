//! Game instances, coalitions and the characteristic function.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::flow::MaxFlowSolver;

/// Coalitions are stored as a single machine word, so games are limited to
/// this many agents.
pub const MAX_AGENTS: usize = 64;

/// A capacitated directed edge and the agent that controls it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub capacity: u64,
    pub controller: usize,
}

impl Edge {
    pub fn new(src: usize, dst: usize, capacity: u64, controller: usize) -> Self {
        Edge {
            src,
            dst,
            capacity,
            controller,
        }
    }
}

/// A cardinal network flow game: a capacitated digraph with a strong source
/// and sink, and a surjective assignment of edges to agents.
///
/// Instances are validated on construction and immutable afterwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameInstance {
    node_count: usize,
    source: usize,
    sink: usize,
    agent_count: usize,
    edges: Vec<Edge>,
}

impl GameInstance {
    pub fn new(
        node_count: usize,
        source: usize,
        sink: usize,
        agent_count: usize,
        edges: Vec<Edge>,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidInstance(msg));
        if node_count < 2 {
            return invalid(format!("need at least 2 nodes, got {node_count}"));
        }
        if source >= node_count || sink >= node_count {
            return invalid(format!(
                "source {source} / sink {sink} out of range for {node_count} nodes"
            ));
        }
        if source == sink {
            return invalid("source and sink coincide".into());
        }
        if agent_count == 0 || agent_count > MAX_AGENTS {
            return invalid(format!("agent count {agent_count} not in 1..={MAX_AGENTS}"));
        }

        let mut seen = HashSet::with_capacity(edges.len());
        let mut owned = vec![false; agent_count];
        for (i, e) in edges.iter().enumerate() {
            if e.src >= node_count || e.dst >= node_count {
                return invalid(format!(
                    "edge {i} ({}, {}) has an unknown endpoint",
                    e.src, e.dst
                ));
            }
            if e.src == e.dst {
                return invalid(format!("edge {i} is a self-loop on node {}", e.src));
            }
            if e.dst == source {
                return invalid(format!("edge {i} enters the source"));
            }
            if e.src == sink {
                return invalid(format!("edge {i} leaves the sink"));
            }
            if e.capacity == 0 {
                return invalid(format!("edge {i} has zero capacity"));
            }
            if e.controller >= agent_count {
                return invalid(format!(
                    "edge {i} controller {} out of range for {agent_count} agents",
                    e.controller
                ));
            }
            if !seen.insert((e.src, e.dst)) {
                return invalid(format!("duplicate edge ({}, {})", e.src, e.dst));
            }
            owned[e.controller] = true;
        }
        if let Some(idle) = owned.iter().position(|&o| !o) {
            return invalid(format!("agent {idle} controls no edge"));
        }

        Ok(GameInstance {
            node_count,
            source,
            sink,
            agent_count,
            edges,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn agent_count(&self) -> usize {
        self.agent_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Returns a copy of this game with every agent index mapped through
    /// `perm` (agent `j` becomes agent `perm[j]`).
    pub fn relabel_agents(&self, perm: &[usize]) -> Result<GameInstance> {
        if perm.len() != self.agent_count {
            return Err(Error::InvalidInstance(format!(
                "permutation of length {} for {} agents",
                perm.len(),
                self.agent_count
            )));
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                controller: perm[e.controller],
                ..*e
            })
            .collect();
        GameInstance::new(
            self.node_count,
            self.source,
            self.sink,
            self.agent_count,
            edges,
        )
    }

    /// Returns a copy with every capacity multiplied by `factor`.
    pub fn scale_capacities(&self, factor: u64) -> Result<GameInstance> {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                capacity: e.capacity * factor,
                ..*e
            })
            .collect();
        GameInstance::new(
            self.node_count,
            self.source,
            self.sink,
            self.agent_count,
            edges,
        )
    }
}

/// A subset of the agents of one game.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Coalition {
    bits: u64,
    width: usize,
}

impl Coalition {
    fn mask(width: usize) -> u64 {
        if width >= 64 {
            u64::MAX
        } else {
            (1u64 << width) - 1
        }
    }

    pub fn empty(width: usize) -> Self {
        assert!(
            width <= MAX_AGENTS,
            "coalition width {width} exceeds {MAX_AGENTS}"
        );
        Coalition { bits: 0, width }
    }

    pub fn full(width: usize) -> Self {
        assert!(
            width <= MAX_AGENTS,
            "coalition width {width} exceeds {MAX_AGENTS}"
        );
        Coalition {
            bits: Self::mask(width),
            width,
        }
    }

    /// Bit `j` of `bits` is membership of agent `j`; bits above `width` are
    /// discarded.
    pub fn from_bits(bits: u64, width: usize) -> Self {
        assert!(
            width <= MAX_AGENTS,
            "coalition width {width} exceeds {MAX_AGENTS}"
        );
        Coalition {
            bits: bits & Self::mask(width),
            width,
        }
    }

    pub fn from_members(members: &[usize], width: usize) -> Self {
        let mut c = Coalition::empty(width);
        for &j in members {
            c = c.with(j);
        }
        c
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    pub fn width(self) -> usize {
        self.width
    }

    pub fn contains(self, agent: usize) -> bool {
        agent < self.width && self.bits >> agent & 1 == 1
    }

    pub fn with(self, agent: usize) -> Self {
        assert!(
            agent < self.width,
            "agent {agent} outside coalition width {}",
            self.width
        );
        Coalition {
            bits: self.bits | 1 << agent,
            width: self.width,
        }
    }

    pub fn without(self, agent: usize) -> Self {
        assert!(
            agent < self.width,
            "agent {agent} outside coalition width {}",
            self.width
        );
        Coalition {
            bits: self.bits & !(1 << agent),
            width: self.width,
        }
    }

    pub fn toggle(self, agent: usize) -> Self {
        assert!(
            agent < self.width,
            "agent {agent} outside coalition width {}",
            self.width
        );
        Coalition {
            bits: self.bits ^ 1 << agent,
            width: self.width,
        }
    }

    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        (0..self.width).filter(move |&j| self.bits >> j & 1 == 1)
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.bits & !other.bits == 0
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members()).finish()
    }
}

fn check_width(instance: &GameInstance, coalition: Coalition) -> Result<()> {
    if coalition.width() != instance.agent_count() {
        return Err(Error::CoalitionWidth {
            expected: instance.agent_count(),
            got: coalition.width(),
        });
    }
    Ok(())
}

/// Per-edge mask enabling exactly the edges controlled by members of
/// `coalition`.
pub fn restrict(instance: &GameInstance, coalition: Coalition) -> Result<Vec<bool>> {
    check_width(instance, coalition)?;
    Ok(instance
        .edges()
        .iter()
        .map(|e| coalition.contains(e.controller))
        .collect())
}

/// The characteristic function: maximum flow through the coalition's edges.
pub fn coalition_value(instance: &GameInstance, coalition: Coalition) -> Result<u64> {
    check_width(instance, coalition)?;
    Ok(MaxFlowSolver::new(instance).coalition_value(coalition))
}

/// Threshold variant: 1 if the coalition can route at least `quota` units.
pub fn threshold_value(instance: &GameInstance, coalition: Coalition, quota: f64) -> Result<u8> {
    if quota.is_nan() || quota < 0.0 {
        return Err(Error::NegativeQuota(quota));
    }
    let value = coalition_value(instance, coalition)?;
    Ok(u8::from(value as f64 >= quota))
}
