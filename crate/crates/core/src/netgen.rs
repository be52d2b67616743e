//! Random network flow games on directed Erdős–Rényi graphs.
//!
//! The source is node `0` and the sink node `n - 1`. Every ordered pair of
//! distinct nodes is an edge with probability `p`; edges into the source and
//! out of the sink are then dropped. Capacities and controllers are drawn
//! i.i.d. per edge, after which agents that ended up with no edge are each
//! handed one edge taken from an agent that owns at least two.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Edge, GameInstance, MAX_AGENTS};
use crate::rng::{derive_seed, mix64, rng_from_seed};

/// Resampling attempts before an index is declared infeasible.
pub const MAX_ATTEMPTS: u32 = 64;

const CAPACITY_STREAM: u64 = 0xCA9A_C17E;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub c_max: u64,
    pub count: u64,
    pub base_seed: u64,
}

impl GenConfig {
    pub fn new(n: usize, m: usize, p: f64) -> Self {
        GenConfig {
            n,
            m,
            p,
            c_max: 10,
            count: 10_000,
            base_seed: 0,
        }
    }

    pub fn with_seed(mut self, base_seed: u64) -> Self {
        self.base_seed = base_seed;
        self
    }

    pub fn with_count(mut self, count: u64) -> Self {
        self.count = count;
        self
    }

    pub fn with_c_max(mut self, c_max: u64) -> Self {
        self.c_max = c_max;
        self
    }

    /// Edges left after pruning a complete digraph on `n` nodes.
    pub fn max_edges(n: usize) -> usize {
        n * n - 3 * n + 3
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n < 3 {
            return invalid(format!("n must be at least 3, got {}", self.n));
        }
        if self.m == 0 || self.m > MAX_AGENTS {
            return invalid(format!("m must be in 1..={MAX_AGENTS}, got {}", self.m));
        }
        if self.m > Self::max_edges(self.n) {
            return invalid(format!(
                "m = {} exceeds the {} edges a {}-node game can have",
                self.m,
                Self::max_edges(self.n),
                self.n
            ));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return invalid(format!("p must be in [0, 1], got {}", self.p));
        }
        if self.c_max == 0 {
            return invalid("c_max must be at least 1".into());
        }
        Ok(())
    }
}

/// Directed G(n, p) with the source/sink pruning applied.
pub fn generate_graph(n: usize, p_edge: f64, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = rng_from_seed(seed);
    let p = p_edge.clamp(0.0, 1.0);
    let (source, sink) = (0, n - 1);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u == v {
                continue;
            }
            // Every pair consumes a draw, so the pruning does not shift the
            // stream for later pairs.
            let present = rng.random_bool(p);
            if present && v != source && u != sink {
                edges.push((u, v));
            }
        }
    }
    edges
}

pub fn assign_capacities_and_agents(
    n: usize,
    edges: &[(usize, usize)],
    m: usize,
    c_max: u64,
    seed: u64,
) -> Result<GameInstance> {
    if edges.len() < m {
        return Err(Error::TooFewEdges {
            edges: edges.len(),
            agents: m,
        });
    }
    let mut rng = rng_from_seed(seed);
    let mut assigned: Vec<Edge> = edges
        .iter()
        .map(|&(u, v)| {
            let capacity = rng.random_range(1..=c_max);
            let controller = rng.random_range(0..m as u64) as usize;
            Edge::new(u, v, capacity, controller)
        })
        .collect();

    let mut owned = vec![0usize; m];
    for e in &assigned {
        owned[e.controller] += 1;
    }
    for agent in 0..m {
        if owned[agent] > 0 {
            continue;
        }
        let donors: Vec<usize> = (0..assigned.len())
            .filter(|&i| owned[assigned[i].controller] >= 2)
            .collect();
        let pick = donors[rng.random_range(0..donors.len() as u64) as usize];
        owned[assigned[pick].controller] -= 1;
        assigned[pick].controller = agent;
        owned[agent] = 1;
    }

    GameInstance::new(n, 0, n - 1, m, assigned)
}

/// A generated game plus the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedInstance {
    pub index: u64,
    pub seed: u64,
    pub instance: GameInstance,
}

/// Seed of the first generation attempt for `index`.
pub fn instance_seed(base_seed: u64, index: u64) -> u64 {
    base_seed ^ mix64(index)
}

/// Instance `index` of the dataset described by `config`. Any index can be
/// generated on its own, in any order, on any thread.
pub fn generate_instance(config: &GenConfig, index: u64) -> Result<GeneratedInstance> {
    config.validate()?;
    let first = instance_seed(config.base_seed, index);
    for attempt in 0..MAX_ATTEMPTS {
        let seed = if attempt == 0 {
            first
        } else {
            derive_seed(first, attempt as u64)
        };
        let edges = generate_graph(config.n, config.p, seed);
        match assign_capacities_and_agents(
            config.n,
            &edges,
            config.m,
            config.c_max,
            derive_seed(seed, CAPACITY_STREAM),
        ) {
            Ok(instance) => {
                return Ok(GeneratedInstance {
                    index,
                    seed,
                    instance,
                })
            }
            Err(Error::TooFewEdges { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::GenerationExhausted {
        index,
        agents: config.m,
        attempts: MAX_ATTEMPTS,
    })
}
