//! Exact and Monte-Carlo Banzhaf values.
//!
//! The Banzhaf value of agent `j` is its marginal contribution
//! `v(C ∪ {j}) - v(C)` averaged over all `2^(m-1)` coalitions `C` that
//! exclude `j`. Labels are the values normalized onto the probability
//! simplex.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::MaxFlowSolver;
use crate::game::{Coalition, GameInstance};
use crate::rng::rng_from_seed;

/// Largest agent count for which exact enumeration is attempted.
pub const EXACT_AGENT_CAP: usize = 25;

/// Total contribution at or below which the uniform label is assigned.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Coalition tables smaller than this are filled on the calling thread.
const PARALLEL_TABLE_MIN: usize = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelMethod {
    Exact,
    MonteCarlo { samples: u64 },
}

impl LabelMethod {
    /// The `label_method` string used in dataset records.
    pub fn tag(self) -> &'static str {
        match self {
            LabelMethod::Exact => "exact",
            LabelMethod::MonteCarlo { .. } => "mc",
        }
    }

    pub fn mc_samples(self) -> Option<u64> {
        match self {
            LabelMethod::Exact => None,
            LabelMethod::MonteCarlo { samples } => Some(samples),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanzhafVector {
    /// Per-agent values in units of flow. For Monte-Carlo labels this is the
    /// sample mean of the absolute marginal contributions.
    pub raw: Vec<f64>,
    /// Values rescaled to sum to one, or uniform when no agent contributes.
    pub normalized: Vec<f64>,
    pub method: LabelMethod,
}

/// When to use exact enumeration and how to size Monte-Carlo labeling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelPolicy {
    pub exact_max_agents: usize,
    pub mc_samples: u64,
    pub epsilon: f64,
}

impl Default for LabelPolicy {
    fn default() -> Self {
        LabelPolicy {
            exact_max_agents: 10,
            mc_samples: 10_000,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl LabelPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.exact_max_agents > EXACT_AGENT_CAP {
            return Err(Error::InvalidPolicy(format!(
                "exact_max_agents {} exceeds the cap of {EXACT_AGENT_CAP}",
                self.exact_max_agents
            )));
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidPolicy("mc_samples must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidPolicy(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Where Monte-Carlo coalition values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McStrategy {
    /// Tabulate every coalition up front when that takes fewer max-flow
    /// calls than sampling would (`2^m <= N * (m + 1)`), otherwise solve
    /// each sampled coalition directly.
    #[default]
    Auto,
    /// One max-flow call per evaluation, `N * (m + 1)` in total.
    Direct,
    /// Always tabulate all `2^m` coalitions first.
    Tabulated,
}

fn normalize(totals: &[f64], epsilon: f64) -> Vec<f64> {
    let sum: f64 = totals.iter().sum();
    if sum > epsilon {
        totals.iter().map(|x| x / sum).collect()
    } else {
        vec![1.0 / totals.len() as f64; totals.len()]
    }
}

/// Value of every coalition, indexed by its membership bits.
pub fn coalition_table(instance: &GameInstance) -> Result<Vec<u64>> {
    let m = instance.agent_count();
    if m > EXACT_AGENT_CAP {
        return Err(Error::AgentCountTooLarge {
            agents: m,
            cap: EXACT_AGENT_CAP,
        });
    }
    let size = 1usize << m;
    let solver = MaxFlowSolver::new(instance);
    if size < PARALLEL_TABLE_MIN {
        let mut solver = solver;
        return Ok((0..size as u64)
            .map(|bits| solver.coalition_value(Coalition::from_bits(bits, m)))
            .collect());
    }
    Ok((0..size)
        .into_par_iter()
        .with_min_len(PARALLEL_TABLE_MIN)
        .map_init(
            || solver.clone(),
            |solver, bits| solver.coalition_value(Coalition::from_bits(bits as u64, m)),
        )
        .collect())
}

fn banzhaf_from_table(table: &[u64], m: usize, epsilon: f64) -> BanzhafVector {
    // Marginals are non-negative integers, so the sums are exact and
    // independent of evaluation order.
    let totals: Vec<u64> = (0..m)
        .map(|j| {
            let bit = 1usize << j;
            (0..table.len())
                .filter(|c| c & bit == 0)
                .map(|c| table[c | bit] - table[c])
                .sum()
        })
        .collect();
    let scale = (1u64 << (m - 1)) as f64;
    let raw: Vec<f64> = totals.iter().map(|&t| t as f64 / scale).collect();
    let normalized = normalize(&raw, epsilon);
    BanzhafVector {
        raw,
        normalized,
        method: LabelMethod::Exact,
    }
}

/// Exact Banzhaf vector by enumerating all `2^m` coalitions.
pub fn exact_banzhaf(instance: &GameInstance) -> Result<BanzhafVector> {
    exact_banzhaf_with(instance, DEFAULT_EPSILON)
}

pub fn exact_banzhaf_with(instance: &GameInstance, epsilon: f64) -> Result<BanzhafVector> {
    let table = coalition_table(instance)?;
    Ok(banzhaf_from_table(&table, instance.agent_count(), epsilon))
}

/// Monte-Carlo Banzhaf estimate from `samples` uniformly drawn coalitions.
///
/// Each sample evaluates the drawn coalition and every single-agent toggle
/// of it, accumulating `|v(C) - v(C xor {j})|` per agent. Output is fully
/// determined by `(instance, samples, seed)`.
pub fn mc_banzhaf(instance: &GameInstance, samples: u64, seed: u64) -> Result<BanzhafVector> {
    mc_banzhaf_with(instance, samples, seed, McStrategy::Auto, DEFAULT_EPSILON)
}

pub fn mc_banzhaf_with(
    instance: &GameInstance,
    samples: u64,
    seed: u64,
    strategy: McStrategy,
    epsilon: f64,
) -> Result<BanzhafVector> {
    if samples == 0 {
        return Err(Error::InvalidPolicy(
            "Monte-Carlo needs at least one sample".into(),
        ));
    }
    let m = instance.agent_count();
    let evaluations = samples.saturating_mul(m as u64 + 1);
    let tabulate = match strategy {
        McStrategy::Direct => false,
        McStrategy::Tabulated => true,
        McStrategy::Auto => m <= EXACT_AGENT_CAP && (1u64 << m) <= evaluations,
    };

    let mut rng = rng_from_seed(seed);
    let mut totals = vec![0u64; m];
    if tabulate {
        let table = coalition_table(instance)?;
        for _ in 0..samples {
            let c = Coalition::from_bits(rng.next_u64(), m);
            let v = table[c.bits() as usize];
            for (j, total) in totals.iter_mut().enumerate() {
                *total += v.abs_diff(table[c.toggle(j).bits() as usize]);
            }
        }
    } else {
        let mut solver = MaxFlowSolver::new(instance);
        for _ in 0..samples {
            let c = Coalition::from_bits(rng.next_u64(), m);
            let v = solver.coalition_value(c);
            for (j, total) in totals.iter_mut().enumerate() {
                *total += v.abs_diff(solver.coalition_value(c.toggle(j)));
            }
        }
    }

    let totals: Vec<f64> = totals.iter().map(|&t| t as f64).collect();
    let raw = totals.iter().map(|t| t / samples as f64).collect();
    Ok(BanzhafVector {
        raw,
        normalized: normalize(&totals, epsilon),
        method: LabelMethod::MonteCarlo { samples },
    })
}

/// Ground-truth label: exact when `m <= policy.exact_max_agents`, otherwise
/// Monte-Carlo with `policy.mc_samples` samples.
pub fn label(instance: &GameInstance, policy: &LabelPolicy, seed: u64) -> Result<BanzhafVector> {
    policy.validate()?;
    if instance.agent_count() <= policy.exact_max_agents {
        exact_banzhaf_with(instance, policy.epsilon)
    } else {
        mc_banzhaf_with(
            instance,
            policy.mc_samples,
            seed,
            McStrategy::Auto,
            policy.epsilon,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example::worked_example;
    use crate::flow::tests::arb_game;
    use crate::game::Edge;
    use crate::netgen::{generate_instance, GenConfig};
    use proptest::prelude::*;

    /// Straight from the definition: for each agent, enumerate coalitions of
    /// the other agents and evaluate both sides with a fresh solver.
    fn definition_oracle(g: &GameInstance) -> Vec<f64> {
        let m = g.agent_count();
        (0..m)
            .map(|j| {
                let others: Vec<usize> = (0..m).filter(|&k| k != j).collect();
                let mut sum = 0i64;
                for bits in 0u64..1 << others.len() {
                    let members: Vec<usize> = others
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| bits >> k & 1 == 1)
                        .map(|(_, &a)| a)
                        .collect();
                    let c = Coalition::from_members(&members, m);
                    let with = crate::game::coalition_value(g, c.with(j)).unwrap() as i64;
                    let without = crate::game::coalition_value(g, c).unwrap() as i64;
                    sum += with - without;
                }
                sum as f64 / (1u64 << (m - 1)) as f64
            })
            .collect()
    }

    #[test]
    fn worked_example_exact() {
        let b = exact_banzhaf(&worked_example()).unwrap();
        assert_eq!(b.raw, vec![1.5, 1.0, 2.5]);
        for (x, y) in b.normalized.iter().zip([0.3, 0.2, 0.5]) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(b.method, LabelMethod::Exact);
    }

    #[test]
    fn coalition_table_of_worked_example() {
        assert_eq!(
            coalition_table(&worked_example()).unwrap(),
            vec![0, 0, 0, 0, 0, 3, 2, 5]
        );
    }

    #[test]
    fn single_agent_gets_everything() {
        let g = GameInstance::new(
            3,
            0,
            2,
            1,
            vec![
                Edge::new(0, 1, 4, 0),
                Edge::new(1, 2, 7, 0),
                Edge::new(0, 2, 2, 0),
            ],
        )
        .unwrap();
        let exact = exact_banzhaf(&g).unwrap();
        assert_eq!(exact.raw, vec![6.0]);
        assert_eq!(exact.normalized, vec![1.0]);
        for seed in [0, 1, 99] {
            let mc = mc_banzhaf(&g, 17, seed).unwrap();
            assert_eq!(mc.normalized, vec![1.0]);
        }
    }

    #[test]
    fn null_player_gets_zero() {
        // Agent 1's edge 1->2 dead-ends at node 2.
        let g = GameInstance::new(
            4,
            0,
            3,
            2,
            vec![
                Edge::new(0, 1, 3, 0),
                Edge::new(1, 3, 3, 0),
                Edge::new(1, 2, 5, 1),
            ],
        )
        .unwrap();
        let b = exact_banzhaf(&g).unwrap();
        assert_eq!(b.raw[1], 0.0);
        assert_eq!(b.normalized, vec![1.0, 0.0]);
    }

    #[test]
    fn no_flow_gives_uniform_label() {
        let g = GameInstance::new(
            4,
            0,
            3,
            3,
            vec![
                Edge::new(0, 1, 3, 0),
                Edge::new(1, 2, 3, 1),
                Edge::new(2, 1, 5, 2),
            ],
        )
        .unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(mc_banzhaf(&g, 100, 5).unwrap().normalized, vec![third; 3]);
        let exact = exact_banzhaf(&g).unwrap();
        assert_eq!(exact.raw, vec![0.0; 3]);
        assert_eq!(exact.normalized, vec![third; 3]);
    }

    #[test]
    fn exact_refuses_too_many_agents() {
        let m = 26;
        let edges = (0..m).map(|j| Edge::new(0, j + 1, 1, j)).collect();
        let g = GameInstance::new(m + 2, 0, m + 1, m, edges).unwrap();
        assert!(matches!(
            exact_banzhaf(&g),
            Err(Error::AgentCountTooLarge {
                agents: 26,
                cap: 25
            })
        ));
    }

    #[test]
    fn mc_worked_example_close_to_exact() {
        let mc = mc_banzhaf(&worked_example(), 10_000, 20240501).unwrap();
        for (x, y) in mc.normalized.iter().zip([0.3, 0.2, 0.5]) {
            assert!((x - y).abs() <= 0.03, "{:?}", mc.normalized);
        }
        assert_eq!(mc.method, LabelMethod::MonteCarlo { samples: 10_000 });
    }

    #[test]
    fn mc_strategies_agree_bit_for_bit() {
        let cfg = GenConfig::new(12, 5, 0.5).with_seed(3);
        let g = generate_instance(&cfg, 0).unwrap().instance;
        let direct = mc_banzhaf_with(&g, 500, 11, McStrategy::Direct, DEFAULT_EPSILON).unwrap();
        let table = mc_banzhaf_with(&g, 500, 11, McStrategy::Tabulated, DEFAULT_EPSILON).unwrap();
        assert_eq!(direct, table);
        assert_eq!(direct, mc_banzhaf(&g, 500, 11).unwrap());
    }

    #[test]
    fn mc_rejects_zero_samples() {
        assert!(mc_banzhaf(&worked_example(), 0, 1).is_err());
    }

    #[test]
    fn label_dispatch() {
        let policy = LabelPolicy::default();
        let exact_at = |m: usize| {
            let cfg = GenConfig::new(20, m, 0.5).with_seed(1);
            let g = generate_instance(&cfg, 0).unwrap().instance;
            label(&g, &policy, 9).unwrap().method
        };
        assert_eq!(exact_at(5), LabelMethod::Exact);
        assert_eq!(exact_at(10), LabelMethod::Exact);
        let cheap = LabelPolicy {
            mc_samples: 50,
            ..policy
        };
        let g = generate_instance(&GenConfig::new(20, 20, 0.5).with_seed(1), 0)
            .unwrap()
            .instance;
        assert_eq!(
            label(&g, &cheap, 9).unwrap().method,
            LabelMethod::MonteCarlo { samples: 50 }
        );
    }

    #[test]
    fn policy_validation() {
        assert!(LabelPolicy::default().validate().is_ok());
        let bad = [
            LabelPolicy {
                exact_max_agents: 26,
                ..Default::default()
            },
            LabelPolicy {
                mc_samples: 0,
                ..Default::default()
            },
            LabelPolicy {
                epsilon: 0.0,
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn parallel_table_matches_sequential_solver() {
        let cfg = GenConfig::new(10, 13, 0.9).with_seed(8);
        let g = generate_instance(&cfg, 0).unwrap().instance;
        let table = coalition_table(&g).unwrap();
        let mut solver = MaxFlowSolver::new(&g);
        for bits in (0..table.len() as u64).step_by(97) {
            assert_eq!(
                table[bits as usize],
                solver.coalition_value(Coalition::from_bits(bits, 13))
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn exact_matches_definition(g in arb_game(6, 5)) {
            let b = exact_banzhaf(&g).unwrap();
            prop_assert_eq!(b.raw, definition_oracle(&g));
        }

        #[test]
        fn normalized_sums_to_one(g in arb_game(7, 5), seed in any::<u64>()) {
            for b in [exact_banzhaf(&g).unwrap(), mc_banzhaf(&g, 64, seed).unwrap()] {
                let sum: f64 = b.normalized.iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9);
                prop_assert!(b.normalized.iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }

        #[test]
        fn mc_is_deterministic(g in arb_game(7, 5), seed in any::<u64>()) {
            let a = mc_banzhaf_with(&g, 50, seed, McStrategy::Direct, DEFAULT_EPSILON).unwrap();
            let b = mc_banzhaf_with(&g, 50, seed, McStrategy::Direct, DEFAULT_EPSILON).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
