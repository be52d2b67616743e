//! Graph-regression features for a game instance.
//!
//! Nodes carry a role type (source 0, intermediate 1, sink 2) and raw
//! in/out degrees. Each edge carries `[z, onehot_0, .., onehot_{m-1}]` where
//! `z` is the capacity standardized within the graph (population standard
//! deviation; zero when all capacities are equal). With `pad_to = Some(w)`
//! the one-hot block and the label are zero-extended to width `w`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameInstance;

pub const SOURCE_TYPE: u8 = 0;
pub const INTERMEDIATE_TYPE: u8 = 1;
pub const SINK_TYPE: u8 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingMeta {
    pub n: usize,
    pub m: usize,
    pub p: Option<f64>,
    pub seed: Option<u64>,
    pub label_method: Option<String>,
    pub padded_to: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedGraph {
    pub node_types: Vec<u8>,
    pub edge_index: Vec<[usize; 2]>,
    pub edge_features: Vec<Vec<f64>>,
    pub degrees: Vec<[u32; 2]>,
    pub label: Vec<f64>,
    pub meta: EncodingMeta,
}

impl EncodedGraph {
    /// Width of the agent block (the padded width when padded).
    pub fn agent_width(&self) -> usize {
        self.meta.padded_to.unwrap_or(self.meta.m)
    }

    /// Recovers `(src, dst, controller)` for every edge from the one-hot
    /// block.
    pub fn control_map(&self) -> Vec<(usize, usize, usize)> {
        self.edge_index
            .iter()
            .zip(&self.edge_features)
            .map(|(&[src, dst], feat)| {
                let agent = feat[1..]
                    .iter()
                    .position(|&x| x == 1.0)
                    .expect("one-hot block has a set position");
                (src, dst, agent)
            })
            .collect()
    }
}

/// Per-node `(in_degree, out_degree)` over all edges of the instance.
pub fn degree_features(instance: &GameInstance) -> Vec<[u32; 2]> {
    let mut degrees = vec![[0u32; 2]; instance.node_count()];
    for e in instance.edges() {
        degrees[e.dst][0] += 1;
        degrees[e.src][1] += 1;
    }
    degrees
}

/// Capacities standardized with the population mean and standard deviation.
pub fn capacity_zscores(instance: &GameInstance) -> Vec<f64> {
    let caps: Vec<f64> = instance.edges().iter().map(|e| e.capacity as f64).collect();
    if caps.is_empty() {
        return caps;
    }
    let n = caps.len() as f64;
    let mean = caps.iter().sum::<f64>() / n;
    let var = caps.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return vec![0.0; caps.len()];
    }
    let std = var.sqrt();
    caps.iter().map(|c| (c - mean) / std).collect()
}

/// Encodes `instance` with its normalized Banzhaf `label`.
pub fn encode(
    instance: &GameInstance,
    label: &[f64],
    pad_to: Option<usize>,
) -> Result<EncodedGraph> {
    let m = instance.agent_count();
    if let Some(pad) = pad_to {
        if pad < m {
            return Err(Error::PadTooSmall {
                pad_to: pad,
                agents: m,
            });
        }
    }
    if label.len() != m {
        return Err(Error::LabelWidth {
            expected: m,
            got: label.len(),
        });
    }
    let width = pad_to.unwrap_or(m);

    let node_types = (0..instance.node_count())
        .map(|v| {
            if v == instance.source() {
                SOURCE_TYPE
            } else if v == instance.sink() {
                SINK_TYPE
            } else {
                INTERMEDIATE_TYPE
            }
        })
        .collect();

    let z = capacity_zscores(instance);
    let edge_features = instance
        .edges()
        .iter()
        .zip(z)
        .map(|(e, z)| {
            let mut row = vec![0.0; width + 1];
            row[0] = z;
            row[1 + e.controller] = 1.0;
            row
        })
        .collect();

    let mut padded_label = label.to_vec();
    padded_label.resize(width, 0.0);

    Ok(EncodedGraph {
        node_types,
        edge_index: instance.edges().iter().map(|e| [e.src, e.dst]).collect(),
        edge_features,
        degrees: degree_features(instance),
        label: padded_label,
        meta: EncodingMeta {
            n: instance.node_count(),
            m,
            p: None,
            seed: None,
            label_method: None,
            padded_to: pad_to,
        },
    })
}
