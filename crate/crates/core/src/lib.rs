//! Cardinal network flow games.
//!
//! Agents control the edges of a capacitated directed graph; the worth of a
//! coalition is the maximum source-to-sink flow through the edges its members
//! control. This crate evaluates that characteristic function, computes exact
//! and Monte-Carlo Banzhaf values, generates random game instances, encodes
//! them as graph-regression features and persists labeled datasets.

#![forbid(unsafe_code)]

pub mod banzhaf;
pub mod dataset;
pub mod encode;
mod error;
pub mod example;
pub mod flow;
pub mod game;
pub mod netgen;
pub mod rng;

pub use banzhaf::{
    exact_banzhaf, label, mc_banzhaf, mc_banzhaf_with, BanzhafVector, LabelMethod, LabelPolicy,
    McStrategy,
};
pub use encode::{degree_features, encode, EncodedGraph, EncodingMeta};
pub use error::{Error, Result};
pub use flow::{max_flow, MaxFlowSolver};
pub use game::{coalition_value, restrict, threshold_value, Coalition, Edge, GameInstance};
pub use netgen::{assign_capacities_and_agents, generate_graph, generate_instance, GenConfig};
