//! The four-node, three-agent illustrative game.
//!
//! Nodes are `s = 0`, `a = 1`, `b = 2`, `t = 3`. Agent 0 controls `(s,a)`
//! and `(a,b)`, agent 1 controls `(s,b)`, agent 2 controls both edges into
//! the sink and therefore holds a veto.

use crate::game::{Edge, GameInstance};

pub const NODE_NAMES: [&str; 4] = ["s", "a", "b", "t"];

pub fn worked_example() -> GameInstance {
    let edges = vec![
        Edge::new(0, 1, 3, 0),
        Edge::new(0, 2, 2, 1),
        Edge::new(1, 2, 1, 0),
        Edge::new(1, 3, 2, 2),
        Edge::new(2, 3, 3, 2),
    ];
    GameInstance::new(4, 0, 3, 3, edges).expect("worked example is a valid game")
}
