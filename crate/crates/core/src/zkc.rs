//! Zachary's karate club, bundled.
//!
//! 34 members and 78 ties in the standard Zachary ordering (file ids 1..=34,
//! node indices 0..=33). Labels code the members split with 1 for Mr. Hi's
//! faction and 0 for the officer's.

use crate::graph::{parse_labels, Graph, NodeValues};

pub const EDGE_LIST: &str = include_str!("../data/zkc.edges");
pub const LABELS_CSV: &str = include_str!("../data/zkc_labels.csv");

pub fn graph() -> Graph {
    Graph::parse_edge_list(EDGE_LIST).expect("bundled edge list parses")
}

pub fn labels() -> NodeValues {
    parse_labels(LABELS_CSV, 34).expect("bundled labels parse")
}
