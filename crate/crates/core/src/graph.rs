//! Undirected simple graphs and the dense operators built from them.
//!
//! Node ids are 0-based internally. The text formats use 1-based ids, which
//! is how the karate-club data is conventionally numbered.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Per-node real values: labels `y` coded {0,1}, or an embedding `x`.
pub type NodeValues = DVector<f64>;

/// Immutable undirected simple graph.
///
/// Adjacency is stored as sorted neighbour lists, which is what the samplers
/// need; dense matrices are derived on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    neighbours: Vec<Vec<usize>>,
    n_edges: usize,
}

impl Graph {
    /// Builds a graph on `n_nodes` nodes. Duplicate edges collapse; self-loops
    /// and out-of-range endpoints are rejected.
    pub fn from_edges<I>(n_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n_nodes == 0 {
            return Err(Error::invalid("graph must have at least one node"));
        }
        let mut neighbours = vec![Vec::new(); n_nodes];
        for (line, (i, j)) in edges.into_iter().enumerate() {
            for index in [i, j] {
                if index >= n_nodes {
                    return Err(Error::NodeOutOfRange { index, n_nodes });
                }
            }
            if i == j {
                return Err(Error::SelfLoop { line: line + 1, node: i });
            }
            neighbours[i].push(j);
            neighbours[j].push(i);
        }
        let mut n_edges = 0;
        for row in &mut neighbours {
            row.sort_unstable();
            row.dedup();
            n_edges += row.len();
        }
        Ok(Graph {
            neighbours,
            n_edges: n_edges / 2,
        })
    }

    /// Parses a 1-based edge list: one `i j` pair per line, `#` comments.
    /// The node count is the largest id seen.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut max_id = 0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = lineno + 1;
            let mut tokens = line.split_whitespace();
            let mut next_id = || -> Result<usize> {
                let tok = tokens.next().ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: "expected two node ids".into(),
                })?;
                match tok.parse::<usize>() {
                    Ok(0) | Err(_) => Err(Error::Parse {
                        line: lineno,
                        message: format!("`{tok}` is not a positive integer node id"),
                    }),
                    Ok(id) => Ok(id),
                }
            };
            let a = next_id()?;
            let b = next_id()?;
            if tokens.next().is_some() {
                return Err(Error::Parse {
                    line: lineno,
                    message: "trailing tokens after edge".into(),
                });
            }
            if a == b {
                return Err(Error::SelfLoop { line: lineno, node: a });
            }
            max_id = max_id.max(a).max(b);
            edges.push((a - 1, b - 1));
        }
        if edges.is_empty() {
            return Err(Error::EmptyInput);
        }
        Graph::from_edges(max_id, edges)
    }

    pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Self> {
        Graph::parse_edge_list(&std::fs::read_to_string(path)?)
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbours.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbours[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbours.iter().map(Vec::len).collect()
    }

    /// Sorted neighbourhood ν_i.
    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.neighbours[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbours[i].binary_search(&j).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbours
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn check_node(&self, index: usize) -> Result<()> {
        if index < self.n_nodes() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                index,
                n_nodes: self.n_nodes(),
            })
        }
    }

    pub fn first_isolated(&self) -> Option<usize> {
        self.neighbours.iter().position(Vec::is_empty)
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &j in &self.neighbours[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == n
    }

    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        let mut a = DMatrix::zeros(n, n);
        for (i, j) in self.edges() {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }
}

/// Parses a `node_id,label` CSV (1-based ids, optional header) into a
/// length-`n_nodes` 0/1 vector. Every node must be labelled exactly once.
pub fn parse_labels(text: &str, n_nodes: usize) -> Result<NodeValues> {
    let mut values = vec![None; n_nodes];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse_err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        if fields.len() != 2 {
            return Err(parse_err("expected `node_id,label`".into()));
        }
        let id = match fields[0].parse::<usize>() {
            Ok(id) => id,
            // header row
            Err(_) if lineno == 1 => continue,
            Err(_) => return Err(parse_err(format!("bad node id `{}`", fields[0]))),
        };
        if id == 0 || id > n_nodes {
            return Err(parse_err(format!("node id {id} outside 1..={n_nodes}")));
        }
        let label = match fields[1] {
            "0" => 0.0,
            "1" => 1.0,
            other => return Err(parse_err(format!("label `{other}` is not 0 or 1"))),
        };
        if values[id - 1].replace(label).is_some() {
            return Err(parse_err(format!("node {id} labelled twice")));
        }
    }
    match values.iter().position(Option::is_none) {
        Some(missing) => Err(Error::invalid(format!("node {} has no label", missing + 1))),
        None => Ok(DVector::from_iterator(
            n_nodes,
            values.into_iter().map(|v| v.unwrap_or_default()),
        )),
    }
}

pub fn load_labels(path: impl AsRef<Path>, n_nodes: usize) -> Result<NodeValues> {
    parse_labels(&std::fs::read_to_string(path)?, n_nodes)
}

/// m_ij = a_ij / sqrt(d_i d_j). Fails on isolated nodes.
pub fn normalized_adjacency(g: &Graph) -> Result<DMatrix<f64>> {
    if let Some(i) = g.first_isolated() {
        return Err(Error::IsolatedNode(i));
    }
    let n = g.n_nodes();
    let d = g.degrees();
    let mut m = DMatrix::zeros(n, n);
    for (i, j) in g.edges() {
        let v = 1.0 / ((d[i] * d[j]) as f64).sqrt();
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    Ok(m)
}

/// m̃_ij = (a_ij + [i = j]) / sqrt((1 + d_i)(1 + d_j)).
pub fn looped_normalized_adjacency(g: &Graph) -> DMatrix<f64> {
    let n = g.n_nodes();
    let d = g.degrees();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 1.0 / (1 + d[i]) as f64;
    }
    for (i, j) in g.edges() {
        let v = 1.0 / (((1 + d[i]) * (1 + d[j])) as f64).sqrt();
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    m
}

/// L̇ = I − M.
pub fn normalized_laplacian(g: &Graph) -> Result<DMatrix<f64>> {
    let m = normalized_adjacency(g)?;
    Ok(DMatrix::identity(g.n_nodes(), g.n_nodes()) - m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k3() -> Graph {
        Graph::parse_edge_list("1 2\n2 3\n1 3").unwrap()
    }

    #[test]
    fn parses_triangle() {
        let g = k3();
        assert_eq!(g.n_nodes(), 3);
        assert_eq!(g.n_edges(), 3);
        assert_eq!(g.degrees(), vec![2, 2, 2]);
    }

    #[test]
    fn duplicate_edges_are_idempotent() {
        let g = Graph::parse_edge_list("# c\n1 2\n2 1\n1 2\n\n2 3\n").unwrap();
        assert_eq!(g.n_edges(), 2);
        assert_eq!(g.neighbours(1), &[0, 2]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            Graph::parse_edge_list("1 1"),
            Err(Error::SelfLoop { line: 1, node: 1 })
        ));
        assert!(matches!(
            Graph::parse_edge_list("1 x"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(Graph::parse_edge_list("0 2"), Err(Error::Parse { .. })));
        assert!(matches!(Graph::parse_edge_list("1 2 3"), Err(Error::Parse { .. })));
        assert!(matches!(Graph::parse_edge_list(""), Err(Error::EmptyInput)));
        assert!(matches!(Graph::parse_edge_list("# only\n"), Err(Error::EmptyInput)));
    }

    #[test]
    fn labels_with_and_without_header() {
        let y = parse_labels("node_id,label\n2,0\n1,1\n3,1\n", 3).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 0.0, 1.0]);
        let y = parse_labels("1,0\n2,1", 2).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 1.0]);
        assert!(parse_labels("1,0\n", 2).is_err());
        assert!(parse_labels("1,2\n2,0", 2).is_err());
        assert!(parse_labels("1,0\n1,1\n2,0", 2).is_err());
        assert!(parse_labels("1,0\n3,1\n2,0", 2).is_err());
    }

    #[test]
    fn normalized_adjacency_small_cases() {
        let m = normalized_adjacency(&k3()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 0.5 };
                assert!((m[(i, j)] - want).abs() < 1e-15);
            }
        }
        let edge = Graph::from_edges(2, [(0, 1)]).unwrap();
        assert_eq!(normalized_adjacency(&edge).unwrap()[(0, 1)], 1.0);
    }

    #[test]
    fn isolated_node_is_named() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        assert!(matches!(normalized_adjacency(&g), Err(Error::IsolatedNode(2))));
        assert!(matches!(normalized_laplacian(&g), Err(Error::IsolatedNode(2))));
    }

    #[test]
    fn looped_adjacency_small_cases() {
        let single = Graph::from_edges(1, std::iter::empty()).unwrap();
        assert_eq!(looped_normalized_adjacency(&single)[(0, 0)], 1.0);
        let m = looped_normalized_adjacency(&k3());
        assert!(m.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn connectivity() {
        assert!(k3().is_connected());
        assert!(!Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap().is_connected());
    }
}
