//! Generic airway tree and the hop-distance transition prior.
//!
//! Tree description files are line oriented, UTF-8:
//!
//! ```text
//! # comment
//! node TRA
//! node RMB
//! edge TRA RMB
//! root TRA
//! ```
//!
//! Labels are whitespace-free tokens. `#` starts a comment that runs to the
//! end of the line. Declarations may appear in any order; edges may only
//! reference declared nodes.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Label every tree must use for its root node.
pub const ROOT_LABEL: &str = "TRA";

const BUNDLED_TREE: &str = include_str!("../data/bronchial_tree.txt");

/// Undirected tree of named airway segments rooted at the trachea.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    nodes: Vec<String>,
    edges: Vec<(usize, usize)>,
    root_index: usize,
    adjacency: Vec<Vec<usize>>,
    // n x n hop counts, row-major
    distances: Vec<u32>,
}

impl TreeModel {
    /// Builds and validates a tree. Fails on duplicate labels, a root not
    /// labelled `TRA`, cycles, or disconnected nodes.
    pub fn new(nodes: Vec<String>, edges: Vec<(usize, usize)>, root_index: usize) -> Result<Self> {
        let n = nodes.len();
        if n < 2 {
            return Err(Error::InvalidTree(format!("need at least 2 nodes, got {n}")));
        }
        let mut seen = HashSet::with_capacity(n);
        for label in &nodes {
            if label.is_empty() || label.chars().any(char::is_whitespace) {
                return Err(Error::InvalidTree(format!("bad node label {label:?}")));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::InvalidTree(format!("duplicate node label {label}")));
            }
        }
        if root_index >= n {
            return Err(Error::NodeIndex { index: root_index, n });
        }
        if nodes[root_index] != ROOT_LABEL {
            return Err(Error::InvalidTree(format!(
                "root must be {ROOT_LABEL}, got {}",
                nodes[root_index]
            )));
        }

        let mut adjacency = vec![Vec::new(); n];
        let mut edge_set = HashSet::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return Err(Error::NodeIndex { index: a.max(b), n });
            }
            if a == b {
                return Err(Error::InvalidTree(format!("self-loop on {}", nodes[a])));
            }
            if !edge_set.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidTree(format!(
                    "duplicate edge {} {}",
                    nodes[a], nodes[b]
                )));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }

        let mut distances = vec![u32::MAX; n * n];
        for source in 0..n {
            bfs_hops(&adjacency, source, &mut distances[source * n..(source + 1) * n]);
        }
        if let Some(unreached) = (0..n).find(|&j| distances[root_index * n + j] == u32::MAX) {
            return Err(Error::InvalidTree(format!(
                "node {} is not connected to {ROOT_LABEL}",
                nodes[unreached]
            )));
        }
        // connected with n-1 edges <=> acyclic
        if edges.len() != n - 1 {
            return Err(Error::InvalidTree(format!(
                "graph contains a cycle ({} edges for {n} nodes)",
                edges.len()
            )));
        }

        Ok(Self {
            nodes,
            edges,
            root_index,
            adjacency,
            distances,
        })
    }

    /// The bundled 15-node generic bronchial tree.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_TREE).expect("bundled tree is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut nodes: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut raw_edges: Vec<(usize, String, String)> = Vec::new();
        let mut root: Option<(usize, String)> = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let content = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = content.split_whitespace().collect();
            match tokens.as_slice() {
                [] => {}
                ["node", label] => {
                    if index.contains_key(*label) {
                        return Err(Error::InvalidTree(format!("duplicate node label {label}")));
                    }
                    index.insert(label.to_string(), nodes.len());
                    nodes.push(label.to_string());
                }
                ["edge", a, b] => raw_edges.push((line_no, a.to_string(), b.to_string())),
                ["root", label] => {
                    if root.is_some() {
                        return Err(Error::parse(line_no, "root declared twice"));
                    }
                    root = Some((line_no, label.to_string()));
                }
                [keyword, ..] => {
                    return Err(Error::parse(
                        line_no,
                        format!("expected `node <label>`, `edge <a> <b>` or `root <label>`, got `{keyword}` with {} argument(s)", tokens.len() - 1),
                    ))
                }
            }
        }

        let lookup = |line: usize, label: &str| {
            index
                .get(label)
                .copied()
                .ok_or_else(|| Error::parse(line, format!("unknown node {label}")))
        };
        let edges = raw_edges
            .iter()
            .map(|(line, a, b)| Ok((lookup(*line, a)?, lookup(*line, b)?)))
            .collect::<Result<Vec<_>>>()?;
        let (root_line, root_label) =
            root.ok_or_else(|| Error::InvalidTree(format!("no root declared (expected root {ROOT_LABEL})")))?;
        let root_index = lookup(root_line, &root_label)?;

        Self::new(nodes, edges, root_index)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form: nodes, then edges, then the root.
    pub fn to_spec_string(&self) -> String {
        let mut out = String::new();
        for label in &self.nodes {
            let _ = writeln!(out, "node {label}");
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "edge {} {}", self.nodes[a], self.nodes[b]);
        }
        let _ = writeln!(out, "root {}", self.nodes[self.root_index]);
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_spec_string()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.nodes
    }

    pub fn label(&self, index: usize) -> &str {
        &self.nodes[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.nodes.iter().position(|l| l == label)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn root_index(&self) -> usize {
        self.root_index
    }

    pub fn neighbors(&self, index: usize) -> &[usize] {
        &self.adjacency[index]
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Hop count of the unique path between `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> Result<u32> {
        let n = self.len();
        for index in [i, j] {
            if index >= n {
                return Err(Error::NodeIndex { index, n });
            }
        }
        Ok(self.distances[i * n + j])
    }

    pub(crate) fn hops(&self, i: usize, j: usize) -> u32 {
        self.distances[i * self.len() + j]
    }

    pub fn depth(&self, index: usize) -> u32 {
        self.hops(self.root_index, index)
    }

    pub fn diameter(&self) -> u32 {
        self.distances.iter().copied().max().unwrap_or(0)
    }

    /// Node sequence from `from` to `to`, both inclusive.
    pub fn path(&self, from: usize, to: usize) -> Result<Vec<usize>> {
        let d = self.distance(from, to)?;
        let mut path = Vec::with_capacity(d as usize + 1);
        let mut current = from;
        path.push(current);
        while current != to {
            current = self.adjacency[current]
                .iter()
                .copied()
                .find(|&next| self.hops(next, to) + 1 == self.hops(current, to))
                .expect("tree path always has a next hop");
            path.push(current);
        }
        Ok(path)
    }

    /// Relabels node `i` as `perm[i]` in a new tree with the same structure.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        if perm.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: perm.len(),
            });
        }
        let mut nodes = vec![String::new(); n];
        for (old, &new) in perm.iter().enumerate() {
            nodes[new] = self.nodes[old].clone();
        }
        let edges = self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        Self::new(nodes, edges, perm[self.root_index])
    }
}

fn bfs_hops(adjacency: &[Vec<usize>], source: usize, out: &mut [u32]) {
    out[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if out[v] == u32::MAX {
                out[v] = out[u] + 1;
                queue.push_back(v);
            }
        }
    }
}

/// Row-stochastic node transition prior built from hop distances.
///
/// Before normalization, moving from `j` to `i` weighs `1 - alpha * (d + 1)`
/// when the hop distance `d <= m`, and `alpha * (d + 1)` otherwise. Each row
/// is then divided by its sum.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    n: usize,
    // row = from, column = to
    matrix: Vec<f64>,
    alpha: f64,
    m: u32,
}

impl TransitionModel {
    pub fn new(tree: &TreeModel, alpha: f64, m: u32) -> Result<Self> {
        let max = Self::max_alpha(tree);
        if !(alpha > 0.0 && alpha < max) {
            return Err(Error::InvalidAlpha { alpha, max });
        }
        let n = tree.len();
        let mut matrix = vec![0.0; n * n];
        for (from, row) in matrix.chunks_exact_mut(n).enumerate() {
            for (to, entry) in row.iter_mut().enumerate() {
                let d = f64::from(tree.hops(from, to));
                *entry = if tree.hops(from, to) <= m {
                    1.0 - alpha * (d + 1.0)
                } else {
                    alpha * (d + 1.0)
                };
            }
            let total: f64 = row.iter().sum();
            for entry in row.iter_mut() {
                *entry /= total;
            }
        }
        Ok(Self {
            n,
            matrix,
            alpha,
            m,
        })
    }

    /// Exclusive upper bound on alpha that keeps every weight positive.
    pub fn max_alpha(tree: &TreeModel) -> f64 {
        1.0 / (f64::from(tree.diameter()) + 1.0)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// Probability of moving from node `from` to node `to` in one frame.
    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.matrix[from * self.n + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.matrix[from * self.n..(from + 1) * self.n]
    }

    /// Builds a model from an explicit row-stochastic matrix. Used for
    /// generic filtering tests where the prior is not tree-derived.
    pub fn from_matrix(n: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::Dimension {
                expected: n * n,
                actual: matrix.len(),
            });
        }
        if matrix.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParam("transition entries must be finite and non-negative".into()));
        }
        for row in matrix.chunks_exact(n) {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParam(format!("transition row sums to {total}")));
            }
        }
        Ok(Self {
            n,
            matrix,
            alpha: f64::NAN,
            m: 0,
        })
    }
}
