//! Compressed-sparse-row graphs and the small amount of machinery around them:
//! construction from edge pairs, degree statistics, text/binary ingestion and
//! synthetic generators.
//!
//! Edges are directed. Row `v` lists the neighbors whose embeddings are
//! aggregated into target `v`, so undirected inputs must be symmetrized first.

mod io;
mod synth;

pub use io::{load_edge_list, read_binary, read_edge_list_file, write_binary};
pub use synth::{gen_synthetic, SyntheticKind};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrGraph {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl CsrGraph {
    /// Builds a CSR from `(src, dst)` pairs. Rows are grouped by `src`, each row is
    /// sorted ascending and duplicates are kept.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut row_ptr = vec![0usize; num_nodes + 1];
        for (i, &(src, dst)) in edges.iter().enumerate() {
            if src >= num_nodes || dst >= num_nodes {
                return Err(Error::Input(format!(
                    "edge {i} ({src}, {dst}) references a node outside [0, {num_nodes})"
                )));
            }
            row_ptr[src + 1] += 1;
        }
        for v in 0..num_nodes {
            row_ptr[v + 1] += row_ptr[v];
        }
        let mut cursor = row_ptr.clone();
        let mut col_idx = vec![0usize; edges.len()];
        for &(src, dst) in edges {
            col_idx[cursor[src]] = dst;
            cursor[src] += 1;
        }
        for v in 0..num_nodes {
            col_idx[row_ptr[v]..row_ptr[v + 1]].sort_unstable();
        }
        Ok(Self { row_ptr, col_idx })
    }

    /// Wraps raw CSR arrays after checking every structural invariant.
    pub fn from_parts(row_ptr: Vec<usize>, col_idx: Vec<usize>) -> Result<Self> {
        let Some(&last) = row_ptr.last() else {
            return Err(Error::Input("row pointer array must hold at least one entry".into()));
        };
        if row_ptr[0] != 0 {
            return Err(Error::Input(format!("rowPtr[0] = {}, expected 0", row_ptr[0])));
        }
        if last != col_idx.len() {
            return Err(Error::Input(format!(
                "rowPtr[numNodes] = {last} but there are {} column entries",
                col_idx.len()
            )));
        }
        if let Some(w) = row_ptr.windows(2).position(|w| w[0] > w[1]) {
            return Err(Error::Input(format!("rowPtr decreases at node {w}")));
        }
        let num_nodes = row_ptr.len() - 1;
        if let Some(&bad) = col_idx.iter().find(|&&c| c >= num_nodes) {
            return Err(Error::Input(format!("column id {bad} outside [0, {num_nodes})")));
        }
        Ok(Self { row_ptr, col_idx })
    }

    pub fn num_nodes(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn degree(&self, v: usize) -> usize {
        self.row_ptr[v + 1] - self.row_ptr[v]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[v]..self.row_ptr[v + 1]]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    /// Edges in row-major order, i.e. the inverse of [`CsrGraph::from_edges`].
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |v| self.neighbors(v).iter().map(move |&u| (v, u)))
    }

    /// Number of edges held by the rows in `[lb, ub)`.
    pub fn edges_in(&self, lb: usize, ub: usize) -> usize {
        self.row_ptr[ub] - self.row_ptr[lb]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    /// `histogram[d]` is the number of nodes with degree `d`.
    pub histogram: Vec<usize>,
}

pub fn degree_stats(g: &CsrGraph) -> DegreeStats {
    let n = g.num_nodes();
    if n == 0 {
        return DegreeStats { min: 0, max: 0, mean: 0.0, histogram: Vec::new() };
    }
    let max = g.max_degree();
    let mut histogram = vec![0usize; max + 1];
    let mut min = usize::MAX;
    for v in 0..n {
        let d = g.degree(v);
        histogram[d] += 1;
        min = min.min(d);
    }
    DegreeStats { min, max, mean: g.num_edges() as f64 / n as f64, histogram }
}
