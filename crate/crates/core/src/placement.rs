//! Inter-GPU workload split and node-embedding placement.
//!
//! [`split_by_edges`] cuts the target-node id space into one contiguous chunk per
//! GPU so that every chunk carries roughly `ceil(E / n)` edges. [`NePlacement`]
//! records which GPU stores which node embeddings; [`NePlacement::translate`] maps
//! a global node id to its owner and the owner-local (rebased) row.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::costmodel::HardwareProfile;
use crate::error::{Error, Result};
use crate::graph::CsrGraph;

pub const FLOAT_BYTES: u64 = 4;
pub const INDEX_BYTES: u64 = 8;

/// Half-open node id range `[lb, ub)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRange {
    pub lb: usize,
    pub ub: usize,
}

impl NodeRange {
    pub fn new(lb: usize, ub: usize) -> Self {
        debug_assert!(lb <= ub);
        Self { lb, ub }
    }

    pub fn len(&self) -> usize {
        self.ub - self.lb
    }

    pub fn is_empty(&self) -> bool {
        self.lb == self.ub
    }

    pub fn contains(&self, id: usize) -> bool {
        self.lb <= id && id < self.ub
    }
}

impl fmt::Display for NodeRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.lb, self.ub)
    }
}

/// Per-GPU target-node chunks produced by [`split_by_edges`].
///
/// Split points are non-decreasing and lie in `(0, numNodes]`; they are strictly
/// increasing until the edge budget is exhausted, after which trailing chunks are
/// empty and their split points sit at `numNodes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSplit {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub split_points: Vec<usize>,
}

impl WorkloadSplit {
    pub fn num_gpus(&self) -> usize {
        self.split_points.len() + 1
    }

    pub fn edges_per_gpu_target(&self) -> usize {
        self.num_edges.div_ceil(self.num_gpus())
    }

    pub fn chunk_ranges(&self) -> Vec<NodeRange> {
        let mut bounds = Vec::with_capacity(self.num_gpus() + 1);
        bounds.push(0);
        bounds.extend_from_slice(&self.split_points);
        bounds.push(self.num_nodes);
        bounds.windows(2).map(|w| NodeRange::new(w[0], w[1])).collect()
    }

    pub fn chunk(&self, gpu: usize) -> NodeRange {
        let lb = if gpu == 0 { 0 } else { self.split_points[gpu - 1] };
        let ub = self.split_points.get(gpu).copied().unwrap_or(self.num_nodes);
        NodeRange::new(lb, ub)
    }

    pub fn chunk_edge_counts(&self, g: &CsrGraph) -> Vec<usize> {
        self.chunk_ranges().iter().map(|r| g.edges_in(r.lb, r.ub)).collect()
    }
}

/// Range-constrained binary search over the monotone row-pointer array.
///
/// For each of the first `n - 1` GPUs the split point is the smallest node id
/// `nid > lastPos` with `rowPtr[nid] >= min(rowPtr[lastPos] + ceil(E / n), E)`.
pub fn split_by_edges(g: &CsrGraph, num_gpus: usize) -> Result<WorkloadSplit> {
    if num_gpus == 0 {
        return Err(Error::Input("numGPUs must be at least 1".into()));
    }
    let n = g.num_nodes();
    let e = g.num_edges();
    let row_ptr = g.row_ptr();
    let e_per_gpu = e.div_ceil(num_gpus);
    let mut split_points = Vec::with_capacity(num_gpus - 1);
    let mut last = 0usize;
    for _ in 1..num_gpus {
        let nid = if last >= n {
            n
        } else {
            let target = (row_ptr[last] + e_per_gpu).min(e);
            // lower bound in (last, n]
            let (mut lo, mut hi) = (last + 1, n);
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                if row_ptr[mid] >= target {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            lo
        };
        split_points.push(nid);
        last = nid;
    }
    Ok(WorkloadSplit { num_nodes: n, num_edges: e, split_points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementMode {
    /// `n` equal-sized node ranges of `ceil(N / n)` ids each.
    EqualNodes,
    /// Embedding ranges coincide with the edge-balanced target chunks.
    #[default]
    FollowSplit,
}

impl std::str::FromStr for PlacementMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equal-nodes" | "equal" => Ok(Self::EqualNodes),
            "follow-split" | "follow" => Ok(Self::FollowSplit),
            other => Err(format!("unknown placement mode {other:?}")),
        }
    }
}

/// Where each GPU's node-embedding shard lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NePlacement {
    pub mode: PlacementMode,
    pub ranges: Vec<NodeRange>,
    pub dim: usize,
}

impl NePlacement {
    pub fn equal_nodes(num_nodes: usize, num_gpus: usize, dim: usize) -> Self {
        let per = num_nodes.div_ceil(num_gpus.max(1));
        let ranges = (0..num_gpus)
            .map(|g| NodeRange::new((g * per).min(num_nodes), ((g + 1) * per).min(num_nodes)))
            .collect();
        Self { mode: PlacementMode::EqualNodes, ranges, dim }
    }

    pub fn follow_split(split: &WorkloadSplit, dim: usize) -> Self {
        Self { mode: PlacementMode::FollowSplit, ranges: split.chunk_ranges(), dim }
    }

    pub fn num_gpus(&self) -> usize {
        self.ranges.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.ub)
    }

    /// Owner GPU of a global node id. Caller guarantees `id < num_nodes()`.
    pub fn owner(&self, id: usize) -> usize {
        self.ranges.partition_point(|r| r.ub <= id)
    }

    /// `(gpu, offset)` with `ranges[gpu].lb + offset == global_id`.
    pub fn translate(&self, global_id: usize) -> Result<(usize, usize)> {
        if global_id >= self.num_nodes() {
            return Err(Error::Input(format!(
                "node id {global_id} outside [0, {})",
                self.num_nodes()
            )));
        }
        let gpu = self.owner(global_id);
        Ok((gpu, global_id - self.ranges[gpu].lb))
    }
}

pub fn plan_ne_placement(
    g: &CsrGraph,
    num_gpus: usize,
    mode: PlacementMode,
    dim: usize,
) -> Result<NePlacement> {
    if num_gpus == 0 {
        return Err(Error::Input("numGPUs must be at least 1".into()));
    }
    if dim == 0 {
        return Err(Error::Input("embedding dimension must be at least 1".into()));
    }
    Ok(match mode {
        PlacementMode::EqualNodes => NePlacement::equal_nodes(g.num_nodes(), num_gpus, dim),
        PlacementMode::FollowSplit => NePlacement::follow_split(&split_by_edges(g, num_gpus)?, dim),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GpuFootprint {
    /// Embedding shard in the shared (remotely accessible) space.
    pub ne_bytes: u64,
    /// Graph-structure chunk in private device memory.
    pub gp_bytes: u64,
}

impl GpuFootprint {
    pub fn total(&self) -> u64 {
        self.ne_bytes + self.gp_bytes
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FootprintReport {
    pub per_gpu: Vec<GpuFootprint>,
    pub fits: bool,
}

impl FootprintReport {
    pub fn total_ne_bytes(&self) -> u64 {
        self.per_gpu.iter().map(|f| f.ne_bytes).sum()
    }
}

pub fn memory_footprint(
    g: &CsrGraph,
    placement: &NePlacement,
    split: &WorkloadSplit,
    hw: &HardwareProfile,
) -> Result<FootprintReport> {
    if placement.num_nodes() != g.num_nodes() || split.num_nodes != g.num_nodes() {
        return Err(Error::Input("graph, placement and split disagree on node count".into()));
    }
    if placement.num_gpus() != split.num_gpus() {
        return Err(Error::Input("placement and split disagree on GPU count".into()));
    }
    let per_gpu: Vec<GpuFootprint> = placement
        .ranges
        .iter()
        .zip(split.chunk_ranges())
        .map(|(ne, chunk)| {
            let ne_bytes = ne.len() as u64 * placement.dim as u64 * FLOAT_BYTES;
            let gp_entries = (chunk.len() + 1) as u64 + g.edges_in(chunk.lb, chunk.ub) as u64;
            GpuFootprint { ne_bytes, gp_bytes: gp_entries * INDEX_BYTES }
        })
        .collect();
    let fits = per_gpu.iter().all(|f| f.total() <= hw.device_mem_bytes);
    Ok(FootprintReport { per_gpu, fits })
}

/// Serialized form of a partition plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub split: WorkloadSplit,
    pub placement: NePlacement,
}
