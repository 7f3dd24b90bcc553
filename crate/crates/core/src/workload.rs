//! Per-GPU pipeline workload: local/remote CSR split, fixed-size neighbor
//! partitions, warp mapping and block grouping.

use serde::{Deserialize, Serialize};

use crate::costmodel::{WorkloadMix, self, KernelConfig, DIST_MAX, PS_MAX, WPB_MAX};
use crate::error::{Error, Result};
use crate::graph::CsrGraph;
use crate::placement::{NePlacement, NodeRange, WorkloadSplit};

/// CSR over a contiguous range of target nodes. Column entries keep global ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkCsr {
    pub targets: NodeRange,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl ChunkCsr {
    fn empty(targets: NodeRange) -> Self {
        Self { targets, row_ptr: vec![0; targets.len() + 1], col_idx: Vec::new() }
    }

    pub fn num_edges(&self) -> usize {
        self.col_idx.len()
    }

    /// Neighbors of the `row`-th target in the chunk (target id `targets.lb + row`).
    pub fn row(&self, row: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[row]..self.row_ptr[row + 1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartKind {
    Local,
    Remote,
}

/// The chunk's edges divided by where each neighbor's embedding lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalRemoteSplit {
    pub gpu: usize,
    pub local: ChunkCsr,
    pub remote: ChunkCsr,
}

impl LocalRemoteSplit {
    pub fn csr(&self, kind: PartKind) -> &ChunkCsr {
        match kind {
            PartKind::Local => &self.local,
            PartKind::Remote => &self.remote,
        }
    }

    pub fn targets(&self) -> NodeRange {
        self.local.targets
    }
}

/// Splits GPU `gpu`'s chunk into locally and remotely owned neighbors.
pub fn split_local_remote(
    g: &CsrGraph,
    split: &WorkloadSplit,
    placement: &NePlacement,
    gpu: usize,
) -> Result<LocalRemoteSplit> {
    if gpu >= split.num_gpus() {
        return Err(Error::Input(format!("gpu {gpu} out of range for {} GPUs", split.num_gpus())));
    }
    if placement.num_nodes() != g.num_nodes() || split.num_nodes != g.num_nodes() {
        return Err(Error::Input("graph, placement and split disagree on node count".into()));
    }
    let targets = split.chunk(gpu);
    let mut local = ChunkCsr::empty(targets);
    let mut remote = ChunkCsr::empty(targets);
    for (row, v) in (targets.lb..targets.ub).enumerate() {
        for &u in g.neighbors(v) {
            if placement.owner(u) == gpu {
                local.col_idx.push(u);
            } else {
                remote.col_idx.push(u);
            }
        }
        local.row_ptr[row + 1] = local.col_idx.len();
        remote.row_ptr[row + 1] = remote.col_idx.len();
    }
    Ok(LocalRemoteSplit { gpu, local, remote })
}

/// A slice of at most `ps` neighbors of one target, all of one kind. `start`
/// indexes into the kind's `col_idx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborPartition {
    pub target: usize,
    pub kind: PartKind,
    pub start: usize,
    pub len: usize,
}

impl NeighborPartition {
    pub fn neighbors<'a>(&self, split: &'a LocalRemoteSplit) -> &'a [usize] {
        &split.csr(self.kind).col_idx[self.start..self.start + self.len]
    }
}

fn check_range(name: &str, value: usize, max: usize) -> Result<()> {
    if (1..=max).contains(&value) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {value} outside [1, {max}]")))
    }
}

/// Cuts every row into `ceil(d / ps)` partitions; only the last of a row may be short.
pub fn partition_neighbors(csr: &ChunkCsr, kind: PartKind, ps: usize) -> Result<Vec<NeighborPartition>> {
    check_range("ps", ps, PS_MAX)?;
    Ok(chop_rows(csr, kind, ps))
}

/// One partition per non-empty row, regardless of its length.
pub fn whole_neighbor_lists(csr: &ChunkCsr, kind: PartKind) -> Vec<NeighborPartition> {
    chop_rows(csr, kind, usize::MAX)
}

fn chop_rows(csr: &ChunkCsr, kind: PartKind, ps: usize) -> Vec<NeighborPartition> {
    let mut parts = Vec::new();
    for row in 0..csr.targets.len() {
        let (mut start, end) = (csr.row_ptr[row], csr.row_ptr[row + 1]);
        while start < end {
            let len = (end - start).min(ps);
            parts.push(NeighborPartition { target: csr.targets.lb + row, kind, start, len });
            start += len;
        }
    }
    parts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRef {
    pub kind: PartKind,
    pub index: usize,
}

/// Partitions assigned to one warp: its local group followed by its remote group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpWorkload {
    pub warp_id: usize,
    pub tasks: Vec<TaskRef>,
}

impl WarpWorkload {
    pub fn of_kind(&self, kind: PartKind) -> impl Iterator<Item = usize> + '_ {
        self.tasks.iter().filter(move |t| t.kind == kind).map(|t| t.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mapping {
    /// Warp `w` takes local group `w` and remote group `w`.
    #[default]
    Interleaved,
    /// All local groups on the lowest warp ids, remote groups after them.
    Segregated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    #[default]
    Partitioned,
    WholeNeighborList,
}

fn group(kind: PartKind, range: std::ops::Range<usize>) -> impl Iterator<Item = TaskRef> {
    range.map(move |index| TaskRef { kind, index })
}

/// Pairs the `w`-th group of `dist` local partitions with the `w`-th group of
/// `dist` remote partitions. Produces `ceil(max(nL, nR) / dist)` warps; the
/// surplus of the longer list becomes single-kind warps.
pub fn interleave(n_local: usize, n_remote: usize, dist: usize) -> Result<Vec<WarpWorkload>> {
    check_range("dist", dist, DIST_MAX)?;
    let num_warps = n_local.max(n_remote).div_ceil(dist);
    Ok((0..num_warps)
        .map(|w| {
            let lo = w * dist;
            let local = group(PartKind::Local, lo.min(n_local)..(lo + dist).min(n_local));
            let remote = group(PartKind::Remote, lo.min(n_remote)..(lo + dist).min(n_remote));
            WarpWorkload { warp_id: w, tasks: local.chain(remote).collect() }
        })
        .collect())
}

/// Non-interleaved mapping: `ceil(nL / dist)` local-only warps, then
/// `ceil(nR / dist)` remote-only warps.
pub fn segregate(n_local: usize, n_remote: usize, dist: usize) -> Result<Vec<WarpWorkload>> {
    check_range("dist", dist, DIST_MAX)?;
    let local = (0..n_local.div_ceil(dist))
        .map(|w| group(PartKind::Local, w * dist..((w + 1) * dist).min(n_local)).collect());
    let remote = (0..n_remote.div_ceil(dist))
        .map(|w| group(PartKind::Remote, w * dist..((w + 1) * dist).min(n_remote)).collect());
    Ok(local
        .chain(remote)
        .enumerate()
        .map(|(warp_id, tasks)| WarpWorkload { warp_id, tasks })
        .collect())
}

/// Consecutive warps `[first_warp, first_warp + num_warps)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpan {
    pub first_warp: usize,
    pub num_warps: usize,
}

/// Groups warps `wpb` at a time; returns the blocks and the per-block shared memory.
pub fn map_to_blocks(num_warps: usize, cfg: &KernelConfig, dim: usize) -> Result<(Vec<BlockSpan>, u64)> {
    check_range("wpb", cfg.wpb, WPB_MAX)?;
    let blocks = (0..num_warps)
        .step_by(cfg.wpb)
        .map(|first_warp| BlockSpan { first_warp, num_warps: cfg.wpb.min(num_warps - first_warp) })
        .collect();
    Ok((blocks, costmodel::smem(cfg, dim)))
}

/// Everything the simulator needs to execute one GPU's aggregation kernel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelLaunchPlan {
    pub gpu: usize,
    pub config: KernelConfig,
    pub dim: usize,
    pub mapping: Mapping,
    pub granularity: Granularity,
    pub local_parts: Vec<NeighborPartition>,
    pub remote_parts: Vec<NeighborPartition>,
    pub warps: Vec<WarpWorkload>,
    pub blocks: Vec<BlockSpan>,
    pub smem_bytes_per_block: u64,
}

impl KernelLaunchPlan {
    pub fn build(
        split: &LocalRemoteSplit,
        cfg: &KernelConfig,
        dim: usize,
        mapping: Mapping,
        granularity: Granularity,
    ) -> Result<Self> {
        let (local_parts, remote_parts) = match granularity {
            Granularity::Partitioned => (
                partition_neighbors(&split.local, PartKind::Local, cfg.ps)?,
                partition_neighbors(&split.remote, PartKind::Remote, cfg.ps)?,
            ),
            Granularity::WholeNeighborList => (
                whole_neighbor_lists(&split.local, PartKind::Local),
                whole_neighbor_lists(&split.remote, PartKind::Remote),
            ),
        };
        let warps = match mapping {
            Mapping::Interleaved => interleave(local_parts.len(), remote_parts.len(), cfg.dist)?,
            Mapping::Segregated => segregate(local_parts.len(), remote_parts.len(), cfg.dist)?,
        };
        let (blocks, smem_bytes_per_block) = map_to_blocks(warps.len(), cfg, dim)?;
        Ok(Self {
            gpu: split.gpu,
            config: *cfg,
            dim,
            mapping,
            granularity,
            local_parts,
            remote_parts,
            warps,
            blocks,
            smem_bytes_per_block,
        })
    }

    pub fn parts(&self, kind: PartKind) -> &[NeighborPartition] {
        match kind {
            PartKind::Local => &self.local_parts,
            PartKind::Remote => &self.remote_parts,
        }
    }

    pub fn part(&self, task: TaskRef) -> Option<&NeighborPartition> {
        self.parts(task.kind).get(task.index)
    }

    pub fn num_edges(&self) -> usize {
        self.local_parts.iter().chain(&self.remote_parts).map(|p| p.len).sum()
    }

    pub fn mix(&self) -> WorkloadMix {
        WorkloadMix {
            local_parts: self.local_parts.len(),
            remote_parts: self.remote_parts.len(),
            local_edges: self.local_parts.iter().map(|p| p.len).sum(),
            remote_edges: self.remote_parts.iter().map(|p| p.len).sum(),
        }
    }

    /// Every task resolves to a partition of its kind, no partition is used twice,
    /// warp ids are dense, and blocks tile the warps in order.
    pub fn check_integrity(&self) -> Result<()> {
        let mut seen_local = vec![false; self.local_parts.len()];
        let mut seen_remote = vec![false; self.remote_parts.len()];
        for (i, w) in self.warps.iter().enumerate() {
            if w.warp_id != i {
                return Err(Error::Integrity(format!("warp at position {i} has id {}", w.warp_id)));
            }
            for t in &w.tasks {
                let seen = match t.kind {
                    PartKind::Local => &mut seen_local,
                    PartKind::Remote => &mut seen_remote,
                };
                match seen.get_mut(t.index) {
                    None => {
                        return Err(Error::Integrity(format!(
                            "warp {i} references unknown {:?} partition {}",
                            t.kind, t.index
                        )))
                    }
                    Some(true) => {
                        return Err(Error::Integrity(format!(
                            "{:?} partition {} assigned twice",
                            t.kind, t.index
                        )))
                    }
                    Some(s) => *s = true,
                }
                if self.parts(t.kind)[t.index].kind != t.kind {
                    return Err(Error::Integrity(format!("partition {} has the wrong kind", t.index)));
                }
            }
        }
        let mut next = 0;
        for b in &self.blocks {
            if b.first_warp != next || b.num_warps == 0 || b.num_warps > self.config.wpb {
                return Err(Error::Integrity(format!("block starting at warp {} is malformed", b.first_warp)));
            }
            next += b.num_warps;
        }
        if next != self.warps.len() {
            return Err(Error::Integrity("blocks do not cover every warp".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::{split_by_edges, PlacementMode};

    fn kinds(w: &WarpWorkload) -> String {
        w.tasks.iter().map(|t| if t.kind == PartKind::Local { 'L' } else { 'R' }).collect()
    }

    #[test]
    fn ownership_split() {
        // node 0 -> [1, 3]; GPU 0 owns [0, 2)
        let g = CsrGraph::from_edges(4, &[(0, 1), (0, 3), (2, 0), (3, 2)]).unwrap();
        let split = WorkloadSplit { num_nodes: 4, num_edges: 4, split_points: vec![2] };
        let p = NePlacement::follow_split(&split, 4);
        let s = split_local_remote(&g, &split, &p, 0).unwrap();
        assert_eq!(s.local.row(0), &[1]);
        assert_eq!(s.remote.row(0), &[3]);
        let s1 = split_local_remote(&g, &split, &p, 1).unwrap();
        assert_eq!(s1.local.row(1), &[2]);
        assert_eq!(s1.remote.row(0), &[0]);
        assert!(split_local_remote(&g, &split, &p, 2).is_err());
    }

    #[test]
    fn all_local_leaves_remote_empty() {
        let g = CsrGraph::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let split = split_by_edges(&g, 1).unwrap();
        let p = crate::placement::plan_ne_placement(&g, 1, PlacementMode::FollowSplit, 8).unwrap();
        let s = split_local_remote(&g, &split, &p, 0).unwrap();
        assert_eq!(s.remote.num_edges(), 0);
        assert_eq!(s.local.num_edges(), 3);
    }

    #[test]
    fn partition_sizes() {
        let csr = ChunkCsr {
            targets: NodeRange::new(10, 12),
            row_ptr: vec![0, 5, 7],
            col_idx: vec![1, 2, 3, 4, 5, 6, 7],
        };
        let parts = partition_neighbors(&csr, PartKind::Local, 2).unwrap();
        assert_eq!(parts.iter().map(|p| p.len).collect::<Vec<_>>(), vec![2, 2, 1, 2]);
        assert_eq!(parts.iter().map(|p| p.target).collect::<Vec<_>>(), vec![10, 10, 10, 11]);
        let per_edge = partition_neighbors(&csr, PartKind::Local, 1).unwrap();
        assert_eq!(per_edge.len(), 7);
        assert!(per_edge.iter().all(|p| p.len == 1));
        assert!(matches!(partition_neighbors(&csr, PartKind::Local, 0), Err(Error::Config(_))));
        assert!(matches!(partition_neighbors(&csr, PartKind::Local, 33), Err(Error::Config(_))));
        assert_eq!(whole_neighbor_lists(&csr, PartKind::Remote).len(), 2);
    }

    #[test]
    fn two_per_partition_balances_rows() {
        // rows of 4, 3 and 2 neighbors become partitions of at most 2
        let csr = ChunkCsr { targets: NodeRange::new(0, 3), row_ptr: vec![0, 4, 7, 9], col_idx: vec![0; 9] };
        let parts = partition_neighbors(&csr, PartKind::Local, 2).unwrap();
        let max = parts.iter().map(|p| p.len).max().unwrap();
        let min = parts.iter().map(|p| p.len).min().unwrap();
        assert_eq!((max, min, parts.len()), (2, 1, 5));
    }

    #[test]
    fn interleave_dist_one() {
        let warps = interleave(4, 4, 1).unwrap();
        assert_eq!(warps.len(), 4);
        for (i, w) in warps.iter().enumerate() {
            assert_eq!(kinds(w), "LR");
            assert_eq!(w.tasks[0].index, i);
            assert_eq!(w.tasks[1].index, i);
        }
    }

    #[test]
    fn interleave_dist_two() {
        let warps = interleave(4, 4, 2).unwrap();
        assert_eq!(warps.len(), 2);
        assert!(warps.iter().all(|w| kinds(w) == "LLRR"));
        assert_eq!(warps[1].of_kind(PartKind::Remote).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn interleave_surplus() {
        let warps = interleave(5, 0, 1).unwrap();
        assert_eq!(warps.len(), 5);
        assert!(warps.iter().all(|w| kinds(w) == "L"));
        let warps = interleave(1, 5, 2).unwrap();
        assert_eq!(warps.iter().map(kinds).collect::<Vec<_>>(), vec!["LRR", "RR", "R"]);
        assert!(matches!(interleave(1, 1, 17), Err(Error::Config(_))));
        assert!(interleave(0, 0, 3).unwrap().is_empty());
    }

    #[test]
    fn segregate_layout() {
        let warps = segregate(3, 4, 2).unwrap();
        assert_eq!(warps.iter().map(kinds).collect::<Vec<_>>(), vec!["LL", "L", "RR", "RR"]);
        assert_eq!(warps[3].warp_id, 3);
    }

    #[test]
    fn block_grouping() {
        let (blocks, smem) = map_to_blocks(5, &KernelConfig::new(16, 1, 2), 16).unwrap();
        assert_eq!(blocks.iter().map(|b| b.num_warps).collect::<Vec<_>>(), vec![2, 2, 1]);
        assert_eq!(smem, 384);
        let (_, smem) = map_to_blocks(1, &KernelConfig::new(3, 1, 1), 602).unwrap();
        assert_eq!(smem, 3 * 4 + 4816);
        assert!(matches!(map_to_blocks(1, &KernelConfig::new(1, 1, 0), 1), Err(Error::Config(_))));
    }

    #[test]
    fn integrity_detects_bad_refs() {
        let g = CsrGraph::from_edges(4, &[(0, 1), (0, 3), (1, 2), (1, 0)]).unwrap();
        let split = split_by_edges(&g, 2).unwrap();
        let p = NePlacement::follow_split(&split, 4);
        let s = split_local_remote(&g, &split, &p, 0).unwrap();
        let mut plan =
            KernelLaunchPlan::build(&s, &KernelConfig::new(1, 1, 1), 4, Mapping::Interleaved, Granularity::Partitioned)
                .unwrap();
        plan.check_integrity().unwrap();
        plan.warps[0].tasks.push(TaskRef { kind: PartKind::Remote, index: 99 });
        assert!(matches!(plan.check_integrity(), Err(Error::Integrity(_))));
    }
}
