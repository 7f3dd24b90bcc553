//! Discrete-event execution of the LR / LL / AC pipeline on modeled SMs.
//!
//! A [`KernelLaunchPlan`] is lowered to one op program per warp according to the
//! [`ScheduleMode`], then run by the engine. Task costs come from the profile's
//! [`Latencies`](crate::costmodel::Latencies):
//!
//! * sync: per pair, `LL, AC` for the local partition then a blocking `LR, AC`
//!   for the remote one;
//! * async: per pair, issue the remote get, run the local `LL, AC`, wait for the
//!   get, then `AC` on the fetched rows;
//! * phase-separated: one kernel performing every remote get (blocking), then a
//!   second kernel with all `LL` / `AC` work.

mod engine;
mod report;

pub use engine::{Edge, Stage, StageCycles, TraceEvent};
pub use report::{write_trace_csv, MultiGpuReport, SimReport, TRACE_CSV_HEADER};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmodel::{HardwareProfile, KernelConfig, WorkloadMix};
use crate::error::{Error, Result};
use crate::graph::CsrGraph;
use crate::placement::{split_by_edges, NePlacement, PlacementMode, FLOAT_BYTES};
use crate::workload::{
    partition_neighbors, split_local_remote, Granularity, KernelLaunchPlan, LocalRemoteSplit, Mapping,
    NeighborPartition, PartKind,
};
use engine::{solo_cycles, Engine, EngineRun, Op};
use report::ReportParts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemoteMode {
    Sync,
    #[default]
    Async,
    /// Every remote get completes (in a separate kernel) before any aggregation.
    PhaseSeparated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transport {
    /// Warp-level gets of exactly the requested rows.
    #[default]
    FineGrained,
    /// Page-granular transfers: each fetched embedding is rounded up to whole pages.
    Paged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ScheduleMode {
    pub remote: RemoteMode,
    pub mapping: Mapping,
    pub granularity: Granularity,
    pub transport: Transport,
}

impl ScheduleMode {
    /// Async remote gets, interleaved mapping, partitioned lists, fine-grained gets.
    pub const PIPELINED: ScheduleMode = ScheduleMode {
        remote: RemoteMode::Async,
        mapping: Mapping::Interleaved,
        granularity: Granularity::Partitioned,
        transport: Transport::FineGrained,
    };

    pub fn with_remote(self, remote: RemoteMode) -> Self {
        Self { remote, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// The full pipelined design; included so comparisons can iterate one list.
    Pipelined,
    /// One task per node and kind covering the whole neighbor list.
    NoNp,
    /// Local warps first, remote warps after them.
    NoInterleave,
    /// Global barrier between remote loading and aggregation.
    PhaseSeparated,
    /// Page-granular remote transfers.
    PagedRemote,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::Pipelined,
        BaselineKind::NoNp,
        BaselineKind::NoInterleave,
        BaselineKind::PhaseSeparated,
        BaselineKind::PagedRemote,
    ];

    pub fn mode(self) -> ScheduleMode {
        let m = ScheduleMode::PIPELINED;
        match self {
            BaselineKind::Pipelined => m,
            BaselineKind::NoNp => ScheduleMode { granularity: Granularity::WholeNeighborList, ..m },
            BaselineKind::NoInterleave => ScheduleMode { mapping: Mapping::Segregated, ..m },
            BaselineKind::PhaseSeparated => ScheduleMode { remote: RemoteMode::PhaseSeparated, ..m },
            BaselineKind::PagedRemote => ScheduleMode { transport: Transport::Paged, ..m },
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Pipelined => "pipelined",
            BaselineKind::NoNp => "no_np",
            BaselineKind::NoInterleave => "no_interleave",
            BaselineKind::PhaseSeparated => "phase_separated",
            BaselineKind::PagedRemote => "paged_remote",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown baseline {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOptions {
    pub trace: bool,
}

/// Bytes moved to fetch `neighbors` embeddings of width `dim`.
pub fn remote_bytes(neighbors: usize, dim: usize, transport: Transport, page_bytes: u64) -> u64 {
    let row = dim as u64 * FLOAT_BYTES;
    let per_row = match transport {
        Transport::FineGrained => row,
        Transport::Paged => row.div_ceil(page_bytes) * page_bytes,
    };
    neighbors as u64 * per_row
}

struct CostTable<'a> {
    hw: &'a HardwareProfile,
    dim: usize,
    transport: Transport,
    /// Partitions that carry their target's dense-update surcharge.
    local_first: Vec<bool>,
    remote_first: Vec<bool>,
}

impl<'a> CostTable<'a> {
    fn new(plan: &KernelLaunchPlan, hw: &'a HardwareProfile, transport: Transport) -> Self {
        let mut local_first = vec![false; plan.local_parts.len()];
        let mut remote_first = vec![false; plan.remote_parts.len()];
        if hw.update_cycles_per_node > 0 {
            mark_first_of_target(&plan.local_parts, &mut local_first, &[]);
            let local_targets: Vec<usize> = plan.local_parts.iter().map(|p| p.target).collect();
            mark_first_of_target(&plan.remote_parts, &mut remote_first, &local_targets);
        }
        Self { hw, dim: plan.dim, transport, local_first, remote_first }
    }

    fn ll(&self, p: &NeighborPartition) -> u64 {
        self.hw.latencies.local_load(p.len, self.dim)
    }

    fn lr(&self, p: &NeighborPartition) -> u64 {
        let lat = &self.hw.latencies;
        match self.transport {
            Transport::FineGrained => lat.remote_get(p.len, self.dim),
            Transport::Paged => {
                lat.remote_get_elems(remote_bytes(p.len, self.dim, Transport::Paged, self.hw.page_bytes) / FLOAT_BYTES)
            }
        }
    }

    fn ac(&self, kind: PartKind, index: usize, p: &NeighborPartition) -> u64 {
        let first = match kind {
            PartKind::Local => self.local_first[index],
            PartKind::Remote => self.remote_first[index],
        };
        self.hw.latencies.compute(p.len, self.dim) + if first { self.hw.update_cycles_per_node } else { 0 }
    }
}

/// `sorted_exclude` lists targets (ascending) whose surcharge is already placed.
fn mark_first_of_target(parts: &[NeighborPartition], marks: &mut [bool], sorted_exclude: &[usize]) {
    let mut prev = None;
    for (i, p) in parts.iter().enumerate() {
        if prev != Some(p.target) && sorted_exclude.binary_search(&p.target).is_err() {
            marks[i] = true;
        }
        prev = Some(p.target);
    }
}

fn push_exec(prog: &mut Vec<Op>, stage: Stage, cycles: u64) {
    if cycles > 0 {
        prog.push(Op::Exec { stage, cycles });
    }
}

/// Issue + wait for a remote get, dropping both when the get is free.
fn push_issue(prog: &mut Vec<Op>, slot: usize, latency: u64) -> bool {
    if latency > 0 {
        prog.push(Op::Issue { slot, latency });
        true
    } else {
        false
    }
}

enum Programs {
    Single(Vec<Vec<Op>>),
    Phased(Vec<Vec<Op>>, Vec<Vec<Op>>),
}

fn lower(plan: &KernelLaunchPlan, costs: &CostTable, remote: RemoteMode) -> Programs {
    let mut single = Vec::with_capacity(plan.warps.len());
    let mut loads = Vec::new();
    let mut compute = Vec::new();
    for w in &plan.warps {
        let local: Vec<usize> = w.of_kind(PartKind::Local).collect();
        let remote_ix: Vec<usize> = w.of_kind(PartKind::Remote).collect();
        let pairs = local.len().max(remote_ix.len());
        let l = |k: usize| local.get(k).map(|&i| (i, &plan.local_parts[i]));
        let r = |k: usize| remote_ix.get(k).map(|&i| (i, &plan.remote_parts[i]));
        match remote {
            RemoteMode::Sync => {
                let mut prog = Vec::new();
                for k in 0..pairs {
                    if let Some((i, p)) = l(k) {
                        push_exec(&mut prog, Stage::Ll, costs.ll(p));
                        push_exec(&mut prog, Stage::Ac, costs.ac(PartKind::Local, i, p));
                    }
                    if let Some((i, p)) = r(k) {
                        if push_issue(&mut prog, k, costs.lr(p)) {
                            prog.push(Op::Wait { slot: k });
                        }
                        push_exec(&mut prog, Stage::Ac, costs.ac(PartKind::Remote, i, p));
                    }
                }
                single.push(prog);
            }
            RemoteMode::Async => {
                let mut prog = Vec::new();
                for k in 0..pairs {
                    let issued = r(k).is_some_and(|(_, p)| push_issue(&mut prog, k, costs.lr(p)));
                    if let Some((i, p)) = l(k) {
                        push_exec(&mut prog, Stage::Ll, costs.ll(p));
                        push_exec(&mut prog, Stage::Ac, costs.ac(PartKind::Local, i, p));
                    }
                    if let Some((i, p)) = r(k) {
                        if issued {
                            prog.push(Op::Wait { slot: k });
                        }
                        push_exec(&mut prog, Stage::Ac, costs.ac(PartKind::Remote, i, p));
                    }
                }
                single.push(prog);
            }
            RemoteMode::PhaseSeparated => {
                let mut first = Vec::new();
                let mut second = Vec::new();
                for k in 0..pairs {
                    if let Some((i, p)) = l(k) {
                        push_exec(&mut second, Stage::Ll, costs.ll(p));
                        push_exec(&mut second, Stage::Ac, costs.ac(PartKind::Local, i, p));
                    }
                    if let Some((i, p)) = r(k) {
                        if push_issue(&mut first, k, costs.lr(p)) {
                            first.push(Op::Wait { slot: k });
                        }
                        push_exec(&mut second, Stage::Ac, costs.ac(PartKind::Remote, i, p));
                    }
                }
                loads.push(first);
                compute.push(second);
            }
        }
    }
    match remote {
        RemoteMode::PhaseSeparated => Programs::Phased(loads, compute),
        _ => Programs::Single(single),
    }
}

fn critical_path(programs: &[Vec<Op>]) -> u64 {
    programs.iter().map(|p| solo_cycles(p)).max().unwrap_or(0)
}

/// Runs one GPU's plan. The plan's mapping and granularity must match `mode`.
pub fn simulate(
    plan: &KernelLaunchPlan,
    hw: &HardwareProfile,
    mode: ScheduleMode,
    opts: SimOptions,
) -> Result<SimReport> {
    hw.check()?;
    if plan.mapping != mode.mapping || plan.granularity != mode.granularity {
        return Err(Error::Config(format!(
            "plan was built for {:?}/{:?} but mode asks for {:?}/{:?}",
            plan.mapping, plan.granularity, mode.mapping, mode.granularity
        )));
    }
    plan.check_integrity()?;
    let costs = CostTable::new(plan, hw, mode.transport);
    let remote_bytes =
        remote_bytes(plan.remote_parts.iter().map(|p| p.len).sum(), plan.dim, mode.transport, hw.page_bytes);
    let (run, critical) = match lower(plan, &costs, mode.remote) {
        Programs::Single(progs) => {
            let run = Engine::new(&progs, &plan.blocks, plan.smem_bytes_per_block, hw, opts.trace)?.run()?;
            (run, critical_path(&progs))
        }
        Programs::Phased(loads, compute) => {
            let first = Engine::new(&loads, &plan.blocks, plan.smem_bytes_per_block, hw, opts.trace)?.run()?;
            let second = Engine::new(&compute, &plan.blocks, plan.smem_bytes_per_block, hw, opts.trace)?.run()?;
            (concat_runs(first, second), critical_path(&loads) + critical_path(&compute))
        }
    };
    Ok(SimReport::from_run(
        run,
        ReportParts {
            gpu: plan.gpu,
            config: plan.config,
            mode,
            max_warps_per_sm: hw.max_warps_per_sm,
            num_warps: plan.warps.len(),
            num_blocks: plan.blocks.len(),
            remote_bytes,
            critical_path_cycles: critical,
            trace: opts.trace,
        },
    ))
}

fn concat_runs(first: EngineRun, second: EngineRun) -> EngineRun {
    let offset = first.total_cycles;
    let mut busy = first.busy;
    busy.merge(&second.busy);
    let mut trace = first.trace;
    trace.extend(second.trace.into_iter().map(|e| TraceEvent { cycle: e.cycle + offset, ..e }));
    // events of both kernels can share the boundary cycle
    trace.sort_unstable();
    EngineRun {
        total_cycles: first.total_cycles + second.total_cycles,
        busy,
        issue_cycles: first.issue_cycles + second.issue_cycles,
        ready_warp_cycles: first.ready_warp_cycles + second.ready_warp_cycles,
        active_sm_cycles: first.active_sm_cycles + second.active_sm_cycles,
        active_sms: first.active_sms.max(second.active_sms),
        trace,
    }
}

/// Builds the plan `mode` calls for from a local/remote split and simulates it.
pub fn simulate_split(
    split: &LocalRemoteSplit,
    cfg: &KernelConfig,
    hw: &HardwareProfile,
    dim: usize,
    mode: ScheduleMode,
    opts: SimOptions,
) -> Result<SimReport> {
    let plan = KernelLaunchPlan::build(split, cfg, dim, mode.mapping, mode.granularity)?;
    simulate(&plan, hw, mode, opts)
}

pub fn simulate_baseline(
    split: &LocalRemoteSplit,
    cfg: &KernelConfig,
    hw: &HardwareProfile,
    dim: usize,
    kind: BaselineKind,
    opts: SimOptions,
) -> Result<SimReport> {
    simulate_split(split, cfg, hw, dim, kind.mode(), opts)
}

/// Partition size at which [`GpuWorkloads::calibrated`] measures the workload mix.
pub const CALIBRATION_PS: usize = 16;

/// Per-GPU local/remote splits of one graph, reusable across configurations.
#[derive(Debug, Clone)]
pub struct GpuWorkloads {
    pub dim: usize,
    pub splits: Vec<LocalRemoteSplit>,
}

impl GpuWorkloads {
    pub fn prepare(g: &CsrGraph, num_gpus: usize, placement: PlacementMode, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("embedding dimension must be at least 1".into()));
        }
        let split = split_by_edges(g, num_gpus)?;
        let ne = match placement {
            PlacementMode::FollowSplit => NePlacement::follow_split(&split, dim),
            PlacementMode::EqualNodes => NePlacement::equal_nodes(g.num_nodes(), num_gpus, dim),
        };
        let splits = (0..num_gpus)
            .into_par_iter()
            .map(|gpu| split_local_remote(g, &split, &ne, gpu))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim, splits })
    }

    pub fn num_gpus(&self) -> usize {
        self.splits.len()
    }

    pub fn remote_edge_fraction(&self) -> f64 {
        let remote: usize = self.splits.iter().map(|s| s.remote.num_edges()).sum();
        let total: usize = self.splits.iter().map(|s| s.remote.num_edges() + s.local.num_edges()).sum();
        if total == 0 {
            0.0
        } else {
            remote as f64 / total as f64
        }
    }

    /// Partition and edge counts over all GPUs when cutting at `ps`.
    pub fn mix(&self, ps: usize) -> Result<WorkloadMix> {
        let mut mix = WorkloadMix::default();
        for s in &self.splits {
            mix.local_parts += partition_neighbors(&s.local, PartKind::Local, ps)?.len();
            mix.remote_parts += partition_neighbors(&s.remote, PartKind::Remote, ps)?.len();
            mix.local_edges += s.local.num_edges();
            mix.remote_edges += s.remote.num_edges();
        }
        Ok(mix)
    }

    /// `hw` with its remote-get base latency set so that, cut at
    /// [`CALIBRATION_PS`], remote loads take `remote_share` of the serial time.
    pub fn calibrated(&self, hw: &HardwareProfile, remote_share: f64) -> Result<HardwareProfile> {
        if !(0.0..1.0).contains(&remote_share) {
            return Err(Error::Config(format!("remote share {remote_share} is outside [0, 1)")));
        }
        let mix = self.mix(CALIBRATION_PS)?;
        Ok(HardwareProfile {
            latencies: hw.latencies.calibrated_to_remote_share(&mix, self.dim, remote_share),
            ..hw.clone()
        })
    }

    /// Aggregate cycles only; the shape a tuner callback needs.
    pub fn cycles(&self, cfg: &KernelConfig, hw: &HardwareProfile, mode: ScheduleMode) -> Result<u64> {
        Ok(self.run(cfg, hw, mode, SimOptions::default())?.aggregate_cycles)
    }

    /// Simulates every GPU independently (in parallel) and aggregates.
    pub fn run(
        &self,
        cfg: &KernelConfig,
        hw: &HardwareProfile,
        mode: ScheduleMode,
        opts: SimOptions,
    ) -> Result<MultiGpuReport> {
        let plans = self
            .splits
            .iter()
            .map(|s| KernelLaunchPlan::build(s, cfg, self.dim, mode.mapping, mode.granularity))
            .collect::<Result<Vec<_>>>()?;
        let per_gpu = plans
            .par_iter()
            .map(|p| simulate(p, hw, mode, opts))
            .collect::<Result<Vec<_>>>()?;
        let (lp, rp) = plans
            .iter()
            .fold((0usize, 0usize), |(l, r), p| (l + p.local_parts.len(), r + p.remote_parts.len()));
        let max = per_gpu.iter().map(|r| r.total_cycles).max().unwrap_or(0);
        Ok(MultiGpuReport {
            num_gpus: self.num_gpus(),
            per_gpu,
            barrier_cycles: hw.barrier_cycles,
            aggregate_cycles: max + hw.barrier_cycles,
            remote_edge_fraction: self.remote_edge_fraction(),
            remote_partition_fraction: if lp + rp == 0 { 0.0 } else { rp as f64 / (lp + rp) as f64 },
        })
    }
}

pub fn multi_gpu_run(
    g: &CsrGraph,
    num_gpus: usize,
    cfg: &KernelConfig,
    hw: &HardwareProfile,
    dim: usize,
    mode: ScheduleMode,
    opts: SimOptions,
) -> Result<MultiGpuReport> {
    GpuWorkloads::prepare(g, num_gpus, PlacementMode::FollowSplit, dim)?.run(cfg, hw, mode, opts)
}
