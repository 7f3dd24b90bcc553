use std::io::Write;

use serde::{Deserialize, Serialize};

use super::engine::{EngineRun, StageCycles, TraceEvent};
use super::ScheduleMode;
use crate::costmodel::KernelConfig;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub gpu: usize,
    pub config: KernelConfig,
    pub mode: ScheduleMode,
    pub total_cycles: u64,
    /// Ready-or-running warps per active SM-cycle over the SM's warp capacity.
    pub achieved_occupancy: f64,
    /// Issuing cycles over `active SMs x total cycles`.
    pub sm_utilization: f64,
    pub per_stage_busy_cycles: StageCycles,
    pub issue_cycles: u64,
    pub active_sms: usize,
    pub num_warps: usize,
    pub num_blocks: usize,
    pub remote_bytes: u64,
    /// Longest single-warp execution with no contention; a lower bound on `total_cycles`.
    pub critical_path_cycles: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_trace: Option<Vec<TraceEvent>>,
}

pub(crate) struct ReportParts {
    pub gpu: usize,
    pub config: KernelConfig,
    pub mode: ScheduleMode,
    pub max_warps_per_sm: usize,
    pub num_warps: usize,
    pub num_blocks: usize,
    pub remote_bytes: u64,
    pub critical_path_cycles: u64,
    pub trace: bool,
}

impl SimReport {
    pub(crate) fn from_run(run: EngineRun, p: ReportParts) -> Self {
        let occ_den = run.active_sm_cycles as f64 * p.max_warps_per_sm as f64;
        let util_den = run.active_sms as f64 * run.total_cycles as f64;
        Self {
            gpu: p.gpu,
            config: p.config,
            mode: p.mode,
            total_cycles: run.total_cycles,
            achieved_occupancy: if occ_den > 0.0 { run.ready_warp_cycles as f64 / occ_den } else { 0.0 },
            sm_utilization: if util_den > 0.0 { run.issue_cycles as f64 / util_den } else { 0.0 },
            per_stage_busy_cycles: run.busy,
            issue_cycles: run.issue_cycles,
            active_sms: run.active_sms,
            num_warps: p.num_warps,
            num_blocks: p.num_blocks,
            remote_bytes: p.remote_bytes,
            critical_path_cycles: p.critical_path_cycles,
            event_trace: p.trace.then_some(run.trace),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub const TRACE_CSV_HEADER: &str = "cycle,sm,warp,stage,event";

/// Writes `cycle,sm,warp,stage,event` rows, optionally tagged with a GPU column first.
pub fn write_trace_csv<W: Write>(mut w: W, events: &[TraceEvent], gpu: Option<usize>) -> Result<()> {
    for e in events {
        let event = match e.event {
            super::engine::Edge::Begin => "begin",
            super::engine::Edge::End => "end",
        };
        if let Some(g) = gpu {
            write!(w, "{g},")?;
        }
        writeln!(w, "{},{},{},{},{}", e.cycle, e.sm, e.warp, e.stage.as_str(), event)?;
    }
    Ok(())
}

/// Per-GPU reports plus the end-of-layer aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiGpuReport {
    pub num_gpus: usize,
    pub per_gpu: Vec<SimReport>,
    pub barrier_cycles: u64,
    /// Slowest GPU plus the result synchronization.
    pub aggregate_cycles: u64,
    pub remote_edge_fraction: f64,
    pub remote_partition_fraction: f64,
}

impl MultiGpuReport {
    pub fn max_gpu_cycles(&self) -> u64 {
        self.per_gpu.iter().map(|r| r.total_cycles).max().unwrap_or(0)
    }

    pub fn total_busy(&self) -> StageCycles {
        let mut s = StageCycles::default();
        for r in &self.per_gpu {
            s.merge(&r.per_stage_busy_cycles);
        }
        s
    }

    pub fn remote_bytes(&self) -> u64 {
        self.per_gpu.iter().map(|r| r.remote_bytes).sum()
    }

    /// Mean over GPUs that launched any work.
    pub fn mean_occupancy(&self) -> f64 {
        mean(self.per_gpu.iter().filter(|r| r.active_sms > 0).map(|r| r.achieved_occupancy))
    }

    pub fn mean_sm_utilization(&self) -> f64 {
        mean(self.per_gpu.iter().filter(|r| r.active_sms > 0).map(|r| r.sm_utilization))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (n, s) = it.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}
