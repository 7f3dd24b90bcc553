use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use pipeshard::costmodel::{HardwareProfile, KernelConfig};
use pipeshard::graph::CsrGraph;
use pipeshard::placement::{
    memory_footprint, plan_ne_placement, split_by_edges, FootprintReport, PartitionPlan, PlacementMode,
};
use pipeshard::sim::{
    write_trace_csv, BaselineKind, GpuWorkloads, MultiGpuReport, ScheduleMode, SimOptions, TRACE_CSV_HEADER,
};
use pipeshard::tuner::{optimize, TuneOptions};
use serde::Serialize;

use crate::inputs::{checked_config, load_graph, load_profile, GraphInfo};
use crate::{CompareArgs, Failure, GraphArgs, HwArgs, PartitionArgs, SimulateArgs, TuneArgs};

/// Column order of the `compare` table.
pub const COMPARE_CSV_HEADER: &str = "mode,cycles,occupancy,sm_util,ratio,remote_bytes,seed";
/// Column order of the `tune` trace.
pub const TUNE_CSV_HEADER: &str = "ps,dist,wpb,cycles,rank,seed";

/// Writes `bytes` to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    let result = match path {
        Some(p) => std::fs::write(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush())
        }
    };
    let target = path.map_or("stdout".to_string(), |p| p.display().to_string());
    result.map_err(|e| Failure::invalid(format!("cannot write {target}: {e}")))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::invalid(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

struct Setup {
    info: GraphInfo,
    workloads: GpuWorkloads,
    hw: HardwareProfile,
}

fn setup(graph: &GraphArgs, hw: &HwArgs) -> Result<Setup, Failure> {
    let (g, info) = load_graph(graph)?;
    let profile = load_profile(&hw.profile)?;
    let workloads = GpuWorkloads::prepare(&g, graph.gpus, graph.placement, graph.dim)?;
    let hw = match hw.remote_share {
        Some(share) => workloads.calibrated(&profile, share)?,
        None => profile,
    };
    Ok(Setup { info, workloads, hw })
}

#[derive(Serialize)]
struct PartitionOutput<'a> {
    graph: &'a GraphInfo,
    profile: &'a str,
    num_gpus: usize,
    dim: usize,
    plan: PartitionPlan,
    chunk_edges: Vec<usize>,
    footprint: FootprintReport,
}

pub fn partition(args: PartitionArgs) -> Result<(), Failure> {
    let (g, info) = load_graph(&args.graph)?;
    let hw = load_profile(&args.hw.profile)?;
    let output = build_partition(&g, &info, &hw, &args.graph)?;
    emit(args.out.as_deref(), &to_json(&output)?)?;

    let ideal = g.num_edges() as f64 / args.graph.gpus as f64;
    eprintln!(
        "{} nodes, {} edges, max degree {}, ideal {:.1} edges per GPU",
        info.num_nodes, info.num_edges, info.max_degree, ideal
    );
    for (gpu, (chunk, fp)) in output.plan.split.chunk_ranges().iter().zip(&output.footprint.per_gpu).enumerate() {
        eprintln!(
            "gpu {gpu}: targets {chunk} edges {} embeddings {} ne_bytes {} gp_bytes {}",
            output.chunk_edges[gpu], output.plan.placement.ranges[gpu], fp.ne_bytes, fp.gp_bytes
        );
    }
    if !output.footprint.fits {
        eprintln!("warning: at least one GPU exceeds the {} device memory", hw.name);
    }
    Ok(())
}

fn build_partition<'a>(
    g: &CsrGraph,
    info: &'a GraphInfo,
    hw: &'a HardwareProfile,
    args: &GraphArgs,
) -> Result<PartitionOutput<'a>, Failure> {
    let split = split_by_edges(g, args.gpus)?;
    let placement = match args.placement {
        PlacementMode::FollowSplit => pipeshard::placement::NePlacement::follow_split(&split, args.dim),
        PlacementMode::EqualNodes => plan_ne_placement(g, args.gpus, args.placement, args.dim)?,
    };
    let footprint = memory_footprint(g, &placement, &split, hw)?;
    Ok(PartitionOutput {
        graph: info,
        profile: &hw.name,
        num_gpus: args.gpus,
        dim: args.dim,
        chunk_edges: split.chunk_edge_counts(g),
        plan: PartitionPlan { split, placement },
        footprint,
    })
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    graph: &'a GraphInfo,
    profile: &'a HardwareProfile,
    dim: usize,
    placement: PlacementMode,
    config: KernelConfig,
    baseline: Option<&'static str>,
    mode: ScheduleMode,
    report: MultiGpuReport,
}

pub fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let s = setup(&args.graph, &args.hw)?;
    let cfg = checked_config(&args.cfg, &s.hw, args.graph.dim)?;
    let mode = match args.baseline {
        Some(kind) => kind.mode(),
        None => ScheduleMode::PIPELINED.with_remote(args.mode),
    };
    let mut report = s.workloads.run(&cfg, &s.hw, mode, SimOptions { trace: args.trace.is_some() })?;

    let mut trace_csv = Vec::new();
    if args.trace.is_some() {
        writeln!(trace_csv, "gpu,{TRACE_CSV_HEADER}").expect("in-memory write");
        for r in &mut report.per_gpu {
            let events = r.event_trace.take().unwrap_or_default();
            write_trace_csv(&mut trace_csv, &events, Some(r.gpu))?;
        }
    }

    let output = SimulateOutput {
        graph: &s.info,
        profile: &s.hw,
        dim: args.graph.dim,
        placement: args.graph.placement,
        config: cfg,
        baseline: args.baseline.map(BaselineKind::as_str),
        mode,
        report,
    };
    emit(args.out.as_deref(), &to_json(&output)?)?;
    if let Some(path) = &args.trace {
        emit(Some(path), &trace_csv)?;
    }
    eprintln!(
        "{cfg}: {} cycles on {} GPUs, occupancy {:.3}, SM utilization {:.3}",
        output.report.aggregate_cycles,
        output.report.num_gpus,
        output.report.mean_occupancy(),
        output.report.mean_sm_utilization()
    );
    Ok(())
}

pub fn tune(args: TuneArgs) -> Result<(), Failure> {
    let s = setup(&args.graph, &args.hw)?;
    let mode = ScheduleMode::PIPELINED.with_remote(args.mode);
    let opts = TuneOptions { retreat: args.retreat, max_evaluations: args.max_evals };
    let trace = optimize(&s.hw, args.graph.dim, opts, |c| s.workloads.cycles(c, &s.hw, mode))?;

    let mut csv = String::new();
    writeln!(csv, "{TUNE_CSV_HEADER}").unwrap();
    for (e, rank) in trace.entries.iter().zip(trace.ranks()) {
        let c = e.config;
        writeln!(csv, "{},{},{},{},{},{}", c.ps, c.dist, c.wpb, e.cycles, rank, s.info.seed).unwrap();
    }
    emit(args.out.as_deref(), csv.as_bytes())?;

    let base = trace.cycles_of(&KernelConfig::BASELINE).unwrap_or(trace.best_cycles);
    let reduction = 100.0 * (1.0 - trace.best_cycles as f64 / base as f64);
    eprintln!(
        "best {} at {} cycles, {reduction:.1}% below {} ({base} cycles), {} evaluations, seed {}",
        trace.best,
        trace.best_cycles,
        KernelConfig::BASELINE,
        trace.iterations,
        s.info.seed
    );
    Ok(())
}

pub fn compare(args: CompareArgs) -> Result<(), Failure> {
    let s = setup(&args.graph, &args.hw)?;
    let cfg = checked_config(&args.cfg, &s.hw, args.graph.dim)?;
    let reports = BaselineKind::ALL
        .iter()
        .map(|k| Ok((*k, s.workloads.run(&cfg, &s.hw, k.mode(), SimOptions::default())?)))
        .collect::<Result<Vec<_>, Failure>>()?;
    let reference = reports
        .iter()
        .find(|(k, _)| *k == BaselineKind::Pipelined)
        .map(|(_, r)| r.aggregate_cycles)
        .expect("the pipelined schedule is always compared");

    let mut csv = String::new();
    writeln!(csv, "{COMPARE_CSV_HEADER}").unwrap();
    for (kind, r) in &reports {
        writeln!(
            csv,
            "{},{},{:.6},{:.6},{:.6},{},{}",
            kind.as_str(),
            r.aggregate_cycles,
            r.mean_occupancy(),
            r.mean_sm_utilization(),
            r.aggregate_cycles as f64 / reference.max(1) as f64,
            r.remote_bytes(),
            s.info.seed
        )
        .unwrap();
    }
    emit(args.out.as_deref(), csv.as_bytes())
}
