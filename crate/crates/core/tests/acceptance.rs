//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pipeshard::costmodel::{
    launch_geometry, smem, validate, wpw, HardwareProfile, KernelConfig, Latencies, DIST_MAX, PS_MAX, WPB_MAX,
};
use pipeshard::graph::{gen_synthetic, CsrGraph, SyntheticKind};
use pipeshard::placement::{split_by_edges, NePlacement, PlacementMode};
use pipeshard::sim::{
    remote_bytes, simulate, BaselineKind, GpuWorkloads, RemoteMode, ScheduleMode, SimOptions, Transport,
};
use pipeshard::tuner::{exhaustive, optimize, Grid, TuneOptions};
use pipeshard::workload::{
    partition_neighbors, split_local_remote, Granularity, KernelLaunchPlan, Mapping, PartKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> CsrGraph {
    let n = rng.random_range(1..=max_nodes);
    let m = rng.random_range(0..=n * 8);
    let hub = rng.random_bool(0.3).then(|| rng.random_range(0..n));
    let edges: Vec<(usize, usize)> = (0..m)
        .map(|_| {
            let src = match hub {
                Some(h) if rng.random_bool(0.4) => h,
                _ => rng.random_range(0..n),
            };
            (src, rng.random_range(0..n))
        })
        .collect();
    CsrGraph::from_edges(n, &edges).unwrap()
}

/// Walks the node list once per GPU, accumulating edges.
fn linear_scan_split(g: &CsrGraph, gpus: usize) -> Vec<usize> {
    let (n, e) = (g.num_nodes(), g.num_edges());
    let share = e.div_ceil(gpus);
    let mut points = Vec::new();
    let mut start = 0;
    for _ in 1..gpus {
        let mut end = start;
        if start < n {
            let goal = (g.row_ptr()[start] + share).min(e);
            end = start + 1;
            let mut acc = g.row_ptr()[start] + g.degree(start);
            while end < n && acc < goal {
                acc += g.degree(end);
                end += 1;
            }
        }
        let end = end.max(start).min(n);
        points.push(end);
        start = end;
    }
    points
}

fn c1_partitioner() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let g = random_graph(&mut rng, 200);
        let gpus = rng.random_range(1..=8);
        let split = split_by_edges(&g, gpus).map_err(|e| e.to_string())?;
        let oracle = linear_scan_split(&g, gpus);
        check(split.split_points == oracle, || {
            format!("case {case}: split {:?} != oracle {oracle:?}", split.split_points)
        })?;
        let counts = split.chunk_edge_counts(&g);
        let ideal = g.num_edges() as f64 / gpus as f64;
        let over = counts.iter().map(|&c| c as f64 - ideal).fold(0.0, f64::max);
        check(over <= g.max_degree() as f64, || {
            format!("case {case}: chunk exceeds ideal {ideal} by {over} > maxDegree {}", g.max_degree())
        })?;
        if g.max_degree() > 0 {
            worst = worst.max(over / g.max_degree() as f64);
        }
    }
    Ok(format!("1000 graphs match the oracle; worst overload {worst:.2} x maxDegree"))
}

fn c2_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..500 {
        let g = random_graph(&mut rng, 200);
        let gpus = rng.random_range(1..=6);
        let ps = rng.random_range(1..=PS_MAX);
        let split = split_by_edges(&g, gpus).unwrap();
        let placement = if rng.random_bool(0.5) {
            NePlacement::follow_split(&split, 8)
        } else {
            NePlacement::equal_nodes(g.num_nodes(), gpus, 8)
        };
        for gpu in 0..gpus {
            let lr = split_local_remote(&g, &split, &placement, gpu).map_err(|e| e.to_string())?;
            let chunk = split.chunk(gpu);
            let mut expect: Vec<(usize, usize)> =
                (chunk.lb..chunk.ub).flat_map(|v| g.neighbors(v).iter().map(move |&u| (v, u))).collect();
            let mut got = Vec::new();
            for csr in [&lr.local, &lr.remote] {
                for row in 0..csr.targets.len() {
                    got.extend(csr.row(row).iter().map(|&u| (csr.targets.lb + row, u)));
                }
            }
            expect.sort_unstable();
            got.sort_unstable();
            check(got == expect, || format!("case {case} gpu {gpu}: local+remote edges differ from chunk"))?;
            let parts: usize = [PartKind::Local, PartKind::Remote]
                .iter()
                .map(|&k| partition_neighbors(lr.csr(k), k, ps).unwrap().iter().map(|p| p.len).sum::<usize>())
                .sum();
            check(parts == expect.len(), || {
                format!("case {case} gpu {gpu}: partitions cover {parts} of {} edges", expect.len())
            })?;
        }
    }
    Ok("500 triples conserve edges exactly".into())
}

fn c3_model() -> Outcome {
    let hw = HardwareProfile::a100();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut points = vec![
        (PS_MAX, DIST_MAX, WPB_MAX, 602),
        (1, 1, 1, 1),
        (PS_MAX, 1, 1, 16),
        (1, DIST_MAX, 1, 16),
        (1, 1, WPB_MAX, 16),
    ];
    while points.len() < 200 {
        points.push((
            rng.random_range(1..=PS_MAX),
            rng.random_range(1..=DIST_MAX),
            rng.random_range(1..=WPB_MAX),
            rng.random_range(1..=1024),
        ));
    }
    for &(ps, dist, wpb, dim) in &points {
        let cfg = KernelConfig::new(ps, dist, wpb);
        let (ps64, dist64, wpb64, d64) = (ps as u64, dist as u64, wpb as u64, dim as u64);
        check(wpw(&cfg, dim) == 2 * ps64 * d64 * dist64, || format!("wpw mismatch at {cfg} D={dim}"))?;
        check(smem(&cfg, dim) == ps64 * wpb64 * 4 + 2 * wpb64 * d64 * 4, || {
            format!("smem mismatch at {cfg} D={dim}")
        })?;
        let (nl, nr) = (rng.random_range(0..5000usize), rng.random_range(0..5000usize));
        let geo = launch_geometry(nl, nr, &cfg, &hw);
        // spelled out rather than div_ceil so the oracle does not share code with the model
        #[allow(clippy::manual_div_ceil)]
        let warps = (nl.max(nr) + dist - 1) / dist;
        #[allow(clippy::manual_div_ceil)]
        let blocks = (warps + wpb - 1) / wpb;
        check(geo.num_warps == warps && geo.num_blocks == blocks, || {
            format!("geometry mismatch at {cfg} nL={nl} nR={nr}")
        })?;
    }
    let top = KernelConfig::new(32, 16, 16);
    let need = smem(&top, 602);
    check(need == 79_104 && need <= 164 * 1024, || format!("smem(32,16,602) = {need}"))?;
    check(validate(&top, &hw, 602).is_ok(), || "(32,16,16) at D=602 rejected on a100".into())?;
    Ok(format!("200 grid points exact; smem(32,16,602) = {need} B <= {} B", 164 * 1024))
}

/// One GPU's plan on a profile whose task costs are set directly.
fn fixture(g: &CsrGraph, gpus: usize, cfg: KernelConfig, lat: Latencies) -> (KernelLaunchPlan, HardwareProfile) {
    let split = split_by_edges(g, gpus).unwrap();
    let ne = NePlacement::follow_split(&split, 1);
    let lr = split_local_remote(g, &split, &ne, 0).unwrap();
    let plan = KernelLaunchPlan::build(&lr, &cfg, 1, Mapping::Interleaved, Granularity::Partitioned).unwrap();
    let hw = HardwareProfile { num_sms: 1, latencies: lat, barrier_cycles: 0, ..HardwareProfile::a100() };
    (plan, hw)
}

fn c4_hand_traces() -> Outcome {
    // With one neighbor and D = 1: LL = 3 + 1, AC = 2, LR = 9 + 1.
    let lat = Latencies {
        remote_get_base: 9,
        local_load_base: 3,
        per_elem_remote: 1,
        per_elem_local: 1,
        per_elem_compute: 2,
    };
    let run = |plan: &KernelLaunchPlan, hw: &HardwareProfile, remote| {
        simulate(plan, hw, ScheduleMode::PIPELINED.with_remote(remote), SimOptions::default())
            .unwrap()
            .total_cycles
    };

    let g = CsrGraph::from_edges(1, &[(0, 0)]).unwrap();
    let (plan, hw) = fixture(&g, 1, KernelConfig::BASELINE, lat);
    let lone = run(&plan, &hw, RemoteMode::Async);
    check(lone == 6, || format!("local-only warp took {lone}, expected 6"))?;

    let g = CsrGraph::from_edges(2, &[(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
    let (plan, hw) = fixture(&g, 2, KernelConfig::BASELINE, lat);
    let (sync, asyn) = (run(&plan, &hw, RemoteMode::Sync), run(&plan, &hw, RemoteMode::Async));
    check(plan.warps.len() == 1 && sync == 18 && asyn == 12, || {
        format!("pair: sync {sync} (want 18), async {asyn} (want 12)")
    })?;

    let g = CsrGraph::from_edges(3, &[(0, 2), (1, 2), (2, 0), (2, 1)]).unwrap();
    let (plan, hw) = fixture(&g, 2, KernelConfig::new(1, 1, 2), lat);
    let two = run(&plan, &hw, RemoteMode::Async);
    check(plan.warps.len() == 2 && plan.blocks.len() == 1 && two == 14 && two < 24, || {
        format!("two remote warps took {two}, expected 14 (< 24 serial)")
    })?;
    Ok(format!("6 / sync 18 vs async {asyn} / two-warp overlap {two} < 24"))
}

fn random_profile(rng: &mut ChaCha8Rng) -> HardwareProfile {
    HardwareProfile {
        num_sms: rng.random_range(1..=8),
        max_warps_per_sm: [4, 8, 16, 32, 64][rng.random_range(0..5)],
        latencies: Latencies {
            remote_get_base: rng.random_range(0..500),
            local_load_base: rng.random_range(0..64),
            per_elem_remote: rng.random_range(0..4),
            per_elem_local: rng.random_range(0..3),
            per_elem_compute: rng.random_range(1..3),
        },
        update_cycles_per_node: if rng.random_bool(0.3) { rng.random_range(1..50) } else { 0 },
        ..HardwareProfile::a100()
    }
}

fn c5_schedule_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut families, mut async_slower, mut phased_faster) = (0, Vec::new(), Vec::new());
    for case in 0..200 {
        let g = random_graph(&mut rng, 120);
        let gpus = rng.random_range(1..=4);
        let dim = rng.random_range(1..=32);
        let hw = random_profile(&mut rng);
        let cfg = loop {
            let c = KernelConfig::new(
                1 << rng.random_range(0..6),
                1 << rng.random_range(0..5),
                1 << rng.random_range(0..5),
            );
            if validate(&c, &hw, dim).is_ok() {
                break c;
            }
        };
        let w = GpuWorkloads::prepare(&g, gpus, PlacementMode::FollowSplit, dim).unwrap();
        let split = &w.splits[rng.random_range(0..gpus)];
        let mut ac_busy = None;
        for mapping in [Mapping::Interleaved, Mapping::Segregated] {
            for granularity in [Granularity::Partitioned, Granularity::WholeNeighborList] {
                let plan = KernelLaunchPlan::build(split, &cfg, dim, mapping, granularity).unwrap();
                for transport in [Transport::FineGrained, Transport::Paged] {
                    let mut cycles = HashMap::new();
                    for remote in [RemoteMode::Sync, RemoteMode::Async, RemoteMode::PhaseSeparated] {
                        let mode = ScheduleMode { remote, mapping, granularity, transport };
                        let opts = SimOptions { trace: true };
                        let r = simulate(&plan, &hw, mode, opts).map_err(|e| format!("case {case}: {e}"))?;
                        let again = simulate(&plan, &hw, mode, opts).unwrap();
                        check(r.to_json().unwrap() == again.to_json().unwrap(), || {
                            format!("case {case}: repeated run differs under {mode:?}")
                        })?;
                        check(
                            (0.0..=1.0).contains(&r.achieved_occupancy) && (0.0..=1.0).contains(&r.sm_utilization),
                            || format!("case {case}: occupancy {} util {}", r.achieved_occupancy, r.sm_utilization),
                        )?;
                        check(r.total_cycles >= r.critical_path_cycles, || {
                            format!("case {case}: {} cycles below critical path {}", r.total_cycles, r.critical_path_cycles)
                        })?;
                        let ac = r.per_stage_busy_cycles.ac;
                        check(*ac_busy.get_or_insert(ac) == ac, || {
                            format!("case {case}: AC busy {ac} != {:?} under {mode:?}", ac_busy)
                        })?;
                        cycles.insert(remote, r.total_cycles as f64);
                    }
                    let (s, a, p) =
                        (cycles[&RemoteMode::Sync], cycles[&RemoteMode::Async], cycles[&RemoteMode::PhaseSeparated]);
                    if a > s {
                        async_slower.push(a / s);
                    }
                    if p < a {
                        phased_faster.push(a / p);
                    }
                    families += 1;
                }
            }
        }
    }
    let worst = |v: &[f64]| v.iter().copied().fold(1.0, f64::max);
    let msg = format!(
        "{families} mode families; AC work, bounds and determinism hold; async > sync in {} (worst {:.3}x), \
         phased < async in {} (worst {:.3}x)",
        async_slower.len(),
        worst(&async_slower),
        phased_faster.len(),
        worst(&phased_faster)
    );
    if async_slower.is_empty() && phased_faster.is_empty() {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Powerlaw N = 10,000, average degree 16, 4 GPUs, D = 16, a100 with remote
/// gets taking 60% of serial latency.
fn reference() -> (GpuWorkloads, HardwareProfile) {
    let g = gen_synthetic(SyntheticKind::PowerLaw, 10_000, 16.0, 0);
    let w = GpuWorkloads::prepare(&g, 4, PlacementMode::FollowSplit, 16).unwrap();
    let hw = w.calibrated(&HardwareProfile::a100(), 0.6).unwrap();
    (w, hw)
}

fn c6_ablation() -> Outcome {
    let (w, hw) = reference();
    // partition size and block width used by the published ablations
    let cfg = KernelConfig::new(16, 2, 2);
    let cycles = |k: BaselineKind| w.cycles(&cfg, &hw, k.mode()).unwrap() as f64;
    let full = cycles(BaselineKind::Pipelined);
    let no_np = cycles(BaselineKind::NoNp) / full;
    let no_il = cycles(BaselineKind::NoInterleave) / full;
    let msg = format!("{cfg}: no_np {no_np:.2}x (need 1.30), no_interleave {no_il:.2}x (need 1.20)");
    if no_np >= 1.3 && no_il >= 1.2 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c7_tuner() -> Outcome {
    let mode = ScheduleMode::PIPELINED;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut hits, mut max_evals) = (0, 0);
    for _ in 0..20 {
        let kind = if rng.random_bool(0.5) { SyntheticKind::PowerLaw } else { SyntheticKind::Uniform };
        let n = rng.random_range(300..3000);
        let deg = rng.random_range(4.0..24.0);
        let gpus = rng.random_range(1..=4);
        let dim = [8, 16, 32][rng.random_range(0..3)];
        let g = gen_synthetic(kind, n, deg, rng.random());
        let w = GpuWorkloads::prepare(&g, gpus, PlacementMode::FollowSplit, dim).unwrap();
        let hw = w.calibrated(&HardwareProfile::a100(), 0.6).unwrap();
        let t = optimize(&hw, dim, TuneOptions::default(), |c| w.cycles(c, &hw, mode)).map_err(|e| e.to_string())?;
        let table = exhaustive(&Grid::stepped(), &hw, dim, |c| w.cycles(c, &hw, mode)).map_err(|e| e.to_string())?;
        check(table.best().cycles <= t.best_cycles, || "exhaustive lost to the heuristic".into())?;
        hits += usize::from(table.in_top(&t.best, 3));
        max_evals = max_evals.max(t.iterations);
    }
    let (w, hw) = reference();
    let t = optimize(&hw, 16, TuneOptions::default(), |c| w.cycles(c, &hw, mode)).map_err(|e| e.to_string())?;
    let base = t.cycles_of(&KernelConfig::BASELINE).unwrap();
    let reduction = 1.0 - t.best_cycles as f64 / base as f64;
    max_evals = max_evals.max(t.iterations);
    let msg = format!(
        "top-3 hits {hits}/20 (need 16), max {max_evals} evaluations (limit 15), reference {} cuts {:.1}% vs (1,1,1) (need 20%)",
        t.best,
        100.0 * reduction
    );
    if hits >= 16 && max_evals <= 15 && reduction >= 0.2 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c8_paged_bytes() -> Outcome {
    let per_embedding = remote_bytes(1, 16, Transport::Paged, 4096);
    let raw = remote_bytes(1, 16, Transport::FineGrained, 4096);
    check(raw == 64 && per_embedding >= 4096, || format!("raw {raw} B, paged {per_embedding} B"))?;
    let (w, hw) = reference();
    let cfg = KernelConfig::new(16, 2, 2);
    let paged = w.run(&cfg, &hw, BaselineKind::PagedRemote.mode(), SimOptions::default()).unwrap();
    let fine = w.run(&cfg, &hw, BaselineKind::Pipelined.mode(), SimOptions::default()).unwrap();
    check(hw.page_bytes == 4096 && paged.remote_bytes() == 64 * fine.remote_bytes(), || {
        format!("paged {} B vs fine {} B", paged.remote_bytes(), fine.remote_bytes())
    })?;
    let ratio = paged.remote_bytes() / fine.remote_bytes().max(1);
    Ok(format!("64 B embedding moves {per_embedding} B paged; reference run {ratio}x raw bytes"))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("partitioner oracle equivalence", Duration::from_secs(5), c1_partitioner),
        ("conservation suite", Duration::from_secs(5), c2_conservation),
        ("analytical-model exactness", Duration::from_secs(1), c3_model),
        ("hand-traced schedule fixtures", Duration::from_secs(1), c4_hand_traces),
        ("schedule property suite", Duration::from_secs(30), c5_schedule_properties),
        ("ablation trends", Duration::from_secs(60), c6_ablation),
        ("tuner vs exhaustive oracle", Duration::from_secs(120), c7_tuner),
        ("paged-remote arithmetic", Duration::from_secs(1), c8_paged_bytes),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; took {took:.2?} over {budget:?} budget")),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "[{}] {}. {name}: {detail} ({:.2}s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
