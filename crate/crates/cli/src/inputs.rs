use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use pipeshard::costmodel::{validate, HardwareProfile, KernelConfig};
use pipeshard::graph::{gen_synthetic, read_binary, read_edge_list_file, CsrGraph, SyntheticKind};
use pipeshard::Error;
use serde::Serialize;

use crate::{ConfigArgs, Failure, GraphArgs};

pub const PROFILE_DIR_VAR: &str = "PIPESHARD_PROFILE_DIR";

/// Where the graph came from, echoed into outputs.
#[derive(Debug, Clone, Serialize)]
pub struct GraphInfo {
    pub source: String,
    pub seed: u64,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub max_degree: usize,
}

pub fn load_graph(args: &GraphArgs) -> Result<(CsrGraph, GraphInfo), Failure> {
    if args.gpus == 0 {
        return Err(Failure::invalid("--gpus must be at least 1"));
    }
    if args.dim == 0 {
        return Err(Failure::invalid("--dim must be at least 1"));
    }
    let (g, source) = match (&args.graph, &args.synthetic) {
        (Some(path), None) => (read_graph_file(path)?, path.display().to_string()),
        (None, Some(s)) => (synthetic(s, args.seed)?, format!("synthetic:{s}")),
        _ => return Err(Failure::invalid("exactly one of --graph and --synthetic is required")),
    };
    let info = GraphInfo {
        source,
        seed: args.seed,
        num_nodes: g.num_nodes(),
        num_edges: g.num_edges(),
        max_degree: g.max_degree(),
    };
    Ok((g, info))
}

fn read_graph_file(path: &Path) -> Result<CsrGraph, Failure> {
    let result = if path.extension().is_some_and(|e| e == "bin") {
        File::open(path).map_err(Error::from).and_then(|f| read_binary(BufReader::new(f)))
    } else {
        read_edge_list_file(path)
    };
    result.map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn synthetic(text: &str, seed: u64) -> Result<CsrGraph, Failure> {
    let bad = |why: &str| Failure::invalid(format!("--synthetic {text:?}: {why}; expected kind:N:deg"));
    let parts: Vec<&str> = text.split(':').collect();
    let [kind, n, deg] = parts[..] else {
        return Err(bad("wrong number of fields"));
    };
    let kind: SyntheticKind = kind.parse().map_err(|e: String| bad(&e))?;
    let n: usize = n.parse().map_err(|_| bad("N is not an integer"))?;
    let deg: f64 = deg.parse().map_err(|_| bad("deg is not a number"))?;
    if n == 0 || !deg.is_finite() || deg < 0.0 {
        return Err(bad("N must be >= 1 and deg >= 0"));
    }
    Ok(gen_synthetic(kind, n, deg, seed))
}

/// Resolves `--profile`: an existing file, then a file in the profile
/// directory, then a built-in preset.
pub fn load_profile(name: &str) -> Result<HardwareProfile, Failure> {
    let direct = PathBuf::from(name);
    let mut candidates = vec![direct];
    if let Some(dir) = std::env::var_os(PROFILE_DIR_VAR) {
        let dir = PathBuf::from(dir);
        candidates.extend(["", ".toml", ".json"].map(|ext| dir.join(format!("{name}{ext}"))));
    }
    if let Some(path) = candidates.iter().find(|p| p.is_file()) {
        return HardwareProfile::load(path).map_err(|e| match e {
            Error::Io(_) => Failure::input(format!("{}: {e}", path.display())),
            other => Failure::invalid(format!("{}: {other}", path.display())),
        });
    }
    HardwareProfile::preset(name).ok_or_else(|| {
        Failure::invalid(format!("unknown profile {name:?}: not a file, not in ${PROFILE_DIR_VAR}, not a preset"))
    })
}

pub fn checked_config(args: &ConfigArgs, hw: &HardwareProfile, dim: usize) -> Result<KernelConfig, Failure> {
    let cfg = KernelConfig::new(args.ps, args.dist, args.wpb);
    validate(&cfg, hw, dim).map_err(|violations| {
        let list: Vec<String> = violations.iter().map(|v| format!("  - {v}")).collect();
        Failure::invalid(format!("configuration {cfg} violates constraints:\n{}", list.join("\n")))
    })?;
    Ok(cfg)
}
