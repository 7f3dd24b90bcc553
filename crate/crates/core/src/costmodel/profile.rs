use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-task cycle costs. A partition of `k` neighbors with dimension `D` costs
///
/// * LL = `local_load_base + k * D * per_elem_local`
/// * LR = `remote_get_base + k * D * per_elem_remote`
/// * AC = `k * D * per_elem_compute`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Latencies {
    pub remote_get_base: u64,
    pub local_load_base: u64,
    pub per_elem_remote: u64,
    pub per_elem_local: u64,
    pub per_elem_compute: u64,
}

impl Default for Latencies {
    /// Calibrated so that [`WorkloadMix::reference`] spends 60% of its serial
    /// time in remote loads.
    fn default() -> Self {
        Self {
            remote_get_base: 400,
            local_load_base: 32,
            per_elem_remote: 1,
            per_elem_local: 1,
            per_elem_compute: 1,
        }
    }
}

impl Latencies {
    pub fn local_load(&self, neighbors: usize, dim: usize) -> u64 {
        self.local_load_base + (neighbors * dim) as u64 * self.per_elem_local
    }

    pub fn remote_get(&self, neighbors: usize, dim: usize) -> u64 {
        self.remote_get_base + (neighbors * dim) as u64 * self.per_elem_remote
    }

    /// Remote get when every fetched element is charged separately (used by the
    /// paged transport, where `elems` already includes page rounding).
    pub fn remote_get_elems(&self, elems: u64) -> u64 {
        self.remote_get_base + elems * self.per_elem_remote
    }

    pub fn compute(&self, neighbors: usize, dim: usize) -> u64 {
        (neighbors * dim) as u64 * self.per_elem_compute
    }

    /// Fraction of serial (un-overlapped) time spent in remote loads.
    pub fn remote_share(&self, mix: &WorkloadMix, dim: usize) -> f64 {
        let (remote, rest) = self.serial_split(mix, dim);
        if remote + rest == 0.0 {
            0.0
        } else {
            remote / (remote + rest)
        }
    }

    /// Returns a copy whose `remote_get_base` makes `mix` spend `share` of its
    /// serial time in remote loads (clamped at zero).
    pub fn calibrated_to_remote_share(&self, mix: &WorkloadMix, dim: usize, share: f64) -> Self {
        assert!((0.0..1.0).contains(&share), "share must lie in [0, 1)");
        let mut out = *self;
        if mix.remote_parts == 0 {
            return out;
        }
        let zero_base = Self { remote_get_base: 0, ..*self };
        let (remote_elems, rest) = zero_base.serial_split(mix, dim);
        let wanted = share / (1.0 - share) * rest;
        let base = (wanted - remote_elems) / mix.remote_parts as f64;
        out.remote_get_base = base.max(0.0).round() as u64;
        out
    }

    fn serial_split(&self, mix: &WorkloadMix, dim: usize) -> (f64, f64) {
        let d = dim as f64;
        let remote = mix.remote_parts as f64 * self.remote_get_base as f64
            + mix.remote_edges as f64 * d * self.per_elem_remote as f64;
        let rest = mix.local_parts as f64 * self.local_load_base as f64
            + mix.local_edges as f64 * d * self.per_elem_local as f64
            + (mix.local_edges + mix.remote_edges) as f64 * d * self.per_elem_compute as f64;
        (remote, rest)
    }
}

/// Partition and edge counts of a workload, split by kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WorkloadMix {
    pub local_parts: usize,
    pub remote_parts: usize,
    pub local_edges: usize,
    pub remote_edges: usize,
}

impl WorkloadMix {
    /// Four GPUs with uniformly scattered neighbors (one quarter local), full
    /// 16-neighbor partitions. Used with `D = 16` for the default latencies.
    pub fn reference() -> Self {
        Self { local_parts: 250, remote_parts: 750, local_edges: 250 * 16, remote_edges: 750 * 16 }
    }

    pub const REFERENCE_DIM: usize = 16;
}

impl std::ops::Add for WorkloadMix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            local_parts: self.local_parts + o.local_parts,
            remote_parts: self.remote_parts + o.remote_parts,
            local_edges: self.local_edges + o.local_edges,
            remote_edges: self.remote_edges + o.remote_edges,
        }
    }
}

impl std::iter::Sum for WorkloadMix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

fn default_page_bytes() -> u64 {
    4096
}

fn default_barrier_cycles() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub name: String,
    pub num_sms: usize,
    pub max_warps_per_sm: usize,
    pub smem_per_sm_bytes: u64,
    pub device_mem_bytes: u64,
    #[serde(default)]
    pub latencies: Latencies,
    /// Transfer granularity of the paged remote baseline.
    #[serde(default = "default_page_bytes")]
    pub page_bytes: u64,
    /// Cost of the end-of-aggregation cross-GPU synchronization.
    #[serde(default = "default_barrier_cycles")]
    pub barrier_cycles: u64,
    /// Optional dense-update surcharge per target node, charged as aggregation work.
    #[serde(default)]
    pub update_cycles_per_node: u64,
}

impl HardwareProfile {
    pub fn a100() -> Self {
        Self {
            name: "a100".into(),
            num_sms: 108,
            max_warps_per_sm: 64,
            smem_per_sm_bytes: 164 * 1024,
            device_mem_bytes: 40 << 30,
            latencies: Latencies::default(),
            page_bytes: default_page_bytes(),
            barrier_cycles: default_barrier_cycles(),
            update_cycles_per_node: 0,
        }
    }

    pub fn v100() -> Self {
        Self {
            name: "v100".into(),
            num_sms: 80,
            max_warps_per_sm: 64,
            smem_per_sm_bytes: 96 * 1024,
            device_mem_bytes: 32 << 30,
            ..Self::a100()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "a100" => Some(Self::a100()),
            "v100" => Some(Self::v100()),
            _ => None,
        }
    }

    /// Loads a profile from `.toml` or `.json` (decided by extension, TOML otherwise).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let hw: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            _ => toml::from_str(&text)?,
        };
        hw.check()?;
        Ok(hw)
    }

    pub fn check(&self) -> Result<()> {
        if self.num_sms == 0 || self.max_warps_per_sm == 0 {
            return Err(Error::Config(format!(
                "profile {:?}: SM and warp-slot counts must be >= 1",
                self.name
            )));
        }
        if self.page_bytes == 0 {
            return Err(Error::Config(format!("profile {:?}: page_bytes must be >= 1", self.name)));
        }
        Ok(())
    }
}
