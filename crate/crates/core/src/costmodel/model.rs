use std::fmt;

use serde::{Deserialize, Serialize};

use super::HardwareProfile;

/// Bytes per neighbor id and per embedding element in shared memory.
pub const INT_SIZE: u64 = 4;
pub const FLOAT_SIZE: u64 = 4;

pub const PS_MAX: usize = 32;
pub const DIST_MAX: usize = 16;
pub const WPB_MAX: usize = 16;

/// Geometric step schedules used by the tuner.
pub const PS_STEPS: [usize; 6] = [1, 2, 4, 8, 16, 32];
pub const DIST_STEPS: [usize; 5] = [1, 2, 4, 8, 16];
pub const WPB_STEPS: [usize; 5] = [1, 2, 4, 8, 16];

/// Neighbor-partition size, interleaving distance and warps per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KernelConfig {
    pub ps: usize,
    pub dist: usize,
    pub wpb: usize,
}

impl KernelConfig {
    pub const BASELINE: KernelConfig = KernelConfig { ps: 1, dist: 1, wpb: 1 };

    pub const fn new(ps: usize, dist: usize, wpb: usize) -> Self {
        Self { ps, dist, wpb }
    }

    pub fn range_violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if !(1..=PS_MAX).contains(&self.ps) {
            v.push(Violation::PsRange(self.ps));
        }
        if !(1..=DIST_MAX).contains(&self.dist) {
            v.push(Violation::DistRange(self.dist));
        }
        if !(1..=WPB_MAX).contains(&self.wpb) {
            v.push(Violation::WpbRange(self.wpb));
        }
        v
    }
}

impl fmt::Display for KernelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(ps={}, dist={}, wpb={})", self.ps, self.dist, self.wpb)
    }
}

/// Workload per warp: `2 * ps * D * dist`.
pub fn wpw(cfg: &KernelConfig, dim: usize) -> u64 {
    2 * cfg.ps as u64 * dim as u64 * cfg.dist as u64
}

/// Dynamic shared memory per block: neighbor ids plus the doubled embedding
/// buffer (partial sums and fetched remote rows).
pub fn smem(cfg: &KernelConfig, dim: usize) -> u64 {
    let wpb = cfg.wpb as u64;
    cfg.ps as u64 * wpb * INT_SIZE + 2 * wpb * dim as u64 * FLOAT_SIZE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaunchGeometry {
    pub num_warps: usize,
    pub num_blocks: usize,
    pub blocks_per_sm: f64,
}

/// Warp and block counts for a workload with `n_local` / `n_remote` partitions.
/// Divisions round up so counts stay integral.
pub fn launch_geometry(
    n_local: usize,
    n_remote: usize,
    cfg: &KernelConfig,
    hw: &HardwareProfile,
) -> LaunchGeometry {
    let num_warps = n_local.max(n_remote).div_ceil(cfg.dist.max(1));
    let num_blocks = num_warps.div_ceil(cfg.wpb.max(1));
    LaunchGeometry {
        num_warps,
        num_blocks,
        blocks_per_sm: num_blocks as f64 / hw.num_sms.max(1) as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    PsRange(usize),
    DistRange(usize),
    WpbRange(usize),
    ZeroDim,
    /// Per-block shared memory exceeds what one SM offers.
    Smem { required: u64, available: u64 },
    /// A block needs more warp slots than one SM has.
    WarpSlots { required: usize, available: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::PsRange(v) => write!(f, "ps range: {v} not in [1, {PS_MAX}]"),
            Violation::DistRange(v) => write!(f, "dist range: {v} not in [1, {DIST_MAX}]"),
            Violation::WpbRange(v) => write!(f, "wpb range: {v} not in [1, {WPB_MAX}]"),
            Violation::ZeroDim => write!(f, "dim: embedding dimension must be >= 1"),
            Violation::Smem { required, available } => {
                write!(f, "smem: block needs {required} B, SM offers {available} B")
            }
            Violation::WarpSlots { required, available } => {
                write!(f, "warp slots: block needs {required}, SM offers {available}")
            }
        }
    }
}

/// Checks the search-space bounds and the per-SM resource caps. Violations are
/// data, not failures.
pub fn validate(cfg: &KernelConfig, hw: &HardwareProfile, dim: usize) -> Result<(), Vec<Violation>> {
    let mut v = cfg.range_violations();
    if dim == 0 {
        v.push(Violation::ZeroDim);
    }
    let required = smem(cfg, dim);
    if required > hw.smem_per_sm_bytes {
        v.push(Violation::Smem { required, available: hw.smem_per_sm_bytes });
    }
    if cfg.wpb > hw.max_warps_per_sm {
        v.push(Violation::WarpSlots { required: cfg.wpb, available: hw.max_warps_per_sm });
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wpw_examples() {
        assert_eq!(wpw(&KernelConfig::new(1, 1, 1), 1), 2);
        assert_eq!(wpw(&KernelConfig::new(16, 2, 1), 602), 38_528);
        assert_eq!(wpw(&KernelConfig::new(32, 16, 1), 16), 16_384);
    }

    #[test]
    fn smem_examples() {
        assert_eq!(smem(&KernelConfig::new(1, 1, 1), 1), 12);
        assert_eq!(smem(&KernelConfig::new(16, 1, 2), 16), 384);
        let big = smem(&KernelConfig::new(32, 1, 16), 602);
        assert_eq!(big, 79_104);
        assert!(big <= 164 * 1024);
        assert_eq!(smem(&KernelConfig::new(7, 1, 1), 602), 7 * 4 + 4816);
    }

    #[test]
    fn geometry_examples() {
        let hw = HardwareProfile::a100();
        let g = launch_geometry(4, 4, &KernelConfig::new(1, 2, 1), &hw);
        assert_eq!((g.num_warps, g.num_blocks), (2, 2));
        let g = launch_geometry(0, 0, &KernelConfig::new(4, 2, 2), &hw);
        assert_eq!((g.num_warps, g.num_blocks, g.blocks_per_sm), (0, 0, 0.0));
        let hw2 = HardwareProfile { num_sms: 2, ..HardwareProfile::a100() };
        let g = launch_geometry(5, 3, &KernelConfig::new(1, 1, 2), &hw2);
        assert_eq!((g.num_warps, g.num_blocks, g.blocks_per_sm), (5, 3, 1.5));
    }

    #[test]
    fn validate_examples() {
        let hw = HardwareProfile::a100();
        let err = validate(&KernelConfig::new(33, 1, 1), &hw, 16).unwrap_err();
        assert_eq!(err, vec![Violation::PsRange(33)]);
        assert!(err[0].to_string().starts_with("ps range"));

        let tiny = HardwareProfile { smem_per_sm_bytes: 100, ..HardwareProfile::a100() };
        let err = validate(&KernelConfig::new(16, 1, 2), &tiny, 16).unwrap_err();
        assert_eq!(err, vec![Violation::Smem { required: 384, available: 100 }]);

        assert!(validate(&KernelConfig::new(16, 1, 2), &hw, 16).is_ok());
        assert!(validate(&KernelConfig::new(32, 16, 16), &hw, 602).is_ok());
        let few_slots = HardwareProfile { max_warps_per_sm: 4, ..HardwareProfile::a100() };
        assert!(validate(&KernelConfig::new(1, 1, 8), &few_slots, 1).is_err());
        assert_eq!(validate(&KernelConfig::new(1, 0, 17), &hw, 0).unwrap_err().len(), 3);
    }

    proptest! {
        #[test]
        fn formulas_monotone(ps in 1usize..32, dist in 1usize..16, wpb in 1usize..16, d in 1usize..1024) {
            let c = KernelConfig::new(ps, dist, wpb);
            for next in [
                KernelConfig::new(ps + 1, dist, wpb),
                KernelConfig::new(ps, dist + 1, wpb),
                KernelConfig::new(ps, dist, wpb + 1),
            ] {
                prop_assert!(wpw(&next, d) >= wpw(&c, d));
                prop_assert!(smem(&next, d) >= smem(&c, d));
            }
            prop_assert!(wpw(&c, d + 1) >= wpw(&c, d));
            prop_assert!(smem(&c, d + 1) >= smem(&c, d));
        }

        #[test]
        fn geometry_scales(nl in 0usize..5000, nr in 0usize..5000, dist in 1usize..=16, wpb in 1usize..=16) {
            let hw = HardwareProfile::a100();
            let cfg = KernelConfig::new(1, dist, wpb);
            let one = launch_geometry(nl * dist, nr * dist, &cfg, &hw);
            let two = launch_geometry(2 * nl * dist, 2 * nr * dist, &cfg, &hw);
            prop_assert_eq!(two.num_warps, 2 * one.num_warps);
            let g = launch_geometry(nl, nr, &cfg, &hw);
            prop_assert_eq!(g.num_blocks, g.num_warps.div_ceil(wpb));
        }
    }
}
