//! Analytical performance/resource model for the aggregation kernel and the
//! hardware profiles it is evaluated against.

mod model;
mod profile;

pub use model::{
    launch_geometry, smem, validate, wpw, KernelConfig, LaunchGeometry, Violation, DIST_MAX,
    DIST_STEPS, FLOAT_SIZE, INT_SIZE, PS_MAX, PS_STEPS, WPB_MAX, WPB_STEPS,
};
pub use profile::{HardwareProfile, Latencies, WorkloadMix};
