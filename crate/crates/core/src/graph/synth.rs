use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto};
use serde::{Deserialize, Serialize};

use super::CsrGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    /// Every node draws `avg_degree` neighbors (fraction resolved per node) i.i.d. uniformly.
    Uniform,
    /// Heavy-tailed out-degrees, neighbors still drawn uniformly.
    #[serde(alias = "power-law")]
    PowerLaw,
}

impl std::str::FromStr for SyntheticKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "powerlaw" | "power-law" | "zipf" => Ok(Self::PowerLaw),
            other => Err(format!("unknown synthetic graph kind {other:?}")),
        }
    }
}

/// Pareto shape used for power-law degrees; below 2 the variance is unbounded,
/// which is what produces a handful of hub nodes at desk scale.
const POWERLAW_SHAPE: f64 = 1.5;

/// Deterministic synthetic graph for a fixed seed.
///
/// Panics if `num_nodes == 0` or `avg_degree` is negative or not finite.
pub fn gen_synthetic(kind: SyntheticKind, num_nodes: usize, avg_degree: f64, seed: u64) -> CsrGraph {
    assert!(num_nodes >= 1, "synthetic graphs need at least one node");
    assert!(avg_degree.is_finite() && avg_degree >= 0.0, "average degree must be >= 0");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let degrees = match kind {
        SyntheticKind::Uniform => uniform_degrees(&mut rng, num_nodes, avg_degree),
        SyntheticKind::PowerLaw => powerlaw_degrees(&mut rng, num_nodes, avg_degree),
    };
    let edges: Vec<(usize, usize)> = degrees
        .iter()
        .enumerate()
        .flat_map(|(v, &d)| std::iter::repeat_n(v, d))
        .map(|v| (v, rng.random_range(0..num_nodes)))
        .collect();
    CsrGraph::from_edges(num_nodes, &edges).expect("generated ids are in range")
}

fn uniform_degrees(rng: &mut ChaCha8Rng, n: usize, avg: f64) -> Vec<usize> {
    let whole = avg.floor() as usize;
    let frac = avg - avg.floor();
    (0..n).map(|_| whole + usize::from(frac > 0.0 && rng.random_bool(frac))).collect()
}

fn powerlaw_degrees(rng: &mut ChaCha8Rng, n: usize, avg: f64) -> Vec<usize> {
    if avg == 0.0 {
        return vec![0; n];
    }
    let pareto = Pareto::new(1.0, POWERLAW_SHAPE).expect("valid pareto parameters");
    let weights: Vec<f64> = (0..n).map(|_| pareto.sample(rng)).collect();
    let scale = avg * n as f64 / weights.iter().sum::<f64>();
    let cap = n.saturating_sub(1).max(1);
    weights.iter().map(|w| ((w * scale).round() as usize).clamp(1, cap)).collect()
}
