//! Cross-iteration search over `(ps, dist, wpb)`.
//!
//! [`optimize`] runs a greedy coordinate ascent over geometric steps of each
//! parameter, driven by a latency callback, and keeps every measurement in a
//! lookup table. [`exhaustive`] evaluates a whole grid and serves as its oracle.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::costmodel::{validate, HardwareProfile, KernelConfig, DIST_STEPS, PS_STEPS, WPB_STEPS};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_EVALUATIONS: usize = 15;
pub const MAX_GRID_POINTS: usize = 1024;

/// Which `ps` the search falls back to when growing `wpb` stops paying off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetreatRule {
    /// The `ps` with the second-lowest latency measured while ascending `ps`.
    #[default]
    LatencyRank,
    /// The step just below the best `ps`.
    ValueRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub retreat: RetreatRule,
    pub max_evaluations: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self { retreat: RetreatRule::LatencyRank, max_evaluations: DEFAULT_MAX_EVALUATIONS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuneEntry {
    pub config: KernelConfig,
    pub cycles: u64,
}

/// Every evaluated configuration in evaluation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuneTrace {
    pub entries: Vec<TuneEntry>,
    pub best: KernelConfig,
    pub best_cycles: u64,
    pub iterations: usize,
}

impl TuneTrace {
    fn from_entries(entries: Vec<TuneEntry>) -> Self {
        let best = *entries.iter().min_by_key(|e| e.cycles).expect("trace holds the baseline");
        Self { iterations: entries.len(), best: best.config, best_cycles: best.cycles, entries }
    }

    pub fn cycles_of(&self, cfg: &KernelConfig) -> Option<u64> {
        self.entries.iter().find(|e| e.config == *cfg).map(|e| e.cycles)
    }

    /// 1-based rank of each entry by cycles; ties keep evaluation order.
    pub fn ranks(&self) -> Vec<usize> {
        ranks(&self.entries)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "ps,dist,wpb,cycles,rank")?;
        for (e, r) in self.entries.iter().zip(self.ranks()) {
            writeln!(w, "{},{},{},{},{}", e.config.ps, e.config.dist, e.config.wpb, e.cycles, r)?;
        }
        Ok(())
    }
}

fn ranks(entries: &[TuneEntry]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by_key(|&i| (entries[i].cycles, i));
    let mut out = vec![0; entries.len()];
    for (rank, i) in order.into_iter().enumerate() {
        out[i] = rank + 1;
    }
    out
}

enum Outcome {
    Measured(u64),
    Invalid,
    Stop,
}

struct Search<'a, F> {
    hw: &'a HardwareProfile,
    dim: usize,
    opts: TuneOptions,
    eval: F,
    entries: Vec<TuneEntry>,
    table: HashMap<KernelConfig, u64>,
    stopped: bool,
}

impl<F: FnMut(&KernelConfig) -> Result<u64>> Search<'_, F> {
    fn measure(&mut self, cfg: KernelConfig) -> Result<Outcome> {
        if let Some(&c) = self.table.get(&cfg) {
            return Ok(Outcome::Measured(c));
        }
        if self.stopped {
            return Ok(Outcome::Stop);
        }
        if validate(&cfg, self.hw, self.dim).is_err() {
            return Ok(Outcome::Invalid);
        }
        let cycles = (self.eval)(&cfg).map_err(|e| Error::Evaluation { config: cfg, source: Box::new(e) })?;
        self.table.insert(cfg, cycles);
        self.entries.push(TuneEntry { config: cfg, cycles });
        if self.entries.len() >= self.opts.max_evaluations || self.no_longer_improving() {
            self.stopped = true;
        }
        Ok(Outcome::Measured(cycles))
    }

    /// The last three measurements are all worse than the third-best one.
    fn no_longer_improving(&self) -> bool {
        let n = self.entries.len();
        if n < 6 {
            return false;
        }
        let mut sorted: Vec<u64> = self.entries.iter().map(|e| e.cycles).collect();
        sorted.sort_unstable();
        let third = sorted[2];
        self.entries[n - 3..].iter().all(|e| e.cycles > third)
    }

    /// Walks `axis` up its steps from `start` while latency strictly drops.
    /// Returns the best point and whether the walk ended on a latency increase.
    fn ascend(&mut self, start: KernelConfig, start_cycles: u64, axis: Axis) -> Result<(KernelConfig, u64, bool)> {
        let (mut best, mut best_cycles) = (start, start_cycles);
        for &v in axis.steps().iter().filter(|&&v| v > axis.get(&start)) {
            let cand = axis.set(best, v);
            match self.measure(cand)? {
                Outcome::Measured(c) if c < best_cycles => (best, best_cycles) = (cand, c),
                Outcome::Measured(c) => return Ok((best, best_cycles, c > best_cycles)),
                Outcome::Invalid | Outcome::Stop => break,
            }
        }
        Ok((best, best_cycles, false))
    }
}

#[derive(Debug, Clone, Copy)]
enum Axis {
    Ps,
    Dist,
    Wpb,
}

impl Axis {
    fn steps(self) -> &'static [usize] {
        match self {
            Axis::Ps => &PS_STEPS,
            Axis::Dist => &DIST_STEPS,
            Axis::Wpb => &WPB_STEPS,
        }
    }

    fn get(self, c: &KernelConfig) -> usize {
        match self {
            Axis::Ps => c.ps,
            Axis::Dist => c.dist,
            Axis::Wpb => c.wpb,
        }
    }

    fn set(self, c: KernelConfig, v: usize) -> KernelConfig {
        match self {
            Axis::Ps => KernelConfig { ps: v, ..c },
            Axis::Dist => KernelConfig { dist: v, ..c },
            Axis::Wpb => KernelConfig { wpb: v, ..c },
        }
    }
}

/// Heuristic search starting from `(1, 1, 1)`.
///
/// Ascends `ps`, then `dist`, then `wpb`, each while latency strictly decreases.
/// If raising `wpb` increased latency, `ps` retreats per [`RetreatRule`] and
/// `wpb` is ascended once more from 1. The search ends early once the last three
/// measurements are all worse than the third-best, or when the evaluation budget
/// is spent. Repeated configurations are served from the lookup table.
pub fn optimize<F>(hw: &HardwareProfile, dim: usize, opts: TuneOptions, eval: F) -> Result<TuneTrace>
where
    F: FnMut(&KernelConfig) -> Result<u64>,
{
    if opts.max_evaluations == 0 {
        return Err(Error::Config("evaluation budget must be at least 1".into()));
    }
    let start = KernelConfig::BASELINE;
    if let Err(v) = validate(&start, hw, dim) {
        let list: Vec<String> = v.iter().map(ToString::to_string).collect();
        return Err(Error::Config(format!("{start} is not launchable: {}", list.join("; "))));
    }
    let mut s = Search { hw, dim, opts, eval, entries: Vec::new(), table: HashMap::new(), stopped: false };
    let Outcome::Measured(c0) = s.measure(start)? else { unreachable!("baseline validated above") };

    let (after_ps, c_ps, _) = s.ascend(start, c0, Axis::Ps)?;
    let ps_walk: Vec<TuneEntry> = s
        .entries
        .iter()
        .filter(|e| e.config.dist == start.dist && e.config.wpb == start.wpb)
        .copied()
        .collect();
    let (after_dist, c_dist, _) = s.ascend(after_ps, c_ps, Axis::Dist)?;
    let (_, _, wpb_hurt) = s.ascend(after_dist, c_dist, Axis::Wpb)?;

    if wpb_hurt && !s.stopped {
        if let Some(ps) = retreat_ps(&ps_walk, after_ps.ps, opts.retreat) {
            let from = KernelConfig { ps, wpb: WPB_STEPS[0], ..after_dist };
            if let Outcome::Measured(c) = s.measure(from)? {
                s.ascend(from, c, Axis::Wpb)?;
            }
        }
    }
    Ok(TuneTrace::from_entries(s.entries))
}

fn retreat_ps(walk: &[TuneEntry], best_ps: usize, rule: RetreatRule) -> Option<usize> {
    match rule {
        RetreatRule::LatencyRank => {
            let mut by_latency: Vec<(usize, &TuneEntry)> = walk.iter().enumerate().collect();
            by_latency.sort_by_key(|&(i, e)| (e.cycles, i));
            by_latency.iter().map(|(_, e)| e.config.ps).find(|&ps| ps != best_ps)
        }
        RetreatRule::ValueRank => PS_STEPS.iter().rev().copied().find(|&ps| ps < best_ps),
    }
}

/// Candidate values per parameter; the grid is their cartesian product.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub ps: Vec<usize>,
    pub dist: Vec<usize>,
    pub wpb: Vec<usize>,
}

impl Grid {
    /// The geometric steps the heuristic walks.
    pub fn stepped() -> Self {
        Self { ps: PS_STEPS.to_vec(), dist: DIST_STEPS.to_vec(), wpb: WPB_STEPS.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.ps.len() * self.dist.len() * self.wpb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn configs(&self) -> impl Iterator<Item = KernelConfig> + '_ {
        self.ps.iter().flat_map(move |&ps| {
            self.dist
                .iter()
                .flat_map(move |&dist| self.wpb.iter().map(move |&wpb| KernelConfig::new(ps, dist, wpb)))
        })
    }
}

/// Every launchable grid point sorted by cycles (ties in grid order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExhaustiveTable {
    pub rows: Vec<TuneEntry>,
}

impl ExhaustiveTable {
    pub fn best(&self) -> &TuneEntry {
        &self.rows[0]
    }

    /// Whether `cfg` is among the `k` lowest-latency rows. Rows tied with the
    /// k-th latency count as inside.
    pub fn in_top(&self, cfg: &KernelConfig, k: usize) -> bool {
        let Some(cut) = self.rows.get(k.saturating_sub(1)).or(self.rows.last()) else {
            return false;
        };
        self.rows.iter().take_while(|r| r.cycles <= cut.cycles).any(|r| r.config == *cfg)
    }
}

pub fn exhaustive<F>(grid: &Grid, hw: &HardwareProfile, dim: usize, mut eval: F) -> Result<ExhaustiveTable>
where
    F: FnMut(&KernelConfig) -> Result<u64>,
{
    if grid.len() > MAX_GRID_POINTS {
        return Err(Error::Config(format!("grid has {} points, limit is {MAX_GRID_POINTS}", grid.len())));
    }
    let mut rows = Vec::new();
    for cfg in grid.configs().filter(|c| validate(c, hw, dim).is_ok()) {
        let cycles = eval(&cfg).map_err(|e| Error::Evaluation { config: cfg, source: Box::new(e) })?;
        rows.push(TuneEntry { config: cfg, cycles });
    }
    if rows.is_empty() {
        return Err(Error::Config("no grid point passes validation".into()));
    }
    rows.sort_by_key(|r| r.cycles);
    Ok(ExhaustiveTable { rows })
}
