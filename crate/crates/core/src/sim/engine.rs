//! Event-driven SM model.
//!
//! Each SM owns one issue pipeline. Every cycle it advances the lowest-id warp
//! that is ready, so a lower-id warp becoming ready preempts the current one at
//! the next cycle boundary. `Exec` ops (LL, AC) hold the pipeline for their whole
//! cost; `Issue` holds it for one cycle and completes the remote load `latency`
//! cycles after the issue cycle began; `Wait` blocks until that load is done.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::costmodel::HardwareProfile;
use crate::error::{Error, Result};
use crate::workload::BlockSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "LL")]
    Ll,
    #[serde(rename = "AC")]
    Ac,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Lr => "LR",
            Stage::Ll => "LL",
            Stage::Ac => "AC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Op {
    Exec { stage: Stage, cycles: u64 },
    Issue { slot: usize, latency: u64 },
    Wait { slot: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Begin,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub sm: usize,
    pub warp: usize,
    pub stage: Stage,
    pub event: Edge,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCycles {
    #[serde(rename = "LR")]
    pub lr: u64,
    #[serde(rename = "LL")]
    pub ll: u64,
    #[serde(rename = "AC")]
    pub ac: u64,
}

impl StageCycles {
    fn add(&mut self, stage: Stage, cycles: u64) {
        match stage {
            Stage::Lr => self.lr += cycles,
            Stage::Ll => self.ll += cycles,
            Stage::Ac => self.ac += cycles,
        }
    }

    pub(crate) fn merge(&mut self, other: &StageCycles) {
        self.lr += other.lr;
        self.ll += other.ll;
        self.ac += other.ac;
    }
}

/// Raw counters of one kernel execution.
#[derive(Debug, Clone, Default)]
pub(crate) struct EngineRun {
    pub total_cycles: u64,
    pub busy: StageCycles,
    pub issue_cycles: u64,
    /// Σ over SM-cycles of ready-or-running warps.
    pub ready_warp_cycles: u128,
    /// Σ over SMs of cycles with at least one resident warp.
    pub active_sm_cycles: u64,
    pub active_sms: usize,
    pub trace: Vec<TraceEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Waiting,
    Ready,
    Blocked(usize),
    Done,
}

struct WarpState {
    pc: usize,
    remaining: u64,
    started: bool,
    status: Status,
    sm: usize,
    block: usize,
    /// Completion cycle of each issued remote load.
    loads: Vec<Option<u64>>,
}

struct SmState {
    free_slots: usize,
    free_smem: u64,
    ready: BTreeSet<usize>,
    resident: usize,
    running: Option<usize>,
    since: u64,
    token: u64,
    last_touch: u64,
    used: bool,
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    OpDone { sm: usize, token: u64 },
    LoadDone { warp: usize, slot: usize },
}

pub(crate) struct Engine<'a> {
    programs: &'a [Vec<Op>],
    blocks: &'a [BlockSpan],
    smem_per_block: u64,
    trace_on: bool,

    warps: Vec<WarpState>,
    sms: Vec<SmState>,
    block_live: Vec<usize>,
    next_block: usize,
    heap: BinaryHeap<Reverse<(u64, u64, Event)>>,
    seq: u64,
    run: EngineRun,
}

impl<'a> Engine<'a> {
    pub fn new(
        programs: &'a [Vec<Op>],
        blocks: &'a [BlockSpan],
        smem_per_block: u64,
        hw: &HardwareProfile,
        trace_on: bool,
    ) -> Result<Self> {
        if let Some(b) = blocks.iter().find(|b| b.num_warps > hw.max_warps_per_sm) {
            return Err(Error::Config(format!(
                "block of {} warps can never fit an SM with {} warp slots",
                b.num_warps, hw.max_warps_per_sm
            )));
        }
        if !blocks.is_empty() && smem_per_block > hw.smem_per_sm_bytes {
            return Err(Error::Config(format!(
                "block needs {smem_per_block} B of shared memory, SM offers {}",
                hw.smem_per_sm_bytes
            )));
        }
        let covered: usize = blocks.iter().map(|b| b.num_warps).sum();
        if covered != programs.len() {
            return Err(Error::Integrity(format!(
                "blocks cover {covered} warps but {} programs were given",
                programs.len()
            )));
        }
        let mut warps = Vec::with_capacity(programs.len());
        for (bi, b) in blocks.iter().enumerate() {
            for prog in &programs[b.first_warp..b.first_warp + b.num_warps] {
                let slots = prog
                    .iter()
                    .filter_map(|op| match op {
                        Op::Issue { slot, .. } => Some(slot + 1),
                        _ => None,
                    })
                    .max()
                    .unwrap_or(0);
                warps.push(WarpState {
                    pc: 0,
                    remaining: 0,
                    started: false,
                    status: Status::Waiting,
                    sm: usize::MAX,
                    block: bi,
                    loads: vec![None; slots],
                });
            }
        }
        let sms = (0..hw.num_sms)
            .map(|_| SmState {
                free_slots: hw.max_warps_per_sm,
                free_smem: hw.smem_per_sm_bytes,
                ready: BTreeSet::new(),
                resident: 0,
                running: None,
                since: 0,
                token: 0,
                last_touch: 0,
                used: false,
            })
            .collect();
        Ok(Self {
            programs,
            blocks,
            smem_per_block,
            trace_on,
            warps,
            sms,
            block_live: blocks.iter().map(|b| b.num_warps).collect(),
            next_block: 0,
            heap: BinaryHeap::new(),
            seq: 0,
            run: EngineRun::default(),
        })
    }

    pub fn run(mut self) -> Result<EngineRun> {
        let mut touched = BTreeSet::new();
        self.dispatch(0, &mut touched);
        self.reschedule(0, &touched);

        while let Some(Reverse((t, _, _))) = self.heap.peek() {
            let t = *t;
            touched.clear();
            while let Some(Reverse((et, _, _))) = self.heap.peek() {
                if *et != t {
                    break;
                }
                let Reverse((_, _, ev)) = self.heap.pop().expect("peeked");
                match ev {
                    Event::OpDone { sm, token } => {
                        if self.sms[sm].token != token || self.sms[sm].running.is_none() {
                            continue;
                        }
                        self.sync_sm(sm, t);
                        touched.insert(sm);
                        let w = self.sms[sm].running.take().expect("checked");
                        self.finish_op(w, t, &mut touched);
                    }
                    Event::LoadDone { warp, slot } => {
                        let sm = self.warps[warp].sm;
                        self.sync_sm(sm, t);
                        touched.insert(sm);
                        if self.warps[warp].status == Status::Blocked(slot) {
                            self.warps[warp].pc += 1;
                            self.advance(warp, t, &mut touched);
                        }
                    }
                }
            }
            self.dispatch(t, &mut touched);
            self.reschedule(t, &touched);
        }

        if self.next_block != self.blocks.len() || self.warps.iter().any(|w| w.status != Status::Done) {
            return Err(Error::Integrity("simulation stalled before every warp finished".into()));
        }
        self.run.active_sms = self.sms.iter().filter(|s| s.used).count();
        if self.trace_on {
            self.run.trace.sort_unstable();
        }
        Ok(self.run)
    }

    fn push(&mut self, t: u64, ev: Event) {
        self.seq += 1;
        self.heap.push(Reverse((t, self.seq, ev)));
    }

    fn trace(&mut self, cycle: u64, sm: usize, warp: usize, stage: Stage, event: Edge) {
        if self.trace_on {
            self.run.trace.push(TraceEvent { cycle, sm, warp, stage, event });
        }
    }

    /// Brings an SM's counters up to cycle `t`. Must precede any change to its state.
    fn sync_sm(&mut self, sm: usize, t: u64) {
        let s = &mut self.sms[sm];
        let dt = t - s.last_touch;
        self.run.ready_warp_cycles += s.ready.len() as u128 * dt as u128;
        if s.resident > 0 {
            self.run.active_sm_cycles += dt;
        }
        s.last_touch = t;
        if let Some(w) = s.running {
            let ran = t - s.since;
            self.warps[w].remaining -= ran;
            self.run.issue_cycles += ran;
            s.since = t;
        }
        self.run.total_cycles = self.run.total_cycles.max(t);
    }

    fn finish_op(&mut self, w: usize, t: u64, touched: &mut BTreeSet<usize>) {
        let sm = self.warps[w].sm;
        let op = self.programs[w][self.warps[w].pc];
        match op {
            Op::Exec { stage, cycles } => {
                self.run.busy.add(stage, cycles);
                self.trace(t, sm, w, stage, Edge::End);
            }
            Op::Issue { slot, latency } => {
                let issued = t - 1;
                let done = issued + latency;
                self.run.busy.add(Stage::Lr, latency);
                self.trace(issued, sm, w, Stage::Lr, Edge::Begin);
                self.trace(done, sm, w, Stage::Lr, Edge::End);
                self.warps[w].loads[slot] = Some(done);
                if done > t {
                    self.push(done, Event::LoadDone { warp: w, slot });
                }
            }
            Op::Wait { .. } => unreachable!("wait ops never hold the pipeline"),
        }
        self.warps[w].pc += 1;
        self.advance(w, t, touched);
    }

    /// Moves warp `w` to its next runnable op, blocking or retiring it as needed.
    fn advance(&mut self, w: usize, t: u64, touched: &mut BTreeSet<usize>) {
        let sm = self.warps[w].sm;
        loop {
            let pc = self.warps[w].pc;
            match self.programs[w].get(pc) {
                None => {
                    self.sms[sm].ready.remove(&w);
                    self.warps[w].status = Status::Done;
                    self.retire_warp(w, touched);
                    return;
                }
                Some(Op::Wait { slot }) => match self.warps[w].loads[*slot] {
                    Some(done) if done <= t => self.warps[w].pc += 1,
                    Some(_) => {
                        self.sms[sm].ready.remove(&w);
                        self.warps[w].status = Status::Blocked(*slot);
                        return;
                    }
                    None => unreachable!("wait precedes its issue"),
                },
                Some(Op::Exec { cycles, .. }) => {
                    self.become_ready(w, *cycles);
                    return;
                }
                Some(Op::Issue { .. }) => {
                    self.become_ready(w, 1);
                    return;
                }
            }
        }
    }

    fn become_ready(&mut self, w: usize, cycles: u64) {
        let ws = &mut self.warps[w];
        ws.remaining = cycles;
        ws.started = false;
        ws.status = Status::Ready;
        self.sms[ws.sm].ready.insert(w);
    }

    /// Warp slots and shared memory are returned when the whole block retires.
    fn retire_warp(&mut self, w: usize, touched: &mut BTreeSet<usize>) {
        let sm = self.warps[w].sm;
        self.sms[sm].resident -= 1;
        let b = self.warps[w].block;
        self.block_live[b] -= 1;
        if self.block_live[b] == 0 {
            self.sms[sm].free_slots += self.blocks[b].num_warps;
            self.sms[sm].free_smem += self.smem_per_block;
        }
        touched.insert(sm);
    }

    /// Places pending blocks, in order, on the SM with the most free warp slots
    /// (then most free shared memory, then lowest id).
    fn dispatch(&mut self, t: u64, touched: &mut BTreeSet<usize>) {
        while self.next_block < self.blocks.len() {
            let b = self.blocks[self.next_block];
            let best = self
                .sms
                .iter()
                .enumerate()
                .filter(|(_, s)| s.free_slots >= b.num_warps && s.free_smem >= self.smem_per_block)
                .max_by(|(ia, a), (ib, b)| {
                    (a.free_slots, a.free_smem, Reverse(*ia)).cmp(&(b.free_slots, b.free_smem, Reverse(*ib)))
                })
                .map(|(i, _)| i);
            let Some(sm) = best else { break };
            self.sync_sm(sm, t);
            touched.insert(sm);
            let bi = self.next_block;
            self.next_block += 1;
            let s = &mut self.sms[sm];
            s.used = true;
            s.free_slots -= b.num_warps;
            s.free_smem -= self.smem_per_block;
            s.resident += b.num_warps;
            for w in b.first_warp..b.first_warp + b.num_warps {
                debug_assert_eq!(self.warps[w].block, bi);
                self.warps[w].sm = sm;
                self.advance(w, t, touched);
            }
        }
    }

    fn reschedule(&mut self, t: u64, touched: &BTreeSet<usize>) {
        for &sm in touched {
            let best = self.sms[sm].ready.first().copied();
            if best == self.sms[sm].running {
                continue;
            }
            self.sms[sm].running = best;
            self.sms[sm].since = t;
            self.sms[sm].token += 1;
            if let Some(w) = best {
                if !self.warps[w].started {
                    self.warps[w].started = true;
                    if let Op::Exec { stage, .. } = self.programs[w][self.warps[w].pc] {
                        self.trace(t, sm, w, stage, Edge::Begin);
                    }
                }
                let token = self.sms[sm].token;
                let done = t + self.warps[w].remaining;
                self.push(done, Event::OpDone { sm, token });
            }
        }
    }
}

/// Time a single warp needs with an SM to itself.
pub(crate) fn solo_cycles(program: &[Op]) -> u64 {
    let mut t = 0u64;
    let mut loads: Vec<u64> = Vec::new();
    for op in program {
        match *op {
            Op::Exec { cycles, .. } => t += cycles,
            Op::Issue { slot, latency } => {
                if loads.len() <= slot {
                    loads.resize(slot + 1, 0);
                }
                loads[slot] = t + latency;
                t += 1;
            }
            Op::Wait { slot } => t = t.max(loads[slot]),
        }
    }
    t
}
