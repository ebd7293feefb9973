//! Deterministic crash-injection harness.
//!
//! Workers are virtualized: the harness owns the only real thread and
//! replays worker steps one shared-memory event at a time on the simulated
//! backend. A schedule is an interleaving of worker ids, an optional crash
//! point, and the subset of dirty cache lines the crash writes back. After
//! the crash the harness runs recovery and checks that the durable image is
//! explainable as some sequential execution of a subset of the submitted
//! operations.

mod explore;
mod oracle;
mod state_machine;

pub use explore::{
    explore, random_schedule, sample_schedules, ExploreConfig, ExploreReport, Violation,
};
pub use oracle::{find_witness, OracleOp};
pub use state_machine::{classify_row, edge_allowed, Machine, RowId};

use serde::{Deserialize, Serialize};

use crate::descriptor::{Descriptor, TargetEntry};
use crate::error::{Error, Result};
use crate::layout::{HeapLayout, Variant, WordAddress};
use crate::op::{EventKind, PcasOp, PmwcasOp, ReadOp, StepOutcome};
use crate::pmem::{Memory, SimHeap};
use crate::recovery::{recover, RecoveryReport};
use crate::tag::TaggedWord;

/// One CAS target given as plain 62-bit payload values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetSpec {
    pub addr: WordAddress,
    pub expected: u64,
    pub desired: u64,
}

impl TargetSpec {
    pub fn new(addr: u64, expected: u64, desired: u64) -> Self {
        TargetSpec {
            addr: WordAddress(addr),
            expected,
            desired,
        }
    }

    fn entry(&self) -> Result<TargetEntry> {
        TargetEntry::new(
            self.addr,
            TaggedWord::from_payload(self.expected),
            TaggedWord::from_payload(self.desired),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpSpec {
    Pmwcas { targets: Vec<TargetSpec> },
    Pcas { target: TargetSpec },
    Read { addr: WordAddress },
}

/// A complete harness instance: heap geometry, initial payloads, and the
/// per-worker operation scripts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub variant: Variant,
    pub word_count: u64,
    pub block_size: u32,
    /// Initial payload of each word (zero-filled to `word_count`).
    pub initial: Vec<u64>,
    pub workers: Vec<Vec<OpSpec>>,
    /// Word whose (cache, durable, state) trace is recorded and, when a
    /// state machine is checked, validated.
    pub observe: Option<WordAddress>,
}

impl Scenario {
    pub fn layout(&self) -> Result<HeapLayout> {
        HeapLayout::new(
            self.word_count,
            self.block_size,
            self.workers.len().max(1),
            self.variant,
        )
    }

    pub fn initial_payload(&self, addr: WordAddress) -> u64 {
        self.initial.get(addr.0 as usize).copied().unwrap_or(0)
    }

    /// Flattened list of CAS-bearing ops (reads excluded), worker-major.
    pub fn oracle_ops(&self) -> Vec<OracleOp> {
        let mut ops = Vec::new();
        for (w, script) in self.workers.iter().enumerate() {
            for (seq, spec) in script.iter().enumerate() {
                let targets = match spec {
                    OpSpec::Pmwcas { targets } => targets.clone(),
                    OpSpec::Pcas { target } => vec![*target],
                    OpSpec::Read { .. } => continue,
                };
                ops.push(OracleOp {
                    worker: w,
                    seq,
                    targets,
                });
            }
        }
        ops
    }

    pub fn build_heap(&self) -> Result<SimHeap> {
        let layout = self.layout()?;
        let heap = SimHeap::new(layout.clone());
        for (i, &p) in self.initial.iter().enumerate() {
            if p != 0 {
                let cell = layout.word_cell(WordAddress(i as u64));
                heap.store(cell, TaggedWord::from_payload(p).raw());
                heap.persist(cell);
            }
        }
        Ok(heap)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum ActiveOp {
    Pmwcas(PmwcasOp),
    Pcas(PcasOp),
    Read(ReadOp),
}

impl ActiveOp {
    fn build(spec: &OpSpec, layout: &HeapLayout, slot: usize, variant: Variant) -> Result<Self> {
        Ok(match spec {
            OpSpec::Pmwcas { targets } => {
                let entries: Result<Vec<_>> = targets.iter().map(|t| t.entry()).collect();
                ActiveOp::Pmwcas(PmwcasOp::new(Descriptor::new(layout, slot, entries?)?, variant))
            }
            OpSpec::Pcas { target } => ActiveOp::Pcas(PcasOp::new(
                target.addr,
                TaggedWord::from_payload(target.expected),
                TaggedWord::from_payload(target.desired),
            )?),
            OpSpec::Read { addr } => ActiveOp::Read(ReadOp::new(*addr)),
        })
    }

    fn is_done(&self) -> bool {
        match self {
            ActiveOp::Pmwcas(op) => op.is_done(),
            ActiveOp::Pcas(op) => op.is_done(),
            ActiveOp::Read(op) => op.is_done(),
        }
    }

    fn blocked(&self, mem: &SimHeap) -> bool {
        match self {
            ActiveOp::Pmwcas(op) => op.blocked(mem),
            ActiveOp::Pcas(op) => op.blocked(mem),
            ActiveOp::Read(op) => op.blocked(mem),
        }
    }

    fn step(&mut self, mem: &SimHeap) -> StepOutcome {
        match self {
            ActiveOp::Pmwcas(op) => op.step(mem),
            ActiveOp::Pcas(op) => op.step(mem),
            ActiveOp::Read(op) => op.step(mem),
        }
    }

    fn result(&self) -> Option<bool> {
        match self {
            ActiveOp::Pmwcas(op) => op.result(),
            ActiveOp::Pcas(op) => op.result(),
            ActiveOp::Read(_) => None,
        }
    }
}

/// Where a (worker, seq) op stands at a given point of the replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpStatus {
    NotStarted,
    InFlight,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct WorkerRuntime {
    ops: Vec<ActiveOp>,
    current: usize,
    started: bool,
}

impl WorkerRuntime {
    fn build(scenario: &Scenario, layout: &HeapLayout, slot: usize) -> Result<Self> {
        let ops: Result<Vec<_>> = scenario.workers[slot]
            .iter()
            .map(|s| ActiveOp::build(s, layout, slot, scenario.variant))
            .collect();
        Ok(WorkerRuntime {
            ops: ops?,
            current: 0,
            started: false,
        })
    }

    fn done(&self) -> bool {
        self.current >= self.ops.len()
    }

    fn blocked(&self, mem: &SimHeap) -> bool {
        !self.done() && self.ops[self.current].blocked(mem)
    }

    fn step(&mut self, mem: &SimHeap) -> Result<EventKind> {
        if self.done() {
            return Err(Error::Harness("step on finished worker".into()));
        }
        match self.ops[self.current].step(mem) {
            StepOutcome::Ran(event) => {
                self.started = true;
                if self.ops[self.current].is_done() {
                    self.current += 1;
                    self.started = false;
                }
                Ok(event)
            }
            StepOutcome::Blocked => Err(Error::Harness("step on blocked worker".into())),
        }
    }

    fn status(&self, seq: usize) -> OpStatus {
        if seq < self.current {
            match self.ops[seq].result() {
                Some(true) => OpStatus::Succeeded,
                Some(false) => OpStatus::Failed,
                None => OpStatus::Succeeded, // completed read
            }
        } else if seq == self.current && self.started {
            OpStatus::InFlight
        } else {
            OpStatus::NotStarted
        }
    }
}

/// The full virtualized execution state: simulated memory plus every
/// worker's resumable operation state.
#[derive(Debug, Clone)]
pub(crate) struct HarnessState {
    pub heap: SimHeap,
    workers: Vec<WorkerRuntime>,
}

impl HarnessState {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let layout = scenario.layout()?;
        let heap = scenario.build_heap()?;
        let workers: Result<Vec<_>> = (0..scenario.workers.len())
            .map(|slot| WorkerRuntime::build(scenario, &layout, slot))
            .collect();
        Ok(HarnessState {
            heap,
            workers: workers?,
        })
    }

    pub fn all_done(&self) -> bool {
        self.workers.iter().all(|w| w.done())
    }

    pub fn schedulable(&self, w: usize) -> bool {
        !self.workers[w].done() && !self.workers[w].blocked(&self.heap)
    }

    /// All workers still have work but none can move: a reservation-order
    /// deadlock.
    pub fn deadlocked(&self) -> bool {
        !self.all_done() && (0..self.workers.len()).all(|w| !self.schedulable(w))
    }

    pub fn step(&mut self, w: usize) -> Result<EventKind> {
        if w >= self.workers.len() {
            return Err(Error::Harness(format!("no worker {w}")));
        }
        if self.workers[w].blocked(&self.heap) {
            return Err(Error::Harness(format!("worker {w} is blocked")));
        }
        self.workers[w].step(&self.heap)
    }

    pub fn statuses(&self, scenario: &Scenario) -> Vec<OpStatus> {
        scenario
            .oracle_ops()
            .iter()
            .map(|op| self.workers[op.worker].status(op.seq))
            .collect()
    }

    pub fn read_values(&self) -> Vec<Option<TaggedWord>> {
        self.workers
            .iter()
            .flat_map(|w| w.ops.iter())
            .filter_map(|op| match op {
                ActiveOp::Read(r) => Some(r.value()),
                _ => None,
            })
            .collect()
    }

    /// Dedup key: full memory snapshot plus worker machine states.
    pub fn key(&self) -> (crate::pmem::SimSnapshot, Vec<WorkerRuntime>) {
        (self.heap.snapshot(), self.workers.clone())
    }

    /// The (cache, durable, per-slot state) triple of the observed word.
    pub fn observe_triple(&self, scenario: &Scenario) -> Option<(u64, u64, Vec<u64>)> {
        let addr = scenario.observe?;
        let layout = self.heap.layout();
        let cell = layout.word_cell(addr);
        let states = (0..layout.worker_slots)
            .map(|s| self.heap.cache_value(layout.desc_cell(s, 0)))
            .collect();
        Some((
            self.heap.cache_value(cell),
            self.heap.durable_value(cell),
            states,
        ))
    }
}

/// A replayable schedule: which worker takes each step, where the crash
/// happens (after `crash_step` steps; `None` means no crash), and which
/// dirty lines the crash evicts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrashSchedule {
    pub interleaving: Vec<usize>,
    pub crash_step: Option<usize>,
    pub eviction_lines: Vec<u64>,
}

/// Durable outcome of one operation after crash and recovery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpOutcome {
    AllOld,
    AllNew,
}

/// The result of replaying one schedule: per-op durable outcomes, the
/// oracle verdict, the recovery report, and (when requested) the state
/// trace of the observed word as (cache, durable, states) triples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub schedule: CrashSchedule,
    pub oracle_ok: bool,
    pub outcomes: Vec<OpOutcome>,
    pub statuses: Vec<OpStatus>,
    pub durable_payloads: Vec<u64>,
    /// Values observed by completed read ops, worker-major.
    pub read_values: Vec<Option<TaggedWord>>,
    pub recovery: RecoveryReport,
    pub trace: Vec<(u64, u64, Vec<u64>)>,
}

/// Durable payload values (post-recovery image), one per word.
fn durable_payloads(heap: &SimHeap) -> Vec<u64> {
    let layout = heap.layout();
    (0..layout.word_capacity)
        .map(|w| TaggedWord(heap.durable_value(layout.word_cell(WordAddress(w)))).payload())
        .collect()
}

/// Oracle masks from op statuses: succeeded ops must appear in the
/// sequential witness, in-flight ops may, failed and unstarted ops must
/// not.
pub(crate) fn masks(statuses: &[OpStatus]) -> (u64, u64) {
    let mut required = 0u64;
    let mut allowed = 0u64;
    for (i, s) in statuses.iter().enumerate() {
        match s {
            OpStatus::Succeeded => {
                required |= 1 << i;
                allowed |= 1 << i;
            }
            OpStatus::InFlight => allowed |= 1 << i,
            OpStatus::Failed | OpStatus::NotStarted => {}
        }
    }
    (required, allowed)
}

/// Replays a schedule up to its crash point and crashes, returning the
/// reopened (not yet recovered) heap. The schedule must crash.
pub fn crashed_heap(scenario: &Scenario, schedule: &CrashSchedule) -> Result<SimHeap> {
    let steps = schedule
        .crash_step
        .ok_or_else(|| Error::Harness("schedule does not crash".into()))?;
    if steps > schedule.interleaving.len() {
        return Err(Error::Harness("crash step beyond interleaving".into()));
    }
    let mut state = HarnessState::new(scenario)?;
    for &w in &schedule.interleaving[..steps] {
        state.step(w)?;
    }
    state.heap.crash(&schedule.eviction_lines)?;
    Ok(state.heap)
}

/// Replays a schedule deterministically and evaluates the durable
/// atomicity oracle after crash and recovery.
pub fn run_schedule(scenario: &Scenario, schedule: &CrashSchedule) -> Result<Verdict> {
    let mut state = HarnessState::new(scenario)?;
    let mut trace = Vec::new();
    if let Some(t) = state.observe_triple(scenario) {
        trace.push(t);
    }
    let steps = schedule.crash_step.unwrap_or(schedule.interleaving.len());
    if steps > schedule.interleaving.len() {
        return Err(Error::Harness(format!(
            "crash step {steps} beyond interleaving length {}",
            schedule.interleaving.len()
        )));
    }
    for &w in &schedule.interleaving[..steps] {
        state.step(w)?;
        if let Some(t) = state.observe_triple(scenario) {
            trace.push(t);
        }
    }
    let statuses = state.statuses(scenario);
    let read_values = state.read_values();
    let ops = scenario.oracle_ops();
    let (required, allowed) = masks(&statuses);

    let (recovery, durable) = if schedule.crash_step.is_some() {
        state.heap.crash(&schedule.eviction_lines)?;
        let report = recover(&state.heap)?;
        let durable = durable_payloads(&state.heap);
        (report, durable)
    } else {
        // no crash: judge the live outcome; succeeded ops must explain the
        // cache view exactly
        if !state.all_done() {
            return Err(Error::Harness(
                "schedule without crash must run every worker to completion".into(),
            ));
        }
        let layout = state.heap.layout().clone();
        let live: Vec<u64> = (0..layout.word_capacity)
            .map(|w| TaggedWord(state.heap.cache_value(layout.word_cell(WordAddress(w)))).payload())
            .collect();
        (RecoveryReport::default(), live)
    };

    let initial: Vec<u64> = (0..scenario.word_count)
        .map(|w| scenario.initial_payload(WordAddress(w)))
        .collect();
    let effective_allowed = if schedule.crash_step.is_some() {
        allowed
    } else {
        required
    };
    let witness = find_witness(&initial, &ops, required, effective_allowed, &durable)?;
    let oracle_ok = witness.is_some();
    let applied = witness.unwrap_or_default();
    let outcomes = (0..ops.len())
        .map(|i| {
            if applied.contains(&i) {
                OpOutcome::AllNew
            } else {
                OpOutcome::AllOld
            }
        })
        .collect();

    Ok(Verdict {
        schedule: schedule.clone(),
        oracle_ok,
        outcomes,
        statuses,
        durable_payloads: durable,
        read_values,
        recovery,
        trace,
    })
}
