//! The PMwCAS step machines.
//!
//! Each operation is expressed as a resumable sequence of shared-memory
//! events: one `step` call performs exactly one load+CAS, store, or persist
//! on shared state. The benchmark drives steps in a loop on real atomics;
//! the crash harness replays them one at a time on the simulated backend.
//!
//! An operation has a reservation phase (embed the descriptor word into
//! every target in array order, waiting while another operation is in
//! progress there) and a finalization phase (replace embedded words with
//! desired values on success or expected values on abort). The dirty-flag
//! variant stores each final word twice, dirty then clean, with a flush in
//! between; the no-dirty-flag variant stores the clean word directly and
//! relies on the durable descriptor as a write-ahead log.

use serde::{Deserialize, Serialize};

use crate::backoff::Backoff;
use crate::descriptor::{Descriptor, DescriptorState};
use crate::error::{Error, Result};
use crate::layout::{Variant, WordAddress};
use crate::pmem::Memory;
use crate::tag::TaggedWord;

/// Event counters attributable to one operation. Finalization stores are
/// plain stores on owner-reserved words but count toward `cas_count` so
/// that a conflict-free k-target operation accounts for exactly 2k CAS
/// instructions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpStats {
    /// CAS instructions (embeds, finalize stores, PCAS attempts).
    pub cas_count: u64,
    /// Persist calls issued.
    pub persist_calls: u64,
    /// Cache lines flushed (a descriptor persist may span several).
    pub flush_count: u64,
    /// Lines flushed on target words specifically.
    pub target_flush_count: u64,
    /// Dirty-flagged stores (dirty-flag variant and PCAS only).
    pub dirty_store_count: u64,
    /// CAS attempts that had to be retried or abandoned to a wait.
    pub retry_count: u64,
}

impl OpStats {
    pub fn merge(&mut self, other: &OpStats) {
        self.cas_count += other.cas_count;
        self.persist_calls += other.persist_calls;
        self.flush_count += other.flush_count;
        self.target_flush_count += other.target_flush_count;
        self.dirty_store_count += other.dirty_store_count;
        self.retry_count += other.retry_count;
    }
}

/// What kind of shared-memory event a step performed; the harness records
/// these to validate traces against the algorithm listing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// Descriptor fields written with state Failed, then persisted.
    DescPrepare,
    /// TTAS embed CAS on target `i` (may be a retried attempt).
    EmbedCas(usize),
    /// Persist of the embedded descriptor word in target `i`.
    PersistEmbed(usize),
    /// State set to Succeeded and descriptor persisted (the linearization
    /// point).
    Commit,
    StoreDirty(usize),
    PersistDirty(usize),
    StoreClean(usize),
    PersistClean(usize),
    /// State set to Completed; not persisted.
    Complete,
    PcasCas,
    PcasPersistDirty,
    PcasStoreClean,
    ReadLoad,
}

/// Result of driving one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// One shared-memory event was performed.
    Ran(EventKind),
    /// The operation would have to wait (target word is a descriptor or
    /// dirty); no event was performed.
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum FinStage {
    StoreDirty,
    PersistDirty,
    StoreClean,
    PersistClean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Pc {
    Prepare,
    Embed(usize),
    PersistEmbed(usize),
    Commit,
    Finalize(usize, FinStage),
    Complete,
    Done,
}

/// A multi-word PMwCAS operation in progress.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PmwcasOp {
    desc: Descriptor,
    variant: Variant,
    pc: Pc,
    success: bool,
    reserved: usize,
    pub stats: OpStats,
}

impl PmwcasOp {
    pub fn new(desc: Descriptor, variant: Variant) -> Self {
        PmwcasOp {
            desc,
            variant,
            pc: Pc::Prepare,
            success: true,
            reserved: 0,
            stats: OpStats::default(),
        }
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.desc
    }

    pub fn is_done(&self) -> bool {
        self.pc == Pc::Done
    }

    /// `Some(success)` once the operation has completed.
    pub fn result(&self) -> Option<bool> {
        if self.is_done() {
            Some(self.success)
        } else {
            None
        }
    }

    /// True if the next step would have to wait on another operation.
    pub fn blocked<M: Memory>(&self, mem: &M) -> bool {
        match self.pc {
            Pc::Embed(i) => {
                let cell = mem.layout().word_cell(self.desc.targets[i].address);
                TaggedWord(mem.load(cell)).is_in_progress()
            }
            _ => false,
        }
    }

    fn first_fin_stage(&self) -> FinStage {
        match self.variant {
            Variant::DirtyFlag => FinStage::StoreDirty,
            Variant::NoDirtyFlag => FinStage::StoreClean,
        }
    }

    /// Number of targets the finalize loop walks: all of them on success,
    /// the reserved prefix on abort (embedding is in array order, so the
    /// first unreserved target stops the loop).
    fn finalize_limit(&self) -> usize {
        if self.success {
            self.desc.count()
        } else {
            self.reserved
        }
    }

    fn enter_finalize(&mut self) {
        self.pc = if self.finalize_limit() == 0 {
            Pc::Complete
        } else {
            Pc::Finalize(0, self.first_fin_stage())
        };
    }

    fn flush_desc(&mut self, mem: &impl Memory) {
        let lines = mem.layout().desc_lines(self.desc.slot, self.desc.count()).len() as u64;
        mem.persist_descriptor(self.desc.slot, self.desc.count());
        self.stats.persist_calls += 1;
        self.stats.flush_count += lines;
    }

    fn flush_target(&mut self, mem: &impl Memory, addr: WordAddress) {
        mem.persist(mem.layout().word_cell(addr));
        self.stats.persist_calls += 1;
        self.stats.flush_count += 1;
        self.stats.target_flush_count += 1;
    }

    /// Performs the next shared-memory event.
    pub fn step<M: Memory>(&mut self, mem: &M) -> StepOutcome {
        match self.pc {
            Pc::Prepare => {
                self.desc.write_to(mem, DescriptorState::Failed);
                self.flush_desc(mem);
                self.pc = Pc::Embed(0);
                StepOutcome::Ran(EventKind::DescPrepare)
            }
            Pc::Embed(i) => {
                let t = self.desc.targets[i];
                let cell = mem.layout().word_cell(t.address);
                // TTAS: inspect before attempting the CAS
                let current = TaggedWord(mem.load(cell));
                if current.is_in_progress() {
                    return StepOutcome::Blocked;
                }
                self.stats.cas_count += 1;
                let prev = TaggedWord(mem.cas(cell, t.expected.raw(), self.desc.word().raw()));
                if prev == t.expected {
                    self.reserved = i + 1;
                    self.pc = if i + 1 < self.desc.count() {
                        Pc::Embed(i + 1)
                    } else {
                        Pc::PersistEmbed(0)
                    };
                } else if prev.is_in_progress() {
                    // lost the race between load and CAS; wait and retry
                    self.stats.retry_count += 1;
                } else {
                    self.success = false;
                    self.enter_finalize();
                }
                StepOutcome::Ran(EventKind::EmbedCas(i))
            }
            Pc::PersistEmbed(i) => {
                self.flush_target(mem, self.desc.targets[i].address);
                self.pc = if i + 1 < self.desc.count() {
                    Pc::PersistEmbed(i + 1)
                } else {
                    Pc::Commit
                };
                StepOutcome::Ran(EventKind::PersistEmbed(i))
            }
            Pc::Commit => {
                let l = mem.layout();
                mem.store(
                    l.desc_cell(self.desc.slot, 0),
                    DescriptorState::Succeeded.encode(),
                );
                self.flush_desc(mem);
                self.enter_finalize();
                StepOutcome::Ran(EventKind::Commit)
            }
            Pc::Finalize(i, stage) => {
                let t = self.desc.targets[i];
                let cell = mem.layout().word_cell(t.address);
                let word = if self.success { t.desired } else { t.expected };
                let (event, next_stage) = match stage {
                    FinStage::StoreDirty => {
                        mem.store(cell, word.set_dirty().expect("payload word").raw());
                        self.stats.dirty_store_count += 1;
                        (EventKind::StoreDirty(i), Some(FinStage::PersistDirty))
                    }
                    FinStage::PersistDirty => {
                        self.flush_target(mem, t.address);
                        (EventKind::PersistDirty(i), Some(FinStage::StoreClean))
                    }
                    FinStage::StoreClean => {
                        mem.store(cell, word.raw());
                        // owner-reserved word: a plain store, counted as a
                        // CAS to match the 2k accounting
                        self.stats.cas_count += 1;
                        (EventKind::StoreClean(i), Some(FinStage::PersistClean))
                    }
                    FinStage::PersistClean => {
                        self.flush_target(mem, t.address);
                        (EventKind::PersistClean(i), None)
                    }
                };
                self.pc = match next_stage {
                    Some(s) => Pc::Finalize(i, s),
                    None => {
                        if i + 1 < self.finalize_limit() {
                            Pc::Finalize(i + 1, self.first_fin_stage())
                        } else {
                            Pc::Complete
                        }
                    }
                };
                StepOutcome::Ran(event)
            }
            Pc::Complete => {
                let l = mem.layout();
                mem.store(
                    l.desc_cell(self.desc.slot, 0),
                    DescriptorState::Completed.encode(),
                );
                self.pc = Pc::Done;
                StepOutcome::Ran(EventKind::Complete)
            }
            Pc::Done => panic!("step after completion"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum PcasPc {
    Attempt,
    PersistDirty,
    StoreClean,
    Done,
}

/// A single-word persistent CAS using a dirty flag: CAS to the dirty
/// desired value, flush once, then store the clean word (which stays
/// unflushed; recovery clears stray dirty flags).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PcasOp {
    addr: WordAddress,
    expected: TaggedWord,
    desired: TaggedWord,
    pc: PcasPc,
    success: bool,
    pub stats: OpStats,
}

impl PcasOp {
    pub fn new(addr: WordAddress, expected: TaggedWord, desired: TaggedWord) -> Result<Self> {
        if !expected.is_payload() || !desired.is_payload() {
            return Err(Error::Contract(
                "pcas expected/desired must be clean payloads".into(),
            ));
        }
        Ok(PcasOp {
            addr,
            expected,
            desired,
            pc: PcasPc::Attempt,
            success: false,
            stats: OpStats::default(),
        })
    }

    pub fn is_done(&self) -> bool {
        self.pc == PcasPc::Done
    }

    pub fn result(&self) -> Option<bool> {
        if self.is_done() {
            Some(self.success)
        } else {
            None
        }
    }

    pub fn blocked<M: Memory>(&self, mem: &M) -> bool {
        match self.pc {
            PcasPc::Attempt => {
                let cell = mem.layout().word_cell(self.addr);
                TaggedWord(mem.load(cell)).is_in_progress()
            }
            _ => false,
        }
    }

    pub fn step<M: Memory>(&mut self, mem: &M) -> StepOutcome {
        let cell = mem.layout().word_cell(self.addr);
        match self.pc {
            PcasPc::Attempt => {
                let current = TaggedWord(mem.load(cell));
                if current.is_in_progress() {
                    return StepOutcome::Blocked;
                }
                self.stats.cas_count += 1;
                let dirty = self.desired.set_dirty().expect("payload word");
                let prev = TaggedWord(mem.cas(cell, self.expected.raw(), dirty.raw()));
                if prev == self.expected {
                    self.success = true;
                    self.pc = PcasPc::PersistDirty;
                } else if prev.is_in_progress() {
                    self.stats.retry_count += 1;
                } else {
                    self.pc = PcasPc::Done;
                }
                StepOutcome::Ran(EventKind::PcasCas)
            }
            PcasPc::PersistDirty => {
                mem.persist(cell);
                self.stats.persist_calls += 1;
                self.stats.flush_count += 1;
                self.stats.target_flush_count += 1;
                self.pc = PcasPc::StoreClean;
                StepOutcome::Ran(EventKind::PcasPersistDirty)
            }
            PcasPc::StoreClean => {
                mem.store(cell, self.desired.raw());
                self.stats.cas_count += 1;
                self.pc = PcasPc::Done;
                StepOutcome::Ran(EventKind::PcasStoreClean)
            }
            PcasPc::Done => panic!("step after completion"),
        }
    }
}

/// A read of a PMwCAS-managed word, waiting out any in-progress operation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReadOp {
    addr: WordAddress,
    value: Option<TaggedWord>,
}

impl ReadOp {
    pub fn new(addr: WordAddress) -> Self {
        ReadOp { addr, value: None }
    }

    pub fn is_done(&self) -> bool {
        self.value.is_some()
    }

    pub fn value(&self) -> Option<TaggedWord> {
        self.value
    }

    pub fn blocked<M: Memory>(&self, mem: &M) -> bool {
        let cell = mem.layout().word_cell(self.addr);
        TaggedWord(mem.load(cell)).is_in_progress()
    }

    pub fn step<M: Memory>(&mut self, mem: &M) -> StepOutcome {
        let cell = mem.layout().word_cell(self.addr);
        let current = TaggedWord(mem.load(cell));
        if current.is_in_progress() {
            return StepOutcome::Blocked;
        }
        self.value = Some(current);
        StepOutcome::Ran(EventKind::ReadLoad)
    }
}

/// Runs a PMwCAS to completion, backing off while blocked. Returns the
/// success flag and the operation's event counts.
pub fn pmwcas<M: Memory>(mem: &M, desc: Descriptor, variant: Variant) -> (bool, OpStats) {
    let mut op = PmwcasOp::new(desc, variant);
    let mut backoff = Backoff::new();
    while !op.is_done() {
        match op.step(mem) {
            StepOutcome::Ran(_) => {}
            StepOutcome::Blocked => backoff.wait(),
        }
    }
    (op.result().unwrap(), op.stats)
}

/// Runs a PCAS to completion, backing off while blocked.
pub fn pcas<M: Memory>(
    mem: &M,
    addr: WordAddress,
    expected: TaggedWord,
    desired: TaggedWord,
) -> Result<(bool, OpStats)> {
    mem.layout().check_word(addr)?;
    let mut op = PcasOp::new(addr, expected, desired)?;
    let mut backoff = Backoff::new();
    while !op.is_done() {
        match op.step(mem) {
            StepOutcome::Ran(_) => {}
            StepOutcome::Blocked => backoff.wait(),
        }
    }
    Ok((op.result().unwrap(), op.stats))
}

/// Reads a target word, waiting (with back-off) while any PMwCAS is in
/// progress there. Never returns a tagged word. `max_waits` bounds the
/// number of waits; `None` waits indefinitely.
pub fn read_word<M: Memory>(
    mem: &M,
    addr: WordAddress,
    max_waits: Option<u64>,
) -> Result<TaggedWord> {
    mem.layout().check_word(addr)?;
    let cell = mem.layout().word_cell(addr);
    let mut backoff = Backoff::new();
    let mut waits = 0u64;
    loop {
        let word = TaggedWord(mem.load(cell));
        if !word.is_in_progress() {
            return Ok(word);
        }
        if let Some(max) = max_waits {
            waits += 1;
            if waits > max {
                return Err(Error::ReadTimeout(addr));
            }
        }
        backoff.wait();
    }
}
