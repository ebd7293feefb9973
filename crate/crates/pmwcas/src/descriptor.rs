//! PMwCAS descriptors.
//!
//! A descriptor records the state of one operation (Failed, Succeeded, or
//! Completed), the target count, and per-target (address, expected,
//! desired) triples. It lives in the heap's descriptor area so that it is
//! durably addressable and doubles as a write-ahead log for recovery.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{HeapLayout, WordAddress, DESC_HEADER_WORDS, MAX_TARGETS, WORDS_PER_TARGET};
use crate::pmem::Memory;
use crate::tag::TaggedWord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DescriptorState {
    Failed,
    Succeeded,
    Completed,
}

impl DescriptorState {
    pub fn encode(self) -> u64 {
        match self {
            DescriptorState::Failed => 1,
            DescriptorState::Succeeded => 2,
            DescriptorState::Completed => 3,
        }
    }

    /// `None` for anything that is not a valid state value; recovery treats
    /// such slots as never having embedded anything.
    pub fn decode(raw: u64) -> Option<DescriptorState> {
        match raw {
            1 => Some(DescriptorState::Failed),
            2 => Some(DescriptorState::Succeeded),
            3 => Some(DescriptorState::Completed),
            _ => None,
        }
    }
}

/// One CAS target: a destination address plus expected/desired payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetEntry {
    pub address: WordAddress,
    pub expected: TaggedWord,
    pub desired: TaggedWord,
}

impl TargetEntry {
    pub fn new(address: WordAddress, expected: TaggedWord, desired: TaggedWord) -> Result<Self> {
        if !expected.is_payload() || !desired.is_payload() {
            return Err(Error::Contract(
                "target expected/desired must be clean payload words".into(),
            ));
        }
        Ok(TargetEntry {
            address,
            expected,
            desired,
        })
    }
}

/// A validated descriptor bound to a worker slot. The slot must be owned
/// exclusively by the calling worker for the duration of the operation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Descriptor {
    pub slot: usize,
    pub targets: Vec<TargetEntry>,
}

impl Descriptor {
    pub fn new(layout: &HeapLayout, slot: usize, targets: Vec<TargetEntry>) -> Result<Self> {
        layout.check_slot(slot)?;
        if targets.is_empty() || targets.len() > MAX_TARGETS {
            return Err(Error::Contract(format!(
                "target count must be 1..={MAX_TARGETS}, got {}",
                targets.len()
            )));
        }
        for (i, t) in targets.iter().enumerate() {
            layout.check_word(t.address)?;
            if targets[..i].iter().any(|p| p.address == t.address) {
                return Err(Error::Contract(format!(
                    "duplicate target address {:?}",
                    t.address
                )));
            }
        }
        Ok(Descriptor { slot, targets })
    }

    pub fn count(&self) -> usize {
        self.targets.len()
    }

    /// The descriptor-tagged word embedded into targets while this
    /// operation holds them.
    pub fn word(&self) -> TaggedWord {
        TaggedWord::descriptor_for(self.slot)
    }

    /// Writes state, count, and all target entries into the descriptor
    /// slot's cells (cache view only; callers persist).
    pub fn write_to<M: Memory>(&self, mem: &M, state: DescriptorState) {
        let l = mem.layout();
        mem.store(l.desc_cell(self.slot, 0), state.encode());
        mem.store(l.desc_cell(self.slot, 1), self.count() as u64);
        for (i, t) in self.targets.iter().enumerate() {
            let base = DESC_HEADER_WORDS + i * WORDS_PER_TARGET;
            mem.store(l.desc_cell(self.slot, base), t.address.0);
            mem.store(l.desc_cell(self.slot, base + 1), t.expected.raw());
            mem.store(l.desc_cell(self.slot, base + 2), t.desired.raw());
        }
    }
}

/// A descriptor as read back from memory during recovery, before
/// validation.
#[derive(Debug, Clone)]
pub struct StoredDescriptor {
    pub slot: usize,
    pub state: Option<DescriptorState>,
    pub count: u64,
    pub targets: Vec<TargetEntry>,
}

/// Reads the descriptor in `slot` from the (post-crash) memory view.
/// Returns an error only for descriptors that claim a valid state but have
/// malformed contents.
pub fn read_descriptor<M: Memory>(mem: &M, slot: usize) -> Result<StoredDescriptor> {
    let l = mem.layout();
    l.check_slot(slot)?;
    let state = DescriptorState::decode(mem.load(l.desc_cell(slot, 0)));
    let count = mem.load(l.desc_cell(slot, 1));
    let mut targets = Vec::new();
    if matches!(
        state,
        Some(DescriptorState::Failed) | Some(DescriptorState::Succeeded)
    ) {
        if count == 0 || count > MAX_TARGETS as u64 {
            return Err(Error::MalformedDescriptor {
                slot,
                reason: format!("bad target count {count}"),
            });
        }
        for i in 0..count as usize {
            let base = DESC_HEADER_WORDS + i * WORDS_PER_TARGET;
            let address = WordAddress(mem.load(l.desc_cell(slot, base)));
            l.check_word(address).map_err(|_| Error::MalformedDescriptor {
                slot,
                reason: format!("target {i} address {address:?} out of range"),
            })?;
            if targets.iter().any(|t: &TargetEntry| t.address == address) {
                return Err(Error::MalformedDescriptor {
                    slot,
                    reason: format!("duplicate target address {address:?}"),
                });
            }
            targets.push(TargetEntry {
                address,
                expected: TaggedWord(mem.load(l.desc_cell(slot, base + 1))),
                desired: TaggedWord(mem.load(l.desc_cell(slot, base + 2))),
            });
        }
    }
    Ok(StoredDescriptor {
        slot,
        state,
        count,
        targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::Variant;
    use crate::pmem::SimHeap;

    fn layout() -> HeapLayout {
        HeapLayout::new(8, 64, 2, Variant::NoDirtyFlag).unwrap()
    }

    fn entry(w: u64, exp: u64, des: u64) -> TargetEntry {
        TargetEntry::new(
            WordAddress(w),
            TaggedWord::from_payload(exp),
            TaggedWord::from_payload(des),
        )
        .unwrap()
    }

    #[test]
    fn rejects_duplicate_addresses() {
        let l = layout();
        assert!(Descriptor::new(&l, 0, vec![entry(1, 0, 1), entry(1, 0, 2)]).is_err());
    }

    #[test]
    fn rejects_tagged_expected() {
        let dirty = TaggedWord::from_payload(1).set_dirty().unwrap();
        assert!(TargetEntry::new(WordAddress(0), dirty, TaggedWord(0)).is_err());
    }

    #[test]
    fn write_read_roundtrip() {
        let l = layout();
        let heap = SimHeap::new(l.clone());
        let desc = Descriptor::new(&l, 1, vec![entry(2, 10, 11), entry(5, 0, 1)]).unwrap();
        desc.write_to(&heap, DescriptorState::Failed);
        let stored = read_descriptor(&heap, 1).unwrap();
        assert_eq!(stored.state, Some(DescriptorState::Failed));
        assert_eq!(stored.count, 2);
        assert_eq!(stored.targets, desc.targets);
    }

    #[test]
    fn uninitialized_slot_reads_as_invalid_state() {
        let heap = SimHeap::new(layout());
        let stored = read_descriptor(&heap, 0).unwrap();
        assert_eq!(stored.state, None);
        assert!(stored.targets.is_empty());
    }
}
