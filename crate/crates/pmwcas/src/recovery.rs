//! Crash recovery.
//!
//! Replays descriptors as write-ahead logs over the durable image: targets
//! still holding a descriptor's word are rolled forward to the desired
//! value if that descriptor's state was durably Succeeded, and rolled back
//! to the expected value otherwise. Dirty-flag heaps then have stray dirty
//! flags cleared from all data words. Every modified word is persisted and
//! every descriptor is left Completed and persisted, so a recovered heap is
//! indistinguishable from one that shut down cleanly and a second recovery
//! pass changes nothing.
//!
//! Runs strictly single-threaded, before any workers start. After a crash
//! the cache view equals the durable view, so reading through the normal
//! load path never observes lost cache state.

use serde::{Deserialize, Serialize};

use crate::descriptor::{read_descriptor, DescriptorState};
use crate::error::{Error, Result};
use crate::layout::{Variant, WordAddress};
use crate::pmem::Memory;
use crate::tag::{TaggedWord, WordKind};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub descriptors_scanned: u64,
    pub rolled_forward: u64,
    pub rolled_back: u64,
    pub dirty_flags_cleared: u64,
    pub words_touched: Vec<WordAddress>,
}

impl RecoveryReport {
    pub fn touched_nothing(&self) -> bool {
        self.words_touched.is_empty()
            && self.rolled_forward == 0
            && self.rolled_back == 0
            && self.dirty_flags_cleared == 0
    }
}

/// Restores a consistent durable state. See the module docs; descriptor
/// slots are scanned in ascending order (single ownership makes the order
/// immaterial; a word referenced by two descriptors is reported as
/// corruption).
pub fn recover<M: Memory>(mem: &M) -> Result<RecoveryReport> {
    let layout = mem.layout().clone();
    let mut report = RecoveryReport::default();

    for slot in 0..layout.worker_slots {
        let stored = read_descriptor(mem, slot)?;
        report.descriptors_scanned += 1;
        let roll_forward = match stored.state {
            Some(DescriptorState::Succeeded) => true,
            Some(DescriptorState::Failed) => false,
            // Completed needs no replay; an invalid state means the
            // descriptor was never persisted, so nothing can reference it
            Some(DescriptorState::Completed) | None => continue,
        };
        let desc_word = TaggedWord::descriptor_for(slot);
        for t in &stored.targets {
            let cell = layout.word_cell(t.address);
            if TaggedWord(mem.load(cell)) == desc_word {
                let value = if roll_forward { t.desired } else { t.expected };
                mem.store(cell, value.raw());
                mem.persist(cell);
                if roll_forward {
                    report.rolled_forward += 1;
                } else {
                    report.rolled_back += 1;
                }
                report.words_touched.push(t.address);
            }
        }
    }

    // Sweep data words: clear dirty flags (dirty-flag heaps only) and fail
    // loudly on any leftover tagged word.
    for w in 0..layout.word_capacity {
        let addr = WordAddress(w);
        let cell = layout.word_cell(addr);
        let word = TaggedWord(mem.load(cell));
        match word.classify() {
            WordKind::Payload => {}
            WordKind::DirtyPayload => {
                if layout.variant == Variant::DirtyFlag {
                    mem.store(cell, word.clear_flags().raw());
                    mem.persist(cell);
                    report.dirty_flags_cleared += 1;
                    report.words_touched.push(addr);
                } else {
                    return Err(Error::Harness(format!(
                        "dirty word {addr:?} on a no-dirty-flag heap"
                    )));
                }
            }
            WordKind::Descriptor => {
                return Err(Error::Harness(format!(
                    "unclaimed descriptor reference {word:?} at {addr:?} after replay"
                )));
            }
        }
    }

    // Mark every descriptor Completed and persist, making recovery
    // idempotent regardless of the state it found.
    for slot in 0..layout.worker_slots {
        let state_cell = layout.desc_cell(slot, 0);
        let completed = DescriptorState::Completed.encode();
        if mem.load(state_cell) != completed {
            mem.store(state_cell, completed);
            mem.persist(state_cell);
        }
    }

    Ok(report)
}

/// Runs recovery a second time and reports whether it changed nothing.
pub fn recover_idempotence_check<M: Memory>(mem: &M) -> Result<bool> {
    let report = recover(mem)?;
    Ok(report.touched_nothing())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::Descriptor;
    use crate::descriptor::TargetEntry;
    use crate::layout::HeapLayout;
    use crate::pmem::{MemoryExt, SimHeap};

    fn heap(variant: Variant) -> SimHeap {
        SimHeap::new(HeapLayout::new(8, 64, 2, variant).unwrap())
    }

    fn entry(w: u64, exp: u64, des: u64) -> TargetEntry {
        TargetEntry::new(
            WordAddress(w),
            TaggedWord::from_payload(exp),
            TaggedWord::from_payload(des),
        )
        .unwrap()
    }

    /// Plants a durable descriptor + word state and crashes, simulating the
    /// given mid-operation image.
    fn plant(
        h: &SimHeap,
        slot: usize,
        state: DescriptorState,
        targets: Vec<TargetEntry>,
        word_values: &[(u64, TaggedWord)],
    ) {
        let d = Descriptor::new(h.layout(), slot, targets).unwrap();
        d.write_to(h, state);
        h.persist_descriptor(slot, d.count());
        for &(w, v) in word_values {
            h.store_word(WordAddress(w), v).unwrap();
            h.persist_word(WordAddress(w)).unwrap();
        }
        h.crash(&[]).unwrap();
    }

    #[test]
    fn failed_descriptor_rolls_back() {
        // durable word = desc, state Failed -> word restored to expected
        let h = heap(Variant::DirtyFlag);
        plant(
            &h,
            0,
            DescriptorState::Failed,
            vec![entry(2, 10, 11)],
            &[(2, TaggedWord::descriptor_for(0))],
        );
        let report = recover(&h).unwrap();
        assert_eq!(report.rolled_back, 1);
        assert_eq!(h.load_word(WordAddress(2)).unwrap().payload(), 10);
    }

    #[test]
    fn succeeded_descriptor_rolls_forward() {
        // durable word = desc, state Succeeded -> word set to desired
        let h = heap(Variant::NoDirtyFlag);
        plant(
            &h,
            1,
            DescriptorState::Succeeded,
            vec![entry(3, 10, 11)],
            &[(3, TaggedWord::descriptor_for(1))],
        );
        let report = recover(&h).unwrap();
        assert_eq!(report.rolled_forward, 1);
        assert_eq!(h.load_word(WordAddress(3)).unwrap().payload(), 11);
    }

    #[test]
    fn dirty_flag_cleared_in_df_mode() {
        // durable word = dirty v_new, state Succeeded -> flag cleared
        let h = heap(Variant::DirtyFlag);
        plant(
            &h,
            0,
            DescriptorState::Succeeded,
            vec![entry(2, 10, 11)],
            &[(2, TaggedWord::from_payload(11).set_dirty().unwrap())],
        );
        let report = recover(&h).unwrap();
        assert_eq!(report.dirty_flags_cleared, 1);
        assert_eq!(
            h.load_word(WordAddress(2)).unwrap(),
            TaggedWord::from_payload(11)
        );
    }

    #[test]
    fn dirty_word_on_nodf_heap_is_corruption() {
        let h = heap(Variant::NoDirtyFlag);
        h.store_word(WordAddress(0), TaggedWord::from_payload(1).set_dirty().unwrap())
            .unwrap();
        h.persist_word(WordAddress(0)).unwrap();
        h.crash(&[]).unwrap();
        assert!(recover(&h).is_err());
    }

    #[test]
    fn malformed_count_is_reported_with_slot() {
        let h = heap(Variant::NoDirtyFlag);
        let l = h.layout().clone();
        h.store(l.desc_cell(1, 0), DescriptorState::Failed.encode());
        h.store(l.desc_cell(1, 1), 99); // bad count
        h.persist_descriptor(1, 1);
        h.crash(&[]).unwrap();
        match recover(&h) {
            Err(Error::MalformedDescriptor { slot, .. }) => assert_eq!(slot, 1),
            other => panic!("expected malformed descriptor, got {other:?}"),
        }
    }

    #[test]
    fn clean_heap_recovery_touches_nothing() {
        let h = heap(Variant::DirtyFlag);
        let report = recover(&h).unwrap();
        assert!(report.touched_nothing());
        // second pass is a no-op too and the durable image is unchanged
        let image = h.durable_image();
        assert!(recover_idempotence_check(&h).unwrap());
        assert_eq!(h.durable_image(), image);
    }

    #[test]
    fn recovery_is_idempotent_after_rollback() {
        let h = heap(Variant::DirtyFlag);
        plant(
            &h,
            0,
            DescriptorState::Failed,
            vec![entry(2, 10, 11), entry(4, 5, 6)],
            &[
                (2, TaggedWord::descriptor_for(0)),
                (4, TaggedWord::from_payload(5).set_dirty().unwrap()),
            ],
        );
        recover(&h).unwrap();
        let image = h.durable_image();
        assert!(recover_idempotence_check(&h).unwrap());
        assert_eq!(h.durable_image(), image);
        // tag purity
        for w in 0..8 {
            assert!(h.load_word(WordAddress(w)).unwrap().is_payload());
        }
    }
}
