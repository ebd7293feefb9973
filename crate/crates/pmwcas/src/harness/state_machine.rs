//! Per-word state-machine conformance.
//!
//! For a designated word, every observation is a triple (cache view,
//! durable view, per-slot descriptor states) classified into one of a
//! small set of rows; the harness then checks that every executed event
//! and every crash-time eviction moves the word along an allowed edge.
//! Rows are expressed through per-operation symbols: each worker's
//! operation on the word contributes an expected value, a desired value,
//! and its descriptor word.
//!
//! Dirty-flag machine rows (cache, durable):
//!  0 (v, v)            clean and persisted
//!  1 (desc, v_old)     descriptor embedded, not yet persisted
//!  2 (desc, desc)      descriptor persisted, operation undecided
//!  3 (v_old', v_old)   aborting: dirty revert over an unpersisted embed
//!  4 (v_old', desc)    aborting: dirty revert, embedded word durable
//!  5 (v_old', v_old')  dirty revert persisted
//!  6 (v_old, v_old')   clean revert stored, dirty revert still durable
//!  7 (desc, desc)      committed (state Succeeded)
//!  8 (v_new', desc)    dirty final value over the durable descriptor
//!  9 (v_new', v_new')  dirty final value persisted
//! 10 (v_new, v_new')   clean final value stored, dirty word durable
//! 11 (desc2, v')       next descriptor embedded while a dirty word is
//!                      still durable
//! (primes mark dirty-flagged values)
//!
//! No-dirty-flag machine rows:
//!  0 (v, v)         1 (desc, v_old)   2 (desc, desc)
//!  3 (v_old, desc)  4 (desc, desc) committed   5 (v_new, desc)
//!  6 (desc2, desc)  next descriptor embedded over a durable predecessor
//!
//! Single-word persistent CAS rows:
//!  0 (v, v)   1 (v_new', v_old)   2 (v_new', v_new')
//!  3 (v_new, v_new')   4 (w_new', v_new')  next CAS over a durable dirty
//!  word

use crate::descriptor::DescriptorState;
use crate::tag::TaggedWord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Machine {
    DirtyFlag,
    NoDirtyFlag,
    Pcas,
}

pub type RowId = u8;

/// Per-slot symbols for the observed word: `(expected_raw, desired_raw)`
/// of the operation worker `slot` runs against it, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSymbols {
    pub per_slot: Vec<Option<(u64, u64)>>,
}

fn state_of(states: &[u64], slot: usize) -> Option<DescriptorState> {
    DescriptorState::decode(*states.get(slot)?)
}

fn is_failed(states: &[u64], slot: usize) -> bool {
    state_of(states, slot) == Some(DescriptorState::Failed)
}

fn is_succeeded(states: &[u64], slot: usize) -> bool {
    state_of(states, slot) == Some(DescriptorState::Succeeded)
}

// Tag-safe kind checks: tag 11 (never legal) matches none of these, so a
// corrupted word classifies into no row instead of panicking.
fn is_desc(w: TaggedWord) -> bool {
    w.is_descriptor() && !w.is_dirty()
}

fn is_dirty_payload(w: TaggedWord) -> bool {
    w.is_dirty() && !w.is_descriptor()
}

/// All rows consistent with the observation. Usually a singleton; symbol
/// collisions (one op's expected equal to another's desired) can make it
/// larger. Empty means the observation fits no row: a conformance
/// violation.
pub fn classify_row(
    machine: Machine,
    cache_raw: u64,
    durable_raw: u64,
    states: &[u64],
    syms: &WordSymbols,
) -> Vec<RowId> {
    let cache = TaggedWord(cache_raw);
    let durable = TaggedWord(durable_raw);
    let mut rows = Vec::new();
    let push = |r: RowId, rows: &mut Vec<RowId>| {
        if !rows.contains(&r) {
            rows.push(r);
        }
    };

    if machine == Machine::Pcas {
        if cache == durable && cache.is_payload() {
            push(0, &mut rows);
        }
        if cache == durable && is_dirty_payload(cache) {
            push(2, &mut rows);
        }
        for op in syms.per_slot.iter().flatten() {
            let (exp, des) = *op;
            if is_dirty_payload(cache) && cache.clear_flags().raw() == des && durable.raw() == exp {
                push(1, &mut rows);
            }
            if cache.is_payload()
                && cache.raw() == des
                && is_dirty_payload(durable)
                && durable.clear_flags() == cache
            {
                push(3, &mut rows);
            }
            if is_dirty_payload(cache)
                && cache.clear_flags().raw() == des
                && is_dirty_payload(durable)
                && durable != cache
            {
                push(4, &mut rows);
            }
        }
        return rows;
    }

    // descriptor-based machines
    if cache == durable && cache.is_payload() {
        push(0, &mut rows);
    }

    if is_desc(cache) {
        if let Some(slot) = cache.descriptor_slot() {
            if let Some(Some((exp, _))) = syms.per_slot.get(slot) {
                if durable.raw() == *exp && is_failed(states, slot) {
                    push(1, &mut rows);
                }
                if durable == cache {
                    if is_failed(states, slot) {
                        push(2, &mut rows);
                    }
                    if is_succeeded(states, slot) {
                        push(if machine == Machine::DirtyFlag { 7 } else { 4 }, &mut rows);
                    }
                }
                match machine {
                    Machine::DirtyFlag => {
                        if is_dirty_payload(durable) {
                            push(11, &mut rows);
                        }
                    }
                    Machine::NoDirtyFlag => {
                        if is_desc(durable) && durable != cache {
                            push(6, &mut rows);
                        }
                    }
                    Machine::Pcas => unreachable!(),
                }
            }
        }
    }

    match machine {
        Machine::DirtyFlag => {
            if is_dirty_payload(cache) {
                let v = cache.clear_flags().raw();
                for (slot, op) in syms.per_slot.iter().enumerate() {
                    let Some((exp, des)) = op else { continue };
                    let failed = is_failed(states, slot);
                    let succeeded = is_succeeded(states, slot);
                    if durable.raw() == *exp && v == *exp && failed {
                        push(3, &mut rows);
                    }
                    if durable == cache && v == *exp && failed {
                        push(5, &mut rows);
                    }
                    if durable == cache && v == *des && succeeded {
                        push(9, &mut rows);
                    }
                    if durable == TaggedWord::descriptor_for(slot) {
                        if v == *exp && failed {
                            push(4, &mut rows);
                        }
                        if v == *des && succeeded {
                            push(8, &mut rows);
                        }
                    }
                }
            }
            if cache.is_payload() && is_dirty_payload(durable) && durable.clear_flags() == cache {
                for (slot, op) in syms.per_slot.iter().enumerate() {
                    let Some((exp, des)) = op else { continue };
                    if cache.raw() == *exp && is_failed(states, slot) {
                        push(6, &mut rows);
                    }
                    if cache.raw() == *des && is_succeeded(states, slot) {
                        push(10, &mut rows);
                    }
                }
            }
        }
        Machine::NoDirtyFlag => {
            if cache.is_payload() && is_desc(durable) {
                if let Some(slot) = durable.descriptor_slot() {
                    if let Some(Some((exp, des))) = syms.per_slot.get(slot) {
                        if cache.raw() == *exp && is_failed(states, slot) {
                            push(3, &mut rows);
                        }
                        if cache.raw() == *des && is_succeeded(states, slot) {
                            push(5, &mut rows);
                        }
                    }
                }
            }
        }
        Machine::Pcas => unreachable!(),
    }

    rows
}

const DF_EDGES: &[(RowId, RowId)] = &[
    (0, 1),
    (1, 2),
    (1, 3),
    (2, 4),
    (2, 7),
    (3, 5),
    (4, 5),
    (5, 6),
    (6, 0),
    (7, 8),
    (8, 9),
    (9, 10),
    (10, 0),
    (6, 11),
    (10, 11),
    (11, 2),
    (11, 5),
];

const NODF_EDGES: &[(RowId, RowId)] = &[
    (0, 1),
    (1, 0),
    (1, 2),
    (2, 3),
    (3, 0),
    (2, 4),
    (4, 5),
    (5, 0),
    (3, 6),
    (5, 6),
    (6, 2),
    (6, 3),
    (6, 5),
];

const PCAS_EDGES: &[(RowId, RowId)] = &[(0, 1), (1, 2), (2, 3), (3, 0), (3, 4), (4, 2)];

/// True if `from -> to` is an allowed transition (self-loops always are).
pub fn edge_allowed(machine: Machine, from: RowId, to: RowId) -> bool {
    if from == to {
        return true;
    }
    let edges = match machine {
        Machine::DirtyFlag => DF_EDGES,
        Machine::NoDirtyFlag => NODF_EDGES,
        Machine::Pcas => PCAS_EDGES,
    };
    edges.contains(&(from, to))
}

/// True if any row pair across the two candidate sets forms an allowed
/// transition.
pub fn transition_allowed(machine: Machine, from: &[RowId], to: &[RowId]) -> bool {
    from.iter()
        .any(|&f| to.iter().any(|&t| edge_allowed(machine, f, t)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn syms(ops: &[Option<(u64, u64)>]) -> WordSymbols {
        WordSymbols {
            per_slot: ops.to_vec(),
        }
    }

    fn payload(v: u64) -> u64 {
        TaggedWord::from_payload(v).raw()
    }

    fn dirty(v: u64) -> u64 {
        TaggedWord::from_payload(v).set_dirty().unwrap().raw()
    }

    fn desc(slot: usize) -> u64 {
        TaggedWord::descriptor_for(slot).raw()
    }

    #[test]
    fn clean_persisted_word_is_row_zero() {
        let s = syms(&[Some((payload(10), payload(11)))]);
        for m in [Machine::DirtyFlag, Machine::NoDirtyFlag, Machine::Pcas] {
            assert_eq!(classify_row(m, payload(10), payload(10), &[1], &s), vec![0]);
        }
    }

    #[test]
    fn nodf_success_path_rows() {
        let s = syms(&[Some((payload(10), payload(11)))]);
        let m = Machine::NoDirtyFlag;
        // embed, unpersisted
        assert_eq!(classify_row(m, desc(0), payload(10), &[1], &s), vec![1]);
        // embed persisted, undecided
        assert_eq!(classify_row(m, desc(0), desc(0), &[1], &s), vec![2]);
        // committed
        assert_eq!(classify_row(m, desc(0), desc(0), &[2], &s), vec![4]);
        // clean final stored, descriptor durable
        assert_eq!(classify_row(m, payload(11), desc(0), &[2], &s), vec![5]);
    }

    #[test]
    fn df_abort_and_success_rows() {
        let s = syms(&[Some((payload(10), payload(11)))]);
        let m = Machine::DirtyFlag;
        assert_eq!(classify_row(m, dirty(10), payload(10), &[1], &s), vec![3]);
        assert_eq!(classify_row(m, dirty(10), desc(0), &[1], &s), vec![4]);
        assert_eq!(classify_row(m, dirty(10), dirty(10), &[1], &s), vec![5]);
        assert_eq!(classify_row(m, payload(10), dirty(10), &[1], &s), vec![6]);
        assert_eq!(classify_row(m, dirty(11), desc(0), &[2], &s), vec![8]);
        assert_eq!(classify_row(m, dirty(11), dirty(11), &[2], &s), vec![9]);
        assert_eq!(classify_row(m, payload(11), dirty(11), &[2], &s), vec![10]);
    }

    #[test]
    fn successor_over_durable_dirty_word_is_row_eleven() {
        // worker 0 finished (durable word still dirty 11), worker 1 embeds
        let s = syms(&[
        Some((payload(10), payload(11))),
            Some((payload(11), payload(12))),
        ]);
        assert_eq!(
            classify_row(Machine::DirtyFlag, desc(1), dirty(11), &[3, 1], &s),
            vec![11]
        );
    }

    #[test]
    fn nodf_successor_over_durable_descriptor_is_row_six() {
        let s = syms(&[
            Some((payload(10), payload(11))),
            Some((payload(11), payload(12))),
        ]);
        assert_eq!(
            classify_row(Machine::NoDirtyFlag, desc(1), desc(0), &[2, 1], &s),
            vec![6]
        );
    }

    #[test]
    fn tag_three_is_unclassifiable() {
        let s = syms(&[Some((payload(10), payload(11)))]);
        assert!(classify_row(Machine::DirtyFlag, 0b111, 0b111, &[1], &s).is_empty());
    }

    #[test]
    fn dirty_word_is_unclassifiable_without_flags() {
        let s = syms(&[Some((payload(10), payload(11)))]);
        assert!(classify_row(Machine::NoDirtyFlag, dirty(10), payload(10), &[1], &s).is_empty());
    }

    #[test]
    fn edges_reject_skipping_the_embed() {
        assert!(!edge_allowed(Machine::DirtyFlag, 0, 2));
        assert!(!edge_allowed(Machine::NoDirtyFlag, 0, 2));
        assert!(edge_allowed(Machine::DirtyFlag, 0, 1));
        assert!(edge_allowed(Machine::DirtyFlag, 5, 5));
    }

    #[test]
    fn pcas_rows_and_edges() {
        let s = syms(&[Some((payload(10), payload(11)))]);
        let m = Machine::Pcas;
        assert_eq!(classify_row(m, dirty(11), payload(10), &[], &s), vec![1]);
        assert_eq!(classify_row(m, dirty(11), dirty(11), &[], &s), vec![2]);
        assert_eq!(classify_row(m, payload(11), dirty(11), &[], &s), vec![3]);
        assert!(edge_allowed(m, 3, 4));
        assert!(!edge_allowed(m, 0, 2));
    }
}
