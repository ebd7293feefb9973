//! Durable-atomicity oracle.
//!
//! Checks that a payload image is explainable as some sequential execution
//! of a subset of the submitted CAS operations: the subset is applied in
//! some order that respects each worker's program order, every applied
//! operation sees all of its expected values, and the resulting payloads
//! equal the image exactly. Operations known to have committed must appear
//! in the subset; operations known to have failed or never started must
//! not; in-flight operations may go either way.
//!
//! Deliberately brute force and structurally independent of the
//! implementation under test: subsets ascending by bitmask, orders by
//! depth-first search in index order, so the first witness found is
//! deterministic.

use super::TargetSpec;
use crate::error::{Error, Result};

/// Hard cap on oracle instance size; subset x permutation search beyond
/// this is rejected rather than silently slow.
pub const MAX_ORACLE_OPS: usize = 16;

/// One CAS-bearing operation as the oracle sees it: plain payload values,
/// no tags, no descriptors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleOp {
    pub worker: usize,
    pub seq: usize,
    pub targets: Vec<TargetSpec>,
}

impl OracleOp {
    fn applicable(&self, state: &[u64]) -> bool {
        self.targets
            .iter()
            .all(|t| state[t.addr.0 as usize] == t.expected)
    }

    fn apply(&self, state: &mut [u64]) {
        for t in &self.targets {
            state[t.addr.0 as usize] = t.desired;
        }
    }
}

/// Depth-first search for an application order of the ops selected by
/// `mask` that respects per-worker sequence order and reaches `target`.
/// `order` accumulates op indices; returns true on success with `order`
/// holding the witness.
fn dfs(
    ops: &[OracleOp],
    mask: u64,
    applied: u64,
    state: &mut Vec<u64>,
    target: &[u64],
    order: &mut Vec<usize>,
) -> bool {
    if applied == mask {
        return state == target;
    }
    for i in 0..ops.len() {
        let bit = 1u64 << i;
        if mask & bit == 0 || applied & bit != 0 {
            continue;
        }
        // program order: every selected earlier op of the same worker must
        // already be applied
        let ready = ops.iter().enumerate().all(|(j, o)| {
            j == i
                || o.worker != ops[i].worker
                || o.seq >= ops[i].seq
                || mask & (1 << j) == 0
                || applied & (1 << j) != 0
        });
        if !ready || !ops[i].applicable(state) {
            continue;
        }
        let saved: Vec<(usize, u64)> = ops[i]
            .targets
            .iter()
            .map(|t| (t.addr.0 as usize, state[t.addr.0 as usize]))
            .collect();
        ops[i].apply(state);
        order.push(i);
        if dfs(ops, mask, applied | bit, state, target, order) {
            return true;
        }
        order.pop();
        for (idx, v) in saved {
            state[idx] = v;
        }
    }
    false
}

/// Finds a sequential witness explaining `final_payloads`, or `None` if the
/// image violates durable atomicity. `required` and `allowed` are bitmasks
/// over `ops`; the chosen subset `s` satisfies `required ⊆ s ⊆ allowed`.
/// Returns the op indices in application order.
pub fn find_witness(
    initial: &[u64],
    ops: &[OracleOp],
    required: u64,
    allowed: u64,
    final_payloads: &[u64],
) -> Result<Option<Vec<usize>>> {
    if ops.len() > MAX_ORACLE_OPS {
        return Err(Error::InstanceTooLarge(format!(
            "{} ops exceeds oracle cap {MAX_ORACLE_OPS}",
            ops.len()
        )));
    }
    debug_assert_eq!(required & !allowed, 0);
    let optional = allowed & !required;
    // iterate subsets of the optional ops in ascending mask order for a
    // deterministic first witness
    let mut extra = 0u64;
    loop {
        let mask = required | extra;
        let mut state = initial.to_vec();
        let mut order = Vec::new();
        if dfs(ops, mask, 0, &mut state, final_payloads, &mut order) {
            return Ok(Some(order));
        }
        if extra == optional {
            return Ok(None);
        }
        // next subset of `optional` (standard subset-enumeration step)
        extra = (extra.wrapping_sub(optional)) & optional;
    }
}
