//! Simulated backend: a cache view and a durable view with an explicit
//! dirty-line set. Persisting (or evicting at a crash) a line copies every
//! word on it from cache to durable; nothing else ever mutates the durable
//! view. Single-threaded by design; the harness owns the only real thread.

use std::cell::RefCell;
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::layout::{CellAddr, HeapLayout};
use crate::pmem::Memory;

#[derive(Debug, Clone)]
struct SimState {
    cache: Vec<u64>,
    durable: Vec<u64>,
    dirty: BTreeSet<u64>,
    flush_count: u64,
}

#[derive(Debug, Clone)]
pub struct SimHeap {
    layout: HeapLayout,
    inner: RefCell<SimState>,
}

/// A hashable copy of the full simulated memory state, used by the harness
/// to deduplicate explored states and durable images.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SimSnapshot {
    pub cache: Vec<u64>,
    pub durable: Vec<u64>,
    pub dirty: Vec<u64>,
}

impl SimHeap {
    /// Zero-initialized heap; every word starts as clean payload 0.
    pub fn new(layout: HeapLayout) -> Self {
        let cells = layout.total_cells();
        SimHeap {
            layout,
            inner: RefCell::new(SimState {
                cache: vec![0; cells],
                durable: vec![0; cells],
                dirty: BTreeSet::new(),
                flush_count: 0,
            }),
        }
    }

    /// Rebuilds a heap whose cache and durable views both equal `durable`,
    /// as seen on reopen after a crash.
    pub fn from_durable(layout: HeapLayout, durable: Vec<u64>) -> Self {
        assert_eq!(durable.len(), layout.total_cells());
        SimHeap {
            layout,
            inner: RefCell::new(SimState {
                cache: durable.clone(),
                durable,
                dirty: BTreeSet::new(),
                flush_count: 0,
            }),
        }
    }

    pub fn durable_value(&self, cell: CellAddr) -> u64 {
        self.inner.borrow().durable[cell.0]
    }

    pub fn cache_value(&self, cell: CellAddr) -> u64 {
        self.inner.borrow().cache[cell.0]
    }

    pub fn dirty_lines(&self) -> Vec<u64> {
        self.inner.borrow().dirty.iter().copied().collect()
    }

    pub fn durable_image(&self) -> Vec<u64> {
        self.inner.borrow().durable.clone()
    }

    pub fn snapshot(&self) -> SimSnapshot {
        let s = self.inner.borrow();
        SimSnapshot {
            cache: s.cache.clone(),
            durable: s.durable.clone(),
            dirty: s.dirty.iter().copied().collect(),
        }
    }

    /// Durable image as it would read after a crash that evicted exactly
    /// `evict` (a subset of the currently dirty lines), without mutating
    /// this heap.
    pub fn durable_after_crash(&self, evict: &[u64]) -> Result<Vec<u64>> {
        let s = self.inner.borrow();
        let mut durable = s.durable.clone();
        for &line in evict {
            if !s.dirty.contains(&line) {
                return Err(Error::Contract(format!(
                    "eviction subset contains non-dirty line {line}"
                )));
            }
            for cell in self.layout.cells_on_line(line) {
                durable[cell.0] = s.cache[cell.0];
            }
        }
        Ok(durable)
    }

    /// Models a crash: the chosen dirty lines are written back as if evicted
    /// by the cache controller, then all cache state is discarded and the
    /// heap is reborn with cache view = durable view.
    pub fn crash(&self, evict: &[u64]) -> Result<()> {
        let durable = self.durable_after_crash(evict)?;
        let mut s = self.inner.borrow_mut();
        s.cache = durable.clone();
        s.durable = durable;
        s.dirty.clear();
        Ok(())
    }

    fn persist_line(&self, line: u64) {
        let mut s = self.inner.borrow_mut();
        for cell in self.layout.cells_on_line(line) {
            s.durable[cell.0] = s.cache[cell.0];
        }
        s.dirty.remove(&line);
        s.flush_count += 1;
    }
}

impl Memory for SimHeap {
    fn layout(&self) -> &HeapLayout {
        &self.layout
    }

    fn load(&self, cell: CellAddr) -> u64 {
        self.inner.borrow().cache[cell.0]
    }

    fn store(&self, cell: CellAddr, value: u64) {
        let line = self.layout.line_of(cell);
        let mut s = self.inner.borrow_mut();
        s.cache[cell.0] = value;
        s.dirty.insert(line);
    }

    fn cas(&self, cell: CellAddr, expected: u64, desired: u64) -> u64 {
        let line = self.layout.line_of(cell);
        let mut s = self.inner.borrow_mut();
        let current = s.cache[cell.0];
        if current == expected {
            s.cache[cell.0] = desired;
            s.dirty.insert(line);
        }
        current
    }

    fn persist(&self, cell: CellAddr) {
        self.persist_line(self.layout.line_of(cell));
    }

    fn persist_descriptor(&self, slot: usize, count: usize) {
        for line in self.layout.desc_lines(slot, count) {
            self.persist_line(line);
        }
    }

    fn flush_count(&self) -> u64 {
        self.inner.borrow().flush_count
    }
}
