//! Thread-safe backend over real atomics: either a memory-mapped heap file
//! or plain DRAM. Durability on the file backend is approximated with
//! cache-line writeback instructions plus an ordering fence; the DRAM
//! backend turns persist into a fence so the same code paths can be
//! benchmarked on machines without persistent memory.

use std::sync::atomic::{fence, AtomicU64, Ordering};

use memmap2::MmapMut;

use crate::error::{Error, Result};
use crate::layout::{CellAddr, HeapLayout, CACHE_LINE};
use crate::pmem::Memory;

/// Backend selection for [`SharedHeap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SharedBackend {
    Dram,
    File,
}

impl SharedBackend {
    /// Reads `PMWCAS_BACKEND` (`dram` or `file`), defaulting to DRAM.
    pub fn from_env() -> SharedBackend {
        match std::env::var("PMWCAS_BACKEND").as_deref() {
            Ok("file") | Ok("real") => SharedBackend::File,
            _ => SharedBackend::Dram,
        }
    }
}

enum Storage {
    Dram(Box<[AtomicU64]>),
    File(MmapMut),
}

pub struct SharedHeap {
    layout: HeapLayout,
    storage: Storage,
    flushes: AtomicU64,
}

// The mmap storage hands out &AtomicU64 into the mapping; all concurrent
// access goes through those atomics.
unsafe impl Sync for SharedHeap {}
unsafe impl Send for SharedHeap {}

impl SharedHeap {
    /// Zero-initialized DRAM heap.
    pub fn new_dram(layout: HeapLayout) -> Self {
        let cells = layout.total_cells();
        let storage: Box<[AtomicU64]> = (0..cells).map(|_| AtomicU64::new(0)).collect();
        SharedHeap {
            layout,
            storage: Storage::Dram(storage),
            flushes: AtomicU64::new(0),
        }
    }

    pub(crate) fn from_mmap(layout: HeapLayout, map: MmapMut) -> Self {
        SharedHeap {
            layout,
            storage: Storage::File(map),
            flushes: AtomicU64::new(0),
        }
    }

    pub fn backend(&self) -> SharedBackend {
        match self.storage {
            Storage::Dram(_) => SharedBackend::Dram,
            Storage::File(_) => SharedBackend::File,
        }
    }

    /// Crash injection only exists on the simulated backend.
    pub fn crash(&self, _evict: &[u64]) -> Result<()> {
        Err(Error::UnsupportedBackend(
            "crash injection requires the simulated backend",
        ))
    }

    fn cell_ref(&self, cell: CellAddr) -> &AtomicU64 {
        match &self.storage {
            Storage::Dram(cells) => &cells[cell.0],
            Storage::File(map) => {
                let off = self.layout.byte_offset(cell) as usize;
                debug_assert!(off + 8 <= map.len());
                // offsets are 8-aligned by construction
                unsafe { &*(map.as_ptr().add(off) as *const AtomicU64) }
            }
        }
    }

    fn writeback_line(&self, byte_off: u64) {
        match &self.storage {
            Storage::Dram(_) => fence(Ordering::SeqCst),
            Storage::File(map) => {
                let base = (byte_off & !(CACHE_LINE - 1)) as usize;
                #[cfg(target_arch = "x86_64")]
                unsafe {
                    std::arch::x86_64::_mm_clflush(map.as_ptr().add(base));
                    std::arch::x86_64::_mm_sfence();
                }
                #[cfg(not(target_arch = "x86_64"))]
                {
                    let _ = base;
                    fence(Ordering::SeqCst);
                }
            }
        }
        self.flushes.fetch_add(1, Ordering::Relaxed);
    }

    /// Flushes the whole mapping back to the file (no-op on DRAM).
    pub fn sync(&self) -> Result<()> {
        if let Storage::File(map) = &self.storage {
            map.flush()?;
        }
        Ok(())
    }
}

impl Memory for SharedHeap {
    fn layout(&self) -> &HeapLayout {
        &self.layout
    }

    fn load(&self, cell: CellAddr) -> u64 {
        self.cell_ref(cell).load(Ordering::SeqCst)
    }

    fn store(&self, cell: CellAddr, value: u64) {
        self.cell_ref(cell).store(value, Ordering::SeqCst);
    }

    fn cas(&self, cell: CellAddr, expected: u64, desired: u64) -> u64 {
        match self.cell_ref(cell).compare_exchange(
            expected,
            desired,
            Ordering::SeqCst,
            Ordering::SeqCst,
        ) {
            Ok(prev) => prev,
            Err(prev) => prev,
        }
    }

    fn persist(&self, cell: CellAddr) {
        self.writeback_line(self.layout.byte_offset(cell));
    }

    fn persist_descriptor(&self, slot: usize, count: usize) {
        for line in self.layout.desc_lines(slot, count) {
            self.writeback_line(line * CACHE_LINE);
        }
        fence(Ordering::SeqCst);
    }

    fn flush_count(&self) -> u64 {
        self.flushes.load(Ordering::Relaxed)
    }
}
