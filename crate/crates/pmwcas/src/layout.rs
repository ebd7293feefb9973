//! Heap geometry.
//!
//! A heap is a flat address space: a header, a descriptor area (one slot per
//! worker), and an array of fixed-size blocks whose head 8 bytes are the
//! PMwCAS target words. All word-level state, including descriptor fields,
//! is addressed through [`CellAddr`] so the simulated backend can model
//! cache-line granularity uniformly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cache-line size in bytes. Fixed at 64 to match current CPUs; kept as a
/// named constant so experiments can rebuild with a different value.
pub const CACHE_LINE: u64 = 64;

/// Maximum number of target words per descriptor.
pub const MAX_TARGETS: usize = 8;

/// Words in a descriptor slot header: state and count.
pub const DESC_HEADER_WORDS: usize = 2;
/// Words per target entry: address, expected, desired.
pub const WORDS_PER_TARGET: usize = 3;
/// A descriptor slot is padded to 256 bytes (32 words, 4 cache lines).
pub const DESC_SLOT_WORDS: usize = 32;
pub const DESC_SLOT_BYTES: u64 = DESC_SLOT_WORDS as u64 * 8;

/// File/byte offset where the descriptor area begins.
pub const DESC_AREA_OFFSET: u64 = 4096;

/// Which PMwCAS variant a heap runs. Recovery reads this to decide whether
/// dirty flags may appear in data words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// With dirty flags (also covers PCAS words).
    DirtyFlag,
    /// Without dirty flags; descriptors double as write-ahead logs.
    NoDirtyFlag,
}

/// Logical index of a data word (one per block).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct WordAddress(pub u64);

/// Internal flat cell index covering the descriptor area followed by the
/// data words. Descriptor cells come first so recovery can scan them as
/// ordinary words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellAddr(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeapLayout {
    pub word_capacity: u64,
    pub block_size: u32,
    pub worker_slots: usize,
    pub variant: Variant,
}

impl HeapLayout {
    pub fn new(
        word_capacity: u64,
        block_size: u32,
        worker_slots: usize,
        variant: Variant,
    ) -> Result<Self> {
        if word_capacity == 0 {
            return Err(Error::Config("word_capacity must be nonzero".into()));
        }
        if block_size < 8 || !block_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "block_size must be a power of two >= 8, got {block_size}"
            )));
        }
        if worker_slots == 0 {
            return Err(Error::Config("worker_slots must be nonzero".into()));
        }
        Ok(HeapLayout {
            word_capacity,
            block_size,
            worker_slots,
            variant,
        })
    }

    pub fn desc_cells(&self) -> usize {
        self.worker_slots * DESC_SLOT_WORDS
    }

    pub fn total_cells(&self) -> usize {
        self.desc_cells() + self.word_capacity as usize
    }

    /// Byte offset where the block array begins, 4096-aligned past the
    /// descriptor area.
    pub fn data_area_offset(&self) -> u64 {
        let end = DESC_AREA_OFFSET + self.worker_slots as u64 * DESC_SLOT_BYTES;
        end.div_ceil(4096) * 4096
    }

    pub fn file_len(&self) -> u64 {
        self.data_area_offset() + self.word_capacity * self.block_size as u64
    }

    pub fn check_word(&self, addr: WordAddress) -> Result<()> {
        if addr.0 < self.word_capacity {
            Ok(())
        } else {
            Err(Error::AddressOutOfRange(addr, self.word_capacity))
        }
    }

    pub fn check_slot(&self, slot: usize) -> Result<()> {
        if slot < self.worker_slots {
            Ok(())
        } else {
            Err(Error::SlotOutOfRange(slot, self.worker_slots))
        }
    }

    pub fn word_cell(&self, addr: WordAddress) -> CellAddr {
        CellAddr(self.desc_cells() + addr.0 as usize)
    }

    /// Inverse of [`word_cell`](Self::word_cell) for data cells.
    pub fn cell_word(&self, cell: CellAddr) -> Option<WordAddress> {
        cell.0
            .checked_sub(self.desc_cells())
            .map(|i| WordAddress(i as u64))
    }

    /// Cell of descriptor field `field` (0 = state, 1 = count, then target
    /// entries) in `slot`.
    pub fn desc_cell(&self, slot: usize, field: usize) -> CellAddr {
        debug_assert!(field < DESC_SLOT_WORDS);
        CellAddr(slot * DESC_SLOT_WORDS + field)
    }

    /// Byte offset of a cell in the heap image; determines cache-line
    /// membership.
    pub fn byte_offset(&self, cell: CellAddr) -> u64 {
        let desc_cells = self.desc_cells();
        if cell.0 < desc_cells {
            DESC_AREA_OFFSET + cell.0 as u64 * 8
        } else {
            self.data_area_offset() + (cell.0 - desc_cells) as u64 * self.block_size as u64
        }
    }

    pub fn line_of(&self, cell: CellAddr) -> u64 {
        self.byte_offset(cell) / CACHE_LINE
    }

    /// All cells whose bytes fall on cache line `line`.
    pub fn cells_on_line(&self, line: u64) -> Vec<CellAddr> {
        let lo = line * CACHE_LINE;
        let hi = lo + CACHE_LINE;
        let mut cells = Vec::new();
        let desc_cells = self.desc_cells() as u64;
        let desc_end = DESC_AREA_OFFSET + desc_cells * 8;
        if lo < desc_end && hi > DESC_AREA_OFFSET {
            let first = lo.saturating_sub(DESC_AREA_OFFSET) / 8;
            let last = ((hi - DESC_AREA_OFFSET).div_ceil(8)).min(desc_cells);
            for c in first..last {
                cells.push(CellAddr(c as usize));
            }
        }
        let data_off = self.data_area_offset();
        let bs = self.block_size as u64;
        if hi > data_off {
            let first = lo.saturating_sub(data_off).div_ceil(bs);
            let last = ((hi - data_off).div_ceil(bs)).min(self.word_capacity);
            for w in first..last {
                // a data word occupies the head 8 bytes of its block
                let off = data_off + w * bs;
                if off >= lo && off < hi {
                    cells.push(CellAddr((desc_cells + w) as usize));
                }
            }
        }
        cells
    }

    /// Cache lines spanned by the used portion of a descriptor with `count`
    /// targets (state, count, and `count` target entries).
    pub fn desc_lines(&self, slot: usize, count: usize) -> Vec<u64> {
        let used_words = DESC_HEADER_WORDS + count * WORDS_PER_TARGET;
        let start = self.byte_offset(self.desc_cell(slot, 0));
        let end = start + used_words as u64 * 8;
        (start / CACHE_LINE..end.div_ceil(CACHE_LINE)).collect()
    }
}
