//! The persistence model: atomic word operations on a cache view plus
//! explicit line-granular persistence into a durable view.
//!
//! Two backends implement [`Memory`]:
//! * [`SimHeap`] — fully observable simulated memory for the crash harness.
//! * [`SharedHeap`] — real atomics over a memory-mapped file or DRAM, for
//!   the benchmark.

mod file;
mod shared;
mod sim;

pub use file::{create_heap_file, open_heap_file, set_clean_shutdown, HeapHeader, FORMAT_VERSION, MAGIC};
pub use shared::{SharedBackend, SharedHeap};
pub use sim::{SimHeap, SimSnapshot};

use crate::layout::{CellAddr, HeapLayout, WordAddress};
use crate::tag::TaggedWord;

/// Word-addressable memory with explicit persistence.
///
/// `load`/`store`/`cas` act on the cache view; `persist` writes the
/// containing cache line back to the durable view (and counts one flush
/// event per line written back, clean or not).
pub trait Memory {
    fn layout(&self) -> &HeapLayout;

    fn load(&self, cell: CellAddr) -> u64;
    fn store(&self, cell: CellAddr, value: u64);
    /// Returns the current value; iff it equals `expected` the cell now
    /// holds `desired`.
    fn cas(&self, cell: CellAddr, expected: u64, desired: u64) -> u64;
    fn persist(&self, cell: CellAddr);
    /// Persists every cache line spanned by the used portion of the
    /// descriptor in `slot`, followed by an ordering fence.
    fn persist_descriptor(&self, slot: usize, count: usize);
    /// Total flush events issued so far.
    fn flush_count(&self) -> u64;
}

/// Convenience wrappers for the public word-level API.
pub trait MemoryExt: Memory {
    fn load_word(&self, addr: WordAddress) -> crate::error::Result<TaggedWord> {
        self.layout().check_word(addr)?;
        Ok(TaggedWord(self.load(self.layout().word_cell(addr))))
    }

    fn store_word(&self, addr: WordAddress, value: TaggedWord) -> crate::error::Result<()> {
        self.layout().check_word(addr)?;
        self.store(self.layout().word_cell(addr), value.raw());
        Ok(())
    }

    fn cas_word(
        &self,
        addr: WordAddress,
        expected: TaggedWord,
        desired: TaggedWord,
    ) -> crate::error::Result<TaggedWord> {
        self.layout().check_word(addr)?;
        Ok(TaggedWord(self.cas(
            self.layout().word_cell(addr),
            expected.raw(),
            desired.raw(),
        )))
    }

    fn persist_word(&self, addr: WordAddress) -> crate::error::Result<()> {
        self.layout().check_word(addr)?;
        self.persist(self.layout().word_cell(addr));
        Ok(())
    }
}

impl<M: Memory + ?Sized> MemoryExt for M {}
