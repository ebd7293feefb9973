//! Persistent multi-word compare-and-swap (PMwCAS) over a word-addressable
//! heap with explicit cache-line persistence.
//!
//! The crate provides:
//! * a pluggable persistence model ([`pmem`]): a fully observable simulated
//!   backend with an explicit dirty-line set, and a real backend over DRAM
//!   or a memory-mapped file;
//! * the operations ([`op`]): descriptor-based multi-word CAS in two
//!   variants (with and without dirty flags), a single-word persistent CAS,
//!   and a read that waits out in-progress operations — all expressed as
//!   resumable step machines so the same code runs on real threads and
//!   under the deterministic crash harness;
//! * crash recovery ([`recovery`]): descriptor replay that restores a
//!   consistent durable image and is idempotent;
//! * a crash-injection model checker ([`harness`]): exhaustive or sampled
//!   schedule exploration with a brute-force durable-atomicity oracle and
//!   per-word state-machine conformance checking;
//! * a benchmark workload ([`bench`]): Zipf-skewed multi-word increments
//!   with throughput, latency, and event-count reporting.

pub mod backoff;
pub mod bench;
pub mod descriptor;
pub mod error;
pub mod harness;
pub mod layout;
pub mod op;
pub mod pmem;
pub mod recovery;
pub mod tag;
pub mod zipf;

pub use descriptor::{Descriptor, DescriptorState, TargetEntry};
pub use error::{Error, Result};
pub use layout::{HeapLayout, Variant, WordAddress};
pub use op::{pcas, pmwcas, read_word, OpStats};
pub use pmem::{Memory, MemoryExt, SharedBackend, SharedHeap, SimHeap};
pub use recovery::{recover, recover_idempotence_check, RecoveryReport};
pub use tag::{TaggedWord, WordKind};
