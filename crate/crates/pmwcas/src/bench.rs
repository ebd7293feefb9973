//! Multi-word increment benchmark.
//!
//! Each thread repeatedly draws `targets` distinct words from a
//! Zipf-skewed distribution, reads their current values, and attempts a
//! PMwCAS incrementing each by one, retrying with fresh reads until the
//! operation succeeds. Latency is measured per successful operation and
//! includes retries. After the run the heap is audited: the payload sum
//! must have grown by exactly `targets` per success and no word may retain
//! a tag.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::descriptor::{Descriptor, TargetEntry};
use crate::error::{Error, Result};
use crate::layout::{HeapLayout, Variant, WordAddress};
use crate::op::{pcas, pmwcas, read_word, OpStats};
use crate::pmem::{Memory, SharedHeap};
use crate::tag::TaggedWord;
use crate::zipf::{OrderPolicy, WordPicker};

/// Per-thread latency reservoir size.
const RESERVOIR: usize = 4096;
/// Waits a read will tolerate before declaring the heap stuck.
const READ_MAX_WAITS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// PMwCAS with dirty flags.
    Df,
    /// PMwCAS without dirty flags.
    Nodf,
    /// Single-word persistent CAS baseline.
    Pcas,
}

impl Algorithm {
    pub fn variant(self) -> Variant {
        match self {
            Algorithm::Df | Algorithm::Pcas => Variant::DirtyFlag,
            Algorithm::Nodf => Variant::NoDirtyFlag,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Df => "df",
            Algorithm::Nodf => "nodf",
            Algorithm::Pcas => "pcas",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub algorithm: Algorithm,
    pub threads: usize,
    pub targets: usize,
    pub words: u64,
    pub alpha: f64,
    pub block_size: u32,
    pub order: OrderPolicy,
    pub seed: u64,
    /// Wall-clock budget in seconds.
    pub timeout_s: f64,
    /// Each thread stops after this many of its own operations succeed.
    pub max_ops: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            algorithm: Algorithm::Nodf,
            threads: 8,
            targets: 4,
            words: 1_000_000,
            alpha: 1.0,
            block_size: 256,
            order: OrderPolicy::Index,
            seed: 42,
            timeout_s: 10.0,
            max_ops: 1_000_000,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::Config("threads must be nonzero".into()));
        }
        if self.targets == 0 || self.targets > crate::layout::MAX_TARGETS {
            return Err(Error::Config(format!(
                "targets must be 1..={}, got {}",
                crate::layout::MAX_TARGETS,
                self.targets
            )));
        }
        if self.algorithm == Algorithm::Pcas && self.targets != 1 {
            return Err(Error::Config("pcas requires targets = 1".into()));
        }
        if self.targets as u64 > self.words {
            return Err(Error::Config("targets exceeds word count".into()));
        }
        if self.max_ops == 0 {
            return Err(Error::Config("max_ops must be nonzero".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<HeapLayout> {
        HeapLayout::new(
            self.words,
            self.block_size,
            self.threads,
            self.algorithm.variant(),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub elapsed_s: f64,
    pub succeeded: u64,
    pub failed_attempts: u64,
    pub throughput_ops_per_s: f64,
    pub latency_p1_us: f64,
    pub latency_p50_us: f64,
    pub latency_p99_us: f64,
    pub stats: OpStats,
    /// Payload sum grew by exactly `targets * succeeded`.
    pub sum_check_ok: bool,
    /// No word retained a descriptor or dirty tag.
    pub tag_clean_ok: bool,
}

impl BenchReport {
    pub fn csv_header() -> &'static str {
        "algorithm,threads,k,words,alpha,block_size,order,seed,elapsed_s,succeeded,\
         failed_attempts,throughput_ops_per_s,latency_p1_us,latency_p50_us,latency_p99_us,\
         cas_count,persist_calls,flush_count,target_flush_count,dirty_store_count,retry_count,\
         sum_check_ok,tag_clean_ok"
    }

    pub fn csv_row(&self) -> String {
        let c = &self.config;
        let order = match c.order {
            OrderPolicy::Index => "index",
            OrderPolicy::ContendedFirst => "contended-first",
        };
        format!(
            "{},{},{},{},{},{},{},{},{:.6},{},{},{:.2},{:.3},{:.3},{:.3},{},{},{},{},{},{},{},{}",
            c.algorithm.as_str(),
            c.threads,
            c.targets,
            c.words,
            c.alpha,
            c.block_size,
            order,
            c.seed,
            self.elapsed_s,
            self.succeeded,
            self.failed_attempts,
            self.throughput_ops_per_s,
            self.latency_p1_us,
            self.latency_p50_us,
            self.latency_p99_us,
            self.stats.cas_count,
            self.stats.persist_calls,
            self.stats.flush_count,
            self.stats.target_flush_count,
            self.stats.dirty_store_count,
            self.stats.retry_count,
            self.sum_check_ok,
            self.tag_clean_ok,
        )
    }
}

struct ThreadResult {
    succeeded: u64,
    failed_attempts: u64,
    stats: OpStats,
    latencies: Vec<Duration>,
}

fn reservoir_push(samples: &mut Vec<Duration>, seen: &mut u64, d: Duration, rng: &mut StdRng) {
    *seen += 1;
    if samples.len() < RESERVOIR {
        samples.push(d);
    } else {
        let idx = rng.random_range(0..*seen);
        if (idx as usize) < RESERVOIR {
            samples[idx as usize] = d;
        }
    }
}

fn percentile_us(sorted: &[Duration], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx].as_secs_f64() * 1e6
}

fn worker_loop(
    heap: &SharedHeap,
    config: &BenchConfig,
    picker: &WordPicker,
    slot: usize,
    start: Instant,
    stop: &AtomicBool,
) -> Result<ThreadResult> {
    let mut rng = StdRng::seed_from_u64(
        config
            .seed
            .wrapping_add((slot as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    );
    let timeout = Duration::from_secs_f64(config.timeout_s);
    let mut result = ThreadResult {
        succeeded: 0,
        failed_attempts: 0,
        stats: OpStats::default(),
        latencies: Vec::new(),
    };
    let mut seen = 0u64;

    while result.succeeded < config.max_ops && !stop.load(Ordering::Relaxed) {
        if start.elapsed() >= timeout {
            stop.store(true, Ordering::Relaxed);
            break;
        }
        let addrs = picker.draw_targets(&mut rng, config.targets, config.order);
        let op_start = Instant::now();
        loop {
            let ok = if config.algorithm == Algorithm::Pcas {
                let addr = addrs[0];
                let current = read_word(heap, addr, Some(READ_MAX_WAITS))?;
                let desired = TaggedWord::from_payload(current.payload() + 1);
                let (ok, stats) = pcas(heap, addr, current, desired)?;
                result.stats.merge(&stats);
                ok
            } else {
                let mut entries = Vec::with_capacity(addrs.len());
                for &addr in &addrs {
                    let current = read_word(heap, addr, Some(READ_MAX_WAITS))?;
                    entries.push(TargetEntry::new(
                        addr,
                        current,
                        TaggedWord::from_payload(current.payload() + 1),
                    )?);
                }
                let desc = Descriptor::new(heap.layout(), slot, entries)?;
                let (ok, stats) = pmwcas(heap, desc, config.algorithm.variant());
                result.stats.merge(&stats);
                ok
            };
            if ok {
                result.succeeded += 1;
                reservoir_push(&mut result.latencies, &mut seen, op_start.elapsed(), &mut rng);
                break;
            }
            result.failed_attempts += 1;
            if stop.load(Ordering::Relaxed) || start.elapsed() >= timeout {
                break;
            }
        }
    }
    Ok(result)
}

fn payload_sum(heap: &SharedHeap) -> u64 {
    let layout = heap.layout();
    (0..layout.word_capacity)
        .map(|w| TaggedWord(heap.load(layout.word_cell(WordAddress(w)))).payload())
        .fold(0u64, u64::wrapping_add)
}

fn tags_clean(heap: &SharedHeap) -> bool {
    let layout = heap.layout();
    (0..layout.word_capacity)
        .all(|w| TaggedWord(heap.load(layout.word_cell(WordAddress(w)))).is_payload())
}

/// Runs the benchmark on an existing heap (whose layout must match the
/// configuration).
pub fn run(config: &BenchConfig, heap: &SharedHeap) -> Result<BenchReport> {
    config.validate()?;
    let expected_layout = config.layout()?;
    if *heap.layout() != expected_layout {
        return Err(Error::Config(format!(
            "heap layout {:?} does not match benchmark configuration {:?}",
            heap.layout(),
            expected_layout
        )));
    }
    let picker = WordPicker::new(config.alpha, config.words, config.seed)?;
    let sum_before = payload_sum(heap);

    let stop = AtomicBool::new(false);
    let start = Instant::now();
    let results: Vec<Result<ThreadResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.threads)
            .map(|slot| {
                let picker = &picker;
                let stop = &stop;
                scope.spawn(move || worker_loop(heap, config, picker, slot, start, stop))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let elapsed = start.elapsed();

    let mut succeeded = 0u64;
    let mut failed_attempts = 0u64;
    let mut stats = OpStats::default();
    let mut latencies = Vec::new();
    for r in results {
        let r = r?;
        succeeded += r.succeeded;
        failed_attempts += r.failed_attempts;
        stats.merge(&r.stats);
        latencies.extend(r.latencies);
    }
    latencies.sort_unstable();

    let sum_after = payload_sum(heap);
    let sum_check_ok =
        sum_after.wrapping_sub(sum_before) == succeeded.wrapping_mul(config.targets as u64);
    let tag_clean_ok = tags_clean(heap);

    Ok(BenchReport {
        config: config.clone(),
        elapsed_s: elapsed.as_secs_f64(),
        succeeded,
        failed_attempts,
        throughput_ops_per_s: succeeded as f64 / elapsed.as_secs_f64(),
        latency_p1_us: percentile_us(&latencies, 0.01),
        latency_p50_us: percentile_us(&latencies, 0.50),
        latency_p99_us: percentile_us(&latencies, 0.99),
        stats,
        sum_check_ok,
        tag_clean_ok,
    })
}

/// Runs the benchmark on a fresh zeroed DRAM heap.
pub fn run_dram(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let heap = SharedHeap::new_dram(config.layout()?);
    run(config, &heap)
}
