//! Exhaustive and sampled schedule exploration.
//!
//! Exhaustive mode walks the deduplicated graph of reachable execution
//! states: a node is the pair (full simulated-memory snapshot, all worker
//! machine states) and an edge is one worker step. At *every* node it
//! evaluates a crash for *every* subset of the currently dirty cache
//! lines, recovering the resulting durable image and checking the
//! durable-atomicity oracle. Because a crash verdict depends only on the
//! durable image and the set of operation statuses, deduplicating nodes
//! and (image, statuses) pairs covers exactly the verdicts of enumerating
//! every interleaving, crash step, and eviction subset individually —
//! without the combinatorial blow-up.
//!
//! Sampling mode replays randomly drawn schedules end to end through
//! [`run_schedule`] instead; it exists for instances whose state graph
//! exceeds the exhaustive budget.

use std::collections::HashSet;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::state_machine::{classify_row, transition_allowed, Machine, WordSymbols};
use super::{masks, run_schedule, CrashSchedule, HarnessState, OpStatus, Scenario};
use crate::error::{Error, Result};
use crate::harness::find_witness;
use crate::layout::WordAddress;
use crate::pmem::{Memory, SimHeap};
use crate::recovery::recover;
use crate::tag::TaggedWord;

#[derive(Debug, Clone)]
pub struct ExploreConfig {
    /// Abort with an error instead of exploring more states than this.
    pub max_states: usize,
    /// Abort if any single state has more dirty lines than this (the crash
    /// evaluation enumerates all `2^dirty` eviction subsets).
    pub max_dirty_lines: usize,
    /// Check per-word state-machine conformance on `scenario.observe`.
    pub machine: Option<Machine>,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            max_states: 1_000_000,
            max_dirty_lines: 16,
            machine: None,
        }
    }
}

/// A schedule that produced an unexplainable durable image (or another
/// invariant breach), replayable via [`run_schedule`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub schedule: CrashSchedule,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExploreReport {
    pub states_explored: u64,
    pub terminal_states: u64,
    pub crash_images_checked: u64,
    pub transitions_checked: u64,
    pub violations: Vec<Violation>,
}

impl ExploreReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Symbols of the observed word for state-machine classification.
fn word_symbols(scenario: &Scenario, addr: WordAddress) -> WordSymbols {
    let per_slot = scenario
        .workers
        .iter()
        .map(|script| {
            script.iter().find_map(|op| {
                let targets: &[super::TargetSpec] = match op {
                    super::OpSpec::Pmwcas { targets } => targets,
                    super::OpSpec::Pcas { target } => std::slice::from_ref(target),
                    super::OpSpec::Read { .. } => return None,
                };
                targets.iter().find(|t| t.addr == addr).map(|t| {
                    (
                        TaggedWord::from_payload(t.expected).raw(),
                        TaggedWord::from_payload(t.desired).raw(),
                    )
                })
            })
        })
        .collect();
    WordSymbols { per_slot }
}

/// Recovers a crashed image and checks the oracle against it. Returns the
/// violation reason, if any.
fn judge_crash_image(
    scenario: &Scenario,
    durable: Vec<u64>,
    statuses: &[OpStatus],
    initial: &[u64],
) -> Result<Option<String>> {
    let layout = scenario.layout()?;
    let heap = SimHeap::from_durable(layout.clone(), durable);
    if let Err(e) = recover(&heap) {
        return Ok(Some(format!("recovery failed: {e}")));
    }
    let payloads: Vec<u64> = (0..layout.word_capacity)
        .map(|w| TaggedWord(heap.load(layout.word_cell(WordAddress(w)))).payload())
        .collect();
    let ops = scenario.oracle_ops();
    let (required, allowed) = masks(statuses);
    if find_witness(initial, &ops, required, allowed, &payloads)?.is_none() {
        return Ok(Some(format!(
            "durable image {payloads:?} unexplainable for statuses {statuses:?}"
        )));
    }
    Ok(None)
}

/// Exhaustively explores every reachable execution state, evaluating a
/// crash with every eviction subset at each one.
pub fn explore(scenario: &Scenario, config: &ExploreConfig) -> Result<ExploreReport> {
    let mut report = ExploreReport::default();
    let initial: Vec<u64> = (0..scenario.word_count)
        .map(|w| scenario.initial_payload(WordAddress(w)))
        .collect();
    let syms = scenario.observe.map(|a| word_symbols(scenario, a));
    let machine = config.machine;

    let root = HarnessState::new(scenario)?;
    let mut visited = HashSet::new();
    let mut crash_seen: HashSet<(Vec<u64>, Vec<OpStatus>)> = HashSet::new();
    let mut stack: Vec<(HarnessState, Vec<usize>)> = vec![(root, Vec::new())];

    while let Some((state, path)) = stack.pop() {
        if !visited.insert(state.key()) {
            continue;
        }
        report.states_explored += 1;
        if report.states_explored as usize > config.max_states {
            return Err(Error::InstanceTooLarge(format!(
                "state graph exceeds {} states",
                config.max_states
            )));
        }

        let statuses = state.statuses(scenario);
        let dirty = state.heap.dirty_lines();
        if dirty.len() > config.max_dirty_lines {
            return Err(Error::InstanceTooLarge(format!(
                "{} dirty lines exceeds eviction-subset cap {}",
                dirty.len(),
                config.max_dirty_lines
            )));
        }

        // crash at this point with every eviction subset
        for mask in 0..(1u64 << dirty.len()) {
            let evict: Vec<u64> = dirty
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &l)| l)
                .collect();
            let durable = state.heap.durable_after_crash(&evict)?;
            if !crash_seen.insert((durable.clone(), statuses.clone())) {
                continue;
            }
            report.crash_images_checked += 1;
            if let Some(reason) = judge_crash_image(scenario, durable, &statuses, &initial)? {
                report.violations.push(Violation {
                    schedule: CrashSchedule {
                        interleaving: path.clone(),
                        crash_step: Some(path.len()),
                        eviction_lines: evict,
                    },
                    reason,
                });
            }
        }

        // state-machine conformance of crash-time eviction: writing the
        // observed word's dirty line back moves durable to the cache value
        if let (Some(m), Some(s), Some(addr)) = (machine, &syms, scenario.observe) {
            let layout = state.heap.layout();
            let line = layout.line_of(layout.word_cell(addr));
            if dirty.contains(&line) {
                let (cache, durable, states) = state.observe_triple(scenario).unwrap();
                let before = classify_row(m, cache, durable, &states, s);
                let after = classify_row(m, cache, cache, &states, s);
                report.transitions_checked += 1;
                if before.is_empty() || after.is_empty() || !transition_allowed(m, &before, &after)
                {
                    report.violations.push(Violation {
                        schedule: CrashSchedule {
                            interleaving: path.clone(),
                            crash_step: Some(path.len()),
                            eviction_lines: vec![line],
                        },
                        reason: format!(
                            "eviction transition {before:?} -> {after:?} not allowed"
                        ),
                    });
                }
            }
        }

        if state.all_done() {
            report.terminal_states += 1;
            // live verdict: exactly the succeeded ops must explain the
            // cache view
            let layout = state.heap.layout().clone();
            let live: Vec<u64> = (0..layout.word_capacity)
                .map(|w| {
                    TaggedWord(state.heap.cache_value(layout.word_cell(WordAddress(w)))).payload()
                })
                .collect();
            let ops = scenario.oracle_ops();
            let (required, _) = masks(&statuses);
            if find_witness(&initial, &ops, required, required, &live)?.is_none() {
                report.violations.push(Violation {
                    schedule: CrashSchedule {
                        interleaving: path.clone(),
                        crash_step: None,
                        eviction_lines: vec![],
                    },
                    reason: format!("live image {live:?} unexplainable by committed ops"),
                });
            }
            continue;
        }

        if state.deadlocked() {
            report.violations.push(Violation {
                schedule: CrashSchedule {
                    interleaving: path.clone(),
                    crash_step: None,
                    eviction_lines: vec![],
                },
                reason: "deadlock: live workers all blocked".into(),
            });
            continue;
        }

        for w in 0..scenario.workers.len() {
            if !state.schedulable(w) {
                continue;
            }
            let mut next = state.clone();
            let before = machine.and_then(|_| state.observe_triple(scenario));
            next.step(w)?;
            if let (Some(m), Some(s), Some((c0, d0, st0))) = (machine, &syms, before) {
                let (c1, d1, st1) = next.observe_triple(scenario).unwrap();
                if (c0, d0, &st0) != (c1, d1, &st1) {
                    let from = classify_row(m, c0, d0, &st0, s);
                    let to = classify_row(m, c1, d1, &st1, s);
                    report.transitions_checked += 1;
                    if from.is_empty() || to.is_empty() || !transition_allowed(m, &from, &to) {
                        let mut inter = path.clone();
                        inter.push(w);
                        report.violations.push(Violation {
                            schedule: CrashSchedule {
                                interleaving: inter,
                                crash_step: None,
                                eviction_lines: vec![],
                            },
                            reason: format!(
                                "step transition {from:?} -> {to:?} (worker {w}) not allowed"
                            ),
                        });
                    }
                }
            }
            let mut next_path = path.clone();
            next_path.push(w);
            stack.push((next, next_path));
        }
    }

    Ok(report)
}

/// Draws one random replayable schedule: a random full interleaving, a
/// uniform crash point (choosing the very end means no crash), and a
/// random subset of the lines dirty at that point.
pub fn random_schedule(scenario: &Scenario, seed: u64) -> Result<CrashSchedule> {
    random_schedule_with(scenario, &mut StdRng::seed_from_u64(seed))
}

fn random_schedule_with(scenario: &Scenario, rng: &mut StdRng) -> Result<CrashSchedule> {
    // walk once to completion to learn a full interleaving
    let mut state = HarnessState::new(scenario)?;
    let mut interleaving = Vec::new();
    while !state.all_done() {
        let ready: Vec<usize> = (0..scenario.workers.len())
            .filter(|&w| state.schedulable(w))
            .collect();
        if ready.is_empty() {
            return Err(Error::Harness("deadlock: live workers all blocked".into()));
        }
        let w = ready[rng.random_range(0..ready.len())];
        state.step(w)?;
        interleaving.push(w);
    }

    let cut = rng.random_range(0..=interleaving.len());
    if cut == interleaving.len() {
        return Ok(CrashSchedule {
            interleaving,
            crash_step: None,
            eviction_lines: vec![],
        });
    }
    // replay the prefix to learn which lines are dirty there
    let mut prefix = HarnessState::new(scenario)?;
    for &w in &interleaving[..cut] {
        prefix.step(w)?;
    }
    let eviction_lines: Vec<u64> = prefix
        .heap
        .dirty_lines()
        .into_iter()
        .filter(|_| rng.random::<bool>())
        .collect();
    Ok(CrashSchedule {
        interleaving,
        crash_step: Some(cut),
        eviction_lines,
    })
}

/// Replays `samples` randomly drawn schedules (random interleaving, crash
/// point, and eviction subset) through [`run_schedule`].
pub fn sample_schedules(scenario: &Scenario, samples: u64, seed: u64) -> Result<ExploreReport> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut report = ExploreReport::default();

    for _ in 0..samples {
        let schedule = match random_schedule_with(scenario, &mut rng) {
            Ok(s) => s,
            Err(Error::Harness(reason)) => {
                report.violations.push(Violation {
                    schedule: CrashSchedule {
                        interleaving: vec![],
                        crash_step: None,
                        eviction_lines: vec![],
                    },
                    reason,
                });
                continue;
            }
            Err(e) => return Err(e),
        };

        let verdict = run_schedule(scenario, &schedule)?;
        report.crash_images_checked += 1;
        if !verdict.oracle_ok {
            report.violations.push(Violation {
                schedule,
                reason: format!(
                    "durable image {:?} unexplainable for statuses {:?}",
                    verdict.durable_payloads, verdict.statuses
                ),
            });
        }
    }

    Ok(report)
}
