//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line (run with `-- --nocapture` to see them all).

use std::time::Instant;

use pmwcas::bench::{Algorithm, BenchConfig};
use pmwcas::harness::{
    crashed_heap, explore, random_schedule, ExploreConfig, Machine, OpSpec, Scenario, TargetSpec,
};
use pmwcas::zipf::ZipfSampler;
use pmwcas::{
    pcas, pmwcas, recover, Descriptor, SimHeap, TaggedWord, TargetEntry, Variant,
    WordAddress,
};
use rand::rngs::StdRng;
use rand::SeedableRng;

fn verdict(n: u32, name: &str, pass: bool) {
    println!(
        "acceptance {n} ({name}): {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "acceptance {n} ({name}) failed");
}

/// Two workers contending on word 0 inside a 4-word heap; each worker's
/// remaining k-1 targets are private.
fn contention_scenario(variant: Variant, k: usize) -> Scenario {
    let mk = |slot: u64| {
        let mut targets = vec![TargetSpec::new(0, 10, 100 + slot)];
        for i in 1..k as u64 {
            targets.push(TargetSpec::new(slot + 2 * i, 0, 200 + slot * 10 + i));
        }
        OpSpec::Pmwcas { targets }
    };
    let mut initial = vec![0u64; 4];
    initial[0] = 10;
    Scenario {
        variant,
        word_count: 4,
        block_size: 64,
        initial,
        workers: vec![vec![mk(0)], vec![mk(1)]],
        observe: Some(WordAddress(0)),
    }
}

fn pcas_scenario() -> Scenario {
    Scenario {
        variant: Variant::DirtyFlag,
        word_count: 4,
        block_size: 64,
        initial: vec![10, 0, 0, 0],
        workers: vec![
            vec![OpSpec::Pcas {
                target: TargetSpec::new(0, 10, 11),
            }],
            vec![OpSpec::Pcas {
                target: TargetSpec::new(0, 11, 12),
            }],
        ],
        observe: Some(WordAddress(0)),
    }
}

fn machine_for(variant: Variant) -> Machine {
    match variant {
        Variant::DirtyFlag => Machine::DirtyFlag,
        Variant::NoDirtyFlag => Machine::NoDirtyFlag,
    }
}

#[test]
fn acceptance_1_crash_consistency_exhaustion() {
    let start = Instant::now();
    let mut pass = true;
    for variant in [Variant::DirtyFlag, Variant::NoDirtyFlag] {
        for k in [1usize, 2] {
            let s = contention_scenario(variant, k);
            let r = explore(&s, &ExploreConfig::default()).unwrap();
            if !r.ok() || r.crash_images_checked == 0 || r.terminal_states == 0 {
                eprintln!("{variant:?} k={k}: {:?}", r.violations);
                pass = false;
            }
        }
    }
    let r = explore(&pcas_scenario(), &ExploreConfig::default()).unwrap();
    if !r.ok() || r.crash_images_checked == 0 {
        eprintln!("pcas: {:?}", r.violations);
        pass = false;
    }
    pass &= start.elapsed().as_secs() < 300;
    verdict(1, "crash-consistency exhaustion", pass);
}

#[test]
fn acceptance_2_state_machine_conformance() {
    let mut pass = true;
    for variant in [Variant::DirtyFlag, Variant::NoDirtyFlag] {
        for k in [1usize, 2] {
            let s = contention_scenario(variant, k);
            let cfg = ExploreConfig {
                machine: Some(machine_for(variant)),
                ..Default::default()
            };
            let r = explore(&s, &cfg).unwrap();
            if !r.ok() || r.transitions_checked == 0 {
                eprintln!("{variant:?} k={k}: {:?}", r.violations);
                pass = false;
            }
        }
    }
    let cfg = ExploreConfig {
        machine: Some(Machine::Pcas),
        ..Default::default()
    };
    let r = explore(&pcas_scenario(), &cfg).unwrap();
    if !r.ok() || r.transitions_checked == 0 {
        eprintln!("pcas: {:?}", r.violations);
        pass = false;
    }
    verdict(2, "state-machine conformance", pass);
}

/// Runs one conflict-free k-target operation on a fresh simulated heap and
/// returns its stats.
fn solo_op(variant: Variant, k: usize) -> pmwcas::OpStats {
    let layout = pmwcas::HeapLayout::new(16, 64, 1, variant).unwrap();
    let heap = SimHeap::new(layout.clone());
    let entries: Vec<TargetEntry> = (0..k as u64)
        .map(|i| {
            TargetEntry::new(
                WordAddress(i),
                TaggedWord::from_payload(0),
                TaggedWord::from_payload(i + 1),
            )
            .unwrap()
        })
        .collect();
    let desc = Descriptor::new(&layout, 0, entries).unwrap();
    let (ok, stats) = pmwcas(&heap, desc, variant);
    assert!(ok);
    stats
}

#[test]
fn acceptance_3_cas_and_dirty_store_accounting() {
    let mut pass = true;
    for k in 1..=8usize {
        let nodf = solo_op(Variant::NoDirtyFlag, k);
        let df = solo_op(Variant::DirtyFlag, k);
        if nodf.cas_count != 2 * k as u64 || df.cas_count != 2 * k as u64 {
            eprintln!("k={k}: cas nodf={} df={}", nodf.cas_count, df.cas_count);
            pass = false;
        }
        if nodf.dirty_store_count != 0 || df.dirty_store_count != k as u64 {
            eprintln!("k={k}: dirty stores df={}", df.dirty_store_count);
            pass = false;
        }
        if df.flush_count != nodf.flush_count + k as u64 {
            eprintln!(
                "k={k}: flushes nodf={} df={}",
                nodf.flush_count, df.flush_count
            );
            pass = false;
        }
    }
    verdict(3, "2k CAS accounting", pass);
}

#[test]
fn acceptance_4_flush_counts() {
    let mut pass = true;

    let layout = pmwcas::HeapLayout::new(4, 64, 1, Variant::DirtyFlag).unwrap();
    let heap = SimHeap::new(layout);
    let (ok, stats) = pcas(
        &heap,
        WordAddress(0),
        TaggedWord::from_payload(0),
        TaggedWord::from_payload(1),
    )
    .unwrap();
    if !ok || stats.flush_count != 1 {
        eprintln!("pcas: ok={ok} flushes={}", stats.flush_count);
        pass = false;
    }

    let nodf = solo_op(Variant::NoDirtyFlag, 1);
    if nodf.flush_count != 4 || nodf.target_flush_count != 2 {
        eprintln!(
            "nodf k=1: flushes={} target flushes={}",
            nodf.flush_count, nodf.target_flush_count
        );
        pass = false;
    }
    verdict(4, "per-success flush counts", pass);
}

#[test]
fn acceptance_5_dram_stress_audits() {
    let start = Instant::now();
    let mut pass = true;
    for run in 0..20u64 {
        let config = BenchConfig {
            algorithm: Algorithm::Nodf,
            threads: 8,
            targets: 3,
            words: 1024,
            alpha: 1.0,
            seed: 1000 + run,
            timeout_s: 60.0,
            max_ops: 12_500, // per thread: 100_000 total
            ..Default::default()
        };
        let report = pmwcas::bench::run_dram(&config).unwrap();
        if report.succeeded != 100_000 || !report.sum_check_ok || !report.tag_clean_ok {
            eprintln!(
                "run {run}: succeeded={} sum_ok={} tags_ok={}",
                report.succeeded, report.sum_check_ok, report.tag_clean_ok
            );
            pass = false;
        }
    }
    pass &= start.elapsed().as_secs() < 60;
    verdict(5, "dram stress sum and tag audits", pass);
}

#[test]
fn acceptance_6_zipf_against_harmonic_oracle() {
    let sampler = ZipfSampler::new(1.0, 1000).unwrap();
    let mut rng = StdRng::seed_from_u64(99);
    let n = 1_000_000u64;
    let mut rank1 = 0u64;
    for _ in 0..n {
        if sampler.sample(&mut rng) == 1 {
            rank1 += 1;
        }
    }
    let empirical = rank1 as f64 / n as f64;
    // oracle: Pr(rank 1) = 1 / (1^alpha * H_{1000,alpha})
    let harmonic: f64 = (1..=1000u64).map(|r| 1.0 / r as f64).sum();
    let exact = 1.0 / harmonic;
    let rel = (empirical - exact).abs() / exact;
    let pass = rel < 0.05 && (sampler.probability(1) - exact).abs() < 1e-12;
    if !pass {
        eprintln!("empirical={empirical} exact={exact} rel={rel}");
    }
    verdict(6, "zipf sampler vs harmonic oracle", pass);
}

#[test]
fn acceptance_7_directional_performance() {
    let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
    if hw < 8 {
        println!("acceptance 7 (directional performance): SKIP ({hw} hardware threads < 8)");
        return;
    }
    let base = BenchConfig {
        algorithm: Algorithm::Nodf,
        threads: 8,
        targets: 3,
        words: 1024,
        alpha: 1.0,
        timeout_s: 2.0,
        max_ops: u64::MAX,
        ..Default::default()
    };
    let run = |cfg: &BenchConfig| pmwcas::bench::run_dram(cfg).unwrap().throughput_ops_per_s;

    let nodf = run(&base);
    let df = run(&BenchConfig {
        algorithm: Algorithm::Df,
        ..base.clone()
    });
    let small_block = run(&BenchConfig {
        block_size: 8,
        ..base.clone()
    });
    let big_block = run(&BenchConfig {
        block_size: 64,
        ..base.clone()
    });

    let mut pass = true;
    if nodf < 1.1 * df {
        eprintln!("nodf={nodf} df={df}: expected nodf >= 1.1x df");
        pass = false;
    }
    if small_block > 0.8 * big_block {
        eprintln!("block8={small_block} block64={big_block}: expected block8 <= 0.8x block64");
        pass = false;
    }
    verdict(7, "directional performance", pass);
}

#[test]
fn acceptance_8_recovery_idempotence() {
    let mut pass = true;
    let mut produced = 0u32;
    let mut seed = 0u64;
    while produced < 1000 {
        let variant = if seed % 2 == 0 {
            Variant::DirtyFlag
        } else {
            Variant::NoDirtyFlag
        };
        let k = 1 + (seed as usize / 2) % 2;
        let scenario = contention_scenario(variant, k);
        let schedule = random_schedule(&scenario, seed).unwrap();
        seed += 1;
        if schedule.crash_step.is_none() {
            continue; // drew a crash-free schedule; try the next seed
        }
        produced += 1;

        let heap = crashed_heap(&scenario, &schedule).unwrap();
        recover(&heap).unwrap();
        let image1 = heap.durable_image();
        let second = recover(&heap).unwrap();
        if !second.touched_nothing() || heap.durable_image() != image1 {
            eprintln!("schedule {schedule:?}: second recovery not idempotent");
            pass = false;
        }
    }
    verdict(8, "recovery idempotence over 1000 crashed heaps", pass);
}
