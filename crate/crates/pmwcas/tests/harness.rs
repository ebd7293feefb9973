//! End-to-end harness scenarios: reads under contention, crash placement
//! around the finalize stores, and schedule replay determinism.

use pmwcas::harness::{run_schedule, CrashSchedule, OpSpec, Scenario, TargetSpec};
use pmwcas::{TaggedWord, Variant, WordAddress};

fn one_writer_one_reader(variant: Variant) -> Scenario {
    Scenario {
        variant,
        word_count: 4,
        block_size: 64,
        initial: vec![10, 0, 0, 0],
        workers: vec![
            vec![OpSpec::Pmwcas {
                targets: vec![TargetSpec::new(0, 10, 11)],
            }],
            vec![OpSpec::Read {
                addr: WordAddress(0),
            }],
        ],
        observe: Some(WordAddress(0)),
    }
}

#[test]
fn read_after_clean_store_sees_new_payload() {
    let s = one_writer_one_reader(Variant::NoDirtyFlag);
    // writer: prepare, embed, persist-embed, commit, store-clean; then the
    // read lands on the clean value before the writer's final persist
    let v = run_schedule(
        &s,
        &CrashSchedule {
            interleaving: vec![0, 0, 0, 0, 0, 1, 0, 0],
            crash_step: None,
            eviction_lines: vec![],
        },
    )
    .unwrap();
    assert!(v.oracle_ok);
    assert_eq!(v.read_values, vec![Some(TaggedWord::from_payload(11))]);
}

#[test]
fn read_before_embed_sees_old_payload() {
    let s = one_writer_one_reader(Variant::NoDirtyFlag);
    let v = run_schedule(
        &s,
        &CrashSchedule {
            interleaving: vec![0, 1, 0, 0, 0, 0, 0, 0],
            crash_step: None,
            eviction_lines: vec![],
        },
    )
    .unwrap();
    assert!(v.oracle_ok);
    assert_eq!(v.read_values, vec![Some(TaggedWord::from_payload(10))]);
}

#[test]
fn read_is_blocked_while_descriptor_is_embedded() {
    let s = one_writer_one_reader(Variant::NoDirtyFlag);
    // after the embed (step 2) word 0 holds a descriptor; the read cannot
    // be scheduled, so replaying it is a divergence
    let r = run_schedule(
        &s,
        &CrashSchedule {
            interleaving: vec![0, 0, 1],
            crash_step: None,
            eviction_lines: vec![],
        },
    );
    assert!(r.is_err());
}

#[test]
fn crash_between_final_store_and_persist_rolls_forward() {
    let s = one_writer_one_reader(Variant::NoDirtyFlag);
    // crash after store-clean but before its persist, evicting nothing:
    // the durable word still holds the descriptor, the durable state is
    // Succeeded, so recovery must roll the word forward to 11
    let v = run_schedule(
        &s,
        &CrashSchedule {
            interleaving: vec![0; 5],
            crash_step: Some(5),
            eviction_lines: vec![],
        },
    )
    .unwrap();
    assert!(v.oracle_ok);
    assert_eq!(v.recovery.rolled_forward, 1);
    assert_eq!(v.durable_payloads[0], 11);
}

#[test]
fn crash_with_durable_dirty_flag_is_cleared_by_recovery() {
    let s = one_writer_one_reader(Variant::DirtyFlag);
    // writer: prepare, embed, persist-embed, commit, store-dirty,
    // persist-dirty; crash leaves the dirty-flagged new value durable
    let v = run_schedule(
        &s,
        &CrashSchedule {
            interleaving: vec![0; 6],
            crash_step: Some(6),
            eviction_lines: vec![],
        },
    )
    .unwrap();
    assert!(v.oracle_ok);
    assert_eq!(v.recovery.dirty_flags_cleared, 1);
    assert_eq!(v.durable_payloads[0], 11);
}

#[test]
fn schedule_round_trips_through_json_and_replays_identically() {
    let s = one_writer_one_reader(Variant::DirtyFlag);
    let sched = CrashSchedule {
        interleaving: vec![0, 0, 0, 0],
        crash_step: Some(4),
        eviction_lines: vec![],
    };
    let json = serde_json::to_string(&sched).unwrap();
    let back: CrashSchedule = serde_json::from_str(&json).unwrap();
    assert_eq!(back, sched);
    let a = serde_json::to_vec(&run_schedule(&s, &sched).unwrap()).unwrap();
    let b = serde_json::to_vec(&run_schedule(&s, &back).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn scenario_round_trips_through_json() {
    let s = one_writer_one_reader(Variant::NoDirtyFlag);
    let json = serde_json::to_string(&s).unwrap();
    let back: Scenario = serde_json::from_str(&json).unwrap();
    assert_eq!(back, s);
}
