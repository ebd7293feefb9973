//! Smoke tests driving the compiled binary end to end.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pmwcas"))
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["bench", "create-heap", "recover", "modelcheck"] {
        assert!(text.contains(sub), "--help missing subcommand {sub}");
    }
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = bin().args(["bench", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn modelcheck_exhaustive_passes() {
    let out = bin()
        .args([
            "modelcheck",
            "--variant",
            "nodf",
            "--workers",
            "2",
            "--targets",
            "1",
            "--words",
            "4",
            "--report",
            "json",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
    assert!(report["crash_images_checked"].as_u64().unwrap() > 0);
}

#[test]
fn modelcheck_sampling_is_deterministic() {
    let run = || {
        bin()
            .args([
                "modelcheck", "--variant", "df", "--workers", "2", "--targets", "2", "--words",
                "6", "--samples", "50", "--seed", "9", "--report", "json",
            ])
            .output()
            .unwrap()
    };
    let a = run();
    let b = run();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn create_heap_then_recover_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("heap.pm");
    let out = bin()
        .args([
            "create-heap",
            "--path",
            path.to_str().unwrap(),
            "--words",
            "64",
            "--block-size",
            "64",
            "--workers",
            "2",
            "--variant",
            "df",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(path.exists());

    let out = bin()
        .args(["recover", "--path", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    // a clean-shutdown notice may precede the JSON report
    let text = String::from_utf8(out.stdout).unwrap();
    let json = &text[text.find('{').unwrap()..];
    let report: serde_json::Value = serde_json::from_str(json).unwrap();
    assert_eq!(report["rolled_forward"].as_u64(), Some(0));
}

#[test]
fn recover_missing_file_is_io_error() {
    let out = bin()
        .args(["recover", "--path", "/nonexistent/heap.pm"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bench_dram_emits_csv_with_header() {
    let out = bin()
        .args([
            "bench",
            "--algorithm",
            "nodf",
            "--threads",
            "2",
            "--targets",
            "2",
            "--words",
            "128",
            "--block-size",
            "64",
            "--max-ops",
            "200",
            "--timeout-s",
            "5",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("algorithm,threads,k,words,alpha,block_size,"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("nodf,2,2,128,"));
}

#[test]
fn bench_sweep_emits_one_row_per_cell() {
    let out = bin()
        .args([
            "bench",
            "--threads",
            "1",
            "--targets",
            "1",
            "--words",
            "64",
            "--block-size",
            "64",
            "--max-ops",
            "50",
            "--timeout-s",
            "5",
            "--sweep",
            "algorithm=df,nodf",
            "--sweep",
            "targets=1,2",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5, "header + 4 sweep cells:\n{text}");
}

#[test]
fn bench_real_backend_persists_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.pm");
    let run = || {
        bin()
            .args([
                "bench",
                "--backend",
                "real",
                "--path",
                path.to_str().unwrap(),
                "--threads",
                "1",
                "--targets",
                "1",
                "--words",
                "64",
                "--block-size",
                "64",
                "--max-ops",
                "100",
                "--timeout-s",
                "5",
                "--format",
                "json",
            ])
            .output()
            .unwrap()
    };
    let a = run();
    assert!(
        a.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&a.stderr)
    );
    // second run reopens the same file (clean shutdown marker set)
    let b = run();
    assert!(
        b.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&b.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&b.stdout).unwrap();
    assert_eq!(report[0]["sum_check_ok"].as_bool(), Some(true));
}
