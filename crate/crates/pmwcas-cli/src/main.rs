//! Command-line front end: heap creation, recovery, crash model checking,
//! and the Zipf increment benchmark.
//!
//! Exit codes: 0 success, 1 usage error, 2 invariant violation
//! (model-check counterexample, failed audit, corrupted heap), 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pmwcas::bench::{self, Algorithm, BenchConfig, BenchReport};
use pmwcas::harness::{
    explore, sample_schedules, ExploreConfig, ExploreReport, Machine, OpSpec, Scenario, TargetSpec,
};
use pmwcas::pmem::{create_heap_file, open_heap_file, set_clean_shutdown};
use pmwcas::zipf::OrderPolicy;
use pmwcas::{recover, Error, HeapLayout, Memory, SharedHeap, Variant, WordAddress};

const EXIT_USAGE: u8 = 1;
const EXIT_VIOLATION: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "pmwcas",
    about = "Persistent multi-word CAS: benchmark, heap tools, crash model checker"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create a zero-initialized heap file.
    CreateHeap(CreateHeapArgs),
    /// Replay descriptors in a heap file and restore a consistent image.
    Recover(RecoverArgs),
    /// Model-check crash consistency on the simulated backend.
    Modelcheck(ModelcheckArgs),
    /// Run the Zipf-skewed multi-word increment benchmark.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Df,
    Nodf,
}

impl VariantArg {
    fn variant(self) -> Variant {
        match self {
            VariantArg::Df => Variant::DirtyFlag,
            VariantArg::Nodf => Variant::NoDirtyFlag,
        }
    }
}

#[derive(Args)]
struct CreateHeapArgs {
    /// Heap file to create (overwritten if present).
    #[arg(long)]
    path: PathBuf,
    /// Number of target words.
    #[arg(long, default_value_t = 1_000_000)]
    words: u64,
    /// Bytes per word block (power of two, >= 8).
    #[arg(long, default_value_t = 256)]
    block_size: u32,
    /// Descriptor slots (one per worker).
    #[arg(long, default_value_t = 8)]
    workers: usize,
    #[arg(long, value_enum, default_value = "nodf")]
    variant: VariantArg,
}

#[derive(Args)]
struct RecoverArgs {
    /// Heap file to recover.
    #[arg(long)]
    path: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum McVariantArg {
    Df,
    Nodf,
    Pcas,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Args)]
struct ModelcheckArgs {
    #[arg(long, value_enum)]
    variant: McVariantArg,
    /// Number of virtual workers.
    #[arg(long, default_value_t = 2)]
    workers: usize,
    /// Targets per operation (ignored for pcas).
    #[arg(long, default_value_t = 2)]
    targets: usize,
    /// Heap word count.
    #[arg(long, default_value_t = 4)]
    words: u64,
    /// Explore every reachable state exhaustively (default).
    #[arg(long, conflicts_with = "samples")]
    exhaustive: bool,
    /// Replay this many randomly drawn schedules instead.
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value = "text")]
    report: ReportFormat,
    /// Where to write a replayable counterexample on violation.
    #[arg(long, default_value = "counterexample.json")]
    counterexample: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Index,
    ContendedFirst,
}

impl OrderArg {
    fn policy(self) -> OrderPolicy {
        match self {
            OrderArg::Index => OrderPolicy::Index,
            OrderArg::ContendedFirst => OrderPolicy::ContendedFirst,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Df,
    Nodf,
    Pcas,
}

impl AlgorithmArg {
    fn algorithm(self) -> Algorithm {
        match self {
            AlgorithmArg::Df => Algorithm::Df,
            AlgorithmArg::Nodf => Algorithm::Nodf,
            AlgorithmArg::Pcas => Algorithm::Pcas,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Dram,
    Real,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "nodf")]
    algorithm: AlgorithmArg,
    #[arg(long, default_value_t = 8)]
    threads: usize,
    /// Words per operation (k).
    #[arg(long, default_value_t = 4)]
    targets: usize,
    #[arg(long, default_value_t = 1_000_000)]
    words: u64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 256)]
    block_size: u32,
    #[arg(long, default_value_t = 10.0)]
    timeout_s: f64,
    /// Per-thread success budget.
    #[arg(long, default_value_t = 1_000_000)]
    max_ops: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value = "dram")]
    backend: BackendArg,
    /// Heap file for the real backend (created if missing, recovered if
    /// its clean-shutdown marker is absent).
    #[arg(long)]
    path: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "index")]
    order: OrderArg,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
    /// Output file (defaults to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parameter sweep, e.g. --sweep threads=1,2,4 --sweep alpha=0,1.
    /// Runs the cross product, one report per cell. Keys: algorithm,
    /// threads, targets, words, alpha, block-size, order, seed.
    #[arg(long)]
    sweep: Vec<String>,
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Contract(_) | Error::InstanceTooLarge(_) => EXIT_USAGE,
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        _ => EXIT_VIOLATION,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::CreateHeap(args) => cmd_create_heap(&args),
        Cmd::Recover(args) => cmd_recover(&args),
        Cmd::Modelcheck(args) => cmd_modelcheck(&args),
        Cmd::Bench(args) => cmd_bench(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn cmd_create_heap(args: &CreateHeapArgs) -> Result<u8, Error> {
    let layout = HeapLayout::new(
        args.words,
        args.block_size,
        args.workers,
        args.variant.variant(),
    )?;
    let heap = create_heap_file(&args.path, &layout)?;
    heap.sync()?;
    println!(
        "created {} ({} bytes): {} words x {}-byte blocks, {} worker slots, variant {:?}",
        args.path.display(),
        layout.file_len(),
        layout.word_capacity,
        layout.block_size,
        layout.worker_slots,
        layout.variant,
    );
    Ok(0)
}

fn cmd_recover(args: &RecoverArgs) -> Result<u8, Error> {
    let (heap, header) = open_heap_file(&args.path)?;
    if header.clean_shutdown {
        println!("clean shutdown marker present; verifying anyway");
    }
    let report = recover(&heap)?;
    heap.sync()?;
    set_clean_shutdown(&args.path, true)?;
    println!("{}", to_json(&report)?);
    Ok(0)
}

/// Builds the scripted contention scenario the model checker runs: every
/// worker contends on word 0 (plus private words for multi-target ops)
/// with distinct desired values so outcomes are attributable.
fn modelcheck_scenario(args: &ModelcheckArgs) -> Result<Scenario, Error> {
    if args.workers == 0 {
        return Err(Error::Config("workers must be nonzero".into()));
    }
    let base = 10u64;
    let mut initial = vec![0u64; args.words as usize];
    if initial.is_empty() {
        return Err(Error::Config("words must be nonzero".into()));
    }
    for (i, v) in initial.iter_mut().enumerate() {
        *v = base + i as u64;
    }

    let workers: Vec<Vec<OpSpec>> = match args.variant {
        McVariantArg::Pcas => (0..args.workers)
            .map(|w| {
                // a chain: worker w expects the value left by worker w-1
                vec![OpSpec::Pcas {
                    target: TargetSpec::new(0, base + w as u64 * 100, base + (w as u64 + 1) * 100),
                }]
            })
            .collect(),
        _ => {
            if args.targets == 0 || args.targets as u64 > args.words {
                return Err(Error::Config(
                    "targets must be in 1..=words for the scenario".into(),
                ));
            }
            (0..args.workers)
                .map(|w| {
                    let mut targets = vec![TargetSpec::new(0, base, 1000 + w as u64)];
                    for i in 1..args.targets {
                        // wrap into the word space, skipping word 0
                        let addr = 1 + ((w * (args.targets - 1) + i - 1) as u64
                            % (args.words - 1).max(1));
                        targets.push(TargetSpec::new(
                            addr,
                            base + addr,
                            2000 + (w as u64) * 10 + i as u64,
                        ));
                    }
                    vec![OpSpec::Pmwcas { targets }]
                })
                .collect()
        }
    };

    // pcas chain starts from base*? — word 0 starts at the chain head
    if matches!(args.variant, McVariantArg::Pcas) {
        initial[0] = base;
    }

    let variant = match args.variant {
        McVariantArg::Df | McVariantArg::Pcas => Variant::DirtyFlag,
        McVariantArg::Nodf => Variant::NoDirtyFlag,
    };
    Ok(Scenario {
        variant,
        word_count: args.words,
        block_size: 64,
        initial,
        workers,
        observe: Some(WordAddress(0)),
    })
}

#[derive(Serialize)]
struct Counterexample<'a> {
    scenario: &'a Scenario,
    schedule: &'a pmwcas::harness::CrashSchedule,
    reason: &'a str,
}

fn cmd_modelcheck(args: &ModelcheckArgs) -> Result<u8, Error> {
    let scenario = modelcheck_scenario(args)?;
    let machine = match args.variant {
        McVariantArg::Df => Machine::DirtyFlag,
        McVariantArg::Nodf => Machine::NoDirtyFlag,
        McVariantArg::Pcas => Machine::Pcas,
    };
    let report: ExploreReport = match args.samples {
        Some(n) => sample_schedules(&scenario, n, args.seed)?,
        None => explore(
            &scenario,
            &ExploreConfig {
                machine: Some(machine),
                ..Default::default()
            },
        )?,
    };

    match args.report {
        ReportFormat::Json => println!("{}", to_json(&report)?),
        ReportFormat::Text => {
            println!(
                "states explored: {}\nterminal states: {}\ncrash images checked: {}\nstate-machine transitions checked: {}\nviolations: {}",
                report.states_explored,
                report.terminal_states,
                report.crash_images_checked,
                report.transitions_checked,
                report.violations.len()
            );
            for v in &report.violations {
                println!("  VIOLATION: {}", v.reason);
            }
        }
    }

    if let Some(v) = report.violations.first() {
        let ce = Counterexample {
            scenario: &scenario,
            schedule: &v.schedule,
            reason: &v.reason,
        };
        std::fs::write(&args.counterexample, to_json(&ce)?)?;
        eprintln!(
            "counterexample written to {}",
            args.counterexample.display()
        );
        return Ok(EXIT_VIOLATION);
    }
    Ok(0)
}

fn base_config(args: &BenchArgs) -> BenchConfig {
    BenchConfig {
        algorithm: args.algorithm.algorithm(),
        threads: args.threads,
        targets: args.targets,
        words: args.words,
        alpha: args.alpha,
        block_size: args.block_size,
        order: args.order.policy(),
        seed: args.seed,
        timeout_s: args.timeout_s,
        max_ops: args.max_ops,
    }
}

fn apply_sweep_value(config: &mut BenchConfig, key: &str, value: &str) -> Result<(), Error> {
    let bad = |what: &str| Error::Config(format!("bad sweep value {value:?} for {what}"));
    match key {
        "algorithm" => {
            config.algorithm = match value {
                "df" => Algorithm::Df,
                "nodf" => Algorithm::Nodf,
                "pcas" => Algorithm::Pcas,
                _ => return Err(bad("algorithm")),
            }
        }
        "threads" => config.threads = value.parse().map_err(|_| bad("threads"))?,
        "targets" | "k" => config.targets = value.parse().map_err(|_| bad("targets"))?,
        "words" => config.words = value.parse().map_err(|_| bad("words"))?,
        "alpha" => config.alpha = value.parse().map_err(|_| bad("alpha"))?,
        "block-size" | "block_size" => {
            config.block_size = value.parse().map_err(|_| bad("block-size"))?
        }
        "seed" => config.seed = value.parse().map_err(|_| bad("seed"))?,
        "order" => {
            config.order = match value {
                "index" => OrderPolicy::Index,
                "contended-first" => OrderPolicy::ContendedFirst,
                _ => return Err(bad("order")),
            }
        }
        _ => return Err(Error::Config(format!("unknown sweep key {key:?}"))),
    }
    Ok(())
}

/// Expands `--sweep key=v1,v2` clauses into the cross product of configs.
fn sweep_configs(base: &BenchConfig, clauses: &[String]) -> Result<Vec<BenchConfig>, Error> {
    let mut configs = vec![base.clone()];
    for clause in clauses {
        let (key, list) = clause
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("sweep clause {clause:?} is not key=v1,v2")))?;
        let values: Vec<&str> = list.split(',').filter(|s| !s.is_empty()).collect();
        if values.is_empty() {
            return Err(Error::Config(format!("sweep clause {clause:?} has no values")));
        }
        let mut next = Vec::with_capacity(configs.len() * values.len());
        for config in &configs {
            for value in &values {
                let mut c = config.clone();
                apply_sweep_value(&mut c, key.trim(), value.trim())?;
                next.push(c);
            }
        }
        configs = next;
    }
    Ok(configs)
}

fn open_bench_heap(config: &BenchConfig, path: &Path) -> Result<SharedHeap, Error> {
    let layout = config.layout()?;
    if path.exists() {
        let (heap, header) = open_heap_file(path)?;
        if !header.clean_shutdown {
            eprintln!("unclean shutdown detected; recovering {}", path.display());
            recover(&heap)?;
            heap.sync()?;
        }
        if *heap.layout() != layout {
            return Err(Error::Config(format!(
                "heap file layout {:?} does not match benchmark configuration",
                heap.layout()
            )));
        }
        Ok(heap)
    } else {
        create_heap_file(path, &layout)
    }
}

fn run_one(config: &BenchConfig, args: &BenchArgs) -> Result<BenchReport, Error> {
    match args.backend {
        BackendArg::Dram => bench::run_dram(config),
        BackendArg::Real => {
            let path = args.path.as_ref().ok_or_else(|| {
                Error::Config("--path is required with --backend real".into())
            })?;
            let heap = open_bench_heap(config, path)?;
            set_clean_shutdown(path, false)?;
            let report = bench::run(config, &heap)?;
            heap.sync()?;
            set_clean_shutdown(path, true)?;
            Ok(report)
        }
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<u8, Error> {
    let configs = sweep_configs(&base_config(args), &args.sweep)?;
    let mut reports = Vec::with_capacity(configs.len());
    let mut audit_failed = false;
    for config in &configs {
        let report = run_one(config, args)?;
        audit_failed |= !report.sum_check_ok || !report.tag_clean_ok;
        reports.push(report);
    }

    let output = match args.format {
        OutputFormat::Json => to_json(&reports)?,
        OutputFormat::Csv => {
            let mut s = String::from(BenchReport::csv_header());
            for r in &reports {
                s.push('\n');
                s.push_str(&r.csv_row());
            }
            s
        }
    };
    match &args.out {
        Some(path) => std::fs::write(path, output + "\n")?,
        None => println!("{output}"),
    }

    if audit_failed {
        eprintln!("post-run audit failed: sum invariant or tag purity violated");
        return Ok(EXIT_VIOLATION);
    }
    Ok(0)
}
