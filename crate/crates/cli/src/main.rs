use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gcprof::bench::{self, parse_bytes, BenchConfig};
use gcprof::firefox;
use gcprof::fuzz::{self, FuzzConfig, Sequence};
use gcprof::workloads::{self, Workload, WorkloadSpec};

#[derive(Parser)]
#[command(
    name = "gcprof",
    version,
    about = "Allocation-sampling GC heap: workloads, overhead benchmarks, profile conversion and fuzzing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one workload on a fresh heap and write its binary profile.
    Run(RunArgs),
    /// Sweep sampling periods and report overhead against an unsampled baseline.
    Bench(BenchArgs),
    /// Convert a binary profile to Firefox Profiler JSON.
    Convert(ConvertArgs),
    /// Differentially fuzz the heap and sampler against the reference oracle.
    Fuzz(FuzzArgs),
}

#[derive(Args)]
struct RunArgs {
    /// gcbench_like, alloc_loop or string_churn.
    workload: Workload,
    /// Sampling period in bytes (K/M/G suffixes allowed); 0 disables sampling.
    #[arg(long, default_value = "32K", value_parser = parse_bytes)]
    sample_bytes: u64,
    #[arg(long, default_value = "1M", value_parser = parse_bytes)]
    nursery_bytes: u64,
    /// Overrides the workload's default iteration count.
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long, default_value = "profile.gprf")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated workloads.
    #[arg(long, value_delimiter = ',', default_value = "gcbench_like")]
    workloads: Vec<Workload>,
    /// Comma-separated sampling periods.
    #[arg(long, value_delimiter = ',', value_parser = parse_bytes, default_value = "32K,128K,512K,2M,4M")]
    periods: Vec<u64>,
    #[arg(long, default_value_t = bench::DEFAULT_REPETITIONS)]
    repetitions: usize,
    #[arg(long, default_value = "1M", value_parser = parse_bytes)]
    nursery_bytes: u64,
    /// Overrides every workload's default iteration count.
    #[arg(long)]
    iterations: Option<u64>,
    /// Also write one CSV line per run here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    /// Binary profile written by `run`.
    input: PathBuf,
    /// Defaults to the input path with a `.json` extension.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    pretty: bool,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    sequences: u64,
    #[arg(long, default_value_t = 200)]
    actions_per_sequence: usize,
    #[arg(long, default_value = "4096", value_parser = parse_bytes)]
    nursery_bytes: u64,
    /// Report the failing prefix without shrinking it.
    #[arg(long)]
    no_shrink: bool,
    /// Where to write a failing sequence.
    #[arg(long, default_value = "fuzz-failure.txt")]
    out: PathBuf,
    /// Re-execute a sequence file written by an earlier failure instead of generating.
    #[arg(long)]
    replay: Option<PathBuf>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Bench(args) => run_bench(args),
        Command::Convert(args) => convert(args),
        Command::Fuzz(args) => run_fuzz(args),
    }
}

fn spec(workload: Workload, iterations: Option<u64>) -> WorkloadSpec {
    let spec = WorkloadSpec::new(workload);
    match iterations {
        Some(n) => spec.with_iterations(n),
        None => spec,
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let outcome = workloads::run(
        &spec(args.workload, args.iterations),
        args.sample_bytes,
        args.nursery_bytes,
    )?;
    let bytes = outcome.profile.to_bytes();
    fs::write(&args.out, &bytes).with_context(|| format!("writing {}", args.out.display()))?;
    let c = outcome.counters;
    println!("workload          {}", args.workload);
    println!("sample period     {}", describe_period(args.sample_bytes));
    println!("runtime           {:.3} s", outcome.runtime.as_secs_f64());
    println!("bytes allocated   {}", c.bytes_allocated);
    println!(
        "objects           {} ({} large)",
        c.objects_allocated, c.large_objects_allocated
    );
    println!("minor collections {}", c.minor_collections);
    println!("major cycles      {}", c.major_cycles);
    println!("samples           {}", outcome.samples);
    println!(
        "profile           {} ({} bytes)",
        args.out.display(),
        bytes.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn describe_period(bytes: u64) -> String {
    if bytes == 0 {
        "off".into()
    } else {
        bench::format_bytes(bytes)
    }
}

fn run_bench(args: BenchArgs) -> Result<ExitCode> {
    if args.repetitions == 0 {
        bail!("--repetitions must be at least 1");
    }
    if args.periods.contains(&0) {
        bail!("periods must be positive; the unsampled baseline is always included");
    }
    let config = BenchConfig {
        workloads: args
            .workloads
            .iter()
            .map(|&w| spec(w, args.iterations))
            .collect(),
        periods: args.periods,
        repetitions: args.repetitions,
        nursery_bytes: args.nursery_bytes,
        warmup: true,
    };
    let report = bench::bench(&config, |m| {
        eprintln!(
            "rep {} {:<13} {:>5} {:.3} s, {} samples",
            m.repetition + 1,
            m.workload.name(),
            describe_period(m.period),
            m.runtime_s,
            m.samples
        );
    })?;
    print!("{}", report.to_table());
    if let Some(path) = &args.csv {
        fs::write(path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        println!("csv: {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn convert(args: ConvertArgs) -> Result<ExitCode> {
    let bytes =
        fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let conversion =
        firefox::convert(&bytes).with_context(|| format!("decoding {}", args.input.display()))?;
    let out = args
        .out
        .unwrap_or_else(|| args.input.with_extension("json"));
    let processed = &conversion.profile;
    let json = if args.pretty {
        processed.to_json_pretty()
    } else {
        processed.to_json()
    };
    fs::write(&out, json).with_context(|| format!("writing {}", out.display()))?;
    let thread = processed.thread();
    println!("samples  {}", thread.samples.length);
    println!("markers  {}", thread.markers.length);
    println!("counters {}", processed.counters.len());
    if conversion.unknown_records > 0 {
        println!(
            "skipped  {} records with unknown tags",
            conversion.unknown_records
        );
    }
    println!("wrote    {}", out.display());
    let violations = firefox::validate(processed);
    if violations.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &violations {
            eprintln!("invalid: {v}");
        }
        Ok(ExitCode::FAILURE)
    }
}

fn run_fuzz(args: FuzzArgs) -> Result<ExitCode> {
    let config = FuzzConfig {
        seed: args.seed,
        sequences: args.sequences,
        actions_per_sequence: args.actions_per_sequence,
        nursery_size: args.nursery_bytes,
        shrink: !args.no_shrink,
        mutation: None,
    };
    if let Some(path) = &args.replay {
        return replay(path, config);
    }
    let report = fuzz::run_fuzz(&config);
    let s = report.stats;
    println!(
        "{} sequences, {} actions, {} samples, {} resolutions, {} minor collections",
        report.sequences_run, s.actions, s.samples, s.resolutions, s.minor_collections
    );
    let Some(failure) = report.failure else {
        println!("ok");
        return Ok(ExitCode::SUCCESS);
    };
    println!(
        "FAILED sequence {} (seed {:#x})",
        failure.sequence_index, failure.sequence_seed
    );
    println!("  {}", failure.failure);
    let comment = format!(
        "master seed {}, sequence {}, sequence seed {:#x}\n{}\nshrunk from {} to {} actions",
        args.seed,
        failure.sequence_index,
        failure.sequence_seed,
        failure.failure,
        failure.original_len,
        failure.sequence.actions.len()
    );
    write_failure(&args.out, &failure.sequence, &comment)?;
    Ok(ExitCode::FAILURE)
}

fn replay(path: &Path, config: FuzzConfig) -> Result<ExitCode> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let sequence = Sequence::parse(&text, config.nursery_size).map_err(anyhow::Error::msg)?;
    let config = FuzzConfig {
        nursery_size: sequence.nursery_size,
        ..config
    };
    match fuzz::execute_and_check(&sequence.actions, &config) {
        Ok(stats) => {
            println!("{} actions, {} samples: ok", stats.actions, stats.samples);
            Ok(ExitCode::SUCCESS)
        }
        Err(failure) => {
            println!("FAILED {failure}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn write_failure(path: &Path, sequence: &Sequence, comment: &str) -> Result<()> {
    fs::write(path, sequence.to_text(comment))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("  replay with: gcprof fuzz --replay {}", path.display());
    Ok(())
}
