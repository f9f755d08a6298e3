use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gcprof(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcprof"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("gcprof runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn summary_value(out: &Output, key: &str) -> u64 {
    stdout(out)
        .lines()
        .find_map(|l| l.strip_prefix(key))
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("no {key} in {}", stdout(out)))
}

#[test]
fn unsampled_run_converts_to_an_empty_sample_table() {
    let dir = tempfile::tempdir().unwrap();
    let run = gcprof(
        &[
            "run",
            "gcbench_like",
            "--sample-bytes",
            "0",
            "--iterations",
            "1",
            "--out",
            "p.gprf",
        ],
        dir.path(),
    );
    assert!(run.status.success(), "{run:?}");
    assert_eq!(summary_value(&run, "samples"), 0);

    let convert = gcprof(&["convert", "p.gprf"], dir.path());
    assert!(convert.status.success(), "{convert:?}");
    let json: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("p.json")).unwrap()).unwrap();
    let thread = &json["threads"][0];
    assert_eq!(thread["samples"]["length"], 0);
    assert!(thread["markers"]["length"].as_u64().unwrap() > 0);
    assert_eq!(json["counters"].as_array().unwrap().len(), 3);
}

#[test]
fn sampled_run_converts_every_sample() {
    let dir = tempfile::tempdir().unwrap();
    let run = gcprof(
        &[
            "run",
            "string_churn",
            "--sample-bytes",
            "16K",
            "--nursery-bytes",
            "256K",
            "--iterations",
            "20000",
            "--out",
            "s.gprf",
        ],
        dir.path(),
    );
    assert!(run.status.success(), "{run:?}");
    let samples = summary_value(&run, "samples");
    assert!(samples > 0);

    let convert = gcprof(
        &["convert", "s.gprf", "--out", "s.json", "--pretty"],
        dir.path(),
    );
    assert!(convert.status.success(), "{convert:?}");
    assert_eq!(summary_value(&convert, "samples"), samples);
    let json: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(
        json["threads"][0]["samples"]["length"].as_u64(),
        Some(samples)
    );
}

#[test]
fn repeated_runs_take_the_same_samples() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        [
            "run",
            "gcbench_like",
            "--sample-bytes",
            "32K",
            "--iterations",
            "1",
            "--out",
            out,
        ]
    };
    let a = gcprof(&args("a.gprf"), dir.path());
    let b = gcprof(&args("b.gprf"), dir.path());
    assert!(a.status.success() && b.status.success());
    assert_eq!(summary_value(&a, "samples"), summary_value(&b, "samples"));
    assert_eq!(
        summary_value(&a, "bytes allocated"),
        summary_value(&b, "bytes allocated")
    );
}

#[test]
fn bench_reports_baseline_and_each_period() {
    let dir = tempfile::tempdir().unwrap();
    let out = gcprof(
        &[
            "bench",
            "--periods",
            "32K,4M",
            "--repetitions",
            "1",
            "--iterations",
            "1",
            "--csv",
            "b.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let table = stdout(&out);
    let rows: Vec<&str> = table
        .lines()
        .filter(|l| l.starts_with("gcbench_like"))
        .collect();
    assert_eq!(rows.len(), 3, "{table}");
    assert!(rows[0].contains("off") && rows[1].contains("32K") && rows[2].contains("4M"));
    let csv = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn fuzz_passes_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let out = gcprof(&["fuzz", "--seed", "42", "--sequences", "100"], dir.path());
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("100 sequences"));

    std::fs::write(
        dir.path().join("seq.txt"),
        "# hand written\nnursery 4096\nenable 64\nalloc_array 20\nalloc_object 16 1\nminor_gc\naccess 1\n",
    )
    .unwrap();
    let replay = gcprof(&["fuzz", "--replay", "seq.txt"], dir.path());
    assert!(replay.status.success(), "{replay:?}");

    std::fs::write(dir.path().join("bad.txt"), "access 0\n").unwrap();
    let bad = gcprof(&["fuzz", "--replay", "bad.txt"], dir.path());
    assert!(!bad.status.success());
    assert!(stdout(&bad).contains("malformed"));
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = gcprof(&["run", "pystone"], dir.path());
    assert!(!unknown.status.success());
    let missing = gcprof(&["convert", "missing.gprf"], dir.path());
    assert!(!missing.status.success());
    std::fs::write(dir.path().join("junk.gprf"), b"not a profile").unwrap();
    let junk = gcprof(&["convert", "junk.gprf"], dir.path());
    assert!(!junk.status.success());
    let unwritable = gcprof(
        &[
            "run",
            "alloc_loop",
            "--iterations",
            "10",
            "--out",
            "no/such/dir/p.gprf",
        ],
        dir.path(),
    );
    assert!(!unwritable.status.success());
}
