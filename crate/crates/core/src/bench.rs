//! Sampling-overhead benchmarks.
//!
//! Every repetition runs each workload once unsampled and once per period,
//! back to back, so slow drift in machine speed hits every configuration
//! alike. The run order rotates between repetitions to cancel position
//! effects. Overhead is taken per repetition against that repetition's
//! baseline; reported figures are medians over repetitions.

use std::fmt::Write as _;

use thiserror::Error;

use crate::error::GcError;
use crate::workloads::{run, Workload, WorkloadSpec};

pub const DEFAULT_PERIODS: [u64; 5] = [32 << 10, 128 << 10, 512 << 10, 2 << 20, 4 << 20];
pub const DEFAULT_REPETITIONS: usize = 5;

/// `runtime_with_sampling / runtime_without_sampling`.
pub fn overhead(runtime_with: f64, runtime_without: f64) -> f64 {
    runtime_with / runtime_without
}

pub fn samples_per_second(samples: u64, runtime_s: f64) -> f64 {
    samples as f64 / runtime_s
}

/// Overhead scaled to a rate of 1000 samples per second. Only the extra cost
/// above 1 scales.
pub fn normalized_overhead(overhead: f64, samples_per_second: f64) -> f64 {
    1.0 + (overhead - 1.0) / samples_per_second * 1000.0
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Gc(#[from] GcError),
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error(
        "{workload} at period {period} allocated {actual} bytes, baseline allocated {expected}"
    )]
    AllocationMismatch {
        workload: Workload,
        period: u64,
        expected: u64,
        actual: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub workloads: Vec<WorkloadSpec>,
    /// Sampling periods in bytes; the unsampled baseline is always added.
    pub periods: Vec<u64>,
    pub repetitions: usize,
    pub nursery_bytes: u64,
    /// Run each workload once, unmeasured, before the first repetition.
    pub warmup: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            workloads: vec![WorkloadSpec::new(Workload::GcbenchLike)],
            periods: DEFAULT_PERIODS.to_vec(),
            repetitions: DEFAULT_REPETITIONS,
            nursery_bytes: crate::heap::DEFAULT_NURSERY_SIZE,
            warmup: true,
        }
    }
}

/// One run. `period` 0 is the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub workload: Workload,
    pub period: u64,
    pub repetition: usize,
    pub runtime_s: f64,
    pub bytes_allocated: u64,
    pub samples: u64,
    /// Against the same repetition's baseline; 1 for the baseline itself.
    pub overhead: f64,
}

impl Measurement {
    pub fn samples_per_second(&self) -> f64 {
        samples_per_second(self.samples, self.runtime_s)
    }

    /// Undefined for runs that took no samples.
    pub fn normalized_overhead(&self) -> Option<f64> {
        (self.samples > 0).then(|| normalized_overhead(self.overhead, self.samples_per_second()))
    }
}

/// Medians for one (workload, period) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub workload: Workload,
    pub period: u64,
    pub runtime_s: f64,
    pub bytes_allocated: u64,
    pub samples_per_s: f64,
    pub overhead: f64,
    /// Computed from the median overhead and median sampling rate.
    pub normalized_overhead: Option<f64>,
}

impl Row {
    pub fn gb_allocated(&self) -> f64 {
        self.bytes_allocated as f64 / 1e9
    }

    pub fn gb_per_s(&self) -> f64 {
        self.gb_allocated() / self.runtime_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverheadReport {
    pub measurements: Vec<Measurement>,
    /// Baseline first, then periods in configuration order, per workload.
    pub rows: Vec<Row>,
}

impl OverheadReport {
    pub fn row(&self, workload: Workload, period: u64) -> Option<&Row> {
        self.rows
            .iter()
            .find(|r| r.workload == workload && r.period == period)
    }

    /// One line per run.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "workload,period_bytes,repetition,runtime_s,bytes_allocated,samples,samples_per_s,overhead,normalized_overhead\n",
        );
        for m in &self.measurements {
            let normalized = m
                .normalized_overhead()
                .map(|n| format!("{n:.6}"))
                .unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{:.6},{},{},{:.3},{:.6},{}",
                m.workload,
                m.period,
                m.repetition,
                m.runtime_s,
                m.bytes_allocated,
                m.samples,
                m.samples_per_second(),
                m.overhead,
                normalized
            )
            .expect("writing to a String");
        }
        out
    }

    /// Human-readable medians.
    pub fn to_table(&self) -> String {
        let header = [
            "Name",
            "Period",
            "Run time (s)",
            "GB Allocated",
            "GB/s",
            "Samples/s",
            "Overhead",
            "Norm. Overhead",
        ];
        let mut lines = vec![header.map(String::from).to_vec()];
        for r in &self.rows {
            lines.push(vec![
                r.workload.to_string(),
                if r.period == 0 {
                    "off".into()
                } else {
                    format_bytes(r.period)
                },
                format!("{:.3}", r.runtime_s),
                format!("{:.3}", r.gb_allocated()),
                format!("{:.3}", r.gb_per_s()),
                format!("{:.0}", r.samples_per_s),
                format!("{:.3}", r.overhead),
                r.normalized_overhead
                    .map(|n| format!("{n:.3}"))
                    .unwrap_or_else(|| "-".into()),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, line) in lines.iter().enumerate() {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, w))| {
                    if c == 0 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out
    }
}

/// Runs the sweep. `on_run` sees each repetition's measurements once the
/// repetition completes.
pub fn bench(
    config: &BenchConfig,
    mut on_run: impl FnMut(&Measurement),
) -> Result<OverheadReport, BenchError> {
    if config.repetitions == 0 {
        return Err(BenchError::NoRepetitions);
    }
    if config.warmup {
        for spec in &config.workloads {
            run(spec, 0, config.nursery_bytes)?;
        }
    }
    let mut measurements = Vec::new();
    for repetition in 0..config.repetitions {
        for spec in &config.workloads {
            let mut order: Vec<u64> = std::iter::once(0)
                .chain(config.periods.iter().copied())
                .collect();
            let shift = repetition % order.len();
            order.rotate_left(shift);
            let mut runs = Vec::with_capacity(order.len());
            for period in order {
                let outcome = run(spec, period, config.nursery_bytes)?;
                runs.push((
                    period,
                    outcome.runtime.as_secs_f64(),
                    outcome.counters.bytes_allocated,
                    outcome.samples,
                ));
            }
            let &(_, base_runtime, base_bytes, _) =
                runs.iter().find(|r| r.0 == 0).expect("baseline runs");
            for (period, runtime_s, bytes, samples) in runs {
                if bytes != base_bytes {
                    return Err(BenchError::AllocationMismatch {
                        workload: spec.workload,
                        period,
                        expected: base_bytes,
                        actual: bytes,
                    });
                }
                let m = Measurement {
                    workload: spec.workload,
                    period,
                    repetition,
                    runtime_s,
                    bytes_allocated: bytes,
                    samples,
                    overhead: overhead(runtime_s, base_runtime),
                };
                on_run(&m);
                measurements.push(m);
            }
        }
    }
    let rows = summarize(config, &measurements);
    Ok(OverheadReport { measurements, rows })
}

fn summarize(config: &BenchConfig, measurements: &[Measurement]) -> Vec<Row> {
    let mut rows = Vec::new();
    for spec in &config.workloads {
        for period in std::iter::once(0).chain(config.periods.iter().copied()) {
            let runs: Vec<&Measurement> = measurements
                .iter()
                .filter(|m| m.workload == spec.workload && m.period == period)
                .collect();
            if runs.is_empty() {
                continue;
            }
            let pick =
                |f: fn(&Measurement) -> f64| median(&runs.iter().map(|m| f(m)).collect::<Vec<_>>());
            let overhead = pick(|m| m.overhead);
            let samples_per_s = pick(Measurement::samples_per_second);
            rows.push(Row {
                workload: spec.workload,
                period,
                runtime_s: pick(|m| m.runtime_s),
                bytes_allocated: runs[0].bytes_allocated,
                samples_per_s,
                overhead,
                normalized_overhead: (samples_per_s > 0.0)
                    .then(|| normalized_overhead(overhead, samples_per_s)),
            });
        }
    }
    rows
}

/// `32K`, `4M`, or plain bytes when not a whole KiB.
pub fn format_bytes(n: u64) -> String {
    if n >= 1 << 20 && n.is_multiple_of(1 << 20) {
        format!("{}M", n >> 20)
    } else if n >= 1 << 10 && n.is_multiple_of(1 << 10) {
        format!("{}K", n >> 10)
    } else {
        n.to_string()
    }
}

/// Parses a byte count with an optional binary `K`, `M` or `G` suffix.
pub fn parse_bytes(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (digits, shift) = match s.char_indices().last() {
        Some((i, 'k' | 'K')) => (&s[..i], 10),
        Some((i, 'm' | 'M')) => (&s[..i], 20),
        Some((i, 'g' | 'G')) => (&s[..i], 30),
        _ => (s, 0),
    };
    let n: u64 = digits
        .parse()
        .map_err(|e| format!("bad byte count {s:?}: {e}"))?;
    n.checked_mul(1 << shift)
        .ok_or_else(|| format!("byte count {s:?} overflows"))
}
