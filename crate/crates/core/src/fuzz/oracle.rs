//! Byte-count oracle: predicts which actions sample, using only the action
//! list and the heap configuration.

use std::fmt;

use super::Action;
use crate::heap::HeapConfig;
use crate::profile::SampleKind;
use crate::sampler::MAX_PERIOD;

/// Largest payload an action may request.
const MAX_PAYLOAD: u64 = 1 << 24;

/// The slow sampler: count every allocated byte and fire whenever the running
/// total strictly exceeds the period. Returns `(samples, new_allocated)`.
pub fn reference_sampler_step(allocated: u64, size: u64, period: u64) -> (u32, u64) {
    assert!(period > 0, "period must be positive");
    let mut allocated = allocated + size;
    let mut samples = 0;
    while allocated > period {
        samples += 1;
        allocated -= period;
    }
    (samples, allocated)
}

/// Header word plus payload rounded up to words, never less than one word.
fn rounded_total(payload: u64) -> u64 {
    let words = payload.div_ceil(8).max(1);
    8 * (1 + words)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Predicted {
    pub samples: u32,
    /// Space the allocation goes to; `None` for non-allocations.
    pub kind: Option<SampleKind>,
    /// Bytes an allocation occupies including its header.
    pub total_bytes: u64,
    /// `period - allocated_since_last_sample` after the action, while enabled.
    pub bytes_until_sample: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OraclePrediction {
    pub per_action: Vec<Predicted>,
}

impl OraclePrediction {
    /// `(action ordinal, expected sample count)` for every sampling action.
    pub fn sampled(&self) -> Vec<(usize, u32)> {
        self.per_action
            .iter()
            .enumerate()
            .filter(|(_, p)| p.samples > 0)
            .map(|(i, p)| (i, p.samples))
            .collect()
    }

    pub fn total_samples(&self) -> u64 {
        self.per_action.iter().map(|p| u64::from(p.samples)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Malformed {
    pub index: usize,
    pub reason: String,
}

impl fmt::Display for Malformed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "action {}: {}", self.index, self.reason)
    }
}

impl std::error::Error for Malformed {}

/// Replays the byte arithmetic of `actions` and predicts per-action sample
/// counts. Rejects sequences the harness could not execute.
pub fn predict_samples(
    actions: &[Action],
    config: &HeapConfig,
) -> Result<OraclePrediction, Malformed> {
    let mut live_roots = 0usize;
    let mut period: Option<u64> = None;
    let mut allocated = 0u64;
    let mut per_action = Vec::with_capacity(actions.len());
    for (index, action) in actions.iter().enumerate() {
        let bad = |reason: String| Err(Malformed { index, reason });
        let mut predicted = Predicted::default();
        match *action {
            Action::DropRoot { index: i } | Action::AccessObject { index: i } => {
                if i >= live_roots {
                    return bad(format!("root index {i} with {live_roots} live roots"));
                }
                if matches!(action, Action::DropRoot { .. }) {
                    live_roots -= 1;
                }
            }
            Action::EnableSampling { period: p } => {
                if p == 0 || p > MAX_PERIOD {
                    return bad(format!("sampling period {p} out of range"));
                }
                period = Some(p);
                allocated = 0;
            }
            Action::DisableSampling => period = None,
            Action::ForceMinorCollection => {}
            Action::AllocObject { size, n_ref_fields } => {
                let needed = 8 * (1 + u64::from(n_ref_fields));
                if size < needed {
                    return bad(format!(
                        "object of {size} bytes cannot hold {n_ref_fields} references and an id"
                    ));
                }
                if n_ref_fields as usize > live_roots {
                    return bad(format!(
                        "{n_ref_fields} references with {live_roots} live roots"
                    ));
                }
            }
            Action::AllocArray { .. } | Action::AllocString { .. } => {}
        }
        if let Some(payload) = action.payload_bytes() {
            if payload > MAX_PAYLOAD {
                return bad(format!("payload of {payload} bytes exceeds {MAX_PAYLOAD}"));
            }
            let total = rounded_total(payload);
            predicted.total_bytes = total;
            predicted.kind = Some(if total > config.large_object_threshold {
                SampleKind::Large
            } else {
                SampleKind::Nursery
            });
            if let Some(p) = period {
                let (samples, residual) = reference_sampler_step(allocated, total, p);
                predicted.samples = samples;
                allocated = residual;
            }
            live_roots += 1;
        }
        predicted.bytes_until_sample = period.map(|p| p - allocated);
        per_action.push(predicted);
    }
    Ok(OraclePrediction { per_action })
}
