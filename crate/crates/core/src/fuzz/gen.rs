//! Seeded action-sequence generator.
//!
//! Per action: 1% enable, 1% disable, 3% forced minor collection, 15% drop
//! root, 15% access (drops and accesses fall through to allocation while no
//! roots are live), otherwise an allocation split 2:1:1 between objects,
//! arrays and strings. Allocation sizes are log-uniform up to the
//! large-object threshold, except 5% which land in (threshold, 4 * threshold].
//! Periods are log-uniform over [16, 8 * nursery].

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    pub nursery_size: u64,
    pub large_object_threshold: u64,
    pub actions: usize,
}

/// Seed of sequence `index` under `master`; sequences can be regenerated
/// individually.
pub fn sequence_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

fn log_uniform(rng: &mut impl Rng, lo: u64, hi: u64) -> u64 {
    let (lo_f, hi_f) = ((lo as f64).ln(), (hi as f64).ln());
    let x = rng.gen_range(lo_f..=hi_f).exp().round() as u64;
    x.clamp(lo, hi)
}

/// Total bytes (header included) for the next allocation.
fn total_size(rng: &mut impl Rng, threshold: u64) -> u64 {
    if rng.gen_bool(0.05) {
        rng.gen_range(threshold + 1..=4 * threshold)
    } else {
        log_uniform(rng, 16, threshold)
    }
}

pub fn generate(seed: u64, params: &GenParams) -> Vec<Action> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut live = 0usize;
    let mut actions = Vec::with_capacity(params.actions);
    while actions.len() < params.actions {
        let roll: f64 = rng.gen();
        let action = if roll < 0.01 {
            Action::EnableSampling {
                period: log_uniform(&mut rng, 16, 8 * params.nursery_size),
            }
        } else if roll < 0.02 {
            Action::DisableSampling
        } else if roll < 0.05 {
            Action::ForceMinorCollection
        } else if roll < 0.20 && live > 0 {
            live -= 1;
            Action::DropRoot {
                index: rng.gen_range(0..live + 1),
            }
        } else if roll < 0.35 && live > 0 {
            Action::AccessObject {
                index: rng.gen_range(0..live),
            }
        } else {
            let total = total_size(&mut rng, params.large_object_threshold);
            let payload = total - 8;
            live += 1;
            match rng.gen_range(0..4) {
                0 | 1 => {
                    let max_refs = (live - 1).min(4).min((payload / 8 - 1) as usize);
                    Action::AllocObject {
                        size: payload,
                        n_ref_fields: rng.gen_range(0..=max_refs) as u32,
                    }
                }
                2 => Action::AllocArray {
                    length: payload / 8 - 1,
                },
                _ => Action::AllocString {
                    length: payload - 8,
                },
            }
        };
        actions.push(action);
    }
    actions
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzz::predict_samples;
    use crate::heap::HeapConfig;

    fn params() -> GenParams {
        GenParams {
            nursery_size: 4096,
            large_object_threshold: 512,
            actions: 200,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate(7, &params()), generate(7, &params()));
        assert_ne!(generate(7, &params()), generate(8, &params()));
        assert_eq!(sequence_seed(42, 3), sequence_seed(42, 3));
        assert_ne!(sequence_seed(42, 3), sequence_seed(42, 4));
    }

    #[test]
    fn generated_sequences_are_well_formed() {
        let config = HeapConfig::with_nursery_size(4096);
        for seed in 0..200 {
            let actions = generate(seed, &params());
            assert_eq!(actions.len(), 200);
            predict_samples(&actions, &config).unwrap();
        }
    }

    #[test]
    fn mix_covers_every_action_kind() {
        let mut seen = [0usize; 8];
        let mut large = 0;
        for seed in 0..50 {
            for action in generate(seed, &params()) {
                let slot = match action {
                    Action::AllocObject { .. } => 0,
                    Action::AllocArray { .. } => 1,
                    Action::AllocString { .. } => 2,
                    Action::DropRoot { .. } => 3,
                    Action::AccessObject { .. } => 4,
                    Action::ForceMinorCollection => 5,
                    Action::EnableSampling { .. } => 6,
                    Action::DisableSampling => 7,
                };
                seen[slot] += 1;
                if action.payload_bytes().is_some_and(|p| p + 8 > 512) {
                    large += 1;
                }
            }
        }
        assert!(seen.iter().all(|&n| n > 0), "{seen:?}");
        assert!(large > 100, "{large}");
    }
}
