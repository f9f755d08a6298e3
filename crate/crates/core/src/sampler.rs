//! Allocation sampling folded into the nursery limit.
//!
//! While sampling, the heap keeps `sample_point - nursery_free` equal to the
//! sampling period minus the bytes allocated since the last sample, and uses
//! `min(sample_point, nursery_top)` as the nursery limit. The allocation fast
//! path therefore only leaves its bump-and-compare sequence when either the
//! nursery is full or a sample is due; everything here runs on slow paths.

use crate::error::GcError;
use crate::heap::{Mutation, NurseryState, ObjectRef};
use crate::profile::SampleKind;
use crate::recorder::{ProfileRecorder, TypeId};

/// Largest accepted period. Keeps the virtual sample point far from `i64`
/// overflow; for practical purposes it never fires.
pub const MAX_PERIOD: u64 = 1 << 60;

/// Consecutive sample ordinals emitted for a single allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SampleBatch {
    pub first: u64,
    pub count: u32,
}

impl SampleBatch {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn indices(&self) -> impl Iterator<Item = u64> {
        self.first..self.first + u64::from(self.count)
    }
}

/// A sampled object waiting for type and survival resolution at the next
/// minor collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingSample {
    pub address: ObjectRef,
    pub sample_index: u64,
    pub kind: SampleKind,
    /// Known at allocation time; needed if a large object is swept before
    /// resolution.
    pub type_id: TypeId,
}

#[derive(Debug, Clone, Default)]
pub struct Sampler {
    sample_n_bytes: u64,
    enabled: bool,
    samples_taken: u64,
    sampled_young: Vec<PendingSample>,
    pub(crate) mutation: Option<Mutation>,
}

impl Sampler {
    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    /// The sampling period of the current (or last) enable.
    pub fn sample_n_bytes(&self) -> u64 {
        self.sample_n_bytes
    }

    pub fn samples_taken(&self) -> u64 {
        self.samples_taken
    }

    pub fn sampled_young(&self) -> &[PendingSample] {
        &self.sampled_young
    }

    /// Starts a fresh countdown: `sample_point = nursery_free + period`.
    pub fn enable(&mut self, period: u64, nursery: &mut NurseryState) -> Result<(), GcError> {
        if period == 0 {
            return Err(GcError::ZeroPeriod);
        }
        if period > MAX_PERIOD {
            return Err(GcError::InvalidConfig(format!(
                "sampling period {period} exceeds {MAX_PERIOD}"
            )));
        }
        self.sample_n_bytes = period;
        self.enabled = true;
        nursery.sample_point = nursery.free as i64 + period as i64;
        nursery.limit = nursery.sampling_limit();
        Ok(())
    }

    /// Restores the limit to the nursery top. Safe on a heap that never
    /// enabled sampling.
    pub fn disable(&mut self, nursery: &mut NurseryState) {
        if !self.enabled {
            return;
        }
        self.enabled = false;
        nursery.limit = nursery.top;
    }

    /// Emits one sample per whole period the allocation crossed and moves the
    /// sample point past `nursery_free`.
    pub fn on_sample_crossing(
        &mut self,
        kind: SampleKind,
        alloc_size: u64,
        nursery: &mut NurseryState,
        recorder: &mut ProfileRecorder,
        now_ns: u64,
    ) -> SampleBatch {
        let period = self.sample_n_bytes as i64;
        let mut batch = SampleBatch {
            first: recorder.samples_taken(),
            count: 0,
        };
        while nursery.sample_point < nursery.free as i64 {
            nursery.sample_point += period;
            if self.mutation != Some(Mutation::SkipSampleRecord) {
                recorder.sample_now(kind, alloc_size, now_ns);
                batch.count += 1;
            }
        }
        self.samples_taken += u64::from(batch.count);
        nursery.limit = nursery.sampling_limit();
        batch
    }

    /// Accounts for an allocation that bypasses the nursery by moving the
    /// sample point left by its size.
    pub fn on_large_allocation(
        &mut self,
        size: u64,
        nursery: &mut NurseryState,
        recorder: &mut ProfileRecorder,
        now_ns: u64,
    ) -> SampleBatch {
        if !self.enabled {
            return SampleBatch::default();
        }
        nursery.sample_point -= size as i64;
        if nursery.sample_point < nursery.free as i64 {
            return self.on_sample_crossing(SampleKind::Large, size, nursery, recorder, now_ns);
        }
        if self.mutation != Some(Mutation::SkipLimitRecompute) {
            nursery.limit = nursery.sampling_limit();
        }
        SampleBatch::default()
    }

    /// Keeps `sample_point - nursery_free` unchanged across evacuation;
    /// `delta` is how far `nursery_free` moved back.
    pub fn on_minor_collection(&mut self, delta: u64, nursery: &mut NurseryState) {
        if !self.enabled {
            nursery.limit = nursery.top;
            return;
        }
        if self.mutation != Some(Mutation::SkipMinorCollectionAdjustment) {
            nursery.sample_point -= delta as i64;
        }
        nursery.limit = nursery.sampling_limit();
    }

    /// Registers the final address of a sampled object.
    pub fn register(
        &mut self,
        address: ObjectRef,
        batch: SampleBatch,
        kind: SampleKind,
        type_id: TypeId,
    ) {
        self.sampled_young
            .extend(batch.indices().map(|sample_index| PendingSample {
                address,
                sample_index,
                kind,
                type_id,
            }));
    }

    pub(crate) fn take_sampled_young(&mut self) -> Vec<PendingSample> {
        std::mem::take(&mut self.sampled_young)
    }
}
