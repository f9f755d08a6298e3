//! The managed heap.
//!
//! Small objects are bump-allocated in a single nursery and evacuated into a
//! size-class segregated old space by minor collections. Objects above the
//! large-object threshold live in a separate space. The old and large spaces
//! are collected by a mark-sweep collector driven one phase at a time.
//!
//! Allocation sampling shares the nursery limit check; see [`crate::sampler`].

mod large;
mod major;
mod minor;
mod nursery;
mod object;
mod old_space;
mod roots;

pub use major::MajorCycleStats;
pub use minor::MinorCollectionReport;
pub use nursery::NurseryState;
pub use object::{
    object_bytes, payload_words, GcFlags, ObjectHeader, ObjectRef, Space, Value, WORD,
};
pub use old_space::SweepOutcome;
pub use roots::RootId;

use std::collections::BTreeSet;

use crate::clock::{ArenaRss, Clock, MonotonicClock, RssSource};
use crate::error::GcError;
use crate::profile::{
    HeapStatsRecord, Profile, ProfileMeta, SampleKind, Survival, UNRESOLVED_TYPE,
};
use crate::recorder::{FrameId, ProfileRecorder, TypeId, TypeRegistry};
use crate::sampler::{SampleBatch, Sampler};

use large::LargeObjectSpace;
use nursery::Nursery;
use old_space::OldSpace;
use roots::RootSet;

pub const DEFAULT_NURSERY_SIZE: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeapConfig {
    /// Nursery size in bytes; a power of two.
    pub nursery_size: u64,
    /// Objects whose header plus payload exceed this go to the large-object space.
    pub large_object_threshold: u64,
    pub word_size: u64,
    /// Arena granularity of large-object reservations.
    pub page_round: u64,
    /// Upper bound on old plus large arena reservations.
    pub max_heap_bytes: u64,
}

impl Default for HeapConfig {
    fn default() -> Self {
        Self::with_nursery_size(DEFAULT_NURSERY_SIZE)
    }
}

impl HeapConfig {
    /// Config with the large-object threshold at one eighth of the nursery.
    pub fn with_nursery_size(nursery_size: u64) -> Self {
        Self {
            nursery_size,
            large_object_threshold: nursery_size / 8,
            word_size: WORD,
            page_round: 4096,
            max_heap_bytes: 4 << 30,
        }
    }

    pub fn validate(&self) -> Result<(), GcError> {
        let fail = |msg: String| Err(GcError::InvalidConfig(msg));
        if self.word_size != WORD {
            return fail(format!("word size must be {WORD}, got {}", self.word_size));
        }
        if !self.nursery_size.is_power_of_two() || self.nursery_size < 64 {
            return fail(format!(
                "nursery size {} must be a power of two of at least 64 bytes",
                self.nursery_size
            ));
        }
        if self.nursery_size > u32::MAX as u64 {
            return fail(format!("nursery size {} exceeds 4 GiB", self.nursery_size));
        }
        if self.large_object_threshold >= self.nursery_size {
            return fail(format!(
                "large-object threshold {} must be below the nursery size {}",
                self.large_object_threshold, self.nursery_size
            ));
        }
        if self.large_object_threshold < 2 * WORD {
            return fail(format!(
                "large-object threshold {} cannot hold a header and one word",
                self.large_object_threshold
            ));
        }
        if !self.page_round.is_power_of_two() {
            return fail(format!(
                "page rounding {} must be a power of two",
                self.page_round
            ));
        }
        Ok(())
    }

    /// Whether an object of `total_bytes` (header included) is large.
    pub fn is_large(&self, total_bytes: u64) -> bool {
        total_bytes > self.large_object_threshold
    }
}

/// Old-space collection phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum GcPhase {
    #[default]
    None,
    Scanning,
    Marking,
    Sweeping,
    Finalizing,
}

impl GcPhase {
    pub fn next(self) -> Self {
        match self {
            GcPhase::None => GcPhase::Scanning,
            GcPhase::Scanning => GcPhase::Marking,
            GcPhase::Marking => GcPhase::Sweeping,
            GcPhase::Sweeping => GcPhase::Finalizing,
            GcPhase::Finalizing => GcPhase::None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            GcPhase::None => 0,
            GcPhase::Scanning => 1,
            GcPhase::Marking => 2,
            GcPhase::Sweeping => 3,
            GcPhase::Finalizing => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => GcPhase::None,
            1 => GcPhase::Scanning,
            2 => GcPhase::Marking,
            3 => GcPhase::Sweeping,
            4 => GcPhase::Finalizing,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            GcPhase::None => "none",
            GcPhase::Scanning => "scanning",
            GcPhase::Marking => "marking",
            GcPhase::Sweeping => "sweeping",
            GcPhase::Finalizing => "finalizing",
        }
    }
}

/// Deliberate defects used to check that the fuzz harness notices them.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    SkipMinorCollectionAdjustment,
    SkipLimitRecompute,
    SkipSampleRecord,
    SkipNurseryReset,
    SkipRootUpdate,
    InvertSurvival,
}

/// Running totals kept by the heap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HeapCounters {
    pub bytes_allocated: u64,
    pub objects_allocated: u64,
    pub large_objects_allocated: u64,
    pub minor_collections: u64,
    pub major_cycles: u64,
    pub bytes_tenured: u64,
}

pub struct Heap {
    config: HeapConfig,
    nursery: Nursery,
    old: OldSpace,
    large: LargeObjectSpace,
    roots: RootSet,
    /// Old and large objects that may hold nursery references.
    remembered: BTreeSet<ObjectRef>,
    sampler: Sampler,
    recorder: ProfileRecorder,
    types: TypeRegistry,
    clock: Box<dyn Clock>,
    rss: Box<dyn RssSource>,
    phase: GcPhase,
    gray: Vec<ObjectRef>,
    major_stats: MajorCycleStats,
    counters: HeapCounters,
    mutation: Option<Mutation>,
}

impl Heap {
    /// Heap with a wall clock and arena-based RSS reporting.
    pub fn new(config: HeapConfig) -> Result<Self, GcError> {
        Self::with_sources(config, Box::new(MonotonicClock::new()), Box::new(ArenaRss))
    }

    pub fn with_sources(
        config: HeapConfig,
        clock: Box<dyn Clock>,
        rss: Box<dyn RssSource>,
    ) -> Result<Self, GcError> {
        config.validate()?;
        let meta = ProfileMeta {
            sample_n_bytes: 0,
            nursery_size: config.nursery_size,
            start_time_ns: clock.now_ns(),
        };
        Ok(Self {
            config,
            nursery: Nursery::new(config.nursery_size),
            old: OldSpace::new(),
            large: LargeObjectSpace::new(config.page_round),
            roots: RootSet::default(),
            remembered: BTreeSet::new(),
            sampler: Sampler::default(),
            recorder: ProfileRecorder::new(meta),
            types: TypeRegistry::default(),
            clock,
            rss,
            phase: GcPhase::None,
            gray: Vec::new(),
            major_stats: MajorCycleStats::default(),
            counters: HeapCounters::default(),
            mutation: None,
        })
    }

    pub fn config(&self) -> &HeapConfig {
        &self.config
    }

    pub fn nursery(&self) -> &NurseryState {
        &self.nursery.state
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    pub fn recorder(&self) -> &ProfileRecorder {
        &self.recorder
    }

    pub fn recorder_mut(&mut self) -> &mut ProfileRecorder {
        &mut self.recorder
    }

    pub fn types(&self) -> &TypeRegistry {
        &self.types
    }

    pub fn counters(&self) -> HeapCounters {
        self.counters
    }

    pub fn phase(&self) -> GcPhase {
        self.phase
    }

    pub fn root_count(&self) -> usize {
        self.roots.len()
    }

    pub fn old_live_objects(&self) -> u64 {
        self.old.live_objects()
    }

    pub fn large_live_objects(&self) -> u64 {
        self.large.live_objects()
    }

    #[doc(hidden)]
    pub fn inject_mutation(&mut self, mutation: Mutation) {
        self.mutation = Some(mutation);
        self.sampler.mutation = Some(mutation);
    }

    pub fn register_type(&mut self, name: &str) -> Result<TypeId, GcError> {
        self.types.register(name)
    }

    // Shadow stack ---------------------------------------------------------

    pub fn push_frame(&mut self, name: &str) -> FrameId {
        self.recorder.push_frame(name)
    }

    pub fn intern_frame(&mut self, name: &str) -> FrameId {
        self.recorder.intern_frame(name)
    }

    /// Pushes a frame interned with [`Heap::intern_frame`]; no name lookup.
    pub fn push_frame_id(&mut self, id: FrameId) {
        self.recorder.push_frame_id(id)
    }

    pub fn pop_frame(&mut self) -> Result<FrameId, GcError> {
        self.recorder.pop_frame()
    }

    // Sampling control -----------------------------------------------------

    pub fn enable_sampling(&mut self, period: u64) -> Result<(), GcError> {
        self.sampler.enable(period, &mut self.nursery.state)?;
        self.recorder.set_sample_n_bytes(period);
        Ok(())
    }

    pub fn disable_sampling(&mut self) {
        self.sampler.disable(&mut self.nursery.state);
    }

    // Allocation -----------------------------------------------------------

    /// Nursery bump allocation of `size` payload bytes.
    ///
    /// The caller routes objects above the large-object threshold to
    /// [`Heap::allocate_out_of_nursery`]; [`Heap::alloc`] does that routing.
    pub fn allocate(&mut self, size: u64, type_id: TypeId) -> Result<ObjectRef, GcError> {
        let total = object_bytes(size);
        debug_assert!(!self.config.is_large(total), "large object in nursery path");
        let mut result = self.nursery.state.free;
        self.nursery.state.free = result + total;
        if self.nursery.state.free > self.nursery.state.limit {
            result = self.collect_and_reserve(total)?;
        }
        self.nursery.mem.init_object(
            Nursery::word_index(result),
            ObjectHeader::new(type_id, (total / WORD - 1) as u32),
        );
        self.counters.bytes_allocated += total;
        self.counters.objects_allocated += 1;
        Ok(ObjectRef::nursery(result))
    }

    /// Slow path entered once the bumped `nursery_free` passed the limit:
    /// either a sample is due, the nursery is full, or both. Returns the
    /// address reserved for the `total`-byte object.
    fn collect_and_reserve(&mut self, total: u64) -> Result<u64, GcError> {
        let mut batch = SampleBatch::default();
        if self.sampler.is_enabled() && self.nursery.state.bytes_until_sample() < 0 {
            let now = self.clock.now_ns();
            batch = self.sampler.on_sample_crossing(
                SampleKind::Nursery,
                total,
                &mut self.nursery.state,
                &mut self.recorder,
                now,
            );
            if self.nursery.state.free <= self.nursery.state.limit {
                let result = self.nursery.state.free - total;
                self.register_sampled(ObjectRef::nursery(result), batch, SampleKind::Nursery);
                return Ok(result);
            }
        }

        // Genuinely out of nursery space: undo the bump, evacuate, retry.
        self.nursery.state.free -= total;
        self.collect_minor()?;
        let result = self.nursery.state.free;
        if result + total > self.nursery.state.top {
            return Err(GcError::Corruption(format!(
                "nursery still full after collection (free {result}, request {total})"
            )));
        }
        self.nursery.state.free = result + total;
        self.register_sampled(ObjectRef::nursery(result), batch, SampleKind::Nursery);
        Ok(result)
    }

    /// Queues a sampled allocation for resolution at the next minor
    /// collection. Nursery headers are written by the caller after this runs,
    /// so only large objects get the SAMPLED flag and an eager type.
    fn register_sampled(&mut self, address: ObjectRef, batch: SampleBatch, kind: SampleKind) {
        if batch.is_empty() {
            return;
        }
        let type_id = match kind {
            SampleKind::Large => {
                self.update_flags(address, |flags| flags.insert(GcFlags::SAMPLED));
                self.header(address)
                    .map(|h| h.type_id)
                    .unwrap_or(UNRESOLVED_TYPE)
            }
            SampleKind::Nursery => UNRESOLVED_TYPE,
        };
        self.sampler.register(address, batch, kind, type_id);
    }

    /// Allocates `size` payload bytes in the large-object space.
    pub fn allocate_out_of_nursery(
        &mut self,
        size: u64,
        type_id: TypeId,
    ) -> Result<ObjectRef, GcError> {
        let total = object_bytes(size);
        let size_words = u32::try_from(total / WORD - 1).map_err(|_| GcError::OutOfMemory {
            requested: total,
            limit: self.config.max_heap_bytes,
        })?;
        self.ensure_arena_room(self.large.reservation(total))?;
        let now = self.clock.now_ns();
        let batch = self.sampler.on_large_allocation(
            total,
            &mut self.nursery.state,
            &mut self.recorder,
            now,
        );
        let mut header = ObjectHeader::new(type_id, size_words);
        if self.phase == GcPhase::Marking {
            header.flags.insert(GcFlags::MARKED);
        }
        let r = self.large.allocate(header);
        self.register_sampled(r, batch, SampleKind::Large);
        self.counters.bytes_allocated += total;
        self.counters.objects_allocated += 1;
        self.counters.large_objects_allocated += 1;
        Ok(r)
    }

    /// Allocates in whichever space fits `size` payload bytes.
    pub fn alloc(&mut self, size: u64, type_id: TypeId) -> Result<ObjectRef, GcError> {
        if !self.types.contains(type_id) || type_id == UNRESOLVED_TYPE {
            return Err(GcError::UnknownType(type_id));
        }
        if self.config.is_large(object_bytes(size)) {
            self.allocate_out_of_nursery(size, type_id)
        } else {
            self.allocate(size, type_id)
        }
    }

    fn arena_bytes(&self) -> u64 {
        self.old.reserved_bytes() + self.large.reserved_bytes()
    }

    fn ensure_arena_room(&self, extra: u64) -> Result<(), GcError> {
        if self.arena_bytes() + extra > self.config.max_heap_bytes {
            return Err(GcError::OutOfMemory {
                requested: extra,
                limit: self.config.max_heap_bytes,
            });
        }
        Ok(())
    }

    // Mutator interface ----------------------------------------------------

    pub fn add_root(&mut self, r: ObjectRef) -> RootId {
        self.roots.add(r)
    }

    pub fn remove_root(&mut self, id: RootId) -> Result<ObjectRef, GcError> {
        self.roots.remove(id).ok_or(GcError::StaleRoot(id))
    }

    /// Current address of a rooted object.
    pub fn root(&self, id: RootId) -> Result<ObjectRef, GcError> {
        self.roots.get(id).ok_or(GcError::StaleRoot(id))
    }

    pub fn set_root(&mut self, id: RootId, r: ObjectRef) -> Result<(), GcError> {
        if self.roots.set(id, r) {
            Ok(())
        } else {
            Err(GcError::StaleRoot(id))
        }
    }

    /// Word storage and header index for a live, non-forwarded object.
    fn locate(&self, r: ObjectRef) -> Result<(&object::Words, usize), GcError> {
        let found = match r.space() {
            Space::Nursery => {
                let offset = r.nursery_offset();
                if self.nursery.holds(offset) {
                    Some((&self.nursery.mem, Nursery::word_index(offset)))
                } else {
                    None
                }
            }
            Space::Old => self
                .old
                .locate(r)
                .map(|(block, at)| (&self.old.blocks[block].mem, at)),
            Space::Large => self.large.get(r).map(|o| (&o.mem, 0)),
        };
        match found {
            Some((mem, at)) if !mem.header(at).flags.contains(GcFlags::FORWARDED) => Ok((mem, at)),
            _ => Err(GcError::InvalidReference(r)),
        }
    }

    fn locate_mut(&mut self, r: ObjectRef) -> Result<(&mut object::Words, usize), GcError> {
        let (_, at) = self.locate(r)?;
        let mem = match r.space() {
            Space::Nursery => &mut self.nursery.mem,
            Space::Old => {
                let (block, _) = self.old.locate(r).expect("located above");
                &mut self.old.blocks[block].mem
            }
            Space::Large => &mut self.large.get_mut(r).expect("located above").mem,
        };
        Ok((mem, at))
    }

    fn update_flags(&mut self, r: ObjectRef, f: impl FnOnce(&mut GcFlags)) {
        if let Ok((mem, at)) = self.locate_mut(r) {
            let mut header = mem.header(at);
            f(&mut header.flags);
            mem.set_header(at, header);
        }
    }

    pub fn header(&self, r: ObjectRef) -> Result<ObjectHeader, GcError> {
        let (mem, at) = self.locate(r)?;
        Ok(mem.header(at))
    }

    pub fn payload_len(&self, r: ObjectRef) -> Result<usize, GcError> {
        Ok(self.header(r)?.size_words as usize)
    }

    pub fn read_field(&self, r: ObjectRef, index: usize) -> Result<Value, GcError> {
        let (mem, at) = self.locate(r)?;
        let len = mem.header(at).size_words as usize;
        if index >= len {
            return Err(GcError::FieldOutOfBounds { index, len });
        }
        Ok(mem.get(at + 1 + index))
    }

    /// Stores `value`; storing a nursery reference into an old or large object
    /// records it in the remembered set.
    pub fn write_field(&mut self, r: ObjectRef, index: usize, value: Value) -> Result<(), GcError> {
        if let Value::Ref(target) = value {
            self.locate(target)?;
        }
        let (mem, at) = self.locate_mut(r)?;
        let len = mem.header(at).size_words as usize;
        if index >= len {
            return Err(GcError::FieldOutOfBounds { index, len });
        }
        mem.set(at + 1 + index, value);
        if let Value::Ref(target) = value {
            if !r.is_young() && target.is_young() {
                self.remembered.insert(r);
            }
        }
        Ok(())
    }

    // Telemetry ------------------------------------------------------------

    /// Snapshots arena capacity, usage, RSS and phase into the profile.
    pub fn record_heap_stats(&mut self) -> HeapStatsRecord {
        let arenas = self.arena_bytes();
        let stats = HeapStatsRecord {
            timestamp_ns: self.clock.now_ns(),
            total_size_of_arenas: arenas,
            total_memory_used: self.old.used_bytes() + self.large.used_bytes(),
            rss: self.rss.rss_bytes(arenas),
            gc_phase: self.phase,
        };
        self.recorder.record_heap_stats(stats);
        stats
    }

    /// Finalizes the profile. Samples still waiting for a minor collection are
    /// written with `Survival::Unknown`.
    pub fn finish(mut self) -> Profile {
        for pending in self.sampler.take_sampled_young() {
            let type_id = match pending.kind {
                SampleKind::Large => pending.type_id,
                SampleKind::Nursery => self
                    .header(pending.address)
                    .map(|h| h.type_id)
                    .unwrap_or(UNRESOLVED_TYPE),
            };
            self.recorder
                .record_resolution(pending.sample_index, type_id, Survival::Unknown);
        }
        self.recorder.finish(&self.types)
    }
}

#[cfg(test)]
mod tests;
