//! Shadow-stack sampling and profile record collection.

use std::collections::HashMap;

use crate::error::GcError;
use crate::heap::GcPhase;
use crate::profile::{
    GcEventKind, GcEventRecord, HeapStatsRecord, Profile, ProfileMeta, Record, ResolutionRecord,
    SampleKind, SampleRecord, Survival,
};

pub type TypeId = u16;
pub type FrameId = u32;

/// Interning table for type names. Id 0 is reserved for "unknown".
#[derive(Debug, Clone)]
pub struct TypeRegistry {
    names: Vec<String>,
    ids: HashMap<String, TypeId>,
}

impl Default for TypeRegistry {
    fn default() -> Self {
        Self {
            names: vec!["unknown".to_owned()],
            ids: HashMap::new(),
        }
    }
}

impl TypeRegistry {
    pub fn register(&mut self, name: &str) -> Result<TypeId, GcError> {
        if let Some(&id) = self.ids.get(name) {
            return Ok(id);
        }
        let id = TypeId::try_from(self.names.len()).map_err(|_| GcError::TypeRegistryFull)?;
        if id == TypeId::MAX {
            return Err(GcError::TypeRegistryFull);
        }
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        Ok(id)
    }

    pub fn name(&self, id: TypeId) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, id: TypeId) -> bool {
        (id as usize) < self.names.len()
    }

    /// Registered types, excluding the reserved id 0.
    pub fn entries(&self) -> Vec<(TypeId, String)> {
        self.names
            .iter()
            .enumerate()
            .skip(1)
            .map(|(id, name)| (id as TypeId, name.clone()))
            .collect()
    }
}

/// Dense interning of frame names.
#[derive(Debug, Clone, Default)]
pub struct FrameRegistry {
    names: Vec<String>,
    ids: HashMap<String, FrameId>,
}

impl FrameRegistry {
    pub fn intern(&mut self, name: &str) -> FrameId {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as FrameId;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn name(&self, id: FrameId) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn entries(&self) -> Vec<(FrameId, String)> {
        self.names
            .iter()
            .enumerate()
            .map(|(id, name)| (id as FrameId, name.clone()))
            .collect()
    }
}

/// Maximum frames kept per sample; deeper stacks keep their leaf-most frames.
pub const MAX_SAMPLE_FRAMES: usize = u16::MAX as usize;

/// Collects the record stream while the mutator runs.
#[derive(Debug, Clone)]
pub struct ProfileRecorder {
    meta: ProfileMeta,
    records: Vec<Record>,
    frames: FrameRegistry,
    stack: Vec<FrameId>,
    samples_taken: u64,
}

impl ProfileRecorder {
    pub fn new(meta: ProfileMeta) -> Self {
        Self {
            meta,
            records: Vec::new(),
            frames: FrameRegistry::default(),
            stack: Vec::new(),
            samples_taken: 0,
        }
    }

    pub fn meta(&self) -> ProfileMeta {
        self.meta
    }

    pub(crate) fn set_sample_n_bytes(&mut self, period: u64) {
        self.meta.sample_n_bytes = period;
    }

    pub fn intern_frame(&mut self, name: &str) -> FrameId {
        self.frames.intern(name)
    }

    pub fn push_frame(&mut self, name: &str) -> FrameId {
        let id = self.frames.intern(name);
        self.stack.push(id);
        id
    }

    /// Pushes an already interned frame; the cheap path for hot loops.
    pub fn push_frame_id(&mut self, id: FrameId) {
        debug_assert!((id as usize) < self.frames.len());
        self.stack.push(id);
    }

    pub fn pop_frame(&mut self) -> Result<FrameId, GcError> {
        self.stack.pop().ok_or(GcError::ShadowStackUnderflow)
    }

    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    pub fn frames(&self) -> &FrameRegistry {
        &self.frames
    }

    /// Snapshots the shadow stack into a new sample and returns its ordinal.
    pub fn sample_now(&mut self, kind: SampleKind, alloc_size: u64, timestamp_ns: u64) -> u64 {
        let sample_index = self.samples_taken;
        self.samples_taken += 1;
        let skip = self.stack.len().saturating_sub(MAX_SAMPLE_FRAMES);
        self.records.push(Record::Sample(SampleRecord {
            sample_index,
            timestamp_ns,
            kind,
            alloc_size,
            stack: self.stack[skip..].to_vec(),
        }));
        sample_index
    }

    pub fn samples_taken(&self) -> u64 {
        self.samples_taken
    }

    pub fn record_resolution(&mut self, sample_index: u64, type_id: TypeId, survived: Survival) {
        self.records.push(Record::Resolution(ResolutionRecord {
            sample_index,
            type_id,
            survived,
        }));
    }

    pub fn record_gc_event(
        &mut self,
        kind: GcEventKind,
        phase: GcPhase,
        start_ns: u64,
        end_ns: u64,
    ) {
        self.records.push(Record::GcEvent(GcEventRecord {
            kind,
            phase,
            start_ns,
            end_ns,
        }));
    }

    pub fn record_heap_stats(&mut self, stats: HeapStatsRecord) {
        self.records.push(Record::HeapStats(stats));
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// Closes the stream: appends the type and frame maps.
    pub(crate) fn finish(mut self, types: &TypeRegistry) -> Profile {
        let types = types.entries();
        if !types.is_empty() {
            self.records.push(Record::TypeMap(types));
        }
        if !self.frames.is_empty() {
            self.records.push(Record::FrameMap(self.frames.entries()));
        }
        Profile {
            meta: self.meta,
            records: self.records,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recorder() -> ProfileRecorder {
        ProfileRecorder::new(ProfileMeta {
            sample_n_bytes: 256,
            nursery_size: 1024,
            start_time_ns: 0,
        })
    }

    #[test]
    fn push_and_pop_track_depth() {
        let mut rec = recorder();
        rec.push_frame("main");
        rec.push_frame("alloc_loop");
        assert_eq!(rec.depth(), 2);
        rec.pop_frame().unwrap();
        rec.pop_frame().unwrap();
        assert_eq!(rec.depth(), 0);
        assert_eq!(rec.pop_frame(), Err(GcError::ShadowStackUnderflow));
    }

    #[test]
    fn frames_are_interned_once() {
        let mut rec = recorder();
        let a = rec.push_frame("f");
        let b = rec.push_frame("g");
        let c = rec.push_frame("f");
        assert_eq!((a, b, c), (0, 1, 0));
        assert_eq!(rec.frames().len(), 2);
    }

    #[test]
    fn sample_snapshots_stack_leaf_last() {
        let mut rec = recorder();
        assert_eq!(rec.sample_now(SampleKind::Nursery, 16, 5), 0);
        rec.push_frame("a");
        rec.push_frame("b");
        rec.push_frame("c");
        assert_eq!(rec.sample_now(SampleKind::Large, 600, 6), 1);
        let samples: Vec<_> = rec
            .records()
            .iter()
            .filter_map(|r| match r {
                Record::Sample(s) => Some(s.clone()),
                _ => None,
            })
            .collect();
        assert!(samples[0].stack.is_empty());
        assert_eq!(samples[1].stack, vec![0, 1, 2]);
    }

    #[test]
    fn type_registry_reserves_zero() {
        let mut types = TypeRegistry::default();
        assert_eq!(types.name(0), Some("unknown"));
        let node = types.register("Node").unwrap();
        assert_eq!(node, 1);
        assert_eq!(types.register("Node").unwrap(), 1);
        assert_eq!(types.entries(), vec![(1, "Node".to_owned())]);
    }

    #[test]
    fn type_registry_caps_at_u16() {
        let mut types = TypeRegistry::default();
        for i in 1..u16::MAX {
            types.register(&format!("t{i}")).unwrap();
        }
        assert_eq!(types.register("overflow"), Err(GcError::TypeRegistryFull));
    }

    #[test]
    fn finish_appends_maps_only_when_populated() {
        let profile = recorder().finish(&TypeRegistry::default());
        assert!(profile.records.is_empty());
    }
}
