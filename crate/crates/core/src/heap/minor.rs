//! Copying minor collection and sampled-object resolution.

use std::collections::HashSet;

use super::nursery::Nursery;
use super::object::{GcFlags, ObjectRef, Space, Value, WORD};
use super::{GcPhase, Heap, Mutation};
use crate::error::GcError;
use crate::profile::{GcEventKind, SampleKind, Survival};
use crate::recorder::TypeId;
use crate::sampler::PendingSample;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MinorCollectionReport {
    /// `nursery_free - nursery_start` before evacuation.
    pub nursery_used: u64,
    pub bytes_copied: u64,
    pub objects_copied: u64,
    /// `nursery_used - bytes_copied`.
    pub bytes_reclaimed: u64,
    /// How far `nursery_free` moved back; the sample point moves by the same.
    pub free_delta: u64,
    pub samples_resolved: u64,
    pub samples_tenured: u64,
    pub start_ns: u64,
    pub end_ns: u64,
}

impl Heap {
    /// Evacuates every nursery object reachable from the roots and the
    /// remembered set into the old space and empties the nursery.
    pub fn minor_collection(&mut self) -> Result<MinorCollectionReport, GcError> {
        self.collect_minor()
    }

    pub(super) fn collect_minor(&mut self) -> Result<MinorCollectionReport, GcError> {
        let start_ns = self.clock.now_ns();
        let old_free = self.nursery.state.free;
        let mut report = MinorCollectionReport {
            nursery_used: self.nursery.state.used(),
            start_ns,
            ..Default::default()
        };
        let mut scan = Vec::new();

        for slot in 0..self.roots.slot_count() {
            if let Some(r) = self.roots.value_at(slot) {
                let moved = self.evacuate(r, &mut scan, &mut report)?;
                if self.mutation != Some(Mutation::SkipRootUpdate) {
                    self.roots.set_at(slot, moved);
                }
            }
        }
        for holder in std::mem::take(&mut self.remembered) {
            self.scan_fields(holder, &mut scan, &mut report)?;
        }
        for i in 0..self.gray.len() {
            self.gray[i] = self.evacuate(self.gray[i], &mut scan, &mut report)?;
        }
        while let Some(copy) = scan.pop() {
            self.scan_fields(copy, &mut scan, &mut report)?;
        }

        let pending = self.sampler.take_sampled_young();
        self.resolve_sampled(&pending, old_free, &mut report)?;

        if self.mutation != Some(Mutation::SkipNurseryReset) {
            self.nursery.state.free = self.nursery.state.start;
        }
        report.free_delta = old_free - self.nursery.state.free;
        report.bytes_reclaimed = report.nursery_used - report.bytes_copied;
        self.sampler
            .on_minor_collection(report.free_delta, &mut self.nursery.state);

        self.counters.minor_collections += 1;
        self.counters.bytes_tenured += report.bytes_copied;
        report.end_ns = self.clock.now_ns();
        self.recorder
            .record_gc_event(GcEventKind::Minor, self.phase, start_ns, report.end_ns);
        self.record_heap_stats();
        Ok(report)
    }

    /// Returns the post-collection address of `r`, copying it out of the
    /// nursery on first visit.
    fn evacuate(
        &mut self,
        r: ObjectRef,
        scan: &mut Vec<ObjectRef>,
        report: &mut MinorCollectionReport,
    ) -> Result<ObjectRef, GcError> {
        if !r.is_young() {
            return Ok(r);
        }
        let offset = r.nursery_offset();
        if !self.nursery.holds(offset) {
            return Err(GcError::InvalidReference(r));
        }
        let at = Nursery::word_index(offset);
        let mut header = self.nursery.mem.header(at);
        if header.flags.contains(GcFlags::FORWARDED) {
            return Ok(ObjectRef::from_raw(self.nursery.mem.words[at + 1]));
        }

        let cell_words = 1 + header.size_words as usize;
        let growth = self.old.growth_needed(cell_words);
        self.ensure_arena_room(growth)?;
        let copy = self.old.allocate(cell_words);
        let (block, dest) = self.old.locate(copy).expect("fresh cell");
        let mem = &mut self.old.blocks[block].mem;
        mem.words[dest..dest + cell_words]
            .copy_from_slice(&self.nursery.mem.words[at..at + cell_words]);
        mem.refs[dest..dest + cell_words]
            .copy_from_slice(&self.nursery.mem.refs[at..at + cell_words]);
        let mut copied = header;
        copied.flags.remove(GcFlags::SAMPLED);
        copied.flags.insert(GcFlags::TENURED);
        if self.phase == GcPhase::Marking {
            copied.flags.insert(GcFlags::MARKED);
        }
        mem.set_header(dest, copied);

        header.flags.insert(GcFlags::FORWARDED);
        self.nursery.mem.set_header(at, header);
        self.nursery.mem.set(at + 1, Value::Scalar(copy.raw()));

        report.bytes_copied += header.total_bytes();
        report.objects_copied += 1;
        scan.push(copy);
        Ok(copy)
    }

    /// Rewrites every nursery reference held by `holder` to its copy.
    fn scan_fields(
        &mut self,
        holder: ObjectRef,
        scan: &mut Vec<ObjectRef>,
        report: &mut MinorCollectionReport,
    ) -> Result<(), GcError> {
        let len = match self.header(holder) {
            Ok(header) => header.size_words as usize,
            // Swept since it was remembered.
            Err(_) => return Ok(()),
        };
        for i in 0..len {
            if let Value::Ref(target) = self.read_field(holder, i)? {
                if target.is_young() {
                    let moved = self.evacuate(target, scan, report)?;
                    let (mem, at) = self.locate_mut(holder)?;
                    mem.set(at + 1 + i, Value::Ref(moved));
                }
            }
        }
        Ok(())
    }

    /// Walks the sampled addresses registered since the previous collection
    /// and records type and survival for each sample.
    fn resolve_sampled(
        &mut self,
        pending: &[PendingSample],
        old_free: u64,
        report: &mut MinorCollectionReport,
    ) -> Result<(), GcError> {
        let large_live = if pending.iter().any(|p| p.kind == SampleKind::Large) {
            self.reachable_from_roots()
        } else {
            HashSet::new()
        };
        for sample in pending {
            let (type_id, mut survived) = match sample.kind {
                SampleKind::Nursery => self.resolve_nursery_sample(sample.address, old_free)?,
                SampleKind::Large => {
                    let survived = if large_live.contains(&sample.address) {
                        Survival::Tenured
                    } else {
                        Survival::DiedYoung
                    };
                    (sample.type_id, survived)
                }
            };
            if self.mutation == Some(Mutation::InvertSurvival) {
                survived = match survived {
                    Survival::Tenured => Survival::DiedYoung,
                    Survival::DiedYoung => Survival::Tenured,
                    Survival::Unknown => Survival::Unknown,
                };
            }
            if sample.kind == SampleKind::Large {
                self.update_flags(sample.address, |flags| flags.remove(GcFlags::SAMPLED));
            }
            if survived == Survival::Tenured {
                report.samples_tenured += 1;
            }
            report.samples_resolved += 1;
            self.recorder
                .record_resolution(sample.sample_index, type_id, survived);
        }
        Ok(())
    }

    fn resolve_nursery_sample(
        &self,
        address: ObjectRef,
        old_free: u64,
    ) -> Result<(TypeId, Survival), GcError> {
        let offset = address.nursery_offset();
        if address.space() != Space::Nursery
            || !offset.is_multiple_of(WORD)
            || offset + WORD > old_free
        {
            return Err(GcError::Corruption(format!(
                "sampled address {address} outside the evacuated nursery"
            )));
        }
        let at = Nursery::word_index(offset);
        let header = self.nursery.mem.header(at);
        let (header, survived) = if header.flags.contains(GcFlags::FORWARDED) {
            let copy = ObjectRef::from_raw(self.nursery.mem.words[at + 1]);
            (self.header(copy)?, Survival::Tenured)
        } else {
            (header, Survival::DiedYoung)
        };
        if !self.types.contains(header.type_id) {
            return Err(GcError::Corruption(format!(
                "sampled object {address} has unregistered type {}",
                header.type_id
            )));
        }
        Ok((header.type_id, survived))
    }

    /// Every object transitively reachable from the root set.
    pub(super) fn reachable_from_roots(&self) -> HashSet<ObjectRef> {
        let mut seen = HashSet::new();
        let mut stack: Vec<ObjectRef> = self.roots.values().collect();
        while let Some(r) = stack.pop() {
            if !seen.insert(r) {
                continue;
            }
            stack.extend(self.ref_fields(r));
        }
        seen
    }

    /// Reference-tagged payload words of `r`; empty for unresolvable refs.
    pub(super) fn ref_fields(&self, r: ObjectRef) -> Vec<ObjectRef> {
        let Ok((mem, at)) = self.locate(r) else {
            return Vec::new();
        };
        let len = mem.header(at).size_words as usize;
        (at + 1..at + 1 + len)
            .filter(|&i| mem.refs[i])
            .map(|i| ObjectRef::from_raw(mem.words[i]))
            .collect()
    }
}
