//! Old-space mark-sweep, run one phase per step.
//!
//! Each step is stop-the-world, but the mutator may run between steps.
//! Objects allocated or tenured while the phase is MARKING are allocated
//! black, so sweeping never frees an object created after marking finished.

use std::collections::HashSet;

use super::object::{GcFlags, ObjectRef};
use super::{GcPhase, Heap};
use crate::error::GcError;
use crate::profile::GcEventKind;

/// Totals for the current (or most recent) major cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MajorCycleStats {
    pub objects_marked: u64,
    pub objects_swept: u64,
    pub bytes_swept: u64,
    /// Old and large objects that survived the sweep.
    pub objects_live: u64,
}

impl Heap {
    /// Advances the old-space cycle by one phase and performs that phase's
    /// work. Returns the phase entered.
    pub fn major_collection_step(&mut self) -> Result<GcPhase, GcError> {
        let start_ns = self.clock.now_ns();
        let next = self.phase.next();
        match next {
            GcPhase::Scanning => {
                self.major_stats = MajorCycleStats::default();
                self.collect_minor()?;
                self.gray = self.roots.values().collect();
            }
            GcPhase::Marking => self.mark(),
            GcPhase::Sweeping => self.sweep(),
            GcPhase::Finalizing => self.gray.clear(),
            GcPhase::None => self.counters.major_cycles += 1,
        }
        self.phase = next;
        let end_ns = self.clock.now_ns();
        self.recorder
            .record_gc_event(GcEventKind::MajorPhase, next, start_ns, end_ns);
        self.record_heap_stats();
        Ok(next)
    }

    /// Steps until the cycle returns to NONE, finishing any cycle in progress
    /// or running a full one.
    pub fn major_collection(&mut self) -> Result<MajorCycleStats, GcError> {
        while self.major_collection_step()? != GcPhase::None {}
        Ok(self.major_stats)
    }

    pub fn major_stats(&self) -> MajorCycleStats {
        self.major_stats
    }

    fn mark(&mut self) {
        let mut stack: Vec<ObjectRef> = self.roots.values().collect();
        stack.append(&mut self.gray);
        let mut young_seen = HashSet::new();
        while let Some(r) = stack.pop() {
            if r.is_young() {
                if !young_seen.insert(r) {
                    continue;
                }
            } else {
                match self.header(r) {
                    Ok(header) if !header.flags.contains(GcFlags::MARKED) => {}
                    _ => continue,
                }
                self.update_flags(r, |flags| flags.insert(GcFlags::MARKED));
                self.major_stats.objects_marked += 1;
            }
            stack.extend(self.ref_fields(r));
        }
    }

    fn sweep(&mut self) {
        let mut freed = Vec::new();
        let old = self.old.sweep(|r| freed.push(r));
        let large = self.large.sweep(|r| freed.push(r));
        for r in freed {
            self.remembered.remove(&r);
        }
        self.major_stats.objects_swept = old.objects_freed + large.objects_freed;
        self.major_stats.bytes_swept = old.bytes_freed + large.bytes_freed;
        self.major_stats.objects_live = old.objects_live + large.objects_live;
    }
}
