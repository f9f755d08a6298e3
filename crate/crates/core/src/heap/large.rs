//! Large-object space: one allocation per object, never moved, swept by the
//! major collector.

use std::collections::BTreeMap;

use super::object::{GcFlags, ObjectHeader, ObjectRef, Words, WORD};
use super::old_space::SweepOutcome;

pub(crate) struct LargeObject {
    pub mem: Words,
    reserved: u64,
}

pub(crate) struct LargeObjectSpace {
    pub objects: BTreeMap<u64, LargeObject>,
    next_id: u64,
    page_round: u64,
    reserved_bytes: u64,
    used_bytes: u64,
}

impl LargeObjectSpace {
    pub fn new(page_round: u64) -> Self {
        Self {
            objects: BTreeMap::new(),
            next_id: 1,
            page_round,
            reserved_bytes: 0,
            used_bytes: 0,
        }
    }

    pub fn reserved_bytes(&self) -> u64 {
        self.reserved_bytes
    }

    pub fn used_bytes(&self) -> u64 {
        self.used_bytes
    }

    pub fn live_objects(&self) -> u64 {
        self.objects.len() as u64
    }

    /// Arena bytes backing an object of `total_bytes`.
    pub fn reservation(&self, total_bytes: u64) -> u64 {
        total_bytes.div_ceil(self.page_round) * self.page_round
    }

    pub fn allocate(&mut self, header: ObjectHeader) -> ObjectRef {
        let total = header.total_bytes();
        let mut mem = Words::zeroed((total / WORD) as usize);
        mem.init_object(0, header);
        let reserved = self.reservation(total);
        let id = self.next_id;
        self.next_id += 1;
        self.objects.insert(id, LargeObject { mem, reserved });
        self.reserved_bytes += reserved;
        self.used_bytes += total;
        ObjectRef::large(id)
    }

    pub fn get(&self, r: ObjectRef) -> Option<&LargeObject> {
        self.objects.get(&r.large_id())
    }

    pub fn get_mut(&mut self, r: ObjectRef) -> Option<&mut LargeObject> {
        self.objects.get_mut(&r.large_id())
    }

    pub fn sweep(&mut self, mut on_free: impl FnMut(ObjectRef)) -> SweepOutcome {
        let mut outcome = SweepOutcome::default();
        let mut reserved_freed = 0;
        self.objects.retain(|&id, object| {
            let mut header = object.mem.header(0);
            if header.flags.contains(GcFlags::MARKED) {
                header.flags.remove(GcFlags::MARKED);
                object.mem.set_header(0, header);
                outcome.objects_live += 1;
                true
            } else {
                outcome.objects_freed += 1;
                outcome.bytes_freed += header.total_bytes();
                reserved_freed += object.reserved;
                on_free(ObjectRef::large(id));
                false
            }
        });
        self.used_bytes -= outcome.bytes_freed;
        self.reserved_bytes -= reserved_freed;
        outcome
    }
}
