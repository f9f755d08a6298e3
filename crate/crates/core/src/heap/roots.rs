use std::fmt;

use super::object::ObjectRef;

/// Handle to a root slot. The collector rewrites the slot when its object
/// moves, so mutators re-read the root after anything that may collect.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct RootId {
    index: u32,
    generation: u32,
}

impl fmt::Display for RootId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "root#{}.{}", self.index, self.generation)
    }
}

struct Slot {
    generation: u32,
    value: Option<ObjectRef>,
}

/// Slab of root slots; freed slots are reused with a bumped generation so
/// stale handles are detected.
#[derive(Default)]
pub(crate) struct RootSet {
    slots: Vec<Slot>,
    free: Vec<u32>,
    live: usize,
}

impl RootSet {
    pub fn add(&mut self, r: ObjectRef) -> RootId {
        self.live += 1;
        if let Some(index) = self.free.pop() {
            let slot = &mut self.slots[index as usize];
            slot.value = Some(r);
            RootId {
                index,
                generation: slot.generation,
            }
        } else {
            self.slots.push(Slot {
                generation: 0,
                value: Some(r),
            });
            RootId {
                index: (self.slots.len() - 1) as u32,
                generation: 0,
            }
        }
    }

    fn slot(&self, id: RootId) -> Option<&Slot> {
        self.slots
            .get(id.index as usize)
            .filter(|s| s.generation == id.generation && s.value.is_some())
    }

    pub fn get(&self, id: RootId) -> Option<ObjectRef> {
        self.slot(id).and_then(|s| s.value)
    }

    pub fn set(&mut self, id: RootId, r: ObjectRef) -> bool {
        if self.slot(id).is_none() {
            return false;
        }
        self.slots[id.index as usize].value = Some(r);
        true
    }

    pub fn remove(&mut self, id: RootId) -> Option<ObjectRef> {
        self.slot(id)?;
        let slot = &mut self.slots[id.index as usize];
        let value = slot.value.take();
        slot.generation = slot.generation.wrapping_add(1);
        self.free.push(id.index);
        self.live -= 1;
        value
    }

    pub fn len(&self) -> usize {
        self.live
    }

    pub fn values(&self) -> impl Iterator<Item = ObjectRef> + '_ {
        self.slots.iter().filter_map(|s| s.value)
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn value_at(&self, index: usize) -> Option<ObjectRef> {
        self.slots[index].value
    }

    pub fn set_at(&mut self, index: usize, r: ObjectRef) {
        self.slots[index].value = Some(r);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn removed_handles_go_stale_even_after_reuse() {
        let mut roots = RootSet::default();
        let a = roots.add(ObjectRef::nursery(0));
        assert_eq!(roots.remove(a), Some(ObjectRef::nursery(0)));
        let b = roots.add(ObjectRef::nursery(16));
        assert_eq!(roots.get(a), None);
        assert_eq!(roots.get(b), Some(ObjectRef::nursery(16)));
        assert_eq!(roots.len(), 1);
        assert_eq!(roots.remove(a), None);
    }
}
