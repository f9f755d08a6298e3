//! Object model: header word, references, payload values.

use std::fmt;

use crate::recorder::TypeId;

/// Size of a machine word and of the object header, in bytes.
pub const WORD: u64 = 8;

/// GC flag bits stored in the second 16 bits of every header.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct GcFlags(u16);

impl GcFlags {
    pub const NONE: GcFlags = GcFlags(0);
    /// The first payload word holds the forwarding address.
    pub const FORWARDED: GcFlags = GcFlags(1 << 0);
    pub const TENURED: GcFlags = GcFlags(1 << 1);
    pub const MARKED: GcFlags = GcFlags(1 << 2);
    /// Set between a sampled allocation and the next minor collection.
    pub const SAMPLED: GcFlags = GcFlags(1 << 3);

    pub const fn bits(self) -> u16 {
        self.0
    }

    pub const fn from_bits(bits: u16) -> Self {
        GcFlags(bits)
    }

    pub const fn contains(self, other: GcFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: GcFlags) {
        self.0 |= other.0;
    }

    pub fn remove(&mut self, other: GcFlags) {
        self.0 &= !other.0;
    }
}

impl fmt::Debug for GcFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = [
            (GcFlags::FORWARDED, "FORWARDED"),
            (GcFlags::TENURED, "TENURED"),
            (GcFlags::MARKED, "MARKED"),
            (GcFlags::SAMPLED, "SAMPLED"),
        ];
        let set: Vec<&str> = names
            .iter()
            .filter(|(flag, _)| self.contains(*flag))
            .map(|(_, name)| *name)
            .collect();
        write!(f, "GcFlags({})", set.join("|"))
    }
}

/// One-word object header: 16-bit type id, 16 bits of GC flags, and the
/// payload length in words packed into what would otherwise be padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObjectHeader {
    pub type_id: TypeId,
    pub flags: GcFlags,
    pub size_words: u32,
}

impl ObjectHeader {
    pub fn new(type_id: TypeId, size_words: u32) -> Self {
        Self {
            type_id,
            flags: GcFlags::NONE,
            size_words,
        }
    }

    pub fn encode(self) -> u64 {
        u64::from(self.type_id)
            | (u64::from(self.flags.bits()) << 16)
            | (u64::from(self.size_words) << 32)
    }

    pub fn decode(word: u64) -> Self {
        Self {
            type_id: word as u16,
            flags: GcFlags::from_bits((word >> 16) as u16),
            size_words: (word >> 32) as u32,
        }
    }

    /// Header plus payload, in bytes.
    pub fn total_bytes(self) -> u64 {
        WORD * (1 + u64::from(self.size_words))
    }
}

/// Which space an [`ObjectRef`] points into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Space {
    Nursery,
    Old,
    Large,
}

const SPACE_SHIFT: u32 = 60;
const OLD_TAG: u64 = 1 << SPACE_SHIFT;
const LARGE_TAG: u64 = 2 << SPACE_SHIFT;
const BLOCK_SHIFT: u32 = 32;
const LOW_MASK: u64 = (1 << BLOCK_SHIFT) - 1;

/// Address of an object header.
///
/// Nursery addresses are plain byte offsets from the nursery start, so the
/// nursery cursors and object addresses share one coordinate system. Old and
/// large objects carry a space tag in the top bits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectRef(u64);

impl ObjectRef {
    pub const fn from_raw(raw: u64) -> Self {
        ObjectRef(raw)
    }

    pub const fn raw(self) -> u64 {
        self.0
    }

    pub(crate) const fn nursery(offset: u64) -> Self {
        ObjectRef(offset)
    }

    pub(crate) const fn old(block: u32, offset: u32) -> Self {
        ObjectRef(OLD_TAG | ((block as u64) << BLOCK_SHIFT) | offset as u64)
    }

    pub(crate) const fn large(id: u64) -> Self {
        ObjectRef(LARGE_TAG | id)
    }

    pub fn space(self) -> Space {
        match self.0 >> SPACE_SHIFT {
            0 => Space::Nursery,
            1 => Space::Old,
            _ => Space::Large,
        }
    }

    pub fn is_young(self) -> bool {
        self.space() == Space::Nursery
    }

    pub(crate) fn nursery_offset(self) -> u64 {
        self.0
    }

    pub(crate) fn old_parts(self) -> (usize, usize) {
        (
            ((self.0 & !OLD_TAG) >> BLOCK_SHIFT) as usize,
            (self.0 & LOW_MASK) as usize,
        )
    }

    pub(crate) fn large_id(self) -> u64 {
        self.0 & !LARGE_TAG
    }
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.space() {
            Space::Nursery => write!(f, "nursery+{:#x}", self.0),
            Space::Old => {
                let (block, offset) = self.old_parts();
                write!(f, "old[{block}]+{offset:#x}")
            }
            Space::Large => write!(f, "large#{}", self.large_id()),
        }
    }
}

impl fmt::Debug for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A payload word: either a reference the collector traces or an opaque scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Value {
    Scalar(u64),
    Ref(ObjectRef),
}

/// Word storage with a parallel reference tag per word.
#[derive(Debug, Clone)]
pub(crate) struct Words {
    pub words: Vec<u64>,
    pub refs: Vec<bool>,
}

impl Words {
    pub fn zeroed(len: usize) -> Self {
        Self {
            words: vec![0; len],
            refs: vec![false; len],
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn header(&self, at: usize) -> ObjectHeader {
        ObjectHeader::decode(self.words[at])
    }

    pub fn set_header(&mut self, at: usize, header: ObjectHeader) {
        self.words[at] = header.encode();
        self.refs[at] = false;
    }

    pub fn get(&self, at: usize) -> Value {
        if self.refs[at] {
            Value::Ref(ObjectRef(self.words[at]))
        } else {
            Value::Scalar(self.words[at])
        }
    }

    pub fn set(&mut self, at: usize, value: Value) {
        match value {
            Value::Scalar(v) => {
                self.words[at] = v;
                self.refs[at] = false;
            }
            Value::Ref(r) => {
                self.words[at] = r.raw();
                self.refs[at] = true;
            }
        }
    }

    /// Writes a header followed by `payload` zeroed scalar words.
    pub fn init_object(&mut self, at: usize, header: ObjectHeader) {
        let end = at + 1 + header.size_words as usize;
        self.words[at] = header.encode();
        self.words[at + 1..end].fill(0);
        self.refs[at..end].fill(false);
    }
}

/// Total object size for a payload request: header plus payload rounded up
/// to whole words, with at least one payload word (the forwarding slot).
pub fn object_bytes(payload_bytes: u64) -> u64 {
    WORD + payload_words(payload_bytes) * WORD
}

pub fn payload_words(payload_bytes: u64) -> u64 {
    payload_bytes.div_ceil(WORD).max(1)
}
