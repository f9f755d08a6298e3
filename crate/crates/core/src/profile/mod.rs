//! Profile records and the `GPRF` binary stream.
//!
//! A profile is an append-only sequence of records. Samples are written when
//! taken; their type and survival arrive later as separate resolution records.

mod codec;

use std::collections::HashMap;

pub use codec::{parse, Decoded, MAGIC, VERSION};

use crate::heap::GcPhase;
use crate::recorder::{FrameId, TypeId};

/// Type id used when the type of a sample could not be determined.
pub const UNRESOLVED_TYPE: TypeId = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleKind {
    Nursery,
    Large,
}

impl SampleKind {
    pub fn code(self) -> u8 {
        match self {
            SampleKind::Nursery => 0,
            SampleKind::Large => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SampleKind::Nursery),
            1 => Some(SampleKind::Large),
            _ => None,
        }
    }
}

/// Whether a sampled object survived the first minor collection after its
/// allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Survival {
    DiedYoung,
    Tenured,
    Unknown,
}

impl Survival {
    pub fn code(self) -> u8 {
        match self {
            Survival::DiedYoung => 0,
            Survival::Tenured => 1,
            Survival::Unknown => 0xFF,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Survival::DiedYoung),
            1 => Some(Survival::Tenured),
            0xFF => Some(Survival::Unknown),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GcEventKind {
    Minor,
    MajorPhase,
}

impl GcEventKind {
    pub fn code(self) -> u8 {
        match self {
            GcEventKind::Minor => 0,
            GcEventKind::MajorPhase => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(GcEventKind::Minor),
            1 => Some(GcEventKind::MajorPhase),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProfileMeta {
    pub sample_n_bytes: u64,
    pub nursery_size: u64,
    pub start_time_ns: u64,
}

/// One allocation sample. Frames are ordered root first, leaf last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub sample_index: u64,
    pub timestamp_ns: u64,
    pub kind: SampleKind,
    pub alloc_size: u64,
    pub stack: Vec<FrameId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolutionRecord {
    pub sample_index: u64,
    pub type_id: TypeId,
    pub survived: Survival,
}

/// Heap telemetry snapshot taken at every minor collection and major step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeapStatsRecord {
    pub timestamp_ns: u64,
    pub total_size_of_arenas: u64,
    pub total_memory_used: u64,
    pub rss: u64,
    pub gc_phase: GcPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcEventRecord {
    pub kind: GcEventKind,
    pub phase: GcPhase,
    pub start_ns: u64,
    pub end_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Sample(SampleRecord),
    Resolution(ResolutionRecord),
    HeapStats(HeapStatsRecord),
    GcEvent(GcEventRecord),
    TypeMap(Vec<(TypeId, String)>),
    FrameMap(Vec<(FrameId, String)>),
}

impl Record {
    /// The time a record is ordered by, if it carries one.
    pub fn timestamp_ns(&self) -> Option<u64> {
        match self {
            Record::Sample(s) => Some(s.timestamp_ns),
            Record::HeapStats(h) => Some(h.timestamp_ns),
            Record::GcEvent(e) => Some(e.start_ns),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    pub meta: ProfileMeta,
    pub records: Vec<Record>,
}

/// A sample joined with its resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedSample<'a> {
    pub sample: &'a SampleRecord,
    pub type_id: TypeId,
    pub survived: Survival,
}

impl Profile {
    pub fn new(meta: ProfileMeta) -> Self {
        Self {
            meta,
            records: Vec::new(),
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Sample(s) => Some(s),
            _ => None,
        })
    }

    pub fn resolutions(&self) -> impl Iterator<Item = &ResolutionRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Resolution(s) => Some(s),
            _ => None,
        })
    }

    pub fn heap_stats(&self) -> impl Iterator<Item = &HeapStatsRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::HeapStats(s) => Some(s),
            _ => None,
        })
    }

    pub fn gc_events(&self) -> impl Iterator<Item = &GcEventRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::GcEvent(s) => Some(s),
            _ => None,
        })
    }

    /// Merged type names from every TYPE_MAP record.
    pub fn type_names(&self) -> HashMap<TypeId, &str> {
        let mut names = HashMap::new();
        for record in &self.records {
            if let Record::TypeMap(entries) = record {
                names.extend(entries.iter().map(|(id, name)| (*id, name.as_str())));
            }
        }
        names
    }

    pub fn frame_names(&self) -> HashMap<FrameId, &str> {
        let mut names = HashMap::new();
        for record in &self.records {
            if let Record::FrameMap(entries) = record {
                names.extend(entries.iter().map(|(id, name)| (*id, name.as_str())));
            }
        }
        names
    }

    /// Samples in stream order with their resolution applied. Samples that
    /// never got one report `Survival::Unknown`.
    pub fn resolved_samples(&self) -> Vec<ResolvedSample<'_>> {
        let resolutions: HashMap<u64, &ResolutionRecord> =
            self.resolutions().map(|r| (r.sample_index, r)).collect();
        self.samples()
            .map(|sample| match resolutions.get(&sample.sample_index) {
                Some(r) => ResolvedSample {
                    sample,
                    type_id: r.type_id,
                    survived: r.survived,
                },
                None => ResolvedSample {
                    sample,
                    type_id: UNRESOLVED_TYPE,
                    survived: Survival::Unknown,
                },
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.serialize(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }
}
