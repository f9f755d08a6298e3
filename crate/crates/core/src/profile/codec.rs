//! `GPRF` encoding. Little-endian throughout:
//!
//! ```text
//! magic "GPRF", version u16
//! record*: tag u8, payload_length u32, payload
//! ```
//!
//! The first record is always META. Unknown tags are skipped and counted.

use std::io::{self, Write};

use super::{
    GcEventKind, GcEventRecord, HeapStatsRecord, Profile, ProfileMeta, Record, ResolutionRecord,
    SampleKind, SampleRecord, Survival,
};
use crate::error::ProfileError;
use crate::heap::GcPhase;

pub const MAGIC: &[u8; 4] = b"GPRF";
pub const VERSION: u16 = 1;

const TAG_META: u8 = 0x01;
const TAG_SAMPLE: u8 = 0x02;
const TAG_RESOLUTION: u8 = 0x03;
const TAG_HEAP_STATS: u8 = 0x04;
const TAG_GC_EVENT: u8 = 0x05;
const TAG_TYPE_MAP: u8 = 0x06;
const TAG_FRAME_MAP: u8 = 0x07;

fn too_long(what: &str) -> io::Error {
    io::Error::new(
        io::ErrorKind::InvalidInput,
        format!("{what} does not fit its length field"),
    )
}

fn put_name(buf: &mut Vec<u8>, name: &str) -> io::Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| too_long("name"))?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    Ok(())
}

fn encode_record(record: &Record, payload: &mut Vec<u8>) -> io::Result<u8> {
    Ok(match record {
        Record::Sample(s) => {
            payload.extend_from_slice(&s.sample_index.to_le_bytes());
            payload.extend_from_slice(&s.timestamp_ns.to_le_bytes());
            payload.push(s.kind.code());
            payload.extend_from_slice(&s.alloc_size.to_le_bytes());
            let n = u16::try_from(s.stack.len()).map_err(|_| too_long("stack"))?;
            payload.extend_from_slice(&n.to_le_bytes());
            for frame in &s.stack {
                payload.extend_from_slice(&frame.to_le_bytes());
            }
            TAG_SAMPLE
        }
        Record::Resolution(r) => {
            payload.extend_from_slice(&r.sample_index.to_le_bytes());
            payload.extend_from_slice(&r.type_id.to_le_bytes());
            payload.push(r.survived.code());
            TAG_RESOLUTION
        }
        Record::HeapStats(h) => {
            payload.extend_from_slice(&h.timestamp_ns.to_le_bytes());
            payload.extend_from_slice(&h.total_size_of_arenas.to_le_bytes());
            payload.extend_from_slice(&h.total_memory_used.to_le_bytes());
            payload.extend_from_slice(&h.rss.to_le_bytes());
            payload.push(h.gc_phase.code());
            TAG_HEAP_STATS
        }
        Record::GcEvent(e) => {
            payload.push(e.kind.code());
            payload.push(e.phase.code());
            payload.extend_from_slice(&e.start_ns.to_le_bytes());
            payload.extend_from_slice(&e.end_ns.to_le_bytes());
            TAG_GC_EVENT
        }
        Record::TypeMap(entries) => {
            let n = u16::try_from(entries.len()).map_err(|_| too_long("type map"))?;
            payload.extend_from_slice(&n.to_le_bytes());
            for (id, name) in entries {
                payload.extend_from_slice(&id.to_le_bytes());
                put_name(payload, name)?;
            }
            TAG_TYPE_MAP
        }
        Record::FrameMap(entries) => {
            let n = u32::try_from(entries.len()).map_err(|_| too_long("frame map"))?;
            payload.extend_from_slice(&n.to_le_bytes());
            for (id, name) in entries {
                payload.extend_from_slice(&id.to_le_bytes());
                put_name(payload, name)?;
            }
            TAG_FRAME_MAP
        }
    })
}

fn write_record(sink: &mut impl Write, tag: u8, payload: &[u8]) -> io::Result<u64> {
    let len = u32::try_from(payload.len()).map_err(|_| too_long("payload"))?;
    sink.write_all(&[tag])?;
    sink.write_all(&len.to_le_bytes())?;
    sink.write_all(payload)?;
    Ok(5 + payload.len() as u64)
}

impl Profile {
    /// Writes the stream to `sink` and returns the number of bytes written.
    pub fn serialize(&self, sink: &mut impl Write) -> io::Result<u64> {
        sink.write_all(MAGIC)?;
        sink.write_all(&VERSION.to_le_bytes())?;
        let mut written = 6;

        let mut payload = Vec::with_capacity(64);
        payload.extend_from_slice(&self.meta.sample_n_bytes.to_le_bytes());
        payload.extend_from_slice(&self.meta.nursery_size.to_le_bytes());
        payload.extend_from_slice(&self.meta.start_time_ns.to_le_bytes());
        written += write_record(sink, TAG_META, &payload)?;

        for record in &self.records {
            payload.clear();
            let tag = encode_record(record, &mut payload)?;
            written += write_record(sink, tag, &payload)?;
        }
        Ok(written)
    }
}

/// Result of parsing a stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub profile: Profile,
    /// Records with unrecognized tags that were skipped.
    pub unknown_records: usize,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ProfileError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or(ProfileError::Truncated { offset: self.pos })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, ProfileError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ProfileError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ProfileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ProfileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn name(&mut self) -> Result<String, ProfileError> {
        let len = self.u16()? as usize;
        let offset = self.pos;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| ProfileError::InvalidField {
            offset,
            field: "utf-8 name",
        })
    }

    fn phase(&mut self) -> Result<GcPhase, ProfileError> {
        let offset = self.pos;
        GcPhase::from_code(self.u8()?).ok_or(ProfileError::InvalidField {
            offset,
            field: "gc phase",
        })
    }
}

fn decode_payload(tag: u8, r: &mut Reader<'_>) -> Result<Option<Record>, ProfileError> {
    let record = match tag {
        TAG_SAMPLE => {
            let sample_index = r.u64()?;
            let timestamp_ns = r.u64()?;
            let offset = r.pos;
            let kind = SampleKind::from_code(r.u8()?).ok_or(ProfileError::InvalidField {
                offset,
                field: "sample kind",
            })?;
            let alloc_size = r.u64()?;
            let n = r.u16()? as usize;
            let stack = (0..n).map(|_| r.u32()).collect::<Result<_, _>>()?;
            Record::Sample(SampleRecord {
                sample_index,
                timestamp_ns,
                kind,
                alloc_size,
                stack,
            })
        }
        TAG_RESOLUTION => {
            let sample_index = r.u64()?;
            let type_id = r.u16()?;
            let offset = r.pos;
            let survived = Survival::from_code(r.u8()?).ok_or(ProfileError::InvalidField {
                offset,
                field: "survival flag",
            })?;
            Record::Resolution(ResolutionRecord {
                sample_index,
                type_id,
                survived,
            })
        }
        TAG_HEAP_STATS => Record::HeapStats(HeapStatsRecord {
            timestamp_ns: r.u64()?,
            total_size_of_arenas: r.u64()?,
            total_memory_used: r.u64()?,
            rss: r.u64()?,
            gc_phase: r.phase()?,
        }),
        TAG_GC_EVENT => {
            let offset = r.pos;
            let kind = GcEventKind::from_code(r.u8()?).ok_or(ProfileError::InvalidField {
                offset,
                field: "gc event kind",
            })?;
            Record::GcEvent(GcEventRecord {
                kind,
                phase: r.phase()?,
                start_ns: r.u64()?,
                end_ns: r.u64()?,
            })
        }
        TAG_TYPE_MAP => {
            let n = r.u16()?;
            let mut entries = Vec::with_capacity(n as usize);
            for _ in 0..n {
                entries.push((r.u16()?, r.name()?));
            }
            Record::TypeMap(entries)
        }
        TAG_FRAME_MAP => {
            let n = r.u32()?;
            let mut entries = Vec::new();
            for _ in 0..n {
                entries.push((r.u32()?, r.name()?));
            }
            Record::FrameMap(entries)
        }
        _ => return Ok(None),
    };
    Ok(Some(record))
}

/// Parses a complete `GPRF` stream. Errors name the byte offset at fault.
pub fn parse(bytes: &[u8]) -> Result<Decoded, ProfileError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| ProfileError::BadMagic)? != MAGIC {
        return Err(ProfileError::BadMagic);
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(ProfileError::UnsupportedVersion(version));
    }

    let meta_offset = r.pos;
    if r.u8()? != TAG_META {
        return Err(ProfileError::MissingMeta {
            offset: meta_offset,
        });
    }
    let meta_len = r.u32()? as usize;
    let body_start = r.pos;
    let meta = ProfileMeta {
        sample_n_bytes: r.u64()?,
        nursery_size: r.u64()?,
        start_time_ns: r.u64()?,
    };
    check_length(meta_offset, body_start, meta_len, r.pos)?;

    let mut profile = Profile::new(meta);
    let mut unknown_records = 0;
    while r.pos < bytes.len() {
        let record_offset = r.pos;
        let tag = r.u8()?;
        let len = r.u32()? as usize;
        let body_start = r.pos;
        let body = r.take(len)?;
        let mut body_reader = Reader {
            bytes: &bytes[..body_start + body.len()],
            pos: body_start,
        };
        match decode_payload(tag, &mut body_reader)? {
            Some(record) => {
                check_length(record_offset, body_start, len, body_reader.pos)?;
                profile.records.push(record);
            }
            None => unknown_records += 1,
        }
    }
    Ok(Decoded {
        profile,
        unknown_records,
    })
}

fn check_length(
    offset: usize,
    start: usize,
    declared: usize,
    end: usize,
) -> Result<(), ProfileError> {
    if end - start != declared {
        return Err(ProfileError::PayloadLength {
            offset,
            declared,
            used: end - start,
        });
    }
    Ok(())
}
