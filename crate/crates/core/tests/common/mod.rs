#![allow(dead_code)]

use gcprof::heap::GcPhase;
use gcprof::profile::{
    GcEventKind, GcEventRecord, HeapStatsRecord, Profile, ProfileMeta, Record, ResolutionRecord,
    SampleKind, SampleRecord, Survival,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

/// A runner that executes exactly `cases` cases from a fixed seed.
pub fn deterministic_runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

pub fn arb_phase() -> impl Strategy<Value = GcPhase> {
    prop_oneof![
        Just(GcPhase::None),
        Just(GcPhase::Scanning),
        Just(GcPhase::Marking),
        Just(GcPhase::Sweeping),
        Just(GcPhase::Finalizing),
    ]
}

fn arb_kind() -> impl Strategy<Value = SampleKind> {
    prop_oneof![Just(SampleKind::Nursery), Just(SampleKind::Large)]
}

fn arb_survival() -> impl Strategy<Value = Survival> {
    prop_oneof![
        Just(Survival::DiedYoung),
        Just(Survival::Tenured),
        Just(Survival::Unknown)
    ]
}

/// Any record, with no cross-record consistency.
pub fn arb_record() -> impl Strategy<Value = Record> {
    prop_oneof![
        4 => (any::<u64>(), any::<u64>(), arb_kind(), any::<u64>(), prop::collection::vec(any::<u32>(), 0..24))
            .prop_map(|(sample_index, timestamp_ns, kind, alloc_size, stack)| {
                Record::Sample(SampleRecord { sample_index, timestamp_ns, kind, alloc_size, stack })
            }),
        3 => (any::<u64>(), any::<u16>(), arb_survival())
            .prop_map(|(sample_index, type_id, survived)| Record::Resolution(ResolutionRecord { sample_index, type_id, survived })),
        2 => (any::<u64>(), any::<u64>(), any::<u64>(), any::<u64>(), arb_phase()).prop_map(|(t, a, u, r, p)| {
            Record::HeapStats(HeapStatsRecord { timestamp_ns: t, total_size_of_arenas: a, total_memory_used: u, rss: r, gc_phase: p })
        }),
        2 => (prop_oneof![Just(GcEventKind::Minor), Just(GcEventKind::MajorPhase)], arb_phase(), any::<u64>(), any::<u64>())
            .prop_map(|(kind, phase, start_ns, end_ns)| Record::GcEvent(GcEventRecord { kind, phase, start_ns, end_ns })),
        1 => prop::collection::vec((any::<u16>(), "\\PC{0,16}"), 0..6).prop_map(Record::TypeMap),
        1 => prop::collection::vec((any::<u32>(), "\\PC{0,16}"), 0..6).prop_map(Record::FrameMap),
    ]
}

pub fn arb_meta() -> impl Strategy<Value = ProfileMeta> {
    (any::<u64>(), any::<u64>(), any::<u64>()).prop_map(
        |(sample_n_bytes, nursery_size, start_time_ns)| ProfileMeta {
            sample_n_bytes,
            nursery_size,
            start_time_ns,
        },
    )
}

/// An arbitrary record stream.
pub fn arb_stream() -> impl Strategy<Value = Profile> {
    (arb_meta(), prop::collection::vec(arb_record(), 0..64))
        .prop_map(|(meta, records)| Profile { meta, records })
}

#[derive(Debug, Clone)]
enum Event {
    Sample {
        kind: SampleKind,
        size: u64,
        stack: Vec<u32>,
    },
    Collect {
        survivals: Vec<bool>,
        types: Vec<u16>,
        stats: (u64, u64, u64),
    },
    Major {
        phase: GcPhase,
        stats: (u64, u64, u64),
    },
}

/// A profile shaped like a recorder's output: registered types and frames,
/// sequential sample indices, resolutions at collections, ordered time.
pub fn arb_profile() -> impl Strategy<Value = Profile> {
    let types = prop::collection::vec("[A-Za-z][A-Za-z0-9_]{0,11}", 1..6);
    let frames = prop::collection::vec("[a-z_][a-z0-9_:.]{0,15}", 1..10);
    (types, frames, 1u64..1 << 24, 0u64..1 << 40).prop_flat_map(|(types, frames, period, start)| {
        let n_frames = frames.len() as u32;
        let n_types = types.len() as u16;
        let event = prop_oneof![
            6 => (arb_kind(), 16u64..1 << 20, prop::collection::vec(0..n_frames, 0..12))
                .prop_map(|(kind, size, stack)| Event::Sample { kind, size, stack }),
            2 => (prop::collection::vec(any::<bool>(), 16), prop::collection::vec(1..=n_types, 16), (1u64..1 << 30, any::<u64>(), any::<u64>()))
                .prop_map(|(survivals, types, stats)| Event::Collect { survivals, types, stats }),
            1 => (arb_phase(), (1u64..1 << 30, any::<u64>(), any::<u64>()))
                .prop_map(|(phase, stats)| Event::Major { phase, stats }),
        ];
        (
            Just(types),
            Just(frames),
            Just(period),
            Just(start),
            prop::collection::vec((event, 0u64..5_000_000), 0..120),
            any::<bool>(),
        )
            .prop_map(|(types, frames, period, start, events, flush)| {
                build_profile(types, frames, period, start, events, flush)
            })
    })
}

fn build_profile(
    types: Vec<String>,
    frames: Vec<String>,
    period: u64,
    start: u64,
    events: Vec<(Event, u64)>,
    flush: bool,
) -> Profile {
    let mut records = vec![
        Record::TypeMap(
            types
                .into_iter()
                .enumerate()
                .map(|(i, n)| (i as u16 + 1, n))
                .collect(),
        ),
        Record::FrameMap(
            frames
                .into_iter()
                .enumerate()
                .map(|(i, n)| (i as u32, n))
                .collect(),
        ),
    ];
    let mut now = start;
    let mut next_index = 0u64;
    let mut pending = Vec::new();
    let stats =
        |records: &mut Vec<Record>, now: u64, (arenas, used, rss): (u64, u64, u64), phase| {
            records.push(Record::HeapStats(HeapStatsRecord {
                timestamp_ns: now,
                total_size_of_arenas: arenas,
                total_memory_used: used % (arenas + 1),
                rss: rss >> 16,
                gc_phase: phase,
            }));
        };
    for (event, gap) in events {
        now += gap;
        match event {
            Event::Sample { kind, size, stack } => {
                records.push(Record::Sample(SampleRecord {
                    sample_index: next_index,
                    timestamp_ns: now,
                    kind,
                    alloc_size: size,
                    stack,
                }));
                pending.push(next_index);
                next_index += 1;
            }
            Event::Collect {
                survivals,
                types,
                stats: s,
            } => {
                let end = now + gap / 2;
                records.push(Record::GcEvent(GcEventRecord {
                    kind: GcEventKind::Minor,
                    phase: GcPhase::None,
                    start_ns: now,
                    end_ns: end,
                }));
                for (i, index) in pending.drain(..).enumerate() {
                    records.push(Record::Resolution(ResolutionRecord {
                        sample_index: index,
                        type_id: types[i % types.len()],
                        survived: if survivals[i % survivals.len()] {
                            Survival::Tenured
                        } else {
                            Survival::DiedYoung
                        },
                    }));
                }
                now = end;
                stats(&mut records, now, s, GcPhase::None);
            }
            Event::Major { phase, stats: s } => {
                records.push(Record::GcEvent(GcEventRecord {
                    kind: GcEventKind::MajorPhase,
                    phase,
                    start_ns: now,
                    end_ns: now + gap / 4,
                }));
                now += gap / 4;
                stats(&mut records, now, s, phase);
            }
        }
    }
    if flush {
        for index in pending {
            records.push(Record::Resolution(ResolutionRecord {
                sample_index: index,
                type_id: 0,
                survived: Survival::Unknown,
            }));
        }
    }
    Profile {
        meta: ProfileMeta {
            sample_n_bytes: period,
            nursery_size: 1 << 20,
            start_time_ns: start,
        },
        records,
    }
}

pub fn count_records(profile: &Profile) -> (usize, usize, usize) {
    let samples = profile
        .records
        .iter()
        .filter(|r| matches!(r, Record::Sample(_)))
        .count();
    let events = profile
        .records
        .iter()
        .filter(|r| matches!(r, Record::GcEvent(_)))
        .count();
    let stats = profile
        .records
        .iter()
        .filter(|r| matches!(r, Record::HeapStats(_)))
        .count();
    (samples, events, stats)
}
