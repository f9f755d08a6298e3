use super::*;
use crate::clock::{ArenaRss, ManualClock};
use crate::profile::{GcEventKind, Record};

fn heap(nursery: u64) -> Heap {
    Heap::with_sources(
        HeapConfig::with_nursery_size(nursery),
        Box::new(ManualClock::new(0)),
        Box::new(ArenaRss),
    )
    .unwrap()
}

fn heap_with_type(nursery: u64) -> (Heap, TypeId) {
    let mut h = heap(nursery);
    let t = h.register_type("Node").unwrap();
    (h, t)
}

/// Payload size whose object occupies exactly `total` bytes.
fn payload(total: u64) -> u64 {
    total - WORD
}

fn sample_count(h: &Heap) -> u64 {
    h.recorder().samples_taken()
}

fn resolutions(profile: &Profile) -> Vec<(u64, TypeId, Survival)> {
    profile
        .resolutions()
        .map(|r| (r.sample_index, r.type_id, r.survived))
        .collect()
}

#[test]
fn config_validation() {
    assert!(HeapConfig::default().validate().is_ok());
    assert_eq!(HeapConfig::default().nursery_size, 1 << 20);
    assert_eq!(HeapConfig::default().large_object_threshold, 1 << 17);
    let mut c = HeapConfig::with_nursery_size(1000);
    assert!(c.validate().is_err());
    c = HeapConfig::with_nursery_size(1024);
    c.large_object_threshold = 1024;
    assert!(c.validate().is_err());
}

#[test]
fn allocation_bumps_by_rounded_size() {
    let (mut h, t) = heap_with_type(1024);
    let r = h.allocate(payload(64), t).unwrap();
    assert_eq!(r, ObjectRef::nursery(0));
    assert_eq!(h.nursery().free(), 64);
    let r = h.allocate(13, t).unwrap();
    assert_eq!(r, ObjectRef::nursery(64));
    assert_eq!(h.nursery().free(), 64 + 24);
    assert_eq!(h.payload_len(r).unwrap(), 2);
    assert_eq!(h.read_field(r, 1).unwrap(), Value::Scalar(0));
}

#[test]
fn exact_fill_stays_on_fast_path() {
    let (mut h, t) = heap_with_type(1024);
    for _ in 0..15 {
        h.allocate(payload(64), t).unwrap();
    }
    assert_eq!(h.nursery().free(), 960);
    let r = h.allocate(payload(64), t).unwrap();
    assert_eq!(r, ObjectRef::nursery(960));
    assert_eq!(h.nursery().free(), 1024);
    assert_eq!(h.counters().minor_collections, 0);
}

#[test]
fn full_nursery_collects_and_places_at_start() {
    let (mut h, t) = heap_with_type(1024);
    for _ in 0..16 {
        h.allocate(payload(64), t).unwrap();
    }
    let r = h.allocate(payload(64), t).unwrap();
    assert_eq!(r, ObjectRef::nursery(0));
    assert_eq!(h.nursery().free(), 64);
    assert_eq!(h.counters().minor_collections, 1);
}

#[test]
fn crossing_allocation_is_sampled_without_collection() {
    let (mut h, t) = heap_with_type(4096);
    h.enable_sampling(256).unwrap();
    h.allocate(payload(64), t).unwrap();
    h.allocate(payload(192), t).unwrap();
    assert_eq!(sample_count(&h), 0);
    assert_eq!(h.nursery().free(), 256);
    // Smallest object: a header and one word.
    let r = h.allocate(0, t).unwrap();
    assert_eq!(r, ObjectRef::nursery(256));
    assert_eq!(sample_count(&h), 1);
    assert_eq!(h.nursery().sample_point(), 512);
    assert_eq!(h.nursery().limit(), 512);
    assert_eq!(h.counters().minor_collections, 0);
    assert_eq!(h.sampler().sampled_young()[0].address, r);
}

#[test]
fn sample_point_beyond_top_clamps_limit() {
    let (mut h, t) = heap_with_type(1024);
    h.enable_sampling(256).unwrap();
    for _ in 0..12 {
        h.allocate(payload(64), t).unwrap();
    }
    // Third crossing at 768 moves the point to 1024 = top.
    assert_eq!(sample_count(&h), 2);
    h.allocate(payload(64), t).unwrap();
    assert_eq!(sample_count(&h), 3);
    assert_eq!(h.nursery().sample_point(), 1024);
    assert_eq!(h.nursery().limit(), 1024);
}

#[test]
fn period_beyond_nursery_drifts_left_with_each_collection() {
    let (mut h, t) = heap_with_type(1024);
    h.enable_sampling(4096).unwrap();
    assert_eq!(h.nursery().limit(), 1024);
    for _ in 0..17 {
        h.allocate(payload(64), t).unwrap();
    }
    assert_eq!(h.counters().minor_collections, 1);
    // 1024 bytes evacuated, one 64-byte object placed since.
    assert_eq!(h.nursery().sample_point(), 3072);
    assert_eq!(h.nursery().limit(), 1024);
    for _ in 17..64 {
        h.allocate(payload(64), t).unwrap();
    }
    assert_eq!(sample_count(&h), 0);
    assert_eq!(h.nursery().sample_point(), 1024);
    h.allocate(payload(64), t).unwrap();
    assert_eq!(sample_count(&h), 1);
    assert_eq!(h.counters().minor_collections, 4);
    assert_eq!(h.nursery().bytes_until_sample(), 4096 - 64);
}

#[test]
fn forced_collection_of_empty_nursery_keeps_sample_point() {
    let mut h = heap(1024);
    h.enable_sampling(300).unwrap();
    let report = h.minor_collection().unwrap();
    assert_eq!(report.free_delta, 0);
    assert_eq!(h.nursery().sample_point(), 300);
}

#[test]
fn large_allocation_with_sampling_off_leaves_nursery_alone() {
    let (mut h, t) = heap_with_type(4096);
    assert_eq!(h.config().large_object_threshold, 512);
    let before = *h.nursery();
    let r = h.alloc(600, t).unwrap();
    assert_eq!(r.space(), Space::Large);
    assert_eq!(*h.nursery(), before);
    assert_eq!(h.payload_len(r).unwrap(), 75);
}

#[test]
fn large_allocation_samples_twice_for_one_object() {
    let (mut h, t) = heap_with_type(4096);
    h.enable_sampling(256).unwrap();
    let r = h.alloc(payload(600), t).unwrap();
    assert_eq!(sample_count(&h), 2);
    let pending = h.sampler().sampled_young();
    assert_eq!(pending.len(), 2);
    assert!(pending.iter().all(|p| p.address == r && p.type_id == t));
    assert_ne!(pending[0].sample_index, pending[1].sample_index);
    assert!(h.header(r).unwrap().flags.contains(GcFlags::SAMPLED));
}

#[test]
fn large_allocation_after_partial_countdown_samples_once() {
    let (mut h, t) = heap_with_type(1024);
    h.enable_sampling(256).unwrap();
    h.allocate(payload(96), t).unwrap();
    assert_eq!(h.nursery().bytes_until_sample(), 160);
    let r = h.alloc(payload(200), t).unwrap();
    assert_eq!(r.space(), Space::Large);
    assert_eq!(sample_count(&h), 1);
    assert_eq!(h.nursery().bytes_until_sample(), 216);
}

#[test]
fn roots_follow_objects_across_collection() {
    let (mut h, t) = heap_with_type(1024);
    let a = h.alloc(16, t).unwrap();
    let b = h.alloc(16, t).unwrap();
    h.write_field(a, 0, Value::Scalar(7)).unwrap();
    h.write_field(a, 1, Value::Ref(b)).unwrap();
    h.write_field(b, 0, Value::Scalar(9)).unwrap();
    let root = h.add_root(a);
    h.minor_collection().unwrap();
    let a2 = h.root(root).unwrap();
    assert_eq!(a2.space(), Space::Old);
    assert_eq!(h.read_field(a2, 0).unwrap(), Value::Scalar(7));
    let Value::Ref(b2) = h.read_field(a2, 1).unwrap() else {
        panic!("reference field lost its tag");
    };
    assert_eq!(h.read_field(b2, 0).unwrap(), Value::Scalar(9));
    let header = h.header(b2).unwrap();
    assert!(header.flags.contains(GcFlags::TENURED));
    assert!(!header.flags.contains(GcFlags::FORWARDED));
    assert!(h.header(a).is_err());
}

#[test]
fn conservation_of_bytes() {
    let (mut h, t) = heap_with_type(4096);
    let mut kept = 0;
    for i in 0..40u64 {
        let r = h.alloc(i % 5 * 8, t).unwrap();
        if i % 3 == 0 {
            h.add_root(r);
            kept += object_bytes(i % 5 * 8);
        }
    }
    let used = h.nursery().used();
    let report = h.minor_collection().unwrap();
    assert_eq!(report.nursery_used, used);
    assert_eq!(report.bytes_copied, kept);
    assert_eq!(report.bytes_reclaimed, used - kept);
    assert_eq!(report.objects_copied, 14);
    assert_eq!(h.nursery().used(), 0);
}

#[test]
fn shared_objects_are_copied_once() {
    let (mut h, t) = heap_with_type(1024);
    let shared = h.alloc(8, t).unwrap();
    let a = h.alloc(8, t).unwrap();
    let b = h.alloc(8, t).unwrap();
    h.write_field(a, 0, Value::Ref(shared)).unwrap();
    h.write_field(b, 0, Value::Ref(shared)).unwrap();
    let ra = h.add_root(a);
    let rb = h.add_root(b);
    let report = h.minor_collection().unwrap();
    assert_eq!(report.objects_copied, 3);
    let fa = h.read_field(h.root(ra).unwrap(), 0).unwrap();
    let fb = h.read_field(h.root(rb).unwrap(), 0).unwrap();
    assert_eq!(fa, fb);
}

#[test]
fn remembered_large_object_keeps_young_target_alive() {
    let (mut h, t) = heap_with_type(4096);
    let big = h.alloc(1000, t).unwrap();
    let root = h.add_root(big);
    let young = h.alloc(8, t).unwrap();
    h.write_field(young, 0, Value::Scalar(42)).unwrap();
    h.write_field(big, 3, Value::Ref(young)).unwrap();
    let report = h.minor_collection().unwrap();
    assert_eq!(report.objects_copied, 1);
    let big = h.root(root).unwrap();
    let Value::Ref(moved) = h.read_field(big, 3).unwrap() else {
        panic!("expected a reference");
    };
    assert_eq!(moved.space(), Space::Old);
    assert_eq!(h.read_field(moved, 0).unwrap(), Value::Scalar(42));
}

#[test]
fn resolution_reports_survival_and_type() {
    let mut h = heap(1024);
    let node = h.register_type("Node").unwrap();
    let leaf = h.register_type("Leaf").unwrap();
    h.enable_sampling(64).unwrap();
    // The first object ends exactly on the sample point; each later one crosses.
    h.alloc(payload(64), node).unwrap();
    assert_eq!(sample_count(&h), 0);
    let b = h.alloc(payload(64), leaf).unwrap();
    let c = h.alloc(payload(64), node).unwrap();
    h.alloc(payload(64), leaf).unwrap();
    assert_eq!(sample_count(&h), 3);
    h.add_root(b);
    h.add_root(c);
    let report = h.minor_collection().unwrap();
    assert_eq!(report.samples_resolved, 3);
    assert_eq!(report.samples_tenured, 2);
    assert!(h.sampler().sampled_young().is_empty());
    assert_eq!(
        resolutions(&h.finish()),
        vec![
            (0, leaf, Survival::Tenured),
            (1, node, Survival::Tenured),
            (2, leaf, Survival::DiedYoung)
        ]
    );
}

#[test]
fn large_sample_resolution_uses_reachability() {
    let (mut h, t) = heap_with_type(4096);
    h.enable_sampling(512).unwrap();
    let kept = h.alloc(1000, t).unwrap();
    h.add_root(kept);
    h.alloc(1000, t).unwrap();
    assert_eq!(sample_count(&h), 3);
    h.minor_collection().unwrap();
    assert!(!h.header(kept).unwrap().flags.contains(GcFlags::SAMPLED));
    let survived: Vec<_> = resolutions(&h.finish()).into_iter().map(|r| r.2).collect();
    assert_eq!(
        survived,
        vec![Survival::Tenured, Survival::DiedYoung, Survival::DiedYoung]
    );
}

#[test]
fn finish_flushes_pending_samples_as_unknown() {
    let (mut h, t) = heap_with_type(1024);
    h.enable_sampling(16).unwrap();
    h.alloc(payload(40), t).unwrap();
    let profile = h.finish();
    assert_eq!(
        resolutions(&profile),
        vec![(0, t, Survival::Unknown), (1, t, Survival::Unknown)]
    );
}

#[test]
fn disable_before_enable_changes_nothing() {
    let mut h = heap(1024);
    let before = *h.nursery();
    h.disable_sampling();
    assert_eq!(*h.nursery(), before);
    h.nursery().check_cursors().unwrap();
    h.nursery().check_limit_law(false).unwrap();
}

fn addresses(h: &mut Heap, t: TypeId) -> Vec<ObjectRef> {
    (0..300u64)
        .map(|i| h.alloc(i * 37 % 700, t).unwrap())
        .collect()
}

#[test]
fn sampling_does_not_change_placement() {
    let (mut never, t) = heap_with_type(4096);
    let (mut toggled, _) = heap_with_type(4096);
    toggled.enable_sampling(128).unwrap();
    toggled.disable_sampling();
    let (mut infinite, _) = heap_with_type(4096);
    infinite
        .enable_sampling(crate::sampler::MAX_PERIOD)
        .unwrap();
    let a = addresses(&mut never, t);
    assert_eq!(a, addresses(&mut toggled, t));
    assert_eq!(a, addresses(&mut infinite, t));
    assert_eq!(never.counters(), toggled.counters());
    assert_eq!(never.counters(), infinite.counters());
    assert_eq!(sample_count(&infinite), 0);
}

#[test]
fn fast_path_has_no_sampling_branch() {
    let source = include_str!("mod.rs");
    let start = source.find("pub fn allocate(").expect("allocate defined");
    let body = &source[start..];
    let end = body.find("\n    }\n").expect("allocate body ends");
    let body = &body[..end];
    assert!(
        !body.contains("sampl"),
        "allocate mentions sampling:\n{body}"
    );
    assert!(body.contains("collect_and_reserve"));
}

#[test]
fn mutator_errors() {
    let (mut h, t) = heap_with_type(1024);
    let r = h.alloc(8, t).unwrap();
    assert_eq!(
        h.read_field(r, 1),
        Err(GcError::FieldOutOfBounds { index: 1, len: 1 })
    );
    assert_eq!(h.alloc(8, 99), Err(GcError::UnknownType(99)));
    let id = h.add_root(r);
    h.remove_root(id).unwrap();
    assert_eq!(h.root(id), Err(GcError::StaleRoot(id)));
    assert!(h.pop_frame().is_err());
}

#[test]
fn major_cycle_walks_every_phase() {
    let mut h = heap(1024);
    let mut seen = Vec::new();
    loop {
        let phase = h.major_collection_step().unwrap();
        seen.push(phase);
        if phase == GcPhase::None {
            break;
        }
    }
    assert_eq!(
        seen,
        vec![
            GcPhase::Scanning,
            GcPhase::Marking,
            GcPhase::Sweeping,
            GcPhase::Finalizing,
            GcPhase::None
        ]
    );
    let profile = h.finish();
    let phases: Vec<_> = profile
        .gc_events()
        .filter(|e| e.kind == GcEventKind::MajorPhase)
        .map(|e| e.phase)
        .collect();
    assert_eq!(phases, seen);
}

#[test]
fn major_cycle_without_roots_frees_everything() {
    let (mut h, t) = heap_with_type(1024);
    let roots: Vec<_> = (0..10)
        .map(|_| {
            let r = h.alloc(24, t).unwrap();
            h.add_root(r)
        })
        .collect();
    h.alloc(300, t).unwrap();
    h.minor_collection().unwrap();
    for id in roots {
        h.remove_root(id).unwrap();
    }
    let stats = h.major_collection().unwrap();
    assert_eq!(stats.objects_swept, 11);
    assert_eq!(stats.objects_live, 0);
    assert_eq!(h.old_live_objects() + h.large_live_objects(), 0);
}

/// Builds a full binary tree of `depth` levels in which every internal node
/// also points at one extra leaf through field 2. Must not trigger a
/// collection.
fn tree_with_extras(h: &mut Heap, t: TypeId, depth: u32) -> (ObjectRef, u64) {
    let node = h.alloc(24, t).unwrap();
    if depth == 1 {
        return (node, 0);
    }
    let (left, el) = tree_with_extras(h, t, depth - 1);
    let (right, er) = tree_with_extras(h, t, depth - 1);
    let extra = h.alloc(24, t).unwrap();
    h.write_field(node, 0, Value::Ref(left)).unwrap();
    h.write_field(node, 1, Value::Ref(right)).unwrap();
    h.write_field(node, 2, Value::Ref(extra)).unwrap();
    (node, el + er + 1)
}

fn prune_extras(h: &mut Heap, node: ObjectRef) {
    if let Value::Ref(_) = h.read_field(node, 2).unwrap() {
        h.write_field(node, 2, Value::Scalar(0)).unwrap();
        for i in 0..2 {
            if let Value::Ref(child) = h.read_field(node, i).unwrap() {
                prune_extras(h, child);
            }
        }
    }
}

#[test]
fn major_cycle_sweeps_exactly_the_garbage() {
    let (mut h, t) = heap_with_type(4096);
    let (tree, garbage) = tree_with_extras(&mut h, t, 4);
    assert_eq!(garbage, 7);
    let root = h.add_root(tree);
    assert_eq!(h.minor_collection().unwrap().objects_copied, 22);
    let tree = h.root(root).unwrap();
    prune_extras(&mut h, tree);
    let stats = h.major_collection().unwrap();
    assert_eq!(stats.objects_swept, garbage);
    assert_eq!(stats.objects_live, 15);
    assert_eq!(stats.objects_marked, 15);
    assert!(matches!(h.read_field(tree, 0).unwrap(), Value::Ref(_)));
}

#[test]
fn objects_tenured_during_marking_survive_the_sweep() {
    let (mut h, t) = heap_with_type(1024);
    h.major_collection_step().unwrap();
    h.major_collection_step().unwrap();
    assert_eq!(h.phase(), GcPhase::Marking);
    let r = h.alloc(8, t).unwrap();
    let id = h.add_root(r);
    let big = h.alloc(500, t).unwrap();
    let big_root = h.add_root(big);
    h.minor_collection().unwrap();
    let stats = h.major_collection().unwrap();
    assert_eq!(stats.objects_swept, 0);
    assert!(h.header(h.root(id).unwrap()).is_ok());
    assert!(h.header(h.root(big_root).unwrap()).is_ok());
}

#[test]
fn heap_stats_track_usage_and_phase() {
    let (mut h, t) = heap_with_type(4096);
    assert_eq!(h.record_heap_stats().total_memory_used, 0);
    let mut roots = Vec::new();
    for _ in 0..200 {
        let r = h.alloc(504, t).unwrap();
        roots.push(h.add_root(r));
    }
    h.minor_collection().unwrap();
    let copied: u64 = 200 * 512;
    let stats = h.record_heap_stats();
    assert!(stats.total_memory_used >= copied);
    assert!(stats.total_size_of_arenas >= stats.total_memory_used);
    h.major_collection_step().unwrap();
    h.major_collection_step().unwrap();
    let profile = h.finish();
    let last = profile.heap_stats().last().unwrap();
    assert_eq!(last.gc_phase, GcPhase::Marking);
    let minors = profile
        .records
        .iter()
        .filter(|r| matches!(r, Record::GcEvent(e) if e.kind == GcEventKind::Minor))
        .count();
    assert!(minors >= 1);
}

#[test]
fn phase_codes_round_trip() {
    let mut phase = GcPhase::None;
    for _ in 0..5 {
        assert_eq!(GcPhase::from_code(phase.code()), Some(phase));
        phase = phase.next();
    }
    assert_eq!(phase, GcPhase::None);
    assert_eq!(GcPhase::from_code(5), None);
}
