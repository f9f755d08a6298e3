//! Deterministic allocation workloads driven through the shadow stack.
//!
//! Allocation behavior depends only on the parameters, never on the sampling
//! period or the clock, so byte totals are comparable across runs.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clock::{ArenaRss, Clock, MonotonicClock};
use crate::error::GcError;
use crate::heap::{Heap, HeapConfig, HeapCounters, ObjectRef, RootId, Value, DEFAULT_NURSERY_SIZE};
use crate::profile::Profile;
use crate::recorder::{FrameId, TypeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Workload {
    /// Binary trees built bottom-up and discarded, next to one long-lived tree.
    GcbenchLike,
    /// One 64-byte object per iteration, none retained.
    AllocLoop,
    /// Mostly small strings plus occasional large ones, a ring of which stays
    /// live.
    StringChurn,
}

impl Workload {
    pub const ALL: [Workload; 3] = [
        Workload::GcbenchLike,
        Workload::AllocLoop,
        Workload::StringChurn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Workload::GcbenchLike => "gcbench_like",
            Workload::AllocLoop => "alloc_loop",
            Workload::StringChurn => "string_churn",
        }
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Workload {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Workload::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Workload::ALL.iter().map(|w| w.name()).collect();
                format!("unknown workload {s:?} (known: {})", known.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub workload: Workload,
    /// Outer rounds for gcbench_like and string_churn, allocations for
    /// alloc_loop.
    pub iterations: u64,
    /// Depth of the largest tree in gcbench_like.
    pub tree_depth: u32,
    /// Largest small-string payload in string_churn.
    pub max_small_string: u64,
}

impl WorkloadSpec {
    pub fn new(workload: Workload) -> Self {
        let iterations = match workload {
            Workload::GcbenchLike => 4,
            Workload::AllocLoop => 2_000_000,
            Workload::StringChurn => 200_000,
        };
        Self {
            workload,
            iterations,
            tree_depth: 16,
            max_small_string: 256,
        }
    }

    pub fn with_iterations(mut self, iterations: u64) -> Self {
        self.iterations = iterations;
        self
    }
}

/// gcbench_like node: left, right and two scalars.
const NODE_PAYLOAD: u64 = 32;
/// alloc_loop object: 64 bytes with its header.
pub const ALLOC_LOOP_PAYLOAD: u64 = 56;
const STRING_RING: usize = 32;
const CHURN_SEED: u64 = 0x5eed;

struct Types {
    node: TypeId,
    object: TypeId,
    string: TypeId,
    large_string: TypeId,
}

/// Frames interned up front so hot loops skip the name lookup.
struct Frames {
    make_tree: FrameId,
    make_string: FrameId,
    make_large_string: FrameId,
    body: FrameId,
}

struct Ctx {
    types: Types,
    frames: Frames,
}

impl Ctx {
    fn register(heap: &mut Heap) -> Result<Self, GcError> {
        Ok(Self {
            types: Types {
                node: heap.register_type("Node")?,
                object: heap.register_type("Object")?,
                string: heap.register_type("String")?,
                large_string: heap.register_type("LargeString")?,
            },
            frames: Frames {
                make_tree: heap.intern_frame("make_tree"),
                make_string: heap.intern_frame("make_string"),
                make_large_string: heap.intern_frame("make_large_string"),
                body: heap.intern_frame("alloc_loop_body"),
            },
        })
    }
}

/// Runs `spec` on `heap`. The heap's sampling state is left untouched.
pub fn run_workload(heap: &mut Heap, spec: &WorkloadSpec) -> Result<(), GcError> {
    let ctx = Ctx::register(heap)?;
    heap.push_frame(spec.workload.name());
    match spec.workload {
        Workload::GcbenchLike => gcbench_like(heap, spec, &ctx)?,
        Workload::AllocLoop => alloc_loop(heap, spec, &ctx)?,
        Workload::StringChurn => string_churn(heap, spec, &ctx)?,
    }
    heap.pop_frame()?;
    Ok(())
}

fn gcbench_like(heap: &mut Heap, spec: &WorkloadSpec, ctx: &Ctx) -> Result<(), GcError> {
    let depth = spec.tree_depth.max(4);
    heap.push_frame("long_lived_tree");
    let long_lived = make_tree(heap, ctx, depth)?;
    heap.pop_frame()?;
    for _ in 0..spec.iterations {
        for d in (4..=depth).step_by(2) {
            heap.push_frame("time_construction");
            // Each depth allocates about the same number of nodes.
            for _ in 0..1u64 << (depth - d + 1) {
                let tree = make_tree(heap, ctx, d)?;
                heap.remove_root(tree)?;
            }
            heap.pop_frame()?;
            heap.push_frame("major_gc");
            heap.major_collection()?;
            heap.pop_frame()?;
        }
    }
    let root = heap.root(long_lived)?;
    heap.read_field(root, 2)?;
    heap.remove_root(long_lived)?;
    Ok(())
}

/// Builds a complete tree bottom-up and returns a root holding it.
fn make_tree(heap: &mut Heap, ctx: &Ctx, depth: u32) -> Result<RootId, GcError> {
    heap.push_frame_id(ctx.frames.make_tree);
    let children = if depth > 1 {
        Some((
            make_tree(heap, ctx, depth - 1)?,
            make_tree(heap, ctx, depth - 1)?,
        ))
    } else {
        None
    };
    let node = heap.alloc(NODE_PAYLOAD, ctx.types.node)?;
    if let Some((left, right)) = children {
        let l = heap.remove_root(left)?;
        let r = heap.remove_root(right)?;
        heap.write_field(node, 0, Value::Ref(l))?;
        heap.write_field(node, 1, Value::Ref(r))?;
    }
    heap.write_field(node, 2, Value::Scalar(u64::from(depth)))?;
    heap.pop_frame()?;
    Ok(heap.add_root(node))
}

fn alloc_loop(heap: &mut Heap, spec: &WorkloadSpec, ctx: &Ctx) -> Result<(), GcError> {
    heap.push_frame_id(ctx.frames.body);
    for i in 0..spec.iterations {
        let r = heap.allocate(ALLOC_LOOP_PAYLOAD, ctx.types.object)?;
        heap.write_field(r, 0, Value::Scalar(i))?;
    }
    heap.pop_frame()?;
    Ok(())
}

fn string_churn(heap: &mut Heap, spec: &WorkloadSpec, ctx: &Ctx) -> Result<(), GcError> {
    let mut rng = ChaCha8Rng::seed_from_u64(CHURN_SEED);
    let threshold = heap.config().large_object_threshold;
    let mut ring: Vec<Option<RootId>> = vec![None; STRING_RING];
    for i in 0..spec.iterations {
        let large = rng.gen_ratio(1, 256);
        let r: ObjectRef = if large {
            heap.push_frame_id(ctx.frames.make_large_string);
            let total = rng.gen_range(threshold + 1..=4 * threshold);
            let r = heap.alloc(total - 8, ctx.types.large_string)?;
            heap.pop_frame()?;
            r
        } else {
            heap.push_frame_id(ctx.frames.make_string);
            let len = rng.gen_range(1..=spec.max_small_string.max(1));
            let r = heap.alloc(len, ctx.types.string)?;
            heap.pop_frame()?;
            r
        };
        heap.write_field(r, 0, Value::Scalar(i))?;
        if rng.gen_ratio(1, 8) {
            let slot = &mut ring[(i as usize) % STRING_RING];
            if let Some(old) = slot.take() {
                heap.remove_root(old)?;
            }
            *slot = Some(heap.add_root(r));
        }
        if i % 16_384 == 16_383 {
            heap.push_frame("major_gc");
            heap.major_collection()?;
            heap.pop_frame()?;
        }
    }
    for root in ring.into_iter().flatten() {
        heap.remove_root(root)?;
    }
    Ok(())
}

/// Outcome of one instrumented run.
#[derive(Debug)]
pub struct RunOutcome {
    pub runtime: Duration,
    pub counters: HeapCounters,
    pub samples: u64,
    pub profile: Profile,
}

/// Runs `spec` on a fresh heap with the given nursery and sampling period
/// (0 disables sampling).
pub fn run(
    spec: &WorkloadSpec,
    sample_bytes: u64,
    nursery_bytes: u64,
) -> Result<RunOutcome, GcError> {
    run_with_clock(
        spec,
        sample_bytes,
        nursery_bytes,
        Box::new(MonotonicClock::new()),
    )
}

pub fn run_with_clock(
    spec: &WorkloadSpec,
    sample_bytes: u64,
    nursery_bytes: u64,
    clock: Box<dyn Clock>,
) -> Result<RunOutcome, GcError> {
    let mut heap = Heap::with_sources(
        HeapConfig::with_nursery_size(nursery_bytes),
        clock,
        Box::new(ArenaRss),
    )?;
    if sample_bytes > 0 {
        heap.enable_sampling(sample_bytes)?;
    }
    let start = Instant::now();
    run_workload(&mut heap, spec)?;
    let runtime = start.elapsed();
    let counters = heap.counters();
    let samples = heap.recorder().samples_taken();
    Ok(RunOutcome {
        runtime,
        counters,
        samples,
        profile: heap.finish(),
    })
}

pub fn default_nursery_bytes() -> u64 {
    DEFAULT_NURSERY_SIZE
}
