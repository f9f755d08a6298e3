//! Executes action sequences against a real heap and checks every
//! intermediate state against the oracle and a reachability model.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use super::gen::{generate, sequence_seed, GenParams};
use super::oracle::{predict_samples, OraclePrediction};
use super::{Action, Sequence};
use crate::clock::{ArenaRss, TickClock};
use crate::error::GcError;
use crate::heap::{Heap, HeapConfig, Mutation, ObjectRef, RootId, Value};
use crate::profile::{Record, SampleKind, Survival};
use crate::recorder::TypeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FuzzConfig {
    pub seed: u64,
    pub sequences: u64,
    pub actions_per_sequence: usize,
    pub nursery_size: u64,
    pub shrink: bool,
    #[doc(hidden)]
    pub mutation: Option<Mutation>,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            sequences: 1000,
            actions_per_sequence: 200,
            nursery_size: 4096,
            shrink: true,
            mutation: None,
        }
    }
}

impl FuzzConfig {
    pub fn heap_config(&self) -> HeapConfig {
        HeapConfig::with_nursery_size(self.nursery_size)
    }
}

/// The assertion that failed, in the order they are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CheckKind {
    Malformed,
    SampleCount,
    CursorSanity,
    LimitLaw,
    Countdown,
    UseAfterFree,
    Survival,
    HeapError,
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CheckKind::Malformed => "malformed sequence",
            CheckKind::SampleCount => "sample count",
            CheckKind::CursorSanity => "cursor sanity",
            CheckKind::LimitLaw => "limit law",
            CheckKind::Countdown => "countdown invariant",
            CheckKind::UseAfterFree => "use after free",
            CheckKind::Survival => "survival resolution",
            CheckKind::HeapError => "heap error",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub action_index: usize,
    pub kind: CheckKind,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} after action {}: {}",
            self.kind, self.action_index, self.message
        )
    }
}

/// Counts gathered while executing one or more sequences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecStats {
    pub actions: u64,
    pub samples: u64,
    pub resolutions: u64,
    pub minor_collections: u64,
    pub accesses: u64,
}

impl ExecStats {
    fn add(&mut self, other: ExecStats) {
        self.actions += other.actions;
        self.samples += other.samples;
        self.resolutions += other.resolutions;
        self.minor_collections += other.minor_collections;
        self.accesses += other.accesses;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceFailure {
    pub sequence_index: u64,
    pub sequence_seed: u64,
    pub original_len: usize,
    pub failure: Failure,
    /// The shrunk sequence when shrinking ran, otherwise the failing prefix.
    pub sequence: Sequence,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzReport {
    pub sequences_run: u64,
    pub stats: ExecStats,
    /// The first failing sequence; the run stops there.
    pub failure: Option<SequenceFailure>,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

const TYPE_NAMES: [&str; 3] = ["Object", "Array", "String"];

#[derive(Debug, Clone, Copy)]
enum MWord {
    Scalar(u64),
    Ref(usize),
}

struct ModelObject {
    type_slot: usize,
    words: Vec<MWord>,
    large: bool,
    /// Minor collections completed before this object was placed.
    cycle: u64,
}

fn scalar(id: usize, word: usize) -> u64 {
    let mut h = DefaultHasher::new();
    (id, word).hash(&mut h);
    h.finish()
}

struct Executor {
    heap: Heap,
    config: HeapConfig,
    types: [TypeId; 3],
    prediction: OraclePrediction,
    objects: Vec<ModelObject>,
    roots: Vec<(usize, RootId)>,
    sampling: bool,
    nursery_used: u64,
    cycle: u64,
    sample_owner: HashMap<u64, usize>,
    pending: BTreeSet<u64>,
    records_seen: usize,
    stats: ExecStats,
}

type Check = Result<(), (CheckKind, String)>;

fn fail<T>(kind: CheckKind, message: impl Into<String>) -> Result<T, (CheckKind, String)> {
    Err((kind, message.into()))
}

fn heap_failure(e: GcError) -> (CheckKind, String) {
    let kind = match e {
        GcError::InvalidReference(_) | GcError::StaleRoot(_) => CheckKind::UseAfterFree,
        _ => CheckKind::HeapError,
    };
    (kind, e.to_string())
}

impl Executor {
    fn new(
        actions: &[Action],
        config: HeapConfig,
        mutation: Option<Mutation>,
    ) -> Result<Self, Failure> {
        let prediction = predict_samples(actions, &config).map_err(|m| Failure {
            action_index: m.index,
            kind: CheckKind::Malformed,
            message: m.reason,
        })?;
        let mut heap =
            Heap::with_sources(config, Box::new(TickClock::new(1_000)), Box::new(ArenaRss))
                .map_err(|e| Failure {
                    action_index: 0,
                    kind: CheckKind::HeapError,
                    message: e.to_string(),
                })?;
        let types = TYPE_NAMES.map(|name| heap.register_type(name).expect("three types fit"));
        if let Some(m) = mutation {
            heap.inject_mutation(m);
        }
        Ok(Self {
            heap,
            config,
            types,
            prediction,
            objects: Vec::new(),
            roots: Vec::new(),
            sampling: false,
            nursery_used: 0,
            cycle: 0,
            sample_owner: HashMap::new(),
            pending: BTreeSet::new(),
            records_seen: 0,
            stats: ExecStats::default(),
        })
    }

    fn run(mut self, actions: &[Action]) -> Result<ExecStats, Failure> {
        for (index, action) in actions.iter().enumerate() {
            self.step(index, *action)
                .map_err(|(kind, message)| Failure {
                    action_index: index,
                    kind,
                    message,
                })?;
            self.stats.actions += 1;
        }
        Ok(self.stats)
    }

    fn step(&mut self, index: usize, action: Action) -> Check {
        let predicted = self.prediction.per_action[index];
        let minors_before = self.heap.counters().minor_collections;
        let samples_before = self.heap.recorder().samples_taken();

        let mut access_result: Check = Ok(());
        let mut new_object = None;
        match action {
            Action::EnableSampling { period } => {
                self.heap.enable_sampling(period).map_err(heap_failure)?;
                self.sampling = true;
            }
            Action::DisableSampling => {
                self.heap.disable_sampling();
                self.sampling = false;
            }
            Action::ForceMinorCollection => {
                self.heap.minor_collection().map_err(heap_failure)?;
            }
            Action::DropRoot { index } => {
                let (_, root) = self.roots.remove(index);
                self.heap.remove_root(root).map_err(heap_failure)?;
                if self.heap.root(root).is_ok() {
                    return fail(
                        CheckKind::UseAfterFree,
                        format!("dropped root {root} still resolves"),
                    );
                }
            }
            Action::AccessObject { index } => {
                self.stats.accesses += 1;
                access_result = self.check_access(index);
            }
            _ => new_object = Some(self.allocate(action)?),
        }

        // Model state is still pre-action here, which is what any collection
        // during this action observed.
        let collections = self.heap.counters().minor_collections - minors_before;
        let survival = self.check_records(collections, samples_before);
        let expected_collection = match action {
            Action::ForceMinorCollection => {
                self.nursery_used = 0;
                true
            }
            _ if predicted.kind == Some(SampleKind::Nursery) => {
                if self.nursery_used + predicted.total_bytes > self.config.nursery_size {
                    self.nursery_used = predicted.total_bytes;
                    true
                } else {
                    self.nursery_used += predicted.total_bytes;
                    false
                }
            }
            _ => false,
        };
        if expected_collection {
            self.cycle += 1;
        }
        self.stats.minor_collections += collections;
        if let Some((object, root, samples)) = new_object {
            self.register_object(object, root, samples_before, samples);
        }

        self.check_samples(index, samples_before)?;
        self.check_cursors(collections, expected_collection)?;
        self.check_limit_law()?;
        self.check_countdown(index)?;
        access_result?;
        survival
    }

    /// Allocates and initializes the object for `action`, then roots it.
    fn allocate(
        &mut self,
        action: Action,
    ) -> Result<(ModelObject, RootId, u64), (CheckKind, String)> {
        let payload = action.payload_bytes().expect("allocation action");
        let (type_slot, n_refs) = match action {
            Action::AllocObject { n_ref_fields, .. } => (0, n_ref_fields as usize),
            Action::AllocArray { .. } => (1, 0),
            _ => (2, 0),
        };
        let id = self.objects.len();
        let r = self
            .heap
            .alloc(payload, self.types[type_slot])
            .map_err(heap_failure)?;
        let samples_after = self.heap.recorder().samples_taken();
        let n_words = payload.div_ceil(8).max(1) as usize;
        let len = self.heap.payload_len(r).map_err(heap_failure)?;
        if len != n_words {
            return fail(
                CheckKind::HeapError,
                format!("payload of {payload} bytes got {len} words"),
            );
        }
        let targets: Vec<(usize, RootId)> = (0..n_refs)
            .map(|j| self.roots[self.roots.len() - 1 - j])
            .collect();
        let mut words = Vec::with_capacity(n_words);
        words.push(MWord::Scalar(id as u64));
        words.extend(targets.iter().map(|&(target, _)| MWord::Ref(target)));
        for w in words.len()..n_words {
            words.push(MWord::Scalar(scalar(id, w)));
        }
        for (i, word) in words.iter().enumerate() {
            let value = match *word {
                MWord::Scalar(v) => Value::Scalar(v),
                MWord::Ref(_) => {
                    Value::Ref(self.heap.root(targets[i - 1].1).map_err(heap_failure)?)
                }
            };
            self.heap.write_field(r, i, value).map_err(heap_failure)?;
        }
        let root = self.heap.add_root(r);
        let object = ModelObject {
            type_slot,
            words,
            large: r.space() == crate::heap::Space::Large,
            cycle: 0,
        };
        Ok((object, root, samples_after))
    }

    fn register_object(
        &mut self,
        mut object: ModelObject,
        root: RootId,
        samples_before: u64,
        samples_after: u64,
    ) {
        let id = self.objects.len();
        object.cycle = self.cycle;
        for sample in samples_before..samples_after {
            self.sample_owner.insert(sample, id);
            self.pending.insert(sample);
        }
        self.objects.push(object);
        self.roots.push((id, root));
    }

    fn reachable(&self, extra_roots: impl Iterator<Item = usize>) -> HashSet<usize> {
        let mut seen = HashSet::new();
        let mut stack: Vec<usize> = self
            .roots
            .iter()
            .map(|&(id, _)| id)
            .chain(extra_roots)
            .collect();
        while let Some(id) = stack.pop() {
            if seen.insert(id) {
                stack.extend(self.objects[id].words.iter().filter_map(|w| match w {
                    MWord::Ref(t) => Some(*t),
                    MWord::Scalar(_) => None,
                }));
            }
        }
        seen
    }

    /// Consumes records emitted by this action. Sample records are checked
    /// later by [`Executor::check_samples`]; resolutions are checked here
    /// against reachability in the pre-action model.
    fn check_records(&mut self, collections: u64, samples_before: u64) -> Check {
        let records = &self.heap.recorder().records()[self.records_seen..];
        let resolutions: Vec<_> = records
            .iter()
            .filter_map(|r| match r {
                Record::Resolution(res) => Some(*res),
                _ => None,
            })
            .collect();
        if collections == 0 {
            if let Some(r) = resolutions.first() {
                return fail(
                    CheckKind::Survival,
                    format!("sample {} resolved without a collection", r.sample_index),
                );
            }
            return Ok(());
        }
        let cycle = self.cycle;
        let from_roots = self.reachable(std::iter::empty());
        let young_live = self.reachable(
            (0..self.objects.len())
                .filter(|&id| self.objects[id].large && self.objects[id].cycle == cycle),
        );
        for res in resolutions {
            self.stats.resolutions += 1;
            if res.sample_index >= samples_before {
                return fail(
                    CheckKind::Survival,
                    format!(
                        "sample {} resolved by the collection that preceded it",
                        res.sample_index
                    ),
                );
            }
            let Some(&owner) = self.sample_owner.get(&res.sample_index) else {
                return fail(
                    CheckKind::Survival,
                    format!("resolution for unknown sample {}", res.sample_index),
                );
            };
            if !self.pending.remove(&res.sample_index) {
                return fail(
                    CheckKind::Survival,
                    format!("sample {} resolved twice", res.sample_index),
                );
            }
            let object = &self.objects[owner];
            let live = if object.large {
                from_roots.contains(&owner)
            } else {
                young_live.contains(&owner)
            };
            let expected = if live {
                Survival::Tenured
            } else {
                Survival::DiedYoung
            };
            if res.survived != expected {
                return fail(
                    CheckKind::Survival,
                    format!(
                        "sample {} of object {owner} resolved {:?}, model says {:?}",
                        res.sample_index, res.survived, expected
                    ),
                );
            }
            if res.type_id != self.types[object.type_slot] {
                return fail(
                    CheckKind::Survival,
                    format!(
                        "sample {} resolved to type {}, expected {}",
                        res.sample_index, res.type_id, self.types[object.type_slot]
                    ),
                );
            }
        }
        if let Some(left) = self.pending.first() {
            return fail(
                CheckKind::Survival,
                format!("sample {left} still pending after a collection"),
            );
        }
        Ok(())
    }

    fn check_samples(&mut self, index: usize, samples_before: u64) -> Check {
        let predicted = self.prediction.per_action[index];
        let records = &self.heap.recorder().records()[self.records_seen..];
        self.records_seen = self.heap.recorder().records().len();
        let samples: Vec<_> = records
            .iter()
            .filter_map(|r| match r {
                Record::Sample(s) => Some(s),
                _ => None,
            })
            .collect();
        let taken = self.heap.recorder().samples_taken() - samples_before;
        if taken != u64::from(predicted.samples) || samples.len() as u64 != taken {
            return fail(
                CheckKind::SampleCount,
                format!(
                    "{taken} samples ({} records), oracle predicts {}",
                    samples.len(),
                    predicted.samples
                ),
            );
        }
        for (i, s) in samples.iter().enumerate() {
            if s.sample_index != samples_before + i as u64 || Some(s.kind) != predicted.kind {
                return fail(
                    CheckKind::SampleCount,
                    format!(
                        "sample {} has kind {:?}, oracle predicts {:?}",
                        s.sample_index, s.kind, predicted.kind
                    ),
                );
            }
        }
        self.stats.samples += taken;
        Ok(())
    }

    fn check_cursors(&self, collections: u64, expected_collection: bool) -> Check {
        let nursery = self.heap.nursery();
        nursery
            .check_cursors()
            .or_else(|e| fail(CheckKind::CursorSanity, e))?;
        if collections != u64::from(expected_collection) {
            return fail(
                CheckKind::CursorSanity,
                format!(
                    "{collections} minor collections, expected {}",
                    u64::from(expected_collection)
                ),
            );
        }
        if nursery.used() != self.nursery_used {
            return fail(
                CheckKind::CursorSanity,
                format!(
                    "nursery holds {} bytes, expected {}",
                    nursery.used(),
                    self.nursery_used
                ),
            );
        }
        Ok(())
    }

    fn check_limit_law(&self) -> Check {
        if self.heap.sampler().is_enabled() != self.sampling {
            return fail(
                CheckKind::LimitLaw,
                format!("sampler enabled = {}", !self.sampling),
            );
        }
        self.heap
            .nursery()
            .check_limit_law(self.sampling)
            .or_else(|e| fail(CheckKind::LimitLaw, e))
    }

    fn check_countdown(&self, index: usize) -> Check {
        let Some(expected) = self.prediction.per_action[index].bytes_until_sample else {
            return Ok(());
        };
        let actual = self.heap.nursery().bytes_until_sample();
        if actual != expected as i64 {
            return fail(
                CheckKind::Countdown,
                format!("sample_point - nursery_free = {actual}, expected {expected}"),
            );
        }
        Ok(())
    }

    fn check_access(&self, index: usize) -> Check {
        let (id, root) = self.roots[index];
        let object = &self.objects[id];
        let r = self.heap.root(root).map_err(heap_failure)?;
        let header = self.heap.header(r).map_err(heap_failure)?;
        if header.type_id != self.types[object.type_slot] {
            return fail(
                CheckKind::UseAfterFree,
                format!(
                    "object {id} at {r} has type {}, expected {}",
                    header.type_id, self.types[object.type_slot]
                ),
            );
        }
        if header.size_words as usize != object.words.len() {
            return fail(
                CheckKind::UseAfterFree,
                format!("object {id} at {r} has {} words", header.size_words),
            );
        }
        for (i, word) in object.words.iter().enumerate() {
            let value = self.heap.read_field(r, i).map_err(heap_failure)?;
            let ok = match (*word, value) {
                (MWord::Scalar(expected), Value::Scalar(v)) => v == expected,
                (MWord::Ref(target), Value::Ref(t)) => self.identifies(t, target)?,
                _ => false,
            };
            if !ok {
                return fail(
                    CheckKind::UseAfterFree,
                    format!("object {id} at {r}: word {i} is {value:?}, expected {word:?}"),
                );
            }
        }
        Ok(())
    }

    fn identifies(&self, r: ObjectRef, id: usize) -> Result<bool, (CheckKind, String)> {
        Ok(self.heap.read_field(r, 0).map_err(heap_failure)? == Value::Scalar(id as u64))
    }
}

/// Runs `actions` on a fresh heap, checking every invariant after each
/// action.
pub fn execute_and_check(actions: &[Action], config: &FuzzConfig) -> Result<ExecStats, Failure> {
    Executor::new(actions, config.heap_config(), config.mutation)?.run(actions)
}

/// Shrinks a failing sequence: truncate after the failing action, then
/// delete single actions while the same check still fails.
pub fn shrink(
    actions: &[Action],
    config: &FuzzConfig,
    failure: &Failure,
) -> (Vec<Action>, Failure) {
    let heap_config = config.heap_config();
    let mut best = actions[..=failure.action_index.min(actions.len() - 1)].to_vec();
    let mut best_failure = failure.clone();
    loop {
        let mut improved = false;
        let mut i = best.len();
        while i > 0 {
            i -= 1;
            let mut candidate = best.clone();
            candidate.remove(i);
            if candidate.is_empty() || predict_samples(&candidate, &heap_config).is_err() {
                continue;
            }
            if let Err(f) = execute_and_check(&candidate, config) {
                if f.kind == best_failure.kind {
                    candidate.truncate(f.action_index + 1);
                    best = candidate;
                    best_failure = f;
                    improved = true;
                    i = i.min(best.len());
                }
            }
        }
        if !improved {
            break;
        }
    }
    (best, best_failure)
}

/// Generates and checks `config.sequences` sequences, stopping at the first
/// failure.
pub fn run_fuzz(config: &FuzzConfig) -> FuzzReport {
    let heap_config = config.heap_config();
    let params = GenParams {
        nursery_size: heap_config.nursery_size,
        large_object_threshold: heap_config.large_object_threshold,
        actions: config.actions_per_sequence,
    };
    let mut report = FuzzReport {
        sequences_run: 0,
        stats: ExecStats::default(),
        failure: None,
    };
    for index in 0..config.sequences {
        let seed = sequence_seed(config.seed, index);
        let actions = generate(seed, &params);
        report.sequences_run += 1;
        match execute_and_check(&actions, config) {
            Ok(stats) => report.stats.add(stats),
            Err(failure) => {
                let (actions, failure) = if config.shrink {
                    shrink(&actions, config, &failure)
                } else {
                    (actions[..=failure.action_index].to_vec(), failure)
                };
                report.failure = Some(SequenceFailure {
                    sequence_index: index,
                    sequence_seed: seed,
                    original_len: config.actions_per_sequence,
                    failure,
                    sequence: Sequence {
                        nursery_size: config.nursery_size,
                        actions,
                    },
                });
                break;
            }
        }
    }
    report
}
