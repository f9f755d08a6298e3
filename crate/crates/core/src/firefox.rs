//! Conversion of a recorded profile into the Firefox Profiler's processed
//! profile format.
//!
//! Each allocation sample becomes a thread sample whose stack is the captured
//! shadow stack with one synthetic leaf frame naming the sampled type. The
//! leaf's category says whether the object died young, was tenured, or was
//! never resolved. GC events become interval markers; each heap statistic
//! becomes a "Memory" counter.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::ProfileError;
use crate::heap::GcPhase;
use crate::profile::{self, GcEventKind, Profile, Record, Survival};
use crate::recorder::{FrameId, TypeId};

pub const PROCESSED_PROFILE_VERSION: u32 = 48;
pub const GECKO_PROFILE_VERSION: u32 = 30;
pub const PRODUCT: &str = "gcprof";

/// Indices into [`ProcessedProfile::meta`]`.categories`.
pub mod category {
    pub const OTHER: usize = 0;
    pub const MUTATOR: usize = 1;
    pub const COLLECTED: usize = 2;
    pub const TENURED: usize = 3;
    pub const UNRESOLVED: usize = 4;
    pub const GC: usize = 5;
}

const CATEGORIES: [(&str, &str); 6] = [
    ("Other", "grey"),
    ("Mutator", "blue"),
    ("collected", "green"),
    ("tenured", "red"),
    ("unresolved", "yellow"),
    ("GC / CC", "orange"),
];

/// Descriptions of the three memory counters, in HEAP_STATS field order.
pub const COUNTER_DESCRIPTIONS: [&str; 3] = ["total size of arenas", "total memory used", "rss"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcessedProfile {
    pub meta: Meta,
    pub libs: Vec<serde_json::Value>,
    pub counters: Vec<Counter>,
    pub threads: Vec<Thread>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Meta {
    pub interval: f64,
    pub start_time: f64,
    pub process_type: u32,
    pub product: String,
    pub stackwalk: u32,
    pub debug: bool,
    pub version: u32,
    pub preprocessed_profile_version: u32,
    pub symbolicated: bool,
    pub categories: Vec<Category>,
    pub marker_schema: Vec<MarkerSchema>,
    pub sample_units: Option<serde_json::Value>,
    pub imported_from: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub color: String,
    pub subcategories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MarkerSchema {
    pub name: String,
    pub display: Vec<String>,
    pub chart_label: String,
    pub table_label: String,
    pub fields: Vec<MarkerField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerField {
    pub key: String,
    pub label: String,
    pub format: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Counter {
    pub name: String,
    pub category: String,
    pub description: String,
    pub pid: String,
    pub main_thread_index: usize,
    pub samples: CounterSamples,
}

/// `count` holds the change since the previous sample; the viewer
/// accumulates it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CounterSamples {
    pub length: usize,
    pub time: Vec<f64>,
    pub count: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Thread {
    pub name: String,
    pub process_name: String,
    pub process_type: String,
    pub is_main_thread: bool,
    pub pid: String,
    pub tid: u64,
    pub process_startup_time: f64,
    pub process_shutdown_time: Option<f64>,
    pub register_time: f64,
    pub unregister_time: Option<f64>,
    pub paused_ranges: Vec<serde_json::Value>,
    pub samples: SampleTable,
    pub markers: MarkerTable,
    pub stack_table: StackTable,
    pub frame_table: FrameTable,
    pub func_table: FuncTable,
    pub resource_table: ResourceTable,
    pub native_symbols: NativeSymbolTable,
    pub string_array: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SampleTable {
    pub length: usize,
    pub stack: Vec<Option<usize>>,
    pub time: Vec<f64>,
    pub weight: Option<Vec<f64>>,
    pub weight_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerData {
    #[serde(rename = "type")]
    pub kind: String,
    pub phase: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MarkerTable {
    pub length: usize,
    pub data: Vec<Option<MarkerData>>,
    pub name: Vec<usize>,
    pub start_time: Vec<Option<f64>>,
    pub end_time: Vec<Option<f64>>,
    pub phase: Vec<u8>,
    pub category: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StackTable {
    pub length: usize,
    pub frame: Vec<usize>,
    pub category: Vec<usize>,
    pub subcategory: Vec<usize>,
    pub prefix: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FrameTable {
    pub length: usize,
    pub address: Vec<i64>,
    pub inline_depth: Vec<u32>,
    pub category: Vec<Option<usize>>,
    pub subcategory: Vec<Option<usize>>,
    pub func: Vec<usize>,
    pub native_symbol: Vec<Option<usize>>,
    #[serde(rename = "innerWindowID")]
    pub inner_window_id: Vec<Option<u64>>,
    pub implementation: Vec<Option<usize>>,
    pub line: Vec<Option<u32>>,
    pub column: Vec<Option<u32>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FuncTable {
    pub length: usize,
    pub name: Vec<usize>,
    #[serde(rename = "isJS")]
    pub is_js: Vec<bool>,
    #[serde(rename = "relevantForJS")]
    pub relevant_for_js: Vec<bool>,
    pub resource: Vec<i64>,
    pub file_name: Vec<Option<usize>>,
    pub line_number: Vec<Option<u32>>,
    pub column_number: Vec<Option<u32>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceTable {
    pub length: usize,
    pub lib: Vec<Option<usize>>,
    pub name: Vec<usize>,
    pub host: Vec<Option<usize>>,
    #[serde(rename = "type")]
    pub kind: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NativeSymbolTable {
    pub length: usize,
    pub lib_index: Vec<usize>,
    pub address: Vec<u64>,
    pub name: Vec<usize>,
    pub function_size: Vec<Option<u64>>,
}

/// Result of converting a serialized stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Conversion {
    pub profile: ProcessedProfile,
    /// Records with tags this version does not know; they are skipped.
    pub unknown_records: usize,
}

impl ProcessedProfile {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("processed profile serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("processed profile serializes")
    }

    pub fn thread(&self) -> &Thread {
        &self.threads[0]
    }
}

/// Parses a `GPRF` stream and converts it.
pub fn convert(bytes: &[u8]) -> Result<Conversion, ProfileError> {
    let decoded = profile::parse(bytes)?;
    Ok(Conversion {
        profile: convert_profile(&decoded.profile),
        unknown_records: decoded.unknown_records,
    })
}

/// Nanoseconds since `start_ns` as milliseconds, truncated to microseconds.
fn to_ms(ns: u64, start_ns: u64) -> f64 {
    (ns.saturating_sub(start_ns) / 1_000) as f64 / 1_000.0
}

#[derive(Default)]
struct Builder {
    strings: Vec<String>,
    string_index: HashMap<String, usize>,
    funcs: FuncTable,
    func_index: HashMap<usize, usize>,
    frames: FrameTable,
    frame_index: HashMap<(usize, usize), usize>,
    stacks: StackTable,
    stack_index: HashMap<(Option<usize>, usize), usize>,
}

impl Builder {
    fn string(&mut self, s: &str) -> usize {
        if let Some(&i) = self.string_index.get(s) {
            return i;
        }
        let i = self.strings.len();
        self.strings.push(s.to_owned());
        self.string_index.insert(s.to_owned(), i);
        i
    }

    fn func(&mut self, name: &str) -> usize {
        let name = self.string(name);
        if let Some(&i) = self.func_index.get(&name) {
            return i;
        }
        let f = &mut self.funcs;
        let i = f.length;
        f.length += 1;
        f.name.push(name);
        f.is_js.push(false);
        f.relevant_for_js.push(false);
        f.resource.push(-1);
        f.file_name.push(None);
        f.line_number.push(None);
        f.column_number.push(None);
        self.func_index.insert(name, i);
        i
    }

    fn frame(&mut self, name: &str, category: usize) -> usize {
        let func = self.func(name);
        if let Some(&i) = self.frame_index.get(&(func, category)) {
            return i;
        }
        let t = &mut self.frames;
        let i = t.length;
        t.length += 1;
        t.address.push(-1);
        t.inline_depth.push(0);
        t.category.push(Some(category));
        t.subcategory.push(Some(0));
        t.func.push(func);
        t.native_symbol.push(None);
        t.inner_window_id.push(None);
        t.implementation.push(None);
        t.line.push(None);
        t.column.push(None);
        self.frame_index.insert((func, category), i);
        i
    }

    fn stack(&mut self, prefix: Option<usize>, frame: usize) -> usize {
        if let Some(&i) = self.stack_index.get(&(prefix, frame)) {
            return i;
        }
        let category = self.frames.category[frame].unwrap_or(category::OTHER);
        let t = &mut self.stacks;
        let i = t.length;
        t.length += 1;
        t.frame.push(frame);
        t.category.push(category);
        t.subcategory.push(0);
        t.prefix.push(prefix);
        self.stack_index.insert((prefix, frame), i);
        i
    }
}

fn survival_category(survived: Survival) -> usize {
    match survived {
        Survival::DiedYoung => category::COLLECTED,
        Survival::Tenured => category::TENURED,
        Survival::Unknown => category::UNRESOLVED,
    }
}

fn marker_name(kind: GcEventKind, phase: GcPhase) -> String {
    match kind {
        GcEventKind::Minor => "Minor GC".to_owned(),
        GcEventKind::MajorPhase => format!("Major GC: {}", phase.name()),
    }
}

fn marker_schema() -> Vec<MarkerSchema> {
    [("GCMinor", "Minor GC"), ("GCMajor", "Major GC phase")]
        .into_iter()
        .map(|(name, label)| MarkerSchema {
            name: name.to_owned(),
            display: vec![
                "marker-chart".to_owned(),
                "marker-table".to_owned(),
                "timeline-overview".to_owned(),
            ],
            chart_label: label.to_owned(),
            table_label: format!("{label} ({{marker.data.phase}})"),
            fields: vec![MarkerField {
                key: "phase".to_owned(),
                label: "Phase".to_owned(),
                format: "string".to_owned(),
            }],
        })
        .collect()
}

/// Converts a decoded profile. Pure: equal inputs give equal outputs.
pub fn convert_profile(profile: &Profile) -> ProcessedProfile {
    let start_ns = profile.meta.start_time_ns;
    let type_names = profile.type_names();
    let frame_names = profile.frame_names();
    let mut b = Builder::default();

    let mut samples = SampleTable {
        weight_type: "samples".to_owned(),
        ..Default::default()
    };
    for resolved in profile.resolved_samples() {
        let mut prefix = None;
        for &frame_id in &resolved.sample.stack {
            let name = frame_label(&frame_names, frame_id);
            let frame = b.frame(&name, category::MUTATOR);
            prefix = Some(b.stack(prefix, frame));
        }
        let type_name = type_label(&type_names, resolved.type_id);
        let leaf = b.frame(&type_name, survival_category(resolved.survived));
        let stack = b.stack(prefix, leaf);
        samples.length += 1;
        samples.stack.push(Some(stack));
        samples
            .time
            .push(to_ms(resolved.sample.timestamp_ns, start_ns));
    }

    let mut markers = MarkerTable::default();
    for event in profile.gc_events() {
        let name = b.string(&marker_name(event.kind, event.phase));
        markers.length += 1;
        markers.name.push(name);
        markers
            .start_time
            .push(Some(to_ms(event.start_ns, start_ns)));
        markers
            .end_time
            .push(Some(to_ms(event.end_ns.max(event.start_ns), start_ns)));
        markers.phase.push(1);
        markers.category.push(category::GC);
        markers.data.push(Some(MarkerData {
            kind: match event.kind {
                GcEventKind::Minor => "GCMinor",
                GcEventKind::MajorPhase => "GCMajor",
            }
            .to_owned(),
            phase: event.phase.name().to_owned(),
        }));
    }

    let mut series: [CounterSamples; 3] = Default::default();
    let mut previous = [0u64; 3];
    for stats in profile.heap_stats() {
        let time = to_ms(stats.timestamp_ns, start_ns);
        let values = [
            stats.total_size_of_arenas,
            stats.total_memory_used,
            stats.rss,
        ];
        for (i, value) in values.into_iter().enumerate() {
            series[i].length += 1;
            series[i].time.push(time);
            // Clamped; only byte counts beyond i64::MAX saturate.
            let delta = i128::from(value) - i128::from(previous[i]);
            series[i]
                .count
                .push(delta.clamp(i64::MIN.into(), i64::MAX.into()) as i64);
            previous[i] = value;
        }
    }
    let counters = series
        .into_iter()
        .zip(COUNTER_DESCRIPTIONS)
        .map(|(samples, description)| Counter {
            name: "Memory".to_owned(),
            category: "Memory".to_owned(),
            description: description.to_owned(),
            pid: "1".to_owned(),
            main_thread_index: 0,
            samples,
        })
        .collect();

    let end_time = profile
        .records
        .iter()
        .filter_map(|r| match r {
            Record::GcEvent(e) => Some(e.end_ns),
            other => other.timestamp_ns(),
        })
        .max()
        .map(|ns| to_ms(ns, start_ns));

    let thread = Thread {
        name: "Mutator".to_owned(),
        process_name: PRODUCT.to_owned(),
        process_type: "default".to_owned(),
        is_main_thread: true,
        pid: "1".to_owned(),
        tid: 1,
        process_startup_time: 0.0,
        process_shutdown_time: end_time,
        register_time: 0.0,
        unregister_time: None,
        paused_ranges: Vec::new(),
        samples,
        markers,
        stack_table: b.stacks,
        frame_table: b.frames,
        func_table: b.funcs,
        resource_table: ResourceTable::default(),
        native_symbols: NativeSymbolTable::default(),
        string_array: b.strings,
    };

    ProcessedProfile {
        meta: Meta {
            interval: 1.0,
            start_time: (start_ns / 1_000) as f64 / 1_000.0,
            process_type: 0,
            product: PRODUCT.to_owned(),
            stackwalk: 0,
            debug: false,
            version: GECKO_PROFILE_VERSION,
            preprocessed_profile_version: PROCESSED_PROFILE_VERSION,
            symbolicated: true,
            categories: CATEGORIES
                .iter()
                .map(|&(name, color)| Category {
                    name: name.to_owned(),
                    color: color.to_owned(),
                    subcategories: vec!["Other".to_owned()],
                })
                .collect(),
            marker_schema: marker_schema(),
            sample_units: None,
            imported_from: PRODUCT.to_owned(),
        },
        libs: Vec::new(),
        counters,
        threads: vec![thread],
    }
}

fn frame_label(names: &HashMap<FrameId, &str>, id: FrameId) -> String {
    names
        .get(&id)
        .map(|s| (*s).to_owned())
        .unwrap_or_else(|| format!("frame#{id}"))
}

fn type_label(names: &HashMap<TypeId, &str>, id: TypeId) -> String {
    match names.get(&id) {
        Some(name) => (*name).to_owned(),
        None if id == profile::UNRESOLVED_TYPE => "unknown".to_owned(),
        None => format!("type#{id}"),
    }
}

/// Checks every cross-table reference and column length. Returns one
/// message per violation; empty means the profile is structurally sound.
fn check_lengths(v: &mut Vec<String>, table: &str, declared: usize, columns: &[(&str, usize)]) {
    for (column, len) in columns {
        if *len != declared {
            v.push(format!(
                "{table}.{column} has {len} entries, length is {declared}"
            ));
        }
    }
}

pub fn validate(p: &ProcessedProfile) -> Vec<String> {
    let mut v = Vec::new();
    let n_categories = p.meta.categories.len();

    for (i, counter) in p.counters.iter().enumerate() {
        let s = &counter.samples;
        check_lengths(
            &mut v,
            &format!("counters[{i}].samples"),
            s.length,
            &[("time", s.time.len()), ("count", s.count.len())],
        );
    }
    for (ti, t) in p.threads.iter().enumerate() {
        let s = &t.samples;
        check_lengths(
            &mut v,
            &format!("threads[{ti}].samples"),
            s.length,
            &[("stack", s.stack.len()), ("time", s.time.len())],
        );
        let st = &t.stack_table;
        check_lengths(
            &mut v,
            &format!("threads[{ti}].stackTable"),
            st.length,
            &[
                ("frame", st.frame.len()),
                ("category", st.category.len()),
                ("subcategory", st.subcategory.len()),
                ("prefix", st.prefix.len()),
            ],
        );
        let ft = &t.frame_table;
        check_lengths(
            &mut v,
            &format!("threads[{ti}].frameTable"),
            ft.length,
            &[
                ("func", ft.func.len()),
                ("category", ft.category.len()),
                ("address", ft.address.len()),
            ],
        );
        let fu = &t.func_table;
        check_lengths(
            &mut v,
            &format!("threads[{ti}].funcTable"),
            fu.length,
            &[("name", fu.name.len()), ("resource", fu.resource.len())],
        );
        let m = &t.markers;
        check_lengths(
            &mut v,
            &format!("threads[{ti}].markers"),
            m.length,
            &[
                ("name", m.name.len()),
                ("startTime", m.start_time.len()),
                ("endTime", m.end_time.len()),
                ("phase", m.phase.len()),
                ("category", m.category.len()),
                ("data", m.data.len()),
            ],
        );
    }

    for (i, counter) in p.counters.iter().enumerate() {
        if counter.main_thread_index >= p.threads.len() {
            v.push(format!(
                "counters[{i}].mainThreadIndex {} out of range",
                counter.main_thread_index
            ));
        }
    }

    for (ti, t) in p.threads.iter().enumerate() {
        let n_strings = t.string_array.len();
        let n_stacks = t.stack_table.length;
        let n_frames = t.frame_table.length;
        let n_funcs = t.func_table.length;
        for (i, stack) in t.samples.stack.iter().enumerate() {
            if let Some(s) = stack {
                if *s >= n_stacks {
                    v.push(format!(
                        "threads[{ti}] sample {i} references stack {s} of {n_stacks}"
                    ));
                }
            }
        }
        for i in 0..t.stack_table.prefix.len() {
            if let Some(prefix) = t.stack_table.prefix[i] {
                if prefix >= i {
                    v.push(format!(
                        "threads[{ti}] stack {i} has prefix {prefix} that is not an earlier row"
                    ));
                }
            }
        }
        for (i, &frame) in t.stack_table.frame.iter().enumerate() {
            if frame >= n_frames {
                v.push(format!(
                    "threads[{ti}] stack {i} references frame {frame} of {n_frames}"
                ));
            }
        }
        for (i, &c) in t.stack_table.category.iter().enumerate() {
            if c >= n_categories {
                v.push(format!(
                    "threads[{ti}] stack {i} references category {c} of {n_categories}"
                ));
            }
        }
        for (i, &func) in t.frame_table.func.iter().enumerate() {
            if func >= n_funcs {
                v.push(format!(
                    "threads[{ti}] frame {i} references func {func} of {n_funcs}"
                ));
            }
        }
        for (i, c) in t.frame_table.category.iter().enumerate() {
            if let Some(c) = c {
                if *c >= n_categories {
                    v.push(format!(
                        "threads[{ti}] frame {i} references category {c} of {n_categories}"
                    ));
                }
            }
        }
        for (i, &name) in t.func_table.name.iter().enumerate() {
            if name >= n_strings {
                v.push(format!(
                    "threads[{ti}] func {i} references string {name} of {n_strings}"
                ));
            }
        }
        for (i, &name) in t.markers.name.iter().enumerate() {
            if name >= n_strings {
                v.push(format!(
                    "threads[{ti}] marker {i} references string {name} of {n_strings}"
                ));
            }
        }
        for (i, &c) in t.markers.category.iter().enumerate() {
            if c >= n_categories {
                v.push(format!(
                    "threads[{ti}] marker {i} references category {c} of {n_categories}"
                ));
            }
        }
    }
    v
}
