//! A generational garbage-collected heap whose nursery allocator doubles as
//! an allocation sampler, with a binary profile recorder, a Firefox Profiler
//! exporter, a differential fuzz harness and overhead benchmarks.

pub mod bench;
pub mod clock;
pub mod error;
pub mod firefox;
pub mod fuzz;
pub mod heap;
pub mod profile;
pub mod recorder;
pub mod sampler;
pub mod workloads;

pub use error::{GcError, ProfileError};
pub use heap::{GcPhase, Heap, HeapConfig, ObjectRef, RootId, Value};
pub use profile::{Profile, Survival};
