//! Randomized differential testing of the heap and sampler.
//!
//! Action sequences are generated from a seed, executed against a real
//! [`Heap`](crate::heap::Heap), and checked after every action against an
//! independent byte-count oracle and a reachability model. Failing sequences
//! are shrunk and can be dumped as replayable text.

mod gen;
mod harness;
mod oracle;

use std::fmt;
use std::str::FromStr;

pub use gen::{generate, sequence_seed, GenParams};
pub use harness::{
    execute_and_check, run_fuzz, shrink, CheckKind, Failure, FuzzConfig, FuzzReport,
    SequenceFailure,
};
pub use oracle::{predict_samples, reference_sampler_step, Malformed, OraclePrediction, Predicted};

/// One step of a fuzz sequence. Root indices address the list of live roots
/// in creation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    /// An object of `size` payload bytes whose first word is its id and whose
    /// next `n_ref_fields` words point at the most recently created roots.
    AllocObject {
        size: u64,
        n_ref_fields: u32,
    },
    /// An id word followed by `length` scalar elements.
    AllocArray {
        length: u64,
    },
    /// An id word followed by `length` bytes.
    AllocString {
        length: u64,
    },
    DropRoot {
        index: usize,
    },
    AccessObject {
        index: usize,
    },
    ForceMinorCollection,
    EnableSampling {
        period: u64,
    },
    DisableSampling,
}

impl Action {
    /// Payload bytes requested from the heap, before rounding.
    pub fn payload_bytes(&self) -> Option<u64> {
        match *self {
            Action::AllocObject { size, .. } => Some(size),
            Action::AllocArray { length } => Some(8 * (1 + length)),
            Action::AllocString { length } => Some(8 + length),
            _ => None,
        }
    }

    pub fn is_allocation(&self) -> bool {
        self.payload_bytes().is_some()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Action::AllocObject { size, n_ref_fields } => {
                write!(f, "alloc_object {size} {n_ref_fields}")
            }
            Action::AllocArray { length } => write!(f, "alloc_array {length}"),
            Action::AllocString { length } => write!(f, "alloc_string {length}"),
            Action::DropRoot { index } => write!(f, "drop_root {index}"),
            Action::AccessObject { index } => write!(f, "access {index}"),
            Action::ForceMinorCollection => write!(f, "minor_gc"),
            Action::EnableSampling { period } => write!(f, "enable {period}"),
            Action::DisableSampling => write!(f, "disable"),
        }
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, String> {
        let mut parts = line.split_whitespace();
        let op = parts.next().ok_or("empty action")?;
        let mut arg = |name: &str| -> Result<u64, String> {
            let raw = parts.next().ok_or(format!("{op}: missing {name}"))?;
            raw.parse()
                .map_err(|e| format!("{op}: bad {name} {raw:?}: {e}"))
        };
        let action = match op {
            "alloc_object" => Action::AllocObject {
                size: arg("size")?,
                n_ref_fields: u32::try_from(arg("n_ref_fields")?).map_err(|e| e.to_string())?,
            },
            "alloc_array" => Action::AllocArray {
                length: arg("length")?,
            },
            "alloc_string" => Action::AllocString {
                length: arg("length")?,
            },
            "drop_root" => Action::DropRoot {
                index: arg("index")? as usize,
            },
            "access" => Action::AccessObject {
                index: arg("index")? as usize,
            },
            "minor_gc" => Action::ForceMinorCollection,
            "enable" => Action::EnableSampling {
                period: arg("period")?,
            },
            "disable" => Action::DisableSampling,
            other => return Err(format!("unknown action {other:?}")),
        };
        if let Some(extra) = parts.next() {
            return Err(format!("{op}: unexpected argument {extra:?}"));
        }
        Ok(action)
    }
}

/// A replayable sequence: the nursery size it ran with plus its actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    pub nursery_size: u64,
    pub actions: Vec<Action>,
}

impl Sequence {
    /// Text form: `#` comment lines, one `nursery N` line, then one action
    /// per line.
    pub fn to_text(&self, comment: &str) -> String {
        let mut out = String::new();
        for line in comment.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&format!("nursery {}\n", self.nursery_size));
        for action in &self.actions {
            out.push_str(&action.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, default_nursery: u64) -> Result<Self, String> {
        let mut nursery_size = default_nursery;
        let mut actions = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(size) = line.strip_prefix("nursery ") {
                nursery_size = size
                    .trim()
                    .parse()
                    .map_err(|e| format!("line {}: bad nursery size: {e}", n + 1))?;
                continue;
            }
            actions.push(line.parse().map_err(|e| format!("line {}: {e}", n + 1))?);
        }
        Ok(Self {
            nursery_size,
            actions,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let seq = Sequence {
            nursery_size: 4096,
            actions: vec![
                Action::DisableSampling,
                Action::EnableSampling { period: 256 },
                Action::AllocObject {
                    size: 40,
                    n_ref_fields: 2,
                },
                Action::AllocArray { length: 3 },
                Action::AllocString { length: 11 },
                Action::AccessObject { index: 0 },
                Action::DropRoot { index: 1 },
                Action::ForceMinorCollection,
            ],
        };
        let text = seq.to_text("seed 42\nsequence 7");
        assert!(text.starts_with("# seed 42\n# sequence 7\nnursery 4096\n"));
        assert_eq!(Sequence::parse(&text, 1024).unwrap(), seq);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = Sequence::parse("minor_gc\nalloc_array x\n", 4096).unwrap_err();
        assert!(err.starts_with("line 2"), "{err}");
        assert!(Sequence::parse("launch 3", 4096).is_err());
        assert!(Sequence::parse("disable 3", 4096).is_err());
    }

    #[test]
    fn payload_sizes() {
        assert_eq!(Action::AllocArray { length: 2 }.payload_bytes(), Some(24));
        assert_eq!(Action::AllocString { length: 5 }.payload_bytes(), Some(13));
        assert_eq!(Action::DisableSampling.payload_bytes(), None);
    }
}
