use super::object::{Words, WORD};

/// The nursery cursors.
///
/// All positions are byte offsets from the nursery start. `sample_point` is a
/// virtual cursor: it may lie beyond `top`, and is never clamped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NurseryState {
    pub(crate) start: u64,
    pub(crate) free: u64,
    pub(crate) top: u64,
    pub(crate) limit: u64,
    pub(crate) sample_point: i64,
}

impl NurseryState {
    pub(crate) fn new(size: u64) -> Self {
        Self {
            start: 0,
            free: 0,
            top: size,
            limit: size,
            sample_point: 0,
        }
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn free(&self) -> u64 {
        self.free
    }

    pub fn top(&self) -> u64 {
        self.top
    }

    /// Effective end used by the allocation fast path.
    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn sample_point(&self) -> i64 {
        self.sample_point
    }

    /// `sample_point - free`: the bytes left before the next sample fires.
    pub fn bytes_until_sample(&self) -> i64 {
        self.sample_point - self.free as i64
    }

    pub fn used(&self) -> u64 {
        self.free - self.start
    }

    /// `limit = min(sample_point, top)`, with the sample point floored at the
    /// nursery start so a transiently negative virtual cursor cannot wrap.
    pub(crate) fn sampling_limit(&self) -> u64 {
        (self.sample_point.max(self.start as i64) as u64).min(self.top)
    }

    /// `start <= free <= top` and `limit <= top`.
    pub fn check_cursors(&self) -> Result<(), String> {
        if self.start > self.free {
            return Err(format!(
                "nursery_start {} > nursery_free {}",
                self.start, self.free
            ));
        }
        if self.free > self.top {
            return Err(format!(
                "nursery_free {} > nursery_top {}",
                self.free, self.top
            ));
        }
        if self.limit > self.top {
            return Err(format!(
                "nursery_limit {} > nursery_top {}",
                self.limit, self.top
            ));
        }
        Ok(())
    }

    /// `limit = min(sample_point, top)` while sampling, `limit = top` otherwise.
    pub fn check_limit_law(&self, sampling: bool) -> Result<(), String> {
        let expected = if sampling {
            (self.sample_point.min(self.top as i64)) as u64
        } else {
            self.top
        };
        if self.sample_point < 0 && sampling {
            return Err(format!(
                "sample_point {} below nursery start",
                self.sample_point
            ));
        }
        if self.limit != expected {
            return Err(format!(
                "nursery_limit {} != expected {} (sample_point {}, top {}, sampling {})",
                self.limit, expected, self.sample_point, self.top, sampling
            ));
        }
        Ok(())
    }
}

/// Nursery memory plus its cursors.
pub(crate) struct Nursery {
    pub state: NurseryState,
    pub mem: Words,
}

impl Nursery {
    pub fn new(size: u64) -> Self {
        Self {
            state: NurseryState::new(size),
            mem: Words::zeroed((size / WORD) as usize),
        }
    }

    pub fn word_index(offset: u64) -> usize {
        (offset / WORD) as usize
    }

    /// True when `offset` can name a header of an object allocated since the
    /// last collection.
    pub fn holds(&self, offset: u64) -> bool {
        offset.is_multiple_of(WORD)
            && offset >= self.state.start
            && offset + WORD <= self.state.free
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_state_has_limit_at_top() {
        let state = NurseryState::new(1024);
        assert_eq!(state.limit(), 1024);
        state.check_cursors().unwrap();
        state.check_limit_law(false).unwrap();
    }

    #[test]
    fn limit_law_detects_stale_limit() {
        let mut state = NurseryState::new(1024);
        state.sample_point = 256;
        state.limit = 512;
        assert!(state.check_limit_law(true).is_err());
        state.limit = state.sampling_limit();
        state.check_limit_law(true).unwrap();
    }

    #[test]
    fn cursor_check_rejects_free_past_top() {
        let mut state = NurseryState::new(64);
        state.free = 72;
        assert!(state.check_cursors().is_err());
    }
}
