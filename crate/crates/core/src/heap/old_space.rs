//! Old generation: segregated size-class block lists, collected by mark-sweep.

use std::collections::BTreeMap;

use super::object::{GcFlags, ObjectHeader, ObjectRef, Words, WORD};

/// Nominal block size; blocks for cells larger than this hold one cell.
const BLOCK_BYTES: usize = 32 * 1024;

pub(crate) struct Block {
    pub cell_words: usize,
    pub mem: Words,
    allocated: Vec<bool>,
    free_cells: Vec<u32>,
}

impl Block {
    fn new(cell_words: usize) -> Self {
        let cells = (BLOCK_BYTES / (cell_words * WORD as usize)).max(1);
        Self {
            cell_words,
            mem: Words::zeroed(cells * cell_words),
            allocated: vec![false; cells],
            // Popped from the back, so lower cells are handed out first.
            free_cells: (0..cells as u32).rev().collect(),
        }
    }

    fn bytes(&self) -> u64 {
        (self.mem.len() as u64) * WORD
    }

    fn cell_bytes(&self) -> usize {
        self.cell_words * WORD as usize
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepOutcome {
    pub objects_freed: u64,
    pub bytes_freed: u64,
    pub objects_live: u64,
}

pub(crate) struct OldSpace {
    pub blocks: Vec<Block>,
    /// Size class (cell words) to blocks that still have free cells.
    available: BTreeMap<usize, Vec<usize>>,
    reserved_bytes: u64,
    used_bytes: u64,
    live_objects: u64,
}

impl OldSpace {
    pub fn new() -> Self {
        Self {
            blocks: Vec::new(),
            available: BTreeMap::new(),
            reserved_bytes: 0,
            used_bytes: 0,
            live_objects: 0,
        }
    }

    pub fn reserved_bytes(&self) -> u64 {
        self.reserved_bytes
    }

    pub fn used_bytes(&self) -> u64 {
        self.used_bytes
    }

    pub fn live_objects(&self) -> u64 {
        self.live_objects
    }

    /// Bytes a new block for this size class would reserve, or 0 if a free
    /// cell already exists.
    pub fn growth_needed(&self, cell_words: usize) -> u64 {
        match self.available.get(&cell_words) {
            Some(blocks) if !blocks.is_empty() => 0,
            _ => {
                let cells = (BLOCK_BYTES / (cell_words * WORD as usize)).max(1);
                (cells * cell_words) as u64 * WORD
            }
        }
    }

    /// Reserves a cell of `cell_words` words. The caller enforces the heap limit
    /// via [`OldSpace::growth_needed`].
    pub fn allocate(&mut self, cell_words: usize) -> ObjectRef {
        let block_index = match self
            .available
            .get(&cell_words)
            .and_then(|b| b.last().copied())
        {
            Some(index) => index,
            None => {
                let block = Block::new(cell_words);
                self.reserved_bytes += block.bytes();
                self.blocks.push(block);
                let index = self.blocks.len() - 1;
                self.available.entry(cell_words).or_default().push(index);
                index
            }
        };
        let block = &mut self.blocks[block_index];
        let cell = block
            .free_cells
            .pop()
            .expect("available block has a free cell");
        block.allocated[cell as usize] = true;
        if block.free_cells.is_empty() {
            let list = self
                .available
                .get_mut(&cell_words)
                .expect("size class list");
            list.retain(|&b| b != block_index);
        }
        self.used_bytes += (cell_words as u64) * WORD;
        self.live_objects += 1;
        ObjectRef::old(block_index as u32, cell * block.cell_bytes() as u32)
    }

    /// Resolves an address to `(block, header word index)` if it names a live cell.
    pub fn locate(&self, r: ObjectRef) -> Option<(usize, usize)> {
        let (block_index, offset) = r.old_parts();
        let block = self.blocks.get(block_index)?;
        let cell_bytes = block.cell_bytes();
        if offset % cell_bytes != 0 {
            return None;
        }
        let cell = offset / cell_bytes;
        if !*block.allocated.get(cell)? {
            return None;
        }
        Some((block_index, cell * block.cell_words))
    }

    /// Frees every unmarked cell and clears the mark on survivors. `on_free`
    /// sees each freed address.
    pub fn sweep(&mut self, mut on_free: impl FnMut(ObjectRef)) -> SweepOutcome {
        let mut outcome = SweepOutcome::default();
        for (block_index, block) in self.blocks.iter_mut().enumerate() {
            let cell_bytes = block.cell_bytes();
            let mut freed_any = false;
            let had_free = !block.free_cells.is_empty();
            for cell in 0..block.allocated.len() {
                if !block.allocated[cell] {
                    continue;
                }
                let at = cell * block.cell_words;
                let mut header = block.mem.header(at);
                if header.flags.contains(GcFlags::MARKED) {
                    header.flags.remove(GcFlags::MARKED);
                    block.mem.set_header(at, header);
                    outcome.objects_live += 1;
                } else {
                    block.allocated[cell] = false;
                    block.mem.set_header(at, ObjectHeader::decode(0));
                    block.free_cells.push(cell as u32);
                    freed_any = true;
                    outcome.objects_freed += 1;
                    outcome.bytes_freed += cell_bytes as u64;
                    on_free(ObjectRef::old(
                        block_index as u32,
                        (cell * cell_bytes) as u32,
                    ));
                }
            }
            if freed_any && !had_free {
                self.available
                    .entry(block.cell_words)
                    .or_default()
                    .push(block_index);
            }
        }
        self.used_bytes -= outcome.bytes_freed;
        self.live_objects -= outcome.objects_freed;
        outcome
    }
}
