//! Per-level page tables mapping a brick's linear index to its pool slot.
//!
//! Entries are `0` for Unmapped and `slot + 1` for Mapped. Small levels keep
//! every entry resident; large ones split entries into fixed-size pages,
//! reached through an always-resident directory, of which only a bounded
//! number are resident at once.

use std::sync::atomic::{AtomicU32, Ordering};

pub(crate) const UNMAPPED: u32 = 0;
const NO_OWNER: u32 = u32::MAX;

#[derive(Debug)]
pub(crate) enum PageTable {
    Direct(Vec<u32>),
    Virtual(VirtualTable),
}

#[derive(Debug)]
pub(crate) struct VirtualTable {
    page_entries: usize,
    /// Page id -> resident page slot + 1, or 0.
    directory: Vec<u32>,
    pages: Vec<Page>,
    free: Vec<u32>,
}

#[derive(Debug)]
struct Page {
    owner: u32,
    entries: Box<[u32]>,
    last_used: AtomicU32,
}

/// Result of making room for an entry.
pub(crate) enum Reserve {
    Ready,
    /// A page had to be evicted; its mapped entries are listed as
    /// `(linear index, pool slot)`.
    Evicted(Vec<(usize, u32)>),
    /// Every resident page was used this frame.
    Full,
}

impl PageTable {
    pub fn new(entries: usize, threshold: usize, page_entries: usize, page_budget: usize) -> Self {
        if entries <= threshold {
            return PageTable::Direct(vec![UNMAPPED; entries]);
        }
        let pages = entries.div_ceil(page_entries);
        PageTable::Virtual(VirtualTable {
            page_entries,
            directory: vec![0; pages],
            pages: (0..page_budget.min(pages))
                .map(|_| Page {
                    owner: NO_OWNER,
                    entries: vec![UNMAPPED; page_entries].into_boxed_slice(),
                    last_used: AtomicU32::new(0),
                })
                .collect(),
            free: (0..page_budget.min(pages) as u32).rev().collect(),
        })
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self, PageTable::Virtual(_))
    }

    /// Entry for `linear`, stamping its page as used in `frame`.
    #[inline]
    pub fn get(&self, linear: usize, frame: u32) -> u32 {
        match self {
            PageTable::Direct(e) => e[linear],
            PageTable::Virtual(v) => {
                let slot = v.directory[linear / v.page_entries];
                if slot == 0 {
                    return UNMAPPED;
                }
                let page = &v.pages[slot as usize - 1];
                page.last_used.store(frame, Ordering::Relaxed);
                page.entries[linear % v.page_entries]
            }
        }
    }

    /// Makes sure the page holding `linear` is resident.
    pub fn reserve(&mut self, linear: usize, frame: u32) -> Reserve {
        let PageTable::Virtual(v) = self else {
            return Reserve::Ready;
        };
        let id = linear / v.page_entries;
        if v.directory[id] != 0 {
            return Reserve::Ready;
        }
        let mut evicted = None;
        let slot = match v.free.pop() {
            Some(s) => s,
            None => {
                let victim = v
                    .pages
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.last_used.load(Ordering::Relaxed) < frame)
                    .min_by_key(|(i, p)| (p.last_used.load(Ordering::Relaxed), *i))
                    .map(|(i, _)| i as u32);
                let Some(s) = victim else {
                    return Reserve::Full;
                };
                let page = &mut v.pages[s as usize];
                let base = page.owner as usize * v.page_entries;
                let mapped = page
                    .entries
                    .iter_mut()
                    .enumerate()
                    .filter(|(_, e)| **e != UNMAPPED)
                    .map(|(i, e)| (base + i, std::mem::replace(e, UNMAPPED) - 1))
                    .collect();
                v.directory[page.owner as usize] = 0;
                evicted = Some(mapped);
                s
            }
        };
        let page = &mut v.pages[slot as usize];
        page.owner = id as u32;
        page.entries.fill(UNMAPPED);
        *page.last_used.get_mut() = frame;
        v.directory[id] = slot + 1;
        match evicted {
            Some(e) => Reserve::Evicted(e),
            None => Reserve::Ready,
        }
    }

    /// Writes an entry whose page is resident (see [`PageTable::reserve`]).
    pub fn set(&mut self, linear: usize, value: u32) {
        match self {
            PageTable::Direct(e) => e[linear] = value,
            PageTable::Virtual(v) => {
                let slot = v.directory[linear / v.page_entries];
                if slot == 0 {
                    debug_assert_eq!(value, UNMAPPED, "mapping into a non-resident page");
                    return;
                }
                v.pages[slot as usize - 1].entries[linear % v.page_entries] = value;
            }
        }
    }

    pub fn clear(&mut self) {
        match self {
            PageTable::Direct(e) => e.fill(UNMAPPED),
            PageTable::Virtual(v) => {
                v.directory.fill(0);
                for p in &mut v.pages {
                    p.owner = NO_OWNER;
                    p.entries.fill(UNMAPPED);
                    *p.last_used.get_mut() = 0;
                }
                v.free = (0..v.pages.len() as u32).rev().collect();
            }
        }
    }

    /// Every mapped `(linear index, slot)`.
    pub fn mapped(&self) -> Vec<(usize, u32)> {
        match self {
            PageTable::Direct(e) => e
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != UNMAPPED)
                .map(|(i, v)| (i, v - 1))
                .collect(),
            PageTable::Virtual(v) => v
                .pages
                .iter()
                .filter(|p| p.owner != NO_OWNER)
                .flat_map(|p| {
                    let base = p.owner as usize * v.page_entries;
                    p.entries
                        .iter()
                        .enumerate()
                        .filter(|(_, e)| **e != UNMAPPED)
                        .map(move |(i, e)| (base + i, e - 1))
                })
                .collect(),
        }
    }

    pub fn resident_pages(&self) -> usize {
        match self {
            PageTable::Direct(_) => 0,
            PageTable::Virtual(v) => v.directory.iter().filter(|&&d| d != 0).count(),
        }
    }
}
