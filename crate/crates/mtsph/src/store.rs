//! Particle array shared by the worker threads of one rank. Access to a
//! range is only sound while the task performing it holds the cell lock
//! covering that range; the task engine guarantees this.

use std::cell::UnsafeCell;
use std::ops::Range;

use mtsph_core::hydro::Slot;

pub struct SharedSlots {
    cells: Box<[UnsafeCell<Slot>]>,
}

// SAFETY: concurrent access is partitioned by the cell locks of the task
// engine, so no two threads touch the same slot while one of them writes.
unsafe impl Sync for SharedSlots {}

impl SharedSlots {
    pub fn new(v: Vec<Slot>) -> Self {
        SharedSlots { cells: v.into_iter().map(UnsafeCell::new).collect() }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn base(&self) -> *mut Slot {
        // UnsafeCell<T> has the same layout as T
        self.cells.as_ptr() as *mut Slot
    }

    /// # Safety
    /// No other thread may write any slot in `r` while the slice lives.
    pub unsafe fn slice(&self, r: Range<usize>) -> &[Slot] {
        assert!(r.start <= r.end && r.end <= self.cells.len());
        std::slice::from_raw_parts(self.base().add(r.start), r.end - r.start)
    }

    /// # Safety
    /// No other thread may access any slot in `r` while the slice lives.
    #[allow(clippy::mut_from_ref)]
    pub unsafe fn slice_mut(&self, r: Range<usize>) -> &mut [Slot] {
        assert!(r.start <= r.end && r.end <= self.cells.len());
        std::slice::from_raw_parts_mut(self.base().add(r.start), r.end - r.start)
    }

    pub fn as_mut_slice(&mut self) -> &mut [Slot] {
        // SAFETY: exclusive borrow of the whole store
        unsafe { self.slice_mut(0..self.cells.len()) }
    }

    pub fn as_slice(&mut self) -> &[Slot] {
        self.as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<Slot> {
        self.cells.into_vec().into_iter().map(UnsafeCell::into_inner).collect()
    }
}
