//! Hierarchical cell locks: holding a cell excludes its ancestors and
//! descendants as well as the cell itself.

use alloc::vec;
use alloc::vec::Vec;

use crate::tree::NO_CELL;

#[derive(Clone, Debug)]
pub struct LockTable {
    parent: Vec<u32>,
    locked: Vec<bool>,
    /// Number of locked strict descendants.
    hold: Vec<u32>,
}

impl LockTable {
    /// `parent[c]` is the parent lock of `c`, or `NO_CELL` for roots.
    pub fn new(parent: Vec<u32>) -> Self {
        let n = parent.len();
        LockTable { parent, locked: vec![false; n], hold: vec![0; n] }
    }

    pub fn can_lock(&self, c: u32) -> bool {
        if self.locked[c as usize] || self.hold[c as usize] > 0 {
            return false;
        }
        let mut p = self.parent[c as usize];
        while p != NO_CELL {
            if self.locked[p as usize] {
                return false;
            }
            p = self.parent[p as usize];
        }
        true
    }

    fn lock(&mut self, c: u32) {
        self.locked[c as usize] = true;
        let mut p = self.parent[c as usize];
        while p != NO_CELL {
            self.hold[p as usize] += 1;
            p = self.parent[p as usize];
        }
    }

    pub fn unlock(&mut self, c: u32) {
        debug_assert!(self.locked[c as usize], "unlocking free cell {c}");
        self.locked[c as usize] = false;
        let mut p = self.parent[c as usize];
        while p != NO_CELL {
            self.hold[p as usize] -= 1;
            p = self.parent[p as usize];
        }
    }

    /// Take every lock in `cells` (sorted, distinct) or none of them.
    pub fn try_lock_all(&mut self, cells: &[u32]) -> bool {
        for (k, &c) in cells.iter().enumerate() {
            if !self.can_lock(c) {
                for &d in &cells[..k] {
                    self.unlock(d);
                }
                return false;
            }
            self.lock(c);
        }
        true
    }

    pub fn unlock_all(&mut self, cells: &[u32]) {
        for &c in cells {
            self.unlock(c);
        }
    }

    /// True if the two lock sets can never be held at the same time.
    pub fn conflict(&self, a: &[u32], b: &[u32]) -> bool {
        a.iter().any(|&x| b.iter().any(|&y| self.related(x, y)))
    }

    fn related(&self, x: u32, y: u32) -> bool {
        self.is_ancestor_or_self(x, y) || self.is_ancestor_or_self(y, x)
    }

    fn is_ancestor_or_self(&self, anc: u32, mut c: u32) -> bool {
        while c != NO_CELL {
            if c == anc {
                return true;
            }
            c = self.parent[c as usize];
        }
        false
    }

    pub fn all_free(&self) -> bool {
        self.locked.iter().all(|&l| !l) && self.hold.iter().all(|&h| h == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // 0 -> {1, 2}, 1 -> {3}
    fn table() -> LockTable {
        LockTable::new(vec![NO_CELL, 0, 0, 1])
    }

    #[test]
    fn parent_and_child_exclude_each_other() {
        let mut t = table();
        assert!(t.try_lock_all(&[3]));
        assert!(!t.can_lock(0));
        assert!(!t.can_lock(1));
        assert!(t.can_lock(2));
        t.unlock(3);
        assert!(t.try_lock_all(&[0]));
        assert!(!t.can_lock(3));
        t.unlock(0);
        assert!(t.all_free());
    }

    #[test]
    fn failed_multi_lock_rolls_back() {
        let mut t = table();
        assert!(t.try_lock_all(&[1]));
        assert!(!t.try_lock_all(&[2, 3]));
        assert!(t.can_lock(2));
        t.unlock(1);
        assert!(t.all_free());
    }

    #[test]
    fn conflict_relation() {
        let t = table();
        assert!(t.conflict(&[0], &[3]));
        assert!(t.conflict(&[2, 3], &[1]));
        assert!(!t.conflict(&[2], &[3]));
    }
}
