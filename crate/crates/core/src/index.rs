//! Integer cell indices, index boxes and ghosted patch arrays.

use alloc::vec::Vec;
use core::cell::Cell;

use crate::error::{Error, Result};

/// Cell index `(i, j, k)`. Two-dimensional grids use `k = 0`.
pub type Index = [i64; 3];

pub(crate) fn add(a: Index, b: Index) -> Index {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Unit index step along axis `d` with sign `s`.
pub(crate) fn unit(d: usize, s: i64) -> Index {
    let mut e = [0; 3];
    e[d] = s;
    e
}

/// Half-open box of cell indices, `lo <= c < hi` per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IndexBox {
    pub lo: Index,
    pub hi: Index,
}

impl IndexBox {
    pub fn new(lo: Index, hi: Index) -> Self {
        IndexBox { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|d| self.hi[d] <= self.lo[d])
    }

    pub fn extent(&self, d: usize) -> i64 {
        (self.hi[d] - self.lo[d]).max(0)
    }

    pub fn len(&self) -> usize {
        (self.extent(0) * self.extent(1) * self.extent(2)) as usize
    }

    pub fn contains(&self, c: Index) -> bool {
        (0..3).all(|d| c[d] >= self.lo[d] && c[d] < self.hi[d])
    }

    pub fn contains_box(&self, other: &IndexBox) -> bool {
        other.is_empty() || (0..3).all(|d| other.lo[d] >= self.lo[d] && other.hi[d] <= self.hi[d])
    }

    /// Grow by `g` cells on both sides of the first `ndim` axes.
    pub fn grow(&self, ndim: usize, g: usize) -> Self {
        let mut b = *self;
        for d in 0..ndim {
            b.lo[d] -= g as i64;
            b.hi[d] += g as i64;
        }
        b
    }

    pub fn intersect(&self, other: &IndexBox) -> Self {
        let mut b = *self;
        for d in 0..3 {
            b.lo[d] = b.lo[d].max(other.lo[d]);
            b.hi[d] = b.hi[d].min(other.hi[d]);
        }
        b
    }

    /// Chebyshev distance from `c` to the box, zero inside.
    pub fn distance(&self, c: Index) -> usize {
        let mut dist = 0;
        for d in 0..3 {
            let o = if c[d] < self.lo[d] {
                self.lo[d] - c[d]
            } else if c[d] >= self.hi[d] {
                c[d] - self.hi[d] + 1
            } else {
                0
            };
            dist = dist.max(o);
        }
        dist as usize
    }

    /// Position of `c` in k-major, then j, then i order.
    pub fn linear(&self, c: Index) -> usize {
        let nx = self.extent(0);
        let ny = self.extent(1);
        (((c[2] - self.lo[2]) * ny + (c[1] - self.lo[1])) * nx + (c[0] - self.lo[0])) as usize
    }

    pub fn iter(&self) -> BoxIter {
        BoxIter { b: *self, next: if self.is_empty() { None } else { Some(self.lo) } }
    }
}

/// Iterates a box with `i` fastest and `k` slowest.
#[derive(Debug, Clone)]
pub struct BoxIter {
    b: IndexBox,
    next: Option<Index>,
}

impl Iterator for BoxIter {
    type Item = Index;

    fn next(&mut self) -> Option<Index> {
        let cur = self.next?;
        let mut n = cur;
        n[0] += 1;
        if n[0] >= self.b.hi[0] {
            n[0] = self.b.lo[0];
            n[1] += 1;
            if n[1] >= self.b.hi[1] {
                n[1] = self.b.lo[1];
                n[2] += 1;
            }
        }
        self.next = if n[2] >= self.b.hi[2] { None } else { Some(n) };
        Some(cur)
    }
}

/// Values over a valid box plus a ghost ring.
///
/// Reads outside the allocation fail with [`Error::GhostWidthTooSmall`].
/// The deepest ring touched by `get` is tracked so callers can report how
/// much halo a computation actually used.
#[derive(Debug, Clone)]
pub struct PatchArray<T> {
    ndim: usize,
    valid: IndexBox,
    ghost: usize,
    alloc: IndexBox,
    data: Vec<T>,
    deepest: Cell<usize>,
}

impl<T: Clone> PatchArray<T> {
    pub fn new(ndim: usize, valid: IndexBox, ghost: usize, fill: T) -> Self {
        let alloc = valid.grow(ndim, ghost);
        PatchArray { ndim, valid, ghost, alloc, data: alloc::vec![fill; alloc.len()], deepest: Cell::new(0) }
    }
}

impl<T> PatchArray<T> {
    pub fn from_fn(ndim: usize, valid: IndexBox, ghost: usize, mut f: impl FnMut(Index) -> T) -> Self {
        let alloc = valid.grow(ndim, ghost);
        let data = alloc.iter().map(&mut f).collect();
        PatchArray { ndim, valid, ghost, alloc, data, deepest: Cell::new(0) }
    }

    pub fn try_from_fn(
        ndim: usize,
        valid: IndexBox,
        ghost: usize,
        mut f: impl FnMut(Index) -> Result<T>,
    ) -> Result<Self> {
        let alloc = valid.grow(ndim, ghost);
        let data = alloc.iter().map(&mut f).collect::<Result<Vec<T>>>()?;
        Ok(PatchArray { ndim, valid, ghost, alloc, data, deepest: Cell::new(0) })
    }

    pub fn ndim(&self) -> usize {
        self.ndim
    }

    pub fn valid(&self) -> IndexBox {
        self.valid
    }

    pub fn ghost(&self) -> usize {
        self.ghost
    }

    pub fn allocated(&self) -> IndexBox {
        self.alloc
    }

    pub fn in_bounds(&self, c: Index) -> bool {
        self.alloc.contains(c)
    }

    fn violation(&self, c: Index) -> Error {
        Error::GhostWidthTooSmall { cell: c, depth: self.valid.distance(c), ghost: self.ghost }
    }

    pub fn get(&self, c: Index) -> Result<&T> {
        if !self.alloc.contains(c) {
            return Err(self.violation(c));
        }
        let depth = self.valid.distance(c);
        if depth > self.deepest.get() {
            self.deepest.set(depth);
        }
        Ok(&self.data[self.alloc.linear(c)])
    }

    pub fn get_mut(&mut self, c: Index) -> Result<&mut T> {
        if !self.alloc.contains(c) {
            return Err(self.violation(c));
        }
        let at = self.alloc.linear(c);
        Ok(&mut self.data[at])
    }

    pub fn set(&mut self, c: Index, v: T) -> Result<()> {
        *self.get_mut(c)? = v;
        Ok(())
    }

    /// Deepest ghost ring read through [`PatchArray::get`] so far.
    pub fn deepest_read(&self) -> usize {
        self.deepest.get()
    }

    pub fn reset_read_tracking(&self) {
        self.deepest.set(0);
    }

    /// Storage in allocation order.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PatchArray<U> {
        PatchArray {
            ndim: self.ndim,
            valid: self.valid,
            ghost: self.ghost,
            alloc: self.alloc,
            data: self.data.iter().map(&mut f).collect(),
            deepest: Cell::new(0),
        }
    }
}
