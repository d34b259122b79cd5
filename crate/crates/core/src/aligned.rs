use std::fmt;
use std::mem::size_of;
use std::ops::{Deref, DerefMut};
use std::slice;

/// Scalars per 64-byte line for `f32`; the unit every padded stride is
/// rounded to.
pub(crate) const LINE_SCALARS: usize = 16;

#[derive(Clone, Copy)]
#[repr(C, align(64))]
struct Line<T: Copy>([T; LINE_SCALARS]);

/// Growable-once buffer whose first element sits on a 64-byte boundary.
///
/// Backed by whole cache lines so the storage is contiguous; the logical
/// length may be shorter than the allocation.
#[derive(Clone)]
pub struct AlignedVec<T: Copy> {
    lines: Vec<Line<T>>,
    len: usize,
}

impl<T: Copy + Default> AlignedVec<T> {
    pub fn zeroed(len: usize) -> Self {
        assert!(
            (LINE_SCALARS * size_of::<T>()).is_multiple_of(64),
            "element type does not tile a cache line"
        );
        AlignedVec {
            lines: vec![Line([T::default(); LINE_SCALARS]); len.div_ceil(LINE_SCALARS)],
            len,
        }
    }

    pub fn from_slice(values: &[T]) -> Self {
        let mut v = Self::zeroed(values.len());
        v.copy_from_slice(values);
        v
    }
}

impl<T: Copy> Deref for AlignedVec<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        // SAFETY: `Line<T>` is `repr(C)` over `[T; 16]` and its size is an
        // exact multiple of 64 bytes (checked in `zeroed`), so lines are laid
        // out back to back with no padding; `len` never exceeds capacity.
        unsafe { slice::from_raw_parts(self.lines.as_ptr() as *const T, self.len) }
    }
}

impl<T: Copy> DerefMut for AlignedVec<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        // SAFETY: see `deref`.
        unsafe { slice::from_raw_parts_mut(self.lines.as_mut_ptr() as *mut T, self.len) }
    }
}

impl<T: Copy + fmt::Debug> fmt::Debug for AlignedVec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

/// Rounds `n` up to a whole number of 64-byte lines of `f32`.
pub(crate) fn padded(n: usize) -> usize {
    n.div_ceil(LINE_SCALARS) * LINE_SCALARS
}
