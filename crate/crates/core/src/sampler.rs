use std::sync::atomic::{AtomicUsize, Ordering};

/// First-come work sharing over `[0, len)`.
///
/// Workers claim indices from one shared counter, so faster workers simply
/// claim more. Each index is handed out exactly once per [`reset`].
///
/// [`reset`]: WorkSampler::reset
#[derive(Debug)]
pub struct WorkSampler {
    next: AtomicUsize,
    len: AtomicUsize,
}

impl WorkSampler {
    pub fn new(len: usize) -> Self {
        WorkSampler {
            next: AtomicUsize::new(0),
            len: AtomicUsize::new(len),
        }
    }

    /// Rebinds to a new set size. Must not race with `next_index`.
    pub fn reset(&self, len: usize) {
        self.len.store(len, Ordering::Relaxed);
        self.next.store(0, Ordering::Relaxed);
    }

    pub fn len(&self) -> usize {
        self.len.load(Ordering::Relaxed)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn next_index(&self) -> Option<usize> {
        let len = self.len.load(Ordering::Relaxed);
        let i = self.next.fetch_add(1, Ordering::Relaxed);
        (i < len).then_some(i)
    }

    /// Indices handed out so far, capped at the set size.
    pub fn claimed(&self) -> usize {
        self.next.load(Ordering::Relaxed).min(self.len())
    }
}
