//! Weight storage: the lock-free store shared by all workers, and a plain
//! owned copy for sequential use and reference checks.

use std::sync::atomic::{AtomicU32, Ordering};

use crate::aligned::{AlignedVec, LINE_SCALARS};
use crate::network::{Network, WeightLayout};
use crate::rng::{SplitMix64, INIT_RANGE};
use crate::scalar::Scalar;

/// Read access to one layer's padded weight array.
pub trait LayerWeights<T> {
    fn get(&self, idx: usize) -> T;
}

impl<T: Copy> LayerWeights<T> for &[T] {
    #[inline(always)]
    fn get(&self, idx: usize) -> T {
        self[idx]
    }
}

/// Anything forward and backward propagation can read weights from.
pub trait WeightRead<T: Scalar>: Sync {
    type Layer<'a>: LayerWeights<T>
    where
        Self: 'a;

    /// Weights of network layer `idx`; empty for layers without weights.
    fn layer(&self, idx: usize) -> Self::Layer<'_>;
}

/// Owned, unshared weights in the same padded layout as [`SharedWeights`].
#[derive(Clone, Debug)]
pub struct Params<T: Scalar> {
    layers: Vec<AlignedVec<T>>,
    layouts: Vec<Option<WeightLayout>>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(net: &Network) -> Self {
        let layouts: Vec<_> = net.layers().iter().map(|l| l.weights).collect();
        let layers = layouts
            .iter()
            .map(|w| AlignedVec::zeroed(w.map_or(0, |w| w.padded_len())))
            .collect();
        Params { layers, layouts }
    }

    /// Deterministic initialization from the network's seed: one
    /// [`SplitMix64`] stream walks the weighted layers in order, each unit's
    /// weights then its bias, drawing uniformly from `[-0.05, 0.05)`.
    pub fn initialized(net: &Network) -> Self {
        let mut params = Self::zeros(net);
        let mut rng = SplitMix64::new(net.config().seed);
        for (idx, layout) in net.weighted() {
            let layer = &mut params.layers[idx];
            for i in layout.logical_indices() {
                layer[i] = T::of(rng.next_symmetric(INIT_RANGE) as f32 as f64);
            }
        }
        params
    }

    pub fn layout(&self, idx: usize) -> Option<WeightLayout> {
        self.layouts[idx]
    }

    pub fn layer_slice(&self, idx: usize) -> &[T] {
        &self.layers[idx]
    }

    pub fn layer_mut(&mut self, idx: usize) -> &mut [T] {
        &mut self.layers[idx]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Real weights of one layer in unit order, padding skipped.
    pub fn logical(&self, idx: usize) -> Vec<T> {
        match self.layouts[idx] {
            Some(w) => w.logical_indices().map(|i| self.layers[idx][i]).collect(),
            None => Vec::new(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    let v: Vec<U> = l.iter().map(|x| U::of(x.as_f64())).collect();
                    AlignedVec::from_slice(&v)
                })
                .collect(),
            layouts: self.layouts.clone(),
        }
    }
}

impl<T: Scalar> WeightRead<T> for Params<T> {
    type Layer<'a> = &'a [T];

    #[inline]
    fn layer(&self, idx: usize) -> &[T] {
        &self.layers[idx]
    }
}

#[repr(C, align(64))]
struct AtomicLine([AtomicU32; LINE_SCALARS]);

impl AtomicLine {
    fn zero() -> Self {
        AtomicLine(std::array::from_fn(|_| AtomicU32::new(0)))
    }
}

struct AtomicBuf {
    lines: Box<[AtomicLine]>,
    len: usize,
}

impl AtomicBuf {
    fn zeroed(len: usize) -> Self {
        AtomicBuf {
            lines: (0..len.div_ceil(LINE_SCALARS)).map(|_| AtomicLine::zero()).collect(),
            len,
        }
    }

    fn cells(&self) -> &[AtomicU32] {
        // SAFETY: `AtomicLine` is 64 bytes holding 16 `AtomicU32` with no
        // padding, so the boxed lines form one contiguous run of cells.
        unsafe { std::slice::from_raw_parts(self.lines.as_ptr() as *const AtomicU32, self.len) }
    }
}

/// Single-precision weights shared by every worker without locks.
///
/// Each scalar is an `f32` stored in its own atomic word and accessed with
/// relaxed loads and stores. Reads may be stale, and two workers updating
/// the same scalar at once may lose one of the updates, but a scalar is
/// never observed half written.
pub struct SharedWeights {
    layers: Vec<AtomicBuf>,
    layouts: Vec<Option<WeightLayout>>,
}

/// One layer of [`SharedWeights`].
#[derive(Clone, Copy)]
pub struct SharedLayer<'a>(&'a [AtomicU32]);

impl LayerWeights<f32> for SharedLayer<'_> {
    #[inline(always)]
    fn get(&self, idx: usize) -> f32 {
        f32::from_bits(self.0[idx].load(Ordering::Relaxed))
    }
}

impl SharedLayer<'_> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl WeightRead<f32> for SharedWeights {
    type Layer<'a> = SharedLayer<'a>;

    #[inline]
    fn layer(&self, idx: usize) -> SharedLayer<'_> {
        SharedLayer(self.layers[idx].cells())
    }
}

impl SharedWeights {
    pub fn zeros(net: &Network) -> Self {
        let layouts: Vec<_> = net.layers().iter().map(|l| l.weights).collect();
        let layers = layouts
            .iter()
            .map(|w| AtomicBuf::zeroed(w.map_or(0, |w| w.padded_len())))
            .collect();
        SharedWeights { layers, layouts }
    }

    pub fn initialized(net: &Network) -> Self {
        Self::from_params(&Params::<f32>::initialized(net))
    }

    pub fn from_params(params: &Params<f32>) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|src| {
                let buf = AtomicBuf::zeroed(src.len());
                for (cell, v) in buf.cells().iter().zip(src.iter()) {
                    cell.store(v.to_bits(), Ordering::Relaxed);
                }
                buf
            })
            .collect();
        SharedWeights {
            layers,
            layouts: params.layouts.clone(),
        }
    }

    pub fn snapshot(&self) -> Params<f32> {
        Params {
            layers: self
                .layers
                .iter()
                .map(|buf| {
                    let v: Vec<f32> = buf
                        .cells()
                        .iter()
                        .map(|c| f32::from_bits(c.load(Ordering::Relaxed)))
                        .collect();
                    AlignedVec::from_slice(&v)
                })
                .collect(),
            layouts: self.layouts.clone(),
        }
    }

    pub fn layout(&self, idx: usize) -> Option<WeightLayout> {
        self.layouts[idx]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn get(&self, layer: usize, idx: usize) -> f32 {
        self.layer(layer).get(idx)
    }

    pub fn set(&self, layer: usize, idx: usize, value: f32) {
        self.layers[layer].cells()[idx].store(value.to_bits(), Ordering::Relaxed);
    }

    /// Applies one layer's locally accumulated gradient and clears it:
    /// `w <- w - eta * (g + lambda * w)` for every scalar.
    ///
    /// Each scalar is a separate load and store, not an atomic
    /// read-modify-write; concurrent publishers never wait on each other.
    pub fn publish(&self, layer: usize, grads: &mut [f32], eta: f32, lambda: f32) {
        let cells = self.layers[layer].cells();
        debug_assert_eq!(cells.len(), grads.len());
        for (cell, g) in cells.iter().zip(grads.iter_mut()) {
            let w = f32::from_bits(cell.load(Ordering::Relaxed));
            cell.store((w - eta * (*g + lambda * w)).to_bits(), Ordering::Relaxed);
            *g = 0.0;
        }
    }

    /// FNV-1a over the bit patterns of every stored scalar.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for buf in &self.layers {
            for c in buf.cells() {
                for b in c.load(Ordering::Relaxed).to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}
