//! Per-image operation counts of a network.
//!
//! Counting rules, per layer:
//!
//! * Conv forward: one op per multiply-accumulate over the kernel window of
//!   every input map (`neurons * in_maps * kh * kw`), plus one op per
//!   activation.
//! * Full/Output forward: one op per weight, bias included
//!   (`neurons * (fan_in + 1)`), plus one op per activation.
//! * MaxPool forward: two ops per element of every pooling window (load and
//!   compare).
//! * Backward of a weighted layer: gradient MACs (equal to the forward MACs),
//!   delta MACs into the previous layer (the same count, skipped when the
//!   previous layer is the input), one op per activation derivative, and one
//!   update op per weight.
//! * MaxPool backward: one op per output, routing its delta.
//!
//! Layers are read from the declared specs without validating the chain.

use crate::config::{LayerKind, NetworkConfig};

/// Operation counts of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerOps {
    pub layer: usize,
    pub kind: LayerKind,
    /// Multiply-accumulates of the forward pass.
    pub macs: u64,
    /// Activation evaluations (or pooling comparisons) of the forward pass.
    pub activations: u64,
    pub fprop: u64,
    pub bprop: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpCounts {
    pub fprop: f64,
    pub bprop: f64,
    pub layers: Vec<LayerOps>,
}

pub fn estimate_ops(config: &NetworkConfig) -> OpCounts {
    let mut layers = Vec::new();
    for (idx, pair) in config.layers.windows(2).enumerate() {
        let (prev, layer) = (&pair[0], &pair[1]);
        let neurons = layer.neurons() as u64;
        let (kh, kw) = layer.kernel.unwrap_or((0, 0));
        let window = (kh * kw) as u64;
        let below_is_input = prev.kind == LayerKind::Input;
        let ops = match layer.kind {
            LayerKind::Input => continue,
            LayerKind::MaxPool => LayerOps {
                layer: idx + 1,
                kind: layer.kind,
                macs: 0,
                activations: 2 * window * neurons,
                fprop: 2 * window * neurons,
                bprop: neurons,
            },
            LayerKind::Conv | LayerKind::Full | LayerKind::Output => {
                let (macs, weights) = if layer.kind == LayerKind::Conv {
                    let fan = prev.maps as u64 * window;
                    (neurons * fan, layer.maps as u64 * (fan + 1))
                } else {
                    let w = neurons * (prev.neurons() as u64 + 1);
                    (w, w)
                };
                let delta_macs = if below_is_input { 0 } else { macs };
                LayerOps {
                    layer: idx + 1,
                    kind: layer.kind,
                    macs,
                    activations: neurons,
                    fprop: macs + neurons,
                    bprop: macs + delta_macs + neurons + weights,
                }
            }
        };
        layers.push(ops);
    }
    OpCounts {
        fprop: layers.iter().map(|l| l.fprop as f64).sum(),
        bprop: layers.iter().map(|l| l.bprop as f64).sum(),
        layers,
    }
}
