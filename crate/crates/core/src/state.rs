use crate::aligned::AlignedVec;
use crate::config::LayerKind;
use crate::network::Network;
use crate::scalar::Scalar;

/// Private per-worker buffers for one network replica.
///
/// Holds, per layer, the pre-activation inputs `x`, the activations `y`,
/// the error signal `delta`, and for weighted layers a gradient buffer in
/// the padded weight layout. Nothing here is shared between workers.
#[derive(Clone, Debug)]
pub struct WorkerState<T: Scalar> {
    pub(crate) inputs: Vec<AlignedVec<T>>,
    pub(crate) outputs: Vec<AlignedVec<T>>,
    pub(crate) deltas: Vec<AlignedVec<T>>,
    pub(crate) grads: Vec<AlignedVec<T>>,
    /// For pooling layers, the index in the previous layer's output that
    /// won each window.
    pub(crate) argmax: Vec<Vec<u32>>,
}

impl<T: Scalar> WorkerState<T> {
    pub fn new(net: &Network) -> Self {
        let mut inputs = Vec::with_capacity(net.len());
        let mut outputs = Vec::with_capacity(net.len());
        let mut deltas = Vec::with_capacity(net.len());
        let mut grads = Vec::with_capacity(net.len());
        let mut argmax = Vec::with_capacity(net.len());
        for layer in net.layers() {
            let n = layer.neurons();
            let weighted = layer.weights.is_some();
            inputs.push(AlignedVec::zeroed(if weighted { n } else { 0 }));
            outputs.push(AlignedVec::zeroed(n));
            deltas.push(AlignedVec::zeroed(n));
            grads.push(AlignedVec::zeroed(layer.weights.map_or(0, |w| w.padded_len())));
            argmax.push(if layer.kind == LayerKind::MaxPool {
                vec![0; n]
            } else {
                Vec::new()
            });
        }
        WorkerState {
            inputs,
            outputs,
            deltas,
            grads,
            argmax,
        }
    }

    /// Activations `y` of a layer; for the input layer, the image.
    pub fn activations(&self, layer: usize) -> &[T] {
        &self.outputs[layer]
    }

    /// Weighted sums `x` before the activation function.
    pub fn pre_activations(&self, layer: usize) -> &[T] {
        &self.inputs[layer]
    }

    /// Error signal of a layer after the last backward pass. For weighted
    /// layers this is the derivative of the loss with respect to `x`, for
    /// pooling layers with respect to `y`.
    pub fn delta(&self, layer: usize) -> &[T] {
        &self.deltas[layer]
    }

    pub fn gradients(&self, layer: usize) -> &[T] {
        &self.grads[layer]
    }

    pub fn gradients_mut(&mut self, layer: usize) -> &mut [T] {
        &mut self.grads[layer]
    }

    pub fn pool_argmax(&self, layer: usize) -> &[u32] {
        &self.argmax[layer]
    }

    /// Buffer the next image is written into before [`crate::forward`].
    pub fn input_mut(&mut self) -> &mut [T] {
        &mut self.outputs[0]
    }

    pub fn output(&self) -> &[T] {
        &self.outputs[self.outputs.len() - 1]
    }

    pub fn num_layers(&self) -> usize {
        self.outputs.len()
    }
}
