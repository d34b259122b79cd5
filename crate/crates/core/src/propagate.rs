//! Forward and backward propagation of one sample through one replica.
//!
//! Map data is stored map after map, row-major within a map. Every inner
//! loop walks one contiguous row of a map, which is what lets the compiler
//! vectorize the convolution kernels; weights are read one scalar at a time
//! straight from the weight store.

use crate::config::{Activation, LayerKind};
use crate::error::{Error, Result};
use crate::network::{LayerShape, Network};
use crate::scalar::Scalar;
use crate::state::WorkerState;
use crate::weights::{LayerWeights, WeightRead};

/// Propagates `image` through the network and returns the class scores.
pub fn forward<'s, T, W>(
    net: &Network,
    state: &'s mut WorkerState<T>,
    weights: &W,
    image: &[T],
) -> &'s [T]
where
    T: Scalar,
    W: WeightRead<T>,
{
    state.input_mut().copy_from_slice(image);
    forward_loaded(net, state, weights)
}

/// Like [`forward`] for an image already written to
/// [`WorkerState::input_mut`].
pub fn forward_loaded<'s, T, W>(net: &Network, state: &'s mut WorkerState<T>, weights: &W) -> &'s [T]
where
    T: Scalar,
    W: WeightRead<T>,
{
    for l in 1..net.len() {
        let shape = net.layer(l);
        let (below, above) = state.outputs.split_at_mut(l);
        let input = &below[l - 1];
        let y = &mut above[0];
        match shape.kind {
            LayerKind::Conv => {
                let x = &mut state.inputs[l];
                conv_forward(shape, weights.layer(l), input, x);
                activate(shape.activation, x, y);
            }
            LayerKind::Full | LayerKind::Output => {
                let x = &mut state.inputs[l];
                full_forward(shape, weights.layer(l), input, x);
                activate(shape.activation, x, y);
            }
            LayerKind::MaxPool => pool_forward(shape, input, y, &mut state.argmax[l]),
            LayerKind::Input => unreachable!("input layer after position 0"),
        }
    }
    state.output()
}

fn conv_forward<T: Scalar, L: LayerWeights<T>>(shape: &LayerShape, w: L, input: &[T], x: &mut [T]) {
    let layout = shape.weights.expect("conv layer has weights");
    let (kh, kw) = shape.kernel;
    let (oh, ow) = (shape.height, shape.width);
    let (in_w, in_len, out_len) = (shape.in_width, shape.in_map_len(), shape.map_len());
    for m in 0..shape.maps {
        let base = layout.offset(m);
        let xm = &mut x[m * out_len..(m + 1) * out_len];
        xm.fill(w.get(layout.bias(m)));
        for n in 0..shape.in_maps {
            let src = &input[n * in_len..(n + 1) * in_len];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = w.get(base + (n * kh + ky) * kw + kx);
                    for oy in 0..oh {
                        let row = &src[(oy + ky) * in_w + kx..][..ow];
                        let dst = &mut xm[oy * ow..][..ow];
                        for (d, &s) in dst.iter_mut().zip(row) {
                            *d = *d + wv * s;
                        }
                    }
                }
            }
        }
    }
}

fn full_forward<T: Scalar, L: LayerWeights<T>>(shape: &LayerShape, w: L, input: &[T], x: &mut [T]) {
    let layout = shape.weights.expect("full layer has weights");
    for (j, xj) in x.iter_mut().enumerate() {
        let base = layout.offset(j);
        let mut acc = T::zero();
        for (i, &v) in input.iter().enumerate() {
            acc = acc + w.get(base + i) * v;
        }
        *xj = acc + w.get(layout.bias(j));
    }
}

fn pool_forward<T: Scalar>(shape: &LayerShape, input: &[T], y: &mut [T], argmax: &mut [u32]) {
    let (kh, kw) = shape.kernel;
    let (oh, ow) = (shape.height, shape.width);
    let (in_w, in_len) = (shape.in_width, shape.in_map_len());
    for m in 0..shape.maps {
        let map_base = m * in_len;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = map_base + oy * kh * in_w + ox * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let idx = map_base + (oy * kh + ky) * in_w + ox * kw + kx;
                        if input[idx] > input[best] {
                            best = idx;
                        }
                    }
                }
                let out = (m * oh + oy) * ow + ox;
                y[out] = input[best];
                argmax[out] = best as u32;
            }
        }
    }
}

fn activate<T: Scalar>(activation: Activation, x: &[T], y: &mut [T]) {
    match activation {
        Activation::Identity => y.copy_from_slice(x),
        Activation::Sigmoid => {
            for (o, &v) in y.iter_mut().zip(x) {
                *o = sigmoid(v);
            }
        }
        Activation::Softmax => softmax_into(x, y),
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Numerically stable softmax.
pub fn softmax_into<T: Scalar>(x: &[T], y: &mut [T]) {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &v) in y.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum = sum + *o;
    }
    for o in y.iter_mut() {
        *o = *o / sum;
    }
}

/// Cross-entropy loss of a softmax output against `label`, and the loss
/// derivative with respect to the output layer's pre-softmax inputs,
/// `output - onehot(label)`.
pub fn loss_and_output_delta<T: Scalar>(output: &[T], label: usize) -> Result<(T, Vec<T>)> {
    let mut delta = vec![T::zero(); output.len()];
    let loss = output_delta_into(output, label, &mut delta)?;
    Ok((loss, delta))
}

/// [`loss_and_output_delta`] writing into a caller-provided buffer.
pub fn output_delta_into<T: Scalar>(output: &[T], label: usize, delta: &mut [T]) -> Result<T> {
    if label >= output.len() {
        return Err(Error::Label {
            label,
            classes: output.len(),
        });
    }
    for (i, (d, &o)) in delta.iter_mut().zip(output).enumerate() {
        *d = if i == label { o - T::one() } else { o };
    }
    Ok(-output[label].max(T::min_positive_value()).ln())
}

/// Back-propagates `delta_out` (loss derivative at the output layer's
/// pre-activations) and fills the state's gradient buffers.
pub fn backward<T, W>(net: &Network, state: &mut WorkerState<T>, weights: &W, delta_out: &[T])
where
    T: Scalar,
    W: WeightRead<T>,
{
    backward_with(net, state, weights, delta_out, |_, _| {});
}

/// [`backward`] with a hook that receives each weighted layer's finished
/// gradient buffer, output layer first.
///
/// The hook for layer `l` runs after `l`'s weight gradients are complete and
/// the error signal has been propagated below `l`, so nothing computed
/// afterwards reads `l`'s weights again. The hook may consume and clear the
/// buffer.
pub fn backward_with<T, W, F>(
    net: &Network,
    state: &mut WorkerState<T>,
    weights: &W,
    delta_out: &[T],
    mut on_layer: F,
) where
    T: Scalar,
    W: WeightRead<T>,
    F: FnMut(usize, &mut [T]),
{
    for g in state.grads.iter_mut() {
        g.fill(T::zero());
    }
    let last = net.len() - 1;
    state.deltas[last].copy_from_slice(delta_out);
    for l in (1..=last).rev() {
        let shape = net.layer(l);
        let (below, above) = state.deltas.split_at_mut(l);
        let delta = &above[0];
        // No error signal is needed for the input image itself.
        let prev_delta = if l > 1 { Some(&mut *below[l - 1]) } else { None };
        let prev_y = &state.outputs[l - 1];
        match shape.kind {
            LayerKind::Conv => conv_backward(
                shape,
                weights.layer(l),
                delta,
                prev_y,
                &mut state.grads[l],
                prev_delta,
            ),
            LayerKind::Full | LayerKind::Output => full_backward(
                shape,
                weights.layer(l),
                delta,
                prev_y,
                &mut state.grads[l],
                prev_delta,
            ),
            LayerKind::MaxPool => {
                if let Some(pd) = prev_delta {
                    pd.fill(T::zero());
                    for (&src, &d) in state.argmax[l].iter().zip(delta.iter()) {
                        pd[src as usize] = pd[src as usize] + d;
                    }
                }
            }
            LayerKind::Input => unreachable!("input layer after position 0"),
        }
        if l > 1 {
            let prev = net.layer(l - 1);
            if prev.weights.is_some() && prev.activation == Activation::Sigmoid {
                for (d, &y) in below[l - 1].iter_mut().zip(state.outputs[l - 1].iter()) {
                    *d = *d * y * (T::one() - y);
                }
            }
        }
        if shape.weights.is_some() {
            on_layer(l, &mut state.grads[l]);
        }
    }
}

fn conv_backward<T: Scalar, L: LayerWeights<T>>(
    shape: &LayerShape,
    w: L,
    delta: &[T],
    prev_y: &[T],
    grads: &mut [T],
    mut prev_delta: Option<&mut [T]>,
) {
    let layout = shape.weights.expect("conv layer has weights");
    let (kh, kw) = shape.kernel;
    let (oh, ow) = (shape.height, shape.width);
    let (in_w, in_len, out_len) = (shape.in_width, shape.in_map_len(), shape.map_len());
    if let Some(pd) = prev_delta.as_deref_mut() {
        pd.fill(T::zero());
    }
    for m in 0..shape.maps {
        let base = layout.offset(m);
        let dm = &delta[m * out_len..(m + 1) * out_len];
        let bias = dm.iter().fold(T::zero(), |acc, &d| acc + d);
        grads[layout.bias(m)] = grads[layout.bias(m)] + bias;
        for n in 0..shape.in_maps {
            let src = &prev_y[n * in_len..(n + 1) * in_len];
            for ky in 0..kh {
                for kx in 0..kw {
                    let widx = base + (n * kh + ky) * kw + kx;
                    let mut acc = T::zero();
                    for oy in 0..oh {
                        let row = &src[(oy + ky) * in_w + kx..][..ow];
                        let drow = &dm[oy * ow..][..ow];
                        for (&d, &s) in drow.iter().zip(row) {
                            acc = acc + d * s;
                        }
                    }
                    grads[widx] = grads[widx] + acc;
                    if let Some(pd) = prev_delta.as_deref_mut() {
                        let wv = w.get(widx);
                        let pmap = &mut pd[n * in_len..(n + 1) * in_len];
                        for oy in 0..oh {
                            let prow = &mut pmap[(oy + ky) * in_w + kx..][..ow];
                            let drow = &dm[oy * ow..][..ow];
                            for (p, &d) in prow.iter_mut().zip(drow) {
                                *p = *p + wv * d;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn full_backward<T: Scalar, L: LayerWeights<T>>(
    shape: &LayerShape,
    w: L,
    delta: &[T],
    prev_y: &[T],
    grads: &mut [T],
    mut prev_delta: Option<&mut [T]>,
) {
    let layout = shape.weights.expect("full layer has weights");
    if let Some(pd) = prev_delta.as_deref_mut() {
        pd.fill(T::zero());
    }
    for (j, &dj) in delta.iter().enumerate() {
        let base = layout.offset(j);
        for (g, &y) in grads[base..base + layout.fan_in].iter_mut().zip(prev_y) {
            *g = *g + dj * y;
        }
        grads[layout.bias(j)] = grads[layout.bias(j)] + dj;
        if let Some(pd) = prev_delta.as_deref_mut() {
            for (i, p) in pd.iter_mut().enumerate() {
                *p = *p + w.get(base + i) * dj;
            }
        }
    }
}

/// Index of the largest score; the lowest index wins ties.
pub fn predict<T: Scalar>(output: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in output.iter().enumerate() {
        if v > output[best] {
            best = i;
        }
    }
    best
}
