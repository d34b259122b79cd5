//! Straightforward loop-nest network used as an oracle by the integration
//! tests. Shapes come straight from the layer specs, weights live in one
//! `Vec` per unit (fan-in weights, then bias), and every loop is written
//! per output element.
#![allow(dead_code)]

use std::path::PathBuf;

use chaos_core::rng::SplitMix64;
use chaos_core::{Activation, LayerKind, NetworkConfig, Scalar};

pub struct RefLayer<T> {
    pub kind: LayerKind,
    pub activation: Activation,
    pub maps: usize,
    pub h: usize,
    pub w: usize,
    pub in_maps: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kh: usize,
    pub kw: usize,
    /// `units[u]` = fan-in weights then bias.
    pub units: Vec<Vec<T>>,
}

impl<T: Scalar> RefLayer<T> {
    fn neurons(&self) -> usize {
        self.maps * self.h * self.w
    }

    fn in_neurons(&self) -> usize {
        self.in_maps * self.in_h * self.in_w
    }

    fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.in_maps * self.kh * self.kw,
            _ => self.in_neurons(),
        }
    }
}

pub struct RefNet<T> {
    pub layers: Vec<RefLayer<T>>,
}

pub struct Trace<T> {
    /// Pre-activation inputs of weighted layers (empty otherwise).
    pub x: Vec<Vec<T>>,
    /// Layer outputs; `y[0]` is the image.
    pub y: Vec<Vec<T>>,
    /// Winning input index per pooling output.
    pub argmax: Vec<Vec<usize>>,
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

impl<T: Scalar> RefNet<T> {
    /// Shapes from `config`, weights drawn from the seed's SplitMix64
    /// stream in `[-0.05, 0.05)` and rounded to `f32`.
    pub fn new(config: &NetworkConfig) -> Self {
        let mut rng = SplitMix64::new(config.seed);
        let mut layers = Vec::new();
        for (i, spec) in config.layers.iter().enumerate() {
            let (in_maps, in_h, in_w) = if i == 0 {
                (0, 0, 0)
            } else {
                let p = &config.layers[i - 1];
                (p.maps, p.map_size.0, p.map_size.1)
            };
            let (kh, kw) = spec.kernel.unwrap_or((0, 0));
            let mut layer = RefLayer {
                kind: spec.kind,
                activation: spec.activation,
                maps: spec.maps,
                h: spec.map_size.0,
                w: spec.map_size.1,
                in_maps,
                in_h,
                in_w,
                kh,
                kw,
                units: Vec::new(),
            };
            if spec.kind.has_weights() {
                let units = match spec.kind {
                    LayerKind::Conv => layer.maps,
                    _ => layer.neurons(),
                };
                let fan = layer.fan_in();
                layer.units = (0..units)
                    .map(|_| {
                        (0..=fan)
                            .map(|_| T::of(rng.next_symmetric(0.05) as f32 as f64))
                            .collect()
                    })
                    .collect();
            }
            layers.push(layer);
        }
        RefNet { layers }
    }

    pub fn forward(&self, image: &[T]) -> Trace<T> {
        let n = self.layers.len();
        let mut t = Trace {
            x: vec![Vec::new(); n],
            y: vec![Vec::new(); n],
            argmax: vec![Vec::new(); n],
        };
        t.y[0] = image.to_vec();
        for l in 1..n {
            let layer = &self.layers[l];
            let input = &t.y[l - 1];
            match layer.kind {
                LayerKind::Conv => {
                    let mut x = vec![T::zero(); layer.neurons()];
                    for m in 0..layer.maps {
                        let unit = &layer.units[m];
                        for oy in 0..layer.h {
                            for ox in 0..layer.w {
                                let mut acc = unit[layer.fan_in()];
                                for c in 0..layer.in_maps {
                                    for ky in 0..layer.kh {
                                        for kx in 0..layer.kw {
                                            let wv = unit[(c * layer.kh + ky) * layer.kw + kx];
                                            let iv = input
                                                [(c * layer.in_h + oy + ky) * layer.in_w + ox + kx];
                                            acc = acc + wv * iv;
                                        }
                                    }
                                }
                                x[(m * layer.h + oy) * layer.w + ox] = acc;
                            }
                        }
                    }
                    t.y[l] = activate(layer.activation, &x);
                    t.x[l] = x;
                }
                LayerKind::Full | LayerKind::Output => {
                    let fan = layer.fan_in();
                    let x: Vec<T> = layer
                        .units
                        .iter()
                        .map(|unit| {
                            let mut acc = T::zero();
                            for i in 0..fan {
                                acc = acc + unit[i] * input[i];
                            }
                            acc + unit[fan]
                        })
                        .collect();
                    t.y[l] = activate(layer.activation, &x);
                    t.x[l] = x;
                }
                LayerKind::MaxPool => {
                    let mut y = vec![T::zero(); layer.neurons()];
                    let mut arg = vec![0; layer.neurons()];
                    for m in 0..layer.maps {
                        for oy in 0..layer.h {
                            for ox in 0..layer.w {
                                let at = |ky: usize, kx: usize| {
                                    (m * layer.in_h + oy * layer.kh + ky) * layer.in_w
                                        + ox * layer.kw
                                        + kx
                                };
                                let mut best = at(0, 0);
                                for ky in 0..layer.kh {
                                    for kx in 0..layer.kw {
                                        if input[at(ky, kx)] > input[best] {
                                            best = at(ky, kx);
                                        }
                                    }
                                }
                                let o = (m * layer.h + oy) * layer.w + ox;
                                y[o] = input[best];
                                arg[o] = best;
                            }
                        }
                    }
                    t.y[l] = y;
                    t.argmax[l] = arg;
                }
                LayerKind::Input => unreachable!(),
            }
        }
        t
    }

    pub fn predict(&self, image: &[T]) -> usize {
        let t = self.forward(image);
        let out = t.y.last().unwrap();
        let mut best = 0;
        for (i, &v) in out.iter().enumerate() {
            if v > out[best] {
                best = i;
            }
        }
        best
    }

    /// Weight gradients, `grads[l][unit][k]` in the same order as the
    /// weights, for softmax cross-entropy against `label`.
    pub fn gradients(&self, t: &Trace<T>, label: usize) -> Vec<Vec<Vec<T>>> {
        let n = self.layers.len();
        let mut grads: Vec<Vec<Vec<T>>> = self
            .layers
            .iter()
            .map(|l| l.units.iter().map(|u| vec![T::zero(); u.len()]).collect())
            .collect();
        let mut delta: Vec<T> = t.y[n - 1]
            .iter()
            .enumerate()
            .map(|(i, &y)| if i == label { y - T::one() } else { y })
            .collect();
        for l in (1..n).rev() {
            let layer = &self.layers[l];
            let prev_y = &t.y[l - 1];
            let mut prev = vec![T::zero(); layer.in_neurons()];
            match layer.kind {
                LayerKind::Full | LayerKind::Output => {
                    let fan = layer.fan_in();
                    for j in 0..layer.units.len() {
                        for i in 0..fan {
                            grads[l][j][i] = delta[j] * prev_y[i];
                        }
                        grads[l][j][fan] = delta[j];
                    }
                    for (i, p) in prev.iter_mut().enumerate() {
                        let mut acc = T::zero();
                        for (j, unit) in layer.units.iter().enumerate() {
                            acc = acc + unit[i] * delta[j];
                        }
                        *p = acc;
                    }
                }
                LayerKind::Conv => {
                    let plane = layer.h * layer.w;
                    for m in 0..layer.maps {
                        let d = &delta[m * plane..(m + 1) * plane];
                        let mut b = T::zero();
                        for &v in d {
                            b = b + v;
                        }
                        grads[l][m][layer.fan_in()] = b;
                        for c in 0..layer.in_maps {
                            for ky in 0..layer.kh {
                                for kx in 0..layer.kw {
                                    let mut acc = T::zero();
                                    for oy in 0..layer.h {
                                        for ox in 0..layer.w {
                                            acc = acc
                                                + d[oy * layer.w + ox]
                                                    * prev_y[(c * layer.in_h + oy + ky) * layer.in_w
                                                        + ox
                                                        + kx];
                                        }
                                    }
                                    grads[l][m][(c * layer.kh + ky) * layer.kw + kx] = acc;
                                }
                            }
                        }
                    }
                    for c in 0..layer.in_maps {
                        for iy in 0..layer.in_h {
                            for ix in 0..layer.in_w {
                                let mut acc = T::zero();
                                for m in 0..layer.maps {
                                    for ky in 0..layer.kh {
                                        for kx in 0..layer.kw {
                                            if iy < ky || ix < kx {
                                                continue;
                                            }
                                            let (oy, ox) = (iy - ky, ix - kx);
                                            if oy >= layer.h || ox >= layer.w {
                                                continue;
                                            }
                                            let wv = layer.units[m][(c * layer.kh + ky) * layer.kw + kx];
                                            acc = acc + wv * delta[(m * layer.h + oy) * layer.w + ox];
                                        }
                                    }
                                }
                                prev[(c * layer.in_h + iy) * layer.in_w + ix] = acc;
                            }
                        }
                    }
                }
                LayerKind::MaxPool => {
                    for (o, &src) in t.argmax[l].iter().enumerate() {
                        prev[src] = prev[src] + delta[o];
                    }
                }
                LayerKind::Input => unreachable!(),
            }
            let below = &self.layers[l - 1];
            if below.kind.has_weights() && below.activation == Activation::Sigmoid {
                for (p, &y) in prev.iter_mut().zip(prev_y) {
                    *p = *p * y * (T::one() - y);
                }
            }
            delta = prev;
        }
        grads
    }

    /// One plain SGD step: `w <- w - eta * (g + lambda * w)`.
    pub fn train_step(&mut self, image: &[T], label: usize, eta: T, lambda: T) {
        let t = self.forward(image);
        let grads = self.gradients(&t, label);
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            for (unit, gu) in layer.units.iter_mut().zip(g) {
                for (w, g) in unit.iter_mut().zip(gu) {
                    *w = *w - eta * (g + lambda * *w);
                }
            }
        }
    }

    /// Weights of layer `l`, unit by unit.
    pub fn flat(&self, l: usize) -> Vec<T> {
        self.layers[l].units.iter().flatten().copied().collect()
    }
}

fn activate<T: Scalar>(activation: Activation, x: &[T]) -> Vec<T> {
    match activation {
        Activation::Identity => x.to_vec(),
        Activation::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
        Activation::Softmax => {
            let mut max = T::neg_infinity();
            for &v in x {
                max = max.max(v);
            }
            let e: Vec<T> = x.iter().map(|&v| (v - max).exp()).collect();
            let mut sum = T::zero();
            for &v in &e {
                sum = sum + v;
            }
            e.into_iter().map(|v| v / sum).collect()
        }
    }
}

/// 28x28 bytes to a 29x29 image scaled to `[0, 1]`, zero last row and column.
pub fn preprocess<T: Scalar>(raw: &[u8]) -> Vec<T> {
    let mut out = vec![T::zero(); 29 * 29];
    for r in 0..28 {
        for c in 0..28 {
            out[r * 29 + c] = T::of(raw[r * 28 + c] as f64 / 255.0);
        }
    }
    out
}

/// Directory holding the MNIST files, if present.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = match std::env::var_os("CHAOS_DATA_DIR") {
        Some(d) => PathBuf::from(d),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"),
    };
    let present = std::fs::read_dir(&dir)
        .map(|entries| {
            entries
                .filter_map(|e| e.ok())
                .any(|e| e.file_name().to_string_lossy().starts_with("t10k-images"))
        })
        .unwrap_or(false);
    present.then_some(dir)
}

/// `n` random 28x28 images with labels, deterministic in `seed`. Pixels
/// are biased by the label so the sets are learnable.
pub fn synthetic_set(n: usize, seed: u64) -> chaos_core::LabeledSet {
    use chaos_core::mnist::{ImageSet, LabelSet};
    let mut rng = SplitMix64::new(seed);
    let mut pixels = Vec::with_capacity(n * 784);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = (rng.next_u64() % 10) as u8;
        for p in 0..784 {
            let hot = (p / 28) / 3 == label as usize;
            let noise = (rng.next_u64() % 64) as u8;
            pixels.push(if hot { 191 + noise } else { noise });
        }
        labels.push(label);
    }
    chaos_core::LabeledSet::new(
        ImageSet {
            count: n,
            height: 28,
            width: 28,
            pixels,
        },
        LabelSet { count: n, labels },
    )
    .unwrap()
}

/// The first images of MNIST when available, synthetic images otherwise.
pub fn dataset(train: usize, test: usize) -> chaos_core::Dataset {
    match mnist_dir() {
        Some(dir) => chaos_core::Dataset::load_dir(dir).unwrap().subset(train, test),
        None => chaos_core::Dataset {
            train: synthetic_set(train, 1),
            validation: None,
            test: synthetic_set(test, 2),
        },
    }
}

pub mod gradcheck {
    use chaos_core::rng::SplitMix64;
    use chaos_core::{
        backward, forward, loss_and_output_delta, Activation, LayerSpec, Network, NetworkConfig,
        Params, WorkerState,
    };

    pub const EPS: f64 = 1e-5;
    const REL_TOL: f64 = 1e-4;

    fn pick(rng: &mut SplitMix64, lo: usize, hi: usize) -> usize {
        lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize
    }

    /// Conv -> MaxPool -> [Conv] -> Full -> Output with random shapes.
    pub fn random_config(seed: u64) -> NetworkConfig {
        let mut rng = SplitMix64::new(seed);
        let k1 = pick(&mut rng, 2, 3);
        let c1 = 2 * pick(&mut rng, 2, 3);
        let m1 = pick(&mut rng, 1, 3);
        let mut layers = vec![
            LayerSpec::input(c1 + k1 - 1, c1 + k1 - 1),
            LayerSpec::conv(m1, c1, k1),
            LayerSpec::max_pool(m1, c1 / 2, 2),
        ];
        let side = c1 / 2;
        if rng.next_u64().is_multiple_of(2) && side >= 3 {
            layers.push(LayerSpec::conv(pick(&mut rng, 1, 2), side - 1, 2));
        }
        let hidden = pick(&mut rng, 3, 6);
        let mut full = LayerSpec::full(hidden);
        if seed % 5 == 4 {
            full = full.with_activation(Activation::Identity);
        }
        layers.push(full);
        layers.push(LayerSpec::output(pick(&mut rng, 2, 4)));
        NetworkConfig::new(layers).with_seed(seed)
    }

    fn loss(net: &Network, params: &Params<f64>, image: &[f64], label: usize) -> f64 {
        let mut state = WorkerState::new(net);
        let out = forward(net, &mut state, params, image).to_vec();
        loss_and_output_delta(&out, label).unwrap().0
    }

    /// Scales the initial weights up so the sigmoids are away from their
    /// linear region and the check exercises their curvature.
    fn spread_params(net: &Network) -> Params<f64> {
        let mut params = Params::<f32>::initialized(net).cast::<f64>();
        for (idx, layout) in net.weighted() {
            let layer = params.layer_mut(idx);
            for pos in layout.logical_indices() {
                layer[pos] *= 10.0;
            }
        }
        params
    }


    /// Compares every backward gradient of the random network `seed`
    /// against central differences. Returns the number of weights checked
    /// and the worst relative error.
    pub fn check(seed: u64) -> Result<(usize, f64), String> {
        let config = random_config(seed);
        let net = Network::new(&config).map_err(|e| e.to_string())?;
        if net.weight_count() > 500 {
            return Err(format!("seed {seed}: {} weights", net.weight_count()));
        }
        let mut rng = SplitMix64::new(1000 + seed);
        let image: Vec<f64> = (0..net.input_len()).map(|_| rng.next_unit()).collect();
        let label = (rng.next_u64() % net.classes() as u64) as usize;
        let mut params = spread_params(&net);

        let mut state = WorkerState::new(&net);
        let out = forward(&net, &mut state, &params, &image).to_vec();
        let (_, delta) = loss_and_output_delta(&out, label).unwrap();
        backward(&net, &mut state, &params, &delta);

        let (mut checked, mut worst) = (0, 0.0f64);
        let layouts: Vec<_> = net.weighted().collect();
        for (idx, layout) in layouts {
            let analytic = state.gradients(idx).to_vec();
            for pos in layout.logical_indices() {
                let orig = params.layer_slice(idx)[pos];
                params.layer_mut(idx)[pos] = orig + EPS;
                let up = loss(&net, &params, &image, label);
                params.layer_mut(idx)[pos] = orig - EPS;
                let down = loss(&net, &params, &image, label);
                params.layer_mut(idx)[pos] = orig;
                let numeric = (up - down) / (2.0 * EPS);
                let a = analytic[pos];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
                if rel > REL_TOL {
                    return Err(format!(
                        "seed {seed} layer {idx} weight {pos}: analytic {a:e} numeric {numeric:e}"
                    ));
                }
            }
        }
        Ok((checked, worst))
    }
}
