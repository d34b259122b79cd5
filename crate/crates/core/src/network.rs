//! Validated layer geometry and weight layout.

use crate::aligned::padded;
use crate::config::{Activation, LayerKind, NetworkConfig};
use crate::error::{Error, Result};
use crate::weights::SharedWeights;

/// Placement of one weighted layer's scalars in a flat array.
///
/// Each unit (a convolutional map or a neuron) owns a block of `fan_in`
/// weights followed by its bias. Blocks start on 64-byte boundaries, so
/// consecutive units are `stride >= fan_in + 1` scalars apart and the tail
/// of each block is padding that is never read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightLayout {
    pub units: usize,
    pub fan_in: usize,
    pub stride: usize,
}

impl WeightLayout {
    fn new(units: usize, fan_in: usize) -> Self {
        WeightLayout {
            units,
            fan_in,
            stride: padded(fan_in + 1),
        }
    }

    /// Number of real weights (biases included).
    pub fn count(&self) -> usize {
        self.units * (self.fan_in + 1)
    }

    /// Allocated scalars, padding included.
    pub fn padded_len(&self) -> usize {
        self.units * self.stride
    }

    #[inline]
    pub fn offset(&self, unit: usize) -> usize {
        unit * self.stride
    }

    #[inline]
    pub fn bias(&self, unit: usize) -> usize {
        unit * self.stride + self.fan_in
    }

    /// Padded positions of the real weights, in unit order.
    pub fn logical_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.units).flat_map(move |u| self.offset(u)..=self.bias(u))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub kind: LayerKind,
    pub activation: Activation,
    pub maps: usize,
    pub height: usize,
    pub width: usize,
    pub in_maps: usize,
    pub in_height: usize,
    pub in_width: usize,
    /// (height, width); `(0, 0)` for layers without a kernel.
    pub kernel: (usize, usize),
    pub weights: Option<WeightLayout>,
}

impl LayerShape {
    pub fn map_len(&self) -> usize {
        self.height * self.width
    }

    pub fn neurons(&self) -> usize {
        self.maps * self.height * self.width
    }

    pub fn in_map_len(&self) -> usize {
        self.in_height * self.in_width
    }

    pub fn in_neurons(&self) -> usize {
        self.in_maps * self.in_height * self.in_width
    }
}

/// Layer metadata for a validated configuration.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    layers: Vec<LayerShape>,
}

/// Validates `config`, allocates the shared weight store and initializes it
/// from `config.seed`.
pub fn build_network(config: &NetworkConfig) -> Result<(SharedWeights, Network)> {
    let net = Network::new(config)?;
    let weights = SharedWeights::initialized(&net);
    Ok((weights, net))
}

impl Network {
    pub fn new(config: &NetworkConfig) -> Result<Self> {
        let specs = &config.layers;
        if specs.is_empty() {
            return Err(Error::Config {
                layer: 0,
                message: "network has no layers".into(),
            });
        }
        let mut layers: Vec<LayerShape> = Vec::with_capacity(specs.len());
        let last = specs.len() - 1;
        for (idx, spec) in specs.iter().enumerate() {
            let fail = |message: String| Error::Config {
                layer: idx,
                message: format!("{} layer: {message}", spec.kind.name()),
            };
            let (h, w) = spec.map_size;
            if spec.maps == 0 || h == 0 || w == 0 {
                return Err(fail("maps and map size must be nonzero".into()));
            }
            match (idx, spec.kind) {
                (0, LayerKind::Input) => {}
                (0, _) => return Err(fail("first layer must be input".into())),
                (_, LayerKind::Input) => return Err(fail("input is only allowed first".into())),
                (i, LayerKind::Output) if i != last => {
                    return Err(fail("output is only allowed last".into()))
                }
                (i, k) if i == last && k != LayerKind::Output => {
                    return Err(fail("last layer must be output".into()))
                }
                _ => {}
            }
            let prev = layers.last();
            let (in_maps, in_h, in_w) = prev.map_or((0, 0, 0), |p| (p.maps, p.height, p.width));
            let mut kernel = (0, 0);
            let mut weights = None;
            match spec.kind {
                LayerKind::Input => {
                    if spec.kernel.is_some() {
                        return Err(fail("input takes no kernel".into()));
                    }
                    if spec.activation != Activation::Identity {
                        return Err(fail("input activation must be identity".into()));
                    }
                }
                LayerKind::Conv => {
                    let (kh, kw) = spec
                        .kernel
                        .ok_or_else(|| fail("convolution needs a kernel".into()))?;
                    if kh == 0 || kw == 0 || kh > in_h || kw > in_w {
                        return Err(fail(format!(
                            "kernel {kh}x{kw} does not fit {in_h}x{in_w} input maps"
                        )));
                    }
                    let expect = (in_h - kh + 1, in_w - kw + 1);
                    if (h, w) != expect {
                        return Err(fail(format!(
                            "map size {h}x{w} does not match {}x{} from {in_h}x{in_w} input and {kh}x{kw} kernel",
                            expect.0, expect.1
                        )));
                    }
                    hidden_activation(spec.activation).map_err(&fail)?;
                    kernel = (kh, kw);
                    weights = Some(WeightLayout::new(spec.maps, in_maps * kh * kw));
                }
                LayerKind::MaxPool => {
                    let (kh, kw) = spec
                        .kernel
                        .ok_or_else(|| fail("max pooling needs a kernel".into()))?;
                    if kh == 0 || kw == 0 || kh > in_h || kw > in_w {
                        return Err(fail(format!(
                            "kernel {kh}x{kw} does not fit {in_h}x{in_w} input maps"
                        )));
                    }
                    if in_h % kh != 0 || in_w % kw != 0 {
                        return Err(fail(format!(
                            "{in_h}x{in_w} input is not divisible by {kh}x{kw} kernel"
                        )));
                    }
                    if (h, w) != (in_h / kh, in_w / kw) {
                        return Err(fail(format!(
                            "map size {h}x{w} does not match {}x{} from {in_h}x{in_w} input and {kh}x{kw} kernel",
                            in_h / kh,
                            in_w / kw
                        )));
                    }
                    if spec.maps != in_maps {
                        return Err(fail(format!(
                            "pooling keeps the map count; expected {in_maps}, found {}",
                            spec.maps
                        )));
                    }
                    if spec.activation != Activation::Identity {
                        return Err(fail("pooling activation must be identity".into()));
                    }
                    kernel = (kh, kw);
                }
                LayerKind::Full | LayerKind::Output => {
                    if spec.kernel.is_some() || (h, w) != (1, 1) {
                        return Err(fail("fully connected layers take a 1x1 map and no kernel".into()));
                    }
                    if spec.kind == LayerKind::Output {
                        if spec.activation != Activation::Softmax {
                            return Err(fail("output activation must be softmax".into()));
                        }
                    } else {
                        hidden_activation(spec.activation).map_err(&fail)?;
                    }
                    weights = Some(WeightLayout::new(spec.maps, in_maps * in_h * in_w));
                }
            }
            layers.push(LayerShape {
                kind: spec.kind,
                activation: spec.activation,
                maps: spec.maps,
                height: h,
                width: w,
                in_maps,
                in_height: in_h,
                in_width: in_w,
                kernel,
                weights,
            });
        }
        Ok(Network {
            config: config.clone(),
            layers,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn layer(&self, idx: usize) -> &LayerShape {
        &self.layers[idx]
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].neurons()
    }

    pub fn input_size(&self) -> (usize, usize) {
        (self.layers[0].height, self.layers[0].width)
    }

    pub fn classes(&self) -> usize {
        self.layers[self.layers.len() - 1].neurons()
    }

    /// Indices and layouts of the layers carrying weights.
    pub fn weighted(&self) -> impl Iterator<Item = (usize, WeightLayout)> + '_ {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.weights.map(|w| (i, w)))
    }

    pub fn weight_count(&self) -> usize {
        self.weighted().map(|(_, w)| w.count()).sum()
    }
}

fn hidden_activation(a: Activation) -> std::result::Result<(), String> {
    match a {
        Activation::Sigmoid | Activation::Identity => Ok(()),
        Activation::Softmax => Err("softmax is only supported at the output".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{param_count, LayerSpec};

    #[test]
    fn builtin_configs_validate_and_match_param_count() {
        for c in [
            NetworkConfig::small(),
            NetworkConfig::medium(),
            NetworkConfig::large(),
        ] {
            let net = Network::new(&c).unwrap();
            let from_layout: Vec<usize> = net.weighted().map(|(_, w)| w.count()).collect();
            let from_table: Vec<usize> = param_count(&c).iter().map(|e| e.weights).collect();
            assert_eq!(from_layout, from_table);
            assert_eq!(net.classes(), 10);
            assert_eq!(net.input_len(), 841);
        }
    }

    #[test]
    fn oversized_kernel_names_the_layer() {
        let c = NetworkConfig::new(vec![
            LayerSpec::input(4, 4),
            LayerSpec::conv(2, 1, 5),
            LayerSpec::output(10),
        ]);
        match Network::new(&c) {
            Err(Error::Config { layer: 1, message }) => assert!(message.contains("kernel")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn map_size_mismatch_is_rejected() {
        let mut c = NetworkConfig::small();
        c.layers[3].map_size = (10, 10);
        assert!(matches!(Network::new(&c), Err(Error::Config { layer: 3, .. })));
    }

    #[test]
    fn pooling_must_divide_input() {
        let c = NetworkConfig::new(vec![
            LayerSpec::input(7, 7),
            LayerSpec::max_pool(1, 3, 2),
            LayerSpec::output(10),
        ]);
        assert!(matches!(Network::new(&c), Err(Error::Config { layer: 1, .. })));
    }

    #[test]
    fn endpoints_are_enforced() {
        let no_output = NetworkConfig::new(vec![LayerSpec::input(4, 4), LayerSpec::full(3)]);
        assert!(Network::new(&no_output).is_err());
        let no_input = NetworkConfig::new(vec![LayerSpec::full(3), LayerSpec::output(2)]);
        assert!(matches!(Network::new(&no_input), Err(Error::Config { layer: 0, .. })));
        let hidden_softmax = NetworkConfig::new(vec![
            LayerSpec::input(4, 4),
            LayerSpec::full(3).with_activation(Activation::Softmax),
            LayerSpec::output(2),
        ]);
        assert!(Network::new(&hidden_softmax).is_err());
    }

    #[test]
    fn unit_blocks_are_line_aligned() {
        let net = Network::new(&NetworkConfig::large()).unwrap();
        for (_, w) in net.weighted() {
            assert_eq!(w.stride % 16, 0);
            assert!(w.stride > w.fan_in);
            assert_eq!(w.logical_indices().count(), w.count());
        }
    }
}
