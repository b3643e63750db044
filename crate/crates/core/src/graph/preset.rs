//! Architecture presets with seeded random weights.

use std::fmt;
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{InputDesc, Layer, LayerSpec, LayerWeights, Mode, ModelGraph};
use crate::dataset::CategoryRegistry;
use crate::error::{Error, Result};
use crate::kernels::{
    se_reduced_width, Activation, BneckSpec, BneckWeights, ConvSpec, ConvWeights, SeWeights,
};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PresetId {
    /// MobileNetV3-style network on 128x128 inputs (the challenge winner).
    ByteScene,
    /// Truncated MobileNetV2 (alpha 0.75) with a 4x input downscale.
    Evai,
    /// Backbone-free model with eight convolutions and about 66K parameters.
    Tiny,
}

impl PresetId {
    pub const ALL: [PresetId; 3] = [PresetId::ByteScene, PresetId::Evai, PresetId::Tiny];

    pub fn name(self) -> &'static str {
        match self {
            PresetId::ByteScene => "bytescene",
            PresetId::Evai => "evai",
            PresetId::Tiny => "tiny",
        }
    }
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PresetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bytescene" => Ok(PresetId::ByteScene),
            "evai" => Ok(PresetId::Evai),
            "tiny" => Ok(PresetId::Tiny),
            other => Err(Error::InvalidArgument(format!("unknown preset {other:?}"))),
        }
    }
}

fn conv(kernel: usize, stride: usize, out: usize) -> LayerSpec {
    LayerSpec::Conv {
        conv: ConvSpec::new(kernel, stride, out),
        activation: Activation::Relu6,
    }
}

fn bneck(expansion: usize, use_se: bool, stride: usize, out_channels: usize) -> LayerSpec {
    LayerSpec::Bneck(BneckSpec {
        expansion,
        kernel: 3,
        stride,
        use_se,
        out_channels,
    })
}

/// (expansion, SE, stride, output channels) for each bneck row.
const BYTESCENE_BNECKS: [(usize, bool, usize, usize); 19] = [
    (16, false, 1, 16),
    (48, true, 2, 24),
    (72, true, 2, 32),
    (64, true, 1, 32),
    (96, true, 1, 32),
    (96, false, 2, 64),
    (128, false, 1, 64),
    (256, false, 1, 64),
    (320, true, 1, 96),
    (192, true, 1, 96),
    (288, true, 1, 96),
    (576, true, 2, 192),
    (768, true, 1, 192),
    (960, true, 1, 192),
    (768, true, 1, 192),
    (960, true, 1, 192),
    (960, true, 1, 192),
    (768, true, 1, 192),
    (1152, true, 1, 192),
];

fn bytescene() -> (InputDesc, Vec<LayerSpec>) {
    let mut layers = vec![conv(3, 2, 16)];
    layers.extend(
        BYTESCENE_BNECKS
            .iter()
            .map(|&(e, se, s, o)| bneck(e, se, s, o)),
    );
    layers.extend([
        conv(1, 1, 1024),
        LayerSpec::GlobalAvgPool,
        LayerSpec::Fc {
            out_features: 1280,
            activation: Activation::Relu6,
        },
        LayerSpec::Fc {
            out_features: 30,
            activation: Activation::None,
        },
        LayerSpec::Softmax,
    ]);
    let input = InputDesc {
        height: 128,
        width: 128,
        channels: 3,
    };
    (input, layers)
}

/// MobileNetV2 inverted residual settings (expansion factor, output
/// channels at alpha 0.75, stride) for blocks 0 through 14.
const EVAI_BLOCKS: [(usize, usize, usize); 15] = [
    (1, 16, 1),
    (6, 24, 2),
    (6, 24, 1),
    (6, 24, 2),
    (6, 24, 1),
    (6, 24, 1),
    (6, 48, 2),
    (6, 48, 1),
    (6, 48, 1),
    (6, 48, 1),
    (6, 72, 1),
    (6, 72, 1),
    (6, 72, 1),
    (6, 120, 2),
    (6, 120, 1),
];

fn evai() -> (InputDesc, Vec<LayerSpec>) {
    let mut layers = vec![
        LayerSpec::Resize {
            height: 96,
            width: 144,
        },
        conv(3, 2, 24),
    ];
    let mut channels = 24;
    for &(t, c, s) in &EVAI_BLOCKS {
        layers.push(bneck(channels * t, false, s, c));
        channels = c;
    }
    layers.extend([
        LayerSpec::Conv {
            conv: ConvSpec::depthwise(3, 1, channels),
            activation: Activation::None,
        },
        conv(1, 1, 30),
        LayerSpec::GlobalAvgPool,
        LayerSpec::Softmax,
    ]);
    let input = InputDesc {
        height: 384,
        width: 576,
        channels: 3,
    };
    (input, layers)
}

fn tiny() -> (InputDesc, Vec<LayerSpec>) {
    let layers = vec![
        conv(3, 4, 6),
        conv(3, 2, 12),
        conv(3, 1, 12),
        conv(3, 1, 12),
        LayerSpec::MaxPool { size: 2 },
        conv(3, 1, 24),
        conv(3, 1, 24),
        LayerSpec::MaxPool { size: 2 },
        conv(3, 1, 48),
        LayerSpec::MaxPool { size: 2 },
        conv(3, 1, 96),
        LayerSpec::GlobalAvgPool,
        LayerSpec::Fc {
            out_features: 30,
            activation: Activation::None,
        },
        LayerSpec::Softmax,
    ];
    let input = InputDesc {
        height: 384,
        width: 576,
        channels: 3,
    };
    (input, layers)
}

pub fn preset_layers(id: PresetId) -> (InputDesc, Vec<LayerSpec>) {
    match id {
        PresetId::ByteScene => bytescene(),
        PresetId::Evai => evai(),
        PresetId::Tiny => tiny(),
    }
}

/// Fan-in scaled uniform initializer, `U(-sqrt(6 / fan_in), +sqrt(6 / fan_in))`.
struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn tensor(&mut self, shape: Shape, fan_in: usize) -> Tensor {
        let limit = (6.0 / fan_in.max(1) as f64).sqrt() as f32;
        let data = (0..shape.len())
            .map(|_| self.rng.random_range(-limit..limit))
            .collect();
        Tensor::from_f32(shape, data).expect("shape and data agree")
    }

    fn conv(&mut self, spec: &ConvSpec, in_c: usize) -> ConvWeights {
        let fan_in = spec.kernel_h * spec.kernel_w * if spec.depthwise { 1 } else { in_c };
        ConvWeights {
            weights: self.tensor(spec.weight_shape(in_c), fan_in),
            bias: Tensor::zeros_f32(Shape::new(1, 1, 1, spec.out_channels)),
        }
    }

    fn fc(&mut self, k: usize, out: usize) -> ConvWeights {
        ConvWeights {
            weights: self.tensor(Shape::new(1, 1, k, out), k),
            bias: Tensor::zeros_f32(Shape::new(1, 1, 1, out)),
        }
    }

    fn bneck(&mut self, spec: &BneckSpec, in_c: usize) -> BneckWeights {
        let e = spec.expansion;
        let expand = self.conv(&spec.expand_spec(), in_c);
        let depthwise = self.conv(&spec.depthwise_spec(), e);
        let se = spec.use_se.then(|| {
            let r = se_reduced_width(e);
            SeWeights {
                reduce: self.fc(e, r),
                expand: self.fc(r, e),
            }
        });
        let project = self.conv(&spec.project_spec(), e);
        BneckWeights {
            expand,
            depthwise,
            se,
            project,
        }
    }
}

/// Real-mode graph over `specs` with deterministic seeded weights.
pub fn build_from_specs(
    input: InputDesc,
    specs: &[LayerSpec],
    labels: Vec<String>,
    seed: u64,
) -> Result<ModelGraph> {
    let mut init = Init {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut cur = input.shape();
    let mut layers = Vec::with_capacity(specs.len());
    for spec in specs {
        let weights = match spec {
            LayerSpec::Conv { conv, .. } => LayerWeights::Conv(init.conv(conv, cur.c)),
            LayerSpec::Fc { out_features, .. } => {
                LayerWeights::Conv(init.fc(cur.h * cur.w * cur.c, *out_features))
            }
            LayerSpec::Bneck(b) => LayerWeights::Bneck(init.bneck(b, cur.c)),
            _ => LayerWeights::None,
        };
        layers.push(Layer::new(*spec, weights));
        cur = spec.output_shape(cur)?;
    }
    ModelGraph::new(input, layers, Mode::Real, labels, None)
}

pub fn build_preset(id: PresetId, seed: u64) -> Result<ModelGraph> {
    let (input, specs) = preset_layers(id);
    build_from_specs(
        input,
        &specs,
        CategoryRegistry::camsdd().names().to_vec(),
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_names_round_trip() {
        for id in PresetId::ALL {
            assert_eq!(id.name().parse::<PresetId>().unwrap(), id);
        }
        assert!("mobilenet".parse::<PresetId>().is_err());
    }

    #[test]
    fn tiny_parameter_budget() {
        let g = build_preset(PresetId::Tiny, 0).unwrap();
        assert_eq!(g.param_count(), 66_162);
        let convs = g
            .layers()
            .iter()
            .filter(|l| matches!(l.spec, LayerSpec::Conv { .. }))
            .count();
        let pools = g
            .layers()
            .iter()
            .filter(|l| matches!(l.spec, LayerSpec::MaxPool { .. } | LayerSpec::GlobalAvgPool))
            .count();
        let fcs = g
            .layers()
            .iter()
            .filter(|l| matches!(l.spec, LayerSpec::Fc { .. }))
            .count();
        assert_eq!((convs, pools, fcs), (8, 4, 1));
    }

    #[test]
    fn evai_shape_flow() {
        let g = build_preset(PresetId::Evai, 0).unwrap();
        let shapes = g.layer_input_shapes().unwrap();
        assert_eq!(shapes[1], Shape::hwc(96, 144, 3));
        assert_eq!(shapes[2], Shape::hwc(48, 72, 24));
        assert_eq!(g.output_shape().unwrap(), Shape::hwc(1, 1, 30));
    }

    #[test]
    fn seeds_change_weights() {
        let a = build_preset(PresetId::Tiny, 1).unwrap();
        let b = build_preset(PresetId::Tiny, 2).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, build_preset(PresetId::Tiny, 1).unwrap());
    }
}
