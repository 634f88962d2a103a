//! Network architecture descriptions and their shape checking.

use serde::{Deserialize, Serialize};

use crate::error::{CtaError, Result};

fn default_epsilon() -> f64 {
    1e-5
}

fn default_stat_momentum() -> f64 {
    0.9
}

/// One layer in execution order. Conv layers are stride 1 with zero padding
/// that preserves the spatial size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    BatchNorm {
        channels: usize,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_stat_momentum")]
        stat_momentum: f64,
    },
    Relu,
    AvgPool {
        window: usize,
    },
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::Relu => "relu",
            LayerSpec::AvgPool { .. } => "avgpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }
}

/// Activation shape flowing between layers (batch axis elided).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActShape {
    Spatial { channels: usize, height: usize, width: usize },
    Flat { features: usize },
}

impl ActShape {
    pub fn dims_with_batch(&self, n: usize) -> Vec<usize> {
        match *self {
            ActShape::Spatial { channels, height, width } => vec![n, channels, height, width],
            ActShape::Flat { features } => vec![n, features],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Input image shape as C×H×W.
    pub input_shape: [usize; 3],
    /// Number of output classes; the last layer must produce this many logits.
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// The default small architecture: two conv/norm/pool stages and a
    /// classifier head. Reaches source validation accuracy well above 0.95
    /// on the default synthetic benchmark within 20 epochs.
    pub fn desk(input_shape: [usize; 3], classes: usize) -> Self {
        let [c, _, _] = input_shape;
        ModelSpec {
            input_shape,
            classes,
            layers: vec![
                LayerSpec::Conv2d { in_channels: c, out_channels: 16, kernel: 3 },
                LayerSpec::BatchNorm {
                    channels: 16,
                    epsilon: default_epsilon(),
                    stat_momentum: default_stat_momentum(),
                },
                LayerSpec::Relu,
                LayerSpec::AvgPool { window: 2 },
                LayerSpec::Conv2d { in_channels: 16, out_channels: 32, kernel: 3 },
                LayerSpec::BatchNorm {
                    channels: 32,
                    epsilon: default_epsilon(),
                    stat_momentum: default_stat_momentum(),
                },
                LayerSpec::Relu,
                LayerSpec::AvgPool { window: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 32 * (input_shape[1] / 4) * (input_shape[2] / 4), outputs: classes },
            ],
        }
    }

    /// Walks the layer list checking that shapes compose, returning the
    /// activation shape after every layer. Errors name the offending layer.
    pub fn trace_shapes(&self) -> Result<Vec<ActShape>> {
        let [c, h, w] = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(CtaError::invalid("input_shape", format!("all dims must be positive, got {:?}", self.input_shape)));
        }
        if self.classes < 2 {
            return Err(CtaError::invalid("classes", format!("need at least 2 classes, got {}", self.classes)));
        }
        let compose_err = |index: usize, kind: &str, message: String| CtaError::LayerCompose {
            index,
            kind: kind.to_string(),
            message,
        };
        let mut shape = ActShape::Spatial { channels: c, height: h, width: w };
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut has_bn = false;
        for (index, layer) in self.layers.iter().enumerate() {
            let kind = layer.kind_name();
            shape = match (layer, shape) {
                (LayerSpec::Conv2d { in_channels, out_channels, kernel }, ActShape::Spatial { channels, height, width }) => {
                    if *in_channels != channels {
                        return Err(compose_err(index, kind, format!("expects {in_channels} input channels, gets {channels}")));
                    }
                    if *kernel % 2 == 0 || *kernel == 0 {
                        return Err(compose_err(index, kind, format!("kernel must be odd, got {kernel}")));
                    }
                    if *out_channels == 0 {
                        return Err(compose_err(index, kind, "out_channels must be positive".into()));
                    }
                    ActShape::Spatial { channels: *out_channels, height, width }
                }
                (LayerSpec::Conv2d { .. }, ActShape::Flat { features }) => {
                    return Err(compose_err(index, kind, format!("needs a spatial input, gets {features} flat features")));
                }
                (LayerSpec::BatchNorm { channels: bc, epsilon, stat_momentum }, s) => {
                    let have = match s {
                        ActShape::Spatial { channels, .. } => channels,
                        ActShape::Flat { features } => features,
                    };
                    if *bc != have {
                        return Err(compose_err(index, kind, format!("normalizes {bc} channels, gets {have}")));
                    }
                    if *epsilon <= 0.0 || !epsilon.is_finite() {
                        return Err(compose_err(index, kind, format!("epsilon must be positive, got {epsilon}")));
                    }
                    if !(0.0..=1.0).contains(stat_momentum) {
                        return Err(compose_err(index, kind, format!("stat_momentum must lie in [0,1], got {stat_momentum}")));
                    }
                    has_bn = true;
                    s
                }
                (LayerSpec::Relu, s) => s,
                (LayerSpec::AvgPool { window }, ActShape::Spatial { channels, height, width }) => {
                    if *window == 0 || height % window != 0 || width % window != 0 {
                        return Err(compose_err(index, kind, format!("window {window} must divide {height}×{width}")));
                    }
                    ActShape::Spatial { channels, height: height / window, width: width / window }
                }
                (LayerSpec::AvgPool { .. }, ActShape::Flat { .. }) => {
                    return Err(compose_err(index, kind, "needs a spatial input".into()));
                }
                (LayerSpec::Flatten, ActShape::Spatial { channels, height, width }) => {
                    ActShape::Flat { features: channels * height * width }
                }
                (LayerSpec::Flatten, ActShape::Flat { .. }) => {
                    return Err(compose_err(index, kind, "input is already flat".into()));
                }
                (LayerSpec::Dense { inputs, outputs }, ActShape::Flat { features }) => {
                    if *inputs != features {
                        return Err(compose_err(index, kind, format!("expects {inputs} inputs, gets {features}")));
                    }
                    if *outputs == 0 {
                        return Err(compose_err(index, kind, "outputs must be positive".into()));
                    }
                    ActShape::Flat { features: *outputs }
                }
                (LayerSpec::Dense { .. }, ActShape::Spatial { .. }) => {
                    return Err(compose_err(index, kind, "needs a flat input (insert flatten)".into()));
                }
            };
            shapes.push(shape);
        }
        match shapes.last() {
            Some(ActShape::Flat { features }) if *features == self.classes => {}
            Some(other) => {
                return Err(CtaError::invalid(
                    "model output",
                    format!("final layer must emit {} flat logits, emits {:?}", self.classes, other),
                ));
            }
            None => return Err(CtaError::EmptyInput("model layers".into())),
        }
        if !has_bn {
            return Err(CtaError::NoBatchNormLayer);
        }
        Ok(shapes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_spec_composes() {
        let spec = ModelSpec::desk([1, 32, 32], 10);
        let shapes = spec.trace_shapes().unwrap();
        assert_eq!(shapes.last(), Some(&ActShape::Flat { features: 10 }));
        assert_eq!(shapes[3], ActShape::Spatial { channels: 16, height: 16, width: 16 });
        assert_eq!(shapes[7], ActShape::Spatial { channels: 32, height: 8, width: 8 });
    }

    #[test]
    fn mismatched_dense_chain_names_the_layer() {
        let spec = ModelSpec {
            input_shape: [1, 1, 10],
            classes: 2,
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 10, outputs: 5 },
                LayerSpec::BatchNorm { channels: 5, epsilon: 1e-5, stat_momentum: 0.9 },
                LayerSpec::Dense { inputs: 6, outputs: 2 },
            ],
        };
        match spec.trace_shapes() {
            Err(CtaError::LayerCompose { index, kind, .. }) => {
                assert_eq!(index, 3);
                assert_eq!(kind, "dense");
            }
            other => panic!("expected composition error, got {other:?}"),
        }
    }

    #[test]
    fn missing_batchnorm_is_rejected() {
        let spec = ModelSpec {
            input_shape: [1, 4, 4],
            classes: 2,
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { inputs: 16, outputs: 2 }],
        };
        assert!(matches!(spec.trace_shapes(), Err(CtaError::NoBatchNormLayer)));
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ModelSpec::desk([1, 32, 32], 10);
        let json = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn bn_defaults_fill_in_when_omitted() {
        let json = r#"{"kind": "batch_norm", "channels": 8}"#;
        let layer: LayerSpec = serde_json::from_str(json).unwrap();
        match layer {
            LayerSpec::BatchNorm { channels, epsilon, stat_momentum } => {
                assert_eq!(channels, 8);
                assert_eq!(epsilon, 1e-5);
                assert_eq!(stat_momentum, 0.9);
            }
            other => panic!("{other:?}"),
        }
    }
}
