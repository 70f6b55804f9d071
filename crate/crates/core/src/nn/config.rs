use serde::{Deserialize, Serialize};

use super::NnError;
use crate::dataset::EmotionLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn new(out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self { out_channels, kernel, stride }
    }
}

/// Network hyperparameters.
///
/// Convolutions use zero "same" padding (`kernel / 2`) and are followed by
/// ReLU. `pool_after` holds 1-based conv indices after which a 2x2 stride-2
/// max-pool is inserted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_size: usize,
    pub conv_specs: Vec<ConvSpec>,
    pub pool_after: Vec<usize>,
    pub fc1_units: usize,
    pub dropout_rate: f64,
    pub num_classes: usize,
}

/// Resolved geometry of one layer in forward order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerShape {
    Conv { in_c: usize, out_c: usize, kernel: usize, stride: usize, in_hw: usize, out_hw: usize },
    Pool { channels: usize, in_hw: usize, out_hw: usize },
    Fc { inputs: usize, outputs: usize, relu: bool, dropout: bool },
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl NetConfig {
    /// 48x48 desk-scale network: channels 8/8/16/16/32, 3x3 kernels,
    /// pools after convs 1, 2 and 4, 64 hidden units.
    pub fn desk() -> Self {
        let chans = [8, 8, 16, 16, 32];
        Self {
            input_size: 48,
            conv_specs: chans.iter().map(|&c| ConvSpec::new(c, 3, 1)).collect(),
            pool_after: vec![1, 2, 4],
            fc1_units: 64,
            dropout_rate: 0.5,
            num_classes: EmotionLabel::COUNT,
        }
    }

    /// Same layout at the full 150x150 input resolution.
    pub fn full() -> Self {
        Self { input_size: 150, ..Self::desk() }
    }

    /// 8x8 input with 2-channel convolutions, used by gradient checks.
    pub fn tiny() -> Self {
        Self {
            input_size: 8,
            conv_specs: vec![ConvSpec::new(2, 3, 1); 5],
            pool_after: vec![1, 2, 4],
            fc1_units: 4,
            dropout_rate: 0.5,
            num_classes: EmotionLabel::COUNT,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        self.layers().map(|_| ())
    }

    /// Resolves the layer stack, checking every structural constraint.
    pub fn layers(&self) -> Result<Vec<LayerShape>, NnError> {
        let bad = |m: String| Err(NnError::InvalidConfig(m));
        if self.input_size == 0 {
            return bad("input_size must be positive".into());
        }
        if self.conv_specs.len() != 5 {
            return bad(format!("exactly 5 conv layers required, got {}", self.conv_specs.len()));
        }
        let mut pools = self.pool_after.clone();
        pools.sort_unstable();
        pools.dedup();
        if pools.len() != 3 || self.pool_after.len() != 3 || pools.iter().any(|&p| p == 0 || p > 5) {
            return bad(format!("exactly 3 distinct pool positions in 1..=5 required, got {:?}", self.pool_after));
        }
        if self.fc1_units == 0 {
            return bad("fc1_units must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if self.num_classes != EmotionLabel::COUNT {
            return bad(format!("num_classes is fixed at 6, got {}", self.num_classes));
        }
        let mut layers = Vec::with_capacity(10);
        let mut hw = self.input_size;
        let mut channels = 1;
        for (i, spec) in self.conv_specs.iter().enumerate() {
            if spec.out_channels == 0 || spec.stride == 0 || spec.kernel == 0 || spec.kernel % 2 == 0 {
                return bad(format!("conv {}: channels and stride must be positive, kernel odd", i + 1));
            }
            let out_hw = (hw - 1) / spec.stride + 1;
            layers.push(LayerShape::Conv {
                in_c: channels,
                out_c: spec.out_channels,
                kernel: spec.kernel,
                stride: spec.stride,
                in_hw: hw,
                out_hw,
            });
            hw = out_hw;
            channels = spec.out_channels;
            if pools.contains(&(i + 1)) {
                if hw < 2 {
                    return bad(format!("spatial size collapses below 1 at pool after conv {}", i + 1));
                }
                layers.push(LayerShape::Pool { channels, in_hw: hw, out_hw: hw / 2 });
                hw /= 2;
            }
        }
        layers.push(LayerShape::Fc {
            inputs: channels * hw * hw,
            outputs: self.fc1_units,
            relu: true,
            dropout: self.dropout_rate > 0.0,
        });
        layers.push(LayerShape::Fc { inputs: self.fc1_units, outputs: self.num_classes, relu: false, dropout: false });
        Ok(layers)
    }

    /// Weight and bias shapes in declaration order.
    pub fn parameter_shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let mut shapes = Vec::new();
        for layer in self.layers()? {
            match layer {
                LayerShape::Conv { in_c, out_c, kernel, .. } => {
                    shapes.push(vec![out_c, in_c, kernel, kernel]);
                    shapes.push(vec![out_c]);
                }
                LayerShape::Fc { inputs, outputs, .. } => {
                    shapes.push(vec![outputs, inputs]);
                    shapes.push(vec![outputs]);
                }
                LayerShape::Pool { .. } => {}
            }
        }
        Ok(shapes)
    }

    pub fn parameter_count(&self) -> Result<usize, NnError> {
        Ok(self.parameter_shapes()?.iter().map(|s| s.iter().product::<usize>()).sum())
    }

    /// Stable 64-bit FNV-1a digest of every structural field.
    pub fn fingerprint(&self) -> u64 {
        let mut desc = format!("in={};", self.input_size);
        for c in &self.conv_specs {
            desc.push_str(&format!("conv={}x{}s{};", c.out_channels, c.kernel, c.stride));
        }
        desc.push_str(&format!(
            "pool={:?};fc1={};drop={:016x};classes={}",
            self.pool_after,
            self.fc1_units,
            self.dropout_rate.to_bits(),
            self.num_classes
        ));
        desc.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
    }
}
