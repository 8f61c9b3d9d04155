//! Network description: the serializable layer table, the anchor set, and
//! the reference detector architecture.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of prediction layers (scales) in the detector.
pub const N_PREDICTION_LAYERS: usize = 3;
/// Anchors per prediction layer.
pub const ANCHORS_PER_LAYER: usize = 3;
/// Raw values predicted per anchor besides the class logits:
/// center, width, confidence.
pub const BOX_FIELDS: usize = 3;

pub const DEFAULT_INPUT_SIZE: usize = 416;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Leaky,
}

/// One entry of the layer table. `from` offsets are relative indices into
/// this table (darknet-style, negative).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel: usize,
        stride: usize,
        batch_norm: bool,
        activation: Activation,
    },
    Shortcut {
        from: i32,
    },
    Route {
        from: Vec<i32>,
    },
    Upsample {
        factor: usize,
    },
    /// Marks the previous layer's output as a prediction map. Holds the
    /// global indices (0..9) of the three anchors this scale refines.
    Predict {
        anchors: [usize; ANCHORS_PER_LAYER],
    },
}

/// The nine prior widths, in input-size units, ascending. The largest three
/// belong to the coarsest (13-grid) prediction layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    widths: [f32; 9],
}

impl AnchorSet {
    pub fn new(widths: [f32; 9], input_size: usize) -> Result<Self> {
        for pair in widths.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::Config(format!(
                    "anchor widths must be strictly ascending, got {:?}",
                    widths
                )));
            }
        }
        if widths[0] <= 0.0 || widths[8] > input_size as f32 {
            return Err(Error::Config(format!(
                "anchor widths must lie in (0, {input_size}], got {:?}",
                widths
            )));
        }
        Ok(AnchorSet { widths })
    }

    /// The published anchor table for the 416-input RxMER detector.
    pub fn table_defaults() -> Self {
        AnchorSet {
            widths: [2.0, 8.0, 23.0, 43.0, 73.0, 109.0, 155.0, 234.0, 416.0],
        }
    }

    #[inline]
    pub fn widths(&self) -> &[f32; 9] {
        &self.widths
    }

    #[inline]
    pub fn width(&self, global_index: usize) -> f32 {
        self.widths[global_index]
    }
}

/// Everything needed to rebuild the network graph (weights aside).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_size: usize,
    pub n_classes: usize,
    pub anchors_per_layer: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Channels of each prediction map: `(3 + n_classes) * anchors`.
    pub fn prediction_channels(&self) -> usize {
        (BOX_FIELDS + self.n_classes) * self.anchors_per_layer
    }

    /// Count of stride-2 convolutions between the input and the first
    /// prediction layer.
    pub fn n_downsample(&self) -> usize {
        let mut n = 0;
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv { stride: 2, .. } => n += 1,
                LayerSpec::Predict { .. } => break,
                _ => {}
            }
        }
        n
    }

    /// Grid counts of the three prediction layers in table order.
    pub fn grid_sizes(&self) -> [usize; N_PREDICTION_LAYERS] {
        let g0 = self.input_size >> self.n_downsample();
        [g0, g0 * 2, g0 * 4]
    }

    /// Global anchor indices per prediction layer, in table order.
    pub fn layer_anchors(&self) -> Vec<[usize; ANCHORS_PER_LAYER]> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Predict { anchors } => Some(*anchors),
                _ => None,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(Error::Config("n_classes must be positive".into()));
        }
        if self.anchors_per_layer != ANCHORS_PER_LAYER {
            return Err(Error::Config(format!(
                "expected {ANCHORS_PER_LAYER} anchors per prediction layer"
            )));
        }
        let n_down = self.n_downsample();
        if n_down == 0 || self.input_size % (1 << n_down) != 0 {
            return Err(Error::Config(format!(
                "input size {} not divisible by 2^{n_down}",
                self.input_size
            )));
        }
        let predicts = self.layer_anchors();
        if predicts.len() != N_PREDICTION_LAYERS {
            return Err(Error::Config(format!(
                "expected {N_PREDICTION_LAYERS} prediction layers, found {}",
                predicts.len()
            )));
        }
        let mut seen = [false; 9];
        for anchors in &predicts {
            for &a in anchors {
                if a >= 9 || seen[a] {
                    return Err(Error::Config("prediction layers must partition anchors 0..9".into()));
                }
                seen[a] = true;
            }
        }
        Ok(())
    }

    /// The reference architecture: a 1-D feature-extraction ladder with five
    /// stride-2 stages (filters 4, 8, 16, 32, 64; residual blocks repeated
    /// 1, 2, 8, 4, 4), taps at 52/26/13 grids, squeeze-expand heads and
    /// coarse-to-fine aggregation via 1x1 conv + upsample + concatenation.
    pub fn reference(input_size: usize, n_classes: usize) -> Self {
        use Activation::*;
        let mut layers = Vec::new();
        let conv = |layers: &mut Vec<LayerSpec>, filters, kernel, stride| {
            layers.push(LayerSpec::Conv {
                filters,
                kernel,
                stride,
                batch_norm: true,
                activation: Leaky,
            });
        };
        let residual = |layers: &mut Vec<LayerSpec>, filters: usize, repeats: usize| {
            for _ in 0..repeats {
                conv(layers, (filters / 2).max(4), 1, 1);
                conv(layers, filters, 3, 1);
                layers.push(LayerSpec::Shortcut { from: -3 });
            }
        };

        conv(&mut layers, 4, 3, 1); // stem
        let stages: [(usize, usize); 5] = [(4, 1), (8, 2), (16, 8), (32, 4), (64, 4)];
        let mut taps = [0usize; 3]; // layer-table indices of the 52/26/13-grid taps
        for (i, (filters, repeats)) in stages.into_iter().enumerate() {
            conv(&mut layers, filters, 3, 2);
            residual(&mut layers, filters, repeats);
            if i >= 2 {
                taps[i - 2] = layers.len() - 1;
            }
        }

        let predict_filters = (BOX_FIELDS + n_classes) * ANCHORS_PER_LAYER;
        let head = |layers: &mut Vec<LayerSpec>, squeeze: usize, expand: usize, anchors: [usize; 3]| {
            conv(layers, squeeze, 1, 1);
            conv(layers, expand, 3, 1);
            layers.push(LayerSpec::Conv {
                filters: predict_filters,
                kernel: 1,
                stride: 1,
                batch_norm: false,
                activation: Linear,
            });
            layers.push(LayerSpec::Predict { anchors });
        };

        // scale 1: 13 grids, largest anchors
        head(&mut layers, 32, 64, [6, 7, 8]);
        // aggregate into scale 2
        layers.push(LayerSpec::Route { from: vec![-4] }); // scale-1 squeeze output
        conv(&mut layers, 16, 1, 1);
        layers.push(LayerSpec::Upsample { factor: 2 });
        let rel26 = taps[1] as i32 - layers.len() as i32;
        layers.push(LayerSpec::Route { from: vec![-1, rel26] });
        head(&mut layers, 16, 32, [3, 4, 5]);
        // aggregate into scale 3
        layers.push(LayerSpec::Route { from: vec![-4] });
        conv(&mut layers, 8, 1, 1);
        layers.push(LayerSpec::Upsample { factor: 2 });
        let rel52 = taps[0] as i32 - layers.len() as i32;
        layers.push(LayerSpec::Route { from: vec![-1, rel52] });
        head(&mut layers, 8, 16, [0, 1, 2]);

        NetworkSpec {
            input_size,
            n_classes,
            anchors_per_layer: ANCHORS_PER_LAYER,
            layers,
        }
    }
}
