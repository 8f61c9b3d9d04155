//! Anchor-based decoding of raw prediction maps into detections.
//!
//! Prediction-map channel layout, per anchor slot `a` of a scale with `C`
//! classes: channels `a*(3+C) ..` hold `[p_center, p_width, p_conf,
//! class logits...]`. Decoding follows the anchor equations: the sigmoid of
//! the center offset spans exactly one grid cell, widths scale the anchor
//! prior exponentially.

use serde::{Deserialize, Serialize};

use crate::net::spec::{AnchorSet, NetworkSpec, BOX_FIELDS};
use crate::nn::sigmoid;
use crate::tensor::Tensor;

/// One decoded anomaly.
///
/// `center` and `width` are proportional to the series span. `classes`
/// holds the selected label(s), best first; the default configuration
/// selects exactly one. `anchor` is the global index (0..9) of the prior
/// that produced the box, used for deterministic tie-breaking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub classes: Vec<usize>,
    pub confidence: f32,
    pub center: f32,
    pub width: f32,
    pub anchor: usize,
}

impl Detection {
    /// Interval endpoints, clipped to the unit span.
    pub fn interval(&self) -> (f32, f32) {
        let lo = (self.center - self.width / 2.0).max(0.0);
        let hi = (self.center + self.width / 2.0).min(1.0);
        (lo, hi)
    }
}

/// Raw per-slot prediction values, mainly useful for inspection and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    pub layer: usize,
    pub grid: usize,
    pub anchor: usize,
    pub p_center: f32,
    pub p_width: f32,
    pub p_conf: f32,
    pub class_logits: Vec<f32>,
}

/// Decode one sample's three prediction maps. Detections with confidence
/// below `conf_threshold` are dropped (a score exactly at the threshold is
/// kept). `top_n` labels are attached per surviving slot, ranked by class
/// probability.
pub fn decode_sample(
    maps: &[&Tensor<f32>],
    sample: usize,
    spec: &NetworkSpec,
    anchors: &AnchorSet,
    conf_threshold: f32,
    top_n: usize,
) -> Vec<Detection> {
    let layer_anchors = spec.layer_anchors();
    let n_classes = spec.n_classes;
    let fields = BOX_FIELDS + n_classes;
    let s_input = spec.input_size as f32;
    let top_n = top_n.max(1).min(n_classes);

    let mut out = Vec::new();
    for (layer, map) in maps.iter().enumerate() {
        let n_grids = map.len();
        debug_assert_eq!(map.channels(), fields * spec.anchors_per_layer);
        for a in 0..spec.anchors_per_layer {
            let ch0 = a * fields;
            let anchor_global = layer_anchors[layer][a];
            let anchor_width = anchors.width(anchor_global);
            for g in 0..n_grids {
                let p_conf = map.row(sample, ch0 + 2)[g];
                let confidence = sigmoid(p_conf);
                if confidence < conf_threshold {
                    continue;
                }
                let p_center = map.row(sample, ch0)[g];
                let p_width = map.row(sample, ch0 + 1)[g];
                let center = (sigmoid(p_center) + g as f32) / n_grids as f32;
                let width = p_width.exp() * anchor_width / s_input;

                let mut ranked: Vec<(f32, usize)> = (0..n_classes)
                    .map(|c| (sigmoid(map.row(sample, ch0 + BOX_FIELDS + c)[g]), c))
                    .collect();
                ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                let classes: Vec<usize> = ranked[..top_n].iter().map(|(_, c)| *c).collect();

                // clip the interval to the unit span and restate the box;
                // the floor keeps widths positive when f32 rounding would
                // collapse a sub-grid box
                let lo = (center - width / 2.0).max(0.0);
                let hi = (center + width / 2.0).min(1.0);
                out.push(Detection {
                    classes,
                    confidence,
                    center: (lo + hi) / 2.0,
                    width: (hi - lo).max(1e-9),
                    anchor: anchor_global,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::spec::NetworkSpec;

    fn tiny_spec() -> NetworkSpec {
        // only the decode-relevant fields matter here; reuse the reference
        NetworkSpec::reference(416, 5)
    }

    fn empty_maps(spec: &NetworkSpec) -> Vec<Tensor<f32>> {
        spec.grid_sizes()
            .iter()
            .map(|g| Tensor::zeros(1, spec.prediction_channels(), *g))
            .collect()
    }

    #[test]
    fn zero_logits_decode_to_cell_centers() {
        let spec = tiny_spec();
        let anchors = AnchorSet::table_defaults();
        let maps = empty_maps(&spec);
        let refs: Vec<&Tensor<f32>> = maps.iter().collect();
        // p_conf = 0 -> confidence 0.5, kept at threshold 0.5
        let dets = decode_sample(&refs, 0, &spec, &anchors, 0.5, 1);
        assert_eq!(dets.len(), (13 + 26 + 52) * 3);

        // layer 0 (13 grids), anchor index 6 (width 155): grid 6 decodes to
        // center 6.5/13 = 0.5
        let d = dets
            .iter()
            .find(|d| d.anchor == 6 && (d.center - 0.5).abs() < 1e-6)
            .expect("grid-6 detection");
        assert!((d.width - 155.0 / 416.0).abs() < 1e-6);
    }

    #[test]
    fn width_is_anchor_at_zero_offset() {
        let spec = tiny_spec();
        let anchors = AnchorSet::table_defaults();
        let maps = empty_maps(&spec);
        let refs: Vec<&Tensor<f32>> = maps.iter().collect();
        let dets = decode_sample(&refs, 0, &spec, &anchors, 0.5, 1);
        // anchor 3 = width 43: e^0 * 43 / 416; look mid-span so the unit
        // clipping leaves the box alone
        let d = dets
            .iter()
            .find(|d| d.anchor == 3 && d.center > 0.4 && d.center < 0.6)
            .unwrap();
        assert!((d.width - 43.0 / 416.0).abs() < 1e-6, "got {}", d.width);
    }

    #[test]
    fn threshold_drops_low_confidence() {
        let spec = tiny_spec();
        let anchors = AnchorSet::table_defaults();
        let mut maps = empty_maps(&spec);
        // push all confidences far negative except one slot
        for map in &mut maps {
            let fields = 3 + spec.n_classes;
            for a in 0..3 {
                let row = map.row_mut(0, a * fields + 2);
                row.fill(-10.0);
            }
        }
        maps[0].row_mut(0, 2)[4] = 3.0;
        let refs: Vec<&Tensor<f32>> = maps.iter().collect();
        let dets = decode_sample(&refs, 0, &spec, &anchors, 0.5, 1);
        assert_eq!(dets.len(), 1);
        assert!(dets[0].confidence > 0.95);
        // decoded center stays inside grid cell 4 of 13
        assert!(dets[0].center >= 4.0 / 13.0 && dets[0].center < 5.0 / 13.0);
    }

    #[test]
    fn top_n_labels_ranked() {
        let spec = tiny_spec();
        let anchors = AnchorSet::table_defaults();
        let mut maps = empty_maps(&spec);
        let fields = 3 + spec.n_classes;
        maps[0].row_mut(0, 2)[0] = 5.0; // confident slot
        maps[0].row_mut(0, 3 + 2)[0] = 4.0; // class 2 strongest
        maps[0].row_mut(0, 3 + 0)[0] = 2.0; // class 0 second
        for map in maps.iter_mut().skip(1) {
            for a in 0..3 {
                map.row_mut(0, a * fields + 2).fill(-10.0);
            }
        }
        for a in 1..3 {
            maps[0].row_mut(0, a * fields + 2).fill(-10.0);
        }
        maps[0].row_mut(0, 2)[1..].fill(-10.0);
        let refs: Vec<&Tensor<f32>> = maps.iter().collect();
        let one = decode_sample(&refs, 0, &spec, &anchors, 0.5, 1);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].classes, vec![2]);
        let two = decode_sample(&refs, 0, &spec, &anchors, 0.5, 2);
        assert_eq!(two[0].classes, vec![2, 0]);
    }
}
