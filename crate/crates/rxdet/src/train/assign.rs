//! Responsible-slot assignment: exactly one (layer, grid, anchor) triple
//! owns each ground-truth anomaly.
//!
//! The responsible anchor maximizes the width ratio
//! `min(w * S_input, A_i) / max(w * S_input, A_i)` over all nine anchors
//! (ties to the smaller anchor index); the layer owning that anchor and the
//! grid containing the anomaly center complete the triple. All other slots
//! default to background; slots whose decoded predictions overlap any truth
//! above the ignore threshold are masked out of the confidence loss
//! dynamically, each forward pass.

use crate::data::Annotation;
use crate::net::spec::{AnchorSet, NetworkSpec};

/// Per-slot training target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slot {
    Background,
    Responsible { x: f32, w: f32, class: usize },
}

/// Targets for one prediction layer: `n_grids * anchors_per_layer` slots,
/// indexed `grid * anchors_per_layer + anchor`.
#[derive(Debug, Clone)]
pub struct LayerTargets {
    pub n_grids: usize,
    pub anchors_per_layer: usize,
    pub slots: Vec<Slot>,
    /// Slots excluded from the confidence loss; never set on responsible
    /// slots. Filled by the loss pass from decoded predictions.
    pub ignore: Vec<bool>,
}

impl LayerTargets {
    fn new(n_grids: usize, anchors_per_layer: usize) -> Self {
        LayerTargets {
            n_grids,
            anchors_per_layer,
            slots: vec![Slot::Background; n_grids * anchors_per_layer],
            ignore: vec![false; n_grids * anchors_per_layer],
        }
    }

    #[inline]
    pub fn index(&self, grid: usize, anchor: usize) -> usize {
        grid * self.anchors_per_layer + anchor
    }
}

/// All targets for one sample.
#[derive(Debug, Clone)]
pub struct TargetAssignment {
    pub layers: Vec<LayerTargets>,
}

impl TargetAssignment {
    pub fn responsible_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.slots.iter())
            .filter(|s| matches!(s, Slot::Responsible { .. }))
            .count()
    }
}

/// Index of the anchor with the best center-agnostic overlap with width `w`
/// (proportional). Ties break to the smaller index.
pub fn responsible_anchor(w: f32, anchors: &AnchorSet, input_size: usize) -> usize {
    let wu = w * input_size as f32;
    let mut best = 0;
    let mut best_ratio = -1.0f32;
    for (i, a) in anchors.widths().iter().enumerate() {
        let ratio = wu.min(*a) / wu.max(*a);
        if ratio > best_ratio {
            best_ratio = ratio;
            best = i;
        }
    }
    best
}

pub fn assign_targets(
    annotations: &[Annotation],
    anchors: &AnchorSet,
    spec: &NetworkSpec,
) -> TargetAssignment {
    let grids = spec.grid_sizes();
    let layer_anchors = spec.layer_anchors();
    let mut layers: Vec<LayerTargets> = grids
        .iter()
        .map(|g| LayerTargets::new(*g, spec.anchors_per_layer))
        .collect();

    for ann in annotations {
        let global = responsible_anchor(ann.w, anchors, spec.input_size);
        let (layer, local) = layer_anchors
            .iter()
            .enumerate()
            .find_map(|(l, set)| set.iter().position(|a| *a == global).map(|p| (l, p)))
            .expect("anchor partition covers all indices");
        let n_grids = layers[layer].n_grids;
        let grid = ((ann.x * n_grids as f32) as usize).min(n_grids - 1);
        let idx = layers[layer].index(grid, local);
        if matches!(layers[layer].slots[idx], Slot::Responsible { .. }) {
            log::warn!(
                "two anomalies claim layer {layer} grid {grid} anchor {local}; later annotation wins"
            );
        }
        layers[layer].slots[idx] = Slot::Responsible {
            x: ann.x,
            w: ann.w,
            class: ann.class.index(),
        };
    }

    TargetAssignment { layers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImpairmentClass;

    fn ann(x: f32, w: f32) -> Annotation {
        Annotation { class: ImpairmentClass::Wave, x, w }
    }

    #[test]
    fn ratio_picks_anchor_43_for_width_50() {
        // w*416 = 50 against {..., 43, 73, 109, ...}: ratios 0.86, 0.685, 0.459
        let anchors = AnchorSet::table_defaults();
        let idx = responsible_anchor(50.0 / 416.0, &anchors, 416);
        assert_eq!(idx, 3); // anchor width 43
    }

    #[test]
    fn full_width_maps_to_coarse_layer() {
        let anchors = AnchorSet::table_defaults();
        let spec = NetworkSpec::reference(416, 5);
        let idx = responsible_anchor(1.0, &anchors, 416);
        assert_eq!(idx, 8); // exact match with anchor 416, ratio 1.0
        let t = assign_targets(&[ann(0.5, 1.0)], &anchors, &spec);
        assert_eq!(t.responsible_count(), 1);
        // anchor 8 lives on layer 0 (13 grids)
        let resp: Vec<_> = t.layers[0]
            .slots
            .iter()
            .filter(|s| matches!(s, Slot::Responsible { .. }))
            .collect();
        assert_eq!(resp.len(), 1);
    }

    #[test]
    fn grid_is_floor_of_scaled_center() {
        let anchors = AnchorSet::table_defaults();
        let spec = NetworkSpec::reference(416, 5);
        // width 2/416 -> anchor 0 -> layer 2 (52 grids); x=0.5 -> grid 26
        let t = assign_targets(&[ann(0.5, 2.0 / 416.0)], &anchors, &spec);
        let l = &t.layers[2];
        let idx = l.index(26, 0);
        assert!(matches!(l.slots[idx], Slot::Responsible { .. }));
    }

    #[test]
    fn later_annotation_wins_collisions() {
        let anchors = AnchorSet::table_defaults();
        let spec = NetworkSpec::reference(416, 5);
        let a = Annotation { class: ImpairmentClass::Spike, x: 0.501, w: 2.0 / 416.0 };
        let b = Annotation { class: ImpairmentClass::Wave, x: 0.502, w: 2.0 / 416.0 };
        let t = assign_targets(&[a, b], &anchors, &spec);
        assert_eq!(t.responsible_count(), 1);
        let l = &t.layers[2];
        let idx = l.index(26, 0);
        match l.slots[idx] {
            Slot::Responsible { class, .. } => assert_eq!(class, ImpairmentClass::Wave.index()),
            _ => panic!("slot should be responsible"),
        }
    }

    #[test]
    fn assignment_is_deterministic() {
        let anchors = AnchorSet::table_defaults();
        let spec = NetworkSpec::reference(416, 5);
        let anns: Vec<Annotation> = (0..20)
            .map(|i| ann(0.03 + 0.045 * i as f32, 0.002 + 0.04 * (i % 7) as f32))
            .collect();
        let t1 = assign_targets(&anns, &anchors, &spec);
        let t2 = assign_targets(&anns, &anchors, &spec);
        for (l1, l2) in t1.layers.iter().zip(&t2.layers) {
            assert_eq!(l1.slots, l2.slots);
        }
        assert!(t1.responsible_count() <= 20);
    }
}
