//! The loaded detector: network + anchors + class names, with the
//! end-to-end `detect` pipeline (binning-minimum down-sampling,
//! normalization, forward pass, decoding, per-class NMS).

use std::path::Path;

use crate::data::downsample::{binning_min_downsample, nearest_resample, normalize};
use crate::error::{Error, Result, WeightsError};
use crate::net::decode::{decode_sample, Detection};
use crate::net::graph::{Activations, Network};
use crate::net::nms::{nms, soft_nms};
use crate::net::spec::{AnchorSet, NetworkSpec};
use crate::net::weights::{read_weights, write_weights};
use crate::par;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NmsMode {
    /// Greedy suppression above an IoU threshold.
    Hard { iou: f32 },
    /// Gaussian confidence decay; detections ending below `final_threshold`
    /// are dropped.
    Soft { sigma: f32, final_threshold: f32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOptions {
    pub conf_threshold: f32,
    pub nms: NmsMode,
    /// Labels attached per detection; 1 keeps the argmax class only.
    pub multi_label_top_n: usize,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            conf_threshold: 0.5,
            nms: NmsMode::Hard { iou: 0.5 },
            multi_label_top_n: 1,
        }
    }
}

#[derive(Debug)]
pub struct Model {
    network: Network<f32>,
    anchors: AnchorSet,
    class_names: Vec<String>,
}

impl Model {
    /// Build a fresh model with seeded weight initialization.
    pub fn new(spec: NetworkSpec, anchors: AnchorSet, class_names: Vec<String>, seed: u64) -> Result<Self> {
        if class_names.len() != spec.n_classes {
            return Err(Error::Config(format!(
                "{} class names for {} classes",
                class_names.len(),
                spec.n_classes
            )));
        }
        Ok(Model {
            network: Network::build(spec, seed)?,
            anchors,
            class_names,
        })
    }

    /// The reference RxMER detector (416 input, 5 classes, table anchors).
    pub fn reference(seed: u64) -> Result<Self> {
        Model::new(
            NetworkSpec::reference(crate::net::spec::DEFAULT_INPUT_SIZE, crate::data::N_CLASSES),
            AnchorSet::table_defaults(),
            crate::data::ImpairmentClass::names(),
            seed,
        )
    }

    pub fn spec(&self) -> &NetworkSpec {
        self.network.spec()
    }

    pub fn anchors(&self) -> &AnchorSet {
        &self.anchors
    }

    pub fn set_anchors(&mut self, anchors: AnchorSet) {
        self.anchors = anchors;
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn network(&self) -> &Network<f32> {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network<f32> {
        &mut self.network
    }

    pub fn param_count(&self) -> usize {
        self.network.param_count()
    }

    /// Prepare one raw series for the network: resample to the input size
    /// and normalize to [0, 1]. Series shorter than the input size are
    /// nearest-neighbor stretched.
    pub fn preprocess(&self, values: &[f32]) -> Result<Vec<f32>> {
        if values.len() < 2 {
            return Err(Error::Input(format!(
                "series needs at least 2 values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("series contains non-finite values".into()));
        }
        let target = self.spec().input_size;
        let resized = if values.len() >= target {
            binning_min_downsample(values, target)?
        } else {
            nearest_resample(values, target)
        };
        Ok(normalize(&resized))
    }

    /// End-to-end single-series detection. Detections are proportional to
    /// the original series span.
    pub fn detect(&self, values: &[f32], opts: &DetectOptions) -> Result<Vec<Detection>> {
        let mut ctx = self.network.alloc_activations(1, false);
        self.detect_with_ctx(values, opts, &mut ctx)
    }

    /// `detect` with a caller-owned context so batch loops can reuse buffers.
    pub fn detect_with_ctx(
        &self,
        values: &[f32],
        opts: &DetectOptions,
        ctx: &mut Activations<f32>,
    ) -> Result<Vec<Detection>> {
        let prepared = self.preprocess(values)?;
        let input = Tensor::from_series(&prepared);
        self.network.forward_infer(&input, ctx);
        let maps: Vec<&Tensor<f32>> = self
            .network
            .prediction_nodes()
            .iter()
            .map(|id| &ctx.outs[*id])
            .collect();
        let raw = decode_sample(
            &maps,
            0,
            self.spec(),
            &self.anchors,
            opts.conf_threshold,
            opts.multi_label_top_n,
        );
        let input_size = self.spec().input_size;
        Ok(match opts.nms {
            NmsMode::Hard { iou } => nms(raw, iou, input_size),
            NmsMode::Soft { sigma, final_threshold } => soft_nms(raw, sigma, final_threshold, input_size),
        })
    }

    /// Batch detection, parallel across samples when the `parallel` feature
    /// is on. Per-sample results are deterministic and ordered.
    pub fn detect_batch(&self, series: &[Vec<f32>], opts: &DetectOptions) -> Vec<Result<Vec<Detection>>> {
        par::map_indexed(series, |_, values| self.detect(values, opts))
    }

    /// Sequential batch detection; same results as [`Model::detect_batch`].
    pub fn detect_batch_seq(&self, series: &[Vec<f32>], opts: &DetectOptions) -> Vec<Result<Vec<Detection>>> {
        let mut ctx = self.network.alloc_activations(1, false);
        par::map_indexed_seq(series, |_, values: &Vec<f32>| {
            self.detect_with_ctx(values, opts, &mut ctx)
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let state = self.network.export_state();
        write_weights(path, self.spec(), &self.anchors, &self.class_names, &state)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = read_weights(path)?;
        let mut network = Network::build(file.spec, 0)?;
        if file.state.len() != network.state_len() {
            return Err(Error::Weights(WeightsError::ShapeMismatch(format!(
                "file holds {} floats, network needs {}",
                file.state.len(),
                network.state_len()
            ))));
        }
        network
            .import_state(&file.state)
            .map_err(|e| Error::Weights(WeightsError::ShapeMismatch(e.to_string())))?;
        Ok(Model {
            network,
            anchors: file.anchors,
            class_names: file.class_names,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detect_accepts_odd_lengths() {
        let model = Model::reference(5).unwrap();
        let series: Vec<f32> = (0..1800).map(|i| 40.0 + (i % 13) as f32 * 0.1).collect();
        // untrained model: just exercises the full pipeline
        let dets = model.detect(&series, &DetectOptions::default()).unwrap();
        for d in dets {
            assert!(d.center >= 0.0 && d.center <= 1.0);
            assert!(d.width > 0.0);
        }
    }

    #[test]
    fn detect_rejects_degenerate_series() {
        let model = Model::reference(5).unwrap();
        assert!(model.detect(&[1.0], &DetectOptions::default()).is_err());
        assert!(model.detect(&[], &DetectOptions::default()).is_err());
        assert!(model
            .detect(&vec![f32::NAN; 500], &DetectOptions::default())
            .is_err());
    }

    #[test]
    fn batch_matches_sequential() {
        let model = Model::reference(5).unwrap();
        let series: Vec<Vec<f32>> = (0..8)
            .map(|s| (0..1900).map(|i| 40.0 + ((i + s * 37) % 11) as f32 * 0.2).collect())
            .collect();
        let opts = DetectOptions { conf_threshold: 0.3, ..Default::default() };
        let par: Vec<_> = model.detect_batch(&series, &opts).into_iter().map(|r| r.unwrap()).collect();
        let seq: Vec<_> = model.detect_batch_seq(&series, &opts).into_iter().map(|r| r.unwrap()).collect();
        assert_eq!(par, seq);
    }

    #[test]
    fn save_load_roundtrip_preserves_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.rxd");
        let model = Model::reference(6).unwrap();
        model.save(&path).unwrap();
        let loaded = Model::load(&path).unwrap();
        assert_eq!(loaded.network.export_state(), model.network.export_state());
        assert_eq!(loaded.class_names(), model.class_names());
        assert_eq!(loaded.anchors(), model.anchors());

        let series: Vec<f32> = (0..1850).map(|i| 41.0 + (i % 7) as f32 * 0.3).collect();
        let opts = DetectOptions { conf_threshold: 0.01, ..Default::default() };
        assert_eq!(
            model.detect(&series, &opts).unwrap(),
            loaded.detect(&series, &opts).unwrap()
        );
    }

    #[test]
    fn corrupted_magic_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.rxd");
        Model::reference(6).unwrap().save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        match Model::load(&path) {
            Err(Error::Weights(WeightsError::BadMagic)) => {}
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn truncated_file_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.rxd");
        Model::reference(6).unwrap().save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 6]).unwrap();
        assert!(Model::load(&path).is_err());
    }

    #[test]
    fn weights_file_under_budget() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.rxd");
        Model::reference(6).unwrap().save(&path).unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        assert!(len <= 400 * 1024, "weights file is {len} bytes");
    }
}
