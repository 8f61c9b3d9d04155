//! Single-shot anomaly localization and classification for 1-D spectrum
//! data series (DOCSIS downstream RxMER per sub-carrier and similar).
//!
//! A small fully-convolutional network predicts anomaly intervals at three
//! scales from anchor priors, trained with hand-written backpropagation.
//! The crate covers the whole pipeline: dataset I/O and synthesis,
//! binning-minimum down-sampling, augmentation, anchor computation,
//! training with SGD and a burn-in schedule, decoding with per-class
//! NMS/soft-NMS, and mAP evaluation.
//!
//! Batch-level work (detection, evaluation, synthesis, the training inner
//! loops) is data-parallel via rayon behind the default `parallel` feature;
//! disabling it falls back to sequential code with bit-identical results.

pub mod data;
pub mod error;
pub mod eval;
pub mod net;
pub mod nn;
pub mod par;
pub mod rng;
pub mod tensor;
pub mod train;

pub use data::{Annotation, Dataset, ImpairmentClass, Sample, SourceTag};
pub use error::{Error, Result};
pub use net::{AnchorSet, DetectOptions, Detection, Model, NetworkSpec, NmsMode};
pub use tensor::{Scalar, Tensor};
