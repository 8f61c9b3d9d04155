//! The detector: network spec, executable graph, anchor-based decoding,
//! per-class NMS / soft-NMS, and weights-file persistence.

pub mod decode;
pub mod graph;
pub mod nms;
pub mod spec;
pub mod weights;

mod model;

pub use decode::{decode_sample, Detection};
pub use graph::{Activations, BlockRef, Network, NodeOp, ParamKind, Phase};
pub use model::{DetectOptions, Model, NmsMode};
pub use spec::{Activation, AnchorSet, LayerSpec, NetworkSpec, ANCHORS_PER_LAYER, BOX_FIELDS, DEFAULT_INPUT_SIZE, N_PREDICTION_LAYERS};
