//! Hand-written 1-D layer math: forward and backward passes for every layer
//! type the detector uses. No autograd; the network graph is static and each
//! layer knows its own adjoint.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod shape;

pub use activation::{leaky_relu_backward, leaky_relu_forward, sigmoid, softmax, DEFAULT_LEAKY_SLOPE};
pub use batchnorm::{BatchNormParams, BnCache, DEFAULT_EPSILON, DEFAULT_MOMENTUM};
pub use conv::ConvParams;
