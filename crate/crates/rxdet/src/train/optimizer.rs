//! SGD with momentum, weight decay, and the quartic burn-in schedule.
//!
//! Velocity update: `v <- momentum * v - lr * (grad + wd * w)`, then
//! `w <- w + v`. Weight decay applies to convolution weights only, never to
//! batchnorm gamma/beta or biases. A non-finite gradient aborts the step
//! with a diagnostic naming the layer.

use crate::error::{Error, Result};
use crate::net::graph::{Network, ParamKind};

/// `alpha_current = min(alpha_target * (n / burn_in)^4, alpha_target)`.
pub fn lr_schedule(n_batches: u64, target_lr: f32, burn_in: u64) -> f32 {
    if burn_in == 0 || n_batches >= burn_in {
        return target_lr;
    }
    let ratio = n_batches as f64 / burn_in as f64;
    (target_lr as f64 * ratio.powi(4)) as f32
}

#[derive(Debug)]
pub struct Sgd {
    momentum: f32,
    weight_decay: f32,
    velocities: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(momentum: f32, weight_decay: f32) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocities: Vec::new(),
        }
    }

    /// Apply one step for the accumulated mini-batch gradients.
    pub fn step(&mut self, network: &mut Network<f32>, lr: f32) -> Result<()> {
        let init = self.velocities.is_empty();
        let momentum = self.momentum;
        let weight_decay = self.weight_decay;
        let velocities = &mut self.velocities;
        let mut block = 0usize;
        let mut failure: Option<Error> = None;

        network.visit_params_mut(|info, values, grads| {
            if init {
                velocities.push(vec![0.0; values.len()]);
            }
            if failure.is_some() {
                return;
            }
            if grads.iter().any(|g| !g.is_finite()) {
                failure = Some(Error::Numeric(format!(
                    "non-finite gradient in layer {} (node {}, {:?})",
                    info.table_index, info.node, info.kind
                )));
                return;
            }
            let wd = if info.kind == ParamKind::ConvWeight {
                weight_decay
            } else {
                0.0
            };
            let v = &mut velocities[block];
            for ((w, g), vel) in values.iter_mut().zip(grads.iter()).zip(v.iter_mut()) {
                *vel = momentum * *vel - lr * (*g + wd * *w);
                *w += *vel;
            }
            block += 1;
        });

        match failure {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::spec::NetworkSpec;

    #[test]
    fn schedule_points() {
        // ramp endpoint
        assert_eq!(lr_schedule(6000, 1e-3, 6000), 1e-3);
        // halfway: (0.5)^4 * 1e-3
        let half = lr_schedule(3000, 1e-3, 6000);
        assert!((half - 6.25e-5).abs() < 1e-12, "{half}");
        // clamped past burn-in
        assert_eq!(lr_schedule(12000, 1e-3, 6000), 1e-3);
        // monotone non-decreasing
        let mut prev = 0.0;
        for n in 0..7000 {
            let lr = lr_schedule(n, 1e-3, 6000);
            assert!(lr >= prev);
            prev = lr;
        }
    }

    #[test]
    fn zero_grads_leave_weights_unchanged() {
        let mut net: Network<f32> = Network::build(NetworkSpec::reference(416, 5), 4).unwrap();
        net.zero_param_grads();
        let before = net.export_state();
        let mut sgd = Sgd::new(0.9, 0.0);
        sgd.step(&mut net, 0.1).unwrap();
        assert_eq!(net.export_state(), before);
    }

    #[test]
    fn single_weight_step() {
        // w = 1, grad = 1, lr = 0.1, no momentum, no decay -> w = 0.9
        let mut net: Network<f32> = Network::build(NetworkSpec::reference(416, 5), 4).unwrap();
        net.zero_param_grads();
        let mut picked = false;
        net.visit_params_mut(|info, values, grads| {
            if !picked && info.kind == ParamKind::ConvWeight {
                values[0] = 1.0;
                grads[0] = 1.0;
                picked = true;
            }
        });
        let mut sgd = Sgd::new(0.0, 0.0);
        sgd.step(&mut net, 0.1).unwrap();
        let mut seen = false;
        net.visit_params_mut(|info, values, _| {
            if !seen && info.kind == ParamKind::ConvWeight {
                assert!((values[0] - 0.9).abs() < 1e-7, "{}", values[0]);
                seen = true;
            }
        });
    }

    #[test]
    fn decay_skips_bn_and_bias() {
        let mut net: Network<f32> = Network::build(NetworkSpec::reference(416, 5), 4).unwrap();
        net.zero_param_grads();
        let mut sgd = Sgd::new(0.0, 5e-4);
        sgd.step(&mut net, 1.0).unwrap();
        // zero grads + decay: conv weights shrink, gamma stays exactly 1
        let mut gamma_ok = true;
        let mut weights_shrunk = false;
        net.visit_params_mut(|info, values, _| match info.kind {
            ParamKind::BnGamma => gamma_ok &= values.iter().all(|v| *v == 1.0),
            ParamKind::ConvWeight => weights_shrunk |= values.iter().any(|v| *v != 0.0),
            _ => {}
        });
        assert!(gamma_ok, "batchnorm gamma must not decay");
        assert!(weights_shrunk);
    }

    #[test]
    fn non_finite_gradient_aborts_with_layer() {
        let mut net: Network<f32> = Network::build(NetworkSpec::reference(416, 5), 4).unwrap();
        net.zero_param_grads();
        let mut done = false;
        net.visit_params_mut(|_, _, grads| {
            if !done {
                grads[0] = f32::NAN;
                done = true;
            }
        });
        let mut sgd = Sgd::new(0.9, 5e-4);
        let err = sgd.step(&mut net, 0.1).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert!(err.to_string().contains("layer"));
    }
}
