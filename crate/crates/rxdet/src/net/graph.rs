//! Executable network graph: builds runtime nodes from a [`NetworkSpec`]
//! layer table, runs batched forward passes in train or infer phase, and
//! backpropagates through the whole graph.
//!
//! Node inputs always point at earlier nodes, so execution is a single
//! in-order walk and backward a single reverse walk. Parameter blocks are
//! visited in table order; that order defines the weights-file layout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{
    activation, shape, BatchNormParams, BnCache, ConvParams, DEFAULT_LEAKY_SLOPE,
};
use crate::net::spec::{Activation, LayerSpec, NetworkSpec};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug)]
pub enum NodeOp<T> {
    Input,
    Conv(ConvParams<T>),
    BatchNorm(BatchNormParams<T>),
    LeakyRelu,
    Shortcut,
    Route,
    Upsample { factor: usize },
}

#[derive(Debug)]
pub struct Node<T> {
    pub op: NodeOp<T>,
    /// Absolute ids of input nodes; all strictly smaller than this node's id.
    pub inputs: Vec<usize>,
    pub channels: usize,
    pub len: usize,
    /// Index into the spec's layer table, for diagnostics.
    pub table_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    ConvBias,
    BnGamma,
    BnBeta,
}

#[derive(Debug, Clone, Copy)]
pub struct BlockRef {
    pub node: usize,
    pub table_index: usize,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Infer,
}

#[derive(Debug)]
pub struct Network<T> {
    spec: NetworkSpec,
    nodes: Vec<Node<T>>,
    /// Node ids of the three prediction maps, coarse grid first.
    prediction_nodes: Vec<usize>,
    leaky_slope: T,
}

/// Per-call buffers: node outputs, their gradients, and batchnorm caches.
#[derive(Debug)]
pub struct Activations<T> {
    pub outs: Vec<Tensor<T>>,
    bn: Vec<Option<BnCache<T>>>,
    batch: usize,
    with_grads: bool,
}

impl<T: Scalar> Network<T> {
    /// Build the graph and initialize weights from `seed`.
    pub fn build(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut nodes: Vec<Node<T>> = vec![Node {
            op: NodeOp::Input,
            inputs: vec![],
            channels: 1,
            len: spec.input_size,
            table_index: usize::MAX,
        }];
        // runtime node producing each table layer's output
        let mut table_out: Vec<usize> = Vec::with_capacity(spec.layers.len());
        let mut prediction_nodes = Vec::new();

        let resolve = |table_out: &[usize], at: usize, from: i32| -> Result<usize> {
            let idx = at as i64 + from as i64;
            if from >= 0 || idx < -1 {
                return Err(Error::Config(format!(
                    "layer {at}: from offset {from} must point at an earlier layer"
                )));
            }
            if idx == -1 {
                Ok(0) // network input
            } else {
                Ok(table_out[idx as usize])
            }
        };

        for (ti, layer) in spec.layers.iter().enumerate() {
            let prev = if ti == 0 { 0 } else { table_out[ti - 1] };
            match layer {
                LayerSpec::Conv {
                    filters,
                    kernel,
                    stride,
                    batch_norm,
                    activation,
                } => {
                    let in_node = prev;
                    let (in_ch, in_len) = (nodes[in_node].channels, nodes[in_node].len);
                    let conv = ConvParams::new(in_ch, *filters, *kernel, *stride, !batch_norm)?;
                    let out_len = conv.output_len(in_len);
                    nodes.push(Node {
                        op: NodeOp::Conv(conv),
                        inputs: vec![in_node],
                        channels: *filters,
                        len: out_len,
                        table_index: ti,
                    });
                    let mut last = nodes.len() - 1;
                    if *batch_norm {
                        nodes.push(Node {
                            op: NodeOp::BatchNorm(BatchNormParams::new(*filters)?),
                            inputs: vec![last],
                            channels: *filters,
                            len: out_len,
                            table_index: ti,
                        });
                        last = nodes.len() - 1;
                    }
                    if *activation == Activation::Leaky {
                        nodes.push(Node {
                            op: NodeOp::LeakyRelu,
                            inputs: vec![last],
                            channels: *filters,
                            len: out_len,
                            table_index: ti,
                        });
                        last = nodes.len() - 1;
                    }
                    table_out.push(last);
                }
                LayerSpec::Shortcut { from } => {
                    let other = resolve(&table_out, ti, *from)?;
                    let (a, b) = (&nodes[prev], &nodes[other]);
                    if a.channels != b.channels || a.len != b.len {
                        return Err(Error::Config(format!(
                            "layer {ti}: shortcut shape mismatch {}x{} vs {}x{}",
                            a.channels, a.len, b.channels, b.len
                        )));
                    }
                    if prev == other {
                        return Err(Error::Config(format!("layer {ti}: shortcut to itself")));
                    }
                    nodes.push(Node {
                        op: NodeOp::Shortcut,
                        inputs: vec![prev, other],
                        channels: a.channels,
                        len: a.len,
                        table_index: ti,
                    });
                    table_out.push(nodes.len() - 1);
                }
                LayerSpec::Route { from } => {
                    if from.is_empty() {
                        return Err(Error::Config(format!("layer {ti}: empty route")));
                    }
                    let ids = from
                        .iter()
                        .map(|f| resolve(&table_out, ti, *f))
                        .collect::<Result<Vec<_>>>()?;
                    let len = nodes[ids[0]].len;
                    if ids.iter().any(|id| nodes[*id].len != len) {
                        return Err(Error::Config(format!("layer {ti}: route length mismatch")));
                    }
                    let channels = ids.iter().map(|id| nodes[*id].channels).sum();
                    nodes.push(Node {
                        op: NodeOp::Route,
                        inputs: ids,
                        channels,
                        len,
                        table_index: ti,
                    });
                    table_out.push(nodes.len() - 1);
                }
                LayerSpec::Upsample { factor } => {
                    if *factor != 2 {
                        return Err(Error::Config(format!("layer {ti}: upsample factor must be 2")));
                    }
                    let n = &nodes[prev];
                    let (channels, len) = (n.channels, n.len * factor);
                    nodes.push(Node {
                        op: NodeOp::Upsample { factor: *factor },
                        inputs: vec![prev],
                        channels,
                        len,
                        table_index: ti,
                    });
                    table_out.push(nodes.len() - 1);
                }
                LayerSpec::Predict { .. } => {
                    let n = &nodes[prev];
                    if n.channels != spec.prediction_channels() {
                        return Err(Error::Config(format!(
                            "layer {ti}: prediction map has {} channels, expected {}",
                            n.channels,
                            spec.prediction_channels()
                        )));
                    }
                    prediction_nodes.push(prev);
                    table_out.push(prev);
                }
            }
        }

        // grid sanity: maps must sit at S/32, S/16, S/8
        let grids = spec.grid_sizes();
        for (k, node) in prediction_nodes.iter().enumerate() {
            if nodes[*node].len != grids[k] {
                return Err(Error::Config(format!(
                    "prediction layer {k} has {} grids, expected {}",
                    nodes[*node].len, grids[k]
                )));
            }
        }

        let mut net = Network {
            spec,
            nodes,
            prediction_nodes,
            leaky_slope: T::of(DEFAULT_LEAKY_SLOPE),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Prediction convs start 100x smaller: their center offsets decode
        // through a sigmoid, and a large random head saturates it before the
        // localization loss has any say.
        let predict_convs: Vec<usize> = net.prediction_nodes.clone();
        for (id, node) in net.nodes.iter_mut().enumerate() {
            if let NodeOp::Conv(conv) = &mut node.op {
                let scale = if predict_convs.contains(&id) { 0.01 } else { 1.0 };
                conv.init_he_scaled(&mut rng, scale);
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn prediction_nodes(&self) -> &[usize] {
        &self.prediction_nodes
    }

    /// Trainable parameter count (conv weights/biases, batchnorm gamma/beta).
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for node in &self.nodes {
            match &node.op {
                NodeOp::Conv(c) => n += c.param_count(),
                NodeOp::BatchNorm(b) => n += b.param_count(),
                _ => {}
            }
        }
        n
    }

    /// Total floats in a serialized state: parameters plus running statistics.
    pub fn state_len(&self) -> usize {
        let mut n = self.param_count();
        for node in &self.nodes {
            if let NodeOp::BatchNorm(b) = &node.op {
                n += b.running_mean.len() + b.running_var.len();
            }
        }
        n
    }

    /// Bytes of activation buffers needed per sample.
    pub fn activation_bytes_per_sample(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.channels * n.len * std::mem::size_of::<T>())
            .sum()
    }

    pub fn visit_params_mut(&mut self, mut f: impl FnMut(BlockRef, &mut [T], &mut [T])) {
        for (id, node) in self.nodes.iter_mut().enumerate() {
            let ti = node.table_index;
            match &mut node.op {
                NodeOp::Conv(c) => {
                    f(
                        BlockRef { node: id, table_index: ti, kind: ParamKind::ConvWeight },
                        &mut c.weights,
                        &mut c.grad_weights,
                    );
                    if let (Some(b), Some(gb)) = (c.bias.as_mut(), c.grad_bias.as_mut()) {
                        f(BlockRef { node: id, table_index: ti, kind: ParamKind::ConvBias }, b, gb);
                    }
                }
                NodeOp::BatchNorm(b) => {
                    f(
                        BlockRef { node: id, table_index: ti, kind: ParamKind::BnGamma },
                        &mut b.gamma,
                        &mut b.grad_gamma,
                    );
                    f(
                        BlockRef { node: id, table_index: ti, kind: ParamKind::BnBeta },
                        &mut b.beta,
                        &mut b.grad_beta,
                    );
                }
                _ => {}
            }
        }
    }

    /// Flatten the full state (parameters and running statistics) in
    /// weights-file order.
    pub fn export_state(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.state_len());
        for node in &self.nodes {
            match &node.op {
                NodeOp::Conv(c) => {
                    out.extend_from_slice(&c.weights);
                    if let Some(b) = &c.bias {
                        out.extend_from_slice(b);
                    }
                }
                NodeOp::BatchNorm(b) => {
                    out.extend_from_slice(&b.gamma);
                    out.extend_from_slice(&b.beta);
                    out.extend_from_slice(&b.running_mean);
                    out.extend_from_slice(&b.running_var);
                }
                _ => {}
            }
        }
        out
    }

    pub fn import_state(&mut self, state: &[T]) -> Result<()> {
        if state.len() != self.state_len() {
            return Err(Error::Config(format!(
                "state has {} floats, network needs {}",
                state.len(),
                self.state_len()
            )));
        }
        let mut off = 0;
        let take = |buf: &mut [T], off: &mut usize| {
            buf.copy_from_slice(&state[*off..*off + buf.len()]);
            *off += buf.len();
        };
        for node in &mut self.nodes {
            match &mut node.op {
                NodeOp::Conv(c) => {
                    take(&mut c.weights, &mut off);
                    if let Some(b) = c.bias.as_mut() {
                        take(b, &mut off);
                    }
                }
                NodeOp::BatchNorm(b) => {
                    take(&mut b.gamma, &mut off);
                    take(&mut b.beta, &mut off);
                    take(&mut b.running_mean, &mut off);
                    take(&mut b.running_var, &mut off);
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn zero_param_grads(&mut self) {
        for node in &mut self.nodes {
            match &mut node.op {
                NodeOp::Conv(c) => c.zero_grads(),
                NodeOp::BatchNorm(b) => b.zero_grads(),
                _ => {}
            }
        }
    }

    pub fn alloc_activations(&self, batch: usize, with_grads: bool) -> Activations<T> {
        let mut outs = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let mut t = Tensor::zeros(batch, node.channels, node.len);
            if with_grads {
                t.alloc_grad();
            }
            outs.push(t);
        }
        Activations {
            bn: vec![None; self.nodes.len()],
            outs,
            batch,
            with_grads,
        }
    }

    /// Run the graph. `Phase::Train` uses mini-batch statistics (updating the
    /// running estimates) and fills the caches backward needs.
    pub fn forward(&mut self, input: &Tensor<T>, ctx: &mut Activations<T>, phase: Phase) {
        self.check_input(input, ctx);
        ctx.outs[0].data.copy_from_slice(&input.data);
        let batch = ctx.batch;
        for i in 1..self.nodes.len() {
            let (prev, rest) = ctx.outs.split_at_mut(i);
            let y = &mut rest[0];
            let node = &mut self.nodes[i];
            let in0 = node.inputs.first().copied().unwrap_or(0);
            match &mut node.op {
                NodeOp::Input => unreachable!(),
                NodeOp::Conv(c) => {
                    let x = &prev[in0];
                    c.forward(&x.data, batch, x.len(), &mut y.data);
                }
                NodeOp::BatchNorm(b) => {
                    let x = &prev[in0];
                    match phase {
                        Phase::Train => {
                            let cache = b.forward_train(&x.data, batch, x.len(), &mut y.data);
                            ctx.bn[i] = Some(cache);
                        }
                        Phase::Infer => b.forward_infer(&x.data, batch, x.len(), &mut y.data),
                    }
                }
                NodeOp::LeakyRelu => {
                    let x = &prev[in0];
                    activation::leaky_relu_forward(&x.data, &mut y.data, self.leaky_slope, batch);
                }
                NodeOp::Shortcut => {
                    shortcut_pair(&prev[node.inputs[0]], &prev[node.inputs[1]], y);
                }
                NodeOp::Route => {
                    let parts: Vec<(&[T], usize)> = node
                        .inputs
                        .iter()
                        .map(|id| (&prev[*id].data[..], prev[*id].channels()))
                        .collect();
                    shape::route_forward(&parts, batch, y.len(), &mut y.data);
                }
                NodeOp::Upsample { factor } => {
                    let x = &prev[in0];
                    shape::upsample_forward(&x.data, batch * x.channels(), x.len(), *factor, &mut y.data);
                }
            }
        }
    }

    /// Infer-phase forward over an immutable network; safe to call from many
    /// threads with separate contexts.
    pub fn forward_infer(&self, input: &Tensor<T>, ctx: &mut Activations<T>) {
        self.check_input(input, ctx);
        ctx.outs[0].data.copy_from_slice(&input.data);
        let batch = ctx.batch;
        for i in 1..self.nodes.len() {
            let (prev, rest) = ctx.outs.split_at_mut(i);
            let y = &mut rest[0];
            let node = &self.nodes[i];
            let in0 = node.inputs.first().copied().unwrap_or(0);
            match &node.op {
                NodeOp::Input => unreachable!(),
                NodeOp::Conv(c) => {
                    let x = &prev[in0];
                    c.forward(&x.data, batch, x.len(), &mut y.data);
                }
                NodeOp::BatchNorm(b) => {
                    let x = &prev[in0];
                    b.forward_infer(&x.data, batch, x.len(), &mut y.data);
                }
                NodeOp::LeakyRelu => {
                    let x = &prev[in0];
                    activation::leaky_relu_forward(&x.data, &mut y.data, self.leaky_slope, batch);
                }
                NodeOp::Shortcut => {
                    shortcut_pair(&prev[node.inputs[0]], &prev[node.inputs[1]], y);
                }
                NodeOp::Route => {
                    let parts: Vec<(&[T], usize)> = node
                        .inputs
                        .iter()
                        .map(|id| (&prev[*id].data[..], prev[*id].channels()))
                        .collect();
                    shape::route_forward(&parts, batch, y.len(), &mut y.data);
                }
                NodeOp::Upsample { factor } => {
                    let x = &prev[in0];
                    shape::upsample_forward(&x.data, batch * x.channels(), x.len(), *factor, &mut y.data);
                }
            }
        }
    }

    /// Backpropagate from whatever gradients the caller seeded into the
    /// prediction-map tensors of `ctx`. Must follow a `Phase::Train` forward
    /// on the same context.
    pub fn backward(&mut self, ctx: &mut Activations<T>) {
        assert!(ctx.with_grads, "context was allocated without gradients");
        let batch = ctx.batch;
        for i in (1..self.nodes.len()).rev() {
            let (prev, rest) = ctx.outs.split_at_mut(i);
            let out = &mut rest[0];
            let node = &mut self.nodes[i];
            let in0 = node.inputs.first().copied().unwrap_or(0);
            match &mut node.op {
                NodeOp::Input => unreachable!(),
                NodeOp::Conv(c) => {
                    let gy = out.grad_slice();
                    let x = &mut prev[in0];
                    let in_len = x.len();
                    let (data, grad) = x.data_and_grad_mut();
                    c.backward(data, Some(grad), gy, batch, in_len);
                }
                NodeOp::BatchNorm(b) => {
                    let gy = out.grad_slice();
                    let cache = ctx.bn[i]
                        .as_ref()
                        .expect("batchnorm backward without a train-phase forward");
                    let x = &mut prev[in0];
                    let len = x.len();
                    b.backward(cache, gy, x.grad_mut(), batch, len);
                }
                NodeOp::LeakyRelu => {
                    let gy = out.grad_slice();
                    let y = &out.data;
                    let gx = prev[in0].grad.as_deref_mut().unwrap();
                    activation::leaky_relu_backward(y, gy, gx, self.leaky_slope);
                }
                NodeOp::Shortcut => {
                    let (a, b) = (node.inputs[0], node.inputs[1]);
                    let gy = out.grad.take().unwrap();
                    for g in gy.iter().zip(prev[a].grad_mut().iter_mut()) {
                        *g.1 += *g.0;
                    }
                    for g in gy.iter().zip(prev[b].grad_mut().iter_mut()) {
                        *g.1 += *g.0;
                    }
                    out.grad = Some(gy);
                }
                NodeOp::Route => {
                    let total = node.inputs.iter().map(|id| prev[*id].channels()).sum::<usize>();
                    let len = out.len();
                    let gy = out.grad.take().unwrap();
                    let mut c_off = 0;
                    for id in &node.inputs {
                        let x = &mut prev[*id];
                        let channels = x.channels();
                        let gx = x.grad_mut();
                        for bi in 0..batch {
                            let src = &gy[(bi * total + c_off) * len..][..channels * len];
                            let dst = &mut gx[bi * channels * len..(bi + 1) * channels * len];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += *s;
                            }
                        }
                        c_off += channels;
                    }
                    out.grad = Some(gy);
                }
                NodeOp::Upsample { factor } => {
                    let gy = out.grad_slice();
                    let x = &mut prev[in0];
                    let rows = batch * x.channels();
                    let len = x.len();
                    shape::upsample_backward(gy, rows, len, *factor, x.grad_mut());
                }
            }
        }
    }

    fn check_input(&self, input: &Tensor<T>, ctx: &Activations<T>) {
        assert_eq!(input.channels(), 1, "network input must be single-channel");
        assert_eq!(
            input.len(),
            self.spec.input_size,
            "input length must equal the network input size"
        );
        assert_eq!(input.batch(), ctx.batch, "context batch mismatch");
    }
}

fn shortcut_pair<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, y: &mut Tensor<T>) {
    shape::shortcut_forward(&a.data, &b.data, &mut y.data);
}

impl<T: Scalar> Activations<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.outs {
            t.zero_grad();
        }
    }
}

impl<T: Scalar> Tensor<T> {
    /// Split borrow of the value and gradient buffers.
    pub fn data_and_grad_mut(&mut self) -> (&[T], &mut [T]) {
        (
            &self.data,
            self.grad.as_deref_mut().expect("gradient buffer not allocated"),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::spec::NetworkSpec;

    #[test]
    fn reference_network_shapes() {
        let spec = NetworkSpec::reference(416, 5);
        let net: Network<f32> = Network::build(spec, 7).unwrap();
        let preds = net.prediction_nodes();
        assert_eq!(preds.len(), 3);
        let shapes: Vec<(usize, usize)> = preds
            .iter()
            .map(|id| (net.nodes()[*id].channels, net.nodes()[*id].len))
            .collect();
        assert_eq!(shapes, vec![(24, 13), (24, 26), (24, 52)]);
    }

    #[test]
    fn parameter_budget() {
        let net: Network<f32> = Network::build(NetworkSpec::reference(416, 5), 7).unwrap();
        let params = net.param_count();
        assert!(params <= 100_000, "parameter count {params} exceeds budget");
        // state adds running statistics only
        assert!(net.state_len() >= params);
    }

    #[test]
    fn forward_deterministic_and_batch_independent() {
        let net: Network<f32> = Network::build(NetworkSpec::reference(416, 5), 3).unwrap();
        let series: Vec<f32> = (0..416).map(|i| 0.5 + 0.3 * (i as f32 * 0.05).sin()).collect();
        let single = Tensor::from_vec(1, 1, 416, series.clone());
        let mut ctx1 = net.alloc_activations(1, false);
        net.forward_infer(&single, &mut ctx1);
        let m1: Vec<f32> = ctx1.outs[net.prediction_nodes()[0]].data.clone();

        // same sample twice in a batch: identical outputs, no cross-mixing
        let mut both = series.clone();
        both.extend_from_slice(&series);
        let pair = Tensor::from_vec(2, 1, 416, both);
        let mut ctx2 = net.alloc_activations(2, false);
        net.forward_infer(&pair, &mut ctx2);
        let map = &ctx2.outs[net.prediction_nodes()[0]];
        let half = map.sample_size();
        assert_eq!(&map.data[..half], &m1[..]);
        assert_eq!(&map.data[half..], &m1[..]);
    }

    #[test]
    fn state_roundtrip() {
        let mut net: Network<f32> = Network::build(NetworkSpec::reference(416, 5), 9).unwrap();
        let state = net.export_state();
        assert_eq!(state.len(), net.state_len());
        let mut other: Network<f32> = Network::build(NetworkSpec::reference(416, 5), 1).unwrap();
        other.import_state(&state).unwrap();
        assert_eq!(other.export_state(), state);
        assert!(net.import_state(&state[1..]).is_err());
    }
}
