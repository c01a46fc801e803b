//! Feed-forward classifier (ReLU MLP with softmax output) and its negative
//! log-likelihood, plus the tiny logistic-regression model used as a
//! closed-form oracle by the Fisher and Laplace modules.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, LayoutEntry, NodeId, ParamLayout, ParamVector};
use crate::error::{Error, Result};
use crate::par;
use crate::seeds::{self, tags};

use rand::Rng;

/// Layer sizes (input, hidden..., classes) plus the initialization seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub layer_sizes: Vec<usize>,
    pub seed: u64,
}

impl Architecture {
    pub fn new(layer_sizes: Vec<usize>, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(
                "architecture needs at least an input and an output layer".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("all layer sizes must be >= 1".into()));
        }
        Ok(Architecture { layer_sizes, seed })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Weight matrices are row-major (out × in), each followed by its bias.
    pub fn layout(&self) -> ParamLayout {
        let mut entries = Vec::new();
        let mut offset = 0;
        for l in 0..self.layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            entries.push(LayoutEntry {
                name: format!("layer{}.weight", l),
                rows: fan_out,
                cols: fan_in,
                offset,
            });
            offset += fan_out * fan_in;
            entries.push(LayoutEntry {
                name: format!("layer{}.bias", l),
                rows: fan_out,
                cols: 1,
                offset,
            });
            offset += fan_out;
        }
        ParamLayout::new(entries).expect("contiguous by construction")
    }

    pub fn param_count(&self) -> usize {
        self.layout().len()
    }
}

/// A labeled minibatch. Inputs are dense rows, labels are class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidInput("batch must contain at least one example".into()));
        }
        if inputs.len() != labels.len() {
            return Err(Error::shape(
                "Batch::new",
                format!("{} labels", inputs.len()),
                format!("{} labels", labels.len()),
            ));
        }
        let dim = inputs[0].len();
        if inputs.iter().any(|r| r.len() != dim) {
            return Err(Error::shape("Batch::new", format!("rows of dim {dim}"), "ragged rows"));
        }
        Ok(Batch { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn example(&self, i: usize) -> (&[f64], usize) {
        (&self.inputs[i], self.labels[i])
    }

    /// New batch containing the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Batch {
        Batch {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn concat(a: &Batch, b: &Batch) -> Result<Batch> {
        if a.dim() != b.dim() {
            return Err(Error::shape(
                "Batch::concat",
                format!("dim {}", a.dim()),
                format!("dim {}", b.dim()),
            ));
        }
        let mut inputs = a.inputs.clone();
        inputs.extend(b.inputs.iter().cloned());
        let mut labels = a.labels.clone();
        labels.extend(b.labels.iter().copied());
        Ok(Batch { inputs, labels })
    }
}

/// Numerically stable softmax (max subtraction).
pub fn stable_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// `-log softmax(logits)[label]` via log-sum-exp, without forming probabilities.
pub fn stable_nll(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Build `-log softmax(logits)[label]` as graph nodes.
///
/// The max subtraction uses the current logit values through a constant node;
/// softmax shift invariance makes the gradient exact regardless.
pub fn softmax_nll_node(g: &mut Graph, logits: &[NodeId], label: usize) -> NodeId {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(g.value(b)));
    let neg_m = g.constant(-m);
    let shifted: Vec<NodeId> = logits.iter().map(|&z| g.add(z, neg_m)).collect();
    let exps: Vec<NodeId> = shifted.iter().map(|&z| g.exp(z)).collect();
    let s_inv = g.recip_sum(&exps);
    let p = g.mul(exps[label], s_inv);
    let logp = g.log(p);
    g.neg(logp)
}

/// Models exposing a mean negative log-likelihood over a batch. The Hessian
/// oracle only needs this surface.
pub trait BatchLoss: Sync {
    fn param_layout(&self) -> ParamLayout;
    fn mean_nll(&self, params: &ParamVector, batch: &Batch) -> Result<f64>;
}

/// Classification models with per-example predictive distributions and
/// per-example NLL gradients — everything Fisher estimation needs.
pub trait LikelihoodModel: BatchLoss {
    fn class_count(&self) -> usize;
    /// Predictive distribution p(·|x, θ); entries sum to 1.
    fn class_probabilities(&self, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>>;
    /// Gradient of `-log p(label | input, θ)` with respect to θ.
    fn example_nll_gradient(
        &self,
        params: &ParamVector,
        input: &[f64],
        label: usize,
    ) -> Result<ParamVector>;
}

/// ReLU MLP with softmax output.
#[derive(Debug, Clone)]
pub struct Mlp {
    arch: Architecture,
}

impl Mlp {
    pub fn new(arch: Architecture) -> Mlp {
        Mlp { arch }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    /// Glorot-uniform weights `±sqrt(6/(fan_in+fan_out))`, zero biases,
    /// fully determined by the architecture seed.
    pub fn init_params(&self) -> ParamVector {
        let layout = self.arch.layout();
        let mut params = ParamVector::zeros(layout);
        let mut rng = seeds::rng(seeds::derive(self.arch.seed, tags::ARCH_INIT, 0));
        let mut offset = 0;
        for l in 0..self.arch.layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (self.arch.layer_sizes[l], self.arch.layer_sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for k in 0..fan_out * fan_in {
                let u: f64 = rng.random();
                params[offset + k] = -bound + u * 2.0 * bound;
            }
            offset += fan_out * fan_in + fan_out; // biases stay zero
        }
        params
    }

    fn check_input_dim(&self, dim: usize, context: &str) -> Result<()> {
        if dim != self.arch.input_dim() {
            return Err(Error::shape(
                context,
                format!("input dim {}", self.arch.input_dim()),
                format!("input dim {dim}"),
            ));
        }
        Ok(())
    }

    fn check_batch(&self, params: &ParamVector, batch: &Batch, context: &str) -> Result<()> {
        if params.len() != self.arch.param_count() {
            return Err(Error::shape(
                context,
                format!("{} params", self.arch.param_count()),
                format!("{} params", params.len()),
            ));
        }
        self.check_input_dim(batch.dim(), context)?;
        let classes = self.arch.class_count();
        if let Some(&bad) = batch.labels().iter().find(|&&l| l >= classes) {
            return Err(Error::shape(
                context,
                format!("labels < {classes}"),
                format!("label {bad}"),
            ));
        }
        Ok(())
    }

    /// Direct (graph-free) forward pass to the output logits.
    fn logits_direct(&self, params: &ParamVector, input: &[f64]) -> Vec<f64> {
        let sizes = &self.arch.layer_sizes;
        let mut activ = input.to_vec();
        let mut offset = 0;
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let mut next = vec![0.0; fan_out];
            for (j, out) in next.iter_mut().enumerate() {
                let row = offset + j * fan_in;
                let mut z = 0.0;
                for (i, &a) in activ.iter().enumerate() {
                    z += params[row + i] * a;
                }
                z += params[offset + fan_out * fan_in + j];
                *out = if l + 2 < sizes.len() { z.max(0.0) } else { z };
            }
            offset += fan_out * fan_in + fan_out;
            activ = next;
        }
        activ
    }

    /// Build logit nodes for one input row inside `g`.
    fn logits_graph(&self, g: &mut Graph, input: &[f64]) -> Vec<NodeId> {
        let sizes = &self.arch.layer_sizes;
        let mut activ: Vec<NodeId> = input.iter().map(|&x| g.constant(x)).collect();
        let mut offset = 0;
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let mut next = Vec::with_capacity(fan_out);
            for j in 0..fan_out {
                let row = offset + j * fan_in;
                let pairs: Vec<(NodeId, NodeId)> = activ
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| (g.param(row + i), a))
                    .collect();
                let dot = g.dot_accumulate(&pairs);
                let bias = g.param(offset + fan_out * fan_in + j);
                let z = g.add(dot, bias);
                next.push(if l + 2 < sizes.len() { g.relu(z) } else { z });
            }
            offset += fan_out * fan_in + fan_out;
            activ = next;
        }
        activ
    }

    /// Mean cross-entropy over the batch as a differentiable graph.
    pub fn nll_loss(&self, params: &ParamVector, batch: &Batch) -> Result<(Graph, NodeId)> {
        self.check_batch(params, batch, "Mlp::nll_loss")?;
        let mut g = Graph::with_params(params);
        let inv_n = g.constant(1.0 / batch.len() as f64);
        let mut pairs = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            let (input, label) = batch.example(i);
            let logits = self.logits_graph(&mut g, input);
            let nll = softmax_nll_node(&mut g, &logits, label);
            pairs.push((nll, inv_n));
        }
        let root = g.dot_accumulate(&pairs);
        Ok((g, root))
    }

    /// Softmax class probabilities for every input row.
    pub fn predict(&self, params: &ParamVector, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if params.len() != self.arch.param_count() {
            return Err(Error::shape(
                "Mlp::predict",
                format!("{} params", self.arch.param_count()),
                format!("{} params", params.len()),
            ));
        }
        for row in inputs {
            self.check_input_dim(row.len(), "Mlp::predict")?;
        }
        Ok(par::map_slice(inputs, |row| {
            stable_softmax(&self.logits_direct(params, row))
        }))
    }

    /// Fraction of rows whose argmax prediction matches the label.
    /// Ties break toward the lowest class index.
    pub fn accuracy(&self, params: &ParamVector, batch: &Batch) -> Result<f64> {
        self.check_batch(params, batch, "Mlp::accuracy")?;
        let hits: Vec<bool> = par::map_indexed(batch.len(), |i| {
            let (input, label) = batch.example(i);
            let logits = self.logits_direct(params, input);
            argmax(&logits) == label
        });
        Ok(hits.iter().filter(|&&h| h).count() as f64 / batch.len() as f64)
    }
}

/// First index of the strict maximum (ties go to the lowest index).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl BatchLoss for Mlp {
    fn param_layout(&self) -> ParamLayout {
        self.arch.layout()
    }

    fn mean_nll(&self, params: &ParamVector, batch: &Batch) -> Result<f64> {
        self.check_batch(params, batch, "Mlp::mean_nll")?;
        let nlls: Vec<f64> = par::map_indexed(batch.len(), |i| {
            let (input, label) = batch.example(i);
            stable_nll(&self.logits_direct(params, input), label)
        });
        Ok(nlls.iter().sum::<f64>() / batch.len() as f64)
    }
}

impl LikelihoodModel for Mlp {
    fn class_count(&self) -> usize {
        self.arch.class_count()
    }

    fn class_probabilities(&self, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input_dim(input.len(), "Mlp::class_probabilities")?;
        Ok(stable_softmax(&self.logits_direct(params, input)))
    }

    fn example_nll_gradient(
        &self,
        params: &ParamVector,
        input: &[f64],
        label: usize,
    ) -> Result<ParamVector> {
        self.check_input_dim(input.len(), "Mlp::example_nll_gradient")?;
        let mut g = Graph::with_params(params);
        let logits = self.logits_graph(&mut g, input);
        let root = softmax_nll_node(&mut g, &logits, label);
        g.forward(root)?;
        g.backward(root)
    }
}

/// Binary logistic regression `p(y=1|x) = σ(w·x + b)`.
///
/// With `dim = 1`, `bias = false`, and constant inputs `[1.0]` this is the
/// one-parameter Bernoulli model whose Fisher information has the closed
/// form `σ(θ)(1-σ(θ))`.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    dim: usize,
    bias: bool,
}

impl LogisticRegression {
    pub fn new(dim: usize, bias: bool) -> LogisticRegression {
        LogisticRegression { dim, bias }
    }

    /// One-parameter Bernoulli model `p(y=1) = σ(θ)`; feed inputs `[1.0]`.
    pub fn bernoulli() -> LogisticRegression {
        LogisticRegression { dim: 1, bias: false }
    }

    pub fn param_count(&self) -> usize {
        self.dim + usize::from(self.bias)
    }

    fn logit(&self, params: &ParamVector, input: &[f64]) -> f64 {
        let mut z = 0.0;
        for i in 0..self.dim {
            z += params[i] * input[i];
        }
        if self.bias {
            z += params[self.dim];
        }
        z
    }

    fn check(&self, params: &ParamVector, input: &[f64], context: &str) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape(
                context,
                format!("{} params", self.param_count()),
                format!("{} params", params.len()),
            ));
        }
        if input.len() != self.dim {
            return Err(Error::shape(
                context,
                format!("input dim {}", self.dim),
                format!("input dim {}", input.len()),
            ));
        }
        Ok(())
    }
}

fn stable_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

impl BatchLoss for LogisticRegression {
    fn param_layout(&self) -> ParamLayout {
        ParamLayout::flat("theta", self.param_count())
    }

    fn mean_nll(&self, params: &ParamVector, batch: &Batch) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..batch.len() {
            let (input, label) = batch.example(i);
            self.check(params, input, "LogisticRegression::mean_nll")?;
            let z = self.logit(params, input);
            // -log p(y): softplus(-z) for y=1, softplus(z) for y=0
            total += if label == 1 { softplus(-z) } else { softplus(z) };
        }
        Ok(total / batch.len() as f64)
    }
}

impl LikelihoodModel for LogisticRegression {
    fn class_count(&self) -> usize {
        2
    }

    fn class_probabilities(&self, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
        self.check(params, input, "LogisticRegression::class_probabilities")?;
        let p = stable_sigmoid(self.logit(params, input));
        Ok(vec![1.0 - p, p])
    }

    fn example_nll_gradient(
        &self,
        params: &ParamVector,
        input: &[f64],
        label: usize,
    ) -> Result<ParamVector> {
        self.check(params, input, "LogisticRegression::example_nll_gradient")?;
        // Two-class softmax over logits [0, z] through the graph, exercising
        // the same machinery the MLP uses.
        let mut g = Graph::with_params(params);
        let pairs: Vec<(NodeId, NodeId)> = (0..self.dim)
            .map(|i| {
                let c = g.constant(input[i]);
                (g.param(i), c)
            })
            .collect();
        let dot = g.dot_accumulate(&pairs);
        let z = if self.bias {
            let b = g.param(self.dim);
            g.add(dot, b)
        } else {
            dot
        };
        let zero = g.constant(0.0);
        let root = softmax_nll_node(&mut g, &[zero, z], label);
        g.forward(root)?;
        g.backward(root)
    }
}
