//! Minimal reverse-mode differentiation over scalar computation graphs.
//!
//! Graphs are append-only arenas: builder methods push nodes, eagerly compute
//! their values, and return [`NodeId`]s. Arena order is a topological order,
//! so `forward` is a single in-order sweep and `backward` a single reverse
//! sweep that visits each node exactly once. A graph is built per minibatch
//! and thrown away — there is no tape reuse.
//!
//! The op set is deliberately small: arithmetic, `relu`/`log`/`exp`, a fused
//! dot-accumulate (the "matmul" of a desk-scale network), and a
//! reciprocal-of-sum node for softmax denominators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// One named block of parameters inside a flat [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl LayoutEntry {
    pub fn count(&self) -> usize {
        self.rows * self.cols
    }
}

/// Fixed layout shared by every parameter vector of one architecture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    entries: Vec<LayoutEntry>,
    len: usize,
}

impl ParamLayout {
    /// Entries must be contiguous and in offset order.
    pub fn new(entries: Vec<LayoutEntry>) -> Result<Self> {
        let mut expected = 0usize;
        for e in &entries {
            if e.offset != expected {
                return Err(Error::shape(
                    format!("layout entry {}", e.name),
                    format!("offset {expected}"),
                    format!("offset {}", e.offset),
                ));
            }
            expected += e.count();
        }
        Ok(ParamLayout { entries, len: expected })
    }

    /// Single unnamed block, used by the tiny oracle models.
    pub fn flat(name: &str, n: usize) -> Self {
        ParamLayout {
            entries: vec![LayoutEntry {
                name: name.to_string(),
                rows: n,
                cols: 1,
                offset: 0,
            }],
            len: n,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }
}

/// Flat vector of all trainable parameters, the coordinate system shared by
/// gradients, Fisher estimates, and task anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: ParamLayout,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: ParamLayout) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::shape(
                "ParamVector::new",
                format!("{} values", layout.len()),
                format!("{} values", values.len()),
            ));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn zeros(layout: ParamLayout) -> Self {
        ParamVector {
            values: vec![0.0; layout.len()],
            layout,
        }
    }

    /// Vector with a single flat layout block named `theta`.
    pub fn flat(values: Vec<f64>) -> Self {
        let layout = ParamLayout::flat("theta", values.len());
        ParamVector { values, layout }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.layout == other.layout
    }

    pub(crate) fn check_same_layout(&self, other: &ParamVector, context: &str) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::shape(
                context,
                format!("layout of length {}", self.len()),
                format!("layout of length {}", other.len()),
            ))
        }
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &ParamVector) -> Result<()> {
        self.check_same_layout(x, "ParamVector::axpy")?;
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
        Ok(())
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_same_layout(other, "ParamVector::sub")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ParamVector {
            values,
            layout: self.layout.clone(),
        })
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_same_layout(other, "ParamVector::dot")?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// FNV-1a hash of the raw f64 bits; used for snapshot and immutability checks.
    pub fn bits_hash(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        for v in &self.values {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl std::ops::IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

/// Handle to a node inside one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(u32);

impl NodeId {
    fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const,
    Param(u32),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    Relu(NodeId),
    Log(NodeId),
    Exp(NodeId),
    /// 1 / (v_1 + ... + v_k) over `sum_args[start..start+len]`.
    RecipSum { start: u32, len: u32 },
    /// a_1*b_1 + ... + a_k*b_k over `dot_args[start..start+len]`.
    DotAcc { start: u32, len: u32 },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Const => "const",
            Op::Param(_) => "param",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Neg(_) => "neg",
            Op::Relu(_) => "relu",
            Op::Log(_) => "log",
            Op::Exp(_) => "exp",
            Op::RecipSum { .. } => "recip_sum",
            Op::DotAcc { .. } => "dot_accumulate",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: f64,
    adjoint: f64,
}

/// Append-only computation graph over one parameter vector.
pub struct Graph {
    nodes: Vec<Node>,
    sum_args: Vec<NodeId>,
    dot_args: Vec<(NodeId, NodeId)>,
    layout: ParamLayout,
    param_nodes: Vec<NodeId>,
    evaluated_root: Option<NodeId>,
}

impl Graph {
    /// Create a graph with one node per parameter, bound to current values.
    pub fn with_params(params: &ParamVector) -> Graph {
        let mut nodes = Vec::with_capacity(params.len() + 64);
        let mut param_nodes = Vec::with_capacity(params.len());
        for (i, &v) in params.values().iter().enumerate() {
            param_nodes.push(NodeId(nodes.len() as u32));
            nodes.push(Node {
                op: Op::Param(i as u32),
                value: v,
                adjoint: 0.0,
            });
        }
        Graph {
            nodes,
            sum_args: Vec::new(),
            dot_args: Vec::new(),
            layout: params.layout().clone(),
            param_nodes,
            evaluated_root: None,
        }
    }

    pub fn param(&self, i: usize) -> NodeId {
        self.param_nodes[i]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.nodes[id.index()].value
    }

    /// Adjoint after the latest `backward`; 0 before.
    pub fn adjoint(&self, id: NodeId) -> f64 {
        self.nodes[id.index()].adjoint
    }

    fn push(&mut self, op: Op, value: f64) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            op,
            value,
            adjoint: 0.0,
        });
        self.evaluated_root = None;
        id
    }

    pub fn constant(&mut self, v: f64) -> NodeId {
        self.push(Op::Const, v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) * self.value(b);
        self.push(Op::Mul(a, b), v)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = -self.value(a);
        self.push(Op::Neg(a), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).max(0.0);
        self.push(Op::Relu(a), v)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).ln();
        self.push(Op::Log(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).exp();
        self.push(Op::Exp(a), v)
    }

    /// `1 / (args[0] + ... + args[k-1])`, the softmax denominator.
    pub fn recip_sum(&mut self, args: &[NodeId]) -> NodeId {
        let start = self.sum_args.len() as u32;
        self.sum_args.extend_from_slice(args);
        let s: f64 = args.iter().map(|&a| self.value(a)).sum();
        self.push(
            Op::RecipSum {
                start,
                len: args.len() as u32,
            },
            1.0 / s,
        )
    }

    /// Fused multiply-accumulate over pairs: `Σ_k a_k * b_k`.
    pub fn dot_accumulate(&mut self, pairs: &[(NodeId, NodeId)]) -> NodeId {
        let start = self.dot_args.len() as u32;
        self.dot_args.extend_from_slice(pairs);
        let mut s = 0.0;
        for &(a, b) in pairs {
            s += self.value(a) * self.value(b);
        }
        self.push(
            Op::DotAcc {
                start,
                len: pairs.len() as u32,
            },
            s,
        )
    }

    fn compute(&self, i: usize) -> f64 {
        match self.nodes[i].op {
            Op::Const | Op::Param(_) => self.nodes[i].value,
            Op::Add(a, b) => self.nodes[a.index()].value + self.nodes[b.index()].value,
            Op::Mul(a, b) => self.nodes[a.index()].value * self.nodes[b.index()].value,
            Op::Neg(a) => -self.nodes[a.index()].value,
            Op::Relu(a) => self.nodes[a.index()].value.max(0.0),
            Op::Log(a) => self.nodes[a.index()].value.ln(),
            Op::Exp(a) => self.nodes[a.index()].value.exp(),
            Op::RecipSum { start, len } => {
                let args = &self.sum_args[start as usize..(start + len) as usize];
                let s: f64 = args.iter().map(|a| self.nodes[a.index()].value).sum();
                1.0 / s
            }
            Op::DotAcc { start, len } => {
                let args = &self.dot_args[start as usize..(start + len) as usize];
                args.iter()
                    .map(|(a, b)| self.nodes[a.index()].value * self.nodes[b.index()].value)
                    .sum()
            }
        }
    }

    /// Recompute all node values up to `root` in topological (arena) order and
    /// return the root value. Fails on the first non-finite intermediate.
    pub fn forward(&mut self, root: NodeId) -> Result<f64> {
        for i in 0..=root.index() {
            let v = self.compute(i);
            if !v.is_finite() {
                return Err(Error::NumericalOverflow {
                    op: self.nodes[i].op.name(),
                    node: i,
                });
            }
            self.nodes[i].value = v;
        }
        self.evaluated_root = Some(root);
        Ok(self.nodes[root.index()].value)
    }

    /// Reverse sweep from `root`; returns ∂root/∂θ for every parameter.
    /// Requires a prior `forward` on the same root.
    pub fn backward(&mut self, root: NodeId) -> Result<ParamVector> {
        if self.evaluated_root != Some(root) {
            return Err(Error::StaleGraph);
        }
        for n in &mut self.nodes {
            n.adjoint = 0.0;
        }
        self.nodes[root.index()].adjoint = 1.0;

        for i in (0..=root.index()).rev() {
            let adj = self.nodes[i].adjoint;
            if adj == 0.0 {
                continue;
            }
            match self.nodes[i].op {
                Op::Const | Op::Param(_) => {}
                Op::Add(a, b) => {
                    self.nodes[a.index()].adjoint += adj;
                    self.nodes[b.index()].adjoint += adj;
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.nodes[a.index()].value, self.nodes[b.index()].value);
                    self.nodes[a.index()].adjoint += adj * vb;
                    self.nodes[b.index()].adjoint += adj * va;
                }
                Op::Neg(a) => {
                    self.nodes[a.index()].adjoint -= adj;
                }
                Op::Relu(a) => {
                    // Derivative at the kink (exactly 0) is defined as 0.
                    if self.nodes[a.index()].value > 0.0 {
                        self.nodes[a.index()].adjoint += adj;
                    }
                }
                Op::Log(a) => {
                    let va = self.nodes[a.index()].value;
                    self.nodes[a.index()].adjoint += adj / va;
                }
                Op::Exp(a) => {
                    let v = self.nodes[i].value;
                    self.nodes[a.index()].adjoint += adj * v;
                }
                Op::RecipSum { start, len } => {
                    let v = self.nodes[i].value;
                    let d = -v * v; // d(1/S)/dv_k = -1/S^2
                    for k in start as usize..(start + len) as usize {
                        let a = self.sum_args[k];
                        self.nodes[a.index()].adjoint += adj * d;
                    }
                }
                Op::DotAcc { start, len } => {
                    for k in start as usize..(start + len) as usize {
                        let (a, b) = self.dot_args[k];
                        let (va, vb) = (self.nodes[a.index()].value, self.nodes[b.index()].value);
                        self.nodes[a.index()].adjoint += adj * vb;
                        self.nodes[b.index()].adjoint += adj * va;
                    }
                }
            }
        }

        let mut grad = ParamVector::zeros(self.layout.clone());
        for n in &self.nodes {
            if let Op::Param(i) = n.op {
                grad[i as usize] = n.adjoint;
            }
        }
        Ok(grad)
    }

    /// `(relu node index, pre-activation value)` for every relu in the graph.
    /// grad_check uses these to detect kink crossings.
    pub fn relu_preactivations(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(self.nodes[a.index()].value),
                _ => None,
            })
            .collect()
    }
}

/// Outcome of one coordinate of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct CoordinateCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    /// True when the ±h probe crossed (or landed near) a relu kink, making
    /// the central difference meaningless at this coordinate.
    pub excluded: bool,
}

/// Report from [`grad_check`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub coordinates: Vec<CoordinateCheck>,
    /// Maximum relative error over non-excluded coordinates.
    pub max_rel_error: f64,
    pub excluded: Vec<usize>,
    pub pass: bool,
}

/// Relative-error denominator floor: below this scale the comparison is
/// effectively absolute.
const REL_FLOOR: f64 = 1e-6;

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compare reverse-mode gradients against central finite differences
/// `(f(θ+h·e_i) − f(θ−h·e_i)) / 2h` for every coordinate.
///
/// Coordinates whose probe crosses a relu kink (pre-activation within `10·h`
/// of zero, or an activation flip between the two probes) are excluded from
/// the pass judgement and reported instead.
pub fn grad_check<F>(
    loss_builder: F,
    point: &ParamVector,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamVector) -> Result<(Graph, NodeId)> + Sync + Send,
{
    if step <= 0.0 {
        return Err(Error::InvalidInput("grad_check step must be > 0".into()));
    }

    let (mut base, root) = loss_builder(point)?;
    base.forward(root)?;
    let analytic = base.backward(root)?;

    let checks = par::map_indexed(point.len(), |i| -> Result<CoordinateCheck> {
        let mut plus = point.clone();
        plus[i] += step;
        let mut minus = point.clone();
        minus[i] -= step;

        let (mut gp, rp) = loss_builder(&plus)?;
        let fp = gp.forward(rp)?;
        let (mut gm, rm) = loss_builder(&minus)?;
        let fm = gm.forward(rm)?;

        let pre_p = gp.relu_preactivations();
        let pre_m = gm.relu_preactivations();
        if pre_p.len() != pre_m.len() {
            return Err(Error::InvalidInput(
                "loss_builder produced graphs of different structure".into(),
            ));
        }
        let kink = 10.0 * step;
        let excluded = pre_p.iter().zip(&pre_m).any(|(&p, &m)| {
            let influenced = p != m;
            let flipped = (p > 0.0) != (m > 0.0);
            influenced && (flipped || p.abs() < kink || m.abs() < kink)
        });

        let numeric = (fp - fm) / (2.0 * step);
        Ok(CoordinateCheck {
            index: i,
            analytic: analytic[i],
            numeric,
            rel_error: rel_error(analytic[i], numeric),
            excluded,
        })
    });

    let coordinates: Vec<CoordinateCheck> = checks.into_iter().collect::<Result<_>>()?;
    let excluded: Vec<usize> = coordinates
        .iter()
        .filter(|c| c.excluded)
        .map(|c| c.index)
        .collect();
    let max_rel_error = coordinates
        .iter()
        .filter(|c| !c.excluded)
        .fold(0.0f64, |m, c| m.max(c.rel_error));
    let pass = max_rel_error <= tolerance;
    Ok(GradCheckReport {
        coordinates,
        max_rel_error,
        excluded,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_three_x_plus_one() {
        let params = ParamVector::flat(vec![2.0]);
        let mut g = Graph::with_params(&params);
        let three = g.constant(3.0);
        let x = g.param(0);
        let prod = g.mul(three, x);
        let one = g.constant(1.0);
        let root = g.add(prod, one);
        assert_eq!(g.forward(root).unwrap(), 7.0);
    }

    #[test]
    fn forward_relu_negative() {
        let params = ParamVector::flat(vec![-5.0]);
        let mut g = Graph::with_params(&params);
        let root = {
            let x = g.param(0);
            g.relu(x)
        };
        assert_eq!(g.forward(root).unwrap(), 0.0);
    }

    #[test]
    fn forward_log_softmax_uniform() {
        // log(softmax([0, 0]))[0] = -log 2
        let params = ParamVector::flat(vec![]);
        let mut g = Graph::with_params(&params);
        let z0 = g.constant(0.0);
        let z1 = g.constant(0.0);
        let t0 = g.exp(z0);
        let t1 = g.exp(z1);
        let s_inv = g.recip_sum(&[t0, t1]);
        let p0 = g.mul(t0, s_inv);
        let root = g.log(p0);
        let v = g.forward(root).unwrap();
        assert!((v - (-(2.0f64).ln())).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn backward_power_rule() {
        let params = ParamVector::flat(vec![3.0]);
        let mut g = Graph::with_params(&params);
        let x = g.param(0);
        let root = g.mul(x, x);
        g.forward(root).unwrap();
        let grad = g.backward(root).unwrap();
        assert_eq!(grad[0], 6.0);
        assert_eq!(g.adjoint(root), 1.0);
    }

    #[test]
    fn backward_product_rule() {
        let params = ParamVector::flat(vec![2.0, 5.0]);
        let mut g = Graph::with_params(&params);
        let root = {
            let a = g.param(0);
            let b = g.param(1);
            g.mul(a, b)
        };
        g.forward(root).unwrap();
        let grad = g.backward(root).unwrap();
        assert_eq!(grad.values(), &[5.0, 2.0]);
    }

    #[test]
    fn backward_before_forward_is_stale() {
        let params = ParamVector::flat(vec![1.0]);
        let mut g = Graph::with_params(&params);
        let x = g.param(0);
        let root = g.mul(x, x);
        assert!(matches!(g.backward(root), Err(Error::StaleGraph)));
    }

    #[test]
    fn forward_overflow_names_op() {
        let params = ParamVector::flat(vec![1000.0]);
        let mut g = Graph::with_params(&params);
        let x = g.param(0);
        let e1 = g.exp(x); // exp(1000) overflows
        let root = g.log(e1);
        match g.forward(root) {
            Err(Error::NumericalOverflow { op, .. }) => assert_eq!(op, "exp"),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn backward_is_bit_deterministic() {
        let params = ParamVector::flat(vec![0.3, -1.2, 2.7]);
        let mut g = Graph::with_params(&params);
        let root = {
            let a = g.param(0);
            let b = g.param(1);
            let c = g.param(2);
            let ab = g.mul(a, b);
            let e = g.exp(c);
            let s = g.add(ab, e);
            let r = g.relu(s);
            let one = g.constant(1.0);
            let shifted = g.add(r, one);
            g.log(shifted)
        };
        g.forward(root).unwrap();
        let g1 = g.backward(root).unwrap();
        g.forward(root).unwrap();
        let g2 = g.backward(root).unwrap();
        for (a, b) in g1.values().iter().zip(g2.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients() {
        let params = ParamVector::flat(vec![0.5, -0.7, 1.3]);
        let build_l1 = |g: &mut Graph| {
            let a = g.param(0);
            let b = g.param(1);
            let ab = g.mul(a, b);
            g.exp(ab)
        };
        let build_l2 = |g: &mut Graph| {
            let b = g.param(1);
            let c = g.param(2);
            let bc = g.mul(b, c);
            let r = g.relu(bc);
            let two = g.constant(2.0);
            g.add(r, two)
        };

        let mut g_sum = Graph::with_params(&params);
        let l1 = build_l1(&mut g_sum);
        let l2 = build_l2(&mut g_sum);
        let root = g_sum.add(l1, l2);
        g_sum.forward(root).unwrap();
        let grad_sum = g_sum.backward(root).unwrap();

        let mut g1 = Graph::with_params(&params);
        let r1 = build_l1(&mut g1);
        g1.forward(r1).unwrap();
        let grad1 = g1.backward(r1).unwrap();

        let mut g2 = Graph::with_params(&params);
        let r2 = build_l2(&mut g2);
        g2.forward(r2).unwrap();
        let grad2 = g2.backward(r2).unwrap();

        for i in 0..params.len() {
            assert!(
                (grad_sum[i] - (grad1[i] + grad2[i])).abs() < 1e-10,
                "coordinate {i}"
            );
        }
    }

    #[test]
    fn grad_check_quadratic_passes_tightly() {
        // f(θ) = Σ (i+1)·θ_i²
        let point = ParamVector::flat(vec![0.7, -1.1, 2.2]);
        let report = grad_check(
            |p| {
                let mut g = Graph::with_params(p);
                let pairs: Vec<_> = (0..p.len())
                    .map(|i| {
                        let x = g.param(i);
                        let sq = g.mul(x, x);
                        let c = g.constant((i + 1) as f64);
                        (sq, c)
                    })
                    .collect();
                let root = g.dot_accumulate(&pairs);
                Ok((g, root))
            },
            &point,
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.pass, "max rel error {}", report.max_rel_error);
        assert!(report.max_rel_error < 1e-6);
        assert!(report.excluded.is_empty());
    }

    #[test]
    fn grad_check_flags_relu_kink_as_excluded() {
        // relu(θ_0) with θ_0 exactly at the kink: excluded, not a failure.
        let point = ParamVector::flat(vec![0.0, 1.0]);
        let report = grad_check(
            |p| {
                let mut g = Graph::with_params(p);
                let a = g.param(0);
                let r = g.relu(a);
                let b = g.param(1);
                let root = g.add(r, b);
                Ok((g, root))
            },
            &point,
            1e-5,
            1e-6,
        )
        .unwrap();
        assert_eq!(report.excluded, vec![0]);
        assert!(report.pass, "smooth coordinate must still pass");
        assert!(!report.coordinates[1].excluded);
    }
}
