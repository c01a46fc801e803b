//! The consolidation penalty: a quadratic form `(λ/2)(θ−θ*)ᵀ I (θ−θ*)` per
//! finished task, its gradient, and the combined training objective
//! `nll + penalty` as one differentiable graph.
//!
//! Multi-task accumulation keeps a separate quadratic term per past task,
//! each anchored at its own converged parameters with its own Fisher
//! estimate; anchors are immutable once created.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamVector};
use crate::error::{Error, Result};
use crate::fisher::{estimate_fisher, FisherConfig, FisherEstimate, FisherPayload};
use crate::model::{Batch, LikelihoodModel, Mlp};
use crate::par;

/// Frozen summary of one finished task: converged parameters, their
/// importance estimate, and the penalty weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAnchor {
    task_id: String,
    theta_star: ParamVector,
    fisher: FisherEstimate,
    lambda: f64,
}

impl TaskAnchor {
    pub fn new(
        task_id: impl Into<String>,
        theta_star: ParamVector,
        fisher: FisherEstimate,
        lambda: f64,
    ) -> Result<Self> {
        if fisher.len() != theta_star.len() {
            return Err(Error::shape(
                "TaskAnchor::new",
                format!("fisher over {} params", theta_star.len()),
                format!("fisher over {} params", fisher.len()),
            ));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(TaskAnchor {
            task_id: task_id.into(),
            theta_star,
            fisher,
            lambda,
        })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn theta_star(&self) -> &ParamVector {
        &self.theta_star
    }

    pub fn fisher(&self) -> &FisherEstimate {
        &self.fisher
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Fisher-weighted distance `√((θ−θ*)ᵀ I (θ−θ*))` from this anchor.
    pub fn fisher_distance(&self, params: &ParamVector) -> Result<f64> {
        self.theta_star
            .check_same_layout(params, "TaskAnchor::fisher_distance")?;
        let d = params.sub(&self.theta_star)?;
        Ok(self.fisher.quadratic_form(d.values()).max(0.0).sqrt())
    }
}

/// Ordered collection of anchors, one per consolidated task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltyLedger {
    anchors: Vec<TaskAnchor>,
}

impl PenaltyLedger {
    pub fn new() -> Self {
        PenaltyLedger::default()
    }

    pub fn push(&mut self, anchor: TaskAnchor) -> Result<()> {
        if self.anchors.iter().any(|a| a.task_id == anchor.task_id) {
            return Err(Error::InvalidInput(format!(
                "duplicate task id in ledger: {}",
                anchor.task_id
            )));
        }
        if let Some(first) = self.anchors.first() {
            first
                .theta_star
                .check_same_layout(&anchor.theta_star, "PenaltyLedger::push")?;
        }
        self.anchors.push(anchor);
        Ok(())
    }

    pub fn anchors(&self) -> &[TaskAnchor] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// `Σ_k (λ_k/2)(θ−θ*_k)ᵀ I_k (θ−θ*_k)`
pub fn penalty(ledger: &PenaltyLedger, params: &ParamVector) -> Result<f64> {
    let mut total = 0.0;
    for anchor in &ledger.anchors {
        if anchor.lambda == 0.0 {
            continue;
        }
        anchor
            .theta_star
            .check_same_layout(params, "ewc::penalty")?;
        let d = params.sub(&anchor.theta_star)?;
        total += 0.5 * anchor.lambda * anchor.fisher.quadratic_form(d.values());
    }
    Ok(total)
}

/// `Σ_k λ_k I_k (θ−θ*_k)`
pub fn penalty_gradient(ledger: &PenaltyLedger, params: &ParamVector) -> Result<ParamVector> {
    let mut grad = ParamVector::zeros(params.layout().clone());
    for anchor in &ledger.anchors {
        if anchor.lambda == 0.0 {
            continue;
        }
        anchor
            .theta_star
            .check_same_layout(params, "ewc::penalty_gradient")?;
        let d = params.sub(&anchor.theta_star)?;
        let fd = anchor.fisher.mat_vec(d.values());
        for (g, v) in grad.values_mut().iter_mut().zip(fd) {
            *g += anchor.lambda * v;
        }
    }
    Ok(grad)
}

/// Append one anchor's quadratic form to `g`, returning the term's root node.
fn anchor_penalty_nodes(g: &mut Graph, anchor: &TaskAnchor) -> NodeId {
    let p = anchor.theta_star.len();
    let diffs: Vec<NodeId> = (0..p)
        .map(|i| {
            let neg_star = g.constant(-anchor.theta_star[i]);
            let theta = g.param(i);
            g.add(theta, neg_star)
        })
        .collect();
    match anchor.fisher.payload() {
        FisherPayload::Diagonal(diag) => {
            let pairs: Vec<(NodeId, NodeId)> = (0..p)
                .map(|i| {
                    let sq = g.mul(diffs[i], diffs[i]);
                    let coeff = g.constant(0.5 * anchor.lambda * diag[i]);
                    (sq, coeff)
                })
                .collect();
            g.dot_accumulate(&pairs)
        }
        FisherPayload::Full { dim, data } => {
            let rows: Vec<NodeId> = (0..*dim)
                .map(|i| {
                    let pairs: Vec<(NodeId, NodeId)> = (0..*dim)
                        .map(|j| {
                            let c = g.constant(data[i * dim + j]);
                            (c, diffs[j])
                        })
                        .collect();
                    g.dot_accumulate(&pairs)
                })
                .collect();
            let quad_pairs: Vec<(NodeId, NodeId)> =
                (0..*dim).map(|i| (rows[i], diffs[i])).collect();
            let quad = g.dot_accumulate(&quad_pairs);
            let half_lambda = g.constant(0.5 * anchor.lambda);
            g.mul(quad, half_lambda)
        }
    }
}

/// `nll_loss + penalty` as one differentiable graph. With an empty ledger (or
/// all-zero λ) this is bit-identical to the plain nll graph: no penalty nodes
/// are emitted at all.
pub fn total_loss(
    model: &Mlp,
    ledger: &PenaltyLedger,
    params: &ParamVector,
    batch: &Batch,
) -> Result<(Graph, NodeId)> {
    for anchor in &ledger.anchors {
        anchor
            .theta_star
            .check_same_layout(params, "ewc::total_loss")?;
    }
    let (mut g, nll_root) = model.nll_loss(params, batch)?;
    let mut root = nll_root;
    for anchor in &ledger.anchors {
        if anchor.lambda == 0.0 {
            continue;
        }
        let term = anchor_penalty_nodes(&mut g, anchor);
        root = g.add(root, term);
    }
    Ok((g, root))
}

/// Freeze `params` as a task anchor: estimate the Fisher information at this
/// point and package it with λ. The gradient norm of the mean NLL is computed
/// and logged as a convergence diagnostic, not enforced.
pub fn consolidate<M: LikelihoodModel>(
    model: &M,
    task_id: impl Into<String>,
    params: &ParamVector,
    batch: &Batch,
    lambda: f64,
    fisher_config: &FisherConfig,
) -> Result<TaskAnchor> {
    let task_id = task_id.into();
    let grad_norm = mean_nll_grad_norm(model, params, batch)?;
    log::info!("consolidating {task_id}: mean-NLL gradient norm {grad_norm:.3e}");
    let fisher = estimate_fisher(model, params, batch, fisher_config)?;
    TaskAnchor::new(task_id, params.clone(), fisher, lambda)
}

fn mean_nll_grad_norm<M: LikelihoodModel>(
    model: &M,
    params: &ParamVector,
    batch: &Batch,
) -> Result<f64> {
    let grads: Vec<Result<ParamVector>> = par::map_indexed(batch.len(), |i| {
        let (input, label) = batch.example(i);
        model.example_nll_gradient(params, input, label)
    });
    let mut mean = ParamVector::zeros(params.layout().clone());
    for g in grads {
        mean.axpy(1.0 / batch.len() as f64, &g?)?;
    }
    Ok(mean.norm())
}
