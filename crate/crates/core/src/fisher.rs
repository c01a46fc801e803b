//! Fisher information estimation from first-order derivatives, and a
//! finite-difference Hessian oracle for validating the outer-product
//! identity `I = E[g gᵀ] = E[-∂²log p/∂θ²]` at the fitted optimum.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamVector;
use crate::error::{Error, Result};
use crate::model::{Batch, BatchLoss, LikelihoodModel};
use crate::par;
use crate::seeds;

/// Full estimates materialize a P×P matrix; refuse beyond this.
pub const FULL_FISHER_MAX_PARAMS: usize = 2000;
/// The Hessian oracle is O(P²) loss evaluations; refuse beyond this.
pub const HESSIAN_ORACLE_MAX_PARAMS: usize = 200;

/// Per-sample gradients are computed in parallel chunks of this size and
/// accumulated sequentially in sample order, keeping results independent of
/// worker count.
const GRAD_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FisherKind {
    Diagonal,
    Full,
}

/// Where the labels in `E[g gᵀ]` come from: drawn from the model's own
/// predictive distribution (the true Fisher) or taken from the dataset
/// (the cheaper empirical variant).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FisherSource {
    ModelSampled,
    LabelEmpirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FisherPayload {
    Diagonal(Vec<f64>),
    /// Row-major P×P matrix.
    Full { dim: usize, data: Vec<f64> },
}

/// Average of per-example gradient outer products (or their diagonals):
/// the parameter-importance estimate for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherEstimate {
    payload: FisherPayload,
    sample_count: usize,
    source: FisherSource,
}

impl FisherEstimate {
    /// Assemble an estimate from raw parts (test injection, identity anchors,
    /// checkpoint loading). No positivity validation is performed here;
    /// that is `validate_psd`'s job.
    pub fn from_payload(payload: FisherPayload, sample_count: usize, source: FisherSource) -> Self {
        FisherEstimate {
            payload,
            sample_count,
            source,
        }
    }

    /// Diagonal estimate with every entry equal to `value` — the "identity
    /// importance" used by stringent L2 anchoring.
    pub fn uniform_diagonal(len: usize, value: f64) -> Self {
        FisherEstimate {
            payload: FisherPayload::Diagonal(vec![value; len]),
            sample_count: 1,
            source: FisherSource::LabelEmpirical,
        }
    }

    pub fn kind(&self) -> FisherKind {
        match self.payload {
            FisherPayload::Diagonal(_) => FisherKind::Diagonal,
            FisherPayload::Full { .. } => FisherKind::Full,
        }
    }

    pub fn payload(&self) -> &FisherPayload {
        &self.payload
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn source(&self) -> FisherSource {
        self.source
    }

    /// Number of parameters covered.
    pub fn len(&self) -> usize {
        match &self.payload {
            FisherPayload::Diagonal(d) => d.len(),
            FisherPayload::Full { dim, .. } => *dim,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Diagonal entries: the stored diagonal, or the diagonal of the full matrix.
    pub fn diagonal(&self) -> Vec<f64> {
        match &self.payload {
            FisherPayload::Diagonal(d) => d.clone(),
            FisherPayload::Full { dim, data } => (0..*dim).map(|i| data[i * dim + i]).collect(),
        }
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        match &self.payload {
            FisherPayload::Diagonal(d) => {
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.clone()))
            }
            FisherPayload::Full { dim, data } => DMatrix::from_row_slice(*dim, *dim, data),
        }
    }

    /// `dᵀ I d`
    pub fn quadratic_form(&self, d: &[f64]) -> f64 {
        match &self.payload {
            FisherPayload::Diagonal(diag) => diag.iter().zip(d).map(|(f, x)| f * x * x).sum(),
            FisherPayload::Full { dim, data } => {
                let mut total = 0.0;
                for i in 0..*dim {
                    let row = &data[i * dim..(i + 1) * dim];
                    let mut s = 0.0;
                    for (j, &x) in d.iter().enumerate() {
                        s += row[j] * x;
                    }
                    total += d[i] * s;
                }
                total
            }
        }
    }

    /// `I d`
    pub fn mat_vec(&self, d: &[f64]) -> Vec<f64> {
        match &self.payload {
            FisherPayload::Diagonal(diag) => diag.iter().zip(d).map(|(f, x)| f * x).collect(),
            FisherPayload::Full { dim, data } => (0..*dim)
                .map(|i| {
                    let row = &data[i * dim..(i + 1) * dim];
                    row.iter().zip(d).map(|(a, x)| a * x).sum()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FisherConfig {
    pub kind: FisherKind,
    pub source: FisherSource,
    pub sample_count: usize,
    pub seed: u64,
}

fn sample_class(probs: &[f64], seed: u64, sample_index: u64) -> usize {
    let mut rng = seeds::rng_stream(seed, sample_index);
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (c, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return c;
        }
    }
    probs.len() - 1
}

/// Average `g ⊙ g` (diagonal) or `g gᵀ` (full) over `sample_count` per-example
/// gradients of `-log p(y|x,θ)`. Examples cycle through the batch; labels come
/// from the model's predictive distribution or from the dataset depending on
/// `source`. Deterministic for a given seed regardless of worker count.
pub fn estimate_fisher<M: LikelihoodModel>(
    model: &M,
    params: &ParamVector,
    batch: &Batch,
    config: &FisherConfig,
) -> Result<FisherEstimate> {
    if batch.is_empty() {
        return Err(Error::InvalidInput(
            "fisher estimation needs a non-empty batch".into(),
        ));
    }
    if config.sample_count == 0 {
        return Err(Error::InvalidInput("fisher sample_count must be >= 1".into()));
    }
    let p = params.len();
    if config.kind == FisherKind::Full && p > FULL_FISHER_MAX_PARAMS {
        return Err(Error::Capacity {
            what: "full Fisher estimate",
            limit: FULL_FISHER_MAX_PARAMS,
            got: p,
        });
    }

    let n = batch.len();
    let mut diag = vec![0.0; p];
    let mut full = match config.kind {
        FisherKind::Full => Some(DMatrix::<f64>::zeros(p, p)),
        FisherKind::Diagonal => None,
    };

    let mut start = 0;
    while start < config.sample_count {
        let m = GRAD_CHUNK.min(config.sample_count - start);
        let grads: Vec<Result<ParamVector>> = par::map_indexed(m, |k| {
            let s = start + k;
            let (input, data_label) = batch.example(s % n);
            let label = match config.source {
                FisherSource::LabelEmpirical => data_label,
                FisherSource::ModelSampled => {
                    let probs = model.class_probabilities(params, input)?;
                    sample_class(&probs, config.seed, s as u64)
                }
            };
            model.example_nll_gradient(params, input, label)
        });
        for g in grads {
            let g = g?;
            match &mut full {
                None => {
                    for (acc, &gi) in diag.iter_mut().zip(g.values()) {
                        *acc += gi * gi;
                    }
                }
                Some(mat) => {
                    let gv = g.values();
                    for i in 0..p {
                        let gi = gv[i];
                        for j in 0..p {
                            mat[(i, j)] += gi * gv[j];
                        }
                    }
                }
            }
        }
        start += m;
    }

    let scale = 1.0 / config.sample_count as f64;
    let payload = match full {
        None => {
            for v in &mut diag {
                *v *= scale;
            }
            FisherPayload::Diagonal(diag)
        }
        Some(mut mat) => {
            mat *= scale;
            let mut data = Vec::with_capacity(p * p);
            for i in 0..p {
                for j in 0..p {
                    data.push(mat[(i, j)]);
                }
            }
            FisherPayload::Full { dim: p, data }
        }
    };
    Ok(FisherEstimate {
        payload,
        sample_count: config.sample_count,
        source: config.source,
    })
}

/// Central-difference Hessian of the mean NLL.
#[derive(Debug, Clone)]
pub struct HessianEstimate {
    dim: usize,
    data: Vec<f64>, // row-major
    step: f64,
}

impl HessianEstimate {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }
}

/// Four-point central differences
/// `(f(+i+j) − f(+i−j) − f(−i+j) + f(−i−j)) / 4h²` for every pair, then
/// symmetrization. O(P²) loss evaluations; guarded at `P ≤ 200`.
pub fn hessian_oracle<M: BatchLoss>(
    model: &M,
    params: &ParamVector,
    batch: &Batch,
    step: f64,
) -> Result<HessianEstimate> {
    if step <= 0.0 {
        return Err(Error::InvalidInput("hessian step must be > 0".into()));
    }
    let p = params.len();
    if p > HESSIAN_ORACLE_MAX_PARAMS {
        return Err(Error::Capacity {
            what: "finite-difference Hessian oracle",
            limit: HESSIAN_ORACLE_MAX_PARAMS,
            got: p,
        });
    }

    let pairs: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| (i..p).map(move |j| (i, j)))
        .collect();

    let entries: Vec<Result<f64>> = par::map_slice(&pairs, |&(i, j)| {
        let eval = |si: f64, sj: f64| -> Result<f64> {
            let mut theta = params.clone();
            theta[i] += si * step;
            theta[j] += sj * step;
            model.mean_nll(&theta, batch)
        };
        let fpp = eval(1.0, 1.0)?;
        let fpm = eval(1.0, -1.0)?;
        let fmp = eval(-1.0, 1.0)?;
        let fmm = eval(-1.0, -1.0)?;
        Ok((fpp - fpm - fmp + fmm) / (4.0 * step * step))
    });

    let mut data = vec![0.0; p * p];
    for (&(i, j), entry) in pairs.iter().zip(entries) {
        let v = entry?;
        data[i * p + j] = v;
        data[j * p + i] = v;
    }
    // Symmetrize; a no-op for this stencil but kept as the documented contract.
    for i in 0..p {
        for j in i + 1..p {
            let m = 0.5 * (data[i * p + j] + data[j * p + i]);
            data[i * p + j] = m;
            data[j * p + i] = m;
        }
    }
    Ok(HessianEstimate { dim: p, data, step })
}

/// PSD validation report for a Fisher estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PsdReport {
    pub symmetric: bool,
    pub min_eigenvalue: f64,
    pub pass: bool,
}

/// For diagonal estimates: pass iff all entries are ≥ 0. For full estimates:
/// pass iff symmetric within 1e-10 and the minimum eigenvalue (after
/// symmetrization) is ≥ −1e-8.
pub fn validate_psd(estimate: &FisherEstimate) -> PsdReport {
    match estimate.payload() {
        FisherPayload::Diagonal(d) => {
            let min = if d.is_empty() {
                0.0
            } else {
                d.iter().copied().fold(f64::INFINITY, f64::min)
            };
            PsdReport {
                symmetric: true,
                min_eigenvalue: min,
                pass: min >= 0.0,
            }
        }
        FisherPayload::Full { dim, data } => {
            let p = *dim;
            let mut sym_err = 0.0f64;
            let mut max_abs = 0.0f64;
            for i in 0..p {
                for j in 0..p {
                    max_abs = max_abs.max(data[i * p + j].abs());
                    sym_err = sym_err.max((data[i * p + j] - data[j * p + i]).abs());
                }
            }
            let symmetric = sym_err <= 1e-10 * max_abs.max(1.0);
            let m = DMatrix::from_row_slice(p, p, data);
            let sym = (&m + m.transpose()) * 0.5;
            let min_eigenvalue = sym
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            PsdReport {
                symmetric,
                min_eigenvalue,
                pass: symmetric && min_eigenvalue >= -1e-8,
            }
        }
    }
}

/// `‖A − B‖_F / ‖B‖_F`
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
