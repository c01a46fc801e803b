//! Gaussian (Laplace) approximation of low-dimensional posteriors and an
//! exhaustive grid oracle to quantify its fidelity.
//!
//! The grid oracle is deliberately limited to one or two parameters: it
//! integrates the posterior by trapezoid quadrature, which stops being an
//! oracle in higher dimensions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::Batch;
use crate::par;

/// Models exposing a joint log-likelihood over a dataset, the surface the
/// posterior machinery needs. Data conventions are model-specific: Gaussian
/// observations live in `inputs[i][0]`, Bernoulli outcomes in `labels`.
pub trait PosteriorModel: Sync {
    fn param_count(&self) -> usize;
    fn log_likelihood(&self, params: &[f64], data: &Batch) -> f64;
    fn log_likelihood_grad(&self, params: &[f64], data: &Batch) -> Vec<f64>;
}

/// Parameter prior; the weakly informative default is `N(0, 10²·I)`.
#[derive(Debug, Clone)]
pub enum Prior {
    Flat,
    /// Independent Gaussian per dimension.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl Prior {
    pub fn weakly_informative(k: usize) -> Prior {
        Prior::Gaussian {
            mean: vec![0.0; k],
            std: vec![10.0; k],
        }
    }

    pub fn standard_normal(k: usize) -> Prior {
        Prior::Gaussian {
            mean: vec![0.0; k],
            std: vec![1.0; k],
        }
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        match self {
            Prior::Flat => 0.0,
            Prior::Gaussian { mean, std } => theta
                .iter()
                .zip(mean.iter().zip(std))
                .map(|(&t, (&m, &s))| {
                    let z = (t - m) / s;
                    -0.5 * z * z - (s * (2.0 * std::f64::consts::PI).sqrt()).ln()
                })
                .sum(),
        }
    }

    pub fn grad(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            Prior::Flat => vec![0.0; theta.len()],
            Prior::Gaussian { mean, std } => theta
                .iter()
                .zip(mean.iter().zip(std))
                .map(|(&t, (&m, &s))| -(t - m) / (s * s))
                .collect(),
        }
    }
}

fn log_posterior<M: PosteriorModel>(model: &M, data: &Batch, prior: &Prior, theta: &[f64]) -> f64 {
    model.log_likelihood(theta, data) + prior.log_density(theta)
}

fn log_posterior_grad<M: PosteriorModel>(
    model: &M,
    data: &Batch,
    prior: &Prior,
    theta: &[f64],
) -> Vec<f64> {
    let mut g = model.log_likelihood_grad(theta, data);
    for (gi, pi) in g.iter_mut().zip(prior.grad(theta)) {
        *gi += pi;
    }
    g
}

/// Densities of the exact posterior on a regular grid, normalized so the
/// trapezoid integral is 1.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    bounds: Vec<(f64, f64)>,
    resolution: usize,
    axes: Vec<Vec<f64>>,
    log_density: Vec<f64>,
    density: Vec<f64>,
    weights: Vec<f64>,
    mode_index: Vec<usize>,
}

impl GridPosterior {
    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn log_density(&self) -> &[f64] {
        &self.log_density
    }

    /// Coordinates of the flattened grid point `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        match self.dims() {
            1 => vec![self.axes[0][idx]],
            _ => {
                let (i, j) = (idx / self.resolution, idx % self.resolution);
                vec![self.axes[0][i], self.axes[1][j]]
            }
        }
    }

    pub fn point_count(&self) -> usize {
        self.density.len()
    }

    /// Trapezoid integral of the density; 1 by construction up to rounding.
    pub fn integral(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.density)
            .map(|(w, p)| w * p)
            .sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let k = self.dims();
        let mut mean = vec![0.0; k];
        for idx in 0..self.point_count() {
            let wp = self.weights[idx] * self.density[idx];
            for (d, x) in self.point(idx).into_iter().enumerate() {
                mean[d] += wp * x;
            }
        }
        mean
    }

    /// Marginal variances per dimension.
    pub fn variance(&self) -> Vec<f64> {
        let mean = self.mean();
        let k = self.dims();
        let mut var = vec![0.0; k];
        for idx in 0..self.point_count() {
            let wp = self.weights[idx] * self.density[idx];
            for (d, x) in self.point(idx).into_iter().enumerate() {
                var[d] += wp * (x - mean[d]) * (x - mean[d]);
            }
        }
        var
    }

    /// Grid point of maximum density.
    pub fn mode(&self) -> Vec<f64> {
        self.mode_index
            .iter()
            .enumerate()
            .map(|(d, &i)| self.axes[d][i])
            .collect()
    }
}

/// Gaussian posterior approximation `N(mean, precision⁻¹)`.
#[derive(Debug, Clone)]
pub struct LaplaceFit {
    mean: Vec<f64>,
    precision: DMatrix<f64>,
}

impl LaplaceFit {
    /// Assemble a fit from known mean and precision; the precision must be
    /// symmetric positive definite.
    pub fn new(mean: Vec<f64>, precision: DMatrix<f64>) -> Result<Self> {
        if precision.nrows() != mean.len() || precision.ncols() != mean.len() {
            return Err(Error::shape(
                "LaplaceFit::new",
                format!("{0}×{0} precision", mean.len()),
                format!("{}×{}", precision.nrows(), precision.ncols()),
            ));
        }
        let min_eig = precision
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig <= 0.0 {
            return Err(Error::SaddleOrFlat {
                min_eigenvalue: min_eig,
            });
        }
        Ok(LaplaceFit { mean, precision })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// `(θ-μ)ᵀ Λ (θ-μ)`
    pub fn mahalanobis_sq(&self, theta: &[f64]) -> f64 {
        let k = self.mean.len();
        let d: Vec<f64> = theta.iter().zip(&self.mean).map(|(t, m)| t - m).collect();
        let mut q = 0.0;
        for i in 0..k {
            for j in 0..k {
                q += d[i] * self.precision[(i, j)] * d[j];
            }
        }
        q
    }

    /// Normalized Gaussian log-density at `theta`.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let k = self.mean.len() as f64;
        let det = self.precision.clone().determinant();
        -0.5 * k * (2.0 * std::f64::consts::PI).ln() + 0.5 * det.ln()
            - 0.5 * self.mahalanobis_sq(theta)
    }

    pub fn density(&self, theta: &[f64]) -> f64 {
        self.log_density(theta).exp()
    }
}

const GRID_MAX_PARAMS: usize = 2;
const GRID_MIN_RESOLUTION: usize = 201;
const SIGMA_COVERAGE: f64 = 6.0;

/// Evaluate `log-likelihood + log-prior` on a regular grid and normalize by
/// log-sum-exp so the trapezoid integral of the density is 1.
///
/// Fails with a bounds error when the mode lands on the grid edge or when the
/// grid covers less than six posterior standard deviations on either side of
/// the mode.
pub fn grid_posterior<M: PosteriorModel>(
    model: &M,
    data: &Batch,
    prior: &Prior,
    bounds: &[(f64, f64)],
    resolution: usize,
) -> Result<GridPosterior> {
    let k = model.param_count();
    if k == 0 || k > GRID_MAX_PARAMS {
        return Err(Error::Capacity {
            what: "grid posterior",
            limit: GRID_MAX_PARAMS,
            got: k,
        });
    }
    if bounds.len() != k {
        return Err(Error::shape(
            "grid_posterior",
            format!("{k} bound pairs"),
            format!("{}", bounds.len()),
        ));
    }
    if resolution < GRID_MIN_RESOLUTION {
        return Err(Error::InvalidInput(format!(
            "grid resolution must be >= {GRID_MIN_RESOLUTION} points per dimension, got {resolution}"
        )));
    }
    for &(lo, hi) in bounds {
        if !(lo < hi) {
            return Err(Error::InvalidInput(format!("bad grid bounds ({lo}, {hi})")));
        }
    }

    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(lo, hi)| {
            let h = (hi - lo) / (resolution - 1) as f64;
            (0..resolution).map(|i| lo + i as f64 * h).collect()
        })
        .collect();
    let axis_weights: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(lo, hi)| {
            let h = (hi - lo) / (resolution - 1) as f64;
            (0..resolution)
                .map(|i| if i == 0 || i == resolution - 1 { h / 2.0 } else { h })
                .collect()
        })
        .collect();

    let total = resolution.pow(k as u32);
    let coords = |idx: usize| -> Vec<f64> {
        match k {
            1 => vec![axes[0][idx]],
            _ => vec![axes[0][idx / resolution], axes[1][idx % resolution]],
        }
    };
    let log_raw: Vec<f64> =
        par::map_indexed(total, |idx| log_posterior(model, data, prior, &coords(idx)));
    if log_raw.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput(
            "log posterior evaluated to NaN on the grid".into(),
        ));
    }
    let weights: Vec<f64> = (0..total)
        .map(|idx| match k {
            1 => axis_weights[0][idx],
            _ => axis_weights[0][idx / resolution] * axis_weights[1][idx % resolution],
        })
        .collect();

    // log Z = logsumexp(log p_i + log w_i)
    let max_lw = log_raw
        .iter()
        .zip(&weights)
        .map(|(lp, w)| lp + w.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let log_z = max_lw
        + log_raw
            .iter()
            .zip(&weights)
            .map(|(lp, w)| (lp + w.ln() - max_lw).exp())
            .sum::<f64>()
            .ln();

    let log_density: Vec<f64> = log_raw.iter().map(|lp| lp - log_z).collect();
    let density: Vec<f64> = log_density.iter().map(|l| l.exp()).collect();

    let mode_flat = crate::model::argmax(&density);
    let mode_index: Vec<usize> = match k {
        1 => vec![mode_flat],
        _ => vec![mode_flat / resolution, mode_flat % resolution],
    };
    for (d, &i) in mode_index.iter().enumerate() {
        if i == 0 || i == resolution - 1 {
            return Err(Error::BoundsTooTight(format!(
                "posterior mode sits on the grid boundary of dimension {d}"
            )));
        }
    }

    let grid = GridPosterior {
        bounds: bounds.to_vec(),
        resolution,
        axes,
        log_density,
        density,
        weights,
        mode_index,
    };

    let mode = grid.mode();
    let sd: Vec<f64> = grid.variance().iter().map(|v| v.sqrt()).collect();
    for d in 0..k {
        let (lo, hi) = grid.bounds[d];
        if mode[d] - SIGMA_COVERAGE * sd[d] < lo || mode[d] + SIGMA_COVERAGE * sd[d] > hi {
            return Err(Error::BoundsTooTight(format!(
                "grid must cover {SIGMA_COVERAGE} posterior standard deviations each side of the \
                 mode in dimension {d} (mode {:.4}, sd {:.4}, bounds [{lo}, {hi}])",
                mode[d], sd[d]
            )));
        }
    }
    Ok(grid)
}

const MAP_MAX_STEPS: usize = 100_000;
const MAP_GRAD_TOL: f64 = 1e-8;
const PRECISION_FD_STEP: f64 = 1e-5;

/// MAP by gradient ascent with backtracking line search, then precision from
/// central finite differences of the log-posterior gradient at the mode
/// (step 1e-5), symmetrized and negated.
pub fn fit_laplace<M: PosteriorModel>(
    model: &M,
    data: &Batch,
    prior: &Prior,
    init: &[f64],
) -> Result<LaplaceFit> {
    let k = model.param_count();
    if k == 0 || k > GRID_MAX_PARAMS {
        return Err(Error::Capacity {
            what: "laplace fit",
            limit: GRID_MAX_PARAMS,
            got: k,
        });
    }
    if init.len() != k {
        return Err(Error::shape(
            "fit_laplace",
            format!("{k} params"),
            format!("{}", init.len()),
        ));
    }

    let mut theta = init.to_vec();
    let mut converged = false;
    for _ in 0..MAP_MAX_STEPS {
        let g = log_posterior_grad(model, data, prior, &theta);
        let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if grad_norm < MAP_GRAD_TOL {
            converged = true;
            break;
        }
        let f0 = log_posterior(model, data, prior, &theta);
        let mut t = 1.0;
        let mut advanced = false;
        // The Armijo improvement floor of a few ulps of |f0| stops float
        // jitter from certifying steps whose true gain is sub-resolution.
        let armijo_floor = 1e-13 * f0.abs().max(1.0);
        while t >= 1e-18 {
            let cand: Vec<f64> = theta.iter().zip(&g).map(|(x, gi)| x + t * gi).collect();
            let f1 = log_posterior(model, data, prior, &cand);
            if f1 > f0 + (1e-4 * t * grad_norm * grad_norm).max(armijo_floor) {
                theta = cand;
                advanced = true;
                break;
            }
            // Near the mode the Armijo improvement drops below float
            // resolution of f while the gradient is still resolvable;
            // certify the step by gradient decrease instead.
            if f1 >= f0 - 1e-12 * f0.abs().max(1.0) {
                let g1 = log_posterior_grad(model, data, prior, &cand);
                let gn1 = g1.iter().map(|v| v * v).sum::<f64>().sqrt();
                if gn1 < grad_norm * 0.999 {
                    theta = cand;
                    advanced = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !advanced {
            break; // stuck at float resolution; final gradient check decides
        }
    }
    if !converged {
        let g = log_posterior_grad(model, data, prior, &theta);
        let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if grad_norm >= MAP_GRAD_TOL {
            return Err(Error::OptimizationFailure {
                steps: MAP_MAX_STEPS,
                grad_norm,
            });
        }
    }

    // Hessian of the log posterior via FD of the gradient.
    let h = PRECISION_FD_STEP;
    let mut hess = DMatrix::zeros(k, k);
    for j in 0..k {
        let mut plus = theta.clone();
        plus[j] += h;
        let mut minus = theta.clone();
        minus[j] -= h;
        let gp = log_posterior_grad(model, data, prior, &plus);
        let gm = log_posterior_grad(model, data, prior, &minus);
        for i in 0..k {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let precision = -(hess.clone() + hess.transpose()) * 0.5;
    let min_eig = precision
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig <= 0.0 {
        return Err(Error::SaddleOrFlat {
            min_eigenvalue: min_eig,
        });
    }

    Ok(LaplaceFit {
        mean: theta,
        precision,
    })
}

/// `KL(grid ‖ Gaussian)` by trapezoid quadrature. Clamped at 0 against
/// quadrature rounding.
pub fn kl_grid_vs_laplace(truth: &GridPosterior, fit: &LaplaceFit) -> Result<f64> {
    if fit.mean.len() != truth.dims() {
        return Err(Error::shape(
            "kl_grid_vs_laplace",
            format!("{} dims", truth.dims()),
            format!("{}", fit.mean.len()),
        ));
    }
    for (d, &(lo, hi)) in truth.bounds.iter().enumerate() {
        if fit.mean[d] < lo || fit.mean[d] > hi {
            return Err(Error::InvalidInput(format!(
                "laplace mean {} lies outside grid bounds [{lo}, {hi}] in dimension {d}",
                fit.mean[d]
            )));
        }
    }
    let mut kl = 0.0;
    for idx in 0..truth.point_count() {
        let p = truth.density[idx];
        if p == 0.0 {
            continue;
        }
        let lq = fit.log_density(&truth.point(idx));
        kl += truth.weights[idx] * p * (truth.log_density[idx] - lq);
    }
    Ok(kl.max(0.0))
}

/// `|log p(θ) − log p(mode) + ½ (θ−mode)ᵀ Λ (θ−mode)|` — the magnitude of the
/// Taylor terms the quadratic approximation drops at `theta`.
pub fn quadratic_residual_at<M: PosteriorModel>(
    model: &M,
    data: &Batch,
    prior: &Prior,
    fit: &LaplaceFit,
    theta: &[f64],
) -> f64 {
    let delta =
        log_posterior(model, data, prior, theta) - log_posterior(model, data, prior, &fit.mean);
    (delta + 0.5 * fit.mahalanobis_sq(theta)).abs()
}

/// Maximum quadratic residual over a deterministic sample of points within
/// `radius` in precision-whitened coordinates (so "radius" is comparable
/// across anisotropic precisions).
pub fn taylor_residual<M: PosteriorModel>(
    model: &M,
    data: &Batch,
    prior: &Prior,
    fit: &LaplaceFit,
    radius: f64,
) -> Result<f64> {
    if radius <= 0.0 {
        return Err(Error::InvalidInput(
            "taylor_residual radius must be > 0".into(),
        ));
    }
    let k = fit.mean.len();

    // Λ = L Lᵀ; whitened offset w maps to θ-space as d = L⁻ᵀ w.
    let chol = fit.precision.clone().cholesky().ok_or(Error::SaddleOrFlat {
        min_eigenvalue: f64::NAN,
    })?;
    let l = chol.l();
    let unwhiten = |w: &[f64]| -> Vec<f64> {
        // Solve Lᵀ d = w (upper triangular, k ≤ 2).
        let mut d = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = w[i];
            for j in i + 1..k {
                s -= l[(j, i)] * d[j];
            }
            d[i] = s / l[(i, i)];
        }
        d
    };

    let directions: Vec<Vec<f64>> = match k {
        1 => vec![vec![1.0], vec![-1.0]],
        _ => (0..16)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / 16.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
    };
    let fractions = [0.25, 0.5, 0.75, 1.0];

    let mut max_res = 0.0f64;
    for dir in &directions {
        for &frac in &fractions {
            let w: Vec<f64> = dir.iter().map(|c| c * frac * radius).collect();
            let d = unwhiten(&w);
            let theta: Vec<f64> = fit.mean.iter().zip(&d).map(|(m, di)| m + di).collect();
            max_res = max_res.max(quadratic_residual_at(model, data, prior, fit, &theta));
        }
    }
    Ok(max_res)
}

/// Dump `(grid point, posterior density, Gaussian density)` rows as CSV for
/// external plotting.
pub fn write_comparison_csv<W: std::io::Write>(
    grid: &GridPosterior,
    fit: &LaplaceFit,
    out: &mut W,
) -> std::io::Result<()> {
    match grid.dims() {
        1 => writeln!(out, "theta,posterior,laplace")?,
        _ => writeln!(out, "theta0,theta1,posterior,laplace")?,
    }
    for idx in 0..grid.point_count() {
        let point = grid.point(idx);
        let coords: Vec<String> = point.iter().map(|x| format!("{x}")).collect();
        writeln!(
            out,
            "{},{},{}",
            coords.join(","),
            grid.density[idx],
            fit.density(&point)
        )?;
    }
    Ok(())
}

// ─── Tiny oracle models ───────────────────────────────────────────────

/// Observations `y_i ~ N(θ, noise_variance)` with `y` in `inputs[i][0]`.
/// Conjugate with a Gaussian prior, giving closed-form posterior moments.
#[derive(Debug, Clone)]
pub struct GaussianMeanModel {
    pub noise_variance: f64,
}

impl PosteriorModel for GaussianMeanModel {
    fn param_count(&self) -> usize {
        1
    }

    fn log_likelihood(&self, params: &[f64], data: &Batch) -> f64 {
        let v = self.noise_variance;
        let norm = -0.5 * (2.0 * std::f64::consts::PI * v).ln();
        data.inputs()
            .iter()
            .map(|row| {
                let r = row[0] - params[0];
                norm - r * r / (2.0 * v)
            })
            .sum()
    }

    fn log_likelihood_grad(&self, params: &[f64], data: &Batch) -> Vec<f64> {
        let s: f64 = data.inputs().iter().map(|row| row[0] - params[0]).sum();
        vec![s / self.noise_variance]
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Bernoulli outcomes in `labels` with `p(y=1) = σ(θ)`; inputs ignored.
/// With a flat prior the MAP is `logit(k/n)`.
#[derive(Debug, Clone)]
pub struct BernoulliLogitModel;

impl PosteriorModel for BernoulliLogitModel {
    fn param_count(&self) -> usize {
        1
    }

    fn log_likelihood(&self, params: &[f64], data: &Batch) -> f64 {
        let successes = data.labels().iter().filter(|&&y| y == 1).count() as f64;
        let n = data.len() as f64;
        successes * params[0] - n * softplus(params[0])
    }

    fn log_likelihood_grad(&self, params: &[f64], data: &Batch) -> Vec<f64> {
        let successes = data.labels().iter().filter(|&&y| y == 1).count() as f64;
        let n = data.len() as f64;
        vec![successes - n * sigmoid(params[0])]
    }
}

/// Two-parameter logistic regression `p(y=1|x) = σ(w·x + b)` with scalar `x`
/// in `inputs[i][0]`; a smooth non-Gaussian 2-D posterior for grid tests.
#[derive(Debug, Clone)]
pub struct LogisticPosteriorModel;

impl PosteriorModel for LogisticPosteriorModel {
    fn param_count(&self) -> usize {
        2
    }

    fn log_likelihood(&self, params: &[f64], data: &Batch) -> f64 {
        let (w, b) = (params[0], params[1]);
        data.inputs()
            .iter()
            .zip(data.labels())
            .map(|(row, &y)| {
                let z = w * row[0] + b;
                if y == 1 {
                    -softplus(-z)
                } else {
                    -softplus(z)
                }
            })
            .sum()
    }

    fn log_likelihood_grad(&self, params: &[f64], data: &Batch) -> Vec<f64> {
        let (w, b) = (params[0], params[1]);
        let mut g = vec![0.0; 2];
        for (row, &y) in data.inputs().iter().zip(data.labels()) {
            let z = w * row[0] + b;
            let r = y as f64 - sigmoid(z);
            g[0] += r * row[0];
            g[1] += r;
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Conjugate worked example: y ~ N(θ,1), four observations summing to 8,
    /// prior N(0,1) → posterior N(1.6, 1/5).
    fn conjugate_setup() -> (GaussianMeanModel, Batch, Prior) {
        let model = GaussianMeanModel { noise_variance: 1.0 };
        let data = Batch::new(vec![vec![2.0]; 4], vec![0; 4]).unwrap();
        (model, data, Prior::standard_normal(1))
    }

    fn bernoulli_data(successes: usize, n: usize) -> Batch {
        let labels: Vec<usize> = (0..n).map(|i| usize::from(i < successes)).collect();
        Batch::new(vec![vec![1.0]; n], labels).unwrap()
    }

    #[test]
    fn conjugate_grid_recovers_closed_form_moments() {
        let (model, data, prior) = conjugate_setup();
        let grid = grid_posterior(&model, &data, &prior, &[(-2.5, 5.7)], 801).unwrap();
        assert!((grid.integral() - 1.0).abs() < 1e-6);
        assert!((grid.mean()[0] - 1.6).abs() < 1e-3, "mean {}", grid.mean()[0]);
        assert!(
            (grid.variance()[0] - 0.2).abs() < 1e-3,
            "var {}",
            grid.variance()[0]
        );
        assert!(grid.density().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn flat_likelihood_leaves_the_prior() {
        struct FlatModel;
        impl PosteriorModel for FlatModel {
            fn param_count(&self) -> usize {
                1
            }
            fn log_likelihood(&self, _p: &[f64], _d: &Batch) -> f64 {
                0.0
            }
            fn log_likelihood_grad(&self, _p: &[f64], _d: &Batch) -> Vec<f64> {
                vec![0.0]
            }
        }
        let data = Batch::new(vec![vec![0.0]], vec![0]).unwrap();
        let prior = Prior::Gaussian {
            mean: vec![0.7],
            std: vec![1.0],
        };
        let grid = grid_posterior(&FlatModel, &data, &prior, &[(-7.0, 8.4)], 801).unwrap();
        assert!((grid.mean()[0] - 0.7).abs() < 1e-6);
        assert!((grid.variance()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mode_on_boundary_is_a_bounds_error() {
        let (model, data, prior) = conjugate_setup();
        let err = grid_posterior(&model, &data, &prior, &[(2.0, 6.0)], 401).unwrap_err();
        assert!(matches!(err, Error::BoundsTooTight(_)), "{err}");
    }

    #[test]
    fn narrow_coverage_is_a_bounds_error() {
        let (model, data, prior) = conjugate_setup();
        // sd ≈ 0.447; ±1 around the mode covers barely 2σ.
        let err = grid_posterior(&model, &data, &prior, &[(0.6, 2.6)], 401).unwrap_err();
        assert!(matches!(err, Error::BoundsTooTight(_)), "{err}");
    }

    #[test]
    fn conjugate_laplace_is_exact() {
        let (model, data, prior) = conjugate_setup();
        let fit = fit_laplace(&model, &data, &prior, &[0.0]).unwrap();
        assert!((fit.mean()[0] - 1.6).abs() < 1e-8, "mean {}", fit.mean()[0]);
        assert!(
            (fit.precision()[(0, 0)] - 5.0).abs() < 1e-8,
            "precision {}",
            fit.precision()[(0, 0)]
        );
        let grid = grid_posterior(&model, &data, &prior, &[(-2.5, 5.7)], 801).unwrap();
        let kl = kl_grid_vs_laplace(&grid, &fit).unwrap();
        assert!(kl < 1e-8, "KL {kl}");
    }

    #[test]
    fn stationarity_holds_at_the_returned_mean() {
        let (model, data, prior) = conjugate_setup();
        let fit = fit_laplace(&model, &data, &prior, &[-3.0]).unwrap();
        let g = log_posterior_grad(&model, &data, &prior, fit.mean());
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-8, "gradient norm {norm}");
    }

    #[test]
    fn bernoulli_map_is_logit_of_frequency() {
        let model = BernoulliLogitModel;
        let data = bernoulli_data(7, 10);
        let fit = fit_laplace(&model, &data, &Prior::Flat, &[0.0]).unwrap();
        let expected = (7.0f64 / 3.0).ln();
        assert!(
            (fit.mean()[0] - expected).abs() < 1e-8,
            "mode {} want {expected}",
            fit.mean()[0]
        );
    }

    #[test]
    fn kl_decreases_with_sample_size() {
        let model = BernoulliLogitModel;
        let mode = (7.0f64 / 3.0).ln();
        let mut kls = Vec::new();
        for n in [10usize, 100, 1000] {
            let data = bernoulli_data(7 * n / 10, n);
            let fit = fit_laplace(&model, &data, &Prior::Flat, &[0.0]).unwrap();
            let sd = (1.0 / fit.precision()[(0, 0)]).sqrt();
            let bounds = (mode - 9.0 * sd, mode + 9.0 * sd);
            let grid = grid_posterior(&model, &data, &Prior::Flat, &[bounds], 2001).unwrap();
            kls.push(kl_grid_vs_laplace(&grid, &fit).unwrap());
        }
        assert!(kls[0] > kls[1] && kls[1] > kls[2], "KL sequence {kls:?}");
        assert!(kls.iter().all(|&k| k >= 0.0));
    }

    #[test]
    fn bimodal_posterior_converges_to_one_mode_with_large_kl() {
        // Double-well log-likelihood −4(θ²−1)²: symmetric modes at ±1. The
        // Laplace fit covers only the mode it reaches; the KL against the
        // two-bump grid is necessarily large. Known limitation, asserted.
        struct DoubleWell;
        impl PosteriorModel for DoubleWell {
            fn param_count(&self) -> usize {
                1
            }
            fn log_likelihood(&self, p: &[f64], _d: &Batch) -> f64 {
                let t = p[0] * p[0] - 1.0;
                -4.0 * t * t
            }
            fn log_likelihood_grad(&self, p: &[f64], _d: &Batch) -> Vec<f64> {
                vec![-16.0 * p[0] * (p[0] * p[0] - 1.0)]
            }
        }
        let data = Batch::new(vec![vec![0.0]], vec![0]).unwrap();
        let fit = fit_laplace(&DoubleWell, &data, &Prior::Flat, &[0.5]).unwrap();
        assert!((fit.mean()[0] - 1.0).abs() < 1e-6, "mode {}", fit.mean()[0]);
        // The global sd of the two-bump density is ~0.96, so 6σ coverage
        // around the located mode needs wide bounds.
        let grid = grid_posterior(&DoubleWell, &data, &Prior::Flat, &[(-9.5, 9.5)], 4001).unwrap();
        let kl = kl_grid_vs_laplace(&grid, &fit).unwrap();
        assert!(kl > 0.1, "expected large KL for a bimodal posterior, got {kl}");
    }

    #[test]
    fn taylor_residual_vanishes_for_quadratic_log_posterior() {
        let (model, data, prior) = conjugate_setup();
        // Exact conjugate fit: the residual is pure Taylor truncation, which
        // is identically zero for a quadratic log posterior.
        let exact = LaplaceFit::new(vec![1.6], DMatrix::from_element(1, 1, 5.0)).unwrap();
        for radius in [0.5, 2.0, 6.0] {
            let res = taylor_residual(&model, &data, &prior, &exact, radius).unwrap();
            assert!(res < 1e-10, "radius {radius}: residual {res}");
        }
        // A fitted mode (gradient norm < 1e-8) adds only a ~1e-8-scale
        // linear term to the residual.
        let fit = fit_laplace(&model, &data, &prior, &[0.0]).unwrap();
        let res = taylor_residual(&model, &data, &prior, &fit, 2.0).unwrap();
        assert!(res < 1e-7, "fitted residual {res}");
    }

    #[test]
    fn taylor_residual_is_zero_at_the_mode() {
        let model = BernoulliLogitModel;
        let data = bernoulli_data(7, 10);
        let fit = fit_laplace(&model, &data, &Prior::Flat, &[0.0]).unwrap();
        let res = quadratic_residual_at(&model, &data, &Prior::Flat, &fit, fit.mean());
        assert_eq!(res, 0.0);
    }

    #[test]
    fn taylor_residual_scales_cubically() {
        let model = BernoulliLogitModel;
        let data = bernoulli_data(7, 10);
        let prior = Prior::Flat;
        let fit = fit_laplace(&model, &data, &prior, &[0.0]).unwrap();

        let r1 = taylor_residual(&model, &data, &prior, &fit, 0.1).unwrap();
        let r_half = taylor_residual(&model, &data, &prior, &fit, 0.05).unwrap();
        let ratio = r1 / r_half;
        assert!((6.0..=10.0).contains(&ratio), "halving ratio {ratio}");

        let radii = [0.05, 0.1, 0.2, 0.4];
        let points: Vec<(f64, f64)> = radii
            .iter()
            .map(|&r| {
                let res = taylor_residual(&model, &data, &prior, &fit, r).unwrap();
                (r.ln(), res.ln())
            })
            .collect();
        let n = points.len() as f64;
        let sx: f64 = points.iter().map(|p| p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((2.5..=3.5).contains(&slope), "log-log slope {slope}");
    }

    #[test]
    fn two_dimensional_grid_and_fit_agree() {
        let model = LogisticPosteriorModel;
        let inputs: Vec<Vec<f64>> = (0..120).map(|i| vec![(i as f64 - 60.0) / 24.0]).collect();
        let labels: Vec<usize> = inputs
            .iter()
            .map(|row| usize::from(1.2 * row[0] + 0.3 > 0.0))
            .collect();
        let data = Batch::new(inputs, labels).unwrap();
        let prior = Prior::standard_normal(2);
        let fit = fit_laplace(&model, &data, &prior, &[0.0, 0.0]).unwrap();
        let sd0 = (1.0 / fit.precision()[(0, 0)]).sqrt();
        let sd1 = (1.0 / fit.precision()[(1, 1)]).sqrt();
        let bounds = [
            (fit.mean()[0] - 10.0 * sd0, fit.mean()[0] + 10.0 * sd0),
            (fit.mean()[1] - 10.0 * sd1, fit.mean()[1] + 10.0 * sd1),
        ];
        let grid = grid_posterior(&model, &data, &prior, &bounds, 201).unwrap();
        assert!((grid.integral() - 1.0).abs() < 1e-6);
        let kl = kl_grid_vs_laplace(&grid, &fit).unwrap();
        // Smooth log-concave posterior at n = 120: the Gaussian is close.
        assert!(kl < 0.1, "KL {kl}");
        assert!((grid.mean()[0] - fit.mean()[0]).abs() < 3.0 * sd0);
    }

    #[test]
    fn comparison_csv_has_header_and_rows() {
        let (model, data, prior) = conjugate_setup();
        let fit = fit_laplace(&model, &data, &prior, &[0.0]).unwrap();
        let grid = grid_posterior(&model, &data, &prior, &[(-2.5, 5.7)], 401).unwrap();
        let mut buf = Vec::new();
        write_comparison_csv(&grid, &fit, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "theta,posterior,laplace");
        assert_eq!(lines.count(), 401);
    }
}
