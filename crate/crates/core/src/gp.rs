//! Gaussian process regression with a squared-exponential ARD kernel, and the
//! GP least-squares classifier built on top of it.
//!
//! The classifier regresses on ±1 labels and squashes the predictive
//! distribution through a cumulative Gaussian with learned scale and offset
//! `(alpha, beta)`, fitted by maximising the leave-one-out log predictive
//! probability computed in closed form from the Cholesky factor.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];
const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `ln Phi(z)`, accurate in the far left tail.
pub fn log_normal_cdf(z: f64) -> f64 {
    if z > -30.0 {
        normal_cdf(z).ln()
    } else {
        -0.5 * z * z - (-z).ln() - 0.5 * LN_2PI
    }
}

/// Squared-exponential kernel with one lengthscale per input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Kernel {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let k = Self {
            lengthscales,
            signal_variance,
            noise_variance,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn isotropic(dim: usize, lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Self {
        Self {
            lengthscales: vec![lengthscale; dim],
            signal_variance,
            noise_variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() || self.lengthscales.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidInput("lengthscales must be positive".into()));
        }
        if !(self.signal_variance > 0.0) || !(self.noise_variance >= 0.0) {
            return Err(Error::InvalidInput(
                "signal variance must be positive and noise variance non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }

    /// Log-space parameter vector: log lengthscales, log signal variance, log noise variance.
    pub fn to_log_params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_variance.ln());
        v.push(self.noise_variance.max(1e-300).ln());
        v
    }

    pub fn from_log_params(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self {
            lengthscales: v[..d].iter().map(|x| x.exp()).collect(),
            signal_variance: v[d].exp(),
            noise_variance: v[d + 1].exp(),
        }
    }
}

/// Fitted GP regressor with zero prior mean.
#[derive(Debug, Clone)]
pub struct GpRegressor {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    kernel: Kernel,
    /// Lower Cholesky factor of `K + (noise + jitter) I`.
    factor: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpRegressor {
    /// Fits the model, escalating diagonal jitter from 1e-10 up to 1e-6 if the
    /// plain factorisation fails.
    pub fn fit(inputs: Vec<Vec<f64>>, targets: Vec<f64>, kernel: Kernel) -> Result<Self> {
        kernel.validate()?;
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::InvalidInput("GP needs matching, non-empty inputs and targets".into()));
        }
        if inputs.iter().any(|x| x.len() != kernel.dim()) {
            return Err(Error::InvalidInput("input dimension does not match the kernel".into()));
        }
        let k = gram(&inputs, &kernel);
        let (factor, jitter) = cholesky_with_jitter(&k, kernel.noise_variance)?;
        let alpha = cholesky_solve(&factor, &DVector::from_column_slice(&targets));
        Ok(Self {
            inputs,
            targets,
            kernel,
            factor,
            alpha,
            jitter,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Appends one observation with a rank-one extension of the factor; falls
    /// back to a full refit when the extension is numerically indefinite.
    pub fn add_point(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if x.len() != self.kernel.dim() {
            return Err(Error::InvalidInput("input dimension does not match the kernel".into()));
        }
        let n = self.len();
        let kvec: Vec<f64> = self.inputs.iter().map(|xi| self.kernel.eval(xi, &x)).collect();
        let l = forward_substitute(&self.factor, &kvec);
        let diag = self.kernel.signal_variance + self.kernel.noise_variance + self.jitter;
        let d2 = diag - l.iter().map(|v| v * v).sum::<f64>();
        self.inputs.push(x);
        self.targets.push(y);
        if d2 <= 1e-12 * diag {
            let refit = Self::fit(
                std::mem::take(&mut self.inputs),
                std::mem::take(&mut self.targets),
                self.kernel.clone(),
            )?;
            *self = refit;
            return Ok(());
        }
        let mut f = DMatrix::zeros(n + 1, n + 1);
        f.view_mut((0, 0), (n, n)).copy_from(&self.factor);
        for (j, v) in l.iter().enumerate() {
            f[(n, j)] = *v;
        }
        f[(n, n)] = d2.sqrt();
        self.factor = f;
        self.alpha = cholesky_solve(&self.factor, &DVector::from_column_slice(&self.targets));
        Ok(())
    }

    /// Replaces all targets, keeping the factor (it does not depend on them).
    pub fn set_targets(&mut self, targets: Vec<f64>) -> Result<()> {
        if targets.len() != self.len() {
            return Err(Error::InvalidInput("target count does not match inputs".into()));
        }
        self.alpha = cholesky_solve(&self.factor, &DVector::from_column_slice(&targets));
        self.targets = targets;
        Ok(())
    }

    /// Predictive mean and latent variance at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let kvec: Vec<f64> = self.inputs.iter().map(|xi| self.kernel.eval(xi, x)).collect();
        let mean = kvec.iter().zip(self.alpha.iter()).map(|(a, b)| a * b).sum();
        let v = forward_substitute(&self.factor, &kvec);
        let var = self.kernel.signal_variance - v.iter().map(|t| t * t).sum::<f64>();
        (mean, var.max(0.0))
    }

    /// Log marginal likelihood and its gradient with respect to
    /// [`Kernel::to_log_params`].
    pub fn log_marginal_likelihood(&self) -> (f64, Vec<f64>) {
        let n = self.len();
        let lml = self.log_marginal_likelihood_value();
        let kinv = cholesky_inverse(&self.factor);
        // W = alpha alpha^T - K^-1; dLML/dtheta = 0.5 tr(W dK/dtheta)
        let w = &self.alpha * self.alpha.transpose() - &kinv;
        let d = self.kernel.dim();
        let mut grad = vec![0.0; d + 2];
        for i in 0..n {
            for j in 0..i {
                let kse = self.kernel.eval(&self.inputs[i], &self.inputs[j]);
                // symmetric pair counted twice
                let wk = w[(i, j)] * kse;
                for (dim, l) in self.kernel.lengthscales.iter().enumerate() {
                    let diff = (self.inputs[i][dim] - self.inputs[j][dim]) / l;
                    grad[dim] += wk * diff * diff;
                }
                grad[d] += wk;
            }
            grad[d] += 0.5 * w[(i, i)] * self.kernel.signal_variance;
            grad[d + 1] += 0.5 * w[(i, i)] * self.kernel.noise_variance;
        }
        (lml, grad)
    }

    pub fn log_marginal_likelihood_value(&self) -> f64 {
        let y = DVector::from_column_slice(&self.targets);
        -0.5 * y.dot(&self.alpha)
            - self.factor.diagonal().iter().map(|d| d.ln()).sum::<f64>()
            - 0.5 * self.len() as f64 * LN_2PI
    }

    /// Closed-form leave-one-out predictive means and variances (variance of the
    /// held-out target, noise included).
    pub fn loo_predictions(&self) -> (Vec<f64>, Vec<f64>) {
        let kinv = cholesky_inverse(&self.factor);
        let mut means = Vec::with_capacity(self.len());
        let mut vars = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let kii = kinv[(i, i)];
            means.push(self.targets[i] - self.alpha[i] / kii);
            vars.push(1.0 / kii);
        }
        (means, vars)
    }
}

fn gram(inputs: &[Vec<f64>], kernel: &Kernel) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&inputs[i], &inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn cholesky_with_jitter(k: &DMatrix<f64>, noise: f64) -> Result<(DMatrix<f64>, f64)> {
    let n = k.nrows();
    for &jitter in &JITTER_LADDER {
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += noise + jitter;
        }
        if let Some(l) = cholesky_lower(&m) {
            return Ok((l, jitter));
        }
    }
    Err(Error::NotPositiveDefinite {
        jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

/// Lower Cholesky factor; `None` when the matrix is not numerically positive definite.
fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let l = nalgebra::Cholesky::new(m.clone())?.unpack();
    l.diagonal().iter().all(|d| *d > 0.0 && d.is_finite()).then_some(l)
}

/// Solves `L v = b` for lower-triangular `L`.
fn forward_substitute(l: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut v = b.to_vec();
    for j in 0..n {
        let vj = v[j] / l[(j, j)];
        v[j] = vj;
        let col = l.column(j);
        for i in (j + 1)..n {
            v[i] -= col[i] * vj;
        }
    }
    v
}

/// Solves `L^T v = b`.
fn back_substitute(l: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut v = b.to_vec();
    for i in (0..n).rev() {
        let col = l.column(i);
        let mut s = v[i];
        for k in (i + 1)..n {
            s -= col[k] * v[k];
        }
        v[i] = s / l[(i, i)];
    }
    v
}

fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let z = forward_substitute(l, b.as_slice());
    DVector::from_vec(back_substitute(l, &z))
}

fn cholesky_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("factor has a positive diagonal");
    linv.tr_mul(&linv)
}

/// Box bounds (natural scale) for hyperparameter search.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperBounds {
    pub lengthscale: (f64, f64),
    pub signal_variance: (f64, f64),
    pub noise_variance: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self {
            lengthscale: (0.02, 5.0),
            signal_variance: (0.05, 20.0),
            noise_variance: (1e-6, 1.0),
        }
    }
}

impl HyperBounds {
    fn log_box(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![self.lengthscale.0.ln(); dim];
        let mut hi = vec![self.lengthscale.1.ln(); dim];
        lo.push(self.signal_variance.0.ln());
        hi.push(self.signal_variance.1.ln());
        lo.push(self.noise_variance.0.ln());
        hi.push(self.noise_variance.1.ln());
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedKernel {
    pub kernel: Kernel,
    pub log_marginal_likelihood: f64,
    /// False when no restart improved on the initial kernel.
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOptions {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            iterations: 60,
            seed: 0,
        }
    }
}

/// Multi-start projected gradient ascent on the log marginal likelihood in
/// log-parameter space. The first start is `initial`, the rest are drawn
/// uniformly in the log box from `options.seed`.
pub fn train_hyperparameters(
    inputs: &[Vec<f64>],
    targets: &[f64],
    initial: &Kernel,
    bounds: &HyperBounds,
    options: &TrainingOptions,
) -> Result<TrainedKernel> {
    if inputs.len() < 2 {
        return Err(Error::InvalidInput("hyperparameter training needs at least 2 points".into()));
    }
    let dim = initial.dim();
    let (lo, hi) = bounds.log_box(dim);
    let project = |v: &mut Vec<f64>| {
        for (i, x) in v.iter_mut().enumerate() {
            *x = x.clamp(lo[i], hi[i]);
        }
    };
    let fit = |p: &[f64]| -> Option<GpRegressor> {
        GpRegressor::fit(inputs.to_vec(), targets.to_vec(), Kernel::from_log_params(p))
            .ok()
            .filter(|gp| gp.log_marginal_likelihood_value().is_finite())
    };
    let evaluate = |p: &[f64]| fit(p).map(|gp| gp.log_marginal_likelihood());

    let mut start0 = initial.to_log_params();
    project(&mut start0);
    let initial_lml = evaluate(&initial.to_log_params()).map(|(l, _)| l);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut starts = vec![start0];
    for _ in 1..options.restarts.max(1) {
        starts.push((0..lo.len()).map(|i| rng.gen_range(lo[i]..=hi[i])).collect());
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in starts {
        let Some((mut f, mut g)) = evaluate(&start) else {
            continue;
        };
        let mut p = start;
        let mut step = 0.1;
        for _ in 0..options.iterations {
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm < 1e-8 {
                break;
            }
            let mut accepted = false;
            while step > 1e-8 {
                let mut cand: Vec<f64> = p.iter().zip(&g).map(|(x, d)| x + step * d / gnorm).collect();
                project(&mut cand);
                match fit(&cand) {
                    Some(gp) if gp.log_marginal_likelihood_value() > f => {
                        let (fc, gc) = gp.log_marginal_likelihood();
                        p = cand;
                        f = fc;
                        g = gc;
                        step *= 1.5;
                        accepted = true;
                        break;
                    }
                    _ => step *= 0.5,
                }
            }
            if !accepted {
                break;
            }
        }
        if best.as_ref().map_or(true, |(bf, _)| f > *bf) {
            best = Some((f, p));
        }
    }
    match (best, initial_lml) {
        (Some((f, p)), Some(f0)) if f > f0 => Ok(TrainedKernel {
            kernel: Kernel::from_log_params(&p),
            log_marginal_likelihood: f,
            improved: true,
        }),
        (Some((f, p)), None) => Ok(TrainedKernel {
            kernel: Kernel::from_log_params(&p),
            log_marginal_likelihood: f,
            improved: true,
        }),
        (_, Some(f0)) => {
            log::warn!("hyperparameter training did not improve on the initial kernel");
            Ok(TrainedKernel {
                kernel: initial.clone(),
                log_marginal_likelihood: f0,
                improved: false,
            })
        }
        (None, None) => Err(Error::NotPositiveDefinite { jitter: 1e-6 }),
    }
}

/// GP least-squares classifier over ±1 labels.
#[derive(Debug, Clone)]
pub struct GpClassifier {
    regressor: GpRegressor,
    pub alpha: f64,
    pub beta: f64,
}

const ALPHA_BOUNDS: (f64, f64) = (1e-3, 100.0);
const BETA_BOUNDS: (f64, f64) = (-20.0, 20.0);

impl GpClassifier {
    /// Two-step fit: regression hyperparameters by marginal likelihood on the
    /// ±1 targets, then `(alpha, beta)` by leave-one-out log predictive probability.
    pub fn fit(
        inputs: Vec<Vec<f64>>,
        labels: &[bool],
        initial: &Kernel,
        bounds: &HyperBounds,
        options: &TrainingOptions,
    ) -> Result<Self> {
        let targets = signed(labels)?;
        if inputs.len() < 2 {
            return Err(Error::InvalidInput("classifier needs at least 2 points".into()));
        }
        let trained = train_hyperparameters(&inputs, &targets, initial, bounds, options)?;
        Self::fit_with_kernel(inputs, labels, trained.kernel)
    }

    /// Fits only the squashing parameters, keeping `kernel` fixed.
    pub fn fit_with_kernel(inputs: Vec<Vec<f64>>, labels: &[bool], kernel: Kernel) -> Result<Self> {
        let targets = signed(labels)?;
        let regressor = GpRegressor::fit(inputs, targets, kernel)?;
        let (alpha, beta) = fit_squashing(&regressor);
        Ok(Self {
            regressor,
            alpha,
            beta,
        })
    }

    pub fn regressor(&self) -> &GpRegressor {
        &self.regressor
    }

    pub fn len(&self) -> usize {
        self.regressor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regressor.is_empty()
    }

    /// Adds one labelled point and refits `(alpha, beta)`.
    pub fn add_point(&mut self, x: Vec<f64>, label: bool) -> Result<()> {
        self.add_point_deferred(x, label)?;
        self.refit_squashing();
        Ok(())
    }

    /// Adds one labelled point without refitting `(alpha, beta)`.
    pub fn add_point_deferred(&mut self, x: Vec<f64>, label: bool) -> Result<()> {
        self.regressor.add_point(x, if label { 1.0 } else { -1.0 })
    }

    pub fn refit_squashing(&mut self) {
        let (a, b) = fit_squashing(&self.regressor);
        self.alpha = a;
        self.beta = b;
    }

    /// Probability that the label at `x` is +1.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let (mu, var) = self.regressor.predict(x);
        squash(self.alpha, self.beta, mu, var + self.regressor.kernel.noise_variance, 1.0)
    }

    /// Leave-one-out log predictive probability for given squashing parameters.
    pub fn loo_log_likelihood(&self, alpha: f64, beta: f64) -> f64 {
        let (m, v) = self.regressor.loo_predictions();
        loo_objective(&m, &v, self.regressor.targets(), alpha, beta).0
    }
}

/// `Phi(y (alpha mu + beta) / sqrt(1 + alpha^2 var))`.
pub fn squash(alpha: f64, beta: f64, mu: f64, var: f64, y: f64) -> f64 {
    let z = y * (alpha * mu + beta) / (1.0 + alpha * alpha * var).sqrt();
    // keep strictly inside (0, 1)
    normal_cdf(z).clamp(1e-300, 1.0 - 1e-16)
}

fn signed(labels: &[bool]) -> Result<Vec<f64>> {
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    Ok(labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect())
}

/// Value and gradient of `sum_i ln Phi(z_i)` with respect to `(alpha, beta)`.
fn loo_objective(means: &[f64], vars: &[f64], y: &[f64], alpha: f64, beta: f64) -> (f64, [f64; 2]) {
    let mut f = 0.0;
    let mut g = [0.0; 2];
    for ((&m, &v), &yi) in means.iter().zip(vars).zip(y) {
        let s = (1.0 + alpha * alpha * v).sqrt();
        let r = alpha * m + beta;
        let z = yi * r / s;
        let lp = log_normal_cdf(z);
        f += lp;
        // d ln Phi(z) / dz = phi(z) / Phi(z), computed in log space
        let ratio = (-0.5 * z * z - 0.5 * LN_2PI - lp).exp();
        let dz_da = yi * (m / s - r * alpha * v / (s * s * s));
        let dz_db = yi / s;
        g[0] += ratio * dz_da;
        g[1] += ratio * dz_db;
    }
    (f, g)
}

fn fit_squashing(regressor: &GpRegressor) -> (f64, f64) {
    let (means, vars) = regressor.loo_predictions();
    let y = regressor.targets();
    let clamp = |p: [f64; 2]| {
        [
            p[0].clamp(ALPHA_BOUNDS.0, ALPHA_BOUNDS.1),
            p[1].clamp(BETA_BOUNDS.0, BETA_BOUNDS.1),
        ]
    };
    let mut p = [1.0, 0.0];
    let (mut f, mut g) = loo_objective(&means, &vars, y, p[0], p[1]);
    let mut step = 0.5;
    for _ in 0..200 {
        let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if gn < 1e-9 {
            break;
        }
        let mut accepted = false;
        while step > 1e-10 {
            let cand = clamp([p[0] + step * g[0] / gn, p[1] + step * g[1] / gn]);
            let (fc, gc) = loo_objective(&means, &vars, y, cand[0], cand[1]);
            if fc > f {
                p = cand;
                f = fc;
                g = gc;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (p[0], p[1])
}
