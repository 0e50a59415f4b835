//! Acquisition functions and the constrained Bayesian optimisation loop.
//!
//! Inputs are handled in their natural units by the public API and mapped to
//! the unit cube internally, so kernel bounds are independent of the box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gp::{
    normal_cdf, normal_pdf, train_hyperparameters, GpClassifier, GpRegressor, HyperBounds, Kernel,
    TrainingOptions,
};

/// Value returned for points outside the feasible region.
pub const INFEASIBLE: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcquisitionKind {
    Ei,
    Lcb,
}

impl std::str::FromStr for AcquisitionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ei" => Ok(Self::Ei),
            "lcb" => Ok(Self::Lcb),
            other => Err(Error::Config(format!("unknown acquisition '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionConfig {
    pub kind: AcquisitionKind,
    pub zeta: f64,
    pub kappa: f64,
    /// Per-constraint confidence: feasible when `Pr > 1 - delta`.
    pub deltas: Vec<f64>,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            kind: AcquisitionKind::Lcb,
            zeta: 0.01,
            kappa: 2.0,
            deltas: Vec::new(),
        }
    }
}

/// Expected improvement under minimisation: `-sigma (Z Phi(Z) + phi(Z))`,
/// `Z = (f_min - mu - zeta) / sigma`, and 0 when `sigma = 0`.
pub fn expected_improvement(mean: f64, sigma: f64, f_min: f64, zeta: f64) -> f64 {
    if !(sigma > 0.0) {
        return 0.0;
    }
    let z = (f_min - mean - zeta) / sigma;
    -sigma * (z * normal_cdf(z) + normal_pdf(z))
}

pub fn lower_confidence_bound(mean: f64, sigma: f64, kappa: f64) -> f64 {
    mean - kappa * sigma
}

/// Candidate search effort for [`propose_next`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub candidates: usize,
    pub refine_top: usize,
    pub refine_iterations: usize,
    /// Initial pattern-search step in unit-cube coordinates.
    pub initial_step: f64,
    pub min_step: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            candidates: 1000,
            refine_top: 10,
            refine_iterations: 50,
            initial_step: 0.05,
            min_step: 1e-3,
        }
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// `count` Halton points in `[0,1]^dim`, rotated by a seed-dependent shift.
pub fn shifted_halton(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "Halton sequence supports up to 8 dimensions");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    (1..=count as u64)
        .map(|i| {
            (0..dim)
                .map(|d| (radical_inverse(i, PRIMES[d]) + shift[d]).fract())
                .collect()
        })
        .collect()
}

/// Objective surrogate over standardised targets.
#[derive(Debug, Clone)]
struct ObjectiveModel {
    gp: Option<GpRegressor>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    mean: f64,
    scale: f64,
}

impl ObjectiveModel {
    fn standardise(&mut self) {
        let n = self.y.len() as f64;
        self.mean = self.y.iter().sum::<f64>() / n;
        let var = self.y.iter().map(|v| (v - self.mean).powi(2)).sum::<f64>() / n;
        self.scale = if var > 1e-18 { var.sqrt() } else { 1.0 };
    }

    fn standardised_targets(&self) -> Vec<f64> {
        self.y.iter().map(|v| (v - self.mean) / self.scale).collect()
    }
}

#[derive(Debug, Clone)]
enum ConstraintModel {
    /// Fewer than two classes seen: Laplace estimate of the validity rate.
    Constant(f64),
    Classifier(GpClassifier),
}

#[derive(Debug, Clone)]
struct ConstraintSurrogate {
    x: Vec<Vec<f64>>,
    labels: Vec<bool>,
    kernel: Kernel,
    model: ConstraintModel,
    pending: usize,
}

impl ConstraintSurrogate {
    fn probability(&self, u: &[f64]) -> f64 {
        match &self.model {
            ConstraintModel::Constant(p) => *p,
            ConstraintModel::Classifier(c) => c.predict(u),
        }
    }
}

/// Objective GP plus one classifier per constraint, with the incumbent.
#[derive(Debug, Clone)]
pub struct SurrogateBundle {
    lower: Vec<f64>,
    upper: Vec<f64>,
    objective_kernel: Kernel,
    objective: ObjectiveModel,
    constraints: Vec<ConstraintSurrogate>,
    /// Refit classifier squashing parameters after this many new samples.
    pub squash_refit_every: usize,
    pub f_min: Option<f64>,
    pub u_min: Option<Vec<f64>>,
}

impl SurrogateBundle {
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        constraint_count: usize,
        objective_kernel: Kernel,
        constraint_kernel: Kernel,
    ) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(u > l)) {
            return Err(Error::InvalidInput("box bounds must satisfy lower < upper".into()));
        }
        if objective_kernel.dim() != lower.len() || constraint_kernel.dim() != lower.len() {
            return Err(Error::InvalidInput("kernel dimension does not match the box".into()));
        }
        Ok(Self {
            lower,
            upper,
            objective_kernel,
            objective: ObjectiveModel {
                gp: None,
                x: Vec::new(),
                y: Vec::new(),
                mean: 0.0,
                scale: 1.0,
            },
            constraints: (0..constraint_count)
                .map(|_| ConstraintSurrogate {
                    x: Vec::new(),
                    labels: Vec::new(),
                    kernel: constraint_kernel.clone(),
                    model: ConstraintModel::Constant(0.5),
                    pending: 0,
                })
                .collect(),
            squash_refit_every: 1,
            f_min: None,
            u_min: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective_len(&self) -> usize {
        self.objective.y.len()
    }

    pub fn constraint_len(&self, k: usize) -> usize {
        self.constraints[k].labels.len()
    }

    pub fn objective_kernel(&self) -> &Kernel {
        &self.objective_kernel
    }

    pub fn constraint_kernel(&self, k: usize) -> &Kernel {
        &self.constraints[k].kernel
    }

    pub fn set_constraint_kernel(&mut self, k: usize, kernel: Kernel) {
        self.constraints[k].kernel = kernel;
    }

    pub fn set_objective_kernel(&mut self, kernel: Kernel) {
        self.objective_kernel = kernel;
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (v - l) / (u - l))
            .collect()
    }

    pub fn from_unit(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| l + v * (u - l))
            .collect()
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= l - 1e-12 && *v <= u + 1e-12)
    }

    /// Adds a valid objective observation (natural units); only points inside
    /// the box can become the incumbent.
    pub fn add_objective(&mut self, x: &[f64], y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::InvalidInput("objective value must be finite".into()));
        }
        let z = self.to_unit(x);
        let obj = &mut self.objective;
        obj.x.push(z.clone());
        obj.y.push(y);
        obj.standardise();
        let targets = obj.standardised_targets();
        match obj.gp.as_mut() {
            Some(gp) => {
                gp.add_point(z, 0.0)?;
                gp.set_targets(targets)?;
            }
            None => {
                obj.gp = Some(GpRegressor::fit(obj.x.clone(), targets, self.objective_kernel.clone())?);
            }
        }
        if self.in_box(x) && self.f_min.map_or(true, |f| y < f) {
            self.f_min = Some(y);
            self.u_min = Some(x.to_vec());
        }
        Ok(())
    }

    /// Adds one labelled sample (natural units) for constraint `k`.
    pub fn add_constraint(&mut self, k: usize, x: &[f64], valid: bool) -> Result<()> {
        let z = self.to_unit(x);
        let refit_every = self.squash_refit_every.max(1);
        let c = &mut self.constraints[k];
        c.x.push(z.clone());
        c.labels.push(valid);
        let pos = c.labels.iter().filter(|&&l| l).count();
        let n = c.labels.len();
        if pos == 0 || pos == n {
            c.model = ConstraintModel::Constant((pos as f64 + 1.0) / (n as f64 + 2.0));
            return Ok(());
        }
        match &mut c.model {
            ConstraintModel::Classifier(clf) => {
                clf.add_point_deferred(z, valid)?;
                c.pending += 1;
                if c.pending >= refit_every {
                    clf.refit_squashing();
                    c.pending = 0;
                }
            }
            ConstraintModel::Constant(_) => {
                c.model = ConstraintModel::Classifier(GpClassifier::fit_with_kernel(
                    c.x.clone(),
                    &c.labels,
                    c.kernel.clone(),
                )?);
                c.pending = 0;
            }
        }
        Ok(())
    }

    /// Brings every classifier's squashing parameters up to date.
    pub fn flush(&mut self) {
        for c in &mut self.constraints {
            if let ConstraintModel::Classifier(clf) = &mut c.model {
                if c.pending > 0 {
                    clf.refit_squashing();
                    c.pending = 0;
                }
            }
        }
    }

    /// Retrains kernel hyperparameters on the current data and refits.
    pub fn train(&mut self, bounds: &HyperBounds, options: &TrainingOptions, max_points: usize) -> Result<()> {
        if self.objective.y.len() >= 2 {
            let (x, y) = subsample(&self.objective.x, &self.objective.standardised_targets(), max_points);
            let t = train_hyperparameters(&x, &y, &self.objective_kernel, bounds, options)?;
            self.objective_kernel = t.kernel;
            self.objective.gp = Some(GpRegressor::fit(
                self.objective.x.clone(),
                self.objective.standardised_targets(),
                self.objective_kernel.clone(),
            )?);
        }
        for (k, c) in self.constraints.iter_mut().enumerate() {
            let pos = c.labels.iter().filter(|&&l| l).count();
            if pos == 0 || pos == c.labels.len() {
                continue;
            }
            let signed: Vec<f64> = c.labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
            let (x, y) = subsample(&c.x, &signed, max_points);
            let opts = TrainingOptions {
                seed: options.seed.wrapping_add(k as u64 + 1),
                ..options.clone()
            };
            let t = train_hyperparameters(&x, &y, &c.kernel, bounds, &opts)?;
            c.kernel = t.kernel;
            c.model = ConstraintModel::Classifier(GpClassifier::fit_with_kernel(
                c.x.clone(),
                &c.labels,
                c.kernel.clone(),
            )?);
            c.pending = 0;
        }
        Ok(())
    }

    /// Objective prediction in natural units: `(mean, sd)`.
    pub fn predict_objective(&self, x: &[f64]) -> Option<(f64, f64)> {
        let z = self.to_unit(x);
        self.predict_objective_unit(&z)
            .map(|(m, s)| (m * self.objective.scale + self.objective.mean, s * self.objective.scale))
    }

    fn predict_objective_unit(&self, z: &[f64]) -> Option<(f64, f64)> {
        self.objective.gp.as_ref().map(|gp| {
            let (m, v) = gp.predict(z);
            (m, v.sqrt())
        })
    }

    pub fn constraint_probability(&self, k: usize, x: &[f64]) -> f64 {
        self.constraints[k].probability(&self.to_unit(x))
    }

    fn joint_probability_unit(&self, z: &[f64]) -> f64 {
        self.constraints.iter().map(|c| c.probability(z)).product()
    }

    /// Constraint-weighted acquisition at a unit-cube point.
    fn acquisition_unit(&self, z: &[f64], config: &AcquisitionConfig) -> f64 {
        let mut prob = 1.0;
        for (k, c) in self.constraints.iter().enumerate() {
            let p = c.probability(z);
            let delta = config.deltas.get(k).copied().unwrap_or(0.5);
            if p <= 1.0 - delta {
                return INFEASIBLE;
            }
            prob *= p;
        }
        let s = match (self.predict_objective_unit(z), self.f_min) {
            (Some((m, sd)), Some(f)) => {
                let f_std = (f - self.objective.mean) / self.objective.scale;
                match config.kind {
                    AcquisitionKind::Ei => expected_improvement(m, sd, f_std, config.zeta),
                    AcquisitionKind::Lcb => lower_confidence_bound(m, sd, config.kappa),
                }
            }
            // no valid data yet: favour likely-feasible points
            _ => -1.0,
        };
        s * prob
    }

    /// Constraint-weighted acquisition at a point in natural units.
    pub fn constrained_acquisition(&self, x: &[f64], config: &AcquisitionConfig) -> f64 {
        self.acquisition_unit(&self.to_unit(x), config)
    }

    /// Objective GP predictions are unchanged by constraint-only updates;
    /// exposed for audits.
    pub fn objective_snapshot(&self, probes: &[Vec<f64>]) -> Vec<(f64, f64)> {
        probes.iter().filter_map(|p| self.predict_objective(p)).collect()
    }
}

fn subsample(x: &[Vec<f64>], y: &[f64], max_points: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    if max_points == 0 || x.len() <= max_points {
        return (x.to_vec(), y.to_vec());
    }
    let step = x.len() as f64 / max_points as f64;
    let idx: Vec<usize> = (0..max_points).map(|i| (i as f64 * step) as usize).collect();
    (idx.iter().map(|&i| x[i].clone()).collect(), idx.iter().map(|&i| y[i]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub x: Vec<f64>,
    pub feasible: bool,
    pub acquisition: f64,
}

/// Compass search over the unit cube; returns the best point and its score.
fn pattern_search(
    start: Vec<f64>,
    start_score: f64,
    options: &SearchOptions,
    score: &impl Fn(&[f64]) -> f64,
) -> (Vec<f64>, f64) {
    let mut best = start;
    let mut best_score = start_score;
    let mut step = options.initial_step;
    for _ in 0..options.refine_iterations {
        if step < options.min_step {
            break;
        }
        let mut improved = false;
        'dims: for d in 0..best.len() {
            for sign in [1.0, -1.0] {
                let mut cand = best.clone();
                cand[d] = (cand[d] + sign * step).clamp(0.0, 1.0);
                if cand[d] == best[d] {
                    continue;
                }
                let s = score(&cand);
                if s < best_score {
                    best = cand;
                    best_score = s;
                    improved = true;
                    break 'dims;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best, best_score)
}

/// Quasi-random candidates refined by pattern search; returns the feasible
/// point with the lowest constrained acquisition, or, when nothing is
/// feasible, the candidate with the highest joint constraint probability.
pub fn propose_next(
    bundle: &SurrogateBundle,
    config: &AcquisitionConfig,
    options: &SearchOptions,
    seed: u64,
) -> Proposal {
    let dim = bundle.dim();
    let candidates = shifted_halton(options.candidates.max(1), dim, seed);
    let score = |z: &[f64]| bundle.acquisition_unit(z, config);
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(i, z)| (score(z), i))
        .filter(|(s, _)| s.is_finite())
        .collect();
    if scored.is_empty() {
        let (best, _) = candidates
            .iter()
            .enumerate()
            .map(|(i, z)| (i, bundle.joint_probability_unit(z)))
            .fold((0, f64::NEG_INFINITY), |acc, (i, p)| if p > acc.1 { (i, p) } else { acc });
        return Proposal {
            x: bundle.from_unit(&candidates[best]),
            feasible: false,
            acquisition: INFEASIBLE,
        };
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &(s, i) in scored.iter().take(options.refine_top.max(1)) {
        let (z, v) = pattern_search(candidates[i].clone(), s, options, &score);
        if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
            best = Some((z, v));
        }
    }
    let (z, v) = best.unwrap();
    Proposal {
        x: bundle.from_unit(&z),
        feasible: true,
        acquisition: v,
    }
}

/// Per-constraint labels for one sample point; `None` leaves a constraint untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSample {
    pub x: Vec<f64>,
    pub labels: Vec<Option<bool>>,
}

/// Everything learned from one expensive evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    pub constraints: Vec<ConstraintSample>,
    /// Valid objective samples.
    pub objectives: Vec<(Vec<f64>, f64)>,
}

impl Evaluation {
    /// Records every sample into `bundle`.
    pub fn apply(&self, bundle: &mut SurrogateBundle) -> Result<()> {
        for s in &self.constraints {
            for (k, l) in s.labels.iter().enumerate() {
                if let Some(valid) = l {
                    bundle.add_constraint(k, &s.x, *valid)?;
                }
            }
        }
        for (x, y) in &self.objectives {
            bundle.add_objective(x, *y)?;
        }
        Ok(())
    }

    /// True when the evaluated point itself satisfied every constraint.
    pub fn primary_valid(&self) -> bool {
        self.constraints
            .first()
            .map_or(false, |s| s.labels.iter().all(|l| l.unwrap_or(true)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub x: Vec<f64>,
    pub feasible_proposal: bool,
    pub valid: bool,
    pub f_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoResult {
    pub u_min: Option<Vec<f64>>,
    pub f_min: Option<f64>,
    pub history: Vec<HistoryEntry>,
}

/// Propose, evaluate, update for `budget` iterations.
pub fn bo_loop(
    bundle: &mut SurrogateBundle,
    config: &AcquisitionConfig,
    options: &SearchOptions,
    budget: usize,
    seed: u64,
    mut evaluate: impl FnMut(&[f64]) -> Evaluation,
) -> Result<BoResult> {
    let mut history = Vec::with_capacity(budget);
    for it in 0..budget {
        bundle.flush();
        let proposal = propose_next(bundle, config, options, seed.wrapping_add(it as u64 * 7919));
        let eval = evaluate(&proposal.x);
        eval.apply(bundle)?;
        history.push(HistoryEntry {
            x: proposal.x,
            feasible_proposal: proposal.feasible,
            valid: eval.primary_valid(),
            f_min: bundle.f_min,
        });
    }
    bundle.flush();
    Ok(BoResult {
        u_min: bundle.u_min.clone(),
        f_min: bundle.f_min,
        history,
    })
}

/// Synthetic constrained problem on `[0,1]^2`: a bowl centred at
/// `(0.7, 0.6)` restricted to the disc of radius 0.4 about `(0.3, 0.3)`.
pub mod synthetic {
    pub fn objective(x: &[f64]) -> f64 {
        (x[0] - 0.7).powi(2) + (x[1] - 0.6).powi(2)
    }

    pub fn feasible(x: &[f64]) -> bool {
        (x[0] - 0.3).powi(2) + (x[1] - 0.3).powi(2) <= 0.16
    }

    /// Grid search for the constrained optimum.
    pub fn brute_force_optimum(resolution: usize) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=resolution {
            for j in 0..=resolution {
                let p = [i as f64 / resolution as f64, j as f64 / resolution as f64];
                if feasible(&p) {
                    best = best.min(objective(&p));
                }
            }
        }
        best
    }

    pub fn evaluate(x: &[f64]) -> super::Evaluation {
        let valid = feasible(x);
        super::Evaluation {
            constraints: vec![super::ConstraintSample {
                x: x.to_vec(),
                labels: vec![Some(valid)],
            }],
            objectives: if valid { vec![(x.to_vec(), objective(x))] } else { Vec::new() },
        }
    }
}

/// Runs the synthetic benchmark for one seed; returns `(best feasible value, evaluations)`.
pub fn run_synthetic(seed: u64, initial: usize, budget: usize, options: &SearchOptions) -> Result<(f64, usize)> {
    let kernel = Kernel::isotropic(2, 0.3, 1.0, 1e-4);
    let mut bundle = SurrogateBundle::new(vec![0.0, 0.0], vec![1.0, 1.0], 1, kernel.clone(), Kernel::isotropic(2, 0.2, 1.0, 0.01))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..initial {
        let x = [rng.gen::<f64>(), rng.gen::<f64>()];
        synthetic::evaluate(&x).apply(&mut bundle)?;
    }
    bundle.train(&HyperBounds::default(), &TrainingOptions { restarts: 3, iterations: 40, seed }, 0)?;
    let config = AcquisitionConfig {
        kind: AcquisitionKind::Ei,
        zeta: 0.0,
        kappa: 2.0,
        deltas: vec![0.5],
    };
    let mut evals = initial;
    let remaining = budget.saturating_sub(initial);
    let mut retrain_seed = seed;
    let chunk = 20;
    let mut done = 0;
    while done < remaining {
        let n = chunk.min(remaining - done);
        bo_loop(&mut bundle, &config, options, n, seed.wrapping_mul(31).wrapping_add(done as u64), synthetic::evaluate)?;
        done += n;
        evals += n;
        retrain_seed = retrain_seed.wrapping_add(1);
        bundle.train(&HyperBounds::default(), &TrainingOptions { restarts: 2, iterations: 30, seed: retrain_seed }, 0)?;
    }
    Ok((bundle.f_min.unwrap_or(f64::INFINITY), evals))
}
