//! The constrained Bayesian exploration planner.
//!
//! Each planning cycle seeds a fresh surrogate bundle with quasi-random spline
//! controls, then runs constrained BO over the control box. Two constraints are
//! learned: the turn-rate limit (index [`TURN`]) and path safety ([`SAFETY`]).

use std::time::Instant;

use nalgebra::{Matrix3, Vector3};

use crate::bo::{
    bo_loop, shifted_halton, AcquisitionConfig, ConstraintSample, Evaluation, SearchOptions, SurrogateBundle,
};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2D};
use crate::gp::{HyperBounds, Kernel, TrainingOptions};
use crate::map::{OccupancyGrid, SensorModel, DEFAULT_MIN_CLUSTER_SIZE};
use crate::reward::{information_gain, with_penalties, IgOptions, RewardTrace};
use crate::sim::LaserConfig;
use crate::trajectory::{
    check_path, coarse_global_path, heading_penalty_for_endpoint, length_penalty, spline_trajectory,
    valid_prefix_decomposition_with, ControlBounds, ControlInput, SafetyParams, SafetyVerdict, Trajectory,
    ViolationCause,
};

pub const TURN: usize = 0;
pub const SAFETY: usize = 1;

/// Unscented-transform parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtParams {
    /// Spread of the sigma points.
    pub spread: f64,
    /// Secondary scaling, usually 0.
    pub kurtosis: f64,
    /// Prior-distribution term; 2 is optimal for Gaussians.
    pub prior: f64,
}

impl Default for UtParams {
    fn default() -> Self {
        Self {
            spread: 1e-3,
            kurtosis: 0.0,
            prior: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSet {
    /// `(x, y, heading)` vectors; headings are not wrapped.
    pub points: Vec<Vector3<f64>>,
    /// Exact displacement of each point from the centre point.
    pub offsets: Vec<Vector3<f64>>,
    pub mean_weights: Vec<f64>,
    pub cov_weights: Vec<f64>,
    pub params: UtParams,
    pub lambda: f64,
}

impl SigmaSet {
    pub fn pose(&self, i: usize) -> Pose2D {
        let p = self.points[i];
        Pose2D::new(p[0], p[1], p[2])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True when every point coincides with the mean.
    pub fn is_degenerate(&self) -> bool {
        self.offsets.iter().all(|d| *d == Vector3::zeros())
    }

    /// Mean and covariance recovered from the weighted points.
    pub fn moments(&self) -> (Vector3<f64>, Matrix3<f64>) {
        let mut shift = Vector3::zeros();
        for (d, w) in self.offsets.iter().zip(&self.mean_weights).skip(1) {
            shift += d * *w;
        }
        let mut cov = Matrix3::zeros();
        for (d, w) in self.offsets.iter().zip(&self.cov_weights) {
            let e = d - shift;
            cov += e * e.transpose() * *w;
        }
        (self.points[0] + shift, cov)
    }
}

/// Lower factor `L` with `L L^T = m` for a symmetric PSD `m`; zero pivots give
/// zero columns.
fn psd_sqrt(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let scale = m.diagonal().amax().max(1e-300);
    let tol = 1e-12 * scale;
    let mut l = Matrix3::zeros();
    for j in 0..3 {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return Err(Error::NotPositiveDefinite { jitter: 0.0 });
        }
        if d <= tol {
            for i in (j + 1)..3 {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > 1e-6 * scale.sqrt() * scale.sqrt() {
                    return Err(Error::NotPositiveDefinite { jitter: 0.0 });
                }
            }
            continue;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..3 {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// `2n + 1` sigma points for a pose distribution (`n = 3`).
pub fn sigma_points(mean: &Pose2D, cov: &Matrix3<f64>, params: &UtParams) -> Result<SigmaSet> {
    if (cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
        return Err(Error::InvalidInput("pose covariance must be symmetric".into()));
    }
    let n = 3.0;
    let lambda = params.spread * params.spread * (n + params.kurtosis) - n;
    let l = psd_sqrt(&(cov * (n + lambda)))?;
    let mu = Vector3::new(mean.x, mean.y, mean.heading);
    let mut offsets = vec![Vector3::zeros()];
    for i in 0..3 {
        offsets.push(l.column(i).into_owned());
    }
    for i in 0..3 {
        offsets.push(-l.column(i));
    }
    let points = offsets.iter().map(|d| mu + d).collect();
    let w0 = lambda / (n + lambda);
    let wi = 1.0 / (2.0 * (n + lambda));
    let mut mean_weights = vec![w0];
    let mut cov_weights = vec![w0 + (1.0 - params.spread * params.spread + params.prior)];
    for _ in 0..6 {
        mean_weights.push(wi);
        cov_weights.push(wi);
    }
    Ok(SigmaSet {
        points,
        offsets,
        mean_weights,
        cov_weights,
        params: *params,
        lambda,
    })
}

/// Weighted mean and covariance of pose vectors, headings taken relative to the first.
pub fn weighted_pose_stats(poses: &[Vector3<f64>], sigma: &SigmaSet) -> (Vector3<f64>, Matrix3<f64>) {
    let base = poses[0][2];
    let rel: Vec<Vector3<f64>> = poses
        .iter()
        .map(|p| Vector3::new(p[0], p[1], base + wrap_angle(p[2] - base)))
        .collect();
    // offsets from the centre point keep the large centre weight from cancelling
    let mut rho = rel[0];
    for (p, w) in rel.iter().zip(&sigma.mean_weights).skip(1) {
        rho += (p - rel[0]) * *w;
    }
    let mut cov = Matrix3::zeros();
    for (p, w) in rel.iter().zip(&sigma.cov_weights) {
        let d = p - rho;
        cov += d * d.transpose() * *w;
    }
    (rho, cov)
}

/// Mean pose and covariance at `waypoint_index` of the paths generated by `u`
/// from every sigma point.
pub fn pose_stats_along_path(
    u: &ControlInput,
    sigma: &SigmaSet,
    waypoint_index: usize,
    ds: f64,
) -> (Pose2D, Matrix3<f64>) {
    let poses: Vec<Vector3<f64>> = (0..sigma.len())
        .map(|i| {
            let t = spline_trajectory(u, sigma.pose(i), ds);
            let p = t.poses[waypoint_index.min(t.len() - 1)];
            let h = sigma.points[i][2] + wrap_angle(p.heading - sigma.points[i][2]);
            Vector3::new(p.x, p.y, h)
        })
        .collect();
    let (rho, cov) = weighted_pose_stats(&poses, sigma);
    (Pose2D::new(rho[0], rho[1], rho[2]), cov)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub training_set_size: usize,
    pub bo_budget: usize,
    pub safety: SafetyParams,
    pub bounds: ControlBounds,
    /// Waypoint spacing of planned paths.
    pub waypoint_spacing: f64,
    pub preferred_length: f64,
    pub w1: f64,
    pub w2: f64,
    pub acquisition: AcquisitionConfig,
    pub search: SearchOptions,
    pub ig: IgOptions,
    pub laser: LaserConfig,
    pub sensor: SensorModel,
    pub hyper_bounds: HyperBounds,
    pub training: TrainingOptions,
    /// Cap on points used for hyperparameter training (0 = all).
    pub train_max_points: usize,
    /// Retrain hyperparameters every this many cycles (0 = first cycle only).
    pub retrain_every: usize,
    /// Keep every k-th waypoint as an objective sample (the last is always kept).
    pub objective_waypoint_stride: usize,
    pub squash_refit_every: usize,
    pub pose_covariance: Matrix3<f64>,
    pub ut: UtParams,
    /// Spread used for the sigma paths of the safety test.
    pub safety_spread: f64,
    pub min_cluster_size: usize,
    pub coarse_lookahead: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        let safety = SafetyParams::default();
        Self {
            training_set_size: 30,
            bo_budget: 120,
            safety,
            bounds: ControlBounds::default(),
            waypoint_spacing: 0.5,
            preferred_length: 5.0,
            w1: 1.0,
            w2: 1.0,
            acquisition: AcquisitionConfig {
                deltas: vec![0.4, 0.4],
                ..Default::default()
            },
            search: SearchOptions::default(),
            ig: IgOptions {
                occ_threshold: safety.delta_safe,
                free_threshold: safety.free_threshold,
                ..Default::default()
            },
            laser: LaserConfig::default(),
            sensor: SensorModel::default(),
            hyper_bounds: HyperBounds {
                lengthscale: (0.05, 3.0),
                signal_variance: (0.1, 10.0),
                noise_variance: (1e-4, 0.5),
            },
            training: TrainingOptions::default(),
            train_max_points: 150,
            retrain_every: 0,
            objective_waypoint_stride: 1,
            squash_refit_every: 1,
            pose_covariance: Matrix3::zeros(),
            ut: UtParams::default(),
            safety_spread: 1.0,
            min_cluster_size: DEFAULT_MIN_CLUSTER_SIZE,
            coarse_lookahead: 2.0,
        }
    }
}

impl PlannerConfig {
    /// Reduced budgets for large batches of episodes on modest hardware.
    pub fn fast() -> Self {
        Self {
            training_set_size: 20,
            bo_budget: 30,
            search: SearchOptions {
                candidates: 256,
                refine_top: 3,
                refine_iterations: 25,
                initial_step: 0.05,
                min_step: 2e-3,
            },
            ig: IgOptions {
                beam_stride: 3,
                ..PlannerConfig::default().ig
            },
            training: TrainingOptions {
                restarts: 3,
                iterations: 40,
                seed: 0,
            },
            train_max_points: 100,
            objective_waypoint_stride: 2,
            squash_refit_every: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.training_set_size == 0 {
            return Err(Error::Config("training_set_size must be at least 1".into()));
        }
        if !(self.waypoint_spacing > 0.0) {
            return Err(Error::Config("waypoint_spacing must be positive".into()));
        }
        if self.w1 < 0.0 || self.w2 < 0.0 {
            return Err(Error::Config("penalty weights must be non-negative".into()));
        }
        if self.acquisition.deltas.len() != 2 || self.acquisition.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return Err(Error::Config("two constraint confidences in (0, 1) are required".into()));
        }
        let c = &self.pose_covariance;
        if (c - c.transpose()).amax() > 1e-12 || psd_sqrt(c).is_err() {
            return Err(Error::Config("pose covariance must be symmetric PSD".into()));
        }
        Ok(())
    }

    pub fn has_pose_uncertainty(&self) -> bool {
        self.pose_covariance.amax() > 0.0
    }
}

/// A derived prefix of an invalid path, with its reward when valid.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedAssessment {
    pub control: ControlInput,
    pub valid: bool,
    pub reward_trace: Option<RewardTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathAssessment {
    pub control: ControlInput,
    pub verdict: SafetyVerdict,
    pub reward_trace: Option<RewardTrace>,
    pub derived_samples: Vec<DerivedAssessment>,
    /// One objective sample per kept waypoint of every rewarded path.
    pub objective_samples: Vec<(ControlInput, f64)>,
}

impl PathAssessment {
    fn labels(verdict: &SafetyVerdict) -> Vec<Option<bool>> {
        if verdict.cause == Some(ViolationCause::Curvature) {
            vec![Some(false), None]
        } else {
            vec![Some(true), Some(verdict.valid)]
        }
    }

    /// Samples for the surrogate bundle.
    pub fn to_evaluation(&self) -> Evaluation {
        let mut constraints = vec![ConstraintSample {
            x: self.control.to_vec(),
            labels: Self::labels(&self.verdict),
        }];
        for d in &self.derived_samples {
            constraints.push(ConstraintSample {
                x: d.control.to_vec(),
                labels: vec![Some(true), Some(d.valid)],
            });
        }
        Evaluation {
            constraints,
            objectives: self.objective_samples.iter().map(|(c, f)| (c.to_vec(), *f)).collect(),
        }
    }
}

/// Everything a path assessment needs besides the control.
#[derive(Debug, Clone)]
pub struct AssessContext<'a> {
    pub grid: &'a OccupancyGrid,
    pub start: Pose2D,
    pub config: &'a PlannerConfig,
    pub coarse_direction: Option<f64>,
    /// Sigma points for worst-case safety; `None` checks the nominal path only.
    pub sigma: Option<SigmaSet>,
}

impl<'a> AssessContext<'a> {
    pub fn new(grid: &'a OccupancyGrid, start: Pose2D, config: &'a PlannerConfig) -> Self {
        let coarse_direction = coarse_global_path(
            grid,
            &start,
            config.safety.free_threshold,
            config.safety.delta_safe,
            config.min_cluster_size,
            config.coarse_lookahead,
        )
        .map(|c| c.direction);
        Self {
            grid,
            start,
            config,
            coarse_direction,
            sigma: None,
        }
    }

    /// Context whose safety test runs on sigma paths from `config.pose_covariance`.
    pub fn uncertain(grid: &'a OccupancyGrid, start: Pose2D, config: &'a PlannerConfig) -> Result<Self> {
        let mut ctx = Self::new(grid, start, config);
        let params = UtParams {
            spread: config.safety_spread,
            ..config.ut
        };
        let sigma = sigma_points(&start, &config.pose_covariance, &params)?;
        if !sigma.is_degenerate() {
            ctx.sigma = Some(sigma);
        }
        Ok(ctx)
    }

    fn trajectory(&self, u: &ControlInput) -> Trajectory {
        spline_trajectory(u, self.start, self.config.waypoint_spacing)
    }

    /// Curvature, then footprint safety on the nominal path and every sigma path;
    /// the earliest violation wins.
    pub fn verdict(&self, u: &ControlInput, nominal: &Trajectory) -> SafetyVerdict {
        let v = check_path(nominal, self.grid, &self.config.safety);
        let Some(sigma) = &self.sigma else {
            return v;
        };
        if v.cause == Some(ViolationCause::Curvature) {
            return v;
        }
        let mut worst = v;
        for i in 1..sigma.len() {
            let t = spline_trajectory(u, sigma.pose(i), self.config.waypoint_spacing);
            let vi = check_path(&t, self.grid, &self.config.safety);
            if !vi.valid {
                let earlier = match (worst.valid, worst.first_violation_index, vi.first_violation_index) {
                    (true, _, _) => true,
                    (false, Some(a), Some(b)) => b < a,
                    (false, None, Some(_)) => true,
                    _ => false,
                };
                if earlier {
                    worst = vi;
                }
            }
        }
        worst
    }

    pub fn is_valid(&self, u: &ControlInput) -> bool {
        self.verdict(u, &self.trajectory(u)).valid
    }

    fn objective_samples(&self, u: &ControlInput, traj: &Trajectory, trace: &RewardTrace) -> Vec<(ControlInput, f64)> {
        let cfg = self.config;
        let stride = cfg.objective_waypoint_stride.max(1);
        let last = traj.len() - 1;
        (0..traj.len())
            .filter(|w| w % stride == 0 || *w == last)
            .map(|w| {
                let c = u.prefix(traj.arc_lengths[w]);
                let p_h = self.heading_penalty_at(traj, w);
                let p_l = length_penalty(&c, &cfg.bounds, cfg.preferred_length);
                (c, -trace.cumulative_ig[w] + cfg.w1 * p_h + cfg.w2 * p_l)
            })
            .collect()
    }

    fn heading_penalty_at(&self, traj: &Trajectory, w: usize) -> f64 {
        self.coarse_direction
            .map_or(0.0, |dir| heading_penalty_for_endpoint(traj.poses[w].position(), &self.start, dir))
    }

    fn reward(&self, u: &ControlInput, traj: &Trajectory) -> Result<(RewardTrace, Vec<(ControlInput, f64)>)> {
        let cfg = self.config;
        let trace = information_gain(self.grid, traj, &cfg.laser, &cfg.sensor, &cfg.ig)?;
        let samples = self.objective_samples(u, traj, &trace);
        let p_h = self.heading_penalty_at(traj, traj.len() - 1);
        let p_l = length_penalty(u, &cfg.bounds, cfg.preferred_length);
        Ok((with_penalties(trace, p_h, p_l, cfg.w1, cfg.w2), samples))
    }

    /// Curvature check, safety check, then reward for valid paths or prefix
    /// decomposition for invalid ones.
    pub fn assess(&self, u: &ControlInput) -> PathAssessment {
        let traj = self.trajectory(u);
        let verdict = self.verdict(u, &traj);
        let mut out = PathAssessment {
            control: *u,
            verdict,
            reward_trace: None,
            derived_samples: Vec::new(),
            objective_samples: Vec::new(),
        };
        if verdict.valid {
            match self.reward(u, &traj) {
                Ok((trace, samples)) => {
                    out.reward_trace = Some(trace);
                    out.objective_samples = samples;
                }
                Err(_) => {
                    out.verdict = SafetyVerdict::violation(ViolationCause::OutOfBounds, None);
                }
            }
            return out;
        }
        if verdict.cause == Some(ViolationCause::Curvature) {
            return out;
        }
        let derived = valid_prefix_decomposition_with(&traj, &verdict, &self.config.bounds, |c| self.is_valid(&c));
        // the longest valid derived prefix carries the reward; shorter prefixes
        // are covered by its per-waypoint samples
        let rewarded = derived
            .iter()
            .filter(|d| d.valid)
            .max_by(|a, b| a.control.length.total_cmp(&b.control.length))
            .map(|d| d.control);
        for d in derived {
            let mut trace = None;
            if Some(d.control) == rewarded {
                let t = self.trajectory(&d.control);
                if let Ok((tr, samples)) = self.reward(&d.control, &t) {
                    trace = Some(tr);
                    out.objective_samples = samples;
                }
            }
            out.derived_samples.push(DerivedAssessment {
                control: d.control,
                valid: d.valid,
                reward_trace: trace,
            });
        }
        out
    }
}

/// Path assessment against the current belief with a known pose.
pub fn assess_path(u: &ControlInput, grid: &OccupancyGrid, start: Pose2D, config: &PlannerConfig) -> PathAssessment {
    AssessContext::new(grid, start, config).assess(u)
}

/// Path assessment where safety must hold on every sigma path.
pub fn assess_path_uncertain(
    u: &ControlInput,
    grid: &OccupancyGrid,
    start: Pose2D,
    config: &PlannerConfig,
) -> Result<PathAssessment> {
    Ok(AssessContext::uncertain(grid, start, config)?.assess(u))
}

/// `N` low-discrepancy controls over the box, each assessed.
pub fn seed_training_set(ctx: &AssessContext, seed: u64) -> Vec<PathAssessment> {
    let cfg = ctx.config;
    let lower = cfg.bounds.lower();
    let upper = cfg.bounds.upper();
    shifted_halton(cfg.training_set_size, ControlInput::DIM, seed)
        .into_iter()
        .map(|z| {
            let v: Vec<f64> = z.iter().enumerate().map(|(d, t)| lower[d] + t * (upper[d] - lower[d])).collect();
            ctx.assess(&ControlInput::from_slice(&v))
        })
        .collect()
}

/// Kernels kept across planning cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedKernels {
    pub objective: Kernel,
    pub constraints: [Kernel; 2],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlannerState {
    pub kernels: Option<TrainedKernels>,
    pub cycle: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanStatus {
    Planned,
    /// No valid path was found; rotate in place by this angle.
    Recovery(f64),
    ExplorationComplete,
}

impl PlanStatus {
    pub fn label(&self) -> &'static str {
        match self {
            PlanStatus::Planned => "planned",
            PlanStatus::Recovery(_) => "recovery",
            PlanStatus::ExplorationComplete => "complete",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanDiagnostics {
    pub cycle: usize,
    pub seed_count: usize,
    pub valid_samples: usize,
    pub invalid_samples: usize,
    pub objective_samples: usize,
    pub iterations: usize,
    pub chosen: Option<ControlInput>,
    pub predicted_reward: Option<f64>,
    pub predicted_ig: Option<f64>,
    pub trained: bool,
    pub status: PlanStatus,
    pub wall_clock_s: f64,
}

/// Equality ignores wall-clock time so logs compare across runs.
impl PartialEq for PlanDiagnostics {
    fn eq(&self, other: &Self) -> bool {
        self.cycle == other.cycle
            && self.seed_count == other.seed_count
            && self.valid_samples == other.valid_samples
            && self.invalid_samples == other.invalid_samples
            && self.objective_samples == other.objective_samples
            && self.iterations == other.iterations
            && self.chosen == other.chosen
            && self.predicted_reward == other.predicted_reward
            && self.predicted_ig == other.predicted_ig
            && self.trained == other.trained
            && self.status == other.status
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub control: Option<ControlInput>,
    pub trajectory: Option<Trajectory>,
    pub status: PlanStatus,
    pub diagnostics: PlanDiagnostics,
}

fn initial_kernels() -> TrainedKernels {
    TrainedKernels {
        objective: Kernel::isotropic(ControlInput::DIM, 0.3, 1.0, 1e-3),
        constraints: [
            Kernel::isotropic(ControlInput::DIM, 0.3, 1.0, 0.05),
            Kernel::isotropic(ControlInput::DIM, 0.3, 1.0, 0.05),
        ],
    }
}

/// One planning cycle: seed, train (first cycle or on schedule), constrained
/// BO, then the best verified control.
pub fn plan(
    grid: &OccupancyGrid,
    pose: Pose2D,
    config: &PlannerConfig,
    state: &mut PlannerState,
    seed: u64,
) -> Result<PlanOutcome> {
    config.validate()?;
    let clock = Instant::now();
    let cycle = state.cycle;
    state.cycle += 1;
    let mut diag = PlanDiagnostics {
        cycle,
        seed_count: 0,
        valid_samples: 0,
        invalid_samples: 0,
        objective_samples: 0,
        iterations: 0,
        chosen: None,
        predicted_reward: None,
        predicted_ig: None,
        trained: false,
        status: PlanStatus::Planned,
        wall_clock_s: 0.0,
    };
    if grid.frontiers(config.safety.free_threshold, config.min_cluster_size).is_empty() {
        diag.status = PlanStatus::ExplorationComplete;
        diag.wall_clock_s = clock.elapsed().as_secs_f64();
        return Ok(PlanOutcome {
            control: None,
            trajectory: None,
            status: PlanStatus::ExplorationComplete,
            diagnostics: diag,
        });
    }
    let ctx = if config.has_pose_uncertainty() {
        AssessContext::uncertain(grid, pose, config)?
    } else {
        AssessContext::new(grid, pose, config)
    };

    let kernels = state.kernels.clone().unwrap_or_else(initial_kernels);
    let mut bundle = SurrogateBundle::new(
        config.bounds.lower(),
        config.bounds.upper(),
        2,
        kernels.objective.clone(),
        kernels.constraints[TURN].clone(),
    )?;
    bundle.set_constraint_kernel(SAFETY, kernels.constraints[SAFETY].clone());
    bundle.squash_refit_every = config.squash_refit_every;

    let mut assessed: Vec<PathAssessment> = Vec::new();
    let seeds = seed_training_set(&ctx, seed);
    diag.seed_count = seeds.len();
    for a in seeds {
        a.to_evaluation().apply(&mut bundle)?;
        assessed.push(a);
    }

    let retrain = match (&state.kernels, config.retrain_every) {
        (None, _) => true,
        (Some(_), 0) => false,
        (Some(_), k) => cycle % k == 0,
    };
    if retrain && bundle.objective_len() >= 2 {
        let opts = TrainingOptions {
            seed: seed ^ 0x9e37_79b9,
            ..config.training.clone()
        };
        bundle.train(&config.hyper_bounds, &opts, config.train_max_points)?;
        state.kernels = Some(TrainedKernels {
            objective: bundle.objective_kernel().clone(),
            constraints: [bundle.constraint_kernel(TURN).clone(), bundle.constraint_kernel(SAFETY).clone()],
        });
        diag.trained = true;
    }

    let mut bo_assessed: Vec<PathAssessment> = Vec::new();
    let result = bo_loop(
        &mut bundle,
        &config.acquisition,
        &config.search,
        config.bo_budget,
        seed.wrapping_add(1),
        |x| {
            let u = config.bounds.clamp(&ControlInput::from_slice(x));
            let a = ctx.assess(&u);
            let e = a.to_evaluation();
            bo_assessed.push(a);
            e
        },
    )?;
    diag.iterations = result.history.len();
    assessed.extend(bo_assessed);

    for a in &assessed {
        let e = a.to_evaluation();
        for c in &e.constraints {
            if c.labels.iter().all(|l| l.unwrap_or(false)) {
                diag.valid_samples += 1;
            } else {
                diag.invalid_samples += 1;
            }
        }
        diag.objective_samples += e.objectives.len();
    }

    // best in-box objective sample whose path re-verifies
    let mut candidates: Vec<(f64, ControlInput)> = assessed
        .iter()
        .flat_map(|a| a.objective_samples.iter().map(|(c, f)| (*f, *c)))
        .filter(|(_, c)| config.bounds.contains(c))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let chosen = candidates.iter().find(|(_, c)| ctx.is_valid(c)).copied();

    let outcome = match chosen {
        Some((f, u)) => {
            let traj = ctx.trajectory(&u);
            let ig = information_gain(grid, &traj, &config.laser, &config.sensor, &config.ig)
                .map(|t| t.total_ig())
                .ok();
            diag.chosen = Some(u);
            diag.predicted_reward = Some(f);
            diag.predicted_ig = ig;
            PlanOutcome {
                control: Some(u),
                trajectory: Some(traj),
                status: PlanStatus::Planned,
                diagnostics: diag.clone(),
            }
        }
        None => {
            let turn = 2.0 * std::f64::consts::PI - config.laser.fov;
            let sign = ctx
                .coarse_direction
                .map_or(1.0, |d| if wrap_angle(d - pose.heading) < 0.0 { -1.0 } else { 1.0 });
            let status = PlanStatus::Recovery(sign * turn);
            diag.status = status;
            PlanOutcome {
                control: None,
                trajectory: None,
                status,
                diagnostics: diag.clone(),
            }
        }
    };
    let mut outcome = outcome;
    outcome.diagnostics.wall_clock_s = clock.elapsed().as_secs_f64();
    Ok(outcome)
}
