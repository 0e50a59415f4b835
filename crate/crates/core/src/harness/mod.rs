//! Episode orchestration: sense, plan, execute until the map is explored.

mod config;
mod report;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{
    parse_key_values, parse_seed_list, spread_start_poses, ExperimentConfig, PlannerId, TerminationRule, WorldSource,
};
pub use report::{
    diff_percent, export_artifacts, percent_of_slowest, run_benchmark, run_repeatability, BenchAggregate,
    BenchRow, BenchmarkReport, RepeatabilityReport, RepeatabilityRow,
};

use crate::baselines::{plan_baseline, BaselineOutcome};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2D};
use crate::map::OccupancyGrid;
use crate::planner::{plan, PlanDiagnostics, PlanStatus, PlannerState};
use crate::sim::{execute_path, execute_rotation, ExecutionReport, ExecutionStep, Mapper, WorldModel};
use crate::trajectory::Trajectory;

/// Fraction of the first scan's entropy reduction used for penalty and
/// distance weights when they are not configured.
pub const CALIBRATION_FRACTION: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeStatus {
    Complete,
    Collision,
    BudgetExhausted,
}

impl EpisodeStatus {
    pub fn label(&self) -> &'static str {
        match self {
            EpisodeStatus::Complete => "complete",
            EpisodeStatus::Collision => "collision",
            EpisodeStatus::BudgetExhausted => "budget-exhausted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Coverage,
    Plateau,
    NoFrontier,
    Collision,
    TimeBudget,
    CycleBudget,
}

impl Termination {
    pub fn status(&self) -> EpisodeStatus {
        match self {
            Termination::Coverage | Termination::Plateau | Termination::NoFrontier => EpisodeStatus::Complete,
            Termination::Collision => EpisodeStatus::Collision,
            Termination::TimeBudget | Termination::CycleBudget => EpisodeStatus::BudgetExhausted,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Termination::Coverage => "coverage",
            Termination::Plateau => "plateau",
            Termination::NoFrontier => "no-frontier",
            Termination::Collision => "collision",
            Termination::TimeBudget => "time-budget",
            Termination::CycleBudget => "cycle-budget",
        }
    }
}

/// One control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRow {
    pub time: f64,
    pub entropy: f64,
    pub coverage: f64,
    pub path_length: f64,
    pub pose: Pose2D,
    pub cycle: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CycleAction {
    Path { length: f64, waypoints: usize },
    Rotate { angle: f64 },
    Complete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    pub time: f64,
    pub pose: Pose2D,
    pub action: CycleAction,
    pub goal: Option<Point2>,
    /// Planned waypoints whose belief occupancy reached `delta_safe` when planned.
    pub unsafe_waypoints: usize,
    pub executed_distance: f64,
    pub aborted: bool,
    pub diagnostics: Option<PlanDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct EpisodeLog {
    pub planner: PlannerId,
    pub seed: u64,
    pub start: Pose2D,
    pub rows: Vec<StepRow>,
    pub cycles: Vec<CycleRecord>,
    pub status: EpisodeStatus,
    pub termination: Termination,
    pub exploration_time: f64,
    pub final_entropy: f64,
    pub final_coverage: f64,
    pub path_length: f64,
    pub final_pose: Pose2D,
    pub first_scan_ig: f64,
    pub penalty_weights: (f64, f64),
    pub nbv_lambda: f64,
    pub snapshots: Vec<(usize, OccupancyGrid)>,
    pub final_grid: OccupancyGrid,
    /// Planning wall-clock seconds per cycle; not part of log equality.
    pub planning_wall_clock: Vec<f64>,
}

impl PartialEq for EpisodeLog {
    fn eq(&self, o: &Self) -> bool {
        self.planner == o.planner
            && self.seed == o.seed
            && self.start == o.start
            && self.rows == o.rows
            && self.cycles == o.cycles
            && self.status == o.status
            && self.termination == o.termination
            && self.exploration_time == o.exploration_time
            && self.final_entropy == o.final_entropy
            && self.final_coverage == o.final_coverage
            && self.path_length == o.path_length
            && self.final_pose == o.final_pose
            && self.first_scan_ig == o.first_scan_ig
            && self.penalty_weights == o.penalty_weights
            && self.nbv_lambda == o.nbv_lambda
            && self.snapshots == o.snapshots
            && self.final_grid == o.final_grid
    }
}

impl EpisodeLog {
    pub fn planning_time(&self) -> f64 {
        self.planning_wall_clock.iter().sum()
    }

    pub fn unsafe_waypoints(&self) -> usize {
        self.cycles.iter().map(|c| c.unsafe_waypoints).sum()
    }

    /// Executed poses in order, ending at the final pose.
    pub fn path_polyline(&self) -> Vec<Pose2D> {
        let mut out: Vec<Pose2D> = self.rows.iter().map(|r| r.pose).collect();
        if out.last() != Some(&self.final_pose) {
            out.push(self.final_pose);
        }
        out
    }
}

/// Fraction of `reachable` cells the belief marks as free.
pub fn coverage(grid: &OccupancyGrid, reachable: &[usize], free_threshold: f64) -> f64 {
    if reachable.is_empty() {
        return 1.0;
    }
    let known = reachable.iter().filter(|&&i| grid.probability(i) < free_threshold).count();
    known as f64 / reachable.len() as f64
}

struct Recorder<'a> {
    rows: Vec<StepRow>,
    reachable: &'a [usize],
    free_threshold: f64,
    rule: TerminationRule,
    t_base: f64,
    d_base: f64,
    cycle: usize,
    initial_entropy: f64,
    first_scan_ig: Option<f64>,
    stop: Option<Termination>,
}

impl Recorder<'_> {
    fn record(&mut self, step: &ExecutionStep, grid: &OccupancyGrid) -> bool {
        let entropy = grid.entropy();
        if self.first_scan_ig.is_none() {
            self.first_scan_ig = Some(self.initial_entropy - entropy);
        }
        let row = StepRow {
            time: self.t_base + step.elapsed,
            entropy,
            coverage: coverage(grid, self.reachable, self.free_threshold),
            path_length: self.d_base + step.distance,
            pose: step.pose,
            cycle: self.cycle,
        };
        // a scan repeated at the end point of the previous motion replaces its row
        match self.rows.last_mut() {
            Some(last) if row.time <= last.time => *last = StepRow { time: last.time, ..row },
            _ => self.rows.push(row),
        }
        if row.coverage >= self.rule.coverage {
            self.stop = Some(Termination::Coverage);
        } else if row.time >= self.rule.time_budget {
            self.stop = Some(Termination::TimeBudget);
        }
        self.stop.is_none()
    }

    fn advance(&mut self, report: &ExecutionReport) {
        self.t_base += report.duration;
        self.d_base += report.distance;
    }

    fn plateau(&self) -> bool {
        let Some(last) = self.rows.last() else { return false };
        let cutoff = last.time - self.rule.plateau_window;
        if cutoff < 0.0 {
            return false;
        }
        let i = self.rows.partition_point(|r| r.time <= cutoff);
        if i == 0 {
            return false;
        }
        let old = self.rows[i - 1].entropy;
        old - last.entropy < self.rule.plateau_fraction * old
    }
}

fn unsafe_waypoints(grid: &OccupancyGrid, traj: &Trajectory, delta_safe: f64) -> usize {
    traj.poses
        .iter()
        .filter(|p| grid.probability_at(p.position()).map_or(true, |v| v >= delta_safe))
        .count()
}

fn cycle_seed(seed: u64, cycle: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(cycle as u64)
}

/// Runs one exploration episode. The ground-truth world is touched only by the
/// scan simulator and the collision audit.
pub fn run_episode(config: &ExperimentConfig, seed: u64) -> Result<EpisodeLog> {
    let world = config.world.build()?;
    run_episode_in(config, &world, config.start_pose(), seed)
}

/// As [`run_episode`] with a prebuilt world and start pose.
pub fn run_episode_in(config: &ExperimentConfig, world: &WorldModel, start: Pose2D, seed: u64) -> Result<EpisodeLog> {
    config.validate()?;
    if world.is_occupied(start.position()) || !world.geometry().contains(start.position()) {
        return Err(Error::Collision {
            x: start.x,
            y: start.y,
        });
    }
    let reach_mask = world.reachable_from(start.position());
    let reachable: Vec<usize> = (0..reach_mask.len()).filter(|&i| reach_mask[i]).collect();
    let free_threshold = config.cbe.safety.free_threshold;
    let mut mapper = Mapper::new(OccupancyGrid::from_geometry(*world.geometry()), config.sensor);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rec = Recorder {
        rows: Vec::new(),
        reachable: &reachable,
        free_threshold,
        rule: config.termination,
        t_base: 0.0,
        d_base: 0.0,
        cycle: 0,
        initial_entropy: mapper.grid.entropy(),
        first_scan_ig: None,
        stop: None,
    };

    let sweep = execute_rotation(
        world,
        &config.robot,
        &config.laser,
        start,
        2.0 * std::f64::consts::PI,
        &mut mapper,
        &mut rng,
        |s, g| rec.record(s, g),
    );
    rec.advance(&sweep);
    let mut pose = sweep.final_pose;
    let first_ig = rec.first_scan_ig.unwrap_or(0.0);
    let weights = config
        .penalty_weights
        .unwrap_or((CALIBRATION_FRACTION * first_ig, CALIBRATION_FRACTION * first_ig));
    let nbv_lambda = config.nbv_lambda.unwrap_or(CALIBRATION_FRACTION * first_ig);
    let pcfg = config.planner_config(weights);
    let bcfg = config.baseline_config(nbv_lambda);
    let mut state = PlannerState::default();
    let mut cycles = Vec::new();
    let mut snapshots = Vec::new();
    let mut wall = Vec::new();
    let mut termination = rec.stop;
    if sweep.collision {
        termination = Some(Termination::Collision);
    }

    let mut cycle = 0;
    while termination.is_none() {
        if cycle >= config.termination.max_cycles {
            termination = Some(Termination::CycleBudget);
            break;
        }
        if rec.plateau() {
            termination = Some(Termination::Plateau);
            break;
        }
        if config.snapshot_every > 0 && cycle % config.snapshot_every == 0 {
            snapshots.push((cycle, mapper.grid.clone()));
        }
        rec.cycle = cycle;
        let clock = Instant::now();
        let (action, goal, diagnostics) = if config.planner.is_cbe() {
            let out = plan(&mapper.grid, pose, &pcfg, &mut state, cycle_seed(seed, cycle))?;
            let action = match (out.status, out.trajectory) {
                (PlanStatus::Planned, Some(t)) => Ok(t),
                (PlanStatus::Recovery(a), _) => Err(Some(a)),
                _ => Err(None),
            };
            (action, None, Some(out.diagnostics))
        } else {
            let (gm, pm) = config.planner.baseline().expect("baseline planner");
            match plan_baseline(&mapper.grid, pose, gm, pm, &config.laser, &config.sensor, &bcfg) {
                BaselineOutcome::Planned { goal, trajectory } => (Ok(trajectory), Some(goal.goal), None),
                BaselineOutcome::Recovery(a) => (Err(Some(a)), None, None),
                BaselineOutcome::ExplorationComplete => (Err(None), None, None),
            }
        };
        wall.push(clock.elapsed().as_secs_f64());
        let mut record = CycleRecord {
            cycle,
            time: rec.t_base,
            pose,
            action: CycleAction::Complete,
            goal,
            unsafe_waypoints: 0,
            executed_distance: 0.0,
            aborted: false,
            diagnostics,
        };
        let report = match action {
            Ok(traj) => {
                record.action = CycleAction::Path {
                    length: traj.length(),
                    waypoints: traj.len(),
                };
                record.unsafe_waypoints = unsafe_waypoints(&mapper.grid, &traj, pcfg.safety.delta_safe);
                execute_path(
                    world,
                    &config.robot,
                    &config.laser,
                    &traj,
                    &mut mapper,
                    &mut rng,
                    Some(&pcfg.safety),
                    |s, g| rec.record(s, g),
                )
            }
            Err(Some(angle)) => {
                record.action = CycleAction::Rotate { angle };
                execute_rotation(
                    world,
                    &config.robot,
                    &config.laser,
                    pose,
                    angle,
                    &mut mapper,
                    &mut rng,
                    |s, g| rec.record(s, g),
                )
            }
            Err(None) => {
                cycles.push(record);
                termination = Some(Termination::NoFrontier);
                break;
            }
        };
        rec.advance(&report);
        pose = report.final_pose;
        record.executed_distance = report.distance;
        record.aborted = report.aborted;
        cycles.push(record);
        if report.collision {
            termination = Some(Termination::Collision);
        } else if let Some(t) = rec.stop {
            termination = Some(t);
        }
        cycle += 1;
    }

    let termination = termination.expect("loop exits with a reason");
    let last = rec.rows.last().copied();
    if termination == Termination::Collision {
        log::warn!("{} seed {seed}: collision at ({:.2}, {:.2})", config.planner, pose.x, pose.y);
    }
    Ok(EpisodeLog {
        planner: config.planner,
        seed,
        start,
        status: termination.status(),
        termination,
        exploration_time: last.map_or(0.0, |r| r.time),
        final_entropy: mapper.grid.entropy(),
        final_coverage: coverage(&mapper.grid, &reachable, free_threshold),
        path_length: rec.d_base,
        final_pose: pose,
        first_scan_ig: first_ig,
        penalty_weights: weights,
        nbv_lambda,
        snapshots,
        final_grid: mapper.grid,
        planning_wall_clock: wall,
        cycles,
        rows: rec.rows,
    })
}
