//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};

use crate::baselines::{BaselineConfig, GoalMethod, PathMethod};
use crate::bo::AcquisitionKind;
use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2D};
use crate::map::SensorModel;
use crate::planner::PlannerConfig;
use crate::sim::{generate_world, ClutterStyle, LaserConfig, RobotConfig, WorldModel, WorldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlannerId {
    Cbe,
    CbeUncertain,
    FrontierAStar,
    FrontierGreedy,
    NbvAStar,
    NbvGreedy,
}

impl PlannerId {
    pub const ALL: [PlannerId; 6] = [
        PlannerId::Cbe,
        PlannerId::CbeUncertain,
        PlannerId::FrontierAStar,
        PlannerId::FrontierGreedy,
        PlannerId::NbvAStar,
        PlannerId::NbvGreedy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PlannerId::Cbe => "cbe",
            PlannerId::CbeUncertain => "cbe-uncertain",
            PlannerId::FrontierAStar => "frontier-astar",
            PlannerId::FrontierGreedy => "frontier-greedy",
            PlannerId::NbvAStar => "nbv-astar",
            PlannerId::NbvGreedy => "nbv-greedy",
        }
    }

    pub fn is_cbe(&self) -> bool {
        matches!(self, PlannerId::Cbe | PlannerId::CbeUncertain)
    }

    /// Goal selector and path planner of a baseline.
    pub fn baseline(&self) -> Option<(GoalMethod, PathMethod)> {
        match self {
            PlannerId::FrontierAStar => Some((GoalMethod::Frontier, PathMethod::AStar)),
            PlannerId::FrontierGreedy => Some((GoalMethod::Frontier, PathMethod::Greedy)),
            PlannerId::NbvAStar => Some((GoalMethod::Nbv, PathMethod::AStar)),
            PlannerId::NbvGreedy => Some((GoalMethod::Nbv, PathMethod::Greedy)),
            _ => None,
        }
    }
}

impl std::fmt::Display for PlannerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlannerId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown planner {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorldSource {
    Generated { seed: u64, spec: WorldSpec },
    File(PathBuf),
}

impl WorldSource {
    pub fn build(&self) -> Result<WorldModel> {
        match self {
            WorldSource::Generated { seed, spec } => generate_world(*seed, spec),
            WorldSource::File(p) => WorldModel::read_pgm(p),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            WorldSource::Generated { spec, .. } => WorldSource::Generated {
                seed,
                spec: spec.clone(),
            },
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminationRule {
    /// Fraction of reachable free cells that must be known free.
    pub coverage: f64,
    /// Entropy plateau window (simulated seconds).
    pub plateau_window: f64,
    /// Relative entropy drop below which the window counts as a plateau.
    pub plateau_fraction: f64,
    /// Simulated-time budget (seconds).
    pub time_budget: f64,
    pub max_cycles: usize,
}

impl Default for TerminationRule {
    fn default() -> Self {
        Self {
            coverage: 0.95,
            plateau_window: 30.0,
            plateau_fraction: 0.001,
            time_budget: 900.0,
            max_cycles: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub planner: PlannerId,
    pub world: WorldSource,
    /// Start pose; defaults to the generator's start point facing +x.
    pub start: Option<Pose2D>,
    pub robot: RobotConfig,
    pub laser: LaserConfig,
    pub sensor: SensorModel,
    pub cbe: PlannerConfig,
    pub baseline: BaselineConfig,
    /// `(W1, W2)`; `None` calibrates both from the first scan.
    pub penalty_weights: Option<(f64, f64)>,
    /// `None` calibrates the next-best-view distance weight from the first scan.
    pub nbv_lambda: Option<f64>,
    pub pose_sigma_xy: f64,
    pub pose_sigma_theta: f64,
    pub termination: TerminationRule,
    pub seeds: Vec<u64>,
    pub world_seeds: Vec<u64>,
    pub planners: Vec<PlannerId>,
    /// Number of starting poses for repeatability runs (0 disables).
    pub repeat_starts: usize,
    /// Keep a belief snapshot every this many planning cycles (0 = final only).
    pub snapshot_every: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            planner: PlannerId::Cbe,
            world: WorldSource::Generated {
                seed: 0,
                spec: WorldSpec::default(),
            },
            start: None,
            robot: RobotConfig::default(),
            laser: LaserConfig::default(),
            sensor: SensorModel::default(),
            cbe: PlannerConfig::default(),
            baseline: BaselineConfig::default(),
            penalty_weights: None,
            nbv_lambda: None,
            pose_sigma_xy: 0.15,
            pose_sigma_theta: 5f64.to_radians(),
            termination: TerminationRule::default(),
            seeds: vec![0],
            world_seeds: vec![0],
            planners: vec![PlannerId::Cbe],
            repeat_starts: 0,
            snapshot_every: 0,
            out_dir: None,
        }
    }
}

/// Inclusive `a..=b`, exclusive `a..b`, a comma list, or a single integer.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad seed list {s:?}"));
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
    if let Some((a, b)) = s.split_once("..=") {
        let (a, b) = (num(a)?, num(b)?);
        return if a <= b { Ok((a..=b).collect()) } else { Err(bad()) };
    }
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        return if a < b { Ok((a..b).collect()) } else { Err(bad()) };
    }
    s.split(',').map(num).collect()
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {v:?} for {key}"))),
    }
}

/// Pairs from a flat `key = value` text; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        if out.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {}", n + 1, k.trim())));
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let mut c = ExperimentConfig::default();
        match kv.get("profile").map(String::as_str) {
            None | Some("full") => {}
            Some("fast") => c.cbe = PlannerConfig::fast(),
            Some(other) => return Err(Error::Config(format!("unknown profile {other:?}"))),
        }
        let mut spec = WorldSpec::default();
        let mut world_seed = 0;
        let mut world_file = None;
        let (mut sx, mut sy, mut sh) = (None, None, 0.0);
        for (k, v) in &kv {
            let v = v.as_str();
            match k.as_str() {
                "profile" => {}
                "planner" => c.planner = v.parse()?,
                "world_seed" => world_seed = value(k, v)?,
                "world_file" => world_file = Some(PathBuf::from(v)),
                "world_width" => spec.width = value(k, v)?,
                "world_height" => spec.height = value(k, v)?,
                "world_resolution" => spec.resolution = value(k, v)?,
                "obstacles_min" => spec.obstacle_count_min = value(k, v)?,
                "obstacles_max" => spec.obstacle_count_max = value(k, v)?,
                "obstacle_size_min" => spec.obstacle_size_min = value(k, v)?,
                "obstacle_size_max" => spec.obstacle_size_max = value(k, v)?,
                "clutter" => spec.clutter = v.parse::<ClutterStyle>()?,
                "min_gap" => spec.min_gap = value(k, v)?,
                "start_clear_radius" => spec.start_clear_radius = value(k, v)?,
                "start_x" => sx = Some(value(k, v)?),
                "start_y" => sy = Some(value(k, v)?),
                "start_heading" => sh = value(k, v)?,
                "speed" => c.robot.speed = value(k, v)?,
                "turn_rate" => c.robot.max_turn_rate = value(k, v)?,
                "control_period" => c.robot.control_period = value(k, v)?,
                "laser_fov_deg" => c.laser.fov = value::<f64>(k, v)?.to_radians(),
                "laser_beams" => c.laser.beam_count = value(k, v)?,
                "laser_range" => c.laser.max_range = value(k, v)?,
                "laser_noise" => c.laser.range_noise_sigma = value(k, v)?,
                "logodds_hit" => c.sensor.logodds_hit = value(k, v)?,
                "logodds_miss" => c.sensor.logodds_miss = value(k, v)?,
                "delta_safe" => c.cbe.safety.delta_safe = value(k, v)?,
                "free_threshold" => c.cbe.safety.free_threshold = value(k, v)?,
                "delta_kappa" => c.cbe.safety.delta_kappa = value(k, v)?,
                "robot_radius" => c.cbe.safety.robot_radius = value(k, v)?,
                "training_set_size" => c.cbe.training_set_size = value(k, v)?,
                "bo_budget" => c.cbe.bo_budget = value(k, v)?,
                "acquisition" => c.cbe.acquisition.kind = v.parse::<AcquisitionKind>()?,
                "kappa" => c.cbe.acquisition.kappa = value(k, v)?,
                "zeta" => c.cbe.acquisition.zeta = value(k, v)?,
                "delta_turn" => c.cbe.acquisition.deltas[0] = value(k, v)?,
                "delta_safety" => c.cbe.acquisition.deltas[1] = value(k, v)?,
                "candidates" => c.cbe.search.candidates = value(k, v)?,
                "refine_top" => c.cbe.search.refine_top = value(k, v)?,
                "refine_iterations" => c.cbe.search.refine_iterations = value(k, v)?,
                "w1" => c.penalty_weights = Some((value(k, v)?, c.penalty_weights.map_or(0.0, |w| w.1))),
                "w2" => c.penalty_weights = Some((c.penalty_weights.map_or(0.0, |w| w.0), value(k, v)?)),
                "preferred_length" => c.cbe.preferred_length = value(k, v)?,
                "waypoint_spacing" => c.cbe.waypoint_spacing = value(k, v)?,
                "retrain_every" => c.cbe.retrain_every = value(k, v)?,
                "train_max_points" => c.cbe.train_max_points = value(k, v)?,
                "objective_stride" => c.cbe.objective_waypoint_stride = value(k, v)?,
                "squash_refit_every" => c.cbe.squash_refit_every = value(k, v)?,
                "beam_stride" => c.cbe.ig.beam_stride = value(k, v)?,
                "ig_unknown_blocking" => c.cbe.ig.unknown_blocking = flag(k, v)?,
                "pose_sigma_xy" => c.pose_sigma_xy = value(k, v)?,
                "pose_sigma_theta_deg" => c.pose_sigma_theta = value::<f64>(k, v)?.to_radians(),
                "safety_spread" => c.cbe.safety_spread = value(k, v)?,
                "kappa_box" => c.cbe.bounds.kappa_box = value(k, v)?,
                "length_min" => c.cbe.bounds.length_min = value(k, v)?,
                "length_max" => c.cbe.bounds.length_max = value(k, v)?,
                "nbv_lambda" => c.nbv_lambda = Some(value(k, v)?),
                "nbv_samples" => c.baseline.nbv_free_samples = value(k, v)?,
                "goal_tolerance" => c.baseline.goal_tolerance = value(k, v)?,
                "max_expansions" => c.baseline.max_expansions = value(k, v)?,
                "greedy_max_steps" => c.baseline.greedy_max_steps = value(k, v)?,
                "coverage_threshold" => c.termination.coverage = value(k, v)?,
                "plateau_window" => c.termination.plateau_window = value(k, v)?,
                "plateau_fraction" => c.termination.plateau_fraction = value(k, v)?,
                "time_budget" => c.termination.time_budget = value(k, v)?,
                "max_cycles" => c.termination.max_cycles = value(k, v)?,
                "seeds" => c.seeds = parse_seed_list(v)?,
                "world_seeds" => c.world_seeds = parse_seed_list(v)?,
                "planners" => c.planners = v.split(',').map(|p| p.trim().parse()).collect::<Result<_>>()?,
                "repeat_starts" => c.repeat_starts = value(k, v)?,
                "snapshot_every" => c.snapshot_every = value(k, v)?,
                "out_dir" => c.out_dir = Some(PathBuf::from(v)),
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        if let (Some(x), Some(y)) = (sx, sy) {
            spec.start = Point2::new(x, y);
        }
        c.world = match world_file {
            Some(p) => WorldSource::File(p),
            None => WorldSource::Generated { seed: world_seed, spec },
        };
        c.start = match (sx, sy) {
            (Some(x), Some(y)) => Some(Pose2D::new(x, y, sh)),
            (None, None) => None,
            _ => return Err(Error::Config("start_x and start_y must be given together".into())),
        };
        if !kv.contains_key("world_seeds") {
            c.world_seeds = vec![world_seed];
        }
        if !kv.contains_key("planners") {
            c.planners = vec![c.planner];
        }
        c.validate()?;
        Ok(c)
    }

    /// Start pose of the episode.
    pub fn start_pose(&self) -> Pose2D {
        self.start.unwrap_or_else(|| match &self.world {
            WorldSource::Generated { spec, .. } => Pose2D::new(spec.start.x, spec.start.y, 0.0),
            WorldSource::File(_) => Pose2D::new(0.0, 0.0, 0.0),
        })
    }

    pub fn with_planner(&self, planner: PlannerId) -> Self {
        Self {
            planner,
            ..self.clone()
        }
    }

    pub fn pose_covariance(&self) -> Matrix3<f64> {
        let (s, t) = (self.pose_sigma_xy, self.pose_sigma_theta);
        Matrix3::from_diagonal(&Vector3::new(s * s, s * s, t * t))
    }

    /// CBE settings with the shared laser, sensor and (for the uncertain
    /// variant) pose covariance filled in.
    pub fn planner_config(&self, weights: (f64, f64)) -> PlannerConfig {
        let mut p = self.cbe.clone();
        p.laser = self.laser;
        p.sensor = self.sensor;
        p.w1 = weights.0;
        p.w2 = weights.1;
        p.ig.occ_threshold = p.safety.delta_safe;
        p.ig.free_threshold = p.safety.free_threshold;
        p.pose_covariance = if self.planner == PlannerId::CbeUncertain {
            self.pose_covariance()
        } else {
            Matrix3::zeros()
        };
        p
    }

    pub fn baseline_config(&self, nbv_lambda: f64) -> BaselineConfig {
        let mut b = self.baseline.clone();
        b.safety = self.cbe.safety;
        b.nbv_lambda = nbv_lambda;
        b.ig.occ_threshold = b.safety.delta_safe;
        b.ig.free_threshold = b.safety.free_threshold;
        b
    }

    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        self.laser.validate()?;
        self.sensor.validate()?;
        self.planner_config((0.0, 0.0)).validate()?;
        let t = &self.termination;
        if !(t.coverage > 0.0 && t.coverage <= 1.0) {
            return Err(Error::Config("coverage_threshold must lie in (0, 1]".into()));
        }
        if !(t.time_budget > 0.0) || !(t.plateau_window > 0.0) || t.plateau_fraction < 0.0 {
            return Err(Error::Config("time budget and plateau window must be positive".into()));
        }
        if self.pose_sigma_xy < 0.0 || self.pose_sigma_theta < 0.0 {
            return Err(Error::Config("pose sigmas must be non-negative".into()));
        }
        if let Some((w1, w2)) = self.penalty_weights {
            if w1 < 0.0 || w2 < 0.0 {
                return Err(Error::Config("penalty weights must be non-negative".into()));
            }
        }
        if self.seeds.is_empty() || self.world_seeds.is_empty() || self.planners.is_empty() {
            return Err(Error::Config("seed, world and planner lists must be non-empty".into()));
        }
        Ok(())
    }
}

/// `count` start poses spread over reachable free space with clearance,
/// deterministic in the world.
pub fn spread_start_poses(world: &WorldModel, from: Point2, count: usize, clearance: f64) -> Vec<Pose2D> {
    let geom = world.geometry();
    let reach = world.reachable_from(from);
    let r = (clearance / geom.resolution).ceil() as i64;
    let clear = |idx: usize| {
        let (cx, cy) = geom.coords(idx);
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (cx as i64 + dx, cy as i64 + dy);
                if x < 0 || y < 0 || x >= geom.width as i64 || y >= geom.height as i64 {
                    return false;
                }
                if world.is_occupied_cell(geom.index(x as usize, y as usize)) {
                    return false;
                }
            }
        }
        true
    };
    let cells: Vec<usize> = (0..geom.len()).filter(|&i| reach[i] && clear(i)).collect();
    if cells.is_empty() || count == 0 {
        return Vec::new();
    }
    // farthest-point sampling from the reference point
    let mut chosen: Vec<Point2> = Vec::new();
    let mut nearest = vec![f64::INFINITY; cells.len()];
    let pt = |i: usize| {
        let (x, y) = geom.coords(cells[i]);
        geom.cell_center(x, y)
    };
    let mut next = (0..cells.len())
        .min_by(|&a, &b| pt(a).distance(&from).total_cmp(&pt(b).distance(&from)))
        .unwrap();
    while chosen.len() < count.min(cells.len()) {
        let p = pt(next);
        chosen.push(p);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(pt(i).distance(&p));
        }
        next = (0..cells.len()).max_by(|&a, &b| nearest[a].total_cmp(&nearest[b]).then(b.cmp(&a))).unwrap();
    }
    chosen
        .into_iter()
        .enumerate()
        .map(|(k, p)| Pose2D::new(p.x, p.y, k as f64 * 2.0 * std::f64::consts::PI / count as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_keys() {
        let c = ExperimentConfig::from_text(
            "# comment\nplanner = frontier-greedy\nworld_seed = 7\nseeds = 2..5\nprofile = fast\nw1 = 0.5\nw2=0.25\nlaser_fov_deg = 270\nig_unknown_blocking = true\n",
        )
        .unwrap();
        assert_eq!(c.planner, PlannerId::FrontierGreedy);
        assert_eq!(c.seeds, vec![2, 3, 4]);
        assert_eq!(c.world_seeds, vec![7]);
        assert_eq!(c.planners, vec![PlannerId::FrontierGreedy]);
        assert_eq!(c.penalty_weights, Some((0.5, 0.25)));
        assert!((c.laser.fov - 1.5 * std::f64::consts::PI).abs() < 1e-12);
        assert!(c.cbe.ig.unknown_blocking);
        assert_eq!(c.cbe.bo_budget, PlannerConfig::fast().bo_budget);
        assert!(matches!(c.world, WorldSource::Generated { seed: 7, .. }));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::from_text("nonsense = 1").is_err());
        assert!(ExperimentConfig::from_text("planner = astar").is_err());
        assert!(ExperimentConfig::from_text("seeds = 5..2").is_err());
        assert!(ExperimentConfig::from_text("coverage_threshold = 1.5").is_err());
        assert!(ExperimentConfig::from_text("start_x = 3").is_err());
        assert!(ExperimentConfig::from_text("planner = cbe\nplanner = cbe").is_err());
        assert!(ExperimentConfig::from_text("just text").is_err());
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seed_list("3").unwrap(), vec![3]);
        assert_eq!(parse_seed_list("0..=2").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seed_list("4, 9").unwrap(), vec![4, 9]);
        assert!(parse_seed_list("a..b").is_err());
    }

    #[test]
    fn planner_ids_round_trip() {
        for p in PlannerId::ALL {
            assert_eq!(p.name().parse::<PlannerId>().unwrap(), p);
            assert_eq!(p.is_cbe(), p.baseline().is_none());
        }
    }

    #[test]
    fn start_poses_are_free_distinct_and_deterministic() {
        let world = generate_world(3, &WorldSpec::default()).unwrap();
        let a = spread_start_poses(&world, Point2::new(10.0, 10.0), 10, 0.5);
        assert_eq!(a.len(), 10);
        assert_eq!(a, spread_start_poses(&world, Point2::new(10.0, 10.0), 10, 0.5));
        for (i, p) in a.iter().enumerate() {
            assert!(!world.is_occupied(p.position()));
            for q in &a[i + 1..] {
                assert!(p.position().distance(&q.position()) > 1.0);
            }
        }
    }
}
