//! Ground-truth worlds, lidar simulation, random world generation and path execution.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2D};
use crate::map::{self, GridGeometry, OccupancyGrid, SensorModel};
use crate::trajectory::{check_footprint_from, SafetyParams, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserConfig {
    pub fov: f64,
    pub beam_count: usize,
    pub max_range: f64,
    pub range_noise_sigma: f64,
}

impl Default for LaserConfig {
    fn default() -> Self {
        Self {
            fov: PI,
            beam_count: 181,
            max_range: 10.0,
            range_noise_sigma: 0.01,
        }
    }
}

impl LaserConfig {
    /// Beams spread evenly over the field of view, centred on `heading`.
    pub fn beam_angle(&self, heading: f64, i: usize) -> f64 {
        if self.beam_count <= 1 {
            return heading;
        }
        heading - 0.5 * self.fov + self.fov * i as f64 / (self.beam_count - 1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_count < 2 {
            return Err(Error::Config("laser needs at least 2 beams".into()));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::Config("laser max_range must be positive".into()));
        }
        if !(self.fov > 0.0 && self.fov <= 2.0 * PI) {
            return Err(Error::Config("laser fov must lie in (0, 2pi]".into()));
        }
        if !(self.range_noise_sigma >= 0.0) {
            return Err(Error::Config("range noise must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotConfig {
    /// Constant forward speed (m/s).
    pub speed: f64,
    /// Turn-rate limit (rad/s).
    pub max_turn_rate: f64,
    /// Time between scans (s).
    pub control_period: f64,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            speed: 1.0,
            max_turn_rate: 1.0,
            control_period: 0.2,
        }
    }
}

impl RobotConfig {
    /// Path curvature reachable at the configured speed and turn rate.
    pub fn curvature_limit(&self) -> f64 {
        self.max_turn_rate / self.speed
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0) || !(self.max_turn_rate > 0.0) || !(self.control_period > 0.0) {
            return Err(Error::Config(
                "robot speed, turn rate and control period must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Immutable ground-truth occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    geometry: GridGeometry,
    occupied: Vec<bool>,
}

impl WorldModel {
    /// Walled empty arena of the given size in meters.
    pub fn empty_arena(width_m: f64, height_m: f64, resolution: f64) -> Result<Self> {
        let width = (width_m / resolution).round() as usize;
        let height = (height_m / resolution).round() as usize;
        let geometry = GridGeometry::new(width, height, resolution, Point2::default())?;
        let mut w = Self {
            geometry,
            occupied: vec![false; geometry.len()],
        };
        w.seal_boundary();
        Ok(w)
    }

    pub fn from_cells(geometry: GridGeometry, occupied: Vec<bool>) -> Result<Self> {
        if occupied.len() != geometry.len() {
            return Err(Error::InvalidInput("occupancy length does not match the grid".into()));
        }
        let mut w = Self { geometry, occupied };
        w.seal_boundary();
        Ok(w)
    }

    fn seal_boundary(&mut self) {
        let g = self.geometry;
        for cx in 0..g.width {
            self.occupied[g.index(cx, 0)] = true;
            self.occupied[g.index(cx, g.height - 1)] = true;
        }
        for cy in 0..g.height {
            self.occupied[g.index(0, cy)] = true;
            self.occupied[g.index(g.width - 1, cy)] = true;
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn cells(&self) -> &[bool] {
        &self.occupied
    }

    pub fn is_occupied_cell(&self, idx: usize) -> bool {
        self.occupied[idx]
    }

    /// Occupied test for a world point; everything outside the arena is occupied.
    pub fn is_occupied(&self, p: Point2) -> bool {
        self.geometry.index_of(p).map_or(true, |i| self.occupied[i])
    }

    /// Fills the axis-aligned rectangle `[x0, x1] x [y0, y1]` (meters).
    pub fn fill_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64) {
        let g = self.geometry;
        for cy in 0..g.height {
            for cx in 0..g.width {
                let c = g.cell_center(cx, cy);
                if c.x >= x0 && c.x <= x1 && c.y >= y0 && c.y <= y1 {
                    self.occupied[g.index(cx, cy)] = true;
                }
            }
        }
    }

    /// Noise-free distance to the first occupied cell, capped at `max_range`.
    pub fn raycast(&self, origin: Point2, angle: f64, max_range: f64) -> f64 {
        let mut d = max_range;
        map::walk_ray(&self.geometry, origin, angle, max_range, |idx, t| {
            if self.occupied[idx] {
                d = t.min(max_range);
                false
            } else {
                true
            }
        });
        d
    }

    pub fn free_cell_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| !o).count()
    }

    /// Free cells 8-connected to `start` through free space.
    pub fn reachable_from(&self, start: Point2) -> Vec<bool> {
        let g = &self.geometry;
        let mut seen = vec![false; g.len()];
        let Some(s) = g.index_of(start) else {
            return seen;
        };
        if self.occupied[s] {
            return seen;
        }
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        while let Some(c) = queue.pop_front() {
            for n in g.neighbors8(c) {
                if !self.occupied[n] && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// A belief grid that knows the world exactly (clamped probabilities).
    pub fn to_known_grid(&self) -> OccupancyGrid {
        let mut g = OccupancyGrid::from_geometry(self.geometry);
        for (i, &o) in self.occupied.iter().enumerate() {
            g.set_probability(i, if o { 1.0 } else { 0.0 });
        }
        g
    }

    /// Writes the world as a P5 PGM (0 occupied, 255 free) with a `.meta` sidecar.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let g = &self.geometry;
        let mut bytes = format!("P5\n{} {}\n255\n", g.width, g.height).into_bytes();
        for row in (0..g.height).rev() {
            for col in 0..g.width {
                bytes.push(if self.occupied[g.index(col, row)] { 0 } else { 255 });
            }
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        map::write_sidecar(path, g)
    }

    /// Reads a world from a PGM map; pixels at or below 127 (p >= 0.5) are occupied.
    pub fn read_pgm(path: &Path) -> Result<Self> {
        let (width, height, pixels) = map::read_pgm_pixels(path)?;
        let (resolution, origin) = map::read_sidecar(path)?;
        let geometry = GridGeometry::new(width, height, resolution, origin)?;
        let mut occupied = vec![false; geometry.len()];
        for row in 0..height {
            for col in 0..width {
                occupied[geometry.index(col, row)] = pixels[(height - 1 - row) * width + col] <= 127;
            }
        }
        Self::from_cells(geometry, occupied)
    }
}

/// Simulated lidar scan: true ranges plus Gaussian noise, clamped to `[0, max_range]`.
pub fn simulate_scan<R: Rng + ?Sized>(
    world: &WorldModel,
    pose: &Pose2D,
    laser: &LaserConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if world.is_occupied(pose.position()) {
        return Err(Error::Collision {
            x: pose.x,
            y: pose.y,
        });
    }
    let noise = (laser.range_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, laser.range_noise_sigma).expect("sigma is finite and positive"));
    Ok((0..laser.beam_count)
        .map(|i| {
            let d = world.raycast(pose.position(), laser.beam_angle(pose.heading, i), laser.max_range);
            let n = noise.as_ref().map_or(0.0, |n| n.sample(rng));
            // Max-range returns stay at max range: no surface was seen.
            if d >= laser.max_range {
                laser.max_range
            } else {
                (d + n).clamp(0.0, laser.max_range)
            }
        })
        .collect())
}

pub fn simulate_scan_seeded(
    world: &WorldModel,
    pose: &Pose2D,
    laser: &LaserConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    simulate_scan(world, pose, laser, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClutterStyle {
    Rectangles,
    LShapes,
    Mixed,
}

impl std::str::FromStr for ClutterStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangles" => Ok(Self::Rectangles),
            "lshapes" => Ok(Self::LShapes),
            "mixed" => Ok(Self::Mixed),
            other => Err(Error::Config(format!("unknown clutter style {other:?}"))),
        }
    }
}

/// Parameters for random world generation.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub width: f64,
    pub height: f64,
    pub resolution: f64,
    pub obstacle_count_min: usize,
    pub obstacle_count_max: usize,
    pub obstacle_size_min: f64,
    pub obstacle_size_max: f64,
    pub clutter: ClutterStyle,
    /// Minimum free gap between obstacles and between an obstacle and the outer wall.
    pub min_gap: f64,
    pub start: Point2,
    pub start_clear_radius: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            width: 20.0,
            height: 20.0,
            resolution: 0.1,
            obstacle_count_min: 10,
            obstacle_count_max: 25,
            obstacle_size_min: 0.5,
            obstacle_size_max: 2.5,
            clutter: ClutterStyle::Mixed,
            min_gap: 0.8,
            start: Point2::new(10.0, 10.0),
            start_clear_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn gap_to(&self, o: &Rect) -> f64 {
        let dx = (o.x0 - self.x1).max(self.x0 - o.x1).max(0.0);
        let dy = (o.y0 - self.y1).max(self.y0 - o.y1).max(0.0);
        dx.hypot(dy)
    }

    fn distance_to_point(&self, p: Point2) -> f64 {
        let dx = (self.x0 - p.x).max(p.x - self.x1).max(0.0);
        let dy = (self.y0 - p.y).max(p.y - self.y1).max(0.0);
        dx.hypot(dy)
    }
}

const GENERATION_ATTEMPTS: usize = 50;
const PLACEMENT_TRIES: usize = 400;

/// Random cluttered arena, deterministic in `seed`.
pub fn generate_world(seed: u64, spec: &WorldSpec) -> Result<WorldModel> {
    if !(spec.width > 0.0 && spec.height > 0.0 && spec.resolution > 0.0)
        || spec.obstacle_count_min > spec.obstacle_count_max
        || !(spec.obstacle_size_min > 0.0 && spec.obstacle_size_min <= spec.obstacle_size_max)
    {
        return Err(Error::InvalidInput("world spec parameters must be positive and ordered".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_reason = String::new();
    for _ in 0..GENERATION_ATTEMPTS {
        match try_generate(&mut rng, spec) {
            Ok(w) => return Ok(w),
            Err(reason) => last_reason = reason,
        }
    }
    Err(Error::GenerationFailed {
        attempts: GENERATION_ATTEMPTS,
        reason: last_reason,
    })
}

fn try_generate(rng: &mut ChaCha8Rng, spec: &WorldSpec) -> std::result::Result<WorldModel, String> {
    let mut world =
        WorldModel::empty_arena(spec.width, spec.height, spec.resolution).map_err(|e| e.to_string())?;
    let count = rng.gen_range(spec.obstacle_count_min..=spec.obstacle_count_max);
    let wall = spec.resolution;
    let arena = Rect {
        x0: wall,
        y0: wall,
        x1: spec.width - wall,
        y1: spec.height - wall,
    };
    let mut placed: Vec<Rect> = Vec::new();
    for _ in 0..count {
        let mut ok = false;
        for _ in 0..PLACEMENT_TRIES {
            let shape = random_shape(rng, spec);
            let (bx0, by0, bx1, by1) = shape.iter().fold(
                (f64::MAX, f64::MAX, f64::MIN, f64::MIN),
                |(a, b, c, d), r| (a.min(r.x0), b.min(r.y0), c.max(r.x1), d.max(r.y1)),
            );
            let (w, h) = (bx1 - bx0, by1 - by0);
            let lo_x = arena.x0 + spec.min_gap;
            let hi_x = arena.x1 - spec.min_gap - w;
            let lo_y = arena.y0 + spec.min_gap;
            let hi_y = arena.y1 - spec.min_gap - h;
            if hi_x <= lo_x || hi_y <= lo_y {
                continue;
            }
            let ox = rng.gen_range(lo_x..hi_x) - bx0;
            let oy = rng.gen_range(lo_y..hi_y) - by0;
            let moved: Vec<Rect> = shape
                .iter()
                .map(|r| Rect {
                    x0: r.x0 + ox,
                    y0: r.y0 + oy,
                    x1: r.x1 + ox,
                    y1: r.y1 + oy,
                })
                .collect();
            let clear_start = moved
                .iter()
                .all(|r| r.distance_to_point(spec.start) > spec.start_clear_radius);
            let clear_others = moved
                .iter()
                .all(|r| placed.iter().all(|p| r.gap_to(p) >= spec.min_gap));
            if clear_start && clear_others {
                placed.extend(moved);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(format!("could not place obstacle {} of {count}", placed.len()));
        }
    }
    for r in &placed {
        world.fill_rect(r.x0, r.y0, r.x1, r.y1);
    }
    if world.is_occupied(spec.start) {
        return Err("start cell is occupied".into());
    }
    let reach = world.reachable_from(spec.start);
    let connected = reach.iter().filter(|&&r| r).count();
    if 2 * connected < world.free_cell_count() {
        return Err("start region is sealed off from most free space".into());
    }
    Ok(world)
}

/// Obstacle outline relative to its own origin.
fn random_shape(rng: &mut ChaCha8Rng, spec: &WorldSpec) -> Vec<Rect> {
    let size = |rng: &mut ChaCha8Rng| rng.gen_range(spec.obstacle_size_min..=spec.obstacle_size_max);
    let l_shape = match spec.clutter {
        ClutterStyle::Rectangles => false,
        ClutterStyle::LShapes => true,
        ClutterStyle::Mixed => rng.gen_bool(0.4),
    };
    if !l_shape {
        let (w, h) = (size(rng), size(rng));
        return vec![Rect {
            x0: 0.0,
            y0: 0.0,
            x1: w,
            y1: h,
        }];
    }
    let (a, b) = (size(rng), size(rng));
    let t = (0.5 * spec.obstacle_size_min).max(2.0 * spec.resolution).min(a.min(b));
    // Arms along +x and +y from the corner, then mirrored into one of four orientations.
    let arms = [
        Rect {
            x0: 0.0,
            y0: 0.0,
            x1: a,
            y1: t,
        },
        Rect {
            x0: 0.0,
            y0: 0.0,
            x1: t,
            y1: b,
        },
    ];
    let (fx, fy) = match rng.gen_range(0..4) {
        0 => (1.0, 1.0),
        1 => (-1.0, 1.0),
        2 => (1.0, -1.0),
        _ => (-1.0, -1.0),
    };
    arms.iter()
        .map(|r| {
            let (x0, x1) = if fx > 0.0 { (r.x0, r.x1) } else { (-r.x1, -r.x0) };
            let (y0, y1) = if fy > 0.0 { (r.y0, r.y1) } else { (-r.y1, -r.y0) };
            Rect { x0, y0, x1, y1 }
        })
        .collect()
}

/// Belief map maintained while the robot moves.
#[derive(Debug, Clone, PartialEq)]
pub struct Mapper {
    pub grid: OccupancyGrid,
    pub model: SensorModel,
}

impl Mapper {
    pub fn new(grid: OccupancyGrid, model: SensorModel) -> Self {
        Self { grid, model }
    }

    /// Simulates a scan at `pose` and integrates it.
    pub fn sense<R: Rng + ?Sized>(
        &mut self,
        world: &WorldModel,
        pose: &Pose2D,
        laser: &LaserConfig,
        rng: &mut R,
    ) -> Result<()> {
        let ranges = simulate_scan(world, pose, laser, rng)?;
        self.grid.integrate_scan(pose, &ranges, laser, &self.model)
    }
}

/// One scan taken during execution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecutionStep {
    /// Seconds since the start of this execution.
    pub elapsed: f64,
    pub pose: Pose2D,
    /// Distance travelled since the start of this execution.
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecutionReport {
    pub final_pose: Pose2D,
    pub scans: usize,
    pub collision: bool,
    /// Stopped because the remaining path no longer passed the safety check.
    pub aborted: bool,
    /// Stopped because the scan callback asked to.
    pub stopped: bool,
    pub distance: f64,
    pub duration: f64,
}

/// Drives `traj` at constant speed, scanning every control period and
/// integrating each scan into the mapper. Stops at the first ground-truth
/// collision, when `on_scan` returns false, or (with `safety_stop`) as soon as
/// the rest of the path fails the footprint check on the updated belief.
#[allow(clippy::too_many_arguments)]
pub fn execute_path<R: Rng + ?Sized>(
    world: &WorldModel,
    robot: &RobotConfig,
    laser: &LaserConfig,
    traj: &Trajectory,
    mapper: &mut Mapper,
    rng: &mut R,
    safety_stop: Option<&SafetyParams>,
    mut on_scan: impl FnMut(&ExecutionStep, &OccupancyGrid) -> bool,
) -> ExecutionReport {
    let length = traj.length();
    let duration = length / robot.speed;
    let n_scans = (duration / robot.control_period + 1e-9).floor() as usize + 1;
    let dense = traj.dense_poses();
    let dense_s = traj.dense_arc_lengths();
    let mut checked = 0;
    let mut report = ExecutionReport {
        final_pose: traj.start(),
        scans: 0,
        collision: false,
        aborted: false,
        stopped: false,
        distance: 0.0,
        duration: 0.0,
    };

    // Ground-truth collision audit of all dense samples up to arc length `s`.
    let audit = |s: f64, checked: &mut usize| -> Option<(Pose2D, f64)> {
        while *checked < dense.len() && dense_s[*checked] <= s + 1e-12 {
            let p = dense[*checked];
            if world.is_occupied(p.position()) {
                return Some((p, dense_s[*checked]));
            }
            *checked += 1;
        }
        None
    };

    for k in 0..n_scans {
        let t = k as f64 * robot.control_period;
        let s = (robot.speed * t).min(length);
        if let Some((p, s_hit)) = audit(s, &mut checked) {
            report.final_pose = p;
            report.collision = true;
            report.distance = s_hit;
            report.duration = s_hit / robot.speed;
            return report;
        }
        let pose = traj.pose_at(s);
        // The audit above guarantees the pose is in free space.
        if mapper.sense(world, &pose, laser, rng).is_err() {
            report.final_pose = pose;
            report.collision = true;
            report.distance = s;
            report.duration = t;
            return report;
        }
        report.scans += 1;
        report.final_pose = pose;
        report.distance = s;
        report.duration = t;
        let step = ExecutionStep {
            elapsed: t,
            pose,
            distance: s,
        };
        if !on_scan(&step, &mapper.grid) {
            report.stopped = true;
            return report;
        }
        if let Some(params) = safety_stop {
            let ahead = dense_s.partition_point(|&v| v <= s + 1e-12);
            if ahead < dense.len() && !check_footprint_from(traj, &mapper.grid, params, ahead).valid {
                report.aborted = true;
                return report;
            }
        }
    }
    if let Some((p, s_hit)) = audit(length, &mut checked) {
        report.final_pose = p;
        report.collision = true;
        report.distance = s_hit;
        report.duration = s_hit / robot.speed;
        return report;
    }
    report.final_pose = traj.end();
    report.distance = length;
    report.duration = duration;
    report
}

/// Turns in place by `angle` at the maximum turn rate, scanning every control period.
#[allow(clippy::too_many_arguments)]
pub fn execute_rotation<R: Rng + ?Sized>(
    world: &WorldModel,
    robot: &RobotConfig,
    laser: &LaserConfig,
    start: Pose2D,
    angle: f64,
    mapper: &mut Mapper,
    rng: &mut R,
    mut on_scan: impl FnMut(&ExecutionStep, &OccupancyGrid) -> bool,
) -> ExecutionReport {
    let duration = angle.abs() / robot.max_turn_rate;
    let n_scans = (duration / robot.control_period + 1e-9).floor() as usize + 1;
    let mut report = ExecutionReport {
        final_pose: Pose2D::new(start.x, start.y, start.heading + angle),
        scans: 0,
        collision: world.is_occupied(start.position()),
        aborted: false,
        stopped: false,
        distance: 0.0,
        duration,
    };
    for k in 0..n_scans {
        let t = k as f64 * robot.control_period;
        let frac = if duration > 0.0 { t / duration } else { 1.0 };
        let pose = Pose2D::new(start.x, start.y, start.heading + angle * frac.min(1.0));
        if mapper.sense(world, &pose, laser, rng).is_ok() {
            report.scans += 1;
            let step = ExecutionStep {
                elapsed: t,
                pose,
                distance: 0.0,
            };
            if !on_scan(&step, &mapper.grid) {
                report.final_pose = pose;
                report.duration = t;
                report.stopped = true;
                break;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{spline_trajectory, ControlInput};

    fn arena() -> WorldModel {
        WorldModel::empty_arena(20.0, 20.0, 0.1).unwrap()
    }

    #[test]
    fn empty_world_noise_free_returns_max_range() {
        let w = arena();
        let laser = LaserConfig {
            max_range: 5.0,
            range_noise_sigma: 0.0,
            ..Default::default()
        };
        let r = simulate_scan_seeded(&w, &Pose2D::new(10.0, 10.0, 0.4), &laser, 1).unwrap();
        assert_eq!(r.len(), 181);
        assert!(r.iter().all(|&d| d == 5.0));
    }

    #[test]
    fn wall_ahead_is_seen_at_true_distance() {
        let mut w = arena();
        w.fill_rect(13.0, 0.0, 14.0, 20.0);
        let laser = LaserConfig {
            range_noise_sigma: 0.0,
            ..Default::default()
        };
        let pose = Pose2D::new(10.0, 10.05, 0.0);
        let r = simulate_scan_seeded(&w, &pose, &laser, 3).unwrap();
        assert!((r[90] - 3.0).abs() <= 0.1, "{}", r[90]);
        // identical to a raycast on a belief grid that knows the world
        let known = w.to_known_grid();
        for (i, &d) in r.iter().enumerate() {
            let (rc, _) = known
                .raycast(pose.position(), laser.beam_angle(pose.heading, i), laser.max_range, 0.65)
                .unwrap();
            assert_eq!(d, rc);
        }
    }

    #[test]
    fn scans_are_deterministic_per_seed() {
        let w = generate_world(4, &WorldSpec::default()).unwrap();
        let laser = LaserConfig::default();
        let pose = Pose2D::new(10.0, 10.0, 1.0);
        let a = simulate_scan_seeded(&w, &pose, &laser, 99).unwrap();
        let b = simulate_scan_seeded(&w, &pose, &laser, 99).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&d| (0.0..=laser.max_range).contains(&d)));
    }

    #[test]
    fn scanning_from_inside_an_obstacle_is_a_collision() {
        let w = arena();
        let err = simulate_scan_seeded(&w, &Pose2D::new(0.05, 5.0, 0.0), &LaserConfig::default(), 0);
        assert!(matches!(err, Err(Error::Collision { .. })));
    }

    #[test]
    fn zero_obstacles_gives_empty_arena() {
        let spec = WorldSpec {
            obstacle_count_min: 0,
            obstacle_count_max: 0,
            ..Default::default()
        };
        assert_eq!(generate_world(7, &spec).unwrap(), arena());
    }

    #[test]
    fn generation_is_deterministic_and_connected() {
        let spec = WorldSpec::default();
        assert_eq!(generate_world(11, &spec).unwrap(), generate_world(11, &spec).unwrap());
        for seed in 0..100 {
            let w = generate_world(seed, &spec).unwrap();
            assert!(!w.is_occupied(spec.start));
            let reach = flood_fill_oracle(&w, spec.start);
            assert!(2 * reach >= w.free_cell_count(), "seed {seed}");
        }
    }

    // Recursive-stack flood fill, independent of WorldModel::reachable_from.
    fn flood_fill_oracle(w: &WorldModel, start: Point2) -> usize {
        let g = w.geometry();
        let (sx, sy) = g.cell_of(start).unwrap();
        let mut seen = vec![vec![false; g.width]; g.height];
        let mut stack = vec![(sx as i64, sy as i64)];
        let mut n = 0;
        while let Some((x, y)) = stack.pop() {
            if x < 0 || y < 0 || x >= g.width as i64 || y >= g.height as i64 {
                continue;
            }
            let (ux, uy) = (x as usize, y as usize);
            if seen[uy][ux] || w.is_occupied_cell(g.index(ux, uy)) {
                continue;
            }
            seen[uy][ux] = true;
            n += 1;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    stack.push((x + dx, y + dy));
                }
            }
        }
        n
    }

    #[test]
    fn impossible_spec_fails_after_retries() {
        let spec = WorldSpec {
            obstacle_count_min: 5,
            obstacle_count_max: 5,
            obstacle_size_min: 30.0,
            obstacle_size_max: 40.0,
            ..Default::default()
        };
        assert!(matches!(generate_world(1, &spec), Err(Error::GenerationFailed { .. })));
    }

    fn mapper_for(w: &WorldModel) -> Mapper {
        Mapper::new(OccupancyGrid::from_geometry(*w.geometry()), SensorModel::default())
    }

    #[test]
    fn straight_path_ends_two_meters_ahead() {
        let w = arena();
        let robot = RobotConfig::default();
        let traj = spline_trajectory(&ControlInput::new(0.0, 0.0, 2.0), Pose2D::new(5.0, 5.0, 0.0), 0.5);
        let mut m = mapper_for(&w);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut steps = Vec::new();
        let rep = execute_path(&w, &robot, &LaserConfig::default(), &traj, &mut m, &mut rng, None, |s, _| {
            steps.push(*s);
            true
        });
        assert!(!rep.collision);
        assert!((rep.final_pose.x - 7.0).abs() < 1e-12 && (rep.final_pose.y - 5.0).abs() < 1e-12);
        // 2 m at 1 m/s with 0.2 s period: floor(2.0 / 0.2) + 1 scans
        assert_eq!(rep.scans, 11);
        assert_eq!(steps.len(), 11);
        for w in steps.windows(2) {
            let d = w[0].pose.position().distance(&w[1].pose.position());
            assert!(d <= robot.speed * robot.control_period + 1e-9);
        }
    }

    #[test]
    fn scan_count_follows_duration() {
        let w = arena();
        let robot = RobotConfig {
            speed: 0.7,
            max_turn_rate: 1.0,
            control_period: 0.3,
        };
        for len in [1.0, 2.35, 4.2] {
            let traj = spline_trajectory(&ControlInput::new(0.1, -0.1, len), Pose2D::new(5.0, 10.0, 0.0), 0.5);
            let mut m = mapper_for(&w);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let rep = execute_path(&w, &robot, &LaserConfig::default(), &traj, &mut m, &mut rng, None, |_, _| true);
            let expected = ((len / 0.7) / 0.3 + 1e-9).floor() as usize + 1;
            assert_eq!(rep.scans, expected, "len {len}");
        }
    }

    #[test]
    fn hidden_wall_triggers_collision() {
        let mut w = arena();
        w.fill_rect(6.0, 0.0, 6.3, 20.0);
        let traj = spline_trajectory(&ControlInput::new(0.0, 0.0, 3.0), Pose2D::new(5.0, 5.0, 0.0), 0.5);
        let mut m = mapper_for(&w);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rep = execute_path(&w, &RobotConfig::default(), &LaserConfig::default(), &traj, &mut m, &mut rng, None, |_, _| true);
        assert!(rep.collision);
        assert!((rep.final_pose.x - 6.0).abs() <= 0.1);
    }

    #[test]
    fn world_pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.pgm");
        let w = generate_world(3, &WorldSpec::default()).unwrap();
        w.write_pgm(&p).unwrap();
        assert_eq!(WorldModel::read_pgm(&p).unwrap(), w);
    }
}
