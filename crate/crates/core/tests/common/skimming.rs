//! Obstacle-skimming scenarios: a robot facing unexplored space that can only
//! be reached through narrow gaps between pillars.

use explore_core::map::OccupancyGrid;
use explore_core::planner::{plan, PlanStatus, PlannerConfig, PlannerState};
use explore_core::sim::WorldModel;
use explore_core::trajectory::{footprint_violation, spline_trajectory, ControlInput, ViolationCause, DENSE_STEP};
use explore_core::Pose2D;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const SIGMA_XY: f64 = 0.15;
pub const SIGMA_THETA_DEG: f64 = 5.0;
const KNOWN_UNTIL_X: f64 = 8.0;

pub struct Scenario {
    pub world: WorldModel,
    pub belief: OccupancyGrid,
    pub start: Pose2D,
}

pub fn pose_covariance() -> Matrix3<f64> {
    let t = SIGMA_THETA_DEG.to_radians();
    Matrix3::from_diagonal(&Vector3::new(SIGMA_XY * SIGMA_XY, SIGMA_XY * SIGMA_XY, t * t))
}

/// A wall of pillars across the arena at x in [4.5, 5.0] leaving gaps of
/// 0.55..0.9 m; everything left of `KNOWN_UNTIL_X` is mapped, the rest unknown.
pub fn scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = WorldModel::empty_arena(14.0, 8.0, 0.1).unwrap();
    let x0 = 4.5 + rng.gen_range(-0.3..0.3);
    let mut y = 0.0;
    while y < 8.0 {
        let post = rng.gen_range(0.6..1.6);
        world.fill_rect(x0, y, x0 + 0.5, (y + post).min(8.0));
        y += post + rng.gen_range(0.55..0.9);
    }
    let mut belief = world.to_known_grid();
    let geom = *belief.geometry();
    for i in 0..belief.len() {
        let (cx, cy) = geom.coords(i);
        let p = geom.cell_center(cx, cy);
        let v = if p.x >= KNOWN_UNTIL_X {
            0.5
        } else if world.is_occupied_cell(i) {
            0.95
        } else {
            0.05
        };
        belief.set_probability(i, v);
    }
    let start = Pose2D::new(1.8 + rng.gen_range(0.0..0.6), rng.gen_range(2.0..6.0), rng.gen_range(-0.4..0.4));
    Scenario { world, belief, start }
}

/// True when the robot disc overlaps a ground-truth obstacle anywhere on the path.
pub fn footprint_collides(world: &WorldModel, truth: &OccupancyGrid, u: &ControlInput, start: Pose2D, radius: f64) -> bool {
    let traj = spline_trajectory(u, start, 0.5);
    let params = explore_core::trajectory::SafetyParams {
        robot_radius: radius,
        ..Default::default()
    };
    let mut scratch = Vec::new();
    debug_assert!(DENSE_STEP <= 0.05);
    traj.dense_poses().iter().any(|p| {
        world.is_occupied(p.position())
            || matches!(
                footprint_violation(truth, p.position(), &params, &mut scratch),
                Some(ViolationCause::Occupancy) | Some(ViolationCause::OutOfBounds)
            )
    })
}

pub struct SuiteResult {
    pub scenarios: usize,
    pub planned: usize,
    pub collisions: usize,
    pub colliding_scenarios: usize,
}

/// Plans once per scenario and replays the chosen control from `draws`
/// start poses sampled around the believed pose.
pub fn run_suite(config: &PlannerConfig, seeds: std::ops::Range<u64>, draws: usize) -> SuiteResult {
    let cov = pose_covariance();
    let nx = Normal::new(0.0, cov[(0, 0)].sqrt()).unwrap();
    let nt = Normal::new(0.0, cov[(2, 2)].sqrt()).unwrap();
    let mut out = SuiteResult {
        scenarios: 0,
        planned: 0,
        collisions: 0,
        colliding_scenarios: 0,
    };
    for seed in seeds {
        let sc = scenario(seed);
        let mut truth = sc.world.to_known_grid();
        for i in 0..truth.len() {
            truth.set_probability(i, if sc.world.is_occupied_cell(i) { 0.999 } else { 0.001 });
        }
        out.scenarios += 1;
        let mut state = PlannerState::default();
        let outcome = plan(&sc.belief, sc.start, config, &mut state, seed).unwrap();
        if outcome.status != PlanStatus::Planned {
            continue;
        }
        out.planned += 1;
        let u = outcome.control.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut hit = 0;
        for _ in 0..draws {
            let p = Pose2D::new(sc.start.x + nx.sample(&mut rng), sc.start.y + nx.sample(&mut rng), sc.start.heading + nt.sample(&mut rng));
            if footprint_collides(&sc.world, &truth, &u, p, config.safety.robot_radius) {
                hit += 1;
            }
        }
        out.collisions += hit;
        if hit > 0 {
            out.colliding_scenarios += 1;
        }
    }
    out
}
