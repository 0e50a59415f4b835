//! Predicted information gain along a trajectory and the penalised objective.

use crate::error::{Error, Result};
use crate::map::{bernoulli_entropy, probability_from_logodds, walk_ray, OccupancyGrid, SensorModel};
use crate::sim::LaserConfig;
use crate::trajectory::Trajectory;

/// Forward-simulation switches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IgOptions {
    /// Beams terminate at the first cell at or above this probability.
    pub occ_threshold: f64,
    /// Cells strictly between the two thresholds count as unknown.
    pub free_threshold: f64,
    /// Stop beams at the first unknown cell instead of passing through.
    pub unknown_blocking: bool,
    /// Use every `beam_stride`-th beam of the laser fan.
    pub beam_stride: usize,
}

impl Default for IgOptions {
    fn default() -> Self {
        Self {
            occ_threshold: crate::map::DEFAULT_OCC_THRESHOLD,
            free_threshold: crate::map::DEFAULT_FREE_THRESHOLD,
            unknown_blocking: false,
            beam_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardTrace {
    /// Cumulative gain in bits after the scan at each waypoint.
    pub cumulative_ig: Vec<f64>,
    pub total_modified: f64,
    pub penalties: (f64, f64),
}

impl RewardTrace {
    pub fn total_ig(&self) -> f64 {
        self.cumulative_ig.last().copied().unwrap_or(0.0)
    }
}

/// Simulates a noise-free scan against the evolving belief at every waypoint
/// of `traj` and records the cumulative entropy reduction.
///
/// A cell is credited with its initial entropy minus the lowest entropy it
/// reaches along the way, so a cell nudged back toward 0.5 by a later miss
/// keeps the gain it already produced.
pub fn information_gain(
    grid: &OccupancyGrid,
    traj: &Trajectory,
    laser: &LaserConfig,
    model: &SensorModel,
    options: &IgOptions,
) -> Result<RewardTrace> {
    let geom = grid.geometry();
    if traj.is_empty() || traj.poses.iter().any(|p| !geom.contains(p.position())) {
        return Err(Error::InvalidTrajectory);
    }
    let stride = options.beam_stride.max(1);
    let mut logodds = grid.logodds_slice().to_vec();
    // lowest entropy seen per touched cell; negative means untouched
    let mut h_min = vec![-1.0; logodds.len()];
    let mut stamp = vec![0u32; logodds.len()];
    let mut is_hit = vec![false; logodds.len()];
    let mut touched: Vec<usize> = Vec::new();
    let mut gain = 0.0;
    let mut cumulative = Vec::with_capacity(traj.len());

    for (w, pose) in traj.poses.iter().enumerate() {
        let epoch = w as u32 + 1;
        touched.clear();
        let origin = pose.position();
        for b in (0..laser.beam_count).step_by(stride) {
            let angle = laser.beam_angle(pose.heading, b);
            walk_ray(geom, origin, angle, laser.max_range, |idx, _| {
                let p = probability_from_logodds(logodds[idx]);
                let hit = p >= options.occ_threshold;
                if stamp[idx] != epoch {
                    stamp[idx] = epoch;
                    is_hit[idx] = hit;
                    touched.push(idx);
                } else if hit {
                    is_hit[idx] = true;
                }
                let blocked = options.unknown_blocking && p > options.free_threshold;
                !(hit || blocked)
            });
        }
        for &idx in &touched {
            let before = logodds[idx];
            if h_min[idx] < 0.0 {
                h_min[idx] = bernoulli_entropy(probability_from_logodds(before));
            }
            let delta = if is_hit[idx] { model.logodds_hit } else { model.logodds_miss };
            let limit = crate::map::logodds_limit();
            let after = (before + delta).clamp(-limit, limit);
            logodds[idx] = after;
            let h = bernoulli_entropy(probability_from_logodds(after));
            if h < h_min[idx] {
                gain += h_min[idx] - h;
                h_min[idx] = h;
            }
        }
        cumulative.push(gain);
    }
    Ok(RewardTrace {
        cumulative_ig: cumulative,
        total_modified: -gain,
        penalties: (0.0, 0.0),
    })
}

/// Objective under the minimisation convention: `-IG + W1 P_H + W2 P_L`.
pub fn modified_reward(trace: &RewardTrace, p_h: f64, p_l: f64, w1: f64, w2: f64) -> f64 {
    -trace.total_ig() + w1 * p_h + w2 * p_l
}

/// Returns `trace` with its penalties and total filled in.
pub fn with_penalties(mut trace: RewardTrace, p_h: f64, p_l: f64, w1: f64, w2: f64) -> RewardTrace {
    trace.total_modified = modified_reward(&trace, p_h, p_l, w1, w2);
    trace.penalties = (p_h, p_l);
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point2, Pose2D};
    use crate::map::DEFAULT_OCC_THRESHOLD;
    use crate::sim::{simulate_scan_seeded, WorldModel};
    use crate::trajectory::{spline_trajectory, ControlInput};

    fn single_pose(p: Pose2D) -> Trajectory {
        let mut t = spline_trajectory(&ControlInput::new(0.0, 0.0, 1.0), p, 0.5);
        t.poses.truncate(1);
        t.arc_lengths.truncate(1);
        t
    }

    fn noiseless() -> LaserConfig {
        LaserConfig {
            range_noise_sigma: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn mapped_room_yields_no_gain() {
        let world = WorldModel::empty_arena(8.0, 8.0, 0.1).unwrap();
        let mut grid = world.to_known_grid();
        // make the known map confident
        for i in 0..grid.len() {
            let p = if world.is_occupied_cell(i) { 0.999 } else { 0.001 };
            grid.set_probability(i, p);
        }
        let traj = spline_trajectory(&ControlInput::new(0.0, 0.0, 3.0), Pose2D::new(2.0, 4.0, 0.0), 0.5);
        let trace = information_gain(&grid, &traj, &noiseless(), &SensorModel::default(), &IgOptions::default()).unwrap();
        for w in trace.cumulative_ig.windows(2) {
            assert!(w[1] - w[0] < 1e-3);
        }
        assert!(trace.total_ig() < 1e-3 * traj.len() as f64);
    }

    #[test]
    fn single_scan_matches_entropy_difference_oracle() {
        // Left half known free, right half unknown; 10 m beams reach the right half.
        let mut grid = OccupancyGrid::new(100, 60, 0.1, Point2::new(0.0, 0.0)).unwrap();
        for i in 0..grid.len() {
            let (cx, _) = grid.geometry().coords(i);
            if cx < 50 {
                grid.set_probability(i, 0.1);
            }
        }
        let pose = Pose2D::new(3.0, 3.0, 0.0);
        let laser = noiseless();
        let model = SensorModel::default();
        let trace = information_gain(&grid, &single_pose(pose), &laser, &model, &IgOptions::default()).unwrap();

        // Oracle: integrate the same observation with the map's own scan
        // integration, using max-range returns (no cell is above threshold).
        let mut after = grid.clone();
        let ranges = vec![laser.max_range; laser.beam_count];
        after.integrate_scan(&pose, &ranges, &laser, &model).unwrap();
        let expected = grid.entropy() - after.entropy();
        assert!(expected > 1.0);
        assert!((trace.total_ig() - expected).abs() < 1e-9 * expected.max(1.0), "{} vs {}", trace.total_ig(), expected);
    }

    #[test]
    fn scan_against_ground_truth_walls_matches_integration() {
        // Known walls, unknown interior: the simulated scan stops on walls.
        let world = WorldModel::empty_arena(6.0, 6.0, 0.1).unwrap();
        let mut grid = OccupancyGrid::new(60, 60, 0.1, Point2::new(0.0, 0.0)).unwrap();
        for i in 0..grid.len() {
            if world.is_occupied_cell(i) {
                grid.set_probability(i, 0.9);
            }
        }
        let pose = Pose2D::new(3.0, 3.0, 0.3);
        let laser = noiseless();
        let model = SensorModel::default();
        let trace = information_gain(&grid, &single_pose(pose), &laser, &model, &IgOptions::default()).unwrap();
        let ranges = simulate_scan_seeded(&world, &pose, &laser, 0).unwrap();
        let mut after = grid.clone();
        after.integrate_scan(&pose, &ranges, &laser, &model).unwrap();
        let expected = grid.entropy() - after.entropy();
        // beam endpoints are assigned slightly differently at wall corners
        assert!((trace.total_ig() - expected).abs() < 0.02 * expected, "{} vs {}", trace.total_ig(), expected);
    }

    #[test]
    fn gain_is_monotone_bounded_and_leaves_grid_untouched() {
        let grid = OccupancyGrid::new(120, 120, 0.1, Point2::new(0.0, 0.0)).unwrap();
        let copy = grid.clone();
        let traj = spline_trajectory(&ControlInput::new(0.4, -0.6, 6.0), Pose2D::new(4.0, 6.0, 0.2), 0.5);
        let a = information_gain(&grid, &traj, &noiseless(), &SensorModel::default(), &IgOptions::default()).unwrap();
        let b = information_gain(&grid, &traj, &noiseless(), &SensorModel::default(), &IgOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(grid, copy);
        assert_eq!(a.cumulative_ig.len(), traj.len());
        for w in a.cumulative_ig.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(a.total_ig() <= grid.entropy());
    }

    #[test]
    fn blocking_unknown_cells_lowers_gain() {
        let grid = OccupancyGrid::new(100, 100, 0.1, Point2::new(0.0, 0.0)).unwrap();
        let traj = single_pose(Pose2D::new(5.0, 5.0, 0.0));
        let open = information_gain(&grid, &traj, &noiseless(), &SensorModel::default(), &IgOptions::default()).unwrap();
        let blocked = information_gain(
            &grid,
            &traj,
            &noiseless(),
            &SensorModel::default(),
            &IgOptions {
                unknown_blocking: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(blocked.total_ig() > 0.0);
        assert!(blocked.total_ig() < 0.1 * open.total_ig());
        assert_eq!(DEFAULT_OCC_THRESHOLD, IgOptions::default().occ_threshold);
    }

    #[test]
    fn off_grid_waypoint_is_rejected() {
        let grid = OccupancyGrid::new(20, 20, 0.1, Point2::new(0.0, 0.0)).unwrap();
        let traj = spline_trajectory(&ControlInput::new(0.0, 0.0, 5.0), Pose2D::new(1.0, 1.0, 0.0), 0.5);
        assert!(matches!(
            information_gain(&grid, &traj, &noiseless(), &SensorModel::default(), &IgOptions::default()),
            Err(Error::InvalidTrajectory)
        ));
    }

    #[test]
    fn modified_reward_combines_terms() {
        let trace = RewardTrace {
            cumulative_ig: vec![0.0, 4.0, 10.0],
            total_modified: -10.0,
            penalties: (0.0, 0.0),
        };
        assert_eq!(modified_reward(&trace, 0.5, 0.2, 0.0, 0.0), -10.0);
        assert!(modified_reward(&trace, 0.1, 0.0, 1.0, 1.0) < modified_reward(&trace, 0.6, 0.0, 1.0, 1.0));
        let t = with_penalties(trace, 0.5, 0.25, 2.0, 4.0);
        assert_eq!(t.total_modified, -10.0 + 1.0 + 1.0);
        assert_eq!(t.penalties, (0.5, 0.25));
    }
}
