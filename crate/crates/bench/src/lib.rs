//! Shared fixtures for the benchmarks.

use explore_core::map::OccupancyGrid;
use explore_core::sim::{generate_world, LaserConfig, Mapper, WorldModel, WorldSpec};
use explore_core::Pose2D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A default generated world and the belief after a full turn at the start.
pub fn scanned_world(seed: u64) -> (WorldModel, OccupancyGrid, Pose2D) {
    let spec = WorldSpec::default();
    let world = generate_world(seed, &spec).expect("default world spec is valid");
    let mut mapper = Mapper::new(OccupancyGrid::from_geometry(*world.geometry()), Default::default());
    let laser = LaserConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..4 {
        let pose = Pose2D::new(spec.start.x, spec.start.y, k as f64 * std::f64::consts::FRAC_PI_2);
        mapper.sense(&world, &pose, &laser, &mut rng).expect("start is free");
    }
    (world, mapper.grid, Pose2D::new(spec.start.x, spec.start.y, 0.0))
}

/// `n` points in `[-2, 2]^d` with a smooth target.
pub fn regression_data(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let ys = xs.iter().map(|x| x.iter().map(|v| v.sin()).sum()).collect();
    (xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_has_known_cells() {
        let (_, grid, _) = scanned_world(1);
        let known = (0..grid.len()).filter(|&i| (grid.probability(i) - 0.5).abs() > 0.1).count();
        assert!(known > 1000);
    }
}
