use explore_bench::{regression_data, scanned_world};
use explore_core::gp::{GpRegressor, Kernel};

#[test]
fn fixtures_are_reproducible() {
    let (_, a, pa) = scanned_world(3);
    let (_, b, pb) = scanned_world(3);
    assert_eq!(pa, pb);
    assert!((0..a.len()).all(|i| a.probability(i) == b.probability(i)));
    assert_eq!(regression_data(20, 3, 9), regression_data(20, 3, 9));
}

#[test]
fn regression_data_is_learnable() {
    let (xs, ys) = regression_data(60, 2, 4);
    let gp = GpRegressor::fit(xs, ys, Kernel::isotropic(2, 1.0, 1.0, 1e-4)).unwrap();
    let (mean, _) = gp.predict(&[0.3, -0.5]);
    assert!((mean - (0.3f64.sin() + (-0.5f64).sin())).abs() < 0.05, "{mean}");
}
