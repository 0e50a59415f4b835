//! Spline control space and everything evaluated along the resulting paths:
//! curvature and safety checks, invalid-path decomposition, the coarse global
//! path toward the nearest frontier, and the heading/length penalties.

use crate::geometry::{wrap_angle, Point2, Pose2D};
use crate::map::{self, OccupancyGrid};

/// Largest spacing between the dense samples used for safety checks and execution.
pub const DENSE_STEP: f64 = 0.05;

/// Spline parameters: curvature at both knots and arc length. Curvature varies
/// linearly with arc length between the knots, so heading is quadratic in arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub kappa_start: f64,
    pub kappa_end: f64,
    pub length: f64,
}

impl ControlInput {
    pub const DIM: usize = 3;

    pub fn new(kappa_start: f64, kappa_end: f64, length: f64) -> Self {
        Self {
            kappa_start,
            kappa_end,
            length,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.kappa_start, self.kappa_end, self.length]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// Curvature at arc length `s`.
    pub fn curvature_at(&self, s: f64) -> f64 {
        if self.length <= 0.0 {
            return self.kappa_start;
        }
        self.kappa_start + (self.kappa_end - self.kappa_start) * (s / self.length)
    }

    /// The same spline cut at arc length `s`.
    pub fn prefix(&self, s: f64) -> Self {
        Self::new(self.kappa_start, self.curvature_at(s), s)
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.kappa_start.abs().max(self.kappa_end.abs())
    }
}

/// Box bounds of the control space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBounds {
    pub kappa_box: f64,
    pub length_min: f64,
    pub length_max: f64,
}

impl Default for ControlBounds {
    fn default() -> Self {
        Self {
            kappa_box: 1.5,
            length_min: 1.0,
            length_max: 8.0,
        }
    }
}

impl ControlBounds {
    pub fn lower(&self) -> Vec<f64> {
        vec![-self.kappa_box, -self.kappa_box, self.length_min]
    }

    pub fn upper(&self) -> Vec<f64> {
        vec![self.kappa_box, self.kappa_box, self.length_max]
    }

    pub fn contains(&self, u: &ControlInput) -> bool {
        u.kappa_start.abs() <= self.kappa_box + 1e-12
            && u.kappa_end.abs() <= self.kappa_box + 1e-12
            && u.length >= self.length_min - 1e-12
            && u.length <= self.length_max + 1e-12
    }

    pub fn clamp(&self, u: &ControlInput) -> ControlInput {
        ControlInput::new(
            u.kappa_start.clamp(-self.kappa_box, self.kappa_box),
            u.kappa_end.clamp(-self.kappa_box, self.kappa_box),
            u.length.clamp(self.length_min, self.length_max),
        )
    }
}

/// One path piece with curvature varying linearly from `kappa_start` to `kappa_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub kappa_start: f64,
    pub kappa_end: f64,
    pub length: f64,
}

/// Pose after travelling `s` along a linear-curvature segment from `start`.
/// Heading is exact; position uses composite Simpson quadrature.
pub fn advance(start: &Pose2D, kappa0: f64, rate: f64, s: f64) -> Pose2D {
    let n = (((s.abs() / 0.01).ceil() as usize).max(1)) * 2;
    let h = s / n as f64;
    let heading = |t: f64| start.heading + kappa0 * t + 0.5 * rate * t * t;
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let th = heading(i as f64 * h);
        cx += w * th.cos();
        cy += w * th.sin();
    }
    Pose2D::new(
        start.x + cx * h / 3.0,
        start.y + cy * h / 3.0,
        heading(s),
    )
}

/// A path sampled at waypoints `ds` apart along the arc (the last step may be
/// shorter), with a finer sampling kept for safety checks and execution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<Pose2D>,
    pub arc_lengths: Vec<f64>,
    pub ds: f64,
    pub control: Option<ControlInput>,
    dense: Vec<Pose2D>,
    dense_s: Vec<f64>,
    /// Dense index of every waypoint.
    waypoint_dense: Vec<usize>,
    curvature_bound: f64,
}

impl Trajectory {
    /// Builds a path from consecutive segments.
    pub fn from_segments(start: Pose2D, segments: &[Segment], ds: f64) -> Self {
        assert!(ds > 0.0, "waypoint spacing must be positive");
        let total: f64 = segments.iter().map(|s| s.length).sum();
        let mut dense = vec![start];
        let mut dense_s = vec![0.0];
        let mut waypoint_dense = vec![0];
        let mut pose = start;
        let mut s_done = 0.0;
        let mut seg_idx = 0;
        let mut seg_offset = 0.0;
        let n_wp = if total > 0.0 {
            let k = (total / ds - 1e-9).ceil() as usize;
            k.max(1)
        } else {
            0
        };
        for w in 1..=n_wp {
            let s_target = (w as f64 * ds).min(total);
            let span = s_target - s_done;
            let n_sub = ((span / DENSE_STEP - 1e-9).ceil() as usize).max(1);
            for j in 1..=n_sub {
                let s_next = if j == n_sub {
                    s_target
                } else {
                    s_done + span * j as f64 / n_sub as f64
                };
                let prev_s = *dense_s.last().unwrap();
                let mut remaining = s_next - prev_s;
                while remaining > 1e-12 && seg_idx < segments.len() {
                    let seg = &segments[seg_idx];
                    let rate = if seg.length > 0.0 {
                        (seg.kappa_end - seg.kappa_start) / seg.length
                    } else {
                        0.0
                    };
                    let left = seg.length - seg_offset;
                    let step = remaining.min(left);
                    let k0 = seg.kappa_start + rate * seg_offset;
                    pose = advance(&pose, k0, rate, step);
                    seg_offset += step;
                    remaining -= step;
                    if seg.length - seg_offset <= 1e-12 {
                        seg_idx += 1;
                        seg_offset = 0.0;
                    }
                }
                dense.push(pose);
                dense_s.push(s_next);
            }
            s_done = s_target;
            waypoint_dense.push(dense.len() - 1);
        }
        let curvature_bound = segments
            .iter()
            .map(|s| s.kappa_start.abs().max(s.kappa_end.abs()))
            .fold(0.0, f64::max);
        let poses = waypoint_dense.iter().map(|&i| dense[i]).collect();
        let arc_lengths = waypoint_dense.iter().map(|&i| dense_s[i]).collect();
        Self {
            poses,
            arc_lengths,
            ds,
            control: None,
            dense,
            dense_s,
            waypoint_dense,
            curvature_bound,
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn start(&self) -> Pose2D {
        self.poses[0]
    }

    pub fn end(&self) -> Pose2D {
        *self.poses.last().unwrap()
    }

    pub fn length(&self) -> f64 {
        *self.arc_lengths.last().unwrap()
    }

    pub fn dense_poses(&self) -> &[Pose2D] {
        &self.dense
    }

    pub fn dense_arc_lengths(&self) -> &[f64] {
        &self.dense_s
    }

    /// Waypoint that closes the interval containing dense sample `d`.
    pub fn waypoint_of_dense(&self, d: usize) -> usize {
        self.waypoint_dense.partition_point(|&w| w < d)
    }

    pub fn dense_index_of_waypoint(&self, w: usize) -> usize {
        self.waypoint_dense[w]
    }

    /// Pose at arc length `s`, interpolated between dense samples.
    pub fn pose_at(&self, s: f64) -> Pose2D {
        let s = s.clamp(0.0, self.length());
        let i = self.dense_s.partition_point(|&v| v < s);
        if i == 0 {
            return self.dense[0];
        }
        if i >= self.dense.len() {
            return *self.dense.last().unwrap();
        }
        let (s0, s1) = (self.dense_s[i - 1], self.dense_s[i]);
        let t = if s1 > s0 { (s - s0) / (s1 - s0) } else { 1.0 };
        let (a, b) = (self.dense[i - 1], self.dense[i]);
        Pose2D::new(
            a.x + t * (b.x - a.x),
            a.y + t * (b.y - a.y),
            a.heading + t * wrap_angle(b.heading - a.heading),
        )
    }

    /// Largest curvature magnitude on the path.
    pub fn max_curvature(&self) -> f64 {
        self.curvature_bound
    }
}

/// Path generated by a spline control from `start`.
pub fn spline_trajectory(u: &ControlInput, start: Pose2D, ds: f64) -> Trajectory {
    let mut t = Trajectory::from_segments(
        start,
        &[Segment {
            kappa_start: u.kappa_start,
            kappa_end: u.kappa_end,
            length: u.length,
        }],
        ds,
    );
    t.control = Some(*u);
    t
}

pub fn max_curvature(traj: &Trajectory) -> f64 {
    traj.max_curvature()
}

/// Thresholds shared by every path safety test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyParams {
    /// Cells at or above this occupancy probability are obstacles.
    pub delta_safe: f64,
    /// Curvature ceiling.
    pub delta_kappa: f64,
    pub robot_radius: f64,
    /// Cells at or above this probability (and below `delta_safe`) count as unobserved.
    pub free_threshold: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            delta_safe: map::DEFAULT_OCC_THRESHOLD,
            delta_kappa: 1.0,
            robot_radius: 0.2,
            free_threshold: map::DEFAULT_FREE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationCause {
    Curvature,
    Occupancy,
    UnknownRegion,
    OutOfBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SafetyVerdict {
    pub valid: bool,
    pub first_violation_index: Option<usize>,
    pub cause: Option<ViolationCause>,
}

impl SafetyVerdict {
    pub const VALID: SafetyVerdict = SafetyVerdict {
        valid: true,
        first_violation_index: None,
        cause: None,
    };

    pub(crate) fn violation(cause: ViolationCause, index: Option<usize>) -> Self {
        Self {
            valid: false,
            first_violation_index: index,
            cause: Some(cause),
        }
    }
}

/// Curvature test, then a footprint sweep along the path in order.
pub fn check_path(traj: &Trajectory, grid: &OccupancyGrid, params: &SafetyParams) -> SafetyVerdict {
    if traj.max_curvature() > params.delta_kappa {
        return SafetyVerdict::violation(ViolationCause::Curvature, None);
    }
    check_footprint_from(traj, grid, params, 0)
}

/// Footprint sweep over dense samples starting at `from_dense`.
pub fn check_footprint_from(
    traj: &Trajectory,
    grid: &OccupancyGrid,
    params: &SafetyParams,
    from_dense: usize,
) -> SafetyVerdict {
    let mut cells = Vec::new();
    for (d, pose) in traj.dense.iter().enumerate().skip(from_dense) {
        let cause = footprint_violation(grid, pose.position(), params, &mut cells);
        if let Some(cause) = cause {
            return SafetyVerdict::violation(cause, Some(traj.waypoint_of_dense(d)));
        }
    }
    SafetyVerdict::VALID
}

/// Worst cell state inside the robot disc at `p`, if any is unsafe.
pub fn footprint_violation(
    grid: &OccupancyGrid,
    p: Point2,
    params: &SafetyParams,
    scratch: &mut Vec<usize>,
) -> Option<ViolationCause> {
    if !grid.geometry().disc_cells(p, params.robot_radius, scratch) {
        return Some(ViolationCause::OutOfBounds);
    }
    let mut unknown = false;
    for &c in scratch.iter() {
        let prob = grid.probability(c);
        if prob >= params.delta_safe {
            return Some(ViolationCause::Occupancy);
        }
        if prob >= params.free_threshold {
            unknown = true;
        }
    }
    unknown.then_some(ViolationCause::UnknownRegion)
}

/// A control derived from an invalid path together with its re-checked label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedSample {
    pub control: ControlInput,
    pub valid: bool,
    /// Set on the longest valid prefix.
    pub is_valid_prefix: bool,
}

/// Expands an invalid spline path into the longest valid prefix plus a short
/// ladder of prefixes on both sides of the violation. Every label comes from
/// re-running [`check_path`] on the derived control.
pub fn valid_prefix_decomposition(
    traj: &Trajectory,
    verdict: &SafetyVerdict,
    grid: &OccupancyGrid,
    params: &SafetyParams,
    bounds: &ControlBounds,
) -> Vec<DerivedSample> {
    let start = traj.start();
    valid_prefix_decomposition_with(traj, verdict, bounds, |c| {
        check_path(&spline_trajectory(&c, start, traj.ds), grid, params).valid
    })
}

/// As [`valid_prefix_decomposition`], with labels from `label`.
pub fn valid_prefix_decomposition_with(
    traj: &Trajectory,
    verdict: &SafetyVerdict,
    bounds: &ControlBounds,
    mut label: impl FnMut(ControlInput) -> bool,
) -> Vec<DerivedSample> {
    let Some(u) = traj.control else {
        return Vec::new();
    };
    if verdict.valid {
        return Vec::new();
    }
    let mut lengths: Vec<(f64, bool)> = Vec::new();
    match (verdict.cause, verdict.first_violation_index) {
        (Some(ViolationCause::Curvature), _) | (_, None) => {
            for frac in [0.5, 0.25] {
                lengths.push((u.length * frac, false));
            }
        }
        (_, Some(k)) => {
            if k >= 1 {
                lengths.push((traj.arc_lengths[k - 1], true));
            }
            if k >= 2 {
                lengths.push((traj.arc_lengths[k - 2], false));
            }
            for j in [k, k + 1] {
                if let Some(&s) = traj.arc_lengths.get(j) {
                    lengths.push((s, false));
                }
            }
        }
    }
    let mut out: Vec<DerivedSample> = Vec::new();
    for (s, is_prefix) in lengths {
        if s < bounds.length_min - 1e-9 || (s - u.length).abs() < 1e-9 {
            continue;
        }
        if out.iter().any(|d| (d.control.length - s).abs() < 1e-9) {
            continue;
        }
        let c = u.prefix(s);
        let valid = label(c);
        out.push(DerivedSample {
            control: c,
            valid,
            is_valid_prefix: is_prefix && valid,
        });
    }
    out
}

/// Direction toward the nearest frontier along a grid path that may cross unknown space.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarsePath {
    pub direction: f64,
    pub path: Vec<Point2>,
    pub goal: Point2,
    pub length: f64,
}

/// Grid path from `start` to the nearest frontier cluster (by path length to the
/// member cell closest to the cluster centroid). `None` when no frontier exists
/// or none is reachable.
pub fn coarse_global_path(
    grid: &OccupancyGrid,
    start: &Pose2D,
    free_threshold: f64,
    occ_threshold: f64,
    min_cluster_size: usize,
    lookahead: f64,
) -> Option<CoarsePath> {
    let frontiers = grid.frontiers(free_threshold, min_cluster_size);
    if frontiers.is_empty() {
        return None;
    }
    let geom = grid.geometry();
    let start_idx = geom.index_of(start.position())?;
    let (dist, prev) = map::grid_distances(geom, start_idx, |i| grid.probability(i) < occ_threshold);
    let mut best: Option<(f64, usize, Point2)> = None;
    for cluster in &frontiers.clusters {
        let target = cluster_anchor(grid, &cluster.cells, cluster.centroid);
        let d = dist[target];
        if d.is_finite() && best.map_or(true, |(bd, _, _)| d < bd) {
            best = Some((d, target, cluster.centroid));
        }
    }
    let (length, target, _) = best?;
    let cells = map::trace_path(&prev, start_idx, target);
    let mut path: Vec<Point2> = cells
        .iter()
        .map(|&c| {
            let (x, y) = geom.coords(c);
            geom.cell_center(x, y)
        })
        .collect();
    path[0] = start.position();
    let aim = point_along(&path, lookahead);
    let direction = if aim.distance(&start.position()) < 1e-9 {
        start.heading
    } else {
        start.position().bearing_to(&aim)
    };
    let goal = *path.last().unwrap();
    Some(CoarsePath {
        direction,
        path,
        goal,
        length,
    })
}

/// Member cell nearest to the cluster centroid.
pub fn cluster_anchor(grid: &OccupancyGrid, cells: &[usize], centroid: Point2) -> usize {
    let geom = grid.geometry();
    *cells
        .iter()
        .min_by(|&&a, &&b| {
            let pa = geom.cell_center(geom.coords(a).0, geom.coords(a).1);
            let pb = geom.cell_center(geom.coords(b).0, geom.coords(b).1);
            pa.distance(&centroid)
                .total_cmp(&pb.distance(&centroid))
                .then(a.cmp(&b))
        })
        .expect("frontier clusters are non-empty")
}

fn point_along(path: &[Point2], distance: f64) -> Point2 {
    let mut left = distance;
    for w in path.windows(2) {
        let seg = w[0].distance(&w[1]);
        if seg >= left && seg > 0.0 {
            let t = left / seg;
            return Point2::new(w[0].x + t * (w[1].x - w[0].x), w[0].y + t * (w[1].y - w[0].y));
        }
        left -= seg;
    }
    *path.last().unwrap()
}

/// Endpoint of the spline path from `start`.
pub fn control_endpoint(u: &ControlInput, start: &Pose2D) -> Pose2D {
    let rate = if u.length > 0.0 {
        (u.kappa_end - u.kappa_start) / u.length
    } else {
        0.0
    };
    advance(start, u.kappa_start, rate, u.length)
}

/// `(1 - cos d) / 2` where `d` is the angle between the path's endpoint bearing
/// and the coarse direction.
pub fn heading_penalty_for_endpoint(endpoint: Point2, start: &Pose2D, coarse_direction: f64) -> f64 {
    let bearing = if endpoint.distance(&start.position()) < 1e-12 {
        start.heading
    } else {
        start.position().bearing_to(&endpoint)
    };
    (1.0 - (bearing - coarse_direction).cos()) / 2.0
}

pub fn heading_penalty(u: &ControlInput, start: &Pose2D, coarse_direction: f64) -> f64 {
    let end = control_endpoint(u, start);
    heading_penalty_for_endpoint(end.position(), start, coarse_direction)
}

/// Quadratic penalty on departure from the preferred length, scaled by the length range.
pub fn length_penalty(u: &ControlInput, bounds: &ControlBounds, preferred_length: f64) -> f64 {
    let span = bounds.length_max - bounds.length_min;
    ((u.length - preferred_length) / span).powi(2)
}
