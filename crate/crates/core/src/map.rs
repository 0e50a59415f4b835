//! Occupancy grid belief: log-odds cells, scan integration, entropy, ray traversal,
//! frontier detection and PGM import/export.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2D};
use crate::sim::LaserConfig;

/// Lower probability clamp. Cells never leave `[P_MIN, 1 - P_MIN]`.
pub const P_MIN: f64 = 0.001;
pub const DEFAULT_OCC_THRESHOLD: f64 = 0.65;
pub const DEFAULT_FREE_THRESHOLD: f64 = 0.35;
pub const DEFAULT_MIN_CLUSTER_SIZE: usize = 3;

/// Log-odds corresponding to `1 - P_MIN`.
pub fn logodds_limit() -> f64 {
    ((1.0 - P_MIN) / P_MIN).ln()
}

pub fn probability_from_logodds(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

pub fn logodds_from_probability(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Bernoulli entropy in bits.
pub fn bernoulli_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Inverse sensor model for a range beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub logodds_hit: f64,
    pub logodds_miss: f64,
    pub occ_threshold: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            logodds_hit: 0.85,
            logodds_miss: -0.4,
            occ_threshold: DEFAULT_OCC_THRESHOLD,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.logodds_hit > 0.0) || !(self.logodds_miss < 0.0) {
            return Err(Error::Config(
                "sensor model needs logodds_hit > 0 and logodds_miss < 0".into(),
            ));
        }
        if !(self.occ_threshold > 0.5 && self.occ_threshold < 1.0) {
            return Err(Error::Config("occ_threshold must lie in (0.5, 1)".into()));
        }
        Ok(())
    }
}

/// Placement and size of a regular grid in the world frame. `origin` is the
/// lower-left corner of cell (0, 0); x grows with column, y with row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: Point2,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, resolution: f64, origin: Point2) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("grid needs at least one cell".into()));
        }
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidInput("grid resolution must be positive".into()));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, cx: usize, cy: usize) -> usize {
        cy * self.width + cx
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    /// Cell containing a world point, if inside.
    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn index_of(&self, p: Point2) -> Option<usize> {
        self.cell_of(p).map(|(x, y)| self.index(x, y))
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.cell_of(p).is_some()
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> Point2 {
        Point2::new(
            self.origin.x + (cx as f64 + 0.5) * self.resolution,
            self.origin.y + (cy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        )
    }

    /// Indices of 8-connected neighbours.
    pub fn neighbors8(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (cx, cy) = self.coords(idx);
        let (w, h) = (self.width as isize, self.height as isize);
        (-1isize..=1)
            .flat_map(|dy| (-1isize..=1).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| dx != 0 || dy != 0)
            .filter_map(move |(dx, dy)| {
                let nx = cx as isize + dx;
                let ny = cy as isize + dy;
                (nx >= 0 && ny >= 0 && nx < w && ny < h).then(|| ny as usize * self.width + nx as usize)
            })
    }

    /// Indices of cells whose centres lie within `radius` of `p`. Returns `None`
    /// when part of the disc falls outside the grid.
    pub fn disc_cells(&self, p: Point2, radius: f64, out: &mut Vec<usize>) -> bool {
        out.clear();
        let r = radius.max(0.0);
        let min_x = ((p.x - r - self.origin.x) / self.resolution - 0.5).ceil();
        let max_x = ((p.x + r - self.origin.x) / self.resolution - 0.5).floor();
        let min_y = ((p.y - r - self.origin.y) / self.resolution - 0.5).ceil();
        let max_y = ((p.y + r - self.origin.y) / self.resolution - 0.5).floor();
        let inside = self.contains(p)
            && min_x >= 0.0
            && min_y >= 0.0
            && max_x < self.width as f64
            && max_y < self.height as f64;
        if !inside {
            return false;
        }
        let r2 = r * r;
        for cy in (min_y as usize)..=(max_y as usize).max(min_y as usize) {
            for cx in (min_x as usize)..=(max_x as usize).max(min_x as usize) {
                let c = self.cell_center(cx, cy);
                let (dx, dy) = (c.x - p.x, c.y - p.y);
                if dx * dx + dy * dy <= r2 + 1e-12 {
                    out.push(self.index(cx, cy));
                }
            }
        }
        // A disc smaller than a cell still covers the cell it sits in.
        if out.is_empty() {
            if let Some(i) = self.index_of(p) {
                out.push(i);
            }
        }
        true
    }
}

/// Walks the cells pierced by a ray with an Amanatides-Woo traversal.
///
/// `visit(index, t_enter)` is called for every cell in order, starting with the
/// cell holding `origin` (`t_enter = 0`); returning `false` stops the walk. The
/// walk also ends when the ray leaves the grid or `t_enter >= max_range`.
pub fn walk_ray(
    geom: &GridGeometry,
    origin: Point2,
    angle: f64,
    max_range: f64,
    mut visit: impl FnMut(usize, f64) -> bool,
) {
    let Some((cx0, cy0)) = geom.cell_of(origin) else {
        return;
    };
    let res = geom.resolution;
    let (dx, dy) = (angle.cos(), angle.sin());
    let (mut cx, mut cy) = (cx0 as isize, cy0 as isize);
    let ox = origin.x - geom.origin.x;
    let oy = origin.y - geom.origin.y;

    let (step_x, mut t_max_x, t_delta_x) = axis_setup(dx, ox, cx, res);
    let (step_y, mut t_max_y, t_delta_y) = axis_setup(dy, oy, cy, res);

    let mut t = 0.0;
    loop {
        if !visit(geom.index(cx as usize, cy as usize), t) {
            return;
        }
        if t_max_x < t_max_y {
            t = t_max_x;
            cx += step_x;
            t_max_x += t_delta_x;
        } else {
            t = t_max_y;
            cy += step_y;
            t_max_y += t_delta_y;
        }
        if t >= max_range
            || cx < 0
            || cy < 0
            || cx >= geom.width as isize
            || cy >= geom.height as isize
        {
            return;
        }
    }
}

fn axis_setup(d: f64, o: f64, c: isize, res: f64) -> (isize, f64, f64) {
    if d > 1e-12 {
        let boundary = (c + 1) as f64 * res;
        (1, (boundary - o) / d, res / d)
    } else if d < -1e-12 {
        let boundary = c as f64 * res;
        (-1, (boundary - o) / d, -res / d)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

/// Coarse classification of a cell against the free/occupied thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellState {
    Free,
    Unknown,
    Occupied,
}

/// Log-odds Bernoulli occupancy belief over a 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    geometry: GridGeometry,
    logodds: Vec<f64>,
}

impl OccupancyGrid {
    /// All-unknown grid.
    pub fn new(width: usize, height: usize, resolution: f64, origin: Point2) -> Result<Self> {
        let geometry = GridGeometry::new(width, height, resolution, origin)?;
        Ok(Self::from_geometry(geometry))
    }

    pub fn from_geometry(geometry: GridGeometry) -> Self {
        Self {
            logodds: vec![0.0; geometry.len()],
            geometry,
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn resolution(&self) -> f64 {
        self.geometry.resolution
    }

    pub fn origin(&self) -> Point2 {
        self.geometry.origin
    }

    pub fn len(&self) -> usize {
        self.logodds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logodds.is_empty()
    }

    pub fn logodds(&self, idx: usize) -> f64 {
        self.logodds[idx]
    }

    pub fn logodds_slice(&self) -> &[f64] {
        &self.logodds
    }

    pub fn probability(&self, idx: usize) -> f64 {
        probability_from_logodds(self.logodds[idx])
    }

    pub fn probability_at(&self, p: Point2) -> Option<f64> {
        self.geometry.index_of(p).map(|i| self.probability(i))
    }

    /// Sets a cell's log-odds, clamped to the probability limits.
    pub fn set_logodds(&mut self, idx: usize, l: f64) {
        let lim = logodds_limit();
        self.logodds[idx] = l.clamp(-lim, lim);
    }

    pub fn set_probability(&mut self, idx: usize, p: f64) {
        let p = p.clamp(P_MIN, 1.0 - P_MIN);
        self.set_logodds(idx, logodds_from_probability(p));
    }

    /// Adds `delta` to a cell's log-odds and clamps.
    pub fn update_logodds(&mut self, idx: usize, delta: f64) {
        let l = self.logodds[idx] + delta;
        self.set_logodds(idx, l);
    }

    pub fn cell_state(&self, idx: usize, free_threshold: f64, occ_threshold: f64) -> CellState {
        let p = self.probability(idx);
        if p >= occ_threshold {
            CellState::Occupied
        } else if p < free_threshold {
            CellState::Free
        } else {
            CellState::Unknown
        }
    }

    /// Integrates one range scan taken at `pose`.
    ///
    /// Each cell is updated at most once per scan; a cell that is both the end of
    /// one beam and crossed by another receives the hit update only.
    pub fn integrate_scan(
        &mut self,
        pose: &Pose2D,
        ranges: &[f64],
        laser: &LaserConfig,
        model: &SensorModel,
    ) -> Result<()> {
        if !self.geometry.contains(pose.position()) {
            return Err(Error::OutOfBounds {
                x: pose.x,
                y: pose.y,
            });
        }
        if ranges.len() != laser.beam_count {
            return Err(Error::InvalidInput(format!(
                "expected {} ranges, got {}",
                laser.beam_count,
                ranges.len()
            )));
        }
        let (hits, misses) = scan_cells(&self.geometry, pose, ranges, laser);
        self.apply_updates(&hits, &misses, model);
        Ok(())
    }

    /// Applies pre-computed per-cell hit/miss sets (sorted, deduplicated).
    pub(crate) fn apply_updates(&mut self, hits: &[usize], misses: &[usize], model: &SensorModel) {
        for &i in hits {
            self.update_logodds(i, model.logodds_hit);
        }
        for &i in misses {
            if hits.binary_search(&i).is_err() {
                self.update_logodds(i, model.logodds_miss);
            }
        }
    }

    /// Total Bernoulli entropy of the map in bits.
    pub fn entropy(&self) -> f64 {
        self.logodds
            .iter()
            .map(|&l| bernoulli_entropy(probability_from_logodds(l)))
            .sum()
    }

    /// Distance along a ray to the first cell with `p >= occ_threshold`.
    pub fn raycast(
        &self,
        origin: Point2,
        angle: f64,
        max_range: f64,
        occ_threshold: f64,
    ) -> Result<(f64, bool)> {
        if !self.geometry.contains(origin) {
            return Err(Error::OutOfBounds {
                x: origin.x,
                y: origin.y,
            });
        }
        let mut result = (max_range, false);
        walk_ray(&self.geometry, origin, angle, max_range, |idx, t| {
            if self.probability(idx) >= occ_threshold {
                result = (t.min(max_range), true);
                false
            } else {
                true
            }
        });
        Ok(result)
    }

    /// Frontier cells clustered with 8-connectivity; clusters smaller than
    /// `min_cluster_size` are dropped.
    pub fn frontiers(&self, free_threshold: f64, min_cluster_size: usize) -> FrontierSet {
        let g = &self.geometry;
        let is_frontier: Vec<bool> = (0..g.len())
            .map(|i| self.is_frontier_cell(i, free_threshold))
            .collect();
        let mut seen = vec![false; g.len()];
        let mut clusters = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..g.len() {
            if !is_frontier[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            queue.push_back(start);
            let mut cells = Vec::new();
            while let Some(c) = queue.pop_front() {
                cells.push(c);
                for n in g.neighbors8(c) {
                    if is_frontier[n] && !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
            if cells.len() < min_cluster_size {
                continue;
            }
            cells.sort_unstable();
            let (sx, sy) = cells.iter().fold((0.0, 0.0), |(sx, sy), &c| {
                let (cx, cy) = g.coords(c);
                let p = g.cell_center(cx, cy);
                (sx + p.x, sy + p.y)
            });
            let n = cells.len() as f64;
            clusters.push(FrontierCluster {
                centroid: Point2::new(sx / n, sy / n),
                size: cells.len(),
                cells,
            });
        }
        FrontierSet { clusters }
    }

    /// Free cell with at least one 8-neighbour in the unknown band.
    pub fn is_frontier_cell(&self, idx: usize, free_threshold: f64) -> bool {
        let unknown = |i: usize| {
            let p = self.probability(i);
            p >= free_threshold && p <= 1.0 - free_threshold
        };
        self.probability(idx) < free_threshold && self.geometry.neighbors8(idx).any(unknown)
    }

    /// Writes the grid as an 8-bit binary PGM plus a `.meta` sidecar holding
    /// resolution and origin.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let g = &self.geometry;
        let mut bytes = format!("P5\n{} {}\n255\n", g.width, g.height).into_bytes();
        bytes.reserve(g.len());
        for row in (0..g.height).rev() {
            for col in 0..g.width {
                bytes.push(probability_to_pixel(self.logodds[g.index(col, row)]));
            }
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        write_sidecar(path, g)
    }

    /// Reads a grid written by [`OccupancyGrid::write_pgm`] (or any P5 map with
    /// the same pixel convention). A missing sidecar is an error.
    pub fn read_pgm(path: &Path) -> Result<Self> {
        let (width, height, pixels) = read_pgm_pixels(path)?;
        let (resolution, origin) = read_sidecar(path)?;
        let geometry = GridGeometry::new(width, height, resolution, origin)?;
        let mut grid = Self::from_geometry(geometry);
        for row in 0..height {
            for col in 0..width {
                let v = pixels[(height - 1 - row) * width + col];
                let idx = geometry.index(col, row);
                if v == UNKNOWN_PIXEL {
                    grid.logodds[idx] = 0.0;
                } else {
                    grid.set_probability(idx, 1.0 - v as f64 / 255.0);
                }
            }
        }
        Ok(grid)
    }
}

const UNKNOWN_PIXEL: u8 = 127;

fn probability_to_pixel(l: f64) -> u8 {
    if l == 0.0 {
        return UNKNOWN_PIXEL;
    }
    let v = ((1.0 - probability_from_logodds(l)) * 255.0).round() as u8;
    // 127 is reserved for exactly-unknown cells.
    match v {
        UNKNOWN_PIXEL if l > 0.0 => 126,
        UNKNOWN_PIXEL => 128,
        v => v,
    }
}

/// Cells hit and crossed by a scan, each list sorted and deduplicated.
pub(crate) fn scan_cells(
    geom: &GridGeometry,
    pose: &Pose2D,
    ranges: &[f64],
    laser: &LaserConfig,
) -> (Vec<usize>, Vec<usize>) {
    let mut hits = Vec::with_capacity(ranges.len());
    let mut misses = Vec::new();
    let origin = pose.position();
    for (i, &r) in ranges.iter().enumerate() {
        let angle = laser.beam_angle(pose.heading, i);
        beam_cells(geom, origin, angle, r, laser.max_range, &mut hits, &mut misses);
    }
    hits.sort_unstable();
    hits.dedup();
    misses.sort_unstable();
    misses.dedup();
    (hits, misses)
}

/// Cells crossed and hit by one beam. The hit goes to the cell containing the
/// point half a cell beyond the measured range, so returns that stop just short
/// of a cell boundary still mark the surface cell rather than the free one in front.
pub(crate) fn beam_cells(
    geom: &GridGeometry,
    origin: Point2,
    angle: f64,
    range: f64,
    max_range: f64,
    hits: &mut Vec<usize>,
    misses: &mut Vec<usize>,
) {
    if range >= max_range {
        walk_ray(geom, origin, angle, max_range, |idx, _| {
            misses.push(idx);
            true
        });
        return;
    }
    let target = range.max(0.0) + 0.5 * geom.resolution;
    let end = Point2::new(origin.x + target * angle.cos(), origin.y + target * angle.sin());
    let end_idx = geom.index_of(end);
    let mut reached = false;
    walk_ray(geom, origin, angle, target, |idx, _| {
        if Some(idx) == end_idx {
            reached = true;
            return false;
        }
        misses.push(idx);
        true
    });
    if reached {
        hits.push(end_idx.unwrap());
    }
}

/// One connected group of frontier cells.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierCluster {
    pub centroid: Point2,
    pub size: usize,
    /// Member cell indices, sorted.
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrontierSet {
    pub clusters: Vec<FrontierCluster>,
}

impl FrontierSet {
    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    cost: f64,
    idx: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest 8-connected grid distances (meters, octile step costs) from `start`
/// over cells accepted by `passable`. Unreached cells hold `f64::INFINITY`.
/// Returns the distance field and the predecessor of every reached cell.
pub fn grid_distances(
    geom: &GridGeometry,
    start: usize,
    passable: impl Fn(usize) -> bool,
) -> (Vec<f64>, Vec<usize>) {
    let mut dist = vec![f64::INFINITY; geom.len()];
    let mut prev = vec![usize::MAX; geom.len()];
    let mut heap = BinaryHeap::new();
    dist[start] = 0.0;
    heap.push(HeapEntry {
        cost: 0.0,
        idx: start,
    });
    let diag = std::f64::consts::SQRT_2 * geom.resolution;
    while let Some(HeapEntry { cost, idx }) = heap.pop() {
        if cost > dist[idx] {
            continue;
        }
        let (cx, cy) = geom.coords(idx);
        for n in geom.neighbors8(idx) {
            if !passable(n) {
                continue;
            }
            let (nx, ny) = geom.coords(n);
            let step = if nx != cx && ny != cy {
                diag
            } else {
                geom.resolution
            };
            let c = cost + step;
            if c < dist[n] {
                dist[n] = c;
                prev[n] = idx;
                heap.push(HeapEntry { cost: c, idx: n });
            }
        }
    }
    (dist, prev)
}

/// Cell path from the search root to `goal` following predecessors.
pub fn trace_path(prev: &[usize], start: usize, goal: usize) -> Vec<usize> {
    let mut path = vec![goal];
    let mut cur = goal;
    while cur != start {
        cur = prev[cur];
        if cur == usize::MAX {
            return Vec::new();
        }
        path.push(cur);
    }
    path.reverse();
    path
}

pub(crate) fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

pub(crate) fn write_sidecar(path: &Path, g: &GridGeometry) -> Result<()> {
    let meta = sidecar_path(path);
    let mut f = fs::File::create(&meta).map_err(|e| Error::io(&meta, e))?;
    writeln!(
        f,
        "resolution = {}\norigin_x = {}\norigin_y = {}",
        g.resolution, g.origin.x, g.origin.y
    )
    .map_err(|e| Error::io(&meta, e))
}

pub(crate) fn read_sidecar(path: &Path) -> Result<(f64, Point2)> {
    let meta = sidecar_path(path);
    let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
    let mut resolution = None;
    let mut origin = Point2::default();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::MapFormat {
                path: meta.clone(),
                reason: format!("expected key = value, got {line:?}"),
            });
        };
        let v: f64 = v.trim().parse().map_err(|_| Error::MapFormat {
            path: meta.clone(),
            reason: format!("bad number in {line:?}"),
        })?;
        match k.trim() {
            "resolution" => resolution = Some(v),
            "origin_x" => origin.x = v,
            "origin_y" => origin.y = v,
            other => {
                return Err(Error::MapFormat {
                    path: meta.clone(),
                    reason: format!("unknown key {other:?}"),
                })
            }
        }
    }
    let resolution = resolution.ok_or_else(|| Error::MapFormat {
        path: meta.clone(),
        reason: "missing resolution".into(),
    })?;
    Ok((resolution, origin))
}

/// Parses a binary (P5) 8-bit PGM, returning width, height and the pixel rows
/// top to bottom.
pub(crate) fn read_pgm_pixels(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::MapFormat {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if tokens[0] != "P5" {
        return Err(bad("only binary P5 maps are supported"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval != 255 {
        return Err(bad("only 8-bit maps are supported"));
    }
    if w == 0 || h == 0 {
        return Err(bad("empty image"));
    }
    let raster = bytes.get(pos..pos + w * h).ok_or_else(|| bad("truncated raster"))?;
    Ok((w, h, raster.to_vec()))
}
