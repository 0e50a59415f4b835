//! Benchmark tables, repeatability runs and artifact export.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{run_episode_in, CycleAction, EpisodeLog, EpisodeStatus, ExperimentConfig, PlannerId};
use crate::error::{Error, Result};
use crate::geometry::Pose2D;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub planner: PlannerId,
    pub world_seed: u64,
    pub seed: u64,
    pub status: Option<EpisodeStatus>,
    pub termination: String,
    pub exploration_time: f64,
    pub final_entropy: f64,
    pub path_length: f64,
    pub coverage: f64,
    pub planning_time: f64,
    /// Planned waypoints that were unsafe on the belief at planning time.
    pub unsafe_waypoints: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchAggregate {
    pub planner: PlannerId,
    pub world_seed: u64,
    pub runs: usize,
    pub completed: usize,
    pub mean_time: f64,
    pub std_time: f64,
    pub mean_entropy: f64,
    pub mean_path_length: f64,
    pub mean_coverage: f64,
    pub mean_planning_time: f64,
    /// Mean time as a percentage of the slowest planner on the same world.
    pub percent_of_slowest: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<BenchAggregate>,
}

/// `100 * value / max(values)` for every value.
pub fn percent_of_slowest(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| if max > 0.0 { 100.0 * v / max } else { f64::NAN })
        .collect()
}

/// Time saved by `a` relative to `b`, in percent of `a`'s time.
pub fn diff_percent(a: f64, b: f64) -> f64 {
    100.0 * (b - a) / a
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Runs every (planner, world, seed) cell. Failed episodes are recorded and
/// the benchmark carries on.
pub fn run_benchmark(
    config: &ExperimentConfig,
    planners: &[PlannerId],
    world_seeds: &[u64],
    seeds: &[u64],
) -> Result<BenchmarkReport> {
    let worlds: Vec<_> = world_seeds
        .iter()
        .map(|&w| config.world.with_seed(w).build().map(|m| (w, m)))
        .collect::<Result<_>>()?;
    let cells: Vec<(PlannerId, usize, u64)> = planners
        .iter()
        .flat_map(|&p| (0..worlds.len()).flat_map(move |w| seeds.iter().map(move |&s| (p, w, s))))
        .collect();
    let rows: Vec<BenchRow> = cells
        .par_iter()
        .map(|&(p, w, s)| {
            let cfg = config.with_planner(p);
            let (world_seed, world) = &worlds[w];
            match run_episode_in(&cfg, world, cfg.start_pose(), s) {
                Ok(log) => BenchRow {
                    planner: p,
                    world_seed: *world_seed,
                    seed: s,
                    status: Some(log.status),
                    termination: log.termination.label().to_string(),
                    exploration_time: log.exploration_time,
                    final_entropy: log.final_entropy,
                    path_length: log.path_length,
                    coverage: log.final_coverage,
                    planning_time: log.planning_time(),
                    unsafe_waypoints: log.unsafe_waypoints(),
                    error: None,
                },
                Err(e) => BenchRow {
                    planner: p,
                    world_seed: *world_seed,
                    seed: s,
                    status: None,
                    termination: "error".into(),
                    exploration_time: f64::NAN,
                    final_entropy: f64::NAN,
                    path_length: f64::NAN,
                    coverage: f64::NAN,
                    planning_time: f64::NAN,
                    unsafe_waypoints: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(BenchmarkReport {
        aggregates: aggregate(&rows, planners, world_seeds),
        rows,
    })
}

fn aggregate(rows: &[BenchRow], planners: &[PlannerId], world_seeds: &[u64]) -> Vec<BenchAggregate> {
    let mut out = Vec::new();
    for &w in world_seeds {
        let mut block: Vec<BenchAggregate> = planners
            .iter()
            .map(|&p| {
                let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.planner == p && r.world_seed == w).collect();
                let ok: Vec<&BenchRow> = sel.iter().copied().filter(|r| r.status.is_some()).collect();
                let col = |f: fn(&BenchRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
                let (mean_time, std_time) = mean_std(&col(|r| r.exploration_time));
                BenchAggregate {
                    planner: p,
                    world_seed: w,
                    runs: sel.len(),
                    completed: sel.iter().filter(|r| r.status == Some(EpisodeStatus::Complete)).count(),
                    mean_time,
                    std_time,
                    mean_entropy: mean_std(&col(|r| r.final_entropy)).0,
                    mean_path_length: mean_std(&col(|r| r.path_length)).0,
                    mean_coverage: mean_std(&col(|r| r.coverage)).0,
                    mean_planning_time: mean_std(&col(|r| r.planning_time)).0,
                    percent_of_slowest: f64::NAN,
                }
            })
            .collect();
        let pct = percent_of_slowest(&block.iter().map(|a| a.mean_time).collect::<Vec<_>>());
        for (a, p) in block.iter_mut().zip(pct) {
            a.percent_of_slowest = p;
        }
        out.extend(block);
    }
    out
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(&r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl BenchmarkReport {
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let runs = dir.join("bench_runs.csv");
        write_rows(
            &runs,
            &[
                "planner", "world", "seed", "status", "termination", "time_s", "final_entropy", "path_length",
                "coverage", "planning_s", "unsafe_waypoints", "error",
            ],
            self.rows.iter().map(|r| {
                vec![
                    r.planner.to_string(),
                    r.world_seed.to_string(),
                    r.seed.to_string(),
                    r.status.map_or("error", |s| s.label()).to_string(),
                    r.termination.clone(),
                    r.exploration_time.to_string(),
                    r.final_entropy.to_string(),
                    r.path_length.to_string(),
                    r.coverage.to_string(),
                    r.planning_time.to_string(),
                    r.unsafe_waypoints.to_string(),
                    r.error.clone().unwrap_or_default(),
                ]
            }),
        )?;
        let summary = dir.join("bench_summary.csv");
        write_rows(
            &summary,
            &[
                "planner", "world", "runs", "completed", "mean_time_s", "std_time_s", "percent_of_slowest",
                "mean_entropy", "mean_path_length", "mean_coverage", "mean_planning_s",
            ],
            self.aggregates.iter().map(|a| {
                vec![
                    a.planner.to_string(),
                    a.world_seed.to_string(),
                    a.runs.to_string(),
                    a.completed.to_string(),
                    a.mean_time.to_string(),
                    a.std_time.to_string(),
                    a.percent_of_slowest.to_string(),
                    a.mean_entropy.to_string(),
                    a.mean_path_length.to_string(),
                    a.mean_coverage.to_string(),
                    a.mean_planning_time.to_string(),
                ]
            }),
        )?;
        Ok(vec![runs, summary])
    }

    /// Worlds as rows, planners as columns, cells `mean (percent%)`.
    pub fn render_table(&self) -> String {
        let mut planners: Vec<PlannerId> = Vec::new();
        let mut worlds: Vec<u64> = Vec::new();
        for a in &self.aggregates {
            if !planners.contains(&a.planner) {
                planners.push(a.planner);
            }
            if !worlds.contains(&a.world_seed) {
                worlds.push(a.world_seed);
            }
        }
        let mut grid: Vec<Vec<String>> = vec![std::iter::once("world".to_string())
            .chain(planners.iter().map(|p| p.to_string()))
            .collect()];
        for w in &worlds {
            let mut line = vec![w.to_string()];
            for p in &planners {
                let a = self.aggregates.iter().find(|a| a.planner == *p && a.world_seed == *w).unwrap();
                line.push(if a.mean_time.is_finite() {
                    format!("{:.1} ({:.0}%)", a.mean_time, a.percent_of_slowest)
                } else {
                    "-".into()
                });
            }
            grid.push(line);
        }
        render_aligned(&grid)
    }
}

fn render_aligned(grid: &[Vec<String>]) -> String {
    let cols = grid.iter().map(|r| r.len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| grid.iter().filter_map(|r| r.get(c)).map(|s| s.len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in grid.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatabilityRow {
    pub index: usize,
    pub start: Pose2D,
    pub time_a: f64,
    pub time_b: f64,
    pub diff_percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatabilityReport {
    pub planner_a: PlannerId,
    pub planner_b: PlannerId,
    pub rows: Vec<RepeatabilityRow>,
    pub mean_a: f64,
    pub mean_b: f64,
    /// Mean of the per-row differences.
    pub mean_diff_percent: f64,
}

impl RepeatabilityReport {
    pub fn from_times(planner_a: PlannerId, planner_b: PlannerId, runs: &[(Pose2D, f64, f64)]) -> Self {
        let rows: Vec<RepeatabilityRow> = runs
            .iter()
            .enumerate()
            .map(|(i, &(start, a, b))| RepeatabilityRow {
                index: i + 1,
                start,
                time_a: a,
                time_b: b,
                diff_percent: diff_percent(a, b),
            })
            .collect();
        let n = rows.len().max(1) as f64;
        Self {
            planner_a,
            planner_b,
            mean_a: rows.iter().map(|r| r.time_a).sum::<f64>() / n,
            mean_b: rows.iter().map(|r| r.time_b).sum::<f64>() / n,
            mean_diff_percent: rows.iter().map(|r| r.diff_percent).sum::<f64>() / n,
            rows,
        }
    }

    pub fn render_table(&self) -> String {
        let mut grid = vec![vec![
            "#".to_string(),
            format!("{} [s]", self.planner_a),
            format!("{} [s]", self.planner_b),
            "diff [%]".to_string(),
        ]];
        for r in &self.rows {
            grid.push(vec![
                r.index.to_string(),
                format!("{:.1}", r.time_a),
                format!("{:.1}", r.time_b),
                format!("{:.1}", r.diff_percent),
            ]);
        }
        grid.push(vec![
            "average".into(),
            format!("{:.1}", self.mean_a),
            format!("{:.1}", self.mean_b),
            format!("{:.1}", self.mean_diff_percent),
        ]);
        render_aligned(&grid)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.index.to_string(),
                    r.start.x.to_string(),
                    r.start.y.to_string(),
                    r.start.heading.to_string(),
                    r.time_a.to_string(),
                    r.time_b.to_string(),
                    r.diff_percent.to_string(),
                ]
            })
            .chain(std::iter::once(vec![
                "average".into(),
                String::new(),
                String::new(),
                String::new(),
                self.mean_a.to_string(),
                self.mean_b.to_string(),
                self.mean_diff_percent.to_string(),
            ]));
        write_rows(path, &["index", "start_x", "start_y", "start_heading", "time_a_s", "time_b_s", "diff_percent"], rows)
    }
}

/// Both planners from every start pose on one world.
pub fn run_repeatability(
    config: &ExperimentConfig,
    planner_a: PlannerId,
    planner_b: PlannerId,
    starts: &[Pose2D],
    seed: u64,
) -> Result<RepeatabilityReport> {
    let world = config.world.build()?;
    let times: Vec<Result<(Pose2D, f64, f64)>> = starts
        .par_iter()
        .map(|&s| {
            let a = run_episode_in(&config.with_planner(planner_a), &world, s, seed)?;
            let b = run_episode_in(&config.with_planner(planner_b), &world, s, seed)?;
            Ok((s, a.exploration_time, b.exploration_time))
        })
        .collect();
    let times = times.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(RepeatabilityReport::from_times(planner_a, planner_b, &times))
}

/// Entropy curve, executed path, cycle diagnostics and belief snapshots.
pub fn export_artifacts(log: &EpisodeLog, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let entropy = dir.join("entropy.csv");
    write_rows(
        &entropy,
        &["time_s", "entropy_bits", "coverage", "path_length_m", "x", "y", "heading", "cycle"],
        log.rows.iter().map(|r| {
            vec![
                r.time.to_string(),
                r.entropy.to_string(),
                r.coverage.to_string(),
                r.path_length.to_string(),
                r.pose.x.to_string(),
                r.pose.y.to_string(),
                r.pose.heading.to_string(),
                r.cycle.to_string(),
            ]
        }),
    )?;
    written.push(entropy);

    let path = dir.join("path.csv");
    write_rows(
        &path,
        &["x", "y", "heading"],
        log.path_polyline()
            .iter()
            .map(|p| vec![p.x.to_string(), p.y.to_string(), p.heading.to_string()]),
    )?;
    written.push(path);

    let cycles = dir.join("cycles.csv");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    write_rows(
        &cycles,
        &[
            "cycle", "time_s", "x", "y", "heading", "action", "length_m", "angle", "goal_x", "goal_y",
            "unsafe_waypoints", "executed_m", "aborted", "seed_samples", "valid_samples", "invalid_samples",
            "objective_samples", "bo_iterations", "predicted_reward", "predicted_ig", "trained", "planning_s",
        ],
        log.cycles.iter().zip(log.planning_wall_clock.iter().copied().chain(std::iter::repeat(f64::NAN))).map(
            |(c, wall)| {
                let (action, length, angle) = match c.action {
                    CycleAction::Path { length, .. } => ("path", Some(length), None),
                    CycleAction::Rotate { angle } => ("rotate", None, Some(angle)),
                    CycleAction::Complete => ("complete", None, None),
                };
                let d = c.diagnostics.as_ref();
                vec![
                    c.cycle.to_string(),
                    c.time.to_string(),
                    c.pose.x.to_string(),
                    c.pose.y.to_string(),
                    c.pose.heading.to_string(),
                    action.to_string(),
                    opt(length),
                    opt(angle),
                    opt(c.goal.map(|g| g.x)),
                    opt(c.goal.map(|g| g.y)),
                    c.unsafe_waypoints.to_string(),
                    c.executed_distance.to_string(),
                    c.aborted.to_string(),
                    d.map_or(String::new(), |d| d.seed_count.to_string()),
                    d.map_or(String::new(), |d| d.valid_samples.to_string()),
                    d.map_or(String::new(), |d| d.invalid_samples.to_string()),
                    d.map_or(String::new(), |d| d.objective_samples.to_string()),
                    d.map_or(String::new(), |d| d.iterations.to_string()),
                    opt(d.and_then(|d| d.predicted_reward)),
                    opt(d.and_then(|d| d.predicted_ig)),
                    d.map_or(String::new(), |d| d.trained.to_string()),
                    wall.to_string(),
                ]
            },
        ),
    )?;
    written.push(cycles);

    for (cycle, grid) in &log.snapshots {
        let p = dir.join(format!("map_cycle_{cycle:04}.pgm"));
        grid.write_pgm(&p)?;
        written.push(p);
    }
    let final_map = dir.join("map_final.pgm");
    log.final_grid.write_pgm(&final_map)?;
    written.push(final_map);
    Ok(written)
}
