use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use explore_core::harness::{
    export_artifacts, parse_seed_list, run_benchmark, run_episode, run_repeatability, spread_start_poses,
    EpisodeStatus, ExperimentConfig,
};
use explore_core::sim::WorldModel;

#[derive(Parser)]
#[command(name = "explore", version, about = "Autonomous exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and export its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory; overrides `out_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every configured planner on every world and seed.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Seed list such as `0..5`, `1..=3` or `1,4,9`.
        #[arg(long)]
        seeds: Option<String>,
        /// World seed list; overrides `world_seeds` in the config.
        #[arg(long)]
        worlds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate or inspect worlds.
    World {
        #[command(subcommand)]
        action: WorldAction,
    },
}

#[derive(Subcommand)]
enum WorldAction {
    /// Generate a world from the config's world keys and write it as PGM.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a world file as text.
    Show {
        file: PathBuf,
        /// Cells per character.
        #[arg(long, default_value_t = 4)]
        scale: usize,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_file(path).with_context(|| format!("loading {}", path.display()))
}

fn cmd_run(config: &Path, seed: u64, out: Option<PathBuf>) -> Result<bool> {
    let cfg = load_config(config)?;
    let log = run_episode(&cfg, seed)?;
    println!(
        "{}: {} ({}) after {:.1} s, coverage {:.3}, entropy {:.1} bits, path {:.2} m, {} cycles",
        log.planner,
        log.status.label(),
        log.termination.label(),
        log.exploration_time,
        log.final_coverage,
        log.final_entropy,
        log.path_length,
        log.cycles.len()
    );
    if let Some(dir) = out.or(cfg.out_dir.clone()) {
        let files = export_artifacts(&log, &dir)?;
        println!("wrote {} files to {}", files.len(), dir.display());
    }
    Ok(log.status == EpisodeStatus::Complete)
}

fn cmd_bench(config: &Path, seeds: Option<String>, worlds: Option<String>, out: Option<PathBuf>) -> Result<bool> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seeds {
        cfg.seeds = parse_seed_list(&s)?;
    }
    if let Some(w) = worlds {
        cfg.world_seeds = parse_seed_list(&w)?;
    }
    let out = out.or(cfg.out_dir.clone());

    if cfg.repeat_starts > 0 {
        let [a, b] = cfg.planners[..] else {
            bail!("repeatability runs compare exactly two planners, got {}", cfg.planners.len());
        };
        let world = cfg.world.build()?;
        let starts = spread_start_poses(&world, cfg.start_pose().position(), cfg.repeat_starts, 2.0 * cfg.cbe.safety.robot_radius);
        if starts.len() < cfg.repeat_starts {
            log::warn!("only {} separated start poses found", starts.len());
        }
        let seed = cfg.seeds.first().copied().unwrap_or(0);
        let report = run_repeatability(&cfg, a, b, &starts, seed)?;
        print!("{}", report.render_table());
        if let Some(dir) = out {
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            report.write_csv(&dir.join("repeatability.csv"))?;
        }
        return Ok(report.rows.iter().all(|r| r.time_a.is_finite() && r.time_b.is_finite()));
    }

    let report = run_benchmark(&cfg, &cfg.planners, &cfg.world_seeds, &cfg.seeds)?;
    print!("{}", report.render_table());
    for r in report.rows.iter().filter(|r| r.error.is_some()) {
        log::error!("{} world {} seed {}: {}", r.planner, r.world_seed, r.seed, r.error.as_deref().unwrap_or(""));
    }
    if let Some(dir) = out {
        for f in report.write_csv(&dir)? {
            println!("wrote {}", f.display());
        }
    }
    Ok(report.rows.iter().all(|r| r.status == Some(EpisodeStatus::Complete)))
}

fn cmd_world_gen(config: Option<PathBuf>, seed: u64, out: &Path) -> Result<()> {
    let cfg = match config {
        Some(p) => load_config(&p)?,
        None => ExperimentConfig::default(),
    };
    let world = cfg.world.with_seed(seed).build()?;
    world.write_pgm(out)?;
    println!("{}", summary(&world));
    Ok(())
}

fn summary(world: &WorldModel) -> String {
    let g = world.geometry();
    let occupied = world.cells().iter().filter(|&&c| c).count();
    format!(
        "{} x {} cells at {} m, {} occupied ({:.1}%)",
        g.width,
        g.height,
        g.resolution,
        occupied,
        100.0 * occupied as f64 / g.len() as f64
    )
}

fn render(world: &WorldModel, scale: usize) -> String {
    let g = world.geometry();
    let s = scale.max(1);
    let mut out = String::new();
    for by in (0..g.height.div_ceil(s)).rev() {
        for bx in 0..g.width.div_ceil(s) {
            let any = (by * s..((by + 1) * s).min(g.height))
                .any(|cy| (bx * s..((bx + 1) * s).min(g.width)).any(|cx| world.is_occupied_cell(g.index(cx, cy))));
            out.push(if any { '#' } else { '.' });
        }
        out.push('\n');
    }
    out
}

fn cmd_world_show(file: &Path, scale: usize) -> Result<()> {
    let world = WorldModel::read_pgm(file).with_context(|| format!("reading {}", file.display()))?;
    print!("{}", render(&world, scale));
    println!("{}", summary(&world));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, out),
        Command::Bench {
            config,
            seeds,
            worlds,
            out,
        } => cmd_bench(&config, seeds, worlds, out),
        Command::World { action } => match action {
            WorldAction::Gen { config, seed, out } => cmd_world_gen(config, seed, &out).map(|_| true),
            WorldAction::Show { file, scale } => cmd_world_show(&file, scale).map(|_| true),
        },
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use explore_core::harness::PlannerId;

    #[test]
    fn render_marks_walls() {
        let w = WorldModel::empty_arena(2.0, 1.0, 0.1).unwrap();
        let text = render(&w, 5);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|l| l.len() == 4 && l.starts_with('#') && l.ends_with('#')));
    }

    #[test]
    fn planner_ids_parse() {
        assert_eq!("nbv-greedy".parse::<PlannerId>().unwrap(), PlannerId::NbvGreedy);
    }
}
