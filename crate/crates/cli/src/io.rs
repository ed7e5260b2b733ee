//! File helpers and run-config assembly shared by the subcommands.

use crate::ConfigArgs;
use anyhow::Context;
use metanav::checkpoint::Archive;
use metanav::config::RunConfig;
use metanav::env::EnvFactory;
use metanav::trainer::TrainEnv;
use metanav::world::{generate_map, read_map, Difficulty, World};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub fn map_file_name(difficulty: Difficulty, seed: u64) -> String {
    format!("{difficulty}_{seed:04}.map")
}

/// Creates `path` (and its parent directory) and writes it through `f`.
pub fn write_with<F>(path: &Path, f: F) -> anyhow::Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
{
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_archive(path: &Path, archive: &Archive) -> anyhow::Result<()> {
    write_with(path, |w| Ok(archive.write(w)?))
}

pub fn read_archive(path: &Path) -> anyhow::Result<Archive> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Archive::read(&mut BufReader::new(file)).with_context(|| format!("cannot read {}", path.display()))
}

/// Loads `--config` (or defaults) and applies flag overrides.
pub fn run_config(args: &ConfigArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.algo {
        cfg.trainer.algorithm = v;
    }
    if let Some(v) = args.difficulty {
        cfg.world.difficulty = v;
    }
    if let Some(v) = args.map_seed {
        cfg.world.map_seed = v;
    }
    if let Some(v) = args.iterations {
        cfg.trainer.iterations = v;
    }
    if let Some(v) = args.episodes_per_iteration {
        cfg.trainer.episodes_per_iteration = v;
    }
    if let Some(v) = args.updates_per_iteration {
        cfg.trainer.updates_per_iteration = v;
    }
    Ok(cfg)
}

/// Training map: a map file if given, else generated from the world section.
pub fn train_env(cfg: &RunConfig, map: Option<&PathBuf>) -> anyhow::Result<TrainEnv> {
    let grid = match map {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("cannot open map {}", path.display()))?;
            read_map(BufReader::new(file)).with_context(|| format!("map {}", path.display()))?
        }
        None => generate_map(cfg.world.difficulty, cfg.world.map_seed, cfg.world.width_m, cfg.world.height_m)?,
    };
    let mut factory = EnvFactory::new(World::new(grid), cfg.env);
    factory.dwa = cfg.planner;
    Ok(TrainEnv::new(factory, cfg.trainer.eval_episodes, cfg.hash())?)
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| anyhow::anyhow!("bad list item '{p}': {e}")))
        .collect()
}
