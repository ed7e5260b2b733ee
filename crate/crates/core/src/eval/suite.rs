//! Comparison setups, baselines and ablation sweeps.

use super::{aggregate, held_out_starts, run_episode, Controller, EpisodeRecord, EvalError, MetricsReport};
use crate::config::config_hash;
use crate::diagnosis::DiagnosisConfig;
use crate::dwa::{DwaParams, PlannerConfig};
use crate::env::{EnvConfig, EnvFactory, ACTION_DIM};
use crate::episode_log::EpisodeLog;
use crate::parallel::par_map;
use crate::rl::Policy;
use crate::trainer::{evaluate_policy, train, TrainEnv, TrainerConfig};
use crate::world::{derive_seed, generate_map, Difficulty, World};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::Arc;

pub const BASELINE_DWA: &str = "DWA";
pub const BASELINE_FAST: &str = "DWA-Fast";
pub const BASELINE_TUNED: &str = "Static-Tuner";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteSetup {
    SameEnv,
    CrossEnv,
    CrossLevel,
}

impl fmt::Display for SuiteSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SuiteSetup::SameEnv => "same-env",
            SuiteSetup::CrossEnv => "cross-env",
            SuiteSetup::CrossLevel => "cross-level",
        })
    }
}

impl FromStr for SuiteSetup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "same-env" => Ok(SuiteSetup::SameEnv),
            "cross-env" => Ok(SuiteSetup::CrossEnv),
            "cross-level" => Ok(SuiteSetup::CrossLevel),
            other => Err(format!("unknown setup '{other}' (expected same-env, cross-env or cross-level)")),
        }
    }
}

/// A named controller under evaluation.
#[derive(Debug, Clone)]
pub enum ControllerSpec {
    Policy { name: String, policy: Box<Policy> },
    Static { name: String, config: PlannerConfig },
}

impl ControllerSpec {
    pub fn name(&self) -> &str {
        match self {
            ControllerSpec::Policy { name, .. } | ControllerSpec::Static { name, .. } => name,
        }
    }

    fn controller(&self) -> Controller<'_> {
        match self {
            ControllerSpec::Policy { policy, .. } => Controller::Policy(policy),
            ControllerSpec::Static { config, .. } => Controller::Static(*config),
        }
    }

    pub fn dwa() -> Self {
        ControllerSpec::Static {
            name: BASELINE_DWA.into(),
            config: PlannerConfig::default(),
        }
    }

    pub fn dwa_fast() -> Self {
        ControllerSpec::Static {
            name: BASELINE_FAST.into(),
            config: PlannerConfig {
                max_vel_x: 2.0,
                ..PlannerConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub difficulty: Difficulty,
    pub width_m: f64,
    pub height_m: f64,
    pub train_seeds: Vec<u64>,
    pub test_seeds: Vec<u64>,
    /// Episodes per (controller, condition).
    pub episodes: usize,
    pub env: EnvConfig,
    pub planner: DwaParams,
}

/// One evaluation condition: which maps, which level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub setup: SuiteSetup,
    pub difficulty: Difficulty,
    pub seeds: Vec<u64>,
}

impl Condition {
    pub fn label(&self) -> String {
        format!("{}/{}", self.setup, self.difficulty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub controller: String,
    pub condition: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub controller: String,
    pub condition: String,
    pub record: EpisodeRecord,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOutput {
    pub rows: Vec<SuiteRow>,
    pub records: Vec<LabeledRecord>,
    pub logs: Vec<EpisodeLog>,
}

pub fn check_disjoint(train: &[u64], test: &[u64]) -> Result<(), EvalError> {
    let train: BTreeSet<u64> = train.iter().copied().collect();
    let overlap: Vec<u64> = test.iter().copied().filter(|s| train.contains(s)).collect::<BTreeSet<_>>().into_iter().collect();
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(EvalError::SeedOverlap(overlap))
    }
}

/// Conditions a setup expands to.
pub fn conditions(setup: SuiteSetup, cfg: &SuiteConfig) -> Result<Vec<Condition>, EvalError> {
    Ok(match setup {
        SuiteSetup::SameEnv => vec![Condition {
            setup,
            difficulty: cfg.difficulty,
            seeds: cfg.train_seeds.clone(),
        }],
        SuiteSetup::CrossEnv => {
            check_disjoint(&cfg.train_seeds, &cfg.test_seeds)?;
            vec![Condition {
                setup,
                difficulty: cfg.difficulty,
                seeds: cfg.test_seeds.clone(),
            }]
        }
        SuiteSetup::CrossLevel => Difficulty::ALL
            .iter()
            .map(|&difficulty| Condition {
                setup,
                difficulty,
                seeds: cfg.test_seeds.clone(),
            })
            .collect(),
    })
}

fn factory_for(world: Arc<World>, cfg: &SuiteConfig) -> EnvFactory {
    let mut f = EnvFactory::new(world, cfg.env);
    f.dwa = cfg.planner;
    f
}

/// Episode `i` of a condition runs on map `i mod m` from that map's
/// `(i div m)`-th held-out start.
fn episode_plan(cond: &Condition, cfg: &SuiteConfig) -> Result<Vec<(EnvFactory, crate::world::Pose, u64)>, EvalError> {
    if cond.seeds.is_empty() {
        return Err(EvalError::Empty);
    }
    let m = cond.seeds.len();
    let per_map = cfg.episodes.div_ceil(m);
    let mut maps = Vec::with_capacity(m);
    for &seed in &cond.seeds {
        let grid = generate_map(cond.difficulty, seed, cfg.width_m, cfg.height_m)?;
        let world = World::new(grid);
        let starts = held_out_starts(&world, per_map, 0)?;
        maps.push((factory_for(world, cfg), starts));
    }
    Ok((0..cfg.episodes)
        .map(|i| {
            let (factory, starts) = &maps[i % m];
            (factory.clone(), starts[i / m], super::eval_episode_id(factory.world.grid.seed, i / m))
        })
        .collect())
}

/// Evaluates every controller on every condition of `setup`.
pub fn run_suite(
    setup: SuiteSetup,
    controllers: &[ControllerSpec],
    cfg: &SuiteConfig,
    config_hash: &str,
    workers: usize,
) -> Result<SuiteOutput, EvalError> {
    let mut out = SuiteOutput::default();
    for cond in conditions(setup, cfg)? {
        let plan = episode_plan(&cond, cfg)?;
        for spec in controllers {
            let results = par_map(&plan, workers, |_, (factory, start, id)| {
                run_episode(spec.controller(), factory, *start, *id, config_hash)
            });
            let mut records = Vec::with_capacity(results.len());
            for r in results {
                let (record, log) = r?;
                out.logs.push(log);
                out.records.push(LabeledRecord {
                    controller: spec.name().to_string(),
                    condition: cond.label(),
                    record: record.clone(),
                });
                records.push(record);
            }
            out.rows.push(SuiteRow {
                controller: spec.name().to_string(),
                condition: cond.label(),
                report: aggregate(&records)?,
            });
        }
    }
    Ok(out)
}

/// Best of `candidates` uniformly random configurations by mean NS from the
/// default start of each training map. Returns the configuration and its
/// training NS.
pub fn static_tuner(cfg: &SuiteConfig, candidates: usize, seed: u64, workers: usize) -> Result<(PlannerConfig, f64), EvalError> {
    let mut factories = Vec::new();
    for &s in &cfg.train_seeds {
        let grid = generate_map(cfg.difficulty, s, cfg.width_m, cfg.height_m)?;
        factories.push(factory_for(World::new(grid), cfg));
    }
    if factories.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x7E57]));
    let configs: Vec<PlannerConfig> = (0..candidates)
        .map(|_| {
            let a: [f64; ACTION_DIM] = std::array::from_fn(|_| rng.gen_range(-1.0..=1.0));
            PlannerConfig::from_normalized(&a)
        })
        .collect();
    let scores = par_map(&configs, workers, |_, config| -> Result<f64, EvalError> {
        let mut records = Vec::new();
        for f in &factories {
            let (r, _) = run_episode(Controller::Static(*config), f, f.default_pose(), 0, "")?;
            records.push(r);
        }
        Ok(aggregate(&records)?.ns)
    });
    let mut best: Option<(PlannerConfig, f64)> = None;
    for (config, score) in configs.into_iter().zip(scores) {
        let score = score?;
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((config, score));
        }
    }
    best.ok_or(EvalError::Empty)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationParam {
    Lambda,
    /// Degrees.
    Eta,
    FilterFailures,
    RsMode,
}

impl fmt::Display for AblationParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationParam::Lambda => "lambda",
            AblationParam::Eta => "eta",
            AblationParam::FilterFailures => "filter_failures",
            AblationParam::RsMode => "rs_mode",
        })
    }
}

impl FromStr for AblationParam {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lambda" => Ok(AblationParam::Lambda),
            "eta" => Ok(AblationParam::Eta),
            "filter_failures" | "filter" => Ok(AblationParam::FilterFailures),
            "rs_mode" | "rs" => Ok(AblationParam::RsMode),
            other => Err(EvalError::UnknownParam(other.to_string())),
        }
    }
}

impl AblationParam {
    /// Returns `base` with this parameter set from `value`.
    pub fn apply(&self, base: &TrainerConfig, value: &str) -> Result<TrainerConfig, EvalError> {
        let bad = || EvalError::BadValue(value.to_string());
        let mut cfg = base.clone();
        match self {
            AblationParam::Lambda => {
                cfg.lambda = value.parse().map_err(|_| bad())?;
            }
            AblationParam::Eta => {
                let deg: f64 = value.parse().map_err(|_| bad())?;
                cfg.diagnosis = DiagnosisConfig {
                    eta: deg.to_radians(),
                    ..cfg.diagnosis
                };
            }
            AblationParam::FilterFailures => cfg.filter_failures = parse_switch(value).ok_or_else(bad)?,
            AblationParam::RsMode => cfg.rs_mode = parse_switch(value).ok_or_else(bad)?,
        }
        cfg.validate().map_err(|_| bad())?;
        Ok(cfg)
    }

    pub fn default_grid(&self) -> Vec<String> {
        let v: &[&str] = match self {
            AblationParam::Lambda => &["0.2", "0.4", "0.6", "0.8"],
            AblationParam::Eta => &["50", "70", "90", "110", "130"],
            AblationParam::FilterFailures | AblationParam::RsMode => &["on", "off"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }
}

fn parse_switch(v: &str) -> Option<bool> {
    match v {
        "on" | "true" | "1" => Some(true),
        "off" | "false" | "0" => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub param: AblationParam,
    pub value: String,
    pub config_hash: String,
    /// Pooled over every (map, seed) run's final greedy evaluation.
    pub report: MetricsReport,
    /// Final NS of each run, in (map, seed) order.
    pub run_ns: Vec<f64>,
}

/// Trains and evaluates one policy per (value, map, seed); everything but
/// the swept parameter is held fixed.
pub fn ablation_sweep(
    param: AblationParam,
    values: &[String],
    base: &TrainerConfig,
    maps: &[TrainEnv],
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<AblationRow>, EvalError> {
    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let cfg = param.apply(base, value)?;
        let jobs: Vec<(usize, u64)> = (0..maps.len()).flat_map(|m| seeds.iter().map(move |&s| (m, s))).collect();
        let results = par_map(&jobs, workers, |_, &(m, seed)| -> Result<_, EvalError> {
            let run_cfg = TrainerConfig { seed, ..cfg.clone() };
            let (policy, _) = train(run_cfg, maps[m].clone()).map_err(Box::new)?;
            let (report, records) = evaluate_policy(&policy, &maps[m]).map_err(Box::new)?;
            Ok((report.ns, records))
        });
        let mut records = Vec::new();
        let mut run_ns = Vec::new();
        for r in results {
            let (ns, recs) = r?;
            run_ns.push(ns);
            records.extend(recs);
        }
        rows.push(AblationRow {
            param,
            value: value.clone(),
            config_hash: config_hash(&cfg),
            report: aggregate(&records)?,
            run_ns,
        });
    }
    Ok(rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Suite table as CSV, preceded by a `# config_hash=` line.
pub fn write_suite_csv<W: Write>(rows: &[SuiteRow], config_hash: &str, out: &mut W) -> io::Result<()> {
    writeln!(out, "# config_hash={config_hash}")?;
    writeln!(out, "controller,condition,episodes,NS,ATT,SR,CR,TR")?;
    for r in rows {
        let m = &r.report;
        writeln!(
            out,
            "{},{},{},{:.6},{},{:.6},{:.6},{:.6}",
            r.controller,
            r.condition,
            m.episodes,
            m.ns,
            fmt_opt(m.att),
            m.sr,
            m.cr,
            m.tr
        )?;
    }
    Ok(())
}

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], config_hash: &str, out: &mut W) -> io::Result<()> {
    writeln!(out, "# config_hash={config_hash}")?;
    writeln!(out, "param,value,config_hash,episodes,NS,ATT,SR,CR,TR")?;
    for r in rows {
        let m = &r.report;
        writeln!(
            out,
            "{},{},{},{},{:.6},{},{:.6},{:.6},{:.6}",
            r.param,
            r.value,
            r.config_hash,
            m.episodes,
            m.ns,
            fmt_opt(m.att),
            m.sr,
            m.cr,
            m.tr
        )?;
    }
    Ok(())
}

/// One JSON object per record, each stamped with the config hash.
pub fn write_records_jsonl<W: Write>(records: &[LabeledRecord], config_hash: &str, out: &mut W) -> io::Result<()> {
    for r in records {
        let mut v = serde_json::to_value(r).map_err(io::Error::other)?;
        v.as_object_mut()
            .expect("record is an object")
            .insert("config_hash".into(), config_hash.into());
        serde_json::to_writer(&mut *out, &v)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SuiteConfig {
        SuiteConfig {
            difficulty: Difficulty::Easy,
            width_m: 6.0,
            height_m: 6.0,
            train_seeds: vec![1, 2],
            test_seeds: vec![3, 4],
            episodes: 2,
            env: EnvConfig::default(),
            planner: DwaParams::default(),
        }
    }

    #[test]
    fn overlapping_seeds_are_refused() {
        let mut cfg = small_cfg();
        cfg.test_seeds = vec![2, 5];
        assert!(matches!(conditions(SuiteSetup::CrossEnv, &cfg), Err(EvalError::SeedOverlap(v)) if v == vec![2]));
        assert!(check_disjoint(&(1..=10).collect::<Vec<_>>(), &(11..=20).collect::<Vec<_>>()).is_ok());
    }

    #[test]
    fn cross_level_gives_one_row_per_controller_and_level() {
        let cfg = small_cfg();
        let out = run_suite(SuiteSetup::CrossLevel, &[ControllerSpec::dwa(), ControllerSpec::dwa_fast()], &cfg, "h", 1).unwrap();
        assert_eq!(out.rows.len(), 6);
        for r in &out.rows {
            assert_eq!(r.report.sr + r.report.cr + r.report.tr, 100.0);
        }
    }

    #[test]
    fn suite_is_deterministic() {
        let cfg = small_cfg();
        let a = run_suite(SuiteSetup::SameEnv, &[ControllerSpec::dwa()], &cfg, "h", 1).unwrap();
        let b = run_suite(SuiteSetup::SameEnv, &[ControllerSpec::dwa()], &cfg, "h", 2).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn ablation_values_only_change_their_field() {
        let base = TrainerConfig::default();
        let hashes: Vec<String> = AblationParam::Lambda
            .default_grid()
            .iter()
            .map(|v| config_hash(&AblationParam::Lambda.apply(&base, v).unwrap()))
            .collect();
        assert_eq!(hashes.iter().collect::<BTreeSet<_>>().len(), 4);
        let c = AblationParam::Lambda.apply(&base, "0.8").unwrap();
        assert_eq!(TrainerConfig { lambda: base.lambda, ..c }, base);
        assert_eq!(AblationParam::Eta.default_grid(), vec!["50", "70", "90", "110", "130"]);
        assert!("gamma".parse::<AblationParam>().is_err());
        assert!(AblationParam::Lambda.apply(&base, "1.5").is_err());
    }
}
