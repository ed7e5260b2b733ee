use crate::io::{parse_list, read_archive, run_config, write_with};
use crate::ConfigArgs;
use anyhow::Context;
use clap::Args;
use metanav::config::{config_hash, RunConfig};
use metanav::env::EnvFactory;
use metanav::eval::{
    ablation_sweep, conditions, render_svg, run_suite, static_tuner, write_ablation_csv, write_records_jsonl, write_suite_csv,
    AblationParam, ControllerSpec, SuiteConfig, SuiteSetup, SvgLayers, BASELINE_TUNED,
};
use metanav::trainer::{policy_from_archive, TrainEnv};
use metanav::world::{generate_map, World};
use std::io::Write;
use std::path::PathBuf;

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    setup: SuiteSetup,
    /// Policy checkpoints; each becomes a controller named after its file.
    #[arg(long, num_args = 1..)]
    checkpoint: Vec<PathBuf>,
    /// Test map seeds, comma separated.
    #[arg(long)]
    maps: Option<String>,
    /// Training map seeds, comma separated (cross-env overlap check, tuner).
    #[arg(long)]
    train_maps: Option<String>,
    /// Episodes per controller and condition.
    #[arg(long)]
    eval_episodes: Option<usize>,
    /// Baselines to include: any of dwa, dwa-fast, static-tuner, or none.
    #[arg(long, default_value = "dwa,dwa-fast,static-tuner")]
    baselines: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
pub struct AblateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// lambda, eta, filter_failures or rs_mode.
    #[arg(long)]
    param: AblationParam,
    /// Comma separated values; defaults to the standard grid for the parameter.
    #[arg(long)]
    values: Option<String>,
    /// Training map seeds, comma separated (default: the configured map).
    #[arg(long)]
    maps: Option<String>,
    /// Training seeds, comma separated (default: the configured seed).
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

fn suite_config(cfg: &RunConfig) -> SuiteConfig {
    SuiteConfig {
        difficulty: cfg.world.difficulty,
        width_m: cfg.world.width_m,
        height_m: cfg.world.height_m,
        train_seeds: cfg.eval.train_seeds.clone(),
        test_seeds: cfg.eval.test_seeds.clone(),
        episodes: cfg.eval.episodes,
        env: cfg.env,
        planner: cfg.planner,
    }
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn run_eval(args: &EvalArgs) -> anyhow::Result<()> {
    let mut cfg = run_config(&args.cfg)?;
    if let Some(m) = &args.maps {
        cfg.eval.test_seeds = parse_list(m)?;
    }
    if let Some(m) = &args.train_maps {
        cfg.eval.train_seeds = parse_list(m)?;
    }
    if let Some(e) = args.eval_episodes {
        cfg.eval.episodes = e;
    }
    cfg.out_dir.clear();
    cfg.validate()?;
    let suite = suite_config(&cfg);
    let conds = conditions(args.setup, &suite)?;

    let mut controllers = Vec::new();
    let mut provenance = Vec::new();
    for path in &args.checkpoint {
        let archive = read_archive(path)?;
        let (policy, iteration) = policy_from_archive(&archive).with_context(|| format!("checkpoint {}", path.display()))?;
        let source: String = archive.meta_field("config_hash")?;
        let name = path.file_stem().map_or("policy".into(), |s| s.to_string_lossy().into_owned());
        provenance.push(serde_json::json!({"name": name, "config_hash": source, "iteration": iteration}));
        controllers.push(ControllerSpec::Policy {
            name,
            policy: Box::new(policy),
        });
    }
    let mut tuned = None;
    for b in args.baselines.split(',').map(str::trim).filter(|b| !b.is_empty()) {
        match b {
            "none" => {}
            "dwa" => controllers.push(ControllerSpec::dwa()),
            "dwa-fast" => controllers.push(ControllerSpec::dwa_fast()),
            "static-tuner" => {
                let (config, ns) = static_tuner(&suite, cfg.eval.tuner_candidates, cfg.seed, args.workers)?;
                tuned = Some(serde_json::json!({"config": config, "train_ns": ns}));
                controllers.push(ControllerSpec::Static {
                    name: BASELINE_TUNED.into(),
                    config,
                });
            }
            other => anyhow::bail!("unknown baseline '{other}'"),
        }
    }
    if controllers.is_empty() {
        anyhow::bail!("nothing to evaluate: pass --checkpoint or baselines");
    }
    let hash = config_hash(&serde_json::json!({
        "run": cfg.hash(),
        "setup": args.setup,
        "controllers": provenance,
        "baselines": args.baselines,
    }));

    let output = run_suite(args.setup, &controllers, &suite, &hash, args.workers)?;
    let out = &args.out;
    write_with(&out.join("suite.csv"), |w| Ok(write_suite_csv(&output.rows, &hash, w)?))?;
    write_with(&out.join("records.jsonl"), |w| Ok(write_records_jsonl(&output.records, &hash, w)?))?;
    write_with(&out.join("suite.json"), |w| {
        let doc = serde_json::json!({
            "config_hash": hash,
            "setup": args.setup,
            "controllers": provenance,
            "static_tuner": tuned,
            "rows": output.rows,
        });
        serde_json::to_writer_pretty(&mut *w, &doc)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;

    for cond in &conds {
        let seed = cond.seeds[0];
        let grid = generate_map(cond.difficulty, seed, suite.width_m, suite.height_m)?;
        for spec in &controllers {
            let trajectories: Vec<_> = output
                .records
                .iter()
                .filter(|r| r.controller == spec.name() && r.condition == cond.label() && r.record.map_seed == seed)
                .map(|r| r.record.trajectory.clone())
                .collect();
            let title = format!("{} on {} map {seed}", spec.name(), cond.label());
            let svg = render_svg(
                &grid,
                &SvgLayers {
                    trajectories: &trajectories,
                    hr_points: &[],
                    title: &title,
                    config_hash: &hash,
                },
            );
            let name = format!("{}__{}.svg", file_safe(spec.name()), file_safe(&cond.label()));
            write_with(&out.join("svg").join(name), |w| Ok(w.write_all(svg.as_bytes())?))?;
        }
    }
    for row in &output.rows {
        eprintln!(
            "{} {}: NS {:.2} SR {:.1} CR {:.1} TR {:.1}",
            row.controller, row.condition, row.report.ns, row.report.sr, row.report.cr, row.report.tr
        );
    }
    Ok(())
}

pub fn run_ablate(args: &AblateArgs) -> anyhow::Result<()> {
    let mut cfg = run_config(&args.cfg)?;
    cfg.out_dir.clear();
    cfg.validate()?;
    let values: Vec<String> = match &args.values {
        Some(v) => parse_list(v)?,
        None => args.param.default_grid(),
    };
    let map_seeds: Vec<u64> = match &args.maps {
        Some(m) => parse_list(m)?,
        None => vec![cfg.world.map_seed],
    };
    let seeds: Vec<u64> = match &args.seeds {
        Some(s) => parse_list(s)?,
        None => vec![cfg.seed],
    };
    let hash = config_hash(&serde_json::json!({
        "run": cfg.hash(),
        "param": args.param,
        "values": values,
        "maps": map_seeds,
        "seeds": seeds,
    }));
    let mut maps = Vec::with_capacity(map_seeds.len());
    for &s in &map_seeds {
        let grid = generate_map(cfg.world.difficulty, s, cfg.world.width_m, cfg.world.height_m)?;
        let mut factory = EnvFactory::new(World::new(grid), cfg.env);
        factory.dwa = cfg.planner;
        maps.push(TrainEnv::new(factory, cfg.trainer.eval_episodes, hash.clone())?);
    }
    let rows = ablation_sweep(args.param, &values, &cfg.trainer_config(), &maps, &seeds, args.workers)?;
    let out = &args.out;
    write_with(&out.join("ablation.csv"), |w| Ok(write_ablation_csv(&rows, &hash, w)?))?;
    for row in &rows {
        let name = format!("{}_{}.json", args.param, file_safe(&row.value));
        write_with(&out.join("reports").join(name), |w| {
            let doc = serde_json::json!({"sweep_config_hash": hash, "row": row});
            serde_json::to_writer_pretty(&mut *w, &doc)?;
            w.write_all(b"\n")?;
            Ok(())
        })?;
        eprintln!("{}={}: NS {:.2} SR {:.1}", args.param, row.value, row.report.ns, row.report.sr);
    }
    Ok(())
}
