use crate::io::{read_archive, run_config, train_env, write_archive, write_with};
use crate::ConfigArgs;
use anyhow::Context;
use clap::Args;
use metanav::diagnosis::HighResistanceArea;
use metanav::episode_log::EpisodeLog;
use metanav::trainer::{policy_archive, write_report_csv, IterationOutput, Trainer};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Probability of starting from a high-resistance pose.
    #[arg(long)]
    lambda: Option<f64>,
    /// Turn threshold in degrees.
    #[arg(long)]
    eta: Option<f64>,
    /// Start from poses drawn uniformly from everything visited so far.
    #[arg(long)]
    rs: bool,
    /// Keep failed trajectories in the diagnosis.
    #[arg(long)]
    no_filter: bool,
    /// Train on a map file instead of the generated world.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Continue from `<out>/state.ckpt`.
    #[arg(long)]
    resume: bool,
    /// Stop after this many iterations in this invocation; continue later with --resume.
    #[arg(long)]
    stop_after: Option<usize>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

/// One line of an H snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrLine {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub source_episode: u64,
    pub index: usize,
    pub config_hash: String,
}

pub fn hr_lines(hr: &HighResistanceArea, logs: &[EpisodeLog], hash: &str) -> Vec<HrLine> {
    hr.points
        .iter()
        .map(|p| HrLine {
            x: p.pose.x,
            y: p.pose.y,
            w: p.pose.w,
            source_episode: logs.get(p.source).map_or(p.source as u64, |l| l.header.episode),
            index: p.index,
            config_hash: hash.to_string(),
        })
        .collect()
}

pub fn write_hr_lines(path: &Path, lines: &[HrLine]) -> anyhow::Result<()> {
    write_with(path, |w| {
        for l in lines {
            serde_json::to_writer(&mut *w, l)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

fn read_hr_lines(path: &Path) -> anyhow::Result<Vec<HrLine>> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn iter_name(dir: &str, iteration: usize, ext: &str) -> PathBuf {
    PathBuf::from(dir).join(format!("iter_{iteration:04}.{ext}"))
}

pub fn run(args: &TrainArgs) -> anyhow::Result<()> {
    let mut base = args.cfg.clone();
    let saved = args.out.join("config.json");
    if args.resume && base.config.is_none() && saved.exists() {
        base.config = Some(saved.clone());
    }
    let mut cfg = run_config(&base)?;
    if let Some(l) = args.lambda {
        cfg.trainer.lambda = l;
    }
    if let Some(e) = args.eta {
        cfg.diagnosis.eta = e.to_radians();
    }
    if args.rs {
        cfg.trainer.rs_mode = true;
    }
    if args.no_filter {
        cfg.trainer.filter_failures = false;
    }
    cfg.out_dir.clear();
    cfg.validate()?;
    let hash = cfg.hash();
    let env = train_env(&cfg, args.map.as_ref())?;
    let out = &args.out;
    std::fs::create_dir_all(out)?;

    let state_path = out.join("state.ckpt");
    let (trainer, mut prev_lines) = if args.resume {
        let archive = read_archive(&state_path)?;
        let trainer = Trainer::restore(cfg.trainer_config(), env, &archive)?;
        let last = out.join(iter_name("hr", trainer.iteration, "jsonl"));
        let lines = if trainer.iteration > 0 { read_hr_lines(&last)? } else { Vec::new() };
        eprintln!("resuming at iteration {}", trainer.iteration);
        (trainer, lines)
    } else {
        write_with(&saved, |w| {
            serde_json::to_writer_pretty(&mut *w, &cfg)?;
            w.write_all(b"\n")?;
            Ok(())
        })?;
        (Trainer::new(cfg.trainer_config(), env)?, Vec::new())
    };
    let total = trainer.config().iterations;
    let mut trainer = trainer.with_workers(args.workers);
    let mut budget = args.stop_after.unwrap_or(usize::MAX);
    while !trainer.is_finished() && budget > 0 {
        let o = trainer.step()?;
        save_iteration(out, &trainer, &o, &hash, &mut prev_lines)?;
        eprintln!(
            "iteration {}/{total}: return {:.2} NS {:.2} SR {:.1} |H| {}",
            trainer.iteration, o.row.mean_return, o.row.ns, o.row.sr, o.row.hr_size
        );
        budget -= 1;
    }
    Ok(())
}

fn save_iteration(out: &Path, t: &Trainer, o: &IterationOutput, hash: &str, prev_lines: &mut Vec<HrLine>) -> anyhow::Result<()> {
    let it = t.iteration;
    write_with(&out.join(iter_name("logs", it, "jsonl")), |w| {
        for log in &o.logs {
            log.write(w)?;
        }
        Ok(())
    })?;
    if o.hr_refreshed {
        *prev_lines = hr_lines(&t.hr, &o.logs, hash);
    }
    write_hr_lines(&out.join(iter_name("hr", it, "jsonl")), prev_lines)?;
    write_archive(&out.join(iter_name("checkpoints", it, "ckpt")), &policy_archive(&t.policy, hash, it))?;
    write_with(&out.join("report.csv"), |w| Ok(write_report_csv(&t.report, hash, w)?))?;
    let tmp = out.join("state.ckpt.tmp");
    write_archive(&tmp, &t.state_archive())?;
    std::fs::rename(&tmp, out.join("state.ckpt"))?;
    Ok(())
}
