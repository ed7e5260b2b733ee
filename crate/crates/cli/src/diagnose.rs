use crate::io::write_with;
use crate::train::{hr_lines, write_hr_lines};
use anyhow::Context;
use clap::Args;
use metanav::config::config_hash;
use metanav::diagnosis::{diagnose, DiagnosisConfig, Outcome};
use metanav::episode_log::{read_episode_logs, EpisodeLog};
use serde::Serialize;
use std::collections::BTreeSet;
use std::io::{BufReader, Write};
use std::path::PathBuf;

#[derive(Args)]
pub struct DiagnoseArgs {
    /// Episode log files (JSON lines), read in order.
    #[arg(long, num_args = 1.., required = true)]
    logs: Vec<PathBuf>,
    /// Turn threshold in degrees.
    #[arg(long, default_value_t = 90.0)]
    eta: f64,
    /// Keep failed trajectories.
    #[arg(long)]
    no_filter: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct TrajectorySummary {
    episode: u64,
    outcome: Outcome,
    points: usize,
}

#[derive(Serialize)]
struct Summary {
    config_hash: String,
    eta_deg: f64,
    filter_failures: bool,
    source_config_hashes: Vec<String>,
    trajectories: usize,
    count: usize,
    per_trajectory: Vec<TrajectorySummary>,
}

pub fn run(args: &DiagnoseArgs) -> anyhow::Result<()> {
    let config = DiagnosisConfig::with_eta_degrees(args.eta);
    config.validate().map_err(anyhow::Error::msg)?;
    let mut logs: Vec<EpisodeLog> = Vec::new();
    for path in &args.logs {
        let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let parsed = read_episode_logs(BufReader::new(file)).with_context(|| format!("{}", path.display()))?;
        logs.extend(parsed);
    }
    let sources: BTreeSet<String> = logs.iter().map(|l| l.header.config_hash.clone()).collect();
    let sources: Vec<String> = sources.into_iter().collect();
    let filter = !args.no_filter;
    let hash = config_hash(&serde_json::json!({
        "diagnosis": config,
        "filter_failures": filter,
        "sources": sources,
    }));

    let trajectories: Vec<_> = logs.iter().map(EpisodeLog::trajectory).collect();
    let hr = diagnose(&trajectories, &config, filter);
    let mut counts = vec![0usize; logs.len()];
    for p in &hr.points {
        counts[p.source] += 1;
    }
    let summary = Summary {
        config_hash: hash.clone(),
        eta_deg: args.eta,
        filter_failures: filter,
        source_config_hashes: sources,
        trajectories: logs.len(),
        count: hr.len(),
        per_trajectory: logs
            .iter()
            .zip(&trajectories)
            .zip(&counts)
            .map(|((l, t), &points)| TrajectorySummary {
                episode: l.header.episode,
                outcome: t.outcome,
                points,
            })
            .collect(),
    };
    write_hr_lines(&args.out.join("hr.jsonl"), &hr_lines(&hr, &logs, &hash))?;
    write_with(&args.out.join("summary.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    eprintln!("{} high-resistance points from {} trajectories", hr.len(), logs.len());
    Ok(())
}
