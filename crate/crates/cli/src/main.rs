mod diagnose;
mod evaluate;
mod io;
mod report;
mod train;

use clap::{Args, Parser, Subcommand};
use metanav::rl::Algorithm;
use metanav::world::Difficulty;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "metanav", version, about = "Navigation stack with an RL-tuned DWA local planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded obstacle maps.
    GenMaps(GenMapsArgs),
    /// Train a meta-planner policy.
    Train(train::TrainArgs),
    /// Extract high-resistance points from episode logs.
    Diagnose(diagnose::DiagnoseArgs),
    /// Evaluate checkpoints and baselines on a comparison setup.
    Eval(evaluate::EvalArgs),
    /// Sweep one trainer parameter, training and evaluating each value.
    Ablate(evaluate::AblateArgs),
    /// Render suite or ablation CSVs as a markdown table.
    Report(report::ReportArgs),
}

#[derive(Args)]
struct GenMapsArgs {
    #[arg(long)]
    difficulty: Difficulty,
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10.0)]
    width: f64,
    #[arg(long, default_value_t = 10.0)]
    height: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Settings shared by commands that build a [`metanav::config::RunConfig`].
#[derive(Args, Clone)]
pub struct ConfigArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    difficulty: Option<Difficulty>,
    #[arg(long)]
    map_seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Trajectories collected per training iteration.
    #[arg(long)]
    episodes_per_iteration: Option<usize>,
    /// Policy updates per training iteration.
    #[arg(long)]
    updates_per_iteration: Option<usize>,
}

fn gen_maps(args: &GenMapsArgs) -> anyhow::Result<()> {
    std::fs::create_dir_all(&args.out)?;
    for seed in args.seed..args.seed + args.count {
        let grid = metanav::world::generate_map(args.difficulty, seed, args.width, args.height)?;
        let path = args.out.join(io::map_file_name(args.difficulty, seed));
        io::write_with(&path, |w| Ok(metanav::world::write_map(&grid, w)?))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenMaps(a) => gen_maps(a),
        Command::Train(a) => train::run(a),
        Command::Diagnose(a) => diagnose::run(a),
        Command::Eval(a) => evaluate::run_eval(a),
        Command::Ablate(a) => evaluate::run_ablate(a),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
