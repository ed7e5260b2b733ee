//! Navigation metrics and the episode runner shared by training-time
//! evaluation, comparison suites and ablation sweeps.

mod suite;
mod svg;

pub use suite::{
    ablation_sweep, check_disjoint, conditions, run_suite, static_tuner, write_ablation_csv, write_records_jsonl, write_suite_csv,
    AblationParam, AblationRow, Condition, ControllerSpec, LabeledRecord, SuiteConfig, SuiteOutput, SuiteRow, SuiteSetup,
    BASELINE_DWA, BASELINE_FAST, BASELINE_TUNED,
};
pub use svg::{render_svg, SvgLayers};

use crate::diagnosis::Outcome;
use crate::dwa::PlannerConfig;
use crate::env::{EnvError, EnvFactory, Event, ACTION_DIM};
use crate::episode_log::{EpisodeHeader, EpisodeLog, StepRecord};
use crate::global_plan::plan_on_costmap;
use crate::rl::Policy;
use crate::world::{check_collision, derive_seed, Command, Difficulty, Pose, World};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("optimal time must be positive, got {0}")]
    NonPositiveOt(f64),
    #[error("cannot aggregate an empty record list")]
    Empty,
    #[error("train and test seeds overlap: {0:?}")]
    SeedOverlap(Vec<u64>),
    #[error("found only {found} of {wanted} valid start poses")]
    StartPoses { found: usize, wanted: usize },
    #[error("unknown ablation parameter '{0}' (expected lambda, eta or filter_failures)")]
    UnknownParam(String),
    #[error("invalid ablation value '{0}'")]
    BadValue(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    World(#[from] crate::world::WorldError),
    #[error(transparent)]
    Nn(#[from] crate::rl::NnError),
    #[error(transparent)]
    Train(#[from] Box<crate::trainer::TrainError>),
}

/// Outcome of one evaluated mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub map_seed: u64,
    pub difficulty: Difficulty,
    pub init_pose: Pose,
    pub outcome: Outcome,
    /// Seconds; present exactly on success.
    pub att: Option<f64>,
    /// Seconds.
    pub ot: f64,
    pub steps: usize,
    pub episode_return: f64,
    pub trajectory: Vec<Pose>,
}

/// Per-episode score: `OT / clip(ATT, 2 OT, 8 OT)` on success, else 0.
pub fn navigation_score(record: &EpisodeRecord) -> Result<f64, EvalError> {
    score(record.outcome, record.att, record.ot)
}

pub fn score(outcome: Outcome, att: Option<f64>, ot: f64) -> Result<f64, EvalError> {
    if !(ot > 0.0) {
        return Err(EvalError::NonPositiveOt(ot));
    }
    match (outcome, att) {
        (Outcome::Success, Some(att)) => Ok(ot / att.clamp(2.0 * ot, 8.0 * ot)),
        _ => Ok(0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: usize,
    /// Mean per-episode score times 100.
    #[serde(rename = "NS")]
    pub ns: f64,
    /// Mean over successes, seconds.
    #[serde(rename = "ATT")]
    pub att: Option<f64>,
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "CR")]
    pub cr: f64,
    #[serde(rename = "TR")]
    pub tr: f64,
}

pub fn aggregate(records: &[EpisodeRecord]) -> Result<MetricsReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = records.len();
    let mut total = 0.0;
    let (mut succ, mut coll) = (0usize, 0usize);
    let mut att_sum = 0.0;
    for r in records {
        total += navigation_score(r)?;
        match r.outcome {
            Outcome::Success => {
                succ += 1;
                att_sum += r.att.unwrap_or(0.0);
            }
            Outcome::Collision => coll += 1,
            Outcome::Timeout => {}
        }
    }
    let pct = |k: usize| 100.0 * k as f64 / n as f64;
    Ok(MetricsReport {
        episodes: n,
        ns: 100.0 * total / n as f64,
        att: (succ > 0).then(|| att_sum / succ as f64),
        sr: pct(succ),
        cr: pct(coll),
        // remainder form keeps sr + cr + tr == 100 exactly in floating point
        tr: 100.0 - (pct(succ) + pct(coll)),
    })
}

/// What drives the planner during an evaluation episode.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    /// Greedy (noise-free) policy action each meta-step.
    Policy(&'a Policy),
    /// A configuration held constant for the whole episode.
    Static(PlannerConfig),
    /// A fixed motion command in place of the local planner.
    Scripted(Command),
}

/// Runs one deterministic episode from `init_pose` to the map goal.
pub fn run_episode(
    controller: Controller<'_>,
    factory: &EnvFactory,
    init_pose: Pose,
    episode: u64,
    config_hash: &str,
) -> Result<(EpisodeRecord, EpisodeLog), EvalError> {
    let mut env = factory.make()?;
    let goal = factory.goal();
    let mut state = env.reset(init_pose, goal)?;
    let ot = env.optimal_time()?;
    let grid = &factory.world.grid;
    let mut log = EpisodeLog {
        header: EpisodeHeader {
            map_seed: grid.seed,
            difficulty: grid.difficulty,
            init_pose,
            goal,
            ot,
            episode,
            config_hash: config_hash.to_string(),
        },
        steps: Vec::new(),
    };
    loop {
        let (result, action) = match controller {
            Controller::Policy(p) => {
                let a = p.act(&state)?;
                (env.step(&a)?, a)
            }
            Controller::Static(c) => (env.step_config(c)?, c.clamped().to_normalized()),
            Controller::Scripted(cmd) => {
                let a = [0.0; ACTION_DIM];
                (env.step_scripted(&a, cmd)?, a)
            }
        };
        log.steps.push(StepRecord {
            t: log.steps.len() + 1,
            pose: result.pose,
            action,
            reward: result.reward,
            event: result.event,
        });
        state = result.next_state;
        if result.done {
            break;
        }
    }
    let outcome = log.outcome().expect("terminal step recorded");
    let steps = log.steps.len();
    let record = EpisodeRecord {
        map_seed: grid.seed,
        difficulty: grid.difficulty,
        init_pose,
        outcome,
        att: (outcome == Outcome::Success).then_some(steps as f64 * factory.config.meta_period_s),
        ot,
        steps,
        episode_return: log.undiscounted_return(),
        trajectory: log.poses(),
    };
    debug_assert!(matches!(log.steps.last().map(|s| s.event), Some(e) if e != Event::None));
    Ok((record, log))
}

/// Deterministic start poses near the map's default start, distinct from it:
/// within 1 m behind to 1.5 m ahead and 1 m to either side, heading within
/// 45 degrees of +x, collision-free and connected to the goal.
pub fn held_out_starts(world: &World, count: usize, seed: u64) -> Result<Vec<Pose>, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, world.grid.seed, 0x5747]));
    let start = world.start_pose();
    let goal = world.goal_point();
    let costmap = world.costmap(PlannerConfig::default().inflation_radius)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count.max(1) * 200 {
        if out.len() == count {
            break;
        }
        let x = start.x + rng.gen_range(-1.0..1.5);
        let y = start.y + rng.gen_range(-1.0..1.0);
        let w = rng.gen_range(-FRAC_PI_4..FRAC_PI_4);
        let pose = Pose::new(x, y, w);
        if pose.distance_to(start.x, start.y) < 0.2
            || !world.grid.contains(x, y)
            || check_collision(&world.grid, x, y, world.robot_radius)
            || costmap.cost_at(x, y) >= 1.0
            || plan_on_costmap(&costmap, (x, y), goal).is_err()
        {
            continue;
        }
        out.push(pose);
    }
    if out.len() < count {
        return Err(EvalError::StartPoses {
            found: out.len(),
            wanted: count,
        });
    }
    Ok(out)
}

/// Stable per-episode identifier for evaluation runs.
pub(crate) fn eval_episode_id(map_seed: u64, index: usize) -> u64 {
    derive_seed(&[map_seed, index as u64, 0xE7A1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(outcome: Outcome, att: Option<f64>, ot: f64) -> EpisodeRecord {
        EpisodeRecord {
            map_seed: 0,
            difficulty: Difficulty::Easy,
            init_pose: Pose::new(0.0, 0.0, 0.0),
            outcome,
            att,
            ot,
            steps: 0,
            episode_return: 0.0,
            trajectory: vec![],
        }
    }

    #[test]
    fn score_examples() {
        assert_eq!(navigation_score(&rec(Outcome::Success, Some(15.0), 10.0)).unwrap(), 0.5);
        assert_eq!(navigation_score(&rec(Outcome::Success, Some(100.0), 10.0)).unwrap(), 0.125);
        assert_eq!(navigation_score(&rec(Outcome::Success, Some(40.0), 10.0)).unwrap(), 0.25);
        assert_eq!(navigation_score(&rec(Outcome::Collision, None, 10.0)).unwrap(), 0.0);
        assert!(navigation_score(&rec(Outcome::Success, Some(1.0), 0.0)).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let r = aggregate(&[rec(Outcome::Success, Some(40.0), 10.0), rec(Outcome::Collision, None, 10.0)]).unwrap();
        assert_eq!((r.ns, r.sr, r.cr, r.tr), (12.5, 50.0, 50.0, 0.0));
        assert_eq!(r.att, Some(40.0));
        let r = aggregate(&vec![rec(Outcome::Success, Some(3.0), 10.0); 3]).unwrap();
        assert_eq!(r.ns, 50.0);
        let r = aggregate(&[
            rec(Outcome::Collision, None, 1.0),
            rec(Outcome::Timeout, None, 1.0),
            rec(Outcome::Timeout, None, 1.0),
        ])
        .unwrap();
        assert_eq!(r.ns, 0.0);
        assert_eq!(r.sr + r.cr + r.tr, 100.0);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn rates_sum_to_exactly_100() {
        for n in 1..60usize {
            for s in 0..=n {
                for c in 0..=n - s {
                    let mut v = vec![rec(Outcome::Success, Some(5.0), 1.0); s];
                    v.extend(vec![rec(Outcome::Collision, None, 1.0); c]);
                    v.extend(vec![rec(Outcome::Timeout, None, 1.0); n - s - c]);
                    let r = aggregate(&v).unwrap();
                    assert_eq!(r.sr + r.cr + r.tr, 100.0, "n={n} s={s} c={c}");
                    if s + c == n {
                        assert_eq!(r.tr, 0.0);
                    }
                }
            }
        }
    }
}
