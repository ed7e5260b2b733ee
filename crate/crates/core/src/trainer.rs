//! Meta-planner training with high-resistance up-sampling.
//!
//! Each iteration collects `K` episodes (each starting, with probability
//! `lambda`, from a pose in the current high-resistance area), refreshes
//! that area from the round's trajectories, then applies `L` policy updates.
//! `lambda = 0` is the plain meta-planner baseline.

use crate::checkpoint::{Archive, ArchiveError};
use crate::diagnosis::{diagnose, DiagnosisConfig, HighResistanceArea, Trajectory};
use crate::dwa::PlannerConfig;
use crate::env::{EnvError, EnvFactory, ACTION_DIM};
use crate::episode_log::{EpisodeHeader, EpisodeLog, StepRecord};
use crate::eval::{aggregate, eval_episode_id, held_out_starts, run_episode, Controller, EpisodeRecord, EvalError, MetricsReport};
use crate::rl::nn::{Adam, MlpSpec};
use crate::rl::policy::{clip_action, gaussian_log_prob, perturb};
use crate::rl::{
    ppo_update, td3_update, Algorithm, LearnError, Policy, PpoParams, PpoState, ReplayBuffer, RolloutStep, RolloutStore, Td3Params,
    Td3State, Transition, DEFAULT_HIDDEN,
};
use crate::parallel::par_map;
use crate::world::{check_collision, derive_seed, Costmap, Pose};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    /// Probability of starting an episode from the high-resistance area.
    pub lambda: f64,
    /// N
    pub iterations: usize,
    /// K
    pub episodes_per_iteration: usize,
    /// L
    pub updates_per_iteration: usize,
    pub algorithm: Algorithm,
    /// Sample starts from every previously visited pose instead of H.
    pub rs_mode: bool,
    pub filter_failures: bool,
    pub seed: u64,
    pub diagnosis: DiagnosisConfig,
    pub hidden: Vec<usize>,
    pub td3: Td3Params,
    pub ppo: PpoParams,
    /// Greedy evaluation episodes after every iteration.
    pub eval_episodes: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            lambda: 0.4,
            iterations: 100,
            episodes_per_iteration: 10,
            updates_per_iteration: 50,
            algorithm: Algorithm::Td3,
            rs_mode: false,
            filter_failures: true,
            seed: 0,
            diagnosis: DiagnosisConfig::default(),
            hidden: DEFAULT_HIDDEN.to_vec(),
            td3: Td3Params::default(),
            ppo: PpoParams::default(),
            eval_episodes: 5,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if self.iterations == 0 || self.episodes_per_iteration == 0 || self.updates_per_iteration == 0 {
            return Err("iterations, episodes_per_iteration and updates_per_iteration must be at least 1".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err("hidden layer sizes must be non-empty and positive".into());
        }
        if self.eval_episodes == 0 {
            return Err("eval_episodes must be at least 1".into());
        }
        self.diagnosis.validate()?;
        self.td3.validate()?;
        self.ppo.validate()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid trainer config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Eval(#[from] Box<EvalError>),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("checkpoint config hash {found} does not match current config {expected}")]
    HashMismatch { expected: String, found: String },
    #[error("checkpoint is inconsistent: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<crate::rl::NnError> for TrainError {
    fn from(e: crate::rl::NnError) -> Self {
        TrainError::Learn(e.into())
    }
}

impl From<EvalError> for TrainError {
    fn from(e: EvalError) -> Self {
        TrainError::Eval(Box::new(e))
    }
}

/// The map, environment settings and evaluation starts a run trains on.
#[derive(Clone)]
pub struct TrainEnv {
    pub factory: EnvFactory,
    pub eval_starts: Vec<Pose>,
    pub config_hash: String,
}

impl TrainEnv {
    pub fn new(factory: EnvFactory, eval_episodes: usize, config_hash: impl Into<String>) -> Result<Self, TrainError> {
        let eval_starts = held_out_starts(&factory.world, eval_episodes, 0)?;
        Ok(Self {
            factory,
            eval_starts,
            config_hash: config_hash.into(),
        })
    }
}

/// Chooses an episode's initial pose. One uniform draw gates the choice on
/// every call, so the random stream does not depend on whether the pool is
/// empty; a second draw picks the element. Picks failing `is_valid` fall
/// back to the default. Returns the pose and whether it came from the pool.
pub fn sample_init_pose<R: Rng>(
    pool: &[Pose],
    lambda: f64,
    default_pose: Pose,
    is_valid: impl Fn(&Pose) -> bool,
    rng: &mut R,
) -> (Pose, bool) {
    let gate: f64 = rng.gen();
    if gate < lambda && !pool.is_empty() {
        let pick = pool[rng.gen_range(0..pool.len())];
        if is_valid(&pick) {
            return (pick, true);
        }
    }
    (default_pose, false)
}

/// Replaces H with the diagnosis of `trajectories` unless that is empty.
pub fn refresh_hr(
    h_old: &HighResistanceArea,
    trajectories: &[Trajectory],
    config: &DiagnosisConfig,
    filter_failures: bool,
) -> HighResistanceArea {
    let candidate = diagnose(trajectories, config, filter_failures);
    if candidate.is_empty() {
        h_old.clone()
    } else {
        candidate
    }
}

/// Everything one collection round produced, in episode order.
#[derive(Debug, Clone, Default)]
pub struct Round {
    pub logs: Vec<EpisodeLog>,
    pub transitions: Vec<Transition>,
    pub rollout: Vec<RolloutStep>,
    pub from_pool: Vec<bool>,
    /// Policy version that acted.
    pub policy_version: u64,
}

impl Round {
    pub fn trajectories(&self) -> Vec<Trajectory> {
        self.logs.iter().map(EpisodeLog::trajectory).collect()
    }

    pub fn mean_return(&self) -> f64 {
        self.logs.iter().map(EpisodeLog::undiscounted_return).sum::<f64>() / self.logs.len().max(1) as f64
    }
}

struct EpisodePlan {
    id: u64,
    pose: Pose,
    from_pool: bool,
    noise_seed: u64,
}

struct EpisodeOut {
    log: EpisodeLog,
    transitions: Vec<Transition>,
    rollout: Vec<RolloutStep>,
    from_pool: bool,
}

fn training_episode(
    policy: &Policy,
    config: &TrainerConfig,
    env: &TrainEnv,
    plan: &EpisodePlan,
) -> Result<EpisodeOut, TrainError> {
    let factory = &env.factory;
    let goal = factory.goal();
    let mut sim = factory.make()?;
    let (init, from_pool, mut state) = match sim.reset(plan.pose, goal) {
        Ok(s) => (plan.pose, plan.from_pool, s),
        Err(EnvError::InitInCollision(..) | EnvError::Plan(_)) if plan.from_pool => {
            let d = factory.default_pose();
            (d, false, sim.reset(d, goal)?)
        }
        Err(e) => return Err(e.into()),
    };
    let grid = &factory.world.grid;
    let mut log = EpisodeLog {
        header: EpisodeHeader {
            map_seed: grid.seed,
            difficulty: grid.difficulty,
            init_pose: init,
            goal,
            ot: sim.optimal_time()?,
            episode: plan.id,
            config_hash: env.config_hash.clone(),
        },
        steps: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(plan.noise_seed);
    let mut transitions = Vec::new();
    let mut rollout = Vec::new();
    loop {
        let input = state.to_input();
        let mean = policy.act_input(&input)?;
        let (action, raw) = match config.algorithm {
            Algorithm::Td3 => {
                let sigma = [config.td3.exploration_sigma; ACTION_DIM];
                (clip_action(&perturb(&mean, &sigma, &mut rng)), None)
            }
            Algorithm::Ppo => {
                let sigma: Vec<f64> = policy.log_std.iter().map(|l| l.exp()).collect();
                let raw = perturb(&mean, &sigma, &mut rng);
                (clip_action(&raw), Some(raw))
            }
        };
        let result = sim.step(&action)?;
        log.steps.push(StepRecord {
            t: log.steps.len() + 1,
            pose: result.pose,
            action,
            reward: result.reward,
            event: result.event,
        });
        if let Some(raw) = raw {
            rollout.push(RolloutStep {
                log_prob: gaussian_log_prob(&raw, &mean, &policy.log_std),
                value: policy.value(&input)?,
                s: input,
                raw_action: raw,
                r: result.reward,
                done: result.done,
            });
        }
        transitions.push(Transition {
            s: state,
            a: action,
            r: result.reward,
            s_next: result.next_state.clone(),
            done: result.done,
        });
        state = result.next_state;
        if result.done {
            break;
        }
    }
    Ok(EpisodeOut {
        log,
        transitions,
        rollout,
        from_pool,
    })
}

fn start_validator(env: &TrainEnv) -> Result<impl Fn(&Pose) -> bool + '_, TrainError> {
    let world = &env.factory.world;
    let costmap: Costmap = world.costmap(PlannerConfig::default().inflation_radius).map_err(EnvError::from)?;
    Ok(move |p: &Pose| {
        p.is_finite()
            && world.grid.contains(p.x, p.y)
            && !check_collision(&world.grid, p.x, p.y, world.robot_radius)
            && costmap.cost_at(p.x, p.y) < 1.0
    })
}

/// Collects `K` episodes with exploration noise. Initial poses are drawn in
/// episode order from `rng`; each episode's noise comes from its own seeded
/// stream, so the result does not depend on `workers`.
#[allow(clippy::too_many_arguments)]
pub fn collect_round<R: Rng>(
    policy: &Policy,
    env: &TrainEnv,
    config: &TrainerConfig,
    hr: &HighResistanceArea,
    visited: &[Pose],
    iteration: usize,
    rng: &mut R,
    workers: usize,
) -> Result<Round, TrainError> {
    let default_pose = env.factory.default_pose();
    let hr_poses: Vec<Pose> = hr.poses().copied().collect();
    let pool: &[Pose] = if config.rs_mode { visited } else { &hr_poses };
    let valid = start_validator(env)?;
    let k_total = config.episodes_per_iteration;
    let plans: Vec<EpisodePlan> = (0..k_total)
        .map(|k| {
            let (pose, from_pool) = sample_init_pose(pool, config.lambda, default_pose, &valid, rng);
            EpisodePlan {
                id: (iteration * k_total + k) as u64,
                pose,
                from_pool,
                noise_seed: derive_seed(&[config.seed, 3, iteration as u64, k as u64]),
            }
        })
        .collect();

    let outs = par_map(&plans, workers, |_, p| training_episode(policy, config, env, p));

    let mut round = Round {
        policy_version: policy.version,
        ..Round::default()
    };
    for out in outs {
        let out = out?;
        round.logs.push(out.log);
        round.transitions.extend(out.transitions);
        round.rollout.extend(out.rollout);
        round.from_pool.push(out.from_pool);
    }
    Ok(round)
}

/// One line of the training report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub iteration: usize,
    pub mean_return: f64,
    #[serde(rename = "NS")]
    pub ns: f64,
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "CR")]
    pub cr: f64,
    #[serde(rename = "TR")]
    pub tr: f64,
    #[serde(rename = "|H|")]
    pub hr_size: usize,
}

pub const REPORT_HEADER: &str = "iteration,mean_return,NS,SR,CR,TR,|H|";

/// Writes the report as CSV preceded by a `# config_hash=` comment line.
pub fn write_report_csv<W: Write>(rows: &[ReportRow], config_hash: &str, out: &mut W) -> io::Result<()> {
    writeln!(out, "# config_hash={config_hash}")?;
    writeln!(out, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            r.iteration, r.mean_return, r.ns, r.sr, r.cr, r.tr, r.hr_size
        )?;
    }
    Ok(())
}

/// Result of one training iteration.
#[derive(Debug, Clone)]
pub struct IterationOutput {
    pub row: ReportRow,
    pub logs: Vec<EpisodeLog>,
    pub from_pool: Vec<bool>,
    /// H was replaced by this round's diagnosis; point sources then index
    /// into `logs`.
    pub hr_refreshed: bool,
    pub eval: MetricsReport,
    pub eval_records: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone)]
enum Learner {
    Td3 { state: Box<Td3State>, buffer: ReplayBuffer },
    Ppo { state: Box<PpoState> },
}

/// Resumable training state.
pub struct Trainer {
    config: TrainerConfig,
    env: TrainEnv,
    pub policy: Policy,
    learner: Learner,
    pub hr: HighResistanceArea,
    visited: Vec<Pose>,
    rng: ChaCha8Rng,
    pub iteration: usize,
    pub report: Vec<ReportRow>,
    workers: usize,
}

impl Trainer {
    pub fn new(config: TrainerConfig, env: TrainEnv) -> Result<Self, TrainError> {
        config.validate().map_err(TrainError::Config)?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, 1]));
        let policy = Policy::new(config.algorithm, &config.hidden, config.ppo.init_log_std, &mut init_rng);
        let learner = match config.algorithm {
            Algorithm::Td3 => Learner::Td3 {
                state: Box::new(Td3State::new(&policy, &config.td3)),
                buffer: ReplayBuffer::new(config.td3.replay_capacity),
            },
            Algorithm::Ppo => Learner::Ppo {
                state: Box::new(PpoState::new(&policy, &config.ppo)),
            },
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(derive_seed(&[config.seed, 2])),
            config,
            env,
            policy,
            learner,
            hr: HighResistanceArea::default(),
            visited: Vec::new(),
            iteration: 0,
            report: Vec::new(),
            workers: 1,
        })
    }

    /// Parallel episode collection; results are identical for any count.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn env(&self) -> &TrainEnv {
        &self.env
    }

    pub fn is_finished(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    /// Seeds H directly, e.g. from a previous diagnosis.
    pub fn set_hr(&mut self, hr: HighResistanceArea) {
        self.hr = hr;
    }

    /// Greedy evaluation from the held-out starts.
    pub fn evaluate(&self) -> Result<(MetricsReport, Vec<EpisodeRecord>), TrainError> {
        evaluate_policy(&self.policy, &self.env)
    }

    pub fn collect(&mut self) -> Result<Round, TrainError> {
        collect_round(
            &self.policy,
            &self.env,
            &self.config,
            &self.hr,
            &self.visited,
            self.iteration,
            &mut self.rng,
            self.workers,
        )
    }

    pub fn step(&mut self) -> Result<IterationOutput, TrainError> {
        self.iteration += 1;
        let round = self.collect()?;
        let trajectories = round.trajectories();
        let hr = refresh_hr(&self.hr, &trajectories, &self.config.diagnosis, self.config.filter_failures);
        let hr_refreshed = hr != self.hr;
        self.hr = hr;
        if self.config.rs_mode {
            for t in &trajectories {
                self.visited.extend_from_slice(&t.poses);
            }
        }
        let l = self.config.updates_per_iteration;
        match &mut self.learner {
            Learner::Td3 { state, buffer } => {
                for t in &round.transitions {
                    buffer.push(t);
                }
                if buffer.len() >= self.config.td3.batch_size {
                    for _ in 0..l {
                        td3_update(&mut self.policy, state, buffer, &self.config.td3, &mut self.rng)?;
                    }
                }
            }
            Learner::Ppo { state } => {
                let store = RolloutStore {
                    version: round.policy_version,
                    steps: round.rollout.clone(),
                };
                ppo_update(&mut self.policy, state, &store, &self.config.ppo, l, &mut self.rng)?;
            }
        }
        let (eval, eval_records) = self.evaluate()?;
        let row = ReportRow {
            iteration: self.iteration,
            mean_return: round.mean_return(),
            ns: eval.ns,
            sr: eval.sr,
            cr: eval.cr,
            tr: eval.tr,
            hr_size: self.hr.len(),
        };
        self.report.push(row);
        Ok(IterationOutput {
            row,
            logs: round.logs,
            from_pool: round.from_pool,
            hr_refreshed,
            eval,
            eval_records,
        })
    }

    /// Everything needed to continue the run bit-identically.
    pub fn state_archive(&self) -> Archive {
        let mut archive = policy_archive(&self.policy, &self.env.config_hash, self.iteration);
        let meta = archive.meta.as_object_mut().expect("object meta");
        meta.insert("format".into(), "trainer".into());
        meta.insert("rng".into(), serde_json::to_value(&self.rng).expect("rng serializes"));
        meta.insert("hr".into(), serde_json::to_value(&self.hr).expect("hr serializes"));
        meta.insert("visited".into(), serde_json::to_value(&self.visited).expect("poses serialize"));
        meta.insert("report".into(), serde_json::to_value(&self.report).expect("rows serialize"));
        let mut optimizers: Vec<(String, &Adam)> = Vec::new();
        match &self.learner {
            Learner::Td3 { state, buffer } => {
                meta.insert("td3_updates".into(), state.updates.into());
                archive.push("actor_target", state.actor_target.params_flat());
                for (i, t) in state.critic_targets.iter().enumerate() {
                    archive.push(format!("critic_target{i}"), t.params_flat());
                }
                optimizers.push(("actor_opt".into(), &state.actor_opt));
                for (i, o) in state.critic_opts.iter().enumerate() {
                    optimizers.push((format!("critic_opt{i}"), o));
                }
                let (cap, head, s, a, r, s2, d) = buffer.to_parts();
                let meta = archive.meta.as_object_mut().expect("object meta");
                meta.insert("replay_capacity".into(), cap.into());
                meta.insert("replay_head".into(), head.into());
                archive.push("replay.s", s);
                archive.push("replay.a", a);
                archive.push("replay.r", r);
                archive.push("replay.s_next", s2);
                archive.push("replay.done", d);
            }
            Learner::Ppo { state } => {
                optimizers.push(("actor_opt".into(), &state.actor_opt));
                optimizers.push(("critic_opt0".into(), &state.critic_opt));
                optimizers.push(("log_std_opt".into(), &state.log_std_opt));
            }
        }
        let mut adam_meta = serde_json::Map::new();
        for (name, opt) in optimizers {
            adam_meta.insert(
                name.clone(),
                serde_json::json!({"lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps, "t": opt.t}),
            );
            archive.push(format!("{name}.m"), opt.m.clone());
            archive.push(format!("{name}.v"), opt.v.clone());
        }
        archive.meta.as_object_mut().expect("object meta").insert("optimizers".into(), adam_meta.into());
        archive
    }

    /// Rebuilds a trainer from [`state_archive`](Self::state_archive)
    /// output. The archive must carry the same config hash as `env`.
    pub fn restore(config: TrainerConfig, env: TrainEnv, archive: &Archive) -> Result<Self, TrainError> {
        let found: String = archive.meta_field("config_hash")?;
        if found != env.config_hash {
            return Err(TrainError::HashMismatch {
                expected: env.config_hash.clone(),
                found,
            });
        }
        let format: String = archive.meta_field("format")?;
        if format != "trainer" {
            return Err(TrainError::Corrupt(format!("expected a trainer checkpoint, found '{format}'")));
        }
        let mut trainer = Trainer::new(config, env)?;
        let (policy, iteration) = policy_from_archive(archive)?;
        if policy.algorithm != trainer.config.algorithm {
            return Err(TrainError::Corrupt("algorithm differs from config".into()));
        }
        trainer.policy = policy;
        trainer.iteration = iteration;
        trainer.rng = archive.meta_field("rng")?;
        trainer.hr = archive.meta_field("hr")?;
        trainer.visited = archive.meta_field("visited")?;
        trainer.report = archive.meta_field("report")?;
        let optimizers: serde_json::Map<String, serde_json::Value> = archive.meta_field("optimizers")?;
        let load_adam = |name: &str| -> Result<Adam, TrainError> {
            let m = optimizers.get(name).ok_or_else(|| TrainError::Corrupt(format!("missing optimizer {name}")))?;
            let field = |k: &str| m.get(k).and_then(|v| v.as_f64()).ok_or_else(|| TrainError::Corrupt(format!("{name}.{k}")));
            Ok(Adam {
                lr: field("lr")?,
                beta1: field("beta1")?,
                beta2: field("beta2")?,
                eps: field("eps")?,
                t: m.get("t").and_then(|v| v.as_u64()).ok_or_else(|| TrainError::Corrupt(format!("{name}.t")))?,
                m: archive.tensor(&format!("{name}.m"))?.to_vec(),
                v: archive.tensor(&format!("{name}.v"))?.to_vec(),
            })
        };
        let rebuild = |name: &str, like: &crate::rl::Mlp| -> Result<crate::rl::Mlp, TrainError> {
            MlpSpec::of(like)
                .build(archive.tensor(name)?)
                .map_err(|e| TrainError::Corrupt(format!("{name}: {e}")))
        };
        match &mut trainer.learner {
            Learner::Td3 { state, buffer } => {
                state.updates = archive.meta_field("td3_updates")?;
                state.actor_target = rebuild("actor_target", &trainer.policy.actor)?;
                for i in 0..state.critic_targets.len() {
                    state.critic_targets[i] = rebuild(&format!("critic_target{i}"), &trainer.policy.critics[i])?;
                }
                state.actor_opt = load_adam("actor_opt")?;
                for i in 0..state.critic_opts.len() {
                    state.critic_opts[i] = load_adam(&format!("critic_opt{i}"))?;
                }
                *buffer = ReplayBuffer::from_parts(
                    archive.meta_field("replay_capacity")?,
                    archive.meta_field("replay_head")?,
                    archive.tensor("replay.s")?.to_vec(),
                    archive.tensor("replay.a")?.to_vec(),
                    archive.tensor("replay.r")?.to_vec(),
                    archive.tensor("replay.s_next")?.to_vec(),
                    archive.tensor("replay.done")?,
                )
                .ok_or_else(|| TrainError::Corrupt("replay buffer sizes".into()))?;
            }
            Learner::Ppo { state } => {
                state.actor_opt = load_adam("actor_opt")?;
                state.critic_opt = load_adam("critic_opt0")?;
                state.log_std_opt = load_adam("log_std_opt")?;
            }
        }
        Ok(trainer)
    }
}

/// Greedy evaluation of `policy` from the environment's held-out starts.
pub fn evaluate_policy(policy: &Policy, env: &TrainEnv) -> Result<(MetricsReport, Vec<EpisodeRecord>), TrainError> {
    let mut records = Vec::with_capacity(env.eval_starts.len());
    for (i, &start) in env.eval_starts.iter().enumerate() {
        let id = eval_episode_id(env.factory.world.grid.seed, i);
        let (record, _) = run_episode(Controller::Policy(policy), &env.factory, start, id, &env.config_hash)?;
        records.push(record);
    }
    Ok((aggregate(&records)?, records))
}

/// Policy parameters, counters and provenance.
pub fn policy_archive(policy: &Policy, config_hash: &str, iteration: usize) -> Archive {
    let mut archive = Archive::new(serde_json::json!({
        "format": "policy",
        "algorithm": policy.algorithm,
        "config_hash": config_hash,
        "iteration": iteration,
        "steps": policy.steps,
        "version": policy.version,
        "actor": MlpSpec::of(&policy.actor),
        "critics": policy.critics.iter().map(MlpSpec::of).collect::<Vec<_>>(),
    }));
    archive.push("actor", policy.actor.params_flat());
    for (i, c) in policy.critics.iter().enumerate() {
        archive.push(format!("critic{i}"), c.params_flat());
    }
    archive.push("log_std", policy.log_std.clone());
    archive
}

/// Reads a policy from either checkpoint kind; returns it with the
/// iteration it was saved at.
pub fn policy_from_archive(archive: &Archive) -> Result<(Policy, usize), TrainError> {
    let actor_spec: MlpSpec = archive.meta_field("actor")?;
    let critic_specs: Vec<MlpSpec> = archive.meta_field("critics")?;
    let corrupt = |e: crate::rl::NnError| TrainError::Corrupt(e.to_string());
    let actor = actor_spec.build(archive.tensor("actor")?).map_err(corrupt)?;
    let critics = critic_specs
        .iter()
        .enumerate()
        .map(|(i, s)| s.build(archive.tensor(&format!("critic{i}"))?).map_err(corrupt))
        .collect::<Result<Vec<_>, _>>()?;
    let policy = Policy {
        algorithm: archive.meta_field("algorithm")?,
        actor,
        critics,
        log_std: archive.tensor("log_std")?.to_vec(),
        steps: archive.meta_field("steps")?,
        version: archive.meta_field("version")?,
    };
    let expected_critics = match policy.algorithm {
        Algorithm::Td3 => 2,
        Algorithm::Ppo => 1,
    };
    if policy.critics.len() != expected_critics || policy.actor.output_dim() != ACTION_DIM {
        return Err(TrainError::Corrupt("network layout does not match the algorithm".into()));
    }
    Ok((policy, archive.meta_field("iteration")?))
}

/// Runs all iterations; `on_iteration` sees every output and the trainer
/// (for checkpointing) before the next iteration starts.
pub fn train_with<F>(mut trainer: Trainer, mut on_iteration: F) -> Result<Trainer, TrainError>
where
    F: FnMut(&Trainer, &IterationOutput) -> Result<(), TrainError>,
{
    while !trainer.is_finished() {
        let out = trainer.step()?;
        on_iteration(&trainer, &out)?;
    }
    Ok(trainer)
}

pub fn train(config: TrainerConfig, env: TrainEnv) -> Result<(Policy, Vec<ReportRow>), TrainError> {
    let trainer = train_with(Trainer::new(config, env)?, |_, _| Ok(()))?;
    Ok((trainer.policy, trainer.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnosis::Outcome;
    use crate::env::EnvConfig;
    use crate::world::{OccupancyGrid, World};
    use proptest::prelude::*;

    fn uturn(outcome: Outcome) -> Trajectory {
        Trajectory {
            poses: vec![Pose::new(0.0, 0.0, 0.0), Pose::new(1.0, 0.0, 0.0), Pose::new(0.0, 0.0, 0.0)],
            outcome,
        }
    }

    fn empty_env(size_m: f64) -> TrainEnv {
        let cells = (size_m / 0.05).round() as usize;
        let mut g = OccupancyGrid::empty(cells, cells, 0.05);
        g.start = (20, cells / 2);
        g.goal = (cells - 21, cells / 2);
        let factory = EnvFactory::new(World::new(g), EnvConfig::default());
        TrainEnv::new(factory, 2, "test").unwrap()
    }

    fn tiny_config(algorithm: Algorithm) -> TrainerConfig {
        TrainerConfig {
            iterations: 2,
            episodes_per_iteration: 2,
            updates_per_iteration: 2,
            algorithm,
            hidden: vec![16],
            eval_episodes: 2,
            td3: Td3Params {
                batch_size: 4,
                ..Td3Params::default()
            },
            ..TrainerConfig::default()
        }
    }

    #[test]
    fn lambda_zero_always_default() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Pose::new(1.0, 1.0, 0.0);
        let pool = [Pose::new(2.0, 2.0, 0.0)];
        for _ in 0..100 {
            assert_eq!(sample_init_pose(&pool, 0.0, d, |_| true, &mut rng), (d, false));
        }
    }

    #[test]
    fn lambda_one_always_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Pose::new(2.0, 2.0, 0.0);
        for _ in 0..100 {
            assert_eq!(sample_init_pose(&[p], 1.0, Pose::new(1.0, 1.0, 0.0), |_| true, &mut rng), (p, true));
        }
    }

    #[test]
    fn empty_pool_or_invalid_pick_falls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Pose::new(1.0, 1.0, 0.0);
        assert_eq!(sample_init_pose(&[], 1.0, d, |_| true, &mut rng), (d, false));
        assert_eq!(sample_init_pose(&[Pose::new(5.0, 5.0, 0.0)], 1.0, d, |_| false, &mut rng), (d, false));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn upsampling_frequency_within_three_sigma(lambda in 0.05f64..0.95, seed in any::<u64>()) {
            let m = 2000usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pool = [Pose::new(2.0, 2.0, 0.0), Pose::new(3.0, 2.0, 0.0)];
            let hits = (0..m)
                .filter(|_| sample_init_pose(&pool, lambda, Pose::new(1.0, 1.0, 0.0), |_| true, &mut rng).1)
                .count();
            let frac = hits as f64 / m as f64;
            let tol = 3.0 * (lambda * (1.0 - lambda) / m as f64).sqrt();
            prop_assert!((frac - lambda).abs() <= tol, "frac {} lambda {}", frac, lambda);
        }
    }

    #[test]
    fn refresh_keeps_old_area_when_candidate_empty() {
        let cfg = DiagnosisConfig::default();
        let old = diagnose(&[uturn(Outcome::Success)], &cfg, true);
        assert_eq!(old.len(), 1);
        let kept = refresh_hr(&old, &[uturn(Outcome::Collision)], &cfg, true);
        assert_eq!(kept, old);
        let replaced = refresh_hr(&HighResistanceArea::default(), &[uturn(Outcome::Success)], &cfg, true);
        assert_eq!(replaced, old);
        let unfiltered = refresh_hr(&HighResistanceArea::default(), &[uturn(Outcome::Collision)], &cfg, false);
        assert_eq!(unfiltered.len(), 1);
    }

    #[test]
    fn round_accounting_and_buffer_integrity() {
        let env = empty_env(6.0);
        let cfg = tiny_config(Algorithm::Td3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let policy = Policy::new(Algorithm::Td3, &[16], 0.0, &mut rng);
        let round = collect_round(&policy, &env, &cfg, &HighResistanceArea::default(), &[], 0, &mut rng, 1).unwrap();
        assert_eq!(round.logs.len(), 2);
        let steps: usize = round.logs.iter().map(|l| l.steps.len()).sum();
        assert_eq!(round.transitions.len(), steps);
        for w in round.transitions.windows(2) {
            if !w[0].done {
                assert_eq!(w[0].s_next, w[1].s);
            }
        }
        assert!(round.transitions.last().unwrap().done);
    }

    #[test]
    fn preloaded_area_with_unit_lambda_sets_every_start() {
        let env = empty_env(6.0);
        let cfg = TrainerConfig {
            lambda: 1.0,
            ..tiny_config(Algorithm::Td3)
        };
        let p = Pose::new(2.0, 3.2, 0.3);
        let hr = diagnose(
            &[Trajectory {
                poses: vec![p, Pose::new(3.0, 3.2, 0.0), p],
                outcome: Outcome::Success,
            }],
            &cfg.diagnosis,
            true,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let policy = Policy::new(Algorithm::Td3, &[16], 0.0, &mut rng);
        let round = collect_round(&policy, &env, &cfg, &hr, &[], 0, &mut rng, 1).unwrap();
        assert!(round.logs.iter().all(|l| l.header.init_pose == p));
        assert_eq!(round.from_pool, vec![true, true]);
    }

    #[test]
    fn collection_is_independent_of_worker_count() {
        let env = empty_env(6.0);
        let cfg = TrainerConfig {
            episodes_per_iteration: 3,
            ..tiny_config(Algorithm::Ppo)
        };
        let run = |workers| {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let policy = Policy::new(Algorithm::Ppo, &[16], -1.0, &mut rng);
            collect_round(&policy, &env, &cfg, &HighResistanceArea::default(), &[], 0, &mut rng, workers)
                .unwrap()
                .logs
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn smoke_train_both_algorithms() {
        for algo in [Algorithm::Td3, Algorithm::Ppo] {
            let mut checkpoints = 0;
            let trainer = train_with(Trainer::new(tiny_config(algo), empty_env(6.0)).unwrap(), |t, out| {
                checkpoints += 1;
                assert_eq!(out.row.iteration, t.iteration);
                Ok(())
            })
            .unwrap();
            assert_eq!(checkpoints, 2);
            assert_eq!(trainer.report.len(), 2);
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        for algo in [Algorithm::Td3, Algorithm::Ppo] {
            let cfg = TrainerConfig {
                iterations: 3,
                ..tiny_config(algo)
            };
            let full = train_with(Trainer::new(cfg.clone(), empty_env(6.0)).unwrap(), |_, _| Ok(())).unwrap();

            let mut first = Trainer::new(cfg.clone(), empty_env(6.0)).unwrap();
            first.step().unwrap();
            let mut bytes = Vec::new();
            first.state_archive().write(&mut bytes).unwrap();
            let archive = Archive::read(&mut bytes.as_slice()).unwrap();
            let resumed = Trainer::restore(cfg, empty_env(6.0), &archive).unwrap();
            let resumed = train_with(resumed, |_, _| Ok(())).unwrap();
            assert_eq!(resumed.policy, full.policy);
            assert_eq!(resumed.report, full.report);
        }
    }

    #[test]
    fn restore_refuses_other_hash() {
        let cfg = tiny_config(Algorithm::Td3);
        let t = Trainer::new(cfg.clone(), empty_env(6.0)).unwrap();
        let archive = t.state_archive();
        let mut env = empty_env(6.0);
        env.config_hash = "other".into();
        assert!(matches!(Trainer::restore(cfg, env, &archive), Err(TrainError::HashMismatch { .. })));
    }

    #[test]
    fn policy_archive_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Policy::new(Algorithm::Ppo, &[8, 8], -1.0, &mut rng);
        let (back, it) = policy_from_archive(&policy_archive(&p, "h", 4)).unwrap();
        assert_eq!(back, p);
        assert_eq!(it, 4);
    }
}
