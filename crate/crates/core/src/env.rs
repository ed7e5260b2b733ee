//! Episodic environment whose action is the local planner's configuration.
//!
//! Each meta-step decodes an action in `[-1, 1]^7` into a [`PlannerConfig`],
//! then runs ten 0.1 s control cycles of plan, integrate and collision check.

use crate::diagnosis::{Outcome, Trajectory};
use crate::dwa::{self, DwaParams, PlannerConfig};
use crate::global_plan::{local_goal, plan_on_costmap, GlobalPath, PathIndex, PlanError, DEFAULT_LOOKAHEAD, NOMINAL_MAX_SPEED};
use crate::world::{cast_scan, check_collision, step_kinematics, Command, Costmap, Pose, World, WorldError, SCAN_MAX_RANGE};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

pub const SCAN_FEATURES: usize = 72;
pub const ACTION_DIM: usize = 7;
pub const STATE_DIM: usize = SCAN_FEATURES + 1 + ACTION_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConstants {
    /// Reward per meter of progress toward the goal.
    pub k_progress: f64,
    /// Per-step cost.
    pub k_step: f64,
    pub goal: f64,
    pub collision: f64,
    pub timeout: f64,
}

impl Default for RewardConstants {
    fn default() -> Self {
        Self {
            k_progress: 1.0,
            k_step: 0.05,
            goal: 20.0,
            collision: -20.0,
            timeout: -10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub meta_period_s: f64,
    pub control_dt_s: f64,
    pub max_meta_steps: usize,
    pub goal_tolerance_m: f64,
    pub lookahead_m: f64,
    pub reward: RewardConstants,
    pub gamma: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            meta_period_s: 1.0,
            control_dt_s: 0.1,
            max_meta_steps: 100,
            goal_tolerance_m: 0.5,
            lookahead_m: DEFAULT_LOOKAHEAD,
            reward: RewardConstants::default(),
            gamma: 0.99,
        }
    }
}

impl EnvConfig {
    pub fn control_cycles(&self) -> usize {
        (self.meta_period_s / self.control_dt_s).round() as usize
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.control_dt_s > 0.0 && self.meta_period_s > 0.0) {
            return Err("periods must be positive".into());
        }
        let ratio = self.meta_period_s / self.control_dt_s;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err("meta_period_s must be an integer multiple of control_dt_s".into());
        }
        if self.max_meta_steps == 0 {
            return Err("max_meta_steps must be at least 1".into());
        }
        if !(self.goal_tolerance_m > 0.0 && self.lookahead_m > 0.0) {
            return Err("goal tolerance and lookahead must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err("gamma must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Event {
    None,
    Goal,
    Collision,
    Timeout,
}

impl Event {
    pub fn outcome(&self) -> Option<Outcome> {
        match self {
            Event::None => None,
            Event::Goal => Some(Outcome::Success),
            Event::Collision => Some(Outcome::Collision),
            Event::Timeout => Some(Outcome::Timeout),
        }
    }
}

/// Policy observation: pooled lidar, bearing to the local goal, and the
/// previous configuration in normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaState {
    /// 72 min-pooled ranges divided by the max range, in (0, 1].
    pub scan: Vec<f64>,
    /// Bearing to the local goal, (-pi, pi].
    pub phi: f64,
    pub prev_config: [f64; ACTION_DIM],
}

impl MetaState {
    /// Flat network input of length [`STATE_DIM`]; phi is divided by pi.
    pub fn to_input(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(STATE_DIM);
        v.extend_from_slice(&self.scan);
        v.push(self.phi / PI);
        v.extend_from_slice(&self.prev_config);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: MetaState,
    pub reward: f64,
    pub done: bool,
    pub event: Event,
    pub pose: Pose,
}

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("initial pose ({0:.3}, {1:.3}) is in collision")]
    InitInCollision(f64, f64),
    #[error("goal ({0:.3}, {1:.3}) is not a free cell")]
    GoalBlocked(f64, f64),
    #[error("planning failed: {0}")]
    Plan(#[from] PlanError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("episode already finished")]
    EpisodeDone,
    #[error("environment was never reset")]
    NotReset,
    #[error("invalid environment config: {0}")]
    Config(String),
}

/// Reward for one meta-step: progress minus step cost plus terminal term.
pub fn compute_reward(d_prev: f64, d_curr: f64, event: Event, k: &RewardConstants) -> f64 {
    let terminal = match event {
        Event::None => 0.0,
        Event::Goal => k.goal,
        Event::Collision => k.collision,
        Event::Timeout => k.timeout,
    };
    k.k_progress * (d_prev - d_curr) - k.k_step + terminal
}

/// Maps a normalized action to a planner configuration.
pub fn decode_action(a: &[f64; ACTION_DIM]) -> PlannerConfig {
    PlannerConfig::from_normalized(a)
}

struct Episode {
    goal: (f64, f64),
    path: GlobalPath,
    path_index: PathIndex,
    pose: Pose,
    velocity: Command,
    config: PlannerConfig,
    steps: usize,
    done: bool,
    poses: Vec<Pose>,
}

pub struct MetaEnv {
    world: Arc<World>,
    config: EnvConfig,
    dwa: DwaParams,
    costmap: Costmap,
    episode: Option<Episode>,
}

impl MetaEnv {
    pub fn new(world: Arc<World>, config: EnvConfig) -> Result<Self, EnvError> {
        Self::with_planner(world, config, DwaParams::default())
    }

    pub fn with_planner(world: Arc<World>, config: EnvConfig, mut dwa: DwaParams) -> Result<Self, EnvError> {
        config.validate().map_err(EnvError::Config)?;
        dwa.dt = config.control_dt_s;
        let costmap = world.costmap(PlannerConfig::default().inflation_radius)?;
        Ok(Self {
            world,
            config,
            dwa,
            costmap,
            episode: None,
        })
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn costmap(&self) -> &Costmap {
        &self.costmap
    }

    /// Starts an episode from `init_pose`; plans the global path and resets
    /// the planner configuration to the bound midpoints.
    pub fn reset(&mut self, init_pose: Pose, goal: (f64, f64)) -> Result<MetaState, EnvError> {
        let grid = &self.world.grid;
        if check_collision(grid, init_pose.x, init_pose.y, self.world.robot_radius) {
            return Err(EnvError::InitInCollision(init_pose.x, init_pose.y));
        }
        match grid.cell_at(goal.0, goal.1) {
            Some(c) if !grid.is_occupied(c) => {}
            _ => return Err(EnvError::GoalBlocked(goal.0, goal.1)),
        }
        let config = PlannerConfig::default();
        self.ensure_inflation(config.inflation_radius)?;
        let path = plan_on_costmap(&self.costmap, (init_pose.x, init_pose.y), goal)?;
        let path_index = PathIndex::new(&path);
        self.episode = Some(Episode {
            goal,
            path,
            path_index,
            pose: init_pose,
            velocity: Command::default(),
            config,
            steps: 0,
            done: false,
            poses: vec![init_pose],
        });
        self.observe()
    }

    fn ensure_inflation(&mut self, radius: f64) -> Result<(), EnvError> {
        if self.costmap.inflation_radius != radius {
            self.costmap = self.world.costmap(radius)?;
        }
        Ok(())
    }

    fn episode(&self) -> Result<&Episode, EnvError> {
        self.episode.as_ref().ok_or(EnvError::NotReset)
    }

    pub fn path(&self) -> Result<&GlobalPath, EnvError> {
        Ok(&self.episode()?.path)
    }

    /// Optimal traversal time of the current mission.
    pub fn optimal_time(&self) -> Result<f64, EnvError> {
        Ok(self.episode()?.path.length_m / NOMINAL_MAX_SPEED)
    }

    pub fn pose(&self) -> Result<Pose, EnvError> {
        Ok(self.episode()?.pose)
    }

    /// Poses recorded so far: the initial pose plus one per meta-step.
    pub fn poses(&self) -> Result<&[Pose], EnvError> {
        Ok(&self.episode()?.poses)
    }

    pub fn steps(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.steps)
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.done)
    }

    pub fn observe(&self) -> Result<MetaState, EnvError> {
        let ep = self.episode()?;
        let scan = cast_scan(&self.world.grid, &ep.pose)?;
        let pooled = scan
            .ranges
            .chunks(scan.ranges.len() / SCAN_FEATURES)
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min) / SCAN_MAX_RANGE)
            .collect();
        let (_, phi) = local_goal(&ep.path, &ep.pose, self.config.lookahead_m);
        Ok(MetaState {
            scan: pooled,
            phi,
            prev_config: ep.config.to_normalized(),
        })
    }

    /// One meta-step driven by the local planner.
    pub fn step(&mut self, action: &[f64; ACTION_DIM]) -> Result<StepResult, EnvError> {
        self.advance(decode_action(action), None)
    }

    /// One meta-step under an explicit configuration, bypassing the action
    /// decoding (static baselines).
    pub fn step_config(&mut self, config: PlannerConfig) -> Result<StepResult, EnvError> {
        self.advance(config.clamped(), None)
    }

    /// One meta-step where a fixed command replaces the local planner; the
    /// action still sets the configuration reported in the state.
    pub fn step_scripted(&mut self, action: &[f64; ACTION_DIM], cmd: Command) -> Result<StepResult, EnvError> {
        self.advance(decode_action(action), Some(cmd))
    }

    fn advance(&mut self, config: PlannerConfig, scripted: Option<Command>) -> Result<StepResult, EnvError> {
        let ep = self.episode.as_ref().ok_or(EnvError::NotReset)?;
        if ep.done {
            return Err(EnvError::EpisodeDone);
        }
        self.ensure_inflation(config.inflation_radius)?;

        let grid = &self.world.grid;
        let radius = self.world.robot_radius;
        let ep = self.episode.as_mut().unwrap();
        let d_prev = ep.pose.distance_to(ep.goal.0, ep.goal.1);
        let mut event = Event::None;
        for _ in 0..self.config.control_cycles() {
            let cmd = match scripted {
                Some(c) => Command::new(c.v, c.omega),
                None => {
                    let (lg, _) = local_goal(&ep.path, &ep.pose, self.config.lookahead_m);
                    dwa::plan(&self.costmap, ep.pose, ep.velocity, lg, &ep.path_index, &config, &self.dwa).command
                }
            };
            ep.pose = step_kinematics(ep.pose, cmd, self.config.control_dt_s);
            ep.velocity = cmd;
            if check_collision(grid, ep.pose.x, ep.pose.y, radius) {
                event = Event::Collision;
                break;
            }
            if ep.pose.distance_to(ep.goal.0, ep.goal.1) <= self.config.goal_tolerance_m {
                event = Event::Goal;
                break;
            }
        }
        ep.steps += 1;
        ep.config = config;
        ep.poses.push(ep.pose);
        if event == Event::None && ep.steps >= self.config.max_meta_steps {
            event = Event::Timeout;
        }
        ep.done = event != Event::None;
        let d_curr = ep.pose.distance_to(ep.goal.0, ep.goal.1);
        let reward = compute_reward(d_prev, d_curr, event, &self.config.reward);
        let pose = ep.pose;
        let done = ep.done;
        Ok(StepResult {
            next_state: self.observe()?,
            reward,
            done,
            event,
            pose,
        })
    }

    /// Trajectory of the finished (or running) episode.
    pub fn trajectory(&self, outcome: Outcome) -> Result<Trajectory, EnvError> {
        Ok(Trajectory {
            poses: self.episode()?.poses.clone(),
            outcome,
        })
    }
}

/// Builds independent environments over shared immutable map data.
#[derive(Clone)]
pub struct EnvFactory {
    pub world: Arc<World>,
    pub config: EnvConfig,
    pub dwa: DwaParams,
}

impl EnvFactory {
    pub fn new(world: Arc<World>, config: EnvConfig) -> Self {
        Self {
            world,
            config,
            dwa: DwaParams::default(),
        }
    }

    pub fn make(&self) -> Result<MetaEnv, EnvError> {
        MetaEnv::with_planner(self.world.clone(), self.config, self.dwa)
    }

    pub fn default_pose(&self) -> Pose {
        self.world.start_pose()
    }

    pub fn goal(&self) -> (f64, f64) {
        self.world.goal_point()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{OccupancyGrid, World};

    fn corridor_world() -> Arc<World> {
        // 12 m x 3 m corridor, start at x = 1, goal at x = 11
        let mut g = OccupancyGrid::empty(240, 60, 0.05);
        g.start = (20, 30);
        g.goal = (220, 30);
        let _ = &mut g;
        World::new(g)
    }

    #[test]
    fn reward_examples() {
        let k = RewardConstants::default();
        assert!((compute_reward(2.0, 1.2, Event::None, &k) - 0.75).abs() < 1e-12);
        assert!((compute_reward(1.0, 1.0, Event::Collision, &k) + 20.05).abs() < 1e-12);
        assert!((compute_reward(1.0, 1.3, Event::Goal, &k) - 19.65).abs() < 1e-12);
    }

    #[test]
    fn decode_midpoints_and_bounds() {
        let mid = decode_action(&[0.0; 7]);
        assert_eq!((mid.vx_samples, mid.vtheta_samples), (8, 24));
        assert!((mid.max_vel_x - 1.05).abs() < 1e-12);
        let lo = decode_action(&[-5.0; 7]);
        assert_eq!(lo.to_array(), [0.1, 0.314, 4.0, 8.0, 0.1, 0.1, 0.1]);
    }

    #[test]
    fn reset_state_has_zero_prev_config() {
        let w = corridor_world();
        let mut env = MetaEnv::new(w.clone(), EnvConfig::default()).unwrap();
        let s0 = env.reset(w.start_pose(), w.goal_point()).unwrap();
        assert_eq!(s0.to_input().len(), STATE_DIM);
        assert!(s0.prev_config.iter().all(|v| v.abs() < 1e-12));
        let s1 = env.reset(w.start_pose(), w.goal_point()).unwrap();
        assert_eq!(s0, s1);
    }

    #[test]
    fn reset_inside_wall_fails() {
        let w = corridor_world();
        let mut env = MetaEnv::new(w.clone(), EnvConfig::default()).unwrap();
        assert!(matches!(
            env.reset(Pose::new(0.02, 1.5, 0.0), w.goal_point()),
            Err(EnvError::InitInCollision(..))
        ));
    }

    #[test]
    fn full_speed_reaches_goal_quickly() {
        let w = corridor_world();
        let mut env = MetaEnv::new(w.clone(), EnvConfig::default()).unwrap();
        env.reset(w.start_pose(), w.goal_point()).unwrap();
        let mut steps = 0;
        loop {
            let r = env.step(&[1.0; 7]).unwrap();
            steps += 1;
            if r.done {
                assert_eq!(r.event, Event::Goal);
                break;
            }
        }
        assert!(steps <= 10, "{steps}");
        assert_eq!(env.poses().unwrap().len(), steps + 1);
        assert!(matches!(env.step(&[0.0; 7]), Err(EnvError::EpisodeDone)));
    }

    #[test]
    fn near_goal_terminates_with_goal() {
        let w = corridor_world();
        let mut env = MetaEnv::new(w.clone(), EnvConfig::default()).unwrap();
        let (gx, gy) = w.goal_point();
        env.reset(Pose::new(gx - 0.4, gy, 0.0), (gx, gy)).unwrap();
        let r = env.step(&[0.0; 7]).unwrap();
        assert!(r.done && r.event == Event::Goal);
    }

    #[test]
    fn standing_still_times_out() {
        let w = corridor_world();
        let cfg = EnvConfig {
            max_meta_steps: 5,
            ..EnvConfig::default()
        };
        let mut env = MetaEnv::new(w.clone(), cfg).unwrap();
        env.reset(w.start_pose(), w.goal_point()).unwrap();
        let mut last = None;
        for _ in 0..5 {
            last = Some(env.step_scripted(&[0.0; 7], Command::default()).unwrap());
        }
        let last = last.unwrap();
        assert_eq!(last.event, Event::Timeout);
        assert!((last.reward - (-0.05 - 10.0)).abs() < 1e-12);
    }
}
