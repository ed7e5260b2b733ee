//! Desk-scale 2D navigation stack: a seeded grid simulator, a Dijkstra
//! global planner, a configurable dynamic-window local planner, and an RL
//! meta-planner that retunes the local planner once per second. Training can
//! up-sample episode starts from high-resistance poses diagnosed on earlier
//! successful trajectories.

pub mod checkpoint;
pub mod config;
pub mod diagnosis;
pub mod dwa;
pub mod env;
pub mod episode_log;
pub mod eval;
pub mod global_plan;
pub mod parallel;
pub mod rl;
pub mod trainer;
pub mod world;
