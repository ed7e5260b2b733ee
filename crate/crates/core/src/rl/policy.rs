//! The meta-planner policy: a bounded actor plus its critics.

use super::nn::{Activation, Mlp, NnError};
use crate::env::{MetaState, ACTION_DIM, STATE_DIM};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Td3,
    Ppo,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Td3 => "td3",
            Algorithm::Ppo => "ppo",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "td3" => Ok(Algorithm::Td3),
            "ppo" => Ok(Algorithm::Ppo),
            other => Err(format!("unknown algorithm '{other}' (expected td3 or ppo)")),
        }
    }
}

pub const DEFAULT_HIDDEN: [usize; 2] = [256, 256];

/// Actor, critics and counters.
///
/// TD3 keeps two Q-networks over `(state, action)`; PPO keeps one state
/// value network and a state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub algorithm: Algorithm,
    pub actor: Mlp,
    pub critics: Vec<Mlp>,
    pub log_std: Vec<f64>,
    /// Gradient steps applied so far.
    pub steps: u64,
    /// Bumped whenever parameters change; tags on-policy rollouts.
    pub version: u64,
}

impl Policy {
    pub fn new<R: Rng>(algorithm: Algorithm, hidden: &[usize], init_log_std: f64, rng: &mut R) -> Self {
        let sizes = |input: usize, output: usize| {
            let mut s = vec![input];
            s.extend_from_slice(hidden);
            s.push(output);
            s
        };
        let actor = Mlp::new(&sizes(STATE_DIM, ACTION_DIM), Activation::Tanh, rng);
        let (critics, log_std) = match algorithm {
            Algorithm::Td3 => (
                (0..2)
                    .map(|_| Mlp::new(&sizes(STATE_DIM + ACTION_DIM, 1), Activation::Identity, rng))
                    .collect(),
                Vec::new(),
            ),
            Algorithm::Ppo => (
                vec![Mlp::new(&sizes(STATE_DIM, 1), Activation::Identity, rng)],
                vec![init_log_std; ACTION_DIM],
            ),
        };
        Self {
            algorithm,
            actor,
            critics,
            log_std,
            steps: 0,
            version: 0,
        }
    }

    /// Deterministic action: the actor output (the Gaussian mean for PPO).
    pub fn act(&self, state: &MetaState) -> Result<[f64; ACTION_DIM], NnError> {
        self.act_input(&state.to_input())
    }

    pub fn act_input(&self, input: &[f64]) -> Result<[f64; ACTION_DIM], NnError> {
        let out = self.actor.apply(input)?;
        let mut a = [0.0; ACTION_DIM];
        a.copy_from_slice(&out);
        Ok(a)
    }

    pub fn value(&self, input: &[f64]) -> Result<f64, NnError> {
        Ok(self.critics[0].apply(input)?[0])
    }
}

/// Log-density of a diagonal Gaussian.
pub fn gaussian_log_prob(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&x, &m), &ls)| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
}

/// Adds N(0, sigma^2) to each component.
pub fn perturb<R: Rng>(mean: &[f64; ACTION_DIM], sigma: &[f64], rng: &mut R) -> [f64; ACTION_DIM] {
    let mut out = *mean;
    for (o, s) in out.iter_mut().zip(sigma) {
        let n: f64 = StandardNormal.sample(rng);
        *o += s * n;
    }
    out
}

pub fn clip_action(a: &[f64; ACTION_DIM]) -> [f64; ACTION_DIM] {
    a.map(|x| x.clamp(-1.0, 1.0))
}
