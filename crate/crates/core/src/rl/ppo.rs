//! Clipped-surrogate policy optimization with generalized advantage
//! estimation. The policy is a diagonal Gaussian whose mean is the actor
//! output and whose log standard deviation is a free parameter vector.

use super::buffer::RolloutStore;
use super::nn::{Adam, Gradients};
use super::policy::{gaussian_entropy, Algorithm, Policy};
use super::LearnError;
use crate::env::{ACTION_DIM, STATE_DIM};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoParams {
    pub clip: f64,
    pub epochs: usize,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub init_log_std: f64,
}

impl Default for PpoParams {
    fn default() -> Self {
        Self {
            clip: 0.2,
            epochs: 4,
            gae_lambda: 0.95,
            gamma: 0.99,
            entropy_coef: 0.01,
            value_coef: 0.5,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            init_log_std: -1.0,
        }
    }
}

impl PpoParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.clip > 0.0) || self.epochs == 0 {
            return Err("ppo clip must be positive and epochs at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) || !(0.0..=1.0).contains(&self.gamma) {
            return Err("ppo gamma and gae_lambda must lie in [0, 1]".into());
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err("ppo learning rates must be positive".into());
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 || !self.init_log_std.is_finite() {
            return Err("ppo coefficients must be non-negative and init_log_std finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoState {
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub log_std_opt: Adam,
}

impl PpoState {
    pub fn new(policy: &Policy, params: &PpoParams) -> Self {
        Self {
            actor_opt: Adam::new(policy.actor.param_count(), params.actor_lr),
            critic_opt: Adam::new(policy.critics[0].param_count(), params.critic_lr),
            log_std_opt: Adam::new(ACTION_DIM, params.actor_lr),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoLoss {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub minibatches: usize,
}

/// Generalized advantage estimates and value targets over contiguous
/// episodes. A step flagged `done` does not bootstrap; a trailing step
/// without `done` bootstraps from zero.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let cont = if dones[t] || t + 1 == n { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * cont * next_value - values[t];
        next_adv = delta + gamma * lambda * cont * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Clipped-surrogate loss (minus the entropy bonus) and its gradients.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub actor: Gradients,
    pub log_std: Vec<f64>,
}

pub fn surrogate(
    policy: &Policy,
    states: &Array2<f64>,
    actions: &Array2<f64>,
    old_log_prob: &[f64],
    advantages: &[f64],
    clip: f64,
    entropy_coef: f64,
) -> Result<Surrogate, LearnError> {
    let n = states.nrows();
    let cache = policy.actor.forward_cached(states.view())?;
    let mean = cache.output();
    let std: Vec<f64> = policy.log_std.iter().map(|l| l.exp()).collect();
    let mut upstream = Array2::zeros((n, ACTION_DIM));
    let mut log_std_grad = vec![-entropy_coef; ACTION_DIM];
    let mut loss = 0.0;
    let mut kl = 0.0;
    for i in 0..n {
        let mut lp = 0.0;
        let mut z = [0.0; ACTION_DIM];
        for j in 0..ACTION_DIM {
            z[j] = (actions[[i, j]] - mean[[i, j]]) / std[j];
            lp += -0.5 * z[j] * z[j] - policy.log_std[j] - 0.5 * (2.0 * std::f64::consts::PI).ln();
        }
        let log_ratio = lp - old_log_prob[i];
        let ratio = log_ratio.exp();
        kl += ratio - 1.0 - log_ratio;
        let a = advantages[i];
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
        let unclipped_term = ratio * a;
        let clipped_term = clipped * a;
        loss -= unclipped_term.min(clipped_term);
        let flows = ratio == clipped || unclipped_term < clipped_term;
        if flows {
            // d loss / d log_prob
            let g = -a * ratio / n as f64;
            for j in 0..ACTION_DIM {
                upstream[[i, j]] = g * z[j] / std[j];
                log_std_grad[j] += g * (z[j] * z[j] - 1.0);
            }
        }
    }
    let entropy = gaussian_entropy(&policy.log_std);
    let (actor, _) = policy.actor.backward(&cache, upstream.view());
    Ok(Surrogate {
        loss: loss / n as f64 - entropy_coef * entropy,
        entropy,
        approx_kl: kl / n as f64,
        actor,
        log_std: log_std_grad,
    })
}

/// Runs `params.epochs` passes over the store, splitting each pass into
/// `ceil(updates / epochs)` shuffled minibatches, then bumps the policy
/// version so the store becomes stale.
pub fn ppo_update<R: Rng>(
    policy: &mut Policy,
    state: &mut PpoState,
    store: &RolloutStore,
    params: &PpoParams,
    updates: usize,
    rng: &mut R,
) -> Result<PpoLoss, LearnError> {
    if policy.algorithm != Algorithm::Ppo {
        return Err(LearnError::WrongAlgorithm(policy.algorithm));
    }
    if store.version != policy.version {
        return Err(LearnError::StaleRollout {
            expected: policy.version,
            got: store.version,
        });
    }
    let n = store.steps.len();
    if n == 0 {
        return Err(LearnError::InsufficientBuffer { have: 0, need: 1 });
    }
    let rewards: Vec<f64> = store.steps.iter().map(|s| s.r).collect();
    let values: Vec<f64> = store.steps.iter().map(|s| s.value).collect();
    let dones: Vec<bool> = store.steps.iter().map(|s| s.done).collect();
    let (mut adv, returns) = gae(&rewards, &values, &dones, params.gamma, params.gae_lambda);
    let mean = adv.iter().sum::<f64>() / n as f64;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
    if var.sqrt() > 1e-8 {
        for a in &mut adv {
            *a = (*a - mean) / var.sqrt();
        }
    }

    let per_epoch = updates.div_ceil(params.epochs).max(1).min(n);
    let chunk = n.div_ceil(per_epoch);
    let mut order: Vec<usize> = (0..n).collect();
    let mut totals = PpoLoss {
        policy: 0.0,
        value: 0.0,
        entropy: 0.0,
        approx_kl: 0.0,
        minibatches: 0,
    };
    for _ in 0..params.epochs {
        order.shuffle(rng);
        for idx in order.chunks(chunk) {
            let m = idx.len();
            let mut states = Array2::zeros((m, STATE_DIM));
            let mut actions = Array2::zeros((m, ACTION_DIM));
            let mut old = Vec::with_capacity(m);
            let mut a_mb = Vec::with_capacity(m);
            for (k, &i) in idx.iter().enumerate() {
                let st = &store.steps[i];
                states.row_mut(k).assign(&ndarray::ArrayView1::from(st.s.as_slice()));
                actions.row_mut(k).assign(&ndarray::ArrayView1::from(&st.raw_action[..]));
                old.push(st.log_prob);
                a_mb.push(adv[i]);
            }
            let sur = surrogate(policy, &states, &actions, &old, &a_mb, params.clip, params.entropy_coef)?;
            state.actor_opt.step_mlp(&mut policy.actor, &sur.actor);
            state.log_std_opt.step(vec![policy.log_std.as_mut_slice()], vec![sur.log_std.as_slice()]);

            let critic = &mut policy.critics[0];
            let cache = critic.forward_cached(states.view())?;
            let v = cache.output();
            let mut upstream = Array2::zeros((m, 1));
            let mut vloss = 0.0;
            for (k, &i) in idx.iter().enumerate() {
                let d = v[[k, 0]] - returns[i];
                vloss += d * d;
                upstream[[k, 0]] = params.value_coef * 2.0 * d / m as f64;
            }
            let (grads, _) = critic.backward(&cache, upstream.view());
            state.critic_opt.step_mlp(critic, &grads);

            totals.policy += sur.loss;
            totals.value += vloss / m as f64;
            totals.entropy += sur.entropy;
            totals.approx_kl += sur.approx_kl;
            totals.minibatches += 1;
            policy.steps += 1;
        }
    }
    policy.version += 1;
    let k = totals.minibatches as f64;
    totals.policy /= k;
    totals.value /= k;
    totals.entropy /= k;
    totals.approx_kl /= k;
    Ok(totals)
}
