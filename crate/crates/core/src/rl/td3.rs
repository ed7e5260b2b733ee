//! Twin-critic deterministic policy gradient with delayed actor updates,
//! target policy smoothing and Polyak-averaged targets.

use super::buffer::{Batch, ReplayBuffer};
use super::nn::{Adam, Mlp};
use super::policy::{Algorithm, Policy};
use super::LearnError;
use crate::env::STATE_DIM;
use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Td3Params {
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub policy_delay: u64,
    /// Gaussian exploration noise on the normalized action.
    pub exploration_sigma: f64,
    pub target_sigma: f64,
    pub target_clip: f64,
    pub gamma: f64,
}

impl Default for Td3Params {
    fn default() -> Self {
        Self {
            replay_capacity: 100_000,
            batch_size: 128,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            tau: 0.005,
            policy_delay: 2,
            exploration_sigma: 0.2,
            target_sigma: 0.1,
            target_clip: 0.3,
            gamma: 0.99,
        }
    }
}

impl Td3Params {
    pub fn validate(&self) -> Result<(), String> {
        if self.replay_capacity == 0 || self.batch_size == 0 || self.policy_delay == 0 {
            return Err("td3 capacity, batch size and policy delay must be positive".into());
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err("td3 tau must lie in (0, 1]".into());
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err("td3 learning rates must be positive".into());
        }
        if self.exploration_sigma < 0.0 || self.target_sigma < 0.0 || self.target_clip < 0.0 {
            return Err("td3 noise scales must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err("td3 gamma must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Target networks and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Td3State {
    pub actor_target: Mlp,
    pub critic_targets: Vec<Mlp>,
    pub actor_opt: Adam,
    pub critic_opts: Vec<Adam>,
    pub updates: u64,
}

impl Td3State {
    pub fn new(policy: &Policy, params: &Td3Params) -> Self {
        Self {
            actor_target: policy.actor.clone(),
            critic_targets: policy.critics.clone(),
            actor_opt: Adam::new(policy.actor.param_count(), params.actor_lr),
            critic_opts: policy.critics.iter().map(|c| Adam::new(c.param_count(), params.critic_lr)).collect(),
            updates: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Td3Loss {
    /// Sum of the two critics' mean squared TD errors.
    pub critic: f64,
    /// Present on delayed actor steps.
    pub actor: Option<f64>,
}

fn column(x: &Array2<f64>) -> ndarray::ArrayView1<'_, f64> {
    x.column(0)
}

/// Bootstrapped targets `r + gamma (1 - done) min(Q1', Q2')(s', a')` where
/// `a'` is the target actor output plus `noise` (already clipped), clipped
/// to the action box.
fn td_targets(state: &Td3State, batch: &Batch, noise: Option<&Array2<f64>>, gamma: f64) -> Result<ndarray::Array1<f64>, LearnError> {
    let mut a_next = state.actor_target.forward(batch.s_next.view())?;
    if let Some(n) = noise {
        a_next += n;
    }
    a_next.mapv_inplace(|x| x.clamp(-1.0, 1.0));
    let sa = concatenate(Axis(1), &[batch.s_next.view(), a_next.view()]).expect("row counts match");
    let q1 = state.critic_targets[0].forward(sa.view())?;
    let q2 = state.critic_targets[1].forward(sa.view())?;
    let mut y = batch.r.clone();
    for i in 0..y.len() {
        y[i] += gamma * (1.0 - batch.done[i]) * q1[[i, 0]].min(q2[[i, 0]]);
    }
    Ok(y)
}

/// Critic loss on `batch` against noise-free targets; a diagnostic that
/// does not touch any parameters.
pub fn critic_loss(policy: &Policy, state: &Td3State, batch: &Batch, gamma: f64) -> Result<f64, LearnError> {
    let y = td_targets(state, batch, None, gamma)?;
    let sa = concatenate(Axis(1), &[batch.s.view(), batch.a.view()]).expect("row counts match");
    let mut total = 0.0;
    for c in &policy.critics {
        let q = c.forward(sa.view())?;
        total += column(&q).iter().zip(&y).map(|(q, y)| (q - y).powi(2)).sum::<f64>() / y.len() as f64;
    }
    Ok(total)
}

/// One update on a uniformly sampled minibatch.
pub fn td3_update<R: Rng>(
    policy: &mut Policy,
    state: &mut Td3State,
    buffer: &ReplayBuffer,
    params: &Td3Params,
    rng: &mut R,
) -> Result<Td3Loss, LearnError> {
    if buffer.len() < params.batch_size {
        return Err(LearnError::InsufficientBuffer {
            have: buffer.len(),
            need: params.batch_size,
        });
    }
    let batch = buffer.sample(params.batch_size, rng);
    td3_update_batch(policy, state, &batch, params, rng)
}

/// One update on a given minibatch.
pub fn td3_update_batch<R: Rng>(
    policy: &mut Policy,
    state: &mut Td3State,
    batch: &Batch,
    params: &Td3Params,
    rng: &mut R,
) -> Result<Td3Loss, LearnError> {
    if policy.algorithm != Algorithm::Td3 {
        return Err(LearnError::WrongAlgorithm(policy.algorithm));
    }
    let n = batch.len();
    let noise = Array2::from_shape_fn(batch.a.raw_dim(), |_| {
        let z: f64 = StandardNormal.sample(rng);
        (params.target_sigma * z).clamp(-params.target_clip, params.target_clip)
    });
    let y = td_targets(state, batch, Some(&noise), params.gamma)?;

    let sa = concatenate(Axis(1), &[batch.s.view(), batch.a.view()]).expect("row counts match");
    let mut critic_total = 0.0;
    for (critic, opt) in policy.critics.iter_mut().zip(state.critic_opts.iter_mut()) {
        let cache = critic.forward_cached(sa.view())?;
        let q = cache.output();
        let mut upstream = Array2::zeros((n, 1));
        let mut loss = 0.0;
        for i in 0..n {
            let d = q[[i, 0]] - y[i];
            loss += d * d;
            upstream[[i, 0]] = 2.0 * d / n as f64;
        }
        critic_total += loss / n as f64;
        let (grads, _) = critic.backward(&cache, upstream.view());
        opt.step_mlp(critic, &grads);
    }

    let mut actor_loss = None;
    if state.updates.is_multiple_of(params.policy_delay) {
        let cache_a = policy.actor.forward_cached(batch.s.view())?;
        let sa_pi = concatenate(Axis(1), &[batch.s.view(), cache_a.output().view()]).expect("row counts match");
        let cache_q = policy.critics[0].forward_cached(sa_pi.view())?;
        actor_loss = Some(-cache_q.output().mean().unwrap_or(0.0));
        let upstream = Array2::from_elem((n, 1), -1.0 / n as f64);
        let (_, d_in) = policy.critics[0].backward(&cache_q, upstream.view());
        let d_action = d_in.slice(s![.., STATE_DIM..]).to_owned();
        let (grads, _) = policy.actor.backward(&cache_a, d_action.view());
        state.actor_opt.step_mlp(&mut policy.actor, &grads);

        state.actor_target.soft_update_from(&policy.actor, params.tau);
        for (t, c) in state.critic_targets.iter_mut().zip(&policy.critics) {
            t.soft_update_from(c, params.tau);
        }
    }
    state.updates += 1;
    policy.steps += 1;
    policy.version += 1;
    Ok(Td3Loss {
        critic: critic_total,
        actor: actor_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ACTION_DIM;
    use ndarray::Array1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_batch(n: usize, rng: &mut ChaCha8Rng) -> Batch {
        Batch {
            s: Array2::from_shape_fn((n, STATE_DIM), |_| rng.gen_range(-1.0..1.0)),
            a: Array2::from_shape_fn((n, ACTION_DIM), |_| rng.gen_range(-1.0..1.0)),
            r: Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0)),
            s_next: Array2::from_shape_fn((n, STATE_DIM), |_| rng.gen_range(-1.0..1.0)),
            done: Array1::from_shape_fn(n, |i| if i % 5 == 0 { 1.0 } else { 0.0 }),
        }
    }

    #[test]
    fn unit_tau_copies_online_into_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut policy = Policy::new(Algorithm::Td3, &[32, 32], 0.0, &mut rng);
        let params = Td3Params { tau: 1.0, ..Td3Params::default() };
        let mut st = Td3State::new(&policy, &params);
        let batch = random_batch(16, &mut rng);
        let loss = td3_update_batch(&mut policy, &mut st, &batch, &params, &mut rng).unwrap();
        assert!(loss.actor.is_some());
        assert_eq!(st.actor_target, policy.actor);
        assert_eq!(st.critic_targets, policy.critics);
    }

    #[test]
    fn critic_loss_drops_on_fixed_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut policy = Policy::new(Algorithm::Td3, &[32, 32], 0.0, &mut rng);
        let params = Td3Params::default();
        let mut st = Td3State::new(&policy, &params);
        let batch = random_batch(32, &mut rng);
        let before = critic_loss(&policy, &st, &batch, params.gamma).unwrap();
        for _ in 0..100 {
            td3_update_batch(&mut policy, &mut st, &batch, &params, &mut rng).unwrap();
        }
        let after = critic_loss(&policy, &st, &batch, params.gamma).unwrap();
        assert!(after < before, "{before} -> {after}");
    }

    #[test]
    fn seeded_updates_are_reproducible() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut policy = Policy::new(Algorithm::Td3, &[16], 0.0, &mut rng);
            let params = Td3Params::default();
            let mut st = Td3State::new(&policy, &params);
            let batch = random_batch(8, &mut rng);
            for _ in 0..5 {
                td3_update_batch(&mut policy, &mut st, &batch, &params, &mut rng).unwrap();
            }
            policy
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn small_buffer_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut policy = Policy::new(Algorithm::Td3, &[8], 0.0, &mut rng);
        let params = Td3Params::default();
        let mut st = Td3State::new(&policy, &params);
        let buffer = ReplayBuffer::new(10);
        let err = td3_update(&mut policy, &mut st, &buffer, &params, &mut rng).unwrap_err();
        assert_eq!(err, LearnError::InsufficientBuffer { have: 0, need: 128 });
    }
}
