//! Transition storage: a ring replay buffer for off-policy learning and a
//! rollout store for on-policy learning.

use crate::env::{MetaState, ACTION_DIM, STATE_DIM};
use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: MetaState,
    pub a: [f64; ACTION_DIM],
    pub r: f64,
    pub s_next: MetaState,
    pub done: bool,
}

/// A sampled minibatch laid out row-per-transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub s: Array2<f64>,
    pub a: Array2<f64>,
    pub r: Array1<f64>,
    pub s_next: Array2<f64>,
    pub done: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Fixed-capacity FIFO replay memory. Rows are stored flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    head: usize,
    len: usize,
    s: Vec<f64>,
    a: Vec<f64>,
    r: Vec<f64>,
    s_next: Vec<f64>,
    done: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            head: 0,
            len: 0,
            s: Vec::new(),
            a: Vec::new(),
            r: Vec::new(),
            s_next: Vec::new(),
            done: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) {
        let s = t.s.to_input();
        let s2 = t.s_next.to_input();
        if self.len < self.capacity {
            self.s.extend_from_slice(&s);
            self.a.extend_from_slice(&t.a);
            self.r.push(t.r);
            self.s_next.extend_from_slice(&s2);
            self.done.push(t.done);
            self.len += 1;
        } else {
            let i = self.head;
            self.s[i * STATE_DIM..(i + 1) * STATE_DIM].copy_from_slice(&s);
            self.a[i * ACTION_DIM..(i + 1) * ACTION_DIM].copy_from_slice(&t.a);
            self.r[i] = t.r;
            self.s_next[i * STATE_DIM..(i + 1) * STATE_DIM].copy_from_slice(&s2);
            self.done[i] = t.done;
        }
        self.head = (self.head + 1) % self.capacity;
    }

    /// Row `i` in storage order, as (s, a, r, s_next, done).
    pub fn row(&self, i: usize) -> (&[f64], &[f64], f64, &[f64], bool) {
        assert!(i < self.len);
        (
            &self.s[i * STATE_DIM..(i + 1) * STATE_DIM],
            &self.a[i * ACTION_DIM..(i + 1) * ACTION_DIM],
            self.r[i],
            &self.s_next[i * STATE_DIM..(i + 1) * STATE_DIM],
            self.done[i],
        )
    }

    pub fn gather(&self, idx: &[usize]) -> Batch {
        let n = idx.len();
        let mut b = Batch {
            s: Array2::zeros((n, STATE_DIM)),
            a: Array2::zeros((n, ACTION_DIM)),
            r: Array1::zeros(n),
            s_next: Array2::zeros((n, STATE_DIM)),
            done: Array1::zeros(n),
        };
        for (k, &i) in idx.iter().enumerate() {
            let (s, a, r, s2, d) = self.row(i);
            b.s.row_mut(k).assign(&ndarray::ArrayView1::from(s));
            b.a.row_mut(k).assign(&ndarray::ArrayView1::from(a));
            b.r[k] = r;
            b.s_next.row_mut(k).assign(&ndarray::ArrayView1::from(s2));
            b.done[k] = if d { 1.0 } else { 0.0 };
        }
        b
    }

    /// Raw storage for checkpointing: (capacity, head, s, a, r, s_next, done).
    pub fn to_parts(&self) -> (usize, usize, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            self.capacity,
            self.head,
            self.s.clone(),
            self.a.clone(),
            self.r.clone(),
            self.s_next.clone(),
            self.done.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect(),
        )
    }

    /// Inverse of [`to_parts`](Self::to_parts); `None` on inconsistent sizes.
    pub fn from_parts(capacity: usize, head: usize, s: Vec<f64>, a: Vec<f64>, r: Vec<f64>, s_next: Vec<f64>, done: &[f64]) -> Option<Self> {
        let len = r.len();
        let consistent = capacity > 0
            && len <= capacity
            && head < capacity
            && (len == capacity || head == len % capacity)
            && s.len() == len * STATE_DIM
            && s_next.len() == len * STATE_DIM
            && a.len() == len * ACTION_DIM
            && done.len() == len;
        consistent.then(|| Self {
            capacity,
            head,
            len,
            s,
            a,
            r,
            s_next,
            done: done.iter().map(|&d| d != 0.0).collect(),
        })
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Batch {
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..self.len)).collect();
        self.gather(&idx)
    }
}

/// One on-policy step with the quantities the clipped surrogate needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStep {
    pub s: Vec<f64>,
    /// Pre-clip Gaussian sample; the environment saw its clipped version.
    pub raw_action: [f64; ACTION_DIM],
    pub log_prob: f64,
    pub value: f64,
    pub r: f64,
    pub done: bool,
}

/// Episodes stored contiguously; replaced wholesale each round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutStore {
    /// Policy version that generated the steps.
    pub version: u64,
    pub steps: Vec<RolloutStep>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn state(v: f64) -> MetaState {
        MetaState {
            scan: vec![v; crate::env::SCAN_FEATURES],
            phi: 0.0,
            prev_config: [0.0; ACTION_DIM],
        }
    }

    fn tr(v: f64) -> Transition {
        Transition {
            s: state(v),
            a: [v; ACTION_DIM],
            r: v,
            s_next: state(v + 0.5),
            done: false,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3);
        for k in 0..5 {
            b.push(&tr(k as f64 / 10.0));
        }
        assert_eq!(b.len(), 3);
        let rs: Vec<f64> = (0..3).map(|i| b.row(i).2).collect();
        assert_eq!(rs, vec![0.3, 0.4, 0.2]);
    }

    #[test]
    fn gather_preserves_rows() {
        let mut b = ReplayBuffer::new(10);
        b.push(&tr(0.1));
        b.push(&tr(0.2));
        let batch = b.gather(&[1, 0]);
        assert_eq!(batch.r.to_vec(), vec![0.2, 0.1]);
        assert_eq!(batch.s[[0, 0]], 0.2);
        assert_eq!(batch.s_next[[1, 0]], 0.6);
        assert_eq!(batch.a[[0, 6]], 0.2);
    }

    #[test]
    fn parts_roundtrip() {
        let mut b = ReplayBuffer::new(4);
        for k in 0..6 {
            b.push(&tr(k as f64));
        }
        let (c, h, s, a, r, s2, d) = b.to_parts();
        assert_eq!(ReplayBuffer::from_parts(c, h, s, a, r, s2, &d), Some(b));
    }

    #[test]
    fn sampling_is_seeded() {
        let mut b = ReplayBuffer::new(10);
        for k in 0..10 {
            b.push(&tr(k as f64));
        }
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        assert_eq!(b.sample(4, &mut r1), b.sample(4, &mut r2));
    }
}
