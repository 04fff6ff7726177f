//! Adam optimizer over flat parameter vectors.
//!
//! Frozen indices are skipped entirely: their values, first and second
//! moments never change, so freezing is exactly equivalent to removing the
//! coordinate from the optimization problem. State serializes for
//! checkpointing; resuming must reproduce the same trajectory bit for bit.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { beta1, beta2, eps, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update with the given learning rate. `frozen[i]` skips index i.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, frozen: &[bool]) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grad.len(), self.m.len());
        debug_assert_eq!(frozen.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            if frozen[i] {
                continue;
            }
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Cosine annealing from `lr_max` at step 0 to `lr_min` at the final step.
pub fn cosine_lr(step: u64, total_steps: u64, lr_max: f64, lr_min: f64) -> f64 {
    if total_steps <= 1 {
        return lr_max;
    }
    let frac = step.min(total_steps - 1) as f64 / (total_steps - 1) as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_matches_hand_computation() {
        let mut opt = Adam::new(1, 0.9, 0.999, 1e-8);
        let mut p = vec![1.0];
        opt.step(&mut p, &[0.5], 0.1, &[false]);
        // m = 0.05, v = 0.00025; bias-corrected: mhat = 0.5, vhat = 0.25
        let expect = 1.0 - 0.1 * 0.5 / (0.25f64.sqrt() + 1e-8);
        assert!((p[0] - expect).abs() < 1e-15, "{} vs {expect}", p[0]);
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn frozen_indices_never_move() {
        let mut opt = Adam::new(3, 0.9, 0.999, 1e-8);
        let mut p = vec![1.0, 2.0, 3.0];
        for _ in 0..10 {
            opt.step(&mut p, &[0.4, -0.2, 0.9], 0.05, &[false, true, false]);
        }
        assert_eq!(p[1], 2.0, "frozen parameter drifted");
        assert_eq!(opt.m[1], 0.0);
        assert_eq!(opt.v[1], 0.0);
        assert_ne!(p[0], 1.0);
        assert_ne!(p[2], 3.0);
    }

    #[test]
    fn cosine_schedule_hits_both_endpoints() {
        let (max, min) = (5e-3, 1e-7);
        assert_eq!(cosine_lr(0, 100, max, min), max);
        let last = cosine_lr(99, 100, max, min);
        assert!((last - min).abs() < 1e-18, "{last}");
        let mid = cosine_lr(50, 101, max, min);
        assert!((mid - 0.5 * (max + min)).abs() < 1e-10);
        // degenerate schedules stay at the maximum
        assert_eq!(cosine_lr(0, 1, max, min), max);
    }

    #[test]
    fn state_serializes_exactly() {
        let mut opt = Adam::new(2, 0.9, 0.999, 1e-8);
        let mut p = vec![0.3, -0.7];
        opt.step(&mut p, &[0.1, 0.2], 0.01, &[false, false]);
        let json = serde_json::to_string(&opt).unwrap();
        let back: Adam = serde_json::from_str(&json).unwrap();
        assert_eq!(back, opt);
    }
}
