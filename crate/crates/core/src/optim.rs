//! Adam and the two learning-rate schedules: cyclic warm-up for
//! pre-/joint/self/single training, non-cyclic inverse-square-root decay for
//! fine-tuning.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ParameterSet;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient in tensor {0}")]
    NonFiniteGradient(String),
    #[error("non-finite parameter after update in tensor {0}")]
    NonFiniteUpdate(String),
    #[error("invalid schedule: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates mirroring the parameter tensors, plus the
/// update count used for bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: ParameterSet,
    v: ParameterSet,
    pub t: u64,
    pub hp: AdamParams,
}

impl AdamState {
    pub fn new(params: &ParameterSet, hp: AdamParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            hp,
        }
    }
}

/// One Adam update with bias correction:
/// m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2;
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &ParameterSet,
    state: &mut AdamState,
    lr: f64,
) -> Result<(), OptimError> {
    if !params.same_shapes(grads) || !params.same_shapes(&state.m) {
        return Err(OptimError::ShapeMismatch(
            "parameters, gradients and moments must share shapes".into(),
        ));
    }
    for (name, g) in grads.iter() {
        if !g.is_finite() {
            return Err(OptimError::NonFiniteGradient(name.clone()));
        }
    }
    state.t += 1;
    let b1 = state.hp.beta1;
    let b2 = state.hp.beta2;
    let eps = state.hp.eps;
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);

    for ((name, theta), (_, g)) in params.iter_mut().zip(grads.iter()) {
        let m = state.m.get_mut(name).data_mut();
        let v = state.v.get_mut(name).data_mut();
        let theta = theta.data_mut();
        let g = g.data();
        for i in 0..theta.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    for (name, t) in params.iter() {
        if !t.is_finite() {
            return Err(OptimError::NonFiniteUpdate(name.clone()));
        }
    }
    params.step += 1;
    Ok(())
}

/// Scale gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut ParameterSet, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for (_, t) in grads.iter() {
        for &x in t.data() {
            sq += x * x;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for (_, t) in grads.iter_mut() {
            for x in t.data_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Cyclic,
    InverseSqrt,
}

/// Learning-rate schedule constants. `lr_at` is a pure function of
/// (these constants, step); nothing mutates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub warmup_steps: u64,
    pub peak_lr: f64,
    pub min_lr: f64,
    pub cycle_period: u64,
}

impl Schedule {
    pub fn cyclic(
        warmup_steps: u64,
        peak_lr: f64,
        min_lr: f64,
        cycle_period: u64,
    ) -> Result<Self, OptimError> {
        let s = Schedule {
            kind: ScheduleKind::Cyclic,
            warmup_steps,
            peak_lr,
            min_lr,
            cycle_period,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn inverse_sqrt(warmup_steps: u64, peak_lr: f64) -> Result<Self, OptimError> {
        let s = Schedule {
            kind: ScheduleKind::InverseSqrt,
            warmup_steps,
            peak_lr,
            min_lr: 0.0,
            cycle_period: 2,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        if self.warmup_steps < 1 {
            return Err(OptimError::Config("warmup_steps must be >= 1".into()));
        }
        if !(self.peak_lr > self.min_lr && self.min_lr >= 0.0) {
            return Err(OptimError::Config("need peak_lr > min_lr >= 0".into()));
        }
        if self.cycle_period < 2 {
            return Err(OptimError::Config("cycle_period must be >= 2".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        match self.kind {
            ScheduleKind::Cyclic => cyclic_lr(self, step),
            ScheduleKind::InverseSqrt => inverse_sqrt_lr(self, step),
        }
    }
}

/// Linear warm-up to the peak, then a triangular wave between peak and min
/// with period `cycle_period`.
pub fn cyclic_lr(s: &Schedule, step: u64) -> f64 {
    let w = s.warmup_steps;
    if step < w {
        return s.peak_lr * (step + 1) as f64 / w as f64;
    }
    let phase = ((step - w) % s.cycle_period) as f64 / s.cycle_period as f64;
    let depth = if phase <= 0.5 {
        2.0 * phase
    } else {
        2.0 * (1.0 - phase)
    };
    s.peak_lr - (s.peak_lr - s.min_lr) * depth
}

/// Linear warm-up, then inverse-square-root decay:
/// lr = peak * min((step+1)^-0.5 * W^0.5, (step+1)/W).
pub fn inverse_sqrt_lr(s: &Schedule, step: u64) -> f64 {
    let w = s.warmup_steps as f64;
    let t = (step + 1) as f64;
    s.peak_lr * (t.powf(-0.5) * w.sqrt()).min(t / w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig, Tensor};

    fn scalar_params(value: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("w", Tensor::from_vec(&[1], vec![value]));
        p
    }

    #[test]
    fn adam_scalar_fixture() {
        // theta=0, g=1, lr=0.1, defaults: after one step theta = -0.1/(1+1e-8).
        let mut params = scalar_params(0.0);
        let mut grads = params.zeros_like();
        grads.get_mut("w").data_mut()[0] = 1.0;
        let mut state = AdamState::new(&params, AdamParams::default());
        adam_step(&mut params, &grads, &mut state, 0.1).unwrap();
        let expect: f64 = -0.1 / (1.0 + 1e-8);
        let got = params.get("w").data()[0];
        assert_eq!(got.to_bits(), expect.to_bits(), "{got} vs {expect}");
        assert_eq!(state.t, 1);
        assert_eq!(params.step, 1);
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let cfg = ModelConfig::desk_scale(10);
        let mut params = init_params(&cfg, 3).unwrap();
        let snapshot = params.clone();
        let grads = params.zeros_like();
        let mut state = AdamState::new(&params, AdamParams::default());
        adam_step(&mut params, &grads, &mut state, 0.01).unwrap();
        assert!(params.bits_equal(&snapshot));
    }

    #[test]
    fn identical_calls_identical_outputs() {
        let cfg = ModelConfig::desk_scale(10);
        let run = || {
            let mut params = init_params(&cfg, 3).unwrap();
            let mut grads = params.zeros_like();
            for (_, t) in grads.iter_mut() {
                for (i, x) in t.data_mut().iter_mut().enumerate() {
                    *x = (i as f64 * 0.01).sin();
                }
            }
            let mut state = AdamState::new(&params, AdamParams::default());
            for _ in 0..5 {
                adam_step(&mut params, &grads, &mut state, 1e-3).unwrap();
            }
            params
        };
        assert!(run().bits_equal(&run()));
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut params = scalar_params(0.0);
        let mut grads = params.zeros_like();
        grads.get_mut("w").data_mut()[0] = f64::NAN;
        let mut state = AdamState::new(&params, AdamParams::default());
        assert!(matches!(
            adam_step(&mut params, &grads, &mut state, 0.1),
            Err(OptimError::NonFiniteGradient(_))
        ));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut params = scalar_params(0.0);
        let other = ParameterSet::new();
        let mut state = AdamState::new(&params, AdamParams::default());
        assert!(matches!(
            adam_step(&mut params, &other, &mut state, 0.1),
            Err(OptimError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut grads = ParameterSet::new();
        grads.insert("a", Tensor::from_vec(&[2], vec![3.0, 4.0]));
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let data = grads.get("a").data();
        assert!((data[0] - 0.6).abs() < 1e-12);
        assert!((data[1] - 0.8).abs() < 1e-12);
        // Under the limit: untouched.
        let mut small = ParameterSet::new();
        small.insert("a", Tensor::from_vec(&[1], vec![0.5]));
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small.get("a").data()[0], 0.5);
    }

    #[test]
    fn cyclic_warmup_boundary_and_trough() {
        let s = Schedule::cyclic(10, 1e-3, 1e-5, 100).unwrap();
        // Warm-up point: step 4 of 10.
        assert_eq!(s.lr_at(4), 1e-3 * 5.0 / 10.0);
        // Phase zero at the warm-up boundary.
        assert_eq!(s.lr_at(10), 1e-3);
        // Mid-cycle trough reaches min_lr up to rounding in the depth blend.
        assert!((s.lr_at(10 + 50) - 1e-5).abs() < 1e-12);
    }

    #[test]
    fn cyclic_is_periodic_after_warmup() {
        let s = Schedule::cyclic(7, 2e-3, 1e-6, 40).unwrap();
        for k in 0..80 {
            assert_eq!(
                s.lr_at(7 + k).to_bits(),
                s.lr_at(7 + k + 40).to_bits(),
                "k={k}"
            );
        }
    }

    #[test]
    fn inverse_sqrt_fixtures() {
        let w = 16u64;
        let s = Schedule::inverse_sqrt(w, 1e-3).unwrap();
        // Both branches coincide at the end of warm-up.
        assert!((s.lr_at(w - 1) - 1e-3).abs() < 1e-15);
        // (4W)^-0.5 * W^0.5 = 1/2.
        assert!((s.lr_at(4 * w - 1) - 5e-4).abs() < 1e-15);
        // Monotone non-increasing after warm-up.
        for step in w..(w + 200) {
            assert!(s.lr_at(step + 1) <= s.lr_at(step));
        }
    }

    #[test]
    fn bad_schedules_rejected() {
        assert!(Schedule::cyclic(0, 1e-3, 1e-5, 100).is_err());
        assert!(Schedule::cyclic(5, 1e-5, 1e-3, 100).is_err());
        assert!(Schedule::cyclic(5, 1e-3, 1e-5, 1).is_err());
        assert!(Schedule::inverse_sqrt(0, 1e-3).is_err());
    }
}
