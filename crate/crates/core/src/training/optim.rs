use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::model::TrainingState;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW with bias correction and decoupled weight decay. Parameters
/// registered without decay (biases, norm gains, the temperature) are never
/// decayed.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Restores moment buffers saved in a checkpoint.
    pub fn from_state(config: AdamWConfig, store: &ParamStore, state: TrainingState) -> Result<Self> {
        let ok = |buf: &[Tensor]| {
            buf.len() == store.len() && buf.iter().zip(store.iter()).all(|(b, (_, p))| b.shape() == p.value.shape())
        };
        if !ok(&state.first_moment) || !ok(&state.second_moment) {
            return Err(Error::Checkpoint("optimizer state does not match the parameters".into()));
        }
        Ok(Self {
            config,
            step: state.step,
            m: state.first_moment,
            v: state.second_moment,
        })
    }

    pub fn state(&self) -> TrainingState {
        TrainingState {
            step: self.step,
            first_moment: self.m.clone(),
            second_moment: self.v.clone(),
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients accumulated in `store`. Nothing
    /// is modified if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if let Some((_, p)) = store.iter().find(|(_, p)| !p.grad.is_finite()) {
            return Err(Error::NonFiniteGrad(p.name.clone()));
        }
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let decay = if p.decay { 1.0 - lr * weight_decay } else { 1.0 };
            let (w, g) = (p.value.data_mut(), p.grad.data());
            for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.data_mut()).zip(v.data_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *w *= decay;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Linear warmup to `lr_peak` over `warmup_steps`, then half-cosine decay to
/// zero at `total_steps`; zero afterwards.
pub fn cosine_lr(step: u64, warmup_steps: u64, total_steps: u64, lr_peak: f64) -> f64 {
    if step < warmup_steps {
        return lr_peak * step as f64 / warmup_steps as f64;
    }
    if step >= total_steps {
        return 0.0;
    }
    let progress = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    lr_peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Rescales the accumulated gradients so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store
        .iter()
        .map(|(_, p)| p.grad.data().iter().map(|g| g * g).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm.is_finite() && norm > max_norm {
        store.scale_grads(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(value: f64, decay: bool) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::scalar(value), decay).unwrap();
        s
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut s = one_param(1.5, true);
        let mut opt = AdamW::new(
            AdamWConfig {
                weight_decay: 0.0,
                ..AdamWConfig::default()
            },
            &s,
        );
        opt.step(&mut s, 0.1).unwrap();
        assert_eq!(s.by_name("w").unwrap().value.item(), 1.5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = one_param(0.0, false);
        s.iter_mut().next().unwrap().grad = Tensor::scalar(3.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        opt.step(&mut s, 0.01).unwrap();
        let w = s.by_name("w").unwrap().value.item();
        assert!((w + 0.01).abs() < 1e-9, "{w}");
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut s = one_param(0.0, false);
        s.iter_mut().next().unwrap().grad = Tensor::scalar(f64::NAN);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        match opt.step(&mut s, 0.01) {
            Err(Error::NonFiniteGrad(name)) => assert_eq!(name, "w"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn excluded_parameters_are_not_decayed() {
        let mut s = ParamStore::new();
        s.add("a", Tensor::scalar(1.0), true).unwrap();
        s.add("b", Tensor::scalar(1.0), false).unwrap();
        let mut opt = AdamW::new(
            AdamWConfig {
                weight_decay: 0.5,
                ..AdamWConfig::default()
            },
            &s,
        );
        opt.step(&mut s, 0.1).unwrap();
        assert!((s.by_name("a").unwrap().value.item() - 0.95).abs() < 1e-15);
        assert_eq!(s.by_name("b").unwrap().value.item(), 1.0);
    }

    #[test]
    fn schedule_landmarks() {
        assert_eq!(cosine_lr(10, 10, 110, 1e-3), 1e-3);
        assert_eq!(cosine_lr(110, 10, 110, 1e-3), 0.0);
        assert_eq!(cosine_lr(500, 10, 110, 1e-3), 0.0);
        assert!((cosine_lr(60, 10, 110, 1e-3) - 5e-4).abs() < 1e-12);
        assert_eq!(cosine_lr(5, 10, 110, 1e-3), 5e-4);
        assert_eq!(cosine_lr(0, 0, 10, 1e-3), 1e-3);
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::vector(vec![0.0, 0.0]), true).unwrap();
        s.get_mut(id).grad = Tensor::vector(vec![3.0, 4.0]);
        assert_eq!(clip_grad_norm(&mut s, 1.0), 5.0);
        let g = s.get(id).grad.data().to_vec();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
