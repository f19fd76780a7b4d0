use crate::error::{Error, Result};
use crate::model::{ParamKind, ParamStore};
use crate::tensor::serialize::{load_tensors, save_tensors};
use crate::tensor::{Float, Tensor};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Adam with linear warmup and decay, global-norm clipping and decoupled
/// weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr_peak: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_clip: f64,
    pub weight_decay: f64,
    /// Also decay the relative-position gate parameters.
    pub decay_gates: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr_peak: 5e-4,
            warmup_steps: 100,
            total_steps: 2000,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-6,
            grad_clip: 2.0,
            weight_decay: 0.01,
            decay_gates: false,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("lr_peak", self.lr_peak), ("eps", self.eps), ("grad_clip", self.grad_clip)];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.total_steps == 0 || self.warmup_steps >= self.total_steps {
            return Err(Error::Config(format!(
                "need 0 <= warmup_steps < total_steps, got {} and {}",
                self.warmup_steps, self.total_steps
            )));
        }
        Ok(())
    }

    fn decays(&self, kind: ParamKind) -> bool {
        match kind {
            ParamKind::Weight | ParamKind::Embedding => true,
            ParamKind::Gate => self.decay_gates,
            ParamKind::Bias | ParamKind::NormGain | ParamKind::NormBias => false,
        }
    }
}

/// Learning rate: linear ramp to the peak over warmup, then linear decay
/// to zero at `total_steps`.
pub fn lr_at(step: usize, config: &OptimConfig) -> Result<f64> {
    if step > config.total_steps {
        return Err(Error::Contract(format!(
            "step {step} outside schedule of {} steps",
            config.total_steps
        )));
    }
    let (w, t) = (config.warmup_steps as f64, config.total_steps as f64);
    let s = step as f64;
    Ok(if step < config.warmup_steps {
        config.lr_peak * s / w
    } else {
        config.lr_peak * (t - s) / (t - w)
    })
}

/// First and second moments per parameter plus the update count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Float = f32> {
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Float> AdamState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = || params.iter().map(|(_, p)| vec![T::zero(); p.value.len()]).collect();
        AdamState {
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Writes moments as `m.{name}` / `v.{name}` records plus a `step`
    /// scalar, in the tensor container format.
    pub fn save(&self, params: &ParamStore<T>, path: &Path) -> Result<()> {
        let mut owned = vec![(String::from("step"), Tensor::scalar(T::of(self.t as f64)))];
        for (id, p) in params.iter() {
            let shape = p.value.shape().to_vec();
            owned.push((format!("m.{}", p.name), Tensor::new(shape.clone(), self.m[id.index()].clone())?));
            owned.push((format!("v.{}", p.name), Tensor::new(shape, self.v[id.index()].clone())?));
        }
        let records: Vec<(&str, &Tensor<T>)> = owned.iter().map(|(n, t)| (n.as_str(), t)).collect();
        save_tensors(path, &records)
    }

    pub fn load(params: &ParamStore<T>, path: &Path) -> Result<Self> {
        let mut state = Self::new(params);
        let mut seen = 0;
        for (name, t) in load_tensors::<T>(path)? {
            if name == "step" {
                state.t = t.item().as_f64() as u64;
                continue;
            }
            let (slot, pname) = name
                .split_once('.')
                .ok_or_else(|| Error::format(path, format!("bad record `{name}`")))?;
            let id = params
                .id(pname)
                .ok_or_else(|| Error::format(path, format!("unknown parameter `{pname}`")))?;
            if t.shape() != params.get(id).value.shape() {
                return Err(Error::format(path, format!("moment `{name}` has wrong shape")));
            }
            let buf = match slot {
                "m" => &mut state.m,
                "v" => &mut state.v,
                _ => return Err(Error::format(path, format!("bad record `{name}`"))),
            };
            buf[id.index()] = t.into_data();
            seen += 1;
        }
        if seen != 2 * params.len() {
            return Err(Error::format(path, "optimizer state does not cover every parameter"));
        }
        Ok(state)
    }
}

/// What one optimizer step did to the gradients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub grad_norm: f64,
    /// Factor applied by clipping (1 when under the threshold).
    pub clip_scale: f64,
}

/// Global-norm clip, then an Adam update with bias correction and
/// decoupled weight decay `p -= lr * wd * p`.
///
/// Any non-finite gradient aborts before touching the parameters.
pub fn adam_step<T: Float>(
    params: &mut ParamStore<T>,
    grads: &mut [Vec<T>],
    state: &mut AdamState<T>,
    config: &OptimConfig,
    lr: f64,
) -> Result<StepStats> {
    if grads.len() != params.len() {
        return Err(Error::Contract(format!("{} gradients for {} parameters", grads.len(), params.len())));
    }
    let mut sq = 0.0f64;
    for ((_, p), g) in params.iter().zip(grads.iter()) {
        if g.len() != p.value.len() {
            return Err(Error::shape("adam_step", p.value.shape(), &[g.len()]));
        }
        for &x in g {
            let x = x.as_f64();
            if !x.is_finite() {
                return Err(Error::NonFinite(p.name.clone()));
            }
            sq += x * x;
        }
    }
    let grad_norm = sq.sqrt();
    let clip_scale = if grad_norm > config.grad_clip {
        config.grad_clip / grad_norm
    } else {
        1.0
    };
    if clip_scale != 1.0 {
        let s = T::of(clip_scale);
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= s;
            }
        }
    }

    state.t += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let (tb1, tb2) = (T::of(b1), T::of(b2));
    let (ob1, ob2) = (T::of(1.0 - b1), T::of(1.0 - b2));
    let step = T::of(lr / c1);
    let inv_c2 = T::of(1.0 / c2);
    let eps = T::of(config.eps);
    for (i, p) in params.values_mut().enumerate() {
        let decay = if config.decays(p.kind) {
            T::of(lr * config.weight_decay)
        } else {
            T::zero()
        };
        let (m, v, g) = (&mut state.m[i], &mut state.v[i], &grads[i]);
        for (((w, mi), vi), &gi) in p.value.data_mut().iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
            *mi = tb1 * *mi + ob1 * gi;
            *vi = tb2 * *vi + ob2 * gi * gi;
            let update = step * *mi / ((*vi * inv_c2).sqrt() + eps);
            *w = *w - update - decay * *w;
        }
    }
    Ok(StepStats { grad_norm, clip_scale })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", ParamKind::Weight, Tensor::from_f64(&[values.len()], values).unwrap());
        s
    }

    #[test]
    fn schedule_landmarks() {
        let c = OptimConfig::default();
        assert_eq!(lr_at(0, &c).unwrap(), 0.0);
        assert_eq!(lr_at(c.warmup_steps, &c).unwrap(), c.lr_peak);
        assert_eq!(lr_at(c.total_steps, &c).unwrap(), 0.0);
        let mid = c.warmup_steps + (c.total_steps - c.warmup_steps) / 2;
        assert!((lr_at(mid, &c).unwrap() - c.lr_peak / 2.0).abs() < 1e-15);
        assert_eq!(lr_at(c.total_steps + 1, &c).unwrap_err().code(), "E_CONTRACT");
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let c = OptimConfig {
            weight_decay: 0.0,
            ..OptimConfig::default()
        };
        let mut s = store(&[0.3, -1.2]);
        let mut state = AdamState::new(&s);
        let mut grads = vec![vec![0.0, 0.0]];
        adam_step(&mut s, &mut grads, &mut state, &c, 1e-3).unwrap();
        assert_eq!(s.get(s.id("w").unwrap()).value.data(), &[0.3, -1.2]);
    }

    #[test]
    fn clipping_halves_norm_four() {
        let c = OptimConfig::default();
        let mut s = store(&[0.0, 0.0]);
        let mut state = AdamState::new(&s);
        let mut grads = vec![vec![0.0, 4.0]];
        let stats = adam_step(&mut s, &mut grads, &mut state, &c, 1e-3).unwrap();
        assert_eq!(stats.grad_norm, 4.0);
        assert_eq!(stats.clip_scale, 0.5);
        assert_eq!(grads[0], vec![0.0, 2.0]);
    }

    #[test]
    fn nan_names_parameter() {
        let c = OptimConfig::default();
        let mut s = store(&[1.0]);
        let mut state = AdamState::new(&s);
        let err = adam_step(&mut s, &mut [vec![f64::NAN]], &mut state, &c, 1e-3).unwrap_err();
        assert!(err.to_string().contains("`w`"));
        assert_eq!(s.get(s.id("w").unwrap()).value.data(), &[1.0]);
    }

    #[test]
    fn invalid_configs() {
        let bad = OptimConfig {
            warmup_steps: 10,
            total_steps: 10,
            ..OptimConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().code(), "E_CONFIG");
    }

    #[test]
    fn state_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = store(&[0.5, 0.25]);
        let mut state = AdamState::new(&s);
        adam_step(&mut s, &mut [vec![0.1, -0.2]], &mut state, &OptimConfig::default(), 1e-3).unwrap();
        let path = dir.path().join("optim.bin");
        state.save(&s, &path).unwrap();
        assert_eq!(AdamState::load(&s, &path).unwrap(), state);
    }
}
