//! Adaptive-moment gradient descent.

use std::collections::HashMap;

use ndarray::ArrayD;

use super::Param;

pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    step_count: u64,
    m: HashMap<String, ArrayD<f32>>,
    v: HashMap<String, ArrayD<f32>>,
}

impl Adam {
    pub fn new(lr: f32) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update over the trainable params; frozen params and buffers are
    /// untouched.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        self.step_count += 1;
        let t = self.step_count as f32;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let (beta1, beta2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for p in params.iter_mut() {
            if !p.trainable {
                continue;
            }
            let m = self
                .m
                .entry(p.name.clone())
                .or_insert_with(|| ArrayD::zeros(p.value.raw_dim()));
            let v = self
                .v
                .entry(p.name.clone())
                .or_insert_with(|| ArrayD::zeros(p.value.raw_dim()));
            ndarray::Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *w -= lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }

    /// Serialize optimizer state as named tensors (moment estimates plus a
    /// scalar step counter), in deterministic order.
    pub fn state_tensors(&self) -> Vec<(String, ArrayD<f32>)> {
        let mut out = vec![(
            "adam.step".to_string(),
            ArrayD::from_elem(ndarray::IxDyn(&[1]), self.step_count as f32),
        )];
        let mut names: Vec<&String> = self.m.keys().collect();
        names.sort();
        for name in names {
            out.push((format!("adam.m.{name}"), self.m[name].clone()));
            out.push((format!("adam.v.{name}"), self.v[name].clone()));
        }
        out
    }

    /// Restore optimizer state previously produced by [`state_tensors`].
    pub fn load_state(&mut self, tensors: &[(String, ArrayD<f32>)]) {
        for (name, t) in tensors {
            if name == "adam.step" {
                self.step_count = t[[0]] as u64;
            } else if let Some(rest) = name.strip_prefix("adam.m.") {
                self.m.insert(rest.to_string(), t.clone());
            } else if let Some(rest) = name.strip_prefix("adam.v.") {
                self.v.insert(rest.to_string(), t.clone());
            }
        }
    }
}
