use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Entry {
    name: String,
    tensor: Tensor,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

/// Named trainable tensors plus their Adam moments.
///
/// Iteration order is registration order, which keeps checkpoints and
/// optimizer updates deterministic.
#[derive(Default)]
pub struct ParameterStore {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
}

/// Plain-data copy of parameter values, safe to send to another thread.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSnapshot {
    pub entries: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a new parameter and returns its handle.
    pub fn add(&mut self, name: impl Into<String>, data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::Invalid {
                op: "ParameterStore::add",
                msg: format!("duplicate parameter `{name}`"),
            });
        }
        let tensor = Tensor::parameter(data, shape)?;
        let n = tensor.numel();
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(Entry {
            name,
            tensor: tensor.clone(),
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        });
        Ok(tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].tensor)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.tensor))
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.numel()).sum()
    }

    /// Adam step count of the named parameter.
    pub fn step_count(&self, name: &str) -> Option<u64> {
        self.index.get(name).map(|&i| self.entries[i].step)
    }

    pub fn zero_grad(&self) {
        self.entries.iter().for_each(|e| e.tensor.zero_grad());
    }

    /// Fails on the first parameter whose gradient holds a NaN or infinity.
    pub fn check_gradients(&self) -> Result<()> {
        for e in &self.entries {
            let g = e.tensor.grad_ref();
            if g.as_ref().is_some_and(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(TensorError::NonFiniteGradient(e.name.clone()));
            }
        }
        Ok(())
    }

    /// One bias-corrected Adam update over every parameter. Gradients are left
    /// in place. If any gradient is non-finite nothing is modified.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        self.check_gradients()?;
        for e in &mut self.entries {
            let g = e.tensor.grad_ref();
            let Some(g) = g.as_ref() else { continue };
            e.step += 1;
            let t = e.step as i32;
            let bc1 = 1.0 - cfg.beta1.powi(t);
            let bc2 = 1.0 - cfg.beta2.powi(t);
            let mut p = e.tensor.data_mut();
            for i in 0..p.len() {
                e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g[i];
                e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = e.m[i] / bc1;
                let v_hat = e.v[i] / bc2;
                p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> ParameterSnapshot {
        ParameterSnapshot {
            entries: self
                .entries
                .iter()
                .map(|e| (e.name.clone(), e.tensor.shape().to_vec(), e.tensor.to_vec()))
                .collect(),
        }
    }

    /// Overwrites parameter values from a snapshot. Every stored parameter must
    /// be present with a matching shape. Adam state is left untouched.
    pub fn load_snapshot(&self, snap: &ParameterSnapshot) -> Result<()> {
        let by_name: HashMap<&str, (&Vec<usize>, &Vec<f64>)> =
            snap.entries.iter().map(|(n, s, d)| (n.as_str(), (s, d))).collect();
        for e in &self.entries {
            let (shape, _) = by_name
                .get(e.name.as_str())
                .ok_or_else(|| TensorError::UnknownParameter(e.name.clone()))?;
            if shape.as_slice() != e.tensor.shape() {
                return Err(TensorError::Invalid {
                    op: "load_snapshot",
                    msg: format!(
                        "`{}` has shape {:?}, snapshot has {:?}",
                        e.name,
                        e.tensor.shape(),
                        shape
                    ),
                });
            }
        }
        for e in &self.entries {
            let (_, data) = by_name[e.name.as_str()];
            e.tensor.data_mut().copy_from_slice(data);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParameterStore::new();
        let p = store.add("p", vec![1.5, -2.0], &[2]).unwrap();
        store.adam_step(&AdamConfig::default()).unwrap();
        assert_eq!(p.to_vec(), vec![1.5, -2.0]);
        assert_eq!(store.step_count("p"), Some(1));
    }

    #[test]
    fn first_step_is_lr_sized() {
        let mut store = ParameterStore::new();
        let p = store.add("w", vec![0.0], &[1]).unwrap();
        p.sum().backward().unwrap();
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        store.adam_step(&cfg).unwrap();
        assert!((p.item() + 0.1).abs() < 1e-6, "{}", p.item());
        // gradient untouched
        assert_eq!(p.grad().unwrap(), vec![1.0]);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut store = ParameterStore::new();
        let w = store.add("w", vec![0.0], &[1]).unwrap();
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        for _ in 0..100 {
            store.zero_grad();
            w.add_scalar(-3.0).square().sum().backward().unwrap();
            store.adam_step(&cfg).unwrap();
        }
        assert!((w.item() - 3.0).abs() < 0.1, "w = {}", w.item());
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let mut store = ParameterStore::new();
        let a = store.add("a", vec![1.0], &[1]).unwrap();
        let b = store.add("b", vec![1.0], &[1]).unwrap();
        a.sum().backward().unwrap();
        b.scale(f64::NAN).sum().backward().unwrap();
        let err = store.adam_step(&AdamConfig::default()).unwrap_err();
        assert!(matches!(err, TensorError::NonFiniteGradient(ref n) if n == "b"));
        assert_eq!(a.item(), 1.0);
        assert_eq!(store.step_count("a"), Some(0));
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut store = ParameterStore::new();
        let a = store.add("a", vec![1.0, 2.0], &[2]).unwrap();
        let snap = store.snapshot();
        a.data_mut()[0] = 9.0;
        store.load_snapshot(&snap).unwrap();
        assert_eq!(a.to_vec(), vec![1.0, 2.0]);
    }
}
