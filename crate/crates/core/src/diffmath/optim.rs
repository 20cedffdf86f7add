//! Shared trainable parameters and plain gradient-step optimizers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diffmath::array::DenseArray;
use crate::error::{Error, Result};

/// One named weight array with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: DenseArray,
    pub grad: DenseArray,
}

/// Ordered map of named parameters plus a monotone update counter.
///
/// Iteration order is the name order (BTreeMap), so every walk over the set
/// is deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    entries: BTreeMap<String, Param>,
    version: u64,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: DenseArray) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter name {name}")));
        }
        let grad = DenseArray::zeros_like(&value);
        self.entries.insert(name.to_string(), Param { value, grad });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar weights.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &DenseArray) -> Result<()> {
        let param = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))?;
        if param.grad.shape() != grad.shape() {
            return Err(Error::Dim(format!(
                "gradient shape {:?} does not match parameter {name} {:?}",
                grad.shape(),
                param.value.shape()
            )));
        }
        param.grad.axpy(1.0, grad);
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.fill(0.0);
        }
    }

    /// L2 norm of the concatenated gradients.
    pub fn grad_norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|p| p.grad.data())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    fn ensure_grads_finite(&self) -> Result<()> {
        for (name, p) in &self.entries {
            if !p.grad.all_finite() {
                return Err(Error::Fault(format!("non-finite gradient in parameter {name}")));
            }
        }
        Ok(())
    }

    /// Flat copy of every value, in name order. Used by finite-difference
    /// oracles and determinism checks.
    pub fn flat_values(&self) -> Vec<f64> {
        self.entries.values().flat_map(|p| p.value.data().iter().copied()).collect()
    }

    /// Overwrite every value from a flat slice, in name order.
    pub fn set_flat_values(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.scalar_count() {
            return Err(Error::Dim(format!(
                "flat value count {} != parameter scalar count {}",
                flat.len(),
                self.scalar_count()
            )));
        }
        let mut offset = 0;
        for p in self.entries.values_mut() {
            let n = p.value.len();
            p.value.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

/// One plain gradient step: value ← value − η·grad for every parameter, then
/// zero the gradients and bump the version.
///
/// η = 0 is legal and leaves values bit-identical (the version still bumps);
/// negative or non-finite η is a config error.
pub fn sgd_step(params: &mut ParameterSet, lr: f64) -> Result<()> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::Config(format!("learning rate must be ≥ 0 and finite, got {lr}")));
    }
    params.ensure_grads_finite()?;
    for p in params.entries.values_mut() {
        let g = p.grad.clone();
        p.value.axpy(-lr, &g);
    }
    params.zero_grads();
    params.version += 1;
    Ok(())
}

/// Which optimizer a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Rmsprop,
}

/// RMSProp with a running mean of squared gradients per parameter.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub decay: f64,
    pub epsilon: f64,
    cache: BTreeMap<String, DenseArray>,
}

impl RmsProp {
    pub fn new(decay: f64, epsilon: f64) -> Self {
        RmsProp { decay, epsilon, cache: BTreeMap::new() }
    }

    pub fn step(&mut self, params: &mut ParameterSet, lr: f64) -> Result<()> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be ≥ 0 and finite, got {lr}")));
        }
        params.ensure_grads_finite()?;
        for (name, p) in params.entries.iter_mut() {
            let cache = self
                .cache
                .entry(name.clone())
                .or_insert_with(|| DenseArray::zeros_like(&p.value));
            let (d, eps) = (self.decay, self.epsilon);
            for i in 0..p.value.len() {
                let g = p.grad.data()[i];
                let c = d * cache.data()[i] + (1.0 - d) * g * g;
                cache.data_mut()[i] = c;
                p.value.data_mut()[i] -= lr * g / (c.sqrt() + eps);
            }
        }
        params.zero_grads();
        params.version += 1;
        Ok(())
    }
}

/// Optimizer selected by config. Plain SGD is the default; RMSProp
/// (decay 0.99, epsilon 1e-5) is available behind `optimizer = "rmsprop"`.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd,
    RmsProp(RmsProp),
}

impl Optimizer {
    pub fn from_kind(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Rmsprop => Optimizer::RmsProp(RmsProp::new(0.99, 1e-5)),
        }
    }

    pub fn step(&mut self, params: &mut ParameterSet, lr: f64) -> Result<()> {
        match self {
            Optimizer::Sgd => sgd_step(params, lr),
            Optimizer::RmsProp(r) => r.step(params, lr),
        }
    }
}
