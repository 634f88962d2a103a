//! Named parameter storage with per-name roles.
//!
//! Insertion order is part of the contract: iteration, checkpoint layout,
//! and optimizer traversal all follow it, which keeps every downstream
//! artifact deterministic.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{CtaError, Result};
use crate::numerics::tensor::Tensor;

/// What a named tensor is; adapters select update targets by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamRole {
    /// Batchnorm scale and shift (γ, β). The only thing TENT updates.
    BnAffine,
    /// Batchnorm running statistics. Never touched by any optimizer.
    BnStat,
    Weight,
    Bias,
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub tensor: Tensor,
    pub role: ParamRole,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: IndexMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor, role: ParamRole) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(CtaError::invalid("parameter name", format!("duplicate '{name}'")));
        }
        self.entries.insert(name, ParamEntry { tensor, role });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|e| &e.tensor)
            .ok_or_else(|| CtaError::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.tensor)
            .ok_or_else(|| CtaError::UnknownParameter(name.to_string()))
    }

    pub fn role(&self, name: &str) -> Result<ParamRole> {
        self.entries
            .get(name)
            .map(|e| e.role)
            .ok_or_else(|| CtaError::UnknownParameter(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    /// Total number of scalars across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|e| e.tensor.len()).sum()
    }

    /// Snaps every tensor to the nearest 32-bit float. Called at every commit
    /// point so that in-memory state and checkpoint files agree bit-exactly.
    pub fn quantize_f32(&mut self) {
        for entry in self.entries.values_mut() {
            entry.tensor.quantize_f32();
        }
    }

    /// Largest elementwise difference across all entries. The stores must
    /// hold the same names and shapes.
    pub fn max_abs_diff(&self, other: &ParamStore) -> Result<f64> {
        if self.entries.len() != other.entries.len() {
            return Err(CtaError::shape("param stores", self.entries.len(), other.entries.len()));
        }
        let mut max = 0.0f64;
        for (name, entry) in &self.entries {
            let theirs = other.get(name)?;
            max = max.max(entry.tensor.max_abs_diff(theirs));
        }
        Ok(max)
    }

    /// True when every entry with a role in `roles` is bitwise identical.
    pub fn bit_identical_for_roles(&self, other: &ParamStore, roles: &[ParamRole]) -> Result<bool> {
        for (name, entry) in &self.entries {
            if !roles.contains(&entry.role) {
                continue;
            }
            if !entry.tensor.bit_identical(other.get(name)?) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Gradients keyed by parameter name. Entries absent for parameters that
/// received no gradient (running statistics never do).
#[derive(Debug, Clone, Default)]
pub struct GradStore {
    entries: IndexMap<String, Tensor>,
}

impl GradStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds into an existing entry or inserts a fresh one.
    pub fn accumulate(&mut self, name: &str, grad: Tensor) -> Result<()> {
        match self.entries.get_mut(name) {
            Some(existing) => {
                if existing.shape() != grad.shape() {
                    return Err(CtaError::shape(
                        format!("gradient '{name}'"),
                        format!("{:?}", existing.shape()),
                        format!("{:?}", grad.shape()),
                    ));
                }
                for (a, b) in existing.data_mut().iter_mut().zip(grad.data()) {
                    *a += b;
                }
            }
            None => {
                self.entries.insert(name.to_string(), grad);
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Advances every parameter whose role satisfies `mask` by one optimizer
/// step. Parameters outside the mask stay bit-identical. A masked-in
/// parameter without a gradient is a structured error.
pub fn optimizer_step(
    params: &mut ParamStore,
    grads: &GradStore,
    opt: &mut crate::numerics::optim::OptimizerState,
    mask: impl Fn(ParamRole) -> bool,
) -> Result<()> {
    let names: Vec<String> = params
        .iter()
        .filter(|(_, e)| mask(e.role))
        .map(|(n, _)| n.to_string())
        .collect();
    for name in names {
        let grad = grads
            .get(&name)
            .ok_or_else(|| CtaError::MissingGradient(name.clone()))?
            .clone();
        let tensor = params.get_mut(&name)?;
        opt.update(&name, tensor.data_mut(), grad.data())?;
    }
    Ok(())
}
