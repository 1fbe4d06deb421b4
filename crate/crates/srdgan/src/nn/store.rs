//! Central parameter storage. Layers hold indices into the store, which
//! keeps optimizer state, checkpointing, hashing, and finite-difference
//! probing all working off one ordered list of named tensors.

use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayView4, Ix1, Ix2, Ix4};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type ParamId = usize;

#[derive(Debug, Clone)]
pub struct NamedParam {
    pub name: String,
    pub value: ArrayD<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<NamedParam>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<f64>) -> ParamId {
        self.entries.push(NamedParam { name: name.into(), value });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id].name
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<f64> {
        &self.entries[id].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<f64> {
        &mut self.entries[id].value
    }

    pub fn view4(&self, id: ParamId) -> ArrayView4<'_, f64> {
        self.entries[id]
            .value
            .view()
            .into_dimensionality::<Ix4>()
            .expect("parameter registered as 4-d")
    }

    pub fn view2(&self, id: ParamId) -> ArrayView2<'_, f64> {
        self.entries[id]
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("parameter registered as 2-d")
    }

    pub fn view1(&self, id: ParamId) -> ArrayView1<'_, f64> {
        self.entries[id]
            .value
            .view()
            .into_dimensionality::<Ix1>()
            .expect("parameter registered as 1-d")
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedParam> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut NamedParam> {
        self.entries.iter_mut()
    }

    /// Overwrite all values from (name, tensor) pairs; names and shapes must
    /// match the store exactly, in order.
    pub fn load_values(&mut self, tensors: &[(String, ArrayD<f64>)]) -> Result<()> {
        if tensors.len() != self.entries.len() {
            return Err(Error::spec(format!(
                "checkpoint holds {} tensors, spec builds {}",
                tensors.len(),
                self.entries.len()
            )));
        }
        for (entry, (name, value)) in self.entries.iter_mut().zip(tensors) {
            if &entry.name != name {
                return Err(Error::spec(format!(
                    "checkpoint tensor '{name}' does not match spec parameter '{}'",
                    entry.name
                )));
            }
            if entry.value.shape() != value.shape() {
                return Err(Error::spec(format!(
                    "parameter '{name}' shape {:?} does not match spec shape {:?}",
                    value.shape(),
                    entry.value.shape()
                )));
            }
            entry.value = value.clone();
        }
        Ok(())
    }

    /// SHA-256 over names, shapes, and little-endian payloads, in order.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for e in &self.entries {
            hasher.update(e.name.as_bytes());
            for d in e.value.shape() {
                hasher.update((*d as u64).to_le_bytes());
            }
            for v in e.value.iter() {
                hasher.update(v.to_le_bytes());
            }
        }
        hex_string(&hasher.finalize())
    }

    pub fn all_finite(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.value.iter().all(|v| v.is_finite()))
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Gradient accumulator aligned with a ParamStore.
#[derive(Debug, Clone)]
pub struct GradStore {
    grads: Vec<ArrayD<f64>>,
}

impl GradStore {
    pub fn zeros_like(store: &ParamStore) -> Self {
        GradStore {
            grads: store.iter().map(|e| ArrayD::zeros(e.value.raw_dim())).collect(),
        }
    }

    pub fn accum(&mut self, id: ParamId, g: &ArrayD<f64>) {
        self.grads[id] += g;
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<f64> {
        &self.grads[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ArrayD<f64>> {
        self.grads.iter()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.mapv_inplace(|v| v * s);
        }
    }

    pub fn add_assign(&mut self, other: &GradStore) {
        for (a, b) in self.grads.iter_mut().zip(other.grads.iter()) {
            *a += b;
        }
    }
}
