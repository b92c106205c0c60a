//! Named parameter storage shared by the model, trainer, and checkpoint code.
//!
//! Parameters live outside any tape as plain arrays. Each forward pass binds
//! them onto a fresh [`Tape`](crate::autodiff::Tape) with `requires_grad`
//! mirroring the trainable flag, which is what the staged freeze schedule
//! toggles between epochs.

use std::collections::BTreeMap;

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{DiffArray, Tape};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone)]
pub struct Param {
    pub value: ArrayD<f64>,
    pub trainable: bool,
}

/// Parameters keyed by dotted name (`encoder.block0.attn.wq`, ...).
///
/// Iteration order is the sorted name order, which keeps serialization and
/// optimizer traversal deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ArrayD<f64>) {
        self.entries.insert(name.into(), Param { value, trainable: false });
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.entries
            .get(name)
            .ok_or_else(|| CoreError::contract(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| CoreError::contract(format!("unknown parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// Names currently marked trainable, in sorted order.
    pub fn trainable_names(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(n, _)| n.clone())
            .collect()
    }

    /// Clear all trainable flags.
    pub fn freeze_all(&mut self) {
        for p in self.entries.values_mut() {
            p.trainable = false;
        }
    }

    /// Mark every parameter satisfying `pred` trainable; returns how many matched.
    pub fn mark_trainable(&mut self, pred: impl Fn(&str) -> bool) -> usize {
        let mut n = 0;
        for (name, p) in self.entries.iter_mut() {
            if pred(name) {
                p.trainable = true;
                n += 1;
            }
        }
        n
    }

    /// Bind a stored parameter onto `tape` as a named leaf.
    pub fn bind(&self, tape: &mut Tape, name: &str) -> Result<DiffArray> {
        let p = self.get(name)?;
        tape.var_named(name, p.value.clone(), p.trainable)
    }

    /// Byte-level fingerprint of a parameter's value, for freeze-integrity
    /// checks and determinism assertions.
    pub fn value_bits(&self, name: &str) -> Result<Vec<u64>> {
        Ok(self.get(name)?.value.iter().map(|v| v.to_bits()).collect())
    }
}

/// Xavier-uniform matrix of shape `(rows, cols)` with fan sizes taken from
/// the two dimensions.
pub fn xavier_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ArrayD<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    ArrayD::from_shape_fn(IxDyn(&[rows, cols]), |_| rng.random_range(-limit..limit))
}

pub fn zeros(shape: &[usize]) -> ArrayD<f64> {
    ArrayD::zeros(IxDyn(shape))
}

pub fn ones(shape: &[usize]) -> ArrayD<f64> {
    ArrayD::ones(IxDyn(shape))
}

/// Deterministic sub-generator for a named component, so adding parameters
/// to one module never shifts the init stream of another.
pub fn seeded_rng(seed: u64, stream: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}
