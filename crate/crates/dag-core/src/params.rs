//! Named parameter storage with frozen/trainable partitioning.
//!
//! Parameters live outside any computation graph. Each forward pass binds the
//! whole store into a fresh [`Graph`] as leaves; the optimizer mutates values
//! between passes. Frozen parameters are bound like any other (so gradients
//! can flow *through* frozen modules) but are never updated.

use std::collections::BTreeMap;

use crate::tensor::{Arr, Graph, Var};

#[derive(Clone, Debug)]
pub struct Parameter {
    pub value: Arr,
    pub frozen: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Arr, frozen: bool) {
        let prev = self
            .params
            .insert(name.to_string(), Parameter { value, frozen });
        assert!(prev.is_none(), "duplicate parameter {name}");
    }

    pub fn get(&self, name: &str) -> &Parameter {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Parameter {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Iteration is ordered by name, so every traversal is deterministic.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Parameter)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Parameter)> {
        self.params.iter_mut()
    }

    /// Number of trainable scalars.
    pub fn trainable_scalar_count(&self) -> usize {
        self.params
            .values()
            .filter(|p| !p.frozen)
            .map(|p| p.value.len())
            .sum()
    }

    /// Bind every parameter as a graph leaf; returns the name-to-node map.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        let mut vars = BTreeMap::new();
        for (name, p) in &self.params {
            vars.insert(name.clone(), g.leaf(p.value.clone()));
        }
        Bound { vars }
    }

    /// FNV-1a checksum over names, shapes and value bits of the parameters
    /// selected by `pred`.
    pub fn checksum_where(&self, mut pred: impl FnMut(&str, &Parameter) -> bool) -> u64 {
        let mut h = Fnv::new();
        for (name, p) in &self.params {
            if !pred(name, p) {
                continue;
            }
            h.update(name.as_bytes());
            for d in p.value.shape() {
                h.update(&(*d as u64).to_le_bytes());
            }
            for v in p.value.iter() {
                h.update(&v.to_bits().to_le_bytes());
            }
        }
        h.finish()
    }

    pub fn checksum_frozen(&self) -> u64 {
        self.checksum_where(|_, p| p.frozen)
    }

    pub fn checksum_all(&self) -> u64 {
        self.checksum_where(|_, _| true)
    }

    /// Checksum of all parameters whose name starts with `prefix`.
    pub fn checksum_prefix(&self, prefix: &str) -> u64 {
        self.checksum_where(|n, _| n.starts_with(prefix))
    }
}

/// Parameter name to graph node mapping for one forward pass.
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

/// Incremental FNV-1a 64-bit hash.
pub struct Fnv(u64);

impl Fnv {
    pub fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv {
    fn default() -> Self {
        Self::new()
    }
}

/// Convenience FNV-1a of a byte slice.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = Fnv::new();
    h.update(bytes);
    h.finish()
}
