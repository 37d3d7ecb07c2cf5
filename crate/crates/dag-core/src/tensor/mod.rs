//! Differentiable-array substrate: a reverse-mode tape over `f64` ndarrays.
//!
//! A [`Graph`] records one forward pass; [`Graph::backward`] replays it in
//! reverse and accumulates gradients into every node. Graphs are cheap,
//! per-pass objects: parameters live outside (see [`crate::params`]) and are
//! bound as leaves at the start of each pass, so forward passes on different
//! threads never share mutable state.

mod gradcheck;
mod nn;
pub mod ops;
#[cfg(test)]
mod tests;

pub use gradcheck::{check_gradients, finite_difference_gradients};
pub use nn::{attention, AttentionOutput, InitKind, LayerNorm, Linear, Mlp};

use ndarray::{ArrayD, ArrayViewD};

/// Value type for every graph node.
pub type Arr = ArrayD<f64>;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

type BackFn = Box<dyn Fn(&Arr, &[Arr], &mut [Option<Arr>])>;

/// Append-only computation tape.
pub struct Graph {
    pub(crate) values: Vec<Arr>,
    pub(crate) backs: Vec<Option<BackFn>>,
    record: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// A graph that records backward closures (training / gradient checks).
    pub fn new() -> Self {
        Graph {
            values: Vec::new(),
            backs: Vec::new(),
            record: true,
        }
    }

    /// A forward-only graph; `backward` on it yields no gradients.
    pub fn inference() -> Self {
        Graph {
            values: Vec::new(),
            backs: Vec::new(),
            record: false,
        }
    }

    pub(crate) fn push(&mut self, value: Arr, back: Option<BackFn>) -> Var {
        self.values.push(value);
        self.backs.push(if self.record { back } else { None });
        Var(self.values.len() - 1)
    }

    /// Insert a leaf node. Leaves receive gradients but propagate nothing.
    pub fn leaf(&mut self, value: Arr) -> Var {
        self.push(value, None)
    }

    pub fn value(&self, v: Var) -> &Arr {
        &self.values[v.0]
    }

    pub fn view(&self, v: Var) -> ArrayViewD<'_, f64> {
        self.values[v.0].view()
    }

    /// Scalar stored in a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        let a = &self.values[v.0];
        debug_assert_eq!(a.len(), 1, "scalar() on node with {} elements", a.len());
        *a.iter().next().expect("empty node")
    }

    pub fn num_nodes(&self) -> usize {
        self.values.len()
    }

    /// Reverse pass from `root` (a single-element node). Returns gradients
    /// for every node up to and including the root.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Arr>> = (0..self.values.len()).map(|_| None).collect();
        grads[root.0] = Some(Arr::ones(self.values[root.0].raw_dim()));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if let Some(back) = &self.backs[i] {
                back(&g, &self.values, &mut grads);
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }
}

/// Result of a backward pass.
pub struct Gradients {
    grads: Vec<Option<Arr>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`, if `v` participated.
    pub fn get(&self, v: Var) -> Option<&Arr> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Arr> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

pub(crate) fn accumulate(slot: &mut Option<Arr>, contrib: Arr) {
    match slot {
        Some(acc) => *acc += &contrib,
        None => *slot = Some(contrib),
    }
}
