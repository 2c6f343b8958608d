//! One forward/backward pass: binds parameters from a [`ParamStore`] onto a
//! [`Graph`] and hands out dropout masks.
//!
//! Dropout masks are not drawn from a shared stream. Each mask is derived
//! from the step seed and a caller-supplied site tag, so the mask at a given
//! site depends only on (step, site). Computing extra or fewer nodes
//! elsewhere in the pass leaves every other mask unchanged, which keeps
//! training modes that share candidate spans loss-identical step for step.

use std::collections::BTreeMap;
use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::graph::{Gradients, Graph, VarId};
use crate::nn::params::ParamStore;
use crate::nn::tensor::Tensor;

/// Stable site identifier for dropout, built from a label and indices.
pub fn site_tag(label: &str, indices: &[usize]) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf29ce484222325;
    const FNV_PRIME: u64 = 0x100000001b3;
    let mut h = FNV_OFFSET;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    for &i in indices {
        for b in (i as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the xor of the two halves
    let mut z = a ^ b.rotate_left(23);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

enum Mode {
    Eval,
    Train { step_seed: u64 },
}

/// A parameter-binding wrapper around one [`Graph`].
pub struct Session<'a> {
    pub graph: Graph,
    store: &'a ParamStore,
    bound: HashMap<String, VarId>,
    mode: Mode,
}

impl<'a> Session<'a> {
    /// Inference session: dropout is the identity.
    pub fn eval(store: &'a ParamStore) -> Self {
        Session {
            graph: Graph::new(),
            store,
            bound: HashMap::new(),
            mode: Mode::Eval,
        }
    }

    /// Training session; `step_seed` drives every dropout mask of this pass.
    pub fn train(store: &'a ParamStore, step_seed: u64) -> Self {
        Session {
            graph: Graph::new(),
            store,
            bound: HashMap::new(),
            mode: Mode::Train { step_seed },
        }
    }

    pub fn is_training(&self) -> bool {
        matches!(self.mode, Mode::Train { .. })
    }

    /// Binds a named parameter onto the tape, once per name.
    pub fn param(&mut self, name: &str) -> VarId {
        if let Some(&id) = self.bound.get(name) {
            return id;
        }
        let value = self.store.expect(name).clone();
        let id = self.graph.leaf(value);
        self.bound.insert(name.to_string(), id);
        id
    }

    /// Introduces a non-parameter input value.
    pub fn input(&mut self, value: Tensor) -> VarId {
        self.graph.leaf(value)
    }

    /// Inverted dropout at the given site; identity in eval mode or at rate 0.
    pub fn dropout(&mut self, x: VarId, rate: f64, tag: u64) -> VarId {
        let Mode::Train { step_seed } = self.mode else {
            return x;
        };
        if rate <= 0.0 {
            return x;
        }
        assert!(rate < 1.0, "dropout rate {rate} must be below 1");
        let keep = 1.0 - rate;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(step_seed, tag));
        let mask: Vec<f64> = (0..self.graph.value(x).len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    1.0 / keep
                }
            })
            .collect();
        self.graph.dropout_mask(x, mask)
    }

    /// Gradients of the bound parameters, keyed by name.
    pub fn param_grads(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.bound
            .iter()
            .map(|(name, &id)| (name.clone(), grads.get(id).clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_bound_once() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![1.0, 2.0]));
        let mut sess = Session::eval(&store);
        let a = sess.param("w");
        let b = sess.param("w");
        assert_eq!(a, b);
    }

    #[test]
    fn eval_dropout_is_identity() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![1.0, 2.0, 3.0]));
        let mut sess = Session::eval(&store);
        let x = sess.param("w");
        let y = sess.dropout(x, 0.5, site_tag("t", &[0]));
        assert_eq!(x, y);
    }

    #[test]
    fn train_dropout_depends_only_on_step_and_site() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![1.0; 64]));

        let mask_of = |step: u64, tag: u64, extra_first: bool| -> Vec<f64> {
            let mut sess = Session::train(&store, step);
            let x = sess.param("w");
            if extra_first {
                // Consuming another site must not disturb this one.
                let _ = sess.dropout(x, 0.5, site_tag("other", &[9]));
            }
            let y = sess.dropout(x, 0.5, tag);
            sess.graph.value(y).data().to_vec()
        };

        let tag = site_tag("emb", &[3]);
        assert_eq!(mask_of(7, tag, false), mask_of(7, tag, true));
        assert_ne!(mask_of(7, tag, false), mask_of(8, tag, false));
        assert_ne!(mask_of(7, tag, false), mask_of(7, site_tag("emb", &[4]), false));
    }

    #[test]
    fn dropout_scales_kept_entries() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![1.0; 1000]));
        let mut sess = Session::train(&store, 1);
        let x = sess.param("w");
        let y = sess.dropout(x, 0.2, site_tag("s", &[0]));
        let data = sess.graph.value(y).data();
        let kept = data.iter().filter(|v| **v != 0.0).count();
        assert!(data.iter().all(|v| *v == 0.0 || (*v - 1.25).abs() < 1e-12));
        // Loose bound; rate 0.2 keeps about 800 of 1000.
        assert!((700..=900).contains(&kept), "kept {kept}");
    }
}
