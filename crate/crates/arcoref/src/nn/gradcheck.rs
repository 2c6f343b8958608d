//! Numerical gradient checking via central finite differences.
//!
//! The checker only re-evaluates forward passes on perturbed parameters, so
//! it is independent of the backward rules it is used to verify.

use std::collections::BTreeMap;

use crate::nn::params::ParamStore;
use crate::nn::tensor::Tensor;

/// Scale-aware relative error between an analytic and a numeric value.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Central-difference gradient of `f` with respect to one named parameter.
pub fn numeric_grad(
    f: &mut dyn FnMut(&ParamStore) -> f64,
    store: &ParamStore,
    name: &str,
    h: f64,
) -> Tensor {
    let base = store.expect(name).clone();
    let mut work = store.clone();
    let mut grad = Tensor::zeros(base.shape());
    for i in 0..base.len() {
        let x = base.data()[i];
        work.get_mut(name).unwrap().data_mut()[i] = x + h;
        let up = f(&work);
        work.get_mut(name).unwrap().data_mut()[i] = x - h;
        let down = f(&work);
        work.get_mut(name).unwrap().data_mut()[i] = x;
        grad.data_mut()[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Largest relative error across all entries of the listed parameters,
/// comparing `analytic` gradients against central differences of `f`.
/// Returns `(worst_error, worst_parameter)`.
pub fn max_rel_error(
    f: &mut dyn FnMut(&ParamStore) -> f64,
    store: &ParamStore,
    analytic: &BTreeMap<String, Tensor>,
    h: f64,
) -> (f64, String) {
    let mut worst = 0.0;
    let mut worst_name = String::new();
    for (name, grad) in analytic {
        let numeric = numeric_grad(f, store, name, h);
        for (i, (a, n)) in grad.data().iter().zip(numeric.data()).enumerate() {
            let e = rel_error(*a, *n);
            if e > worst {
                worst = e;
                worst_name = format!("{name}[{i}]");
            }
        }
    }
    (worst, worst_name)
}

/// Central difference of `f` for selected entries of one parameter.
fn numeric_grad_entries(
    f: &mut dyn FnMut(&ParamStore) -> f64,
    store: &ParamStore,
    name: &str,
    entries: &[usize],
    h: f64,
) -> Vec<f64> {
    let base = store.expect(name).clone();
    let mut work = store.clone();
    entries
        .iter()
        .map(|&i| {
            let x = base.data()[i];
            work.get_mut(name).unwrap().data_mut()[i] = x + h;
            let up = f(&work);
            work.get_mut(name).unwrap().data_mut()[i] = x - h;
            let down = f(&work);
            work.get_mut(name).unwrap().data_mut()[i] = x;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Like [`max_rel_error`] but checking at most `entries_per_param` evenly
/// spread entries of each parameter, for large models.
pub fn max_rel_error_sampled(
    f: &mut dyn FnMut(&ParamStore) -> f64,
    store: &ParamStore,
    analytic: &BTreeMap<String, Tensor>,
    h: f64,
    entries_per_param: usize,
) -> (f64, String) {
    let mut worst = 0.0;
    let mut worst_name = String::new();
    for (name, grad) in analytic {
        let len = grad.len();
        let k = entries_per_param.min(len).max(1);
        let entries: Vec<usize> = (0..k).map(|i| i * len / k).collect();
        let numeric = numeric_grad_entries(f, store, name, &entries, h);
        for (&i, n) in entries.iter().zip(&numeric) {
            let e = rel_error(grad.data()[i], *n);
            if e > worst {
                worst = e;
                worst_name = format!("{name}[{i}]");
            }
        }
    }
    (worst, worst_name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::session::Session;

    #[test]
    fn quadratic_gradient_matches() {
        // f(w) = sum(w * w), df/dw = 2w
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![0.5, -1.5, 2.0]));

        let mut f = |s: &ParamStore| {
            let mut sess = Session::eval(s);
            let w = sess.param("w");
            let sq = sess.graph.mul(w, w);
            let out = sess.graph.sum(sq);
            sess.graph.value(out).item()
        };

        let mut sess = Session::eval(&store);
        let w = sess.param("w");
        let sq = sess.graph.mul(w, w);
        let out = sess.graph.sum(sq);
        let grads = sess.graph.backward(out);
        let analytic = sess.param_grads(&grads);

        let (err, name) = max_rel_error(&mut f, &store, &analytic, 1e-6);
        assert!(err < 1e-9, "rel error {err} at {name}");
    }
}
