//! Trainable building blocks: feedforward stacks, the bidirectional LSTM
//! encoder, and the character CNN. Each block is a pair of functions — an
//! initializer that registers named parameters and a forward that binds them
//! on a [`Session`] — plus a shape listing used for checkpoint validation.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::graph::VarId;
use crate::nn::params::ParamStore;
use crate::nn::session::{site_tag, Session};
use crate::nn::tensor::Tensor;

/// Initializes every listed parameter that is not already present:
/// Glorot uniform for matrices, zeros for vectors.
pub fn init_shapes(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    shapes: &[(String, Vec<usize>)],
) {
    for (name, shape) in shapes {
        if store.contains(name) {
            continue;
        }
        let t = match shape.as_slice() {
            [rows, cols] => Tensor::glorot_uniform(*rows, *cols, rng),
            _ => Tensor::zeros(shape),
        };
        store.insert(name.clone(), t);
    }
}

/// Checks every listed parameter against the store.
pub fn validate_shapes(store: &ParamStore, shapes: &[(String, Vec<usize>)]) -> Result<()> {
    for (name, shape) in shapes {
        store.check_shape(name, shape)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Feedforward network
// ---------------------------------------------------------------------------

/// Shape of a feedforward stack: `hidden_layers` ReLU layers of
/// `hidden_size`, then a linear output layer.
#[derive(Debug, Clone)]
pub struct FfnnSpec {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_size: usize,
    pub output_dim: usize,
    pub dropout: f64,
}

pub fn ffnn_shapes(prefix: &str, spec: &FfnnSpec) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let mut in_dim = spec.input_dim;
    for i in 0..spec.hidden_layers {
        out.push((format!("{prefix}.h{i}.weight"), vec![spec.hidden_size, in_dim]));
        out.push((format!("{prefix}.h{i}.bias"), vec![spec.hidden_size]));
        in_dim = spec.hidden_size;
    }
    out.push((format!("{prefix}.out.weight"), vec![spec.output_dim, in_dim]));
    out.push((format!("{prefix}.out.bias"), vec![spec.output_dim]));
    out
}

pub fn init_ffnn(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, spec: &FfnnSpec) {
    init_shapes(store, rng, &ffnn_shapes(prefix, spec));
}

/// Applies the stack. Dropout lands after each hidden activation; `tag`
/// identifies the call site so masks are stable per (step, site).
pub fn ffnn(sess: &mut Session, prefix: &str, spec: &FfnnSpec, x: VarId, tag: u64) -> VarId {
    let mut h = x;
    for i in 0..spec.hidden_layers {
        let w = sess.param(&format!("{prefix}.h{i}.weight"));
        let b = sess.param(&format!("{prefix}.h{i}.bias"));
        let z = sess.graph.matvec(w, h);
        let z = sess.graph.add(z, b);
        let a = sess.graph.relu(z);
        h = sess.dropout(a, spec.dropout, site_tag("ffnn", &[tag as usize, i]));
    }
    let w = sess.param(&format!("{prefix}.out.weight"));
    let b = sess.param(&format!("{prefix}.out.bias"));
    let z = sess.graph.matvec(w, h);
    sess.graph.add(z, b)
}

// ---------------------------------------------------------------------------
// Bidirectional LSTM
// ---------------------------------------------------------------------------

/// Stacked bidirectional LSTM; each layer consumes the dropout-regularized
/// concatenation of the previous layer's two directions.
#[derive(Debug, Clone)]
pub struct BiLstmSpec {
    pub input_dim: usize,
    pub hidden_size: usize,
    pub layers: usize,
    pub dropout: f64,
}

impl BiLstmSpec {
    pub fn output_dim(&self) -> usize {
        2 * self.hidden_size
    }
}

pub fn bilstm_shapes(prefix: &str, spec: &BiLstmSpec) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let h = spec.hidden_size;
    for layer in 0..spec.layers {
        let in_dim = if layer == 0 { spec.input_dim } else { 2 * h };
        for dir in ["fw", "bw"] {
            let p = format!("{prefix}.l{layer}.{dir}");
            out.push((format!("{p}.w_ih"), vec![4 * h, in_dim]));
            out.push((format!("{p}.w_hh"), vec![4 * h, h]));
            out.push((format!("{p}.bias"), vec![4 * h]));
        }
    }
    out
}

pub fn init_bilstm(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, spec: &BiLstmSpec) {
    init_shapes(store, rng, &bilstm_shapes(prefix, spec));
    // Forget-gate bias starts at 1 (gate order: input, forget, candidate, output).
    let h = spec.hidden_size;
    for layer in 0..spec.layers {
        for dir in ["fw", "bw"] {
            let name = format!("{prefix}.l{layer}.{dir}.bias");
            if let Some(bias) = store.get_mut(&name) {
                if bias.data().iter().all(|v| *v == 0.0) {
                    for i in h..2 * h {
                        bias.data_mut()[i] = 1.0;
                    }
                }
            }
        }
    }
}

/// One direction over one sequence; `inputs` are visited in the given order.
fn lstm_direction(
    sess: &mut Session,
    prefix: &str,
    hidden: usize,
    inputs: &[VarId],
) -> Vec<VarId> {
    let w_ih = sess.param(&format!("{prefix}.w_ih"));
    let w_hh = sess.param(&format!("{prefix}.w_hh"));
    let bias = sess.param(&format!("{prefix}.bias"));
    let mut h = sess.input(Tensor::zeros(&[hidden]));
    let mut c = sess.input(Tensor::zeros(&[hidden]));
    let mut outputs = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let zi = sess.graph.matvec(w_ih, x);
        let zh = sess.graph.matvec(w_hh, h);
        let z = sess.graph.add(zi, zh);
        let z = sess.graph.add(z, bias);
        let i_gate = sess.graph.slice(z, 0, hidden);
        let f_gate = sess.graph.slice(z, hidden, hidden);
        let g_cand = sess.graph.slice(z, 2 * hidden, hidden);
        let o_gate = sess.graph.slice(z, 3 * hidden, hidden);
        let i_gate = sess.graph.sigmoid(i_gate);
        let f_gate = sess.graph.sigmoid(f_gate);
        let g_cand = sess.graph.tanh(g_cand);
        let o_gate = sess.graph.sigmoid(o_gate);
        let keep = sess.graph.mul(f_gate, c);
        let write = sess.graph.mul(i_gate, g_cand);
        c = sess.graph.add(keep, write);
        let c_act = sess.graph.tanh(c);
        h = sess.graph.mul(o_gate, c_act);
        outputs.push(h);
    }
    outputs
}

/// Runs the stacked encoder over one sentence. `global_offset` is the
/// document index of `inputs[0]`, used to key per-token dropout sites.
pub fn bilstm(
    sess: &mut Session,
    prefix: &str,
    spec: &BiLstmSpec,
    inputs: &[VarId],
    global_offset: usize,
) -> Result<Vec<VarId>> {
    if inputs.is_empty() {
        return Err(Error::Config("empty token sequence for LSTM encoder".into()));
    }
    let mut layer_in: Vec<VarId> = inputs.to_vec();
    for layer in 0..spec.layers {
        let fw = lstm_direction(
            sess,
            &format!("{prefix}.l{layer}.fw"),
            spec.hidden_size,
            &layer_in,
        );
        let reversed: Vec<VarId> = layer_in.iter().rev().copied().collect();
        let mut bw = lstm_direction(
            sess,
            &format!("{prefix}.l{layer}.bw"),
            spec.hidden_size,
            &reversed,
        );
        bw.reverse();
        layer_in = fw
            .iter()
            .zip(&bw)
            .enumerate()
            .map(|(t, (&f, &b))| {
                let cat = sess.graph.concat(&[f, b]);
                sess.dropout(
                    cat,
                    spec.dropout,
                    site_tag("lstm", &[layer, global_offset + t]),
                )
            })
            .collect();
    }
    Ok(layer_in)
}

// ---------------------------------------------------------------------------
// Character CNN
// ---------------------------------------------------------------------------

/// Character convolution over learned character embeddings with max-pooling
/// per filter width. Output dimension is `filter_widths.len() * filters`.
#[derive(Debug, Clone)]
pub struct CharCnnSpec {
    pub vocab_size: usize,
    pub char_dim: usize,
    pub filter_widths: Vec<usize>,
    pub filters: usize,
}

impl CharCnnSpec {
    pub fn output_dim(&self) -> usize {
        self.filter_widths.len() * self.filters
    }

    /// Id 0 is the padding character; everything else hashes into the rest
    /// of the table.
    fn char_id(&self, c: char) -> usize {
        1 + (c as usize) % (self.vocab_size - 1)
    }
}

pub fn char_cnn_shapes(prefix: &str, spec: &CharCnnSpec) -> Vec<(String, Vec<usize>)> {
    let mut out = vec![(
        format!("{prefix}.table"),
        vec![spec.vocab_size, spec.char_dim],
    )];
    for &w in &spec.filter_widths {
        out.push((format!("{prefix}.w{w}.weight"), vec![spec.filters, w * spec.char_dim]));
        out.push((format!("{prefix}.w{w}.bias"), vec![spec.filters]));
    }
    out
}

pub fn init_char_cnn(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, spec: &CharCnnSpec) {
    init_shapes(store, rng, &char_cnn_shapes(prefix, spec));
}

/// Encodes one token surface. An empty surface is a single padding
/// character; shorter tokens are padded up to the widest filter.
pub fn char_cnn(sess: &mut Session, prefix: &str, spec: &CharCnnSpec, surface: &str) -> VarId {
    let table = sess.param(&format!("{prefix}.table"));
    let max_width = spec.filter_widths.iter().copied().max().unwrap_or(1);
    let mut ids: Vec<usize> = surface.chars().map(|c| spec.char_id(c)).collect();
    if ids.is_empty() {
        ids.push(0);
    }
    while ids.len() < max_width {
        ids.push(0);
    }
    let embs: Vec<VarId> = ids.iter().map(|&id| sess.graph.lookup(table, id)).collect();

    let mut pooled = Vec::with_capacity(spec.filter_widths.len());
    for &w in &spec.filter_widths {
        let weight = sess.param(&format!("{prefix}.w{w}.weight"));
        let bias = sess.param(&format!("{prefix}.w{w}.bias"));
        let mut position_outputs = Vec::new();
        for p in 0..=ids.len() - w {
            let window = sess.graph.concat(&embs[p..p + w]);
            let z = sess.graph.matvec(weight, window);
            let z = sess.graph.add(z, bias);
            position_outputs.push(sess.graph.relu(z));
        }
        pooled.push(sess.graph.max_over(&position_outputs));
    }
    sess.graph.concat(&pooled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn ffnn_zero_weights_zero_output() {
        let spec = FfnnSpec {
            input_dim: 3,
            hidden_layers: 2,
            hidden_size: 4,
            output_dim: 2,
            dropout: 0.0,
        };
        let mut store = ParamStore::new();
        for (name, shape) in ffnn_shapes("f", &spec) {
            store.insert(name, Tensor::zeros(&shape));
        }
        let mut sess = Session::eval(&store);
        let x = sess.input(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let y = ffnn(&mut sess, "f", &spec, x, 0);
        assert_eq!(sess.graph.value(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn ffnn_single_linear_identity() {
        let spec = FfnnSpec {
            input_dim: 3,
            hidden_layers: 0,
            hidden_size: 0,
            output_dim: 3,
            dropout: 0.0,
        };
        let mut store = ParamStore::new();
        store.insert("f.out.weight", Tensor::identity(3));
        store.insert("f.out.bias", Tensor::zeros(&[3]));
        let mut sess = Session::eval(&store);
        let x = sess.input(Tensor::vector(vec![0.5, -1.0, 2.0]));
        let y = ffnn(&mut sess, "f", &spec, x, 0);
        assert_eq!(sess.graph.value(y).data(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn bilstm_zero_weights_zero_outputs() {
        let spec = BiLstmSpec {
            input_dim: 2,
            hidden_size: 3,
            layers: 1,
            dropout: 0.0,
        };
        let mut store = ParamStore::new();
        for (name, shape) in bilstm_shapes("enc", &spec) {
            store.insert(name, Tensor::zeros(&shape));
        }
        let mut sess = Session::eval(&store);
        let xs: Vec<VarId> = (0..3)
            .map(|i| sess.input(Tensor::vector(vec![i as f64, 1.0])))
            .collect();
        let out = bilstm(&mut sess, "enc", &spec, &xs, 0).unwrap();
        assert_eq!(out.len(), 3);
        for o in out {
            assert!(sess.graph.value(o).data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn bilstm_length_one_sequence() {
        let spec = BiLstmSpec {
            input_dim: 2,
            hidden_size: 2,
            layers: 2,
            dropout: 0.0,
        };
        let mut store = ParamStore::new();
        let mut r = rng();
        init_bilstm(&mut store, &mut r, "enc", &spec);
        let mut sess = Session::eval(&store);
        let x = sess.input(Tensor::vector(vec![0.3, -0.7]));
        let out = bilstm(&mut sess, "enc", &spec, &[x], 0).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(sess.graph.value(out[0]).len(), 4);
    }

    #[test]
    fn bilstm_empty_sequence_errors() {
        let spec = BiLstmSpec {
            input_dim: 2,
            hidden_size: 2,
            layers: 1,
            dropout: 0.0,
        };
        let mut store = ParamStore::new();
        let mut r = rng();
        init_bilstm(&mut store, &mut r, "enc", &spec);
        let mut sess = Session::eval(&store);
        assert!(bilstm(&mut sess, "enc", &spec, &[], 0).is_err());
    }

    #[test]
    fn forget_gate_bias_initialized_to_one() {
        let spec = BiLstmSpec {
            input_dim: 2,
            hidden_size: 3,
            layers: 1,
            dropout: 0.0,
        };
        let mut store = ParamStore::new();
        let mut r = rng();
        init_bilstm(&mut store, &mut r, "enc", &spec);
        let bias = store.get("enc.l0.fw.bias").unwrap().data();
        assert_eq!(&bias[3..6], &[1.0, 1.0, 1.0]);
        assert_eq!(&bias[0..3], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn char_cnn_output_dim_and_determinism() {
        let spec = CharCnnSpec {
            vocab_size: 101,
            char_dim: 8,
            filter_widths: vec![3, 4, 5],
            filters: 50,
        };
        assert_eq!(spec.output_dim(), 150);
        let mut store = ParamStore::new();
        let mut r = rng();
        init_char_cnn(&mut store, &mut r, "cnn", &spec);

        let encode = |s: &str| {
            let mut sess = Session::eval(&store);
            let y = char_cnn(&mut sess, "cnn", &spec, s);
            sess.graph.value(y).data().to_vec()
        };
        let a = encode("كتاب");
        let b = encode("كتاب");
        assert_eq!(a.len(), 150);
        assert_eq!(a, b);
        // Short and empty tokens still produce full-size vectors.
        assert_eq!(encode("a").len(), 150);
        assert_eq!(encode("").len(), 150);
    }
}
