//! Dense forward/backward kernels.
//!
//! Every backward function accumulates (`+=`) into the gradient slices it is
//! handed, so several consumers of one tensor can share a buffer.

use super::store::{Grads, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_tensor(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| sigmoid(v)).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

/// Softmax over the positions where `mask` is true; masked positions get 0.
///
/// Returns `false` (and writes all zeros) when no position is valid.
pub fn masked_softmax_row(scores: &[f64], mask: &[bool], out: &mut [f64]) -> bool {
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        out.iter_mut().for_each(|o| *o = 0.0);
        return false;
    }
    let mut total = 0.0;
    for ((o, &s), &m) in out.iter_mut().zip(scores).zip(mask) {
        *o = if m { (s - max).exp() } else { 0.0 };
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    true
}

/// Backward of a softmax row: `d_scores[k] = w[k] * (d_w[k] - Σ_j w[j] d_w[j])`.
///
/// Masked positions have `w == 0` and therefore receive no gradient.
pub fn softmax_backward_row(weights: &[f64], d_weights: &[f64], d_scores: &mut [f64]) {
    let dot: f64 = weights.iter().zip(d_weights).map(|(w, d)| w * d).sum();
    for ((ds, &w), &dw) in d_scores.iter_mut().zip(weights).zip(d_weights) {
        *ds += w * (dw - dot);
    }
}

/// Row-wise masked softmax of a `[batch × K]` score matrix.
pub fn masked_softmax(scores: &Tensor, mask: &[bool]) -> Result<Tensor> {
    if scores.len() != mask.len() {
        return Err(Error::Config(format!(
            "mask has {} entries for {} scores",
            mask.len(),
            scores.len()
        )));
    }
    let k = scores.cols();
    let mut out = Tensor::zeros(scores.shape());
    for r in 0..scores.rows() {
        let span = r * k..(r + 1) * k;
        if !masked_softmax_row(
            &scores.data()[span.clone()],
            &mask[span.clone()],
            &mut out.data_mut()[span],
        ) {
            return Err(Error::DegenerateRow(r));
        }
    }
    Ok(out)
}

/// Mean over valid positions of a `[batch × K × d]` tensor; rows with no valid
/// position pool to zeros.
pub fn average_pool(seq: &Tensor, mask: &[bool]) -> Result<Tensor> {
    let shape = seq.shape();
    if shape.len() != 3 || mask.len() != shape[0] * shape[1] {
        return Err(Error::Config(format!(
            "average_pool expects [batch×K×d] with a [batch×K] mask, got {:?} and {}",
            shape,
            mask.len()
        )));
    }
    let (b, k, d) = (shape[0], shape[1], shape[2]);
    let mut out = Tensor::zeros(&[b, d]);
    for r in 0..b {
        let count = mask[r * k..(r + 1) * k].iter().filter(|&&m| m).count();
        if count == 0 {
            continue;
        }
        let inv = 1.0 / count as f64;
        let dst = out.row_mut(r);
        for p in 0..k {
            if mask[r * k + p] {
                let src = &seq.data()[(r * k + p) * d..(r * k + p + 1) * d];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += s * inv;
                }
            }
        }
    }
    Ok(out)
}

/// Backward of [`average_pool`]: accumulates into `d_seq` (`[batch × K × d]`).
pub fn average_pool_backward(d_out: &[f64], mask: &[bool], k: usize, d: usize, d_seq: &mut [f64]) {
    let b = mask.len() / k;
    for r in 0..b {
        let count = mask[r * k..(r + 1) * k].iter().filter(|&&m| m).count();
        if count == 0 {
            continue;
        }
        let inv = 1.0 / count as f64;
        let g = &d_out[r * d..(r + 1) * d];
        for p in 0..k {
            if mask[r * k + p] {
                let dst = &mut d_seq[(r * k + p) * d..(r * k + p + 1) * d];
                for (o, gv) in dst.iter_mut().zip(g) {
                    *o += gv * inv;
                }
            }
        }
    }
}

/// `out[n × d_out] = x[n × d_in] · w[d_in × d_out] (+ bias)`.
pub fn affine_forward(x: &[f64], w: &[f64], bias: Option<&[f64]>, d_in: usize, d_out: usize) -> Vec<f64> {
    let n = x.len() / d_in;
    let mut out = vec![0.0; n * d_out];
    for r in 0..n {
        let dst = &mut out[r * d_out..(r + 1) * d_out];
        if let Some(b) = bias {
            dst.copy_from_slice(b);
        }
        for (k, &xv) in x[r * d_in..(r + 1) * d_in].iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (o, wv) in dst.iter_mut().zip(&w[k * d_out..(k + 1) * d_out]) {
                *o += xv * wv;
            }
        }
    }
    out
}

/// Backward of [`affine_forward`]. Any of the output slices may be skipped.
#[allow(clippy::too_many_arguments)]
pub fn affine_backward(
    x: &[f64],
    w: &[f64],
    d_out: &[f64],
    d_in: usize,
    d_outw: usize,
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    mut db: Option<&mut [f64]>,
) {
    let n = x.len() / d_in;
    for r in 0..n {
        let g = &d_out[r * d_outw..(r + 1) * d_outw];
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        if let Some(db) = db.as_deref_mut() {
            for (o, gv) in db.iter_mut().zip(g) {
                *o += gv;
            }
        }
        let xr = &x[r * d_in..(r + 1) * d_in];
        if let Some(dw) = dw.as_deref_mut() {
            for (k, &xv) in xr.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (o, gv) in dw[k * d_outw..(k + 1) * d_outw].iter_mut().zip(g) {
                    *o += xv * gv;
                }
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxr = &mut dx[r * d_in..(r + 1) * d_in];
            for (k, o) in dxr.iter_mut().enumerate() {
                let wr = &w[k * d_outw..(k + 1) * d_outw];
                *o += wr.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
}

fn layer_weight(prefix: &str, i: usize) -> String {
    format!("{prefix}.{i}.weight")
}

fn layer_bias(prefix: &str, i: usize) -> String {
    format!("{prefix}.{i}.bias")
}

/// Number of affine layers stored under `prefix`.
pub fn mlp_depth(store: &ParamStore, prefix: &str) -> usize {
    (0..).take_while(|&i| store.contains(&layer_weight(prefix, i))).count()
}

/// Activations retained by [`mlp_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// `inputs[l]` is the input to layer `l` (post-ReLU for `l > 0`).
    inputs: Vec<Tensor>,
}

/// Runs the affine stack `prefix.0 … prefix.{L-1}` with ReLU between layers
/// and no activation on the output.
pub fn mlp_forward(store: &ParamStore, prefix: &str, input: &Tensor) -> Result<(Tensor, MlpCache)> {
    let depth = mlp_depth(store, prefix);
    if depth == 0 {
        return Err(Error::Config(format!("no layers stored under `{prefix}`")));
    }
    let mut inputs = Vec::with_capacity(depth);
    let mut current = input.clone();
    for i in 0..depth {
        let w = store.value(&layer_weight(prefix, i))?;
        let b = store.value(&layer_bias(prefix, i))?;
        let (d_in, d_out) = (w.shape()[0], w.shape()[1]);
        if current.cols() != d_in || b.len() != d_out {
            return Err(Error::Config(format!(
                "layer `{}` expects input width {} (bias {}), got {} (bias {})",
                layer_weight(prefix, i),
                d_in,
                d_out,
                current.cols(),
                b.len()
            )));
        }
        let mut out = affine_forward(current.data(), w.data(), Some(b.data()), d_in, d_out);
        if i + 1 < depth {
            // `f64::max` would turn NaN into 0 and hide a corrupted layer
            out.iter_mut().filter(|v| **v < 0.0).for_each(|v| *v = 0.0);
        }
        let out = Tensor::from_vec(&[current.rows(), d_out], out)?;
        inputs.push(std::mem::replace(&mut current, out));
    }
    Ok((current, MlpCache { inputs }))
}

/// Backward of [`mlp_forward`]; returns the gradient w.r.t. the input.
pub fn mlp_backward(
    store: &ParamStore,
    prefix: &str,
    cache: &MlpCache,
    d_out: &Tensor,
    grads: &mut Grads,
) -> Result<Tensor> {
    let depth = cache.inputs.len();
    let mut g = d_out.clone();
    for i in (0..depth).rev() {
        let wname = layer_weight(prefix, i);
        let w = store.value(&wname)?;
        let (d_in, d_outw) = (w.shape()[0], w.shape()[1]);
        let x = &cache.inputs[i];
        let mut dx = vec![0.0; x.len()];
        affine_backward(
            x.data(),
            w.data(),
            g.data(),
            d_in,
            d_outw,
            Some(&mut dx),
            Some(grads.slot(store, &wname)?),
            None,
        );
        let db = grads.slot(store, &layer_bias(prefix, i))?;
        for r in 0..g.rows() {
            for (o, gv) in db.iter_mut().zip(g.row(r)) {
                *o += gv;
            }
        }
        if i > 0 {
            // ReLU gate: inputs to layer i are post-activation values.
            for (d, &xv) in dx.iter_mut().zip(x.data()) {
                if xv <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        g = Tensor::from_vec(x.shape(), dx)?;
    }
    Ok(g)
}

/// Parameter names and shapes for an MLP with the given layer widths.
pub fn mlp_param_shapes(prefix: &str, dims: &[usize]) -> Vec<(String, Vec<usize>)> {
    dims.windows(2)
        .enumerate()
        .flat_map(|(i, w)| {
            [
                (layer_weight(prefix, i), vec![w[0], w[1]]),
                (layer_bias(prefix, i), vec![w[1]]),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn store_with_mlp(layers: &[(Vec<f64>, Vec<f64>, usize, usize)]) -> ParamStore {
        let mut store = ParamStore::new();
        for (i, (w, b, din, dout)) in layers.iter().enumerate() {
            store
                .insert(layer_weight("m", i), Tensor::from_vec(&[*din, *dout], w.clone()).unwrap())
                .unwrap();
            store
                .insert(layer_bias("m", i), Tensor::from_vec(&[*dout], b.clone()).unwrap())
                .unwrap();
        }
        store
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_abs_diff_eq!(sigmoid(2.0), 0.8807970779778823, epsilon = 1e-16);
        for x in [-700.0, -30.0, -1.5, 0.3, 12.0, 700.0] {
            assert_abs_diff_eq!(sigmoid(x) + sigmoid(-x), 1.0, epsilon = 1e-15);
            assert!(sigmoid(x).is_finite());
        }
    }

    #[test]
    fn softmax_uniform_and_single() {
        let s = Tensor::from_vec(&[1, 3], vec![0.0; 3]).unwrap();
        let out = masked_softmax(&s, &[true; 3]).unwrap();
        for v in out.data() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        let s = Tensor::from_vec(&[1, 2], vec![5.0, 1.0]).unwrap();
        let out = masked_softmax(&s, &[true, false]).unwrap();
        assert_eq!(out.data(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_matches_two_independent_evaluations() {
        let s = Tensor::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let out = masked_softmax(&s, &[true; 3]).unwrap();
        // Direct formula without max subtraction.
        let z: f64 = (1.0f64).exp() + (2.0f64).exp() + (3.0f64).exp();
        let direct = [(1.0f64).exp() / z, (2.0f64).exp() / z, (3.0f64).exp() / z];
        // Logistic form: w_i = 1 / Σ_j exp(s_j - s_i).
        let logistic: Vec<f64> = (1..=3)
            .map(|i| 1.0 / (1..=3).map(|j| ((j - i) as f64).exp()).sum::<f64>())
            .collect();
        for i in 0..3 {
            assert_abs_diff_eq!(out.data()[i], direct[i], epsilon = 1e-15);
            assert_abs_diff_eq!(out.data()[i], logistic[i], epsilon = 1e-15);
        }
        assert_abs_diff_eq!(out.data()[2], 0.6652409557748219, epsilon = 1e-15);
    }

    #[test]
    fn softmax_rejects_all_masked_row() {
        let s = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let err = masked_softmax(&s, &[true, true, false, false]).unwrap_err();
        assert!(matches!(err, Error::DegenerateRow(1)));
    }

    #[test]
    fn softmax_is_stable_for_large_scores() {
        let s = Tensor::from_vec(&[1, 3], vec![1000.0, 999.0, -1000.0]).unwrap();
        let out = masked_softmax(&s, &[true; 3]).unwrap();
        assert!(out.all_finite());
        assert_abs_diff_eq!(out.data().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn average_pool_cases() {
        let seq = Tensor::from_vec(&[1, 2, 2], vec![1.0, 3.0, 3.0, 5.0]).unwrap();
        assert_eq!(average_pool(&seq, &[true, true]).unwrap().data(), &[2.0, 4.0]);
        assert_eq!(average_pool(&seq, &[false, true]).unwrap().data(), &[3.0, 5.0]);
        assert_eq!(average_pool(&seq, &[false, false]).unwrap().data(), &[0.0, 0.0]);
        let same = Tensor::from_vec(&[1, 3, 2], vec![0.5, -2.0, 0.5, -2.0, 0.5, -2.0]).unwrap();
        let out = average_pool(&same, &[true; 3]).unwrap();
        assert_abs_diff_eq!(out.data()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out.data()[1], -2.0, epsilon = 1e-15);
    }

    #[test]
    fn mlp_zero_weights_give_zero() {
        let store = store_with_mlp(&[
            (vec![0.0; 6], vec![0.0; 3], 2, 3),
            (vec![0.0; 3], vec![0.0], 3, 1),
        ]);
        let x = Tensor::from_vec(&[2, 2], vec![1.0, -4.0, 7.0, 2.0]).unwrap();
        let (y, _) = mlp_forward(&store, "m", &x).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
    }

    #[test]
    fn mlp_identity_output_layer_has_no_activation() {
        let store = store_with_mlp(&[(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2, 2)]);
        let x = Tensor::from_vec(&[1, 2], vec![1.0, -2.0]).unwrap();
        let (y, _) = mlp_forward(&store, "m", &x).unwrap();
        assert_eq!(y.data(), &[1.0, -2.0]);
    }

    #[test]
    fn mlp_two_layer_hand_trace() {
        // Layer 0: W = [[1, -2], [0.5, 1]] (rows = inputs), b = [0.1, 0.2]
        //   x = [1, 1] -> z = [1 + 0.5 + 0.1, -2 + 1 + 0.2] = [1.6, -0.8] -> relu [1.6, 0]
        // Layer 1: W = [[2, -1], [3, 4]], b = [0.5, -0.5]
        //   -> [1.6*2 + 0.5, 1.6*-1 - 0.5] = [3.7, -2.1]
        let store = store_with_mlp(&[
            (vec![1.0, -2.0, 0.5, 1.0], vec![0.1, 0.2], 2, 2),
            (vec![2.0, -1.0, 3.0, 4.0], vec![0.5, -0.5], 2, 2),
        ]);
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        let (y, _) = mlp_forward(&store, "m", &x).unwrap();
        assert_abs_diff_eq!(y.data()[0], 3.7, epsilon = 1e-12);
        assert_abs_diff_eq!(y.data()[1], -2.1, epsilon = 1e-12);
    }

    #[test]
    fn mlp_dimension_mismatch_names_layer() {
        let store = store_with_mlp(&[
            (vec![0.0; 6], vec![0.0; 3], 2, 3),
            (vec![0.0; 4], vec![0.0; 2], 2, 2),
        ]);
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        let err = mlp_forward(&store, "m", &x).unwrap_err().to_string();
        assert!(err.contains("m.1.weight"), "{err}");
    }

    #[test]
    fn mlp_backward_matches_central_differences() {
        let store = store_with_mlp(&[
            (vec![0.3, -0.7, 0.2, 0.9, 0.4, -0.5], vec![0.05, -0.1, 0.2], 2, 3),
            (vec![0.6, -0.4, 1.1], vec![0.3], 3, 1),
        ]);
        let x = Tensor::from_vec(&[2, 2], vec![0.8, -0.3, -1.2, 0.6]).unwrap();
        let (_, cache) = mlp_forward(&store, "m", &x).unwrap();
        let ones = Tensor::from_vec(&[2, 1], vec![1.0, 1.0]).unwrap();
        let mut grads = Grads::new();
        let dx = mlp_backward(&store, "m", &cache, &ones, &mut grads).unwrap();
        let f = |xs: &Tensor| mlp_forward(&store, "m", xs).unwrap().0.data().iter().sum::<f64>();
        let eps = 1e-6;
        for i in 0..x.len() {
            let mut p = x.clone();
            p.data_mut()[i] += eps;
            let mut m = x.clone();
            m.data_mut()[i] -= eps;
            assert_abs_diff_eq!(dx.data()[i], (f(&p) - f(&m)) / (2.0 * eps), epsilon = 1e-8);
        }
        assert!(grads.get("m.0.weight").is_some());
    }

    #[test]
    fn param_shapes_chain() {
        let shapes = mlp_param_shapes("p", &[5, 4, 1]);
        assert_eq!(shapes.len(), 4);
        assert_eq!(shapes[0], ("p.0.weight".to_string(), vec![5, 4]));
        assert_eq!(shapes[3], ("p.1.bias".to_string(), vec![1]));
    }
}
