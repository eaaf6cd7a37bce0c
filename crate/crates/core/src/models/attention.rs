//! Embedding lookups, hard search and multi-head target attention.

use crate::datamodel::ItemRef;
use crate::error::{Error, Result};
use crate::numerics::kernels::{affine_backward, affine_forward, masked_softmax_row, softmax_backward_row};
use crate::numerics::{Grads, ParamStore, Tensor};

pub const ITEM_TABLE: &str = "emb.item";
pub const CATEGORY_TABLE: &str = "emb.category";

/// Gathers `[n × width]` rows of `table` by index.
pub(crate) fn gather_rows(store: &ParamStore, table: &str, idx: &[usize]) -> Result<Vec<f64>> {
    let t = store.value(table)?;
    let (rows, w) = (t.rows(), t.cols());
    let mut out = Vec::with_capacity(idx.len() * w);
    for &i in idx {
        if i >= rows {
            return Err(Error::Validation(format!(
                "index {i} outside table `{table}` with {rows} rows"
            )));
        }
        out.extend_from_slice(t.row(i));
    }
    Ok(out)
}

/// Scatter-adds `[n × width]` gradients into the rows of `table`.
pub(crate) fn scatter_rows(store: &ParamStore, grads: &mut Grads, table: &str, idx: &[usize], d: &[f64]) -> Result<()> {
    let w = store.value(table)?.cols();
    let g = grads.slot(store, table)?;
    for (n, &i) in idx.iter().enumerate() {
        let src = &d[n * w..(n + 1) * w];
        if src.iter().all(|&v| v == 0.0) {
            continue;
        }
        for (o, s) in g[i * w..(i + 1) * w].iter_mut().zip(src) {
            *o += s;
        }
    }
    Ok(())
}

/// Item vectors: the item-id row concatenated with the category row.
pub fn embed_items(store: &ParamStore, items: &[usize], cats: &[usize]) -> Result<Tensor> {
    if items.len() != cats.len() {
        return Err(Error::Config("item and category index lists differ in length".into()));
    }
    let ids = gather_rows(store, ITEM_TABLE, items)?;
    let cs = gather_rows(store, CATEGORY_TABLE, cats)?;
    let (di, dc) = (store.value(ITEM_TABLE)?.cols(), store.value(CATEGORY_TABLE)?.cols());
    let mut out = Vec::with_capacity(items.len() * (di + dc));
    for n in 0..items.len() {
        out.extend_from_slice(&ids[n * di..(n + 1) * di]);
        out.extend_from_slice(&cs[n * dc..(n + 1) * dc]);
    }
    Tensor::from_vec(&[items.len(), di + dc], out)
}

/// Backward of [`embed_items`], skipping rows whose `mask` entry is false.
pub(crate) fn embed_items_backward(
    store: &ParamStore,
    grads: &mut Grads,
    items: &[usize],
    cats: &[usize],
    mask: Option<&[bool]>,
    d_emb: &[f64],
) -> Result<()> {
    let di = store.value(ITEM_TABLE)?.cols();
    let dc = store.value(CATEGORY_TABLE)?.cols();
    let d = di + dc;
    let gi = grads.slot(store, ITEM_TABLE)?;
    for (n, &i) in items.iter().enumerate() {
        if mask.is_some_and(|m| !m[n]) {
            continue;
        }
        for (o, s) in gi[i * di..(i + 1) * di].iter_mut().zip(&d_emb[n * d..n * d + di]) {
            *o += s;
        }
    }
    let gc = grads.slot(store, CATEGORY_TABLE)?;
    for (n, &c) in cats.iter().enumerate() {
        if mask.is_some_and(|m| !m[n]) {
            continue;
        }
        for (o, s) in gc[c * dc..(c + 1) * dc].iter_mut().zip(&d_emb[n * d + di..(n + 1) * d]) {
            *o += s;
        }
    }
    Ok(())
}

/// The up-to-`k` most recent entries of a most-recent-first sequence whose
/// category equals `anchor_category`.
pub fn hard_search(long_seq: &[ItemRef], anchor_category: usize, k: usize) -> Vec<ItemRef> {
    long_seq
        .iter()
        .filter(|it| it.category_id == anchor_category)
        .take(k)
        .copied()
        .collect()
}

/// Positions selected by [`hard_search`] on an encoded, masked sequence.
pub(crate) fn hard_search_positions<'a>(cats: &'a [usize], mask: &'a [bool], anchor: usize, k: usize) -> impl Iterator<Item = usize> + 'a {
    (0..cats.len())
        .filter(move |&p| mask[p] && cats[p] == anchor)
        .take(k)
}

/// A padded set of `groups × k` embedded items.
#[derive(Debug, Clone)]
pub(crate) struct SeqEmb {
    pub items: Vec<usize>,
    pub cats: Vec<usize>,
    pub mask: Vec<bool>,
    pub k: usize,
    /// `[groups × k × d]`, zero at masked positions.
    pub emb: Vec<f64>,
}

impl SeqEmb {
    pub fn build(store: &ParamStore, items: Vec<usize>, cats: Vec<usize>, mask: Vec<bool>, k: usize) -> Result<Self> {
        let mut emb = embed_items(store, &items, &cats)?.into_vec();
        let d = if items.is_empty() { 0 } else { emb.len() / items.len() };
        for (p, &m) in mask.iter().enumerate() {
            if !m {
                emb[p * d..(p + 1) * d].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok(SeqEmb { items, cats, mask, k, emb })
    }

    /// Hard-searched sub-sequences, one group per anchor category.
    pub fn hard_searched(
        store: &ParamStore,
        src_items: &[usize],
        src_cats: &[usize],
        src_mask: &[bool],
        src_k: usize,
        anchors: &[(usize, usize)],
        k: usize,
    ) -> Result<Self> {
        let g = anchors.len();
        let mut items = vec![0; g * k];
        let mut cats = vec![0; g * k];
        let mut mask = vec![false; g * k];
        for (gi, &(session, anchor)) in anchors.iter().enumerate() {
            let span = session * src_k..(session + 1) * src_k;
            let sc = &src_cats[span.clone()];
            let sm = &src_mask[span.clone()];
            for (slot, p) in hard_search_positions(sc, sm, anchor, k).enumerate() {
                items[gi * k + slot] = src_items[span.start + p];
                cats[gi * k + slot] = sc[p];
                mask[gi * k + slot] = true;
            }
        }
        SeqEmb::build(store, items, cats, mask, k)
    }

    pub fn backward(&self, store: &ParamStore, grads: &mut Grads, d_emb: &[f64]) -> Result<()> {
        embed_items_backward(store, grads, &self.items, &self.cats, Some(&self.mask), d_emb)
    }
}

pub(crate) fn projection_names(prefix: &str) -> [String; 3] {
    [
        format!("{prefix}.query"),
        format!("{prefix}.key"),
        format!("{prefix}.value"),
    ]
}

#[derive(Debug, Clone)]
pub(crate) struct AttnCache {
    q: Vec<f64>,
    kp: Vec<f64>,
    vp: Vec<f64>,
    /// Attention weights `[queries × heads × k]`.
    w: Vec<f64>,
}

/// Multi-head target attention of `n_q` queries over grouped sequences.
///
/// Query `r` attends over group `groups[r]` of `seq`. Per head `h` the scores
/// are `(W_Q q)_h · (W_K s_k)_h` without scaling, the weights are a masked
/// softmax, and the head output is `Σ_k w_k (W_V s_k)_h`; heads are
/// concatenated. Queries whose group has no valid position output zeros.
pub(crate) fn attention_forward(
    store: &ParamStore,
    prefix: &str,
    heads: usize,
    query: &[f64],
    groups: &[usize],
    seq: &SeqEmb,
) -> Result<(Vec<f64>, AttnCache)> {
    let [qn, kn, vn] = projection_names(prefix);
    let (wq, wk, wv) = (store.value(&qn)?, store.value(&kn)?, store.value(&vn)?);
    let d = wq.shape()[0];
    if wq.shape() != [d, d] || wk.shape() != [d, d] || wv.shape() != [d, d] {
        return Err(Error::Config(format!("attention `{prefix}` needs square projections")));
    }
    if d % heads != 0 {
        return Err(Error::Config(format!("width {d} not divisible by {heads} heads")));
    }
    let n_q = groups.len();
    if query.len() != n_q * d || seq.emb.len() != seq.mask.len() * d {
        return Err(Error::Config(format!("attention `{prefix}` input widths do not match {d}")));
    }
    let dh = d / heads;
    let k = seq.k;
    let q = affine_forward(query, wq.data(), None, d, d);
    let mut kp = vec![0.0; seq.emb.len()];
    let mut vp = vec![0.0; seq.emb.len()];
    for (p, &m) in seq.mask.iter().enumerate() {
        if m {
            let x = &seq.emb[p * d..(p + 1) * d];
            kp[p * d..(p + 1) * d].copy_from_slice(&affine_forward(x, wk.data(), None, d, d));
            vp[p * d..(p + 1) * d].copy_from_slice(&affine_forward(x, wv.data(), None, d, d));
        }
    }
    let mut w = vec![0.0; n_q * heads * k];
    let mut out = vec![0.0; n_q * d];
    let mut scores = vec![0.0; k];
    for (r, &g) in groups.iter().enumerate() {
        let mask = &seq.mask[g * k..(g + 1) * k];
        if !mask.iter().any(|&m| m) {
            continue;
        }
        for h in 0..heads {
            let hs = h * dh..(h + 1) * dh;
            let qh = &q[r * d + hs.start..r * d + hs.end];
            for (p, s) in scores.iter_mut().enumerate() {
                *s = if mask[p] {
                    let base = (g * k + p) * d;
                    qh.iter().zip(&kp[base + hs.start..base + hs.end]).map(|(a, b)| a * b).sum()
                } else {
                    0.0
                };
            }
            let wr = &mut w[(r * heads + h) * k..(r * heads + h + 1) * k];
            masked_softmax_row(&scores, mask, wr);
            let dst = &mut out[r * d + hs.start..r * d + hs.end];
            for (p, &wt) in wr.iter().enumerate() {
                if wt == 0.0 {
                    continue;
                }
                let base = (g * k + p) * d;
                for (o, v) in dst.iter_mut().zip(&vp[base + hs.start..base + hs.end]) {
                    *o += wt * v;
                }
            }
        }
    }
    Ok((out, AttnCache { q, kp, vp, w }))
}

/// Backward of [`attention_forward`]; accumulates into `d_query` and `d_seq`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_backward(
    store: &ParamStore,
    prefix: &str,
    heads: usize,
    query: &[f64],
    groups: &[usize],
    seq: &SeqEmb,
    cache: &AttnCache,
    d_out: &[f64],
    grads: &mut Grads,
    d_query: &mut [f64],
    d_seq: &mut [f64],
) -> Result<()> {
    let [qn, kn, vn] = projection_names(prefix);
    let d = store.value(&qn)?.shape()[0];
    let dh = d / heads;
    let k = seq.k;
    let mut dq = vec![0.0; cache.q.len()];
    let mut dkp = vec![0.0; cache.kp.len()];
    let mut dvp = vec![0.0; cache.vp.len()];
    let mut dw = vec![0.0; k];
    let mut ds = vec![0.0; k];
    for (r, &g) in groups.iter().enumerate() {
        for h in 0..heads {
            let hs = h * dh..(h + 1) * dh;
            let wr = &cache.w[(r * heads + h) * k..(r * heads + h + 1) * k];
            let go = &d_out[r * d + hs.start..r * d + hs.end];
            if go.iter().all(|&v| v == 0.0) || wr.iter().all(|&v| v == 0.0) {
                continue;
            }
            for p in 0..k {
                let base = (g * k + p) * d;
                if wr[p] == 0.0 {
                    dw[p] = 0.0;
                    continue;
                }
                dw[p] = go.iter().zip(&cache.vp[base + hs.start..base + hs.end]).map(|(a, b)| a * b).sum();
                for (o, gv) in dvp[base + hs.start..base + hs.end].iter_mut().zip(go) {
                    *o += wr[p] * gv;
                }
            }
            ds.iter_mut().for_each(|v| *v = 0.0);
            softmax_backward_row(wr, &dw, &mut ds);
            let qh = &cache.q[r * d + hs.start..r * d + hs.end];
            for p in 0..k {
                if ds[p] == 0.0 {
                    continue;
                }
                let base = (g * k + p) * d;
                let kh = &cache.kp[base + hs.start..base + hs.end];
                for (o, kv) in dq[r * d + hs.start..r * d + hs.end].iter_mut().zip(kh) {
                    *o += ds[p] * kv;
                }
                for (o, qv) in dkp[base + hs.start..base + hs.end].iter_mut().zip(qh) {
                    *o += ds[p] * qv;
                }
            }
        }
    }
    let wq = store.value(&qn)?.data();
    affine_backward(query, wq, &dq, d, d, Some(d_query), Some(grads.slot(store, &qn)?), None);
    let wk = store.value(&kn)?.data();
    affine_backward(&seq.emb, wk, &dkp, d, d, Some(&mut *d_seq), Some(grads.slot(store, &kn)?), None);
    let wv = store.value(&vn)?.data();
    affine_backward(&seq.emb, wv, &dvp, d, d, Some(d_seq), Some(grads.slot(store, &vn)?), None);
    Ok(())
}

/// Multi-head target attention of one query per sequence.
///
/// `query` is `[batch × d]`, `seq` is `[batch × K × d]` with a `[batch × K]`
/// mask; projections are read from `{prefix}.query|key|value` (`[d × d]`,
/// head `i` owning output columns `i·d/n .. (i+1)·d/n`).
pub fn target_attention(
    store: &ParamStore,
    prefix: &str,
    n_heads: usize,
    query: &Tensor,
    seq: &Tensor,
    mask: &[bool],
) -> Result<Tensor> {
    let shape = seq.shape();
    if shape.len() != 3 || shape[0] != query.rows() || shape[2] != query.cols() || mask.len() != shape[0] * shape[1] {
        return Err(Error::Config(format!(
            "target_attention: query {:?}, sequence {:?}, mask {} are inconsistent",
            query.shape(),
            shape,
            mask.len()
        )));
    }
    let mut emb = seq.data().to_vec();
    let d = shape[2];
    for (p, &m) in mask.iter().enumerate() {
        if !m {
            emb[p * d..(p + 1) * d].iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let s = SeqEmb {
        items: vec![0; mask.len()],
        cats: vec![0; mask.len()],
        mask: mask.to_vec(),
        k: shape[1],
        emb,
    };
    let groups: Vec<usize> = (0..shape[0]).collect();
    let (out, _) = attention_forward(store, prefix, n_heads, query.data(), &groups, &s)?;
    Tensor::from_vec(&[shape[0], d], out)
}
