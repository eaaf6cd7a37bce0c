//! The intention net, trigger-aware net, trigger-free net and their fusion.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::{
    attention_backward, attention_forward, embed_items, embed_items_backward, gather_rows,
    projection_names, scatter_rows, AttnCache, SeqEmb, CATEGORY_TABLE, ITEM_TABLE,
};
use super::config::{ModelConfig, Variant};
use crate::datamodel::{EncodedBatch, Vocab};
use crate::error::{Error, Result};
use crate::numerics::init::{embedding_uniform, glorot_uniform};
use crate::numerics::kernels::{average_pool_backward, mlp_backward, mlp_forward, mlp_param_shapes, sigmoid, MlpCache};
use crate::numerics::{Grads, ParamStore, Tensor};

pub const USER_TABLE: &str = "emb.user";
pub const AGE_TABLE: &str = "emb.age";
pub const OCCUPATION_TABLE: &str = "emb.occupation";
pub const VISIT_TABLE: &str = "emb.visit";
pub const STAY_TABLE: &str = "emb.stay";

pub const INTENT_MLP: &str = "intent.mlp";
pub const TAN_MLP: &str = "tan.mlp";
pub const TFN_MLP: &str = "tfn.mlp";

pub const TAN_TRIGGER_SHORT: &str = "tan.trigger_short";
pub const TAN_TRIGGER_LONG: &str = "tan.trigger_long";
pub const TAN_TARGET_SHORT: &str = "tan.target_short";
pub const TAN_TARGET_LONG: &str = "tan.target_long";
pub const TFN_TARGET_SHORT: &str = "tfn.target_short";
pub const TFN_TARGET_LONG: &str = "tfn.target_long";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Embedding,
    Glorot,
    Zeros,
}

/// Per-row outputs of a forward pass.
///
/// Missing sub-nets (per [`Variant`]) leave their fields `None`. Interest
/// vectors are kept for inspection: `h_tri` per session, the others per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub variant: Variant,
    pub y_hat: Vec<f64>,
    pub y_int: Option<Vec<f64>>,
    pub y_tan: Option<Vec<f64>>,
    pub y_tfn: Option<Vec<f64>>,
    pub h_tri: Option<Tensor>,
    pub h_tar: Option<Tensor>,
    pub h_tar_tfn: Option<Tensor>,
}

struct IntentCache {
    x: Tensor,
    mlp: MlpCache,
    y: Vec<f64>,
}

struct TanCache {
    tri_long: SeqEmb,
    tri_short_attn: AttnCache,
    tri_long_attn: AttnCache,
    tar_short_attn: AttnCache,
    tar_long_attn: AttnCache,
    x: Tensor,
    mlp: MlpCache,
}

struct TfnCache {
    tar_short_attn: AttnCache,
    tar_long_attn: AttnCache,
    x: Tensor,
    mlp: MlpCache,
}

/// Activations retained for [`DianModel::backward`].
pub struct ForwardCache {
    e_tri: Vec<f64>,
    e_tar: Vec<f64>,
    short: SeqEmb,
    tar_long: SeqEmb,
    intent: Option<IntentCache>,
    tan: Option<TanCache>,
    tfn: Option<TfnCache>,
}

/// One column block of a row-wise concatenation: source rows of `width`
/// values, optionally indirected through a row→source map.
struct Block<'a> {
    src: &'a [f64],
    width: usize,
    map: Option<&'a [usize]>,
}

fn concat_rows(n: usize, blocks: &[Block]) -> Tensor {
    let total: usize = blocks.iter().map(|b| b.width).sum();
    let mut out = Vec::with_capacity(n * total);
    for r in 0..n {
        for b in blocks {
            let s = b.map.map_or(r, |m| m[r]);
            out.extend_from_slice(&b.src[s * b.width..(s + 1) * b.width]);
        }
    }
    Tensor::from_vec(&[n, total], out).expect("sized")
}

/// Accumulates column blocks of `d` back into their (possibly indirected) sources.
fn split_rows(d: &Tensor, targets: &mut [(&mut [f64], usize, Option<&[usize]>)]) {
    for r in 0..d.rows() {
        let row = d.row(r);
        let mut off = 0;
        for (dst, width, map) in targets.iter_mut() {
            let s = map.map_or(r, |m| m[r]);
            for (o, g) in dst[s * *width..(s + 1) * *width].iter_mut().zip(&row[off..off + *width]) {
                *o += g;
            }
            off += *width;
        }
    }
}

fn add_into(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

fn mlp_logits(store: &ParamStore, prefix: &str, x: &Tensor) -> Result<(Vec<f64>, MlpCache)> {
    let (out, cache) = mlp_forward(store, prefix, x)?;
    Ok((out.into_vec(), cache))
}

/// The assembled network for one [`Variant`].
#[derive(Debug, Clone, PartialEq)]
pub struct DianModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
}

impl DianModel {
    pub fn new(config: ModelConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        vocab.validate()?;
        Ok(DianModel { config, vocab })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    fn intent_input_width(&self) -> usize {
        let c = &self.config;
        c.d_user_total() + c.d_item() + 2 * c.d_cross + c.d_item()
    }

    fn tan_input_width(&self) -> usize {
        self.config.d_user_total() + 4 * self.config.d_item()
    }

    fn tfn_input_width(&self) -> usize {
        self.config.d_user_total() + 2 * self.config.d_item()
    }

    fn mlp_dims(&self, input: usize) -> Vec<usize> {
        std::iter::once(input)
            .chain(self.config.mlp_hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect()
    }

    /// Every parameter of this variant with its shape and initializer, in a
    /// fixed order.
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>, InitKind)> {
        let c = &self.config;
        let v = self.vocab;
        let d = c.d_item();
        let mut specs = vec![
            (ITEM_TABLE.to_string(), vec![v.item, c.d_id], InitKind::Embedding),
            (CATEGORY_TABLE.to_string(), vec![v.category, c.d_cat], InitKind::Embedding),
            (USER_TABLE.to_string(), vec![v.user, c.d_user], InitKind::Embedding),
            (AGE_TABLE.to_string(), vec![v.age, c.d_profile], InitKind::Embedding),
            (OCCUPATION_TABLE.to_string(), vec![v.occupation, c.d_profile], InitKind::Embedding),
        ];
        let mlp = |specs: &mut Vec<_>, prefix: &str, input: usize| {
            for (name, shape) in mlp_param_shapes(prefix, &self.mlp_dims(input)) {
                let kind = if shape.len() == 2 { InitKind::Glorot } else { InitKind::Zeros };
                specs.push((name, shape, kind));
            }
        };
        let attn = |specs: &mut Vec<_>, prefix: &str| {
            for name in projection_names(prefix) {
                specs.push((name, vec![d, d], InitKind::Glorot));
            }
        };
        if self.variant().has_intention_net() {
            specs.push((VISIT_TABLE.to_string(), vec![v.visit, c.d_cross], InitKind::Embedding));
            specs.push((STAY_TABLE.to_string(), vec![v.stay, c.d_cross], InitKind::Embedding));
            mlp(&mut specs, INTENT_MLP, self.intent_input_width());
        }
        if self.variant().has_tan() {
            for p in [TAN_TRIGGER_SHORT, TAN_TRIGGER_LONG, TAN_TARGET_SHORT, TAN_TARGET_LONG] {
                attn(&mut specs, p);
            }
            mlp(&mut specs, TAN_MLP, self.tan_input_width());
        }
        if self.variant().has_tfn() {
            for p in [TFN_TARGET_SHORT, TFN_TARGET_LONG] {
                attn(&mut specs, p);
            }
            mlp(&mut specs, TFN_MLP, self.tfn_input_width());
        }
        specs
    }

    /// Freshly initialized parameters, deterministic in `config.init_seed`.
    pub fn init_params(&self) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.init_seed);
        let mut store = ParamStore::new();
        for (name, shape, kind) in self.param_specs() {
            let t = match kind {
                InitKind::Embedding => embedding_uniform(shape[0], shape[1], &mut rng),
                InitKind::Glorot => glorot_uniform(shape[0], shape[1], &mut rng),
                InitKind::Zeros => Tensor::zeros(&shape),
            };
            store.insert(name, t).expect("unique parameter names");
        }
        store
    }

    /// Checks that `store` holds exactly this variant's parameters with the
    /// expected shapes.
    pub fn check_store(&self, store: &ParamStore) -> Result<()> {
        let specs = self.param_specs();
        for (name, shape, _) in &specs {
            let got = store
                .value(name)
                .map_err(|_| Error::Checkpoint(format!("missing table `{name}`")))?;
            if got.shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "table `{name}` has shape {:?}, expected {:?}",
                    got.shape(),
                    shape
                )));
            }
        }
        if store.len() != specs.len() {
            let extra: Vec<&str> = store
                .names()
                .filter(|n| !specs.iter().any(|(s, _, _)| s == n))
                .collect();
            return Err(Error::Checkpoint(format!("unexpected tables {extra:?}")));
        }
        Ok(())
    }

    fn check_batch(&self, batch: &EncodedBatch) -> Result<()> {
        if batch.k_short != self.config.k_short || batch.k_long != self.config.k_long {
            return Err(Error::Config(format!(
                "batch encoded with caps ({}, {}), model expects ({}, {})",
                batch.k_short, batch.k_long, self.config.k_short, self.config.k_long
            )));
        }
        Ok(())
    }

    fn user_embedding(&self, store: &ParamStore, batch: &EncodedBatch) -> Result<Vec<f64>> {
        let u = gather_rows(store, USER_TABLE, &batch.user)?;
        let a = gather_rows(store, AGE_TABLE, &batch.age)?;
        let o = gather_rows(store, OCCUPATION_TABLE, &batch.occupation)?;
        let c = &self.config;
        let n = batch.num_sessions();
        Ok(concat_rows(
            n,
            &[
                Block { src: &u, width: c.d_user, map: None },
                Block { src: &a, width: c.d_profile, map: None },
                Block { src: &o, width: c.d_profile, map: None },
            ],
        )
        .into_vec())
    }

    pub fn forward(&self, store: &ParamStore, batch: &EncodedBatch) -> Result<ForwardTrace> {
        self.forward_with_cache(store, batch).map(|(t, _)| t)
    }

    pub fn forward_with_cache(&self, store: &ParamStore, batch: &EncodedBatch) -> Result<(ForwardTrace, ForwardCache)> {
        self.check_batch(batch)?;
        let c = &self.config;
        let variant = c.variant;
        let heads = c.n_heads;
        let d = c.d_item();
        let n_s = batch.num_sessions();
        let n_r = batch.num_rows();
        let sessions: Vec<usize> = (0..n_s).collect();
        let rows: Vec<usize> = (0..n_r).collect();
        let rs = batch.row_session.as_slice();

        let e_user = self.user_embedding(store, batch)?;
        let e_tri = embed_items(store, &batch.trigger_item, &batch.trigger_cat)?.into_vec();
        let e_tar = embed_items(store, &batch.target_item, &batch.target_cat)?.into_vec();
        let short = SeqEmb::build(
            store,
            batch.short_items.clone(),
            batch.short_cats.clone(),
            batch.short_mask.clone(),
            batch.k_short,
        )?;
        let target_anchors: Vec<(usize, usize)> = rs.iter().copied().zip(batch.target_cat.iter().copied()).collect();
        let tar_long = SeqEmb::hard_searched(
            store,
            &batch.long_items,
            &batch.long_cats,
            &batch.long_mask,
            batch.k_long,
            &target_anchors,
            c.hard_search_k,
        )?;

        let intent = if variant.has_intention_net() {
            let pool = crate::numerics::average_pool(
                &Tensor::from_vec(&[n_s, batch.k_short, d], short.emb.clone())?,
                &short.mask,
            )?
            .into_vec();
            let visit = gather_rows(store, VISIT_TABLE, &batch.visit)?;
            let stay = gather_rows(store, STAY_TABLE, &batch.stay)?;
            let x = concat_rows(
                n_s,
                &[
                    Block { src: &e_user, width: c.d_user_total(), map: None },
                    Block { src: &pool, width: d, map: None },
                    Block { src: &visit, width: c.d_cross, map: None },
                    Block { src: &stay, width: c.d_cross, map: None },
                    Block { src: &e_tri, width: d, map: None },
                ],
            );
            let (z, mlp) = mlp_logits(store, INTENT_MLP, &x)?;
            let y = z.iter().map(|&v| sigmoid(v)).collect();
            Some(IntentCache { x, mlp, y })
        } else {
            None
        };

        let mut h_tri_out = None;
        let mut h_tar_out = None;
        let tan = if variant.has_tan() {
            let trigger_anchors: Vec<(usize, usize)> = (0..n_s).zip(batch.trigger_cat.iter().copied()).collect();
            let tri_long = SeqEmb::hard_searched(
                store,
                &batch.long_items,
                &batch.long_cats,
                &batch.long_mask,
                batch.k_long,
                &trigger_anchors,
                c.hard_search_k,
            )?;
            let (mut h_tri, tri_short_attn) = attention_forward(store, TAN_TRIGGER_SHORT, heads, &e_tri, &sessions, &short)?;
            let (h_tri_l, tri_long_attn) = attention_forward(store, TAN_TRIGGER_LONG, heads, &e_tri, &sessions, &tri_long)?;
            add_into(&mut h_tri, &h_tri_l);
            let (mut h_tar, tar_short_attn) = attention_forward(store, TAN_TARGET_SHORT, heads, &e_tar, rs, &short)?;
            let (h_tar_l, tar_long_attn) = attention_forward(store, TAN_TARGET_LONG, heads, &e_tar, &rows, &tar_long)?;
            add_into(&mut h_tar, &h_tar_l);
            let x = concat_rows(
                n_r,
                &[
                    Block { src: &e_user, width: c.d_user_total(), map: Some(rs) },
                    Block { src: &e_tri, width: d, map: Some(rs) },
                    Block { src: &e_tar, width: d, map: None },
                    Block { src: &h_tri, width: d, map: Some(rs) },
                    Block { src: &h_tar, width: d, map: None },
                ],
            );
            let (z, mlp) = mlp_logits(store, TAN_MLP, &x)?;
            h_tri_out = Some(Tensor::from_vec(&[n_s, d], h_tri)?);
            h_tar_out = Some(Tensor::from_vec(&[n_r, d], h_tar)?);
            Some((
                z.iter().map(|&v| sigmoid(v)).collect::<Vec<f64>>(),
                TanCache {
                    tri_long,
                    tri_short_attn,
                    tri_long_attn,
                    tar_short_attn,
                    tar_long_attn,
                    x,
                    mlp,
                },
            ))
        } else {
            None
        };

        let mut h_tfn_out = None;
        let tfn = if variant.has_tfn() {
            let (mut h, tar_short_attn) = attention_forward(store, TFN_TARGET_SHORT, heads, &e_tar, rs, &short)?;
            let (h_l, tar_long_attn) = attention_forward(store, TFN_TARGET_LONG, heads, &e_tar, &rows, &tar_long)?;
            add_into(&mut h, &h_l);
            let x = concat_rows(
                n_r,
                &[
                    Block { src: &e_user, width: c.d_user_total(), map: Some(rs) },
                    Block { src: &e_tar, width: d, map: None },
                    Block { src: &h, width: d, map: None },
                ],
            );
            let (z, mlp) = mlp_logits(store, TFN_MLP, &x)?;
            h_tfn_out = Some(Tensor::from_vec(&[n_r, d], h)?);
            Some((
                z.iter().map(|&v| sigmoid(v)).collect::<Vec<f64>>(),
                TfnCache {
                    tar_short_attn,
                    tar_long_attn,
                    x,
                    mlp,
                },
            ))
        } else {
            None
        };

        let y_int: Option<Vec<f64>> = intent.as_ref().map(|ic| rs.iter().map(|&s| ic.y[s]).collect());
        let y_tan = tan.as_ref().map(|(y, _)| y.clone());
        let y_tfn = tfn.as_ref().map(|(y, _)| y.clone());
        let y_hat: Vec<f64> = match variant {
            Variant::Dian | Variant::NoIntentLoss => {
                let (yi, ya, yf) = (y_int.as_ref().unwrap(), y_tan.as_ref().unwrap(), y_tfn.as_ref().unwrap());
                (0..n_r).map(|r| yi[r] * ya[r] + (1.0 - yi[r]) * yf[r]).collect()
            }
            Variant::AvgFusion => {
                let (ya, yf) = (y_tan.as_ref().unwrap(), y_tfn.as_ref().unwrap());
                (0..n_r).map(|r| (ya[r] + yf[r]) / 2.0).collect()
            }
            Variant::TanOnly => y_tan.clone().unwrap(),
            Variant::TfnOnly => y_tfn.clone().unwrap(),
        };

        let trace = ForwardTrace {
            variant,
            y_hat,
            y_int,
            y_tan,
            y_tfn,
            h_tri: h_tri_out,
            h_tar: h_tar_out,
            h_tar_tfn: h_tfn_out,
        };
        let cache = ForwardCache {
            e_tri,
            e_tar,
            short,
            tar_long,
            intent,
            tan: tan.map(|(_, c)| c),
            tfn: tfn.map(|(_, c)| c),
        };
        Ok((trace, cache))
    }

    /// Backpropagates `∂L/∂y_hat` (and, when the intention net exists, a
    /// direct `∂L/∂y_int` per row) into parameter gradients.
    pub fn backward(
        &self,
        store: &ParamStore,
        batch: &EncodedBatch,
        cache: &ForwardCache,
        trace: &ForwardTrace,
        d_y_hat: &[f64],
        d_y_int: Option<&[f64]>,
    ) -> Result<Grads> {
        let c = &self.config;
        let variant = c.variant;
        let heads = c.n_heads;
        let d = c.d_item();
        let du = c.d_user_total();
        let n_s = batch.num_sessions();
        let n_r = batch.num_rows();
        let sessions: Vec<usize> = (0..n_s).collect();
        let rows: Vec<usize> = (0..n_r).collect();
        let rs = batch.row_session.as_slice();

        let mut dz_tan = vec![0.0; n_r];
        let mut dz_tfn = vec![0.0; n_r];
        let mut dz_int = vec![0.0; n_s];
        for r in 0..n_r {
            let g = d_y_hat[r];
            let (mut dy_tan, mut dy_tfn, mut dy_int) = (0.0, 0.0, 0.0);
            match variant {
                Variant::Dian | Variant::NoIntentLoss => {
                    let yi = trace.y_int.as_ref().unwrap()[r];
                    let ya = trace.y_tan.as_ref().unwrap()[r];
                    let yf = trace.y_tfn.as_ref().unwrap()[r];
                    dy_tan = g * yi;
                    dy_tfn = g * (1.0 - yi);
                    if c.intent_grad_through_fusion {
                        dy_int = g * (ya - yf);
                    }
                    if let Some(di) = d_y_int {
                        dy_int += di[r];
                    }
                }
                Variant::AvgFusion => {
                    dy_tan = g / 2.0;
                    dy_tfn = g / 2.0;
                }
                Variant::TanOnly => dy_tan = g,
                Variant::TfnOnly => dy_tfn = g,
            }
            if let Some(y) = &trace.y_tan {
                dz_tan[r] = dy_tan * y[r] * (1.0 - y[r]);
            }
            if let Some(y) = &trace.y_tfn {
                dz_tfn[r] = dy_tfn * y[r] * (1.0 - y[r]);
            }
            if let Some(y) = &trace.y_int {
                dz_int[rs[r]] += dy_int * y[r] * (1.0 - y[r]);
            }
        }

        let mut grads = Grads::new();
        let mut d_user = vec![0.0; n_s * du];
        let mut d_tri = vec![0.0; n_s * d];
        let mut d_tar = vec![0.0; n_r * d];
        let mut d_short = vec![0.0; cache.short.emb.len()];
        let mut d_tar_long = vec![0.0; cache.tar_long.emb.len()];

        if let Some(tc) = &cache.tan {
            let dz = Tensor::from_vec(&[n_r, 1], dz_tan)?;
            let dx = mlp_backward(store, TAN_MLP, &tc.mlp, &dz, &mut grads)?;
            let mut d_htri = vec![0.0; n_s * d];
            let mut d_htar = vec![0.0; n_r * d];
            split_rows(
                &dx,
                &mut [
                    (&mut d_user, du, Some(rs)),
                    (&mut d_tri, d, Some(rs)),
                    (&mut d_tar, d, None),
                    (&mut d_htri, d, Some(rs)),
                    (&mut d_htar, d, None),
                ],
            );
            debug_assert_eq!(tc.x.cols(), self.tan_input_width());
            attention_backward(store, TAN_TARGET_SHORT, heads, &cache.e_tar, rs, &cache.short, &tc.tar_short_attn, &d_htar, &mut grads, &mut d_tar, &mut d_short)?;
            attention_backward(store, TAN_TARGET_LONG, heads, &cache.e_tar, &rows, &cache.tar_long, &tc.tar_long_attn, &d_htar, &mut grads, &mut d_tar, &mut d_tar_long)?;
            attention_backward(store, TAN_TRIGGER_SHORT, heads, &cache.e_tri, &sessions, &cache.short, &tc.tri_short_attn, &d_htri, &mut grads, &mut d_tri, &mut d_short)?;
            let mut d_tri_long = vec![0.0; tc.tri_long.emb.len()];
            attention_backward(store, TAN_TRIGGER_LONG, heads, &cache.e_tri, &sessions, &tc.tri_long, &tc.tri_long_attn, &d_htri, &mut grads, &mut d_tri, &mut d_tri_long)?;
            tc.tri_long.backward(store, &mut grads, &d_tri_long)?;
        }

        if let Some(fc) = &cache.tfn {
            let dz = Tensor::from_vec(&[n_r, 1], dz_tfn)?;
            let dx = mlp_backward(store, TFN_MLP, &fc.mlp, &dz, &mut grads)?;
            let mut d_h = vec![0.0; n_r * d];
            split_rows(
                &dx,
                &mut [(&mut d_user, du, Some(rs)), (&mut d_tar, d, None), (&mut d_h, d, None)],
            );
            debug_assert_eq!(fc.x.cols(), self.tfn_input_width());
            attention_backward(store, TFN_TARGET_SHORT, heads, &cache.e_tar, rs, &cache.short, &fc.tar_short_attn, &d_h, &mut grads, &mut d_tar, &mut d_short)?;
            attention_backward(store, TFN_TARGET_LONG, heads, &cache.e_tar, &rows, &cache.tar_long, &fc.tar_long_attn, &d_h, &mut grads, &mut d_tar, &mut d_tar_long)?;
        }

        if let Some(ic) = &cache.intent {
            let dz = Tensor::from_vec(&[n_s, 1], dz_int)?;
            let dx = mlp_backward(store, INTENT_MLP, &ic.mlp, &dz, &mut grads)?;
            debug_assert_eq!(ic.x.cols(), self.intent_input_width());
            let mut d_pool = vec![0.0; n_s * d];
            let mut d_visit = vec![0.0; n_s * c.d_cross];
            let mut d_stay = vec![0.0; n_s * c.d_cross];
            split_rows(
                &dx,
                &mut [
                    (&mut d_user, du, None),
                    (&mut d_pool, d, None),
                    (&mut d_visit, c.d_cross, None),
                    (&mut d_stay, c.d_cross, None),
                    (&mut d_tri, d, None),
                ],
            );
            average_pool_backward(&d_pool, &cache.short.mask, batch.k_short, d, &mut d_short);
            scatter_rows(store, &mut grads, VISIT_TABLE, &batch.visit, &d_visit)?;
            scatter_rows(store, &mut grads, STAY_TABLE, &batch.stay, &d_stay)?;
        }

        cache.short.backward(store, &mut grads, &d_short)?;
        cache.tar_long.backward(store, &mut grads, &d_tar_long)?;
        embed_items_backward(store, &mut grads, &batch.trigger_item, &batch.trigger_cat, None, &d_tri)?;
        embed_items_backward(store, &mut grads, &batch.target_item, &batch.target_cat, None, &d_tar)?;

        let mut du_id = vec![0.0; n_s * c.d_user];
        let mut du_age = vec![0.0; n_s * c.d_profile];
        let mut du_occ = vec![0.0; n_s * c.d_profile];
        split_rows(
            &Tensor::from_vec(&[n_s, du], d_user)?,
            &mut [
                (&mut du_id, c.d_user, None),
                (&mut du_age, c.d_profile, None),
                (&mut du_occ, c.d_profile, None),
            ],
        );
        scatter_rows(store, &mut grads, USER_TABLE, &batch.user, &du_id)?;
        scatter_rows(store, &mut grads, AGE_TABLE, &batch.age, &du_age)?;
        scatter_rows(store, &mut grads, OCCUPATION_TABLE, &batch.occupation, &du_occ)?;
        Ok(grads)
    }
}
