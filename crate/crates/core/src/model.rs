//! Review-based rating model structured along the causal graph
//! `U -> Y`, `I -> Y`, `U -> S -> Y`, `I -> S -> Y`.
//!
//! * review encoder: word embeddings -> conv(5) -> ReLU -> maxpool(3, 3)
//!   -> FC -> dropout -> attention over pooled positions, giving `z_u`/`z_i`;
//! * review-only heads `y_u = f_u(z_u)`, `y_i = f_i(z_i)`;
//! * interaction branch `q_m = f_m(h_u * h_i)` on id embeddings;
//! * sentiment gate `s = f_s(z_u * z_i)`, `sigma(s)`;
//! * fused prediction `y_ui = q_m + y_u + y_i`, `y_uis = y_ui * sigma(s)`.
//!
//! One encoder (and one word-embedding table) serves both users and items.

use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamSet, Tensor, Var};
use crate::data::{Vocab, PAD};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CONV_WIDTH: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Word embedding width.
    pub d_w: usize,
    /// Id embedding width (`h_u`, `h_i`).
    pub d_h: usize,
    /// Conv channels.
    pub d_c: usize,
    /// Review representation width (`z_u`, `z_i`).
    pub d_z: usize,
    /// Attention hidden width.
    pub d_a: usize,
    /// Hidden width of the interaction head `f_m`.
    pub d_m: usize,
    pub pool_window: usize,
    pub pool_stride: usize,
    /// Drop probability for both dropout layers.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_w: 100,
            d_h: 32,
            d_c: 64,
            d_z: 64,
            d_a: 32,
            d_m: 32,
            pool_window: 3,
            pool_stride: 3,
            dropout: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.d_w, self.d_h, self.d_c, self.d_z, self.d_a, self.d_m];
        if dims.contains(&0) || self.pool_window == 0 || self.pool_stride == 0 {
            return Err(Error::InvalidArgument(format!("model dimensions must be positive: {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0,1)", self.dropout)));
        }
        Ok(())
    }
}

/// Whether dropout is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Handles of every named tensor inside [`Model::params`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamIds {
    pub word_emb: ParamId,
    pub user_emb: ParamId,
    pub item_emb: ParamId,
    pub conv_k: ParamId,
    pub conv_b: ParamId,
    pub fc_w: ParamId,
    pub fc_b: ParamId,
    pub att1_w: ParamId,
    pub att1_b: ParamId,
    pub att2_w: ParamId,
    pub att2_b: ParamId,
    pub fu_w: ParamId,
    pub fu_b: ParamId,
    pub fi_w: ParamId,
    pub fi_b: ParamId,
    pub fs_w: ParamId,
    pub fs_b: ParamId,
    pub fm1_w: ParamId,
    pub fm1_b: ParamId,
    pub fm2_w: ParamId,
    pub fm2_b: ParamId,
}

const NAMES: [&str; 21] = [
    "word_emb", "user_emb", "item_emb", "conv_k", "conv_b", "fc_w", "fc_b", "att1_w", "att1_b", "att2_w",
    "att2_b", "fu_w", "fu_b", "fi_w", "fi_b", "fs_w", "fs_b", "fm1_w", "fm1_b", "fm2_w", "fm2_b",
];

impl ParamIds {
    fn resolve(params: &ParamSet<impl Scalar>) -> Result<Self> {
        let get = |n: &str| {
            params
                .find(n)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter '{n}'")))
        };
        Ok(ParamIds {
            word_emb: get("word_emb")?,
            user_emb: get("user_emb")?,
            item_emb: get("item_emb")?,
            conv_k: get("conv_k")?,
            conv_b: get("conv_b")?,
            fc_w: get("fc_w")?,
            fc_b: get("fc_b")?,
            att1_w: get("att1_w")?,
            att1_b: get("att1_b")?,
            att2_w: get("att2_w")?,
            att2_b: get("att2_b")?,
            fu_w: get("fu_w")?,
            fu_b: get("fu_b")?,
            fi_w: get("fi_w")?,
            fi_b: get("fi_b")?,
            fs_w: get("fs_w")?,
            fs_b: get("fs_b")?,
            fm1_w: get("fm1_w")?,
            fm1_b: get("fm1_b")?,
            fm2_w: get("fm2_w")?,
            fm2_b: get("fm2_b")?,
        })
    }
}

/// Graph leaves for every parameter, indexed like the [`ParamSet`].
pub struct Leaves(Vec<Var>);

impl Leaves {
    /// Wraps leaves created elsewhere, one per parameter in order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Leaves(vars)
    }

    pub fn get(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

/// Per-pair forward outputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionBundle<T> {
    pub q_m: T,
    pub y_hat_u: T,
    pub y_hat_i: T,
    pub s_ui: T,
    pub sigma_s: T,
    pub y_hat_ui: T,
    pub y_hat_uis: T,
    pub y_debiased: Option<T>,
}

/// Graph handles for a batch forward pass; every output is a length-B vector.
#[derive(Clone, Copy, Debug)]
pub struct BatchVars {
    pub q_m: Var,
    pub y_hat_u: Var,
    pub y_hat_i: Var,
    pub s_ui: Var,
    pub sigma_s: Var,
    pub y_hat_ui: Var,
    pub y_hat_uis: Var,
}

impl BatchVars {
    pub fn bundles<T: Scalar>(&self, g: &Graph<'_, T>) -> Vec<PredictionBundle<T>> {
        let col = |v: Var| g.value(v).data().to_vec();
        let (q, yu, yi, s, sig, yui, yuis) = (
            col(self.q_m),
            col(self.y_hat_u),
            col(self.y_hat_i),
            col(self.s_ui),
            col(self.sigma_s),
            col(self.y_hat_ui),
            col(self.y_hat_uis),
        );
        (0..q.len())
            .map(|k| PredictionBundle {
                q_m: q[k],
                y_hat_u: yu[k],
                y_hat_i: yi[k],
                s_ui: s[k],
                sigma_s: sig[k],
                y_hat_ui: yui[k],
                y_hat_uis: yuis[k],
                y_debiased: None,
            })
            .collect()
    }
}

/// Eval-mode review representations for every user and item.
#[derive(Clone, Debug, PartialEq)]
pub struct Encodings<T> {
    pub users: Vec<Vec<T>>,
    pub items: Vec<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamSet<T>,
    pub ids: ParamIds,
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-bound..=bound))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape is consistent")
}

impl<T: Scalar> Model<T> {
    /// Seeded initialisation: weights and embeddings `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// (embedding fan-in taken as the row width), biases zero, PAD row zero.
    pub fn init(config: ModelConfig, vocab_size: usize, n_users: usize, n_items: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab_size < 2 || n_users == 0 || n_items == 0 {
            return Err(Error::InvalidArgument(format!(
                "vocab {vocab_size}, users {n_users}, items {n_items}"
            )));
        }
        let c = &config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv = |fan: usize| 1.0 / (fan as f64).sqrt();
        let zeros = |n: usize| Tensor::<T>::zeros(&[n]);
        let mut p = ParamSet::new();

        let mut words = uniform::<T>(&mut rng, &[vocab_size, c.d_w], inv(c.d_w));
        words.row_mut(PAD as usize).fill(T::zero());
        p.insert("word_emb", words);
        p.insert("user_emb", uniform(&mut rng, &[n_users, c.d_h], inv(c.d_h)));
        p.insert("item_emb", uniform(&mut rng, &[n_items, c.d_h], inv(c.d_h)));
        p.insert("conv_k", uniform(&mut rng, &[CONV_WIDTH, c.d_w, c.d_c], inv(CONV_WIDTH * c.d_w)));
        p.insert("conv_b", zeros(c.d_c));
        p.insert("fc_w", uniform(&mut rng, &[c.d_c, c.d_z], inv(c.d_c)));
        p.insert("fc_b", zeros(c.d_z));
        p.insert("att1_w", uniform(&mut rng, &[c.d_z, c.d_a], inv(c.d_z)));
        p.insert("att1_b", zeros(c.d_a));
        p.insert("att2_w", uniform(&mut rng, &[c.d_a, 1], inv(c.d_a)));
        p.insert("att2_b", zeros(1));
        for head in ["fu", "fi", "fs"] {
            p.insert(format!("{head}_w"), uniform(&mut rng, &[c.d_z, 1], inv(c.d_z)));
            p.insert(format!("{head}_b"), zeros(1));
        }
        p.insert("fm1_w", uniform(&mut rng, &[c.d_h, c.d_m], inv(c.d_h)));
        p.insert("fm1_b", zeros(c.d_m));
        p.insert("fm2_w", uniform(&mut rng, &[c.d_m, 1], inv(c.d_m)));
        p.insert("fm2_b", zeros(1));
        debug_assert_eq!(p.names(), NAMES);
        let ids = ParamIds::resolve(&p)?;
        Ok(Model { config, params: p, ids })
    }

    /// Rebuilds a model around an existing parameter set (e.g. a checkpoint).
    pub fn from_params(config: ModelConfig, params: ParamSet<T>) -> Result<Self> {
        config.validate()?;
        let ids = ParamIds::resolve(&params)?;
        let m = Model { config, params, ids };
        m.check_shapes()?;
        Ok(m)
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let p = |id: ParamId| self.params.get(id).shape();
        let ids = &self.ids;
        let expect = [
            (ids.conv_k, vec![CONV_WIDTH, c.d_w, c.d_c]),
            (ids.fc_w, vec![c.d_c, c.d_z]),
            (ids.att1_w, vec![c.d_z, c.d_a]),
            (ids.att2_w, vec![c.d_a, 1]),
            (ids.fu_w, vec![c.d_z, 1]),
            (ids.fi_w, vec![c.d_z, 1]),
            (ids.fs_w, vec![c.d_z, 1]),
            (ids.fm1_w, vec![c.d_h, c.d_m]),
            (ids.fm2_w, vec![c.d_m, 1]),
        ];
        for (id, shape) in expect {
            if p(id) != shape.as_slice() {
                return Err(Error::InvalidShape(format!(
                    "{} has shape {:?}, expected {shape:?}",
                    self.params.name(id),
                    p(id)
                )));
            }
        }
        if p(ids.word_emb)[1] != c.d_w || p(ids.user_emb)[1] != c.d_h || p(ids.item_emb)[1] != c.d_h {
            return Err(Error::InvalidShape("embedding widths disagree with the config".into()));
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.params.get(self.ids.user_emb).rows()
    }

    pub fn num_items(&self) -> usize {
        self.params.get(self.ids.item_emb).rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.params.get(self.ids.word_emb).rows()
    }

    /// Adds one leaf per parameter to `g`.
    pub fn leaves<'a>(&'a self, g: &mut Graph<'a, T>) -> Leaves {
        Leaves(self.params.tensors().iter().map(|t| g.leaf(t)).collect())
    }

    /// Review representation `z` for one token-id document.
    pub fn encode_entity<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        lv: &Leaves,
        doc: &[u32],
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        if doc.len() < CONV_WIDTH {
            return Err(Error::InvalidShape(format!(
                "document of {} tokens is shorter than the conv width {CONV_WIDTH}",
                doc.len()
            )));
        }
        let vocab = self.vocab_size();
        if let Some(&bad) = doc.iter().find(|&&t| t as usize >= vocab) {
            return Err(Error::InvalidIndex(format!("token id {bad} outside vocabulary of {vocab}")));
        }
        let ids = &self.ids;
        let c = &self.config;
        let rows: Vec<usize> = doc.iter().map(|&t| t as usize).collect();
        let emb = g.gather(lv.get(ids.word_emb), &rows)?;
        let conv = g.conv1d(emb, lv.get(ids.conv_k), lv.get(ids.conv_b))?;
        let conv = g.relu(conv);
        // Short documents collapse to a single pooled position.
        let conv_len = g.value(conv).rows();
        let pooled = g.maxpool1d(conv, c.pool_window.min(conv_len), c.pool_stride)?;
        let feats = g.linear(pooled, lv.get(ids.fc_w), lv.get(ids.fc_b))?;
        let feats = self.maybe_dropout(g, feats, mode, rng)?;
        let hidden = g.linear(feats, lv.get(ids.att1_w), lv.get(ids.att1_b))?;
        let hidden = g.relu(hidden);
        let hidden = self.maybe_dropout(g, hidden, mode, rng)?;
        let scores = g.linear(hidden, lv.get(ids.att2_w), lv.get(ids.att2_b))?;
        let positions = g.value(scores).rows();
        let scores = g.reshape(scores, vec![positions])?;
        let weights = g.softmax(scores)?;
        g.weighted_sum(weights, feats)
    }

    fn maybe_dropout<R: Rng + ?Sized>(&self, g: &mut Graph<'_, T>, x: Var, mode: Mode, rng: &mut R) -> Result<Var> {
        match mode {
            Mode::Train => g.dropout(x, self.config.dropout, rng),
            Mode::Eval => Ok(x),
        }
    }

    /// `q_m = f_m(h_u * h_i)` for each pair; returns a length-B vector.
    pub fn interaction_scores(&self, g: &mut Graph<'_, T>, lv: &Leaves, pairs: &[(usize, usize)]) -> Result<Var> {
        let (nu, ni) = (self.num_users(), self.num_items());
        if let Some(&(u, i)) = pairs.iter().find(|&&(u, i)| u >= nu || i >= ni) {
            return Err(Error::InvalidIndex(format!(
                "pair ({u}, {i}) outside {nu} users x {ni} items"
            )));
        }
        let ids = &self.ids;
        let us: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let is: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let hu = g.gather(lv.get(ids.user_emb), &us)?;
        let hi = g.gather(lv.get(ids.item_emb), &is)?;
        let prod = g.mul(hu, hi)?;
        let hidden = g.linear(prod, lv.get(ids.fm1_w), lv.get(ids.fm1_b))?;
        let hidden = g.relu(hidden);
        let q = g.linear(hidden, lv.get(ids.fm2_w), lv.get(ids.fm2_b))?;
        g.reshape(q, vec![pairs.len()])
    }

    /// `s = f_s(z_u * z_i)` and `sigma(s)` for stacked `[B x d_z]` inputs.
    pub fn sentiment_gate(&self, g: &mut Graph<'_, T>, lv: &Leaves, zu: Var, zi: Var) -> Result<(Var, Var)> {
        let prod = g.mul(zu, zi)?;
        let b = g.value(prod).rows();
        let s = g.linear(prod, lv.get(self.ids.fs_w), lv.get(self.ids.fs_b))?;
        let s = g.reshape(s, vec![b])?;
        let sigma = g.sigmoid(s);
        Ok((s, sigma))
    }

    /// Heads and fusion on already-stacked review representations.
    pub fn fuse(
        &self,
        g: &mut Graph<'_, T>,
        lv: &Leaves,
        zu: Var,
        zi: Var,
        pairs: &[(usize, usize)],
    ) -> Result<BatchVars> {
        let ids = &self.ids;
        let b = pairs.len();
        let yu = g.linear(zu, lv.get(ids.fu_w), lv.get(ids.fu_b))?;
        let y_hat_u = g.reshape(yu, vec![b])?;
        let yi = g.linear(zi, lv.get(ids.fi_w), lv.get(ids.fi_b))?;
        let y_hat_i = g.reshape(yi, vec![b])?;
        let q_m = self.interaction_scores(g, lv, pairs)?;
        let partial = g.add(q_m, y_hat_u)?;
        let y_hat_ui = g.add(partial, y_hat_i)?;
        let (s_ui, sigma_s) = self.sentiment_gate(g, lv, zu, zi)?;
        let y_hat_uis = g.mul(y_hat_ui, sigma_s)?;
        Ok(BatchVars {
            q_m,
            y_hat_u,
            y_hat_i,
            s_ui,
            sigma_s,
            y_hat_ui,
            y_hat_uis,
        })
    }

    /// Full forward pass for a batch of `(user, item)` pairs. Each distinct
    /// user and item document is encoded once per call.
    pub fn forward_batch<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        lv: &Leaves,
        docs: (&[Vec<u32>], &[Vec<u32>]),
        pairs: &[(usize, usize)],
        mode: Mode,
        rng: &mut R,
    ) -> Result<BatchVars> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let (user_docs, item_docs) = docs;
        let mut user_z: Vec<Option<Var>> = vec![None; user_docs.len()];
        let mut item_z: Vec<Option<Var>> = vec![None; item_docs.len()];
        let mut zu_rows = Vec::with_capacity(pairs.len());
        let mut zi_rows = Vec::with_capacity(pairs.len());
        for &(u, i) in pairs {
            if u >= user_docs.len() || i >= item_docs.len() {
                return Err(Error::InvalidIndex(format!("pair ({u}, {i}) has no document")));
            }
            let zu = match user_z[u] {
                Some(v) => v,
                None => {
                    let v = self.encode_entity(g, lv, &user_docs[u], mode, rng)?;
                    user_z[u] = Some(v);
                    v
                }
            };
            let zi = match item_z[i] {
                Some(v) => v,
                None => {
                    let v = self.encode_entity(g, lv, &item_docs[i], mode, rng)?;
                    item_z[i] = Some(v);
                    v
                }
            };
            zu_rows.push(zu);
            zi_rows.push(zi);
        }
        let zu = g.stack_rows(&zu_rows)?;
        let zi = g.stack_rows(&zi_rows)?;
        self.fuse(g, lv, zu, zi, pairs)
    }

    /// Single-pair forward pass.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        docs: (&[Vec<u32>], &[Vec<u32>]),
        user: usize,
        item: usize,
        mode: Mode,
        rng: &mut R,
    ) -> Result<PredictionBundle<T>> {
        let mut g = Graph::new();
        let lv = self.leaves(&mut g);
        let vars = self.forward_batch(&mut g, &lv, docs, &[(user, item)], mode, rng)?;
        Ok(vars.bundles(&g)[0])
    }

    /// Eval-mode `z` for one document.
    pub fn encode_doc(&self, doc: &[u32]) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let lv = self.leaves(&mut g);
        let z = self.encode_entity(&mut g, &lv, doc, Mode::Eval, &mut NoRng)?;
        Ok(g.value(z).data().to_vec())
    }

    pub fn encode_all(&self, user_docs: &[Vec<u32>], item_docs: &[Vec<u32>]) -> Result<Encodings<T>> {
        Ok(Encodings {
            users: user_docs.iter().map(|d| self.encode_doc(d)).collect::<Result<_>>()?,
            items: item_docs.iter().map(|d| self.encode_doc(d)).collect::<Result<_>>()?,
        })
    }

    /// Eval-mode bundles from cached encodings. Gives bit-identical results
    /// to [`Model::forward_batch`] in eval mode, independent of chunking.
    pub fn predict(&self, enc: &Encodings<T>, pairs: &[(usize, usize)]) -> Result<Vec<PredictionBundle<T>>> {
        const CHUNK: usize = 1024;
        let d = self.config.d_z;
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(CHUNK) {
            let mut g = Graph::new();
            let lv = self.leaves(&mut g);
            let mut zu = Vec::with_capacity(chunk.len() * d);
            let mut zi = Vec::with_capacity(chunk.len() * d);
            for &(u, i) in chunk {
                let (a, b) = (enc.users.get(u), enc.items.get(i));
                match (a, b) {
                    (Some(a), Some(b)) => {
                        zu.extend_from_slice(a);
                        zi.extend_from_slice(b);
                    }
                    _ => return Err(Error::InvalidIndex(format!("pair ({u}, {i}) has no encoding"))),
                }
            }
            let zu = g.constant(Tensor::matrix(chunk.len(), d, zu)?);
            let zi = g.constant(Tensor::matrix(chunk.len(), d, zi)?);
            let vars = self.fuse(&mut g, &lv, zu, zi, chunk)?;
            out.extend(vars.bundles(&g));
        }
        Ok(out)
    }

    /// Overwrites word-embedding rows from a text file of `token v1 .. v_dw`
    /// lines (an optional `count dim` header line is skipped). Returns the
    /// number of vocabulary rows that were filled; PAD stays zero.
    pub fn load_pretrained_embeddings(&mut self, path: &Path, vocab: &Vocab) -> Result<usize> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let d_w = self.config.d_w;
        let table = self.params.get_mut(self.ids.word_emb);
        let mut filled = 0;
        for (n, line) in std::io::BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values: Vec<&str> = parts.collect();
            if n == 0 && values.len() == 1 && token.parse::<usize>().is_ok() && values[0].parse::<usize>().is_ok() {
                continue;
            }
            if values.len() != d_w {
                return Err(Error::InvalidShape(format!(
                    "{} line {}: expected {d_w} values, got {}",
                    path.display(),
                    n + 1,
                    values.len()
                )));
            }
            if !vocab.contains(token) {
                continue;
            }
            let id = vocab.id(token);
            if id == PAD {
                continue;
            }
            let row = table.row_mut(id as usize);
            for (dst, v) in row.iter_mut().zip(values) {
                let x: f64 = v.parse().map_err(|_| {
                    Error::InvalidArgument(format!("{} line {}: '{v}' is not a number", path.display(), n + 1))
                })?;
                *dst = T::lit(x);
            }
            filled += 1;
        }
        Ok(filled)
    }
}

/// Random source for eval mode, where dropout never draws.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("eval mode does not sample")
    }

    fn next_u64(&mut self) -> u64 {
        unreachable!("eval mode does not sample")
    }

    fn fill_bytes(&mut self, _dst: &mut [u8]) {
        unreachable!("eval mode does not sample")
    }
}
