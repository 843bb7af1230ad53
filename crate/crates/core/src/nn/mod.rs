//! Small vision-transformer classifier over spectrogram tokens, with
//! hand-written reverse-mode gradients.
//!
//! ```text
//! H0      = X W_p + b_p + P                      (one token per MDS bin)
//! block:  H1 = H + MHA(LN1(H))
//!         H' = H1 + W2 gelu(W1 LN2(H1) + b1) + b2
//! logits  = mean_t(H_L) W_h + b_h
//! loss    = CE(softmax(logits), y) + lambda |Phi|^2
//! ```
//!
//! All trainable tensors live in one flat `Vec<f64>`; [`Layout`] maps names
//! to offsets. Gradients use the same layout.

mod adam;
mod checkpoint;
pub mod mat;

pub use adam::{adam_step, AdamConfig, OptState};
pub use checkpoint::{load_checkpoint, save_checkpoint};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use mat::{gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, softmax, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Mean of the final token states.
    #[default]
    Mean,
    /// A learned token prepended to the sequence; its final state feeds the head.
    ClassToken,
}

impl Pooling {
    pub fn name(self) -> &'static str {
        match self {
            Pooling::Mean => "mean",
            Pooling::ClassToken => "class-token",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(Pooling::Mean),
            "class-token" => Some(Pooling::ClassToken),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Tokens per sample (MDS bins).
    pub n_tokens: usize,
    /// Values per token (`N_fft^2`).
    pub d_in: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub mlp_ratio: usize,
    pub n_classes: usize,
    /// L2 coefficient `lambda`.
    pub weight_decay: f64,
    /// Apply L2 to biases, LayerNorm and embeddings as well as weights.
    pub decay_all: bool,
    pub pooling: Pooling,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_tokens: 16,
            d_in: 128 * 128,
            d_model: 64,
            n_heads: 4,
            n_blocks: 2,
            mlp_ratio: 4,
            n_classes: 3,
            weight_decay: 0.01,
            decay_all: true,
            pooling: Pooling::Mean,
        }
    }
}

const MAX_DIM: usize = 1 << 24;

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_tokens", self.n_tokens),
            ("d_in", self.d_in),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("mlp_ratio", self.mlp_ratio),
            ("n_classes", self.n_classes),
        ];
        for (name, v) in dims {
            if v == 0 || v > MAX_DIM {
                return Err(Error::config(format!("model.{name} must be in 1..={MAX_DIM}, got {v}")));
            }
        }
        if self.n_blocks > 1024 {
            return Err(Error::config("model.n_blocks must be at most 1024"));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::config(format!(
                "model.d_model {} is not divisible by model.n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("model.weight_decay must be non-negative"));
        }
        if param_count(self).is_none() {
            return Err(Error::config("model is too large"));
        }
        Ok(())
    }

    fn seq_len(&self) -> usize {
        self.n_tokens + usize::from(self.pooling == Pooling::ClassToken)
    }
}

/// Trainable parameter count, `None` on overflow.
pub fn param_count(cfg: &ModelConfig) -> Option<usize> {
    let d = cfg.d_model;
    let f = d.checked_mul(cfg.mlp_ratio)?;
    let linear = |i: usize, o: usize| i.checked_mul(o)?.checked_add(o);
    let patch = linear(cfg.d_in, d)?;
    let pos = cfg.n_tokens.checked_mul(d)?;
    let cls = if cfg.pooling == Pooling::ClassToken { d } else { 0 };
    let block = (4 * d)
        .checked_add(linear(d, d)?.checked_mul(4)?)?
        .checked_add(linear(d, f)?)?
        .checked_add(linear(f, d)?)?;
    let head = linear(d, cfg.n_classes)?;
    patch
        .checked_add(pos)?
        .checked_add(cls)?
        .checked_add(block.checked_mul(cfg.n_blocks)?)?
        .checked_add(head)
}

/// Position of one tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    #[inline]
    pub fn of<'a>(&self, v: &'a [f64]) -> &'a [f64] {
        &v[self.range()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Weight,
    Bias,
    NormGain,
    NormBias,
    Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSlots {
    pub ln1_g: Slot,
    pub ln1_b: Slot,
    pub wq: Slot,
    pub bq: Slot,
    pub wk: Slot,
    pub bk: Slot,
    pub wv: Slot,
    pub bv: Slot,
    pub wo: Slot,
    pub bo: Slot,
    pub ln2_g: Slot,
    pub ln2_b: Slot,
    pub w1: Slot,
    pub b1: Slot,
    pub w2: Slot,
    pub b2: Slot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub patch_w: Slot,
    pub patch_b: Slot,
    pub pos: Slot,
    pub cls: Option<Slot>,
    pub blocks: Vec<BlockSlots>,
    pub head_w: Slot,
    pub head_b: Slot,
    pub total: usize,
    pub entries: Vec<(String, Slot, Role)>,
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Self {
        let mut entries = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize, role: Role| {
            let s = Slot { offset, rows, cols };
            offset += s.len();
            entries.push((name, s, role));
            s
        };
        let d = cfg.d_model;
        let f = d * cfg.mlp_ratio;
        let patch_w = push("patch.w".into(), cfg.d_in, d, Role::Weight);
        let patch_b = push("patch.b".into(), 1, d, Role::Bias);
        let pos = push("pos".into(), cfg.n_tokens, d, Role::Embedding);
        let cls = (cfg.pooling == Pooling::ClassToken).then(|| push("cls".into(), 1, d, Role::Embedding));
        let blocks = (0..cfg.n_blocks)
            .map(|l| {
                let mut p = |n: &str, rows, cols, role| push(format!("block.{l}.{n}"), rows, cols, role);
                BlockSlots {
                    ln1_g: p("ln1.gamma", 1, d, Role::NormGain),
                    ln1_b: p("ln1.beta", 1, d, Role::NormBias),
                    wq: p("attn.wq", d, d, Role::Weight),
                    bq: p("attn.bq", 1, d, Role::Bias),
                    wk: p("attn.wk", d, d, Role::Weight),
                    bk: p("attn.bk", 1, d, Role::Bias),
                    wv: p("attn.wv", d, d, Role::Weight),
                    bv: p("attn.bv", 1, d, Role::Bias),
                    wo: p("attn.wo", d, d, Role::Weight),
                    bo: p("attn.bo", 1, d, Role::Bias),
                    ln2_g: p("ln2.gamma", 1, d, Role::NormGain),
                    ln2_b: p("ln2.beta", 1, d, Role::NormBias),
                    w1: p("mlp.w1", d, f, Role::Weight),
                    b1: p("mlp.b1", 1, f, Role::Bias),
                    w2: p("mlp.w2", f, d, Role::Weight),
                    b2: p("mlp.b2", 1, d, Role::Bias),
                }
            })
            .collect();
        let head_w = push("head.w".into(), d, cfg.n_classes, Role::Weight);
        let head_b = push("head.b".into(), 1, cfg.n_classes, Role::Bias);
        Self {
            patch_w,
            patch_b,
            pos,
            cls,
            blocks,
            head_w,
            head_b,
            total: offset,
            entries,
        }
    }
}

/// Two disjoint mutable windows of `buf`; `a` must precede `b`.
fn two_mut(buf: &mut [f64], a: Slot, b: Slot) -> (&mut [f64], &mut [f64]) {
    assert!(a.offset + a.len() <= b.offset);
    let (lo, hi) = buf.split_at_mut(b.offset);
    (&mut lo[a.range()], &mut hi[..b.len()])
}

fn pair<'a>(grads: &'a mut Option<&mut [f64]>, a: Slot, b: Slot) -> Option<(&'a mut [f64], &'a mut [f64])> {
    grads.as_deref_mut().map(|g| two_mut(g, a, b))
}

/// Activations of one transformer block.
#[derive(Debug, Clone)]
pub struct BlockTape {
    pub input: Mat,
    xhat1: Mat,
    rstd1: Vec<f64>,
    ln1: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Attention weights per head, `[query, key]`.
    pub attention: Vec<Mat>,
    ctx: Mat,
    xhat2: Mat,
    rstd2: Vec<f64>,
    ln2: Mat,
    u: Mat,
    g: Mat,
    pub output: Mat,
}

/// Everything the backward pass and Grad-CAM need from a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    pub embedded: Mat,
    pub blocks: Vec<BlockTape>,
    pub pooled: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Tape {
    /// Output of block `l` (zero-based), one row per sequence position.
    pub fn block_output(&self, l: usize) -> &Mat {
        &self.blocks[l].output
    }
}

/// Numerically stable cross-entropy. Returns `(CE, softmax(logits))`.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    let mut p = logits.to_vec();
    softmax(&mut p);
    (lse - logits[label], p)
}

/// `d CE / d logits = softmax(logits) - onehot(label)`.
pub fn cross_entropy_grad(logits: &[f64], label: usize) -> Vec<f64> {
    let (_, mut p) = cross_entropy(logits, label);
    p[label] -= 1.0;
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub layout: Layout,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        Ok(Self { config, layout })
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    /// Fresh parameters: truncated normal (std 0.02, cut at 2 std) for
    /// weights, normal 0.02 for embeddings, zeros for biases, LN gains 1.
    pub fn init(&self, rng: &mut impl Rng) -> Vec<f64> {
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let mut p = vec![0.0; self.layout.total];
        for (_, slot, role) in &self.layout.entries {
            let dst = &mut p[slot.range()];
            match role {
                Role::Weight => dst.iter_mut().for_each(|x| {
                    *x = loop {
                        let z: f64 = normal.sample(rng);
                        if z.abs() <= 0.04 {
                            break z;
                        }
                    }
                }),
                Role::Embedding => dst.iter_mut().for_each(|x| *x = normal.sample(rng)),
                Role::NormGain => dst.fill(1.0),
                Role::Bias | Role::NormBias => {}
            }
        }
        p
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.layout.total {
            return Err(Error::shape(format!(
                "{} parameters for a model with {}",
                params.len(),
                self.layout.total
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<Tape> {
        self.check_params(params)?;
        let cfg = &self.config;
        if input.len() != cfg.n_tokens * cfg.d_in {
            return Err(Error::shape(format!(
                "input has {} values, model expects {} x {}",
                input.len(),
                cfg.n_tokens,
                cfg.d_in
            )));
        }
        let ly = &self.layout;
        let mut tokens = linear(input, cfg.n_tokens, ly.patch_w.of(params), ly.patch_b.of(params));
        tokens
            .data
            .iter_mut()
            .zip(ly.pos.of(params))
            .for_each(|(t, p)| *t += p);
        let embedded = match ly.cls {
            Some(cls) => {
                let mut data = cls.of(params).to_vec();
                data.extend_from_slice(&tokens.data);
                Mat::from_vec(cfg.seq_len(), cfg.d_model, data)
            }
            None => tokens,
        };
        if !embedded.is_finite() {
            return Err(Error::NonFinite("patch embedding".into()));
        }
        let mut blocks = Vec::with_capacity(cfg.n_blocks);
        let mut h = embedded.clone();
        for (l, slots) in ly.blocks.iter().enumerate() {
            let tape = self.block_forward(params, slots, h);
            if !tape.output.is_finite() {
                return Err(Error::NonFinite(format!("block {l} output")));
            }
            h = tape.output.clone();
            blocks.push(tape);
        }
        let (pooled, logits) = self.head(params, &h);
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }
        Ok(Tape {
            embedded,
            blocks,
            pooled,
            logits,
        })
    }

    fn head(&self, params: &[f64], h: &Mat) -> (Vec<f64>, Vec<f64>) {
        let pooled = match self.config.pooling {
            Pooling::Mean => h.mean_rows(),
            Pooling::ClassToken => h.row(0).to_vec(),
        };
        let logits = linear(&pooled, 1, self.layout.head_w.of(params), self.layout.head_b.of(params)).data;
        (pooled, logits)
    }

    fn block_forward(&self, params: &[f64], s: &BlockSlots, input: Mat) -> BlockTape {
        let n = input.rows;
        let d = self.config.d_model;
        let nh = self.config.n_heads;
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();

        let (ln1, xhat1, rstd1) = layer_norm(&input, s.ln1_g.of(params), s.ln1_b.of(params));
        let q = linear(&ln1.data, n, s.wq.of(params), s.bq.of(params));
        let k = linear(&ln1.data, n, s.wk.of(params), s.bk.of(params));
        let v = linear(&ln1.data, n, s.wv.of(params), s.bv.of(params));
        let mut ctx = Mat::zeros(n, d);
        let mut attention = Vec::with_capacity(nh);
        for head in 0..nh {
            let c0 = head * dh;
            let mut p = Mat::zeros(n, n);
            for i in 0..n {
                let qi = &q.row(i)[c0..c0 + dh];
                let row = p.row_mut(i);
                for (j, r) in row.iter_mut().enumerate() {
                    *r = mat::dot(qi, &k.row(j)[c0..c0 + dh]) * scale;
                }
                softmax(row);
            }
            for i in 0..n {
                for j in 0..n {
                    let w = p.at(i, j);
                    let vj = &v.row(j)[c0..c0 + dh];
                    mat::axpy(w, vj, &mut ctx.row_mut(i)[c0..c0 + dh]);
                }
            }
            attention.push(p);
        }
        let mut h1 = linear(&ctx.data, n, s.wo.of(params), s.bo.of(params));
        h1.add_assign(&input);

        let (ln2, xhat2, rstd2) = layer_norm(&h1, s.ln2_g.of(params), s.ln2_b.of(params));
        let u = linear(&ln2.data, n, s.w1.of(params), s.b1.of(params));
        let g = Mat::from_vec(u.rows, u.cols, u.data.iter().map(|&x| gelu(x)).collect());
        let mut output = linear(&g.data, n, s.w2.of(params), s.b2.of(params));
        output.add_assign(&h1);

        BlockTape {
            input,
            xhat1,
            rstd1,
            ln1,
            q,
            k,
            v,
            attention,
            ctx,
            xhat2,
            rstd2,
            ln2,
            u,
            g,
            output,
        }
    }

    /// Gradient w.r.t. the block input given the gradient w.r.t. its output.
    fn block_backward(
        &self,
        params: &[f64],
        s: &BlockSlots,
        t: &BlockTape,
        dout: &Mat,
        mut grads: Option<&mut [f64]>,
    ) -> Mat {
        let n = dout.rows;
        let d = self.config.d_model;
        let nh = self.config.n_heads;
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut dg = linear_backward(&t.g.data, s.w2.of(params), dout, pair(&mut grads, s.w2, s.b2), true)
            .expect("dx requested");
        dg.data
            .iter_mut()
            .zip(&t.u.data)
            .for_each(|(g, &u)| *g *= gelu_grad(u));
        let dln2 = linear_backward(&t.ln2.data, s.w1.of(params), &dg, pair(&mut grads, s.w1, s.b1), true)
            .expect("dx requested");
        let mut dh1 = layer_norm_backward(
            &dln2,
            &t.xhat2,
            &t.rstd2,
            s.ln2_g.of(params),
            pair(&mut grads, s.ln2_g, s.ln2_b),
        );
        dh1.add_assign(dout);

        let dctx = linear_backward(&t.ctx.data, s.wo.of(params), &dh1, pair(&mut grads, s.wo, s.bo), true)
            .expect("dx requested");
        let mut dq = Mat::zeros(n, d);
        let mut dk = Mat::zeros(n, d);
        let mut dv = Mat::zeros(n, d);
        let mut dp = vec![0.0; n];
        for (head, p) in t.attention.iter().enumerate() {
            let c0 = head * dh;
            for i in 0..n {
                let dci = &dctx.row(i)[c0..c0 + dh];
                for (j, x) in dp.iter_mut().enumerate() {
                    *x = mat::dot(dci, &t.v.row(j)[c0..c0 + dh]);
                    mat::axpy(p.at(i, j), dci, &mut dv.row_mut(j)[c0..c0 + dh]);
                }
                let pi = p.row(i);
                let inner = mat::dot(pi, &dp);
                for j in 0..n {
                    let ds = pi[j] * (dp[j] - inner) * scale;
                    if ds != 0.0 {
                        mat::axpy(ds, &t.k.row(j)[c0..c0 + dh], &mut dq.row_mut(i)[c0..c0 + dh]);
                        mat::axpy(ds, &t.q.row(i)[c0..c0 + dh], &mut dk.row_mut(j)[c0..c0 + dh]);
                    }
                }
            }
        }
        let mut dln1 = linear_backward(&t.ln1.data, s.wq.of(params), &dq, pair(&mut grads, s.wq, s.bq), true)
            .expect("dx requested");
        for (w, b, dy) in [(s.wk, s.bk, &dk), (s.wv, s.bv, &dv)] {
            let dx = linear_backward(&t.ln1.data, w.of(params), dy, pair(&mut grads, w, b), true)
                .expect("dx requested");
            dln1.add_assign(&dx);
        }
        let mut dinput = layer_norm_backward(
            &dln1,
            &t.xhat1,
            &t.rstd1,
            s.ln1_g.of(params),
            pair(&mut grads, s.ln1_g, s.ln1_b),
        );
        dinput.add_assign(&dh1);
        dinput
    }

    /// Back-propagates `dlogits` through the tape. Parameter gradients are
    /// accumulated into `grads` when given. Returns the gradient w.r.t. each
    /// block output, indexed by block.
    pub fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        tape: &Tape,
        dlogits: &[f64],
        mut grads: Option<&mut [f64]>,
    ) -> Vec<Mat> {
        let cfg = &self.config;
        let ly = &self.layout;
        let seq = cfg.seq_len();
        let d = cfg.d_model;

        let dpooled = linear_backward(
            &tape.pooled,
            ly.head_w.of(params),
            &Mat::from_vec(1, cfg.n_classes, dlogits.to_vec()),
            pair(&mut grads, ly.head_w, ly.head_b),
            true,
        )
        .expect("dx requested");
        let mut dh = Mat::zeros(seq, d);
        match cfg.pooling {
            Pooling::Mean => {
                let inv = 1.0 / seq as f64;
                for r in 0..seq {
                    dh.row_mut(r)
                        .iter_mut()
                        .zip(&dpooled.data)
                        .for_each(|(o, g)| *o = g * inv);
                }
            }
            Pooling::ClassToken => dh.row_mut(0).copy_from_slice(&dpooled.data),
        }

        let mut block_grads = vec![Mat::zeros(0, 0); cfg.n_blocks];
        for l in (0..cfg.n_blocks).rev() {
            block_grads[l] = dh.clone();
            dh = self.block_backward(params, &ly.blocks[l], &tape.blocks[l], &dh, grads.as_deref_mut());
        }

        if let Some(g) = grads.as_deref_mut() {
            let first = usize::from(ly.cls.is_some());
            if let Some(cls) = ly.cls {
                g[cls.range()]
                    .iter_mut()
                    .zip(dh.row(0))
                    .for_each(|(o, x)| *o += x);
            }
            let dtok = Mat::from_vec(cfg.n_tokens, d, dh.data[first * d..].to_vec());
            g[ly.pos.range()]
                .iter_mut()
                .zip(&dtok.data)
                .for_each(|(o, x)| *o += x);
            linear_backward(
                input,
                ly.patch_w.of(params),
                &dtok,
                Some(two_mut(g, ly.patch_w, ly.patch_b)),
                false,
            );
        }
        block_grads
    }

    /// Runs blocks after `block` (zero-based) and the head on a replacement
    /// output of `block`.
    pub fn logits_from_block(&self, params: &[f64], block: usize, output: &Mat) -> Result<Vec<f64>> {
        self.check_params(params)?;
        if block >= self.config.n_blocks {
            return Err(Error::invalid(format!("block {block} out of range")));
        }
        let mut h = output.clone();
        for s in &self.layout.blocks[block + 1..] {
            h = self.block_forward(params, s, h).output;
        }
        Ok(self.head(params, &h).1)
    }

    fn decays(&self, role: Role) -> bool {
        self.config.decay_all || matches!(role, Role::Weight | Role::Embedding)
    }

    /// `lambda |Phi|^2` over the decayed tensors.
    pub fn l2_penalty(&self, params: &[f64]) -> f64 {
        let sum: f64 = self
            .layout
            .entries
            .iter()
            .filter(|(_, _, r)| self.decays(*r))
            .map(|(_, s, _)| s.of(params).iter().map(|x| x * x).sum::<f64>())
            .sum();
        self.config.weight_decay * sum
    }

    /// Adds `2 lambda Phi` for the decayed tensors.
    pub fn add_l2_grad(&self, params: &[f64], grads: &mut [f64]) {
        let c = 2.0 * self.config.weight_decay;
        for (_, s, r) in &self.layout.entries {
            if self.decays(*r) {
                for i in s.range() {
                    grads[i] += c * params[i];
                }
            }
        }
    }

    /// `CE + lambda |Phi|^2` for one sample.
    pub fn loss(&self, params: &[f64], logits: &[f64], label: usize) -> f64 {
        cross_entropy(logits, label).0 + self.l2_penalty(params)
    }

    /// Cross-entropy of one sample; its gradient (without the L2 term) is
    /// added to `grads`.
    pub fn sample_gradient(&self, params: &[f64], input: &[f64], label: usize, grads: &mut [f64]) -> Result<f64> {
        if label >= self.config.n_classes {
            return Err(Error::invalid(format!("label {label} out of range")));
        }
        let tape = self.forward(params, input)?;
        let (ce, _) = cross_entropy(&tape.logits, label);
        let dlogits = cross_entropy_grad(&tape.logits, label);
        self.backward(params, input, &tape, &dlogits, Some(grads));
        Ok(ce)
    }

    /// Mean loss and gradient over a batch, L2 term included. Per-sample
    /// gradients are computed in parallel and summed in batch order, so the
    /// result does not depend on the thread count.
    pub fn batch_gradient(&self, params: &[f64], batch: &[(&[f64], usize)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut grads = vec![0.0; self.layout.total];
        let mut ce_sum = 0.0;
        let width = rayon::current_num_threads().max(1);
        for chunk in batch.chunks(width) {
            let parts: Vec<Result<(f64, Vec<f64>)>> = chunk
                .par_iter()
                .map(|&(x, y)| {
                    let mut g = vec![0.0; self.layout.total];
                    let ce = self.sample_gradient(params, x, y, &mut g)?;
                    Ok((ce, g))
                })
                .collect();
            for part in parts {
                let (ce, g) = part?;
                ce_sum += ce;
                grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
        }
        let inv = 1.0 / batch.len() as f64;
        grads.iter_mut().for_each(|g| *g *= inv);
        self.add_l2_grad(params, &mut grads);
        Ok((ce_sum * inv + self.l2_penalty(params), grads))
    }

    pub fn predict(&self, params: &[f64], input: &[f64]) -> Result<usize> {
        let logits = self.forward(params, input)?.logits;
        Ok(logits
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &z)| if z > best.1 { (i, z) } else { best })
            .0)
    }
}
