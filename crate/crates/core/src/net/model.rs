//! Gated attention encoder, pointer policy head and paired value head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{StateFeatures, GLOBAL_FEATURES, NODE_FEATURES};
use super::tape::{Tape, Tensor, Var};
use super::NetConfig;
use crate::error::{Error, Result};

/// Logit clipping constant.
pub const LOGIT_CLIP: f64 = 10.0;
const BN_EPS: f64 = 1e-5;
const PARAMS_PER_LAYER: usize = 16;

// Offsets inside one encoder layer.
const BN1_G: usize = 0;
const BN1_B: usize = 1;
const WQ: usize = 2;
const WK: usize = 3;
const WV: usize = 4;
const WO: usize = 5;
const G1_W: usize = 6;
const G1_B: usize = 7;
const BN2_G: usize = 8;
const BN2_B: usize = 9;
const F_W1: usize = 10;
const F_B1: usize = 11;
const F_W2: usize = 12;
const F_B2: usize = 13;
const G2_W: usize = 14;
const G2_B: usize = 15;

fn encoder_shapes(cfg: &NetConfig) -> Vec<(usize, usize)> {
    let (d, f) = (cfg.embed_dim, cfg.ffn_dim);
    let mut shapes = vec![(NODE_FEATURES, d), (1, d)];
    for _ in 0..cfg.n_layers {
        shapes.extend_from_slice(&[
            (1, d),
            (1, d),
            (d, d),
            (d, d),
            (d, d),
            (d, d),
            (2 * d, d),
            (1, d),
            (1, d),
            (1, d),
            (d, f),
            (1, f),
            (f, d),
            (1, d),
            (2 * d, d),
            (1, d),
        ]);
    }
    shapes
}

fn encoder_len(cfg: &NetConfig) -> usize {
    2 + PARAMS_PER_LAYER * cfg.n_layers
}

fn policy_shapes(cfg: &NetConfig) -> Vec<(usize, usize)> {
    let d = cfg.embed_dim;
    let mut s = encoder_shapes(cfg);
    s.extend_from_slice(&[(2 * d + GLOBAL_FEATURES, d), (1, d), (d, d), (d, d)]);
    s
}

fn value_shapes(cfg: &NetConfig) -> Vec<(usize, usize)> {
    let d = cfg.embed_dim;
    let mut s = encoder_shapes(cfg);
    s.extend_from_slice(&[(2 * (d + GLOBAL_FEATURES), d), (1, d), (d, 1), (1, 1)]);
    s
}

fn init_params(shapes: &[(usize, usize)], cfg: &NetConfig, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = encoder_len(cfg);
    shapes
        .iter()
        .enumerate()
        .map(|(k, &(r, c))| {
            let in_layer = k >= 2 && k < enc;
            let slot = if in_layer { (k - 2) % PARAMS_PER_LAYER } else { usize::MAX };
            if in_layer && (slot == BN1_G || slot == BN2_G) {
                return Tensor::from_vec(r, c, vec![1.0; r * c]);
            }
            if r == 1 {
                return Tensor::zeros(r, c);
            }
            let bound = (6.0 / (r + c) as f64).sqrt();
            Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-bound..bound)).collect())
        })
        .collect()
}

fn check_params(params: &[Tensor], shapes: &[(usize, usize)], what: &str) -> Result<()> {
    if params.len() != shapes.len() {
        return Err(Error::Dimension(format!(
            "{what}: {} tensors, expected {}",
            params.len(),
            shapes.len()
        )));
    }
    for (k, (p, &(r, c))) in params.iter().zip(shapes).enumerate() {
        if (p.rows, p.cols) != (r, c) || p.data.len() != r * c {
            return Err(Error::Dimension(format!(
                "{what}: tensor {k} is {}x{}, expected {r}x{c}",
                p.rows, p.cols
            )));
        }
    }
    Ok(())
}

/// `f + sigmoid([x || f] W + b) * (x - f)`: gate 1 keeps `x`, gate 0 keeps `f`.
fn gate(tp: &mut Tape, x: Var, f: Var, w: Var, b: Var) -> Var {
    let xf = tp.concat_cols(&[x, f]);
    let pre = tp.matmul(xf, w);
    let pre = tp.add_row(pre, b);
    let g = tp.sigmoid(pre);
    let diff = tp.sub(x, f);
    let gd = tp.mul(g, diff);
    tp.add(f, gd)
}

fn batch_norm(tp: &mut Tape, h: Var, gamma: Var, beta: Var) -> Var {
    let z = tp.normalize(h, BN_EPS);
    let z = tp.mul_row(z, gamma);
    tp.add_row(z, beta)
}

fn attention(tp: &mut Tape, h: Var, cfg: &NetConfig, base: usize) -> Var {
    let (wq, wk, wv, wo) = (
        tp.param(base + WQ),
        tp.param(base + WK),
        tp.param(base + WV),
        tp.param(base + WO),
    );
    let q = tp.matmul(h, wq);
    let k = tp.matmul(h, wk);
    let v = tp.matmul(h, wv);
    let dk = cfg.embed_dim / cfg.n_heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.n_heads);
    for head in 0..cfg.n_heads {
        let qh = tp.slice_cols(q, head * dk, dk);
        let kh = tp.slice_cols(k, head * dk, dk);
        let vh = tp.slice_cols(v, head * dk, dk);
        let s = tp.matmul_bt(qh, kh);
        let s = tp.scale(s, scale);
        let a = tp.softmax_rows(s);
        heads.push(tp.matmul(a, vh));
    }
    let cat = if heads.len() == 1 { heads[0] } else { tp.concat_cols(&heads) };
    tp.matmul(cat, wo)
}

/// Runs the encoder on `x` (`n x NODE_FEATURES`); returns per-node
/// embeddings and their mean.
pub(crate) fn encode(tp: &mut Tape, cfg: &NetConfig, x: Var) -> (Var, Var) {
    let w_in = tp.param(0);
    let b_in = tp.param(1);
    let h = tp.matmul(x, w_in);
    let mut h = tp.add_row(h, b_in);
    for layer in 0..cfg.n_layers {
        let base = 2 + layer * PARAMS_PER_LAYER;
        let p = |k: usize| Var::from_index(base + k);
        let n1 = batch_norm(tp, h, p(BN1_G), p(BN1_B));
        let att = attention(tp, n1, cfg, base);
        let h1 = gate(tp, h, att, p(G1_W), p(G1_B));
        let n2 = batch_norm(tp, h1, p(BN2_G), p(BN2_B));
        let f = tp.matmul(n2, p(F_W1));
        let f = tp.add_row(f, p(F_B1));
        let f = tp.relu(f);
        let f = tp.matmul(f, p(F_W2));
        let f = tp.add_row(f, p(F_B2));
        h = gate(tp, h1, f, p(G2_W), p(G2_B));
    }
    let pooled = tp.mean_rows(h);
    (h, pooled)
}

fn check_features(f: &StateFeatures) -> Result<()> {
    f.check_shape()?;
    if f.n_nodes() < 2 {
        return Err(Error::Dimension("features need at least two nodes".into()));
    }
    Ok(())
}

/// Pointer-attention policy `pi_theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub config: NetConfig,
    pub params: Vec<Tensor>,
}

impl PolicyNet {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&policy_shapes(&config), &config, seed);
        Ok(Self { config, params })
    }

    pub fn from_params(config: NetConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        check_params(&params, &policy_shapes(&config), "policy")?;
        Ok(Self { config, params })
    }

    pub fn n_parameters(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn encode(&self, f: &StateFeatures) -> Result<(Tensor, Tensor)> {
        check_features(f)?;
        let mut tp = Tape::new(&self.params);
        let x = tp.constant(f.nodes.clone());
        let (h, pooled) = encode(&mut tp, &self.config, x);
        Ok((tp.value(h).clone(), tp.value(pooled).clone()))
    }

    /// Unmasked clipped logits for every node as a `1 x n` row.
    pub(crate) fn forward(tp: &mut Tape, cfg: &NetConfig, f: &StateFeatures) -> Var {
        let x = tp.constant(f.nodes.clone());
        let (h, pooled) = encode(tp, cfg, x);
        let enc = encoder_len(cfg);
        let cur = tp.row(h, f.current);
        let glob = tp.constant(Tensor::row_vector(f.global.clone()));
        let ctx = tp.concat_cols(&[pooled, cur, glob]);
        let ctx = tp.matmul(ctx, Var::from_index(enc));
        let ctx = tp.add_row(ctx, Var::from_index(enc + 1));
        let q = tp.matmul(ctx, Var::from_index(enc + 2));
        let k = tp.matmul(h, Var::from_index(enc + 3));
        let s = tp.matmul_bt(q, k);
        let s = tp.scale(s, 1.0 / (cfg.embed_dim as f64).sqrt());
        let s = tp.tanh(s);
        tp.scale(s, LOGIT_CLIP)
    }

    /// Logits by node id, `-inf` on illegal actions.
    pub fn logits(&self, f: &StateFeatures) -> Result<Vec<f64>> {
        check_features(f)?;
        if !f.legal.iter().any(|&l| l) {
            return Err(Error::Contract("policy queried with no legal action".into()));
        }
        let mut tp = Tape::new(&self.params);
        let out = Self::forward(&mut tp, &self.config, f);
        Ok(tp
            .value(out)
            .data
            .iter()
            .zip(&f.legal)
            .map(|(&v, &l)| if l { v } else { f64::NEG_INFINITY })
            .collect())
    }

    pub fn probabilities(&self, f: &StateFeatures) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(f)?))
    }

    /// Highest-logit legal action; ties go to the lowest id.
    pub fn greedy_action(&self, f: &StateFeatures) -> Result<usize> {
        let logits = self.logits(f)?;
        Ok(argmax(&logits))
    }
}

/// Paired-state value head `V_nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    pub config: NetConfig,
    pub params: Vec<Tensor>,
}

impl ValueNet {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&value_shapes(&config), &config, seed);
        Ok(Self { config, params })
    }

    pub fn from_params(config: NetConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        check_params(&params, &value_shapes(&config), "value")?;
        Ok(Self { config, params })
    }

    pub fn n_parameters(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub(crate) fn forward(
        tp: &mut Tape,
        cfg: &NetConfig,
        own: &StateFeatures,
        opp: &StateFeatures,
    ) -> Var {
        let enc = encoder_len(cfg);
        let mut parts = Vec::with_capacity(4);
        for f in [own, opp] {
            let x = tp.constant(f.nodes.clone());
            let (_, pooled) = encode(tp, cfg, x);
            parts.push(pooled);
            parts.push(tp.constant(Tensor::row_vector(f.global.clone())));
        }
        let z = tp.concat_cols(&parts);
        let z = tp.matmul(z, Var::from_index(enc));
        let z = tp.add_row(z, Var::from_index(enc + 1));
        let z = tp.relu(z);
        let z = tp.matmul(z, Var::from_index(enc + 2));
        let z = tp.add_row(z, Var::from_index(enc + 3));
        tp.tanh(z)
    }

    /// Expected outcome in `[-1, 1]` from the owner of `own`.
    pub fn value(&self, own: &StateFeatures, opp: &StateFeatures) -> Result<f64> {
        check_features(own)?;
        check_features(opp)?;
        if !own.same_instance(opp) {
            return Err(Error::Contract("value queried on states of different instances".into()));
        }
        let mut tp = Tape::new(&self.params);
        let out = Self::forward(&mut tp, &self.config, own, opp);
        Ok(tp.scalar(out))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits
        .iter()
        .map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { (l - m).exp() })
        .collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// First index of the maximum; `-inf` entries never win over finite ones.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
