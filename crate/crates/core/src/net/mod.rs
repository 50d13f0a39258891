//! Policy and value networks with an in-crate reverse-mode autodiff.
//!
//! Both networks share the encoder architecture but not its weights: a linear
//! input projection followed by `n_layers` blocks
//!
//! ```text
//! h'  = Gate(h,  MHA(BN(h)))
//! h'' = Gate(h', FFN(BN(h')))
//! Gate(x, f) = f + sigmoid([x || f] W_g + b_g) * (x - f)
//! ```
//!
//! where BN standardizes each embedding column over the nodes of one state.
//! The policy points from a context vector built from the pooled embedding,
//! the current node and the vehicle globals; the value head reads both
//! players' pooled embeddings and globals.

mod features;
mod model;
pub mod tape;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use features::{StateFeatures, GLOBAL_FEATURES, NODE_FEATURES};
pub use model::{argmax, softmax, PolicyNet, ValueNet, LOGIT_CLIP};
pub use tape::Tensor;
use tape::Tape;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub embed_dim: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ffn_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            n_heads: 8,
            n_layers: 3,
            ffn_dim: 512,
            batch_size: 256,
            learning_rate: 1e-4,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.embed_dim,
            self.n_heads,
            self.n_layers,
            self.ffn_dim,
            self.batch_size,
        ];
        if sizes.contains(&0) {
            return Err(Error::InvalidArgument("network sizes must be positive".into()));
        }
        if self.embed_dim % self.n_heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "embed_dim {} is not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        Ok(())
    }

    /// Same architecture; batch size and learning rate may differ.
    pub fn same_shape(&self, other: &NetConfig) -> bool {
        (self.embed_dim, self.n_heads, self.n_layers, self.ffn_dim)
            == (other.embed_dim, other.n_heads, other.n_layers, other.ffn_dim)
    }
}

/// A state paired with its improved-policy target over node ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySample {
    pub features: StateFeatures,
    pub target: Vec<f64>,
}

impl PolicySample {
    /// Target length matches the node count, is nonnegative, is zero off
    /// the legal set and sums to one.
    pub fn check(&self) -> Result<()> {
        self.features.check_shape()?;
        let f = &self.features;
        if self.target.len() != f.n_nodes() {
            return Err(Error::Dimension(format!(
                "policy target has {} entries for {} nodes",
                self.target.len(),
                f.n_nodes()
            )));
        }
        let mut sum = 0.0;
        for (j, (&t, &legal)) in self.target.iter().zip(&f.legal).enumerate() {
            if !(t >= 0.0) || (!legal && t != 0.0) {
                return Err(Error::Contract(format!("policy target entry {j} = {t} is invalid")));
            }
            sum += t;
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!("policy target sums to {sum}")));
        }
        Ok(())
    }
}

/// A pair of same-step states and the outcome from the first one's owner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSample {
    pub own: StateFeatures,
    pub opp: StateFeatures,
    pub z: f64,
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64, params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

fn reduce(parts: Vec<(f64, Vec<Tensor>)>, scale: f64) -> (f64, Vec<Tensor>) {
    let mut it = parts.into_iter();
    let (mut loss, mut grads) = it.next().expect("nonempty batch");
    for (l, g) in it {
        loss += l;
        for (a, b) in grads.iter_mut().zip(&g) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }
    for g in &mut grads {
        g.data.iter_mut().for_each(|x| *x *= scale);
    }
    (loss * scale, grads)
}

/// Mean cross-entropy of the masked policy against the targets, and its
/// gradient.
pub fn policy_loss_grad(net: &PolicyNet, batch: &[&PolicySample]) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty policy batch".into()));
    }
    for s in batch {
        s.check()?;
    }
    let parts: Vec<(f64, Vec<Tensor>)> = batch
        .par_iter()
        .map(|s| {
            let mut tp = Tape::new(&net.params);
            let logits = PolicyNet::forward(&mut tp, &net.config, &s.features);
            let loss = tp.cross_entropy(logits, &s.target, &s.features.legal);
            (tp.scalar(loss), tp.backward(loss))
        })
        .collect();
    Ok(reduce(parts, 1.0 / batch.len() as f64))
}

/// Mean squared error of the value head against `z`, and its gradient.
pub fn value_loss_grad(net: &ValueNet, batch: &[&ValueSample]) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty value batch".into()));
    }
    for s in batch {
        s.own.check_shape()?;
        s.opp.check_shape()?;
        if !s.own.same_instance(&s.opp) {
            return Err(Error::Contract("value sample mixes instances".into()));
        }
    }
    let parts: Vec<(f64, Vec<Tensor>)> = batch
        .par_iter()
        .map(|s| {
            let mut tp = Tape::new(&net.params);
            let v = ValueNet::forward(&mut tp, &net.config, &s.own, &s.opp);
            let z = tp.constant(Tensor::from_vec(1, 1, vec![s.z]));
            let d = tp.sub(v, z);
            let sq = tp.mul(d, d);
            (tp.scalar(sq), tp.backward(sq))
        })
        .collect();
    Ok(reduce(parts, 1.0 / batch.len() as f64))
}

/// Trainable parameters with their optimizer states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub policy: PolicyNet,
    pub value: ValueNet,
    pub policy_opt: Adam,
    pub value_opt: Adam,
}

impl Learner {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let policy = PolicyNet::new(config.clone(), seed)?;
        let value = ValueNet::new(config.clone(), seed ^ 0x9e37_79b9_7f4a_7c15)?;
        let policy_opt = Adam::new(config.learning_rate, &policy.params);
        let value_opt = Adam::new(config.learning_rate, &value.params);
        Ok(Self {
            policy,
            value,
            policy_opt,
            value_opt,
        })
    }

    pub fn policy_step(&mut self, batch: &[&PolicySample]) -> Result<f64> {
        let (loss, grads) = policy_loss_grad(&self.policy, batch)?;
        self.policy_opt.step(&mut self.policy.params, &grads);
        Ok(loss)
    }

    pub fn value_step(&mut self, batch: &[&ValueSample]) -> Result<f64> {
        let (loss, grads) = value_loss_grad(&self.value, batch)?;
        self.value_opt.step(&mut self.value.params, &grads);
        Ok(loss)
    }

    /// One optimizer update of each network; returns the pre-update losses.
    pub fn train_step(
        &mut self,
        policy_batch: &[&PolicySample],
        value_batch: &[&ValueSample],
    ) -> Result<(f64, f64)> {
        if policy_batch.is_empty() || value_batch.is_empty() {
            return Err(Error::InvalidArgument("empty training batch".into()));
        }
        Ok((self.policy_step(policy_batch)?, self.value_step(value_batch)?))
    }
}

pub const NET_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NetFile {
    format_version: u32,
    config: NetConfig,
    policy: Vec<Tensor>,
    value: Vec<Tensor>,
}

/// Writes both networks as versioned JSON with the config as header.
pub fn save_nets(path: impl AsRef<Path>, policy: &PolicyNet, value: &ValueNet) -> Result<()> {
    let path = path.as_ref();
    if !policy.config.same_shape(&value.config) {
        return Err(Error::ConfigMismatch("policy and value configs differ".into()));
    }
    let file = NetFile {
        format_version: NET_FORMAT_VERSION,
        config: policy.config.clone(),
        policy: policy.params.clone(),
        value: value.params.clone(),
    };
    let text = serde_json::to_string(&file)?;
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Reads networks saved by [`save_nets`]. With `expected`, a different
/// architecture is rejected.
pub fn load_nets(path: impl AsRef<Path>, expected: Option<&NetConfig>) -> Result<(PolicyNet, ValueNet)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let file: NetFile = serde_json::from_str(&text)?;
    if file.format_version != NET_FORMAT_VERSION {
        return Err(Error::Version {
            found: file.format_version,
            expected: NET_FORMAT_VERSION,
        });
    }
    if let Some(cfg) = expected {
        if !cfg.same_shape(&file.config) {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint network {:?} does not match {:?}",
                file.config, cfg
            )));
        }
    }
    Ok((
        PolicyNet::from_params(file.config.clone(), file.policy)?,
        ValueNet::from_params(file.config, file.value)?,
    ))
}
