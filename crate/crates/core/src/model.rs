//! The degradation network: per-feature embeddings, a pooling stage that is
//! either a plain mean or attention against the first cycle, and a two-layer
//! affine head producing the normalized capacity of the next cycle.
//!
//! Attention scores each history embedding `e` against the reference
//! embedding `e₀` through `[e; e₀; e − e₀; e ⊙ e₀] → ReLU(W_h · + b_h) →
//! W_z · + b_z`, then normalizes the N scores of one frame with softmax.

use std::borrow::Borrow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{CycleFeatures, MovingFrame};
use crate::tensor::{self, Dense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Attention,
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "attention" => Ok(Pooling::Attention),
            other => Err(Error::Config(format!("unknown pooling mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Pooling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pooling::Mean => "mean",
            Pooling::Attention => "attention",
        })
    }
}

/// Activation between the two head layers. The reference architecture has
/// none, which makes the head a single affine map in disguise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadActivation {
    #[default]
    None,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdnConfig {
    /// Raw input length of each feature.
    pub feature_lens: Vec<usize>,
    /// Embedding width of each feature.
    pub embed_dims: Vec<usize>,
    /// Number of history cycles per frame.
    pub history: usize,
    pub mlp_hidden: usize,
    pub attn_hidden: usize,
    pub pooling: Pooling,
    #[serde(default)]
    pub head_activation: HeadActivation,
    /// Start frames at t = 1 so cycle 0 only ever acts as the reference.
    #[serde(default)]
    pub exclude_reference_from_history: bool,
}

impl DdnConfig {
    /// The published configuration: capacity scalar plus two 300-sample
    /// voltage curves, 64-wide embeddings, H₁ = 64, H₂ = 128.
    pub fn standard(history: usize) -> Self {
        DdnConfig {
            feature_lens: vec![1, 300, 300],
            embed_dims: vec![64, 64, 64],
            history,
            mlp_hidden: 64,
            attn_hidden: 128,
            pooling: Pooling::Attention,
            head_activation: HeadActivation::None,
            exclude_reference_from_history: false,
        }
    }

    /// Same inputs with 8-wide embeddings, H₁ = 8, H₂ = 16: small enough to
    /// train on a laptop core in seconds.
    pub fn desk(history: usize) -> Self {
        DdnConfig {
            embed_dims: vec![8, 8, 8],
            mlp_hidden: 8,
            attn_hidden: 16,
            ..DdnConfig::standard(history)
        }
    }

    pub fn num_features(&self) -> usize {
        self.feature_lens.len()
    }

    /// Total embedding width D.
    pub fn embed_width(&self) -> usize {
        self.embed_dims.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_lens.is_empty() {
            return Err(Error::Config("at least one feature is required".into()));
        }
        if self.feature_lens.len() != self.embed_dims.len() {
            return Err(Error::Config(format!(
                "{} feature lengths but {} embedding widths",
                self.feature_lens.len(),
                self.embed_dims.len()
            )));
        }
        let dims = self.feature_lens.iter().chain(&self.embed_dims);
        if dims.copied().any(|d| d == 0) {
            return Err(Error::Config("feature lengths and widths must be >= 1".into()));
        }
        if self.history == 0 || self.mlp_hidden == 0 || self.attn_hidden == 0 {
            return Err(Error::Config("history, mlp_hidden and attn_hidden must be >= 1".into()));
        }
        Ok(())
    }
}

/// All learnable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct DdnParams {
    /// One embedding layer per feature, `K⁽ʲ⁾ × l⁽ʲ⁾`.
    pub embed: Vec<Dense>,
    /// `H₂ × 4D`.
    pub attn_hidden: Dense,
    /// `1 × H₂`.
    pub attn_score: Dense,
    /// `H₁ × D`.
    pub head_hidden: Dense,
    /// `1 × H₁`.
    pub head_out: Dense,
}

impl DdnParams {
    pub fn zeros(config: &DdnConfig) -> Self {
        let d = config.embed_width();
        DdnParams {
            embed: config
                .feature_lens
                .iter()
                .zip(&config.embed_dims)
                .map(|(&l, &k)| Dense::zeros(l, k))
                .collect(),
            attn_hidden: Dense::zeros(4 * d, config.attn_hidden),
            attn_score: Dense::zeros(config.attn_hidden, 1),
            head_hidden: Dense::zeros(d, config.mlp_hidden),
            head_out: Dense::zeros(config.mlp_hidden, 1),
        }
    }

    /// Layers with stable names, in checkpoint order.
    pub fn layers(&self) -> Vec<(String, &Dense)> {
        let mut out: Vec<(String, &Dense)> = self
            .embed
            .iter()
            .enumerate()
            .map(|(j, l)| (format!("embed.{j}"), l))
            .collect();
        out.push(("attn.hidden".into(), &self.attn_hidden));
        out.push(("attn.score".into(), &self.attn_score));
        out.push(("head.hidden".into(), &self.head_hidden));
        out.push(("head.out".into(), &self.head_out));
        out
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Dense> {
        let mut out: Vec<&mut Dense> = self.embed.iter_mut().collect();
        out.push(&mut self.attn_hidden);
        out.push(&mut self.attn_score);
        out.push(&mut self.head_hidden);
        out.push(&mut self.head_out);
        out
    }

    /// Every parameter buffer (weights then bias, layer by layer).
    pub fn buffers(&self) -> Vec<&[f64]> {
        self.layers()
            .into_iter()
            .flat_map(|(_, l)| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.buffers().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// `self += scale · other`. Shapes must already agree.
    pub fn add_scaled(&mut self, other: &DdnParams, scale: f64) {
        for (dst, src) in self.buffers_mut().into_iter().zip(other.buffers()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn check_shapes(&self, config: &DdnConfig) -> Result<()> {
        let expected = DdnParams::zeros(config);
        for ((name, have), (_, want)) in self.layers().into_iter().zip(expected.layers()) {
            if have.weight.shape() != want.weight.shape() || have.bias.len() != want.bias.len() {
                return Err(Error::shape(
                    "DdnParams",
                    format!("{name} {:?}", have.weight.shape()),
                    format!("{:?} expected", want.weight.shape()),
                ));
            }
        }
        if self.embed.len() != expected.embed.len() {
            return Err(Error::shape("DdnParams", self.embed.len(), expected.embed.len()));
        }
        Ok(())
    }
}

/// Embedded view of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFrame {
    pub reference: Vec<f64>,
    pub history: Vec<Vec<f64>>,
    pub target: f64,
}

/// Attention weights over the history slots of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub start: usize,
    /// Cycle whose capacity the frame predicts (`start + N`).
    pub target_cycle: usize,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub value: f64,
    pub trace: Option<AttentionTrace>,
}

/// A configured network.
#[derive(Debug, Clone, PartialEq)]
pub struct Ddn {
    pub config: DdnConfig,
    pub params: DdnParams,
}

impl Ddn {
    pub fn new(config: DdnConfig, params: DdnParams) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Ddn { config, params })
    }

    /// A network with every parameter zero.
    pub fn zeros(config: DdnConfig) -> Result<Self> {
        config.validate()?;
        let params = DdnParams::zeros(&config);
        Ok(Ddn { config, params })
    }

    pub fn embed_feature(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        let layer = self
            .params
            .embed
            .get(j)
            .ok_or_else(|| Error::Config(format!("feature index {j} out of range")))?;
        if x.len() != self.config.feature_lens[j] {
            return Err(Error::shape(
                "embed_feature",
                format!("feature {j} expects length {}", self.config.feature_lens[j]),
                format!("got {}", x.len()),
            ));
        }
        layer.forward(x)
    }

    pub fn embed_cycle(&self, features: &[Vec<f64>]) -> Result<Vec<f64>> {
        if features.len() != self.config.num_features() {
            return Err(Error::shape(
                "embed_cycle",
                format!("{} features expected", self.config.num_features()),
                format!("{} given", features.len()),
            ));
        }
        let parts = features
            .iter()
            .enumerate()
            .map(|(j, x)| self.embed_feature(j, x))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = parts.iter().map(Vec::as_slice).collect();
        tensor::concat(&refs)
    }

    pub fn encode_frame(&self, frame: &MovingFrame) -> Result<EncodedFrame> {
        self.check_frame(frame)?;
        Ok(EncodedFrame {
            reference: self.embed_cycle(&frame.reference.features)?,
            history: frame
                .history
                .iter()
                .map(|c| self.embed_cycle(&c.features))
                .collect::<Result<_>>()?,
            target: frame.target,
        })
    }

    /// Unnormalized attention score of one history embedding against the reference.
    pub fn attention_score(&self, e_cur: &[f64], e_ref: &[f64]) -> Result<f64> {
        Ok(self.attention_parts(e_cur, e_ref)?.score)
    }

    fn attention_parts(&self, e_cur: &[f64], e_ref: &[f64]) -> Result<ScoreParts> {
        let d = self.config.embed_width();
        if e_cur.len() != d || e_ref.len() != d {
            return Err(Error::shape(
                "attention_score",
                format!("embeddings of length {} and {}", e_cur.len(), e_ref.len()),
                format!("width {d}"),
            ));
        }
        let diff: Vec<f64> = e_cur.iter().zip(e_ref).map(|(a, b)| a - b).collect();
        let prod = tensor::hadamard(e_cur, e_ref)?;
        let input = tensor::concat(&[e_cur, e_ref, &diff, &prod])?;
        let pre = self.params.attn_hidden.forward(&input)?;
        let hidden = tensor::relu(&pre);
        let score = self.params.attn_score.forward(&hidden)?[0];
        Ok(ScoreParts {
            input,
            pre,
            hidden,
            score,
        })
    }

    /// Pools the history embeddings. Returns the pooled vector and, in
    /// attention mode, the weights.
    pub fn pool(&self, frame: &EncodedFrame) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let d = self.config.embed_width();
        let n = frame.history.len();
        if n == 0 {
            return Err(Error::Empty("frame history"));
        }
        match self.config.pooling {
            Pooling::Mean => {
                let mut pooled = vec![0.0; d];
                for e in &frame.history {
                    for (p, v) in pooled.iter_mut().zip(e) {
                        *p += v;
                    }
                }
                pooled.iter_mut().for_each(|p| *p /= n as f64);
                Ok((pooled, None))
            }
            Pooling::Attention => {
                let scores = frame
                    .history
                    .iter()
                    .map(|e| self.attention_score(e, &frame.reference))
                    .collect::<Result<Vec<_>>>()?;
                let alpha = attention_weights(&scores);
                Ok((weighted_sum(&alpha, &frame.history, d), Some(alpha)))
            }
        }
    }

    /// Head: `o = W_o L + b_o`, `Q̂ = W_q o + b_q`.
    pub fn predict_capacity(&self, pooled: &[f64]) -> Result<f64> {
        let o = self.params.head_hidden.forward(pooled)?;
        let o = match self.config.head_activation {
            HeadActivation::None => o,
            HeadActivation::Relu => tensor::relu(&o),
        };
        Ok(self.params.head_out.forward(&o)?[0])
    }

    pub fn forward(&self, frame: &MovingFrame) -> Result<Prediction> {
        let encoded = self.encode_frame(frame)?;
        let (pooled, alpha) = self.pool(&encoded)?;
        Ok(Prediction {
            value: self.predict_capacity(&pooled)?,
            trace: alpha.map(|weights| AttentionTrace {
                start: frame.start,
                target_cycle: frame.target_cycle,
                weights,
            }),
        })
    }

    /// `(1/M) Σ (Q̂ − Q)²` over all frames.
    pub fn batch_loss<F: Borrow<MovingFrame> + Sync>(&self, frames: &[F]) -> Result<f64> {
        if frames.is_empty() {
            return Err(Error::Empty("frame batch"));
        }
        let sq: Vec<f64> = frames
            .par_iter()
            .map(|f| {
                let f = f.borrow();
                let p = self.forward(f)?.value;
                Ok((p - f.target) * (p - f.target))
            })
            .collect::<Result<_>>()?;
        Ok(sq.iter().sum::<f64>() / frames.len() as f64)
    }

    /// Runs one frame forward and keeps every activation needed for the
    /// backward pass.
    pub fn record<'f>(&self, frame: &'f MovingFrame) -> Result<FrameTape<'f>> {
        self.check_frame(frame)?;
        let d = self.config.embed_width();
        let history = frame
            .history
            .iter()
            .map(|c| self.embed_cycle(&c.features))
            .collect::<Result<Vec<_>>>()?;
        let (reference, attention, pooled) = match self.config.pooling {
            Pooling::Mean => {
                let n = history.len() as f64;
                let mut pooled = vec![0.0; d];
                for e in &history {
                    for (p, v) in pooled.iter_mut().zip(e) {
                        *p += v / n;
                    }
                }
                (None, None, pooled)
            }
            Pooling::Attention => {
                let reference = self.embed_cycle(&frame.reference.features)?;
                let slots = history
                    .iter()
                    .map(|e| self.attention_parts(e, &reference))
                    .collect::<Result<Vec<_>>>()?;
                let scores: Vec<f64> = slots.iter().map(|s| s.score).collect();
                let alpha = attention_weights(&scores);
                let pooled = weighted_sum(&alpha, &history, d);
                (Some(reference), Some(AttentionTape { slots, alpha }), pooled)
            }
        };
        let head_pre = self.params.head_hidden.forward(&pooled)?;
        let head_act = match self.config.head_activation {
            HeadActivation::None => head_pre.clone(),
            HeadActivation::Relu => tensor::relu(&head_pre),
        };
        let prediction = self.params.head_out.forward(&head_act)?[0];
        Ok(FrameTape {
            frame,
            history,
            reference,
            attention,
            pooled,
            head_pre,
            head_act,
            prediction,
        })
    }

    /// Loss and its exact gradient over `frames`.
    ///
    /// Per-frame work runs in parallel; partial sums are reduced over fixed
    /// chunks in frame order, so the result does not depend on thread count.
    pub fn loss_and_grad<F: Borrow<MovingFrame> + Sync>(&self, frames: &[F]) -> Result<(f64, DdnParams)> {
        const CHUNK: usize = 8;
        if frames.is_empty() {
            return Err(Error::Empty("frame batch"));
        }
        let m = frames.len() as f64;
        let partials: Vec<(f64, DdnParams)> = frames
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut grads = DdnParams::zeros(&self.config);
                let mut loss = 0.0;
                for frame in chunk {
                    let frame = frame.borrow();
                    let tape = self.record(frame)?;
                    let r = tape.prediction - frame.target;
                    loss += r * r;
                    tape.backward(self, 2.0 * r / m, &mut grads);
                }
                Ok((loss, grads))
            })
            .collect::<Result<_>>()?;
        let mut parts = partials.into_iter();
        let (mut loss, mut grads) = parts.next().expect("at least one chunk");
        for (l, g) in parts {
            loss += l;
            grads.add_scaled(&g, 1.0);
        }
        Ok((loss / m, grads))
    }

    fn check_frame(&self, frame: &MovingFrame) -> Result<()> {
        if frame.history.len() != self.config.history {
            return Err(Error::shape(
                "frame",
                format!("{} history cycles", frame.history.len()),
                format!("N = {}", self.config.history),
            ));
        }
        for cycle in frame.history.iter().chain(std::iter::once(&frame.reference)) {
            self.check_cycle(cycle)?;
        }
        Ok(())
    }

    fn check_cycle(&self, cycle: &CycleFeatures) -> Result<()> {
        let lens: Vec<usize> = cycle.features.iter().map(Vec::len).collect();
        if lens != self.config.feature_lens {
            return Err(Error::shape(
                "cycle features",
                format!("cycle {} lengths {lens:?}", cycle.cycle),
                format!("{:?}", self.config.feature_lens),
            ));
        }
        Ok(())
    }
}

/// Softmax over the scores of one frame.
pub fn attention_weights(scores: &[f64]) -> Vec<f64> {
    tensor::softmax(scores)
}

fn weighted_sum(weights: &[f64], vectors: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for (a, e) in weights.iter().zip(vectors) {
        for (o, v) in out.iter_mut().zip(e) {
            *o += a * v;
        }
    }
    out
}

struct ScoreParts {
    input: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
    score: f64,
}

struct AttentionTape {
    slots: Vec<ScoreParts>,
    alpha: Vec<f64>,
}

/// Cached activations of one forward evaluation.
pub struct FrameTape<'f> {
    frame: &'f MovingFrame,
    history: Vec<Vec<f64>>,
    reference: Option<Vec<f64>>,
    attention: Option<AttentionTape>,
    pooled: Vec<f64>,
    head_pre: Vec<f64>,
    head_act: Vec<f64>,
    prediction: f64,
}

impl FrameTape<'_> {
    pub fn prediction(&self) -> f64 {
        self.prediction
    }

    pub fn attention(&self) -> Option<&[f64]> {
        self.attention.as_ref().map(|a| a.alpha.as_slice())
    }

    /// Every value that passed through a ReLU, for locating kinks.
    pub fn relu_inputs(&self, model: &Ddn) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some(att) = &self.attention {
            for s in &att.slots {
                out.extend_from_slice(&s.pre);
            }
        }
        if model.config.head_activation == HeadActivation::Relu {
            out.extend_from_slice(&self.head_pre);
        }
        out
    }

    /// Accumulates `grad_output · ∂Q̂/∂θ` into `grads`.
    pub fn backward(&self, model: &Ddn, grad_output: f64, grads: &mut DdnParams) {
        let p = &model.params;
        let d = model.config.embed_width();

        let g_act = p.head_out.backward(&self.head_act, &[grad_output], &mut grads.head_out);
        let g_pre = match model.config.head_activation {
            HeadActivation::None => g_act,
            HeadActivation::Relu => tensor::relu_backward(&self.head_pre, &g_act),
        };
        let g_pooled = p.head_hidden.backward(&self.pooled, &g_pre, &mut grads.head_hidden);

        let n = self.history.len();
        let mut g_hist = vec![vec![0.0; d]; n];
        let mut g_ref = vec![0.0; d];
        match (&self.attention, &self.reference) {
            (Some(att), Some(reference)) => {
                let g_alpha: Vec<f64> = self.history.iter().map(|e| tensor::dot(&g_pooled, e)).collect();
                let g_scores = tensor::softmax_backward(&att.alpha, &g_alpha);
                for (i, slot) in att.slots.iter().enumerate() {
                    let e = &self.history[i];
                    for (g, v) in g_hist[i].iter_mut().zip(&g_pooled) {
                        *g += att.alpha[i] * v;
                    }
                    let g_hidden = p
                        .attn_score
                        .backward(&slot.hidden, &[g_scores[i]], &mut grads.attn_score);
                    let g_pre = tensor::relu_backward(&slot.pre, &g_hidden);
                    let g_in = p.attn_hidden.backward(&slot.input, &g_pre, &mut grads.attn_hidden);
                    let (g_cur, rest) = g_in.split_at(d);
                    let (g_r, rest) = rest.split_at(d);
                    let (g_diff, g_prod) = rest.split_at(d);
                    for k in 0..d {
                        g_hist[i][k] += g_cur[k] + g_diff[k] + g_prod[k] * reference[k];
                        g_ref[k] += g_r[k] - g_diff[k] + g_prod[k] * e[k];
                    }
                }
            }
            _ => {
                for g in &mut g_hist {
                    for (gk, v) in g.iter_mut().zip(&g_pooled) {
                        *gk += v / n as f64;
                    }
                }
            }
        }

        for (cycle, g) in self.frame.history.iter().zip(&g_hist) {
            embed_backward(cycle, g, &mut grads.embed);
        }
        if self.reference.is_some() {
            embed_backward(&self.frame.reference, &g_ref, &mut grads.embed);
        }
    }
}

fn embed_backward(cycle: &CycleFeatures, grad: &[f64], grads: &mut [Dense]) {
    let mut offset = 0;
    for (x, g_layer) in cycle.features.iter().zip(grads.iter_mut()) {
        let k = g_layer.outputs();
        let block = &grad[offset..offset + k];
        g_layer.weight.add_outer(block, x);
        for (b, g) in g_layer.bias.iter_mut().zip(block) {
            *b += g;
        }
        offset += k;
    }
}
