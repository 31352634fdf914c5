//! The encoder-decoder network.
//!
//! Encoder: token + position embeddings, `local_layers` pre-norm layers whose
//! self-attention is restricted to the token's own turn, then
//! `global_layers` unrestricted layers, then a final layer norm.
//!
//! Decoder: causal self-attention, cross-attention to the encoded history and
//! a GELU feed-forward block per layer, a final layer norm, an LM head
//! producing next-token logits, and an MLP score head on the last position.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::history::{TokenId, TurnedHistory};
use super::mask::{build_causal_mask, build_global_mask, build_local_mask, MaskMatrix};
use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;
const EMBED_STD: f64 = 0.02;

/// Which masks the encoder layers use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Local layers use the turn mask, global layers the full mask.
    #[default]
    Standard,
    /// Every layer is global.
    NoLocal,
    /// Every layer is turn-local.
    NoGlobal,
}

impl std::str::FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "no_local" => Ok(Self::NoLocal),
            "no_global" => Ok(Self::NoGlobal),
            other => Err(Error::Config(format!("unknown mask mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Init {
    /// N(0, 0.02), for token and position tables.
    Embedding,
    /// N(0, 1/fan_in) over the leading dimension of a `[in, out]` weight.
    FanIn,
    Zeros,
    Ones,
}

/// Name, shape and initialization of one parameter.
#[derive(Clone, Debug)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub decay: bool,
    init: Init,
}

fn weight(name: String, shape: Vec<usize>) -> ParamSpec {
    ParamSpec {
        name,
        shape,
        decay: true,
        init: Init::FanIn,
    }
}

fn bias(name: String, n: usize) -> ParamSpec {
    ParamSpec {
        name,
        shape: vec![n],
        decay: false,
        init: Init::Zeros,
    }
}

fn norm(prefix: &str, d: usize) -> [ParamSpec; 2] {
    [
        ParamSpec {
            name: format!("{prefix}.gain"),
            shape: vec![d],
            decay: false,
            init: Init::Ones,
        },
        bias(format!("{prefix}.bias"), d),
    ]
}

fn attention_specs(prefix: &str, d: usize) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    for p in ["q", "k", "v", "o"] {
        out.push(weight(format!("{prefix}.{p}.weight"), vec![d, d]));
        out.push(bias(format!("{prefix}.{p}.bias"), d));
    }
    out
}

fn ffn_specs(prefix: &str, d: usize, ff: usize) -> Vec<ParamSpec> {
    vec![
        weight(format!("{prefix}.fc1.weight"), vec![d, ff]),
        bias(format!("{prefix}.fc1.bias"), ff),
        weight(format!("{prefix}.fc2.weight"), vec![ff, d]),
        bias(format!("{prefix}.fc2.bias"), d),
    ]
}

fn table(name: &str, rows: usize, d: usize) -> ParamSpec {
    ParamSpec {
        init: Init::Embedding,
        ..weight(name.into(), vec![rows, d])
    }
}

/// Every parameter implied by `config`, in serialization order.
pub fn parameter_layout(config: &ModelConfig) -> Vec<ParamSpec> {
    let d = config.d_model;
    let mut specs = vec![
        table("embed.tokens", config.vocab_size, d),
        table("encoder.positions", config.max_len, d),
        table("decoder.positions", config.max_len, d),
    ];
    for l in 0..config.encoder_layers() {
        let p = format!("encoder.layers.{l}");
        specs.extend(norm(&format!("{p}.self_attn_norm"), d));
        specs.extend(attention_specs(&format!("{p}.self_attn"), d));
        specs.extend(norm(&format!("{p}.ffn_norm"), d));
        specs.extend(ffn_specs(&format!("{p}.ffn"), d, config.d_ff));
    }
    specs.extend(norm("encoder.final_norm", d));
    for l in 0..config.decoder_layers {
        let p = format!("decoder.layers.{l}");
        specs.extend(norm(&format!("{p}.self_attn_norm"), d));
        specs.extend(attention_specs(&format!("{p}.self_attn"), d));
        specs.extend(norm(&format!("{p}.cross_attn_norm"), d));
        specs.extend(attention_specs(&format!("{p}.cross_attn"), d));
        specs.extend(norm(&format!("{p}.ffn_norm"), d));
        specs.extend(ffn_specs(&format!("{p}.ffn"), d, config.d_ff));
    }
    specs.extend(norm("decoder.final_norm", d));
    specs.push(weight("lm_head.weight".into(), vec![d, config.vocab_size]));
    specs.push(weight("score_head.dense.weight".into(), vec![d, d]));
    specs.push(bias("score_head.dense.bias".into(), d));
    specs.push(weight("score_head.out.weight".into(), vec![d, 1]));
    specs.push(bias("score_head.out.bias".into(), 1));
    specs.push(ParamSpec {
        name: "tau".into(),
        shape: vec![1],
        decay: false,
        init: Init::Ones,
    });
    specs
}

#[derive(Clone, Copy, Debug)]
pub struct NormParams {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionParams {
    pub q_w: ParamId,
    pub q_b: ParamId,
    pub k_w: ParamId,
    pub k_b: ParamId,
    pub v_w: ParamId,
    pub v_b: ParamId,
    pub o_w: ParamId,
    pub o_b: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct FfnParams {
    pub fc1_w: ParamId,
    pub fc1_b: ParamId,
    pub fc2_w: ParamId,
    pub fc2_b: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderLayerParams {
    pub self_attn_norm: NormParams,
    pub self_attn: AttentionParams,
    pub ffn_norm: NormParams,
    pub ffn: FfnParams,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderLayerParams {
    pub self_attn_norm: NormParams,
    pub self_attn: AttentionParams,
    pub cross_attn_norm: NormParams,
    pub cross_attn: AttentionParams,
    pub ffn_norm: NormParams,
    pub ffn: FfnParams,
}

#[derive(Clone, Copy, Debug)]
pub struct ScoreHeadParams {
    pub dense_w: ParamId,
    pub dense_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// Resolved parameter handles.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub tokens: ParamId,
    pub enc_positions: ParamId,
    pub dec_positions: ParamId,
    pub encoder: Vec<EncoderLayerParams>,
    pub encoder_norm: NormParams,
    pub decoder: Vec<DecoderLayerParams>,
    pub decoder_norm: NormParams,
    pub lm_head: ParamId,
    pub score_head: ScoreHeadParams,
    pub tau: ParamId,
}

struct Resolver<'a>(&'a ParamStore);

impl Resolver<'_> {
    fn id(&self, name: &str) -> Result<ParamId> {
        self.0
            .id(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
    }

    fn norm(&self, p: &str) -> Result<NormParams> {
        Ok(NormParams {
            gain: self.id(&format!("{p}.gain"))?,
            bias: self.id(&format!("{p}.bias"))?,
        })
    }

    fn attention(&self, p: &str) -> Result<AttentionParams> {
        let g = |s: &str| self.id(&format!("{p}.{s}"));
        Ok(AttentionParams {
            q_w: g("q.weight")?,
            q_b: g("q.bias")?,
            k_w: g("k.weight")?,
            k_b: g("k.bias")?,
            v_w: g("v.weight")?,
            v_b: g("v.bias")?,
            o_w: g("o.weight")?,
            o_b: g("o.bias")?,
        })
    }

    fn ffn(&self, p: &str) -> Result<FfnParams> {
        let g = |s: &str| self.id(&format!("{p}.{s}"));
        Ok(FfnParams {
            fc1_w: g("fc1.weight")?,
            fc1_b: g("fc1.bias")?,
            fc2_w: g("fc2.weight")?,
            fc2_b: g("fc2.bias")?,
        })
    }
}

impl ModelParams {
    fn resolve(config: &ModelConfig, store: &ParamStore) -> Result<Self> {
        let r = Resolver(store);
        let encoder = (0..config.encoder_layers())
            .map(|l| {
                let p = format!("encoder.layers.{l}");
                Ok(EncoderLayerParams {
                    self_attn_norm: r.norm(&format!("{p}.self_attn_norm"))?,
                    self_attn: r.attention(&format!("{p}.self_attn"))?,
                    ffn_norm: r.norm(&format!("{p}.ffn_norm"))?,
                    ffn: r.ffn(&format!("{p}.ffn"))?,
                })
            })
            .collect::<Result<_>>()?;
        let decoder = (0..config.decoder_layers)
            .map(|l| {
                let p = format!("decoder.layers.{l}");
                Ok(DecoderLayerParams {
                    self_attn_norm: r.norm(&format!("{p}.self_attn_norm"))?,
                    self_attn: r.attention(&format!("{p}.self_attn"))?,
                    cross_attn_norm: r.norm(&format!("{p}.cross_attn_norm"))?,
                    cross_attn: r.attention(&format!("{p}.cross_attn"))?,
                    ffn_norm: r.norm(&format!("{p}.ffn_norm"))?,
                    ffn: r.ffn(&format!("{p}.ffn"))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            tokens: r.id("embed.tokens")?,
            enc_positions: r.id("encoder.positions")?,
            dec_positions: r.id("decoder.positions")?,
            encoder,
            encoder_norm: r.norm("encoder.final_norm")?,
            decoder,
            decoder_norm: r.norm("decoder.final_norm")?,
            lm_head: r.id("lm_head.weight")?,
            score_head: ScoreHeadParams {
                dense_w: r.id("score_head.dense.weight")?,
                dense_b: r.id("score_head.dense.bias")?,
                out_w: r.id("score_head.out.weight")?,
                out_b: r.id("score_head.out.bias")?,
            },
            tau: r.id("tau")?,
        })
    }
}

/// Cross-attention keys/values of the encoder states for one decoder layer,
/// split by head. Keys are stored transposed.
#[derive(Clone, Debug)]
struct CrossKv {
    keys_t: Vec<Var>,
    values: Vec<Var>,
}

/// Final encoder states plus the per-decoder-layer cross-attention
/// projections, which every candidate decoded against this history shares.
#[derive(Clone, Debug)]
pub struct EncodedHistory {
    pub states: Var,
    cross: Vec<CrossKv>,
}

/// Post-softmax attention weights, one `[query x key]` matrix per head.
#[derive(Clone, Debug)]
pub struct AttentionTrace {
    pub heads: Vec<Var>,
}

#[derive(Clone, Copy, Debug)]
pub struct Decoded {
    /// `[T x d_model]` final decoder states.
    pub hidden: Var,
    /// `[T x vocab]`; row `t` predicts token `t + 1`.
    pub logits: Var,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    store: ParamStore,
    params: ModelParams,
}

impl Model {
    /// Randomly initialized model: N(0, 0.02) embeddings, N(0, 1/fan_in)
    /// projection weights, zero biases, unit layer-norm gains, temperature 1.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embed = Normal::new(0.0, EMBED_STD).expect("valid std");
        let mut store = ParamStore::new();
        for spec in parameter_layout(&config) {
            let value = match spec.init {
                Init::Embedding => Tensor::from_fn(&spec.shape, |_| embed.sample(&mut rng)),
                Init::FanIn => {
                    let normal = Normal::new(0.0, 1.0 / (spec.shape[0] as f64).sqrt()).expect("valid std");
                    Tensor::from_fn(&spec.shape, |_| normal.sample(&mut rng))
                }
                Init::Zeros => Tensor::zeros(&spec.shape),
                Init::Ones => Tensor::full(&spec.shape, 1.0),
            };
            store.add(spec.name, value, spec.decay)?;
        }
        Self::from_store(config, store)
    }

    /// Wraps an existing store, checking it against the layout implied by
    /// `config`.
    pub fn from_store(config: ModelConfig, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let layout = parameter_layout(&config);
        if layout.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                layout.len(),
                store.len()
            )));
        }
        for spec in &layout {
            let p = store
                .by_name(&spec.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{}`", spec.name)))?;
            if p.value.shape() != spec.shape.as_slice() {
                return Err(Error::ParamShape {
                    name: spec.name.clone(),
                    expected: spec.shape.clone(),
                    found: p.value.shape().to_vec(),
                });
            }
        }
        let params = ModelParams::resolve(&config, &store)?;
        Ok(Self {
            config,
            store,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn tau(&self) -> f64 {
        self.store.value(self.params.tau).item()
    }

    pub fn tau_var(&self, t: &mut Tape) -> Var {
        t.param(&self.store, self.params.tau)
    }

    fn p(&self, t: &mut Tape, id: ParamId) -> Var {
        t.param(&self.store, id)
    }

    fn linear(&self, t: &mut Tape, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let w = self.p(t, w);
        let b = self.p(t, b);
        let y = t.matmul(x, w)?;
        t.add_bias(y, b)
    }

    fn norm(&self, t: &mut Tape, x: Var, n: NormParams) -> Result<Var> {
        let g = self.p(t, n.gain);
        let b = self.p(t, n.bias);
        t.layer_norm(x, g, b, LN_EPS)
    }

    fn ffn(&self, t: &mut Tape, x: Var, f: FfnParams) -> Result<Var> {
        let h = self.linear(t, x, f.fc1_w, f.fc1_b)?;
        let h = t.gelu(h);
        self.linear(t, h, f.fc2_w, f.fc2_b)
    }

    fn split_heads(&self, t: &mut Tape, x: Var) -> Result<Vec<Var>> {
        let dk = self.config.d_k();
        (0..self.config.n_heads)
            .map(|h| t.slice_cols(x, h * dk, dk))
            .collect()
    }

    /// Multi-head attention of `queries` over `keys_values`:
    /// per head `softmax(Q K^T / sqrt(d_k) + M) V`, heads concatenated and
    /// output-projected. Returns the output and the per-head weights.
    pub fn masked_attention(
        &self,
        t: &mut Tape,
        a: &AttentionParams,
        queries: Var,
        keys_values: Var,
        mask: Option<&MaskMatrix>,
    ) -> Result<(Var, AttentionTrace)> {
        let q = self.linear(t, queries, a.q_w, a.q_b)?;
        let k = self.linear(t, keys_values, a.k_w, a.k_b)?;
        let v = self.linear(t, keys_values, a.v_w, a.v_b)?;
        let kt = self
            .split_heads(t, k)?
            .into_iter()
            .map(|kh| t.transpose(kh))
            .collect::<Result<Vec<_>>>()?;
        let vh = self.split_heads(t, v)?;
        self.attend(t, a, q, &kt, &vh, mask)
    }

    fn attend(
        &self,
        t: &mut Tape,
        a: &AttentionParams,
        q: Var,
        keys_t: &[Var],
        values: &[Var],
        mask: Option<&MaskMatrix>,
    ) -> Result<(Var, AttentionTrace)> {
        let scale = 1.0 / (self.config.d_k() as f64).sqrt();
        let qh = self.split_heads(t, q)?;
        let mut outs = Vec::with_capacity(qh.len());
        let mut weights = Vec::with_capacity(qh.len());
        for ((&q, &kt), &v) in qh.iter().zip(keys_t).zip(values) {
            let (o, w) = attention_head(t, q, kt, v, scale, mask)?;
            outs.push(o);
            weights.push(w);
        }
        let cat = t.concat_cols(&outs)?;
        let out = self.linear(t, cat, a.o_w, a.o_b)?;
        Ok((out, AttentionTrace { heads: weights }))
    }

    fn check_tokens(&self, what: &'static str, tokens: &[TokenId]) -> Result<Vec<usize>> {
        if tokens.len() > self.config.max_len {
            return Err(Error::contract(format!(
                "{what} has {} tokens, max_len is {}",
                tokens.len(),
                self.config.max_len
            )));
        }
        tokens
            .iter()
            .enumerate()
            .map(|(position, &id)| {
                let id = id as usize;
                if id >= self.config.vocab_size {
                    Err(Error::Index {
                        what,
                        position,
                        value: id,
                        bound: self.config.vocab_size,
                    })
                } else {
                    Ok(id)
                }
            })
            .collect()
    }

    fn embed(&self, t: &mut Tape, ids: &[usize], positions: ParamId) -> Result<Var> {
        let table = self.p(t, self.params.tokens);
        let tok = t.gather_rows(table, ids)?;
        let pos_table = self.p(t, positions);
        let pos_ids: Vec<usize> = (0..ids.len()).collect();
        let pos = t.gather_rows(pos_table, &pos_ids)?;
        t.add(tok, pos)
    }

    /// Encodes a history with the standard local-then-global masking.
    pub fn encode_history(&self, t: &mut Tape, h: &TurnedHistory) -> Result<EncodedHistory> {
        self.encode_with(t, h, MaskMode::Standard)
    }

    pub fn encode_with(&self, t: &mut Tape, h: &TurnedHistory, mode: MaskMode) -> Result<EncodedHistory> {
        Ok(self.encode_traced(t, h, mode, None)?.0)
    }

    /// Encodes `h`, optionally stopping after `stop_after` encoder layers
    /// (skipping the final norm). Also returns the self-attention weights
    /// of every layer that ran.
    pub fn encode_traced(
        &self,
        t: &mut Tape,
        h: &TurnedHistory,
        mode: MaskMode,
        stop_after: Option<usize>,
    ) -> Result<(EncodedHistory, Vec<AttentionTrace>)> {
        let ids = self.check_tokens("history token", h.tokens())?;
        let x = self.embed(t, &ids, self.params.enc_positions)?;
        self.encode_embedded(t, x, h.turn_ids(), mode, stop_after)
    }

    /// Encoder stack over precomputed input embeddings.
    pub fn encode_embedded(
        &self,
        t: &mut Tape,
        mut x: Var,
        turn_ids: &[usize],
        mode: MaskMode,
        stop_after: Option<usize>,
    ) -> Result<(EncodedHistory, Vec<AttentionTrace>)> {
        let local = build_local_mask(turn_ids)?;
        let global = build_global_mask(turn_ids.len())?;
        let n_layers = stop_after
            .unwrap_or(self.config.encoder_layers())
            .min(self.config.encoder_layers());
        let mut traces = Vec::with_capacity(n_layers);
        for (l, layer) in self.params.encoder.iter().take(n_layers).enumerate() {
            let is_local = match mode {
                MaskMode::Standard => l < self.config.local_layers,
                MaskMode::NoLocal => false,
                MaskMode::NoGlobal => true,
            };
            let mask = if is_local { &local } else { &global };
            let hn = self.norm(t, x, layer.self_attn_norm)?;
            let (a, trace) = self.masked_attention(t, &layer.self_attn, hn, hn, Some(mask))?;
            x = t.add(x, a)?;
            let hn = self.norm(t, x, layer.ffn_norm)?;
            let f = self.ffn(t, hn, layer.ffn)?;
            x = t.add(x, f)?;
            traces.push(trace);
        }
        let states = if stop_after.is_some_and(|s| s < self.config.encoder_layers()) {
            x
        } else {
            self.norm(t, x, self.params.encoder_norm)?
        };
        let mut cross = Vec::with_capacity(self.params.decoder.len());
        for layer in &self.params.decoder {
            let a = &layer.cross_attn;
            let k = self.linear(t, states, a.k_w, a.k_b)?;
            let v = self.linear(t, states, a.v_w, a.v_b)?;
            let keys_t = self
                .split_heads(t, k)?
                .into_iter()
                .map(|kh| t.transpose(kh))
                .collect::<Result<Vec<_>>>()?;
            let values = self.split_heads(t, v)?;
            cross.push(CrossKv { keys_t, values });
        }
        Ok((EncodedHistory { states, cross }, traces))
    }

    /// Teacher-forced decoding of `y` (BOS ... EOS) against `enc`.
    pub fn decode_candidate(&self, t: &mut Tape, enc: &EncodedHistory, y: &[TokenId]) -> Result<Decoded> {
        if y.is_empty() {
            return Err(Error::contract("candidate sequence is empty"));
        }
        let ids = self.check_tokens("candidate token", y)?;
        let causal = build_causal_mask(ids.len())?;
        let mut x = self.embed(t, &ids, self.params.dec_positions)?;
        for (layer, cross) in self.params.decoder.iter().zip(&enc.cross) {
            let hn = self.norm(t, x, layer.self_attn_norm)?;
            let (a, _) = self.masked_attention(t, &layer.self_attn, hn, hn, Some(&causal))?;
            x = t.add(x, a)?;
            let hn = self.norm(t, x, layer.cross_attn_norm)?;
            let q = self.linear(t, hn, layer.cross_attn.q_w, layer.cross_attn.q_b)?;
            let (c, _) = self.attend(t, &layer.cross_attn, q, &cross.keys_t, &cross.values, None)?;
            x = t.add(x, c)?;
            let hn = self.norm(t, x, layer.ffn_norm)?;
            let f = self.ffn(t, hn, layer.ffn)?;
            x = t.add(x, f)?;
        }
        let hidden = self.norm(t, x, self.params.decoder_norm)?;
        let lm = self.p(t, self.params.lm_head);
        let logits = t.matmul(hidden, lm)?;
        Ok(Decoded { hidden, logits })
    }

    /// `S^d = w2 . tanh(W1 h + b1) + b2` for a `[1 x d_model]` state.
    pub fn score_head(&self, t: &mut Tape, h_last: Var) -> Result<Var> {
        let s = self.params.score_head;
        let h = self.linear(t, h_last, s.dense_w, s.dense_b)?;
        let h = t.tanh(h);
        self.linear(t, h, s.out_w, s.out_b)
    }

    /// Discriminative score from the last decoder position.
    pub fn discriminative_score(&self, t: &mut Tape, decoded: &Decoded) -> Result<Var> {
        let len = t.value(decoded.hidden).rows();
        let last = t.slice_rows(decoded.hidden, len - 1, 1)?;
        self.score_head(t, last)
    }
}

/// One attention head: `softmax(q k^T * scale + mask) v`. `keys_t` is the
/// transposed key matrix. Returns the output and the attention weights.
pub fn attention_head(
    t: &mut Tape,
    q: Var,
    keys_t: Var,
    v: Var,
    scale: f64,
    mask: Option<&MaskMatrix>,
) -> Result<(Var, Var)> {
    let scores = t.matmul(q, keys_t)?;
    let mut scores = t.scale(scores, scale);
    if let Some(m) = mask {
        let st = t.value(scores);
        if st.shape() != m.as_tensor().shape() {
            return Err(Error::Shape {
                op: "masked_attention",
                lhs: st.shape().to_vec(),
                rhs: m.as_tensor().shape().to_vec(),
            });
        }
        scores = t.add_const(scores, m.as_tensor())?;
    }
    let w = t.softmax(scores);
    let out = t.matmul(w, v)?;
    Ok((out, w))
}
