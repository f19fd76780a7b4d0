use super::bias::GatedBiasParams;
use super::config::ModelConfig;
use super::params::{BoundParams, ParamId, ParamKind, ParamStore};
use super::TokenBatch;
use crate::error::Result;
use crate::tensor::{Float, Graph, NodeId, Tensor};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug)]
pub struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl Norm {
    fn register<T: Float>(store: &mut ParamStore<T>, prefix: &str, d: usize) -> Self {
        Norm {
            gain: store.add(format!("{prefix}.gain"), ParamKind::NormGain, Tensor::full(&[d], T::one())),
            bias: store.add(format!("{prefix}.bias"), ParamKind::NormBias, Tensor::zeros(&[d])),
        }
    }

    fn apply<T: Float>(&self, g: &mut Graph<T>, p: &BoundParams, x: NodeId) -> Result<NodeId> {
        g.layer_norm(x, p[self.gain], p[self.bias], LN_EPS)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    fn register<T: Float>(store: &mut ParamStore<T>, prefix: &str, fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: store.add(format!("{prefix}.weight"), ParamKind::Weight, Tensor::zeros(&[fan_in, fan_out])),
            bias: store.add(format!("{prefix}.bias"), ParamKind::Bias, Tensor::zeros(&[fan_out])),
        }
    }

    fn apply<T: Float>(&self, g: &mut Graph<T>, p: &BoundParams, x: NodeId) -> Result<NodeId> {
        let y = g.matmul(x, p[self.weight])?;
        g.add_broadcast(y, p[self.bias])
    }
}

/// Gated relative position bias of one attention layer, all heads.
#[derive(Clone, Copy, Debug)]
pub struct GateParams {
    /// `[H, 2k + 1]`
    pub d_table: ParamId,
    /// `[H, d_k]`
    pub u: ParamId,
    /// `[H, d_k]`
    pub v: ParamId,
    /// `[H]`
    pub w: ParamId,
}

#[derive(Clone, Debug)]
pub struct Block {
    pub attn_norm: Norm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attn_out: Linear,
    pub gate: GateParams,
    pub ffn_norm: Norm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
}

/// Per-layer results of a forward pass.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// Hidden states `[B*n, d_h]`; index 0 is the embedding layer.
    pub layers: Vec<NodeId>,
    /// Final-normalized top layer, consumed by the prediction heads.
    pub top: NodeId,
    /// Attention probabilities `[B*H, n, n]` for each block.
    pub attention: Vec<NodeId>,
}

/// Pre-LN transformer encoder stack; position information enters only via
/// the gated relative position bias.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: ModelConfig,
    pub token_embedding: ParamId,
    pub embed_norm: Norm,
    pub blocks: Vec<Block>,
    pub final_norm: Norm,
}

impl Encoder {
    /// Adds this stack's parameters to `store`. An existing token
    /// embedding can be passed in to share it.
    pub fn register<T: Float>(config: &ModelConfig, store: &mut ParamStore<T>, shared_embedding: Option<ParamId>) -> Self {
        let pre = config.role.prefix();
        let d = config.hidden_size;
        let (h, dk) = (config.num_heads, config.head_dim());
        let token_embedding = shared_embedding.unwrap_or_else(|| {
            store.add(
                format!("{pre}.token_embedding"),
                ParamKind::Embedding,
                Tensor::zeros(&[config.vocab_size, d]),
            )
        });
        let embed_norm = Norm::register(store, &format!("{pre}.embed_norm"), d);
        let blocks = (1..=config.num_layers)
            .map(|l| {
                let bp = format!("{pre}.block{l}");
                Block {
                    attn_norm: Norm::register(store, &format!("{bp}.attn_norm"), d),
                    query: Linear::register(store, &format!("{bp}.attn.query"), d, d),
                    key: Linear::register(store, &format!("{bp}.attn.key"), d, d),
                    value: Linear::register(store, &format!("{bp}.attn.value"), d, d),
                    attn_out: Linear::register(store, &format!("{bp}.attn.out"), d, d),
                    gate: GateParams {
                        d_table: store.add(
                            format!("{bp}.attn.rel_bias"),
                            ParamKind::Gate,
                            Tensor::zeros(&[h, 2 * config.max_rel_distance + 1]),
                        ),
                        u: store.add(format!("{bp}.attn.gate_u"), ParamKind::Gate, Tensor::zeros(&[h, dk])),
                        v: store.add(format!("{bp}.attn.gate_v"), ParamKind::Gate, Tensor::zeros(&[h, dk])),
                        w: store.add(format!("{bp}.attn.gate_w"), ParamKind::Gate, Tensor::zeros(&[h])),
                    },
                    ffn_norm: Norm::register(store, &format!("{bp}.ffn_norm"), d),
                    ffn_in: Linear::register(store, &format!("{bp}.ffn.in"), d, config.ffn_size),
                    ffn_out: Linear::register(store, &format!("{bp}.ffn.out"), config.ffn_size, d),
                }
            })
            .collect();
        let final_norm = Norm::register(store, &format!("{pre}.final_norm"), d);
        Encoder {
            config: config.clone(),
            token_embedding,
            embed_norm,
            blocks,
            final_norm,
        }
    }

    /// Every parameter id owned by the stack (including a shared embedding).
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.token_embedding, self.embed_norm.gain, self.embed_norm.bias];
        for b in &self.blocks {
            for n in [b.attn_norm, b.ffn_norm] {
                ids.extend([n.gain, n.bias]);
            }
            for lin in [b.query, b.key, b.value, b.attn_out, b.ffn_in, b.ffn_out] {
                ids.extend([lin.weight, lin.bias]);
            }
            ids.extend([b.gate.d_table, b.gate.u, b.gate.v, b.gate.w]);
        }
        ids.extend([self.final_norm.gain, self.final_norm.bias]);
        ids
    }

    /// Applies the depth rescale: block `l` (1-based) has its attention
    /// output and FFN output matrices multiplied by `1 / sqrt(2l)`.
    pub fn rescale_output_weights<T: Float>(&self, store: &mut ParamStore<T>) {
        for (i, b) in self.blocks.iter().enumerate() {
            let factor = depth_scale(i + 1);
            store.scale_param(b.attn_out.weight, factor);
            store.scale_param(b.ffn_out.weight, factor);
        }
    }

    /// Reference parameters of one head for the scalar bias formula.
    pub fn gated_bias_params<T: Float>(&self, store: &ParamStore<T>, layer: usize, head: usize) -> GatedBiasParams {
        let gate = &self.blocks[layer].gate;
        let row = |id: ParamId| -> Vec<f64> {
            let t = &store.get(id).value;
            let w = t.shape()[1];
            t.data()[head * w..(head + 1) * w].iter().map(|v| v.as_f64()).collect()
        };
        GatedBiasParams {
            d_table: row(gate.d_table),
            u: row(gate.u),
            v: row(gate.v),
            w: store.get(gate.w).value.data()[head].as_f64(),
        }
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<T>, p: &BoundParams, batch: &TokenBatch) -> Result<EncoderOutput> {
        let emb = g.embedding(p[self.token_embedding], &batch.ids)?;
        let mut x = self.embed_norm.apply(g, p, emb)?;
        let valid = batch.key_valid();
        let mut layers = vec![x];
        let mut attention = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let h = block.attn_norm.apply(g, p, x)?;
            let (attn, probs) = self.attention(g, p, block, h, batch.batch, batch.seq_len, &valid)?;
            x = g.add(x, attn)?;
            let h = block.ffn_norm.apply(g, p, x)?;
            let f = block.ffn_in.apply(g, p, h)?;
            let f = g.gelu(f);
            let f = block.ffn_out.apply(g, p, f)?;
            x = g.add(x, f)?;
            layers.push(x);
            attention.push(probs);
        }
        let top = self.final_norm.apply(g, p, x)?;
        Ok(EncoderOutput {
            layers,
            top,
            attention,
        })
    }

    /// Multi-head self-attention with gated relative position bias over
    /// `h: [B*n, d_h]`; returns the projected output and the probabilities.
    #[allow(clippy::too_many_arguments)]
    pub fn attention<T: Float>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        block: &Block,
        h: NodeId,
        batch: usize,
        seq: usize,
        key_valid: &[bool],
    ) -> Result<(NodeId, NodeId)> {
        let heads = self.config.num_heads;
        let dk = self.config.head_dim();
        let tokens = batch * seq;
        let q = block.query.apply(g, p, h)?;
        let k = block.key.apply(g, p, h)?;
        let v = block.value.apply(g, p, h)?;
        let split = [batch, seq, heads, dk];
        let qh = g.swap_middle(q, split, &[batch * heads, seq, dk])?;
        let kh = g.swap_middle(k, split, &[batch * heads, seq, dk])?;
        let vh = g.swap_middle(v, split, &[batch * heads, seq, dk])?;

        // Query-conditioned gates, one pair per (token, head).
        let q3 = g.reshape(q, &[tokens, heads, dk])?;
        let qu = g.mul_broadcast(q3, p[block.gate.u])?;
        let qu = g.sum_last(qu);
        let g_update = g.sigmoid(qu);
        let qv = g.mul_broadcast(q3, p[block.gate.v])?;
        let qv = g.sum_last(qv);
        let g_reset = g.sigmoid(qv);
        // r = d + g_up d + (1 - g_up) w g_reset d = d * (1 + g_up + (1 - g_up) w g_reset)
        let keep = g.scale(g_update, -1.0);
        let keep = g.add_scalar(keep, 1.0);
        let reset_term = g.mul(keep, g_reset)?;
        let reset_term = g.mul_broadcast(reset_term, p[block.gate.w])?;
        let coeff = g.add(g_update, reset_term)?;
        let coeff = g.add_scalar(coeff, 1.0);
        let bias = g.rel_pos_bias(p[block.gate.d_table], coeff, batch, seq)?;

        let scores = g.bmm_nt(qh, kh)?;
        let scores = g.scale(scores, 1.0 / (dk as f64).sqrt());
        let scores = g.add(scores, bias)?;
        let probs = g.masked_softmax(scores, key_valid, heads)?;
        let ctx = g.bmm(probs, vh)?;
        let merged = g.swap_middle(ctx, [batch, heads, seq, dk], &[tokens, heads * dk])?;
        let out = block.attn_out.apply(g, p, merged)?;
        Ok((out, probs))
    }
}

pub fn depth_scale(block: usize) -> f64 {
    1.0 / ((2 * block) as f64).sqrt()
}

/// Masked-token prediction head with output weights tied to the token
/// embedding.
#[derive(Clone, Debug)]
pub struct GeneratorHead {
    pub dense: Linear,
    pub norm: Norm,
    pub output_bias: ParamId,
    pub token_embedding: ParamId,
}

impl GeneratorHead {
    pub fn register<T: Float>(config: &ModelConfig, store: &mut ParamStore<T>, token_embedding: ParamId) -> Self {
        let d = config.hidden_size;
        GeneratorHead {
            dense: Linear::register(store, "gen.head.dense", d, d),
            norm: Norm::register(store, "gen.head.norm", d),
            output_bias: store.add("gen.head.output_bias", ParamKind::Bias, Tensor::zeros(&[config.vocab_size])),
            token_embedding,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![
            self.dense.weight,
            self.dense.bias,
            self.norm.gain,
            self.norm.bias,
            self.output_bias,
        ]
    }

    /// Vocabulary logits `[rows.len(), V]` at the selected token rows.
    pub fn logits<T: Float>(&self, g: &mut Graph<T>, p: &BoundParams, top: NodeId, rows: &[usize]) -> Result<NodeId> {
        let h = g.gather_rows(top, rows)?;
        let h = self.dense.apply(g, p, h)?;
        let h = g.gelu(h);
        let h = self.norm.apply(g, p, h)?;
        let logits = g.matmul_nt(h, p[self.token_embedding])?;
        g.add_broadcast(logits, p[self.output_bias])
    }
}

/// Per-token replaced/original classifier.
#[derive(Clone, Debug)]
pub struct DiscriminatorHead {
    pub dense: Linear,
    pub output: Linear,
}

impl DiscriminatorHead {
    pub fn register<T: Float>(config: &ModelConfig, store: &mut ParamStore<T>) -> Self {
        let d = config.hidden_size;
        DiscriminatorHead {
            dense: Linear::register(store, "disc.head.dense", d, d),
            output: Linear::register(store, "disc.head.output", d, 1),
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.dense.weight, self.dense.bias, self.output.weight, self.output.bias]
    }

    /// One logit per token, `[B*n]`; positive means "replaced".
    pub fn logits<T: Float>(&self, g: &mut Graph<T>, p: &BoundParams, top: NodeId) -> Result<NodeId> {
        let h = self.dense.apply(g, p, top)?;
        let h = g.gelu(h);
        let logit = self.output.apply(g, p, h)?;
        let n = g.value(logit).shape()[0];
        g.reshape(logit, &[n])
    }
}
