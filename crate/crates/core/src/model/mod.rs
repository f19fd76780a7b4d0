//! Transformer encoders with gated relative position bias.
//!
//! An [`ElectraModel`] owns one [`ParamStore`] holding a small generator
//! stack, a deeper discriminator stack (optionally sharing the token
//! embedding) and their prediction heads.

pub mod bias;
pub mod config;
pub mod encoder;
pub mod params;

pub use bias::{gated_rel_pos_bias, GatedBiasParams};
pub use config::{ElectraConfig, ModelConfig, Role};
pub use encoder::{depth_scale, DiscriminatorHead, Encoder, EncoderOutput, GeneratorHead};
pub use params::{BoundParams, Param, ParamId, ParamKind, ParamStore};

use crate::corpus::vocab::PAD;
use crate::error::{Error, Result};
use crate::tensor::{Float, Graph, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Right-padded token-id matrix `[batch, seq_len]`, flattened row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenBatch {
    pub ids: Vec<u32>,
    pub batch: usize,
    pub seq_len: usize,
    /// Non-pad length of every row.
    pub lengths: Vec<usize>,
}

impl TokenBatch {
    pub fn from_sequences<S: AsRef<[u32]>>(seqs: &[S]) -> Result<Self> {
        Self::padded(seqs, 0)
    }

    /// Pads every row to at least `min_len` columns.
    pub fn padded<S: AsRef<[u32]>>(seqs: &[S], min_len: usize) -> Result<Self> {
        if seqs.is_empty() || seqs.iter().any(|s| s.as_ref().is_empty()) {
            return Err(Error::Input("batch needs at least one non-empty sequence".into()));
        }
        let seq_len = seqs.iter().map(|s| s.as_ref().len()).max().unwrap().max(min_len);
        let mut ids = vec![PAD; seqs.len() * seq_len];
        for (r, s) in seqs.iter().enumerate() {
            ids[r * seq_len..r * seq_len + s.as_ref().len()].copy_from_slice(s.as_ref());
        }
        Ok(TokenBatch {
            ids,
            batch: seqs.len(),
            seq_len,
            lengths: seqs.iter().map(|s| s.as_ref().len()).collect(),
        })
    }

    pub fn tokens(&self) -> usize {
        self.batch * self.seq_len
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.ids[r * self.seq_len..r * self.seq_len + self.lengths[r]]
    }

    /// `true` for every non-pad position, `[batch * seq_len]`.
    pub fn key_valid(&self) -> Vec<bool> {
        let mut v = vec![false; self.tokens()];
        for (r, &len) in self.lengths.iter().enumerate() {
            v[r * self.seq_len..r * self.seq_len + len].fill(true);
        }
        v
    }

    pub fn non_pad_tokens(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// Same layout with a different id matrix.
    pub fn with_ids(&self, ids: Vec<u32>) -> Self {
        assert_eq!(ids.len(), self.ids.len());
        TokenBatch {
            ids,
            ..self.clone()
        }
    }
}

/// Jointly trained generator and discriminator.
#[derive(Clone, Debug)]
pub struct ElectraModel<T: Float = f32> {
    pub config: ElectraConfig,
    pub params: ParamStore<T>,
    pub generator: Encoder,
    pub discriminator: Encoder,
    pub generator_head: GeneratorHead,
    pub discriminator_head: DiscriminatorHead,
}

impl<T: Float> ElectraModel<T> {
    /// Registers all parameters with placeholder (zero) values.
    pub fn new(config: &ElectraConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let gen_cfg = config.stack(Role::Generator);
        let disc_cfg = config.stack(Role::Discriminator);
        let generator = Encoder::register(&gen_cfg, &mut params, None);
        let shared = config.share_embeddings.then_some(generator.token_embedding);
        let discriminator = Encoder::register(&disc_cfg, &mut params, shared);
        let generator_head = GeneratorHead::register(&gen_cfg, &mut params, generator.token_embedding);
        let discriminator_head = DiscriminatorHead::register(&disc_cfg, &mut params);
        Ok(ElectraModel {
            config: config.clone(),
            params,
            generator,
            discriminator,
            generator_head,
            discriminator_head,
        })
    }

    /// Uniform init over `[-init_range, init_range]`, zero biases, then the
    /// `1/sqrt(2l)` rescale of each block's attention and FFN output
    /// matrices.
    pub fn init(config: &ElectraConfig, seed: u64) -> Result<Self> {
        let mut model = Self::new(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.params.init_uniform(config.init_range, &mut rng);
        model.generator.rescale_output_weights(&mut model.params);
        model.discriminator.rescale_output_weights(&mut model.params);
        Ok(model)
    }

    pub fn encoder(&self, role: Role) -> &Encoder {
        match role {
            Role::Generator => &self.generator,
            Role::Discriminator => &self.discriminator,
        }
    }

    /// Parameters that only the generator path touches.
    pub fn generator_only_params(&self) -> Vec<ParamId> {
        let disc: BTreeSet<ParamId> = self.discriminator_side().into_iter().collect();
        self.generator_side().into_iter().filter(|id| !disc.contains(id)).collect()
    }

    pub fn discriminator_only_params(&self) -> Vec<ParamId> {
        let generator: BTreeSet<ParamId> = self.generator_side().into_iter().collect();
        self.discriminator_side().into_iter().filter(|id| !generator.contains(id)).collect()
    }

    fn generator_side(&self) -> Vec<ParamId> {
        let mut ids = self.generator.param_ids();
        ids.extend(self.generator_head.param_ids());
        ids
    }

    fn discriminator_side(&self) -> Vec<ParamId> {
        let mut ids = self.discriminator.param_ids();
        ids.extend(self.discriminator_head.param_ids());
        ids
    }

    pub fn cast<U: Float>(&self) -> ElectraModel<U> {
        ElectraModel {
            config: self.config.clone(),
            params: self.params.cast(),
            generator: self.generator.clone(),
            discriminator: self.discriminator.clone(),
            generator_head: self.generator_head.clone(),
            discriminator_head: self.discriminator_head.clone(),
        }
    }

    /// Hidden states of every layer (`0` = embeddings), each `[B, n, d_h]`.
    ///
    /// Runs without gradient tracking.
    pub fn encode(&self, role: Role, batch: &TokenBatch) -> Result<Vec<Tensor<T>>> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g, false);
        let out = self.encoder(role).forward(&mut g, &bound, batch)?;
        let d = self.config.hidden_size;
        out.layers
            .iter()
            .map(|&id| g.value(id).clone().reshape(&[batch.batch, batch.seq_len, d]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ElectraConfig {
        ElectraConfig {
            hidden_size: 16,
            num_heads: 2,
            ffn_size: 32,
            max_rel_distance: 4,
            init_range: 0.02,
            generator_layers: 1,
            discriminator_layers: 3,
            share_embeddings: true,
            vocab_size: 30,
        }
    }

    #[test]
    fn shared_embedding_is_registered_once() {
        let m = ElectraModel::<f32>::init(&tiny(), 1).unwrap();
        assert_eq!(m.generator.token_embedding, m.discriminator.token_embedding);
        assert!(m.params.by_name("disc.token_embedding").is_none());
        let gen_only = m.generator_only_params();
        assert!(!gen_only.contains(&m.generator.token_embedding));
        let unshared = ElectraModel::<f32>::init(
            &ElectraConfig {
                share_embeddings: false,
                ..tiny()
            },
            1,
        )
        .unwrap();
        assert!(unshared.params.by_name("disc.token_embedding").is_some());
    }

    #[test]
    fn init_ranges_and_zero_biases() {
        let m = ElectraModel::<f64>::init(&tiny(), 3).unwrap();
        for (_, p) in m.params.iter() {
            let data = p.value.data();
            match p.kind {
                ParamKind::Bias | ParamKind::NormBias => assert!(data.iter().all(|&v| v == 0.0), "{}", p.name),
                ParamKind::NormGain => assert!(data.iter().all(|&v| v == 1.0)),
                _ => assert!(data.iter().all(|v| v.abs() <= 0.02), "{}", p.name),
            }
        }
    }

    #[test]
    fn encode_single_token_is_finite() {
        let m = ElectraModel::<f32>::init(&tiny(), 5).unwrap();
        let batch = TokenBatch::from_sequences(&[vec![7u32]]).unwrap();
        let states = m.encode(Role::Discriminator, &batch).unwrap();
        assert_eq!(states.len(), 4);
        for s in &states {
            assert_eq!(s.shape(), &[1, 1, 16]);
            assert!(s.data().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn encode_rejects_out_of_range_ids() {
        let m = ElectraModel::<f32>::init(&tiny(), 5).unwrap();
        let batch = TokenBatch::from_sequences(&[vec![2u32, 30]]).unwrap();
        assert_eq!(m.encode(Role::Generator, &batch).unwrap_err().code(), "E_INPUT");
    }
}
