use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Generator,
    Discriminator,
}

impl Role {
    pub fn prefix(self) -> &'static str {
        match self {
            Role::Generator => "gen",
            Role::Discriminator => "disc",
        }
    }
}

/// Shape of one encoder stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub num_heads: usize,
    pub ffn_size: usize,
    pub vocab_size: usize,
    /// Relative offsets are clipped to `[-k, k]` before the bias lookup.
    pub max_rel_distance: usize,
    pub init_range: f64,
    pub role: Role,
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_layers", self.num_layers),
            ("hidden_size", self.hidden_size),
            ("num_heads", self.num_heads),
            ("ffn_size", self.ffn_size),
            ("vocab_size", self.vocab_size),
            ("max_rel_distance", self.max_rel_distance),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be positive")));
        }
        if self.hidden_size % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "hidden_size {} is not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            )));
        }
        if !(self.init_range > 0.0) {
            return Err(Error::Config("model.init_range must be positive".into()));
        }
        Ok(())
    }
}

/// Generator/discriminator pair as trained jointly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElectraConfig {
    pub hidden_size: usize,
    pub num_heads: usize,
    pub ffn_size: usize,
    pub max_rel_distance: usize,
    pub init_range: f64,
    pub generator_layers: usize,
    pub discriminator_layers: usize,
    /// Token embeddings shared by both stacks.
    pub share_embeddings: bool,
    /// Filled from the vocabulary when zero.
    pub vocab_size: usize,
}

impl Default for ElectraConfig {
    fn default() -> Self {
        ElectraConfig {
            hidden_size: 64,
            num_heads: 4,
            ffn_size: 256,
            max_rel_distance: 8,
            init_range: 0.02,
            generator_layers: 2,
            discriminator_layers: 6,
            share_embeddings: true,
            vocab_size: 0,
        }
    }
}

impl ElectraConfig {
    pub fn stack(&self, role: Role) -> ModelConfig {
        ModelConfig {
            num_layers: match role {
                Role::Generator => self.generator_layers,
                Role::Discriminator => self.discriminator_layers,
            },
            hidden_size: self.hidden_size,
            num_heads: self.num_heads,
            ffn_size: self.ffn_size,
            vocab_size: self.vocab_size,
            max_rel_distance: self.max_rel_distance,
            init_range: self.init_range,
            role,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stack(Role::Generator).validate()?;
        self.stack(Role::Discriminator).validate()?;
        if self.generator_layers >= self.discriminator_layers {
            return Err(Error::Config(format!(
                "generator ({} layers) must be smaller than the discriminator ({} layers)",
                self.generator_layers, self.discriminator_layers
            )));
        }
        Ok(())
    }
}
