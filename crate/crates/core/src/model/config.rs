use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::AttentionMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderMode {
    /// Forward and reverse node passes, concatenated per position.
    Bidirectional,
    /// Forward node pass only; its last state is the graph latent.
    ForwardOnly,
}

/// Source of the context vector fed to a decoder recurrence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    Learned,
    Fixed,
    /// No context (equivalent to a zero context vector).
    Off,
    /// The encoder's final state at every step. Node level only.
    Latent,
}

impl ContextMode {
    pub fn attention(self) -> Option<AttentionMode> {
        match self {
            ContextMode::Learned => Some(AttentionMode::Learned),
            ContextMode::Fixed => Some(AttentionMode::Fixed),
            ContextMode::Off | ContextMode::Latent => None,
        }
    }
}

/// Keys used by edge-level attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKeys {
    /// Encoder edge states of the row being decoded.
    Row,
    /// Encoder edge states of every row.
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Padded node count; sequences have `width - 1` vectors.
    pub width: usize,
    pub edge_hidden: usize,
    /// Per-direction hidden size of the encoder node recurrence.
    pub node_hidden: usize,
    pub down_hidden: usize,
    pub emb_dim: usize,
    pub head_hidden: Vec<usize>,
    pub attn_hidden: usize,
    pub encoder: EncoderMode,
    pub node_context: ContextMode,
    pub edge_context: ContextMode,
    pub edge_keys: EdgeKeys,
    pub seed: u64,
}

impl ModelConfig {
    /// Subgraph regression: bidirectional encoder, fixed attention at both
    /// levels.
    pub fn max_clique(width: usize) -> Self {
        ModelConfig {
            width,
            edge_hidden: 16,
            node_hidden: 16,
            down_hidden: 16,
            emb_dim: 8,
            head_hidden: vec![32],
            attn_hidden: 64,
            encoder: EncoderMode::Bidirectional,
            node_context: ContextMode::Fixed,
            edge_context: ContextMode::Fixed,
            edge_keys: EdgeKeys::Row,
            seed: 0,
        }
    }

    /// Autoencoder: forward-only encoder with a 128-wide latent that is also
    /// the node context at every step; no edge context.
    pub fn autoencoder(width: usize) -> Self {
        ModelConfig {
            width,
            edge_hidden: 32,
            node_hidden: 128,
            down_hidden: 32,
            emb_dim: 8,
            head_hidden: vec![64],
            attn_hidden: 64,
            encoder: EncoderMode::ForwardOnly,
            node_context: ContextMode::Latent,
            edge_context: ContextMode::Off,
            edge_keys: EdgeKeys::Row,
            seed: 0,
        }
    }

    /// Width of each encoder node state and of the decoder recurrences.
    pub fn state_dim(&self) -> usize {
        match self.encoder {
            EncoderMode::Bidirectional => 2 * self.node_hidden,
            EncoderMode::ForwardOnly => self.node_hidden,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.node_hidden
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 {
            return Err(Error::Config(format!("width must be at least 2, got {}", self.width)));
        }
        let dims = [
            ("edge_hidden", self.edge_hidden),
            ("node_hidden", self.node_hidden),
            ("down_hidden", self.down_hidden),
            ("emb_dim", self.emb_dim),
            ("attn_hidden", self.attn_hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, d)| *d == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.head_hidden.contains(&0) {
            return Err(Error::Config("head layer widths must be positive".into()));
        }
        if self.edge_context == ContextMode::Latent {
            return Err(Error::Config("latent context applies to the node level only".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn digest(&self) -> String {
        digest_hex(self.to_json().as_bytes())
    }
}

pub(crate) fn digest_hex(bytes: &[u8]) -> String {
    let out = Sha256::digest(bytes);
    out.iter().map(|b| format!("{b:02x}")).collect()
}
