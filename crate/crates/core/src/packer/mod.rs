//! Fixed-length sequence packing with image slots and block-causal masks.

mod mask;
mod pack;
mod tokenizer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mask::{build_mask, BlockMask, MaskSpec};
pub use pack::{lay_out_document, lay_out_text, pack_sequences, Packer};
pub use tokenizer::{pieces, TokenId, Tokenizer, WordTokenizer, FIRST_PIECE_ID, IMAGE_ID, PAD_ID, UNK_ID};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PackError {
    #[error("image slot of {tokens_per_image} tokens does not fit in seq_len {seq_len}")]
    OversizedSlot { tokens_per_image: usize, seq_len: usize },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid mask spec: {0}")]
    InvalidMask(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSlot {
    pub position: usize,
    pub span: usize,
}

impl ImageSlot {
    pub fn end(&self) -> usize {
        self.position + self.span
    }
}

/// Token layout of one document (or packed run of documents).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<TokenId>,
    pub image_slots: Vec<ImageSlot>,
    pub boundaries: Vec<usize>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedSequence {
    pub tokens: Vec<TokenId>,
    pub boundaries: Vec<usize>,
    pub image_slots: Vec<ImageSlot>,
    pub loss_mask: Vec<bool>,
    /// Positions from here on are padding.
    pub pad_from: usize,
}

impl PackedSequence {
    pub fn seq_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn mask(&self) -> BlockMask {
        BlockMask::new(self.boundaries.clone(), self.seq_len(), self.pad_from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seq_len: usize,
    pub max_images_per_seq: usize,
    pub tokens_per_image: usize,
}

impl Default for BatchPlan {
    fn default() -> Self {
        Self {
            batch_size: 512,
            seq_len: 4096,
            max_images_per_seq: 16,
            tokens_per_image: 144,
        }
    }
}

impl BatchPlan {
    pub fn validate(&self) -> Result<(), PackError> {
        if self.batch_size == 0 || self.seq_len == 0 || self.max_images_per_seq == 0 || self.tokens_per_image == 0 {
            return Err(PackError::InvalidPlan(format!("all plan fields must be positive: {self:?}")));
        }
        if self.tokens_per_image > self.seq_len {
            return Err(PackError::OversizedSlot {
                tokens_per_image: self.tokens_per_image,
                seq_len: self.seq_len,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAccounting {
    pub total_positions: u64,
    pub max_image_tokens: u64,
    pub min_text_positions: u64,
}

/// Position budget of one batch when every sequence carries the maximum
/// number of images.
pub fn batch_token_accounting(plan: &BatchPlan) -> Result<TokenAccounting, PackError> {
    plan.validate()?;
    let per_seq_images = (plan.max_images_per_seq * plan.tokens_per_image) as u64;
    if per_seq_images > plan.seq_len as u64 {
        return Err(PackError::InvalidPlan(format!(
            "{} images x {} tokens = {per_seq_images} > seq_len {}",
            plan.max_images_per_seq, plan.tokens_per_image, plan.seq_len
        )));
    }
    let total = (plan.batch_size * plan.seq_len) as u64;
    let images = plan.batch_size as u64 * per_seq_images;
    Ok(TokenAccounting {
        total_positions: total,
        max_image_tokens: images,
        min_text_positions: total - images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(b: usize, s: usize, m: usize, t: usize) -> BatchPlan {
        BatchPlan {
            batch_size: b,
            seq_len: s,
            max_images_per_seq: m,
            tokens_per_image: t,
        }
    }

    #[test]
    fn accounting_examples() {
        let a = batch_token_accounting(&plan(512, 4096, 16, 144)).unwrap();
        assert_eq!(a.total_positions, 2_097_152);
        assert_eq!(a.max_image_tokens, 1_179_648);
        assert_eq!(a.min_text_positions, 917_504);
        let a = batch_token_accounting(&plan(1, 4096, 16, 144)).unwrap();
        assert_eq!((a.max_image_tokens, a.min_text_positions), (2304, 1792));
        assert!(matches!(
            batch_token_accounting(&plan(512, 4096, 28, 150)),
            Err(PackError::InvalidPlan(_))
        ));
    }

    #[test]
    fn plan_validation() {
        assert_eq!(BatchPlan::default(), plan(512, 4096, 16, 144));
        assert!(matches!(plan(1, 100, 1, 101).validate(), Err(PackError::OversizedSlot { .. })));
        assert!(plan(0, 100, 1, 10).validate().is_err());
    }
}
