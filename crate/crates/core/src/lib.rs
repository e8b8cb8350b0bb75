//! Deterministic, model-free machinery for multimodal LLM pre-training.
//!
//! The crate covers the pieces of a pre-training recipe that can be run and
//! checked without a GPU:
//!
//! - [`corpus`]: interleaved image-text and text-only document construction,
//!   image filtering, corpus-level image dedup and MinHash/LSH text dedup.
//! - [`mixture`]: seeded, replayable mixture snapshots over data sources.
//! - [`packer`]: tokenization, document layout with image slots, greedy
//!   sequence packing and block-causal attention masks.
//! - [`visgeom`]: patch grids, positional-embedding interpolation, vision
//!   connectors, sub-image decomposition and few-shot token budgets.
//! - [`scaling`]: the log-log learning-rate law, weight-decay rule and
//!   warmup + cosine schedule.
//! - [`moe`]: top-k routing, auxiliary losses, layer placement and
//!   parameter estimates.
//! - [`evalkit`]: few-shot prompting, stop-token truncation, VQA accuracy,
//!   CIDEr-D and meta-averaging.

pub mod corpus;
pub mod evalkit;
pub mod mixture;
pub mod moe;
pub mod packer;
pub mod rng;
pub mod scaling;
pub mod visgeom;
