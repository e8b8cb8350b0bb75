//! Few-shot evaluation harness: shot sampling, prompt templates, stop-token
//! truncation and the captioning/VQA metrics.

mod cider;
mod vqa;

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cider::{cider, cider_scores, CIDER_SIGMA};
pub use vqa::{normalize_vqa_answer, vqa_accuracy};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("need {needed} shots but only {available} examples besides the query")]
    InsufficientData { needed: usize, available: usize },
    #[error("example {example_id} is missing {field}")]
    MissingField { example_id: String, field: &'static str },
    #[error("expected 10 annotator answers, got {0}")]
    WrongAnnotatorCount(usize),
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error("task {0} has no baseline")]
    MissingBaseline(String),
    #[error("baseline for task {0} must be positive")]
    ZeroBaseline(String),
}

/// Literal image marker in built prompts.
pub const IMAGE_PLACEHOLDER: &str = "{IMAGE}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Caption,
    Vqa,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalExample {
    pub example_id: String,
    #[serde(default)]
    pub image_refs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default)]
    pub references: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers_10: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotSet {
    pub shots: Vec<EvalExample>,
    pub query: EvalExample,
    pub seed: u64,
}

/// Draw `k` distinct shots from `dataset`, never the query itself.
pub fn sample_shots(dataset: &[EvalExample], k: usize, query: &EvalExample, seed: u64) -> Result<ShotSet, EvalError> {
    let pool: Vec<&EvalExample> = dataset.iter().filter(|e| e.example_id != query.example_id).collect();
    if pool.len() < k {
        return Err(EvalError::InsufficientData {
            needed: k,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shots = index::sample(&mut rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect();
    Ok(ShotSet {
        shots,
        query: query.clone(),
        seed,
    })
}

fn question(ex: &EvalExample) -> Result<&str, EvalError> {
    ex.question.as_deref().ok_or_else(|| EvalError::MissingField {
        example_id: ex.example_id.clone(),
        field: "question",
    })
}

fn first_reference(ex: &EvalExample) -> Result<&str, EvalError> {
    ex.references.first().map(String::as_str).ok_or_else(|| EvalError::MissingField {
        example_id: ex.example_id.clone(),
        field: "references",
    })
}

/// Shots as completed blocks, then the query block left open:
///
/// - caption: `{IMAGE} A photo of {CAPTION}\n`
/// - vqa: `{IMAGE} Question: {Q} Short answer: {A}\n`
pub fn build_prompt(kind: TaskKind, shots: &ShotSet) -> Result<String, EvalError> {
    let mut out = String::new();
    for shot in &shots.shots {
        let answer = first_reference(shot)?;
        match kind {
            TaskKind::Caption => out.push_str(&format!("{IMAGE_PLACEHOLDER} A photo of {answer}\n")),
            TaskKind::Vqa => out.push_str(&format!(
                "{IMAGE_PLACEHOLDER} Question: {} Short answer: {answer}\n",
                question(shot)?
            )),
        }
    }
    match kind {
        TaskKind::Caption => out.push_str(&format!("{IMAGE_PLACEHOLDER} A photo of")),
        TaskKind::Vqa => out.push_str(&format!(
            "{IMAGE_PLACEHOLDER} Question: {} Short answer:",
            question(&shots.query)?
        )),
    }
    Ok(out)
}

pub const CAPTION_STOPS: &[&str] = &["\n"];
/// Matched case-sensitively.
pub const VQA_STOPS: &[&str] = &["\n", ".", ",", "Question"];

/// Cut at the earliest stop marker for `kind`, then trim.
pub fn truncate_at_stop(text: &str, kind: TaskKind) -> &str {
    let stops = match kind {
        TaskKind::Caption => CAPTION_STOPS,
        TaskKind::Vqa => VQA_STOPS,
    };
    let cut = stops.iter().filter_map(|s| text.find(s)).min().unwrap_or(text.len());
    text[..cut].trim()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cider,
    VqaAccuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub task: String,
    pub metric: Metric,
    pub value: f64,
    pub n: usize,
}

/// `100 * mean(result / baseline)` over tasks.
pub fn meta_average(results: &BTreeMap<String, f64>, baseline: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyCorpus("no task results".into()));
    }
    if let Some(extra) = baseline.keys().find(|k| !results.contains_key(*k)) {
        return Err(EvalError::MissingBaseline(format!("{extra} (baseline has no result)")));
    }
    let mut sum = 0.0;
    for (task, value) in results {
        let base = *baseline.get(task).ok_or_else(|| EvalError::MissingBaseline(task.clone()))?;
        if base.is_nan() || base <= 0.0 {
            return Err(EvalError::ZeroBaseline(task.clone()));
        }
        sum += value / base;
    }
    Ok(100.0 * sum / results.len() as f64)
}
