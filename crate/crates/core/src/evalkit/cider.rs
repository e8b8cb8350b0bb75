//! CIDEr-D captioning score.
//!
//! Text is lowercased and split on any non-alphanumeric character. For each
//! n in 1..=4, candidate and reference n-gram counts are weighted by
//! `ln(N) - ln(max(1, df))`, where `df` counts the reference sets that
//! contain the n-gram and `N` is the number of items. Similarity is the
//! clipped cosine `sum(min(c, r) * r) / (|c| |r|)` times a Gaussian length
//! penalty. Per item the score is `10 * mean over n` averaged over that
//! item's references.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use super::EvalError;

pub const CIDER_SIGMA: f64 = 6.0;
const MAX_N: usize = 4;

type NgramCounts = HashMap<Vec<String>, f64>;

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

struct Counted {
    by_n: Vec<NgramCounts>,
    len: usize,
}

fn count(text: &str) -> Counted {
    let toks = tokenize(text);
    let by_n = (1..=MAX_N)
        .map(|n| {
            let mut m = NgramCounts::new();
            for w in toks.windows(n) {
                *m.entry(w.to_vec()).or_default() += 1.0;
            }
            m
        })
        .collect();
    Counted { by_n, len: toks.len() }
}

fn tfidf(c: &NgramCounts, df: &HashMap<Vec<String>, f64>, log_n: f64) -> (NgramCounts, f64) {
    let vec: NgramCounts = c
        .iter()
        .map(|(g, tf)| {
            let d = df.get(g).copied().unwrap_or(0.0).max(1.0);
            (g.clone(), tf * (log_n - d.ln()))
        })
        .collect();
    let norm = vec.values().map(|v| v * v).sum::<f64>().sqrt();
    (vec, norm)
}

/// Per-item CIDEr-D scores.
pub fn cider_scores(candidates: &[String], references: &[Vec<String>]) -> Result<Vec<f64>, EvalError> {
    if candidates.len() != references.len() {
        return Err(EvalError::EmptyCorpus(format!(
            "{} candidates but {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(EvalError::EmptyCorpus("no candidates".into()));
    }
    if let Some(i) = references.iter().position(Vec::is_empty) {
        return Err(EvalError::EmptyCorpus(format!("item {i} has no references")));
    }

    let refs: Vec<Vec<Counted>> = references
        .iter()
        .map(|rs| rs.iter().map(|r| count(r)).collect())
        .collect();
    let mut df: HashMap<Vec<String>, f64> = HashMap::new();
    for item in &refs {
        let seen: HashSet<&Vec<String>> = item.iter().flat_map(|r| r.by_n.iter().flat_map(|m| m.keys())).collect();
        for g in seen {
            *df.entry(g.clone()).or_default() += 1.0;
        }
    }
    if df.values().all(|&d| d >= refs.len() as f64) {
        return Err(EvalError::EmptyCorpus("every reference n-gram has zero idf".into()));
    }
    let log_n = (refs.len() as f64).ln();

    Ok(candidates
        .par_iter()
        .zip(refs.par_iter())
        .map(|(cand, item_refs)| {
            let c = count(cand);
            let cvecs: Vec<(NgramCounts, f64)> = c.by_n.iter().map(|m| tfidf(m, &df, log_n)).collect();
            let mut total = 0.0;
            for r in item_refs {
                let delta = c.len as f64 - r.len as f64;
                let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
                let mut sum_n = 0.0;
                for (n, (cv, cnorm)) in cvecs.iter().enumerate() {
                    let (rv, rnorm) = tfidf(&r.by_n[n], &df, log_n);
                    if *cnorm == 0.0 || rnorm == 0.0 {
                        continue;
                    }
                    let dot: f64 = cv
                        .iter()
                        .filter_map(|(g, x)| rv.get(g).map(|y| x.min(*y) * y))
                        .sum();
                    sum_n += dot / (cnorm * rnorm) * penalty;
                }
                total += sum_n / MAX_N as f64 * 10.0;
            }
            total / item_refs.len() as f64
        })
        .collect())
}

/// Corpus CIDEr-D: mean of the per-item scores.
pub fn cider(candidates: &[String], references: &[Vec<String>]) -> Result<f64, EvalError> {
    let s = cider_scores(candidates, references)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}
