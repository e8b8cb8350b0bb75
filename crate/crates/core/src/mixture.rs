//! Deterministic pre-training mixture snapshots.
//!
//! Entry `i` picks a source with draw `i` of a counter-based SplitMix64
//! stream keyed by the seed, then takes that source's next unused document.
//! A source is consumed in its given order first; each time it runs out it
//! is reshuffled with a stream derived from `(seed, source, epoch)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::CounterRng;

#[derive(Debug, Error, PartialEq)]
pub enum MixtureError {
    #[error("weights must be finite, in [0, 1] and sum to 1 (sum = {sum})")]
    BadWeights { sum: f64 },
    #[error("source {0} has positive weight but no documents")]
    EmptySource(SourceKind),
    #[error("source {0} listed more than once")]
    DuplicateSource(SourceKind),
    #[error("n_entries must be positive")]
    NoEntries,
    #[error("snapshot parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Interleaved,
    CaptionPairs,
    TextOnly,
}

impl SourceKind {
    pub const ALL: [SourceKind; 3] = [SourceKind::Interleaved, SourceKind::CaptionPairs, SourceKind::TextOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Interleaved => "interleaved",
            SourceKind::CaptionPairs => "caption_pairs",
            SourceKind::TextOnly => "text_only",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown source {s:?}"))
    }
}

/// Default sampling probabilities: interleaved, caption pairs, text-only.
pub const DEFAULT_WEIGHTS: [(SourceKind, f64); 3] = [
    (SourceKind::Interleaved, 0.45),
    (SourceKind::CaptionPairs, 0.45),
    (SourceKind::TextOnly, 0.10),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub name: SourceKind,
    pub weight: f64,
    pub doc_ids: Vec<String>,
}

impl SourceSpec {
    pub fn new(name: SourceKind, weight: f64, doc_ids: Vec<String>) -> Self {
        Self { name, weight, doc_ids }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub source: SourceKind,
    pub doc_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceWeight {
    pub source: SourceKind,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub seed: u64,
    pub weights: Vec<SourceWeight>,
    pub entries: Vec<SnapshotEntry>,
    pub counts: BTreeMap<SourceKind, usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    seed: u64,
    n_entries: usize,
    weights: Vec<SourceWeight>,
}

fn validate(sources: &[SourceSpec]) -> Result<(), MixtureError> {
    let sum: f64 = sources.iter().map(|s| s.weight).sum();
    if sources.iter().any(|s| !s.weight.is_finite() || !(0.0..=1.0).contains(&s.weight)) || (sum - 1.0).abs() > 1e-9 {
        return Err(MixtureError::BadWeights { sum });
    }
    for (i, s) in sources.iter().enumerate() {
        if sources[..i].iter().any(|p| p.name == s.name) {
            return Err(MixtureError::DuplicateSource(s.name));
        }
        if s.weight > 0.0 && s.doc_ids.is_empty() {
            return Err(MixtureError::EmptySource(s.name));
        }
    }
    Ok(())
}

struct Cursor<'a> {
    ids: &'a [String],
    order: Option<Vec<usize>>,
    pos: usize,
    epoch: u64,
}

pub fn build_snapshot(sources: &[SourceSpec], n_entries: usize, seed: u64) -> Result<Snapshot, MixtureError> {
    validate(sources)?;
    if n_entries == 0 {
        return Err(MixtureError::NoEntries);
    }
    let rng = CounterRng::new(seed);
    let positive: Vec<usize> = (0..sources.len()).filter(|&i| sources[i].weight > 0.0).collect();
    let mut cumulative = Vec::with_capacity(positive.len());
    let mut acc = 0.0;
    for &i in &positive {
        acc += sources[i].weight;
        cumulative.push(acc);
    }

    let mut cursors: Vec<Cursor> = sources
        .iter()
        .map(|s| Cursor {
            ids: &s.doc_ids,
            order: None,
            pos: 0,
            epoch: 0,
        })
        .collect();
    let mut counts: BTreeMap<SourceKind, usize> = sources.iter().map(|s| (s.name, 0)).collect();
    let mut entries = Vec::with_capacity(n_entries);

    for i in 0..n_entries {
        let u = rng.unit_at(i as u64);
        // The last positive source absorbs any rounding slack in the sum.
        let slot = cumulative.iter().position(|&c| u < c).unwrap_or(positive.len() - 1);
        let src = positive[slot];
        let cur = &mut cursors[src];
        if cur.pos == cur.ids.len() {
            cur.epoch += 1;
            cur.pos = 0;
            let mut order: Vec<usize> = (0..cur.ids.len()).collect();
            rng.derive(((src as u64) << 32) | cur.epoch).shuffle(&mut order);
            cur.order = Some(order);
        }
        let idx = cur.order.as_ref().map_or(cur.pos, |o| o[cur.pos]);
        cur.pos += 1;
        entries.push(SnapshotEntry {
            source: sources[src].name,
            doc_id: cur.ids[idx].clone(),
        });
        *counts.get_mut(&sources[src].name).unwrap() += 1;
    }

    Ok(Snapshot {
        seed,
        weights: sources
            .iter()
            .map(|s| SourceWeight {
                source: s.name,
                weight: s.weight,
            })
            .collect(),
        entries,
        counts,
    })
}

/// Per-source counts recomputed from the entries.
pub fn snapshot_stats(s: &Snapshot) -> BTreeMap<SourceKind, usize> {
    let mut counts: BTreeMap<SourceKind, usize> = SourceKind::ALL.iter().map(|&k| (k, 0)).collect();
    for e in &s.entries {
        *counts.entry(e.source).or_default() += 1;
    }
    counts
}

/// First index at which two snapshots differ, or `None` when their entry
/// lists are identical. A strict prefix diverges at its own length.
pub fn first_divergence(a: &Snapshot, b: &Snapshot) -> Option<usize> {
    a.entries
        .iter()
        .zip(&b.entries)
        .position(|(x, y)| x != y)
        .or_else(|| (a.entries.len() != b.entries.len()).then(|| a.entries.len().min(b.entries.len())))
}

impl Snapshot {
    /// A snapshot with no entries.
    pub fn empty(seed: u64) -> Self {
        Self {
            seed,
            weights: Vec::new(),
            entries: Vec::new(),
            counts: BTreeMap::new(),
        }
    }

    /// Header line `{seed, n_entries, weights}` followed by one
    /// `source\tdoc_id` line per entry.
    pub fn to_text(&self) -> String {
        let header = Header {
            seed: self.seed,
            n_entries: self.entries.len(),
            weights: self.weights.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for e in &self.entries {
            out.push_str(e.source.as_str());
            out.push('\t');
            out.push_str(&e.doc_id);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, MixtureError> {
        let perr = |line: usize, message: String| MixtureError::Parse { line, message };
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| perr(1, "missing header".into()))?;
        let header: Header = serde_json::from_str(first).map_err(|e| perr(1, e.to_string()))?;
        let mut entries = Vec::with_capacity(header.n_entries);
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (src, id) = line.split_once('\t').ok_or_else(|| perr(i + 1, "expected source<TAB>doc_id".into()))?;
            entries.push(SnapshotEntry {
                source: src.parse().map_err(|e| perr(i + 1, e))?,
                doc_id: id.to_string(),
            });
        }
        if entries.len() != header.n_entries {
            return Err(perr(
                1,
                format!("header declares {} entries, found {}", header.n_entries, entries.len()),
            ));
        }
        let mut snap = Snapshot {
            seed: header.seed,
            weights: header.weights,
            entries,
            counts: BTreeMap::new(),
        };
        snap.counts = snap.weights.iter().map(|w| (w.source, 0)).collect();
        for e in &snap.entries {
            *snap.counts.entry(e.source).or_default() += 1;
        }
        Ok(snap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn default_sources(n: usize) -> Vec<SourceSpec> {
        vec![
            SourceSpec::new(SourceKind::Interleaved, 0.45, ids("i", n)),
            SourceSpec::new(SourceKind::CaptionPairs, 0.45, ids("c", n)),
            SourceSpec::new(SourceKind::TextOnly, 0.10, ids("t", n)),
        ]
    }

    #[test]
    fn degenerate_weight_takes_docs_in_order() {
        let sources = vec![
            SourceSpec::new(SourceKind::Interleaved, 1.0, ids("i", 5)),
            SourceSpec::new(SourceKind::CaptionPairs, 0.0, vec![]),
            SourceSpec::new(SourceKind::TextOnly, 0.0, ids("t", 3)),
        ];
        let snap = build_snapshot(&sources, 5, 3).unwrap();
        let got: Vec<&str> = snap.entries.iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(got, ["i0", "i1", "i2", "i3", "i4"]);
        assert!(snap.entries.iter().all(|e| e.source == SourceKind::Interleaved));
        assert_eq!(snap.counts[&SourceKind::TextOnly], 0);
    }

    #[test]
    fn same_inputs_same_bytes() {
        let a = build_snapshot(&default_sources(50), 1000, 17).unwrap();
        let b = build_snapshot(&default_sources(50), 1000, 17).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(first_divergence(&a, &b), None);
    }

    #[test]
    fn counts_follow_weights() {
        let snap = build_snapshot(&default_sources(10), 100_000, 2024).unwrap();
        for (kind, expected) in [
            (SourceKind::Interleaved, 45_000.0),
            (SourceKind::CaptionPairs, 45_000.0),
            (SourceKind::TextOnly, 10_000.0),
        ] {
            let got = snap.counts[&kind] as f64;
            assert!((got - expected).abs() <= 0.01 * expected, "{kind}: {got}");
        }
        assert_eq!(snapshot_stats(&snap), snap.counts);
    }

    #[test]
    fn different_seeds_diverge() {
        let a = build_snapshot(&default_sources(50), 1000, 1).unwrap();
        let b = build_snapshot(&default_sources(50), 1000, 2).unwrap();
        let d = first_divergence(&a, &b).unwrap();
        assert!(d < 1000);
    }

    #[test]
    fn empty_snapshot_stats() {
        let s = Snapshot::empty(0);
        assert!(snapshot_stats(&s).values().all(|&c| c == 0));
        assert_eq!(first_divergence(&s, &s), None);
    }

    #[test]
    fn prefix_divergence() {
        let a = build_snapshot(&default_sources(5), 10, 4).unwrap();
        let b = build_snapshot(&default_sources(5), 12, 4).unwrap();
        assert_eq!(first_divergence(&a, &b), Some(10));
    }

    #[test]
    fn weight_and_source_errors() {
        let mut s = default_sources(3);
        s[0].weight = 0.5;
        s[1].weight = 0.6;
        assert!(matches!(build_snapshot(&s, 10, 0), Err(MixtureError::BadWeights { .. })));
        let mut s = default_sources(3);
        s[2].doc_ids.clear();
        assert_eq!(build_snapshot(&s, 10, 0), Err(MixtureError::EmptySource(SourceKind::TextOnly)));
        let mut s = default_sources(3);
        s[1].name = SourceKind::Interleaved;
        assert_eq!(build_snapshot(&s, 10, 0), Err(MixtureError::DuplicateSource(SourceKind::Interleaved)));
        let mut s = default_sources(3);
        s[0].weight = f64::NAN;
        assert!(matches!(build_snapshot(&s, 10, 0), Err(MixtureError::BadWeights { .. })));
    }

    #[test]
    fn text_format_round_trips() {
        let snap = build_snapshot(&default_sources(4), 20, 9).unwrap();
        let text = snap.to_text();
        assert!(text.starts_with(r#"{"seed":9,"n_entries":20,"weights":[{"source":"interleaved","weight":0.45}"#));
        assert_eq!(Snapshot::parse(&text).unwrap(), snap);
        assert!(Snapshot::parse("").is_err());
        let truncated: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(Snapshot::parse(&truncated).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn entries_belong_and_epochs_do_not_repeat(
            sizes in prop::collection::vec(1usize..12, 3),
            w0 in 0.0f64..1.0,
            n in 1usize..300,
            seed: u64,
        ) {
            let w1 = (1.0 - w0) * 0.7;
            let w2 = 1.0 - w0 - w1;
            let sources = vec![
                SourceSpec::new(SourceKind::Interleaved, w0, ids("i", sizes[0])),
                SourceSpec::new(SourceKind::CaptionPairs, w1, ids("c", sizes[1])),
                SourceSpec::new(SourceKind::TextOnly, w2, ids("t", sizes[2])),
            ];
            let snap = build_snapshot(&sources, n, seed).unwrap();
            prop_assert_eq!(snap.entries.len(), n);
            for src in &sources {
                let picks: Vec<&str> = snap.entries.iter()
                    .filter(|e| e.source == src.name)
                    .map(|e| e.doc_id.as_str())
                    .collect();
                prop_assert!(picks.iter().all(|id| src.doc_ids.iter().any(|d| d == id)));
                for epoch in picks.chunks(src.doc_ids.len()) {
                    let uniq: HashSet<&&str> = epoch.iter().collect();
                    prop_assert_eq!(uniq.len(), epoch.len());
                }
            }
            prop_assert_eq!(build_snapshot(&sources, n, seed).unwrap(), snap);
        }
    }
}
