use std::collections::HashSet;
use std::path::{Path, PathBuf};

use clap::Args;
use mmprep::mixture::{build_snapshot, MixtureError, SourceKind, SourceSpec, DEFAULT_WEIGHTS};
use serde::Deserialize;

use crate::config::Config;
use crate::error::{variant_name, CliResult, Failure, Kind};
use crate::output::{read_jsonl, RunOutput};

#[derive(Args, Debug)]
pub struct SnapshotArgs {
    /// Interleaved documents (JSONL with doc_id)
    #[arg(long)]
    pub interleaved: Option<PathBuf>,
    /// Image-caption pairs (JSONL with doc_id)
    #[arg(long)]
    pub captions: Option<PathBuf>,
    /// Text-only documents (JSONL with doc_id)
    #[arg(long)]
    pub text: Option<PathBuf>,
    /// Comma-separated weights for interleaved, captions, text; missing trailing weights are 0
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    #[arg(long)]
    pub n_entries: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct DocId {
    doc_id: String,
}

/// Document ids of a JSONL store, rejecting repeats.
pub fn read_doc_ids(path: &Path) -> CliResult<Vec<String>> {
    let ids: Vec<String> = read_jsonl::<DocId>(path)?.into_iter().map(|d| d.doc_id).collect();
    let mut seen = HashSet::new();
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(Failure::parse(format!("{}: duplicate doc_id {dup:?}", path.display())));
    }
    Ok(ids)
}

pub fn run(args: SnapshotArgs, cfg: &Config, seed: u64) -> CliResult<(PathBuf, RunOutput)> {
    let mut s = cfg.section("mixture-snapshot")?;
    let paths = [
        (SourceKind::Interleaved, s.path("interleaved", args.interleaved)?),
        (SourceKind::CaptionPairs, s.path("captions", args.captions)?),
        (SourceKind::TextOnly, s.path("text", args.text)?),
    ];
    let weights = s.get("weights", args.weights, DEFAULT_WEIGHTS.iter().map(|w| w.1).collect())?;
    let n_entries = s.get("n-entries", args.n_entries, 1000usize)?;
    if weights.len() > paths.len() {
        return Err(Failure::bad_args(format!("expected at most 3 weights, got {}", weights.len())));
    }

    let mut inputs = Vec::new();
    let mut sources = Vec::new();
    for (i, (kind, path)) in paths.iter().enumerate() {
        let doc_ids = match path {
            Some(p) => {
                inputs.push(p.clone());
                read_doc_ids(p)?
            }
            None => Vec::new(),
        };
        sources.push(SourceSpec::new(*kind, weights.get(i).copied().unwrap_or(0.0), doc_ids));
    }
    let snapshot = build_snapshot(&sources, n_entries, seed).map_err(|e| {
        let kind = match e {
            MixtureError::BadWeights { .. } | MixtureError::NoEntries => Kind::BadArgs,
            _ => Kind::Module,
        };
        Failure::new(kind, variant_name(&e), e)
    })?;

    let out = s.require_path("out", args.out)?;
    let mut stdout = String::new();
    for (kind, n) in &snapshot.counts {
        stdout.push_str(&format!("{kind}={n}\n"));
    }
    Ok((
        out,
        RunOutput {
            params: s.into_params(),
            inputs,
            files: vec![("snapshot.txt".into(), snapshot.to_text().into_bytes())],
            stdout,
        },
    ))
}
