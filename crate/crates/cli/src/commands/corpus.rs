use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;

use clap::Args;
use mmprep::corpus::{
    apply_image_dedup_tallied, count_images_par, filter_document, filter_images, lsh_near_duplicates,
    near_duplicate_drops, parse_page, resolve_images, text_quality_filter, ImageRecord, InterleavedDoc, LshParams,
    PageSegment, RawPage, RejectReason, TextDoc, TextFilterConfig,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Config, Section};
use crate::error::{Classify, CliResult, Failure, Kind};
use crate::output::{read_jsonl, read_text, to_jsonl, to_pretty_json, RunOutput};

#[derive(Args, Debug, Default)]
pub struct LshArgs {
    /// MinHash permutations (must equal bands x rows)
    #[arg(long)]
    pub num_perm: Option<usize>,
    /// Character shingle length
    #[arg(long)]
    pub shingle_len: Option<usize>,
    #[arg(long)]
    pub bands: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    /// Estimated Jaccard at or above which two texts are duplicates
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl LshArgs {
    fn resolve(self, s: &mut Section) -> CliResult<LshParams> {
        let d = LshParams::default();
        let params = LshParams {
            num_perm: s.get("num-perm", self.num_perm, d.num_perm)?,
            shingle_len: s.get("shingle-len", self.shingle_len, d.shingle_len)?,
            bands: s.get("bands", self.bands, d.bands)?,
            rows: s.get("rows", self.rows, d.rows)?,
            threshold_jaccard: s.get("threshold", self.threshold, d.threshold_jaccard)?,
        };
        params.validate().with_kind(Kind::BadArgs)?;
        if params.num_perm < 16 || params.shingle_len == 0 {
            return Err(Failure::bad_args("num-perm must be >= 16 and shingle-len >= 1"));
        }
        Ok(params)
    }
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Raw pages, one {page_id, url, markup} record per line
    #[arg(long)]
    pub pages: Option<PathBuf>,
    /// Image metadata, one {url, width, height, md5, bytes_valid} record per line
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Minimum whitespace token count for text-only documents
    #[arg(long)]
    pub min_tokens: Option<usize>,
    /// Blocklist terms, one per line
    #[arg(long)]
    pub blocklist: Option<PathBuf>,
    #[command(flatten)]
    pub lsh: LshArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DedupArgs {
    /// Interleaved documents to image-deduplicate
    #[arg(long)]
    pub interleaved: Option<PathBuf>,
    /// Text-only documents to near-deduplicate
    #[arg(long)]
    pub text: Option<PathBuf>,
    #[command(flatten)]
    pub lsh: LshArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Rejection counts per pipeline stage.
#[derive(Debug, Default, Serialize)]
pub struct CorpusStats {
    pub pages: usize,
    pub malformed_pages: usize,
    pub interleaved_docs: usize,
    pub text_docs: usize,
    pub images_kept: usize,
    pub image_rejects: BTreeMap<RejectReason, usize>,
    pub document_rejects: BTreeMap<RejectReason, usize>,
    pub text_rejects: BTreeMap<RejectReason, usize>,
}

fn bump(map: &mut BTreeMap<RejectReason, usize>, reason: RejectReason, n: usize) {
    if n > 0 {
        *map.entry(reason).or_default() += n;
    }
}

/// Global and page-level image dedup, then the document filter again.
fn dedup_interleaved(docs: Vec<InterleavedDoc>, stats: &mut CorpusStats) -> Vec<InterleavedDoc> {
    let counts = count_images_par(&docs);
    let deduped: Vec<_> = docs.par_iter().map(|d| apply_image_dedup_tallied(d, &counts)).collect();
    let mut kept = Vec::new();
    for (doc, tally) in deduped {
        bump(&mut stats.image_rejects, RejectReason::GlobalDup, tally.global_dup);
        bump(&mut stats.image_rejects, RejectReason::PageDup, tally.page_dup);
        let decision = filter_document(&doc);
        if decision.keep {
            kept.push(doc);
        } else {
            bump(&mut stats.document_rejects, decision.reason, 1);
        }
    }
    stats.interleaved_docs = kept.len();
    stats.images_kept = kept.iter().map(InterleavedDoc::image_count).sum();
    kept
}

fn dedup_text(docs: Vec<TextDoc>, lsh: &LshParams, stats: &mut CorpusStats) -> CliResult<Vec<TextDoc>> {
    let pairs = lsh_near_duplicates(&docs, lsh).module()?;
    let drops = near_duplicate_drops(&pairs, docs.len());
    let kept: Vec<TextDoc> = docs.into_iter().zip(drops).filter(|(_, d)| !d).map(|(t, _)| t).collect();
    stats.text_docs = kept.len();
    Ok(kept)
}

fn finish(
    stats: CorpusStats,
    interleaved: Option<Vec<InterleavedDoc>>,
    text: Option<Vec<TextDoc>>,
    params: serde_json::Map<String, serde_json::Value>,
    inputs: Vec<PathBuf>,
) -> RunOutput {
    let mut files = Vec::new();
    if let Some(docs) = &interleaved {
        files.push(("interleaved.jsonl".to_string(), to_jsonl(docs)));
    }
    if let Some(docs) = &text {
        files.push(("text.jsonl".to_string(), to_jsonl(docs)));
    }
    let stdout = format!(
        "pages={} interleaved_docs={} text_docs={} images_kept={}\n",
        stats.pages, stats.interleaved_docs, stats.text_docs, stats.images_kept
    );
    files.push(("stats.json".to_string(), to_pretty_json(&stats)));
    RunOutput {
        params,
        inputs,
        files,
        stdout,
    }
}

fn read_blocklist(path: &std::path::Path) -> CliResult<Vec<String>> {
    Ok(read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

pub fn build(args: BuildArgs, cfg: &Config) -> CliResult<(PathBuf, RunOutput)> {
    let mut s = cfg.section("corpus-build")?;
    let pages_path = s.require_path("pages", args.pages)?;
    let images_path = s.path("images", args.images)?;
    let blocklist_path = s.path("blocklist", args.blocklist)?;
    let out = s.require_path("out", args.out)?;
    let min_tokens = s.get("min-tokens", args.min_tokens, TextFilterConfig::default().min_tokens)?;
    let lsh = args.lsh.resolve(&mut s)?;

    let mut inputs = vec![pages_path.clone()];
    let pages: Vec<RawPage> = read_jsonl(&pages_path)?;
    let mut seen = HashSet::new();
    if let Some(dup) = pages.iter().find(|p| !seen.insert(p.page_id.as_str())) {
        return Err(Failure::parse(format!("duplicate page_id {:?}", dup.page_id)));
    }
    let mut images: HashMap<String, ImageRecord> = HashMap::new();
    if let Some(p) = &images_path {
        for rec in read_jsonl::<ImageRecord>(p)? {
            images.insert(rec.url.clone(), rec);
        }
        inputs.push(p.clone());
    }
    let mut text_cfg = TextFilterConfig {
        min_tokens,
        ..Default::default()
    };
    if let Some(p) = &blocklist_path {
        text_cfg = text_cfg.with_blocklist(read_blocklist(p)?);
        inputs.push(p.clone());
    }

    let parsed: Vec<_> = pages.par_iter().map(|p| parse_page(&p.markup)).collect();
    let mut stats = CorpusStats {
        pages: pages.len(),
        ..Default::default()
    };
    let mut candidates = Vec::new();
    let mut texts = Vec::new();
    for (page, segments) in pages.iter().zip(parsed) {
        let Ok(segments) = segments else {
            stats.malformed_pages += 1;
            continue;
        };
        let body: Vec<&str> = segments
            .iter()
            .filter_map(|s| match s {
                PageSegment::Text(t) => Some(t.as_str()),
                PageSegment::Image(_) => None,
            })
            .collect();
        let text = TextDoc::new(page.page_id.clone(), body.join("\n"));
        let decision = text_quality_filter(&text, &text_cfg);
        if decision.keep {
            texts.push(text);
        } else {
            bump(&mut stats.text_rejects, decision.reason, 1);
        }

        let resolved = resolve_images(segments, |url| images.get(url).cloned());
        let (kept, rejected) = filter_images(resolved);
        for r in rejected {
            bump(&mut stats.image_rejects, r, 1);
        }
        let doc = InterleavedDoc::new(page.page_id.clone(), kept);
        let decision = filter_document(&doc);
        if decision.keep {
            candidates.push(doc);
        } else {
            bump(&mut stats.document_rejects, decision.reason, 1);
        }
    }

    let interleaved = dedup_interleaved(candidates, &mut stats);
    let before = texts.len();
    let texts = dedup_text(texts, &lsh, &mut stats)?;
    bump(&mut stats.text_rejects, RejectReason::NearDup, before - texts.len());
    Ok((out, finish(stats, Some(interleaved), Some(texts), s.into_params(), inputs)))
}

pub fn dedup(args: DedupArgs, cfg: &Config) -> CliResult<(PathBuf, RunOutput)> {
    let mut s = cfg.section("corpus-dedup")?;
    let interleaved_path = s.path("interleaved", args.interleaved)?;
    let text_path = s.path("text", args.text)?;
    let out = s.require_path("out", args.out)?;
    let lsh = args.lsh.resolve(&mut s)?;
    if interleaved_path.is_none() && text_path.is_none() {
        return Err(Failure::bad_args("give --interleaved and/or --text"));
    }

    let mut stats = CorpusStats::default();
    let mut inputs = Vec::new();
    let interleaved = match &interleaved_path {
        Some(p) => {
            inputs.push(p.clone());
            let docs: Vec<InterleavedDoc> = read_jsonl(p)?;
            Some(dedup_interleaved(docs, &mut stats))
        }
        None => None,
    };
    let text = match &text_path {
        Some(p) => {
            inputs.push(p.clone());
            let docs: Vec<TextDoc> = read_jsonl(p)?;
            let before = docs.len();
            let kept = dedup_text(docs, &lsh, &mut stats)?;
            bump(&mut stats.text_rejects, RejectReason::NearDup, before - kept.len());
            Some(kept)
        }
        None => None,
    };
    Ok((out, finish(stats, interleaved, text, s.into_params(), inputs)))
}
