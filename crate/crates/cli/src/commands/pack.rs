use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use clap::Args;
use mmprep::corpus::{InterleavedDoc, TextDoc};
use mmprep::mixture::{Snapshot, SourceKind};
use mmprep::packer::{lay_out_document, lay_out_text, BatchPlan, PackedSequence, Packer, WordTokenizer};
use serde::Serialize;

use crate::config::Config;
use crate::error::{Classify, CliResult, Failure, Kind};
use crate::output::{read_jsonl, read_text, to_jsonl, RunOutput};

/// Largest sequence length for which `--dense-mask` is allowed.
pub const DENSE_MASK_LIMIT: usize = 512;

#[derive(Args, Debug)]
pub struct PackArgs {
    /// Snapshot written by mixture-snapshot
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    #[arg(long)]
    pub interleaved: Option<PathBuf>,
    #[arg(long)]
    pub captions: Option<PathBuf>,
    #[arg(long)]
    pub text: Option<PathBuf>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub max_images: Option<usize>,
    #[arg(long)]
    pub tokens_per_image: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Also emit each sequence's full attention matrix (seq_len <= 512)
    #[arg(long)]
    pub dense_mask: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PackedRecord<'a> {
    #[serde(flatten)]
    seq: &'a PackedSequence,
    #[serde(skip_serializing_if = "Option::is_none")]
    dense_mask: Option<Vec<Vec<bool>>>,
}

enum Doc {
    Interleaved(InterleavedDoc),
    Text(TextDoc),
}

impl Doc {
    fn texts(&self) -> Vec<&str> {
        match self {
            Doc::Interleaved(d) => d
                .segments
                .iter()
                .filter_map(|s| match s {
                    mmprep::corpus::DocSegment::Text { content } => Some(content.as_str()),
                    mmprep::corpus::DocSegment::Image(_) => None,
                })
                .collect(),
            Doc::Text(t) => vec![t.text.as_str()],
        }
    }
}

pub fn run(args: PackArgs, cfg: &Config) -> CliResult<(PathBuf, RunOutput)> {
    let mut s = cfg.section("pack")?;
    let snapshot_path = s.require_path("snapshot", args.snapshot)?;
    let stores = [
        (SourceKind::Interleaved, s.path("interleaved", args.interleaved)?),
        (SourceKind::CaptionPairs, s.path("captions", args.captions)?),
        (SourceKind::TextOnly, s.path("text", args.text)?),
    ];
    let out = s.require_path("out", args.out)?;
    let d = BatchPlan::default();
    let plan = BatchPlan {
        batch_size: s.get("batch-size", args.batch_size, d.batch_size)?,
        seq_len: s.get("seq-len", args.seq_len, d.seq_len)?,
        max_images_per_seq: s.get("max-images", args.max_images, d.max_images_per_seq)?,
        tokens_per_image: s.get("tokens-per-image", args.tokens_per_image, d.tokens_per_image)?,
    };
    let dense = s.flag("dense-mask", args.dense_mask)?;
    plan.validate().with_kind(Kind::BadArgs)?;
    if dense && plan.seq_len > DENSE_MASK_LIMIT {
        return Err(Failure::bad_args(format!(
            "--dense-mask needs seq-len <= {DENSE_MASK_LIMIT}, got {}",
            plan.seq_len
        )));
    }

    let snapshot = Snapshot::parse(&read_text(&snapshot_path)?).with_kind(Kind::Parse)?;
    let mut inputs = vec![snapshot_path];
    let mut docs: HashMap<(SourceKind, String), Doc> = HashMap::new();
    for (kind, path) in &stores {
        let Some(path) = path else { continue };
        inputs.push(path.clone());
        if *kind == SourceKind::TextOnly {
            for t in read_jsonl::<TextDoc>(path)? {
                docs.insert((*kind, t.doc_id.clone()), Doc::Text(t));
            }
        } else {
            for d in read_jsonl::<InterleavedDoc>(path)? {
                docs.insert((*kind, d.doc_id.clone()), Doc::Interleaved(d));
            }
        }
    }

    let mut referenced = Vec::with_capacity(snapshot.entries.len());
    for e in &snapshot.entries {
        let doc = docs.get(&(e.source, e.doc_id.clone())).ok_or_else(|| {
            Failure::new(
                Kind::Module,
                "UnknownDocument",
                anyhow::anyhow!("snapshot names {}\t{} which no store provides", e.source, e.doc_id),
            )
        })?;
        referenced.push(doc);
    }
    let corpus: BTreeSet<&str> = referenced.iter().flat_map(|d| d.texts()).collect();
    let tokenizer = WordTokenizer::build(corpus);

    let mut packer = Packer::new(plan).module()?;
    let mut seqs = Vec::new();
    for doc in referenced {
        let stream = match doc {
            Doc::Interleaved(d) => lay_out_document(d, plan.tokens_per_image, &tokenizer).module()?,
            Doc::Text(t) => lay_out_text(t, &tokenizer),
        };
        seqs.extend(packer.push(&stream));
    }
    seqs.extend(packer.finish());

    let records: Vec<PackedRecord> = seqs
        .iter()
        .map(|seq| PackedRecord {
            seq,
            dense_mask: dense.then(|| seq.mask().to_dense()),
        })
        .collect();
    let real: usize = seqs.iter().map(|q| q.pad_from).sum();
    let image: usize = seqs.iter().flat_map(|q| &q.image_slots).map(|sl| sl.span).sum();
    let stdout = format!(
        "sequences={}\nbatches={}\ntext_tokens={}\nimage_tokens={}\npad_tokens={}\nvocab_size={}\n",
        seqs.len(),
        seqs.len().div_ceil(plan.batch_size),
        real - image,
        image,
        seqs.len() * plan.seq_len - real,
        tokenizer.vocab_size()
    );
    let mut vocab = serde_json::to_vec(&tokenizer).expect("vocabulary serializes");
    vocab.push(b'\n');
    Ok((
        out,
        RunOutput {
            params: s.into_params(),
            inputs,
            files: vec![("packed.jsonl".into(), to_jsonl(&records)), ("vocab.json".into(), vocab)],
            stdout,
        },
    ))
}
