use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use mmprep::evalkit::{cider, meta_average, truncate_at_stop, vqa_accuracy, EvalExample, Metric, ScoreReport, TaskKind};
use serde::Deserialize;

use crate::config::Config;
use crate::error::{Classify, CliResult, Failure, Kind};
use crate::output::{read_jsonl, read_text, to_jsonl, RunOutput};

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Caption,
    Vqa,
}

impl From<KindArg> for TaskKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Caption => TaskKind::Caption,
            KindArg::Vqa => TaskKind::Vqa,
        }
    }
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Task name written into the report
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Examples, one EvalExample per line
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Model outputs, one {example_id, text} per line
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Cut raw outputs at the task's stop markers before scoring
    #[arg(long)]
    pub truncate: bool,
    /// Meta-average mode: JSON object of task -> metric
    #[arg(long, requires = "baseline", conflicts_with_all = ["dataset", "predictions"])]
    pub results: Option<PathBuf>,
    /// JSON object of task -> baseline metric
    #[arg(long, requires = "results")]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct Prediction {
    example_id: String,
    text: String,
}

fn read_map(path: &Path) -> CliResult<BTreeMap<String, f64>> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))
}

pub fn run(args: ScoreArgs, cfg: &Config) -> CliResult<(Option<PathBuf>, RunOutput)> {
    let mut s = cfg.section("eval-score")?;
    let out = s.path("out", args.out)?;
    let results = s.path("results", args.results)?;
    let baseline = s.path("baseline", args.baseline)?;
    if let (Some(r), Some(b)) = (&results, &baseline) {
        let value = meta_average(&read_map(r)?, &read_map(b)?).module()?;
        let line = format!("{}\n", serde_json::json!({ "meta_average": value }));
        return Ok((
            out,
            RunOutput {
                params: s.into_params(),
                inputs: vec![r.clone(), b.clone()],
                files: vec![("report.jsonl".into(), line.clone().into_bytes())],
                stdout: line,
            },
        ));
    }

    let task = s.opt("task", args.task)?.ok_or_else(|| Failure::bad_args("--task is required"))?;
    let kind: TaskKind = s.opt("kind", args.kind)?.ok_or_else(|| Failure::bad_args("--kind is required"))?.into();
    let truncate = s.flag("truncate", args.truncate)?;
    let dataset_path = s.require_path("dataset", args.dataset)?;
    let preds_path = s.require_path("predictions", args.predictions)?;
    let dataset: Vec<EvalExample> = read_jsonl(&dataset_path)?;
    let preds: HashMap<String, String> = read_jsonl::<Prediction>(&preds_path)?
        .into_iter()
        .map(|p| (p.example_id, p.text))
        .collect();

    let mut outputs = Vec::with_capacity(dataset.len());
    for ex in &dataset {
        let raw = preds.get(&ex.example_id).ok_or_else(|| {
            Failure::new(
                Kind::Module,
                "MissingPrediction",
                anyhow::anyhow!("no prediction for example {}", ex.example_id),
            )
        })?;
        outputs.push(if truncate { truncate_at_stop(raw, kind).to_string() } else { raw.clone() });
    }

    let (metric, value) = match kind {
        TaskKind::Caption => {
            let refs: Vec<Vec<String>> = dataset.iter().map(|e| e.references.clone()).collect();
            (Metric::Cider, cider(&outputs, &refs).module()?)
        }
        TaskKind::Vqa => {
            if dataset.is_empty() {
                return Err(Failure::new(Kind::Module, "EmptyCorpus", anyhow::anyhow!("empty dataset")));
            }
            let mut sum = 0.0;
            for (ex, pred) in dataset.iter().zip(&outputs) {
                let answers = ex.answers_10.as_ref().ok_or_else(|| {
                    Failure::new(
                        Kind::Module,
                        "MissingField",
                        anyhow::anyhow!("example {} is missing answers_10", ex.example_id),
                    )
                })?;
                sum += vqa_accuracy(pred, answers).module()?;
            }
            (Metric::VqaAccuracy, sum / dataset.len() as f64)
        }
    };
    let report = ScoreReport {
        task,
        metric,
        value,
        n: dataset.len(),
    };
    let bytes = to_jsonl(&[report]);
    Ok((
        out,
        RunOutput {
            params: s.into_params(),
            inputs: vec![dataset_path, preds_path],
            stdout: String::from_utf8(bytes.clone()).expect("json is utf-8"),
            files: vec![("report.jsonl".into(), bytes)],
        },
    ))
}
