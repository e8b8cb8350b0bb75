//! Commands that compute a small report and print it as `key=value` lines.

use std::path::PathBuf;

use clap::Args;
use mmprep::moe::{load_balance_loss, parse_matrix, plan_layers, route_topk, router_z_loss, MoeConfig};
use mmprep::scaling::{
    fit_loglog, lr_at_step, parse_fit_points, predict_lr, weight_decay_for, ScalingFit, ScheduleConfig,
};
use mmprep::visgeom::{decompose_image, fewshot_token_budget, fewshot_token_table, patch_grid, FewShotBudget};

use crate::config::Config;
use crate::error::{Classify, CliResult, Failure, Kind};
use crate::output::{read_text, RunOutput};

fn join<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn join_f(items: &[f64]) -> String {
    join(items.iter().map(|x| format!("{x:.6}")))
}

#[derive(Args, Debug)]
pub struct BudgetArgs {
    /// Number of in-context examples
    #[arg(long)]
    pub shots: Option<u32>,
    /// How many of the last examples are decomposed at high resolution
    #[arg(long)]
    pub hires_last: Option<u32>,
    #[arg(long)]
    pub hi_tokens: Option<u32>,
    #[arg(long)]
    pub lo_tokens: Option<u32>,
    #[arg(long)]
    pub images_per_example: Option<u32>,
    /// Also report the patch grid of a square image of this side
    #[arg(long)]
    pub resolution: Option<u32>,
    #[arg(long)]
    pub patch: Option<u32>,
    /// Also report the sub-image layout of a square image of this side
    #[arg(long)]
    pub decompose: Option<u32>,
    #[arg(long)]
    pub base_side: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn visgeom_budget(args: BudgetArgs, cfg: &Config) -> CliResult<(Option<PathBuf>, RunOutput)> {
    let mut s = cfg.section("visgeom-budget")?;
    let out = s.path("out", args.out)?;
    let shots = s.get("shots", args.shots, 4)?;
    let hires_last = s.get("hires-last", args.hires_last, 0)?;
    let d = FewShotBudget::new(shots, hires_last);
    let budget = FewShotBudget {
        hi_tokens: s.get("hi-tokens", args.hi_tokens, d.hi_tokens)?,
        lo_tokens: s.get("lo-tokens", args.lo_tokens, d.lo_tokens)?,
        images_per_example: s.get("images-per-example", args.images_per_example, d.images_per_example)?,
        ..d
    };
    let resolution = s.opt("resolution", args.resolution)?;
    let patch = s.get("patch", args.patch, 14)?;
    let decompose = s.opt("decompose", args.decompose)?;
    let base_side = s.get("base-side", args.base_side, mmprep::visgeom::DEFAULT_BASE_SIDE)?;

    let rows = fewshot_token_table(&budget).with_kind(Kind::BadArgs)?;
    let totals = fewshot_token_budget(&budget).with_kind(Kind::BadArgs)?;
    let mut text = String::new();
    for r in &rows {
        text.push_str(&format!(
            "shot={} high_res={} effective_images={} image_tokens={}\n",
            r.shot, r.high_res, r.effective_images, r.image_tokens
        ));
    }
    text.push_str(&format!(
        "effective_images={}\nimage_tokens={}\n",
        totals.effective_images, totals.image_tokens
    ));
    if let Some(side) = resolution {
        let g = patch_grid((side, side), patch).with_kind(Kind::BadArgs)?;
        text.push_str(&format!("patch_grid={}x{}\npatch_tokens={}\n", g.grid.0, g.grid.1, g.token_count));
    }
    if let Some(side) = decompose {
        let layout = decompose_image(side, base_side, budget.lo_tokens).with_kind(Kind::BadArgs)?;
        for c in &layout.crops {
            text.push_str(&format!(
                "crop={:?} frame={} x={} y={} w={} h={}\n",
                c.kind, c.frame_side, c.x, c.y, c.width, c.height
            ));
        }
        text.push_str(&format!("decomposed_tokens={}\n", layout.total_tokens()));
    }
    Ok((out, report(s.into_params(), vec![], text)))
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Non-embedding parameter count, e.g. 3e10
    #[arg(long)]
    pub params: Option<f64>,
    /// `default` or a two-column (N, lr) file to fit
    #[arg(long)]
    pub fit: Option<String>,
    #[arg(long)]
    pub warmup_steps: Option<u64>,
    #[arg(long)]
    pub total_steps: Option<u64>,
    /// Final learning rate as a fraction of the peak
    #[arg(long)]
    pub final_fraction: Option<f64>,
    /// Number of evenly spaced schedule samples
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn scaling_plan(args: PlanArgs, cfg: &Config) -> CliResult<(Option<PathBuf>, RunOutput)> {
    let mut s = cfg.section("scaling-plan")?;
    let out = s.path("out", args.out)?;
    let n = s
        .opt("params", args.params)?
        .ok_or_else(|| Failure::bad_args("--params is required"))?;
    let fit_arg = s.get("fit", args.fit, "default".to_string())?;
    let mut inputs = vec![];
    let fit = if fit_arg == "default" {
        ScalingFit::default()
    } else {
        let path = PathBuf::from(&fit_arg);
        let points = parse_fit_points(&read_text(&path)?).with_kind(Kind::Parse)?;
        inputs.push(path);
        fit_loglog(&points).module()?
    };
    let peak = predict_lr(&fit, n).with_kind(Kind::BadArgs)?;
    let wd = weight_decay_for(peak).module()?;
    let d = ScheduleConfig::new(peak);
    let sched = ScheduleConfig {
        warmup_steps: s.get("warmup-steps", args.warmup_steps, d.warmup_steps)?,
        total_steps: s.get("total-steps", args.total_steps, d.total_steps)?,
        final_fraction: s.get("final-fraction", args.final_fraction, d.final_fraction)?,
        ..d
    };
    sched.validate().with_kind(Kind::BadArgs)?;
    let samples = s.get("samples", args.samples, 11)?.max(2);

    let mut text = format!(
        "params={n:e}\nslope={:.4}\nintercept={:.4}\npeak_lr={peak:.1e}\nweight_decay={wd:.1e}\npeak_lr_exact={peak:.6e}\nweight_decay_exact={wd:.6e}\n",
        fit.slope, fit.intercept
    );
    let mut steps: Vec<u64> = (0..samples).map(|i| i * sched.total_steps / (samples - 1)).collect();
    steps.push(sched.warmup_steps);
    steps.sort_unstable();
    steps.dedup();
    for step in steps {
        let lr = lr_at_step(&sched, step).module()?;
        text.push_str(&format!("step={step} lr={lr:.6e}\n"));
    }
    Ok((out, report(s.into_params(), inputs, text)))
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    /// T x E matrix of router logits, whitespace or comma separated
    #[arg(long)]
    pub logits: Option<PathBuf>,
    /// Expected number of experts (columns)
    #[arg(long)]
    pub experts: Option<usize>,
    #[arg(long)]
    pub topk: Option<usize>,
    #[arg(long)]
    pub lb_coeff: Option<f64>,
    #[arg(long)]
    pub z_coeff: Option<f64>,
    /// Also list which of this many decoder layers become MoE layers
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub every_n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn moe_audit(args: AuditArgs, cfg: &Config) -> CliResult<(Option<PathBuf>, RunOutput)> {
    let mut s = cfg.section("moe-audit")?;
    let out = s.path("out", args.out)?;
    let path = s.require_path("logits", args.logits)?;
    let d = MoeConfig::default();
    let top_k = s.get("topk", args.topk, d.top_k)?;
    let lb_coeff = s.get("lb-coeff", args.lb_coeff, d.lb_coeff)?;
    let z_coeff = s.get("z-coeff", args.z_coeff, d.z_coeff)?;
    let experts = s.opt("experts", args.experts)?;
    let layers = s.opt("layers", args.layers)?;
    let every_n = s.get("every-n", args.every_n, d.every_n_layers)?;

    let logits = parse_matrix(&read_text(&path)?).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?;
    if let Some(e) = experts {
        if e != logits.ncols() {
            return Err(Failure::bad_args(format!(
                "--experts {e} but the logits have {} columns",
                logits.ncols()
            )));
        }
    }
    let cfg = MoeConfig {
        num_experts: logits.ncols(),
        top_k,
        every_n_layers: every_n,
        lb_coeff,
        z_coeff,
    };
    cfg.validate().with_kind(Kind::BadArgs)?;
    let routed = route_topk(&logits, top_k).module()?;
    let lb = load_balance_loss(&routed, lb_coeff);
    let z = router_z_loss(&logits, z_coeff).module()?;

    let mut text = String::new();
    for (t, r) in routed.routes.iter().enumerate() {
        text.push_str(&format!("token={t} experts={} weights={}\n", join(&r.experts), join_f(&r.weights)));
    }
    text.push_str(&format!("dispatch_fraction={}\n", join_f(&routed.dispatch_fraction)));
    text.push_str(&format!("mean_prob={}\n", join_f(&routed.mean_prob)));
    text.push_str(&format!("load_balance_raw={:.9}\nload_balance_scaled={:.9}\n", lb.raw, lb.scaled));
    text.push_str(&format!("z_loss_raw={:.9}\nz_loss_scaled={:.9}\n", z.raw, z.scaled));
    if let Some(n) = layers {
        text.push_str(&format!("moe_layers={}\n", join(plan_layers(n, every_n))));
    }
    Ok((out, report(s.into_params(), vec![path], text)))
}

pub fn report(params: serde_json::Map<String, serde_json::Value>, inputs: Vec<PathBuf>, text: String) -> RunOutput {
    RunOutput {
        params,
        inputs,
        files: vec![("report.txt".into(), text.clone().into_bytes())],
        stdout: text,
    }
}
