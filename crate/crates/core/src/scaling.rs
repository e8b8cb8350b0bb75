//! Learning-rate scaling law, weight-decay rule and LR schedule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScalingError {
    #[error("need at least two distinct parameter counts to fit")]
    Degenerate,
    #[error("{what} must be positive and finite, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("step {step} outside [0, {total}]")]
    OutOfRange { step: u64, total: u64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("fit file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Slope of the bundled fit in `ln(lr) = slope * ln(N) + intercept`.
pub const DEFAULT_SLOPE: f64 = -0.4214;
pub const DEFAULT_INTERCEPT: f64 = -0.5535;
/// Weight decay as a multiple of the peak learning rate.
pub const WEIGHT_DECAY_RATIO: f64 = 0.1;

/// Power law `lr = exp(slope * ln(N) + intercept)` over non-embedding
/// parameter count `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Points the fit was estimated from, as `(N, lr)`.
    pub points: Vec<(f64, f64)>,
}

impl Default for ScalingFit {
    fn default() -> Self {
        Self {
            slope: DEFAULT_SLOPE,
            intercept: DEFAULT_INTERCEPT,
            points: Vec::new(),
        }
    }
}

fn positive(what: &'static str, value: f64) -> Result<f64, ScalingError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ScalingError::NonPositive { what, value })
    }
}

/// Ordinary least squares on `(ln N, ln lr)`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<ScalingFit, ScalingError> {
    for &(n, lr) in points {
        positive("parameter count", n)?;
        positive("learning rate", lr)?;
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = points.len() as f64;
    if points.len() < 2 {
        return Err(ScalingError::Degenerate);
    }
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) * k {
        return Err(ScalingError::Degenerate);
    }
    let slope = sxy / sxx;
    Ok(ScalingFit {
        slope,
        intercept: my - slope * mx,
        points: points.to_vec(),
    })
}

pub fn predict_lr(fit: &ScalingFit, params: f64) -> Result<f64, ScalingError> {
    let n = positive("parameter count", params)?;
    Ok((fit.slope * n.ln() + fit.intercept).exp())
}

pub fn weight_decay_for(peak_lr: f64) -> Result<f64, ScalingError> {
    Ok(WEIGHT_DECAY_RATIO * positive("learning rate", peak_lr)?)
}

/// Parse `N lr` pairs, one per line, separated by whitespace or a comma.
/// Blank lines and `#` comments are skipped.
pub fn parse_fit_points(text: &str) -> Result<Vec<(f64, f64)>, ScalingError> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        let err = |message: String| ScalingError::Parse { line: i + 1, message };
        if cols.len() != 2 {
            return Err(err(format!("expected 2 columns, found {}", cols.len())));
        }
        let n: f64 = cols[0].parse().map_err(|e| err(format!("{e}")))?;
        let lr: f64 = cols[1].parse().map_err(|e| err(format!("{e}")))?;
        points.push((n, lr));
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    /// Final LR as a fraction of the peak.
    pub final_fraction: f64,
    pub grad_clip_norm: f64,
    pub train_z_loss_scale: f64,
}

impl ScheduleConfig {
    pub fn new(peak_lr: f64) -> Self {
        Self {
            peak_lr,
            warmup_steps: 2000,
            total_steps: 200_000,
            final_fraction: 0.1,
            grad_clip_norm: 1.0,
            train_z_loss_scale: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ScalingError> {
        positive("peak learning rate", self.peak_lr)?;
        if !(self.final_fraction > 0.0 && self.final_fraction <= 1.0) {
            return Err(ScalingError::InvalidSchedule(format!(
                "final_fraction {} outside (0, 1]",
                self.final_fraction
            )));
        }
        if self.warmup_steps >= self.total_steps {
            return Err(ScalingError::InvalidSchedule(format!(
                "warmup_steps {} >= total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        Ok(())
    }
}

/// Linear warmup from 0 to the peak, then cosine decay to
/// `final_fraction * peak` at `total_steps`.
pub fn lr_at_step(cfg: &ScheduleConfig, step: u64) -> Result<f64, ScalingError> {
    cfg.validate()?;
    if step > cfg.total_steps {
        return Err(ScalingError::OutOfRange {
            step,
            total: cfg.total_steps,
        });
    }
    let peak = cfg.peak_lr;
    if step <= cfg.warmup_steps {
        if cfg.warmup_steps == 0 {
            return Ok(peak);
        }
        return Ok(peak * step as f64 / cfg.warmup_steps as f64);
    }
    let progress = (step - cfg.warmup_steps) as f64 / (cfg.total_steps - cfg.warmup_steps) as f64;
    let f = cfg.final_fraction;
    Ok(peak * (f + (1.0 - f) * 0.5 * (1.0 + (PI * progress).cos())))
}

/// Round to `digits` significant figures.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exp = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - exp);
    (x * scale).round() / scale
}
