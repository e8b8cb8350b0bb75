//! Vision-side token geometry: patch grids, positional-embedding
//! interpolation, connectors, sub-image decomposition and few-shot
//! image-token budgets.

mod connectors;

use ndarray::Array3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use connectors::{
    adaptive_windows, attn_pool_connect, avg_pool_connect, cabstractor_connect, AttnPoolOutput, AttnPoolWeights,
    CAbstractorParams, Linear,
};

#[derive(Debug, Error, PartialEq)]
pub enum VisGeomError {
    #[error("resolution {h}x{w} not divisible by patch size {patch}")]
    IndivisibleResolution { h: u32, w: u32, patch: u32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub resolution_px: (u32, u32),
    pub patch_px: u32,
    pub grid: (u32, u32),
    pub token_count: u64,
}

/// Patch grid of a `(height, width)` image.
pub fn patch_grid(resolution: (u32, u32), patch: u32) -> Result<PatchGrid, VisGeomError> {
    let (h, w) = resolution;
    if patch == 0 || h == 0 || w == 0 || h % patch != 0 || w % patch != 0 {
        return Err(VisGeomError::IndivisibleResolution { h, w, patch });
    }
    let grid = (h / patch, w / patch);
    Ok(PatchGrid {
        resolution_px: resolution,
        patch_px: patch,
        grid,
        token_count: grid.0 as u64 * grid.1 as u64,
    })
}

/// `h x w x channels` grid of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub values: Array3<f64>,
}

/// Flat wire form: header plus row-major `h * w * channels` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGridRecord {
    pub h: usize,
    pub w: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(values: Array3<f64>) -> Self {
        Self { values }
    }

    pub fn from_fn(h: usize, w: usize, channels: usize, f: impl FnMut((usize, usize, usize)) -> f64) -> Self {
        Self {
            values: Array3::from_shape_fn((h, w, channels), f),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        let (h, w, _) = self.values.dim();
        (h, w)
    }

    pub fn channels(&self) -> usize {
        self.values.dim().2
    }

    pub fn to_record(&self) -> FeatureGridRecord {
        let (h, w, channels) = self.values.dim();
        FeatureGridRecord {
            h,
            w,
            channels,
            values: self.values.iter().copied().collect(),
        }
    }

    pub fn from_record(rec: FeatureGridRecord) -> Result<Self, VisGeomError> {
        if rec.values.iter().any(|v| !v.is_finite()) {
            return Err(VisGeomError::InvalidArgument("feature values must be finite".into()));
        }
        Array3::from_shape_vec((rec.h, rec.w, rec.channels), rec.values)
            .map(Self::new)
            .map_err(|e| VisGeomError::ShapeMismatch(e.to_string()))
    }
}

/// Corner-aligned source coordinate for output index `i`.
fn source_coord(i: usize, from: usize, to: usize) -> f64 {
    if to == 1 {
        0.0
    } else {
        i as f64 * (from - 1) as f64 / (to - 1) as f64
    }
}

/// Bilinear resampling with aligned corners, applied per channel.
pub fn interpolate_pos_embed(grid: &FeatureGrid, new_dims: (usize, usize)) -> Result<FeatureGrid, VisGeomError> {
    let (h, w) = grid.dims();
    let (nh, nw) = new_dims;
    if h == 0 || w == 0 || nh == 0 || nw == 0 {
        return Err(VisGeomError::InvalidArgument("grid dimensions must be at least 1x1".into()));
    }
    if (h, w) == (nh, nw) {
        return Ok(grid.clone());
    }
    let c = grid.channels();
    let src = &grid.values;
    let axis = |i: usize, from: usize, to: usize| {
        let x = source_coord(i, from, to);
        let lo = (x.floor() as usize).min(from - 1);
        let hi = (lo + 1).min(from - 1);
        (lo, hi, x - lo as f64)
    };
    let rows: Vec<_> = (0..nh).map(|i| axis(i, h, nh)).collect();
    let cols: Vec<_> = (0..nw).map(|j| axis(j, w, nw)).collect();
    Ok(FeatureGrid::from_fn(nh, nw, c, |(i, j, k)| {
        let (r0, r1, fr) = rows[i];
        let (c0, c1, fc) = cols[j];
        let top = src[[r0, c0, k]] * (1.0 - fc) + src[[r0, c1, k]] * fc;
        let bottom = src[[r1, c0, k]] * (1.0 - fc) + src[[r1, c1, k]] * fc;
        top * (1.0 - fr) + bottom * fr
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropKind {
    /// Whole image resized to `base_side`.
    Overview,
    /// Quadrant of the image resized to `2 * base_side`.
    Quadrant,
}

/// Crop rectangle in the coordinate frame of a `frame_side` square resize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crop {
    pub kind: CropKind,
    pub frame_side: u32,
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubImageLayout {
    pub input_px: (u32, u32),
    pub base_px: u32,
    pub crops: Vec<Crop>,
    pub tokens_per_crop: u32,
}

impl SubImageLayout {
    pub fn total_tokens(&self) -> u64 {
        self.crops.len() as u64 * self.tokens_per_crop as u64
    }
}

pub const DEFAULT_BASE_SIDE: u32 = 672;
pub const DEFAULT_TOKENS_PER_CROP: u32 = 144;

/// One overview at `base_side` plus the four quadrants of a `2 * base_side`
/// resize. Only geometry is produced; no pixels are touched.
pub fn decompose_image(input_side: u32, base_side: u32, tokens_per_crop: u32) -> Result<SubImageLayout, VisGeomError> {
    if base_side == 0 || input_side < base_side {
        return Err(VisGeomError::InvalidArgument(format!(
            "input side {input_side} must be >= base side {base_side} > 0"
        )));
    }
    let big = 2 * base_side;
    let mut crops = vec![Crop {
        kind: CropKind::Overview,
        frame_side: base_side,
        x: 0,
        y: 0,
        width: base_side,
        height: base_side,
    }];
    for y in [0, base_side] {
        for x in [0, base_side] {
            crops.push(Crop {
                kind: CropKind::Quadrant,
                frame_side: big,
                x,
                y,
                width: base_side,
                height: base_side,
            });
        }
    }
    Ok(SubImageLayout {
        input_px: (input_side, input_side),
        base_px: base_side,
        crops,
        tokens_per_crop,
    })
}

/// Crops per decomposed image.
pub const CROPS_PER_IMAGE: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotBudget {
    pub shots: u32,
    /// Only the last `hires_last` shots are decomposed.
    pub hires_last: u32,
    pub hi_tokens: u32,
    pub lo_tokens: u32,
    pub images_per_example: u32,
}

impl FewShotBudget {
    pub fn new(shots: u32, hires_last: u32) -> Self {
        Self {
            shots,
            hires_last,
            hi_tokens: CROPS_PER_IMAGE as u32 * DEFAULT_TOKENS_PER_CROP,
            lo_tokens: DEFAULT_TOKENS_PER_CROP,
            images_per_example: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetTotals {
    pub effective_images: u64,
    pub image_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotCost {
    /// Zero-based shot index.
    pub shot: u32,
    pub high_res: bool,
    pub effective_images: u64,
    pub image_tokens: u64,
}

pub fn fewshot_token_budget(budget: &FewShotBudget) -> Result<BudgetTotals, VisGeomError> {
    let rows = fewshot_token_table(budget)?;
    Ok(BudgetTotals {
        effective_images: rows.iter().map(|r| r.effective_images).sum(),
        image_tokens: rows.iter().map(|r| r.image_tokens).sum(),
    })
}

/// Per-shot breakdown behind [`fewshot_token_budget`].
pub fn fewshot_token_table(budget: &FewShotBudget) -> Result<Vec<ShotCost>, VisGeomError> {
    if budget.hires_last > budget.shots {
        return Err(VisGeomError::InvalidArgument(format!(
            "hires_last {} exceeds shots {}",
            budget.hires_last, budget.shots
        )));
    }
    let per = budget.images_per_example as u64;
    let first_hi = budget.shots - budget.hires_last;
    Ok((0..budget.shots)
        .map(|shot| {
            let high_res = shot >= first_hi;
            ShotCost {
                shot,
                high_res,
                effective_images: if high_res { per * CROPS_PER_IMAGE } else { per },
                image_tokens: per * if high_res { budget.hi_tokens } else { budget.lo_tokens } as u64,
            }
        })
        .collect())
}
