//! Vision-language connectors: map a patch-feature grid to a fixed number
//! of token vectors.

use ndarray::{Array1, Array2, Array3, Axis};

use super::{FeatureGrid, VisGeomError};

/// Dense layer `y = x W + b` with `W` of shape `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

impl Linear {
    pub fn identity(dim: usize) -> Self {
        Self {
            weight: Array2::eye(dim),
            bias: None,
        }
    }

    fn check(&self, input_dim: usize, what: &str) -> Result<(), VisGeomError> {
        if self.weight.nrows() != input_dim {
            return Err(VisGeomError::ShapeMismatch(format!(
                "{what}: weight has {} rows, input has {input_dim} features",
                self.weight.nrows()
            )));
        }
        if let Some(b) = &self.bias {
            if b.len() != self.weight.ncols() {
                return Err(VisGeomError::ShapeMismatch(format!(
                    "{what}: bias length {} != output dim {}",
                    b.len(),
                    self.weight.ncols()
                )));
            }
        }
        Ok(())
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight);
        if let Some(b) = &self.bias {
            y += b;
        }
        y
    }
}

/// Adaptive pooling windows: `[floor(i*n/m), floor((i+1)*n/m))`, widened to
/// one cell when upsampling would leave a window empty.
pub fn adaptive_windows(input: usize, output: usize) -> Vec<(usize, usize)> {
    (0..output)
        .map(|i| {
            let start = i * input / output;
            let end = ((i + 1) * input / output).max(start + 1).min(input);
            (start.min(input - 1), end)
        })
        .collect()
}

fn pool(values: &Array3<f64>, out_side: usize) -> Array2<f64> {
    let (h, w, c) = values.dim();
    let rows = adaptive_windows(h, out_side);
    let cols = adaptive_windows(w, out_side);
    let mut out = Array2::zeros((out_side * out_side, c));
    for (oi, &(r0, r1)) in rows.iter().enumerate() {
        for (oj, &(c0, c1)) in cols.iter().enumerate() {
            let window = values.slice(ndarray::s![r0..r1, c0..c1, ..]);
            let count = ((r1 - r0) * (c1 - c0)) as f64;
            let sum = window.sum_axis(Axis(0)).sum_axis(Axis(0));
            out.row_mut(oi * out_side + oj).assign(&(sum / count));
        }
    }
    out
}

fn check_grid(features: &FeatureGrid) -> Result<(), VisGeomError> {
    let (h, w) = features.dims();
    if h == 0 || w == 0 || features.channels() == 0 {
        return Err(VisGeomError::ShapeMismatch("feature grid is empty".into()));
    }
    Ok(())
}

/// Adaptive average pooling to `out_side x out_side` tokens (row-major),
/// followed by `projection` when given.
pub fn avg_pool_connect(
    features: &FeatureGrid,
    out_side: usize,
    projection: Option<&Linear>,
) -> Result<Array2<f64>, VisGeomError> {
    check_grid(features)?;
    if out_side == 0 {
        return Err(VisGeomError::InvalidArgument("out_side must be >= 1".into()));
    }
    let pooled = pool(&features.values, out_side);
    match projection {
        Some(p) => {
            p.check(features.channels(), "projection")?;
            Ok(p.apply(&pooled))
        }
        None => Ok(pooled),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnPoolWeights {
    /// `k x d` learned queries.
    pub queries: Array2<f64>,
    /// `channels x d`.
    pub key: Array2<f64>,
    /// `channels x d_v`.
    pub value: Array2<f64>,
    /// `d_v x d_out`.
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnPoolOutput {
    /// `k x d_out`.
    pub tokens: Array2<f64>,
    /// `k x (h*w)` softmax weights; rows sum to 1.
    pub attention: Array2<f64>,
}

/// Single-head cross-attention from `k` learned queries to the flattened
/// feature grid: `softmax(Q K^T / sqrt(d)) V W_o`.
pub fn attn_pool_connect(features: &FeatureGrid, weights: &AttnPoolWeights) -> Result<AttnPoolOutput, VisGeomError> {
    check_grid(features)?;
    let c = features.channels();
    let d = weights.queries.ncols();
    let mismatch = |m: String| Err(VisGeomError::ShapeMismatch(m));
    if weights.queries.nrows() == 0 || d == 0 {
        return mismatch("need at least one query of positive width".into());
    }
    if weights.key.dim() != (c, d) {
        return mismatch(format!("key weight {:?}, expected ({c}, {d})", weights.key.dim()));
    }
    if weights.value.nrows() != c {
        return mismatch(format!("value weight has {} rows, expected {c}", weights.value.nrows()));
    }
    if weights.output.nrows() != weights.value.ncols() {
        return mismatch(format!(
            "output weight has {} rows, value dim is {}",
            weights.output.nrows(),
            weights.value.ncols()
        ));
    }
    let (h, w) = features.dims();
    let x = features
        .values
        .to_shape((h * w, c))
        .map_err(|e| VisGeomError::ShapeMismatch(e.to_string()))?
        .to_owned();
    let keys = x.dot(&weights.key);
    let values = x.dot(&weights.value);
    let mut scores = weights.queries.dot(&keys.t()) / (d as f64).sqrt();
    for mut row in scores.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    let tokens = scores.dot(&values).dot(&weights.output);
    Ok(AttnPoolOutput {
        tokens,
        attention: scores,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CAbstractorParams {
    /// Per-channel `channels x side x side` kernels, `side` odd.
    pub depthwise: Array3<f64>,
    pub pointwise: Linear,
}

impl CAbstractorParams {
    /// Centered unit kernels and identity projection.
    pub fn identity(channels: usize, side: usize) -> Self {
        let mut depthwise = Array3::zeros((channels, side, side));
        for ch in 0..channels {
            depthwise[[ch, side / 2, side / 2]] = 1.0;
        }
        Self {
            depthwise,
            pointwise: Linear::identity(channels),
        }
    }
}

fn depthwise_conv(values: &Array3<f64>, kernels: &Array3<f64>) -> Array3<f64> {
    let (h, w, c) = values.dim();
    let side = kernels.dim().1;
    let r = (side / 2) as isize;
    Array3::from_shape_fn((h, w, c), |(i, j, ch)| {
        let mut acc = 0.0;
        for ki in 0..side {
            for kj in 0..side {
                let wgt = kernels[[ch, ki, kj]];
                if wgt == 0.0 {
                    continue;
                }
                let si = i as isize + ki as isize - r;
                let sj = j as isize + kj as isize - r;
                if si >= 0 && sj >= 0 && (si as usize) < h && (sj as usize) < w {
                    acc += wgt * values[[si as usize, sj as usize, ch]];
                }
            }
        }
        acc
    })
}

/// Depthwise convolution (zero padding), adaptive average pooling to
/// `out_side x out_side`, then a pointwise projection.
pub fn cabstractor_connect(
    features: &FeatureGrid,
    out_side: usize,
    params: &CAbstractorParams,
) -> Result<Array2<f64>, VisGeomError> {
    check_grid(features)?;
    if out_side == 0 {
        return Err(VisGeomError::InvalidArgument("out_side must be >= 1".into()));
    }
    let (kc, kh, kw) = params.depthwise.dim();
    if kc != features.channels() {
        return Err(VisGeomError::ShapeMismatch(format!(
            "{kc} depthwise kernels for {} channels",
            features.channels()
        )));
    }
    if kh != kw || kh % 2 == 0 {
        return Err(VisGeomError::ShapeMismatch(format!("kernel {kh}x{kw} must be square with odd side")));
    }
    params.pointwise.check(kc, "pointwise")?;
    let conv = depthwise_conv(&features.values, &params.depthwise);
    Ok(params.pointwise.apply(&pool(&conv, out_side)))
}
