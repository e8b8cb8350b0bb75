//! Mixture-of-experts router math.
//!
//! Routing follows the GShard / ST-MoE conventions: a full softmax over
//! experts per token, top-k selection with ties going to the lower expert
//! index, and combine weights renormalized over the selected experts.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MoeError {
    #[error("router logits contain NaN or infinity")]
    NonFinite,
    #[error("top_k {top_k} must be in [1, {experts}]")]
    InvalidTopK { top_k: usize, experts: usize },
    #[error("router logits must have at least one token and one expert")]
    Empty,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoeConfig {
    pub num_experts: usize,
    pub top_k: usize,
    pub every_n_layers: usize,
    pub lb_coeff: f64,
    pub z_coeff: f64,
}

impl Default for MoeConfig {
    fn default() -> Self {
        Self {
            num_experts: 64,
            top_k: 2,
            every_n_layers: 2,
            lb_coeff: 0.01,
            z_coeff: 0.001,
        }
    }
}

impl MoeConfig {
    pub fn validate(&self) -> Result<(), MoeError> {
        if self.top_k == 0 || self.top_k > self.num_experts {
            return Err(MoeError::InvalidTopK {
                top_k: self.top_k,
                experts: self.num_experts,
            });
        }
        if self.every_n_layers == 0 {
            return Err(MoeError::InvalidConfig("every_n_layers must be >= 1".into()));
        }
        Ok(())
    }
}

/// Selected experts for one token, best first, with combine weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRoute {
    pub experts: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterOutput {
    pub routes: Vec<TokenRoute>,
    /// Fraction of the `k * T` assignments sent to each expert.
    pub dispatch_fraction: Vec<f64>,
    /// Mean gate probability of each expert over tokens.
    pub mean_prob: Vec<f64>,
}

impl RouterOutput {
    pub fn num_experts(&self) -> usize {
        self.mean_prob.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxLoss {
    pub raw: f64,
    pub scaled: f64,
}

fn logsumexp(row: ArrayView1<f64>) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

fn softmax(row: ArrayView1<f64>) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn check_logits(logits: &Array2<f64>) -> Result<(), MoeError> {
    if logits.nrows() == 0 || logits.ncols() == 0 {
        return Err(MoeError::Empty);
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(MoeError::NonFinite);
    }
    Ok(())
}

/// Route a `T x E` logit matrix to the top `k` experts per token.
pub fn route_topk(logits: &Array2<f64>, k: usize) -> Result<RouterOutput, MoeError> {
    check_logits(logits)?;
    let (tokens, experts) = logits.dim();
    if k == 0 || k > experts {
        return Err(MoeError::InvalidTopK { top_k: k, experts });
    }
    let mut assigned = vec![0usize; experts];
    let mut prob_sum = vec![0.0; experts];
    let mut routes = Vec::with_capacity(tokens);
    for row in logits.rows() {
        let p = softmax(row);
        for (acc, &pi) in prob_sum.iter_mut().zip(&p) {
            *acc += pi;
        }
        let mut order: Vec<usize> = (0..experts).collect();
        // Stable sort keeps lower indices first among equal probabilities.
        order.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
        order.truncate(k);
        let selected: f64 = order.iter().map(|&e| p[e]).sum();
        let weights = order.iter().map(|&e| p[e] / selected).collect();
        for &e in &order {
            assigned[e] += 1;
        }
        routes.push(TokenRoute { experts: order, weights });
    }
    let total = (k * tokens) as f64;
    Ok(RouterOutput {
        routes,
        dispatch_fraction: assigned.iter().map(|&c| c as f64 / total).collect(),
        mean_prob: prob_sum.iter().map(|&s| s / tokens as f64).collect(),
    })
}

/// `E * sum_i f_i * P_i`; equals 1 under perfectly uniform routing.
pub fn load_balance_loss(out: &RouterOutput, coeff: f64) -> AuxLoss {
    let e = out.num_experts() as f64;
    let raw = e * out
        .dispatch_fraction
        .iter()
        .zip(&out.mean_prob)
        .map(|(f, p)| f * p)
        .sum::<f64>();
    AuxLoss { raw, scaled: coeff * raw }
}

/// Mean over tokens of `logsumexp(logits_t)^2`.
pub fn router_z_loss(logits: &Array2<f64>, coeff: f64) -> Result<AuxLoss, MoeError> {
    check_logits(logits)?;
    let raw = logits.rows().into_iter().map(|r| logsumexp(r).powi(2)).sum::<f64>() / logits.nrows() as f64;
    Ok(AuxLoss { raw, scaled: coeff * raw })
}

/// Zero-based indices of converted layers: the last layer of every full
/// group of `every_n`.
pub fn plan_layers(num_layers: usize, every_n: usize) -> Vec<usize> {
    if every_n == 0 {
        return Vec::new();
    }
    (0..num_layers).filter(|i| i % every_n == every_n - 1).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderDims {
    pub d_model: u64,
    pub d_ff: u64,
    pub num_layers: usize,
    pub attn_params_per_layer: u64,
    pub embed_params: u64,
    pub ffn_bias: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerParams {
    pub index: usize,
    pub attn: u64,
    /// FFN parameters summed over experts (one expert for dense layers).
    pub ffn: u64,
    pub experts: u64,
    pub gate: u64,
}

impl LayerParams {
    pub fn total(&self) -> u64 {
        self.attn + self.ffn + self.gate
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub dense_total: u64,
    pub moe_total: u64,
    pub ffn_per_layer: u64,
    pub converted_layers: Vec<usize>,
    pub layers: Vec<LayerParams>,
}

pub fn estimate_params(dims: &DecoderDims, cfg: &MoeConfig) -> Result<ParamEstimate, MoeError> {
    cfg.validate()?;
    if dims.d_model == 0 || dims.d_ff == 0 || dims.num_layers == 0 {
        return Err(MoeError::InvalidConfig("decoder dims must be positive".into()));
    }
    let mut ffn = 2 * dims.d_model * dims.d_ff;
    if dims.ffn_bias {
        ffn += dims.d_ff + dims.d_model;
    }
    let converted = plan_layers(dims.num_layers, cfg.every_n_layers);
    let experts = cfg.num_experts as u64;
    let layers: Vec<LayerParams> = (0..dims.num_layers)
        .map(|index| {
            let moe = converted.binary_search(&index).is_ok();
            LayerParams {
                index,
                attn: dims.attn_params_per_layer,
                ffn: if moe { experts * ffn } else { ffn },
                experts: if moe { experts } else { 1 },
                gate: if moe { experts * dims.d_model } else { 0 },
            }
        })
        .collect();
    let dense_total = dims.embed_params + dims.num_layers as u64 * (dims.attn_params_per_layer + ffn);
    let moe_total = dims.embed_params + layers.iter().map(LayerParams::total).sum::<u64>();
    Ok(ParamEstimate {
        dense_total,
        moe_total,
        ffn_per_layer: ffn,
        converted_layers: converted,
        layers,
    })
}

/// Parse a whitespace/comma separated numeric matrix, one row per line.
pub fn parse_matrix(text: &str) -> Result<Array2<f64>, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| format!("line {}: {s:?}: {e}", i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format!("line {}: expected {} columns, found {}", i + 1, first.len(), row.len()));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn top2_of_descending_logits() {
        let out = route_topk(&array![[2.0, 1.0, 0.0, -1.0]], 2).unwrap();
        assert_eq!(out.routes[0].experts, vec![0, 1]);
        // Renormalized pair is sigmoid(1).
        let s1 = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((out.routes[0].weights[0] - s1).abs() < 1e-12);
        assert!((out.routes[0].weights[0] - 0.7311).abs() < 5e-5);
        assert!((out.routes[0].weights[1] - 0.2689).abs() < 5e-5);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let out = route_topk(&array![[0.5, 0.5, 0.5, 0.5]], 2).unwrap();
        assert_eq!(out.routes[0].experts, vec![0, 1]);
        assert_eq!(out.routes[0].weights, vec![0.5, 0.5]);
        let out = route_topk(&array![[0.0, 1.0, 0.0, 1.0]], 2).unwrap();
        assert_eq!(out.routes[0].experts, vec![1, 3]);
    }

    #[test]
    fn k_equals_e_gives_full_softmax() {
        let logits = array![[0.3, -1.2, 2.0]];
        let out = route_topk(&logits, 3).unwrap();
        let p = softmax(logits.row(0));
        for (&e, &w) in out.routes[0].experts.iter().zip(&out.routes[0].weights) {
            assert!((w - p[e]).abs() < 1e-12);
        }
    }

    #[test]
    fn balanced_case_loss_is_one() {
        let out = route_topk(&array![[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]], 2).unwrap();
        for i in 0..4 {
            assert!((out.dispatch_fraction[i] - 0.25).abs() < 1e-15);
            assert!((out.mean_prob[i] - 0.25).abs() < 1e-15);
        }
        let lb = load_balance_loss(&out, 0.01);
        assert!((lb.raw - 1.0).abs() < 1e-9);
        assert!((lb.scaled - 0.01).abs() < 1e-11);
    }

    #[test]
    fn concentrated_routing_exceeds_one() {
        let logits = Array2::from_shape_fn((4, 4), |(_, e)| if e < 2 { 3.0 } else { 0.0 });
        let out = route_topk(&logits, 2).unwrap();
        assert_eq!(out.dispatch_fraction, vec![0.5, 0.5, 0.0, 0.0]);
        // P_0 = P_1 = e^3 / (2e^3 + 2); raw = 4 * (0.5 P_0 + 0.5 P_1) = 4 P_0.
        let p0 = 3f64.exp() / (2.0 * 3f64.exp() + 2.0);
        let raw = load_balance_loss(&out, 0.01).raw;
        assert!((raw - 4.0 * p0).abs() < 1e-12);
        assert!(raw > 1.0);
    }

    #[test]
    fn z_loss_values() {
        let z = router_z_loss(&Array2::zeros((3, 4)), 0.001).unwrap();
        assert!((z.raw - 4f64.ln().powi(2)).abs() < 1e-12);
        assert!((z.raw - 1.9218).abs() < 1e-4);
        let z = router_z_loss(&array![[10.0, -10.0]], 0.001).unwrap();
        assert!((z.raw - 100.0).abs() < 1e-6);
        let shifted = router_z_loss(&array![[12.0, -8.0]], 0.001).unwrap();
        let lse = 10.0 + (1.0 + (-20f64).exp()).ln();
        assert!((shifted.raw - (lse + 2.0).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        assert_eq!(route_topk(&array![[f64::NAN, 0.0]], 1), Err(MoeError::NonFinite));
        assert_eq!(router_z_loss(&array![[f64::INFINITY]], 1.0), Err(MoeError::NonFinite));
        assert_eq!(
            route_topk(&array![[0.0, 0.0]], 3),
            Err(MoeError::InvalidTopK { top_k: 3, experts: 2 })
        );
        assert_eq!(route_topk(&Array2::zeros((0, 4)), 2), Err(MoeError::Empty));
    }

    #[test]
    fn layer_plans() {
        assert_eq!(plan_layers(8, 2), vec![1, 3, 5, 7]);
        assert_eq!(plan_layers(8, 4), vec![3, 7]);
        assert_eq!(plan_layers(3, 4), Vec::<usize>::new());
        assert_eq!(plan_layers(3, 1), vec![0, 1, 2]);
    }

    fn small_dims() -> DecoderDims {
        DecoderDims {
            d_model: 10,
            d_ff: 5,
            num_layers: 4,
            attn_params_per_layer: 50,
            embed_params: 0,
            ffn_bias: false,
        }
    }

    #[test]
    fn param_estimate_example() {
        let cfg = MoeConfig {
            num_experts: 4,
            every_n_layers: 2,
            ..MoeConfig::default()
        };
        let est = estimate_params(&small_dims(), &cfg).unwrap();
        assert_eq!(est.ffn_per_layer, 100);
        assert_eq!(est.dense_total, 600);
        assert_eq!(est.converted_layers, vec![1, 3]);
        assert_eq!(est.moe_total, 1280);
        assert_eq!(est.layers[1].gate, 40);
        assert_eq!(est.layers[0].ffn, 100);
    }

    #[test]
    fn single_expert_adds_only_gates() {
        let cfg = MoeConfig {
            num_experts: 1,
            top_k: 1,
            ..MoeConfig::default()
        };
        let est = estimate_params(&small_dims(), &cfg).unwrap();
        assert_eq!(est.moe_total, est.dense_total + 2 * 10);
        let mut dims = small_dims();
        dims.ffn_bias = true;
        assert_eq!(estimate_params(&dims, &cfg).unwrap().ffn_per_layer, 115);
    }

    #[test]
    fn moe_total_grows_with_experts() {
        let mut prev = 0;
        for e in 2..10 {
            let cfg = MoeConfig {
                num_experts: e,
                ..MoeConfig::default()
            };
            let t = estimate_params(&small_dims(), &cfg).unwrap().moe_total;
            assert!(t > prev);
            prev = t;
        }
    }

    #[test]
    fn matrix_parsing() {
        let m = parse_matrix("1 2 3\n# c\n4,5,6\n").unwrap();
        assert_eq!(m, array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert!(parse_matrix("1 2\n3").is_err());
        assert!(parse_matrix("1 x").is_err());
    }

    proptest! {
        #[test]
        fn routing_invariants(vals in prop::collection::vec(-20.0f64..20.0, 6 * 5), k in 1usize..=6, shift in -50.0f64..50.0) {
            let logits = Array2::from_shape_vec((5, 6), vals).unwrap();
            let out = route_topk(&logits, k).unwrap();
            for r in &out.routes {
                prop_assert_eq!(r.experts.len(), k);
                prop_assert!(r.weights.iter().all(|&w| w > 0.0));
                prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            prop_assert!((out.dispatch_fraction.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!((out.mean_prob.iter().sum::<f64>() - 1.0).abs() < 1e-9);

            let mut moved = logits.clone();
            moved.row_mut(2).mapv_inplace(|x| x + shift);
            let shifted = route_topk(&moved, k).unwrap();
            prop_assert_eq!(&shifted.routes[2].experts, &out.routes[2].experts);
            for (a, b) in shifted.routes[2].weights.iter().zip(&out.routes[2].weights) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn lb_loss_permutation_invariant(vals in prop::collection::vec(-5.0f64..5.0, 4 * 3), rot in 0usize..4) {
            let logits = Array2::from_shape_vec((3, 4), vals).unwrap();
            let out = route_topk(&logits, 2).unwrap();
            let mut perm = out.clone();
            perm.dispatch_fraction.rotate_left(rot);
            perm.mean_prob.rotate_left(rot);
            prop_assert!((load_balance_loss(&out, 0.01).raw - load_balance_loss(&perm, 0.01).raw).abs() < 1e-12);
        }
    }
}
