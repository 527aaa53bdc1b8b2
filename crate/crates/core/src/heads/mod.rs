//! Training loss kernels with analytic gradients, and the BEV head decoder.
//!
//! Every kernel returns its value together with the gradient with respect
//! to the prediction it consumes, laid out like that prediction.

pub mod bevout;
pub mod decode;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::labelgen::BevTargets;

pub use bevout::{read_bevout, write_bevout, BEVOUT_MAGIC};
pub use decode::{decode_bev, DecodeParams};

/// Probability clamp applied before taking logarithms.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("no foreground elements")]
    NoForeground,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("instance IDs must be contiguous 1..C, got {0:?}")]
    NonContiguousInstances(Vec<u32>),
    #[error("foreground cell {0} has no target value")]
    MissingTarget(usize),
    #[error("invalid loss parameters: {0}")]
    InvalidParams(String),
    #[error("head output: {0}")]
    InvalidHeadOutput(String),
}

/// Margins and weights of the 2D and 3D head losses.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossParams {
    pub delta_pull: f64,
    pub delta_push: f64,
    pub lambda_2d_pull: f64,
    pub lambda_2d_push: f64,
    pub lambda_2d_seg: f64,
    pub lambda_3d_pull: f64,
    pub lambda_3d_push: f64,
    pub lambda_3d_seg: f64,
    pub lambda_3d_offset: f64,
    pub lambda_3d_height: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            delta_pull: 0.5,
            delta_push: 3.0,
            lambda_2d_pull: 1.0,
            lambda_2d_push: 1.0,
            lambda_2d_seg: 2.0,
            lambda_3d_pull: 1.0,
            lambda_3d_push: 1.0,
            lambda_3d_seg: 2.0,
            lambda_3d_offset: 1.0,
            lambda_3d_height: 1.0,
        }
    }
}

/// Default embedding dimension of the head outputs.
pub const DEFAULT_EMBED_DIM: usize = 4;

impl LossParams {
    pub fn validate(&self) -> Result<(), LossError> {
        let all = [
            self.delta_pull,
            self.delta_push,
            self.lambda_2d_pull,
            self.lambda_2d_push,
            self.lambda_2d_seg,
            self.lambda_3d_pull,
            self.lambda_3d_push,
            self.lambda_3d_seg,
            self.lambda_3d_offset,
            self.lambda_3d_height,
        ];
        if !all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(LossError::InvalidParams("all margins and weights must be finite and non-negative".into()));
        }
        if self.delta_push <= 2.0 * self.delta_pull {
            return Err(LossError::InvalidParams(format!(
                "delta_push ({}) must exceed 2 * delta_pull ({})",
                self.delta_push, self.delta_pull
            )));
        }
        Ok(())
    }
}

/// Embedding vectors (row-major, `dim` per element) with instance IDs.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingField {
    dim: usize,
    values: Vec<f64>,
    instance: Vec<u32>,
    n_instances: usize,
}

impl EmbeddingField {
    /// IDs must be `0` (background) or form the contiguous range `1..=C`.
    pub fn new(dim: usize, values: Vec<f64>, instance: Vec<u32>) -> Result<Self, LossError> {
        if dim == 0 || values.len() != dim * instance.len() {
            return Err(LossError::ShapeMismatch(format!(
                "{} values for {} elements of dimension {dim}",
                values.len(),
                instance.len()
            )));
        }
        let mut ids: Vec<u32> = instance.iter().copied().filter(|i| *i != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.iter().enumerate().any(|(k, id)| *id as usize != k + 1) {
            return Err(LossError::NonContiguousInstances(ids));
        }
        Ok(Self {
            dim,
            values,
            instance,
            n_instances: ids.len(),
        })
    }

    /// Renumbers arbitrary nonzero IDs to `1..=C` in increasing order.
    pub fn from_sparse_ids(dim: usize, values: Vec<f64>, instance: &[u32]) -> Result<Self, LossError> {
        let mut remap: BTreeMap<u32, u32> = instance.iter().filter(|i| **i != 0).map(|i| (*i, 0)).collect();
        for (k, v) in remap.values_mut().enumerate() {
            *v = k as u32 + 1;
        }
        let dense = instance
            .iter()
            .map(|i| if *i == 0 { 0 } else { remap[i] })
            .collect();
        Self::new(dim, values, dense)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.instance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instance.is_empty()
    }

    pub fn n_instances(&self) -> usize {
        self.n_instances
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn instance(&self) -> &[u32] {
        &self.instance
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Per-instance element counts and mean embeddings, indexed by `id - 1`.
    fn cluster_means(&self) -> (Vec<usize>, Vec<Vec<f64>>) {
        let mut counts = vec![0usize; self.n_instances];
        let mut means = vec![vec![0.0; self.dim]; self.n_instances];
        for (i, &id) in self.instance.iter().enumerate() {
            if id == 0 {
                continue;
            }
            let c = id as usize - 1;
            counts[c] += 1;
            for (m, x) in means[c].iter_mut().zip(self.embedding(i)) {
                *m += x;
            }
        }
        for (mean, n) in means.iter_mut().zip(&counts) {
            for m in mean.iter_mut() {
                *m /= *n as f64;
            }
        }
        (counts, means)
    }
}

/// A scalar loss and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Hinged pull of every instance's embeddings toward the instance mean:
/// `(1/C) Σ_c (1/N_c) Σ_i max(0, ‖μ_c − x_i‖ − δ_pull)²`.
pub fn pull_loss(field: &EmbeddingField, delta_pull: f64) -> Result<LossValue, LossError> {
    let c_total = field.n_instances;
    if c_total == 0 {
        return Err(LossError::NoForeground);
    }
    let dim = field.dim;
    let (counts, means) = field.cluster_means();
    let mut value = 0.0;
    // Per instance: Σ_i h_i u_i with u_i the unit vector from x_i to μ_c.
    let mut pulled = vec![vec![0.0; dim]; c_total];
    let mut own = vec![0.0; field.values.len()];
    for (i, &id) in field.instance.iter().enumerate() {
        if id == 0 {
            continue;
        }
        let c = id as usize - 1;
        let x = field.embedding(i);
        let d = dist(&means[c], x);
        let h = d - delta_pull;
        if h <= 0.0 || d == 0.0 {
            continue;
        }
        value += h * h / (c_total as f64 * counts[c] as f64);
        for k in 0..dim {
            let u = (means[c][k] - x[k]) / d;
            pulled[c][k] += h * u;
            own[i * dim + k] = h * u;
        }
    }
    let mut grad = vec![0.0; field.values.len()];
    for (i, &id) in field.instance.iter().enumerate() {
        if id == 0 {
            continue;
        }
        let c = id as usize - 1;
        let n = counts[c] as f64;
        let scale = 2.0 / (c_total as f64 * n);
        for k in 0..dim {
            grad[i * dim + k] = scale * (pulled[c][k] / n - own[i * dim + k]);
        }
    }
    Ok(LossValue { value, grad })
}

/// Hinged push between instance means over ordered pairs:
/// `1/(C(C−1)) Σ_{A≠B} max(0, δ_push − ‖μ_A − μ_B‖)²`; zero when `C < 2`.
pub fn push_loss(field: &EmbeddingField, delta_push: f64) -> LossValue {
    let c_total = field.n_instances;
    let dim = field.dim;
    let mut grad = vec![0.0; field.values.len()];
    if c_total < 2 {
        return LossValue { value: 0.0, grad };
    }
    let (counts, means) = field.cluster_means();
    let norm = 1.0 / (c_total as f64 * (c_total as f64 - 1.0));
    let mut value = 0.0;
    let mut mean_grad = vec![vec![0.0; dim]; c_total];
    for a in 0..c_total {
        for b in (a + 1)..c_total {
            let d = dist(&means[a], &means[b]);
            let g = delta_push - d;
            if g <= 0.0 {
                continue;
            }
            // Both ordered pairs (a, b) and (b, a).
            value += 2.0 * norm * g * g;
            if d == 0.0 {
                continue;
            }
            for k in 0..dim {
                let u = (means[a][k] - means[b][k]) / d;
                mean_grad[a][k] -= 4.0 * norm * g * u;
                mean_grad[b][k] += 4.0 * norm * g * u;
            }
        }
    }
    for (i, &id) in field.instance.iter().enumerate() {
        if id == 0 {
            continue;
        }
        let c = id as usize - 1;
        for k in 0..dim {
            grad[i * dim + k] = mean_grad[c][k] / counts[c] as f64;
        }
    }
    LossValue { value, grad }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    TwoD,
    ThreeD,
}

impl LossParams {
    fn embed_weights(&self, head: Head) -> (f64, f64) {
        match head {
            Head::TwoD => (self.lambda_2d_pull, self.lambda_2d_push),
            Head::ThreeD => (self.lambda_3d_pull, self.lambda_3d_push),
        }
    }
}

/// `λ_pull · L_pull + λ_push · L_push` for the given head's weights.
pub fn embed_loss(field: &EmbeddingField, params: &LossParams, head: Head) -> Result<LossValue, LossError> {
    let (w_pull, w_push) = params.embed_weights(head);
    let pull = pull_loss(field, params.delta_pull)?;
    let push = push_loss(field, params.delta_push);
    Ok(LossValue {
        value: w_pull * pull.value + w_push * push.value,
        grad: pull
            .grad
            .iter()
            .zip(&push.grad)
            .map(|(a, b)| w_pull * a + w_push * b)
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BceValue {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Set when one class is absent and the unweighted loss was used instead.
    pub degenerate: bool,
}

/// Mean binary cross-entropy with inverse class-frequency weights
/// `w_fg = N / (2 N_fg)`, `w_bg = N / (2 N_bg)`.
pub fn weighted_bce(conf: &[f64], gt: &[u8]) -> Result<BceValue, LossError> {
    if conf.len() != gt.len() {
        return Err(LossError::ShapeMismatch(format!(
            "{} confidences for {} labels",
            conf.len(),
            gt.len()
        )));
    }
    if conf.is_empty() {
        return Err(LossError::ShapeMismatch("empty confidence map".into()));
    }
    let n = conf.len() as f64;
    let n_fg = gt.iter().filter(|g| **g != 0).count() as f64;
    let n_bg = n - n_fg;
    let degenerate = n_fg == 0.0 || n_bg == 0.0;
    let (w_fg, w_bg) = if degenerate {
        (1.0, 1.0)
    } else {
        (n / (2.0 * n_fg), n / (2.0 * n_bg))
    };
    let mut value = 0.0;
    let mut grad = vec![0.0; conf.len()];
    for (i, (&p_raw, &g)) in conf.iter().zip(gt).enumerate() {
        let p = p_raw.clamp(BCE_EPS, 1.0 - BCE_EPS);
        let clamped = p != p_raw;
        if g != 0 {
            value += w_fg * -p.ln();
            if !clamped {
                grad[i] = -w_fg / (p * n);
            }
        } else {
            value += w_bg * -(1.0 - p).ln();
            if !clamped {
                grad[i] = w_bg / ((1.0 - p) * n);
            }
        }
    }
    Ok(BceValue {
        value: value / n,
        grad,
        degenerate,
    })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn check_masked(pred: usize, gt: usize, seg: usize) -> Result<(), LossError> {
    if pred != gt || pred != seg {
        return Err(LossError::ShapeMismatch(format!(
            "prediction {pred}, target {gt}, mask {seg}"
        )));
    }
    Ok(())
}

/// `Σ 1[seg] (σ(Δx̂) − Δx)²` over foreground cells; gradient w.r.t. the logits.
pub fn offset_loss(logits: &[f64], gt: &[Option<f64>], seg: &[u8]) -> Result<LossValue, LossError> {
    check_masked(logits.len(), gt.len(), seg.len())?;
    let mut value = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for i in 0..logits.len() {
        if seg[i] == 0 {
            continue;
        }
        let target = gt[i].ok_or(LossError::MissingTarget(i))?;
        let s = sigmoid(logits[i]);
        let r = s - target;
        value += r * r;
        grad[i] = 2.0 * r * s * (1.0 - s);
    }
    Ok(LossValue { value, grad })
}

/// `Σ 1[seg] (ĥ − h)²` over foreground cells.
pub fn height_loss(height: &[f64], gt: &[Option<f64>], seg: &[u8]) -> Result<LossValue, LossError> {
    check_masked(height.len(), gt.len(), seg.len())?;
    let mut value = 0.0;
    let mut grad = vec![0.0; height.len()];
    for i in 0..height.len() {
        if seg[i] == 0 {
            continue;
        }
        let target = gt[i].ok_or(LossError::MissingTarget(i))?;
        let r = height[i] - target;
        value += r * r;
        grad[i] = 2.0 * r;
    }
    Ok(LossValue { value, grad })
}

/// Component values of a head loss and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub pull: f64,
    pub push: f64,
    pub seg: f64,
    pub offset: f64,
    pub height: f64,
    pub total: f64,
}

/// `λ_pull L_pull + λ_push L_push + λ_seg L_seg` for the image-plane head.
pub fn total_2d_loss(
    conf: &[f64],
    gt_mask: &[u8],
    field: &EmbeddingField,
    params: &LossParams,
) -> Result<LossBreakdown, LossError> {
    let pull = pull_loss(field, params.delta_pull)?.value;
    let push = push_loss(field, params.delta_push).value;
    let seg = weighted_bce(conf, gt_mask)?.value;
    Ok(LossBreakdown {
        pull,
        push,
        seg,
        offset: 0.0,
        height: 0.0,
        total: params.lambda_2d_pull * pull + params.lambda_2d_push * push + params.lambda_2d_seg * seg,
    })
}

/// Raw outputs of the BEV head over an `s1 × s2` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub s1: usize,
    pub s2: usize,
    pub embed_dim: usize,
    pub conf: Vec<f64>,
    /// `embed_dim` values per cell, cell-major.
    pub embed: Vec<f64>,
    pub x_offset_logits: Vec<f64>,
    pub height: Vec<f64>,
}

impl HeadOutput {
    pub fn validate(&self) -> Result<(), LossError> {
        let n = self.s1 * self.s2;
        let bad = |m: String| Err(LossError::InvalidHeadOutput(m));
        if self.embed_dim == 0 {
            return bad("embedding dimension must be positive".into());
        }
        if self.conf.len() != n
            || self.x_offset_logits.len() != n
            || self.height.len() != n
            || self.embed.len() != n * self.embed_dim
        {
            return bad(format!("plane sizes do not match a {}x{} grid", self.s1, self.s2));
        }
        if let Some(i) = self.conf.iter().position(|c| !(0.0..=1.0).contains(c)) {
            return bad(format!("confidence {} at cell {i} outside [0, 1]", self.conf[i]));
        }
        Ok(())
    }

    /// A perfect prediction of `targets`: confidence equals the mask, logits
    /// invert the offsets, and instance `k` gets embedding `k · spread · e_0`.
    pub fn from_targets(targets: &BevTargets, embed_dim: usize, spread: f64) -> Self {
        let n = targets.seg.len();
        let mut embed = vec![0.0; n * embed_dim];
        for (i, &inst) in targets.instance.iter().enumerate() {
            embed[i * embed_dim] = inst as f64 * spread;
        }
        let clamp = 1e-12;
        Self {
            s1: targets.spec.s1(),
            s2: targets.spec.s2(),
            embed_dim,
            conf: targets.seg.iter().map(|s| f64::from(*s)).collect(),
            embed,
            x_offset_logits: targets
                .x_offset
                .iter()
                .map(|o| o.map_or(0.0, |dx| logit(dx.clamp(clamp, 1.0 - clamp))))
                .collect(),
            height: targets.height.iter().map(|h| h.unwrap_or(0.0)).collect(),
        }
    }

    pub fn embedding_field(&self, instance: &[u32]) -> Result<EmbeddingField, LossError> {
        EmbeddingField::from_sparse_ids(self.embed_dim, self.embed.clone(), instance)
    }
}

/// Embedding, segmentation, offset and height terms of the BEV head.
pub fn total_3d_loss(out: &HeadOutput, targets: &BevTargets, params: &LossParams) -> Result<LossBreakdown, LossError> {
    out.validate()?;
    if out.s1 != targets.spec.s1() || out.s2 != targets.spec.s2() {
        return Err(LossError::ShapeMismatch(format!(
            "head output {}x{} vs targets {}x{}",
            out.s1,
            out.s2,
            targets.spec.s1(),
            targets.spec.s2()
        )));
    }
    let field = out.embedding_field(&targets.instance)?;
    let pull = pull_loss(&field, params.delta_pull)?.value;
    let push = push_loss(&field, params.delta_push).value;
    let seg = weighted_bce(&out.conf, &targets.seg)?.value;
    let offset = offset_loss(&out.x_offset_logits, &targets.x_offset, &targets.seg)?.value;
    let height = height_loss(&out.height, &targets.height, &targets.seg)?.value;
    Ok(LossBreakdown {
        pull,
        push,
        seg,
        offset,
        height,
        total: params.lambda_3d_pull * pull
            + params.lambda_3d_push * push
            + params.lambda_3d_seg * seg
            + params.lambda_3d_offset * offset
            + params.lambda_3d_height * height,
    })
}
