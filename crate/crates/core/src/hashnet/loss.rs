//! Training objectives on a mini-batch of `k` samples.
//!
//! All pair sums run over ordered pairs `(i, j)`, self-pairs included, and
//! none of the losses is normalized by the batch size. With
//! `D_ij = (1/b) ||h_i - h_j||^2` on the H1 outputs:
//!
//! * pairwise: `L1 = Σ_ij (D_ij - (1 - cos(w_i, w_j)) / 2)^2`
//! * hinge:    `L2 = Σ_n Σ_{j != n} max(0, margin + w_j·g_n - w_n·g_n)`
//! * quantization: `L3 = -Σ_i (1/b) ||h_i - 0.5||^2`
//! * contrastive: `L4 = Σ_ij S_ij (1-β) D_ij + (1-S_ij) β max(0, margin - D_ij)^2`
//!
//! Each `*_grad` function returns the loss and its derivative with respect
//! to the head output it reads.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

pub const BETA_MIN: f64 = 0.01;
pub const BETA_MAX: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossMode {
    /// `λ1 L1 + λ2 L2 + λ3 L3`, supervised by aggregated tag vectors.
    #[default]
    Wdht,
    /// `λ3 L3 + λ4 L4`, supervised by shared-tag similarity.
    BinaryTag,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Wdht => "wdht",
            LossMode::BinaryTag => "binary_tag",
        })
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "wdht" => Ok(LossMode::Wdht),
            "binary_tag" => Ok(LossMode::BinaryTag),
            other => Err(Error::Param(format!(
                "unknown loss mode {other:?} (expected wdht or binary_tag)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub margin_hinge: f64,
    pub margin_contrastive: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub mode: LossMode,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 10.0,
            lambda3: 1.0,
            lambda4: 1.0,
            margin_hinge: 0.1,
            margin_contrastive: 1.0,
            learning_rate: 0.001,
            momentum: 0.9,
            batch_size: 32,
            epochs: 50,
            seed: 0,
            mode: LossMode::Wdht,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [self.lambda1, self.lambda2, self.lambda3, self.lambda4];
        if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Param("loss weights must be finite and non-negative".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Param("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Param("momentum must be in [0, 1)".into()));
        }
        if !self.margin_hinge.is_finite() || !self.margin_contrastive.is_finite() {
            return Err(Error::Param("margins must be finite".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Param("batch size must be positive".into()));
        }
        let pairwise = match self.mode {
            LossMode::Wdht => self.lambda1 > 0.0,
            LossMode::BinaryTag => self.lambda4 > 0.0,
        };
        if pairwise && self.batch_size < 2 {
            return Err(Error::Param("pairwise losses need a batch size of at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossValues {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub total: f64,
}

impl LossValues {
    pub fn is_finite(&self) -> bool {
        [self.l1, self.l2, self.l3, self.l4, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

impl std::ops::AddAssign for LossValues {
    fn add_assign(&mut self, o: Self) {
        self.l1 += o.l1;
        self.l2 += o.l2;
        self.l3 += o.l3;
        self.l4 += o.l4;
        self.total += o.total;
    }
}

pub fn total_loss(l: &LossValues, hyper: &HyperParams) -> f64 {
    match hyper.mode {
        LossMode::Wdht => hyper.lambda1 * l.l1 + hyper.lambda2 * l.l2 + hyper.lambda3 * l.l3,
        LossMode::BinaryTag => hyper.lambda3 * l.l3 + hyper.lambda4 * l.l4,
    }
}

fn check_rows(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::Shape(format!(
            "{what}: {} rows vs {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    Ok(())
}

/// `D_ij = (1/b) ||h_i - h_j||^2` for every ordered pair.
pub fn pair_distances(h1: ArrayView2<'_, f64>) -> Array2<f64> {
    let (k, b) = h1.dim();
    let inv_b = 1.0 / b as f64;
    let mut d = Array2::zeros((k, k));
    for i in 0..k {
        for j in (i + 1)..k {
            let s: f64 = h1
                .row(i)
                .iter()
                .zip(h1.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            d[[i, j]] = s * inv_b;
            d[[j, i]] = s * inv_b;
        }
    }
    d
}

/// Target distances `(1 - cos(w_i, w_j)) / 2`; the diagonal is exactly 0.
pub fn cosine_targets(w: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let k = w.nrows();
    let norms: Vec<f64> = w.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    if let Some(i) = norms.iter().position(|&n| !(n > 0.0 && n.is_finite())) {
        return Err(Error::Data(format!(
            "tag vector {i} has zero or non-finite norm"
        )));
    }
    let mut t = Array2::zeros((k, k));
    for i in 0..k {
        for j in (i + 1)..k {
            let cos = w.row(i).dot(&w.row(j)) / (norms[i] * norms[j]);
            let v = 0.5 * (1.0 - cos);
            t[[i, j]] = v;
            t[[j, i]] = v;
        }
    }
    Ok(t)
}

/// Gradient of `Σ_ij c_ij D_ij`-style terms: for a symmetric `coef`
/// holding `∂L/∂D_ij`, returns `∂L/∂h_i = (4/b) Σ_j coef_ij (h_i - h_j)`.
fn distance_backprop(h1: ArrayView2<'_, f64>, coef: &Array2<f64>) -> Array2<f64> {
    let b = h1.ncols() as f64;
    let row_sums: Array1<f64> = coef.sum_axis(Axis(1));
    let mut g = &h1 * &row_sums.view().insert_axis(Axis(1));
    g -= &coef.dot(&h1);
    g *= 4.0 / b;
    g
}

pub fn loss_pairwise(h1: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Result<f64> {
    pairwise_grad(h1, w).map(|(l, _)| l)
}

pub fn pairwise_grad(h1: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
    check_rows(h1, w, "pairwise loss")?;
    let d = pair_distances(h1);
    let t = cosine_targets(w)?;
    let r = &d - &t;
    let loss = r.iter().map(|v| v * v).sum();
    let coef = r.mapv(|v| 2.0 * v);
    Ok((loss, distance_backprop(h1, &coef)))
}

pub fn loss_hinge(h2: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>, margin: f64) -> Result<f64> {
    hinge_grad(h2, w, margin).map(|(l, _)| l)
}

pub fn hinge_grad(
    h2: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    margin: f64,
) -> Result<(f64, Array2<f64>)> {
    check_rows(h2, w, "hinge loss")?;
    if h2.ncols() != w.ncols() {
        return Err(Error::Shape(format!(
            "hinge loss: H2 width {} vs tag vector dim {}",
            h2.ncols(),
            w.ncols()
        )));
    }
    let k = h2.nrows();
    // scores[n, j] = w_j · g_n
    let scores = h2.dot(&w.t());
    let mut active = Array2::<f64>::zeros((k, k));
    let mut loss = 0.0;
    for n in 0..k {
        let own = scores[[n, n]];
        for j in 0..k {
            if j == n {
                continue;
            }
            let arg = margin + scores[[n, j]] - own;
            if arg > 0.0 {
                loss += arg;
                active[[n, j]] = 1.0;
            }
        }
    }
    // ∂L/∂g_n = Σ_j active_nj (w_j - w_n)
    let counts = active.sum_axis(Axis(1));
    let mut grad = active.dot(&w);
    grad -= &(&w * &counts.view().insert_axis(Axis(1)));
    Ok((loss, grad))
}

pub fn loss_quantization(h1: ArrayView2<'_, f64>) -> f64 {
    quantization_grad(h1).0
}

pub fn quantization_grad(h1: ArrayView2<'_, f64>) -> (f64, Array2<f64>) {
    let b = h1.ncols() as f64;
    let centered = h1.mapv(|v| v - 0.5);
    let loss = -centered.iter().map(|v| v * v).sum::<f64>() / b;
    (loss, centered * (-2.0 / b))
}

/// Fraction of similar ordered pairs, clamped to `[BETA_MIN, BETA_MAX]`.
pub fn similar_fraction(s: ArrayView2<'_, f64>) -> f64 {
    let k = s.nrows() as f64;
    (s.sum() / (k * k)).clamp(BETA_MIN, BETA_MAX)
}

fn check_similarity(s: ArrayView2<'_, f64>, k: usize) -> Result<()> {
    if s.dim() != (k, k) {
        return Err(Error::Shape(format!(
            "similarity matrix is {:?}, batch has {k} samples",
            s.dim()
        )));
    }
    if s.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Data("similarity matrix must be 0/1".into()));
    }
    if (0..k).any(|i| (0..i).any(|j| s[[i, j]] != s[[j, i]])) {
        return Err(Error::Data("similarity matrix must be symmetric".into()));
    }
    Ok(())
}

/// One `(i, j)` term of the contrastive loss.
pub fn contrastive_term(similar: bool, d: f64, beta: f64, margin: f64) -> f64 {
    if similar {
        (1.0 - beta) * d
    } else {
        let gap = (margin - d).max(0.0);
        beta * gap * gap
    }
}

pub fn loss_contrastive(h1: ArrayView2<'_, f64>, s: ArrayView2<'_, f64>, margin: f64) -> Result<f64> {
    contrastive_grad(h1, s, margin).map(|(l, _)| l)
}

pub fn contrastive_grad(
    h1: ArrayView2<'_, f64>,
    s: ArrayView2<'_, f64>,
    margin: f64,
) -> Result<(f64, Array2<f64>)> {
    let k = h1.nrows();
    check_similarity(s, k)?;
    let beta = similar_fraction(s);
    let d = pair_distances(h1);
    let mut loss = 0.0;
    let mut coef = Array2::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            let dij = d[[i, j]];
            let similar = s[[i, j]] == 1.0;
            loss += contrastive_term(similar, dij, beta, margin);
            coef[[i, j]] = if similar {
                1.0 - beta
            } else {
                -2.0 * beta * (margin - dij).max(0.0)
            };
        }
    }
    Ok((loss, distance_backprop(h1, &coef)))
}
