//! Central-difference gradients, used to verify `backward`.

use ndarray::Array2;

use super::backward::{loss_and_gradient, objective, Batch, Target};
use super::loss::{HyperParams, LossMode};
use super::params::{init_glorot, LayerSizes, NetworkParams};
use crate::error::Result;
use crate::rng::PortableRng;

pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central-difference gradient of the weighted objective, one parameter at
/// a time.
pub fn finite_diff_grad(
    params: &NetworkParams,
    batch: &Batch,
    hyper: &HyperParams,
) -> Result<NetworkParams> {
    let mut probe = params.clone();
    let mut grads = params.zeros_like();
    for t in 0..6 {
        let len = params.tensors()[t].len();
        for e in 0..len {
            let orig = params.tensors()[t][e];
            probe.tensors_mut()[t][e] = orig + FD_STEP;
            let up = objective(&probe, batch, hyper)?.total;
            probe.tensors_mut()[t][e] = orig - FD_STEP;
            let down = objective(&probe, batch, hyper)?.total;
            probe.tensors_mut()[t][e] = orig;
            grads.tensors_mut()[t][e] = (up - down) / (2.0 * FD_STEP);
        }
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub params: usize,
}

/// `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

pub fn compare(analytic: &NetworkParams, numeric: &NetworkParams) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        params: 0,
    };
    for (a, n) in analytic.tensors().iter().zip(numeric.tensors()) {
        for (&x, &y) in a.iter().zip(n) {
            report.max_rel_err = report.max_rel_err.max(relative_error(x, y));
            report.max_abs_err = report.max_abs_err.max((x - y).abs());
            report.params += 1;
        }
    }
    report
}

pub fn check_gradients(
    params: &NetworkParams,
    batch: &Batch,
    hyper: &HyperParams,
) -> Result<GradCheckReport> {
    let analytic = loss_and_gradient(params, batch, hyper)?.grads;
    let numeric = finite_diff_grad(params, batch, hyper)?;
    Ok(compare(&analytic, &numeric))
}

pub const CHECK_SIZES: LayerSizes = LayerSizes {
    input: 8,
    hidden: 6,
    bits: 4,
    embed: 5,
};
pub const CHECK_BATCH: usize = 3;

/// A small random network and batch for gradient checks. Biases are
/// randomized too so every parameter sees a nonzero signal. Margins are
/// drawn so that hinge terms land on both sides of their kinks.
pub fn random_case(seed: u64, mode: LossMode) -> (NetworkParams, Batch, HyperParams) {
    let mut rng = PortableRng::new(seed);
    let mut params = init_glorot(CHECK_SIZES, rng.next_u64()).expect("valid sizes");
    for bias in [&mut params.fc3.bias, &mut params.h1.bias, &mut params.h2.bias] {
        bias.mapv_inplace(|_| 0.3 * rng.normal());
    }
    let k = CHECK_BATCH;
    let features = Array2::from_shape_simple_fn((k, CHECK_SIZES.input), || rng.normal());
    let target = match mode {
        LossMode::Wdht => Target::TagVectors(Array2::from_shape_simple_fn(
            (k, CHECK_SIZES.embed),
            || rng.normal(),
        )),
        LossMode::BinaryTag => {
            let mut s = Array2::eye(k);
            for i in 0..k {
                for j in (i + 1)..k {
                    let v = (rng.next_u64() & 1) as f64;
                    s[[i, j]] = v;
                    s[[j, i]] = v;
                }
            }
            Target::Similarity(s)
        }
    };
    let hyper = HyperParams {
        margin_hinge: rng.next_f64(),
        margin_contrastive: 0.02 + 0.3 * rng.next_f64(),
        mode,
        batch_size: k,
        ..HyperParams::default()
    };
    (params, Batch { features, target }, hyper)
}

/// Loss-weight combinations exercised by the gradient check:
/// `(name, mode, λ1, λ2, λ3, λ4)`.
pub const LOSS_COMBOS: [(&str, LossMode, f64, f64, f64, f64); 6] = [
    ("L1", LossMode::Wdht, 1.0, 0.0, 0.0, 0.0),
    ("L2", LossMode::Wdht, 0.0, 1.0, 0.0, 0.0),
    ("L3", LossMode::Wdht, 0.0, 0.0, 1.0, 0.0),
    ("L1+L2+L3", LossMode::Wdht, 1.0, 10.0, 1.0, 0.0),
    ("L4", LossMode::BinaryTag, 0.0, 0.0, 0.0, 1.0),
    ("L3+L4", LossMode::BinaryTag, 0.0, 0.0, 1.0, 1.0),
];

#[derive(Debug, Clone)]
pub struct GradCheckOutcome {
    pub seed: u64,
    pub combo: &'static str,
    pub report: GradCheckReport,
    /// Hinge terms on each side of the kink, `(active, inactive)`.
    pub hinge_terms: (usize, usize),
}

/// Runs every loss combination on `seeds` random small networks.
pub fn run_suite(seeds: impl IntoIterator<Item = u64>) -> Result<Vec<GradCheckOutcome>> {
    let mut out = Vec::new();
    for seed in seeds {
        for &(name, mode, l1, l2, l3, l4) in &LOSS_COMBOS {
            let (params, batch, mut hyper) = random_case(seed, mode);
            hyper.lambda1 = l1;
            hyper.lambda2 = l2;
            hyper.lambda3 = l3;
            hyper.lambda4 = l4;
            let report = check_gradients(&params, &batch, &hyper)?;
            let hinge_terms = count_hinge_terms(&params, &batch, &hyper)?;
            out.push(GradCheckOutcome {
                seed,
                combo: name,
                report,
                hinge_terms,
            });
        }
    }
    Ok(out)
}

fn count_hinge_terms(params: &NetworkParams, batch: &Batch, hyper: &HyperParams) -> Result<(usize, usize)> {
    let acts = super::forward::forward(params, batch.features.view())?;
    let k = batch.len();
    let (mut active, mut inactive) = (0, 0);
    match &batch.target {
        Target::TagVectors(w) => {
            let scores = acts.h2_out.dot(&w.t());
            for n in 0..k {
                for j in (0..k).filter(|&j| j != n) {
                    if hyper.margin_hinge + scores[[n, j]] - scores[[n, n]] > 0.0 {
                        active += 1;
                    } else {
                        inactive += 1;
                    }
                }
            }
        }
        Target::Similarity(s) => {
            let d = super::loss::pair_distances(acts.h1_out.view());
            for i in 0..k {
                for j in 0..k {
                    if s[[i, j]] == 0.0 {
                        if hyper.margin_contrastive > d[[i, j]] {
                            active += 1;
                        } else {
                            inactive += 1;
                        }
                    }
                }
            }
        }
    }
    Ok((active, inactive))
}
