use ndarray::{Array2, ArrayView2, Axis};

use super::forward::{forward, ForwardActivations};
use super::loss::{
    contrastive_grad, hinge_grad, pairwise_grad, quantization_grad, total_loss, HyperParams,
    LossMode, LossValues,
};
use super::params::NetworkParams;
use crate::error::{Error, Result};

/// Supervision attached to a mini-batch.
#[derive(Debug, Clone)]
pub enum Target {
    /// Aggregated tag vectors, one row per sample.
    TagVectors(Array2<f64>),
    /// Symmetric 0/1 similarity matrix over the batch.
    Similarity(Array2<f64>),
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub features: Array2<f64>,
    pub target: Target,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }
}

/// Parameter gradients of the weighted objective plus the loss values it
/// was computed from.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub grads: NetworkParams,
    pub losses: LossValues,
}

struct HeadGradients {
    losses: LossValues,
    d_h1: Array2<f64>,
    d_h2: Option<Array2<f64>>,
}

fn head_gradients(
    acts: &ForwardActivations,
    batch: &Batch,
    hyper: &HyperParams,
) -> Result<HeadGradients> {
    let k = acts.h1_out.nrows();
    if batch.len() != k {
        return Err(Error::Shape(format!(
            "activations for {k} samples, batch has {}",
            batch.len()
        )));
    }
    let h1 = acts.h1_out.view();
    let (l3, g3) = quantization_grad(h1);
    let mut losses = LossValues {
        l3,
        ..Default::default()
    };
    let mut d_h1 = g3 * hyper.lambda3;
    let mut d_h2 = None;
    match (&batch.target, hyper.mode) {
        (Target::TagVectors(w), LossMode::Wdht) => {
            if w.nrows() != k {
                return Err(Error::Shape(format!("{} tag vectors for {k} samples", w.nrows())));
            }
            let (l1, g1) = pairwise_grad(h1, w.view())?;
            d_h1.scaled_add(hyper.lambda1, &g1);
            losses.l1 = l1;
            if acts.h2_out.ncols() == 0 {
                return Err(Error::Shape("network has no H2 head for the hinge loss".into()));
            }
            let (l2, g2) = hinge_grad(acts.h2_out.view(), w.view(), hyper.margin_hinge)?;
            losses.l2 = l2;
            d_h2 = Some(g2 * hyper.lambda2);
        }
        (Target::Similarity(s), LossMode::BinaryTag) => {
            let (l4, g4) = contrastive_grad(h1, s.view(), hyper.margin_contrastive)?;
            d_h1.scaled_add(hyper.lambda4, &g4);
            losses.l4 = l4;
        }
        (_, mode) => {
            return Err(Error::Param(format!(
                "{mode} training needs {} supervision",
                match mode {
                    LossMode::Wdht => "tag-vector",
                    LossMode::BinaryTag => "similarity",
                }
            )))
        }
    }
    losses.total = total_loss(&losses, hyper);
    Ok(HeadGradients {
        losses,
        d_h1,
        d_h2,
    })
}

/// Loss values of the batch, without gradients.
pub fn objective(params: &NetworkParams, batch: &Batch, hyper: &HyperParams) -> Result<LossValues> {
    let acts = forward(params, batch.features.view())?;
    Ok(head_gradients(&acts, batch, hyper)?.losses)
}

fn outer_sum(delta: &Array2<f64>, input: ArrayView2<'_, f64>) -> Array2<f64> {
    delta.t().dot(&input)
}

/// Analytic gradient of the weighted objective with respect to every
/// parameter. ReLU and hinge kinks take a zero subgradient.
pub fn backward(
    params: &NetworkParams,
    acts: &ForwardActivations,
    batch: &Batch,
    hyper: &HyperParams,
) -> Result<GradientSet> {
    let head = head_gradients(acts, batch, hyper)?;
    let mut grads = params.zeros_like();

    let h1 = &acts.h1_out;
    let dz_h1 = &head.d_h1 * &h1.mapv(|h| h * (1.0 - h));
    grads.h1.weight = outer_sum(&dz_h1, acts.fc3_out.view());
    grads.h1.bias = dz_h1.sum_axis(Axis(0));
    let mut d_hidden = dz_h1.dot(&params.h1.weight);

    if let Some(d_h2) = &head.d_h2 {
        let dz_h2 = d_h2 * &acts.h2_out.mapv(|g| 1.0 - g * g);
        grads.h2.weight = outer_sum(&dz_h2, acts.fc3_out.view());
        grads.h2.bias = dz_h2.sum_axis(Axis(0));
        d_hidden += &dz_h2.dot(&params.h2.weight);
    }

    ndarray::Zip::from(&mut d_hidden)
        .and(&acts.fc3_pre)
        .for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
    grads.fc3.weight = outer_sum(&d_hidden, batch.features.view());
    grads.fc3.bias = d_hidden.sum_axis(Axis(0));

    Ok(GradientSet {
        grads,
        losses: head.losses,
    })
}

/// Forward and backward in one call.
pub fn loss_and_gradient(
    params: &NetworkParams,
    batch: &Batch,
    hyper: &HyperParams,
) -> Result<GradientSet> {
    let acts = forward(params, batch.features.view())?;
    backward(params, &acts, batch, hyper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashnet::gradcheck::random_case;
    use crate::hashnet::params::{init_glorot, LayerSizes};

    #[test]
    fn zero_weights_give_zero_gradient() {
        let (params, batch, mut hyper) = random_case(3, LossMode::Wdht);
        hyper.lambda1 = 0.0;
        hyper.lambda2 = 0.0;
        hyper.lambda3 = 0.0;
        let g = loss_and_gradient(&params, &batch, &hyper).unwrap();
        for t in g.grads.tensors() {
            assert!(t.iter().all(|&v| v == 0.0));
        }
        assert_eq!(g.losses.total, 0.0);
    }

    #[test]
    fn duplicated_samples_get_identical_gradients() {
        let sizes = LayerSizes {
            input: 8,
            hidden: 6,
            bits: 4,
            embed: 5,
        };
        let params = init_glorot(sizes, 5).unwrap();
        let (_, base, hyper) = random_case(5, LossMode::Wdht);
        let Target::TagVectors(w) = &base.target else {
            unreachable!()
        };
        // rows 0 and 1 identical, row 2 different
        let mut x = base.features.clone();
        let row0 = x.row(0).to_owned();
        x.row_mut(1).assign(&row0);
        let mut w = w.clone();
        let w0 = w.row(0).to_owned();
        w.row_mut(1).assign(&w0);
        let batch = Batch {
            features: x,
            target: Target::TagVectors(w),
        };
        let acts = forward(&params, batch.features.view()).unwrap();
        let head = head_gradients(&acts, &batch, &hyper).unwrap();
        for b in 0..4 {
            assert!((head.d_h1[[0, b]] - head.d_h1[[1, b]]).abs() < 1e-12);
        }
        let d2 = head.d_h2.unwrap();
        for c in 0..5 {
            assert!((d2[[0, c]] - d2[[1, c]]).abs() < 1e-12);
        }
    }

    #[test]
    fn mode_and_target_must_agree() {
        let (params, batch, mut hyper) = random_case(1, LossMode::Wdht);
        hyper.mode = LossMode::BinaryTag;
        assert!(loss_and_gradient(&params, &batch, &hyper).is_err());
    }
}
