use ndarray::{Array2, ArrayView2, Axis};

use super::params::{Dense, NetworkParams};
use crate::codec::{binarize, CodeMatrix};
use crate::error::{Error, Result};

/// Per-sample activations of one forward pass, one row per sample.
#[derive(Debug, Clone)]
pub struct ForwardActivations {
    pub fc3_pre: Array2<f64>,
    /// ReLU output of FC3.
    pub fc3_out: Array2<f64>,
    pub h1_pre: Array2<f64>,
    /// Sigmoid output of H1, the relaxed hash code.
    pub h1_out: Array2<f64>,
    pub h2_pre: Array2<f64>,
    /// Tanh output of H2, the predicted tag embedding.
    pub h2_out: Array2<f64>,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn affine(layer: &Dense, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weight.t());
    z += &layer.bias.view().insert_axis(Axis(0));
    z
}

fn check_input(params: &NetworkParams, x: ArrayView2<'_, f64>) -> Result<()> {
    if x.ncols() != params.fc3.in_dim() {
        return Err(Error::Shape(format!(
            "features have {} columns, network expects {}",
            x.ncols(),
            params.fc3.in_dim()
        )));
    }
    if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "non-finite feature in row {}",
            pos / x.ncols().max(1)
        )));
    }
    Ok(())
}

pub fn forward(params: &NetworkParams, features: ArrayView2<'_, f64>) -> Result<ForwardActivations> {
    check_input(params, features)?;
    let fc3_pre = affine(&params.fc3, features);
    let fc3_out = fc3_pre.mapv(|z| z.max(0.0));
    let h1_pre = affine(&params.h1, fc3_out.view());
    let h1_out = h1_pre.mapv(sigmoid);
    let h2_pre = affine(&params.h2, fc3_out.view());
    let h2_out = h2_pre.mapv(f64::tanh);
    Ok(ForwardActivations {
        fc3_pre,
        fc3_out,
        h1_pre,
        h1_out,
        h2_pre,
        h2_out,
    })
}

/// H1 outputs only; all that inference needs.
pub fn hash_outputs(params: &NetworkParams, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_input(params, features)?;
    let hidden = affine(&params.fc3, features).mapv(|z| z.max(0.0));
    Ok(affine(&params.h1, hidden.view()).mapv(sigmoid))
}

/// Binary codes for every feature row.
pub fn encode(params: &NetworkParams, features: ArrayView2<'_, f64>) -> Result<CodeMatrix> {
    let h = hash_outputs(params, features)?;
    let mut codes = CodeMatrix::new(params.h1.out_dim());
    for row in h.rows() {
        codes.push(&binarize(row.as_slice().expect("standard layout"))?)?;
    }
    Ok(codes)
}
