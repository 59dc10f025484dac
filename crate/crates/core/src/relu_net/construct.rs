//! Exact constructions: the optimal affine fit of a sample set and ReLU
//! networks that realize a given affine map.

use ndarray::{concatenate, Array1, Array2, Axis};

use super::{Layer, MlpParams};
use crate::channel_model::SampleSet;
use crate::error::{Error, Result};
use crate::estimators::AffineEstimator;
use crate::linalg::Cholesky;

/// Least-squares affine map from inputs to targets in centered form:
///
/// `W = (Σ h̄_m x̄_mᵀ)(Σ x̄_m x̄_mᵀ + ridge·I)⁻¹`, `b = h̄ − W x̄`
///
/// where bars denote sample means and centered samples.
pub fn closed_form_affine_fit(train_set: &SampleSet, ridge: f64) -> Result<AffineEstimator> {
    let d = train_set.dim();
    let n = train_set.len();
    if n < d + 1 {
        return Err(Error::invalid(format!(
            "affine fit needs at least {} samples, got {n}",
            d + 1
        )));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::invalid("ridge must be >= 0"));
    }
    let x_mean = train_set.inputs().mean_axis(Axis(0)).expect("non-empty");
    let h_mean = train_set.targets().mean_axis(Axis(0)).expect("non-empty");
    let xc = train_set.inputs() - &x_mean.view().insert_axis(Axis(0));
    let hc = train_set.targets() - &h_mean.view().insert_axis(Axis(0));

    let mut sxx = xc.t().dot(&xc);
    sxx.diag_mut().mapv_inplace(|v| v + ridge);
    let shx = hc.t().dot(&xc);

    // W Sxx = Shx  ⇔  Sxx Wᵀ = Shxᵀ.
    let chol = Cholesky::new(sxx.view()).map_err(|_| Error::DegenerateSampleCovariance)?;
    let weight = chol.solve_columns(shx.t()).reversed_axes();
    if !weight.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateSampleCovariance);
    }
    let bias = &h_mean - &weight.dot(&x_mean);
    AffineEstimator::new(weight, bias)
}

/// Two-layer ReLU network of hidden width `2m` computing `W x + b` exactly:
/// `A = I∘φ∘A + (−I)∘φ∘(−A)`.
pub fn affine_to_relu(aff: &AffineEstimator) -> MlpParams {
    let w = &aff.weight;
    let b = &aff.bias;
    let m = aff.output_dim();
    let hidden = Layer {
        weight: concatenate![Axis(0), w.view(), (-w).view()],
        bias: concatenate![Axis(0), b.view(), (-b).view()],
    };
    let eye = Array2::<f64>::eye(m);
    let output = Layer {
        weight: concatenate![Axis(1), eye.view(), (-&eye).view()],
        bias: Array1::zeros(m),
    };
    MlpParams {
        layers: vec![hidden, output],
    }
}

/// Adds `extra_layers` hidden layers without changing the realized function.
///
/// The last hidden activations are non-negative, so an identity layer
/// followed by ReLU reproduces them. A network without hidden layers is first
/// rewritten through [`affine_to_relu`], which accounts for one of the extra
/// layers.
pub fn extend_depth_identity(params: &MlpParams, extra_layers: usize) -> Result<MlpParams> {
    if extra_layers == 0 {
        return Err(Error::invalid("extra_layers must be positive"));
    }
    let (mut base, remaining) = if params.layers.len() == 1 {
        let only = &params.layers[0];
        let aff = AffineEstimator {
            weight: only.weight.clone(),
            bias: only.bias.clone(),
        };
        (affine_to_relu(&aff), extra_layers - 1)
    } else {
        (params.clone(), extra_layers)
    };
    let output = base.layers.pop().expect("at least two layers");
    let width = output.inputs();
    for _ in 0..remaining {
        base.layers.push(Layer {
            weight: Array2::eye(width),
            bias: Array1::zeros(width),
        });
    }
    base.layers.push(output);
    Ok(base)
}
