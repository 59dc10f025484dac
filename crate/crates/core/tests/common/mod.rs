//! Independent oracles shared by the integration and acceptance tests.

#![allow(dead_code)]

use chanlab_core::relu_net::{loss, loss_and_gradient, Layer};
use chanlab_core::{MlpParams, SampleSet, SimRng};
use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

/// Ordinary least squares on the design `[X 1]`, solved by SVD. Shares no
/// code with the centered closed form it checks.
pub fn ols_oracle(set: &SampleSet) -> (Array2<f64>, Array1<f64>) {
    let n = set.len();
    let d = set.dim();
    let design = DMatrix::from_fn(
        n,
        d + 1,
        |i, j| if j < d { set.inputs()[[i, j]] } else { 1.0 },
    );
    let targets = DMatrix::from_fn(n, d, |i, j| set.targets()[[i, j]]);
    let coef = design
        .svd(true, true)
        .solve(&targets, 1e-14)
        .expect("svd solve");
    // coef is (d+1)×d: rows are input coordinates plus the intercept.
    let weight = Array2::from_shape_fn((d, d), |(i, j)| coef[(j, i)]);
    let bias = Array1::from_shape_fn(d, |i| coef[(d, i)]);
    (weight, bias)
}

/// Ordinary least squares slope for scalar data, by hand.
pub fn scalar_slope(xs: &[f64], hs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let mh = hs.iter().sum::<f64>() / n;
    let sxh: f64 = xs.iter().zip(hs).map(|(x, h)| (x - mx) * (h - mh)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxh / sxx
}

/// Random network of the given widths with Gaussian weights and biases.
pub fn random_params(widths: &[usize], rng: &mut SimRng) -> MlpParams {
    let layers = widths
        .windows(2)
        .map(|w| Layer {
            weight: Array2::from_shape_fn((w[1], w[0]), |_| rng.gaussian() / (w[0] as f64).sqrt()),
            bias: Array1::from_shape_fn(w[1], |_| 0.5 * rng.gaussian()),
        })
        .collect();
    MlpParams::new(layers).expect("chained widths")
}

/// Smallest absolute hidden pre-activation over the batch.
pub fn min_kink_margin(params: &MlpParams, set: &SampleSet) -> f64 {
    let mut margin = f64::INFINITY;
    for (x, _) in set.iter() {
        let mut a = x.to_owned();
        for layer in &params.layers[..params.layers.len() - 1] {
            let z = layer.weight.dot(&a) + &layer.bias;
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
            a = z.mapv(|v| v.max(0.0));
        }
    }
    margin
}

/// `‖g_bp − g_fd‖₂ / ‖g_fd‖₂` with central differences of step `h`.
pub fn gradient_relative_error(params: &MlpParams, batch: &SampleSet, h: f64) -> f64 {
    let (_, grad) = loss_and_gradient(params, batch).expect("gradient");
    let analytic: Vec<f64> = grad.values().collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    for k in 0..analytic.len() {
        let mut plus = params.clone();
        let mut minus = params.clone();
        *plus.values_mut().nth(k).unwrap() += h;
        *minus.values_mut().nth(k).unwrap() -= h;
        let lp = loss(&plus, batch).unwrap();
        let lm = loss(&minus, batch).unwrap();
        numeric.push((lp - lm) / (2.0 * h));
    }
    let diff: f64 = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

/// One random `(params, batch)` instance with every hidden unit at least
/// `margin` away from its kink, so central differences stay on one side.
pub fn gradient_instance(rng: &mut SimRng, margin: f64) -> (MlpParams, SampleSet) {
    loop {
        let d = 1 + rng.index(3);
        let depth = 1 + rng.index(3);
        let mut widths = vec![d];
        for _ in 0..depth {
            widths.push(1 + rng.index(8));
        }
        widths.push(d);
        let params = random_params(&widths, rng);
        let n = 1 + rng.index(12);
        let xs = Array2::from_shape_fn((n, d), |_| rng.gaussian());
        let hs = Array2::from_shape_fn((n, d), |_| rng.gaussian());
        let batch = SampleSet::new(xs, hs).unwrap();
        if min_kink_margin(&params, &batch) > margin {
            return (params, batch);
        }
    }
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
