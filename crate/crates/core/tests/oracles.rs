mod common;

use chanlab_core::relu_net::closed_form_affine_fit;
use chanlab_core::{SampleSet, SimRng};
use common::{gradient_instance, gradient_relative_error, max_abs_diff, ols_oracle, scalar_slope};
use ndarray::Array2;

#[test]
fn closed_form_matches_svd_least_squares() {
    let mut rng = SimRng::seed_from_u64(100);
    for _ in 0..30 {
        let d = 1 + rng.index(4);
        let n = d + 2 + rng.index(150);
        let mix = Array2::from_shape_fn((d, d), |_| rng.gaussian());
        let xs = Array2::from_shape_fn((n, d), |_| 2.0 * rng.gaussian() + 0.5);
        let hs = xs.dot(&mix.t()) + Array2::from_shape_fn((n, d), |_| rng.gaussian());
        let set = SampleSet::new(xs, hs).unwrap();
        let fit = closed_form_affine_fit(&set, 0.0).unwrap();
        let (w, b) = ols_oracle(&set);
        assert!(max_abs_diff(&fit.weight, &w) < 1e-8);
        assert!(fit
            .bias
            .iter()
            .zip(b.iter())
            .all(|(p, q)| (p - q).abs() < 1e-8));
    }
}

#[test]
fn scalar_slope_oracle_agrees() {
    let mut rng = SimRng::seed_from_u64(101);
    let xs: Vec<f64> = (0..500).map(|_| rng.gaussian()).collect();
    let hs: Vec<f64> = xs.iter().map(|x| 0.3 * x + rng.gaussian()).collect();
    let set = SampleSet::new(
        Array2::from_shape_vec((500, 1), xs.clone()).unwrap(),
        Array2::from_shape_vec((500, 1), hs.clone()).unwrap(),
    )
    .unwrap();
    let fit = closed_form_affine_fit(&set, 0.0).unwrap();
    assert!((fit.weight[[0, 0]] - scalar_slope(&xs, &hs)).abs() < 1e-12);
}

#[test]
fn ridge_shrinks_toward_zero() {
    let mut rng = SimRng::seed_from_u64(102);
    let xs = Array2::from_shape_fn((50, 2), |_| rng.gaussian());
    let hs = &xs * 0.8;
    let set = SampleSet::new(xs, hs).unwrap();
    let plain = closed_form_affine_fit(&set, 0.0).unwrap();
    let ridged = closed_form_affine_fit(&set, 100.0).unwrap();
    let norm = |w: &Array2<f64>| w.iter().map(|v| v * v).sum::<f64>();
    assert!(norm(&ridged.weight) < norm(&plain.weight));
}

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = SimRng::seed_from_u64(103);
    for _ in 0..20 {
        let (params, batch) = gradient_instance(&mut rng, 1e-3);
        let err = gradient_relative_error(&params, &batch, 1e-5);
        assert!(err <= 1e-4, "relative error {err}");
    }
}
