mod common;

use chanlab_core::estimators::{
    dl_er_mse_diag, lm_er_mse_diag, lmmse_mse_theory, ls_mse_theory, DimFactor,
};
use chanlab_core::experiment::{
    parse_config, render_csv, ExperimentConfig, ExperimentKind, SweepRow,
};
use chanlab_core::piecewise::{activation_pattern, region_affine, region_occupancy};
use chanlab_core::relu_net::{closed_form_affine_fit, forward, Layer};
use chanlab_core::{CovarianceSpec, MlpParams, RappParams, SampleSet, SimRng};
use common::random_params;
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;

fn biasless(mut p: MlpParams) -> MlpParams {
    for layer in &mut p.layers {
        layer.bias.fill(0.0);
    }
    p
}

fn frobenius_product(p: &MlpParams) -> f64 {
    p.layers
        .iter()
        .map(|l: &Layer| l.weight.iter().map(|v| v * v).sum::<f64>().sqrt())
        .product()
}

prop_compose! {
    fn net_and_rng()(seed in any::<u64>(), d in 1usize..4, depth in 1usize..4, width in 1usize..9)
        -> (MlpParams, SimRng) {
        let mut rng = SimRng::seed_from_u64(seed);
        let mut widths = vec![d];
        widths.extend(std::iter::repeat_n(width, depth));
        widths.push(d);
        (random_params(&widths, &mut rng), rng)
    }
}

fn gaussian(d: usize, rng: &mut SimRng, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(d, |_| scale * rng.gaussian())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn lmmse_never_worse_than_ls(d in 1usize..7, sigma2 in 0.01f64..10.0, sigma_n2 in 1e-4f64..10.0) {
        let cov = CovarianceSpec::diagonal(sigma2).unwrap();
        let lm = lmmse_mse_theory(&cov, d, sigma_n2).unwrap();
        prop_assert!(lm >= 0.0);
        prop_assert!(lm <= ls_mse_theory(d, sigma_n2) * (1.0 + 1e-12));
        prop_assert!(lm <= d as f64 * sigma2 * (1.0 + 1e-12));
    }

    #[test]
    fn mismatch_formulas_ordered(
        d in 1usize..5,
        sigma2 in 0.1f64..5.0,
        sigma_n2 in 1e-3f64..5.0,
        e1 in 0.0f64..5.0,
        bump in 0.0f64..5.0,
    ) {
        let base = lmmse_mse_theory(&CovarianceSpec::diagonal(sigma2).unwrap(), d, sigma_n2).unwrap();
        let small = lm_er_mse_diag(d, sigma2, &vec![e1; d], sigma_n2, DimFactor::AsPrinted).unwrap();
        let large = lm_er_mse_diag(d, sigma2, &vec![e1 + bump; d], sigma_n2, DimFactor::AsPrinted).unwrap();
        prop_assert!(small >= base * (1.0 - 1e-12));
        prop_assert!(large >= small * (1.0 - 1e-12));
        let dl = dl_er_mse_diag(d, sigma2, &vec![e1; d], sigma_n2).unwrap();
        let omitted = lm_er_mse_diag(d, sigma2, &vec![e1; d], sigma_n2, DimFactor::Omitted).unwrap();
        prop_assert!((dl - omitted).abs() <= 1e-14 * dl);
        prop_assert!(dl <= small * (1.0 + 1e-12));
        let dl_large = dl_er_mse_diag(d, sigma2, &vec![e1 + bump; d], sigma_n2).unwrap();
        prop_assert!(dl_large >= dl * (1.0 - 1e-12));
    }

    #[test]
    fn rapp_monotone_bounded_invertible(x_sat in 0.1f64..5.0, omega in 1.0f64..6.0, t in -5.0f64..5.0, dt in 1e-3f64..1.0) {
        let p = RappParams::new(x_sat, omega).unwrap();
        let (u, du) = (t * x_sat, dt * x_sat);
        let g = p.apply(u);
        prop_assert!(g.abs() < x_sat);
        prop_assert!(p.apply(u + du) > g);
        prop_assert!((p.apply(-u) + g).abs() <= 1e-15 * x_sat);
        if g.abs() < 0.999 * x_sat {
            let back = p.invert(g).unwrap();
            prop_assert!((back - u).abs() <= 1e-8 * u.abs().max(1.0));
        }
    }

    #[test]
    fn biasless_forward_is_homogeneous((net, mut rng) in net_and_rng(), alpha in 0.0f64..50.0) {
        let net = biasless(net);
        let x = gaussian(net.input_dim(), &mut rng, 1.0);
        let fx = forward(&net, x.view()).unwrap();
        let fax = forward(&net, (&x * alpha).view()).unwrap();
        for (a, b) in fax.iter().zip(fx.iter()) {
            prop_assert!((a - alpha * b).abs() <= 1e-12 * (1.0 + alpha * b.abs()));
        }
    }

    #[test]
    fn forward_is_lipschitz((net, mut rng) in net_and_rng()) {
        let bound = frobenius_product(&net);
        let x = gaussian(net.input_dim(), &mut rng, 2.0);
        let y = gaussian(net.input_dim(), &mut rng, 2.0);
        let fx = forward(&net, x.view()).unwrap();
        let fy = forward(&net, y.view()).unwrap();
        let out = (&fx - &fy).mapv(|v| v * v).sum().sqrt();
        let inp = (&x - &y).mapv(|v| v * v).sum().sqrt();
        prop_assert!(out <= bound * inp * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn region_map_is_exact((net, mut rng) in net_and_rng()) {
        for _ in 0..20 {
            let x = gaussian(net.input_dim(), &mut rng, 3.0);
            let pattern = activation_pattern(&net, x.view()).unwrap();
            prop_assert_eq!(pattern.len(), net.hidden_neurons());
            let map = region_affine(&net, &pattern).unwrap();
            let f = forward(&net, x.view()).unwrap();
            let g = map.apply(x.view());
            let scale = map.weight.mapv(f64::abs).dot(&x.mapv(f64::abs)) + map.bias.mapv(f64::abs);
            for ((a, b), s) in f.iter().zip(g.iter()).zip(scale.iter()) {
                prop_assert!((a - b).abs() <= 1e-10 * s.max(1e-300));
            }
        }
    }

    #[test]
    fn occupancy_partitions_and_recombines((net, mut rng) in net_and_rng(), n in 1usize..300, m in 1usize..300) {
        let d = net.input_dim();
        let train = SampleSet::new(
            Array2::from_shape_fn((n, d), |_| rng.gaussian()),
            Array2::from_shape_fn((n, d), |_| rng.gaussian()),
        ).unwrap();
        let probe = SampleSet::new(
            Array2::from_shape_fn((m, d), |_| 3.0 * rng.gaussian()),
            Array2::zeros((m, d)),
        ).unwrap();
        let rep = region_occupancy(&net, &train, &probe).unwrap();
        prop_assert_eq!(rep.regions.iter().map(|r| r.train_count).sum::<usize>(), n);
        prop_assert_eq!(rep.regions.iter().map(|r| r.probe_count).sum::<usize>(), m);
        prop_assert!(rep.regions.len() <= n + m);
        let bound = 2f64.powi(net.hidden_neurons() as i32);
        prop_assert!(rep.regions.len() as f64 <= bound);
        prop_assert!((rep.recombined_loss() - rep.train_loss).abs() <= 1e-10 * rep.train_loss.max(1e-300));
        prop_assert!((0.0..=1.0).contains(&rep.empty_region_fraction));
    }

    #[test]
    fn affine_fit_residuals_orthogonal(seed in any::<u64>(), d in 1usize..5, extra in 1usize..100) {
        let mut rng = SimRng::seed_from_u64(seed);
        let n = d + 1 + extra;
        let xs = Array2::from_shape_fn((n, d), |_| rng.gaussian());
        let hs = Array2::from_shape_fn((n, d), |_| rng.gaussian());
        let set = SampleSet::new(xs.clone(), hs.clone()).unwrap();
        let fit = closed_form_affine_fit(&set, 0.0).unwrap();
        let resid = &hs - &fit.apply_rows(&xs);
        let xc = &xs - &xs.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
        for v in resid.t().dot(&xc).iter() {
            prop_assert!(v.abs() <= 1e-8);
        }
    }

    #[test]
    fn config_text_round_trips(
        kind in 0usize..6,
        d in 1usize..9,
        snrs in proptest::collection::vec(-10.0f64..40.0, 1..6),
        eta in 0.01f64..10.0,
        lr in 1e-6f64..1.0,
        seed in any::<u64>(),
    ) {
        let mut c = ExperimentConfig::defaults(ExperimentKind::ALL[kind]);
        c.d = d;
        c.snr_db = snrs;
        c.eta = eta;
        c.train.learning_rate = lr;
        c.seed = seed;
        prop_assert_eq!(parse_config(&c.to_text(), &[]).unwrap(), c);
    }

    #[test]
    fn csv_independent_of_row_order(values in proptest::collection::vec((0u8..5, 0u8..3, 0.0f64..1.0), 1..30), rot in 0usize..30) {
        let names = ["dl", "lmmse", "ls"];
        let mut rows: Vec<SweepRow> = Vec::new();
        for (s, e, v) in values {
            if rows.iter().any(|r| r.sweep_var == s as f64 && r.estimator == names[e as usize]) {
                continue;
            }
            rows.push(SweepRow::new(s as f64, names[e as usize], v, None, 1));
        }
        let a = render_csv(&rows).unwrap();
        let k = rot % rows.len();
        rows.rotate_left(k);
        prop_assert_eq!(render_csv(&rows).unwrap(), a);
    }
}
