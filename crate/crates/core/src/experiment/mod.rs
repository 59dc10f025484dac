//! Sweep orchestration: one job per sweep point and seed, each with its own
//! random sub-streams, assembled into rows in a fixed order.

mod config;
mod results;

pub use config::{
    effective_config_path, load_config, parse_config, parse_settings, ExperimentConfig,
    ExperimentKind, Setting,
};
pub use results::{find_row, render_csv, sort_rows, write_results, SweepRow, CSV_HEADER};

use ndarray::{s, Array2};
use rayon::prelude::*;

use crate::channel_model::{
    gen_dataset, gen_mismatched_dataset, snr_db_to_noise_var, CovarianceSpec, MismatchCase,
    MismatchSpec, ObservationModel, SampleSet,
};
use crate::error::{Error, Result};
use crate::estimators::{
    dl_er_mse_diag, empirical_mse_rows, lm_er_mse_diag, lmmse_matrix, lmmse_mse_theory,
    ls_mse_theory, mmse_monte_carlo, mmse_rapp_semianalytic,
};
use crate::format::fmt_sig12;
use crate::relu_net::{
    closed_form_affine_fit, forward_rows, train, MlpParams, TrainConfig, TrainReport,
};
use crate::rng::{derive_seed, SimRng};

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const NET_STREAM: u64 = 3;
const MC_STREAM: u64 = 4;

/// One estimator evaluated at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub name: String,
    pub empirical_mse: f64,
    pub theory_mse: Option<f64>,
}

impl EstimatorResult {
    fn new(name: &str, empirical_mse: f64, theory_mse: Option<f64>) -> Self {
        Self {
            name: name.to_string(),
            empirical_mse,
            theory_mse,
        }
    }
}

/// Everything produced at a single sweep point.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub estimators: Vec<EstimatorResult>,
    pub network: MlpParams,
    pub train_report: TrainReport,
    pub train_set: SampleSet,
    pub test_set: SampleSet,
}

impl PointOutcome {
    pub fn mse(&self, name: &str) -> Option<f64> {
        self.estimators
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.empirical_mse)
    }

    pub fn theory(&self, name: &str) -> Option<f64> {
        self.estimators
            .iter()
            .find(|e| e.name == name)
            .and_then(|e| e.theory_mse)
    }
}

fn mse_of(predictions: &Array2<f64>, test: &SampleSet) -> Result<f64> {
    Ok(empirical_mse_rows(predictions, test)?.empirical_mse)
}

/// Trains the DL estimator of hidden width `width` with the configured
/// recipe, seeded from `point_seed`.
pub fn train_dl(
    cfg: &ExperimentConfig,
    width: usize,
    train_set: &SampleSet,
    point_seed: u64,
) -> Result<(MlpParams, TrainReport)> {
    let spec = cfg.mlp_spec(width)?;
    let tc = TrainConfig {
        seed: derive_seed(point_seed, NET_STREAM),
        ..cfg.train.clone()
    };
    train(&spec, train_set, &tc)
}

/// Linear model at one SNR: LS, LMMSE, the closed-form affine fit and the
/// trained network.
pub fn linear_point(
    cfg: &ExperimentConfig,
    snr_db: f64,
    width: usize,
    train_size: usize,
    point_seed: u64,
) -> Result<PointOutcome> {
    let d = cfg.d;
    let sigma_n2 = snr_db_to_noise_var(snr_db);
    let model = ObservationModel::linear(sigma_n2)?;
    let cov = CovarianceSpec::diagonal(cfg.sigma2)?;
    let train_set = gen_dataset(
        &cov,
        d,
        &model,
        train_size,
        &mut SimRng::substream(point_seed, TRAIN_STREAM),
    )?;
    let test_set = gen_dataset(
        &cov,
        d,
        &model,
        cfg.test_size,
        &mut SimRng::substream(point_seed, TEST_STREAM),
    )?;

    let j_ls = ls_mse_theory(d, sigma_n2);
    let j_lmmse = lmmse_mse_theory(&cov, d, sigma_n2)?;
    let ls_pred = test_set.inputs() / model.tau();
    let lmmse = lmmse_matrix(&cov, d, sigma_n2, model.tau())?;
    let (network, train_report) = train_dl(cfg, width, &train_set, point_seed)?;

    let mut estimators = vec![
        EstimatorResult::new("ls", mse_of(&ls_pred, &test_set)?, Some(j_ls)),
        EstimatorResult::new(
            "lmmse",
            mse_of(&lmmse.apply_rows(test_set.inputs()), &test_set)?,
            Some(j_lmmse),
        ),
        EstimatorResult::new(
            "dl",
            mse_of(&forward_rows(&network, test_set.inputs())?, &test_set)?,
            Some(j_lmmse),
        ),
    ];
    if train_size > d {
        let fit = closed_form_affine_fit(&train_set, 0.0)?;
        estimators.push(EstimatorResult::new(
            "affine_fit",
            mse_of(&fit.apply_rows(test_set.inputs()), &test_set)?,
            Some(j_lmmse),
        ));
    }
    Ok(PointOutcome {
        estimators,
        network,
        train_report,
        train_set,
        test_set,
    })
}

/// Largest multiple of the configured trial count tried on one test point.
pub const MC_MAX_ESCALATION: usize = 256;

/// Monte-Carlo MMSE that retries with four times the trials while the
/// importance weights are degenerate, up to [`MC_MAX_ESCALATION`]. Tail
/// observations at high SNR and `d > 1` need far more prior draws than
/// typical ones.
pub fn mmse_mc_escalating(
    x: ndarray::ArrayView1<f64>,
    cov: &CovarianceSpec,
    model: &ObservationModel,
    trials: usize,
    rng: &mut SimRng,
) -> Result<ndarray::Array1<f64>> {
    let mut n = trials;
    loop {
        match mmse_monte_carlo(x, cov, model, n, rng) {
            Err(Error::DegenerateWeights { .. }) if n < trials * MC_MAX_ESCALATION => n *= 4,
            other => return other,
        }
    }
}

/// Rapp-distorted model at one SNR.
///
/// `lmmse` is the best affine estimator on the distorted observations,
/// fitted on the training set. `lmmse_linear_model` applies the linear-model
/// LMMSE matrix to the distorted observations unchanged. Both MMSE rows carry
/// the exact MMSE as theory: the distortion is invertible, so it equals the
/// linear-model LMMSE risk.
pub fn nonlinear_point(
    cfg: &ExperimentConfig,
    snr_db: f64,
    point_seed: u64,
) -> Result<PointOutcome> {
    let d = cfg.d;
    let sigma_n2 = snr_db_to_noise_var(snr_db);
    let model = ObservationModel::rapp(sigma_n2, cfg.x_sat, cfg.omega)?;
    let cov = CovarianceSpec::diagonal(cfg.sigma2)?;
    let train_set = gen_dataset(
        &cov,
        d,
        &model,
        cfg.train_size,
        &mut SimRng::substream(point_seed, TRAIN_STREAM),
    )?;
    let test_set = gen_dataset(
        &cov,
        d,
        &model,
        cfg.test_size,
        &mut SimRng::substream(point_seed, TEST_STREAM),
    )?;
    let j_mmse = lmmse_mse_theory(&cov, d, sigma_n2)?;

    let fit = closed_form_affine_fit(&train_set, 0.0)?;
    let formula = lmmse_matrix(&cov, d, sigma_n2, model.tau())?;
    let (network, train_report) = train_dl(cfg, cfg.width, &train_set, point_seed)?;

    let mut semi = Array2::zeros((test_set.len(), d));
    for (m, (x, _)) in test_set.iter().enumerate() {
        semi.row_mut(m)
            .assign(&mmse_rapp_semianalytic(x, &cov, &model)?);
    }
    let k = cfg.mc_test_points.min(test_set.len());
    let mc_set = SampleSet::new(
        test_set.inputs().slice(s![..k, ..]).to_owned(),
        test_set.targets().slice(s![..k, ..]).to_owned(),
    )?;
    let mut mc_rng = SimRng::substream(point_seed, MC_STREAM);
    let mut mc = Array2::zeros((k, d));
    for (m, (x, _)) in mc_set.iter().enumerate() {
        mc.row_mut(m).assign(&mmse_mc_escalating(
            x,
            &cov,
            &model,
            cfg.mc_trials,
            &mut mc_rng,
        )?);
    }

    let estimators = vec![
        EstimatorResult::new(
            "lmmse",
            mse_of(&fit.apply_rows(test_set.inputs()), &test_set)?,
            None,
        ),
        EstimatorResult::new(
            "lmmse_linear_model",
            mse_of(&formula.apply_rows(test_set.inputs()), &test_set)?,
            None,
        ),
        EstimatorResult::new(
            "dl",
            mse_of(&forward_rows(&network, test_set.inputs())?, &test_set)?,
            None,
        ),
        EstimatorResult::new("mmse_semianalytic", mse_of(&semi, &test_set)?, Some(j_mmse)),
        EstimatorResult::new("mmse_mc", mse_of(&mc, &mc_set)?, Some(j_mmse)),
    ];
    Ok(PointOutcome {
        estimators,
        network,
        train_report,
        train_set,
        test_set,
    })
}

/// The mismatch law implied by a covariance ratio `eta` around the deployed
/// covariance `σ²I`: `(training base covariance, mismatch)`.
///
/// `eta ≥ 1` trains on `h + ζ` with `Ω_ζ = (η−1)σ²I`; `eta < 1` trains on
/// `h_er ~ N(0, ησ²I)` while deployment adds `Ω_ζ = (1−η)σ²I`.
pub fn mismatch_for_eta(sigma2: f64, eta: f64, d: usize) -> Result<(CovarianceSpec, MismatchSpec)> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid("eta must be > 0"));
    }
    let truth = CovarianceSpec::diagonal(sigma2)?;
    Ok(if eta > 1.0 {
        (
            truth,
            MismatchSpec {
                case: MismatchCase::Broader,
                zeta_cov: CovarianceSpec::diagonal((eta - 1.0) * sigma2)?,
            },
        )
    } else if eta == 1.0 {
        (
            truth,
            MismatchSpec {
                case: MismatchCase::Broader,
                zeta_cov: CovarianceSpec::zero(d),
            },
        )
    } else {
        (
            CovarianceSpec::diagonal(eta * sigma2)?,
            MismatchSpec {
                case: MismatchCase::Narrower,
                zeta_cov: CovarianceSpec::diagonal((1.0 - eta) * sigma2)?,
            },
        )
    })
}

/// Mismatched statistics at one `(SNR, η)`: the network and one LMMSE
/// estimator use `R₁ = ησ²I` while test channels follow `σ²I`.
pub fn mismatch_point(
    cfg: &ExperimentConfig,
    snr_db: f64,
    eta: f64,
    point_seed: u64,
) -> Result<PointOutcome> {
    let d = cfg.d;
    let sigma2 = cfg.sigma2;
    let sigma_n2 = snr_db_to_noise_var(snr_db);
    let model = ObservationModel::linear(sigma_n2)?;
    let truth = CovarianceSpec::diagonal(sigma2)?;
    let assumed = CovarianceSpec::diagonal(eta * sigma2)?;
    let (base, mismatch) = mismatch_for_eta(sigma2, eta, d)?;
    let train_set = gen_mismatched_dataset(
        &base,
        d,
        &mismatch,
        &model,
        cfg.train_size,
        &mut SimRng::substream(point_seed, TRAIN_STREAM),
    )?;
    let test_set = gen_dataset(
        &truth,
        d,
        &model,
        cfg.test_size,
        &mut SimRng::substream(point_seed, TEST_STREAM),
    )?;

    let err = vec![(eta - 1.0) * sigma2; d];
    let j_ls = ls_mse_theory(d, sigma_n2);
    let j_lmmse = lmmse_mse_theory(&truth, d, sigma_n2)?;
    let j_lm_er = lm_er_mse_diag(d, sigma2, &err, sigma_n2, cfg.dim_factor)?;
    let j_dl_er = match mismatch.case {
        MismatchCase::Broader => Some(dl_er_mse_diag(d, sigma2, &err, sigma_n2)?),
        MismatchCase::Narrower => None,
    };

    let accurate = lmmse_matrix(&truth, d, sigma_n2, model.tau())?;
    let mismatched = lmmse_matrix(&assumed, d, sigma_n2, model.tau())?;
    let (network, train_report) = train_dl(cfg, cfg.width, &train_set, point_seed)?;
    let estimators = vec![
        EstimatorResult::new(
            "ls",
            mse_of(&(test_set.inputs() / model.tau()), &test_set)?,
            Some(j_ls),
        ),
        EstimatorResult::new(
            "lmmse_accurate",
            mse_of(&accurate.apply_rows(test_set.inputs()), &test_set)?,
            Some(j_lmmse),
        ),
        EstimatorResult::new(
            "lmmse_mismatched",
            mse_of(&mismatched.apply_rows(test_set.inputs()), &test_set)?,
            Some(j_lm_er),
        ),
        EstimatorResult::new(
            "dl_mismatched",
            mse_of(&forward_rows(&network, test_set.inputs())?, &test_set)?,
            j_dl_er,
        ),
    ];
    Ok(PointOutcome {
        estimators,
        network,
        train_report,
        train_set,
        test_set,
    })
}

/// A sweep point: its reported coordinate, an optional estimator-name suffix
/// separating sub-curves, and the job that evaluates it.
struct Point<'a> {
    sweep_var: f64,
    suffix: Option<String>,
    keep: &'a [&'a str],
    job: Box<dyn Fn(u64) -> Result<PointOutcome> + Sync + 'a>,
}

fn snr_suffix(snr_db: f64) -> Option<String> {
    Some(format!("@{}dB", fmt_sig12(snr_db)))
}

/// Seed of repetition `r`; repetition 0 uses the master seed itself.
fn replica_seed(master: u64, r: usize) -> u64 {
    if r == 0 {
        master
    } else {
        derive_seed(master, u64::MAX - r as u64)
    }
}

fn run_points(cfg: &ExperimentConfig, points: &[Point<'_>]) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(usize, usize)> = (0..cfg.seeds)
        .flat_map(|r| (0..points.len()).map(move |i| (r, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<Vec<EstimatorResult>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(r, i)| {
                let p = &points[i];
                let seed = derive_seed(replica_seed(cfg.seed, r), i as u64);
                (p.job)(seed)
                    .map(|o| o.estimators)
                    .map_err(|e| Error::AtSweepPoint {
                        point: p.sweep_var,
                        source: Box::new(e),
                    })
            })
            .collect()
    });

    // Jobs are replica-major, so point i of replica r sits at r * len + i.
    let mut per_point: Vec<Vec<Vec<EstimatorResult>>> = vec![Vec::new(); points.len()];
    for (k, outcome) in outcomes.into_iter().enumerate() {
        per_point[k % points.len()].push(outcome?);
    }
    let mut rows = Vec::new();
    for (p, reps) in points.iter().zip(per_point) {
        for (j, first) in reps[0].iter().enumerate() {
            if !p.keep.contains(&first.name.as_str()) {
                continue;
            }
            let mean = reps.iter().map(|rep| rep[j].empirical_mse).sum::<f64>() / reps.len() as f64;
            let name = match &p.suffix {
                Some(s) => format!("{}{s}", first.name),
                None => first.name.clone(),
            };
            rows.push(SweepRow::new(
                p.sweep_var,
                name,
                mean,
                first.theory_mse,
                cfg.seed,
            ));
        }
    }
    sort_rows(&mut rows);
    Ok(rows)
}

fn expect_kind(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if cfg.experiment != kind {
        return Err(Error::invalid(format!(
            "config is for `{}`, not `{kind}`",
            cfg.experiment
        )));
    }
    cfg.validate()
}

/// LS, LMMSE and DL against SNR on the linear model.
pub fn run_linear_snr(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    expect_kind(cfg, ExperimentKind::LinearSnr)?;
    let points: Vec<Point> = cfg
        .snr_db
        .iter()
        .map(|&snr| Point {
            sweep_var: snr,
            suffix: None,
            keep: &["ls", "lmmse", "dl"],
            job: Box::new(move |seed| linear_point(cfg, snr, cfg.width, cfg.train_size, seed)),
        })
        .collect();
    run_points(cfg, &points)
}

/// DL against hidden width at each configured SNR.
pub fn run_width_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    expect_kind(cfg, ExperimentKind::WidthSweep)?;
    let mut points = Vec::new();
    for &snr in &cfg.snr_db {
        for &w in &cfg.widths {
            points.push(Point {
                sweep_var: w as f64,
                suffix: snr_suffix(snr),
                keep: &["dl"],
                job: Box::new(move |seed| linear_point(cfg, snr, w, cfg.train_size, seed)),
            });
        }
    }
    run_points(cfg, &points)
}

/// DL and the closed-form affine fit against training-set size at each
/// configured SNR.
pub fn run_trainsize_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    expect_kind(cfg, ExperimentKind::TrainsizeSweep)?;
    let mut points = Vec::new();
    for &snr in &cfg.snr_db {
        for &n in &cfg.train_sizes {
            points.push(Point {
                sweep_var: n as f64,
                suffix: snr_suffix(snr),
                keep: &["dl", "affine_fit"],
                job: Box::new(move |seed| linear_point(cfg, snr, cfg.width, n, seed)),
            });
        }
    }
    run_points(cfg, &points)
}

/// LMMSE, DL and both MMSE oracles against SNR under Rapp distortion.
pub fn run_nonlinear_snr(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    expect_kind(cfg, ExperimentKind::NonlinearSnr)?;
    let points: Vec<Point> = cfg
        .snr_db
        .iter()
        .map(|&snr| Point {
            sweep_var: snr,
            suffix: None,
            keep: &[
                "lmmse",
                "lmmse_linear_model",
                "dl",
                "mmse_semianalytic",
                "mmse_mc",
            ],
            job: Box::new(move |seed| nonlinear_point(cfg, snr, seed)),
        })
        .collect();
    run_points(cfg, &points)
}

const MISMATCH_ROWS: &[&str] = &["ls", "lmmse_accurate", "lmmse_mismatched", "dl_mismatched"];

/// Mismatched statistics against SNR at fixed `eta`.
pub fn run_mismatch_snr(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    expect_kind(cfg, ExperimentKind::MismatchSnr)?;
    let eta = cfg.eta;
    let points: Vec<Point> = cfg
        .snr_db
        .iter()
        .map(|&snr| Point {
            sweep_var: snr,
            suffix: None,
            keep: MISMATCH_ROWS,
            job: Box::new(move |seed| mismatch_point(cfg, snr, eta, seed)),
        })
        .collect();
    run_points(cfg, &points)
}

/// Mismatched statistics against `eta` at each configured SNR.
pub fn run_mismatch_eta(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    expect_kind(cfg, ExperimentKind::MismatchEta)?;
    let mut points = Vec::new();
    for &snr in &cfg.snr_db {
        for &eta in &cfg.eta_grid {
            points.push(Point {
                sweep_var: eta,
                suffix: snr_suffix(snr),
                keep: MISMATCH_ROWS,
                job: Box::new(move |seed| mismatch_point(cfg, snr, eta, seed)),
            });
        }
    }
    run_points(cfg, &points)
}

/// Runs whichever experiment `cfg` names.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    match cfg.experiment {
        ExperimentKind::LinearSnr => run_linear_snr(cfg),
        ExperimentKind::WidthSweep => run_width_sweep(cfg),
        ExperimentKind::TrainsizeSweep => run_trainsize_sweep(cfg),
        ExperimentKind::NonlinearSnr => run_nonlinear_snr(cfg),
        ExperimentKind::MismatchSnr => run_mismatch_snr(cfg),
        ExperimentKind::MismatchEta => run_mismatch_eta(cfg),
    }
}

/// Runs the experiment, writes the CSV to `cfg.out` and the effective
/// config beside it.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let rows = run_experiment(cfg)?;
    write_results(&rows, &cfg.out)?;
    std::fs::write(cfg.echo_path(), cfg.to_text())?;
    Ok(rows)
}
