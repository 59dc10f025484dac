//! Classical channel estimators and their closed-form error formulas.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::channel_model::{CovarianceSpec, Distortion, ObservationModel, SampleSet};
use crate::error::{Error, Result};
use crate::linalg::{spd_solve, Cholesky};
use crate::rng::SimRng;

/// `x ↦ W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineEstimator {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl AffineEstimator {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::DimensionMismatch {
                expected: weight.nrows(),
                got: bias.len(),
            });
        }
        if !weight.iter().chain(bias.iter()).all(|v| v.is_finite()) {
            return Err(Error::invalid("affine estimator has non-finite entries"));
        }
        Ok(Self { weight, bias })
    }

    pub fn linear(weight: Array2<f64>) -> Self {
        let bias = Array1::zeros(weight.nrows());
        Self { weight, bias }
    }

    pub fn identity(d: usize) -> Self {
        Self::linear(Array2::eye(d))
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weight.dot(&x) + &self.bias
    }

    /// Applies the map to every row of `inputs`.
    pub fn apply_rows(&self, inputs: &Array2<f64>) -> Array2<f64> {
        inputs.dot(&self.weight.t()) + self.bias.view().insert_axis(Axis(0))
    }
}

/// Outcome of evaluating an estimator on a test set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseReport {
    pub empirical_mse: f64,
    pub theory_mse: Option<f64>,
    pub n_samples: usize,
}

impl MseReport {
    pub fn with_theory(mut self, theory: f64) -> Self {
        self.theory_mse = Some(theory);
        self
    }

    /// `|empirical / theory - 1|`, when a theory value is attached.
    pub fn relative_gap(&self) -> Option<f64> {
        self.theory_mse
            .map(|t| (self.empirical_mse / t - 1.0).abs())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau == 1.0 || tau == -1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("pilot must be +1 or -1, got {tau}")))
    }
}

fn check_noise(sigma_n2: f64) -> Result<()> {
    if sigma_n2 > 0.0 && sigma_n2.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "noise variance must be > 0, got {sigma_n2}"
        )))
    }
}

/// Least-squares estimate `x / τ`.
pub fn ls_estimate(x: ArrayView1<f64>, tau: f64) -> Array1<f64> {
    x.mapv(|v| v / tau)
}

/// `J_LS = d σ_n²`.
pub fn ls_mse_theory(d: usize, sigma_n2: f64) -> f64 {
    d as f64 * sigma_n2
}

fn shifted(cov: &CovarianceSpec, d: usize, sigma_n2: f64) -> Result<(Array2<f64>, Array2<f64>)> {
    let r = cov.matrix(d)?;
    let mut a = r.clone();
    a.diag_mut().mapv_inplace(|v| v + sigma_n2);
    Ok((r, a))
}

/// `τ R (R + σ_n² I)⁻¹ x`.
pub fn lmmse_estimate(
    x: ArrayView1<f64>,
    cov: &CovarianceSpec,
    sigma_n2: f64,
    tau: f64,
) -> Result<Array1<f64>> {
    check_tau(tau)?;
    check_noise(sigma_n2)?;
    let (r, a) = shifted(cov, x.len(), sigma_n2)?;
    let y = spd_solve(a.view(), x)?;
    Ok(r.dot(&y) * tau)
}

/// The LMMSE map as a reusable linear estimator.
///
/// `R` and `(R + σ_n² I)⁻¹` commute, so the weight is obtained by solving
/// against the columns of `R`.
pub fn lmmse_matrix(
    cov: &CovarianceSpec,
    d: usize,
    sigma_n2: f64,
    tau: f64,
) -> Result<AffineEstimator> {
    check_tau(tau)?;
    check_noise(sigma_n2)?;
    let (r, a) = shifted(cov, d, sigma_n2)?;
    let chol = Cholesky::new(a.view())?;
    let mut w = chol.solve_columns(r.view());
    // Symmetrize away round-off.
    w = (&w + &w.t()) * (0.5 * tau);
    Ok(AffineEstimator::linear(w))
}

/// `J_LMMSE = tr{R (I + R/σ_n²)⁻¹} = σ_n² tr{R (R + σ_n² I)⁻¹}`.
pub fn lmmse_mse_theory(cov: &CovarianceSpec, d: usize, sigma_n2: f64) -> Result<f64> {
    if let CovarianceSpec::Diagonal { sigma2 } = cov {
        check_noise(sigma_n2)?;
        cov.validate(d)?;
        return Ok(d as f64 * sigma2 * sigma_n2 / (sigma2 + sigma_n2));
    }
    let w = lmmse_matrix(cov, d, sigma_n2, 1.0)?;
    Ok(sigma_n2 * w.weight.diag().sum())
}

/// LMMSE estimate built from an assumed covariance `R₁` in place of `R`.
pub fn lmmse_mismatched_estimate(
    x: ArrayView1<f64>,
    cov_assumed: &CovarianceSpec,
    sigma_n2: f64,
    tau: f64,
) -> Result<Array1<f64>> {
    lmmse_estimate(x, cov_assumed, sigma_n2, tau)
}

/// Whether the mismatched-LMMSE diagonal formula keeps the extra factor `d`
/// inside its sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DimFactor {
    #[default]
    AsPrinted,
    Omitted,
}

fn mismatch_excess(sigma2: f64, err: f64, sigma_n2: f64) -> f64 {
    let s4 = sigma_n2 * sigma_n2;
    err * err * s4 / ((sigma2 + err + sigma_n2).powi(2) * (sigma2 + sigma_n2))
}

fn check_diag_args(d: usize, sigma2: f64, errs: &[f64], sigma_n2: f64) -> Result<()> {
    if errs.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: errs.len(),
        });
    }
    check_noise(sigma_n2)?;
    CovarianceSpec::diagonal(sigma2)?;
    if let Some(e) = errs.iter().find(|e| e.is_nan() || sigma2 + **e <= 0.0) {
        return Err(Error::invalid(format!(
            "error variance {e} makes the assumed covariance non-positive"
        )));
    }
    Ok(())
}

/// Diagonal-case MSE of the LMMSE estimator run with `R₁ = σ²I + Ω`,
/// `Ω = diag(σ_e,i²)`:
///
/// `J_LMMSE + Σᵢ σ_e,i⁴ σ_n⁴ d / ((σ² + σ_e,i² + σ_n²)² (σ² + σ_n²))`.
///
/// Negative `σ_e,i²` (an under-estimated covariance) are allowed as long as
/// `σ² + σ_e,i² > 0`.
pub fn lm_er_mse_diag(
    d: usize,
    sigma2: f64,
    sigma_e2: &[f64],
    sigma_n2: f64,
    factor: DimFactor,
) -> Result<f64> {
    check_diag_args(d, sigma2, sigma_e2, sigma_n2)?;
    let scale = match factor {
        DimFactor::AsPrinted => d as f64,
        DimFactor::Omitted => 1.0,
    };
    let base = d as f64 * sigma2 * sigma_n2 / (sigma2 + sigma_n2);
    Ok(base
        + sigma_e2
            .iter()
            .map(|&e| scale * mismatch_excess(sigma2, e, sigma_n2))
            .sum::<f64>())
}

/// `(R + Ω_ζ)(R + Ω_ζ + σ_n² I)⁻¹ τ x`: the estimator a network trained on
/// broader-than-real channels converges to.
pub fn mm_er_estimate(
    x: ArrayView1<f64>,
    cov: &CovarianceSpec,
    zeta_cov: &CovarianceSpec,
    sigma_n2: f64,
    tau: f64,
) -> Result<Array1<f64>> {
    let total = cov.plus(zeta_cov, x.len())?;
    lmmse_estimate(x, &total, sigma_n2, tau)
}

/// Diagonal-case MSE of the estimator trained on broader channel data:
///
/// `J_LMMSE + Σᵢ σ_ζ,i⁴ σ_n⁴ / ((σ² + σ_ζ,i² + σ_n²)² (σ² + σ_n²))`.
pub fn dl_er_mse_diag(d: usize, sigma2: f64, sigma_zeta2: &[f64], sigma_n2: f64) -> Result<f64> {
    check_diag_args(d, sigma2, sigma_zeta2, sigma_n2)?;
    let base = d as f64 * sigma2 * sigma_n2 / (sigma2 + sigma_n2);
    Ok(base
        + sigma_zeta2
            .iter()
            .map(|&z| mismatch_excess(sigma2, z, sigma_n2))
            .sum::<f64>())
}

fn rapp_inverse(x: ArrayView1<f64>, model: &ObservationModel) -> Result<Array1<f64>> {
    match model.distortion() {
        Distortion::Linear => Ok(x.to_owned()),
        Distortion::Rapp(p) => x.iter().map(|&v| p.invert(v)).collect(),
    }
}

/// Exact `E{h | x}` under the Rapp model.
///
/// The Rapp curve is strictly increasing, so `u = g⁻¹(x)` recovers the
/// undistorted observation and `E{h|x} = E{h|u}`, which is the LMMSE map
/// applied to `u`.
pub fn mmse_rapp_semianalytic(
    x: ArrayView1<f64>,
    cov: &CovarianceSpec,
    model: &ObservationModel,
) -> Result<Array1<f64>> {
    if !matches!(model.distortion(), Distortion::Rapp(_)) {
        return Err(Error::invalid("semi-analytic MMSE needs a Rapp model"));
    }
    let u = rapp_inverse(x, model)?;
    lmmse_estimate(u.view(), cov, model.sigma_n2(), model.tau())
}

/// Smallest accepted effective sample size for importance sampling.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 50.0;

/// Self-normalized importance-sampling estimate of `E{h | x}`.
///
/// Draws `h⁽ᵗ⁾ ~ N(0, R)` and weights each by the Gaussian likelihood of the
/// pre-distortion residual `g⁻¹(x) − τ h⁽ᵗ⁾`. The Jacobian of `g⁻¹` does not
/// depend on `h`, so it cancels in the normalization.
pub fn mmse_monte_carlo(
    x: ArrayView1<f64>,
    cov: &CovarianceSpec,
    model: &ObservationModel,
    trials: usize,
    rng: &mut SimRng,
) -> Result<Array1<f64>> {
    if trials < 1000 {
        return Err(Error::invalid(format!(
            "Monte Carlo MMSE needs at least 1000 trials, got {trials}"
        )));
    }
    let d = x.len();
    let sampler = crate::channel_model::ChannelSampler::new(cov, d)?;
    let u = rapp_inverse(x, model)?;
    let tau = model.tau();
    let inv_two_var = 0.5 / model.sigma_n2();

    // Running log-sum-exp: all accumulators are scaled by exp(-max_lw).
    let mut max_lw = f64::NEG_INFINITY;
    let mut sum_w = 0.0;
    let mut sum_w2 = 0.0;
    let mut acc = Array1::<f64>::zeros(d);
    for _ in 0..trials {
        let h = sampler.sample(rng);
        let dist2: f64 = u
            .iter()
            .zip(h.iter())
            .map(|(ui, hi)| (ui - tau * hi).powi(2))
            .sum();
        let lw = -dist2 * inv_two_var;
        if lw > max_lw {
            let shrink = (max_lw - lw).exp();
            sum_w *= shrink;
            sum_w2 *= shrink * shrink;
            acc *= shrink;
            max_lw = lw;
        }
        let w = (lw - max_lw).exp();
        sum_w += w;
        sum_w2 += w * w;
        acc.scaled_add(w, &h);
    }
    let ess = sum_w * sum_w / sum_w2;
    if ess.is_nan() || ess < MIN_EFFECTIVE_SAMPLES {
        return Err(Error::DegenerateWeights { ess });
    }
    Ok(acc / sum_w)
}

/// `(1/|Z|) Σ ‖predict(x_m) − h_m‖²`.
pub fn empirical_mse<F>(predict: F, test: &SampleSet) -> Result<MseReport>
where
    F: Fn(ArrayView1<f64>) -> Array1<f64>,
{
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let mut total = 0.0;
    for (x, h) in test.iter() {
        let est = predict(x);
        if est.len() != h.len() {
            return Err(Error::DimensionMismatch {
                expected: h.len(),
                got: est.len(),
            });
        }
        total += est
            .iter()
            .zip(h.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
    }
    Ok(MseReport {
        empirical_mse: total / test.len() as f64,
        theory_mse: None,
        n_samples: test.len(),
    })
}

/// Same as [`empirical_mse`] for predictions already stacked row-wise.
pub fn empirical_mse_rows(predictions: &Array2<f64>, test: &SampleSet) -> Result<MseReport> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    if predictions.dim() != test.targets().dim() {
        return Err(Error::DimensionMismatch {
            expected: test.len(),
            got: predictions.nrows(),
        });
    }
    let total: f64 = predictions
        .iter()
        .zip(test.targets().iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(MseReport {
        empirical_mse: total / test.len() as f64,
        theory_mse: None,
        n_samples: test.len(),
    })
}
