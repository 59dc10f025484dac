//! Channel, noise and observation generation.
//!
//! The received pilot block is `x = g(τ h + n)` where `h ~ N(0, R)`,
//! `n ~ N(0, σ_n² I)` and `g` is either the identity or the element-wise Rapp
//! saturation curve. All signals are real-valued.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::linalg::psd_factor;
use crate::rng::SimRng;

/// Covariance of a zero-mean Gaussian vector.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceSpec {
    /// `σ² I` of whatever dimension the caller uses.
    Diagonal { sigma2: f64 },
    /// Explicit symmetric PSD matrix.
    Full(Array2<f64>),
}

impl CovarianceSpec {
    pub fn diagonal(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!(
                "diagonal covariance needs sigma2 > 0, got {sigma2}"
            )));
        }
        Ok(Self::Diagonal { sigma2 })
    }

    pub fn full(matrix: Array2<f64>) -> Result<Self> {
        psd_factor(matrix.view())?;
        Ok(Self::Full(matrix))
    }

    /// The all-zero `d × d` covariance, used for "no error" cases.
    pub fn zero(d: usize) -> Self {
        Self::Full(Array2::zeros((d, d)))
    }

    /// Checks the invariants for use at dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            Self::Diagonal { sigma2 } => {
                Self::diagonal(*sigma2)?;
            }
            Self::Full(m) => {
                if m.nrows() != d || m.ncols() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: m.nrows(),
                    });
                }
                psd_factor(m.view())?;
            }
        }
        Ok(())
    }

    pub fn matrix(&self, d: usize) -> Result<Array2<f64>> {
        self.validate(d)?;
        Ok(match self {
            Self::Diagonal { sigma2 } => Array2::eye(d) * *sigma2,
            Self::Full(m) => m.clone(),
        })
    }

    pub fn trace(&self, d: usize) -> Result<f64> {
        Ok(self.matrix(d)?.diag().sum())
    }

    /// Covariance of the sum of two independent vectors.
    pub fn plus(&self, other: &CovarianceSpec, d: usize) -> Result<CovarianceSpec> {
        match (self, other) {
            (Self::Diagonal { sigma2: a }, Self::Diagonal { sigma2: b }) => {
                Ok(Self::Diagonal { sigma2: a + b })
            }
            _ => Ok(Self::Full(self.matrix(d)? + other.matrix(d)?)),
        }
    }
}

/// Parameters of the Rapp solid-state amplifier curve
/// `g(u) = u (1 + (u / x_sat)^{2ω})^{-1/(2ω)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RappParams {
    pub x_sat: f64,
    pub omega: f64,
}

const RAPP_BRACKET: f64 = 1e6;
const RAPP_RESIDUAL_TOL: f64 = 1e-12;
const RAPP_MAX_ITER: usize = 200;

impl RappParams {
    pub fn new(x_sat: f64, omega: f64) -> Result<Self> {
        if !(x_sat > 0.0 && x_sat.is_finite()) {
            return Err(Error::invalid(format!("x_sat must be > 0, got {x_sat}")));
        }
        if !(omega >= 1.0 && omega.is_finite()) {
            return Err(Error::invalid(format!("omega must be >= 1, got {omega}")));
        }
        Ok(Self { x_sat, omega })
    }

    pub fn apply(&self, u: f64) -> f64 {
        let two_w = 2.0 * self.omega;
        let r = u.abs() / self.x_sat;
        if r <= 1.0 {
            u * (1.0 + r.powf(two_w)).powf(-1.0 / two_w)
        } else {
            // Same expression rearranged so large |u| cannot overflow.
            u.signum() * self.x_sat * (1.0 + r.powf(-two_w)).powf(-1.0 / two_w)
        }
    }

    /// `g'(u) = (1 + (u/x_sat)^{2ω})^{-1/(2ω) - 1}`.
    pub fn derivative(&self, u: f64) -> f64 {
        let two_w = 2.0 * self.omega;
        let r = u.abs() / self.x_sat;
        if r <= 1.0 {
            (1.0 + r.powf(two_w)).powf(-1.0 / two_w - 1.0)
        } else {
            // (1 + r^{2ω})^{-1/(2ω)-1} = r^{-1-2ω} (1 + r^{-2ω})^{-1/(2ω)-1}
            r.powf(-1.0 - two_w) * (1.0 + r.powf(-two_w)).powf(-1.0 / two_w - 1.0)
        }
    }

    /// Solves `g(u) = x` by bisection over `±x_sat·10⁶` followed by a Newton
    /// polish, to an absolute residual of `1e-12`.
    pub fn invert(&self, x: f64) -> Result<f64> {
        if x.is_nan() || x.abs() >= self.x_sat {
            return Err(Error::OutsideDistortionRange);
        }
        let mut lo = -self.x_sat * RAPP_BRACKET;
        let mut hi = self.x_sat * RAPP_BRACKET;
        if x <= self.apply(lo) || x >= self.apply(hi) {
            return Err(Error::OutsideDistortionRange);
        }
        let mut u = 0.5 * (lo + hi);
        for _ in 0..RAPP_MAX_ITER {
            let residual = self.apply(u) - x;
            if residual.abs() <= RAPP_RESIDUAL_TOL {
                return Ok(u);
            }
            if residual > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            // Newton step when it stays inside the bracket, bisection otherwise.
            let slope = self.derivative(u);
            let newton = u - residual / slope;
            u = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * u.abs().max(1.0) {
                let residual = self.apply(u) - x;
                return if residual.abs() <= RAPP_RESIDUAL_TOL {
                    Ok(u)
                } else {
                    Err(Error::InversionFailed)
                };
            }
        }
        Err(Error::InversionFailed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distortion {
    Linear,
    Rapp(RappParams),
}

/// Pilot, noise level and distortion that turn a channel into an observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationModel {
    tau: f64,
    sigma_n2: f64,
    distortion: Distortion,
}

impl ObservationModel {
    pub fn new(tau: f64, sigma_n2: f64, distortion: Distortion) -> Result<Self> {
        if tau != 1.0 && tau != -1.0 {
            return Err(Error::invalid(format!("pilot must be +1 or -1, got {tau}")));
        }
        if !(sigma_n2 > 0.0 && sigma_n2.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be > 0, got {sigma_n2}"
            )));
        }
        if let Distortion::Rapp(p) = distortion {
            RappParams::new(p.x_sat, p.omega)?;
        }
        Ok(Self {
            tau,
            sigma_n2,
            distortion,
        })
    }

    pub fn linear(sigma_n2: f64) -> Result<Self> {
        Self::new(1.0, sigma_n2, Distortion::Linear)
    }

    pub fn rapp(sigma_n2: f64, x_sat: f64, omega: f64) -> Result<Self> {
        Self::new(
            1.0,
            sigma_n2,
            Distortion::Rapp(RappParams::new(x_sat, omega)?),
        )
    }

    pub fn with_tau(self, tau: f64) -> Result<Self> {
        Self::new(tau, self.sigma_n2, self.distortion)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn sigma_n2(&self) -> f64 {
        self.sigma_n2
    }

    pub fn distortion(&self) -> Distortion {
        self.distortion
    }

    /// Maps a noisy pre-distortion vector through the distortion curve.
    pub fn distort(&self, u: &mut Array1<f64>) {
        if let Distortion::Rapp(p) = self.distortion {
            u.mapv_inplace(|v| p.apply(v));
        }
    }
}

/// Noise variance for an SNR in dB under the `SNR = 1/σ_n²` convention.
pub fn snr_db_to_noise_var(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Input/target pairs `(x_m, h_m)`, stored one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    inputs: Array2<f64>,
    targets: Array2<f64>,
}

impl SampleSet {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.ncols() == 0 {
            return Err(Error::invalid("sample dimension must be positive"));
        }
        if inputs.dim() != targets.dim() {
            return Err(Error::DimensionMismatch {
                expected: inputs.ncols(),
                got: targets.ncols(),
            });
        }
        Ok(Self { inputs, targets })
    }

    pub fn from_pairs(dim: usize, pairs: &[(Array1<f64>, Array1<f64>)]) -> Result<Self> {
        let mut inputs = Array2::zeros((pairs.len(), dim));
        let mut targets = Array2::zeros((pairs.len(), dim));
        for (m, (x, h)) in pairs.iter().enumerate() {
            if x.len() != dim || h.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.len().max(h.len()),
                });
            }
            inputs.row_mut(m).assign(x);
            targets.row_mut(m).assign(h);
        }
        Self::new(inputs, targets)
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }

    pub fn pair(&self, m: usize) -> (ArrayView1<'_, f64>, ArrayView1<'_, f64>) {
        (self.inputs.row(m), self.targets.row(m))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ArrayView1<'_, f64>, ArrayView1<'_, f64>)> {
        self.inputs.rows().into_iter().zip(self.targets.rows())
    }

    /// Rows `indices` as a new set, in the given order.
    pub fn select(&self, indices: &[usize]) -> SampleSet {
        SampleSet {
            inputs: self.inputs.select(Axis(0), indices),
            targets: self.targets.select(Axis(0), indices),
        }
    }

    /// Little-endian dump of every value, inputs first.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.inputs
            .iter()
            .chain(self.targets.iter())
            .flat_map(|v| v.to_le_bytes())
            .collect()
    }
}

/// Draws `h ~ N(0, R)` repeatedly from one precomputed factor.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    dim: usize,
    factor: Factor,
}

#[derive(Debug, Clone)]
enum Factor {
    Scalar(f64),
    Lower(Array2<f64>),
}

impl ChannelSampler {
    pub fn new(cov: &CovarianceSpec, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        cov.validate(d)?;
        let factor = match cov {
            CovarianceSpec::Diagonal { sigma2 } => Factor::Scalar(sigma2.sqrt()),
            CovarianceSpec::Full(m) => Factor::Lower(psd_factor(m.view())?),
        };
        Ok(Self { dim: d, factor })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&self, rng: &mut SimRng) -> Array1<f64> {
        let mut z = Array1::zeros(self.dim);
        rng.fill_gaussian(z.as_slice_mut().expect("contiguous"));
        match &self.factor {
            Factor::Scalar(s) => z * *s,
            Factor::Lower(l) => l.dot(&z),
        }
    }
}

pub fn sample_channel(cov: &CovarianceSpec, d: usize, rng: &mut SimRng) -> Result<Array1<f64>> {
    Ok(ChannelSampler::new(cov, d)?.sample(rng))
}

/// `x = g(τ h + n)` with fresh noise from `rng`.
pub fn observe(h: ArrayView1<f64>, model: &ObservationModel, rng: &mut SimRng) -> Array1<f64> {
    let sigma_n = model.sigma_n2().sqrt();
    let mut x = h.to_owned() * model.tau();
    for v in x.iter_mut() {
        *v += sigma_n * rng.gaussian();
    }
    model.distort(&mut x);
    x
}

pub fn gen_dataset(
    cov: &CovarianceSpec,
    d: usize,
    model: &ObservationModel,
    size: usize,
    rng: &mut SimRng,
) -> Result<SampleSet> {
    if size == 0 {
        return Err(Error::invalid("dataset size must be >= 1"));
    }
    let sampler = ChannelSampler::new(cov, d)?;
    let mut inputs = Array2::zeros((size, d));
    let mut targets = Array2::zeros((size, d));
    for m in 0..size {
        let h = sampler.sample(rng);
        let x = observe(h.view(), model, rng);
        inputs.row_mut(m).assign(&x);
        targets.row_mut(m).assign(&h);
    }
    SampleSet::new(inputs, targets)
}

/// Which way the training channels differ from the deployed ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MismatchCase {
    /// Training channels `h_er = h + ζ` spread wider than deployment.
    Broader,
    /// Deployment channels `h = h_er + ζ` spread wider than training.
    Narrower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MismatchSpec {
    pub case: MismatchCase,
    /// Covariance `Ω_ζ` of the error vector `ζ`.
    pub zeta_cov: CovarianceSpec,
}

impl MismatchSpec {
    /// Covariance of the channels the estimator actually faces. For
    /// [`MismatchCase::Narrower`] the supplied `cov` is the training one and
    /// the deployment channel carries the extra `Ω_ζ`.
    pub fn deployment_covariance(&self, cov: &CovarianceSpec, d: usize) -> Result<CovarianceSpec> {
        match self.case {
            MismatchCase::Broader => Ok(cov.clone()),
            MismatchCase::Narrower => cov.plus(&self.zeta_cov, d),
        }
    }

    /// Covariance of the training channels `h_er`.
    pub fn training_covariance(&self, cov: &CovarianceSpec, d: usize) -> Result<CovarianceSpec> {
        match self.case {
            MismatchCase::Broader => cov.plus(&self.zeta_cov, d),
            MismatchCase::Narrower => Ok(cov.clone()),
        }
    }
}

/// Training pairs `(x_er, h_er)` drawn under a mismatched channel law.
///
/// `Broader`: `h ~ N(0, cov)`, `ζ ~ N(0, Ω_ζ)`, `h_er = h + ζ`.
/// `Narrower`: `h_er ~ N(0, cov)` directly; see
/// [`MismatchSpec::deployment_covariance`] for the matching test channels.
pub fn gen_mismatched_dataset(
    cov: &CovarianceSpec,
    d: usize,
    mismatch: &MismatchSpec,
    model: &ObservationModel,
    size: usize,
    rng: &mut SimRng,
) -> Result<SampleSet> {
    if model.distortion() != Distortion::Linear {
        return Err(Error::MismatchRequiresLinear);
    }
    if size == 0 {
        return Err(Error::invalid("dataset size must be >= 1"));
    }
    mismatch.zeta_cov.validate(d)?;
    let base = ChannelSampler::new(cov, d)?;
    let zeta = match mismatch.case {
        MismatchCase::Broader => Some(ChannelSampler::new(&mismatch.zeta_cov, d)?),
        MismatchCase::Narrower => None,
    };
    let mut inputs = Array2::zeros((size, d));
    let mut targets = Array2::zeros((size, d));
    for m in 0..size {
        let mut h_er = base.sample(rng);
        if let Some(z) = &zeta {
            h_er += &z.sample(rng);
        }
        let x_er = observe(h_er.view(), model, rng);
        inputs.row_mut(m).assign(&x_er);
        targets.row_mut(m).assign(&h_er);
    }
    SampleSet::new(inputs, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_diagonal_rejected() {
        assert!(CovarianceSpec::diagonal(0.0).is_err());
        assert!(CovarianceSpec::diagonal(-1.0).is_err());
        let mut rng = SimRng::seed_from_u64(0);
        let bad = CovarianceSpec::Diagonal { sigma2: 0.0 };
        assert!(sample_channel(&bad, 2, &mut rng).is_err());
    }

    #[test]
    fn non_psd_full_rejected() {
        let m = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            CovarianceSpec::full(m.clone()),
            Err(Error::CovarianceNotPsd)
        ));
        let mut rng = SimRng::seed_from_u64(0);
        let err = sample_channel(&CovarianceSpec::Full(m), 2, &mut rng).unwrap_err();
        assert_eq!(err.to_string(), "covariance not PSD");
    }

    #[test]
    fn full_dimension_checked() {
        let cov = CovarianceSpec::full(Array2::eye(3)).unwrap();
        assert!(matches!(
            ChannelSampler::new(&cov, 2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn diagonal_moments() {
        let cov = CovarianceSpec::diagonal(1.0).unwrap();
        let sampler = ChannelSampler::new(&cov, 2).unwrap();
        let mut rng = SimRng::seed_from_u64(1);
        let n = 1_000_000;
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let h = sampler.sample(&mut rng);
            for i in 0..2 {
                sum[i] += h[i];
                sq[i] += h[i] * h[i];
            }
        }
        for i in 0..2 {
            let mean = sum[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.01, "mean {mean}");
            assert!((var - 1.0).abs() < 0.02, "var {var}");
        }
    }

    #[test]
    fn full_covariance_moments() {
        let r = array![[1.0, 0.5], [0.5, 1.0]];
        let cov = CovarianceSpec::full(r.clone()).unwrap();
        let sampler = ChannelSampler::new(&cov, 2).unwrap();
        let mut rng = SimRng::seed_from_u64(2);
        let n = 1_000_000;
        let mut acc = Array2::<f64>::zeros((2, 2));
        for _ in 0..n {
            let h = sampler.sample(&mut rng);
            for i in 0..2 {
                for j in 0..2 {
                    acc[[i, j]] += h[i] * h[j];
                }
            }
        }
        acc /= n as f64;
        for (e, t) in acc.iter().zip(r.iter()) {
            assert!((e - t).abs() <= 0.02 * t.abs(), "{e} vs {t}");
        }
    }

    #[test]
    fn observe_noiseless_identity() {
        let model = ObservationModel::linear(1e-300).unwrap();
        let mut rng = SimRng::seed_from_u64(0);
        let h = array![0.3, -0.7];
        let x = observe(h.view(), &model, &mut rng);
        assert!((x[0] - 0.3).abs() < 1e-140);
        assert!((x[1] + 0.7).abs() < 1e-140);
    }

    #[test]
    fn rapp_substitution() {
        let p = RappParams::new(1.5, 1.0).unwrap();
        assert!((p.apply(1.5) - 1.5 / 2f64.sqrt()).abs() < 1e-15);
        assert!((p.apply(1.5) - 1.060_660_171_779_821_2).abs() < 1e-12);
    }

    #[test]
    fn rapp_saturation_free_limit() {
        let p = RappParams::new(1e6, 1.0).unwrap();
        for u in [-3.0, -0.2, 0.0, 0.7, 4.0] {
            let x = p.apply(u);
            assert!((x - u).abs() <= 1e-9 * u.abs().max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn rapp_invariants_rejected() {
        assert!(RappParams::new(0.0, 1.0).is_err());
        assert!(RappParams::new(1.5, 0.5).is_err());
        assert!(ObservationModel::new(0.5, 1.0, Distortion::Linear).is_err());
        assert!(ObservationModel::linear(0.0).is_err());
    }

    #[test]
    fn rapp_monotone_and_bounded_on_grid() {
        for &omega in &[1.0, 2.0, 3.5] {
            let p = RappParams::new(1.5, omega).unwrap();
            let mut prev = f64::NEG_INFINITY;
            let n = 20_000;
            for k in 0..=n {
                let u = -50.0 + 100.0 * k as f64 / n as f64;
                let x = p.apply(u);
                assert!(x > prev, "not increasing at u={u}");
                assert!(x.abs() < p.x_sat);
                prev = x;
            }
            assert!(p.apply(1e300).abs() <= p.x_sat);
        }
    }

    #[test]
    fn rapp_inverse_matches_closed_form() {
        // For the Rapp curve u = x (1 - (x/x_sat)^{2ω})^{-1/(2ω)}.
        for &omega in &[1.0, 2.0, 4.0] {
            let p = RappParams::new(1.5, omega).unwrap();
            for k in -99..=99 {
                let x = 1.5 * k as f64 / 100.0;
                let two_w = 2.0 * omega;
                let closed = x * (1.0 - (x.abs() / 1.5).powf(two_w)).powf(-1.0 / two_w);
                let u = p.invert(x).unwrap();
                assert!((p.apply(u) - x).abs() <= 1e-12);
                assert!((u - closed).abs() <= 1e-9 * closed.abs().max(1.0));
            }
        }
        let p = RappParams::new(1.5, 1.0).unwrap();
        let x = 1.5 / 2f64.sqrt();
        assert!((p.invert(x).unwrap() - 1.5).abs() < 1e-11);
        assert!(matches!(p.invert(1.5), Err(Error::OutsideDistortionRange)));
        assert!(matches!(p.invert(-2.0), Err(Error::OutsideDistortionRange)));
    }

    #[test]
    fn dataset_sizes_and_determinism() {
        let cov = CovarianceSpec::diagonal(1.0).unwrap();
        let model = ObservationModel::linear(0.1).unwrap();
        let a = gen_dataset(&cov, 2, &model, 20_000, &mut SimRng::seed_from_u64(9)).unwrap();
        let b = gen_dataset(&cov, 2, &model, 20_000, &mut SimRng::seed_from_u64(9)).unwrap();
        assert_eq!(a.len(), 20_000);
        assert_eq!(a.to_bytes(), b.to_bytes());
        let one = gen_dataset(&cov, 2, &model, 1, &mut SimRng::seed_from_u64(9)).unwrap();
        assert_eq!(one.len(), 1);
        assert!(gen_dataset(&cov, 2, &model, 0, &mut SimRng::seed_from_u64(9)).is_err());
    }

    #[test]
    fn linear_noise_covariance() {
        let cov = CovarianceSpec::diagonal(1.0).unwrap();
        let sigma_n2 = 0.3;
        let model = ObservationModel::linear(sigma_n2)
            .unwrap()
            .with_tau(-1.0)
            .unwrap();
        let n = 200_000;
        let set = gen_dataset(&cov, 2, &model, n, &mut SimRng::seed_from_u64(4)).unwrap();
        let noise = set.inputs() + set.targets(); // τ = -1
        let c = noise.t().dot(&noise) / n as f64;
        // Standard error of a sample variance is σ² sqrt(2/n); of a covariance σ²/sqrt(n).
        let se_var = sigma_n2 * (2.0 / n as f64).sqrt();
        let se_cov = sigma_n2 / (n as f64).sqrt();
        assert!((c[[0, 0]] - sigma_n2).abs() < 3.0 * se_var);
        assert!((c[[1, 1]] - sigma_n2).abs() < 3.0 * se_var);
        assert!(c[[0, 1]].abs() < 3.0 * se_cov);
    }

    fn channel_variance(set: &SampleSet) -> f64 {
        set.targets().iter().map(|v| v * v).sum::<f64>() / set.targets().len() as f64
    }

    #[test]
    fn broader_case_variance() {
        let cov = CovarianceSpec::diagonal(1.0).unwrap();
        let mismatch = MismatchSpec {
            case: MismatchCase::Broader,
            zeta_cov: CovarianceSpec::diagonal(1.0).unwrap(), // (η-1)σ² with η = 2
        };
        let model = ObservationModel::linear(1.0).unwrap();
        let set = gen_mismatched_dataset(
            &cov,
            1,
            &mismatch,
            &model,
            1_000_000,
            &mut SimRng::seed_from_u64(5),
        )
        .unwrap();
        let v = channel_variance(&set);
        assert!((v - 2.0).abs() < 0.04, "{v}");
    }

    #[test]
    fn narrower_case_variance() {
        let cov = CovarianceSpec::diagonal(0.2).unwrap();
        let mismatch = MismatchSpec {
            case: MismatchCase::Narrower,
            zeta_cov: CovarianceSpec::diagonal(0.8).unwrap(),
        };
        let model = ObservationModel::linear(0.1).unwrap();
        let set = gen_mismatched_dataset(
            &cov,
            1,
            &mismatch,
            &model,
            1_000_000,
            &mut SimRng::seed_from_u64(6),
        )
        .unwrap();
        let v = channel_variance(&set);
        assert!((v - 0.2).abs() < 0.004, "{v}");
        let deploy = mismatch.deployment_covariance(&cov, 1).unwrap();
        assert_eq!(deploy, CovarianceSpec::Diagonal { sigma2: 1.0 });
    }

    #[test]
    fn zero_error_matches_matched_generator() {
        let cov = CovarianceSpec::diagonal(1.0).unwrap();
        let model = ObservationModel::linear(0.5).unwrap();
        let mismatch = MismatchSpec {
            case: MismatchCase::Narrower,
            zeta_cov: CovarianceSpec::zero(2),
        };
        let a = gen_mismatched_dataset(
            &cov,
            2,
            &mismatch,
            &model,
            500,
            &mut SimRng::seed_from_u64(8),
        )
        .unwrap();
        let b = gen_dataset(&cov, 2, &model, 500, &mut SimRng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);

        // Broader case with Ω_ζ = 0 draws an extra (zero-scaled) vector, so
        // compare moments rather than bytes.
        let broad = MismatchSpec {
            case: MismatchCase::Broader,
            zeta_cov: CovarianceSpec::zero(1),
        };
        let set = gen_mismatched_dataset(
            &cov,
            1,
            &broad,
            &model,
            400_000,
            &mut SimRng::seed_from_u64(8),
        )
        .unwrap();
        assert!((channel_variance(&set) - 1.0).abs() < 0.01);
    }

    #[test]
    fn mismatch_rejects_rapp() {
        let cov = CovarianceSpec::diagonal(1.0).unwrap();
        let model = ObservationModel::rapp(0.1, 1.5, 1.0).unwrap();
        let mismatch = MismatchSpec {
            case: MismatchCase::Broader,
            zeta_cov: CovarianceSpec::diagonal(1.0).unwrap(),
        };
        let err = gen_mismatched_dataset(
            &cov,
            1,
            &mismatch,
            &model,
            10,
            &mut SimRng::seed_from_u64(0),
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "mismatch requires linear model");
    }
}
