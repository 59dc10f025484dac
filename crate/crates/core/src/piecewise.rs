//! Activation patterns and the affine map a ReLU network reduces to on each
//! linear region.
//!
//! Regions are identified purely by pattern equality. Nothing here builds
//! polytopes, and every region count is a sampled lower bound.

use std::collections::HashMap;
use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::channel_model::SampleSet;
use crate::error::{Error, Result};
use crate::format::fmt_sig12;
use crate::relu_net::MlpParams;

/// One bit per hidden neuron, layer by layer; a bit is set iff the neuron's
/// pre-activation is strictly positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivationPattern {
    words: Vec<u64>,
    len: usize,
}

impl ActivationPattern {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut p = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            p.set(i, b);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, on: bool) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if on {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_active(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// FNV-1a over the packed words and the length. Stable across runs.
    pub fn hash64(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: [u8; 8]| {
            for b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed((self.len as u64).to_le_bytes());
        for w in &self.words {
            feed(w.to_le_bytes());
        }
        h
    }
}

/// The network restricted to one activation pattern: `x ↦ W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionAffine {
    pub pattern: ActivationPattern,
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl RegionAffine {
    pub fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weight.dot(&x) + &self.bias
    }

    /// Magnitude `‖|W||x| + |b|‖∞` of the terms summed when applying the map.
    fn scale(&self, x: ArrayView1<f64>) -> f64 {
        let abs_w = self.weight.mapv(f64::abs);
        let s = abs_w.dot(&x.mapv(f64::abs)) + self.bias.mapv(f64::abs);
        s.iter().fold(0.0, |m, v| m.max(*v))
    }
}

fn check_input(params: &MlpParams, len: usize) -> Result<()> {
    if len != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            got: len,
        });
    }
    Ok(())
}

pub fn activation_pattern(params: &MlpParams, x: ArrayView1<f64>) -> Result<ActivationPattern> {
    check_input(params, x.len())?;
    let mut pattern = ActivationPattern::zeros(params.hidden_neurons());
    let mut a = x.to_owned();
    let mut offset = 0;
    for layer in &params.layers[..params.layers.len() - 1] {
        let mut z = layer.weight.dot(&a) + &layer.bias;
        for (k, v) in z.iter_mut().enumerate() {
            if *v > 0.0 {
                pattern.set(offset + k, true);
            } else {
                *v = 0.0;
            }
        }
        offset += z.len();
        a = z;
    }
    Ok(pattern)
}

/// Patterns for every row of `inputs`, computed with batched products.
pub fn activation_patterns_rows(
    params: &MlpParams,
    inputs: &Array2<f64>,
) -> Result<Vec<ActivationPattern>> {
    check_input(params, inputs.ncols())?;
    let n = inputs.nrows();
    let mut patterns = vec![ActivationPattern::zeros(params.hidden_neurons()); n];
    let mut a = inputs.to_owned();
    let mut offset = 0;
    for layer in &params.layers[..params.layers.len() - 1] {
        let mut z = a.dot(&layer.weight.t());
        z += &layer.bias.view().insert_axis(Axis(0));
        for (m, mut row) in z.rows_mut().into_iter().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                if *v > 0.0 {
                    patterns[m].set(offset + k, true);
                } else {
                    *v = 0.0;
                }
            }
        }
        offset += layer.outputs();
        a = z;
    }
    Ok(patterns)
}

/// Collapses the network to a single affine map for `pattern`.
///
/// With `Λ_i` the diagonal mask of hidden layer `i`, the map accumulates
/// `Ŵ ← W_i Λ_i Ŵ` and `b̂ ← W_i Λ_i b̂ + b_i` starting from `(W_0, b_0)`.
pub fn region_affine(params: &MlpParams, pattern: &ActivationPattern) -> Result<RegionAffine> {
    if pattern.len() != params.hidden_neurons() {
        return Err(Error::DimensionMismatch {
            expected: params.hidden_neurons(),
            got: pattern.len(),
        });
    }
    let first = &params.layers[0];
    let mut weight = first.weight.clone();
    let mut bias = first.bias.clone();
    let mut offset = 0;
    for (i, layer) in params.layers.iter().enumerate().skip(1) {
        let width = params.layers[i - 1].outputs();
        let mut masked = layer.weight.clone();
        for k in 0..width {
            if !pattern.get(offset + k) {
                masked.column_mut(k).fill(0.0);
            }
        }
        weight = masked.dot(&weight);
        bias = masked.dot(&bias) + &layer.bias;
        offset += width;
    }
    Ok(RegionAffine {
        pattern: pattern.clone(),
        weight,
        bias,
    })
}

/// Result of [`verify_local_linearity`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearityCheck {
    pub passed: bool,
    /// Worst relative residual over the base point and all probes.
    pub residual: f64,
    /// Perturbed points that stayed in the base region.
    pub same_region_probes: usize,
    /// Perturbed points that crossed into another region and were checked
    /// against that region's own map.
    pub crossed_probes: usize,
}

/// Relative step used for the neighbourhood probes.
pub const PROBE_STEP: f64 = 1e-6;

fn relative_residual(params: &MlpParams, region: &RegionAffine, x: ArrayView1<f64>) -> Result<f64> {
    let net = crate::relu_net::forward(params, x)?;
    let aff = region.apply(x);
    let diff = net
        .iter()
        .zip(aff.iter())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = region.scale(x);
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// Checks that the network agrees with its region map at `x` and at
/// coordinate-wise perturbations `x ± δ eⱼ`.
///
/// The residual is measured relative to `‖|W||x| + |b|‖∞`, the size of the
/// terms the affine map sums. A tolerance of zero only passes when round-off
/// happens to cancel.
pub fn verify_local_linearity(
    params: &MlpParams,
    x: ArrayView1<f64>,
    tolerance: f64,
) -> Result<LinearityCheck> {
    if tolerance.is_nan() || tolerance < 0.0 {
        return Err(Error::invalid("tolerance must be non-negative"));
    }
    let pattern = activation_pattern(params, x)?;
    let region = region_affine(params, &pattern)?;
    let mut worst = relative_residual(params, &region, x)?;
    let mut same = 0;
    let mut crossed = 0;
    for j in 0..x.len() {
        for sign in [1.0, -1.0] {
            let mut probe = x.to_owned();
            probe[j] += sign * PROBE_STEP * x[j].abs().max(1.0);
            let p = activation_pattern(params, probe.view())?;
            let r = if p == pattern {
                same += 1;
                relative_residual(params, &region, probe.view())?
            } else {
                crossed += 1;
                let other = region_affine(params, &p)?;
                relative_residual(params, &other, probe.view())?
            };
            worst = worst.max(r);
        }
    }
    Ok(LinearityCheck {
        passed: worst <= tolerance,
        residual: worst,
        same_region_probes: same,
        crossed_probes: crossed,
    })
}

/// Number of distinct patterns among `n_probes` sampled inputs. A lower
/// bound on the number of linear regions, never above `min(n_probes, 2^d̄)`.
pub fn count_regions_sampled<F>(
    params: &MlpParams,
    mut sampler: F,
    n_probes: usize,
) -> Result<usize>
where
    F: FnMut() -> Array1<f64>,
{
    if n_probes == 0 {
        return Err(Error::invalid("n_probes must be >= 1"));
    }
    let mut inputs = Array2::zeros((n_probes, params.input_dim()));
    for mut row in inputs.rows_mut() {
        let x = sampler();
        check_input(params, x.len())?;
        row.assign(&x);
    }
    Ok(region_histogram(params, &inputs)?.len())
}

/// Pattern frequencies over the rows of `inputs`, most frequent first.
pub fn region_histogram(
    params: &MlpParams,
    inputs: &Array2<f64>,
) -> Result<Vec<(ActivationPattern, usize)>> {
    let mut counts: HashMap<ActivationPattern, usize> = HashMap::new();
    for p in activation_patterns_rows(params, inputs)? {
        *counts.entry(p).or_default() += 1;
    }
    let mut out: Vec<_> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionOccupancy {
    pub pattern: ActivationPattern,
    /// `|Z_k|`.
    pub train_count: usize,
    pub probe_count: usize,
    /// Mean squared error over the training samples of this region, if any.
    pub region_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyReport {
    /// Sorted by training count, then probe count (both descending).
    pub regions: Vec<RegionOccupancy>,
    pub train_total: usize,
    pub probe_total: usize,
    /// Fraction of probe inputs whose region holds no training sample.
    pub empty_region_fraction: f64,
    /// Empirical loss of the network on the training set.
    pub train_loss: f64,
}

impl OccupancyReport {
    /// `Σ_k (|Z_k|/|Z|) loss_k`, which must equal the global training loss.
    pub fn recombined_loss(&self) -> f64 {
        self.regions
            .iter()
            .filter_map(|r| r.region_mse.map(|l| l * r.train_count as f64))
            .sum::<f64>()
            / self.train_total as f64
    }

    pub fn regions_with_training_data(&self) -> usize {
        self.regions.iter().filter(|r| r.train_count > 0).count()
    }

    /// CSV with header `pattern_hash,train_count,probe_count,region_mse`.
    /// Empty regions leave `region_mse` blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pattern_hash,train_count,probe_count,region_mse\n");
        for r in &self.regions {
            let mse = r.region_mse.map(fmt_sig12).unwrap_or_default();
            let _ = writeln!(
                out,
                "{:016x},{},{},{}",
                r.pattern.hash64(),
                r.train_count,
                r.probe_count,
                mse
            );
        }
        out
    }
}

/// Assigns training and probe inputs to regions and reports how much probe
/// mass lands in regions that saw no training data.
pub fn region_occupancy(
    params: &MlpParams,
    train_set: &SampleSet,
    probe_set: &SampleSet,
) -> Result<OccupancyReport> {
    if train_set.is_empty() || probe_set.is_empty() {
        return Err(Error::invalid(
            "occupancy needs non-empty training and probe sets",
        ));
    }
    let train_patterns = activation_patterns_rows(params, train_set.inputs())?;
    let probe_patterns = activation_patterns_rows(params, probe_set.inputs())?;
    let predictions = crate::relu_net::forward_rows(params, train_set.inputs())?;

    struct Acc {
        train: usize,
        probe: usize,
        sq_err: f64,
    }
    let mut regions: HashMap<ActivationPattern, Acc> = HashMap::new();
    let mut total_sq = 0.0;
    for (m, p) in train_patterns.into_iter().enumerate() {
        let err: f64 = predictions
            .row(m)
            .iter()
            .zip(train_set.targets().row(m).iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        total_sq += err;
        let acc = regions.entry(p).or_insert(Acc {
            train: 0,
            probe: 0,
            sq_err: 0.0,
        });
        acc.train += 1;
        acc.sq_err += err;
    }
    let mut empty = 0usize;
    for p in probe_patterns {
        let acc = regions.entry(p).or_insert(Acc {
            train: 0,
            probe: 0,
            sq_err: 0.0,
        });
        acc.probe += 1;
        if acc.train == 0 {
            empty += 1;
        }
    }
    let mut list: Vec<RegionOccupancy> = regions
        .into_iter()
        .map(|(pattern, acc)| RegionOccupancy {
            pattern,
            train_count: acc.train,
            probe_count: acc.probe,
            region_mse: (acc.train > 0).then(|| acc.sq_err / acc.train as f64),
        })
        .collect();
    list.sort_by(|a, b| {
        b.train_count
            .cmp(&a.train_count)
            .then(b.probe_count.cmp(&a.probe_count))
            .then_with(|| a.pattern.cmp(&b.pattern))
    });
    Ok(OccupancyReport {
        regions: list,
        train_total: train_set.len(),
        probe_total: probe_set.len(),
        empty_region_fraction: empty as f64 / probe_set.len() as f64,
        train_loss: total_sq / train_set.len() as f64,
    })
}
