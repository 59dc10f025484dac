//! Shared fixtures for the benchmarks.

use chanlab_core::relu_net::init_params;
use chanlab_core::{
    gen_dataset, CovarianceSpec, MlpParams, MlpSpec, ObservationModel, SampleSet, SimRng,
};

/// Linear-model samples at 10 dB with unit channel variance.
pub fn linear_samples(d: usize, n: usize, seed: u64) -> SampleSet {
    let cov = CovarianceSpec::diagonal(1.0).expect("positive variance");
    let model = ObservationModel::linear(0.1).expect("positive noise");
    gen_dataset(&cov, d, &model, n, &mut SimRng::seed_from_u64(seed)).expect("valid dataset")
}

/// The default network shape: four hidden layers of width 40.
pub fn default_network(d: usize, seed: u64) -> MlpParams {
    init_params(&MlpSpec::uniform(d, 40, 4).expect("valid spec"), seed)
}
