use afm_core::afm::{train_afm, AfmModel, AfmTrainReport};
use afm_core::dynamics::{pe_init_train, EnsembleModel, TrainReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DynamicsVariant, Scale};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsJob {
    pub scale: Scale,
    pub variant: DynamicsVariant,
    /// Relative actuation noise on training actions; 0 disables it.
    pub domain_randomization: f64,
    pub seed: u64,
    pub samples: Option<usize>,
}

impl DynamicsJob {
    pub fn new(scale: Scale, seed: u64) -> Self {
        Self {
            scale,
            variant: DynamicsVariant::Standard,
            domain_randomization: 0.0,
            seed,
            samples: None,
        }
    }
}

pub fn train_dynamics(job: &DynamicsJob) -> Result<(EnsembleModel, TrainReport)> {
    let mut cfg = job.scale.dynamics_train();
    cfg.action_noise_frac = job.domain_randomization;
    cfg.arch = job.variant.arch();
    if let Some(n) = job.samples {
        cfg.n_samples = n;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    Ok(pe_init_train(&cfg, &mut rng)?)
}

pub fn train_flow(
    f0: &EnsembleModel,
    scale: Scale,
    seed: u64,
    iterations: Option<usize>,
) -> Result<(AfmModel, AfmTrainReport)> {
    let mut cfg = scale.afm_train();
    if let Some(n) = iterations {
        cfg.iterations = n;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(train_afm(f0, &cfg, &mut rng)?)
}
