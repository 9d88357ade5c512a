//! Shared fixtures for the benchmarks.

use hrrp_core::ddpm::{to_model_space, DdpmConfig, DdpmTrainer};
use hrrp_core::gan::{GanConfig, Wgan};
use hrrp_core::simulator::{generate_scatterers, simulate_profile, DEFAULT_DENSITY};
use hrrp_core::{AcquisitionCondition, ConditionVector, GridSpec, LrpParams, RangeProfile, ShipGeometry};

pub fn ship() -> ShipGeometry {
    generate_scatterers(100.0, 20.0, DEFAULT_DENSITY, 7).expect("valid hull")
}

/// A 100 m hull at 30 degrees, at `snr_db` (infinity for noiseless).
pub fn profile(snr_db: f64, seed: u64) -> RangeProfile {
    let cond = AcquisitionCondition::from_aspect(30.0 + seed as f64, snr_db).expect("valid aspect");
    simulate_profile(&ship(), &cond, &GridSpec::default(), seed, &LrpParams::default()).expect("profile fits the grid")
}

pub fn condition(k: u64) -> ConditionVector {
    ConditionVector::new(100.0, 20.0, (k * 7 % 360) as f64).expect("valid condition")
}

/// `n` (profile, condition) pairs in `[0, 1]`.
pub fn batch(n: usize) -> Vec<(Vec<f64>, ConditionVector)> {
    (0..n as u64)
        .map(|k| (profile(13.0, k).into_amplitudes(), condition(k)))
        .collect()
}

pub fn ddpm_trainer(timesteps: usize) -> DdpmTrainer {
    let cfg = DdpmConfig {
        timesteps,
        ..DdpmConfig::default()
    };
    DdpmTrainer::new(cfg, 1).expect("desk config is valid")
}

pub fn model_space(batch: &[(Vec<f64>, ConditionVector)]) -> Vec<(Vec<f64>, ConditionVector)> {
    batch.iter().map(|(x, c)| (to_model_space(x), *c)).collect()
}

pub fn wgan() -> Wgan {
    Wgan::new(GanConfig::default(), 1).expect("desk config is valid")
}
