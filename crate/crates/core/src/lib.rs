//! Ship high-resolution range profile (HRRP) toolkit: a point-scatterer
//! simulator, geometric analysis (TLOP, LRP, SNR), fidelity metrics with
//! neighborhood best-match evaluation, and conditional DDPM / WGAN models
//! built on a small reverse-mode autodiff engine.

pub mod analysis;
pub mod dataset;
pub mod ddpm;
pub mod error;
pub mod gan;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod simulator;
pub mod training;
pub mod types;

pub use analysis::{activation_mask, estimate_snr_db, lrp_meters, tlop, ActivationMask, LrpParams};
pub use error::{Error, Result};
pub use simulator::{GridSpec, PolarRcsGrid};
pub use types::{
    aspect_angle_of, canonical_angle, normalize_profile, AcquisitionCondition, ConditionVector,
    RangeProfile, ShipGeometry,
};
