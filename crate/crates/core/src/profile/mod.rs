//! Characterization and separation: a forward press model fitted to chart
//! measurements, and the inverse LUT built from it.

mod forward;
mod separation;
mod solve;

pub use forward::{fit_forward, ForwardModel, ResidualSummary, HIGH_K, MIN_PATCHES, MIN_PRIMARY_WEIGHT};
pub use separation::{
    build_separation, separate_image, CmykImage, LutNode, SeparationOptions, SeparationProfile, AB_RANGE, FEASIBLE_DE,
    L_RANGE, OUT_OF_GAMUT_DE, PROFILE_SCHEMA_VERSION,
};
