//! Near-field array signal-processing toolkit.
//!
//! Steering models and field-region arithmetic, synthetic snapshot
//! generation, subspace and cumulant localization, coherent-mixture
//! calibration, polar-domain sparse channel estimation, beam focusing and
//! squint analysis, acoustic/ultrasound beamformers, and Wigner-D phase
//! retrieval, with a configuration-driven experiment runner on top.

pub mod array;
pub mod beamform;
pub mod coherent;
pub mod cumulant;
pub mod error;
pub mod focusing;
pub mod fresnel;
pub mod linalg;
pub mod music;
pub mod polar;
pub mod rng;
pub mod scenario;
pub mod squint;
pub mod wigner;

pub use error::{NfError, Result};
