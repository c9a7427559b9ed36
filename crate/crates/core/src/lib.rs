//! Solar-wind radial velocity surrogates on the sphere.
//!
//! The crate bundles everything needed to compare a learned Spherical
//! Fourier Neural Operator against the HUX upwind baseline:
//!
//! * [`grid`]: Gauss–Legendre latitude sampling and radial meshes.
//! * [`storage`]: the `HWC1` cube format, manifests, normalization and the
//!   synthetic data generator.
//! * [`hux`]: forward and backward HUX propagation.
//! * [`sht`]: spherical harmonic analysis/synthesis and their adjoints.
//! * [`sfno`]: the neural operator, its reverse-mode gradients, Adam and
//!   the training / cross-validation drivers.
//! * [`metrics`]: MSE, edge MSE, EMD, MS-SSIM, PSNR and ACC.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and plain iteration otherwise.

pub mod exec;
pub mod grid;
pub mod hux;
pub mod metrics;
pub mod sfno;
pub mod sht;
pub mod storage;

pub use grid::{RadialGrid, SphericalGrid};
pub use storage::VelocityCube;

/// Solar radius in kilometres.
pub const SOLAR_RADIUS_KM: f64 = 6.957e5;
