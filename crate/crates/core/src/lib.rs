//! Correlated spiral imaging toolkit.
//!
//! Simulates joint orbital-angular-momentum (OAM) spectra of photon pairs
//! produced by parametric downconversion, with an object placed in one arm.
//! The crate covers the full chain from Laguerre-Gauss mode evaluation to
//! information-theoretic diagnostics and phase-aware image reconstruction:
//!
//! * [`modes`] — Laguerre-Gauss mode functions in dimensionless natural units
//!   (lengths in waist radii, distances in Rayleigh ranges).
//! * [`objects`] — complex transmission maps: analytic opaque primitives and
//!   rasterized masks loaded from PGM images.
//! * [`overlap`] — the object's modal transfer coefficients, computed by
//!   polar quadrature (Gauss-Legendre radially, a uniform azimuthal grid
//!   resolved into harmonics in a single FFT pass).
//! * [`spdc`] — downconversion coupling coefficients for a fundamental-mode
//!   pump and the assembled coincidence amplitudes.
//! * [`spectra`] — joint probability spectra, marginals, mutual information,
//!   and the rotational-symmetry order parameter.
//! * [`interfere`] — beam-splitter mixing of signal and idler, singles rates,
//!   and retrieval of complex coefficients (phases included) from those rates.
//! * [`reconstruct`] — coherent and incoherent image renderings plus
//!   azimuthal-structure metrics.
//! * [`classical`] — the classically-correlated variant built from sequential
//!   single-OAM illumination.
//! * [`compress`] — a minimal compressive-sensing demonstration over the
//!   Laguerre-Gauss dictionary (mutual coherence, orthogonal matching pursuit).
//!
//! All quantities are dimensionless: the identity `k w0^2 = 2 z_R` removes the
//! wavelength, so results depend only on object size over beam size and on
//! propagation distance in Rayleigh ranges. Every operation is a pure function
//! of its inputs; tables are immutable once built and safe to share across
//! threads. Table fills and pixel renders parallelize internally with rayon
//! while keeping output deterministic.

pub mod classical;
pub mod compress;
pub mod error;
pub mod interfere;
pub mod modes;
pub mod objects;
pub mod overlap;
pub mod reconstruct;
pub mod spdc;
pub mod spectra;
pub mod window;

pub use error::{CsiError, Result};
pub use modes::{BeamGeometry, ModeIndex};
pub use objects::TransmissionMap;
pub use overlap::{OverlapTable, OverlapWindow, QuadratureSpec};
pub use spdc::{AmplitudeTable, CouplingTable};
pub use spectra::{InfoReport, JointSpectrum};
pub use window::ModeWindow;
