//! Compressive multidimensional harmonic retrieval with frequency-interval
//! priors.
//!
//! The pipeline: observe a few entries of a mixture of d-dimensional
//! sinusoids, complete it by solving a semidefinite program whose feasible
//! set encodes the known frequency bands through banded Toeplitz
//! certificates, then read the frequencies off the completed covariance with
//! subspace search and the gains with least squares. A plain (band-free)
//! baseline, decomposition and certificate checkers, and seeded experiment
//! drivers round out the crate.

pub mod band;
pub mod error;
pub mod experiments;
mod linalg;
pub mod model;
pub mod music;
pub mod sdp;
pub mod toeplitz;
pub mod vandermonde;

pub use band::{BandSystem, FrequencyBand};
pub use error::{Error, Result};
pub use experiments::{
    emit_plotdata, phase_transition, run_trial, PhaseGrid, PhaseTable, PriorSetting, TrialConfig,
    TrialMode, TrialResult,
};
pub use model::{
    match_frequencies, nmse, random_mask, steering_vector, synthesize, torus_dist, Dims,
    FrequencyTuple, ObservationMask, SpectralModel,
};
pub use music::{retrieve, MusicOptions, Pseudospectrum, RetrievalResult};
pub use sdp::{
    assemble, solve, Backend, SdpInstance, SdpSolution, SolveDiagnostics, SolveStatus,
    SolverOptions,
};
pub use toeplitz::{
    adjoint_level_toeplitz, adjoint_tg, build_level_toeplitz, build_tg, GCoefficients,
    HalfSpectrumTensor,
};
pub use vandermonde::{
    vandermonde_decompose, verify_fs_certificate, verify_multiband_certificate, CertificateReport,
    Decomposition,
};
