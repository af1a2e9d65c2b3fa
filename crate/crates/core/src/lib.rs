//! Qudit state tomography with Lorentz-transformed measurement protocols.
//!
//! Protocols start from a complete set of mutually unbiased bases and are
//! moved by an `SL(s, C)` matrix built from a reference state, so that the
//! reference lands at the centre of the state space. Counts are sampled from
//! Poisson statistics and reconstructed by maximum likelihood over
//! purifications. The [`tracker`] module runs the same pieces in closed loop
//! on a state evolving under a modulated Hamiltonian.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases.

// negated comparisons are how NaN inputs are rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod estimator;
pub mod linalg;
pub mod protocol;
pub mod qmat;
pub mod rng;
pub mod scalar;
pub mod stokes;
pub mod tracker;

pub use estimator::{
    efficiency, min_loss, mle_reconstruct, sample_counts, AccuracyReport, CountRecord,
    EstimatorError, MleFit, MleOptions, MleStart,
};
pub use protocol::{
    apply_lorentz, lorentz_of_state, mub_protocol, normalize_exposure, InstrumentalMatrix,
    LorentzTransform, ProtocolError,
};
pub use qmat::{fidelity, purify, DensityMatrix, PurifiedState, StateError, StateGenConfig};
pub use scalar::Real;
pub use stokes::{StokesError, StokesFourVector};
pub use tracker::{run_tracking, EvolutionConfig, Tracker, TrackerError, TrackingRecord};

pub type DensityMatrix64 = DensityMatrix<f64>;
pub type DensityMatrix32 = DensityMatrix<f32>;
pub type PurifiedState64 = PurifiedState<f64>;
pub type PurifiedState32 = PurifiedState<f32>;
pub type InstrumentalMatrix64 = InstrumentalMatrix<f64>;
pub type InstrumentalMatrix32 = InstrumentalMatrix<f32>;
pub type LorentzTransform64 = LorentzTransform<f64>;
pub type LorentzTransform32 = LorentzTransform<f32>;
pub type CountRecord64 = CountRecord<f64>;
pub type CountRecord32 = CountRecord<f32>;
pub type MleFit64 = MleFit<f64>;
pub type MleFit32 = MleFit<f32>;
pub type Tracker64 = Tracker<f64>;
pub type StokesFourVector64 = StokesFourVector<f64>;
