//! Desk-scale laboratory for random colored expanders, the two-query walk
//! verifier, witness-free walk sampling, sunflower extraction and
//! adversary-method bounds.

pub mod adversary;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod linalg;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod spectral;
pub mod stats;
pub mod sunflower;
pub mod verifier;
pub mod walk;

pub use error::{LabError, Result};
pub use graph::{ColoredGraph, ComponentPartition, Permutation, QueryContext};
pub use rng::{stream_rng, LabRng};
pub use sampler::{DistributionParams, Preset, SampleOutcome};
pub use scalar::Real;

pub type SpectralReport64 = spectral::SpectralReport<f64>;
pub type SpectralReport32 = spectral::SpectralReport<f32>;
pub type WitnessState64 = verifier::WitnessState<f64>;
pub type WitnessState32 = verifier::WitnessState<f32>;
pub type VerifierOutcome64 = verifier::VerifierOutcome<f64>;
pub type WalkDistribution64 = spectral::WalkDistribution<f64>;
/// Exact heaviness exponent for sunflowers.
pub type Mu = num_rational::Ratio<u64>;
