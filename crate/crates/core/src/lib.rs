//! Posterior-probability FDR control under covariance misspecification.
//!
//! Gaussian model `y = θ + ε` with a Gaussian prior on `θ` whose covariance
//! may differ from the one generating the data. The crate computes the
//! statistics `h_i = P(θ_i ≥ θ₀ᵢ | y)`, their exact sampling law, a Monte
//! Carlo KL divergence between correct and misspecified laws, and the FDR
//! and FNR of the step-up rule on `h`.

pub mod cli;
pub mod covariance;
pub mod divergence;
pub mod error;
pub mod linalg;
pub mod plot;
pub mod posterior;
pub mod rng;
pub mod sampdist;
pub mod simulation;
pub mod special;
pub mod testing;

pub use covariance::{CovarianceMatrix, GridLayout, Kernel};
pub use divergence::{kl_known_var, KlEstimate};
pub use error::{Error, Result};
pub use posterior::{
    posterior_probs_known_var, posterior_probs_unknown_var, Dataset, Hypotheses, ModelSpec,
    NoiseModel, PosteriorOperator, TrueProcess,
};
pub use sampdist::{law_known_var, law_unknown_var, SamplingLaw};
pub use simulation::{run_sweep, ExperimentConfig, SweepRow};
pub use testing::{step_up, DecisionSet, OperatingCharacteristics};
