//! Simulation toolkit for adiabatic GHZ-state preparation on a chain of
//! flux qutrits coupled through resonators.
//!
//! The chain alternates qutrit and resonator sites. Two Gaussian coupling
//! envelopes `J1` and `J2` sweep the chain through a topological pumping
//! cycle that carries a single excitation from the first qutrit to the last
//! while flipping every qutrit it passes, turning a local superposition into
//! an N-body GHZ state. Because the excitation rides the zero-energy edge
//! mode of the chain, the transfer inherits its protection against bond
//! disorder and, depending on the protocol, against qutrit or resonator
//! decay.
//!
//! Module map:
//!
//! * [`model`]: chain parameters, pulse envelopes, the single-excitation
//!   basis, quenched bond disorder, Hamiltonian assembly.
//! * [`spectral`]: instantaneous spectra, the analytic edge state, spectral
//!   flow, adiabaticity diagnostics, winding number.
//! * [`dynamics`]: state vectors, the RK4 propagator with step-halving
//!   control, GHZ protocol states, fidelities and populations.
//! * [`oracle`]: brute-force evolution in the full product Hilbert space for
//!   small chains, used to validate the single-excitation reduction.
//! * [`experiments`]: threshold-time search, quadratic fits, disorder and
//!   loss sweeps, the physical-units scale study.
//! * [`sta`]: counterdiabatic control fields that shortcut the adiabatic
//!   transfer.
//! * [`output`]: CSV and JSON writers, run manifests, spec hashing.
//!
//! All rates are expressed in units of the peak coupling `g0` and all times
//! in units of `1/g0`. Physical units enter only through
//! [`experiments::ScaleStudyConfig`].

pub mod dynamics;
pub mod experiments;
pub mod model;
pub mod oracle;
pub mod output;
pub mod spectral;
pub mod sta;

pub use model::{ChainSpec, CouplingProfile, DisorderRealization, Scheme, SubspaceBasis};

pub type C64 = num_complex::Complex64;

/// Anything the library can fail with. Configuration errors name the
/// offending key so the CLI can report them verbatim (exit code 2); the
/// remaining variants are numerical failures (exit code 1).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid value for `{key}`: {reason}")]
    Config { key: &'static str, reason: String },
    #[error("could not parse config: {0}")]
    ConfigParse(String),
    #[error("eigensolver failed to converge on a {dim}x{dim} matrix")]
    Eigensolver { dim: usize },
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("step-size refinement did not converge: {0}")]
    StepRefinement(String),
    #[error("threshold search failed: {0}")]
    ThresholdSearch(String),
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::ConfigParse(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
