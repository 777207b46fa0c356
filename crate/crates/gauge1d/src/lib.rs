//! Gauge-transform perturbation machinery for one-dimensional Schrödinger
//! operators `H = -d²/dx² + εV` with quasi-periodic and smooth almost-periodic
//! potentials.
//!
//! The crate builds, order by order in ε, a near-diagonal representative of
//! `H` on the Besikovich side (a graded pseudo-differential symbol), and from
//! it computes spectral-gap endpoints and the integrated density of states as
//! asymptotic expansions in ε. Everything the expansion machinery produces is
//! cross-checkable against independent spectral oracles (Hill discriminants,
//! rotation numbers, truncated plane-wave fibers) that live in [`oracle`].
//!
//! Module map:
//! - [`lattice`]: frequency lattice over the generator basis (exact integer
//!   vectors), order shells, diophantine margins.
//! - [`potential`]: trigonometric potentials `V = Σ V̂_θ e^{2iθx}`, reality
//!   and norm controls, decay-rule generation, truncation with tail bounds.
//! - [`symbols`]: the graded symbol calculus (composition, commutators,
//!   cut-off projections) used by the gauge recursion.
//! - [`gauge`]: the inductive construction of the near-diagonal symbol.
//! - [`spectral`]: resonance-zone geometry, 2×2 fiber matrices, the spectral
//!   band function `G`.
//! - [`gaps`], [`ids`]: gap endpoints / lengths and the integrated density of
//!   states, plus their ε-expansions and the resonance-case taxonomy.
//! - [`asymptotics`]: power-basis ladder fits, error-order estimation, and
//!   cross-window stitching.
//! - [`almost`]: the dyadic-window scheme for genuinely almost-periodic
//!   potentials and the super-resonance search.
//! - [`oracle`]: independent numerical spectra (monodromy, rotation number,
//!   truncated fibers).
//! - [`wide`]: a fixed-point big-decimal scalar for the deep dyadic windows
//!   where f64 underflows.

pub mod almost;
pub mod asymptotics;
pub mod config;
pub mod gaps;
pub mod gauge;
pub mod ids;
pub mod lattice;
pub mod numeric;
pub mod oracle;
pub mod potential;
pub mod spectral;
pub mod symbols;
pub mod wide;

use thiserror::Error;

/// Complex scalar used throughout the symbol calculus.
pub type C64 = num_complex::Complex64;

/// Errors produced by the construction and evaluation pipeline.
///
/// Each variant corresponds to one external error class (the CLI maps them to
/// distinct exit codes).
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or self-contradictory input (config files, CLI arguments).
    #[error("config: {0}")]
    Config(String),

    /// Input violates a documented precondition (reality, norm bound,
    /// rational independence, ...).
    #[error("validation: {0}")]
    Validation(String),

    /// Enumeration exceeded the configured shell cap.
    #[error("shell cap exceeded: {0}")]
    ShellCap(String),

    /// Resonance zones failed a disjointness requirement.
    #[error("zone overlap: {0}")]
    ZoneOverlap(String),

    /// A numeric routine failed to reach its tolerance (root bracketing,
    /// eigensolver sweeps, ill-conditioned fits).
    #[error("numeric: {0}")]
    Numeric(String),

    /// The requested computation is infeasible at the given parameters
    /// (schedule constraints, search exhaustion with no partial result).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Filesystem or serialization failure (oracle cache, outputs).
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Stable process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Validation(_) => 3,
            Error::ShellCap(_) => 4,
            Error::ZoneOverlap(_) => 5,
            Error::Numeric(_) => 6,
            Error::Infeasible(_) => 7,
            Error::Io(_) => 8,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
