//! Leakage- and variation-aware thermal simulation with Green's functions.
//!
//! The pipeline: draw variation maps ([`variation`]), calibrate kernels
//! against the finite-difference reference ([`oracle`], [`greens`]), then
//! compose full-chip temperatures by FFT convolution ([`solver`]).

pub mod error;
pub mod greens;
pub mod grid;
pub mod kv;
pub mod oracle;
pub mod scenario;
pub mod solver;
pub mod stack;
pub mod variation;

pub use error::{Error, Result};
pub use greens::{CalibrationOptions, CalibrationReport, GreensSet};
pub use grid::{FieldMap, RadialProfile, SpectralMap, Unit};
pub use oracle::{Oracle, SolveOptions, SteadySolution};
pub use solver::{Composition, ErrorReport, MonteCarloSummary, PowerTrace, ThermalResult};
pub use stack::{ChipStack, Layer};
pub use variation::{ConductivityMap, LeakageBaseline, VariationConfig, VariationParams};

/// Linearized die conductivity coefficient (1/K) for η = 1.3 over 40–100 °C
/// around a 318.15 K ambient; see [`variation::fit_linear_c`].
pub const DEFAULT_C: f64 = 0.003_556_572_777_987_963;
