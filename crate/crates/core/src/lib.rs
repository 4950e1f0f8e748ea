//! Tensor-network simulation of a driven Jaynes-Cummings system coupled to a
//! waveguide with a time-delayed coherent feedback loop.
//!
//! The joint state of the emitter-cavity system and the discretised waveguide
//! (one bosonic mode per time bin) is held as a matrix product state and
//! advanced by exact per-step unitaries. Around that engine sit the output
//! field correlation functions and spectra, a linearised delay model with
//! complex pole finding, and independent reference solvers (closed-system
//! evolution, Lindblad master equation, quantum regression).

pub mod error;
pub mod evolution;
mod linalg;
pub mod linear;
pub mod model;
pub mod mps;
pub mod observables;
pub mod oracle;
pub mod series;
pub mod tensor;

pub use num_complex::Complex64 as C64;

pub use error::{Error, Result};
pub use evolution::{run, Recorder, RunAbort, RunOutput, RunPlan};
pub use linear::{LinearParams, PoleSet, PoleWindow};
pub use model::{CavityInit, ModelParams, StepMode, StepUnitary, SystemInit, TlsInit};
pub use mps::{MpsState, SiteLabel};
pub use observables::{CorrelationKind, CorrelationSeries, FrequencyGrid, Spectrum, Window};
pub use oracle::DensityMatrix;
pub use series::TimeSeries;
pub use tensor::{ComplexTensor, SvdPolicy};
