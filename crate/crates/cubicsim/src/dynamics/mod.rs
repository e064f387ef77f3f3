//! Time-domain simulation of the driven effective Hamiltonian with optional
//! Lindblad decoherence, and the simulated experiments built on it.
//!
//! The layering is: [`envelope`] (pulse shapes) → [`schedule`] (tones,
//! schedules, decoherence, states) → [`propagator`] (Hamiltonian assembly and
//! adaptive propagation, in rotating or lab frame) → [`experiments`]
//! (chevron, ZZ-null sweep, Ramsey, pulsed spectroscopy).

pub mod dressed;
pub mod envelope;
pub mod experiments;
mod integrator;
pub mod propagator;
pub mod schedule;

pub use dressed::{zz_null_cw, DressedBasis};
pub use envelope::{EnvelopeKind, PulseEnvelope, DEFAULT_TRUNCATION};
pub use experiments::{
    chevron_scan, conditional_frequencies, pulsed_spectroscopy, ramsey_experiment, zz_null_sweep,
    zz_residual_static, ChevronMap, RamseyTrace, SpectroscopyScan, ZzNullRow, ZzNullScan,
};
pub use propagator::{ideal_rotation, Frame, Propagator};
pub use schedule::{
    CwTone, DecoherenceParams, DensityMatrix, DriveTone, Port, PulseSchedule, QuantumState,
    QubitDecoherence, StateVector,
};
