//! Randomized benchmarking: Clifford groups, the slot-level simulation
//! engine, and decay fitting.

pub mod clifford;
pub mod engine;
pub mod fit;

pub use clifford::{clifford1, clifford2, TwoQubitGate};
pub use engine::{
    coherence_limit_1q, coherence_limit_2q, generate_sequence, generate_sequence_1q,
    interleaved_fidelity, run_rb, single_qubit_rb, GateModel, RBConfig, RBResult, RbDevice,
    RbEngine, RbSequence, CW_FREQ_GHZ,
};
pub use fit::{fit_decay, DecayFit};
