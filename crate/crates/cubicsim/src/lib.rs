//! Desk-scale simulator of a parity-violated superconducting qubit (a "cubic
//! transmon": a capacitively shunted SNAIL biased away from zero flux) coupled
//! to an ordinary transmon.
//!
//! The crate is organized in layers that mirror the physics:
//!
//! * [`circuit`] — the flux-biased SNAIL circuit itself: two-cosine potential,
//!   single-phase Taylor expansion, and the full two-island charge-basis
//!   Hamiltonian, yielding the *bare* cubic-mode parameters
//!   (ω_c0, β_c0, α_c0) versus flux.
//! * [`effective`] — the dressed two-qubit parameters (ω_c, ω_t, α_c, α_t, g,
//!   J_ZZ, η, η_CZ) obtained from the bare ones by closed-form second-order
//!   Schrieffer–Wolff formulas, with a numeric SW construction and exact
//!   diagonalization of the truncated 16×16 Hamiltonian as oracles.
//! * [`dynamics`] — time-domain propagation of the driven effective
//!   Hamiltonian (state vector or Lindblad density matrix) and the simulated
//!   experiments built on it: sideband chevron, ZZ-null sweep, conditional
//!   Ramsey, pulsed spectroscopy.
//! * [`gates`] — synthesis and numeric calibration of the 50 ns composite
//!   CZ/iSWAP/SWAP pulses, plus FSim-parameter extraction.
//! * [`benchmarking`] — Clifford-group machinery (24 / 11520 elements) and
//!   the randomized-benchmarking engine with depolarization fitting.
//! * [`config`] — serde-friendly device/experiment configuration shared with
//!   the CLI.
//!
//! # Units
//!
//! All public frequencies, energies and amplitudes are **ordinary frequencies
//! in GHz** (ħ = 1; a level spacing of 1 GHz means e^{−i·2π·1 GHz·t} phase
//! evolution). Time is in **nanoseconds**. Conversions to angular frequency
//! (rad/ns) happen only inside `dynamics` via [`units`].

pub mod benchmarking;
pub mod checks;
pub mod circuit;
pub mod config;
pub mod dynamics;
pub mod effective;
mod error;
pub mod gates;
mod linalg;
pub mod units;

pub use error::{Error, Result};
