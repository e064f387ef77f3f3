//! Slot-level randomized-benchmarking engine.
//!
//! # Slot model
//!
//! Every primitive occupies one uniform 50 ns slot: a single-qubit Gaussian
//! pulse on one port (the other port idles), a two-qubit gate schedule, or an
//! idle. The ZZ-cancellation CW tone runs continuously through *every* slot,
//! exactly as on the experiment, and all pulse and gate calibrations are
//! performed with it on.
//!
//! # Dressed-frame phase algebra
//!
//! The engine state lives in the dressed basis: the eigenbasis of the
//! CW-locked static generator (see [`DressedBasis`]), in which an idle slot
//! is exactly diagonal. Only one quantum channel per slot *kind* is ever
//! integrated (with all programmed phases zero, CW phase zero at slot start),
//! then conjugated into the dressed frame: Ẽ = W(T)†·E(W(0)·W(0)†)·W(T).
//!
//! Arbitrary drive azimuths are realized exactly by conjugating the cached
//! dressed channel with D(φ) = exp(i·φ·N), N the total excitation number
//! (which the CW-locked generator conserves, so D is diagonal in the dressed
//! basis). In the bare frame the conjugation Z(y) = exp(i(y_a n_a + y_b n_b))
//! shifts port azimuths by y and sideband phases by y_a − y_b; requiring CW
//! phase continuity across slots ties the components together, and the
//! resulting dressed-frame conjugation collapses to the single knob φ — the
//! CW phase accumulator cancels out of the algebra entirely. Per slot kind:
//! idle and gate slots apply the cached channel as-is (gate pump tones are
//! implicitly phase-locked to the CW), a pulse slot on either port is
//! conjugated by D(φ) with φ the programmed azimuth in the CW-locked frame.
//!
//! # Frame bookkeeping
//!
//! Virtual Z gates and the deterministic per-slot Z phases (dressed idle
//! phases, pulse frame shifts, gate gauge) are commuted to the end of the
//! sequence: the logical state is Z(f)·ρ·Z(−f) for the tracked per-port frame
//! f, pulses are programmed at azimuth (logical − f − offset), and σ_z
//! readout is frame-invariant. Gate slots update f through the calibrated
//! two-sided gauge; swap-type gates (θ_sw = π) exchange the two ports'
//! frames.

use std::cell::OnceCell;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix2, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::benchmarking::clifford::{clifford1, clifford2, Clifford1, Clifford2, TwoQubitGate};
use crate::benchmarking::fit::{fit_decay, mann_kendall_z, DecayFit};
use crate::dynamics::{
    zz_null_cw, CwTone, DecoherenceParams, DensityMatrix, DressedBasis, Frame, Port, Propagator,
    PulseSchedule, QuantumState, QubitDecoherence,
};
use crate::effective::{EffectiveParams, DIM, N_LEVELS};
use crate::gates::{
    calibrate_gate, calibrate_single_qubit, dressed_computational_unitary, GateCalibration,
    SingleQubitCalibration, SqAngle, GATE_SLOT_NS,
};
use crate::linalg::C64;
use crate::{Error, Result};

const SLOT_NS: f64 = GATE_SLOT_NS;
/// Number of distinct slot kinds: idle, 4 single-qubit pulses, 3 gates.
const N_SLOT_KINDS: usize = 8;

fn wrap_angle(x: f64) -> f64 {
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}

fn port_index(p: Port) -> usize {
    match p {
        Port::Cubic => 0,
        Port::Transmon => 1,
    }
}

fn gate_index(g: TwoQubitGate) -> usize {
    match g {
        TwoQubitGate::Cz => 0,
        TwoQubitGate::Iswap => 1,
        TwoQubitGate::Swap => 2,
    }
}

fn pulse_index(port: Port, angle: SqAngle) -> usize {
    2 * port_index(port) + matches!(angle, SqAngle::PiHalf) as usize
}

/// Drive frequency of the ZZ-nulling CW tone (GHz): 84 MHz above the
/// |ge⟩↔|eg⟩ sideband transition at the reference operating point.
pub const CW_FREQ_GHZ: f64 = 0.930;

/// Full calibration set for randomized benchmarking: the ZZ-null CW tone and
/// the single-qubit pulse sets and native two-qubit gates, all calibrated
/// with the tone on.
#[derive(Debug, Clone)]
pub struct RbDevice {
    pub params: EffectiveParams,
    pub cw: CwTone,
    /// Single-qubit calibrations, indexed [cubic, transmon].
    pub single_qubit: [SingleQubitCalibration; 2],
    /// Gate calibrations, indexed [CZ, iSWAP, SWAP].
    pub gates: [GateCalibration; 3],
}

impl RbDevice {
    /// Calibrates every benchmarking primitive for one device.
    pub fn calibrate(params: &EffectiveParams) -> Result<Self> {
        let cw = zz_null_cw(params, CW_FREQ_GHZ)?;
        let single_qubit = [
            calibrate_single_qubit(params, Port::Cubic, Some(cw))?,
            calibrate_single_qubit(params, Port::Transmon, Some(cw))?,
        ];
        let gates = [
            calibrate_gate(params, TwoQubitGate::Cz.target(), Some(cw))?,
            calibrate_gate(params, TwoQubitGate::Iswap.target(), Some(cw))?,
            calibrate_gate(params, TwoQubitGate::Swap.target(), Some(cw))?,
        ];
        Ok(Self { params: *params, cw, single_qubit, gates })
    }

    pub fn gate(&self, g: TwoQubitGate) -> &GateCalibration {
        &self.gates[gate_index(g)]
    }

    pub fn sq(&self, port: Port) -> &SingleQubitCalibration {
        &self.single_qubit[port_index(port)]
    }
}

/// How sequence elements are realized during simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GateModel {
    /// Calibrated 50 ns slot schedules integrated through the dynamics module
    /// (captures coherent calibration residuals).
    #[default]
    Calibrated,
    /// Ideal Clifford matrices (consistency mode: with decoherence off the
    /// decay must be flat, p = 1).
    Ideal,
}

/// Randomized-benchmarking run configuration.
#[derive(Debug, Clone)]
pub struct RBConfig {
    /// Sequence lengths n (total Cliffords including the final inverse).
    pub lengths: Vec<usize>,
    /// Random sequences per length.
    pub randomizations: usize,
    /// Optional binomial shot sampling; `None` = exact expectation values.
    pub shots: Option<usize>,
    pub seed: u64,
    /// Interleaved target gate (two-qubit RB only).
    pub interleaved: Option<TwoQubitGate>,
    /// Markovian decoherence; `None` = closed-system dynamics.
    pub decoherence: Option<DecoherenceParams>,
    pub gate_model: GateModel,
}

impl RBConfig {
    /// Two-qubit defaults: 50 randomizations, exact readout, reference
    /// decoherence.
    pub fn two_qubit(seed: u64) -> Self {
        Self {
            lengths: vec![1, 2, 3, 4, 6, 8, 11, 15, 20],
            randomizations: 50,
            shots: None,
            seed,
            interleaved: None,
            decoherence: Some(DecoherenceParams::reference()),
            gate_model: GateModel::Calibrated,
        }
    }

    /// Single-qubit defaults: 100 randomizations.
    pub fn single_qubit(seed: u64) -> Self {
        Self {
            lengths: vec![1, 2, 4, 7, 11, 16, 22, 30],
            randomizations: 100,
            shots: None,
            seed,
            interleaved: None,
            decoherence: Some(DecoherenceParams::reference()),
            gate_model: GateModel::Calibrated,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() || self.lengths.iter().any(|&n| n < 1) {
            return Err(Error::InvalidParameter("sequence lengths must be >= 1".into()));
        }
        if self.randomizations < 2 {
            return Err(Error::InvalidParameter("need at least 2 randomizations".into()));
        }
        if self.shots == Some(0) {
            return Err(Error::InvalidParameter("shots must be positive".into()));
        }
        Ok(())
    }
}

/// One random Clifford sequence: element indices into the group, the last
/// entry being the exact inverse of everything before it (including any
/// interleaved target gates).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RbSequence {
    pub elements: Vec<usize>,
}

/// Generates the two-qubit sequence for (length, randomization): n−1 seeded
/// uniform Cliffords followed by the exact inverse. Interleaved mode accounts
/// for a target gate inserted after each random Clifford.
pub fn generate_sequence(config: &RBConfig, length: usize, randomization: usize) -> RbSequence {
    let group = clifford2();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(((length as u64) << 32) | randomization as u64);
    let mut ideal = Matrix4::identity();
    let mut elements = Vec::with_capacity(length);
    for _ in 0..length - 1 {
        let k = rng.gen_range(0..group.len());
        elements.push(k);
        ideal = group.elements[k].matrix * ideal;
        if let Some(g) = config.interleaved {
            ideal = g.unitary() * ideal;
        }
    }
    let inverse = group.find(&ideal.adjoint()).expect("Clifford products stay in the group");
    elements.push(inverse);
    RbSequence { elements }
}

/// Single-qubit analogue of [`generate_sequence`].
pub fn generate_sequence_1q(config: &RBConfig, length: usize, randomization: usize) -> RbSequence {
    let group = clifford1();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(((length as u64) << 32) | randomization as u64);
    let mut ideal = Matrix2::identity();
    let mut elements = Vec::with_capacity(length);
    for _ in 0..length - 1 {
        let k = rng.gen_range(0..group.len());
        elements.push(k);
        ideal = group.elements[k].matrix * ideal;
    }
    let inverse = group.find(&ideal.adjoint()).expect("Clifford products stay in the group");
    elements.push(inverse);
    RbSequence { elements }
}

/// Fitted randomized-benchmarking outcome.
#[derive(Debug, Clone)]
pub struct RBResult {
    pub lengths: Vec<usize>,
    /// Per-length mean of the normalized ⟨σ_z⟩ of the readout qubit.
    pub means: Vec<f64>,
    /// Per-length standard error of the mean.
    pub sems: Vec<f64>,
    pub fit: DecayFit,
    /// Hilbert-space dimension d (2 or 4) used in the fidelity formula.
    pub dimension: usize,
    /// Average gate fidelity 1 − (1 − p)(d − 1)/d.
    pub average_fidelity: f64,
    pub fidelity_stderr: f64,
}

/// Interleaved-RB gate fidelity from the standard and interleaved decays:
/// F = 1 − (1 − p_i/p_s)(d − 1)/d, with the uncertainty propagated from both
/// fits.
pub fn interleaved_fidelity(standard: &RBResult, interleaved: &RBResult) -> Result<(f64, f64)> {
    if standard.dimension != interleaved.dimension {
        return Err(Error::InvalidParameter("mismatched RB dimensions".into()));
    }
    let d = standard.dimension as f64;
    let (ps, pi) = (standard.fit.p, interleaved.fit.p);
    if ps <= 0.0 {
        return Err(Error::FitFailed("standard decay parameter is zero".into()));
    }
    let ratio = pi / ps;
    let scale = (d - 1.0) / d;
    let fidelity = 1.0 - (1.0 - ratio) * scale;
    let rel = ((interleaved.fit.p_stderr / pi).powi(2) + (standard.fit.p_stderr / ps).powi(2))
        .sqrt();
    Ok((fidelity, ratio * rel * scale))
}

/// Decoherence-limited average fidelity of a single-qubit operation of the
/// given duration: F̄ = (3 + e^{−t/T1} + 2e^{−t/T2}) / 6.
pub fn coherence_limit_1q(q: &QubitDecoherence, duration_ns: f64) -> f64 {
    let g1 = q.gamma1_per_ns();
    let g2 = 0.5 * g1 + q.gamma_phi_per_ns();
    (3.0 + (-g1 * duration_ns).exp() + 2.0 * (-g2 * duration_ns).exp()) / 6.0
}

/// Decoherence-limited average fidelity of a two-qubit operation: process
/// fidelities multiply across the pair, F̄ = (d·F_pro + 1)/(d + 1).
pub fn coherence_limit_2q(dec: &DecoherenceParams, duration_ns: f64) -> f64 {
    let pro = |q: &QubitDecoherence| (3.0 * coherence_limit_1q(q, duration_ns) - 1.0) / 2.0;
    (4.0 * pro(&dec.cubic) * pro(&dec.transmon) + 1.0) / 5.0
}

/// Runs two-qubit RB (standard, or interleaved when `config.interleaved` is
/// set) with the transmon as readout qubit.
pub fn run_rb(config: &RBConfig, device: &RbDevice) -> Result<RBResult> {
    config.validate()?;
    RbEngine::new(device, config.decoherence)?.run_two_qubit(config)
}

/// Runs single-qubit RB on one port with the other port idle and the CW
/// ZZ-null drive on.
pub fn single_qubit_rb(config: &RBConfig, device: &RbDevice, port: Port) -> Result<RBResult> {
    config.validate()?;
    RbEngine::new(device, config.decoherence)?.run_single_qubit(config, port)
}

/// One cached slot channel: a 16-dim unitary (closed system) or the full
/// superoperator as images of the matrix units (Lindblad).
enum SlotProp {
    Unitary(Box<DensityMatrix>),
    /// images[DIM·i + j] = E(|i⟩⟨j|).
    Lindblad(Vec<DensityMatrix>),
}

/// Control-software frame data for one single-qubit pulse kind, extracted
/// from the noiseless slot unitary.
#[derive(Debug, Clone, Copy)]
struct PulseFrame {
    /// Z frame advance of the driven port over the slot.
    frame_shift: f64,
    /// Azimuth the zero-phase pulse actually realizes (subtracted when
    /// programming).
    azimuth_offset: f64,
    /// Z phase accrued by the spectator port over the slot.
    spectator_phase: f64,
}

/// The randomized-benchmarking engine: cached dressed-frame slot channels
/// plus the frame bookkeeping needed to chain them exactly.
pub struct RbEngine {
    params: EffectiveParams,
    decoherence: Option<DecoherenceParams>,
    basis: DressedBasis,
    schedules: [PulseSchedule; N_SLOT_KINDS],
    slots: [OnceCell<SlotProp>; N_SLOT_KINDS],
    idle_phases: [f64; 2],
    pulse_frames: [PulseFrame; 4],
    /// (gauge_pre, gauge_post) per gate.
    gate_gauge: [([f64; 2], [f64; 2]); 3],
    /// Whether each gate exchanges the port frames.
    gate_swaps: [bool; 3],
}

/// Per-sequence execution state. `rho` is expressed in the dressed basis
/// (labels follow the bare states they derive from).
struct SeqState {
    rho: DensityMatrix,
    /// Pending virtual-Z frame per port (logical = Z(f)·ρ·Z(−f)).
    f: [f64; 2],
}

impl SeqState {
    fn new() -> Self {
        let mut rho = DensityMatrix::zeros();
        rho[(0, 0)] = C64::new(1.0, 0.0);
        Self { rho, f: [0.0, 0.0] }
    }
}

/// Multiplies ρ by the diagonal Z(y) = exp(i(y_a n_a + y_b n_b)) from the
/// left and Z(−y) from the right.
fn zrot(rho: &mut DensityMatrix, y: [f64; 2]) {
    let mut ph = [C64::new(1.0, 0.0); DIM];
    for (k, p) in ph.iter_mut().enumerate() {
        *p = C64::from_polar(1.0, y[0] * (k / N_LEVELS) as f64 + y[1] * (k % N_LEVELS) as f64);
    }
    for r in 0..DIM {
        for c in 0..DIM {
            rho[(r, c)] *= ph[r] * ph[c].conj();
        }
    }
}

/// Normalized ⟨σ_z⟩ readout, (1 + P(n=0) − P(n=1))/2; leakage counts zero.
fn survival(rho: &DensityMatrix, port: Port) -> f64 {
    let mut z = 0.0;
    for k in 0..DIM {
        let n = match port {
            Port::Cubic => k / N_LEVELS,
            Port::Transmon => k % N_LEVELS,
        };
        match n {
            0 => z += rho[(k, k)].re,
            1 => z -= rho[(k, k)].re,
            _ => {}
        }
    }
    (1.0 + z) / 2.0
}

impl RbEngine {
    /// Builds the engine for one device and decoherence model. Slot channels
    /// are integrated lazily, on the first use of each kind.
    pub fn new(device: &RbDevice, decoherence: Option<DecoherenceParams>) -> Result<Self> {
        let params = device.params;
        let basis = DressedBasis::new(&params, device.cw)?;
        let pulse_sched = |port: Port, angle: SqAngle| {
            PulseSchedule::new(vec![device.sq(port).tone(angle, 0.0, 0.0)], Some(device.cw))
                .with_duration(SLOT_NS)
        };
        let schedules = [
            PulseSchedule::empty(SLOT_NS).with_cw(device.cw),
            pulse_sched(Port::Cubic, SqAngle::Pi),
            pulse_sched(Port::Cubic, SqAngle::PiHalf),
            pulse_sched(Port::Transmon, SqAngle::Pi),
            pulse_sched(Port::Transmon, SqAngle::PiHalf),
            device.gate(TwoQubitGate::Cz).schedule.clone(),
            device.gate(TwoQubitGate::Iswap).schedule.clone(),
            device.gate(TwoQubitGate::Swap).schedule.clone(),
        ];

        // Frame data comes from the noiseless dressed computational-block
        // unitaries (it models the control software, which has no
        // decoherence).
        let u_idle = dressed_computational_unitary(&params, &schedules[0], &basis)?;
        let idle_phases = [
            wrap_angle(u_idle[(2, 2)].arg() - u_idle[(0, 0)].arg()),
            wrap_angle(u_idle[(1, 1)].arg() - u_idle[(0, 0)].arg()),
        ];
        let mut pulse_frames = [PulseFrame {
            frame_shift: 0.0,
            azimuth_offset: 0.0,
            spectator_phase: 0.0,
        }; 4];
        for (port, angle) in [
            (Port::Cubic, SqAngle::Pi),
            (Port::Cubic, SqAngle::PiHalf),
            (Port::Transmon, SqAngle::Pi),
            (Port::Transmon, SqAngle::PiHalf),
        ] {
            let idx = pulse_index(port, angle);
            let u = dressed_computational_unitary(&params, &schedules[1 + idx], &basis)?;
            pulse_frames[idx] = extract_pulse_frame(&u, port, angle);
        }
        let gate_gauge = [
            (device.gates[0].fsim.gauge_pre, device.gates[0].fsim.gauge_post),
            (device.gates[1].fsim.gauge_pre, device.gates[1].fsim.gauge_post),
            (device.gates[2].fsim.gauge_pre, device.gates[2].fsim.gauge_post),
        ];
        let gate_swaps = [
            TwoQubitGate::Cz.swaps_frames(),
            TwoQubitGate::Iswap.swaps_frames(),
            TwoQubitGate::Swap.swaps_frames(),
        ];

        Ok(Self {
            params,
            decoherence,
            basis,
            schedules,
            slots: Default::default(),
            idle_phases,
            pulse_frames,
            gate_gauge,
            gate_swaps,
        })
    }

    fn slot(&self, idx: usize) -> Result<&SlotProp> {
        if self.slots[idx].get().is_none() {
            let built = self.build_slot(idx)?;
            let _ = self.slots[idx].set(built);
        }
        Ok(self.slots[idx].get().expect("just initialized"))
    }

    fn build_slot(&self, idx: usize) -> Result<SlotProp> {
        let schedule = &self.schedules[idx];
        // Dressed-frame transforms at slot start and slot end.
        let w0 = self.basis.basis_at(0.0);
        let wt = self.basis.basis_at(SLOT_NS).adjoint();
        match &self.decoherence {
            None => {
                let prop = Propagator::new(&self.params, Frame::Rotating, None)?;
                let mut u = DensityMatrix::zeros();
                for col in 0..DIM {
                    let init = QuantumState::Vector(w0.column(col).into_owned());
                    let fin = prop.propagate_final(schedule, &init)?;
                    let QuantumState::Vector(v) = fin else {
                        unreachable!("closed-system propagation stays pure")
                    };
                    let v = wt * v;
                    for row in 0..DIM {
                        u[(row, col)] = v[row];
                    }
                }
                Ok(SlotProp::Unitary(Box::new(u)))
            }
            Some(dec) => {
                // Images of the dressed matrix units; hermiticity of the
                // generator gives E(X†) = E(X)†, so only i ≤ j is integrated.
                let prop = Propagator::new(&self.params, Frame::Rotating, Some(dec))?
                    .with_tolerance(1e-6, 1e-9);
                let mut images = vec![DensityMatrix::zeros(); DIM * DIM];
                for i in 0..DIM {
                    for j in i..DIM {
                        let mut op = w0.column(i) * w0.column(j).adjoint();
                        prop.propagate_operator(schedule, &mut op)?;
                        let op = wt * op * wt.adjoint();
                        if i != j {
                            images[DIM * j + i] = op.adjoint();
                        }
                        images[DIM * i + j] = op;
                    }
                }
                Ok(SlotProp::Lindblad(images))
            }
        }
    }

    /// Applies one slot conjugated by the dressed-diagonal D(φ) = e^{iφN}.
    fn apply_slot(&self, st: &mut SeqState, idx: usize, phi: f64) -> Result<()> {
        zrot(&mut st.rho, [-phi, -phi]);
        match self.slot(idx)? {
            SlotProp::Unitary(u) => {
                st.rho = u.as_ref() * st.rho * u.adjoint();
            }
            SlotProp::Lindblad(images) => {
                let mut out = DensityMatrix::zeros();
                for i in 0..DIM {
                    for j in 0..DIM {
                        let w = st.rho[(i, j)];
                        if w.norm_sqr() > 1e-30 {
                            out += images[DIM * i + j] * w;
                        }
                    }
                }
                st.rho = out;
            }
        }
        zrot(&mut st.rho, [phi, phi]);
        // Enforce hermiticity against integrator drift.
        st.rho = (st.rho + st.rho.adjoint()) * C64::new(0.5, 0.0);
        Ok(())
    }

    fn idle_slot(&self, st: &mut SeqState) -> Result<()> {
        self.apply_slot(st, 0, 0.0)?;
        st.f[0] -= self.idle_phases[0];
        st.f[1] -= self.idle_phases[1];
        Ok(())
    }

    fn pulse_slot(
        &self,
        st: &mut SeqState,
        port: Port,
        angle: SqAngle,
        logical_azimuth: f64,
    ) -> Result<()> {
        let p = port_index(port);
        let frame = self.pulse_frames[pulse_index(port, angle)];
        // Azimuth in the CW-locked frame; D(φ) realizes it exactly.
        let phi = logical_azimuth - st.f[p] - frame.azimuth_offset;
        self.apply_slot(st, 1 + pulse_index(port, angle), phi)?;
        st.f[p] -= frame.frame_shift;
        st.f[1 - p] -= frame.spectator_phase;
        Ok(())
    }

    fn gate_slot(&self, st: &mut SeqState, g: TwoQubitGate) -> Result<()> {
        let gi = gate_index(g);
        // Pump tones phase-locked to the CW: no conjugation.
        self.apply_slot(st, 5 + gi, 0.0)?;
        let (pre, post) = self.gate_gauge[gi];
        if self.gate_swaps[gi] {
            // Z(x)·FSim(π, θ_cp) = FSim(π, θ_cp)·Z(swap(x)).
            st.f = [st.f[1] - pre[1] - post[0], st.f[0] - pre[0] - post[1]];
        } else {
            st.f[0] -= pre[0] + post[0];
            st.f[1] -= pre[1] + post[1];
        }
        Ok(())
    }

    fn run_clifford1(&self, st: &mut SeqState, port: Port, elem: &Clifford1) -> Result<()> {
        for pulse in &elem.pulses {
            self.pulse_slot(st, port, pulse.angle, pulse.azimuth)?;
        }
        st.f[port_index(port)] += elem.virtual_z;
        Ok(())
    }

    fn run_clifford2(&self, st: &mut SeqState, elem: &Clifford2) -> Result<()> {
        let c1 = clifford1();
        if let Some((ia, ib)) = elem.pre {
            self.run_clifford1(st, Port::Cubic, &c1.elements[ia])?;
            self.run_clifford1(st, Port::Transmon, &c1.elements[ib])?;
        }
        if let Some(g) = elem.gate {
            self.gate_slot(st, g)?;
        }
        let (pa, pb) = elem.post;
        self.run_clifford1(st, Port::Cubic, &c1.elements[pa])?;
        self.run_clifford1(st, Port::Transmon, &c1.elements[pb])?;
        Ok(())
    }

    fn execute_2q(&self, seq: &RbSequence, interleaved: Option<TwoQubitGate>) -> Result<f64> {
        let group = clifford2();
        let mut st = SeqState::new();
        let last = seq.elements.len() - 1;
        for (i, &k) in seq.elements.iter().enumerate() {
            self.run_clifford2(&mut st, &group.elements[k])?;
            if i < last {
                if let Some(g) = interleaved {
                    self.gate_slot(&mut st, g)?;
                }
            }
        }
        Ok(survival(&st.rho, Port::Transmon))
    }

    fn execute_1q(&self, seq: &RbSequence, port: Port) -> Result<f64> {
        let group = clifford1();
        let mut st = SeqState::new();
        for &k in &seq.elements {
            self.run_clifford1(&mut st, port, &group.elements[k])?;
        }
        Ok(survival(&st.rho, port))
    }

    /// Two-qubit RB over this engine's decoherence model (the config's
    /// `decoherence` field is assumed to match).
    pub fn run_two_qubit(&self, config: &RBConfig) -> Result<RBResult> {
        config.validate()?;
        let survivals = |n: usize, r: usize| -> Result<f64> {
            let seq = generate_sequence(config, n, r);
            match config.gate_model {
                GateModel::Ideal => Ok(ideal_survival_2q(&seq, config.interleaved)),
                GateModel::Calibrated => self.execute_2q(&seq, config.interleaved),
            }
        };
        reduce(config, 4, survivals)
    }

    /// Single-qubit RB on one port over this engine's decoherence model.
    pub fn run_single_qubit(&self, config: &RBConfig, port: Port) -> Result<RBResult> {
        config.validate()?;
        let survivals = |n: usize, r: usize| -> Result<f64> {
            let seq = generate_sequence_1q(config, n, r);
            match config.gate_model {
                GateModel::Ideal => Ok(ideal_survival_1q(&seq)),
                GateModel::Calibrated => self.execute_1q(&seq, port),
            }
        };
        reduce(config, 2, survivals)
    }
}

/// Extracts the frame data of one pulse slot from its noiseless unitary, in
/// the two-sided-Z gauge Z(s)·R(θ, offset) on the driven port plus a pure Z
/// phase on the spectator (π pulses use the s = 0 gauge, which always
/// exists).
fn extract_pulse_frame(u: &Matrix4<C64>, port: Port, angle: SqAngle) -> PulseFrame {
    // (d0, d1): driven-port {g, e} with spectator in g; (e0, e1): the same
    // with spectator in e.
    let (d0, d1, e0, e1) = match port {
        Port::Cubic => (0, 2, 1, 3),
        Port::Transmon => (0, 1, 2, 3),
    };
    match angle {
        SqAngle::PiHalf => {
            let gamma = u[(d0, d0)].arg();
            let s = u[(d1, d1)].arg() - gamma;
            let phi = u[(d1, d0)].arg() - gamma - s + FRAC_PI_2;
            PulseFrame {
                frame_shift: wrap_angle(s),
                azimuth_offset: wrap_angle(phi),
                spectator_phase: wrap_angle(u[(e0, e0)].arg() - gamma),
            }
        }
        SqAngle::Pi => {
            let a01 = u[(d0, d1)].arg();
            let a10 = u[(d1, d0)].arg();
            PulseFrame {
                frame_shift: 0.0,
                azimuth_offset: wrap_angle((a10 - a01) / 2.0),
                spectator_phase: wrap_angle(u[(e1, e0)].arg() - a10),
            }
        }
    }
}

/// Noiseless ideal-matrix survival (perfect-gate consistency mode).
fn ideal_survival_2q(seq: &RbSequence, interleaved: Option<TwoQubitGate>) -> f64 {
    let group = clifford2();
    let mut u = Matrix4::identity();
    let last = seq.elements.len() - 1;
    for (i, &k) in seq.elements.iter().enumerate() {
        u = group.elements[k].matrix * u;
        if i < last {
            if let Some(g) = interleaved {
                u = g.unitary() * u;
            }
        }
    }
    let col = u.column(0);
    let z = col[0].norm_sqr() + col[2].norm_sqr() - col[1].norm_sqr() - col[3].norm_sqr();
    (1.0 + z) / 2.0
}

fn ideal_survival_1q(seq: &RbSequence) -> f64 {
    let group = clifford1();
    let mut u = Matrix2::identity();
    for &k in &seq.elements {
        u = group.elements[k].matrix * u;
    }
    let z = u[(0, 0)].norm_sqr() - u[(1, 0)].norm_sqr();
    (1.0 + z) / 2.0
}

/// Collects survivals, applies optional shot sampling, guards against
/// non-decaying data, fits, and derives the fidelity.
fn reduce<F: Fn(usize, usize) -> Result<f64>>(
    config: &RBConfig,
    dimension: usize,
    survivals: F,
) -> Result<RBResult> {
    let mut means = Vec::with_capacity(config.lengths.len());
    let mut sems = Vec::with_capacity(config.lengths.len());
    for &n in &config.lengths {
        let mut vals = Vec::with_capacity(config.randomizations);
        for r in 0..config.randomizations {
            let mut m = survivals(n, r)?;
            if let Some(shots) = config.shots {
                m = sample_shots(config.seed, n, r, m, shots);
            }
            vals.push(m);
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (vals.len() - 1) as f64;
        means.push(mean);
        sems.push((var / vals.len() as f64).sqrt());
    }

    // Non-monotone decay beyond noise signals a calibration bug.
    let z = mann_kendall_z(&means);
    if z > 1.645 && means.last() > means.first().map(|m| m + 1e-3).as_ref() {
        return Err(Error::FitFailed(format!(
            "survival increases with sequence length (Mann-Kendall z = {z:.2})"
        )));
    }

    let fit = fit_decay(&config.lengths, &means, &sems)?;
    if fit.p <= 0.0 || fit.p > 1.0 {
        return Err(Error::FitFailed(format!("decay parameter p = {} out of (0, 1]", fit.p)));
    }
    let scale = (dimension as f64 - 1.0) / dimension as f64;
    Ok(RBResult {
        lengths: config.lengths.clone(),
        means,
        sems,
        fit,
        dimension,
        average_fidelity: 1.0 - (1.0 - fit.p) * scale,
        fidelity_stderr: fit.p_stderr * scale,
    })
}

/// Binomial readout sampling with a dedicated, reproducible stream.
fn sample_shots(seed: u64, length: usize, randomization: usize, m: f64, shots: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1u64 << 63) | ((length as u64) << 32) | randomization as u64);
    let p = m.clamp(0.0, 1.0);
    let mut hits = 0usize;
    for _ in 0..shots {
        hits += (rng.gen::<f64>() < p) as usize;
    }
    hits as f64 / shots as f64
}

#[cfg(test)]
mod tests {
    use std::sync::OnceLock;

    use super::*;
    use crate::effective::{closed_form_effective, reference_device};

    fn device() -> &'static RbDevice {
        static DEVICE: OnceLock<RbDevice> = OnceLock::new();
        DEVICE.get_or_init(|| {
            let params = closed_form_effective(&reference_device().unwrap()).unwrap();
            RbDevice::calibrate(&params).unwrap()
        })
    }

    fn noiseless_engine() -> RbEngine {
        RbEngine::new(device(), None).unwrap()
    }

    /// Pure density of an unnormalized computational superposition.
    fn superposition_density() -> DensityMatrix {
        let mut v = [C64::new(0.0, 0.0); DIM];
        // Computational indices gg, ge, eg, ee are 0, 1, 4, 5.
        v[0] = C64::new(0.5, 0.0);
        v[1] = C64::new(0.35, 0.2);
        v[4] = C64::new(-0.4, 0.3);
        v[5] = C64::new(0.3, -0.45);
        let norm_sq: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let mut rho = DensityMatrix::zeros();
        for r in 0..DIM {
            for c in 0..DIM {
                rho[(r, c)] = v[r] * v[c].conj() / norm_sq;
            }
        }
        rho
    }

    #[test]
    fn chained_idle_slots_match_continuous_cw() {
        let dev = device();
        let engine = noiseless_engine();
        let bare = superposition_density();

        // Engine path: three cached dressed idle slots.
        let w0 = engine.basis.basis_at(0.0);
        let mut st = SeqState::new();
        st.rho = w0.adjoint() * bare * w0;
        engine.idle_slot(&mut st).unwrap();
        engine.idle_slot(&mut st).unwrap();
        engine.idle_slot(&mut st).unwrap();

        // Direct path: one continuous 150 ns CW-only propagation, expressed
        // in the dressed basis at the final time.
        let schedule = PulseSchedule::empty(3.0 * SLOT_NS).with_cw(dev.cw);
        let prop = Propagator::new(&dev.params, Frame::Rotating, None).unwrap();
        let fin = prop.propagate_final(&schedule, &QuantumState::Density(bare)).unwrap();
        let QuantumState::Density(direct) = fin else { panic!("density in, density out") };
        let wt = engine.basis.basis_at(3.0 * SLOT_NS);
        let direct = wt.adjoint() * direct * wt;
        let err = (st.rho - direct).norm();
        assert!(err < 1e-6, "slot chaining deviates from continuous CW: {err:.2e}");
    }

    #[test]
    fn conjugated_pulse_slot_matches_programmed_azimuth() {
        let dev = device();
        let engine = noiseless_engine();
        let azimuth = 0.7;
        let bare = superposition_density();
        let w0 = engine.basis.basis_at(0.0);

        // Engine path: the cached zero-phase cubic pi/2 slot conjugated by
        // D(azimuth).
        let mut st = SeqState::new();
        st.rho = w0.adjoint() * bare * w0;
        let idx = 1 + pulse_index(Port::Cubic, SqAngle::PiHalf);
        engine.apply_slot(&mut st, idx, azimuth).unwrap();

        // Direct path: the same slot with the azimuth programmed into the
        // tone phase, dressed at the final time.
        let tone = dev.sq(Port::Cubic).tone(SqAngle::PiHalf, azimuth, 0.0);
        let schedule = PulseSchedule::new(vec![tone], Some(dev.cw)).with_duration(SLOT_NS);
        let prop = Propagator::new(&dev.params, Frame::Rotating, None).unwrap();
        let fin = prop.propagate_final(&schedule, &QuantumState::Density(bare)).unwrap();
        let QuantumState::Density(direct) = fin else { panic!("density in, density out") };
        let wt = engine.basis.basis_at(SLOT_NS);
        let direct = wt.adjoint() * direct * wt;
        let err = (st.rho - direct).norm();
        assert!(err < 1e-6, "azimuth conjugation deviates from direct drive: {err:.2e}");
    }

    #[test]
    fn ideal_gate_model_decay_is_flat() {
        let mut config = RBConfig::two_qubit(7);
        config.decoherence = None;
        config.gate_model = GateModel::Ideal;
        config.lengths = vec![1, 2, 4, 8, 16];
        config.randomizations = 4;
        let survivals = |n: usize, r: usize| {
            Ok(ideal_survival_2q(&generate_sequence(&config, n, r), config.interleaved))
        };
        let result = reduce(&config, 4, survivals).unwrap();
        for (&n, &m) in result.lengths.iter().zip(&result.means) {
            assert!((m - 1.0).abs() < 1e-9, "length {n}: survival {m}");
        }
        assert!(result.fit.p > 0.999, "p = {}", result.fit.p);

        let mut interleaved = config.clone();
        interleaved.interleaved = Some(TwoQubitGate::Swap);
        let survivals = |n: usize, r: usize| {
            Ok(ideal_survival_2q(&generate_sequence(&interleaved, n, r), interleaved.interleaved))
        };
        let result = reduce(&interleaved, 4, survivals).unwrap();
        assert!(result.means.iter().all(|m| (m - 1.0).abs() < 1e-9));

        let mut one_q = RBConfig::single_qubit(3);
        one_q.decoherence = None;
        one_q.gate_model = GateModel::Ideal;
        one_q.lengths = vec![1, 3, 9, 27];
        one_q.randomizations = 4;
        let survivals = |n: usize, r: usize| Ok(ideal_survival_1q(&generate_sequence_1q(&one_q, n, r)));
        let result = reduce(&one_q, 2, survivals).unwrap();
        assert!(result.means.iter().all(|m| (m - 1.0).abs() < 1e-9));
    }

    #[test]
    fn sequence_generation_is_deterministic() {
        let config = RBConfig::two_qubit(42);
        let a = generate_sequence(&config, 12, 3);
        let b = generate_sequence(&config, 12, 3);
        assert_eq!(a, b);
        assert_ne!(a, generate_sequence(&config, 12, 4));
        let other_seed = RBConfig::two_qubit(43);
        assert_ne!(a, generate_sequence(&other_seed, 12, 3));
        assert_eq!(a.elements.len(), 12);
    }

    #[test]
    fn noiseless_calibrated_single_qubit_rb_has_small_coherent_floor() {
        let engine = noiseless_engine();
        let mut config = RBConfig::single_qubit(11);
        config.decoherence = None;
        config.lengths = vec![1, 4, 8, 16, 24];
        config.randomizations = 8;
        for port in [Port::Cubic, Port::Transmon] {
            let result = engine.run_single_qubit(&config, port).unwrap();
            // The CW-dressed slots leave a ~1%-scale coherent floor per
            // Clifford; anything worse signals broken frame bookkeeping.
            assert!(
                result.fit.p > 0.97,
                "{port:?}: noiseless p = {} (frame bookkeeping?)",
                result.fit.p
            );
            assert!(result.means[0] > 0.98, "{port:?}: m(1) = {}", result.means[0]);
        }
    }

    #[test]
    fn noiseless_calibrated_two_qubit_rb_has_small_coherent_floor() {
        let engine = noiseless_engine();
        let mut config = RBConfig::two_qubit(13);
        config.decoherence = None;
        config.lengths = vec![1, 2, 4, 7];
        config.randomizations = 5;
        let result = engine.run_two_qubit(&config).unwrap();
        assert!(
            result.fit.p > 0.9,
            "noiseless two-qubit p = {} (frame bookkeeping?)",
            result.fit.p
        );
        assert!(result.means[0] > 0.95, "m(1) = {}", result.means[0]);
    }

    #[test]
    fn lindblad_idle_slot_decays_toward_ground() {
        let dec = DecoherenceParams::reference();
        let engine = RbEngine::new(device(), Some(dec)).unwrap();
        let mut st = SeqState::new();
        // |ee><ee|.
        st.rho = DensityMatrix::zeros();
        st.rho[(5, 5)] = C64::new(1.0, 0.0);
        for _ in 0..4 {
            engine.idle_slot(&mut st).unwrap();
        }
        let trace: f64 = (0..DIM).map(|k| st.rho[(k, k)].re).sum();
        assert!((trace - 1.0).abs() < 1e-4, "trace drift {trace}");
        let p_ee = st.rho[(5, 5)].re;
        // 200 ns of T1 = 3.9/4.0 us decay: survival ~ exp(-0.2/3.9-0.2/4.0),
        // modulated by the CW dressing; allow a generous band.
        assert!(p_ee < 0.995 && p_ee > 0.85, "p_ee after 200 ns = {p_ee}");
        let p_gg = st.rho[(0, 0)].re;
        assert!(p_gg > 0.0, "ground population should grow, got {p_gg}");
    }

    #[test]
    fn coherence_limits_match_reference_values() {
        let dec = DecoherenceParams::reference();
        // Cubic: T1 = 3.9 us, T2* = 0.6 us over 50 ns.
        let f = coherence_limit_1q(&dec.cubic, 50.0);
        assert!((f - 0.9712).abs() < 5e-4, "cubic limit {f}");
        let f2 = coherence_limit_2q(&dec, 50.0);
        assert!(f2 > 0.94 && f2 < 0.96, "two-qubit limit {f2}");
    }

    fn logical_block(st: &SeqState) -> Matrix4<C64> {
        let mut rho = st.rho;
        zrot(&mut rho, st.f);
        let idx = [0usize, 1, 4, 5];
        let mut m = Matrix4::zeros();
        for (r, &ir) in idx.iter().enumerate() {
            for (c, &ic) in idx.iter().enumerate() {
                m[(r, c)] = rho[(ir, ic)];
            }
        }
        m
    }

    /// Single pulses and full Cliffords (pulses + gate + virtual Z) acting on
    /// a computational superposition must track the ideal matrices up to the
    /// small coherent calibration floor.
    #[test]
    fn slots_track_ideal_cliffords() {
        let engine = noiseless_engine();
        let g2 = clifford2();
        let c1 = clifford1();
        let id = c1.identity();
        const TOL: f64 = 0.05;

        // Initial superposition over the computational block (dressed
        // labels).
        let init = superposition_density();
        let mut init4 = Matrix4::zeros();
        let idx = [0usize, 1, 4, 5];
        for (r, &ir) in idx.iter().enumerate() {
            for (c, &ic) in idx.iter().enumerate() {
                init4[(r, c)] = init[(ir, ic)];
            }
        }

        let r2 = |theta: f64, phi: f64| {
            let c = C64::new((theta / 2.0).cos(), 0.0);
            let s = (theta / 2.0).sin();
            Matrix2::new(
                c,
                C64::new(0.0, -s) * C64::new(0.0, -phi).exp(),
                C64::new(0.0, -s) * C64::new(0.0, phi).exp(),
                c,
            )
        };

        // Single pulses, each with an excited spectator in the superposition.
        for (label, port, angle) in [
            ("cubic pi/2", Port::Cubic, SqAngle::PiHalf),
            ("transmon pi/2", Port::Transmon, SqAngle::PiHalf),
            ("cubic pi", Port::Cubic, SqAngle::Pi),
            ("transmon pi", Port::Transmon, SqAngle::Pi),
        ] {
            let mut st = SeqState::new();
            st.rho = init;
            engine.pulse_slot(&mut st, port, angle, 0.3).unwrap();
            let theta = match angle {
                SqAngle::Pi => PI,
                SqAngle::PiHalf => FRAC_PI_2,
            };
            let r = r2(theta, 0.3);
            let ideal = match port {
                Port::Cubic => r.kronecker(&Matrix2::identity()),
                Port::Transmon => Matrix2::identity().kronecker(&r),
            };
            let want = ideal * init4 * ideal.adjoint();
            let err = (logical_block(&st) - want).norm();
            assert!(err < TOL, "{label}: err = {err:.3e}");
        }

        // Full Clifford elements mixing pulse layers, gates, and virtual Zs.
        for (label, pre, gate, post) in [
            ("pure CZ", Some((id, id)), Some(TwoQubitGate::Cz), (id, id)),
            ("pure SWAP", None, Some(TwoQubitGate::Swap), (id, id)),
            ("layers only", None, None, (3, 7)),
            ("CZ + layers", Some((1, 2)), Some(TwoQubitGate::Cz), (3, 7)),
            ("iSWAP + layers", Some((2, 1)), Some(TwoQubitGate::Iswap), (5, 9)),
            ("SWAP + layers", None, Some(TwoQubitGate::Swap), (4, 6)),
        ] {
            let mut ideal = match pre {
                Some((a, b)) => c1.elements[a].matrix.kronecker(&c1.elements[b].matrix),
                None => Matrix4::identity(),
            };
            if let Some(g) = gate {
                ideal = g.unitary() * ideal;
            }
            ideal = c1.elements[post.0].matrix.kronecker(&c1.elements[post.1].matrix) * ideal;

            let k = g2.find(&ideal).expect("constructed element is in the group");
            let mut st = SeqState::new();
            st.rho = init;
            engine.run_clifford2(&mut st, &g2.elements[k]).unwrap();
            let want = ideal * init4 * ideal.adjoint();
            let err = (logical_block(&st) - want).norm();
            assert!(err < TOL, "{label}: err = {err:.3e}");
        }
    }
}
