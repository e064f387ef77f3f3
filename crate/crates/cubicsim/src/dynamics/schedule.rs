//! Drive schedules, decoherence parameters and quantum states.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::envelope::PulseEnvelope;
use crate::effective::{TruncatedHamiltonian, DIM, N_LEVELS};
use crate::linalg::{C64, C_ZERO};
use crate::{Error, Result};

/// State vector on the 16-dimensional dressed two-mode space.
pub type StateVector = SVector<C64, DIM>;
/// Density matrix on the same space.
pub type DensityMatrix = SMatrix<C64, DIM, DIM>;

/// Physical drive port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    Cubic,
    Transmon,
}

/// One enveloped drive tone.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DriveTone {
    pub target: Port,
    /// Carrier frequency ω_d/2π (GHz).
    pub carrier_ghz: f64,
    /// Carrier phase θ (rad).
    pub phase: f64,
    pub envelope: PulseEnvelope,
    /// Start of the envelope support on the schedule clock (ns).
    pub start_ns: f64,
}

impl DriveTone {
    /// End of the envelope support (ns).
    pub fn end_ns(&self) -> f64 {
        self.start_ns + self.envelope.support_ns()
    }
}

/// An always-on continuous-wave tone (the ZZ-nulling drive).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CwTone {
    /// CW frequency (GHz).
    pub freq_ghz: f64,
    /// Effective Rabi amplitude Ω (GHz).
    pub amplitude_ghz: f64,
}

/// A complete drive schedule: enveloped tones plus an optional CW tone.
///
/// Tones may overlap (composite pulses). The duration defaults to the latest
/// tone end and can be extended explicitly (e.g. CW-only or free-evolution
/// schedules).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub tones: Vec<DriveTone>,
    pub cw: Option<CwTone>,
    pub duration_ns: f64,
}

impl PulseSchedule {
    pub fn new(tones: Vec<DriveTone>, cw: Option<CwTone>) -> Self {
        let duration_ns = tones.iter().map(DriveTone::end_ns).fold(0.0, f64::max);
        Self { tones, cw, duration_ns }
    }

    /// Free evolution (or CW-only) schedule of the given length.
    pub fn empty(duration_ns: f64) -> Self {
        Self { tones: Vec::new(), cw: None, duration_ns }
    }

    pub fn with_cw(mut self, cw: CwTone) -> Self {
        self.cw = Some(cw);
        self
    }

    pub fn with_duration(mut self, duration_ns: f64) -> Self {
        self.duration_ns = duration_ns;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.duration_ns.is_finite() || self.duration_ns < 0.0 {
            return Err(Error::InvalidParameter("schedule duration must be finite and >= 0".into()));
        }
        for tone in &self.tones {
            if tone.carrier_ghz < 0.0 {
                return Err(Error::InvalidParameter("carrier frequency must be >= 0".into()));
            }
            if tone.envelope.amplitude < 0.0 {
                return Err(Error::InvalidParameter("envelope amplitude must be >= 0".into()));
            }
        }
        if let Some(cw) = &self.cw {
            if cw.freq_ghz < 0.0 || cw.amplitude_ghz < 0.0 {
                return Err(Error::InvalidParameter("CW tone must have freq, amplitude >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Single-qubit decoherence times (µs, as quoted in experiments).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QubitDecoherence {
    pub t1_us: f64,
    pub t2_star_us: f64,
    /// Echo coherence time (informational; not used by the Markovian model).
    pub t2_echo_us: Option<f64>,
}

impl QubitDecoherence {
    pub fn validate(&self) -> Result<()> {
        if self.t1_us <= 0.0 || self.t2_star_us <= 0.0 {
            return Err(Error::InvalidParameter("T1 and T2* must be positive".into()));
        }
        if self.t2_star_us > 2.0 * self.t1_us * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "T2* = {} us exceeds 2 T1 = {} us",
                self.t2_star_us,
                2.0 * self.t1_us
            )));
        }
        Ok(())
    }

    /// Relaxation rate 1/T1 (1/ns).
    pub fn gamma1_per_ns(&self) -> f64 {
        1.0 / crate::units::us_to_ns(self.t1_us)
    }

    /// Pure-dephasing rate 1/Tφ = 1/T2* − 1/(2 T1) (1/ns); zero when
    /// T1-limited.
    pub fn gamma_phi_per_ns(&self) -> f64 {
        let rate = 1.0 / crate::units::us_to_ns(self.t2_star_us)
            - 0.5 / crate::units::us_to_ns(self.t1_us);
        rate.max(0.0)
    }

    /// Pure-dephasing time Tφ (µs); infinite when T1-limited.
    pub fn t_phi_us(&self) -> f64 {
        let rate = 1.0 / self.t2_star_us - 0.5 / self.t1_us;
        if rate <= 0.0 {
            f64::INFINITY
        } else {
            1.0 / rate
        }
    }
}

/// Decoherence parameters for the pair of qubits.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecoherenceParams {
    pub cubic: QubitDecoherence,
    pub transmon: QubitDecoherence,
}

impl DecoherenceParams {
    pub fn new(cubic: QubitDecoherence, transmon: QubitDecoherence) -> Result<Self> {
        cubic.validate()?;
        transmon.validate()?;
        Ok(Self { cubic, transmon })
    }

    /// Reference coherence set: cubic T1 = 3.9 µs, T2* = 0.6 µs
    /// (T2E = 1.5 µs); transmon T1 = 4.0 µs, T2* = 2.3 µs.
    pub fn reference() -> Self {
        Self {
            cubic: QubitDecoherence { t1_us: 3.9, t2_star_us: 0.6, t2_echo_us: Some(1.5) },
            transmon: QubitDecoherence { t1_us: 4.0, t2_star_us: 2.3, t2_echo_us: None },
        }
    }
}

/// Pure state vector or density matrix on the dressed two-mode space
/// (4 levels per mode; basis index 4·n_cubic + n_transmon).
#[derive(Debug, Clone)]
pub enum QuantumState {
    Vector(StateVector),
    Density(DensityMatrix),
}

impl QuantumState {
    /// Basis state |i⟩_c ⊗ |j⟩_t as a state vector.
    pub fn basis(i: usize, j: usize) -> Self {
        assert!(i < N_LEVELS && j < N_LEVELS);
        let mut v = StateVector::from_element(C_ZERO);
        v[TruncatedHamiltonian::index(i, j)] = C64::new(1.0, 0.0);
        QuantumState::Vector(v)
    }

    pub fn from_vector(v: StateVector) -> Self {
        QuantumState::Vector(v)
    }

    /// Promotes to a density matrix (|ψ⟩⟨ψ| for pure states).
    pub fn to_density(&self) -> Self {
        match self {
            QuantumState::Vector(v) => QuantumState::Density(v * v.adjoint()),
            QuantumState::Density(r) => QuantumState::Density(*r),
        }
    }

    /// Population of basis state |i⟩_c ⊗ |j⟩_t.
    pub fn population(&self, i: usize, j: usize) -> f64 {
        let k = TruncatedHamiltonian::index(i, j);
        match self {
            QuantumState::Vector(v) => v[k].norm_sqr(),
            QuantumState::Density(r) => r[(k, k)].re,
        }
    }

    /// Complex amplitude ⟨i, j|ψ⟩ (pure states only).
    pub fn amplitude(&self, i: usize, j: usize) -> Option<C64> {
        match self {
            QuantumState::Vector(v) => Some(v[TruncatedHamiltonian::index(i, j)]),
            QuantumState::Density(_) => None,
        }
    }

    /// Matrix element ⟨i1,j1| ρ |i2,j2⟩ of the density operator.
    pub fn coherence(&self, (i1, j1): (usize, usize), (i2, j2): (usize, usize)) -> C64 {
        let (k1, k2) = (TruncatedHamiltonian::index(i1, j1), TruncatedHamiltonian::index(i2, j2));
        match self {
            QuantumState::Vector(v) => v[k1] * v[k2].conj(),
            QuantumState::Density(r) => r[(k1, k2)],
        }
    }

    /// Occupation expectation ⟨n⟩ of one mode.
    pub fn mode_occupation(&self, port: Port) -> f64 {
        let mut acc = 0.0;
        for i in 0..N_LEVELS {
            for j in 0..N_LEVELS {
                let n = match port {
                    Port::Cubic => i,
                    Port::Transmon => j,
                } as f64;
                acc += n * self.population(i, j);
            }
        }
        acc
    }

    /// ⟨σ_z⟩ of one qubit on its {0, 1} subspace: P(n=0) − P(n=1); leakage
    /// levels contribute zero.
    pub fn sigma_z(&self, port: Port) -> f64 {
        let mut acc = 0.0;
        for i in 0..N_LEVELS {
            for j in 0..N_LEVELS {
                let n = match port {
                    Port::Cubic => i,
                    Port::Transmon => j,
                };
                match n {
                    0 => acc += self.population(i, j),
                    1 => acc -= self.population(i, j),
                    _ => {}
                }
            }
        }
        acc
    }

    /// Norm (vector) or trace (density matrix).
    pub fn norm_or_trace(&self) -> f64 {
        match self {
            QuantumState::Vector(v) => v.norm(),
            QuantumState::Density(r) => r.diagonal().iter().map(|z| z.re).sum(),
        }
    }

    /// Applies an (ideal, instantaneous) unitary: ψ → Uψ or ρ → UρU†.
    pub fn apply_unitary(&mut self, u: &SMatrix<C64, DIM, DIM>) {
        match self {
            QuantumState::Vector(v) => *v = u * *v,
            QuantumState::Density(r) => *r = u * *r * u.adjoint(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn basis_state_populations() {
        let s = QuantumState::basis(1, 2);
        assert_eq!(s.population(1, 2), 1.0);
        assert_eq!(s.population(0, 0), 0.0);
        assert_relative_eq!(s.mode_occupation(Port::Cubic), 1.0);
        assert_relative_eq!(s.mode_occupation(Port::Transmon), 2.0);
        // Transmon is in a leakage level: sigma_z sees nothing.
        assert_eq!(s.sigma_z(Port::Transmon), 0.0);
        assert_eq!(s.sigma_z(Port::Cubic), -1.0);
    }

    #[test]
    fn density_promotion_preserves_populations() {
        let s = QuantumState::basis(1, 0);
        let d = s.to_density();
        assert_relative_eq!(d.population(1, 0), 1.0);
        assert_relative_eq!(d.norm_or_trace(), 1.0);
    }

    #[test]
    fn tphi_derivation() {
        let q = QubitDecoherence { t1_us: 3.9, t2_star_us: 0.6, t2_echo_us: Some(1.5) };
        q.validate().unwrap();
        // 1/Tphi = 1/0.6 - 1/7.8.
        assert_relative_eq!(q.t_phi_us(), 1.0 / (1.0 / 0.6 - 1.0 / 7.8), epsilon = 1e-12);
        // T1-limited qubit has no pure dephasing.
        let t1_limited = QubitDecoherence { t1_us: 2.0, t2_star_us: 4.0, t2_echo_us: None };
        t1_limited.validate().unwrap();
        assert_eq!(t1_limited.gamma_phi_per_ns(), 0.0);
        assert!(t1_limited.t_phi_us().is_infinite());
    }

    #[test]
    fn t2_exceeding_2t1_rejected() {
        let q = QubitDecoherence { t1_us: 1.0, t2_star_us: 2.5, t2_echo_us: None };
        assert!(q.validate().is_err());
    }

    #[test]
    fn schedule_duration_from_tones() {
        let env = PulseEnvelope::gaussian(0.1, 18.6);
        let s = PulseSchedule::new(
            vec![DriveTone {
                target: Port::Transmon,
                carrier_ghz: 4.3,
                phase: 0.0,
                envelope: env,
                start_ns: 10.0,
            }],
            None,
        );
        assert_relative_eq!(s.duration_ns, 10.0 + env.support_ns());
        s.validate().unwrap();
    }
}
