//! The flux-biased SNAIL ("cubic transmon") circuit.
//!
//! Two models of the same device:
//!
//! * **single-phase**: the SNAIL loop is reduced to one phase variable; the
//!   two-cosine inductive potential is Taylor-expanded around its minimum and
//!   quantized, giving closed-form bare mode parameters (ω_c0, β_c0, α_c0).
//! * **full circuit**: both superconducting islands are kept and the
//!   Hamiltonian is diagonalized in the two-island charge basis
//!   (Cooper-pair numbers n1, n2 up to a cutoff N).
//!
//! Both produce the bare cubic-mode parameters versus flux; their agreement
//! over the operating flux range is one of the headline validation checks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, C64};
use crate::units::TWO_PI;
use crate::{Error, Result};

/// Default charge-basis cutoff (dimension (2·12+1)² = 625); chosen so the
/// convergence invariant holds with margin for the reference parameters.
pub const DEFAULT_CHARGE_CUTOFF: usize = 12;

/// Physical parameters of the SNAIL circuit.
///
/// `k1` scales the small junction, `k2`/`k3` the two large junctions, all
/// relative to the junction energy scale `junction_scale` (E_J0). The reduced
/// flux is φ = 2πΦ/Φ0 in radians, canonicalized to [−π, π].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SnailParams {
    /// Single-electron charging energy E_C of the shunt capacitance (GHz).
    pub charging_energy: f64,
    /// Junction energy scale E_J0 (GHz).
    pub junction_scale: f64,
    /// Small-junction scale factor.
    pub k1: f64,
    /// Large-junction scale factors.
    pub k2: f64,
    pub k3: f64,
    /// Reduced external flux φ = 2πΦ/Φ0 (rad), canonical range [−π, π].
    pub reduced_flux: f64,
}

impl SnailParams {
    /// Validating constructor; flux outside [−π, π] is reduced modulo 2π.
    pub fn new(
        charging_energy: f64,
        junction_scale: f64,
        k1: f64,
        k2: f64,
        k3: f64,
        reduced_flux: f64,
    ) -> Result<Self> {
        if charging_energy <= 0.0 || junction_scale <= 0.0 {
            return Err(Error::InvalidParameter(
                "charging_energy and junction_scale must be positive".into(),
            ));
        }
        if k1 <= 0.0 || k2 <= 0.0 || k3 <= 0.0 {
            return Err(Error::InvalidParameter("k1, k2, k3 must be positive".into()));
        }
        let mut phi = reduced_flux.rem_euclid(TWO_PI);
        if phi > std::f64::consts::PI {
            phi -= TWO_PI;
        }
        Ok(Self { charging_energy, junction_scale, k1, k2, k3, reduced_flux: phi })
    }

    /// Constructor taking flux in flux quanta Φ/Φ0.
    pub fn from_flux_quanta(
        charging_energy: f64,
        junction_scale: f64,
        k1: f64,
        k2: f64,
        k3: f64,
        flux_quanta: f64,
    ) -> Result<Self> {
        Self::new(charging_energy, junction_scale, k1, k2, k3, TWO_PI * flux_quanta)
    }

    /// Same parameters at a different flux (in flux quanta).
    pub fn at_flux_quanta(&self, flux_quanta: f64) -> Self {
        let mut p = *self;
        let mut phi = (TWO_PI * flux_quanta).rem_euclid(TWO_PI);
        if phi > std::f64::consts::PI {
            phi -= TWO_PI;
        }
        p.reduced_flux = phi;
        p
    }

    /// Flux in flux quanta Φ/Φ0.
    pub fn flux_quanta(&self) -> f64 {
        self.reduced_flux / TWO_PI
    }
}

/// Taylor expansion of the single-phase inductive potential about its
/// minimum: U(φ0 + δ) ≈ U(φ0) + D2 δ² + D3 δ³ + D4 δ⁴.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PotentialExpansion {
    /// Location of the potential minimum (rad).
    pub minimum_phase: f64,
    /// D_k = U^{(k)}(φ0)/k! (GHz).
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
}

/// Bare parameters of the quantized cubic mode.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BareCubicModes {
    /// Bare mode frequency ω_c0 (GHz).
    pub omega_c0: f64,
    /// Second-order (three-wave, parity-violating) nonlinearity β_c0 (GHz).
    pub beta_c0: f64,
    /// Third-order nonlinearity (anharmonicity) α_c0 (GHz).
    pub alpha_c0: f64,
    /// Effective charging energy E_C′ (GHz).
    pub charging_prime: f64,
}

/// Single-phase inductive potential U(φ1) at fixed external flux (GHz).
pub fn potential(p: &SnailParams, phi1: f64) -> f64 {
    let ej0 = p.junction_scale;
    -p.k1 * ej0 * phi1.cos() - 2.0 * p.k2 * ej0 * ((p.reduced_flux - phi1) / 2.0).cos()
}

/// Analytic derivative of order 1..=4 of `potential` with respect to φ1.
///
/// Closed-form, not finite differences: D3 and D4 are small and
/// noise-sensitive.
pub fn potential_derivative(p: &SnailParams, phi1: f64, order: u32) -> f64 {
    let ej0 = p.junction_scale;
    let a = (p.reduced_flux - phi1) / 2.0;
    match order {
        1 => p.k1 * ej0 * phi1.sin() - p.k2 * ej0 * a.sin(),
        2 => p.k1 * ej0 * phi1.cos() + p.k2 * ej0 / 2.0 * a.cos(),
        3 => -p.k1 * ej0 * phi1.sin() + p.k2 * ej0 / 4.0 * a.sin(),
        4 => -p.k1 * ej0 * phi1.cos() - p.k2 * ej0 / 8.0 * a.cos(),
        _ => panic!("derivative order must be 1..=4"),
    }
}

/// Locates the potential minimum by continuation from zero flux (where
/// φ0 = 0 analytically), then returns the Taylor coefficients there.
///
/// Continuation — stepping the flux and warm-starting a damped Newton solve
/// of U′(φ0) = 0 — keeps the solver on the physical branch of the two-cosine
/// potential instead of hopping between local minima.
pub fn find_potential_minimum(params: &SnailParams) -> Result<PotentialExpansion> {
    let target = params.reduced_flux;
    let n_steps = ((target.abs() / 0.05).ceil() as usize).max(1);
    let mut phi0 = 0.0;
    for step in 1..=n_steps {
        let flux = target * (step as f64) / (n_steps as f64);
        let p = SnailParams { reduced_flux: flux, ..*params };
        phi0 = newton_minimum(&p, phi0)?;
    }
    let d2 = potential_derivative(params, phi0, 2) / 2.0;
    if d2 <= 0.0 {
        return Err(Error::NoMinimum { flux_rad: target, d2 });
    }
    Ok(PotentialExpansion {
        minimum_phase: phi0,
        d2,
        d3: potential_derivative(params, phi0, 3) / 6.0,
        d4: potential_derivative(params, phi0, 4) / 24.0,
    })
}

/// Damped Newton iteration on U′(φ) = 0 from a warm start.
fn newton_minimum(p: &SnailParams, start: f64) -> Result<f64> {
    let mut x = start;
    for _ in 0..100 {
        let g = potential_derivative(p, x, 1);
        if g.abs() < 1e-13 {
            return Ok(x);
        }
        let h = potential_derivative(p, x, 2);
        if h <= 0.0 {
            return Err(Error::NoMinimum { flux_rad: p.reduced_flux, d2: h / 2.0 });
        }
        // Damp the step to at most 0.2 rad so continuation cannot jump
        // branches near the frustration point.
        let dx = (-g / h).clamp(-0.2, 0.2);
        x += dx;
    }
    let g = potential_derivative(p, x, 1);
    if g.abs() < 1e-12 {
        Ok(x)
    } else {
        Err(Error::NoMinimum { flux_rad: p.reduced_flux, d2: potential_derivative(p, x, 2) / 2.0 })
    }
}

/// Quantizes the Taylor-expanded single-phase potential into bare cubic-mode
/// parameters.
pub fn single_phase_modes(
    expansion: &PotentialExpansion,
    params: &SnailParams,
) -> Result<BareCubicModes> {
    if expansion.d2 <= 0.0 {
        return Err(Error::NoMinimum { flux_rad: params.reduced_flux, d2: expansion.d2 });
    }
    let (k1, k2, k3) = (params.k1, params.k2, params.k3);
    let ec_prime =
        params.charging_energy * (k2 + k3) / ((k2 + k3) + k1 * (k2 + k3) + k2 * k3);
    let (d2, d3, d4) = (expansion.d2, expansion.d3, expansion.d4);
    Ok(BareCubicModes {
        omega_c0: (16.0 * d2 * ec_prime).sqrt() + 12.0 * d4 * ec_prime / d2,
        beta_c0: 3.0 * (ec_prime / d2).powf(0.75) * d3,
        alpha_c0: 6.0 * d4 * ec_prime / d2,
        charging_prime: ec_prime,
    })
}

/// The full-circuit Hamiltonian in the two-island charge basis.
///
/// Basis states |n1, n2⟩ with |n_i| ≤ N; dimension (2N+1)². The kinetic part
/// is 4·E_C·(n1,n2)·C·(n1,n2)ᵀ with C the inverse of the reduced capacitance
/// matrix; each Josephson cosine is a nearest-neighbor hop with amplitude
/// −E_J/2, the loop junction carrying the flux phase e^{±iφ}.
#[derive(Debug, Clone)]
pub struct ChargeBasisModel {
    pub params: SnailParams,
    pub cutoff: usize,
    /// Inverse capacitance matrix entries (dimensionless, symmetric).
    c11: f64,
    c12: f64,
    c22: f64,
}

impl ChargeBasisModel {
    /// Hilbert-space dimension (2N+1)².
    pub fn dim(&self) -> usize {
        let m = 2 * self.cutoff + 1;
        m * m
    }

    /// Basis index of |n1, n2⟩.
    fn idx(&self, n1: i64, n2: i64) -> usize {
        let n = self.cutoff as i64;
        ((n1 + n) * (2 * n + 1) + (n2 + n)) as usize
    }

    /// Matrix-free application y = H x (used by the Lanczos solver).
    pub fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        let n = self.cutoff as i64;
        let p = &self.params;
        let (ej1, ej2, ej3) =
            (p.k1 * p.junction_scale, p.k2 * p.junction_scale, p.k3 * p.junction_scale);
        let phase = C64::from_polar(1.0, p.reduced_flux);
        let mut y = DVector::from_element(self.dim(), C64::new(0.0, 0.0));
        for n1 in -n..=n {
            for n2 in -n..=n {
                let i = self.idx(n1, n2);
                let (f1, f2) = (n1 as f64, n2 as f64);
                let kinetic = 4.0
                    * p.charging_energy
                    * (self.c11 * f1 * f1 + 2.0 * self.c12 * f1 * f2 + self.c22 * f2 * f2);
                let mut acc = x[i] * kinetic;
                // cos φ1: n1 ± 1.
                if n1 + 1 <= n {
                    acc += x[self.idx(n1 + 1, n2)] * (-ej1 / 2.0);
                }
                if n1 - 1 >= -n {
                    acc += x[self.idx(n1 - 1, n2)] * (-ej1 / 2.0);
                }
                // cos φ2: n2 ± 1.
                if n2 + 1 <= n {
                    acc += x[self.idx(n1, n2 + 1)] * (-ej2 / 2.0);
                }
                if n2 - 1 >= -n {
                    acc += x[self.idx(n1, n2 - 1)] * (-ej2 / 2.0);
                }
                // cos(φ + φ1 − φ2): (n1, n2) ± (1, −1) with flux phase.
                if n1 + 1 <= n && n2 - 1 >= -n {
                    acc += x[self.idx(n1 + 1, n2 - 1)] * (-ej3 / 2.0) * phase.conj();
                }
                if n1 - 1 >= -n && n2 + 1 <= n {
                    acc += x[self.idx(n1 - 1, n2 + 1)] * (-ej3 / 2.0) * phase;
                }
                y[i] = acc;
            }
        }
        y
    }

    /// Dense Hamiltonian matrix (GHz); test oracle for the matrix-free path.
    pub fn dense_matrix(&self) -> DMatrix<C64> {
        let dim = self.dim();
        let mut h = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
        for j in 0..dim {
            let mut e = DVector::from_element(dim, C64::new(0.0, 0.0));
            e[j] = C64::new(1.0, 0.0);
            h.set_column(j, &self.apply(&e));
        }
        h
    }

    /// Lowest `k` eigenpairs, eigenvalues NOT ground-shifted.
    fn lowest_eigenpairs(&self, k: usize) -> Result<(Vec<f64>, Vec<DVector<C64>>)> {
        linalg::lanczos_lowest(self.dim(), k, |x| self.apply(x))
    }
}

/// Builds the charge-basis model, checking the spectral convergence
/// invariant: the lowest three levels must move by < 10⁻⁶ GHz under N → N+2.
pub fn build_charge_model(params: &SnailParams, cutoff: usize) -> Result<ChargeBasisModel> {
    if cutoff < 8 {
        return Err(Error::InvalidParameter(format!("charge cutoff must be >= 8, got {cutoff}")));
    }
    let model = charge_model_unchecked(params, cutoff);
    let bigger = charge_model_unchecked(params, cutoff + 2);
    let (e_small, _) = model.lowest_eigenpairs(3)?;
    let (e_big, _) = bigger.lowest_eigenpairs(3)?;
    let shift = (0..3).map(|i| (e_small[i] - e_big[i]).abs()).fold(0.0, f64::max);
    if shift >= 1e-6 {
        return Err(Error::CutoffTooSmall { cutoff, shift });
    }
    Ok(model)
}

fn charge_model_unchecked(params: &SnailParams, cutoff: usize) -> ChargeBasisModel {
    // C = inv([[1 + k1 + k3, -k3], [-k3, k2 + k3]]).
    let (a, b, d) = (1.0 + params.k1 + params.k3, -params.k3, params.k2 + params.k3);
    let det = a * d - b * b;
    ChargeBasisModel {
        params: *params,
        cutoff,
        c11: d / det,
        c12: -b / det,
        c22: a / det,
    }
}

/// Lowest `n_levels` eigenfrequencies, ground state shifted to zero,
/// ascending (GHz). ω_c0 = E1 − E0 and α_c0 = (E2 − E1) − (E1 − E0).
pub fn spectrum(model: &ChargeBasisModel, n_levels: usize) -> Result<Vec<f64>> {
    if n_levels > model.dim() {
        return Err(Error::InvalidParameter("n_levels exceeds dimension".into()));
    }
    let (vals, _) = model.lowest_eigenpairs(n_levels)?;
    Ok(vals.iter().map(|e| e - vals[0]).collect())
}

/// Charge-operator transition moments of the drive-coupled island and the
/// resulting |β_c0| estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TransitionMoments {
    /// |⟨g| n̂1 |e⟩|.
    pub a_ge: f64,
    /// |⟨g| n̂1 |f⟩| (parity-forbidden at zero flux).
    pub a_gf: f64,
    /// |β_c0| = (ω_c0 + α_c0)/2 · A_gf/A_ge (GHz).
    pub abs_beta_c0: f64,
    /// ω_c0 = E1 − E0 from the same diagonalization (GHz).
    pub omega_c0: f64,
    /// α_c0 = E2 − 2E1 + E0 (GHz).
    pub alpha_c0: f64,
}

/// Computes the transition moments A_ge, A_gf of the island-1 charge
/// operator (the drive-port-coupled island) and |β_c0| from them.
pub fn transition_moments(model: &ChargeBasisModel) -> Result<TransitionMoments> {
    let (vals, vecs) = model.lowest_eigenpairs(3)?;
    if vals[2] - vals[1] < 1e-6 {
        return Err(Error::DegenerateLevels { lower: 1, upper: 2, gap: vals[2] - vals[1] });
    }
    if vals[1] - vals[0] < 1e-6 {
        return Err(Error::DegenerateLevels { lower: 0, upper: 1, gap: vals[1] - vals[0] });
    }
    let n = model.cutoff as i64;
    let moment = |u: &DVector<C64>, v: &DVector<C64>| -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for n1 in -n..=n {
            for n2 in -n..=n {
                let i = model.idx(n1, n2);
                acc += u[i].conj() * v[i] * (n1 as f64);
            }
        }
        acc.norm()
    };
    let a_ge = moment(&vecs[0], &vecs[1]);
    let a_gf = moment(&vecs[0], &vecs[2]);
    let omega_c0 = vals[1] - vals[0];
    let alpha_c0 = (vals[2] - vals[1]) - (vals[1] - vals[0]);
    Ok(TransitionMoments {
        a_ge,
        a_gf,
        abs_beta_c0: (omega_c0 + alpha_c0) / 2.0 * a_gf / a_ge,
        omega_c0,
        alpha_c0,
    })
}

/// Which circuit model produced a sweep row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SinglePhase,
    FullCircuit,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::SinglePhase => write!(f, "single_phase"),
            ModelKind::FullCircuit => write!(f, "full_circuit"),
        }
    }
}

/// One flux point of one model in a flux sweep. Failed points are flagged,
/// never dropped silently.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub flux_quanta: f64,
    pub model: ModelKind,
    pub omega_c0: Option<f64>,
    pub alpha_c0: Option<f64>,
    pub abs_beta_c0: Option<f64>,
    /// Failure description if the model could not be evaluated here.
    pub flag: Option<String>,
}

/// Sweeps both circuit models over a flux grid (values in Φ/Φ0, each within
/// (−0.5, 0.5)). The flux fields of the two parameter sets are overridden by
/// the grid. The full-circuit β_c0 sign is not recoverable from the
/// transition-moment formula (absolute value); `abs_beta_c0` is reported for
/// both models.
pub fn flux_sweep(
    single_phase: &SnailParams,
    full_circuit: &SnailParams,
    cutoff: usize,
    flux_grid: &[f64],
) -> Result<Vec<SweepRow>> {
    for &fq in flux_grid {
        if !(-0.5..0.5).contains(&fq) {
            return Err(Error::InvalidParameter(format!(
                "flux grid point {fq} outside (-0.5, 0.5) flux quanta"
            )));
        }
    }
    let mut rows = Vec::with_capacity(2 * flux_grid.len());
    for &fq in flux_grid {
        let sp = single_phase.at_flux_quanta(fq);
        let row = match find_potential_minimum(&sp).and_then(|e| single_phase_modes(&e, &sp)) {
            Ok(m) => SweepRow {
                flux_quanta: fq,
                model: ModelKind::SinglePhase,
                omega_c0: Some(m.omega_c0),
                alpha_c0: Some(m.alpha_c0),
                abs_beta_c0: Some(m.beta_c0.abs()),
                flag: None,
            },
            Err(e) => SweepRow {
                flux_quanta: fq,
                model: ModelKind::SinglePhase,
                omega_c0: None,
                alpha_c0: None,
                abs_beta_c0: None,
                flag: Some(e.to_string()),
            },
        };
        rows.push(row);

        let fc = full_circuit.at_flux_quanta(fq);
        let row = match build_charge_model(&fc, cutoff).and_then(|m| transition_moments(&m)) {
            Ok(tm) => SweepRow {
                flux_quanta: fq,
                model: ModelKind::FullCircuit,
                omega_c0: Some(tm.omega_c0),
                alpha_c0: Some(tm.alpha_c0),
                abs_beta_c0: Some(tm.abs_beta_c0),
                flag: None,
            },
            Err(e) => SweepRow {
                flux_quanta: fq,
                model: ModelKind::FullCircuit,
                omega_c0: None,
                alpha_c0: None,
                abs_beta_c0: None,
                flag: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Reference device parameters (Table-S1-style rows used throughout tests
/// and the `reproduce` pipeline).
pub mod reference {
    use super::SnailParams;

    /// Single-phase model row: E_C = 0.21 GHz, E_J0 = 84 GHz.
    pub fn single_phase_params(flux_quanta: f64) -> SnailParams {
        SnailParams::from_flux_quanta(0.21, 84.0, 0.070, 0.20, 0.20, flux_quanta).unwrap()
    }

    /// Adjusted full-circuit row: E_C = 0.18 GHz, E_J0 = 103 GHz.
    pub fn full_circuit_params(flux_quanta: f64) -> SnailParams {
        SnailParams::from_flux_quanta(0.18, 103.0, 0.070, 0.20, 0.20, flux_quanta).unwrap()
    }

    /// Operating flux of the reference device.
    pub const OPERATING_FLUX: f64 = 0.34;
}
