//! Simulated experiments on the driven device: sideband chevron, ZZ-null
//! sweep, conditional Ramsey and pulsed spectroscopy.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::envelope::PulseEnvelope;
use crate::dynamics::propagator::{ideal_rotation, sideband_operator, Frame, Propagator};
use crate::dynamics::schedule::{
    CwTone, DecoherenceParams, DriveTone, Port, PulseSchedule, QuantumState, StateVector,
};
use crate::effective::{label_states, EffectiveParams, TruncatedHamiltonian, DIM, N_LEVELS};
use crate::linalg::{hermitian_eigen, C64, C_ZERO};
use crate::units::TWO_PI;
use crate::{Error, Result};

/// Result of a sideband chevron scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChevronMap {
    /// Drive-frequency axis (GHz).
    pub drive_freqs: Vec<f64>,
    /// Time axis (ns).
    pub times: Vec<f64>,
    /// Transmon occupation ⟨n_b⟩, one row per drive frequency.
    pub population: Vec<Vec<f64>>,
    /// Drive frequency of the maximum-contrast row (GHz).
    pub resonance_ghz: f64,
    /// Extracted oscillation frequency of the resonance row (GHz).
    pub rabi_ghz: f64,
}

/// Sideband chevron: drive the parametric swap tone at each frequency in
/// `drive_grid` with constant amplitude `omega`, starting from dressed |eg⟩
/// (a perfect π-pulse on the cubic transmon is assumed), and record the
/// transmon occupation on `time_grid`.
pub fn chevron_scan(
    params: &EffectiveParams,
    drive_grid: &[f64],
    time_grid: &[f64],
    omega: f64,
) -> Result<ChevronMap> {
    if drive_grid.is_empty() || time_grid.is_empty() {
        return Err(Error::InvalidParameter("chevron grids must be non-empty".into()));
    }
    let prop = Propagator::new(params, Frame::Rotating, None)?;
    let duration = time_grid.last().copied().unwrap_or(0.0);
    let initial = QuantumState::basis(1, 0);

    let mut population = Vec::with_capacity(drive_grid.len());
    for &f in drive_grid {
        let schedule = PulseSchedule::empty(duration)
            .with_cw(CwTone { freq_ghz: f, amplitude_ghz: omega });
        let states = prop.propagate(&schedule, &initial, time_grid)?;
        population.push(states.iter().map(|s| s.mode_occupation(Port::Transmon)).collect());
    }

    let contrast = |row: &Vec<f64>| {
        let max = row.iter().cloned().fold(f64::MIN, f64::max);
        let min = row.iter().cloned().fold(f64::MAX, f64::min);
        max - min
    };
    let best = (0..drive_grid.len())
        .max_by(|&i, &j| contrast(&population[i]).total_cmp(&contrast(&population[j])))
        .expect("non-empty grid");

    Ok(ChevronMap {
        resonance_ghz: drive_grid[best],
        rabi_ghz: oscillation_frequency(time_grid, &population[best]),
        drive_freqs: drive_grid.to_vec(),
        times: time_grid.to_vec(),
        population,
    })
}

/// One row of the ZZ-null amplitude sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ZzNullRow {
    pub amplitude_ghz: f64,
    /// Transmon frequency with the cubic transmon in |g⟩ (GHz).
    pub f_ge_ghz: f64,
    /// Transmon frequency with the cubic transmon in |e⟩ (GHz).
    pub f_ee_minus_eg_ghz: f64,
    /// Residual ZZ = difference of the two conditional frequencies (GHz).
    pub residual_zz_ghz: f64,
}

/// Result of a ZZ-null sweep, including the bisected zero crossing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZzNullScan {
    pub cw_freq_ghz: f64,
    pub rows: Vec<ZzNullRow>,
    pub crossing_amplitude_ghz: f64,
}

/// The two conditional transmon frequencies under a CW sideband drive,
/// measured by simulated Ramsey phase evolution: the transmon starts in
/// (|0⟩ + |1⟩)/√2 with the cubic transmon in |g⟩ or |e⟩, and the phase slope
/// of the transmon coherence over 200 ns gives the transition frequency.
pub fn conditional_frequencies(
    params: &EffectiveParams,
    cw_freq: f64,
    amplitude: f64,
) -> Result<(f64, f64)> {
    let prop = Propagator::new(params, Frame::Rotating, None)?;
    let duration = 200.0;
    let times: Vec<f64> = (0..=80).map(|k| duration * k as f64 / 80.0).collect();
    let schedule = PulseSchedule::empty(duration)
        .with_cw(CwTone { freq_ghz: cw_freq, amplitude_ghz: amplitude });

    let mut freqs = [0.0; 2];
    for (slot, control) in [(0usize, 0usize), (1, 1)] {
        let mut v = StateVector::from_element(C_ZERO);
        let amp = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        v[TruncatedHamiltonian::index(control, 0)] = amp;
        v[TruncatedHamiltonian::index(control, 1)] = amp;
        let states = prop.propagate(&schedule, &QuantumState::Vector(v), &times)?;
        // c(t) = ⟨control,0|ψ⟩* ⟨control,1|ψ⟩ rotates at −2π(f − ω_t).
        let phases: Vec<f64> = states
            .iter()
            .map(|s| s.coherence((control, 1), (control, 0)).arg())
            .collect();
        let unwrapped = unwrap_phases(&phases);
        let (slope, _) = linear_fit(&times, &unwrapped);
        freqs[slot] = params.omega_t - slope / TWO_PI;
    }
    Ok((freqs[0], freqs[1]))
}

/// Sweeps the CW amplitude, reports both conditional transmon frequencies and
/// the residual ZZ per amplitude, and bisects the zero crossing.
pub fn zz_null_sweep(
    params: &EffectiveParams,
    cw_frequency: f64,
    amplitude_grid: &[f64],
) -> Result<ZzNullScan> {
    if amplitude_grid.len() < 2 {
        return Err(Error::InvalidParameter("amplitude grid needs at least two points".into()));
    }
    let residual = |amp: f64| -> Result<ZzNullRow> {
        let (f0, f1) = conditional_frequencies(params, cw_frequency, amp)?;
        Ok(ZzNullRow {
            amplitude_ghz: amp,
            f_ge_ghz: f0,
            f_ee_minus_eg_ghz: f1,
            residual_zz_ghz: f1 - f0,
        })
    };

    let rows: Vec<ZzNullRow> =
        amplitude_grid.iter().map(|&a| residual(a)).collect::<Result<_>>()?;

    let bracket = rows
        .windows(2)
        .find(|w| w[0].residual_zz_ghz.signum() != w[1].residual_zz_ghz.signum())
        .ok_or(Error::NoCrossing)?;
    let (mut lo, mut f_lo) = (bracket[0].amplitude_ghz, bracket[0].residual_zz_ghz);
    let mut hi = bracket[1].amplitude_ghz;
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        let f_mid = residual(mid)?.residual_zz_ghz;
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }

    Ok(ZzNullScan {
        cw_freq_ghz: cw_frequency,
        rows,
        crossing_amplitude_ghz: 0.5 * (lo + hi),
    })
}

/// Residual ZZ from the time-averaged dressed Hamiltonian (cross-check for
/// [`zz_null_sweep`]): in the frame rotating additionally at the CW detuning
/// λ = ω_cw − Δ on the transmon, the CW term is static,
/// H′ = H₀ + ηΩ(X + X†) − λ·n_b (GHz), and the residual ZZ is the dressed
/// E₁₁ − E₁₀ − E₀₁ + E₀₀ combination (the λ·n_b part cancels in it).
pub fn zz_residual_static(
    params: &EffectiveParams,
    cw_frequency: f64,
    amplitude: f64,
) -> Result<f64> {
    let x = sideband_operator(params);
    let lambda = cw_frequency - params.delta;
    let mut h = DMatrix::from_element(DIM, DIM, C_ZERO);
    for i in 0..N_LEVELS {
        for j in 0..N_LEVELS {
            let (ni, nj) = (i as f64, j as f64);
            let k = TruncatedHamiltonian::index(i, j);
            h[(k, k)] = C64::new(
                params.alpha_c / 2.0 * ni * (ni - 1.0)
                    + params.alpha_t / 2.0 * nj * (nj - 1.0)
                    + params.j_zz * ni * nj
                    - lambda * nj,
                0.0,
            );
        }
    }
    let coupling = C64::new(params.eta * amplitude, 0.0);
    for r in 0..DIM {
        for c in 0..DIM {
            if x[(r, c)] != C_ZERO {
                h[(r, c)] += x[(r, c)] * coupling;
                h[(c, r)] += (x[(r, c)] * coupling).conj();
            }
        }
    }
    let (vals, vecs) = hermitian_eigen(&h)?;
    let label = label_states(&vecs)?;
    let e = |i: usize, j: usize| vals[label[TruncatedHamiltonian::index(i, j)]];
    Ok(e(1, 1) - e(1, 0) - e(0, 1) + e(0, 0))
}

/// A Ramsey fringe: ⟨σ_z⟩ of the read qubit versus the phase of the final
/// π/2 pulse.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RamseyTrace {
    pub phases: Vec<f64>,
    pub expectation: Vec<f64>,
    /// Fringe phase relative to the identity-gate fringe (rad).
    pub fringe_phase: f64,
    /// Fringe amplitude.
    pub contrast: f64,
    /// Fringe offset.
    pub offset: f64,
}

/// Ramsey characterization of a gate schedule (Fig.-3 style): π/2 on the
/// transmon, optional prior π on the cubic transmon (`control_prepared`), the
/// gate, then a π/2 with swept phase φ on `second_pulse_qubit`, reading that
/// qubit's ⟨σ_z⟩. The π pulses flanking the gate are ideal; the gate itself
/// is simulated in full.
pub fn ramsey_experiment(
    params: &EffectiveParams,
    gate: &PulseSchedule,
    control_prepared: bool,
    phase_grid: &[f64],
    second_pulse_qubit: Port,
    decoherence: Option<&DecoherenceParams>,
) -> Result<RamseyTrace> {
    if phase_grid.len() < 3 {
        return Err(Error::InvalidParameter("phase grid needs at least three points".into()));
    }
    let prop = Propagator::new(params, Frame::Rotating, decoherence)?;
    let mut initial = QuantumState::basis(0, 0);
    if control_prepared {
        initial.apply_unitary(&ideal_rotation(Port::Cubic, std::f64::consts::PI, 0.0));
    }
    initial.apply_unitary(&ideal_rotation(Port::Transmon, std::f64::consts::FRAC_PI_2, 0.0));
    let evolved = prop.propagate_final(gate, &initial)?;

    let expectation: Vec<f64> = phase_grid
        .iter()
        .map(|&phi| {
            let mut s = evolved.clone();
            s.apply_unitary(&ideal_rotation(
                second_pulse_qubit,
                std::f64::consts::FRAC_PI_2,
                phi,
            ));
            s.sigma_z(second_pulse_qubit)
        })
        .collect();

    // Least-squares fit y = c + a·cos φ + b·sin φ; the identity gate gives
    // y = −cos φ, so the reported fringe phase uses (−a, −b).
    let (a, b, c) = fit_cosine(phase_grid, &expectation);
    Ok(RamseyTrace {
        phases: phase_grid.to_vec(),
        expectation,
        fringe_phase: (-b).atan2(-a),
        contrast: (a * a + b * b).sqrt(),
        offset: c,
    })
}

/// Result of a pulsed-spectroscopy scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectroscopyScan {
    pub probe_freqs: Vec<f64>,
    /// Final cubic-transmon occupation ⟨n_a⟩ per probe frequency.
    pub response: Vec<f64>,
    /// Interpolated response peak, if any rises above the floor (GHz).
    pub peak_ghz: Option<f64>,
}

/// Pulsed spectroscopy of the CW-assisted Raman transition: a 60 ns-FWHM
/// Gaussian probe on the transmon port at each frequency in `probe_grid`,
/// with an optional CW sideband tone; the response is the final cubic
/// occupation (the Raman process |gg⟩ → |eg⟩ needs one probe photon and one
/// CW photon, so the peak appears only with the CW on).
pub fn pulsed_spectroscopy(
    params: &EffectiveParams,
    cw: Option<CwTone>,
    probe_grid: &[f64],
    probe_amplitude: f64,
) -> Result<SpectroscopyScan> {
    if probe_grid.is_empty() {
        return Err(Error::InvalidParameter("probe grid must be non-empty".into()));
    }
    let prop = Propagator::new(params, Frame::Rotating, None)?;
    let envelope = PulseEnvelope::gaussian(probe_amplitude, 60.0);
    let initial = QuantumState::basis(0, 0);

    let mut response = Vec::with_capacity(probe_grid.len());
    for &fp in probe_grid {
        let tone = DriveTone {
            target: Port::Transmon,
            carrier_ghz: fp,
            phase: 0.0,
            envelope,
            start_ns: 0.0,
        };
        let mut schedule = PulseSchedule::new(vec![tone], None);
        if let Some(cw) = cw {
            schedule = schedule.with_cw(cw);
        }
        let fin = prop.propagate_final(&schedule, &initial)?;
        response.push(fin.mode_occupation(Port::Cubic));
    }

    let best = (0..probe_grid.len())
        .max_by(|&i, &j| response[i].total_cmp(&response[j]))
        .expect("non-empty grid");
    let peak_ghz = if response[best] > 1e-4 {
        Some(quadratic_peak(probe_grid, &response, best))
    } else {
        None
    };

    Ok(SpectroscopyScan { probe_freqs: probe_grid.to_vec(), response, peak_ghz })
}

/// Dominant oscillation frequency of a sampled trace by periodogram maximum
/// with golden-section refinement (robust against argmax ties between equal
/// population maxima).
pub(crate) fn oscillation_frequency(times: &[f64], values: &[f64]) -> f64 {
    let n = times.len();
    assert!(n >= 4);
    let mean = values.iter().sum::<f64>() / n as f64;
    let span = times[n - 1] - times[0];
    let dt = span / (n - 1) as f64;
    let power = |f: f64| -> f64 {
        let mut acc = C_ZERO;
        for (&t, &v) in times.iter().zip(values) {
            acc += C64::new(0.0, -TWO_PI * f * t).exp() * C64::new(v - mean, 0.0);
        }
        acc.norm_sqr()
    };
    let f_max = 0.5 / dt;
    let df = 0.25 / span;
    let mut best_f = df;
    let mut best_p = power(df);
    let mut f = 2.0 * df;
    while f < f_max {
        let p = power(f);
        if p > best_p {
            best_p = p;
            best_f = f;
        }
        f += df;
    }
    golden_max(power, (best_f - df).max(df / 4.0), best_f + df, 60)
}

/// Golden-section maximization of a unimodal function on [lo, hi].
pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let g = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Unwraps a phase sequence to a continuous curve.
pub(crate) fn unwrap_phases(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut acc = phases[0];
    out.push(acc);
    for w in phases.windows(2) {
        let mut d = w[1] - w[0];
        while d > std::f64::consts::PI {
            d -= TWO_PI;
        }
        while d < -std::f64::consts::PI {
            d += TWO_PI;
        }
        acc += d;
        out.push(acc);
    }
    out
}

/// Ordinary least-squares line fit, returning (slope, intercept).
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(&a, &b)| (a - xm) * (b - ym)).sum();
    let sxx: f64 = x.iter().map(|&a| (a - xm) * (a - xm)).sum();
    let slope = sxy / sxx;
    (slope, ym - slope * xm)
}

/// Least-squares fit of y = c + a·cos φ + b·sin φ by 3×3 normal equations.
fn fit_cosine(phases: &[f64], values: &[f64]) -> (f64, f64, f64) {
    let mut m = nalgebra::Matrix3::<f64>::zeros();
    let mut rhs = nalgebra::Vector3::<f64>::zeros();
    for (&phi, &y) in phases.iter().zip(values) {
        let row = nalgebra::Vector3::new(phi.cos(), phi.sin(), 1.0);
        m += row * row.transpose();
        rhs += row * y;
    }
    let sol = m.lu().solve(&rhs).expect("cosine fit normal equations are nonsingular");
    (sol[0], sol[1], sol[2])
}

/// Peak position by quadratic interpolation through the maximum sample and
/// its neighbors (falls back to the grid point at the edges).
fn quadratic_peak(xs: &[f64], ys: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 == xs.len() {
        return xs[i];
    }
    let (y0, y1, y2) = (ys[i - 1], ys[i], ys[i + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    if denom.abs() < 1e-300 {
        return xs[i];
    }
    let shift = 0.5 * (y0 - y2) / denom;
    let h = 0.5 * (xs[i + 1] - xs[i - 1]);
    xs[i] + shift.clamp(-1.0, 1.0) * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::{closed_form_effective, reference_device};
    use approx::assert_relative_eq;

    fn eff() -> EffectiveParams {
        closed_form_effective(&reference_device().unwrap()).unwrap()
    }

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn oscillation_frequency_recovers_known_tone() {
        let times = linspace(0.0, 200.0, 101);
        let f0 = 0.0173;
        let values: Vec<f64> = times.iter().map(|&t| (TWO_PI * f0 * t).sin().powi(2)).collect();
        // sin² oscillates at 2 f0; finite-window spectral leakage biases the
        // periodogram peak at the few-per-mille level.
        assert_relative_eq!(
            oscillation_frequency(&times, &values),
            2.0 * f0,
            max_relative = 5e-3
        );
    }

    #[test]
    fn chevron_zero_amplitude_is_flat() {
        let e = eff();
        let map =
            chevron_scan(&e, &linspace(0.83, 0.86, 4), &linspace(0.0, 50.0, 11), 0.0).unwrap();
        for row in &map.population {
            for &p in row {
                assert!(p.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn chevron_resonance_and_rabi() {
        let e = eff();
        let omega = 0.3;
        let drive = linspace(0.826, 0.866, 9); // 5 MHz steps around 846 MHz
        let times = linspace(0.0, 120.0, 61);
        let map = chevron_scan(&e, &drive, &times, omega).unwrap();
        assert!((map.resonance_ghz - e.delta).abs() <= 0.0025 + 1e-12);
        assert_relative_eq!(map.rabi_ghz, 2.0 * e.eta * omega, max_relative = 0.02);
    }

    #[test]
    fn chevron_detuned_rabi_formula() {
        let e = eff();
        let omega = 0.3;
        let delta_off = 0.015;
        let times = linspace(0.0, 150.0, 76);
        let map = chevron_scan(&e, &[e.delta + delta_off], &times, omega).unwrap();
        let expected = ((2.0 * e.eta * omega).powi(2) + delta_off * delta_off).sqrt();
        assert_relative_eq!(map.rabi_ghz, expected, max_relative = 0.05);
    }

    #[test]
    fn sideband_rate_linear_in_amplitude() {
        let e = eff();
        let amps = [0.2, 0.3, 0.4, 0.5];
        let times = linspace(0.0, 250.0, 126);
        let rabis: Vec<f64> = amps
            .iter()
            .map(|&a| chevron_scan(&e, &[e.delta], &times, a).unwrap().rabi_ghz)
            .collect();
        let (slope, intercept) = linear_fit(&amps, &rabis);
        assert_relative_eq!(slope, 2.0 * e.eta, max_relative = 0.03);
        // R² of the linear model.
        let mean = rabis.iter().sum::<f64>() / rabis.len() as f64;
        let ss_tot: f64 = rabis.iter().map(|r| (r - mean).powi(2)).sum();
        let ss_res: f64 = amps
            .iter()
            .zip(&rabis)
            .map(|(&a, &r)| (r - slope * a - intercept).powi(2))
            .sum();
        assert!(1.0 - ss_res / ss_tot > 0.999);
    }

    #[test]
    fn zero_cw_residual_equals_static_jzz() {
        let e = eff();
        let (f0, f1) = conditional_frequencies(&e, 0.930, 0.0).unwrap();
        assert_relative_eq!(f0, e.omega_t, epsilon = 1e-6);
        assert!((f1 - f0 - e.j_zz).abs() < 1e-4, "residual {}", f1 - f0);
    }

    #[test]
    fn ramsey_and_static_zz_methods_agree() {
        let e = eff();
        let amp = 0.3;
        let (f0, f1) = conditional_frequencies(&e, 0.930, amp).unwrap();
        let ramsey = f1 - f0;
        let static_zz = zz_residual_static(&e, 0.930, amp).unwrap();
        assert!(
            (ramsey - static_zz).abs() < 3e-4,
            "ramsey {ramsey}, static {static_zz}"
        );
    }

    #[test]
    fn zz_null_crossing_exists() {
        let e = eff();
        let scan = zz_null_sweep(&e, 0.930, &[0.0, 0.25, 0.4, 0.55]).unwrap();
        assert_relative_eq!(scan.rows[0].residual_zz_ghz, e.j_zz, epsilon = 1e-4);
        let x = scan.crossing_amplitude_ghz;
        assert!(x > 0.25 && x < 0.55, "crossing at {x}");
        let (f0, f1) = conditional_frequencies(&e, 0.930, x).unwrap();
        assert!((f1 - f0).abs() < 5e-5, "residual at crossing {}", f1 - f0);
    }

    #[test]
    fn zz_null_without_crossing_errors() {
        let e = eff();
        match zz_null_sweep(&e, 0.930, &[0.0, 0.1]) {
            Err(Error::NoCrossing) => {}
            other => panic!("expected NoCrossing, got {other:?}"),
        }
    }

    #[test]
    fn identity_gate_ramsey_fringe() {
        let e = eff();
        let phases = linspace(0.0, TWO_PI, 25);
        let trace = ramsey_experiment(
            &e,
            &PulseSchedule::empty(0.0),
            false,
            &phases,
            Port::Transmon,
            None,
        )
        .unwrap();
        assert!(trace.fringe_phase.abs() < 1e-9, "phase {}", trace.fringe_phase);
        assert_relative_eq!(trace.contrast, 1.0, epsilon = 1e-9);
        assert!(trace.offset.abs() < 1e-9);
    }

    #[test]
    fn free_evolution_conditional_phase_is_jzz() {
        let e = eff();
        let phases = linspace(0.0, TWO_PI, 25);
        let t = 100.0;
        let gate = PulseSchedule::empty(t);
        let unprepared =
            ramsey_experiment(&e, &gate, false, &phases, Port::Transmon, None).unwrap();
        let prepared = ramsey_experiment(&e, &gate, true, &phases, Port::Transmon, None).unwrap();
        let mut diff = prepared.fringe_phase - unprepared.fringe_phase;
        let expected = -TWO_PI * e.j_zz * t;
        while diff - expected > std::f64::consts::PI {
            diff -= TWO_PI;
        }
        while diff - expected < -std::f64::consts::PI {
            diff += TWO_PI;
        }
        assert!((diff - expected).abs() < 1e-6, "diff {diff}, expected {expected}");
    }

    #[test]
    fn spectroscopy_raman_peak_only_with_cw() {
        let e = eff();
        let cw = CwTone { freq_ghz: 0.930, amplitude_ghz: 0.45 };
        let raman = e.omega_t + (0.930 - e.delta);
        let grid = linspace(raman - 0.02, raman + 0.02, 21);
        let with_cw = pulsed_spectroscopy(&e, Some(cw), &grid, 0.02).unwrap();
        let peak = with_cw.peak_ghz.expect("peak with CW on");
        assert!((peak - raman).abs() < 0.002, "peak {peak}, raman {raman}");
        let without = pulsed_spectroscopy(&e, None, &grid, 0.02).unwrap();
        let max_off = without.response.iter().cloned().fold(0.0, f64::max);
        let max_on = with_cw.response.iter().cloned().fold(0.0, f64::max);
        assert!(max_off < 0.1 * max_on, "off {max_off}, on {max_on}");
    }
}
