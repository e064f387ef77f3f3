//! Pulse envelopes: truncated Gaussians and Gaussian-edged flat-tops.
//!
//! Envelopes are truncated where they fall to `truncation_threshold` times
//! the peak (default 10⁻³) and then offset-subtracted and rescaled so the
//! value is exactly zero at the truncation points — both finite support and
//! continuity hold, which the adaptive integrator relies on.

use serde::{Deserialize, Serialize};

/// Default truncation threshold (fraction of peak).
pub const DEFAULT_TRUNCATION: f64 = 1e-3;

/// Envelope shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvelopeKind {
    /// Gaussian of the given full width at half maximum (ns).
    Gaussian { fwhm_ns: f64 },
    /// Flat top of `flat_ns` with Gaussian rising/falling edges of the given
    /// half width at half maximum (ns).
    FlatTop { flat_ns: f64, edge_hwhm_ns: f64 },
}

/// A pulse envelope: shape, peak amplitude, truncation threshold and an
/// optional hard cap on total support.
///
/// The amplitude is the effective on-port Rabi amplitude in GHz (ordinary
/// frequency). The support cap exists because e.g. a 32 ns flat-top with
/// 3.0 ns edge HWHM has a raw 10⁻³-truncated support of ~50.9 ns; capping to
/// the 50 ns gate slot clips the outermost edge tails (still continuously,
/// via the same offset-subtraction at the clipped boundary).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseEnvelope {
    pub kind: EnvelopeKind,
    /// Peak effective Rabi amplitude Ω (GHz).
    pub amplitude: f64,
    /// Truncation threshold as a fraction of peak.
    pub truncation_threshold: f64,
    /// Optional hard cap on the total support (ns).
    pub max_support_ns: Option<f64>,
}

impl PulseEnvelope {
    pub fn gaussian(amplitude: f64, fwhm_ns: f64) -> Self {
        Self {
            kind: EnvelopeKind::Gaussian { fwhm_ns },
            amplitude,
            truncation_threshold: DEFAULT_TRUNCATION,
            max_support_ns: None,
        }
    }

    pub fn flat_top(amplitude: f64, flat_ns: f64, edge_hwhm_ns: f64) -> Self {
        Self {
            kind: EnvelopeKind::FlatTop { flat_ns, edge_hwhm_ns },
            amplitude,
            truncation_threshold: DEFAULT_TRUNCATION,
            max_support_ns: None,
        }
    }

    pub fn with_max_support(mut self, cap_ns: f64) -> Self {
        self.max_support_ns = Some(cap_ns);
        self
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Gaussian σ of the shape (edge σ for flat-top).
    fn sigma(&self) -> f64 {
        let fwhm_factor = (8.0 * 2.0_f64.ln()).sqrt();
        match self.kind {
            EnvelopeKind::Gaussian { fwhm_ns } => fwhm_ns / fwhm_factor,
            // HWHM h: exp(-h²/2σ²) = 1/2.
            EnvelopeKind::FlatTop { edge_hwhm_ns, .. } => {
                edge_hwhm_ns / (2.0 * 2.0_f64.ln()).sqrt()
            }
        }
    }

    /// Duration of one truncated Gaussian edge (from the truncation point to
    /// the peak/flat region), after applying the support cap.
    fn edge_duration(&self) -> f64 {
        let natural = self.sigma() * (2.0 * (1.0 / self.truncation_threshold).ln()).sqrt();
        let flat = match self.kind {
            EnvelopeKind::Gaussian { .. } => 0.0,
            EnvelopeKind::FlatTop { flat_ns, .. } => flat_ns,
        };
        match self.max_support_ns {
            Some(cap) => natural.min(((cap - flat) / 2.0).max(0.0)),
            None => natural,
        }
    }

    /// Total support (ns): the envelope is identically zero outside
    /// [0, support_ns()] relative to the tone start.
    pub fn support_ns(&self) -> f64 {
        let flat = match self.kind {
            EnvelopeKind::Gaussian { .. } => 0.0,
            EnvelopeKind::FlatTop { flat_ns, .. } => flat_ns,
        };
        2.0 * self.edge_duration() + flat
    }

    /// Envelope value at time `t` since the tone start (GHz); zero outside
    /// the support, continuous everywhere, peak = `amplitude`.
    pub fn value(&self, t: f64) -> f64 {
        let edge = self.edge_duration();
        let support = self.support_ns();
        if t <= 0.0 || t >= support {
            return 0.0;
        }
        let sigma = self.sigma();
        // Distance past the flat/peak point, measured into the nearer edge.
        let x = if t < edge {
            edge - t
        } else if t > support - edge {
            t - (support - edge)
        } else {
            0.0
        };
        let raw = (-x * x / (2.0 * sigma * sigma)).exp();
        // Offset-subtract so the value is exactly zero at the truncation
        // point and the peak stays at `amplitude`.
        let floor = (-edge * edge / (2.0 * sigma * sigma)).exp();
        self.amplitude * (raw - floor) / (1.0 - floor)
    }

    /// ∫ envelope dt over the support (GHz·ns), by Simpson quadrature on the
    /// analytic form (the envelope is smooth; 1000 panels ≫ enough).
    pub fn area(&self) -> f64 {
        let support = self.support_ns();
        let n = 1000;
        let h = support / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let t0 = i as f64 * h;
            acc += h / 6.0 * (self.value(t0) + 4.0 * self.value(t0 + h / 2.0) + self.value(t0 + h));
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_is_continuous_and_truncated() {
        let env = PulseEnvelope::gaussian(0.1, 18.6);
        let support = env.support_ns();
        assert!(support > 18.6 && support < 80.0);
        assert_eq!(env.value(-1.0), 0.0);
        assert_eq!(env.value(support + 1e-9), 0.0);
        // Continuity at the truncation boundary.
        assert!(env.value(1e-6) < 1e-6);
        assert!(env.value(support - 1e-6) < 1e-6);
        // Peak at the center.
        assert_relative_eq!(env.value(support / 2.0), 0.1, epsilon = 1e-12);
        // FWHM property of the raw shape (offset shifts it only slightly).
        let half = env.value(support / 2.0 + 18.6 / 2.0);
        assert_relative_eq!(half, 0.05, max_relative = 0.01);
    }

    #[test]
    fn flat_top_cap_fits_gate_slot() {
        let env = PulseEnvelope::flat_top(0.2, 32.0, 3.0);
        assert!(env.support_ns() > 50.0, "raw support {}", env.support_ns());
        let capped = env.with_max_support(50.0);
        assert!(capped.support_ns() <= 50.0 + 1e-12);
        // Still continuous at the clipped boundary and flat in the middle.
        assert!(capped.value(1e-6) < 1e-5);
        assert_relative_eq!(capped.value(25.0), 0.2, epsilon = 1e-12);
        let edge = (capped.support_ns() - 32.0) / 2.0;
        assert_relative_eq!(capped.value(edge + 1.0), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn envelope_nonnegative() {
        for env in [
            PulseEnvelope::gaussian(0.05, 10.0),
            PulseEnvelope::flat_top(0.3, 16.0, 1.5).with_max_support(24.0),
        ] {
            let s = env.support_ns();
            for i in 0..=400 {
                let t = s * i as f64 / 400.0;
                assert!(env.value(t) >= 0.0);
            }
        }
    }

    #[test]
    fn area_matches_analytic_gaussian() {
        // Untruncated Gaussian area = A·σ·√(2π); the truncated, offset one
        // is slightly smaller.
        let env = PulseEnvelope::gaussian(0.1, 18.6);
        let sigma = 18.6 / (8.0 * 2.0_f64.ln()).sqrt();
        let analytic = 0.1 * sigma * (2.0 * std::f64::consts::PI).sqrt();
        let area = env.area();
        assert!(area < analytic && area > 0.9 * analytic, "area {area}, analytic {analytic}");
    }
}
