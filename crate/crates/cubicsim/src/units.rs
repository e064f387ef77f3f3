//! Frequency-unit conventions, localized in one place.
//!
//! Everything public in this crate is an ordinary frequency in GHz and a time
//! in ns; the Schrödinger/Lindblad integrators need angular frequencies in
//! rad/ns. Since 1 GHz = 1/ns, the conversion is a bare factor of 2π.

use std::f64::consts::PI;

/// 2π, the GHz → rad/ns conversion factor.
pub const TWO_PI: f64 = 2.0 * PI;

/// Ordinary frequency in GHz → angular frequency in rad/ns.
#[inline]
pub fn ghz_to_rad_per_ns(f_ghz: f64) -> f64 {
    TWO_PI * f_ghz
}

/// Angular frequency in rad/ns → ordinary frequency in GHz.
#[inline]
pub fn rad_per_ns_to_ghz(w: f64) -> f64 {
    w / TWO_PI
}

/// Microseconds → nanoseconds (decoherence times are quoted in µs).
#[inline]
pub fn us_to_ns(t_us: f64) -> f64 {
    1e3 * t_us
}
