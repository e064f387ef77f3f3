//! Embedded Dormand–Prince 5(4) adaptive Runge–Kutta integrator.
//!
//! Generic over statically sized complex matrices so the same code propagates
//! state vectors (16×1) and density matrices (16×16). The envelopes are
//! smooth, so a high-order adaptive method takes large steps through the flat
//! parts of a pulse and resolves the Gaussian edges automatically.

use nalgebra::SMatrix;

use crate::linalg::C64;
use crate::{Error, Result};

/// Below this step size (ns) the step-size controller has stalled.
const MIN_STEP_NS: f64 = 1e-12;

/// Integrates dy/dt = rhs(t, y) in place from `t0` to `t1`.
///
/// Error control is a mixed absolute/relative test on the Frobenius norm:
/// a step is accepted when ‖y₅ − y₄‖ ≤ atol + rtol·max(‖y‖, ‖y₅‖).
pub(crate) fn integrate_to<const R: usize, const C: usize, F>(
    rhs: &F,
    t0: f64,
    t1: f64,
    y: &mut SMatrix<C64, R, C>,
    rtol: f64,
    atol: f64,
) -> Result<()>
where
    F: Fn(f64, &SMatrix<C64, R, C>) -> SMatrix<C64, R, C>,
{
    let span = t1 - t0;
    if span <= 1e-14 {
        return Ok(());
    }
    let re = |x: f64| C64::new(x, 0.0);

    let mut t = t0;
    let mut k1 = rhs(t, y);
    // Conservative initial step from the local derivative scale.
    let mut h = (0.01 * (1.0 + y.norm()) / (1.0 + k1.norm())).min(span).min(0.5);

    loop {
        let h_step = h.min(t1 - t);

        // Dormand–Prince stages.
        let k2 = rhs(t + h_step / 5.0, &(*y + k1 * re(h_step / 5.0)));
        let k3 = rhs(
            t + 3.0 / 10.0 * h_step,
            &(*y + k1 * re(h_step * 3.0 / 40.0) + k2 * re(h_step * 9.0 / 40.0)),
        );
        let k4 = rhs(
            t + 4.0 / 5.0 * h_step,
            &(*y + k1 * re(h_step * 44.0 / 45.0) - k2 * re(h_step * 56.0 / 15.0)
                + k3 * re(h_step * 32.0 / 9.0)),
        );
        let k5 = rhs(
            t + 8.0 / 9.0 * h_step,
            &(*y + k1 * re(h_step * 19372.0 / 6561.0) - k2 * re(h_step * 25360.0 / 2187.0)
                + k3 * re(h_step * 64448.0 / 6561.0)
                - k4 * re(h_step * 212.0 / 729.0)),
        );
        let k6 = rhs(
            t + h_step,
            &(*y + k1 * re(h_step * 9017.0 / 3168.0) - k2 * re(h_step * 355.0 / 33.0)
                + k3 * re(h_step * 46732.0 / 5247.0)
                + k4 * re(h_step * 49.0 / 176.0)
                - k5 * re(h_step * 5103.0 / 18656.0)),
        );

        // Fifth-order solution.
        let y5 = *y
            + k1 * re(h_step * 35.0 / 384.0)
            + k3 * re(h_step * 500.0 / 1113.0)
            + k4 * re(h_step * 125.0 / 192.0)
            - k5 * re(h_step * 2187.0 / 6784.0)
            + k6 * re(h_step * 11.0 / 84.0);
        // FSAL stage doubles as the embedded estimate's last node.
        let k7 = rhs(t + h_step, &y5);

        // Error = y5 − y4 via the difference of the two weight rows.
        let err = k1 * re(h_step * (35.0 / 384.0 - 5179.0 / 57600.0))
            + k3 * re(h_step * (500.0 / 1113.0 - 7571.0 / 16695.0))
            + k4 * re(h_step * (125.0 / 192.0 - 393.0 / 640.0))
            - k5 * re(h_step * (2187.0 / 6784.0 - 92097.0 / 339200.0))
            + k6 * re(h_step * (11.0 / 84.0 - 187.0 / 2100.0))
            - k7 * re(h_step / 40.0);

        let scale = atol + rtol * y.norm().max(y5.norm());
        let e = err.norm() / scale;

        if e <= 1.0 {
            t += h_step;
            *y = y5;
            k1 = k7;
            if t >= t1 - 1e-12 {
                return Ok(());
            }
        }
        // PI-free standard controller with safety factor and clamped growth.
        let factor = if e > 0.0 { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) } else { 5.0 };
        h = h_step * factor;
        if h < MIN_STEP_NS {
            return Err(Error::StepRejection { t_ns: t, dt_ns: h });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::SVector;

    #[test]
    fn scalar_exponential() {
        // dy/dt = i w y, closed form e^{iwt}.
        let w = 3.7;
        let rhs = |_t: f64, y: &SVector<C64, 1>| y * C64::new(0.0, w);
        let mut y = SVector::<C64, 1>::from_element(C64::new(1.0, 0.0));
        integrate_to(&rhs, 0.0, 5.0, &mut y, 1e-10, 1e-13).unwrap();
        let exact = C64::new(0.0, w * 5.0).exp();
        assert!((y[0] - exact).norm() < 1e-8);
        assert_relative_eq!(y[0].norm(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn rabi_two_level() {
        // dψ/dt = −i Ω σx ψ from |0⟩: P1(t) = sin²(Ωt).
        let omega = 0.45;
        let rhs = |_t: f64, y: &SVector<C64, 2>| {
            SVector::<C64, 2>::new(y[1] * C64::new(0.0, -omega), y[0] * C64::new(0.0, -omega))
        };
        let mut y = SVector::<C64, 2>::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        let t = 7.3;
        integrate_to(&rhs, 0.0, t, &mut y, 1e-10, 1e-13).unwrap();
        assert_relative_eq!(y[1].norm_sqr(), (omega * t).sin().powi(2), epsilon = 1e-8);
    }

    #[test]
    fn tolerance_halving_converges() {
        let rhs = |t: f64, y: &SVector<C64, 2>| {
            let c = C64::new(0.0, -(1.0 + (0.8 * t).sin()));
            SVector::<C64, 2>::new(y[1] * c, y[0] * c)
        };
        let y0 = SVector::<C64, 2>::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        let mut ya = y0;
        let mut yb = y0;
        integrate_to(&rhs, 0.0, 20.0, &mut ya, 1e-9, 1e-12).unwrap();
        integrate_to(&rhs, 0.0, 20.0, &mut yb, 5e-10, 5e-13).unwrap();
        assert!((ya - yb).norm() < 1e-8);
    }
}
