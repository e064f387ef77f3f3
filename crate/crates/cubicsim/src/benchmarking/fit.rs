//! Decay fitting for randomized benchmarking: weighted Levenberg–Marquardt
//! on m(n) = A·pⁿ + B with standard errors from the Gauss–Newton covariance,
//! plus a Mann–Kendall trend statistic used to reject non-decaying data.

use nalgebra::{Matrix3, Vector3};

use crate::{Error, Result};

/// Fitted decay m(n) = a·pⁿ + b with 1σ standard errors.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    pub a: f64,
    pub b: f64,
    /// Depolarization parameter per Clifford, 0 < p ≤ 1.
    pub p: f64,
    pub a_stderr: f64,
    pub b_stderr: f64,
    pub p_stderr: f64,
    /// Reduced chi-square of the weighted fit (1.0 when dof ≤ 0).
    pub chi2_reduced: f64,
}

/// Weighted least-squares fit of m(n) = a·pⁿ + b.
///
/// `sems` are the per-length standard errors of the means; a small floor is
/// added in quadrature so exact (zero-sem) points do not get infinite weight.
/// Initial guess: b = 0.5, a = 0.5, p from a log-linear regression of
/// max(m − 1/2, ε) against n.
pub fn fit_decay(lengths: &[usize], means: &[f64], sems: &[f64]) -> Result<DecayFit> {
    let n = lengths.len();
    if n != means.len() || n != sems.len() {
        return Err(Error::FitFailed("lengths/means/sems size mismatch".into()));
    }
    if n < 3 {
        return Err(Error::FitFailed(format!("need at least 3 sequence lengths, got {n}")));
    }
    if means.iter().chain(sems).any(|x| !x.is_finite()) {
        return Err(Error::FitFailed("non-finite survival data".into()));
    }
    let xs: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    // Weight floor: 1e-3 in quadrature keeps noiseless data well conditioned
    // without distorting shot-noise-scale sems (~1e-2).
    let w: Vec<f64> = sems.iter().map(|s| 1.0 / (s * s + 1e-6)).collect();

    // Initial guess.
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(means) {
        let ly = (y - 0.5).max(1e-3).ln();
        sx += x;
        sy += ly;
        sxx += x * x;
        sxy += x * ly;
    }
    let denom = n as f64 * sxx - sx * sx;
    let slope = if denom.abs() > 1e-12 { (n as f64 * sxy - sx * sy) / denom } else { 0.0 };
    let mut a = 0.5;
    let mut b = 0.5;
    let mut p = slope.exp().clamp(0.01, 1.0);

    let chi2 = |a: f64, b: f64, p: f64| -> f64 {
        xs.iter()
            .zip(means)
            .zip(&w)
            .map(|((&x, &y), &wi)| {
                let r = y - (a * p.powf(x) + b);
                wi * r * r
            })
            .sum()
    };

    let mut cost = chi2(a, b, p);
    let mut lambda = 1e-3;
    let mut hessian = Matrix3::zeros();
    for _ in 0..200 {
        let mut h = Matrix3::zeros();
        let mut g = Vector3::zeros();
        for ((&x, &y), &wi) in xs.iter().zip(means).zip(&w) {
            let pw = p.powf(x);
            let j = Vector3::new(pw, 1.0, if x > 0.0 { a * x * p.powf(x - 1.0) } else { 0.0 });
            let r = y - (a * pw + b);
            h += j * j.transpose() * wi;
            g += j * (wi * r);
        }
        hessian = h;
        // Damped step; retry with larger damping if the cost does not drop.
        let mut accepted = false;
        for _ in 0..30 {
            let mut hd = h;
            for i in 0..3 {
                hd[(i, i)] += lambda * h[(i, i)].max(1e-12);
            }
            let Some(step) = hd.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let (na, nb) = (a + step[0], b + step[1]);
            let np = (p + step[2]).clamp(1e-9, 1.0);
            let nc = chi2(na, nb, np);
            if nc.is_finite() && nc <= cost {
                let converged = (cost - nc) < 1e-14 * (1.0 + cost);
                a = na;
                b = nb;
                p = np;
                cost = nc;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = converged;
                break;
            }
            lambda *= 5.0;
        }
        if accepted {
            break;
        }
    }
    if !(a.is_finite() && b.is_finite() && p.is_finite()) {
        return Err(Error::FitFailed("fit did not converge to finite parameters".into()));
    }

    let dof = n as isize - 3;
    let chi2_reduced = if dof > 0 { cost / dof as f64 } else { 1.0 };
    let (a_stderr, b_stderr, p_stderr) = match hessian.try_inverse() {
        Some(cov) => {
            let s = |i: usize| (cov[(i, i)].max(0.0) * chi2_reduced.max(1e-30)).sqrt();
            (s(0), s(1), s(2))
        }
        // Degenerate design (e.g. p = 1 makes a and b collinear): the
        // parameters are still reported, the uncertainties are not defined.
        None => (f64::INFINITY, f64::INFINITY, f64::INFINITY),
    };
    Ok(DecayFit { a, b, p, a_stderr, b_stderr, p_stderr, chi2_reduced })
}

/// Mann–Kendall trend statistic z (positive = increasing trend); |z| > 1.645
/// is significant at the one-sided 5% level.
pub fn mann_kendall_z(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 3 {
        return 0.0;
    }
    let mut s: i64 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += match values[j].partial_cmp(&values[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    let var = (n * (n - 1) * (2 * n + 5)) as f64 / 18.0;
    let s = s as f64;
    // Continuity correction.
    if s > 0.0 {
        (s - 1.0) / var.sqrt()
    } else if s < 0.0 {
        (s + 1.0) / var.sqrt()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_synthetic_decay() {
        let lengths: Vec<usize> = vec![1, 2, 4, 7, 11, 16, 22, 30];
        let (a0, b0, p0): (f64, f64, f64) = (0.48, 0.51, 0.93);
        // Small deterministic perturbation standing in for sampling noise.
        let means: Vec<f64> = lengths
            .iter()
            .enumerate()
            .map(|(i, &n)| a0 * p0.powi(n as i32) + b0 + 2e-4 * ((i * 7 % 5) as f64 - 2.0))
            .collect();
        let sems = vec![1e-3; lengths.len()];
        let fit = fit_decay(&lengths, &means, &sems).unwrap();
        assert!((fit.p - p0).abs() < 2e-3, "p = {}", fit.p);
        assert!((fit.a - a0).abs() < 2e-2, "a = {}", fit.a);
        assert!((fit.b - b0).abs() < 2e-2, "b = {}", fit.b);
        assert!(fit.p_stderr > 0.0 && fit.p_stderr < 0.01);
    }

    #[test]
    fn fit_handles_noiseless_p_equal_one() {
        let lengths: Vec<usize> = vec![1, 3, 6, 10];
        let means = vec![1.0; 4];
        let sems = vec![0.0; 4];
        let fit = fit_decay(&lengths, &means, &sems).unwrap();
        assert!((fit.a + fit.b - 1.0).abs() < 1e-6);
        assert!(fit.p > 0.999, "p = {}", fit.p);
    }

    #[test]
    fn mann_kendall_detects_trends() {
        let dec: Vec<f64> = (0..10).map(|i| 1.0 - 0.05 * i as f64).collect();
        let inc: Vec<f64> = dec.iter().rev().copied().collect();
        assert!(mann_kendall_z(&dec) < -1.645);
        assert!(mann_kendall_z(&inc) > 1.645);
        assert_eq!(mann_kendall_z(&[1.0, 1.0, 1.0, 1.0]), 0.0);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_decay(&[1, 2], &[1.0, 0.9], &[0.0, 0.0]).is_err());
        assert!(fit_decay(&[1, 2, 3], &[1.0, f64::NAN, 0.8], &[0.0; 3]).is_err());
    }
}
