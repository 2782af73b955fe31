//! Block-fading channel realisations and pilot-based MMSE estimates.
//!
//! Every AP-user pair gets one orthogonal unit-modulus pilot (no
//! contamination). The AP-side estimate `g_hat_ul` comes from the uplink
//! pilot sent at `p_u`, the user-side estimate `g_hat_dl` from the downlink
//! pilot sent at `p_d`.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::ofdm::complex_normal;
use crate::propagation::LargeScaleMatrix;

/// Variance of the MMSE estimate from a pilot sent at power `p`:
/// `p beta^2 / (p beta + sigma2)`.
pub fn estimate_variance(beta: f64, p: f64, sigma2: f64) -> f64 {
    if beta <= 0.0 {
        return 0.0;
    }
    p * beta * beta / (p * beta + sigma2)
}

/// Uplink estimate variance.
pub fn alpha(beta: f64, p_u: f64, sigma2: f64) -> f64 {
    estimate_variance(beta, p_u, sigma2)
}

/// Downlink estimate variance.
pub fn psi(beta: f64, p_d: f64, sigma2: f64) -> f64 {
    estimate_variance(beta, p_d, sigma2)
}

/// Scalar MMSE estimator `(sqrt(p) beta conj(pilot) / (p beta + sigma2)) r`.
pub fn mmse_estimate(pilot_rx: Complex64, pilot_symbol: Complex64, beta: f64, p: f64, sigma2: f64) -> Complex64 {
    let denom = p * beta + sigma2;
    if denom <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    pilot_symbol.conj() * pilot_rx * (p.sqrt() * beta / denom)
}

/// Second-order statistics of both estimates for every AP-user pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationStats {
    pub alpha: Array2<f64>,
    pub psi: Array2<f64>,
    /// `beta - alpha`.
    pub err_ul: Array2<f64>,
    /// `beta - psi`.
    pub err_dl: Array2<f64>,
    pub p_u: f64,
    pub p_d: f64,
    pub sigma2: f64,
}

impl EstimationStats {
    pub fn new(beta: &Array2<f64>, p_u: f64, p_d: f64, sigma2: f64) -> Self {
        let alpha = beta.mapv(|b| self::alpha(b, p_u, sigma2));
        let psi = beta.mapv(|b| self::psi(b, p_d, sigma2));
        EstimationStats {
            err_ul: beta - &alpha,
            err_dl: beta - &psi,
            alpha,
            psi,
            p_u,
            p_d,
            sigma2,
        }
    }

    pub fn from_large_scale(lsm: &LargeScaleMatrix, p_u: f64, p_d: f64, sigma2: f64) -> Self {
        Self::new(&lsm.beta, p_u, p_d, sigma2)
    }
}

/// How the user-side estimate relates to the AP-side one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DlEstimateModel {
    /// Downlink pilot noise independent of the uplink pilot noise.
    #[default]
    Independent,
    /// The user holds the same estimate as the AP. Only meaningful when
    /// `p_d == p_u`, so that both estimates have the same law.
    Reciprocal,
}

/// True per-RB gains and their paired estimates. Rows are APs, columns users.
#[derive(Debug, Clone, PartialEq)]
pub struct RbChannel {
    pub g: Array2<Complex64>,
    pub g_hat_ul: Array2<Complex64>,
    pub g_hat_dl: Array2<Complex64>,
}

/// Pilot observation `sqrt(p) g + z` (pilot symbol 1) followed by the MMSE rule.
fn estimate_from_pilot<R: Rng + ?Sized>(g: Complex64, beta: f64, p: f64, sigma2: f64, rng: &mut R) -> Complex64 {
    let noise = if sigma2 > 0.0 {
        complex_normal(rng, sigma2)
    } else {
        Complex64::new(0.0, 0.0)
    };
    let rx = g * p.sqrt() + noise;
    mmse_estimate(rx, Complex64::new(1.0, 0.0), beta, p, sigma2)
}

/// Draws `g ~ CN(0, beta)` for every pair together with both estimates.
pub fn draw_rb_channel<R: Rng + ?Sized>(
    beta: &Array2<f64>,
    stats: &EstimationStats,
    model: DlEstimateModel,
    rng: &mut R,
) -> Result<RbChannel> {
    if beta.dim() != stats.alpha.dim() {
        return Err(Error::invalid("beta and estimation statistics differ in shape"));
    }
    if model == DlEstimateModel::Reciprocal && stats.p_u != stats.p_d {
        return Err(Error::invalid("reciprocal downlink estimates require p_d == p_u"));
    }
    let dim = beta.dim();
    let mut g = Array2::zeros(dim);
    let mut g_hat_ul = Array2::zeros(dim);
    let mut g_hat_dl = Array2::zeros(dim);
    for (idx, &b) in beta.indexed_iter() {
        let gi = complex_normal(rng, b);
        let ul = estimate_from_pilot(gi, b, stats.p_u, stats.sigma2, rng);
        let dl = match model {
            DlEstimateModel::Independent => estimate_from_pilot(gi, b, stats.p_d, stats.sigma2, rng),
            DlEstimateModel::Reciprocal => ul,
        };
        g[idx] = gi;
        g_hat_ul[idx] = ul;
        g_hat_dl[idx] = dl;
    }
    Ok(RbChannel { g, g_hat_ul, g_hat_dl })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn alpha_cases() {
        assert_eq!(alpha(0.0, 1.0, 1.0), 0.0);
        assert_eq!(alpha(0.7, 1.0, 0.0), 0.7);
        assert_abs_diff_eq!(alpha(1.0, 1.0, 1.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn psi_cases() {
        assert_abs_diff_eq!(psi(2.0, 1.0, 2.0), 1.0, epsilon = 1e-15);
        assert!(psi(1.0, 1.0, 1e30) < 1e-29);
        for b in [1e-12, 0.3, 5.0] {
            assert_eq!(psi(b, 0.2, 1e-13), alpha(b, 0.2, 1e-13));
        }
    }

    #[test]
    fn estimate_variance_limits() {
        let b = 0.8;
        let mut prev = 0.0;
        for p in [1e-9, 1e-3, 1.0, 1e3, 1e9] {
            let a = alpha(b, p, 1.0);
            assert!(a >= prev && a <= b);
            prev = a;
        }
        assert!(alpha(b, 1e-12, 1.0) < 1e-12);
        assert!((alpha(b, 1e12, 1.0) - b).abs() < 1e-11);
    }

    #[test]
    fn mmse_cases() {
        let g = c(0.3, -1.2);
        assert!((mmse_estimate(g * 2f64.sqrt(), c(1.0, 0.0), 1.0, 2.0, 0.0) - g).norm() < 1e-15);
        assert_eq!(mmse_estimate(c(0.0, 0.0), c(1.0, 0.0), 1.0, 1.0, 1.0), c(0.0, 0.0));
        assert!((mmse_estimate(c(2.0, 0.0), c(1.0, 0.0), 1.0, 1.0, 1.0) - c(1.0, 0.0)).norm() < 1e-15);
        // A rotated pilot is undone by the conjugate.
        let pilot = Complex64::from_polar(1.0, 0.7);
        let est = mmse_estimate(g * pilot, pilot, 1.0, 1.0, 0.0);
        assert!((est - g).norm() < 1e-15);
    }

    #[test]
    fn noiseless_estimates_are_exact() {
        let beta = Array2::from_shape_vec((2, 2), vec![1.0, 0.5, 0.1, 2.0]).unwrap();
        let stats = EstimationStats::new(&beta, 0.2, 0.3, 0.0);
        let ch = draw_rb_channel(&beta, &stats, DlEstimateModel::Independent, &mut stream(1, 0, Purpose::SmallScale)).unwrap();
        for (a, b) in ch.g.iter().zip(&ch.g_hat_ul) {
            assert!((a - b).norm() < 1e-15);
        }
        for (a, b) in ch.g.iter().zip(&ch.g_hat_dl) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn reciprocal_needs_equal_powers() {
        let beta = Array2::from_elem((1, 1), 1.0);
        let stats = EstimationStats::new(&beta, 0.2, 0.3, 0.1);
        let mut rng = stream(1, 0, Purpose::SmallScale);
        assert!(draw_rb_channel(&beta, &stats, DlEstimateModel::Reciprocal, &mut rng).is_err());
    }

    /// Moments over 1e5 draws for a single pair.
    #[test]
    fn joint_law_moments() {
        let n = 100_000;
        let (b, p, s2) = (1.3, 0.5, 0.4);
        let beta = Array2::from_elem((1, n), b);
        let stats = EstimationStats::new(&beta, p, p, s2);
        let a = stats.alpha[[0, 0]];
        let ch = draw_rb_channel(&beta, &stats, DlEstimateModel::Independent, &mut stream(2, 0, Purpose::SmallScale)).unwrap();
        let nf = n as f64;

        let var_hat = ch.g_hat_ul.iter().map(|v| v.norm_sqr()).sum::<f64>() / nf;
        assert!((var_hat / a - 1.0).abs() < 0.02, "Var(g_hat)/alpha = {}", var_hat / a);

        let err: Vec<Complex64> = ch.g.iter().zip(&ch.g_hat_ul).map(|(g, h)| g - h).collect();
        let mse = err.iter().map(|e| e.norm_sqr()).sum::<f64>() / nf;
        assert!((mse / (b - a) - 1.0).abs() < 0.02, "mse ratio {}", mse / (b - a));

        let cross: Vec<Complex64> = ch.g_hat_ul.iter().zip(&err).map(|(h, e)| h.conj() * e).collect();
        let mean = cross.iter().sum::<Complex64>() / nf;
        let sd = (cross.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (nf - 1.0)).sqrt();
        assert!(mean.norm() < 3.0 * sd / nf.sqrt(), "E[g_hat* e] = {mean}");

        let m4 = ch.g_hat_ul.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() / nf;
        let ratio = m4 / (a * a);
        assert!((1.96..=2.04).contains(&ratio), "fourth moment ratio {ratio}");

        let var_dl = ch.g_hat_dl.iter().map(|v| v.norm_sqr()).sum::<f64>() / nf;
        assert!((var_dl / stats.psi[[0, 0]] - 1.0).abs() < 0.02);
    }
}
