//! Time-domain OFDM chain: DFT, modulation, cyclic prefix, multipath
//! convolution and demodulation.
//!
//! The DFT matrix `D[n][n'] = exp(-2 pi j n n' / N)` is unnormalised, so
//! modulation is `x = D^-1 x~ = (1/N) D* x~` and demodulation is `y~ = D y`.
//! With this scaling a channel filter `g` has frequency response `D g` and
//! Parseval reads `sum |g~|^2 = N sum |g|^2`.
//!
//! [`dft_matrix`] is the reference definition; [`Dft`] wraps `rustfft` for
//! speed and is tested against it.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Frequency-domain symbol block, one entry per subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqBlock(pub Vec<Complex64>);

impl FreqBlock {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Multipath channel between one AP and one user: small-scale taps plus the
/// large-scale gain. The effective filter is `sqrt(large_scale) * taps`.
#[derive(Debug, Clone, PartialEq)]
pub struct TapChannel {
    pub taps: Vec<Complex64>,
    pub large_scale: f64,
}

impl TapChannel {
    pub fn new(taps: Vec<Complex64>, large_scale: f64) -> Self {
        TapChannel { taps, large_scale }
    }

    /// Unit-gain channel with the given taps.
    pub fn from_taps(taps: Vec<Complex64>) -> Self {
        TapChannel::new(taps, 1.0)
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// The filter actually applied to the signal.
    pub fn gains(&self) -> Vec<Complex64> {
        let s = self.large_scale.sqrt();
        self.taps.iter().map(|h| h * s).collect()
    }

    /// Rayleigh taps with a uniform power-delay profile: each tap is
    /// CN(0, 1/L) so the per-subcarrier gain has variance `large_scale`.
    pub fn rayleigh<R: Rng + ?Sized>(len: usize, large_scale: f64, rng: &mut R) -> Self {
        let var = 1.0 / len as f64;
        let taps = (0..len).map(|_| complex_normal(rng, var)).collect();
        TapChannel::new(taps, large_scale)
    }
}

/// Circularly-symmetric complex Gaussian sample with total variance `var`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// N x N DFT matrix with entries `exp(-2 pi j n n' / N)`.
pub fn dft_matrix(n: usize) -> Array2<Complex64> {
    Array2::from_shape_fn((n, n), |(r, c)| {
        // Reduce the exponent mod N first to keep the phase accurate.
        let e = (r * c) % n;
        Complex64::from_polar(1.0, -2.0 * PI * e as f64 / n as f64)
    })
}

/// `D x` by direct matrix-vector product. O(N^2); reference only.
pub fn dft_by_matrix(x: &[Complex64]) -> Vec<Complex64> {
    let d = dft_matrix(x.len());
    d.rows()
        .into_iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Cached forward/inverse FFT plans for one block length.
#[derive(Clone)]
pub struct Dft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dft").field("n", &self.n).finish()
    }
}

impl Dft {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "DFT length must be positive");
        let mut planner = FftPlanner::new();
        Dft {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `D x`, in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n);
        self.forward.process(buf);
    }

    /// `D^-1 x = (1/N) D* x`, in place.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n);
        self.inverse.process(buf);
        let scale = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }

    pub fn modulate(&self, block: &FreqBlock) -> Vec<Complex64> {
        let mut buf = block.0.clone();
        self.inverse(&mut buf);
        buf
    }

    pub fn demodulate(&self, time: &[Complex64]) -> FreqBlock {
        let mut buf = time.to_vec();
        self.forward(&mut buf);
        FreqBlock(buf)
    }
}

/// Time-domain block `(1/N) D* x~`.
pub fn ofdm_modulate(block: &FreqBlock) -> Vec<Complex64> {
    Dft::new(block.len()).modulate(block)
}

/// Frequency-domain block `D y`.
pub fn ofdm_demodulate(time: &[Complex64]) -> FreqBlock {
    Dft::new(time.len()).demodulate(time)
}

/// Prepends the last `l_cp` samples.
pub fn add_cp(x: &[Complex64], l_cp: usize) -> Result<Vec<Complex64>> {
    if l_cp > x.len() {
        return Err(Error::invalid(format!(
            "cyclic prefix length {l_cp} exceeds block length {}",
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(x.len() + l_cp);
    out.extend_from_slice(&x[x.len() - l_cp..]);
    out.extend_from_slice(x);
    Ok(out)
}

/// Drops the first `l_cp` samples.
pub fn remove_cp(x: &[Complex64], l_cp: usize) -> Result<Vec<Complex64>> {
    if l_cp > x.len() {
        return Err(Error::invalid(format!(
            "cyclic prefix length {l_cp} exceeds received length {}",
            x.len()
        )));
    }
    Ok(x[l_cp..].to_vec())
}

/// Linear convolution of `x` with `filter`, truncated to `x.len()` outputs
/// (samples before the block are zero).
pub fn convolve_truncated(x: &[Complex64], filter: &[Complex64]) -> Vec<Complex64> {
    (0..x.len())
        .map(|n| {
            filter
                .iter()
                .enumerate()
                .take(n + 1)
                .map(|(l, g)| g * x[n - l])
                .sum()
        })
        .collect()
}

/// Passes `x_cp` through the channel filter and adds complex AWGN whose real
/// and imaginary parts each have standard deviation `noise_std`.
pub fn channel_apply<R: Rng + ?Sized>(
    x_cp: &[Complex64],
    ch: &TapChannel,
    noise_std: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    let mut y = convolve_truncated(x_cp, &ch.gains());
    if noise_std > 0.0 {
        let var = 2.0 * noise_std * noise_std;
        y.iter_mut().for_each(|v| *v += complex_normal(rng, var));
    }
    y
}

/// Per-subcarrier response `D g^N` of the zero-padded filter.
pub fn freq_response(ch: &TapChannel, n: usize) -> Result<FreqBlock> {
    if ch.len() > n {
        return Err(Error::invalid(format!(
            "channel length {} exceeds DFT length {n}",
            ch.len()
        )));
    }
    let mut buf = ch.gains();
    buf.resize(n, Complex64::new(0.0, 0.0));
    Dft::new(n).forward(&mut buf);
    Ok(FreqBlock(buf))
}

/// Noise-free full chain (modulate, CP, convolve, strip CP, demodulate)
/// compared against the per-subcarrier model `g~ . x~`; returns the largest
/// absolute deviation.
pub fn decomposition_residual(
    block: &FreqBlock,
    ch: &TapChannel,
    n: usize,
    l_cp: usize,
) -> Result<f64> {
    if block.len() != n {
        return Err(Error::invalid(format!(
            "block length {} does not match N = {n}",
            block.len()
        )));
    }
    let dft = Dft::new(n);
    let x = dft.modulate(block);
    let x_cp = add_cp(&x, l_cp)?;
    let y_cp = convolve_truncated(&x_cp, &ch.gains());
    let y = remove_cp(&y_cp, l_cp)?;
    let received = dft.demodulate(&y);
    let response = freq_response(ch, n)?;
    Ok(received
        .0
        .iter()
        .zip(response.0.iter().zip(&block.0))
        .map(|(r, (g, x))| (r - g * x).norm())
        .fold(0.0, f64::max))
}

/// Which sinc the tap-gain formula samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SincConvention {
    /// `sin(x) / x`.
    #[default]
    Unnormalized,
    /// `sin(pi x) / (pi x)`, zero at every nonzero integer.
    Normalized,
}

impl SincConvention {
    pub fn eval(self, x: f64) -> f64 {
        if x == 0.0 {
            return 1.0;
        }
        match self {
            SincConvention::Unnormalized => x.sin() / x,
            SincConvention::Normalized => (PI * x).sin() / (PI * x),
        }
    }
}

/// One propagation path: attenuation and delay in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub attenuation: f64,
    pub delay: f64,
}

/// Discrete-time taps `h_l = sum_i a_i exp(-2 pi j f_c tau_i) sinc(l - tau_i / T_s)`.
///
/// `f_c` in Hz. An empty path list gives all-zero taps.
pub fn tap_gains_from_paths(
    paths: &[Path],
    sample_period: f64,
    f_c: f64,
    len: usize,
    sinc: SincConvention,
) -> Result<TapChannel> {
    if !(sample_period > 0.0) {
        return Err(Error::invalid("sample period must be positive"));
    }
    let taps = (0..len)
        .map(|l| {
            paths
                .iter()
                .map(|p| {
                    let phase = Complex64::from_polar(1.0, -2.0 * PI * f_c * p.delay);
                    phase * (p.attenuation * sinc.eval(l as f64 - p.delay / sample_period))
                })
                .sum()
        })
        .collect();
    Ok(TapChannel::from_taps(taps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_block<R: Rng>(rng: &mut R, n: usize) -> FreqBlock {
        FreqBlock((0..n).map(|_| complex_normal(rng, 1.0)).collect())
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn dft_small_cases() {
        let d1 = dft_matrix(1);
        assert_eq!(d1[[0, 0]], c(1.0, 0.0));
        let d2 = dft_matrix(2);
        let expect = [[1.0, 1.0], [1.0, -1.0]];
        for r in 0..2 {
            for col in 0..2 {
                assert!((d2[[r, col]] - c(expect[r][col], 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn dft_scaled_unitarity() {
        for n in [7, 64] {
            let d = dft_matrix(n);
            let dh = d.t().mapv(|v| v.conj());
            let prod = d.dot(&dh);
            for ((r, col), v) in prod.indexed_iter() {
                let target = if r == col { n as f64 } else { 0.0 };
                assert!((v - c(target, 0.0)).norm() < 1e-10);
            }
            // D * (D* / N) = I
            let inv = d.mapv(|v| v.conj() / n as f64);
            let eye = d.dot(&inv);
            for ((r, col), v) in eye.indexed_iter() {
                let target = if r == col { 1.0 } else { 0.0 };
                assert!((v - c(target, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn fft_matches_matrix_dft() {
        let mut rng = stream(5, 0, Purpose::Oracle);
        for n in [1, 6, 8, 45, 64, 100] {
            let x = random_block(&mut rng, n).0;
            let mut fast = x.clone();
            Dft::new(n).forward(&mut fast);
            assert!(max_diff(&fast, &dft_by_matrix(&x)) < 1e-10);
        }
    }

    #[test]
    fn modulation_special_blocks() {
        let n = 8;
        let ones = FreqBlock(vec![c(1.0, 0.0); n]);
        let x = ofdm_modulate(&ones);
        assert!((x[0] - c(1.0, 0.0)).norm() < 1e-14);
        assert!(x[1..].iter().all(|v| v.norm() < 1e-14));

        let mut impulse = vec![c(0.0, 0.0); n];
        impulse[0] = c(1.0, 0.0);
        let x = ofdm_modulate(&FreqBlock(impulse));
        assert!(x.iter().all(|v| (v - c(1.0 / n as f64, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn modulation_round_trip() {
        let mut rng = stream(9, 1, Purpose::Oracle);
        for n in [8, 64, 128, 256] {
            for _ in 0..10 {
                let block = random_block(&mut rng, n);
                let back = ofdm_demodulate(&ofdm_modulate(&block));
                assert!(max_diff(&back.0, &block.0) < 1e-10);
            }
        }
    }

    #[test]
    fn cyclic_prefix() {
        let x: Vec<Complex64> = (1..=4).map(|v| c(v as f64, 0.0)).collect();
        let with = add_cp(&x, 2).unwrap();
        let expect: Vec<Complex64> = [3.0, 4.0, 1.0, 2.0, 3.0, 4.0].iter().map(|&v| c(v, 0.0)).collect();
        assert_eq!(with, expect);
        assert_eq!(remove_cp(&with, 2).unwrap(), x);
        assert_eq!(add_cp(&x, 0).unwrap(), x);
        assert!(matches!(add_cp(&x, 5), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn identity_and_delay_channels() {
        let mut rng = stream(2, 2, Purpose::Oracle);
        let x = random_block(&mut rng, 10).0;
        let id = TapChannel::from_taps(vec![c(1.0, 0.0)]);
        assert_eq!(channel_apply(&x, &id, 0.0, &mut rng), x);
        let delay = TapChannel::from_taps(vec![c(0.0, 0.0), c(1.0, 0.0)]);
        let y = channel_apply(&x, &delay, 0.0, &mut rng);
        assert_eq!(y[0], c(0.0, 0.0));
        assert_eq!(&y[1..], &x[..9]);
    }

    #[test]
    fn convolution_matches_brute_force() {
        let mut rng = stream(4, 4, Purpose::Oracle);
        for _ in 0..20 {
            let x = random_block(&mut rng, 40).0;
            let ch = TapChannel::rayleigh(5, 2.5, &mut rng);
            let g = ch.gains();
            let y = channel_apply(&x, &ch, 0.0, &mut rng);
            for (n, yn) in y.iter().enumerate() {
                let mut acc = c(0.0, 0.0);
                for (l, gl) in g.iter().enumerate() {
                    if n >= l {
                        acc += gl * x[n - l];
                    }
                }
                assert!((yn - acc).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn channel_noise_variance() {
        let mut rng = stream(4, 5, Purpose::Oracle);
        let x = vec![c(0.0, 0.0); 200_000];
        let y = channel_apply(&x, &TapChannel::from_taps(vec![c(1.0, 0.0)]), 0.5, &mut rng);
        let var = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;
        assert!((var / 0.5 - 1.0).abs() < 0.01, "variance {var}");
    }

    #[test]
    fn freq_response_cases() {
        let r = freq_response(&TapChannel::from_taps(vec![c(1.0, 0.0)]), 4).unwrap();
        assert!(r.0.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));

        let r = freq_response(&TapChannel::from_taps(vec![c(0.0, 0.0), c(1.0, 0.0)]), 4).unwrap();
        let expect = [c(1.0, 0.0), c(0.0, -1.0), c(-1.0, 0.0), c(0.0, 1.0)];
        assert!(max_diff(&r.0, &expect) < 1e-15);

        let mut rng = stream(1, 1, Purpose::Oracle);
        let ch = TapChannel::rayleigh(6, 3.0, &mut rng);
        let r = freq_response(&ch, 32).unwrap();
        let lhs: f64 = r.0.iter().map(|v| v.norm_sqr()).sum();
        let rhs: f64 = 32.0 * ch.gains().iter().map(|v| v.norm_sqr()).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-10 * rhs);

        assert!(freq_response(&ch, 4).is_err());
    }

    #[test]
    fn decomposition_holds_with_adequate_cp() {
        let mut rng = stream(6, 0, Purpose::Oracle);
        for i in 0..100 {
            let n = [16, 64, 100][i % 3];
            let l_cp = 1 + i % 8;
            let len = 1 + i % l_cp;
            let block = random_block(&mut rng, n);
            let ch = TapChannel::rayleigh(len, 1.0, &mut rng);
            assert!(decomposition_residual(&block, &ch, n, l_cp).unwrap() < 1e-9);
        }
    }

    #[test]
    fn decomposition_breaks_without_cp() {
        let mut rng = stream(6, 1, Purpose::Oracle);
        let block = random_block(&mut rng, 64);
        let ch = TapChannel::rayleigh(3, 1.0, &mut rng);
        assert!(decomposition_residual(&block, &ch, 64, 0).unwrap() > 1e-6);
    }

    #[test]
    fn decomposition_identity_channel() {
        let mut rng = stream(6, 2, Purpose::Oracle);
        let block = random_block(&mut rng, 32);
        let ch = TapChannel::from_taps(vec![c(1.0, 0.0)]);
        assert!(decomposition_residual(&block, &ch, 32, 0).unwrap() < 1e-12);
    }

    #[test]
    fn taps_single_path_at_zero_delay() {
        let paths = [Path { attenuation: 1.0, delay: 0.0 }];
        let ch = tap_gains_from_paths(&paths, 1e-7, 2e9, 4, SincConvention::Normalized).unwrap();
        assert!((ch.taps[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(ch.taps[1..].iter().all(|v| v.norm() < 1e-15));

        // sin(x)/x does not vanish at the integers.
        let ch = tap_gains_from_paths(&paths, 1e-7, 2e9, 4, SincConvention::Unnormalized).unwrap();
        assert!((ch.taps[0] - c(1.0, 0.0)).norm() < 1e-15);
        for l in 1..4 {
            let want = (l as f64).sin() / l as f64;
            assert!((ch.taps[l] - c(want, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn taps_integer_delay() {
        let ts = 1e-6;
        let paths = [Path { attenuation: 1.0, delay: 2.0 * ts }];
        let ch = tap_gains_from_paths(&paths, ts, 0.0, 5, SincConvention::Normalized).unwrap();
        for (l, h) in ch.taps.iter().enumerate() {
            let want = if l == 2 { 1.0 } else { 0.0 };
            assert!((h - c(want, 0.0)).norm() < 1e-12, "tap {l}: {h}");
        }
    }

    #[test]
    fn taps_fractional_delays_brute_force() {
        // Values from a direct evaluation of the sum (two paths, unnormalised sinc).
        let ts = 1.0 / 5e6;
        let fc = 2.0e9;
        let paths = [
            Path { attenuation: 0.8, delay: 0.37 * ts },
            Path { attenuation: 0.3, delay: 2.61 * ts },
        ];
        let ch = tap_gains_from_paths(&paths, ts, fc, 4, SincConvention::Unnormalized).unwrap();
        for (l, h) in ch.taps.iter().enumerate() {
            let mut acc = c(0.0, 0.0);
            for p in &paths {
                let x = l as f64 - p.delay / ts;
                let s = if x == 0.0 { 1.0 } else { x.sin() / x };
                let ang = -2.0 * PI * fc * p.delay;
                acc += c(ang.cos(), ang.sin()) * p.attenuation * s;
            }
            assert!((h - acc).norm() < 1e-12);
        }
        assert!(tap_gains_from_paths(&[], ts, fc, 3, SincConvention::Normalized)
            .unwrap()
            .taps
            .iter()
            .all(|v| v.norm() == 0.0));
    }
}
