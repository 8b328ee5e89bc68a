//! Time-domain interpolation filters for SCO compensation.
//!
//! The compensator is a Farrow structure: each tap weight is a polynomial in
//! the fractional delay `μ`, so a single coefficient table serves every output
//! sample. Two coefficient sets are provided. [`FarrowKernel::cubic_lagrange`]
//! is the classic 4-tap cubic, exact on polynomials up to degree 3 but only
//! accurate well below Nyquist. [`FarrowKernel::windowed_sinc`] fits
//! low-order polynomials to a Kaiser-windowed sinc and stays accurate up to
//! the edge of an OFDM band filling ~82% of Nyquist, which is what the
//! receiver uses by default.
//!
//! A direct (non-polynomial) windowed-sinc interpolator is also exposed; the
//! channel model uses it to emulate the receiver's sampling clock.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{param_err, Error, Result};
use crate::stream::IqStream;

/// Largest relative clock offset the resampler accepts.
pub const MAX_GAMMA: f64 = 1e-3;

/// Interpolator family used by [`resample`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interpolator {
    /// 4-tap cubic-Lagrange Farrow.
    FarrowCubic,
    /// Farrow with polynomial-fitted Kaiser-windowed-sinc taps.
    Farrow { taps: usize, degree: usize },
    /// Directly evaluated Kaiser-windowed sinc.
    WindowedSinc { taps: usize },
}

impl Default for Interpolator {
    fn default() -> Self {
        Interpolator::Farrow { taps: 16, degree: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResampleSpec {
    pub structure: Interpolator,
}

/// Kaiser β for the fitted Farrow kernel.
const FARROW_BETA: f64 = 5.0;
/// Kaiser β for the direct windowed-sinc mode.
const SINC_BETA: f64 = 10.0;

/// Modified Bessel function of the first kind, order zero (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn kaiser(d: f64, half_width: f64, beta: f64, i0_beta: f64) -> f64 {
    let r = d / half_width;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - r * r).sqrt()) / i0_beta
}

fn sinc(d: f64) -> f64 {
    if d == 0.0 {
        1.0
    } else {
        let a = std::f64::consts::PI * d;
        a.sin() / a
    }
}

/// Something that turns a fractional delay into tap weights over input
/// samples `n + first() .. n + first() + taps()`.
trait Kernel {
    fn first(&self) -> isize;
    fn taps(&self) -> usize;
    fn fill_weights(&self, mu: f64, w: &mut [f64]);
}

/// Farrow coefficient table. Weight of tap `i` at delay `μ` is
/// `Σ_p coeffs[p][i] · (μ − ½)^p`; tap `i` reads input `n + first + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FarrowKernel {
    first: isize,
    coeffs: Vec<Vec<f64>>,
}

impl FarrowKernel {
    pub fn cubic_lagrange() -> Self {
        Self::lagrange(4)
    }

    /// Lagrange interpolator through the `taps` nodes around the output position.
    pub fn lagrange(taps: usize) -> Self {
        assert!(taps >= 2 && taps.is_multiple_of(2), "lagrange kernel needs an even tap count");
        let first = -(taps as isize / 2 - 1);
        let nodes: Vec<f64> = (0..taps).map(|i| (first + i as isize) as f64).collect();
        let mut coeffs = vec![vec![0.0; taps]; taps];
        for (i, &di) in nodes.iter().enumerate() {
            // Π_{j≠i} (u + ½ − d_j) / (d_i − d_j), expanded in powers of u.
            let mut poly = vec![1.0];
            let mut denom = 1.0;
            for (j, &dj) in nodes.iter().enumerate() {
                if j == i {
                    continue;
                }
                let c0 = 0.5 - dj;
                let mut next = vec![0.0; poly.len() + 1];
                for (p, &a) in poly.iter().enumerate() {
                    next[p] += a * c0;
                    next[p + 1] += a;
                }
                poly = next;
                denom *= di - dj;
            }
            for (p, a) in poly.into_iter().enumerate() {
                coeffs[p][i] = a / denom;
            }
        }
        Self { first, coeffs }
    }

    /// Kaiser-windowed sinc over `taps` samples, each tap's weight fitted by a
    /// degree-`degree` polynomial in `μ` through Chebyshev nodes. Weights are
    /// normalised to unit DC gain at every node, so the fitted kernel
    /// preserves constants exactly.
    pub fn windowed_sinc(taps: usize, degree: usize, beta: f64) -> Result<Self> {
        if taps < 4 || !taps.is_multiple_of(2) {
            return param_err(format!("Farrow tap count must be even and at least 4, got {taps}"));
        }
        if degree == 0 || degree > 12 {
            return param_err(format!("Farrow degree must be in 1..=12, got {degree}"));
        }
        let first = -(taps as isize / 2 - 1);
        let half = taps as f64 / 2.0;
        let i0b = bessel_i0(beta);
        let m = degree + 1;
        let nodes: Vec<f64> = (0..m)
            .map(|j| 0.5 * (std::f64::consts::PI * (2 * j + 1) as f64 / (2 * m) as f64).cos())
            .collect();
        let vander = DMatrix::from_fn(m, m, |r, c| nodes[r].powi(c as i32));
        let samples = DMatrix::from_fn(m, taps, |r, i| {
            let mu = nodes[r] + 0.5;
            let d = mu - (first + i as isize) as f64;
            sinc(d) * kaiser(d, half, beta, i0b)
        });
        let mut samples = samples;
        for r in 0..m {
            let s: f64 = samples.row(r).sum();
            samples.row_mut(r).scale_mut(1.0 / s);
        }
        let sol = vander
            .lu()
            .solve(&samples)
            .ok_or_else(|| Error::Internal("singular Chebyshev Vandermonde system".into()))?;
        let coeffs = (0..m).map(|p| sol.row(p).iter().copied().collect()).collect();
        Ok(Self { first, coeffs })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Tap weights at fractional delay `mu`.
    pub fn weights(&self, mu: f64) -> Vec<f64> {
        let mut w = vec![0.0; self.taps()];
        self.fill_weights(mu, &mut w);
        w
    }

    /// Interpolated value of `x` at position `n + mu`, zero outside the slice.
    pub fn interpolate(&self, x: &[Complex64], n: isize, mu: f64) -> Complex64 {
        let w = self.weights(mu);
        dot(x, n + self.first, &w)
    }
}

impl Kernel for FarrowKernel {
    fn first(&self) -> isize {
        self.first
    }

    fn taps(&self) -> usize {
        self.coeffs[0].len()
    }

    fn fill_weights(&self, mu: f64, w: &mut [f64]) {
        let u = mu - 0.5;
        let (last, rest) = self.coeffs.split_last().expect("at least one coefficient row");
        w.copy_from_slice(last);
        for row in rest.iter().rev() {
            for (wi, &c) in w.iter_mut().zip(row) {
                *wi = *wi * u + c;
            }
        }
    }
}

/// Directly evaluated Kaiser-windowed sinc, normalised to unit DC gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SincKernel {
    taps: usize,
    beta: f64,
    i0_beta: f64,
}

impl SincKernel {
    pub fn new(taps: usize, beta: f64) -> Result<Self> {
        if taps < 4 || !taps.is_multiple_of(2) {
            return param_err(format!("sinc tap count must be even and at least 4, got {taps}"));
        }
        Ok(Self {
            taps,
            beta,
            i0_beta: bessel_i0(beta),
        })
    }
}

impl Kernel for SincKernel {
    fn first(&self) -> isize {
        -(self.taps as isize / 2 - 1)
    }

    fn taps(&self) -> usize {
        self.taps
    }

    fn fill_weights(&self, mu: f64, w: &mut [f64]) {
        let half = self.taps as f64 / 2.0;
        let first = self.first();
        // sin(π(μ − j)) = (−1)^j sin(πμ): one sine per output sample.
        let s = (std::f64::consts::PI * mu).sin();
        let mut total = 0.0;
        for (i, wi) in w.iter_mut().enumerate() {
            let j = first + i as isize;
            let d = mu - j as f64;
            let sn = if d == 0.0 {
                1.0
            } else {
                let sign = if j.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                sign * s / (std::f64::consts::PI * d)
            };
            *wi = sn * kaiser(d, half, self.beta, self.i0_beta);
            total += *wi;
        }
        for wi in w.iter_mut() {
            *wi /= total;
        }
    }
}

fn dot(x: &[Complex64], start: isize, w: &[f64]) -> Complex64 {
    let len = x.len() as isize;
    if start >= 0 && start + w.len() as isize <= len {
        let s = start as usize;
        x[s..s + w.len()]
            .iter()
            .zip(w)
            .fold(Complex64::new(0.0, 0.0), |acc, (v, &wi)| acc + v * wi)
    } else {
        w.iter()
            .enumerate()
            .filter_map(|(i, &wi)| {
                let n = start + i as isize;
                (n >= 0 && n < len).then(|| x[n as usize] * wi)
            })
            .fold(Complex64::new(0.0, 0.0), |acc, v| acc + v)
    }
}

/// Integer/fraction split of `m + offset` with the offset kept separate so that
/// large `m` does not eat the fraction's precision.
fn split_position(m: usize, offset: f64) -> (isize, f64) {
    let fl = offset.floor();
    (m as isize + fl as isize, offset - fl)
}

/// Evaluates the stream at input positions `m + offset(m)` for `m < out_len`.
fn interpolate_stream(
    stream: &IqStream,
    kernel: &dyn Kernel,
    out_len: usize,
    offset: impl Fn(usize) -> f64,
    out_rate: f64,
) -> IqStream {
    let mut w = vec![0.0; kernel.taps()];
    let mut x = Vec::with_capacity(out_len);
    let mut y = Vec::with_capacity(out_len);
    let mut last_mu = f64::NAN;
    for m in 0..out_len {
        let (n, mu) = split_position(m, offset(m));
        if mu != last_mu {
            kernel.fill_weights(mu, &mut w);
            last_mu = mu;
        }
        let start = n + kernel.first();
        x.push(dot(&stream.x, start, &w));
        y.push(dot(&stream.y, start, &w));
    }
    IqStream {
        x,
        y,
        sample_rate: out_rate,
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma.abs() <= MAX_GAMMA) {
        return param_err(format!("|gamma| must not exceed {MAX_GAMMA}, got {gamma}"));
    }
    Ok(())
}

/// Resamples a stream captured with period `T_r = (1+γ)T_t` back onto the
/// `T_t` grid, given the estimate `gamma_hat` of `γ`.
///
/// Output sample `m` is the input interpolated at position `m / (1+γ̂)`.
/// The output has `⌊len·(1+γ̂)⌋` samples; the input is treated as zero outside
/// its support, so the first and last half-kernel of outputs are edge-affected.
pub fn resample(stream: &IqStream, gamma_hat: f64, spec: &ResampleSpec) -> Result<IqStream> {
    check_gamma(gamma_hat)?;
    let out_len = (stream.len() as f64 * (1.0 + gamma_hat)).floor() as usize;
    // m/(1+γ̂) = m − m·γ̂/(1+γ̂)
    let d = gamma_hat / (1.0 + gamma_hat);
    let offset = move |m: usize| -(m as f64) * d;
    let rate = stream.sample_rate * (1.0 + gamma_hat);
    Ok(match spec.structure {
        Interpolator::FarrowCubic => {
            interpolate_stream(stream, &FarrowKernel::cubic_lagrange(), out_len, offset, rate)
        }
        Interpolator::Farrow { taps, degree } => {
            let k = FarrowKernel::windowed_sinc(taps, degree, FARROW_BETA)?;
            interpolate_stream(stream, &k, out_len, offset, rate)
        }
        Interpolator::WindowedSinc { taps } => {
            let k = SincKernel::new(taps, SINC_BETA)?;
            interpolate_stream(stream, &k, out_len, offset, rate)
        }
    })
}

/// Delays every sample by a constant fraction: output `n` is the cubic-Lagrange
/// interpolation of the input at `n + mu`.
pub fn fractional_delay(stream: &IqStream, mu: f64) -> Result<IqStream> {
    if !(0.0..1.0).contains(&mu) {
        return param_err(format!("fractional delay must be in [0, 1), got {mu}"));
    }
    Ok(interpolate_stream(
        stream,
        &FarrowKernel::cubic_lagrange(),
        stream.len(),
        |_| mu,
        stream.sample_rate,
    ))
}

/// Band-limited re-sampling at input positions `m·(1+γ)`: the reference model
/// of an ADC whose period is `(1+γ)` times the DAC period.
///
/// Output covers every `m` with `m·(1+γ) ≤ len − 1`; the sample rate drops by
/// `1+γ`.
pub fn sinc_sample_at_offset(stream: &IqStream, gamma: f64, taps: usize, beta: f64) -> Result<IqStream> {
    check_gamma(gamma)?;
    let kernel = SincKernel::new(taps, beta)?;
    let out_len = if stream.is_empty() {
        0
    } else {
        ((stream.len() - 1) as f64 / (1.0 + gamma)).floor() as usize + 1
    };
    Ok(interpolate_stream(
        stream,
        &kernel,
        out_len,
        move |m| m as f64 * gamma,
        stream.sample_rate / (1.0 + gamma),
    ))
}
