//! Baseband-equivalent link impairments: polarisation rotation, chromatic
//! dispersion, ASE noise at a target OSNR, carrier offset with laser phase
//! noise, sampling clock offset and ADC quantisation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::error::{param_err, Result};
use crate::linalg::Jones;
use crate::resample::{self, MAX_GAMMA};
use crate::rng::{derive_seed, rng_from_seed, streams};
use crate::stream::{IqStream, Pol};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// OSNR reference noise bandwidth (0.1 nm at 1550 nm).
pub const OSNR_REF_BANDWIDTH_HZ: f64 = 12.5e9;
/// Windowed-sinc length of the SCO emulation.
pub const SCO_ORACLE_TAPS: usize = 64;
pub const SCO_ORACLE_BETA: f64 = 10.0;

/// Fibre dispersion parameters shared by the channel and the receiver's compensator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdParams {
    pub fiber_km: f64,
    /// D in ps/(nm·km).
    pub dispersion_ps_nm_km: f64,
    pub wavelength_nm: f64,
}

impl CdParams {
    /// Quadratic spectral phase coefficient `π·λ²·D·L/c` in rad/Hz².
    fn phase_coefficient(&self) -> f64 {
        let lambda = self.wavelength_nm * 1e-9;
        let d = self.dispersion_ps_nm_km * 1e-6; // s/m²
        let l = self.fiber_km * 1e3;
        PI * lambda * lambda * d * l / SPEED_OF_LIGHT
    }

    fn validate(&self) -> Result<()> {
        if ![self.fiber_km, self.dispersion_ps_nm_km, self.wavelength_nm]
            .iter()
            .all(|v| v.is_finite())
        {
            return param_err("dispersion parameters must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    /// Relative SCO `γ = (T_r − T_t)/T_t`, in parts per million.
    pub gamma_ppm: f64,
    /// Carrier frequency offset reaching the receiver DSP (after coarse alignment).
    pub cfo_hz: f64,
    /// Transmitter laser linewidth; its phase noise enters before the fibre.
    pub tx_linewidth_hz: f64,
    /// Local-oscillator linewidth; its phase noise enters after the fibre.
    pub lo_linewidth_hz: f64,
    pub fiber_km: f64,
    pub dispersion_ps_nm_km: f64,
    pub wavelength_nm: f64,
    /// Dual-polarisation OSNR in 12.5 GHz; `+∞` disables ASE.
    pub osnr_db: f64,
    /// `None` bypasses the ADC quantiser.
    pub adc_bits: Option<u32>,
    pub clip_sigma: f64,
    /// `None` leaves the polarisations unrotated.
    pub pol_rotation_seed: Option<u64>,
    pub noise_seed: u64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl ChannelParams {
    /// 800 km SSMF at 1550 nm, two 100 kHz lasers, 8-bit ADC, 1 MHz residual
    /// CFO, random polarisation rotation, no SCO and no ASE.
    pub fn reference() -> Self {
        Self {
            gamma_ppm: 0.0,
            cfo_hz: 1e6,
            tx_linewidth_hz: 100e3,
            lo_linewidth_hz: 100e3,
            fiber_km: 800.0,
            dispersion_ps_nm_km: 16.0,
            wavelength_nm: 1550.0,
            osnr_db: f64::INFINITY,
            adc_bits: Some(8),
            clip_sigma: 4.0,
            pol_rotation_seed: Some(0),
            noise_seed: 0,
        }
    }

    /// Every stage bypassed.
    pub fn disabled() -> Self {
        Self {
            gamma_ppm: 0.0,
            cfo_hz: 0.0,
            tx_linewidth_hz: 0.0,
            lo_linewidth_hz: 0.0,
            fiber_km: 0.0,
            osnr_db: f64::INFINITY,
            adc_bits: None,
            pol_rotation_seed: None,
            ..Self::reference()
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma_ppm * 1e-6
    }

    pub fn cd(&self) -> CdParams {
        CdParams {
            fiber_km: self.fiber_km,
            dispersion_ps_nm_km: self.dispersion_ps_nm_km,
            wavelength_nm: self.wavelength_nm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_ppm.is_finite() && self.gamma_ppm.abs() <= MAX_GAMMA * 1e6) {
            return param_err(format!("|gamma_ppm| must not exceed 1000, got {}", self.gamma_ppm));
        }
        if self.osnr_db.is_nan() || self.osnr_db == f64::NEG_INFINITY {
            return param_err("osnr_db must be finite or +inf");
        }
        if let Some(b) = self.adc_bits {
            if !(1..=16).contains(&b) {
                return param_err(format!("adc_bits must be in 1..=16, got {b}"));
            }
        }
        if !(self.clip_sigma.is_finite() && self.clip_sigma > 0.0) {
            return param_err("clip_sigma must be positive");
        }
        if ![self.tx_linewidth_hz, self.lo_linewidth_hz].iter().all(|v| v.is_finite() && *v >= 0.0) {
            return param_err("linewidths must be non-negative");
        }
        if !self.cfo_hz.is_finite() {
            return param_err("cfo_hz must be finite");
        }
        self.cd().validate()
    }
}

/// Emulates a receiver ADC running at period `(1+γ)·T_t`: output sample `m`
/// is the band-limited interpolation of the input at position `m·(1+γ)`.
pub fn apply_sco_oracle(stream: &IqStream, gamma: f64) -> Result<IqStream> {
    resample::sinc_sample_at_offset(stream, gamma, SCO_ORACLE_TAPS, SCO_ORACLE_BETA)
}

fn dispersion_filter(stream: &IqStream, cd: &CdParams, sign: f64) -> Result<IqStream> {
    cd.validate()?;
    if cd.fiber_km == 0.0 || cd.dispersion_ps_nm_km == 0.0 || stream.is_empty() {
        return Ok(stream.clone());
    }
    let n = stream.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let coef = cd.phase_coefficient();
    let df = stream.sample_rate / n as f64;
    let h: Vec<Complex64> = (0..n)
        .map(|b| {
            let f = if b < n.div_ceil(2) { b as f64 } else { b as f64 - n as f64 } * df;
            Complex64::from_polar(1.0, -sign * coef * f * f)
        })
        .collect();
    let scale = 1.0 / n as f64;
    Ok(stream.clone().map_pols(|s| {
        fwd.process(s);
        for (v, hv) in s.iter_mut().zip(&h) {
            *v *= hv * scale;
        }
        inv.process(s);
    }))
}

/// All-pass quadratic-phase filter `φ(f) = −π·λ²·D·L·f²/c` over the whole stream.
pub fn apply_cd(stream: &IqStream, cd: &CdParams) -> Result<IqStream> {
    dispersion_filter(stream, cd, 1.0)
}

/// The exact inverse of [`apply_cd`].
pub fn compensate_cd(stream: &IqStream, cd: &CdParams) -> Result<IqStream> {
    dispersion_filter(stream, cd, -1.0)
}

/// Multiplies sample `n` by `exp(j(2π·cfo·n/f_s + θ_n))`, with `θ` a Wiener
/// process of per-sample increment variance `2π·Δν/f_s`. Both polarisations
/// share the same laser, hence the same `θ`.
pub fn apply_cfo_phase_noise(stream: &IqStream, cfo_hz: f64, linewidth_hz: f64, seed: u64) -> Result<IqStream> {
    let fs = stream.sample_rate;
    if cfo_hz.abs() >= fs / 2.0 {
        return param_err(format!("CFO {cfo_hz} Hz is not below Nyquist ({} Hz)", fs / 2.0));
    }
    if !(linewidth_hz.is_finite() && linewidth_hz >= 0.0) {
        return param_err("linewidth must be non-negative");
    }
    let step = 2.0 * PI * cfo_hz / fs;
    let sigma = (2.0 * PI * linewidth_hz / fs).sqrt();
    let mut rng = rng_from_seed(seed);
    let mut theta = 0.0;
    let mut out = stream.clone();
    for n in 0..stream.len() {
        if n > 0 && sigma > 0.0 {
            theta += sigma * rng.sample::<f64, _>(StandardNormal);
        }
        let rot = Complex64::from_polar(1.0, step * n as f64 + theta);
        out.x[n] *= rot;
        out.y[n] *= rot;
    }
    Ok(out)
}

/// Adds independent circular complex Gaussian noise of total variance
/// `noise_var` to every sample of both polarisations.
pub fn add_awgn(stream: &IqStream, noise_var: f64, seed: u64) -> IqStream {
    let sd = (noise_var / 2.0).sqrt();
    let mut rng = rng_from_seed(seed);
    let mut out = stream.clone();
    for pol in Pol::BOTH {
        for v in out.pol_mut(pol).iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re * sd, im * sd);
        }
    }
    out
}

/// Per-polarisation SNR at the simulation rate for a dual-pol OSNR in 12.5 GHz:
/// `SNR = OSNR · 2·B_ref / f_s`.
pub fn osnr_to_snr(osnr_db: f64, sample_rate: f64) -> f64 {
    10f64.powf(osnr_db / 10.0) * 2.0 * OSNR_REF_BANDWIDTH_HZ / sample_rate
}

/// Adds ASE so that the mean per-polarisation SNR matches the target OSNR.
pub fn add_ase_for_osnr(stream: &IqStream, osnr_db: f64, seed: u64) -> Result<IqStream> {
    if osnr_db == f64::INFINITY {
        return Ok(stream.clone());
    }
    if !osnr_db.is_finite() {
        return param_err("osnr_db must be finite or +inf");
    }
    let power = (stream.power(Pol::X) + stream.power(Pol::Y)) / 2.0;
    if power <= 0.0 {
        return param_err("cannot set OSNR on a zero-power signal");
    }
    let snr = osnr_to_snr(osnr_db, stream.sample_rate);
    Ok(add_awgn(stream, power / snr, seed))
}

/// Haar-distributed 2×2 unitary.
pub fn haar_jones(seed: u64) -> Jones {
    let mut rng = rng_from_seed(seed);
    let g: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let a = Complex64::new(g[0], g[1]) / norm;
    let b = Complex64::new(g[2], g[3]) / norm;
    let alpha: f64 = rng.random::<f64>() * 2.0 * PI;
    let ph = Complex64::from_polar(1.0, alpha);
    Jones::new(ph * a, ph * b, -ph * b.conj(), ph * a.conj())
}

pub fn apply_jones(stream: &IqStream, j: &Jones) -> IqStream {
    let mut out = stream.clone();
    for n in 0..stream.len() {
        let [x, y] = j.apply([stream.x[n], stream.y[n]]);
        out.x[n] = x;
        out.y[n] = y;
    }
    out
}

/// Frequency-flat random polarisation rotation; `None` is the identity.
pub fn apply_pol_rotation(stream: &IqStream, seed: Option<u64>) -> IqStream {
    match seed {
        Some(s) => apply_jones(stream, &haar_jones(s)),
        None => stream.clone(),
    }
}

fn quantize_rail(values: impl Iterator<Item = f64>, rms: f64, bits: u32, clip_sigma: f64) -> Vec<f64> {
    let clip = clip_sigma * rms;
    let levels = (1u32 << bits) as f64;
    let step = 2.0 * clip / levels;
    values
        .map(|v| {
            if rms == 0.0 {
                return v;
            }
            // Mid-rise quantiser: levels at (i + ½)·step − clip.
            let i = ((v + clip) / step).floor().clamp(0.0, levels - 1.0);
            (i + 0.5) * step - clip
        })
        .collect()
}

/// Clips each of I and Q at `±clip_sigma·RMS` of that rail and quantises
/// uniformly to `2^bits` levels.
pub fn quantize_adc(stream: &IqStream, bits: u32, clip_sigma: f64) -> Result<IqStream> {
    if !(1..=16).contains(&bits) {
        return param_err(format!("ADC resolution must be 1..=16 bits, got {bits}"));
    }
    if !(clip_sigma.is_finite() && clip_sigma > 0.0) {
        return param_err("clip_sigma must be positive");
    }
    let rms = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / v.len().max(1) as f64).sqrt();
    let mut out = stream.clone();
    for pol in Pol::BOTH {
        let s = stream.pol(pol);
        let re: Vec<f64> = s.iter().map(|v| v.re).collect();
        let im: Vec<f64> = s.iter().map(|v| v.im).collect();
        let qre = quantize_rail(re.iter().copied(), rms(&re), bits, clip_sigma);
        let qim = quantize_rail(im.iter().copied(), rms(&im), bits, clip_sigma);
        for (v, (r, i)) in out.pol_mut(pol).iter_mut().zip(qre.into_iter().zip(qim)) {
            *v = Complex64::new(r, i);
        }
    }
    Ok(out)
}

/// Full channel: pol rotation → Tx phase noise → CD → ASE → CFO + LO phase noise → SCO → ADC.
/// Stages whose parameters are neutral are skipped.
pub fn run_channel(stream: &IqStream, params: &ChannelParams) -> Result<IqStream> {
    params.validate()?;
    let mut s = apply_pol_rotation(stream, params.pol_rotation_seed);
    if params.tx_linewidth_hz != 0.0 {
        let seed = derive_seed(params.noise_seed, streams::TX_PHASE_NOISE);
        s = apply_cfo_phase_noise(&s, 0.0, params.tx_linewidth_hz, seed)?;
    }
    s = apply_cd(&s, &params.cd())?;
    s = add_ase_for_osnr(&s, params.osnr_db, params.noise_seed)?;
    if params.cfo_hz != 0.0 || params.lo_linewidth_hz != 0.0 {
        let seed = derive_seed(params.noise_seed, streams::PHASE_NOISE);
        s = apply_cfo_phase_noise(&s, params.cfo_hz, params.lo_linewidth_hz, seed)?;
    }
    if params.gamma_ppm != 0.0 {
        s = apply_sco_oracle(&s, params.gamma())?;
    }
    if let Some(bits) = params.adc_bits {
        s = quantize_adc(&s, bits, params.clip_sigma)?;
    }
    Ok(s)
}
