//! Data-aided sampling clock offset estimation on the channel training pair.
//!
//! A clock mismatch `γ` shifts the FFT window of symbol `l` by roughly
//! `l·N_s·γ` samples, which shows up after the FFT as a phase ramp across
//! subcarriers with slope `s_l = 2π·l·N_s·γ / N`. The estimator measures the
//! per-subcarrier phase of a received training symbol against its known
//! content, unwraps it, fits a line by least squares and inverts the slope
//! relation for `γ`. The estimate drives a single resampling pass; it is not
//! re-run on the corrected stream.
//!
//! In differential mode the slopes of the two training symbols are
//! subtracted. Anything that adds the same `k`-linear phase to both symbols
//! (a static timing offset, the unknown position of the clock's time origin,
//! residual dispersion) cancels.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{param_err, Result};
use crate::ofdm::{OfdmConfig, OfdmModem, TrainingPair, TsSlot};
use crate::resample::{self, ResampleSpec, MAX_GAMMA};
use crate::stream::{IqStream, Pol};

/// Minimum number of subcarriers for a slope fit.
pub const MIN_FIT_POINTS: usize = 8;

/// Per-subcarrier phase of one received symbol relative to its known content.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfile {
    /// Signed subcarrier index `k` of each entry.
    pub subcarriers: Vec<f64>,
    /// Radians.
    pub phases: Vec<f64>,
    pub symbol_index: usize,
}

/// Least-squares line `φ ≈ slope·k + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    /// Radians per unit of subcarrier index.
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
}

impl SlopeFit {
    pub fn at(&self, k: f64) -> f64 {
        self.slope * k + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimationMode {
    /// Slope difference between the two training symbols.
    #[default]
    Differential,
    /// Slope of the first training symbol alone, taken relative to the frame's symbol 0.
    Absolute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoEstimate {
    pub gamma_hat: f64,
    pub mode: EstimationMode,
    /// Fits used: both training symbols in differential mode, the first only in absolute mode.
    pub fits: Vec<SlopeFit>,
    pub ts_symbol_indices: (usize, usize),
    /// `|γ̂|` exceeds the supported range.
    pub out_of_range: bool,
}

/// Principal value in `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let r = (x + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        PI
    } else {
        r
    }
}

/// `phases[k] = arg(received[k]·conj(known[k]))`.
pub fn extract_phase(received: &[Complex64], known: &[Complex64], subcarriers: &[i64], l: usize) -> Result<PhaseProfile> {
    if received.len() != known.len() || received.len() != subcarriers.len() {
        return param_err(format!(
            "length mismatch: received {}, known {}, subcarriers {}",
            received.len(),
            known.len(),
            subcarriers.len()
        ));
    }
    if let Some(i) = known.iter().position(|v| v.norm_sqr() == 0.0) {
        return param_err(format!("known symbol at position {i} is zero"));
    }
    Ok(PhaseProfile {
        subcarriers: subcarriers.iter().map(|&k| k as f64).collect(),
        phases: received.iter().zip(known).map(|(r, x)| (r * x.conj()).arg()).collect(),
        symbol_index: l,
    })
}

/// Removes 2π jumps so that successive differences lie in `(−π, π]`.
pub fn unwrap(profile: &PhaseProfile) -> PhaseProfile {
    let mut out = profile.clone();
    let mut correction = 0.0;
    for i in 1..out.phases.len() {
        let d = profile.phases[i] - profile.phases[i - 1];
        correction += wrap_phase(d) - d;
        out.phases[i] = profile.phases[i] + correction;
    }
    out
}

/// Ordinary least squares of phase on subcarrier index, with intercept.
pub fn ls_fit(profile: &PhaseProfile) -> Result<SlopeFit> {
    let k = &profile.subcarriers;
    let phi = &profile.phases;
    if k.len() != phi.len() {
        return param_err("profile index and phase lengths differ");
    }
    let n = k.len();
    if n < MIN_FIT_POINTS {
        return param_err(format!("slope fit needs at least {MIN_FIT_POINTS} points, got {n}"));
    }
    let kbar = k.iter().sum::<f64>() / n as f64;
    let pbar = phi.iter().sum::<f64>() / n as f64;
    let (sxx, sxy) = k.iter().zip(phi).fold((0.0, 0.0), |(sxx, sxy), (&ki, &pi)| {
        let dk = ki - kbar;
        (sxx + dk * dk, sxy + dk * (pi - pbar))
    });
    if sxx == 0.0 {
        return param_err("all subcarrier indices are equal; slope is undefined");
    }
    let slope = sxy / sxx;
    let intercept = pbar - slope * kbar;
    let ss: f64 = k
        .iter()
        .zip(phi)
        .map(|(&ki, &pi)| (pi - slope * ki - intercept).powi(2))
        .sum();
    Ok(SlopeFit {
        slope,
        intercept,
        residual_rms: (ss / n as f64).sqrt(),
    })
}

/// Inverts `s_l = 2π·l·N_s·γ / N`.
///
/// Differential: `γ̂ = (s2 − s1)·N / (2π·(l2 − l1)·N_s)`.
/// Absolute: `γ̂ = s1·N / (2π·l1·N_s)`; `fit2` and `l2` are ignored.
pub fn estimate_gamma(
    fit1: &SlopeFit,
    fit2: &SlopeFit,
    l1: usize,
    l2: usize,
    config: &OfdmConfig,
    mode: EstimationMode,
) -> Result<ScoEstimate> {
    let n = config.n_fft as f64;
    let ns = config.n_sym() as f64;
    let (gamma_hat, fits) = match mode {
        EstimationMode::Differential => {
            if l2 <= l1 {
                return param_err(format!("differential mode needs l2 > l1, got l1={l1} l2={l2}"));
            }
            let g = (fit2.slope - fit1.slope) * n / (2.0 * PI * (l2 - l1) as f64 * ns);
            (g, vec![*fit1, *fit2])
        }
        EstimationMode::Absolute => {
            if l1 == 0 {
                return param_err("absolute mode needs the training symbol index to be at least 1");
            }
            (fit1.slope * n / (2.0 * PI * l1 as f64 * ns), vec![*fit1])
        }
    };
    Ok(ScoEstimate {
        gamma_hat,
        mode,
        fits,
        ts_symbol_indices: (l1, l2),
        out_of_range: gamma_hat.is_nan() || gamma_hat.abs() > MAX_GAMMA,
    })
}

/// Configuration of the feedback loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoSettings {
    pub mode: EstimationMode,
    /// A polarisation whose fit residual RMS exceeds this (radians) is not trusted.
    pub residual_threshold: f64,
    pub resampler: ResampleSpec,
}

impl Default for ScoSettings {
    fn default() -> Self {
        Self {
            mode: EstimationMode::Differential,
            residual_threshold: 0.5,
            resampler: ResampleSpec::default(),
        }
    }
}

/// Diagnostics of one pass of the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoReport {
    /// Mean of the trusted per-polarisation estimates; 0 when none is trusted.
    pub gamma_hat: f64,
    pub per_pol: Vec<(Pol, ScoEstimate)>,
    /// At least one polarisation produced a trusted estimate.
    pub reliable: bool,
    /// The stream was resampled.
    pub applied: bool,
}

#[derive(Debug, Clone)]
pub struct ScoLoopOutput {
    pub stream: IqStream,
    /// Frame start in the output stream.
    pub frame_start: isize,
    pub report: ScoReport,
}

/// Per-polarisation estimates from the training pair of a frame starting at `frame_start`.
pub fn estimate_from_training(
    raw: &IqStream,
    frame_start: isize,
    modem: &OfdmModem,
    training: &TrainingPair,
    mode: EstimationMode,
    fft_backoff: usize,
) -> Result<Vec<(Pol, ScoEstimate)>> {
    let cfg = modem.config();
    let ns = cfg.n_sym();
    let (l1, l2) = cfg.ts_indices;
    let demod = |l: usize| -> Result<IqStream> { Ok(raw.window(frame_start + (l * ns) as isize, ns)) };
    let w1 = demod(l1)?;
    let w2 = demod(l2)?;
    let k = modem.subcarriers();
    let mut out = Vec::with_capacity(2);
    for pol in Pol::BOTH {
        let r1 = modem.demodulate_with_backoff(w1.pol(pol), fft_backoff)?;
        let r2 = modem.demodulate_with_backoff(w2.pol(pol), fft_backoff)?;
        let f1 = ls_fit(&unwrap(&extract_phase(&r1, &training.content(TsSlot::First, pol), k, l1)?))?;
        let f2 = ls_fit(&unwrap(&extract_phase(&r2, &training.content(TsSlot::Second, pol), k, l2)?))?;
        out.push((pol, estimate_gamma(&f1, &f2, l1, l2, cfg, mode)?));
    }
    Ok(out)
}

/// One-shot estimation and compensation.
///
/// Estimates `γ` on each polarisation, averages the trusted estimates and
/// resamples `raw` once with the result. If neither polarisation is trusted
/// the stream is returned untouched and the report says so.
pub fn run_sco_loop(
    raw: &IqStream,
    frame_start: isize,
    modem: &OfdmModem,
    training: &TrainingPair,
    settings: &ScoSettings,
    fft_backoff: usize,
) -> Result<ScoLoopOutput> {
    let per_pol = estimate_from_training(raw, frame_start, modem, training, settings.mode, fft_backoff)?;
    let trusted: Vec<f64> = per_pol
        .iter()
        .filter(|(_, e)| !e.out_of_range && e.fits.iter().all(|f| f.residual_rms <= settings.residual_threshold))
        .map(|(_, e)| e.gamma_hat)
        .collect();
    if trusted.is_empty() {
        return Ok(ScoLoopOutput {
            stream: raw.clone(),
            frame_start,
            report: ScoReport {
                gamma_hat: 0.0,
                per_pol,
                reliable: false,
                applied: false,
            },
        });
    }
    let gamma_hat = trusted.iter().sum::<f64>() / trusted.len() as f64;
    let stream = resample::resample(raw, gamma_hat, &settings.resampler)?;
    let frame_start = (frame_start as f64 * (1.0 + gamma_hat)).round() as isize;
    Ok(ScoLoopOutput {
        stream,
        frame_start,
        report: ScoReport {
            gamma_hat,
            per_pol,
            reliable: true,
            applied: true,
        },
    })
}
