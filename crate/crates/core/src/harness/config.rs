//! Plain-text `key = value` configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Every key has a default, so an empty file is a complete configuration.
//! Unknown and repeated keys are errors.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::channel::{CdParams, ChannelParams};
use crate::linalg::Jones;
use crate::ofdm::{evenly_spaced, OfdmConfig};
use crate::resample::{Interpolator, ResampleSpec};
use crate::rng::{derive_seed, streams};
use crate::rx::{ChannelEstimation, RxParams};
use crate::sco::{EstimationMode, ScoSettings};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {}", path.display())]
    MissingFile { path: PathBuf },
    #[error("cannot read config file {}: {source}", path.display())]
    Unreadable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` expects {expected}, got `{value}`")]
    TypeMismatch {
        line: usize,
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("line {line}: key `{key}` is set more than once")]
    DuplicateKey { line: usize, key: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Training-based or genie channel knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CeMode {
    Training,
    Genie,
}

/// Full parameter set of one simulated link.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_fft: usize,
    pub n_data_sc: usize,
    pub n_pilots: usize,
    pub n_cp: usize,
    pub qam_order: usize,
    pub dac_rate_hz: f64,
    pub dc_null: bool,
    pub ts_first: usize,
    pub ts_second: usize,
    /// Payload per polarisation is `2^debruijn_order` bits rounded up to whole symbols.
    pub debruijn_order: u32,
    /// Random 16-QAM symbols padded before and after the frame.
    pub guard_symbols: usize,
    /// XOR the payload with a seeded pseudo-random mask before mapping.
    pub scramble: bool,

    pub gamma_ppm: f64,
    pub cfo_hz: f64,
    /// Per laser; transmitter and local oscillator are assumed equal.
    pub linewidth_hz: f64,
    pub fiber_km: f64,
    pub dispersion_ps_nm_km: f64,
    pub wavelength_nm: f64,
    pub osnr_db: f64,
    /// 0 bypasses the quantiser.
    pub adc_bits: u32,
    pub clip_sigma: f64,
    pub pol_rotation: bool,

    pub compensation: bool,
    pub sco_mode: EstimationMode,
    pub resampler: ResamplerKind,
    pub resampler_taps: usize,
    pub farrow_degree: usize,
    pub residual_threshold: f64,
    pub cd_compensation: bool,
    pub channel_estimation: CeMode,
    pub isfa_window: usize,
    pub cpe: bool,
    pub cfo_tracking: bool,
    /// Pilot-aided tracking of the residual clock drift; only active with `compensation`.
    pub timing_tracking: bool,
    pub fft_backoff: usize,

    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResamplerKind {
    Farrow,
    Cubic,
    Sinc,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_fft: 512,
            n_data_sc: 412,
            n_pilots: 8,
            n_cp: 46,
            qam_order: 16,
            dac_rate_hz: 40e9,
            dc_null: true,
            ts_first: 4,
            ts_second: 5,
            debruijn_order: 15,
            guard_symbols: 2,
            scramble: true,

            gamma_ppm: 0.0,
            cfo_hz: 1e6,
            linewidth_hz: 100e3,
            fiber_km: 800.0,
            dispersion_ps_nm_km: 16.0,
            wavelength_nm: 1550.0,
            osnr_db: f64::INFINITY,
            adc_bits: 8,
            clip_sigma: 4.0,
            pol_rotation: true,

            compensation: true,
            sco_mode: EstimationMode::Differential,
            resampler: ResamplerKind::Farrow,
            resampler_taps: 16,
            farrow_degree: 5,
            residual_threshold: 0.5,
            cd_compensation: true,
            channel_estimation: CeMode::Training,
            isfa_window: 5,
            cpe: true,
            cfo_tracking: true,
            timing_tracking: true,
            fft_backoff: 11,

            seed: 0,
        }
    }
}

enum SetError {
    Unknown,
    Type(&'static str),
}

fn parse_num<T: std::str::FromStr>(v: &str, expected: &'static str) -> Result<T, SetError> {
    v.parse().map_err(|_| SetError::Type(expected))
}

fn parse_f64(v: &str) -> Result<f64, SetError> {
    match v {
        "inf" | "+inf" => Ok(f64::INFINITY),
        _ => v
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or(SetError::Type("a number")),
    }
}

fn parse_bool(v: &str) -> Result<bool, SetError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(SetError::Type("`true` or `false`")),
    }
}

impl SimConfig {
    /// Every key as it would appear in a file, in declaration order.
    pub const KEYS: &'static [&'static str] = &[
        "n_fft",
        "n_data_sc",
        "n_pilots",
        "n_cp",
        "qam_order",
        "dac_rate_hz",
        "dc_null",
        "ts_first",
        "ts_second",
        "debruijn_order",
        "guard_symbols",
        "scramble",
        "gamma_ppm",
        "cfo_hz",
        "linewidth_hz",
        "fiber_km",
        "dispersion_ps_nm_km",
        "wavelength_nm",
        "osnr_db",
        "adc_bits",
        "clip_sigma",
        "pol_rotation",
        "compensation",
        "sco_mode",
        "resampler",
        "resampler_taps",
        "farrow_degree",
        "residual_threshold",
        "cd_compensation",
        "channel_estimation",
        "isfa_window",
        "cpe",
        "cfo_tracking",
        "timing_tracking",
        "fft_backoff",
        "seed",
    ];

    fn set(&mut self, key: &str, v: &str) -> Result<(), SetError> {
        const UINT: &str = "a non-negative integer";
        match key {
            "n_fft" => self.n_fft = parse_num(v, UINT)?,
            "n_data_sc" => self.n_data_sc = parse_num(v, UINT)?,
            "n_pilots" => self.n_pilots = parse_num(v, UINT)?,
            "n_cp" => self.n_cp = parse_num(v, UINT)?,
            "qam_order" => self.qam_order = parse_num(v, UINT)?,
            "dac_rate_hz" => self.dac_rate_hz = parse_f64(v)?,
            "dc_null" => self.dc_null = parse_bool(v)?,
            "ts_first" => self.ts_first = parse_num(v, UINT)?,
            "ts_second" => self.ts_second = parse_num(v, UINT)?,
            "debruijn_order" => self.debruijn_order = parse_num(v, UINT)?,
            "guard_symbols" => self.guard_symbols = parse_num(v, UINT)?,
            "scramble" => self.scramble = parse_bool(v)?,
            "gamma_ppm" => self.gamma_ppm = parse_f64(v)?,
            "cfo_hz" => self.cfo_hz = parse_f64(v)?,
            "linewidth_hz" => self.linewidth_hz = parse_f64(v)?,
            "fiber_km" => self.fiber_km = parse_f64(v)?,
            "dispersion_ps_nm_km" => self.dispersion_ps_nm_km = parse_f64(v)?,
            "wavelength_nm" => self.wavelength_nm = parse_f64(v)?,
            "osnr_db" => self.osnr_db = parse_f64(v)?,
            "adc_bits" => self.adc_bits = parse_num(v, UINT)?,
            "clip_sigma" => self.clip_sigma = parse_f64(v)?,
            "pol_rotation" => self.pol_rotation = parse_bool(v)?,
            "compensation" => self.compensation = parse_bool(v)?,
            "sco_mode" => {
                self.sco_mode = match v {
                    "differential" => EstimationMode::Differential,
                    "absolute" => EstimationMode::Absolute,
                    _ => return Err(SetError::Type("`differential` or `absolute`")),
                }
            }
            "resampler" => {
                self.resampler = match v {
                    "farrow" => ResamplerKind::Farrow,
                    "cubic" => ResamplerKind::Cubic,
                    "sinc" => ResamplerKind::Sinc,
                    _ => return Err(SetError::Type("`farrow`, `cubic` or `sinc`")),
                }
            }
            "resampler_taps" => self.resampler_taps = parse_num(v, UINT)?,
            "farrow_degree" => self.farrow_degree = parse_num(v, UINT)?,
            "residual_threshold" => self.residual_threshold = parse_f64(v)?,
            "cd_compensation" => self.cd_compensation = parse_bool(v)?,
            "channel_estimation" => {
                self.channel_estimation = match v {
                    "training" => CeMode::Training,
                    "genie" => CeMode::Genie,
                    _ => return Err(SetError::Type("`training` or `genie`")),
                }
            }
            "isfa_window" => self.isfa_window = parse_num(v, UINT)?,
            "cpe" => self.cpe = parse_bool(v)?,
            "cfo_tracking" => self.cfo_tracking = parse_bool(v)?,
            "timing_tracking" => self.timing_tracking = parse_bool(v)?,
            "fft_backoff" => self.fft_backoff = parse_num(v, UINT)?,
            "seed" => self.seed = parse_num(v, UINT)?,
            _ => return Err(SetError::Unknown),
        }
        Ok(())
    }

    pub fn n_sc(&self) -> usize {
        self.n_data_sc + self.n_pilots
    }

    pub fn bits_per_run(&self) -> usize {
        1usize << self.debruijn_order
    }

    pub fn ofdm_config(&self) -> OfdmConfig {
        let n_sc = self.n_sc();
        let mut cfg = OfdmConfig {
            n_fft: self.n_fft,
            n_sc,
            n_cp: self.n_cp,
            n_frame_syms: 0,
            tx_sample_period: 1.0 / self.dac_rate_hz,
            qam_order: self.qam_order,
            dc_null: self.dc_null,
            pilot_positions: evenly_spaced(n_sc, self.n_pilots),
            ts_indices: (self.ts_first, self.ts_second),
        };
        cfg.n_frame_syms = cfg.frame_syms_for_bits(self.bits_per_run());
        cfg
    }

    /// Channel for one run; noise and rotation seeds derive from `seed`.
    pub fn channel_params(&self, seed: u64) -> ChannelParams {
        ChannelParams {
            gamma_ppm: self.gamma_ppm,
            cfo_hz: self.cfo_hz,
            tx_linewidth_hz: self.linewidth_hz,
            lo_linewidth_hz: self.linewidth_hz,
            fiber_km: self.fiber_km,
            dispersion_ps_nm_km: self.dispersion_ps_nm_km,
            wavelength_nm: self.wavelength_nm,
            osnr_db: self.osnr_db,
            adc_bits: (self.adc_bits > 0).then_some(self.adc_bits),
            clip_sigma: self.clip_sigma,
            pol_rotation_seed: self.pol_rotation.then(|| derive_seed(seed, streams::POL_ROTATION)),
            noise_seed: derive_seed(seed, streams::NOISE),
        }
    }

    pub fn interpolator(&self) -> Interpolator {
        match self.resampler {
            ResamplerKind::Farrow => Interpolator::Farrow {
                taps: self.resampler_taps,
                degree: self.farrow_degree,
            },
            ResamplerKind::Cubic => Interpolator::FarrowCubic,
            ResamplerKind::Sinc => Interpolator::WindowedSinc { taps: self.resampler_taps },
        }
    }

    /// `genie` is the true polarisation rotation, used only in genie channel-estimation mode.
    pub fn rx_params(&self, genie: Jones) -> RxParams {
        RxParams {
            cd: self.cd_compensation.then_some(CdParams {
                fiber_km: self.fiber_km,
                dispersion_ps_nm_km: self.dispersion_ps_nm_km,
                wavelength_nm: self.wavelength_nm,
            }),
            sco: self.compensation.then_some(ScoSettings {
                mode: self.sco_mode,
                residual_threshold: self.residual_threshold,
                resampler: ResampleSpec {
                    structure: self.interpolator(),
                },
            }),
            channel_estimation: match self.channel_estimation {
                CeMode::Training => ChannelEstimation::Training,
                CeMode::Genie => ChannelEstimation::Genie(genie),
            },
            isfa_window: self.isfa_window,
            cpe: self.cpe,
            cfo_tracking: self.cfo_tracking,
            timing_tracking: self.compensation && self.timing_tracking,
            fft_backoff: self.fft_backoff,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !(1..=crate::debruijn::MAX_ORDER).contains(&self.debruijn_order) {
            return invalid(format!("debruijn_order must be in 1..={}", crate::debruijn::MAX_ORDER));
        }
        if self.dac_rate_hz.is_nan() || self.dac_rate_hz <= 0.0 {
            return invalid("dac_rate_hz must be positive".into());
        }
        if self.n_pilots < 2 && self.cpe {
            return invalid("phase correction needs at least 2 pilots".into());
        }
        if self.isfa_window == 0 || self.isfa_window.is_multiple_of(2) {
            return invalid(format!("isfa_window must be odd, got {}", self.isfa_window));
        }
        if self.fft_backoff > self.n_cp {
            return invalid(format!("fft_backoff {} exceeds n_cp {}", self.fft_backoff, self.n_cp));
        }
        if self.residual_threshold.is_nan() || self.residual_threshold <= 0.0 {
            return invalid("residual_threshold must be positive".into());
        }
        if self.linewidth_hz.is_nan() || self.linewidth_hz < 0.0 {
            return invalid("linewidth_hz must be non-negative".into());
        }
        if self.resampler != ResamplerKind::Cubic && (self.resampler_taps < 2 || !self.resampler_taps.is_multiple_of(2)) {
            return invalid(format!("resampler_taps must be even and at least 2, got {}", self.resampler_taps));
        }
        if self.resampler == ResamplerKind::Farrow && self.farrow_degree == 0 {
            return invalid("farrow_degree must be at least 1".into());
        }
        self.ofdm_config()
            .validate()
            .and_then(|_| self.channel_params(0).validate())
            .or_else(|e| invalid(e.to_string()))
    }
}

impl fmt::Display for SimConfig {
    /// Writes the configuration in the file format; parsing the output gives back `self`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.sco_mode {
            EstimationMode::Differential => "differential",
            EstimationMode::Absolute => "absolute",
        };
        let resampler = match self.resampler {
            ResamplerKind::Farrow => "farrow",
            ResamplerKind::Cubic => "cubic",
            ResamplerKind::Sinc => "sinc",
        };
        let ce = match self.channel_estimation {
            CeMode::Training => "training",
            CeMode::Genie => "genie",
        };
        let values: [String; 36] = [
            self.n_fft.to_string(),
            self.n_data_sc.to_string(),
            self.n_pilots.to_string(),
            self.n_cp.to_string(),
            self.qam_order.to_string(),
            self.dac_rate_hz.to_string(),
            self.dc_null.to_string(),
            self.ts_first.to_string(),
            self.ts_second.to_string(),
            self.debruijn_order.to_string(),
            self.guard_symbols.to_string(),
            self.scramble.to_string(),
            self.gamma_ppm.to_string(),
            self.cfo_hz.to_string(),
            self.linewidth_hz.to_string(),
            self.fiber_km.to_string(),
            self.dispersion_ps_nm_km.to_string(),
            self.wavelength_nm.to_string(),
            self.osnr_db.to_string(),
            self.adc_bits.to_string(),
            self.clip_sigma.to_string(),
            self.pol_rotation.to_string(),
            self.compensation.to_string(),
            mode.to_string(),
            resampler.to_string(),
            self.resampler_taps.to_string(),
            self.farrow_degree.to_string(),
            self.residual_threshold.to_string(),
            self.cd_compensation.to_string(),
            ce.to_string(),
            self.isfa_window.to_string(),
            self.cpe.to_string(),
            self.cfo_tracking.to_string(),
            self.timing_tracking.to_string(),
            self.fft_backoff.to_string(),
            self.seed.to_string(),
        ];
        for (k, v) in Self::KEYS.iter().zip(values) {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Parses configuration text on top of the defaults.
pub fn parse_config_str(text: &str) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: body.to_string(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                text: body.to_string(),
            });
        }
        match cfg.set(key, value) {
            Ok(()) => {}
            Err(SetError::Unknown) => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
            Err(SetError::Type(expected)) => {
                return Err(ConfigError::TypeMismatch {
                    line,
                    key: key.to_string(),
                    value: value.to_string(),
                    expected,
                })
            }
        }
        if seen.iter().any(|k| k == key) {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        seen.push(key.to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<SimConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => ConfigError::MissingFile { path: path.to_path_buf() },
        _ => ConfigError::Unreadable {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    parse_config_str(&text)
}
