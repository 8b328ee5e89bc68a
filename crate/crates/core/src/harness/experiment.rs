//! End-to-end runs, Monte-Carlo sweeps and the per-symbol phase profile.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{compensate_cd, haar_jones, run_channel, OSNR_REF_BANDWIDTH_HZ};
use crate::debruijn::{cycle_to_len, debruijn_bits};
use crate::error::{param_err, Result};
use crate::harness::config::SimConfig;
use crate::linalg::Jones;
use crate::ofdm::{assemble_frame, data_symbols, known_symbols, KnownSymbols, OfdmConfig, OfdmModem, QamGrid};
use crate::qam;
use crate::rng::{derive_seed, rng_from_seed, streams};
use crate::rx::{pol_demux_equalize, run_rx_pipeline, ChannelEstimate, RxContext, FLAG_SCO_UNRELIABLE};
use crate::sco::{extract_phase, ls_fit, unwrap, wrap_phase, PhaseProfile, SlopeFit};
use crate::stream::{IqStream, Pol};

pub const CSV_COLUMNS: [&str; 11] = [
    "variable_name",
    "variable_value",
    "seed",
    "ber",
    "bit_errors",
    "bits_counted",
    "evm_db",
    "gamma_true",
    "gamma_hat",
    "rel_err",
    "flags",
];

const REL_ERR_NOTE: &str = "rel_err = |gamma_hat - gamma_true| / |gamma_true|; empty when gamma_true = 0 or nothing was estimated";

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub seed: u64,
    pub ber: f64,
    pub bit_errors: u64,
    pub bits_counted: u64,
    pub evm_db: f64,
    pub gamma_true: f64,
    /// `None` when compensation is off or the estimate was not trusted.
    pub gamma_hat: Option<f64>,
    pub rel_err: Option<f64>,
    pub flags: Vec<String>,
    pub config: SimConfig,
}

impl RunReport {
    pub fn unreliable(&self) -> bool {
        self.flags.iter().any(|f| f == FLAG_SCO_UNRELIABLE)
    }
}

/// A transmitted frame with guard padding.
#[derive(Debug, Clone)]
pub struct Transmission {
    /// X-polarisation payload then y-polarisation payload.
    pub bits: Vec<bool>,
    /// XOR mask applied to `bits` before mapping; all false when scrambling is off.
    pub scrambler: Vec<bool>,
    pub grid: QamGrid,
    pub stream: IqStream,
    /// Sample index of the frame's first symbol in `stream`.
    pub frame_offset: usize,
    pub known: KnownSymbols,
    pub ofdm: OfdmConfig,
}

/// Builds the de Bruijn payload, whitens it, and assembles the frame between
/// random-symbol guards.
pub fn transmit(cfg: &SimConfig, seed: u64) -> Result<Transmission> {
    cfg.validate()?;
    let ofdm = cfg.ofdm_config();
    let modem = OfdmModem::new(&ofdm)?;
    let per_pol = ofdm.bits_per_pol();
    let mut bits = cycle_to_len(&debruijn_bits(cfg.debruijn_order, derive_seed(seed, streams::BITS_X))?, per_pol);
    bits.extend(cycle_to_len(
        &debruijn_bits(cfg.debruijn_order, derive_seed(seed, streams::BITS_Y))?,
        per_pol,
    ));
    let scrambler: Vec<bool> = if cfg.scramble {
        let mut rng = rng_from_seed(derive_seed(seed, streams::SCRAMBLER));
        (0..bits.len()).map(|_| rand::Rng::random(&mut rng)).collect()
    } else {
        vec![false; bits.len()]
    };
    let line: Vec<bool> = bits.iter().zip(&scrambler).map(|(b, m)| b ^ m).collect();
    let (grid, frame) = assemble_frame(&line, &ofdm, seed)?;

    let mut rng = rng_from_seed(derive_seed(seed, streams::GUARD));
    let mut guard = || -> Result<IqStream> {
        let mut g = QamGrid::zeros(cfg.guard_symbols, ofdm.n_sc);
        for v in g.x.iter_mut().chain(g.y.iter_mut()) {
            *v = qam::qam16_map(rand::Rng::random(&mut rng));
        }
        modem.modulate_grid(&g)
    };
    let pre = guard()?;
    let post = guard()?;
    let frame_offset = pre.len();
    let cat = |p: Pol| -> Vec<Complex64> { [pre.pol(p), frame.pol(p), post.pol(p)].concat() };
    let stream = IqStream::new(cat(Pol::X), cat(Pol::Y), ofdm.sample_rate())?;
    Ok(Transmission {
        bits,
        scrambler,
        grid,
        stream,
        frame_offset,
        known: known_symbols(&ofdm, seed),
        ofdm,
    })
}

/// Where the frame lands in a stream sampled with clock offset `gamma`.
pub fn genie_frame_start(frame_offset: usize, gamma: f64) -> isize {
    (frame_offset as f64 / (1.0 + gamma)).round() as isize
}

fn evm_db(rx: &QamGrid, tx: &QamGrid, ofdm: &OfdmConfig) -> f64 {
    let (mut err, mut sig) = (0.0, 0.0);
    for pol in Pol::BOTH {
        for (r, t) in data_symbols(rx, ofdm, pol).iter().zip(data_symbols(tx, ofdm, pol)) {
            err += (r - t).norm_sqr();
            sig += t.norm_sqr();
        }
    }
    10.0 * (err / sig).log10()
}

/// The transmission and what the receiver's ADC delivers for it.
pub fn channel_output(cfg: &SimConfig, seed: u64) -> Result<(Transmission, IqStream)> {
    let tx = transmit(cfg, seed)?;
    let raw = run_channel(&tx.stream, &cfg.channel_params(seed))?;
    Ok((tx, raw))
}

/// One frame through transmitter, channel and receiver.
pub fn run_single(cfg: &SimConfig, seed: u64) -> Result<RunReport> {
    let (tx, raw) = channel_output(cfg, seed)?;
    let params = cfg.channel_params(seed);
    let genie = params.pol_rotation_seed.map(haar_jones).unwrap_or_else(Jones::identity);
    let ctx = RxContext {
        frame_start: genie_frame_start(tx.frame_offset, params.gamma()),
        genie_cfo_hz: 0.0,
        residual_cfo_hz: params.cfo_hz,
        known: tx.known.clone(),
        config: tx.ofdm.clone(),
    };
    let rx = run_rx_pipeline(&raw, &ctx, &cfg.rx_params(genie))?;

    let bit_errors = rx
        .bits
        .iter()
        .zip(&tx.scrambler)
        .zip(&tx.bits)
        .filter(|((r, m), b)| (*r ^ *m) != **b)
        .count() as u64;
    let bits_counted = tx.bits.len() as u64;
    let gamma_true = params.gamma();
    let gamma_hat = rx.sco.as_ref().filter(|r| r.reliable).map(|r| r.gamma_hat);
    let rel_err = match gamma_hat {
        Some(g) if gamma_true != 0.0 => Some((g - gamma_true).abs() / gamma_true.abs()),
        _ => None,
    };
    Ok(RunReport {
        seed,
        ber: bit_errors as f64 / bits_counted as f64,
        bit_errors,
        bits_counted,
        evm_db: evm_db(&rx.equalized, &tx.grid, &tx.ofdm),
        gamma_true,
        gamma_hat,
        rel_err,
        flags: rx.flags,
        config: cfg.clone(),
    })
}

/// OSNR giving per-subcarrier `Es/N0 = snr_db` for a configuration's occupancy.
pub fn osnr_for_subcarrier_snr(cfg: &SimConfig, snr_db: f64) -> f64 {
    // Sample SNR is Es/N0 scaled by the occupied fraction of the FFT.
    let sample_snr_db = snr_db + 10.0 * (cfg.n_sc() as f64 / cfg.n_fft as f64).log10();
    sample_snr_db - 10.0 * (2.0 * OSNR_REF_BANDWIDTH_HZ / cfg.dac_rate_hz).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    OsnrDb,
    ScoPpm,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::OsnrDb => "osnr_db",
            SweepVariable::ScoPpm => "sco_ppm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    /// Everything not swept.
    pub base: SimConfig,
    pub seeds: usize,
    /// Seeds are `first_seed .. first_seed + seeds`, the same at every value.
    pub first_seed: u64,
}

impl SweepSpec {
    pub fn config_at(&self, value: f64) -> SimConfig {
        let mut cfg = self.base.clone();
        match self.variable {
            SweepVariable::OsnrDb => cfg.osnr_db = value,
            SweepVariable::ScoPpm => cfg.gamma_ppm = value,
        }
        cfg
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return param_err("sweep has no values");
        }
        if self.seeds == 0 {
            return param_err("sweep needs at least one seed");
        }
        for &v in &self.values {
            self.config_at(v).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variable: SweepVariable,
    /// In (value, seed) order.
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn at(&self, value: f64) -> impl Iterator<Item = &RunReport> {
        self.points.iter().filter(move |p| p.value == value).map(|p| &p.report)
    }

    /// Pooled BER at one value: total errors over total bits.
    pub fn pooled_ber(&self, value: f64) -> f64 {
        let (e, n) = self.at(value).fold((0u64, 0u64), |(e, n), r| (e + r.bit_errors, n + r.bits_counted));
        e as f64 / n as f64
    }
}

pub fn sweep(spec: &SweepSpec, parallel: bool) -> Result<SweepResult> {
    spec.validate()?;
    let jobs: Vec<(f64, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| (0..spec.seeds as u64).map(move |i| (v, spec.first_seed + i)))
        .collect();
    let run = |&(v, seed): &(f64, u64)| -> Result<SweepPoint> {
        Ok(SweepPoint {
            value: v,
            report: run_single(&spec.config_at(v), seed)?,
        })
    };
    let points = if parallel {
        jobs.par_iter().map(run).collect::<Result<Vec<_>>>()?
    } else {
        jobs.iter().map(run).collect::<Result<Vec<_>>>()?
    };
    Ok(SweepResult {
        variable: spec.variable,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CsvOptions {
    /// Write a generation-time comment line.
    pub timestamp: bool,
}

fn write_preamble<W: Write>(w: &mut W, title: &str, config: Option<&SimConfig>, opts: CsvOptions) -> Result<()> {
    writeln!(w, "# {title}")?;
    if opts.timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        writeln!(w, "# generated_unix_s = {secs}")?;
    }
    if let Some(cfg) = config {
        for line in cfg.to_string().lines() {
            writeln!(w, "# {line}")?;
        }
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn report_record(name: &str, value: &str, r: &RunReport) -> [String; 11] {
    [
        name.to_string(),
        value.to_string(),
        r.seed.to_string(),
        r.ber.to_string(),
        r.bit_errors.to_string(),
        r.bits_counted.to_string(),
        r.evm_db.to_string(),
        r.gamma_true.to_string(),
        opt(r.gamma_hat),
        opt(r.rel_err),
        r.flags.join(";"),
    ]
}

/// Mean and sample standard deviation; `None` when `xs` is empty.
fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((m, var.sqrt()))
}

fn aggregate_records(name: &str, value: &str, reports: &[&RunReport]) -> [[String; 11]; 2] {
    let col = |f: &dyn Fn(&RunReport) -> Option<f64>| mean_std(&reports.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
    let stats = [
        col(&|r| Some(r.ber)),
        col(&|r| Some(r.bit_errors as f64)),
        col(&|r| Some(r.bits_counted as f64)),
        col(&|r| Some(r.evm_db)),
        col(&|r| Some(r.gamma_true)),
        col(&|r| r.gamma_hat),
        col(&|r| r.rel_err),
    ];
    let flagged = reports.iter().filter(|r| !r.flags.is_empty()).count();
    let flags = if flagged > 0 { format!("flagged_runs={flagged}") } else { String::new() };
    let row = |label: &str, pick: fn((f64, f64)) -> f64| -> [String; 11] {
        let v: Vec<String> = stats.iter().map(|s| opt(s.map(pick))).collect();
        [
            name.to_string(),
            value.to_string(),
            label.to_string(),
            v[0].clone(),
            v[1].clone(),
            v[2].clone(),
            v[3].clone(),
            v[4].clone(),
            v[5].clone(),
            v[6].clone(),
            flags.clone(),
        ]
    };
    [row("mean", |s| s.0), row("std", |s| s.1)]
}

/// Per-seed rows followed by `mean` and `std` rows for each swept value.
pub fn write_sweep_csv<W: Write>(mut w: W, result: &SweepResult, base: &SimConfig, opts: CsvOptions) -> Result<()> {
    write_preamble(&mut w, &format!("sweep over {}", result.variable.name()), Some(base), opts)?;
    writeln!(w, "# {REL_ERR_NOTE}")?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    let name = result.variable.name();
    let mut values: Vec<f64> = Vec::new();
    for p in &result.points {
        if !values.contains(&p.value) {
            values.push(p.value);
        }
    }
    for v in values {
        let reports: Vec<&RunReport> = result.at(v).collect();
        let vs = v.to_string();
        for r in &reports {
            out.write_record(report_record(name, &vs, r))?;
        }
        for rec in aggregate_records(name, &vs, &reports) {
            out.write_record(rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Rows for independent runs of one configuration.
pub fn write_runs_csv<W: Write>(mut w: W, reports: &[RunReport], opts: CsvOptions) -> Result<()> {
    write_preamble(&mut w, "single runs", reports.first().map(|r| &r.config), opts)?;
    writeln!(w, "# {REL_ERR_NOTE}")?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    for r in reports {
        out.write_record(report_record("run", "", r))?;
    }
    if reports.len() > 1 {
        let refs: Vec<&RunReport> = reports.iter().collect();
        for rec in aggregate_records("run", "", &refs) {
            out.write_record(rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub l: usize,
    pub k: i64,
    pub phase: f64,
    pub fitted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfileResult {
    pub rows: Vec<ProfileRow>,
    /// Line fitted for each symbol `1..=symbols`.
    pub fits: Vec<(usize, SlopeFit)>,
}

impl PhaseProfileResult {
    /// Slope of symbol `l`'s line, if present.
    pub fn slope(&self, l: usize) -> Option<f64> {
        self.fits.iter().find(|(i, _)| *i == l).map(|(_, f)| f.slope)
    }
}

/// Phase of every occupied subcarrier of the x-polarisation for symbols
/// `1..=symbols`, relative to the line fitted through symbol 0, with no SCO
/// compensation. Polarisation mixing is undone with the true rotation.
pub fn phase_profile(cfg: &SimConfig, symbols: usize, seed: u64) -> Result<PhaseProfileResult> {
    let tx = transmit(cfg, seed)?;
    if symbols == 0 || symbols >= tx.ofdm.n_frame_syms {
        return param_err(format!(
            "phase profile needs 1..{} symbols, got {symbols}",
            tx.ofdm.n_frame_syms
        ));
    }
    let params = cfg.channel_params(seed);
    let mut raw = run_channel(&tx.stream, &params)?;
    if cfg.cd_compensation {
        raw = compensate_cd(&raw, &params.cd())?;
    }
    let modem = OfdmModem::new(&tx.ofdm)?;
    let start = genie_frame_start(tx.frame_offset, params.gamma());
    let grid = modem.demodulate_frame(&raw, start, symbols + 1, cfg.fft_backoff)?;
    let genie = params.pol_rotation_seed.map(haar_jones).unwrap_or_else(Jones::identity);
    let (grid, _) = pol_demux_equalize(&grid, &ChannelEstimate::flat(genie, tx.ofdm.n_sc))?;

    let k = modem.subcarriers();
    let measure = |l: usize| extract_phase(&grid.row(Pol::X, l).to_vec(), &tx.grid.row(Pol::X, l).to_vec(), k, l);
    let reference = ls_fit(&unwrap(&measure(0)?))?;

    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for l in 1..=symbols {
        let p = measure(l)?;
        let rel = PhaseProfile {
            phases: p
                .phases
                .iter()
                .zip(&p.subcarriers)
                .map(|(ph, &kk)| wrap_phase(ph - reference.at(kk)))
                .collect(),
            ..p
        };
        let rel = unwrap(&rel);
        let fit = ls_fit(&rel)?;
        rows.extend(rel.subcarriers.iter().zip(&rel.phases).map(|(&kk, &ph)| ProfileRow {
            l,
            k: kk as i64,
            phase: ph,
            fitted: fit.at(kk),
        }));
        fits.push((l, fit));
    }
    Ok(PhaseProfileResult { rows, fits })
}

pub fn write_profile_csv<W: Write>(mut w: W, result: &PhaseProfileResult, cfg: &SimConfig, opts: CsvOptions) -> Result<()> {
    write_preamble(&mut w, "per-symbol phase profile, x-polarisation, relative to symbol 0", Some(cfg), opts)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["l", "k", "phase", "fitted"])?;
    for r in &result.rows {
        out.write_record([r.l.to_string(), r.k.to_string(), r.phase.to_string(), r.fitted.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
