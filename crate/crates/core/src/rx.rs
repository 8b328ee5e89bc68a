//! Receiver chain: CD compensation, genie alignment, SCO loop, FFT,
//! training-based channel estimation with intra-symbol frequency averaging,
//! zero-forcing polarisation demultiplexing, common-phase correction, demapping.

use std::f64::consts::PI;

use ndarray::ArrayView1;
use num_complex::Complex64;

use crate::channel::CdParams;
use crate::error::{param_err, Error, Result};
use crate::linalg::Jones;
use crate::ofdm::{FreqGrid, KnownSymbols, OfdmConfig, OfdmModem, TrainingPair, TsSlot};
use crate::qam;
use crate::sco::{self, ScoReport, ScoSettings};
use crate::stream::{IqStream, Pol};

pub use crate::channel::compensate_cd;

/// Condition number above which a subcarrier's equalizer is flagged.
pub const ILL_CONDITIONED: f64 = 1e6;

/// Per-subcarrier 2×2 channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub jones: Vec<Jones>,
    pub condition: Vec<f64>,
}

impl ChannelEstimate {
    /// The same matrix on every occupied subcarrier.
    pub fn flat(j: Jones, n_sc: usize) -> Self {
        let c = j.condition_number();
        Self {
            jones: vec![j; n_sc],
            condition: vec![c; n_sc],
        }
    }
}

/// Demodulated training symbols, indexed by polarisation.
#[derive(Debug, Clone, PartialEq)]
pub struct TsObservation {
    pub first: [Vec<Complex64>; 2],
    pub second: [Vec<Complex64>; 2],
}

impl TsObservation {
    pub fn from_grid(grid: &FreqGrid, config: &OfdmConfig) -> Self {
        let (l1, l2) = config.ts_indices;
        let row = |pol, l| grid.row(pol, l).to_vec();
        Self {
            first: [row(Pol::X, l1), row(Pol::Y, l1)],
            second: [row(Pol::X, l2), row(Pol::Y, l2)],
        }
    }
}

/// Least-squares `H_k = R_k·P_k⁻¹` per subcarrier, then each entry averaged
/// over `isfa_window` neighbouring subcarriers (truncated at the band edges).
///
/// Columns of `R_k` are the received (x, y) vectors of the first and second
/// training symbol; `P_k = [[A, A], [A, −A]]`.
pub fn estimate_channel(ts: &TsObservation, training: &TrainingPair, isfa_window: usize) -> Result<ChannelEstimate> {
    if isfa_window == 0 || isfa_window.is_multiple_of(2) {
        return param_err(format!("ISFA window must be odd and at least 1, got {isfa_window}"));
    }
    let n = training.a.len();
    if ts.first.iter().chain(&ts.second).any(|v| v.len() != n) {
        return param_err("training observation length does not match the training content");
    }
    let t1 = [training.content(TsSlot::First, Pol::X), training.content(TsSlot::First, Pol::Y)];
    let t2 = [training.content(TsSlot::Second, Pol::X), training.content(TsSlot::Second, Pol::Y)];
    let raw = (0..n)
        .map(|k| {
            let r = Jones::new(ts.first[0][k], ts.second[0][k], ts.first[1][k], ts.second[1][k]);
            let p = Jones::new(t1[0][k], t2[0][k], t1[1][k], t2[1][k]);
            let pinv = p
                .inverse()
                .ok_or_else(|| Error::Internal(format!("training matrix is singular at position {k}")))?;
            Ok(r.mul(&pinv))
        })
        .collect::<Result<Vec<Jones>>>()?;

    let half = isfa_window / 2;
    let jones: Vec<Jones> = (0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half).min(n - 1);
            let sum = raw[lo..=hi].iter().fold(Jones::new(0.0.into(), 0.0.into(), 0.0.into(), 0.0.into()), |acc, j| acc.add(j));
            sum.scale(1.0 / (hi - lo + 1) as f64)
        })
        .collect();
    let condition = jones.iter().map(Jones::condition_number).collect();
    Ok(ChannelEstimate { jones, condition })
}

/// Zero-forcing `H_k⁻¹·r_k` on every symbol of `grid`.
///
/// Returns the equalized grid and the positions whose condition number
/// exceeds [`ILL_CONDITIONED`]. Singular positions are zeroed.
pub fn pol_demux_equalize(grid: &FreqGrid, est: &ChannelEstimate) -> Result<(FreqGrid, Vec<usize>)> {
    let n_sc = grid.x.ncols();
    if est.jones.len() != n_sc {
        return param_err(format!("estimate covers {} subcarriers, grid has {n_sc}", est.jones.len()));
    }
    let mut out = FreqGrid::zeros(grid.n_symbols(), n_sc);
    let mut flagged = Vec::new();
    for (k, (h, &cond)) in est.jones.iter().zip(&est.condition).enumerate() {
        let inv = h.inverse();
        if inv.is_none() || cond.is_nan() || cond > ILL_CONDITIONED {
            flagged.push(k);
        }
        let Some(inv) = inv else { continue };
        for l in 0..grid.n_symbols() {
            let [a, b] = inv.apply([grid.x[[l, k]], grid.y[[l, k]]]);
            out.x[[l, k]] = a;
            out.y[[l, k]] = b;
        }
    }
    Ok((out, flagged))
}

/// `arg Σ received·conj(known)`.
pub fn estimate_cpe(received: &[Complex64], known: &[Complex64]) -> Result<f64> {
    if received.len() != known.len() {
        return param_err("pilot observation and reference lengths differ");
    }
    if received.len() < 2 {
        return param_err(format!("common phase needs at least 2 pilots, got {}", received.len()));
    }
    let acc: Complex64 = received.iter().zip(known).map(|(r, p)| r * p.conj()).sum();
    if acc.norm_sqr() == 0.0 {
        return param_err("pilots carry no energy");
    }
    Ok(acc.arg())
}

/// Rotates a whole symbol by the conjugate of its pilot-estimated common phase.
pub fn cpe_correct(row: &[Complex64], pilot_positions: &[usize], pilot_known: &[Complex64]) -> Result<Vec<Complex64>> {
    if let Some(&p) = pilot_positions.iter().find(|&&p| p >= row.len()) {
        return param_err(format!("pilot position {p} is outside the row"));
    }
    let received: Vec<Complex64> = pilot_positions.iter().map(|&p| row[p]).collect();
    let theta = estimate_cpe(&received, pilot_known)?;
    let rot = Complex64::from_polar(1.0, -theta);
    Ok(row.iter().map(|v| v * rot).collect())
}

/// Ground truth the simulation hands the receiver in place of synchronisation.
#[derive(Debug, Clone, PartialEq)]
pub struct RxContext {
    /// First sample of symbol 0 in the received stream.
    pub frame_start: isize,
    /// Frequency offset removed before any other processing.
    pub genie_cfo_hz: f64,
    /// Offset left for the receiver to track; informational.
    pub residual_cfo_hz: f64,
    pub known: KnownSymbols,
    pub config: OfdmConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelEstimation {
    /// From the training pair.
    Training,
    /// The given matrix on every subcarrier.
    Genie(Jones),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxParams {
    /// Dispersion to undo; `None` skips the stage.
    pub cd: Option<CdParams>,
    /// `None` disables SCO estimation and compensation.
    pub sco: Option<ScoSettings>,
    pub channel_estimation: ChannelEstimation,
    pub isfa_window: usize,
    pub cpe: bool,
    /// Re-estimate the channel after measuring the symbol-to-symbol phase drift from pilots.
    pub cfo_tracking: bool,
    /// Fit the pilot phase slope of every data symbol as a linear function of symbol index and remove it.
    pub timing_tracking: bool,
    /// Samples by which every FFT window is moved into the cyclic prefix.
    pub fft_backoff: usize,
}

impl Default for RxParams {
    fn default() -> Self {
        Self {
            cd: None,
            sco: Some(ScoSettings::default()),
            channel_estimation: ChannelEstimation::Training,
            isfa_window: 5,
            cpe: true,
            cfo_tracking: true,
            timing_tracking: true,
            fft_backoff: 11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RxOutput {
    /// X-polarisation payload then y-polarisation payload.
    pub bits: Vec<bool>,
    /// Every symbol of the frame after equalization and phase correction.
    pub equalized: FreqGrid,
    pub sco: Option<ScoReport>,
    pub channel: ChannelEstimate,
    pub ill_conditioned: Vec<usize>,
    /// Common phase removed from each data symbol, in data-symbol order.
    pub common_phases: Vec<f64>,
    /// Phase drift per symbol period used to re-align the training pair.
    pub phase_drift_per_symbol: f64,
    pub flags: Vec<String>,
}

pub const FLAG_SCO_UNRELIABLE: &str = "sco_unreliable";
pub const FLAG_ILL_CONDITIONED: &str = "ill_conditioned";

fn remove_cfo(stream: &IqStream, cfo_hz: f64) -> IqStream {
    let step = -2.0 * PI * cfo_hz / stream.sample_rate;
    stream.clone().map_pols(|s| {
        for (n, v) in s.iter_mut().enumerate() {
            *v *= Complex64::from_polar(1.0, step * n as f64);
        }
    })
}

/// Joint common phase of both polarisations of data symbol `l`.
fn joint_cpe(grid: &FreqGrid, l: usize, config: &OfdmConfig, known: &KnownSymbols) -> Result<f64> {
    let mut received = Vec::with_capacity(2 * config.pilot_positions.len());
    let mut reference = Vec::with_capacity(received.capacity());
    for pol in Pol::BOTH {
        let row = grid.row(pol, l);
        received.extend(config.pilot_positions.iter().map(|&p| row[p]));
        reference.extend_from_slice(&known.pilots[pol.index()]);
    }
    estimate_cpe(&received, &reference)
}

fn rotate_row(grid: &mut FreqGrid, l: usize, theta: f64) {
    let rot = Complex64::from_polar(1.0, -theta);
    for pol in Pol::BOTH {
        grid.pol_mut(pol).row_mut(l).mapv_inplace(|v| v * rot);
    }
}

/// Slope of the unwrapped phase sequence against symbol index.
fn phase_drift(indices: &[usize], phases: &[f64]) -> f64 {
    if phases.len() < 2 {
        return 0.0;
    }
    let mut un = phases.to_vec();
    for i in 1..un.len() {
        un[i] = un[i - 1] + sco::wrap_phase(phases[i] - phases[i - 1]);
    }
    let n = un.len() as f64;
    let lbar = indices.iter().sum::<usize>() as f64 / n;
    let pbar = un.iter().sum::<f64>() / n;
    let (sxx, sxy) = indices.iter().zip(&un).fold((0.0, 0.0), |(a, b), (&l, &p)| {
        let d = l as f64 - lbar;
        (a + d * d, b + d * (p - pbar))
    });
    sxy / sxx
}

/// Per-symbol pilot phase slope (rad per subcarrier) after removing the common phase.
fn pilot_slope(grid: &FreqGrid, l: usize, config: &OfdmConfig, known: &KnownSymbols, k: &[f64]) -> f64 {
    let z: Vec<Complex64> = config
        .pilot_positions
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            Pol::BOTH
                .iter()
                .map(|&pol| grid.row(pol, l)[p] * known.pilots[pol.index()][i].conj())
                .sum()
        })
        .collect();
    let common = z.iter().sum::<Complex64>().arg();
    let kbar = k.iter().sum::<f64>() / k.len() as f64;
    let (sxx, sxy) = z.iter().zip(k).fold((0.0, 0.0), |(a, b), (zi, &ki)| {
        let d = ki - kbar;
        (a + d * d, b + d * sco::wrap_phase(zi.arg() - common))
    });
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Removes a timing ramp `(a + b·l)·k` fitted to the pilot slopes of all data symbols.
fn track_timing(grid: &mut FreqGrid, config: &OfdmConfig, known: &KnownSymbols) -> (f64, f64) {
    let sc: Vec<f64> = config.subcarriers().iter().map(|&k| k as f64).collect();
    let k: Vec<f64> = config.pilot_positions.iter().map(|&p| sc[p]).collect();
    let idx = config.data_symbol_indices();
    let slopes: Vec<f64> = idx.iter().map(|&l| pilot_slope(grid, l, config, known, &k)).collect();
    let (a, b) = match idx.len() {
        0 => return (0.0, 0.0),
        1 => (slopes[0], 0.0),
        n => {
            let lbar = idx.iter().sum::<usize>() as f64 / n as f64;
            let sbar = slopes.iter().sum::<f64>() / n as f64;
            let (sxx, sxy) = idx.iter().zip(&slopes).fold((0.0, 0.0), |(p, q), (&l, &s)| {
                let d = l as f64 - lbar;
                (p + d * d, q + d * (s - sbar))
            });
            let b = sxy / sxx;
            (sbar - b * lbar, b)
        }
    };
    for &l in &idx {
        let slope = a + b * l as f64;
        for pol in Pol::BOTH {
            for (v, &kk) in grid.pol_mut(pol).row_mut(l).iter_mut().zip(&sc) {
                *v *= Complex64::from_polar(1.0, -slope * kk);
            }
        }
    }
    (a, b)
}

struct Equalized {
    grid: FreqGrid,
    channel: ChannelEstimate,
    flagged: Vec<usize>,
    phases: Vec<f64>,
}

fn equalize(frame: &FreqGrid, ctx: &RxContext, params: &RxParams, ts: &TsObservation) -> Result<Equalized> {
    let cfg = &ctx.config;
    let channel = match params.channel_estimation {
        ChannelEstimation::Training => estimate_channel(ts, &ctx.known.training, params.isfa_window)?,
        ChannelEstimation::Genie(j) => ChannelEstimate::flat(j, cfg.n_sc),
    };
    let (mut grid, flagged) = pol_demux_equalize(frame, &channel)?;
    if params.timing_tracking {
        track_timing(&mut grid, cfg, &ctx.known);
    }
    let mut phases = Vec::new();
    if params.cpe {
        for l in cfg.data_symbol_indices() {
            let theta = joint_cpe(&grid, l, cfg, &ctx.known)?;
            rotate_row(&mut grid, l, theta);
            phases.push(theta);
        }
    }
    Ok(Equalized {
        grid,
        channel,
        flagged,
        phases,
    })
}

/// Receiver pipeline on a raw ADC stream.
pub fn run_rx_pipeline(raw: &IqStream, ctx: &RxContext, params: &RxParams) -> Result<RxOutput> {
    let cfg = &ctx.config;
    let modem = OfdmModem::new(cfg)?;
    let mut flags = Vec::new();

    let mut stream = match &params.cd {
        Some(cd) => compensate_cd(raw, cd)?,
        None => raw.clone(),
    };
    if ctx.genie_cfo_hz != 0.0 {
        stream = remove_cfo(&stream, ctx.genie_cfo_hz);
    }

    let mut frame_start = ctx.frame_start;
    let mut sco_report = None;
    if let Some(settings) = &params.sco {
        let out = sco::run_sco_loop(&stream, frame_start, &modem, &ctx.known.training, settings, params.fft_backoff)?;
        if !out.report.reliable {
            flags.push(FLAG_SCO_UNRELIABLE.to_string());
        }
        stream = out.stream;
        frame_start = out.frame_start;
        sco_report = Some(out.report);
    }

    let frame = modem.demodulate_frame(&stream, frame_start, cfg.n_frame_syms, params.fft_backoff)?;
    let ts = TsObservation::from_grid(&frame, cfg);
    let mut eq = equalize(&frame, ctx, params, &ts)?;

    let mut drift = 0.0;
    if params.cfo_tracking && params.cpe && params.channel_estimation == ChannelEstimation::Training {
        drift = phase_drift(&cfg.data_symbol_indices(), &eq.phases);
        let (l1, l2) = cfg.ts_indices;
        let rot = Complex64::from_polar(1.0, -drift * (l2 - l1) as f64);
        let mut aligned = ts.clone();
        for v in aligned.second.iter_mut().flatten() {
            *v *= rot;
        }
        eq = equalize(&frame, ctx, params, &aligned)?;
    }

    if !eq.flagged.is_empty() {
        flags.push(FLAG_ILL_CONDITIONED.to_string());
    }

    let data_pos = cfg.data_positions();
    let mut bits = Vec::with_capacity(2 * cfg.bits_per_pol());
    for pol in Pol::BOTH {
        for l in cfg.data_symbol_indices() {
            let row: ArrayView1<Complex64> = eq.grid.row(pol, l);
            bits.extend(data_pos.iter().flat_map(|&p| qam::qam16_demap(row[p])));
        }
    }

    Ok(RxOutput {
        bits,
        equalized: eq.grid,
        sco: sco_report,
        channel: eq.channel,
        ill_conditioned: eq.flagged,
        common_phases: eq.phases,
        phase_drift_per_symbol: drift,
        flags,
    })
}
