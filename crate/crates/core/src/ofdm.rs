//! OFDM frame construction and demodulation: subcarrier layout, IFFT/FFT with
//! cyclic prefix, the dual-polarisation training pair and frame assembly.

use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{param_err, Result};
use crate::qam;
use crate::rng::{derive_seed, rng_from_seed};
use crate::stream::{IqStream, Pol};

const TRAINING_STREAM: u64 = 0x7501;
const PILOT_STREAM: u64 = 0x7502;

/// Frame and grid constants.
///
/// Occupied subcarriers are addressed two ways: by signed frequency index `k`
/// (see [`OfdmConfig::subcarriers`]) and by position `0..n_sc` in that list.
/// Pilot positions use the latter.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmConfig {
    /// FFT size `N`.
    pub n_fft: usize,
    /// Number of occupied subcarriers (data plus pilots).
    pub n_sc: usize,
    /// Cyclic-prefix length in samples.
    pub n_cp: usize,
    /// OFDM symbols per frame, training symbols included.
    pub n_frame_syms: usize,
    /// DAC sample period `T_t` in seconds.
    pub tx_sample_period: f64,
    pub qam_order: usize,
    /// Leave the DC bin empty.
    pub dc_null: bool,
    /// Positions (into the occupied list) carrying pilots in data symbols.
    pub pilot_positions: Vec<usize>,
    /// Symbol indices of the two training symbols.
    pub ts_indices: (usize, usize),
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl OfdmConfig {
    /// 512-point FFT, 46-sample CP, 412 data + 8 pilot subcarriers, 40 GSa/s DAC,
    /// training pair at symbols 4 and 5 of a 22-symbol frame.
    pub fn reference() -> Self {
        let n_sc = 420;
        Self {
            n_fft: 512,
            n_sc,
            n_cp: 46,
            n_frame_syms: 22,
            tx_sample_period: 1.0 / 40e9,
            qam_order: 16,
            dc_null: true,
            pilot_positions: evenly_spaced(n_sc, 8),
            ts_indices: (4, 5),
        }
    }

    /// `N_s = N + N_CP`.
    pub fn n_sym(&self) -> usize {
        self.n_fft + self.n_cp
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.tx_sample_period
    }

    pub fn frame_len(&self) -> usize {
        self.n_frame_syms * self.n_sym()
    }

    /// Signed subcarrier index `k` for each occupied position, ascending.
    ///
    /// Without DC nulling this is `−N_sc/2+1 ..= N_sc/2`. With DC nulled the
    /// DC slot is dropped and the band extends one bin lower, keeping `n_sc`
    /// occupied tones: `−N_sc/2 ..= −1` and `1 ..= N_sc/2`.
    pub fn subcarriers(&self) -> Vec<i64> {
        let half = (self.n_sc / 2) as i64;
        if self.dc_null {
            (-half..0).chain(1..=half).collect()
        } else {
            (-half + 1..=half).collect()
        }
    }

    pub fn data_positions(&self) -> Vec<usize> {
        (0..self.n_sc)
            .filter(|p| !self.pilot_positions.contains(p))
            .collect()
    }

    pub fn n_data_subcarriers(&self) -> usize {
        self.n_sc - self.pilot_positions.len()
    }

    pub fn is_training(&self, l: usize) -> bool {
        l == self.ts_indices.0 || l == self.ts_indices.1
    }

    pub fn data_symbol_indices(&self) -> Vec<usize> {
        (0..self.n_frame_syms).filter(|&l| !self.is_training(l)).collect()
    }

    /// Payload bits carried per polarisation in one frame.
    pub fn bits_per_pol(&self) -> usize {
        self.data_symbol_indices().len() * self.n_data_subcarriers() * 4
    }

    /// Smallest frame length that carries `bits` payload bits per polarisation.
    pub fn frame_syms_for_bits(&self, bits: usize) -> usize {
        let per_sym = self.n_data_subcarriers() * 4;
        bits.div_ceil(per_sym) + 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 8 {
            return param_err(format!("n_fft must be at least 8, got {}", self.n_fft));
        }
        if self.n_sc < 2 || !self.n_sc.is_multiple_of(2) {
            return param_err(format!("n_sc must be even and at least 2, got {}", self.n_sc));
        }
        let limit = if self.dc_null { self.n_fft - 1 } else { self.n_fft };
        if self.n_sc > limit {
            return param_err(format!("n_sc {} exceeds the usable bins ({limit})", self.n_sc));
        }
        if self.n_cp >= self.n_fft {
            return param_err(format!("n_cp {} must be shorter than n_fft", self.n_cp));
        }
        if self.qam_order != 16 {
            return param_err(format!("only 16-QAM is supported, got {}", self.qam_order));
        }
        if !(self.tx_sample_period.is_finite() && self.tx_sample_period > 0.0) {
            return param_err("tx_sample_period must be positive");
        }
        let mut seen = vec![false; self.n_sc];
        for &p in &self.pilot_positions {
            if p >= self.n_sc || std::mem::replace(&mut seen[p], true) {
                return param_err(format!("pilot position {p} is out of range or repeated"));
            }
        }
        if self.pilot_positions.len() >= self.n_sc {
            return param_err("pilots leave no data subcarriers");
        }
        let (t0, t1) = self.ts_indices;
        if !(t0 < t1 && t1 < self.n_frame_syms) {
            return param_err(format!(
                "training symbols ({t0}, {t1}) must be increasing and inside {} symbols",
                self.n_frame_syms
            ));
        }
        if self.n_frame_syms < 3 {
            return param_err("a frame needs at least one data symbol besides the training pair");
        }
        Ok(())
    }
}

/// `count` positions spread evenly over `0..n`.
pub fn evenly_spaced(n: usize, count: usize) -> Vec<usize> {
    (0..count).map(|i| (2 * i + 1) * n / (2 * count)).collect()
}

/// Per-symbol, per-subcarrier complex values for both polarisations.
/// Rows are symbol indices `l`, columns occupied positions.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqGrid {
    pub x: Array2<Complex64>,
    pub y: Array2<Complex64>,
}

/// The transmitted grid; the same lattice as a received [`FreqGrid`].
pub type QamGrid = FreqGrid;

impl FreqGrid {
    pub fn zeros(n_symbols: usize, n_sc: usize) -> Self {
        Self {
            x: Array2::zeros((n_symbols, n_sc)),
            y: Array2::zeros((n_symbols, n_sc)),
        }
    }

    pub fn n_symbols(&self) -> usize {
        self.x.nrows()
    }

    pub fn pol(&self, pol: Pol) -> &Array2<Complex64> {
        match pol {
            Pol::X => &self.x,
            Pol::Y => &self.y,
        }
    }

    pub fn pol_mut(&mut self, pol: Pol) -> &mut Array2<Complex64> {
        match pol {
            Pol::X => &mut self.x,
            Pol::Y => &mut self.y,
        }
    }

    pub fn row(&self, pol: Pol, l: usize) -> ArrayView1<'_, Complex64> {
        self.pol(pol).row(l)
    }
}

/// Which symbol of the training pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsSlot {
    First,
    Second,
}

/// Correlated dual-polarisation training pair: `T1 = (A, A)` and `T2 = (A, −A)`
/// over (x, y), with `A` a unit-amplitude QPSK sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub a: Vec<Complex64>,
}

impl TrainingPair {
    pub fn content(&self, slot: TsSlot, pol: Pol) -> Vec<Complex64> {
        match (slot, pol) {
            (TsSlot::Second, Pol::Y) => self.a.iter().map(|v| -v).collect(),
            _ => self.a.clone(),
        }
    }
}

pub fn gen_training_pair(config: &OfdmConfig, seed: u64) -> TrainingPair {
    let mut rng = rng_from_seed(derive_seed(seed, TRAINING_STREAM));
    TrainingPair {
        a: (0..config.n_sc).map(|_| qam::random_qpsk(&mut rng)).collect(),
    }
}

/// Everything the receiver knows in advance about a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownSymbols {
    pub training: TrainingPair,
    /// Pilot values per polarisation, one per pilot position, fixed across symbols.
    pub pilots: [Vec<Complex64>; 2],
}

pub fn known_symbols(config: &OfdmConfig, seed: u64) -> KnownSymbols {
    let mut rng = rng_from_seed(derive_seed(seed, PILOT_STREAM));
    let n = config.pilot_positions.len();
    let px: Vec<Complex64> = (0..n).map(|_| qam::random_qpsk(&mut rng)).collect();
    let py: Vec<Complex64> = (0..n).map(|_| qam::random_qpsk(&mut rng)).collect();
    KnownSymbols {
        training: gen_training_pair(config, seed),
        pilots: [px, py],
    }
}

/// IFFT/FFT engine for one configuration. Both directions use 1/√N scaling.
#[derive(Clone)]
pub struct OfdmModem {
    config: OfdmConfig,
    bins: Vec<usize>,
    subcarriers: Vec<i64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for OfdmModem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OfdmModem").field("config", &self.config).finish()
    }
}

impl OfdmModem {
    pub fn new(config: &OfdmConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_fft as i64;
        let subcarriers = config.subcarriers();
        let bins = subcarriers.iter().map(|&k| k.rem_euclid(n) as usize).collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            config: config.clone(),
            bins,
            subcarriers,
            fwd: planner.plan_fft_forward(config.n_fft),
            inv: planner.plan_fft_inverse(config.n_fft),
        })
    }

    pub fn config(&self) -> &OfdmConfig {
        &self.config
    }

    pub fn subcarriers(&self) -> &[i64] {
        &self.subcarriers
    }

    /// One OFDM symbol (`n_sym` samples, CP first) from a row over occupied subcarriers.
    pub fn modulate_symbol(&self, row: &[Complex64]) -> Result<Vec<Complex64>> {
        let cfg = &self.config;
        if row.len() != cfg.n_sc {
            return param_err(format!("grid row has {} values, expected {}", row.len(), cfg.n_sc));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); cfg.n_fft];
        for (&b, &v) in self.bins.iter().zip(row) {
            buf[b] = v;
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / (cfg.n_fft as f64).sqrt();
        let mut out = Vec::with_capacity(cfg.n_sym());
        out.extend(buf[cfg.n_fft - cfg.n_cp..].iter().map(|v| v * scale));
        out.extend(buf.iter().map(|v| v * scale));
        Ok(out)
    }

    /// Removes the CP and returns the occupied bins of one symbol.
    pub fn demodulate_symbol(&self, samples: &[Complex64]) -> Result<Vec<Complex64>> {
        self.demodulate_with_backoff(samples, 0)
    }

    /// Like [`Self::demodulate_symbol`] but with the FFT window starting
    /// `backoff` samples inside the CP. The resulting deterministic linear
    /// phase is removed so the output matches a zero-backoff window.
    pub fn demodulate_with_backoff(&self, samples: &[Complex64], backoff: usize) -> Result<Vec<Complex64>> {
        let cfg = &self.config;
        if samples.len() != cfg.n_sym() {
            return param_err(format!("symbol has {} samples, expected {}", samples.len(), cfg.n_sym()));
        }
        if backoff > cfg.n_cp {
            return param_err(format!("FFT backoff {backoff} exceeds the CP length {}", cfg.n_cp));
        }
        let start = cfg.n_cp - backoff;
        let mut buf = samples[start..start + cfg.n_fft].to_vec();
        self.fwd.process(&mut buf);
        let scale = 1.0 / (cfg.n_fft as f64).sqrt();
        let n = cfg.n_fft as f64;
        Ok(self
            .bins
            .iter()
            .zip(&self.subcarriers)
            .map(|(&b, &k)| {
                let v = buf[b] * scale;
                if backoff == 0 {
                    v
                } else {
                    v * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 * backoff as f64 / n)
                }
            })
            .collect())
    }

    /// Demodulates `n_symbols` consecutive symbols of both polarisations
    /// starting at sample `start`.
    pub fn demodulate_frame(&self, stream: &IqStream, start: isize, n_symbols: usize, backoff: usize) -> Result<FreqGrid> {
        let ns = self.config.n_sym();
        let mut grid = FreqGrid::zeros(n_symbols, self.config.n_sc);
        for l in 0..n_symbols {
            let w = stream.window(start + (l * ns) as isize, ns);
            for pol in Pol::BOTH {
                let row = self.demodulate_with_backoff(w.pol(pol), backoff)?;
                grid.pol_mut(pol).row_mut(l).assign(&ArrayView1::from(&row));
            }
        }
        Ok(grid)
    }

    /// Serialises a full grid (both polarisations) into a time-domain stream.
    pub fn modulate_grid(&self, grid: &FreqGrid) -> Result<IqStream> {
        let ns = self.config.n_sym();
        let n_symbols = grid.n_symbols();
        let mut x = Vec::with_capacity(n_symbols * ns);
        let mut y = Vec::with_capacity(n_symbols * ns);
        for l in 0..n_symbols {
            x.extend(self.modulate_symbol(&grid.row(Pol::X, l).to_vec())?);
            y.extend(self.modulate_symbol(&grid.row(Pol::Y, l).to_vec())?);
        }
        IqStream::new(x, y, self.config.sample_rate())
    }
}

/// Builds one frame: training pair at `ts_indices`, 16-QAM data with pilots elsewhere.
///
/// `bits` holds the x-polarisation payload followed by the y-polarisation
/// payload, [`OfdmConfig::bits_per_pol`] bits each. `seed` fixes the training
/// and pilot content (see [`known_symbols`]).
pub fn assemble_frame(bits: &[bool], config: &OfdmConfig, seed: u64) -> Result<(QamGrid, IqStream)> {
    let modem = OfdmModem::new(config)?;
    let per_pol = config.bits_per_pol();
    if bits.len() < 2 * per_pol {
        return param_err(format!(
            "frame needs {} bits ({} per polarisation), got {}",
            2 * per_pol,
            per_pol,
            bits.len()
        ));
    }
    let known = known_symbols(config, seed);
    let data_pos = config.data_positions();
    let per_sym = data_pos.len() * 4;
    let mut grid = FreqGrid::zeros(config.n_frame_syms, config.n_sc);

    for pol in Pol::BOTH {
        let pol_bits = &bits[pol.index() * per_pol..(pol.index() + 1) * per_pol];
        let mut chunks = pol_bits.chunks_exact(per_sym);
        let g = grid.pol_mut(pol);
        for l in 0..config.n_frame_syms {
            let mut row = g.row_mut(l);
            if l == config.ts_indices.0 || l == config.ts_indices.1 {
                let slot = if l == config.ts_indices.0 { TsSlot::First } else { TsSlot::Second };
                for (v, t) in row.iter_mut().zip(known.training.content(slot, pol)) {
                    *v = t;
                }
                continue;
            }
            let symbols = qam::map_bits(chunks.next().expect("bit count checked above"))?;
            for (&p, s) in data_pos.iter().zip(symbols) {
                row[p] = s;
            }
            for (&p, &v) in config.pilot_positions.iter().zip(&known.pilots[pol.index()]) {
                row[p] = v;
            }
        }
    }
    let stream = modem.modulate_grid(&grid)?;
    Ok((grid, stream))
}

/// Extracts the payload symbols (data positions of data symbols) of one polarisation in transmit order.
pub fn data_symbols(grid: &FreqGrid, config: &OfdmConfig, pol: Pol) -> Vec<Complex64> {
    let data_pos = config.data_positions();
    config
        .data_symbol_indices()
        .into_iter()
        .flat_map(|l| {
            let row = grid.row(pol, l);
            data_pos.iter().map(move |&p| row[p]).collect::<Vec<_>>()
        })
        .collect()
}
