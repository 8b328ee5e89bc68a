//! Link configurations and reference formulas shared by the integration tests.
#![allow(dead_code)]

use coofdm_core::harness::{CeMode, SimConfig};
use num_complex::Complex64;
use statrs::function::erf::erfc;

/// Every impairment off.
pub fn all_off() -> SimConfig {
    SimConfig {
        gamma_ppm: 0.0,
        cfo_hz: 0.0,
        linewidth_hz: 0.0,
        fiber_km: 0.0,
        adc_bits: 0,
        pol_rotation: false,
        ..SimConfig::default()
    }
}

/// Clock offset only, no noise.
pub fn sco_only(gamma_ppm: f64) -> SimConfig {
    SimConfig { gamma_ppm, ..all_off() }
}

/// Clock offset plus ASE.
pub fn awgn_equivalent(gamma_ppm: f64, osnr_db: f64) -> SimConfig {
    SimConfig {
        osnr_db,
        ..sco_only(gamma_ppm)
    }
}

/// Back-to-back AWGN with genie channel knowledge and no phase or clock correction.
pub fn awgn_genie(osnr_db: f64) -> SimConfig {
    SimConfig {
        osnr_db,
        compensation: false,
        channel_estimation: CeMode::Genie,
        cpe: false,
        cfo_tracking: false,
        timing_tracking: false,
        ..all_off()
    }
}

/// Gray-coded square 16-QAM bit error rate at symbol `Es/N0` (linear).
pub fn qam16_ber(es_n0: f64) -> f64 {
    let x = (es_n0 / 10.0).sqrt();
    (3.0 * erfc(x) + 2.0 * erfc(3.0 * x) - erfc(5.0 * x)) / 8.0
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Error power over reference power, in dB.
pub fn evm_db(received: &[Complex64], reference: &[Complex64]) -> f64 {
    assert_eq!(received.len(), reference.len());
    let err: f64 = received.iter().zip(reference).map(|(r, t)| (r - t).norm_sqr()).sum();
    let sig: f64 = reference.iter().map(|t| t.norm_sqr()).sum();
    10.0 * (err / sig).log10()
}

/// OSNR at which `log10(BER)` crosses `log10(target)`, linearly interpolated.
pub fn crossing(osnr: &[f64], ber: &[f64], target: f64) -> Option<f64> {
    let t = target.log10();
    osnr.windows(2).zip(ber.windows(2)).find_map(|(o, b)| {
        let (b0, b1) = (b[0].max(1e-12).log10(), b[1].max(1e-12).log10());
        ((b0 - t) * (b1 - t) <= 0.0 && b0 != b1).then(|| o[0] + (t - b0) * (o[1] - o[0]) / (b1 - b0))
    })
}
