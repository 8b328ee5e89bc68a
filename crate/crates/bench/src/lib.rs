//! Fixtures shared by the benchmarks.

use coofdm_core::harness::{self, SimConfig, Transmission};
use coofdm_core::IqStream;

/// Default link with every impairment off except the clock offset.
pub fn sco_only(gamma_ppm: f64) -> SimConfig {
    SimConfig {
        gamma_ppm,
        cfo_hz: 0.0,
        linewidth_hz: 0.0,
        fiber_km: 0.0,
        adc_bits: 0,
        pol_rotation: false,
        ..SimConfig::default()
    }
}

/// A default-sized frame and the stream the receiver sees for it.
pub fn frame(cfg: &SimConfig) -> (Transmission, IqStream) {
    harness::channel_output(cfg, 1).expect("default configuration is valid")
}
