//! Baseband simulator of a dual-polarisation reduced-guard-interval coherent
//! optical OFDM link, with training-symbol sampling clock offset (SCO)
//! estimation and Farrow-filter compensation.
//!
//! The transmitter builds frames from de Bruijn payloads ([`ofdm`]), the
//! channel applies polarisation rotation, dispersion, ASE, laser phase noise,
//! the clock offset and ADC quantisation ([`channel`]), and the receiver
//! undoes them ([`rx`]) with the SCO loop in [`sco`] driving [`resample`].
//! [`harness`] runs experiments and writes CSV.

pub mod channel;
pub mod debruijn;
pub mod error;
pub mod harness;
pub mod iqfile;
pub mod linalg;
pub mod ofdm;
pub mod qam;
pub mod resample;
pub mod rng;
pub mod rx;
pub mod sco;
pub mod stream;

pub use channel::{run_channel, CdParams, ChannelParams};
pub use error::{Error, Result};
pub use harness::{RunReport, SimConfig};
pub use linalg::Jones;
pub use ofdm::{FreqGrid, KnownSymbols, OfdmConfig, OfdmModem, QamGrid, TrainingPair};
pub use resample::{Interpolator, ResampleSpec};
pub use rx::{run_rx_pipeline, ChannelEstimate, RxContext, RxOutput, RxParams};
pub use sco::{EstimationMode, PhaseProfile, ScoEstimate, ScoSettings, SlopeFit};
pub use stream::{IqStream, Pol};
