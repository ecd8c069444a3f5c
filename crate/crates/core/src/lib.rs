//! Desk-scale simulation of an ultrasonic MIMO localization array.
//!
//! The signal chain runs from excitation design through channel modeling,
//! matched filtering and delay-and-sum imaging:
//!
//! - [`waveform`]: seeded random-phase multisine excitation per transmitter
//! - [`transducer`]: non-flat emitter spectra applied to excitation
//! - [`scene`]: array geometry, point reflectors and received signals
//! - [`matched_filter`]: per-transmitter separation and channel isolation
//! - [`imaging`]: delay-and-sum image formation and image quality metrics
//! - [`stream`]: throughput and back-pressure model for the acquisition link
//!
//! [`export`] holds the CSV / raw float writers shared by all stages.

pub mod dsp;
pub mod error;
pub mod export;
pub mod imaging;
pub mod matched_filter;
pub mod rng;
pub mod scene;
pub mod stream;
pub mod transducer;
pub mod waveform;

pub use error::{Error, Result};
pub use imaging::{AcousticImage, ImageGrid, ImageMetrics, ImagingMode};
pub use matched_filter::{MfBankOutput, SeparationMatrix};
pub use scene::{ArrayGeometry, RecordingSet, Reflector, Scene};
pub use stream::{StreamConfig, StreamStats};
pub use transducer::FrequencyResponse;
pub use waveform::{MultisineSpec, WaveformSet};
