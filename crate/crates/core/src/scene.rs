//! Array geometry, point-reflector scenes and received-signal synthesis.
//!
//! Each transmitter/microphone pair sees one tap per reflector with
//! spherical spreading on both legs; recordings are the sum over
//! transmitters of tap-delayed excitation plus white Gaussian noise.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Domain};
use crate::waveform::WaveformSet;

pub type Vec3 = [f64; 3];

pub fn distance(a: Vec3, b: Vec3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Round-trip propagation time through `p`, in samples (fractional).
///
/// Both the channel model and the imager go through this function so that
/// rounded delays match bit for bit.
pub fn round_trip_samples(tx: Vec3, p: Vec3, mic: Vec3, speed_of_sound: f64, sample_rate: f64) -> f64 {
    round_trip_from_legs(distance(p, tx), distance(p, mic), speed_of_sound, sample_rate)
}

#[inline]
pub fn round_trip_from_legs(tx_leg: f64, mic_leg: f64, speed_of_sound: f64, sample_rate: f64) -> f64 {
    (tx_leg + mic_leg) / speed_of_sound * sample_rate
}

/// Closest two elements may be before they count as coincident.
const COINCIDENT_M: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    #[serde(rename = "tx")]
    pub tx_positions: Vec<Vec3>,
    #[serde(rename = "mic")]
    pub mic_positions: Vec<Vec3>,
}

/// Microphone pitch of the default array: half a wavelength at 40 kHz in air,
/// rounded to 0.1 mm.
pub const DEFAULT_PITCH_M: f64 = 0.0043;
/// Gap between the top microphone row and the first transmitter row.
pub const DEFAULT_TX_OFFSET_M: f64 = 0.010;

impl ArrayGeometry {
    pub fn new(tx_positions: Vec<Vec3>, mic_positions: Vec<Vec3>) -> Result<Self> {
        let g = Self {
            tx_positions,
            mic_positions,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, list) in [("tx", &self.tx_positions), ("mic", &self.mic_positions)] {
            if list.is_empty() {
                return Err(Error::invalid(format!("geometry has no {name} positions")));
            }
            if list.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("geometry has non-finite {name} position")));
            }
            for i in 0..list.len() {
                for j in i + 1..list.len() {
                    if distance(list[i], list[j]) < COINCIDENT_M {
                        return Err(Error::invalid(format!("{name} elements {i} and {j} are coincident")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn num_tx(&self) -> usize {
        self.tx_positions.len()
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let g: Self = read_json(path.as_ref())?;
        g.validate()?;
        Ok(g)
    }
}

/// 4 x 16 microphone URA centered on the origin in the z = 0 plane, with a
/// 2 x 16 transmitter grid on the same column pitch placed above it.
pub fn default_geometry() -> ArrayGeometry {
    let p = DEFAULT_PITCH_M;
    let cols = 16;
    let x = |c: usize| (c as f64 - (cols as f64 - 1.0) / 2.0) * p;
    let mic_rows = 4;
    let mic_y = |r: usize| (r as f64 - (mic_rows as f64 - 1.0) / 2.0) * p;
    let mut mic = Vec::with_capacity(64);
    for r in 0..mic_rows {
        for c in 0..cols {
            mic.push([x(c), mic_y(r), 0.0]);
        }
    }
    let top = mic_y(mic_rows - 1);
    let mut tx = Vec::with_capacity(32);
    for r in 0..2 {
        for c in 0..cols {
            tx.push([x(c), top + DEFAULT_TX_OFFSET_M + r as f64 * p, 0.0]);
        }
    }
    ArrayGeometry {
        tx_positions: tx,
        mic_positions: mic,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reflector {
    #[serde(rename = "pos")]
    pub position: Vec3,
    #[serde(rename = "refl")]
    pub reflectivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    #[serde(rename = "c", default = "default_speed_of_sound")]
    pub speed_of_sound: f64,
    #[serde(default)]
    pub noise_rms: f64,
    #[serde(default)]
    pub reflectors: Vec<Reflector>,
}

fn default_speed_of_sound() -> f64 {
    343.0
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            speed_of_sound: default_speed_of_sound(),
            noise_rms: 0.0,
            reflectors: Vec::new(),
        }
    }
}

impl Scene {
    pub fn new(reflectors: Vec<Reflector>) -> Self {
        Self {
            reflectors,
            ..Self::default()
        }
    }

    pub fn with_noise(mut self, noise_rms: f64) -> Self {
        self.noise_rms = noise_rms;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed_of_sound > 0.0 && self.speed_of_sound.is_finite()) {
            return Err(Error::invalid("speed of sound must be positive"));
        }
        if !(self.noise_rms >= 0.0 && self.noise_rms.is_finite()) {
            return Err(Error::invalid("noise_rms must be finite and non-negative"));
        }
        for (i, r) in self.reflectors.iter().enumerate() {
            if r.position.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("reflector {i} has a non-finite position")));
            }
            if !(r.reflectivity >= 0.0 && r.reflectivity.is_finite()) {
                return Err(Error::invalid(format!(
                    "reflector {i} reflectivity must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s: Self = read_json(path.as_ref())?;
        s.validate()?;
        Ok(s)
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DelayInterpolation {
    /// Round every delay to the nearest sample.
    #[default]
    Nearest,
    /// Hann-windowed sinc fractional delay spanning `2 * half_width + 1` taps.
    Sinc { half_width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SynthesisOptions {
    #[serde(default)]
    pub interpolation: DelayInterpolation,
    /// Add the direct transmitter-to-microphone path.
    #[serde(default)]
    pub direct_path: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub delay_samples: i64,
    pub gain: f64,
}

/// Sparse impulse response, taps sorted by delay with unique delays.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImpulseResponse {
    pub taps: Vec<Tap>,
}

impl ImpulseResponse {
    fn from_unsorted(mut taps: Vec<Tap>) -> Self {
        taps.sort_by_key(|t| t.delay_samples);
        let mut merged: Vec<Tap> = Vec::with_capacity(taps.len());
        for t in taps {
            match merged.last_mut() {
                Some(last) if last.delay_samples == t.delay_samples => last.gain += t.gain,
                _ => merged.push(t),
            }
        }
        Self { taps: merged }
    }

    pub fn max_delay(&self) -> Option<i64> {
        self.taps.last().map(|t| t.delay_samples)
    }
}

/// Nearest-sample single-bounce response from `tx` to `mic`.
pub fn impulse_response(tx: Vec3, mic: Vec3, scene: &Scene, sample_rate: f64) -> Result<ImpulseResponse> {
    impulse_response_with(tx, mic, scene, sample_rate, &SynthesisOptions::default())
}

pub fn impulse_response_with(
    tx: Vec3,
    mic: Vec3,
    scene: &Scene,
    sample_rate: f64,
    opts: &SynthesisOptions,
) -> Result<ImpulseResponse> {
    scene.validate()?;
    let mut taps = Vec::with_capacity(scene.reflectors.len());
    let c = scene.speed_of_sound;
    let mut push = |delay: f64, gain: f64| match opts.interpolation {
        DelayInterpolation::Nearest => taps.push(Tap {
            delay_samples: delay.round() as i64,
            gain,
        }),
        DelayInterpolation::Sinc { half_width } => {
            let centre = delay.round() as i64;
            let hw = half_width.max(1) as i64;
            for d in centre - hw..=centre + hw {
                let x = d as f64 - delay;
                let w = 0.5 * (1.0 + (std::f64::consts::PI * x / (hw as f64 + 1.0)).cos());
                taps.push(Tap {
                    delay_samples: d,
                    gain: gain * sinc(x) * w,
                });
            }
        }
    };
    for (i, r) in scene.reflectors.iter().enumerate() {
        let d_tx = distance(r.position, tx);
        let d_mic = distance(r.position, mic);
        if d_tx < COINCIDENT_M || d_mic < COINCIDENT_M {
            return Err(Error::CoincidentReflector {
                index: i,
                position: r.position,
            });
        }
        let delay = round_trip_from_legs(d_tx, d_mic, c, sample_rate);
        push(delay, r.reflectivity / (d_tx * d_mic));
    }
    if opts.direct_path {
        let d = distance(tx, mic);
        if d >= COINCIDENT_M {
            push(d / c * sample_rate, 1.0 / d);
        }
    }
    let ir = ImpulseResponse::from_unsorted(taps);
    if ir.taps.first().is_some_and(|t| t.delay_samples < 0) {
        return Err(Error::invalid("fractional-delay kernel reaches before time zero"));
    }
    Ok(ir)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Per-microphone received signals, `samples[mic][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingSet {
    samples: Vec<Vec<f64>>,
    sample_rate: f64,
    geometry: Option<ArrayGeometry>,
    scene: Option<Scene>,
}

impl RecordingSet {
    pub fn from_samples(samples: Vec<Vec<f64>>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() || samples[0].is_empty() {
            return Err(Error::invalid("recording set is empty"));
        }
        let len = samples[0].len();
        if samples.iter().any(|r| r.len() != len) {
            return Err(Error::DimensionMismatch("recordings differ in length".into()));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("recording contains non-finite samples"));
        }
        Ok(Self {
            samples,
            sample_rate,
            geometry: None,
            scene: None,
        })
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn num_mics(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn geometry(&self) -> Option<&ArrayGeometry> {
        self.geometry.as_ref()
    }

    pub fn scene(&self) -> Option<&Scene> {
        self.scene.as_ref()
    }
}

pub fn synthesize_recordings(w: &WaveformSet, g: &ArrayGeometry, s: &Scene, seed: u64) -> Result<RecordingSet> {
    synthesize_recordings_with(w, g, s, seed, &SynthesisOptions::default())
}

pub fn synthesize_recordings_with(
    w: &WaveformSet,
    g: &ArrayGeometry,
    s: &Scene,
    seed: u64,
    opts: &SynthesisOptions,
) -> Result<RecordingSet> {
    let all: Vec<usize> = (0..g.num_tx()).collect();
    synthesize_active(w, g, s, seed, opts, &all)
}

/// Received signals with only the listed transmitters active. Noise streams
/// are keyed by microphone index, so the noise does not depend on which
/// transmitters are active.
pub fn synthesize_active(
    w: &WaveformSet,
    g: &ArrayGeometry,
    s: &Scene,
    seed: u64,
    opts: &SynthesisOptions,
    active_tx: &[usize],
) -> Result<RecordingSet> {
    g.validate()?;
    s.validate()?;
    if w.num_channels() != g.num_tx() {
        return Err(Error::DimensionMismatch(format!(
            "{} waveform channels for {} transmitters",
            w.num_channels(),
            g.num_tx()
        )));
    }
    if let Some(&bad) = active_tx.iter().find(|&&i| i >= g.num_tx()) {
        return Err(Error::invalid(format!("transmitter {bad} out of range")));
    }
    let fs = w.sample_rate();
    let n = w.num_samples();

    // responses[mic][tx]
    let responses: Vec<Vec<ImpulseResponse>> = g
        .mic_positions
        .par_iter()
        .map(|&mic| {
            active_tx
                .iter()
                .map(|&i| impulse_response_with(g.tx_positions[i], mic, s, fs, opts))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let max_delay = responses
        .iter()
        .flatten()
        .filter_map(ImpulseResponse::max_delay)
        .max()
        .unwrap_or(0)
        .max(0) as usize;
    let len = n + max_delay;

    let noise = if s.noise_rms > 0.0 {
        Some(Normal::new(0.0, s.noise_rms).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };

    let samples = responses
        .par_iter()
        .enumerate()
        .map(|(k, per_tx)| {
            let mut out = vec![0.0; len];
            for (&i, ir) in active_tx.iter().zip(per_tx) {
                let x = w.channel(i);
                for tap in &ir.taps {
                    let d = tap.delay_samples as usize;
                    for (o, &v) in out[d..d + n].iter_mut().zip(x) {
                        *o += tap.gain * v;
                    }
                }
            }
            if let Some(dist) = &noise {
                let mut rng = keyed_rng(seed, Domain::Noise, k as u64);
                for o in out.iter_mut() {
                    *o += dist.sample(&mut rng);
                }
            }
            out
        })
        .collect();

    Ok(RecordingSet {
        samples,
        sample_rate: fs,
        geometry: Some(g.clone()),
        scene: Some(s.clone()),
    })
}
