//! Random-phase multisine excitation.
//!
//! Every channel is a sum of cosines on exact DFT bins inside the transmit
//! band, so a realization is periodic in `num_samples` and carries no energy
//! outside the band. Phases are drawn per channel from a keyed stream.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, FftPair};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Domain};

/// Named transmit bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandPreset {
    /// 20-80 kHz, the band the excitation firmware filters to.
    Wideband,
    /// 38-42 kHz around the transducer resonance.
    Narrowband,
}

impl BandPreset {
    pub fn edges(self) -> (f64, f64) {
        match self {
            BandPreset::Wideband => (20_000.0, 80_000.0),
            BandPreset::Narrowband => (38_000.0, 42_000.0),
        }
    }
}

impl std::str::FromStr for BandPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wideband" => Ok(BandPreset::Wideband),
            "narrowband" => Ok(BandPreset::Narrowband),
            other => Err(Error::invalid(format!(
                "unknown band preset `{other}` (expected wideband or narrowband)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultisineSpec {
    pub num_channels: usize,
    pub num_samples: usize,
    pub sample_rate: f64,
    pub band_low: f64,
    pub band_high: f64,
    /// Per-component amplitudes; `None` means flat (all 1.0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for MultisineSpec {
    fn default() -> Self {
        let (band_low, band_high) = BandPreset::Wideband.edges();
        Self {
            num_channels: 32,
            num_samples: 8192,
            sample_rate: 500_000.0,
            band_low,
            band_high,
            amplitudes: None,
            seed: 0,
        }
    }
}

impl MultisineSpec {
    pub fn with_band(mut self, band: BandPreset) -> Self {
        let (lo, hi) = band.edges();
        self.band_low = lo;
        self.band_high = hi;
        self
    }

    /// DFT bin indices `k` with `band_low < k * fs / N < band_high`.
    pub fn component_bins(&self) -> Vec<usize> {
        let n = self.num_samples as f64;
        (1..=self.num_samples / 2)
            .filter(|&k| {
                let f = k as f64 * self.sample_rate / n;
                f > self.band_low && f < self.band_high
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_channels < 1 {
            return Err(Error::invalid("num_channels must be at least 1"));
        }
        if self.num_samples < 2 || !self.num_samples.is_power_of_two() {
            return Err(Error::invalid(format!(
                "num_samples must be a power of two >= 2, got {}",
                self.num_samples
            )));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::invalid("sample_rate must be positive and finite"));
        }
        if !(self.band_low > 0.0 && self.band_low < self.band_high && self.band_high < self.sample_rate / 2.0) {
            return Err(Error::invalid(format!(
                "band must satisfy 0 < low < high < fs/2, got [{}, {}] at fs={}",
                self.band_low, self.band_high, self.sample_rate
            )));
        }
        let bins = self.component_bins();
        if bins.is_empty() {
            return Err(Error::EmptyBand {
                low: self.band_low,
                high: self.band_high,
            });
        }
        if let Some(a) = &self.amplitudes {
            if a.len() != bins.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} amplitudes given for {} in-band components",
                    a.len(),
                    bins.len()
                )));
            }
            if let Some(bad) = a.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::invalid(format!(
                    "amplitudes must be finite and non-negative, got {bad}"
                )));
            }
        }
        Ok(())
    }

    fn amplitudes_or_flat(&self, count: usize) -> Vec<f64> {
        self.amplitudes.clone().unwrap_or_else(|| vec![1.0; count])
    }
}

/// Per-channel excitation, `samples[channel][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformSet {
    samples: Vec<Vec<f64>>,
    sample_rate: f64,
    spec: Option<MultisineSpec>,
}

impl WaveformSet {
    /// Wrap arbitrary equal-length rows.
    pub fn from_samples(samples: Vec<Vec<f64>>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() || samples[0].is_empty() {
            return Err(Error::invalid("waveform set must have at least one non-empty channel"));
        }
        let n = samples[0].len();
        if samples.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("channels differ in length".into()));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("waveform contains non-finite samples"));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::invalid("sample_rate must be positive and finite"));
        }
        Ok(Self {
            samples,
            sample_rate,
            spec: None,
        })
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.samples[c]
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn spec(&self) -> Option<&MultisineSpec> {
        self.spec.as_ref()
    }

    pub fn num_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn num_samples(&self) -> usize {
        self.samples[0].len()
    }

    /// Keep only the listed channels, in the given order.
    pub fn select(&self, channels: &[usize]) -> Result<Self> {
        let rows = channels
            .iter()
            .map(|&c| {
                self.samples
                    .get(c)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("channel {c} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            samples: rows,
            sample_rate: self.sample_rate,
            spec: self.spec.clone(),
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map_rows(|row| row.iter().map(|v| v * factor).collect())
    }

    pub(crate) fn map_rows(&self, f: impl Fn(&[f64]) -> Vec<f64> + Sync) -> Self {
        Self {
            samples: self.samples.par_iter().map(|r| f(r)).collect(),
            sample_rate: self.sample_rate,
            spec: self.spec.clone(),
        }
    }
}

/// Uniform phases in `[0, 2pi)` for every channel, one stream per channel.
pub fn draw_phases(spec: &MultisineSpec) -> Vec<Vec<f64>> {
    let k = spec.component_bins().len();
    (0..spec.num_channels)
        .map(|c| {
            let mut rng = keyed_rng(spec.seed, Domain::Phase, c as u64);
            (0..k).map(|_| rng.random::<f64>() * TAU).collect()
        })
        .collect()
}

/// Synthesize with caller-supplied phases (`phases[channel][component]`),
/// then normalize each row to unit RMS.
pub fn synthesize(spec: &MultisineSpec, phases: &[Vec<f64>]) -> Result<WaveformSet> {
    spec.validate()?;
    let bins = spec.component_bins();
    if phases.len() != spec.num_channels || phases.iter().any(|p| p.len() != bins.len()) {
        return Err(Error::DimensionMismatch(format!(
            "expected {} x {} phases",
            spec.num_channels,
            bins.len()
        )));
    }
    if phases.iter().flatten().any(|p| !p.is_finite()) {
        return Err(Error::invalid("phases must be finite"));
    }
    let amps = spec.amplitudes_or_flat(bins.len());
    if amps.iter().all(|&a| a == 0.0) {
        return Err(Error::ZeroEnergy("all component amplitudes are zero".into()));
    }
    let n = spec.num_samples;
    let plan = FftPair::new(n);
    let samples = phases
        .par_iter()
        .map(|row| {
            let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
            for ((&k, &a), &phi) in bins.iter().zip(&amps).zip(row) {
                spectrum[k] = Complex64::from_polar(a, phi);
            }
            // inverse_real scales by 1/N; undo it so the row is the plain cosine sum
            let mut x = plan.inverse_real(spectrum);
            let scale = n as f64;
            x.iter_mut().for_each(|v| *v *= scale);
            let r = dsp::rms(&x);
            x.iter_mut().for_each(|v| *v /= r);
            x
        })
        .collect();
    Ok(WaveformSet {
        samples,
        sample_rate: spec.sample_rate,
        spec: Some(spec.clone()),
    })
}

pub fn generate_multisines(spec: &MultisineSpec) -> Result<WaveformSet> {
    spec.validate()?;
    synthesize(spec, &draw_phases(spec))
}

/// Fraction of one sequence's DFT energy in `[low, high]` (inclusive).
pub fn channel_band_energy_fraction(x: &[f64], sample_rate: f64, low: f64, high: f64) -> Result<f64> {
    let (inband, total) = band_energies(x, sample_rate, low, high)?;
    if total <= 0.0 {
        return Err(Error::ZeroEnergy("signal has zero energy".into()));
    }
    Ok(inband / total)
}

/// Fraction of the whole set's spectral energy in `[low, high]`.
pub fn band_energy_fraction(w: &WaveformSet, low: f64, high: f64) -> Result<f64> {
    let mut inband = 0.0;
    let mut total = 0.0;
    for row in w.samples() {
        let (i, t) = band_energies(row, w.sample_rate(), low, high)?;
        inband += i;
        total += t;
    }
    if total <= 0.0 {
        return Err(Error::ZeroEnergy("waveform set has zero energy".into()));
    }
    Ok(inband / total)
}

fn band_energies(x: &[f64], fs: f64, low: f64, high: f64) -> Result<(f64, f64)> {
    if !(low >= 0.0 && low < high && high <= fs / 2.0) {
        return Err(Error::invalid(format!(
            "band [{low}, {high}] must satisfy 0 <= low < high <= fs/2 = {}",
            fs / 2.0
        )));
    }
    let n = x.len();
    if n == 0 {
        return Err(Error::ZeroEnergy("empty signal".into()));
    }
    let spectrum = FftPair::new(n).forward_real(x);
    let mut inband = 0.0;
    let mut total = 0.0;
    for (k, c) in spectrum.iter().enumerate() {
        let e = c.norm_sqr();
        total += e;
        let f = dsp::folded_bin_frequency(k, n, fs);
        if f >= low && f <= high {
            inband += e;
        }
    }
    Ok((inband, total))
}
