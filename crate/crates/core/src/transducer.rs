//! Emitter frequency response: a parametric resonance-with-dips stand-in for
//! a measured transducer curve, CSV loading, and frequency-domain application
//! to transmit waveforms.

use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::FftPair;
use crate::error::{Error, Result};
use crate::waveform::WaveformSet;

/// Attenuation used in place of -inf dB.
pub const FLOOR_DB: f64 = -300.0;

/// Quality factor of each spectral dip; the dip's -3 dB-in-dB half width is
/// `f_dip / (2 * DIP_Q)`.
pub const DIP_Q: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    freqs: Vec<f64>,
    magnitude_db: Vec<f64>,
    phase_rad: Vec<f64>,
}

impl FrequencyResponse {
    pub fn new(freqs: Vec<f64>, magnitude_db: Vec<f64>, phase_rad: Option<Vec<f64>>) -> Result<Self> {
        let phase_rad = phase_rad.unwrap_or_else(|| vec![0.0; freqs.len()]);
        if freqs.len() < 2 {
            return Err(Error::invalid("frequency response needs at least two grid points"));
        }
        if magnitude_db.len() != freqs.len() || phase_rad.len() != freqs.len() {
            return Err(Error::DimensionMismatch(
                "freqs, magnitude_db and phase_rad must have equal length".into(),
            ));
        }
        if freqs[0] < 0.0
            || freqs
                .windows(2)
                .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::invalid(
                "frequency grid must be non-negative and strictly increasing",
            ));
        }
        if freqs
            .iter()
            .chain(&magnitude_db)
            .chain(&phase_rad)
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("frequency response values must be finite"));
        }
        Ok(Self {
            freqs,
            magnitude_db,
            phase_rad,
        })
    }

    /// 0 dB, zero phase over `[0, max_freq]`.
    pub fn flat(max_freq: f64) -> Self {
        Self::new(vec![0.0, max_freq], vec![0.0, 0.0], None).expect("valid flat response")
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn magnitude_db(&self) -> &[f64] {
        &self.magnitude_db
    }

    pub fn phase_rad(&self) -> &[f64] {
        &self.phase_rad
    }

    /// Linear interpolation of (dB, phase) with flat extrapolation past the
    /// grid ends.
    pub fn interpolate(&self, f: f64) -> (f64, f64) {
        let last = self.freqs.len() - 1;
        if f <= self.freqs[0] {
            return (self.magnitude_db[0], self.phase_rad[0]);
        }
        if f >= self.freqs[last] {
            return (self.magnitude_db[last], self.phase_rad[last]);
        }
        let hi = self.freqs.partition_point(|&g| g <= f);
        let lo = hi - 1;
        let t = (f - self.freqs[lo]) / (self.freqs[hi] - self.freqs[lo]);
        let lerp = |a: &[f64]| a[lo] + t * (a[hi] - a[lo]);
        (lerp(&self.magnitude_db), lerp(&self.phase_rad))
    }

    pub fn complex_gain(&self, f: f64) -> Complex64 {
        let (db, phase) = self.interpolate(f);
        Complex64::from_polar(10f64.powf(db / 20.0), phase)
    }
}

/// Peak-normalized second-order resonance magnitude, linear.
fn resonance_gain(f: f64, center: f64, q: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let detune = f / center - center / f;
    1.0 / (1.0 + q * q * detune * detune).sqrt()
}

fn dip_db(f: f64, dip_freq: f64, depth_db: f64) -> f64 {
    let half_width = dip_freq / (2.0 * DIP_Q);
    let x = (f - dip_freq) / half_width;
    -depth_db / (1.0 + x * x)
}

/// Resonance at `center` with quality factor `q_factor`, with Lorentzian
/// (in dB) dips of the given depths, sampled on `grid`.
pub fn parametric_response(
    center: f64,
    q_factor: f64,
    dip_freqs: &[f64],
    dip_depths_db: &[f64],
    grid: &[f64],
) -> Result<FrequencyResponse> {
    if grid.is_empty() {
        return Err(Error::invalid("frequency grid is empty"));
    }
    if !(q_factor > 0.0 && q_factor.is_finite()) {
        return Err(Error::invalid(format!("q_factor must be positive, got {q_factor}")));
    }
    let max = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(center > 0.0 && center < max) {
        return Err(Error::invalid(format!(
            "resonance center {center} Hz must lie in (0, {max}) Hz"
        )));
    }
    if dip_freqs.len() != dip_depths_db.len() {
        return Err(Error::DimensionMismatch(
            "dip_freqs and dip_depths_db differ in length".into(),
        ));
    }
    let magnitude_db = grid
        .iter()
        .map(|&f| {
            let g = resonance_gain(f, center, q_factor);
            let base = if g > 0.0 { 20.0 * g.log10() } else { FLOOR_DB };
            let dips: f64 = dip_freqs
                .iter()
                .zip(dip_depths_db)
                .map(|(&fd, &d)| dip_db(f, fd, d))
                .sum();
            (base + dips).max(FLOOR_DB)
        })
        .collect();
    FrequencyResponse::new(grid.to_vec(), magnitude_db, None)
}

/// Named responses selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponsePreset {
    Flat,
    /// 40 kHz resonance, Q = 4, dips at 30 kHz (-15 dB) and 60 kHz (-20 dB).
    /// Placeholder shape, not measured data.
    ConamaraLike,
}

impl ResponsePreset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "flat" => Some(ResponsePreset::Flat),
            "conamara-like" => Some(ResponsePreset::ConamaraLike),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ResponsePreset::Flat => "flat",
            ResponsePreset::ConamaraLike => "conamara-like",
        }
    }

    /// Evaluate on a 50 Hz grid spanning `[0, sample_rate / 2]`.
    pub fn response(self, sample_rate: f64) -> FrequencyResponse {
        let nyquist = sample_rate / 2.0;
        match self {
            ResponsePreset::Flat => FrequencyResponse::flat(nyquist),
            ResponsePreset::ConamaraLike => {
                let steps = (nyquist / 50.0).floor() as usize;
                let mut grid: Vec<f64> = (0..=steps).map(|i| i as f64 * 50.0).collect();
                if *grid.last().unwrap() < nyquist {
                    grid.push(nyquist);
                }
                parametric_response(40_000.0, 4.0, &[30_000.0, 60_000.0], &[15.0, 20.0], &grid)
                    .expect("preset parameters are valid")
            }
        }
    }
}

/// Filter every channel by `r` in the frequency domain (circular, exact for
/// N-periodic excitation).
pub fn apply_response(w: &WaveformSet, r: &FrequencyResponse) -> Result<WaveformSet> {
    let fs = w.sample_rate();
    let top = *r.freqs().last().unwrap();
    // grid declared for a faster sampling rate than the waveforms use
    if top > fs / 2.0 * (1.0 + 1e-12) {
        return Err(Error::SampleRateMismatch {
            left: 2.0 * top,
            right: fs,
        });
    }
    let n = w.num_samples();
    let plan = FftPair::new(n);
    let gains: Vec<Complex64> = (0..n)
        .map(|k| {
            if k <= n / 2 {
                r.complex_gain(k as f64 * fs / n as f64)
            } else {
                r.complex_gain((n - k) as f64 * fs / n as f64).conj()
            }
        })
        .collect();
    Ok(w.map_rows(|row| {
        let mut spec = plan.forward_real(row);
        spec.par_iter_mut().zip(&gains).for_each(|(s, g)| *s *= g);
        plan.inverse_real(spec)
    }))
}

/// Read `freq_hz,mag_db[,phase_rad]` CSV.
pub fn load_response(path: impl AsRef<Path>) -> Result<FrequencyResponse> {
    let path = path.as_ref();
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_phase = match names.as_slice() {
        ["freq_hz", "mag_db"] => false,
        ["freq_hz", "mag_db", "phase_rad"] => true,
        _ => {
            return Err(parse_err(
                1,
                format!(
                    "expected header `freq_hz,mag_db[,phase_rad]`, got `{}`",
                    names.join(",")
                ),
            ))
        }
    };
    let mut freqs = Vec::new();
    let mut mags = Vec::new();
    let mut phases = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let record = record.map_err(|e| parse_err(row, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_err(
                row,
                format!("expected {} columns, found {}", headers.len(), record.len()),
            ));
        }
        let cell = |j: usize| -> Result<f64> {
            let s = &record[j];
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(row, format!("non-numeric value `{s}` in column {}", names[j])))
        };
        let f = cell(0)?;
        if let Some(&prev) = freqs.last() {
            if f <= prev {
                return Err(parse_err(row, format!("frequency {f} not above previous {prev}")));
            }
        }
        freqs.push(f);
        mags.push(cell(1)?);
        if has_phase {
            phases.push(cell(2)?);
        }
    }
    FrequencyResponse::new(freqs, mags, has_phase.then_some(phases))
}
