//! Matched-filter bank and channel separation.
//!
//! `y_ik` is the linear cross-correlation of microphone `k`'s recording with
//! transmitter `i`'s sequence, divided by that sequence's energy, so a unit
//! tap at delay `d` shows up as a peak of height 1 at lag `d`.

use rayon::prelude::*;
use serde::Serialize;

use crate::dsp::{self, CorrelationTemplate, FftPair};
use crate::error::{Error, Result};
use crate::scene::RecordingSet;
use crate::transducer::{apply_response, FrequencyResponse};
use crate::waveform::WaveformSet;

/// `values[(tx * num_mics + mic) * num_lags + j]` holds lag `j - lag_zero_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfBankOutput {
    values: Vec<f64>,
    num_tx: usize,
    num_mics: usize,
    num_lags: usize,
    lag_zero_index: usize,
    sample_rate: f64,
}

impl MfBankOutput {
    /// Assemble from explicit traces, `traces[tx][mic][j]`.
    pub fn from_traces(traces: Vec<Vec<Vec<f64>>>, lag_zero_index: usize, sample_rate: f64) -> Result<Self> {
        let num_tx = traces.len();
        let num_mics = traces.first().map_or(0, Vec::len);
        let num_lags = traces.first().and_then(|t| t.first()).map_or(0, Vec::len);
        if num_tx == 0 || num_mics == 0 || num_lags == 0 {
            return Err(Error::invalid("matched-filter output is empty"));
        }
        if traces
            .iter()
            .any(|t| t.len() != num_mics || t.iter().any(|l| l.len() != num_lags))
        {
            return Err(Error::DimensionMismatch("ragged matched-filter traces".into()));
        }
        if lag_zero_index >= num_lags {
            return Err(Error::invalid("lag_zero_index outside the lag axis"));
        }
        let values: Vec<f64> = traces.into_iter().flatten().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matched-filter output contains non-finite values"));
        }
        Ok(Self {
            values,
            num_tx,
            num_mics,
            num_lags,
            lag_zero_index,
            sample_rate,
        })
    }

    pub fn num_tx(&self) -> usize {
        self.num_tx
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn num_lags(&self) -> usize {
        self.num_lags
    }

    pub fn lag_zero_index(&self) -> usize {
        self.lag_zero_index
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Smallest and largest representable lag.
    pub fn lag_range(&self) -> (i64, i64) {
        let lo = -(self.lag_zero_index as i64);
        (lo, lo + self.num_lags as i64 - 1)
    }

    pub fn trace(&self, tx: usize, mic: usize) -> &[f64] {
        let start = (tx * self.num_mics + mic) * self.num_lags;
        &self.values[start..start + self.num_lags]
    }

    pub fn at_lag(&self, tx: usize, mic: usize, lag: i64) -> Option<f64> {
        let j = lag + self.lag_zero_index as i64;
        if j < 0 || j >= self.num_lags as i64 {
            return None;
        }
        Some(self.trace(tx, mic)[j as usize])
    }

    /// Lag of the largest |y| in one trace (first on ties).
    pub fn peak_lag(&self, tx: usize, mic: usize) -> i64 {
        let trace = self.trace(tx, mic);
        let mut best = 0;
        for (j, v) in trace.iter().enumerate() {
            if v.abs() > trace[best].abs() {
                best = j;
            }
        }
        best as i64 - self.lag_zero_index as i64
    }
}

/// Matched-filter bank keeping lags `0 ..= L - 1` of each recording.
pub fn matched_filter_bank(r: &RecordingSet, w: &WaveformSet) -> Result<MfBankOutput> {
    matched_filter_bank_lags(r, w, 0, r.len() as i64 - 1)
}

/// Matched-filter bank over lags `min_lag ..= max_lag`, which must lie within
/// the linear-correlation support `-(N - 1) ..= L - 1`.
pub fn matched_filter_bank_lags(r: &RecordingSet, w: &WaveformSet, min_lag: i64, max_lag: i64) -> Result<MfBankOutput> {
    if r.sample_rate() != w.sample_rate() {
        return Err(Error::SampleRateMismatch {
            left: r.sample_rate(),
            right: w.sample_rate(),
        });
    }
    if r.is_empty() || r.num_mics() == 0 || w.num_channels() == 0 {
        return Err(Error::invalid("matched filter needs non-empty inputs"));
    }
    let l = r.len() as i64;
    let n = w.num_samples() as i64;
    if min_lag > 0 || min_lag < -(n - 1) || max_lag < 0 || max_lag > l - 1 {
        return Err(Error::invalid(format!(
            "lag window [{min_lag}, {max_lag}] outside [{}, {}] or excluding lag 0",
            -(n - 1),
            l - 1
        )));
    }
    let energies: Vec<f64> = w.samples().iter().map(|x| dsp::energy(x)).collect();
    if let Some(i) = energies.iter().position(|&e| e <= 0.0) {
        return Err(Error::ZeroEnergy(format!("transmit channel {i}")));
    }

    let plan = FftPair::new((r.len() + w.num_samples() - 1).next_power_of_two());
    let rec_spectra: Vec<_> = r.samples().par_iter().map(|x| plan.forward_real(x)).collect();
    let templates: Vec<_> = w
        .samples()
        .par_iter()
        .map(|x| CorrelationTemplate::new(&plan, x))
        .collect();
    let num_lags = (max_lag - min_lag + 1) as usize;
    let num_mics = r.num_mics();
    let num_tx = w.num_channels();

    let mut values = vec![0.0; num_tx * num_mics * num_lags];
    values.par_chunks_mut(num_lags).enumerate().for_each(|(pair, out)| {
        let (i, k) = (pair / num_mics, pair % num_mics);
        let y = dsp::correlate_spectra(&plan, &rec_spectra[k], &templates[i], min_lag, num_lags);
        let inv = 1.0 / energies[i];
        for (o, v) in out.iter_mut().zip(y) {
            *o = v * inv;
        }
    });

    Ok(MfBankOutput {
        values,
        num_tx,
        num_mics,
        num_lags,
        lag_zero_index: (-min_lag) as usize,
        sample_rate: r.sample_rate(),
    })
}

/// Pairwise peak normalized cross-correlation between transmit sequences, dB.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationMatrix {
    values_db: Vec<Vec<f64>>,
}

impl SeparationMatrix {
    pub fn values_db(&self) -> &[Vec<f64>] {
        &self.values_db
    }

    pub fn size(&self) -> usize {
        self.values_db.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values_db[i][j]
    }

    pub fn mean_off_diagonal_db(&self) -> f64 {
        let c = self.size();
        let mut sum = 0.0;
        for (i, row) in self.values_db.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i != j {
                    sum += v;
                }
            }
        }
        sum / (c * (c - 1)) as f64
    }

    pub fn max_off_diagonal_db(&self) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for (i, row) in self.values_db.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i != j {
                    best = best.max(v);
                }
            }
        }
        best
    }
}

pub fn separation_matrix(w: &WaveformSet) -> Result<SeparationMatrix> {
    let c = w.num_channels();
    if c < 2 {
        return Err(Error::invalid("need >= 2 channels for a separation matrix"));
    }
    let energies: Vec<f64> = w.samples().iter().map(|x| dsp::energy(x)).collect();
    if let Some(i) = energies.iter().position(|&e| e <= 0.0) {
        return Err(Error::ZeroEnergy(format!("channel {i}")));
    }
    let n = w.num_samples();
    let plan = FftPair::new((2 * n - 1).next_power_of_two());
    let spectra: Vec<_> = w.samples().par_iter().map(|x| plan.forward_real(x)).collect();
    let templates: Vec<_> = w
        .samples()
        .par_iter()
        .map(|x| CorrelationTemplate::new(&plan, x))
        .collect();

    let pairs: Vec<(usize, usize)> = (0..c).flat_map(|i| (i + 1..c).map(move |j| (i, j))).collect();
    let upper: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let xc = dsp::correlate_spectra(&plan, &spectra[i], &templates[j], -(n as i64 - 1), 2 * n - 1);
            let peak = xc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            20.0 * (peak / (energies[i] * energies[j]).sqrt()).log10()
        })
        .collect();

    let mut values_db = vec![vec![0.0; c]; c];
    for (&(i, j), &v) in pairs.iter().zip(&upper) {
        values_db[i][j] = v;
        values_db[j][i] = v;
    }
    Ok(SeparationMatrix { values_db })
}

pub fn separation_under_response(w: &WaveformSet, r: &FrequencyResponse) -> Result<SeparationMatrix> {
    separation_matrix(&apply_response(w, r)?)
}
