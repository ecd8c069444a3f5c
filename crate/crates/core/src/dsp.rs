//! FFT plumbing and linear cross-correlation.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (energy(x) / x.len() as f64).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Frequency of DFT bin `k` folded onto `[0, fs/2]`.
pub fn folded_bin_frequency(k: usize, n: usize, sample_rate: f64) -> f64 {
    let k = k.min(n - k);
    k as f64 * sample_rate / n as f64
}

/// Forward / inverse plans of a single transform size.
#[derive(Clone)]
pub struct FftPair {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    pub fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Zero-padded forward transform of a real sequence.
    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        assert!(x.len() <= self.size, "input longer than FFT size");
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform (scaled by 1/size) keeping the real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        assert_eq!(spectrum.len(), self.size);
        self.inverse.process(&mut spectrum);
        let scale = 1.0 / self.size as f64;
        spectrum.into_iter().map(|c| c.re * scale).collect()
    }
}

/// Spectrum of a reference sequence prepared for repeated correlation
/// against signals sharing one FFT size.
pub struct CorrelationTemplate {
    len: usize,
    conj_spectrum: Vec<Complex64>,
}

impl CorrelationTemplate {
    pub fn new(plan: &FftPair, template: &[f64]) -> Self {
        let conj_spectrum = plan.forward_real(template).into_iter().map(|c| c.conj()).collect();
        Self {
            len: template.len(),
            conj_spectrum,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Correlate a pre-transformed signal with a template, returning lags
/// `first_lag..first_lag + count` where `c[l] = sum_n signal[n + l] * template[n]`.
///
/// The FFT size must be at least `signal_len + template_len - 1` for the
/// requested lags to be free of circular wrap-around.
pub fn correlate_spectra(
    plan: &FftPair,
    signal_spectrum: &[Complex64],
    template: &CorrelationTemplate,
    first_lag: i64,
    count: usize,
) -> Vec<f64> {
    let product: Vec<Complex64> = signal_spectrum
        .iter()
        .zip(&template.conj_spectrum)
        .map(|(a, b)| a * b)
        .collect();
    let circ = plan.inverse_real(product);
    let size = plan.size() as i64;
    (0..count as i64)
        .map(|i| circ[(first_lag + i).rem_euclid(size) as usize])
        .collect()
}

/// Full linear cross-correlation `c[l] = sum_n a[n + l] * b[n]`.
///
/// Output index `j` holds lag `j - (b.len() - 1)`, so the output spans lags
/// `-(b.len() - 1) ..= a.len() - 1`. Empty when either input is empty.
pub fn xcorr_full(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let plan = FftPair::new(out_len.next_power_of_two());
    let spec = plan.forward_real(a);
    let tmpl = CorrelationTemplate::new(&plan, b);
    correlate_spectra(&plan, &spec, &tmpl, -(b.len() as i64 - 1), out_len)
}
