//! Independent reference implementations used as test oracles. Nothing here
//! goes through the FFT paths under test.

#![allow(dead_code)]

use std::f64::consts::TAU;

/// `c[l] = sum_n a[n + l] b[n]` for `l` in `-(b.len()-1) ..= a.len()-1`,
/// by direct summation.
pub fn direct_xcorr(a: &[f64], b: &[f64]) -> Vec<f64> {
    let lo = -(b.len() as i64 - 1);
    let hi = a.len() as i64 - 1;
    (lo..=hi)
        .map(|l| {
            b.iter()
                .enumerate()
                .filter_map(|(n, &bv)| {
                    let i = n as i64 + l;
                    (i >= 0 && (i as usize) < a.len()).then(|| a[i as usize] * bv)
                })
                .sum()
        })
        .collect()
}

/// Linear convolution of `x` with a kernel given as sparse `(delay, gain)`.
pub fn sparse_convolve(x: &[f64], taps: &[(usize, f64)], out_len: usize) -> Vec<f64> {
    let mut y = vec![0.0; out_len];
    for n in 0..out_len {
        for &(d, g) in taps {
            if n >= d && n - d < x.len() {
                y[n] += g * x[n - d];
            }
        }
    }
    y
}

/// Brute-force count of DFT bins strictly inside `(low, high)`.
pub fn count_bins(n: usize, fs: f64, low: f64, high: f64) -> usize {
    let mut count = 0;
    for k in 0..n {
        let f = k as f64 * fs / n as f64;
        if f > low && f < high && k <= n / 2 {
            count += 1;
        }
    }
    count
}

/// Naive O(N^2) DFT energy fraction in `[low, high]`, folded to `[0, fs/2]`.
pub fn naive_band_fraction(x: &[f64], fs: f64, low: f64, high: f64) -> f64 {
    let n = x.len();
    let mut inband = 0.0;
    let mut total = 0.0;
    for k in 0..n {
        let (mut re, mut im) = (0.0, 0.0);
        for (t, &v) in x.iter().enumerate() {
            let ang = -TAU * (k * t % n) as f64 / n as f64;
            re += v * ang.cos();
            im += v * ang.sin();
        }
        let e = re * re + im * im;
        total += e;
        let f = k.min(n - k) as f64 * fs / n as f64;
        if f >= low && f <= high {
            inband += e;
        }
    }
    inband / total
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
