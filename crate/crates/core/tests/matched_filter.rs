mod common;

use mimosim_core::dsp;
use mimosim_core::matched_filter::*;
use mimosim_core::scene::*;
use mimosim_core::transducer::*;
use mimosim_core::waveform::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn set(spec: MultisineSpec) -> WaveformSet {
    generate_multisines(&spec).unwrap()
}

fn delayed(x: &[f64], d: usize, len: usize) -> Vec<f64> {
    let mut r = vec![0.0; len];
    r[d..d + x.len()].copy_from_slice(x);
    r
}

#[test]
fn fft_correlation_matches_direct_sum() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let na = rng.random_range(1..=512);
        let nb = rng.random_range(1..=512);
        let a: Vec<f64> = (0..na).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = dsp::xcorr_full(&a, &b);
        let slow = common::direct_xcorr(&a, &b);
        let rel = common::max_abs_diff(&fast, &slow) / common::max_abs(&slow);
        assert!(rel <= 1e-6, "{na}x{nb}: {rel}");
    }
}

#[test]
fn bank_traces_match_direct_correlation() {
    let w = set(MultisineSpec {
        num_channels: 2,
        num_samples: 256,
        seed: 4,
        ..MultisineSpec::default()
    });
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let recs: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..400).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let r = RecordingSet::from_samples(recs.clone(), w.sample_rate()).unwrap();
    let mf = matched_filter_bank_lags(&r, &w, -255, 399).unwrap();
    for i in 0..2 {
        let e = common::energy(w.channel(i));
        for (k, rec) in recs.iter().enumerate() {
            let slow: Vec<f64> = common::direct_xcorr(rec, w.channel(i)).iter().map(|v| v / e).collect();
            let rel = common::max_abs_diff(mf.trace(i, k), &slow) / common::max_abs(&slow);
            assert!(rel <= 1e-6);
        }
    }
}

#[test]
fn integer_delays_are_recovered_exactly() {
    let w = set(MultisineSpec {
        num_channels: 1,
        num_samples: 512,
        seed: 9,
        ..MultisineSpec::default()
    });
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
    for _ in 0..100 {
        let d = rng.random_range(0..=2000usize);
        let rec = delayed(w.channel(0), d, 512 + 2000);
        let r = RecordingSet::from_samples(vec![rec], w.sample_rate()).unwrap();
        let mf = matched_filter_bank(&r, &w).unwrap();
        assert_eq!(mf.peak_lag(0, 0), d as i64);
        assert!((mf.at_lag(0, 0, d as i64).unwrap() - 1.0).abs() < 1e-9);
        // the time-domain oracle agrees on the argmax
        let slow = common::direct_xcorr(&r.samples()[0], w.channel(0));
        let argmax = slow
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap()
            .0;
        assert_eq!(argmax as i64 - 511, d as i64);
    }
}

#[test]
fn interference_from_other_channels_is_not_removed() {
    let w = set(MultisineSpec {
        num_channels: 2,
        num_samples: 1024,
        seed: 2,
        ..MultisineSpec::default()
    });
    let r = RecordingSet::from_samples(vec![w.channel(1).to_vec()], w.sample_rate()).unwrap();
    let mf = matched_filter_bank(&r, &w).unwrap();
    // output of filter 0 is the plain normalized cross-correlation
    let xc = common::direct_xcorr(w.channel(1), w.channel(0));
    let e0 = common::energy(w.channel(0));
    for lag in [0i64, 5, 100] {
        let want = xc[(lag + 1023) as usize] / e0;
        assert!((mf.at_lag(0, 0, lag).unwrap() - want).abs() < 1e-9);
    }
}

// Processing gain. Input SNR is signal power over noise power in the
// recording; output SNR is peak^2 over the filtered-noise variance, taken on
// full-overlap lags only. White-noise theory gives 10 log10(N) = 39.13 dB at
// N = 8192; 20 Monte Carlo seeds gave 38.66 .. 39.93 dB.
const PROCESSING_GAIN_MIN_DB: f64 = 37.9;

#[test]
fn matched_filter_processing_gain() {
    let w = set(MultisineSpec {
        num_channels: 1,
        seed: 31,
        ..MultisineSpec::default()
    });
    let n = w.num_samples();
    let sigma = 3.0;
    for seed in 0..4 {
        let sig = RecordingSet::from_samples(vec![delayed(w.channel(0), 500, n + 1000)], w.sample_rate()).unwrap();
        let g = ArrayGeometry::new(vec![[0.0; 3]], vec![[0.0; 3]]).unwrap();
        let silent = WaveformSet::from_samples(vec![vec![0.0; n + 1000]], w.sample_rate()).unwrap();
        let noise = synthesize_recordings(&silent, &g, &Scene::default().with_noise(sigma), seed).unwrap();
        let mf_sig = matched_filter_bank(&sig, &w).unwrap();
        let mf_noise = matched_filter_bank(&noise, &w).unwrap();
        let peak = mf_sig.at_lag(0, 0, 500).unwrap();
        let trace = &mf_noise.trace(0, 0)[..=1000];
        let var = trace.iter().map(|v| v * v).sum::<f64>() / trace.len() as f64;
        let snr_in = 10.0 * (1.0 / (sigma * sigma)).log10();
        let snr_out = 10.0 * (peak * peak / var).log10();
        assert!(snr_out > snr_in);
        assert!(snr_out - snr_in >= PROCESSING_GAIN_MIN_DB, "gain {}", snr_out - snr_in);
    }
}

#[test]
fn delays_survive_zero_db_snr() {
    let g = ArrayGeometry::new(vec![[0.0; 3]], vec![[0.0; 3]]).unwrap();
    let mut hits = 0;
    for s in 0..100u64 {
        let w = set(MultisineSpec {
            num_channels: 1,
            seed: s,
            ..MultisineSpec::default().with_band(BandPreset::Narrowband)
        });
        let n = w.num_samples();
        let d = (s as usize * 37) % 2001;
        let silent = WaveformSet::from_samples(vec![vec![0.0; n + 2000]], w.sample_rate()).unwrap();
        let mut r = synthesize_recordings(&silent, &g, &Scene::default().with_noise(1.0), s + 1000)
            .unwrap()
            .samples()[0]
            .clone();
        r[d..d + n].iter_mut().zip(w.channel(0)).for_each(|(a, b)| *a += b);
        let rec = RecordingSet::from_samples(vec![r], w.sample_rate()).unwrap();
        hits += (matched_filter_bank(&rec, &w).unwrap().peak_lag(0, 0) == d as i64) as usize;
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn separation_is_scale_invariant() {
    let w = set(MultisineSpec {
        num_channels: 5,
        num_samples: 2048,
        seed: 12,
        ..MultisineSpec::default()
    });
    let a = separation_matrix(&w).unwrap();
    let b = separation_matrix(&w.scaled(-37.5)).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            assert!((a.get(i, j) - b.get(i, j)).abs() < 1e-9);
        }
    }
}

#[test]
fn separation_matches_direct_oracle() {
    let w = set(MultisineSpec {
        num_channels: 3,
        num_samples: 256,
        seed: 13,
        ..MultisineSpec::default()
    });
    let s = separation_matrix(&w).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            let xc = common::direct_xcorr(w.channel(i), w.channel(j));
            let e = (common::energy(w.channel(i)) * common::energy(w.channel(j))).sqrt();
            let want = 20.0 * (common::max_abs(&xc) / e).log10();
            assert!((s.get(i, j) - want).abs() < 1e-6);
        }
    }
}

#[test]
fn flat_response_leaves_separation_unchanged() {
    let w = set(MultisineSpec {
        num_channels: 6,
        num_samples: 2048,
        seed: 14,
        ..MultisineSpec::default()
    });
    let a = separation_matrix(&w).unwrap();
    let b = separation_under_response(&w, &ResponsePreset::Flat.response(w.sample_rate())).unwrap();
    for i in 0..6 {
        for j in 0..6 {
            assert!((a.get(i, j) - b.get(i, j)).abs() <= 1e-9);
        }
    }
}

#[test]
fn single_surviving_bin_collapses_separation() {
    let w = set(MultisineSpec {
        num_channels: 6,
        seed: 15,
        ..MultisineSpec::default()
    });
    let fs = w.sample_rate();
    let bin = |k: usize| k as f64 * fs / w.num_samples() as f64;
    // pass only bin 655 (~39.98 kHz); everything else sits at the floor
    let r = FrequencyResponse::new(
        vec![0.0, bin(654), bin(655), bin(656), fs / 2.0],
        vec![FLOOR_DB, FLOOR_DB, 0.0, FLOOR_DB, FLOOR_DB],
        None,
    )
    .unwrap();
    let s = separation_under_response(&w, &r).unwrap();
    for i in 0..6 {
        for j in 0..6 {
            assert!(s.get(i, j) >= -3.0, "({i},{j}) = {}", s.get(i, j));
        }
    }
}

#[test]
fn conamara_like_response_degrades_wideband_separation() {
    let w = set(MultisineSpec {
        seed: 16,
        ..MultisineSpec::default()
    });
    let flat = separation_matrix(&w).unwrap().mean_off_diagonal_db();
    let dipped = separation_under_response(&w, &ResponsePreset::ConamaraLike.response(w.sample_rate()))
        .unwrap()
        .mean_off_diagonal_db();
    assert!(dipped > flat, "{dipped} <= {flat}");
}

// 20-seed Monte Carlo (seeds 0..20, C = 32, N = 8192, fs = 500 kHz) of the
// mean off-diagonal separation: narrowband -12.07 .. -11.72 dB, wideband
// -22.06 .. -21.92 dB.
#[test]
fn narrowband_separation_sits_in_monte_carlo_band() {
    for seed in [0u64, 7] {
        let w = set(MultisineSpec {
            seed,
            ..MultisineSpec::default().with_band(BandPreset::Narrowband)
        });
        let m = separation_matrix(&w).unwrap().mean_off_diagonal_db();
        assert!((-12.6..=-11.2).contains(&m), "seed {seed}: {m}");
    }
}

#[test]
fn shrinking_the_band_worsens_separation() {
    for seed in [1u64, 2, 3] {
        let wide = set(MultisineSpec {
            seed,
            ..MultisineSpec::default()
        });
        let narrow = set(MultisineSpec {
            seed,
            ..MultisineSpec::default().with_band(BandPreset::Narrowband)
        });
        let mw = separation_matrix(&wide).unwrap().mean_off_diagonal_db();
        let mn = separation_matrix(&narrow).unwrap().mean_off_diagonal_db();
        assert!(mn > mw, "seed {seed}: narrow {mn} vs wide {mw}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn matrix_invariants_hold(seed in any::<u64>(), channels in 2usize..6) {
        let w = set(MultisineSpec { num_channels: channels, num_samples: 1024, seed, ..MultisineSpec::default() });
        let s = separation_matrix(&w).unwrap();
        for i in 0..channels {
            prop_assert_eq!(s.get(i, i), 0.0);
            for j in 0..channels {
                prop_assert!((s.get(i, j) - s.get(j, i)).abs() <= 1e-9);
                if i != j {
                    prop_assert!(s.get(i, j) < 0.0);
                }
            }
        }
    }

    #[test]
    fn scaled_recording_scales_peak(a in -20.0f64..20.0, seed in any::<u64>()) {
        prop_assume!(a.abs() > 1e-3);
        let w = set(MultisineSpec { num_channels: 1, num_samples: 512, seed, ..MultisineSpec::default() });
        let rec: Vec<f64> = w.channel(0).iter().map(|v| a * v).collect();
        let r = RecordingSet::from_samples(vec![rec], w.sample_rate()).unwrap();
        let mf = matched_filter_bank(&r, &w).unwrap();
        prop_assert_eq!(mf.peak_lag(0, 0), 0);
        prop_assert!((mf.at_lag(0, 0, 0).unwrap() - a).abs() < 1e-9 * a.abs().max(1.0));
    }
}
