//! Delay-and-sum imaging from matched-filter outputs, and image metrics.
//!
//! A pixel's value is the magnitude of the coherent sum, over the selected
//! transmitter/microphone pairs, of each pair's matched-filter output at the
//! pixel's round-trip delay.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matched_filter::{matched_filter_bank, MfBankOutput};
use crate::scene::{distance, round_trip_from_legs, synthesize_recordings, ArrayGeometry, Scene, Vec3};
use crate::waveform::WaveformSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageGrid {
    /// Position of pixel (0, 0).
    pub origin: Vec3,
    pub axis_u: Vec3,
    pub axis_v: Vec3,
    /// Distance from the first to the last pixel centre along each axis.
    pub extent_u: f64,
    pub extent_v: f64,
    pub nu: usize,
    pub nv: usize,
}

impl Default for ImageGrid {
    /// 64 x 64 pixels over 0.5 x 0.5 m in the z = 0.5 m plane, centred on the
    /// array axis.
    fn default() -> Self {
        Self::plane_at_z(0.5, 0.5, 64)
    }
}

impl ImageGrid {
    /// Square grid of `n x n` pixels spanning `extent` in the plane `z`,
    /// centred on the z axis.
    pub fn plane_at_z(z: f64, extent: f64, n: usize) -> Self {
        Self {
            origin: [-extent / 2.0, -extent / 2.0, z],
            axis_u: [1.0, 0.0, 0.0],
            axis_v: [0.0, 1.0, 0.0],
            extent_u: extent,
            extent_v: extent,
            nu: n,
            nv: n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dot = |a: Vec3, b: Vec3| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let tol = 1e-9;
        if (dot(self.axis_u, self.axis_u) - 1.0).abs() > tol
            || (dot(self.axis_v, self.axis_v) - 1.0).abs() > tol
            || dot(self.axis_u, self.axis_v).abs() > tol
        {
            return Err(Error::invalid("image grid axes must be orthonormal"));
        }
        if self.nu < 2 || self.nv < 2 {
            return Err(Error::invalid("image grid needs at least 2 x 2 pixels"));
        }
        if !(self.extent_u > 0.0 && self.extent_v > 0.0) {
            return Err(Error::invalid("image grid extents must be positive"));
        }
        if self.origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image grid origin must be finite"));
        }
        Ok(())
    }

    pub fn pitch_u(&self) -> f64 {
        self.extent_u / (self.nu - 1) as f64
    }

    pub fn pitch_v(&self) -> f64 {
        self.extent_v / (self.nv - 1) as f64
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.pitch_u().hypot(self.pitch_v())
    }

    pub fn num_pixels(&self) -> usize {
        self.nu * self.nv
    }

    pub fn pixel(&self, iu: usize, iv: usize) -> Vec3 {
        let su = iu as f64 * self.pitch_u();
        let sv = iv as f64 * self.pitch_v();
        [
            self.origin[0] + self.axis_u[0] * su + self.axis_v[0] * sv,
            self.origin[1] + self.axis_u[1] * su + self.axis_v[1] * sv,
            self.origin[2] + self.axis_u[2] * su + self.axis_v[2] * sv,
        ]
    }

    /// Pixel whose centre is closest to `p`.
    pub fn nearest_pixel(&self, p: Vec3) -> (usize, usize) {
        let d = [p[0] - self.origin[0], p[1] - self.origin[1], p[2] - self.origin[2]];
        let proj = |axis: Vec3| d[0] * axis[0] + d[1] * axis[1] + d[2] * axis[2];
        let clamp = |x: f64, n: usize| x.round().clamp(0.0, (n - 1) as f64) as usize;
        (
            clamp(proj(self.axis_u) / self.pitch_u(), self.nu),
            clamp(proj(self.axis_v) / self.pitch_v(), self.nv),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImagingMode {
    /// Every transmitter x microphone pair.
    Mimo,
    /// One transmitter's pairs only.
    Single(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LagInterpolation {
    #[default]
    Nearest,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcousticImage {
    /// Row-major over `u`: `intensity[iu * nv + iv]`.
    intensity: Vec<f64>,
    grid: ImageGrid,
    mode: ImagingMode,
}

impl AcousticImage {
    pub fn new(intensity: Vec<f64>, grid: ImageGrid, mode: ImagingMode) -> Result<Self> {
        grid.validate()?;
        if intensity.len() != grid.num_pixels() {
            return Err(Error::DimensionMismatch(format!(
                "{} intensities for a {} x {} grid",
                intensity.len(),
                grid.nu,
                grid.nv
            )));
        }
        if intensity.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("image intensities must be finite and non-negative"));
        }
        Ok(Self { intensity, grid, mode })
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn grid(&self) -> &ImageGrid {
        &self.grid
    }

    pub fn mode(&self) -> ImagingMode {
        self.mode
    }

    pub fn get(&self, iu: usize, iv: usize) -> f64 {
        self.intensity[iu * self.grid.nv + iv]
    }

    /// Rows of constant `u`.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.intensity.chunks(self.grid.nv)
    }

    /// Brightest pixel; ties go to the lowest linear index.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.intensity.iter().enumerate() {
            if v > self.intensity[best] {
                best = i;
            }
        }
        (best / self.grid.nv, best % self.grid.nv)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            intensity: self.intensity.iter().map(|v| v * factor.abs()).collect(),
            grid: self.grid.clone(),
            mode: self.mode,
        }
    }

    fn is_local_max(&self, iu: usize, iv: usize) -> bool {
        let v = self.get(iu, iv);
        if v <= 0.0 {
            return false;
        }
        for du in -1i64..=1 {
            for dv in -1i64..=1 {
                let (u, w) = (iu as i64 + du, iv as i64 + dv);
                if (du, dv) == (0, 0) || u < 0 || w < 0 || u >= self.grid.nu as i64 || w >= self.grid.nv as i64 {
                    continue;
                }
                if self.get(u as usize, w as usize) > v {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DasOptions {
    #[serde(default)]
    pub interpolation: LagInterpolation,
}

pub fn das_image(
    mf: &MfBankOutput,
    g: &ArrayGeometry,
    grid: &ImageGrid,
    mode: ImagingMode,
    speed_of_sound: f64,
) -> Result<AcousticImage> {
    das_image_with(mf, g, grid, mode, speed_of_sound, &DasOptions::default())
}

pub fn das_image_with(
    mf: &MfBankOutput,
    g: &ArrayGeometry,
    grid: &ImageGrid,
    mode: ImagingMode,
    speed_of_sound: f64,
    opts: &DasOptions,
) -> Result<AcousticImage> {
    if mf.num_tx() != g.num_tx() || mf.num_mics() != g.num_mics() {
        return Err(Error::DimensionMismatch(format!(
            "matched-filter bank is {} x {}, geometry is {} x {}",
            mf.num_tx(),
            mf.num_mics(),
            g.num_tx(),
            g.num_mics()
        )));
    }
    let tx: Vec<usize> = match mode {
        ImagingMode::Mimo => (0..g.num_tx()).collect(),
        ImagingMode::Single(i) if i < g.num_tx() => vec![i],
        ImagingMode::Single(i) => {
            return Err(Error::invalid(format!(
                "emitter {i} out of range ({} transmitters)",
                g.num_tx()
            )))
        }
    };
    let intensity = delay_and_sum(mf, g, &tx, grid, speed_of_sound, opts)?;
    AcousticImage::new(intensity, grid.clone(), mode)
}

fn delay_and_sum(
    mf: &MfBankOutput,
    g: &ArrayGeometry,
    tx: &[usize],
    grid: &ImageGrid,
    c: f64,
    opts: &DasOptions,
) -> Result<Vec<f64>> {
    grid.validate()?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("speed of sound must be positive"));
    }
    let fs = mf.sample_rate();
    let (min_lag, max_lag) = mf.lag_range();
    (0..grid.num_pixels())
        .into_par_iter()
        .map(|idx| {
            let (iu, iv) = (idx / grid.nv, idx % grid.nv);
            let p = grid.pixel(iu, iv);
            let mic_legs: Vec<f64> = g.mic_positions.iter().map(|&m| distance(p, m)).collect();
            let mut acc = 0.0;
            for &i in tx {
                let tx_leg = distance(p, g.tx_positions[i]);
                for (k, &mic_leg) in mic_legs.iter().enumerate() {
                    let delay = round_trip_from_legs(tx_leg, mic_leg, c, fs);
                    let (lag, frac) = match opts.interpolation {
                        LagInterpolation::Nearest => (delay.round() as i64, 0.0),
                        LagInterpolation::Linear => (delay.floor() as i64, delay - delay.floor()),
                    };
                    let needs_next = frac > 0.0;
                    let top = if needs_next { lag + 1 } else { lag };
                    if lag < min_lag || top > max_lag {
                        return Err(Error::LagOutOfRange {
                            u: iu,
                            v: iv,
                            tx: i,
                            mic: k,
                            lag: if lag < min_lag { lag } else { top },
                            min: min_lag,
                            max: max_lag,
                        });
                    }
                    let y0 = mf.at_lag(i, k, lag).expect("lag checked");
                    acc += if needs_next {
                        let y1 = mf.at_lag(i, k, lag + 1).expect("lag checked");
                        y0 + frac * (y1 - y0)
                    } else {
                        y0
                    };
                }
            }
            Ok(acc.abs())
        })
        .collect()
}

/// Peak-to-sidelobe ratio outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pslr {
    Db(f64),
    /// Nothing non-zero outside the main lobes.
    NoSidelobes,
    /// No ground truth to define main lobes.
    Undefined,
}

impl Pslr {
    pub fn db(self) -> Option<f64> {
        match self {
            Pslr::Db(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageMetrics {
    pub peak_value: f64,
    pub pslr: Pslr,
    /// dB re. 1.0 of the summed per-reflector peaks; the global peak when
    /// there is no ground truth.
    pub total_strength_db: f64,
    /// Brightest pixel within each reflector's main lobe.
    pub reflector_peaks: Vec<f64>,
    pub localization_errors: Vec<f64>,
}

/// A local maximum only counts for localization when it reaches this
/// fraction of the brightest pixel in the reflector's main lobe.
pub const LOCAL_MAX_FRACTION: f64 = 0.5;

pub fn image_metrics(img: &AcousticImage, truth: &Scene, main_lobe_radius: f64) -> Result<ImageMetrics> {
    if !(main_lobe_radius > 0.0 && main_lobe_radius.is_finite()) {
        return Err(Error::invalid("main_lobe_radius must be positive"));
    }
    let grid = img.grid();
    let peak_value = img.intensity().iter().cloned().fold(0.0, f64::max);
    if truth.reflectors.is_empty() {
        return Ok(ImageMetrics {
            peak_value,
            pslr: Pslr::Undefined,
            total_strength_db: 20.0 * peak_value.log10(),
            reflector_peaks: Vec::new(),
            localization_errors: Vec::new(),
        });
    }

    let local_maxima: Vec<(usize, usize)> = (0..grid.nu)
        .flat_map(|u| (0..grid.nv).map(move |v| (u, v)))
        .filter(|&(u, v)| img.is_local_max(u, v))
        .collect();

    let mut in_lobe = vec![false; grid.num_pixels()];
    let mut reflector_peaks = Vec::with_capacity(truth.reflectors.len());
    let mut localization_errors = Vec::with_capacity(truth.reflectors.len());
    for r in &truth.reflectors {
        let (cu, cv) = grid.nearest_pixel(r.position);
        let centre = grid.pixel(cu, cv);
        let mut lobe_peak: f64 = 0.0;
        for u in 0..grid.nu {
            for v in 0..grid.nv {
                if distance(grid.pixel(u, v), centre) <= main_lobe_radius {
                    in_lobe[u * grid.nv + v] = true;
                    lobe_peak = lobe_peak.max(img.get(u, v));
                }
            }
        }
        reflector_peaks.push(lobe_peak);
        let floor = LOCAL_MAX_FRACTION * lobe_peak;
        let err = local_maxima
            .iter()
            .filter(|&&(u, v)| img.get(u, v) >= floor)
            .map(|&(u, v)| distance(grid.pixel(u, v), r.position))
            .fold(f64::INFINITY, f64::min);
        localization_errors.push(err);
    }

    let sidelobe = img
        .intensity()
        .iter()
        .zip(&in_lobe)
        .filter(|(_, &masked)| !masked)
        .map(|(&v, _)| v)
        .fold(0.0, f64::max);
    let pslr = if sidelobe > 0.0 {
        Pslr::Db(20.0 * (peak_value / sidelobe).log10())
    } else {
        Pslr::NoSidelobes
    };
    let strength: f64 = reflector_peaks.iter().sum();
    Ok(ImageMetrics {
        peak_value,
        pslr,
        total_strength_db: 20.0 * strength.log10(),
        reflector_peaks,
        localization_errors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareOptions {
    /// Transmitter used for the single-emitter system.
    pub emitter: usize,
    pub main_lobe_radius: f64,
    pub seed: u64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            emitter: 7,
            main_lobe_radius: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeComparison {
    pub mimo: ImageMetrics,
    pub single: ImageMetrics,
    pub strength_gain_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRun {
    pub mimo_image: AcousticImage,
    pub single_image: AcousticImage,
    pub metrics: ModeComparison,
}

/// Image one scene with all transmitters active (MIMO) and with only
/// `opts.emitter` transmitting (single-emitter system), same noise seed.
pub fn compare_modes(
    w: &WaveformSet,
    g: &ArrayGeometry,
    scene: &Scene,
    grid: &ImageGrid,
    opts: &CompareOptions,
) -> Result<ModeComparison> {
    run_comparison(w, g, scene, grid, opts).map(|r| r.metrics)
}

pub fn run_comparison(
    w: &WaveformSet,
    g: &ArrayGeometry,
    scene: &Scene,
    grid: &ImageGrid,
    opts: &CompareOptions,
) -> Result<ComparisonRun> {
    let mimo_image = image_scene(w, g, scene, grid, ImagingMode::Mimo, opts.seed)?;
    let single_image = image_scene(w, g, scene, grid, ImagingMode::Single(opts.emitter), opts.seed)?;
    let mimo = image_metrics(&mimo_image, scene, opts.main_lobe_radius)?;
    let single = image_metrics(&single_image, scene, opts.main_lobe_radius)?;
    let strength_gain_db = mimo.total_strength_db - single.total_strength_db;
    Ok(ComparisonRun {
        mimo_image,
        single_image,
        metrics: ModeComparison {
            mimo,
            single,
            strength_gain_db,
        },
    })
}

/// Synthesize, matched filter and image a scene. In single mode only the
/// chosen emitter transmits.
pub fn image_scene(
    w: &WaveformSet,
    g: &ArrayGeometry,
    scene: &Scene,
    grid: &ImageGrid,
    mode: ImagingMode,
    seed: u64,
) -> Result<AcousticImage> {
    let (w, g) = match mode {
        ImagingMode::Mimo => (w.clone(), g.clone()),
        ImagingMode::Single(i) => {
            if i >= g.num_tx() {
                return Err(Error::invalid(format!(
                    "emitter {i} out of range ({} transmitters)",
                    g.num_tx()
                )));
            }
            let sub = ArrayGeometry {
                tx_positions: vec![g.tx_positions[i]],
                mic_positions: g.mic_positions.clone(),
            };
            (w.select(&[i])?, sub)
        }
    };
    let rec = synthesize_recordings(&w, &g, scene, seed)?;
    let mf = matched_filter_bank(&rec, &w)?;
    let all: Vec<usize> = (0..g.num_tx()).collect();
    let intensity = delay_and_sum(&mf, &g, &all, grid, scene.speed_of_sound, &DasOptions::default())?;
    AcousticImage::new(intensity, grid.clone(), mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_grid() -> ImageGrid {
        ImageGrid::plane_at_z(0.2, 0.1, 5)
    }

    #[test]
    fn grid_pixels_and_nearest() {
        let g = tiny_grid();
        assert_eq!(g.pixel(0, 0), [-0.05, -0.05, 0.2]);
        let c = g.pixel(2, 2);
        assert!(c[0].abs() < 1e-15 && c[1].abs() < 1e-15);
        assert_eq!(g.nearest_pixel([0.001, -0.024, 0.3]), (2, 1));
        assert_eq!(g.nearest_pixel([9.0, -9.0, 0.2]), (4, 0));
        assert!((g.cell_diagonal() - 0.025f64.hypot(0.025)).abs() < 1e-15);
    }

    #[test]
    fn grid_validation() {
        let mut g = tiny_grid();
        g.axis_v = [1.0, 0.0, 0.0];
        assert!(g.validate().is_err());
        let g = ImageGrid { nu: 1, ..tiny_grid() };
        assert!(g.validate().is_err());
        let g = ImageGrid {
            extent_u: 0.0,
            ..tiny_grid()
        };
        assert!(g.validate().is_err());
    }

    fn single_peak_image() -> AcousticImage {
        let grid = tiny_grid();
        let mut v = vec![0.0; 25];
        v[2 * 5 + 2] = 1.0;
        AcousticImage::new(v, grid, ImagingMode::Mimo).unwrap()
    }

    #[test]
    fn lone_peak_has_no_sidelobes() {
        let img = single_peak_image();
        let truth = Scene::new(vec![crate::scene::Reflector {
            position: img.grid().pixel(2, 2),
            reflectivity: 1.0,
        }]);
        let m = image_metrics(&img, &truth, 0.01).unwrap();
        assert_eq!(m.pslr, Pslr::NoSidelobes);
        assert_eq!(m.localization_errors, vec![0.0]);
        assert_eq!(m.total_strength_db, 0.0);

        let m10 = image_metrics(&img.scaled(10.0), &truth, 0.01).unwrap();
        assert!((m10.total_strength_db - 20.0).abs() < 1e-12);
        assert_eq!(m10.pslr, Pslr::NoSidelobes);
    }

    #[test]
    fn pslr_is_scale_invariant() {
        let grid = tiny_grid();
        let mut v = vec![0.0; 25];
        v[12] = 1.0;
        v[0] = 0.25;
        let img = AcousticImage::new(v, grid.clone(), ImagingMode::Mimo).unwrap();
        let truth = Scene::new(vec![crate::scene::Reflector {
            position: grid.pixel(2, 2),
            reflectivity: 1.0,
        }]);
        let a = image_metrics(&img, &truth, 0.01).unwrap();
        let b = image_metrics(&img.scaled(7.0), &truth, 0.01).unwrap();
        let expect = 20.0 * 4f64.log10();
        assert!((a.pslr.db().unwrap() - expect).abs() < 1e-12);
        assert!((b.pslr.db().unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn empty_truth_leaves_pslr_undefined() {
        let m = image_metrics(&single_peak_image(), &Scene::default(), 0.01).unwrap();
        assert_eq!(m.pslr, Pslr::Undefined);
        assert!(m.localization_errors.is_empty());
        assert_eq!(m.total_strength_db, 0.0);
    }

    #[test]
    fn argmax_ties_prefer_lowest_index() {
        let grid = tiny_grid();
        let mut v = vec![0.0; 25];
        v[7] = 2.0;
        v[3] = 2.0;
        let img = AcousticImage::new(v, grid, ImagingMode::Mimo).unwrap();
        assert_eq!(img.argmax(), (0, 3));
    }

    #[test]
    fn image_rejects_negative_values() {
        assert!(AcousticImage::new(vec![-1.0; 25], tiny_grid(), ImagingMode::Mimo).is_err());
        assert!(AcousticImage::new(vec![0.0; 24], tiny_grid(), ImagingMode::Mimo).is_err());
    }

    #[test]
    fn metrics_reject_bad_radius() {
        assert!(image_metrics(&single_peak_image(), &Scene::default(), 0.0).is_err());
    }

    #[test]
    fn out_of_range_lag_names_the_pixel() {
        let g = ArrayGeometry::new(vec![[0.0; 3]], vec![[0.0; 3]]).unwrap();
        let mf = MfBankOutput::from_traces(vec![vec![vec![0.0; 10]]], 0, 500_000.0).unwrap();
        let err = das_image(&mf, &g, &tiny_grid(), ImagingMode::Mimo, 343.0).unwrap_err();
        assert!(matches!(err, Error::LagOutOfRange { u: 0, v: 0, .. }), "{err}");
    }

    #[test]
    fn single_mode_emitter_bounds() {
        let g = ArrayGeometry::new(vec![[0.0; 3]], vec![[0.0; 3]]).unwrap();
        let mf = MfBankOutput::from_traces(vec![vec![vec![0.0; 10]]], 0, 500_000.0).unwrap();
        assert!(das_image(&mf, &g, &tiny_grid(), ImagingMode::Single(1), 343.0).is_err());
    }
}
