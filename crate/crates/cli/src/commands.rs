use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mimosim_core::export::{write_channel_csv, write_f32_with_sidecar, write_json, write_matrix_csv};
use mimosim_core::imaging::{
    image_metrics, image_scene, run_comparison, AcousticImage, ImageGrid, ImageMetrics, ImagingMode,
};
use mimosim_core::matched_filter::{separation_matrix, separation_under_response, SeparationMatrix};
use mimosim_core::stream::{max_mics as link_max_mics, required_throughput, simulate_stream_logged, StreamStats};
use mimosim_core::waveform::{band_energy_fraction, generate_multisines};
use mimosim_core::Error;
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

fn prepare_out(cfg: &RunConfig) -> Result<&Path, CliError> {
    let out = cfg.out.as_path();
    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.to_path_buf(),
        source,
    })?;
    write_json(&out.join("manifest.json"), cfg)?;
    Ok(out)
}

/// Print to stdout; a closed pipe is not an error.
fn emit<T: Serialize>(json: bool, value: &T, human: impl FnOnce() -> String) {
    let text = if json {
        serde_json::to_string_pretty(value).expect("results serialize")
    } else {
        human()
    };
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

#[derive(Serialize)]
struct GenSummary {
    num_channels: usize,
    num_samples: usize,
    sample_rate: f64,
    num_components: usize,
    band_energy_fraction: f64,
}

pub fn gen(cfg: &RunConfig, json: bool) -> Result<(), CliError> {
    let spec = &cfg.waveform;
    let w = generate_multisines(spec)?;
    let out = prepare_out(cfg)?;
    for (c, row) in w.samples().iter().enumerate() {
        write_channel_csv(&out.join(format!("channel_{c:02}.csv")), c, row)?;
    }
    write_f32_with_sidecar(out, "waveforms", w.samples(), Some(w.sample_rate()), spec)?;
    let summary = GenSummary {
        num_channels: w.num_channels(),
        num_samples: w.num_samples(),
        sample_rate: w.sample_rate(),
        num_components: spec.component_bins().len(),
        band_energy_fraction: band_energy_fraction(&w, spec.band_low, spec.band_high)?,
    };
    emit(json, &summary, || {
        format!(
            "{} channels x {} samples, {} components, in-band energy {:.6}, written to {}",
            summary.num_channels,
            summary.num_samples,
            summary.num_components,
            summary.band_energy_fraction,
            out.display()
        )
    });
    Ok(())
}

#[derive(Serialize)]
struct SeparationSummary {
    mean_off_diagonal_db: f64,
    max_off_diagonal_db: f64,
}

impl From<&SeparationMatrix> for SeparationSummary {
    fn from(m: &SeparationMatrix) -> Self {
        Self {
            mean_off_diagonal_db: m.mean_off_diagonal_db(),
            max_off_diagonal_db: m.max_off_diagonal_db(),
        }
    }
}

#[derive(Serialize)]
struct SeparationReport<'a> {
    response: &'a str,
    ideal: SeparationSummary,
    with_response: SeparationSummary,
}

pub fn separation(cfg: &RunConfig, json: bool) -> Result<(), CliError> {
    if cfg.waveform.num_channels < 2 {
        return Err(CliError::Usage("need >= 2 channels for a separation matrix".into()));
    }
    let w = generate_multisines(&cfg.waveform)?;
    let ideal = separation_matrix(&w)?;
    let filtered = separation_under_response(&w, &cfg.frequency_response()?)?;
    let out = prepare_out(cfg)?;
    write_matrix_csv(&out.join("separation_ideal.csv"), ideal.values_db())?;
    write_matrix_csv(&out.join("separation_response.csv"), filtered.values_db())?;
    let report = SeparationReport {
        response: &cfg.response,
        ideal: (&ideal).into(),
        with_response: (&filtered).into(),
    };
    write_json(&out.join("separation.json"), &report)?;
    emit(json, &report, || {
        format!(
            "mean off-diagonal: ideal {:.2} dB, {} {:.2} dB",
            report.ideal.mean_off_diagonal_db, report.response, report.with_response.mean_off_diagonal_db
        )
    });
    Ok(())
}

#[derive(Serialize)]
struct ImageMeta<'a> {
    grid: &'a ImageGrid,
    mode: ImagingMode,
    metrics: &'a ImageMetrics,
}

fn export_image(out: &Path, stem: &str, img: &AcousticImage, metrics: &ImageMetrics) -> Result<(), CliError> {
    let rows: Vec<Vec<f64>> = img.rows().map(<[f64]>::to_vec).collect();
    write_matrix_csv(&out.join(format!("{stem}.csv")), &rows)?;
    let meta = ImageMeta {
        grid: img.grid(),
        mode: img.mode(),
        metrics,
    };
    write_f32_with_sidecar(out, stem, &rows, None, &meta)?;
    Ok(())
}

fn mode_stem(mode: ImagingMode) -> &'static str {
    match mode {
        ImagingMode::Mimo => "image_mimo",
        ImagingMode::Single(_) => "image_single",
    }
}

fn metrics_line(label: &str, m: &ImageMetrics) -> String {
    let pslr = m
        .pslr
        .db()
        .map_or_else(|| format!("{:?}", m.pslr), |v| format!("{v:.2} dB"));
    let worst = m.localization_errors.iter().cloned().fold(0.0, f64::max);
    format!(
        "{label}: strength {:.2} dB, pslr {pslr}, worst localization error {:.4} m",
        m.total_strength_db, worst
    )
}

pub fn image(cfg: &RunConfig, json: bool) -> Result<(), CliError> {
    let scene = cfg.scene()?;
    let w = generate_multisines(&cfg.waveform)?;
    let img = image_scene(&w, &cfg.geometry(), scene, &cfg.grid, cfg.mode, cfg.waveform.seed)?;
    let metrics = image_metrics(&img, scene, cfg.main_lobe_radius)?;
    let out = prepare_out(cfg)?;
    export_image(out, mode_stem(cfg.mode), &img, &metrics)?;
    emit(json, &metrics, || metrics_line(mode_stem(cfg.mode), &metrics));
    Ok(())
}

pub fn compare(cfg: &RunConfig, json: bool) -> Result<(), CliError> {
    let scene = cfg.scene()?;
    let w = generate_multisines(&cfg.waveform)?;
    let run = run_comparison(&w, &cfg.geometry(), scene, &cfg.grid, &cfg.compare_options())?;
    let out = prepare_out(cfg)?;
    export_image(out, "image_mimo", &run.mimo_image, &run.metrics.mimo)?;
    export_image(out, "image_single", &run.single_image, &run.metrics.single)?;
    write_json(&out.join("comparison.json"), &run.metrics)?;
    emit(json, &run.metrics, || {
        format!(
            "{}\n{}\nstrength gain {:.2} dB",
            metrics_line("mimo", &run.metrics.mimo),
            metrics_line("single", &run.metrics.single),
            run.metrics.strength_gain_db
        )
    });
    Ok(())
}

#[derive(Serialize)]
struct ThroughputReport {
    num_mics: u64,
    pdm_rate: u64,
    required_bytes_per_s: u64,
}

pub fn throughput(num_mics: u64, pdm_rate: u64, json: bool) -> Result<(), CliError> {
    if num_mics == 0 || pdm_rate == 0 {
        return Err(CliError::Usage("--mics and --pdm-rate must be positive".into()));
    }
    let r = ThroughputReport {
        num_mics,
        pdm_rate,
        required_bytes_per_s: required_throughput(num_mics, pdm_rate),
    };
    emit(json, &r, || format!("{} B/s", r.required_bytes_per_s));
    Ok(())
}

#[derive(Serialize)]
struct MaxMicsReport {
    link_bytes_per_s: u64,
    pdm_rate: u64,
    max_mics: u64,
}

pub fn max_mics(bw: u64, pdm_rate: u64, json: bool) -> Result<(), CliError> {
    if pdm_rate == 0 {
        return Err(CliError::Usage("--pdm-rate must be positive".into()));
    }
    let r = MaxMicsReport {
        link_bytes_per_s: bw,
        pdm_rate,
        max_mics: link_max_mics(bw, pdm_rate),
    };
    emit(json, &r, || r.max_mics.to_string());
    Ok(())
}

#[derive(Serialize)]
struct StreamReportOut<'a> {
    duration_s: f64,
    conserved: bool,
    #[serde(flatten)]
    stats: &'a StreamStats,
}

pub fn streamsim(cfg: &RunConfig, log: bool, json: bool) -> Result<(), CliError> {
    let sc = cfg.stream_config()?;
    let report = simulate_stream_logged(sc, cfg.duration_s, log)?;
    let out = prepare_out(cfg)?;
    let r = StreamReportOut {
        duration_s: report.duration,
        conserved: report.stats.is_conserved(),
        stats: &report.stats,
    };
    write_json(&out.join("stream_stats.json"), &r)?;
    if log {
        let path = out.join("stream_events.csv");
        let io = |source| Error::Io {
            path: path.clone(),
            source,
        };
        let mut f = BufWriter::new(File::create(&path).map_err(io)?);
        writeln!(f, "time_s,event,buffer_bytes").map_err(io)?;
        for e in &report.events {
            writeln!(f, "{},{},{}", e.time_s, e.event.name(), e.buffer_bytes).map_err(io)?;
        }
        f.flush().map_err(io)?;
    }
    emit(json, &r, || {
        let s = &report.stats;
        format!(
            "produced {} B, delivered {} B, dropped {} B, left {} B, peak buffer {} B, utilization {:.4}",
            s.bytes_produced,
            s.bytes_delivered,
            s.bytes_dropped,
            s.final_buffer_bytes,
            s.max_buffer_occupancy,
            s.utilization
        )
    });
    Ok(())
}
