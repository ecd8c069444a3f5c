use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mimosim"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json_of(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is one JSON document")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_writes_channels_binary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen", "--out", s(dir.path())]);
    assert!(o.status.success());
    let csvs = (0..32)
        .filter(|c| dir.path().join(format!("channel_{c:02}.csv")).exists())
        .count();
    assert_eq!(csvs, 32);
    assert!(dir.path().join("waveforms.f32").exists());
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "gen");
    assert_eq!(manifest["waveform"]["num_channels"], 32);
    assert_eq!(manifest["seed"], 0);
    let f32_len = std::fs::metadata(dir.path().join("waveforms.f32")).unwrap().len();
    assert_eq!(f32_len, 32 * 8192 * 4);
}

#[test]
fn narrowband_gen_stays_in_band() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_of(&run(&["gen", "--band", "narrowband", "--json", "--out", s(dir.path())]));
    assert!(v["band_energy_fraction"].as_f64().unwrap() >= 0.999);
    assert_eq!(v["num_components"], 66);
}

#[test]
fn repeated_seed_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(run(&["gen", "--seed", "42", "--out", s(d.path())]).status.success());
    }
    for name in ["waveforms.f32", "channel_05.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap()
        );
    }
    let c = tempfile::tempdir().unwrap();
    assert!(run(&["gen", "--seed", "43", "--out", s(c.path())]).status.success());
    assert_ne!(
        std::fs::read(a.path().join("waveforms.f32")).unwrap(),
        std::fs::read(c.path().join("waveforms.f32")).unwrap()
    );
}

fn read_matrix(p: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn separation_matrices_are_symmetric_and_response_is_worse() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_of(&run(&[
        "separation",
        "--response",
        "conamara-like",
        "--json",
        "--out",
        s(dir.path()),
    ]));
    for name in ["separation_ideal.csv", "separation_response.csv"] {
        let m = read_matrix(&dir.path().join(name));
        assert_eq!(m.len(), 32);
        for (i, row) in m.iter().enumerate() {
            assert_eq!(row[i], 0.0);
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, m[j][i]);
            }
        }
    }
    let ideal = v["ideal"]["mean_off_diagonal_db"].as_f64().unwrap();
    let resp = v["with_response"]["mean_off_diagonal_db"].as_f64().unwrap();
    assert!(resp > ideal);
}

#[test]
fn separation_rejects_one_channel() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"waveform": {"num_channels": 1}}"#).unwrap();
    let o = run(&["separation", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("need >= 2 channels"));
}

#[test]
fn response_csv_path_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("resp.csv");
    std::fs::write(&csv, "freq_hz,mag_db\n0,0\n250000,0\n").unwrap();
    let v = json_of(&run(&[
        "separation",
        "--response",
        s(&csv),
        "--json",
        "--out",
        s(dir.path()),
    ]));
    let ideal = v["ideal"]["mean_off_diagonal_db"].as_f64().unwrap();
    let resp = v["with_response"]["mean_off_diagonal_db"].as_f64().unwrap();
    assert!((ideal - resp).abs() < 1e-9);
}

#[test]
fn compare_one_reflector_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("one_reflector.json");
    let v = json_of(&run(&[
        "compare",
        "--config",
        s(&cfg),
        "--json",
        "--out",
        s(dir.path()),
    ]));
    let gain = v["strength_gain_db"].as_f64().unwrap();
    assert!((gain - 20.0 * 32f64.log10()).abs() <= 1.0, "{gain}");
    for stem in ["image_mimo", "image_single"] {
        for ext in ["csv", "f32", "json"] {
            assert!(dir.path().join(format!("{stem}.{ext}")).exists(), "{stem}.{ext}");
        }
    }
    let side: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("image_mimo.json")).unwrap()).unwrap();
    assert_eq!(side["shape"], serde_json::json!([64, 64]));
    assert_eq!(side["meta"]["mode"], "mimo");
    assert!(side["meta"]["metrics"]["total_strength_db"].is_number());
}

#[test]
fn image_single_mode_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let scene = configs().join("scenes/one_reflector.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"band": "narrowband", "scene": "{}", "mode": {{"single": 3}}}}"#,
            s(&scene)
        ),
    )
    .unwrap();
    let v = json_of(&run(&["image", "--config", s(&cfg), "--json", "--out", s(dir.path())]));
    assert!(v["localization_errors"][0].as_f64().unwrap() <= 0.0113);
    assert!(dir.path().join("image_single.csv").exists());
}

#[test]
fn missing_scene_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"scene": "no_such_scene.json"}"#).unwrap();
    let o = run(&["image", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_scene.json"));
}

#[test]
fn image_without_scene_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["image", "--out", s(dir.path())]).status.code(), Some(2));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"waveform": {"num_channels": 4, "colour": "red"}}"#).unwrap();
    let o = run(&["gen", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn manifest_for_another_command_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["gen", "--out", s(dir.path())]).status.success());
    let o = run(&[
        "separation",
        "--config",
        s(&dir.path().join("manifest.json")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 5, "band": "wideband", "waveform": {"num_channels": 2, "num_samples": 1024}}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    assert!(run(&[
        "gen",
        "--config",
        s(&cfg),
        "--seed",
        "9",
        "--band",
        "narrowband",
        "--out",
        s(&out)
    ])
    .status
    .success());
    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(m["waveform"]["seed"], 9);
    assert_eq!(m["waveform"]["band_low"], 38000.0);
    assert_eq!(m["waveform"]["num_channels"], 2);
}

#[test]
fn invalid_waveform_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"waveform": {"band_low": 300000, "band_high": 310000}}"#).unwrap();
    assert_eq!(
        run(&["gen", "--config", s(&cfg), "--out", s(dir.path())]).status.code(),
        Some(2)
    );
}

#[test]
fn throughput_and_max_mics() {
    let v = json_of(&run(&["throughput", "--mics", "64", "--json"]));
    assert_eq!(v["required_bytes_per_s"], 36_000_000);
    let v = json_of(&run(&["throughput", "--mics", "16", "--json"]));
    assert_eq!(v["required_bytes_per_s"], 9_000_000);
    let v = json_of(&run(&["max-mics", "--bw", "40e6", "--json"]));
    assert_eq!(v["max_mics"], 71);
    let o = run(&["max-mics", "--bw", "20e6"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "35");
    assert_eq!(run(&["max-mics", "--bw", "1.5"]).status.code(), Some(2));
    assert_eq!(run(&["throughput"]).status.code(), Some(2));
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
}

#[test]
fn streamsim_writes_stats_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("stream_blocked.json");
    let v = json_of(&run(&[
        "streamsim",
        "--config",
        s(&cfg),
        "--log",
        "--json",
        "--out",
        s(dir.path()),
    ]));
    let produced = v["bytes_produced"].as_u64().unwrap();
    let rest = ["bytes_delivered", "bytes_dropped", "final_buffer_bytes"]
        .iter()
        .map(|k| v[k].as_u64().unwrap())
        .sum::<u64>();
    assert_eq!(produced, rest);
    assert!(v["bytes_dropped"].as_u64().unwrap() > 0);
    let log = std::fs::read_to_string(dir.path().join("stream_events.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("time_s,event,buffer_bytes"));
    assert!(log.contains(",block_start,") && log.contains(",drop,"));
    assert!(lines.last().unwrap().contains(",end,"));
}

#[test]
fn streamsim_needs_stream_section() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["streamsim", "--out", s(dir.path())]).status.code(), Some(2));
}
