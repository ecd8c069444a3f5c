//! Run configuration: one JSON document, overridden by command-line flags.

use std::path::{Path, PathBuf};

use mimosim_core::imaging::{CompareOptions, ImageGrid, ImagingMode};
use mimosim_core::scene::{default_geometry, ArrayGeometry, Scene};
use mimosim_core::stream::StreamConfig;
use mimosim_core::transducer::{load_response, FrequencyResponse, ResponsePreset};
use mimosim_core::waveform::{BandPreset, MultisineSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Either a path to a JSON file or the value itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Set in emitted manifests; must match the subcommand when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    /// Overrides `waveform.seed`; also seeds the noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Shorthand for the waveform band edges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<BandPreset>,
    #[serde(default)]
    pub waveform: MultisineSpec,
    /// `flat`, `conamara-like` or a CSV path. Used by `separation`.
    #[serde(default = "default_response")]
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Source<ArrayGeometry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<Source<Scene>>,
    #[serde(default)]
    pub grid: ImageGrid,
    #[serde(default = "default_mode")]
    pub mode: ImagingMode,
    #[serde(default = "default_emitter")]
    pub emitter: usize,
    #[serde(default = "default_radius")]
    pub main_lobe_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<Source<StreamConfig>>,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_response() -> String {
    "flat".into()
}

fn default_mode() -> ImagingMode {
    ImagingMode::Mimo
}

fn default_emitter() -> usize {
    CompareOptions::default().emitter
}

fn default_radius() -> f64 {
    CompareOptions::default().main_lobe_radius
}

fn default_duration() -> f64 {
    1.0
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub band: Option<BandPreset>,
    pub response: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    fn rel(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Apply flags, load referenced files, fill defaults and validate. The
    /// result is self-contained apart from a response CSV path.
    pub fn resolve(mut self, command: &str, o: Overrides) -> Result<Self, CliError> {
        if let Some(c) = &self.command {
            if c != command {
                return Err(CliError::Usage(format!(
                    "config was written for `{c}`, not `{command}`"
                )));
            }
        }
        self.command = Some(command.to_string());
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(out) = o.out {
            self.out = out;
        }
        if let Some(b) = o.band.or(self.band.take()) {
            self.waveform = self.waveform.with_band(b);
        }
        if let Some(r) = o.response {
            self.response = r;
        } else if ResponsePreset::parse(&self.response).is_none() {
            self.response = self.rel(Path::new(&self.response)).display().to_string();
        }
        self.waveform.seed = self.seed.unwrap_or(self.waveform.seed);
        self.seed = Some(self.waveform.seed);
        self.waveform.validate().map_err(usage)?;

        let geometry = match self.geometry.take() {
            None => default_geometry(),
            Some(Source::Path(p)) => ArrayGeometry::load(self.rel(&p)).map_err(usage)?,
            Some(Source::Inline(g)) => {
                g.validate().map_err(usage)?;
                g
            }
        };
        self.geometry = Some(Source::Inline(geometry));
        self.scene = match self.scene.take() {
            None => None,
            Some(Source::Path(p)) => Some(Source::Inline(Scene::load(self.rel(&p)).map_err(usage)?)),
            Some(Source::Inline(s)) => {
                s.validate().map_err(usage)?;
                Some(Source::Inline(s))
            }
        };
        self.stream = match self.stream.take() {
            None => None,
            Some(Source::Path(p)) => Some(Source::Inline(load_stream(&self.rel(&p))?)),
            Some(Source::Inline(s)) => Some(Source::Inline(s)),
        };
        if let Some(Source::Inline(s)) = &self.stream {
            s.validate().map_err(usage)?;
        }
        self.grid.validate().map_err(usage)?;
        if !(self.main_lobe_radius > 0.0 && self.main_lobe_radius.is_finite()) {
            return Err(CliError::Usage("main_lobe_radius must be positive".into()));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(CliError::Usage("duration_s must be positive".into()));
        }
        self.frequency_response()?;
        Ok(self)
    }

    pub fn geometry(&self) -> ArrayGeometry {
        match &self.geometry {
            Some(Source::Inline(g)) => g.clone(),
            _ => default_geometry(),
        }
    }

    pub fn scene(&self) -> Result<&Scene, CliError> {
        match &self.scene {
            Some(Source::Inline(s)) => Ok(s),
            _ => Err(CliError::Usage("this command needs a `scene` in the config".into())),
        }
    }

    pub fn stream_config(&self) -> Result<&StreamConfig, CliError> {
        match &self.stream {
            Some(Source::Inline(s)) => Ok(s),
            _ => Err(CliError::Usage(
                "this command needs a `stream` section in the config".into(),
            )),
        }
    }

    pub fn frequency_response(&self) -> Result<FrequencyResponse, CliError> {
        match ResponsePreset::parse(&self.response) {
            Some(p) => Ok(p.response(self.waveform.sample_rate)),
            None => load_response(Path::new(&self.response)).map_err(usage),
        }
    }

    pub fn compare_options(&self) -> CompareOptions {
        CompareOptions {
            emitter: self.emitter,
            main_lobe_radius: self.main_lobe_radius,
            seed: self.waveform.seed,
        }
    }
}

fn load_stream(path: &Path) -> Result<StreamConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn usage(e: mimosim_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}
