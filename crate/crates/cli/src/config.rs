//! Run configuration: `optics`, `fit`, `render` and `segment` sections are
//! required; every field inside them has a default. Unknown keys are errors.
//! Relative paths resolve against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skinspec_core::fitter::{default_seeds, DarkThreshold, FitOptions};
use skinspec_core::forward::{BioParams, OpticsConstants};
use skinspec_core::renderer::{RenderInput, DEFAULT_GAMMA};
use skinspec_core::segmenter::TrainConfig;
use skinspec_core::spectral::WavelengthGrid;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub optics: OpticsConstants,
    pub fit: FitSection,
    pub render: RenderSection,
    pub segment: SegmentSection,
    /// Working grid; the 400–700 nm, 31-channel grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<WavelengthGrid>,
    /// Illuminant SPD CSV; D65 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub illuminant: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    /// `[f_mel, f_blood]` starting points.
    pub multistart_seeds: Vec<[f64; 2]>,
    pub dark_pixel_threshold: DarkThreshold,
    pub workers: Option<usize>,
}

impl Default for FitSection {
    fn default() -> Self {
        let o = FitOptions::default();
        FitSection {
            max_iterations: o.max_iterations,
            gradient_tolerance: o.gradient_tolerance,
            step_tolerance: o.step_tolerance,
            multistart_seeds: default_seeds().iter().map(|s| [s.f_mel, s.f_blood]).collect(),
            dark_pixel_threshold: o.dark_pixel_threshold,
            workers: None,
        }
    }
}

impl FitSection {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            step_tolerance: self.step_tolerance,
            multistart_seeds: self
                .multistart_seeds
                .iter()
                .map(|[m, b]| BioParams { f_mel: *m, f_blood: *b })
                .collect(),
            dark_pixel_threshold: self.dark_pixel_threshold,
            workers: self.workers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub gamma: f64,
    /// `wavelength_nm,R,G,B` sensitivity CSV; CIE 1931 CMFs when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub camera: Option<PathBuf>,
    pub input: RenderInput,
    /// Edge length of `swatch` output.
    pub swatch_resolution: usize,
}

impl Default for RenderSection {
    fn default() -> Self {
        RenderSection {
            gamma: DEFAULT_GAMMA,
            camera: None,
            input: RenderInput::Radiance,
            swatch_resolution: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    /// Weight file applied after fitting; no probability map when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SegmentSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        SegmentSection {
            model: None,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            validation_fraction: t.validation_fraction,
            seed: t.seed,
        }
    }
}

impl SegmentSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

impl Config {
    /// Parses and validates; relative paths are left as written.
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.illuminant, &mut self.render.camera, &mut self.segment.model]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let cfg_err = |section: &str, e: skinspec_core::Error| CliError::Config(format!("{section}: {e}"));
        self.optics.validate().map_err(|e| cfg_err("optics", e))?;
        self.fit.options().validate().map_err(|e| cfg_err("fit", e))?;
        if !(self.render.gamma > 0.0 && self.render.gamma.is_finite()) {
            return Err(CliError::Config(format!("render.gamma must be positive, got {}", self.render.gamma)));
        }
        if self.render.swatch_resolution < 2 {
            return Err(CliError::Config("render.swatch_resolution must be at least 2".into()));
        }
        self.segment.train_config().validate().map_err(|e| cfg_err("segment", e))?;
        Ok(())
    }

    pub fn grid(&self) -> WavelengthGrid {
        self.grid.unwrap_or_default()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
