//! A decomposition directory and everything derived from it.
//!
//! Layout: `cube.msc`, one `<map>.bin` per parameter map, `status.bin`,
//! optional `skin_probability.bin`, the effective `config.json` (with any
//! referenced spectra copied alongside), `report.json` and `manifest.json`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use skinspec_core::cube::MultispectralCube;
use skinspec_core::editor::{apply_edit, recompose, EditScript, RegionMask};
use skinspec_core::forward::{ChromophoreTables, SkinModel};
use skinspec_core::maps::{
    decode_f32_map, decode_status_map, encode_f32_map, encode_status_map, FitStatus, MapName, ParameterMaps,
};
use skinspec_core::renderer::{build_pipeline, encode_png, false_colour, render_image, CameraSensitivity, ColorPipeline};
use skinspec_core::segmenter::MlpModel;
use skinspec_core::Result as CoreResult;
use skinspec_core::spectral::{bundled, load_table, resample, Extrapolation, Spectrum, TableFormat, WavelengthGrid};

use crate::config::Config;
use crate::error::{CliError, CliResult};

pub const CUBE_FILE: &str = "cube.msc";
pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const STATUS_FILE: &str = "status.bin";

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn map_path(dir: &Path, name: MapName) -> PathBuf {
    dir.join(format!("{}.bin", name.stem()))
}

/// Grid, illuminant, skin model and colour pipeline for one configuration.
#[derive(Debug, Clone)]
pub struct Environment {
    pub grid: WavelengthGrid,
    pub illuminant: Spectrum,
    pub model: SkinModel,
    pub pipeline: ColorPipeline,
}

impl Environment {
    pub fn new(cfg: &Config) -> CliResult<Self> {
        let grid = cfg.grid();
        let illuminant = match &cfg.illuminant {
            None => bundled::d65_on(&grid).map_err(|e| CliError::Config(format!("D65 on {grid:?}: {e}")))?,
            Some(p) => {
                let table = load_table(&read(p)?[..], TableFormat::Csv).map_err(|e| CliError::input(&p.display().to_string(), e))?;
                resample(&table, &grid, Extrapolation::Disabled)
                    .map_err(|e| CliError::Config(format!("illuminant {}: {e}", p.display())))?
            }
        };
        let model = SkinModel::new(grid, cfg.optics.clone(), &ChromophoreTables::bundled())
            .map_err(|e| CliError::Config(format!("optics: {e}")))?;
        let sens = match &cfg.render.camera {
            None => CameraSensitivity::cie_1931(&grid).map_err(|e| CliError::Config(format!("CIE CMFs on {grid:?}: {e}")))?,
            Some(p) => CameraSensitivity::from_csv(&read(p)?[..], &grid).map_err(|e| CliError::input(&p.display().to_string(), e))?,
        };
        let pipeline = build_pipeline(&sens, &illuminant)
            .and_then(|p| p.with_gamma(cfg.render.gamma))
            .map_err(|e| CliError::Config(format!("render: {e}")))?
            .with_input(cfg.render.input);
        Ok(Environment {
            grid,
            illuminant,
            model,
            pipeline,
        })
    }

    /// Reads an MSC cube and resamples it onto the working grid.
    pub fn load_cube(&self, path: &Path) -> CliResult<MultispectralCube> {
        let cube = MultispectralCube::from_bytes(&read(path)?).map_err(|e| CliError::input(&path.display().to_string(), e))?;
        Ok(cube.conform_to(&self.grid)?)
    }
}

/// Summary statistics written next to the maps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub width: usize,
    pub height: usize,
    pub pixels: usize,
    pub converged: usize,
    pub max_iterations: usize,
    pub dark: usize,
    pub failed: usize,
    /// Pixels with skin probability ≥ 0.5 (all fitted pixels without a classifier).
    pub skin_pixels: usize,
    /// Mean relative spectral error over `skin_pixels`.
    pub mean_relative_spectral_error: f64,
    pub has_skin_probability: bool,
}

impl Report {
    pub fn new(maps: &ParameterMaps) -> Self {
        let count = |s: FitStatus| maps.status.iter().filter(|x| **x == s).count();
        let selected: Vec<usize> = (0..maps.pixel_count())
            .filter(|&i| match &maps.skin_probability {
                Some(p) => p[i] >= 0.5 && maps.status[i] != FitStatus::DarkPixel,
                None => matches!(maps.status[i], FitStatus::Converged | FitStatus::MaxIterations),
            })
            .collect();
        let mean = if selected.is_empty() {
            0.0
        } else {
            selected.iter().map(|&i| maps.relative_error[i]).sum::<f64>() / selected.len() as f64
        };
        Report {
            width: maps.width,
            height: maps.height,
            pixels: maps.pixel_count(),
            converged: count(FitStatus::Converged),
            max_iterations: count(FitStatus::MaxIterations),
            dark: count(FitStatus::DarkPixel),
            failed: count(FitStatus::Failed),
            skin_pixels: selected.len(),
            mean_relative_spectral_error: mean,
            has_skin_probability: maps.skin_probability.is_some(),
        }
    }
}

/// Rounds float maps to the f32 precision they are persisted with.
pub fn round_to_stored(maps: &mut ParameterMaps) {
    for name in MapName::ALL {
        if let Some(v) = maps.map_mut(name) {
            v.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
    }
}

pub fn write_maps(dir: &Path, maps: &ParameterMaps) -> CliResult<()> {
    for name in MapName::ALL {
        if let Some(values) = maps.map(name) {
            write(&map_path(dir, name), &encode_f32_map(values, maps.width, maps.height))?;
        }
    }
    write(&dir.join(STATUS_FILE), &encode_status_map(&maps.status, maps.width, maps.height))?;
    let report = serde_json::to_string_pretty(&Report::new(maps)).expect("report serializes");
    write(&dir.join(REPORT_FILE), report.as_bytes())
}

pub fn read_maps(dir: &Path, width: usize, height: usize) -> CliResult<ParameterMaps> {
    let load = |name: MapName| -> CliResult<Option<Vec<f64>>> {
        let path = map_path(dir, name);
        if name == MapName::SkinProbability && !path.exists() {
            return Ok(None);
        }
        let (w, h, v) = decode_f32_map(&read(&path)?).map_err(|e| CliError::input(&path.display().to_string(), e))?;
        if (w, h) != (width, height) {
            return Err(CliError::Parse(format!("{}: map is {w}×{h}, cube is {width}×{height}", path.display())));
        }
        Ok(Some(v))
    };
    let status_path = dir.join(STATUS_FILE);
    let (w, h, status) =
        decode_status_map(&read(&status_path)?).map_err(|e| CliError::input(&status_path.display().to_string(), e))?;
    if (w, h) != (width, height) {
        return Err(CliError::Parse(format!("{}: status map is {w}×{h}", status_path.display())));
    }
    let need = |name| load(name).map(|v| v.expect("required map"));
    Ok(ParameterMaps {
        width,
        height,
        i_d: need(MapName::IDiffuse)?,
        i_s: need(MapName::ISpecular)?,
        f_mel: need(MapName::FMel)?,
        f_blood: need(MapName::FBlood)?,
        status,
        relative_error: need(MapName::RelativeError)?,
        skin_probability: load(MapName::SkinProbability)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PixelParams {
    pub i_d: f64,
    pub i_s: f64,
    pub f_mel: f64,
    pub f_blood: f64,
}

/// Per-pixel spectra and fit readout.
#[derive(Debug, Clone, Serialize)]
pub struct PixelReport {
    pub x: usize,
    pub y: usize,
    pub wavelengths: Vec<f64>,
    pub observed: Vec<f64>,
    pub reconstructed: Vec<f64>,
    pub reflectance: Vec<f64>,
    pub params: PixelParams,
    pub status: FitStatus,
    pub relative_error: f64,
    pub skin_probability: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MapRange {
    pub name: &'static str,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub width: usize,
    pub height: usize,
    pub grid: WavelengthGrid,
    pub wavelengths: Vec<f64>,
    pub maps: Vec<MapRange>,
    pub has_skin_probability: bool,
    pub gamma: f64,
}

/// A loaded decomposition. Immutable; edits derive new images.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub dir: PathBuf,
    pub config: Config,
    pub env: Environment,
    pub cube: MultispectralCube,
    pub maps: ParameterMaps,
}

impl Decomposition {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let config = Config::load(&dir.join(CONFIG_FILE))?;
        let env = Environment::new(&config)?;
        let cube = env.load_cube(&dir.join(CUBE_FILE))?;
        let maps = read_maps(dir, cube.width(), cube.height())?;
        Ok(Decomposition {
            dir: dir.to_path_buf(),
            config,
            env,
            cube,
            maps,
        })
    }

    /// Applies a classifier and stores its probability map in the directory.
    pub fn apply_model(&mut self, model: &MlpModel) -> CliResult<()> {
        let p = skinspec_core::segmenter::predict_map(model, &self.cube, &self.maps)?;
        self.maps.skin_probability = Some(p);
        write_maps(&self.dir, &self.maps)
    }

    fn render_maps(&self, maps: &ParameterMaps) -> CoreResult<Vec<u8>> {
        let recomposed = recompose(maps, &self.env.illuminant, &self.env.model, &self.cube)?;
        encode_png(&render_image(&self.env.pipeline, &recomposed)?)
    }

    /// PNG of the unedited reconstruction.
    pub fn render_png(&self) -> CoreResult<Vec<u8>> {
        self.render_maps(&self.maps)
    }

    /// PNG of the observed cube.
    pub fn render_observed_png(&self) -> CoreResult<Vec<u8>> {
        encode_png(&render_image(&self.env.pipeline, &self.cube)?)
    }

    /// apply_edit → recompose → render. Shared by the CLI and the service.
    pub fn edit_render_png(&self, script: &EditScript, masks: &HashMap<String, RegionMask>) -> CoreResult<Vec<u8>> {
        let edited = apply_edit(&self.maps, script, masks)?;
        self.render_maps(&edited)
    }

    pub fn map_values(&self, stem: &str) -> Option<Vec<f64>> {
        if stem == "status" {
            return Some(self.maps.status.iter().map(|s| s.code() as f64).collect());
        }
        self.maps.map(MapName::from_stem(stem)?).map(<[f64]>::to_vec)
    }

    pub fn map_bin(&self, stem: &str) -> Option<Vec<u8>> {
        let (w, h) = (self.maps.width, self.maps.height);
        if stem == "status" {
            return Some(encode_status_map(&self.maps.status, w, h));
        }
        self.map_values(stem).map(|v| encode_f32_map(&v, w, h))
    }

    pub fn map_png(&self, stem: &str) -> Option<CoreResult<Vec<u8>>> {
        let v = self.map_values(stem)?;
        Some(encode_png(&false_colour(&v, self.maps.width, self.maps.height)))
    }

    pub fn pixel(&self, x: usize, y: usize) -> Option<PixelReport> {
        if x >= self.cube.width() || y >= self.cube.height() {
            return None;
        }
        let i = y * self.cube.width() + x;
        let p = self.maps.params(i);
        let mut r = vec![0.0; self.env.grid.count()];
        self.env.model.reflectance_into(&p.bio, &mut r);
        let reconstructed = r
            .iter()
            .zip(self.env.illuminant.values())
            .map(|(r, e)| e * (p.i_d * r + p.i_s))
            .collect();
        Some(PixelReport {
            x,
            y,
            wavelengths: self.env.grid.samples().collect(),
            observed: self.cube.pixel_f64(i),
            reconstructed,
            reflectance: r,
            params: PixelParams {
                i_d: p.i_d,
                i_s: p.i_s,
                f_mel: p.bio.f_mel,
                f_blood: p.bio.f_blood,
            },
            status: self.maps.status[i],
            relative_error: self.maps.relative_error[i],
            skin_probability: self.maps.skin_probability.as_ref().map(|v| v[i]),
        })
    }

    pub fn meta(&self) -> Meta {
        let maps = MapName::ALL
            .iter()
            .filter_map(|m| {
                let v = self.maps.map(*m)?;
                let (min, max) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
                Some(MapRange { name: m.stem(), min, max })
            })
            .collect();
        Meta {
            width: self.cube.width(),
            height: self.cube.height(),
            grid: self.env.grid,
            wavelengths: self.env.grid.samples().collect(),
            maps,
            has_skin_probability: self.maps.skin_probability.is_some(),
            gamma: self.env.pipeline.gamma(),
        }
    }
}

/// Masks named in `script`, read as PNG files relative to `base`.
pub fn load_mask_files(script: &EditScript, base: &Path) -> CliResult<HashMap<String, RegionMask>> {
    let mut masks = HashMap::new();
    for name in script.mask_names() {
        if masks.contains_key(name) {
            continue;
        }
        let path = base.join(name);
        let mask = RegionMask::from_png(&read(&path)?).map_err(|e| CliError::input(&path.display().to_string(), e))?;
        masks.insert(name.to_string(), mask);
    }
    Ok(masks)
}
