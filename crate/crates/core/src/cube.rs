//! H×W×D radiance cubes and the `MSC1` container.
//!
//! Layout: magic `MSC1`, a little-endian `u32` header length, a UTF-8 JSON
//! header, then `width·height·count` little-endian `f32` samples stored
//! row-major with the channel index fastest.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{resample_values, Extrapolation, Spectrum, TabulatedFunction, WavelengthGrid};

pub const MSC_MAGIC: &[u8; 4] = b"MSC1";

#[derive(Debug, Clone, PartialEq)]
pub struct MultispectralCube {
    width: usize,
    height: usize,
    grid: WavelengthGrid,
    units: String,
    data: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MscHeader {
    width: usize,
    height: usize,
    grid: WavelengthGrid,
    units: String,
    endianness: String,
}

impl MultispectralCube {
    pub fn new(width: usize, height: usize, grid: WavelengthGrid, data: Vec<f32>) -> Result<Self> {
        let expected = width * height * grid.count();
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "cube data has {} samples, expected {width}×{height}×{} = {expected}",
                data.len(),
                grid.count()
            )));
        }
        if let Some((index, v)) = data.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::NegativeRadiance {
                index,
                value: *v as f64,
            });
        }
        Ok(MultispectralCube {
            width,
            height,
            grid,
            units: "relative radiance".to_string(),
            data,
        })
    }

    /// Builds a cube from per-pixel spectra in row-major order.
    pub fn from_pixels(width: usize, height: usize, grid: WavelengthGrid, pixels: &[Vec<f64>]) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}×{height} cube",
                pixels.len()
            )));
        }
        let data = pixels.iter().flat_map(|p| p.iter().map(|v| *v as f32)).collect();
        MultispectralCube::new(width, height, grid, data)
    }

    pub fn with_units(mut self, units: impl Into<String>) -> Self {
        self.units = units.into();
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn units(&self) -> &str {
        &self.units
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Raw samples of pixel `index` (row-major).
    pub fn pixel(&self, index: usize) -> &[f32] {
        let d = self.grid.count();
        &self.data[index * d..(index + 1) * d]
    }

    pub fn pixel_at(&self, x: usize, y: usize) -> &[f32] {
        self.pixel(y * self.width + x)
    }

    pub fn pixel_f64(&self, index: usize) -> Vec<f64> {
        self.pixel(index).iter().map(|v| *v as f64).collect()
    }

    pub fn pixel_spectrum(&self, index: usize) -> Spectrum {
        Spectrum::new(self.grid, self.pixel_f64(index)).expect("cube samples are validated on construction")
    }

    /// Mean over every sample of every pixel, summed in storage order.
    pub fn mean_radiance(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|v| *v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Resamples every pixel onto `grid`, holding endpoint values outside the
    /// cube's own range. Returns the cube unchanged if it already matches.
    pub fn conform_to(self, grid: &WavelengthGrid) -> Result<Self> {
        if &self.grid == grid {
            return Ok(self);
        }
        log::info!(
            "resampling cube from {}–{} nm ({} channels) to {}–{} nm ({} channels)",
            self.grid.lambda_min(),
            self.grid.lambda_max(),
            self.grid.count(),
            grid.lambda_min(),
            grid.lambda_max(),
            grid.count()
        );
        let source: Vec<f64> = self.grid.samples().collect();
        let mut data = Vec::with_capacity(self.pixel_count() * grid.count());
        for i in 0..self.pixel_count() {
            let table = TabulatedFunction::new(
                source
                    .iter()
                    .zip(self.pixel(i))
                    .map(|(l, v)| (*l, *v as f64))
                    .collect(),
            )?;
            let values = resample_values(&table, grid, Extrapolation::HoldEndpoints)?;
            data.extend(values.into_iter().map(|v| v as f32));
        }
        let units = self.units.clone();
        Ok(MultispectralCube::new(self.width, self.height, *grid, data)?.with_units(units))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = MscHeader {
            width: self.width,
            height: self.height,
            grid: self.grid,
            units: self.units.clone(),
            endianness: "little".to_string(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + json.len() + 4 * self.data.len());
        out.extend_from_slice(MSC_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |offset: usize, message: String| Error::ParseOffset { offset, message };
        if bytes.len() < 8 {
            return Err(err(bytes.len(), "stream too short for an MSC1 preamble".into()));
        }
        if &bytes[..4] != MSC_MAGIC {
            return Err(err(0, "missing MSC1 magic".into()));
        }
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let data_start = 8usize
            .checked_add(header_len)
            .filter(|end| *end <= bytes.len())
            .ok_or_else(|| err(4, format!("header length {header_len} exceeds stream")))?;
        let header: MscHeader =
            serde_json::from_slice(&bytes[8..data_start]).map_err(|e| err(8 + e.column().saturating_sub(1), format!("bad header: {e}")))?;
        if header.endianness != "little" {
            return Err(err(8, format!("unsupported endianness `{}`", header.endianness)));
        }
        let expected = header.width * header.height * header.grid.count();
        let payload = &bytes[data_start..];
        if payload.len() != expected * 4 {
            return Err(err(
                data_start + payload.len().min(expected * 4),
                format!(
                    "header declares {}×{}×{} samples ({} bytes) but payload has {} bytes",
                    header.width,
                    header.height,
                    header.grid.count(),
                    expected * 4,
                    payload.len()
                ),
            ));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(MultispectralCube::new(header.width, header.height, header.grid, data)?.with_units(header.units))
    }
}
