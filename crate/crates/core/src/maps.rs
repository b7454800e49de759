//! Per-pixel parameter maps and their on-disk form.
//!
//! Map files (`*.bin`): magic `MSMAP1`, a dtype byte (1 = f32, 2 = u8), then
//! little-endian `u32` width and height, then row-major samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{BioParams, SkinParams};

pub const MAP_MAGIC: &[u8; 6] = b"MSMAP1";
const DTYPE_F32: u8 = 1;
const DTYPE_U8: u8 = 2;

/// Outcome class of a per-pixel fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStatus {
    Converged,
    MaxIterations,
    DarkPixel,
    Failed,
}

impl FitStatus {
    pub fn code(self) -> u8 {
        match self {
            FitStatus::Converged => 0,
            FitStatus::MaxIterations => 1,
            FitStatus::DarkPixel => 2,
            FitStatus::Failed => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => FitStatus::Converged,
            1 => FitStatus::MaxIterations,
            2 => FitStatus::DarkPixel,
            3 => FitStatus::Failed,
            _ => return None,
        })
    }
}

/// The scalar maps a decomposition produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapName {
    IDiffuse,
    ISpecular,
    FMel,
    FBlood,
    SkinProbability,
    RelativeError,
}

impl MapName {
    pub const ALL: [MapName; 6] = [
        MapName::IDiffuse,
        MapName::ISpecular,
        MapName::FMel,
        MapName::FBlood,
        MapName::SkinProbability,
        MapName::RelativeError,
    ];

    /// File stem used on disk and in URLs.
    pub fn stem(self) -> &'static str {
        match self {
            MapName::IDiffuse => "i_d",
            MapName::ISpecular => "i_s",
            MapName::FMel => "f_mel",
            MapName::FBlood => "f_blood",
            MapName::SkinProbability => "skin_probability",
            MapName::RelativeError => "relative_error",
        }
    }

    pub fn from_stem(stem: &str) -> Option<Self> {
        MapName::ALL.into_iter().find(|m| m.stem() == stem)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMaps {
    pub width: usize,
    pub height: usize,
    pub i_d: Vec<f64>,
    pub i_s: Vec<f64>,
    pub f_mel: Vec<f64>,
    pub f_blood: Vec<f64>,
    pub status: Vec<FitStatus>,
    pub relative_error: Vec<f64>,
    pub skin_probability: Option<Vec<f64>>,
}

impl ParameterMaps {
    /// Maps filled with a uniform parameter set, all pixels `Converged`.
    pub fn uniform(width: usize, height: usize, params: SkinParams) -> Self {
        let n = width * height;
        ParameterMaps {
            width,
            height,
            i_d: vec![params.i_d; n],
            i_s: vec![params.i_s; n],
            f_mel: vec![params.bio.f_mel; n],
            f_blood: vec![params.bio.f_blood; n],
            status: vec![FitStatus::Converged; n],
            relative_error: vec![0.0; n],
            skin_probability: None,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn params(&self, index: usize) -> SkinParams {
        SkinParams {
            i_d: self.i_d[index],
            i_s: self.i_s[index],
            bio: BioParams {
                f_mel: self.f_mel[index],
                f_blood: self.f_blood[index],
            },
        }
    }

    pub fn set_params(&mut self, index: usize, p: &SkinParams) {
        self.i_d[index] = p.i_d;
        self.i_s[index] = p.i_s;
        self.f_mel[index] = p.bio.f_mel;
        self.f_blood[index] = p.bio.f_blood;
    }

    pub fn map(&self, name: MapName) -> Option<&[f64]> {
        Some(match name {
            MapName::IDiffuse => &self.i_d,
            MapName::ISpecular => &self.i_s,
            MapName::FMel => &self.f_mel,
            MapName::FBlood => &self.f_blood,
            MapName::RelativeError => &self.relative_error,
            MapName::SkinProbability => return self.skin_probability.as_deref(),
        })
    }

    pub fn map_mut(&mut self, name: MapName) -> Option<&mut Vec<f64>> {
        Some(match name {
            MapName::IDiffuse => &mut self.i_d,
            MapName::ISpecular => &mut self.i_s,
            MapName::FMel => &mut self.f_mel,
            MapName::FBlood => &mut self.f_blood,
            MapName::RelativeError => &mut self.relative_error,
            MapName::SkinProbability => return self.skin_probability.as_mut(),
        })
    }

    pub fn check_dimensions(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch(format!(
                "maps are {}×{}, expected {width}×{height}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

fn header(dtype: u8, width: usize, height: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(15);
    out.extend_from_slice(MAP_MAGIC);
    out.push(dtype);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    out
}

pub fn encode_f32_map(values: &[f64], width: usize, height: usize) -> Vec<u8> {
    let mut out = header(DTYPE_F32, width, height);
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn encode_status_map(status: &[FitStatus], width: usize, height: usize) -> Vec<u8> {
    let mut out = header(DTYPE_U8, width, height);
    out.extend(status.iter().map(|s| s.code()));
    out
}

fn decode_header(bytes: &[u8], dtype: u8) -> Result<(usize, usize, &[u8])> {
    let err = |offset, message: String| Error::ParseOffset { offset, message };
    if bytes.len() < 15 {
        return Err(err(bytes.len(), "map file shorter than its header".into()));
    }
    if &bytes[..6] != MAP_MAGIC {
        return Err(err(0, "missing MSMAP1 magic".into()));
    }
    if bytes[6] != dtype {
        return Err(err(6, format!("dtype {} where {dtype} was expected", bytes[6])));
    }
    let w = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
    let elem = if dtype == DTYPE_F32 { 4 } else { 1 };
    let body = &bytes[15..];
    if body.len() != w * h * elem {
        return Err(err(
            15 + body.len().min(w * h * elem),
            format!("{w}×{h} map needs {} payload bytes, found {}", w * h * elem, body.len()),
        ));
    }
    Ok((w, h, body))
}

pub fn decode_f32_map(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let (w, h, body) = decode_header(bytes, DTYPE_F32)?;
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((w, h, values))
}

pub fn decode_status_map(bytes: &[u8]) -> Result<(usize, usize, Vec<FitStatus>)> {
    let (w, h, body) = decode_header(bytes, DTYPE_U8)?;
    let status = body
        .iter()
        .enumerate()
        .map(|(i, c)| {
            FitStatus::from_code(*c).ok_or(Error::ParseOffset {
                offset: 15 + i,
                message: format!("unknown status code {c}"),
            })
        })
        .collect::<Result<_>>()?;
    Ok((w, h, status))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_codec_round_trip() {
        let v = vec![0.25, 1.5, 0.0, 0.4375];
        let (w, h, back) = decode_f32_map(&encode_f32_map(&v, 2, 2)).unwrap();
        assert_eq!((w, h), (2, 2));
        assert_eq!(back, v);
        let s = vec![FitStatus::Converged, FitStatus::DarkPixel, FitStatus::Failed];
        assert_eq!(decode_status_map(&encode_status_map(&s, 3, 1)).unwrap().2, s);
    }

    #[test]
    fn truncated_map_rejected() {
        let mut b = encode_f32_map(&[1.0, 2.0], 2, 1);
        b.pop();
        assert!(matches!(decode_f32_map(&b), Err(Error::ParseOffset { .. })));
        assert!(decode_status_map(&encode_f32_map(&[1.0], 1, 1)).is_err());
    }

    #[test]
    fn map_names() {
        for m in MapName::ALL {
            assert_eq!(MapName::from_stem(m.stem()), Some(m));
        }
        assert_eq!(MapName::from_stem("nope"), None);
    }
}
