//! Declarative edits on parameter maps and probability-weighted recomposition
//! of edited skin radiance with the observed image.
//!
//! Scripts are sequential: each op sees the output of the previous one.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::MultispectralCube;
use crate::error::{Error, Result};
use crate::forward::{SkinModel, F_BLOOD_MAX, F_BLOOD_MIN, F_MEL_MAX, F_MEL_MIN};
use crate::maps::ParameterMaps;
use crate::spectral::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    #[serde(rename = "f_mel")]
    FMel,
    #[serde(rename = "f_blood")]
    FBlood,
    #[serde(rename = "i_d")]
    IDiffuse,
    #[serde(rename = "i_s")]
    ISpecular,
}

impl Target {
    /// Valid value range of the target map.
    pub fn range(self) -> (f64, f64) {
        match self {
            Target::FMel => (F_MEL_MIN, F_MEL_MAX),
            Target::FBlood => (F_BLOOD_MIN, F_BLOOD_MAX),
            Target::IDiffuse | Target::ISpecular => (0.0, f64::INFINITY),
        }
    }

    fn map_mut(self, maps: &mut ParameterMaps) -> &mut Vec<f64> {
        match self {
            Target::FMel => &mut maps.f_mel,
            Target::FBlood => &mut maps.f_blood,
            Target::IDiffuse => &mut maps.i_d,
            Target::ISpecular => &mut maps.i_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EditKind {
    Scale(f64),
    Offset(f64),
    /// Odd square window edge length.
    MedianFilter(usize),
    SetConstant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditOp {
    pub target: Target,
    pub kind: EditKind,
    /// Name of a region mask; `None` edits the whole map.
    pub mask: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindTag {
    Scale,
    Offset,
    MedianFilter,
    SetConstant,
}

/// Wire form of one op.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOp {
    target: Target,
    kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<String>,
}

impl TryFrom<RawOp> for EditOp {
    type Error = Error;

    fn try_from(raw: RawOp) -> Result<Self> {
        let need_value = |tag: &str| {
            raw.value
                .ok_or_else(|| Error::InvalidEdit(format!("{tag} on {:?} needs a \"value\"", raw.target)))
        };
        let no = |field: bool, what: &str, tag: &str| {
            if field {
                Err(Error::InvalidEdit(format!("{tag} does not take \"{what}\"")))
            } else {
                Ok(())
            }
        };
        let kind = match raw.kind {
            KindTag::Scale => {
                no(raw.window.is_some(), "window", "scale")?;
                EditKind::Scale(need_value("scale")?)
            }
            KindTag::Offset => {
                no(raw.window.is_some(), "window", "offset")?;
                EditKind::Offset(need_value("offset")?)
            }
            KindTag::SetConstant => {
                no(raw.window.is_some(), "window", "set_constant")?;
                EditKind::SetConstant(need_value("set_constant")?)
            }
            KindTag::MedianFilter => {
                no(raw.value.is_some(), "value", "median_filter")?;
                EditKind::MedianFilter(
                    raw.window
                        .ok_or_else(|| Error::InvalidEdit("median_filter needs a \"window\"".into()))?,
                )
            }
        };
        let op = EditOp {
            target: raw.target,
            kind,
            mask: raw.mask,
        };
        op.validate()?;
        Ok(op)
    }
}

impl From<&EditOp> for RawOp {
    fn from(op: &EditOp) -> Self {
        let (kind, value, window) = match op.kind {
            EditKind::Scale(v) => (KindTag::Scale, Some(v), None),
            EditKind::Offset(v) => (KindTag::Offset, Some(v), None),
            EditKind::SetConstant(v) => (KindTag::SetConstant, Some(v), None),
            EditKind::MedianFilter(w) => (KindTag::MedianFilter, None, Some(w)),
        };
        RawOp {
            target: op.target,
            kind,
            value,
            window,
            mask: op.mask.clone(),
        }
    }
}

impl EditOp {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidEdit(m));
        match self.kind {
            EditKind::Scale(k) if !(k >= 0.0 && k.is_finite()) => bad(format!("scale factor {k} must be finite and ≥ 0")),
            EditKind::Offset(b) if !b.is_finite() => bad(format!("offset {b} must be finite")),
            EditKind::MedianFilter(w) if w < 3 || w % 2 == 0 => bad(format!("median window {w} must be odd and ≥ 3")),
            EditKind::SetConstant(v) => {
                let (lo, hi) = self.target.range();
                if v.is_finite() && v >= lo && v <= hi {
                    Ok(())
                } else {
                    bad(format!("constant {v} outside the valid range [{lo}, {hi}] of {:?}", self.target))
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
}

impl EditScript {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Vec<RawOp> =
            serde_json::from_str(text).map_err(|e| Error::InvalidEdit(format!("edit script JSON: {e}")))?;
        let ops = raw
            .into_iter()
            .enumerate()
            .map(|(i, r)| EditOp::try_from(r).map_err(|e| Error::InvalidEdit(format!("op {i}: {e}"))))
            .collect::<Result<_>>()?;
        Ok(EditScript { ops })
    }

    pub fn to_json(&self) -> String {
        let raw: Vec<RawOp> = self.ops.iter().map(RawOp::from).collect();
        serde_json::to_string(&raw).expect("edit ops serialize")
    }

    pub fn mask_names(&self) -> impl Iterator<Item = &str> {
        self.ops.iter().filter_map(|o| o.mask.as_deref())
    }
}

/// Binary region, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub width: usize,
    pub height: usize,
    pub inside: Vec<bool>,
}

impl RegionMask {
    /// Pixels with value ≥ 128 are inside.
    pub fn from_gray(img: &image::GrayImage) -> Self {
        RegionMask {
            width: img.width() as usize,
            height: img.height() as usize,
            inside: img.pixels().map(|p| p.0[0] >= 128).collect(),
        }
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
        Ok(Self::from_gray(&img.to_luma8()))
    }
}

fn median_filter(values: &[f64], width: usize, height: usize, window: usize) -> Vec<f64> {
    let r = (window / 2) as isize;
    let mut buf = Vec::with_capacity(window * window);
    let mut out = vec![0.0; values.len()];
    for y in 0..height as isize {
        for x in 0..width as isize {
            buf.clear();
            for dy in -r..=r {
                let yy = (y + dy).clamp(0, height as isize - 1) as usize;
                for dx in -r..=r {
                    let xx = (x + dx).clamp(0, width as isize - 1) as usize;
                    buf.push(values[yy * width + xx]);
                }
            }
            let mid = buf.len() / 2;
            let (_, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
            out[y as usize * width + x as usize] = *m;
        }
    }
    out
}

/// Applies `script` in order, resolving mask names through `masks`. The input
/// maps are not modified; pixels outside an op's mask are left bitwise intact.
pub fn apply_edit(
    maps: &ParameterMaps,
    script: &EditScript,
    masks: &HashMap<String, RegionMask>,
) -> Result<ParameterMaps> {
    let mut out = maps.clone();
    for (i, op) in script.ops.iter().enumerate() {
        op.validate()?;
        let region = match &op.mask {
            None => None,
            Some(name) => {
                let m = masks
                    .get(name)
                    .ok_or_else(|| Error::InvalidEdit(format!("op {i}: unknown mask {name:?}")))?;
                if m.width != maps.width || m.height != maps.height || m.inside.len() != maps.pixel_count() {
                    return Err(Error::DimensionMismatch(format!(
                        "mask {name:?} is {}×{}, maps are {}×{}",
                        m.width, m.height, maps.width, maps.height
                    )));
                }
                Some(&m.inside)
            }
        };
        let (lo, hi) = op.target.range();
        let (w, h) = (out.width, out.height);
        let values = op.target.map_mut(&mut out);
        let filtered = match op.kind {
            EditKind::MedianFilter(win) => Some(median_filter(values, w, h, win)),
            _ => None,
        };
        for (k, v) in values.iter_mut().enumerate() {
            if region.is_some_and(|r| !r[k]) {
                continue;
            }
            let new = match op.kind {
                EditKind::Scale(s) => *v * s,
                EditKind::Offset(b) => *v + b,
                EditKind::SetConstant(c) => c,
                EditKind::MedianFilter(_) => filtered.as_ref().unwrap()[k],
            };
            *v = new.clamp(lo, hi);
        }
    }
    Ok(out)
}

/// `p·diag(e)(i_d·r + i_s) + (1 − p)·l_obs` per pixel.
pub fn recompose(
    maps: &ParameterMaps,
    e: &Spectrum,
    model: &SkinModel,
    l_obs: &MultispectralCube,
) -> Result<MultispectralCube> {
    let p = maps.skin_probability.as_ref().ok_or(Error::MissingProbability)?;
    maps.check_dimensions(l_obs.width(), l_obs.height())?;
    e.check_grid(model.grid(), "illuminant")?;
    e.check_grid(l_obs.grid(), "illuminant")?;
    let d = model.grid().count();
    let ev = e.values();
    let mut data = vec![0f32; l_obs.data().len()];
    data.par_chunks_mut(d).enumerate().for_each(|(i, out)| {
        let obs = l_obs.pixel(i);
        let pi = p[i];
        if pi <= 0.0 {
            out.copy_from_slice(obs);
            return;
        }
        let params = maps.params(i);
        let mut r = vec![0.0; d];
        model.reflectance_into(&params.bio, &mut r);
        for k in 0..d {
            let skin = ev[k] * (params.i_d * r[k] + params.i_s);
            let v = if pi >= 1.0 {
                skin
            } else {
                pi * skin + (1.0 - pi) * obs[k] as f64
            };
            out[k] = v.max(0.0) as f32;
        }
    });
    Ok(MultispectralCube::new(l_obs.width(), l_obs.height(), *l_obs.grid(), data)?.with_units(l_obs.units()))
}
