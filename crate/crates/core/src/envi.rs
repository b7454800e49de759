//! Minimal ENVI reader: a text `.hdr` plus a raw binary image, converted to a
//! [`MultispectralCube`] on a chosen wavelength grid.

use std::collections::HashMap;

use crate::cube::MultispectralCube;
use crate::error::{Error, Result};
use crate::spectral::{Extrapolation, TabulatedFunction, WavelengthGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interleave {
    Bsq,
    Bil,
    Bip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnviHeader {
    pub samples: usize,
    pub lines: usize,
    pub bands: usize,
    pub data_type: u32,
    pub interleave: Interleave,
    pub byte_order_big: bool,
    pub header_offset: usize,
    /// Band centres in nm.
    pub wavelengths: Vec<f64>,
}

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::ParseLine {
        line,
        message: message.into(),
    }
}

impl EnviHeader {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == "ENVI" => {}
            _ => return Err(bad(1, "header must start with ENVI")),
        }
        let mut fields: HashMap<String, (usize, String)> = HashMap::new();
        while let Some((n, line)) = lines.next() {
            let Some((key, value)) = line.split_once('=') else {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(bad(n + 1, format!("expected key = value, got {line:?}")));
            };
            let mut value = value.trim().to_string();
            if value.starts_with('{') {
                while !value.contains('}') {
                    let (_, more) = lines.next().ok_or_else(|| bad(n + 1, "unterminated { list"))?;
                    value.push(' ');
                    value.push_str(more.trim());
                }
            }
            fields.insert(key.trim().to_ascii_lowercase(), (n + 1, value));
        }
        let int = |k: &str| -> Result<usize> {
            let (n, v) = fields.get(k).ok_or_else(|| bad(0, format!("missing required field {k:?}")))?;
            v.parse().map_err(|_| bad(*n, format!("{k} must be an integer, got {v:?}")))
        };
        let opt_int = |k: &str, default: usize| -> Result<usize> {
            if fields.contains_key(k) {
                int(k)
            } else {
                Ok(default)
            }
        };
        let (samples, lines_, bands) = (int("samples")?, int("lines")?, int("bands")?);
        let data_type = int("data type")? as u32;
        let interleave = match fields.get("interleave").map(|(_, v)| v.to_ascii_lowercase()) {
            None => Interleave::Bsq,
            Some(v) if v == "bsq" => Interleave::Bsq,
            Some(v) if v == "bil" => Interleave::Bil,
            Some(v) if v == "bip" => Interleave::Bip,
            Some(v) => return Err(bad(fields["interleave"].0, format!("unknown interleave {v:?}"))),
        };
        let (wl_line, wl) = fields
            .get("wavelength")
            .ok_or_else(|| bad(0, "missing required field \"wavelength\""))?;
        let mut wavelengths: Vec<f64> = wl
            .trim_matches(|c| c == '{' || c == '}' || char::is_whitespace(c))
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad(*wl_line, format!("bad wavelength {s:?}"))))
            .collect::<Result<_>>()?;
        if wavelengths.len() != bands {
            return Err(bad(*wl_line, format!("{} wavelengths for {bands} bands", wavelengths.len())));
        }
        if fields
            .get("wavelength units")
            .is_some_and(|(_, u)| matches!(u.to_ascii_lowercase().as_str(), "micrometers" | "um" | "microns"))
        {
            wavelengths.iter_mut().for_each(|w| *w *= 1000.0);
        }
        Ok(EnviHeader {
            samples,
            lines: lines_,
            bands,
            data_type,
            interleave,
            byte_order_big: opt_int("byte order", 0)? == 1,
            header_offset: opt_int("header offset", 0)?,
            wavelengths,
        })
    }

    fn element_size(&self) -> Result<usize> {
        Ok(match self.data_type {
            1 => 1,
            2 | 12 => 2,
            3 | 4 | 13 => 4,
            5 => 8,
            t => return Err(Error::InvalidArgument(format!("unsupported ENVI data type {t}"))),
        })
    }
}

fn decode(bytes: &[u8], data_type: u32, big: bool) -> f64 {
    macro_rules! num {
        ($t:ty) => {{
            let a = bytes.try_into().unwrap();
            (if big { <$t>::from_be_bytes(a) } else { <$t>::from_le_bytes(a) }) as f64
        }};
    }
    match data_type {
        1 => bytes[0] as f64,
        2 => num!(i16),
        12 => num!(u16),
        3 => num!(i32),
        13 => num!(u32),
        4 => num!(f32),
        5 => num!(f64),
        _ => unreachable!("checked by element_size"),
    }
}

/// Converts an ENVI image to a cube on `grid`. Each pixel spectrum is
/// linearly interpolated over the band centres with endpoint hold; negative
/// samples (sensor noise) are floored at zero.
pub fn to_cube(header: &EnviHeader, data: &[u8], grid: &WavelengthGrid) -> Result<MultispectralCube> {
    let es = header.element_size()?;
    let (w, h, b) = (header.samples, header.lines, header.bands);
    let need = header.header_offset + w * h * b * es;
    if data.len() < need {
        return Err(Error::ParseOffset {
            offset: data.len(),
            message: format!("ENVI data has {} bytes, header implies {need}", data.len()),
        });
    }
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|i, j| header.wavelengths[*i].total_cmp(&header.wavelengths[*j]));
    let body = &data[header.header_offset..];
    let at = |x: usize, y: usize, band: usize| -> f64 {
        let idx = match header.interleave {
            Interleave::Bsq => (band * h + y) * w + x,
            Interleave::Bil => (y * b + band) * w + x,
            Interleave::Bip => (y * w + x) * b + band,
        };
        decode(&body[idx * es..(idx + 1) * es], header.data_type, header.byte_order_big)
    };
    let mut clamped = 0usize;
    let mut out = Vec::with_capacity(w * h * grid.count());
    for y in 0..h {
        for x in 0..w {
            let points: Vec<(f64, f64)> = order
                .iter()
                .map(|&band| {
                    let v = at(x, y, band);
                    if v < 0.0 {
                        clamped += 1;
                    }
                    (header.wavelengths[band], v.max(0.0))
                })
                .collect();
            let f = TabulatedFunction::new(points)?;
            for l in grid.samples() {
                out.push(f.eval(l, Extrapolation::HoldEndpoints)? as f32);
            }
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} negative ENVI samples floored at zero");
    }
    MultispectralCube::new(w, h, *grid, out)
}
