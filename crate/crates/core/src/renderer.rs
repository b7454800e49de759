//! Spectral radiance to nonlinear sRGB.
//!
//! `raw = Sᵀl`, white balance divides by the camera response to a perfect
//! white reflector under the pipeline illuminant, a 3×3 matrix takes balanced
//! camera RGB to linear sRGB, and a single power `1/γ` encodes the result.

use std::io::Read;

use image::{ImageEncoder, Rgb, RgbImage};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::cube::MultispectralCube;
use crate::error::{Error, Result};
use crate::forward::{BioParams, SkinModel, F_BLOOD_MAX, F_BLOOD_MIN, F_MEL_MAX, F_MEL_MIN};
use crate::spectral::{bundled, load_columns, resample_values, Extrapolation, Spectrum, TableFormat, WavelengthGrid};

pub const DEFAULT_GAMMA: f64 = 2.4;

/// IEC 61966-2-1 XYZ → linear sRGB.
const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

/// Rec. 709 luminance weights on linear sRGB.
pub fn luminance(rgb: [f64; 3]) -> f64 {
    0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityKind {
    Cie1931,
    Camera,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraSensitivity {
    grid: WavelengthGrid,
    channels: [Vec<f64>; 3],
    kind: SensitivityKind,
}

impl CameraSensitivity {
    pub fn new(grid: WavelengthGrid, channels: [Vec<f64>; 3]) -> Result<Self> {
        Self::with_kind(grid, channels, SensitivityKind::Camera)
    }

    fn with_kind(grid: WavelengthGrid, channels: [Vec<f64>; 3], kind: SensitivityKind) -> Result<Self> {
        for (c, ch) in channels.iter().enumerate() {
            if ch.len() != grid.count() {
                return Err(Error::GridMismatch(format!(
                    "sensitivity channel {c} has {} samples, grid has {}",
                    ch.len(),
                    grid.count()
                )));
            }
            if ch.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidArgument(format!("sensitivity channel {c} must be finite and non-negative")));
            }
            if !ch.iter().any(|v| *v > 0.0) {
                return Err(Error::InvalidArgument(format!("sensitivity channel {c} is identically zero")));
            }
        }
        Ok(CameraSensitivity { grid, channels, kind })
    }

    /// CIE 1931 colour matching functions on `grid`.
    pub fn cie_1931(grid: &WavelengthGrid) -> Result<Self> {
        let [x, y, z] = bundled::cie_1931_cmf();
        let ch = [
            resample_values(&x, grid, Extrapolation::Disabled)?,
            resample_values(&y, grid, Extrapolation::Disabled)?,
            resample_values(&z, grid, Extrapolation::Disabled)?,
        ];
        Self::with_kind(*grid, ch, SensitivityKind::Cie1931)
    }

    /// Reads a `wavelength_nm,R,G,B` CSV and resamples it onto `grid`.
    pub fn from_csv(source: impl Read, grid: &WavelengthGrid) -> Result<Self> {
        let cols = load_columns(source, TableFormat::Csv, 3)?;
        let ch = [
            resample_values(&cols[0], grid, Extrapolation::Disabled)?,
            resample_values(&cols[1], grid, Extrapolation::Disabled)?,
            resample_values(&cols[2], grid, Extrapolation::Disabled)?,
        ];
        Self::new(*grid, ch)
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn channels(&self) -> &[Vec<f64>; 3] {
        &self.channels
    }

    pub fn kind(&self) -> SensitivityKind {
        self.kind
    }

    fn respond(&self, l: &[f64]) -> [f64; 3] {
        std::array::from_fn(|c| self.channels[c].iter().zip(l).map(|(s, v)| s * v).sum())
    }
}

/// What the spectra handed to the pipeline contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderInput {
    /// Radiance that already includes the illuminant.
    #[default]
    Radiance,
    /// Reflectance; the pipeline multiplies by the illuminant first.
    Reflectance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorPipeline {
    sensitivities: CameraSensitivity,
    illuminant: Spectrum,
    white: [f64; 3],
    /// Sensor-to-linear-sRGB matrix applied after white balance.
    sensor_matrix: Matrix3<f64>,
    /// `sensor_matrix · diag(1/white)`.
    transform: Matrix3<f64>,
    gamma: f64,
    input: RenderInput,
}

/// XYZ → sRGB scaled so that equal balanced XYZ maps to sRGB white.
fn white_normalized_xyz_to_srgb() -> Matrix3<f64> {
    let m = Matrix3::from_fn(|i, j| XYZ_TO_SRGB[i][j]);
    let white_xyz = m.try_inverse().expect("sRGB matrix is invertible") * Vector3::repeat(1.0);
    m * Matrix3::from_diagonal(&white_xyz)
}

pub fn build_pipeline(s: &CameraSensitivity, e: &Spectrum) -> Result<ColorPipeline> {
    e.check_grid(s.grid(), "illuminant")?;
    let white = s.respond(e.values());
    if let Some(c) = white.iter().position(|w| !(*w > 0.0)) {
        return Err(Error::Degenerate(format!(
            "white point response of channel {c} is zero under this illuminant"
        )));
    }
    let sensor_matrix = match s.kind() {
        SensitivityKind::Cie1931 => white_normalized_xyz_to_srgb(),
        SensitivityKind::Camera => fit_camera_matrix(s, e, &white)?,
    };
    let transform = sensor_matrix * Matrix3::from_diagonal(&Vector3::new(1.0 / white[0], 1.0 / white[1], 1.0 / white[2]));
    if transform.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("colour transform is not finite".into()));
    }
    Ok(ColorPipeline {
        sensitivities: s.clone(),
        illuminant: e.clone(),
        white,
        sensor_matrix,
        transform,
        gamma: DEFAULT_GAMMA,
        input: RenderInput::Radiance,
    })
}

/// Least-squares matrix taking white-balanced camera responses of the 24
/// ColorChecker patches to their white-balanced CIE linear sRGB.
fn fit_camera_matrix(s: &CameraSensitivity, e: &Spectrum, white: &[f64; 3]) -> Result<Matrix3<f64>> {
    let grid = s.grid();
    let cie = CameraSensitivity::cie_1931(grid)?;
    let cie_white = cie.respond(e.values());
    let m_cie = white_normalized_xyz_to_srgb();
    let mut aat = Matrix3::zeros();
    let mut bat = Matrix3::zeros();
    for patch in bundled::colorchecker() {
        let r = resample_values(&patch, grid, Extrapolation::HoldEndpoints)?;
        let l: Vec<f64> = r.iter().zip(e.values()).map(|(r, e)| r * e).collect();
        let cam = s.respond(&l);
        let xyz = cie.respond(&l);
        let a = Vector3::new(cam[0] / white[0], cam[1] / white[1], cam[2] / white[2]);
        let b = m_cie * Vector3::new(xyz[0] / cie_white[0], xyz[1] / cie_white[1], xyz[2] / cie_white[2]);
        aat += a * a.transpose();
        bat += b * a.transpose();
    }
    let inv = aat
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("camera responses to the reference patches are rank deficient".into()))?;
    Ok(bat * inv)
}

impl ColorPipeline {
    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn with_input(mut self, input: RenderInput) -> Self {
        self.input = input;
        self
    }

    pub fn grid(&self) -> &WavelengthGrid {
        self.sensitivities.grid()
    }

    pub fn sensitivities(&self) -> &CameraSensitivity {
        &self.sensitivities
    }

    pub fn illuminant(&self) -> &Spectrum {
        &self.illuminant
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn input(&self) -> RenderInput {
        self.input
    }

    pub fn white_point(&self) -> [f64; 3] {
        self.white
    }

    pub fn sensor_matrix(&self) -> &Matrix3<f64> {
        &self.sensor_matrix
    }

    pub fn transform(&self) -> &Matrix3<f64> {
        &self.transform
    }

    fn raw(&self, l: &[f64]) -> [f64; 3] {
        match self.input {
            RenderInput::Radiance => self.sensitivities.respond(l),
            RenderInput::Reflectance => {
                let le: Vec<f64> = l.iter().zip(self.illuminant.values()).map(|(r, e)| r * e).collect();
                self.sensitivities.respond(&le)
            }
        }
    }

    /// Camera response divided by the white point response.
    pub fn white_balanced(&self, l: &[f64]) -> [f64; 3] {
        let raw = self.raw(l);
        std::array::from_fn(|c| raw[c] / self.white[c])
    }

    /// Linear sRGB before clamping.
    pub fn linear_values(&self, l: &[f64]) -> [f64; 3] {
        let v = self.transform * Vector3::from(self.raw(l));
        [v[0], v[1], v[2]]
    }

    pub fn linear_rgb(&self, l: &Spectrum) -> Result<[f64; 3]> {
        l.check_grid(self.grid(), "spectrum")?;
        Ok(self.linear_values(l.values()))
    }

    /// Clamp to [0, 1], then the `1/γ` power.
    pub fn encode(&self, linear: [f64; 3]) -> [f64; 3] {
        linear.map(|v| {
            let c = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            c.powf(1.0 / self.gamma)
        })
    }

    pub fn render_values(&self, l: &[f64]) -> [f64; 3] {
        self.encode(self.linear_values(l))
    }

    pub fn render_pixel(&self, l: &Spectrum) -> Result<[f64; 3]> {
        Ok(self.encode(self.linear_rgb(l)?))
    }

    /// Spectrum that puts reflectance `r` in front of the pipeline, i.e.
    /// `diag(e)·r` for radiance input and `r` itself otherwise.
    fn reflectance_input(&self, r: &[f64]) -> Vec<f64> {
        match self.input {
            RenderInput::Radiance => r.iter().zip(self.illuminant.values()).map(|(r, e)| r * e).collect(),
            RenderInput::Reflectance => r.to_vec(),
        }
    }
}

pub fn quantize(v: f64) -> u8 {
    (255.0 * v).round().clamp(0.0, 255.0) as u8
}

pub fn render_image(pipeline: &ColorPipeline, cube: &MultispectralCube) -> Result<RgbImage> {
    if cube.grid() != pipeline.grid() {
        return Err(Error::GridMismatch(format!(
            "cube grid {:?} differs from pipeline grid {:?}",
            cube.grid(),
            pipeline.grid()
        )));
    }
    let mut img = RgbImage::new(cube.width() as u32, cube.height() as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        let rgb = pipeline.render_values(&cube.pixel_f64(i));
        *px = Rgb(rgb.map(quantize));
    }
    Ok(img)
}

/// Linear sRGB of the model at each node of a `cols × rows` lattice over the
/// bio box, `i_d = 1`, `i_s = 0`. Columns run along f_mel, rows along f_blood.
pub fn gamut_linear(model: &SkinModel, pipeline: &ColorPipeline, cols: usize, rows: usize) -> Result<Vec<[f64; 3]>> {
    if cols < 2 || rows < 2 {
        return Err(Error::InvalidArgument(format!("swatch resolution {cols}×{rows} needs at least 2 per axis")));
    }
    if model.grid() != pipeline.grid() {
        return Err(Error::GridMismatch("model and pipeline grids differ".into()));
    }
    let mut out = Vec::with_capacity(cols * rows);
    let mut r = vec![0.0; model.grid().count()];
    for j in 0..rows {
        let f_blood = F_BLOOD_MIN + (F_BLOOD_MAX - F_BLOOD_MIN) * j as f64 / (rows - 1) as f64;
        for i in 0..cols {
            let f_mel = F_MEL_MIN + (F_MEL_MAX - F_MEL_MIN) * i as f64 / (cols - 1) as f64;
            let bio = BioParams {
                f_mel: if i == cols - 1 { F_MEL_MAX } else { f_mel },
                f_blood: if j == rows - 1 { F_BLOOD_MAX } else { f_blood },
            };
            model.reflectance_into(&bio, &mut r);
            out.push(pipeline.linear_values(&pipeline.reflectance_input(&r)));
        }
    }
    Ok(out)
}

pub fn gamut_swatch(model: &SkinModel, pipeline: &ColorPipeline, cols: usize, rows: usize) -> Result<RgbImage> {
    let lin = gamut_linear(model, pipeline, cols, rows)?;
    let mut img = RgbImage::new(cols as u32, rows as u32);
    for (px, v) in img.pixels_mut().zip(lin) {
        *px = Rgb(pipeline.encode(v).map(quantize));
    }
    Ok(img)
}

/// Viridis-like ramp sampled at eight stops.
const RAMP: [[f64; 3]; 8] = [
    [68.0, 1.0, 84.0],
    [70.0, 50.0, 127.0],
    [54.0, 92.0, 141.0],
    [39.0, 127.0, 142.0],
    [31.0, 161.0, 135.0],
    [74.0, 194.0, 109.0],
    [159.0, 218.0, 58.0],
    [253.0, 231.0, 37.0],
];

/// Scalar map to colour, normalized to its own finite range.
pub fn false_colour(values: &[f64], width: usize, height: usize) -> RgbImage {
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let span = hi - lo;
    let mut img = RgbImage::new(width as u32, height as u32);
    for (px, v) in img.pixels_mut().zip(values) {
        let t = if !v.is_finite() {
            0.0
        } else if span > 0.0 {
            (v - lo) / span
        } else {
            0.5
        };
        let x = t * (RAMP.len() - 1) as f64;
        let k = (x.floor() as usize).min(RAMP.len() - 2);
        let f = x - k as f64;
        *px = Rgb(std::array::from_fn(|c| {
            (RAMP[k][c] + f * (RAMP[k + 1][c] - RAMP[k][c])).round() as u8
        }));
    }
    img
}

/// 8-bit RGB PNG without colour profile chunks.
pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out).write_image(
        img.as_raw(),
        img.width(),
        img.height(),
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pipeline() -> ColorPipeline {
        let g = WavelengthGrid::visible();
        build_pipeline(&CameraSensitivity::cie_1931(&g).unwrap(), &bundled::d65_on(&g).unwrap()).unwrap()
    }

    #[test]
    fn white_reflector_balances_to_ones() {
        let p = pipeline();
        let wb = p.white_balanced(p.illuminant().values());
        for c in wb {
            assert!((c - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn flat_reflectance_is_neutral() {
        let p = pipeline();
        for level in [0.05, 0.18, 0.5, 0.9, 1.0] {
            let l: Vec<f64> = p.illuminant().values().iter().map(|e| level * e).collect();
            let lin = p.linear_values(&l);
            let spread = lin.iter().cloned().fold(f64::MIN, f64::max) - lin.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread < 1e-6, "{lin:?}");
            assert!((lin[0] - level).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_of_half() {
        let p = pipeline();
        let v = p.encode([0.5, 0.0, 1.0]);
        assert!((v[0] - 0.5f64.powf(1.0 / 2.4)).abs() < 1e-15);
        assert!((v[0] - 0.7490).abs() < 2e-4);
        assert_eq!((v[1], v[2]), (0.0, 1.0));
    }

    #[test]
    fn zero_radiance_is_black() {
        let p = pipeline();
        assert_eq!(p.render_values(&[0.0; 31]), [0.0; 3]);
    }

    #[test]
    fn zero_white_channel_rejected() {
        let g = WavelengthGrid::visible();
        let mut ch = [vec![0.0; 31], vec![1.0; 31], vec![1.0; 31]];
        ch[0][30] = 1.0;
        let s = CameraSensitivity::new(g, ch).unwrap();
        let mut e = vec![1.0; 31];
        e[30] = 0.0;
        let e = Spectrum::new(g, e).unwrap();
        assert!(matches!(build_pipeline(&s, &e), Err(Error::Degenerate(_))));
    }

    #[test]
    fn reflectance_mode_applies_illuminant() {
        let p = pipeline();
        let r = vec![0.3; 31];
        let l: Vec<f64> = p.illuminant().values().iter().map(|e| 0.3 * e).collect();
        let q = p.clone().with_input(RenderInput::Reflectance);
        assert_eq!(q.linear_values(&r), p.linear_values(&l));
    }

    #[test]
    fn camera_from_cmf_columns_recovers_cie_matrix() {
        let g = WavelengthGrid::visible();
        let cie = CameraSensitivity::cie_1931(&g).unwrap();
        let cam = CameraSensitivity::new(g, cie.channels().clone()).unwrap();
        let e = bundled::d65_on(&g).unwrap();
        let a = build_pipeline(&cie, &e).unwrap();
        let b = build_pipeline(&cam, &e).unwrap();
        assert!((a.transform() - b.transform()).amax() < 1e-9 * a.transform().amax());
    }

    #[test]
    fn swatch_corners() {
        let g = WavelengthGrid::visible();
        let m = SkinModel::with_defaults(g).unwrap();
        let p = pipeline();
        let lin = gamut_linear(&m, &p, 2, 2).unwrap();
        let mut r = vec![0.0; 31];
        m.reflectance_into(&BioParams { f_mel: F_MEL_MAX, f_blood: F_BLOOD_MAX }, &mut r);
        assert_eq!(lin[3], p.linear_values(&p.reflectance_input(&r)));
        assert!(gamut_linear(&m, &p, 1, 4).is_err());
    }

    #[test]
    fn false_colour_endpoints() {
        let img = false_colour(&[0.0, 1.0, 0.5], 3, 1);
        assert_eq!(img.get_pixel(0, 0).0, [68, 1, 84]);
        assert_eq!(img.get_pixel(1, 0).0, [253, 231, 37]);
    }
}
