//! Wavelength grids, spectra and tabulated optical data.
//!
//! Everything spectral in the crate is sampled on a [`WavelengthGrid`]: a closed
//! interval split into `count` evenly spaced samples. Measured data (extinction
//! coefficients, colour matching functions, illuminants) arrives as
//! [`TabulatedFunction`]s and is placed on the working grid by [`resample`].

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evenly spaced sample wavelengths over a closed interval, in nanometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct WavelengthGrid {
    lambda_min: f64,
    lambda_max: f64,
    count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    lambda_min: f64,
    lambda_max: f64,
    count: usize,
}

impl TryFrom<GridSpec> for WavelengthGrid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        WavelengthGrid::new(spec.lambda_min, spec.lambda_max, spec.count)
    }
}

impl From<WavelengthGrid> for GridSpec {
    fn from(g: WavelengthGrid) -> Self {
        GridSpec {
            lambda_min: g.lambda_min,
            lambda_max: g.lambda_max,
            count: g.count,
        }
    }
}

impl WavelengthGrid {
    /// Builds a grid of `count` samples from `lambda_min` to `lambda_max` inclusive.
    pub fn new(lambda_min: f64, lambda_max: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 samples, got {count}"
            )));
        }
        if !(lambda_min.is_finite() && lambda_max.is_finite()) || lambda_min >= lambda_max {
            return Err(Error::InvalidArgument(format!(
                "grid bounds must be finite and increasing, got [{lambda_min}, {lambda_max}]"
            )));
        }
        Ok(WavelengthGrid {
            lambda_min,
            lambda_max,
            count,
        })
    }

    /// The default 400–700 nm grid with 10 nm spacing.
    pub fn visible() -> Self {
        WavelengthGrid {
            lambda_min: 400.0,
            lambda_max: 700.0,
            count: 31,
        }
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn step(&self) -> f64 {
        (self.lambda_max - self.lambda_min) / (self.count - 1) as f64
    }

    /// Wavelength of sample `i`. The last sample is exactly `lambda_max`.
    pub fn sample(&self, i: usize) -> f64 {
        assert!(i < self.count, "sample index {i} out of range");
        if i == self.count - 1 {
            self.lambda_max
        } else {
            self.lambda_min + (self.lambda_max - self.lambda_min) * i as f64 / (self.count - 1) as f64
        }
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.sample(i))
    }
}

impl Default for WavelengthGrid {
    fn default() -> Self {
        WavelengthGrid::visible()
    }
}

/// Non-negative values sampled on a grid: radiance, SPD, reflectance or an
/// absorption coefficient depending on context.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: WavelengthGrid,
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(grid: WavelengthGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count() {
            return Err(Error::DimensionMismatch(format!(
                "spectrum has {} values for a {}-sample grid",
                values.len(),
                grid.count()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "spectrum value {v} at sample {i} is not a finite non-negative number"
            )));
        }
        Ok(Spectrum { grid, values })
    }

    /// A wavelength-constant spectrum.
    pub fn flat(grid: WavelengthGrid, value: f64) -> Result<Self> {
        Spectrum::new(grid, vec![value; grid.count()])
    }

    /// Builds a reflectance spectrum, additionally requiring values in `[0, 1]`.
    pub fn reflectance(grid: WavelengthGrid, values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| **v > 1.0) {
            return Err(Error::InvalidArgument(format!("reflectance {v} exceeds 1")));
        }
        Spectrum::new(grid, values)
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub(crate) fn check_grid(&self, other: &WavelengthGrid, what: &str) -> Result<()> {
        if &self.grid != other {
            return Err(Error::GridMismatch(format!(
                "{what} is sampled on {:?}, expected {:?}",
                self.grid, other
            )));
        }
        Ok(())
    }
}

/// How [`resample`] treats grid samples outside the tabulated range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extrapolation {
    #[default]
    Disabled,
    /// Hold the nearest endpoint value.
    HoldEndpoints,
}

/// `(wavelength nm, value)` knots with strictly increasing wavelengths.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedFunction {
    points: Vec<(f64, f64)>,
}

impl TabulatedFunction {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a table needs at least 2 entries, got {}",
                points.len()
            )));
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(Error::NotMonotonic {
                    line: i + 2,
                    wavelength: w[1].0,
                });
            }
        }
        Ok(TabulatedFunction { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn first_wavelength(&self) -> f64 {
        self.points[0].0
    }

    pub fn last_wavelength(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    /// Piecewise-linear evaluation at `lambda`.
    pub fn eval(&self, lambda: f64, extrapolation: Extrapolation) -> Result<f64> {
        let (lo, hi) = (self.first_wavelength(), self.last_wavelength());
        if lambda < lo || lambda > hi {
            return match extrapolation {
                Extrapolation::HoldEndpoints if lambda < lo => Ok(self.points[0].1),
                Extrapolation::HoldEndpoints => Ok(self.points[self.points.len() - 1].1),
                Extrapolation::Disabled => Err(Error::OutOfRange {
                    wavelength: lambda,
                    min: lo,
                    max: hi,
                }),
            };
        }
        // First knot with wavelength >= lambda.
        let idx = self.points.partition_point(|&(w, _)| w < lambda);
        let (w1, v1) = self.points[idx];
        if w1 == lambda || idx == 0 {
            return Ok(v1);
        }
        let (w0, v0) = self.points[idx - 1];
        let t = (lambda - w0) / (w1 - w0);
        Ok(v0 + t * (v1 - v0))
    }
}

/// Interpolates `f` at every sample of `grid` (values may be of any sign).
pub fn resample_values(
    f: &TabulatedFunction,
    grid: &WavelengthGrid,
    extrapolation: Extrapolation,
) -> Result<Vec<f64>> {
    grid.samples().map(|l| f.eval(l, extrapolation)).collect()
}

/// Places tabulated data onto a working grid by piecewise-linear interpolation.
pub fn resample(
    f: &TabulatedFunction,
    grid: &WavelengthGrid,
    extrapolation: Extrapolation,
) -> Result<Spectrum> {
    Spectrum::new(*grid, resample_values(f, grid, extrapolation)?)
}

/// Supported tabulated-data encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    /// `wavelength_nm,value` with an optional header line.
    Csv,
}

/// Reads a two-column table.
pub fn load_table(source: impl Read, format: TableFormat) -> Result<TabulatedFunction> {
    let mut columns = load_columns(source, format, 1)?;
    Ok(columns.remove(0))
}

/// Reads a CSV with a wavelength column followed by exactly `value_columns`
/// value columns, returning one table per value column.
pub fn load_columns(
    mut source: impl Read,
    format: TableFormat,
    value_columns: usize,
) -> Result<Vec<TabulatedFunction>> {
    let TableFormat::Csv = format;
    let mut text = String::new();
    source.read_to_string(&mut text).map_err(|e| Error::ParseLine {
        line: 1,
        message: format!("stream is not valid UTF-8 text: {e}"),
    })?;
    parse_csv_columns(&text, value_columns)
}

fn parse_csv_columns(text: &str, value_columns: usize) -> Result<Vec<TabulatedFunction>> {
    let mut columns: Vec<Vec<(f64, f64)>> = vec![Vec::new(); value_columns];
    let mut last: Option<f64> = None;
    let mut saw_data = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let first_is_number = fields[0].parse::<f64>().is_ok();
        if !saw_data && !first_is_number {
            // Header line, only allowed before any data.
            saw_data = true;
            if fields.len() != value_columns + 1 {
                return Err(Error::ParseLine {
                    line: line_no,
                    message: format!(
                        "header has {} columns, expected {}",
                        fields.len(),
                        value_columns + 1
                    ),
                });
            }
            continue;
        }
        saw_data = true;
        if fields.len() != value_columns + 1 {
            return Err(Error::ParseLine {
                line: line_no,
                message: format!(
                    "expected {} columns, found {}",
                    value_columns + 1,
                    fields.len()
                ),
            });
        }
        let mut nums = Vec::with_capacity(fields.len());
        for f in &fields {
            let v: f64 = f.parse().map_err(|_| Error::ParseLine {
                line: line_no,
                message: format!("`{f}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::ParseLine {
                    line: line_no,
                    message: format!("`{f}` is not finite"),
                });
            }
            nums.push(v);
        }
        let wavelength = nums[0];
        if let Some(prev) = last {
            if wavelength <= prev {
                return Err(Error::NotMonotonic {
                    line: line_no,
                    wavelength,
                });
            }
        }
        last = Some(wavelength);
        for (col, v) in columns.iter_mut().zip(&nums[1..]) {
            col.push((wavelength, *v));
        }
    }

    if columns[0].len() < 2 {
        return Err(Error::ParseLine {
            line: text.lines().count().max(1),
            message: format!("table needs at least 2 data rows, found {}", columns[0].len()),
        });
    }
    columns.into_iter().map(TabulatedFunction::new).collect()
}

/// Tables shipped in the repository `data/` directory.
pub mod bundled {
    use super::*;

    const HB_OXY: &str = include_str!("../../../data/hb_oxy.csv");
    const HB_DEOXY: &str = include_str!("../../../data/hb_deoxy.csv");
    const CIE_1931_CMF: &str = include_str!("../../../data/cie_1931_cmf.csv");
    const D65: &str = include_str!("../../../data/d65.csv");
    const COLORCHECKER: &str = include_str!("../../../data/colorchecker_24.csv");

    fn parse(text: &str, columns: usize) -> Vec<TabulatedFunction> {
        parse_csv_columns(text, columns).expect("bundled table is well formed")
    }

    /// Oxyhaemoglobin molar extinction, cm⁻¹/(mol/L).
    pub fn hb_oxy() -> TabulatedFunction {
        parse(HB_OXY, 1).remove(0)
    }

    /// Deoxyhaemoglobin molar extinction, cm⁻¹/(mol/L).
    pub fn hb_deoxy() -> TabulatedFunction {
        parse(HB_DEOXY, 1).remove(0)
    }

    /// CIE 1931 2° colour matching functions x̄, ȳ, z̄.
    pub fn cie_1931_cmf() -> [TabulatedFunction; 3] {
        let mut c = parse(CIE_1931_CMF, 3).into_iter();
        [c.next().unwrap(), c.next().unwrap(), c.next().unwrap()]
    }

    /// CIE standard illuminant D65, relative SPD.
    pub fn d65() -> TabulatedFunction {
        parse(D65, 1).remove(0)
    }

    /// The 24 Macbeth ColorChecker patch reflectances.
    pub fn colorchecker() -> Vec<TabulatedFunction> {
        parse(COLORCHECKER, 24)
    }

    /// D65 on `grid`.
    pub fn d65_on(grid: &WavelengthGrid) -> Result<Spectrum> {
        resample(&d65(), grid, Extrapolation::Disabled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> TabulatedFunction {
        TabulatedFunction::new(vec![(400.0, 1.0), (500.0, 3.0)]).unwrap()
    }

    #[test]
    fn default_grid_samples() {
        let g = WavelengthGrid::new(400.0, 700.0, 31).unwrap();
        let s: Vec<f64> = g.samples().collect();
        for (i, v) in s.iter().enumerate() {
            assert_eq!(*v, 400.0 + 10.0 * i as f64);
        }
        assert_eq!(g, WavelengthGrid::visible());
    }

    #[test]
    fn two_sample_grid_is_endpoints() {
        let g = WavelengthGrid::new(400.0, 700.0, 2).unwrap();
        assert_eq!(g.samples().collect::<Vec<_>>(), vec![400.0, 700.0]);
    }

    #[test]
    fn reversed_bounds_rejected() {
        assert!(matches!(
            WavelengthGrid::new(700.0, 400.0, 31),
            Err(Error::InvalidArgument(_))
        ));
        assert!(WavelengthGrid::new(400.0, 700.0, 1).is_err());
    }

    #[test]
    fn last_sample_is_exact_upper_bound() {
        for (a, b, n) in [(0.1, 0.3, 7), (380.0, 730.0, 36), (401.3, 699.7, 13)] {
            let g = WavelengthGrid::new(a, b, n).unwrap();
            assert_eq!(g.sample(n - 1), b);
        }
    }

    #[test]
    fn interpolation_cases() {
        let f = two_point();
        assert_eq!(f.eval(450.0, Extrapolation::Disabled).unwrap(), 2.0);
        assert_eq!(f.eval(400.0, Extrapolation::Disabled).unwrap(), 1.0);
        assert_eq!(f.eval(500.0, Extrapolation::Disabled).unwrap(), 3.0);
        assert_eq!(f.eval(550.0, Extrapolation::HoldEndpoints).unwrap(), 3.0);
        assert_eq!(f.eval(350.0, Extrapolation::HoldEndpoints).unwrap(), 1.0);
        assert!(matches!(
            f.eval(550.0, Extrapolation::Disabled),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn resample_exact_at_knots() {
        let f = TabulatedFunction::new(vec![(400.0, 2.0), (450.0, 7.5), (700.0, 0.25)]).unwrap();
        let g = WavelengthGrid::new(400.0, 700.0, 7).unwrap();
        let s = resample(&f, &g, Extrapolation::Disabled).unwrap();
        assert_eq!(s.values()[0], 2.0);
        assert_eq!(s.values()[1], 7.5);
        assert_eq!(s.values()[6], 0.25);
    }

    #[test]
    fn resample_reproduces_a_line() {
        let f = TabulatedFunction::new(vec![(380.0, 5.0), (730.0, -2.0)]).unwrap();
        let line = |l: f64| 5.0 + (l - 380.0) * (-7.0 / 350.0);
        let g = WavelengthGrid::visible();
        let v = resample_values(&f, &g, Extrapolation::Disabled).unwrap();
        for (l, x) in g.samples().zip(v) {
            assert!((x - line(l)).abs() < 1e-13, "{l}: {x} vs {}", line(l));
        }
    }

    #[test]
    fn resample_out_of_range_errors_without_extrapolation() {
        let g = WavelengthGrid::new(350.0, 450.0, 3).unwrap();
        assert!(resample(&two_point(), &g, Extrapolation::Disabled).is_err());
        let s = resample(&two_point(), &g, Extrapolation::HoldEndpoints).unwrap();
        assert_eq!(s.values(), &[1.0, 1.0, 2.0]);
    }

    #[test]
    fn csv_loading() {
        let t = load_table("400,1.0\n500,3.0".as_bytes(), TableFormat::Csv).unwrap();
        assert_eq!(t.points(), &[(400.0, 1.0), (500.0, 3.0)]);

        let t = load_table(
            "wavelength_nm,value\r\n400,1.0\r\n500,3.0\r\n".as_bytes(),
            TableFormat::Csv,
        )
        .unwrap();
        assert_eq!(t.points().len(), 2);
    }

    #[test]
    fn csv_duplicate_wavelength_is_monotonicity_error() {
        let err = load_table("400,1.0\n400,2.0\n500,3.0".as_bytes(), TableFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::NotMonotonic { line: 2, .. }), "{err}");
    }

    #[test]
    fn csv_empty_and_garbage() {
        assert!(matches!(
            load_table("".as_bytes(), TableFormat::Csv),
            Err(Error::ParseLine { .. })
        ));
        let err = load_table("400,1\n450,abc\n".as_bytes(), TableFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::ParseLine { line: 2, .. }), "{err}");
        let err = load_table("400,1\n450,2,3\n".as_bytes(), TableFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::ParseLine { line: 2, .. }));
    }

    #[test]
    fn bundled_tables_span_the_required_range() {
        let mut tables = vec![bundled::hb_oxy(), bundled::hb_deoxy(), bundled::d65()];
        tables.extend(bundled::cie_1931_cmf());
        tables.extend(bundled::colorchecker());
        for t in &tables {
            assert!(t.first_wavelength() <= 380.0);
            assert!(t.last_wavelength() >= 730.0);
        }
        let hb = bundled::hb_oxy();
        assert_eq!(hb.eval(560.0, Extrapolation::Disabled).unwrap(), 32613.2);
    }

    #[test]
    fn spectrum_validation() {
        let g = WavelengthGrid::new(400.0, 500.0, 3).unwrap();
        assert!(Spectrum::new(g, vec![1.0, 2.0]).is_err());
        assert!(Spectrum::new(g, vec![1.0, -2.0, 0.0]).is_err());
        assert!(Spectrum::reflectance(g, vec![0.5, 1.2, 0.0]).is_err());
        assert!(Spectrum::reflectance(g, vec![0.5, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn grid_serde_validates() {
        let g: WavelengthGrid =
            serde_json::from_str(r#"{"lambda_min":400,"lambda_max":700,"count":31}"#).unwrap();
        assert_eq!(g, WavelengthGrid::visible());
        assert!(serde_json::from_str::<WavelengthGrid>(
            r#"{"lambda_min":700,"lambda_max":400,"count":31}"#
        )
        .is_err());
    }
}
