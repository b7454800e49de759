//! Two-layer biophysical skin reflectance and the dichromatic radiance model.
//!
//! The epidermis attenuates light by Lambert-Beer absorption of melanin over a
//! tissue baseline; the dermis is a semi-infinite Kubelka-Munk medium whose
//! absorption mixes blood with the same baseline. Light crosses the epidermis
//! twice, so diffuse reflectance is `T_epi(λ)² · R_dermis(λ)`. Observed radiance
//! adds an illuminant-coloured specular term: `l = diag(e)(i_d·r + i_s)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{bundled, resample_values, Extrapolation, Spectrum, TabulatedFunction, WavelengthGrid};

pub const F_MEL_MIN: f64 = 0.013;
pub const F_MEL_MAX: f64 = 0.43;
pub const F_BLOOD_MIN: f64 = 0.02;
pub const F_BLOOD_MAX: f64 = 0.07;

/// Melanosome (epidermis) and blood (dermis) volume fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BioParams {
    pub f_mel: f64,
    pub f_blood: f64,
}

impl BioParams {
    /// Validated constructor; both fractions must lie in their physiological boxes.
    pub fn new(f_mel: f64, f_blood: f64) -> Result<Self> {
        if !(F_MEL_MIN..=F_MEL_MAX).contains(&f_mel) {
            return Err(Error::InvalidArgument(format!(
                "f_mel {f_mel} outside [{F_MEL_MIN}, {F_MEL_MAX}]"
            )));
        }
        if !(F_BLOOD_MIN..=F_BLOOD_MAX).contains(&f_blood) {
            return Err(Error::InvalidArgument(format!(
                "f_blood {f_blood} outside [{F_BLOOD_MIN}, {F_BLOOD_MAX}]"
            )));
        }
        Ok(BioParams { f_mel, f_blood })
    }

    /// Centre of the parameter box.
    pub fn midpoint() -> Self {
        BioParams {
            f_mel: 0.5 * (F_MEL_MIN + F_MEL_MAX),
            f_blood: 0.5 * (F_BLOOD_MIN + F_BLOOD_MAX),
        }
    }

    pub fn clamped(self) -> Self {
        BioParams {
            f_mel: self.f_mel.clamp(F_MEL_MIN, F_MEL_MAX),
            f_blood: self.f_blood.clamp(F_BLOOD_MIN, F_BLOOD_MAX),
        }
    }
}

/// Per-pixel unknowns: diffuse and specular shading plus the two fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkinParams {
    pub i_d: f64,
    pub i_s: f64,
    pub bio: BioParams,
}

impl SkinParams {
    pub fn new(i_d: f64, i_s: f64, bio: BioParams) -> Result<Self> {
        if !(i_d >= 0.0 && i_s >= 0.0 && i_d.is_finite() && i_s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "shading must be finite and non-negative, got i_d={i_d}, i_s={i_s}"
            )));
        }
        Ok(SkinParams { i_d, i_s, bio })
    }
}

/// Every literature constant the skin model depends on. Units: lengths in cm,
/// wavelengths in nm, absorption and scattering in cm⁻¹.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsConstants {
    pub epidermis_thickness: f64,
    /// μ_a,mel(λ) = prefactor · λ^(−exponent)
    pub melanin_prefactor: f64,
    pub melanin_exponent: f64,
    /// (a, b, c, d) in μ_a,base(λ) = a + b·exp(−(λ − c)/d)
    pub baseline_params: [f64; 4],
    /// g/L
    pub hb_concentration: f64,
    /// g/mol
    pub hb_molar_mass: f64,
    pub oxygenation_fraction: f64,
    pub scatter_mie_prefactor: f64,
    pub scatter_mie_exponent: f64,
    pub scatter_rayleigh_prefactor: f64,
    pub scatter_rayleigh_exponent: f64,
    /// K = km_k_coeff · μ_a
    pub km_k_coeff: f64,
    /// S = km_s_coeff · μ_s′
    pub km_s_coeff: f64,
}

impl Default for OpticsConstants {
    fn default() -> Self {
        OpticsConstants {
            epidermis_thickness: 0.01,
            melanin_prefactor: 6.6e11,
            melanin_exponent: 3.33,
            baseline_params: [0.244, 85.3, 154.0, 66.2],
            hb_concentration: 150.0,
            hb_molar_mass: 64500.0,
            oxygenation_fraction: 0.75,
            scatter_mie_prefactor: 2e5,
            scatter_mie_exponent: 1.5,
            scatter_rayleigh_prefactor: 2e12,
            scatter_rayleigh_exponent: 4.0,
            km_k_coeff: 2.0,
            km_s_coeff: 0.75,
        }
    }
}

impl OpticsConstants {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("epidermis_thickness", self.epidermis_thickness),
            ("melanin_prefactor", self.melanin_prefactor),
            ("melanin_exponent", self.melanin_exponent),
            ("baseline_params[0]", self.baseline_params[0]),
            ("baseline_params[1]", self.baseline_params[1]),
            ("baseline_params[2]", self.baseline_params[2]),
            ("baseline_params[3]", self.baseline_params[3]),
            ("hb_concentration", self.hb_concentration),
            ("hb_molar_mass", self.hb_molar_mass),
            ("oxygenation_fraction", self.oxygenation_fraction),
            ("scatter_mie_prefactor", self.scatter_mie_prefactor),
            ("scatter_mie_exponent", self.scatter_mie_exponent),
            ("scatter_rayleigh_prefactor", self.scatter_rayleigh_prefactor),
            ("scatter_rayleigh_exponent", self.scatter_rayleigh_exponent),
            ("km_k_coeff", self.km_k_coeff),
            ("km_s_coeff", self.km_s_coeff),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "optics constant {name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.oxygenation_fraction > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "oxygenation_fraction {} exceeds 1",
                self.oxygenation_fraction
            )));
        }
        Ok(())
    }
}

/// Haemoglobin molar extinction spectra, cm⁻¹/(mol/L) against nm.
#[derive(Debug, Clone, PartialEq)]
pub struct ChromophoreTables {
    pub hb_oxy: TabulatedFunction,
    pub hb_deoxy: TabulatedFunction,
}

impl ChromophoreTables {
    pub fn bundled() -> Self {
        ChromophoreTables {
            hb_oxy: bundled::hb_oxy(),
            hb_deoxy: bundled::hb_deoxy(),
        }
    }
}

impl Default for ChromophoreTables {
    fn default() -> Self {
        Self::bundled()
    }
}

pub fn melanin_absorption(lambda: f64, c: &OpticsConstants) -> f64 {
    c.melanin_prefactor * lambda.powf(-c.melanin_exponent)
}

pub fn baseline_absorption(lambda: f64, c: &OpticsConstants) -> f64 {
    let [a, b, shift, width] = c.baseline_params;
    a + b * (-(lambda - shift) / width).exp()
}

/// Reduced dermal scattering μ_s′: Mie plus Rayleigh power laws.
pub fn reduced_scattering(lambda: f64, c: &OpticsConstants) -> f64 {
    c.scatter_mie_prefactor * lambda.powf(-c.scatter_mie_exponent)
        + c.scatter_rayleigh_prefactor * lambda.powf(-c.scatter_rayleigh_exponent)
}

/// Whole-blood absorption from the oxy/deoxy extinction tables.
pub fn blood_absorption(lambda: f64, c: &OpticsConstants, tables: &ChromophoreTables) -> Result<f64> {
    let oxy = tables.hb_oxy.eval(lambda, Extrapolation::Disabled)?;
    let deoxy = tables.hb_deoxy.eval(lambda, Extrapolation::Disabled)?;
    Ok(blood_from_extinction(oxy, deoxy, c))
}

fn blood_from_extinction(oxy: f64, deoxy: f64, c: &OpticsConstants) -> f64 {
    let gamma = c.oxygenation_fraction;
    std::f64::consts::LN_10 * (c.hb_concentration / c.hb_molar_mass) * (gamma * oxy + (1.0 - gamma) * deoxy)
}

/// One-way Lambert-Beer transmission through the epidermis.
pub fn epidermal_transmission(f_mel: f64, lambda: f64, c: &OpticsConstants) -> f64 {
    let mu = f_mel * melanin_absorption(lambda, c) + (1.0 - f_mel) * baseline_absorption(lambda, c);
    (-mu * c.epidermis_thickness).exp()
}

/// Semi-infinite Kubelka-Munk reflectance `1 + K/S − √((K/S)² + 2K/S)`.
///
/// Evaluated as `1 / (1 + q + √(q² + 2q))`, the same quantity without the
/// cancellation at large `q`.
pub fn kubelka_munk_reflectance(k: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Degenerate(format!("scattering coefficient S = {s} must be positive")));
    }
    if k < 0.0 {
        return Err(Error::Degenerate(format!("absorption coefficient K = {k} is negative")));
    }
    let q = k / s;
    Ok(1.0 / (1.0 + q + (q * q + 2.0 * q).sqrt()))
}

pub fn dermal_reflectance(
    f_blood: f64,
    lambda: f64,
    c: &OpticsConstants,
    tables: &ChromophoreTables,
) -> Result<f64> {
    let mu_a = f_blood * blood_absorption(lambda, c, tables)? + (1.0 - f_blood) * baseline_absorption(lambda, c);
    kubelka_munk_reflectance(c.km_k_coeff * mu_a, c.km_s_coeff * reduced_scattering(lambda, c))
}

/// Diffuse skin reflectance `T_epi² · R_dermis` on `grid`.
pub fn skin_reflectance(
    bio: &BioParams,
    grid: &WavelengthGrid,
    c: &OpticsConstants,
    tables: &ChromophoreTables,
) -> Result<Spectrum> {
    SkinModel::new(*grid, c.clone(), tables)?.reflectance(bio)
}

/// ∂l/∂(i_d, i_s, f_mel, f_blood), one row per wavelength sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceJacobian {
    pub rows: Vec<[f64; 4]>,
}

impl RadianceJacobian {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// The skin model with every wavelength-dependent coefficient precomputed on
/// a working grid. Immutable after construction and shareable across threads.
#[derive(Debug, Clone)]
pub struct SkinModel {
    grid: WavelengthGrid,
    constants: OpticsConstants,
    melanin: Vec<f64>,
    baseline: Vec<f64>,
    blood: Vec<f64>,
    /// Kubelka-Munk S.
    scatter: Vec<f64>,
}

impl SkinModel {
    pub fn new(grid: WavelengthGrid, constants: OpticsConstants, tables: &ChromophoreTables) -> Result<Self> {
        constants.validate()?;
        let oxy = resample_values(&tables.hb_oxy, &grid, Extrapolation::Disabled)?;
        let deoxy = resample_values(&tables.hb_deoxy, &grid, Extrapolation::Disabled)?;
        let c = &constants;
        let melanin = grid.samples().map(|l| melanin_absorption(l, c)).collect();
        let baseline = grid.samples().map(|l| baseline_absorption(l, c)).collect();
        let blood = oxy.iter().zip(&deoxy).map(|(o, d)| blood_from_extinction(*o, *d, c)).collect();
        let scatter: Vec<f64> = grid.samples().map(|l| c.km_s_coeff * reduced_scattering(l, c)).collect();
        if let Some(s) = scatter.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::Degenerate(format!("scattering coefficient S = {s} must be positive")));
        }
        Ok(SkinModel {
            grid,
            constants,
            melanin,
            baseline,
            blood,
            scatter,
        })
    }

    /// Default constants and bundled tables on `grid`.
    pub fn with_defaults(grid: WavelengthGrid) -> Result<Self> {
        SkinModel::new(grid, OpticsConstants::default(), &ChromophoreTables::bundled())
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn constants(&self) -> &OpticsConstants {
        &self.constants
    }

    /// μ_a,blood at each grid sample.
    pub fn blood_absorption(&self) -> &[f64] {
        &self.blood
    }

    /// Two-way epidermal transmission T² at each sample.
    pub fn epidermal_transmission_sq(&self, f_mel: f64, out: &mut [f64]) {
        let d = self.constants.epidermis_thickness;
        for (k, o) in out.iter_mut().enumerate() {
            let mu = f_mel * self.melanin[k] + (1.0 - f_mel) * self.baseline[k];
            *o = (-2.0 * mu * d).exp();
        }
    }

    pub fn dermal_reflectance(&self, f_blood: f64, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let q = self.dermal_ks(f_blood, k);
            *o = 1.0 / (1.0 + q + (q * q + 2.0 * q).sqrt());
        }
    }

    fn dermal_ks(&self, f_blood: f64, k: usize) -> f64 {
        let mu = f_blood * self.blood[k] + (1.0 - f_blood) * self.baseline[k];
        self.constants.km_k_coeff * mu / self.scatter[k]
    }

    /// Writes diffuse reflectance into `r`.
    pub fn reflectance_into(&self, bio: &BioParams, r: &mut [f64]) {
        let d = self.constants.epidermis_thickness;
        for (k, o) in r.iter_mut().enumerate() {
            let mu = bio.f_mel * self.melanin[k] + (1.0 - bio.f_mel) * self.baseline[k];
            let q = self.dermal_ks(bio.f_blood, k);
            *o = (-2.0 * mu * d).exp() / (1.0 + q + (q * q + 2.0 * q).sqrt());
        }
    }

    /// Reflectance plus its partial derivatives in f_mel and f_blood.
    pub fn reflectance_with_derivatives(&self, bio: &BioParams, r: &mut [f64], dr_mel: &mut [f64], dr_blood: &mut [f64]) {
        let c = &self.constants;
        let d = c.epidermis_thickness;
        for k in 0..self.grid.count() {
            let mu = bio.f_mel * self.melanin[k] + (1.0 - bio.f_mel) * self.baseline[k];
            let t2 = (-2.0 * mu * d).exp();
            let q = self.dermal_ks(bio.f_blood, k);
            let root = (q * q + 2.0 * q).sqrt();
            let rd = 1.0 / (1.0 + q + root);
            r[k] = t2 * rd;
            dr_mel[k] = r[k] * (-2.0 * d * (self.melanin[k] - self.baseline[k]));
            let drd_dq = -rd * rd * (1.0 + (q + 1.0) / root);
            let dq_dfb = c.km_k_coeff * (self.blood[k] - self.baseline[k]) / self.scatter[k];
            dr_blood[k] = t2 * drd_dq * dq_dfb;
        }
    }

    pub fn reflectance(&self, bio: &BioParams) -> Result<Spectrum> {
        let mut r = vec![0.0; self.grid.count()];
        self.reflectance_into(bio, &mut r);
        Spectrum::reflectance(self.grid, r)
    }

    /// `l_k = e_k (i_d r_k + i_s)`.
    pub fn radiance(&self, params: &SkinParams, e: &Spectrum) -> Result<Spectrum> {
        e.check_grid(&self.grid, "illuminant")?;
        let mut r = vec![0.0; self.grid.count()];
        self.reflectance_into(&params.bio, &mut r);
        let l = r
            .iter()
            .zip(e.values())
            .map(|(r, e)| e * (params.i_d * r + params.i_s))
            .collect();
        Spectrum::new(self.grid, l)
    }

    pub fn radiance_jacobian(&self, params: &SkinParams, e: &Spectrum) -> Result<RadianceJacobian> {
        e.check_grid(&self.grid, "illuminant")?;
        let n = self.grid.count();
        let (mut r, mut dm, mut db) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        self.reflectance_with_derivatives(&params.bio, &mut r, &mut dm, &mut db);
        let rows = (0..n)
            .map(|k| {
                let ek = e.values()[k];
                [ek * r[k], ek, ek * params.i_d * dm[k], ek * params.i_d * db[k]]
            })
            .collect();
        Ok(RadianceJacobian { rows })
    }
}

/// Separable precomputation of reflectance over a rectangular (f_mel, f_blood)
/// lattice: `r(i, j) = T²(f_mel_i) · R(f_blood_j)`. Build once, share read-only.
#[derive(Debug, Clone)]
pub struct ReflectanceCache {
    pub f_mel: Vec<f64>,
    pub f_blood: Vec<f64>,
    count: usize,
    transmission_sq: Vec<f64>,
    dermal: Vec<f64>,
}

impl ReflectanceCache {
    pub fn build(model: &SkinModel, f_mel: Vec<f64>, f_blood: Vec<f64>) -> Self {
        let count = model.grid().count();
        let mut transmission_sq = vec![0.0; f_mel.len() * count];
        for (i, fm) in f_mel.iter().enumerate() {
            model.epidermal_transmission_sq(*fm, &mut transmission_sq[i * count..(i + 1) * count]);
        }
        let mut dermal = vec![0.0; f_blood.len() * count];
        for (j, fb) in f_blood.iter().enumerate() {
            model.dermal_reflectance(*fb, &mut dermal[j * count..(j + 1) * count]);
        }
        ReflectanceCache {
            f_mel,
            f_blood,
            count,
            transmission_sq,
            dermal,
        }
    }

    /// Evenly spaced lattice spanning the full box, `density` nodes per axis.
    pub fn over_box(model: &SkinModel, density: usize) -> Self {
        let axis = |lo: f64, hi: f64| -> Vec<f64> {
            (0..density)
                .map(|i| {
                    if i + 1 == density {
                        hi
                    } else {
                        lo + (hi - lo) * i as f64 / (density - 1) as f64
                    }
                })
                .collect()
        };
        Self::build(model, axis(F_MEL_MIN, F_MEL_MAX), axis(F_BLOOD_MIN, F_BLOOD_MAX))
    }

    pub fn reflectance_into(&self, i: usize, j: usize, out: &mut [f64]) {
        let t = &self.transmission_sq[i * self.count..(i + 1) * self.count];
        let d = &self.dermal[j * self.count..(j + 1) * self.count];
        for ((o, t), d) in out.iter_mut().zip(t).zip(d) {
            *o = t * d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn model() -> SkinModel {
        SkinModel::with_defaults(WavelengthGrid::visible()).unwrap()
    }

    #[test]
    fn melanin_power_law() {
        let c = OpticsConstants::default();
        // 6.6e11 · 500^−3.33, evaluated independently.
        assert_relative_eq!(melanin_absorption(500.0, &c), 679.162_692, max_relative = 1e-8);
        assert!(melanin_absorption(700.0, &c) < melanin_absorption(400.0, &c));
        let zero = OpticsConstants {
            melanin_prefactor: 0.0,
            ..c
        };
        assert_eq!(melanin_absorption(550.0, &zero), 0.0);
    }

    #[test]
    fn transmission_closed_forms() {
        // Zero absorption everywhere.
        let c = OpticsConstants {
            melanin_prefactor: 1e-300,
            baseline_params: [1e-300, 1e-300, 154.0, 66.2],
            ..Default::default()
        };
        assert_eq!(epidermal_transmission(0.2, 500.0, &c), 1.0);

        // μ·d = ln 2 with only the baseline term active (f_mel = 0).
        let c = OpticsConstants {
            epidermis_thickness: 1.0,
            baseline_params: [std::f64::consts::LN_2, 1e-300, 154.0, 66.2],
            ..Default::default()
        };
        assert_relative_eq!(epidermal_transmission(0.0, 500.0, &c), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn transmission_decreases_with_melanin() {
        let c = OpticsConstants::default();
        let lo = epidermal_transmission(0.013, 450.0, &c);
        let hi = epidermal_transmission(0.43, 450.0, &c);
        assert!(hi < lo);
        // Golden values from an independent evaluation of exp(−μ·d).
        assert_relative_eq!(lo, 0.871_594_398_7, max_relative = 1e-9);
        assert_relative_eq!(hi, 0.015_690_185_48, max_relative = 1e-9);
    }

    #[test]
    fn kubelka_munk_limits() {
        assert_eq!(kubelka_munk_reflectance(0.0, 3.0).unwrap(), 1.0);
        assert_relative_eq!(
            kubelka_munk_reflectance(4.0, 1.0).unwrap(),
            5.0 - 2.0 * 6f64.sqrt(),
            max_relative = 1e-12
        );
        assert!(matches!(kubelka_munk_reflectance(1.0, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn blood_darkens_green() {
        let c = OpticsConstants::default();
        let t = ChromophoreTables::bundled();
        let lo = dermal_reflectance(0.02, 560.0, &c, &t).unwrap();
        let hi = dermal_reflectance(0.07, 560.0, &c, &t).unwrap();
        assert!(hi < lo);
        assert!(blood_absorption(560.0, &c, &t).unwrap() > blood_absorption(650.0, &c, &t).unwrap());
    }

    #[test]
    fn reflectance_reduces_to_dermis_without_epidermal_absorption() {
        let c = OpticsConstants {
            melanin_prefactor: 1e-300,
            baseline_params: [1e-300, 1e-300, 154.0, 66.2],
            ..Default::default()
        };
        let t = ChromophoreTables::bundled();
        let g = WavelengthGrid::visible();
        let bio = BioParams::new(0.3, 0.05).unwrap();
        let r = skin_reflectance(&bio, &g, &c, &t).unwrap();
        for (l, v) in g.samples().zip(r.values()) {
            assert_relative_eq!(*v, dermal_reflectance(0.05, l, &c, &t).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn scalar_and_cached_paths_agree() {
        let c = OpticsConstants::default();
        let t = ChromophoreTables::bundled();
        let g = WavelengthGrid::visible();
        let bio = BioParams::midpoint();
        let r = model().reflectance(&bio).unwrap();
        for (l, v) in g.samples().zip(r.values()) {
            let direct = epidermal_transmission(bio.f_mel, l, &c).powi(2)
                * dermal_reflectance(bio.f_blood, l, &c, &t).unwrap();
            assert_relative_eq!(*v, direct, max_relative = 1e-12);
            assert!(*v > 0.0 && *v <= 1.0);
        }
    }

    #[test]
    fn radiance_special_cases() {
        let m = model();
        let g = *m.grid();
        let e = bundled::d65_on(&g).unwrap();
        let bio = BioParams::midpoint();
        let spec = m.radiance(&SkinParams::new(0.0, 1.0, bio).unwrap(), &e).unwrap();
        assert_eq!(spec.values(), e.values());
        let zero = m.radiance(&SkinParams::new(0.0, 0.0, bio).unwrap(), &e).unwrap();
        assert!(zero.values().iter().all(|v| *v == 0.0));
        let flat = Spectrum::flat(g, 1.0).unwrap();
        let diffuse = m.radiance(&SkinParams::new(1.0, 0.0, bio).unwrap(), &flat).unwrap();
        assert_eq!(diffuse.values(), m.reflectance(&bio).unwrap().values());
    }

    #[test]
    fn radiance_rejects_other_grid() {
        let m = model();
        let e = Spectrum::flat(WavelengthGrid::new(400.0, 700.0, 16).unwrap(), 1.0).unwrap();
        let p = SkinParams::new(1.0, 0.1, BioParams::midpoint()).unwrap();
        assert!(matches!(m.radiance(&p, &e), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn shading_columns_are_exact() {
        let m = model();
        let e = bundled::d65_on(m.grid()).unwrap();
        let p = SkinParams::new(0.8, 0.2, BioParams::new(0.2, 0.045).unwrap()).unwrap();
        let j = m.radiance_jacobian(&p, &e).unwrap();
        assert_eq!(j.column(1), e.values());
        let r = m.reflectance(&p.bio).unwrap();
        let expected: Vec<f64> = e.values().iter().zip(r.values()).map(|(e, r)| e * r).collect();
        for (a, b) in j.column(0).iter().zip(&expected) {
            assert_relative_eq!(*a, *b, max_relative = 1e-14);
        }
    }

    #[test]
    fn cache_matches_direct_reflectance() {
        let m = model();
        let cache = ReflectanceCache::over_box(&m, 5);
        assert_eq!(cache.f_mel[4], F_MEL_MAX);
        let mut out = vec![0.0; 31];
        cache.reflectance_into(2, 3, &mut out);
        let direct = m
            .reflectance(&BioParams::new(cache.f_mel[2], cache.f_blood[3]).unwrap())
            .unwrap();
        for (a, b) in out.iter().zip(direct.values()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-14);
        }
    }

    #[test]
    fn optics_validation() {
        assert!(OpticsConstants::default().validate().is_ok());
        let bad = OpticsConstants {
            oxygenation_fraction: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OpticsConstants {
            epidermis_thickness: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn optics_json_partial_override() {
        let c: OpticsConstants = serde_json::from_str(r#"{"epidermis_thickness":0.02}"#).unwrap();
        assert_eq!(c.epidermis_thickness, 0.02);
        assert_eq!(c.melanin_exponent, 3.33);
        assert!(serde_json::from_str::<OpticsConstants>(r#"{"bogus":1}"#).is_err());
    }
}
