//! Per-pixel inversion of the skin model.
//!
//! For each pixel the objective `ε = ‖l_obs − diag(e)(i_d·r(f_mel, f_blood) + i_s)‖²`
//! is minimized over the unconstrained variables of [`reparam`], so box and
//! positivity constraints hold at every iterate by construction. Pixels are
//! fitted independently; an image fit is a pure map over pixel indices.

pub mod oracle;
pub mod reparam;
pub mod trust_region;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::MultispectralCube;
use crate::error::{Error, Result};
use crate::forward::{BioParams, SkinModel, SkinParams, F_BLOOD_MAX, F_BLOOD_MIN, F_MEL_MAX, F_MEL_MIN};
use crate::maps::ParameterMaps;
use crate::spectral::Spectrum;

pub use crate::maps::FitStatus;
pub use oracle::{nnls2, oracle_fit};
pub use reparam::{to_constrained, to_unconstrained, UnconstrainedParams};
use trust_region::{IterateRecord, Residuals4, Termination, TrustRegionConfig};

/// When a pixel is too dark to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DarkThreshold {
    /// Mean pixel radiance below this value, in radiance units.
    Absolute(f64),
    /// Mean pixel radiance below this fraction of the image mean. A single
    /// pixel fitted on its own has no image, so only a non-positive mean counts.
    RelativeToImageMean(f64),
}

impl DarkThreshold {
    fn resolve(self, image_mean: Option<f64>) -> f64 {
        match (self, image_mean) {
            (DarkThreshold::Absolute(v), _) => v,
            (DarkThreshold::RelativeToImageMean(f), Some(m)) => f * m,
            (DarkThreshold::RelativeToImageMean(_), None) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    pub multistart_seeds: Vec<BioParams>,
    pub dark_pixel_threshold: DarkThreshold,
    /// Worker threads for [`fit_image`]; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            multistart_seeds: default_seeds(),
            dark_pixel_threshold: DarkThreshold::RelativeToImageMean(1e-4),
            workers: None,
        }
    }
}

/// Box midpoint plus low-melanin, high-melanin and high-blood starts.
pub fn default_seeds() -> Vec<BioParams> {
    let mel = |t: f64| F_MEL_MIN + t * (F_MEL_MAX - F_MEL_MIN);
    let blood = |t: f64| F_BLOOD_MIN + t * (F_BLOOD_MAX - F_BLOOD_MIN);
    vec![
        BioParams::midpoint(),
        BioParams { f_mel: mel(0.1), f_blood: blood(0.5) },
        BioParams { f_mel: mel(0.9), f_blood: blood(0.5) },
        BioParams { f_mel: mel(0.5), f_blood: blood(0.9) },
    ]
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if !(self.gradient_tolerance > 0.0 && self.step_tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.multistart_seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one multistart seed is required".into()));
        }
        for s in &self.multistart_seeds {
            if !(s.f_mel > F_MEL_MIN && s.f_mel < F_MEL_MAX && s.f_blood > F_BLOOD_MIN && s.f_blood < F_BLOOD_MAX) {
                return Err(Error::InvalidArgument(format!(
                    "multistart seed ({}, {}) must lie strictly inside the parameter box",
                    s.f_mel, s.f_blood
                )));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        Ok(())
    }

    fn solver_config(&self) -> TrustRegionConfig {
        TrustRegionConfig {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            step_tolerance: self.step_tolerance,
            ..TrustRegionConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub params: SkinParams,
    /// ‖l_obs − l_model‖₂ in radiance units.
    pub residual_norm: f64,
    /// Mean absolute reflectance error over mean observed reflectance, with
    /// the illuminant divided out of both spectra.
    pub relative_spectral_error: f64,
    pub iterations: usize,
    pub status: FitStatus,
}

pub(crate) fn residual_norm(obs: &[f64], model: &[f64]) -> f64 {
    obs.iter().zip(model).map(|(o, m)| (o - m) * (o - m)).sum::<f64>().sqrt()
}

pub(crate) fn relative_spectral_error(obs: &[f64], model: &[f64], e: &[f64]) -> f64 {
    let n = obs.len() as f64;
    let abs_err = obs.iter().zip(model).zip(e).map(|((o, m), e)| ((o - m) / e).abs()).sum::<f64>() / n;
    let mean_obs = obs.iter().zip(e).map(|(o, e)| o / e).sum::<f64>() / n;
    if mean_obs > 0.0 {
        abs_err / mean_obs
    } else {
        0.0
    }
}

pub(crate) fn check_inputs(l_obs: &Spectrum, e: &Spectrum, model: &SkinModel) -> Result<()> {
    l_obs.check_grid(model.grid(), "observed radiance")?;
    e.check_grid(model.grid(), "illuminant")?;
    check_illuminant(e)
}

fn check_illuminant(e: &Spectrum) -> Result<()> {
    if let Some((k, v)) = e.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "illuminant must be positive at every channel (channel {k} is {v})"
        )));
    }
    Ok(())
}

/// Residuals `model(φ) − obs` for one pixel, with observation and illuminant
/// pre-divided by the mean observed radiance so tolerances are scale-free.
struct PixelProblem<'a> {
    model: &'a SkinModel,
    e: Vec<f64>,
    obs: Vec<f64>,
    r: Vec<f64>,
    dr_mel: Vec<f64>,
    dr_blood: Vec<f64>,
}

impl<'a> PixelProblem<'a> {
    fn new(model: &'a SkinModel, obs: &[f64], e: &[f64], scale: f64) -> Self {
        let n = obs.len();
        PixelProblem {
            model,
            e: e.iter().map(|v| v / scale).collect(),
            obs: obs.iter().map(|v| v / scale).collect(),
            r: vec![0.0; n],
            dr_mel: vec![0.0; n],
            dr_blood: vec![0.0; n],
        }
    }
}

impl Residuals4 for PixelProblem<'_> {
    fn residual_count(&self) -> usize {
        self.obs.len()
    }

    fn evaluate(&mut self, x: &[f64; 4], residuals: &mut [f64], jacobian: Option<&mut [[f64; 4]]>) {
        let u = UnconstrainedParams::from_array(*x);
        let p = to_constrained(&u);
        match jacobian {
            None => {
                self.model.reflectance_into(&p.bio, &mut self.r);
                for k in 0..self.obs.len() {
                    residuals[k] = self.e[k] * (p.i_d * self.r[k] + p.i_s) - self.obs[k];
                }
            }
            Some(jac) => {
                self.model
                    .reflectance_with_derivatives(&p.bio, &mut self.r, &mut self.dr_mel, &mut self.dr_blood);
                let chain = reparam::chain_factors(&u);
                for k in 0..self.obs.len() {
                    let ek = self.e[k];
                    residuals[k] = ek * (p.i_d * self.r[k] + p.i_s) - self.obs[k];
                    jac[k] = [
                        ek * self.r[k] * chain[0],
                        ek * chain[1],
                        ek * p.i_d * self.dr_mel[k] * chain[2],
                        ek * p.i_d * self.dr_blood[k] * chain[3],
                    ];
                }
            }
        }
    }
}

/// Starting point for one seed: shading chosen so mean model radiance equals
/// mean observed radiance, with `i_s = 0.05·i_d`.
pub fn initial_guess(model: &SkinModel, obs: &[f64], e: &[f64], seed: &BioParams) -> Result<UnconstrainedParams> {
    let mut r = vec![0.0; obs.len()];
    model.reflectance_into(seed, &mut r);
    let mean_obs = obs.iter().sum::<f64>() / obs.len() as f64;
    let mean_unit = e.iter().zip(&r).map(|(e, r)| e * (r + 0.05)).sum::<f64>() / obs.len() as f64;
    let i_d = mean_obs / mean_unit;
    to_unconstrained(&SkinParams {
        i_d,
        i_s: 0.05 * i_d,
        bio: *seed,
    })
}

/// Runs the solver from one seed, reporting every trial step to `observer`.
pub fn fit_from_seed(
    l_obs: &Spectrum,
    e: &Spectrum,
    model: &SkinModel,
    opts: &FitOptions,
    seed: &BioParams,
    observer: impl FnMut(&IterateRecord),
) -> Result<FitResult> {
    check_inputs(l_obs, e, model)?;
    let obs = l_obs.values();
    let scale = obs.iter().sum::<f64>() / obs.len() as f64;
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument("observed radiance is identically zero".into()));
    }
    Ok(solve_seed(model, obs, e.values(), scale, opts, seed, observer))
}

fn solve_seed(
    model: &SkinModel,
    obs: &[f64],
    e: &[f64],
    scale: f64,
    opts: &FitOptions,
    seed: &BioParams,
    observer: impl FnMut(&IterateRecord),
) -> FitResult {
    let mut problem = PixelProblem::new(model, obs, e, scale);
    let x0 = match initial_guess(model, &problem.obs, &problem.e, seed) {
        Ok(u) => u.to_array(),
        Err(_) => return failed(obs),
    };
    let out = trust_region::minimize(&mut problem, x0, &opts.solver_config(), observer);
    if out.termination == Termination::NonFinite {
        return failed(obs);
    }
    let params = to_constrained(&UnconstrainedParams::from_array(out.x));
    let mut r = vec![0.0; obs.len()];
    model.reflectance_into(&params.bio, &mut r);
    let l_model: Vec<f64> = r.iter().zip(e).map(|(r, e)| e * (params.i_d * r + params.i_s)).collect();
    FitResult {
        params,
        residual_norm: residual_norm(obs, &l_model),
        relative_spectral_error: relative_spectral_error(obs, &l_model, e),
        iterations: out.iterations,
        status: match out.termination {
            Termination::Gradient | Termination::Step => FitStatus::Converged,
            Termination::MaxIterations => FitStatus::MaxIterations,
            Termination::NonFinite => FitStatus::Failed,
        },
    }
}

fn failed(obs: &[f64]) -> FitResult {
    FitResult {
        params: SkinParams {
            i_d: 0.0,
            i_s: 0.0,
            bio: BioParams::midpoint(),
        },
        residual_norm: obs.iter().map(|v| v * v).sum::<f64>().sqrt(),
        relative_spectral_error: 1.0,
        iterations: 0,
        status: FitStatus::Failed,
    }
}

fn dark(obs: &[f64]) -> FitResult {
    FitResult {
        status: FitStatus::DarkPixel,
        relative_spectral_error: 0.0,
        ..failed(obs)
    }
}

fn fit_values(model: &SkinModel, obs: &[f64], e: &[f64], opts: &FitOptions, dark_threshold: f64) -> FitResult {
    let mean = obs.iter().sum::<f64>() / obs.len() as f64;
    if !(mean > 0.0) || mean < dark_threshold {
        return dark(obs);
    }
    let mut best: Option<FitResult> = None;
    for seed in &opts.multistart_seeds {
        let res = solve_seed(model, obs, e, mean, opts, seed, |_| {});
        if res.status == FitStatus::Failed {
            continue;
        }
        if best.as_ref().is_none_or(|b| res.residual_norm < b.residual_norm) {
            best = Some(res);
        }
    }
    best.unwrap_or_else(|| failed(obs))
}

/// Fits one pixel from every multistart seed and keeps the lowest residual.
pub fn fit_pixel(l_obs: &Spectrum, e: &Spectrum, model: &SkinModel, opts: &FitOptions) -> Result<FitResult> {
    check_inputs(l_obs, e, model)?;
    let threshold = opts.dark_pixel_threshold.resolve(None);
    Ok(fit_values(model, l_obs.values(), e.values(), opts, threshold))
}

/// Fits every pixel independently. Results do not depend on the number of
/// workers or the order pixels are visited in.
pub fn fit_image(cube: &MultispectralCube, e: &Spectrum, model: &SkinModel, opts: &FitOptions) -> Result<ParameterMaps> {
    opts.validate()?;
    e.check_grid(cube.grid(), "illuminant")?;
    e.check_grid(model.grid(), "illuminant")?;
    check_illuminant(e)?;
    let threshold = opts.dark_pixel_threshold.resolve(Some(cube.mean_radiance()));
    let ev = e.values();

    let run = || -> Vec<FitResult> {
        (0..cube.pixel_count())
            .into_par_iter()
            .map(|i| fit_values(model, &cube.pixel_f64(i), ev, opts, threshold))
            .collect()
    };
    let results = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut maps = ParameterMaps::uniform(cube.width(), cube.height(), SkinParams {
        i_d: 0.0,
        i_s: 0.0,
        bio: BioParams::midpoint(),
    });
    for (i, r) in results.iter().enumerate() {
        maps.set_params(i, &r.params);
        maps.status[i] = r.status;
        maps.relative_error[i] = r.relative_spectral_error;
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{bundled, WavelengthGrid};

    fn setup() -> (SkinModel, Spectrum) {
        let g = WavelengthGrid::visible();
        (SkinModel::with_defaults(g).unwrap(), bundled::d65_on(&g).unwrap())
    }

    #[test]
    fn noiseless_pixel_recovered() {
        let (m, e) = setup();
        let truth = SkinParams::new(0.9, 0.12, BioParams::new(0.08, 0.031).unwrap()).unwrap();
        let l = m.radiance(&truth, &e).unwrap();
        let fit = fit_pixel(&l, &e, &m, &FitOptions::default()).unwrap();
        assert_eq!(fit.status, FitStatus::Converged);
        assert!((fit.params.bio.f_mel - 0.08).abs() < 1e-6, "{fit:?}");
        assert!((fit.params.bio.f_blood - 0.031).abs() < 1e-6, "{fit:?}");
        assert!((fit.params.i_d / 0.9 - 1.0).abs() < 1e-6);
        assert!((fit.params.i_s / 0.12 - 1.0).abs() < 1e-6);
        let norm = l.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(fit.residual_norm < 1e-8 * norm);
    }

    #[test]
    fn zero_pixel_is_dark() {
        let (m, e) = setup();
        let zero = Spectrum::flat(*m.grid(), 0.0).unwrap();
        let fit = fit_pixel(&zero, &e, &m, &FitOptions::default()).unwrap();
        assert_eq!(fit.status, FitStatus::DarkPixel);
        assert_eq!(fit.params.i_d, 0.0);
        assert_eq!(fit.params.bio, BioParams::midpoint());
    }

    #[test]
    fn bad_inputs() {
        let (m, e) = setup();
        let l = Spectrum::flat(*m.grid(), 1.0).unwrap();
        let mut ev = e.values().to_vec();
        ev[3] = 0.0;
        let e0 = Spectrum::new(*m.grid(), ev).unwrap();
        assert!(matches!(fit_pixel(&l, &e0, &m, &FitOptions::default()), Err(Error::InvalidArgument(_))));
        let other = Spectrum::flat(WavelengthGrid::new(400.0, 700.0, 16).unwrap(), 1.0).unwrap();
        assert!(matches!(fit_pixel(&other, &e, &m, &FitOptions::default()), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn options_validation() {
        let mut o = FitOptions::default();
        assert!(o.validate().is_ok());
        o.multistart_seeds = vec![BioParams { f_mel: 0.43, f_blood: 0.04 }];
        assert!(o.validate().is_err());
        let o = FitOptions {
            max_iterations: 0,
            ..FitOptions::default()
        };
        assert!(o.validate().is_err());
    }

    #[test]
    fn relative_error_divides_out_illuminant() {
        let obs = [2.0, 4.0];
        let model = [2.0, 3.0];
        let e = [2.0, 4.0];
        // Reflectances 1, 1 vs 1, 0.75: mean abs error 0.125 over mean 1.
        assert!((relative_spectral_error(&obs, &model, &e) - 0.125).abs() < 1e-15);
    }
}
