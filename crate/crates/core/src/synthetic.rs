//! Seeded synthetic data: model-generated skin pixels, smooth non-skin
//! distractor spectra and a small face-like test scene.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cube::MultispectralCube;
use crate::error::Result;
use crate::fitter::{fit_pixel, FitOptions};
use crate::forward::{BioParams, SkinModel, SkinParams, F_BLOOD_MAX, F_BLOOD_MIN, F_MEL_MAX, F_MEL_MIN};
use crate::maps::ParameterMaps;
use crate::segmenter::{feature_vector, LabelledPixel};
use crate::spectral::{Spectrum, WavelengthGrid};

/// Uniform draw with `i_d ∈ [0.2, 2]`, `i_s ∈ [0, 0.5]` and bio parameters
/// strictly inside their box.
pub fn random_params(rng: &mut impl Rng) -> SkinParams {
    SkinParams {
        i_d: rng.random_range(0.2..=2.0),
        i_s: rng.random_range(0.0..=0.5),
        bio: BioParams {
            f_mel: rng.random_range(F_MEL_MIN..F_MEL_MAX),
            f_blood: rng.random_range(F_BLOOD_MIN..F_BLOOD_MAX),
        },
    }
}

/// `v·(1 + σ·n)` per sample, floored at zero.
pub fn multiplicative_noise(values: &[f64], sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, sigma).expect("non-negative sigma");
    values.iter().map(|v| (v * (1.0 + normal.sample(rng))).max(0.0)).collect()
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `amplitude · softplus(c₀ + c₁t + c₂t² + c₃t³)` with `t ∈ [−1, 1]` across the
/// grid and standard normal coefficients.
pub fn smooth_distractor(grid: &WavelengthGrid, amplitude: f64, rng: &mut impl Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let c: [f64; 4] = std::array::from_fn(|_| normal.sample(rng));
    let n = grid.count();
    (0..n)
        .map(|k| {
            let t = 2.0 * k as f64 / (n - 1) as f64 - 1.0;
            amplitude * softplus(c[0] + t * (c[1] + t * (c[2] + t * c[3])))
        })
        .collect()
}

/// Two informative features with a margin around `x₀ + x₁ = 0`, zero-padded
/// to `len` entries.
pub fn separable_set(n: usize, len: usize, rng: &mut impl Rng) -> Vec<LabelledPixel> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        if (a + b).abs() < 0.1 {
            continue;
        }
        let mut features = vec![0.0; len];
        features[0] = a;
        features[1] = b;
        out.push(LabelledPixel { features, skin: a + b > 0.0 });
    }
    out
}

/// `n_each` noisy model-generated skin pixels and `n_each` distractors, each
/// featurized with its own fitted parameters.
pub fn skin_vs_distractors(
    model: &SkinModel,
    e: &Spectrum,
    n_each: usize,
    noise: f64,
    rng: &mut impl Rng,
) -> Result<Vec<LabelledPixel>> {
    let grid = *model.grid();
    let opts = FitOptions::default();
    let e_mean = e.mean();
    let mut out = Vec::with_capacity(2 * n_each);
    for k in 0..2 * n_each {
        let skin = k % 2 == 0;
        let l = if skin {
            let p = random_params(rng);
            multiplicative_noise(model.radiance(&p, e)?.values(), noise, rng)
        } else {
            let amp = rng.random_range(0.05..0.6) * e_mean;
            smooth_distractor(&grid, amp, rng)
        };
        let fit = fit_pixel(&Spectrum::new(grid, l.clone())?, e, model, &opts)?;
        out.push(LabelledPixel {
            features: feature_vector(&l, &fit.params),
            skin,
        });
    }
    Ok(out)
}

/// A face-like scene with known ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub cube: MultispectralCube,
    /// Ground-truth parameters (background pixels hold the box midpoint and zero shading).
    pub truth: ParameterMaps,
    /// `true` inside the skin ellipse.
    pub skin_mask: Vec<bool>,
}

/// An ellipse of skin with smoothly varying chromophores, a diffuse gradient
/// and a specular highlight, on a background of smooth distractor spectra.
/// Skin radiance is stored as f32 on the grid of `model`.
pub fn face_scene(
    model: &SkinModel,
    e: &Spectrum,
    width: usize,
    height: usize,
    rng: &mut impl Rng,
) -> Result<SyntheticScene> {
    let grid = *model.grid();
    let mut truth = ParameterMaps::uniform(width, height, SkinParams {
        i_d: 0.0,
        i_s: 0.0,
        bio: BioParams::midpoint(),
    });
    let mut skin_mask = vec![false; width * height];
    let mut pixels = Vec::with_capacity(width * height);
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let (rx, ry) = (0.4 * width as f64, 0.45 * height as f64);
    let (hx, hy) = (cx - 0.15 * width as f64, cy - 0.2 * height as f64);
    let e_mean = e.mean();
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let u = (x as f64 - cx) / rx;
            let v = (y as f64 - cy) / ry;
            if u * u + v * v <= 1.0 {
                let s = ((x as f64 - hx).powi(2) + (y as f64 - hy).powi(2)) / (0.08 * (width * width) as f64);
                let p = SkinParams {
                    i_d: 0.6 + 0.5 * (1.0 - 0.5 * (u * u + v * v)) + 0.05 * (1.7 * u).sin(),
                    i_s: 0.01 + 0.35 * (-s).exp(),
                    bio: BioParams {
                        f_mel: 0.08 + 0.05 * (0.5 + 0.5 * (2.3 * u + 1.1 * v).sin()),
                        f_blood: 0.03 + 0.015 * (0.5 + 0.5 * (3.1 * v - 0.7 * u).cos()),
                    },
                };
                truth.set_params(i, &p);
                skin_mask[i] = true;
                pixels.push(model.radiance(&p, e)?.into_values());
            } else {
                let amp = rng.random_range(0.05..0.4) * e_mean;
                pixels.push(smooth_distractor(&grid, amp, rng));
            }
        }
    }
    let cube = MultispectralCube::from_pixels(width, height, grid, &pixels)?;
    Ok(SyntheticScene { cube, truth, skin_mask })
}
