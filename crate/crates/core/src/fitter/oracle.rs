//! Exhaustive reference fit: a lattice over (f_mel, f_blood) with closed-form
//! non-negative shading at every node.

use crate::error::Result;
use crate::forward::{BioParams, ReflectanceCache, SkinModel, SkinParams};
use crate::spectral::Spectrum;

use super::{check_inputs, relative_spectral_error, residual_norm, FitResult, FitStatus};

/// Non-negative least squares for `obs ≈ x·a + y·b` with `x, y ≥ 0`.
///
/// The objective is a convex quadratic in two variables, so the minimizer is
/// either the unconstrained solution (if feasible) or lies on one of the two
/// axes; all three candidates are evaluated and the best kept.
pub fn nnls2(a: &[f64], b: &[f64], obs: &[f64]) -> (f64, f64) {
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    let (aa, ab, bb) = (dot(a, a), dot(a, b), dot(b, b));
    let (ao, bo) = (dot(a, obs), dot(b, obs));
    let resid = |x: f64, y: f64| -> f64 {
        a.iter()
            .zip(b)
            .zip(obs)
            .map(|((a, b), o)| {
                let d = o - x * a - y * b;
                d * d
            })
            .sum()
    };

    let mut candidates = Vec::with_capacity(3);
    let det = aa * bb - ab * ab;
    if det > 1e-12 * aa * bb {
        let x = (bb * ao - ab * bo) / det;
        let y = (aa * bo - ab * ao) / det;
        if x >= 0.0 && y >= 0.0 {
            candidates.push((x, y));
        }
    }
    candidates.push((if aa > 0.0 { (ao / aa).max(0.0) } else { 0.0 }, 0.0));
    candidates.push((0.0, if bb > 0.0 { (bo / bb).max(0.0) } else { 0.0 }));

    let mut best = candidates[0];
    let mut best_r = resid(best.0, best.1);
    for c in &candidates[1..] {
        let r = resid(c.0, c.1);
        if r < best_r {
            best = *c;
            best_r = r;
        }
    }
    best
}

/// Grid-search fit at `grid_density²` bio nodes spanning the full box.
pub fn oracle_fit(l_obs: &Spectrum, e: &Spectrum, model: &SkinModel, grid_density: usize) -> Result<FitResult> {
    check_inputs(l_obs, e, model)?;
    let cache = ReflectanceCache::over_box(model, grid_density.max(2));
    let n = model.grid().count();
    let obs = l_obs.values();
    let ev = e.values();
    let mut r = vec![0.0; n];
    let mut a = vec![0.0; n];

    let mut best: Option<(f64, SkinParams)> = None;
    for i in 0..cache.f_mel.len() {
        for j in 0..cache.f_blood.len() {
            cache.reflectance_into(i, j, &mut r);
            for k in 0..n {
                a[k] = ev[k] * r[k];
            }
            let (i_d, i_s) = nnls2(&a, ev, obs);
            let res: f64 = (0..n)
                .map(|k| {
                    let d = obs[k] - i_d * a[k] - i_s * ev[k];
                    d * d
                })
                .sum();
            if best.as_ref().is_none_or(|(b, _)| res < *b) {
                best = Some((
                    res,
                    SkinParams {
                        i_d,
                        i_s,
                        bio: BioParams {
                            f_mel: cache.f_mel[i],
                            f_blood: cache.f_blood[j],
                        },
                    },
                ));
            }
        }
    }
    let (_, params) = best.expect("lattice has at least one node");
    let model_l = model.radiance(&params, e)?;
    Ok(FitResult {
        params,
        residual_norm: residual_norm(obs, model_l.values()),
        relative_spectral_error: relative_spectral_error(obs, model_l.values(), ev),
        iterations: cache.f_mel.len() * cache.f_blood.len(),
        status: FitStatus::Converged,
    })
}
