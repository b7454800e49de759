//! Smooth bijections between unconstrained reals and feasible skin parameters.
//!
//! Shading goes through `exp`, the two fractions through a logistic squashed
//! into their boxes, so any finite iterate of an unconstrained solver is a
//! physically valid parameter set.

use crate::error::{Error, Result};
use crate::forward::{BioParams, SkinParams, F_BLOOD_MAX, F_BLOOD_MIN, F_MEL_MAX, F_MEL_MIN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnconstrainedParams {
    pub phi_d: f64,
    pub phi_s: f64,
    pub phi_mel: f64,
    pub phi_blood: f64,
}

impl UnconstrainedParams {
    pub fn to_array(self) -> [f64; 4] {
        [self.phi_d, self.phi_s, self.phi_mel, self.phi_blood]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        UnconstrainedParams {
            phi_d: a[0],
            phi_s: a[1],
            phi_mel: a[2],
            phi_blood: a[3],
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn squash(phi: f64, lo: f64, hi: f64) -> f64 {
    ((hi - lo) * logistic(phi) + lo).clamp(lo, hi)
}

fn unsquash(f: f64, lo: f64, hi: f64, name: &str) -> Result<f64> {
    if !(f > lo && f < hi) {
        return Err(Error::Boundary(format!(
            "{name} = {f} must lie strictly inside ({lo}, {hi})"
        )));
    }
    let t = (f - lo) / (hi - lo);
    Ok((t / (1.0 - t)).ln())
}

pub fn to_constrained(u: &UnconstrainedParams) -> SkinParams {
    SkinParams {
        i_d: u.phi_d.exp(),
        i_s: u.phi_s.exp(),
        bio: BioParams {
            f_mel: squash(u.phi_mel, F_MEL_MIN, F_MEL_MAX),
            f_blood: squash(u.phi_blood, F_BLOOD_MIN, F_BLOOD_MAX),
        },
    }
}

pub fn to_unconstrained(p: &SkinParams) -> Result<UnconstrainedParams> {
    if !(p.i_d > 0.0 && p.i_s > 0.0) {
        return Err(Error::Boundary(format!(
            "shading must be strictly positive, got i_d={}, i_s={}",
            p.i_d, p.i_s
        )));
    }
    Ok(UnconstrainedParams {
        phi_d: p.i_d.ln(),
        phi_s: p.i_s.ln(),
        phi_mel: unsquash(p.bio.f_mel, F_MEL_MIN, F_MEL_MAX, "f_mel")?,
        phi_blood: unsquash(p.bio.f_blood, F_BLOOD_MIN, F_BLOOD_MAX, "f_blood")?,
    })
}

/// d(i_d, i_s, f_mel, f_blood)/d(φ_d, φ_s, φ_mel, φ_blood), a diagonal map.
pub fn chain_factors(u: &UnconstrainedParams) -> [f64; 4] {
    let sm = logistic(u.phi_mel);
    let sb = logistic(u.phi_blood);
    [
        u.phi_d.exp(),
        u.phi_s.exp(),
        (F_MEL_MAX - F_MEL_MIN) * sm * (1.0 - sm),
        (F_BLOOD_MAX - F_BLOOD_MIN) * sb * (1.0 - sb),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_maps_to_box_midpoints() {
        let p = to_constrained(&UnconstrainedParams::from_array([0.0; 4]));
        assert_eq!(p.i_d, 1.0);
        assert_eq!(p.i_s, 1.0);
        assert_relative_eq!(p.bio.f_mel, 0.2215, max_relative = 1e-15);
        assert_relative_eq!(p.bio.f_blood, 0.045, max_relative = 1e-15);
    }

    #[test]
    fn saturation_and_log_shading() {
        let p = to_constrained(&UnconstrainedParams::from_array([2f64.ln(), 0.0, 800.0, -800.0]));
        assert_relative_eq!(p.i_d, 2.0, max_relative = 1e-15);
        assert_eq!(p.bio.f_mel, F_MEL_MAX);
        assert_eq!(p.bio.f_blood, F_BLOOD_MIN);
        let p = to_constrained(&UnconstrainedParams::from_array([0.0, 0.0, 40.0, 0.0]));
        assert!((p.bio.f_mel - 0.43).abs() < 1e-15);
    }

    #[test]
    fn inverse_of_midpoint_is_zero() {
        let mid = to_constrained(&UnconstrainedParams::from_array([0.0; 4]));
        let u = to_unconstrained(&mid).unwrap();
        for v in u.to_array() {
            assert!(v.abs() < 1e-14, "{v}");
        }
    }

    #[test]
    fn boundary_values_rejected() {
        let p = SkinParams {
            i_d: 1.0,
            i_s: 1.0,
            bio: BioParams { f_mel: 0.43, f_blood: 0.045 },
        };
        assert!(matches!(to_unconstrained(&p), Err(Error::Boundary(_))));
        let p = SkinParams {
            i_s: 0.0,
            ..p
        };
        assert!(to_unconstrained(&p).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn round_trip(i_d in 1e-3f64..10.0, i_s in 1e-4f64..2.0, tm in 1e-3f64..0.999, tb in 1e-3f64..0.999) {
            let p = SkinParams {
                i_d,
                i_s,
                bio: BioParams {
                    f_mel: F_MEL_MIN + tm * (F_MEL_MAX - F_MEL_MIN),
                    f_blood: F_BLOOD_MIN + tb * (F_BLOOD_MAX - F_BLOOD_MIN),
                },
            };
            let back = to_constrained(&to_unconstrained(&p).unwrap());
            prop_assert!(((back.i_d - p.i_d) / p.i_d).abs() < 1e-12);
            prop_assert!(((back.i_s - p.i_s) / p.i_s).abs() < 1e-12);
            prop_assert!(((back.bio.f_mel - p.bio.f_mel) / p.bio.f_mel).abs() < 1e-12);
            prop_assert!(((back.bio.f_blood - p.bio.f_blood) / p.bio.f_blood).abs() < 1e-12);
        }

        #[test]
        fn any_finite_phi_is_feasible(a in -50f64..50.0, b in -50f64..50.0, c in -1e3f64..1e3, d in -1e3f64..1e3) {
            let p = to_constrained(&UnconstrainedParams::from_array([a, b, c, d]));
            prop_assert!(p.i_d > 0.0 && p.i_s > 0.0);
            prop_assert!(BioParams::new(p.bio.f_mel, p.bio.f_blood).is_ok());
        }
    }
}
