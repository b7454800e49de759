//! Trust-region Gauss-Newton (Levenberg-Marquardt) for four unknowns.
//!
//! Each iteration minimizes the Gauss-Newton model of `ε = ‖r‖²` inside a ball
//! of radius Δ. The 4×4 subproblem is solved exactly through an
//! eigendecomposition of `JᵀJ`; the Levenberg-Marquardt multiplier μ is found
//! on the secular equation `‖p(μ)‖ = Δ`. Δ grows or shrinks with the ratio of
//! actual to predicted reduction.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};

/// A least-squares problem in four unconstrained variables.
pub trait Residuals4 {
    /// Number of residuals.
    fn residual_count(&self) -> usize;

    /// Fills `residuals` and, when requested, the Jacobian rows `∂r_k/∂x`.
    fn evaluate(&mut self, x: &[f64; 4], residuals: &mut [f64], jacobian: Option<&mut [[f64; 4]]>);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionConfig {
    pub max_iterations: usize,
    /// Stop when ‖∇ε‖∞ falls below this.
    pub gradient_tolerance: f64,
    /// Stop when the step (or the radius) falls below this.
    pub step_tolerance: f64,
    pub initial_radius: f64,
    pub max_radius: f64,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        TrustRegionConfig {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            initial_radius: 1.0,
            max_radius: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Step,
    MaxIterations,
    NonFinite,
}

/// One trial step, reported to the observer whether accepted or not.
#[derive(Debug, Clone, Copy)]
pub struct IterateRecord {
    pub iteration: usize,
    /// Current iterate after the accept/reject decision.
    pub x: [f64; 4],
    pub objective: f64,
    /// Objective at the trial point.
    pub trial_objective: f64,
    pub accepted: bool,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Outcome {
    pub x: [f64; 4],
    pub objective: f64,
    pub iterations: usize,
    pub termination: Termination,
}

const ACCEPT_RATIO: f64 = 1e-4;

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn normal_equations(r: &[f64], jac: &[[f64; 4]]) -> (Vector4<f64>, Matrix4<f64>) {
    let mut g = Vector4::zeros();
    let mut h = Matrix4::zeros();
    for (rk, row) in r.iter().zip(jac) {
        for a in 0..4 {
            g[a] += 2.0 * row[a] * rk;
            for b in a..4 {
                h[(a, b)] += 2.0 * row[a] * row[b];
            }
        }
    }
    for a in 0..4 {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
    }
    (g, h)
}

/// Minimizer of `gᵀp + ½pᵀHp` subject to `‖p‖ ≤ radius`, with `H` positive
/// semidefinite.
pub fn solve_subproblem(h: &Matrix4<f64>, g: &Vector4<f64>, radius: f64) -> Vector4<f64> {
    let eig = SymmetricEigen::new(*h);
    let lambda: [f64; 4] = std::array::from_fn(|i| eig.eigenvalues[i].max(0.0));
    let c = eig.eigenvectors.transpose() * g;
    let lmax = lambda.iter().cloned().fold(0.0, f64::max);
    let tiny = 1e-14 * lmax.max(f64::MIN_POSITIVE);

    let step = |mu: f64| -> Vector4<f64> {
        let mut coeff = Vector4::zeros();
        for i in 0..4 {
            let d = lambda[i] + mu;
            if d > tiny {
                coeff[i] = -c[i] / d;
            }
        }
        eig.eigenvectors * coeff
    };

    let newton = step(0.0);
    let singular = lambda.iter().zip(c.iter()).any(|(l, ci)| *l <= tiny && ci.abs() > 0.0);
    if !singular && newton.norm() <= radius {
        return newton;
    }

    // ‖p(μ)‖ decreases monotonically in μ; at μ = ‖g‖/Δ it is at most Δ.
    let norm_at = |mu: f64| -> (f64, f64) {
        let mut s2 = 0.0;
        let mut s3 = 0.0;
        for i in 0..4 {
            let d = lambda[i] + mu;
            if d > 0.0 {
                s2 += c[i] * c[i] / (d * d);
                s3 += c[i] * c[i] / (d * d * d);
            }
        }
        (s2.sqrt(), s3)
    };
    let mut lo = 0.0;
    let mut hi = g.norm() / radius;
    let mut mu = hi;
    for _ in 0..100 {
        let (pn, s3) = norm_at(mu);
        if (pn - radius).abs() <= 1e-10 * radius {
            break;
        }
        if pn > radius {
            lo = mu;
        } else {
            hi = mu;
        }
        // Newton on 1/‖p‖ − 1/Δ, which is close to linear in μ.
        let phi = 1.0 / pn - 1.0 / radius;
        let dphi = s3 / (pn * pn * pn);
        let mut next = mu - phi / dphi;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == mu {
            break;
        }
        mu = next;
    }
    let p = step(mu);
    let n = p.norm();
    if n > radius {
        p * (radius / n)
    } else {
        p
    }
}

pub fn minimize<P: Residuals4>(
    problem: &mut P,
    x0: [f64; 4],
    cfg: &TrustRegionConfig,
    mut observer: impl FnMut(&IterateRecord),
) -> Outcome {
    let m = problem.residual_count();
    let mut r = vec![0.0; m];
    let mut jac = vec![[0.0; 4]; m];
    let mut trial_r = vec![0.0; m];

    let mut x = x0;
    problem.evaluate(&x, &mut r, Some(&mut jac));
    let mut f = sum_sq(&r);
    if !f.is_finite() {
        return Outcome {
            x,
            objective: f,
            iterations: 0,
            termination: Termination::NonFinite,
        };
    }
    let (mut g, mut h) = normal_equations(&r, &jac);
    let mut radius = cfg.initial_radius;
    let mut iterations = 0;

    let termination = loop {
        if g.amax() < cfg.gradient_tolerance {
            break Termination::Gradient;
        }
        if iterations >= cfg.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;

        let p = solve_subproblem(&h, &g, radius);
        let pn = p.norm();
        if !pn.is_finite() {
            break Termination::NonFinite;
        }
        if pn < cfg.step_tolerance {
            break Termination::Step;
        }
        let trial: [f64; 4] = std::array::from_fn(|i| x[i] + p[i]);
        problem.evaluate(&trial, &mut trial_r, None);
        let f_trial = sum_sq(&trial_r);

        let predicted = -(g.dot(&p) + 0.5 * p.dot(&(h * p)));
        let actual = f - f_trial;
        let ratio = if f_trial.is_finite() && predicted > 0.0 {
            actual / predicted
        } else {
            -1.0
        };

        if ratio < 0.25 {
            radius = 0.25 * pn;
        } else if ratio > 0.75 && pn >= 0.99 * radius {
            radius = (2.0 * radius).min(cfg.max_radius);
        }

        let accepted = ratio > ACCEPT_RATIO && f_trial <= f;
        if accepted {
            x = trial;
            problem.evaluate(&x, &mut r, Some(&mut jac));
            // Keep the residuals the acceptance test saw so f never rises.
            r.copy_from_slice(&trial_r);
            f = f_trial;
            let (g2, h2) = normal_equations(&r, &jac);
            g = g2;
            h = h2;
        }
        observer(&IterateRecord {
            iteration: iterations,
            x,
            objective: f,
            trial_objective: f_trial,
            accepted,
            radius,
        });
        if accepted && pn < cfg.step_tolerance * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            break Termination::Step;
        }
        if radius < cfg.step_tolerance {
            break Termination::Step;
        }
    };

    Outcome {
        x,
        objective: f,
        iterations,
        termination,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rosenbrock-like residuals plus two linear ones.
    struct Rosen;

    impl Residuals4 for Rosen {
        fn residual_count(&self) -> usize {
            4
        }

        fn evaluate(&mut self, x: &[f64; 4], r: &mut [f64], jac: Option<&mut [[f64; 4]]>) {
            r[0] = 10.0 * (x[1] - x[0] * x[0]);
            r[1] = 1.0 - x[0];
            r[2] = x[2] - 3.0;
            r[3] = 2.0 * (x[3] + 1.0);
            if let Some(j) = jac {
                j[0] = [-20.0 * x[0], 10.0, 0.0, 0.0];
                j[1] = [-1.0, 0.0, 0.0, 0.0];
                j[2] = [0.0, 0.0, 1.0, 0.0];
                j[3] = [0.0, 0.0, 0.0, 2.0];
            }
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let mut accepted_objectives = vec![];
        let out = minimize(&mut Rosen, [-1.2, 1.0, 0.0, 0.0], &TrustRegionConfig::default(), |it| {
            if it.accepted {
                accepted_objectives.push(it.objective);
            }
        });
        assert!(matches!(out.termination, Termination::Gradient | Termination::Step));
        for (a, b) in out.x.iter().zip([1.0, 1.0, 3.0, -1.0]) {
            assert!((a - b).abs() < 1e-8, "{:?}", out.x);
        }
        assert!(accepted_objectives.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn subproblem_respects_radius() {
        let h = Matrix4::from_diagonal(&Vector4::new(1.0, 2.0, 0.0, 4.0));
        let g = Vector4::new(1.0, 1.0, 1.0, 1.0);
        for radius in [1e-3, 0.1, 1.0, 10.0] {
            let p = solve_subproblem(&h, &g, radius);
            assert!(p.norm() <= radius * (1.0 + 1e-9));
            // Singular direction with nonzero gradient forces the boundary.
            assert!((p.norm() - radius).abs() < 1e-8 * radius);
            assert!(g.dot(&p) < 0.0);
        }
    }

    #[test]
    fn interior_newton_step() {
        let h = Matrix4::from_diagonal(&Vector4::new(2.0, 2.0, 2.0, 2.0));
        let g = Vector4::new(0.2, 0.0, -0.2, 0.0);
        let p = solve_subproblem(&h, &g, 10.0);
        assert!((p - Vector4::new(-0.1, 0.0, 0.1, 0.0)).norm() < 1e-15);
    }
}
