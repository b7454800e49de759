//! One PASS/FAIL line per acceptance criterion. Exits nonzero if any fails.

mod common;

use std::collections::HashMap;
use std::time::Instant;

use axum::body::{to_bytes, Body};
use axum::http::Request;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skinspec::commands;
use skinspec::server::{router, AppState};
use skinspec::session::Decomposition;
use skinspec_core::editor::{apply_edit, recompose, EditScript};
use skinspec_core::fitter::{fit_image, fit_pixel, oracle_fit, FitOptions};
use skinspec_core::forward::*;
use skinspec_core::maps::ParameterMaps;
use skinspec_core::renderer::{build_pipeline, gamut_linear, luminance, CameraSensitivity};
use skinspec_core::segmenter::{accuracy, train, Network, TrainConfig};
use skinspec_core::spectral::Spectrum;
use skinspec_core::synthetic::{multiplicative_noise, random_params, separable_set, skin_vs_distractors};
use tower::ServiceExt;

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Outcome;

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn round_trip() -> Outcome {
    let (m, e) = common::setup();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let opts = FitOptions::default();
    let cases: Vec<(SkinParams, Spectrum)> = (0..1000)
        .map(|_| {
            let p = random_params(&mut rng);
            let l = m.radiance(&p, &e).unwrap();
            (p, l)
        })
        .collect();
    let start = Instant::now();
    let fits: Vec<_> = cases.iter().map(|(_, l)| fit_pixel(l, &e, &m, &opts).unwrap()).collect();
    let secs = start.elapsed().as_secs_f64();
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let recovered = cases
        .iter()
        .zip(&fits)
        .filter(|((p, _), f)| {
            (f.params.bio.f_mel - p.bio.f_mel).abs() <= 1e-3
                && (f.params.bio.f_blood - p.bio.f_blood).abs() <= 1e-3
                && rel(f.params.i_d, p.i_d) <= 1e-3
                && rel(f.params.i_s, p.i_s) <= 1e-3
        })
        .count();
    let mean_err = fits.iter().map(|f| f.relative_spectral_error).sum::<f64>() / fits.len() as f64;
    outcome(
        recovered >= 990 && mean_err < 1e-3 && secs < 60.0,
        format!("{recovered}/1000 recovered, mean relative spectral error {mean_err:.2e}, {secs:.2} s single-threaded"),
    )
}

fn noisy_fit() -> Outcome {
    let (m, e) = common::setup();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let opts = FitOptions::default();
    let errs: Vec<f64> = (0..1000)
        .map(|_| {
            let p = random_params(&mut rng);
            let l = multiplicative_noise(m.radiance(&p, &e).unwrap().values(), 0.01, &mut rng);
            fit_pixel(&Spectrum::new(*m.grid(), l).unwrap(), &e, &m, &opts).unwrap().relative_spectral_error
        })
        .collect();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    let mut detail = format!("mean relative spectral error {:.3}% over 1000 pixels at 1% noise", 100.0 * mean);
    let mut pass = mean <= 0.02;
    if let (Ok(cube), Ok(config)) = (std::env::var("SKINSPEC_REAL_CUBE"), std::env::var("SKINSPEC_REAL_CONFIG")) {
        let out = tempfile::tempdir().unwrap();
        match commands::decompose(cube.as_ref(), config.as_ref(), out.path()) {
            Ok(_) => {
                let report: serde_json::Value = serde_json::from_slice(&common::read(&out.path().join("report.json"))).unwrap();
                let real = report["mean_relative_spectral_error"].as_f64().unwrap();
                pass &= real <= 0.10;
                detail += &format!("; real data {:.2}% over skin pixels", 100.0 * real);
            }
            Err(e) => {
                pass = false;
                detail += &format!("; real data failed: {e}");
            }
        }
    } else {
        detail += "; no real cube supplied (SKINSPEC_REAL_CUBE, SKINSPEC_REAL_CONFIG)";
    }
    outcome(pass, detail)
}

fn oracle_dominance() -> Outcome {
    let (m, e) = common::setup();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let opts = FitOptions::default();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = random_params(&mut rng);
        let l = Spectrum::new(*m.grid(), multiplicative_noise(m.radiance(&p, &e).unwrap().values(), 0.01, &mut rng)).unwrap();
        let fit = fit_pixel(&l, &e, &m, &opts).unwrap();
        let oracle = oracle_fit(&l, &e, &m, 200).unwrap();
        worst = worst.max(fit.residual_norm / oracle.residual_norm);
    }
    outcome(worst <= 1.01, format!("worst fit/oracle residual ratio {worst:.10} over 100 pixels, density 200"))
}

fn jacobians() -> Outcome {
    let (m, e) = common::setup();
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let mut worst_jac: f64 = 0.0;
    for _ in 0..100 {
        let p = SkinParams {
            i_d: rng.random_range(0.2..2.0),
            i_s: rng.random_range(0.01..0.5),
            bio: BioParams {
                f_mel: rng.random_range(0.02..0.42),
                f_blood: rng.random_range(0.021..0.069),
            },
        };
        let jac = m.radiance_jacobian(&p, &e).unwrap();
        let x = [p.i_d, p.i_s, p.bio.f_mel, p.bio.f_blood];
        for j in 0..4 {
            let h = 1e-6 * x[j];
            let at = |d: f64| {
                let mut y = x;
                y[j] += d;
                let q = SkinParams {
                    i_d: y[0],
                    i_s: y[1],
                    bio: BioParams { f_mel: y[2], f_blood: y[3] },
                };
                m.radiance(&q, &e).unwrap().into_values()
            };
            let (up, down) = (at(h), at(-h));
            let fd: Vec<f64> = up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect();
            let a = jac.column(j);
            let num = a.iter().zip(&fd).map(|(a, f)| (a - f).powi(2)).sum::<f64>().sqrt();
            let den = fd.iter().map(|f| f * f).sum::<f64>().sqrt();
            worst_jac = worst_jac.max(num / den);
        }
    }

    let sizes = [6, 3, 3, 2];
    let mut worst_mlp: f64 = 0.0;
    for trial in 0..20 {
        let mut net = Network::he_init(&sizes, &mut rng).unwrap();
        for b in net.biases.iter_mut().flatten() {
            *b = rng.random_range(-0.2..0.2);
        }
        let xs: Vec<Vec<f64>> = (0..4).map(|_| (0..6).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<usize> = (0..4).map(|i| (i + trial) % 2).collect();
        let (_, g) = net.loss_and_gradient(&xs, &ys);
        let p0 = net.parameters();
        for k in 0..p0.len() {
            let h = 1e-6;
            let mut p = p0.clone();
            p[k] += h;
            net.set_parameters(&p);
            let up = net.loss(&xs, &ys);
            p[k] -= 2.0 * h;
            net.set_parameters(&p);
            let down = net.loss(&xs, &ys);
            net.set_parameters(&p0);
            let fd = (up - down) / (2.0 * h);
            worst_mlp = worst_mlp.max((g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-7));
        }
    }
    outcome(
        worst_jac < 1e-5 && worst_mlp < 1e-4,
        format!("radiance Jacobian worst relative error {worst_jac:.2e}; MLP gradient worst {worst_mlp:.2e}"),
    )
}

fn invariants() -> Outcome {
    let m = SkinModel::with_defaults(*common::setup().0.grid()).unwrap();
    let n = 50;
    let mut bounded = true;
    let mut monotone = true;
    let mut r = vec![0.0; 31];
    let mut prev = vec![0.0; 31];
    for j in 0..n {
        let f_blood = F_BLOOD_MIN + (F_BLOOD_MAX - F_BLOOD_MIN) * j as f64 / (n - 1) as f64;
        for i in 0..n {
            let f_mel = F_MEL_MIN + (F_MEL_MAX - F_MEL_MIN) * i as f64 / (n - 1) as f64;
            m.reflectance_into(&BioParams { f_mel, f_blood }, &mut r);
            bounded &= r.iter().all(|v| *v > 0.0 && *v <= 1.0);
            if i > 0 {
                monotone &= r.iter().zip(&prev).all(|(a, b)| a <= b);
            }
            prev.copy_from_slice(&r);
        }
    }
    let c = OpticsConstants::default();
    let t = ChromophoreTables::bundled();
    let (a560, a650) = (blood_absorption(560.0, &c, &t).unwrap(), blood_absorption(650.0, &c, &t).unwrap());
    let km = kubelka_munk_reflectance(0.0, 10.0).unwrap();
    outcome(
        bounded && monotone && a560 > a650 && km == 1.0,
        format!("R in (0,1]: {bounded}; non-increasing in f_mel: {monotone}; mu_a,blood 560 {a560:.3} > 650 {a650:.3}; KM(K=0) = {km}"),
    )
}

fn rendering() -> Outcome {
    let (m, e) = common::setup();
    let p = build_pipeline(&CameraSensitivity::cie_1931(m.grid()).unwrap(), &e).unwrap();
    let mut spread: f64 = 0.0;
    for rho in [0.05, 0.2, 0.5, 0.9, 1.0] {
        let l: Vec<f64> = e.values().iter().map(|v| rho * v).collect();
        for v in [p.linear_values(&l), p.render_values(&l)] {
            let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
            spread = spread.max(hi - lo);
        }
    }
    let g = p.encode([0.5; 3])[0];
    let gamma_ok = (g - 0.5f64.powf(1.0 / 2.4)).abs() < 1e-12 && (g - 0.7490).abs() < 5e-4;
    let (cols, rows) = (64, 16);
    let lum: Vec<f64> = gamut_linear(&m, &p, cols, rows).unwrap().into_iter().map(luminance).collect();
    let swatch_ok = (0..rows).all(|j| (1..cols).all(|i| lum[j * cols + i] <= lum[j * cols + i - 1]));
    outcome(
        spread < 1e-6 && gamma_ok && swatch_ok,
        format!("flat-reflectance channel spread {spread:.2e}; 0.5 encodes to {g:.6}; swatch luminance non-increasing along melanin: {swatch_ok}"),
    )
}

fn segmentation() -> Outcome {
    let separable = separable_set(300, 35, &mut ChaCha8Rng::seed_from_u64(0));
    let sep = train(&separable, &TrainConfig::default()).unwrap();
    let sep_acc = accuracy(&sep.model, &separable).unwrap();

    let (m, e) = common::setup();
    let train_set = skin_vs_distractors(&m, &e, 500, 0.01, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let test_set = skin_vs_distractors(&m, &e, 500, 0.01, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let cfg = TrainConfig {
        seed: 7,
        ..TrainConfig::default()
    };
    let a = train(&train_set, &cfg).unwrap();
    let held_out = accuracy(&a.model, &test_set).unwrap();
    let b = train(&train_set, &cfg).unwrap();
    let deterministic = a.model.to_bytes() == b.model.to_bytes();
    outcome(
        sep_acc >= 0.99 && held_out >= 0.95 && deterministic,
        format!(
            "separable training accuracy {:.2}%; held-out skin vs distractors {:.2}%; retrain identical: {deterministic}",
            100.0 * sep_acc,
            100.0 * held_out
        ),
    )
}

fn mean_skin_luminance(d: &Decomposition, maps: &ParameterMaps) -> f64 {
    let cube = recompose(maps, &d.env.illuminant, &d.env.model, &d.cube).unwrap();
    let p = d.maps.skin_probability.as_ref().unwrap();
    let (mut sum, mut n) = (0.0, 0usize);
    for i in (0..cube.pixel_count()).filter(|&i| p[i] >= 0.5) {
        let l: Vec<f64> = cube.pixel(i).iter().map(|v| *v as f64).collect();
        sum += luminance(d.env.pipeline.linear_values(&l));
        n += 1;
    }
    sum / n as f64
}

fn editing() -> Outcome {
    let f = common::fixture();
    let d = Decomposition::load(&f.decomposition).unwrap();
    let none = HashMap::new();
    let script = |s: &str| EditScript::from_json(s).unwrap();

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.json"), "[]").unwrap();
    commands::edit(&f.decomposition, &dir.path().join("empty.json"), &dir.path().join("e.png")).unwrap();
    commands::render(&f.decomposition, None, &dir.path().join("r.png")).unwrap();
    let identity = common::read(&dir.path().join("e.png")) == common::read(&dir.path().join("r.png"))
        && d.edit_render_png(&EditScript::default(), &none).unwrap() == d.render_png().unwrap();

    let lighter = apply_edit(&d.maps, &script(r#"[{"target":"f_mel","kind":"scale","value":0.75}]"#), &none).unwrap();
    let (before, after) = (mean_skin_luminance(&d, &d.maps), mean_skin_luminance(&d, &lighter));

    let matte = apply_edit(&d.maps, &script(r#"[{"target":"i_s","kind":"set_constant","value":0}]"#), &none).unwrap();
    let base = recompose(&d.maps, &d.env.illuminant, &d.env.model, &d.cube).unwrap();
    let edited = recompose(&matte, &d.env.illuminant, &d.env.model, &d.cube).unwrap();
    let p = d.maps.skin_probability.as_ref().unwrap();
    let mut increases = 0;
    let mut checked = 0;
    for i in (0..base.pixel_count()).filter(|&i| p[i] >= 0.5) {
        let px = |c: &skinspec_core::cube::MultispectralCube| -> Vec<f64> { c.pixel(i).iter().map(|v| *v as f64).collect() };
        let (a, b) = (d.env.pipeline.linear_values(&px(&base)), d.env.pipeline.linear_values(&px(&edited)));
        increases += (0..3).filter(|&c| b[c] > a[c]).count();
        checked += 1;
    }
    outcome(
        identity && after > before && increases == 0 && checked > 0,
        format!(
            "empty script identical PNG: {identity}; skin luminance {before:.5} -> {after:.5} after f_mel x0.75; \
             specular removal raised {increases} linear channels over {checked} skin pixels"
        ),
    )
}

fn determinism() -> Outcome {
    let f = common::fixture();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    commands::decompose(&f.cube, &f.config, a.path()).unwrap();
    commands::decompose(&f.cube, &f.config, b.path()).unwrap();
    let reruns = common::dir_contents(a.path()) == common::dir_contents(b.path());

    let d = Decomposition::load(&f.decomposition).unwrap();
    let opts = |w| FitOptions { workers: Some(w), ..d.config.fit.options() };
    let one = fit_image(&d.cube, &d.env.illuminant, &d.env.model, &opts(1)).unwrap();
    let many = fit_image(&d.cube, &d.env.illuminant, &d.env.model, &opts(8)).unwrap();
    let workers = one == many;

    let script = r#"[{"target":"f_mel","kind":"scale","value":0.75},{"target":"f_blood","kind":"median_filter","window":3}]"#;
    std::fs::write(a.path().join("s.json"), script).unwrap();
    commands::edit(&f.decomposition, &a.path().join("s.json"), &a.path().join("cli.png")).unwrap();
    let cli_png = common::read(&a.path().join("cli.png"));
    let http_png = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap().block_on(async {
        let app = router(AppState::new(4));
        let open = serde_json::json!({ "dir": f.decomposition }).to_string();
        let resp = app.clone().oneshot(Request::post("/sessions").header("content-type", "application/json").body(Body::from(open)).unwrap()).await.unwrap();
        let id: serde_json::Value = serde_json::from_slice(&to_bytes(resp.into_body(), usize::MAX).await.unwrap()).unwrap();
        let uri = format!("/sessions/{}/edit", id["id"].as_str().unwrap());
        let resp = app.oneshot(Request::post(uri).body(Body::from(script)).unwrap()).await.unwrap();
        to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec()
    });
    let parity = cli_png == http_png;
    outcome(
        reruns && workers && parity,
        format!("decompose reruns identical: {reruns}; 1 vs 8 workers identical: {workers}; CLI vs HTTP edit PNG identical: {parity}"),
    )
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("synthetic round-trip", round_trip),
        ("noisy-fit error", noisy_fit),
        ("oracle dominance", oracle_dominance),
        ("jacobian correctness", jacobians),
        ("physical invariants", invariants),
        ("rendering", rendering),
        ("segmentation", segmentation),
        ("editing semantics", editing),
        ("determinism and parity", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
