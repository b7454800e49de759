#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use image::GrayImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skinspec::commands;
use skinspec_core::forward::SkinModel;
use skinspec_core::spectral::{bundled, Spectrum, WavelengthGrid};
use skinspec_core::synthetic::{face_scene, SyntheticScene};

pub const WIDTH: usize = 24;
pub const HEIGHT: usize = 18;

/// A trained classifier and one decomposed synthetic face, built once per test binary.
pub struct Fixture {
    pub root: PathBuf,
    pub scene: SyntheticScene,
    pub cube: PathBuf,
    pub config: PathBuf,
    pub model: PathBuf,
    pub skin_png: PathBuf,
    pub decomposition: PathBuf,
}

pub fn setup() -> (SkinModel, Spectrum) {
    let g = WavelengthGrid::visible();
    (SkinModel::with_defaults(g).unwrap(), bundled::d65_on(&g).unwrap())
}

pub fn mask_png(mask: &[bool], w: usize, h: usize, path: &Path) {
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| image::Luma([if mask[y as usize * w + x as usize] { 255 } else { 0 }]));
    img.save(path).unwrap();
}

pub fn write_scene(model: &SkinModel, e: &Spectrum, w: usize, h: usize, seed: u64, path: &Path) -> SyntheticScene {
    let scene = face_scene(model, e, w, h, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    std::fs::write(path, scene.cube.to_bytes()).unwrap();
    scene
}

fn build(root: &Path) -> Fixture {
    if root.exists() {
        std::fs::remove_dir_all(root).unwrap();
    }
    std::fs::create_dir_all(root).unwrap();
    let (model, e) = setup();

    let train = write_scene(&model, &e, 32, 24, 11, &root.join("train.msc"));
    mask_png(&train.skin_mask, 32, 24, &root.join("train_mask.png"));
    std::fs::write(root.join("list.txt"), "train.msc train_mask.png\n").unwrap();
    let train_cfg = root.join("train_config.json");
    std::fs::write(&train_cfg, r#"{"optics":{},"fit":{},"render":{},"segment":{"max_epochs":40,"batch_size":64,"seed":3}}"#).unwrap();
    let model_path = root.join("model.bin");
    commands::segment_train(&root.join("list.txt"), Some(&train_cfg), &model_path).unwrap();

    let config = root.join("config.json");
    std::fs::write(&config, r#"{"optics":{},"fit":{},"render":{},"segment":{"model":"model.bin"}}"#).unwrap();
    let cube = root.join("scene.msc");
    let scene = write_scene(&model, &e, WIDTH, HEIGHT, 12, &cube);
    let skin_png = root.join("skin.png");
    mask_png(&scene.skin_mask, WIDTH, HEIGHT, &skin_png);

    let decomposition = root.join("decomposition");
    commands::decompose(&cube, &config, &decomposition).unwrap();
    Fixture {
        root: root.to_path_buf(),
        scene,
        cube,
        config,
        model: model_path,
        skin_png,
        decomposition,
    }
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let exe = std::env::current_exe().unwrap();
        let name = exe.file_stem().unwrap().to_string_lossy().into_owned();
        build(&Path::new(env!("CARGO_TARGET_TMPDIR")).join(name))
    })
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Every file in `dir`, sorted by name.
pub fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), read(&p)))
        .collect();
    files.sort();
    files
}
