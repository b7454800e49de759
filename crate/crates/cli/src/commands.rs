use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use skinspec_core::editor::EditScript;
use skinspec_core::envi::{to_cube, EnviHeader};
use skinspec_core::fitter::fit_image;
use skinspec_core::maps::{FitStatus, ParameterMaps};
use skinspec_core::renderer::{encode_png, gamut_swatch, render_image};
use skinspec_core::segmenter::{accuracy, labelled_from_mask, predict_map, train, MlpModel};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::session::{self, Decomposition, Environment, CONFIG_FILE, CUBE_FILE, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "skinspec", version, about = "Multispectral skin decomposition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit per-pixel parameters and write a decomposition directory.
    Decompose {
        cube: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply an edit script to a decomposition and render the result.
    Edit {
        dir: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a cube file, or the reconstruction stored in a decomposition directory.
    Render {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Used for cube files; directories carry their own config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    #[command(subcommand)]
    Segment(SegmentCommand),
    /// Render the skin colour gamut over the parameter box.
    Swatch {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Serve decompositions over HTTP.
    Serve(ServeArgs),
    /// Convert an ENVI header and raw image to an MSC cube.
    ConvertEnvi {
        header: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SegmentCommand {
    /// Train a skin classifier from cubes with label masks.
    Train {
        /// Text file with one `cube.msc mask.png` pair per line.
        #[arg(long = "data")]
        list: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add a skin probability map to a decomposition directory.
    Apply {
        dir: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Decomposition directories to open at startup.
    #[arg(long = "session")]
    pub sessions: Vec<PathBuf>,
    #[arg(long, default_value_t = crate::server::DEFAULT_MAX_SESSIONS)]
    pub max_sessions: usize,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Decompose { cube, config, out } => decompose(&cube, &config, &out).map(|_| ()),
        Command::Edit { dir, script, out } => edit(&dir, &script, &out),
        Command::Render { input, out, config } => render(&input, config.as_deref(), &out),
        Command::Segment(SegmentCommand::Train { list, config, out }) => segment_train(&list, config.as_deref(), &out),
        Command::Segment(SegmentCommand::Apply { dir, model }) => segment_apply(&dir, &model),
        Command::Swatch { out, config, resolution } => swatch(config.as_deref(), resolution, &out),
        Command::Serve(args) => crate::server::serve(args),
        Command::ConvertEnvi { header, data, out, config } => convert_envi(&header, &data, config.as_deref(), &out),
    }
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn load_config(path: Option<&Path>) -> CliResult<Config> {
    path.map_or_else(|| Ok(Config::default()), Config::load)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct InputRecord {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    config: InputRecord,
    cube: InputRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    illuminant: Option<InputRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    camera: Option<InputRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<InputRecord>,
    multistart_seeds: Vec<[f64; 2]>,
    segment_seed: u64,
    workers: Option<usize>,
}

fn record(path: &Path, bytes: &[u8]) -> InputRecord {
    InputRecord {
        file: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        sha256: sha256_hex(bytes),
    }
}

/// Copies a referenced file into `out` under `name` and points the config at the copy.
fn localize(slot: &mut Option<PathBuf>, out: &Path, name: &str) -> CliResult<Option<InputRecord>> {
    let Some(src) = slot.as_ref() else {
        return Ok(None);
    };
    let bytes = read(src)?;
    write(&out.join(name), &bytes)?;
    let rec = record(src, &bytes);
    *slot = Some(PathBuf::from(name));
    Ok(Some(rec))
}

/// Runs the full pipeline. Outputs are written even when most pixels fail so
/// the maps can be inspected; the error is returned afterwards.
pub fn decompose(cube_path: &Path, config_path: &Path, out: &Path) -> CliResult<ParameterMaps> {
    let cfg = Config::load(config_path)?;
    let config_bytes = read(config_path)?;
    let env = Environment::new(&cfg)?;
    let cube_bytes = read(cube_path)?;
    let cube = env.load_cube(cube_path)?;
    let classifier = match &cfg.segment.model {
        Some(p) => Some(MlpModel::from_bytes(&read(p)?).map_err(|e| CliError::input(&p.display().to_string(), e))?),
        None => None,
    };

    log::info!("fitting {}×{} pixels", cube.width(), cube.height());
    let mut maps = fit_image(&cube, &env.illuminant, &env.model, &cfg.fit.options())?;
    // Classify the maps as stored so later `segment apply` runs agree bitwise.
    session::round_to_stored(&mut maps);
    if let Some(m) = &classifier {
        maps.skin_probability = Some(predict_map(m, &cube, &maps)?);
    }

    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut local = cfg.clone();
    let illuminant = localize(&mut local.illuminant, out, "illuminant.csv")?;
    let camera = localize(&mut local.render.camera, out, "camera.csv")?;
    let model = localize(&mut local.segment.model, out, "model.bin")?;
    write(&out.join(CONFIG_FILE), local.to_json().as_bytes())?;
    write(&out.join(CUBE_FILE), &cube.to_bytes())?;
    session::write_maps(out, &maps)?;
    let manifest = Manifest {
        tool: "skinspec",
        version: env!("CARGO_PKG_VERSION"),
        core_version: skinspec_core::VERSION,
        config: record(config_path, &config_bytes),
        cube: record(cube_path, &cube_bytes),
        illuminant,
        camera,
        model,
        multistart_seeds: cfg.fit.multistart_seeds.clone(),
        segment_seed: cfg.segment.seed,
        workers: cfg.fit.workers,
    };
    let manifest = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(&out.join(MANIFEST_FILE), manifest.as_bytes())?;

    check_failures(&maps)?;
    Ok(maps)
}

/// Numeric failure when more than half of the pixels failed to fit.
pub fn check_failures(maps: &ParameterMaps) -> CliResult<()> {
    let failed = maps.status.iter().filter(|s| **s == FitStatus::Failed).count();
    if 2 * failed > maps.pixel_count() {
        return Err(CliError::Numeric(format!("{failed} of {} pixels failed to fit", maps.pixel_count())));
    }
    Ok(())
}

pub fn edit(dir: &Path, script_path: &Path, out: &Path) -> CliResult<()> {
    let d = Decomposition::load(dir)?;
    let text = std::fs::read_to_string(script_path).map_err(|e| CliError::io(script_path, e))?;
    let script = EditScript::from_json(&text)?;
    let masks = session::load_mask_files(&script, script_path.parent().unwrap_or(Path::new(".")))?;
    write(out, &d.edit_render_png(&script, &masks)?)
}

pub fn render(input: &Path, config: Option<&Path>, out: &Path) -> CliResult<()> {
    let png = if input.is_dir() {
        Decomposition::load(input)?.render_png()?
    } else {
        let env = Environment::new(&load_config(config)?)?;
        let cube = env.load_cube(input)?;
        encode_png(&render_image(&env.pipeline, &cube)?)?
    };
    write(out, &png)
}

fn parse_training_list(path: &Path) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut pairs = vec![];
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [cube, mask] = fields[..] else {
            return Err(CliError::Parse(format!(
                "{}:{}: expected `cube mask`, got {line:?}",
                path.display(),
                n + 1
            )));
        };
        pairs.push((base.join(cube), base.join(mask)));
    }
    if pairs.is_empty() {
        return Err(CliError::Parse(format!("{}: no training pairs", path.display())));
    }
    Ok(pairs)
}

pub fn segment_train(list: &Path, config: Option<&Path>, out: &Path) -> CliResult<()> {
    let cfg = load_config(config)?;
    let env = Environment::new(&cfg)?;
    let mut data = vec![];
    for (cube_path, mask_path) in parse_training_list(list)? {
        let cube = env.load_cube(&cube_path)?;
        let mask = image::load_from_memory(&read(&mask_path)?)
            .map_err(|e| CliError::Parse(format!("{}: {e}", mask_path.display())))?
            .to_luma8();
        let maps = fit_image(&cube, &env.illuminant, &env.model, &cfg.fit.options())?;
        let pixels = labelled_from_mask(&cube, &maps, &mask)?;
        log::info!("{}: {} labelled pixels", cube_path.display(), pixels.len());
        data.extend(pixels);
    }
    let outcome = train(&data, &cfg.segment.train_config())?;
    log::info!(
        "trained {} epochs (kept {}), training accuracy {:.4}",
        outcome.train_loss.len(),
        outcome.best_epoch,
        accuracy(&outcome.model, &data)?
    );
    write(out, &outcome.model.to_bytes())
}

pub fn segment_apply(dir: &Path, model_path: &Path) -> CliResult<()> {
    let mut d = Decomposition::load(dir)?;
    let model = MlpModel::from_bytes(&read(model_path)?).map_err(|e| CliError::input(&model_path.display().to_string(), e))?;
    d.apply_model(&model)
}

pub fn swatch(config: Option<&Path>, resolution: Option<usize>, out: &Path) -> CliResult<()> {
    let cfg = load_config(config)?;
    let env = Environment::new(&cfg)?;
    let n = resolution.unwrap_or(cfg.render.swatch_resolution);
    if n < 2 {
        return Err(CliError::Config("swatch resolution must be at least 2".into()));
    }
    write(out, &encode_png(&gamut_swatch(&env.model, &env.pipeline, n, n)?)?)
}

pub fn convert_envi(header: &Path, data: &Path, config: Option<&Path>, out: &Path) -> CliResult<()> {
    let grid = load_config(config)?.grid();
    let text = std::fs::read_to_string(header).map_err(|e| CliError::io(header, e))?;
    let hdr = EnviHeader::parse(&text).map_err(|e| CliError::input(&header.display().to_string(), e))?;
    let cube = to_cube(&hdr, &read(data)?, &grid).map_err(|e| CliError::input(&data.display().to_string(), e))?;
    write(out, &cube.to_bytes())
}
