//! `lfvs`: prepare data, train, synthesize and evaluate.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use lfvs::checkpoint::Checkpoint;
use lfvs::evaluation::{ablation_grid, evaluate, export_qualitative, AblationEntry, CropBox};
use lfvs::geometry::{AngularGrid, AngularPos};
use lfvs::image_io::{write_pfm, write_png};
use lfvs::lf_data::{
    discover_scenes, generate_synthetic, load_corners, load_lightfield, read_manifest,
    split_dataset, write_lightfield, write_manifest, DatasetSpec, DiskScenes, Layout,
    SceneSource, SyntheticConfig,
};
use lfvs::networks::synthesize_from_corners;
use lfvs::training::{train, TrainConfig, Trainer};
use lfvs::Error;

const DATA_ROOT_ENV: &str = "LFVS_DATA_ROOT";
const DATASET_FILE: &str = "dataset.toml";

#[derive(Parser)]
#[command(name = "lfvs", version, about = "Light-field view synthesis from four corner views")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes, or validate a dataset and write split manifests.
    Prepare(PrepareArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Render views of one scene from its four corner views.
    Synthesize(SynthesizeArgs),
    /// Score a checkpoint, run an ablation grid, or export qualitative images.
    Evaluate(EvaluateArgs),
}

/// How to read a dataset directory. Values in `<data>/dataset.toml` are used
/// when the flags are absent.
#[derive(Args, Clone, Default)]
struct LayoutArgs {
    /// `per-view` (one directory of view_<v>_<u>.png per scene) or `packed`.
    #[arg(long)]
    layout: Option<String>,
    /// Angular extent on disk, e.g. 14x14.
    #[arg(long)]
    capture: Option<String>,
    /// Central angular sub-grid to keep, e.g. 7x7.
    #[arg(long)]
    central_crop: Option<String>,
}

#[derive(Args)]
struct PrepareArgs {
    /// Synthetic scene spec (TOML).
    #[arg(long, conflicts_with = "dataset")]
    synthetic: Option<PathBuf>,
    /// Number of synthetic scenes.
    #[arg(long, requires = "synthetic")]
    count: Option<usize>,
    /// Existing dataset to validate and split.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Scenes held out for testing.
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: `splits` for --dataset).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    layout: LayoutArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Dataset root (default: $LFVS_DATA_ROOT).
    #[arg(long, env = DATA_ROOT_ENV)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint to continue from (`run/latest` or `run/latest.ckpt`).
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Scene list to train on (default: <data>/train.txt if present, else all scenes).
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Validation dataset; enables best.ckpt.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    crop_size: Option<usize>,
    #[command(flatten)]
    layout: LayoutArgs,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Scene directory (per-view layout) or packed PNG.
    #[arg(long)]
    scene: PathBuf,
    /// Target as U,V (column, row) in the central grid.
    #[arg(long, conflicts_with = "all_interior", required_unless_present = "all_interior")]
    target: Vec<String>,
    /// Every non-corner position.
    #[arg(long)]
    all_interior: bool,
    #[arg(long)]
    out: PathBuf,
    /// Also write D_L, D_R, D_B as single-channel PFM files.
    #[arg(long)]
    dump_disparity: bool,
    /// Also write the three warped views.
    #[arg(long)]
    dump_warped: bool,
    #[command(flatten)]
    layout: LayoutArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint (`best`, `run/best`, or a path).
    #[arg(long, required_unless_present = "ablate")]
    ckpt: Option<PathBuf>,
    /// Dataset root (default: $LFVS_DATA_ROOT).
    #[arg(long, env = DATA_ROOT_ENV)]
    data: PathBuf,
    /// Scene list (default: <data>/test.txt if present, else all scenes).
    #[arg(long)]
    scenes: Option<PathBuf>,
    #[arg(long, default_value = "eval")]
    out: PathBuf,
    /// Ablation grid file (TOML with [[entry]] tables).
    #[arg(long, conflicts_with = "qualitative")]
    ablate: Option<PathBuf>,
    /// Export qualitative images for `scene:<ID>`.
    #[arg(long)]
    qualitative: Option<String>,
    /// Zoom box x0,y0,x1,y1 (normalized, origin bottom-left); repeatable.
    #[arg(long, requires = "qualitative")]
    crop: Vec<String>,
    /// Targets U,V for --qualitative (default: grid centre).
    #[arg(long, requires = "qualitative")]
    target: Vec<String>,
    #[command(flatten)]
    layout: LayoutArgs,
}

/// Reproducibility record written next to every command's outputs.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    args: Vec<String>,
    config_path: Option<PathBuf>,
    /// Configuration after applying flags over the file over defaults.
    resolved_config: serde_json::Value,
    seed: Option<u64>,
    checkpoints: Vec<PathBuf>,
    output_dir: PathBuf,
    tool_version: String,
}

impl RunManifest {
    fn new(command: &str, out: &Path) -> Self {
        RunManifest {
            command: command.into(),
            args: std::env::args().collect(),
            config_path: None,
            resolved_config: serde_json::Value::Null,
            seed: None,
            checkpoints: Vec::new(),
            output_dir: out.to_path_buf(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    fn write(&self) -> Result<(), CliError> {
        let path = self.output_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e).into())
    }
}

/// `dataset.toml`: how a dataset directory is laid out.
#[derive(Serialize, Deserialize)]
struct DatasetInfo {
    layout: Layout,
    capture: [usize; 2],
    central_crop: [usize; 2],
}

enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(Error::NonFiniteLoss { .. }) => 3,
            CliError::Core(e) if e.is_data_error() => 2,
            CliError::Core(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a),
        Command::Synthesize(a) => cmd_synthesize(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn parse_grid(s: &str) -> Result<AngularGrid, CliError> {
    let parts: Vec<&str> = s.split(['x', 'X', ',']).collect();
    match parts[..] {
        [a, b] => match (a.trim().parse(), b.trim().parse()) {
            (Ok(n_v), Ok(n_u)) => Ok(AngularGrid::new(n_v, n_u)),
            _ => Err(usage(format!("angular grid '{s}' is not <rows>x<cols>"))),
        },
        _ => Err(usage(format!("angular grid '{s}' is not <rows>x<cols>"))),
    }
}

/// Parse `U,V` into a grid position.
fn parse_target(s: &str) -> Result<AngularPos, CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts[..] {
        [u, v] => match (u.trim().parse(), v.trim().parse()) {
            (Ok(u), Ok(v)) => Ok(AngularPos::new(v, u)),
            _ => Err(usage(format!("target '{s}' is not U,V"))),
        },
        _ => Err(usage(format!("target '{s}' is not U,V"))),
    }
}

fn parse_layout(s: &str) -> Result<Layout, CliError> {
    match s {
        "per-view" => Ok(Layout::PerView),
        "packed" => Ok(Layout::Packed),
        _ => Err(usage(format!("unknown layout '{s}' (per-view or packed)"))),
    }
}

/// Resolve the dataset description: flags, then `dataset.toml`, then a
/// per-view 7x7 default.
fn dataset_spec(root: &Path, args: &LayoutArgs) -> Result<DatasetSpec, CliError> {
    let info_path = root.join(DATASET_FILE);
    let info: Option<DatasetInfo> = if info_path.is_file() {
        let text = std::fs::read_to_string(&info_path).map_err(|e| Error::io(&info_path, e))?;
        Some(
            toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", info_path.display())))?,
        )
    } else {
        None
    };
    let layout = match (&args.layout, &info) {
        (Some(l), _) => parse_layout(l)?,
        (None, Some(i)) => i.layout.clone(),
        (None, None) => Layout::PerView,
    };
    let capture = match (&args.capture, &info) {
        (Some(c), _) => parse_grid(c)?,
        (None, Some(i)) => AngularGrid::new(i.capture[0], i.capture[1]),
        (None, None) => AngularGrid::new(7, 7),
    };
    let central_crop = match (&args.central_crop, &info) {
        (Some(c), _) => parse_grid(c)?,
        (None, Some(i)) if args.capture.is_none() => AngularGrid::new(i.central_crop[0], i.central_crop[1]),
        _ => AngularGrid::new(capture.n_v.min(7), capture.n_u.min(7)),
    };
    let spec = DatasetSpec {
        root: root.to_path_buf(),
        layout,
        capture,
        central_crop,
    };
    spec.validate()?;
    Ok(spec)
}

fn write_dataset_info(spec: &DatasetSpec, dir: &Path) -> Result<(), CliError> {
    let info = DatasetInfo {
        layout: spec.layout.clone(),
        capture: [spec.capture.n_v, spec.capture.n_u],
        central_crop: [spec.central_crop.n_v, spec.central_crop.n_u],
    };
    let path = dir.join(DATASET_FILE);
    let text = toml::to_string(&info).expect("dataset info serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e).into())
}

/// Scene ids: an explicit list, else `<data>/<default_list>` if present,
/// else every scene found.
fn scene_ids(spec: &DatasetSpec, list: Option<&Path>, default_list: &str) -> Result<Vec<String>, CliError> {
    let fallback = spec.root.join(default_list);
    let ids = match list {
        Some(p) => read_manifest(p)?,
        None if fallback.is_file() => read_manifest(&fallback)?,
        None => discover_scenes(spec)?,
    };
    if ids.is_empty() {
        return Err(no_scenes(&spec.root));
    }
    Ok(ids)
}

fn no_scenes(root: &Path) -> CliError {
    let e = std::io::Error::new(std::io::ErrorKind::NotFound, "no scenes found");
    Error::io(root, e).into()
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

fn cmd_prepare(a: PrepareArgs) -> Result<(), CliError> {
    match (&a.synthetic, &a.dataset) {
        (Some(spec_path), None) => {
            let out = a.out.clone().ok_or_else(|| usage("--synthetic needs --out"))?;
            let count = a.count.ok_or_else(|| usage("--synthetic needs --count"))?;
            let mut cfg = SyntheticConfig::load(spec_path)?;
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            create_dir(&out)?;
            let mut ids = Vec::with_capacity(count);
            for i in 0..count {
                let scene = generate_synthetic(&cfg.scene_spec(i))?;
                let id = format!("scene_{i:04}");
                let dir = out.join(&id);
                write_lightfield(&scene.lf, &dir)?;
                let grid = scene.lf.grid();
                for v in 0..grid.n_v {
                    for u in 0..grid.n_u {
                        let p = AngularPos::new(v, u);
                        write_pfm(scene.disparity_at(p), &dir.join(format!("disparity_{v}_{u}.pfm")))?;
                    }
                }
                ids.push(id);
            }
            let grid = cfg.grid();
            write_dataset_info(&DatasetSpec::per_view(&out, grid), &out)?;
            write_manifest(&ids, &out.join("scenes.txt"))?;
            if let Some(test) = a.test {
                let split = split_dataset(&ids, test, a.seed.unwrap_or(cfg.seed))?;
                write_manifest(&split.train, &out.join("train.txt"))?;
                write_manifest(&split.test, &out.join("test.txt"))?;
            }
            let mut m = RunManifest::new("prepare", &out);
            m.config_path = Some(spec_path.clone());
            m.resolved_config = serde_json::to_value(&cfg).expect("config serializes");
            m.seed = Some(cfg.seed);
            m.write()?;
            println!("wrote {count} synthetic scenes to {}", out.display());
            Ok(())
        }
        (None, Some(root)) => {
            let out = a.out.clone().unwrap_or_else(|| PathBuf::from("splits"));
            let spec = dataset_spec(root, &a.layout)?;
            let ids = discover_scenes(&spec)?;
            if ids.is_empty() {
                return Err(no_scenes(root));
            }
            // Validate every scene; the first failure names the offending path.
            for id in &ids {
                load_lightfield(&spec, id)?;
            }
            create_dir(&out)?;
            let seed = a.seed.unwrap_or(0);
            let split = split_dataset(&ids, a.test.unwrap_or(0), seed)?;
            write_manifest(&split.train, &out.join("train.txt"))?;
            write_manifest(&split.test, &out.join("test.txt"))?;
            write_dataset_info(&spec, &out)?;
            let mut m = RunManifest::new("prepare", &out);
            m.resolved_config = serde_json::to_value(&spec).expect("spec serializes");
            m.seed = Some(seed);
            m.write()?;
            println!(
                "{} scenes valid; {} train / {} test written to {}",
                ids.len(),
                split.train.len(),
                split.test.len(),
                out.display()
            );
            Ok(())
        }
        _ => Err(usage("prepare needs exactly one of --synthetic or --dataset")),
    }
}

/// Accept `dir/name`, `dir/name.ckpt`, or a directory holding `best.ckpt`.
fn resolve_checkpoint(path: &Path) -> PathBuf {
    if path.is_file() {
        return path.to_path_buf();
    }
    let with_ext = path.with_extension("ckpt");
    if with_ext.is_file() {
        return with_ext;
    }
    if path.is_dir() {
        for name in ["best.ckpt", "latest.ckpt"] {
            if path.join(name).is_file() {
                return path.join(name);
            }
        }
    }
    path.to_path_buf()
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = TrainConfig::load(&a.config)?;
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.steps {
        cfg.steps = Some(v);
    }
    if let Some(v) = a.epochs {
        cfg.epochs = Some(v);
        if a.steps.is_none() {
            cfg.steps = None;
        }
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.crop_size {
        cfg.crop_size = v;
    }
    cfg.validate()?;

    let spec = dataset_spec(&a.data, &a.layout)?;
    let ids = scene_ids(&spec, a.scenes.as_deref(), "train.txt")?;
    let source = DiskScenes { spec, ids };
    let val = match &a.val {
        Some(root) => {
            let spec = dataset_spec(root, &a.layout)?;
            let ids = scene_ids(&spec, None, "test.txt")?;
            Some(DiskScenes { spec, ids })
        }
        None => None,
    };
    let mut trainer = match &a.resume {
        Some(p) => {
            let p = resolve_checkpoint(p);
            Trainer::resume(cfg.clone(), Checkpoint::load(&p)?)?
        }
        None => Trainer::new(cfg.clone())?,
    };
    create_dir(&a.out)?;
    let mut m = RunManifest::new("train", &a.out);
    m.config_path = Some(a.config.clone());
    m.resolved_config = serde_json::to_value(&cfg).expect("config serializes");
    m.seed = Some(cfg.seed);
    if let Some(r) = &a.resume {
        m.checkpoints.push(resolve_checkpoint(r));
    }
    m.write()?;

    let total = cfg.total_steps(source.len())?;
    let start = trainer.step;
    let mut report = |l: &lfvs::training::StepLog| {
        if l.step == start + 1 || l.step % 50 == 0 || l.step == total {
            println!(
                "step {:>7}/{total}  loss {:.5}  (final {:.5}, warp {:.5})",
                l.step, l.total, l.final_term, l.warp_term
            );
        }
    };
    let out = train(
        &mut trainer,
        &source,
        val.as_ref().map(|v| v as &dyn SceneSource),
        &a.out,
        &mut report,
    )?;
    m.checkpoints.push(out.latest.clone());
    if let Some(b) = &out.best {
        m.checkpoints.push(b.clone());
    }
    m.write()?;
    println!("finished at step {} in {:.0}s; latest checkpoint {}", out.final_step, out.seconds, out.latest.display());
    Ok(())
}

fn scene_location(scene: &Path, layout: &LayoutArgs) -> Result<(DatasetSpec, String), CliError> {
    let parent = scene.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = scene
        .file_name()
        .ok_or_else(|| usage(format!("bad scene path {}", scene.display())))?
        .to_string_lossy()
        .into_owned();
    let packed = scene.extension().is_some_and(|e| e == "png");
    let mut layout = layout.clone();
    if packed && layout.layout.is_none() {
        layout.layout = Some("packed".into());
    }
    let spec = dataset_spec(parent, &layout)?;
    let id = match spec.layout {
        Layout::Packed => name.trim_end_matches(".png").to_string(),
        Layout::PerView => name,
    };
    Ok((spec, id))
}

fn cmd_synthesize(a: SynthesizeArgs) -> Result<(), CliError> {
    let ckpt_path = resolve_checkpoint(&a.ckpt);
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let (spec, id) = scene_location(&a.scene, &a.layout)?;
    let corners = load_corners(&spec, &id)?;
    let grid = corners.grid;
    let targets: Vec<AngularPos> = if a.all_interior {
        grid.interior_positions()
    } else {
        a.target.iter().map(|t| parse_target(t)).collect::<Result<_, _>>()?
    };
    for t in &targets {
        if !grid.contains(*t) {
            return Err(usage(format!("target u={}, v={} outside the {}x{} grid", t.u, t.v, grid.n_v, grid.n_u)));
        }
        if grid.is_corner(*t) {
            return Err(Error::CornerTarget { u: t.u, v: t.v }.into());
        }
    }
    create_dir(&a.out)?;
    for t in &targets {
        let s = synthesize_from_corners(&corners, *t, &ckpt.model)?;
        let stem = format!("{id}_u{}_v{}", t.u, t.v);
        write_png(&s.image, &a.out.join(format!("{stem}.png")))?;
        let roles = ["L", "R", "B"];
        if a.dump_disparity {
            for (i, role) in roles.iter().enumerate() {
                let d = s.disparity.plane(0, i).to_vec();
                let d = lfvs::Tensor::from_vec([1, 1, s.disparity.h(), s.disparity.w()], d)?;
                write_pfm(&d, &a.out.join(format!("{stem}_disparity_{role}.pfm")))?;
            }
        }
        if a.dump_warped {
            for (w, role) in s.warped.iter().zip(roles) {
                write_png(w, &a.out.join(format!("{stem}_warped_{role}.png")))?;
            }
        }
    }
    let mut m = RunManifest::new("synthesize", &a.out);
    m.checkpoints.push(ckpt_path);
    m.resolved_config = serde_json::json!({
        "scene": a.scene,
        "targets": targets.iter().map(|t| [t.u, t.v]).collect::<Vec<_>>(),
        "model": ckpt.model.config,
    });
    m.write()?;
    println!("wrote {} views to {}", targets.len(), a.out.display());
    Ok(())
}

#[derive(Deserialize)]
struct GridFile {
    entry: Vec<GridEntry>,
}

#[derive(Deserialize)]
struct GridEntry {
    n_resgroups: usize,
    n_cbam: usize,
    #[serde(default = "yes")]
    attention: bool,
    checkpoint: PathBuf,
}

fn yes() -> bool {
    true
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let spec = dataset_spec(&a.data, &a.layout)?;
    let dataset_id = a.data.display().to_string();
    create_dir(&a.out)?;
    let mut m = RunManifest::new("evaluate", &a.out);

    if let Some(grid_path) = &a.ablate {
        let text = std::fs::read_to_string(grid_path).map_err(|e| Error::io(grid_path, e))?;
        let grid: GridFile = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", grid_path.display())))?;
        let base = grid_path.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::new();
        for e in grid.entry {
            let path = resolve_checkpoint(&base.join(&e.checkpoint));
            m.checkpoints.push(path.clone());
            entries.push(AblationEntry {
                n_resgroups: e.n_resgroups,
                n_cbam: e.n_cbam,
                attention: e.attention,
                checkpoint: Checkpoint::load(&path)?,
            });
        }
        let ids = scene_ids(&spec, a.scenes.as_deref(), "test.txt")?;
        let source = DiskScenes { spec, ids };
        let report = ablation_grid(&entries, &source, &dataset_id)?;
        let table = report.to_table();
        let path = a.out.join("ablation.csv");
        std::fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
        let path = a.out.join("ablation.txt");
        std::fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
        m.config_path = Some(grid_path.clone());
        m.write()?;
        print!("{table}");
        return Ok(());
    }

    let ckpt_arg = a.ckpt.clone().ok_or_else(|| usage("--ckpt is required"))?;
    let ckpt_path = resolve_checkpoint(&ckpt_arg);
    let ckpt = Checkpoint::load(&ckpt_path)?;
    m.checkpoints.push(ckpt_path);
    m.resolved_config = serde_json::to_value(&ckpt.model.config).expect("config serializes");

    if let Some(q) = &a.qualitative {
        let id = q
            .strip_prefix("scene:")
            .ok_or_else(|| usage(format!("--qualitative expects scene:<ID>, got '{q}'")))?;
        let crops = a
            .crop
            .iter()
            .map(|c| c.parse::<CropBox>())
            .collect::<Result<Vec<_>, _>>()?;
        let lf = load_lightfield(&spec, id)?;
        let grid = lf.grid();
        let targets = if a.target.is_empty() {
            vec![AngularPos::new(grid.n_v / 2, grid.n_u / 2)]
        } else {
            a.target.iter().map(|t| parse_target(t)).collect::<Result<_, _>>()?
        };
        let files = export_qualitative(&ckpt.model, &lf, id, &targets, &crops, &a.out)?;
        m.write()?;
        println!("wrote {} images to {}", files.len(), a.out.display());
        return Ok(());
    }

    let ids = scene_ids(&spec, a.scenes.as_deref(), "test.txt")?;
    let source = DiskScenes { spec, ids };
    let report = evaluate(&ckpt.model, &source, &ckpt.fingerprint(), &dataset_id)?;
    report.write_csv(&a.out.join("report.csv"))?;
    let summary = report.summary();
    let path = a.out.join("summary.txt");
    std::fs::write(&path, &summary).map_err(|e| Error::io(&path, e))?;
    m.write()?;
    print!("{summary}");
    Ok(())
}
