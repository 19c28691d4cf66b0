use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use normcarve::appearance::{composite_face, Rect};
use normcarve::carving::CarveConfig;
use normcarve::io::{decode_png, encode_png, load_mesh, save_mesh, write_atomic, MapFormat};
use normcarve::metrics::{crop_head, geo_report, psnr, ssim, DEFAULT_HEAD_RADIUS_FACTOR, DEFAULT_SAMPLES};
use normcarve::oracle::{generate_observations, paint_by_position, PerturbSpec};
use normcarve::pipeline::{
    default_template, read_bundle, run_pipeline, write_bundle, Bundle, PipelineManifest, MESH_FILE, VIEWS_FILE,
};
use normcarve::views::{SCHEMA_VERSION, DEFAULT_HALF_EXTENT, DEFAULT_RESOLUTION};
use normcarve::{scenes, Image, Observation, ViewSet};

#[derive(Parser)]
#[command(name = "normcarve", version, about = "Multi-view normal-map carving")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "NORMCARVE_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene into an observation bundle.
    Synth(SynthArgs),
    /// Reconstruct a colored mesh from an observation bundle.
    Carve(CarveArgs),
    /// Render a mesh's normal, mask and color maps.
    RenderViews(RenderArgs),
    /// Compare a mesh (and optionally renders) against ground truth.
    Eval(EvalArgs),
    /// Paste a face image into a region of a body image.
    CompositeFace(CompositeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MapKind {
    Nfr,
    Png,
}

impl From<MapKind> for MapFormat {
    fn from(k: MapKind) -> Self {
        match k {
            MapKind::Nfr => MapFormat::Nfr,
            MapKind::Png => MapFormat::Png,
        }
    }
}

#[derive(Args)]
struct ViewArgs {
    /// views.json; overrides the canonical set.
    #[arg(long)]
    views: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    view_count: usize,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: usize,
    #[arg(long, default_value_t = DEFAULT_HALF_EXTENT)]
    half_extent: f64,
}

impl ViewArgs {
    fn load(&self) -> Result<ViewSet> {
        match &self.views {
            Some(p) => Ok(ViewSet::from_json(&read_text(p)?).with_context(|| format!("invalid views file {}", p.display()))?),
            None => Ok(ViewSet::canonical(self.view_count, self.resolution, self.half_extent)?),
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Built-in scene name.
    #[arg(long, conflicts_with = "mesh")]
    scene: Option<String>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[command(flatten)]
    views: ViewArgs,
    /// perturb.json
    #[arg(long)]
    perturb: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "nfr")]
    format: MapKind,
    /// Keep meshes without vertex colors uncolored.
    #[arg(long)]
    no_paint: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Overrides mirroring the keys of `carve.json`.
#[derive(Args, Default)]
struct ConfigFlags {
    #[arg(long = "steps_align")]
    steps_align: Option<usize>,
    #[arg(long = "steps_carve")]
    steps_carve: Option<usize>,
    #[arg(long = "steps_color")]
    steps_color: Option<usize>,
    #[arg(long = "lr_align")]
    lr_align: Option<f64>,
    #[arg(long = "lr_carve")]
    lr_carve: Option<f64>,
    #[arg(long = "lr_color")]
    lr_color: Option<f64>,
    #[arg(long = "lambda")]
    lambda: Option<f64>,
    #[arg(long = "remesh_interval")]
    remesh_interval: Option<usize>,
    #[arg(long = "edge_length_start")]
    edge_length_start: Option<f64>,
    #[arg(long = "edge_length_end")]
    edge_length_end: Option<f64>,
    #[arg(long = "edge_anneal_fraction")]
    edge_anneal_fraction: Option<f64>,
    #[arg(long = "remesh_stop_fraction")]
    remesh_stop_fraction: Option<f64>,
    #[arg(long = "lr_decay_fraction")]
    lr_decay_fraction: Option<f64>,
    #[arg(long = "gradient_smoothing")]
    gradient_smoothing: Option<f64>,
    #[arg(long = "max_hole_edges")]
    max_hole_edges: Option<usize>,
    #[arg(long = "view_offsets")]
    view_offsets: Option<bool>,
    #[arg(long = "view_weights", value_delimiter = ',')]
    view_weights: Option<Vec<f64>>,
    #[arg(long = "color_weights", value_delimiter = ',')]
    color_weights: Option<Vec<f64>>,
}

impl ConfigFlags {
    fn apply(&self, c: &mut CarveConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    c.$f = v.clone();
                }
            )*};
        }
        set!(
            steps_align,
            steps_carve,
            steps_color,
            lr_align,
            lr_carve,
            lr_color,
            lambda,
            remesh_interval,
            edge_length_start,
            edge_length_end,
            edge_anneal_fraction,
            remesh_stop_fraction,
            lr_decay_fraction,
            gradient_smoothing,
            max_hole_edges,
            view_offsets
        );
        if let Some(w) = &self.view_weights {
            c.view_weights = Some(w.clone());
        }
        if let Some(w) = &self.color_weights {
            c.color_weights = Some(w.clone());
        }
    }
}

#[derive(Args)]
struct CarveArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Initial mesh (default: icosphere).
    #[arg(long)]
    template: Option<PathBuf>,
    /// carve.json
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: ConfigFlags,
    /// Write the mesh as OBJ instead of PLY.
    #[arg(long)]
    obj: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[command(flatten)]
    views: ViewArgs,
    #[arg(long, value_enum, default_value = "png")]
    format: MapKind,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Bundle directory rendered from the prediction.
    #[arg(long, requires = "gt_renders")]
    pred_renders: Option<PathBuf>,
    /// Bundle directory rendered from the ground truth.
    #[arg(long, requires = "pred_renders")]
    gt_renders: Option<PathBuf>,
    /// Head reference mesh; adds metrics on the cropped head region.
    #[arg(long)]
    head_ref: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_HEAD_RADIUS_FACTOR)]
    head_radius: f64,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    /// Row label in the CSV output.
    #[arg(long, default_value = "pred")]
    name: String,
    /// JSON report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV file to append a row to.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CompositeArgs {
    #[arg(long)]
    body: PathBuf,
    #[arg(long)]
    face: PathBuf,
    /// Target region as x,y,width,height in body pixels.
    #[arg(long, value_delimiter = ',', required = true)]
    region: Vec<usize>,
    /// Single-channel blend weight (default: 1 inside the region).
    #[arg(long)]
    weight: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn read_text(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))
}

fn load_config(path: Option<&Path>, flags: &ConfigFlags) -> Result<CarveConfig> {
    let mut cfg = match path {
        Some(p) => CarveConfig::from_json(&read_text(p)?).with_context(|| format!("invalid config {}", p.display()))?,
        None => CarveConfig::default(),
    };
    flags.apply(&mut cfg);
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

fn synth(args: &SynthArgs, seed: u64) -> Result<()> {
    let mesh = match (&args.scene, &args.mesh) {
        (Some(name), None) => scenes::scene_by_name(name)?,
        (None, Some(p)) => load_mesh(p).with_context(|| format!("cannot load {}", p.display()))?,
        _ => bail!("give exactly one of --scene or --mesh"),
    };
    let mesh = if mesh.colors.is_none() && !args.no_paint {
        paint_by_position(&mesh)
    } else {
        mesh
    };
    let views = args.views.load()?;
    let perturb = match &args.perturb {
        Some(p) => PerturbSpec::from_json(&read_text(p)?).with_context(|| format!("invalid perturb file {}", p.display()))?,
        None => PerturbSpec::default(),
    };
    let observations = generate_observations(&mesh, &views, &perturb, seed)?;
    let bundle = Bundle {
        views,
        observations,
        gt: Some(mesh),
        perturb: Some(perturb),
    };
    write_bundle(&args.out, &bundle, args.format.into())?;
    log::info!("wrote bundle to {}", args.out.display());
    Ok(())
}

fn carve_cmd(args: &CarveArgs, seed: u64) -> Result<()> {
    let config = load_config(args.config.as_deref(), &args.flags)?;
    let bundle = read_bundle(&args.bundle).with_context(|| format!("cannot read bundle {}", args.bundle.display()))?;
    let template = match &args.template {
        Some(p) => load_mesh(p).with_context(|| format!("cannot load template {}", p.display()))?,
        None => default_template(),
    };
    let out = run_pipeline(&bundle, &template, &config)?;
    fs::create_dir_all(&args.out)?;
    let mesh_name = if args.obj { "mesh.obj" } else { MESH_FILE };
    save_mesh(&args.out.join(mesh_name), &out.mesh)?;
    write_atomic(&args.out.join("carve.json"), config.to_json().as_bytes())?;
    write_atomic(&args.out.join(VIEWS_FILE), out.views.to_json().as_bytes())?;
    let manifest = PipelineManifest {
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").to_string(),
        bundle: args.bundle.display().to_string(),
        template: args.template.as_ref().map(|p| p.display().to_string()),
        config: args.config.as_ref().map(|p| p.display().to_string()),
        out_dir: args.out.display().to_string(),
        mesh: mesh_name.to_string(),
        seed,
        vertices: out.mesh.vertices.len(),
        faces: out.mesh.faces.len(),
        align_loss: out.align_loss,
        carve_loss: out.carve_loss,
        view_offsets: out.views.offsets(),
        timings: out.timings,
    };
    manifest.write(&args.out)?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    Ok(())
}

fn render(args: &RenderArgs) -> Result<()> {
    let mesh = load_mesh(&args.mesh).with_context(|| format!("cannot load {}", args.mesh.display()))?;
    let views = args.views.load()?;
    let observations = generate_observations(&mesh, &views, &PerturbSpec::default(), 0)?;
    let bundle = Bundle {
        views,
        observations,
        gt: None,
        perturb: None,
    };
    write_bundle(&args.out, &bundle, args.format.into())?;
    Ok(())
}

/// Mean PSNR and SSIM over views, on color maps when both sides have them
/// and on normal maps otherwise.
fn image_metrics(pred: &[Observation], gt: &[Observation]) -> Result<(f64, f64)> {
    if pred.len() != gt.len() || pred.is_empty() {
        bail!("render bundles have {} and {} views", pred.len(), gt.len());
    }
    let (mut p, mut s) = (0.0, 0.0);
    for (a, b) in pred.iter().zip(gt) {
        let (x, y): (&Image, &Image) = match (&a.color, &b.color) {
            (Some(x), Some(y)) => (x, y),
            _ => (&a.normal, &b.normal),
        };
        p += psnr(x, y)?;
        s += ssim(x, y)?;
    }
    Ok((p / pred.len() as f64, s / pred.len() as f64))
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "inf".into()
    }
}

fn eval(args: &EvalArgs, seed: u64) -> Result<()> {
    let pred = load_mesh(&args.pred).with_context(|| format!("cannot load {}", args.pred.display()))?;
    let gt = load_mesh(&args.gt).with_context(|| format!("cannot load {}", args.gt.display()))?;
    let geo = geo_report(&pred, &gt, args.samples, seed)?;
    let mut report = json!({
        "schema_version": SCHEMA_VERSION,
        "name": args.name,
        "chamfer": geo.chamfer,
        "p2s": geo.p2s,
        "nc": geo.nc,
        "samples": geo.samples,
        "seed": seed,
        "gt_bbox_diagonal": gt.bbox_diagonal(),
    });
    let mut image = None;
    if let (Some(pr), Some(gr)) = (&args.pred_renders, &args.gt_renders) {
        let (p, s) = image_metrics(&read_bundle(pr)?.observations, &read_bundle(gr)?.observations)?;
        // JSON has no infinity; identical renders report null PSNR.
        report["psnr"] = if p.is_finite() { json!(p) } else { json!(null) };
        report["ssim"] = json!(s);
        image = Some((p, s));
    }
    if let Some(h) = &args.head_ref {
        let head = load_mesh(h).with_context(|| format!("cannot load {}", h.display()))?;
        let hp = crop_head(&pred, &head, args.head_radius)?;
        let hg = crop_head(&gt, &head, args.head_radius)?;
        let r = geo_report(&hp, &hg, args.samples, seed)?;
        report["head"] = json!({ "chamfer": r.chamfer, "p2s": r.p2s, "nc": r.nc });
    }
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => println!("{text}"),
    }
    if let Some(csv) = &args.csv {
        let new = !csv.exists();
        let mut f = fs::OpenOptions::new().create(true).append(true).open(csv)?;
        if new {
            writeln!(f, "name,chamfer,p2s,nc,psnr,ssim")?;
        }
        let (p, s) = image.map_or((String::new(), String::new()), |(p, s)| (fmt_num(p), fmt_num(s)));
        writeln!(f, "{},{},{},{},{p},{s}", args.name, geo.chamfer, geo.p2s, geo.nc)?;
    }
    Ok(())
}

fn load_png(p: &Path) -> Result<Image> {
    let bytes = fs::read(p).with_context(|| format!("cannot read {}", p.display()))?;
    Ok(decode_png(&bytes).with_context(|| format!("cannot decode {}", p.display()))?)
}

fn composite(args: &CompositeArgs) -> Result<()> {
    let body = load_png(&args.body)?;
    let face = load_png(&args.face)?;
    if args.region.len() != 4 {
        bail!("--region takes x,y,width,height, got {} values", args.region.len());
    }
    let region = Rect {
        x: args.region[0],
        y: args.region[1],
        width: args.region[2],
        height: args.region[3],
    };
    let weight = match &args.weight {
        Some(p) => load_png(p)?,
        None => {
            let mut w = Image::new(body.width, body.height, 1);
            for y in region.y..(region.y + region.height).min(body.height) {
                for x in region.x..(region.x + region.width).min(body.width) {
                    w.set(x, y, 0, 1.0);
                }
            }
            w
        }
    };
    let out = composite_face(&body, &face, region, &weight)?;
    write_atomic(&args.out, &encode_png(&out)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    match &cli.command {
        Command::Synth(a) => synth(a, cli.seed),
        Command::Carve(a) => carve_cmd(a, cli.seed),
        Command::RenderViews(a) => render(a),
        Command::Eval(a) => eval(a, cli.seed),
        Command::CompositeFace(a) => composite(a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
