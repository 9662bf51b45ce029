use clap::{Args, Parser, Subcommand};
use inrcache::engine::{Engine, EngineConfig, Pipeline};
use inrcache::field::{
    load_raw_with_descriptor, make_procedural, Field, ProceduralKind, RawLattice, VolumeDescriptor,
};
use inrcache::harness::{bench_run, load_field, FieldSource, LoadedField, Orbit, SceneConfig};
use inrcache::inr::{
    save_weights, train, HashGridConfig, InrConfig, InrModel, MlpConfig, TrainConfig,
};
use inrcache::macrocell::MacroCellGrid;
use inrcache::render::{Camera, TransferFunction};
use inrcache::service::{FrameFormat, ServeOptions, Server, SessionTemplate};
use inrcache::{Error, Result};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "inrcache",
    version,
    about = "Brick-cached volume rendering of slow scalar fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a hash-grid network to a raw volume.
    Train(TrainArgs),
    /// Render one image.
    Render(RenderArgs),
    /// Run a benchmark trajectory and write per-frame CSV.
    Bench(BenchArgs),
    /// Stream frames to viewers over a WebSocket.
    Serve(ServeArgs),
}

/// Volume source shared by render and serve.
#[derive(Args)]
struct SourceArgs {
    /// Weight file written by `train`.
    #[arg(long, required_unless_present = "procedural")]
    model: Option<PathBuf>,
    /// Analytic field instead of a model: sphere, shells, marschner_lobb.
    #[arg(long, conflicts_with = "model")]
    procedural: Option<ProceduralKind>,
    /// Lattice size of a procedural field.
    #[arg(long, default_value_t = 128)]
    dims: u32,
}

impl SourceArgs {
    fn load(&self, macrocell_size: u32) -> Result<LoadedField> {
        let source = match (&self.model, self.procedural) {
            (Some(path), _) => FieldSource::Model { path: path.clone() },
            (None, Some(shape)) => FieldSource::Procedural {
                shape,
                dims: [self.dims; 3],
            },
            (None, None) => return Err(Error::Config("pass --model or --procedural".into())),
        };
        load_field(&source, None, macrocell_size)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Headerless raw volume.
    #[arg(long, required_unless_present = "procedural")]
    input: Option<PathBuf>,
    /// JSON sidecar with dims, type, vmin, vmax.
    #[arg(long, required_unless_present = "procedural")]
    descriptor: Option<PathBuf>,
    /// Train on an analytic field instead.
    #[arg(long, conflicts_with_all = ["input", "descriptor"])]
    procedural: Option<ProceduralKind>,
    #[arg(long, default_value_t = 32)]
    dims: u32,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f32,
    #[arg(long, default_value_t = 4096)]
    batch: usize,
    /// JSON with optional `hash_grid` and `mlp` sections.
    #[arg(long)]
    arch: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    macrocell_size: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(serde::Deserialize, Default)]
#[serde(default)]
struct Arch {
    hash_grid: HashGridConfig,
    mlp: MlpConfig,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Transfer function JSON; defaults to a white ramp.
    #[arg(long)]
    tf: Option<PathBuf>,
    /// Camera JSON; defaults to a view of the whole volume.
    #[arg(long)]
    camera: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write raw little-endian f32 RGBA.
    #[arg(long)]
    raw_out: Option<PathBuf>,
    /// Sample through the brick cache, rendering until no sample misses.
    #[arg(long)]
    cached: bool,
    #[arg(long)]
    lod_scale: Option<f32>,
    /// Frames rendered to warm the cache (cached) or accumulate (path tracing).
    #[arg(long, default_value_t = 16)]
    frames: u32,
    #[arg(long)]
    pathtrace: bool,
    /// Engine options JSON.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Comma-separated: cached|uncached, raymarch|pathtrace, ranking|no-ranking,
    /// preload|no-preload.
    #[arg(long, default_value = "cached")]
    mode: String,
    /// Overrides the scene's frame count.
    #[arg(long)]
    frames: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    tf: Option<PathBuf>,
    /// Send PNG frames instead of raw RGBA8.
    #[arg(long)]
    png: bool,
    #[arg(long, default_value_t = 30.0)]
    max_fps: f64,
    #[arg(long, default_value_t = 512)]
    width: u32,
    #[arg(long, default_value_t = 512)]
    height: u32,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

fn engine_config(path: &Option<PathBuf>) -> Result<EngineConfig> {
    path.as_ref()
        .map(read_json)
        .transpose()
        .map(Option::unwrap_or_default)
}

fn load_tf(path: &Option<PathBuf>) -> Result<TransferFunction> {
    match path {
        Some(p) => TransferFunction::load(p),
        None => Ok(TransferFunction::ramp([1.0; 3], 0.5)),
    }
}

fn lattice_psnr(model: &InrModel, lattice: &dyn Field) -> Result<f64> {
    let d = lattice.domain().clone();
    let mut coords = Vec::with_capacity(d.voxel_count() as usize);
    for z in 0..d.dims[2] {
        for y in 0..d.dims[1] {
            for x in 0..d.dims[0] {
                coords.push(
                    d.index_to_normalized(inrcache::math::Vec3::new(x as f32, y as f32, z as f32)),
                );
            }
        }
    }
    let want = lattice.sample_batch(&coords)?;
    let got = model.infer_batch(&coords)?;
    let mse = want
        .iter()
        .zip(&got)
        .map(|(a, b)| ((a - b) as f64).powi(2))
        .sum::<f64>()
        / want.len() as f64;
    Ok(10.0 * (1.0 / mse).log10())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let field: Box<dyn Field> = match (a.procedural, &a.input, &a.descriptor) {
        (Some(shape), _, _) => Box::new(RawLattice::rasterize(
            &make_procedural(shape, [a.dims; 3])?,
            [a.dims; 3],
        )?),
        (None, Some(input), Some(desc)) => Box::new(load_raw_with_descriptor(
            input,
            &VolumeDescriptor::load(desc)?,
        )?),
        _ => {
            return Err(Error::Config(
                "pass --input and --descriptor, or --procedural".into(),
            ))
        }
    };
    let arch: Arch = a
        .arch
        .as_ref()
        .map(read_json)
        .transpose()?
        .unwrap_or_default();
    let config = InrConfig {
        hash_grid: arch.hash_grid,
        mlp: arch.mlp,
        domain: field.domain().clone(),
    };
    let mut model = InrModel::<f32>::new(config, a.seed)?;
    let tc = TrainConfig {
        steps: a.steps,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: a.seed,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let report = train(&mut model, field.as_ref(), &tc)?;
    println!(
        "trained {} steps in {:.1}s, final batch loss {:.3e}",
        a.steps,
        start.elapsed().as_secs_f64(),
        report.losses.last().copied().unwrap_or(f64::NAN)
    );
    println!(
        "lattice PSNR {:.2} dB",
        lattice_psnr(&model, field.as_ref())?
    );
    let grid = MacroCellGrid::build(&model, model.domain().dims, a.macrocell_size)?;
    save_weights(&model, Some(&grid), &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_render(a: RenderArgs) -> Result<()> {
    let mut config = engine_config(&a.config)?;
    config.cached = a.cached;
    if a.pathtrace {
        config.pipeline = Pipeline::Pathtrace;
    }
    if let Some(s) = a.lod_scale {
        config.lod.lod_scale = s;
    }
    let loaded = a.source.load(config.macrocell_size)?;
    let dims = loaded.field.domain().dims;
    let camera = match &a.camera {
        Some(p) => Camera::load(p)?,
        None => Orbit::around(dims, 0).camera(0),
    };
    let mut engine = Engine::with_grid(loaded.field, loaded.grid, load_tf(&a.tf)?, config)?;
    let frames = if a.cached || a.pathtrace {
        a.frames.max(1)
    } else {
        1
    };
    let mut last = None;
    for _ in 0..frames {
        let out = engine.render_frame(&camera)?;
        let done =
            a.cached && !a.pathtrace && out.counts.true_misses == 0 && out.requests_inflight == 0;
        last = Some(out);
        if done {
            break;
        }
        engine.wait_idle();
    }
    let out = last.expect("at least one frame");
    out.image.save_png(&a.out)?;
    if let Some(p) = &a.raw_out {
        out.image.save_f32(p)?;
    }
    println!(
        "frame {} in {:.1} ms: {} samples, {} true misses, {} fallback hits",
        out.frame,
        out.elapsed.as_secs_f64() * 1e3,
        out.counts.samples,
        out.counts.true_misses,
        out.counts.fallback_hits
    );
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let mut scene = SceneConfig::load(&a.scene)?;
    if let Some(f) = a.frames {
        scene.frames = f;
        scene.window = scene.window.min(f);
    }
    let report = bench_run(&scene, a.mode.parse()?, Some(&a.out))?;
    let misses: u64 = report.rows.iter().map(|r| r.true_misses).sum();
    println!(
        "{}: {} frames, mean fps over last {} = {:.2}, total true misses {}",
        report.mode,
        report.rows.len(),
        report.window,
        report.mean_fps,
        misses
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let config = engine_config(&a.config)?;
    let loaded = a.source.load(config.macrocell_size)?;
    let dims = loaded.field.domain().dims;
    let mut orbit = Orbit::around(dims, 0);
    orbit.width = a.width;
    orbit.height = a.height;
    let template = SessionTemplate {
        field: loaded.field,
        grid: loaded.grid,
        tf: load_tf(&a.tf)?,
        config,
        camera: orbit.camera(0),
        format: if a.png {
            FrameFormat::Png
        } else {
            FrameFormat::Rgba8
        },
    };
    let server = Server::bind(
        (a.host.as_str(), a.port),
        template,
        ServeOptions {
            max_fps: (a.max_fps > 0.0).then_some(a.max_fps),
            max_frames: None,
        },
    )?;
    println!("listening on ws://{}", server.local_addr()?);
    server.run()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Render(a) => cmd_render(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
