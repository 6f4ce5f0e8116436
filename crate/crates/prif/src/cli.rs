//! The `prif` command. Every subcommand prints JSON lines on stdout.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use prif_core::dataset::{corrupt, points_to_rays, Corruption, RayDataset};
use prif_core::eval::{benchmark_render, chamfer, evaluation_protocol, RenderTarget};
use prif_core::geometry::Camera;
use prif_core::model::{auto_decode, extract_points, train_color, train_with_progress, PrifModel};
use prif_core::nn::{Mlp, MlpSpec};
use prif_core::pose::{optimize_pose, PoseParams};
use prif_core::rays::EncodingMode;
use prif_core::sdf::{sample_sdf_training_set, train_sdf, BOUNDING_RADIUS};
use prif_core::Vec3;
use serde_json::{json, Value};

use crate::checkpoint::{self, Checkpoint, PrifCheckpoint, SdfCheckpoint, ShapeEntry};
use crate::config::{Preset, RunConfig};
use crate::data_io::{load_dataset, load_sdf_samples, save_dataset, save_sdf_samples};
use crate::image_io::{read_mask_pgm, write_depth_pgm, write_mask_pgm, write_ppm};
use crate::mesh_io::{read_ply_points, write_ply_points};
use crate::pipeline::{
    dataset_for, load_scene, parse_vec3, render_mesh, render_prif, rig_records, training_rig,
    with_extra_latent,
};

#[derive(Debug, Parser)]
#[command(
    name = "prif",
    version,
    about = "Primary-ray implicit shapes: data, training, rendering and evaluation"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print the resolved configuration and exit without touching files.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Worker threads.
    #[arg(long, global = true, env = "PRIF_THREADS")]
    pub threads: Option<usize>,
    /// Run on a single worker thread.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Size preset applied before the config file and flags.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    /// JSON run configuration (as printed by --dry-run).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct RigArgs {
    #[arg(long)]
    pub cameras: Option<usize>,
    /// Square image resolution in pixels.
    #[arg(long)]
    pub res: Option<u32>,
    #[arg(long)]
    pub rig_radius: Option<f64>,
    /// Vertical field of view in degrees.
    #[arg(long)]
    pub fov: Option<f64>,
    #[arg(long)]
    pub target_radius: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr_start: Option<f64>,
    #[arg(long)]
    pub lr_end: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    PerpFoot,
    Plucker,
    Raw,
}

impl From<ModeArg> for EncodingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PerpFoot => EncodingMode::PerpFoot,
            ModeArg::Plucker => EncodingMode::Plucker,
            ModeArg::Raw => EncodingMode::Raw,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CorruptionArg {
    Noise,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchMethodArg {
    Prif,
    SphereTrace,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a ray dataset from a mesh and a Fibonacci camera rig.
    GenData {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[command(flatten)]
        rig: RigArgs,
    },
    /// Add hit-point noise to, or drop foreground rays from, a dataset.
    Corrupt {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        kind: CorruptionArg,
        #[arg(long)]
        level: f64,
    },
    /// Train a ray network on one or more datasets (one shape per file).
    Train {
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        /// Latent size when more than one dataset is given.
        #[arg(long)]
        latent_dim: Option<usize>,
        /// Predict the mask with its own network.
        #[arg(long)]
        separate_mask: bool,
        /// Fit a color head after the geometry networks.
        #[arg(long)]
        color: bool,
    },
    /// Train the signed-distance baseline on a closed mesh.
    TrainSdf {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        /// Write the generated samples here.
        #[arg(long)]
        samples_out: Option<PathBuf>,
        /// Train on a saved sample file instead of sampling the mesh.
        #[arg(long)]
        samples_in: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        target_radius: Option<f64>,
    },
    /// Render depth (PGM), mask (PGM) and color (PPM) from a model or mesh.
    Render {
        #[arg(long, conflicts_with = "mesh", required_unless_present = "mesh")]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Rig camera index.
        #[arg(long, default_value_t = 0)]
        view: usize,
        /// Camera position looking at the origin; overrides --view.
        #[arg(long, value_parser = parse_vec3)]
        position: Option<Vec3>,
        #[arg(long, default_value_t = 0)]
        shape_id: u16,
        #[arg(long)]
        depth_out: Option<PathBuf>,
        #[arg(long)]
        mask_out: Option<PathBuf>,
        #[arg(long)]
        color_out: Option<PathBuf>,
        #[command(flatten)]
        rig: RigArgs,
    },
    /// Extract a point cloud with one query per ray.
    Extract {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        shape_id: u16,
        /// Gradient threshold of the outlier filter.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, conflicts_with = "delta")]
        no_filter: bool,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        rig: RigArgs,
    },
    /// Chamfer distance of a point cloud against a mesh or another cloud.
    EvalCd {
        #[arg(long)]
        points: PathBuf,
        #[arg(
            long,
            conflicts_with = "points_b",
            required_unless_present = "points_b"
        )]
        mesh: Option<PathBuf>,
        #[arg(long)]
        points_b: Option<PathBuf>,
        #[arg(long)]
        n_eval: Option<usize>,
        #[arg(long)]
        target_radius: Option<f64>,
    },
    /// Count network queries (and time) for rendering one image.
    Bench {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        res: Option<u32>,
        #[arg(long, value_enum, default_value_t = BenchMethodArg::Prif)]
        method: BenchMethodArg,
        #[arg(long)]
        max_steps: Option<usize>,
        /// Skip empty space outside the bounding sphere when sphere tracing.
        #[arg(long)]
        bounded: bool,
        #[arg(long, default_value_t = 0)]
        view: usize,
    },
    /// Recover a camera pose from a target silhouette.
    Pose {
        #[arg(long)]
        ckpt: PathBuf,
        /// Binary PGM target mask.
        #[arg(long)]
        target: PathBuf,
        /// Reference camera position (looking at the origin).
        #[arg(long, value_parser = parse_vec3)]
        position: Vec3,
        /// Initial axis-angle rotation relative to the reference camera.
        #[arg(long, value_parser = parse_vec3)]
        init_rotation: Option<Vec3>,
        #[arg(long, value_parser = parse_vec3)]
        init_translation: Option<Vec3>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        fov: Option<f64>,
    },
    /// Fit a latent code to observations of an unseen shape.
    AutoDecode {
        #[arg(long)]
        ckpt: PathBuf,
        /// Observation dataset.
        #[arg(long, conflicts_with = "points", required_unless_present = "points")]
        data: Option<PathBuf>,
        /// Observed points (PLY), turned into rays from the rig viewpoints.
        #[arg(long)]
        points: Option<PathBuf>,
        /// JSON file receiving the latent.
        #[arg(long)]
        out: PathBuf,
        /// Extract the decoded shape to this PLY.
        #[arg(long)]
        points_out: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[command(flatten)]
        rig: RigArgs,
    },
}

/// Parses `argv` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            emit(json!({"event": "error", "message": format!("{e:#}")}));
            2
        }
    }
}

fn emit(v: Value) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{v}");
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_rig(cfg: &mut RunConfig, r: &RigArgs) {
    set(&mut cfg.rig.cameras, r.cameras);
    set(&mut cfg.rig.resolution, r.res);
    set(&mut cfg.rig.radius, r.rig_radius);
    set(&mut cfg.rig.fov_deg, r.fov);
    set(&mut cfg.rig.target_radius, r.target_radius);
}

fn apply_train(cfg: &mut RunConfig, t: &TrainArgs, sdf: bool) {
    set(&mut cfg.train.epochs, t.epochs);
    set(&mut cfg.train.batch_size, t.batch_size);
    set(&mut cfg.train.lr_start, t.lr_start);
    set(&mut cfg.train.lr_end, t.lr_end);
    if sdf {
        set(&mut cfg.sdf.depth, t.depth);
        set(&mut cfg.sdf.width, t.width);
    } else {
        set(&mut cfg.model.depth, t.depth);
        set(&mut cfg.model.width, t.width);
    }
}

/// Preset, then config file, then flags.
pub fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::preset(g.preset.unwrap_or_default()),
    };
    if let (Some(p), Some(_)) = (g.preset, &g.config) {
        let base = RunConfig::preset(p);
        cfg.preset = p;
        cfg.rig.cameras = base.rig.cameras;
        cfg.rig.resolution = base.rig.resolution;
        cfg.model.depth = base.model.depth;
        cfg.model.width = base.model.width;
        cfg.train.epochs = base.train.epochs;
        cfg.sdf = base.sdf;
    }
    set(&mut cfg.seed, g.seed);
    if g.threads.is_some() {
        cfg.threads = g.threads;
    }
    cfg.deterministic |= g.deterministic;
    match &cli.command {
        Command::GenData { mode, rig, .. } => {
            apply_rig(&mut cfg, rig);
            set(&mut cfg.model.mode, mode.map(Into::into));
        }
        Command::Corrupt { .. } => {}
        Command::EvalCd {
            n_eval,
            target_radius,
            ..
        } => {
            set(&mut cfg.eval.n_eval, *n_eval);
            set(&mut cfg.rig.target_radius, *target_radius);
        }
        Command::Train {
            train,
            latent_dim,
            separate_mask,
            color,
            ..
        } => {
            apply_train(&mut cfg, train, false);
            set(&mut cfg.model.latent_dim, *latent_dim);
            cfg.model.separate_mask |= separate_mask;
            cfg.model.color |= color;
        }
        Command::TrainSdf {
            samples,
            train,
            target_radius,
            ..
        } => {
            apply_train(&mut cfg, train, true);
            set(&mut cfg.sdf.samples, *samples);
            set(&mut cfg.rig.target_radius, *target_radius);
        }
        Command::Render { rig, .. } => apply_rig(&mut cfg, rig),
        Command::Extract {
            delta,
            no_filter,
            threshold,
            rig,
            ..
        } => {
            apply_rig(&mut cfg, rig);
            if delta.is_some() {
                cfg.extract.delta = *delta;
            }
            if *no_filter {
                cfg.extract.delta = None;
            }
            set(&mut cfg.extract.mask_threshold, *threshold);
        }
        Command::Bench {
            res,
            max_steps,
            bounded,
            ..
        } => {
            set(&mut cfg.rig.resolution, *res);
            set(&mut cfg.sphere_trace.max_steps, *max_steps);
            if *bounded {
                cfg.sphere_trace.bound_radius = Some(BOUNDING_RADIUS);
            }
        }
        Command::Pose { steps, lr, fov, .. } => {
            set(&mut cfg.pose.steps, *steps);
            set(&mut cfg.pose.lr, *lr);
            set(&mut cfg.rig.fov_deg, *fov);
        }
        Command::AutoDecode { steps, lr, rig, .. } => {
            apply_rig(&mut cfg, rig);
            set(&mut cfg.auto_decode.steps, *steps);
            set(&mut cfg.auto_decode.lr, *lr);
        }
    }
    Ok(cfg)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::GenData { .. } => "gen-data",
        Command::Corrupt { .. } => "corrupt",
        Command::Train { .. } => "train",
        Command::TrainSdf { .. } => "train-sdf",
        Command::Render { .. } => "render",
        Command::Extract { .. } => "extract",
        Command::EvalCd { .. } => "eval-cd",
        Command::Bench { .. } => "bench",
        Command::Pose { .. } => "pose",
        Command::AutoDecode { .. } => "auto-decode",
    }
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let cfg = resolve_config(cli)?;
    if cli.global.dry_run {
        emit(json!({"event": "config", "command": command_name(&cli.command), "config": cfg}));
        return Ok(());
    }
    let threads = if cfg.deterministic {
        Some(1)
    } else {
        cfg.threads
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().context("building worker pool")?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn rig_camera(cfg: &RunConfig, view: usize, position: Option<Vec3>) -> anyhow::Result<Camera> {
    let r = cfg.rig.resolution;
    if let Some(p) = position {
        return Ok(Camera::look_at(p, Vec3::ZERO, cfg.fov_y(), r, r));
    }
    let rig = training_rig(cfg);
    rig.get(view)
        .copied()
        .with_context(|| format!("--view {view} outside rig of {} cameras", rig.len()))
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> anyhow::Result<()> {
    match cmd {
        Command::GenData { mesh, out, .. } => {
            let loaded = load_scene(mesh, cfg.rig.target_radius)?;
            let ds = dataset_for(&loaded.scene, cfg, cfg.model.mode)?;
            save_dataset(out, &ds)?;
            emit(json!({
                "event": "gen_data",
                "records": ds.len(),
                "foreground": ds.foreground_count(),
                "mode": ds.mode,
                "dropped_triangles": loaded.dropped,
                "scale": loaded.normalization.scale,
                "center": loaded.normalization.center,
                "out": out,
            }));
        }
        Command::Corrupt {
            data,
            out,
            kind,
            level,
        } => {
            let ds = load_dataset(data)?;
            let kind = match kind {
                CorruptionArg::Noise => Corruption::Noise,
                CorruptionArg::Partial => Corruption::Partial,
            };
            let c = corrupt(&ds, kind, *level, cfg.seed)?;
            save_dataset(out, &c)?;
            emit(
                json!({"event": "corrupt", "kind": kind.as_str(), "level": level, "records": c.len(), "foreground": c.foreground_count(), "out": out}),
            );
        }
        Command::Train { data, out, .. } => train_cmd(data, out, cfg)?,
        Command::TrainSdf {
            mesh,
            out,
            samples_out,
            samples_in,
            ..
        } => {
            let loaded = load_scene(mesh, cfg.rig.target_radius)?;
            let hash = loaded.scene.mesh.content_hash();
            let samples = match samples_in {
                Some(p) => load_sdf_samples(p)?.1,
                None => sample_sdf_training_set(&loaded.scene, cfg.sdf.samples, cfg.seed)?,
            };
            if let Some(p) = samples_out {
                save_sdf_samples(p, &samples, cfg.seed, Some(hash))?;
            }
            let spec = MlpSpec::new(3, 1, cfg.sdf.depth, cfg.sdf.width);
            let mut net = Mlp::new(spec, cfg.seed)?;
            let trace = train_sdf(&mut net, &samples, &cfg.train_config())?;
            for (i, l) in trace.epochs.iter().enumerate() {
                emit(json!({"event": "epoch", "epoch": i, "loss": l.total}));
            }
            checkpoint::save_sdf(
                out,
                &SdfCheckpoint {
                    net,
                    mesh_hash: Some(hash),
                },
            )?;
            emit(json!({"event": "train_sdf", "samples": samples.len(), "out": out}));
        }
        Command::Render {
            ckpt,
            mesh,
            view,
            position,
            shape_id,
            depth_out,
            mask_out,
            color_out,
            ..
        } => {
            let cam = rig_camera(cfg, *view, *position)?;
            let render = match (ckpt, mesh) {
                (Some(p), _) => match checkpoint::load(p)? {
                    Checkpoint::Prif(c) => render_prif(&c.model, &cam, *shape_id)?,
                    Checkpoint::Sdf(c) => {
                        let target = RenderTarget::SphereTrace(&c.net, cfg.sphere_trace);
                        let (_, depth) = benchmark_render(&target, &cam)?;
                        let mask = depth
                            .depth
                            .iter()
                            .map(|&d| if d > 0.0 { 1.0 } else { 0.0 })
                            .collect();
                        crate::pipeline::Render {
                            mask: prif_core::pose::Image::new(cam.width, cam.height, mask)?,
                            depth,
                            colors: None,
                        }
                    }
                },
                (None, Some(m)) => render_mesh(&load_scene(m, cfg.rig.target_radius)?.scene, &cam),
                (None, None) => bail!("one of --ckpt or --mesh is required"),
            };
            if let Some(p) = depth_out {
                write_depth_pgm(p, &render.depth, cfg.sphere_trace.t_max)?;
            }
            if let Some(p) = mask_out {
                write_mask_pgm(p, &render.mask)?;
            }
            if let Some(p) = color_out {
                let c = render
                    .colors
                    .as_ref()
                    .context("no color available for --color-out")?;
                write_ppm(p, cam.width, cam.height, c)?;
            }
            let fg = render.mask.data.iter().filter(|&&a| a >= 0.5).count();
            emit(
                json!({"event": "render", "width": cam.width, "height": cam.height, "foreground": fg, "position": cam.position}),
            );
        }
        Command::Extract {
            ckpt,
            out,
            shape_id,
            ..
        } => {
            let c = checkpoint::load_prif(ckpt)?;
            let records = rig_records(&training_rig(cfg), c.model.mode(), *shape_id)?;
            let before = c.model.query_count();
            let cloud = extract_points(&c.model, &records, &cfg.extract.options())?;
            write_ply_points(out, &cloud.points, cloud.colors.as_deref())?;
            emit(json!({
                "event": "extract",
                "rays": records.len(),
                "queries": c.model.query_count() - before,
                "points": cloud.points.len(),
                "discarded": cloud.discarded,
                "out": out,
            }));
        }
        Command::EvalCd {
            points,
            mesh,
            points_b,
            ..
        } => {
            let (a, _) = read_ply_points(points)?;
            let report = match (mesh, points_b) {
                (Some(m), _) => {
                    let loaded = load_scene(m, cfg.rig.target_radius)?;
                    evaluation_protocol(&a, &loaded.scene.mesh, cfg.eval.n_eval, cfg.seed)?
                }
                (None, Some(b)) => chamfer(&a, &read_ply_points(b)?.0)?,
                (None, None) => bail!("one of --mesh or --points-b is required"),
            };
            emit(
                json!({"event": "chamfer", "mean": report.mean, "median": report.median, "count_a": report.count_a, "count_b": report.count_b}),
            );
        }
        Command::Bench {
            ckpt, method, view, ..
        } => {
            let cam = rig_camera(cfg, *view, None)?;
            let start = Instant::now();
            let report = match (checkpoint::load(ckpt)?, method) {
                (Checkpoint::Prif(c), BenchMethodArg::Prif) => {
                    benchmark_render(&RenderTarget::Prif(&c.model), &cam)?.0
                }
                (Checkpoint::Sdf(c), BenchMethodArg::SphereTrace) => {
                    benchmark_render(&RenderTarget::SphereTrace(&c.net, cfg.sphere_trace), &cam)?.0
                }
                (Checkpoint::Prif(_), BenchMethodArg::SphereTrace) => {
                    bail!("sphere tracing needs an SDF checkpoint")
                }
                (Checkpoint::Sdf(_), BenchMethodArg::Prif) => {
                    bail!("--method prif needs a PRIF checkpoint")
                }
            };
            let seconds = start.elapsed().as_secs_f64();
            emit(
                json!({"event": "bench", "method": report.method, "rays": report.rays, "queries": report.queries, "seconds": seconds}),
            );
        }
        Command::Pose {
            ckpt,
            target,
            position,
            init_rotation,
            init_translation,
            ..
        } => {
            let c = checkpoint::load_prif(ckpt)?;
            let target = read_mask_pgm(target)?;
            let reference = Camera::look_at(
                *position,
                Vec3::ZERO,
                cfg.fov_y(),
                target.width,
                target.height,
            );
            let init = PoseParams {
                rotation: init_rotation.unwrap_or(Vec3::ZERO),
                translation: init_translation.unwrap_or(Vec3::ZERO),
            };
            let (pose, trace) =
                optimize_pose(&c.model, &reference, &target, init, &cfg.pose_config())?;
            for (i, l) in trace.iter().enumerate() {
                emit(json!({"event": "pose_step", "step": i, "loss": l}));
            }
            emit(
                json!({"event": "pose", "rotation": pose.rotation, "translation": pose.translation, "final_loss": trace.last()}),
            );
        }
        Command::AutoDecode {
            ckpt,
            data,
            points,
            out,
            points_out,
            ..
        } => {
            let c = checkpoint::load_prif(ckpt)?;
            let model = &c.model;
            let observations = match (data, points) {
                (Some(d), _) => load_dataset(d)?.records,
                (None, Some(p)) => {
                    let (pts, _) = read_ply_points(p)?;
                    let views: Vec<Vec3> = training_rig(cfg).iter().map(|c| c.position).collect();
                    points_to_rays(&pts, &views, model.mode())?
                }
                (None, None) => bail!("one of --data or --points is required"),
            };
            let init = vec![0.0f32; model.config().latent_dim];
            let latent = auto_decode(model, &observations, &init, &cfg.auto_decode_config())?;
            std::fs::write(out, serde_json::to_string(&json!({"latent": latent}))?)
                .with_context(|| format!("writing {}", out.display()))?;
            let mut summary = json!({"event": "auto_decode", "observations": observations.len(), "latent_norm": latent.iter().map(|v| v * v).sum::<f32>().sqrt(), "out": out});
            if let Some(p) = points_out {
                let (m, id) = with_extra_latent(model, &latent)?;
                let records = rig_records(&training_rig(cfg), m.mode(), id)?;
                let cloud = extract_points(&m, &records, &cfg.extract.options())?;
                write_ply_points(p, &cloud.points, cloud.colors.as_deref())?;
                summary["points"] = json!(cloud.points.len());
            }
            emit(summary);
        }
    }
    Ok(())
}

fn train_cmd(data: &[PathBuf], out: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    let parts = data
        .iter()
        .map(|p| load_dataset(p))
        .collect::<Result<Vec<_>, _>>()?;
    let ds = if parts.len() == 1 {
        parts.into_iter().next().unwrap()
    } else {
        RayDataset::concat(parts)?
    };
    let config = cfg.model.prif_config(ds.num_shapes());
    let mut model = PrifModel::new(
        prif_core::model::PrifConfig {
            mode: ds.mode,
            ..config
        },
        cfg.seed,
    )?;
    let tc = cfg.train_config();
    let trace = train_with_progress(&mut model, &ds, &tc, |epoch, l| {
        emit(
            json!({"event": "epoch", "epoch": epoch, "loss": l.total, "loss_s": l.s, "loss_a": l.a}),
        );
    })?;
    if model.color_net().is_some() {
        let ct = train_color(&mut model, &ds, &tc)?;
        for (i, l) in ct.epochs.iter().enumerate() {
            emit(json!({"event": "color_epoch", "epoch": i, "loss": l.total}));
        }
    }
    let shapes = (0..ds.num_shapes())
        .map(|i| ShapeEntry {
            id: i as u16,
            mesh_hash: ds.meta.mesh_hashes.get(i).copied().unwrap_or(0),
        })
        .collect();
    checkpoint::save_prif(
        out,
        &PrifCheckpoint {
            model,
            shapes,
            dataset: Some(ds.meta.clone()),
        },
    )?;
    emit(
        json!({"event": "train", "records": ds.len(), "shapes": ds.num_shapes(), "final_loss": trace.last().map(|l| l.total), "out": out}),
    );
    Ok(())
}
