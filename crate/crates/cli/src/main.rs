use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use image::imageops::{resize, FilterType};

use regtrack::eval::{load_sequence, run_protocol, EvalOptions, Protocol, Thresholds};
use regtrack::frame::load_rgb;
use regtrack::geometry::{CameraIntrinsics, MeshPair, TriangleMesh, Vec3};
use regtrack::optimizer::{check_random_scenes, OptimizationSettings};
use regtrack::synth::{
    demo_cube, generate_sequence, mottle, procedural_background, Occluder, SequenceConfig, SequenceVariant, TrajectorySpec,
    VariantKind, DEFAULT_NOISE_SIGMA,
};
use regtrack::tracker::TrackerState;

/// Region-based 6DOF object tracking on image sequences.
#[derive(Parser)]
#[command(name = "regtrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence with ground-truth poses.
    Synth(SynthArgs),
    /// Track a sequence and write an evaluation report.
    Track(TrackArgs),
    /// Compare analytic and finite-difference pixel Jacobians.
    CheckJacobian(CheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output sequence directory.
    #[arg(long)]
    out: PathBuf,
    /// OBJ mesh of the tracked object; a two-tone cube when omitted.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Background image, resized to the frame size; procedural when omitted.
    #[arg(long)]
    background: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant, default_value = "regular")]
    variant: VariantKind,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    /// Frame size as WxH.
    #[arg(long, value_parser = parse_resolution, default_value = "320x256")]
    resolution: (u32, u32),
    /// Rotation speed of the object in degrees per frame.
    #[arg(long, default_value_t = 3.0)]
    speed: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Rbot,
    Auc,
}

#[derive(Args)]
struct TrackArgs {
    /// Sequence directory.
    #[arg(long)]
    seq: PathBuf,
    /// OBJ mesh per object, in object order; defaults to the sequence's objects/ directory.
    #[arg(long)]
    mesh: Vec<PathBuf>,
    /// Report directory (report.json, report.csv).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "rbot")]
    protocol: ProtocolArg,
    /// Settings file with `key = value` lines.
    #[arg(long)]
    settings: Option<PathBuf>,
    /// Directory for per-frame overlay images.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Translation threshold of the reset protocol, in meters.
    #[arg(long, default_value_t = 0.05)]
    max_translation: f64,
    /// Rotation threshold of the reset protocol, in degrees.
    #[arg(long, default_value_t = 5.0)]
    max_rotation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CheckArgs {
    /// OBJ mesh; alternates a sphere and a cube when omitted.
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    scenes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Negate the analytic Jacobian before comparing.
    #[arg(long, hide = true)]
    flip_sign: bool,
}

/// Failure of a command, mapped to the process exit status.
#[derive(Debug)]
enum Failure {
    /// Metric or diagnostic threshold not met (status 1).
    Check(String),
    /// Invalid input or a runtime error (status 2).
    Input(String),
}

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Failure::Input(e.to_string())
    }
}

fn parse_resolution(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: u32 = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h: u32 = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    if w < 16 || h < 16 {
        return Err(format!("resolution {w}x{h} is too small"));
    }
    Ok((w, h))
}

fn parse_variant(s: &str) -> Result<VariantKind, String> {
    s.parse().map_err(|e: regtrack::synth::SynthError| e.to_string())
}

fn load_mesh(path: &Path) -> Result<TriangleMesh, Failure> {
    if !path.is_file() {
        return Err(Failure::Input(format!("mesh not found: {}", path.display())));
    }
    TriangleMesh::load_obj(path).map_err(Failure::input)
}

fn mesh_pair(mesh: TriangleMesh) -> Result<MeshPair, Failure> {
    MeshPair::new(mesh).map_err(Failure::input)
}

/// Camera with the field of view of `fx = 300` at 320 px width.
fn synth_camera(width: u32, height: u32) -> Result<CameraIntrinsics, Failure> {
    let f = 0.9375 * width as f64;
    CameraIntrinsics::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height).map_err(Failure::input)
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Failure> {
    let mesh = match &args.mesh {
        Some(p) => load_mesh(p)?,
        None => demo_cube(),
    };
    let (w, h) = args.resolution;
    let background = match &args.background {
        Some(p) => {
            if !p.is_file() {
                return Err(Failure::Input(format!("background not found: {}", p.display())));
            }
            let img = load_rgb(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            if img.dimensions() == (w, h) {
                img
            } else {
                resize(&img, w, h, FilterType::Triangle)
            }
        }
        None => procedural_background(w, h, args.seed),
    };
    if args.frames == 0 {
        return Err(Failure::Input("--frames must be positive".into()));
    }
    if !(args.speed.is_finite() && args.speed >= 0.0) {
        return Err(Failure::Input("--speed must be a non-negative number".into()));
    }
    let k = synth_camera(w, h)?;
    let d = mesh.diameter;
    let meshes = mesh_pair(mesh)?;
    let trajectory = TrajectorySpec::tumble(2.6 * d, args.frames, 10, args.speed, args.seed);
    let variant = match args.variant {
        VariantKind::Regular => SequenceVariant::regular(),
        VariantKind::DynamicLight => SequenceVariant::dynamic_light(),
        VariantKind::Noisy => SequenceVariant::noisy(DEFAULT_NOISE_SIGMA),
        VariantKind::Occlusion => {
            let g = Vec3::new(0.3, 0.75, 0.3);
            let mut block = TriangleMesh::cube(0.25 * d, 4, [g; 6]);
            mottle(&mut block, args.seed);
            let occluder = Occluder {
                meshes: mesh_pair(block)?,
                trajectory: TrajectorySpec::orbit(&trajectory, 0.9 * d, 40, args.frames),
            };
            SequenceVariant::occlusion(occluder, DEFAULT_NOISE_SIGMA)
        }
    };
    let config = SequenceConfig {
        frames: args.frames,
        seed: args.seed,
        ..SequenceConfig::default()
    };
    let start = Instant::now();
    let summary = generate_sequence(&meshes, &trajectory, &variant, &[background], &k, &config, &args.out)
        .map_err(Failure::input)?;
    println!(
        "wrote {} frames ({} variant, {}x{}) to {} in {:.1} s",
        summary.frames,
        args.variant.name(),
        w,
        h,
        args.out.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_track(args: &TrackArgs) -> Result<(), Failure> {
    let mut settings = match &args.settings {
        Some(p) => OptimizationSettings::load(p).map_err(Failure::input)?,
        None => OptimizationSettings::default(),
    };
    settings.seed = args.seed;
    settings.validate().map_err(Failure::input)?;
    let thresholds = Thresholds {
        translation: args.max_translation,
        rotation: args.max_rotation.to_radians(),
    };
    if !(thresholds.translation > 0.0 && thresholds.rotation > 0.0) {
        return Err(Failure::Input("thresholds must be positive".into()));
    }
    let seq = load_sequence(&args.seq).map_err(Failure::input)?;
    let meshes = if args.mesh.is_empty() {
        seq.load_meshes().map_err(Failure::input)?
    } else {
        args.mesh.iter().map(|p| load_mesh(p)).collect::<Result<Vec<_>, _>>()?
    };
    if meshes.len() != seq.object_count() {
        return Err(Failure::Input(format!(
            "sequence has {} objects but {} meshes were given",
            seq.object_count(),
            meshes.len()
        )));
    }
    let pairs = meshes.into_iter().map(mesh_pair).collect::<Result<Vec<_>, _>>()?;
    let full: Vec<TriangleMesh> = pairs.iter().map(|p| p.full.clone()).collect();
    let refs: Vec<&TriangleMesh> = full.iter().collect();
    let mut tracker = TrackerState::new(pairs, seq.k, settings).map_err(Failure::input)?;
    let protocol = match args.protocol {
        ProtocolArg::Rbot => Protocol::Rbot,
        ProtocolArg::Auc => Protocol::Auc,
    };
    let options = EvalOptions {
        overlay_dir: args.overlay.clone(),
    };
    let start = Instant::now();
    let report = run_protocol(&mut tracker, &seq, &refs, protocol, thresholds, &options).map_err(Failure::input)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Failure::Input(format!("{}: {e}", args.out.display())))?;
    report
        .write(&args.out.join("report.json"), Some(&args.out.join("report.csv")))
        .map_err(Failure::input)?;
    let resets: usize = report.objects.iter().map(|o| o.resets).sum();
    println!(
        "{} frames in {:.1} s: success {:.1}%, auc {:.2}, resets {}",
        report.frames.len(),
        start.elapsed().as_secs_f64(),
        report.success_rate,
        report.auc_score,
        resets
    );
    Ok(())
}

fn cmd_check_jacobian(args: &CheckArgs) -> Result<(), Failure> {
    let mesh = args.mesh.as_deref().map(load_mesh).transpose()?;
    if args.scenes == 0 {
        return Err(Failure::Input("--scenes must be positive".into()));
    }
    let report = check_random_scenes(mesh.as_ref(), args.scenes, args.seed, args.flip_sign).map_err(Failure::input)?;
    println!(
        "scenes {} samples {} median {:.3e} p99 {:.3e} max {:.3e}",
        report.scenes, report.samples, report.median, report.p99, report.max
    );
    if report.median < 1e-3 {
        Ok(())
    } else {
        Err(Failure::Check(format!("median relative error {:.3e} exceeds 1e-3", report.median)))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Track(a) => cmd_track(a),
        Command::CheckJacobian(a) => cmd_check_jacobian(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
