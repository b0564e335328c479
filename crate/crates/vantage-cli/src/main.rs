//! Command-line driver: solve one sample, render poses and coordinate maps,
//! run benchmark evaluations, manage the knowledge base, and re-validate
//! traces.
//!
//! Exit codes: 0 success, 1 configuration or validation error, 2 sample left
//! unanswered (solve only).

mod config;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::FileConfig;
use vantage::camera::{
    look_at_extrinsics, spherical_to_world, CameraSpherical, PITCH_CLAMP_DEGREES,
};
use vantage::evalbench::{self, EvalContext, EvalMode};
use vantage::geometry::load_scene;
use vantage::knowledge;
use vantage::pipeline::{self, AblationMode, SampleSpec};
use vantage::render::{
    encode_png, rasterize, render_sideview_map, render_topdown_map, RenderOptions,
};

#[derive(Parser)]
#[command(
    name = "vantage",
    about = "Spatial question answering over reconstructed 3D scenes via agent-steered novel views",
    version
)]
struct Cli {
    /// Path to the JSON config file (agents, services, intrinsics, pipeline).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the render width in pixels.
    #[arg(long, global = true)]
    width: Option<u32>,
    /// Override the render height in pixels.
    #[arg(long, global = true)]
    height: Option<u32>,
    /// Override the vertical field of view in degrees.
    #[arg(long, global = true)]
    fov: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one spatial question about a scene end to end.
    Solve(SolveArgs),
    /// Render a posed view, the top-down map, or the side map of a scene.
    Render(RenderArgs),
    /// Evaluate a benchmark file in pipeline or baseline mode.
    Eval(EvalArgs),
    /// Inspect or edit a knowledge base.
    Kb(KbArgs),
    /// Re-validate every pose and image reference in a sample trace.
    Check(CheckArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Scene manifest (JSON); omit to run the reconstruction front end.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Original image (PNG).
    #[arg(long)]
    image: PathBuf,
    /// The question, including any answer options.
    #[arg(long)]
    question: String,
    /// Knowledge base file; defaults to the built-in base.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Ablation mode: full, no_reselect, no_kb, no_coordinate_layout.
    #[arg(long)]
    ablation: Option<AblationMode>,
    /// Output directory for the trace (default: runs).
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Sample id used for the trace directory.
    #[arg(long, default_value = "sample")]
    id: String,
    /// Subtask hint for knowledge retrieval.
    #[arg(long)]
    subtask: Option<String>,
}

#[derive(Args)]
struct RenderArgs {
    /// Scene manifest (JSON).
    #[arg(long)]
    scene: PathBuf,
    /// Camera yaw in degrees (posed render).
    #[arg(long, allow_hyphen_values = true)]
    yaw: Option<f64>,
    /// Camera pitch in degrees (posed render).
    #[arg(long, allow_hyphen_values = true)]
    pitch: Option<f64>,
    /// Camera distance from the scene center (posed render).
    #[arg(long)]
    r: Option<f64>,
    /// Render the annotated top-down coordinate map instead of a posed view.
    #[arg(long, conflicts_with_all = ["yaw", "pitch", "r"])]
    topdown: bool,
    /// Render the annotated side view instead of a posed view.
    #[arg(long, conflicts_with_all = ["yaw", "pitch", "r", "topdown"])]
    side: bool,
    /// Output PNG path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Benchmark JSONL file.
    #[arg(long)]
    bench: PathBuf,
    /// pipeline or baseline.
    #[arg(long, default_value = "pipeline")]
    mode: EvalMode,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output directory for the report and traces.
    #[arg(long, default_value = "eval-out")]
    out: PathBuf,
    /// Knowledge base file; defaults to the built-in base.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Ablation mode for pipeline runs.
    #[arg(long)]
    ablation: Option<AblationMode>,
}

#[derive(Args)]
struct KbArgs {
    #[command(subcommand)]
    action: KbAction,
}

#[derive(Subcommand)]
enum KbAction {
    /// Print the knowledge items.
    List {
        #[arg(long)]
        kb: Option<PathBuf>,
    },
    /// Append an item and persist the base.
    Add {
        /// Knowledge base file to update (created from the built-in base if
        /// absent).
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long)]
        strategy: String,
    },
    /// Write the loaded base to a file.
    Export {
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CheckArgs {
    /// Sample trace directory (contains trace.jsonl).
    #[arg(long)]
    trace: PathBuf,
}

fn load_kb_or_default(path: Option<&Path>) -> Result<knowledge::KnowledgeBase> {
    match path {
        Some(p) => knowledge::load_kb(p).map_err(|e| anyhow!("knowledge base: {e}")),
        None => Ok(knowledge::default_kb()),
    }
}

fn cmd_solve(cli: &Cli, args: &SolveArgs) -> Result<i32> {
    let config = FileConfig::load(cli.config.as_deref())?;
    let agents = config.agents()?;
    let kb = load_kb_or_default(args.kb.as_deref())?;
    let intrinsics = config.intrinsics(cli.width, cli.height, cli.fov)?;
    let pipeline_config = config.pipeline_config(args.ablation);
    let services = config.services();

    let spec = SampleSpec {
        sample_id: &args.id,
        scene_manifest: args.scene.as_deref(),
        image: &args.image,
        question: &args.question,
        subtask_hint: args.subtask.as_deref(),
    };
    let result = pipeline::run_sample(
        &spec,
        &pipeline_config,
        &agents,
        &kb,
        &services,
        &intrinsics,
        &args.out,
    )
    .map_err(|e| anyhow!("{e}"))?;

    let sample_dir = args.out.join(&args.id);
    if result.answered {
        println!("{}", result.answer.as_deref().unwrap_or(""));
        eprintln!(
            "answered after {} retr{} (trace: {})",
            result.retries_used,
            if result.retries_used == 1 { "y" } else { "ies" },
            sample_dir.display()
        );
        Ok(0)
    } else {
        eprintln!(
            "unanswered: {} (trace: {})",
            result.error.as_deref().unwrap_or("retry limit exhausted"),
            sample_dir.display()
        );
        Ok(2)
    }
}

fn wrap_yaw_degrees(yaw: f64) -> f64 {
    let mut y = (yaw + 180.0).rem_euclid(360.0) - 180.0;
    if y == -180.0 {
        y = 180.0;
    }
    y
}

fn cmd_render(cli: &Cli, args: &RenderArgs) -> Result<i32> {
    let config = FileConfig::load(cli.config.as_deref())?;
    let intrinsics = config.intrinsics(cli.width, cli.height, cli.fov)?;
    let scene = load_scene(&args.scene).map_err(|e| anyhow!("{e}"))?;

    if args.topdown {
        let img = render_topdown_map(&scene, &intrinsics);
        encode_png(&img, &args.out).map_err(|e| anyhow!("{e}"))?;
        eprintln!("wrote {}", args.out.display());
        return Ok(0);
    }
    if args.side {
        let (img, layout, ext) = render_sideview_map(&scene, &intrinsics);
        encode_png(&img, &args.out).map_err(|e| anyhow!("{e}"))?;
        println!(
            "{}",
            serde_json::json!({ "camera": layout.camera, "extrinsics": ext })
        );
        eprintln!("wrote {}", args.out.display());
        return Ok(0);
    }

    let (yaw, pitch, r) = match (args.yaw, args.pitch, args.r) {
        (Some(y), Some(p), Some(r)) => (y, p, r),
        _ => {
            return Err(anyhow!(
                "provide --yaw, --pitch and --r together, or use --topdown / --side"
            ))
        }
    };
    if r <= 0.0 {
        return Err(anyhow!("zero baseline: --r must be positive"));
    }
    let mut effective_pitch = pitch;
    if pitch.abs() > PITCH_CLAMP_DEGREES {
        effective_pitch = pitch.clamp(-PITCH_CLAMP_DEGREES, PITCH_CLAMP_DEGREES);
        eprintln!("warning: pitch {pitch} clamped to {effective_pitch}");
    }
    let spherical = CameraSpherical::new(
        wrap_yaw_degrees(yaw).to_radians(),
        effective_pitch.to_radians(),
        r,
    )
    .map_err(|e| anyhow!("{e}"))?;
    let (_, position) = spherical_to_world(spherical, scene.center);
    let ext = look_at_extrinsics(position, scene.center, scene.up).map_err(|e| anyhow!("{e}"))?;
    let img = rasterize(&scene, &ext, &intrinsics, &RenderOptions::default());
    encode_png(&img, &args.out).map_err(|e| anyhow!("{e}"))?;
    println!(
        "{}",
        serde_json::json!({ "camera": spherical, "extrinsics": ext })
    );
    eprintln!("wrote {}", args.out.display());
    Ok(0)
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> Result<i32> {
    let config = FileConfig::load(cli.config.as_deref())?;
    let agents = config.agents()?;
    let kb = load_kb_or_default(args.kb.as_deref())?;
    let intrinsics = config.intrinsics(cli.width, cli.height, cli.fov)?;
    let pipeline_config = config.pipeline_config(args.ablation);
    let services = config.services();

    let samples = evalbench::load_benchmark(&args.bench).map_err(|e| anyhow!("{e}"))?;
    let base_dir = args
        .bench
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("create {}", args.out.display()))?;

    let ctx = EvalContext {
        config: &pipeline_config,
        agents: &agents,
        kb: &kb,
        services: &services,
        intrinsics: &intrinsics,
        base_dir: &base_dir,
        out_dir: &args.out,
    };
    let report =
        evalbench::run_eval(&samples, args.mode, &ctx, args.workers).map_err(|e| anyhow!("{e}"))?;

    let json_path = args.out.join("report.json");
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    let table = evalbench::render_table(&report);
    std::fs::write(args.out.join("report.txt"), format!("{table}\n"))?;
    println!("{table}");
    eprintln!("report: {}", json_path.display());
    Ok(0)
}

fn cmd_kb(args: &KbArgs) -> Result<i32> {
    match &args.action {
        KbAction::List { kb } => {
            let base = load_kb_or_default(kb.as_deref())?;
            for item in &base.items {
                println!("{:>3}  {:<40} {}", item.id, item.task_tag, item.strategy);
            }
            Ok(0)
        }
        KbAction::Add { kb, task, strategy } => {
            let base = if kb.exists() {
                knowledge::load_kb(kb).map_err(|e| anyhow!("knowledge base: {e}"))?
            } else {
                knowledge::default_kb()
            };
            let grown =
                knowledge::append_item(&base, task, strategy).map_err(|e| anyhow!("{e}"))?;
            knowledge::save_kb(&grown, kb).map_err(|e| anyhow!("{e}"))?;
            println!(
                "added item {} ({} items total) -> {}",
                grown.items.last().map(|i| i.id).unwrap_or_default(),
                grown.items.len(),
                kb.display()
            );
            Ok(0)
        }
        KbAction::Export { kb, out } => {
            let base = load_kb_or_default(kb.as_deref())?;
            knowledge::save_kb(&base, out).map_err(|e| anyhow!("{e}"))?;
            println!("exported {} items -> {}", base.items.len(), out.display());
            Ok(0)
        }
    }
}

fn cmd_check(args: &CheckArgs) -> Result<i32> {
    let report = pipeline::check_trace(&args.trace).map_err(|e| anyhow!("{e}"))?;
    println!(
        "steps: {}  poses checked: {}  images checked: {}",
        report.steps, report.poses_checked, report.images_checked
    );
    if report.ok() {
        println!("trace ok");
        Ok(0)
    } else {
        for problem in &report.problems {
            eprintln!("problem: {problem}");
        }
        Ok(1)
    }
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version exit 0; usage errors are configuration errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => cmd_solve(&cli, args),
        Command::Render(args) => cmd_render(&cli, args),
        Command::Eval(args) => cmd_eval(&cli, args),
        Command::Kb(args) => cmd_kb(args),
        Command::Check(args) => cmd_check(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
