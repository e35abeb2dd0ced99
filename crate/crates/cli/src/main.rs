//! `semfilter` command line: fit solids, synthesize contexts, replay command
//! streams through the filter, compare variants and run the live service.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use tracing_subscriber::filter::LevelFilter;

use semfilter::geometry::{build_envelope, containment_fraction, fit_solids, Aabb, EnvelopeOptions, Relationship, SuperquadricJson};
use semfilter::io::{load_scene, read_ply, CommandStream, RunReport, Scene, TickLogWriter};
use semfilter::semantic::{synthesize_context, HttpClient, LlmClient, SynthOptions};
use semfilter::sim::{
    adversarial_stream, builtin_scene, caution_comparison, desk_workspace, load_fixture, rotation_comparison, stream_target,
    AdversarialKind, SessionConfig, SimSession, World, BUILTIN_SCENES, NO_OBJECT,
};
use semfilter::{KinematicChain, PointCloud};

#[derive(Debug, Parser, Serialize)]
#[command(name = "semfilter", version, about = "Semantic safety filter for teleoperated manipulators")]
struct Cli {
    /// Seed for scene generation, fitting and scripted streams.
    #[arg(long, global = true, env = "SEMFILTER_SEED", default_value_t = 7)]
    seed: u64,
    #[arg(long, global = true, env = "SEMFILTER_LOG_LEVEL", default_value = "warn",
          value_parser = ["off", "error", "warn", "info", "debug", "trace"])]
    log_level: String,
    /// Output file. Results go to stdout when omitted.
    #[arg(long, global = true, env = "SEMFILTER_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
enum Command {
    /// Fit superquadrics to a PLY cloud, or the envelope of a relationship.
    Fit(FitArgs),
    /// Synthesize the semantic context for holding an object in a scene.
    Synth(SynthArgs),
    /// Replay a command stream through the filter and score it.
    Run(RunArgs),
    /// Run a stream under two filter variants and report both.
    Compare(CompareArgs),
    /// Serve live sessions over HTTP and WebSocket.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[arg(long, env = "SEMFILTER_PLY")]
    ply: PathBuf,
    /// Build this relationship's envelope instead of the object's own solids.
    #[arg(long, env = "SEMFILTER_RELATIONSHIP")]
    relationship: Option<String>,
    /// Workspace box as `xmin,ymin,zmin,xmax,ymax,zmax`; defaults to the desk.
    #[arg(long, env = "SEMFILTER_WORKSPACE", allow_hyphen_values = true)]
    workspace: Option<String>,
    /// Object label; defaults to the file stem.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ClientKind {
    Fixture,
    Live,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    /// Built-in scene id, scene directory or scene.json path.
    #[arg(long, env = "SEMFILTER_SCENE")]
    scene: String,
    #[arg(long, env = "SEMFILTER_OBJECT")]
    object: String,
    #[arg(long, value_enum, env = "SEMFILTER_CLIENT", default_value = "fixture")]
    client: ClientKind,
    /// Fixture rule table; the bundled one when omitted.
    #[arg(long, env = "SEMFILTER_FIXTURE_RULES")]
    fixture_rules: Option<PathBuf>,
    /// Prompts per question, odd.
    #[arg(long, env = "SEMFILTER_VOTES", default_value_t = 5, value_parser = odd)]
    votes: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Toggle {
    On,
    Off,
}

#[derive(Debug, Args, Serialize)]
struct StreamArgs {
    #[arg(long, env = "SEMFILTER_SCENE")]
    scene: String,
    /// Held object; `none` for an empty gripper.
    #[arg(long, env = "SEMFILTER_OBJECT", default_value = NO_OBJECT)]
    object: String,
    /// Stream file (CSV or JSONL), or a scripted kind: straight_pierce,
    /// orbit, spiral_descent, lateral_sweep, rotate_dive.
    #[arg(long, env = "SEMFILTER_STREAM")]
    stream: String,
    /// Scripted streams aim at this object; the first one when omitted.
    #[arg(long)]
    target: Option<String>,
    /// Control rate (Hz).
    #[arg(long, env = "SEMFILTER_RATE", default_value_t = 45.0, value_parser = positive)]
    rate: f64,
    #[arg(long, env = "SEMFILTER_FIXTURE_RULES")]
    fixture_rules: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct RunArgs {
    #[command(flatten)]
    #[serde(flatten)]
    stream: StreamArgs,
    #[arg(long, value_enum, env = "SEMFILTER_FILTER", default_value = "on")]
    filter: Toggle,
    /// Tick log (JSONL) destination.
    #[arg(long, env = "SEMFILTER_LOG")]
    log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Variant {
    /// Caution weight 1 against the configured weight.
    Caution,
    /// Free against constrained rotation.
    Rotation,
}

#[derive(Debug, Args, Serialize)]
struct CompareArgs {
    #[command(flatten)]
    #[serde(flatten)]
    stream: StreamArgs,
    #[arg(long, value_enum)]
    variant: Variant,
    #[arg(long, default_value_t = 0.25, value_parser = positive)]
    caution_weight: f64,
}

#[derive(Debug, Args, Serialize)]
struct ServeArgs {
    #[arg(long, env = "SEMFILTER_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "SEMFILTER_HOST", default_value = "127.0.0.1")]
    host: String,
    /// Extra scenes: a directory of scene folders, each with a scene.json.
    #[arg(long, env = "SEMFILTER_SCENE_DIR")]
    scene_dir: Option<PathBuf>,
    #[arg(long, env = "SEMFILTER_FIXTURE_RULES")]
    fixture_rules: Option<PathBuf>,
    /// Per-session tick logs are written here.
    #[arg(long, env = "SEMFILTER_LOG_DIR")]
    log_dir: Option<PathBuf>,
}

fn odd(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n % 2 == 1 => Ok(n),
        Ok(n) => Err(format!("{n} is not odd")),
        Err(e) => Err(e.to_string()),
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        Ok(x) => Err(format!("{x} is not positive")),
        Err(e) => Err(e.to_string()),
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(cli.log_level.parse::<LevelFilter>().unwrap_or(LevelFilter::WARN))
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    if let Some(parent) = cli.out.as_deref().and_then(Path::parent) {
        if !parent.as_os_str().is_empty() && !parent.is_dir() {
            return Err(usage(format!("output directory {} does not exist", parent.display())));
        }
    }
    let config = serde_json::to_value(cli).map_err(runtime)?;
    eprintln!("config: {config}");
    match &cli.command {
        Command::Fit(args) => fit(cli, args, config),
        Command::Synth(args) => synth(cli, args, config),
        Command::Run(args) => replay(cli, args, config),
        Command::Compare(args) => compare(cli, args, config),
        Command::Serve(args) => serve(cli, args),
    }
}

fn emit(out: Option<&Path>, value: &impl Serialize) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").map_err(|e| runtime(format!("{}: {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn parse_workspace(s: &str) -> Result<Aabb, Failure> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--workspace: {e}")))?;
    let [a, b, c, d, e, f] = v[..] else {
        return Err(usage("--workspace needs six comma separated numbers"));
    };
    let ws = Aabb::new([a, b, c], [d, e, f]);
    if ws.is_degenerate() {
        return Err(usage("--workspace box is empty"));
    }
    Ok(ws)
}

fn envelope_options(seed: u64) -> EnvelopeOptions {
    EnvelopeOptions {
        seed,
        ..Default::default()
    }
}

fn fit(cli: &Cli, args: &FitArgs, config: serde_json::Value) -> Outcome {
    if !args.ply.is_file() {
        return Err(usage(format!("no such file: {}", args.ply.display())));
    }
    let relationship = args
        .relationship
        .as_deref()
        .map(str::parse::<Relationship>)
        .transpose()
        .map_err(usage)?;
    let workspace = args.workspace.as_deref().map(parse_workspace).transpose()?.unwrap_or_else(desk_workspace);
    let points = read_ply(&args.ply).map_err(usage)?;
    let label = args
        .label
        .clone()
        .or_else(|| args.ply.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "object".into());
    let cloud = PointCloud::new(points, label.clone(), label.clone());
    let opts = envelope_options(cli.seed);
    let members = match relationship {
        None => fit_solids(&cloud, &opts),
        Some(r) => build_envelope(&cloud, r, &workspace, &opts),
    }
    .map_err(runtime)?;
    let contained = containment_fraction(&members, &cloud.points, 1.0);
    eprintln!("fitted {} solid(s); {:.2}% of {} points inside", members.len(), 100.0 * contained, cloud.points.len());
    let members: Vec<SuperquadricJson> = members.into_iter().map(Into::into).collect();
    emit(
        cli.out.as_deref(),
        &json!({
            "label": label,
            "relationship": relationship,
            "members": members,
            "containment": contained,
            "points": cloud.points.len(),
            "config": config,
        }),
    )
}

fn resolve_scene(spec: &str, seed: u64) -> Result<Scene, Failure> {
    if BUILTIN_SCENES.contains(&spec) {
        return builtin_scene(spec, seed).ok_or_else(|| runtime(format!("cannot build scene '{spec}'")));
    }
    let path = Path::new(spec);
    let manifest = if path.is_dir() { path.join("scene.json") } else { path.to_path_buf() };
    if !manifest.is_file() {
        return Err(usage(format!(
            "'{spec}' is neither a built-in scene ({}) nor a scene file",
            BUILTIN_SCENES.join(", ")
        )));
    }
    load_scene(&manifest).map_err(usage)
}

fn fixture_client(path: Option<&Path>) -> Result<Arc<dyn LlmClient>, Failure> {
    if let Some(p) = path {
        if !p.is_file() {
            return Err(usage(format!("no such file: {}", p.display())));
        }
    }
    Ok(Arc::new(load_fixture(path).map_err(usage)?))
}

fn synth(cli: &Cli, args: &SynthArgs, config: serde_json::Value) -> Outcome {
    let scene = resolve_scene(&args.scene, cli.seed)?;
    let client: Arc<dyn LlmClient> = match args.client {
        ClientKind::Fixture => fixture_client(args.fixture_rules.as_deref())?,
        ClientKind::Live => Arc::new(HttpClient::from_env().map_err(usage)?),
    };
    let opts = SynthOptions {
        votes: args.votes,
        ..Default::default()
    };
    let labels = scene.labels();
    let mut warning = None;
    let context = if args.object == NO_OBJECT {
        semfilter::SemanticContext::permissive(NO_OBJECT, &labels)
    } else if !client.knows_object(&args.object) {
        let msg = format!("no knowledge about '{}', using the permissive context", args.object);
        eprintln!("warning: {msg}");
        warning = Some(msg);
        semfilter::SemanticContext::permissive(args.object.as_str(), &labels)
    } else {
        synthesize_context(&labels, &args.object, &scene.manifest.description, &client, &opts).map_err(runtime)?
    };
    emit(
        cli.out.as_deref(),
        &json!({ "scene_id": scene.id(), "context": context, "warning": warning, "config": config }),
    )
}

/// A session on the requested scene holding the requested object.
fn session(cli: &Cli, args: &StreamArgs, filter: bool) -> Result<SimSession, Failure> {
    let scene = resolve_scene(&args.scene, cli.seed)?;
    let world = World::new(KinematicChain::fr3(), scene, envelope_options(cli.seed)).map_err(runtime)?;
    let config = SessionConfig {
        dt: 1.0 / args.rate,
        filter,
        ..Default::default()
    };
    let mut s = SimSession::new(Arc::new(world), config).map_err(usage)?;
    let client = fixture_client(args.fixture_rules.as_deref())?;
    s.set_held_object(&args.object, &client).map_err(runtime)?;
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    Ok(s)
}

fn load_stream(cli: &Cli, args: &StreamArgs, s: &SimSession) -> Result<(String, CommandStream), Failure> {
    let path = Path::new(&args.stream);
    if path.is_file() {
        let stream = CommandStream::load(path, None).map_err(usage)?;
        let name = path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok((name, stream));
    }
    let kind: AdversarialKind = args
        .stream
        .parse()
        .map_err(|_| usage(format!("'{}' is neither a stream file nor a scripted stream kind", args.stream)))?;
    let clouds = &s.world.scene.clouds;
    let cloud = match &args.target {
        None => clouds.first().ok_or_else(|| usage("scene has no objects"))?,
        Some(t) => clouds
            .iter()
            .find(|c| &c.label == t || &c.object_id == t)
            .ok_or_else(|| usage(format!("no object '{t}' in the scene")))?,
    };
    let (target, size) = stream_target(cloud);
    let start = s.world.chain.frames(&s.q).map_err(runtime)?.ee.translation.vector;
    let stream = adversarial_stream(kind, start, target, size, cli.seed);
    Ok((kind.to_string(), stream))
}

fn replay(cli: &Cli, args: &RunArgs, mut config: serde_json::Value) -> Outcome {
    let mut s = session(cli, &args.stream, matches!(args.filter, Toggle::On))?;
    let (name, stream) = load_stream(cli, &args.stream, &s)?;
    config["session"] = serde_json::to_value(&s.config).map_err(runtime)?;
    config["context"] = serde_json::to_value(&s.context).map_err(runtime)?;
    let (result, log) = s.run_stream(&stream, &name).map_err(runtime)?;
    if let Some(path) = &args.log {
        let mut w = TickLogWriter::create(path).map_err(runtime)?;
        for rec in &log {
            w.write(rec).map_err(runtime)?;
        }
        w.flush().map_err(runtime)?;
    }
    eprintln!(
        "{name}: {} ticks, {:.2}% violating, min h {:.4}",
        result.ticks,
        100.0 * result.violation_fraction,
        result.min_h
    );
    emit(cli.out.as_deref(), &RunReport::new(vec![result], config))
}

fn compare(cli: &Cli, args: &CompareArgs, mut config: serde_json::Value) -> Outcome {
    let s = session(cli, &args.stream, true)?;
    let (_, stream) = load_stream(cli, &args.stream, &s)?;
    config["session"] = serde_json::to_value(&s.config).map_err(runtime)?;
    config["context"] = serde_json::to_value(&s.context).map_err(runtime)?;
    let result = match args.variant {
        Variant::Caution => serde_json::to_value(caution_comparison(&s, &stream, args.caution_weight).map_err(runtime)?),
        Variant::Rotation => serde_json::to_value(rotation_comparison(&s, &stream).map_err(runtime)?),
    }
    .map_err(runtime)?;
    emit(cli.out.as_deref(), &json!({ "variant": args.variant, "result": result, "config": config }))
}

fn serve(cli: &Cli, args: &ServeArgs) -> Outcome {
    use semfilter_service::{load_scene_dir, serve, AppState, ServiceConfig};

    let extra = match &args.scene_dir {
        Some(dir) => load_scene_dir(dir).map_err(usage)?,
        None => Vec::new(),
    };
    if let Some(dir) = &args.log_dir {
        if !dir.is_dir() {
            return Err(usage(format!("log directory {} does not exist", dir.display())));
        }
    }
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| usage(format!("bad listen address: {e}")))?;
    let client = fixture_client(args.fixture_rules.as_deref())?;
    let mut config = ServiceConfig::with_scenes(client, cli.seed, extra);
    config.envelope = envelope_options(cli.seed);
    config.log_dir = args.log_dir.clone();
    let state = AppState::new(config);

    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(runtime)?;
        let local = listener.local_addr().map_err(runtime)?;
        eprintln!("listening on http://{local} (scenes: {})", state.scene_ids().join(", "));
        let shutdown = async {
            if let Err(e) = tokio::signal::ctrl_c().await {
                tracing::error!("cannot listen for ctrl-c: {e}");
                std::future::pending::<()>().await;
            }
            eprintln!("shutting down");
        };
        serve(listener, state, shutdown).await.map_err(runtime)
    })?;
    eprintln!("stopped");
    Ok(())
}
