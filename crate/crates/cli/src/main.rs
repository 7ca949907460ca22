//! `notemotion`: serve a live scene, render scripts to SVG frames, check
//! GMN files, or stream scripts to a running engine.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use notemotion::engine::{self, EngineConfig, EngineError};
use notemotion::gmn::{self, TagName};
use notemotion::rational::{self, Rational};
use notemotion::render::{self, FrameSpec, RenderError};
use notemotion::scene::Scene;
use notemotion::sequencer::{self, PlayError, PlayMode, Timeline, UdpSink};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Exit {
    Ok = 0,
    Input = 1,
    Resource = 2,
    Network = 3,
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(e as u8)
    }
}

struct Failure(Exit, String);

type CmdResult = Result<(), Failure>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Machine,
}

#[derive(Debug, Parser)]
#[command(name = "notemotion", version, about = "Animated music notation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// error, warn, info, debug or trace
    #[arg(long, global = true, env = "NOTEMOTION_LOG_LEVEL", default_value = "warn")]
    log_level: String,
    /// Report style: human-readable text or one JSON document.
    #[arg(long, global = true, env = "NOTEMOTION_FORMAT", value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Canvas(u32, u32);

fn parse_canvas(text: &str) -> Result<Canvas, String> {
    let (w, h) = text.split_once('x').ok_or("expected WIDTHxHEIGHT")?;
    let w: u32 = w.parse().map_err(|_| "bad width")?;
    let h: u32 = h.parse().map_err(|_| "bad height")?;
    if w == 0 || h == 0 {
        return Err("canvas sides must be positive".into());
    }
    Ok(Canvas(w, h))
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Listen for OSC and publish the scene state until interrupted.
    Serve {
        #[arg(long, env = "NOTEMOTION_PORT", default_value_t = 7000)]
        port: u16,
        #[arg(long, env = "NOTEMOTION_REPLY_PORT", default_value_t = 7001)]
        reply_port: u16,
        #[arg(long, env = "NOTEMOTION_HTTP_PORT", default_value_t = 8080)]
        http_port: u16,
        #[arg(long, env = "NOTEMOTION_BIND", default_value = "0.0.0.0")]
        bind: IpAddr,
        #[arg(long, env = "NOTEMOTION_CANVAS", value_parser = parse_canvas, default_value = "1280x800")]
        canvas: Canvas,
        #[arg(long, env = "NOTEMOTION_FRAME_MS", default_value_t = 20)]
        frame_ms: u64,
        /// Directory for the exit snapshot `scene_exit.svg`.
        #[arg(long, short, env = "NOTEMOTION_OUT", default_value = ".")]
        out: PathBuf,
    },
    /// Render a script offline to `frame_%06d.svg` files.
    Render {
        script: PathBuf,
        #[arg(long, env = "NOTEMOTION_FPS", default_value_t = 25)]
        fps: u32,
        #[arg(long, short, env = "NOTEMOTION_OUT", default_value = "frames")]
        out: PathBuf,
        #[arg(long, env = "NOTEMOTION_SEED")]
        seed: Option<u64>,
        /// Seconds to render; defaults to the script's last event.
        #[arg(long)]
        duration: Option<String>,
        #[arg(long, env = "NOTEMOTION_CANVAS", value_parser = parse_canvas, default_value = "1280x800")]
        canvas: Canvas,
    },
    /// Parse a GMN file and print its structure.
    Parse { file: PathBuf },
    /// Stream a script as OSC over UDP in real time.
    Play {
        script: PathBuf,
        /// Destination engine.
        #[arg(long, env = "NOTEMOTION_TARGET", default_value = "127.0.0.1:7000")]
        target: String,
        /// Print the messages instead of sending them.
        #[arg(long)]
        dry_run: bool,
        /// Send as fast as possible instead of on schedule.
        #[arg(long)]
        offline: bool,
        #[arg(long, env = "NOTEMOTION_SEED")]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp_millis()
        .init();
    let result = match cli.command {
        Command::Serve {
            port,
            reply_port,
            http_port,
            bind,
            canvas,
            frame_ms,
            out,
        } => serve(
            EngineConfig {
                osc_addr: SocketAddr::new(bind, port),
                reply_port,
                http_addr: SocketAddr::new(bind, http_port),
                frame_interval: Duration::from_millis(frame_ms.max(1)),
                canvas: FrameSpec::new(canvas.0, canvas.1),
            },
            &out,
            cli.format,
        ),
        Command::Render {
            script,
            fps,
            out,
            seed,
            duration,
            canvas,
        } => render_cmd(&script, fps, &out, seed, duration.as_deref(), canvas, cli.format),
        Command::Parse { file } => parse_cmd(&file, cli.format),
        Command::Play {
            script,
            target,
            dry_run,
            offline,
            seed,
        } => play_cmd(&script, &target, dry_run, offline, seed, cli.format),
    };
    match result {
        Ok(()) => Exit::Ok.into(),
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            code.into()
        }
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    let bytes =
        std::fs::read(path).map_err(|e| Failure(Exit::Input, format!("cannot read {}: {e}", path.display())))?;
    String::from_utf8(bytes).map_err(|e| {
        Failure(
            Exit::Input,
            format!(
                "{}: invalid UTF-8 at byte offset {}",
                path.display(),
                e.utf8_error().valid_up_to()
            ),
        )
    })
}

fn load_timeline(path: &Path, seed: Option<u64>) -> Result<Timeline, Failure> {
    let text = read_input(path)?;
    let mut timeline =
        sequencer::load_script(&text).map_err(|e| Failure(Exit::Input, format!("{}:{e}", path.display())))?;
    if let Some(seed) = seed {
        timeline.seed = seed;
    }
    Ok(timeline)
}

fn serve(config: EngineConfig, out: &Path, format: Format) -> CmdResult {
    let ports = [config.osc_addr.port(), config.reply_port, config.http_addr.port()];
    let fixed: Vec<u16> = ports.iter().copied().filter(|p| *p != 0).collect();
    if (1..fixed.len()).any(|i| fixed[..i].contains(&fixed[i])) {
        return Err(Failure(Exit::Input, format!("ports must be distinct: {ports:?}")));
    }
    let canvas = config.canvas.clone();
    let engine = engine::start(config, Scene::default()).map_err(|e| match e {
        EngineError::PortInUse(addr) => Failure(Exit::Resource, format!("port in use: {addr}")),
        EngineError::Io(err) => Failure(Exit::Resource, err.to_string()),
    })?;

    let (tx, rx) = mpsc::channel();
    ctrlc::set_handler(move || {
        let _ = tx.send(());
    })
    .map_err(|e| Failure(Exit::Resource, format!("cannot install signal handler: {e}")))?;

    let (osc, http) = (engine.osc_addr(), engine.http_addr());
    match format {
        Format::Text => println!("osc udp://{osc}\nfeed ws://{http}/state"),
        Format::Machine => println!("{}", json!({"osc": osc.to_string(), "http": http.to_string()})),
    }
    let _ = std::io::stdout().flush();

    let _ = rx.recv();
    let stats = engine.stats();
    let snapshot = engine.shutdown();
    let path = out.join("scene_exit.svg");
    std::fs::create_dir_all(out)
        .and_then(|()| std::fs::write(&path, render::render_svg(&snapshot, &canvas)))
        .map_err(|e| Failure(Exit::Resource, format!("cannot write {}: {e}", path.display())))?;
    match format {
        Format::Text => println!(
            "applied {} messages ({} unmatched, {} rejected, {} undecodable); wrote {}",
            stats.applied,
            stats.no_match,
            stats.errors,
            stats.decode_errors,
            path.display()
        ),
        Format::Machine => println!(
            "{}",
            json!({
                "applied": stats.applied,
                "no_match": stats.no_match,
                "errors": stats.errors,
                "decode_errors": stats.decode_errors,
                "snapshot": path.display().to_string(),
            })
        ),
    }
    Ok(())
}

fn render_cmd(
    script: &Path,
    fps: u32,
    out: &Path,
    seed: Option<u64>,
    duration: Option<&str>,
    canvas: Canvas,
    format: Format,
) -> CmdResult {
    let timeline = load_timeline(script, seed)?;
    let duration = duration
        .map(|d| {
            rational::parse_decimal(d)
                .filter(|r: &Rational| *r >= Rational::from_integer(0))
                .ok_or_else(|| Failure(Exit::Input, format!("bad duration {d:?}")))
        })
        .transpose()?;
    let spec = FrameSpec::new(canvas.0, canvas.1);
    let files =
        render::render_sequence(&timeline, &mut Scene::default(), fps, duration, &spec, out).map_err(|e| match e {
            RenderError::BadFrameRate | RenderError::BadDuration => Failure(Exit::Input, e.to_string()),
            RenderError::Io { .. } => Failure(Exit::Resource, e.to_string()),
        })?;
    match format {
        Format::Text => println!("rendered {} frames to {}", files.len(), out.display()),
        Format::Machine => println!(
            "{}",
            json!({"frames": files.len(), "out": out.display().to_string(), "fps": fps})
        ),
    }
    Ok(())
}

fn parse_cmd(file: &Path, format: Format) -> CmdResult {
    let bytes =
        std::fs::read(file).map_err(|e| Failure(Exit::Input, format!("cannot read {}: {e}", file.display())))?;
    let ast = gmn::parse_bytes(&bytes).map_err(|e| Failure(Exit::Input, format!("{}:{e}", file.display())))?;
    match format {
        Format::Machine => println!("{}", serde_json::to_string(&ast).expect("scores serialize")),
        Format::Text => {
            println!(
                "{}: {} voices, duration {}",
                file.display(),
                ast.voices.len(),
                rational::format(&ast.total_duration())
            );
            for (i, voice) in ast.voices.iter().enumerate() {
                let tags: Vec<String> = voice
                    .tags
                    .iter()
                    .filter(|(_, t)| t.name != TagName::Other("bar".into()))
                    .map(|(at, t)| match &t.argument {
                        Some(arg) => format!("{}@{at}=\"{arg}\"", t.name.as_str()),
                        None => format!("{}@{at}", t.name.as_str()),
                    })
                    .collect();
                println!(
                    "  voice {}: {} events, duration {}, tags: {}",
                    i + 1,
                    voice.events.len(),
                    rational::format(&gmn::total_duration(voice)),
                    if tags.is_empty() { "-".into() } else { tags.join(" ") }
                );
            }
        }
    }
    Ok(())
}

fn play_cmd(script: &Path, target: &str, dry_run: bool, offline: bool, seed: Option<u64>, format: Format) -> CmdResult {
    let timeline = load_timeline(script, seed)?;
    if dry_run {
        for timed in timeline.all_messages() {
            match format {
                Format::Text => println!("{} {}", rational::format(&timed.time), timed.message),
                Format::Machine => println!(
                    "{}",
                    json!({"time": rational::format(&timed.time), "message": timed.message.to_string()})
                ),
            }
        }
        return Ok(());
    }
    let network = |e: PlayError| match e {
        PlayError::NetworkUnreachable { .. } => Failure(Exit::Network, e.to_string()),
        PlayError::Encode { .. } => Failure(Exit::Input, e.to_string()),
    };
    let mut sink = UdpSink::connect(target).map_err(network)?;
    let mode = if offline { PlayMode::Offline } else { PlayMode::RealTime };
    let report = sequencer::play(&timeline, &mut sink, mode).map_err(network)?;
    let lateness_ms = report.max_lateness.as_secs_f64() * 1000.0;
    match format {
        Format::Text => println!(
            "sent {} messages to {target}; max lateness {lateness_ms:.3} ms",
            report.sent
        ),
        Format::Machine => println!(
            "{}",
            json!({"sent": report.sent, "target": target, "max_lateness_ms": lateness_ms})
        ),
    }
    Ok(())
}
