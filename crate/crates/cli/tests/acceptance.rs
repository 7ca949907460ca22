//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! viewer; exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::net::UdpSocket;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use notemotion::geom::Affine;
use notemotion::gmn::{self, TagName};
use notemotion::layout::bounding_box;
use notemotion::osc::{decode, encode, OscArg, OscBundle, OscMessage, OscPacket, Timetag};
use notemotion::render::{compose_matrix, snapshots, viewport};
use notemotion::scene::{Scene, SceneSnapshot};
use notemotion::sequencer::{load_script, Timeline};
use notemotion::timemodel::{phase_offset, Transport};
use notemotion::Rational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

type Check = Result<String, String>;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_notemotion")
}

fn demo(name: &str) -> PathBuf {
    root().join("demos").join(format!("{name}.nms"))
}

fn timeline(name: &str) -> Timeline {
    load_script(&fs::read_to_string(demo(name)).unwrap()).unwrap()
}

fn ensure(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, format!("took {took:.2?}, limit {limit:?}"))
}

// ---- SVG reading

#[derive(Debug, Clone)]
struct Group {
    opacity: f64,
    filter: Option<String>,
    matrix: Affine,
    color: String,
}

struct Frame {
    groups: BTreeMap<String, Group>,
    filters: BTreeMap<String, String>,
}

fn read_frame(path: &Path) -> Frame {
    let text = fs::read_to_string(path).unwrap();
    let group = Regex::new(
        r#"<g data-address="([^"]+)" data-kind="gmn-fragment" opacity="([^"]+)"(?: filter="url\(#([^)]+)\)")?>\n<g transform="matrix\(([^)]+)\)" fill="([^"]+)""#,
    )
    .unwrap();
    let filter = Regex::new(r#"<filter id="([^"]+)"[^>]*>(.*?)</filter>"#).unwrap();
    let groups = group
        .captures_iter(&text)
        .map(|c| {
            let m: Vec<f64> = c[4].split(' ').map(|v| v.parse().unwrap()).collect();
            (
                c[1].to_owned(),
                Group {
                    opacity: c[2].parse().unwrap(),
                    filter: c.get(3).map(|f| f.as_str().to_owned()),
                    matrix: Affine {
                        a: m[0],
                        b: m[1],
                        c: m[2],
                        d: m[3],
                        e: m[4],
                        f: m[5],
                    },
                    color: c[5].to_owned(),
                },
            )
        })
        .collect();
    let filters = filter
        .captures_iter(&text)
        .map(|c| (c[1].to_owned(), c[2].to_owned()))
        .collect();
    Frame { groups, filters }
}

fn render(name: &str, out: &Path) -> Result<Vec<PathBuf>, String> {
    let status = Command::new(bin())
        .args(["render", demo(name).to_str().unwrap(), "-o", out.to_str().unwrap()])
        .stdout(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), format!("render {name} exited with {status}"))?;
    let mut files: Vec<PathBuf> = fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    Ok(files)
}

fn render_frames(name: &str) -> Result<Vec<Frame>, String> {
    let dir = tempfile::tempdir().unwrap();
    Ok(render(name, dir.path())?.iter().map(|p| read_frame(p)).collect())
}

fn group<'a>(frame: &'a Frame, address: &str) -> Result<&'a Group, String> {
    frame
        .groups
        .get(address)
        .ok_or_else(|| format!("{address} missing from frame"))
}

// ---- OSC codec

fn random_message(rng: &mut ChaCha8Rng) -> OscMessage {
    let segments = rng.random_range(1..4);
    let mut address = String::new();
    for _ in 0..segments {
        address.push('/');
        for _ in 0..rng.random_range(1..10) {
            address.push(char::from(rng.random_range(b'a'..=b'z')));
        }
    }
    let args = (0..rng.random_range(0..6))
        .map(|_| match rng.random_range(0..4) {
            0 => OscArg::Int(rng.random()),
            1 => OscArg::Float(f32::from_bits(rng.random())),
            2 => OscArg::Str(
                (0..rng.random_range(0..20))
                    .map(|_| char::from(rng.random_range(0x20u8..0x7f)))
                    .collect(),
            ),
            _ => OscArg::Blob((0..rng.random_range(0..24)).map(|_| rng.random()).collect()),
        })
        .collect();
    OscMessage::new(address, args)
}

fn osc_codec() -> Check {
    let start = Instant::now();
    let golden = [
        (
            OscMessage::new("/x", vec![OscArg::Int(42)]),
            vec![0x2F, 0x78, 0, 0, 0x2C, 0x69, 0, 0, 0, 0, 0, 0x2A],
        ),
        (
            OscMessage::new("/f1", vec![OscArg::Float(0.5)]),
            vec![0x2F, 0x66, 0x31, 0, 0x2C, 0x66, 0, 0, 0x3F, 0, 0, 0],
        ),
    ];
    for (message, bytes) in golden {
        let got = encode(&message.clone().into()).map_err(|e| e.to_string())?;
        ensure(got == bytes, format!("golden vector for {message} differs: {got:02X?}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let round_trips = 100_000;
    for i in 0..round_trips {
        let packet: OscPacket = if i % 10 == 0 {
            OscPacket::Bundle(OscBundle {
                timetag: Timetag(rng.random()),
                elements: (0..3).map(|_| random_message(&mut rng).into()).collect(),
            })
        } else {
            random_message(&mut rng).into()
        };
        let bytes = encode(&packet).map_err(|e| e.to_string())?;
        ensure(bytes.len() % 4 == 0, "unaligned encoding")?;
        let back = decode(&bytes).map_err(|e| format!("decode failed: {e}"))?;
        // Re-encoding compares floats bit for bit, NaN payloads included.
        ensure(
            encode(&back).unwrap() == bytes,
            format!("round trip {i} re-encodes differently"),
        )?;
        ensure(back == packet || has_nan(&packet), format!("round trip {i} differs"))?;
    }

    let datagrams = 1_000_000;
    let mut buf = Vec::with_capacity(64);
    let mut panics = 0;
    panic::set_hook(Box::new(|_| {}));
    for i in 0..datagrams {
        buf.clear();
        let len = rng.random_range(0..64);
        if i % 4 == 0 {
            buf.extend_from_slice(b"/a\0\0,");
        } else if i % 4 == 1 {
            buf.extend_from_slice(b"#bundle\0");
        }
        buf.extend((0..len).map(|_| rng.random::<u8>()));
        if panic::catch_unwind(|| decode(&buf)).is_err() {
            panics += 1;
        }
    }
    let _ = panic::take_hook();
    ensure(panics == 0, format!("{panics} panics decoding random datagrams"))?;
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "2 golden vectors, {round_trips} round trips, {datagrams} random datagrams, {:.2?}",
        start.elapsed()
    ))
}

fn has_nan(packet: &OscPacket) -> bool {
    packet
        .flatten()
        .iter()
        .any(|(_, m)| m.args.iter().any(|a| matches!(a, OscArg::Float(f) if f.is_nan())))
}

// ---- Parser

fn parser() -> Check {
    let start = Instant::now();
    let text = fs::read_to_string(root().join("scores/quartet.gmn")).map_err(|e| e.to_string())?;
    let ast = gmn::parse(&text).map_err(|e| e.to_string())?;
    ensure(ast.voices.len() == 4, format!("{} voices", ast.voices.len()))?;
    let has = |v: usize, name: TagName, arg: &str| {
        ast.voices[v]
            .tags_at(0)
            .any(|t| t.name == name && t.argument.as_deref() == Some(arg))
    };
    for (v, dynamic) in ["mp", "ppp", "ppp", "ff"].into_iter().enumerate() {
        ensure(
            has(v, TagName::Meter, "8/8"),
            format!("voice {} lacks meter 8/8 at 0", v + 1),
        )?;
        ensure(
            has(v, TagName::Intens, dynamic),
            format!("voice {} lacks {dynamic} at 0", v + 1),
        )?;
    }
    ensure(
        has(0, TagName::Text, "vibrato ad lib.") && has(1, TagName::Text, "vibrato ad lib."),
        "vibrato ad lib. not at 0 on voices 1 and 2",
    )?;
    ensure(has(2, TagName::Text, "pizz."), "pizz. not at 0 on voice 3")?;

    let mut corpus: Vec<PathBuf> = fs::read_dir(root().join("scores/corpus"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .collect();
    corpus.sort();
    ensure(corpus.len() == 50, format!("corpus has {} files", corpus.len()))?;
    for path in &corpus {
        let text = fs::read_to_string(path).unwrap();
        let ast = gmn::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let again = gmn::parse(&gmn::pretty(&ast)).map_err(|e| format!("{}: reprint: {e}", path.display()))?;
        ensure(ast == again, format!("{}: round trip differs", path.display()))?;
    }
    within(start, Duration::from_secs(5))?;
    Ok(format!(
        "quartet: 4 voices, tags at 0; 50-file corpus round trips, {:.2?}",
        start.elapsed()
    ))
}

// ---- Transform suite

fn fade() -> Check {
    let frames = render_frames("demo_fade")?;
    let opacities: Vec<f64> = frames
        .iter()
        .map(|f| group(f, "/scene/frag1").map(|g| g.opacity))
        .collect::<Result<_, _>>()?;
    ensure(
        opacities.windows(2).all(|w| w[0] < w[1]),
        "opacity not strictly increasing",
    )?;
    let last = *opacities.last().unwrap();
    ensure(last == 1.0, format!("final opacity {last}"))?;
    Ok(format!("{} frames, opacity {} .. {last}", frames.len(), opacities[0]))
}

fn phase() -> Check {
    let tl = timeline("demo_phase");
    let snaps = snapshots(&tl, &mut Scene::default(), 25, None).map_err(|e| e.to_string())?;
    let last = snaps.last().unwrap();
    let t = last.transport();
    let (a, b) = (t.cursor_date("/scene/cur2"), t.cursor_date("/scene/cur1"));
    let offset = a - b;
    ensure(
        t.cursor_tempo("/scene/cur1") == Rational::from_integer(60)
            && t.cursor_tempo("/scene/cur2") == Rational::from_integer(90),
        "cursor tempi are not 60/90",
    )?;
    ensure(offset == Rational::new(1, 2), format!("offset {offset}"))?;
    Ok(format!("after {}s: dates {b} and {a}, offset {offset}", tl.duration()))
}

fn blur() -> Check {
    let frames = render_frames("demo_blur")?;
    let last = frames.last().unwrap();
    ensure(last.groups.len() == 4, format!("{} fragments", last.groups.len()))?;
    let blurred = last
        .groups
        .values()
        .filter(|g| {
            g.filter
                .as_ref()
                .and_then(|id| last.filters.get(id))
                .is_some_and(|body| body.contains("feGaussianBlur"))
        })
        .count();
    ensure(blurred == 3, format!("{blurred} of 4 blurred"))?;
    Ok("3 of 4 fragments carry a Gaussian blur filter".into())
}

fn color() -> Check {
    let frames = render_frames("demo_color")?;
    let last = frames.last().unwrap();
    let colors: BTreeSet<&str> = last.groups.values().map(|g| g.color.as_str()).collect();
    ensure(last.groups.len() == 4, format!("{} fragments", last.groups.len()))?;
    ensure(colors.len() == 4, format!("colors {colors:?}"))?;
    Ok(format!("colors {}", colors.into_iter().collect::<Vec<_>>().join(" ")))
}

fn scale() -> Check {
    let name = "demo_scale";
    let frames = render_frames(name)?;
    let snaps = snapshots(&timeline(name), &mut Scene::default(), 25, None).map_err(|e| e.to_string())?;
    ensure(frames.len() == snaps.len(), "frame count mismatch")?;
    let vp_scale = 400.0;
    let mut worst: f64 = 0.0;
    for (frame, snap) in frames.iter().zip(&snaps) {
        for address in ["/scene/frag1", "/scene/frag2"] {
            let node = snap.node(address).ok_or("missing node")?;
            let glyphs = &node.geometry().ok_or("no geometry")?.glyphs;
            let rendered = bounding_box(glyphs, &group(frame, address)?.matrix);
            let ratio_w = rendered.width() / (glyphs.width * vp_scale);
            let ratio_h = rendered.height() / (glyphs.height * vp_scale);
            let s = node.attrs.scale;
            worst = worst.max((ratio_w - s).abs()).max((ratio_h - s).abs());
        }
    }
    ensure(worst < 1e-6, format!("extent deviates from scale by {worst:e}"))?;
    let end = snaps.last().unwrap();
    let (s1, s2) = (
        end.node("/scene/frag1").unwrap().attrs.scale,
        end.node("/scene/frag2").unwrap().attrs.scale,
    );
    ensure(s1 == 2.0 && s2 == 0.5, format!("final scales {s1} {s2}"))?;
    Ok(format!("{} frames, worst deviation {worst:e}", frames.len()))
}

fn star() -> Check {
    let frames = render_frames("demo_star")?;
    let last = frames.last().unwrap();
    let angles: Vec<f64> = (1..=4)
        .map(|i| group(last, &format!("/scene/frag{i}")).map(|g| g.matrix.b.atan2(g.matrix.a).to_degrees()))
        .collect::<Result<_, _>>()?;
    for pair in angles.windows(2) {
        let d = (pair[1] - pair[0]).rem_euclid(360.0);
        ensure((d - 90.0).abs() < 1e-6, format!("rotation step {d}"))?;
    }
    Ok(format!(
        "angles {:?}",
        angles.iter().map(|a| a.rem_euclid(360.0).round()).collect::<Vec<_>>()
    ))
}

fn scene_box(snap: &SceneSnapshot, address: &str) -> notemotion::geom::Rect {
    let node = snap.node(address).unwrap();
    let glyphs = &node.geometry().unwrap().glyphs;
    bounding_box(glyphs, &compose_matrix(&node.attrs, glyphs.center(), &Affine::IDENTITY))
}

fn overlap() -> Check {
    let tl = timeline("demo_overlap");
    let fps: u32 = 25;
    let snaps = snapshots(&tl, &mut Scene::default(), fps, None).map_err(|e| e.to_string())?;
    let overlapping: Vec<bool> = snaps
        .iter()
        .map(|s| {
            scene_box(s, "/scene/frag1")
                .intersection(&scene_box(s, "/scene/frag2"))
                .is_some()
        })
        .collect();
    ensure(!overlapping[0], "boxes overlap from the start")?;
    ensure(*overlapping.last().unwrap(), "boxes never overlap")?;
    let first = overlapping.iter().position(|o| *o).unwrap();
    ensure(overlapping[first..].iter().all(|o| *o), "overlap is not sustained")?;
    let time = Rational::from_integer(first as i64 + 1) / Rational::from_integer(i64::from(fps));
    ensure(
        time > Rational::new(7, 2) && time <= Rational::new(7, 2) + Rational::new(1, 25),
        format!("overlap begins at {time}s"),
    )?;

    // The rendered matrices must agree with the box math.
    let frames = render_frames("demo_overlap")?;
    let vp = viewport(1280, 800);
    for (frame, snap) in frames.iter().zip(&snaps) {
        for address in ["/scene/frag1", "/scene/frag2"] {
            let node = snap.node(address).unwrap();
            let expected = compose_matrix(&node.attrs, node.geometry().unwrap().glyphs.center(), &vp);
            let got = group(frame, address)?.matrix;
            ensure(
                got.max_abs_diff(&expected) < 1e-9,
                "rendered matrix differs from box math",
            )?;
        }
    }
    Ok(format!(
        "boxes first intersect at {}s",
        notemotion::rational::format(&time)
    ))
}

fn transform_suite() -> Vec<(&'static str, Check)> {
    let start = Instant::now();
    let mut results = vec![
        ("transform/fade", fade()),
        ("transform/phase", phase()),
        ("transform/blur", blur()),
        ("transform/color", color()),
        ("transform/scale", scale()),
        ("transform/star", star()),
        ("transform/overlap", overlap()),
    ];
    results.push((
        "transform/runtime",
        within(start, Duration::from_secs(20)).map(|()| format!("{:.2?}", start.elapsed())),
    ));
    results
}

// ---- Determinism

fn determinism() -> Check {
    let mut demos: Vec<String> = fs::read_dir(root().join("demos"))
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "nms").then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    demos.sort();
    let mut total = 0;
    for name in &demos {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let fa = render(name, a.path())?;
        let fb = render(name, b.path())?;
        ensure(
            fa.len() == fb.len() && !fa.is_empty(),
            format!("{name}: frame counts differ"),
        )?;
        for (x, y) in fa.iter().zip(&fb) {
            ensure(x.file_name() == y.file_name(), format!("{name}: frame names differ"))?;
            ensure(
                fs::read(x).unwrap() == fs::read(y).unwrap(),
                format!("{name}: {} differs", x.display()),
            )?;
        }
        total += fa.len();
    }
    Ok(format!(
        "{} demos, {total} frames identical across two renders",
        demos.len()
    ))
}

// ---- Time model

fn time_model() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let checks = 10_000;
    for _ in 0..checks {
        let tempo = Rational::new(rng.random_range(1..1000), rng.random_range(1..10));
        let a = Rational::new(rng.random_range(0..10_000), rng.random_range(1..1000));
        let b = Rational::new(rng.random_range(0..10_000), rng.random_range(1..1000));
        let mut split = Transport::default();
        split.set_tempo(tempo).unwrap();
        split.set_cursor_tempo("/scene/c", tempo * Rational::new(3, 2)).unwrap();
        split.start();
        let mut whole = split.clone();
        split.tick(a).unwrap();
        split.tick(b).unwrap();
        whole.tick(a + b).unwrap();
        ensure(
            split == whole,
            format!("tick({a}) then tick({b}) differs from tick({}) at tempo {tempo}", a + b),
        )?;
    }

    let step = Rational::new(1, 1000);
    let tempi = [(90, 60), (60, 90), (75, 75), (133, 47)];
    for (ta, tb) in tempi {
        let (ta, tb) = (Rational::from_integer(ta), Rational::from_integer(tb));
        let mut t = Transport::default();
        t.set_cursor_tempo("/scene/a", ta).unwrap();
        t.set_cursor_tempo("/scene/b", tb).unwrap();
        t.start();
        for ms in 1..=4000i64 {
            t.tick(step).unwrap();
            let brute = t.cursor_date("/scene/a") - t.cursor_date("/scene/b");
            let formula = phase_offset(ta, tb, step * Rational::from_integer(ms));
            ensure(
                brute == formula,
                format!("at {ms} ms: ticked {brute}, formula {formula}"),
            )?;
        }
    }
    Ok(format!(
        "{checks} additivity checks; phase offset exact over 4000 1 ms steps for {} tempo pairs",
        tempi.len()
    ))
}

// ---- End to end

struct Child(std::process::Child);

impl Drop for Child {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn interrupt(child: &std::process::Child) {
    let _ = Command::new("kill").args(["-INT", &child.id().to_string()]).status();
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let out = tempfile::tempdir().unwrap();
    let replies = UdpSocket::bind("127.0.0.1:0").unwrap();
    replies.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
    let reply_port = replies.local_addr().unwrap().port().to_string();
    let mut serve = Child(
        Command::new(bin())
            .args([
                "--format",
                "machine",
                "serve",
                "--bind",
                "127.0.0.1",
                "--port",
                "0",
                "--http-port",
                "0",
            ])
            .args(["--reply-port", &reply_port, "--out", out.path().to_str().unwrap()])
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| e.to_string())?,
    );
    let mut stdout = BufReader::new(serve.0.stdout.take().unwrap());
    let mut line = String::new();
    stdout.read_line(&mut line).map_err(|e| e.to_string())?;
    let banner: serde_json::Value = serde_json::from_str(&line).map_err(|e| format!("banner {line:?}: {e}"))?;
    let osc = banner["osc"].as_str().ok_or("no osc address")?.to_owned();

    let expected = Command::new(bin())
        .args(["play", "--dry-run", demo("demo_fade").to_str().unwrap()])
        .output()
        .map_err(|e| e.to_string())?
        .stdout
        .lines()
        .count();

    let play = Command::new(bin())
        .args(["play", demo("demo_fade").to_str().unwrap(), "--target", &osc])
        .stdout(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    ensure(play.success(), format!("play exited with {play}"))?;
    std::thread::sleep(Duration::from_millis(100));

    let query = encode(&OscMessage::new("/scene/frag1", vec!["get".into(), "alpha".into()]).into()).unwrap();
    replies.send_to(&query, &osc).map_err(|e| e.to_string())?;
    let mut buf = [0u8; 1024];
    let (n, _) = replies.recv_from(&mut buf).map_err(|e| format!("no reply: {e}"))?;
    let reply = decode(&buf[..n]).map_err(|e| e.to_string())?;
    let alpha = match &reply {
        OscPacket::Message(m) if m.args.first().and_then(OscArg::as_str) == Some("alpha") => m.args.get(1).cloned(),
        _ => None,
    };

    interrupt(&serve.0);
    let mut rest = String::new();
    stdout.read_to_string(&mut rest).map_err(|e| e.to_string())?;
    let status = serve.0.wait().map_err(|e| e.to_string())?;
    ensure(status.success(), format!("serve exited with {status}"))?;
    let stats: serde_json::Value = serde_json::from_str(rest.trim()).map_err(|e| format!("stats {rest:?}: {e}"))?;
    // The `get` query is counted too.
    let applied = stats["applied"].as_u64().unwrap_or(0).saturating_sub(1) as usize;

    ensure(alpha == Some(OscArg::Int(255)), format!("final alpha {alpha:?}"))?;
    ensure(
        applied >= 490 && applied <= expected,
        format!("{applied} of {expected} applied"),
    )?;
    let svg = fs::read_to_string(out.path().join("scene_exit.svg")).map_err(|e| e.to_string())?;
    ensure(
        svg.contains(r#"data-address="/scene/frag1" data-kind="gmn-fragment" opacity="1""#),
        "exit snapshot not opaque",
    )?;
    within(start, Duration::from_secs(15))?;
    Ok(format!(
        "alpha 255, {applied} of {expected} messages applied, {:.2?}",
        start.elapsed()
    ))
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |name: &str| filter.is_empty() || filter.iter().any(|f| name.contains(f.as_str()));

    let mut results: Vec<(&str, Check)> = Vec::new();
    if wanted("osc") {
        results.push(("osc codec", osc_codec()));
    }
    if wanted("parser") {
        results.push(("parser", parser()));
    }
    if wanted("transform") {
        results.extend(transform_suite());
    }
    if wanted("determinism") {
        results.push(("determinism", determinism()));
    }
    if wanted("time") {
        results.push(("time model", time_model()));
    }
    if wanted("e2e") {
        results.push(("e2e loopback", end_to_end()));
    }

    let mut failed = 0;
    for (name, result) in &results {
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason}");
            }
        }
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
