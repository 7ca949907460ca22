//! Live mode: OSC listener → ordered queue → single engine loop that owns
//! the scene, plus a WebSocket `/state` endpoint broadcasting scene-state
//! documents at most once per frame interval.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant, SystemTime};

use serde_json::Value;
use thiserror::Error;
use tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tungstenite::Message;

use crate::osc::{self, encode, Incoming, ListenerHandle, OscMessage, OscPacket, ServeError};
use crate::rational::Rational;
use crate::render::{strip_known_geometry, FrameSpec, StateFeed};
use crate::scene::{Effect, Scene, SceneError, SceneSnapshot};

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub osc_addr: SocketAddr,
    /// `get` replies go to the sender's IP on this port.
    pub reply_port: u16,
    pub http_addr: SocketAddr,
    pub frame_interval: Duration,
    pub canvas: FrameSpec,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let any = IpAddr::V4(Ipv4Addr::UNSPECIFIED);
        EngineConfig {
            osc_addr: SocketAddr::new(any, 7000),
            reply_port: 7001,
            http_addr: SocketAddr::new(any, 8080),
            frame_interval: Duration::from_millis(20),
            canvas: FrameSpec::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("port in use: {0}")]
    PortInUse(SocketAddr),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<ServeError> for EngineError {
    fn from(err: ServeError) -> Self {
        match err {
            ServeError::PortInUse(addr) => EngineError::PortInUse(addr),
            ServeError::Io(e) => EngineError::Io(e),
        }
    }
}

#[derive(Debug, Default)]
struct Counters {
    applied: AtomicU64,
    no_match: AtomicU64,
    errors: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Stats {
    /// Messages that changed the scene or produced a reply.
    pub applied: u64,
    pub no_match: u64,
    /// Other rejected messages.
    pub errors: u64,
    pub decode_errors: u64,
}

/// Latest feed document, shared with WebSocket clients.
#[derive(Default)]
struct Broadcast {
    latest: Mutex<Option<(u64, Arc<Value>)>>,
    changed: Condvar,
}

impl Broadcast {
    fn publish(&self, revision: u64, doc: Value) {
        if let Ok(mut slot) = self.latest.lock() {
            *slot = Some((revision, Arc::new(doc)));
        }
        self.changed.notify_all();
    }

    /// Waits up to `timeout` for a document newer than `seen`.
    fn next_after(&self, seen: u64, timeout: Duration) -> Option<(u64, Arc<Value>)> {
        let slot = self.latest.lock().ok()?;
        let (slot, _) = self
            .changed
            .wait_timeout_while(slot, timeout, |s| s.as_ref().is_none_or(|(rev, _)| *rev <= seen))
            .ok()?;
        slot.as_ref().filter(|(rev, _)| *rev > seen).cloned()
    }
}

pub struct EngineHandle {
    osc_addr: SocketAddr,
    http_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    listener: ListenerHandle,
    queue: Sender<Incoming>,
    counters: Arc<Counters>,
    latest: Arc<Mutex<SceneSnapshot>>,
    threads: Vec<JoinHandle<()>>,
}

impl EngineHandle {
    pub fn osc_addr(&self) -> SocketAddr {
        self.osc_addr
    }

    pub fn http_addr(&self) -> SocketAddr {
        self.http_addr
    }

    pub fn stats(&self) -> Stats {
        Stats {
            applied: self.counters.applied.load(Ordering::Relaxed),
            no_match: self.counters.no_match.load(Ordering::Relaxed),
            errors: self.counters.errors.load(Ordering::Relaxed),
            decode_errors: self.listener.decode_errors(),
        }
    }

    /// State as of the last engine frame.
    pub fn snapshot(&self) -> SceneSnapshot {
        self.latest
            .lock()
            .map(|s| s.clone())
            .unwrap_or_else(|p| p.into_inner().clone())
    }

    /// Queues a message from inside the process, behind anything already
    /// received.
    pub fn submit(&self, message: OscMessage) {
        let _ = self.queue.send(Incoming {
            message,
            from: SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), 0),
            arrival: Instant::now(),
            due: None,
        });
    }

    /// Stops every thread and returns the final scene.
    pub fn shutdown(mut self) -> SceneSnapshot {
        self.stop.store(true, Ordering::SeqCst);
        self.listener.shutdown();
        for thread in self.threads.drain(..) {
            let _ = thread.join();
        }
        self.snapshot()
    }
}

impl Drop for EngineHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}

/// Binds both ports and starts the listener, engine loop and feed server.
pub fn start(config: EngineConfig, scene: Scene) -> Result<EngineHandle, EngineError> {
    let http = TcpListener::bind(config.http_addr).map_err(|err| match err.kind() {
        io::ErrorKind::AddrInUse => EngineError::PortInUse(config.http_addr),
        _ => EngineError::Io(err),
    })?;
    let http_addr = http.local_addr()?;
    let (tx, rx) = mpsc::channel();
    let listener = osc::serve(config.osc_addr, tx.clone())?;
    let osc_addr = listener.local_addr();
    log::info!("state feed on ws://{http_addr}/state");

    let stop = Arc::new(AtomicBool::new(false));
    let counters = Arc::new(Counters::default());
    let latest = Arc::new(Mutex::new(scene.snapshot()));
    let broadcast = Arc::new(Broadcast::default());

    let engine = {
        let ctx = Loop {
            scene,
            queue: rx,
            stop: Arc::clone(&stop),
            counters: Arc::clone(&counters),
            latest: Arc::clone(&latest),
            broadcast: Arc::clone(&broadcast),
            feed: StateFeed::new(config.canvas.clone()),
            frame_interval: config.frame_interval,
            reply_port: config.reply_port,
            reply_socket: UdpSocket::bind(if osc_addr.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" })?,
        };
        std::thread::Builder::new()
            .name("engine".into())
            .spawn(move || ctx.run())?
    };
    let feed = {
        let stop = Arc::clone(&stop);
        http.set_nonblocking(true)?;
        std::thread::Builder::new()
            .name("state-feed".into())
            .spawn(move || accept_clients(http, broadcast, stop))?
    };

    Ok(EngineHandle {
        osc_addr,
        http_addr,
        stop,
        listener,
        queue: tx,
        counters,
        latest,
        threads: vec![engine, feed],
    })
}

struct Deferred(SystemTime, u64, Incoming);

impl PartialEq for Deferred {
    fn eq(&self, other: &Self) -> bool {
        (self.0, self.1) == (other.0, other.1)
    }
}
impl Eq for Deferred {}
impl PartialOrd for Deferred {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Deferred {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.0, self.1).cmp(&(other.0, other.1))
    }
}

struct Loop {
    scene: Scene,
    queue: Receiver<Incoming>,
    stop: Arc<AtomicBool>,
    counters: Arc<Counters>,
    latest: Arc<Mutex<SceneSnapshot>>,
    broadcast: Arc<Broadcast>,
    feed: StateFeed,
    frame_interval: Duration,
    reply_port: u16,
    reply_socket: UdpSocket,
}

impl Loop {
    fn run(mut self) {
        let mut deferred: BinaryHeap<Reverse<Deferred>> = BinaryHeap::new();
        let mut sequence = 0u64;
        let mut last_tick = Instant::now();
        let mut next_frame = last_tick + self.frame_interval;
        let mut published: Option<u64> = None;
        while !self.stop.load(Ordering::SeqCst) {
            let wait = next_frame.saturating_duration_since(Instant::now());
            match self.queue.recv_timeout(wait) {
                Ok(incoming) => match incoming.due {
                    Some(due) if due > SystemTime::now() => {
                        sequence += 1;
                        deferred.push(Reverse(Deferred(due, sequence, incoming)));
                    }
                    _ => self.apply(&incoming),
                },
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
            let now = Instant::now();
            if now < next_frame {
                continue;
            }
            next_frame = now + self.frame_interval;

            let wall = SystemTime::now();
            while deferred.peek().is_some_and(|Reverse(d)| d.0 <= wall) {
                let Reverse(Deferred(_, _, incoming)) = deferred.pop().expect("peeked");
                self.apply(&incoming);
            }
            let micros = i64::try_from(now.duration_since(last_tick).as_micros()).unwrap_or(i64::MAX);
            last_tick = now;
            let _ = self.scene.tick(Rational::new(micros, 1_000_000));

            if published != Some(self.scene.revision()) {
                published = Some(self.scene.revision());
                let snapshot = self.scene.snapshot();
                let doc = self.feed.document(&snapshot);
                self.broadcast.publish(self.feed.revision(), doc);
                if let Ok(mut slot) = self.latest.lock() {
                    *slot = snapshot;
                }
            }
        }
        if let Ok(mut slot) = self.latest.lock() {
            *slot = self.scene.snapshot();
        }
    }

    fn apply(&mut self, incoming: &Incoming) {
        let outcome = self.scene.dispatch(&OscPacket::Message(incoming.message.clone()));
        self.counters
            .applied
            .fetch_add(outcome.applied as u64, Ordering::Relaxed);
        for err in &outcome.errors {
            let counter = match err {
                SceneError::NoMatch(_) => &self.counters.no_match,
                _ => &self.counters.errors,
            };
            counter.fetch_add(1, Ordering::Relaxed);
        }
        for effect in outcome.effects {
            if let Effect::Reply(reply) = effect {
                let to = SocketAddr::new(incoming.from.ip(), self.reply_port);
                match encode(&OscPacket::Message(reply)) {
                    Ok(bytes) => {
                        if let Err(err) = self.reply_socket.send_to(&bytes, to) {
                            log::warn!("reply to {to} failed: {err}");
                        }
                    }
                    Err(err) => log::warn!("cannot encode reply: {err}"),
                }
            }
        }
    }
}

fn accept_clients(listener: TcpListener, broadcast: Arc<Broadcast>, stop: Arc<AtomicBool>) {
    let mut clients = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let broadcast = Arc::clone(&broadcast);
                let stop = Arc::clone(&stop);
                clients.push(std::thread::spawn(move || {
                    if let Err(err) = serve_client(stream, &broadcast, &stop) {
                        log::debug!("feed client {peer} closed: {err}");
                    }
                }));
            }
            Err(err) if err.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(20)),
            Err(err) => log::warn!("feed accept failed: {err}"),
        }
        clients.retain(|c: &JoinHandle<()>| !c.is_finished());
    }
    for client in clients {
        let _ = client.join();
    }
}

fn serve_client(stream: TcpStream, broadcast: &Broadcast, stop: &AtomicBool) -> Result<(), Box<dyn std::error::Error>> {
    stream.set_nonblocking(false)?;
    // The error type is fixed by tungstenite's handshake callback.
    #[allow(clippy::result_large_err)]
    let check_path = |req: &Request, resp: Response| -> Result<Response, ErrorResponse> {
        if req.uri().path() == "/state" {
            Ok(resp)
        } else {
            let mut not_found = ErrorResponse::new(Some("only /state is served".into()));
            *not_found.status_mut() = tungstenite::http::StatusCode::NOT_FOUND;
            Err(not_found)
        }
    };
    let mut socket = tungstenite::accept_hdr(stream, check_path)?;
    socket.get_ref().set_read_timeout(Some(Duration::from_millis(1)))?;
    let mut known = HashSet::new();
    let mut seen = 0;
    while !stop.load(Ordering::SeqCst) {
        // Drain pings and closes without blocking.
        match socket.read() {
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(err) => return Err(err.into()),
        }
        if let Some((revision, doc)) = broadcast.next_after(seen, Duration::from_millis(50)) {
            seen = revision;
            let mut doc = (*doc).clone();
            strip_known_geometry(&mut doc, &mut known);
            socket.send(Message::text(doc.to_string()))?;
        }
    }
    let _ = socket.close(None);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::osc::OscArg;

    fn local() -> EngineConfig {
        let lo = IpAddr::V4(Ipv4Addr::LOCALHOST);
        EngineConfig {
            osc_addr: SocketAddr::new(lo, 0),
            http_addr: SocketAddr::new(lo, 0),
            reply_port: 0,
            ..EngineConfig::default()
        }
    }

    fn wait_for(mut cond: impl FnMut() -> bool) -> bool {
        let deadline = Instant::now() + Duration::from_secs(5);
        while Instant::now() < deadline {
            if cond() {
                return true;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        false
    }

    #[test]
    fn udp_messages_reach_the_scene() {
        let engine = start(local(), Scene::default()).unwrap();
        let client = UdpSocket::bind("127.0.0.1:0").unwrap();
        for msg in [
            OscMessage::new("/scene/frag1", vec!["set".into(), "gmn".into(), "[c d]".into()]),
            OscMessage::new("/scene/frag1", vec!["alpha".into(), OscArg::Int(42)]),
            OscMessage::new("/scene/ghost", vec!["alpha".into(), OscArg::Int(1)]),
        ] {
            client
                .send_to(&encode(&msg.into()).unwrap(), engine.osc_addr())
                .unwrap();
        }
        assert!(wait_for(|| engine.stats().no_match == 1));
        assert!(wait_for(|| engine
            .snapshot()
            .node("/scene/frag1")
            .is_some_and(|n| n.attrs.alpha == 42)));
        assert_eq!(engine.stats().applied, 2);
        let last = engine.shutdown();
        assert_eq!(last.node("/scene/frag1").unwrap().attrs.alpha, 42);
    }

    #[test]
    fn get_replies_go_to_reply_port() {
        let replies = UdpSocket::bind("127.0.0.1:0").unwrap();
        replies.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        let config = EngineConfig {
            reply_port: replies.local_addr().unwrap().port(),
            ..local()
        };
        let engine = start(config, Scene::default()).unwrap();
        engine.submit(OscMessage::new(
            "/scene/t",
            vec!["set".into(), "text".into(), "hi".into()],
        ));
        let client = UdpSocket::bind("127.0.0.1:0").unwrap();
        let get = OscMessage::new("/scene/t", vec!["get".into(), "scale".into()]);
        client
            .send_to(&encode(&get.into()).unwrap(), engine.osc_addr())
            .unwrap();
        let mut buf = [0u8; 512];
        let n = replies.recv(&mut buf).unwrap();
        let reply = OscPacket::Message(OscMessage::new("/scene/t", vec!["scale".into(), OscArg::Float(1.0)]));
        assert_eq!(osc::decode(&buf[..n]).unwrap(), reply);
    }

    #[test]
    fn feed_streams_documents() {
        let engine = start(local(), Scene::default()).unwrap();
        let url = format!("ws://{}/state", engine.http_addr());
        let (mut ws, _) = tungstenite::connect(url).unwrap();
        engine.submit(OscMessage::new(
            "/scene/f",
            vec!["set".into(), "gmn".into(), "[c]".into()],
        ));
        let mut saw_node = false;
        let mut geometry_sent = 0;
        for _ in 0..20 {
            let Message::Text(text) = ws.read().unwrap() else {
                continue;
            };
            let doc: Value = serde_json::from_str(&text).unwrap();
            geometry_sent += doc["geometry"].as_object().unwrap().len();
            if doc["nodes"].as_array().unwrap().len() == 1 {
                saw_node = true;
                engine.submit(OscMessage::new("/scene/f", vec!["x".into(), OscArg::Float(0.5)]));
                if doc["nodes"][0]["attrs"]["x"] == 0.5 {
                    break;
                }
            }
        }
        assert!(saw_node);
        assert_eq!(geometry_sent, 1);

        let bad = format!("ws://{}/other", engine.http_addr());
        assert!(tungstenite::connect(bad).is_err());
    }

    #[test]
    fn occupied_port() {
        let engine = start(local(), Scene::default()).unwrap();
        let config = EngineConfig {
            osc_addr: engine.osc_addr(),
            ..local()
        };
        assert!(matches!(
            start(config, Scene::default()),
            Err(EngineError::PortInUse(_))
        ));
    }
}
