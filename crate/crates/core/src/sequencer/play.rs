use std::io;
use std::net::{ToSocketAddrs, UdpSocket};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::Timeline;
use crate::osc::{encode, OscMessage, OscPacket};
use crate::rational;
use crate::scene::Scene;

#[derive(Debug, Error)]
pub enum PlayError {
    #[error("network unreachable: {target}: {source}")]
    NetworkUnreachable {
        target: String,
        #[source]
        source: io::Error,
    },
    #[error("cannot encode {message}: {reason}")]
    Encode { message: String, reason: String },
}

/// Where played messages go.
pub trait Sink {
    fn send(&mut self, message: &OscMessage) -> Result<(), PlayError>;
}

/// Collects messages; used for dry runs.
impl Sink for Vec<OscMessage> {
    fn send(&mut self, message: &OscMessage) -> Result<(), PlayError> {
        self.push(message.clone());
        Ok(())
    }
}

/// Applies messages straight to a local scene.
pub struct SceneSink<'a>(pub &'a mut Scene);

impl Sink for SceneSink<'_> {
    fn send(&mut self, message: &OscMessage) -> Result<(), PlayError> {
        self.0.dispatch(&OscPacket::Message(message.clone()));
        Ok(())
    }
}

/// Sends each message as its own OSC datagram.
pub struct UdpSink {
    socket: UdpSocket,
    target: String,
}

impl UdpSink {
    pub fn connect(target: &str) -> Result<UdpSink, PlayError> {
        let unreachable = |source| PlayError::NetworkUnreachable {
            target: target.to_owned(),
            source,
        };
        let addr = target
            .to_socket_addrs()
            .map_err(unreachable)?
            .next()
            .ok_or_else(|| unreachable(io::Error::new(io::ErrorKind::NotFound, "no address")))?;
        let local = if addr.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" };
        let socket = UdpSocket::bind(local).map_err(unreachable)?;
        socket.connect(addr).map_err(unreachable)?;
        Ok(UdpSink {
            socket,
            target: target.to_owned(),
        })
    }
}

impl Sink for UdpSink {
    fn send(&mut self, message: &OscMessage) -> Result<(), PlayError> {
        let bytes = encode(&OscPacket::Message(message.clone())).map_err(|e| PlayError::Encode {
            message: message.to_string(),
            reason: e.to_string(),
        })?;
        self.socket
            .send(&bytes)
            .map_err(|source| PlayError::NetworkUnreachable {
                target: self.target.clone(),
                source,
            })?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlayMode {
    /// Each message waits for its wall-clock time.
    RealTime,
    /// As fast as possible, in timeline order.
    Offline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PlayReport {
    pub sent: usize,
    /// Worst delay past a message's scheduled time; zero offline.
    pub max_lateness: Duration,
}

/// Streams the whole timeline into `sink`. Stops at the first send failure.
pub fn play(timeline: &Timeline, sink: &mut dyn Sink, mode: PlayMode) -> Result<PlayReport, PlayError> {
    let mut report = PlayReport::default();
    let origin = Instant::now();
    for timed in timeline.all_messages() {
        if mode == PlayMode::RealTime {
            let due = origin + Duration::from_secs_f64(rational::to_f64(&timed.time).max(0.0));
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
            report.max_lateness = report.max_lateness.max(Instant::now().saturating_duration_since(due));
        }
        sink.send(&timed.message)?;
        report.sent += 1;
    }
    Ok(report)
}
