use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::Sender;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant, SystemTime};

use thiserror::Error;

use super::{decode, OscMessage};

/// Largest datagram we accept.
const MAX_DATAGRAM: usize = 65_536;
const POLL_INTERVAL: Duration = Duration::from_millis(50);

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("port in use: {0}")]
    PortInUse(SocketAddr),
    #[error("cannot bind: {0}")]
    Io(#[from] io::Error),
}

/// A decoded message as it leaves the listener.
#[derive(Debug, Clone)]
pub struct Incoming {
    pub message: OscMessage,
    pub from: SocketAddr,
    pub arrival: Instant,
    /// Dispatch time requested by an enclosing bundle; `None` means now.
    pub due: Option<SystemTime>,
}

pub struct ListenerHandle {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    decode_errors: Arc<AtomicU64>,
    received: Arc<AtomicU64>,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl ListenerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn decode_errors(&self) -> u64 {
        self.decode_errors.load(Ordering::Relaxed)
    }

    /// Datagrams received, valid or not.
    pub fn datagrams(&self) -> u64 {
        self.received.load(Ordering::Relaxed)
    }

    /// Stops the listener and waits for its thread. Safe to call repeatedly.
    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::SeqCst);
        let thread = self.thread.lock().map(|mut t| t.take()).unwrap_or(None);
        if let Some(thread) = thread {
            let _ = thread.join();
        }
    }
}

impl Drop for ListenerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds a UDP socket and forwards every decoded message to `sink` in
/// arrival order. Bundles are flattened; each message carries its bundle's
/// timetag as `due`. Undecodable datagrams are counted and logged.
pub fn serve(addr: impl ToSocketAddrs, sink: Sender<Incoming>) -> Result<ListenerHandle, ServeError> {
    let addr = addr
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address"))?;
    let socket = UdpSocket::bind(addr).map_err(|err| match err.kind() {
        io::ErrorKind::AddrInUse => ServeError::PortInUse(addr),
        _ => ServeError::Io(err),
    })?;
    socket.set_read_timeout(Some(POLL_INTERVAL))?;
    let local_addr = socket.local_addr()?;

    let stop = Arc::new(AtomicBool::new(false));
    let decode_errors = Arc::new(AtomicU64::new(0));
    let received = Arc::new(AtomicU64::new(0));
    let thread = {
        let stop = Arc::clone(&stop);
        let decode_errors = Arc::clone(&decode_errors);
        let received = Arc::clone(&received);
        std::thread::Builder::new()
            .name("osc-listener".into())
            .spawn(move || listen(socket, sink, stop, decode_errors, received))?
    };
    log::info!("OSC listening on {local_addr}");
    Ok(ListenerHandle {
        local_addr,
        stop,
        decode_errors,
        received,
        thread: Mutex::new(Some(thread)),
    })
}

fn listen(
    socket: UdpSocket,
    sink: Sender<Incoming>,
    stop: Arc<AtomicBool>,
    decode_errors: Arc<AtomicU64>,
    received: Arc<AtomicU64>,
) {
    let mut buf = vec![0u8; MAX_DATAGRAM];
    while !stop.load(Ordering::SeqCst) {
        let (len, from) = match socket.recv_from(&mut buf) {
            Ok(r) => r,
            Err(err) if matches!(err.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
            Err(err) => {
                // ICMP errors from earlier sends surface here on some platforms.
                log::debug!("recv error: {err}");
                continue;
            }
        };
        let arrival = Instant::now();
        received.fetch_add(1, Ordering::Relaxed);
        let packet = match decode(&buf[..len]) {
            Ok(p) => p,
            Err(err) => {
                decode_errors.fetch_add(1, Ordering::Relaxed);
                log::warn!("dropping datagram from {from}: {err} ({})", hex_preview(&buf[..len]));
                continue;
            }
        };
        for (timetag, message) in packet.flatten() {
            let incoming = Incoming {
                message: message.clone(),
                from,
                arrival,
                due: timetag.to_system_time(),
            };
            if sink.send(incoming).is_err() {
                return;
            }
        }
    }
}

fn hex_preview(bytes: &[u8]) -> String {
    let shown: Vec<String> = bytes.iter().take(32).map(|b| format!("{b:02x}")).collect();
    let ellipsis = if bytes.len() > 32 { " …" } else { "" };
    format!("{}{ellipsis}", shown.join(" "))
}
