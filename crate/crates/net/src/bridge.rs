//! Live link between a streaming session and a viewer.
//!
//! Wire format: every message is a little-endian `u32` length `L`, then `L`
//! bytes: a one-byte kind followed by the payload.
//!
//! | kind | direction | payload |
//! |------|-----------|---------|
//! | 1 frame    | out | `u32` frame index, `u32` density, density × 15-byte records (f32 x, y, z LE; u8 r, g, b) |
//! | 2 stats    | out | UTF-8 `key=value` pairs joined by `;` |
//! | 3 viewport | in  | UTF-8 `camera_distance=<in>;scale=<f>`, either key optional |

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread;
use std::time::Duration;

use dashpc_core::acuity::ViewingGeometry;
use dashpc_core::ply::{decode_record, encode_record, RECORD_SIZE};
use dashpc_core::Point;
use thiserror::Error;

pub const KIND_FRAME: u8 = 1;
pub const KIND_STATS: u8 = 2;
pub const KIND_VIEWPORT: u8 = 3;

/// Upper bound on a single message, which keeps a corrupt length prefix from
/// triggering a huge allocation.
pub const MAX_MESSAGE: usize = 256 << 20;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("message of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("empty message")]
    Empty,
    #[error("unknown message kind {0}")]
    Kind(u8),
    #[error("frame payload: {0}")]
    Frame(String),
    #[error("text payload is not UTF-8")]
    Utf8,
    #[error("viewport: {0}")]
    Viewport(String),
}

/// Inbound camera change. Absent fields keep their current value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Viewport {
    pub camera_distance: Option<f64>,
    pub scale: Option<f64>,
}

impl Viewport {
    pub fn apply(&self, g: &ViewingGeometry) -> Result<ViewingGeometry, BridgeError> {
        let next = ViewingGeometry {
            camera_distance: self.camera_distance.unwrap_or(g.camera_distance),
            scale: self.scale.unwrap_or(g.scale),
            ..*g
        };
        next.validate()
            .map_err(|e| BridgeError::Viewport(e.to_string()))?;
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Frame { index: u32, points: Vec<Point> },
    Stats(Vec<(String, String)>),
    Viewport(Viewport),
}

fn pairs_to_text(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn text_to_pairs(text: &str) -> Vec<(String, String)> {
    text.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| match p.split_once('=') {
            Some((k, v)) => (k.trim().to_string(), v.trim().to_string()),
            None => (p.trim().to_string(), String::new()),
        })
        .collect()
}

impl Message {
    pub fn kind(&self) -> u8 {
        match self {
            Message::Frame { .. } => KIND_FRAME,
            Message::Stats(_) => KIND_STATS,
            Message::Viewport(_) => KIND_VIEWPORT,
        }
    }

    /// Complete wire bytes including the length prefix.
    pub fn encode(&self) -> Vec<u8> {
        let mut body = vec![self.kind()];
        match self {
            Message::Frame { index, points } => {
                body.reserve(8 + points.len() * RECORD_SIZE);
                body.extend_from_slice(&index.to_le_bytes());
                body.extend_from_slice(&(points.len() as u32).to_le_bytes());
                for p in points {
                    encode_record(p, &mut body);
                }
            }
            Message::Stats(pairs) => body.extend_from_slice(pairs_to_text(pairs).as_bytes()),
            Message::Viewport(v) => {
                let mut pairs = Vec::new();
                if let Some(d) = v.camera_distance {
                    pairs.push(("camera_distance".to_string(), d.to_string()));
                }
                if let Some(s) = v.scale {
                    pairs.push(("scale".to_string(), s.to_string()));
                }
                body.extend_from_slice(pairs_to_text(&pairs).as_bytes());
            }
        }
        let mut out = Vec::with_capacity(4 + body.len());
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    /// Decodes one message body (kind byte and payload, no length prefix).
    pub fn decode(body: &[u8]) -> Result<Message, BridgeError> {
        let (&kind, payload) = body.split_first().ok_or(BridgeError::Empty)?;
        let text = || std::str::from_utf8(payload).map_err(|_| BridgeError::Utf8);
        match kind {
            KIND_FRAME => {
                if payload.len() < 8 {
                    return Err(BridgeError::Frame("shorter than its 8-byte prefix".into()));
                }
                let index = u32::from_le_bytes(payload[0..4].try_into().expect("4 bytes"));
                let density =
                    u32::from_le_bytes(payload[4..8].try_into().expect("4 bytes")) as usize;
                let records = &payload[8..];
                if density.checked_mul(RECORD_SIZE) != Some(records.len()) {
                    return Err(BridgeError::Frame(format!(
                        "density {density} needs {} record bytes, got {}",
                        density.saturating_mul(RECORD_SIZE),
                        records.len()
                    )));
                }
                let points = records
                    .chunks_exact(RECORD_SIZE)
                    .map(|r| decode_record(r.try_into().expect("exact chunk")))
                    .collect();
                Ok(Message::Frame { index, points })
            }
            KIND_STATS => Ok(Message::Stats(text_to_pairs(text()?))),
            KIND_VIEWPORT => {
                let mut v = Viewport::default();
                for (k, raw) in text_to_pairs(text()?) {
                    let value: f64 = raw
                        .parse()
                        .ok()
                        .filter(|x: &f64| x.is_finite())
                        .ok_or_else(|| {
                            BridgeError::Viewport(format!("bad value `{raw}` for `{k}`"))
                        })?;
                    match k.as_str() {
                        "camera_distance" => v.camera_distance = Some(value),
                        "scale" => v.scale = Some(value),
                        _ => log::debug!("viewport: ignoring `{k}`"),
                    }
                }
                Ok(Message::Viewport(v))
            }
            other => Err(BridgeError::Kind(other)),
        }
    }
}

/// Reads one message. `Ok(None)` on a clean end of stream before a length
/// prefix.
pub fn read_message<R: Read>(r: &mut R) -> Result<Option<Message>, BridgeError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_MESSAGE {
        return Err(BridgeError::TooLarge(len));
    }
    // Grow with the data actually received rather than the claimed length.
    let mut body = Vec::new();
    r.take(len as u64).read_to_end(&mut body)?;
    if body.len() < len {
        return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into());
    }
    Message::decode(&body).map(Some)
}

pub fn write_message<W: Write>(w: &mut W, m: &Message) -> io::Result<()> {
    w.write_all(&m.encode())
}

/// The viewing geometry shared between the bridge and the selection loop.
/// Readers take a copy once per decision; writers replace it whole.
#[derive(Debug, Clone)]
pub struct SharedGeometry(Arc<RwLock<ViewingGeometry>>);

impl SharedGeometry {
    pub fn new(g: ViewingGeometry) -> Self {
        SharedGeometry(Arc::new(RwLock::new(g)))
    }

    pub fn get(&self) -> ViewingGeometry {
        *self.0.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn set(&self, g: ViewingGeometry) {
        *self.0.write().unwrap_or_else(|e| e.into_inner()) = g;
    }

    pub fn apply(&self, v: &Viewport) -> Result<ViewingGeometry, BridgeError> {
        let mut guard = self.0.write().unwrap_or_else(|e| e.into_inner());
        let next = v.apply(&guard)?;
        *guard = next;
        Ok(next)
    }
}

struct Viewer {
    writer: BufWriter<TcpStream>,
    stream: TcpStream,
}

/// Accepts viewers one at a time. Outbound sends go to the current viewer,
/// if any; a failed send drops it and streaming carries on headless.
pub struct BridgeServer {
    addr: SocketAddr,
    viewer: Arc<Mutex<Option<Viewer>>>,
    stop: Arc<AtomicBool>,
    accept: Option<thread::JoinHandle<()>>,
}

impl BridgeServer {
    pub fn listen(addr: SocketAddr, geometry: SharedGeometry) -> io::Result<BridgeServer> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let viewer: Arc<Mutex<Option<Viewer>>> = Arc::new(Mutex::new(None));
        let stop = Arc::new(AtomicBool::new(false));
        let (slot, halt) = (viewer.clone(), stop.clone());
        let accept = thread::Builder::new()
            .name("dashpc-bridge".into())
            .spawn(move || {
                while !halt.load(Ordering::Relaxed) {
                    match listener.accept() {
                        Ok((stream, peer)) => {
                            if let Err(e) = Self::attach(stream, peer, &slot, &geometry) {
                                log::warn!("bridge: viewer {peer} rejected: {e}");
                            }
                        }
                        Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                            thread::sleep(Duration::from_millis(10))
                        }
                        Err(e) => {
                            log::warn!("bridge: accept failed: {e}");
                            thread::sleep(Duration::from_millis(10));
                        }
                    }
                }
            })?;
        Ok(BridgeServer {
            addr,
            viewer,
            stop,
            accept: Some(accept),
        })
    }

    fn attach(
        stream: TcpStream,
        peer: SocketAddr,
        slot: &Arc<Mutex<Option<Viewer>>>,
        geometry: &SharedGeometry,
    ) -> io::Result<()> {
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        stream.set_write_timeout(Some(Duration::from_secs(5)))?;
        let reader = stream.try_clone()?;
        let writer = BufWriter::new(stream.try_clone()?);
        let mut current = slot.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(old) = current.take() {
            log::info!("bridge: replacing viewer with {peer}");
            let _ = old.stream.shutdown(Shutdown::Both);
        }
        *current = Some(Viewer { writer, stream });
        drop(current);
        log::info!("bridge: viewer {peer} connected");
        let geometry = geometry.clone();
        thread::Builder::new()
            .name("dashpc-bridge-rx".into())
            .spawn(move || {
                let mut reader = BufReader::new(reader);
                loop {
                    match read_message(&mut reader) {
                        Ok(Some(Message::Viewport(v))) => match geometry.apply(&v) {
                            Ok(g) => log::info!(
                                "bridge: viewport camera_distance={} scale={}",
                                g.camera_distance,
                                g.scale
                            ),
                            Err(e) => log::warn!("bridge: {e}"),
                        },
                        Ok(Some(other)) => {
                            log::debug!("bridge: ignoring inbound kind {}", other.kind())
                        }
                        Ok(None) => break,
                        Err(e) => {
                            log::warn!("bridge: viewer {peer}: {e}");
                            break;
                        }
                    }
                }
            })?;
        Ok(())
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn has_viewer(&self) -> bool {
        self.viewer
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .is_some()
    }

    /// Sends to the current viewer. Returns whether one received it.
    pub fn send(&self, m: &Message) -> bool {
        let mut slot = self.viewer.lock().unwrap_or_else(|e| e.into_inner());
        let Some(v) = slot.as_mut() else {
            return false;
        };
        let result = write_message(&mut v.writer, m).and_then(|_| v.writer.flush());
        if let Err(e) = result {
            log::warn!("bridge: viewer dropped: {e}");
            let _ = v.stream.shutdown(Shutdown::Both);
            *slot = None;
            return false;
        }
        true
    }
}

impl Drop for BridgeServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(v) = self.viewer.lock().unwrap_or_else(|e| e.into_inner()).take() {
            let _ = v.stream.shutdown(Shutdown::Both);
        }
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
    }
}
