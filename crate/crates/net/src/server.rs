//! Static HTTP/1.1 origin for manifests and media with byte ranges,
//! per-connection rate shaping and an access log.

use std::convert::Infallible;
use std::fs::{File, OpenOptions};
use std::future::Future;
use std::io::{self, Write as _};
use std::net::{SocketAddr, TcpListener as StdListener};
use std::path::{Component, Path, PathBuf};
use std::pin::Pin;
use std::sync::{Arc, Mutex};
use std::task::{Context, Poll};
use std::thread;
use std::time::{Duration, Instant};

use bytes::Bytes;
use hyper::body::{Body, Frame, Incoming, SizeHint};
use hyper::header::{
    HeaderValue, ACCEPT_RANGES, CONTENT_LENGTH, CONTENT_RANGE, CONTENT_TYPE, RANGE,
};
use hyper::{Method, Request, Response, StatusCode};
use hyper_util::rt::TokioIo;
use thiserror::Error;
use tokio::sync::oneshot;
use tokio::time::Sleep;

use crate::throttle::Throttle;

/// Pacing granularity.
pub const CHUNK: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error("root {0} is not a directory")]
    Root(PathBuf),
    #[error("cannot open access log {path}: {source}")]
    Log {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot start runtime: {0}")]
    Runtime(#[source] io::Error),
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub root: PathBuf,
    pub addr: SocketAddr,
    pub throttle: Option<Throttle>,
    pub log_path: Option<PathBuf>,
}

impl ServeConfig {
    pub fn new(root: impl Into<PathBuf>, addr: SocketAddr) -> Self {
        ServeConfig {
            root: root.into(),
            addr,
            throttle: None,
            log_path: None,
        }
    }
}

/// One served request.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessRecord {
    /// Seconds since server start when the request arrived.
    pub t: f64,
    pub method: String,
    pub path: String,
    pub status: u16,
    /// Body bytes actually sent.
    pub bytes: u64,
    pub duration: Duration,
}

impl AccessRecord {
    pub fn to_line(&self) -> String {
        format!(
            "t={:.3} method={} path={} status={} bytes={} duration_ms={:.1}",
            self.t,
            self.method,
            self.path,
            self.status,
            self.bytes,
            self.duration.as_secs_f64() * 1e3
        )
    }
}

struct AccessLog {
    file: Option<Mutex<File>>,
    records: Mutex<Vec<AccessRecord>>,
}

impl AccessLog {
    fn append(&self, record: AccessRecord) {
        log::debug!("{}", record.to_line());
        if let Some(file) = &self.file {
            let mut f = file.lock().unwrap_or_else(|e| e.into_inner());
            if let Err(e) = writeln!(f, "{}", record.to_line()) {
                log::warn!("access log write failed: {e}");
            }
        }
        self.records
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(record);
    }
}

struct Shared {
    root: PathBuf,
    throttle: Option<Throttle>,
    start: Instant,
    log: AccessLog,
}

/// Writes the access record once the body is finished or dropped.
struct LogGuard {
    shared: Arc<Shared>,
    record: AccessRecord,
    began: Instant,
}

impl Drop for LogGuard {
    fn drop(&mut self) {
        let mut record = self.record.clone();
        record.duration = self.began.elapsed();
        self.shared.log.append(record);
    }
}

/// Response body released in [`CHUNK`]-sized pieces, each no earlier than
/// the time at which the active rate would have delivered it.
pub struct PacedBody {
    data: Bytes,
    pos: usize,
    shared: Arc<Shared>,
    release: Instant,
    sleep: Option<Pin<Box<Sleep>>>,
    guard: Option<LogGuard>,
}

impl Body for PacedBody {
    type Data = Bytes;
    type Error = Infallible;

    fn poll_frame(
        mut self: Pin<&mut Self>,
        cx: &mut Context<'_>,
    ) -> Poll<Option<Result<Frame<Bytes>, Infallible>>> {
        let this = &mut *self;
        if this.pos >= this.data.len() {
            this.guard.take();
            return Poll::Ready(None);
        }
        let len = CHUNK.min(this.data.len() - this.pos);
        if this.sleep.is_none() {
            let elapsed = this
                .release
                .saturating_duration_since(this.shared.start)
                .as_secs_f64();
            if let Some(rate) = this
                .shared
                .throttle
                .as_ref()
                .and_then(|t| t.rate_at(elapsed))
            {
                this.release += Duration::from_secs_f64(len as f64 / rate);
                this.sleep = Some(Box::pin(tokio::time::sleep_until(this.release.into())));
            }
        }
        if let Some(sleep) = this.sleep.as_mut() {
            if sleep.as_mut().poll(cx).is_pending() {
                return Poll::Pending;
            }
            this.sleep = None;
        }
        let chunk = this.data.slice(this.pos..this.pos + len);
        this.pos += len;
        if let Some(g) = this.guard.as_mut() {
            g.record.bytes += len as u64;
        }
        if this.pos >= this.data.len() {
            this.guard.take();
        }
        Poll::Ready(Some(Ok(Frame::data(chunk))))
    }

    fn is_end_stream(&self) -> bool {
        self.pos >= self.data.len()
    }

    fn size_hint(&self) -> SizeHint {
        SizeHint::with_exact((self.data.len() - self.pos) as u64)
    }
}

/// Outcome of interpreting a `Range` header against a body length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeRequest {
    /// Serve the whole body.
    Full,
    /// Inclusive byte range.
    Partial(u64, u64),
    Unsatisfiable,
}

/// Interprets a single `bytes=` range. Multiple ranges and other units are
/// ignored (the full body is served), as RFC 9110 permits.
pub fn parse_range(header: &str, len: u64) -> RangeRequest {
    let Some(spec) = header.trim().strip_prefix("bytes=") else {
        return RangeRequest::Full;
    };
    if spec.contains(',') {
        return RangeRequest::Full;
    }
    let Some((first, last)) = spec.trim().split_once('-') else {
        return RangeRequest::Unsatisfiable;
    };
    let parse = |s: &str| s.trim().parse::<u64>().ok();
    match (first.trim().is_empty(), last.trim().is_empty()) {
        (true, true) => RangeRequest::Unsatisfiable,
        (true, false) => match parse(last) {
            Some(0) | None => RangeRequest::Unsatisfiable,
            Some(_) if len == 0 => RangeRequest::Unsatisfiable,
            Some(n) => RangeRequest::Partial(len.saturating_sub(n), len - 1),
        },
        (false, open_end) => {
            let Some(a) = parse(first) else {
                return RangeRequest::Unsatisfiable;
            };
            let b = if open_end {
                Some(u64::MAX)
            } else {
                parse(last)
            };
            match b {
                Some(b) if a <= b && a < len => RangeRequest::Partial(a, b.min(len - 1)),
                _ => RangeRequest::Unsatisfiable,
            }
        }
    }
}

/// Maps a request path onto the served directory, refusing anything that
/// could escape it.
fn resolve_path(root: &Path, request_path: &str) -> Option<PathBuf> {
    let decoded = percent_encoding::percent_decode_str(request_path)
        .decode_utf8()
        .ok()?;
    let mut out = root.to_path_buf();
    for part in decoded.split('/').filter(|p| !p.is_empty()) {
        if part.contains('\\') || part.contains('\0') {
            return None;
        }
        match Path::new(part).components().next()? {
            Component::Normal(_) => out.push(part),
            _ => return None,
        }
    }
    Some(out)
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("mpd") | Some("xml") => "application/xml",
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        _ => "application/octet-stream",
    }
}

async fn handle(
    shared: Arc<Shared>,
    req: Request<Incoming>,
) -> Result<Response<PacedBody>, Infallible> {
    let began = Instant::now();
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let record = AccessRecord {
        t: began.duration_since(shared.start).as_secs_f64(),
        method: method.to_string(),
        path: path.clone(),
        status: 0,
        bytes: 0,
        duration: Duration::ZERO,
    };
    let reply = |status: StatusCode, body: Bytes, head_only: bool| {
        let mut record = record.clone();
        record.status = status.as_u16();
        let data = if head_only { Bytes::new() } else { body };
        let mut resp = Response::new(PacedBody {
            data,
            pos: 0,
            shared: shared.clone(),
            release: began,
            sleep: None,
            guard: Some(LogGuard {
                shared: shared.clone(),
                record,
                began,
            }),
        });
        *resp.status_mut() = status;
        resp
    };

    if method != Method::GET && method != Method::HEAD {
        let mut r = reply(
            StatusCode::METHOD_NOT_ALLOWED,
            Bytes::from_static(b"method not allowed\n"),
            false,
        );
        r.headers_mut()
            .insert("allow", HeaderValue::from_static("GET, HEAD"));
        return Ok(r);
    }
    let head = method == Method::HEAD;
    let not_found = || {
        reply(
            StatusCode::NOT_FOUND,
            Bytes::from_static(b"not found\n"),
            head,
        )
    };
    let Some(file) = resolve_path(&shared.root, &path) else {
        return Ok(not_found());
    };
    let data = match tokio::fs::metadata(&file).await {
        Ok(m) if m.is_file() => match tokio::fs::read(&file).await {
            Ok(d) => Bytes::from(d),
            Err(_) => return Ok(not_found()),
        },
        _ => return Ok(not_found()),
    };
    let len = data.len() as u64;
    let range = req
        .headers()
        .get(RANGE)
        .and_then(|v| v.to_str().ok())
        .map_or(RangeRequest::Full, |h| parse_range(h, len));
    let mut resp = match range {
        RangeRequest::Full => reply(StatusCode::OK, data, head),
        RangeRequest::Partial(a, b) => {
            let mut r = reply(
                StatusCode::PARTIAL_CONTENT,
                data.slice(a as usize..=b as usize),
                head,
            );
            r.headers_mut().insert(
                CONTENT_RANGE,
                HeaderValue::from_str(&format!("bytes {a}-{b}/{len}")).expect("ascii"),
            );
            r
        }
        RangeRequest::Unsatisfiable => {
            let mut r = reply(StatusCode::RANGE_NOT_SATISFIABLE, Bytes::new(), head);
            r.headers_mut().insert(
                CONTENT_RANGE,
                HeaderValue::from_str(&format!("bytes */{len}")).expect("ascii"),
            );
            return Ok(r);
        }
    };
    let body_len = match range {
        RangeRequest::Partial(a, b) => b - a + 1,
        _ => len,
    };
    let headers = resp.headers_mut();
    headers.insert(ACCEPT_RANGES, HeaderValue::from_static("bytes"));
    headers.insert(CONTENT_TYPE, HeaderValue::from_static(content_type(&file)));
    headers.insert(CONTENT_LENGTH, HeaderValue::from(body_len));
    Ok(resp)
}

/// A running server. Dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// `http://<addr>/`.
    pub fn base_url(&self) -> url::Url {
        url::Url::parse(&format!("http://{}/", self.addr))
            .expect("socket address forms a valid URL")
    }

    /// Instant the throttle schedule is measured from.
    pub fn started_at(&self) -> Instant {
        self.shared.start
    }

    /// Completed requests so far, in completion order.
    pub fn access_records(&self) -> Vec<AccessRecord> {
        self.shared
            .log
            .records
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    /// Blocks until the server stops (it only stops when shut down).
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Binds and starts serving on a background thread. Port 0 picks a free
/// port; see [`ServerHandle::local_addr`].
pub fn serve(config: ServeConfig) -> Result<ServerHandle, ServeError> {
    if !config.root.is_dir() {
        return Err(ServeError::Root(config.root));
    }
    let file = match &config.log_path {
        Some(path) => Some(Mutex::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|source| ServeError::Log {
                    path: path.clone(),
                    source,
                })?,
        )),
        None => None,
    };
    let bind = |source| ServeError::Bind {
        addr: config.addr,
        source,
    };
    let std_listener = StdListener::bind(config.addr).map_err(bind)?;
    std_listener.set_nonblocking(true).map_err(bind)?;
    let addr = std_listener.local_addr().map_err(bind)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(ServeError::Runtime)?;
    let shared = Arc::new(Shared {
        root: config.root,
        throttle: config.throttle,
        start: Instant::now(),
        log: AccessLog {
            file,
            records: Mutex::new(Vec::new()),
        },
    });
    let (stop_tx, mut stop_rx) = oneshot::channel();
    let accept_shared = shared.clone();
    let thread = thread::Builder::new()
        .name("dashpc-serve".into())
        .spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(std_listener) {
                    Ok(l) => l,
                    Err(e) => {
                        log::error!("listener setup failed: {e}");
                        return;
                    }
                };
                loop {
                    tokio::select! {
                        _ = &mut stop_rx => break,
                        accepted = listener.accept() => {
                            let (stream, peer) = match accepted {
                                Ok(a) => a,
                                Err(e) => {
                                    log::warn!("accept failed: {e}");
                                    continue;
                                }
                            };
                            let _ = stream.set_nodelay(true);
                            let shared = accept_shared.clone();
                            tokio::spawn(async move {
                                let svc = hyper::service::service_fn(move |req| handle(shared.clone(), req));
                                if let Err(e) = hyper::server::conn::http1::Builder::new()
                                    .serve_connection(TokioIo::new(stream), svc)
                                    .await
                                {
                                    log::debug!("connection {peer}: {e}");
                                }
                            });
                        }
                    }
                }
            });
            runtime.shutdown_background();
        })
        .map_err(ServeError::Runtime)?;
    Ok(ServerHandle {
        addr,
        shared,
        stop: Some(stop_tx),
        thread: Some(thread),
    })
}
