//! Adaptive streaming client: throughput estimation, representation
//! selection and the fetch → decode → deliver pipeline.

use std::io::{self, Write};
use std::sync::mpsc::{self, Receiver, SyncSender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use dashpc_core::acuity::{required_ppi_scaled, DensityModel, SurfaceDensity, ViewingGeometry};
use dashpc_core::manifest::{
    parse_mpd, resolve_url_from, AdaptationSet, ManifestError, Mpd, Representation,
};
use dashpc_core::ply::{self, PlyError};
use dashpc_core::{BoundingBox, PointCloud};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::bridge::{BridgeServer, Message, SharedGeometry};

pub const DEFAULT_ALPHA: f64 = 0.3;
pub const DEFAULT_SAFETY: f64 = 0.8;
pub const DEFAULT_BUFFER: usize = 3;
pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_FAILURE_LIMIT: u32 = 5;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid parameter: {0}")]
    Config(String),
    #[error("{url}: {message}")]
    Fetch { url: String, message: String },
    #[error("giving up after {0} consecutive failed requests")]
    TooManyFailures(u32),
    #[error("manifest: {0}")]
    Manifest(#[from] ManifestError),
    #[error("manifest is not UTF-8")]
    ManifestEncoding,
    #[error("frame `{frame}`: {message}")]
    Frame { frame: String, message: String },
    #[error("frame `{frame}` media: {source}")]
    Decode {
        frame: String,
        #[source]
        source: PlyError,
    },
    #[error("empty representation ladder")]
    EmptyLadder,
    #[error("session log: {0}")]
    Log(#[from] io::Error),
}

/// Exponentially weighted moving average of throughput samples in bits per
/// second. The first sample is taken as is.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputEstimator {
    alpha: f64,
    estimate: Option<f64>,
    last: Option<f64>,
}

impl ThroughputEstimator {
    pub fn new(alpha: f64) -> Result<Self, ClientError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(ClientError::Config(format!(
                "alpha must be in (0, 1], got {alpha}"
            )));
        }
        Ok(ThroughputEstimator {
            alpha,
            estimate: None,
            last: None,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Non-finite and non-positive samples are ignored.
    pub fn update(&mut self, bits_per_sec: f64) {
        if !(bits_per_sec.is_finite() && bits_per_sec > 0.0) {
            return;
        }
        self.last = Some(bits_per_sec);
        self.estimate = Some(match self.estimate {
            None => bits_per_sec,
            Some(e) => self.alpha * bits_per_sec + (1.0 - self.alpha) * e,
        });
    }

    pub fn estimate(&self) -> Option<f64> {
        self.estimate
    }

    pub fn last_sample(&self) -> Option<f64> {
        self.last
    }
}

/// Inputs to one representation decision.
#[derive(Debug, Clone, Copy)]
pub struct SelectionContext {
    /// Bits per second; `None` before the first sample, treated as unlimited.
    pub throughput_bps: Option<f64>,
    pub geometry: ViewingGeometry,
    /// Bounds of the most recently decoded frame, if any.
    pub bbox: Option<BoundingBox>,
    /// Seconds.
    pub frame_interval: f64,
}

/// Indices into the ladder (0 = densest).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub bandwidth_cap: usize,
    pub acuity_cap: usize,
    /// Nothing fit the bandwidth budget; the sparsest rung was taken.
    pub floor_fallback: bool,
    pub required_ppi: f64,
}

pub trait AdaptationPolicy: Send + Sync {
    fn name(&self) -> &str;

    fn select(
        &self,
        ladder: &[Representation],
        ctx: &SelectionContext,
    ) -> Result<Selection, ClientError>;
}

/// Takes the sparser of a bandwidth cap (densest rung whose bits fit in
/// `throughput × interval × safety`) and an acuity cap (sparsest rung whose
/// effective PPI still meets the viewer's requirement).
#[derive(Debug, Clone, Copy)]
pub struct CapPolicy {
    pub safety: f64,
}

impl Default for CapPolicy {
    fn default() -> Self {
        CapPolicy {
            safety: DEFAULT_SAFETY,
        }
    }
}

impl AdaptationPolicy for CapPolicy {
    fn name(&self) -> &str {
        "min-of-caps"
    }

    fn select(
        &self,
        ladder: &[Representation],
        ctx: &SelectionContext,
    ) -> Result<Selection, ClientError> {
        select_representation(
            ladder,
            ctx.throughput_bps.unwrap_or(f64::INFINITY),
            &ctx.geometry,
            ctx.bbox.as_ref(),
            ctx.frame_interval,
            self.safety,
        )
    }
}

/// Applies [`CapPolicy`] to a ladder ordered densest first. Without a
/// bounding box the acuity cap is the densest rung.
pub fn select_representation(
    ladder: &[Representation],
    throughput_bps: f64,
    g: &ViewingGeometry,
    bbox: Option<&BoundingBox>,
    frame_interval: f64,
    safety: f64,
) -> Result<Selection, ClientError> {
    if ladder.is_empty() {
        return Err(ClientError::EmptyLadder);
    }
    let lowest = ladder.len() - 1;
    let budget_bits = throughput_bps * frame_interval * safety;
    let fitting = ladder
        .iter()
        .position(|r| 8.0 * r.size as f64 <= budget_bits);
    let required = required_ppi_scaled(g).map_err(|e| ClientError::Config(e.to_string()))?;
    let acuity_cap = match bbox {
        None => 0,
        Some(b) => ladder
            .iter()
            .rposition(|r| {
                SurfaceDensity
                    .effective_ppi(r.density as usize, b, g)
                    .is_ok_and(|ppi| ppi >= required)
            })
            .unwrap_or(0),
    };
    let (bandwidth_cap, floor_fallback) = match fitting {
        Some(i) => (i, false),
        None => (lowest, true),
    };
    Ok(Selection {
        index: bandwidth_cap.max(acuity_cap),
        bandwidth_cap,
        acuity_cap,
        floor_fallback,
        required_ppi: required,
    })
}

#[derive(Debug, Clone)]
pub struct StreamConfig {
    pub manifest_url: Url,
    pub geometry: ViewingGeometry,
    pub alpha: f64,
    /// Decoded frames held ahead of delivery.
    pub buffer: usize,
    pub frame_interval: Duration,
    pub safety: f64,
    /// Adaptation set id; the first set of each frame when `None`.
    pub adaptation_set: Option<String>,
    pub max_retries: u32,
    pub failure_limit: u32,
}

impl StreamConfig {
    pub fn new(manifest_url: Url, geometry: ViewingGeometry) -> Self {
        StreamConfig {
            manifest_url,
            geometry,
            alpha: DEFAULT_ALPHA,
            buffer: DEFAULT_BUFFER,
            frame_interval: Duration::from_secs_f64(1.0 / 30.0),
            safety: DEFAULT_SAFETY,
            adaptation_set: None,
            max_retries: DEFAULT_MAX_RETRIES,
            failure_limit: DEFAULT_FAILURE_LIMIT,
        }
    }

    fn validate(&self) -> Result<(), ClientError> {
        let bad = |m: String| Err(ClientError::Config(m));
        if self.buffer == 0 {
            return bad("buffer must hold at least one frame".into());
        }
        if self.frame_interval.is_zero() {
            return bad("frame interval must be positive".into());
        }
        if !(self.safety > 0.0 && self.safety.is_finite()) {
            return bad(format!(
                "safety factor must be positive, got {}",
                self.safety
            ));
        }
        if self.failure_limit == 0 {
            return bad("failure limit must be at least 1".into());
        }
        self.geometry
            .validate()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        ThroughputEstimator::new(self.alpha).map(|_| ())
    }
}

/// First line of a session log: every parameter of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub manifest_url: String,
    pub frames: usize,
    pub viewer_distance: f64,
    pub camera_distance: f64,
    pub scale: f64,
    pub units_per_inch: f64,
    pub alpha: f64,
    pub buffer: usize,
    pub frame_interval_s: f64,
    pub safety: f64,
    pub adaptation_set: Option<String>,
    pub max_retries: u32,
    pub failure_limit: u32,
    pub policy: String,
}

/// One delivered frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    /// Position in the manifest.
    pub frame: usize,
    pub frame_id: String,
    pub representation: String,
    pub rep_index: usize,
    pub density: u64,
    pub bytes: u64,
    pub url: String,
    /// Milliseconds since the session started.
    pub fetch_start_ms: f64,
    pub fetch_ms: f64,
    pub delivered_ms: f64,
    /// Estimate the decision was based on; `None` before the first sample.
    pub throughput_bps: Option<f64>,
    /// Throughput measured by this fetch.
    pub sample_bps: f64,
    pub bandwidth_cap: String,
    pub acuity_cap: String,
    pub floor_fallback: bool,
    pub required_ppi: f64,
    pub camera_distance: f64,
    pub scale: f64,
    /// Failed attempts before this frame arrived.
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum LogLine {
    Header(SessionHeader),
    Frame(FrameRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub header: SessionHeader,
    pub records: Vec<FrameRecord>,
}

impl SessionLog {
    pub fn header_line(header: &SessionHeader) -> String {
        serde_json::to_string(&LogLine::Header(header.clone())).expect("header serializes")
    }

    pub fn record_line(record: &FrameRecord) -> String {
        serde_json::to_string(&LogLine::Frame(record.clone())).expect("record serializes")
    }

    pub fn to_json_lines(&self) -> String {
        let mut out = Self::header_line(&self.header);
        out.push('\n');
        for r in &self.records {
            out.push_str(&Self::record_line(r));
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(text: &str) -> Result<SessionLog, serde_json::Error> {
        use serde::de::Error as _;
        let mut header = None;
        let mut records = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str::<LogLine>(line)? {
                LogLine::Header(h) if header.is_none() => header = Some(h),
                LogLine::Header(_) => {
                    return Err(serde_json::Error::custom("second header record"))
                }
                LogLine::Frame(r) => records.push(r),
            }
        }
        let header = header.ok_or_else(|| serde_json::Error::custom("missing header record"))?;
        Ok(SessionLog { header, records })
    }

    /// Chosen ladder index per frame.
    pub fn choices(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.rep_index).collect()
    }

    pub fn media_bytes(&self) -> u64 {
        self.records.iter().map(|r| r.bytes).sum()
    }
}

struct Fetcher {
    agent: ureq::Agent,
}

impl Fetcher {
    fn new() -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build();
        Fetcher {
            agent: config.into(),
        }
    }

    fn get(&self, url: &Url) -> Result<Vec<u8>, String> {
        if url.scheme() == "file" {
            let path = url
                .to_file_path()
                .map_err(|_| "not a local path".to_string())?;
            return std::fs::read(path).map_err(|e| e.to_string());
        }
        let mut resp = self
            .agent
            .get(url.as_str())
            .call()
            .map_err(|e| e.to_string())?;
        resp.body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_to_vec()
            .map_err(|e| e.to_string())
    }
}

/// Fetches and parses a manifest from an `http(s)` or `file` URL.
pub fn fetch_manifest(url: &Url) -> Result<Mpd, ClientError> {
    let bytes = Fetcher::new()
        .get(url)
        .map_err(|message| ClientError::Fetch {
            url: url.to_string(),
            message,
        })?;
    let text = String::from_utf8(bytes).map_err(|_| ClientError::ManifestEncoding)?;
    Ok(parse_mpd(&text)?)
}

struct Fetched {
    record: FrameRecord,
    body: Vec<u8>,
}

struct Decoded {
    record: FrameRecord,
    cloud: PointCloud,
}

/// Runs a streaming session.
pub struct Streamer {
    config: StreamConfig,
    policy: Box<dyn AdaptationPolicy>,
    geometry: SharedGeometry,
    bridge: Option<BridgeServer>,
}

impl Streamer {
    pub fn new(config: StreamConfig) -> Self {
        let geometry = SharedGeometry::new(config.geometry);
        let policy = Box::new(CapPolicy {
            safety: config.safety,
        });
        Streamer {
            config,
            policy,
            geometry,
            bridge: None,
        }
    }

    pub fn with_policy(mut self, policy: Box<dyn AdaptationPolicy>) -> Self {
        self.policy = policy;
        self
    }

    /// Shares live geometry with e.g. a [`BridgeServer`]. Its current value
    /// replaces the configured starting geometry.
    pub fn with_geometry(mut self, geometry: SharedGeometry) -> Self {
        self.geometry = geometry;
        self
    }

    pub fn with_bridge(mut self, bridge: BridgeServer) -> Self {
        self.bridge = Some(bridge);
        self
    }

    pub fn geometry(&self) -> &SharedGeometry {
        &self.geometry
    }

    /// Streams every frame and returns the complete log. Header and records
    /// are also written to `sink` as they happen.
    pub fn run(self, mut sink: Option<&mut dyn Write>) -> Result<SessionLog, ClientError> {
        let cfg = &self.config;
        cfg.validate()?;
        let mpd = fetch_manifest(&cfg.manifest_url)?;
        let g0 = self.geometry.get();
        let header = SessionHeader {
            manifest_url: cfg.manifest_url.to_string(),
            frames: mpd.frames.len(),
            viewer_distance: g0.viewer_distance,
            camera_distance: g0.camera_distance,
            scale: g0.scale,
            units_per_inch: g0.units_per_inch,
            alpha: cfg.alpha,
            buffer: cfg.buffer,
            frame_interval_s: cfg.frame_interval.as_secs_f64(),
            safety: cfg.safety,
            adaptation_set: cfg.adaptation_set.clone(),
            max_retries: cfg.max_retries,
            failure_limit: cfg.failure_limit,
            policy: self.policy.name().to_string(),
        };
        if let Some(s) = sink.as_deref_mut() {
            writeln!(s, "{}", SessionLog::header_line(&header))?;
            s.flush()?;
        }

        let start = Instant::now();
        let last_bbox: Arc<Mutex<Option<BoundingBox>>> = Arc::new(Mutex::new(None));
        let (fetch_tx, fetch_rx) = mpsc::sync_channel::<Result<Fetched, ClientError>>(0);
        let (decode_tx, decode_rx) = mpsc::sync_channel::<Result<Decoded, ClientError>>(cfg.buffer);

        let mut records = Vec::with_capacity(mpd.frames.len());
        let (this, manifest) = (&self, &mpd);
        thread::scope(|scope| -> Result<(), ClientError> {
            let bbox = last_bbox.clone();
            scope.spawn(move || this.fetch_stage(manifest, start, bbox, fetch_tx));
            let bbox = last_bbox.clone();
            scope.spawn(move || decode_stage(fetch_rx, decode_tx, bbox));
            this.deliver_stage(decode_rx, start, &mut records, sink)
        })?;
        Ok(SessionLog { header, records })
    }

    fn fetch_stage(
        &self,
        mpd: &Mpd,
        start: Instant,
        last_bbox: Arc<Mutex<Option<BoundingBox>>>,
        out: SyncSender<Result<Fetched, ClientError>>,
    ) {
        let cfg = &self.config;
        let fetcher = Fetcher::new();
        let mut estimator = ThroughputEstimator::new(cfg.alpha).expect("validated");
        let mut consecutive_failures = 0u32;
        for (k, frame) in mpd.frames.iter().enumerate() {
            let result = (|| {
                let set = pick_set(frame, cfg.adaptation_set.as_deref())?;
                let g = self.geometry.get();
                let ctx = SelectionContext {
                    throughput_bps: estimator.estimate(),
                    geometry: g,
                    bbox: *last_bbox.lock().unwrap_or_else(|e| e.into_inner()),
                    frame_interval: cfg.frame_interval.as_secs_f64(),
                };
                let sel = self.policy.select(&set.representations, &ctx)?;
                let lowest = set.representations.len() - 1;
                let mut index = sel.index.min(lowest);
                let mut attempts_here = 0u32;
                let mut retries = 0u32;
                loop {
                    let rep = &set.representations[index];
                    let seg = rep.segments.first().ok_or_else(|| ClientError::Frame {
                        frame: frame.id.clone(),
                        message: format!("representation `{}` has no segment", rep.id),
                    })?;
                    let url = resolve_url_from(
                        Some(&cfg.manifest_url),
                        mpd,
                        &frame.id,
                        &set.id,
                        &rep.id,
                        &seg.id,
                    )
                    .map_err(|e| ClientError::Frame {
                        frame: frame.id.clone(),
                        message: e.to_string(),
                    })?;
                    let began = Instant::now();
                    match fetcher.get(&url) {
                        Ok(body) => {
                            let took = began.elapsed().as_secs_f64().max(1e-6);
                            let sample = body.len() as f64 * 8.0 / took;
                            let record = FrameRecord {
                                frame: k,
                                frame_id: frame.id.clone(),
                                representation: rep.id.clone(),
                                rep_index: index,
                                density: rep.density,
                                bytes: body.len() as u64,
                                url: url.to_string(),
                                fetch_start_ms: began.duration_since(start).as_secs_f64() * 1e3,
                                fetch_ms: took * 1e3,
                                delivered_ms: 0.0,
                                throughput_bps: ctx.throughput_bps,
                                sample_bps: sample,
                                bandwidth_cap: set.representations[sel.bandwidth_cap].id.clone(),
                                acuity_cap: set.representations[sel.acuity_cap].id.clone(),
                                floor_fallback: sel.floor_fallback,
                                required_ppi: sel.required_ppi,
                                camera_distance: g.camera_distance,
                                scale: g.scale,
                                retries,
                            };
                            estimator.update(sample);
                            consecutive_failures = 0;
                            return Ok(Fetched { record, body });
                        }
                        Err(message) => {
                            log::warn!("fetch {url} failed: {message}");
                            consecutive_failures += 1;
                            retries += 1;
                            attempts_here += 1;
                            if consecutive_failures >= cfg.failure_limit {
                                return Err(ClientError::TooManyFailures(consecutive_failures));
                            }
                            if attempts_here > cfg.max_retries && index != lowest {
                                index = lowest;
                                attempts_here = 0;
                            }
                        }
                    }
                }
            })();
            let failed = result.is_err();
            if out.send(result).is_err() || failed {
                return;
            }
        }
    }

    fn deliver_stage(
        &self,
        input: Receiver<Result<Decoded, ClientError>>,
        start: Instant,
        records: &mut Vec<FrameRecord>,
        mut sink: Option<&mut dyn Write>,
    ) -> Result<(), ClientError> {
        let mut due: Option<Instant> = None;
        for item in input {
            let Decoded { mut record, cloud } = item?;
            if let Some(d) = due {
                let now = Instant::now();
                if d > now {
                    thread::sleep(d - now);
                }
            }
            let now = Instant::now();
            due = Some(now + self.config.frame_interval);
            record.delivered_ms = now.duration_since(start).as_secs_f64() * 1e3;
            if let Some(s) = sink.as_deref_mut() {
                writeln!(s, "{}", SessionLog::record_line(&record))?;
                s.flush()?;
            }
            if let Some(bridge) = &self.bridge {
                bridge.send(&Message::Frame {
                    index: record.frame as u32,
                    points: cloud.into_points(),
                });
                bridge.send(&Message::Stats(stats_pairs(&record)));
            }
            records.push(record);
        }
        Ok(())
    }
}

fn pick_set<'a>(
    frame: &'a dashpc_core::manifest::Frame,
    id: Option<&str>,
) -> Result<&'a AdaptationSet, ClientError> {
    let set = match id {
        Some(id) => frame.adaptation_set(id),
        None => frame.adaptation_sets.first(),
    };
    let set = set.ok_or_else(|| ClientError::Frame {
        frame: frame.id.clone(),
        message: format!("no adaptation set {}", id.unwrap_or("at all")),
    })?;
    if set.representations.is_empty() {
        return Err(ClientError::EmptyLadder);
    }
    Ok(set)
}

fn decode_stage(
    input: Receiver<Result<Fetched, ClientError>>,
    out: SyncSender<Result<Decoded, ClientError>>,
    last_bbox: Arc<Mutex<Option<BoundingBox>>>,
) {
    for item in input {
        let result = item.and_then(|Fetched { record, body }| {
            let cloud = ply::load_ply(&body).map_err(|source| ClientError::Decode {
                frame: record.frame_id.clone(),
                source,
            })?;
            if cloud.len() as u64 != record.density {
                log::warn!(
                    "frame `{}`: {} points, manifest says {}",
                    record.frame_id,
                    cloud.len(),
                    record.density
                );
            }
            if let Some(b) = cloud.bbox() {
                *last_bbox.lock().unwrap_or_else(|e| e.into_inner()) = Some(*b);
            }
            Ok(Decoded { record, cloud })
        });
        let failed = result.is_err();
        if out.send(result).is_err() || failed {
            return;
        }
    }
}

fn stats_pairs(r: &FrameRecord) -> Vec<(String, String)> {
    let tput = r
        .throughput_bps
        .map_or_else(|| "unknown".to_string(), |t| format!("{t:.0}"));
    [
        ("frame", r.frame.to_string()),
        ("frame_id", r.frame_id.clone()),
        ("rep", r.representation.clone()),
        ("density", r.density.to_string()),
        ("bytes", r.bytes.to_string()),
        ("fetch_ms", format!("{:.1}", r.fetch_ms)),
        ("tput_bps", tput),
        ("bandwidth_cap", r.bandwidth_cap.clone()),
        ("acuity_cap", r.acuity_cap.clone()),
        ("required_ppi", format!("{:.3}", r.required_ppi)),
        ("camera_distance", r.camera_distance.to_string()),
        ("scale", r.scale.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}
