//! Subcommand implementations. Each writes its report to `out` and returns
//! a [`CliError`] carrying the exit status on failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use dashpc_core::acuity::{optimize_density, ViewingGeometry};
use dashpc_core::manifest::{self, PackageOptions};
use dashpc_core::metrics::{self, Aggregation};
use dashpc_core::ply::{self, PropertyKind};
use dashpc_core::{PointCloud, Ratio, SamplingSpec};
use dashpc_net::{BridgeServer, ServeConfig, SharedGeometry, StreamConfig, Streamer, Throttle};
use url::Url;

use crate::error::{ply_error, CliError};
use crate::{
    AggregationArg, AmountArgs, Cli, Command, GeometryArgs, InfoArgs, InputArgs, MethodArgs,
    OptimizeArgs, PackageArgs, PsnrArgs, ScaleArgs, ServeArgs, StreamArgs, SubsampleArgs,
};

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Subsample(a) => subsample(&a, out),
        Command::Scale(a) => scale(&a, out),
        Command::Optimize(a) => optimize(&a, out),
        Command::Package(a) => package(&a, out),
        Command::Serve(a) => serve(&a, out),
        Command::Stream(a) => stream(&a, out),
        Command::Psnr(a) => psnr(&a, out),
        Command::Info(a) => info(&a, out),
    }
}

fn write_err(e: io::Error) -> CliError {
    CliError::io("stdout", e)
}

fn spec(method: &MethodArgs, ratio: Ratio) -> SamplingSpec {
    SamplingSpec {
        method: method.method.into(),
        ratio,
        grid: method.grid,
        leaf_threshold: method.leaf,
        cluster_size: method.cluster,
    }
}

fn ratio(amount: &AmountArgs) -> Result<Ratio, CliError> {
    Ok(match (amount.ratio, amount.percentage) {
        (Some(r), None) => Ratio::new(r)?,
        (None, Some(p)) => Ratio::from_percentage(p)?,
        _ => {
            return Err(CliError::usage(
                "exactly one of --ratio and --percentage is required",
            ))
        }
    })
}

fn geometry(g: &GeometryArgs) -> Result<ViewingGeometry, CliError> {
    Ok(ViewingGeometry::new(
        g.distance,
        g.camera_distance,
        g.scale,
        g.units_per_inch,
    )?)
}

fn load(path: &Path) -> Result<PointCloud, CliError> {
    ply::read_ply_file(path).map_err(|e| ply_error(path, e))
}

/// `(input, output)` pairs. Sequences write into `--out` as a directory
/// under each input's file name; a single input writes to `--out`, or into
/// it when it is an existing directory.
fn plan(io: &InputArgs) -> Result<Vec<(PathBuf, PathBuf)>, CliError> {
    let named = |input: &Path| -> Result<PathBuf, CliError> {
        let name = input
            .file_name()
            .ok_or_else(|| CliError::usage(format!("{} has no file name", input.display())))?;
        Ok(io.out.join(name))
    };
    match (&io.input, &io.seq) {
        (_, Some(seq)) => {
            let inputs = seq.existing_paths()?;
            fs::create_dir_all(&io.out).map_err(|e| CliError::io(io.out.display(), e))?;
            inputs
                .into_iter()
                .map(|i| named(&i).map(|o| (i, o)))
                .collect()
        }
        (Some(input), None) => {
            let output = if io.out.is_dir() {
                named(input)?
            } else {
                io.out.clone()
            };
            Ok(vec![(input.clone(), output)])
        }
        (None, None) => Err(CliError::usage("an input file or --seq is required")),
    }
}

/// Loads, transforms and writes every planned file, printing one report
/// line each and a total line for sequences.
fn transform_each(
    io: &InputArgs,
    out: &mut dyn Write,
    f: impl Fn(&PointCloud) -> Result<(PointCloud, String), CliError>,
) -> Result<(), CliError> {
    let jobs = plan(io)?;
    let (mut pin, mut pout, mut bin, mut bout) = (0usize, 0usize, 0u64, 0u64);
    for (input, output) in &jobs {
        let bytes_in = fs::metadata(input)
            .map_err(|e| CliError::io(input.display(), e))?
            .len();
        let cloud = load(input)?;
        let (result, extra) = f(&cloud)?;
        let encoded = ply::save_ply(&result, io.encoding.into());
        fs::write(output, &encoded).map_err(|e| CliError::io(output.display(), e))?;
        writeln!(
            out,
            "input={} output={} points_in={} points_out={} bytes_in={} bytes_out={}{}",
            input.display(),
            output.display(),
            cloud.len(),
            result.len(),
            bytes_in,
            encoded.len(),
            extra
        )
        .map_err(write_err)?;
        pin += cloud.len();
        pout += result.len();
        bin += bytes_in;
        bout += encoded.len() as u64;
    }
    if io.seq.is_some() {
        writeln!(
            out,
            "files={} points_in={pin} points_out={pout} bytes_in={bin} bytes_out={bout}",
            jobs.len()
        )
        .map_err(write_err)?;
    }
    Ok(())
}

pub fn subsample(a: &SubsampleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = spec(&a.method, ratio(&a.amount)?);
    transform_each(&a.io, out, |cloud| {
        Ok((
            spec.apply(cloud)?,
            format!(" method={} ratio={}", spec.method, spec.ratio),
        ))
    })
}

pub fn scale(a: &ScaleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let factor = a.percentage / 100.0;
    if !(factor.is_finite() && factor > 0.0) {
        return Err(CliError::usage(format!(
            "scale percentage must be positive, got {}",
            a.percentage
        )));
    }
    transform_each(&a.io, out, |cloud| {
        let scaled = cloud.scale(factor).map_err(CliError::data)?;
        Ok((scaled, format!(" factor={factor}")))
    })
}

pub fn optimize(a: &OptimizeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let g = geometry(&a.geometry)?;
    let spec = spec(&a.method, Ratio::ONE);
    transform_each(&a.io, out, |cloud| {
        let o = optimize_density(cloud, &g, &spec)?;
        let extra = format!(
            " ratio={} required_ppi={:.4} effective_ppi={:.4} min_density={}",
            o.ratio, o.required_ppi, o.effective_ppi, o.min_density
        );
        Ok((o.cloud, extra))
    })
}

pub fn package(a: &PackageArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let frames = match &a.seq {
        Some(seq) => seq.existing_paths()?,
        None => a.inputs.clone(),
    };
    if let Some(missing) = frames.iter().find(|p| !p.is_file()) {
        return Err(CliError::data(format!(
            "{}: no such file",
            missing.display()
        )));
    }
    if a.ratios.is_empty() {
        return Err(CliError::usage("--ratios must name at least one ratio"));
    }
    let ladder = a
        .ratios
        .iter()
        .map(|&r| Ok(spec(&a.method, Ratio::new(r)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let opts = PackageOptions {
        encoding: a.encoding.into(),
        base_url: a.base_url.clone(),
        ..Default::default()
    };
    let mpd = manifest::package(&frames, &ladder, &a.out, &opts)?;
    let summary = manifest::verify_package(&a.out)?;
    writeln!(
        out,
        "manifest={} frames={} representations={} segments={} media_bytes={}",
        a.out.join(manifest::MANIFEST_FILE).display(),
        mpd.frame_count(),
        ladder.len(),
        summary.segments,
        summary.media_bytes
    )
    .map_err(write_err)
}

fn throttle(arg: &str) -> Result<Throttle, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        Ok(text.parse()?)
    } else {
        Ok(arg.parse()?)
    }
}

pub fn serve(a: &ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut config = ServeConfig::new(&a.root, (a.bind, a.port).into());
    config.throttle = a.throttle.as_deref().map(throttle).transpose()?;
    config.log_path = a.log.clone();
    let handle = dashpc_net::serve(config)?;
    writeln!(out, "listening={}", handle.base_url()).map_err(write_err)?;
    out.flush().map_err(write_err)?;
    handle.wait();
    Ok(())
}

/// Accepts a URL or a local manifest path.
pub fn manifest_url(s: &str) -> Result<Url, CliError> {
    if let Ok(url) = Url::parse(s) {
        if matches!(url.scheme(), "http" | "https" | "file") {
            return Ok(url);
        }
    }
    let abs = fs::canonicalize(s).map_err(|e| CliError::io(s, e))?;
    Url::from_file_path(&abs)
        .map_err(|_| CliError::usage(format!("{s}: not a usable manifest location")))
}

pub fn stream(a: &StreamArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(a.fps.is_finite() && a.fps > 0.0) {
        return Err(CliError::usage(format!(
            "--fps must be positive, got {}",
            a.fps
        )));
    }
    let g = geometry(&a.geometry)?;
    let mut config = StreamConfig::new(manifest_url(&a.mpd)?, g);
    config.alpha = a.alpha;
    config.buffer = a.buffer;
    config.frame_interval = Duration::from_secs_f64(1.0 / a.fps);
    config.safety = a.safety;
    config.adaptation_set = a.adaptation_set.clone();

    let mut streamer = Streamer::new(config);
    if let Some(addr) = a.bridge {
        let shared = SharedGeometry::new(g);
        let bridge = BridgeServer::listen(addr, shared.clone())
            .map_err(|e| CliError::network(format!("bridge {addr}: {e}")))?;
        log::info!("viewer bridge on {}", bridge.local_addr());
        if a.wait_viewer {
            while !bridge.has_viewer() {
                std::thread::sleep(Duration::from_millis(20));
            }
        }
        streamer = streamer.with_geometry(shared).with_bridge(bridge);
    }

    match &a.log {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| CliError::io(path.display(), e))?;
            let mut sink = io::BufWriter::new(file);
            let log = streamer.run(Some(&mut sink))?;
            sink.flush().map_err(|e| CliError::io(path.display(), e))?;
            for r in &log.records {
                writeln!(
                    out,
                    "frame={} representation={} density={} bytes={} fetch_ms={:.1}",
                    r.frame, r.representation, r.density, r.bytes, r.fetch_ms
                )
                .map_err(write_err)?;
            }
            writeln!(
                out,
                "frames={} media_bytes={}",
                log.records.len(),
                log.media_bytes()
            )
            .map_err(write_err)
        }
        None => {
            streamer.run(Some(out))?;
            Ok(())
        }
    }
}

pub fn psnr(a: &PsnrArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let peak = match (a.peak, a.voxel_bits) {
        (Some(p), _) => Some(p),
        (None, Some(bits)) if (1..=52).contains(&bits) => Some(((1u64 << bits) - 1) as f64),
        (None, Some(bits)) => {
            return Err(CliError::usage(format!(
                "--voxel-bits must be in 1..=52, got {bits}"
            )))
        }
        (None, None) => None,
    };
    let aggregation = match a.aggregation {
        AggregationArg::Max => Aggregation::Max,
        AggregationArg::Mean => Aggregation::Mean,
    };
    let reference = load(&a.reference)?;
    let degraded = load(&a.degraded)?;
    let report = metrics::psnr_d1(&reference, &degraded, peak, aggregation)?;
    let text = if a.json {
        report.to_json_record() + "\n"
    } else {
        report.to_key_values()
    };
    out.write_all(text.as_bytes()).map_err(write_err)
}

pub fn info(a: &InfoArgs, out: &mut dyn Write) -> Result<(), CliError> {
    for path in &a.files {
        let bytes = fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
        let header = ply::read_header(&bytes).map_err(|e| ply_error(path, e))?;
        let cloud = ply::load_ply(&bytes).map_err(|e| ply_error(path, e))?;
        let props: Vec<String> = header
            .vertex_element()
            .map(|v| {
                v.properties
                    .iter()
                    .map(|p| match &p.kind {
                        PropertyKind::Scalar(_) => p.name.clone(),
                        PropertyKind::List { .. } => format!("{}[]", p.name),
                    })
                    .collect()
            })
            .unwrap_or_default();
        write!(
            out,
            "file={} bytes={} encoding={} vertices={} properties={}",
            path.display(),
            bytes.len(),
            header.encoding,
            cloud.len(),
            props.join(",")
        )
        .map_err(write_err)?;
        if let Some(b) = cloud.bbox() {
            let e = b.extents();
            write!(
                out,
                " extents={},{},{} diagonal={}",
                e[0],
                e[1],
                e[2],
                b.diagonal()
            )
            .map_err(write_err)?;
        }
        writeln!(out).map_err(write_err)?;
    }
    Ok(())
}
