//! Server-side preparation: sub-sample every frame at every ladder rung,
//! write the media files and the manifest describing them.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.mpd
//! frame_<i>/rep_<k>.ply     (k = 1 is the densest rung)
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;
use url::Url;

use crate::cloud::PointCloud;
use crate::ply::{self, PlyEncoding, PlyError};
use crate::subsample::{SamplingSpec, SubsampleError};

use super::{
    parse_mpd, resolve_url_from, serialize_mpd, AdaptationSet, Frame, ManifestError, MediaEncoding,
    Mpd, PresentationType, Representation, ResolveError, Segment,
};

pub const MANIFEST_FILE: &str = "manifest.mpd";

#[derive(Debug, Error)]
pub enum PackageError {
    #[error("nothing to package: {0}")]
    Empty(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Ply {
        path: PathBuf,
        #[source]
        source: PlyError,
    },
    #[error("frame {frame}: {source}")]
    Subsample {
        frame: usize,
        #[source]
        source: SubsampleError,
    },
    #[error("frame {frame}: rung {rung} yields {density} points, not fewer than the rung above")]
    Ladder {
        frame: usize,
        rung: usize,
        density: u64,
    },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
    #[error("{url}: {message}")]
    Verify { url: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PackageError + '_ {
    move |source| PackageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct PackageOptions {
    pub encoding: PlyEncoding,
    /// Written as the manifest-level BaseURL when set.
    pub base_url: Option<String>,
    pub adaptation_set_id: String,
}

impl Default for PackageOptions {
    fn default() -> Self {
        PackageOptions {
            encoding: PlyEncoding::BinaryLittleEndian,
            base_url: None,
            adaptation_set_id: "0".into(),
        }
    }
}

/// Loads each PLY path and packages it; see [`package_clouds`].
pub fn package(
    frames: &[PathBuf],
    ladder: &[SamplingSpec],
    out_dir: &Path,
    opts: &PackageOptions,
) -> Result<Mpd, PackageError> {
    let clouds = frames
        .par_iter()
        .map(|path| {
            ply::read_ply_file(path).map_err(|source| PackageError::Ply {
                path: path.clone(),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    package_clouds(&clouds, ladder, out_dir, opts)
}

/// Writes one PLY per frame and ladder rung, then the manifest. Densities and
/// sizes in the manifest are measured from the written files. The manifest
/// is written only after every media file succeeded.
pub fn package_clouds(
    frames: &[PointCloud],
    ladder: &[SamplingSpec],
    out_dir: &Path,
    opts: &PackageOptions,
) -> Result<Mpd, PackageError> {
    if frames.is_empty() {
        return Err(PackageError::Empty("no frames"));
    }
    if ladder.is_empty() {
        return Err(PackageError::Empty("empty ladder"));
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let label = {
        let first = ladder[0].method;
        ladder
            .iter()
            .all(|s| s.method == first)
            .then(|| first.name().to_string())
    };

    let frame_list = frames
        .par_iter()
        .enumerate()
        .map(|(i, cloud)| {
            let dir_name = format!("frame_{i}");
            let dir = out_dir.join(&dir_name);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let mut representations: Vec<Representation> = Vec::with_capacity(ladder.len());
            for (k, spec) in ladder.iter().enumerate() {
                let sampled = spec
                    .apply(cloud)
                    .map_err(|source| PackageError::Subsample { frame: i, source })?;
                let density = sampled.len() as u64;
                if representations
                    .last()
                    .is_some_and(|prev| density >= prev.density)
                {
                    return Err(PackageError::Ladder {
                        frame: i,
                        rung: k + 1,
                        density,
                    });
                }
                let bytes = ply::save_ply(&sampled, opts.encoding);
                let file_name = format!("rep_{}.ply", k + 1);
                let path = dir.join(&file_name);
                fs::write(&path, &bytes).map_err(io_err(&path))?;
                let size = bytes.len() as u64;
                representations.push(Representation {
                    id: format!("REP_{}", k + 1),
                    base_url: None,
                    density,
                    size,
                    segments: vec![Segment {
                        id: "0".into(),
                        base_url: file_name,
                        density,
                        size,
                    }],
                });
            }
            Ok(Frame {
                id: i.to_string(),
                base_url: Some(format!("{dir_name}/")),
                adaptation_sets: vec![AdaptationSet {
                    id: opts.adaptation_set_id.clone(),
                    base_url: None,
                    label: label.clone(),
                    representations,
                }],
            })
        })
        .collect::<Result<Vec<_>, PackageError>>()?;

    let mpd = Mpd {
        format: "ply".into(),
        encoding: MediaEncoding::from(opts.encoding),
        presentation_type: PresentationType::Static,
        base_url: opts.base_url.clone(),
        frames: frame_list,
    };
    let text = serialize_mpd(&mpd)?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;
    Ok(mpd)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PackageSummary {
    pub frames: usize,
    pub segments: usize,
    pub media_bytes: u64,
}

/// Checks that every segment of `out_dir/manifest.mpd` resolves to a file
/// with the declared byte size and vertex count. A manifest-level absolute
/// BaseURL is ignored so packages built for a remote origin verify locally.
pub fn verify_package(out_dir: &Path) -> Result<PackageSummary, PackageError> {
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let mut mpd = parse_mpd(&text)?;
    mpd.base_url = None;
    let abs = fs::canonicalize(out_dir).map_err(io_err(out_dir))?;
    let root = Url::from_directory_path(&abs).map_err(|_| PackageError::Verify {
        url: abs.display().to_string(),
        message: "not representable as a file URL".into(),
    })?;

    let mut summary = PackageSummary {
        frames: mpd.frames.len(),
        ..Default::default()
    };
    for frame in &mpd.frames {
        for set in &frame.adaptation_sets {
            for rep in &set.representations {
                for seg in &rep.segments {
                    let url =
                        resolve_url_from(Some(&root), &mpd, &frame.id, &set.id, &rep.id, &seg.id)?;
                    let fail = |message: String| PackageError::Verify {
                        url: url.to_string(),
                        message,
                    };
                    let path = url
                        .to_file_path()
                        .map_err(|_| fail("not a local file".into()))?;
                    if !path.starts_with(&abs) {
                        return Err(fail("resolves outside the package".into()));
                    }
                    let bytes = fs::read(&path).map_err(|e| fail(e.to_string()))?;
                    if bytes.len() as u64 != seg.size {
                        return Err(fail(format!(
                            "size {} != declared {}",
                            bytes.len(),
                            seg.size
                        )));
                    }
                    let header = ply::read_header(&bytes).map_err(|e| fail(e.to_string()))?;
                    let count = header.vertex_count().unwrap_or(0);
                    if count != seg.density {
                        return Err(fail(format!(
                            "{count} vertices != declared {}",
                            seg.density
                        )));
                    }
                    if rep.segments.len() == 1
                        && (seg.size != rep.size || seg.density != rep.density)
                    {
                        return Err(fail(
                            "single segment disagrees with its representation".into(),
                        ));
                    }
                    summary.segments += 1;
                    summary.media_bytes += seg.size;
                }
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;
    use crate::subsample::{Method, Ratio};

    fn cloud(n: usize, seed: u64) -> PointCloud {
        let pts = (0..n)
            .map(|i| {
                let t = (i as u64 * 2654435761 + seed) % 1000;
                Point::new(
                    t as f64,
                    (i % 37) as f64,
                    (i % 11) as f64 * 0.5,
                    (t % 256) as u8,
                    3,
                    4,
                )
            })
            .collect();
        PointCloud::new(pts).unwrap()
    }

    fn ladder(ratios: &[f64]) -> Vec<SamplingSpec> {
        ratios
            .iter()
            .map(|&r| SamplingSpec::new(Method::SortedCluster, Ratio::new(r).unwrap()))
            .collect()
    }

    #[test]
    fn two_frames_two_rungs() {
        let dir = tempfile::tempdir().unwrap();
        let frames = vec![cloud(100, 1), cloud(120, 2)];
        let mpd = package_clouds(
            &frames,
            &ladder(&[1.0, 2.0]),
            dir.path(),
            &PackageOptions::default(),
        )
        .unwrap();
        assert_eq!(mpd.frame_count(), 2);
        for i in 0..2 {
            for k in 1..=2 {
                assert!(dir.path().join(format!("frame_{i}/rep_{k}.ply")).is_file());
            }
        }
        let summary = verify_package(dir.path()).unwrap();
        assert_eq!(summary.segments, 4);
        let reps = &mpd.frames[1].adaptation_sets[0].representations;
        assert_eq!((reps[0].density, reps[1].density), (120, 60));
        assert_eq!(
            mpd.frames[0].adaptation_sets[0].label.as_deref(),
            Some("alg1")
        );
    }

    #[test]
    fn identity_rung_matches_source_size() {
        let dir = tempfile::tempdir().unwrap();
        let src = cloud(64, 9);
        let src_path = dir.path().join("src.ply");
        ply::write_ply_file(&src_path, &src, PlyEncoding::BinaryLittleEndian).unwrap();
        let out = dir.path().join("out");
        let mpd = package(
            std::slice::from_ref(&src_path),
            &ladder(&[1.0]),
            &out,
            &PackageOptions::default(),
        )
        .unwrap();
        let rep = &mpd.frames[0].adaptation_sets[0].representations[0];
        assert_eq!(rep.size, fs::metadata(&src_path).unwrap().len());
    }

    #[test]
    fn packaging_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let frames = vec![cloud(50, 3)];
        let l = ladder(&[1.0, 3.0]);
        package_clouds(&frames, &l, dir.path(), &PackageOptions::default()).unwrap();
        let first = fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
        let media = fs::read(dir.path().join("frame_0/rep_2.ply")).unwrap();
        package_clouds(&frames, &l, dir.path(), &PackageOptions::default()).unwrap();
        assert_eq!(fs::read(dir.path().join(MANIFEST_FILE)).unwrap(), first);
        assert_eq!(
            fs::read(dir.path().join("frame_0/rep_2.ply")).unwrap(),
            media
        );
    }

    #[test]
    fn rejects_non_decreasing_ladder() {
        let dir = tempfile::tempdir().unwrap();
        let err = package_clouds(
            &[cloud(10, 1)],
            &ladder(&[2.0, 2.0]),
            dir.path(),
            &PackageOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, PackageError::Ladder { rung: 2, .. }));
        assert!(!dir.path().join(MANIFEST_FILE).exists());
    }

    #[test]
    fn verification_catches_tampering() {
        let dir = tempfile::tempdir().unwrap();
        package_clouds(
            &[cloud(40, 5)],
            &ladder(&[1.0, 2.0]),
            dir.path(),
            &PackageOptions::default(),
        )
        .unwrap();
        let victim = dir.path().join("frame_0/rep_2.ply");
        let mut bytes = fs::read(&victim).unwrap();
        bytes.push(0);
        fs::write(&victim, bytes).unwrap();
        assert!(matches!(
            verify_package(dir.path()),
            Err(PackageError::Verify { .. })
        ));
        fs::remove_file(&victim).unwrap();
        assert!(matches!(
            verify_package(dir.path()),
            Err(PackageError::Verify { .. })
        ));
    }

    #[test]
    fn empty_inputs() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            package_clouds(&[], &ladder(&[1.0]), dir.path(), &PackageOptions::default()),
            Err(PackageError::Empty(_))
        ));
        assert!(matches!(
            package_clouds(&[cloud(3, 1)], &[], dir.path(), &PackageOptions::default()),
            Err(PackageError::Empty(_))
        ));
    }
}
