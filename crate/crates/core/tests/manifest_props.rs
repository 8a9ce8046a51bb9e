use dashpc_core::manifest::{
    package_clouds, parse_mpd, parse_mpd_with_warnings, resolve_url, serialize_mpd, verify_package,
    AdaptationSet, Frame, ManifestError, MediaEncoding, Mpd, PackageOptions, PresentationType,
    Representation, Segment,
};
use dashpc_core::{Method, Point, PointCloud, Ratio, SamplingSpec};
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    // Includes markup-significant characters; no surrounding whitespace
    // because BaseURL content is trimmed.
    "[A-Za-z0-9_/&<>]([A-Za-z0-9_./:?=&<>\"' %#-]{0,10}[A-Za-z0-9_/&<>])?"
}

fn opt_text() -> impl Strategy<Value = Option<String>> {
    prop::option::of(text())
}

fn segments(density: u64) -> impl Strategy<Value = Vec<Segment>> {
    (1usize..4, text(), 1u64..1_000_000).prop_map(move |(count, url, size)| {
        let count = count.min(density as usize);
        (0..count)
            .map(|i| {
                let share = density / count as u64 + u64::from((i as u64) < density % count as u64);
                Segment {
                    id: format!("s{i}"),
                    base_url: format!("{url}{i}"),
                    density: share,
                    size: size + i as u64,
                }
            })
            .collect()
    })
}

fn adaptation_set(id: usize) -> impl Strategy<Value = AdaptationSet> {
    (
        opt_text(),
        opt_text(),
        prop::collection::btree_set(1u64..5_000_000, 1..6),
    )
        .prop_flat_map(move |(label, base, densities)| {
            let densities: Vec<u64> = densities.into_iter().rev().collect();
            let reps: Vec<_> = densities
                .into_iter()
                .enumerate()
                .map(|(k, d)| {
                    (opt_text(), 1u64..u64::MAX / 2, segments(d)).prop_map(
                        move |(b, size, segs)| Representation {
                            id: format!("REP_{}", k + 1),
                            base_url: b,
                            density: d,
                            size,
                            segments: segs,
                        },
                    )
                })
                .collect();
            let label = label.clone();
            let base = base.clone();
            reps.prop_map(move |representations| AdaptationSet {
                id: id.to_string(),
                base_url: base.clone(),
                label: label.clone(),
                representations,
            })
        })
}

fn frame(id: usize) -> impl Strategy<Value = Frame> {
    (opt_text(), prop::collection::vec(Just(()), 1..3)).prop_flat_map(move |(base, sets)| {
        let sets: Vec<_> = (0..sets.len()).map(adaptation_set).collect();
        let base = base.clone();
        sets.prop_map(move |adaptation_sets| Frame {
            id: format!("f{id}"),
            base_url: base.clone(),
            adaptation_sets,
        })
    })
}

fn mpd() -> impl Strategy<Value = Mpd> {
    (
        opt_text(),
        prop::bool::ANY,
        prop::bool::ANY,
        "[a-z]{1,5}",
        1usize..5,
    )
        .prop_flat_map(|(base, binary, dynamic, format, n)| {
            let frames: Vec<_> = (0..n).map(frame).collect();
            let base = base.clone();
            let format = format.clone();
            frames.prop_map(move |frames| Mpd {
                format: format.clone(),
                encoding: if binary {
                    MediaEncoding::Binary
                } else {
                    MediaEncoding::Ascii
                },
                presentation_type: if dynamic {
                    PresentationType::Dynamic
                } else {
                    PresentationType::Static
                },
                base_url: base.clone(),
                frames,
            })
        })
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(m in mpd()) {
        let text = serialize_mpd(&m).unwrap();
        prop_assert_eq!(parse_mpd(&text).unwrap(), m.clone());
        prop_assert_eq!(serialize_mpd(&m).unwrap(), text);
    }

    #[test]
    fn arbitrary_text_never_panics(s in "\\PC{0,200}") {
        let _ = parse_mpd(&s);
    }
}

const SAMPLE: &str = r#"<?xml version="1.0"?>
<PointCloudMPD format="ply" encoding="binary" frames="1">
  <BaseURL>http://example.com/media/</BaseURL>
  <Frame id="0" extra="1">
    <BaseURL>soldier/</BaseURL>
    <AdaptationSet id="0">
      <Representation id="REP_1" density="1060464" size="15907152">
        <Segment id="0" density="1060464" size="15907152"><BaseURL>full.ply</BaseURL></Segment>
      </Representation>
      <Representation id="REP_2" density="151495" size="2272633">
        <Segment id="0" density="151495" size="2272633"><BaseURL>r7.ply</BaseURL></Segment>
      </Representation>
      <Note/>
    </AdaptationSet>
  </Frame>
</PointCloudMPD>
"#;

#[test]
fn reads_hand_written_manifest() {
    let (m, warnings) = parse_mpd_with_warnings(SAMPLE).unwrap();
    assert_eq!(m.presentation_type, PresentationType::Static);
    assert_eq!(warnings.len(), 2, "{warnings:?}");
    let url = resolve_url(&m, "0", "0", "REP_2", "0").unwrap();
    assert_eq!(url.as_str(), "http://example.com/media/soldier/r7.ply");
}

#[test]
fn rejects_invalid_documents() {
    let cases = [
        (
            SAMPLE.replace("frames=\"1\"", "frames=\"2\""),
            "frame count",
        ),
        (
            SAMPLE.replace(
                "density=\"151495\" size=\"2272633\">\n",
                "density=\"2000000\" size=\"2272633\">\n",
            ),
            "ladder",
        ),
        (
            SAMPLE.replace("<BaseURL>r7.ply</BaseURL>", ""),
            "segment url",
        ),
        (SAMPLE.replace("PointCloudMPD", "MPD"), "root"),
        (SAMPLE.replace("REP_2", "REP_1"), "duplicate"),
        (
            SAMPLE.replace("size=\"2272633\">\n", "size=\"-5\">\n"),
            "number",
        ),
    ];
    for (doc, what) in cases {
        assert!(parse_mpd(&doc).is_err(), "{what} should be rejected");
    }
    assert!(matches!(
        parse_mpd(&SAMPLE.replace("frames=\"1\"", "frames=\"2\"")),
        Err(ManifestError::FrameCountMismatch {
            declared: 2,
            found: 1
        })
    ));
}

#[test]
fn packaged_sequence_verifies() {
    let frames: Vec<PointCloud> = (0..3)
        .map(|f| {
            PointCloud::new(
                (0..500)
                    .map(|i| {
                        Point::new(
                            (i % 10) as f64,
                            (i / 10 % 10) as f64,
                            (i / 100 + f) as f64,
                            1,
                            2,
                            3,
                        )
                    })
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let ladder: Vec<SamplingSpec> = [
        (Method::SortedCluster, 1.0),
        (Method::DensityTree, 2.0),
        (Method::OctreeNeighbors, 5.0),
    ]
    .iter()
    .map(|&(m, r)| SamplingSpec::new(m, Ratio::new(r).unwrap()))
    .collect();
    let dir = tempfile::tempdir().unwrap();
    let opts = PackageOptions {
        base_url: Some("http://origin.invalid/pc/".into()),
        ..Default::default()
    };
    let m = package_clouds(&frames, &ladder, dir.path(), &opts).unwrap();
    let summary = verify_package(dir.path()).unwrap();
    assert_eq!(summary.frames, 3);
    assert_eq!(summary.segments, 9);
    let densities: Vec<u64> = m.frames[2].adaptation_sets[0]
        .representations
        .iter()
        .map(|r| r.density)
        .collect();
    assert_eq!(densities, vec![500, 250, 100]);
    // Mixed methods leave the set unlabelled.
    assert_eq!(m.frames[0].adaptation_sets[0].label, None);
    let url = resolve_url(&m, "1", "0", "REP_3", "0").unwrap();
    assert_eq!(url.as_str(), "http://origin.invalid/pc/frame_1/rep_3.ply");
}
