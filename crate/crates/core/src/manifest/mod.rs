//! Point cloud media presentation description (manifest).
//!
//! Document layout:
//!
//! ```text
//! <PointCloudMPD format="ply" encoding="binary" frames="N" type="static">
//!   <BaseURL>…</BaseURL>?
//!   <Frame id="…">
//!     <BaseURL>…</BaseURL>?
//!     <AdaptationSet id="…" label="…"?>
//!       <BaseURL>…</BaseURL>?
//!       <Representation id="…" density="points" size="bytes">
//!         <BaseURL>…</BaseURL>?
//!         <Segment id="…" density="points" size="bytes">
//!           <BaseURL>…</BaseURL>
//! ```

mod model;
mod package;
mod resolve;
pub mod xml;

use std::str::FromStr;

use thiserror::Error;

pub use model::{
    AdaptationSet, Frame, MediaEncoding, Mpd, PresentationType, Representation, Segment,
};
pub use package::{
    package, package_clouds, verify_package, PackageError, PackageOptions, PackageSummary,
    MANIFEST_FILE,
};
pub use resolve::{resolve_url, resolve_url_from, ResolveError};
use xml::Element;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ManifestError {
    #[error(transparent)]
    Xml(#[from] xml::XmlError),
    #[error("root element is `{0}`, expected `PointCloudMPD`")]
    UnexpectedRoot(String),
    #[error("<{element}> is missing required attribute `{attribute}`")]
    MissingAttribute {
        element: &'static str,
        attribute: &'static str,
    },
    #[error("<{element}> has invalid {attribute}=\"{value}\"")]
    InvalidAttribute {
        element: &'static str,
        attribute: &'static str,
        value: String,
    },
    #[error("<Segment id=\"{0}\"> has no BaseURL")]
    MissingSegmentUrl(String),
    #[error("duplicate {element} id `{id}`")]
    DuplicateId { element: &'static str, id: String },
    #[error("manifest declares {declared} frames but lists {found}")]
    FrameCountMismatch { declared: u64, found: usize },
    #[error("manifest invariant violated: {0}")]
    Invariant(String),
}

const ROOT: &str = "PointCloudMPD";
const BASE_URL: &str = "BaseURL";

fn base_url_child(url: &Option<String>, el: &mut Element) {
    if let Some(u) = url {
        el.push(Element::new(BASE_URL).with_text(u.clone()));
    }
}

fn to_element(m: &Mpd) -> Element {
    let mut root = Element::new(ROOT)
        .with_attr("format", &m.format)
        .with_attr("encoding", m.encoding.as_str())
        .with_attr("frames", m.frames.len())
        .with_attr("type", m.presentation_type.as_str());
    base_url_child(&m.base_url, &mut root);
    for frame in &m.frames {
        let mut fe = Element::new("Frame").with_attr("id", &frame.id);
        base_url_child(&frame.base_url, &mut fe);
        for set in &frame.adaptation_sets {
            let mut se = Element::new("AdaptationSet").with_attr("id", &set.id);
            if let Some(label) = &set.label {
                se = se.with_attr("label", label);
            }
            base_url_child(&set.base_url, &mut se);
            for rep in &set.representations {
                let mut re = Element::new("Representation")
                    .with_attr("id", &rep.id)
                    .with_attr("density", rep.density)
                    .with_attr("size", rep.size);
                base_url_child(&rep.base_url, &mut re);
                for seg in &rep.segments {
                    let mut ge = Element::new("Segment")
                        .with_attr("id", &seg.id)
                        .with_attr("density", seg.density)
                        .with_attr("size", seg.size);
                    base_url_child(&Some(seg.base_url.clone()), &mut ge);
                    re.push(ge);
                }
                se.push(re);
            }
            fe.push(se);
        }
        root.push(fe);
    }
    root
}

pub(crate) fn serialize_unchecked(m: &Mpd) -> String {
    xml::write_document(&to_element(m))
}

/// Serializes a manifest after checking its invariants. Output is
/// deterministic for equal inputs.
pub fn serialize_mpd(m: &Mpd) -> Result<String, ManifestError> {
    m.validate()?;
    Ok(serialize_unchecked(m))
}

/// Parses a manifest. Unknown elements and attributes are skipped and logged.
pub fn parse_mpd(text: &str) -> Result<Mpd, ManifestError> {
    parse_mpd_with_warnings(text).map(|(m, _)| m)
}

/// Like [`parse_mpd`], also returning a note for each ignored item.
pub fn parse_mpd_with_warnings(text: &str) -> Result<(Mpd, Vec<String>), ManifestError> {
    let root = xml::parse(text)?;
    if root.name != ROOT {
        return Err(ManifestError::UnexpectedRoot(root.name));
    }
    let mut p = Parser {
        warnings: Vec::new(),
    };
    let mpd = p.mpd(&root)?;
    for w in &p.warnings {
        log::warn!("manifest: {w}");
    }
    Ok((mpd, p.warnings))
}

struct Parser {
    warnings: Vec<String>,
}

impl Parser {
    fn check_attrs(&mut self, el: &Element, known: &[&str]) {
        for (k, _) in &el.attributes {
            if !known.contains(&k.as_str()) {
                self.warnings
                    .push(format!("ignoring attribute `{k}` on <{}>", el.name));
            }
        }
    }

    fn unknown_child(&mut self, parent: &Element, child: &Element) {
        self.warnings.push(format!(
            "ignoring element <{}> inside <{}>",
            child.name, parent.name
        ));
    }

    fn required<'e>(
        el: &'e Element,
        element: &'static str,
        attribute: &'static str,
    ) -> Result<&'e str, ManifestError> {
        el.attr(attribute)
            .ok_or(ManifestError::MissingAttribute { element, attribute })
    }

    fn number(
        el: &Element,
        element: &'static str,
        attribute: &'static str,
    ) -> Result<u64, ManifestError> {
        let raw = Self::required(el, element, attribute)?;
        raw.parse::<u64>()
            .map_err(|_| ManifestError::InvalidAttribute {
                element,
                attribute,
                value: raw.to_string(),
            })
    }

    fn enumerated<T: FromStr>(
        el: &Element,
        element: &'static str,
        attribute: &'static str,
    ) -> Result<Option<T>, ManifestError> {
        el.attr(attribute)
            .map(|raw| {
                raw.parse::<T>()
                    .map_err(|_| ManifestError::InvalidAttribute {
                        element,
                        attribute,
                        value: raw.to_string(),
                    })
            })
            .transpose()
    }

    fn base_url(&mut self, el: &Element) -> Result<Option<String>, ManifestError> {
        let mut found = None;
        for child in el.children.iter().filter(|c| c.name == BASE_URL) {
            if found.is_some() {
                self.warnings
                    .push(format!("ignoring extra <BaseURL> inside <{}>", el.name));
                continue;
            }
            found = Some(child.text.trim().to_string());
        }
        Ok(found)
    }

    fn mpd(&mut self, el: &Element) -> Result<Mpd, ManifestError> {
        self.check_attrs(el, &["format", "encoding", "frames", "type"]);
        let format = Self::required(el, ROOT, "format")?.to_string();
        let encoding = Self::enumerated::<MediaEncoding>(el, ROOT, "encoding")?.ok_or(
            ManifestError::MissingAttribute {
                element: ROOT,
                attribute: "encoding",
            },
        )?;
        let declared = Self::number(el, ROOT, "frames")?;
        let presentation_type =
            Self::enumerated::<PresentationType>(el, ROOT, "type")?.unwrap_or_default();
        let base_url = self.base_url(el)?;
        let mut frames = Vec::new();
        for child in &el.children {
            match child.name.as_str() {
                "Frame" => frames.push(self.frame(child)?),
                BASE_URL => {}
                _ => self.unknown_child(el, child),
            }
        }
        if declared != frames.len() as u64 {
            return Err(ManifestError::FrameCountMismatch {
                declared,
                found: frames.len(),
            });
        }
        let mpd = Mpd {
            format,
            encoding,
            presentation_type,
            base_url,
            frames,
        };
        mpd.validate()?;
        Ok(mpd)
    }

    fn frame(&mut self, el: &Element) -> Result<Frame, ManifestError> {
        self.check_attrs(el, &["id"]);
        let id = Self::required(el, "Frame", "id")?.to_string();
        let base_url = self.base_url(el)?;
        let mut adaptation_sets = Vec::new();
        for child in &el.children {
            match child.name.as_str() {
                "AdaptationSet" => adaptation_sets.push(self.adaptation_set(child)?),
                BASE_URL => {}
                _ => self.unknown_child(el, child),
            }
        }
        Ok(Frame {
            id,
            base_url,
            adaptation_sets,
        })
    }

    fn adaptation_set(&mut self, el: &Element) -> Result<AdaptationSet, ManifestError> {
        self.check_attrs(el, &["id", "label"]);
        let id = Self::required(el, "AdaptationSet", "id")?.to_string();
        let label = el.attr("label").map(str::to_string);
        let base_url = self.base_url(el)?;
        let mut representations = Vec::new();
        for child in &el.children {
            match child.name.as_str() {
                "Representation" => representations.push(self.representation(child)?),
                BASE_URL => {}
                _ => self.unknown_child(el, child),
            }
        }
        Ok(AdaptationSet {
            id,
            base_url,
            label,
            representations,
        })
    }

    fn representation(&mut self, el: &Element) -> Result<Representation, ManifestError> {
        const NAME: &str = "Representation";
        self.check_attrs(el, &["id", "density", "size"]);
        let id = Self::required(el, NAME, "id")?.to_string();
        let density = Self::number(el, NAME, "density")?;
        let size = Self::number(el, NAME, "size")?;
        let base_url = self.base_url(el)?;
        let mut segments = Vec::new();
        for child in &el.children {
            match child.name.as_str() {
                "Segment" => segments.push(self.segment(child)?),
                BASE_URL => {}
                _ => self.unknown_child(el, child),
            }
        }
        Ok(Representation {
            id,
            base_url,
            density,
            size,
            segments,
        })
    }

    fn segment(&mut self, el: &Element) -> Result<Segment, ManifestError> {
        const NAME: &str = "Segment";
        self.check_attrs(el, &["id", "density", "size"]);
        let id = Self::required(el, NAME, "id")?.to_string();
        let density = Self::number(el, NAME, "density")?;
        let size = Self::number(el, NAME, "size")?;
        let base_url = self
            .base_url(el)?
            .ok_or_else(|| ManifestError::MissingSegmentUrl(id.clone()))?;
        for child in el.children.iter().filter(|c| c.name != BASE_URL) {
            self.unknown_child(el, child);
        }
        Ok(Segment {
            id,
            base_url,
            density,
            size,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal() -> Mpd {
        Mpd {
            format: "ply".into(),
            encoding: MediaEncoding::Binary,
            presentation_type: PresentationType::Static,
            base_url: Some("http://h/pc/".into()),
            frames: vec![Frame {
                id: "0".into(),
                base_url: None,
                adaptation_sets: vec![AdaptationSet {
                    id: "0".into(),
                    base_url: None,
                    label: Some("alg1".into()),
                    representations: vec![Representation {
                        id: "REP_1".into(),
                        base_url: None,
                        density: 10,
                        size: 300,
                        segments: vec![Segment {
                            id: "0".into(),
                            base_url: "f0/r1.ply".into(),
                            density: 10,
                            size: 300,
                        }],
                    }],
                }],
            }],
        }
    }

    #[test]
    fn minimal_document_layout() {
        let text = serialize_mpd(&minimal()).unwrap();
        let expected = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>
<PointCloudMPD format=\"ply\" encoding=\"binary\" frames=\"1\" type=\"static\">
  <BaseURL>http://h/pc/</BaseURL>
  <Frame id=\"0\">
    <AdaptationSet id=\"0\" label=\"alg1\">
      <Representation id=\"REP_1\" density=\"10\" size=\"300\">
        <Segment id=\"0\" density=\"10\" size=\"300\">
          <BaseURL>f0/r1.ply</BaseURL>
        </Segment>
      </Representation>
    </AdaptationSet>
  </Frame>
</PointCloudMPD>
";
        assert_eq!(text, expected);
        assert_eq!(parse_mpd(&text).unwrap(), minimal());
    }

    #[test]
    fn type_defaults_to_static() {
        let text = serialize_mpd(&minimal())
            .unwrap()
            .replace(" type=\"static\"", "");
        assert_eq!(
            parse_mpd(&text).unwrap().presentation_type,
            PresentationType::Static
        );
    }

    #[test]
    fn unknown_items_are_ignored_with_warnings() {
        let text = serialize_mpd(&minimal()).unwrap().replace(
            "<Frame id=\"0\">",
            "<Frame id=\"0\" viewport=\"front\"><Note>hi</Note>",
        );
        let (m, warnings) = parse_mpd_with_warnings(&text).unwrap();
        assert_eq!(m, minimal());
        assert_eq!(warnings.len(), 2);
    }

    #[test]
    fn distinct_errors() {
        type Case = (String, fn(&ManifestError) -> bool);
        let good = serialize_mpd(&minimal()).unwrap();
        let cases: Vec<Case> = vec![
            (
                good.replace(" size=\"300\">\n        <Segment", ">\n        <Segment"),
                |e| {
                    matches!(
                        e,
                        ManifestError::MissingAttribute {
                            element: "Representation",
                            attribute: "size"
                        }
                    )
                },
            ),
            (good.replace("frames=\"1\"", "frames=\"2\""), |e| {
                matches!(
                    e,
                    ManifestError::FrameCountMismatch {
                        declared: 2,
                        found: 1
                    }
                )
            }),
            (
                good.replace(
                    "density=\"10\" size=\"300\">\n        <Segment",
                    "density=\"ten\" size=\"300\">\n        <Segment",
                ),
                |e| {
                    matches!(
                        e,
                        ManifestError::InvalidAttribute {
                            attribute: "density",
                            ..
                        }
                    )
                },
            ),
            (good.replace("</PointCloudMPD>", ""), |e| {
                matches!(e, ManifestError::Xml(_))
            }),
            (good.replace("PointCloudMPD", "MPD"), |e| {
                matches!(e, ManifestError::UnexpectedRoot(_))
            }),
            (
                good.replace("          <BaseURL>f0/r1.ply</BaseURL>\n", ""),
                |e| matches!(e, ManifestError::MissingSegmentUrl(_)),
            ),
            (
                good.replace("encoding=\"binary\"", "encoding=\"zip\""),
                |e| {
                    matches!(
                        e,
                        ManifestError::InvalidAttribute {
                            attribute: "encoding",
                            ..
                        }
                    )
                },
            ),
        ];
        for (text, check) in cases {
            let err = parse_mpd(&text).unwrap_err();
            assert!(check(&err), "unexpected error {err:?}");
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut m = minimal();
        m.frames.push(m.frames[0].clone());
        assert!(matches!(
            serialize_mpd(&m),
            Err(ManifestError::DuplicateId {
                element: "Frame",
                ..
            })
        ));
        let text = serialize_unchecked(&m);
        assert!(matches!(
            parse_mpd(&text),
            Err(ManifestError::DuplicateId { .. })
        ));
    }

    #[test]
    fn ladder_must_decrease() {
        let mut m = minimal();
        let set = &mut m.frames[0].adaptation_sets[0];
        let mut second = set.representations[0].clone();
        second.id = "REP_2".into();
        set.representations.push(second);
        assert!(matches!(
            serialize_mpd(&m),
            Err(ManifestError::Invariant(_))
        ));
    }

    #[test]
    fn segment_densities_must_sum() {
        let mut m = minimal();
        let rep = &mut m.frames[0].adaptation_sets[0].representations[0];
        let mut other = rep.segments[0].clone();
        other.id = "1".into();
        rep.segments.push(other);
        assert!(matches!(
            serialize_mpd(&m),
            Err(ManifestError::Invariant(_))
        ));
        let rep = &mut m.frames[0].adaptation_sets[0].representations[0];
        rep.segments[0].density = 4;
        rep.segments[1].density = 6;
        assert!(serialize_mpd(&m).is_ok());
    }
}
