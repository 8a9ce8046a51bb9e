use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::ply::PlyEncoding;

use super::ManifestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MediaEncoding {
    Ascii,
    Binary,
}

impl MediaEncoding {
    pub fn as_str(self) -> &'static str {
        match self {
            MediaEncoding::Ascii => "ascii",
            MediaEncoding::Binary => "binary",
        }
    }
}

impl From<PlyEncoding> for MediaEncoding {
    fn from(e: PlyEncoding) -> Self {
        match e {
            PlyEncoding::Ascii => MediaEncoding::Ascii,
            PlyEncoding::BinaryLittleEndian => MediaEncoding::Binary,
        }
    }
}

impl From<MediaEncoding> for PlyEncoding {
    fn from(e: MediaEncoding) -> Self {
        match e {
            MediaEncoding::Ascii => PlyEncoding::Ascii,
            MediaEncoding::Binary => PlyEncoding::BinaryLittleEndian,
        }
    }
}

impl FromStr for MediaEncoding {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "ascii" => Ok(MediaEncoding::Ascii),
            "binary" => Ok(MediaEncoding::Binary),
            _ => Err(()),
        }
    }
}

/// Whether the manifest may change during a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PresentationType {
    #[default]
    Static,
    Dynamic,
}

impl PresentationType {
    pub fn as_str(self) -> &'static str {
        match self {
            PresentationType::Static => "static",
            PresentationType::Dynamic => "dynamic",
        }
    }
}

impl FromStr for PresentationType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "static" => Ok(PresentationType::Static),
            "dynamic" => Ok(PresentationType::Dynamic),
            _ => Err(()),
        }
    }
}

/// Root of a point cloud media presentation description.
#[derive(Debug, Clone, PartialEq)]
pub struct Mpd {
    /// Container format, e.g. `ply`.
    pub format: String,
    pub encoding: MediaEncoding,
    pub presentation_type: PresentationType,
    pub base_url: Option<String>,
    pub frames: Vec<Frame>,
}

/// One point cloud model in the sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: String,
    pub base_url: Option<String>,
    pub adaptation_sets: Vec<AdaptationSet>,
}

/// Interchangeable versions of a frame, ordered from highest density down.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationSet {
    pub id: String,
    pub base_url: Option<String>,
    /// Free-form tag, e.g. the sampling method.
    pub label: Option<String>,
    pub representations: Vec<Representation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub id: String,
    pub base_url: Option<String>,
    /// Number of points.
    pub density: u64,
    /// Bytes.
    pub size: u64,
    pub segments: Vec<Segment>,
}

/// The fetchable unit: a whole model or a spatial part of one.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: String,
    pub base_url: String,
    pub density: u64,
    pub size: u64,
}

impl fmt::Display for Mpd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::serialize_unchecked(self))
    }
}

fn check_unique<'a>(
    element: &'static str,
    ids: impl Iterator<Item = &'a str>,
) -> Result<(), ManifestError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(ManifestError::DuplicateId {
                element,
                id: id.to_string(),
            });
        }
    }
    Ok(())
}

fn invariant(message: String) -> ManifestError {
    ManifestError::Invariant(message)
}

impl Mpd {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frame(&self, id: &str) -> Option<&Frame> {
        self.frames.iter().find(|f| f.id == id)
    }

    /// Checks every structural invariant of the model.
    pub fn validate(&self) -> Result<(), ManifestError> {
        check_unique("Frame", self.frames.iter().map(|f| f.id.as_str()))?;
        for frame in &self.frames {
            if frame.adaptation_sets.is_empty() {
                return Err(invariant(format!(
                    "frame `{}` has no adaptation set",
                    frame.id
                )));
            }
            check_unique(
                "AdaptationSet",
                frame.adaptation_sets.iter().map(|s| s.id.as_str()),
            )?;
            for set in &frame.adaptation_sets {
                set.validate()?;
            }
        }
        Ok(())
    }
}

impl Frame {
    pub fn adaptation_set(&self, id: &str) -> Option<&AdaptationSet> {
        self.adaptation_sets.iter().find(|s| s.id == id)
    }
}

impl AdaptationSet {
    pub fn representation(&self, id: &str) -> Option<&Representation> {
        self.representations.iter().find(|r| r.id == id)
    }

    fn validate(&self) -> Result<(), ManifestError> {
        if self.representations.is_empty() {
            return Err(invariant(format!(
                "adaptation set `{}` has no representation",
                self.id
            )));
        }
        check_unique(
            "Representation",
            self.representations.iter().map(|r| r.id.as_str()),
        )?;
        for pair in self.representations.windows(2) {
            if pair[1].density >= pair[0].density {
                return Err(invariant(format!(
                    "adaptation set `{}`: density of `{}` ({}) is not below `{}` ({})",
                    self.id, pair[1].id, pair[1].density, pair[0].id, pair[0].density
                )));
            }
        }
        for rep in &self.representations {
            rep.validate()?;
        }
        Ok(())
    }
}

impl Representation {
    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id == id)
    }

    fn validate(&self) -> Result<(), ManifestError> {
        if self.density == 0 || self.size == 0 {
            return Err(invariant(format!(
                "representation `{}` needs positive density and size",
                self.id
            )));
        }
        if self.segments.is_empty() {
            return Err(invariant(format!(
                "representation `{}` has no segment",
                self.id
            )));
        }
        check_unique("Segment", self.segments.iter().map(|s| s.id.as_str()))?;
        if self.segments.len() > 1 {
            let total: u64 = self.segments.iter().map(|s| s.density).sum();
            if total != self.density {
                return Err(invariant(format!(
                    "segments of `{}` sum to {total} points, representation declares {}",
                    self.id, self.density
                )));
            }
        }
        Ok(())
    }
}
