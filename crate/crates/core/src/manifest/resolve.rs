use thiserror::Error;
use url::Url;

use super::Mpd;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ResolveError {
    #[error("no {kind} with id `{id}`")]
    UnknownId { kind: &'static str, id: String },
    #[error("cannot resolve `{0}`: no absolute base URL above it")]
    Unresolvable(String),
    #[error("invalid URL reference `{reference}`: {message}")]
    InvalidUrl { reference: String, message: String },
}

fn join(base: Option<Url>, reference: &str) -> Result<Option<Url>, ResolveError> {
    let invalid = |e: url::ParseError| ResolveError::InvalidUrl {
        reference: reference.to_string(),
        message: e.to_string(),
    };
    match base {
        Some(b) => b.join(reference).map(Some).map_err(invalid),
        None => match Url::parse(reference) {
            Ok(u) => Ok(Some(u)),
            Err(url::ParseError::RelativeUrlWithoutBase) => Ok(None),
            Err(e) => Err(invalid(e)),
        },
    }
}

/// Resolves a segment's absolute URL by applying each level's BaseURL in
/// turn (manifest, frame, adaptation set, representation, segment) with
/// RFC 3986 reference resolution. Missing levels are skipped.
pub fn resolve_url(
    m: &Mpd,
    frame: &str,
    set: &str,
    representation: &str,
    segment: &str,
) -> Result<Url, ResolveError> {
    resolve_url_from(None, m, frame, set, representation, segment)
}

/// Like [`resolve_url`], starting from the manifest's own location so that
/// fully relative manifests resolve.
pub fn resolve_url_from(
    document: Option<&Url>,
    m: &Mpd,
    frame: &str,
    set: &str,
    representation: &str,
    segment: &str,
) -> Result<Url, ResolveError> {
    let unknown = |kind, id: &str| ResolveError::UnknownId {
        kind,
        id: id.to_string(),
    };
    let f = m.frame(frame).ok_or_else(|| unknown("frame", frame))?;
    let s = f
        .adaptation_set(set)
        .ok_or_else(|| unknown("adaptation set", set))?;
    let r = s
        .representation(representation)
        .ok_or_else(|| unknown("representation", representation))?;
    let g = r
        .segment(segment)
        .ok_or_else(|| unknown("segment", segment))?;

    let mut current = document.cloned();
    for level in [&m.base_url, &f.base_url, &s.base_url, &r.base_url]
        .into_iter()
        .flatten()
    {
        current = join(current, level)?;
    }
    join(current, &g.base_url)?.ok_or_else(|| ResolveError::Unresolvable(g.base_url.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::tests::minimal;

    fn with_bases(
        root: Option<&str>,
        frame: Option<&str>,
        set: Option<&str>,
        rep: Option<&str>,
        seg: &str,
    ) -> Mpd {
        let mut m = minimal();
        m.base_url = root.map(Into::into);
        let f = &mut m.frames[0];
        f.base_url = frame.map(Into::into);
        let s = &mut f.adaptation_sets[0];
        s.base_url = set.map(Into::into);
        let r = &mut s.representations[0];
        r.base_url = rep.map(Into::into);
        r.segments[0].base_url = seg.into();
        m
    }

    fn resolve(m: &Mpd) -> Result<String, ResolveError> {
        resolve_url(m, "0", "0", "REP_1", "0").map(|u| u.to_string())
    }

    #[test]
    fn root_plus_segment() {
        let m = with_bases(Some("http://h/pc/"), None, None, None, "f0/r1.ply");
        assert_eq!(resolve(&m).unwrap(), "http://h/pc/f0/r1.ply");
    }

    #[test]
    fn absolute_level_overrides_root() {
        let m = with_bases(
            Some("http://h/pc/"),
            Some("http://mirror:8080/x/"),
            None,
            None,
            "r.ply",
        );
        assert_eq!(resolve(&m).unwrap(), "http://mirror:8080/x/r.ply");
    }

    #[test]
    fn chained_relatives() {
        let m = with_bases(
            Some("http://h/root/"),
            Some("a/"),
            Some("b/"),
            None,
            "c.ply",
        );
        assert_eq!(resolve(&m).unwrap(), "http://h/root/a/b/c.ply");
        // RFC 3986 merge: a base without trailing slash drops its last segment.
        let m = with_bases(
            Some("http://h/root/index.mpd"),
            Some("a/"),
            None,
            Some("../b/"),
            "./c.ply",
        );
        assert_eq!(resolve(&m).unwrap(), "http://h/root/b/c.ply");
        let m = with_bases(
            Some("http://h/root/"),
            Some("/abs/"),
            None,
            None,
            "c.ply?v=1",
        );
        assert_eq!(resolve(&m).unwrap(), "http://h/abs/c.ply?v=1");
    }

    #[test]
    fn relative_without_root_is_unresolvable() {
        let m = with_bases(None, Some("a/"), None, None, "c.ply");
        assert_eq!(resolve(&m), Err(ResolveError::Unresolvable("c.ply".into())));
        let doc = Url::parse("http://srv/m/manifest.mpd").unwrap();
        let url = resolve_url_from(Some(&doc), &m, "0", "0", "REP_1", "0").unwrap();
        assert_eq!(url.as_str(), "http://srv/m/a/c.ply");
    }

    #[test]
    fn unknown_ids() {
        let m = minimal();
        assert!(matches!(
            resolve_url(&m, "9", "0", "REP_1", "0"),
            Err(ResolveError::UnknownId { kind: "frame", .. })
        ));
        assert!(matches!(
            resolve_url(&m, "0", "0", "REP_9", "0"),
            Err(ResolveError::UnknownId {
                kind: "representation",
                ..
            })
        ));
    }
}
