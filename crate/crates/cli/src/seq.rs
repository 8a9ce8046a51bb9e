//! Frame sequences given as `<pattern>:<start>:<count>`, where the pattern
//! holds one printf-style index placeholder (`%d` or `%0Nd`).

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequencePattern {
    prefix: String,
    width: usize,
    suffix: String,
    pub start: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SequenceError {
    Syntax(String),
    Placeholder(String),
    Missing(Vec<PathBuf>),
}

impl fmt::Display for SequenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SequenceError::Syntax(s) => {
                write!(
                    f,
                    "invalid sequence `{s}` (expected <pattern>:<start>:<count>)"
                )
            }
            SequenceError::Placeholder(p) => {
                write!(
                    f,
                    "pattern `{p}` must contain exactly one %d or %0Nd placeholder"
                )
            }
            SequenceError::Missing(paths) => {
                write!(
                    f,
                    "{} sequence file(s) missing, first: {}",
                    paths.len(),
                    paths[0].display()
                )
            }
        }
    }
}

impl std::error::Error for SequenceError {}

impl SequencePattern {
    pub fn path(&self, index: u64) -> PathBuf {
        PathBuf::from(format!(
            "{}{:0width$}{}",
            self.prefix,
            index,
            self.suffix,
            width = self.width
        ))
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        (self.start..self.start + self.count)
            .map(|i| self.path(i))
            .collect()
    }

    /// Expands the sequence, failing if any file does not exist.
    pub fn existing_paths(&self) -> Result<Vec<PathBuf>, SequenceError> {
        let paths = self.paths();
        let missing: Vec<PathBuf> = paths.iter().filter(|p| !p.is_file()).cloned().collect();
        if missing.is_empty() {
            Ok(paths)
        } else {
            Err(SequenceError::Missing(missing))
        }
    }
}

fn split_placeholder(pattern: &str) -> Option<(String, usize, String)> {
    let mut found = None;
    let bytes = pattern.as_bytes();
    let mut i = 0;
    let mut prefix = String::new();
    while i < bytes.len() {
        if bytes[i] == b'%' {
            if bytes.get(i + 1) == Some(&b'%') {
                prefix.push('%');
                i += 2;
                continue;
            }
            let digits = pattern[i + 1..]
                .bytes()
                .take_while(u8::is_ascii_digit)
                .count();
            let spec = &pattern[i + 1..i + 1 + digits];
            if found.is_some()
                || pattern.as_bytes().get(i + 1 + digits) != Some(&b'd')
                || (digits > 0 && !spec.starts_with('0'))
            {
                return None;
            }
            let width = if digits > 0 { spec.parse().ok()? } else { 0 };
            found = Some((std::mem::take(&mut prefix), width));
            i += digits + 2;
            continue;
        }
        let ch = pattern[i..].chars().next()?;
        prefix.push(ch);
        i += ch.len_utf8();
    }
    found.map(|(p, w)| (p, w, prefix))
}

impl FromStr for SequencePattern {
    type Err = SequenceError;

    fn from_str(s: &str) -> Result<Self, SequenceError> {
        let mut parts = s.rsplitn(3, ':');
        let (count, start, pattern) = match (parts.next(), parts.next(), parts.next()) {
            (Some(c), Some(st), Some(p)) if !p.is_empty() => (c, st, p),
            _ => return Err(SequenceError::Syntax(s.into())),
        };
        let start: u64 = start
            .trim()
            .parse()
            .map_err(|_| SequenceError::Syntax(s.into()))?;
        let count: u64 = count
            .trim()
            .parse()
            .map_err(|_| SequenceError::Syntax(s.into()))?;
        if count == 0 || start.checked_add(count).is_none() {
            return Err(SequenceError::Syntax(s.into()));
        }
        let (prefix, width, suffix) =
            split_placeholder(pattern).ok_or_else(|| SequenceError::Placeholder(pattern.into()))?;
        Ok(SequencePattern {
            prefix,
            width,
            suffix,
            start,
            count,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expands_padded_indices() {
        let s: SequencePattern = "data/frame_%04d.ply:8:3".parse().unwrap();
        let names: Vec<_> = s.paths().iter().map(|p| p.display().to_string()).collect();
        assert_eq!(
            names,
            [
                "data/frame_0008.ply",
                "data/frame_0009.ply",
                "data/frame_0010.ply"
            ]
        );
        let plain: SequencePattern = "f%d.ply:99:2".parse().unwrap();
        assert_eq!(plain.path(100), PathBuf::from("f100.ply"));
        let pct: SequencePattern = "100%%_%d:0:1".parse().unwrap();
        assert_eq!(pct.path(0), PathBuf::from("100%_0"));
    }

    #[test]
    fn rejects_bad_patterns() {
        for bad in [
            "f.ply:0:3",
            "f%d%d:0:1",
            "f%5d:0:1",
            "f%s:0:1",
            "f%d:x:1",
            "f%d:0:0",
            "f%d:1",
            ":0:1",
        ] {
            assert!(bad.parse::<SequencePattern>().is_err(), "{bad}");
        }
    }

    #[test]
    fn missing_files_reported() {
        let dir = std::env::temp_dir().join("dashpc-seq-missing-test");
        let s: SequencePattern = format!("{}/nope_%d.ply:0:2", dir.display())
            .parse()
            .unwrap();
        match s.existing_paths() {
            Err(SequenceError::Missing(p)) => assert_eq!(p.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
