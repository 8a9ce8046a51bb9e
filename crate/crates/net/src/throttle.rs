//! Throughput caps for the origin server: a constant rate or a piecewise
//! schedule over time since server start.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ThrottleError {
    #[error("invalid rate `{0}` (examples: 250000, 500KB/s, 8Mbps)")]
    Rate(String),
    #[error("rate must be positive, got {0}")]
    NonPositive(f64),
    #[error("invalid schedule entry `{0}` (expected `<seconds> <rate>`)")]
    Entry(String),
    #[error("schedule times must be non-negative and strictly increasing (at {0} s)")]
    Order(f64),
    #[error("empty schedule")]
    Empty,
}

/// Parses a rate into bytes per second. A bare number is bytes per second;
/// `bps`/`kbps`/`Mbps`/`Gbps` are bits, `B/s`/`KB/s`/`MB/s`/`GB/s` decimal
/// bytes and `KiB/s`/`MiB/s` binary bytes.
pub fn parse_rate(s: &str) -> Result<f64, ThrottleError> {
    let t = s.trim();
    let split = t
        .find(|c: char| {
            !(c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || c == '+' || c == '-')
        })
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .parse()
        .map_err(|_| ThrottleError::Rate(s.to_string()))?;
    let factor = match unit.trim() {
        "" | "B/s" => 1.0,
        "bps" => 1.0 / 8.0,
        "kbps" | "Kbps" => 1e3 / 8.0,
        "Mbps" => 1e6 / 8.0,
        "Gbps" => 1e9 / 8.0,
        "KB/s" | "kB/s" => 1e3,
        "MB/s" => 1e6,
        "GB/s" => 1e9,
        "KiB/s" => 1024.0,
        "MiB/s" => 1024.0 * 1024.0,
        _ => return Err(ThrottleError::Rate(s.to_string())),
    };
    let rate = value * factor;
    if !(rate.is_finite() && rate > 0.0) {
        return Err(ThrottleError::NonPositive(rate));
    }
    Ok(rate)
}

/// Rate limit in bytes per second as a step function of elapsed seconds.
/// Before the first step the connection is unlimited.
#[derive(Debug, Clone, PartialEq)]
pub struct Throttle {
    steps: Vec<(f64, f64)>,
}

impl Throttle {
    pub fn constant(bytes_per_sec: f64) -> Result<Self, ThrottleError> {
        Self::schedule(vec![(0.0, bytes_per_sec)])
    }

    pub fn schedule(steps: Vec<(f64, f64)>) -> Result<Self, ThrottleError> {
        if steps.is_empty() {
            return Err(ThrottleError::Empty);
        }
        let mut prev = None;
        for &(t, rate) in &steps {
            if !(t.is_finite() && t >= 0.0) || prev.is_some_and(|p| t <= p) {
                return Err(ThrottleError::Order(t));
            }
            if !(rate.is_finite() && rate > 0.0) {
                return Err(ThrottleError::NonPositive(rate));
            }
            prev = Some(t);
        }
        Ok(Throttle { steps })
    }

    pub fn steps(&self) -> &[(f64, f64)] {
        &self.steps
    }

    /// Bytes per second in force at `elapsed` seconds, `None` if unlimited.
    pub fn rate_at(&self, elapsed: f64) -> Option<f64> {
        self.steps
            .iter()
            .take_while(|(t, _)| *t <= elapsed)
            .last()
            .map(|&(_, r)| r)
    }
}

impl FromStr for Throttle {
    type Err = ThrottleError;

    /// Accepts a single rate (`2MB/s`) or a schedule: entries `<t> <rate>`
    /// (or `<t>:<rate>`) separated by newlines or commas. `#` starts a
    /// comment.
    fn from_str(s: &str) -> Result<Self, ThrottleError> {
        let entries: Vec<&str> = s
            .split(['\n', ','])
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .collect();
        if let [single] = entries.as_slice() {
            if !single.contains([' ', '\t', ':']) {
                return Throttle::constant(parse_rate(single)?);
            }
        }
        let mut steps = Vec::with_capacity(entries.len());
        for e in entries {
            let (t, rate) = e
                .split_once(':')
                .or_else(|| e.split_once(char::is_whitespace))
                .ok_or_else(|| ThrottleError::Entry(e.to_string()))?;
            let t: f64 = t
                .trim()
                .parse()
                .map_err(|_| ThrottleError::Entry(e.to_string()))?;
            steps.push((t, parse_rate(rate)?));
        }
        Throttle::schedule(steps)
    }
}

impl fmt::Display for Throttle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (t, r)) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}:{r}")?;
        }
        Ok(())
    }
}
