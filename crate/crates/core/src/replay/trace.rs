//! Traffic traces: `(timestamp, payload_len)` pairs, one per device packet.
//!
//! CSV form: a `timestamp_s,payload_len` header line, then one event per
//! line with decimal seconds and integer bytes; UTF-8, newline-terminated.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

pub const CSV_HEADER: &str = "timestamp_s,payload_len";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: timestamp {timestamp} precedes the previous event at {previous}")]
    Decreasing {
        line: usize,
        timestamp: f64,
        previous: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    /// Seconds from trace start.
    pub timestamp: f64,
    pub payload_len: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Seeds the placeholder payload bytes, so names must be stable.
    pub name: String,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new(name: impl Into<String>, events: Vec<TraceEvent>) -> Result<Self, TraceError> {
        let trace = Self {
            name: name.into(),
            events,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            events: Vec::new(),
        }
    }

    fn validate(&self) -> Result<(), TraceError> {
        let mut previous = 0.0f64;
        for (i, e) in self.events.iter().enumerate() {
            // Line numbers count the header as line 1.
            let line = i + 2;
            if !(e.timestamp.is_finite() && e.timestamp >= 0.0) {
                return Err(TraceError::Parse {
                    line,
                    msg: format!(
                        "timestamp must be a non-negative number, got {}",
                        e.timestamp
                    ),
                });
            }
            if e.timestamp < previous {
                return Err(TraceError::Decreasing {
                    line,
                    timestamp: e.timestamp,
                    previous,
                });
            }
            previous = e.timestamp;
        }
        Ok(())
    }

    pub fn total_bytes(&self) -> u64 {
        self.events.iter().map(|e| u64::from(e.payload_len)).sum()
    }

    pub fn last_timestamp(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.timestamp)
    }

    /// Average payload rate over `duration` seconds.
    pub fn baseline_rate(&self, duration: f64) -> f64 {
        self.total_bytes() as f64 / duration
    }

    /// Deterministic placeholder bytes for event `index`.
    pub fn payload(&self, index: usize) -> Vec<u8> {
        let mut rng = ChaCha20Rng::seed_from_u64(fnv1a(self.name.as_bytes()));
        rng.set_stream(index as u64);
        let mut buf = vec![0u8; self.events[index].payload_len as usize];
        rng.fill_bytes(&mut buf);
        buf
    }

    pub fn parse_csv(name: impl Into<String>, text: &str) -> Result<Self, TraceError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == CSV_HEADER => {}
            Some((_, other)) => {
                return Err(TraceError::Parse {
                    line: 1,
                    msg: format!("expected header `{CSV_HEADER}`, got `{}`", other.trim()),
                })
            }
            None => {
                return Err(TraceError::Parse {
                    line: 1,
                    msg: format!("missing header `{CSV_HEADER}`"),
                })
            }
        }
        let mut events = Vec::new();
        for (idx, raw) in lines {
            let line = idx + 1;
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let parse_err = |msg: String| TraceError::Parse { line, msg };
            let (ts, len) = raw
                .split_once(',')
                .ok_or_else(|| parse_err(format!("expected `timestamp,length`, got `{raw}`")))?;
            let timestamp: f64 = ts
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad timestamp `{}`", ts.trim())))?;
            let payload_len: u32 = len
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad payload length `{}`", len.trim())))?;
            if !(timestamp.is_finite() && timestamp >= 0.0) {
                return Err(parse_err(format!("timestamp out of range `{}`", ts.trim())));
            }
            if let Some(prev) = events.last().map(|e: &TraceEvent| e.timestamp) {
                if timestamp < prev {
                    return Err(TraceError::Decreasing {
                        line,
                        timestamp,
                        previous: prev,
                    });
                }
            }
            events.push(TraceEvent {
                timestamp,
                payload_len,
            });
        }
        Ok(Self {
            name: name.into(),
            events,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(16 * (self.events.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for e in &self.events {
            let _ = writeln!(out, "{},{}", e.timestamp, e.payload_len);
        }
        out
    }
}

/// Loads a trace CSV; the trace is named after the file stem.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Trace::parse_csv(name, &text)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_example() {
        let t = Trace::parse_csv("t", "timestamp_s,payload_len\n0.0,100\n1.5,40\n").unwrap();
        assert_eq!(
            t.events,
            vec![
                TraceEvent {
                    timestamp: 0.0,
                    payload_len: 100
                },
                TraceEvent {
                    timestamp: 1.5,
                    payload_len: 40
                }
            ]
        );
        assert_eq!(t.total_bytes(), 140);
    }

    #[test]
    fn rejects_decreasing_timestamps() {
        let err = Trace::parse_csv("t", "timestamp_s,payload_len\n1.0,50\n0.5,50\n").unwrap_err();
        assert!(
            matches!(err, TraceError::Decreasing { line: 3, .. }),
            "{err}"
        );
    }

    #[test]
    fn reports_malformed_lines() {
        let err = Trace::parse_csv("t", "timestamp_s,payload_len\n0.1,10\n0.2;10\n").unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 3, .. }));
        let err = Trace::parse_csv("t", "timestamp_s,payload_len\n0.1,-3\n").unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 2, .. }));
        let err = Trace::parse_csv("t", "time,len\n").unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 1, .. }));
        assert!(Trace::parse_csv("t", "").is_err());
        assert!(Trace::parse_csv("t", "timestamp_s,payload_len\nNaN,1\n").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = Trace::new(
            "rt",
            vec![
                TraceEvent {
                    timestamp: 0.125,
                    payload_len: 7,
                },
                TraceEvent {
                    timestamp: 3.001,
                    payload_len: 0,
                },
            ],
        )
        .unwrap();
        assert_eq!(Trace::parse_csv("rt", &t.to_csv()).unwrap(), t);
    }

    #[test]
    fn payloads_are_deterministic_and_distinct() {
        let ev = |len| TraceEvent {
            timestamp: 0.0,
            payload_len: len,
        };
        let a = Trace::new("a", vec![ev(32), ev(32)]).unwrap();
        let b = Trace::new("b", vec![ev(32)]).unwrap();
        assert_eq!(a.payload(0), a.payload(0));
        assert_ne!(a.payload(0), a.payload(1));
        assert_ne!(a.payload(0), b.payload(0));
        assert_eq!(a.payload(1).len(), 32);
    }
}
