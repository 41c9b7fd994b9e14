//! Shaper configuration and its flat key-value file format.
//!
//! ```text
//! # comments start with '#'
//! delay = uniform 0 0.6          # seconds: constant V | uniform LOW HIGH
//! size  = normal 125 30 50 200   # bytes: constant V | uniform LOW HIGH | normal MEAN SD LOW HIGH
//! seed  = 42
//! max_queue_bytes = 1000000      # optional
//! ```
//!
//! Keys may appear in any order; each at most once. Unknown keys are errors.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dist::{DelayDist, DistError, DistributionSpec, SizeDist};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("cannot parse distribution `{0}`")]
    BadDistribution(String),
}

impl FromStr for DistributionSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::BadDistribution(s.trim().to_string());
        let mut parts = s.split_whitespace();
        let kind = parts.next().ok_or_else(bad)?.to_ascii_lowercase();
        let params = parts
            .map(|p| p.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?;
        match (kind.as_str(), params.as_slice()) {
            ("constant", [v]) => Ok(DistributionSpec::Constant(*v)),
            ("uniform", [low, high]) => Ok(DistributionSpec::Uniform {
                low: *low,
                high: *high,
            }),
            ("normal", [mean, stddev, low, high]) => Ok(DistributionSpec::TruncatedNormal {
                mean: *mean,
                stddev: *stddev,
                low: *low,
                high: *high,
            }),
            _ => Err(bad()),
        }
    }
}

/// Name of the generator behind every seeded stream, echoed into reports.
pub const RNG_NAME: &str = "chacha20";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShaperConfig {
    pub delay: DelayDist,
    pub size: SizeDist,
    pub rng_seed: u64,
    pub max_queue_bytes: Option<usize>,
}

impl ShaperConfig {
    pub fn new(
        delay: DistributionSpec,
        size: DistributionSpec,
        rng_seed: u64,
    ) -> Result<Self, ConfigError> {
        Ok(Self {
            delay: DelayDist::new(delay)?,
            size: SizeDist::new(size)?,
            rng_seed,
            max_queue_bytes: None,
        })
    }

    /// Random schedule for devices that tolerate long delays: uniform delays
    /// on [0, 0.6] s and uniform sizes on [50, 200] bytes.
    pub fn high_latency(rng_seed: u64) -> Self {
        Self::new(
            DistributionSpec::Uniform {
                low: 0.0,
                high: 0.6,
            },
            DistributionSpec::Uniform {
                low: 50.0,
                high: 200.0,
            },
            rng_seed,
        )
        .expect("preset is valid")
    }

    /// Constant-rate schedule for low-latency, low-bandwidth devices:
    /// one 120-byte record every 50 ms.
    pub fn low_latency(rng_seed: u64) -> Self {
        Self::new(
            DistributionSpec::Constant(0.05),
            DistributionSpec::Constant(120.0),
            rng_seed,
        )
        .expect("preset is valid")
    }

    pub fn with_seed(mut self, rng_seed: u64) -> Self {
        self.rng_seed = rng_seed;
        self
    }

    pub fn with_max_queue_bytes(mut self, limit: Option<usize>) -> Self {
        self.max_queue_bytes = limit;
        self
    }

    pub fn delay_spec(&self) -> DistributionSpec {
        *self.delay.spec()
    }

    pub fn size_spec(&self) -> DistributionSpec {
        *self.size.spec()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        ConfigFile::parse(text)?.resolve()
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ShaperConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "delay = {}", self.delay.spec())?;
        writeln!(f, "size = {}", self.size.spec())?;
        writeln!(f, "seed = {}", self.rng_seed)?;
        if let Some(limit) = self.max_queue_bytes {
            writeln!(f, "max_queue_bytes = {limit}")?;
        }
        Ok(())
    }
}

/// A possibly partial config document; command-line flags fill the gaps or
/// override entries before [`ConfigFile::resolve`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub delay: Option<DistributionSpec>,
    pub size: Option<DistributionSpec>,
    pub seed: Option<u64>,
    pub max_queue_bytes: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut doc = ConfigFile::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |msg: String| ConfigError::Syntax { line: line_no, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let dup = || syntax(format!("duplicate key `{key}`"));
            match key {
                "delay" => {
                    let spec = value
                        .parse()
                        .map_err(|e: ConfigError| syntax(e.to_string()))?;
                    if doc.delay.replace(spec).is_some() {
                        return Err(dup());
                    }
                }
                "size" => {
                    let spec = value
                        .parse()
                        .map_err(|e: ConfigError| syntax(e.to_string()))?;
                    if doc.size.replace(spec).is_some() {
                        return Err(dup());
                    }
                }
                "seed" => {
                    let seed = value
                        .parse()
                        .map_err(|_| syntax(format!("bad seed `{value}`")))?;
                    if doc.seed.replace(seed).is_some() {
                        return Err(dup());
                    }
                }
                "max_queue_bytes" => {
                    let limit = value
                        .parse()
                        .map_err(|_| syntax(format!("bad max_queue_bytes `{value}`")))?;
                    if doc.max_queue_bytes.replace(limit).is_some() {
                        return Err(dup());
                    }
                }
                other => return Err(syntax(format!("unknown key `{other}`"))),
            }
        }
        Ok(doc)
    }

    /// Resolves to a validated config. A missing seed defaults to 0.
    pub fn resolve(&self) -> Result<ShaperConfig, ConfigError> {
        let delay = self.delay.ok_or(ConfigError::Missing("delay"))?;
        let size = self.size.ok_or(ConfigError::Missing("size"))?;
        Ok(ShaperConfig::new(delay, size, self.seed.unwrap_or(0))?
            .with_max_queue_bytes(self.max_queue_bytes))
    }
}
