//! Seedable samplers for the interpacket delay (D) and payload size (X).
//!
//! Every sampler consumes randomness only from the generator handed to it, so
//! a fixed seed yields a fixed schedule. Uniform draws use one `f64` per
//! sample (inverse transform), which keeps paired-seed sweeps aligned.

use std::fmt;
use std::time::Duration;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erf;
use thiserror::Error;

/// Largest payload a single record can carry (`shaped_len` is a u16).
pub const MAX_SHAPED_LEN: u16 = u16::MAX;

/// Truncation windows holding less probability mass than this are rejected;
/// rejection sampling would effectively never terminate.
const MIN_TRUNCATED_MASS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("invalid {role} distribution {spec}: {reason}")]
    Invalid {
        role: Role,
        spec: DistributionSpec,
        reason: &'static str,
    },
    #[error("{0} distributions are not supported for delays")]
    UnsupportedMode(&'static str),
}

/// Which quantity a distribution parameterizes. Units are carried, not
/// converted: seconds for delays, bytes for sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Delay,
    Size,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Delay => "delay",
            Role::Size => "size",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionSpec {
    Constant(f64),
    Uniform {
        low: f64,
        high: f64,
    },
    TruncatedNormal {
        mean: f64,
        stddev: f64,
        low: f64,
        high: f64,
    },
}

impl fmt::Display for DistributionSpec {
    /// Same `kind p1 p2 ...` form the config file uses.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DistributionSpec::Constant(v) => write!(f, "constant {v}"),
            DistributionSpec::Uniform { low, high } => write!(f, "uniform {low} {high}"),
            DistributionSpec::TruncatedNormal {
                mean,
                stddev,
                low,
                high,
            } => write!(f, "normal {mean} {stddev} {low} {high}"),
        }
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn is_integral(v: f64) -> bool {
    v.is_finite() && v.fract() == 0.0
}

impl DistributionSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            DistributionSpec::Constant(_) => "constant",
            DistributionSpec::Uniform { .. } => "uniform",
            DistributionSpec::TruncatedNormal { .. } => "normal",
        }
    }

    pub fn validate(&self, role: Role) -> Result<(), DistError> {
        let invalid = |reason| DistError::Invalid {
            role,
            spec: *self,
            reason,
        };
        let max = f64::from(MAX_SHAPED_LEN);
        match *self {
            DistributionSpec::Constant(v) => {
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid("constant value must be positive"));
                }
                if role == Role::Size && !(is_integral(v) && v <= max) {
                    return Err(invalid("constant size must be an integer in [1, 65535]"));
                }
            }
            DistributionSpec::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && 0.0 <= low && low <= high) {
                    return Err(invalid("uniform bounds must satisfy 0 <= low <= high"));
                }
                if role == Role::Size
                    && !(is_integral(low) && is_integral(high) && low >= 1.0 && high <= max)
                {
                    return Err(invalid(
                        "uniform size bounds must be integers in [1, 65535]",
                    ));
                }
            }
            DistributionSpec::TruncatedNormal {
                mean,
                stddev,
                low,
                high,
            } => {
                if role == Role::Delay {
                    return Err(DistError::UnsupportedMode("truncated normal"));
                }
                if !(mean.is_finite() && stddev.is_finite() && stddev > 0.0) {
                    return Err(invalid("normal needs a finite mean and stddev > 0"));
                }
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(invalid("truncation bounds must satisfy low < high"));
                }
                if low < 1.0 || high > max || low.ceil() > high.floor() {
                    return Err(invalid(
                        "truncation bounds must contain an integer in [1, 65535]",
                    ));
                }
                if self.truncated_mass() < MIN_TRUNCATED_MASS {
                    return Err(invalid("truncation window holds negligible probability"));
                }
            }
        }
        Ok(())
    }

    fn truncated_mass(&self) -> f64 {
        match *self {
            DistributionSpec::TruncatedNormal {
                mean,
                stddev,
                low,
                high,
            } => std_normal_cdf((high - mean) / stddev) - std_normal_cdf((low - mean) / stddev),
            _ => 1.0,
        }
    }

    /// Mean of the distribution; for the truncated normal this is the analytic
    /// mean of the continuous truncated density.
    pub fn expected_value(&self) -> f64 {
        match *self {
            DistributionSpec::Constant(v) => v,
            DistributionSpec::Uniform { low, high } => 0.5 * (low + high),
            DistributionSpec::TruncatedNormal {
                mean,
                stddev,
                low,
                high,
            } => {
                let a = (low - mean) / stddev;
                let b = (high - mean) / stddev;
                let z = std_normal_cdf(b) - std_normal_cdf(a);
                mean + stddev * (std_normal_pdf(a) - std_normal_pdf(b)) / z
            }
        }
    }

    /// `P(V <= v)` for a sample `V` drawn in `role`. Size samples are the
    /// integers actually emitted, so the size CDF is a step function.
    pub fn cdf(&self, role: Role, v: f64) -> f64 {
        match role {
            Role::Delay => self.delay_cdf(v),
            Role::Size => self.size_cdf(v.floor()),
        }
    }

    /// `P(V < v)`.
    pub fn cdf_left(&self, role: Role, v: f64) -> f64 {
        match role {
            Role::Delay => match *self {
                DistributionSpec::Constant(c) if v <= c => 0.0,
                _ => self.delay_cdf(v),
            },
            Role::Size => {
                let below = if is_integral(v) { v - 1.0 } else { v.floor() };
                self.size_cdf(below)
            }
        }
    }

    fn delay_cdf(&self, v: f64) -> f64 {
        match *self {
            DistributionSpec::Constant(c) => f64::from(u8::from(v >= c)),
            DistributionSpec::Uniform { low, high } => {
                if v < low {
                    0.0
                } else if v >= high {
                    1.0
                } else {
                    (v - low) / (high - low)
                }
            }
            // Rejected by validation for delays.
            DistributionSpec::TruncatedNormal { .. } => f64::NAN,
        }
    }

    /// `P(S <= k)` for integer `k`.
    fn size_cdf(&self, k: f64) -> f64 {
        match *self {
            DistributionSpec::Constant(c) => f64::from(u8::from(k >= c)),
            DistributionSpec::Uniform { low, high } => {
                if k < low {
                    0.0
                } else if k >= high {
                    1.0
                } else {
                    (k - low + 1.0) / (high - low + 1.0)
                }
            }
            DistributionSpec::TruncatedNormal {
                mean,
                stddev,
                low,
                high,
            } => {
                let (lo, hi) = (low.ceil(), high.floor());
                if k < lo {
                    0.0
                } else if k >= hi {
                    1.0
                } else {
                    let a = std_normal_cdf((low - mean) / stddev);
                    let upper = std_normal_cdf(((k + 0.5).min(high) - mean) / stddev);
                    (upper - a) / self.truncated_mass()
                }
            }
        }
    }
}

/// Samples one interpacket delay in seconds.
pub fn sample_delay<R: Rng + ?Sized>(
    spec: &DistributionSpec,
    rng: &mut R,
) -> Result<f64, DistError> {
    spec.validate(Role::Delay)?;
    Ok(draw_delay(spec, rng))
}

/// Samples one payload size in bytes.
pub fn sample_size<R: Rng + ?Sized>(
    spec: &DistributionSpec,
    rng: &mut R,
) -> Result<u16, DistError> {
    spec.validate(Role::Size)?;
    Ok(draw_size(spec, rng))
}

fn draw_delay<R: Rng + ?Sized>(spec: &DistributionSpec, rng: &mut R) -> f64 {
    match *spec {
        DistributionSpec::Constant(v) => v,
        DistributionSpec::Uniform { low, high } => {
            let u: f64 = rng.random();
            (low + u * (high - low)).min(high)
        }
        DistributionSpec::TruncatedNormal { .. } => unreachable!("validated delay spec"),
    }
}

fn draw_size<R: Rng + ?Sized>(spec: &DistributionSpec, rng: &mut R) -> u16 {
    let v = match *spec {
        DistributionSpec::Constant(v) => v,
        DistributionSpec::Uniform { low, high } => {
            let u: f64 = rng.random();
            (low + (u * (high - low + 1.0)).floor()).min(high)
        }
        DistributionSpec::TruncatedNormal {
            mean,
            stddev,
            low,
            high,
        } => {
            let v = loop {
                let z: f64 = rng.sample(StandardNormal);
                let v = mean + stddev * z;
                if (low..=high).contains(&v) {
                    break v;
                }
            };
            v.round().clamp(low.ceil(), high.floor())
        }
    };
    v as u16
}

/// A validated delay distribution whose samples are infallible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayDist(DistributionSpec);

impl DelayDist {
    pub fn new(spec: DistributionSpec) -> Result<Self, DistError> {
        spec.validate(Role::Delay)?;
        Ok(Self(spec))
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.0
    }

    pub fn sample_secs<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        draw_delay(&self.0, rng)
    }

    /// Samples a delay, rounded to whole nanoseconds.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Duration {
        secs_to_duration(self.sample_secs(rng))
    }

    pub fn mean_secs(&self) -> f64 {
        self.0.expected_value()
    }
}

/// A validated size distribution whose samples are infallible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeDist(DistributionSpec);

impl SizeDist {
    pub fn new(spec: DistributionSpec) -> Result<Self, DistError> {
        spec.validate(Role::Size)?;
        Ok(Self(spec))
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u16 {
        draw_size(&self.0, rng)
    }

    pub fn mean_bytes(&self) -> f64 {
        self.0.expected_value()
    }
}

/// Converts seconds to a `Duration`, rounding to the nearest nanosecond so
/// that decimal constants such as 0.05 s land on exact nanosecond counts.
pub fn secs_to_duration(secs: f64) -> Duration {
    Duration::from_nanos((secs.max(0.0) * 1e9).round() as u64)
}
