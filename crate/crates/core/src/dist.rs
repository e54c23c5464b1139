//! Service-time distributions and the seeded RNG substreams that drive them.
//!
//! All durations are microseconds held as `f64`. The engine rounds sampled
//! values to whole microseconds before scheduling.

use std::fs;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::DistError;

/// A sampleable service-time model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[serde(try_from = "DistRepr")]
pub enum ServiceDistribution {
    /// Bootstrap over profiled samples.
    Empirical {
        samples_us: Vec<f64>,
    },
    Constant {
        value_us: f64,
    },
    Uniform {
        lo_us: f64,
        hi_us: f64,
    },
    Exponential {
        mean_us: f64,
    },
    /// `unit_us * exp(mu + sigma * z)` with `z ~ N(0, 1)`.
    Lognormal {
        mu: f64,
        sigma: f64,
        #[serde(default = "unit_one")]
        unit_us: f64,
    },
}

fn unit_one() -> f64 {
    1.0
}

// Mirror of the public enum used only so deserialization runs `validate`.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum DistRepr {
    Empirical {
        samples_us: Vec<f64>,
    },
    Constant {
        value_us: f64,
    },
    Uniform {
        lo_us: f64,
        hi_us: f64,
    },
    Exponential {
        mean_us: f64,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
        #[serde(default = "unit_one")]
        unit_us: f64,
    },
}

impl TryFrom<DistRepr> for ServiceDistribution {
    type Error = DistError;

    fn try_from(repr: DistRepr) -> Result<Self, DistError> {
        let dist = match repr {
            DistRepr::Empirical { samples_us } => ServiceDistribution::Empirical { samples_us },
            DistRepr::Constant { value_us } => ServiceDistribution::Constant { value_us },
            DistRepr::Uniform { lo_us, hi_us } => ServiceDistribution::Uniform { lo_us, hi_us },
            DistRepr::Exponential { mean_us } => ServiceDistribution::Exponential { mean_us },
            DistRepr::Lognormal { mu, sigma, unit_us } => {
                ServiceDistribution::Lognormal { mu, sigma, unit_us }
            }
        };
        dist.validate()?;
        Ok(dist)
    }
}

/// Order statistics and mean of a distribution, in microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistSummary {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub min: f64,
    pub max: f64,
}

fn check_duration(what: &'static str, v: f64) -> Result<(), DistError> {
    if !v.is_finite() {
        return Err(DistError::NonFinite(what));
    }
    if v < 0.0 {
        return Err(DistError::Negative(what, v));
    }
    Ok(())
}

impl ServiceDistribution {
    pub fn constant(value_us: f64) -> Self {
        ServiceDistribution::Constant { value_us }
    }

    /// Constant duration given in milliseconds.
    pub fn constant_ms(ms: f64) -> Self {
        ServiceDistribution::Constant {
            value_us: ms * 1000.0,
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// Builds an empirical distribution from profiled durations.
    pub fn from_samples(samples: &[f64]) -> Result<Self, DistError> {
        let dist = ServiceDistribution::Empirical {
            samples_us: samples.to_vec(),
        };
        dist.validate()?;
        Ok(dist)
    }

    pub fn validate(&self) -> Result<(), DistError> {
        match self {
            ServiceDistribution::Empirical { samples_us } => {
                if samples_us.is_empty() {
                    return Err(DistError::EmptySamples);
                }
                samples_us
                    .iter()
                    .try_for_each(|&s| check_duration("sample", s))
            }
            ServiceDistribution::Constant { value_us } => check_duration("value_us", *value_us),
            ServiceDistribution::Uniform { lo_us, hi_us } => {
                check_duration("lo_us", *lo_us)?;
                check_duration("hi_us", *hi_us)?;
                if lo_us > hi_us {
                    return Err(DistError::InvertedBounds(*lo_us, *hi_us));
                }
                Ok(())
            }
            ServiceDistribution::Exponential { mean_us } => {
                check_duration("mean_us", *mean_us)?;
                if *mean_us <= 0.0 {
                    return Err(DistError::NonPositiveMean(*mean_us));
                }
                Ok(())
            }
            ServiceDistribution::Lognormal { mu, sigma, unit_us } => {
                if !mu.is_finite() {
                    return Err(DistError::NonFinite("mu"));
                }
                check_duration("sigma", *sigma)?;
                check_duration("unit_us", *unit_us)
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ServiceDistribution::Empirical { .. } => "empirical",
            ServiceDistribution::Constant { .. } => "constant",
            ServiceDistribution::Uniform { .. } => "uniform",
            ServiceDistribution::Exponential { .. } => "exponential",
            ServiceDistribution::Lognormal { .. } => "lognormal",
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ServiceDistribution::Empirical { samples_us } => {
                samples_us.iter().sum::<f64>() / samples_us.len() as f64
            }
            ServiceDistribution::Constant { value_us } => *value_us,
            ServiceDistribution::Uniform { lo_us, hi_us } => (lo_us + hi_us) / 2.0,
            ServiceDistribution::Exponential { mean_us } => *mean_us,
            ServiceDistribution::Lognormal { mu, sigma, unit_us } => {
                unit_us * (mu + sigma * sigma / 2.0).exp()
            }
        }
    }

    /// Draws one duration. Empirical variants bootstrap (uniform with
    /// replacement); parametric variants invert their CDF at a uniform draw.
    pub fn sample(&self, rng: &mut RngState) -> f64 {
        match self {
            ServiceDistribution::Empirical { samples_us } => {
                samples_us[rng.index(samples_us.len())]
            }
            ServiceDistribution::Constant { value_us } => *value_us,
            ServiceDistribution::Uniform { lo_us, hi_us } => {
                lo_us + rng.next_unit() * (hi_us - lo_us)
            }
            ServiceDistribution::Exponential { mean_us } => -mean_us * (1.0 - rng.next_unit()).ln(),
            ServiceDistribution::Lognormal { mu, sigma, unit_us } => {
                let u = rng.next_open_unit();
                let z = if *sigma == 0.0 {
                    0.0
                } else {
                    std_normal_quantile(u)
                };
                unit_us * (mu + sigma * z).exp()
            }
        }
        .max(0.0)
    }

    /// Exact order statistics for empirical data (nearest rank), closed forms
    /// otherwise.
    pub fn summary(&self) -> DistSummary {
        match self {
            ServiceDistribution::Empirical { samples_us } => {
                let mut sorted = samples_us.clone();
                sorted.sort_by(f64::total_cmp);
                let rank = |p: f64| {
                    let r = (p * sorted.len() as f64).ceil() as usize;
                    sorted[r.clamp(1, sorted.len()) - 1]
                };
                DistSummary {
                    mean: self.mean(),
                    p50: rank(0.50),
                    p95: rank(0.95),
                    p99: rank(0.99),
                    min: sorted[0],
                    max: sorted[sorted.len() - 1],
                }
            }
            ServiceDistribution::Constant { value_us } => DistSummary {
                mean: *value_us,
                p50: *value_us,
                p95: *value_us,
                p99: *value_us,
                min: *value_us,
                max: *value_us,
            },
            ServiceDistribution::Uniform { lo_us, hi_us } => {
                let q = |p: f64| lo_us + p * (hi_us - lo_us);
                DistSummary {
                    mean: self.mean(),
                    p50: q(0.50),
                    p95: q(0.95),
                    p99: q(0.99),
                    min: *lo_us,
                    max: *hi_us,
                }
            }
            ServiceDistribution::Exponential { mean_us } => {
                let q = |p: f64| -mean_us * (1.0 - p).ln();
                DistSummary {
                    mean: *mean_us,
                    p50: q(0.50),
                    p95: q(0.95),
                    p99: q(0.99),
                    min: 0.0,
                    max: f64::INFINITY,
                }
            }
            ServiceDistribution::Lognormal { mu, sigma, unit_us } => {
                let q = |p: f64| unit_us * (mu + sigma * std_normal_quantile(p)).exp();
                let (min, max) = if *sigma == 0.0 {
                    let v = unit_us * mu.exp();
                    (v, v)
                } else {
                    (0.0, f64::INFINITY)
                };
                DistSummary {
                    mean: self.mean(),
                    p50: q(0.50),
                    p95: q(0.95),
                    p99: q(0.99),
                    min,
                    max,
                }
            }
        }
    }
}

fn std_normal_quantile(p: f64) -> f64 {
    // `Normal::standard()` is infallible; the quantile is clamped by statrs at 0 and 1.
    Normal::standard().inverse_cdf(p)
}

/// Per-owner random stream. Equal `(seed, stream_id)` pairs replay identical
/// sequences; distinct `stream_id`s select independent ChaCha streams.
#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    /// Substream keyed by a stable label, e.g. a node instance name.
    pub fn for_label(seed: u64, label: &str) -> Self {
        Self::new(seed, fnv1a(label.as_bytes()))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1)`.
    pub fn next_open_unit(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }
}

/// FNV-1a, used to derive substream ids that do not shift when unrelated
/// nodes are added to or removed from a graph.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A distribution with the name it is stored under.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedDistribution {
    pub name: String,
    pub dist: ServiceDistribution,
}

impl NamedDistribution {
    /// `{"name": ..., "kind": ..., <params>}`
    pub fn to_json(&self) -> Value {
        let mut obj = match serde_json::to_value(&self.dist) {
            Ok(Value::Object(map)) => map,
            _ => Map::new(),
        };
        let mut out = Map::new();
        out.insert("name".into(), Value::String(self.name.clone()));
        out.append(&mut obj);
        Value::Object(out)
    }

    pub fn from_json(value: Value) -> Result<Self, DistError> {
        let Value::Object(mut obj) = value else {
            return Err(DistError::Format(
                "distribution file must hold a JSON object".into(),
            ));
        };
        let name = match obj.remove("name") {
            Some(Value::String(s)) if !s.is_empty() => s,
            _ => return Err(DistError::Format("missing string field \"name\"".into())),
        };
        let dist = serde_json::from_value(Value::Object(obj))
            .map_err(|e| DistError::Format(e.to_string()))?;
        Ok(Self { name, dist })
    }

    pub fn load(path: &Path) -> Result<Self, DistError> {
        let text =
            fs::read_to_string(path).map_err(|e| DistError::Io(path.display().to_string(), e))?;
        let value = serde_json::from_str(&text).map_err(|e| DistError::Format(e.to_string()))?;
        Self::from_json(value)
    }
}
