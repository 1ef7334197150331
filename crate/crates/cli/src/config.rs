//! Render settings as given on the command line or in a job submission.

use std::fmt;
use std::str::FromStr;

use doodle_core::optimize::config::{DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_ITERS, DEFAULT_PATCH_SIZE, DEFAULT_SEED};
use doodle_core::{Error, Gamma, RenderConfig};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One resolution level: a shorter-side length, or an explicit `HxW`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Short(usize),
    Exact(usize, usize),
}

impl Level {
    /// Level size for a content image of `height × width`.
    pub fn resolve(self, height: usize, width: usize) -> (usize, usize) {
        match self {
            Level::Exact(h, w) => (h, w),
            Level::Short(s) => {
                let short = height.min(width) as f64;
                let scale = |v: usize| ((v as f64 * s as f64 / short).round() as usize).max(1);
                if height <= width {
                    (s, scale(width))
                } else {
                    (scale(height), s)
                }
            }
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Short(s) => write!(f, "{s}"),
            Level::Exact(h, w) => write!(f, "{h}x{w}"),
        }
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::Config(format!("resolution {s:?} is not N or HxW"));
        let num = |v: &str| v.trim().parse::<usize>().ok().filter(|&n| n > 0);
        match s.split_once(['x', 'X']) {
            Some((h, w)) => Ok(Level::Exact(num(h).ok_or_else(bad)?, num(w).ok_or_else(bad)?)),
            None => Ok(Level::Short(num(s).ok_or_else(bad)?)),
        }
    }
}

/// Comma-separated levels, coarse to fine, e.g. `64,128,256`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Levels(pub Vec<Level>);

impl FromStr for Levels {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let levels = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse())
            .collect::<Result<Vec<_>, _>>()?;
        if levels.is_empty() {
            return Err(Error::Config("resolution list is empty".into()));
        }
        Ok(Levels(levels))
    }
}

impl fmt::Display for Levels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl Serialize for Levels {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Levels {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            List(Vec<serde_json::Value>),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Text(s) => s,
            Raw::List(items) => items
                .iter()
                .map(|v| match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

fn ser_gamma<S: Serializer>(g: &Gamma, s: S) -> Result<S::Ok, S::Error> {
    match g {
        Gamma::Auto => s.serialize_str("auto"),
        Gamma::Fixed(v) => s.serialize_f32(*v),
    }
}

fn de_gamma<'de, D: Deserializer<'de>>(d: D) -> Result<Gamma, D::Error> {
    let text = match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(s) => s,
        serde_json::Value::Number(n) => n.to_string(),
        other => return Err(serde::de::Error::custom(format!("gamma must be \"auto\" or a number, got {other}"))),
    };
    text.parse().map_err(serde::de::Error::custom)
}

/// User-facing render settings. Defaults come from the core library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobConfig {
    pub alpha: f64,
    pub beta: f64,
    #[serde(serialize_with = "ser_gamma", deserialize_with = "de_gamma")]
    pub gamma: Gamma,
    pub patch_size: usize,
    pub resolutions: Option<Levels>,
    pub iters: usize,
    pub seed: u64,
}

impl Default for JobConfig {
    fn default() -> Self {
        JobConfig {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            gamma: Gamma::Auto,
            patch_size: DEFAULT_PATCH_SIZE,
            resolutions: None,
            iters: DEFAULT_ITERS,
            seed: DEFAULT_SEED,
        }
    }
}

impl JobConfig {
    /// Checks everything that does not depend on the input images.
    pub fn validate(&self) -> Result<(), Error> {
        RenderConfig {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            patch_size: self.patch_size,
            iters_per_resolution: self.iters,
            ..RenderConfig::default()
        }
        .validate()
    }

    /// Core configuration for a content image of `height × width`. The last
    /// resolution level, if any, sets the output size.
    pub fn render_config(&self, height: usize, width: usize) -> Result<RenderConfig, Error> {
        let levels = self
            .resolutions
            .as_ref()
            .map(|l| l.0.iter().map(|lv| lv.resolve(height, width)).collect::<Vec<_>>());
        let cfg = RenderConfig {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            patch_size: self.patch_size,
            output_size: levels.as_ref().and_then(|l| l.last().copied()),
            resolutions: levels,
            iters_per_resolution: self.iters,
            seed: self.seed,
            ..RenderConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
