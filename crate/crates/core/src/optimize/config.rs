use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 10.0;
pub const DEFAULT_BETA: f64 = 100.0;
pub const DEFAULT_PATCH_SIZE: usize = 3;
pub const DEFAULT_ITERS: usize = 100;
pub const DEFAULT_LBFGS_MEMORY: usize = 8;
pub const DEFAULT_SEED: u64 = 0;
/// Half-width of the uniform noise used to seed the coarsest level, in pixel units.
pub const INIT_NOISE: f32 = 25.0;
/// Smallest side of any level in the default schedule.
pub const MIN_LEVEL_SIDE: usize = 32;
/// Scale factors of the default schedule relative to the output size.
pub const DEFAULT_LEVEL_SCALES: [f64; 3] = [0.25, 0.5, 1.0];

/// Semantic weight: either fixed, or derived from the style image so map and
/// activation magnitudes match.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Gamma {
    #[default]
    Auto,
    Fixed(f32),
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Auto => f.write_str("auto"),
            Gamma::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Gamma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Gamma::Auto);
        }
        let v: f32 = s
            .parse()
            .map_err(|_| Error::Parameter(format!("gamma must be 'auto' or a number, got {s:?}")))?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Parameter(format!("gamma must be >= 0, got {v}")));
        }
        Ok(Gamma::Fixed(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    /// Content weight.
    pub alpha: f64,
    /// Style weight.
    pub beta: f64,
    pub gamma: Gamma,
    pub patch_size: usize,
    /// Taps carrying a style loss; `None` uses every tap of the network.
    pub tap_names: Option<Vec<String>>,
    /// Tap carrying the content loss; `None` uses the deepest tap.
    pub content_layer: Option<String>,
    /// Explicit `(height, width)` levels, coarse to fine. `None` derives
    /// ¼, ½ and full output size with a 32 px floor.
    pub resolutions: Option<Vec<(usize, usize)>>,
    /// Final size; `None` keeps the content image's size.
    pub output_size: Option<(usize, usize)>,
    pub iters_per_resolution: usize,
    pub seed: u64,
    pub lbfgs_memory: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            gamma: Gamma::Auto,
            patch_size: DEFAULT_PATCH_SIZE,
            tap_names: None,
            content_layer: None,
            resolutions: None,
            output_size: None,
            iters_per_resolution: DEFAULT_ITERS,
            seed: DEFAULT_SEED,
            lbfgs_memory: DEFAULT_LBFGS_MEMORY,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        if let Gamma::Fixed(g) = self.gamma {
            if !g.is_finite() || g < 0.0 {
                return Err(Error::Parameter(format!("gamma must be >= 0, got {g}")));
            }
        }
        if self.patch_size == 0 || self.patch_size % 2 == 0 {
            return Err(Error::Parameter(format!(
                "patch size must be odd, got {}",
                self.patch_size
            )));
        }
        if self.iters_per_resolution == 0 {
            return Err(Error::Parameter("iterations per resolution must be >= 1".into()));
        }
        if self.lbfgs_memory == 0 {
            return Err(Error::Parameter("L-BFGS memory must be >= 1".into()));
        }
        if let Some(levels) = &self.resolutions {
            check_levels(levels)?;
        }
        Ok(())
    }

    /// Resolution levels for an output of `height × width`.
    pub fn schedule(&self, height: usize, width: usize) -> Result<Vec<(usize, usize)>> {
        let levels = match &self.resolutions {
            Some(levels) => levels.clone(),
            None => default_schedule(height, width),
        };
        check_levels(&levels)?;
        Ok(levels)
    }
}

pub fn default_schedule(height: usize, width: usize) -> Vec<(usize, usize)> {
    let short = height.min(width) as f64;
    let mut levels: Vec<(usize, usize)> = Vec::new();
    for f in DEFAULT_LEVEL_SCALES {
        let s = f.max(MIN_LEVEL_SIDE as f64 / short).min(1.0);
        let dims = (
            ((height as f64 * s).round() as usize).max(1),
            ((width as f64 * s).round() as usize).max(1),
        );
        if levels.last().is_none_or(|&(h, w)| dims.0 > h && dims.1 > w) {
            levels.push(dims);
        }
    }
    if levels.last() != Some(&(height, width)) {
        levels.retain(|&(h, w)| h < height && w < width);
        levels.push((height, width));
    }
    levels
}

fn check_levels(levels: &[(usize, usize)]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Config("resolution schedule is empty".into()));
    }
    for pair in levels.windows(2) {
        let ((h0, w0), (h1, w1)) = (pair[0], pair[1]);
        if h1 <= h0 || w1 <= w0 {
            return Err(Error::Config(format!(
                "resolutions must increase strictly: {h0}x{w0} then {h1}x{w1}"
            )));
        }
    }
    Ok(())
}
