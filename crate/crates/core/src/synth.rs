//! Ground-truth Gaussian blob images.
//!
//! A spec renders as `c·exp(−½ (p−μ)ᵀΣ⁻¹(p−μ)) + d` sampled at integer pixel
//! centers, with the long radius `β` along `(cos θ, −sin θ)` (counterclockwise
//! as displayed) and the short radius `α` across it.
//!
//! Noise comes from `ChaCha8Rng::seed_from_u64(seed)` drawing standard normal
//! variates (`rand_distr::Normal`) in row-major pixel order.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imgio::GrayImage;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("degenerate signal: radii must satisfy beta >= alpha > 0 (alpha={alpha}, beta={beta})")]
    Degenerate { alpha: f64, beta: f64 },
    #[error("truth csv {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

/// Parameters of one rendered Gaussian blob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSignalSpec {
    pub cx: f64,
    pub cy: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub c: f64,
    pub d: f64,
}

impl GaussianSignalSpec {
    pub fn isotropic(cx: f64, cy: f64, radius: f64, c: f64, d: f64) -> Self {
        Self { cx, cy, alpha: radius, beta: radius, theta: 0.0, c, d }
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.beta / self.alpha
    }

    pub fn nominal_radius(&self) -> f64 {
        (self.alpha * self.beta).sqrt()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.alpha > 0.0 && self.beta >= self.alpha) {
            return Err(SynthError::Degenerate { alpha: self.alpha, beta: self.beta });
        }
        Ok(())
    }

    /// Whether the `3β` support plus center offset stays inside the frame.
    pub fn fits(&self, width: usize, height: usize) -> bool {
        let half = width.min(height) as f64 / 2.0;
        let off = (self.cx - width as f64 / 2.0).abs().max((self.cy - height as f64 / 2.0).abs());
        3.0 * self.beta + off <= half
    }

    /// Whether the spec lies inside the reference experiment ranges.
    pub fn in_reference_ranges(&self) -> bool {
        let r = SpecRanges::default();
        (r.c.0..=r.c.1).contains(&self.c)
            && (r.d.0..=r.d.1).contains(&self.d)
            && (r.nominal.0..=r.nominal.1).contains(&self.nominal_radius())
            && (r.aspect.0..=r.aspect.1).contains(&self.aspect_ratio())
            && (r.theta.0..=r.theta.1).contains(&self.theta)
    }

    /// Same signal rotated counterclockwise by `phi` about `(ox, oy)`.
    pub fn rotated(&self, phi: f64, ox: f64, oy: f64) -> Self {
        let (s, c) = phi.sin_cos();
        let (dx, dy) = (self.cx - ox, self.cy - oy);
        // Counterclockwise as displayed is clockwise in (x, row) coordinates.
        Self { cx: ox + c * dx + s * dy, cy: oy - s * dx + c * dy, theta: self.theta + phi, ..*self }
    }

    /// Model intensity at a point, before clamping.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let along = dx * c - dy * s;
        let across = dx * s + dy * c;
        let q = along * along / (self.beta * self.beta) + across * across / (self.alpha * self.alpha);
        self.c * (-0.5 * q).exp() + self.d
    }
}

/// Renders the spec, clamped to `[0, 255]` and quantized to integer levels.
pub fn render(spec: &GaussianSignalSpec, width: usize, height: usize) -> Result<GrayImage, SynthError> {
    render_with(spec, width, height, true)
}

pub fn render_with(
    spec: &GaussianSignalSpec,
    width: usize,
    height: usize,
    quantize_levels: bool,
) -> Result<GrayImage, SynthError> {
    render_many(std::slice::from_ref(spec), width, height, quantize_levels)
}

/// Renders several blobs over a common baseline (the first spec's `d`).
pub fn render_many(
    specs: &[GaussianSignalSpec],
    width: usize,
    height: usize,
    quantize_levels: bool,
) -> Result<GrayImage, SynthError> {
    for s in specs {
        s.validate()?;
    }
    let baseline = specs.first().map_or(0.0, |s| s.d);
    let img = GrayImage::from_fn(width, height, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        let v = baseline + specs.iter().map(|s| s.value_at(fx, fy) - s.d).sum::<f64>();
        v.clamp(0.0, 255.0)
    });
    Ok(if quantize_levels { quantize(&img) } else { img })
}

/// Rounds every pixel half-up to an integer gray level in `[0, 255]`.
pub fn quantize(img: &GrayImage) -> GrayImage {
    img.map(|v| f64::from(crate::imgio::to_byte(v)))
}

/// Adds i.i.d. zero-mean Gaussian noise and clamps to `[0, 255]`.
pub fn add_gaussian_noise(img: &GrayImage, stddev: f64, seed: u64) -> GrayImage {
    assert!(stddev >= 0.0, "noise stddev must be non-negative");
    if stddev == 0.0 {
        return img.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, stddev).expect("finite stddev");
    let mut out = img.clone();
    for v in out.pixels_mut() {
        *v = (*v + normal.sample(&mut rng)).clamp(0.0, 255.0);
    }
    out
}

/// Sampling ranges for random test signals.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecRanges {
    pub c: (f64, f64),
    pub d: (f64, f64),
    /// `√(αβ)`.
    pub nominal: (f64, f64),
    /// `β/α`.
    pub aspect: (f64, f64),
    pub theta: (f64, f64),
    /// Minimum `|c|`.
    pub c_floor: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for SpecRanges {
    fn default() -> Self {
        Self {
            c: (-255.0, 255.0),
            d: (0.0, 255.0),
            nominal: (5.0, 40.0),
            aspect: (1.0, 30.0),
            theta: (-FRAC_PI_2, FRAC_PI_2),
            c_floor: 16.0,
            width: 256,
            height: 256,
        }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

const MAX_SHAPE_DRAWS: usize = 1000;

/// Draws a spec uniformly within `ranges` that fits inside the frame.
///
/// Nominal radius and aspect ratio are redrawn until `3β` fits; if that never
/// happens the nominal radius is shrunk until it does. Contrast keeps
/// `|c| ≥ c_floor`, and the baseline is drawn so that `d` and `d + c` both stay
/// in `[0, 255]`.
pub fn random_spec(ranges: &SpecRanges, rng: &mut impl Rng) -> GaussianSignalSpec {
    let half = ranges.width.min(ranges.height) as f64 / 2.0;
    let mut shape = None;
    for _ in 0..MAX_SHAPE_DRAWS {
        let n = uniform(rng, ranges.nominal);
        let k = uniform(rng, ranges.aspect);
        if 3.0 * n * k.sqrt() <= half {
            shape = Some((n, k));
            break;
        }
    }
    let (n, k) = shape.unwrap_or_else(|| {
        let k = uniform(rng, ranges.aspect);
        (half / (3.0 * k.sqrt()), k)
    });
    let alpha = n / k.sqrt();
    let beta = n * k.sqrt();
    let margin = (half - 3.0 * beta).max(0.0);
    let cx = ranges.width as f64 / 2.0 + uniform(rng, (-margin, margin));
    let cy = ranges.height as f64 / 2.0 + uniform(rng, (-margin, margin));
    let theta = uniform(rng, ranges.theta);

    let c_mag_max = ranges.c.0.abs().max(ranges.c.1.abs());
    let c = loop {
        let c = uniform(rng, ranges.c);
        if c.abs() >= ranges.c_floor || ranges.c_floor > c_mag_max {
            break c;
        }
    };
    let d_lo = ranges.d.0.max(-c).max(0.0);
    let d_hi = ranges.d.1.min(255.0 - c).min(255.0);
    let d = if d_hi >= d_lo { uniform(rng, (d_lo, d_hi)) } else { d_lo.min(255.0) };
    GaussianSignalSpec { cx, cy, alpha, beta, theta, c, d }
}

pub fn write_truth_csv(path: impl AsRef<Path>, specs: &[GaussianSignalSpec]) -> Result<(), SynthError> {
    let path = path.as_ref();
    let wrap = |source| SynthError::Csv { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    for s in specs {
        w.serialize(s).map_err(wrap)?;
    }
    w.flush().map_err(|e| wrap(e.into()))?;
    Ok(())
}

pub fn read_truth_csv(path: impl AsRef<Path>) -> Result<Vec<GaussianSignalSpec>, SynthError> {
    let path = path.as_ref();
    let wrap = |source| SynthError::Csv { path: path.display().to_string(), source };
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(wrap)?;
    r.deserialize().map(|row| row.map_err(wrap)).collect()
}
