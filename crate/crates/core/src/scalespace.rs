//! Gaussian scale-space pyramid and the scale-normalized DoG stack.
//!
//! Each octave holds `s + 3` Gaussian levels whose blur grows by
//! `k = 2^(1/s)` per level, and `s + 2` DoG levels. DoG levels are divided
//! by `ln k` so that they read directly in units of the scale-normalized
//! Laplacian `σ²∇²(G*I)`, evaluated at the geometric mid-scale `σ·√k`
//! of the two Gaussians they were built from.

use rayon::prelude::*;
use thiserror::Error;

use crate::imgio::GrayImage;

#[derive(Debug, Error, PartialEq)]
pub enum ScaleSpaceError {
    #[error("image {width}x{height} is too small for one octave (minimum 16x16)")]
    ImageTooSmall { width: usize, height: usize },
    #[error("invalid pyramid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OctaveCount {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidConfig {
    /// Scales per octave `s`; consecutive levels differ by `2^(1/s)`.
    pub levels_per_octave: usize,
    /// Absolute blur of level 0 in the first octave, in that octave's pixels.
    pub base_sigma: f64,
    pub octaves: OctaveCount,
    /// Blur already present in the input image, in input pixels.
    pub assumed_input_blur: f64,
    /// Gaussian kernels are truncated at this many sigmas.
    pub kernel_truncation: f64,
    /// Prepend an octave built from the input upsampled by two.
    pub upsample: bool,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self {
            levels_per_octave: 3,
            base_sigma: 1.6,
            octaves: OctaveCount::Auto,
            assumed_input_blur: 0.5,
            kernel_truncation: 4.0,
            upsample: true,
        }
    }
}

impl PyramidConfig {
    pub fn validate(&self) -> Result<(), ScaleSpaceError> {
        let bad = |m: &str| Err(ScaleSpaceError::InvalidConfig(m.to_string()));
        if self.levels_per_octave < 2 {
            return bad("levels_per_octave must be >= 2");
        }
        if !(self.assumed_input_blur >= 0.0) {
            return bad("assumed_input_blur must be >= 0");
        }
        let first_blur = self.assumed_input_blur * if self.upsample { 2.0 } else { 1.0 };
        if !(self.base_sigma > first_blur) {
            return bad("base_sigma must exceed the assumed input blur");
        }
        if !(self.kernel_truncation >= 3.0) {
            return bad("kernel_truncation must be >= 3");
        }
        if self.octaves == OctaveCount::Fixed(0) {
            return bad("octave count must be positive");
        }
        Ok(())
    }

    /// Scale ratio between consecutive levels.
    pub fn k(&self) -> f64 {
        2f64.powf(1.0 / self.levels_per_octave as f64)
    }
}

/// Factor that converts a raw Gaussian difference into normalized-Laplacian units.
///
/// `G(kσ) − G(σ) = ∫ s∇²G ds` over `[σ, kσ]`, i.e. the integral of the
/// normalized Laplacian over `ln s`. Dividing by the interval length `ln k`
/// turns it into the mean normalized Laplacian over the level pair.
pub fn dog_normalization(k: f64) -> f64 {
    1.0 / k.ln()
}

#[derive(Debug, Clone)]
pub struct Octave {
    /// Size of one octave pixel in input pixels (0.5 for the upsampled octave).
    pub scale: f64,
    /// Blur of each Gaussian level in octave pixels.
    pub sigmas: Vec<f64>,
    pub gaussians: Vec<GrayImage>,
    pub dogs: Vec<GrayImage>,
}

impl Octave {
    pub fn width(&self) -> usize {
        self.gaussians[0].width()
    }

    pub fn height(&self) -> usize {
        self.gaussians[0].height()
    }

    /// Scale in octave pixels at which DoG level `level + offset` peaks for a blob.
    pub fn dog_sigma(&self, k: f64, level: f64) -> f64 {
        self.sigmas[0] * k.powf(level + 0.5)
    }
}

#[derive(Debug, Clone)]
pub struct ScaleSpacePyramid {
    pub config: PyramidConfig,
    pub k: f64,
    pub octaves: Vec<Octave>,
}

impl ScaleSpacePyramid {
    /// Builds Gaussian levels and the normalized DoG stack in one go.
    pub fn new(img: &GrayImage, cfg: &PyramidConfig) -> Result<Self, ScaleSpaceError> {
        let mut pyr = build_pyramid(img, cfg)?;
        normalized_dog(&mut pyr);
        Ok(pyr)
    }
}

/// Sampled, L1-normalized Gaussian kernel of odd length `2⌈tσ⌉ + 1`.
pub fn gaussian_kernel(sigma: f64, truncation: f64) -> Vec<f64> {
    let radius = (truncation * sigma).ceil().max(1.0) as isize;
    let denom = 2.0 * sigma * sigma;
    let mut kernel: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / denom).exp()).collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|v| *v /= sum);
    kernel
}

/// Separable Gaussian blur, kernel truncated at 4σ, edge-clamp borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    gaussian_blur_truncated(img, sigma, 4.0)
}

pub fn gaussian_blur_truncated(img: &GrayImage, sigma: f64, truncation: f64) -> GrayImage {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    if sigma == 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma, truncation);
    let horizontal = convolve_rows(img, &kernel);
    convolve_cols(&horizontal, &kernel)
}

fn convolve_rows(img: &GrayImage, kernel: &[f64]) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let radius = (kernel.len() / 2) as isize;
    let src = img.pixels();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row_out)| {
        let row = &src[y * w..(y + 1) * w];
        for (x, o) in row_out.iter_mut().enumerate() {
            let mut acc = 0.0;
            let base = x as isize - radius;
            if base >= 0 && base + kernel.len() as isize <= w as isize {
                let window = &row[base as usize..base as usize + kernel.len()];
                for (kv, pv) in kernel.iter().zip(window) {
                    acc += kv * pv;
                }
            } else {
                for (i, kv) in kernel.iter().enumerate() {
                    let xi = (base + i as isize).clamp(0, w as isize - 1) as usize;
                    acc += kv * row[xi];
                }
            }
            *o = acc;
        }
    });
    GrayImage::new(w, h, out).expect("dimensions preserved")
}

fn convolve_cols(img: &GrayImage, kernel: &[f64]) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let radius = (kernel.len() / 2) as isize;
    let src = img.pixels();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row_out)| {
        for (i, kv) in kernel.iter().enumerate() {
            let yi = (y as isize + i as isize - radius).clamp(0, h as isize - 1) as usize;
            let row = &src[yi * w..(yi + 1) * w];
            for (o, pv) in row_out.iter_mut().zip(row) {
                *o += kv * pv;
            }
        }
    });
    GrayImage::new(w, h, out).expect("dimensions preserved")
}

/// Doubles the resolution by linear interpolation; output pixel `2i` sits on input pixel `i`.
pub fn upsample2(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(2 * w, 2 * h, |x, y| {
        let (x0, fx) = ((x / 2).min(w - 1), (x % 2) as f64 * 0.5);
        let (y0, fy) = ((y / 2).min(h - 1), (y % 2) as f64 * 0.5);
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
        let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Keeps every second pixel in both directions.
pub fn downsample2(img: &GrayImage) -> GrayImage {
    let w = img.width().div_ceil(2);
    let h = img.height().div_ceil(2);
    GrayImage::from_fn(w, h, |x, y| img.get(2 * x, 2 * y))
}

fn auto_octaves(min_dim: usize) -> usize {
    // floor(log2(min_dim / 16)), at least one.
    let mut n = 0;
    let mut m = min_dim;
    while m >= 32 {
        m /= 2;
        n += 1;
    }
    n.max(1)
}

/// Builds the Gaussian levels of every octave. DoG levels are left empty.
pub fn build_pyramid(img: &GrayImage, cfg: &PyramidConfig) -> Result<ScaleSpacePyramid, ScaleSpaceError> {
    cfg.validate()?;
    let (w, h) = (img.width(), img.height());
    if w.min(h) < 16 {
        return Err(ScaleSpaceError::ImageTooSmall { width: w, height: h });
    }
    let s = cfg.levels_per_octave;
    let k = cfg.k();
    let (base, first_scale, input_blur) = if cfg.upsample {
        (upsample2(img), 0.5, 2.0 * cfg.assumed_input_blur)
    } else {
        (img.clone(), 1.0, cfg.assumed_input_blur)
    };
    let min_dim = base.width().min(base.height());
    let n_octaves = match cfg.octaves {
        OctaveCount::Auto => auto_octaves(min_dim),
        OctaveCount::Fixed(n) => {
            if min_dim >> (n - 1) < 16 {
                return Err(ScaleSpaceError::ImageTooSmall { width: w, height: h });
            }
            n
        }
    };

    let sigmas: Vec<f64> = (0..s + 3).map(|i| cfg.base_sigma * k.powi(i as i32)).collect();
    let blur = |im: &GrayImage, sigma: f64| gaussian_blur_truncated(im, sigma, cfg.kernel_truncation);

    let mut octaves = Vec::with_capacity(n_octaves);
    let mut seed = blur(&base, (cfg.base_sigma.powi(2) - input_blur.powi(2)).sqrt());
    let mut scale = first_scale;
    for o in 0..n_octaves {
        if o > 0 {
            let prev: &Octave = octaves.last().expect("previous octave");
            seed = downsample2(&prev.gaussians[s]);
            scale *= 2.0;
        }
        let mut gaussians = Vec::with_capacity(s + 3);
        gaussians.push(seed.clone());
        for i in 1..s + 3 {
            let inc = (sigmas[i].powi(2) - sigmas[i - 1].powi(2)).sqrt();
            let next = blur(&gaussians[i - 1], inc);
            gaussians.push(next);
        }
        octaves.push(Octave { scale, sigmas: sigmas.clone(), gaussians, dogs: Vec::new() });
    }
    Ok(ScaleSpacePyramid { config: cfg.clone(), k, octaves })
}

/// Fills the DoG levels: `(G[i+1] − G[i]) / ln k`.
pub fn normalized_dog(pyr: &mut ScaleSpacePyramid) {
    let norm = dog_normalization(pyr.k);
    for octave in &mut pyr.octaves {
        octave.dogs = octave
            .gaussians
            .par_windows(2)
            .map(|pair| {
                let (lo, hi) = (&pair[0], &pair[1]);
                let px = hi.pixels().iter().zip(lo.pixels()).map(|(a, b)| (a - b) * norm).collect();
                GrayImage::new(lo.width(), lo.height(), px).expect("same dimensions")
            })
            .collect();
    }
}
