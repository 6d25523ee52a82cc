//! Grayscale raster type and binary PGM (P5) reading/writing.
//!
//! Only 8-bit binary PGM is supported. Pixels are converted to `f64`
//! immediately on load without rescaling, so intensities stay in the
//! nominal `[0, 255]` range.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported magic {0:?}, expected P5")]
    UnsupportedMagic(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported maxval {0}, only 8-bit (maxval <= 255) images are supported")]
    UnsupportedDepth(u32),
    #[error("unexpected end of data: expected {expected} pixel bytes, found {found}")]
    UnexpectedEof { expected: usize, found: usize },
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
}

/// Row-major floating point grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(ImageError::InvalidDimensions { width, height });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { width, height, pixels: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    /// Pixel lookup with edge-clamp replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[cy * self.width + cx]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { width: self.width, height: self.height, pixels: self.pixels.iter().map(|&v| f(v)).collect() }
    }

    /// Rotates the raster by 90° counterclockwise as displayed (rows grow downward).
    pub fn rotate90_ccw(&self) -> Self {
        let (w, h) = (self.width, self.height);
        // Output is h wide, w tall: out(x', y') = in(w - 1 - y', x').
        GrayImage::from_fn(h, w, |xo, yo| self.get(w - 1 - yo, xo))
    }
}

fn parse_header_token<'a>(data: &'a [u8], pos: &mut usize) -> Result<&'a str, ImageError> {
    // Skip whitespace and comments.
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImageError::MalformedHeader("unexpected end of header".into()));
    }
    std::str::from_utf8(&data[start..*pos]).map_err(|_| ImageError::MalformedHeader("non-ascii header token".into()))
}

fn parse_header_number(data: &[u8], pos: &mut usize, what: &str) -> Result<u32, ImageError> {
    let tok = parse_header_token(data, pos)?;
    tok.parse::<u32>().map_err(|_| ImageError::MalformedHeader(format!("invalid {what} {tok:?}")))
}

/// Decodes an in-memory binary PGM.
pub fn decode_pgm(data: &[u8]) -> Result<GrayImage, ImageError> {
    if data.len() < 2 {
        return Err(ImageError::MalformedHeader("file too short".into()));
    }
    let magic = &data[..2];
    if magic != b"P5" {
        return Err(ImageError::UnsupportedMagic(String::from_utf8_lossy(magic).into_owned()));
    }
    let mut pos = 2;
    let width = parse_header_number(data, &mut pos, "width")? as usize;
    let height = parse_header_number(data, &mut pos, "height")? as usize;
    let maxval = parse_header_number(data, &mut pos, "maxval")?;
    if maxval == 0 {
        return Err(ImageError::MalformedHeader("maxval must be positive".into()));
    }
    if maxval > 255 {
        return Err(ImageError::UnsupportedDepth(maxval));
    }
    if width == 0 || height == 0 {
        return Err(ImageError::InvalidDimensions { width, height });
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(ImageError::UnexpectedEof { expected: width * height, found: 0 });
    }
    pos += 1;
    let expected = width * height;
    let payload = &data[pos..];
    if payload.len() < expected {
        return Err(ImageError::UnexpectedEof { expected, found: payload.len() });
    }
    let pixels = payload[..expected].iter().map(|&b| f64::from(b)).collect();
    Ok(GrayImage { width, height, pixels })
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|source| ImageError::Io { path: path.display().to_string(), source })?;
    decode_pgm(&data)
}

/// Converts an intensity to a byte: clamp to `[0, 255]`, round half up.
#[inline]
pub fn to_byte(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 255.0) + 0.5).floor().min(255.0) as u8
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&v| to_byte(v)));
    out
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let io_err = |source| ImageError::Io { path: path.display().to_string(), source };
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&encode_pgm(img)).map_err(io_err)?;
    Ok(())
}
