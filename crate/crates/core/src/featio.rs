//! Text feature files.
//!
//! ```text
//! 1.0
//! <count>
//! x y sm_x sm_y sm_z sigma alpha beta theta c d dog_value
//! ...
//! ```
//!
//! `(sm_x, sm_y, sm_z)` are the shape-matrix entries. Numbers are written with
//! nine significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::affineshape::{blurred_peak_fraction, AffineFeature, ShapeMatrix};

pub const HEADER: &str = "1.0";
const FIELDS: usize = 12;

#[derive(Debug, Error)]
pub enum FeatureFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

fn format_err(line: usize, message: impl Into<String>) -> FeatureFileError {
    FeatureFileError::Format { line, message: message.into() }
}

/// One line of a feature file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRecord {
    pub x: f64,
    pub y: f64,
    pub shape: ShapeMatrix,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub c: f64,
    pub d: f64,
    pub dog_value: f64,
}

impl From<&AffineFeature> for FeatureRecord {
    fn from(f: &AffineFeature) -> Self {
        Self {
            x: f.x,
            y: f.y,
            shape: f.shape_matrix(),
            sigma: f.sigma,
            alpha: f.alpha,
            beta: f.beta,
            theta: f.theta,
            c: f.c,
            d: f.d,
            dog_value: f.dog_value,
        }
    }
}

impl FeatureRecord {
    /// Rebuilds the full feature; the derived quantities follow from the stored radii.
    pub fn to_feature(&self) -> AffineFeature {
        let h_sq = (self.alpha / self.sigma).powi(2);
        let k_sq = (self.beta / self.alpha).powi(2);
        AffineFeature {
            x: self.x,
            y: self.y,
            sigma: self.sigma,
            r: (1.0 + h_sq * k_sq) / (1.0 + h_sq),
            h_sq,
            k_sq,
            alpha: self.alpha,
            beta: self.beta,
            theta: self.theta,
            c: self.c,
            d: self.d,
            dog_value: self.dog_value,
            ss_value: self.d + self.c * blurred_peak_fraction(h_sq, k_sq),
        }
    }

    fn values(&self) -> [f64; FIELDS] {
        [
            self.x,
            self.y,
            self.shape.x,
            self.shape.y,
            self.shape.z,
            self.sigma,
            self.alpha,
            self.beta,
            self.theta,
            self.c,
            self.d,
            self.dog_value,
        ]
    }
}

pub fn format_features(records: &[FeatureRecord]) -> String {
    let mut out = format!("{HEADER}\n{}\n", records.len());
    for rec in records {
        let line: Vec<String> = rec.values().iter().map(|v| format!("{v:.8e}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn parse_features(text: &str) -> Result<Vec<FeatureRecord>, FeatureFileError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, l)) if l.parse::<f64>().is_ok_and(|v| v == 1.0) => {}
        Some((n, l)) => return Err(format_err(n, format!("expected header \"{HEADER}\", found \"{l}\""))),
        None => return Err(format_err(1, "empty file")),
    }
    let count = match lines.next() {
        Some((n, l)) => l.parse::<usize>().map_err(|_| format_err(n, format!("invalid feature count \"{l}\"")))?,
        None => return Err(format_err(2, "missing feature count")),
    };
    let mut out = Vec::with_capacity(count);
    let mut last_line = 2;
    for (n, l) in lines {
        last_line = n;
        let vals = l
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| format_err(n, format!("invalid number \"{t}\""))))
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != FIELDS {
            return Err(format_err(n, format!("expected {FIELDS} values, found {}", vals.len())));
        }
        out.push(FeatureRecord {
            x: vals[0],
            y: vals[1],
            shape: ShapeMatrix { x: vals[2], y: vals[3], z: vals[4] },
            sigma: vals[5],
            alpha: vals[6],
            beta: vals[7],
            theta: vals[8],
            c: vals[9],
            d: vals[10],
            dog_value: vals[11],
        });
    }
    if out.len() != count {
        return Err(format_err(last_line, format!("header announces {count} features, found {}", out.len())));
    }
    Ok(out)
}

pub fn write_features(path: impl AsRef<Path>, features: &[AffineFeature]) -> Result<(), FeatureFileError> {
    let path = path.as_ref();
    let records: Vec<FeatureRecord> = features.iter().map(FeatureRecord::from).collect();
    fs::write(path, format_features(&records))
        .map_err(|source| FeatureFileError::Io { path: path.display().to_string(), source })
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<FeatureRecord>, FeatureFileError> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|source| FeatureFileError::Io { path: path.display().to_string(), source })?;
    parse_features(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(x: f64) -> FeatureRecord {
        FeatureRecord {
            x,
            y: 20.25,
            shape: ShapeMatrix { x: 5.0, y: 0.0, z: 2.0 },
            sigma: 3.0,
            alpha: 2.0,
            beta: 5.0,
            theta: 0.0,
            c: 200.0,
            d: 30.0,
            dog_value: -60.0,
        }
    }

    #[test]
    fn header_and_count() {
        let text = format_features(&[record(1.5), record(2.5)]);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("1.0"));
        assert_eq!(lines.next(), Some("2"));
        assert_eq!(lines.next().unwrap().split_whitespace().count(), 12);
        assert_eq!(parse_features(&text).unwrap(), vec![record(1.5), record(2.5)]);
    }

    #[test]
    fn empty_file_has_valid_header() {
        assert_eq!(format_features(&[]), "1.0\n0\n");
        assert!(parse_features("1.0\n0\n").unwrap().is_empty());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = |t: &str| match parse_features(t) {
            Err(FeatureFileError::Format { line, .. }) => line,
            other => panic!("expected format error, got {other:?}"),
        };
        assert_eq!(err(""), 1);
        assert_eq!(err("2.0\n0\n"), 1);
        assert_eq!(err("1.0\nmany\n"), 2);
        assert_eq!(err("1.0\n1\n1 2 3\n"), 3);
        assert_eq!(err("1.0\n1\n1 2 3 4 5 6 7 8 9 10 x 12\n"), 3);
        assert_eq!(err("1.0\n2\n1 2 3 4 5 6 7 8 9 10 11 12\n"), 3);
    }

    #[test]
    fn feature_reconstruction_keeps_derived_terms() {
        let rec = record(4.0);
        let f = rec.to_feature();
        assert!((f.h_sq - 4.0 / 9.0).abs() < 1e-15);
        assert!((f.k_sq - 6.25).abs() < 1e-15);
        assert_eq!(FeatureRecord::from(&f), rec);
    }

    fn rel_close(a: f64, b: f64) -> bool {
        a == b || (a - b).abs() <= 5e-9 * a.abs().max(b.abs())
    }

    proptest! {
        #[test]
        fn nine_digit_round_trip(vals in proptest::array::uniform12(-1e6f64..1e6)) {
            let rec = FeatureRecord {
                x: vals[0], y: vals[1],
                shape: ShapeMatrix { x: vals[2], y: vals[3], z: vals[4] },
                sigma: vals[5], alpha: vals[6], beta: vals[7], theta: vals[8],
                c: vals[9], d: vals[10], dog_value: vals[11],
            };
            let text = format_features(&[rec]);
            let back = parse_features(&text).unwrap()[0];
            for (a, b) in rec.values().iter().zip(back.values().iter()) {
                prop_assert!(rel_close(*a, *b), "{a} vs {b}");
            }
            // Rewriting the parsed values reproduces the file byte for byte.
            prop_assert_eq!(format_features(&[back]), text);
        }
    }
}
