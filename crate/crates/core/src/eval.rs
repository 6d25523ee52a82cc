//! Ground-truth comparison: matching, parameter errors, ellipse overlap,
//! rotation covariance, randomized sweeps and curve tables.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::affineshape::{
    axis_angle_diff, k_from_r, normalized_log_response, solve_h, to_shape_matrix, AffineFeature, ShapeMatrix,
};
use crate::config::DetectorConfig;
use crate::pipeline::detect_features;
use crate::scalespace::ScaleSpaceError;
use crate::synth::{add_gaussian_noise, quantize, random_spec, render_with, GaussianSignalSpec, SpecRanges};

/// Orientation errors are not reported for truths rounder than this.
pub const ISOTROPY_GUARD: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pairing {
    pub truth: usize,
    pub detected: usize,
    pub distance: f64,
}

/// Greedy globally-nearest matching: repeatedly pairs the closest remaining
/// (truth, detection) couple with distance `≤ max_dist`.
pub fn match_features(detected: &[AffineFeature], truth: &[GaussianSignalSpec], max_dist: f64) -> Vec<Pairing> {
    let mut candidates: Vec<Pairing> = truth
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| {
            detected.iter().enumerate().filter_map(move |(di, d)| {
                let distance = (d.x - t.cx).hypot(d.y - t.cy);
                (distance <= max_dist).then_some(Pairing { truth: ti, detected: di, distance })
            })
        })
        .collect();
    candidates.sort_by(|a, b| {
        a.distance.total_cmp(&b.distance).then(a.truth.cmp(&b.truth)).then(a.detected.cmp(&b.detected))
    });
    let mut used_t = vec![false; truth.len()];
    let mut used_d = vec![false; detected.len()];
    let mut out = Vec::new();
    for p in candidates {
        if !used_t[p.truth] && !used_d[p.detected] {
            used_t[p.truth] = true;
            used_d[p.detected] = true;
            out.push(p);
        }
    }
    out
}

/// Errors of one matched detection. Relative errors divide by the true value
/// (by `max(|truth|, 1)` for contrast and baseline, which may be zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchErrors {
    pub truth_index: usize,
    pub detected_index: usize,
    pub position_err: f64,
    pub aspect_ratio_rel_err: f64,
    pub short_radius_rel_err: f64,
    pub orientation_err: f64,
    pub contrast_rel_err: f64,
    pub baseline_rel_err: f64,
}

pub fn match_errors(det: &AffineFeature, truth: &GaussianSignalSpec) -> MatchErrors {
    let k_true = truth.aspect_ratio();
    let orientation_err = if k_true < ISOTROPY_GUARD { 0.0 } else { axis_angle_diff(det.theta, truth.theta) };
    MatchErrors {
        truth_index: 0,
        detected_index: 0,
        position_err: (det.x - truth.cx).hypot(det.y - truth.cy),
        aspect_ratio_rel_err: (det.aspect_ratio() - k_true).abs() / k_true,
        short_radius_rel_err: (det.alpha - truth.alpha).abs() / truth.alpha,
        orientation_err,
        contrast_rel_err: (det.c - truth.c).abs() / truth.c.abs().max(1.0),
        baseline_rel_err: (det.d - truth.d).abs() / truth.d.abs().max(1.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_truth: usize,
    pub n_detected: usize,
    pub n_matched: usize,
    pub matches: Vec<MatchErrors>,
    /// Detections left unmatched.
    pub false_positive_count: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Median of a sample; `NaN` when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl EvalReport {
    pub fn mean_of(&self, f: impl Fn(&MatchErrors) -> f64) -> f64 {
        mean(self.matches.iter().map(f))
    }

    pub fn mean_position_err(&self) -> f64 {
        self.mean_of(|m| m.position_err)
    }

    pub fn summary_lines(&self) -> Vec<String> {
        vec![
            format!(
                "truth={} detected={} matched={} false_positives={}",
                self.n_truth, self.n_detected, self.n_matched, self.false_positive_count
            ),
            format!("mean_position_err={:.4}", self.mean_position_err()),
            format!("mean_aspect_ratio_rel_err={:.4}", self.mean_of(|m| m.aspect_ratio_rel_err)),
            format!("mean_short_radius_rel_err={:.4}", self.mean_of(|m| m.short_radius_rel_err)),
            format!("mean_orientation_err_deg={:.4}", self.mean_of(|m| m.orientation_err).to_degrees()),
            format!("mean_contrast_rel_err={:.4}", self.mean_of(|m| m.contrast_rel_err)),
            format!("mean_baseline_rel_err={:.4}", self.mean_of(|m| m.baseline_rel_err)),
        ]
    }
}

pub fn parameter_errors(detected: &[AffineFeature], truth: &[GaussianSignalSpec], pairings: &[Pairing]) -> EvalReport {
    let matches = pairings
        .iter()
        .map(|p| MatchErrors {
            truth_index: p.truth,
            detected_index: p.detected,
            ..match_errors(&detected[p.detected], &truth[p.truth])
        })
        .collect::<Vec<_>>();
    EvalReport {
        n_truth: truth.len(),
        n_detected: detected.len(),
        n_matched: matches.len(),
        false_positive_count: detected.len() - matches.len(),
        matches,
    }
}

pub fn evaluate(detected: &[AffineFeature], truth: &[GaussianSignalSpec], max_dist: f64) -> EvalReport {
    let pairings = match_features(detected, truth, max_dist);
    parameter_errors(detected, truth, &pairings)
}

pub fn write_report_csv(path: impl AsRef<Path>, report: &EvalReport) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    if report.matches.is_empty() {
        w.write_record([
            "truth_index",
            "detected_index",
            "position_err",
            "aspect_ratio_rel_err",
            "short_radius_rel_err",
            "orientation_err",
            "contrast_rel_err",
            "baseline_rel_err",
        ])?;
    }
    for m in &report.matches {
        w.serialize(m)?;
    }
    w.flush()?;
    Ok(())
}

/// An ellipse `{p : (p − μ)ᵀ M⁻² (p − μ) ≤ 1}` in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub shape: ShapeMatrix,
}

impl Ellipse {
    pub fn from_feature(f: &AffineFeature) -> Self {
        Self { cx: f.x, cy: f.y, shape: f.shape_matrix() }
    }

    pub fn from_spec(s: &GaussianSignalSpec) -> Self {
        Self { cx: s.cx, cy: s.cy, shape: to_shape_matrix(s.alpha, s.beta, s.theta) }
    }

    pub fn area(&self) -> f64 {
        PI * self.shape.det()
    }

    /// `M⁻²` entries `(a, b, c)`.
    fn inverse_square(&self) -> (f64, f64, f64) {
        let ShapeMatrix { x, y, z } = self.shape;
        let det = x * z - y * y;
        let (ix, iy, iz) = (z / det, -y / det, x / det);
        (ix * ix + iy * iy, iy * (ix + iz), iy * iy + iz * iz)
    }

    /// Half extents of the axis-aligned bounding box.
    fn half_extent(&self) -> (f64, f64) {
        let ShapeMatrix { x, y, z } = self.shape;
        ((x * x + y * y).sqrt(), (y * y + z * z).sqrt())
    }

    fn scaled_about(&self, factor: f64, ox: f64, oy: f64) -> Self {
        Self {
            cx: ox + (self.cx - ox) * factor,
            cy: oy + (self.cy - oy) * factor,
            shape: ShapeMatrix { x: self.shape.x * factor, y: self.shape.y * factor, z: self.shape.z * factor },
        }
    }
}

/// Samples per axis of the overlap grid.
pub const OVERLAP_GRID: usize = 400;
/// Reference radius for scale-normalized overlap, pixels.
pub const OVERLAP_REFERENCE_RADIUS: f64 = 30.0;

/// Intersection over union of two ellipses, by sampling their joint bounding box.
///
/// With `scale_norm`, both ellipses are first scaled about the first center so
/// that the first has the area of a circle of [`OVERLAP_REFERENCE_RADIUS`].
pub fn ellipse_overlap(a: &Ellipse, b: &Ellipse, scale_norm: bool) -> f64 {
    let (a, b) = if scale_norm {
        let f = OVERLAP_REFERENCE_RADIUS / a.shape.det().sqrt();
        (a.scaled_about(f, a.cx, a.cy), b.scaled_about(f, a.cx, a.cy))
    } else {
        (*a, *b)
    };
    let (ax, ay) = a.half_extent();
    let (bx, by) = b.half_extent();
    let x0 = (a.cx - ax).min(b.cx - bx);
    let x1 = (a.cx + ax).max(b.cx + bx);
    let y0 = (a.cy - ay).min(b.cy - by);
    let y1 = (a.cy + ay).max(b.cy + by);
    let qa = a.inverse_square();
    let qb = b.inverse_square();
    let inside = |(p, q, r): (f64, f64, f64), cx: f64, cy: f64, x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        p * dx * dx + 2.0 * q * dx * dy + r * dy * dy <= 1.0
    };
    let n = OVERLAP_GRID;
    let (sx, sy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let (mut inter, mut union) = (0usize, 0usize);
    for j in 0..n {
        let y = y0 + (j as f64 + 0.5) * sy;
        for i in 0..n {
            let x = x0 + (i as f64 + 0.5) * sx;
            let ia = inside(qa, a.cx, a.cy, x, y);
            let ib = inside(qb, b.cx, b.cy, x, y);
            inter += usize::from(ia && ib);
            union += usize::from(ia || ib);
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Fraction of regions in `a` that reappear in `b` with overlap `≥ threshold`
/// (greedy one-to-one), relative to the smaller set.
pub fn repeatability(a: &[Ellipse], b: &[Ellipse], threshold: f64, scale_norm: bool) -> f64 {
    let denom = a.len().min(b.len());
    if denom == 0 {
        return 0.0;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, ea) in a.iter().enumerate() {
        for (j, eb) in b.iter().enumerate() {
            let o = ellipse_overlap(ea, eb, scale_norm);
            if o >= threshold {
                pairs.push((o, i, j));
            }
        }
    }
    pairs.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let (mut ua, mut ub) = (vec![false; a.len()], vec![false; b.len()]);
    let mut count = 0;
    for (_, i, j) in pairs {
        if !ua[i] && !ub[j] {
            ua[i] = true;
            ub[j] = true;
            count += 1;
        }
    }
    count as f64 / denom as f64
}

/// Detection of one rotated copy of a signal.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSample {
    pub angle: f64,
    pub truth: GaussianSignalSpec,
    pub feature: Option<AffineFeature>,
    /// Orientation error modulo π against the rotated truth.
    pub theta_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationReport {
    pub samples: Vec<RotationSample>,
    /// `(max − min) / mean` across angles, for matched samples.
    pub alpha_spread: f64,
    pub beta_spread: f64,
    pub c_spread: f64,
    pub d_spread: f64,
    pub max_theta_err: f64,
}

impl RotationReport {
    pub fn all_detected(&self) -> bool {
        self.samples.iter().all(|s| s.feature.is_some())
    }
}

fn spread(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m = mean(values.iter().copied());
    (hi - lo) / m.abs().max(1e-12)
}

/// Renders `spec` rotated about the frame center by each angle (radians,
/// counterclockwise), detects, and measures how stable the recovered shape is.
pub fn rotation_covariance_suite(
    spec: &GaussianSignalSpec,
    angles: &[f64],
    cfg: &DetectorConfig,
    width: usize,
    height: usize,
    max_dist: f64,
) -> Result<RotationReport, ScaleSpaceError> {
    let (ox, oy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let samples = angles
        .par_iter()
        .map(|&angle| {
            let truth = spec.rotated(angle, ox, oy);
            let img = render_with(&truth, width, height, cfg.quantize).expect("valid spec");
            let feats = detect_features(&img, cfg)?;
            let pairing = match_features(&feats, std::slice::from_ref(&truth), max_dist);
            let feature = pairing.first().map(|p| feats[p.detected].clone());
            let theta_err = feature.as_ref().map(|f| axis_angle_diff(f.theta, truth.theta));
            Ok(RotationSample { angle, truth, feature, theta_err })
        })
        .collect::<Result<Vec<_>, ScaleSpaceError>>()?;
    let found: Vec<&AffineFeature> = samples.iter().filter_map(|s| s.feature.as_ref()).collect();
    let collect = |f: fn(&AffineFeature) -> f64| found.iter().map(|x| f(x)).collect::<Vec<_>>();
    Ok(RotationReport {
        alpha_spread: spread(&collect(|f| f.alpha)),
        beta_spread: spread(&collect(|f| f.beta)),
        c_spread: spread(&collect(|f| f.c)),
        d_spread: spread(&collect(|f| f.d)),
        max_theta_err: samples.iter().filter_map(|s| s.theta_err).fold(0.0, f64::max),
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curve {
    /// `H` against the eigen ratio `r`.
    HVsR,
    /// Admitted aspect ratio `k` against the eigen-ratio threshold `r`.
    KVsR,
    /// Normalized-Laplacian center response over `(h, k)` with unit contrast.
    Ridge,
}

impl std::str::FromStr for Curve {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "H_vs_r" | "h_vs_r" => Ok(Curve::HVsR),
            "k_vs_r" => Ok(Curve::KVsR),
            "ridge" => Ok(Curve::Ridge),
            other => Err(format!("unknown curve {other:?} (expected H_vs_r, k_vs_r or ridge)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl CurveTable {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n` evenly spaced values over `[lo, hi]` (just `lo` when `n == 1`).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Tabulates a curve. `primary` holds `r` values (or `h` values for the ridge
/// surface); `secondary` holds the `k` values of the ridge surface.
pub fn emit_curves(which: Curve, primary: &[f64], secondary: &[f64]) -> CurveTable {
    match which {
        Curve::HVsR => CurveTable {
            header: vec!["r", "H"],
            rows: primary.iter().filter(|r| **r >= 1.0).map(|&r| vec![r, solve_h(r).expect("r >= 1")]).collect(),
        },
        Curve::KVsR => CurveTable {
            header: vec!["r", "k"],
            rows: primary.iter().filter(|r| **r >= 1.0).map(|&r| vec![r, k_from_r(r)]).collect(),
        },
        Curve::Ridge => CurveTable {
            header: vec!["h", "k", "response"],
            rows: primary
                .iter()
                .flat_map(|&h| secondary.iter().map(move |&k| vec![h, k, normalized_log_response(1.0, h * h, k * k)]))
                .collect(),
        },
    }
}

/// Settings of a randomized accuracy sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub trials: usize,
    pub seed: u64,
    pub noise_levels: Vec<f64>,
    pub ranges: SpecRanges,
    pub max_match_dist: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { trials: 50, seed: 0, noise_levels: vec![0.0], ranges: SpecRanges::default(), max_match_dist: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub noise: f64,
    pub spec: GaussianSignalSpec,
    pub n_detected: usize,
    pub feature: Option<AffineFeature>,
    pub errors: Option<MatchErrors>,
}

/// Per-trial seed derived from the sweep seed (SplitMix64 of `seed + trial`).
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    let mut z = seed.wrapping_add((trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// All features found in one trial, plus the one matched to the truth and its errors.
pub type TrialOutcome = (Vec<AffineFeature>, Option<(AffineFeature, MatchErrors)>);

/// Detects and scores one spec rendered with the given noise.
pub fn run_trial(
    spec: &GaussianSignalSpec,
    noise: f64,
    noise_seed: u64,
    cfg: &DetectorConfig,
    width: usize,
    height: usize,
    max_dist: f64,
) -> Result<TrialOutcome, ScaleSpaceError> {
    let clean = render_with(spec, width, height, cfg.quantize).expect("valid spec");
    let img = if noise > 0.0 {
        let noisy = add_gaussian_noise(&clean, noise, noise_seed);
        if cfg.quantize {
            quantize(&noisy)
        } else {
            noisy
        }
    } else {
        clean
    };
    let feats = detect_features(&img, cfg)?;
    let truth = std::slice::from_ref(spec);
    let best = match_features(&feats, truth, max_dist)
        .first()
        .map(|p| (feats[p.detected].clone(), match_errors(&feats[p.detected], spec)));
    Ok((feats, best))
}

/// Runs every trial at every noise level. Specs depend only on the trial
/// index, so each noise level sees the same signals.
pub fn run_trials(sweep: &SweepConfig, cfg: &DetectorConfig) -> Result<Vec<TrialResult>, ScaleSpaceError> {
    let specs: Vec<GaussianSignalSpec> = (0..sweep.trials)
        .map(|t| random_spec(&sweep.ranges, &mut ChaCha8Rng::seed_from_u64(trial_seed(sweep.seed, t))))
        .collect();
    let jobs: Vec<(usize, f64)> =
        sweep.noise_levels.iter().flat_map(|&n| (0..sweep.trials).map(move |t| (t, n))).collect();
    jobs.par_iter()
        .map(|&(t, noise)| {
            let spec = specs[t];
            let (feats, best) = run_trial(
                &spec,
                noise,
                trial_seed(sweep.seed ^ 0xA5A5_A5A5, t),
                cfg,
                sweep.ranges.width,
                sweep.ranges.height,
                sweep.max_match_dist,
            )?;
            let (feature, errors) = best.map_or((None, None), |(f, e)| (Some(f), Some(e)));
            Ok(TrialResult { trial: t, noise, spec, n_detected: feats.len(), feature, errors })
        })
        .collect()
}

/// Aggregate statistics for one noise level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub noise: f64,
    pub trials: usize,
    pub detected: usize,
    pub detection_rate: f64,
    pub mean_position_err: f64,
    pub median_position_err: f64,
    pub median_aspect_ratio_rel_err: f64,
    pub median_short_radius_rel_err: f64,
    pub median_orientation_err_deg: f64,
    pub median_contrast_rel_err: f64,
    pub median_baseline_rel_err: f64,
    pub mean_false_positives: f64,
}

pub fn aggregate(results: &[TrialResult], noise_levels: &[f64]) -> Vec<SweepRow> {
    noise_levels
        .iter()
        .map(|&noise| {
            let rows: Vec<&TrialResult> = results.iter().filter(|r| r.noise == noise).collect();
            let errs: Vec<&MatchErrors> = rows.iter().filter_map(|r| r.errors.as_ref()).collect();
            let col = |f: fn(&MatchErrors) -> f64| errs.iter().map(|e| f(e)).collect::<Vec<_>>();
            let oriented: Vec<f64> = rows
                .iter()
                .filter(|r| r.spec.aspect_ratio() >= ISOTROPY_GUARD)
                .filter_map(|r| r.errors.map(|e| e.orientation_err.to_degrees()))
                .collect();
            SweepRow {
                noise,
                trials: rows.len(),
                detected: errs.len(),
                detection_rate: errs.len() as f64 / rows.len().max(1) as f64,
                mean_position_err: mean(errs.iter().map(|e| e.position_err)),
                median_position_err: median(&col(|e| e.position_err)),
                median_aspect_ratio_rel_err: median(&col(|e| e.aspect_ratio_rel_err)),
                median_short_radius_rel_err: median(&col(|e| e.short_radius_rel_err)),
                median_orientation_err_deg: median(&oriented),
                median_contrast_rel_err: median(&col(|e| e.contrast_rel_err)),
                median_baseline_rel_err: median(&col(|e| e.baseline_rel_err)),
                mean_false_positives: mean(
                    rows.iter().map(|r| r.n_detected.saturating_sub(usize::from(r.errors.is_some())) as f64),
                ),
            }
        })
        .collect()
}

pub fn write_sweep_csv<W: std::io::Write>(out: W, rows: &[SweepRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
