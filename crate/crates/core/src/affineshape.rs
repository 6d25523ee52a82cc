//! Closed-form recovery of a blob's affine shape from one scale-space extremum.
//!
//! The image is modeled locally as an anisotropic Gaussian
//! `c·exp(−½ pᵀΣ⁻¹p) + d` with short radius `α` and long radius `β`.
//! When the normalized Laplacian of that signal peaks at scale `σ`, the
//! ratio `r` of the Hessian eigenvalues at `(0, 0, σ)` fixes both
//! `H = (α/σ)²` and `K = (β/α)²`:
//!
//! ```text
//! H = (3 + r²) / (2r(1 + r))        K = (r − 1 + H·r) / H
//! ```
//!
//! and the response value and the blurred peak value then give the
//! contrast `c` and the baseline `d`.
//!
//! Angles follow the display convention: `θ` is the direction of the long
//! axis measured counterclockwise from `+x` with image rows growing
//! downward, so the long axis runs along `(cos θ, −sin θ)` in pixel
//! coordinates. [`ShapeMatrix`] entries are expressed in pixel coordinates.

use std::f64::consts::{FRAC_PI_2, PI};

use thiserror::Error;

use crate::detector::{ExtremumCandidate, HessianEigen};

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("eigen ratio {0} is below 1; order the eigenvalues by magnitude first")]
    RatioBelowOne(f64),
}

/// `2√3 − 3`, the smallest value `H` can take (reached at `r = 3 + 2√3`).
pub const H_MIN: f64 = 0.464_101_615_137_754_6;
/// Eigen ratio at which `H` is minimal and the two roots of the `K` quadratic meet.
pub const R_AT_H_MIN: f64 = 6.464_101_615_137_754;

/// Full parameter set recovered for one detected blob.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFeature {
    /// Center in input-image pixels.
    pub x: f64,
    pub y: f64,
    /// Detected scale in input-image pixels.
    pub sigma: f64,
    /// Hessian eigen ratio `|e1| / |e2| ≥ 1`.
    pub r: f64,
    /// `H = (α/σ)²`.
    pub h_sq: f64,
    /// `K = (β/α)²`.
    pub k_sq: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Long-axis orientation in `(−π/2, π/2]`.
    pub theta: f64,
    pub c: f64,
    pub d: f64,
    pub dog_value: f64,
    pub ss_value: f64,
}

impl AffineFeature {
    pub fn aspect_ratio(&self) -> f64 {
        self.beta / self.alpha
    }

    pub fn shape_matrix(&self) -> ShapeMatrix {
        to_shape_matrix(self.alpha, self.beta, self.theta)
    }
}

/// Symmetric positive definite `[[x, y], [y, z]]` encoding radii and orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeMatrix {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl ShapeMatrix {
    pub fn trace(&self) -> f64 {
        self.x + self.z
    }

    pub fn det(&self) -> f64 {
        self.x * self.z - self.y * self.y
    }

    pub fn is_positive_definite(&self) -> bool {
        self.x > 0.0 && self.z > 0.0 && self.det() > 0.0
    }
}

pub fn solve_h(r: f64) -> Result<f64, ShapeError> {
    if !(r >= 1.0) {
        return Err(ShapeError::RatioBelowOne(r));
    }
    Ok((3.0 + r * r) / (2.0 * r * (1.0 + r)))
}

pub fn solve_k(r: f64, h_sq: f64) -> f64 {
    (-1.0 + r + h_sq * r) / h_sq
}

/// The two roots `(K₁, K₂)` of the quadratic in `K` that stationarity imposes for a given `H`.
///
/// Returns `None` where the discriminant is negative (`H < 2√3 − 3`) or at `H = ½`,
/// where the closed form degenerates to `0/0`.
pub fn k_roots(h_sq: f64) -> Option<(f64, f64)> {
    let disc = -3.0 + h_sq * (6.0 + h_sq);
    let denom = h_sq * (-1.0 + 2.0 * h_sq);
    if disc < 0.0 || denom == 0.0 {
        return None;
    }
    let base = 1.0 - 3.0 * h_sq - h_sq * h_sq;
    let spread = (1.0 + h_sq) * disc.sqrt();
    Some(((base - spread) / denom, (base + spread) / denom))
}

/// Derivative (in `h`) of the normalized-Laplacian peak response, written in `H`, `K`.
///
/// Zero exactly when the response is stationary in scale.
pub fn stationarity_residual(h_sq: f64, k_sq: f64) -> f64 {
    let (h, k) = (h_sq, k_sq);
    -4.0 - 2.0 * h * (1.0 + k) - h * h * (1.0 - 6.0 * k + k * k) + 2.0 * h * h * h * (k + k * k)
}

/// Normalized Laplacian `σ²∇²(G*I)` at the center of a Gaussian blob.
pub fn normalized_log_response(c: f64, h_sq: f64, k_sq: f64) -> f64 {
    let geometry = ((1.0 + h_sq) * (1.0 + h_sq * k_sq)).powf(1.5);
    -c * h_sq * k_sq.sqrt() * (2.0 + h_sq * (1.0 + k_sq)) / geometry
}

/// Fraction of the contrast that survives blurring at the center, `(G*I − d) / c`.
pub fn blurred_peak_fraction(h_sq: f64, k_sq: f64) -> f64 {
    1.0 / ((1.0 + 1.0 / h_sq).sqrt() * (1.0 + 1.0 / (h_sq * k_sq)).sqrt())
}

pub fn radii(sigma: f64, h_sq: f64, k_sq: f64) -> (f64, f64) {
    let alpha = h_sq.sqrt() * sigma;
    (alpha, k_sq.sqrt() * alpha)
}

pub fn contrast_from_response(dog_value: f64, h_sq: f64, k_sq: f64) -> f64 {
    let geometry = ((1.0 + h_sq) * (1.0 + h_sq * k_sq)).powf(1.5);
    -dog_value * geometry / (h_sq * k_sq.sqrt() * (2.0 + h_sq * (1.0 + k_sq)))
}

pub fn baseline_from_scalespace(ss_value: f64, c: f64, h_sq: f64, k_sq: f64) -> f64 {
    ss_value - c * blurred_peak_fraction(h_sq, k_sq)
}

/// Wraps an angle into `(−π/2, π/2]`.
pub fn normalize_half_turn(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(PI);
    if a > FRAC_PI_2 {
        a -= PI;
    }
    a
}

pub fn orientation_from_eigen(eig: &HessianEigen) -> f64 {
    if eig.r < 1.0 + 1e-6 {
        0.0
    } else {
        normalize_half_turn(eig.angle_e2)
    }
}

/// Builds `[[x, y], [y, z]]` with `t = tan θ`:
/// `x = (β + t²α)/(1 + t²)`, `y = t(α − β)/(1 + t²)`, `z = (α + t²β)/(1 + t²)`.
pub fn to_shape_matrix(alpha: f64, beta: f64, theta: f64) -> ShapeMatrix {
    let theta = normalize_half_turn(theta);
    let (s, c) = theta.sin_cos();
    if c.abs() >= s.abs() {
        let t = s / c;
        let t2 = t * t;
        let n = 1.0 + t2;
        ShapeMatrix { x: (beta + t2 * alpha) / n, y: t * (alpha - beta) / n, z: (alpha + t2 * beta) / n }
    } else {
        // Same expressions divided through by t², with u = 1/t; well conditioned near |θ| = π/2.
        let u = c / s;
        let u2 = u * u;
        let n = u2 + 1.0;
        ShapeMatrix { x: (u2 * beta + alpha) / n, y: u * (alpha - beta) / n, z: (u2 * alpha + beta) / n }
    }
}

/// Aspect ratio admitted by an eigen-ratio threshold: `k = √((r + 3r³)/(3 + r²))`.
pub fn k_from_r(r: f64) -> f64 {
    ((r + 3.0 * r * r * r) / (3.0 + r * r)).sqrt()
}

/// Inverts [`k_from_r`] by bisection on `[1, 10⁷]`.
pub fn r_from_k(k: f64) -> f64 {
    if k <= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (1.0f64, 1e7f64);
    while (hi - lo) > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if k_from_r(mid) < k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Chains the closed forms for one accepted extremum.
pub fn recover_feature(cand: &ExtremumCandidate, eig: &HessianEigen, ss_value: f64) -> AffineFeature {
    let r = eig.r.max(1.0);
    let h_sq = solve_h(r).expect("ratio clamped to >= 1");
    let k_sq = solve_k(r, h_sq).max(1.0);
    let (alpha, beta) = radii(cand.sigma, h_sq, k_sq);
    let theta = orientation_from_eigen(eig);
    let c = contrast_from_response(cand.dog_value, h_sq, k_sq);
    let d = baseline_from_scalespace(ss_value, c, h_sq, k_sq);
    AffineFeature {
        x: cand.x_img,
        y: cand.y_img,
        sigma: cand.sigma,
        r,
        h_sq,
        k_sq,
        alpha,
        beta,
        theta,
        c,
        d,
        dog_value: cand.dog_value,
        ss_value,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Minimum `|c|` in intensity units.
    pub c_min: f64,
    pub alpha_min: f64,
    pub beta_min: f64,
    /// Duplicates lie within `merge_dist` radii of the stronger feature, measured
    /// along its own axes (plain `distance / α` for a circle).
    pub merge_dist: f64,
    /// Maximum ratio between corresponding radii of duplicates.
    pub merge_scale: f64,
    /// Maximum orientation difference of duplicates, radians.
    pub merge_angle: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            c_min: 8.0,
            alpha_min: 0.8,
            beta_min: 2.0,
            merge_dist: 1.0,
            merge_scale: 1.5,
            merge_angle: 15f64.to_radians(),
        }
    }
}

/// Orientation difference modulo π, in `[0, π/2]`.
pub fn axis_angle_diff(a: f64, b: f64) -> f64 {
    normalize_half_turn(a - b).abs()
}

fn radius_ratio(a: f64, b: f64) -> f64 {
    if a > b {
        a / b
    } else {
        b / a
    }
}

/// Distance from `a`'s center to `b`'s, in units of `a`'s radii along its own axes.
fn ellipse_distance(a: &AffineFeature, b: &AffineFeature) -> f64 {
    let (s, c) = a.theta.sin_cos();
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let along = dx * c - dy * s;
    let across = dx * s + dy * c;
    (along / a.beta).hypot(across / a.alpha)
}

fn is_duplicate(kept: &AffineFeature, f: &AffineFeature, cfg: &FilterConfig) -> bool {
    if ellipse_distance(kept, f) >= cfg.merge_dist {
        return false;
    }
    if radius_ratio(kept.alpha, f.alpha) > cfg.merge_scale || radius_ratio(kept.beta, f.beta) > cfg.merge_scale {
        return false;
    }
    // Orientation is meaningless for near-circular shapes.
    if kept.aspect_ratio() < 1.1 || f.aspect_ratio() < 1.1 {
        return true;
    }
    axis_angle_diff(kept.theta, f.theta) < cfg.merge_angle
}

/// Drops weak or tiny features, then collapses duplicates onto the strongest response.
///
/// Features are visited by decreasing `|dog_value|`; each is kept unless it
/// duplicates an already kept one.
pub fn filter_false_features(features: Vec<AffineFeature>, cfg: &FilterConfig) -> Vec<AffineFeature> {
    let mut kept: Vec<AffineFeature> = features
        .into_iter()
        .filter(|f| f.c.abs() >= cfg.c_min && f.alpha >= cfg.alpha_min && f.beta >= cfg.beta_min)
        .collect();
    // Stable sort keeps input order among equal responses.
    kept.sort_by(|a, b| b.dog_value.abs().total_cmp(&a.dog_value.abs()));
    let mut out: Vec<AffineFeature> = Vec::with_capacity(kept.len());
    for f in kept {
        if !out.iter().any(|g| is_duplicate(g, &f, cfg)) {
            out.push(f);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn h_examples() {
        assert_eq!(solve_h(1.0).unwrap(), 1.0);
        assert_relative_eq!(solve_h(3.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(solve_h(2.0).unwrap(), 7.0 / 12.0, epsilon = 1e-15);
        assert_eq!(solve_h(0.9), Err(ShapeError::RatioBelowOne(0.9)));
        assert!(solve_h(f64::NAN).is_err());
    }

    #[test]
    fn k_examples() {
        assert_eq!(solve_k(1.0, 1.0), 1.0);
        assert_relative_eq!(solve_k(3.0, 0.5), 7.0, epsilon = 1e-14);
        for r in [1.5, 2.0, 3.0, 7.0, 40.0] {
            let h = solve_h(r).unwrap();
            let k = solve_k(r, h);
            let quad = -4.0 - 2.0 * h - h * h
                + (-2.0 * h + 6.0 * h * h + 2.0 * h * h * h) * k
                + (-h * h + 2.0 * h * h * h) * k * k;
            assert!(quad.abs() < 1e-9, "r={r} residual={quad}");
        }
    }

    #[test]
    fn radii_examples() {
        assert_eq!(radii(8.0, 1.0, 1.0), (8.0, 8.0));
        let (a, b) = radii(8.0, 0.5, 7.0);
        assert_relative_eq!(a, 5.656854, epsilon = 1e-6);
        assert_relative_eq!(b, 14.966630, epsilon = 1e-6);
        assert_relative_eq!(b / a, 7f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn contrast_examples() {
        assert_relative_eq!(contrast_from_response(-100.0, 1.0, 1.0), 200.0, epsilon = 1e-12);
        assert_relative_eq!(contrast_from_response(100.0, 1.0, 1.0), -200.0, epsilon = 1e-12);
        assert_relative_eq!(normalized_log_response(1.0, 1.0, 1.0), -0.5, epsilon = 1e-15);
    }

    #[test]
    fn baseline_examples() {
        assert_relative_eq!(baseline_from_scalespace(130.0, 200.0, 1.0, 1.0), 30.0, epsilon = 1e-12);
        assert_eq!(baseline_from_scalespace(77.0, 0.0, 0.6, 3.0), 77.0);
    }

    #[test]
    fn shape_matrix_examples() {
        let m = to_shape_matrix(2.0, 5.0, 0.0);
        assert_eq!((m.x, m.y, m.z), (5.0, 0.0, 2.0));
        for theta in [FRAC_PI_2, -FRAC_PI_2] {
            let m = to_shape_matrix(2.0, 5.0, theta);
            assert_relative_eq!(m.x, 2.0, epsilon = 1e-14);
            assert!(m.y.abs() < 1e-14);
            assert_relative_eq!(m.z, 5.0, epsilon = 1e-14);
        }
        for theta in [-1.2, -0.3, 0.4, 1.0, 1.5] {
            let m = to_shape_matrix(3.0, 3.0, theta);
            assert_relative_eq!(m.x, 3.0, epsilon = 1e-14);
            assert!(m.y.abs() < 1e-14);
            assert_relative_eq!(m.z, 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn shape_matrix_long_axis_direction() {
        // Long eigenvector of the matrix is (cos θ, −sin θ) in pixel coordinates.
        let (alpha, beta, theta) = (1.0, 4.0, 0.5f64);
        let m = to_shape_matrix(alpha, beta, theta);
        let (vx, vy) = (theta.cos(), -theta.sin());
        let (mx, my) = (m.x * vx + m.y * vy, m.y * vx + m.z * vy);
        assert_relative_eq!(mx, beta * vx, epsilon = 1e-12);
        assert_relative_eq!(my, beta * vy, epsilon = 1e-12);
    }

    #[test]
    fn k_r_examples() {
        assert_eq!(k_from_r(1.0), 1.0);
        assert_relative_eq!(k_from_r(3.0), 7f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(k_from_r(535.0), 40.06226, epsilon = 1e-5);
        let r40 = r_from_k(40.0);
        assert!((533.0..534.0).contains(&r40), "{r40}");
        assert_relative_eq!(k_from_r(r40), 40.0, epsilon = 1e-9);
    }

    #[test]
    fn k_roots_branch_switches_at_h_min() {
        for r in [1.2, 2.0, 2.5, 4.0, 6.0, 6.4, 6.5, 10.0, 100.0, 900.0] {
            let h = solve_h(r).unwrap();
            let k = solve_k(r, h);
            let (k1, k2) = k_roots(h).unwrap();
            let expected = if r <= R_AT_H_MIN { k2 } else { k1 };
            assert_relative_eq!(k, expected, max_relative = 1e-9);
        }
        assert!(k_roots(0.5).is_none());
        assert!(k_roots(0.4).is_none());
        assert_relative_eq!(solve_h(R_AT_H_MIN).unwrap(), H_MIN, epsilon = 1e-15);
        assert_relative_eq!(H_MIN, 2.0 * 3f64.sqrt() - 3.0, epsilon = 1e-15);
        assert_relative_eq!(R_AT_H_MIN, 3.0 + 2.0 * 3f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn angle_normalization() {
        assert_relative_eq!(normalize_half_turn(PI), 0.0, epsilon = 1e-15);
        assert_relative_eq!(normalize_half_turn(-FRAC_PI_2), FRAC_PI_2, epsilon = 1e-15);
        assert_relative_eq!(normalize_half_turn(2.0), 2.0 - PI, epsilon = 1e-15);
        assert_relative_eq!(axis_angle_diff(0.1, 0.1 + PI), 0.0, epsilon = 1e-12);
        assert_relative_eq!(axis_angle_diff(1.5, -1.5), PI - 3.0, epsilon = 1e-12);
    }

    fn feature(x: f64, alpha: f64, beta: f64, theta: f64, c: f64, dog: f64) -> AffineFeature {
        AffineFeature {
            x,
            y: 50.0,
            sigma: alpha,
            r: 1.0,
            h_sq: 1.0,
            k_sq: (beta / alpha).powi(2),
            alpha,
            beta,
            theta,
            c,
            d: 0.0,
            dog_value: dog,
            ss_value: 0.0,
        }
    }

    #[test]
    fn filter_drops_small_and_weak() {
        let cfg = FilterConfig { alpha_min: 1.5, ..Default::default() };
        let out = filter_false_features(
            vec![
                feature(10.0, 0.8, 3.0, 0.0, 100.0, -40.0),
                feature(30.0, 4.0, 4.0, 0.0, 3.0, -1.0),
                feature(60.0, 4.0, 6.0, 0.0, 100.0, -40.0),
            ],
            &cfg,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].x, 60.0);
    }

    #[test]
    fn filter_merges_duplicates_keeping_strongest() {
        let cfg = FilterConfig::default();
        let out = filter_false_features(
            vec![feature(20.0, 4.0, 8.0, 0.3, 90.0, -30.0), feature(20.1, 4.0, 8.0, 0.3, 90.0, -35.0)],
            &cfg,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].dog_value, -35.0);
        // Different orientation: both survive.
        let out = filter_false_features(
            vec![feature(20.0, 4.0, 8.0, 0.3, 90.0, -30.0), feature(20.1, 4.0, 8.0, 1.2, 90.0, -35.0)],
            &cfg,
        );
        assert_eq!(out.len(), 2);
    }

    proptest! {
        #[test]
        fn h_stays_in_range(r in 1.0f64..1e6) {
            let h = solve_h(r).unwrap();
            prop_assert!((H_MIN - 1e-12..=1.0 + 1e-15).contains(&h));
        }

        #[test]
        fn eigen_ratio_round_trip(r in 1.0f64..5000.0) {
            // (H, K) on the stationary curve map forward to the same ratio and back.
            let h = solve_h(r).unwrap();
            let k = solve_k(r, h);
            let r_fwd = (1.0 + h * k) / (1.0 + h);
            prop_assert!((r_fwd - r).abs() <= 1e-12 * r);
            let h_back = solve_h(r_fwd).unwrap();
            prop_assert!((h_back - h).abs() <= 1e-9 * h);
            prop_assert!((solve_k(r_fwd, h_back) - k).abs() <= 1e-9 * k);
        }

        #[test]
        fn contrast_round_trip(c in -255.0f64..255.0, r in 1.0f64..1000.0) {
            let h = solve_h(r).unwrap();
            let k = solve_k(r, h);
            let resp = normalized_log_response(c, h, k);
            let back = contrast_from_response(resp, h, k);
            prop_assert!((back - c).abs() <= 1e-12 * c.abs());
        }

        #[test]
        fn shape_matrix_identities(alpha in 0.1f64..50.0, extra in 0.0f64..200.0, theta in -4.0f64..4.0) {
            let beta = alpha + extra;
            let m = to_shape_matrix(alpha, beta, theta);
            prop_assert!(((m.trace() - (alpha + beta)) / (alpha + beta)).abs() <= 1e-12);
            prop_assert!(((m.det() - alpha * beta) / (alpha * beta)).abs() <= 1e-12);
            prop_assert!(m.is_positive_definite());
        }

        #[test]
        fn k_from_r_is_monotone(r in 1.0f64..1e5, dr in 1e-3f64..10.0) {
            prop_assert!(k_from_r(r + dr) > k_from_r(r));
            let k = k_from_r(r);
            prop_assert!((r_from_k(k) - r).abs() <= 1e-9 * r);
        }
    }
}
