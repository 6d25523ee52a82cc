//! Scale-space extrema of the normalized DoG stack and the local Hessian analysis
//! that feeds the shape solver.

use rayon::prelude::*;

use crate::imgio::GrayImage;
use crate::scalespace::ScaleSpacePyramid;

/// A raw `(x, y, scale)` extremum of the normalized DoG.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremumCandidate {
    pub octave: usize,
    /// DoG level index of the (possibly re-centered) sample.
    pub level: usize,
    /// Sub-level offset from refinement, in `[−0.5, 0.5]`.
    pub level_offset: f64,
    /// Position in octave pixels.
    pub x: f64,
    pub y: f64,
    /// Position in input-image pixels.
    pub x_img: f64,
    pub y_img: f64,
    /// Detection scale in input-image pixels.
    pub sigma: f64,
    /// Normalized-Laplacian response at the extremum (negative for bright blobs).
    pub dog_value: f64,
    pub refined: bool,
}

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }
}

/// Eigen-decomposition ordered by magnitude: `|e1| ≥ |e2|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianEigen {
    pub e1: f64,
    pub e2: f64,
    /// `e1 / e2`; meaningful only when `!saddle`.
    pub r: f64,
    /// Direction of the `e2` eigenvector in `(−π/2, π/2]`.
    pub angle_e2: f64,
    /// Eigenvalues of opposite sign (or a zero eigenvalue).
    pub saddle: bool,
}

/// Value and spatial Hessian of the Gaussian scale space at a candidate's exact scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleSpaceProbe {
    /// Hessian in a y-up frame (row axis flipped), so eigenvector angles read counterclockwise.
    pub hessian: Sym2,
    /// `G*I` at the candidate position.
    pub value: f64,
}

#[inline]
fn dog_at(dogs: &[GrayImage], l: usize, x: usize, y: usize) -> f64 {
    dogs[l].get(x, y)
}

fn is_extremum(dogs: &[GrayImage], l: usize, x: usize, y: usize) -> bool {
    let v = dog_at(dogs, l, x, y);
    let mut is_max = true;
    let mut is_min = true;
    for dl in [l - 1, l, l + 1] {
        let img = &dogs[dl];
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                if dl == l && xx == x && yy == y {
                    continue;
                }
                let n = img.get(xx, yy);
                is_max &= v > n;
                is_min &= v < n;
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    is_max || is_min
}

/// Scans interior DoG levels for strict 26-neighbor extrema with `|D| ≥ min_abs_response`.
///
/// Output is ordered by `(octave, level, y, x)`.
pub fn find_extrema(pyr: &ScaleSpacePyramid, min_abs_response: f64) -> Vec<ExtremumCandidate> {
    let jobs: Vec<(usize, usize)> = pyr
        .octaves
        .iter()
        .enumerate()
        .flat_map(|(o, oct)| (1..oct.dogs.len().saturating_sub(1)).map(move |l| (o, l)))
        .collect();
    jobs.par_iter()
        .map(|&(o, l)| {
            let oct = &pyr.octaves[o];
            let (w, h) = (oct.width(), oct.height());
            let mut found = Vec::new();
            if w < 3 || h < 3 {
                return found;
            }
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let v = dog_at(&oct.dogs, l, x, y);
                    if v.abs() < min_abs_response || !is_extremum(&oct.dogs, l, x, y) {
                        continue;
                    }
                    found.push(ExtremumCandidate {
                        octave: o,
                        level: l,
                        level_offset: 0.0,
                        x: x as f64,
                        y: y as f64,
                        x_img: x as f64 * oct.scale,
                        y_img: y as f64 * oct.scale,
                        sigma: oct.dog_sigma(pyr.k, l as f64) * oct.scale,
                        dog_value: v,
                        refined: false,
                    });
                }
            }
            found
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || det.abs() <= 1e-12 * scale.powi(3) {
        return None;
    }
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][i] = b[r];
        }
        let di = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        *o = di / det;
    }
    Some(out)
}

/// Gradient and Hessian of the DoG stack at an integer sample, in `(x, y, level)` order.
fn dog_derivatives(dogs: &[GrayImage], l: usize, x: usize, y: usize) -> ([f64; 3], [[f64; 3]; 3]) {
    let d = |dl: isize, dx: isize, dy: isize| {
        dogs[(l as isize + dl) as usize].get((x as isize + dx) as usize, (y as isize + dy) as usize)
    };
    let c = d(0, 0, 0);
    let g = [(d(0, 1, 0) - d(0, -1, 0)) * 0.5, (d(0, 0, 1) - d(0, 0, -1)) * 0.5, (d(1, 0, 0) - d(-1, 0, 0)) * 0.5];
    let dxx = d(0, 1, 0) + d(0, -1, 0) - 2.0 * c;
    let dyy = d(0, 0, 1) + d(0, 0, -1) - 2.0 * c;
    let dss = d(1, 0, 0) + d(-1, 0, 0) - 2.0 * c;
    let dxy = (d(0, 1, 1) - d(0, 1, -1) - d(0, -1, 1) + d(0, -1, -1)) * 0.25;
    let dxs = (d(1, 1, 0) - d(1, -1, 0) - d(-1, 1, 0) + d(-1, -1, 0)) * 0.25;
    let dys = (d(1, 0, 1) - d(1, 0, -1) - d(-1, 0, 1) + d(-1, 0, -1)) * 0.25;
    (g, [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
}

const MAX_RECENTER_STEPS: usize = 2;

/// Sub-pixel, sub-level refinement by a quadratic fit to the 3×3×3 DoG neighborhood.
///
/// Offsets larger than half a sample move the fit center, at most twice. If the
/// fit never settles, leaves the sample grid, or is singular, the candidate is
/// returned unchanged with `refined = false`.
pub fn refine_extremum(pyr: &ScaleSpacePyramid, cand: &ExtremumCandidate) -> ExtremumCandidate {
    let oct = &pyr.octaves[cand.octave];
    let (w, h) = (oct.width() as isize, oct.height() as isize);
    let n_levels = oct.dogs.len() as isize;
    let (mut x, mut y, mut l) = (cand.x.round() as isize, cand.y.round() as isize, cand.level as isize);
    let unrefined = || ExtremumCandidate { refined: false, ..cand.clone() };

    for step in 0..=MAX_RECENTER_STEPS {
        let (g, hm) = dog_derivatives(&oct.dogs, l as usize, x as usize, y as usize);
        let Some(off) = solve3(hm, [-g[0], -g[1], -g[2]]) else {
            return unrefined();
        };
        if off.iter().all(|o| o.abs() <= 0.5) {
            let value = dog_at(&oct.dogs, l as usize, x as usize, y as usize)
                + 0.5 * (g[0] * off[0] + g[1] * off[1] + g[2] * off[2]);
            let xs = x as f64 + off[0];
            let ys = y as f64 + off[1];
            let ls = l as f64 + off[2];
            return ExtremumCandidate {
                octave: cand.octave,
                level: l as usize,
                level_offset: off[2],
                x: xs,
                y: ys,
                x_img: xs * oct.scale,
                y_img: ys * oct.scale,
                sigma: oct.dog_sigma(pyr.k, ls) * oct.scale,
                dog_value: value,
                refined: true,
            };
        }
        if step == MAX_RECENTER_STEPS {
            break;
        }
        x += off[0].round() as isize;
        y += off[1].round() as isize;
        l += off[2].round() as isize;
        if x < 1 || y < 1 || x > w - 2 || y > h - 2 || l < 1 || l > n_levels - 2 {
            break;
        }
    }
    unrefined()
}

/// Minimum extra blur (octave pixels) applied on top of the source level when probing.
const MIN_PROBE_BLUR: f64 = 1.0;

/// Sampled Gaussian and its first two derivatives at offsets `t − i` for `i ∈ [lo, hi]`.
fn derivative_taps(t: f64, lo: isize, hi: isize, sigma: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let var = sigma * sigma;
    let mut g = Vec::with_capacity((hi - lo + 1) as usize);
    let mut dg = Vec::with_capacity(g.capacity());
    let mut ddg = Vec::with_capacity(g.capacity());
    for i in lo..=hi {
        let u = t - i as f64;
        let w = (-0.5 * u * u / var).exp();
        g.push(w);
        dg.push(-u / var * w);
        ddg.push((u * u / var - 1.0) / var * w);
    }
    let norm: f64 = g.iter().sum();
    for v in g.iter_mut().chain(dg.iter_mut()).chain(ddg.iter_mut()) {
        *v /= norm;
    }
    (g, dg, ddg)
}

/// Value and Hessian of the Gaussian scale space at the candidate's exact
/// position and detection scale.
///
/// The lowest Gaussian level of the octave that is at least [`MIN_PROBE_BLUR`]
/// below the target scale is convolved with sampled Gaussian-derivative
/// kernels of the remaining blur, evaluated directly at the sub-pixel
/// position. Borders replicate edge pixels, like the pyramid blur.
pub fn probe_scale_space(pyr: &ScaleSpacePyramid, cand: &ExtremumCandidate) -> ScaleSpaceProbe {
    let oct = &pyr.octaves[cand.octave];
    let target = oct.dog_sigma(pyr.k, cand.level as f64 + cand.level_offset);
    let src_level = (0..oct.gaussians.len())
        .rev()
        .find(|&i| target * target - oct.sigmas[i] * oct.sigmas[i] >= MIN_PROBE_BLUR * MIN_PROBE_BLUR)
        .unwrap_or(0);
    let src = &oct.gaussians[src_level];
    let extra = (target * target - oct.sigmas[src_level].powi(2)).max(0.25).sqrt();

    let radius = (pyr.config.kernel_truncation * extra).ceil() as isize + 1;
    let (x0, y0) = (cand.x.floor() as isize, cand.y.floor() as isize);
    let (xlo, xhi) = (x0 - radius, x0 + 1 + radius);
    let (ylo, yhi) = (y0 - radius, y0 + 1 + radius);
    let (gx, dgx, ddgx) = derivative_taps(cand.x, xlo, xhi, extra);
    let (gy, dgy, ddgy) = derivative_taps(cand.y, ylo, yhi, extra);

    let (mut value, mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0, 0.0);
    for (j, py) in (ylo..=yhi).enumerate() {
        // Row sums against the three x filters.
        let (mut r0, mut r1, mut r2) = (0.0, 0.0, 0.0);
        for (i, px) in (xlo..=xhi).enumerate() {
            let v = src.get_clamped(px, py);
            r0 += v * gx[i];
            r1 += v * dgx[i];
            r2 += v * ddgx[i];
        }
        value += r0 * gy[j];
        xx += r2 * gy[j];
        xy += r1 * dgy[j];
        yy += r0 * ddgy[j];
    }
    // The row axis points down; flipping it negates the mixed derivative.
    ScaleSpaceProbe { hessian: Sym2 { xx, xy: -xy, yy }, value }
}

/// Spatial Hessian of `G*I` at the candidate, y-up frame.
pub fn hessian_at(pyr: &ScaleSpacePyramid, cand: &ExtremumCandidate) -> Sym2 {
    probe_scale_space(pyr, cand).hessian
}

/// Closed-form eigen-decomposition of a symmetric 2×2 matrix.
pub fn eigen_sym2(m: &Sym2) -> HessianEigen {
    let half_tr = 0.5 * m.trace();
    let half_diff = 0.5 * (m.xx - m.yy);
    let rad = half_diff.hypot(m.xy);
    let (lam_hi, lam_lo) = (half_tr + rad, half_tr - rad);
    // Direction of the eigenvector belonging to the algebraically larger eigenvalue.
    let phi = 0.5 * (2.0 * m.xy).atan2(m.xx - m.yy);
    let (e1, e2, angle_e2) =
        if half_tr < 0.0 { (lam_lo, lam_hi, phi) } else { (lam_hi, lam_lo, phi + std::f64::consts::FRAC_PI_2) };
    let saddle = e1 * e2 <= 0.0;
    let r = if saddle { f64::NAN } else { e1 / e2 };
    HessianEigen { e1, e2, r, angle_e2: crate::affineshape::normalize_half_turn(angle_e2), saddle }
}

/// `(r + 1)² / r`, the trace²/determinant statistic for eigen ratio `r`.
pub fn edge_statistic(r: f64) -> f64 {
    (r + 1.0) * (r + 1.0) / r
}

/// Accepts non-saddle points whose `tr²/det` does not exceed that of `r_max`.
pub fn edge_ratio_filter(eig: &HessianEigen, r_max: f64) -> bool {
    if eig.saddle {
        return false;
    }
    let m = Sym2 { xx: eig.e1, xy: 0.0, yy: eig.e2 };
    m.trace() * m.trace() / m.det() <= edge_statistic(r_max)
}
