//! End-to-end detection: pyramid, extrema, Hessian analysis, closed-form shape, filtering.

use rayon::prelude::*;

use crate::affineshape::{filter_false_features, recover_feature, AffineFeature};
use crate::config::DetectorConfig;
use crate::detector::{edge_ratio_filter, eigen_sym2, find_extrema, probe_scale_space, refine_extremum};
use crate::imgio::GrayImage;
use crate::scalespace::{ScaleSpaceError, ScaleSpacePyramid};

/// Features recovered from every accepted extremum, before false-feature filtering.
pub fn detect_unfiltered(img: &GrayImage, cfg: &DetectorConfig) -> Result<Vec<AffineFeature>, ScaleSpaceError> {
    let pyr = ScaleSpacePyramid::new(img, &cfg.pyramid)?;
    Ok(features_from_pyramid(&pyr, cfg))
}

pub fn features_from_pyramid(pyr: &ScaleSpacePyramid, cfg: &DetectorConfig) -> Vec<AffineFeature> {
    let candidates = find_extrema(pyr, cfg.prelim_contrast);
    candidates
        .par_iter()
        .filter_map(|cand| {
            let cand = refine_extremum(pyr, cand);
            if cand.dog_value.abs() < cfg.prelim_contrast {
                return None;
            }
            let probe = probe_scale_space(pyr, &cand);
            let eig = eigen_sym2(&probe.hessian);
            if !edge_ratio_filter(&eig, cfg.r_max) {
                return None;
            }
            // A bright blob has a negative response and negative curvatures.
            if (eig.e1 < 0.0) != (cand.dog_value < 0.0) {
                return None;
            }
            Some(recover_feature(&cand, &eig, probe.value))
        })
        .collect()
}

/// Runs the full detector on one image.
pub fn detect_features(img: &GrayImage, cfg: &DetectorConfig) -> Result<Vec<AffineFeature>, ScaleSpaceError> {
    let raw = detect_unfiltered(img, cfg)?;
    Ok(filter_false_features(raw, &cfg.filter))
}
