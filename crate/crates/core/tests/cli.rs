use std::path::{Path, PathBuf};
use std::process::Command;

use gaffine::affineshape::AffineFeature;
use gaffine::cli::*;
use gaffine::eval::{trial_seed, MatchErrors};
use gaffine::featio::{read_features, write_features};
use gaffine::imgio::{save_pgm, GrayImage};
use gaffine::synth::{random_spec, write_truth_csv, GaussianSignalSpec, SpecRanges};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gaffine"))
}

// θ = 0.5236 is the literal of the pinned reference render, not π/6.
#[allow(clippy::approx_constant)]
fn synth_args(dir: &Path, name: &str) -> SynthArgs {
    SynthArgs {
        output: dir.join(name),
        truth: None,
        spec: None,
        cx: Some(128.0),
        cy: Some(128.0),
        alpha: Some(8.0),
        beta: Some(16.0),
        nominal: 8.0,
        aspect: 1.0,
        theta: 0.5236,
        contrast: 200.0,
        baseline: 30.0,
        noise: 0.0,
        seed: 0,
        width: 256,
        height: 256,
    }
}

fn detect_args(image: PathBuf, output: PathBuf) -> DetectArgs {
    DetectArgs { image, output, config: ConfigArgs::default() }
}

fn sweep_args(trials: usize, seed: u64, output: Option<PathBuf>) -> SweepArgs {
    SweepArgs {
        trials,
        seed,
        noise: vec![0.0],
        nominal_min: 5.0,
        nominal_max: 40.0,
        aspect_min: 1.0,
        aspect_max: 10.0,
        c_floor: 16.0,
        width: 256,
        height: 256,
        max_dist: 8.0,
        output,
        config: ConfigArgs::default(),
    }
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
}

fn feature_from_truth(s: &GaussianSignalSpec) -> AffineFeature {
    AffineFeature {
        x: s.cx,
        y: s.cy,
        sigma: s.alpha,
        r: 1.0,
        h_sq: 1.0,
        k_sq: (s.beta / s.alpha).powi(2),
        alpha: s.alpha,
        beta: s.beta,
        theta: s.theta,
        c: s.c,
        d: s.d,
        dog_value: -s.c / 2.0,
        ss_value: s.d + s.c / 2.0,
    }
}

#[test]
fn synth_then_detect_gives_one_feature_line() {
    let dir = TempDir::new().unwrap();
    let out = cmd_synth(&synth_args(dir.path(), "blob.pgm")).unwrap();
    assert!(out.warnings.is_empty());
    assert_eq!(out.truth, dir.path().join("blob.csv"));
    let feats = dir.path().join("blob.feat");
    assert_eq!(cmd_detect(&detect_args(out.image, feats.clone())).unwrap(), 1);
    let text = std::fs::read_to_string(&feats).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("1.0\n1\n"));
}

#[test]
fn synth_image_is_pinned() {
    let dir = TempDir::new().unwrap();
    let out = cmd_synth(&synth_args(dir.path(), "blob.pgm")).unwrap();
    let bytes = std::fs::read(out.image).unwrap();
    assert_eq!(bytes.len(), 15 + 256 * 256);
    assert_eq!(fnv1a(&bytes), 0x45db_5e87_287b_1890, "rendered image changed: {:#x}", fnv1a(&bytes));
}

#[test]
fn noisy_synth_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let args = SynthArgs { noise: 10.0, seed: 7, ..synth_args(dir.path(), name) };
        std::fs::read(cmd_synth(&args).unwrap().image).unwrap()
    };
    let (a, b) = (run("a.pgm"), run("b.pgm"));
    assert_eq!(a, b);
    let clean = std::fs::read(cmd_synth(&synth_args(dir.path(), "c.pgm")).unwrap().image).unwrap();
    assert_ne!(a, clean);
}

#[test]
fn oversized_spec_warns_and_recenters() {
    let dir = TempDir::new().unwrap();
    let out = bin()
        .args(["synth", "--aspect", "30", "--nominal", "40", "--cx", "20", "--cy", "30", "-o"])
        .arg(dir.path().join("big.pgm"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("warning") && stderr.contains("recentered"), "{stderr}");
    let truth = std::fs::read_to_string(dir.path().join("big.csv")).unwrap();
    assert!(truth.lines().nth(1).unwrap().starts_with("128.0,128.0,"), "{truth}");
}

#[test]
fn constant_image_gives_empty_feature_file() {
    let dir = TempDir::new().unwrap();
    let img = dir.path().join("flat.pgm");
    save_pgm(&GrayImage::filled(64, 64, 100.0), &img).unwrap();
    let feats = dir.path().join("flat.feat");
    assert_eq!(cmd_detect(&detect_args(img, feats.clone())).unwrap(), 0);
    assert_eq!(std::fs::read_to_string(feats).unwrap(), "1.0\n0\n");
}

#[test]
fn missing_input_fails_without_output() {
    let dir = TempDir::new().unwrap();
    let feats = dir.path().join("never.feat");
    let status = bin().arg("detect").arg(dir.path().join("missing.pgm")).arg("-o").arg(&feats).output().unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("missing.pgm"));
    assert!(!feats.exists());
}

#[test]
fn malformed_config_is_reported() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "r_max = 10\nwhat is this\n").unwrap();
    let args = ConfigArgs { config: Some(cfg), overrides: vec![] };
    let err = args.resolve().unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("a.cfg");
    std::fs::write(&cfg, "r_max = 10\nc_min = 3\n").unwrap();
    let args = ConfigArgs { config: Some(cfg), overrides: vec!["r_max=99".into()] };
    let resolved = args.resolve().unwrap();
    assert_eq!(resolved.r_max, 99.0);
    assert_eq!(resolved.filter.c_min, 3.0);
    let bad = ConfigArgs { config: None, overrides: vec!["r_max".into()] };
    assert!(bad.resolve().is_err());
}

#[test]
fn eval_of_truth_against_itself_is_exact() {
    let dir = TempDir::new().unwrap();
    let truth = vec![
        GaussianSignalSpec { cx: 60.0, cy: 70.0, alpha: 4.0, beta: 9.0, theta: 0.7, c: 120.0, d: 40.0 },
        GaussianSignalSpec { cx: 180.0, cy: 150.0, alpha: 6.0, beta: 6.0, theta: 0.0, c: -90.0, d: 200.0 },
    ];
    let truth_path = dir.path().join("t.csv");
    write_truth_csv(&truth_path, &truth).unwrap();
    let feats_path = dir.path().join("t.feat");
    write_features(&feats_path, &truth.iter().map(feature_from_truth).collect::<Vec<_>>()).unwrap();
    let report_path = dir.path().join("report.csv");
    let report = cmd_eval(&EvalArgs {
        features: feats_path,
        truth: truth_path,
        output: Some(report_path.clone()),
        max_dist: 8.0,
    })
    .unwrap();
    assert_eq!(report.n_matched, 2);
    let columns: [fn(&MatchErrors) -> f64; 6] = [
        |m| m.position_err,
        |m| m.aspect_ratio_rel_err,
        |m| m.short_radius_rel_err,
        |m| m.orientation_err,
        |m| m.contrast_rel_err,
        |m| m.baseline_rel_err,
    ];
    for f in columns {
        assert!(report.mean_of(f) < 1e-8);
    }
    assert_eq!(std::fs::read_to_string(report_path).unwrap().lines().count(), 3);
}

#[test]
fn eval_of_empty_feature_file() {
    let dir = TempDir::new().unwrap();
    let truth_path = dir.path().join("t.csv");
    write_truth_csv(&truth_path, &[GaussianSignalSpec::isotropic(128.0, 128.0, 8.0, 200.0, 30.0)]).unwrap();
    let feats_path = dir.path().join("empty.feat");
    std::fs::write(&feats_path, "1.0\n0\n").unwrap();
    let report_path = dir.path().join("r.csv");
    let report = cmd_eval(&EvalArgs {
        features: feats_path,
        truth: truth_path,
        output: Some(report_path.clone()),
        max_dist: 8.0,
    })
    .unwrap();
    assert_eq!((report.n_truth, report.n_matched), (1, 0));
    assert!(report_path.exists());
}

#[test]
fn eval_reports_feature_file_line() {
    let dir = TempDir::new().unwrap();
    let truth_path = dir.path().join("t.csv");
    write_truth_csv(&truth_path, &[]).unwrap();
    let feats_path = dir.path().join("bad.feat");
    std::fs::write(&feats_path, "1.0\n1\n1 2 3\n").unwrap();
    let out = bin().arg("eval").arg(&feats_path).arg(&truth_path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn sweep_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    cmd_sweep(&sweep_args(6, 11, Some(a.clone()))).unwrap();
    cmd_sweep(&sweep_args(6, 11, Some(b.clone()))).unwrap();
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("noise,trials,detected,detection_rate,"));
    assert!(matches!(cmd_sweep(&sweep_args(0, 1, None)), Err(CliError::Usage(_))));
}

#[test]
fn single_trial_sweep_matches_composed_commands() {
    let dir = TempDir::new().unwrap();
    let seed = 5;
    let rows = cmd_sweep(&sweep_args(1, seed, Some(dir.path().join("s.csv")))).unwrap();

    let ranges = SpecRanges { aspect: (1.0, 10.0), ..SpecRanges::default() };
    let spec = random_spec(&ranges, &mut ChaCha8Rng::seed_from_u64(trial_seed(seed, 0)));
    let truth = dir.path().join("one.csv");
    write_truth_csv(&truth, &[spec]).unwrap();
    let synth = SynthArgs {
        spec: Some(truth.clone()),
        cx: None,
        cy: None,
        alpha: None,
        beta: None,
        ..synth_args(dir.path(), "one.pgm")
    };
    cmd_synth(&synth).unwrap();
    let feats = dir.path().join("one.feat");
    cmd_detect(&detect_args(dir.path().join("one.pgm"), feats.clone())).unwrap();
    let report = cmd_eval(&EvalArgs { features: feats.clone(), truth, output: None, max_dist: 8.0 }).unwrap();

    let row = &rows[0];
    assert_eq!(row.detected, report.n_matched);
    assert!((row.mean_position_err - report.mean_position_err()).abs() < 1e-6);
    assert!(
        (row.median_aspect_ratio_rel_err - report.mean_of(|m| m.aspect_ratio_rel_err)).abs() < 1e-6,
        "{} vs {}",
        row.median_aspect_ratio_rel_err,
        report.mean_of(|m| m.aspect_ratio_rel_err)
    );
    assert_eq!(read_features(feats).unwrap().len(), report.n_detected);
}

#[test]
fn curves_command() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("h.csv");
    let args = CurvesArgs {
        which: "H_vs_r".parse().unwrap(),
        min: 1.0,
        max: 3.0,
        steps: 3,
        k_min: 1.0,
        k_max: 10.0,
        k_steps: 10,
        output: Some(out.clone()),
    };
    assert_eq!(cmd_curves(&args).unwrap(), 3);
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().next(), Some("r,H"));
    assert!(text.lines().nth(3).unwrap().starts_with("3,0.5"));

    let bad = bin().args(["curves", "nonsense"]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown curve"));
}
