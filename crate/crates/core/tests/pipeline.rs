use vaas_core::eval::{metrics, ConfusionCounts, Metrics};
use vaas_core::fusion::{alpha_grid, sweep_alpha, FusionConfig, FusionMode, SweepSample};
use vaas_core::manifest::load_manifest;
use vaas_core::pipeline::{calibrate_dataset, evaluate_dataset, score_dataset, EngineConfig};
use vaas_core::rng::SplitMix64;
use vaas_core::synth::{write_dataset, SynthConfig};
use vaas_core::Error;

fn small_dataset(dir: &std::path::Path, n_authentic: usize, n_tampered: usize) -> std::path::PathBuf {
    let cfg = SynthConfig {
        n_authentic,
        n_tampered,
        ..SynthConfig::default()
    };
    write_dataset(&cfg, dir).unwrap()
}

#[test]
fn separating_global_score_gives_monotone_f1() {
    let mut rng = SplitMix64::new(17);
    let data: Vec<(f64, f64, bool)> = (0..60)
        .map(|i| {
            let tampered = i % 2 == 0;
            let s_f = if tampered {
                0.8 + 0.2 * rng.next_f64()
            } else {
                0.2 * rng.next_f64()
            };
            (s_f, rng.next_f64(), tampered)
        })
        .collect();
    let samples: Vec<SweepSample> = data
        .iter()
        .map(|&(s_f, s_p, tampered)| SweepSample {
            s_f,
            s_p,
            tampered,
            localise: None,
        })
        .collect();
    let alphas = alpha_grid(0.3, 0.8, 0.05).unwrap();
    let rows = sweep_alpha(&samples, &alphas, &[FusionMode::Weighted], 1e-9, 0.5).unwrap();
    assert_eq!(rows.len(), 11);

    let mut prev = f64::NEG_INFINITY;
    for (row, &alpha) in rows.iter().zip(&alphas) {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for &(s_f, s_p, tampered) in &data {
            let flagged = alpha * s_f + (1.0 - alpha) * s_p >= 0.5;
            match (flagged, tampered) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                _ => {}
            }
        }
        let f1 = 2.0 * tp / (2.0 * tp + fp + fn_);
        assert!((row.f1 - f1).abs() < 1e-12, "alpha {alpha}: {} vs {f1}", row.f1);
        assert!(row.f1 >= prev);
        prev = row.f1;
    }
}

#[test]
fn evaluation_aggregate_recomposes_from_counts() {
    let dir = tempfile::tempdir().unwrap();
    let m = load_manifest(&small_dataset(dir.path(), 10, 10)).unwrap();
    let cfg = EngineConfig::default();
    let reference = calibrate_dataset(&m, &cfg).unwrap();
    assert_eq!(reference.n_samples, 10);
    let report = evaluate_dataset(&m, &reference, &cfg).unwrap();
    assert_eq!(report.per_sample.len(), 20);

    let summed: ConfusionCounts = report.per_sample.iter().map(|s| s.counts).sum();
    assert_eq!(summed, report.pixel_counts);
    let (tp, fp, fn_) = (summed.tp as f64, summed.fp as f64, summed.fn_ as f64);
    let iou = tp / (tp + fp + fn_);
    let precision = tp / (tp + fp);
    let recall = tp / (tp + fn_);
    assert!((report.aggregate.iou - iou).abs() < 1e-9);
    assert!((report.aggregate.precision - precision).abs() < 1e-9);
    assert!((report.aggregate.recall - recall).abs() < 1e-9);
    let mean_iou = report.per_sample.iter().map(|s| s.iou).sum::<f64>() / 20.0;
    assert!((report.macro_average.iou - mean_iou).abs() < 1e-12);
    let exact: Metrics<f64> = metrics(&summed);
    assert_eq!(exact, report.aggregate);
}

#[test]
fn calibration_needs_two_authentic_samples() {
    let dir = tempfile::tempdir().unwrap();
    let m = load_manifest(&small_dataset(dir.path(), 1, 2)).unwrap();
    let err = calibrate_dataset(&m, &EngineConfig::default()).unwrap_err();
    assert!(matches!(err, Error::TooFewSamples(1)));
    assert!(err.to_string().contains("need ≥ 2 authentic samples"));
}

#[test]
fn scoring_follows_fusion_config() {
    let dir = tempfile::tempdir().unwrap();
    let m = load_manifest(&small_dataset(dir.path(), 3, 3)).unwrap();
    let mut cfg = EngineConfig::default();
    let reference = calibrate_dataset(&m, &cfg).unwrap();

    cfg.fusion = FusionConfig {
        mode: FusionMode::Weighted,
        alpha: 0.6,
        ..FusionConfig::default()
    };
    for r in score_dataset(&m, &reference, &cfg).unwrap() {
        assert!((r.s_h - (0.6 * r.s_f + 0.4 * r.s_p)).abs() < 1e-12);
        assert!(r.s_f_raw >= 0.0 && (0.0..=1.0).contains(&r.s_f));
    }

    cfg.fusion.mode = FusionMode::Harmonic;
    let a = score_dataset(&m, &reference, &cfg).unwrap();
    cfg.fusion.alpha = 0.1;
    let b = score_dataset(&m, &reference, &cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.s_h, y.s_h);
    }
}

#[test]
fn reference_statistic_must_match_config() {
    let dir = tempfile::tempdir().unwrap();
    let m = load_manifest(&small_dataset(dir.path(), 3, 1)).unwrap();
    let mut cfg = EngineConfig::default();
    let reference = calibrate_dataset(&m, &cfg).unwrap();
    cfg.fx.statistic = vaas_core::fx::FxStatistic::Mean;
    assert!(matches!(
        score_dataset(&m, &reference, &cfg),
        Err(Error::CalibrationMismatch(_))
    ));
}
