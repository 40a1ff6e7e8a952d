//! Dataset-level orchestration: calibration on authentic samples, per-sample
//! scoring, evaluation against ground truth and the alpha sweep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{confusion, detection_auc, detection_counts, metrics, ConfusionCounts, Metrics};
use crate::features::{fetch_features, FeatureBundle, ProviderMode, ToyConfig};
use crate::fusion::{sweep_alpha, FusionConfig, FusionMode, ScoreRecord, SweepRow, SweepSample};
use crate::fx::{
    aggregate_attention, calibrate, score_global, summarise, AttentionMap, AttentionSummary,
    FxStatistic, GlobalScore, ReferenceStats,
};
use crate::grid::Grid;
use crate::image::load_mask;
use crate::manifest::{DatasetManifest, Label, SampleEntry};
use crate::px::{local_score, resize_mask_nn, EmbeddingGrid, LocalResult, PatchGridConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FxConfig {
    /// Number of final attention layers averaged.
    pub last_k: usize,
    pub statistic: FxStatistic,
}

impl Default for FxConfig {
    fn default() -> Self {
        Self {
            last_k: 4,
            statistic: FxStatistic::Spread,
        }
    }
}

/// Every knob of a scoring run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub mode: ProviderMode,
    pub toy: ToyConfig,
    pub fx: FxConfig,
    pub px: PatchGridConfig,
    pub fusion: FusionConfig,
    /// Sample-level decision threshold on the hybrid score.
    pub threshold: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            mode: ProviderMode::Toy,
            toy: ToyConfig::default(),
            fx: FxConfig::default(),
            px: PatchGridConfig::default(),
            fusion: FusionConfig::default(),
            threshold: 0.5,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.toy.validate()?;
        self.px.validate()?;
        self.fusion.validate()?;
        if self.fx.last_k == 0 {
            return Err(Error::Config("last_k must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "decision threshold must be in [0, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    fn check_manifest(&self, manifest: &DatasetManifest) -> Result<()> {
        if self.px.patch_size != manifest.meta.patch_size {
            return Err(Error::Config(format!(
                "patch size {} disagrees with manifest patch size {}",
                self.px.patch_size, manifest.meta.patch_size
            )));
        }
        Ok(())
    }
}

/// Everything computed for one sample.
#[derive(Debug, Clone)]
pub struct SampleAnalysis {
    pub id: String,
    pub label: Label,
    pub attention: AttentionMap<f64>,
    pub summary: AttentionSummary<f64>,
    pub global: GlobalScore<f64>,
    pub local: LocalResult<f64>,
    pub s_h: f64,
}

impl SampleAnalysis {
    /// Per-pixel hybrid field: the global score fused with the local map at
    /// every pixel.
    pub fn hybrid_field(&self, fusion: &FusionConfig) -> Grid<f64> {
        self.local
            .map_fullres
            .map(|p| fusion.fuse(self.global.normalised, p))
    }

    pub fn record(&self, fusion: &FusionConfig) -> ScoreRecord {
        ScoreRecord {
            sample_id: self.id.clone(),
            label: self.label,
            s_f_raw: self.global.raw,
            s_f: self.global.normalised,
            s_p: self.local.s_p,
            s_h: self.s_h,
            config: *fusion,
        }
    }
}

fn attention_summary(bundle: &FeatureBundle, cfg: &EngineConfig) -> Result<(AttentionMap<f64>, AttentionSummary<f64>)> {
    let map = aggregate_attention::<f64>(bundle, cfg.fx.last_k)?;
    let summary = summarise(&map)?;
    Ok((map, summary))
}

/// Fits reference statistics on the manifest's authentic samples, in manifest
/// order.
pub fn calibrate_dataset(manifest: &DatasetManifest, cfg: &EngineConfig) -> Result<ReferenceStats<f64>> {
    cfg.validate()?;
    cfg.check_manifest(manifest)?;
    let authentic: Vec<&SampleEntry> = manifest.authentic().collect();
    if authentic.len() < 2 {
        return Err(Error::TooFewSamples(authentic.len()));
    }
    let summaries = authentic
        .iter()
        .map(|s| {
            let bundle = fetch_features(manifest, &s.id, cfg.mode, &cfg.toy)?;
            Ok(attention_summary(&bundle, cfg)?.1)
        })
        .collect::<Result<Vec<_>>>()?;
    calibrate(&summaries, cfg.fx.statistic)
}

fn check_reference(reference: &ReferenceStats<f64>, cfg: &EngineConfig) -> Result<()> {
    reference.validate()?;
    if reference.statistic != cfg.fx.statistic {
        return Err(Error::CalibrationMismatch(format!(
            "reference was fitted on {:?}, run uses {:?}",
            reference.statistic, cfg.fx.statistic
        )));
    }
    Ok(())
}

/// Scores one bundle.
pub fn analyse_bundle(
    id: &str,
    label: Label,
    bundle: &FeatureBundle,
    reference: &ReferenceStats<f64>,
    cfg: &EngineConfig,
) -> Result<SampleAnalysis> {
    let (attention, summary) = attention_summary(bundle, cfg)?;
    let global = score_global(&summary, reference);
    let grid = EmbeddingGrid::<f64>::from_tensor(&bundle.embeddings, bundle.grid)?;
    let local = local_score(&grid, &cfg.px, bundle.image_size)?;
    let s_h = cfg.fusion.fuse(global.normalised, local.s_p);
    Ok(SampleAnalysis {
        id: id.to_string(),
        label,
        attention,
        summary,
        global,
        local,
        s_h,
    })
}

pub fn analyse_sample(
    manifest: &DatasetManifest,
    id: &str,
    reference: &ReferenceStats<f64>,
    cfg: &EngineConfig,
) -> Result<SampleAnalysis> {
    cfg.validate()?;
    cfg.check_manifest(manifest)?;
    check_reference(reference, cfg)?;
    let entry = manifest.sample(id)?;
    let bundle = fetch_features(manifest, id, cfg.mode, &cfg.toy)?;
    analyse_bundle(id, entry.label, &bundle, reference, cfg)
}

pub fn score_dataset(
    manifest: &DatasetManifest,
    reference: &ReferenceStats<f64>,
    cfg: &EngineConfig,
) -> Result<Vec<ScoreRecord>> {
    manifest
        .samples
        .iter()
        .map(|s| Ok(analyse_sample(manifest, &s.id, reference, cfg)?.record(&cfg.fusion)))
        .collect()
}

/// Ground truth at the working resolution. Authentic samples without a mask
/// are all-negative; tampered samples must carry one.
pub fn ground_truth(manifest: &DatasetManifest, entry: &SampleEntry) -> Result<Option<Grid<u8>>> {
    let (h, w) = manifest.meta.image_size;
    match (&entry.mask_path, entry.label) {
        (Some(p), _) => {
            let mask = load_mask(&manifest.resolve(p))?;
            Ok(Some(resize_mask_nn(&mask, (h, w))?))
        }
        (None, Label::Authentic) => Ok(Some(Grid::filled(h, w, 0))),
        (None, Label::Tampered) => Ok(None),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleEval {
    pub id: String,
    pub label: Label,
    pub s_f: f64,
    pub s_p: f64,
    pub s_h: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionSummary {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when the dataset holds a single class.
    pub auc: Option<f64>,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_sample: Vec<SampleEval>,
    /// Pixel-level metrics of the summed confusion counts (headline).
    pub aggregate: Metrics<f64>,
    /// Unweighted mean of per-sample pixel metrics.
    pub macro_average: Metrics<f64>,
    pub pixel_counts: ConfusionCounts,
    /// Sample-level metrics of `s_h ≥ threshold`.
    pub detection: DetectionSummary,
    pub config: EngineConfig,
}

/// Localisation of the Px mask against ground truth plus sample-level
/// detection from the hybrid score.
pub fn evaluate_dataset(
    manifest: &DatasetManifest,
    reference: &ReferenceStats<f64>,
    cfg: &EngineConfig,
) -> Result<EvalReport> {
    if manifest.samples.is_empty() {
        return Err(Error::Empty("manifest samples"));
    }
    let mut per_sample = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        let gt = ground_truth(manifest, entry)?.ok_or_else(|| Error::MissingPath {
            id: entry.id.clone(),
            what: "mask_path",
        })?;
        let a = analyse_sample(manifest, &entry.id, reference, cfg)?;
        let counts = confusion(&a.local.mask, &gt)?;
        let m: Metrics<f64> = metrics(&counts);
        per_sample.push(SampleEval {
            id: a.id,
            label: a.label,
            s_f: a.global.normalised,
            s_p: a.local.s_p,
            s_h: a.s_h,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            iou: m.iou,
            counts,
        });
    }

    let pixel_counts: ConfusionCounts = per_sample.iter().map(|s| s.counts).sum();
    let n = per_sample.len() as f64;
    let mean = |f: fn(&SampleEval) -> f64| per_sample.iter().map(f).sum::<f64>() / n;
    let macro_average = Metrics {
        precision: mean(|s| s.precision),
        recall: mean(|s| s.recall),
        f1: mean(|s| s.f1),
        iou: mean(|s| s.iou),
    };

    let scored: Vec<(f64, bool)> = per_sample
        .iter()
        .map(|s| (s.s_h, s.label.is_tampered()))
        .collect();
    let det_counts = detection_counts(&scored, cfg.threshold);
    let det: Metrics<f64> = metrics(&det_counts);
    let detection = DetectionSummary {
        threshold: cfg.threshold,
        precision: det.precision,
        recall: det.recall,
        f1: det.f1,
        auc: detection_auc(&scored).ok(),
        counts: det_counts,
    };

    Ok(EvalReport {
        aggregate: metrics(&pixel_counts),
        macro_average,
        pixel_counts,
        detection,
        per_sample,
        config: cfg.clone(),
    })
}

/// Sweeps the fusion weight over `alphas` for each mode. Localisation IoU
/// uses the hybrid field binarised at the Px threshold.
pub fn sweep_dataset(
    manifest: &DatasetManifest,
    reference: &ReferenceStats<f64>,
    cfg: &EngineConfig,
    alphas: &[f64],
    modes: &[FusionMode],
) -> Result<Vec<SweepRow>> {
    let mut analysed = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        let a = analyse_sample(manifest, &entry.id, reference, cfg)?;
        analysed.push((a, ground_truth(manifest, entry)?));
    }
    let threshold = cfg.px.binarise_threshold;
    let samples: Vec<SweepSample> = analysed
        .iter()
        .map(|(a, gt)| SweepSample {
            s_f: a.global.normalised,
            s_p: a.local.s_p,
            tampered: a.label.is_tampered(),
            localise: gt.as_ref().map(|gt| {
                Box::new(move |fusion: &FusionConfig| {
                    let mask = a.hybrid_field(fusion).map(|v| u8::from(v >= threshold));
                    confusion(&mask, gt).expect("mask and ground truth share the working size")
                }) as Box<dyn Fn(&FusionConfig) -> ConfusionCounts + '_>
            }),
        })
        .collect();
    sweep_alpha(&samples, alphas, modes, cfg.fusion.epsilon_h, cfg.threshold)
}
