//! Hybrid scoring: fusion of the global and local anomaly scores, and the
//! weight sweep used to study the global/local trade-off.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{detection_counts, metrics, ConfusionCounts, Metrics};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    #[default]
    Weighted,
    Harmonic,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Weighted => "weighted",
            FusionMode::Harmonic => "harmonic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub mode: FusionMode,
    /// Weight of the global score in weighted mode.
    pub alpha: f64,
    /// Inputs summing below this fuse to 0 in harmonic mode.
    pub epsilon_h: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            mode: FusionMode::Weighted,
            alpha: 0.6,
            epsilon_h: 1e-9,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.epsilon_h > 0.0) {
            return Err(Error::Config(format!(
                "epsilon_h must be positive, got {}",
                self.epsilon_h
            )));
        }
        Ok(())
    }

    pub fn fuse<T: Real>(&self, s_f: T, s_p: T) -> T {
        match self.mode {
            FusionMode::Weighted => lerp(s_p, s_f, T::lit(self.alpha)),
            FusionMode::Harmonic => fuse_harmonic(s_f, s_p, T::lit(self.epsilon_h)),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must be in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Convex combination `alpha * s_f + (1 - alpha) * s_p`.
pub fn fuse_weighted<T: Real>(s_f: T, s_p: T, alpha: T) -> Result<T> {
    check_alpha(alpha.to_f64_lossy())?;
    Ok(lerp(s_p, s_f, alpha))
}

/// `a + t (b - a)` for `t` in [0, 1], exact at both ends, exact when
/// `a == b`, and never outside `[min(a, b), max(a, b)]`.
fn lerp<T: Real>(a: T, b: T, t: T) -> T {
    if (a <= T::zero() && b >= T::zero()) || (a >= T::zero() && b <= T::zero()) {
        return t * b + (T::one() - t) * a;
    }
    if t == T::one() {
        return b;
    }
    let x = a + t * (b - a);
    if b > a {
        x.min(b)
    } else {
        x.max(b)
    }
}

/// Harmonic mean `2 s_f s_p / (s_f + s_p)`; 0 when `s_f + s_p < eps`.
///
/// Evaluated as `lo * (2 hi / (lo + hi))` so equal inputs return exactly
/// themselves and no product of two small scores is formed.
pub fn fuse_harmonic<T: Real>(s_f: T, s_p: T, eps: T) -> T {
    let sum = s_f + s_p;
    if sum < eps {
        return T::zero();
    }
    let (lo, hi) = if s_f <= s_p { (s_f, s_p) } else { (s_p, s_f) };
    lo * ((hi + hi) / sum)
}

/// One sample's fused score and its configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub label: crate::manifest::Label,
    pub s_f_raw: f64,
    pub s_f: f64,
    pub s_p: f64,
    pub s_h: f64,
    pub config: FusionConfig,
}

/// Input row of an alpha sweep.
pub struct SweepSample<'a> {
    pub s_f: f64,
    pub s_p: f64,
    pub tampered: bool,
    /// Pixel confusion counts of the fused localisation at a given config,
    /// when ground truth is available.
    pub localise: Option<Box<dyn Fn(&FusionConfig) -> ConfusionCounts + 'a>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub mode: FusionMode,
    /// Sample-level detection metrics of `s_h ≥ threshold`.
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Micro-averaged pixel IoU of the fused localisation, if any sample
    /// carries ground truth.
    pub iou: Option<f64>,
}

/// Inclusive alpha grid. Points are `min + i * step` rounded to 12 decimals;
/// the last point snaps to `max` when within `step / 2`.
pub fn alpha_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    check_alpha(min)?;
    check_alpha(max)?;
    if !(step > 0.0) || min > max {
        return Err(Error::Config(format!(
            "invalid alpha grid [{min}, {max}] step {step}"
        )));
    }
    let n = ((max - min) / step + 0.5).floor() as usize;
    Ok((0..=n)
        .map(|i| {
            if i == n {
                max
            } else {
                ((min + i as f64 * step) * 1e12).round() / 1e12
            }
        })
        .collect())
}

/// Recomputes fused scores for every alpha on the grid and every requested
/// mode, emitting one row per (mode, alpha). Harmonic rows do not depend on
/// alpha; they are repeated so both modes share the same grid.
pub fn sweep_alpha(
    samples: &[SweepSample<'_>],
    alphas: &[f64],
    modes: &[FusionMode],
    epsilon_h: f64,
    threshold: f64,
) -> Result<Vec<SweepRow>> {
    if samples.is_empty() {
        return Err(Error::Empty("sweep records"));
    }
    let mut rows = Vec::with_capacity(alphas.len() * modes.len());
    for &mode in modes {
        for &alpha in alphas {
            let cfg = FusionConfig {
                mode,
                alpha,
                epsilon_h,
            };
            cfg.validate()?;
            let scored: Vec<(f64, bool)> = samples
                .iter()
                .map(|s| (cfg.fuse(s.s_f, s.s_p), s.tampered))
                .collect();
            let det: Metrics<f64> = metrics(&detection_counts(&scored, threshold));

            let mut any = false;
            let mut pixels = ConfusionCounts::default();
            for s in samples {
                if let Some(f) = &s.localise {
                    pixels += f(&cfg);
                    any = true;
                }
            }
            rows.push(SweepRow {
                alpha,
                mode,
                f1: det.f1,
                precision: det.precision,
                recall: det.recall,
                iou: any.then(|| metrics::<f64>(&pixels).iou),
            });
        }
    }
    Ok(rows)
}
