//! Global anomaly estimation from transformer attention.
//!
//! The attention stack is reduced to a received-attention field over the
//! token grid, resampled to image resolution, summarised by its mean and
//! spread, and compared against reference statistics fitted on authentic
//! samples: `raw = |x - x_ref| / s_ref`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureBundle;
use crate::grid::{resize_bilinear, Grid};
use crate::scalar::{mean_std, Real};

/// Reference spreads below this are rejected as a degenerate calibration.
pub const SIGMA_REF_FLOOR: f64 = 1e-6;

/// Per-pixel received attention at image resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap<T> {
    pub values: Grid<T>,
    /// Token grid the field was resampled from.
    pub source_dims: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionSummary<T> {
    pub mu: T,
    /// Population standard deviation.
    pub sigma: T,
}

/// Which moment of the attention field the deviation score is computed on.
///
/// `Mean` is the field mean. For a row-stochastic attention matrix without a
/// class token the received attention always sums to one, so the mean is the
/// constant `1/T`; `Spread`, the coefficient of variation `σ / μ`, carries
/// the signal in that case and does not depend on the token count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FxStatistic {
    #[default]
    Mean,
    Spread,
}

impl FxStatistic {
    pub fn pick<T: Real>(self, s: &AttentionSummary<T>) -> T {
        match self {
            FxStatistic::Mean => s.mu,
            FxStatistic::Spread if s.mu == T::zero() => T::zero(),
            FxStatistic::Spread => s.sigma / s.mu,
        }
    }
}

/// Calibration record fitted on authentic samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct ReferenceStats<T> {
    pub mu_ref: T,
    pub sigma_ref: T,
    pub raw_p01: T,
    pub raw_p99: T,
    pub n_samples: usize,
    /// Statistic the record was fitted on. Records without the field are
    /// mean-based.
    #[serde(default)]
    pub statistic: FxStatistic,
}

impl<T: Real> ReferenceStats<T> {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu_ref, self.sigma_ref, self.raw_p01, self.raw_p99]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::CalibrationMismatch("non-finite reference statistic".into()));
        }
        if self.sigma_ref.to_f64_lossy() < SIGMA_REF_FLOOR {
            return Err(Error::DegenerateCalibration(self.sigma_ref.to_f64_lossy()));
        }
        if self.raw_p01 > self.raw_p99 || self.raw_p01 < T::zero() {
            return Err(Error::CalibrationMismatch(format!(
                "percentiles out of order: p01 {} > p99 {}",
                self.raw_p01, self.raw_p99
            )));
        }
        if self.n_samples < 2 {
            return Err(Error::TooFewSamples(self.n_samples));
        }
        Ok(())
    }

}

impl<T: Real + Serialize + serde::de::DeserializeOwned> ReferenceStats<T> {
    pub fn from_json(text: &str) -> Result<Self> {
        let stats: Self = serde_json::from_str(text)?;
        stats.validate()?;
        Ok(stats)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalScore<T> {
    /// Unbounded deviation score, ≥ 0.
    pub raw: T,
    /// `raw` mapped to [0, 1] through the calibration percentiles.
    pub normalised: T,
}

/// Reduces the attention stack to received attention per token and resamples
/// it to the bundle's image size.
///
/// The last `min(last_k, L)` layers and all heads are averaged. A leading
/// class token (one extra token beyond the token grid) is dropped before the
/// column means are taken.
pub fn aggregate_attention<T: Real>(bundle: &FeatureBundle, last_k: usize) -> Result<AttentionMap<T>> {
    if last_k == 0 {
        return Err(Error::Config("last_k must be ≥ 1".into()));
    }
    let &[layers, heads, t, t2] = bundle.attention.shape() else {
        return Err(Error::ShapeMismatch(format!(
            "attention must be [L, H, T, T], got {:?}",
            bundle.attention.shape()
        )));
    };
    let (gr, gc) = bundle.token_grid;
    let tokens = gr * gc;
    let skip = match t {
        _ if t != t2 => {
            return Err(Error::ShapeMismatch(format!("attention is {t}×{t2}, not square")))
        }
        _ if t == tokens => 0,
        _ if t == tokens + 1 => 1,
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "{t} tokens do not match token grid {gr}×{gc}"
            )))
        }
    };

    let kept = last_k.min(layers);
    let first = layers - kept;
    let block = t * t;
    let data = bundle.attention.data();

    // Average over kept layers and heads, accumulated in f64 in a fixed order.
    let mut avg = vec![0.0_f64; block];
    for layer in first..layers {
        for head in 0..heads {
            let offset = (layer * heads + head) * block;
            for (a, &v) in avg.iter_mut().zip(&data[offset..offset + block]) {
                *a += f64::from(v);
            }
        }
    }
    let denom = (kept * heads) as f64;

    let rows = (t - skip) as f64;
    let received = Grid::from_fn(gr, gc, |r, c| {
        let j = skip + r * gc + c;
        let col: f64 = (skip..t).map(|i| avg[i * t + j]).sum();
        T::lit(col / denom / rows)
    });
    let (h, w) = bundle.image_size;
    Ok(AttentionMap {
        values: resize_bilinear(&received, h, w),
        source_dims: (gr, gc),
    })
}

pub fn summarise<T: Real>(map: &AttentionMap<T>) -> Result<AttentionSummary<T>> {
    let (mu, sigma) = mean_std(map.values.data()).ok_or(Error::Empty("attention map"))?;
    Ok(AttentionSummary { mu, sigma })
}

/// Nearest-rank percentile of an ascending slice, `pct` in 1..=100.
pub fn nearest_rank<T: Copy>(sorted: &[T], pct: usize) -> T {
    assert!(!sorted.is_empty() && (1..=100).contains(&pct));
    let rank = (pct * sorted.len()).div_ceil(100).max(1);
    sorted[rank - 1]
}

fn raw_deviation<T: Real>(value: T, mu_ref: T, sigma_ref: T) -> T {
    (value - mu_ref).abs() / sigma_ref
}

/// Fits reference statistics on summaries of authentic samples.
///
/// The reference centre and spread are the mean and population standard
/// deviation of the chosen per-sample statistic. A second pass scores the
/// calibration set itself and records the 1st and 99th nearest-rank
/// percentiles of the raw scores for normalisation.
pub fn calibrate<T: Real>(
    summaries: &[AttentionSummary<T>],
    statistic: FxStatistic,
) -> Result<ReferenceStats<T>> {
    if summaries.len() < 2 {
        return Err(Error::TooFewSamples(summaries.len()));
    }
    let values: Vec<T> = summaries.iter().map(|s| statistic.pick(s)).collect();
    let (mu_ref, sigma_ref) = mean_std(&values).expect("non-empty");
    if sigma_ref.to_f64_lossy() < SIGMA_REF_FLOOR {
        return Err(Error::DegenerateCalibration(sigma_ref.to_f64_lossy()));
    }

    let mut raw: Vec<T> = values
        .iter()
        .map(|&v| raw_deviation(v, mu_ref, sigma_ref))
        .collect();
    raw.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    Ok(ReferenceStats {
        mu_ref,
        sigma_ref,
        raw_p01: nearest_rank(&raw, 1),
        raw_p99: nearest_rank(&raw, 99),
        n_samples: summaries.len(),
        statistic,
    })
}

pub fn score_global<T: Real>(s: &AttentionSummary<T>, reference: &ReferenceStats<T>) -> GlobalScore<T> {
    let raw = raw_deviation(
        reference.statistic.pick(s),
        reference.mu_ref,
        reference.sigma_ref,
    );
    GlobalScore {
        raw,
        normalised: normalise_raw(raw, reference),
    }
}

/// Robust min–max normalisation of a raw score through the calibration
/// percentiles, clamped to [0, 1].
pub fn normalise_raw<T: Real>(raw: T, reference: &ReferenceStats<T>) -> T {
    let (lo, hi) = (reference.raw_p01, reference.raw_p99);
    if hi == lo {
        return if raw <= lo { T::zero() } else { T::one() };
    }
    ((raw - lo) / (hi - lo)).max(T::zero()).min(T::one())
}
