//! Per-sample feature sources.
//!
//! A [`FeatureBundle`] carries the attention stack consumed by the global
//! scorer and the patch embeddings consumed by the local scorer. Bundles come
//! either from exported tensor files or from the deterministic toy provider,
//! which synthesises both from pixel statistics so the whole pipeline runs
//! offline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_image, Image};
use crate::manifest::DatasetManifest;
use crate::rng::SplitMix64;
use crate::tensor::{load_tensor, Tensor};

/// Resolution the attention provider works at.
pub const ATTENTION_INPUT: usize = 224;
/// Row-sum tolerance for accepting an attention stack.
pub const ROW_SUM_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    File,
    Toy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub seed: u64,
    pub token_grid: (usize, usize),
    /// Attention temperature.
    pub temperature: f64,
    pub patch_size: usize,
    pub embed_dim: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            token_grid: (14, 14),
            temperature: 0.05,
            patch_size: 32,
            embed_dim: 256,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "toy temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.embed_dim == 0 || self.patch_size == 0 {
            return Err(Error::Config("embed_dim and patch_size must be ≥ 1".into()));
        }
        let (gr, gc) = self.token_grid;
        if gr == 0 || gc == 0 || ATTENTION_INPUT % gr != 0 || ATTENTION_INPUT % gc != 0 {
            return Err(Error::Config(format!(
                "token grid {gr}×{gc} must evenly divide {ATTENTION_INPUT}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    /// `[layers, heads, tokens, tokens]`, row-stochastic.
    pub attention: Tensor,
    /// `[patches, embed_dim]`, patch-major in row-major grid order.
    pub embeddings: Tensor,
    /// Patch grid `(rows, cols)`.
    pub grid: (usize, usize),
    /// Spatial token grid of the attention stack, excluding any class token.
    pub token_grid: (usize, usize),
    /// Working resolution `(H, W)`.
    pub image_size: (usize, usize),
}

impl FeatureBundle {
    /// Checks shapes and attention row-stochasticity.
    pub fn validate(&self, embed_dim: usize) -> Result<()> {
        let &[_, _, t, t2] = self.attention.shape() else {
            return Err(Error::ShapeMismatch(format!(
                "attention must be [L, H, T, T], got {:?}",
                self.attention.shape()
            )));
        };
        if t != t2 {
            return Err(Error::ShapeMismatch(format!(
                "attention matrices must be square, got {t}×{t2}"
            )));
        }
        let tokens = self.token_grid.0 * self.token_grid.1;
        if t != tokens && t != tokens + 1 {
            return Err(Error::ShapeMismatch(format!(
                "attention has {t} tokens; token grid {:?} needs {tokens} (or {} with a class token)",
                self.token_grid,
                tokens + 1
            )));
        }
        check_row_stochastic(&self.attention, ROW_SUM_TOL)?;

        let patches = self.grid.0 * self.grid.1;
        if self.embeddings.shape() != [patches, embed_dim] {
            return Err(Error::ShapeMismatch(format!(
                "embeddings shape {:?} does not match [{patches}, {embed_dim}]",
                self.embeddings.shape()
            )));
        }
        Ok(())
    }
}

/// Fails if any attention row of a `[.., T, T]` tensor does not sum to 1.
pub fn check_row_stochastic(attention: &Tensor, tol: f64) -> Result<()> {
    let t = *attention.shape().last().expect("tensor has ≥ 1 dim");
    for (i, row) in attention.data().chunks_exact(t).enumerate() {
        let sum: f64 = row.iter().map(|&v| f64::from(v)).sum();
        if (sum - 1.0).abs() > tol || row.iter().any(|&v| v < 0.0) {
            return Err(Error::ShapeMismatch(format!(
                "attention row {i} is not a probability distribution (sum {sum})"
            )));
        }
    }
    Ok(())
}

/// Single-layer, single-head attention over the token grid.
///
/// Each token is described by the mean and population standard deviation of
/// the grayscale intensities in its cell; token `i` attends to `j` with
/// weight proportional to `exp(-|f_i - f_j|^2 / temperature)`.
pub fn toy_attention(img: &Image, cfg: &ToyConfig) -> Result<Tensor> {
    cfg.validate()?;
    if img.dims() != (ATTENTION_INPUT, ATTENTION_INPUT) {
        return Err(Error::Dimension(format!(
            "toy attention needs a {ATTENTION_INPUT}×{ATTENTION_INPUT} image, got {:?}",
            img.dims()
        )));
    }
    let (gr, gc) = cfg.token_grid;
    let (ch, cw) = (ATTENTION_INPUT / gr, ATTENTION_INPUT / gc);
    let gray = img.grayscale();

    let features: Vec<(f64, f64)> = (0..gr * gc)
        .map(|tok| {
            let (r0, c0) = ((tok / gc) * ch, (tok % gc) * cw);
            let cell: Vec<f64> = (r0..r0 + ch)
                .flat_map(|r| (c0..c0 + cw).map(move |c| (r, c)))
                .map(|(r, c)| f64::from(gray.get(r, c)))
                .collect();
            crate::scalar::mean_std(&cell).expect("non-empty cell")
        })
        .collect();

    let t = features.len();
    let mut data = Vec::with_capacity(t * t);
    let mut row = vec![0.0_f64; t];
    for fi in &features {
        for (w, fj) in row.iter_mut().zip(&features) {
            let d2 = (fi.0 - fj.0).powi(2) + (fi.1 - fj.1).powi(2);
            *w = (-d2 / cfg.temperature).exp();
        }
        let z: f64 = row.iter().sum();
        data.extend(row.iter().map(|w| (w / z) as f32));
    }
    Tensor::new(vec![1, 1, t, t], data)
}

/// Fixed random projection matrix `[embed_dim, 3 k^2]`, drawn row-major from
/// SplitMix64(seed).
pub fn toy_projection(cfg: &ToyConfig) -> Vec<f32> {
    let width = 3 * cfg.patch_size * cfg.patch_size;
    let mut rng = SplitMix64::new(cfg.seed);
    (0..cfg.embed_dim * width)
        .map(|_| rng.next_signed_unit())
        .collect()
}

/// Patch embeddings from a seeded random projection of raw pixels.
///
/// Each `k×k` patch is flattened in (row, column, channel) order to a `3k²`
/// vector, projected by [`toy_projection`] and L2-normalised.
pub fn toy_patch_embeddings(img: &Image, cfg: &ToyConfig) -> Result<Tensor> {
    cfg.validate()?;
    let k = cfg.patch_size;
    let (h, w) = img.dims();
    if h % k != 0 || w % k != 0 {
        return Err(Error::Dimension(format!(
            "image {h}×{w} is not divisible by patch size {k}"
        )));
    }
    let (rows, cols) = (h / k, w / k);
    let width = 3 * k * k;
    let projection = toy_projection(cfg);

    let mut out = Vec::with_capacity(rows * cols * cfg.embed_dim);
    let mut x = vec![0.0_f32; width];
    let mut e = vec![0.0_f64; cfg.embed_dim];
    for pr in 0..rows {
        for pc in 0..cols {
            for dr in 0..k {
                let start = ((pr * k + dr) * w + pc * k) * 3;
                x[dr * 3 * k..(dr + 1) * 3 * k].copy_from_slice(&img.pixels()[start..start + 3 * k]);
            }
            for (ei, r) in e.iter_mut().zip(projection.chunks_exact(width)) {
                *ei = r
                    .iter()
                    .zip(&x)
                    .map(|(&a, &b)| f64::from(a) * f64::from(b))
                    .sum();
            }
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroNorm);
            }
            out.extend(e.iter().map(|v| (v / norm) as f32));
        }
    }
    Tensor::new(vec![rows * cols, cfg.embed_dim], out)
}

/// Toy features for an image already at the working resolution `image_size`.
/// The attention path sees the image resized to 224×224.
pub fn toy_features(img: &Image, image_size: (usize, usize), cfg: &ToyConfig) -> Result<FeatureBundle> {
    let working = img.resize(image_size.0, image_size.1);
    let attention_input = working.resize(ATTENTION_INPUT, ATTENTION_INPUT);
    let bundle = FeatureBundle {
        attention: toy_attention(&attention_input, cfg)?,
        embeddings: toy_patch_embeddings(&working, cfg)?,
        grid: (image_size.0 / cfg.patch_size, image_size.1 / cfg.patch_size),
        token_grid: cfg.token_grid,
        image_size,
    };
    bundle.validate(cfg.embed_dim)?;
    Ok(bundle)
}

/// Loads or synthesises the features of sample `id`.
pub fn fetch_features(
    manifest: &DatasetManifest,
    id: &str,
    mode: ProviderMode,
    cfg: &ToyConfig,
) -> Result<FeatureBundle> {
    let entry = manifest.sample(id)?;
    let meta = &manifest.meta;
    match mode {
        ProviderMode::Toy => {
            if cfg.patch_size != meta.patch_size || cfg.embed_dim != meta.embed_dim {
                return Err(Error::Config(format!(
                    "toy patch_size/embed_dim ({}, {}) disagree with manifest ({}, {})",
                    cfg.patch_size, cfg.embed_dim, meta.patch_size, meta.embed_dim
                )));
            }
            let img = load_image(&manifest.resolve(&entry.image_path))?;
            toy_features(&img, meta.image_size, cfg)
        }
        ProviderMode::File => {
            let attention_path = entry.attention_path.as_deref().ok_or(Error::MissingPath {
                id: id.to_string(),
                what: "attention_path",
            })?;
            let embeddings_path = entry.embeddings_path.as_deref().ok_or(Error::MissingPath {
                id: id.to_string(),
                what: "embeddings_path",
            })?;
            let bundle = FeatureBundle {
                attention: load_tensor(&manifest.resolve(attention_path))?,
                embeddings: load_tensor(&manifest.resolve(embeddings_path))?,
                grid: meta.patch_grid(),
                token_grid: cfg.token_grid,
                image_size: meta.image_size,
            };
            bundle.validate(meta.embed_dim)?;
            Ok(bundle)
        }
    }
}
