//! Seeded synthetic forensics dataset.
//!
//! Authentic images are a dark flat background with a mild linear gradient
//! and faint pixel noise. Tampered images additionally carry one pasted
//! square block of sparse bright speckle noise, aligned to the patch grid,
//! and a ground-truth mask of that block.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::image::{save_image, save_mask, Image};
use crate::manifest::{DatasetManifest, Label, ManifestMeta, SampleEntry};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_authentic: usize,
    pub n_tampered: usize,
    pub size: usize,
    pub block: usize,
    /// Block corners are placed on multiples of this.
    pub align: usize,
    /// Probability a block pixel channel is lit.
    pub speckle_density: f64,
    pub patch_size: usize,
    pub embed_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            n_authentic: 20,
            n_tampered: 20,
            size: 224,
            block: 64,
            align: 32,
            speckle_density: 0.15,
            patch_size: 32,
            embed_dim: 256,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub id: String,
    pub label: Label,
    pub image: Image,
    pub mask: Option<Grid<u8>>,
    /// Top-left corner of the pasted block.
    pub block_origin: Option<(usize, usize)>,
}

fn background(rng: &mut SplitMix64, size: usize) -> Vec<f32> {
    let base = 0.12 + 0.08 * rng.next_f64();
    let tint: Vec<f64> = (0..3).map(|_| 0.01 * (rng.next_f64() - 0.5)).collect();
    let theta = std::f64::consts::TAU * rng.next_f64();
    let amplitude = 0.02 + 0.03 * rng.next_f64();
    let (dx, dy) = (theta.cos(), theta.sin());
    let mut px = Vec::with_capacity(size * size * 3);
    let scale = 1.0 / size as f64;
    for r in 0..size {
        for c in 0..size {
            let ramp = amplitude * ((c as f64 * dx + r as f64 * dy) * scale - 0.5 * (dx + dy));
            for t in &tint {
                let v = base + t + ramp + 0.01 * rng.next_gaussian();
                px.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    px
}

/// Generates the samples in manifest order: authentic first, then tampered.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SyntheticSample>> {
    if cfg.block > cfg.size || cfg.align == 0 || cfg.size % cfg.patch_size != 0 {
        return Err(Error::Config("inconsistent synthetic dataset geometry".into()));
    }
    let mut master = SplitMix64::new(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n_authentic + cfg.n_tampered);
    let slots = (cfg.size - cfg.block) / cfg.align + 1;

    for i in 0..cfg.n_authentic + cfg.n_tampered {
        let mut rng = SplitMix64::new(master.next_u64());
        let mut pixels = background(&mut rng, cfg.size);
        let tampered = i >= cfg.n_authentic;
        let (id, label, mask, origin) = if tampered {
            let r0 = rng.next_below(slots as u64) as usize * cfg.align;
            let c0 = rng.next_below(slots as u64) as usize * cfg.align;
            for r in r0..r0 + cfg.block {
                for c in c0..c0 + cfg.block {
                    for k in 0..3 {
                        let lit = rng.next_f64() < cfg.speckle_density;
                        pixels[(r * cfg.size + c) * 3 + k] = if lit { 1.0 } else { 0.0 };
                    }
                }
            }
            let mask = Grid::from_fn(cfg.size, cfg.size, |r, c| {
                u8::from((r0..r0 + cfg.block).contains(&r) && (c0..c0 + cfg.block).contains(&c))
            });
            (
                format!("tampered_{:03}", i - cfg.n_authentic),
                Label::Tampered,
                Some(mask),
                Some((r0, c0)),
            )
        } else {
            (format!("authentic_{i:03}"), Label::Authentic, None, None)
        };
        out.push(SyntheticSample {
            id,
            label,
            image: Image::new(cfg.size, cfg.size, pixels)?,
            mask,
            block_origin: origin,
        });
    }
    Ok(out)
}

/// Writes images, masks and `manifest.json` under `dir`; returns the
/// manifest path.
pub fn write_dataset(cfg: &SynthConfig, dir: &Path) -> Result<PathBuf> {
    let samples = generate(cfg)?;
    for sub in ["images", "masks"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    let mut entries = Vec::with_capacity(samples.len());
    for s in &samples {
        let image_path = PathBuf::from("images").join(format!("{}.png", s.id));
        save_image(&s.image, &dir.join(&image_path))?;
        let mask_path = match &s.mask {
            Some(m) => {
                let p = PathBuf::from("masks").join(format!("{}.png", s.id));
                save_mask(m, &dir.join(&p))?;
                Some(p)
            }
            None => None,
        };
        entries.push(SampleEntry {
            id: s.id.clone(),
            image_path,
            label: s.label,
            mask_path,
            attention_path: None,
            embeddings_path: None,
        });
    }
    let manifest = DatasetManifest {
        meta: ManifestMeta {
            image_size: (cfg.size, cfg.size),
            patch_size: cfg.patch_size,
            embed_dim: cfg.embed_dim,
        },
        samples: entries,
        base_dir: dir.to_path_buf(),
    };
    manifest.validate()?;
    let path = dir.join("manifest.json");
    fs::write(&path, manifest.to_json()? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
