//! Local anomaly detection by patch self-consistency.
//!
//! Every patch is compared with its spatial neighbours by cosine similarity
//! of their embeddings; a patch that disagrees with its surroundings scores
//! high. Per-patch scores are averaged into the image score and upsampled
//! into a per-pixel map that is thresholded into a localisation mask.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{resize_bilinear, resize_nearest, Grid};
use crate::scalar::{compensated_sum, Real};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Neighbourhood {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl Neighbourhood {
    /// Offsets in scan order.
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Neighbourhood::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Neighbourhood::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchGridConfig {
    pub patch_size: usize,
    pub neighbourhood: Neighbourhood,
    /// Clamp negative similarities to zero so every patch score is in [0, 1].
    pub clamp_negative_sim: bool,
    /// Map values at or above this become mask positives.
    pub binarise_threshold: f64,
}

impl Default for PatchGridConfig {
    fn default() -> Self {
        Self {
            patch_size: 32,
            neighbourhood: Neighbourhood::Eight,
            clamp_negative_sim: true,
            binarise_threshold: 0.5,
        }
    }
}

impl PatchGridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::Config("patch size must be ≥ 1".into()));
        }
        if !(self.binarise_threshold > 0.0 && self.binarise_threshold < 1.0) {
            return Err(Error::Config(format!(
                "binarise threshold must be in (0, 1), got {}",
                self.binarise_threshold
            )));
        }
        Ok(())
    }
}

/// Patch embeddings laid out on the patch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGrid<T> {
    rows: usize,
    cols: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> EmbeddingGrid<T> {
    pub fn new(rows: usize, cols: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 || dim == 0 || data.len() != rows * cols * dim {
            return Err(Error::ShapeMismatch(format!(
                "{rows}×{cols} grid of {dim}-d embeddings cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            dim,
            data,
        })
    }

    /// Wraps a `[M, D]` tensor laid out over a `grid` with `M = rows * cols`.
    pub fn from_tensor(t: &Tensor, grid: (usize, usize)) -> Result<Self> {
        let &[m, d] = t.shape() else {
            return Err(Error::ShapeMismatch(format!(
                "embeddings must be [M, D], got {:?}",
                t.shape()
            )));
        };
        if m != grid.0 * grid.1 {
            return Err(Error::ShapeMismatch(format!(
                "{m} embeddings do not fill a {}×{} grid",
                grid.0, grid.1
            )));
        }
        Self::new(
            grid.0,
            grid.1,
            d,
            t.data().iter().map(|&v| T::lit(f64::from(v))).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Embedding of patch `i` in row-major order.
    pub fn vector(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// In-bounds neighbours of patch `i`, in scan order.
    pub fn neighbours(&self, i: usize, hood: Neighbourhood) -> impl Iterator<Item = usize> + '_ {
        let (r, c) = ((i / self.cols) as isize, (i % self.cols) as isize);
        hood.offsets().iter().filter_map(move |&(dr, dc)| {
            let (nr, nc) = (r + dr, c + dc);
            (nr >= 0 && nc >= 0 && (nr as usize) < self.rows && (nc as usize) < self.cols)
                .then(|| nr as usize * self.cols + nc as usize)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult<T> {
    /// Per-patch scores on the patch grid.
    pub per_patch: Grid<T>,
    /// Mean of `per_patch`.
    pub s_p: T,
    /// `per_patch` bilinearly upsampled to image resolution.
    pub map_fullres: Grid<T>,
    /// `map_fullres ≥ threshold`, values in {0, 1}.
    pub mask: Grid<u8>,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn cosine_sim<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na == T::zero() || nb == T::zero() {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).max(-T::one()).min(T::one()))
}

fn clamp_sim<T: Real>(sim: T, clamp_negative: bool) -> T {
    if clamp_negative {
        sim.max(T::zero())
    } else {
        sim
    }
}

/// Score of patch `i`: one minus the mean similarity to its in-bounds
/// neighbours.
pub fn patch_anomaly<T: Real>(grid: &EmbeddingGrid<T>, i: usize, cfg: &PatchGridConfig) -> Result<T> {
    if grid.len() < 2 {
        return Err(Error::NoNeighbours);
    }
    if i >= grid.len() {
        return Err(Error::Dimension(format!(
            "patch index {i} outside a grid of {}",
            grid.len()
        )));
    }
    let mut total = T::zero();
    let mut n = 0usize;
    for j in grid.neighbours(i, cfg.neighbourhood) {
        let sim = cosine_sim(grid.vector(i), grid.vector(j))?;
        total += clamp_sim(sim, cfg.clamp_negative_sim);
        n += 1;
    }
    if n == 0 {
        // A 1×N strip under 4-connectivity still has neighbours; only a
        // single patch can end up here.
        return Err(Error::NoNeighbours);
    }
    Ok(T::one() - total / T::from_usize_lossy(n))
}

/// Scores every patch, aggregates, upsamples and binarises.
///
/// Embeddings are normalised once and each neighbouring pair's similarity is
/// computed once and shared by both patches.
pub fn local_score<T: Real>(
    grid: &EmbeddingGrid<T>,
    cfg: &PatchGridConfig,
    image_size: (usize, usize),
) -> Result<LocalResult<T>> {
    cfg.validate()?;
    if grid.len() < 2 {
        return Err(Error::NoNeighbours);
    }
    let (h, w) = image_size;
    if h != grid.rows * cfg.patch_size || w != grid.cols * cfg.patch_size {
        return Err(Error::ShapeMismatch(format!(
            "patch grid {}×{} with patch size {} does not tile {h}×{w}",
            grid.rows, grid.cols, cfg.patch_size
        )));
    }

    let dim = grid.dim;
    let mut unit = Vec::with_capacity(grid.data.len());
    for i in 0..grid.len() {
        let v = grid.vector(i);
        let norm = dot(v, v).sqrt();
        if norm == T::zero() {
            return Err(Error::ZeroNorm);
        }
        unit.extend(v.iter().map(|&x| x / norm));
    }
    let unit_vec = |i: usize| &unit[i * dim..(i + 1) * dim];

    let offsets = cfg.neighbourhood.offsets();
    // sims[i * k + o]: similarity between patch i and its neighbour at offset o.
    let k = offsets.len();
    let mut sims: Vec<Option<T>> = vec![None; grid.len() * k];
    let offset_index = |dr: isize, dc: isize| offsets.iter().position(|&o| o == (dr, dc));
    for i in 0..grid.len() {
        let (r, c) = ((i / grid.cols) as isize, (i % grid.cols) as isize);
        for (o, &(dr, dc)) in offsets.iter().enumerate() {
            if sims[i * k + o].is_some() {
                continue;
            }
            let (nr, nc) = (r + dr, c + dc);
            if nr < 0 || nc < 0 || nr as usize >= grid.rows || nc as usize >= grid.cols {
                continue;
            }
            let j = nr as usize * grid.cols + nc as usize;
            let s = dot(unit_vec(i), unit_vec(j)).max(-T::one()).min(T::one());
            sims[i * k + o] = Some(s);
            if let Some(back) = offset_index(-dr, -dc) {
                sims[j * k + back] = Some(s);
            }
        }
    }

    let scores: Vec<T> = sims
        .chunks_exact(k)
        .map(|row| {
            let (total, n) = row
                .iter()
                .flatten()
                .fold((T::zero(), 0usize), |(t, n), &s| {
                    (t + clamp_sim(s, cfg.clamp_negative_sim), n + 1)
                });
            T::one() - total / T::from_usize_lossy(n)
        })
        .collect();

    let per_patch = Grid::new(grid.rows, grid.cols, scores)?;
    let s_p = compensated_sum(per_patch.data().iter().copied()) / T::from_usize_lossy(grid.len());
    let map_fullres = resize_bilinear(&per_patch, h, w);
    let threshold = T::lit(cfg.binarise_threshold);
    let mask = map_fullres.map(|v| u8::from(v >= threshold));
    Ok(LocalResult {
        per_patch,
        s_p,
        map_fullres,
        mask,
    })
}

/// Nearest-neighbour resize of a binary mask.
pub fn resize_mask_nn(mask: &Grid<u8>, target: (usize, usize)) -> Result<Grid<u8>> {
    if let Some(i) = mask.data().iter().position(|&v| v > 1) {
        return Err(Error::NotBinary(i));
    }
    Ok(resize_nearest(mask, target.0, target.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn grid_from(rows: usize, cols: usize, dim: usize, f: impl FnMut(usize) -> Vec<f64>) -> EmbeddingGrid<f64> {
        let data = (0..rows * cols).flat_map(f).collect();
        EmbeddingGrid::new(rows, cols, dim, data).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_sim(&[0.3_f64, 0.4], &[0.3, 0.4]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0_f64, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine_sim(&[1.0_f64, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert!(matches!(
            cosine_sim(&[0.0_f64, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn neighbourhood_sizes_on_3x3() {
        let g = grid_from(3, 3, 2, |_| vec![1.0, 0.0]);
        let count = |i| g.neighbours(i, Neighbourhood::Eight).count();
        assert_eq!(count(4), 8);
        assert_eq!(count(0), 3);
        assert_eq!(count(1), 5);
        assert_eq!(g.neighbours(4, Neighbourhood::Four).count(), 4);
        assert_eq!(g.neighbours(0, Neighbourhood::Four).count(), 2);
    }

    #[test]
    fn identical_embeddings_score_zero() {
        let g = grid_from(7, 7, 4, |_| vec![0.1, 0.2, 0.3, 0.4]);
        let cfg = PatchGridConfig::default();
        for i in 0..49 {
            assert!(patch_anomaly(&g, i, &cfg).unwrap().abs() < 1e-12);
        }
        let res = local_score(&g, &cfg, (224, 224)).unwrap();
        assert!(res.s_p.abs() < 1e-12);
        assert!(res.mask.data().iter().all(|&m| m == 0));
    }

    #[test]
    fn single_patch_has_no_neighbours() {
        let g = grid_from(1, 1, 2, |_| vec![1.0, 1.0]);
        let cfg = PatchGridConfig::default();
        assert!(matches!(patch_anomaly(&g, 0, &cfg), Err(Error::NoNeighbours)));
        assert!(matches!(local_score(&g, &cfg, (32, 32)), Err(Error::NoNeighbours)));
    }

    #[test]
    fn orthogonal_outlier_is_the_maximum() {
        let outlier = 24;
        let g = grid_from(7, 7, 3, |i| if i == outlier { vec![0.0, 0.0, 1.0] } else { vec![1.0, 0.0, 0.0] });
        let res = local_score(&g, &PatchGridConfig::default(), (224, 224)).unwrap();
        let argmax = (0..49)
            .max_by(|&a, &b| res.per_patch.data()[a].partial_cmp(&res.per_patch.data()[b]).unwrap())
            .unwrap();
        assert_eq!(argmax, outlier);
        assert_eq!(res.per_patch.data()[outlier], 1.0);
        // Each of the outlier's 8 neighbours loses one of its 8 agreements.
        assert!((res.per_patch.get(2, 3) - 0.125).abs() < 1e-12);
        // Mask covers the pixels nearest the outlier's centre.
        assert_eq!(res.mask.get(3 * 32 + 16, 3 * 32 + 16), 1);
        assert_eq!(res.mask.get(0, 0), 0);
    }

    #[test]
    fn s_p_is_mean_of_per_patch() {
        let mut rng = SplitMix64::new(11);
        let g = grid_from(5, 6, 8, |_| (0..8).map(|_| rng_value(&mut rng)).collect());
        let res = local_score(&g, &PatchGridConfig::default(), (160, 192)).unwrap();
        let mean = res.per_patch.data().iter().sum::<f64>() / 30.0;
        assert!((res.s_p - mean).abs() < 1e-6);
        assert!(res.per_patch.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    fn rng_value(rng: &mut SplitMix64) -> f64 {
        rng.next_f64() * 2.0 - 1.0
    }

    #[test]
    fn raw_mode_can_exceed_one() {
        let g = grid_from(1, 2, 1, |i| vec![if i == 0 { 1.0 } else { -1.0 }]);
        let cfg = PatchGridConfig {
            clamp_negative_sim: false,
            ..PatchGridConfig::default()
        };
        assert_eq!(patch_anomaly(&g, 0, &cfg).unwrap(), 2.0);
        let clamped = PatchGridConfig::default();
        assert_eq!(patch_anomaly(&g, 0, &clamped).unwrap(), 1.0);
    }

    #[test]
    fn image_size_must_tile() {
        let g = grid_from(2, 2, 1, |_| vec![1.0]);
        assert!(local_score(&g, &PatchGridConfig::default(), (64, 65)).is_err());
    }

    #[test]
    fn mask_resize_examples() {
        let m = Grid::new(2, 2, vec![1u8, 0, 0, 1]).unwrap();
        assert_eq!(resize_mask_nn(&m, (2, 2)).unwrap(), m);
        let up = resize_mask_nn(&m, (4, 4)).unwrap();
        assert!(up.data().iter().all(|&v| v <= 1));
        assert_eq!(up.get(1, 1), 1);
        assert_eq!(up.get(1, 2), 0);
        assert_eq!(up.get(3, 3), 1);
        let bad = Grid::new(1, 2, vec![0u8, 255]).unwrap();
        assert!(matches!(resize_mask_nn(&bad, (2, 2)), Err(Error::NotBinary(1))));
    }

    #[test]
    fn mask_nn_round_trip() {
        let mut rng = SplitMix64::new(13);
        let m = Grid::from_fn(13, 17, |_, _| u8::from(rng.next_f64() < 0.4));
        let up = resize_mask_nn(&m, (224, 224)).unwrap();
        let back = resize_mask_nn(&up, (13, 17)).unwrap();
        let agree = m.data().iter().zip(back.data()).filter(|(a, b)| a == b).count();
        assert!(agree as f64 / m.len() as f64 >= 0.9);
    }
}
