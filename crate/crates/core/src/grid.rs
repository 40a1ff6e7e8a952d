//! Row-major 2-D scalar fields and the two resampling kernels used by the
//! engine: bilinear for anomaly maps, nearest-neighbour for binary masks.
//!
//! Both kernels use the half-pixel (align-corners = false) convention: output
//! pixel `x` samples the source at `(x + 0.5) * in / out - 0.5`, with the
//! source clamped at its borders.

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Real};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "grid {rows}×{cols} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        assert!(rows > 0 && cols > 0, "grid must be non-empty");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(rows > 0 && cols > 0, "grid must be non-empty");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Grid<U> {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    pub fn zip_map<U: Copy, V: Copy>(
        &self,
        other: &Grid<U>,
        mut f: impl FnMut(T, U) -> V,
    ) -> Result<Grid<V>> {
        if self.dims() != other.dims() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(Grid {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

impl<T: Real> Grid<T> {
    pub fn mean(&self) -> T {
        compensated_sum(self.data.iter().copied()) / T::from_usize_lossy(self.len())
    }

    pub fn min_max(&self) -> (T, T) {
        self.data
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [rows, cols] => Grid::new(
                rows,
                cols,
                t.data().iter().map(|&v| T::lit(f64::from(v))).collect(),
            ),
            _ => Err(Error::ShapeMismatch(format!(
                "expected a 2-D tensor, got shape {:?}",
                t.shape()
            ))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.rows, self.cols],
            self.data
                .iter()
                .map(|v| v.to_f32().unwrap_or(f32::NAN))
                .collect(),
        )
        .expect("grid dims are consistent")
    }
}

/// Source coordinate and blend weight along one axis.
#[derive(Debug, Clone, Copy)]
struct Tap<T> {
    lo: usize,
    hi: usize,
    frac: T,
}

fn bilinear_taps<T: Real>(src: usize, dst: usize) -> Vec<Tap<T>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|x| {
            let pos = ((x as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            let frac = if hi == lo { 0.0 } else { pos - lo as f64 };
            Tap {
                lo,
                hi,
                frac: T::lit(frac),
            }
        })
        .collect()
}

/// Bilinear resampling to `(rows, cols)`.
pub fn resize_bilinear<T: Real>(src: &Grid<T>, rows: usize, cols: usize) -> Grid<T> {
    if src.dims() == (rows, cols) {
        return src.clone();
    }
    let ty = bilinear_taps::<T>(src.rows, rows);
    let tx = bilinear_taps::<T>(src.cols, cols);
    Grid::from_fn(rows, cols, |r, c| {
        let (y, x) = (ty[r], tx[c]);
        let top = src.get(y.lo, x.lo) * (T::one() - x.frac) + src.get(y.lo, x.hi) * x.frac;
        let bottom = src.get(y.hi, x.lo) * (T::one() - x.frac) + src.get(y.hi, x.hi) * x.frac;
        top * (T::one() - y.frac) + bottom * y.frac
    })
}

fn nearest_index(x: usize, src: usize, dst: usize) -> usize {
    // floor((x + 0.5) * src / dst) in exact integer arithmetic.
    (((2 * x + 1) * src) / (2 * dst)).min(src - 1)
}

/// Nearest-neighbour resampling to `(rows, cols)`.
pub fn resize_nearest<T: Copy>(src: &Grid<T>, rows: usize, cols: usize) -> Grid<T> {
    if src.dims() == (rows, cols) {
        return src.clone();
    }
    Grid::from_fn(rows, cols, |r, c| {
        src.get(
            nearest_index(r, src.rows, rows),
            nearest_index(c, src.cols, cols),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stays_constant() {
        let g = Grid::filled(14, 14, 1.0_f64 / 196.0);
        let up = resize_bilinear(&g, 224, 224);
        assert!(up.data().iter().all(|&v| (v - 1.0 / 196.0).abs() < 1e-15));
    }

    #[test]
    fn integer_upscale_preserves_mean() {
        let g = Grid::from_fn(7, 7, |r, c| (r * 7 + c) as f64);
        let up = resize_bilinear(&g, 224, 224);
        assert!((up.mean() - g.mean()).abs() < 1e-12);
    }

    #[test]
    fn bilinear_midpoint_between_two_cells() {
        // 1×2 source to 1×4: pixel centres at source x = -0.25, 0.25, 0.75, 1.25.
        let g = Grid::new(1, 2, vec![0.0_f64, 1.0]).unwrap();
        let up = resize_bilinear(&g, 1, 4);
        assert_eq!(up.data(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn nearest_blocks() {
        let g = Grid::new(2, 2, vec![1u8, 0, 0, 1]).unwrap();
        let up = resize_nearest(&g, 4, 4);
        assert_eq!(
            up.data(),
            &[1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1]
        );
    }

    #[test]
    fn new_rejects_bad_dims() {
        assert!(Grid::new(2, 2, vec![0.0_f32; 3]).is_err());
        assert!(Grid::<f32>::new(0, 2, vec![]).is_err());
    }
}
