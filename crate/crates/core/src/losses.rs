//! Segmentation and alignment losses with analytic gradients.
//!
//! Each loss returns its value together with the gradient with respect to its
//! prediction argument. Nothing here updates parameters; the functions exist
//! so the training objective can be evaluated and its gradients checked.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Probability clamp applied before any logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub bce: f64,
    pub dice: f64,
    pub focal: f64,
    /// Weight of the attention alignment term.
    pub align: f64,
    pub focal_gamma: f64,
    pub dice_smooth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            bce: 1.0,
            dice: 0.7,
            focal: 1.0,
            align: 0.1,
            focal_gamma: 2.0,
            dice_smooth: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.bce, self.dice, self.focal, self.align, self.focal_gamma];
        if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("loss weights and gamma must be non-negative".into()));
        }
        if !(self.dice_smooth > 0.0) {
            return Err(Error::Config("dice smoothing must be positive".into()));
        }
        Ok(())
    }
}

/// Loss value and gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub value: T,
    pub grad: Vec<T>,
}

fn check_shapes<T>(pred: &[T], target: &[T]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "prediction has {} elements, target {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("loss input"));
    }
    Ok(())
}

fn clamp_prob<T: Real>(p: T) -> T {
    let eps = T::lit(PROB_CLAMP);
    p.max(eps).min(T::one() - eps)
}

/// Mean binary cross-entropy.
pub fn bce_loss<T: Real>(pred: &[T], target: &[T]) -> Result<LossGrad<T>> {
    check_shapes(pred, target)?;
    let n = T::from_usize_lossy(pred.len());
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.iter().zip(target) {
        let p = clamp_prob(p);
        total -= y * p.ln() + (T::one() - y) * (T::one() - p).ln();
        grad.push((p - y) / (p * (T::one() - p)) / n);
    }
    Ok(LossGrad {
        value: total / n,
        grad,
    })
}

/// Soft Dice loss `1 - (2 Σ p y + ε) / (Σ p + Σ y + ε)`.
pub fn dice_loss<T: Real>(pred: &[T], target: &[T], smooth: T) -> Result<LossGrad<T>> {
    check_shapes(pred, target)?;
    let inter: T = pred.iter().zip(target).map(|(&p, &y)| p * y).sum();
    let sum_p: T = pred.iter().copied().sum();
    let sum_y: T = target.iter().copied().sum();
    let num = T::lit(2.0) * inter + smooth;
    let den = sum_p + sum_y + smooth;
    let grad = target
        .iter()
        .map(|&y| -(T::lit(2.0) * y * den - num) / (den * den))
        .collect();
    Ok(LossGrad {
        value: T::one() - num / den,
        grad,
    })
}

/// Mean focal loss `-(1 - p_t)^γ ln p_t`.
pub fn focal_loss<T: Real>(pred: &[T], target: &[T], gamma: T) -> Result<LossGrad<T>> {
    check_shapes(pred, target)?;
    if gamma < T::zero() {
        return Err(Error::Config("focal gamma must be ≥ 0".into()));
    }
    let n = T::from_usize_lossy(pred.len());
    let one = T::one();
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.iter().zip(target) {
        let p = clamp_prob(p);
        // p_t and d p_t / d p for a soft target interpolate the two branches.
        let p_t = y * p + (one - y) * (one - p);
        let dpt_dp = y - (one - y);
        let q = one - p_t;
        let log_pt = p_t.ln();
        total -= q.powf(gamma) * log_pt;
        // d/dp_t [-(1-p_t)^γ ln p_t] = γ (1-p_t)^(γ-1) ln p_t - (1-p_t)^γ / p_t
        let d_pt = if gamma == T::zero() {
            -one / p_t
        } else {
            gamma * q.powf(gamma - one) * log_pt - q.powf(gamma) / p_t
        };
        grad.push(d_pt * dpt_dp / n);
    }
    Ok(LossGrad {
        value: total / n,
        grad,
    })
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// `1 - cos(f_px, f_fx)` and its gradient with respect to `f_px`.
pub fn alignment_loss<T: Real>(f_px: &[T], f_fx: &[T]) -> Result<LossGrad<T>> {
    if f_px.len() != f_fx.len() {
        return Err(Error::ShapeMismatch(format!(
            "alignment features of length {} and {}",
            f_px.len(),
            f_fx.len()
        )));
    }
    let (nu, nv) = (norm(f_px), norm(f_fx));
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::ZeroNorm);
    }
    let dot: T = f_px.iter().zip(f_fx).map(|(&a, &b)| a * b).sum();
    let cos = dot / (nu * nv);
    let grad = f_px
        .iter()
        .zip(f_fx)
        .map(|(&u, &v)| -(v / (nu * nv) - cos * u / (nu * nu)))
        .collect();
    Ok(LossGrad {
        value: T::one() - cos,
        grad,
    })
}

/// Component values of the composite objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown<T> {
    pub bce: T,
    pub dice: T,
    pub focal: T,
    pub align: T,
    pub total: T,
}

/// `λ_bce BCE + λ_dice Dice + λ_focal Focal + ω Align`.
pub fn total_loss<T: Real>(
    pred: &[T],
    target: &[T],
    f_px: &[T],
    f_fx: &[T],
    w: &LossWeights,
) -> Result<LossBreakdown<T>> {
    w.validate()?;
    let bce = bce_loss(pred, target)?.value;
    let dice = dice_loss(pred, target, T::lit(w.dice_smooth))?.value;
    let focal = focal_loss(pred, target, T::lit(w.focal_gamma))?.value;
    let align = alignment_loss(f_px, f_fx)?.value;
    let total = T::lit(w.bce) * bce
        + T::lit(w.dice) * dice
        + T::lit(w.focal) * focal
        + T::lit(w.align) * align;
    Ok(LossBreakdown {
        bce,
        dice,
        focal,
        align,
        total,
    })
}
