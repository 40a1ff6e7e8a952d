//! Built-in oracle suites: each one compares a production code path with an
//! independent reference on seeded random inputs.

use num_rational::Ratio;

use crate::eval::{confusion, metrics, ConfusionCounts, Metrics};
use crate::fusion::{fuse_harmonic, fuse_weighted};
use crate::grid::Grid;
use crate::losses::{alignment_loss, bce_loss, dice_loss, focal_loss, LossGrad};
use crate::oracle::{brute_local_score, central_difference, count_confusion};
use crate::px::{local_score, EmbeddingGrid, Neighbourhood, PatchGridConfig};
use crate::rng::SplitMix64;
use crate::tensor::{read_tensor, write_tensor, Tensor};

/// Suite names in the order they run and are reported.
pub const SUITES: [&str; 8] = [
    "format-roundtrip",
    "fusion-properties",
    "gradient-alignment",
    "gradient-bce",
    "gradient-dice",
    "gradient-focal",
    "metric-identities",
    "patch-bruteforce",
];

/// Finite-difference step of the gradient suites.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheckOptions {
    pub seed: u64,
    /// Relative tolerance of the gradient suites.
    pub gradient_tolerance: f64,
    /// Random instances per suite.
    pub instances: usize,
}

impl Default for SelfCheckOptions {
    fn default() -> Self {
        Self {
            seed: 0x5EED,
            gradient_tolerance: 1e-4,
            instances: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type SuiteResult = std::result::Result<String, String>;

pub fn run_all(opts: &SelfCheckOptions) -> Vec<SuiteOutcome> {
    SUITES
        .iter()
        .map(|&name| run_suite(name, opts).expect("listed suite"))
        .collect()
}

/// Runs one suite by name; `None` for an unknown name.
pub fn run_suite(name: &str, opts: &SelfCheckOptions) -> Option<SuiteOutcome> {
    let name = *SUITES.iter().find(|&&s| s == name)?;
    let mut rng = SplitMix64::new(opts.seed ^ fnv1a(name));
    let n = opts.instances.max(1);
    let tol = opts.gradient_tolerance;
    let result = match name {
        "format-roundtrip" => format_roundtrip(&mut rng, n),
        "fusion-properties" => fusion_properties(&mut rng, n * 50),
        "gradient-alignment" => gradient_suite(&mut rng, n, tol, GradKind::Alignment),
        "gradient-bce" => gradient_suite(&mut rng, n, tol, GradKind::Bce),
        "gradient-dice" => gradient_suite(&mut rng, n, tol, GradKind::Dice),
        "gradient-focal" => gradient_suite(&mut rng, n, tol, GradKind::Focal),
        "metric-identities" => metric_identities(&mut rng, n),
        "patch-bruteforce" => patch_bruteforce(&mut rng, n),
        _ => unreachable!(),
    };
    Some(match result {
        Ok(detail) => SuiteOutcome {
            name,
            passed: true,
            detail,
        },
        Err(detail) => SuiteOutcome {
            name,
            passed: false,
            detail,
        },
    })
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

fn format_roundtrip(rng: &mut SplitMix64, n: usize) -> SuiteResult {
    for case in 0..n {
        let ndim = 1 + rng.next_below(4) as usize;
        let shape: Vec<usize> = (0..ndim).map(|_| 1 + rng.next_below(6) as usize).collect();
        let len = shape.iter().product();
        let data = (0..len)
            .map(|_| (rng.next_gaussian() * 1e3) as f32)
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        let written = write_tensor(&t, &mut buf).map_err(|e| e.to_string())?;
        if written != buf.len() || buf.len() != t.encoded_len() {
            return Err(format!("case {case}: byte length {} disagrees", buf.len()));
        }
        let back = read_tensor(buf.as_slice()).map_err(|e| format!("case {case}: {e}"))?;
        if !back.bit_eq(&t) {
            return Err(format!("case {case}: round trip changed the payload"));
        }
        let mut bad = buf.clone();
        bad[rng.next_below(4) as usize] ^= 0x20;
        if read_tensor(bad.as_slice()).is_ok() {
            return Err(format!("case {case}: corrupted magic accepted"));
        }
        let cut = rng.next_below(buf.len() as u64) as usize;
        if read_tensor(&buf[..cut]).is_ok() {
            return Err(format!("case {case}: truncation to {cut} bytes accepted"));
        }
    }
    Ok(format!("{n} tensors"))
}

fn fusion_properties(rng: &mut SplitMix64, n: usize) -> SuiteResult {
    for _ in 0..n {
        let (f, p) = (rng.next_f64(), rng.next_f64());
        let arith = fuse_weighted(f, p, 0.5).map_err(|e| e.to_string())?;
        let harm = fuse_harmonic(f, p, 1e-9);
        if harm > arith {
            return Err(format!("harmonic {harm} above arithmetic {arith} at ({f}, {p})"));
        }
        let alpha = rng.next_f64();
        let w = fuse_weighted(f, p, alpha).map_err(|e| e.to_string())?;
        if w < f.min(p) || w > f.max(p) {
            return Err(format!("weighted {w} outside inputs ({f}, {p}) at alpha {alpha}"));
        }
        if fuse_weighted(f, f, alpha).ok() != Some(f) || fuse_harmonic(f, f, 1e-9) != f {
            return Err(format!("fixed point broken at {f}"));
        }
    }
    Ok(format!("{n} points"))
}

#[derive(Clone, Copy)]
enum GradKind {
    Alignment,
    Bce,
    Dice,
    Focal,
}

fn eval_loss(kind: GradKind, x: &[f64], other: &[f64]) -> LossGrad<f64> {
    match kind {
        GradKind::Alignment => alignment_loss(x, other),
        GradKind::Bce => bce_loss(x, other),
        GradKind::Dice => dice_loss(x, other, 1.0),
        GradKind::Focal => focal_loss(x, other, 2.0),
    }
    .expect("well-formed loss input")
}

/// Relative error with a small absolute floor in the denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn gradient_suite(rng: &mut SplitMix64, coords: usize, tol: f64, kind: GradKind) -> SuiteResult {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < coords {
        let len = 2 + rng.next_below(9) as usize;
        let (x, other): (Vec<f64>, Vec<f64>) = match kind {
            GradKind::Alignment => (0..len)
                .map(|_| (rng.next_gaussian(), rng.next_gaussian()))
                .unzip(),
            _ => (0..len)
                .map(|_| (0.05 + 0.9 * rng.next_f64(), (rng.next_below(2)) as f64))
                .unzip(),
        };
        let analytic = eval_loss(kind, &x, &other).grad;
        for i in 0..len {
            let numeric = central_difference(|v| eval_loss(kind, v, &other).value, &x, i, FD_STEP);
            let err = relative_error(analytic[i], numeric);
            worst = worst.max(err);
            if err > tol {
                return Err(format!(
                    "coordinate {i}: analytic {:e} vs numeric {:e}, relative error {err:.3e} > {tol:e}",
                    analytic[i], numeric
                ));
            }
        }
        checked += len;
    }
    Ok(format!("{checked} coordinates, worst relative error {worst:.2e}"))
}

fn random_counts(rng: &mut SplitMix64) -> ConfusionCounts {
    let mut draw = || rng.next_below(50);
    ConfusionCounts {
        tp: draw(),
        fp: draw(),
        fn_: draw(),
        tn: draw(),
    }
}

fn metric_identities(rng: &mut SplitMix64, n: usize) -> SuiteResult {
    let one = Ratio::from_integer(1);
    let two = Ratio::from_integer(2);
    let mut total = ConfusionCounts::default();
    for _ in 0..n {
        let c = random_counts(rng);
        total += c;
        let m: Metrics<Ratio<i64>> = metrics(&c);
        if m.f1 != two * m.iou / (one + m.iou) {
            return Err(format!("f1 = 2 iou / (1 + iou) fails for {c:?}"));
        }
    }
    let micro: Metrics<Ratio<i64>> = metrics(&total);
    let direct = Ratio::new(total.tp as i64, (total.tp + total.fp + total.fn_) as i64);
    if micro.iou != direct {
        return Err("micro IoU differs from summed counts".into());
    }
    for case in 0..n.min(100) {
        let pred = Grid::from_fn(64, 64, |_, _| rng.next_below(2) as u8);
        let gt = Grid::from_fn(64, 64, |_, _| rng.next_below(2) as u8);
        let c = confusion(&pred, &gt).map_err(|e| e.to_string())?;
        if count_confusion(pred.data(), gt.data()) != (c.tp, c.fp, c.fn_, c.tn) {
            return Err(format!("mask pair {case}: confusion disagrees with counting"));
        }
    }
    Ok(format!("{n} tables"))
}

fn patch_bruteforce(rng: &mut SplitMix64, n: usize) -> SuiteResult {
    let mut worst: f64 = 0.0;
    for case in 0..n {
        let (rows, cols) = loop {
            let rc = (1 + rng.next_below(8) as usize, 1 + rng.next_below(8) as usize);
            if rc.0 * rc.1 >= 2 {
                break rc;
            }
        };
        let dim = 1 + rng.next_below(16) as usize;
        let emb: Vec<Vec<f64>> = (0..rows * cols)
            .map(|_| loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
                if v.iter().any(|&x| x != 0.0) {
                    break v;
                }
            })
            .collect();
        let eight = rng.next_below(2) == 1;
        let clamp = rng.next_below(2) == 1;
        let cfg = PatchGridConfig {
            patch_size: 1,
            neighbourhood: if eight { Neighbourhood::Eight } else { Neighbourhood::Four },
            clamp_negative_sim: clamp,
            ..PatchGridConfig::default()
        };
        let grid = EmbeddingGrid::new(rows, cols, dim, emb.concat()).map_err(|e| e.to_string())?;
        let got = local_score(&grid, &cfg, (rows, cols)).map_err(|e| e.to_string())?;
        let (want, want_mean) = brute_local_score(&emb, rows, cols, eight, clamp);
        for (a, b) in got.per_patch.data().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
        worst = worst.max((got.s_p - want_mean).abs());
        if worst > 1e-6 {
            return Err(format!("case {case} ({rows}×{cols}): deviation {worst:e}"));
        }
    }
    Ok(format!("{n} grids, worst deviation {worst:.2e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_sorted_and_pass() {
        let mut sorted = SUITES;
        sorted.sort_unstable();
        assert_eq!(sorted, SUITES);
        let opts = SelfCheckOptions {
            instances: 40,
            ..SelfCheckOptions::default()
        };
        for o in run_all(&opts) {
            assert!(o.passed, "{}: {}", o.name, o.detail);
        }
    }

    #[test]
    fn forced_tolerance_fails_focal() {
        let opts = SelfCheckOptions {
            gradient_tolerance: 1e-12,
            ..SelfCheckOptions::default()
        };
        assert!(!run_suite("gradient-focal", &opts).unwrap().passed);
        assert!(run_suite("nope", &opts).is_none());
    }
}
