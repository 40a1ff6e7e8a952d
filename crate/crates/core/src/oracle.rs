//! Slow, direct reference implementations used to cross-check the optimised
//! code paths. They share no code with the modules they check.

/// Per-patch scores and their mean by a naive double loop over every patch
/// and every candidate offset in the surrounding 3×3 window.
///
/// `emb[i]` is the embedding of patch `i` in row-major order. Panics on zero
/// vectors or grids without neighbours.
pub fn brute_local_score(
    emb: &[Vec<f64>],
    rows: usize,
    cols: usize,
    eight: bool,
    clamp_negative: bool,
) -> (Vec<f64>, f64) {
    assert_eq!(emb.len(), rows * cols);
    let mut scores = Vec::with_capacity(emb.len());
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            let me = &emb[(r * cols as isize + c) as usize];
            let mut total = 0.0;
            let mut n = 0;
            for dr in -1..=1_isize {
                for dc in -1..=1_isize {
                    if (dr, dc) == (0, 0) || (!eight && dr != 0 && dc != 0) {
                        continue;
                    }
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                        continue;
                    }
                    let other = &emb[(nr * cols as isize + nc) as usize];
                    let mut sim = cosine(me, other);
                    if clamp_negative && sim < 0.0 {
                        sim = 0.0;
                    }
                    total += sim;
                    n += 1;
                }
            }
            assert!(n > 0, "patch without neighbours");
            scores.push(1.0 - total / n as f64);
        }
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    (scores, mean)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    assert!(aa > 0.0 && bb > 0.0, "zero vector");
    (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
}

/// Central difference `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// `(tp, fp, fn, tn)` by counting each category separately.
pub fn count_confusion(pred: &[u8], gt: &[u8]) -> (u64, u64, u64, u64) {
    let count = |p: u8, g: u8| {
        pred.iter()
            .zip(gt)
            .filter(|&(&a, &b)| a == p && b == g)
            .count() as u64
    };
    (count(1, 1), count(1, 0), count(0, 1), count(0, 0))
}

/// AUC as the fraction of (tampered, authentic) pairs ordered correctly,
/// ties counting one half.
pub fn pairwise_auc(scores: &[(f64, bool)]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for &(p, pos) in scores {
        if !pos {
            continue;
        }
        for &(n, neg_pos) in scores {
            if neg_pos {
                continue;
            }
            pairs += 1.0;
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Nearest-rank percentile by sorting a copy: the smallest value with at
/// least `pct` percent of the sample at or below it.
pub fn sorted_percentile(values: &[f64], pct: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut k = 0;
    while k < n && ((k + 1) as f64) * 100.0 < pct * n as f64 {
        k += 1;
    }
    v[k.min(n - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(sorted_percentile(&v, 1.0), 1.0);
        assert_eq!(sorted_percentile(&v, 99.0), 99.0);
        assert_eq!(sorted_percentile(&[3.0, 1.0, 2.0], 99.0), 3.0);
        assert_eq!(sorted_percentile(&[3.0, 1.0, 2.0], 1.0), 1.0);
    }

    #[test]
    fn brute_force_two_patches() {
        let emb = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        let (s, m) = brute_local_score(&emb, 1, 2, true, true);
        let expect = 1.0 - 0.5_f64.sqrt();
        assert!((s[0] - expect).abs() < 1e-15 && (s[1] - expect).abs() < 1e-15);
        assert!((m - expect).abs() < 1e-15);
    }

    #[test]
    fn pairwise_auc_examples() {
        assert_eq!(pairwise_auc(&[(0.2, false), (0.9, true)]), 1.0);
        assert_eq!(pairwise_auc(&[(0.2, true), (0.2, false)]), 0.5);
    }

    #[test]
    fn difference_of_square() {
        let d = central_difference(|x| x[0] * x[0], &[3.0], 0, 1e-4);
        assert!((d - 6.0).abs() < 1e-9);
    }
}
