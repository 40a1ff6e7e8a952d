use vaas_core::features::FeatureBundle;
use vaas_core::fx::{
    aggregate_attention, calibrate, nearest_rank, normalise_raw, score_global, summarise, AttentionMap,
    AttentionSummary, FxStatistic,
};
use vaas_core::grid::Grid;
use vaas_core::oracle::sorted_percentile;
use vaas_core::rng::SplitMix64;
use vaas_core::tensor::Tensor;

fn bundle(attention: Tensor, token_grid: (usize, usize), image_size: (usize, usize)) -> FeatureBundle {
    FeatureBundle {
        attention,
        embeddings: Tensor::zeros(vec![1, 1]).unwrap(),
        grid: (1, 1),
        token_grid,
        image_size,
    }
}

/// Bilinear sample of `g` at output pixel `(y, x)` of a `(h, w)` resize,
/// half-pixel centres, edge-clamped taps.
fn bilinear_at(g: &[Vec<f64>], h: usize, w: usize, y: usize, x: usize) -> f64 {
    let (rows, cols) = (g.len(), g[0].len());
    let sy = ((y as f64 + 0.5) * rows as f64 / h as f64 - 0.5).max(0.0);
    let sx = ((x as f64 + 0.5) * cols as f64 / w as f64 - 0.5).max(0.0);
    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(rows - 1), (x0 + 1).min(cols - 1));
    let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
    let top = g[y0][x0] * (1.0 - fx) + g[y0][x1] * fx;
    let bottom = g[y1][x0] * (1.0 - fx) + g[y1][x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

#[test]
fn doubled_column_peaks_in_its_token_region() {
    let (gr, gc) = (4, 4);
    let t = gr * gc;
    let star = 9; // token (2, 1)
    let mut data = Vec::new();
    for _ in 0..t {
        let row: Vec<f64> = (0..t).map(|j| if j == star { 2.0 } else { 1.0 }).collect();
        let s: f64 = row.iter().sum();
        data.extend(row.iter().map(|v| (v / s) as f32));
    }
    let b = bundle(Tensor::new(vec![1, 1, t, t], data).unwrap(), (gr, gc), (64, 64));
    let map = aggregate_attention::<f64>(&b, 4).unwrap();

    let received: Vec<Vec<f64>> = (0..gr)
        .map(|r| {
            (0..gc)
                .map(|c| if r * gc + c == star { 2.0 / 17.0 } else { 1.0 / 17.0 })
                .collect()
        })
        .collect();
    // Token (2, 1) covers rows 32..48 and columns 16..32.
    let (cy, cx) = (40, 24);
    let expected = bilinear_at(&received, 64, 64, cy, cx);
    assert!((map.values.get(cy, cx) - expected).abs() < 1e-6);

    let (lo, hi) = map.values.min_max();
    assert!(hi > lo);
    for r in 0..64 {
        for c in 0..64 {
            if map.values.get(r, c) == hi {
                assert!((32..48).contains(&r) && (16..32).contains(&c), "max at ({r}, {c})");
            }
        }
    }
    assert!((hi - expected).abs() < 1e-6);
}

#[test]
fn summarise_matches_compensated_brute_force() {
    let mut rng = SplitMix64::new(3);
    let values: Vec<f64> = (0..224 * 224).map(|_| rng.next_f64()).collect();
    let map = AttentionMap {
        values: Grid::new(224, 224, values.clone()).unwrap(),
        source_dims: (14, 14),
    };
    let s = summarise(&map).unwrap();

    // Kahan sums, computed independently of the library.
    let kahan = |it: &mut dyn Iterator<Item = f64>| {
        let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
        for v in it {
            let y = v - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum
    };
    let n = values.len() as f64;
    let mean = kahan(&mut values.iter().copied()) / n;
    let var = kahan(&mut values.iter().map(|v| (v - mean) * (v - mean))) / n;
    assert!(((s.mu - mean) / mean).abs() < 1e-6);
    assert!(((s.sigma - var.sqrt()) / var.sqrt()).abs() < 1e-6);
}

#[test]
fn calibration_percentiles_match_sort_oracle() {
    let mut rng = SplitMix64::new(7);
    let summaries: Vec<AttentionSummary<f64>> = (0..100)
        .map(|_| AttentionSummary {
            mu: rng.next_f64(),
            sigma: 0.1,
        })
        .collect();
    let r = calibrate(&summaries, FxStatistic::Mean).unwrap();
    let raw: Vec<f64> = summaries
        .iter()
        .map(|s| score_global(s, &r).raw)
        .collect();
    assert_eq!(r.raw_p01, sorted_percentile(&raw, 1.0));
    assert_eq!(r.raw_p99, sorted_percentile(&raw, 99.0));
    assert_eq!(r.n_samples, 100);

    let mus: Vec<f64> = summaries.iter().map(|s| s.mu).collect();
    let mean = mus.iter().sum::<f64>() / 100.0;
    let sd = (mus.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / 100.0).sqrt();
    assert!((r.mu_ref - mean).abs() < 1e-12 && (r.sigma_ref - sd).abs() < 1e-12);
}

#[test]
fn nearest_rank_matches_oracle_on_every_size() {
    let mut rng = SplitMix64::new(11);
    for n in 1..=150 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        let p01 = sorted_percentile(&v, 1.0);
        let p99 = sorted_percentile(&v, 99.0);
        v.sort_by(f64::total_cmp);
        assert_eq!(nearest_rank(&v, 1), p01, "n = {n}");
        assert_eq!(nearest_rank(&v, 99), p99, "n = {n}");
    }
}

#[test]
fn raw_and_normalised_examples() {
    let summaries = [
        AttentionSummary { mu: 0.45_f64, sigma: 0.0 },
        AttentionSummary { mu: 0.55, sigma: 0.0 },
    ];
    let r = calibrate(&summaries, FxStatistic::Mean).unwrap();
    assert!((r.mu_ref - 0.5).abs() < 1e-15 && (r.sigma_ref - 0.05).abs() < 1e-15);
    let g = score_global(&AttentionSummary { mu: 0.6, sigma: 0.0 }, &r);
    assert!((g.raw - 2.0).abs() < 1e-12);
    // Both calibration samples sit one σ out, so p01 = p99 = 1.
    assert!((r.raw_p01 - 1.0).abs() < 1e-12 && (r.raw_p99 - 1.0).abs() < 1e-12);
    assert_eq!(g.normalised, 1.0);
    assert_eq!(normalise_raw(0.5, &r), 0.0);
}
