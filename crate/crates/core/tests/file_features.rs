use std::path::Path;

use vaas_core::features::{fetch_features, ProviderMode, ToyConfig};
use vaas_core::fx::aggregate_attention;
use vaas_core::image::{save_image, Image};
use vaas_core::manifest::{load_manifest, DatasetManifest};
use vaas_core::rng::SplitMix64;
use vaas_core::tensor::{load_tensor, save_tensor, Tensor};
use vaas_core::Error;

/// Row-stochastic `[layers, heads, t, t]` attention with random rows.
fn random_attention(layers: usize, heads: usize, t: usize, seed: u64) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    let mut data = Vec::with_capacity(layers * heads * t * t);
    for _ in 0..layers * heads * t {
        let row: Vec<f64> = (0..t).map(|_| 0.1 + rng.next_f64()).collect();
        let sum: f64 = row.iter().sum();
        data.extend(row.iter().map(|v| (v / sum) as f32));
    }
    Tensor::new(vec![layers, heads, t, t], data).unwrap()
}

fn random_embeddings(m: usize, d: usize, seed: u64) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    Tensor::new(vec![m, d], (0..m * d).map(|_| rng.next_gaussian() as f32).collect()).unwrap()
}

fn write_manifest(dir: &Path, embeddings_shape: (usize, usize)) -> DatasetManifest {
    save_image(&Image::from_fn(224, 224, |_, _| [0.2, 0.2, 0.2]), &dir.join("a.png")).unwrap();
    save_tensor(&random_attention(4, 12, 197, 1), &dir.join("a_attn.vast")).unwrap();
    save_tensor(
        &random_embeddings(embeddings_shape.0, embeddings_shape.1, 2),
        &dir.join("a_emb.vast"),
    )
    .unwrap();
    let text = r#"{
        "meta": {"image_size": [224, 224], "patch_size": 32, "embed_dim": 256},
        "samples": [
            {"id": "a", "image_path": "a.png", "label": "authentic",
             "attention_path": "a_attn.vast", "embeddings_path": "a_emb.vast"},
            {"id": "b", "image_path": "a.png", "label": "tampered"}
        ]
    }"#;
    std::fs::write(dir.join("manifest.json"), text).unwrap();
    load_manifest(&dir.join("manifest.json")).unwrap()
}

#[test]
fn exporter_shaped_tensors_load_and_drop_class_token() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), (49, 256));
    let b = fetch_features(&m, "a", ProviderMode::File, &ToyConfig::default()).unwrap();
    assert_eq!(b.attention.shape(), &[4, 12, 197, 197]);
    assert_eq!(b.embeddings.shape(), &[49, 256]);
    assert_eq!(b.grid, (7, 7));
    let map = aggregate_attention::<f64>(&b, 4).unwrap();
    assert_eq!(map.source_dims, (14, 14));
    assert_eq!(map.values.dims(), (224, 224));
}

#[test]
fn embedding_width_mismatch_is_a_shape_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), (49, 128));
    let err = fetch_features(&m, "a", ProviderMode::File, &ToyConfig::default()).unwrap_err();
    assert!(matches!(err, Error::ShapeMismatch(_)), "{err}");
}

#[test]
fn unknown_id_and_missing_paths() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), (49, 256));
    let cfg = ToyConfig::default();
    assert!(matches!(
        fetch_features(&m, "zzz", ProviderMode::Toy, &cfg),
        Err(Error::NotFound(_))
    ));
    assert!(matches!(
        fetch_features(&m, "b", ProviderMode::File, &cfg),
        Err(Error::MissingPath { what: "attention_path", .. })
    ));
}

#[test]
fn toy_mode_through_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), (49, 256));
    let cfg = ToyConfig::default();
    let a = fetch_features(&m, "b", ProviderMode::Toy, &cfg).unwrap();
    let b = fetch_features(&m, "b", ProviderMode::Toy, &cfg).unwrap();
    assert_eq!(a.embeddings.shape(), &[49, 256]);
    assert_eq!(a.attention.shape(), &[1, 1, 196, 196]);
    assert!(a.embeddings.bit_eq(&b.embeddings) && a.attention.bit_eq(&b.attention));

    let narrow = ToyConfig { embed_dim: 64, ..cfg };
    assert!(matches!(
        fetch_features(&m, "b", ProviderMode::Toy, &narrow),
        Err(Error::Config(_))
    ));
}

#[test]
fn non_stochastic_attention_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), (49, 256));
    let bad = Tensor::new(vec![1, 1, 197, 197], vec![0.5; 197 * 197]).unwrap();
    save_tensor(&bad, &dir.path().join("a_attn.vast")).unwrap();
    assert!(fetch_features(&m, "a", ProviderMode::File, &ToyConfig::default()).is_err());
}

/// Writes a tensor with an independent little-endian encoder in Python and
/// reads it back here, and the reverse. Skipped when no interpreter is found.
#[test]
fn python_writer_and_reader_agree() {
    let Ok(probe) = std::process::Command::new("python3").arg("--version").output() else {
        eprintln!("python3 not available; skipping");
        return;
    };
    if !probe.status.success() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let from_py = dir.path().join("py.vast");
    let from_rs = dir.path().join("rs.vast");
    let t = Tensor::new(vec![2, 3], vec![1.5, -2.0, 0.0, 3.25, 1e-3, -7.0]).unwrap();
    save_tensor(&t, &from_rs).unwrap();
    let script = r#"
import struct, sys
out, inp = sys.argv[1], sys.argv[2]
vals = [1.5, -2.0, 0.0, 3.25, 1e-3, -7.0]
with open(out, "wb") as f:
    f.write(b"VAST" + bytes([1, 1, 2, 0]) + struct.pack("<QQ", 2, 3) + struct.pack("<6f", *vals))
data = open(inp, "rb").read()
assert data[:4] == b"VAST" and data[4:8] == bytes([1, 1, 2, 0]), data[:8]
assert struct.unpack("<QQ", data[8:24]) == (2, 3)
got = struct.unpack("<6f", data[24:])
assert all(abs(a - b) <= 1e-7 * max(1.0, abs(b)) for a, b in zip(got, vals)), got
assert len(data) == 8 + 16 + 24
"#;
    let status = std::process::Command::new("python3")
        .arg("-c")
        .arg(script)
        .arg(&from_py)
        .arg(&from_rs)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(load_tensor(&from_py).unwrap().bit_eq(&t));
}
