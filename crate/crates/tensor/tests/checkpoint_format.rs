//! Checkpoint round-trip and corruption handling.

use std::fs;

use tensor::checkpoint::{Checkpoint, CheckpointError};
use tensor::rng::{randn, stream};
use tensor::Tensor;

fn sample() -> Checkpoint {
    let mut rng = stream(7, "ck");
    let mut ck = Checkpoint::new();
    ck.set_meta("p_uncond", 0.1);
    ck.set_meta("kind", "denoiser");
    ck.push_tensor("conv1.w", randn(&[4, 3, 3, 3], &mut rng));
    ck.push_tensor("conv1.b", Tensor::zeros(&[4]));
    ck.push_tensor("odd", Tensor::from_vec(vec![f64::MIN_POSITIVE, -0.0, 1e300]));
    ck
}

#[test]
fn roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ssel");
    let ck = sample();
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(ck.meta, back.meta);
    assert_eq!(ck.tensors.len(), back.tensors.len());
    for ((n1, t1), (n2, t2)) in ck.tensors.iter().zip(&back.tensors) {
        assert_eq!(n1, n2);
        assert_eq!(t1.shape(), t2.shape());
        let bits1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
        let bits2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits1, bits2);
    }
    assert_eq!(ck.digest(), back.digest());
}

#[test]
fn corrupted_magic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ssel");
    sample().save(&path).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    bytes[0] = b'X';
    fs::write(&path, &bytes).unwrap();
    let err = Checkpoint::load(&path).unwrap_err();
    assert!(matches!(err, CheckpointError::BadMagic));
    assert!(err.to_string().contains("not a checkpoint"));
}

#[test]
fn version_mismatch_names_both_versions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ssel");
    sample().save(&path).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
    fs::write(&path, &bytes).unwrap();
    let err = Checkpoint::load(&path).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, CheckpointError::Version { found: 99, .. }));
    assert!(msg.contains("99") && msg.contains('1'), "{msg}");
}

#[test]
fn truncation_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ssel");
    sample().save(&path).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 11]).unwrap();
    let err = Checkpoint::load(&path).unwrap_err();
    assert!(matches!(err, CheckpointError::Truncated(_)), "{err}");
}

#[test]
fn trailing_bytes_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ssel");
    sample().save(&path).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    bytes.push(0);
    fs::write(&path, &bytes).unwrap();
    let err = Checkpoint::load(&path).unwrap_err();
    assert!(matches!(err, CheckpointError::Trailing));
}
