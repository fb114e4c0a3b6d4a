use std::fs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use specxai::error::{Error, FormatError};
use specxai::io::{load_model, read_tensor, save_model, write_tensor, Dtype};
use specxai::linalg::Tensor;
use specxai::zoo::{random_cnn, random_input, random_mlp, Activation};

fn format_err(e: Error) -> FormatError {
    match e {
        Error::Format(f) => f,
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn cnn_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = random_cnn(&mut rng, 6, 2, 3).unwrap();
    let p1 = dir.path().join("a.sxm");
    save_model(&model, &p1).unwrap();
    let loaded = load_model(&p1).unwrap();
    let p2 = dir.path().join("b.sxm");
    save_model(&loaded, &p2).unwrap();
    assert_eq!(
        fs::read(dir.path().join("a.bin")).unwrap(),
        fs::read(dir.path().join("b.bin")).unwrap()
    );
    let m1 = fs::read_to_string(&p1).unwrap().replace("\"a.bin\"", "\"b.bin\"");
    assert_eq!(m1, fs::read_to_string(&p2).unwrap());

    // The stored model is a fixed point: forward outputs agree exactly.
    let again = load_model(&p2).unwrap();
    for _ in 0..10 {
        let x = random_input(&mut rng, model.input_shape());
        assert_eq!(loaded.predict(&x).unwrap(), again.predict(&x).unwrap());
    }
}

#[test]
fn truncated_blob_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = random_mlp(&mut rng, &[3, 4, 2], Activation::Relu, true).unwrap();
    let p = dir.path().join("m.sxm");
    save_model(&model, &p).unwrap();
    let blob = dir.path().join("m.bin");
    let bytes = fs::read(&blob).unwrap();
    fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap();
    assert!(matches!(
        format_err(load_model(&p).unwrap_err()),
        FormatError::CorruptBlob(_)
    ));

    let mut flipped = bytes.clone();
    flipped[3] ^= 0x40;
    fs::write(&blob, &flipped).unwrap();
    let err = load_model(&p).unwrap_err();
    assert_eq!(err.exit_code(), 5);
    assert!(matches!(format_err(err), FormatError::CorruptBlob(_)));
}

#[test]
fn version_and_shape_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = random_mlp(&mut rng, &[3, 4, 2], Activation::Relu, false).unwrap();
    let p = dir.path().join("m.sxm");
    save_model(&model, &p).unwrap();
    let text = fs::read_to_string(&p).unwrap();

    fs::write(&p, text.replace("\"format_version\": 1", "\"format_version\": 2")).unwrap();
    assert!(matches!(
        format_err(load_model(&p).unwrap_err()),
        FormatError::VersionMismatch { found: 2, expected: 1 }
    ));

    let bad_input = text.replace("\"input_shape\": [\n    3\n  ]", "\"input_shape\": [\n    5\n  ]");
    assert_ne!(bad_input, text);
    fs::write(&p, bad_input).unwrap();
    assert!(matches!(
        format_err(load_model(&p).unwrap_err()),
        FormatError::InvalidShapeChain(_)
    ));
}

#[test]
fn hand_written_manifest_loads() {
    // What an external exporter would produce: one dense layer, weights [[2, 0], [0, -1]]
    // and bias [1, 1] stored back to back.
    let dir = tempfile::tempdir().unwrap();
    let values: [f32; 6] = [2.0, 0.0, 0.0, -1.0, 1.0, 1.0];
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(dir.path().join("w.bin"), &bytes).unwrap();
    use sha2_check::hex_sha256;
    let manifest = format!(
        r#"{{
  "format_version": 1,
  "name": "handmade",
  "input_shape": [2],
  "dtype": "f32",
  "blob": "w.bin",
  "blob_len": 6,
  "sha256": "{}",
  "layers": [
    {{"kind": "dense", "weight": {{"shape": [2, 2], "data": {{"offset": 0, "len": 4}}}},
      "bias": {{"offset": 4, "len": 2}}, "out_shape": null}},
    {{"kind": "relu"}}
  ]
}}"#,
        hex_sha256(&bytes)
    );
    let p = dir.path().join("handmade.sxm");
    fs::write(&p, manifest).unwrap();
    let model = load_model(&p).unwrap();
    let y = model.predict(&Tensor::vector(vec![1.0, 3.0]).unwrap()).unwrap();
    assert_eq!(y.data(), &[3.0, 0.0]);
}

#[test]
fn reference_out_of_range_is_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = random_mlp(&mut rng, &[2, 2], Activation::None, false).unwrap();
    let p = dir.path().join("m.sxm");
    save_model(&model, &p).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    fs::write(&p, text.replace("\"offset\": 0", "\"offset\": 3")).unwrap();
    assert!(matches!(
        format_err(load_model(&p).unwrap_err()),
        FormatError::CorruptBlob(_)
    ));
}

#[test]
fn tensor_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let t = Tensor::new(vec![2, 2, 1], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    let p = dir.path().join("t.sxt");
    write_tensor(&p, &t, Dtype::F32).unwrap();
    assert_eq!(read_tensor(&p).unwrap(), t);
    let bytes = fs::read(&p).unwrap();
    assert_eq!(&bytes[..5], b"SXT\x01\x00");
}

#[test]
fn missing_file_is_io_error() {
    let err = load_model(std::path::Path::new("/nonexistent/m.sxm")).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

mod sha2_check {
    /// SHA-256 via the system's `sha256sum`, independent of the crate's hashing.
    pub fn hex_sha256(bytes: &[u8]) -> String {
        use std::io::Write;
        use std::process::{Command, Stdio};
        let mut child = Command::new("sha256sum")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .expect("sha256sum available");
        child.stdin.take().unwrap().write_all(bytes).unwrap();
        let out = child.wait_with_output().unwrap();
        String::from_utf8(out.stdout)
            .unwrap()
            .split_whitespace()
            .next()
            .unwrap()
            .to_string()
    }
}
