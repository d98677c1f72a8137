//! End-to-end tests of the `oadx` binary: container outputs, dataset naming,
//! determinism, exit codes and report formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oadx_core::dataio::{write_container, Compression, Container, DataBuf, Dataset};

fn oadx() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oadx"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn oadx");
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output()
        .expect("spawn oadx")
        .status
        .code()
        .unwrap_or(-1)
}

struct Fixture {
    #[allow(dead_code)]
    dir: tempfile::TempDir,
    maps: PathBuf,
    raw: PathBuf,
}

/// Two phantoms forwarded through the semi circle array, shared by the
/// recon/eval tests.
fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("maps.oadx");
    let raw = dir.path().join("raw.oadx");
    run_ok(
        oadx()
            .args(["phantom", "--n", "2", "--seed", "3", "--out"])
            .arg(&maps),
    );
    run_ok(
        oadx()
            .args(["forward", "--in"])
            .arg(&maps)
            .args(["--array", "semi_circle", "--out"])
            .arg(&raw),
    );
    Fixture { dir, maps, raw }
}

#[test]
fn phantom_determinism_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.oadx");
    let b = dir.path().join("b.oadx");
    run_ok(
        oadx()
            .args(["phantom", "--n", "3", "--seed", "7", "--out"])
            .arg(&a),
    );
    run_ok(
        oadx()
            .args(["phantom", "--n", "3", "--seed", "7", "--out"])
            .arg(&b),
    );
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let mut c = Container::open(&a).unwrap();
    assert_eq!(c.dataset_names(), vec!["ground_truth", "labels"]);
    let info = c.dataset_info("ground_truth").unwrap();
    assert_eq!(info.shape, vec![3, 256, 256]);
    for i in 0..3 {
        let labels = c.read_record("labels", i).unwrap();
        assert!(labels.as_u8().unwrap().iter().all(|&v| v <= 2));
    }
}

#[test]
fn phantom_zero_count_yields_valid_empty_container() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty.oadx");
    run_ok(
        oadx()
            .args(["phantom", "--n", "0", "--seed", "1", "--out"])
            .arg(&out),
    );
    let c = Container::open(&out).unwrap();
    let info = c.dataset_info("ground_truth").unwrap();
    assert_eq!(info.n_records(), 0);
}

#[test]
fn forward_shapes_and_metadata() {
    let fx = fixture();
    let mut c = Container::open(&fx.raw).unwrap();
    let info = c.dataset_info("sc_raw").unwrap();
    assert_eq!(info.shape, vec![2, 2030, 256]);
    assert_eq!(c.metadata().get("array").unwrap(), "semi_circle");
    assert_eq!(c.metadata().get("sos_mps").unwrap(), "1510");
    // Signals are not identically zero.
    let rec = c.read_record("sc_raw", 0).unwrap();
    assert!(rec.as_f32().unwrap().iter().any(|&v| v != 0.0));
}

#[test]
fn forward_of_zero_maps_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("zeros.oadx");
    write_container(
        &maps,
        &[Dataset {
            name: "ground_truth".into(),
            shape: vec![1, 256, 256],
            compression: Compression::Deflate,
            data: DataBuf::F32(vec![0.0; 256 * 256]),
        }],
        &[("pitch_m".to_string(), "0.0001".to_string())]
            .into_iter()
            .collect(),
    )
    .unwrap();
    let raw = dir.path().join("raw.oadx");
    run_ok(
        oadx()
            .args(["forward", "--in"])
            .arg(&maps)
            .args(["--array", "linear", "--out"])
            .arg(&raw),
    );
    let mut c = Container::open(&raw).unwrap();
    let rec = c.read_record("linear_raw", 0).unwrap();
    assert!(rec.as_f32().unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn recon_dataset_naming_and_full_mask_identity() {
    let fx = fixture();
    let dir = fx.dir.path();

    let none = dir.join("none.oadx");
    let full = dir.join("full.oadx");
    let ss64 = dir.join("ss64.oadx");
    run_ok(
        oadx()
            .args(["recon", "--in"])
            .arg(&fx.raw)
            .args(["--array", "semi_circle", "--mask", "none", "--out"])
            .arg(&none),
    );
    // Keeping all 256 of 256 elements is the identity acquisition.
    run_ok(
        oadx()
            .args(["recon", "--in"])
            .arg(&fx.raw)
            .args(["--array", "semi_circle", "--mask", "sparse:256", "--out"])
            .arg(&full),
    );
    run_ok(
        oadx()
            .args(["recon", "--in"])
            .arg(&fx.raw)
            .args(["--array", "semi_circle", "--mask", "sparse:64", "--out"])
            .arg(&ss64),
    );

    let mut c_none = Container::open(&none).unwrap();
    let mut c_full = Container::open(&full).unwrap();
    let mut c_ss = Container::open(&ss64).unwrap();
    assert_eq!(c_none.dataset_names(), vec!["sc_BP"]);
    assert_eq!(c_full.dataset_names(), vec!["sc_BP"]);
    assert_eq!(c_ss.dataset_names(), vec!["sc_ss64_BP"]);

    let (a, _) = c_none.read_all("sc_BP").unwrap();
    let (b, _) = c_full.read_all("sc_BP").unwrap();
    assert_eq!(a, b);
    let (s, shape) = c_ss.read_all("sc_ss64_BP").unwrap();
    assert_eq!(shape, vec![2, 256, 256]);
    assert_ne!(a, s);
}

#[test]
fn linear_part_recon_is_named_linear_bp() {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("maps.oadx");
    let raw = dir.path().join("raw.oadx");
    let bp = dir.path().join("bp.oadx");
    run_ok(
        oadx()
            .args(["phantom", "--n", "1", "--seed", "5", "--out"])
            .arg(&maps),
    );
    run_ok(
        oadx()
            .args(["forward", "--in"])
            .arg(&maps)
            .args(["--array", "multisegment", "--out"])
            .arg(&raw),
    );
    run_ok(
        oadx()
            .args(["recon", "--in"])
            .arg(&raw)
            .args(["--array", "multisegment", "--mask", "linear_part", "--out"])
            .arg(&bp),
    );
    let c = Container::open(&bp).unwrap();
    assert_eq!(c.dataset_names(), vec!["linear_BP"]);
}

#[test]
fn eval_identical_inputs_and_seg_metrics() {
    let fx = fixture();
    let dir = fx.dir.path();
    let bp = dir.join("bp.oadx");
    run_ok(
        oadx()
            .args(["recon", "--in"])
            .arg(&fx.raw)
            .args(["--array", "semi_circle", "--mask", "sparse:32", "--out"])
            .arg(&bp),
    );

    // Identical pred/target: zero errors, infinite PSNR.
    let report = dir.join("report");
    run_ok(
        oadx()
            .args(["eval", "--pred"])
            .arg(&bp)
            .arg("--target")
            .arg(&bp)
            .args(["--out"])
            .arg(&report),
    );
    let csv = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("sample_id,metric,value\n"));
    assert!(csv.contains("0,mae,0"));
    assert!(csv.contains("1,psnr,inf"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["mae"]["mean"], 0.0);
    assert_eq!(json["psnr"]["n_inf"], 2);
    assert_eq!(json["ssim"]["mean"], 1.0);

    // Segmentation metrics against the phantom's own labels: three columns
    // per class, perfect agreement.
    let seg = dir.join("seg");
    run_ok(
        oadx()
            .args(["eval", "--pred"])
            .arg(&fx.maps)
            .args(["--pred-dataset", "labels", "--labels"])
            .arg(&fx.maps)
            .args(["--metrics", "dice,iou,hd95", "--out"])
            .arg(&seg),
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("seg.json")).unwrap()).unwrap();
    for class in ["c1", "c2"] {
        assert_eq!(json[format!("dice_{class}")]["mean"], 1.0);
        assert_eq!(json[format!("iou_{class}")]["mean"], 1.0);
        assert_eq!(json[format!("hd95_{class}")]["mean"], 0.0);
    }
}

#[test]
fn bench_report_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.json");
    run_ok(
        oadx()
            .args([
                "bench",
                "--grid-n",
                "64",
                "--repeat",
                "5",
                "--threads",
                "2",
                "--array",
                "linear",
                "--out",
            ])
            .arg(&out),
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(json["timings_ms"].as_array().unwrap().len(), 5);
    assert!(json["median_ms"].as_f64().unwrap() > 0.0);
    assert!(json["pixels_channels_per_s"].as_f64().unwrap() > 0.0);
    assert!(json["image_crc32"].as_str().is_some());
}

#[test]
fn export_png_and_pgm() {
    let fx = fixture();
    let dir = fx.dir.path();
    let png = dir.join("map.png");
    let pgm = dir.join("map.pgm");
    run_ok(
        oadx()
            .args(["export-png", "--in"])
            .arg(&fx.maps)
            .args(["--dataset", "ground_truth", "--index", "1", "--out"])
            .arg(&png),
    );
    run_ok(
        oadx()
            .args(["export-png", "--in"])
            .arg(&fx.maps)
            .args(["--dataset", "ground_truth", "--out"])
            .arg(&pgm),
    );
    let png_bytes = std::fs::read(&png).unwrap();
    assert_eq!(&png_bytes[1..4], b"PNG");
    let pgm_bytes = std::fs::read(&pgm).unwrap();
    assert!(pgm_bytes.starts_with(b"P5\n256 256\n255\n"));
    assert_eq!(pgm_bytes.len(), 15 + 256 * 256);
}

#[test]
fn split_command_writes_canonical_sets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("split.json");
    run_ok(oadx().args(["split", "--kind", "swfd", "--out"]).arg(&out));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(json["train"].as_array().unwrap().len(), 8);
    assert_eq!(json["val"], serde_json::json!([9]));
    assert_eq!(json["test"], serde_json::json!([10, 11, 12, 13, 14]));
    // A mismatched population is a validation error.
    let bad = oadx()
        .args(["split", "--kind", "scd", "--slices", "123", "--out"])
        .arg(dir.path().join("bad.json"))
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.oadx");
    let out = dir.path().join("out.oadx");

    // Validation errors → 1.
    assert_eq!(
        exit_code(
            oadx()
                .args(["forward", "--in"])
                .arg(&missing)
                .args(["--array", "bogus", "--out"])
                .arg(&out)
        ),
        1
    );
    // I/O errors → 2.
    assert_eq!(
        exit_code(
            oadx()
                .args(["recon", "--in"])
                .arg(&missing)
                .args(["--array", "semi_circle", "--out"])
                .arg(&out)
        ),
        2
    );
}

#[test]
fn config_sidecars_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("m.oadx");
    run_ok(
        oadx()
            .args(["phantom", "--n", "1", "--seed", "9", "--out"])
            .arg(&maps),
    );
    let sidecar = Path::new(&format!("{}.config.json", maps.display())).to_path_buf();
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sidecar).unwrap()).unwrap();
    assert_eq!(json["command"], "phantom");
    assert_eq!(json["config"]["seed"], 9);
    assert_eq!(json["config"]["n"], 1);
}
