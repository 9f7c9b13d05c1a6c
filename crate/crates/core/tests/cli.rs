use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use interprim::io::{read_spectrum, read_value_table_file, SpectrumFile};
use serde_json::json;

fn interprim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_interprim"))
        .args(args)
        .current_dir(cwd)
        .env_remove("INTERPRIM_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn planted_pair(dir: &Path) {
    let out = interprim(&["synth", "--kind", "planted", "--seed", "3", "--n", "6", "--out", "data"], dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_masks_lists_every_subset() {
    let dir = tempfile::tempdir().unwrap();
    let out = interprim(&["gen-masks", "--n", "3", "--out", "masks.json"], dir.path());
    assert_eq!(code(&out), 0);
    let spec: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("masks.json")).unwrap()).unwrap();
    assert_eq!(spec["masks"].as_array().unwrap().len(), 8);
}

#[test]
fn toy_table_has_six_harsanyi_dividends() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&interprim(&["synth", "--kind", "toy", "--out", "data"], dir.path())), 0);
    let out = interprim(&["harsanyi", "data/toy.json", "--out", "h"], dir.path());
    assert_eq!(code(&out), 0);
    let lines = stdout(&out).lines().filter(|l| l.starts_with("AND ")).count();
    assert_eq!(lines, 6);
    let spectrum = read_spectrum(dir.path().join("h/spectrum_1.json")).unwrap();
    assert_eq!(spectrum.or_effects.max_abs(), 0.0);
}

#[test]
fn extract_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    planted_pair(dir.path());
    let out = interprim(
        &["extract", "data/model1.json", "data/model2.json", "--iters", "300", "--out", "run"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "spectrum_1.json",
        "spectrum_2.json",
        "primitives_1.json",
        "decomposition.json",
        "trace.jsonl",
        "report.json",
        "sparsity.csv",
        "order_profile.csv",
        "metrics.csv",
    ] {
        assert!(dir.path().join("run").join(name).exists(), "missing {name}");
    }
    let verify = |spectrum: &str| {
        interprim(
            &[
                "verify",
                "--table",
                "data/model1.json",
                "--spectrum",
                spectrum,
                "--decomposition",
                "run/decomposition.json",
                "--omega",
                "run/primitives_1.json",
            ],
            dir.path(),
        )
    };
    let ok = verify("run/spectrum_1.json");
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(stdout(&ok).contains("truncated matching"));

    let mut file: SpectrumFile =
        serde_json::from_slice(&fs::read(dir.path().join("run/spectrum_1.json")).unwrap()).unwrap();
    file.and_effects[5] += 1e-3;
    fs::write(dir.path().join("bad.json"), serde_json::to_vec(&file).unwrap()).unwrap();
    assert_eq!(code(&verify("bad.json")), 4);
}

#[test]
fn missing_input_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = interprim(&["harsanyi", "nope.json"], dir.path());
    assert_eq!(code(&out), 2);
    assert_eq!(code(&interprim(&["extract", "--bogus-flag", "x.json"], dir.path())), 2);
}

#[test]
fn joint_mode_needs_two_tables() {
    let dir = tempfile::tempdir().unwrap();
    planted_pair(dir.path());
    let out = interprim(&["extract", "data/model1.json", "--iters", "10"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn overflowing_table_is_an_optimization_error() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<f64> = (0..8).map(|k| if k % 3 == 0 { 1.7e308 } else { -1.7e308 }).collect();
    let table = json!({ "format_version": 1, "n": 3, "model_id": "huge", "values": values });
    fs::write(dir.path().join("huge.json"), table.to_string()).unwrap();
    let out = interprim(
        &["extract", "huge.json", "--mode", "single_sparse", "--iters", "10", "--out", "o"],
        dir.path(),
    );
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    planted_pair(dir.path());
    fs::write(dir.path().join("run.toml"), "iters = 7\nmode = \"single_sparse\"\nout = \"from_config\"\n").unwrap();
    let out = interprim(
        &[
            "--config",
            "run.toml",
            "extract",
            "data/model1.json",
            "data/model2.json",
            "--iters",
            "500",
            "--out",
            "from_flag",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("mode=single_sparse") && stderr.contains("iters=7"), "{stderr}");
    assert!(dir.path().join("from_config/report.json").exists());
    assert!(!dir.path().join("from_flag").exists());

    fs::write(dir.path().join("typo.toml"), "itters = 7\n").unwrap();
    let out = interprim(&["--config", "typo.toml", "harsanyi", "data/model1.json"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn env_sets_default_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_interprim"))
        .args(["synth", "--kind", "toy"])
        .current_dir(dir.path())
        .env("INTERPRIM_OUT_DIR", "env_out")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let table = read_value_table_file(dir.path().join("env_out/toy.json")).unwrap();
    assert_eq!(table.n, 5);
}

#[test]
fn variance_and_stability_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = interprim(&["variance", "--n", "3", "--trials", "2000", "--out", "var.csv"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("var.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    planted_pair(dir.path());
    let out = interprim(
        &[
            "stability",
            "data/model1.json",
            "--mode",
            "single_sparse",
            "--init",
            "gaussian:1",
            "--iters",
            "200",
            "--trials",
            "3",
            "--out",
            "stab.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(dir.path().join("stab.csv")).unwrap().lines().count() > 1);
}
