use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oesnn_harness::manifest::sha256_hex;
use oesnn_harness::{run_experiment, Experiment, ExperimentConfig, Manifest};

fn oesnn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oesnn"))
        .args(args)
        .current_dir(cwd)
        .env_remove("MNIST_DIR")
        .output()
        .unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn fig5_recipe_writes_artifacts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = oesnn(&["fig5", "--out", "run"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = dir.path().join("run");
    let m = Manifest::load(&run).unwrap();
    assert_eq!(m.experiment, "fig5");
    assert_eq!(m.summary["group_counts"], serde_json::json!([3, 1, 1, 0]));
    let config = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert_eq!(m.config_sha256, sha256_hex(config.as_bytes()));
    for f in &m.outputs {
        let bytes = std::fs::read(run.join(&f.path)).unwrap();
        assert_eq!(f.sha256, sha256_hex(&bytes), "{}", f.path);
    }
    let csv = std::fs::read_to_string(run.join("group_counts.csv")).unwrap();
    assert_eq!(
        csv,
        "group,input_spikes,output_spikes\r\n1,14,3\r\n2,5,1\r\n3,3,1\r\n4,1,0\r\n"
    );
    let raster = std::fs::read_to_string(run.join("raster.svg")).unwrap();
    assert_eq!(
        raster.matches("class=\"spike\"").count(),
        14 + 5 + 3 + 1 + 5
    );
}

#[test]
fn same_config_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(Experiment::Fig6);
    cfg.output_dir = dir.path().to_path_buf();
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.config_sha256, b.config_sha256);
    assert_eq!(a.outputs, b.outputs);
    assert!(a.timings.contains_key("simulation_seconds"));
}

#[test]
fn init_prints_a_loadable_config() {
    let dir = tempfile::tempdir().unwrap();
    for e in Experiment::ALL {
        let out = oesnn(&["init", e.as_str()], dir.path());
        assert!(out.status.success());
        let cfg = ExperimentConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
        assert_eq!(cfg.experiment, e);
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "experiment = \"fig5\"\nbogus_key = 1\n",
    )
    .unwrap();
    assert_eq!(
        oesnn(&["run", "bad.toml"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(
        oesnn(&["no-such-recipe"], dir.path()).status.code(),
        Some(2)
    );
    // stochastic recipes need an explicit seed
    std::fs::write(dir.path().join("ann.toml"), "experiment = \"train-ann\"\n").unwrap();
    let out = oesnn(&["run", "ann.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn data_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("mnist");
    std::fs::create_dir(&data).unwrap();
    std::fs::copy(
        fixture("truncated-images-idx3-ubyte"),
        data.join("train-images-idx3-ubyte"),
    )
    .unwrap();
    std::fs::copy(
        fixture("tiny-labels-idx1-ubyte"),
        data.join("train-labels-idx1-ubyte"),
    )
    .unwrap();
    std::fs::write(
        dir.path().join("ann.toml"),
        "experiment = \"train-ann\"\nseed = 1\n[mnist]\ndir = \"mnist\"\n",
    )
    .unwrap();
    let out = oesnn(&["run", "ann.toml"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte 16"));
}

#[test]
fn numerical_errors_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("sim.toml"),
        "experiment = \"simulate-neuron\"\n[stimulus]\ndt_s = 1.0\n",
    )
    .unwrap();
    let out = oesnn(&["run", "sim.toml"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
