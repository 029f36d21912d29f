use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mvf(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvf"))
        .args(args)
        .current_dir(dir)
        .env_remove("MVF_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, kind: &str) -> String {
    let path = dir.join(format!("{kind}.toml"));
    fs::write(
        &path,
        format!(
            "kind = \"{kind}\"\nn = [1000, 2000, 4000]\nseeds = [1]\n[truth]\nm = 4\nknots = 3\nseed = 2\n[noise]\nkind = \"uniform\"\nlevel = 0.25\n"
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_then_fit_saved_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "single_fit");
    let out = mvf(&["simulate", "--config", &cfg, "--n", "1500", "--out", "sim"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = dir.path().join("sim/data.csv");
    assert!(data.exists() && dir.path().join("sim/data.csv.meta.toml").exists());
    assert_eq!(fs::read_to_string(&data).unwrap().lines().count(), 1501);

    let data = data.to_str().unwrap();
    for cmd in ["fit-point", "fit-global", "fit-kernel"] {
        let out = mvf(&[cmd, "--config", &cfg, "--data", data, "--out", cmd], dir.path());
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains("h = "), "{cmd}");
    }
    assert!(dir.path().join("fit-point/pointwise.block0.txt").exists());
    assert!(dir.path().join("fit-point/pointwise.diagnostics.toml").exists());
    assert!(dir.path().join("fit-global/tile0.block1.txt").exists());
    assert!(dir.path().join("fit-kernel/kernel_t0.txt").exists());

    let out = mvf(&["select", "--config", &cfg, "--data", data, "--out", "sel"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sel/selection.csv")).unwrap();
    assert!(csv.starts_with("h,ell,epsilon,criterion,selected\n"));
}

#[test]
fn simulated_fits_report_risk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "single_fit");
    let out = mvf(&["fit-global", "--config", &cfg, "--n", "3000", "--out", "g"], dir.path());
    assert!(out.status.success());
    assert!(stdout(&out).contains("integrated risk"));
}

#[test]
fn sweep_writes_csv_manifest_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "pointwise_sweep");
    let out = mvf(&["sweep", "--config", &cfg, "--seed", "1,2", "--plots"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("mvf-runs/sweep");
    let csv = fs::read_to_string(run.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("n,risk_mean,risk_std,upper_rate,lower_rate\n"));
    assert_eq!(csv.lines().count(), 4);
    assert!(run.join("manifest.toml").exists());
    assert!(run.join("heatmaps/estimate_n4000.png").exists());
    assert!(stdout(&out).contains("log-log slope"));
}

#[test]
fn output_root_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "integrated_sweep");
    let out = Command::new(env!("CARGO_BIN_EXE_mvf"))
        .args(["sweep", "--config", &cfg, "--n", "1000,2000,3000"])
        .current_dir(dir.path())
        .env("MVF_OUTPUT_ROOT", dir.path().join("root"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("root/sweep/sweep.csv").exists());
}

#[test]
fn selection_experiment_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "model_selection");
    let out = mvf(&["select", "--config", &cfg, "--n", "2000", "--out", "s"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("n,seed,selected_h"));
    assert!(dir.path().join("s/selection_n2000_seed1.csv").exists());
}

#[test]
fn failures_exit_nonzero_with_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "pointwise_sweep");

    let out = mvf(&["sweep", "--config", &cfg, "--n", "4000,2000"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error [Config]"));

    let out = mvf(&["fit-point", "--data", "missing.csv"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error [Io]"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "kind = \"pointwise_sweep\"\nunknown_key = 3\n").unwrap();
    let out = mvf(&["sweep", "--config", bad.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error [Config]"));

    let single = small_config(dir.path(), "single_fit");
    let out = mvf(&["sweep", "--config", &single], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a sweep"));
}

#[test]
fn shipped_example_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let example = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
    let out = mvf(
        &["simulate", "--config", example.to_str().unwrap(), "--n", "500", "--out", "x"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
