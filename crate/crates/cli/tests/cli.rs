use proptest::prelude::*;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nlmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlmd"))
        .args(args)
        .env_remove("NLMD_THREADS")
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    nlmd(&args)
}

const SMALL: &str = r#"
schema_version = 1
[grids]
omega_max = 4.0
n_omega = 4
k_extent = [1.0, 1.0, 1.0]
k_counts = [2, 1, 1]
[grids.kernel]
positive_samples = 32
[medium.electric.rank1]
type = "isotropic-lorentzian"
strength = 0.05
center = 2.0
width = 0.5
[oracle]
periods = 1.0
drives = 1
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn every_command_succeeds_on_the_shipped_lorentzian_config() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["validate", "susceptibility", "solve", "oracle", "sample"] {
        let o = run(cmd, &config("lorentzian.toml"), &dir.path().join(cmd), &[]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(dir.path().join(cmd).join("manifest.toml").exists());
    }
}

#[test]
fn solve_outputs_are_bytewise_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run("solve", &config("nonlinear.toml"), &a, &["--seed", "5"]).status.success());
    assert!(run("solve", &config("nonlinear.toml"), &b, &["--seed", "5", "--threads", "2"]).status.success());
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 5);
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
    let c = dir.path().join("c");
    assert!(run("solve", &config("nonlinear.toml"), &c, &["--seed", "6"]).status.success());
    assert_ne!(
        std::fs::read(a.join("e_spectrum.nlmd")).unwrap(),
        std::fs::read(c.join("e_spectrum.nlmd")).unwrap()
    );
}

#[test]
fn divergence_exits_two_with_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("solve", &config("strong.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    let m = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(m.contains("partial = true"));
    assert!(dir.path().join("convergence.txt").exists());
}

#[test]
fn order_max_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("solve", &config("strong.toml"), dir.path(), &["--order-max", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let m = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(m.contains("converged = false") && m.contains("max_order = 1"), "{m}");
}

#[test]
fn validation_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = vec!["0.0"; 27];
    t[1] = "1.0";
    let text = format!(
        "{SMALL}[medium.electric.rank2]\ntype = \"lorentzian-product\"\nstrength = 0.01\ncenter = 2.0\nwidth = 0.5\ntensor = [{}]\nsymmetrize = false\n",
        t.join(", ")
    );
    let o = run("validate", &write_config(dir.path(), &text), &dir.path().join("v"), &[]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn io_and_config_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("solve", &dir.path().join("missing.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3));
    let bad = write_config(dir.path(), &SMALL.replace("n_omega = 4", "n_omega = \"four\""));
    let o = run("solve", &bad, &dir.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line") && err.contains("n_omega"), "{err}");
    let good = write_config(dir.path(), SMALL);
    let o = run("solve", &good, &dir.path().join("o"), &["--threads", "0"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn oracle_with_zero_drive_reports_exact_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}amplitude = 0.0\n"));
    let o = run("oracle", &cfg, &dir.path().join("o"), &[]);
    assert!(o.status.success());
    let rms = std::fs::read_to_string(dir.path().join("o/oracle_rms.txt")).unwrap();
    let row: Vec<f64> = rms.lines().nth(1).unwrap().split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[2], 0.0);
}

/// Replace one line of a valid config by something arbitrary.
fn mutate(base: &str, line: usize, replacement: &str) -> String {
    let mut lines: Vec<&str> = base.lines().collect();
    let i = line % lines.len();
    lines[i] = replacement;
    lines.join("\n")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fuzzed_configs_never_crash(
        line in 0usize..40,
        key in prop::sample::select(vec![
            "omega_max", "n_omega", "k_counts", "k_extent", "strength", "width", "center",
            "periods", "drives", "schema_version", "type", "bogus", "[grids]", "[solver]",
        ]),
        value in prop::sample::select(vec![
            "0", "-1", "1e308", "nan", "inf", "\"x\"", "[0, 0, 0]", "[1, 1]", "[1e9, 1, 1]", "true", "",
            "2.5", "{ a = 1 }", "[[1]]", "100000",
        ]),
        cmd in prop::sample::select(vec!["validate", "solve", "sample", "susceptibility"]),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let text = mutate(SMALL, line, &format!("{key} = {value}"));
        let cfg = write_config(dir.path(), &text);
        let o = run(cmd, &cfg, &dir.path().join("o"), &[]);
        let code = o.status.code();
        prop_assert!(matches!(code, Some(0..=4)), "{:?}: {}", code, String::from_utf8_lossy(&o.stderr));
        prop_assert!(!String::from_utf8_lossy(&o.stderr).contains("panicked"));
    }
}
