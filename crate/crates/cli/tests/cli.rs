use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nevlab_cli::table::Table;

fn nevlab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nevlab"));
    cmd.args(args).env_remove("NEVLAB_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const FMT: &str = r#"
experiment = "fmt"
[grid]
min = 2.0
max = 50.0
count = 8
[fmt]
curve = "[1 : exp(z)]"
divisor = ["w_1"]
"#;

#[test]
fn fmt_run_writes_report_tables_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fmt.toml", FMT);
    let out = dir.path().join("out");
    let o = nevlab(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = Table::read(&out.join("tables/fmt.csv")).unwrap();
    assert_eq!(&t.columns[..7], ["r", "rho", "T", "m", "N", "residual", "defect_ratio"]);
    let res = t.numeric("residual").unwrap();
    let spread = res.iter().cloned().fold(f64::MIN, f64::max) - res.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 0.1, "{spread}");
    for f in ["report.json", "timing.json", "plots/fmt_residual.svg", "plots/fmt_defect.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["fmt"]["curve"], "[1 : exp(z)]");
    assert_eq!(report["config"]["quadrature"]["boundary_tol"], 1e-7);
    assert_eq!(report["passed"], true);
    assert!(report.get("wall_clock_seconds").is_none());
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fmt.toml", FMT);
    let out = dir.path().join("out");
    let run = || {
        let o = nevlab(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
        assert_eq!(o.status.code(), Some(0));
        (std::fs::read(out.join("report.json")).unwrap(), std::fs::read(out.join("plots/fmt_residual.svg")).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn failed_assertion_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fmt.toml", &format!("{FMT}tolerance = 1e-15\n"));
    let out = dir.path().join("out");
    let o = nevlab(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("assertion failed: fmt.residual_oscillation"), "{}", stderr(&o));
    assert!(out.join("report.json").exists());
}

#[test]
fn malformed_expression_exits_1_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        "experiment = \"ldl\"\n[grid]\nmin = 2\nmax = 5\ncount = 3\n[ldl]\nfunction = \"exp(\"\n",
    );
    let o = nevlab(&["run", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("ldl.function") && e.contains("position 4"), "{e}");
    let o = nevlab(&["validate", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn schema_errors_carry_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "experiment = \"fmt\"\n\n[grid]\nmin = 2\nmaximum = 5\n");
    let o = nevlab(&["validate", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("line 5") && e.contains("maximum"), "{e}");
    let ok = write_config(dir.path(), "ok.toml", FMT);
    assert_eq!(nevlab(&["validate", ok.to_str().unwrap()], &[]).status.code(), Some(0));
}

#[test]
fn thread_variable_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fmt.toml", FMT);
    let o = nevlab(&["validate", cfg.to_str().unwrap()], &[("NEVLAB_THREADS", "zero")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("NEVLAB_THREADS"));
    let o = nevlab(&["validate", cfg.to_str().unwrap()], &[("NEVLAB_THREADS", "2")]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn mc_validate_columns_and_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mc.toml",
        r#"
experiment = "mc-validate"
[policy]
seed = 5
n_paths = 4000
base_step_rho2 = 0.005
[mc_validate]
functionals = ["1", "|z|^2"]
radii = [0.5, 1.0]
exit_tolerance = 0.05
"#,
    );
    let out = dir.path().join("out");
    let o = nevlab(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let t = Table::read(&out.join("tables/mc_validate.csv")).unwrap();
    let delta = t.numeric("delta").unwrap();
    let se = t.numeric("stderr").unwrap();
    assert_eq!(delta.len(), 4);
    assert!(delta.iter().zip(&se).all(|(d, s)| d.abs() <= 3.0 * s));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rng"]["seed"], 5);
    assert_eq!(report["rng"]["generator"], "ChaCha8");
}

#[test]
fn nev_run_reports_failing_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "nev.toml",
        r#"
experiment = "nev"
[nev]
n = 1
divisor = ["w_0", "w_1"]
bundled = false
[[nev.candidates]]
label = "mu2"
k = 2
space = ["w_0^2", "w_0*w_1", "w_1^2"]
mu = "2"
expect_pass = true
"#,
    );
    let out = dir.path().join("out");
    let o = nevlab(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL nev.candidate[mu2]") && stdout.contains("order sum 3 < 4"), "{stdout}");
    let t = Table::read(&out.join("tables/nev_certificates.csv")).unwrap();
    assert!(t.rows.iter().any(|r| r[6] == "0"));
}

#[test]
fn plot_matches_golden_file() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("residual.svg");
    let o = nevlab(
        &[
            "plot",
            root.join("data/fmt_line.csv").to_str().unwrap(),
            "--x",
            "r",
            "--y",
            "residual",
            "--log-x",
            "--title",
            "residual",
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let got = std::fs::read_to_string(&out).unwrap();
    let golden = root.join("golden/residual.svg");
    if std::env::var_os("NEVLAB_BLESS").is_some() {
        std::fs::write(&golden, &got).unwrap();
    }
    assert_eq!(got, std::fs::read_to_string(&golden).expect("golden file; regenerate with NEVLAB_BLESS=1"));
    assert_eq!(got.matches("class=\"flagged\"").count(), 2);
}

#[test]
fn plot_rejects_missing_columns() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.svg");
    let o = nevlab(
        &["plot", root.join("data/fmt_line.csv").to_str().unwrap(), "--y", "margin", "--out", out.to_str().unwrap()],
        &[],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no column \"margin\""));
    assert!(!out.exists());
}
