use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

fn lab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lab")).args(args).env("LAB_OUT", out).output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn run_writes_bundle_to_lab_out() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["run", scenario("thm11_sector_quarter").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    for ext in ["report.json", "ledger.csv", "field.csv", "trace.csv"] {
        assert!(dir.path().join(format!("thm11_sector_quarter.{ext}")).exists(), "{ext}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("thm11_sector_quarter.report.json")).unwrap()).unwrap();
    assert_eq!(report["metrics"]["verdict"], "yes");
    let g = &report["metrics"]["gradient"];
    let norm = g[0].as_f64().unwrap().hypot(g[1].as_f64().unwrap());
    assert!(norm <= 5.0 / 256.0, "{norm}");
}

#[test]
fn out_flag_overrides_environment() {
    let (env_dir, flag_dir) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let o = lab(
        &["run", scenario("manufactured_pucci").to_str().unwrap(), "--out", flag_dir.path().to_str().unwrap()],
        env_dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert!(flag_dir.path().join("manufactured_pucci.report.json").exists());
    assert!(!env_dir.path().join("manufactured_pucci.report.json").exists());
}

#[test]
fn strict_ledger_violation_names_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["run", scenario("strict_ledger_violation").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = text(&o.stderr);
    assert!(err.contains("strict_ledger_violation") && err.contains("c0 <= eta"), "{err}");
}

#[test]
fn config_errors_name_scenario_and_key() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    std::fs::write(&file, "name = \"bad\"\n[problem]\ndomain = \"halfball\"\ng = \"harmonic:nope\"\n").unwrap();
    let o = lab(&["run", file.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = text(&o.stderr);
    assert!(err.contains("`bad`") && err.contains("problem.g"), "{err}");
}

#[test]
fn non_convergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("slow.toml");
    std::fs::write(
        &file,
        "name = \"slow\"\n[problem]\ndomain = \"halfball\"\ng = \"harmonic:expsin\"\nh = \"1/32\"\nmethod = \"jacobi\"\nmax_iterations = 3\n",
    )
    .unwrap();
    let o = lab(&["run", file.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", text(&o.stderr));
    assert!(text(&o.stderr).contains("slow"));
}

#[test]
fn lemma_suite_reports_four_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["run", scenario("lemma_suite").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let passes = text(&o.stdout).lines().filter(|l| l.trim_start().starts_with("pass ")).count();
    assert_eq!(passes, 4);
    let o = lab(&["lemmas", "--h", "0.015625"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert!(dir.path().join("lemma_suite.ledger.csv").exists());
}

#[test]
fn sweep_prints_rows_and_flags_failures() {
    let dir = tempfile::tempdir().unwrap();
    let file = scenario("manufactured_pucci");
    let o = lab(&["sweep", file.to_str().unwrap(), "--vary", "h=1/16,1/32", "--jobs", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert_eq!(text(&o.stdout).lines().count(), 3);
    assert!(dir.path().join("manufactured_pucci.sweep.csv").exists());
    let o = lab(&["sweep", file.to_str().unwrap(), "--vary", "h=1/16,4"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stdout).starts_with("# partial"));
    let o = lab(&["sweep", file.to_str().unwrap(), "--vary", "h=abc"], dir.path());
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn ledger_prints_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["ledger", "--theorem", "L41", "--params", "eta=0.01,mu=0.2,alpha1=0.5,c0=0.01,depth=10"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let out = text(&o.stdout);
    assert!(out.starts_with("# kind=Bracket"));
    assert_eq!(out.lines().count(), 13);
    assert!(text(&o.stderr).contains("pass partial sums below 6 c0"));
    let o = lab(&["ledger", "--theorem", "31", "--params", "eta=0.01,mu=0.2,alpha1=0.5,c0=0.02"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("c0 <= eta"));
}

#[test]
fn check_domain_and_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(&["check-domain", scenario("sector_reentrant").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json["conditions"]["cone_in_complement"], false);
    let csv = dir.path().join("t.csv");
    std::fs::write(&csv, "k,a\n0,1\n").unwrap();
    let o = lab(&["columns", csv.to_str().unwrap()], dir.path());
    assert_eq!(text(&o.stdout), "# k a\n0 1\n");
}
