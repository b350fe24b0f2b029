//! End-to-end tests of the coalweb binary: exit codes, report file
//! emission, determinism across reruns and worker splits, and the
//! seed fallback. Campaign invocations use small trial counts so the
//! whole file runs in seconds.

use std::path::Path;
use std::process::{Command, Output};

fn coalweb(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coalweb"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("COALWEB_SEED")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

// At t = 100 the closed form still carries a finite-time bias of
// several percent, so smoke runs loosen the declared tolerance.
const DENSITY_SMALL: &[&str] = &[
    "density_scan",
    "--trials",
    "6",
    "--t",
    "100",
    "--width",
    "2000",
    "--seed",
    "5",
    "--tolerance",
    "0.15",
];

#[test]
fn passing_run_exits_zero_and_writes_all_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = coalweb(DENSITY_SMALL, dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert_eq!(out.status.code(), Some(0), "stdout: {stdout}");
    assert!(stdout.contains("pass density_scan t=100"), "{stdout}");
    assert!(stdout.contains("1/1 cells pass"), "{stdout}");
    for ext in ["csv", "json", "dat"] {
        let body = read(dir.path(), &format!("density_scan_seed5.{ext}"));
        assert!(!body.is_empty(), "{ext} file empty");
    }
    let csv = String::from_utf8(read(dir.path(), "density_scan_seed5.csv")).unwrap();
    assert!(csv.starts_with("kind,params,estimate,stderr,reference,provenance,verdict\n"));
}

#[test]
fn reruns_and_worker_splits_write_byte_identical_reports() {
    let base = tempfile::tempdir().unwrap();
    let rerun = tempfile::tempdir().unwrap();
    let split = tempfile::tempdir().unwrap();
    assert_eq!(coalweb(DENSITY_SMALL, base.path()).status.code(), Some(0));
    assert_eq!(coalweb(DENSITY_SMALL, rerun.path()).status.code(), Some(0));
    let mut with_workers = DENSITY_SMALL.to_vec();
    with_workers.extend(["--workers", "3"]);
    assert_eq!(coalweb(&with_workers, split.path()).status.code(), Some(0));
    for ext in ["csv", "json", "dat"] {
        let name = format!("density_scan_seed5.{ext}");
        let reference = read(base.path(), &name);
        assert_eq!(reference, read(rerun.path(), &name), "rerun differs: {name}");
        assert_eq!(reference, read(split.path(), &name), "split differs: {name}");
    }
}

#[test]
fn json_format_writes_only_the_json_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = DENSITY_SMALL.to_vec();
    args.extend(["--format", "json"]);
    assert_eq!(coalweb(&args, dir.path()).status.code(), Some(0));
    assert!(dir.path().join("density_scan_seed5.json").exists());
    assert!(!dir.path().join("density_scan_seed5.csv").exists());
    assert!(!dir.path().join("density_scan_seed5.dat").exists());
}

#[test]
fn parse_errors_exit_two_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["density_scan", "--law", "nonsense"],
        &["density_scan", "--bogus", "1"],
        &["no_such_kind"],
        &["oracle"], // missing required --law
    ];
    for args in cases {
        let out = coalweb(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "args: {args:?}");
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn absurd_tolerance_fails_cells_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = coalweb(
        &[
            "overshoot",
            "--trials",
            "400",
            "--width",
            "30",
            "--seed",
            "3",
            "--tolerance",
            "0",
        ],
        dir.path(),
    );
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert_eq!(out.status.code(), Some(1), "stdout: {stdout}");
    assert!(stdout.contains("FAIL overshoot tv"), "{stdout}");
    // Failing runs still leave their reports behind for inspection.
    assert!(dir.path().join("overshoot_seed3.csv").exists());
}

#[test]
fn runtime_guards_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    // Width 50 is below the mixing floor for t = 100.
    let out = coalweb(
        &["density_scan", "--trials", "2", "--t", "100", "--width", "50"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);

    // Unwritable output directory: the campaign runs, the write fails.
    let out = Command::new(env!("CARGO_BIN_EXE_coalweb"))
        .args(DENSITY_SMALL)
        .args(["--out", "/dev/null/nodir"])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn seed_env_var_is_the_fallback_for_the_flag() {
    let with_env = tempfile::tempdir().unwrap();
    let with_flag = tempfile::tempdir().unwrap();
    let small = ["density_scan", "--trials", "4", "--t", "100", "--width", "2000"];
    let loose = ["--tolerance", "0.15"];
    let out = Command::new(env!("CARGO_BIN_EXE_coalweb"))
        .args(small)
        .args(loose)
        .args(["--out".as_ref(), with_env.path().as_os_str()])
        .env("COALWEB_SEED", "9")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0));
    let mut args = small.to_vec();
    args.extend(loose);
    args.extend(["--seed", "9"]);
    assert_eq!(coalweb(&args, with_flag.path()).status.code(), Some(0));
    let name = "density_scan_seed9.json";
    assert_eq!(read(with_env.path(), name), read(with_flag.path(), name));

    let out = Command::new(env!("CARGO_BIN_EXE_coalweb"))
        .args(["density_scan", "--trials", "2"])
        .env("COALWEB_SEED", "not-a-number")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_prints_the_exact_width_five_occupancy() {
    let out = Command::new(env!("CARGO_BIN_EXE_coalweb"))
        .args(["oracle", "--law", "-1:1/3,0:1/3,1:1/3", "--width", "5", "--t", "1"])
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    for x in 0..5 {
        assert!(stdout.contains(&format!("p({x}) = 19/27")), "{stdout}");
    }
    assert!(stdout.contains("negative correlation holds"), "{stdout}");
}

#[test]
fn oracle_rejects_irrational_or_oversized_requests() {
    let out = Command::new(env!("CARGO_BIN_EXE_coalweb"))
        .args(["oracle", "--law", "-1:1/3,0:1/3,1:1/3", "--width", "40", "--t", "40"])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn metrics_reports_distances_between_path_logs() {
    use coalweb::pathspace::{pathset_to_log, Path as SpacePath, PathKind};
    let dir = tempfile::tempdir().unwrap();
    let a = SpacePath::new(vec![(0.0, 0.0), (1.0, 1.0)], PathKind::Interpolated).unwrap();
    let b = SpacePath::new(vec![(0.0, 0.5), (1.0, 0.5)], PathKind::Interpolated).unwrap();
    let file_a = dir.path().join("a.log");
    let file_b = dir.path().join("b.log");
    std::fs::write(&file_a, pathset_to_log(std::slice::from_ref(&a))).unwrap();
    std::fs::write(&file_b, pathset_to_log(&[b])).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_coalweb"))
        .arg("metrics")
        .args([file_a.as_os_str(), file_b.as_os_str()])
        .args(["--grid", "200"])
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("d_H = "), "{stdout}");
    assert!(stdout.contains("d = "), "{stdout}");

    let out = Command::new(env!("CARGO_BIN_EXE_coalweb"))
        .args(["metrics", "/no/such/file", "/no/such/file2"])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_documents_the_csv_column_order() {
    let out = Command::new(env!("CARGO_BIN_EXE_coalweb"))
        .arg("--help")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        stdout.contains("kind,params,estimate,stderr,reference,provenance,verdict"),
        "{stdout}"
    );
    assert!(stdout.contains("17 significant digits"), "{stdout}");
}
