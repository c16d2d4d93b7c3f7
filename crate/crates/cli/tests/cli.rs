use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vtmrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtmrf"))
        .args(args)
        .output()
        .unwrap()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 8] = [
    "--T", "6", "--N", "40", "--dims", "3,4", "--timing", "false",
];

#[test]
fn bench_writes_results_and_flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    fs::write(
        &cfg,
        "T=6\nN=40\ndims=3,4\ntiming=false\nseed=5\nscenario=fromfile\n",
    )
    .unwrap();
    let out = dir.path().join("r.csv");
    let o = vtmrf(&[
        "bench",
        "--config",
        s(&cfg),
        "--seed",
        "9",
        "--out",
        s(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 9);
    assert!(lines[1..]
        .iter()
        .all(|l| l.starts_with("fromfile,") && l.contains(",9,false")));

    let again = dir.path().join("r2.csv");
    vtmrf(&[
        "bench",
        "--config",
        s(&cfg),
        "--seed",
        "9",
        "--threads",
        "2",
        "--out",
        s(&again),
    ]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn bench_prints_to_stdout_without_out() {
    let o = vtmrf(&[&["bench"], &SMALL[..]].concat());
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("scenario,dim,algorithm"));
}

#[test]
fn configuration_errors_exit_with_two() {
    assert_eq!(vtmrf(&["bench", "--N", "0"]).status.code(), Some(2));
    assert_eq!(
        vtmrf(&["bench", "--obs-model", "gamma"]).status.code(),
        Some(2)
    );
    assert_eq!(vtmrf(&["bench", "--unknown"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "dims=1,x\n").unwrap();
    assert_eq!(
        vtmrf(&["bench", "--config", s(&cfg)]).status.code(),
        Some(2)
    );
}

#[test]
fn data_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let adj = dir.path().join("adj.csv");
    fs::write(&adj, "0,1,0\n0,0,1\n0,1,0\n").unwrap();
    let o = vtmrf(
        &[
            &["bench", "--adjacency", s(&adj)],
            &SMALL[..4],
            &["--dims", "2"],
        ]
        .concat(),
    );
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 1") && err.contains("column 2"), "{err}");
}

#[test]
fn budget_overruns_exit_with_four() {
    let o = vtmrf(&[&["bench", "--budget-ms", "0"], &SMALL[..]].concat());
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stdout)
        .lines()
        .skip(1)
        .all(|l| l.ends_with(",budget")));
}

#[test]
fn simulate_then_filter() {
    let dir = tempfile::tempdir().unwrap();
    let o = vtmrf(&[
        "simulate",
        "--T",
        "5",
        "--dims",
        "6",
        "--seed",
        "3",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let data = dir.path().join("seed3_dim6.csv");
    let params = dir.path().join("seed3_dim6.params");
    let adj = dir.path().join("seed3_dim6_adjacency.csv");
    assert!(data.exists() && params.exists() && adj.exists());

    let steps = dir.path().join("steps.csv");
    let o = vtmrf(&[
        "filter",
        "--data",
        s(&data),
        "--params",
        s(&params),
        "--adjacency",
        s(&adj),
        "--N",
        "50",
        "--out",
        s(&steps),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("total_spf_loglik") && stdout.contains("scaled_pf_loglik"));
    assert_eq!(fs::read_to_string(&steps).unwrap().lines().count(), 6);

    let o = vtmrf(&[
        "filter",
        "--data",
        s(&data),
        "--params",
        s(&params),
        "--algorithm",
        "pf",
        "--latent",
        "--N",
        "50",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let o = vtmrf(&["filter", "--data", s(&params), "--params", s(&params)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bounds_reports() {
    let o = vtmrf(&[
        "bounds",
        "--eps-d",
        "0.99",
        "--eps-u",
        "1",
        "--epsp-d",
        "1",
        "--epsp-u",
        "1",
        "--gamma-d",
        "1",
        "--gamma-u",
        "1",
        "--kappa-d",
        "1",
        "--kappa-u",
        "1",
        "--cluster-size",
        "1",
        "--N",
        "64",
        "--distance",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(
        text.contains("holds: true") && text.contains("beta: 0.8573992"),
        "{text}"
    );

    let o = vtmrf(&[
        "bounds",
        "--instance",
        &fixture("near_flat_path3.toml"),
        "--csv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout)
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("true,"));

    assert_eq!(vtmrf(&["bounds", "--eps-d", "1"]).status.code(), Some(2));
}

#[test]
fn oracle_check_passes_on_the_toy_instance() {
    let o = vtmrf(&[
        "oracle-check",
        "--instance",
        &fixture("toy3.toml"),
        "--N",
        "20000",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let o = vtmrf(&[
        "oracle-check",
        "--instance",
        &fixture("near_flat_path4.toml"),
        "--cluster-size",
        "2",
        "--N",
        "20000",
        "--tolerance",
        "0.05",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(
        vtmrf(&["oracle-check", "--instance", "/nonexistent.toml"])
            .status
            .code(),
        Some(3)
    );
}
