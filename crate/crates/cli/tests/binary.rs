use std::path::Path;
use std::process::{Command, Output};

fn flowcap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowcap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("ok.cfg"),
        "areas.1.c1=1\nareas.1.c2=1\ntraffic.phi=0\ntraffic.rho=0.5\n",
    )
    .unwrap();
    std::fs::write(
        d.join("bad.cfg"),
        "areas.1.c1=1\nareas.1.c2=1\ntraffic.phi=1.5\n",
    )
    .unwrap();
    std::fs::write(
        d.join("big.cfg"),
        "areas.1.c1=1\nareas.1.c2=1\nareas.2.c1=1\nareas.2.c2=1\nareas.1.q=0.5\nareas.2.q=0.5\n\
         traffic.phi=0.5\ntraffic.rho=0.5\nctmc.max_total=2000\n",
    )
    .unwrap();

    let ok = flowcap(&["solve", "--config", "ok.cfg"], d);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    let stdout = String::from_utf8(ok.stdout).unwrap();
    assert!(stdout.starts_with("# flowcap: solve\n"));

    let bad = flowcap(&["solve", "--config", "bad.cfg"], d);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("bad.cfg:3:"), "{}", stderr(&bad));

    assert_eq!(code(&flowcap(&["solve", "--config", "missing.cfg"], d)), 1);
    assert_eq!(code(&flowcap(&["solve"], d)), 1);
    assert_eq!(code(&flowcap(&["frobnicate"], d)), 1);
    assert_eq!(code(&flowcap(&["reproduce", "fig9"], d)), 1);
    assert_eq!(code(&flowcap(&["--help"], d)), 0);

    let big = flowcap(&["solve", "--config", "big.cfg"], d);
    assert_eq!(code(&big), 2, "{}", stderr(&big));
}

#[test]
fn writes_to_out_dir_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("s.cfg"),
        "areas.1.c1=1\nareas.1.c2=2\ntraffic.phi=0.5\nsweep.rho=0.2,0.4\n",
    )
    .unwrap();
    let o = flowcap(
        &[
            "sweep",
            "--config",
            "s.cfg",
            "--out",
            "res",
            "--evaluator",
            "approx",
            "--seed",
            "9",
        ],
        d,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(d.join("res/sweep.csv")).unwrap();
    assert!(csv.contains("evaluator=approx"));
    assert!(csv.contains("# seed: 9"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn capacity_preset_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = flowcap(
        &[
            "capacity",
            "--preset",
            "db-hsdpa",
            "--phi",
            "1",
            "--evaluator",
            "approx",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    let row = csv.lines().last().unwrap();
    assert!(row.starts_with("db-hsdpa,1,2,1,"), "{row}");
    assert!(row.contains(",1.75,"), "{row}");
    let unknown = flowcap(&["capacity", "--preset", "gsm"], dir.path());
    assert_eq!(code(&unknown), 1);
}

#[test]
fn validate_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let quick = flowcap(&["validate", "--sim-budget", "0"], dir.path());
    assert_eq!(
        code(&quick),
        0,
        "{}",
        String::from_utf8_lossy(&quick.stdout)
    );
    let out = String::from_utf8(quick.stdout).unwrap();
    assert!(out.contains("SKIP  sim-ctmc-agreement"));

    let broken = flowcap(
        &["validate", "--sim-budget", "0", "--inject-fault", "row-sum"],
        dir.path(),
    );
    assert_eq!(code(&broken), 3);
    assert!(stderr(&broken).contains("generator-row-sums"));
    assert!(String::from_utf8(broken.stdout)
        .unwrap()
        .contains("FAIL  generator-row-sums"));
}
