use std::path::Path;
use std::process::{Command, Output};

const TC: &str = "mu T(x,y). G(x,y) | exists z. (T(x,z) & G(z,y))";
const TC_DATALOG: &str = "T(x,y) :- G(x,y).\nT(x,y) :- G(x,z), T(z,y).\n";

fn netquery(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netquery")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn path3(dir: &Path) -> String {
    write(dir, "p3.net", "3 2\n1 2\n2 3\n")
}

#[test]
fn transitive_closure_on_path3() {
    let dir = tempfile::tempdir().unwrap();
    let net = path3(dir.path());
    let o = netquery(&["qe-fp", "--net", &net, "--query", TC, "--format", "csv"]);
    assert!(o.status.success());
    let rows = stdout(&o).lines().filter(|l| l.starts_with("T,")).count();
    assert_eq!(rows, 9);
}

#[test]
fn check_passes_for_every_engine() {
    let dir = tempfile::tempdir().unwrap();
    let net = path3(dir.path());
    let runs: [&[&str]; 4] = [
        &["qe-fo", "--query", "exists y. (G(x,y) & y != 2)"],
        &["qe-fp", "--query", TC],
        &["qe-fo-loc", "--query", "exists y. G(x,y)", "--radius", "1", "--identity", "anonymous"],
        &["qe-fp-loc", "--query", TC, "--radius", "1", "--identity", "local-consistent:2"],
    ];
    for args in runs {
        let o = netquery(&[args, &["--net", &net, "--check"]].concat());
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("check: ok"), "{args:?}");
    }
}

#[test]
fn compile_prints_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let prog = write(dir.path(), "tc.dl", TC_DATALOG);
    let o = netquery(&["compile", "--program", &prog, "--delta", "2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().next(), Some("% kappa=2 delta=2"));
}

#[test]
fn malformed_formula_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let net = path3(dir.path());
    let o = netquery(&["oracle-fo", "--net", &net, "--query", "G(x,"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1:5"));
}

#[test]
fn fixtures() {
    let o = netquery(&["fixtures", "all", "3"]);
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with('#')).count(), 4);
    let o = netquery(&["fixtures", "ring", "4"]);
    assert_eq!(stdout(&o), "# ring4_1\n4 4\n1 2\n1 4\n2 3\n3 4\n");
    let dir = tempfile::tempdir().unwrap();
    let o = netquery(&["fixtures", "grid", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(dir.path().join("grid3_1.net").is_file());
    assert_eq!(netquery(&["fixtures", "all", "9"]).status.code(), Some(2));
}

#[test]
fn labels_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let net = path3(dir.path());
    let labels = write(dir.path(), "labels", "1 1\n2 2\n3 1\n");
    let consistent = |k: &str| netquery(&["check-consistent", "--net", &net, "--labels", &labels, "--k", k]);
    assert_eq!(consistent("1").status.code(), Some(1));
    let labels = write(dir.path(), "labels", "1 1\n2 2\n3 3\n");
    let o = netquery(&["check-consistent", "--net", &net, "--labels", &labels, "--k", "2"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn output_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(dir.path(), "g.net", "5 5\n1 2\n2 3\n3 4\n4 5\n1 5\n");
    let args = ["qe-fp", "--net", &net, "--query", TC, "--order-seed", "7", "--port-seed", "3"];
    let a = netquery(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, netquery(&args).stdout);
}
