use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SUITE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/suite");

fn mpcc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpcc")).args(args).output().expect("spawn mpcc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn problem(name: &str) -> String {
    format!("{SUITE}/{name}.mpcc")
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mpcc-cli-{}-{tag}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_p1_and_p3() {
    let o = mpcc(&["solve", &problem("p1")]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("f*: 0.000000E+00"), "{out}");
    assert!(out.contains("status: converged"));

    let o = mpcc(&["solve", &problem("p3"), "--scheme", "reg-one", "--trace"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("f*: 5.000000E-01"));
}

#[test]
fn solve_errors() {
    assert_eq!(code(&mpcc(&["solve", &problem("p1"), "--rho2", "1.5"])), 2);
    assert_eq!(code(&mpcc(&["solve", "/nonexistent/file.mpcc"])), 2);
    let dir = scratch("bad");
    let bad = dir.join("bad.mpcc");
    fs::write(&bad, "name: bad\nvars:\n x 0 inf 1\nobjective: x +\n").unwrap();
    assert_eq!(code(&mpcc(&["solve", path_str(&bad)])), 2);
    let o = mpcc(&["solve", &problem("pairs3"), "--scheme", "reg-eq"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("status: NC"));
}

#[test]
fn unknown_flag_is_rejected() {
    let o = mpcc(&["solve", &problem("p1"), "--bogus"]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
}

#[test]
fn solve_json_parses() {
    let o = mpcc(&["solve", &problem("p2"), "--json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["status"], "converged");
    assert!(v["it_ext"].as_u64().unwrap() <= 8);
}

#[test]
fn bench_row_counts_and_profile() {
    let dir = scratch("bench");
    let two = dir.join("two.csv");
    let o = mpcc(&["bench", "--suite", "builtin", "--schemes", "reg,reg-one", "--out", path_str(&two)]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&two).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 12);

    let all = dir.join("all.csv");
    let o = mpcc(&["bench", "--suite", "builtin", "--schemes", "all", "--out", path_str(&all), "--workers", "2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(&all).unwrap().lines().count(), 1 + 4 * 12);

    let prof = dir.join("prof.csv");
    for metric in ["it-ext", "it_int"] {
        let o = mpcc(&["profile", path_str(&two), "--metric", metric, "--out", path_str(&prof)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let p = fs::read_to_string(&prof).unwrap();
        assert_eq!(p.lines().next(), Some("tau,reg,reg-one"));
        for line in p.lines().skip(1) {
            for v in line.split(',').skip(1) {
                let r: f64 = v.parse().unwrap();
                assert!((0.0..=1.0).contains(&r));
            }
        }
        let last = p.lines().last().unwrap();
        assert!(last.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 1.0), "{last}");
    }
}

#[test]
fn profile_columns_and_errors() {
    let dir = scratch("profile");
    let csv = dir.join("r.csv");
    let o = mpcc(&["bench", "--suite", "builtin", "--schemes", "reg,reg-eq-one", "--out", path_str(&csv)]);
    assert_eq!(code(&o), 0);
    // Mark every reg-eq-one row as failed.
    let text = fs::read_to_string(&csv).unwrap();
    let header = text.lines().next().unwrap().to_string();
    let mut failed = header.clone() + "\n";
    for line in text.lines().skip(1) {
        if line.contains(",reg-eq-one,") {
            let mut cols: Vec<&str> = line.split(',').collect();
            cols[6] = "NC";
            *cols.last_mut().unwrap() = "NC";
            failed.push_str(&cols.join(","));
            failed.push('\n');
        } else {
            failed.push_str(line);
            failed.push('\n');
        }
    }
    let nc = dir.join("nc.csv");
    fs::write(&nc, &failed).unwrap();
    let o = mpcc(&["profile", path_str(&nc), "--metric", "it-ext"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.lines().next(), Some("tau,reg,reg-eq-one"));
    for line in out.lines().skip(1) {
        assert_eq!(line.rsplit(',').next().unwrap().parse::<f64>().unwrap(), 0.0, "{line}");
    }

    // Drop the it_ext column.
    let idx = header.split(',').position(|c| c == "it_ext").unwrap();
    let stripped: String = text
        .lines()
        .map(|l| {
            let cols: Vec<&str> = l.split(',').enumerate().filter(|(i, _)| *i != idx).map(|(_, c)| c).collect();
            cols.join(",") + "\n"
        })
        .collect();
    let missing = dir.join("missing.csv");
    fs::write(&missing, stripped).unwrap();
    assert_eq!(code(&mpcc(&["profile", path_str(&missing), "--metric", "it-ext"])), 2);
}

#[test]
fn bench_dir_skips_malformed_files() {
    let dir = scratch("dir");
    for name in ["p1", "p2", "p3"] {
        fs::copy(problem(name), dir.join(format!("{name}.mpcc"))).unwrap();
    }
    fs::write(dir.join("broken.mpcc"), "name: broken\nvars:\n").unwrap();
    let o = mpcc(&["bench", "--dir", path_str(&dir), "--schemes", "reg"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.mpcc"));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1 + 3);
    for name in ["p1", "p2", "p3"] {
        assert!(out.lines().any(|l| l.starts_with(&format!("{name},"))), "{out}");
    }

    let empty = scratch("empty");
    assert_eq!(code(&mpcc(&["bench", "--dir", path_str(&empty)])), 2);
    assert_eq!(code(&mpcc(&["bench", "--suite", "builtin", "--schemes", "nope"])), 2);
}

#[test]
fn bench_output_is_deterministic() {
    let args = ["bench", "--suite", "builtin", "--schemes", "reg", "--format", "table", "--deterministic"];
    let a = mpcc(&args);
    let b = mpcc(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let csv = ["bench", "--suite", "builtin", "--schemes", "reg-one"];
    assert_eq!(mpcc(&csv).stdout, mpcc(&[&csv[..], &["--workers", "3"]].concat()).stdout);
}

#[test]
fn check_p1_points() {
    let dir = scratch("check");
    let mult = dir.join("m.txt");
    fs::write(&mult, "nu1: 1\nnu2: 1\n").unwrap();
    let p1 = problem("p1");
    let o = mpcc(&["check", &p1, "--point", "0,0", "--multipliers", path_str(&mult)]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("strongly stationary: true"));

    let o = mpcc(&["check", &p1, "--point", "1,1"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("feasible: false"));

    assert_eq!(code(&mpcc(&["check", &p1, "--point", "a,b"])), 2);
    assert_eq!(code(&mpcc(&["check", &p1, "--point", "0,0,0"])), 2);
    fs::write(&mult, "nu1: 1 2\n").unwrap();
    assert_eq!(code(&mpcc(&["check", &p1, "--point", "0,0", "--multipliers", path_str(&mult)])), 2);
}

#[test]
fn oracle_p3() {
    let o = mpcc(&["oracle", &problem("p3")]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("best f*: 5.000000E-01"), "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("branch ")).count(), 2);
}
