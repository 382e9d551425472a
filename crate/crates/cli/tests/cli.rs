use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_warpgof");

const CONFIG: &str = r#"
design_tag = "type1"
truth_tag = "heavy_sine"
null_tags = ["sine:kappa=2", "sine:kappa=6"]
n = 64
alpha = 0.05
M = 10.0
level_mode = { paper_sim = 5 }
B1 = 150
B2 = 150
B_eval = 100
seed = 3
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();
    dir
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_xy(path: &Path, n: usize) {
    let mut text = String::from("x,y\n");
    for i in 0..n {
        let x = (i as f64 + 0.5) / n as f64;
        text.push_str(&format!("{x},{}\n", (7.0 * x).sin()));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn study_writes_power_table_and_is_job_count_invariant() {
    let dir = setup();
    let a = run(dir.path(), &["--config", "exp.toml", "--jobs", "1", "--out", "a", "study"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = run(dir.path(), &["--config", "exp.toml", "--jobs", "3", "--out", "b", "study"]);
    assert_eq!(code(&b), 0);
    let pa = fs::read(dir.path().join("a/power.csv")).unwrap();
    let pb = fs::read(dir.path().join("b/power.csv")).unwrap();
    assert_eq!(pa, pb);
    let text = String::from_utf8(pa).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# seed=3"));
    assert_eq!(lines.next().unwrap(), "design_tag,null_tag,estimate,mc_stderr,B_eval,seed");
    assert_eq!(lines.count(), 3);
    for i in 0..3 {
        assert!(dir.path().join(format!("a/calibration_{i}.json")).exists());
    }
}

#[test]
fn calibrate_then_test() {
    let dir = setup();
    let c = run(dir.path(), &["--config", "exp.toml", "--out", "cal", "calibrate", "--null", "sine:kappa=2"]);
    assert_eq!(code(&c), 0, "{}", String::from_utf8_lossy(&c.stderr));
    write_xy(&dir.path().join("data.csv"), 64);
    let t = run(
        dir.path(),
        &["--out", "res", "test", "--table", "cal/calibration.json", "--data", "data.csv"],
    );
    assert_eq!(code(&t), 0, "{}", String::from_utf8_lossy(&t.stderr));
    let stdout = String::from_utf8(t.stdout).unwrap();
    assert!(stdout.contains("reject="));
    let outcome = fs::read_to_string(dir.path().join("res/outcome.csv")).unwrap();
    assert!(outcome.lines().nth(1).unwrap().starts_with("alpha,u_alpha,r_alpha,reject,argmax_level"));
    let levels = fs::read_to_string(dir.path().join("res/outcome_levels.csv")).unwrap();
    assert_eq!(levels.lines().count(), 2 + 5);
}

#[test]
fn sample_size_mismatch_exits_3() {
    let dir = setup();
    assert_eq!(code(&run(dir.path(), &["--config", "exp.toml", "--out", "cal", "calibrate"])), 0);
    write_xy(&dir.path().join("short.csv"), 40);
    let t = run(dir.path(), &["test", "--table", "cal/calibration.json", "--data", "short.csv"]);
    assert_eq!(code(&t), 3);
}

#[test]
fn config_errors_exit_2() {
    let dir = setup();
    fs::write(dir.path().join("bad.toml"), format!("{CONFIG}\nunknown_key = true\n")).unwrap();
    assert_eq!(code(&run(dir.path(), &["--config", "bad.toml", "study"])), 2);
    fs::write(dir.path().join("alpha.toml"), CONFIG.replace("alpha = 0.05", "alpha = 1.5")).unwrap();
    assert_eq!(code(&run(dir.path(), &["--config", "alpha.toml", "study"])), 2);
    assert_eq!(code(&run(dir.path(), &["--config", "exp.toml", "--jobs", "0", "study"])), 2);
    assert_eq!(code(&run(dir.path(), &["study"])), 2);
    assert_eq!(code(&run(dir.path(), &["no-such-command"])), 2);
}

#[test]
fn missing_files_exit_4() {
    let dir = setup();
    assert_eq!(code(&run(dir.path(), &["--config", "missing.toml", "study"])), 4);
    write_xy(&dir.path().join("data.csv"), 64);
    assert_eq!(code(&run(dir.path(), &["test", "--table", "nope.json", "--data", "data.csv"])), 4);
}

#[test]
fn envelopes_and_plot_data() {
    let dir = setup();
    let e = run(dir.path(), &["--config", "exp.toml", "--out", "env", "envelopes"]);
    assert_eq!(code(&e), 0, "{}", String::from_utf8_lossy(&e.stderr));
    let env = fs::read_to_string(dir.path().join("env/envelopes.csv")).unwrap();
    assert_eq!(env.lines().nth(1).unwrap(), "n,J,v_envelope,quantile_envelope");
    let rates = fs::read_to_string(dir.path().join("env/rates.csv")).unwrap();
    // n = 16, 32, 64
    assert_eq!(rates.lines().count(), 2 + 3);

    fs::write(dir.path().join("consts.toml"), "c1 = 0.5\nc2 = 2.0\n").unwrap();
    let e = run(dir.path(), &["--config", "exp.toml", "--out", "env2", "envelopes", "--constants", "consts.toml"]);
    assert_eq!(code(&e), 0, "{}", String::from_utf8_lossy(&e.stderr));
    fs::write(dir.path().join("typo.toml"), "c_one = 0.5\n").unwrap();
    let e = run(dir.path(), &["--config", "exp.toml", "envelopes", "--constants", "typo.toml"]);
    assert_eq!(code(&e), 2);

    let p = run(dir.path(), &["--config", "exp.toml", "--out", "plot", "plotdata"]);
    assert_eq!(code(&p), 0, "{}", String::from_utf8_lossy(&p.stderr));
    for f in ["design_type1.csv", "design_type2.csv", "design_type3.csv", "truth.csv"] {
        assert!(dir.path().join("plot").join(f).exists(), "{f}");
    }
}
