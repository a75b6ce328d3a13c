use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use grwscmf::synthetic::planted;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_grwscmf"))
}

fn write_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let p = planted(60, 30, 10, 3, 3, 5).unwrap();
    let ds = &p.dataset;
    let mut paths = Vec::new();
    for (name, x, y) in [
        ("train.csv", &ds.x_train, &ds.y_train),
        ("test.csv", &ds.x_test, &ds.y_test),
    ] {
        let mut text = String::new();
        for (xr, yr) in x.rows().into_iter().zip(y.rows()) {
            let cells: Vec<String> = xr.iter().chain(yr.iter()).map(|v| v.to_string()).collect();
            writeln!(text, "{}", cells.join(",")).unwrap();
        }
        let path = dir.join(name);
        fs::write(&path, text).unwrap();
        paths.push(path);
    }
    fs::write(dir.join("manifest.txt"), "label_count=3\n").unwrap();
    (paths[0].clone(), paths[1].clone())
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let (train, test) = (dir.join("train.csv"), dir.join("test.csv"));
    let out = dir.join("out");
    let mut cmd = bin();
    cmd.args(args)
        .arg("--train")
        .arg(&train)
        .arg("--test")
        .arg(&test)
        .arg("--out")
        .arg(&out)
        .args(["--n-walks", "100"]);
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn select_then_eval() {
    let tmp = TempDir::new().unwrap();
    write_fixture(tmp.path());
    let manifest = tmp.path().join("manifest.txt");
    let o = run(
        tmp.path(),
        &["select", "--labels", manifest.to_str().unwrap(), "--seed", "3"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let ranking = fs::read_to_string(tmp.path().join("out/ranking.csv")).unwrap();
    assert!(ranking.contains("# seed=3\n"));
    assert!(ranking.contains("# labels=3\n"));
    assert_eq!(ranking.lines().filter(|l| !l.starts_with('#')).count(), 11);

    let o = run(tmp.path(), &["eval", "--labels", "3", "--classifier", "mlknn10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("out/eval_mlknn10.csv").is_file());
    assert!(tmp.path().join("out/eval_mlknn10.json").is_file());
    assert!(String::from_utf8_lossy(&o.stdout).contains("over 10 steps"));
}

#[test]
fn config_file_with_flag_override() {
    let tmp = TempDir::new().unwrap();
    let (train, test) = write_fixture(tmp.path());
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        format!(
            "train={}\ntest={}\nlabels=3\ngamma=0.1\nn_walks=50\nout={}\n",
            train.display(),
            test.display(),
            tmp.path().join("cfgout").display()
        ),
    )
    .unwrap();
    let o = bin()
        .args(["select", "--config"])
        .arg(&cfg)
        .args(["--gamma", "0.9", "--walk-length", "5"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("cfgout/trace.csv")).unwrap();
    assert!(text.contains("# gamma=0.9\n"));
    assert!(text.contains("# n_walks=50\n"));
    assert!(text.contains("# walk_length=5\n"));
}

#[test]
fn both_ablations_refused_with_usage_code() {
    let tmp = TempDir::new().unwrap();
    write_fixture(tmp.path());
    let o = run(
        tmp.path(),
        &["select", "--labels", "3", "--disable-rw", "--disable-fla"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("degenerate"));
}

#[test]
fn stage_errors_exit_one_and_name_the_stage() {
    let tmp = TempDir::new().unwrap();
    write_fixture(tmp.path());
    fs::write(tmp.path().join("test.csv"), "1,2,3\n4,5\n").unwrap();
    let o = run(tmp.path(), &["select", "--labels", "3"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("load stage failed") && err.contains("test.csv:2"), "{err}");
}

#[test]
fn bad_flag_values_are_usage_errors() {
    let tmp = TempDir::new().unwrap();
    write_fixture(tmp.path());
    let o = run(tmp.path(), &["select", "--labels", "3", "--jump-prob", "1.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = run(tmp.path(), &["select", "--labels", "3", "--classifier", "svm"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["select", "--bogus"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn grid_and_ablate() {
    let tmp = TempDir::new().unwrap();
    write_fixture(tmp.path());
    let grid = tmp.path().join("grid.txt");
    fs::write(&grid, "gamma=0.1,0.9\ndelta=0.5\n").unwrap();
    let o = run(tmp.path(), &["grid", "--labels", "3", "--grid", grid.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let board = fs::read_to_string(tmp.path().join("out/leaderboard.csv")).unwrap();
    assert_eq!(board.lines().filter(|l| !l.starts_with('#')).count(), 3);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("best of 2"));

    let o = run(tmp.path(), &["ablate", "--labels", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ab = fs::read_to_string(tmp.path().join("out/ablation.csv")).unwrap();
    assert!(ab.contains("\nfull,") && ab.contains("\nno_rw,") && ab.contains("\nno_fla,"));
}
