use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rfprox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfprox")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn abalone() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/abalone.csv")
        .to_string_lossy()
        .into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&rfprox(&["--help"])), 0);
    assert_eq!(code(&rfprox(&["--version"])), 0);
    assert_eq!(code(&rfprox(&[])), 1);
    assert_eq!(code(&rfprox(&["benchmark", "--no-such-flag"])), 1);
    assert_eq!(code(&rfprox(&["benchmark"])), 1);
    let d = abalone();
    assert_eq!(code(&rfprox(&["benchmark", "--data", &d, "--cv", "weekly:3"])), 1);
    assert_eq!(code(&rfprox(&["benchmark", "--data", &d, "--criterion", "gini"])), 1);
    assert_eq!(
        code(&rfprox(&[
            "benchmark",
            "--data",
            &d,
            "--rows",
            "60",
            "--trees",
            "5",
            "--max-depth",
            "0"
        ])),
        1
    );
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rfprox(&["benchmark", "--data", "/no/such/file.csv"])), 2);
    let d = abalone();
    assert_eq!(code(&rfprox(&["benchmark", "--data", &d, "--target", "weight"])), 2);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,y\n1,2\nx,3\n4,5\n").unwrap();
    assert_eq!(
        code(&rfprox(&[
            "train",
            "--data",
            s(&bad),
            "--missing",
            "error",
            "--out",
            "m.json"
        ])),
        2
    );

    let zero = dir.path().join("zero.csv");
    std::fs::write(&zero, "a,y\n1,0\n2,3\n4,5\n").unwrap();
    let o = rfprox(&[
        "train",
        "--data",
        s(&zero),
        "--log-target",
        "--out",
        s(&dir.path().join("m.json")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let d = abalone();
    let o = rfprox(&[
        "train",
        "--data",
        &d,
        "--rows",
        "200",
        "--trees",
        "20",
        "--min-leaf",
        "2",
        "--out",
        s(&model),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    // Feature columns are matched by name; order and extra columns do not matter.
    let queries = dir.path().join("q.csv");
    std::fs::write(
        &queries,
        "rings,shell_weight,viscera_weight,shucked_weight,whole_weight,height,diameter,length,sex_f,sex_m\n\
         0,0.15,0.1,0.2,0.5,0.1,0.35,0.45,0,1\n\
         0,0.3,0.2,0.4,1.0,0.15,0.45,0.6,1,0\n",
    )
    .unwrap();
    let out = dir.path().join("pred.csv");
    let o = rfprox(&[
        "predict",
        "--model",
        s(&model),
        "--data",
        s(&queries),
        "--alphas",
        "0.1,0.5,0.9",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "query,q0.025,q0.1,q0.5,q0.9,q0.975,lower,upper,width"
    );
    for line in lines.by_ref() {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(v[1..6].windows(2).all(|w| w[0] <= w[1]));
        assert_eq!((v[6], v[7]), (v[1], v[5]));
        assert_eq!(v[8], v[7] - v[6]);
    }
    assert_eq!(text.lines().count(), 3);

    assert_eq!(
        code(&rfprox(&[
            "predict",
            "--model",
            s(&model),
            "--data",
            s(&queries),
            "--alphas",
            "1.5"
        ])),
        1
    );
    let missing = dir.path().join("m.csv");
    std::fs::write(&missing, "length\n0.4\n").unwrap();
    assert_eq!(
        code(&rfprox(&["predict", "--model", s(&model), "--data", s(&missing)])),
        2
    );
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(
        &config,
        "trees = 5\nrows = 80\nseed = 3\n[benchmark]\ncv = \"kfold:4\"\nschemes = [\"gap\"]\n",
    )
    .unwrap();
    let d = abalone();
    let o = rfprox(&["--config", s(&config), "benchmark", "--data", &d, "--trees", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("trees=7"));
    assert!(text.contains("seed: 3"));
    assert!(text.contains("folds=4"));
    assert!(text.contains("\ngap "));
    assert!(!text.contains("\nqrf "));
}

#[test]
fn interval_report_is_sorted() {
    let d = abalone();
    let o = rfprox(&[
        "interval-report",
        "--data",
        &d,
        "--rows",
        "150",
        "--trees",
        "20",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let widths: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(7).unwrap().parse().unwrap())
        .collect();
    assert_eq!(widths.len(), 150);
    assert!(widths.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn grid_and_criterion_study_run() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("g.toml");
    std::fs::write(
        &grid,
        "n_trees = [50]\nmax_depth = [2, 6]\nmin_samples_leaf = [4]\nmin_samples_split = [2]\n",
    )
    .unwrap();
    let d = abalone();
    let o = rfprox(&[
        "grid-search",
        "--data",
        &d,
        "--rows",
        "120",
        "--grid",
        s(&grid),
        "--cv",
        "3",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(text.lines().filter(|l| l.ends_with(",true")).count(), 1);

    std::fs::write(&grid, "max_depth = [40]\n").unwrap();
    assert_eq!(code(&rfprox(&["grid-search", "--data", &d, "--grid", s(&grid)])), 1);

    let report = dir.path().join("study.json");
    let o = rfprox(&[
        "criterion-study",
        "--data",
        &d,
        "--rows",
        "100",
        "--trees",
        "8",
        "--seeds",
        "2",
        "--folds",
        "3",
        "--format",
        "json",
        "--report",
        s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["mean"].as_array().unwrap().len(), 3);
    assert_eq!(v["seeds"], serde_json::json!([42, 43]));
}
