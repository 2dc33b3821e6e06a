//! End-to-end runs of the binary: flag grammar, exit codes, and the
//! printed contract of every subcommand.

use std::path::Path;
use std::process::{Command, Output};

use facekit::GrayImage;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facekit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn uniform(value: f64) -> GrayImage {
    GrayImage::new(100, 100, vec![value; 100 * 100]).unwrap()
}

fn shaded(base: f64, slope_col: f64, slope_row: f64) -> GrayImage {
    let mut pixels = vec![0.0; 100 * 100];
    for row in 0..100 {
        for col in 0..100 {
            pixels[row * 100 + col] =
                (base + slope_col * col as f64 + slope_row * row as f64).clamp(0.0, 255.0);
        }
    }
    GrayImage::new(100, 100, pixels).unwrap()
}

/// Two well-separated classes of gradient images. The pixel span has rank
/// above two, so small PCA bases exist, and every trained method classifies
/// the training images themselves perfectly.
fn write_class_tree(root: &Path) {
    for (class, base, slope_col, slope_row) in
        [("a", 40.0, 0.5, 0.0), ("b", 150.0, 0.0, 0.5)]
    {
        let dir = root.join(class);
        std::fs::create_dir_all(&dir).unwrap();
        for i in 0..3 {
            shaded(base + 5.0 * i as f64, slope_col, slope_row)
                .save_pgm(dir.join(format!("s{i}.pgm")))
                .unwrap();
        }
    }
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = run(&["frobnicate"]);
    assert_eq!(code(&out), 1);
    assert!(!stderr(&out).is_empty());
}

#[test]
fn help_and_version_exit_zero() {
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("som-train"));
    assert!(stdout(&out).contains("evaluate"));
    let out = run(&["--version"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir(&data).unwrap();
    let out = run(&["som-train", "--data", data.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--out"));
}

#[test]
fn som_train_then_match_prints_the_exact_match_phrase() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("train");
    std::fs::create_dir(&data).unwrap();
    // A flat bright image thresholds to one full-frame object, so matching
    // the training image back reproduces its own winners.
    uniform(200.0).save_pgm(data.join("face.pgm")).unwrap();
    let model = tmp.path().join("som.json");
    let out = run(&[
        "som-train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(model.is_file());

    let out = run(&[
        "som-match",
        "--model",
        model.to_str().unwrap(),
        "--image",
        data.join("face.pgm").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out), "exact match\n");
}

#[test]
fn som_match_prints_one_verdict_per_object() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("train");
    std::fs::create_dir(&data).unwrap();
    let mut pixels = vec![30.0; 100 * 100];
    for r in 0..30 {
        for c in 0..30 {
            pixels[(10 + r) * 100 + 10 + c] = 220.0;
            pixels[(60 + r) * 100 + 60 + c] = 220.0;
        }
    }
    let image = GrayImage::new(100, 100, pixels).unwrap();
    let path = data.join("two.pgm");
    image.save_pgm(&path).unwrap();
    let model = tmp.path().join("som.json");
    let out = run(&[
        "som-train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let out = run(&[
        "som-match",
        "--model",
        model.to_str().unwrap(),
        "--image",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "one verdict per bright square");
    for line in lines {
        assert!(
            ["exact match", "close match", "dissimilar"].contains(&line),
            "unexpected verdict line {line:?}"
        );
    }
}

#[test]
fn missing_model_file_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let image = tmp.path().join("img.pgm");
    uniform(100.0).save_pgm(&image).unwrap();
    let out = run(&[
        "som-match",
        "--model",
        tmp.path().join("absent.json").to_str().unwrap(),
        "--image",
        image.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn out_of_range_alpha_is_a_usage_error_and_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("train");
    std::fs::create_dir(&data).unwrap();
    uniform(200.0).save_pgm(data.join("face.pgm")).unwrap();
    let model = tmp.path().join("som.json");
    let out = run(&[
        "som-train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--alpha",
        "1.5",
    ]);
    assert_eq!(code(&out), 1);
    assert!(!model.exists(), "no partial model on error");
}

#[test]
fn rec_train_and_predict_recover_a_training_label() {
    let tmp = TempDir::new().unwrap();
    let tree = tmp.path().join("tree");
    write_class_tree(&tree);
    for method in ["rp", "pca"] {
        let model = tmp.path().join(format!("{method}.json"));
        let out = run(&[
            "rec-train",
            "--data",
            tree.to_str().unwrap(),
            "--method",
            method,
            "--dim",
            "2",
            "--out",
            model.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{method}: {}", stderr(&out));
        let out = run(&[
            "rec-predict",
            "--model",
            model.to_str().unwrap(),
            "--image",
            tree.join("b").join("s1.pgm").to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{method}: {}", stderr(&out));
        assert_eq!(stdout(&out), "b\n", "{method}");
    }
}

#[test]
fn svm_train_and_predict_recover_a_training_label() {
    let tmp = TempDir::new().unwrap();
    let tree = tmp.path().join("tree");
    write_class_tree(&tree);
    let model = tmp.path().join("svm.json");
    let out = run(&[
        "svm-train",
        "--data",
        tree.to_str().unwrap(),
        "--kernel",
        "poly2",
        "--c",
        "1",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = run(&[
        "svm-predict",
        "--model",
        model.to_str().unwrap(),
        "--image",
        tree.join("a").join("s0.pgm").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out), "a\n");
}

#[test]
fn gamma_with_a_non_rbf_kernel_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let tree = tmp.path().join("tree");
    write_class_tree(&tree);
    let model = tmp.path().join("svm.json");
    let out = run(&[
        "svm-train",
        "--data",
        tree.to_str().unwrap(),
        "--kernel",
        "linear",
        "--c",
        "1",
        "--gamma",
        "0.5",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("gamma"));
    assert!(!model.exists());
}

#[test]
fn evaluate_emits_the_csv_schema_on_stdout() {
    let tmp = TempDir::new().unwrap();
    let tree = tmp.path().join("tree");
    write_class_tree(&tree);
    let out = run(&[
        "evaluate",
        "--data",
        tree.to_str().unwrap(),
        "--method",
        "rp",
        "--protocol",
        "loo",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("class,accuracy\n"), "{text}");
    assert!(text.contains("\noverall,"), "{text}");
}

#[test]
fn evaluate_defaults_to_the_text_report() {
    let tmp = TempDir::new().unwrap();
    let tree = tmp.path().join("tree");
    write_class_tree(&tree);
    let out = run(&[
        "evaluate",
        "--data",
        tree.to_str().unwrap(),
        "--method",
        "rp",
        "--protocol",
        "holdout",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.starts_with("protocol: holdout (fraction 0.30, seed 0)"),
        "{text}"
    );
    assert!(text.contains("overall"), "{text}");
}

#[test]
fn out_of_range_fraction_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let tree = tmp.path().join("tree");
    write_class_tree(&tree);
    let out = run(&[
        "evaluate",
        "--data",
        tree.to_str().unwrap(),
        "--method",
        "rp",
        "--protocol",
        "holdout",
        "--fraction",
        "1.5",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn unsplittable_holdout_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let tree = tmp.path().join("tree");
    write_class_tree(&tree);
    // 5% of a three-sample class rounds to an empty test side.
    let out = run(&[
        "evaluate",
        "--data",
        tree.to_str().unwrap(),
        "--method",
        "rp",
        "--protocol",
        "holdout",
        "--fraction",
        "0.05",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("error:"));
}

#[test]
fn empty_data_directory_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("empty");
    std::fs::create_dir(&data).unwrap();
    let model = tmp.path().join("som.json");
    let out = run(&[
        "som-train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!model.exists());
}
