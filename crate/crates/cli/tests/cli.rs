use std::path::Path;
use std::process::Command;

fn grad(dir: &Path, args: &[&str]) -> std::process::Output {
    let cfg = dir.join("tiny.cfg");
    Command::new(env!("CARGO_BIN_EXE_grad"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("spawn grad")
}

#[test]
fn end_to_end_workflow() {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-e2e");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let data = dir.display();
    std::fs::write(
        dir.join("tiny.cfg"),
        format!(
            "# tiny run\nepochs = 1\nn_train = 4\nn_test = 2\nsteps = 64\nframe_size = 32\n\
             train_path = {data}/train.grd\ntest_path = {data}/test.grd\n"
        ),
    )
    .unwrap();

    let ok = |out: std::process::Output| {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    ok(grad(&dir, &["gen-data"]));
    assert!(dir.join("train.grd").exists() && dir.join("test.grd").exists());

    ok(grad(&dir, &["train"]));
    let epochs = std::fs::read_to_string(dir.join("epochs.csv")).unwrap();
    assert_eq!(epochs.lines().count(), 2);
    let ckpt = dir.join("model.grad");
    let ckpt = ckpt.to_str().unwrap();

    ok(grad(&dir, &["eval", "--checkpoint", ckpt]));
    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("run,corruption,severity,acc"));
    let preds = std::fs::read_to_string(dir.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 1 + 2 * 64);

    ok(grad(&dir, &["eval", "--checkpoint", ckpt, "--corruption", "contrast:3"]));
    assert!(std::fs::read_to_string(dir.join("metrics.csv")).unwrap().contains("contrast,3"));

    ok(grad(&dir, &["corrupt-eval", "--checkpoint", ckpt]));
    let robustness = std::fs::read_to_string(dir.join("robustness.csv")).unwrap();
    assert_eq!(robustness.lines().count(), 2 + 90);

    let report = dir.join("robustness.csv");
    let preds = dir.join("predictions.csv");
    ok(grad(&dir, &["plot", "--report", report.to_str().unwrap(), "--predictions", preds.to_str().unwrap()]));
    for name in ["severity.ppm", "ribbon_000.ppm", "ribbon_001.ppm"] {
        assert!(std::fs::read(dir.join(name)).unwrap().starts_with(b"P6\n"), "{name}");
    }
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-errors");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("tiny.cfg"), "epochs = 1\n").unwrap();
    let missing = grad(&dir, &["eval", "--checkpoint", "/nonexistent/model.grad"]);
    assert!(!missing.status.success());
    let bad = grad(&dir, &["eval", "--checkpoint", "x", "--corruption", "fog:9"]);
    assert!(!bad.status.success());
    assert_ne!(missing.status.code(), bad.status.code());
    let unknown = Command::new(env!("CARGO_BIN_EXE_grad")).arg("frobnicate").output().unwrap();
    assert!(!unknown.status.success());
}
