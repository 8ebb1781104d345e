use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tcnn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcnn"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn tcnn")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const CONFIG: &str = "\
# tiny end-to-end run
frame_height = 32
frame_width = 32
video_length = 8
train_videos = 2
val_videos = 1
test_videos = 1
ae_epochs = 1
epochs = 1
data_dir = data
";

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.cfg"), CONFIG).unwrap();

    ok(tcnn(&["gen-data", "--config", "run.cfg", "--out", "data"], d));
    assert!(d.join("data/classes.tsv").exists());
    assert!(d.join("data/train/manifest.tsv").exists());

    let out = ok(tcnn(&["train-ae", "--config", "run.cfg", "--out", "ae.ckpt"], d));
    assert!(out.contains("validation reconstruction accuracy"));

    let out = ok(tcnn(&["train-seg", "--config", "run.cfg", "--ae", "ae.ckpt", "--out", "seg.ckpt"], d));
    assert!(out.contains("best validation mIoU"));

    ok(tcnn(&["eval", "--ckpt", "seg.ckpt", "--config", "run.cfg", "--out", "report.tsv"], d));
    let report = fs::read_to_string(d.join("report.tsv")).unwrap();
    assert!(report.starts_with("metric\tvalue\n"));
    assert!(report.contains("Mean IoU\t"));

    let video = fs::read_dir(d.join("data/test"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.is_dir())
        .unwrap();
    let frames = video.to_str().unwrap().to_owned();
    ok(tcnn(&["infer", "--ckpt", "seg.ckpt", "--frames", &frames, "--out", "pred"], d));
    for i in 0..8 {
        assert!(d.join(format!("pred/mask_{i}.pgm")).exists());
    }
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = tcnn(&["eval", "--ckpt", "missing.ckpt", "--data", "nowhere", "--out", "r.tsv"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    fs::write(dir.path().join("bad.cfg"), "epochs = two\n").unwrap();
    let out = tcnn(&["gen-data", "--config", "bad.cfg", "--out", "x"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}
