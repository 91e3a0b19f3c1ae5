//! End-to-end behaviour of the `dsanet` binary.

use std::path::Path;
use std::process::{Command, Output};

use dsanet_core::metrics::MetricsReport;
use dsanet_core::model::{Ctx, DsaNet, ModelConfig};
use dsanet_core::pipeline::{read_label, save_label, LabelMap, LABEL_FILE};
use dsanet_core::train::{argmax_classes, batch_tensors, RawSample};
use dsanet_core::{ParamStore, Tape};

fn dsanet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsanet")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn gen(dir: &Path, n: &str, seed: &str) -> Output {
    dsanet(&["gen-phantom", "--n", n, "--size", "32", "--frames", "4", "--seed", seed, "--out", s(dir)])
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn without_run_config(files: Vec<(String, Vec<u8>)>) -> Vec<(String, Vec<u8>)> {
    files.into_iter().filter(|(n, _)| n != "run_config.json").collect()
}

/// Small dataset plus a one-iteration model trained on it.
fn trained(root: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let data = root.join("data");
    assert!(gen(&data, "5", "3").status.success());
    let run = root.join("run");
    let o = dsanet(&[
        "train", "--data", s(&data), "--epochs", "1", "--iters-per-epoch", "1", "--base-channels", "4",
        "--frames", "4", "--patch", "32", "--no-augment", "--f64", "--out", s(&run),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    (data, run)
}

#[test]
fn gen_phantom_contract() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = gen(&a, "6", "7");
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(a.join("folds.json").is_file() && a.join("run_config.json").is_file());
    assert_eq!(std::fs::read_dir(&a).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count(), 6);
    let first = tree_bytes(&a);
    assert!(gen(&a, "6", "7").status.success());
    assert_eq!(tree_bytes(&a), first);
    // a different output directory changes only the recorded path
    assert!(gen(&b, "6", "7").status.success());
    assert_eq!(without_run_config(first), without_run_config(tree_bytes(&b)));

    let o = dsanet(&["gen-phantom", "--n", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--out"), "{}", stderr(&o));
    let o = dsanet(&["gen-phantom", "--n", "2", "--size", "8", "--out", s(&dir.path().join("c"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_config_reproduces_generation() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(gen(&a, "3", "11").status.success());
    let b = dir.path().join("b");
    let o = dsanet(&["gen-phantom", "--config", s(&a.join("run_config.json")), "--out", s(&b)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(without_run_config(tree_bytes(&a)), without_run_config(tree_bytes(&b)));
}

#[test]
fn verify_command() {
    let o = dsanet(&["verify", "--only", "metrics"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).all(|l| l.contains("metrics/")));
    let o = dsanet(&["verify", "--only", "gradients", "--inject-fault", "gelu"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gradients/gelu"), "{}", stderr(&o));
    assert_eq!(dsanet(&["verify", "--only", "nothing"]).status.code(), Some(2));
}

#[test]
fn infer_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = trained(dir.path());
    let log = std::fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);
    for f in ["best.ckpt", "last.ckpt", "model.json", "run_config.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }

    let pred = dir.path().join("pred");
    let o = dsanet(&[
        "infer", "--checkpoint", s(&run.join("last.ckpt")), "--input", s(&data), "--tta", "mirror", "--probs", "--f64",
        "--out", s(&pred),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p = read_label(&pred.join("phantom_0000").join("pred.pgm")).unwrap();
    assert_eq!((p.height, p.width), (32, 32));
    assert!(p.classes.iter().all(|&c| c <= 2));
    assert!(pred.join("phantom_0000").join("prob_2.pgm").is_file());

    // patch equal to the image: sliding-window output equals a direct forward pass
    let direct_pred = dir.path().join("direct");
    let o = dsanet(&[
        "infer", "--checkpoint", s(&run.join("last.ckpt")), "--input", s(&data.join("phantom_0001")), "--patch", "32",
        "--stride", "32", "--f64", "--out", s(&direct_pred),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = ModelConfig::load(&run.join("model.json")).unwrap();
    let mut store = ParamStore::<f64>::new(0);
    let net = DsaNet::new(&cfg, &mut store).unwrap();
    store.load_checkpoint(&run.join("last.ckpt")).unwrap();
    let input = RawSample::load(&data.join("phantom_0001"), cfg.frames).unwrap().normalized();
    let (seq, mip) = batch_tensors::<f64>(std::slice::from_ref(&input)).unwrap();
    let tape = Tape::new();
    let ctx = Ctx::new(&tape, &store);
    let probs = net.forward_tensors(&ctx, seq, mip).unwrap().logits_full.softmax(1).unwrap().value();
    let probs: Vec<f32> = probs.data().iter().map(|&v| v as f32).collect();
    let expected = argmax_classes(&probs, 3, 32, 32).unwrap();
    assert_eq!(read_label(&direct_pred.join("phantom_0001").join("pred.pgm")).unwrap(), expected);

    let report_dir = dir.path().join("report");
    let o = dsanet(&[
        "eval", "--pred", s(&pred), "--gt", s(&data), "--folds", s(&data.join("folds.json")), "--compare", s(&pred),
        "--out", s(&report_dir),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = MetricsReport::read_json(&report_dir.join("report.json")).unwrap();
    assert_eq!(report.folds.len(), 5);
    assert!(report.p_values["pred"].values().all(|&p| p == 1.0));
}

#[test]
fn perfect_predictions_score_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(gen(&data, "5", "4").status.success());
    let pred = dir.path().join("pred");
    for i in 0..5 {
        let id = format!("phantom_{i:04}");
        let gt = read_label(&data.join(&id).join(LABEL_FILE)).unwrap();
        std::fs::create_dir_all(pred.join(&id)).unwrap();
        save_label(&pred.join(&id).join("pred.pgm"), &gt).unwrap();
    }
    let out = dir.path().join("report");
    let o = dsanet(&["eval", "--pred", s(&pred), "--gt", s(&data), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    for view in ["BV", "MAT", "all"] {
        for metric in ["jac", "dice", "sen", "pre"] {
            assert_eq!(json[view][metric], 1.0, "{view}.{metric}");
        }
    }
    assert_eq!(json["all"]["cldice"], 1.0);
    let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["BV", "MAT", "all", "fold_stats", "folds", "p_values"]);

    std::fs::remove_file(data.join("phantom_0002").join(LABEL_FILE)).unwrap();
    let o = dsanet(&["eval", "--pred", s(&pred), "--gt", s(&data)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn mismatched_checkpoint_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = trained(dir.path());
    let mut cfg = ModelConfig::load(&run.join("model.json")).unwrap();
    cfg.base_channels = 8;
    let other = dir.path().join("model8.json");
    cfg.save(&other).unwrap();
    let o = dsanet(&[
        "infer", "--checkpoint", s(&run.join("last.ckpt")), "--model", s(&other), "--input", s(&data),
        "--out", s(&dir.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("checkpoint [4"), "{}", stderr(&o));
}

#[test]
fn diverging_training_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(gen(&data, "5", "3").status.success());
    let o = dsanet(&[
        "train", "--data", s(&data), "--epochs", "3", "--iters-per-epoch", "2", "--base-channels", "4",
        "--frames", "4", "--patch", "32", "--lr", "1e30", "--out", s(&dir.path().join("run")),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));
}

#[test]
fn minip_and_resample_commands() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(gen(&data, "1", "2").status.success());
    let sample = data.join("phantom_0000");
    let m = dir.path().join("m");
    assert!(dsanet(&["minip", "--input", s(&sample), "--out", s(&m)]).status.success());
    assert_eq!(std::fs::read(m.join("minip.pgm")).unwrap(), std::fs::read(sample.join("minip.pgm")).unwrap());

    let r = dir.path().join("r");
    let o = dsanet(&["resample", "--input", s(&sample), "--frames", "7", "--out", s(&r)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let loaded = RawSample::load(&r, 7).unwrap();
    assert_eq!(loaded.sequence.len(), 7);
    assert_eq!(loaded.sequence.source_frame_count, 4);
    let label: LabelMap = loaded.label.unwrap();
    assert_eq!(label, read_label(&sample.join(LABEL_FILE)).unwrap());
}
