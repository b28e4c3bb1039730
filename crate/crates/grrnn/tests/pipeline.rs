use std::fs;
use std::path::Path;

use grrnn::checkpoint;
use grrnn::config::RunConfig;
use grrnn::corpus::{generate_corpus, MANIFEST_NAME};
use grrnn::pipeline::{evaluate, run_train, Protocol, METRICS_HEADER};
use grrnn_core::datagen::Split;
use grrnn_core::eval::{infer, Averaging};
use grrnn_core::model::VariantKind;

fn tiny_run(dir: &Path, kind: VariantKind) -> grrnn::pipeline::TrainReport {
    let corpus = dir.join("corpus");
    generate_corpus(3, 25, 11, &corpus).unwrap();
    let mut cfg = RunConfig::default();
    cfg.apply_text("variant=FGRR\nwidth=0.25\nepochs=2\nbatch=16\nseed=4\n").unwrap();
    cfg.variant = kind;
    cfg.manifest = Some(corpus.join(MANIFEST_NAME));
    cfg.out = Some(dir.join("run"));
    run_train(&cfg, &mut std::io::sink()).unwrap()
}

#[test]
fn checkpoint_reload_reproduces_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let report = tiny_run(dir.path(), VariantKind::FGRR);
    let (net, meta) = checkpoint::load(&report.checkpoint).unwrap();
    assert_eq!(meta, report.meta);
    assert_eq!(net, report.net);
    let images: Vec<_> = report.dataset.test.iter().map(|e| e.image.clone()).collect();
    let before = infer(&report.net, &images, 8).unwrap();
    let after = infer(&net, &images, 8).unwrap();
    for (a, b) in before.iter().zip(&after) {
        assert_eq!(a.probs, b.probs);
        assert_eq!(a.feature, b.feature);
    }
    // re-encoding the loaded network gives the same bytes
    let bytes = fs::read(&report.checkpoint).unwrap();
    assert_eq!(checkpoint::encode(&net, &meta), bytes);
}

#[test]
fn run_directory_holds_echo_metrics_and_results() {
    let dir = tempfile::tempdir().unwrap();
    let report = tiny_run(dir.path(), VariantKind::F);
    let run = dir.path().join("run");
    let echo = fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(echo.contains("variant=f\n") && echo.contains("epochs=2\n") && echo.contains("n_writers=3\n"), "{echo}");
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], METRICS_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,0.0001,"));

    let manifest = dir.path().join("corpus").join(MANIFEST_NAME);
    let eval = evaluate(
        &report.net,
        &report.meta,
        &manifest,
        Split::Test,
        &Protocol::ALL,
        Averaging::NormalizedMean,
    )
    .unwrap();
    assert_eq!(eval.rows.len(), 4);
    for r in &eval.rows {
        assert!((0.0..=1.0).contains(&r.top1) && r.top1 <= r.top5, "{r:?}");
        assert_eq!(r.variant, "f");
    }
    // three writers: top-5 always contains the right one
    assert!(eval.rows.iter().all(|r| r.top5 == 1.0));
    assert_eq!(eval.per_writer.len(), 3);
    assert!(eval.per_writer.iter().all(|(_, n, _)| *n == 5));
}

#[test]
fn baseline_checkpoint_has_no_head_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let report = tiny_run(dir.path(), VariantKind::Baseline);
    let bytes = fs::read(&report.checkpoint).unwrap();
    let names: Vec<String> = checkpoint::manifest(&bytes).unwrap().into_iter().map(|(n, _)| n).collect();
    assert!(names.iter().any(|n| n == "classifier.weight"));
    assert!(names.iter().all(|n| !n.starts_with("head.")), "{names:?}");
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let report = tiny_run(dir.path(), VariantKind::FR);
    let bytes = fs::read(&report.checkpoint).unwrap();
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(checkpoint::decode(&longer).is_err());
    assert!(checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(checkpoint::decode(&bad_magic).is_err());
}
