use std::fs;
use std::path::Path;
use std::process::Command;

use grrnn::cli::{run, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

fn grrnn(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("grrnn").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn inspect_prints_the_full_width_table() {
    let (code, out, _) = grrnn(&["inspect"]);
    assert_eq!(code, EXIT_OK);
    let line = |name: &str| out.lines().find(|l| l.split_whitespace().next() == Some(name)).unwrap().to_string();
    assert!(line("fgrr").contains("6731089"), "{out}");
    assert!(line("baseline").contains("1.67G"), "{out}");
    assert!(line("f").contains("1.21G"), "{out}");
    let (code, out, _) = grrnn(&["inspect", "--variant", "fr", "--writers", "10", "--width", "0.25"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 2);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(grrnn(&["gen", "--writers", "3"]).0, EXIT_USAGE);
    assert_eq!(grrnn(&["bogus"]).0, EXIT_USAGE);
    assert_eq!(grrnn(&["inspect", "--variant", "frrr"]).0, EXIT_USAGE);
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = grrnn(&["train", "--manifest", path(&dir.path().join("m.tsv"))]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("--out"), "{err}");
    let (code, _, err) = grrnn(&["gen", "--writers", "1", "--out", path(dir.path())]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("2 writers"), "{err}");
    assert_eq!(grrnn(&["help"]).0, EXIT_OK);
}

#[test]
fn missing_manifest_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = grrnn(&[
        "train",
        "--manifest",
        path(&dir.path().join("absent.tsv")),
        "--out",
        path(&dir.path().join("run")),
    ]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(err.contains("absent.tsv"), "{err}");
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let (code, out, _) = grrnn(&["gen", "--writers", "2", "--words", "25", "--seed", "5", "--out", path(d)]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("50 images (40 train, 10 test)"), "{out}");
    }
    let files = |root: &Path| {
        let mut v: Vec<_> = fs::read_dir(root.join("writer_0001"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        v.sort();
        v
    };
    assert_eq!(fs::read(a.join("manifest.tsv")).unwrap(), fs::read(b.join("manifest.tsv")).unwrap());
    for (fa, fb) in files(&a).iter().zip(files(&b)) {
        assert_eq!(fs::read(fa).unwrap(), fs::read(fb).unwrap());
    }
}

#[test]
fn config_file_with_flag_overrides_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert_eq!(grrnn(&["gen", "--writers", "3", "--words", "25", "--out", path(&corpus)]).0, EXIT_OK);
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# tiny\nvariant=frr\naxis=vertical\nwidth=0.25\nepochs=3\nbatch=8\nlr=0.001\n").unwrap();
    let run_dir = dir.path().join("run");
    let manifest = corpus.join("manifest.tsv");
    let (code, out, err) = grrnn(&[
        "train",
        "--config",
        path(&cfg),
        "--manifest",
        path(&manifest),
        "--out",
        path(&run_dir),
        "--epochs",
        "1",
        "--no-augment",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.starts_with("lr=0.001 batch=8 epochs=1 decay=0.0001 epsilon=0.1 halve_every=10 seed=0\n"), "{out}");
    let echo = fs::read_to_string(run_dir.join("config.txt")).unwrap();
    assert!(echo.contains("variant=frr\n") && echo.contains("axis=vertical\n") && echo.contains("augment=false\n"));

    let ckpt = run_dir.join("model.ckpt");
    let results = dir.path().join("results.csv");
    let per_writer = dir.path().join("per_writer.csv");
    let (code, out, err) = grrnn(&[
        "eval",
        "--checkpoint",
        path(&ckpt),
        "--manifest",
        path(&manifest),
        "--variant",
        "frr",
        "--out",
        path(&results),
        "--per-writer",
        path(&per_writer),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(out.lines().count(), 5);
    let csv = fs::read_to_string(&results).unwrap();
    assert!(csv.starts_with("protocol,variant,axis,mode,top1,top5\nword,frr,vertical,gray,"), "{csv}");
    let pw = fs::read_to_string(&per_writer).unwrap();
    assert_eq!(pw.lines().count(), 4);

    let (code, _, err) = grrnn(&["eval", "--checkpoint", path(&ckpt), "--manifest", path(&manifest), "--variant", "fgrr"]);
    assert_eq!(code, EXIT_RUNTIME);
    assert!(err.contains("frr-vertical"), "{err}");
}

#[test]
fn binary_reports_usage_errors() {
    let status = Command::new(env!("CARGO_BIN_EXE_grrnn"))
        .args(["train"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
    let status = Command::new(env!("CARGO_BIN_EXE_grrnn")).args(["inspect", "--variant", "f"]).output().unwrap();
    assert_eq!(status.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&status.stdout).contains("1614673"));
}
