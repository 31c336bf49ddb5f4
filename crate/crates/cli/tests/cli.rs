use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use memvit::augment::{AugmentSpec, ImageBuffer};
use memvit::datakit::{ImageRecord, Manifest, Source};
use memvit::trainer::TrainConfig;
use memvit::vit::ModelConfig;
use tempfile::TempDir;

fn memvit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memvit"))
        .args(args)
        .output()
        .expect("spawn memvit")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn pattern(seed: usize, side: usize) -> ImageBuffer {
    ImageBuffer::from_fn(side, side, |x, y| {
        let t = (seed * 37 + x * 11 + y * 7 + (x * y) % 5) % 97;
        let u = (seed * 53 + x * 3 + y * 19) % 89;
        [t as f32 / 96.0, u as f32 / 88.0, ((x + seed) % 4) as f32 / 3.0]
    })
}

/// `n` 12×12 PNGs plus a manifest next to them.
fn corpus(dir: &Path, name: &str, n: usize, source: Source) -> PathBuf {
    fs::create_dir_all(dir.join("img")).unwrap();
    let records = (0..n)
        .map(|i| {
            let id = format!("{name}{i:02}");
            let rel = PathBuf::from("img").join(format!("{id}.png"));
            pattern(i + 100 * name.len(), 12).save(&dir.join(&rel)).unwrap();
            ImageRecord::new(id, rel, (i as f64 + 0.5) / n as f64, source)
        })
        .collect();
    let path = dir.join(format!("{name}.csv"));
    Manifest::new(records).unwrap().save(&path).unwrap();
    path
}

fn tiny_config(dir: &Path) -> PathBuf {
    let cfg = TrainConfig {
        batch_size: 4,
        resize_to: 10,
        crop_to: 8,
        learning_rate: 1e-3,
        epochs: 2,
        seed: 5,
        model: ModelConfig::tiny(),
        augment: AugmentSpec::with_probability(5, 0.5),
        ..TrainConfig::default()
    };
    let path = dir.join("train.toml");
    fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path
}

fn train_tiny(dir: &Path) -> (PathBuf, PathBuf) {
    let m = corpus(&dir.join("data"), "lamem", 8, Source::Lamem);
    let out = dir.join("run");
    let o = memvit(&[
        "--threads",
        "1",
        "train",
        "--config",
        p(&tiny_config(dir)),
        "--train",
        p(&m),
        "--val",
        p(&m),
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    (out, m)
}

#[test]
fn help_on_every_subcommand() {
    let flags: &[(&str, &[&str])] = &[
        (
            "train",
            &["--config", "--train", "--val", "--out", "--seed", "--epochs"],
        ),
        ("predict", &["--model", "--images"]),
        ("evaluate", &["--model", "--manifest", "--predictions"]),
        (
            "dedup",
            &[
                "--manifests",
                "--embeddings",
                "--embedder",
                "--model",
                "--threshold",
                "--out",
            ],
        ),
        (
            "split",
            &[
                "--manifest",
                "--test-count",
                "--test-fraction",
                "--splits",
                "--seed",
                "--out",
            ],
        ),
        ("kfold", &["--manifest", "--k", "--repeats", "--seed", "--out"]),
        (
            "semantic",
            &[
                "--captions-a",
                "--scores-a",
                "--captions-b",
                "--scores-b",
                "--percentile",
                "--tagged",
                "--plot",
                "--out",
            ],
        ),
        ("gradcheck", &["--step", "--seed", "--ops-only"]),
    ];
    for (cmd, expected) in flags {
        let o = memvit(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{cmd}");
        let text = stdout(&o);
        for f in *expected {
            assert!(text.contains(f), "`{cmd} --help` does not mention {f}");
        }
        assert!(text.contains("--threads"), "{cmd}");
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(memvit(&[]).status.code(), Some(2));
    assert_eq!(memvit(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(memvit(&["split", "--manifest", "m.csv"]).status.code(), Some(2));
    assert_eq!(memvit(&["predict", "--model", "x"]).status.code(), Some(2));
    assert_eq!(memvit(&["gradcheck", "--step", "tiny"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1_with_message() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.csv");
    let o = memvit(&[
        "split",
        "--manifest",
        p(&missing),
        "--test-count",
        "1",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
}

#[test]
fn split_is_byte_identical_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let m = corpus(dir.path(), "lamem", 30, Source::Lamem);
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = memvit(&[
            "--threads",
            threads,
            "split",
            "--manifest",
            p(&m),
            "--test-count",
            "7",
            "--splits",
            "3",
            "--seed",
            "11",
            "--out",
            p(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(stdout(&o), "split,train,test\n1,23,7\n2,23,7\n3,23,7\n");
        out
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "4");
    for k in 1..=3 {
        for side in ["train", "test"] {
            let name = format!("split{k}_{side}.txt");
            let bytes = fs::read(a.join(&name)).unwrap();
            assert_eq!(bytes, fs::read(b.join(&name)).unwrap(), "{name}");
            assert_eq!(bytes, fs::read(c.join(&name)).unwrap(), "{name}");
        }
        let test = fs::read_to_string(a.join(format!("split{k}_test.txt"))).unwrap();
        assert_eq!(test.lines().count(), 7);
    }
    let o = memvit(&[
        "split",
        "--manifest",
        p(&m),
        "--test-fraction",
        "0.2",
        "--out",
        p(&dir.path().join("f")),
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 11);
}

#[test]
fn kfold_writes_every_fold() {
    let dir = TempDir::new().unwrap();
    let m = corpus(dir.path(), "memcat", 11, Source::Memcat);
    let out = dir.path().join("folds");
    let o = memvit(&[
        "kfold",
        "--manifest",
        p(&m),
        "--k",
        "3",
        "--repeats",
        "2",
        "--seed",
        "1",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<String> = stdout(&o).lines().skip(1).map(String::from).collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0], "1,1,7,4");
    assert_eq!(rows[2], "1,3,8,3");
    for r in 1..=2 {
        let mut seen = Vec::new();
        for k in 1..=3 {
            let v = fs::read_to_string(out.join(format!("repeat{r}_fold{k}_validation.txt"))).unwrap();
            seen.extend(v.lines().map(String::from));
            assert!(out.join(format!("repeat{r}_fold{k}_train.txt")).exists());
        }
        seen.sort();
        assert_eq!(seen.len(), 11);
        seen.dedup();
        assert_eq!(seen.len(), 11);
    }
}

#[test]
fn train_predict_evaluate() {
    let dir = TempDir::new().unwrap();
    let (out, m) = train_tiny(dir.path());
    for f in [
        "best/header.toml",
        "best/tensors.bin",
        "last/header.toml",
        "history.csv",
        "config.toml",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    assert!(history.starts_with("epoch,train_mse,val_mse,val_spearman\n"));

    let img = dir.path().join("data/img/lamem03.png");
    let o = memvit(&["predict", "--model", p(&out.join("best")), "--images", p(&img)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    let (path, score) = line.trim().rsplit_once(',').unwrap();
    assert_eq!(path, p(&img));
    let score: f64 = score.parse().unwrap();
    assert!(score > 0.0 && score < 1.0);

    let missing = dir.path().join("gone.png");
    let o = memvit(&[
        "predict",
        "--model",
        p(&out.join("best")),
        "--images",
        p(&img),
        p(&missing),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).lines().count(), 1);
    assert!(stderr(&o).contains("gone.png"));

    let preds = dir.path().join("preds.csv");
    let o = memvit(&[
        "evaluate",
        "--model",
        p(&out.join("last")),
        "--manifest",
        p(&m),
        "--predictions",
        p(&preds),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,mse,spearman,r_squared"));
    let report = memvit::metrics::MetricsReport::parse_csv_row(lines.next().unwrap()).unwrap();
    assert_eq!(report.n, 8);
    assert_eq!(fs::read_to_string(&preds).unwrap().lines().count(), 9);
}

#[test]
fn train_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let (out_a, _) = train_tiny(a.path());
    let (out_b, _) = train_tiny(b.path());
    for f in ["history.csv", "best/tensors.bin", "last/tensors.bin"] {
        assert_eq!(
            fs::read(out_a.join(f)).unwrap(),
            fs::read(out_b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn dedup_removes_planted_copy_and_is_idempotent() {
    let dir = TempDir::new().unwrap();
    let lamem = corpus(&dir.path().join("a"), "lamem", 6, Source::Lamem);
    let figrim_dir = dir.path().join("b");
    let figrim = corpus(&figrim_dir, "figrim", 4, Source::Figrim);
    // plant a copy of a LaMem image inside the FIGRIM set
    fs::copy(
        dir.path().join("a/img/lamem02.png"),
        figrim_dir.join("img/figrim01.png"),
    )
    .unwrap();

    let out = dir.path().join("out");
    let o = memvit(&[
        "dedup",
        "--manifests",
        p(&lamem),
        p(&figrim),
        "--embedder",
        "thumbnail",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "source_a,source_b,pairs\nlamem,figrim,1\n");
    let report = fs::read_to_string(out.join("dedup_report.csv")).unwrap();
    assert!(
        report.lines().nth(1).unwrap().starts_with("lamem02,figrim01,"),
        "{report}"
    );
    let merged = Manifest::load(&out.join("merged.csv")).unwrap();
    assert_eq!(merged.len(), 9);
    assert!(!merged.ids().contains(&"figrim01"));
    assert_eq!(Manifest::load(&out.join("cleaned/figrim.csv")).unwrap().len(), 3);
    assert!(out.join("embeddings.csv").exists());

    let again = dir.path().join("again");
    let o = memvit(&[
        "dedup",
        "--manifests",
        p(&out.join("merged.csv")),
        "--embeddings",
        p(&out.join("embeddings.csv")),
        "--out",
        p(&again),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "source_a,source_b,pairs\n");
    assert_eq!(Manifest::load(&again.join("merged.csv")).unwrap().len(), 9);
}

#[test]
fn dedup_flag_conflicts_are_runtime_errors() {
    let dir = TempDir::new().unwrap();
    let m = corpus(dir.path(), "lamem", 2, Source::Lamem);
    let out = dir.path().join("o");
    let o = memvit(&["dedup", "--manifests", p(&m), "--embedder", "vit", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--model"));
    let o = memvit(&["dedup", "--manifests", p(&m), "--embedder", "file", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

fn semantic_fixture(dir: &Path) -> [PathBuf; 4] {
    let ca = dir.join("captions_a.csv");
    fs::write(
        &ca,
        "id,caption\n\
         a1,\"A dog runs on the beach.\"\n\
         a2,A man walks his dog in the park\n\
         a3,Two cars parked near a building\n\
         a4,A woman holds a cat\n\
         a5,The cat sleeps on a car\n\
         a6,A beach with a building\n",
    )
    .unwrap();
    let sa = dir.join("scores_a.csv");
    fs::write(&sa, "id,score\na1,0.9\na2,0.8\na3,0.4\na4,0.7\na5,0.6\na6,0.5\n").unwrap();
    let cb = dir.join("captions_b.csv");
    fs::write(
        &cb,
        "id,caption\n\
         b1,dogs on a beach\n\
         b2,a car and a building\n\
         b3,a cat with a dog\n\
         b4,cars near buildings\n",
    )
    .unwrap();
    let sb = dir.join("scores_b.csv");
    fs::write(
        &sb,
        "path,score\nimgs/b1.jpg,0.85\nimgs/b2.jpg,0.3\nimgs/b3.jpg,0.75\nimgs/b4.jpg,0.35\n",
    )
    .unwrap();
    [ca, sa, cb, sb]
}

#[test]
fn semantic_outputs_and_plot_gate() {
    let dir = TempDir::new().unwrap();
    let [ca, sa, cb, sb] = semantic_fixture(dir.path());
    let run = |out: &Path, plot: bool| {
        let mut args = vec![
            "semantic",
            "--captions-a",
            p(&ca),
            "--scores-a",
            p(&sa),
            "--captions-b",
            p(&cb),
            "--scores-b",
            p(&sb),
            "--percentile",
            "0",
            "--out",
            p(out),
        ];
        if plot {
            args.push("--plot");
        }
        memvit(&args)
    };
    let plain = dir.path().join("plain");
    let o = run(&plain, false);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(plain.join("noun_report.csv").exists());
    assert!(plain.join("nouns_a.csv").exists() && plain.join("nouns_b.csv").exists());
    assert!(!plain.join("noun_report.svg").exists());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("matched,spearman,r_squared"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    // counts in A: dog 2, beach 2, building 2, car 2, cat 2, man 1, park 1, woman 1; the
    // 0th percentile is 1, so nouns seen once are dropped. B keeps dog, car and
    // building (beach and cat appear once), leaving three shared nouns
    assert_eq!(row[0], 3.0);
    assert!((-1.0..=1.0).contains(&row[1]));

    let plotted = dir.path().join("plotted");
    assert!(run(&plotted, true).status.success());
    let svg = fs::read_to_string(plotted.join("noun_report.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert_eq!(
        fs::read(plain.join("noun_report.csv")).unwrap(),
        fs::read(plotted.join("noun_report.csv")).unwrap()
    );
}

#[test]
fn gradcheck_passes() {
    let o = memvit(&["gradcheck"]);
    assert!(o.status.success(), "{}\n{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("op,max_rel_error,entries,status\n"));
    assert_eq!(text.lines().count(), 9);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",PASS")), "{text}");
    assert!(text.contains("\nvit_mse,"));
}

#[test]
fn inputs_are_not_modified() {
    let dir = TempDir::new().unwrap();
    let m = corpus(dir.path(), "lamem", 10, Source::Lamem);
    let [ca, sa, cb, sb] = semantic_fixture(dir.path());
    let inputs: Vec<PathBuf> = fs::read_dir(dir.path())
        .unwrap()
        .chain(fs::read_dir(dir.path().join("img")).unwrap())
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .collect();
    let snapshot = || inputs.iter().map(|p| fs::read(p).unwrap()).collect::<Vec<_>>();
    let before = snapshot();
    let out = dir.path().join("out");
    for args in [
        vec![
            "split",
            "--manifest",
            p(&m),
            "--test-count",
            "3",
            "--splits",
            "2",
            "--out",
            p(&out),
        ],
        vec!["kfold", "--manifest", p(&m), "--k", "2", "--out", p(&out)],
        vec!["dedup", "--manifests", p(&m), "--out", p(&out)],
        vec![
            "semantic",
            "--captions-a",
            p(&ca),
            "--scores-a",
            p(&sa),
            "--captions-b",
            p(&cb),
            "--scores-b",
            p(&sb),
            "--percentile",
            "0",
            "--plot",
            "--out",
            p(&out),
        ],
    ] {
        let o = memvit(&args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
    assert_eq!(snapshot(), before);
}
