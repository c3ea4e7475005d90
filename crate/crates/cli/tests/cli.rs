use std::path::Path;
use std::process::{Command, Output};

use tbsm::dataset::Dataset;

fn tbsm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbsm"))
        .args(args)
        .env("TBSM_OUT", out)
        .output()
        .unwrap()
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = tbsm(args, out);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn fails(args: &[&str], out: &Path) -> String {
    let o = tbsm(args, out);
    assert!(!o.status.success(), "{args:?} succeeded");
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[E_"), "{err}");
    err
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_synth(out: &Path, count: &str) {
    ok(
        &["synth-gen", "--count", count, "--test-fraction", "0.2"],
        out,
    );
}

#[test]
fn gradcheck_prints_a_small_error() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["gradcheck"], dir.path());
    let line = stdout
        .lines()
        .find(|l| l.starts_with("max relative error:"))
        .unwrap();
    let err: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(err <= 1e-5, "{err}");
    assert_eq!(stdout.lines().count(), 9);
}

#[test]
fn gradcheck_fails_below_roundoff() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(&["gradcheck", "--tolerance", "1e-20"], dir.path());
    assert!(err.starts_with("error[E_CHECK]"), "{err}");
}

#[test]
fn synth_gen_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["synth-gen", "--preset", "delta3", "--count", "300"];
    let sha = |s: String| {
        s.lines()
            .skip(2)
            .map(|l| l.split_whitespace().next().unwrap().to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(sha(ok(&args, a.path())), sha(ok(&args, b.path())));
    for f in ["train.bin", "test.bin"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
    assert_eq!(Dataset::load(a.path().join("test.bin")).unwrap().len(), 50);
}

#[test]
fn synth_gen_with_zero_count_warns() {
    let dir = tempfile::tempdir().unwrap();
    let o = tbsm(&["synth-gen", "--count", "0"], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("label balance undefined"));
    assert!(Dataset::load(dir.path().join("train.bin"))
        .unwrap()
        .is_empty());
}

#[test]
fn prep_gives_one_test_point_per_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&["synth-raw", "--users", "100", "--processed"], out);
    let processed = out.join("processed.txt");
    assert_eq!(
        std::fs::read_to_string(&processed).unwrap().lines().count(),
        100
    );
    let prepped = out.join("prepped");
    let stdout = ok(
        &[
            "prep",
            "--processed",
            p(&processed),
            "--tau",
            "20",
            "--out",
            p(&prepped),
        ],
        out,
    );
    assert!(
        stdout.contains("100 records, 200 train points, 100 test points"),
        "{stdout}"
    );
    let test = Dataset::load(prepped.join("test.bin")).unwrap();
    assert_eq!((test.len(), test.tau()), (100, 20));

    let from_raw = out.join("from-raw");
    let stdout = ok(
        &[
            "prep",
            "--raw",
            p(&out.join("raw.csv")),
            "--out",
            p(&from_raw),
        ],
        out,
    );
    assert!(
        stdout.contains("100 users, 100 records, 0 rejected rows"),
        "{stdout}"
    );
}

#[test]
fn prep_reports_the_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/tests/fixtures/bad_label.txt"
    );
    let err = fails(&["prep", "--processed", fixture], dir.path());
    assert!(
        err.starts_with("error[E_PARSE]") && err.contains("line 3"),
        "{err}"
    );
}

#[test]
fn missing_inputs_and_bad_config_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let err = fails(
        &[
            "train",
            "--set",
            "train=/nonexistent/train.bin",
            "--set",
            "test=/nonexistent/test.bin",
        ],
        out,
    );
    assert!(err.contains("/nonexistent/train.bin"), "{err}");
    assert!(fails(&["train"], out).starts_with("error[E_CONFIG]"));
    assert!(fails(&["train", "--set", "variant=3-cubic"], out).starts_with("error[E_CONFIG]"));
    assert!(fails(&["train", "--set", "bogus=1"], out).starts_with("error[E_CONFIG]"));
}

#[test]
fn fresh_model_ranks_at_random() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    small_synth(out, "20000");
    let test = out.join("test.bin");
    let stdout = ok(
        &[
            "eval",
            "--set",
            &format!("test={}", p(&test)),
            "--set",
            "variant=1-dot",
        ],
        out,
    );
    let auc: f64 = stdout.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!((auc - 0.5).abs() <= 0.05, "{stdout}");
    assert_eq!(
        std::fs::read_to_string(out.join("scores.csv"))
            .unwrap()
            .lines()
            .count(),
        4001
    );
}

#[test]
fn train_then_eval_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    small_synth(out, "6000");
    let (train, test) = (out.join("train.bin"), out.join("test.bin"));
    let set = [
        "--set".to_string(),
        format!("train={}", p(&train)),
        "--set".to_string(),
        format!("test={}", p(&test)),
        "--set".to_string(),
        "variant=1-dot".to_string(),
        "--set".to_string(),
        "seeds=[0, 1]".to_string(),
        "--set".to_string(),
        "batch_size=32".to_string(),
    ];
    let run = out.join("run");
    let mut args: Vec<&str> = vec!["train", "--out", p(&run)];
    args.extend(set.iter().map(String::as_str));
    ok(&args, out);
    for f in [
        "config.toml",
        "metrics.csv",
        "losses.csv",
        "summary.csv",
        "aucs.csv",
        "checkpoints/seed-1.bin",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let ckpt = run.join("checkpoints/seed-0.bin");
    let stdout = ok(&["eval", "--checkpoint", p(&ckpt), "--data", p(&test)], out);
    let auc: f64 = stdout.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(auc > 0.9, "{stdout}");
}

#[test]
fn report_builds_the_nine_row_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    small_synth(out, "400");
    let data = [
        format!("train={}", p(&out.join("train.bin"))),
        format!("test={}", p(&out.join("test.bin"))),
    ];
    let table = out.join("table");
    ok(
        &[
            "report",
            "--out",
            p(&table),
            "--set",
            &data[0],
            "--set",
            &data[1],
            "--set",
            "seeds=[3]",
            "--set",
            "batch_size=32",
        ],
        out,
    );
    let text = std::fs::read_to_string(table.join("table.csv")).unwrap();
    let labels: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(
        labels,
        [
            "GenSim(S^n)",
            "CosSim(S^n)",
            "DotSim(R^n)",
            "IndSim(S^n)",
            "TSL(4-seq)",
            "TSL(4-inner)",
            "TSL(8-inner)",
            "LSTM(5-stack)",
            "MHA(8-heads)"
        ]
    );

    let mut summaries: Vec<String> = [
        "mha8", "gensim", "4-seq", "dotsim", "lstm5", "indsim", "8-inner", "cossim", "4-inner",
    ]
    .iter()
    .map(|v| p(&table.join(v).join("summary.csv")).to_string())
    .collect();
    summaries.insert(0, "--summaries".into());
    let again = out.join("again");
    let mut args: Vec<&str> = vec!["report", "--out", p(&again)];
    args.extend(summaries.iter().map(String::as_str));
    ok(&args, out);
    assert_eq!(
        std::fs::read_to_string(again.join("table.csv")).unwrap(),
        text
    );
}
