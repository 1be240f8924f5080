//! Runs the built binary on the shared end-to-end fixture.
//!
//! Set `UPDATE_GOLDEN=1` to rewrite the files under `tests/golden/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/e2e")
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn exam_eval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exam-eval"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = exam_eval(args);
    assert!(
        out.status.success(),
        "exam-eval {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// generate, grade, qrels, cover, leaderboards, agreement and correlate.
fn pipeline(dir: &Path, parallelism: &str) -> BTreeMap<String, Vec<u8>> {
    let f = fixture();
    let out = |name: &str| dir.join(name);
    let (bank, store) = (out("bank.json"), out("grades.jsonl.gz"));
    ok(&[
        "generate",
        "--queries",
        s(&f.join("queries.json")),
        "--template",
        "dl",
        "--out",
        s(&bank),
        "--mock",
        "lexical",
        "--parallelism",
        parallelism,
    ]);
    ok(&[
        "grade",
        "--bank",
        s(&bank),
        "--runs",
        s(&f.join("runs")),
        "--qrels",
        s(&f.join("official.qrels")),
        "--passages",
        s(&f.join("passages.jsonl")),
        "--mode",
        "rate",
        "--store",
        s(&store),
        "--mock",
        "lexical",
        "--parallelism",
        parallelism,
    ]);
    let common = ["--bank", s(&bank), "--grades", s(&store), "--policy", "rate:4"];
    ok(&[&["qrels", "--out", s(&out("exam.qrels"))], &common[..]].concat());
    ok(&[
        &["qrels", "--graded", "--out", s(&out("exam-graded.qrels"))],
        &common[..],
    ]
    .concat());
    ok(&[
        &[
            "cover",
            "--run",
            s(&f.join("runs/alpha.run")),
            "--depth",
            "2",
            "--out",
            s(&out("alpha.cover.tsv")),
        ],
        &common[..],
    ]
    .concat());
    let official = f.join("official_ranks.json");
    let runs = f.join("runs");
    ok(&[
        &[
            "leaderboard",
            "--metric",
            "cover",
            "--depth",
            "2",
            "--runs",
            s(&runs),
            "--official",
            s(&official),
        ],
        &["--out", s(&out("cover.tsv"))][..],
        &common[..],
    ]
    .concat());
    ok(&[
        &[
            "leaderboard",
            "--metric",
            "p2",
            "--runs",
            s(&runs),
            "--official",
            s(&official),
        ],
        &["--out", s(&out("p2.tsv"))][..],
        &common[..],
    ]
    .concat());
    ok(&[
        "leaderboard",
        "--metric",
        "p2",
        "--runs",
        s(&runs),
        "--official",
        s(&official),
        "--qrels",
        s(&f.join("official.qrels")),
        "--out",
        s(&out("p2.official.tsv")),
    ]);
    ok(&[
        &[
            "agreement",
            "--labels",
            s(&out("exam-graded.qrels")),
            "--judgments",
            s(&f.join("official.qrels")),
        ],
        &[
            "--min-answers",
            "1,2",
            "--out",
            s(&out("agreement.txt")),
            "--out-tsv",
            s(&out("agreement.tsv")),
        ][..],
        &common[..],
    ]
    .concat());
    ok(&[
        "correlate",
        "--a",
        s(&out("cover.tsv")),
        "--b",
        s(&out("p2.official.tsv")),
        "--out",
        s(&out("correlate.tsv")),
    ]);

    let mut artifacts = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.ends_with(".skipped.jsonl") {
            continue;
        }
        artifacts.insert(name, fs::read(&path).unwrap());
    }
    artifacts
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.clone(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn pipeline_is_deterministic_and_matches_golden() {
    let before = snapshot(&fixture());
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let first = pipeline(a.path(), "1");
    let second = pipeline(b.path(), "4");
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    for (name, bytes) in &first {
        assert!(second[name] == *bytes, "{name} differs between runs");
    }
    assert_eq!(snapshot(&fixture()), before, "inputs were modified");

    let golden = golden_dir();
    let text_artifacts = first.iter().filter(|(name, _)| !name.ends_with(".gz"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(&golden).unwrap();
        for (name, bytes) in text_artifacts {
            fs::write(golden.join(name), bytes).unwrap();
        }
        return;
    }
    for (name, bytes) in text_artifacts {
        let want = fs::read(golden.join(name)).unwrap_or_else(|e| panic!("golden {name}: {e}"));
        assert!(
            want == *bytes,
            "{name} differs from golden:\n{}",
            String::from_utf8_lossy(bytes)
        );
    }

    let board = String::from_utf8(first["cover.tsv"].clone()).unwrap();
    let score = |sys: &str| -> f64 {
        let line = board.lines().find(|l| l.starts_with(&format!("{sys}\t"))).unwrap();
        line.split('\t').nth(1).unwrap().parse().unwrap()
    };
    assert!(score("alpha") > score("beta"));
}

#[test]
fn rerunning_grade_requests_nothing_new() {
    let dir = TempDir::new().unwrap();
    let f = fixture();
    let bank = dir.path().join("bank.json");
    let store = dir.path().join("grades.jsonl.gz");
    ok(&[
        "generate",
        "--queries",
        s(&f.join("queries.json")),
        "--template",
        "dl",
        "--out",
        s(&bank),
        "--mock",
        "lexical",
    ]);
    let (runs, passages) = (f.join("runs"), f.join("passages.jsonl"));
    let grade = [
        "grade",
        "--bank",
        s(&bank),
        "--runs",
        s(&runs),
        "--passages",
        s(&passages),
        "--mode",
        "rate",
        "--store",
        s(&store),
        "--mock",
        "lexical",
    ];
    ok(&grade);
    let once = fs::read(&store).unwrap();
    ok(&grade);
    assert_eq!(fs::read(&store).unwrap(), once);
}

#[test]
fn cover_prints_per_query_and_mean() {
    let dir = TempDir::new().unwrap();
    let f = fixture();
    let bank = dir.path().join("bank.json");
    let store = dir.path().join("g.jsonl.gz");
    ok(&[
        "generate",
        "--queries",
        s(&f.join("queries.json")),
        "--template",
        "dl",
        "--out",
        s(&bank),
        "--mock",
        "lexical",
    ]);
    ok(&[
        "grade",
        "--bank",
        s(&bank),
        "--runs",
        s(&f.join("runs")),
        "--passages",
        s(&f.join("passages.jsonl")),
        "--mode",
        "rate",
        "--store",
        s(&store),
        "--mock",
        "lexical",
    ]);
    let out = ok(&[
        "cover",
        "--bank",
        s(&bank),
        "--run",
        s(&f.join("runs/beta.run")),
        "--grades",
        s(&store),
        "--policy",
        "rate:4",
        "--depth",
        "20",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "query\tcover");
    assert!(lines[1].starts_with("q1\t"));
    assert!(lines.iter().any(|l| l.starts_with("all\t")));
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = exam_eval(&["cover", "--bank", "b.json"]);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--run"), "{stderr}");
    assert!(stderr.contains("Usage"), "{stderr}");
}

#[test]
fn unknown_subcommand_and_flag_exit_1() {
    assert_eq!(code(&exam_eval(&["frobnicate"])), 1);
    assert_eq!(code(&exam_eval(&["correlate", "--a", "x", "--b", "y", "--bogus"])), 1);
    assert_eq!(code(&exam_eval(&["--help"])), 0);
}

#[test]
fn invalid_policy_exits_1_and_missing_file_exits_2() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let bank = dir.path().join("bank.json");
    ok(&[
        "generate",
        "--queries",
        s(&f.join("queries.json")),
        "--template",
        "dl",
        "--out",
        s(&bank),
        "--mock",
        "lexical",
    ]);
    let missing = dir.path().join("nope.jsonl.gz");
    let out = exam_eval(&[
        "qrels",
        "--bank",
        s(&bank),
        "--grades",
        s(&missing),
        "--policy",
        "rate:9",
    ]);
    assert_eq!(code(&out), 1);
    let out = exam_eval(&[
        "diff",
        "--old",
        s(&dir.path().join("absent.json")),
        "--new",
        s(&bank),
        "--grades",
        "x",
        "--policy",
        "qa",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn backend_failures_exit_2_and_leave_a_skip_log() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let bank = dir.path().join("bank.json");
    let store = dir.path().join("grades.jsonl.gz");
    let broken = dir.path().join("broken.json");
    ok(&[
        "generate",
        "--queries",
        s(&f.join("queries.json")),
        "--template",
        "dl",
        "--out",
        s(&bank),
        "--mock",
        "lexical",
    ]);
    fs::write(
        &broken,
        r#"{"rules": [{"passage_id": "q2-c", "fail": "model crashed"}], "fallback": "lexical"}"#,
    )
    .unwrap();
    let out = exam_eval(&[
        "grade",
        "--bank",
        s(&bank),
        "--runs",
        s(&f.join("runs")),
        "--passages",
        s(&f.join("passages.jsonl")),
        "--mode",
        "rate",
        "--store",
        s(&store),
        "--mock",
        s(&broken),
        "--max-retries",
        "0",
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(dir.path().join("grades.jsonl.gz.skipped.jsonl")).unwrap();
    assert!(log.lines().count() > 0 && log.lines().all(|l| l.contains("q2-c")));
}

#[test]
fn config_file_fills_flags_and_flags_win() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let bank = dir.path().join("bank.json");
    let config = dir.path().join("exam.conf");
    fs::write(
        &config,
        format!(
            "# shared settings\nqueries = {}\ntemplate = car\nmock = lexical\npolicy = rate:4\n",
            f.join("queries.json").display()
        ),
    )
    .unwrap();
    // the fixture queries have no facets, so the car template from the file is rejected
    let out = exam_eval(&["generate", "--config", s(&config), "--out", s(&bank)]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    ok(&[
        "generate",
        "--config",
        s(&config),
        "--out",
        s(&bank),
        "--template",
        "dl",
    ]);
    assert!(bank.exists());

    fs::write(&config, "no_such_flag = 3\n").unwrap();
    assert_eq!(
        code(&exam_eval(&["generate", "--config", s(&config), "--out", s(&bank)])),
        1
    );
}
