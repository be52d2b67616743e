use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use flowgame::dataset::{read_shard, Manifest, Record, MANIFEST_FILE};
use flowgame::EncodedGraph;

fn flowgame() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flowgame"))
}

fn ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{cmd:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn error_json(out: &Output) -> serde_json::Value {
    let line = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(line.trim()).unwrap_or_else(|e| panic!("stderr {line:?} is not JSON: {e}"))
}

fn manifest(dir: &Path) -> Manifest {
    Manifest::read(dir.join(MANIFEST_FILE)).unwrap()
}

fn generate(dir: &Path, args: &[&str]) {
    ok(flowgame().arg("generate").args(args).arg("--out").arg(dir));
}

#[test]
fn example_prints_worked_game() {
    let out = ok(flowgame().arg("example"));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("v({a1,a3}) = 3"));
    assert!(text.contains("v({a2,a3}) = 2"));
    assert!(text.contains("v({a1,a2,a3}) = 5"));
    assert!(text.contains("banzhaf raw: [1.5, 1.0, 2.5]"));
    assert!(text.contains("banzhaf normalized: [0.3, 0.2, 0.5]"));
}

#[test]
fn usage_errors_exit_one_with_json() {
    let out = flowgame().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"], "usage");

    let tmp = tempfile::tempdir().unwrap();
    let out = flowgame()
        .args(["generate", "--n", "2", "--m", "1", "--p", "0.5", "--out"])
        .arg(tmp.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(error_json(&out)["message"]
        .as_str()
        .unwrap()
        .contains("n must be at least 3"));
    assert!(
        !tmp.path().join("x").exists(),
        "validation happens before any output"
    );

    let out = flowgame()
        .args(["generate", "--m", "2", "--p", "0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two_with_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let out = flowgame()
        .arg("label")
        .arg("--in")
        .arg(tmp.path().join("missing"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "io");

    let data = tmp.path().join("data");
    generate(
        &data,
        &["--n", "6", "--m", "2", "--p", "0.8", "--count", "5"],
    );
    let shard = data.join("shard-00000.jsonl.gz");
    let mut bytes = fs::read(&shard).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    fs::write(&shard, bytes).unwrap();
    let out = flowgame()
        .arg("label")
        .arg("--in")
        .arg(&data)
        .arg("--out")
        .arg(tmp.path().join("labeled"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "hash_mismatch");
}

#[test]
fn generate_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "--n",
        "10",
        "--m",
        "3",
        "--p",
        "0.5",
        "--count",
        "30",
        "--shard-size",
        "7",
        "--seed",
        "11",
    ];
    generate(&tmp.path().join("a"), &args);
    generate(&tmp.path().join("b"), &args);
    let (a, b) = (
        manifest(&tmp.path().join("a")),
        manifest(&tmp.path().join("b")),
    );
    assert_eq!(a.shards, b.shards);
    assert_eq!(a.shards.len(), 5);

    // rerunning into the same directory with fewer shards leaves no stale files
    generate(
        &tmp.path().join("a"),
        &[
            "--n",
            "10",
            "--m",
            "3",
            "--p",
            "0.5",
            "--count",
            "8",
            "--shard-size",
            "7",
        ],
    );
    let mut names: Vec<_> = fs::read_dir(tmp.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "manifest.json",
            "shard-00000.jsonl.gz",
            "shard-00001.jsonl.gz"
        ]
    );
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("run.conf");
    fs::write(
        &conf,
        "# small run\nn=9\nm=2\np=0.6\ncount=12\nseed=5\nshard_size=5\n",
    )
    .unwrap();
    let out = tmp.path().join("d");
    ok(flowgame()
        .arg("generate")
        .arg("--config")
        .arg(&conf)
        .args(["--count", "7", "--out"])
        .arg(&out));
    let m = manifest(&out);
    assert_eq!(
        (m.config.n, m.config.m, m.config.count, m.config.base_seed),
        (9, 2, 7, 5)
    );
    assert_eq!(m.shard_size, 5);

    fs::write(&conf, "n=9\nwidth=3\n").unwrap();
    let bad = flowgame()
        .arg("generate")
        .arg("--config")
        .arg(&conf)
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn out_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    ok(flowgame().env("FLOWGAME_OUT_DIR", tmp.path()).args([
        "generate", "--n", "5", "--m", "1", "--p", "1.0", "--count", "3", "--out", "inst",
    ]));
    assert!(tmp.path().join("inst").join(MANIFEST_FILE).exists());
}

#[test]
fn hybrid_policy_uses_monte_carlo_for_twenty_agents() {
    let tmp = tempfile::tempdir().unwrap();
    let (inst, labeled) = (tmp.path().join("inst"), tmp.path().join("labeled"));
    generate(
        &inst,
        &["--n", "8", "--m", "20", "--p", "0.9", "--count", "2"],
    );
    ok(flowgame()
        .args(["label", "--policy", "hybrid", "--in"])
        .arg(&inst)
        .arg("--out")
        .arg(&labeled));
    let m = manifest(&labeled);
    let info = m.label.as_ref().unwrap();
    assert_eq!(info.method, "mc");
    assert_eq!(info.mc_samples, 10_000);
    let records: Vec<Record> = read_shard(&labeled, &m.shards[0]).unwrap();
    for r in &records {
        assert_eq!(r.label_method.as_deref(), Some("mc"));
        assert_eq!(r.mc_samples, Some(10_000));
        r.validate().unwrap();
    }
}

#[test]
fn exact_and_mc_policies() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = tmp.path().join("inst");
    generate(
        &inst,
        &["--n", "8", "--m", "3", "--p", "0.7", "--count", "6"],
    );
    for (policy, method) in [("exact", "exact"), ("mc", "mc")] {
        let out = tmp.path().join(policy);
        ok(flowgame()
            .args(["label", "--policy", policy, "--mc-samples", "500", "--in"])
            .arg(&inst)
            .arg("--out")
            .arg(&out));
        assert_eq!(manifest(&out).label.unwrap().method, method);
    }
    let same = flowgame()
        .args(["label", "--in"])
        .arg(&inst)
        .arg("--out")
        .arg(&inst)
        .output()
        .unwrap();
    assert_eq!(same.status.code(), Some(1));
}

#[test]
fn encode_split_and_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let (inst, labeled, enc) = (
        tmp.path().join("i"),
        tmp.path().join("l"),
        tmp.path().join("e"),
    );
    generate(
        &inst,
        &[
            "--n",
            "10",
            "--m",
            "5",
            "--p",
            "0.5",
            "--count",
            "20",
            "--shard-size",
            "8",
        ],
    );

    let unlabeled = flowgame()
        .args(["encode", "--in"])
        .arg(&inst)
        .arg("--out")
        .arg(&enc)
        .output()
        .unwrap();
    assert_eq!(unlabeled.status.code(), Some(1));

    ok(flowgame()
        .args(["label", "--in"])
        .arg(&inst)
        .arg("--out")
        .arg(&labeled));
    ok(flowgame()
        .args(["encode", "--pad-to", "20", "--in"])
        .arg(&labeled)
        .arg("--out")
        .arg(&enc));
    let m = manifest(&enc);
    assert_eq!(m.pad_to, Some(20));
    assert_eq!(m.count(), 20);
    let graphs: Vec<EncodedGraph> = read_shard(&enc, &m.shards[0]).unwrap();
    for g in &graphs {
        assert_eq!(g.label.len(), 20);
        assert!(g.edge_features.iter().all(|row| row.len() == 21));
        assert!((g.label.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let small = flowgame()
        .args(["encode", "--pad-to", "3", "--in"])
        .arg(&labeled)
        .arg("--out")
        .arg(&enc)
        .output()
        .unwrap();
    assert_eq!(small.status.code(), Some(1));

    ok(flowgame()
        .args(["split", "--seed", "4", "--manifest"])
        .arg(labeled.join(MANIFEST_FILE)));
    let read = |name: &str| -> Vec<u64> {
        fs::read_to_string(labeled.join(name))
            .unwrap()
            .lines()
            .map(|l| l.parse().unwrap())
            .collect()
    };
    let (train, test) = (read("train.txt"), read("test.txt"));
    assert_eq!((train.len(), test.len()), (16, 4));
    let mut all: Vec<u64> = train.iter().chain(&test).copied().collect();
    all.sort();
    assert_eq!(all, (0..20).collect::<Vec<_>>());

    ok(flowgame()
        .args(["stats", "--bins", "10", "--in"])
        .arg(&labeled));
    let hist = fs::read_to_string(labeled.join("label_histogram.csv")).unwrap();
    let pooled: u64 = hist
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("all,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(pooled, 20 * 5);
    let zero = fs::read_to_string(labeled.join("zero_flow.csv")).unwrap();
    assert_eq!(zero.lines().count(), 1 + 3);
}

#[test]
fn bench_emits_table() {
    let tmp = tempfile::tempdir().unwrap();
    let extra = tmp.path().join("surrogate.csv");
    fs::write(
        &extra,
        "train_config,eval_config,method,seconds_per_graph,amortized_training_seconds,total\n\
         \"n=6,m=2,p=1\",\"n=6,m=2,p=1\",surrogate(GINE),6e-4,1e-3,1.6e-3\n",
    )
    .unwrap();
    let csv = tmp.path().join("table.csv");
    ok(flowgame()
        .args([
            "bench",
            "--method",
            "exact",
            "mc",
            "--config",
            "n=6,m=2,p=1",
            "--samples",
            "50",
            "--reps",
            "1",
        ])
        .arg("--surrogate-rows")
        .arg(&extra)
        .arg("--out")
        .arg(&csv));
    let text = fs::read_to_string(&csv).unwrap();
    let rows = flowgame_bench::parse_table(&text).unwrap();
    let methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["exact", "mc(N=50)", "surrogate(GINE)"]);
    assert!(rows.iter().all(|r| r.seconds_per_graph > 0.0));
    assert_eq!(rows[2].amortized_training_seconds, Some(1e-3));

    let few = flowgame()
        .args([
            "bench",
            "--method",
            "mc",
            "--config",
            "n=6,m=2,p=1",
            "--graphs",
            "10",
        ])
        .output()
        .unwrap();
    assert_eq!(few.status.code(), Some(1));
}
