use std::path::Path;
use std::process::{Command, Output};

use inemo::bench::{Dataset, OcclusionLevel, Split};
use inemo::experiment::{digest_hex, Checkpoint};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inemo"))
        .args(args)
        .env("INEMO_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "gen-data",
        "--classes",
        "4",
        "--per-class",
        "5",
        "--per-class-test",
        "2",
        "--width",
        "32",
        "--height",
        "32",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

const SMALL: &[&str] = &[
    "--set", "feature_dim=8",
    "--set", "hidden_widths=4,8",
    "--set", "mesh_vertices=40",
    "--set", "bank_size=16",
    "--set", "replay_capacity=8",
    "--set", "unused_sample_size=32",
    "--set", "template_count=24",
    "--set", "self_render_per_class=2",
];

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--tasks",
        "B0+2",
        "--epochs",
        "1",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn gen_data_is_deterministic_and_counts_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let oa = gen(&a, &[]);
    assert!(oa.status.success(), "{oa:?}");
    assert!(stdout(&oa).contains("train=20 test=8"), "{}", stdout(&oa));
    gen(&b, &[]);
    let digest = |d: &Path| digest_hex(&std::fs::read(d.join("manifest.txt")).unwrap());
    assert_eq!(digest(&a), digest(&b));

    let c = tmp.path().join("c");
    assert!(gen(&c, &["--occlusion", "l2"]).status.success());
    let ds = Dataset::open(&c).unwrap();
    for e in &ds.entries {
        let expect = (e.record.split == Split::Test).then_some(OcclusionLevel::L2);
        assert_eq!(e.occlusion, expect);
    }
}

#[test]
fn train_eval_and_pose_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(gen(&data, &[]).status.success());
    let (out1, out2) = (tmp.path().join("r1"), tmp.path().join("r2"));
    let t1 = train(&data, &out1, &[]);
    assert!(t1.status.success(), "{}", String::from_utf8_lossy(&t1.stderr));
    assert!(out1.join("task_0.ckpt").exists() && out1.join("task_1.ckpt").exists());
    assert!(std::fs::read_to_string(out1.join("trace.txt")).unwrap().starts_with("step="));
    assert!(train(&data, &out2, &[]).status.success());
    let bytes = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(bytes(&out1.join("task_1.ckpt")), bytes(&out2.join("task_1.ckpt")));

    let ck = Checkpoint::load(&out1.join("task_1.ckpt")).unwrap();
    assert_eq!(ck.to_bytes().unwrap(), bytes(&out1.join("task_1.ckpt")));

    let report = tmp.path().join("eval.json");
    let ckp = out1.join("task_1.ckpt");
    let e = run(&["eval", "--checkpoint", ckp.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    let json: serde_json::Value = serde_json::from_slice(&bytes(&report)).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["task_accuracy"].as_array().unwrap().len(), 2);
    assert!(json["mean_task_accuracy"].is_number() && json["final_accuracy"].is_number());
    assert_eq!(json["samples"], 8);
    for level in ["none", "l1", "l2", "l3"] {
        assert!(json["occlusion_accuracy"][level].is_number());
    }
    assert_eq!(json["config"]["epochs"], "1");

    // eval after the first task covers only its classes
    let first = run(&["eval", "--checkpoint", out1.join("task_0.ckpt").to_str().unwrap()]);
    let json: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(json["samples"], 4);
    assert_eq!(json["classes"].as_array().unwrap().len(), 2);

    for extra in [&[][..], &["--self-render"][..]] {
        let mut args = vec!["pose-eval", "--checkpoint", ckp.to_str().unwrap()];
        args.extend_from_slice(extra);
        let p = run(&args);
        assert!(p.status.success(), "{}", String::from_utf8_lossy(&p.stderr));
        let json: serde_json::Value = serde_json::from_slice(&p.stdout).unwrap();
        let th: Vec<f64> = serde_json::from_value(json["thresholds"].clone()).unwrap();
        assert_eq!(th, vec![std::f64::consts::PI / 6.0, std::f64::consts::PI / 18.0]);
        assert_eq!(json["accuracy"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn ablation_flags_reach_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, &[]);
    let out = tmp.path().join("ft");
    let t = train(&data, &out, &["--no-replay", "--no-kd", "--no-etf"]);
    assert!(t.status.success());
    let echo = std::fs::read_to_string(out.join("config.txt")).unwrap();
    for line in ["replay=false", "lambda_kd=0", "lambda_etf=0"] {
        assert!(echo.lines().any(|l| l == line), "{line} missing");
    }
    let ck = Checkpoint::load(&out.join("task_1.ckpt")).unwrap();
    let train = &ck.config.train;
    assert!(!train.replay && train.lambda_kd == 0.0 && train.lambda_etf == 0.0);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--out", "x"]).status.code(), Some(1), "no dataset");
    let missing = tmp.path().join("missing");
    let o = run(&["train", "--data", missing.to_str().unwrap(), "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    let data = tmp.path().join("data");
    gen(&data, &[]);
    let o = run(&["train", "--data", data.to_str().unwrap(), "--out", "x", "--set", "nope=1"]);
    assert_eq!(o.status.code(), Some(1));

    let out = tmp.path().join("div");
    let o = train(&data, &out, &["--set", "lr=1e300"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(out.join("diverged.ckpt").exists());

    let ck = tmp.path().join("ok");
    train(&data, &ck, &[]);
    let path = ck.join("task_0.ckpt");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[8] = 2;
    let bad = tmp.path().join("v2.ckpt");
    std::fs::write(&bad, &bytes).unwrap();
    assert_eq!(run(&["eval", "--checkpoint", bad.to_str().unwrap()]).status.code(), Some(4));
    assert_eq!(run(&["pose-eval", "--checkpoint", bad.to_str().unwrap()]).status.code(), Some(4));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
