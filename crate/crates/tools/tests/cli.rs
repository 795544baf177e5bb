use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use artist_tools::cli::run_args;

fn artist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_artist"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = artist(args);
    assert!(
        out.status.success(),
        "artist {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn in_process(args: &[&str]) {
    let mut sink = Vec::new();
    run_args(
        std::iter::once("artist").chain(args.iter().copied()),
        &mut sink,
    )
    .unwrap();
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

const SMALL: [&str; 2] = ["synth.width=640", "synth.height=480"];

/// A model trained once on constant-velocity scenes of one to three agents,
/// plus unoccluded crossings.
fn model() -> &'static Path {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    &DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut seqs = Vec::new();
        for i in 0..30 {
            let out = s(&dir.path().join(format!("train{i}")));
            let (seed, agents) = (i.to_string(), format!("synth.agents={}", 1 + i % 3));
            let mut args = vec![
                "synth",
                "--seed",
                &seed,
                "--out",
                &out,
                "synth.scenario=constant",
                "synth.frames=60",
            ];
            args.extend(SMALL);
            args.push(&agents);
            in_process(&args);
            seqs.push(out);
        }
        for i in 0..10 {
            let out = s(&dir.path().join(format!("cross{i}")));
            let seed = (100 + i).to_string();
            let mut args = vec![
                "synth",
                "--seed",
                &seed,
                "--out",
                &out,
                "synth.scenario=crossing",
                "synth.occlusion=0",
                "synth.frames=60",
            ];
            args.extend(SMALL);
            in_process(&args);
            seqs.push(out);
        }
        let cb = s(&dir.path().join("cb.ckpt"));
        let mut args = vec!["cluster", "--k", "16", "--seed", "1", "--out", &cb];
        args.extend(seqs.iter().map(String::as_str));
        in_process(&args);
        let ckpt = dir.path().join("model.ckpt");
        let ckpt_s = s(&ckpt);
        let mut args = vec![
            "train",
            "--init",
            &cb,
            "--iterations",
            "2000",
            "--seed",
            "1",
            "--out",
            &ckpt_s,
        ];
        args.extend(seqs.iter().map(String::as_str));
        args.extend([
            "model.width=32",
            "train.batch_size=8",
            "train.seq_len_max=20",
            "train.jitter_magnitude=0.001",
        ]);
        in_process(&args);
        (dir, ckpt)
    })
    .1
}

fn eval_row(seq: &Path, results: &Path) -> Vec<String> {
    let table = ok(&["eval", &s(seq), &s(results)]);
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("sequence,MOTA,IDF1,IDs,MT,ML,FP,FN"));
    lines.next().unwrap().split(',').map(String::from).collect()
}

#[test]
fn help_succeeds_and_usage_errors_exit_3() {
    assert_eq!(artist(&["--help"]).status.code(), Some(0));
    let bad = artist(&["frobnicate"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(!bad.stderr.is_empty());
}

#[test]
fn unreadable_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = artist(&[
        "cluster",
        "--k",
        "4",
        "--out",
        &s(&dir.path().join("x")),
        &s(&dir.path().join("missing")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seqinfo.ini"));
}

#[test]
fn cluster_is_deterministic_and_guards_k() {
    let dir = tempfile::tempdir().unwrap();
    let seq = s(&dir.path().join("seq"));
    let mut args = vec![
        "synth",
        "--seed",
        "4",
        "--out",
        &seq,
        "synth.agents=3",
        "synth.frames=30",
    ];
    args.extend(SMALL);
    ok(&args);
    let (a, b) = (s(&dir.path().join("a.ckpt")), s(&dir.path().join("b.ckpt")));
    let table = ok(&["cluster", "--k", "8", "--seed", "2", "--out", &a, &seq]);
    assert!(table.starts_with("component,sse\nx,"));
    ok(&["cluster", "--k", "8", "--seed", "2", "--out", &b, &seq]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let big = artist(&[
        "cluster",
        "--k",
        "100000",
        "--out",
        &s(&dir.path().join("c.ckpt")),
        &seq,
    ]);
    assert_eq!(big.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&big.stderr).contains("k = 100000"));
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    ok(&["synth", "--seed", "5", "--out", &s(&seq), "synth.agents=4"]);
    let row = eval_row(&seq, &seq.join("gt").join("gt.txt"));
    assert_eq!(&row[1..4], ["1.0000", "1.0000", "0"]);
}

#[test]
fn config_file_values_yield_to_command_line_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# scenario\nsynth.frames = 20\nsynth.agents = 2\n").unwrap();
    let seq = dir.path().join("seq");
    ok(&[
        "synth",
        "--config",
        &s(&cfg),
        "--out",
        &s(&seq),
        "synth.frames=25",
    ]);
    let info = std::fs::read_to_string(seq.join("seqinfo.ini")).unwrap();
    assert!(info.contains("seqLength=25"), "{info}");

    std::fs::write(&cfg, "synth.frames = many\n").unwrap();
    let bad = artist(&["synth", "--config", &s(&cfg), "--out", &s(&seq)]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 1"));
}

#[test]
fn noiseless_single_agent_is_tracked_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    let seq_s = s(&seq);
    let mut args = vec![
        "synth",
        "--out",
        &seq_s,
        "synth.scenario=single",
        "synth.frames=60",
    ];
    args.extend(SMALL);
    args.extend(["synth.vx=4", "synth.vy=1"]);
    ok(&args);
    let res = dir.path().join("res.txt");
    ok(&["track", "--model", &s(model()), "--out", &s(&res), &seq_s]);
    let row = eval_row(&seq, &res);
    assert_eq!(row[1], "1.0000", "{row:?}");
}

#[test]
fn inpainting_reduces_missed_boxes_on_an_occlusion() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    let seq_s = s(&seq);
    let mut args = vec![
        "synth",
        "--seed",
        "3",
        "--out",
        &seq_s,
        "synth.scenario=crossing",
        "synth.frames=60",
    ];
    args.extend(SMALL);
    args.push("synth.occlusion=10");
    ok(&args);
    let fn_of = |mode: &str| {
        let res = dir.path().join(format!("{mode}.txt"));
        ok(&[
            "track",
            "--model",
            &s(model()),
            "--inpainting",
            mode,
            "--out",
            &s(&res),
            &seq_s,
        ]);
        eval_row(&seq, &res)[7].parse::<usize>().unwrap()
    };
    let (off, visible) = (fn_of("off"), fn_of("visible"));
    assert!(off > visible, "off FN {off}, visible FN {visible}");
}

#[test]
fn checkpoint_class_count_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    ok(&[
        "synth",
        "--out",
        &s(&seq),
        "synth.frames=10",
        "synth.agents=1",
    ]);
    let out = artist(&[
        "track",
        "--model",
        &s(model()),
        "--k",
        "32",
        "--out",
        &s(&dir.path().join("r")),
        &s(&seq),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("K = 16"));
    let bad = artist(&[
        "track",
        "--model",
        &s(&seq.join("seqinfo.ini")),
        "--out",
        "r",
        &s(&seq),
    ]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn inpaint_writes_every_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    let seq_s = s(&seq);
    let mut args = vec![
        "synth",
        "--seed",
        "8",
        "--out",
        &seq_s,
        "synth.scenario=constant",
        "synth.agents=2",
        "synth.frames=30",
    ];
    args.extend(SMALL);
    ok(&args);
    let csv = dir.path().join("inp.csv");
    let run = |seed: &str| {
        ok(&[
            "inpaint",
            "--model",
            &s(model()),
            "--id",
            "1",
            "--frame",
            "12",
            "--gap",
            "4",
            "--samples",
            "6",
            "--seed",
            seed,
            "--out",
            &s(&csv),
            &seq_s,
        ]);
        std::fs::read_to_string(&csv).unwrap()
    };
    let text = run("1");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "candidate,frame,x,y,w,h,log_prob");
    assert_eq!(lines.len(), 1 + 6 * 4);
    assert!(lines[1].starts_with("0,13,"));
    assert!(lines[24].starts_with("5,16,"));
    assert_eq!(run("1"), text);

    let missing = artist(&[
        "inpaint",
        "--model",
        &s(model()),
        "--id",
        "9",
        "--frame",
        "12",
        "--gap",
        "4",
        "--out",
        &s(&csv),
        &seq_s,
    ]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn degenerate_detections_are_dropped_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    ok(&[
        "synth",
        "--out",
        &s(&seq),
        "synth.frames=10",
        "synth.agents=1",
    ]);
    let det = seq.join("det").join("det.txt");
    let mut text = std::fs::read_to_string(&det).unwrap();
    text.push_str("3,-1,10,10,0,20,0.9,-1,-1,-1\n");
    std::fs::write(&det, text).unwrap();
    let out = artist(&[
        "track",
        "--model",
        &s(model()),
        "--out",
        &s(&dir.path().join("r.txt")),
        &s(&seq),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dropped 1"));

    std::fs::write(&det, "1,-1,10,10\n").unwrap();
    let out = artist(&[
        "track",
        "--model",
        &s(model()),
        "--out",
        &s(&dir.path().join("r.txt")),
        &s(&seq),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}
