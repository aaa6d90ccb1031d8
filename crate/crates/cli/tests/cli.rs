use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use muhpc::io::{load_dataset, load_json, load_result, save_result};
use muhpc::pipeline::PipelineResult;
use muhpc::{evaluate, ClusterId, MetricsReport, Protocol, TrackId, Weighting};
use serde_json::Value;
use tempfile::TempDir;

fn muhpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_muhpc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = muhpc(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes generator params and returns the dataset path.
fn synth(dir: &TempDir, name: &str, params: &str) -> PathBuf {
    let params_path = path(dir, &format!("{name}.toml"));
    fs::write(&params_path, params).unwrap();
    let out = path(dir, &format!("{name}.jsonl"));
    ok(&["synth", "--params", s(&params_path), "--out", s(&out)]);
    out
}

const SEPARABLE: &str = "n_characters = 6\nn_tracks = 90\np_back = 0.0\nseed = 4\n";
const FACES_ONLY: &str = "n_characters = 5\nn_tracks = 60\np_back = 0.0\np_speaking = 0.0\nseed = 1\n";

#[test]
fn faces_only_run_reports_no_op_stages() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(&dir, "faces", FACES_ONLY);
    let out = ok(&["cluster", "--dataset", s(&ds), "--protocol", "at"]);
    assert!(out.contains("stage 2: no-op"), "{out}");
    assert!(out.contains("stage 3: no-op"), "{out}");
    assert!(out.contains("tau_v_loose: none"), "{out}");
}

#[test]
fn oracle_protocol_forces_cluster_count() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(&dir, "oc", "n_characters = 12\nn_tracks = 120\nseed = 2\n");
    let result = path(&dir, "r.json");
    let out = ok(&["cluster", "--dataset", s(&ds), "--protocol", "oc:10", "--out", s(&result)]);
    assert!(out.contains("final: K = 10"), "{out}");
    let r = load_result(&result).unwrap();
    assert_eq!(r.num_clusters(), 10);
    assert_eq!(r.protocol, Protocol::OracleClusters(10));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(&dir, "d", FACES_ONLY);

    let missing = path(&dir, "missing.toml");
    let o = muhpc(&["cluster", "--dataset", s(&ds), "--config", s(&missing)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(s(&missing)), "{}", stderr(&o));

    let o = muhpc(&["cluster", "--dataset", s(&ds), "--protocol", "oc:0"]);
    assert_eq!(o.status.code(), Some(2));

    let o = muhpc(&["cluster", "--dataset", s(&ds), "--protocol", "oc:1000"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("cannot split"));

    let bad = path(&dir, "bad.jsonl");
    fs::write(&bad, "{\"id\":1,\"shot\":0,\"frames\":[[0,5]]}\n\n{\"id\":2,\"shot\":0,\"frames\":[[9,3]]}\n").unwrap();
    let o = muhpc(&["validate", "--dataset", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = muhpc(&["validate", "--dataset", s(&path(&dir, "nope.jsonl"))]);
    assert_eq!(o.status.code(), Some(2));

    let o = muhpc(&["eval", "--dataset", s(&ds), "--dataset", s(&ds), "--result", "a", "--result", "b", "--result", "c"]);
    assert_eq!(o.status.code(), Some(2));

    let o = muhpc(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn repeated_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(&dir, "d", "n_characters = 8\nn_tracks = 150\nseed = 3\n");
    let again = synth(&dir, "again", "n_characters = 8\nn_tracks = 150\nseed = 3\n");
    assert_eq!(fs::read(&ds).unwrap(), fs::read(&again).unwrap());

    let (a, b) = (path(&dir, "a.json"), path(&dir, "b.json"));
    let sa = ok(&["cluster", "--dataset", s(&ds), "--out", s(&a)]);
    let sb = ok(&["cluster", "--dataset", s(&ds), "--out", s(&b), "--parallel"]);
    assert_eq!(sa, sb);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let (ea, eb) = (path(&dir, "ea.json"), path(&dir, "eb.json"));
    ok(&["eval", "--dataset", s(&ds), "--result", s(&a), "--out", s(&ea)]);
    ok(&["eval", "--dataset", s(&ds), "--result", s(&a), "--out", s(&eb)]);
    assert_eq!(fs::read(&ea).unwrap(), fs::read(&eb).unwrap());
}

#[test]
fn perfect_synthetic_run_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(&dir, "sep", SEPARABLE);
    let r = path(&dir, "r.json");
    ok(&["cluster", "--dataset", s(&ds), "--out", s(&r)]);
    let out = ok(&["eval", "--dataset", s(&ds), "--result", s(&r)]);
    for key in ["wcp", "nmi", "cp", "cr"] {
        assert!(out.contains(&format!("\n{key}: 1\n")), "{out}");
    }
}

#[test]
fn eval_matches_library_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(&dir, "faces", FACES_ONLY);
    let r = path(&dir, "r.json");
    let report = path(&dir, "e.json");
    ok(&["cluster", "--dataset", s(&ds), "--out", s(&r)]);
    for weighting in [Weighting::Track, Weighting::Frame] {
        ok(&["eval", "--dataset", s(&ds), "--result", s(&r), "--weighting", &weighting.to_string(), "--out", s(&report)]);
        let doc: Value = load_json(&report).unwrap();
        let from_cli: MetricsReport = serde_json::from_value(doc["episodes"][0]["report"].clone()).unwrap();
        let direct = evaluate(&load_result(&r).unwrap().assignment, &load_dataset(&ds, 25.0).unwrap(), weighting).unwrap();
        assert_eq!(from_cli, direct);
    }
}

fn labelled_dataset(dir: &TempDir, name: &str, labels: &[&str]) -> PathBuf {
    let lines: String = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let start = i * 20;
            format!(
                "{{\"id\":{i},\"shot\":{i},\"frames\":[[{start},{}]],\"label\":\"{l}\",\"face\":[1.0,0.0]}}\n",
                start + 9
            )
        })
        .collect();
    let p = path(dir, name);
    fs::write(&p, lines).unwrap();
    p
}

fn result_file(dir: &TempDir, name: &str, clusters: &[u64]) -> PathBuf {
    let assignment: BTreeMap<TrackId, ClusterId> = clusters
        .iter()
        .enumerate()
        .map(|(i, &c)| (TrackId(i as u64), ClusterId(c)))
        .collect();
    let result = PipelineResult {
        protocol: Protocol::AutomaticTermination,
        assignment,
        history: Vec::new(),
        bridges: Vec::new(),
        back_assignments: Vec::new(),
        unassigned_backs: Vec::new(),
        usable_voice_tracks: 0,
        learned_tau_v_loose: None,
        tau_v_loose: None,
        oracle_violations: Vec::new(),
    };
    let p = path(dir, name);
    save_result(&result, &p).unwrap();
    p
}

#[test]
fn multi_episode_mean_is_unweighted() {
    let dir = tempfile::tempdir().unwrap();
    // episode 1: everything in one cluster, wcp 2/3 and nmi 0
    let d1 = labelled_dataset(&dir, "e1.jsonl", &["A", "A", "B"]);
    let r1 = result_file(&dir, "r1.json", &[0, 0, 0]);
    // episode 2: perfect, with four times as many tracks
    let d2 = labelled_dataset(&dir, "e2.jsonl", &["A", "A", "A", "A", "B", "B", "C", "C", "C", "C", "C", "C"]);
    let r2 = result_file(&dir, "r2.json", &[0, 0, 0, 0, 4, 4, 6, 6, 6, 6, 6, 6]);
    let out = path(&dir, "e.json");
    ok(&["eval", "--dataset", s(&d1), "--result", s(&r1), "--dataset", s(&d2), "--result", s(&r2), "--out", s(&out)]);

    let doc: Value = load_json(&out).unwrap();
    let mean = &doc["mean"];
    assert_eq!(mean["episodes"], 2);
    assert!((mean["wcp"].as_f64().unwrap() - 5.0 / 6.0).abs() < 1e-12);
    assert!((mean["nmi"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let ep = |i: usize, k: &str| doc["episodes"][i]["report"][k].as_f64().unwrap();
    for k in ["cp", "cr"] {
        assert!((mean[k].as_f64().unwrap() - (ep(0, k) + ep(1, k)) / 2.0).abs() < 1e-12);
    }
}

#[test]
fn cooccurrence_tables() {
    let dir = tempfile::tempdir().unwrap();
    // single character: frames 0..=9 of a 0..=59 span
    let one = path(&dir, "one.jsonl");
    fs::write(
        &one,
        "{\"id\":1,\"shot\":0,\"frames\":[[0,9]],\"label\":\"A\",\"face\":[1,0]}\n\
         {\"id\":2,\"shot\":1,\"frames\":[[50,59]],\"label\":\"A\",\"face\":[1,0]}\n",
    )
    .unwrap();
    let out = ok(&["cooccur", "--dataset", s(&one)]);
    assert_eq!(out, "# ground_truth\ncharacter\tA\nA\t0.3333333333333333\n");

    // disjoint characters
    let two = labelled_dataset(&dir, "two.jsonl", &["A", "B"]);
    let out = ok(&["cooccur", "--dataset", s(&two)]);
    assert!(out.contains("A\t0.3333333333333333\t0\n"), "{out}");

    // perfect clustering: relative matrix all ones
    let ds = synth(&dir, "sep", SEPARABLE);
    let r = path(&dir, "r.json");
    ok(&["cluster", "--dataset", s(&ds), "--out", s(&r)]);
    let out_dir = path(&dir, "co");
    ok(&["cooccur", "--dataset", s(&ds), "--result", s(&r), "--out-dir", s(&out_dir)]);
    let rel = fs::read_to_string(out_dir.join("relative.tsv")).unwrap();
    let cells: Vec<&str> = rel.lines().skip(1).flat_map(|l| l.split('\t').skip(1)).collect();
    assert_eq!(cells.len(), 36);
    assert!(cells.iter().all(|c| *c == "1"), "{rel}");
    assert_eq!(
        fs::read_to_string(out_dir.join("ground_truth.tsv")).unwrap(),
        fs::read_to_string(out_dir.join("predicted.tsv")).unwrap()
    );
    let doc: Value = load_json(out_dir.join("relative.json")).unwrap();
    assert_eq!(doc["characters"].as_array().unwrap().len(), 6);
}

#[test]
fn learn_voice_threshold_matches_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth(&dir, "v", "n_characters = 8\nn_tracks = 160\np_speaking = 0.6\np_concurrent = 0.4\nseed = 8\n");
    let r = path(&dir, "r.json");
    let t = path(&dir, "t.json");
    ok(&["cluster", "--dataset", s(&ds), "--out", s(&r)]);
    let out = ok(&["learn-voice-threshold", "--dataset", s(&ds), "--out", s(&t)]);
    let learned = load_result(&r).unwrap().learned_tau_v_loose.unwrap();
    assert!(out.contains(&format!("tau_v_loose: {learned}\n")), "{out}");
    let doc: Value = load_json(&t).unwrap();
    assert_eq!(doc["tau_v_loose"].as_f64(), Some(learned));
}

#[test]
fn concatenated_program_sets_cluster_together() {
    let dir = tempfile::tempdir().unwrap();
    let a = labelled_dataset(&dir, "a.jsonl", &["A", "B"]);
    let b = path(&dir, "b.jsonl");
    fs::write(
        &b,
        "{\"id\":10,\"shot\":0,\"frames\":[[0,9]],\"label\":\"A\",\"face\":[1,0]}\n\
         {\"id\":11,\"shot\":0,\"frames\":[[0,9]],\"label\":\"C\",\"face\":[0,1]}\n",
    )
    .unwrap();
    let r = path(&dir, "r.json");
    let out = ok(&["cluster", "--dataset", s(&a), "--dataset", s(&b), "--out", s(&r)]);
    // tracks 0, 1 and 10 share a face; 11 differs and overlaps 10
    assert!(out.contains("final: K = 2"), "{out}");
    let out = ok(&["eval", "--dataset", s(&a), "--dataset", s(&b), "--result", s(&r)]);
    assert!(out.contains("ground_truth_clusters: 3"), "{out}");

    let o = muhpc(&["cluster", "--dataset", s(&a), "--dataset", s(&a)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unique"));
}
