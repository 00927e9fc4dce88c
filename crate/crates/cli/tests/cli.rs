use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dance_core::search::ExplanationSet;
use dance_core::synth;
use serde_json::Value;

fn dance(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dance")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_dataset(dir: &Path, name: &str, ds: &dance_core::Dataset) -> PathBuf {
    let path = dir.join(name);
    synth::write_csv(ds, "target", std::fs::File::create(&path).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Setup {
    dir: tempfile::TempDir,
    data: PathBuf,
    model: PathBuf,
    graph: PathBuf,
}

/// 4-feature graph data with a stump model and a learned linear graph.
fn setup() -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), "chain.csv", &synth::linear_graph(300, 5));
    let model = dir.path().join("model.json");
    let graph = dir.path().join("graph.json");
    let o = dance(&["fit", "--data", s(&data), "--model", "stumps", "--out", s(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = dance(&["learn-graph", "--data", s(&data), "--out", s(&graph)]);
    assert!(o.status.success(), "{}", stderr(&o));
    Setup { dir, data, model, graph }
}

fn explain_args<'a>(st: &'a Setup, out: &'a Path, seed: &'a str) -> Vec<&'a str> {
    vec![
        "explain", "--data", s(&st.data), "--model", s(&st.model), "--graph", s(&st.graph), "--instance-index", "0",
        "--desired", "1", "--n", "2", "--budget", "60", "--seed", seed, "--out", s(out),
    ]
}

fn read_set(path: &Path) -> ExplanationSet {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).expect("result is an ExplanationSet")
}

#[test]
fn learn_graph_recovers_the_pair_slope() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synth::linear_pair(2000, 0);
    let data = write_dataset(dir.path(), "pair.csv", &ds);
    let out = dir.path().join("graph.json");
    let o = dance(&["learn-graph", "--data", s(&data), "--mode", "linear", "--prune", "0.05", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let g: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let edges = g["edges"].as_array().unwrap();
    assert_eq!(edges.len(), 1, "{g}");
    assert_eq!((edges[0]["src"].as_str(), edges[0]["dst"].as_str()), (Some("x0"), Some("x1")));
    // Graph weights are in min-max normalized units; convert back to raw.
    let range = |j: usize| {
        let c = ds.column(j);
        c.iter().copied().fold(f64::NEG_INFINITY, f64::max) - c.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let raw = edges[0]["weight"].as_f64().unwrap() * range(1) / range(0);
    assert!((raw - 2.0).abs() < 0.15, "{raw}");
    assert!(stdout(&o).contains("x0 -> x1"));
}

#[test]
fn explain_writes_a_valid_explanation_set_and_marks_changes() {
    let st = setup();
    let out = st.dir.path().join("result.json");
    let mut args = explain_args(&st, &out, "4");
    args.extend(["--lock", "x0"]);
    let o = dance(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let set = read_set(&out);
    assert_eq!(set.feature_names, ["x0", "x1", "x2", "x3"]);
    assert_eq!(set.requested, 2);
    assert_eq!(set.counterfactuals.len() + set.failures.len(), 2);
    for cf in &set.counterfactuals {
        assert_eq!(cf.values[0].to_bits(), set.query[0].to_bits());
    }

    // Each diff block lists the features in order; `*` marks a change.
    let text = stdout(&o);
    let blocks: Vec<&str> = text.split("counterfactual ").skip(1).collect();
    assert_eq!(blocks.len(), set.counterfactuals.len());
    for (block, cf) in blocks.iter().zip(&set.counterfactuals) {
        let marked: Vec<&str> = block
            .lines()
            .filter_map(|l| l.strip_prefix("* "))
            .map(|l| l.split_whitespace().next().unwrap())
            .collect();
        let changed: Vec<&str> = cf.changes.iter().map(|c| c.feature.as_str()).collect();
        assert_eq!(marked, changed);
    }
}

#[test]
fn locking_every_feature_is_a_data_error() {
    let st = setup();
    let out = st.dir.path().join("r.json");
    let mut args = explain_args(&st, &out, "0");
    args.extend(["--lock", "x0,x1,x2,x3"]);
    let o = dance(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty search space"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn same_seed_gives_identical_outputs() {
    let st = setup();
    let a = st.dir.path().join("a.json");
    let b = st.dir.path().join("b.json");
    let oa = dance(&explain_args(&st, &a, "9"));
    let ob = dance(&explain_args(&st, &b, "9"));
    assert!(oa.status.success() && ob.status.success());
    assert_eq!(stdout(&oa), stdout(&ob));
    let (mut sa, mut sb) = (read_set(&a), read_set(&b));
    sa.duration_seconds = 0.0;
    sb.duration_seconds = 0.0;
    assert_eq!(sa, sb);

    let m2 = st.dir.path().join("model2.json");
    let g2 = st.dir.path().join("graph2.json");
    dance(&["fit", "--data", s(&st.data), "--model", "stumps", "--out", s(&m2)]);
    dance(&["learn-graph", "--data", s(&st.data), "--out", s(&g2)]);
    assert_eq!(std::fs::read(&st.model).unwrap(), std::fs::read(&m2).unwrap());
    assert_eq!(std::fs::read(&st.graph).unwrap(), std::fs::read(&g2).unwrap());
}

#[test]
fn instance_json_object_matches_instance_index() {
    let st = setup();
    let ds = synth::linear_graph(300, 5);
    let obj: serde_json::Map<String, Value> =
        ds.features.iter().zip(&ds.rows[0]).map(|(f, &v)| (f.name.clone(), Value::from(v))).collect();
    let inst = st.dir.path().join("inst.json");
    std::fs::write(&inst, Value::Object(obj).to_string()).unwrap();
    let by_index = st.dir.path().join("i.json");
    let by_json = st.dir.path().join("j.json");
    assert!(dance(&explain_args(&st, &by_index, "2")).status.success());
    let mut args = explain_args(&st, &by_json, "2");
    let pos = args.iter().position(|a| *a == "--instance-index").unwrap();
    args.splice(pos..pos + 2, ["--instance-json", s(&inst)]);
    let o = dance(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let (mut a, mut b) = (read_set(&by_index), read_set(&by_json));
    a.duration_seconds = 0.0;
    b.duration_seconds = 0.0;
    assert_eq!(a, b);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(dance(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(dance(&["fit", "--data", "x.csv"]).status.code(), Some(1));
    let st = setup();
    let out = st.dir.path().join("r.json");
    let mut args = explain_args(&st, &out, "0");
    let pos = args.iter().position(|a| *a == "--desired").unwrap();
    args[pos + 1] = "7";
    let o = dance(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--desired"));
    assert_eq!(dance(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let o = dance(&["fit", "--data", "/nonexistent/data.csv", "--model", "logistic", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let data = write_dataset(dir.path(), "blobs.csv", &synth::blobs(40, 1));
    let o = dance(&["fit", "--data", s(&data), "--target", "label", "--model", "logistic", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

fn without_timing(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timing_dependent");
    // The thread count is echoed in the config; results must not depend on it.
    v["config"].as_object_mut().unwrap().remove("jobs");
    v
}

#[test]
fn benchmark_is_reproducible_under_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    write_dataset(&data, "a.csv", &synth::blobs(80, 1));
    write_dataset(&data, "b.csv", &synth::linear_graph(120, 2));
    write_dataset(&data, "c.csv", &synth::blobs(60, 3));
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let csv = dir.path().join(format!("{name}.csv"));
        let o = dance(&[
            "benchmark", "--datasets", s(&data), "--adapters", "dance,dance-ablated", "--queries", "2", "--n", "2",
            "--budget", "30", "--seed", "5", "--jobs", jobs, "--out", s(&out), "--csv", s(&csv),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(std::fs::read_to_string(&csv).unwrap().lines().count() == 7);
        out
    };
    let a = run("a.json", "1");
    let b = run("b.json", "3");
    let va = without_timing(&a);
    assert_eq!(va["methods"], serde_json::json!(["dance", "dance-ablated"]));
    assert_eq!(va, without_timing(&b));
}

#[test]
fn unknown_adapter_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = dance(&["benchmark", "--datasets", s(dir.path()), "--adapters", "magic", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}
