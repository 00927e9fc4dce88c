use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use dance_core::data::{load_csv, Dataset, SchemaOverride};
use dance_core::evalbench::{parse_adapters, run_benchmark, BenchmarkConfig, OracleChoice};
use dance_core::graph::{GraphJson, GraphMode, Provenance, RelationshipGraph};
use dance_core::oracle::{accuracy, fit_logistic, fit_stumps, LogisticConfig, SavedModel, StumpConfig};
use dance_core::search::{generate_counterfactuals, render_diff, ExplainRequest};
use dance_core::structlearn::{learn_graph as learn, LearnConfig};
use dance_core::LossWeights;
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::CliError;
use crate::{BenchmarkArgs, DataArgs, ExplainArgs, FitArgs, LearnGraphArgs, ModeArg, ModelArg, OracleArg, ServeArgs};

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    body.push('\n');
    std::fs::write(path, body).map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

/// Parses an artifact file. Service documents wrap the artifact under
/// `key` (`{"id": .., "model": {..}}`); both shapes are accepted.
fn read_artifact<T: DeserializeOwned>(path: &Path, key: &str) -> Result<T, CliError> {
    let mut v: Value =
        serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if v.get("id").is_some() {
        if let Some(inner) = v.get_mut(key) {
            v = inner.take();
        }
    }
    serde_json::from_value(v).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_data(args: &DataArgs) -> Result<Dataset, CliError> {
    let schema: Option<Vec<SchemaOverride>> = match &args.schema {
        Some(p) => Some(
            serde_json::from_str(&read_text(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    Ok(load_csv(&args.data, &args.target, schema.as_deref())?)
}

pub fn learn_graph(a: LearnGraphArgs) -> Result<(), CliError> {
    if a.bins < 2 {
        return Err(CliError::Usage("--bins must be at least 2".into()));
    }
    if !(a.prune >= 0.0) || !(a.alpha >= 0.0) {
        return Err(CliError::Usage("--prune and --alpha must be non-negative".into()));
    }
    let expert = match &a.expert {
        Some(p) => Some(RelationshipGraph::from_expert_json(&read_text(p)?).map_err(|e| CliError::from(e).context(&p.display().to_string()))?),
        None => None,
    };
    let ds = load_data(&a.data)?;
    let cfg = LearnConfig {
        mode: match a.mode {
            ModeArg::Linear => GraphMode::Linear,
            ModeArg::Cpd => GraphMode::Cpd,
        },
        prune_threshold: a.prune,
        bins: a.bins,
        alpha: a.alpha,
        ..LearnConfig::default()
    };
    let learned = learn(&ds, &cfg, expert.as_ref())?;
    let doc = GraphJson::from(&learned.graph);
    write_json(&a.out, &doc)?;
    print!("{}", describe_graph(&doc));
    Ok(())
}

fn describe_graph(g: &GraphJson) -> String {
    let mut out = format!("{} nodes, {} edges\n", g.nodes.len(), g.edges.len());
    let width = g.nodes.iter().map(String::len).max().unwrap_or(0);
    for e in &g.edges {
        let w = e.weight.map_or_else(|| "forbidden".to_string(), |w| format!("{w:+.4}"));
        let prov = e.provenance.map(|p| format!(" ({p})")).unwrap_or_default();
        let _ = writeln!(out, "  {:>width$} -> {:width$}  {w}{prov}", e.src, e.dst);
    }
    out
}

pub fn fit(a: FitArgs) -> Result<(), CliError> {
    let ds = load_data(&a.data)?;
    let model = match a.model {
        ModelArg::Logistic => {
            let mut cfg = LogisticConfig::default();
            if let Some(e) = a.epochs {
                cfg.epochs = e;
            }
            if let Some(l2) = a.l2 {
                cfg.l2 = l2;
            }
            if let Some(lr) = a.learning_rate {
                cfg.learning_rate = lr;
            }
            SavedModel::Logistic(fit_logistic(&ds, &cfg)?)
        }
        ModelArg::Stumps => {
            let mut cfg = StumpConfig::default();
            if let Some(r) = a.rounds {
                cfg.rounds = r;
            }
            if let Some(lr) = a.learning_rate {
                cfg.learning_rate = lr;
            }
            SavedModel::Stumps(fit_stumps(&ds, &cfg)?)
        }
    };
    let acc = accuracy(model.as_oracle(), &ds)?;
    write_json(&a.out, &model)?;
    println!("training accuracy {acc:.4} on {} rows", ds.n());
    Ok(())
}

/// Accepts inline JSON or a path to a JSON file holding either an array of
/// raw values in feature order or an object keyed by feature name.
fn parse_instance(spec: &str, ds: &Dataset) -> Result<Vec<f64>, CliError> {
    let text = match serde_json::from_str::<Value>(spec) {
        Ok(_) => spec.to_string(),
        Err(_) => read_text(Path::new(spec))?,
    };
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("instance: {e}")))?;
    let bad = |m: String| CliError::Data(format!("instance: {m}"));
    match v {
        Value::Array(items) => {
            if items.len() != ds.m() {
                return Err(bad(format!("{} values given, dataset has {} features", items.len(), ds.m())));
            }
            items
                .iter()
                .enumerate()
                .map(|(j, x)| x.as_f64().ok_or_else(|| bad(format!("value for `{}` is not a number", ds.features[j].name))))
                .collect()
        }
        Value::Object(map) => {
            if let Some(k) = map.keys().find(|k| ds.feature_index(k).is_none()) {
                return Err(bad(format!("unknown feature `{k}`")));
            }
            ds.features
                .iter()
                .map(|f| match map.get(&f.name) {
                    Some(x) => x.as_f64().ok_or_else(|| bad(format!("value for `{}` is not a number", f.name))),
                    None => Err(bad(format!("missing feature `{}`", f.name))),
                })
                .collect()
        }
        _ => Err(bad("expected a JSON array or object".into())),
    }
}

fn parse_desired(spec: &str, ds: &Dataset) -> Result<usize, CliError> {
    if let Some(c) = ds.class_index(spec) {
        return Ok(c);
    }
    match spec.parse::<usize>() {
        Ok(c) if c < ds.class_count() => Ok(c),
        _ => Err(CliError::Usage(format!(
            "--desired `{spec}` is neither a class label [{}] nor a class index below {}",
            ds.class_labels.join(", "),
            ds.class_count()
        ))),
    }
}

pub fn explain(a: ExplainArgs) -> Result<(), CliError> {
    if a.n == 0 || a.budget == 0 {
        return Err(CliError::Usage("--n and --budget must be positive".into()));
    }
    let weights = LossWeights {
        lambda: a.lambda,
        diversity: a.w_div,
        proximity: a.w_prox,
        sparsity: a.w_sparse,
        plausibility: a.w_plaus,
    };
    if [weights.lambda, weights.diversity, weights.proximity, weights.sparsity, weights.plausibility]
        .iter()
        .any(|w| !(w.is_finite() && *w >= 0.0))
    {
        return Err(CliError::Usage("loss weights must be finite and non-negative".into()));
    }
    let ds = load_data(&a.data)?;
    let model: SavedModel = read_artifact(&a.model, "model")?;
    let graph = match &a.graph {
        Some(p) => {
            let doc: GraphJson = read_artifact(p, "graph")?;
            Some(doc.into_graph(Provenance::Learned).map_err(|e| CliError::from(e).context(&p.display().to_string()))?)
        }
        None => None,
    };
    let instance = match (&a.instance_json, a.instance_index) {
        (Some(spec), _) => parse_instance(spec, &ds)?,
        (None, Some(i)) if i < ds.n() => ds.rows[i].clone(),
        (None, Some(i)) => {
            return Err(CliError::Usage(format!("--instance-index {i} is out of range; the data has {} rows", ds.n())))
        }
        (None, None) => return Err(CliError::Usage("give --instance-json or --instance-index".into())),
    };
    let desired = parse_desired(&a.desired, &ds)?;
    let mut req = ExplainRequest::new(instance, desired);
    req.n = a.n;
    req.budget = a.budget;
    req.weights = weights;
    req.locks = a.lock.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    req.seed = a.seed;
    let set = generate_counterfactuals(&req, &ds, model.as_oracle(), graph.as_ref())?;
    if let Some(out) = &a.out {
        write_json(out, &set)?;
    }
    print!("{}", render_diff(&set, &set.query));
    Ok(())
}

pub fn benchmark(a: BenchmarkArgs) -> Result<(), CliError> {
    if a.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be positive".into()));
    }
    if !a.datasets.is_dir() {
        return Err(CliError::Data(format!("{} is not a directory", a.datasets.display())));
    }
    let adapters = parse_adapters(&a.adapters)?;
    let cfg = BenchmarkConfig {
        target_column: a.target,
        queries_per_dataset: a.queries,
        n: a.n,
        budget: a.budget,
        oracle: match a.oracle {
            OracleArg::Logistic => OracleChoice::Logistic(LogisticConfig::default()),
            OracleArg::Stumps => OracleChoice::Stumps(StumpConfig::default()),
        },
        alpha: a.alpha,
        jobs: a.jobs,
        ..BenchmarkConfig::default()
    };
    let report = run_benchmark(&a.datasets, &adapters, &cfg, a.seed)?;
    let mut body = report.to_json();
    body.push('\n');
    std::fs::write(&a.out, body).map_err(|e| CliError::Runtime(format!("writing {}: {e}", a.out.display())))?;
    if let Some(p) = &a.csv {
        std::fs::write(p, report.to_csv()).map_err(|e| CliError::Runtime(format!("writing {}: {e}", p.display())))?;
    }
    println!("{} datasets, methods: {}", report.datasets.len(), report.methods.join(", "));
    if let Some(ranks) = &report.ranks {
        for m in &ranks.metrics {
            let cells: Vec<String> = ranks.methods.iter().zip(&m.ranks).map(|(n, r)| format!("{n} {r:.2}")).collect();
            println!("  {:<14} {}", format!("{:?}", m.metric), cells.join("  "));
        }
    }
    if let Some(cd) = &report.critical_distance {
        println!("critical distance {:.4} (k = {}, n = {}, alpha = {})", cd.value, cd.k, cd.n, cd.alpha);
    }
    Ok(())
}

pub fn serve(a: ServeArgs) -> Result<(), CliError> {
    let config = dance_service::ServiceConfig {
        addr: SocketAddr::new(a.host, a.port),
        artifact_dir: a.artifacts,
        explain_timeout: Duration::from_secs(a.timeout),
        cors_origin: a.cors_origin,
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    rt.block_on(dance_service::serve(config)).map_err(|e| match e {
        dance_service::ServiceError::Origin(_) => CliError::Usage(e.to_string()),
        dance_service::ServiceError::Store(_) => CliError::Data(e.to_string()),
        dance_service::ServiceError::Io(_) => CliError::Runtime(e.to_string()),
    })
}
