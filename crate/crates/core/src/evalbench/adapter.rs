use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::data::Dataset;
use crate::graph::RelationshipGraph;
use crate::loss::LossWeights;
use crate::oracle::Oracle;
use crate::search::{assess_counterfactuals, generate_counterfactuals, ExplainRequest, ExplanationSet};
use crate::tpe::TpeConfig;

/// Everything a method needs to answer one benchmark query.
pub struct AdapterQuery<'a> {
    pub dataset: &'a str,
    pub ds: &'a Dataset,
    pub oracle: &'a dyn Oracle,
    pub graph: Option<&'a RelationshipGraph>,
    /// Raw-space query.
    pub instance: &'a [f64],
    pub desired: usize,
    pub n: usize,
    pub budget: usize,
    pub seed: u64,
}

impl AdapterQuery<'_> {
    fn request(&self) -> ExplainRequest {
        ExplainRequest {
            n: self.n,
            budget: self.budget,
            seed: self.seed,
            ..ExplainRequest::new(self.instance.to_vec(), self.desired)
        }
    }
}

/// A counterfactual generator under comparison.
pub trait MethodAdapter: Send + Sync {
    fn name(&self) -> &str;

    fn explain(&self, q: &AdapterQuery<'_>) -> Result<ExplanationSet, EvalError>;
}

/// The built-in search with fixed loss weights.
pub struct DanceAdapter {
    pub name: String,
    pub weights: LossWeights,
    pub pool_size: usize,
    pub tpe: TpeConfig,
}

impl DanceAdapter {
    pub fn new() -> Self {
        Self {
            name: "dance".into(),
            weights: LossWeights::default(),
            pool_size: 40,
            tpe: TpeConfig::default(),
        }
    }

    /// Same search with the plausibility term switched off.
    pub fn ablated() -> Self {
        Self {
            name: "dance-ablated".into(),
            weights: LossWeights { plausibility: 0.0, ..LossWeights::default() },
            ..Self::new()
        }
    }
}

impl Default for DanceAdapter {
    fn default() -> Self {
        Self::new()
    }
}

impl MethodAdapter for DanceAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn explain(&self, q: &AdapterQuery<'_>) -> Result<ExplanationSet, EvalError> {
        let req = ExplainRequest {
            weights: self.weights,
            pool_size: self.pool_size,
            tpe: self.tpe.clone(),
            ..q.request()
        };
        Ok(generate_counterfactuals(&req, q.ds, q.oracle, q.graph)?)
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    instance: &'a [f64],
    desired: usize,
    n: usize,
    budget: usize,
    seed: u64,
    dataset: &'a str,
    features: Vec<&'a str>,
}

#[derive(Deserialize)]
struct WireResponse {
    #[serde(default)]
    cfs: Vec<Vec<f64>>,
    #[serde(default)]
    time: f64,
    #[serde(default)]
    error: Option<String>,
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Third-party generator behind a child process speaking line-delimited
/// JSON: one request object per line, answered by
/// `{"cfs": [[raw values], ...], "time": seconds}` or `{"error": "..."}`.
/// Returned counterfactuals are re-scored with the benchmark's oracle.
pub struct ExternalAdapter {
    name: String,
    command: String,
    channel: Mutex<Channel>,
}

impl ExternalAdapter {
    pub fn spawn(name: &str, command: &str) -> Result<Self, EvalError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| EvalError::Adapter(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            name: name.to_string(),
            command: command.to_string(),
            channel: Mutex::new(Channel { child, stdin, stdout }),
        })
    }

    fn call(&self, req: &WireRequest<'_>) -> Result<WireResponse, EvalError> {
        let fail = |what: String| EvalError::Adapter(format!("`{}`: {what}", self.command));
        let mut ch = self.channel.lock().map_err(|_| fail("channel poisoned".into()))?;
        let mut line = serde_json::to_string(req).expect("request serializes");
        line.push('\n');
        ch.stdin
            .write_all(line.as_bytes())
            .and_then(|_| ch.stdin.flush())
            .map_err(|e| fail(format!("write failed: {e}")))?;
        let mut reply = String::new();
        let read = ch.stdout.read_line(&mut reply).map_err(|e| fail(format!("read failed: {e}")))?;
        if read == 0 {
            return Err(fail("process closed its output".into()));
        }
        serde_json::from_str(&reply).map_err(|e| fail(format!("bad reply: {e}")))
    }
}

impl Drop for ExternalAdapter {
    fn drop(&mut self) {
        if let Ok(ch) = self.channel.get_mut() {
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
    }
}

impl MethodAdapter for ExternalAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn explain(&self, q: &AdapterQuery<'_>) -> Result<ExplanationSet, EvalError> {
        let wire = WireRequest {
            instance: q.instance,
            desired: q.desired,
            n: q.n,
            budget: q.budget,
            seed: q.seed,
            dataset: q.dataset,
            features: q.ds.features.iter().map(|f| f.name.as_str()).collect(),
        };
        let resp = self.call(&wire)?;
        if let Some(e) = resp.error {
            return Err(EvalError::Adapter(format!("{}: {e}", self.name)));
        }
        Ok(assess_counterfactuals(&q.request(), q.ds, q.oracle, q.graph, &resp.cfs, resp.time)?)
    }
}

/// Parses a comma-separated adapter list: `dance`, `dance-ablated`, or
/// `external:NAME=COMMAND`. An external entry takes the rest of the string,
/// so its command may contain commas.
pub fn parse_adapters(spec: &str) -> Result<Vec<Box<dyn MethodAdapter>>, EvalError> {
    let mut out: Vec<Box<dyn MethodAdapter>> = Vec::new();
    let mut rest = spec.trim();
    while !rest.is_empty() {
        if let Some(ext) = rest.strip_prefix("external:") {
            let (name, cmd) = ext
                .split_once('=')
                .ok_or_else(|| EvalError::Adapter(format!("external adapter `{ext}` must look like NAME=COMMAND")))?;
            out.push(Box::new(ExternalAdapter::spawn(name.trim(), cmd)?));
            break;
        }
        let (head, tail) = rest.split_once(',').unwrap_or((rest, ""));
        match head.trim() {
            "dance" => out.push(Box::new(DanceAdapter::new())),
            "dance-ablated" => out.push(Box::new(DanceAdapter::ablated())),
            "" => {}
            other => return Err(EvalError::Adapter(format!("unknown adapter `{other}`"))),
        }
        rest = tail.trim_start();
    }
    if out.is_empty() {
        return Err(EvalError::Adapter("no adapters given".into()));
    }
    Ok(out)
}
