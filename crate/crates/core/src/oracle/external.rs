use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Oracle, OracleError, OracleKind};
use crate::data::{Instance, NormStats};

#[derive(Serialize)]
struct Request<'a> {
    instances: &'a [Vec<f64>],
}

#[derive(Deserialize)]
struct Response {
    probas: Vec<Vec<f64>>,
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Classifier served by a child process speaking line-delimited JSON.
///
/// Each request is one line `{"instances": [[...], ...]}` holding raw-space
/// values; the reply is one line `{"probas": [[...], ...]}`. Calls are
/// serialized through a mutex so the oracle can be shared across threads.
pub struct ExternalOracle {
    command: String,
    class_count: usize,
    stats: Option<NormStats>,
    channel: Mutex<Channel>,
}

impl ExternalOracle {
    /// Spawns `command` through `sh -c`. `stats` is needed only when callers
    /// pass normalized instances.
    pub fn spawn(command: &str, class_count: usize, stats: Option<NormStats>) -> Result<Self, OracleError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| OracleError::Protocol(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            command: command.to_string(),
            class_count,
            stats,
            channel: Mutex::new(Channel { child, stdin, stdout }),
        })
    }

    fn raw_values(&self, inst: &Instance) -> Result<Vec<f64>, OracleError> {
        match &self.stats {
            Some(stats) => {
                if inst.len() != stats.len() {
                    return Err(OracleError::DimensionMismatch {
                        expected: stats.len(),
                        actual: inst.len(),
                    });
                }
                Ok(stats.to_raw(inst)?.values)
            }
            None if inst.space == crate::data::Space::Raw => Ok(inst.values.clone()),
            None => Err(OracleError::Protocol(
                "normalized instance given to an external oracle without normalization stats".into(),
            )),
        }
    }
}

impl Oracle for ExternalOracle {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn kind(&self) -> OracleKind {
        OracleKind::External
    }

    fn metadata(&self) -> String {
        format!("external(`{}`)", self.command)
    }

    fn predict_proba_batch(&self, instances: &[Instance]) -> Result<Vec<Vec<f64>>, OracleError> {
        let rows: Vec<Vec<f64>> = instances.iter().map(|i| self.raw_values(i)).collect::<Result<_, _>>()?;
        let mut line = serde_json::to_string(&Request { instances: &rows }).expect("request serializes");
        line.push('\n');

        let mut ch = self.channel.lock().unwrap_or_else(|p| p.into_inner());
        let io = |e: std::io::Error| OracleError::Protocol(e.to_string());
        ch.stdin.write_all(line.as_bytes()).map_err(io)?;
        ch.stdin.flush().map_err(io)?;
        let mut reply = String::new();
        if ch.stdout.read_line(&mut reply).map_err(io)? == 0 {
            return Err(OracleError::Protocol("oracle process closed its output".into()));
        }
        drop(ch);

        let resp: Response =
            serde_json::from_str(reply.trim()).map_err(|e| OracleError::Protocol(format!("bad reply: {e}")))?;
        if resp.probas.len() != instances.len() {
            return Err(OracleError::Protocol(format!(
                "{} probability vectors for {} instances",
                resp.probas.len(),
                instances.len()
            )));
        }
        for p in &resp.probas {
            validate_probas(p, self.class_count)?;
        }
        Ok(resp.probas)
    }
}

fn validate_probas(p: &[f64], k: usize) -> Result<(), OracleError> {
    if p.len() != k {
        return Err(OracleError::InvalidProbabilities(format!("expected {k} classes, got {}", p.len())));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(OracleError::InvalidProbabilities(format!("{p:?}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(OracleError::InvalidProbabilities(format!("sums to {sum}")));
    }
    Ok(())
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        if let Ok(ch) = self.channel.get_mut() {
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
    }
}
