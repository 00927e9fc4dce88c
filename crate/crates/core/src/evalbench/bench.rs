use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adapter::{AdapterQuery, MethodAdapter};
use super::metrics::{compute_metrics, MetricConfig, MetricReport};
use super::stats::{aus, average_ranks, friedman, nemenyi_cd, AusScore, Direction, FriedmanResult};
use super::EvalError;
use crate::data::{load_csv, Dataset, Instance};
use crate::graph::RelationshipGraph;
use crate::oracle::{fit_logistic, fit_stumps, LogisticConfig, Oracle, SavedModel, StumpConfig};
use crate::structlearn::{learn_graph, LearnConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Metric columns, in the default spider-plot order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Fidelity,
    Probability,
    Proximity,
    Sparsity,
    Plausibility,
    Diversity,
    Time,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Fidelity,
        Metric::Probability,
        Metric::Proximity,
        Metric::Sparsity,
        Metric::Plausibility,
        Metric::Diversity,
        Metric::Time,
    ];

    pub fn direction(self) -> Direction {
        match self {
            Metric::Fidelity | Metric::Probability | Metric::Diversity => Direction::HigherBetter,
            _ => Direction::LowerBetter,
        }
    }

    pub fn value(self, r: &MetricReport) -> Option<f64> {
        match self {
            Metric::Fidelity => Some(r.fidelity),
            Metric::Probability => r.probability,
            Metric::Proximity => r.proximity_loss,
            Metric::Sparsity => r.sparsity_loss,
            Metric::Plausibility => r.plausibility_loss,
            Metric::Diversity => r.diversity,
            Metric::Time => Some(r.execution_time_seconds),
        }
    }

    /// Whether the value depends on wall-clock measurements.
    pub fn is_timing(self) -> bool {
        self == Metric::Time
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OracleChoice {
    Logistic(LogisticConfig),
    Stumps(StumpConfig),
}

impl OracleChoice {
    pub fn fit(&self, ds: &Dataset) -> Result<SavedModel, EvalError> {
        Ok(match self {
            OracleChoice::Logistic(c) => SavedModel::Logistic(fit_logistic(ds, c)?),
            OracleChoice::Stumps(c) => SavedModel::Stumps(fit_stumps(ds, c)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub target_column: String,
    pub queries_per_dataset: usize,
    pub n: usize,
    pub budget: usize,
    pub oracle: OracleChoice,
    pub learn: LearnConfig,
    pub metrics: MetricConfig,
    /// Vertex order of the spider plot; the area depends on it.
    pub spider_order: Vec<Metric>,
    pub alpha: f64,
    /// Worker threads for cells; `None` uses the global pool.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            target_column: "target".into(),
            queries_per_dataset: 20,
            n: 3,
            budget: 300,
            oracle: OracleChoice::Logistic(LogisticConfig::default()),
            learn: LearnConfig::default(),
            metrics: MetricConfig::default(),
            spider_order: Metric::ALL.to_vec(),
            alpha: 0.05,
            jobs: None,
        }
    }
}

/// Mean of the per-query reports of one (dataset, method) cell, without
/// the timing column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub fidelity: f64,
    pub probability: Option<f64>,
    pub proximity_loss: Option<f64>,
    pub sparsity_loss: Option<f64>,
    pub plausibility_loss: Option<f64>,
    pub diversity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub dataset: String,
    pub method: String,
    #[serde(flatten)]
    pub status: CellStatus,
    pub queries: usize,
    pub failed_queries: usize,
    pub metrics: Option<CellMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRanks {
    pub metric: Metric,
    pub direction: Direction,
    /// Average rank per method, in `methods` order.
    pub ranks: Vec<f64>,
    pub friedman: Option<FriedmanResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub methods: Vec<String>,
    pub dataset_count: usize,
    pub metrics: Vec<MetricRanks>,
}

impl RankTable {
    pub fn method_count(&self) -> usize {
        self.methods.len()
    }

    pub fn column(&self, metric: Metric) -> Option<&MetricRanks> {
        self.metrics.iter().find(|m| m.metric == metric)
    }
}

/// A reference critical distance checked against the formula in use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdReference {
    pub k: usize,
    pub n: usize,
    pub alpha: f64,
    pub published: f64,
    pub formula: f64,
    pub diverges: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalDistance {
    pub k: usize,
    pub n: usize,
    pub alpha: f64,
    pub value: f64,
    pub reference: CdReference,
}

/// Printed CD for k = 8 methods over n = 140 datasets at α = 0.05.
const PUBLISHED_CD_K8_N140: f64 = 0.75;

pub fn cd_reference() -> CdReference {
    let formula = nemenyi_cd(8, 140, 0.05).expect("supported setting");
    CdReference {
        k: 8,
        n: 140,
        alpha: 0.05,
        published: PUBLISHED_CD_K8_N140,
        formula,
        diverges: (formula - PUBLISHED_CD_K8_N140).abs() > 1e-3,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub method: String,
    pub rank: f64,
}

/// Input for critical-distance diagrams: methods placed at their average
/// rank per metric, plus the CD bar length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub critical_distance: Option<f64>,
    pub metrics: Vec<(Metric, Vec<PlotPoint>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub dataset: String,
    pub method: String,
    pub mean_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AusEntry {
    pub method: String,
    pub score: Option<AusScore>,
}

/// Everything derived from wall-clock measurements. Excluded from the
/// determinism contract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingSection {
    pub started_at_unix: u64,
    pub wall_seconds: f64,
    pub cells: Vec<CellTiming>,
    pub time_ranks: Option<MetricRanks>,
    pub aus: Vec<AusEntry>,
    pub plot: Option<(Metric, Vec<PlotPoint>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub seed: u64,
    pub config: BenchmarkConfig,
    pub datasets: Vec<String>,
    pub methods: Vec<String>,
    pub cells: Vec<CellReport>,
    pub ranks: Option<RankTable>,
    pub critical_distance: Option<CriticalDistance>,
    pub plot: PlotData,
    pub timing_dependent: TimingSection,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON of the report without its timing section; byte-identical across
    /// runs with the same seed and inputs.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("timing_dependent");
        }
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    /// One line per cell.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(
            "dataset,method,status,queries,failed_queries,fidelity,probability,proximity_loss,sparsity_loss,plausibility_loss,diversity,mean_seconds\n",
        );
        for (c, t) in self.cells.iter().zip(&self.timing_dependent.cells) {
            let m = c.metrics.as_ref();
            let status = match &c.status {
                CellStatus::Ok => "ok",
                CellStatus::Failed { .. } => "failed",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                c.dataset,
                c.method,
                status,
                c.queries,
                c.failed_queries,
                opt(m.map(|m| m.fidelity)),
                opt(m.and_then(|m| m.probability)),
                opt(m.and_then(|m| m.proximity_loss)),
                opt(m.and_then(|m| m.sparsity_loss)),
                opt(m.and_then(|m| m.plausibility_loss)),
                opt(m.and_then(|m| m.diversity)),
                opt(t.mean_seconds),
            );
        }
        out
    }
}

/// Sorted `*.csv` files of a directory.
pub fn dataset_files(dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| EvalError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(EvalError::Io(format!("no csv files in {}", dir.display())));
    }
    Ok(files)
}

struct Prepared {
    name: String,
    ds: Dataset,
    oracle: SavedModel,
    graph: Option<RelationshipGraph>,
    queries: Vec<(Vec<f64>, usize)>,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 27)
}

/// Stratified query choice: rows of each true class are shuffled and taken
/// round-robin across classes. The desired class is the most probable class
/// other than the oracle's prediction.
fn choose_queries(ds: &Dataset, oracle: &dyn Oracle, count: usize, seed: u64) -> Result<Vec<(Vec<f64>, usize)>, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
    for (r, &t) in ds.target.iter().enumerate() {
        by_class[t].push(r);
    }
    for rows in &mut by_class {
        rows.shuffle(&mut rng);
    }
    let mut picked = Vec::with_capacity(count);
    let mut depth = 0;
    while picked.len() < count && by_class.iter().any(|rows| depth < rows.len()) {
        for rows in &by_class {
            if picked.len() < count && depth < rows.len() {
                picked.push(rows[depth]);
            }
        }
        depth += 1;
    }
    let inst: Vec<Instance> = picked.iter().map(|&r| Instance::raw(ds.rows[r].clone())).collect();
    let probas = oracle.predict_proba_batch(&inst)?;
    Ok(picked
        .iter()
        .zip(probas)
        .map(|(&r, p)| {
            let predicted = crate::oracle::argmax(&p);
            let desired = (0..p.len())
                .filter(|&c| c != predicted)
                .max_by(|&a, &b| p[a].total_cmp(&p[b]).then(b.cmp(&a)))
                .unwrap_or(predicted);
            (ds.rows[r].clone(), desired)
        })
        .collect())
}

fn prepare(path: &Path, index: usize, cfg: &BenchmarkConfig, seed: u64) -> Result<Prepared, EvalError> {
    let ds = load_csv(path, &cfg.target_column, None)?;
    let oracle = cfg.oracle.fit(&ds)?;
    let graph = Some(learn_graph(&ds, &cfg.learn, None)?.graph);
    let queries = choose_queries(&ds, oracle.as_oracle(), cfg.queries_per_dataset, mix(seed, index as u64, 0))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(Prepared { name, ds, oracle, graph, queries })
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

struct CellOutcome {
    report: CellReport,
    mean_seconds: Option<f64>,
}

fn run_cell(p: &Prepared, d: usize, adapter: &dyn MethodAdapter, cfg: &BenchmarkConfig, seed: u64) -> CellOutcome {
    let mut reports: Vec<MetricReport> = Vec::new();
    let mut first_error = None;
    for (q, (x, desired)) in p.queries.iter().enumerate() {
        let query = AdapterQuery {
            dataset: &p.name,
            ds: &p.ds,
            oracle: p.oracle.as_oracle(),
            graph: p.graph.as_ref(),
            instance: x,
            desired: *desired,
            n: cfg.n,
            budget: cfg.budget,
            seed: mix(seed, d as u64 + 1, q as u64 + 1),
        };
        let result = adapter.explain(&query).and_then(|set| {
            let (xn, _) = p.ds.norm_stats.normalize_instance(&Instance::raw(x.clone()))?;
            compute_metrics(&set, &xn.values, p.oracle.as_oracle(), p.graph.as_ref(), cfg.n, &cfg.metrics)
        });
        match result {
            Ok(r) => reports.push(r),
            Err(e) => {
                log::warn!("{} / {} query {q}: {e}", p.name, adapter.name());
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let failed = p.queries.len() - reports.len();
    let (status, metrics) = if reports.is_empty() {
        let error = first_error.unwrap_or_else(|| "no queries".into());
        (CellStatus::Failed { error }, None)
    } else {
        let metrics = CellMetrics {
            fidelity: reports.iter().map(|r| r.fidelity).sum::<f64>() / reports.len() as f64,
            probability: mean_opt(reports.iter().map(|r| r.probability)),
            proximity_loss: mean_opt(reports.iter().map(|r| r.proximity_loss)),
            sparsity_loss: mean_opt(reports.iter().map(|r| r.sparsity_loss)),
            plausibility_loss: mean_opt(reports.iter().map(|r| r.plausibility_loss)),
            diversity: mean_opt(reports.iter().map(|r| r.diversity)),
        };
        (CellStatus::Ok, Some(metrics))
    };
    CellOutcome {
        mean_seconds: mean_opt(reports.iter().map(|r| Some(r.execution_time_seconds))),
        report: CellReport {
            dataset: p.name.clone(),
            method: adapter.name().to_string(),
            status,
            queries: p.queries.len(),
            failed_queries: failed,
            metrics,
        },
    }
}

fn cell_value(c: &CellReport, metric: Metric, seconds: Option<f64>) -> Option<f64> {
    let m = c.metrics.as_ref()?;
    match metric {
        Metric::Fidelity => Some(m.fidelity),
        Metric::Probability => m.probability,
        Metric::Proximity => m.proximity_loss,
        Metric::Sparsity => m.sparsity_loss,
        Metric::Plausibility => m.plausibility_loss,
        Metric::Diversity => m.diversity,
        Metric::Time => seconds,
    }
}

fn rank_metric(
    metric: Metric,
    outcomes: &[CellOutcome],
    k: usize,
    n: usize,
) -> Option<MetricRanks> {
    if k < 2 || n == 0 {
        return None;
    }
    // Cells are stored dataset-major.
    let values: Vec<Vec<Option<f64>>> = (0..k)
        .map(|m| (0..n).map(|d| {
            let o = &outcomes[d * k + m];
            cell_value(&o.report, metric, o.mean_seconds)
        }).collect())
        .collect();
    if values.iter().all(|row| row.iter().all(Option::is_none)) {
        return None;
    }
    let ranks = average_ranks(&values, metric.direction()).ok()?;
    let friedman = if k >= 3 && n >= 2 && ranks.iter().all(|r| r.is_finite()) {
        friedman(&ranks, n).ok()
    } else {
        None
    };
    Some(MetricRanks { metric, direction: metric.direction(), ranks, friedman })
}

fn plot_points(methods: &[String], r: &MetricRanks) -> Vec<PlotPoint> {
    methods
        .iter()
        .zip(&r.ranks)
        .map(|(m, &rank)| PlotPoint { method: m.clone(), rank })
        .collect()
}

/// Runs every adapter on every dataset of `dir` and aggregates the results.
/// Failures of one cell never stop the others.
pub fn run_benchmark(
    dir: &Path,
    adapters: &[Box<dyn MethodAdapter>],
    cfg: &BenchmarkConfig,
    seed: u64,
) -> Result<BenchmarkReport, EvalError> {
    let started = Instant::now();
    let started_at_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    if adapters.is_empty() {
        return Err(EvalError::Adapter("no adapters given".into()));
    }
    let files = dataset_files(dir)?;
    let prepared: Vec<Result<Prepared, EvalError>> = files
        .iter()
        .enumerate()
        .map(|(i, f)| prepare(f, i, cfg, seed))
        .collect();
    let names: Vec<String> = files
        .iter()
        .zip(&prepared)
        .map(|(f, p)| match p {
            Ok(p) => p.name.clone(),
            Err(_) => f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        })
        .collect();
    let methods: Vec<String> = adapters.iter().map(|a| a.name().to_string()).collect();
    let (k, n) = (adapters.len(), files.len());

    let run = || -> Vec<CellOutcome> {
        (0..n * k)
            .into_par_iter()
            .map(|cell| {
                let (d, m) = (cell / k, cell % k);
                match &prepared[d] {
                    Ok(p) => run_cell(p, d, adapters[m].as_ref(), cfg, seed),
                    Err(e) => CellOutcome {
                        mean_seconds: None,
                        report: CellReport {
                            dataset: names[d].clone(),
                            method: methods[m].clone(),
                            status: CellStatus::Failed { error: format!("dataset preparation failed: {e}") },
                            queries: 0,
                            failed_queries: 0,
                            metrics: None,
                        },
                    },
                }
            })
            .collect()
    };
    let outcomes = match cfg.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| EvalError::Io(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let deterministic: Vec<Metric> = Metric::ALL.iter().copied().filter(|m| !m.is_timing()).collect();
    let columns: Vec<MetricRanks> = deterministic
        .iter()
        .filter_map(|&m| rank_metric(m, &outcomes, k, n))
        .collect();
    let ranks = (!columns.is_empty()).then(|| RankTable { methods: methods.clone(), dataset_count: n, metrics: columns });
    let critical_distance = nemenyi_cd(k, n, cfg.alpha).ok().map(|value| CriticalDistance {
        k,
        n,
        alpha: cfg.alpha,
        value,
        reference: cd_reference(),
    });
    let plot = PlotData {
        critical_distance: critical_distance.as_ref().map(|c| c.value),
        metrics: ranks
            .iter()
            .flat_map(|t| t.metrics.iter().map(|r| (r.metric, plot_points(&methods, r))))
            .collect(),
    };

    let time_ranks = rank_metric(Metric::Time, &outcomes, k, n);
    let lookup = |metric: Metric, m: usize| -> Option<f64> {
        if metric.is_timing() {
            time_ranks.as_ref().map(|r| r.ranks[m])
        } else {
            ranks.as_ref()?.column(metric).map(|r| r.ranks[m])
        }
    };
    let aus_entries = methods
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let vertices: Option<Vec<f64>> = cfg.spider_order.iter().map(|&metric| lookup(metric, m)).collect();
            AusEntry { method: name.clone(), score: vertices.and_then(|v| aus(&v).ok()) }
        })
        .collect();
    let timing_dependent = TimingSection {
        started_at_unix,
        wall_seconds: started.elapsed().as_secs_f64(),
        cells: outcomes
            .iter()
            .map(|o| CellTiming {
                dataset: o.report.dataset.clone(),
                method: o.report.method.clone(),
                mean_seconds: o.mean_seconds,
            })
            .collect(),
        plot: time_ranks.as_ref().map(|r| (Metric::Time, plot_points(&methods, r))),
        time_ranks,
        aus: aus_entries,
    };
    Ok(BenchmarkReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed,
        config: cfg.clone(),
        datasets: names,
        methods,
        cells: outcomes.into_iter().map(|o| o.report).collect(),
        ranks,
        critical_distance,
        plot,
        timing_dependent,
    })
}
