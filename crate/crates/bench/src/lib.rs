//! Per-graph labeling cost measurement and the comparison table CSV.
//!
//! Each repetition times every graph of a set individually, discards the
//! first [`WARMUP_GRAPHS`] and averages the rest; the reported per-graph time
//! is the median over repetitions. Runs are single-threaded unless
//! [`TimingOptions::parallel`] is set.

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use flowgame::banzhaf::DEFAULT_EPSILON;
use flowgame::{exact_banzhaf, mc_banzhaf_with, GameInstance, McStrategy};
use serde::Serialize;

pub const WARMUP_GRAPHS: usize = 5;
pub const MIN_MEASURED_GRAPHS: usize = 30;

pub const TABLE_COLUMNS: [&str; 6] = [
    "train_config",
    "eval_config",
    "method",
    "seconds_per_graph",
    "amortized_training_seconds",
    "total",
];

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("need at least {need} graphs ({WARMUP_GRAPHS} warmup + {MIN_MEASURED_GRAPHS} measured), got {got}")]
    TooFewGraphs { got: usize, need: usize },
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("{0} cannot be timed by this harness")]
    Unsupported(String),
    #[error(transparent)]
    Label(#[from] flowgame::Error),
    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
    #[error("malformed table CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed table row {row}: {reason}")]
    Row { row: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TimingMethod {
    ExactEnum,
    MonteCarlo { samples: u64, strategy: McStrategy },
    SurrogateInference { arch: String },
}

impl fmt::Display for TimingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimingMethod::ExactEnum => write!(f, "exact"),
            TimingMethod::MonteCarlo { samples, .. } => write!(f, "mc(N={samples})"),
            TimingMethod::SurrogateInference { arch } => write!(f, "surrogate({arch})"),
        }
    }
}

/// The `(n, m, p)` a set of graphs was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfigLabel {
    pub n: usize,
    pub m: usize,
    pub p: f64,
}

impl fmt::Display for ConfigLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={},m={},p={}", self.n, self.m, self.p)
    }
}

impl FromStr for ConfigLabel {
    type Err = String;

    /// Parses the display form, `n=20,m=5,p=0.5`, in any key order.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (mut n, mut m, mut p) = (None, None, None);
        for part in s.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value in {part:?}"))?;
            let bad = || format!("bad value {value:?} for {key}");
            match key.trim() {
                "n" => n = Some(value.trim().parse().map_err(|_| bad())?),
                "m" => m = Some(value.trim().parse().map_err(|_| bad())?),
                "p" => p = Some(value.trim().parse().map_err(|_| bad())?),
                other => return Err(format!("unknown key {other:?}")),
            }
        }
        match (n, m, p) {
            (Some(n), Some(m), Some(p)) => Ok(ConfigLabel { n, m, p }),
            _ => Err(format!("{s:?} needs n, m and p")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub os: &'static str,
    pub arch: &'static str,
    pub available_cpus: usize,
    pub threads: usize,
}

impl Environment {
    fn capture(threads: usize) -> Self {
        Environment {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            available_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            threads,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRecord {
    pub method: TimingMethod,
    pub config: ConfigLabel,
    pub per_graph_seconds: f64,
    pub graphs_measured: usize,
    pub warmup_discarded: usize,
    /// Mean per-graph seconds of each repetition.
    pub repetition_seconds: Vec<f64>,
    pub environment: Environment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingOptions {
    pub repetitions: usize,
    /// Use every core (for exact enumeration of large coalition tables).
    pub parallel: bool,
    /// Monte-Carlo seed of graph `i` is `seed ^ i`.
    pub seed: u64,
}

impl Default for TimingOptions {
    fn default() -> Self {
        TimingOptions {
            repetitions: 3,
            parallel: false,
            seed: 0,
        }
    }
}

fn label_once(method: &TimingMethod, graph: &GameInstance, seed: u64) -> Result<(), BenchError> {
    match method {
        TimingMethod::ExactEnum => {
            black_box(exact_banzhaf(graph)?);
        }
        TimingMethod::MonteCarlo { samples, strategy } => {
            black_box(mc_banzhaf_with(
                graph,
                *samples,
                seed,
                *strategy,
                DEFAULT_EPSILON,
            )?);
        }
        TimingMethod::SurrogateInference { .. } => {
            return Err(BenchError::Unsupported(method.to_string()));
        }
    }
    Ok(())
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

/// Median-of-repetitions per-graph labeling time over `graphs`.
pub fn time_labeling(
    method: &TimingMethod,
    config: ConfigLabel,
    graphs: &[GameInstance],
    options: TimingOptions,
) -> Result<TimingRecord, BenchError> {
    let need = WARMUP_GRAPHS + MIN_MEASURED_GRAPHS;
    if graphs.len() < need {
        return Err(BenchError::TooFewGraphs {
            got: graphs.len(),
            need,
        });
    }
    if options.repetitions == 0 {
        return Err(BenchError::NoRepetitions);
    }
    if let TimingMethod::SurrogateInference { .. } = method {
        return Err(BenchError::Unsupported(method.to_string()));
    }

    let threads = if options.parallel {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        1
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?;

    let measured = graphs.len() - WARMUP_GRAPHS;
    let repetition_seconds = pool.install(|| -> Result<Vec<f64>, BenchError> {
        let mut per_rep = Vec::with_capacity(options.repetitions);
        for _ in 0..options.repetitions {
            let mut total = 0.0;
            for (i, graph) in graphs.iter().enumerate() {
                let start = Instant::now();
                label_once(method, graph, options.seed ^ i as u64)?;
                let elapsed = start.elapsed().as_secs_f64();
                if i >= WARMUP_GRAPHS {
                    total += elapsed;
                }
            }
            per_rep.push(total / measured as f64);
        }
        Ok(per_rep)
    })?;

    Ok(TimingRecord {
        method: method.clone(),
        config,
        per_graph_seconds: median(&repetition_seconds),
        graphs_measured: measured,
        warmup_discarded: WARMUP_GRAPHS,
        repetition_seconds,
        environment: Environment::capture(threads),
    })
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub train_config: String,
    pub eval_config: String,
    pub method: String,
    pub seconds_per_graph: f64,
    pub amortized_training_seconds: Option<f64>,
}

impl TableRow {
    pub fn total(&self) -> f64 {
        self.seconds_per_graph + self.amortized_training_seconds.unwrap_or(0.0)
    }
}

impl From<&TimingRecord> for TableRow {
    fn from(record: &TimingRecord) -> Self {
        let config = record.config.to_string();
        TableRow {
            train_config: config.clone(),
            eval_config: config,
            method: record.method.to_string(),
            seconds_per_graph: record.per_graph_seconds,
            amortized_training_seconds: None,
        }
    }
}

/// Renders rows as CSV with the [`TABLE_COLUMNS`] header.
pub fn emit_table(rows: &[TableRow]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(TABLE_COLUMNS).expect("in-memory write");
    for row in rows {
        writer
            .write_record([
                row.train_config.clone(),
                row.eval_config.clone(),
                row.method.clone(),
                format!("{:e}", row.seconds_per_graph),
                row.amortized_training_seconds
                    .map(|s| format!("{s:e}"))
                    .unwrap_or_default(),
                format!("{:e}", row.total()),
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

/// Parses rows in the [`emit_table`] layout, e.g. surrogate inference rows
/// produced elsewhere. The `total` column is recomputed, not trusted.
pub fn parse_table(text: &str) -> Result<Vec<TableRow>, BenchError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(TABLE_COLUMNS) {
        return Err(BenchError::Row {
            row: 0,
            reason: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let number = |field: &str| -> Result<f64, BenchError> {
            field.parse().map_err(|_| BenchError::Row {
                row: i + 1,
                reason: format!("not a number: {field:?}"),
            })
        };
        let amortized = match &record[4] {
            "" => None,
            s => Some(number(s)?),
        };
        rows.push(TableRow {
            train_config: record[0].to_string(),
            eval_config: record[1].to_string(),
            method: record[2].to_string(),
            seconds_per_graph: number(&record[3])?,
            amortized_training_seconds: amortized,
        });
    }
    Ok(rows)
}
