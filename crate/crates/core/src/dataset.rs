//! Sharded, gzip-compressed newline-delimited JSON datasets.
//!
//! A dataset directory holds `shard-NNNNN.jsonl.gz` files and a
//! `manifest.json` written after the last shard. Each instance record is a
//! single JSON line:
//!
//! ```text
//! {"n":4,"m":3,"p":1.0,"seed":0,"nodes":[0,1,1,2],
//!  "edges":[[0,1,3,0],...],"label":[0.3,0.2,0.5],"label_method":"exact"}
//! ```
//!
//! `edges` rows are `[src, dst, capacity, agent]`. `label` and
//! `label_method` are absent on unlabeled records; `mc_samples` is present
//! only for Monte-Carlo labels. The manifest records a SHA-256 of every
//! shard file, checked on read.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::Rng as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::banzhaf::BanzhafVector;
use crate::encode::{encode, EncodedGraph, INTERMEDIATE_TYPE, SINK_TYPE, SOURCE_TYPE};
use crate::error::{Error, Result};
use crate::flow::MaxFlowSolver;
use crate::game::{Coalition, Edge, GameInstance};
use crate::netgen::{GenConfig, GeneratedInstance};
use crate::rng::rng_from_seed;

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_SHARD_SIZE: usize = 10_000;
pub const TRAIN_FRACTION: f64 = 0.8;
pub const MANIFEST_FILE: &str = "manifest.json";

const LABEL_SUM_TOLERANCE: f64 = 1e-9;
const COMPRESSION_LEVEL: u32 = 6;

/// One game instance, optionally labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub seed: u64,
    pub nodes: Vec<u8>,
    pub edges: Vec<[u64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<u64>,
}

impl Record {
    pub fn from_instance(instance: &GameInstance, p: f64, seed: u64) -> Self {
        let n = instance.node_count();
        let nodes = (0..n)
            .map(|v| {
                if v == instance.source() {
                    SOURCE_TYPE
                } else if v == instance.sink() {
                    SINK_TYPE
                } else {
                    INTERMEDIATE_TYPE
                }
            })
            .collect();
        Record {
            n,
            m: instance.agent_count(),
            p,
            seed,
            nodes,
            edges: instance
                .edges()
                .iter()
                .map(|e| [e.src as u64, e.dst as u64, e.capacity, e.controller as u64])
                .collect(),
            label: None,
            label_method: None,
            mc_samples: None,
        }
    }

    pub fn from_generated(generated: &GeneratedInstance, p: f64) -> Self {
        Record::from_instance(&generated.instance, p, generated.seed)
    }

    pub fn with_label(mut self, label: &BanzhafVector) -> Self {
        self.label = Some(label.normalized.clone());
        self.label_method = Some(label.method.tag().to_string());
        self.mc_samples = label.method.mc_samples();
        self
    }

    /// Rebuilds and validates the game. Source and sink are taken from the
    /// node-type list.
    pub fn to_instance(&self) -> Result<GameInstance> {
        if self.nodes.len() != self.n {
            return Err(Error::InvalidInstance(format!(
                "{} node types for {} nodes",
                self.nodes.len(),
                self.n
            )));
        }
        let find = |ty: u8| -> Result<usize> {
            let mut it = self.nodes.iter().enumerate().filter(|(_, &t)| t == ty);
            match (it.next(), it.next()) {
                (Some((v, _)), None) => Ok(v),
                _ => Err(Error::InvalidInstance(format!(
                    "expected exactly one node of type {ty}"
                ))),
            }
        };
        let source = find(SOURCE_TYPE)?;
        let sink = find(SINK_TYPE)?;
        if let Some(bad) = self.nodes.iter().find(|&&t| t > SINK_TYPE) {
            return Err(Error::InvalidInstance(format!("unknown node type {bad}")));
        }
        let edges = self
            .edges
            .iter()
            .map(|&[src, dst, cap, agent]| {
                Edge::new(src as usize, dst as usize, cap, agent as usize)
            })
            .collect();
        GameInstance::new(self.n, source, sink, self.m, edges)
    }

    /// Re-derives the encoded features from the stored instance and label.
    pub fn encode(&self, pad_to: Option<usize>) -> Result<EncodedGraph> {
        let instance = self.to_instance()?;
        let label = self
            .label
            .as_deref()
            .ok_or_else(|| Error::DatasetMismatch("cannot encode an unlabeled record".into()))?;
        let mut enc = encode(&instance, label, pad_to)?;
        enc.meta.p = Some(self.p);
        enc.meta.seed = Some(self.seed);
        enc.meta.label_method = self.label_method.clone();
        Ok(enc)
    }

    /// Checks game invariants, and for labeled records the label width and
    /// normalization and the encoded one-hot block.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let instance = self.to_instance().map_err(|e| e.to_string())?;
        let Some(label) = &self.label else {
            return Ok(());
        };
        if label.len() != self.m {
            return Err(format!(
                "label has {} entries for {} agents",
                label.len(),
                self.m
            ));
        }
        if let Some(x) = label.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(format!("label entry {x} outside [0, 1]"));
        }
        let sum: f64 = label.iter().sum();
        if (sum - 1.0).abs() > LABEL_SUM_TOLERANCE {
            return Err(format!("label sums to {sum}"));
        }
        match (self.label_method.as_deref(), self.mc_samples) {
            (Some("exact"), None) => {}
            (Some("mc"), Some(n)) if n >= 1 => {}
            (method, samples) => {
                return Err(format!(
                    "inconsistent label method {method:?} / mc_samples {samples:?}"
                ))
            }
        }
        let enc = encode(&instance, label, None).map_err(|e| e.to_string())?;
        if enc
            .edge_features
            .iter()
            .any(|row| row[1..].iter().sum::<f64>() != 1.0)
        {
            return Err("one-hot block does not sum to 1".into());
        }
        Ok(())
    }

    /// Whether the grand coalition routes no flow.
    pub fn is_zero_flow(&self) -> Result<bool> {
        let instance = self.to_instance()?;
        let mut solver = MaxFlowSolver::new(&instance);
        Ok(solver.coalition_value(Coalition::full(instance.agent_count())) == 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Instances,
    Encoded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardEntry {
    pub file: String,
    pub count: u64,
    pub sha256: String,
    pub zero_flow: u64,
}

/// How a dataset was labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelInfo {
    /// `exact`, `mc` or `hybrid`.
    pub policy: String,
    pub exact_max_agents: usize,
    pub mc_samples: u64,
    pub epsilon: f64,
    pub seed: u64,
    /// Method actually used: `exact`, `mc`, or `mixed`.
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: DatasetKind,
    pub config: GenConfig,
    pub label: Option<LabelInfo>,
    pub pad_to: Option<usize>,
    pub shard_size: usize,
    pub shards: Vec<ShardEntry>,
    pub split: SplitSpec,
    pub zero_flow_count: u64,
}

impl Manifest {
    pub fn new(kind: DatasetKind, config: GenConfig, shard_size: usize) -> Self {
        Manifest {
            format_version: FORMAT_VERSION,
            kind,
            config,
            label: None,
            pad_to: None,
            shard_size,
            shards: Vec::new(),
            split: SplitSpec {
                train_fraction: TRAIN_FRACTION,
            },
            zero_flow_count: 0,
        }
    }

    pub fn count(&self) -> u64 {
        self.shards.iter().map(|s| s.count).sum()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|source| Error::Manifest {
                path: path.to_path_buf(),
                source,
            })?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .unwrap_or(0) as u32;
        if found != FORMAT_VERSION {
            return Err(Error::SchemaVersionUnsupported {
                found,
                supported: FORMAT_VERSION,
            });
        }
        let manifest: Manifest =
            serde_json::from_value(value).map_err(|source| Error::Manifest {
                path: path.to_path_buf(),
                source,
            })?;
        manifest.check_counts()?;
        Ok(manifest)
    }

    fn check_counts(&self) -> Result<()> {
        if self.count() != self.config.count {
            return Err(Error::DatasetMismatch(format!(
                "shards hold {} records, config count is {}",
                self.count(),
                self.config.count
            )));
        }
        let zero: u64 = self.shards.iter().map(|s| s.zero_flow).sum();
        if zero != self.zero_flow_count {
            return Err(Error::DatasetMismatch(format!(
                "shard zero-flow counts sum to {zero}, manifest says {}",
                self.zero_flow_count
            )));
        }
        Ok(())
    }

    /// Writes `manifest.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        self.check_counts()?;
        let path = dir.as_ref().join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub fn shard_file_name(index: usize) -> String {
    format!("shard-{index:05}.jsonl.gz")
}

/// Serializes and compresses `items` deterministically.
pub fn shard_bytes<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut text = Vec::new();
    for item in items {
        serde_json::to_writer(&mut text, item).expect("records serialize");
        text.push(b'\n');
    }
    let mut gz = GzEncoder::new(
        Vec::with_capacity(text.len() / 4),
        Compression::new(COMPRESSION_LEVEL),
    );
    gz.write_all(&text).expect("writing to memory");
    gz.finish().expect("writing to memory")
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes shard number `index` of a dataset. The file appears under its
/// final name only once fully written.
pub fn write_shard<T: Serialize>(
    dir: impl AsRef<Path>,
    index: usize,
    items: &[T],
    zero_flow: u64,
) -> Result<ShardEntry> {
    let file = shard_file_name(index);
    let path = dir.as_ref().join(&file);
    let partial = path.with_extension("gz.partial");
    let bytes = shard_bytes(items);
    let written = fs::write(&partial, &bytes).and_then(|_| fs::rename(&partial, &path));
    if let Err(e) = written {
        let _ = fs::remove_file(&partial);
        return Err(Error::io(&path, e));
    }
    Ok(ShardEntry {
        file,
        count: items.len() as u64,
        sha256: sha256_hex(&bytes),
        zero_flow,
    })
}

/// Removes shard files listed in `entries` (cleanup after a failed write).
pub fn remove_shards(dir: impl AsRef<Path>, entries: &[ShardEntry]) {
    for entry in entries {
        let _ = fs::remove_file(dir.as_ref().join(&entry.file));
    }
}

/// Writes `records` as shards of at most `shard_size` and then the manifest.
/// On error every shard written so far is removed.
pub fn write_records(
    dir: impl AsRef<Path>,
    records: &[Record],
    mut manifest: Manifest,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    manifest.shards.clear();
    let result = (|| {
        for (index, chunk) in records.chunks(manifest.shard_size.max(1)).enumerate() {
            let mut zero = 0;
            for r in chunk {
                zero += u64::from(r.is_zero_flow()?);
            }
            let entry = write_shard(dir, index, chunk, zero)?;
            manifest.shards.push(entry);
        }
        manifest.zero_flow_count = manifest.shards.iter().map(|s| s.zero_flow).sum();
        manifest.write(dir)
    })();
    if let Err(e) = result {
        remove_shards(dir, &manifest.shards);
        return Err(e);
    }
    Ok(manifest)
}

/// Reads and hash-checks one shard.
pub fn read_shard<T: DeserializeOwned>(
    dir: impl AsRef<Path>,
    entry: &ShardEntry,
) -> Result<Vec<T>> {
    let path = dir.as_ref().join(&entry.file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let actual = sha256_hex(&bytes);
    if actual != entry.sha256 {
        return Err(Error::HashMismatch {
            path,
            expected: entry.sha256.clone(),
            actual,
        });
    }
    let reader = BufReader::new(GzDecoder::new(bytes.as_slice()));
    let mut items = Vec::with_capacity(entry.count as usize);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        let item = serde_json::from_str(&line).map_err(|source| Error::Parse {
            path: path.clone(),
            line: i + 1,
            source,
        })?;
        items.push(item);
    }
    if items.len() as u64 != entry.count {
        return Err(Error::DatasetMismatch(format!(
            "{} holds {} records, manifest says {}",
            path.display(),
            items.len(),
            entry.count
        )));
    }
    Ok(items)
}

/// Streams the records of an instance dataset in shard order.
pub struct RecordReader<'a> {
    dir: PathBuf,
    shards: std::slice::Iter<'a, ShardEntry>,
    current: std::vec::IntoIter<Record>,
    current_path: PathBuf,
    position: usize,
    strict: bool,
    failed: bool,
}

impl Iterator for RecordReader<'_> {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            if let Some(record) = self.current.next() {
                let index = self.position;
                self.position += 1;
                if self.strict {
                    if let Err(reason) = record.validate() {
                        self.failed = true;
                        return Some(Err(Error::InvariantViolation {
                            path: self.current_path.clone(),
                            index,
                            reason,
                        }));
                    }
                }
                return Some(Ok(record));
            }
            let entry = self.shards.next()?;
            match read_shard::<Record>(&self.dir, entry) {
                Ok(records) => {
                    self.current = records.into_iter();
                    self.current_path = self.dir.join(&entry.file);
                    self.position = 0;
                }
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

/// Records of the dataset in `dir`; with `strict`, each record is validated
/// and the first violation ends the stream with an error.
pub fn read_records<'a>(
    dir: impl AsRef<Path>,
    manifest: &'a Manifest,
    strict: bool,
) -> Result<RecordReader<'a>> {
    if manifest.kind != DatasetKind::Instances {
        return Err(Error::DatasetMismatch(
            "expected an instance dataset, found encoded shards".into(),
        ));
    }
    Ok(RecordReader {
        dir: dir.as_ref().to_path_buf(),
        shards: manifest.shards.iter(),
        current: Vec::new().into_iter(),
        current_path: PathBuf::new(),
        position: 0,
        strict,
        failed: false,
    })
}

/// Deterministic shuffled train/test partition of `0..count`.
///
/// The train side holds `round(count * train_fraction)` indices. The
/// shuffle draws 64-bit bounded integers, so the result does not depend on
/// the platform's pointer width.
pub fn split(manifest: &Manifest, seed: u64) -> Result<(Vec<u64>, Vec<u64>)> {
    let count = manifest.count();
    if count < 5 {
        return Err(Error::TooFewForSplit(count));
    }
    let mut indices: Vec<u64> = (0..count).collect();
    let mut rng = rng_from_seed(seed);
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i as u64) as usize;
        indices.swap(i, j);
    }
    let train_len = (count as f64 * manifest.split.train_fraction).round() as usize;
    let test = indices.split_off(train_len);
    Ok((indices, test))
}
