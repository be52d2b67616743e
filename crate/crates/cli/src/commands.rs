use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use rayon::prelude::*;

use flowgame::banzhaf::{self, LabelPolicy, EXACT_AGENT_CAP};
use flowgame::dataset::{
    self, read_shard, remove_shards, write_shard, DatasetKind, LabelInfo, Manifest, Record,
    ShardEntry, DEFAULT_SHARD_SIZE, MANIFEST_FILE,
};
use flowgame::example::{worked_example, NODE_NAMES};
use flowgame::netgen::instance_seed;
use flowgame::rng::derive_seed;
use flowgame::{
    coalition_value, exact_banzhaf, generate_instance, Coalition, EncodedGraph, GenConfig,
    McStrategy,
};
use flowgame_bench::{
    emit_table, parse_table, time_labeling, ConfigLabel, TableRow, TimingMethod, TimingOptions,
};

use crate::config::FileConfig;
use crate::{
    BenchArgs, BenchMethod, EncodeArgs, ExampleArgs, GenerateArgs, LabelArgs, Policy, SplitArgs,
    StatsArgs, Strategy,
};

/// Salt separating label sampling streams from generation streams.
const LABEL_SALT: u64 = 0x1abe_15ee_d000_0001;

/// A problem with the invocation rather than with the work itself.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub struct Context {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Context {
    fn resolve(&self, out: Option<PathBuf>, default: &str) -> PathBuf {
        let out = out.unwrap_or_else(|| PathBuf::from(default));
        match &self.out_dir {
            Some(base) => base.join(out),
            None => out,
        }
    }
}

/// Creates `dir` and removes dataset files left by an earlier run, so a
/// rerun with fewer shards leaves no stale ones behind.
fn prepare_dataset_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let stale = name == MANIFEST_FILE
            || (name.starts_with("shard-")
                && (name.ends_with(".jsonl.gz") || name.ends_with(".partial")));
        if stale {
            fs::remove_file(&path).with_context(|| format!("removing {}", path.display()))?;
        }
    }
    Ok(())
}

fn read_manifest(path: &Path) -> anyhow::Result<(PathBuf, Manifest)> {
    let (dir, file) = if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST_FILE))
    } else {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (dir, path.to_path_buf())
    };
    let manifest = Manifest::read(&file)?;
    Ok((dir, manifest))
}

fn ensure_distinct(input: &Path, output: &Path) -> anyhow::Result<()> {
    let same = match (input.canonicalize(), output.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if same {
        bail!(Usage(format!(
            "--out must differ from --in ({})",
            input.display()
        )));
    }
    Ok(())
}

/// Writes shards produced by `make(shard_index, first_record_index, len)`
/// followed by the manifest. Shards already written are removed if any
/// later step fails.
fn write_dataset<T, F>(
    dir: &Path,
    mut manifest: Manifest,
    sizes: &[u64],
    mut make: F,
) -> anyhow::Result<Manifest>
where
    T: serde::Serialize,
    F: FnMut(usize, u64, u64) -> anyhow::Result<(Vec<T>, u64)>,
{
    prepare_dataset_dir(dir)?;
    manifest.shards.clear();
    let mut written: Vec<ShardEntry> = Vec::new();
    let result = (|| {
        let mut first = 0;
        for (index, &len) in sizes.iter().enumerate() {
            let (items, zero_flow) = make(index, first, len)?;
            written.push(write_shard(dir, index, &items, zero_flow)?);
            first += len;
        }
        manifest.shards = written.clone();
        manifest.zero_flow_count = written.iter().map(|s| s.zero_flow).sum();
        manifest.write(dir)?;
        anyhow::Ok(())
    })();
    if let Err(e) = result {
        remove_shards(dir, &written);
        return Err(e);
    }
    Ok(manifest)
}

pub fn generate(ctx: &Context, args: GenerateArgs) -> anyhow::Result<()> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let missing = |name: &str| Usage(format!("--{name} is required (flag or config file)"));
    let n = args.n.or(file.n).ok_or_else(|| missing("n"))?;
    let m = args.m.or(file.m).ok_or_else(|| missing("m"))?;
    let p = args.p.or(file.p).ok_or_else(|| missing("p"))?;
    let mut config = GenConfig::new(n, m, p).with_seed(ctx.seed.or(file.seed).unwrap_or(0));
    if let Some(count) = args.count.or(file.count) {
        config = config.with_count(count);
    }
    if let Some(c_max) = args.c_max.or(file.c_max) {
        config = config.with_c_max(c_max);
    }
    let shard_size = args
        .shard_size
        .or(file.shard_size)
        .unwrap_or(DEFAULT_SHARD_SIZE);
    config.validate().map_err(|e| Usage(e.to_string()))?;
    if shard_size == 0 {
        bail!(Usage("--shard-size must be at least 1".into()));
    }

    let default = format!("instances-n{n}-m{m}-p{p}");
    let dir = ctx.resolve(args.out, &default);
    let sizes = shard_sizes(config.count, shard_size);
    let manifest = Manifest::new(DatasetKind::Instances, config, shard_size);
    let manifest = write_dataset(&dir, manifest, &sizes, |_, first, len| {
        let records: Vec<(Record, bool)> = (first..first + len)
            .into_par_iter()
            .map(|index| {
                let generated = generate_instance(&config, index)?;
                let record = Record::from_generated(&generated, config.p);
                let zero = record.is_zero_flow()?;
                Ok((record, zero))
            })
            .collect::<flowgame::Result<_>>()?;
        let zero = records.iter().filter(|(_, z)| *z).count() as u64;
        Ok((records.into_iter().map(|(r, _)| r).collect(), zero))
    })?;
    println!(
        "wrote {} instances in {} shards to {} ({} with zero flow)",
        manifest.count(),
        manifest.shards.len(),
        dir.display(),
        manifest.zero_flow_count
    );
    Ok(())
}

fn shard_sizes(count: u64, shard_size: usize) -> Vec<u64> {
    let size = shard_size as u64;
    (0..count.div_ceil(size))
        .map(|i| size.min(count - i * size))
        .collect()
}

fn instance_manifest(dir: &Path) -> anyhow::Result<(PathBuf, Manifest)> {
    let (dir, manifest) = read_manifest(dir)?;
    if manifest.kind != DatasetKind::Instances {
        bail!(Usage(format!(
            "{} is not an instance dataset",
            dir.display()
        )));
    }
    Ok((dir, manifest))
}

pub fn label(ctx: &Context, args: LabelArgs) -> anyhow::Result<()> {
    let policy = LabelPolicy {
        exact_max_agents: match args.policy {
            Policy::Exact => EXACT_AGENT_CAP,
            Policy::Mc => 0,
            Policy::Hybrid => args.exact_max_agents,
        },
        mc_samples: args.mc_samples,
        ..LabelPolicy::default()
    };
    policy.validate().map_err(|e| Usage(e.to_string()))?;
    let (in_dir, input) = instance_manifest(&args.input)?;
    let m = input.config.m;
    if args.policy == Policy::Exact && m > EXACT_AGENT_CAP {
        bail!(Usage(format!(
            "exact labeling is capped at {EXACT_AGENT_CAP} agents, dataset has {m}"
        )));
    }
    let out = ctx.resolve(args.out, "labeled");
    ensure_distinct(&in_dir, &out)?;

    let seed = ctx.seed.unwrap_or(input.config.base_seed);
    let stream = derive_seed(seed, LABEL_SALT);
    let method = if m <= policy.exact_max_agents {
        "exact"
    } else {
        "mc"
    };

    let mut manifest = Manifest::new(DatasetKind::Instances, input.config, input.shard_size);
    manifest.label = Some(LabelInfo {
        policy: format!("{:?}", args.policy).to_lowercase(),
        exact_max_agents: policy.exact_max_agents,
        mc_samples: policy.mc_samples,
        epsilon: policy.epsilon,
        seed,
        method: method.into(),
    });
    let sizes: Vec<u64> = input.shards.iter().map(|s| s.count).collect();
    let manifest = write_dataset(&out, manifest, &sizes, |index, first, _| {
        let entry = &input.shards[index];
        let records: Vec<Record> = read_shard(&in_dir, entry)?;
        let labeled = records
            .into_par_iter()
            .enumerate()
            .map(|(offset, record)| {
                let instance = record.to_instance()?;
                let vector = banzhaf::label(
                    &instance,
                    &policy,
                    instance_seed(stream, first + offset as u64),
                )?;
                Ok(record.with_label(&vector))
            })
            .collect::<flowgame::Result<Vec<_>>>()?;
        Ok((labeled, entry.zero_flow))
    })?;
    println!(
        "labeled {} instances ({method}) into {}",
        manifest.count(),
        out.display()
    );
    Ok(())
}

pub fn encode(ctx: &Context, args: EncodeArgs) -> anyhow::Result<()> {
    let (in_dir, input) = instance_manifest(&args.input)?;
    if input.label.is_none() {
        bail!(Usage(format!(
            "{} is not labeled; run `label` first",
            in_dir.display()
        )));
    }
    if let Some(pad) = args.pad_to {
        if pad < input.config.m {
            bail!(Usage(format!(
                "--pad-to {pad} is smaller than m={}",
                input.config.m
            )));
        }
    }
    let out = ctx.resolve(args.out, "encoded");
    ensure_distinct(&in_dir, &out)?;

    let mut manifest = Manifest::new(DatasetKind::Encoded, input.config, input.shard_size);
    manifest.label = input.label.clone();
    manifest.pad_to = args.pad_to;
    let sizes: Vec<u64> = input.shards.iter().map(|s| s.count).collect();
    let manifest = write_dataset(&out, manifest, &sizes, |index, _, _| {
        let entry = &input.shards[index];
        let records: Vec<Record> = read_shard(&in_dir, entry)?;
        let encoded = records
            .par_iter()
            .map(|r| r.encode(args.pad_to))
            .collect::<flowgame::Result<Vec<EncodedGraph>>>()?;
        Ok((encoded, entry.zero_flow))
    })?;
    println!("encoded {} graphs into {}", manifest.count(), out.display());
    Ok(())
}

pub fn split(ctx: &Context, args: SplitArgs) -> anyhow::Result<()> {
    let (dir, manifest) = read_manifest(&args.manifest)?;
    let seed = ctx.seed.unwrap_or(manifest.config.base_seed);
    let (train, test) = dataset::split(&manifest, seed)?;
    let out = match args.out {
        Some(out) => ctx.resolve(Some(out), ""),
        None => dir,
    };
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for (name, indices) in [("train.txt", &train), ("test.txt", &test)] {
        let mut text = String::with_capacity(indices.len() * 6);
        for i in indices {
            writeln!(text, "{i}").expect("writing to a string");
        }
        let path = out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "{} train / {} test indices in {}",
        train.len(),
        test.len(),
        out.display()
    );
    Ok(())
}

pub fn bench(ctx: &Context, args: BenchArgs) -> anyhow::Result<()> {
    let configs = args
        .config
        .iter()
        .map(|c| {
            c.parse::<ConfigLabel>()
                .map_err(|e| Usage(format!("--config {c:?}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if args.reps == 0 {
        bail!(Usage("--reps must be at least 1".into()));
    }
    if args.samples == 0 {
        bail!(Usage("--samples must be at least 1".into()));
    }
    let need = flowgame_bench::WARMUP_GRAPHS + flowgame_bench::MIN_MEASURED_GRAPHS;
    if args.graphs < need {
        bail!(Usage(format!("--graphs must be at least {need}")));
    }
    let extra = match &args.surrogate_rows {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_table(&text)?
        }
        None => Vec::new(),
    };
    let strategy = match args.strategy {
        Strategy::Auto => McStrategy::Auto,
        Strategy::Direct => McStrategy::Direct,
        Strategy::Tabulated => McStrategy::Tabulated,
    };
    let seed = ctx.seed.unwrap_or(0);
    let mut graph_sets = Vec::with_capacity(configs.len());
    for label in &configs {
        let config = GenConfig::new(label.n, label.m, label.p)
            .with_seed(seed)
            .with_count(args.graphs as u64);
        config
            .validate()
            .map_err(|e| Usage(format!("--config {label}: {e}")))?;
        graph_sets.push(config);
    }

    let options = TimingOptions {
        repetitions: args.reps,
        parallel: args.parallel,
        seed,
    };
    let mut rows: Vec<TableRow> = Vec::new();
    for (label, config) in configs.iter().zip(&graph_sets) {
        let graphs = (0..args.graphs as u64)
            .map(|i| generate_instance(config, i).map(|g| g.instance))
            .collect::<flowgame::Result<Vec<_>>>()?;
        for method in &args.method {
            let method = match method {
                BenchMethod::Exact => TimingMethod::ExactEnum,
                BenchMethod::Mc => TimingMethod::MonteCarlo {
                    samples: args.samples,
                    strategy,
                },
            };
            let record = time_labeling(&method, *label, &graphs, options)?;
            eprintln!(
                "{} {}: {:e} s/graph over {} graphs",
                record.config, record.method, record.per_graph_seconds, record.graphs_measured
            );
            rows.push(TableRow::from(&record));
        }
    }
    rows.extend(extra);
    let table = emit_table(&rows);
    match args.out {
        Some(out) => {
            let path = ctx.resolve(Some(out), "");
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)
                    .with_context(|| format!("creating {}", parent.display()))?;
            }
            fs::write(&path, table).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{table}"),
    }
    Ok(())
}

fn agent_name(agent: usize) -> String {
    format!("a{}", agent + 1)
}

fn coalition_name(c: Coalition) -> String {
    let members: Vec<String> = c.members().map(agent_name).collect();
    format!("{{{}}}", members.join(","))
}

pub fn example(args: ExampleArgs) -> anyhow::Result<()> {
    let game = worked_example();
    let m = game.agent_count();
    let values = (0..1u64 << m)
        .map(|bits| {
            let c = Coalition::from_bits(bits, m);
            Ok((c, coalition_value(&game, c)?))
        })
        .collect::<flowgame::Result<Vec<_>>>()?;
    let banzhaf = exact_banzhaf(&game)?;

    let mut out = String::new();
    if args.json {
        let coalitions: Vec<_> = values
            .iter()
            .map(|(c, v)| serde_json::json!({ "members": c.members().collect::<Vec<_>>(), "value": v }))
            .collect();
        let edges: Vec<_> = game
            .edges()
            .iter()
            .map(|e| {
                serde_json::json!([
                    NODE_NAMES[e.src],
                    NODE_NAMES[e.dst],
                    e.capacity,
                    agent_name(e.controller)
                ])
            })
            .collect();
        let doc = serde_json::json!({
            "nodes": NODE_NAMES,
            "edges": edges,
            "coalitions": coalitions,
            "banzhaf_raw": banzhaf.raw,
            "banzhaf_normalized": banzhaf.normalized,
        });
        writeln!(out, "{doc}").expect("writing to a string");
    } else {
        writeln!(out, "nodes: {} (source s, sink t)", NODE_NAMES.join(" "))
            .expect("writing to a string");
        writeln!(out, "edges (from, to, capacity, agent):").expect("writing to a string");
        for e in game.edges() {
            writeln!(
                out,
                "  {} -> {}  {}  {}",
                NODE_NAMES[e.src],
                NODE_NAMES[e.dst],
                e.capacity,
                agent_name(e.controller)
            )
            .expect("writing to a string");
        }
        writeln!(out, "coalition values:").expect("writing to a string");
        for (c, v) in &values {
            writeln!(out, "  v({}) = {v}", coalition_name(*c)).expect("writing to a string");
        }
        writeln!(out, "banzhaf raw: {:?}", banzhaf.raw).expect("writing to a string");
        writeln!(out, "banzhaf normalized: {:?}", banzhaf.normalized).expect("writing to a string");
    }
    std::io::stdout().write_all(out.as_bytes())?;
    Ok(())
}

pub fn stats(ctx: &Context, args: StatsArgs) -> anyhow::Result<()> {
    if args.bins == 0 {
        bail!(Usage("--bins must be at least 1".into()));
    }
    let (dir, manifest) = instance_manifest(&args.input)?;
    let m = manifest.config.m;
    // counts[0] pools every agent, counts[j + 1] is agent j
    let mut counts = vec![vec![0u64; args.bins]; m + 1];
    let mut labeled = 0u64;
    for record in dataset::read_records(&dir, &manifest, true)? {
        let record = record?;
        let Some(label) = &record.label else { continue };
        labeled += 1;
        for (j, &x) in label.iter().enumerate() {
            let bin = ((x * args.bins as f64) as usize).min(args.bins - 1);
            counts[0][bin] += 1;
            counts[j + 1][bin] += 1;
        }
    }
    if labeled == 0 {
        bail!(Usage(format!(
            "{} has no labels; run `label` first",
            dir.display()
        )));
    }

    let out = match args.out {
        Some(out) => ctx.resolve(Some(out), ""),
        None => dir.clone(),
    };
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let mut hist = String::from("agent,bin_lo,bin_hi,count\n");
    for (row, bins) in counts.iter().enumerate() {
        let agent = if row == 0 {
            "all".to_string()
        } else {
            (row - 1).to_string()
        };
        for (b, count) in bins.iter().enumerate() {
            let lo = b as f64 / args.bins as f64;
            let hi = (b + 1) as f64 / args.bins as f64;
            writeln!(hist, "{agent},{lo},{hi},{count}").expect("writing to a string");
        }
    }
    let mut zero = String::from("shard,count,zero_flow\n");
    for entry in &manifest.shards {
        writeln!(zero, "{},{},{}", entry.file, entry.count, entry.zero_flow)
            .expect("writing to a string");
    }
    for (name, text) in [("label_histogram.csv", hist), ("zero_flow.csv", zero)] {
        let path = out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "{labeled} labeled instances, {} with zero flow; CSVs in {}",
        manifest.zero_flow_count,
        out.display()
    );
    Ok(())
}
