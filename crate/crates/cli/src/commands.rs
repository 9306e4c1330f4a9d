use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hdreason::eval::{evaluate, reconstruct_neighbors, MetricsRow, RankMode, ScoreView};
use hdreason::hdc::Metric;
use hdreason::kg::synth::{cube, LatticeSpec, SurrogateSpec};
use hdreason::kg::{load_dataset, read_cache, write_cache, KnowledgeGraph};
use hdreason::model::{read_checkpoint, write_checkpoint, Checkpoint, ModelState, Trainer};
use hdreason::robustness::{drop_dims_view, quantized_view, FixedPointSpec, Quantization};
use hdreason::sim::{
    read_trace, replay, sweep_schedules, two_epochs, write_trace, CacheConfig, CostConfig, Policy, ScheduleBatch,
    SweepRow,
};
use hdreason::SPEC_VERSION;
use serde::Serialize;

use crate::config::{RankModes, RunConfig};
use crate::error::CliError;

/// Fields stamped on every artifact.
#[derive(Debug, Clone, Serialize)]
struct Meta {
    spec_version: &'static str,
    config_hash: String,
    seed: u64,
}

#[derive(Serialize)]
struct Stamped<T: Serialize> {
    #[serde(flatten)]
    meta: Meta,
    #[serde(flatten)]
    body: T,
}

pub struct Ctx {
    pub cfg: RunConfig,
    meta: Meta,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.out_dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
        let meta = Meta { spec_version: SPEC_VERSION, config_hash: cfg.hash(), seed: cfg.seed };
        Ok(Self { cfg, meta })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn stamp<T: Serialize>(&self, body: T) -> Stamped<T> {
        Stamped { meta: self.meta.clone(), body }
    }

    fn comment(&self) -> String {
        format!(
            "# spec-version={} config-hash={} seed={}",
            self.meta.spec_version, self.meta.config_hash, self.meta.seed
        )
    }

    fn write_json<T: Serialize>(&self, name: &str, body: T) -> Result<PathBuf, CliError> {
        let path = self.out(name);
        let mut text = serde_json::to_string_pretty(&self.stamp(body)).expect("artifact serializes");
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    fn append_jsonl<T: Serialize>(&self, name: &str, body: T) -> Result<(), CliError> {
        let mut f = OpenOptions::new().create(true).append(true).open(self.out(name))?;
        let line = serde_json::to_string(&self.stamp(body)).expect("artifact serializes");
        writeln!(f, "{line}")?;
        Ok(())
    }

    /// Appends rows, writing the comment and header first if the file is new.
    fn append_csv(&self, name: &str, header: &str, rows: &[String]) -> Result<(), CliError> {
        let path = self.out(name);
        let fresh = !path.exists();
        let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
        if fresh {
            writeln!(f, "{}", self.comment())?;
            writeln!(f, "{header}")?;
        }
        for r in rows {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }

    fn graph(&self) -> Result<KnowledgeGraph, CliError> {
        let spec = self.cfg.dataset.as_deref().ok_or_else(|| CliError::Config("dataset: required".into()))?;
        load_graph(spec, self.cfg.seed)
    }

    fn model(&self, kg: &KnowledgeGraph) -> Result<(ModelState, Checkpoint), CliError> {
        let path = self.cfg.checkpoint_path();
        if !path.exists() {
            return Err(CliError::Data(format!("checkpoint {} not found", path.display())));
        }
        let ck = read_checkpoint(&path)?;
        let mut state = ck.clone().into_state()?;
        if state.num_entities() != kg.num_entities() || state.num_relations() != kg.num_relations() {
            return Err(CliError::Data(format!(
                "checkpoint has |V|={}, |R|={} but the dataset has |V|={}, |R|={}",
                state.num_entities(),
                state.num_relations(),
                kg.num_entities(),
                kg.num_relations()
            )));
        }
        state.refresh(kg)?;
        Ok((state, ck))
    }

    fn rank_modes(&self) -> Vec<RankMode> {
        match self.cfg.rank_mode {
            RankModes::Raw => vec![RankMode::Raw],
            RankModes::Filtered => vec![RankMode::Filtered],
            RankModes::Both => vec![RankMode::Raw, RankMode::Filtered],
        }
    }

    /// Evaluates `view` in every rank mode and appends the rows to the
    /// metrics files. `suffix` tags modified views, e.g. `fix-8`.
    fn report(&self, kg: &KnowledgeGraph, view: &ScoreView, seed: u64, suffix: &str) -> Result<Vec<MetricsRow>, CliError> {
        let split = self.cfg.split;
        let triples = kg.split(split);
        if triples.is_empty() {
            return Err(CliError::Data(format!("split {split} is empty")));
        }
        let known = kg.known_objects();
        let mut rows = Vec::new();
        for mode in self.rank_modes() {
            let metrics = evaluate(triples, view, mode, &known)?;
            let mode = if suffix.is_empty() { mode.to_string() } else { format!("{mode}/{suffix}") };
            rows.push(MetricsRow {
                split: split.to_string(),
                mode,
                metrics,
                seed,
                config_hash: self.meta.config_hash.clone(),
            });
        }
        for r in &rows {
            self.append_jsonl("metrics.jsonl", r)?;
            println!("{}", r.to_csv());
        }
        self.append_csv("metrics.csv", MetricsRow::CSV_HEADER, &rows.iter().map(MetricsRow::to_csv).collect::<Vec<_>>())?;
        Ok(rows)
    }

    fn cost(&self) -> Result<CostConfig, CliError> {
        let mut cost = match &self.cfg.cost_config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cost_config: cannot read {}: {e}", path.display())))?;
                toml::from_str::<CostConfig>(&text)
                    .map_err(|e| CliError::Config(format!("cost_config {}: {e}", path.display())))?
            }
            None => CostConfig::preset(&self.cfg.preset).expect("preset validated"),
        };
        if let Some(n_c) = self.cfg.n_c {
            cost.n_c = n_c;
        }
        cost.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cost)
    }
}

/// Resolves a dataset string and adds reciprocal relations if missing.
pub fn load_graph(spec: &str, seed: u64) -> Result<KnowledgeGraph, CliError> {
    let kg = if let Some(name) = spec.strip_prefix("synth:") {
        if name == "cube" {
            cube()
        } else if let Some(side) = name.strip_prefix("lattice:") {
            let side = side
                .parse()
                .map_err(|_| CliError::Config(format!("dataset: bad lattice side in {spec:?}")))?;
            LatticeSpec { side, holdout: 0.1 }.generate(seed)?
        } else {
            SurrogateSpec::by_name(name)
                .ok_or_else(|| CliError::Config(format!("dataset: unknown synthetic dataset {name:?}")))?
                .generate(seed)?
        }
    } else {
        let path = Path::new(spec);
        if !path.exists() {
            return Err(CliError::Data(format!("dataset {spec} not found")));
        }
        if path.is_file() {
            read_cache(path)?
        } else {
            load_dataset(path)?
        }
    };
    Ok(if kg.is_augmented() { kg } else { kg.add_reciprocal()? })
}

pub fn ingest(ctx: &Ctx) -> Result<(), CliError> {
    let kg = ctx.graph()?;
    write_cache(&kg, ctx.out("dataset.hdkg"))?;
    let hist = kg.degree_histogram();
    #[derive(Serialize)]
    struct Summary {
        dataset: String,
        stats: hdreason::kg::DatasetStats,
        max_degree: usize,
        degree_buckets: usize,
    }
    let stats = kg.stats();
    println!(
        "|V|={} |R|={} train={} valid={} test={}",
        stats.entities, stats.relations, stats.train, stats.valid, stats.test
    );
    ctx.write_json(
        "dataset.json",
        Summary {
            dataset: ctx.cfg.dataset.clone().unwrap_or_default(),
            stats,
            max_degree: hist.max_degree(),
            degree_buckets: hist.buckets.len(),
        },
    )?;
    Ok(())
}

pub fn train(ctx: &Ctx) -> Result<(), CliError> {
    let kg = ctx.graph()?;
    let cfg = &ctx.cfg;
    let opts = cfg.train_options();
    let optimizer_id = opts.optimizer.id();
    let mut state = ModelState::init(cfg.model_config(), kg.num_entities(), kg.num_relations())?;
    let mut trainer = Trainer::new(&kg, opts, cfg.seed)?;
    let log = ctx.out("train.jsonl");
    let timings = ctx.out("timings.jsonl");
    for p in [&log, &timings] {
        if p.exists() {
            fs::remove_file(p)?;
        }
    }
    #[derive(Serialize)]
    struct EpochLine {
        epoch: usize,
        loss: f64,
        batches: usize,
        queries: usize,
    }
    for _ in 0..cfg.epochs {
        let s = trainer.run_epoch(&kg, &mut state)?;
        if !s.loss.is_finite() {
            return Err(CliError::Numeric(format!("loss is {} at epoch {}", s.loss, s.epoch)));
        }
        eprintln!("epoch {:>3}  loss {:.6}", s.epoch, s.loss);
        ctx.append_jsonl("train.jsonl", EpochLine { epoch: s.epoch, loss: s.loss, batches: s.batches, queries: s.queries })?;
        ctx.append_jsonl("timings.jsonl", &s)?;
    }
    let ck = Checkpoint::from_state(&state, optimizer_id, cfg.hash_u64(), cfg.epochs as u64);
    let path = cfg.checkpoint_path();
    write_checkpoint(&ck, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn eval(ctx: &Ctx) -> Result<(), CliError> {
    let kg = ctx.graph()?;
    let (state, ck) = ctx.model(&kg)?;
    let view = ScoreView::from_state(&state)?;
    ctx.report(&kg, &view, ck.config.seed, "")?;
    Ok(())
}

pub fn reconstruct(ctx: &Ctx, vertex: &str, relation: Option<&str>, top: usize, metric: Metric) -> Result<(), CliError> {
    let kg = ctx.graph()?;
    let (state, _) = ctx.model(&kg)?;
    let lookup = |vocab: &hdreason::kg::Vocab, key: &str, what: &str| -> Result<u32, CliError> {
        vocab
            .id(key)
            .or_else(|| key.parse::<u32>().ok().filter(|&i| (i as usize) < vocab.len()))
            .ok_or_else(|| CliError::Config(format!("{what}: unknown {key:?}")))
    };
    let v = lookup(kg.entities(), vertex, "vertex")?;
    let r = relation.map(|r| lookup(kg.relations(), r, "relation")).transpose()?;
    let neighbors: Vec<u32> = kg
        .neighbors()
        .of(v as usize)
        .iter()
        .filter(|&&(_, rel)| r.is_none_or(|r| r == rel))
        .map(|&(j, _)| j)
        .collect();
    let ranked = reconstruct_neighbors(v, &state, r, metric)?;
    #[derive(Serialize)]
    struct Row {
        id: u32,
        name: String,
        score: f64,
        neighbor: bool,
    }
    let rows: Vec<Row> = ranked
        .iter()
        .take(top)
        .map(|c| Row {
            id: c.id,
            name: kg.entities().name(c.id).unwrap_or_default().to_owned(),
            score: c.score,
            neighbor: neighbors.contains(&c.id),
        })
        .collect();
    for row in &rows {
        println!("{}\t{}\t{:.6}\t{}", row.id, row.name, row.score, if row.neighbor { "neighbor" } else { "" });
    }
    #[derive(Serialize)]
    struct Out {
        vertex: u32,
        relation: Option<u32>,
        metric: String,
        true_neighbors: usize,
        candidates: Vec<Row>,
    }
    ctx.write_json(
        "reconstruct.json",
        Out { vertex: v, relation: r, metric: serde_json::to_value(metric).expect("metric serializes").as_str().unwrap_or_default().to_owned(), true_neighbors: neighbors.len(), candidates: rows },
    )?;
    Ok(())
}

fn read_trace_file(path: &Path) -> Result<Vec<ScheduleBatch>, CliError> {
    let f = File::open(path).map_err(|e| CliError::Data(format!("trace {}: {e}", path.display())))?;
    Ok(read_trace(BufReader::new(f))?)
}

pub fn simulate(ctx: &Ctx, emit_trace: Option<&Path>, trace: Option<&Path>) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let cost = ctx.cost()?;
    let (warmup, measured, num_entities) = match trace {
        // a recorded epoch is replayed twice: once to warm the cache, once measured
        Some(path) => {
            let t = read_trace_file(path)?;
            let n = match &cfg.dataset {
                Some(_) => ctx.graph()?.num_entities(),
                None => t.iter().flat_map(|b| &b.members).map(|&v| v as usize + 1).max().unwrap_or(0),
            };
            (t.clone(), t, n)
        }
        None => {
            let kg = ctx.graph()?;
            let (cold, warm) = two_epochs(&kg, &cost)?;
            (cold, warm, kg.num_entities())
        }
    };
    if let Some(path) = emit_trace {
        let f = File::create(path)?;
        write_trace(&measured, BufWriter::new(f))?;
    }
    let cache = CacheConfig { capacity: cfg.cache_capacity.unwrap_or(cost.cache_slots), policy: cfg.policy, seed: cfg.seed };
    let report = replay(&warmup, &measured, num_entities, cache, &cost)?;
    println!(
        "{}: latency {:.3} ms, hit rate {:.4} ({} slots, {})",
        cost.name, report.latency_ms, report.hit_rate, cache.capacity, cache.policy
    );
    #[derive(Serialize)]
    struct Out<'a> {
        dataset: Option<&'a str>,
        trace: Option<&'a Path>,
        cost: &'a CostConfig,
        cache: CacheConfig,
        report: hdreason::sim::SimReport,
    }
    ctx.write_json(
        "sim_report.json",
        Out { dataset: cfg.dataset.as_deref(), trace, cost: &cost, cache, report },
    )?;

    let rows = sweep_schedules(&warmup, &measured, num_entities, &cfg.capacities, &Policy::ALL, &cost, cfg.seed)?;
    let path = ctx.out("sweep.csv");
    if path.exists() {
        fs::remove_file(&path)?;
    }
    ctx.append_csv("sweep.csv", SweepRow::CSV_HEADER, &rows.iter().map(SweepRow::to_csv).collect::<Vec<_>>())?;
    Ok(())
}

fn quantization(cfg: &RunConfig) -> Result<(Quantization, String), CliError> {
    let bits = cfg.fix_bits.ok_or_else(|| CliError::Config("fix_bits: required".into()))?;
    Ok(match cfg.frac_bits {
        Some(frac) => (Quantization::Fixed(FixedPointSpec::new(bits, frac)?), format!("fix-{bits}.{frac}")),
        None => (Quantization::PerTensor { total_bits: bits }, format!("fix-{bits}")),
    })
}

pub fn quantize_eval(ctx: &Ctx) -> Result<(), CliError> {
    let (q, label) = quantization(&ctx.cfg)?;
    let kg = ctx.graph()?;
    let (state, ck) = ctx.model(&kg)?;
    let view = quantized_view(&state, &kg, q)?;
    ctx.report(&kg, &view, ck.config.seed, &label)?;
    Ok(())
}

pub fn drop_dims_eval(ctx: &Ctx) -> Result<(), CliError> {
    let frac = ctx.cfg.drop_frac.ok_or_else(|| CliError::Config("drop_frac: required".into()))?;
    let strategy = ctx.cfg.drop_strategy;
    let kg = ctx.graph()?;
    let (state, ck) = ctx.model(&kg)?;
    let (view, _) = drop_dims_view(&ScoreView::from_state(&state)?, frac, strategy, ctx.cfg.seed)?;
    let name = serde_json::to_value(strategy).expect("strategy serializes");
    let label = format!("drop-{}-{frac}", name.as_str().unwrap_or_default());
    ctx.report(&kg, &view, ck.config.seed, &label)?;
    Ok(())
}
