use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use bcvnn::checkpoint::{load_checkpoint, save_checkpoint};
use bcvnn::data::{generate_synthetic, load_dataset, load_mnist_complex, save_dataset, ComplexMode, SyntheticSpec};
use bcvnn::hw::{estimate_network, write_cost_csv, MappingScheme};
use bcvnn::inference::{evaluate, write_evaluation_csv, EvalOptions, DEFAULT_ECE_BINS, DEFAULT_MC_SAMPLES};
use bcvnn::search::{
    enumerate_all, run_search, write_history_csv, write_records_csv, CachedEvaluator, Constraint, Evaluator, Genome,
    Metrics, Objective, SearchConfig,
};
use bcvnn::train::{summarize, train as fit, write_trace_csv, Dataset, Optimizer, TrainConfig};
use bcvnn::NetworkSpec;

use crate::config::FileConfig;
use crate::{
    CliError, CommonArgs, DataArgs, EnumerateArgs, EstimateArgs, EvalFlags, GendataArgs, ModeArg, ObjectiveArg,
    PredictArgs, SchemeArg, SearchArgs, SearchFlags, TrainArgs, TrainFlags,
};

type CliResult<T = ()> = Result<T, CliError>;

struct Context {
    file: FileConfig,
    seed_flag: Option<u64>,
    threads: usize,
    timestamp: bool,
    out: Option<PathBuf>,
}

impl Context {
    fn new(common: &CommonArgs) -> CliResult<Self> {
        let file = match &common.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig { schema_version: crate::config::SCHEMA_VERSION, ..FileConfig::default() },
        };
        let threads = common.threads.or(file.threads).unwrap_or(1);
        if threads == 0 {
            return Err(CliError::config("threads must be >= 1"));
        }
        Ok(Self {
            seed_flag: common.seed,
            threads,
            timestamp: !common.no_timestamp,
            out: common.out.clone().or_else(|| file.out.clone()),
            file,
        })
    }

    /// `--seed`, then the config file, then `BCVNN_SEED`.
    fn seed(&self) -> CliResult<u64> {
        if let Some(s) = self.seed_flag.or(self.file.seed) {
            return Ok(s);
        }
        match std::env::var("BCVNN_SEED") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::config(format!("BCVNN_SEED={v:?} is not an unsigned integer"))),
            Err(_) => Err(CliError::config(
                "a seed is required: pass --seed, set seed in the config file, or set BCVNN_SEED",
            )),
        }
    }

    fn out_dir(&self) -> CliResult<&Path> {
        let dir = self.out.as_deref().ok_or_else(|| CliError::config("--out is required"))?;
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }

    /// Writes CSV produced by `fill` to `name` inside the output directory, or
    /// to stdout when no directory was given and `stdout_ok` is set.
    fn emit_csv(
        &self,
        name: &str,
        stdout_ok: bool,
        fill: impl FnOnce(&mut Vec<u8>) -> bcvnn::Result<()>,
    ) -> CliResult<Option<PathBuf>> {
        let mut buf = Vec::new();
        if self.timestamp {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            writeln!(buf, "# generated_unix={secs}")?;
        }
        fill(&mut buf)?;
        if self.out.is_none() && stdout_ok {
            std::io::stdout().write_all(&buf)?;
            return Ok(None);
        }
        let path = self.out_dir()?.join(name);
        std::fs::write(&path, buf).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(Some(path))
    }

    fn eval_options(&self, flags: &EvalFlags) -> CliResult<EvalOptions> {
        let samples = flags.samples.or(self.file.eval.samples).unwrap_or(DEFAULT_MC_SAMPLES);
        let n_bins = flags.n_bins.or(self.file.eval.n_bins).unwrap_or(DEFAULT_ECE_BINS);
        if samples == 0 || n_bins == 0 {
            return Err(CliError::config("samples and n_bins must be >= 1"));
        }
        Ok(EvalOptions { samples, n_bins, seed: self.seed()?, threads: self.threads })
    }

    fn train_config(&self, flags: &TrainFlags) -> CliResult<TrainConfig> {
        let mut cfg = self.file.train.clone().unwrap_or_default();
        if let Some(v) = flags.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = flags.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = flags.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = flags.weight_decay {
            cfg.weight_decay = v;
        }
        match flags.momentum {
            Some(m) if m == 0.0 => cfg.optimizer = Optimizer::Sgd,
            Some(momentum) => cfg.optimizer = Optimizer::Momentum { momentum },
            None => {}
        }
        cfg.seed = self.seed()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn network(&self, flag: &Option<PathBuf>) -> CliResult<NetworkSpec> {
        let path = flag
            .clone()
            .or_else(|| self.file.network.clone())
            .ok_or_else(|| CliError::config("--network is required"))?;
        Ok(NetworkSpec::load(existing(&path)?)?)
    }

    fn dataset(&self, args: &DataArgs) -> CliResult<Dataset<f64>> {
        let f = &self.file.data;
        let images = args.mnist_images.clone().or_else(|| f.mnist_images.clone());
        let labels = args.mnist_labels.clone().or_else(|| f.mnist_labels.clone());
        if let Some(dir) = args.data.clone().or_else(|| f.dir.clone()) {
            if images.is_some() || labels.is_some() {
                return Err(CliError::config("give either a dataset directory or IDX files, not both"));
            }
            return Ok(load_dataset(existing(&dir)?)?);
        }
        let (Some(images), Some(labels)) = (images, labels) else {
            return Err(CliError::config(
                "no dataset: pass --data DIR or both --mnist-images and --mnist-labels",
            ));
        };
        let mode = match args.complex_mode {
            Some(ModeArg::ZeroImag) => ComplexMode::ZeroImag,
            Some(ModeArg::Dft) => ComplexMode::Dft,
            None => f.complex_mode.unwrap_or_default(),
        };
        let limit = args.limit.or(f.limit);
        Ok(load_mnist_complex(existing(&images)?, existing(&labels)?, mode, limit)?)
    }

    fn search_config(&self, flags: &SearchFlags) -> CliResult<SearchConfig> {
        let mut cfg = self.file.search.clone().unwrap_or_default();
        if let Some(o) = flags.objective {
            cfg.objective = match o {
                ObjectiveArg::MaxAcc => Objective::MaxAcc,
                ObjectiveArg::MinEce => Objective::MinEce,
                ObjectiveArg::Weighted => Objective::Weighted {
                    w_acc: flags.w_acc.unwrap_or(1.0),
                    w_ece: flags.w_ece.unwrap_or(1.0),
                },
            };
        } else if flags.w_acc.is_some() || flags.w_ece.is_some() {
            return Err(CliError::config("--w-acc/--w-ece require --objective weighted"));
        }
        if let Some(m) = flags.max_dropout {
            cfg.constraint = Some(Constraint::MaxDropout(m));
        }
        if let Some(m) = flags.min_dropout {
            cfg.constraint = Some(Constraint::MinDropout(m));
        }
        Ok(cfg)
    }
}

fn existing(path: &Path) -> CliResult<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::config(format!("{} does not exist", path.display())))
    }
}

fn parse_genome(s: &str) -> CliResult<Genome> {
    Ok(s.parse::<Genome>()?)
}

pub fn train(args: TrainArgs) -> CliResult {
    let ctx = Context::new(&args.common)?;
    let mut spec = ctx.network(&args.network)?;
    if let Some(g) = &args.genome {
        spec = spec.with_part_modes(parse_genome(g)?.modes())?;
    }
    let cfg = ctx.train_config(&args.train)?;
    let out = ctx.out_dir()?.to_path_buf();
    let data = ctx.dataset(&args.data)?;
    let outcome = fit(&spec, &data, &cfg)?;
    let ckpt = out.join("checkpoint");
    save_checkpoint(&ckpt, &spec, &outcome.weights)?;
    ctx.emit_csv("trace.csv", false, |buf| write_trace_csv(&outcome.trace, buf))?;
    println!("{}", summarize(&outcome.trace).trim_end());
    println!("checkpoint={}", ckpt.display());
    Ok(())
}

pub fn predict(args: PredictArgs) -> CliResult {
    let ctx = Context::new(&args.common)?;
    let ckpt = args
        .checkpoint
        .clone()
        .or_else(|| ctx.file.checkpoint.clone())
        .ok_or_else(|| CliError::config("--checkpoint is required"))?;
    let (spec, weights) = load_checkpoint::<f64>(existing(&ckpt)?)?;
    let opts = ctx.eval_options(&args.eval)?;
    let data = ctx.dataset(&args.data)?;
    let eval = evaluate(&spec, &weights, &data, &opts)?;
    if let Some(path) = ctx.emit_csv("predictions.csv", true, |buf| write_evaluation_csv(&eval, buf))? {
        println!(
            "accuracy={} ece={} samples={} predictions={}",
            eval.report.accuracy,
            eval.report.ece,
            opts.samples,
            path.display()
        );
    }
    Ok(())
}

/// Evaluator that trains the genome's network and scores it with MC dropout
/// on a held-out split.
struct Pipeline {
    spec: NetworkSpec,
    fit: Dataset<f64>,
    val: Dataset<f64>,
    train: TrainConfig,
    eval: EvalOptions,
}

impl Evaluator for Pipeline {
    fn evaluate(&mut self, genome: &Genome) -> bcvnn::Result<Metrics> {
        let spec = self.spec.with_part_modes(genome.modes())?;
        let outcome = fit(&spec, &self.fit, &self.train)?;
        let r = evaluate(&spec, &outcome.weights, &self.val, &self.eval)?.report;
        Ok(Metrics { accuracy: r.accuracy, ece: r.ece })
    }
}

enum Source {
    Table(CachedEvaluator),
    Pipeline(Box<Pipeline>),
}

impl Evaluator for Source {
    fn evaluate(&mut self, genome: &Genome) -> bcvnn::Result<Metrics> {
        match self {
            Source::Table(t) => t.evaluate(genome),
            Source::Pipeline(p) => p.evaluate(genome),
        }
    }
}

/// Builds the evaluator and returns it with the genome length.
fn evaluator(
    ctx: &Context,
    flags: &SearchFlags,
    data: &DataArgs,
    train: &TrainFlags,
    eval: &EvalFlags,
) -> CliResult<(Source, usize)> {
    if let Some(table) = &flags.table {
        let file = std::fs::File::open(existing(table)?)?;
        let cached = CachedEvaluator::from_csv(file).map_err(|e| CliError::config(format!("{}: {e}", table.display())))?;
        let n = cached
            .genome_len()
            .ok_or_else(|| CliError::config("fitness table is empty or mixes genome lengths"))?;
        return Ok((Source::Table(cached), n));
    }
    let spec = ctx.network(&flags.network)?;
    let n = spec.bayesian_layer_count();
    if n == 0 {
        return Err(CliError::config("network has no dropout layers to configure"));
    }
    let frac = flags.val_fraction.or(ctx.file.eval.val_fraction).unwrap_or(0.25);
    if !(frac > 0.0 && frac < 1.0) {
        return Err(CliError::config(format!("val_fraction {frac} must be in (0, 1)")));
    }
    let data = ctx.dataset(data)?;
    let keep = ((data.len() as f64) * (1.0 - frac)).round() as usize;
    if keep == 0 || keep >= data.len() {
        return Err(CliError::config("dataset too small for the requested validation split"));
    }
    let (fit, val) = data.split(keep);
    let pipeline = Pipeline { spec, fit, val, train: ctx.train_config(train)?, eval: ctx.eval_options(eval)? };
    Ok((Source::Pipeline(Box::new(pipeline)), n))
}

pub fn search(args: SearchArgs) -> CliResult {
    let ctx = Context::new(&args.common)?;
    let mut cfg = ctx.search_config(&args.search)?;
    if let Some(v) = args.population {
        cfg.population_size = v;
    }
    if let Some(v) = args.mutation_portion {
        cfg.mutation_portion = v;
    }
    if let Some(v) = args.mutation_prob {
        cfg.mutation_prob = v;
    }
    if let Some(v) = args.crossover_prob {
        cfg.crossover_prob = v;
    }
    if let Some(v) = args.iterations {
        cfg.iterations = v;
    }
    cfg.seed = ctx.seed()?;
    cfg.validate()?;
    ctx.out_dir()?;
    let (source, n) = evaluator(&ctx, &args.search, &args.data, &args.train, &args.eval)?;
    let outcome = run_search(n, &cfg, source)?;
    ctx.emit_csv("history.csv", false, |buf| write_history_csv(&outcome.history, buf))?;
    ctx.emit_csv("pareto.csv", false, |buf| write_records_csv(&outcome.pareto, buf))?;
    ctx.emit_csv("best.csv", false, |buf| write_records_csv(std::slice::from_ref(&outcome.best), buf))?;
    let b = &outcome.best;
    println!(
        "best={} accuracy={} ece={} dropout_count={} fitness={} evaluations={}",
        b.genome, b.accuracy, b.ece, b.dropout_count, b.fitness, outcome.evaluations
    );
    Ok(())
}

pub fn enumerate(args: EnumerateArgs) -> CliResult {
    let ctx = Context::new(&args.common)?;
    let cfg = ctx.search_config(&args.search)?;
    ctx.out_dir()?;
    let (source, n) = evaluator(&ctx, &args.search, &args.data, &args.train, &args.eval)?;
    let records = enumerate_all(n, source, cfg.objective, cfg.constraint)?;
    ctx.emit_csv("ranked.csv", false, |buf| write_records_csv(&records, buf))?;
    match records.first().filter(|r| r.feasible) {
        Some(b) => println!(
            "best={} accuracy={} ece={} dropout_count={} fitness={} configurations={}",
            b.genome,
            b.accuracy,
            b.ece,
            b.dropout_count,
            b.fitness,
            records.len()
        ),
        None => return Err(bcvnn::Error::NoFeasible(format!("no genome satisfies {:?}", cfg.constraint)).into()),
    }
    Ok(())
}

pub fn estimate(args: EstimateArgs) -> CliResult {
    let ctx = Context::new(&args.common)?;
    let spec = ctx.network(&args.network)?;
    let modes = match &args.genome {
        Some(g) => parse_genome(g)?.modes().to_vec(),
        None => spec.part_modes(),
    };
    let schemes: Vec<MappingScheme> = match args.scheme {
        SchemeArg::LatencyOpt => vec![MappingScheme::LatencyOpt],
        SchemeArg::ResourceOpt => vec![MappingScheme::ResourceOpt],
        SchemeArg::Both => MappingScheme::ALL.to_vec(),
    };
    let reports = schemes
        .iter()
        .map(|&s| estimate_network(&spec, &modes, s))
        .collect::<bcvnn::Result<Vec<_>>>()?;
    let refs: Vec<_> = reports.iter().collect();
    if let Some(path) = ctx.emit_csv("costs.csv", true, |buf| write_cost_csv(&refs, buf))? {
        for r in &reports {
            println!(
                "scheme={} latency_units={} engines={} mac_ops={} dropout_engines={}",
                r.scheme, r.total.latency_units, r.total.engine_count, r.total.mac_ops, r.total.dropout_engines
            );
        }
        println!("costs={}", path.display());
    }
    Ok(())
}

pub fn gendata(args: GendataArgs) -> CliResult {
    let ctx = Context::new(&args.common)?;
    let idx = args.data.mnist_images.is_some()
        || args.data.mnist_labels.is_some()
        || ctx.file.data.mnist_images.is_some();
    let data = if idx {
        ctx.dataset(&args.data)?
    } else {
        let s = &ctx.file.synthetic;
        let spec = SyntheticSpec {
            classes: args.classes.or(s.classes).unwrap_or(4),
            samples_per_class: args.samples_per_class.or(s.samples_per_class).unwrap_or(100),
            feature_shape: args.feature_shape.clone().or_else(|| s.feature_shape.clone()).unwrap_or(vec![1, 8, 8]),
            class_separation: args.separation.or(s.class_separation).unwrap_or(1.0),
            seed: ctx.seed()?,
        };
        generate_synthetic(&spec)?
    };
    let dir = ctx.out_dir()?;
    save_dataset(&data, dir)?;
    println!("samples={} classes={} dir={}", data.len(), data.classes(), dir.display());
    Ok(())
}
