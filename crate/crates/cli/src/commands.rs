use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::Args;
use tbsm::autodiff::DEFAULT_STEP;
use tbsm::checkpoint;
use tbsm::config::ExperimentConfig;
use tbsm::dataset::{file_sha256, Dataset, EmbeddedSet, EventSet, Vocab};
use tbsm::model::{toy_heads, toy_probe, HeadConfig, ModelConfig, TbsmModel};
use tbsm::synthetic::{gen_dataset, label_balance, SynthConfig};
use tbsm::taobao::{
    generate_raw_corpus, make_test_point, raw_to_processed, read_processed, read_raw, sample_train,
    write_processed, write_raw, RawCorpusConfig,
};
use tbsm::train::{
    evaluate, holdout, read_summary_csv, run_experiment, write_auc_csv, write_batch_losses_csv,
    write_metrics_csv, write_summary_csv, write_table_csv, Example, Summary,
};

use crate::{ConfigArgs, OutArgs};

/// Head variants of the result table, in row order.
pub const TABLE_VARIANTS: [&str; 9] = [
    "gensim", "cossim", "dotsim", "indsim", "4-seq", "4-inner", "8-inner", "lstm5", "mha8",
];

#[derive(Debug)]
pub enum CliError {
    Lib(tbsm::Error),
    /// A check ran to completion and did not meet its threshold.
    Check(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Lib(e) => e.code(),
            CliError::Check(_) => "E_CHECK",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => e.fmt(f),
            CliError::Check(m) => f.write_str(m),
        }
    }
}

impl From<tbsm::Error> for CliError {
    fn from(e: tbsm::Error) -> Self {
        CliError::Lib(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Lib(tbsm::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Lib(tbsm::Error::Config(msg.into()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Saves `set`, reads it back and checks the bytes hash to the same digest.
fn save_verified(set: &Dataset, path: &Path) -> Result<String> {
    let sha = set.save(path)?;
    if file_sha256(path)? != sha || Dataset::load(path)? != *set {
        return Err(config_err(format!(
            "{} did not read back identically",
            path.display()
        )));
    }
    Ok(sha)
}

#[derive(Args)]
pub struct SynthGenArgs {
    /// `delta0`, `delta3`, `delta12` or `delta30`.
    #[arg(long, default_value = "delta0")]
    pub preset: String,
    #[arg(long)]
    pub delta: Option<usize>,
    /// Total points, train and test together.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn synth_gen(a: SynthGenArgs) -> Result<()> {
    let mut cfg = SynthConfig::preset(&a.preset)?;
    cfg.delta = a.delta.unwrap_or(cfg.delta);
    cfg.count = a.count.unwrap_or(cfg.count);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    cfg.n = a.n.unwrap_or(cfg.n);
    cfg.tau = a.tau.unwrap_or(cfg.tau);
    cfg.test_fraction = a.test_fraction.unwrap_or(cfg.test_fraction);
    let (train, test) = gen_dataset(&cfg)?;
    if cfg.count == 0 {
        eprintln!("warning: count is 0, writing empty datasets");
    }
    let balance = label_balance(train.iter().chain(&test));
    create_dir(&a.out.out)?;
    let wrap = |points| {
        Dataset::Embedded(EmbeddedSet {
            n: cfg.n,
            tau: cfg.tau,
            delta: cfg.delta,
            seed: cfg.seed,
            points,
        })
    };
    let (n_train, n_test) = (train.len(), test.len());
    let train_path = a.out.out.join("train.bin");
    let test_path = a.out.out.join("test.bin");
    let train_sha = save_verified(&wrap(train), &train_path)?;
    let test_sha = save_verified(&wrap(test), &test_path)?;
    println!(
        "synthetic n={} tau={} delta={} seed={}: {n_train} train, {n_test} test",
        cfg.n, cfg.tau, cfg.delta, cfg.seed
    );
    match balance {
        Some(b) => println!("label balance {b:.4}"),
        None => println!("label balance undefined"),
    }
    println!("{train_sha}  {}", train_path.display());
    println!("{test_sha}  {}", test_path.display());
    Ok(())
}

#[derive(Args)]
pub struct SynthRawArgs {
    #[arg(long, default_value_t = RawCorpusConfig::default().users)]
    pub users: usize,
    #[arg(long, default_value_t = RawCorpusConfig::default().seed)]
    pub seed: u64,
    /// Also write the processed form next to the raw file.
    #[arg(long)]
    pub processed: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn synth_raw(a: SynthRawArgs) -> Result<()> {
    let cfg = RawCorpusConfig {
        users: a.users,
        seed: a.seed,
        ..RawCorpusConfig::default()
    };
    let events = generate_raw_corpus(&cfg)?;
    create_dir(&a.out.out)?;
    let raw_path = a.out.out.join("raw.csv");
    write_raw(create(&raw_path)?, &events)?;
    println!("{} events for {} users", events.len(), cfg.users);
    println!("{}  {}", file_sha256(&raw_path)?, raw_path.display());
    if a.processed {
        let (records, _) = raw_to_processed(&events, a.seed);
        let path = a.out.out.join("processed.txt");
        write_processed(create(&path)?, &records)?;
        println!("{}  {}", file_sha256(&path)?, path.display());
    }
    Ok(())
}

#[derive(Args)]
pub struct PrepArgs {
    /// Raw `user,item,category[,behavior],timestamp` CSV.
    #[arg(
        long,
        required_unless_present = "processed",
        conflicts_with = "processed"
    )]
    pub raw: Option<PathBuf>,
    /// Processed corpus, one user record per line.
    #[arg(long)]
    pub processed: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub tau: usize,
    /// Positive windows per record.
    #[arg(long, default_value_t = 1)]
    pub positives: usize,
    /// Negative windows per record.
    #[arg(long, default_value_t = 1)]
    pub negatives: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn prep(a: PrepArgs) -> Result<()> {
    create_dir(&a.out.out)?;
    let records = match (&a.raw, &a.processed) {
        (Some(raw), _) => {
            let events = read_raw(open(raw)?)?;
            let (records, stats) = raw_to_processed(&events, a.seed);
            println!(
                "raw: {} users, {} records, {} rejected rows, {} skipped users, {} truncated, {} padded",
                stats.users, stats.records, stats.rejected_rows, stats.skipped_users, stats.truncated, stats.padded
            );
            let path = a.out.out.join("processed.txt");
            write_processed(create(&path)?, &records)?;
            println!("{}  {}", file_sha256(&path)?, path.display());
            records
        }
        (None, Some(p)) => read_processed(open(p)?)?,
        (None, None) => return Err(config_err("either --raw or --processed is required")),
    };
    let train = sample_train(&records, a.tau, a.positives, a.negatives, a.seed)?;
    let test = records
        .iter()
        .map(|r| make_test_point(r, a.tau))
        .collect::<tbsm::Result<Vec<_>>>()?;
    let vocab = Vocab::covering(train.iter().chain(&test));
    println!(
        "{} records, {} train points, {} test points",
        records.len(),
        train.len(),
        test.len()
    );
    for (name, points) in [("train.bin", train), ("test.bin", test)] {
        let path = a.out.out.join(name);
        let sha = save_verified(
            &Dataset::Events(EventSet {
                tau: a.tau,
                vocab,
                points,
            }),
            &path,
        )?;
        println!("{sha}  {}", path.display());
    }
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Training and test sets of one config, with the model config they imply.
enum Loaded {
    Embedded(EmbeddedSet, EmbeddedSet),
    Events(EventSet, EventSet),
}

impl Loaded {
    fn read(train: &Path, test: &Path) -> Result<Self> {
        match (Dataset::load(train)?, Dataset::load(test)?) {
            (Dataset::Embedded(a), Dataset::Embedded(b)) => Ok(Loaded::Embedded(a, b)),
            (Dataset::Events(a), Dataset::Events(b)) => Ok(Loaded::Events(a, b)),
            _ => Err(config_err(
                "train and test files hold different kinds of data",
            )),
        }
    }

    fn model_config(&self, cfg: &ExperimentConfig) -> Result<ModelConfig> {
        let (tau, n, vocab) = match self {
            Loaded::Embedded(a, b) => {
                if a.n != b.n || a.tau != b.tau {
                    return Err(config_err("train and test sets have different dimensions"));
                }
                (a.tau, Some(a.n), None)
            }
            Loaded::Events(a, b) => {
                if a.tau != b.tau {
                    return Err(config_err("train and test sets have different tau"));
                }
                (a.tau, None, Some(a.vocab.union(b.vocab)))
            }
        };
        if tau != cfg.tau {
            return Err(config_err(format!(
                "config tau={} but data has tau={tau}",
                cfg.tau
            )));
        }
        if n.is_some_and(|n| n != cfg.n) {
            return Err(config_err(format!(
                "config n={} but synthetic data has n={}",
                cfg.n,
                n.unwrap()
            )));
        }
        Ok(cfg.model_config(vocab)?)
    }
}

fn out_dir(cfg: &ExperimentConfig, out: &OutArgs) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| out.out.clone())
}

fn train_points<E: Example>(
    cfg: &ExperimentConfig,
    model_cfg: &ModelConfig,
    train: &[E],
    test: &[E],
    out: &Path,
) -> Result<Summary> {
    let (fit, valid) = holdout(train, cfg.validation_fraction);
    let (runs, summary) = run_experiment(
        &cfg.id,
        model_cfg,
        &cfg.train_config(),
        fit,
        valid,
        test,
        &cfg.seeds,
    )?;
    let reports: Vec<_> = runs.iter().map(|r| r.1.clone()).collect();
    create_dir(&out.join("checkpoints"))?;
    write_metrics_csv(create(&out.join("metrics.csv"))?, &reports)?;
    write_batch_losses_csv(create(&out.join("losses.csv"))?, &reports)?;
    write_summary_csv(
        create(&out.join("summary.csv"))?,
        std::slice::from_ref(&summary),
    )?;
    write_auc_csv(
        create(&out.join("aucs.csv"))?,
        std::slice::from_ref(&summary),
    )?;
    for (model, report) in &runs {
        let path = out
            .join("checkpoints")
            .join(format!("seed-{}.bin", report.seed));
        checkpoint::save(model, &path)?;
        if checkpoint::load(&path)?.params != model.params {
            return Err(config_err(format!(
                "{} did not read back identically",
                path.display()
            )));
        }
    }
    Ok(summary)
}

fn run_training(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    let loaded = Loaded::read(
        cfg.require(&cfg.train, "train")?,
        cfg.require(&cfg.test, "test")?,
    )?;
    let model_cfg = loaded.model_config(cfg)?;
    create_dir(out)?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    let summary = match &loaded {
        Loaded::Embedded(a, b) => train_points(cfg, &model_cfg, &a.points, &b.points, out)?,
        Loaded::Events(a, b) => train_points(cfg, &model_cfg, &a.points, &b.points, out)?,
    };
    println!(
        "{} {}: auc mean {:.4} std {:.4} range {:.4} over {} seeds",
        summary.config_id,
        summary.label,
        summary.auc_mean,
        summary.auc_std,
        summary.auc_range,
        summary.per_seed.len()
    );
    Ok(summary)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(a.config.config.as_deref(), &a.config.set)?;
    run_training(&cfg, &out_dir(&cfg, &a.out))?;
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    /// Parameter file written by `train`; a fresh model from the config when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset to score; defaults to the config's `test`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(a.config.config.as_deref(), &a.config.set)?;
    let data_path = match &a.data {
        Some(p) => p.clone(),
        None => cfg.require(&cfg.test, "test")?.to_path_buf(),
    };
    let data = Dataset::load(&data_path)?;
    let model = match &a.checkpoint {
        Some(p) => checkpoint::load(p)?,
        None => {
            let vocab = match &data {
                Dataset::Events(s) => Some(s.vocab),
                Dataset::Embedded(_) => None,
            };
            TbsmModel::new(cfg.model_config(vocab)?, cfg.seeds[0])?
        }
    };
    let report = match &data {
        Dataset::Embedded(s) => evaluate(&model, &s.points)?,
        Dataset::Events(s) => evaluate(&model, &s.points)?,
    };
    create_dir(&a.out.out)?;
    let path = a.out.out.join("scores.csv");
    let mut w = create(&path)?;
    {
        use std::io::Write;
        let labels = data.labels();
        writeln!(w, "index,label,score").map_err(|e| io_err(&path, e))?;
        for (i, (l, s)) in labels.iter().zip(&report.scores).enumerate() {
            writeln!(w, "{i},{l},{s}").map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
    }
    let auc = report
        .auc
        .map_or("undefined".to_string(), |x| format!("{x:.4}"));
    println!(
        "{} points: auc {auc} loss {:.4} accuracy {:.4}",
        report.scores.len(),
        report.loss,
        report.accuracy
    );
    Ok(())
}

#[derive(Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = DEFAULT_STEP)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Seeds searched for a well-conditioned probe point per head.
    #[arg(long, default_value_t = 100)]
    pub max_seeds: u64,
}

pub fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let mut worst: f64 = 0.0;
    println!(
        "{:<8} {:>5} {:>7} {:>12}",
        "head", "seed", "coords", "max_rel_err"
    );
    for (name, head) in toy_heads() {
        let probe = toy_probe(&head, a.max_seeds)?;
        let r = probe.grad_check(a.step)?;
        if let Some(i) = r.non_finite {
            return Err(CliError::Check(format!(
                "{name}: non-finite gradient at coordinate {i}"
            )));
        }
        println!(
            "{name:<8} {:>5} {:>7} {:>12.3e}",
            probe.seed, r.coordinates, r.max_rel_error
        );
        worst = worst.max(r.max_rel_error);
    }
    println!("max relative error: {worst:.3e}");
    if worst > a.tolerance {
        return Err(CliError::Check(format!(
            "max relative error {worst:.3e} exceeds {:.1e}",
            a.tolerance
        )));
    }
    Ok(())
}

#[derive(Args)]
pub struct ReportArgs {
    /// Existing `summary.csv` files; when absent every table variant is trained.
    #[arg(long, num_args = 1..)]
    pub summaries: Vec<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn report(a: ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    let out;
    if a.summaries.is_empty() {
        let base = ExperimentConfig::load(a.config.config.as_deref(), &a.config.set)?;
        out = out_dir(&base, &a.out);
        for v in TABLE_VARIANTS {
            let cfg = ExperimentConfig {
                variant: v.to_string(),
                id: v.to_string(),
                ..base.clone()
            };
            cfg.validate()?;
            rows.push(run_training(&cfg, &out.join(v))?);
        }
    } else {
        out = a.out.out.clone();
        for p in &a.summaries {
            rows.extend(read_summary_csv(open(p)?)?);
        }
        let rank = |s: &Summary| {
            TABLE_VARIANTS
                .iter()
                .position(|v| {
                    HeadConfig::from_variant(v, s.tau).is_ok_and(|h| h.label(s.tau) == s.label)
                })
                .unwrap_or(usize::MAX)
        };
        rows.sort_by_key(rank);
    }
    create_dir(&out)?;
    let path = out.join("table.csv");
    write_table_csv(create(&path)?, &rows)?;
    write_auc_csv(create(&out.join("aucs.csv"))?, &rows)?;
    println!("{} rows  {}", rows.len(), path.display());
    Ok(())
}
