//! Run reports, multi-seed summaries and their CSV forms.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HeadConfig, ModelConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    #[serde(rename = "run_seed")]
    pub seed: u64,
    pub step: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub seed: u64,
    pub rows: Vec<MetricRow>,
    pub batch_losses: Vec<f64>,
    pub test_auc: Option<f64>,
    pub test_accuracy: f64,
    pub test_loss: f64,
    /// Seconds; not written to any CSV.
    pub wall_time: f64,
}

/// Test-AUC statistics over the seeds of one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub config_id: String,
    /// Result-table row label, e.g. `TSL(8-inner)`.
    pub label: String,
    /// `tsl`, `mha` or `lstm`.
    pub head_kind: String,
    /// TSL heads, attention heads or LSTM layers.
    pub k: usize,
    pub tau: usize,
    pub auc_mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub auc_std: f64,
    /// `max - min`.
    pub auc_range: f64,
    /// `(seed, auc)` in ascending seed order.
    pub per_seed: Vec<(u64, f64)>,
}

/// Mean, sample standard deviation and range of `values`, computed in
/// ascending order so the result does not depend on input order.
pub fn stats(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    // Offsets from the minimum keep identical inputs exact.
    let mean = v[0] + v.iter().map(|x| x - v[0]).sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std, v[v.len() - 1] - v[0])
}

pub fn summarize(config_id: &str, cfg: &ModelConfig, runs: &[RunReport]) -> Result<Summary> {
    let mut per_seed = runs
        .iter()
        .map(|r| {
            r.test_auc
                .map(|a| (r.seed, a))
                .ok_or_else(|| Error::UndefinedMetric(format!("seed {} has no test AUC", r.seed)))
        })
        .collect::<Result<Vec<_>>>()?;
    if per_seed.is_empty() {
        return Err(Error::UndefinedMetric("no runs to summarize".into()));
    }
    per_seed.sort_by_key(|p| p.0);
    let aucs: Vec<f64> = per_seed.iter().map(|p| p.1).collect();
    let (auc_mean, auc_std, auc_range) = stats(&aucs);
    let (head_kind, k) = match &cfg.head {
        HeadConfig::Tsl { heads } => ("tsl", heads.len()),
        HeadConfig::Mha { heads, .. } => ("mha", *heads),
        HeadConfig::Lstm { layers } => ("lstm", *layers),
    };
    Ok(Summary {
        config_id: config_id.to_string(),
        label: cfg.head.label(cfg.tau),
        head_kind: head_kind.to_string(),
        k,
        tau: cfg.tau,
        auc_mean,
        auc_std,
        auc_range,
        per_seed,
    })
}

/// Means of ten consecutive, nearly equal slices of `losses`.
pub fn decile_means(losses: &[f64]) -> Vec<f64> {
    let n = losses.len();
    (0..10)
        .map(|i| (i * n / 10, (i + 1) * n / 10))
        .filter(|(a, b)| b > a)
        .map(|(a, b)| losses[a..b].iter().sum::<f64>() / (b - a) as f64)
        .collect()
}

/// `run_seed,step,split,loss,accuracy`, one row per logging point.
pub fn write_metrics_csv<W: Write>(w: W, runs: &[RunReport]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for row in runs.iter().flat_map(|r| &r.rows) {
        wr.serialize(row)?;
    }
    wr.flush().map_err(|e| Error::io("<metrics csv>", e))
}

const SUMMARY_HEADER: [&str; 10] = [
    "config_id",
    "label",
    "head_kind",
    "k",
    "tau",
    "auc_mean",
    "auc_std",
    "auc_range",
    "seeds",
    "aucs",
];

/// One row per summary; per-seed columns are `;`-joined.
pub fn write_summary_csv<W: Write>(w: W, summaries: &[Summary]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        let join = |f: &dyn Fn(&(u64, f64)) -> String| {
            s.per_seed.iter().map(f).collect::<Vec<_>>().join(";")
        };
        wr.write_record([
            s.config_id.clone(),
            s.label.clone(),
            s.head_kind.clone(),
            s.k.to_string(),
            s.tau.to_string(),
            s.auc_mean.to_string(),
            s.auc_std.to_string(),
            s.auc_range.to_string(),
            join(&|p| p.0.to_string()),
            join(&|p| p.1.to_string()),
        ])?;
    }
    wr.flush().map_err(|e| Error::io("<summary csv>", e))
}

/// `run_seed,step,loss`, the training loss of every batch.
pub fn write_batch_losses_csv<W: Write>(w: W, runs: &[RunReport]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["run_seed", "step", "loss"])?;
    for r in runs {
        for (i, l) in r.batch_losses.iter().enumerate() {
            wr.write_record([r.seed.to_string(), (i + 1).to_string(), l.to_string()])?;
        }
    }
    wr.flush().map_err(|e| Error::io("<loss csv>", e))
}

/// `config_id,run_seed,auc`, one row per seed.
pub fn write_auc_csv<W: Write>(w: W, summaries: &[Summary]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["config_id", "run_seed", "auc"])?;
    for s in summaries {
        for (seed, auc) in &s.per_seed {
            wr.write_record([s.config_id.clone(), seed.to_string(), auc.to_string()])?;
        }
    }
    wr.flush().map_err(|e| Error::io("<auc csv>", e))
}

/// Reads rows written by [`write_summary_csv`].
pub fn read_summary_csv<R: std::io::Read>(r: R) -> Result<Vec<Summary>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Parse {
            line: i + 2,
            column: 1,
            message: format!("summary row has an invalid {what}"),
        };
        if rec.len() != 10 {
            return Err(bad("field count"));
        }
        let num = |j: usize| rec[j].parse::<f64>().map_err(|_| bad(SUMMARY_HEADER[j]));
        let seeds: Vec<u64> = split_list(&rec[8])
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("seed list"))?;
        let aucs: Vec<f64> = split_list(&rec[9])
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("auc list"))?;
        if seeds.len() != aucs.len() {
            return Err(bad("seed/auc pairing"));
        }
        out.push(Summary {
            config_id: rec[0].to_string(),
            label: rec[1].to_string(),
            head_kind: rec[2].to_string(),
            k: rec[3].parse().map_err(|_| bad("k"))?,
            tau: rec[4].parse().map_err(|_| bad("tau"))?,
            auc_mean: num(5)?,
            auc_std: num(6)?,
            auc_range: num(7)?,
            per_seed: seeds.into_iter().zip(aucs).collect(),
        });
    }
    Ok(out)
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(';').filter(|x| !x.is_empty())
}

/// `model,time_series_processing,tau,auc_mean,auc_std,auc_range,seeds`, in
/// the given order.
pub fn write_table_csv<W: Write>(w: W, summaries: &[Summary]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "model",
        "time_series_processing",
        "tau",
        "auc_mean",
        "auc_std",
        "auc_range",
        "seeds",
    ])?;
    for s in summaries {
        wr.write_record([
            "TBSM".to_string(),
            s.label.clone(),
            s.tau.to_string(),
            format!("{:.4}", s.auc_mean),
            format!("{:.4}", s.auc_std),
            format!("{:.4}", s.auc_range),
            s.per_seed.len().to_string(),
        ])?;
    }
    wr.flush().map_err(|e| Error::io("<table csv>", e))
}
