//! Monte-Carlo campaigns over random four-qubit states.
//!
//! State `i` is drawn from its own RNG stream `(seed, i)` and records are emitted in
//! index order, so output does not depend on the number of worker threads.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assist::{cflat, relative_gain, RANK_TOL};
use crate::error::{Error, Result};
use crate::linalg::svd;
use crate::state::{permute_parties, q_matrix, FourQubitPure, Party, Permutation, Sampler};

/// States evaluated per parallel chunk before records are flushed.
const CHUNK: usize = 512;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McConfig {
    pub n_states: usize,
    pub seed: u64,
    pub six_pair: bool,
    pub hist_bins: usize,
    /// `None` uses every available core.
    pub workers: Option<usize>,
    pub sampler: Sampler,
}

impl McConfig {
    pub fn new(n_states: usize, seed: u64) -> Self {
        Self {
            n_states,
            seed,
            six_pair: false,
            hist_bins: 60,
            workers: None,
            sampler: Sampler::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 {
            return Err(Error::Config("n_states must be at least 1".into()));
        }
        if self.hist_bins < 2 {
            return Err(Error::Config("hist_bins must be at least 2".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub index: u64,
    pub csharp: f64,
    pub cflat: f64,
    /// Infinite when `cflat` vanishes but `csharp` does not.
    pub relative_gain: f64,
    pub rank_class: usize,
    /// Averages over the six keeper pairs: `(csharp, cflat)`.
    pub six_pair: Option<(f64, f64)>,
}

impl Record {
    pub fn evaluate(index: u64, psi: &FourQubitPure, six_pair: bool) -> Self {
        let sigma = svd(&q_matrix(psi)).expect("finite state").sigma;
        let cs: f64 = sigma.iter().sum();
        let cf = cflat(psi).value;
        Self {
            index,
            csharp: cs,
            cflat: cf,
            relative_gain: relative_gain(cs, cf),
            rank_class: sigma.iter().filter(|&&s| s > RANK_TOL).count(),
            six_pair: six_pair.then(|| six_pair_average(psi)),
        }
    }

    fn header(six_pair: bool) -> Vec<&'static str> {
        let mut h = vec!["index", "csharp", "cflat", "relative_gain", "rank_class"];
        if six_pair {
            h.extend(["six_pair_csharp", "six_pair_cflat"]);
        }
        h
    }

    fn fields(&self) -> Vec<String> {
        let mut f = vec![
            self.index.to_string(),
            self.csharp.to_string(),
            self.cflat.to_string(),
            self.relative_gain.to_string(),
            self.rank_class.to_string(),
        ];
        if let Some((a, b)) = self.six_pair {
            f.extend([a.to_string(), b.to_string()]);
        }
        f
    }
}

/// Averages of `csharp` and `cflat` over the six choices of keeper pair.
pub fn six_pair_average(psi: &FourQubitPure) -> (f64, f64) {
    let mut cs = 0.0;
    let mut cf = 0.0;
    for (i, &a) in Party::ALL.iter().enumerate() {
        for &b in &Party::ALL[i + 1..] {
            let moved = permute_parties(psi, Permutation::keepers(a, b).expect("distinct parties"));
            cs += crate::assist::csharp(&moved);
            cf += cflat(&moved).value;
        }
    }
    (cs / 6.0, cf / 6.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub left: f64,
    pub right: f64,
    pub density: f64,
}

/// Density histogram on uniform bins spanning `[min, max]`; a constant sample uses
/// `[v - 1/2, v + 1/2]`.
pub fn emit_histogram(values: &[f64], bins: usize) -> Result<Vec<Bin>> {
    if values.is_empty() {
        return Err(Error::Config("histogram of an empty sample".into()));
    }
    if bins < 2 {
        return Err(Error::Config("histogram needs at least 2 bins".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "histogram sample",
        });
    }
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = values.len() as f64;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(k, &c)| Bin {
            left: lo + k as f64 * width,
            right: if k + 1 == bins {
                hi
            } else {
                lo + (k + 1) as f64 * width
            },
            density: c as f64 / (n * width),
        })
        .collect())
}

pub fn write_histogram<W: Write>(out: W, bins: &[Bin]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_left", "bin_right", "density"])?;
    for b in bins {
        w.write_record([
            b.left.to_string(),
            b.right.to_string(),
            b.density.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_csharp: f64,
    pub mean_cflat: f64,
    /// Mean over states with finite relative gain; `None` if there are none.
    pub mean_relative_gain: Option<f64>,
    pub var_csharp: f64,
    pub var_cflat: f64,
    pub hist_csharp: Vec<Bin>,
    pub hist_cflat: Vec<Bin>,
    pub hist_relative_gain: Vec<Bin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McStats {
    pub n_states: usize,
    pub seed: u64,
    pub sampler: Sampler,
    #[serde(flatten)]
    pub single_pair: Moments,
    /// States whose relative gain is infinite (excluded from its mean).
    pub infinite_gains: usize,
    /// States with `cflat > csharp + 1e-9`.
    pub violations: usize,
    pub six_pair: Option<Moments>,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

fn moments(cs: &[f64], cf: &[f64], bins: usize) -> Result<Moments> {
    let gains: Vec<f64> = cs
        .iter()
        .zip(cf)
        .map(|(&a, &b)| relative_gain(a, b))
        .filter(|g| g.is_finite())
        .collect();
    let (mean_csharp, var_csharp) = mean_var(cs);
    let (mean_cflat, var_cflat) = mean_var(cf);
    let (mean_relative_gain, hist_relative_gain) = if gains.is_empty() {
        (None, Vec::new())
    } else {
        (Some(mean_var(&gains).0), emit_histogram(&gains, bins)?)
    };
    Ok(Moments {
        mean_csharp,
        mean_cflat,
        mean_relative_gain,
        var_csharp,
        var_cflat,
        hist_csharp: emit_histogram(cs, bins)?,
        hist_cflat: emit_histogram(cf, bins)?,
        hist_relative_gain,
    })
}

pub fn stats_from_records(cfg: &McConfig, records: &[Record]) -> Result<McStats> {
    let cs: Vec<f64> = records.iter().map(|r| r.csharp).collect();
    let cf: Vec<f64> = records.iter().map(|r| r.cflat).collect();
    let six_pair = if cfg.six_pair {
        let pairs: Vec<(f64, f64)> = records.iter().filter_map(|r| r.six_pair).collect();
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        Some(moments(&a, &b, cfg.hist_bins)?)
    } else {
        None
    };
    Ok(McStats {
        n_states: records.len(),
        seed: cfg.seed,
        sampler: cfg.sampler,
        single_pair: moments(&cs, &cf, cfg.hist_bins)?,
        infinite_gains: records
            .iter()
            .filter(|r| r.relative_gain.is_infinite())
            .count(),
        violations: records.iter().filter(|r| r.cflat > r.csharp + 1e-9).count(),
        six_pair,
    })
}

#[derive(Debug, Clone)]
pub struct McRun {
    pub stats: McStats,
    pub records: Vec<Record>,
}

/// Evaluates `cfg.n_states` states, streaming CSV records to `sink` in index order.
///
/// An I/O failure reports how many records were written before it.
pub fn run_batch(cfg: &McConfig, sink: Option<&mut dyn Write>) -> Result<McRun> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut writer = sink.map(csv::Writer::from_writer);
    let io_err = |written: usize, e: csv::Error| Error::Io {
        written,
        source: std::io::Error::other(e),
    };
    if let Some(w) = writer.as_mut() {
        w.write_record(Record::header(cfg.six_pair))
            .map_err(|e| io_err(0, e))?;
    }

    let mut records = Vec::with_capacity(cfg.n_states);
    let n = cfg.n_states as u64;
    let mut start = 0u64;
    while start < n {
        let end = (start + CHUNK as u64).min(n);
        let chunk: Vec<Record> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| Record::evaluate(i, &cfg.sampler.sample(cfg.seed, i), cfg.six_pair))
                .collect()
        });
        if let Some(w) = writer.as_mut() {
            let flushed = records.len();
            for r in &chunk {
                w.write_record(r.fields()).map_err(|e| io_err(flushed, e))?;
            }
            w.flush().map_err(|e| Error::Io {
                written: flushed,
                source: e,
            })?;
        }
        records.extend(chunk);
        start = end;
    }
    Ok(McRun {
        stats: stats_from_records(cfg, &records)?,
        records,
    })
}

/// File names written by [`run_to_dir`].
pub const RECORDS_FILE: &str = "records.csv";
pub const STATS_FILE: &str = "stats.json";

/// Runs a campaign writing per-state records, stats JSON and histogram CSVs to `dir`.
pub fn run_to_dir(cfg: &McConfig, dir: &Path) -> Result<McRun> {
    std::fs::create_dir_all(dir)?;
    let mut records = BufWriter::new(File::create(dir.join(RECORDS_FILE))?);
    let run = run_batch(cfg, Some(&mut records))?;
    records.flush().map_err(|e| Error::Io {
        written: run.records.len(),
        source: e,
    })?;

    let stats = serde_json::to_string_pretty(&run.stats)?;
    std::fs::write(dir.join(STATS_FILE), stats + "\n")?;
    let mut hists = vec![
        ("csharp", &run.stats.single_pair.hist_csharp),
        ("cflat", &run.stats.single_pair.hist_cflat),
        ("relative_gain", &run.stats.single_pair.hist_relative_gain),
    ];
    if let Some(six) = &run.stats.six_pair {
        hists.extend([
            ("six_pair_csharp", &six.hist_csharp),
            ("six_pair_cflat", &six.hist_cflat),
            ("six_pair_relative_gain", &six.hist_relative_gain),
        ]);
    }
    for (name, bins) in hists {
        let file = File::create(dir.join(format!("hist_{name}.csv")))?;
        write_histogram(BufWriter::new(file), bins)?;
    }
    Ok(run)
}
