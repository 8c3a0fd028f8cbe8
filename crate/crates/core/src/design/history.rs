//! On-disk layout of a design history directory:
//!
//! - `manifest.json`: configuration, parameter names and per-iteration seeds
//! - `design.csv`: every observed point (`iteration` 0 for the initial design)
//! - `metrics.csv`: long-format `iteration,statistic,value` rows
//! - `entropy_grid_<k>.csv` and `chains_<k>.csv`: per-iteration artifacts

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DesignConfig, DesignHistory, IterationOutput, IterationRecord, IterationSeeds};
use super::{Observation, Split};
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::inference::{write_chains_csv, MarginalSummary};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    iterations: usize,
    parameter_names: Vec<String>,
    seeds: Vec<IterationSeeds>,
    config: DesignConfig,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the manifest, design table and metrics of `history` into `dir`.
pub fn write_history(dir: &Path, config: &DesignConfig, history: &DesignHistory) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        iterations: history.iterations(),
        parameter_names: history.parameter_names.clone(),
        seeds: history.records.iter().map(|r| r.seeds).collect(),
        config: DesignConfig {
            space: history.space.clone(),
            ..config.clone()
        },
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Numerical(format!("cannot serialise manifest: {e}")))?;
    write_file(&dir.join("manifest.json"), &(json + "\n"))?;

    let mut design = String::from("iteration,");
    for n in history.space.names() {
        design.push_str(n);
        design.push(',');
    }
    design.push_str("log_gamma,split\n");
    let mut row = |it: usize, x: &[f64], y: f64, split: Split| {
        let _ = write!(design, "{it},");
        for v in x {
            let _ = write!(design, "{},", fmt_f64(*v));
        }
        let _ = writeln!(design, "{},{}", fmt_f64(y), split.as_str());
    };
    for o in &history.initial {
        row(0, &o.x, o.y, o.split);
    }
    for r in &history.records {
        row(r.iteration, &r.x_star, r.observation, Split::Train);
    }
    write_file(&dir.join("design.csv"), &design)?;

    let mut metrics = String::from("iteration,statistic,value\n");
    for r in &history.records {
        let mut put = |name: &str, v: f64| {
            let _ = writeln!(metrics, "{},{name},{}", r.iteration, fmt_f64(v));
        };
        put("max_entropy", r.max_entropy);
        put("min_information", r.min_information);
        for (name, values) in [
            ("rmse_train", &r.rmse_train),
            ("mae_train", &r.mae_train),
            ("rmse_test", &r.rmse_test),
            ("mae_test", &r.mae_test),
        ] {
            values.iter().for_each(|&v| put(name, v));
        }
        for (j, p) in history.parameter_names.iter().enumerate() {
            put(&format!("rhat_{p}"), r.rhat[j]);
            let s = &r.posterior[j];
            put(&format!("mean_{p}"), s.mean);
            put(&format!("map_{p}"), s.map);
            put(&format!("lower_95_{p}"), s.lower_95);
            put(&format!("upper_95_{p}"), s.upper_95);
        }
    }
    write_file(&dir.join("metrics.csv"), &metrics)
}

/// Writes `entropy_grid_<k>.csv` and `chains_<k>.csv`.
pub fn write_iteration_artifacts(
    dir: &Path,
    history: &DesignHistory,
    iteration: usize,
    output: &IterationOutput,
) -> Result<()> {
    let mut grid = history.space.names().join(",");
    grid.push_str(",H\n");
    for (x, h) in output.grid.iter().zip(&output.grid_entropy) {
        for v in x {
            grid.push_str(&fmt_f64(*v));
            grid.push(',');
        }
        grid.push_str(&fmt_f64(*h));
        grid.push('\n');
    }
    write_file(&dir.join(format!("entropy_grid_{iteration}.csv")), &grid)?;
    let names: Vec<&str> = history.parameter_names.iter().map(String::as_str).collect();
    write_chains_csv(&dir.join(format!("chains_{iteration}.csv")), &output.chains, &names)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    })
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::parse(path, format!("row {line}: '{s}' is not a number")))
}

/// Reads a directory written by [`write_history`].
pub fn read_history(dir: &Path) -> Result<(DesignConfig, DesignHistory)> {
    let mpath = dir.join("manifest.json");
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(&mpath, e.to_string()))?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Error::parse(
            &mpath,
            format!(
                "unsupported format version {} (expected {MANIFEST_VERSION})",
                manifest.format_version
            ),
        ));
    }
    let space = manifest.config.space.clone();
    let dim = space.dim();
    let names = manifest.parameter_names.clone();

    let dpath = dir.join("design.csv");
    let mut reader = csv_reader(&dpath)?;
    let mut initial = Vec::new();
    let mut acquired: BTreeMap<usize, (Vec<f64>, f64)> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(&dpath, e.to_string()))?;
        if rec.len() != dim + 3 {
            return Err(Error::parse(&dpath, format!("row {line}: expected {} fields", dim + 3)));
        }
        let it: usize = rec[0]
            .parse()
            .map_err(|_| Error::parse(&dpath, format!("row {line}: bad iteration")))?;
        let x = (1..=dim)
            .map(|k| parse_f64(&dpath, line, &rec[k]))
            .collect::<Result<Vec<_>>>()?;
        let y = parse_f64(&dpath, line, &rec[dim + 1])?;
        let split = match &rec[dim + 2] {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(Error::parse(&dpath, format!("row {line}: bad split '{other}'"))),
        };
        if it == 0 {
            initial.push(Observation { x, y, split });
        } else {
            acquired.insert(it, (x, y));
        }
    }

    let mpath = dir.join("metrics.csv");
    let mut reader = csv_reader(&mpath)?;
    let mut stats: BTreeMap<usize, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(&mpath, e.to_string()))?;
        if rec.len() != 3 {
            return Err(Error::parse(&mpath, format!("row {}: expected 3 fields", i + 2)));
        }
        let it: usize = rec[0]
            .parse()
            .map_err(|_| Error::parse(&mpath, format!("row {}: bad iteration", i + 2)))?;
        let v = parse_f64(&mpath, i + 2, &rec[2])?;
        stats
            .entry(it)
            .or_default()
            .entry(rec[1].to_string())
            .or_default()
            .push(v);
    }

    let n_train0 = initial.iter().filter(|o| o.split == Split::Train).count();
    let mut records = Vec::with_capacity(manifest.iterations);
    for k in 1..=manifest.iterations {
        let missing = |what: &str| Error::parse(dir, format!("iteration {k}: missing {what}"));
        let (x_star, observation) = acquired.remove(&k).ok_or_else(|| missing("design row"))?;
        let s = stats.get(&k).ok_or_else(|| missing("metrics"))?;
        let all = |name: &str| s.get(name).cloned().ok_or_else(|| missing(name));
        let one = |name: &str| all(name).map(|v| v[0]);
        let mut rhat = Vec::new();
        let mut posterior = Vec::new();
        for p in &names {
            rhat.push(one(&format!("rhat_{p}"))?);
            posterior.push(MarginalSummary {
                mean: one(&format!("mean_{p}"))?,
                map: one(&format!("map_{p}"))?,
                lower_95: one(&format!("lower_95_{p}"))?,
                upper_95: one(&format!("upper_95_{p}"))?,
            });
        }
        records.push(IterationRecord {
            iteration: k,
            train_size: n_train0 + k - 1,
            x_star,
            observation,
            max_entropy: one("max_entropy")?,
            min_information: one("min_information")?,
            rmse_train: all("rmse_train")?,
            mae_train: all("mae_train")?,
            rmse_test: all("rmse_test")?,
            mae_test: all("mae_test")?,
            rhat,
            posterior,
            seeds: *manifest.seeds.get(k - 1).ok_or_else(|| missing("seeds"))?,
        });
    }
    let history = DesignHistory {
        space,
        parameter_names: names,
        initial,
        records,
    };
    Ok((manifest.config, history))
}
