use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::hmc::ChainSet;
use crate::error::{Error, Result};
use crate::fmt_f64;

/// Potential scale reduction factor of equal-length scalar chains.
///
/// Returns `+∞` when the chains are individually constant but disagree, and
/// 1 when every draw of every chain is the same value.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::Input(format!(
            "the Gelman-Rubin statistic needs at least two chains, got {}",
            chains.len()
        )));
    }
    let n = chains[0].len();
    if n < 2 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::Input(
            "chains must have equal lengths of at least two draws".into(),
        ));
    }
    let m = chains.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = nf / (m - 1.0) * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return Ok(if b > 0.0 { f64::INFINITY } else { 1.0 });
    }
    Ok((((nf - 1.0) / nf * w + b / nf) / w).sqrt())
}

/// R̂ for every parameter of a chain set.
pub fn gelman_rubin_all(chains: &ChainSet) -> Result<Vec<f64>> {
    (0..chains.dim())
        .map(|j| gelman_rubin(&chains.parameter(j)))
        .collect()
}

/// Indices picked by [`select_components`] out of `total` concatenated draws.
pub fn component_indices(total: usize, s: usize) -> Result<Vec<usize>> {
    if s == 0 {
        return Err(Error::Input("at least one component must be selected".into()));
    }
    if total < s {
        return Err(Error::Input(format!(
            "cannot select {s} components from {total} draws"
        )));
    }
    let stride = total / s;
    let offset = (total - 1 - stride * (s - 1)) / 2;
    Ok((0..s).map(|k| offset + k * stride).collect())
}

/// `s` draws at a uniform stride across the concatenated chains, centred so
/// the unused tail is split evenly between both ends.
pub fn select_components(chains: &ChainSet, s: usize) -> Result<Vec<Vec<f64>>> {
    let all: Vec<&Vec<f64>> = chains.concatenated().collect();
    Ok(component_indices(all.len(), s)?
        .into_iter()
        .map(|i| all[i].clone())
        .collect())
}

/// Summary of one marginal posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSummary {
    pub mean: f64,
    /// Centre of the fullest bin of a 256-bin histogram over the sample range.
    pub map: f64,
    pub lower_95: f64,
    pub upper_95: f64,
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn histogram_mode(values: &[f64], bins: usize) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return lo;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let best = counts
        .iter()
        .enumerate()
        .fold((0, 0), |acc, (i, &c)| if c > acc.1 { (i, c) } else { acc })
        .0;
    lo + (best as f64 + 0.5) * width
}

pub fn marginal_summary(values: &[f64]) -> Result<MarginalSummary> {
    if values.is_empty() {
        return Err(Error::Input("no draws to summarise".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(MarginalSummary {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        map: histogram_mode(values, 256),
        lower_95: quantile(&sorted, 0.025),
        upper_95: quantile(&sorted, 0.975),
    })
}

/// Writes `chain,iteration,<names…>,accept_prob` rows.
pub fn write_chains_csv(path: &Path, chains: &ChainSet, names: &[&str]) -> Result<()> {
    if names.len() != chains.dim() && chains.total_draws() > 0 {
        return Err(Error::Input(format!(
            "{} column names for {} parameters",
            names.len(),
            chains.dim()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut header = vec!["chain", "iteration"];
    header.extend_from_slice(names);
    header.push("accept_prob");
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for (c, (draws, probs)) in chains.draws.iter().zip(&chains.accept_probs).enumerate() {
        for (i, (d, p)) in draws.iter().zip(probs).enumerate() {
            let mut row = vec![c.to_string(), i.to_string()];
            row.extend(d.iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(*p));
            writeln!(out, "{}", row.join(",")).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// Reads a file written by [`write_chains_csv`]. Acceptance counts, step
/// sizes and seeds are not part of the file and come back empty.
pub fn read_chains_csv(path: &Path) -> Result<(Vec<String>, ChainSet)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .clone();
    let ncol = headers.len();
    if ncol < 3
        || &headers[0] != "chain"
        || &headers[1] != "iteration"
        || &headers[ncol - 1] != "accept_prob"
    {
        return Err(Error::parse(path, "unexpected chain file header"));
    }
    let names: Vec<String> = headers.iter().skip(2).take(ncol - 3).map(String::from).collect();
    let mut set = ChainSet {
        draws: Vec::new(),
        accept_probs: Vec::new(),
        accepted: Vec::new(),
        step_sizes: Vec::new(),
        seeds: Vec::new(),
    };
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let bad = |what: &str| Error::parse(path, format!("row {}: bad {what}", line + 2));
        let chain: usize = record[0].parse().map_err(|_| bad("chain index"))?;
        let iter: usize = record[1].parse().map_err(|_| bad("iteration"))?;
        let values = (2..ncol)
            .map(|k| record[k].parse::<f64>().map_err(|_| bad("number")))
            .collect::<Result<Vec<f64>>>()?;
        if chain == set.draws.len() {
            set.draws.push(Vec::new());
            set.accept_probs.push(Vec::new());
        }
        if chain + 1 != set.draws.len() || iter != set.draws[chain].len() {
            return Err(bad("ordering"));
        }
        set.draws[chain].push(values[..ncol - 3].to_vec());
        set.accept_probs[chain].push(values[ncol - 3]);
    }
    Ok((names, set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_chain(rng: &mut ChaCha8Rng, n: usize, shift: f64, scale: f64) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                shift + scale * z
            })
            .collect()
    }

    #[test]
    fn identical_chains() {
        let c = vec![0.3, 1.0, -0.4, 2.2, 0.0];
        let r = gelman_rubin(&[c.clone(), c.clone(), c]).unwrap();
        assert!((r - (4.0f64 / 5.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn iid_chains_converge() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let chains: Vec<Vec<f64>> = (0..4).map(|_| normal_chain(&mut rng, 2000, 0.0, 1.0)).collect();
        assert!(gelman_rubin(&chains).unwrap() < 1.1);
    }

    #[test]
    fn separated_chains_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = normal_chain(&mut rng, 500, -10.0, 0.1);
        let b = normal_chain(&mut rng, 500, 10.0, 0.1);
        assert!(gelman_rubin(&[a, b]).unwrap() > 5.0);
    }

    #[test]
    fn degenerate_chains() {
        assert_eq!(gelman_rubin(&[vec![1.0; 4], vec![2.0; 4]]).unwrap(), f64::INFINITY);
        assert_eq!(gelman_rubin(&[vec![1.0; 4], vec![1.0; 4]]).unwrap(), 1.0);
        assert!(matches!(gelman_rubin(&[vec![1.0, 2.0]]), Err(Error::Input(_))));
    }

    #[test]
    fn selection_indices() {
        assert_eq!(component_indices(7, 7).unwrap(), (0..7).collect::<Vec<_>>());
        assert_eq!(component_indices(8000, 1).unwrap(), vec![3999]);
        let idx = component_indices(8000, 15).unwrap();
        let stride = idx[1] - idx[0];
        assert!(idx.windows(2).all(|w| w[1] - w[0] == stride));
        let chains: std::collections::BTreeSet<usize> = idx.iter().map(|i| i / 2000).collect();
        assert_eq!(chains.len(), 4);
        assert!(component_indices(3, 4).is_err());
    }

    #[test]
    fn summary_of_known_sample() {
        let v: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let s = marginal_summary(&v).unwrap();
        assert!((s.mean - 0.5).abs() < 1e-12);
        assert!((s.lower_95 - 0.025).abs() < 1e-12);
        assert!((s.upper_95 - 0.975).abs() < 1e-12);
        let peaked = [vec![0.0, 10.0], vec![3.0; 20]].concat();
        assert!((marginal_summary(&peaked).unwrap().map - 3.0).abs() < 10.0 / 256.0);
    }

    #[test]
    fn chains_csv_round_trip() {
        let set = ChainSet {
            draws: vec![
                vec![vec![0.1, 1.0 / 3.0], vec![2.5e-9, 7.0]],
                vec![vec![-1.0, 1e300], vec![0.0, std::f64::consts::PI]],
            ],
            accept_probs: vec![vec![0.5, 1.0], vec![0.123456789, 0.0]],
            accepted: vec![],
            step_sizes: vec![],
            seeds: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chains.csv");
        write_chains_csv(&path, &set, &["a", "b"]).unwrap();
        let (names, back) = read_chains_csv(&path).unwrap();
        assert_eq!(names, vec!["a", "b"]);
        assert_eq!(back, set);
    }
}
