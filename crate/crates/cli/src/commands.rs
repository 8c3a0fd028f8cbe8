use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bits_core::design::{
    entropy_field, posterior_at, read_history, run_design, write_history,
    write_iteration_artifacts, DesignConfig, DesignHistory, WilsonOracle,
};
use bits_core::distillation::{
    operating_lines, operating_lines_csv, stage_table_csv, step_stages, EquilibriumCurve,
    StageProfile,
};
use bits_core::gp::GpState;
use bits_core::inference::{
    gelman_rubin_all, marginal_summary, read_chains_csv, select_components, write_chains_csv,
    ChainSet,
};
use bits_core::vle::{
    bubble_point, dew_point, read_phase_csv, write_phase_csv, BinarySystem, GammaProvider,
    GibbsDuhemClosure, Ideal, PhaseRow, Wilson,
};
use bits_core::{fmt_f64, Error, Result};
use serde_json::json;

use crate::config::{self, Loaded};
use crate::lock::DirLock;

const HISTORY_FILES: [&str; 3] = ["manifest.json", "design.csv", "metrics.csv"];

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Removes the files a previous run left in `dir`.
fn clear_history(dir: &Path) -> Result<()> {
    let Ok(entries) = fs::read_dir(dir) else {
        return Ok(());
    };
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let ours = HISTORY_FILES.contains(&name.as_str())
            || ((name.starts_with("entropy_grid_") || name.starts_with("chains_"))
                && name.ends_with(".csv"));
        if ours {
            fs::remove_file(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        }
    }
    Ok(())
}

pub fn run(config_path: &Path, force: bool) -> Result<()> {
    let Loaded { config, system } = config::load(config_path)?;
    let dir = &config.output_dir;
    if dir.join("manifest.json").exists() && !force {
        return Err(Error::Input(format!(
            "{} already holds a history; pass --force to replace it",
            dir.display()
        )));
    }
    let _lock = DirLock::acquire(dir)?;
    clear_history(dir)?;
    let oracle = WilsonOracle(&system);
    let history = run_design(&config.design, &oracle, |h, out| {
        if let Some(out) = out {
            write_iteration_artifacts(dir, h, h.iterations(), out)?;
        }
        write_history(dir, &config.design, h)
    })?;
    println!(
        "{} iterations written to {}",
        history.iterations(),
        dir.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub enum Provider {
    Wilson,
    Ideal,
    Surrogate(usize),
}

impl std::str::FromStr for Provider {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "wilson" => Ok(Provider::Wilson),
            "ideal" => Ok(Provider::Ideal),
            _ => s
                .strip_prefix("surrogate:")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k >= 1)
                .map(Provider::Surrogate)
                .ok_or_else(|| {
                    format!("expected wilson, ideal or surrogate:<iteration>, got '{s}'")
                }),
        }
    }
}

fn txy_csv(grid: &[f64], bubble: &[f64], dew: &[f64]) -> String {
    let mut out = String::from("z,T_bubble (K),T_dew (K)\n");
    for ((z, b), d) in grid.iter().zip(bubble).zip(dew) {
        let _ = writeln!(out, "{},{},{}", fmt_f64(*z), fmt_f64(*b), fmt_f64(*d));
    }
    out
}

/// Bubble and dew curves on `grid`. With `skip_failures`, compositions where
/// either solver fails are left out (with a warning) instead of aborting.
fn write_curves(
    dir: &Path,
    name: &str,
    grid: &[f64],
    provider: &dyn GammaProvider,
    sys: &BinarySystem,
    skip_failures: bool,
) -> Result<usize> {
    let p = sys.pressure_pa;
    let mut rows = Vec::with_capacity(grid.len());
    let mut txy = (Vec::new(), Vec::new(), Vec::new());
    let mut skipped = 0;
    for &z in grid {
        let solved = bubble_point(z, p, provider, sys)
            .and_then(|(t, y)| Ok((t, y, dew_point(z, p, provider, sys)?.0)));
        match solved {
            Ok((t, y, t_dew)) => {
                rows.push(PhaseRow { x: z, t, y });
                txy.0.push(z);
                txy.1.push(t);
                txy.2.push(t_dew);
            }
            Err(e) if skip_failures => {
                log::warn!("{name}: no phase equilibrium at z = {z}: {e}");
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if rows.len() < 2 {
        return Err(Error::Numerical(format!(
            "{name}: phase equilibrium solved at fewer than 2 compositions"
        )));
    }
    write_phase_csv(&dir.join(format!("xy_{name}.csv")), &rows)?;
    write(&dir.join(format!("txy_{name}.csv")), &txy_csv(&txy.0, &txy.1, &txy.2))?;
    Ok(skipped)
}

fn chains_at(history_dir: &Path, k: usize) -> Result<ChainSet> {
    Ok(read_chains_csv(&history_dir.join(format!("chains_{k}.csv")))?.1)
}

fn check_iteration(history: &DesignHistory, k: usize) -> Result<()> {
    if k == 0 || k > history.iterations() {
        return Err(Error::Input(format!(
            "iteration {k} is not in the history (1..={})",
            history.iterations()
        )));
    }
    Ok(())
}

pub fn phase(
    config_path: &Path,
    provider: Provider,
    samples: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let Loaded { config, system } = config::load(config_path)?;
    let out = out.unwrap_or_else(|| config.output_dir.join("phase"));
    ensure_dir(&out)?;
    let n = config.phase.points;
    let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    match provider {
        Provider::Wilson => {
            write_curves(&out, "wilson", &grid, &Wilson(&system), &system, false)?;
        }
        Provider::Ideal => {
            write_curves(&out, "ideal", &grid, &Ideal, &system, false)?;
        }
        Provider::Surrogate(k) => {
            let (dcfg, history) = read_history(&config.output_dir)?;
            check_iteration(&history, k)?;
            let chains = chains_at(&config.output_dir, k)?;
            let samples = samples.unwrap_or(config.phase.samples);
            let draws = select_components(&chains, samples)?;
            let train = history.training_set_at(k)?;
            let template = dcfg.kernel_template()?;
            let space = &history.space;
            let realization = |j: usize, theta: &[f64]| -> Result<usize> {
                let gp = GpState::condition(
                    train.clone(),
                    template.with_hyperparameters(theta)?,
                    dcfg.noise_var,
                    dcfg.mean_const,
                )?;
                // The surrogate is only trained inside the design box; outside
                // it, ln γ₁ is held at its value on the nearest boundary.
                let provider = GibbsDuhemClosure::new(|z: f64, t: f64| {
                    let x = space.to_model(&space.clamp(&[z, t]));
                    gp.predict_mean(&x).unwrap_or(f64::NAN)
                });
                let name = format!("surrogate_{k}_{}", j + 1);
                write_curves(&out, &name, &grid, &provider, &system, true)
            };
            let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
            let chunk = draws.len().div_ceil(workers);
            let skipped = std::thread::scope(|scope| {
                let handles: Vec<_> = draws
                    .chunks(chunk)
                    .enumerate()
                    .map(|(c, part)| {
                        let realization = &realization;
                        scope.spawn(move || {
                            part.iter()
                                .enumerate()
                                .map(|(i, theta)| realization(c * chunk + i, theta))
                                .sum::<Result<usize>>()
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("phase worker panicked"))
                    .sum::<Result<usize>>()
            })?;
            if skipped > 0 {
                log::warn!(
                    "{skipped} of {} surrogate compositions had no bubble or dew point",
                    grid.len() * draws.len()
                );
            }
        }
    }
    println!("phase curves written to {}", out.display());
    Ok(())
}

pub fn column(config_path: &Path, curves: &[String], out: Option<PathBuf>) -> Result<()> {
    let Loaded { config, .. } = config::load(config_path)?;
    let out = out.unwrap_or_else(|| config.output_dir.join("column"));
    let spec = &config.column;
    spec.validate()?;
    let lines = operating_lines(spec)?;
    let mut profiles: Vec<(String, PathBuf, StageProfile)> = Vec::new();
    for arg in curves {
        let (name, path) = match arg.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => ("curve".to_string(), PathBuf::from(arg)),
        };
        let curve = EquilibriumCurve::from_rows(&read_phase_csv(&path)?)?;
        let profile = step_stages(spec, &curve)?;
        profiles.push((name, path, profile));
    }
    ensure_dir(&out)?;
    let report = json!({
        "spec": spec,
        "operating_lines": lines,
        "curves": profiles.iter().map(|(name, path, p)| json!({
            "name": name,
            "source": path.display().to_string(),
            "stage_count": p.len(),
            "feed_stage": spec.feed_stage,
            "reached_bottoms": p.reached_bottoms,
            "bottoms_composition": p.bottoms_composition,
            "flows": p.flows,
            "stages": p.stages,
        })).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Numerical(format!("cannot serialise column report: {e}")))?;
    write(&out.join("column_report.json"), &(text + "\n"))?;
    let named: Vec<(&str, &StageProfile)> =
        profiles.iter().map(|(n, _, p)| (n.as_str(), p)).collect();
    write(&out.join("stages.csv"), &stage_table_csv(&named))?;
    write(&out.join("operating_lines.csv"), &operating_lines_csv(spec, &lines))?;
    for (name, _, p) in &profiles {
        println!("{name}: {} stages, bottoms x = {:.4}", p.len(), p.bottoms_composition);
    }
    Ok(())
}

fn last_iteration(history: &DesignHistory, iter: Option<usize>) -> Result<usize> {
    let k = iter.unwrap_or(history.iterations());
    check_iteration(history, k)?;
    Ok(k)
}

pub fn diagnose(history_dir: &Path, iter: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let (_, history) = read_history(history_dir)?;
    let k = last_iteration(&history, iter)?;
    let chains = chains_at(history_dir, k)?;
    if chains.num_chains() < 2 {
        return Err(Error::Input(format!(
            "iteration {k} has {} chain(s); the Gelman-Rubin statistic needs at least 2",
            chains.num_chains()
        )));
    }
    let rhat = gelman_rubin_all(&chains)?;
    let out = out.unwrap_or_else(|| history_dir.join("analysis"));
    ensure_dir(&out)?;
    let names: Vec<&str> = history.parameter_names.iter().map(String::as_str).collect();
    write_chains_csv(&out.join(format!("trace_{k}.csv")), &chains, &names)?;

    let mut summary = String::from("parameter,mean,map,lower_95,upper_95,rhat\n");
    for (j, name) in names.iter().enumerate() {
        let values: Vec<f64> = chains.concatenated().map(|d| d[j]).collect();
        let s = marginal_summary(&values)?;
        let _ = writeln!(
            summary,
            "{name},{},{},{},{},{}",
            fmt_f64(s.mean),
            fmt_f64(s.map),
            fmt_f64(s.lower_95),
            fmt_f64(s.upper_95),
            fmt_f64(rhat[j])
        );
        println!("{name}: MAP {:.4}, 95% CI [{:.4}, {:.4}], R-hat {:.4}", s.map, s.lower_95, s.upper_95, rhat[j]);
    }
    write(&out.join(format!("summary_{k}.csv")), &summary)?;

    let mut joint = names.join(",");
    joint.push('\n');
    for d in chains.concatenated() {
        let row: Vec<String> = d.iter().map(|&v| fmt_f64(v)).collect();
        joint.push_str(&row.join(","));
        joint.push('\n');
    }
    write(&out.join(format!("joint_{k}.csv")), &joint)
}

pub fn entropy_map(
    history_dir: &Path,
    iter: usize,
    grid: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    if grid < 2 {
        return Err(Error::Input("the entropy map needs at least 2 points per axis".into()));
    }
    let (dcfg, history): (DesignConfig, DesignHistory) = read_history(history_dir)?;
    check_iteration(&history, iter)?;
    let chains = chains_at(history_dir, iter)?;
    let mix = posterior_at(&dcfg, &history, &chains, iter, dcfg.mixture_size)?;
    let points = history.space.grid(grid);
    let model: Vec<Vec<f64>> = points.iter().map(|x| history.space.to_model(x)).collect();
    let h = entropy_field(&mix, &model, dcfg.acquisition.estimator)?;
    let out = out.unwrap_or_else(|| history_dir.join("analysis"));
    ensure_dir(&out)?;
    let mut text = history.space.names().join(",");
    text.push_str(",H\n");
    for (x, v) in points.iter().zip(&h) {
        for c in x {
            text.push_str(&fmt_f64(*c));
            text.push(',');
        }
        text.push_str(&fmt_f64(*v));
        text.push('\n');
    }
    let path = out.join(format!("entropy_map_{iter}_{grid}.csv"));
    write(&path, &text)?;
    println!("entropy map written to {}", path.display());
    Ok(())
}
