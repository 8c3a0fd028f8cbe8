//! The sequential design loop: initial design, hyperparameter calibration,
//! entropy-driven acquisition, error tracking and stopping.

mod acquisition;
mod history;
mod space;

pub use acquisition::{
    entropy_field, maximize_entropy, shifted_sobol, Acquisition, AcquisitionConfig,
};
pub use history::{read_history, write_history, write_iteration_artifacts, MANIFEST_VERSION};
pub use space::{lhs_init, split_train_test, Axis, AxisTransform, DesignSpace};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{Dataset, DEFAULT_NOISE_VAR};
use crate::inference::{
    gelman_rubin_all, hmc_run, marginal_summary, select_components, ChainSet, GpHyperPosterior,
    HmcConfig, MarginalSummary, PriorSpec,
};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::mixture::MixturePosterior;
use crate::seeding::derive_seed;
use crate::vle::BinarySystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoppingConfig {
    pub tol_rmse: f64,
    pub tol_mae: f64,
    pub max_iters: usize,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        StoppingConfig {
            tol_rmse: 0.05,
            tol_mae: 0.05,
            max_iters: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    pub space: DesignSpace,
    pub n_initial: usize,
    pub kernel: KernelFamily,
    pub priors: PriorSpec,
    pub noise_var: f64,
    pub mean_const: f64,
    pub hmc: HmcConfig,
    /// Hyperparameter draws kept as mixture components.
    pub mixture_size: usize,
    pub acquisition: AcquisitionConfig,
    /// Posterior realizations used for the error metrics.
    pub realizations: usize,
    pub stopping: StoppingConfig,
    /// Points per axis of the stored entropy map.
    pub entropy_grid: usize,
    pub seed: u64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            space: DesignSpace::default(),
            n_initial: 10,
            kernel: KernelFamily::SquaredExponential,
            priors: PriorSpec::case_study(),
            noise_var: DEFAULT_NOISE_VAR,
            mean_const: 0.0,
            hmc: HmcConfig::default(),
            mixture_size: 15,
            acquisition: AcquisitionConfig::default(),
            realizations: 50,
            stopping: StoppingConfig::default(),
            entropy_grid: 50,
            seed: 0,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        self.priors.validate()?;
        self.hmc.validate()?;
        self.acquisition.validate()?;
        self.kernel_template()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_initial < 2 {
            return bad("n_initial must be at least 2 to form train and test sets");
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return bad("noise_var must be non-negative");
        }
        if self.mixture_size == 0 {
            return bad("mixture_size must be positive");
        }
        if self.mixture_size > self.hmc.num_chains * self.hmc.kept_per_chain() {
            return bad("mixture_size exceeds the number of kept posterior draws");
        }
        if self.realizations == 0 {
            return bad("realizations must be positive");
        }
        if self.entropy_grid == 0 {
            return bad("entropy_grid must be positive");
        }
        if !(self.stopping.tol_rmse > 0.0 && self.stopping.tol_mae > 0.0) {
            return bad("stopping tolerances must be positive");
        }
        Ok(())
    }

    /// ARD kernel with placeholder hyperparameters; draws overwrite them.
    pub fn kernel_template(&self) -> Result<KernelSpec> {
        let k = KernelSpec::new(self.kernel, 1.0, vec![1.0; self.space.dim()])?;
        if k.num_hyperparameters() != self.priors.len() {
            return Err(Error::Config(format!(
                "{} priors for {} kernel hyperparameters",
                self.priors.len(),
                k.num_hyperparameters()
            )));
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One observed design point in raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: f64,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationSeeds {
    pub hmc: u64,
    pub acquisition: u64,
    pub metrics: u64,
}

impl IterationSeeds {
    pub fn derive(base: u64, iteration: usize) -> Self {
        let s = derive_seed(base, 1000 + iteration as u64);
        IterationSeeds {
            hmc: derive_seed(s, 0),
            acquisition: derive_seed(s, 1),
            metrics: derive_seed(s, 2),
        }
    }
}

/// What one pass of the loop learned, measured before the new point is added.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// One-based.
    pub iteration: usize,
    pub train_size: usize,
    /// Acquired point in raw units and its observation.
    pub x_star: Vec<f64>,
    pub observation: f64,
    pub max_entropy: f64,
    /// Smallest information (negative second-order entropy) over the design
    /// space, attained at `x_star`.
    pub min_information: f64,
    pub rmse_train: Vec<f64>,
    pub mae_train: Vec<f64>,
    pub rmse_test: Vec<f64>,
    pub mae_test: Vec<f64>,
    /// Per parameter; NaN when only one chain was run.
    pub rhat: Vec<f64>,
    pub posterior: Vec<MarginalSummary>,
    pub seeds: IterationSeeds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignHistory {
    pub space: DesignSpace,
    pub parameter_names: Vec<String>,
    pub initial: Vec<Observation>,
    pub records: Vec<IterationRecord>,
}

impl DesignHistory {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    fn dataset(&self, points: impl Iterator<Item = (Vec<f64>, f64)>) -> Result<Dataset> {
        let (x, y): (Vec<_>, Vec<_>) = points.map(|(x, y)| (self.space.to_model(&x), y)).unzip();
        Dataset::new(x, y)
    }

    /// Training data in surrogate coordinates, acquired points included.
    pub fn training_set(&self) -> Result<Dataset> {
        self.training_set_at(self.iterations() + 1)
    }

    /// Training data seen by iteration `k` (one-based): the initial training
    /// points plus the points acquired by iterations `1..k`.
    pub fn training_set_at(&self, k: usize) -> Result<Dataset> {
        if k == 0 || k > self.iterations() + 1 {
            return Err(Error::Input(format!(
                "iteration {k} is outside 1..={}",
                self.iterations() + 1
            )));
        }
        self.dataset(
            self.initial
                .iter()
                .filter(|o| o.split == Split::Train)
                .map(|o| (o.x.clone(), o.y))
                .chain(
                    self.records[..k - 1]
                        .iter()
                        .map(|r| (r.x_star.clone(), r.observation)),
                ),
        )
    }

    pub fn test_set(&self) -> Result<Dataset> {
        self.dataset(
            self.initial
                .iter()
                .filter(|o| o.split == Split::Test)
                .map(|o| (o.x.clone(), o.y)),
        )
    }
}

/// Ground-truth response in raw units.
pub trait Oracle {
    fn observe(&self, x: &[f64]) -> Result<f64>;
}

impl<F: Fn(&[f64]) -> Result<f64>> Oracle for F {
    fn observe(&self, x: &[f64]) -> Result<f64> {
        self(x)
    }
}

/// `ln γ₁` of the Wilson model at `(z₁, T)`.
pub struct WilsonOracle<'a>(pub &'a BinarySystem);

impl Oracle for WilsonOracle<'_> {
    fn observe(&self, x: &[f64]) -> Result<f64> {
        let [z, t] = x else {
            return Err(Error::Input(format!(
                "the Wilson oracle takes (z, T), got {} inputs",
                x.len()
            )));
        };
        if !(0.0..=1.0).contains(z) {
            return Err(Error::Domain(format!("mole fraction {z} outside [0, 1]")));
        }
        Ok(self.0.wilson_ln_gamma(*z, *t).0)
    }
}

/// Latin hypercube design, observed and split in half.
pub fn initialize(config: &DesignConfig, oracle: &dyn Oracle) -> Result<DesignHistory> {
    config.validate()?;
    let points = lhs_init(config.n_initial, &config.space, derive_seed(config.seed, 0))?;
    let (train, _) = split_train_test(points.len(), derive_seed(config.seed, 1))?;
    let initial = points
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let y = oracle.observe(&x)?;
            let split = if train.contains(&i) { Split::Train } else { Split::Test };
            Ok(Observation { x, y, split })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DesignHistory {
        space: config.space.clone(),
        parameter_names: config.priors.names().iter().map(|s| s.to_string()).collect(),
        initial,
        records: Vec::new(),
    })
}

/// Per-realization RMSE and MAE of posterior draws against the data.
///
/// Each realization picks one component uniformly and draws independent
/// pointwise values from that component's predictive marginals.
pub fn rmse_mae(
    mix: &MixturePosterior,
    data: &Dataset,
    realizations: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::Input("error metrics need a non-empty dataset".into()));
    }
    let preds = data
        .inputs
        .iter()
        .map(|x| mix.predictions(x))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.len() as f64;
    let mut rmse = Vec::with_capacity(realizations);
    let mut mae = Vec::with_capacity(realizations);
    for _ in 0..realizations {
        let s = rng.random_range(0..mix.len());
        let (mut sq, mut abs) = (0.0, 0.0);
        for ((means, vars), y) in preds.iter().zip(&data.outputs) {
            let u: f64 = StandardNormal.sample(&mut rng);
            let r = means[s] + vars[s].sqrt() * u - y;
            sq += r * r;
            abs += r.abs();
        }
        rmse.push((sq / n).sqrt());
        mae.push(abs / n);
    }
    Ok((rmse, mae))
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// True once the train/test error gap closes or the iteration budget is
/// spent.
pub fn stopping_check(history: &DesignHistory, config: &StoppingConfig) -> bool {
    if history.iterations() >= config.max_iters {
        return true;
    }
    history.records.last().is_some_and(|r| {
        (median(&r.rmse_test) - median(&r.rmse_train)).abs() < config.tol_rmse
            && (median(&r.mae_test) - median(&r.mae_train)).abs() < config.tol_mae
    })
}

/// Everything an iteration produces besides its history record.
#[derive(Debug, Clone)]
pub struct IterationOutput {
    pub chains: ChainSet,
    /// Entropy on the regular grid, raw-unit points.
    pub grid: Vec<Vec<f64>>,
    pub grid_entropy: Vec<f64>,
    pub acquisition: Acquisition,
}

/// One calibrate-evaluate-acquire-augment cycle. The history is only
/// modified when every step succeeds.
pub fn bits_iterate(
    history: &mut DesignHistory,
    oracle: &dyn Oracle,
    config: &DesignConfig,
) -> Result<IterationOutput> {
    let iteration = history.iterations() + 1;
    let seeds = IterationSeeds::derive(config.seed, iteration);
    let train = history.training_set()?;
    let test = history.test_set()?;
    let template = config.kernel_template()?;

    let target = GpHyperPosterior::new(
        train.clone(),
        template.clone(),
        config.noise_var,
        config.mean_const,
        config.priors.clone(),
    )?;
    let hmc = HmcConfig {
        seed: seeds.hmc,
        ..config.hmc.clone()
    };
    let chains = hmc_run(&target, &hmc, None)?;
    let rhat = if chains.num_chains() < 2 {
        log::warn!("iteration {iteration}: R-hat is undefined for a single chain");
        vec![f64::NAN; chains.dim()]
    } else {
        gelman_rubin_all(&chains)?
    };
    let posterior = (0..chains.dim())
        .map(|j| {
            let v: Vec<f64> = chains.concatenated().map(|d| d[j]).collect();
            marginal_summary(&v)
        })
        .collect::<Result<Vec<_>>>()?;

    let draws = select_components(&chains, config.mixture_size)?;
    let mix = MixturePosterior::from_draws(
        &train,
        &template,
        config.noise_var,
        config.mean_const,
        &draws,
    )?;
    let (rmse_train, mae_train) =
        rmse_mae(&mix, &train, config.realizations, derive_seed(seeds.metrics, 0))?;
    let (rmse_test, mae_test) =
        rmse_mae(&mix, &test, config.realizations, derive_seed(seeds.metrics, 1))?;

    let grid = config.space.grid(config.entropy_grid);
    let model_grid: Vec<Vec<f64>> = grid.iter().map(|x| config.space.to_model(x)).collect();
    let grid_entropy = entropy_field(&mix, &model_grid, config.acquisition.estimator)?;
    let acquisition = maximize_entropy(&mix, &config.space, &config.acquisition, seeds.acquisition)?;
    let observation = oracle.observe(&acquisition.x)?;

    history.records.push(IterationRecord {
        iteration,
        train_size: train.len(),
        x_star: acquisition.x.clone(),
        observation,
        max_entropy: acquisition.value,
        min_information: -acquisition.value,
        rmse_train,
        mae_train,
        rmse_test,
        mae_test,
        rhat,
        posterior,
        seeds,
    });
    Ok(IterationOutput {
        chains,
        grid,
        grid_entropy,
        acquisition,
    })
}

/// The `components`-draw mixture of iteration `k`, rebuilt from that
/// iteration's chains and training data.
pub fn posterior_at(
    config: &DesignConfig,
    history: &DesignHistory,
    chains: &ChainSet,
    k: usize,
    components: usize,
) -> Result<MixturePosterior> {
    let train = history.training_set_at(k)?;
    let draws = select_components(chains, components)?;
    MixturePosterior::from_draws(
        &train,
        &config.kernel_template()?,
        config.noise_var,
        config.mean_const,
        &draws,
    )
}

/// Initializes and iterates until [`stopping_check`] fires. `observer` sees
/// the history after initialization (with no output) and after every
/// iteration.
pub fn run_design(
    config: &DesignConfig,
    oracle: &dyn Oracle,
    mut observer: impl FnMut(&DesignHistory, Option<&IterationOutput>) -> Result<()>,
) -> Result<DesignHistory> {
    let mut history = initialize(config, oracle)?;
    observer(&history, None)?;
    while !stopping_check(&history, &config.stopping) {
        let out = bits_iterate(&mut history, oracle, config)?;
        log::info!(
            "iteration {}: max entropy {:.6}",
            history.iterations(),
            out.acquisition.value
        );
        observer(&history, Some(&out))?;
    }
    Ok(history)
}
