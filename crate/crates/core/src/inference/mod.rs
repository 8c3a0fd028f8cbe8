//! Hierarchical inference over kernel hyperparameters.

pub mod diagnostics;
pub mod hmc;
pub mod posterior;
pub mod prior;

pub use diagnostics::{
    gelman_rubin, gelman_rubin_all, marginal_summary, read_chains_csv, select_components,
    write_chains_csv, MarginalSummary,
};
pub use hmc::{hmc_run, ChainSet, HmcConfig};
pub use posterior::{GaussianTarget, GpHyperPosterior, LogDensity};
pub use prior::{PriorDistribution, PriorEntry, PriorSpec, Transform};
