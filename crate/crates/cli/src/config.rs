use std::fs;
use std::path::PathBuf;

use clap::Args;
use harmonic_tension::embedding::VectorSource;
use harmonic_tension::experiments::ExperimentConfig;

/// Run configuration: an optional TOML file with the layout of
/// [`ExperimentConfig`], then flag overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML config file; top-level experiment keys plus [train] and [tension].
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for fold assignment and sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Sampling cap per chord condition.
    #[arg(long)]
    pub per_condition: Option<usize>,
    /// Size of the non-cadential baseline.
    #[arg(long)]
    pub baseline: Option<usize>,
    /// Family-wise alpha before Bonferroni correction.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Folds trained concurrently; 1 is the deterministic reference mode.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Train one model on every piece. Leaks held-out data; smoke tests only.
    #[arg(long)]
    pub single_model: bool,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_name = "RATE")]
    pub lr: Option<f64>,
    /// Embedding initialisation and sampling seed.
    #[arg(long)]
    pub train_seed: Option<u64>,
    /// Frequent-unit subsampling threshold; 0 disables.
    #[arg(long)]
    pub subsample: Option<f64>,
    /// Hogwild threads per training run.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Tension memory length.
    #[arg(long)]
    pub n: Option<usize>,
    /// Divide the tension sum by n even when fewer predecessors exist.
    #[arg(long)]
    pub literal: bool,
    /// Matrix supplying the vectors for tension.
    #[arg(long, value_enum)]
    pub vectors: Option<Vectors>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Vectors {
    Input,
    Output,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| format!("--config {}: {e}", path.display()))?;
                toml::from_str(&text).map_err(|e| format!("--config {}: {e}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { cfg.$($field).+ = v; })*
            };
        }
        set!(
            seed => seed,
            folds => folds,
            per_condition => per_condition,
            baseline => baseline,
            alpha => alpha,
            workers => workers,
            dim => train.dim,
            window => train.window,
            min_count => train.min_count,
            negatives => train.negatives,
            epochs => train.epochs,
            lr => train.initial_lr,
            train_seed => train.seed,
            subsample => train.subsample,
            threads => train.threads,
            n => tension.n,
        );
        if self.single_model {
            cfg.single_model = true;
        }
        if self.literal {
            cfg.tension.normalize_partial = false;
        }
        if let Some(v) = self.vectors {
            cfg.tension.source = match v {
                Vectors::Input => VectorSource::Input,
                Vectors::Output => VectorSource::Output,
            };
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}
