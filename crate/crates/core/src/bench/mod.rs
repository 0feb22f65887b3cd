//! Experiment harness: train a GLM with one optimizer configuration, record
//! per-epoch metric traces, sweep hyperparameter grids and run the invariant
//! suite.

mod config;
mod grid;
mod invariants;
mod record;

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::data::{
    generate_synthetic, load_libsvm, split_standardize, CorrelationKind, CorrelationSpec, Dataset,
    SyntheticSpec, DEFAULT_FEATURES, DEFAULT_SAMPLES,
};
use crate::glm::{accuracy_with, gradient, loss_with, Batch, GlmModel};
use crate::optim::{Optimizer, OptimizerConfig, OptimizerKind};
use crate::par::Execution;
use crate::{Error, Result};

pub use config::parse_key_values;
pub use grid::{grid_search, select_best, summary_tsv, write_grid_outputs, GridOutcome, GridSpace};
pub use invariants::{run_invariant_suite, CheckResult, InvariantReport, SuiteOptions};
pub use record::{EpochRow, RunMeta, RunRecord, CSV_HEADER};

/// Stream of the per-epoch shuffle generator.
const SHUFFLE_STREAM: u64 = 7;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    File(PathBuf),
}

impl fmt::Display for DatasetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSource::Synthetic(spec) => match spec.corr.kind {
                CorrelationKind::Isotropic => f.write_str("synth:isotropic"),
                CorrelationKind::Tridiagonal { rho } => write!(f, "synth:tridiagonal:{rho:?}"),
                CorrelationKind::Dense { rho } => write!(f, "synth:dense:{rho:?}"),
            },
            DatasetSource::File(path) => write!(f, "{}", path.display()),
        }
    }
}

/// One training run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Drives the train/test split and the per-epoch shuffles.
    pub seed: u64,
    pub test_fraction: f64,
    /// Append a constant-one feature after standardization.
    pub bias: bool,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let corr = CorrelationSpec::new(CorrelationKind::Isotropic, DEFAULT_FEATURES);
        Self {
            dataset: DatasetSource::Synthetic(SyntheticSpec::new(corr, DEFAULT_SAMPLES, 0)),
            optimizer: OptimizerConfig::new(OptimizerKind::AdaGramPS),
            batch_size: 32,
            epochs: 10,
            seed: 0,
            test_fraction: 0.2,
            bias: true,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        match &self.dataset {
            DatasetSource::File(path) if !path.is_file() => {
                Err(Error::Config(format!("dataset file {} does not exist", path.display())))
            }
            DatasetSource::Synthetic(spec) if spec.n_samples == 0 || spec.corr.n_features == 0 => {
                Err(Error::Config("synthetic dataset needs samples and features".into()))
            }
            _ => Ok(()),
        }
    }

    /// Every setting that influences the metric columns, one `key=value` per line.
    pub fn canonical(&self) -> String {
        let o = &self.optimizer;
        let mut s = format!("dataset={}\n", self.dataset);
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            s += &format!(
                "features={}\nsamples={}\ndata_seed={}\n",
                spec.corr.n_features, spec.n_samples, spec.seed
            );
            if let Some(theta) = &spec.theta_star {
                s += &format!("theta_star={theta:?}\n");
            }
        }
        s += &format!(
            "optimizer={}\nlr={:?}\neps={:?}\ninit_std={:?}\ninit_seed={}\n",
            o.kind, o.learning_rate, o.eps, o.init_std, o.seed
        );
        if o.kind.uses_low_rank() {
            s += &format!("rank={}\nmu={}\n", o.rank, fmt_mu(o.mu));
        }
        s += &format!(
            "batch_size={}\nepochs={}\nseed={}\ntest_fraction={:?}\nbias={}\n",
            self.batch_size, self.epochs, self.seed, self.test_fraction, self.bias
        );
        s
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn config_hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub(crate) fn fmt_mu(mu: Option<f64>) -> String {
    mu.map_or_else(|| "none".to_string(), |m| format!("{m:?}"))
}

/// Standardized train/test split of the configured dataset.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let ds = match &cfg.dataset {
        DatasetSource::Synthetic(spec) => generate_synthetic(spec)?,
        DatasetSource::File(path) => load_libsvm(path)?,
    };
    let (train, test) = split_standardize(&ds, cfg.test_fraction, cfg.seed)?;
    if cfg.bias {
        Ok(PreparedData {
            train: train.with_bias_column(),
            test: test.with_bias_column(),
        })
    } else {
        Ok(PreparedData { train, test })
    }
}

/// Loads the data and trains; see [`run_prepared`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    run_prepared(cfg, &data, Execution::default())
}

/// Trains on already prepared data.
///
/// Row 0 holds the metrics at initialization. Each epoch shuffles the training
/// set with the run seed and takes one optimizer step per mini-batch, keeping
/// the final partial batch. Only gradient evaluation and the optimizer step
/// are timed. A non-finite gradient or loss stops the run and marks the
/// record as diverged; rows up to the last finite epoch are kept.
pub fn run_prepared(cfg: &ExperimentConfig, data: &PreparedData, exec: Execution) -> Result<RunRecord> {
    cfg.validate()?;
    let (train, test) = (&data.train, &data.test);
    if train.n_features() != test.n_features() {
        return Err(Error::dims("test features", train.n_features(), test.n_features()));
    }
    let n_features = train.n_features();
    let n_classes = train.n_classes().max(test.n_classes());

    let mut model = GlmModel::for_classes(n_classes, n_features);
    let (m, n) = model.theta.shape();
    let mut opt = Optimizer::new(cfg.optimizer.clone(), m, n)?;
    let mut params = opt.init_params(m, n);
    model.theta.copy_from(params.weights());

    let mut record = RunRecord::new(RunMeta::from_config(cfg, m * n));
    let train_batch = train.batch()?;
    let test_batch = test.batch()?;
    let metrics = |model: &GlmModel, epoch: usize, wall: f64| -> Result<Option<EpochRow>> {
        let row = EpochRow {
            epoch,
            wall_clock_s: wall,
            train_loss: loss_with(model, &train_batch, exec)?,
            test_loss: loss_with(model, &test_batch, exec)?,
            test_acc: accuracy_with(model, &test_batch, exec)?,
        };
        Ok((row.train_loss.is_finite() && row.test_loss.is_finite()).then_some(row))
    };

    match metrics(&model, 0, 0.0)? {
        Some(row) => record.rows.push(row),
        None => {
            record.meta.diverged = true;
            return Ok(record);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut xb = Vec::with_capacity(cfg.batch_size * n_features);
    let mut yb = Vec::with_capacity(cfg.batch_size);
    let mut wall = 0.0;

    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            xb.clear();
            yb.clear();
            for &i in chunk {
                xb.extend_from_slice(train.row(i));
                yb.push(train.labels()[i]);
            }
            let batch = Batch::new(&xb, &yb, n_features)?;

            let start = Instant::now();
            let grad: DMatrix<f64> = gradient(&model, &batch)?;
            match opt.step(&mut params, &grad) {
                Ok(()) => {}
                Err(Error::NonFiniteGradient { .. }) => {
                    record.meta.diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            model.theta.copy_from(params.weights());
            wall += start.elapsed().as_secs_f64();
        }
        match metrics(&model, epoch, wall)? {
            Some(row) => record.rows.push(row),
            None => {
                record.meta.diverged = true;
                break;
            }
        }
    }
    Ok(record)
}
