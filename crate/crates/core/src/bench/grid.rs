//! Cartesian hyperparameter sweeps and best-configuration selection.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use crate::optim::OptimizerKind;
use crate::par::{self, Execution};
use crate::{Error, Result};

use super::{fmt_mu, prepare, run_prepared, ExperimentConfig, RunRecord};

/// Value lists per hyperparameter. An empty list keeps the base
/// configuration's value. `ranks` and `mus` only multiply the low-rank
/// AdaGram variants.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridSpace {
    pub optimizers: Vec<OptimizerKind>,
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub eps: Vec<f64>,
    pub ranks: Vec<usize>,
    pub mus: Vec<Option<f64>>,
}

impl GridSpace {
    /// Learning rates `10⁻³ … 1` per decade, `ε ∈ {1e-8, 1e-4, 1e-2, 1}`,
    /// batch sizes `{16, 32, 64, 128}`, ranks `{1, 2, 5}` and memory weights
    /// `{unweighted, 0.9, 0.99, 1}`.
    pub fn default_grid(optimizers: &[OptimizerKind]) -> Self {
        Self {
            optimizers: optimizers.to_vec(),
            batch_sizes: vec![16, 32, 64, 128],
            learning_rates: vec![1e-3, 1e-2, 1e-1, 1.0],
            eps: vec![1e-8, 1e-4, 1e-2, 1.0],
            ranks: vec![1, 2, 5],
            mus: vec![None, Some(0.9), Some(0.99), Some(1.0)],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.optimizers.is_empty()
            && self.batch_sizes.is_empty()
            && self.learning_rates.is_empty()
            && self.eps.is_empty()
            && self.ranks.is_empty()
            && self.mus.is_empty()
    }

    /// Every configuration in the space, in a fixed order.
    pub fn configs(&self, base: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
        if self.is_empty() {
            return Err(Error::Config("grid space is empty".into()));
        }
        fn or_base<T: Clone>(values: &[T], base: T) -> Vec<T> {
            if values.is_empty() {
                vec![base]
            } else {
                values.to_vec()
            }
        }
        let o = &base.optimizer;
        let mut out = Vec::new();
        for kind in or_base(&self.optimizers, o.kind) {
            let (ranks, mus) = if kind.uses_low_rank() {
                (or_base(&self.ranks, o.rank), or_base(&self.mus, o.mu))
            } else {
                (vec![o.rank], vec![o.mu])
            };
            for &batch_size in &or_base(&self.batch_sizes, base.batch_size) {
                for &lr in &or_base(&self.learning_rates, o.learning_rate) {
                    for &eps in &or_base(&self.eps, o.eps) {
                        for &rank in &ranks {
                            for &mu in &mus {
                                let mut cfg = base.clone();
                                cfg.batch_size = batch_size;
                                cfg.optimizer.kind = kind;
                                cfg.optimizer.learning_rate = lr;
                                cfg.optimizer.eps = eps;
                                cfg.optimizer.rank = rank;
                                cfg.optimizer.mu = mu;
                                cfg.output = None;
                                out.push(cfg);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// All runs of a sweep and the index of the selected one.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub configs: Vec<ExperimentConfig>,
    pub records: Vec<RunRecord>,
    pub best: usize,
}

impl GridOutcome {
    pub fn best_config(&self) -> &ExperimentConfig {
        &self.configs[self.best]
    }

    pub fn best_record(&self) -> &RunRecord {
        &self.records[self.best]
    }
}

fn selection_order(a: &RunRecord, b: &RunRecord) -> Ordering {
    a.final_train_loss()
        .total_cmp(&b.final_train_loss())
        .then(a.meta.rank.unwrap_or(0).cmp(&b.meta.rank.unwrap_or(0)))
        .then(a.meta.learning_rate.total_cmp(&b.meta.learning_rate))
        .then(a.meta.config_hash.cmp(&b.meta.config_hash))
}

/// Index of the record with the lowest final train loss; ties go to the
/// smaller rank, then the smaller learning rate, then the smaller config hash.
pub fn select_best(records: &[RunRecord]) -> Option<usize> {
    (0..records.len()).min_by(|&i, &j| selection_order(&records[i], &records[j]))
}

/// Runs every configuration of `space` over `base`. The data is prepared once;
/// each worker trains on its own copy.
pub fn grid_search(space: &GridSpace, base: &ExperimentConfig, exec: Execution) -> Result<GridOutcome> {
    let configs = space.configs(base)?;
    for cfg in &configs {
        cfg.validate()?;
    }
    let data = prepare(base)?;
    let records = par::map(exec, &configs, |cfg| {
        let data = data.clone();
        run_prepared(cfg, &data, Execution::Sequential)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let best = select_best(&records).expect("a non-empty grid has runs");
    Ok(GridOutcome {
        configs,
        records,
        best,
    })
}

fn csv_name(index: usize, record: &RunRecord) -> String {
    format!("run-{index:04}-{}.csv", &record.meta.config_hash[..12])
}

/// One line per run: configuration, final metrics, time to the best train
/// loss and whether the run was selected.
pub fn summary_tsv(outcome: &GridOutcome) -> String {
    let mut s = String::from(
        "config_hash\tcsv\toptimizer\tbatch_size\tlr\teps\trank\tmu\tfinal_train_loss\tfinal_test_loss\tfinal_test_acc\ttime_to_best_s\tdiverged\tselected\n",
    );
    for (i, rec) in outcome.records.iter().enumerate() {
        let m = &rec.meta;
        let last = rec.final_row();
        let cell = |f: fn(&super::EpochRow) -> f64| last.map_or_else(|| "nan".into(), |r| f(r).to_string());
        s += &format!(
            "{}\t{}\t{}\t{}\t{:?}\t{:?}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            m.config_hash,
            csv_name(i, rec),
            m.optimizer,
            m.batch_size,
            m.learning_rate,
            m.eps,
            m.rank.map_or_else(|| "none".into(), |r| r.to_string()),
            fmt_mu(m.mu),
            cell(|r| r.train_loss),
            cell(|r| r.test_loss),
            cell(|r| r.test_acc),
            rec.time_to_best().map_or_else(|| "nan".into(), |t| t.to_string()),
            m.diverged,
            u8::from(i == outcome.best),
        );
    }
    s
}

/// Writes one CSV per run and `summary.tsv` into `dir`.
pub fn write_grid_outputs(dir: &Path, outcome: &GridOutcome) -> Result<()> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for (i, rec) in outcome.records.iter().enumerate() {
        rec.save(&dir.join(csv_name(i, rec)))?;
    }
    let summary = dir.join("summary.tsv");
    fs::write(&summary, summary_tsv(outcome)).map_err(io(&summary))
}
