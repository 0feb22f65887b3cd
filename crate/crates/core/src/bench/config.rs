//! Experiment and grid files.
//!
//! Both are flat TOML tables. Keys are case-insensitive and `-` is read as
//! `_`, so `batch-size` and `batch_size` are the same key. Grid files take
//! arrays, e.g. `lr = [0.01, 0.1]` or `mu = ["none", 0.9]`.

use std::path::PathBuf;

use crate::data::{
    CorrelationKind, CorrelationSpec, SyntheticSpec, DEFAULT_DENSE_RHO, DEFAULT_FEATURES,
    DEFAULT_SAMPLES, DEFAULT_TRIDIAGONAL_RHO,
};
use crate::optim::OptimizerKind;
use crate::{Error, Result};

use super::{DatasetSource, ExperimentConfig, GridSpace};

fn scalar(key: &str, value: &toml::Value) -> Result<String> {
    match value {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        _ => Err(Error::Config(format!("{key} must be a string, number or boolean"))),
    }
}

/// Parses a flat TOML table into normalized `(key, value)` pairs. Array
/// values are joined with commas.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        line: e.span().map_or(0, |span| text[..span.start].lines().count().max(1)),
        message: e.message().to_string(),
    })?;
    table
        .iter()
        .map(|(key, value)| {
            let key = key.to_ascii_lowercase().replace('-', "_");
            let value = match value {
                toml::Value::Array(items) => items
                    .iter()
                    .map(|v| scalar(&key, v))
                    .collect::<Result<Vec<_>>>()?
                    .join(","),
                v => scalar(&key, v)?,
            };
            Ok((key, value))
        })
        .collect()
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse(key, value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{key} must be finite, got {value}")))
    }
}

fn parse_mu(value: &str) -> Result<Option<f64>> {
    if value.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse_f64("mu", value).map(Some)
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value '{value}' for {key}"))),
    }
}

impl ExperimentConfig {
    /// Applies one setting.
    ///
    /// `dataset` takes a file path or `synth:<isotropic|tridiagonal|dense>[:rho]`.
    /// `features`, `samples` and `rho` only apply to synthetic datasets.
    /// `seed` also reseeds the synthetic generator and the weight initialization.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.to_ascii_lowercase().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "dataset" => self.dataset = self.parse_dataset(value)?,
            "features" | "samples" | "rho" => {
                let DatasetSource::Synthetic(spec) = &mut self.dataset else {
                    return Err(Error::Config(format!("{key} only applies to synthetic datasets")));
                };
                match key.as_str() {
                    "features" => spec.corr.n_features = parse(&key, value)?,
                    "samples" => spec.n_samples = parse(&key, value)?,
                    _ => {
                        let rho = parse_f64(&key, value)?;
                        spec.corr.kind = match spec.corr.kind {
                            CorrelationKind::Isotropic => {
                                return Err(Error::Config("rho has no effect on isotropic data".into()))
                            }
                            CorrelationKind::Tridiagonal { .. } => CorrelationKind::Tridiagonal { rho },
                            CorrelationKind::Dense { .. } => CorrelationKind::Dense { rho },
                        };
                    }
                }
            }
            "optimizer" => {
                self.optimizer.kind = value.parse::<OptimizerKind>()?
            }
            "lr" | "learning_rate" => self.optimizer.learning_rate = parse_f64(&key, value)?,
            "eps" => self.optimizer.eps = parse_f64(&key, value)?,
            "rank" => self.optimizer.rank = parse(&key, value)?,
            "mu" => self.optimizer.mu = parse_mu(value)?,
            "init_std" => self.optimizer.init_std = parse_f64(&key, value)?,
            "batch_size" => self.batch_size = parse(&key, value)?,
            "epochs" => self.epochs = parse(&key, value)?,
            "seed" => {
                let seed = parse(&key, value)?;
                self.seed = seed;
                self.optimizer.seed = seed;
                if let DatasetSource::Synthetic(spec) = &mut self.dataset {
                    spec.seed = seed;
                }
            }
            "test_fraction" => self.test_fraction = parse_f64(&key, value)?,
            "bias" => self.bias = parse_bool(&key, value)?,
            "out" | "output" => self.output = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown setting '{key}'"))),
        }
        Ok(())
    }

    /// Applies settings with `dataset` first, so `features = …` may appear anywhere.
    pub fn apply<K: AsRef<str>, V: AsRef<str>>(&mut self, pairs: &[(K, V)]) -> Result<()> {
        let is_dataset = |k: &str| k.eq_ignore_ascii_case("dataset");
        for (k, v) in pairs.iter().filter(|(k, _)| is_dataset(k.as_ref())) {
            self.set(k.as_ref(), v.as_ref())?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| !is_dataset(k.as_ref())) {
            self.set(k.as_ref(), v.as_ref())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(&parse_key_values(text)?)?;
        Ok(cfg)
    }

    fn parse_dataset(&self, value: &str) -> Result<DatasetSource> {
        let Some(rest) = value.strip_prefix("synth:") else {
            if value.is_empty() {
                return Err(Error::Config("empty dataset".into()));
            }
            return Ok(DatasetSource::File(PathBuf::from(value)));
        };
        let (n_features, n_samples) = match &self.dataset {
            DatasetSource::Synthetic(spec) => (spec.corr.n_features, spec.n_samples),
            DatasetSource::File(_) => (DEFAULT_FEATURES, DEFAULT_SAMPLES),
        };
        let mut parts = rest.split(':');
        let name = parts.next().unwrap_or("");
        let rho = parts.next().map(|r| parse_f64("rho", r)).transpose()?;
        if parts.next().is_some() {
            return Err(Error::Config(format!("invalid dataset '{value}'")));
        }
        let kind = match (name, rho) {
            ("isotropic", None) => CorrelationKind::Isotropic,
            ("tridiagonal", rho) => CorrelationKind::Tridiagonal {
                rho: rho.unwrap_or(DEFAULT_TRIDIAGONAL_RHO),
            },
            ("dense", rho) => CorrelationKind::Dense {
                rho: rho.unwrap_or(DEFAULT_DENSE_RHO),
            },
            _ => return Err(Error::Config(format!("invalid dataset '{value}'"))),
        };
        Ok(DatasetSource::Synthetic(SyntheticSpec::new(
            CorrelationSpec::new(kind, n_features),
            n_samples,
            self.seed,
        )))
    }
}

fn list<T>(key: &str, value: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(&f)
        .collect::<Result<Vec<T>>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(Error::Config(format!("empty list for {key}")))
            } else {
                Ok(v)
            }
        })
}

impl GridSpace {
    /// Parses a grid file: `optimizer`, `batch_size`, `lr`, `eps`, `rank` and
    /// `mu` with comma-separated values.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut space = GridSpace::default();
        for (key, value) in parse_key_values(text)? {
            match key.as_str() {
                "optimizer" | "optimizers" => {
                    space.optimizers = list(&key, &value, str::parse)?
                }
                "batch_size" => space.batch_sizes = list(&key, &value, |s| parse(&key, s))?,
                "lr" | "learning_rate" => {
                    space.learning_rates = list(&key, &value, |s| parse_f64(&key, s))?
                }
                "eps" => space.eps = list(&key, &value, |s| parse_f64(&key, s))?,
                "rank" => space.ranks = list(&key, &value, |s| parse(&key, s))?,
                "mu" => space.mus = list(&key, &value, parse_mu)?,
                _ => return Err(Error::Config(format!("unknown grid key '{key}'"))),
            }
        }
        Ok(space)
    }
}
