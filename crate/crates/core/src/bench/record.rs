//! Per-run metric traces and their CSV form.
//!
//! A record file starts with `# key: value` metadata lines, then the header
//! `epoch,wall_clock_s,train_loss,test_loss,test_acc` and one row per epoch.
//! Floats use Rust's shortest round-trip formatting, so reading a file back
//! gives the exact values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use crate::optim::OptimizerKind;
use crate::{Error, Result};

use super::{fmt_mu, ExperimentConfig};

pub const CSV_HEADER: &str = "epoch,wall_clock_s,train_loss,test_loss,test_acc";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    /// Cumulative optimizer time, excluding metric evaluation.
    pub wall_clock_s: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub config_hash: String,
    pub git_describe: String,
    pub platform: String,
    pub dataset: String,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub eps: f64,
    /// Effective rank budget, for the low-rank variants only.
    pub rank: Option<usize>,
    /// Memory weight, for the low-rank variants only.
    pub mu: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub diverged: bool,
}

fn git_describe() -> String {
    static DESCRIBE: OnceLock<String> = OnceLock::new();
    DESCRIBE
        .get_or_init(|| {
            std::process::Command::new("git")
                .args(["describe", "--always", "--dirty"])
                .output()
                .ok()
                .filter(|o| o.status.success())
                .and_then(|o| String::from_utf8(o.stdout).ok())
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| "unknown".into())
        })
        .clone()
}

impl RunMeta {
    /// Metadata for `cfg` on a weight vector of `dim` entries.
    pub fn from_config(cfg: &ExperimentConfig, dim: usize) -> Self {
        let o = &cfg.optimizer;
        let low_rank = o.kind.uses_low_rank();
        Self {
            config_hash: cfg.config_hash(),
            git_describe: git_describe(),
            platform: format!("{}-{}", std::env::consts::OS, std::env::consts::ARCH),
            dataset: cfg.dataset.to_string(),
            optimizer: o.kind,
            learning_rate: o.learning_rate,
            eps: o.eps,
            rank: low_rank.then(|| o.rank.min(dim)),
            mu: if low_rank { o.mu } else { None },
            batch_size: cfg.batch_size,
            epochs: cfg.epochs,
            seed: cfg.seed,
            diverged: false,
        }
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("config_hash", self.config_hash.clone()),
            ("git_describe", self.git_describe.clone()),
            ("platform", self.platform.clone()),
            ("dataset", self.dataset.clone()),
            ("optimizer", self.optimizer.to_string()),
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("eps", format!("{:?}", self.eps)),
            ("rank", self.rank.map_or_else(|| "none".into(), |r| r.to_string())),
            ("mu", fmt_mu(self.mu)),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("diverged", self.diverged.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub rows: Vec<EpochRow>,
}

impl RunRecord {
    pub fn new(meta: RunMeta) -> Self {
        Self {
            meta,
            rows: Vec::new(),
        }
    }

    pub fn final_row(&self) -> Option<&EpochRow> {
        self.rows.last()
    }

    /// Selection objective: last train loss, `+∞` for a diverged or empty run.
    pub fn final_train_loss(&self) -> f64 {
        match self.final_row() {
            Some(row) if !self.meta.diverged && row.train_loss.is_finite() => row.train_loss,
            _ => f64::INFINITY,
        }
    }

    /// Wall-clock time of the first epoch reaching the lowest train loss.
    pub fn time_to_best(&self) -> Option<f64> {
        let best = self
            .rows
            .iter()
            .map(|r| r.train_loss)
            .fold(f64::INFINITY, f64::min);
        self.rows
            .iter()
            .find(|r| r.train_loss == best)
            .map(|r| r.wall_clock_s)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (key, value) in self.meta.fields() {
            writeln!(out, "# {key}: {value}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER.split(','))?;
        for r in &self.rows {
            w.write_record([
                r.epoch.to_string(),
                r.wall_clock_s.to_string(),
                r.train_loss.to_string(),
                r.test_loss.to_string(),
                r.test_acc.to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    pub fn read_csv<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        let mut meta = Vec::new();
        let mut body_start = 0;
        for (i, line) in text.lines().enumerate() {
            let Some(comment) = line.strip_prefix('#') else { break };
            let (k, v) = comment.split_once(':').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("malformed metadata '{line}'"),
            })?;
            meta.push((k.trim().to_string(), v.trim().to_string()));
            body_start += line.len() + 1;
        }
        let header_line = meta.len() + 1;
        let body = text.get(body_start..).unwrap_or("");

        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let header = rdr.headers().map_err(|e| Error::Parse {
            line: header_line,
            message: e.to_string(),
        })?;
        if header.iter().ne(CSV_HEADER.split(',')) {
            return Err(Error::Parse {
                line: header_line,
                message: format!("expected header '{CSV_HEADER}'"),
            });
        }
        let rows = rdr
            .deserialize::<(usize, f64, f64, f64, f64)>()
            .enumerate()
            .map(|(i, row)| {
                let (epoch, wall_clock_s, train_loss, test_loss, test_acc) =
                    row.map_err(|e| Error::Parse {
                        line: header_line + i + 1,
                        message: e.to_string(),
                    })?;
                Ok(EpochRow {
                    epoch,
                    wall_clock_s,
                    train_loss,
                    test_loss,
                    test_acc,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            meta: meta_from_pairs(&meta)?,
            rows,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(file)
    }
}

fn meta_from_pairs(pairs: &[(String, String)]) -> Result<RunMeta> {
    let get = |key: &str| -> Result<&str> {
        pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing metadata '{key}'"),
            })
    };
    let bad = |key: &str| Error::Parse {
        line: 0,
        message: format!("invalid metadata '{key}'"),
    };
    let num = |key: &str| -> Result<f64> { get(key)?.parse().map_err(|_| bad(key)) };
    let int = |key: &str| -> Result<u64> { get(key)?.parse().map_err(|_| bad(key)) };
    let optional = |key: &str| -> Result<Option<&str>> {
        let v = get(key)?;
        Ok((v != "none").then_some(v))
    };
    Ok(RunMeta {
        config_hash: get("config_hash")?.to_string(),
        git_describe: get("git_describe")?.to_string(),
        platform: get("platform")?.to_string(),
        dataset: get("dataset")?.to_string(),
        optimizer: get("optimizer")?.parse().map_err(|_| bad("optimizer"))?,
        learning_rate: num("learning_rate")?,
        eps: num("eps")?,
        rank: optional("rank")?
            .map(|v| v.parse().map_err(|_| bad("rank")))
            .transpose()?,
        mu: optional("mu")?
            .map(|v| v.parse().map_err(|_| bad("mu")))
            .transpose()?,
        batch_size: int("batch_size")? as usize,
        epochs: int("epochs")? as usize,
        seed: int("seed")?,
        diverged: get("diverged")?.parse().map_err(|_| bad("diverged"))?,
    })
}
