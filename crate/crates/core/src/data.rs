//! Datasets: synthetic correlated Gaussians with logistic labels, LIBSVM text
//! files, seeded train/test splitting with train-fitted standardization.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::glm::{sigmoid, Batch};
use crate::{Error, Result};

pub const DEFAULT_TRIDIAGONAL_RHO: f64 = 0.45;
pub const DEFAULT_DENSE_RHO: f64 = 0.95;
pub const DEFAULT_SAMPLES: usize = 2000;
pub const DEFAULT_FEATURES: usize = 20;
/// Norm of the generated ground-truth weights.
pub const THETA_STAR_NORM: f64 = 3.0;

/// Smallest eigenvalue a generated correlation matrix may have.
const MIN_EIGENVALUE: f64 = 1e-8;
/// Features whose standard deviation falls below this are only centered.
const CONSTANT_FEATURE_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationKind {
    Isotropic,
    /// Unit diagonal, `rho` on the first off-diagonals.
    Tridiagonal { rho: f64 },
    /// Toeplitz `Σ_ij = rho^|i−j|`.
    Dense { rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSpec {
    pub kind: CorrelationKind,
    pub n_features: usize,
}

impl fmt::Display for CorrelationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            CorrelationKind::Isotropic => write!(f, "isotropic(n={})", self.n_features),
            CorrelationKind::Tridiagonal { rho } => {
                write!(f, "tridiagonal(rho={rho}, n={})", self.n_features)
            }
            CorrelationKind::Dense { rho } => write!(f, "dense(rho={rho}, n={})", self.n_features),
        }
    }
}

impl CorrelationSpec {
    pub fn new(kind: CorrelationKind, n_features: usize) -> Self {
        Self { kind, n_features }
    }

    /// The target correlation matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.n_features;
        DMatrix::from_fn(n, n, |i, j| {
            let d = i.abs_diff(j);
            match self.kind {
                _ if d == 0 => 1.0,
                CorrelationKind::Isotropic => 0.0,
                CorrelationKind::Tridiagonal { rho } => {
                    if d == 1 {
                        rho
                    } else {
                        0.0
                    }
                }
                CorrelationKind::Dense { rho } => rho.powi(d as i32),
            }
        })
    }

    /// Lower-triangular `C` with `Σ = C Cᵀ`, after checking `Σ` is positive definite.
    pub fn factor(&self) -> Result<DMatrix<f64>> {
        if self.n_features == 0 {
            return Err(Error::InvalidArgument("correlation spec needs features".into()));
        }
        let sigma = self.matrix();
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{self} has non-finite entries")));
        }
        let min_eigenvalue = SymmetricEigen::new(sigma.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eigenvalue.is_nan() || min_eigenvalue <= MIN_EIGENVALUE {
            return Err(Error::NotPositiveDefinite {
                spec: self.to_string(),
                min_eigenvalue,
            });
        }
        let chol = sigma.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
            spec: self.to_string(),
            min_eigenvalue,
        })?;
        Ok(chol.l())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub corr: CorrelationSpec,
    pub n_samples: usize,
    /// Ground-truth weights; drawn from the seed when `None`.
    pub theta_star: Option<Vec<f64>>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(corr: CorrelationSpec, n_samples: usize, seed: u64) -> Self {
        Self {
            corr,
            n_samples,
            theta_star: None,
            seed,
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Ground-truth weights: the given ones, or seeded Gaussian scaled to
    /// [`THETA_STAR_NORM`].
    pub fn theta_star(&self) -> Vec<f64> {
        if let Some(theta) = &self.theta_star {
            return theta.clone();
        }
        let mut rng = self.rng(0);
        let raw: Vec<f64> = (0..self.corr.n_features)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        raw.into_iter().map(|v| v * THETA_STAR_NORM / norm).collect()
    }

    pub fn name(&self) -> String {
        format!("synthetic-{}", self.corr)
    }
}

/// Draws `X = Z Cᵀ` with `Z` standard normal and labels `y ~ Bernoulli(σ(θ*ᵀx))`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let n = spec.corr.n_features;
    if spec.n_samples == 0 {
        return Err(Error::InvalidArgument("synthetic spec needs samples".into()));
    }
    let c = spec.corr.factor()?;
    let theta = spec.theta_star();
    if theta.len() != n {
        return Err(Error::dims("theta_star", n, theta.len()));
    }

    let mut z_rng = spec.rng(1);
    let mut y_rng = spec.rng(2);
    let mut x = Vec::with_capacity(spec.n_samples * n);
    let mut y = Vec::with_capacity(spec.n_samples);
    let mut z = vec![0.0; n];
    for _ in 0..spec.n_samples {
        z.iter_mut().for_each(|v| *v = z_rng.sample(StandardNormal));
        let start = x.len();
        // x = C z, C lower triangular
        x.extend((0..n).map(|i| (0..=i).map(|k| c[(i, k)] * z[k]).sum::<f64>()));
        let logit: f64 = x[start..].iter().zip(&theta).map(|(a, b)| a * b).sum();
        let u: f64 = y_rng.random();
        y.push(usize::from(u < sigmoid(logit)));
    }
    Dataset::new(spec.name(), x, y, n, 2)
}

/// Dense features (row-major), class labels `0..n_classes` and the
/// standardization that has been applied to the features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    x: Vec<f64>,
    y: Vec<usize>,
    n_features: usize,
    n_classes: usize,
    feature_means: Vec<f64>,
    feature_stds: Vec<f64>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        x: Vec<f64>,
        y: Vec<usize>,
        n_features: usize,
        n_classes: usize,
    ) -> Result<Self> {
        if x.len() != y.len() * n_features {
            return Err(Error::dims("dataset feature values", y.len() * n_features, x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset contains NaN or Inf".into()));
        }
        if let Some(bad) = y.iter().find(|&&c| c >= n_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Self {
            name: name.into(),
            x,
            y,
            n_features,
            n_classes,
            feature_means: vec![0.0; n_features],
            feature_stds: vec![1.0; n_features],
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn feature_means(&self) -> &[f64] {
        &self.feature_means
    }

    pub fn feature_stds(&self) -> &[f64] {
        &self.feature_stds
    }

    /// The whole dataset as one batch.
    pub fn batch(&self) -> Result<Batch<'_>> {
        Batch::new(&self.x, &self.y, self.n_features)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            name: self.name.clone(),
            x,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            n_features: self.n_features,
            n_classes: self.n_classes,
            feature_means: self.feature_means.clone(),
            feature_stds: self.feature_stds.clone(),
        }
    }

    /// Appends a constant-one feature.
    pub fn with_bias_column(&self) -> Dataset {
        let n = self.n_features;
        let mut x = Vec::with_capacity(self.len() * (n + 1));
        for i in 0..self.len() {
            x.extend_from_slice(self.row(i));
            x.push(1.0);
        }
        let mut means = self.feature_means.clone();
        means.push(0.0);
        let mut stds = self.feature_stds.clone();
        stds.push(1.0);
        Dataset {
            x,
            n_features: n + 1,
            feature_means: means,
            feature_stds: stds,
            ..self.clone()
        }
    }

    /// Per-feature mean and (population) standard deviation. Constant features
    /// report a standard deviation of one so they are only centered.
    pub fn fit_standardization(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_features;
        let count = self.len() as f64;
        let mut means = vec![0.0; n];
        for i in 0..self.len() {
            means.iter_mut().zip(self.row(i)).for_each(|(m, v)| *m += v);
        }
        means.iter_mut().for_each(|m| *m /= count);
        let mut vars = vec![0.0; n];
        for i in 0..self.len() {
            vars.iter_mut()
                .zip(self.row(i).iter().zip(&means))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m));
        }
        let stds = vars
            .into_iter()
            .map(|s| (s / count).sqrt())
            .map(|s| if s > CONSTANT_FEATURE_STD { s } else { 1.0 })
            .collect();
        (means, stds)
    }

    /// `x ← (x − mean) / std`, recording the transform.
    pub fn standardize_with(&self, means: &[f64], stds: &[f64]) -> Dataset {
        let n = self.n_features;
        let x = self
            .x
            .iter()
            .enumerate()
            .map(|(k, v)| (v - means[k % n]) / stds[k % n])
            .collect();
        Dataset {
            x,
            feature_means: means.to_vec(),
            feature_stds: stds.to_vec(),
            ..self.clone()
        }
    }
}

/// Parses LIBSVM text (`label idx:val idx:val …`, 1-based increasing indices).
///
/// Distinct labels are sorted and mapped to `0..K`, so `{−1, +1}` and `{1, 2}`
/// both become `{0, 1}`. A file with a single label value is treated as binary
/// (`≤ 0` maps to class 0, anything else to class 1). The largest index seen
/// defines the feature count.
pub fn parse_libsvm<R: BufRead>(reader: R, name: &str) -> Result<Dataset> {
    let mut raw_labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut n_features = 0;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| err(format!("invalid label '{label_tok}'")))?;

        let mut entries = Vec::new();
        let mut last = 0;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("malformed token '{tok}'")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("invalid index in '{tok}'")))?;
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| err(format!("invalid value in '{tok}'")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            if idx <= last {
                return Err(err(format!("index {idx} does not increase (previous {last})")));
            }
            last = idx;
            entries.push((idx - 1, val));
        }
        n_features = n_features.max(last);
        raw_labels.push(label);
        rows.push(entries);
    }

    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no samples".into(),
        });
    }

    let mut distinct = raw_labels.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let (y, n_classes): (Vec<usize>, usize) = if distinct.len() == 1 {
        let class = usize::from(distinct[0] > 0.0);
        (vec![class; raw_labels.len()], 2)
    } else {
        let y = raw_labels
            .iter()
            .map(|l| distinct.partition_point(|d| d < l))
            .collect();
        (y, distinct.len())
    };

    let mut x = vec![0.0; rows.len() * n_features];
    for (i, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            x[i * n_features + j] = v;
        }
    }
    Dataset::new(name, x, y, n_features, n_classes)
}

/// Writes class indices as labels and non-zero features. The first row always
/// carries the last feature index so the feature count survives a re-parse.
pub fn write_libsvm<W: Write>(ds: &Dataset, mut out: W) -> std::io::Result<()> {
    let n = ds.n_features();
    for i in 0..ds.len() {
        write!(out, "{}", ds.labels()[i])?;
        for (j, &v) in ds.row(i).iter().enumerate() {
            if v != 0.0 || (i == 0 && j + 1 == n) {
                write!(out, " {}:{}", j + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn load_libsvm(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_libsvm(BufReader::new(file), &name)
}

pub fn save_libsvm(ds: &Dataset, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    write_libsvm(ds, &mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

/// Seeded shuffle, split off `floor(N · test_fraction)` test rows, fit
/// standardization on the training rows and apply it to both parts.
pub fn split_standardize(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n_test = (ds.len() as f64 * test_fraction).floor() as usize;
    if n_test == 0 || n_test == ds.len() {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} leaves an empty split of {} rows",
            ds.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test_idx, train_idx) = order.split_at(n_test);
    let train = ds.select(train_idx);
    let test = ds.select(test_idx);
    let (means, stds) = train.fit_standardization();
    Ok((train.standardize_with(&means, &stds), test.standardize_with(&means, &stds)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn empirical_correlation(ds: &Dataset) -> DMatrix<f64> {
        let n = ds.n_features();
        let (means, stds) = ds.fit_standardization();
        let mut c = DMatrix::<f64>::zeros(n, n);
        for i in 0..ds.len() {
            let z: Vec<f64> = ds.row(i).iter().enumerate().map(|(j, v)| (v - means[j]) / stds[j]).collect();
            for a in 0..n {
                for b in 0..n {
                    c[(a, b)] += z[a] * z[b];
                }
            }
        }
        c / ds.len() as f64
    }

    #[test]
    fn dense_toeplitz_entry() {
        let spec = CorrelationSpec::new(CorrelationKind::Dense { rho: 0.95 }, 5);
        assert!((spec.matrix()[(0, 4)] - 0.95f64.powi(4)).abs() < 1e-15);
        assert!((spec.matrix()[(0, 4)] - 0.8145).abs() < 1e-4);
    }

    #[test]
    fn empirical_correlations_match_targets() {
        for kind in [
            CorrelationKind::Isotropic,
            CorrelationKind::Tridiagonal { rho: 0.45 },
            CorrelationKind::Dense { rho: 0.95 },
        ] {
            let corr = CorrelationSpec::new(kind, 5);
            let ds = generate_synthetic(&SyntheticSpec::new(corr, 10_000, 9)).unwrap();
            let diff = empirical_correlation(&ds) - corr.matrix();
            assert!(diff.amax() <= 0.05, "{corr}: {}", diff.amax());
        }
    }

    #[test]
    fn tridiagonal_loses_definiteness() {
        let spec = CorrelationSpec::new(CorrelationKind::Tridiagonal { rho: 0.6 }, 50);
        let err = generate_synthetic(&SyntheticSpec::new(spec, 10, 0)).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
        assert!(err.to_string().contains("tridiagonal(rho=0.6, n=50)"));
        let ok = CorrelationSpec::new(CorrelationKind::Tridiagonal { rho: 0.45 }, 500);
        assert!(ok.factor().is_ok());
    }

    #[test]
    fn synthetic_is_seed_deterministic() {
        let corr = CorrelationSpec::new(CorrelationKind::Dense { rho: 0.9 }, 4);
        let a = generate_synthetic(&SyntheticSpec::new(corr, 50, 3)).unwrap();
        let b = generate_synthetic(&SyntheticSpec::new(corr, 50, 3)).unwrap();
        let c = generate_synthetic(&SyntheticSpec::new(corr, 50, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let theta = SyntheticSpec::new(corr, 50, 3).theta_star();
        assert!((theta.iter().map(|v| v * v).sum::<f64>().sqrt() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn parse_examples() {
        let ds = parse_libsvm("+1 1:0.5 3:-1.2\n-1 2:1\n".as_bytes(), "t").unwrap();
        assert_eq!(ds.n_features(), 3);
        assert_eq!(ds.row(0), &[0.5, 0.0, -1.2]);
        assert_eq!(ds.row(1), &[0.0, 1.0, 0.0]);
        assert_eq!(ds.labels(), &[1, 0]);
        assert_eq!(ds.n_classes(), 2);

        let ds = parse_libsvm("1 1:1\n2 1:2\n2 1:3\n".as_bytes(), "t").unwrap();
        assert_eq!(ds.labels(), &[0, 1, 1]);
        let ds = parse_libsvm("3 1:1\n1 1:2\n2 1:3\n".as_bytes(), "t").unwrap();
        assert_eq!((ds.labels(), ds.n_classes()), (&[2, 0, 1][..], 3));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("1 1:1\n1 2:x\n", 2),
            ("1 1:1\n\n1 3:1 2:1\n", 3),
            ("1 0:1\n", 1),
            ("1 1:1 1:2\n", 1),
            ("abc 1:1\n", 1),
            ("1 1-1\n", 1),
        ];
        for (text, line) in cases {
            match parse_libsvm(text.as_bytes(), "t") {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert!(matches!(parse_libsvm("".as_bytes(), "t"), Err(Error::Parse { .. })));
        assert!(matches!(parse_libsvm("\n# c\n".as_bytes(), "t"), Err(Error::Parse { .. })));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let x: Vec<f64> = (0..690 * 2).map(|i| ((i * 37) % 101) as f64).collect();
        let y: Vec<usize> = (0..690).map(|i| i % 2).collect();
        let ds = Dataset::new("d", x, y, 2, 2).unwrap();
        let (train, test) = split_standardize(&ds, 0.2, 1).unwrap();
        assert_eq!((train.len(), test.len()), (552, 138));
        let again = split_standardize(&ds, 0.2, 1).unwrap();
        assert_eq!((train.clone(), test.clone()), again);
        let (means, stds) = train.fit_standardization();
        assert!(means.iter().all(|m| m.abs() <= 1e-10));
        assert!(stds.iter().all(|s| (s - 1.0).abs() <= 1e-10));
        assert!(split_standardize(&ds, 0.0, 1).is_err());
        assert!(split_standardize(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn constant_feature_is_centered_only() {
        let ds = Dataset::new("c", vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0], vec![0, 1, 0], 2, 2).unwrap();
        let (m, s) = ds.fit_standardization();
        let st = ds.standardize_with(&m, &s);
        assert_eq!(st.row(0)[0], 0.0);
        assert_eq!(s[0], 1.0);
    }

    proptest! {
        #[test]
        fn libsvm_roundtrip(
            rows in prop::collection::vec(
                (0usize..3, prop::collection::vec(prop_oneof![Just(0.0), -1e3f64..1e3], 4)),
                1..20,
            )
        ) {
            let x: Vec<f64> = rows.iter().flat_map(|(_, r)| r.clone()).collect();
            let y: Vec<usize> = rows.iter().map(|(c, _)| *c).collect();
            let mut classes: Vec<usize> = y.clone();
            classes.sort();
            classes.dedup();
            prop_assume!(classes.len() >= 2 && classes == (0..classes.len()).collect::<Vec<_>>());
            let ds = Dataset::new("r", x, y, 4, classes.len()).unwrap();
            let mut buf = Vec::new();
            write_libsvm(&ds, &mut buf).unwrap();
            let back = parse_libsvm(buf.as_slice(), "r").unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
