//! Rank-`r` factorizations `A = U S Vᵀ` advanced under rank-one increments.
//!
//! Two update rules are provided:
//!
//! * [`projector_splitting_step`] – the first-order projector-splitting
//!   integrator (K-step, backwards S-step, L-step). `S` stays a general `r×r`
//!   core between steps.
//! * [`truncated_svd_update`] / [`rank_one_svd_update`] – an incremental SVD on
//!   an `(r+1)×(r+1)` core followed by truncation back to rank `r`.
//!
//! Increments are always kept in factored form `weight · a bᵀ`; no routine in
//! this module forms an `n×n` array. Per-update cost is `O(n·r² + r³)`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative threshold below which an orthogonalized column is treated as
/// numerically zero and replaced by a completion vector.
const RANK_TOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 60;

/// Tolerance on `‖UᵀU − I‖_max` accepted by [`LowRankFactors::new`].
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// `A = U S Vᵀ` with orthonormal columns in `U` (`m×r`) and `V` (`n×r`).
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactors {
    u: DMatrix<f64>,
    s: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl LowRankFactors {
    /// Factors of the zero `nrows×ncols` matrix: the first `rank` identity
    /// columns on both sides and a zero core.
    pub fn zeros(nrows: usize, ncols: usize, rank: usize) -> Result<Self> {
        if rank == 0 || rank > nrows.min(ncols) {
            return Err(Error::InvalidArgument(format!(
                "rank {rank} must lie in 1..={} for a {nrows}x{ncols} matrix",
                nrows.min(ncols)
            )));
        }
        Ok(Self {
            u: DMatrix::identity(nrows, rank),
            s: DMatrix::zeros(rank, rank),
            v: DMatrix::identity(ncols, rank),
        })
    }

    pub fn new(u: DMatrix<f64>, s: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        let r = s.nrows();
        if s.ncols() != r {
            return Err(Error::dims("core must be square", r, s.ncols()));
        }
        if u.ncols() != r {
            return Err(Error::dims("left factor columns", r, u.ncols()));
        }
        if v.ncols() != r {
            return Err(Error::dims("right factor columns", r, v.ncols()));
        }
        if r == 0 || u.nrows() < r || v.nrows() < r {
            return Err(Error::InvalidArgument(format!(
                "rank {r} does not fit factors with {} and {} rows",
                u.nrows(),
                v.nrows()
            )));
        }
        let factors = Self { u, s, v };
        let err = factors.orthonormality_error();
        if err.is_nan() || err > ORTHONORMALITY_TOL {
            return Err(Error::InvalidArgument(format!(
                "factor columns are not orthonormal (max deviation {err:e})"
            )));
        }
        Ok(factors)
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.s.nrows()
    }

    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v.nrows()
    }

    /// `A x = U (S (Vᵀ x))`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.u * (&self.s * self.v.tr_mul(x))
    }

    /// `Aᵀ x = V (Sᵀ (Uᵀ x))`.
    pub fn apply_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.v * self.s.tr_mul(&self.u.tr_mul(x))
    }

    /// Multiplies the represented matrix by `c` (only the core changes).
    pub fn scale(&mut self, c: f64) {
        self.s *= c;
    }

    /// Largest entry of `UᵀU − I` and `VᵀV − I`.
    pub fn orthonormality_error(&self) -> f64 {
        gram_deviation(&self.u).max(gram_deviation(&self.v))
    }

    /// Dense `U S Vᵀ`. Diagnostics and tests only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.u * &self.s * self.v.transpose()
    }
}

fn gram_deviation(q: &DMatrix<f64>) -> f64 {
    let g = q.tr_mul(q);
    let mut worst = 0.0f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// `ΔA = weight · a bᵀ`, never materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneIncrement {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    pub weight: f64,
}

impl RankOneIncrement {
    pub fn new(a: DVector<f64>, b: DVector<f64>, weight: f64) -> Result<Self> {
        if !weight.is_finite() || a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "rank-one increment has non-finite entries".into(),
            ));
        }
        Ok(Self { a, b, weight })
    }

    fn check(&self, factors: &LowRankFactors) -> Result<()> {
        if self.a.len() != factors.nrows() {
            return Err(Error::dims("increment column vector", factors.nrows(), self.a.len()));
        }
        if self.b.len() != factors.ncols() {
            return Err(Error::dims("increment row vector", factors.ncols(), self.b.len()));
        }
        Ok(())
    }
}

/// Thin factorization `M = Q R` with orthonormal `Q` (`n×r`) and upper
/// triangular `R` (`r×r`) with non-negative diagonal.
///
/// Classical Gram–Schmidt with one reorthogonalization pass. Columns that
/// vanish after projection get `R_jj = 0` and a deterministic completion
/// vector in `Q`, so `Q` always has `r` orthonormal columns.
///
/// # Panics
/// If `M` has more columns than rows.
pub fn orthogonal_factorization(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, r) = m.shape();
    assert!(n >= r, "orthogonal_factorization needs rows >= columns ({n} < {r})");

    let scale = (0..r).map(|j| m.column(j).norm()).fold(0.0f64, f64::max);
    let tol = RANK_TOL * scale;
    let mut q = DMatrix::<f64>::zeros(n, r);
    let mut rr = DMatrix::<f64>::zeros(r, r);

    for j in 0..r {
        let mut w = m.column(j).into_owned();
        for _ in 0..2 {
            for i in 0..j {
                let c = q.column(i).dot(&w);
                rr[(i, j)] += c;
                w.axpy(-c, &q.column(i), 1.0);
            }
        }
        let norm = w.norm();
        if norm > tol && norm > 0.0 {
            rr[(j, j)] = norm;
            q.set_column(j, &(w / norm));
        } else {
            let e = completion_vector(&q, j);
            q.set_column(j, &e);
        }
    }
    (q, rr)
}

/// Unit vector orthogonal to the first `used` columns of `q`, taken from the
/// first identity column that keeps more than half its squared norm.
fn completion_vector(q: &DMatrix<f64>, used: usize) -> DVector<f64> {
    let n = q.nrows();
    let basis = q.columns(0, used);
    // ‖(I − Q Qᵀ) e_k‖² = 1 − ‖row k of Q‖²
    let residual = |k: usize| 1.0 - basis.row(k).norm_squared();
    let k = (0..n).find(|&k| residual(k) > 0.5).unwrap_or_else(|| {
        (0..n)
            .reduce(|best, k| if residual(k) > residual(best) { k } else { best })
            .expect("completion requested for an empty basis")
    });
    let mut e = DVector::<f64>::zeros(n);
    e[k] = 1.0;
    for _ in 0..2 {
        for i in 0..used {
            let c = q.column(i).dot(&e);
            e.axpy(-c, &q.column(i), 1.0);
        }
    }
    let norm = e.norm();
    e / norm
}

/// One step of the first-order projector-splitting integrator:
///
/// ```text
/// K1 = U0 S0 + ΔA V0          ->  K1 = U1 S̃1
/// S̃0 = S̃1 − U1ᵀ ΔA V0
/// L1 = V0 S̃0ᵀ + ΔAᵀ U1        ->  L1 = V1 S1ᵀ
/// ```
///
/// The result is exact whenever `A0 + ΔA` stays within the rank budget and the
/// new column direction is visible through `V0`.
pub fn projector_splitting_step(
    factors: &LowRankFactors,
    inc: &RankOneIncrement,
) -> Result<LowRankFactors> {
    inc.check(factors)?;
    let w = inc.weight;

    // ΔA V0 = w a (V0ᵀ b)ᵀ
    let bv = factors.v.tr_mul(&inc.b);
    let mut k1 = &factors.u * &factors.s;
    k1.ger(w, &inc.a, &bv, 1.0);
    let (u1, mut core) = orthogonal_factorization(&k1);

    // U1ᵀ ΔA V0 = w (U1ᵀ a)(V0ᵀ b)ᵀ
    let ua = u1.tr_mul(&inc.a);
    core.ger(-w, &ua, &bv, 1.0);

    // ΔAᵀ U1 = w b (U1ᵀ a)ᵀ
    let mut l1 = &factors.v * core.transpose();
    l1.ger(w, &inc.b, &ua, 1.0);
    let (v1, r1) = orthogonal_factorization(&l1);

    Ok(LowRankFactors {
        u: u1,
        s: r1.transpose(),
        v: v1,
    })
}

/// Best rank-`r` approximation of `μ·A + (1−μ)·ΔA`.
pub fn truncated_svd_update(
    factors: &LowRankFactors,
    inc: &RankOneIncrement,
    mu: f64,
) -> Result<LowRankFactors> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::InvalidArgument(format!("mu = {mu} outside [0, 1]")));
    }
    let mut scaled = factors.clone();
    scaled.scale(mu);
    let inc = RankOneIncrement {
        weight: inc.weight * (1.0 - mu),
        ..inc.clone()
    };
    rank_one_svd_update(&scaled, &inc)
}

/// Best rank-`r` approximation of `A + ΔA` via an incremental SVD.
///
/// `a` and `b` are split into components inside `span(U)`, `span(V)` and unit
/// residual directions; the `(r+1)×(r+1)` core
/// `[[S, 0], [0, 0]] + w [Uᵀa; ‖a⊥‖] [Vᵀb; ‖b⊥‖]ᵀ` is decomposed and truncated.
/// Singular values come out sorted in decreasing order on the diagonal of `S`.
pub fn rank_one_svd_update(
    factors: &LowRankFactors,
    inc: &RankOneIncrement,
) -> Result<LowRankFactors> {
    inc.check(factors)?;
    let r = factors.rank();
    let (ua, pa, ra) = split_against(&factors.u, &inc.a);
    let (vb, pb, rb) = split_against(&factors.v, &inc.b);

    let ka = r + usize::from(pa.is_some());
    let kb = r + usize::from(pb.is_some());
    let mut core = DMatrix::<f64>::zeros(ka, kb);
    core.view_mut((0, 0), (r, r)).copy_from(&factors.s);
    let mut left = DVector::<f64>::zeros(ka);
    left.rows_mut(0, r).copy_from(&ua);
    if ka > r {
        left[r] = ra;
    }
    let mut right = DVector::<f64>::zeros(kb);
    right.rows_mut(0, r).copy_from(&vb);
    if kb > r {
        right[r] = rb;
    }
    core.ger(inc.weight, &left, &right, 1.0);

    let (cu, sigma, cv) = jacobi_svd(&core);

    let basis_u = extend_basis(&factors.u, pa);
    let basis_v = extend_basis(&factors.v, pb);
    let rot_u = cu.columns(0, r);
    let rot_v = cv.columns(0, r);

    Ok(LowRankFactors {
        u: basis_u * rot_u,
        s: DMatrix::from_diagonal(&sigma.rows(0, r).into_owned()),
        v: basis_v * rot_v,
    })
}

/// Thin SVD `C = U Σ Vᵀ` by one-sided Jacobi rotations, singular values in
/// decreasing order. Accurate on rank-deficient inputs; meant for small cores.
/// Columns of `U` belonging to zero singular values are completed to an
/// orthonormal set.
pub fn jacobi_svd(c: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    if c.nrows() < c.ncols() {
        let (u, s, v) = jacobi_svd(&c.transpose());
        return (v, s, u);
    }
    let k = c.ncols();
    let mut w = c.clone();
    let mut v = DMatrix::<f64>::identity(k, k);
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate(&mut w, p, q, cs, sn);
                rotate(&mut v, p, q, cs, sn);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..k).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let floor = norms.iter().fold(0.0f64, |a, &b| a.max(b)) * f64::EPSILON;

    let mut u = DMatrix::<f64>::zeros(c.nrows(), k);
    for (dst, &src) in order.iter().enumerate() {
        if norms[src] > floor && norms[src] > 0.0 {
            u.set_column(dst, &(w.column(src) / norms[src]));
        } else {
            let e = completion_vector(&u, dst);
            u.set_column(dst, &e);
        }
    }
    let sigma = DVector::from_iterator(k, order.iter().map(|&j| norms[j]));
    let v = DMatrix::from_fn(k, k, |i, j| v[(i, order[j])]);
    (u, sigma, v)
}

/// Columns `p`, `q` of `m` ← `(c·m_p − s·m_q, s·m_p + c·m_q)`.
fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (a, b) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * a - s * b;
        m[(i, q)] = s * a + c * b;
    }
}

/// Splits `x` into `Q c + ρ p` with `p ⟂ span(Q)`. `p` is `None` when `Q`
/// already spans the whole space.
fn split_against(q: &DMatrix<f64>, x: &DVector<f64>) -> (DVector<f64>, Option<DVector<f64>>, f64) {
    let mut c = q.tr_mul(x);
    let mut p = x - q * &c;
    let c2 = q.tr_mul(&p);
    p -= q * &c2;
    c += c2;
    if q.ncols() >= q.nrows() {
        return (c, None, 0.0);
    }
    let rho = p.norm();
    if rho > RANK_TOL * x.norm() && rho > 0.0 {
        (c, Some(p / rho), rho)
    } else {
        (c, Some(completion_vector(q, q.ncols())), 0.0)
    }
}

fn extend_basis(q: &DMatrix<f64>, extra: Option<DVector<f64>>) -> DMatrix<f64> {
    match extra {
        Some(p) => {
            let r = q.ncols();
            let mut out = q.clone().insert_column(r, 0.0);
            out.set_column(r, &p);
            out
        }
        None => q.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
    }

    fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
    }

    fn e(n: usize, k: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[k] = 1.0;
        v
    }

    #[test]
    fn qr_single_column() {
        let m = DMatrix::from_column_slice(2, 1, &[2.0, 0.0]);
        let (q, r) = orthogonal_factorization(&m);
        assert_eq!(q, DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        assert_eq!(r, DMatrix::from_element(1, 1, 2.0));
    }

    #[test]
    fn qr_of_orthonormal_input_is_identity_core() {
        let m = DMatrix::<f64>::identity(4, 2);
        let (q, r) = orthogonal_factorization(&m);
        assert_eq!(q, m);
        assert_eq!(r, DMatrix::identity(2, 2));
    }

    #[test]
    fn qr_random_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = gaussian(&mut rng, 16, 4);
        let (q, r) = orthogonal_factorization(&m);
        assert!((&q * &r - &m).norm() <= 1e-12);
        assert!(gram_deviation(&q) <= 1e-12);
        for j in 0..4 {
            assert!(r[(j, j)] >= 0.0);
            for i in j + 1..4 {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn qr_rank_deficient_is_completed() {
        let mut m = DMatrix::<f64>::zeros(5, 3);
        m.set_column(0, &DVector::from_vec(vec![1.0, 2.0, 0.0, 0.0, 1.0]));
        m.set_column(1, &(m.column(0) * 3.0));
        let (q, r) = orthogonal_factorization(&m);
        assert!(gram_deviation(&q) <= 1e-12);
        assert!((&q * &r - &m).norm() <= 1e-12);
        assert_eq!(r[(1, 1)], 0.0);
        assert_eq!(r[(2, 2)], 0.0);

        let (q0, r0) = orthogonal_factorization(&DMatrix::zeros(4, 2));
        assert!(gram_deviation(&q0) <= 1e-15);
        assert_eq!(r0, DMatrix::zeros(2, 2));
    }

    #[test]
    fn splitting_scalar_trace() {
        for c in [0.5, 2.0, -0.25] {
            let col = DMatrix::from_column_slice(3, 1, e(3, 0).as_slice());
            let f = LowRankFactors::new(col.clone(), DMatrix::from_element(1, 1, 1.0), col)
                .unwrap();
            let inc = RankOneIncrement::new(e(3, 0), e(3, 0), c).unwrap();
            let out = projector_splitting_step(&f, &inc).unwrap();
            assert!((out.u().column(0) - e(3, 0)).norm() < 1e-15);
            assert!((out.v().column(0) - e(3, 0)).norm() < 1e-15);
            assert!((out.s()[(0, 0)] - (1.0 + c)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_increment_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (u, _) = orthogonal_factorization(&gaussian(&mut rng, 9, 3));
        let (v, _) = orthogonal_factorization(&gaussian(&mut rng, 9, 3));
        let f = LowRankFactors::new(u, gaussian(&mut rng, 3, 3), v).unwrap();
        let inc = RankOneIncrement::new(gaussian_vec(&mut rng, 9), gaussian_vec(&mut rng, 9), 0.0)
            .unwrap();
        let before = f.to_dense();
        let ps = projector_splitting_step(&f, &inc).unwrap();
        assert!((ps.to_dense() - &before).norm() <= 1e-12);
        let tsvd = truncated_svd_update(&f, &gaussian_inc(&mut rng, 9), 1.0).unwrap();
        assert!((tsvd.to_dense() - &before).norm() <= 1e-12);
    }

    fn gaussian_inc(rng: &mut ChaCha8Rng, n: usize) -> RankOneIncrement {
        RankOneIncrement::new(gaussian_vec(rng, n), gaussian_vec(rng, n), rng.sample(StandardNormal))
            .unwrap()
    }

    #[test]
    fn splitting_exact_when_sum_fits_rank() {
        // A0 of rank 2 held in a rank-3 budget; A0 + ΔA has rank <= 3.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (u, _) = orthogonal_factorization(&gaussian(&mut rng, 8, 3));
        let (v, _) = orthogonal_factorization(&gaussian(&mut rng, 8, 3));
        let mut s = gaussian(&mut rng, 3, 3);
        s.row_mut(2).fill(0.0);
        s.column_mut(2).fill(0.0);
        let f = LowRankFactors::new(u, s, v).unwrap();
        let inc = gaussian_inc(&mut rng, 8);
        let out = projector_splitting_step(&f, &inc).unwrap();
        let expected = f.to_dense() + inc.weight * &inc.a * inc.b.transpose();
        assert!((out.to_dense() - expected).norm() <= 1e-10);
        assert!(out.orthonormality_error() <= 1e-10);
    }

    #[test]
    fn splitting_from_zero_accumulates_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, r) = (12, 4);
        let mut f = LowRankFactors::zeros(n, n, r).unwrap();
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for _ in 0..r {
            let inc = gaussian_inc(&mut rng, n);
            dense += inc.weight * &inc.a * inc.b.transpose();
            f = projector_splitting_step(&f, &inc).unwrap();
            assert!((f.to_dense() - &dense).norm() <= 1e-9);
            assert!(f.orthonormality_error() <= 1e-10);
        }
    }

    #[test]
    fn tsvd_from_zero_single_term() {
        let f = LowRankFactors::zeros(4, 4, 2).unwrap();
        let inc = RankOneIncrement::new(e(4, 0), e(4, 1), 2.0).unwrap();
        let out = truncated_svd_update(&f, &inc, 0.0).unwrap();
        let mut expected = DMatrix::zeros(4, 4);
        expected[(0, 1)] = 2.0;
        assert!((out.to_dense() - expected).norm() <= 1e-14);
        assert!((out.s()[(0, 0)] - 2.0).abs() <= 1e-14);
        assert!(out.s()[(1, 1)].abs() <= 1e-14);
    }

    #[test]
    fn tsvd_matches_dense_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (n, r) = (10, 2);
        let (u, _) = orthogonal_factorization(&gaussian(&mut rng, n, r));
        let (v, _) = orthogonal_factorization(&gaussian(&mut rng, n, r));
        let f = LowRankFactors::new(u, gaussian(&mut rng, r, r), v).unwrap();
        let inc = gaussian_inc(&mut rng, n);
        let out = truncated_svd_update(&f, &inc, 0.5).unwrap();

        let target = 0.5 * f.to_dense() + 0.5 * inc.weight * &inc.a * inc.b.transpose();
        let svd = target.svd(true, true);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let su = svd.u.unwrap();
        let svt = svd.v_t.unwrap();
        let mut best = DMatrix::<f64>::zeros(n, n);
        for &k in &idx[..r] {
            best += svd.singular_values[k] * su.column(k) * svt.row(k);
        }
        assert!((out.to_dense() - best).norm() <= 1e-10);
        assert!(out.orthonormality_error() <= 1e-10);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let f = LowRankFactors::zeros(4, 4, 2).unwrap();
        let inc = RankOneIncrement::new(e(3, 0), e(4, 0), 1.0).unwrap();
        assert!(matches!(
            projector_splitting_step(&f, &inc),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(truncated_svd_update(&f, &inc, 0.5).is_err());
        assert!(LowRankFactors::zeros(3, 3, 4).is_err());
        assert!(RankOneIncrement::new(e(3, 0), e(3, 0), f64::NAN).is_err());
    }

    #[test]
    fn full_rank_budget_has_no_residual_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 3;
        let mut f = LowRankFactors::zeros(n, n, n).unwrap();
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for _ in 0..5 {
            let inc = gaussian_inc(&mut rng, n);
            dense += inc.weight * &inc.a * inc.b.transpose();
            f = rank_one_svd_update(&f, &inc).unwrap();
        }
        assert!((f.to_dense() - dense).norm() <= 1e-12);
    }

    fn check_svd(c: &DMatrix<f64>, tol: f64) {
        let (u, s, v) = jacobi_svd(c);
        let k = c.nrows().min(c.ncols());
        assert_eq!((u.shape(), s.len(), v.shape()), ((c.nrows(), k), k, (c.ncols(), k)));
        let rebuilt = &u * DMatrix::from_diagonal(&s) * v.transpose();
        assert!((rebuilt - c).norm() <= tol * c.norm().max(1.0));
        assert!(gram_deviation(&u) <= 1e-12 && gram_deviation(&v) <= 1e-12);
        assert!(s.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn jacobi_svd_of_an_outer_product() {
        let g: DVector<f64> = DVector::from_vec(vec![0.289, 0.347, 0.401, 0.370, 0.354, 0.380, 0.366, 0.406, 0.0625]);
        let c = 0.2845 * &g * g.transpose();
        check_svd(&c, 1e-14);
        let (_, s, _) = jacobi_svd(&c);
        assert!((s[0] - 0.2845 * g.norm_squared()).abs() <= 1e-14_f64);
        assert!(s.rows(1, 8).norm() <= 1e-15);
    }

    #[test]
    fn jacobi_svd_of_zero_is_orthonormal() {
        check_svd(&DMatrix::zeros(4, 3), 0.0);
        check_svd(&DMatrix::zeros(2, 5), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn jacobi_svd_reconstructs(rows in 1usize..8, cols in 1usize..8, rank in 0usize..8, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rank = rank.min(rows.min(cols));
            let c = gaussian(&mut rng, rows, rank) * gaussian(&mut rng, rank, cols);
            check_svd(&c, 1e-13);
        }
    }
}
