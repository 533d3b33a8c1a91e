//! Exact linear quantile regression.
//!
//! Minimizes `Σ_i ρ_τ(y_i − x_i·β)` over vertices of the check-loss
//! polyhedron: every iterate interpolates exactly `p` observations (the
//! basis). From a vertex the solver prices the `2p` edges leaving it, picks a
//! descending one, and walks along it past as many residual sign changes as
//! still lower the loss before pivoting. This is the primal exterior-point
//! scheme of Barrodale and Roberts for L1 regression, generalized to the
//! asymmetric check loss.
//!
//! Degenerate vertices (more than `p` zero residuals, common with tied
//! data) are resolved by a lexicographic perturbation of the response:
//! observation `i` is shifted by `ε^(i+1)` for an infinitesimal `ε`. Every
//! nonbasic residual then has a definite sign, every step strictly lowers
//! the perturbed loss, and the walk cannot cycle.

use std::cmp::Ordering;

use thiserror::Error;

use crate::matrix::{dot, invert, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("tau must lie strictly between 0 and 1, got {0}")]
    InvalidTau(f64),
    #[error("no observations")]
    Empty,
    #[error("design has {rows} rows but response has {len} entries")]
    DimensionMismatch { rows: usize, len: usize },
    #[error("need at least as many observations as columns ({n} < {p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("design or response contains non-finite values")]
    NonFinite,
    #[error("design is rank deficient: rank {rank} of {cols} columns, column {column} is dependent")]
    RankDeficient {
        rank: usize,
        cols: usize,
        column: usize,
    },
    #[error("simplex iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("basis became singular")]
    SingularBasis,
}

/// The check (pinball) loss `ρ_τ(r) = r·(τ − 1[r<0])`.
pub fn check_loss<T: Scalar>(r: T, tau: T) -> Result<T, SolverError> {
    validate_tau(tau)?;
    Ok(rho(r, tau))
}

fn validate_tau<T: Scalar>(tau: T) -> Result<(), SolverError> {
    if tau > T::zero() && tau < T::one() {
        Ok(())
    } else {
        Err(SolverError::InvalidTau(tau.as_f64()))
    }
}

#[inline]
fn rho<T: Scalar>(r: T, tau: T) -> T {
    if r < T::zero() {
        r * (tau - T::one())
    } else {
        r * tau
    }
}

/// Total check loss of a residual vector.
pub fn total_loss<T: Scalar>(residuals: &[T], tau: T) -> T {
    residuals.iter().map(|&r| rho(r, tau)).sum()
}

/// Which descending edge to follow at each vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PivotRule {
    /// Most negative directional derivative; ties go to the lowest
    /// observation index.
    #[default]
    Steepest,
    /// First descending edge by lowest observation index.
    Bland,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub pivot: PivotRule,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            pivot: PivotRule::Steepest,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFit<T> {
    pub tau: T,
    pub coefficients: Vec<T>,
    pub residuals: Vec<T>,
    pub loss: T,
    pub n_interpolated: usize,
    /// Observations interpolated by the returned vertex, one per column.
    pub basis: Vec<usize>,
    pub iterations: usize,
}

/// Column-pivoted Householder QR of a tall design.
pub struct PivotedQr<T> {
    /// Column-major working copy; holds Householder vectors below the diagonal.
    cols: Vec<Vec<T>>,
    diag: Vec<T>,
    betas: Vec<T>,
    perm: Vec<usize>,
    rank: usize,
}

impl<T: Scalar> PivotedQr<T> {
    /// Factorizes `x`, stopping once the largest remaining column norm drops
    /// below `tol · |R_00|`.
    pub fn new(x: &Matrix<T>, tol: T) -> Self {
        let (n, p) = (x.nrows(), x.ncols());
        let mut cols: Vec<Vec<T>> = (0..p).map(|j| x.column(j)).collect();
        let mut perm: Vec<usize> = (0..p).collect();
        let mut diag = Vec::with_capacity(p);
        let mut betas = Vec::with_capacity(p);
        let mut r00 = T::zero();
        let mut rank = 0;
        for k in 0..p.min(n) {
            let norm2 = |c: &Vec<T>| c[k..].iter().fold(T::zero(), |a, &v| a + v * v);
            let (best, best_norm2) = (k..p)
                .map(|j| (j, norm2(&cols[j])))
                .fold((k, -T::one()), |b, c| if c.1 > b.1 { c } else { b });
            let norm = best_norm2.sqrt();
            if k == 0 {
                r00 = norm;
            }
            if norm == T::zero() || norm <= tol * r00 {
                break;
            }
            cols.swap(k, best);
            perm.swap(k, best);
            let col = &mut cols[k];
            let alpha = if col[k] > T::zero() { -norm } else { norm };
            col[k] = col[k] - alpha;
            let beta = col[k..].iter().fold(T::zero(), |a, &v| a + v * v);
            let v: Vec<T> = col[k..].to_vec();
            for c in cols.iter_mut().skip(k + 1) {
                let s = v.iter().zip(&c[k..]).fold(T::zero(), |a, (&vi, &ci)| a + vi * ci);
                let f = (s + s) / beta;
                for (ci, &vi) in c[k..].iter_mut().zip(&v) {
                    *ci = *ci - f * vi;
                }
            }
            diag.push(alpha);
            betas.push(beta);
            rank += 1;
        }
        Self {
            cols,
            diag,
            betas,
            perm,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Column order chosen by pivoting; entries past `rank` are dependent.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Least-squares solution using the leading `rank` columns.
    pub fn solve_least_squares(&self, y: &[T]) -> Vec<T> {
        let r = self.rank;
        let mut qty = y.to_vec();
        for k in 0..r {
            let v = &self.cols[k][k..];
            let s = v.iter().zip(&qty[k..]).fold(T::zero(), |a, (&vi, &yi)| a + vi * yi);
            let f = (s + s) / self.betas[k];
            for (yi, &vi) in qty[k..].iter_mut().zip(v) {
                *yi = *yi - f * vi;
            }
        }
        let mut z = vec![T::zero(); r];
        for k in (0..r).rev() {
            let mut s = qty[k];
            for j in k + 1..r {
                s = s - self.cols[j][k] * z[j];
            }
            z[k] = s / self.diag[k];
        }
        let mut beta = vec![T::zero(); self.perm.len()];
        for k in 0..r {
            beta[self.perm[k]] = z[k];
        }
        beta
    }
}

/// Rank check used before fitting. Returns the first dependent column.
pub fn check_full_rank<T: Scalar>(x: &Matrix<T>) -> Result<PivotedQr<T>, SolverError> {
    let qr = PivotedQr::new(x, T::rank_tol());
    let p = x.ncols();
    if qr.rank() < p {
        return Err(SolverError::RankDeficient {
            rank: qr.rank(),
            cols: p,
            column: qr.permutation()[qr.rank()],
        });
    }
    Ok(qr)
}

pub fn fit<T: Scalar>(x: &Matrix<T>, y: &[T], tau: T) -> Result<QuantileFit<T>, SolverError> {
    fit_with(x, y, tau, &SolverOptions::default())
}

pub fn fit_with<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    tau: T,
    opts: &SolverOptions,
) -> Result<QuantileFit<T>, SolverError> {
    validate_tau(tau)?;
    let (n, p) = (x.nrows(), x.ncols());
    if n == 0 || p == 0 {
        return Err(SolverError::Empty);
    }
    if y.len() != n {
        return Err(SolverError::DimensionMismatch { rows: n, len: y.len() });
    }
    if n < p {
        return Err(SolverError::TooFewObservations { n, p });
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite);
    }
    let qr = check_full_rank(x)?;
    let ls = qr.solve_least_squares(y);
    let basis = initial_basis(x, y, &ls).ok_or(SolverError::SingularBasis)?;
    Vertex::new(x, y, tau, basis).solve(opts)
}

/// Picks `p` independent rows, preferring those closest to the least-squares fit.
fn initial_basis<T: Scalar>(x: &Matrix<T>, y: &[T], ls: &[T]) -> Option<Vec<usize>> {
    let (n, p) = (x.nrows(), x.ncols());
    let mut order: Vec<(T, usize)> = (0..n)
        .map(|i| ((y[i] - dot(x.row(i), ls)).abs(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp_(&b.0).then(a.1.cmp(&b.1)));
    for &rel in &[T::of(1e-6), T::rank_tol()] {
        let mut q: Vec<Vec<T>> = Vec::with_capacity(p);
        let mut chosen = Vec::with_capacity(p);
        for &(_, i) in &order {
            let row = x.row(i);
            let norm = dot(row, row).sqrt();
            if norm == T::zero() {
                continue;
            }
            let mut v = row.to_vec();
            // two passes of Gram-Schmidt for stability
            for _ in 0..2 {
                for qk in &q {
                    let c = dot(qk, &v);
                    v.iter_mut().zip(qk).for_each(|(vi, &qi)| *vi = *vi - c * qi);
                }
            }
            let vn = dot(&v, &v).sqrt();
            if vn > rel * norm {
                v.iter_mut().for_each(|vi| *vi = *vi / vn);
                q.push(v);
                chosen.push(i);
                if chosen.len() == p {
                    chosen.sort_unstable();
                    return Some(chosen);
                }
            }
        }
    }
    None
}

/// `total_cmp` for the generic scalar (NaN sorts last).
trait TotalCmp {
    fn total_cmp_(&self, other: &Self) -> Ordering;
}

impl<T: Scalar> TotalCmp for T {
    fn total_cmp_(&self, other: &Self) -> Ordering {
        self.partial_cmp(other).unwrap_or_else(|| self.is_nan().cmp(&other.is_nan()))
    }
}

struct Vertex<'a, T> {
    x: &'a Matrix<T>,
    y: &'a [T],
    tau: T,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    zero_tol: T,
}

/// A breakpoint along an edge: observation `obs` changes residual sign at
/// step length `step` (plus an infinitesimal given by `lex`).
struct Breakpoint<T> {
    obs: usize,
    step: T,
    slope_jump: T,
    /// Sparse perturbation coefficients of the step, sorted by index.
    lex: Vec<(usize, T)>,
}

impl<'a, T: Scalar> Vertex<'a, T> {
    fn new(x: &'a Matrix<T>, y: &'a [T], tau: T, basis: Vec<usize>) -> Self {
        let n = x.nrows();
        let mut is_basic = vec![false; n];
        for &b in &basis {
            is_basic[b] = true;
        }
        let ymax = y.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        Self {
            x,
            y,
            tau,
            basis,
            is_basic,
            zero_tol: T::zero_tol() * (T::one() + ymax),
        }
    }

    fn basis_inverse(&self) -> Option<Matrix<T>> {
        let rows: Vec<&[T]> = self.basis.iter().map(|&b| self.x.row(b)).collect();
        invert(&Matrix::from_rows(&rows), T::rank_tol() * T::of(1e-3))
    }

    /// `x_i · B⁻¹`: coordinates of row `i` in the basis rows.
    fn coords(&self, binv: &Matrix<T>, i: usize) -> Vec<T> {
        let p = self.basis.len();
        let row = self.x.row(i);
        (0..p)
            .map(|k| (0..p).fold(T::zero(), |a, m| a + row[m] * binv[(m, k)]))
            .collect()
    }

    /// Perturbation vector of residual `i` (sparse, ascending index):
    /// `ε_i − Σ_m z_im ε_{h_m}`.
    fn perturbation(&self, i: usize, z: &[T]) -> Vec<(usize, T)> {
        let mut v: Vec<(usize, T)> = self
            .basis
            .iter()
            .zip(z)
            .filter(|(_, &c)| c.abs() > T::zero_tol())
            .map(|(&h, &c)| (h, -c))
            .collect();
        v.push((i, T::one()));
        v.sort_unstable_by_key(|e| e.0);
        v
    }

    fn solve(mut self, opts: &SolverOptions) -> Result<QuantileFit<T>, SolverError> {
        let (n, p) = (self.x.nrows(), self.x.ncols());
        let tau = self.tau;
        let one = T::one();
        for iter in 0..opts.max_iter {
            let binv = self.basis_inverse().ok_or(SolverError::SingularBasis)?;
            let yb: Vec<T> = self.basis.iter().map(|&b| self.y[b]).collect();
            let beta = binv.mul_vec(&yb);
            let mut resid: Vec<T> = (0..n)
                .map(|i| {
                    if self.is_basic[i] {
                        T::zero()
                    } else {
                        let r = self.y[i] - dot(self.x.row(i), &beta);
                        if r.abs() <= self.zero_tol {
                            T::zero()
                        } else {
                            r
                        }
                    }
                })
                .collect();

            // Signs of nonbasic residuals (perturbed problem) and ρ' weights.
            let mut positive = vec![false; n];
                    let mut w = vec![T::zero(); p];
            for i in 0..n {
                if self.is_basic[i] {
                    continue;
                }
                let pos = if resid[i] > T::zero() {
                    true
                } else if resid[i] < T::zero() {
                    false
                } else {
                    let z = self.coords(&binv, i);
                    self.perturbation(i, &z)[0].1 > T::zero()
                };
                positive[i] = pos;
                let d = if pos { tau } else { tau - one };
                w.iter_mut()
                    .zip(self.x.row(i))
                    .for_each(|(wk, &xk)| *wk = *wk + d * xk);
            }
            let g: Vec<T> = (0..p)
                .map(|k| (0..p).fold(T::zero(), |a, m| a + w[m] * binv[(m, k)]))
                .collect();

            let gscale = g.iter().fold(one, |m, v| m.max(v.abs()));
            let tol_d = T::zero_tol() * T::of(n as f64).sqrt() * gscale;
            let entering = self.choose_edge(&g, tol_d, opts.pivot);
            let Some((k, sigma, deriv)) = entering else {
                for &b in &self.basis {
                    resid[b] = T::zero();
                }
                let loss = total_loss(&resid, tau);
                let n_interpolated = resid.iter().filter(|r| **r == T::zero()).count();
                let mut basis = self.basis.clone();
                basis.sort_unstable();
                return Ok(QuantileFit {
                    tau,
                    coefficients: beta,
                    residuals: resid,
                    loss,
                    n_interpolated,
                    basis,
                    iterations: iter,
                });
            };

            // Edge direction d = σ·B⁻¹e_k; a_i = x_i·d.
            let dir: Vec<T> = (0..p).map(|m| sigma * binv[(m, k)]).collect();
            let mut points: Vec<Breakpoint<T>> = Vec::new();
            for i in 0..n {
                if self.is_basic[i] {
                    continue;
                }
                let a = dot(self.x.row(i), &dir);
                if a.abs() <= T::zero_tol() {
                    continue;
                }
                // residual moves as r_i − s·a; it crosses zero ahead iff its
                // (perturbed) sign matches the sign of a.
                if positive[i] != (a > T::zero()) {
                    continue;
                }
                points.push(Breakpoint {
                    obs: i,
                    step: resid[i] / a,
                    slope_jump: a.abs(),
                    lex: Vec::new(),
                });
            }
            points.sort_by(|a, b| a.step.total_cmp_(&b.step).then(a.obs.cmp(&b.obs)));
            // Equal step lengths are ordered by the infinitesimal part.
            let mut start = 0;
            while start < points.len() {
                let mut end = start + 1;
                while end < points.len() && points[end].step == points[start].step {
                    end += 1;
                }
                if end - start > 1 {
                    for bp in &mut points[start..end] {
                        let z = self.coords(&binv, bp.obs);
                        let a = dot(self.x.row(bp.obs), &dir);
                        bp.lex = self
                            .perturbation(bp.obs, &z)
                            .into_iter()
                            .map(|(j, c)| (j, c / a))
                            .collect();
                    }
                    points[start..end].sort_by(|a, b| compare_lex(&a.lex, &b.lex).then(a.obs.cmp(&b.obs)));
                }
                start = end;
            }
            let mut slope = deriv;
            let mut leaving_to = None;
            for bp in &points {
                slope = slope + bp.slope_jump;
                if slope >= T::zero() {
                    leaving_to = Some(bp.obs);
                    break;
                }
            }
            // Full column rank makes the loss coercive, so some breakpoint
            // always turns the slope nonnegative; fall back to the last one
            // if rounding says otherwise.
            let enter = match leaving_to.or_else(|| points.last().map(|b| b.obs)) {
                Some(e) => e,
                None => return Err(SolverError::SingularBasis),
            };
            let out = self.basis[k];
            self.is_basic[out] = false;
            self.is_basic[enter] = true;
            self.basis[k] = enter;
        }
        Err(SolverError::IterationLimit(opts.max_iter))
    }

    /// Returns `(basis position, direction sign, directional derivative)`.
    fn choose_edge(&self, g: &[T], tol: T, rule: PivotRule) -> Option<(usize, T, T)> {
        let one = T::one();
        let mut cands: Vec<(usize, T, T)> = Vec::new();
        for (k, &gk) in g.iter().enumerate() {
            let up = (one - self.tau) - gk;
            let down = self.tau + gk;
            if up < -tol {
                cands.push((k, one, up));
            }
            if down < -tol {
                cands.push((k, -one, down));
            }
        }
        let obs = |c: &(usize, T, T)| (self.basis[c.0], c.1 < T::zero());
        match rule {
            PivotRule::Bland => cands.into_iter().min_by_key(|c| obs(c)),
            PivotRule::Steepest => cands
                .into_iter()
                .min_by(|a, b| a.2.total_cmp_(&b.2).then_with(|| obs(a).cmp(&obs(b)))),
        }
    }
}

fn compare_lex<T: Scalar>(a: &[(usize, T)], b: &[(usize, T)]) -> Ordering {
    let zero = T::zero();
    let (mut i, mut j) = (0, 0);
    loop {
        let (ca, cb) = match (a.get(i), b.get(j)) {
            (None, None) => return Ordering::Equal,
            (Some(&(_, ca)), None) => {
                i += 1;
                (ca, zero)
            }
            (None, Some(&(_, cb))) => {
                j += 1;
                (zero, cb)
            }
            (Some(&(ia, ca)), Some(&(ib, cb))) => match ia.cmp(&ib) {
                Ordering::Less => {
                    i += 1;
                    (ca, zero)
                }
                Ordering::Greater => {
                    j += 1;
                    (zero, cb)
                }
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                    (ca, cb)
                }
            },
        };
        match ca.total_cmp_(&cb) {
            Ordering::Equal => continue,
            ord => return ord,
        }
    }
}

/// Subgradient optimality test for a candidate coefficient vector.
///
/// Holds when zero-residual observations can be assigned weights in
/// `[τ−1, τ]` that cancel `Σ_{r>0} τ·x_i − Σ_{r<0} (1−τ)·x_i` in every
/// column, up to `tol`. Residuals within `tol·(1 + max|y|)` of zero count as
/// zero.
pub fn verify_optimality<T: Scalar>(x: &Matrix<T>, y: &[T], tau: T, coefficients: &[T], tol: T) -> bool {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n || coefficients.len() != p || validate_tau(tau).is_err() {
        return false;
    }
    let one = T::one();
    let ymax = y.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let rtol = tol * (one + ymax);
    let mut w = vec![T::zero(); p];
    let mut zero_rows: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = y[i] - dot(x.row(i), coefficients);
        let d = if r > rtol {
            tau
        } else if r < -rtol {
            tau - one
        } else {
            zero_rows.push(i);
            continue;
        };
        w.iter_mut().zip(x.row(i)).for_each(|(wk, &xk)| *wk = *wk + d * xk);
    }
    let col_scale = (0..p)
        .map(|j| (0..n).fold(T::zero(), |a, i| a + x[(i, j)].abs()))
        .fold(one, T::max);
    let target: Vec<T> = w.iter().map(|&v| -v).collect();
    let infeasibility = box_feasibility(x, &zero_rows, &target, tau - one, tau);
    infeasibility <= tol * col_scale
}

/// Minimum of `‖Σ_k u_k x_{rows[k]} − b‖₁` over `u ∈ [lo, hi]^|rows|`,
/// computed by a phase-one bounded-variable simplex with Bland's rule.
fn box_feasibility<T: Scalar>(x: &Matrix<T>, rows: &[usize], b: &[T], lo: T, hi: T) -> T {
    let p = b.len();
    let m = rows.len();
    let width = hi - lo;
    // shift u = lo + v, v ∈ [0, width]
    let mut rhs: Vec<T> = b.to_vec();
    for &r in rows {
        for (j, rj) in rhs.iter_mut().enumerate() {
            *rj = *rj - lo * x[(r, j)];
        }
    }
    // columns: v_0..v_{m-1}, then one artificial per constraint row with
    // coefficient sign(rhs) so the initial basis is the identity.
    let ncol = m + p;
    let mut tab = Matrix::<T>::zeros(p, ncol);
    let mut sign = vec![T::one(); p];
    for j in 0..p {
        if rhs[j] < T::zero() {
            sign[j] = -T::one();
            rhs[j] = -rhs[j];
        }
    }
    for (k, &r) in rows.iter().enumerate() {
        for j in 0..p {
            tab[(j, k)] = sign[j] * x[(r, j)];
        }
    }
    for j in 0..p {
        tab[(j, m + j)] = T::one();
    }
    let mut basic: Vec<usize> = (m..ncol).collect();
    let mut at_upper = vec![false; ncol];
    let upper = |c: usize| if c < m { Some(width) } else { None };
    let cost = |c: usize| if c < m { T::zero() } else { T::one() };
    // reduced costs: c_j − c_B·B⁻¹A_j
    let mut red: Vec<T> = (0..ncol)
        .map(|c| cost(c) - (0..p).fold(T::zero(), |a, r| a + cost(basic[r]) * tab[(r, c)]))
        .collect();
    let eps = T::zero_tol();
    for _ in 0..(50 * (ncol + 10)) {
        let entering = (0..ncol).find(|&c| {
            !basic.contains(&c) && ((!at_upper[c] && red[c] < -eps) || (at_upper[c] && red[c] > eps))
        });
        let Some(e) = entering else { break };
        let dir = if at_upper[e] { T::one() } else { -T::one() };
        // basic values change by dir·t·tab[r][e]
        let mut best_t = upper(e).unwrap_or(T::infinity());
        let mut leave: Option<(usize, bool)> = None;
        for r in 0..p {
            let delta = dir * tab[(r, e)];
            let (t, to_upper) = if delta < -eps {
                (rhs[r] / -delta, false)
            } else if delta > eps {
                match upper(basic[r]) {
                    Some(u) => ((u - rhs[r]) / delta, true),
                    None => continue,
                }
            } else {
                continue;
            };
            if t < best_t || (t == best_t && leave.is_some_and(|(lr, _)| basic[r] < basic[lr])) {
                best_t = t;
                leave = Some((r, to_upper));
            }
        }
        if best_t.is_infinite() {
            break;
        }
        for r in 0..p {
            rhs[r] = rhs[r] + dir * best_t * tab[(r, e)];
        }
        match leave {
            None => at_upper[e] = !at_upper[e],
            Some((r, to_upper)) => {
                let entering_value = if at_upper[e] {
                    width - best_t
                } else {
                    best_t
                };
                let old = basic[r];
                at_upper[old] = to_upper;
                let piv = tab[(r, e)];
                for c in 0..ncol {
                    tab[(r, c)] = tab[(r, c)] / piv;
                }
                for rr in 0..p {
                    if rr != r {
                        let f = tab[(rr, e)];
                        if f != T::zero() {
                            for c in 0..ncol {
                                let v = tab[(r, c)];
                                tab[(rr, c)] = tab[(rr, c)] - f * v;
                            }
                        }
                    }
                }
                let f = red[e];
                for c in 0..ncol {
                    red[c] = red[c] - f * tab[(r, c)];
                }
                basic[r] = e;
                at_upper[e] = false;
                rhs[r] = entering_value;
            }
        }
    }
    (0..p)
        .filter(|&r| basic[r] >= m)
        .fold(T::zero(), |a, r| a + rhs[r])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept(n: usize) -> Matrix<f64> {
        Matrix::from_vec(n, 1, vec![1.0; n])
    }

    #[test]
    fn check_loss_values() {
        assert_eq!(check_loss(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(check_loss(2.0, 0.25).unwrap(), 0.5);
        assert_eq!(check_loss(-2.0, 0.25).unwrap(), 1.5);
        assert!(matches!(check_loss(1.0, 0.0), Err(SolverError::InvalidTau(_))));
        assert!(matches!(check_loss(1.0, 1.0), Err(SolverError::InvalidTau(_))));
    }

    #[test]
    fn median_of_three() {
        let f = fit(&intercept(3), &[1.0, 2.0, 9.0], 0.5).unwrap();
        assert_eq!(f.coefficients, vec![2.0]);
        assert_eq!(f.loss, 4.0);
        assert_eq!(f.n_interpolated, 1);
    }

    #[test]
    fn lower_quartile_returns_a_vertex() {
        let y = [1.0, 2.0, 3.0, 4.0];
        // enumerate order statistics as candidates
        let best = y
            .iter()
            .map(|&b| y.iter().map(|&v| rho(v - b, 0.25)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best, 1.5);
        let f = fit(&intercept(4), &y, 0.25).unwrap();
        assert!((f.loss - 1.5).abs() < 1e-12);
        assert!(y.contains(&f.coefficients[0]));
    }

    #[test]
    fn two_points_interpolated() {
        let x = Matrix::<f64>::from_rows(&[[1.0, 0.5], [1.0, 2.0]]);
        let f = fit(&x, &[1.0, 4.0], 0.7).unwrap();
        assert!((f.coefficients[0] - 0.0).abs() < 1e-12);
        assert!((f.coefficients[1] - 2.0).abs() < 1e-12);
        assert_eq!(f.loss, 0.0);
        assert_eq!(f.n_interpolated, 2);
    }

    #[test]
    fn rank_deficiency_is_rejected() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]);
        assert!(matches!(
            fit(&x, &[1.0, 2.0, 3.0], 0.5),
            Err(SolverError::RankDeficient { rank: 1, cols: 2, .. })
        ));
    }

    #[test]
    fn input_validation() {
        let x = intercept(2);
        assert!(matches!(fit(&x, &[1.0], 0.5), Err(SolverError::DimensionMismatch { .. })));
        assert!(matches!(fit(&x, &[1.0, 2.0], 1.5), Err(SolverError::InvalidTau(_))));
        assert!(matches!(fit(&Matrix::<f64>::zeros(0, 1), &[], 0.5), Err(SolverError::Empty)));
        let x2 = Matrix::from_rows(&[[1.0, 0.0]]);
        assert!(matches!(fit(&x2, &[1.0], 0.5), Err(SolverError::TooFewObservations { .. })));
        assert!(matches!(fit(&x, &[1.0, f64::NAN], 0.5), Err(SolverError::NonFinite)));
    }

    #[test]
    fn verify_rejects_non_optimal_median() {
        let x = intercept(3);
        let y = [1.0, 2.0, 9.0];
        assert!(verify_optimality(&x, &y, 0.5, &[2.0], 1e-9));
        assert!(!verify_optimality(&x, &y, 0.5, &[9.0], 1e-9));
    }

    #[test]
    fn verify_detects_perturbation() {
        let x = Matrix::from_rows(&[
            [1.0, 0.1],
            [1.0, 0.7],
            [1.0, 1.3],
            [1.0, 2.2],
            [1.0, 2.9],
            [1.0, 3.4],
            [1.0, 4.0],
        ]);
        let y = [0.3, 1.9, 2.2, 4.8, 5.1, 7.7, 8.0];
        let f = fit(&x, &y, 0.4).unwrap();
        assert!(verify_optimality(&x, &y, 0.4, &f.coefficients, 1e-9));
        for j in 0..2 {
            for d in [-1e-2, 1e-2] {
                let mut b = f.coefficients.clone();
                b[j] += d;
                assert!(!verify_optimality(&x, &y, 0.4, &b, 1e-9));
            }
        }
    }

    #[test]
    fn tied_responses_are_handled() {
        // heavy degeneracy: many tied points on a line
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..12 {
            let t = (i % 4) as f64;
            rows.push([1.0, t]);
            y.push(if i % 3 == 0 { 1.0 + t } else { 2.0 + t });
        }
        let x = Matrix::from_rows(&rows);
        for rule in [PivotRule::Steepest, PivotRule::Bland] {
            for tau in [0.2, 0.5, 0.8] {
                let opts = SolverOptions { pivot: rule, ..Default::default() };
                let f = fit_with(&x, &y, tau, &opts).unwrap();
                assert!(verify_optimality(&x, &y, tau, &f.coefficients, 1e-9), "{rule:?} {tau}");
            }
        }
    }

    #[test]
    fn zero_noise_fit_interpolates_everything() {
        let ages: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let x = Matrix::from_rows(&ages.iter().map(|&t| [1.0, t]).collect::<Vec<_>>());
        let y: Vec<f64> = ages.iter().map(|&t| 3.0 + 2.0 * t).collect();
        let f = fit(&x, &y, 0.1).unwrap();
        assert!(f.loss.abs() < 1e-12);
        assert_eq!(f.n_interpolated, 50);
        assert!(verify_optimality(&x, &y, 0.1, &f.coefficients, 1e-9));
    }

    #[test]
    fn single_precision_median() {
        let x = Matrix::<f32>::from_vec(5, 1, vec![1.0; 5]);
        let f = fit(&x, &[3.0f32, 1.0, 4.0, 1.5, 9.0], 0.5).unwrap();
        assert_eq!(f.coefficients, vec![3.0]);
    }
}
