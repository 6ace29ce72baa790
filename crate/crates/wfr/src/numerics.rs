//! Small numerical kernels shared across the crate: exact floating-point
//! accumulation, tridiagonal solvers and a matrix-free preconditioned
//! conjugate gradient.

/// Exact sum of a sequence of `f64` values.
///
/// Maintains a list of non-overlapping partials (Shewchuk's algorithm, the
/// same one behind Python's `math.fsum`). The result is the correctly rounded
/// sum of the inputs and therefore independent of summation order, which lets
/// path energies survive time reversal and concatenation bit-for-bit.
#[derive(Debug, Default, Clone)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        if !x.is_finite() {
            self.partials.push(x);
            return;
        }
        let mut x = x;
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn value(&self) -> f64 {
        // Partials are non-overlapping and sorted by increasing magnitude;
        // summing smallest-first returns the correctly rounded total.
        self.partials.iter().sum()
    }
}

/// Exact (correctly rounded) sum of the given values.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = ExactSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Solves a tridiagonal system `A x = d` with the Thomas algorithm.
///
/// `lower[i]` multiplies `x[i-1]`, `diag[i]` multiplies `x[i]` and `upper[i]`
/// multiplies `x[i+1]`. All slices have length `n`; `lower[0]` and
/// `upper[n-1]` are ignored. The systems solved here come from `I + AᵀA`
/// averaging operators and are strictly diagonally dominant, so no pivoting
/// is required.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    assert!(n > 0 && lower.len() == n && upper.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Solves a cyclic tridiagonal system (periodic wrap between first and last
/// unknown) via the Sherman-Morrison correction on top of [`solve_tridiagonal`].
///
/// `corner_lower` is the coefficient of `x[n-1]` in the first equation and
/// `corner_upper` the coefficient of `x[0]` in the last equation.
pub fn solve_cyclic_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    corner_lower: f64,
    corner_upper: f64,
    rhs: &[f64],
) -> Vec<f64> {
    let n = diag.len();
    assert!(n >= 2);
    if n == 2 {
        // Wrap coefficients collide with the ordinary bands; solve 2x2 directly.
        let a = diag[0];
        let b = upper[0] + corner_lower;
        let c = lower[1] + corner_upper;
        let d = diag[1];
        let det = a * d - b * c;
        return vec![
            (rhs[0] * d - b * rhs[1]) / det,
            (a * rhs[1] - c * rhs[0]) / det,
        ];
    }
    let gamma = -diag[0];
    let mut dmod = diag.to_vec();
    dmod[0] = diag[0] - gamma;
    dmod[n - 1] = diag[n - 1] - corner_lower * corner_upper / gamma;
    let y = solve_tridiagonal(lower, &dmod, upper, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = corner_upper;
    let z = solve_tridiagonal(lower, &dmod, upper, &u);
    let fact = (y[0] + corner_lower * y[n - 1] / gamma)
        / (1.0 + z[0] + corner_lower * z[n - 1] / gamma);
    y.iter().zip(z.iter()).map(|(yi, zi)| yi - fact * zi).collect()
}

/// Outcome of a conjugate gradient solve.
#[derive(Debug, Clone)]
pub struct CgResult {
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    /// True when the residual stopped decreasing long before the tolerance,
    /// the typical signature of an inconsistent or rank-deficient system.
    pub stagnated: bool,
}

/// Preconditioned conjugate gradient for a symmetric positive semi-definite
/// operator given as a closure `apply(x, out)`.
///
/// `x` carries the warm start on entry and the solution on exit. Convergence
/// is declared on the max-norm of the residual falling below `tol`
/// (absolute). `precond_diag`, when given, is used as a Jacobi preconditioner.
pub fn conjugate_gradient<F>(
    apply: F,
    b: &[f64],
    x: &mut [f64],
    precond_diag: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> CgResult
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    assert_eq!(x.len(), n);
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect();
    let prec = |r: &[f64], z: &mut [f64]| match precond_diag {
        Some(d) => {
            for i in 0..r.len() {
                z[i] = if d[i] > 0.0 { r[i] / d[i] } else { r[i] };
            }
        }
        None => z.copy_from_slice(r),
    };
    let maxnorm = |v: &[f64]| v.iter().fold(0.0f64, |m, &t| m.max(t.abs()));

    let mut res_norm = maxnorm(&r);
    if res_norm <= tol {
        return CgResult { iterations: 0, residual_norm: res_norm, converged: true, stagnated: false };
    }
    let mut z = vec![0.0; n];
    prec(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
    let mut best = res_norm;
    let mut since_best = 0usize;

    for it in 1..=max_iters {
        apply(&p, &mut ax);
        let pap: f64 = p.iter().zip(ax.iter()).map(|(a, b)| a * b).sum();
        if pap <= 0.0 || !pap.is_finite() {
            // Semi-definite breakdown; report whatever we have.
            return CgResult { iterations: it, residual_norm: res_norm, converged: res_norm <= tol, stagnated: true };
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
        }
        res_norm = maxnorm(&r);
        if res_norm <= tol {
            return CgResult { iterations: it, residual_norm: res_norm, converged: true, stagnated: false };
        }
        if res_norm < 0.5 * best {
            best = res_norm;
            since_best = 0;
        } else {
            since_best += 1;
        }
        // No halving of the residual for a long stretch on a small system is
        // stagnation, not slow convergence.
        if since_best > 50 + 2 * n {
            return CgResult { iterations: it, residual_norm: res_norm, converged: false, stagnated: true };
        }
        prec(&r, &mut z);
        let rz_new: f64 = r.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgResult { iterations: max_iters, residual_norm: res_norm, converged: false, stagnated: false }
}

/// Solves a small dense symmetric system by Gaussian elimination with partial
/// pivoting and returns the solution together with the 1-norm condition
/// number (computed from the explicit inverse; only used for d×d Gram
/// systems with d of a handful).
pub fn solve_dense_with_condition(a: &[Vec<f64>], b: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = b.len();
    assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    // Augment with the identity to recover the inverse alongside the solution.
    let mut m = vec![vec![0.0; 2 * n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = a[i][j];
        }
        m[i][n + i] = 1.0;
        m[i][2 * n] = b[i];
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() == 0.0 {
            return None;
        }
        m.swap(col, pivot);
        let pv = m[col][col];
        for j in col..=2 * n {
            m[col][j] /= pv;
        }
        for i in 0..n {
            if i != col && m[i][col] != 0.0 {
                let f = m[i][col];
                for j in col..=2 * n {
                    m[i][j] -= f * m[col][j];
                }
            }
        }
    }
    let x: Vec<f64> = (0..n).map(|i| m[i][2 * n]).collect();
    let norm1 = |get: &dyn Fn(usize, usize) -> f64| {
        (0..n)
            .map(|j| (0..n).map(|i| get(i, j).abs()).sum::<f64>())
            .fold(0.0f64, f64::max)
    };
    let na = norm1(&|i, j| a[i][j]);
    let ninv = norm1(&|i, j| m[i][n + j]);
    Some((x, na * ninv))
}
