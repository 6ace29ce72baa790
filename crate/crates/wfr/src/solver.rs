//! Douglas-Rachford splitting for the discrete constrained
//! Wasserstein-Fisher-Rao problem.
//!
//! The unknowns are a staggered triple `u = (ρ, ω, ζ)` and a centered copy
//! `v`. The objective splits as
//!
//! * `G₁(u, v) = ι_{Bu = b}(u) + Σ f_δ(v)` — the affine set stacks the
//!   interior continuity rows, the endpoint rows and the affine constraint
//!   rows into one operator `B`, so its prox is one exact Euclidean
//!   projection `u − Bᵀ(BBᵀ)⁻¹(Bu − b)`, computed matrix-free with a
//!   Jacobi-preconditioned conjugate gradient warm-started across
//!   iterations. The `f_δ` sum separates over grid points where its prox is
//!   the paraboloid projection.
//! * `G₂(u, v) = ι_{v = I(u)}` — the interpolation graph, projected exactly
//!   with per-line tridiagonal (interval) or cyclic tridiagonal (circle)
//!   solves.
//!
//! Both proxes are exact, so the scheme needs no step-size bound. The dual
//! potential `φ` is read off the continuity-row multipliers of the final
//! projection, the constraint multipliers `ψ` off the constraint rows.

use ndarray::Array2;

use crate::energy::{path_energy, prox_f_delta, CostPoint};
use crate::error::WfrError;
use crate::grid::{
    interp_to_centered, CenteredFields, DomainKind, SpatialGrid, StaggeredFields, TimeGrid,
};
use crate::measures::{check_feasibility, constraint_eval, ConstraintSpec, DiscreteMeasure};
use crate::numerics::{conjugate_gradient, solve_cyclic_tridiagonal, solve_tridiagonal};
use crate::paths::PathTriple;

/// A constrained unbalanced transport problem instance.
#[derive(Debug, Clone)]
pub struct Problem {
    pub rho0: DiscreteMeasure,
    pub rho1: DiscreteMeasure,
    pub spec: ConstraintSpec,
    pub delta: f64,
    pub grid: SpatialGrid,
    pub tgrid: TimeGrid,
    /// Classical Benamou-Brenier mode: the source ζ is frozen to zero
    /// structurally (the unknown is eliminated, not constrained).
    pub balanced: bool,
    pub feasibility_tol: f64,
}

impl Problem {
    pub fn new(
        rho0: DiscreteMeasure,
        rho1: DiscreteMeasure,
        spec: ConstraintSpec,
        delta: f64,
        grid: SpatialGrid,
        tgrid: TimeGrid,
        balanced: bool,
    ) -> Result<Self, WfrError> {
        if delta <= 0.0 {
            return Err(WfrError::Params(
                "delta must be strictly positive (the pure Wasserstein limit is reached via balanced mode)"
                    .into(),
            ));
        }
        if rho0.grid != grid || rho1.grid != grid {
            return Err(WfrError::Params("endpoint measures live on a different grid".into()));
        }
        if spec.f_values.dim().0 != tgrid.n_steps + 1 {
            return Err(WfrError::Params("constraint spec sampled on a different time grid".into()));
        }
        Ok(Self { rho0, rho1, spec, delta, grid, tgrid, balanced, feasibility_tol: 1e-8 })
    }

    /// Endpoint feasibility: the affine constraint at `t ∈ {0, 1}` and, in
    /// balanced mode, equality of total masses.
    pub fn check_feasible(&self) -> Result<(), WfrError> {
        if self.spec.d > 0 {
            let rep = check_feasibility(&self.spec, &self.rho0, &self.rho1, self.feasibility_tol);
            if !rep.feasible {
                return Err(WfrError::Infeasible {
                    max_residual: rep.max_residual(),
                    tol: self.feasibility_tol,
                });
            }
        }
        if self.balanced {
            let gap = (self.rho0.total_mass() - self.rho1.total_mass()).abs();
            if gap > self.feasibility_tol {
                return Err(WfrError::Infeasible { max_residual: gap, tol: self.feasibility_tol });
            }
        }
        Ok(())
    }
}

/// Douglas-Rachford parameters. Defaults follow the recorded tuning:
/// `γ = 1/δ`, relaxation 1.8, CG tolerance 1e−10, fixed-point tolerance
/// 1e−7, at most 20000 iterations.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SolverParams {
    pub max_iters: usize,
    /// DR step γ.
    pub dr_step: f64,
    /// Over-relaxation in (0, 2].
    pub relaxation: f64,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub fixed_point_tol: f64,
    pub log_every: usize,
}

impl SolverParams {
    pub fn for_delta(delta: f64) -> Self {
        Self {
            max_iters: 20000,
            dr_step: 1.0 / delta,
            relaxation: 1.8,
            cg_tol: 1e-10,
            cg_max_iters: 40000,
            fixed_point_tol: 1e-7,
            log_every: 100,
        }
    }

    pub fn validate(&self) -> Result<(), WfrError> {
        if self.dr_step <= 0.0 {
            return Err(WfrError::Params("dr_step must be positive".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 2.0) {
            return Err(WfrError::Params("relaxation must lie in (0, 2]".into()));
        }
        if self.cg_tol <= 0.0 || self.fixed_point_tol <= 0.0 {
            return Err(WfrError::Params("tolerances must be positive".into()));
        }
        if self.max_iters == 0 || self.cg_max_iters == 0 {
            return Err(WfrError::Params("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the convergence log.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LogRow {
    pub iteration: usize,
    pub dr_residual: f64,
    pub energy: f64,
    pub ce_residual: f64,
    pub constraint_residual: f64,
}

/// Solver output: the primal path, its energy/distance, the recovered dual
/// fields and the convergence log.
#[derive(Debug, Clone)]
pub struct Solution {
    pub path: PathTriple,
    /// Value of the discrete constrained energy (a squared distance).
    pub energy: f64,
    /// `√energy`.
    pub distance: f64,
    /// Dual potential estimate at time midpoints × cells.
    pub phi: Array2<f64>,
    /// Constraint multiplier estimate at time nodes × d (endpoints padded
    /// from their neighbors; constraint rows act on interior nodes).
    pub psi: Array2<f64>,
    pub log: Vec<LogRow>,
    pub iterations: usize,
    pub converged: bool,
    pub dr_residual: f64,
    pub ce_residual: f64,
    pub constraint_residual: f64,
    /// Largest negative density clamped when reporting frames.
    pub clamp_magnitude: f64,
}

/// Returns clones of the recovered dual fields `(φ, ψ)`.
pub fn recover_potential(solution: &Solution) -> (Array2<f64>, Array2<f64>) {
    (solution.phi.clone(), solution.psi.clone())
}

/// The stacked affine operator `B` (continuity interior rows, endpoint
/// rows, constraint rows at interior time nodes) applied matrix-free.
struct AffineOperator<'a> {
    problem: &'a Problem,
    n_ce: usize,
    n_endpoint: usize,
    n_constraint: usize,
}

impl<'a> AffineOperator<'a> {
    fn new(problem: &'a Problem) -> Self {
        let s = problem.tgrid.n_steps;
        let n = problem.grid.n_cells;
        let d = problem.spec.d;
        let interior_nodes = s.saturating_sub(1);
        Self {
            problem,
            n_ce: s * n,
            n_endpoint: 2 * n,
            n_constraint: d * interior_nodes,
        }
    }

    fn rows(&self) -> usize {
        self.n_ce + self.n_endpoint + self.n_constraint
    }

    fn ce_row(&self, k: usize, j: usize) -> usize {
        k * self.problem.grid.n_cells + j
    }

    fn e0_row(&self, j: usize) -> usize {
        self.n_ce + j
    }

    fn e1_row(&self, j: usize) -> usize {
        self.n_ce + self.problem.grid.n_cells + j
    }

    /// Constraint row for interior node `k ∈ 1..n_steps` and component `i`.
    fn constraint_row(&self, k: usize, i: usize) -> usize {
        self.n_ce + self.n_endpoint + (k - 1) * self.problem.spec.d + i
    }

    fn rhs(&self) -> Vec<f64> {
        let p = self.problem;
        let (s, n, d) = (p.tgrid.n_steps, p.grid.n_cells, p.spec.d);
        let mut b = vec![0.0; self.rows()];
        for j in 0..n {
            b[self.e0_row(j)] = p.rho0.density[j];
            b[self.e1_row(j)] = p.rho1.density[j];
        }
        for k in 1..s {
            for i in 0..d {
                b[self.constraint_row(k, i)] = p.spec.f_values[[k, i]];
            }
        }
        b
    }

    fn apply_b(&self, u: &StaggeredFields, out: &mut [f64]) {
        let p = self.problem;
        let (s, n, d) = (p.tgrid.n_steps, p.grid.n_cells, p.spec.d);
        let dt = p.tgrid.dt;
        let dx = p.grid.cell_width;
        for k in 0..s {
            for j in 0..n {
                let right = match p.grid.kind {
                    DomainKind::Interval => u.omega[[k, j + 1]],
                    DomainKind::Circle => u.omega[[k, (j + 1) % n]],
                };
                let div = (right - u.omega[[k, j]]) / dx;
                let zeta = if p.balanced { 0.0 } else { u.zeta[[k, j]] };
                out[self.ce_row(k, j)] = (u.rho[[k + 1, j]] - u.rho[[k, j]]) / dt + div - zeta;
            }
        }
        for j in 0..n {
            out[self.e0_row(j)] = u.rho[[0, j]];
            out[self.e1_row(j)] = u.rho[[s, j]];
        }
        for k in 1..s {
            for i in 0..d {
                let h = p.spec.h_values.index_axis(ndarray::Axis(0), i);
                let mut acc = 0.0;
                for j in 0..n {
                    acc += h[[k, j]] * u.rho[[k, j]];
                }
                out[self.constraint_row(k, i)] = acc * dx;
            }
        }
    }

    fn apply_bt(&self, y: &[f64], w: &mut StaggeredFields) {
        let p = self.problem;
        let (s, n, d) = (p.tgrid.n_steps, p.grid.n_cells, p.spec.d);
        let dt = p.tgrid.dt;
        let dx = p.grid.cell_width;
        w.rho.fill(0.0);
        w.omega.fill(0.0);
        w.zeta.fill(0.0);
        for k in 0..=s {
            for j in 0..n {
                let mut acc = 0.0;
                if k >= 1 {
                    acc += y[self.ce_row(k - 1, j)] / dt;
                }
                if k < s {
                    acc -= y[self.ce_row(k, j)] / dt;
                }
                if k == 0 {
                    acc += y[self.e0_row(j)];
                }
                if k == s {
                    acc += y[self.e1_row(j)];
                }
                if d > 0 && k >= 1 && k < s {
                    for i in 0..d {
                        let h = p.spec.h_values.index_axis(ndarray::Axis(0), i);
                        acc += y[self.constraint_row(k, i)] * h[[k, j]] * dx;
                    }
                }
                w.rho[[k, j]] = acc;
            }
        }
        for k in 0..s {
            match p.grid.kind {
                DomainKind::Interval => {
                    for f in 1..n {
                        w.omega[[k, f]] =
                            (y[self.ce_row(k, f - 1)] - y[self.ce_row(k, f)]) / dx;
                    }
                }
                DomainKind::Circle => {
                    for f in 0..n {
                        let left = (f + n - 1) % n;
                        w.omega[[k, f]] = (y[self.ce_row(k, left)] - y[self.ce_row(k, f)]) / dx;
                    }
                }
            }
            if !p.balanced {
                for j in 0..n {
                    w.zeta[[k, j]] = -y[self.ce_row(k, j)];
                }
            }
        }
    }

    /// Diagonal of `BBᵀ` for Jacobi preconditioning.
    fn bbt_diag(&self) -> Vec<f64> {
        let p = self.problem;
        let (s, n, d) = (p.tgrid.n_steps, p.grid.n_cells, p.spec.d);
        let dt2 = p.tgrid.dt * p.tgrid.dt;
        let dx = p.grid.cell_width;
        let dx2 = dx * dx;
        let mut diag = vec![0.0; self.rows()];
        for k in 0..s {
            for j in 0..n {
                let faces = match p.grid.kind {
                    DomainKind::Circle => 2.0,
                    DomainKind::Interval => {
                        let mut c = 0.0;
                        if j > 0 {
                            c += 1.0; // left face is an unknown
                        }
                        if j + 1 < n {
                            c += 1.0; // right face is an unknown
                        }
                        c
                    }
                };
                let zeta = if p.balanced { 0.0 } else { 1.0 };
                diag[self.ce_row(k, j)] = 2.0 / dt2 + faces / dx2 + zeta;
            }
        }
        for j in 0..n {
            diag[self.e0_row(j)] = 1.0;
            diag[self.e1_row(j)] = 1.0;
        }
        for k in 1..s {
            for i in 0..d {
                let h = p.spec.h_values.index_axis(ndarray::Axis(0), i);
                let mut acc = 0.0;
                for j in 0..n {
                    acc += (h[[k, j]] * dx).powi(2);
                }
                diag[self.constraint_row(k, i)] = acc.max(1e-300);
            }
        }
        diag
    }
}

/// Euclidean projection of `u` onto the affine set `{Bu = b}`.
///
/// `warm_y` carries the row multipliers between calls; on return it holds
/// the multiplier of this projection (the source of the dual potential).
pub fn project_affine(
    u: &StaggeredFields,
    problem: &Problem,
    params: &SolverParams,
    warm_y: &mut Vec<f64>,
) -> Result<StaggeredFields, WfrError> {
    let op = AffineOperator::new(problem);
    if warm_y.len() != op.rows() {
        warm_y.clear();
        warm_y.resize(op.rows(), 0.0);
    }
    let b = op.rhs();
    let mut r = vec![0.0; op.rows()];
    op.apply_b(u, &mut r);
    for (ri, bi) in r.iter_mut().zip(b.iter()) {
        *ri -= bi;
    }
    let diag = op.bbt_diag();
    let scratch = std::cell::RefCell::new(StaggeredFields::zeros(&problem.grid, &problem.tgrid));
    let apply = |y: &[f64], out: &mut [f64]| {
        let mut scratch = scratch.borrow_mut();
        op.apply_bt(y, &mut scratch);
        op.apply_b(&scratch, out);
    };
    let result = conjugate_gradient(apply, &r, warm_y, Some(&diag), params.cg_tol, params.cg_max_iters);
    if !result.converged {
        let hint = if result.stagnated {
            "; the system looks rank-deficient or inconsistent — remove linearly dependent \
             constraint rows (or mass-incompatible balanced constraints)"
        } else {
            ""
        };
        return Err(WfrError::CgFailure {
            iters: result.iterations,
            residual: result.residual_norm,
            tol: params.cg_tol,
            hint: hint.into(),
        });
    }
    let mut w = StaggeredFields::zeros(&problem.grid, &problem.tgrid);
    let op2 = AffineOperator::new(problem);
    op2.apply_bt(warm_y, &mut w);
    let mut out = u.clone();
    out.rho -= &w.rho;
    out.omega -= &w.omega;
    out.zeta -= &w.zeta;
    Ok(out)
}

/// Exact projection onto the interpolation graph `{(u, v) : v = I(u)}`:
/// minimizes `‖u − u₀‖² + ‖v − v₀‖²` via per-cell tridiagonal solves in
/// time for ρ, per-midpoint (cyclic) tridiagonal solves in space for ω, and
/// the closed form for the pass-through ζ.
pub fn project_interp_graph(
    u0: &StaggeredFields,
    v0: &CenteredFields,
    grid: &SpatialGrid,
    tgrid: &TimeGrid,
) -> (StaggeredFields, CenteredFields) {
    let (s, n) = (tgrid.n_steps, grid.n_cells);
    let mut u = StaggeredFields::zeros(grid, tgrid);

    // Density: (I + AᵀA) x = u0 + Aᵀ v0 along each cell's time line.
    {
        let mut lower = vec![0.25; s + 1];
        let mut diag = vec![1.5; s + 1];
        let mut upper = vec![0.25; s + 1];
        diag[0] = 1.25;
        diag[s] = 1.25;
        lower[0] = 0.0;
        upper[s] = 0.0;
        let mut rhs = vec![0.0; s + 1];
        for j in 0..n {
            for k in 0..=s {
                let mut acc = u0.rho[[k, j]];
                if k >= 1 {
                    acc += 0.5 * v0.rho[[k - 1, j]];
                }
                if k < s {
                    acc += 0.5 * v0.rho[[k, j]];
                }
                rhs[k] = acc;
            }
            let x = solve_tridiagonal(&lower, &diag, &upper, &rhs);
            for k in 0..=s {
                u.rho[[k, j]] = x[k];
            }
        }
    }

    // Momentum: per midpoint, over the unknown faces.
    match grid.kind {
        DomainKind::Interval => {
            if n >= 2 {
                let m = n - 1;
                let mut lower = vec![0.25; m];
                let diag = vec![1.5; m];
                let mut upper = vec![0.25; m];
                lower[0] = 0.0;
                upper[m - 1] = 0.0;
                let mut rhs = vec![0.0; m];
                for k in 0..s {
                    for f in 1..n {
                        rhs[f - 1] = u0.omega[[k, f]]
                            + 0.5 * (v0.omega[[k, f - 1]] + v0.omega[[k, f]]);
                    }
                    let x = solve_tridiagonal(&lower, &diag, &upper, &rhs);
                    for f in 1..n {
                        u.omega[[k, f]] = x[f - 1];
                    }
                }
            }
        }
        DomainKind::Circle => {
            let lower = vec![0.25; n];
            let diag = vec![1.5; n];
            let upper = vec![0.25; n];
            let mut rhs = vec![0.0; n];
            for k in 0..s {
                for f in 0..n {
                    let left_cell = (f + n - 1) % n;
                    rhs[f] = u0.omega[[k, f]] + 0.5 * (v0.omega[[k, left_cell]] + v0.omega[[k, f]]);
                }
                let x = solve_cyclic_tridiagonal(&lower, &diag, &upper, 0.25, 0.25, &rhs);
                for f in 0..n {
                    u.omega[[k, f]] = x[f];
                }
            }
        }
    }

    // Source: identity coupling.
    for k in 0..s {
        for j in 0..n {
            u.zeta[[k, j]] = 0.5 * (u0.zeta[[k, j]] + v0.zeta[[k, j]]);
        }
    }

    let v = interp_to_centered(&u, grid, tgrid);
    (u, v)
}

fn pointwise_prox(v: &CenteredFields, tau: f64, delta: f64, grid: &SpatialGrid, tgrid: &TimeGrid) -> CenteredFields {
    let mut out = CenteredFields::zeros(grid, tgrid);
    for k in 0..tgrid.n_steps {
        for j in 0..grid.n_cells {
            let p = CostPoint::new(v.rho[[k, j]], v.omega[[k, j]], v.zeta[[k, j]]);
            let q = prox_f_delta(p, tau, delta);
            out.rho[[k, j]] = q.a;
            out.omega[[k, j]] = q.b;
            out.zeta[[k, j]] = q.c;
        }
    }
    out
}

fn max_abs(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimizes the constrained WFR energy by relaxed Douglas-Rachford
/// splitting. Fails fast on infeasible endpoints; afterwards every iterate
/// returned satisfies the continuity and constraint rows to CG tolerance.
pub fn solve(problem: &Problem, params: &SolverParams) -> Result<Solution, WfrError> {
    params.validate()?;
    problem.check_feasible()?;
    let grid = &problem.grid;
    let tgrid = &problem.tgrid;
    let (s, n) = (tgrid.n_steps, grid.n_cells);
    let tau = params.dr_step / (tgrid.dt * grid.cell_width);

    let mut s_u = StaggeredFields::zeros(grid, tgrid);
    let mut s_v = CenteredFields::zeros(grid, tgrid);
    let mut warm_y: Vec<f64> = Vec::new();
    let mut log = Vec::new();

    let total_entries = ((s + 1) * n + s * grid.n_faces() + 2 * s * n + 3 * s * n) as f64;

    let mut x_u = StaggeredFields::zeros(grid, tgrid);
    let mut x_v = CenteredFields::zeros(grid, tgrid);
    let mut dr_residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for iter in 1..=params.max_iters {
        iterations = iter;
        x_u = project_affine(&s_u, problem, params, &mut warm_y)?;
        x_v = pointwise_prox(&s_v, tau, problem.delta, grid, tgrid);

        let refl_u = {
            let mut r = x_u.clone();
            r.rho = &r.rho * 2.0 - &s_u.rho;
            r.omega = &r.omega * 2.0 - &s_u.omega;
            r.zeta = &r.zeta * 2.0 - &s_u.zeta;
            r
        };
        let refl_v = {
            let mut r = x_v.clone();
            r.rho = &r.rho * 2.0 - &s_v.rho;
            r.omega = &r.omega * 2.0 - &s_v.omega;
            r.zeta = &r.zeta * 2.0 - &s_v.zeta;
            r
        };
        let (z_u, z_v) = project_interp_graph(&refl_u, &refl_v, grid, tgrid);

        let mut sq = 0.0;
        let mut accum = |a: &Array2<f64>, b: &Array2<f64>| {
            for (x, y) in a.iter().zip(b.iter()) {
                let d = x - y;
                sq += d * d;
            }
        };
        accum(&z_u.rho, &x_u.rho);
        accum(&z_u.omega, &x_u.omega);
        accum(&z_u.zeta, &x_u.zeta);
        accum(&z_v.rho, &x_v.rho);
        accum(&z_v.omega, &x_v.omega);
        accum(&z_v.zeta, &x_v.zeta);
        dr_residual = (sq / total_entries).sqrt();

        let lam = params.relaxation;
        s_u.rho = &s_u.rho + &((&z_u.rho - &x_u.rho) * lam);
        s_u.omega = &s_u.omega + &((&z_u.omega - &x_u.omega) * lam);
        s_u.zeta = &s_u.zeta + &((&z_u.zeta - &x_u.zeta) * lam);
        s_v.rho = &s_v.rho + &((&z_v.rho - &x_v.rho) * lam);
        s_v.omega = &s_v.omega + &((&z_v.omega - &x_v.omega) * lam);
        s_v.zeta = &s_v.zeta + &((&z_v.zeta - &x_v.zeta) * lam);

        let should_log = iter == 1 || iter % params.log_every == 0 || dr_residual <= params.fixed_point_tol || iter == params.max_iters;
        if should_log {
            let energy = path_energy(&x_v, grid, tgrid, problem.delta);
            let (ce_res, constr_res) = residuals_of(&x_u, problem);
            log.push(LogRow {
                iteration: iter,
                dr_residual,
                energy,
                ce_residual: ce_res,
                constraint_residual: constr_res,
            });
        }
        if dr_residual <= params.fixed_point_tol {
            converged = true;
            break;
        }
    }

    // x_u is the output of the last affine projection, so it is feasible to
    // CG tolerance already, and warm_y holds its multiplier — the source of
    // the dual potential below.
    let u_final = x_u;
    let (ce_residual, constraint_residual) = residuals_of(&u_final, problem);

    let energy = path_energy(&x_v, grid, tgrid, problem.delta);
    if !energy.is_finite() {
        return Err(WfrError::NonFiniteEnergy);
    }

    // Dual recovery from the multiplier of the last projection. With the
    // energy weighted as Σ f/(Δt·Δx) inside DR, the continuity-row
    // multiplier equals γ·φ/(Δt·Δx) and the constraint-row multiplier
    // −γ·ψ/(Δt·Δx²).
    let op = AffineOperator::new(problem);
    let scale = tgrid.dt * grid.cell_width / params.dr_step;
    let mut phi = Array2::zeros((s, n));
    for k in 0..s {
        for j in 0..n {
            phi[[k, j]] = warm_y[op.ce_row(k, j)] * scale;
        }
    }
    let d = problem.spec.d;
    let mut psi = Array2::zeros((s + 1, d));
    for k in 1..s {
        for i in 0..d {
            psi[[k, i]] = -warm_y[op.constraint_row(k, i)] * scale * grid.cell_width / tgrid.dt;
        }
    }
    if s >= 2 {
        for i in 0..d {
            psi[[0, i]] = psi[[1, i]];
            psi[[s, i]] = psi[[s - 1, i]];
        }
    }

    let clamp_magnitude = -u_final.rho.iter().fold(0.0f64, |m, &r| m.min(r));
    let path = PathTriple::from_staggered(u_final, grid, tgrid, problem.delta);

    Ok(Solution {
        path,
        energy,
        distance: energy.max(0.0).sqrt(),
        phi,
        psi,
        log,
        iterations,
        converged,
        dr_residual,
        ce_residual,
        constraint_residual,
        clamp_magnitude: clamp_magnitude.max(0.0),
    })
}

/// Max-norm continuity and constraint residuals of a staggered iterate.
fn residuals_of(u: &StaggeredFields, problem: &Problem) -> (f64, f64) {
    let (interior, e0, e1) = crate::grid::continuity_residual(
        u,
        problem.rho0.density.as_slice().unwrap(),
        problem.rho1.density.as_slice().unwrap(),
        &problem.grid,
        &problem.tgrid,
    );
    let mut ce = max_abs(interior.iter().copied());
    ce = ce.max(max_abs(e0.iter().copied()));
    ce = ce.max(max_abs(e1.iter().copied()));
    let constr = if problem.spec.d > 0 {
        let vals = constraint_eval(&problem.spec, &u.rho, problem.grid.cell_width);
        max_abs(vals.iter().copied())
    } else {
        0.0
    };
    (ce, constr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grids;
    use crate::measures::{constraint_preset, make_measure, ConstraintPreset, MassTarget, MeasurePreset};
    use crate::paths::teleport_path;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn scaling_problem(n_cells: usize, n_steps: usize) -> Problem {
        let (g, t) = build_grids(DomainKind::Interval, n_cells, n_steps).unwrap();
        let rho0 = make_measure(&MeasurePreset::Uniform { mass: 1.0 }, &g).unwrap();
        let rho1 = rho0.scaled(2.0);
        let spec = constraint_preset(
            &ConstraintPreset::TotalMass { f: MassTarget::Affine { a: 1.0, b: 1.0 } },
            &g,
            &t,
        )
        .unwrap();
        Problem::new(rho0, rho1, spec, 1.0, g, t, false).unwrap()
    }

    #[test]
    fn affine_projection_keeps_feasible_points() {
        let problem = scaling_problem(8, 8);
        let params = SolverParams::for_delta(1.0);
        // A feasible point: the scaling path.
        let f: Vec<f64> = problem.tgrid.nodes.iter().map(|&t| 1.0 + t).collect();
        let path = crate::paths::scaling_path(&problem.rho0, &f, &problem.grid, &problem.tgrid, 1.0).unwrap();
        let mut warm = Vec::new();
        let proj = project_affine(&path.staggered, &problem, &params, &mut warm).unwrap();
        let diff = max_abs(
            (&proj.rho - &path.staggered.rho)
                .iter()
                .chain((&proj.omega - &path.staggered.omega).iter())
                .chain((&proj.zeta - &path.staggered.zeta).iter())
                .copied(),
        );
        assert!(diff < 1e-10, "feasible point moved by {diff}");
    }

    #[test]
    fn affine_projection_residual_and_idempotence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let problem = scaling_problem(6, 5);
        let params = SolverParams::for_delta(1.0);
        let mut u = StaggeredFields::zeros(&problem.grid, &problem.tgrid);
        u.rho.mapv_inplace(|_| rng.random::<f64>());
        u.omega.mapv_inplace(|_| rng.random::<f64>() - 0.5);
        u.zeta.mapv_inplace(|_| rng.random::<f64>() - 0.5);
        for k in 0..problem.tgrid.n_steps {
            u.omega[[k, 0]] = 0.0;
            u.omega[[k, problem.grid.n_cells]] = 0.0;
        }
        let mut warm = Vec::new();
        let proj = project_affine(&u, &problem, &params, &mut warm).unwrap();
        let (ce, cons) = residuals_of(&proj, &problem);
        assert!(ce <= 10.0 * params.cg_tol, "ce residual {ce}");
        assert!(cons <= 10.0 * params.cg_tol, "constraint residual {cons}");
        let again = project_affine(&proj, &problem, &params, &mut warm).unwrap();
        let diff = max_abs((&again.rho - &proj.rho).iter().copied());
        assert!(diff <= 10.0 * params.cg_tol, "projection moved twice by {diff}");
    }

    #[test]
    fn graph_projection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for kind in [DomainKind::Interval, DomainKind::Circle] {
            let (g, t) = build_grids(kind, 5, 4).unwrap();
            let mut u0 = StaggeredFields::zeros(&g, &t);
            u0.rho.mapv_inplace(|_| rng.random::<f64>());
            u0.omega.mapv_inplace(|_| rng.random::<f64>() - 0.5);
            u0.zeta.mapv_inplace(|_| rng.random::<f64>() - 0.5);
            if kind == DomainKind::Interval {
                for k in 0..t.n_steps {
                    u0.omega[[k, 0]] = 0.0;
                    u0.omega[[k, g.n_cells]] = 0.0;
                }
            }
            // Fixed point: (u0, I u0).
            let v0 = interp_to_centered(&u0, &g, &t);
            let (u, v) = project_interp_graph(&u0, &v0, &g, &t);
            assert!(max_abs((&u.rho - &u0.rho).iter().copied()) < 1e-12);
            assert!(max_abs((&u.omega - &u0.omega).iter().copied()) < 1e-12);
            let iv = interp_to_centered(&u, &g, &t);
            assert!(max_abs((&iv.rho - &v.rho).iter().copied()) < 1e-14);

            // General point: output satisfies v = I(u) exactly.
            let mut v1 = CenteredFields::zeros(&g, &t);
            v1.rho.mapv_inplace(|_| rng.random::<f64>());
            v1.omega.mapv_inplace(|_| rng.random::<f64>() - 0.5);
            v1.zeta.mapv_inplace(|_| rng.random::<f64>() - 0.5);
            let (u2, v2) = project_interp_graph(&u0, &v1, &g, &t);
            let iv2 = interp_to_centered(&u2, &g, &t);
            assert!(max_abs((&iv2.rho - &v2.rho).iter().copied()) < 1e-14);
            assert!(max_abs((&iv2.omega - &v2.omega).iter().copied()) < 1e-14);
        }
    }

    #[test]
    fn graph_projection_matches_dense_least_squares() {
        // 4-cell, 2-step instance checked against dense normal equations
        // assembled by brute force from unit vectors.
        let (g, t) = build_grids(DomainKind::Interval, 4, 2).unwrap();
        let n_unknowns = (t.n_steps + 1) * g.n_cells + t.n_steps * (g.n_cells - 1) + t.n_steps * g.n_cells;
        let pack = |u: &StaggeredFields| -> Vec<f64> {
            let mut x = Vec::new();
            x.extend(u.rho.iter());
            for k in 0..t.n_steps {
                for f in 1..g.n_cells {
                    x.push(u.omega[[k, f]]);
                }
            }
            x.extend(u.zeta.iter());
            x
        };
        let unpack = |x: &[f64]| -> StaggeredFields {
            let mut u = StaggeredFields::zeros(&g, &t);
            let mut it = x.iter();
            for k in 0..=t.n_steps {
                for j in 0..g.n_cells {
                    u.rho[[k, j]] = *it.next().unwrap();
                }
            }
            for k in 0..t.n_steps {
                for f in 1..g.n_cells {
                    u.omega[[k, f]] = *it.next().unwrap();
                }
            }
            for k in 0..t.n_steps {
                for j in 0..g.n_cells {
                    u.zeta[[k, j]] = *it.next().unwrap();
                }
            }
            u
        };
        // Interpolation matrix by columns.
        let n_v = 3 * t.n_steps * g.n_cells;
        let mut imat = vec![vec![0.0; n_unknowns]; n_v];
        for col in 0..n_unknowns {
            let mut e = vec![0.0; n_unknowns];
            e[col] = 1.0;
            let u = unpack(&e);
            let v = interp_to_centered(&u, &g, &t);
            let mut row_idx = 0;
            for arr in [&v.rho, &v.omega, &v.zeta] {
                for val in arr.iter() {
                    imat[row_idx][col] = *val;
                    row_idx += 1;
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u0_vec: Vec<f64> = (0..n_unknowns).map(|_| rng.random::<f64>() - 0.5).collect();
        let v0_vec: Vec<f64> = (0..n_v).map(|_| rng.random::<f64>() - 0.5).collect();
        // Dense solve of (I + AᵀA) x = u0 + Aᵀ v0.
        let mut normal = vec![vec![0.0; n_unknowns]; n_unknowns];
        let mut rhs = vec![0.0; n_unknowns];
        for i in 0..n_unknowns {
            normal[i][i] = 1.0;
            rhs[i] = u0_vec[i];
        }
        for r in 0..n_v {
            for i in 0..n_unknowns {
                if imat[r][i] == 0.0 {
                    continue;
                }
                rhs[i] += imat[r][i] * v0_vec[r];
                for j in 0..n_unknowns {
                    normal[i][j] += imat[r][i] * imat[r][j];
                }
            }
        }
        let (x_dense, _) = crate::numerics::solve_dense_with_condition(&normal, &rhs).unwrap();

        let u0 = unpack(&u0_vec);
        let mut v0 = CenteredFields::zeros(&g, &t);
        let mut it = v0_vec.iter();
        for arr in [&mut v0.rho, &mut v0.omega, &mut v0.zeta] {
            for val in arr.iter_mut() {
                *val = *it.next().unwrap();
            }
        }
        let (u_fast, _) = project_interp_graph(&u0, &v0, &g, &t);
        let fast = pack(&u_fast);
        for (a, b) in fast.iter().zip(x_dense.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn solve_rejects_infeasible_endpoints() {
        let (g, t) = build_grids(DomainKind::Interval, 8, 8).unwrap();
        let rho0 = make_measure(&MeasurePreset::Uniform { mass: 1.0 }, &g).unwrap();
        let rho1 = make_measure(&MeasurePreset::Uniform { mass: 3.0 }, &g).unwrap();
        let spec = constraint_preset(
            &ConstraintPreset::TotalMass { f: MassTarget::Affine { a: 1.0, b: 1.0 } },
            &g,
            &t,
        )
        .unwrap();
        let problem = Problem::new(rho0, rho1, spec, 1.0, g, t, false).unwrap();
        let err = solve(&problem, &SolverParams::for_delta(1.0)).unwrap_err();
        assert!(matches!(err, WfrError::Infeasible { .. }));
    }

    #[test]
    fn solve_scaling_problem_small_grid() {
        let problem = scaling_problem(16, 16);
        let mut params = SolverParams::for_delta(1.0);
        params.fixed_point_tol = 1e-6;
        let sol = solve(&problem, &params).unwrap();
        let target = 0.5 * std::f64::consts::LN_2;
        assert!(
            (sol.energy - target).abs() < 0.05 * target,
            "energy {} vs {target}",
            sol.energy
        );
        assert!(sol.ce_residual <= 1e-8);
        assert!(sol.constraint_residual <= 1e-8);
        assert_eq!(sol.distance, sol.energy.sqrt());
    }

    #[test]
    fn solve_energy_below_teleport_bound() {
        // Linear constraint H(x) = x − 1/2, F ≡ 0, symmetric endpoints.
        let (g, t) = build_grids(DomainKind::Interval, 16, 16).unwrap();
        let spec = constraint_preset(
            &ConstraintPreset::Moment { roots: vec![0.5], value: 0.0 },
            &g,
            &t,
        )
        .unwrap();
        let mk = |mass: f64| {
            make_measure(
                &MeasurePreset::Mixture(vec![
                    MeasurePreset::Bump { center: 0.3, width: 0.06, mass: mass / 2.0 },
                    MeasurePreset::Bump { center: 0.7, width: 0.06, mass: mass / 2.0 },
                ]),
                &g,
            )
            .unwrap()
        };
        let rho0 = mk(1.0);
        let rho1 = mk(1.5);
        let delta = 1.0;
        let problem = Problem::new(rho0.clone(), rho1.clone(), spec, delta, g.clone(), t.clone(), false).unwrap();
        let mut params = SolverParams::for_delta(delta);
        params.fixed_point_tol = 1e-6;
        let sol = solve(&problem, &params).unwrap();
        let teleport = teleport_path(&rho0, &rho1, &g, &t, delta).unwrap();
        assert!(
            sol.energy <= 1.01 * teleport.energy(),
            "solver {} vs teleport {}",
            sol.energy,
            teleport.energy()
        );
    }

    #[test]
    fn recovered_potential_matches_scaling_certificate() {
        let problem = scaling_problem(24, 24);
        let mut params = SolverParams::for_delta(1.0);
        params.fixed_point_tol = 5e-8;
        let sol = solve(&problem, &params).unwrap();
        // phi(t) = delta^2 F'/F = 1/(1+t), constant in space.
        let t = &problem.tgrid;
        let mut worst: f64 = 0.0;
        for k in (t.n_steps / 4)..(3 * t.n_steps / 4) {
            let want = 1.0 / (1.0 + t.midpoints[k]);
            for j in 0..problem.grid.n_cells {
                worst = worst.max((sol.phi[[k, j]] - want).abs() / want);
            }
        }
        assert!(worst < 0.05, "interior phi deviation {worst}");
    }

    #[test]
    fn zero_problem_has_zero_potential() {
        let (g, t) = build_grids(DomainKind::Interval, 12, 8).unwrap();
        let rho = make_measure(&MeasurePreset::Bump { center: 0.5, width: 0.1, mass: 1.0 }, &g).unwrap();
        let spec = constraint_preset(
            &ConstraintPreset::TotalMass { f: MassTarget::Constant(1.0) },
            &g,
            &t,
        )
        .unwrap();
        let problem = Problem::new(rho.clone(), rho, spec, 1.0, g, t, false).unwrap();
        let sol = solve(&problem, &SolverParams::for_delta(1.0)).unwrap();
        assert!(sol.energy < 1e-10, "energy {}", sol.energy);
        let max_phi = max_abs(sol.phi.iter().copied());
        assert!(max_phi < 1e-4, "phi magnitude {max_phi}");
    }
}
