//! Discrete measures, measure presets, affine constraint specifications and
//! endpoint feasibility checks.

use ndarray::{Array1, Array2, Array3};

use crate::error::WfrError;
use crate::grid::{DomainKind, SpatialGrid, TimeGrid};
use crate::numerics::exact_sum;

/// Nonnegative density samples on the cells of a [`SpatialGrid`]. The mass
/// of cell `j` is `density[j] · Δx`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub grid: SpatialGrid,
    pub density: Array1<f64>,
}

impl DiscreteMeasure {
    pub fn from_density(grid: &SpatialGrid, density: Vec<f64>) -> Result<Self, WfrError> {
        if density.len() != grid.n_cells {
            return Err(WfrError::Measure(format!(
                "density has {} entries, grid has {} cells",
                density.len(),
                grid.n_cells
            )));
        }
        if let Some(bad) = density.iter().find(|&&d| d < 0.0 || !d.is_finite()) {
            return Err(WfrError::Measure(format!("density entries must be finite and ≥ 0, found {bad}")));
        }
        Ok(Self { grid: grid.clone(), density: Array1::from_vec(density) })
    }

    pub fn total_mass(&self) -> f64 {
        self.grid.cell_width * exact_sum(self.density.iter().copied())
    }

    /// Same measure scaled by a nonnegative factor.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { grid: self.grid.clone(), density: self.density.mapv(|d| factor * d) }
    }
}

/// Measure presets used as fixtures and CLI inputs.
#[derive(Debug, Clone)]
pub enum MeasurePreset {
    Uniform { mass: f64 },
    Bump { center: f64, width: f64, mass: f64 },
    DiracCell { index: usize, mass: f64 },
    Mixture(Vec<MeasurePreset>),
}

fn bump_profile(grid: &SpatialGrid, center: f64, width: f64) -> Vec<f64> {
    grid.cell_centers
        .iter()
        .map(|&x| {
            let d = match grid.kind {
                DomainKind::Interval => (x - center).abs(),
                DomainKind::Circle => {
                    let d = (x - center).rem_euclid(1.0);
                    d.min(1.0 - d)
                }
            };
            (-0.5 * (d / width).powi(2)).exp()
        })
        .collect()
}

/// Samples a preset onto the grid. Bump profiles are renormalized after
/// sampling so the total mass matches the request exactly.
pub fn make_measure(preset: &MeasurePreset, grid: &SpatialGrid) -> Result<DiscreteMeasure, WfrError> {
    match preset {
        MeasurePreset::Uniform { mass } => {
            if *mass < 0.0 {
                return Err(WfrError::Measure("mass must be ≥ 0".into()));
            }
            DiscreteMeasure::from_density(grid, vec![*mass; grid.n_cells])
        }
        MeasurePreset::Bump { center, width, mass } => {
            if *mass < 0.0 {
                return Err(WfrError::Measure("mass must be ≥ 0".into()));
            }
            if *width <= 0.0 {
                return Err(WfrError::Measure("bump width must be > 0".into()));
            }
            let profile = bump_profile(grid, *center, *width);
            let norm = grid.cell_width * exact_sum(profile.iter().copied());
            if norm <= 0.0 {
                return Err(WfrError::Measure("bump profile vanished on the grid".into()));
            }
            DiscreteMeasure::from_density(grid, profile.iter().map(|p| mass * p / norm).collect())
        }
        MeasurePreset::DiracCell { index, mass } => {
            if *mass < 0.0 {
                return Err(WfrError::Measure("mass must be ≥ 0".into()));
            }
            if *index >= grid.n_cells {
                return Err(WfrError::Measure(format!(
                    "cell index {index} out of range for {} cells",
                    grid.n_cells
                )));
            }
            let mut density = vec![0.0; grid.n_cells];
            density[*index] = mass / grid.cell_width;
            DiscreteMeasure::from_density(grid, density)
        }
        MeasurePreset::Mixture(parts) => {
            let mut density = vec![0.0; grid.n_cells];
            for part in parts {
                let m = make_measure(part, grid)?;
                for (d, p) in density.iter_mut().zip(m.density.iter()) {
                    *d += p;
                }
            }
            DiscreteMeasure::from_density(grid, density)
        }
    }
}

/// Sampled affine constraint: `d` constraint functions at time nodes × cell
/// centers and the target values at time nodes. `d = 0` is the unconstrained
/// mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub d: usize,
    /// `d × (n_steps + 1) × n_cells`
    pub h_values: Array3<f64>,
    /// `(n_steps + 1) × d`
    pub f_values: Array2<f64>,
    pub time_independent: bool,
}

impl ConstraintSpec {
    pub fn unconstrained(grid: &SpatialGrid, tgrid: &TimeGrid) -> Self {
        Self {
            d: 0,
            h_values: Array3::zeros((0, tgrid.n_steps + 1, grid.n_cells)),
            f_values: Array2::zeros((tgrid.n_steps + 1, 0)),
            time_independent: true,
        }
    }

    pub fn from_samples(
        h_values: Array3<f64>,
        f_values: Array2<f64>,
        grid: &SpatialGrid,
        tgrid: &TimeGrid,
    ) -> Result<Self, WfrError> {
        let d = h_values.dim().0;
        if h_values.dim().1 != tgrid.n_steps + 1 || h_values.dim().2 != grid.n_cells {
            return Err(WfrError::Constraint(format!(
                "h_values shape {:?} does not match {} nodes × {} cells",
                h_values.dim(),
                tgrid.n_steps + 1,
                grid.n_cells
            )));
        }
        if f_values.dim() != (tgrid.n_steps + 1, d) {
            return Err(WfrError::Constraint(format!(
                "f_values shape {:?} does not match {} nodes × d={}",
                f_values.dim(),
                tgrid.n_steps + 1,
                d
            )));
        }
        let time_independent = (0..d).all(|i| {
            let h0 = h_values.index_axis(ndarray::Axis(0), i);
            (1..=tgrid.n_steps).all(|k| (0..grid.n_cells).all(|j| h0[[k, j]] == h0[[0, j]]))
                && (1..=tgrid.n_steps).all(|k| f_values[[k, i]] == f_values[[0, i]])
        });
        Ok(Self { d, h_values, f_values, time_independent })
    }

    /// Constraint function `i` sampled at time node `k`.
    pub fn h_row(&self, i: usize, k: usize) -> Vec<f64> {
        self.h_values
            .index_axis(ndarray::Axis(0), i)
            .row(k)
            .to_vec()
    }
}

/// Time-target descriptor for total-mass style presets.
#[derive(Debug, Clone)]
pub enum MassTarget {
    Constant(f64),
    /// `F(t) = a + b·t`
    Affine { a: f64, b: f64 },
    /// Explicit samples at the time nodes (`n_steps + 1` values).
    Samples(Vec<f64>),
}

impl MassTarget {
    fn sample(&self, tgrid: &TimeGrid) -> Result<Vec<f64>, WfrError> {
        match self {
            MassTarget::Constant(c) => Ok(vec![*c; tgrid.n_steps + 1]),
            MassTarget::Affine { a, b } => Ok(tgrid.nodes.iter().map(|&t| a + b * t).collect()),
            MassTarget::Samples(v) => {
                if v.len() != tgrid.n_steps + 1 {
                    return Err(WfrError::Constraint(format!(
                        "F samples: expected {} values, got {}",
                        tgrid.n_steps + 1,
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

/// Constraint presets covering the supported constraint families.
#[derive(Debug, Clone)]
pub enum ConstraintPreset {
    /// `H = 1`, arbitrary prescribed total mass `F(t)`.
    TotalMass { f: MassTarget },
    /// `H = 1`, `F ≡ 1`: the spherical Hellinger-Kantorovich setting.
    SphericalHk,
    /// `H(x) = Π_k (x − c_k)`, constant target. Interval only.
    Moment { roots: Vec<f64>, value: f64 },
    /// Moving barrier `Γ(t) = (a(t), b(t))` swept linearly between the given
    /// endpoints; `H(t,·)` is a hat profile positive inside `Γ(t)` and zero
    /// outside, `F ≡ 0`.
    Barrier { gamma0: (f64, f64), gamma1: (f64, f64) },
    /// First circular moments vanish: `H = (cos 2πθ, sin 2πθ)`, `F ≡ 0`.
    /// Circle only.
    Closure,
}

/// Samples a constraint preset on the given grids.
pub fn constraint_preset(
    preset: &ConstraintPreset,
    grid: &SpatialGrid,
    tgrid: &TimeGrid,
) -> Result<ConstraintSpec, WfrError> {
    let steps = tgrid.n_steps;
    let n = grid.n_cells;
    match preset {
        ConstraintPreset::TotalMass { f } => {
            let samples = f.sample(tgrid)?;
            let h = Array3::ones((1, steps + 1, n));
            let mut fv = Array2::zeros((steps + 1, 1));
            for k in 0..=steps {
                fv[[k, 0]] = samples[k];
            }
            ConstraintSpec::from_samples(h, fv, grid, tgrid)
        }
        ConstraintPreset::SphericalHk => constraint_preset(
            &ConstraintPreset::TotalMass { f: MassTarget::Constant(1.0) },
            grid,
            tgrid,
        ),
        ConstraintPreset::Moment { roots, value } => {
            if grid.kind != DomainKind::Interval {
                return Err(WfrError::Constraint(
                    "moment preset requires the interval domain (polynomials are not periodic)".into(),
                ));
            }
            if roots.is_empty() {
                return Err(WfrError::Constraint("moment preset needs at least one root".into()));
            }
            let mut h = Array3::zeros((1, steps + 1, n));
            for (j, &x) in grid.cell_centers.iter().enumerate() {
                let v = roots.iter().map(|c| x - c).product::<f64>();
                for k in 0..=steps {
                    h[[0, k, j]] = v;
                }
            }
            let mut fv = Array2::zeros((steps + 1, 1));
            fv.fill(*value);
            ConstraintSpec::from_samples(h, fv, grid, tgrid)
        }
        ConstraintPreset::Barrier { gamma0, gamma1 } => {
            let mut h = Array3::zeros((1, steps + 1, n));
            for k in 0..=steps {
                let t = tgrid.nodes[k];
                let a = gamma0.0 + t * (gamma1.0 - gamma0.0);
                let b = gamma0.1 + t * (gamma1.1 - gamma0.1);
                if b - a <= 0.0 {
                    return Err(WfrError::Constraint(format!(
                        "barrier region is empty at t = {t}: ({a}, {b})"
                    )));
                }
                let mid = 0.5 * (a + b);
                let radius = 0.5 * (b - a);
                for (j, &x) in grid.cell_centers.iter().enumerate() {
                    h[[0, k, j]] = (1.0 - (x - mid).abs() / radius).max(0.0);
                }
            }
            let fv = Array2::zeros((steps + 1, 1));
            ConstraintSpec::from_samples(h, fv, grid, tgrid)
        }
        ConstraintPreset::Closure => {
            if grid.kind != DomainKind::Circle {
                return Err(WfrError::Constraint("closure preset requires the circle domain".into()));
            }
            let mut h = Array3::zeros((2, steps + 1, n));
            for (j, &x) in grid.cell_centers.iter().enumerate() {
                let ang = 2.0 * std::f64::consts::PI * x;
                for k in 0..=steps {
                    h[[0, k, j]] = ang.cos();
                    h[[1, k, j]] = ang.sin();
                }
            }
            let fv = Array2::zeros((steps + 1, 2));
            ConstraintSpec::from_samples(h, fv, grid, tgrid)
        }
    }
}

/// `∫ H_i(t_k, ·) dρ_{t_k}` without the target subtracted; entry `(k, i)`.
pub fn constraint_eval_raw(spec: &ConstraintSpec, rho_nodes: &Array2<f64>, dx: f64) -> Array2<f64> {
    let (nodes, _) = rho_nodes.dim();
    assert_eq!(nodes, spec.f_values.dim().0, "time nodes");
    let mut out = Array2::zeros((nodes, spec.d));
    for i in 0..spec.d {
        let h = spec.h_values.index_axis(ndarray::Axis(0), i);
        for k in 0..nodes {
            let mut s = 0.0;
            for j in 0..rho_nodes.dim().1 {
                s += h[[k, j]] * rho_nodes[[k, j]];
            }
            out[[k, i]] = s * dx;
        }
    }
    out
}

/// Constraint residuals `∫ H dρ_{t_k} − F(t_k)` for a whole density path.
pub fn constraint_eval(spec: &ConstraintSpec, rho_nodes: &Array2<f64>, dx: f64) -> Array2<f64> {
    let mut out = constraint_eval_raw(spec, rho_nodes, dx);
    out -= &spec.f_values;
    out
}

/// Endpoint feasibility report.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub residual_0: Vec<f64>,
    pub residual_1: Vec<f64>,
    pub tol: f64,
    pub feasible: bool,
}

impl FeasibilityReport {
    pub fn max_residual(&self) -> f64 {
        self.residual_0
            .iter()
            .chain(self.residual_1.iter())
            .fold(0.0f64, |m, &r| m.max(r.abs()))
    }
}

/// Checks `∫ H(0,·) dρ₀ = F(0)` and `∫ H(1,·) dρ₁ = F(1)` at the given
/// tolerance. Reports, never fails.
pub fn check_feasibility(
    spec: &ConstraintSpec,
    rho0: &DiscreteMeasure,
    rho1: &DiscreteMeasure,
    tol: f64,
) -> FeasibilityReport {
    let dx = rho0.grid.cell_width;
    let last = spec.f_values.dim().0 - 1;
    let mut residual_0 = Vec::with_capacity(spec.d);
    let mut residual_1 = Vec::with_capacity(spec.d);
    for i in 0..spec.d {
        let h = spec.h_values.index_axis(ndarray::Axis(0), i);
        let r0: f64 = rho0
            .density
            .iter()
            .enumerate()
            .map(|(j, &rho)| h[[0, j]] * rho * dx)
            .sum::<f64>()
            - spec.f_values[[0, i]];
        let r1: f64 = rho1
            .density
            .iter()
            .enumerate()
            .map(|(j, &rho)| h[[last, j]] * rho * dx)
            .sum::<f64>()
            - spec.f_values[[last, i]];
        residual_0.push(r0);
        residual_1.push(r1);
    }
    let mut report = FeasibilityReport { residual_0, residual_1, tol, feasible: false };
    report.feasible = report.max_residual() <= tol;
    report
}
