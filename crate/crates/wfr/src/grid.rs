//! Space-time discretization on the unit interval and unit circle.
//!
//! Layout: densities live at time nodes and cell centers, momenta at time
//! midpoints and spatial faces, sources at time midpoints and cell centers.
//! Face `f` is the left edge of cell `f`; on the interval there are
//! `n_cells + 1` faces and the two boundary faces carry identically zero
//! flux, on the circle there are `n_cells` faces with periodic wrap. The
//! divergence and gradient below are exact negative adjoints of each other
//! under the plain Euclidean pairing, which is what makes the affine
//! projection in the solver an exact projection.

use ndarray::{Array1, Array2};

use crate::error::WfrError;

/// Domain kind for the 1-D spatial grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Interval,
    Circle,
}

/// Uniform spatial grid on a domain of unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    pub kind: DomainKind,
    pub n_cells: usize,
    pub cell_width: f64,
    pub cell_centers: Vec<f64>,
}

impl SpatialGrid {
    /// Number of stored faces: `n_cells + 1` on the interval (boundary faces
    /// included, pinned to zero), `n_cells` on the circle.
    pub fn n_faces(&self) -> usize {
        match self.kind {
            DomainKind::Interval => self.n_cells + 1,
            DomainKind::Circle => self.n_cells,
        }
    }

    /// Indices of the two cells adjacent to face `f` as `(left, right)`.
    /// Interval boundary faces have no admissible flux and are not meaningful
    /// here; callers never ask for them.
    pub fn face_neighbors(&self, f: usize) -> (usize, usize) {
        match self.kind {
            DomainKind::Interval => (f - 1, f),
            DomainKind::Circle => ((f + self.n_cells - 1) % self.n_cells, f),
        }
    }
}

/// Uniform time grid on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub n_steps: usize,
    pub dt: f64,
    pub nodes: Vec<f64>,
    pub midpoints: Vec<f64>,
}

/// Builds the spatial and temporal grids.
pub fn build_grids(
    kind: DomainKind,
    n_cells: usize,
    n_steps: usize,
) -> Result<(SpatialGrid, TimeGrid), WfrError> {
    if n_cells < 2 {
        return Err(WfrError::GridSize(format!(
            "n_cells must be at least 2, got {n_cells}"
        )));
    }
    if n_steps < 1 {
        return Err(WfrError::GridSize(format!(
            "n_steps must be at least 1, got {n_steps}"
        )));
    }
    let dx = 1.0 / n_cells as f64;
    let centers = (0..n_cells).map(|j| (j as f64 + 0.5) * dx).collect();
    let dt = 1.0 / n_steps as f64;
    let nodes = (0..=n_steps).map(|k| k as f64 * dt).collect();
    let midpoints = (0..n_steps).map(|k| (k as f64 + 0.5) * dt).collect();
    Ok((
        SpatialGrid { kind, n_cells, cell_width: dx, cell_centers: centers },
        TimeGrid { n_steps, dt, nodes, midpoints },
    ))
}

/// Staggered primal fields: density at nodes/centers, momentum at
/// midpoints/faces, source at midpoints/centers.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredFields {
    /// `(n_steps + 1) × n_cells`
    pub rho: Array2<f64>,
    /// `n_steps × n_faces`; interval boundary columns are identically zero
    pub omega: Array2<f64>,
    /// `n_steps × n_cells`
    pub zeta: Array2<f64>,
}

impl StaggeredFields {
    pub fn zeros(grid: &SpatialGrid, tgrid: &TimeGrid) -> Self {
        Self {
            rho: Array2::zeros((tgrid.n_steps + 1, grid.n_cells)),
            omega: Array2::zeros((tgrid.n_steps, grid.n_faces())),
            zeta: Array2::zeros((tgrid.n_steps, grid.n_cells)),
        }
    }

    pub fn assert_shape(&self, grid: &SpatialGrid, tgrid: &TimeGrid) {
        assert_eq!(self.rho.dim(), (tgrid.n_steps + 1, grid.n_cells), "rho shape");
        assert_eq!(self.omega.dim(), (tgrid.n_steps, grid.n_faces()), "omega shape");
        assert_eq!(self.zeta.dim(), (tgrid.n_steps, grid.n_cells), "zeta shape");
    }
}

/// Centered copies of all three fields, co-located at time midpoints and
/// cell centers so the infinitesimal cost can be evaluated pointwise.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredFields {
    pub rho: Array2<f64>,
    pub omega: Array2<f64>,
    pub zeta: Array2<f64>,
}

impl CenteredFields {
    pub fn zeros(grid: &SpatialGrid, tgrid: &TimeGrid) -> Self {
        let shape = (tgrid.n_steps, grid.n_cells);
        Self { rho: Array2::zeros(shape), omega: Array2::zeros(shape), zeta: Array2::zeros(shape) }
    }
}

/// Two-point divergence of a face field, one time slice.
///
/// `(div ω)_j = (ω_{j+1} − ω_j) / Δx` with periodic wrap on the circle.
pub fn divergence(omega: &[f64], grid: &SpatialGrid) -> Vec<f64> {
    assert_eq!(omega.len(), grid.n_faces(), "face field length");
    let n = grid.n_cells;
    let dx = grid.cell_width;
    match grid.kind {
        DomainKind::Interval => (0..n).map(|j| (omega[j + 1] - omega[j]) / dx).collect(),
        DomainKind::Circle => (0..n).map(|j| (omega[(j + 1) % n] - omega[j]) / dx).collect(),
    }
}

/// Two-point gradient of a cell field, one time slice; exact negative
/// adjoint of [`divergence`]. Interval boundary faces get zero.
pub fn gradient(phi: &[f64], grid: &SpatialGrid) -> Vec<f64> {
    assert_eq!(phi.len(), grid.n_cells, "cell field length");
    let n = grid.n_cells;
    let dx = grid.cell_width;
    match grid.kind {
        DomainKind::Interval => {
            let mut g = vec![0.0; n + 1];
            for f in 1..n {
                g[f] = (phi[f] - phi[f - 1]) / dx;
            }
            g
        }
        DomainKind::Circle => {
            (0..n).map(|f| (phi[f] - phi[(f + n - 1) % n]) / dx).collect()
        }
    }
}

/// Midpoint interpolation from staggered to centered fields.
///
/// Density is averaged between consecutive time nodes, momentum between the
/// two faces of each cell; the source is already centered and passes through.
pub fn interp_to_centered(u: &StaggeredFields, grid: &SpatialGrid, tgrid: &TimeGrid) -> CenteredFields {
    u.assert_shape(grid, tgrid);
    let (steps, n) = (tgrid.n_steps, grid.n_cells);
    let mut out = CenteredFields::zeros(grid, tgrid);
    for k in 0..steps {
        for j in 0..n {
            out.rho[[k, j]] = 0.5 * (u.rho[[k, j]] + u.rho[[k + 1, j]]);
        }
        match grid.kind {
            DomainKind::Interval => {
                for j in 0..n {
                    out.omega[[k, j]] = 0.5 * (u.omega[[k, j]] + u.omega[[k, j + 1]]);
                }
            }
            DomainKind::Circle => {
                for j in 0..n {
                    out.omega[[k, j]] = 0.5 * (u.omega[[k, j]] + u.omega[[k, (j + 1) % n]]);
                }
            }
        }
        for j in 0..n {
            out.zeta[[k, j]] = u.zeta[[k, j]];
        }
    }
    out
}

/// Exact adjoint of [`interp_to_centered`]: `⟨I u, v⟩ = ⟨u, Iᵀ v⟩` under the
/// plain Euclidean pairing. Interval boundary faces stay zero (they are not
/// part of the unknown vector).
pub fn adjoint_interp(v: &CenteredFields, grid: &SpatialGrid, tgrid: &TimeGrid) -> StaggeredFields {
    let (steps, n) = (tgrid.n_steps, grid.n_cells);
    assert_eq!(v.rho.dim(), (steps, n), "centered rho shape");
    let mut out = StaggeredFields::zeros(grid, tgrid);
    for k in 0..steps {
        for j in 0..n {
            out.rho[[k, j]] += 0.5 * v.rho[[k, j]];
            out.rho[[k + 1, j]] += 0.5 * v.rho[[k, j]];
        }
        match grid.kind {
            DomainKind::Interval => {
                for j in 0..n {
                    out.omega[[k, j]] += 0.5 * v.omega[[k, j]];
                    out.omega[[k, j + 1]] += 0.5 * v.omega[[k, j]];
                }
                out.omega[[k, 0]] = 0.0;
                out.omega[[k, n]] = 0.0;
            }
            DomainKind::Circle => {
                for j in 0..n {
                    out.omega[[k, j]] += 0.5 * v.omega[[k, j]];
                    out.omega[[k, (j + 1) % n]] += 0.5 * v.omega[[k, j]];
                }
            }
        }
        for j in 0..n {
            out.zeta[[k, j]] = v.zeta[[k, j]];
        }
    }
    out
}

/// Residuals of the discrete continuity equation with endpoint conditions.
///
/// Interior rows: `(ρ^{k+1} − ρ^k)/Δt + div ω^{k+½} − ζ^{k+½}` for each
/// midpoint and cell. Endpoint rows: `ρ^0 − ρ₀` and `ρ^{n_steps} − ρ₁`.
/// A triple belongs to the discrete constraint set exactly when all three
/// returned arrays vanish.
pub fn continuity_residual(
    u: &StaggeredFields,
    rho0: &[f64],
    rho1: &[f64],
    grid: &SpatialGrid,
    tgrid: &TimeGrid,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    u.assert_shape(grid, tgrid);
    assert_eq!(rho0.len(), grid.n_cells, "rho0 length");
    assert_eq!(rho1.len(), grid.n_cells, "rho1 length");
    let (steps, n) = (tgrid.n_steps, grid.n_cells);
    let mut interior = Array2::zeros((steps, n));
    for k in 0..steps {
        let omega_row: Vec<f64> = u.omega.row(k).to_vec();
        let div = divergence(&omega_row, grid);
        for j in 0..n {
            interior[[k, j]] =
                (u.rho[[k + 1, j]] - u.rho[[k, j]]) / tgrid.dt + div[j] - u.zeta[[k, j]];
        }
    }
    let e0 = Array1::from_iter((0..n).map(|j| u.rho[[0, j]] - rho0[j]));
    let e1 = Array1::from_iter((0..n).map(|j| u.rho[[steps, j]] - rho1[j]));
    (interior, e0, e1)
}
