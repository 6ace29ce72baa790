//! Sufficient optimality conditions for candidate paths.
//!
//! A potential `φ` certifies a feasible triple `μ = (ρ, ω, ζ)` when, with
//! `α = ∂_tφ − Σᵢ gᵢ(t)Hᵢ`, `β = ∇φ` and `γ = φ` for some continuous
//! multipliers `gᵢ`,
//!
//! * `α + (‖β‖² + γ²/δ²)/2 = 0` ρ-a.e. and `≤ 0` everywhere,
//! * `β ρ = ω` and `γ ρ = δ² ζ`.
//!
//! The multiplier recovery is ρ-weighted least squares per time midpoint;
//! when the certificate is exact this coincides with the Gram-system
//! solution. [`geodesic_residuals`] checks the same optimality content in
//! PDE form on `(ρ, φ)` alone — a Hamilton-Jacobi equation whose right side
//! is projected onto the constraint span via [`gram_system`], plus the
//! continuity equation with `ω` and `ζ` eliminated through the certificate
//! relations. Certification is advisory: a failed certificate never proves
//! suboptimality.

use ndarray::Array2;

use crate::error::WfrError;
use crate::grid::{gradient, DomainKind, SpatialGrid};
use crate::measures::ConstraintSpec;
use crate::numerics::solve_dense_with_condition;
use crate::paths::PathTriple;

/// Density floor (relative to the maximum) below which a cell does not
/// count as support.
const SUPPORT_FLOOR: f64 = 1e-10;

/// Residual report of the certificate conditions.
#[derive(Debug, Clone)]
pub struct CertificateReport {
    /// Recovered multipliers `gᵢ` at time midpoints, `n_steps × d`.
    pub g: Array2<f64>,
    /// Max over the support of `|α + (‖β‖² + γ²/δ²)/2|`.
    pub r_hj: f64,
    /// Max over all cells of the positive part of the same expression.
    pub r_membership: f64,
    /// Max of `|β·ρ − ω|` over faces.
    pub r_momentum: f64,
    /// Max of `|γ·ρ − δ²ζ|` over cells.
    pub r_source: f64,
    pub tol: f64,
    pub certified: bool,
}

/// Residuals of the geodesic PDE system for a path/potential pair.
#[derive(Debug, Clone)]
pub struct GeodesicResiduals {
    pub r_hamilton_jacobi: f64,
    pub r_continuity: f64,
    /// Constraint multipliers from the Gram projection, `n_steps × d`.
    pub gamma: Array2<f64>,
}

/// Gradient of a cell field evaluated at faces and averaged back to cells.
fn cell_gradient(field: &[f64], grid: &SpatialGrid) -> (Vec<f64>, Vec<f64>) {
    let faces = gradient(field, grid);
    let n = grid.n_cells;
    let mut cells = vec![0.0; n];
    for j in 0..n {
        let right = match grid.kind {
            DomainKind::Interval => faces[j + 1],
            DomainKind::Circle => faces[(j + 1) % n],
        };
        cells[j] = 0.5 * (faces[j] + right);
    }
    (faces, cells)
}

/// Mean of squared face gradients per cell; the discrete `‖∇φ‖²`.
fn cell_grad_sq(faces: &[f64], grid: &SpatialGrid) -> Vec<f64> {
    let n = grid.n_cells;
    (0..n)
        .map(|j| {
            let right = match grid.kind {
                DomainKind::Interval => faces[j + 1],
                DomainKind::Circle => faces[(j + 1) % n],
            };
            0.5 * (faces[j] * faces[j] + right * right)
        })
        .collect()
}

/// Solves the Gram system `G γ = b` of the constraint functions in the
/// ρ-weighted `W^{1,2}` inner product
/// `⟨u, v⟩ = ∫ (u v / δ² + ∇u·∇v) ρ dx`, with `b_i = ⟨H_i, φ⟩`.
///
/// Fails on nonpositive mass and on an ill-conditioned Gram matrix
/// (linearly dependent constraint functions).
pub fn gram_system(
    rho: &[f64],
    phi: &[f64],
    h_rows: &[Vec<f64>],
    grid: &SpatialGrid,
    delta: f64,
) -> Result<Vec<f64>, WfrError> {
    let d = h_rows.len();
    assert!(d >= 1, "gram_system needs at least one constraint function");
    let n = grid.n_cells;
    assert!(rho.len() == n && phi.len() == n);
    let dx = grid.cell_width;
    let mass: f64 = rho.iter().sum::<f64>() * dx;
    if mass <= 0.0 {
        return Err(WfrError::Constraint("Gram system needs positive mass".into()));
    }
    let d2 = delta * delta;
    let (_, grad_phi) = cell_gradient(phi, grid);
    let grads: Vec<Vec<f64>> = h_rows.iter().map(|h| cell_gradient(h, grid).1).collect();
    let mut gram = vec![vec![0.0; d]; d];
    let mut rhs = vec![0.0; d];
    for m in 0..d {
        for q in m..d {
            let mut acc = 0.0;
            for j in 0..n {
                acc += (h_rows[m][j] * h_rows[q][j] / d2 + grads[m][j] * grads[q][j])
                    * rho[j]
                    * dx;
            }
            gram[m][q] = acc;
            gram[q][m] = acc;
        }
        let mut acc = 0.0;
        for j in 0..n {
            acc += (h_rows[m][j] * phi[j] / d2 + grads[m][j] * grad_phi[j]) * rho[j] * dx;
        }
        rhs[m] = acc;
    }
    match solve_dense_with_condition(&gram, &rhs) {
        Some((gamma, cond)) if cond <= 1e12 => Ok(gamma),
        Some((_, cond)) => Err(WfrError::IllConditionedGram { cond }),
        None => Err(WfrError::IllConditionedGram { cond: f64::INFINITY }),
    }
}

/// Per-midpoint slices of the certificate data.
struct MidpointSlice {
    dphi_dt: Vec<f64>,
    phi_mid: Vec<f64>,
    grad_faces: Vec<f64>,
    grad_sq: Vec<f64>,
    h_mid: Vec<Vec<f64>>,
}

fn midpoint_slice(
    path: &PathTriple,
    phi: &Array2<f64>,
    spec: &ConstraintSpec,
    k: usize,
) -> MidpointSlice {
    let n = path.grid.n_cells;
    let dt = path.tgrid.dt;
    let dphi_dt: Vec<f64> = (0..n).map(|j| (phi[[k + 1, j]] - phi[[k, j]]) / dt).collect();
    let phi_mid: Vec<f64> = (0..n).map(|j| 0.5 * (phi[[k, j]] + phi[[k + 1, j]])).collect();
    let grad_faces = gradient(&phi_mid, &path.grid);
    let grad_sq = cell_grad_sq(&grad_faces, &path.grid);
    let h_mid: Vec<Vec<f64>> = (0..spec.d)
        .map(|i| {
            let h = spec.h_values.index_axis(ndarray::Axis(0), i);
            (0..n).map(|j| 0.5 * (h[[k, j]] + h[[k + 1, j]])).collect()
        })
        .collect();
    MidpointSlice { dphi_dt, phi_mid, grad_faces, grad_sq, h_mid }
}

/// Checks the certificate conditions for `(path, φ)` with `φ` sampled at
/// time nodes × cells. Reports residuals, never fails.
pub fn certify(
    path: &PathTriple,
    phi: &Array2<f64>,
    spec: &ConstraintSpec,
    delta: f64,
    tol: f64,
) -> CertificateReport {
    let steps = path.tgrid.n_steps;
    let n = path.grid.n_cells;
    assert_eq!(phi.dim(), (steps + 1, n), "phi must be sampled at time nodes × cells");
    let d = spec.d;
    let d2 = delta * delta;
    let rho_max = path.centered.rho.iter().fold(0.0f64, |m, &r| m.max(r));
    let floor = SUPPORT_FLOOR * rho_max.max(1e-300);

    let mut g = Array2::zeros((steps, d));
    let mut r_hj = 0.0f64;
    let mut r_membership = 0.0f64;
    let mut r_momentum = 0.0f64;
    let mut r_source = 0.0f64;

    for k in 0..steps {
        let slice = midpoint_slice(path, phi, spec, k);
        // v = ∂_tφ + (‖β‖² + γ²/δ²)/2; the certificate wants v = Σ gᵢHᵢ
        // ρ-a.e. with v ≤ Σ gᵢHᵢ everywhere.
        let v: Vec<f64> = (0..n)
            .map(|j| {
                slice.dphi_dt[j]
                    + 0.5 * (slice.grad_sq[j] + slice.phi_mid[j] * slice.phi_mid[j] / d2)
            })
            .collect();
        // ρ-weighted least squares for the multipliers.
        if d > 0 {
            let mut normal = vec![vec![0.0; d]; d];
            let mut rhs = vec![0.0; d];
            for j in 0..n {
                let w = path.centered.rho[[k, j]].max(0.0);
                if w == 0.0 {
                    continue;
                }
                for a in 0..d {
                    rhs[a] += w * v[j] * slice.h_mid[a][j];
                    for b in a..d {
                        normal[a][b] += w * slice.h_mid[a][j] * slice.h_mid[b][j];
                        if b != a {
                            normal[b][a] = normal[a][b];
                        }
                    }
                }
            }
            let coeffs = solve_dense_with_condition(&normal, &rhs)
                .filter(|(_, cond)| cond.is_finite())
                .map(|(x, _)| x)
                .unwrap_or_else(|| vec![0.0; d]);
            for i in 0..d {
                g[[k, i]] = coeffs[i];
            }
        }
        for j in 0..n {
            let fitted: f64 = (0..d).map(|i| g[[k, i]] * slice.h_mid[i][j]).sum();
            let resid = v[j] - fitted;
            if path.centered.rho[[k, j]] > floor {
                r_hj = r_hj.max(resid.abs());
            }
            r_membership = r_membership.max(resid.max(0.0));
            // Source relation γρ = δ²ζ.
            r_source = r_source.max(
                (slice.phi_mid[j] * path.centered.rho[[k, j]] - d2 * path.centered.zeta[[k, j]])
                    .abs(),
            );
        }
        // Momentum relation βρ = ω at faces.
        let face_range = match path.grid.kind {
            DomainKind::Interval => 1..n,
            DomainKind::Circle => 0..n,
        };
        for f in face_range {
            let (left, right) = path.grid.face_neighbors(f);
            let rho_face = 0.5 * (path.centered.rho[[k, left]] + path.centered.rho[[k, right]]);
            r_momentum = r_momentum
                .max((slice.grad_faces[f] * rho_face - path.staggered.omega[[k, f]]).abs());
        }
    }

    let certified = r_hj <= tol && r_membership <= tol && r_momentum <= tol && r_source <= tol;
    CertificateReport { g, r_hj, r_membership, r_momentum, r_source, tol, certified }
}

/// Residuals of the geodesic PDE system on `(ρ, φ)` with the multipliers
/// recovered by the Gram projection of the Hamilton-Jacobi left side
/// `∂_tφ + (‖∇φ‖² + φ²/δ²)/2` onto the constraint span (`Φ̄ ≡ 0` when
/// `d = 0`), and the continuity equation with momentum and source
/// eliminated via `ω = ρ∇φ`, `ζ = φρ/δ²`. Evaluated at interior midpoints
/// over the support threshold.
pub fn geodesic_residuals(
    path: &PathTriple,
    phi: &Array2<f64>,
    spec: &ConstraintSpec,
    delta: f64,
) -> Result<GeodesicResiduals, WfrError> {
    let steps = path.tgrid.n_steps;
    let n = path.grid.n_cells;
    assert_eq!(phi.dim(), (steps + 1, n), "phi must be sampled at time nodes × cells");
    let d = spec.d;
    let d2 = delta * delta;
    let dt = path.tgrid.dt;
    let dx = path.grid.cell_width;
    let rho_max = path.centered.rho.iter().fold(0.0f64, |m, &r| m.max(r));
    let floor = SUPPORT_FLOOR * rho_max.max(1e-300);

    let mut gamma = Array2::zeros((steps, d));
    let mut r_hj = 0.0f64;
    let mut r_ce = 0.0f64;

    let interior = if steps > 2 { 1..steps - 1 } else { 0..steps };
    for k in interior.clone() {
        let slice = midpoint_slice(path, phi, spec, k);
        let v: Vec<f64> = (0..n)
            .map(|j| {
                slice.dphi_dt[j]
                    + 0.5 * (slice.grad_sq[j] + slice.phi_mid[j] * slice.phi_mid[j] / d2)
            })
            .collect();
        let rho_row: Vec<f64> = (0..n).map(|j| path.centered.rho[[k, j]].max(0.0)).collect();
        if d > 0 {
            let coeffs = gram_system(&rho_row, &v, &slice.h_mid, &path.grid, delta)?;
            for i in 0..d {
                gamma[[k, i]] = coeffs[i];
            }
        }
        for j in 0..n {
            if path.centered.rho[[k, j]] <= floor {
                continue;
            }
            let fitted: f64 = (0..d).map(|i| gamma[[k, i]] * slice.h_mid[i][j]).sum();
            r_hj = r_hj.max((v[j] - fitted).abs());
        }

        // Continuity with eliminated controls: ∂_tρ + ∇·(ρ∇φ) − φρ/δ².
        let flux: Vec<f64> = (0..path.grid.n_faces())
            .map(|f| {
                if path.grid.kind == DomainKind::Interval && (f == 0 || f == n) {
                    return 0.0;
                }
                let (left, right) = path.grid.face_neighbors(f);
                let rho_face =
                    0.5 * (path.centered.rho[[k, left]] + path.centered.rho[[k, right]]);
                slice.grad_faces[f] * rho_face
            })
            .collect();
        for j in 0..n {
            if path.centered.rho[[k, j]] <= floor {
                continue;
            }
            let right = match path.grid.kind {
                DomainKind::Interval => flux[j + 1],
                DomainKind::Circle => flux[(j + 1) % n],
            };
            let div = (right - flux[j]) / dx;
            let drho_dt = (path.staggered.rho[[k + 1, j]] - path.staggered.rho[[k, j]]) / dt;
            let source = slice.phi_mid[j] * path.centered.rho[[k, j]] / d2;
            r_ce = r_ce.max((drho_dt + div - source).abs());
        }
    }
    // Pad the non-interior midpoints with their neighbors for convenience.
    if steps > 2 && d > 0 {
        for i in 0..d {
            gamma[[0, i]] = gamma[[1, i]];
            gamma[[steps - 1, i]] = gamma[[steps - 2, i]];
        }
    }
    Ok(GeodesicResiduals { r_hamilton_jacobi: r_hj, r_continuity: r_ce, gamma })
}
