//! The Wasserstein-Fisher-Rao infinitesimal cost, the paraboloid it is
//! Fenchel-conjugate to, and the proximal kernels built from that pairing.
//!
//! The cost is the 1-homogeneous perspective function
//!
//! ```text
//! f_δ(a, b, c) = (b² + δ²c²) / (2a)   for a > 0,
//!              = 0                     at (0, 0, 0),
//!              = +∞                    otherwise,
//! ```
//!
//! with `a` the density slot, `b` the (1-D) momentum slot and `c` the source
//! slot. Its convex conjugate is the indicator of the paraboloid
//! `B_δ = { (a,b,c) : a + (b² + c²/δ²)/2 ≤ 0 }`, so the prox of `f_δ`
//! reduces to a Euclidean projection onto `B_δ` through the Moreau
//! decomposition. The projection needs one scalar root-find, done by
//! safeguarded Newton with a bisection fallback.

use crate::grid::{CenteredFields, SpatialGrid, TimeGrid};
use crate::numerics::ExactSum;

/// A point in (density, momentum, source) coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostPoint {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl CostPoint {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }
}

/// The set `B_δ`; the conjugate of its indicator is `f_δ`.
#[derive(Debug, Clone, Copy)]
pub struct Paraboloid {
    pub delta: f64,
}

impl Paraboloid {
    pub fn new(delta: f64) -> Self {
        assert!(delta > 0.0, "delta must be positive");
        Self { delta }
    }

    /// Value of the defining inequality; membership is `≤ 0`.
    pub fn gauge(&self, p: CostPoint) -> f64 {
        p.a + 0.5 * (p.b * p.b + p.c * p.c / (self.delta * self.delta))
    }

    pub fn contains(&self, p: CostPoint, slack: f64) -> bool {
        self.gauge(p) <= slack
    }
}

/// The infinitesimal cost `f_δ`. Returns `+∞` outside the domain, never
/// panics.
pub fn f_delta(p: CostPoint, delta: f64) -> f64 {
    debug_assert!(delta > 0.0);
    if p.a > 0.0 {
        (p.b * p.b + delta * delta * p.c * p.c) / (2.0 * p.a)
    } else if p.a == 0.0 && p.b == 0.0 && p.c == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Euclidean projection onto the paraboloid `B_δ`.
///
/// For an exterior point the projection is
/// `(a₀ − λ, b₀/(1+λ), c₀/(1 + λ/δ²))` where `λ > 0` is the unique root of
///
/// ```text
/// g(λ) = a₀ − λ + ( b₀²/(1+λ)² + (c₀²/δ²)/(1+λ/δ²)² ) / 2.
/// ```
///
/// `g` is strictly decreasing with `g(0) > 0`, so the root is bracketed and
/// safeguarded Newton converges; we polish to `|g(λ)| ≤ 1e−12`.
pub fn project_paraboloid(p: CostPoint, delta: f64) -> CostPoint {
    let set = Paraboloid::new(delta);
    if set.gauge(p) <= 0.0 {
        return p;
    }
    if p.b == 0.0 && p.c == 0.0 {
        // Exterior point on the density axis projects to the apex.
        return CostPoint::new(0.0, 0.0, 0.0);
    }
    let d2 = delta * delta;
    let g = |lam: f64| {
        let tb = 1.0 + lam;
        let tc = 1.0 + lam / d2;
        p.a - lam + 0.5 * (p.b * p.b / (tb * tb) + (p.c * p.c / d2) / (tc * tc))
    };
    let dg = |lam: f64| {
        let tb = 1.0 + lam;
        let tc = 1.0 + lam / d2;
        -1.0 - p.b * p.b / (tb * tb * tb) - (p.c * p.c / (d2 * d2)) / (tc * tc * tc)
    };

    // Bracket the root: g(0) > 0 and g decays at least linearly.
    let mut lo = 0.0f64;
    let mut hi = f64::max(1.0, p.a + (p.b * p.b + p.c * p.c).sqrt());
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    let mut lam = 0.5 * (lo + hi);
    for _ in 0..200 {
        let val = g(lam);
        if val.abs() <= 1e-12 {
            break;
        }
        if val > 0.0 {
            lo = lam;
        } else {
            hi = lam;
        }
        let step = val / dg(lam);
        let newton = lam - step;
        lam = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    CostPoint::new(p.a - lam, p.b / (1.0 + lam), p.c / (1.0 + lam / d2))
}

/// Proximal operator of `τ·f_δ` via the Moreau decomposition:
/// `prox_{τ f_δ}(p) = p − τ·Π_{B_δ}(p/τ)`. The density slot of the output is
/// always ≥ 0.
pub fn prox_f_delta(p: CostPoint, tau: f64, delta: f64) -> CostPoint {
    assert!(tau > 0.0, "tau must be positive");
    let scaled = CostPoint::new(p.a / tau, p.b / tau, p.c / tau);
    let proj = project_paraboloid(scaled, delta);
    // The density slot is τλ ≥ 0 up to roundoff; clamp the roundoff.
    CostPoint::new((p.a - tau * proj.a).max(0.0), p.b - tau * proj.b, p.c - tau * proj.c)
}

/// Snap tolerance under which a slightly negative density with negligible
/// momentum and source counts as the zero branch of `f_δ`.
pub const ZERO_BRANCH_TOL: f64 = 1e-12;

fn cell_cost(a: f64, b: f64, c: f64, delta: f64) -> f64 {
    if a <= 0.0 && a > -ZERO_BRANCH_TOL && b.abs() <= ZERO_BRANCH_TOL && c.abs() <= ZERO_BRANCH_TOL {
        return 0.0;
    }
    f_delta(CostPoint::new(a, b, c), delta)
}

/// Total path energy `Σ Δt·Δx·f_δ(ρ, ω, ζ)` over the centered cells.
///
/// Accumulated with exact summation so the value is independent of cell
/// order; returns `+∞` as soon as any cell leaves the domain of `f_δ`
/// beyond the snap tolerance.
pub fn path_energy(v: &CenteredFields, grid: &SpatialGrid, tgrid: &TimeGrid, delta: f64) -> f64 {
    let weight = tgrid.dt * grid.cell_width;
    let mut acc = ExactSum::new();
    for k in 0..tgrid.n_steps {
        for j in 0..grid.n_cells {
            let f = cell_cost(v.rho[[k, j]], v.omega[[k, j]], v.zeta[[k, j]], delta);
            if !f.is_finite() {
                return f64::INFINITY;
            }
            acc.add(weight * f);
        }
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn f_delta_branches() {
        assert_eq!(f_delta(CostPoint::new(1.0, 0.0, 0.0), 1.0), 0.0);
        assert_eq!(f_delta(CostPoint::new(0.0, 0.0, 0.0), 2.0), 0.0);
        assert_eq!(f_delta(CostPoint::new(0.0, 1.0, 0.0), 1.0), f64::INFINITY);
        assert_eq!(f_delta(CostPoint::new(-0.5, 0.0, 0.0), 1.0), f64::INFINITY);
        assert!((f_delta(CostPoint::new(2.0, 2.0, 1.0), 1.0) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn projection_fixes_interior_and_clamps_axis() {
        let p = project_paraboloid(CostPoint::new(-1.0, 0.0, 0.0), 1.0);
        assert_eq!(p, CostPoint::new(-1.0, 0.0, 0.0));
        let q = project_paraboloid(CostPoint::new(1.0, 0.0, 0.0), 1.0);
        assert!(q.a.abs() < 1e-12 && q.b == 0.0 && q.c == 0.0);
    }

    #[test]
    fn projection_matches_scalar_oracle() {
        // For (0, 2, 0) with delta = 1 the multiplier solves λ(1+λ)² = 2.
        let mut lo = 0.0f64;
        let mut hi = 2.0f64;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * (1.0 + mid).powi(2) < 2.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let lam = 0.5 * (lo + hi);
        let p = project_paraboloid(CostPoint::new(0.0, 2.0, 0.0), 1.0);
        assert!((p.a + lam).abs() < 1e-10, "a = {}, λ = {lam}", p.a);
        assert!((p.b - 2.0 / (1.0 + lam)).abs() < 1e-10);
        assert_eq!(p.c, 0.0);
        assert!((lam - 0.6956).abs() < 1e-3);
    }

    fn random_point(rng: &mut ChaCha8Rng, scale: f64) -> CostPoint {
        CostPoint::new(
            scale * (rng.random::<f64>() - 0.3),
            scale * (rng.random::<f64>() - 0.5),
            scale * (rng.random::<f64>() - 0.5),
        )
    }

    #[test]
    fn projection_properties_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..2000 {
            let delta = 0.25 + 2.0 * rng.random::<f64>();
            let set = Paraboloid::new(delta);
            let p = random_point(&mut rng, 4.0);
            let proj = project_paraboloid(p, delta);
            // Feasibility and idempotence.
            assert!(set.gauge(proj) <= 1e-10, "gauge {}", set.gauge(proj));
            let again = project_paraboloid(proj, delta);
            assert!(
                (again.a - proj.a).abs() + (again.b - proj.b).abs() + (again.c - proj.c).abs()
                    < 1e-10
            );
            // KKT: p − proj is parallel to the outward normal (1, b, c/δ²).
            if set.gauge(p) > 0.0 {
                let lam = p.a - proj.a;
                assert!(lam > 0.0);
                assert!((p.b - proj.b - lam * proj.b).abs() < 1e-9);
                assert!((p.c - proj.c - lam * proj.c / (delta * delta)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn moreau_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..2000 {
            let delta = 0.5 + rng.random::<f64>();
            let tau = 0.1 + 3.0 * rng.random::<f64>();
            let p = random_point(&mut rng, 3.0);
            let prox = prox_f_delta(p, tau, delta);
            let proj = project_paraboloid(CostPoint::new(p.a / tau, p.b / tau, p.c / tau), delta);
            assert!((prox.a + tau * proj.a - p.a).abs() < 1e-10);
            assert!((prox.b + tau * proj.b - p.b).abs() < 1e-10);
            assert!((prox.c + tau * proj.c - p.c).abs() < 1e-10);
            assert!(prox.a >= 0.0, "prox density slot {}", prox.a);
        }
    }

    #[test]
    fn prox_zero_cases() {
        // p/τ inside the paraboloid: prox is the origin.
        let p = CostPoint::new(-2.0, 0.3, -0.1);
        let prox = prox_f_delta(p, 1.0, 1.0);
        assert!(prox.a.abs() < 1e-12 && (prox.b - 0.0).abs() < 1.0);
        let inside = Paraboloid::new(1.0).gauge(p) <= 0.0;
        if inside {
            assert!(prox.a.abs() + prox.b.abs() + prox.c.abs() < 1e-12);
        }
        // The zero-cost ray is fixed.
        let q = prox_f_delta(CostPoint::new(5.0, 0.0, 0.0), 1.0, 1.0);
        assert_eq!(q, CostPoint::new(5.0, 0.0, 0.0));
    }

    #[test]
    fn one_homogeneity_dyadic_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..500 {
            let p = CostPoint::new(
                rng.random::<f64>() + 0.01,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            );
            let delta = 0.5 + rng.random::<f64>();
            // Powers of two scale exactly in binary floating point.
            for s in [0.25f64, 0.5, 2.0, 8.0] {
                let lhs = f_delta(CostPoint::new(s * p.a, s * p.b, s * p.c), delta);
                let rhs = s * f_delta(p, delta);
                assert_eq!(lhs.to_bits(), rhs.to_bits());
            }
            // General positive scale within roundoff.
            let s = 0.3 + rng.random::<f64>();
            let lhs = f_delta(CostPoint::new(s * p.a, s * p.b, s * p.c), delta);
            let rhs = s * f_delta(p, delta);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }

    #[test]
    fn midpoint_convexity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..1000 {
            let delta = 0.5 + rng.random::<f64>();
            let p = CostPoint::new(rng.random::<f64>() + 0.01, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let q = CostPoint::new(rng.random::<f64>() + 0.01, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let mid = CostPoint::new(0.5 * (p.a + q.a), 0.5 * (p.b + q.b), 0.5 * (p.c + q.c));
            let lhs = f_delta(mid, delta);
            let rhs = 0.5 * (f_delta(p, delta) + f_delta(q, delta));
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn fenchel_inequality_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for _ in 0..1000 {
            let delta = 0.5 + rng.random::<f64>();
            // Sample p inside B_delta.
            let b = rng.random::<f64>() - 0.5;
            let c = rng.random::<f64>() - 0.5;
            let a = -0.5 * (b * b + c * c / (delta * delta)) - rng.random::<f64>();
            let q = CostPoint::new(rng.random::<f64>() + 0.01, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let pairing = a * q.a + b * q.b + c * q.c;
            assert!(pairing <= f_delta(q, delta) + 1e-12);
        }
    }

    #[test]
    fn path_energy_zero_fields() {
        let (g, t) = crate::grid::build_grids(crate::grid::DomainKind::Interval, 4, 3).unwrap();
        let v = CenteredFields::zeros(&g, &t);
        assert_eq!(path_energy(&v, &g, &t, 1.0), 0.0);
    }

    #[test]
    fn path_energy_infinite_on_domain_violation() {
        let (g, t) = crate::grid::build_grids(crate::grid::DomainKind::Interval, 4, 3).unwrap();
        let mut v = CenteredFields::zeros(&g, &t);
        v.zeta[[1, 2]] = 0.5; // source with zero density
        assert_eq!(path_energy(&v, &g, &t, 1.0), f64::INFINITY);
        v.zeta[[1, 2]] = 0.0;
        v.rho[[0, 0]] = -1e-9; // a real negative density, not roundoff
        assert_eq!(path_energy(&v, &g, &t, 1.0), f64::INFINITY);
        v.rho[[0, 0]] = -1e-13; // snapped to the zero branch
        assert_eq!(path_energy(&v, &g, &t, 1.0), 0.0);
    }
}
