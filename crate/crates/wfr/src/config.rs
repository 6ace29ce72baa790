//! JSON run configuration: domain, endpoints, constraint, solver overrides
//! and output options. Unknown keys are rejected so typos surface as config
//! errors with the offending field named.

use ndarray::{Array2, Array3};
use serde::Deserialize;

use crate::error::WfrError;
use crate::grid::{build_grids, DomainKind, SpatialGrid, TimeGrid};
use crate::measures::{
    constraint_preset, make_measure, ConstraintPreset, ConstraintSpec, DiscreteMeasure,
    MassTarget, MeasurePreset,
};
use crate::paths::{
    balanced_quantile_path, linear_fr_path, scaled_balanced_path, scaling_path, teleport_path,
    PathTriple,
};
use crate::solver::{Problem, SolverParams};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub kind: DomainKind,
    pub n_cells: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub n_steps: usize,
}

/// Measure descriptor: a named preset with parameters or an explicit
/// density array.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureConfig {
    Uniform { mass: f64 },
    Bump { center: f64, width: f64, mass: f64 },
    DiracCell { index: usize, mass: f64 },
    Mixture { components: Vec<MeasureConfig> },
    /// Explicit density samples, one per cell.
    Density { values: Vec<f64> },
}

impl MeasureConfig {
    fn to_preset(&self) -> Option<MeasurePreset> {
        match self {
            MeasureConfig::Uniform { mass } => Some(MeasurePreset::Uniform { mass: *mass }),
            MeasureConfig::Bump { center, width, mass } => {
                Some(MeasurePreset::Bump { center: *center, width: *width, mass: *mass })
            }
            MeasureConfig::DiracCell { index, mass } => {
                Some(MeasurePreset::DiracCell { index: *index, mass: *mass })
            }
            MeasureConfig::Mixture { components } => Some(MeasurePreset::Mixture(
                components.iter().filter_map(|c| c.to_preset()).collect(),
            )),
            MeasureConfig::Density { .. } => None,
        }
    }

    pub fn build(&self, grid: &SpatialGrid) -> Result<DiscreteMeasure, WfrError> {
        match self {
            MeasureConfig::Density { values } => DiscreteMeasure::from_density(grid, values.clone()),
            MeasureConfig::Mixture { components } => {
                // Mixtures may nest explicit densities; sum the parts.
                let mut acc = vec![0.0; grid.n_cells];
                for part in components {
                    let m = part.build(grid)?;
                    for (a, b) in acc.iter_mut().zip(m.density.iter()) {
                        *a += b;
                    }
                }
                DiscreteMeasure::from_density(grid, acc)
            }
            other => make_measure(&other.to_preset().expect("preset variant"), grid),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MassTargetConfig {
    Constant { value: f64 },
    /// `F(t) = a + b·t`
    Affine { a: f64, b: f64 },
    Samples { values: Vec<f64> },
}

impl MassTargetConfig {
    fn to_target(&self) -> MassTarget {
        match self {
            MassTargetConfig::Constant { value } => MassTarget::Constant(*value),
            MassTargetConfig::Affine { a, b } => MassTarget::Affine { a: *a, b: *b },
            MassTargetConfig::Samples { values } => MassTarget::Samples(values.clone()),
        }
    }
}

/// Constraint descriptor: a named preset, explicit sample arrays, or none.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintConfig {
    None,
    TotalMass { f: MassTargetConfig },
    SphericalHk,
    Moment {
        roots: Vec<f64>,
        #[serde(default)]
        value: f64,
    },
    Barrier { gamma0: [f64; 2], gamma1: [f64; 2] },
    Closure,
    /// Explicit samples: `h[i][k][j]` over constraint × time node × cell and
    /// `f[k][i]` over time node × constraint.
    Explicit { h: Vec<Vec<Vec<f64>>>, f: Vec<Vec<f64>> },
}

/// Accepts either a constraint descriptor object or the string `"none"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ConstraintField {
    Name(String),
    Config(ConstraintConfig),
}

impl ConstraintField {
    pub fn build(&self, grid: &SpatialGrid, tgrid: &TimeGrid) -> Result<ConstraintSpec, WfrError> {
        let config = match self {
            ConstraintField::Name(name) if name == "none" => {
                return Ok(ConstraintSpec::unconstrained(grid, tgrid));
            }
            ConstraintField::Name(name) => {
                return Err(WfrError::Config(format!(
                    "unknown constraint name {name:?}; did you mean \"none\" or a preset object?"
                )));
            }
            ConstraintField::Config(c) => c,
        };
        match config {
            ConstraintConfig::None => Ok(ConstraintSpec::unconstrained(grid, tgrid)),
            ConstraintConfig::TotalMass { f } => {
                constraint_preset(&ConstraintPreset::TotalMass { f: f.to_target() }, grid, tgrid)
            }
            ConstraintConfig::SphericalHk => {
                constraint_preset(&ConstraintPreset::SphericalHk, grid, tgrid)
            }
            ConstraintConfig::Moment { roots, value } => constraint_preset(
                &ConstraintPreset::Moment { roots: roots.clone(), value: *value },
                grid,
                tgrid,
            ),
            ConstraintConfig::Barrier { gamma0, gamma1 } => constraint_preset(
                &ConstraintPreset::Barrier {
                    gamma0: (gamma0[0], gamma0[1]),
                    gamma1: (gamma1[0], gamma1[1]),
                },
                grid,
                tgrid,
            ),
            ConstraintConfig::Closure => constraint_preset(&ConstraintPreset::Closure, grid, tgrid),
            ConstraintConfig::Explicit { h, f } => {
                let d = h.len();
                let nodes = tgrid.n_steps + 1;
                let n = grid.n_cells;
                if h.iter().any(|hk| hk.len() != nodes || hk.iter().any(|row| row.len() != n)) {
                    return Err(WfrError::Config(format!(
                        "explicit constraint h must be d × {nodes} × {n}"
                    )));
                }
                if f.len() != nodes || f.iter().any(|row| row.len() != d) {
                    return Err(WfrError::Config(format!(
                        "explicit constraint f must be {nodes} × {d}"
                    )));
                }
                let mut harr = Array3::zeros((d, nodes, n));
                for (i, hi) in h.iter().enumerate() {
                    for (k, row) in hi.iter().enumerate() {
                        for (j, &v) in row.iter().enumerate() {
                            harr[[i, k, j]] = v;
                        }
                    }
                }
                let mut farr = Array2::zeros((nodes, d));
                for (k, row) in f.iter().enumerate() {
                    for (i, &v) in row.iter().enumerate() {
                        farr[[k, i]] = v;
                    }
                }
                ConstraintSpec::from_samples(harr, farr, grid, tgrid)
            }
        }
    }
}

/// Optional solver overrides; anything unset falls back to the defaults for
/// the configured δ.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub max_iters: Option<usize>,
    pub dr_step: Option<f64>,
    pub relaxation: Option<f64>,
    pub cg_tol: Option<f64>,
    pub cg_max_iters: Option<usize>,
    pub fixed_point_tol: Option<f64>,
    pub log_every: Option<usize>,
}

impl SolverOverrides {
    pub fn apply(&self, delta: f64) -> SolverParams {
        let mut p = SolverParams::for_delta(delta);
        if let Some(v) = self.max_iters {
            p.max_iters = v;
        }
        if let Some(v) = self.dr_step {
            p.dr_step = v;
        }
        if let Some(v) = self.relaxation {
            p.relaxation = v;
        }
        if let Some(v) = self.cg_tol {
            p.cg_tol = v;
        }
        if let Some(v) = self.cg_max_iters {
            p.cg_max_iters = v;
        }
        if let Some(v) = self.fixed_point_tol {
            p.fixed_point_tol = v;
        }
        if let Some(v) = self.log_every {
            p.log_every = v;
        }
        p
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub directory: Option<String>,
    pub frame_stride: Option<usize>,
    pub formats: Option<Vec<String>>,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self { directory: None, frame_stride: None, formats: None }
    }
}

/// The run configuration document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub time: TimeConfig,
    pub delta: f64,
    pub rho0: MeasureConfig,
    pub rho1: MeasureConfig,
    pub constraint: ConstraintField,
    #[serde(default)]
    pub balanced: bool,
    #[serde(default)]
    pub feasibility_tol: Option<f64>,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, WfrError> {
        serde_json::from_str(text).map_err(|e| WfrError::Config(e.to_string()))
    }

    pub fn grids(&self) -> Result<(SpatialGrid, TimeGrid), WfrError> {
        build_grids(self.domain.kind, self.domain.n_cells, self.time.n_steps)
    }

    /// Builds the problem instance and the solver parameters.
    pub fn build(&self) -> Result<(Problem, SolverParams), WfrError> {
        let (grid, tgrid) = self.grids()?;
        let rho0 = self.rho0.build(&grid)?;
        let rho1 = self.rho1.build(&grid)?;
        let spec = self.constraint.build(&grid, &tgrid)?;
        let mut problem =
            Problem::new(rho0, rho1, spec, self.delta, grid, tgrid, self.balanced)?;
        if let Some(tol) = self.feasibility_tol {
            problem.feasibility_tol = tol;
        }
        let params = self.solver.apply(self.delta);
        params.validate()?;
        Ok((problem, params))
    }

    /// Total-mass target samples when the configured constraint prescribes
    /// them (used by the scaling-type path constructors).
    fn mass_target_samples(&self, tgrid: &TimeGrid) -> Option<Vec<f64>> {
        match &self.constraint {
            ConstraintField::Config(ConstraintConfig::TotalMass { f }) => match f {
                MassTargetConfig::Constant { value } => Some(vec![*value; tgrid.n_steps + 1]),
                MassTargetConfig::Affine { a, b } => {
                    Some(tgrid.nodes.iter().map(|&t| a + b * t).collect())
                }
                MassTargetConfig::Samples { values } => Some(values.clone()),
            },
            ConstraintField::Config(ConstraintConfig::SphericalHk) => {
                Some(vec![1.0; tgrid.n_steps + 1])
            }
            _ => None,
        }
    }

    /// Builds a closed-form path by constructor name: `teleport`,
    /// `linear_fr`, `scaling`, `balanced_quantile` or `scaled_balanced`.
    pub fn build_path(&self, constructor: &str) -> Result<PathTriple, WfrError> {
        let (grid, tgrid) = self.grids()?;
        let rho0 = self.rho0.build(&grid)?;
        let rho1 = self.rho1.build(&grid)?;
        let spec = self.constraint.build(&grid, &tgrid)?;
        match constructor {
            "teleport" => {
                if spec.d > 0 && spec.f_values.iter().any(|&f| f != 0.0) {
                    return Err(WfrError::PathConstruction(
                        "the teleport path requires a linear constraint (F ≡ 0)".into(),
                    ));
                }
                teleport_path(&rho0, &rho1, &grid, &tgrid, self.delta)
            }
            "linear_fr" => linear_fr_path(&rho0, &rho1, &grid, &tgrid, self.delta),
            "scaling" => {
                let f = self.mass_target_samples(&tgrid).ok_or_else(|| {
                    WfrError::PathConstruction(
                        "the scaling path needs a total-mass constraint to prescribe F".into(),
                    )
                })?;
                scaling_path(&rho0, &f, &grid, &tgrid, self.delta)
            }
            "balanced_quantile" => balanced_quantile_path(&rho0, &rho1, &grid, &tgrid, self.delta),
            "scaled_balanced" => {
                let f = self.mass_target_samples(&tgrid).ok_or_else(|| {
                    WfrError::PathConstruction(
                        "the scaled balanced path needs a total-mass constraint to prescribe F"
                            .into(),
                    )
                })?;
                scaled_balanced_path(&rho0, &rho1, &f, &grid, &tgrid, self.delta)
            }
            other => Err(WfrError::Config(format!(
                "unknown constructor {other:?}; expected teleport, linear_fr, scaling, \
                 balanced_quantile or scaled_balanced"
            ))),
        }
    }
}
