//! Brenier maps between log-concave densities: exact monotone rearrangement
//! in 1D, entropic regularization with an ε ladder in higher dimension, and
//! the Monge–Ampère diagnostics shared by both.

mod diagnostics;
mod entropic;
mod quantile;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::potential::PotentialSpec;
use crate::symcalc::SymMatrix;

pub use diagnostics::{
    monge_ampere_residual, sliced_w1, sup_good_hessian, ResidualReport, SupHessianReport,
};
pub use entropic::brenier_entropic;
pub use quantile::brenier_1d;

/// Entropic solver configuration. An empty schedule selects the default
/// geometric ladder ε_k = diam²·4^{-k}, k = 0..8, truncated at the kernel
/// resolution floor ε ≥ h²/2 (finer levels cannot be represented on the
/// marginal grids and only quantize the barycentric map).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropicConfig {
    #[serde(default)]
    pub epsilon_schedule: Vec<f64>,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for EntropicConfig {
    fn default() -> Self {
        EntropicConfig {
            epsilon_schedule: Vec::new(),
            max_iters: 5000,
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub enum SolverKind {
    /// 1D quantile coupling T = F_ν⁻¹ ∘ F_μ.
    Quantile1d,
    /// Symmetric scaling iterations over an ε ladder with warm starts.
    Entropic(EntropicConfig),
}

/// A transport instance: marginal potentials, their discretization grids, a
/// solver, and the central window fraction on which derived quantities are
/// trusted (boundary layers carry truncation artifacts).
#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub mu: PotentialSpec,
    pub nu: PotentialSpec,
    pub primal: GridSpec,
    pub dual: GridSpec,
    pub solver: SolverKind,
    pub window_fraction: f64,
}

impl TransportProblem {
    pub fn dim(&self) -> usize {
        self.primal.dim
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.primal.dim;
        if self.dual.dim != d || self.mu.dim() != d || self.nu.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.dual.dim,
            });
        }
        if self.window_fraction.is_nan()
            || self.window_fraction <= 0.0
            || self.window_fraction > 1.0
        {
            return Err(Error::InvalidSpec(format!(
                "window fraction {} outside (0, 1]",
                self.window_fraction
            )));
        }
        Ok(())
    }
}

/// Solver diagnostics recorded with every solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    /// L∞ marginal violation (mass units) at exit.
    pub marginal_error: f64,
    pub epsilon_ladder: Vec<f64>,
    /// 1-Wasserstein distance between the push-forward of μ under T and ν
    /// (exact CDF integral in 1D, sliced estimate with 16 seeded directions
    /// otherwise). Reported, never asserted: acceptance thresholds live in
    /// the harness.
    pub push_tol: f64,
    /// max over the window of |T − ∇φ| (central differences of φ).
    pub map_consistency: f64,
    /// max over the window of |T_extrapolated − T_final-ε|.
    pub extrapolation_residual: f64,
}

/// Raw dual potential at one ε level, kept for extrapolation margins.
#[derive(Debug, Clone)]
pub struct RawLevel {
    pub epsilon: f64,
    pub potential: GridField,
}

/// A computed Brenier solution on the primal grid.
///
/// For entropic solves the map and the potential are Richardson-extrapolated
/// across the last two ε levels (the raw levels stay available in
/// `raw_levels` so error margins can be measured rather than assumed); the
/// Hessian field is the central-difference Hessian of the extrapolated
/// potential.
#[derive(Debug, Clone)]
pub struct BrenierSolution {
    pub grid: GridSpec,
    /// Map components T_1..T_d as grid fields.
    pub map: Vec<GridField>,
    /// Brenier potential φ (up to an additive constant).
    pub potential: GridField,
    /// ∇²φ per node; `None` on the boundary or where the stencil failed.
    pub hessian: Vec<Option<SymMatrix>>,
    /// Inclusive index ranges of the trusted central window.
    pub window: Vec<(usize, usize)>,
    pub meta: SolverDiagnostics,
    /// Last two raw ε levels (entropic only), oldest first.
    pub raw_levels: Vec<RawLevel>,
}

impl BrenierSolution {
    /// Interpolated map value at an arbitrary point.
    pub fn map_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.map.iter().map(|comp| comp.interpolate(x)).collect()
    }

    pub fn in_window(&self, multi: &[usize]) -> bool {
        multi
            .iter()
            .zip(&self.window)
            .all(|(&i, &(lo, hi))| i >= lo && i <= hi)
    }

    /// Window nodes that also keep one-node interior margin.
    pub fn window_nodes(&self) -> Vec<Vec<usize>> {
        self.grid
            .interior_nodes(1)
            .into_iter()
            .filter(|m| self.in_window(m))
            .collect()
    }

    pub fn hessian_at(&self, multi: &[usize]) -> Option<&SymMatrix> {
        self.hessian[self.grid.flat(multi)].as_ref()
    }

    /// Write the solution as binary grid fields plus a JSON diagnostics
    /// sidecar.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (k, comp) in self.map.iter().enumerate() {
            comp.save(dir.join(format!("map_{k}.bin")))?;
        }
        self.potential.save(dir.join("potential.bin"))?;
        let json = serde_json::to_string_pretty(&self.meta)
            .map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(dir.join("diagnostics.json"), json)?;
        Ok(())
    }
}

/// Normalized node masses e^{-V(x_i)}·h^d / Z with Σ = 1 (plain-sum
/// convention); masked or underflowed nodes carry zero.
pub fn density_masses(pot: &PotentialSpec, spec: &GridSpec) -> Result<Vec<f64>> {
    let len = spec.len();
    let mut masses = vec![0.0f64; len];
    for (idx, mass) in masses.iter_mut().enumerate() {
        let x = spec.node(&spec.unflatten(idx));
        let v = match pot.eval(&x) {
            Ok(v) => v,
            Err(Error::Domain { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if v.is_finite() {
            *mass = (-v).exp();
        }
    }
    let total: f64 = masses.iter().sum();
    if total.is_nan() || total <= 1e-300 {
        return Err(Error::Mass("density mass vanishes on the grid".into()));
    }
    for m in &mut masses {
        *m /= total;
    }
    Ok(masses)
}

/// Solve a transport problem with its configured solver.
pub fn solve(problem: &TransportProblem) -> Result<BrenierSolution> {
    problem.validate()?;
    match &problem.solver {
        SolverKind::Quantile1d => brenier_1d(problem),
        SolverKind::Entropic(cfg) => brenier_entropic(problem, cfg),
    }
}

/// Map-consistency diagnostic: max over window nodes and components of
/// |T_k − ∂_k φ| with central differences of φ.
pub(crate) fn measure_map_consistency(
    grid: &GridSpec,
    map: &[GridField],
    potential: &GridField,
    window: &[(usize, usize)],
) -> f64 {
    let d = grid.dim;
    let mut worst = 0.0f64;
    for multi in grid.interior_nodes(1) {
        if !multi
            .iter()
            .zip(window)
            .all(|(&i, &(lo, hi))| i >= lo && i <= hi)
        {
            continue;
        }
        for a in 0..d {
            let mut plus = multi.clone();
            plus[a] += 1;
            let mut minus = multi.clone();
            minus[a] -= 1;
            let (Some(p), Some(m)) = (potential.get(&plus), potential.get(&minus)) else {
                continue;
            };
            let grad = (p - m) / (2.0 * grid.spacing(a));
            if let Some(t) = map[a].get(&multi) {
                worst = worst.max((t - grad).abs());
            }
        }
    }
    worst
}
