//! JSON descriptors for potentials and transport problems, used by the CLI
//! and suite configs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::potential::{Perturbation, PotentialForm, PotentialSpec};
use crate::symcalc::SymMatrix;
use crate::transport::{EntropicConfig, SolverKind, TransportProblem};
use crate::verify::registry_entry;

#[derive(Debug, Serialize, Deserialize)]
pub struct GridJson {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub n: Vec<usize>,
}

impl GridJson {
    pub fn to_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.low.clone(), self.high.clone(), self.n.clone())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FormJson {
    Gaussian {
        mean: Vec<f64>,
        /// Row-major covariance.
        covariance: Vec<f64>,
    },
    QuadraticPlus {
        /// Row-major quadratic base A in ½⟨x, A x⟩.
        base: Vec<f64>,
        perturbation: String,
        amplitude: f64,
    },
    /// Binary grid field on disk (see the GridField layout).
    Grid { path: String },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PotentialJson {
    pub form: FormJson,
    pub convex: bool,
    pub box_low: Vec<f64>,
    pub box_high: Vec<f64>,
}

impl PotentialJson {
    pub fn to_spec(&self, base_dir: &Path) -> Result<PotentialSpec> {
        let dim = self.box_low.len();
        let form = match &self.form {
            FormJson::Gaussian { mean, covariance } => PotentialForm::Gaussian {
                mean: mean.clone(),
                covariance: SymMatrix::from_dense(dim, covariance)?,
            },
            FormJson::QuadraticPlus {
                base,
                perturbation,
                amplitude,
            } => PotentialForm::QuadraticPlus {
                base: SymMatrix::from_dense(dim, base)?,
                perturbation: Perturbation::from_name(perturbation)?,
                amplitude: *amplitude,
            },
            FormJson::Grid { path } => {
                let field = GridField::load(base_dir.join(path))?;
                PotentialForm::Grid(field)
            }
        };
        Ok(PotentialSpec {
            form,
            convex: self.convex,
            domain_low: self.box_low.clone(),
            domain_high: self.box_high.clone(),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SolverJson {
    Quantile1d,
    Entropic {
        #[serde(default)]
        epsilon_schedule: Vec<f64>,
        #[serde(default = "default_max_iters")]
        max_iters: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
}

fn default_max_iters() -> usize {
    EntropicConfig::default().max_iters
}

fn default_tol() -> f64 {
    EntropicConfig::default().tol
}

impl SolverJson {
    pub fn to_solver(&self) -> SolverKind {
        match self {
            SolverJson::Quantile1d => SolverKind::Quantile1d,
            SolverJson::Entropic {
                epsilon_schedule,
                max_iters,
                tol,
            } => SolverKind::Entropic(EntropicConfig {
                epsilon_schedule: epsilon_schedule.clone(),
                max_iters: *max_iters,
                tol: *tol,
            }),
        }
    }
}

/// A transport problem: either a registry reference or a fully inline spec.
#[derive(Debug, Serialize, Deserialize)]
pub struct ProblemJson {
    #[serde(default)]
    pub registry: Option<String>,
    #[serde(default)]
    pub mu: Option<PotentialJson>,
    #[serde(default)]
    pub nu: Option<PotentialJson>,
    #[serde(default)]
    pub primal: Option<GridJson>,
    #[serde(default)]
    pub dual: Option<GridJson>,
    #[serde(default)]
    pub solver: Option<SolverJson>,
    #[serde(default)]
    pub window_fraction: Option<f64>,
}

impl ProblemJson {
    pub fn to_problem(&self, base_dir: &Path) -> Result<TransportProblem> {
        if let Some(id) = &self.registry {
            let mut problem = registry_entry(id)?.problem();
            if let Some(w) = self.window_fraction {
                problem.window_fraction = w;
            }
            if let Some(solver) = &self.solver {
                problem.solver = solver.to_solver();
            }
            return Ok(problem);
        }
        let missing = |what: &str| Error::Config(format!("problem spec missing {what:?}"));
        let mu = self.mu.as_ref().ok_or_else(|| missing("mu"))?.to_spec(base_dir)?;
        let nu = self.nu.as_ref().ok_or_else(|| missing("nu"))?.to_spec(base_dir)?;
        let primal = self.primal.as_ref().ok_or_else(|| missing("primal"))?.to_spec()?;
        let dual = self.dual.as_ref().ok_or_else(|| missing("dual"))?.to_spec()?;
        let solver = self
            .solver
            .as_ref()
            .map(SolverJson::to_solver)
            .unwrap_or(if primal.dim == 1 {
                SolverKind::Quantile1d
            } else {
                SolverKind::Entropic(EntropicConfig::default())
            });
        Ok(TransportProblem {
            mu,
            nu,
            primal,
            dual,
            solver,
            window_fraction: self.window_fraction.unwrap_or(0.6),
        })
    }
}

pub fn load_problem(path: &Path) -> Result<TransportProblem> {
    let text = std::fs::read_to_string(path)?;
    let json: ProblemJson =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    json.to_problem(base)
}

pub fn load_potential(path: &Path) -> Result<PotentialSpec> {
    let text = std::fs::read_to_string(path)?;
    let json: PotentialJson =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    json.to_spec(base)
}
