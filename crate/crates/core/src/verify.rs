//! End-to-end verification: problem registry, constant estimation, bound
//! reports with honest error margins, the anisotropic reduction, the
//! bootstrap recurrence, and suite execution.
//!
//! The certified inequality is ‖f(∇²φ)‖_∞ ≤ √(Λ_V·(1/λ_W)). A report
//! assembles the empirical Λ_V, 1/λ_W, and sup f(∇²φ) together with additive
//! margins from stencil truncation, solver residuals, and ε-extrapolation;
//! discretization can therefore never fake a counterexample — a violation is
//! only declared beyond the combined margin.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conjugate::{estimate_dual_constant, hessian_fd, ConjugateGrids};
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::mollify::{truncate_and_mollify_w, MollifierSpec};
use crate::potential::{Perturbation, PotentialForm, PotentialSpec};
use crate::symcalc::{eval_good, GoodFunctionSpec, GoodKind, SymMatrix};
use crate::transport::{
    solve, sup_good_hessian, BrenierSolution, EntropicConfig, SolverKind, TransportProblem,
};

/// Additive error margins carried by a report, in the units of the quantity
/// they guard.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Margins {
    /// Finite-difference truncation on sup f(∇²φ).
    pub stencil: f64,
    /// Solver residual (marginal violation) at exit.
    pub solver: f64,
    /// Magnitude of the ε-extrapolation correction on the sup.
    pub extrapolation: f64,
    /// Resolution margin on Λ_V.
    pub lambda_v: f64,
    /// Resolution margin on 1/λ_W.
    pub inv_lambda_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Saturated,
    Satisfied,
    ViolatedWithinMargin,
    Violated,
}

/// Verification record for one (problem, f) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub problem_id: String,
    pub f: GoodFunctionSpec,
    pub lambda_v: f64,
    pub inv_lambda_w: f64,
    /// √(Λ_V · (1/λ_W)).
    pub bound: f64,
    pub sup_f_hessian_phi: f64,
    /// sup / bound.
    pub ratio: f64,
    pub margins: Margins,
    /// Combined margin on the ratio scale.
    pub total_margin: f64,
    pub verdict: Verdict,
}

impl BoundReport {
    pub fn csv_header() -> &'static str {
        "problem,f,lambda_v,inv_lambda_w,bound,sup_f_hessian_phi,ratio,total_margin,verdict"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.6},{:.3e},{:?}",
            self.problem_id,
            self.f.label(),
            self.lambda_v,
            self.inv_lambda_w,
            self.bound,
            self.sup_f_hessian_phi,
            self.ratio,
            self.total_margin,
            self.verdict
        )
    }
}

/// Closed-form data for registry entries with known affine maps.
#[derive(Debug, Clone)]
pub struct KnownExact {
    /// T(x) = M x.
    pub map: SymMatrix,
    pub hess_v: SymMatrix,
    pub hess_w_star: SymMatrix,
}

/// One shipped verification problem.
#[derive(Debug, Clone)]
pub struct RegistryEntry {
    pub id: String,
    pub mu: PotentialSpec,
    pub nu: PotentialSpec,
    pub dim: usize,
    pub primal: GridSpec,
    pub dual: GridSpec,
    pub solver: SolverKind,
    /// Grids for the empirical 1/λ_W (conjugate + finite differences).
    pub dual_constant_grids: ConjugateGrids,
    pub known_exact: Option<KnownExact>,
    pub tags: Vec<String>,
}

impl RegistryEntry {
    pub fn problem(&self) -> TransportProblem {
        TransportProblem {
            mu: self.mu.clone(),
            nu: self.nu.clone(),
            primal: self.primal.clone(),
            dual: self.dual.clone(),
            solver: self.solver.clone(),
            window_fraction: 0.6,
        }
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }
}

/// Gaussian↔Gaussian entry with the sharp closed form.
fn gaussian_pair_entry(
    id: &str,
    dim: usize,
    alpha: f64,
    beta_axes: &[f64],
    n_primal: usize,
    n_dual_axis: impl Fn(usize) -> usize,
    tags: &[&str],
) -> Result<RegistryEntry> {
    let mu = PotentialSpec::gaussian_isotropic(dim, alpha, 6.2 * alpha)?;
    let cov_nu = SymMatrix::diag(&beta_axes.iter().map(|b| b * b).collect::<Vec<_>>());
    let nu_half: Vec<f64> = beta_axes.iter().map(|b| 6.2 * b).collect();
    let nu = PotentialSpec {
        form: PotentialForm::Gaussian {
            mean: vec![0.0; dim],
            covariance: cov_nu.clone(),
        },
        convex: true,
        domain_low: nu_half.iter().map(|h| -h).collect(),
        domain_high: nu_half.clone(),
    };
    let primal = GridSpec::cube(dim, -6.2 * alpha, 6.2 * alpha, n_primal)?;
    let dual = GridSpec::new(
        nu_half.iter().map(|h| -h).collect(),
        nu_half.clone(),
        (0..dim).map(&n_dual_axis).collect(),
    )?;
    let solver = if dim == 1 {
        SolverKind::Quantile1d
    } else {
        SolverKind::Entropic(EntropicConfig::default())
    };
    // Commensurate conjugate grids: the dual-side grid is the ν box scaled by
    // 1/β² per axis with the same node count, so the discrete maximizer of
    // x·y − W(x) is exactly on-grid and the FD Hessian of W* is exact.
    let conj_n = 201;
    let conj_dual = GridSpec::new(
        (0..dim).map(|a| -6.2 / beta_axes[a]).collect(),
        (0..dim).map(|a| 6.2 / beta_axes[a]).collect(),
        vec![conj_n; dim],
    )?;
    let map = SymMatrix::diag(
        &beta_axes
            .iter()
            .map(|b| b / alpha)
            .collect::<Vec<_>>(),
    );
    let hess_v = SymMatrix::identity(dim).scale(1.0 / (alpha * alpha));
    Ok(RegistryEntry {
        id: id.to_string(),
        mu,
        nu,
        dim,
        primal,
        dual,
        solver,
        dual_constant_grids: ConjugateGrids {
            primal_n: conj_n,
            dual: conj_dual,
        },
        known_exact: Some(KnownExact {
            map,
            hess_v,
            hess_w_star: cov_nu,
        }),
        tags: tags.iter().map(|t| t.to_string()).collect(),
    })
}

/// Compactly supported target: truncated-and-mollified Gaussian on B̄_R.
fn bump_target(dim: usize, beta: f64, radius: f64, t: f64, n: usize) -> Result<PotentialSpec> {
    let base = PotentialSpec::gaussian_isotropic(dim, beta, radius + 3.0 * t)?;
    let grid = GridSpec::cube(dim, -(radius + 2.0 * t), radius + 2.0 * t, n)?;
    let truncated = truncate_and_mollify_w(&base, &MollifierSpec::new(t)?, radius, &grid)?;
    PotentialSpec::grid_sampled(truncated.field, true)
}

/// The shipped registry: sharp Gaussian pairs (several α, β, both solvers),
/// an anisotropic Gaussian target, compact-support targets for the decay
/// probe, and a quartic-perturbed 1D pair.
pub fn registry() -> Result<Vec<RegistryEntry>> {
    let mut entries = Vec::new();

    entries.push(gaussian_pair_entry(
        "gauss1d-identity",
        1,
        1.0,
        &[1.0],
        4001,
        |_| 4001,
        &["oneD", "identity", "sharp"],
    )?);
    entries.push(gaussian_pair_entry(
        "gauss1d-sharp-a1-b2",
        1,
        1.0,
        &[2.0],
        4001,
        |_| 4001,
        &["oneD", "sharp"],
    )?);
    entries.push(gaussian_pair_entry(
        "gauss1d-sharp-a2-b1",
        1,
        2.0,
        &[1.0],
        4001,
        |_| 4001,
        &["oneD", "sharp", "contraction"],
    )?);
    entries.push(gaussian_pair_entry(
        "gauss2d-identity",
        2,
        1.0,
        &[1.0, 1.0],
        71,
        |_| 71,
        &["twoD", "identity", "sharp"],
    )?);
    entries.push(gaussian_pair_entry(
        "gauss2d-sharp-a1-b2",
        2,
        1.0,
        &[2.0, 2.0],
        63,
        |_| 95,
        &["twoD", "sharp"],
    )?);
    entries.push(gaussian_pair_entry(
        "gauss2d-aniso",
        2,
        1.0,
        &[2.0, 1.0],
        63,
        |axis| if axis == 0 { 95 } else { 63 },
        &["twoD", "anisotropic"],
    )?);

    // Quartic-perturbed 1D pair: W = x⁴/4 + x²/2 (so ∇²W* ≤ 1 with the sup
    // at the origin), V Gaussian.
    {
        let mu = PotentialSpec::gaussian_isotropic(1, 1.0, 6.2)?;
        let nu = PotentialSpec::quadratic_plus(
            SymMatrix::identity(1),
            Perturbation::QuarticRadial,
            1.0,
            6.2,
            true,
        );
        entries.push(RegistryEntry {
            id: "gauss1d-quartic".into(),
            mu,
            nu,
            dim: 1,
            primal: GridSpec::line(-6.2, 6.2, 4001)?,
            dual: GridSpec::line(-6.2, 6.2, 4001)?,
            solver: SolverKind::Quantile1d,
            dual_constant_grids: ConjugateGrids {
                primal_n: 100_001,
                dual: GridSpec::line(-6.0, 6.0, 121)?,
            },
            known_exact: None,
            tags: vec!["oneD".into(), "quartic".into()],
        });
    }

    // Compact-support targets for the far-field decay probe: ν bounded
    // away from zero in B_j and vanishing outside.
    {
        let nu = bump_target(1, 2.0, 1.0, 0.2, 561)?;
        entries.push(RegistryEntry {
            id: "gauss1d-bump".into(),
            mu: PotentialSpec::gaussian_isotropic(1, 1.0, 6.2)?,
            nu,
            dim: 1,
            primal: GridSpec::line(-6.2, 6.2, 4001)?,
            dual: GridSpec::line(-1.4, 1.4, 561)?,
            solver: SolverKind::Quantile1d,
            dual_constant_grids: ConjugateGrids {
                primal_n: 0,
                dual: GridSpec::line(-0.8, 0.8, 33)?,
            },
            known_exact: None,
            tags: vec!["oneD".into(), "compact-support".into()],
        });
        let nu2 = bump_target(2, 2.0, 1.0, 0.2, 225)?;
        entries.push(RegistryEntry {
            id: "gauss2d-bump".into(),
            mu: PotentialSpec::gaussian_isotropic(2, 1.0, 6.2)?,
            nu: nu2,
            dim: 2,
            primal: GridSpec::cube(2, -6.2, 6.2, 125)?,
            dual: GridSpec::cube(2, -1.4, 1.4, 225)?,
            solver: SolverKind::Entropic(EntropicConfig::default()),
            dual_constant_grids: ConjugateGrids {
                primal_n: 0,
                dual: GridSpec::cube(2, -0.8, 0.8, 17)?,
            },
            known_exact: None,
            tags: vec!["twoD".into(), "compact-support".into()],
        });
    }

    Ok(entries)
}

pub fn registry_entry(id: &str) -> Result<RegistryEntry> {
    registry()?
        .into_iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::Config(format!("unknown registry problem {id:?}")))
}

/// Empirical primal constant with a resolution margin.
#[derive(Debug, Clone)]
pub struct PrimalConstant {
    pub value: f64,
    /// Half the largest neighbor jump of the scanned values (zero for closed
    /// forms): how much a between-node peak could exceed the grid sup.
    pub margin: f64,
    pub skipped: usize,
}

/// ess-sup of f(∇²V) over the grid. Closed form for Gaussians (the Hessian
/// is constant); analytic Hessian scan for quadratic-plus; finite
/// differences with failure counting for sampled fields.
pub fn estimate_primal_constant(
    v: &PotentialSpec,
    f: &GoodFunctionSpec,
    grid: &GridSpec,
) -> Result<PrimalConstant> {
    match &v.form {
        PotentialForm::Gaussian { covariance, .. } => Ok(PrimalConstant {
            value: eval_good(f, &covariance.inverse_spd()?)?,
            margin: 0.0,
            skipped: 0,
        }),
        PotentialForm::QuadraticPlus { .. } => {
            let mut values = vec![f64::NEG_INFINITY; grid.len()];
            let mut best = f64::NEG_INFINITY;
            for (idx, slot) in values.iter_mut().enumerate() {
                let x = grid.node(&grid.unflatten(idx));
                let hess = v
                    .hess_closed(&x)
                    .ok_or_else(|| Error::InvalidSpec("missing closed Hessian".into()))?;
                let value = eval_good(f, &hess)?;
                *slot = value;
                best = best.max(value);
            }
            Ok(PrimalConstant {
                value: best,
                margin: 0.5 * max_neighbor_jump(grid, &values),
                skipped: 0,
            })
        }
        PotentialForm::Grid(field) => {
            let mut values = vec![f64::NEG_INFINITY; field.spec.len()];
            let mut best = f64::NEG_INFINITY;
            let mut skipped = 0usize;
            let mut nodes = 0usize;
            for multi in field.spec.interior_nodes(1) {
                match hessian_fd(field, &multi) {
                    Ok(h) => {
                        let value = eval_good(f, &h)?;
                        values[field.spec.flat(&multi)] = value;
                        best = best.max(value);
                        nodes += 1;
                    }
                    Err(Error::Stencil(_)) => skipped += 1,
                    Err(e) => return Err(e),
                }
            }
            if nodes == 0 {
                return Err(Error::Degenerate("no admissible nodes".into()));
            }
            Ok(PrimalConstant {
                value: best,
                margin: 0.5 * max_neighbor_jump(&field.spec, &values),
                skipped,
            })
        }
    }
}

fn max_neighbor_jump(grid: &GridSpec, values: &[f64]) -> f64 {
    let mut jump = 0.0f64;
    for idx in 0..grid.len() {
        if values[idx] == f64::NEG_INFINITY {
            continue;
        }
        let multi = grid.unflatten(idx);
        for a in 0..grid.dim {
            if multi[a] + 1 < grid.n[a] {
                let mut next = multi.clone();
                next[a] += 1;
                let other = values[grid.flat(&next)];
                if other != f64::NEG_INFINITY {
                    jump = jump.max((values[idx] - other).abs());
                }
            }
        }
    }
    jump
}

/// sup f(∇²φ) over the window of a raw (single-ε) potential field.
fn sup_over_field(potential: &GridField, f: &GoodFunctionSpec, window: &[(usize, usize)]) -> Result<f64> {
    let grid = &potential.spec;
    let mut best = f64::NEG_INFINITY;
    for multi in grid.interior_nodes(1) {
        if !multi
            .iter()
            .zip(window)
            .all(|(&i, &(lo, hi))| i >= lo && i <= hi)
        {
            continue;
        }
        if let Ok(h) = hessian_fd(potential, &multi) {
            best = best.max(eval_good(f, &h)?);
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::Degenerate("empty window".into()));
    }
    Ok(best)
}

/// Stencil margin for a second-difference Hessian of `field` restricted to
/// `window`: per-entry truncation ≈ Δ⁴/(12 h²), at most d entries enter f.
fn stencil_margin(field: &GridField, window: &[(usize, usize)]) -> f64 {
    let d = field.spec.dim as f64;
    let h_min = (0..field.spec.dim)
        .map(|a| field.spec.spacing(a))
        .fold(f64::INFINITY, f64::min);
    d * field.max_fourth_difference_in(window) / (12.0 * h_min * h_min)
}

pub fn solve_entry(entry: &RegistryEntry) -> Result<BrenierSolution> {
    solve(&entry.problem())
}

/// Full pipeline for one (entry, f) pair reusing an existing solution.
pub fn verify_bound_with_solution(
    entry: &RegistryEntry,
    f: &GoodFunctionSpec,
    sol: &BrenierSolution,
) -> Result<BoundReport> {
    let primal_estimate = estimate_primal_constant(&entry.mu, f, &entry.primal)?;
    let lambda_v = primal_estimate.value;

    let dual_estimate = estimate_dual_constant(&entry.nu, f, &entry.dual_constant_grids)?;
    // Resolution margin: rerun at half the dual resolution and take the
    // difference (Richardson-style error witness).
    let coarse_grids = ConjugateGrids {
        primal_n: entry.dual_constant_grids.primal_n,
        dual: GridSpec::new(
            entry.dual_constant_grids.dual.low.clone(),
            entry.dual_constant_grids.dual.high.clone(),
            entry
                .dual_constant_grids
                .dual
                .n
                .iter()
                .map(|&n| ((n - 1) / 2 + 1).max(5))
                .collect(),
        )?,
    };
    let dual_coarse = estimate_dual_constant(&entry.nu, f, &coarse_grids)?;
    let inv_lambda_w = dual_estimate.value;
    let margin_w = (dual_estimate.value - dual_coarse.value).abs();

    let positive_finite = |v: f64| v.is_finite() && v > 0.0;
    if !positive_finite(lambda_v) || !positive_finite(inv_lambda_w) {
        return Err(Error::Degenerate(format!(
            "constants not finite and positive: Λ_V = {lambda_v}, 1/λ_W = {inv_lambda_w}"
        )));
    }

    let sup_report = sup_good_hessian(sol, f)?;
    let mut sup = sup_report.value;
    let mut extrapolation_margin = 0.0;
    if sol.raw_levels.len() == 2 {
        // The solution Hessian already comes from the ε-extrapolated
        // potential; measure the size of that correction on the sup scale.
        let sup_prev = sup_over_field(&sol.raw_levels[0].potential, f, &sol.window)?;
        let sup_last = sup_over_field(&sol.raw_levels[1].potential, f, &sol.window)?;
        let rho = sol.raw_levels[0].epsilon / sol.raw_levels[1].epsilon;
        let sup_star = (rho * sup_last - sup_prev) / (rho - 1.0);
        // Guard against extrapolation overshoot: keep the field-based sup but
        // widen the margin by any disagreement with the scalar-extrapolated
        // value.
        extrapolation_margin = (sup_last - sup_prev).abs() / (rho - 1.0) + (sup_star - sup).abs();
        if !sup.is_finite() {
            sup = sup_star;
        }
    }

    let stencil = stencil_margin(&sol.potential, &sol.window);
    let margins = Margins {
        stencil,
        solver: sol.meta.marginal_error,
        extrapolation: extrapolation_margin,
        lambda_v: primal_estimate.margin,
        inv_lambda_w: margin_w,
    };

    let bound = (lambda_v * inv_lambda_w).sqrt();
    let ratio = sup / bound;
    let total_margin = (margins.stencil + margins.solver + margins.extrapolation) / bound
        + ratio * (margins.lambda_v / (2.0 * lambda_v) + margins.inv_lambda_w / (2.0 * inv_lambda_w));

    let verdict = if ratio > 1.0 + total_margin {
        Verdict::Violated
    } else if ratio > 1.0 {
        Verdict::ViolatedWithinMargin
    } else if (ratio - 1.0).abs() <= total_margin {
        Verdict::Saturated
    } else {
        Verdict::Satisfied
    };

    Ok(BoundReport {
        problem_id: entry.id.clone(),
        f: f.clone(),
        lambda_v,
        inv_lambda_w,
        bound,
        sup_f_hessian_phi: sup,
        ratio,
        margins,
        total_margin,
        verdict,
    })
}

/// Solve the entry and verify one good function against it.
pub fn verify_bound(entry: &RegistryEntry, f: &GoodFunctionSpec) -> Result<BoundReport> {
    let sol = solve_entry(entry)?;
    verify_bound_with_solution(entry, f, &sol)
}

/// Report of the anisotropic reduction f(X) = ⟨X, Y⟩ → Laplacian of the
/// A-transformed problem, A = Y^{1/2}.
#[derive(Debug, Clone)]
pub struct AnisotropicReport {
    /// max over samples of |ΔV_A(x) − ⟨∇²V(Ax), Y⟩| (algebraic identity,
    /// machine-zero for analytic V).
    pub potential_identity_gap: f64,
    /// max relative gap between Δφ_A(x) and ⟨∇²φ(Ax), Y⟩ over the window.
    pub hessian_identity_rel_gap: f64,
    /// Empirical sup of Δφ_A over the transformed window.
    pub sup_laplacian_transformed: f64,
    /// Empirical sup of ⟨∇²φ, Y⟩ on the original problem window.
    pub sup_inner_original: f64,
}

/// Congruence M·X·M for symmetric M (used for A-transformed covariances).
fn congruence(m: &SymMatrix, x: &SymMatrix) -> SymMatrix {
    let d = m.dim();
    SymMatrix::from_fn(d, |i, j| {
        let mut acc = 0.0;
        for k in 0..d {
            for l in 0..d {
                acc += m.get(i, k) * x.get(k, l) * m.get(l, j);
            }
        }
        acc
    })
}

/// Zero-mean Gaussian potential on the box ±6.2 marginal standard deviations
/// per axis.
fn gaussian_on_marginal_box(covariance: SymMatrix) -> Result<PotentialSpec> {
    let d = covariance.dim();
    let low: Vec<f64> = (0..d).map(|a| -6.2 * covariance.get(a, a).sqrt()).collect();
    let high: Vec<f64> = low.iter().map(|l| -l).collect();
    Ok(PotentialSpec {
        form: PotentialForm::Gaussian {
            mean: vec![0.0; d],
            covariance,
        },
        convex: true,
        domain_low: low,
        domain_high: high,
    })
}

/// Solve the original and the A-transformed problems and check the proof's
/// identities discretely. Gaussian marginals only (the transform stays in
/// closed form there).
pub fn verify_anisotropic_reduction(
    entry: &RegistryEntry,
    y: &SymMatrix,
    transformed_n: usize,
) -> Result<AnisotropicReport> {
    if entry.dim != 2 {
        return Err(Error::InvalidSpec(
            "anisotropic reduction is desk-scaled to d = 2".into(),
        ));
    }
    if y.min_eigenvalue() <= 0.0 {
        return Err(Error::InvalidSpec("Y must be positive definite".into()));
    }
    let a = y.sqrt_psd()?;
    let a_inv = a.inverse_spd()?;
    let (
        PotentialForm::Gaussian {
            covariance: cov_v, ..
        },
        PotentialForm::Gaussian {
            covariance: cov_w, ..
        },
    ) = (&entry.mu.form, &entry.nu.form)
    else {
        return Err(Error::UnsupportedKind(
            "anisotropic reduction needs Gaussian marginals".into(),
        ));
    };

    // V_A(x) = V(Ax) − log det A and W_A(y) = W(A⁻¹y) + log det A. The log
    // det constants drop out of Hessians and of the renormalized densities,
    // so the transformed marginals are the Gaussians with covariances
    // A⁻¹ Σ_V A⁻¹ and A Σ_W A.
    let mu_a = gaussian_on_marginal_box(congruence(&a_inv, cov_v))?;
    let nu_a = gaussian_on_marginal_box(congruence(&a, cov_w))?;

    let original = solve_entry(entry)?;
    // Per-axis node counts anchored on the narrowest primal axis, so the
    // wider transformed boxes keep comparable spacing (capped for cost).
    let min_width = (0..2)
        .map(|a| mu_a.domain_high[a] - mu_a.domain_low[a])
        .fold(f64::INFINITY, f64::min);
    let h_target = min_width / (transformed_n - 1) as f64;
    let axis_n = |low: &[f64], high: &[f64]| -> Vec<usize> {
        (0..2)
            .map(|a| (((high[a] - low[a]) / h_target).ceil() as usize + 1).clamp(transformed_n, 201))
            .collect()
    };
    let transformed_problem = TransportProblem {
        primal: GridSpec::new(
            mu_a.domain_low.clone(),
            mu_a.domain_high.clone(),
            axis_n(&mu_a.domain_low, &mu_a.domain_high),
        )?,
        dual: GridSpec::new(
            nu_a.domain_low.clone(),
            nu_a.domain_high.clone(),
            axis_n(&nu_a.domain_low, &nu_a.domain_high),
        )?,
        mu: mu_a.clone(),
        nu: nu_a,
        solver: SolverKind::Entropic(EntropicConfig::default()),
        window_fraction: 0.6,
    };
    let transformed = solve(&transformed_problem)?;

    // Algebraic identity ΔV_A(x) = ⟨∇²V(Ax), Y⟩, exact for analytic V.
    let mut potential_identity_gap = 0.0f64;
    let window = transformed.grid.central_window(0.5);
    let step = |lo: usize, hi: usize| ((hi - lo) / 6).max(1);
    for i0 in (window[0].0..=window[0].1).step_by(step(window[0].0, window[0].1)) {
        for i1 in (window[1].0..=window[1].1).step_by(step(window[1].0, window[1].1)) {
            let x = transformed.grid.node(&[i0, i1]);
            let ax = a.apply(&x);
            let hess_va = mu_a
                .hess_closed(&x)
                .ok_or_else(|| Error::InvalidSpec("analytic Hessian required".into()))?;
            let hess_v = entry
                .mu
                .hess_closed(&ax)
                .ok_or_else(|| Error::InvalidSpec("analytic Hessian required".into()))?;
            potential_identity_gap =
                potential_identity_gap.max((hess_va.trace() - hess_v.inner(y)).abs());
        }
    }

    // Discrete identity Δφ_A(x) = ⟨∇²φ(Ax), Y⟩ on the transformed window,
    // reading the original Hessian at the nearest original node.
    let mut hessian_identity_rel_gap = 0.0f64;
    let mut sup_laplacian_transformed = f64::NEG_INFINITY;
    for multi in transformed.window_nodes() {
        let Some(h_a) = transformed.hessian_at(&multi) else {
            continue;
        };
        let lhs = h_a.trace();
        sup_laplacian_transformed = sup_laplacian_transformed.max(lhs);
        let x = transformed.grid.node(&multi);
        let ax = a.apply(&x);
        let Some(h_orig) = nearest_hessian(&original, &ax) else {
            continue;
        };
        let rhs = h_orig.inner(y);
        hessian_identity_rel_gap =
            hessian_identity_rel_gap.max((lhs - rhs).abs() / (rhs.abs() + 1e-12));
    }

    let f_aniso = GoodFunctionSpec::anisotropic(y.clone())?;
    let sup_inner_original = sup_good_hessian(&original, &f_aniso)?.value;

    Ok(AnisotropicReport {
        potential_identity_gap,
        hessian_identity_rel_gap,
        sup_laplacian_transformed,
        sup_inner_original,
    })
}

/// Hessian of a solution at the node nearest to `x`, if inside the window.
fn nearest_hessian<'a>(sol: &'a BrenierSolution, x: &[f64]) -> Option<&'a SymMatrix> {
    let grid = &sol.grid;
    let mut multi = Vec::with_capacity(grid.dim);
    for (a, &coord) in x.iter().enumerate().take(grid.dim) {
        let i = ((coord - grid.low[a]) / grid.spacing(a)).round() as isize;
        if i < 1 || i as usize + 1 >= grid.n[a] {
            return None;
        }
        multi.push(i as usize);
    }
    if !sol.in_window(&multi) {
        return None;
    }
    sol.hessian_at(&multi)
}

/// a_n from a₀ = 2 and a_{n+1} = 2 − 1/a_n; decreases to 1 with closed form
/// (n+2)/(n+1).
pub fn bootstrap_recurrence(n: usize) -> f64 {
    let mut a = 2.0f64;
    for _ in 0..n {
        a = 2.0 - 1.0 / a;
    }
    a
}

/// TOML suite configuration.
#[derive(Debug, Deserialize)]
pub struct SuiteConfig {
    pub suite: SuiteMeta,
    #[serde(default)]
    pub jobs: Vec<JobConfig>,
}

#[derive(Debug, Deserialize)]
pub struct SuiteMeta {
    pub name: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
pub struct JobConfig {
    pub problem: String,
    pub functions: Vec<FunctionConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum FunctionConfig {
    Name(String),
    Table {
        kind: String,
        #[serde(default)]
        k: Option<usize>,
        #[serde(default)]
        p: Option<f64>,
    },
}

impl FunctionConfig {
    pub fn resolve(&self, dim: usize) -> Result<GoodFunctionSpec> {
        match self {
            FunctionConfig::Name(name) => good_function_by_name(name, dim),
            FunctionConfig::Table { kind, k, p } => {
                let kind = match kind.as_str() {
                    "Trace" => GoodKind::Trace,
                    "LambdaMax" => GoodKind::LambdaMax,
                    "SumTopK" => GoodKind::SumTopK(
                        k.ok_or_else(|| Error::Config("SumTopK requires k".into()))?,
                    ),
                    "PNormPositive" => GoodKind::PNormPositive(
                        p.ok_or_else(|| Error::Config("PNormPositive requires p".into()))?,
                    ),
                    other => {
                        return Err(Error::Config(format!(
                            "unsupported function kind in suite config: {other}"
                        )));
                    }
                };
                GoodFunctionSpec::new(kind, dim)
            }
        }
    }
}

/// Shorthand names for suite configs: "trace", "lambda_max", "s<k>", "n<p>".
pub fn good_function_by_name(name: &str, dim: usize) -> Result<GoodFunctionSpec> {
    match name {
        "trace" => Ok(GoodFunctionSpec::trace(dim)),
        "lambda_max" => Ok(GoodFunctionSpec::lambda_max(dim)),
        _ => {
            if let Some(k) = name.strip_prefix('s') {
                let k: usize = k
                    .parse()
                    .map_err(|_| Error::Config(format!("bad S_k shorthand {name:?}")))?;
                return GoodFunctionSpec::sum_top_k(k, dim);
            }
            if let Some(p) = name.strip_prefix('n') {
                let p: f64 = p
                    .parse()
                    .map_err(|_| Error::Config(format!("bad N_p shorthand {name:?}")))?;
                return GoodFunctionSpec::p_norm_positive(p, dim);
            }
            Err(Error::Config(format!("unknown good-function name {name:?}")))
        }
    }
}

/// Outcome of a suite run.
#[derive(Debug)]
pub struct SuiteOutcome {
    pub reports: Vec<BoundReport>,
    pub any_violated: bool,
    pub summary_csv: std::path::PathBuf,
}

pub fn parse_suite_config(text: &str) -> Result<SuiteConfig> {
    toml::from_str(text).map_err(|e| Error::Config(format!("suite config: {e}")))
}

/// Execute a suite: one solve per job, every requested good function checked
/// against it, reports written as JSON plus a summary CSV.
pub fn run_suite(config: &SuiteConfig, report_dir: &Path) -> Result<SuiteOutcome> {
    std::fs::create_dir_all(report_dir)?;
    let mut reports = Vec::new();
    let mut any_violated = false;
    let mut cache: BTreeMap<String, BrenierSolution> = BTreeMap::new();
    for job in &config.jobs {
        let entry = registry_entry(&job.problem)?;
        if !cache.contains_key(&entry.id) {
            cache.insert(entry.id.clone(), solve_entry(&entry)?);
        }
        let sol = &cache[&entry.id];
        for fc in &job.functions {
            let f = match fc.resolve(entry.dim) {
                Ok(f) => f,
                Err(Error::InvalidSpec(_)) => continue, // dimension-incompatible shorthand
                Err(e) => return Err(e),
            };
            let report = verify_bound_with_solution(&entry, &f, sol)?;
            let path = report_dir.join(format!("{}__{}.json", entry.id, f.label()));
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Config(e.to_string()))?;
            std::fs::write(path, json)?;
            any_violated |= report.verdict == Verdict::Violated;
            reports.push(report);
        }
    }
    let summary_csv = report_dir.join("summary.csv");
    let mut file = std::fs::File::create(&summary_csv)?;
    writeln!(file, "{}", BoundReport::csv_header())?;
    for report in &reports {
        writeln!(file, "{}", report.csv_row())?;
    }
    Ok(SuiteOutcome {
        reports,
        any_violated,
        summary_csv,
    })
}
