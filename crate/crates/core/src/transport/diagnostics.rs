//! Monge–Ampère residuals, Hessian suprema, and push-forward metrics.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::potential::PotentialSpec;
use crate::rng::rng_for;
use crate::symcalc::{eval_good, GoodFunctionSpec};
use crate::transport::{BrenierSolution, TransportProblem};

/// Residual r(x) = V(x) − W(T(x)) + log det ∇²φ(x) of the log
/// Monge–Ampère equation, evaluated with discretely renormalized potentials
/// so the marginal normalization constants cancel the way the solver saw
/// them.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    /// Residual field (masked wherever a node was inadmissible).
    pub field: GridField,
    /// sup |r| over the trusted window.
    pub sup_abs: f64,
    /// L² norm √(Σ r² h^d) over the trusted window.
    pub l2: f64,
    /// Interior nodes skipped (non-PD Hessian, masked target, stencil).
    pub skipped: usize,
}

/// Discrete log-normalizer: log Σ e^{-V(x_i)} h^d.
fn log_partition(pot: &PotentialSpec, spec: &crate::grid::GridSpec) -> Result<f64> {
    let mut max = f64::NEG_INFINITY;
    let mut vals = Vec::with_capacity(spec.len());
    for idx in 0..spec.len() {
        let x = spec.node(&spec.unflatten(idx));
        let v = match pot.eval(&x) {
            Ok(v) => -v,
            Err(Error::Domain { .. }) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        max = max.max(v);
        vals.push(v);
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::Mass("empty support".into()));
    }
    let sum: f64 = vals.iter().map(|&v| (v - max).exp()).sum();
    Ok(max + sum.ln() + spec.cell_volume().ln())
}

pub fn monge_ampere_residual(
    sol: &BrenierSolution,
    problem: &TransportProblem,
) -> Result<ResidualReport> {
    let grid = &sol.grid;
    let log_z_mu = log_partition(&problem.mu, &problem.primal)?;
    let log_z_nu = log_partition(&problem.nu, &problem.dual)?;
    let len = grid.len();
    let mut values = vec![0.0f64; len];
    let mut mask = vec![true; len];
    let mut skipped = 0usize;
    let mut sup_abs = 0.0f64;
    let mut l2_acc = 0.0f64;
    for multi in grid.interior_nodes(1) {
        let idx = grid.flat(&multi);
        let Some(h) = sol.hessian[idx].as_ref() else {
            skipped += 1;
            continue;
        };
        if h.min_eigenvalue() <= 1e-8 {
            skipped += 1;
            continue;
        }
        let x = grid.node(&multi);
        let t: Vec<f64> = sol.map.iter().map(|c| c.values[idx]).collect();
        let v = problem.mu.eval(&x)? + log_z_mu;
        let w = match problem.nu.eval(&t) {
            Ok(w) if w.is_finite() => w + log_z_nu,
            Ok(_) | Err(Error::Domain { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let log_det = h.log_det_spd()?;
        let r = v - w + log_det;
        values[idx] = r;
        mask[idx] = false;
        if sol.in_window(&multi) {
            sup_abs = sup_abs.max(r.abs());
            l2_acc += r * r;
        }
    }
    let l2 = (l2_acc * grid.cell_volume()).sqrt();
    Ok(ResidualReport {
        field: GridField::new(grid.clone(), values, Some(mask))?,
        sup_abs,
        l2,
        skipped,
    })
}

/// Supremum of f(∇²φ) over admissible window nodes, with its arg-max.
#[derive(Debug, Clone)]
pub struct SupHessianReport {
    pub value: f64,
    pub argmax: Vec<f64>,
    pub nodes: usize,
}

pub fn sup_good_hessian(
    sol: &BrenierSolution,
    f: &GoodFunctionSpec,
) -> Result<SupHessianReport> {
    if f.dim() != sol.grid.dim {
        return Err(Error::DimensionMismatch {
            expected: sol.grid.dim,
            got: f.dim(),
        });
    }
    let mut best = f64::NEG_INFINITY;
    let mut argmax = Vec::new();
    let mut nodes = 0usize;
    for multi in sol.window_nodes() {
        let Some(h) = sol.hessian_at(&multi) else {
            continue;
        };
        let v = eval_good(f, h)?;
        nodes += 1;
        if v > best {
            best = v;
            argmax = sol.grid.node(&multi);
        }
    }
    if nodes == 0 {
        return Err(Error::Degenerate(
            "no admissible Hessian nodes in the window".into(),
        ));
    }
    Ok(SupHessianReport {
        value: best,
        argmax,
        nodes,
    })
}

/// Sliced 1-Wasserstein distance between weighted point clouds: exact 1D CDF
/// integral per direction, averaged over seeded unit directions (a single
/// axis direction in 1D, where it is the exact W₁).
pub fn sliced_w1(
    a: &[(Vec<f64>, f64)],
    b: &[(Vec<f64>, f64)],
    directions: usize,
    seed: u64,
) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let d = a[0].0.len();
    let dirs: Vec<Vec<f64>> = if d == 1 {
        vec![vec![1.0]]
    } else {
        let mut rng = rng_for(seed);
        (0..directions)
            .map(|_| {
                let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let norm: f64 = u.iter().map(|c| c * c).sum::<f64>().sqrt();
                for c in &mut u {
                    *c /= norm.max(1e-300);
                }
                u
            })
            .collect()
    };
    let mut total = 0.0;
    for u in &dirs {
        total += w1_projected(a, b, u);
    }
    total / dirs.len() as f64
}

fn w1_projected(a: &[(Vec<f64>, f64)], b: &[(Vec<f64>, f64)], u: &[f64]) -> f64 {
    let project = |points: &[(Vec<f64>, f64)], sign: f64| -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = points
            .iter()
            .map(|(x, w)| (x.iter().zip(u).map(|(c, d)| c * d).sum::<f64>(), sign * w))
            .collect();
        out.sort_by(|p, q| p.0.partial_cmp(&q.0).expect("finite projections"));
        out
    };
    let mut events = project(a, 1.0);
    events.extend(project(b, -1.0));
    events.sort_by(|p, q| p.0.partial_cmp(&q.0).expect("finite projections"));
    let mut w1 = 0.0;
    let mut cdf_gap = 0.0;
    for pair in events.windows(2) {
        cdf_gap += pair[0].1;
        w1 += cdf_gap.abs() * (pair[1].0 - pair[0].0);
    }
    w1
}
