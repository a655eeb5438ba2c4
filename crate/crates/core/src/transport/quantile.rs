//! 1D Brenier maps by monotone rearrangement: T = F_ν⁻¹ ∘ F_μ.
//!
//! CDFs accumulate by the trapezoid rule, so between nodes the density model
//! is piecewise linear and the CDF piecewise quadratic; the inversion solves
//! that quadratic exactly on the bracketing cell instead of interpolating the
//! CDF linearly, which keeps tail quantiles accurate. Flat CDF segments
//! (zero density) resolve to the left-most preimage.

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::symcalc::SymMatrix;
use crate::transport::{
    density_masses, measure_map_consistency, sliced_w1, BrenierSolution, SolverDiagnostics,
    TransportProblem,
};

/// Trapezoid CDF at the nodes of a density sampled as node masses. Cells
/// adjacent to a masked node carry no mass: the density drops to zero at the
/// support edge instead of leaking half a cell beyond it, so quantiles never
/// leave the support.
fn trapezoid_cdf(masses: &[f64], mask: &[bool], h: f64) -> Vec<f64> {
    let density: Vec<f64> = masses.iter().map(|m| m / h).collect();
    let mut cdf = Vec::with_capacity(masses.len());
    cdf.push(0.0);
    for i in 1..masses.len() {
        let prev = cdf[i - 1];
        let cell = if mask[i - 1] || mask[i] {
            0.0
        } else {
            0.5 * h * (density[i - 1] + density[i])
        };
        cdf.push(prev + cell);
    }
    cdf
}

/// Invert a trapezoid CDF at quantile q: find the bracketing cell (left-most
/// on flats) and solve the in-cell quadratic exactly. Quantiles that hit a
/// stored CDF value return the node coordinate directly, so matched CDFs
/// invert each other without tail roundoff.
fn invert_cdf(cdf: &[f64], density: &[f64], low: f64, h: f64, q: f64) -> f64 {
    let n = cdf.len();
    let total = cdf[n - 1];
    let q = q.clamp(0.0, total);
    if q <= cdf[0] {
        return low;
    }
    // Left-most index hi with cdf[hi] >= q (so cdf[lo] < q).
    let mut lo = 0usize;
    let mut hi = n - 1;
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if cdf[mid] >= q {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if cdf[hi] == q {
        return low + hi as f64 * h;
    }
    let j = lo;
    let (rho0, rho1) = (density[j], density[j + 1]);
    let target = (q - cdf[j]) / h;
    if target <= 0.0 {
        return low + j as f64 * h;
    }
    // Solve ρ₀ s + (ρ₁-ρ₀) s²/2 = target for s ∈ [0,1].
    let drho = rho1 - rho0;
    let s = if drho.abs() <= 1e-14 * (rho0 + rho1 + 1e-300) {
        if rho0 > 0.0 {
            target / rho0
        } else {
            0.0
        }
    } else {
        let disc = (rho0 * rho0 + 2.0 * drho * target).max(0.0).sqrt();
        if drho > 0.0 {
            // Stable root: 2·target / (ρ₀ + √disc).
            2.0 * target / (rho0 + disc)
        } else {
            (rho0 - disc) / -drho
        }
    };
    low + (j as f64 + s.clamp(0.0, 1.0)) * h
}

pub fn brenier_1d(problem: &TransportProblem) -> Result<BrenierSolution> {
    if problem.dim() != 1 {
        return Err(Error::InvalidSpec(format!(
            "quantile solver is 1D only (dim = {})",
            problem.dim()
        )));
    }
    let primal = &problem.primal;
    let dual = &problem.dual;
    let h_mu = primal.spacing(0);
    let h_nu = dual.spacing(0);
    let a = density_masses(&problem.mu, primal)?;
    let b = density_masses(&problem.nu, dual)?;
    let mask_mu: Vec<bool> = a.iter().map(|&m| m == 0.0).collect();
    let mask_nu: Vec<bool> = b.iter().map(|&m| m == 0.0).collect();
    let f_mu = trapezoid_cdf(&a, &mask_mu, h_mu);
    let g_nu = trapezoid_cdf(&b, &mask_nu, h_nu);
    let rho_nu: Vec<f64> = b.iter().map(|m| m / h_nu).collect();

    let n = primal.n[0];
    let mut map = Vec::with_capacity(n);
    for &q in f_mu.iter().take(n) {
        map.push(invert_cdf(&g_nu, &rho_nu, dual.low[0], h_nu, q));
    }
    // Monotone by construction; roundoff in the cell solve may leave
    // sub-1e-12 wiggles which would break the zero-tolerance invariant.
    for i in 1..n {
        debug_assert!(map[i] >= map[i - 1] - 1e-12);
        if map[i] < map[i - 1] {
            map[i] = map[i - 1];
        }
    }

    // φ by cumulative trapezoid integration of T.
    let mut phi = Vec::with_capacity(n);
    phi.push(0.0);
    for i in 1..n {
        let prev = phi[i - 1];
        phi.push(prev + 0.5 * h_mu * (map[i - 1] + map[i]));
    }

    // φ'' = T' by central differences.
    let mut hessian: Vec<Option<SymMatrix>> = vec![None; n];
    for (i, slot) in hessian.iter_mut().enumerate().take(n - 1).skip(1) {
        let second = (map[i + 1] - map[i - 1]) / (2.0 * h_mu);
        *slot = Some(SymMatrix::diag(&[second]));
    }

    let map_field = GridField::new(primal.clone(), map.clone(), None)?;
    let phi_field = GridField::new(primal.clone(), phi, None)?;
    let window = primal.central_window(problem.window_fraction);

    let push_points_a: Vec<(Vec<f64>, f64)> = (0..n).map(|i| (vec![map[i]], a[i])).collect();
    let push_points_b: Vec<(Vec<f64>, f64)> = (0..dual.n[0])
        .map(|j| (vec![dual.coord(0, j)], b[j]))
        .collect();
    let push_tol = sliced_w1(&push_points_a, &push_points_b, 1, 7);
    let map_consistency =
        measure_map_consistency(primal, std::slice::from_ref(&map_field), &phi_field, &window);

    Ok(BrenierSolution {
        grid: primal.clone(),
        map: vec![map_field],
        potential: phi_field,
        hessian,
        window,
        meta: SolverDiagnostics {
            iterations: 0,
            marginal_error: 0.0,
            epsilon_ladder: Vec::new(),
            push_tol,
            map_consistency,
            extrapolation_residual: 0.0,
        },
        raw_levels: Vec::new(),
    })
}
