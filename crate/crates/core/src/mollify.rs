//! The approximation pipeline for curvature-preserving smoothing.
//!
//! Mollification acts on the density: `V_t = −log(e^{−V} ∗ η_t)` keeps
//! `∇²V_t ⪯ E[∇²V]` (hence `ΔV_t ≤ Λ_V`) where `E` averages with weights
//! `e^{−V}η_t / (e^{−V}∗η_t)`. Targets are truncated to a ball and mollified
//! additively, `W_t = W ∗ η_t + c_t` on B̄_R and +∞ outside, with `c_t`
//! restoring unit mass; Jensen plus operator convexity of matrix inversion
//! gives `(∇²W ∗ η_t)⁻¹ ⪯ (∇²W)⁻¹ ∗ η_t`, which preserves the dual estimate.
//! The checks here verify those claims discretely.

use rayon::prelude::*;

use crate::conjugate::{hessian_fd, legendre_transform, ConjugateGrids};
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::potential::{PotentialForm, PotentialSpec};
use crate::rng::rng_for;
use crate::symcalc::{eval_good, GoodFunctionSpec, SymMatrix};
use rand::Rng;

/// Radially symmetric compactly supported kernel: c·(1 − |z/t|²)³ on |z| ≤ t,
/// discretely normalized to unit mass on the sampling grid.
#[derive(Debug, Clone)]
pub struct MollifierSpec {
    pub radius: f64,
}

/// Kernel sampled on grid offsets: mass weights sum to 1 and the offset set
/// is even under z → −z by construction.
#[derive(Debug, Clone)]
pub struct KernelStencil {
    pub offsets: Vec<Vec<isize>>,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub reach: Vec<usize>,
}

impl MollifierSpec {
    pub fn new(radius: f64) -> Result<Self> {
        if radius.is_nan() || radius <= 0.0 {
            return Err(Error::InvalidSpec(format!("kernel radius {radius} must be positive")));
        }
        Ok(MollifierSpec { radius })
    }

    fn profile(&self, z: &[f64]) -> f64 {
        let r2: f64 = z.iter().map(|c| (c / self.radius).powi(2)).sum();
        if r2 >= 1.0 {
            0.0
        } else {
            (1.0 - r2).powi(3)
        }
    }

    /// Discretize onto the spacings of `spec`.
    pub fn stencil(&self, spec: &GridSpec) -> Result<KernelStencil> {
        let d = spec.dim;
        let reach: Vec<usize> = (0..d)
            .map(|a| (self.radius / spec.spacing(a)).floor() as usize)
            .collect();
        if reach.iter().all(|&r| r == 0) {
            return Err(Error::InvalidSpec(format!(
                "kernel radius {} below the grid spacing",
                self.radius
            )));
        }
        let mut offsets = Vec::new();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut offset: Vec<isize> = reach.iter().map(|&r| -(r as isize)).collect();
        loop {
            let z: Vec<f64> = (0..d)
                .map(|a| offset[a] as f64 * spec.spacing(a))
                .collect();
            let w = self.profile(&z);
            if w > 0.0 {
                offsets.push(offset.clone());
                points.push(z);
                weights.push(w);
            }
            let mut axis = d;
            loop {
                if axis == 0 {
                    let total: f64 = weights.iter().sum();
                    if total <= 0.0 {
                        return Err(Error::InvalidSpec("empty kernel stencil".into()));
                    }
                    for w in &mut weights {
                        *w /= total;
                    }
                    return Ok(KernelStencil {
                        offsets,
                        points,
                        weights,
                        reach,
                    });
                }
                axis -= 1;
                offset[axis] += 1;
                if offset[axis] <= reach[axis] as isize {
                    break;
                }
                offset[axis] = -(reach[axis] as isize);
            }
        }
    }
}

/// Output of [`mollify_log_density`]: V_t on the interior grid (the padded
/// margin is consumed by the stencil) plus the discrete renormalizer
/// log ∫ e^{-V_t}.
#[derive(Debug, Clone)]
pub struct MollifiedDensity {
    pub field: GridField,
    pub log_renorm: f64,
    pub masked_nodes: usize,
}

/// V_t = −log((e^{-V}) ∗ η_t) by direct stencil summation (exact handling of
/// masked regions; the kernel radius is far below the box size so spectral
/// methods buy nothing here).
pub fn mollify_log_density(
    v: &PotentialSpec,
    m: &MollifierSpec,
    padded: &GridSpec,
) -> Result<MollifiedDensity> {
    if padded.dim != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: v.dim(),
            got: padded.dim,
        });
    }
    let stencil = m.stencil(padded)?;
    for a in 0..padded.dim {
        if padded.n[a] < 2 * stencil.reach[a] + 5 {
            return Err(Error::InvalidSpec(format!(
                "axis {a}: grid not padded by the kernel radius"
            )));
        }
    }
    let sampled = v.sample(padded)?;
    let density: Vec<f64> = sampled
        .values
        .iter()
        .zip(&sampled.mask)
        .map(|(&w, &masked)| if masked { 0.0 } else { (-w).exp() })
        .collect();

    let inner_low: Vec<f64> = (0..padded.dim)
        .map(|a| padded.low[a] + stencil.reach[a] as f64 * padded.spacing(a))
        .collect();
    let inner_high: Vec<f64> = (0..padded.dim)
        .map(|a| padded.high[a] - stencil.reach[a] as f64 * padded.spacing(a))
        .collect();
    let inner_n: Vec<usize> = (0..padded.dim)
        .map(|a| padded.n[a] - 2 * stencil.reach[a])
        .collect();
    let inner = GridSpec::new(inner_low, inner_high, inner_n)?;

    let len = inner.len();
    let mut values = vec![0.0f64; len];
    let mut mask = vec![false; len];
    let results: Vec<(f64, bool)> = (0..len)
        .into_par_iter()
        .map(|idx| {
            let multi = inner.unflatten(idx);
            let mut conv = 0.0;
            for (offset, &weight) in stencil.offsets.iter().zip(&stencil.weights) {
                let mut src = Vec::with_capacity(padded.dim);
                for a in 0..padded.dim {
                    let i = multi[a] as isize + stencil.reach[a] as isize - offset[a];
                    src.push(i as usize);
                }
                conv += weight * density[padded.flat(&src)];
            }
            if conv < 1e-300 {
                (0.0, true)
            } else {
                (-conv.ln(), false)
            }
        })
        .collect();
    let mut masked_nodes = 0usize;
    for (idx, (val, masked)) in results.into_iter().enumerate() {
        values[idx] = val;
        mask[idx] = masked;
        if masked {
            masked_nodes += 1;
        }
    }
    let field = GridField::new(inner.clone(), values, Some(mask))?;
    let mut mass = 0.0;
    for (idx, &masked) in field.mask.iter().enumerate() {
        if !masked {
            mass += (-field.values[idx]).exp();
        }
    }
    let log_renorm = (mass * inner.cell_volume()).ln();
    Ok(MollifiedDensity {
        field,
        log_renorm,
        masked_nodes,
    })
}

/// Report of the Laplacian/Hessian preservation check on V_t.
#[derive(Debug, Clone)]
pub struct PreservationReport {
    pub nodes: usize,
    /// max of f(∇²V_t) − Λ_V over interior nodes (≤ tolerance to pass).
    pub max_excess: f64,
    pub tolerance: f64,
    /// Spot-checked matrix inequality ∇²V_t ⪯ E[∇²V] + tol: most negative
    /// eigenvalue of E[∇²V] + tol·Id − ∇²V_t seen.
    pub matrix_min_gap: f64,
    pub matrix_points: usize,
    pub counterexample: Option<String>,
}

impl PreservationReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Check `f(∇²V_t) ≤ Λ_V + tol_stencil` at every interior node of the
/// mollified grid, plus the matrix inequality `∇²V_t ⪯ E[∇²V]` at seeded
/// sample nodes (E is the e^{-V}η_t-weighted average; needs analytic V).
pub fn check_laplacian_preservation(
    v: &PotentialSpec,
    m: &MollifierSpec,
    f: &GoodFunctionSpec,
    lambda_v: f64,
    padded: &GridSpec,
) -> Result<PreservationReport> {
    if !v.has_closed_derivatives() {
        return Err(Error::InvalidSpec(
            "preservation check needs analytic V for the weighted average".into(),
        ));
    }
    let mollified = mollify_log_density(v, m, padded)?;
    let field = &mollified.field;
    let d = field.spec.dim;
    let h_min = (0..d).map(|a| field.spec.spacing(a)).fold(f64::INFINITY, f64::min);
    // hessian_fd truncation per entry is ~Δ⁴/(12h²); f adds at most d entries.
    let tolerance = d as f64 * field.max_fourth_difference() / (12.0 * h_min * h_min) + 1e-9;

    let mut nodes = 0usize;
    let mut max_excess = f64::NEG_INFINITY;
    let mut counterexample = None;
    for multi in field.spec.interior_nodes(1) {
        let h_t = match hessian_fd(field, &multi) {
            Ok(h) => h,
            Err(Error::Stencil(_)) => continue,
            Err(e) => return Err(e),
        };
        let value = eval_good(f, &h_t)?;
        nodes += 1;
        let excess = value - lambda_v;
        if excess > max_excess {
            max_excess = excess;
        }
        if excess > tolerance && counterexample.is_none() {
            counterexample = Some(format!(
                "f(∇²V_t) = {value} > Λ_V = {lambda_v} (+tol {tolerance:.3e}) at {:?}",
                field.spec.node(&multi)
            ));
        }
    }
    if nodes == 0 {
        return Err(Error::Degenerate("no interior nodes survived mollification".into()));
    }

    // Matrix inequality at seeded interior nodes.
    let stencil = m.stencil(padded)?;
    let interior = field.spec.interior_nodes(1);
    let mut rng = rng_for(0x5eed);
    let matrix_points = 100.min(interior.len());
    let mut matrix_min_gap = f64::INFINITY;
    for _ in 0..matrix_points {
        let multi = &interior[rng.random_range(0..interior.len())];
        let x = field.spec.node(multi);
        let h_t = match hessian_fd(field, multi) {
            Ok(h) => h,
            Err(_) => continue,
        };
        let mut total = 0.0;
        let mut expectation = SymMatrix::zeros(d);
        for (z, &wgt) in stencil.points.iter().zip(&stencil.weights) {
            let shifted: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
            let density_weight = wgt * (-v.eval(&shifted)?).exp();
            let hess = v
                .hess_closed(&shifted)
                .ok_or_else(|| Error::InvalidSpec("analytic Hessian required".into()))?;
            expectation = expectation.add(&hess.scale(density_weight));
            total += density_weight;
        }
        if total <= 1e-300 {
            continue;
        }
        expectation = expectation.scale(1.0 / total);
        let gap = expectation.sub(&h_t).min_eigenvalue();
        matrix_min_gap = matrix_min_gap.min(gap);
        if gap < -tolerance && counterexample.is_none() {
            counterexample = Some(format!(
                "∇²V_t ⋠ E[∇²V] at {x:?}: λ_min gap {gap:.3e}"
            ));
        }
    }

    Ok(PreservationReport {
        nodes,
        max_excess,
        tolerance,
        matrix_min_gap,
        matrix_points,
        counterexample,
    })
}

/// W ∗ η_t + c_t on B̄_R with the +∞ mask outside; c_t makes the discrete
/// mass of e^{-W_t} equal one.
#[derive(Debug, Clone)]
pub struct TruncatedMollified {
    pub field: GridField,
    pub c_t: f64,
}

pub fn truncate_and_mollify_w(
    w: &PotentialSpec,
    m: &MollifierSpec,
    truncation_radius: f64,
    grid: &GridSpec,
) -> Result<TruncatedMollified> {
    if !w.convex {
        return Err(Error::InvalidSpec("target potential must be convex".into()));
    }
    let d = grid.dim;
    for a in 0..d {
        let half = 0.5 * (grid.high[a] - grid.low[a]);
        if truncation_radius > half - m.radius {
            return Err(Error::InvalidSpec(format!(
                "truncation radius {truncation_radius} exceeds grid half-width minus kernel radius on axis {a}"
            )));
        }
    }
    let stencil = m.stencil(grid)?;
    let len = grid.len();
    let values: Vec<Option<f64>> = (0..len)
        .into_par_iter()
        .map(|idx| -> Result<Option<f64>> {
            let multi = grid.unflatten(idx);
            let x = grid.node(&multi);
            let r: f64 = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            if r > truncation_radius {
                return Ok(None);
            }
            let mut acc = 0.0;
            for (z, &wgt) in stencil.points.iter().zip(&stencil.weights) {
                let shifted: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
                let value = w.eval(&shifted)?;
                if !value.is_finite() {
                    return Err(Error::Mass(format!(
                        "W infinite inside the mollification ball at {shifted:?}"
                    )));
                }
                acc += wgt * value;
            }
            Ok(Some(acc))
        })
        .collect::<Result<_>>()?;
    let mut mass = 0.0;
    for v in values.iter().flatten() {
        mass += (-v).exp();
    }
    mass *= grid.cell_volume();
    if mass.is_nan() || mass <= 1e-300 {
        return Err(Error::Mass("truncated density mass underflows".into()));
    }
    let c_t = mass.ln();
    let mut field_values = vec![0.0f64; len];
    let mut mask = vec![false; len];
    for (idx, v) in values.into_iter().enumerate() {
        match v {
            Some(v) => field_values[idx] = v + c_t,
            None => mask[idx] = true,
        }
    }
    let field = GridField::new(grid.clone(), field_values, Some(mask))?;
    Ok(TruncatedMollified { field, c_t })
}

/// Report of the dual-estimate preservation check on W_t.
#[derive(Debug, Clone)]
pub struct DualPreservationReport {
    pub dual_nodes: usize,
    /// max of f(∇²W_t*) − 1/λ_W over interior dual nodes.
    pub max_excess: f64,
    pub tolerance: f64,
    /// Spot check of (∇²W ∗ η_t)⁻¹ ⪯ (∇²W)⁻¹ ∗ η_t: most negative eigenvalue
    /// of rhs − lhs seen.
    pub matrix_min_gap: f64,
    pub matrix_points: usize,
    pub counterexample: Option<String>,
}

impl DualPreservationReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Check `f(∇²W_t*) ≤ 1/λ_W + tolerance` on the conjugate of the truncated
/// mollified target, plus the Jensen/operator-convexity matrix inequality at
/// seeded sample points (analytic W).
#[allow(clippy::too_many_arguments)]
pub fn check_dual_preservation(
    w: &PotentialSpec,
    m: &MollifierSpec,
    f: &GoodFunctionSpec,
    lambda_w: f64,
    truncation_radius: f64,
    grid: &GridSpec,
    dual: &ConjugateGrids,
    tolerance: f64,
) -> Result<DualPreservationReport> {
    let truncated = truncate_and_mollify_w(w, m, truncation_radius, grid)?;
    let w_t = PotentialSpec::grid_sampled(truncated.field, true)?;
    let conj = legendre_transform(&w_t, dual.primal_n, &dual.dual)?;
    let bound = 1.0 / lambda_w;
    let mut dual_nodes = 0usize;
    let mut max_excess = f64::NEG_INFINITY;
    let mut counterexample = None;
    for multi in dual.dual.interior_nodes(1) {
        let h = match hessian_fd(&conj, &multi) {
            Ok(h) => h,
            Err(Error::Stencil(_)) => continue,
            Err(e) => return Err(e),
        };
        let value = eval_good(f, &h)?;
        dual_nodes += 1;
        let excess = value - bound;
        if excess > max_excess {
            max_excess = excess;
        }
        if excess > tolerance && counterexample.is_none() {
            counterexample = Some(format!(
                "f(∇²W_t*) = {value} > 1/λ_W = {bound} (+tol {tolerance:.3e}) at dual node {:?}",
                dual.dual.node(&multi)
            ));
        }
    }
    if dual_nodes == 0 {
        return Err(Error::Degenerate("no interior dual nodes".into()));
    }

    // Matrix spot check needs analytic ∇²W.
    let mut matrix_min_gap = f64::INFINITY;
    let mut matrix_points = 0usize;
    if w.has_closed_derivatives() {
        let stencil = m.stencil(grid)?;
        let mut rng = rng_for(0xd0a1);
        for _ in 0..100 {
            let x: Vec<f64> = (0..grid.dim)
                .map(|_| {
                    let r = 0.8 * (truncation_radius - m.radius).max(0.0);
                    rng.random_range(-r..=r)
                })
                .collect();
            let mut avg_hess = SymMatrix::zeros(grid.dim);
            let mut avg_inv = SymMatrix::zeros(grid.dim);
            let mut degenerate = false;
            for (z, &wgt) in stencil.points.iter().zip(&stencil.weights) {
                let shifted: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
                let hess = match w.hess_closed(&shifted) {
                    Some(h) if h.min_eigenvalue() > 1e-12 => h,
                    _ => {
                        degenerate = true;
                        break;
                    }
                };
                avg_hess = avg_hess.add(&hess.scale(wgt));
                avg_inv = avg_inv.add(&hess.inverse_spd()?.scale(wgt));
            }
            if degenerate {
                continue;
            }
            matrix_points += 1;
            let lhs = avg_hess.inverse_spd()?;
            let gap = avg_inv.sub(&lhs).min_eigenvalue();
            matrix_min_gap = matrix_min_gap.min(gap);
            if gap < -1e-9 && counterexample.is_none() {
                counterexample = Some(format!(
                    "(∇²W ∗ η_t)⁻¹ ⋠ (∇²W)⁻¹ ∗ η_t at {x:?}: λ_min gap {gap:.3e}"
                ));
            }
        }
    }

    Ok(DualPreservationReport {
        dual_nodes,
        max_excess,
        tolerance,
        matrix_min_gap,
        matrix_points,
        counterexample,
    })
}

/// The second approximation path: V_t = (1−t)·V + (t·Λ_V/d)·|x|²/2, which
/// satisfies ΔV_t = (1−t)·ΔV + t·Λ_V exactly. Representable in closed form
/// for the analytic potentials (zero-mean Gaussian and quadratic-plus).
pub fn interpolate_with_gaussian(
    v: &PotentialSpec,
    t: f64,
    lambda_v: f64,
) -> Result<PotentialSpec> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidSpec(format!("t = {t} outside [0,1]")));
    }
    let d = v.dim();
    let ridge = t * lambda_v / d as f64;
    match &v.form {
        PotentialForm::Gaussian { mean, covariance } => {
            if mean.iter().any(|&m| m != 0.0) {
                return Err(Error::InvalidSpec(
                    "gaussian interpolation path needs zero mean".into(),
                ));
            }
            let precision = covariance.inverse_spd()?;
            let new_precision = precision
                .scale(1.0 - t)
                .add(&SymMatrix::identity(d).scale(ridge));
            let half = 0.5 * (v.domain_high[0] - v.domain_low[0]);
            PotentialSpec::gaussian(vec![0.0; d], new_precision.inverse_spd()?, half)
        }
        PotentialForm::QuadraticPlus {
            base,
            perturbation,
            amplitude,
        } => {
            let new_base = base
                .scale(1.0 - t)
                .add(&SymMatrix::identity(d).scale(ridge));
            let half = 0.5 * (v.domain_high[0] - v.domain_low[0]);
            Ok(PotentialSpec::quadratic_plus(
                new_base,
                *perturbation,
                (1.0 - t) * amplitude,
                half,
                v.convex,
            ))
        }
        PotentialForm::Grid(_) => Err(Error::InvalidSpec(
            "gaussian interpolation path needs an analytic potential".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_stencil_has_unit_mass_and_even_support() {
        let spec = GridSpec::cube(2, -2.0, 2.0, 41).unwrap();
        let stencil = MollifierSpec::new(0.3).unwrap().stencil(&spec).unwrap();
        let total: f64 = stencil.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for z in &stencil.points {
            let r: f64 = z.iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!(r <= 0.3 + 1e-12);
            let neg: Vec<f64> = z.iter().map(|c| -c).collect();
            assert!(stencil
                .points
                .iter()
                .any(|p| p.iter().zip(&neg).all(|(a, b)| (a - b).abs() < 1e-14)));
        }
    }

    #[test]
    fn constant_potential_is_fixed_by_mollification() {
        // V constant: e^{-V} constant, kernel mass 1 keeps it, V_t = V.
        let spec = GridSpec::line(-2.0, 2.0, 81).unwrap();
        let field = GridField::from_fn(spec.clone(), |_| 1.7).unwrap();
        let v = PotentialSpec::grid_sampled(field, false).unwrap();
        let out = mollify_log_density(&v, &MollifierSpec::new(0.25).unwrap(), &spec).unwrap();
        for idx in 0..out.field.values.len() {
            assert!((out.field.values[idx] - 1.7).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_laplacian_preserved() {
        let v = PotentialSpec::gaussian_isotropic(1, 1.0, 4.0).unwrap();
        let spec = GridSpec::line(-4.0, 4.0, 401).unwrap();
        let f = GoodFunctionSpec::trace(1);
        let report = check_laplacian_preservation(
            &v,
            &MollifierSpec::new(0.2).unwrap(),
            &f,
            1.0,
            &spec,
        )
        .unwrap();
        assert!(report.passed(), "{:?}", report.counterexample);
        assert!(report.max_excess <= report.tolerance);
    }

    #[test]
    fn truncated_target_mass_is_one() {
        let w = PotentialSpec::gaussian_isotropic(1, 2.0, 2.0).unwrap();
        let grid = GridSpec::line(-1.5, 1.5, 301).unwrap();
        let out =
            truncate_and_mollify_w(&w, &MollifierSpec::new(0.2).unwrap(), 1.0, &grid).unwrap();
        let mut mass = 0.0;
        for (idx, &masked) in out.field.mask.iter().enumerate() {
            if !masked {
                mass += (-out.field.values[idx]).exp();
            }
        }
        mass *= grid.cell_volume();
        assert!((mass - 1.0).abs() < 1e-10, "mass = {mass}");
        assert!(out.field.is_masked(&[0]));
    }

    #[test]
    fn gaussian_interpolation_laplacian_identity() {
        // ΔV_t = (1−t)·ΔV + t·Λ_V for the closed-form path.
        let v = PotentialSpec::gaussian_isotropic(2, 2.0, 8.0).unwrap();
        let lambda_v = 2.0; // f = Trace: ΔV = 2/α² would be 0.5; pick Λ_V = 2.
        let t = 0.3;
        let vt = interpolate_with_gaussian(&v, t, lambda_v).unwrap();
        let x = [0.7, -1.1];
        let before = v.hess_closed(&x).unwrap().trace();
        let after = vt.hess_closed(&x).unwrap().trace();
        assert!((after - ((1.0 - t) * before + t * lambda_v)).abs() < 1e-12);
    }
}
