//! The spherical incremental operator Δ_ε and its verification probes.
//!
//! For y ∈ ℝ^d and ε > 0 the increments are
//! `δ_y f(x) = f(x+y) − f(x)`, `δ²_y f(x) = f(x+y) + f(x−y) − 2 f(x)`, and
//! `Δ_ε f(x) = ⨍_{S^{d−1}} δ_{εy} f(x) dy = ½ ⨍ δ²_{εy} f(x) dy`.
//!
//! The spherical average is discretized by fixed symmetric node sets whose
//! second moments reproduce `⨍ y_i y_j dy = δ_ij / d` to machine accuracy,
//! which is exactly what the Δ_ε bound `Δ_ε f ≤ (ℓ/d)(ε²/2)` and the limit
//! `Δ_ε f / ε² → Δf/(2d)` rest on. Quadrature instead of Monte Carlo keeps
//! these checks deterministic.

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::GridField;
use crate::potential::PotentialSpec;
use crate::transport::BrenierSolution;

/// Scalar function handle used by the increment operators.
pub trait ScalarField {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<f64>;
}

/// Analytic field from a closure.
pub struct FnField<F: Fn(&[f64]) -> f64> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64> ScalarField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        let v = (self.f)(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain { point: x.to_vec() })
        }
    }
}

/// Grid fields evaluate by multilinear interpolation; the interpolation error
/// O(h²)·‖∇²f‖ is the caller's to budget for (reports carry it explicitly).
impl ScalarField for GridField {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        self.interpolate(x)
    }
}

impl ScalarField for PotentialSpec {
    fn dim(&self) -> usize {
        PotentialSpec::dim(self)
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        let v = PotentialSpec::eval(self, x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain { point: x.to_vec() })
        }
    }
}

/// Fixed quadrature on S^{d−1}: unit nodes, weights summing to one, closed
/// under y ↦ −y.
#[derive(Debug, Clone)]
pub struct SphericalQuadrature {
    pub dim: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub symmetric: bool,
}

impl SphericalQuadrature {
    /// d = 1: the exact pair {+1, −1} with weights ½.
    pub fn pair_1d() -> Self {
        SphericalQuadrature {
            dim: 1,
            nodes: vec![vec![1.0], vec![-1.0]],
            weights: vec![0.5, 0.5],
            symmetric: true,
        }
    }

    /// d = 2: 32 equal-angle nodes, generated as 16 plus their antipodes so
    /// the y ↦ −y closure is exact in floating point.
    pub fn circle_32() -> Self {
        let half = 16usize;
        let mut nodes = Vec::with_capacity(2 * half);
        for k in 0..half {
            let theta = std::f64::consts::PI * k as f64 / half as f64;
            nodes.push(vec![theta.cos(), theta.sin()]);
        }
        for k in 0..half {
            let n = &nodes[k];
            nodes.push(vec![-n[0], -n[1]]);
        }
        SphericalQuadrature {
            dim: 2,
            nodes,
            weights: vec![1.0 / 32.0; 32],
            symmetric: true,
        }
    }

    /// d = 3: the 12 icosahedron vertices (antipodally symmetric; exact for
    /// polynomials through degree 5, so second moments are exact).
    pub fn icosahedron_12() -> Self {
        let phi = 0.5 * (1.0 + 5.0f64.sqrt());
        let norm = (1.0 + phi * phi).sqrt();
        let a = 1.0 / norm;
        let b = phi / norm;
        let mut nodes = vec![
            vec![0.0, a, b],
            vec![0.0, -a, b],
            vec![a, b, 0.0],
            vec![-a, b, 0.0],
            vec![b, 0.0, a],
            vec![b, 0.0, -a],
        ];
        for k in 0..6 {
            let n = nodes[k].clone();
            nodes.push(n.iter().map(|c| -c).collect());
        }
        SphericalQuadrature {
            dim: 3,
            nodes,
            weights: vec![1.0 / 12.0; 12],
            symmetric: true,
        }
    }

    pub fn for_dim(dim: usize) -> Result<Self> {
        match dim {
            1 => Ok(Self::pair_1d()),
            2 => Ok(Self::circle_32()),
            3 => Ok(Self::icosahedron_12()),
            other => Err(Error::InvalidSpec(format!("no quadrature for d = {other}"))),
        }
    }

    /// Validate unit nodes, unit total weight, antipodal closure, and the
    /// second-moment identity ⨍ y_i y_j = δ_ij/d within 1e-12.
    pub fn validate(&self) -> Result<()> {
        for node in &self.nodes {
            let norm: f64 = node.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-14 {
                return Err(Error::InvalidSpec(format!("node norm {norm} ≠ 1")));
            }
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidSpec(format!("weights sum to {total}")));
        }
        if self.symmetric {
            for node in &self.nodes {
                let neg: Vec<f64> = node.iter().map(|c| -c).collect();
                let found = self.nodes.iter().any(|other| {
                    other
                        .iter()
                        .zip(&neg)
                        .all(|(a, b)| (a - b).abs() <= 1e-15)
                });
                if !found {
                    return Err(Error::InvalidSpec("node set not antipodal".into()));
                }
            }
        }
        for i in 0..self.dim {
            for j in 0..self.dim {
                let moment: f64 = self
                    .nodes
                    .iter()
                    .zip(&self.weights)
                    .map(|(y, &w)| w * y[i] * y[j])
                    .sum();
                let want = if i == j { 1.0 / self.dim as f64 } else { 0.0 };
                if (moment - want).abs() > 1e-12 {
                    return Err(Error::InvalidSpec(format!(
                        "second moment ({i},{j}) = {moment}, want {want}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// (δ_{εy}F(x), δ²_{εy}F(x)). The identity δ²_{εy} = δ_{εy} + δ_{−εy} holds
/// exactly because both sides are assembled from the same three evaluations.
pub fn delta_increments(
    field: &dyn ScalarField,
    x: &[f64],
    y: &[f64],
    eps: f64,
) -> Result<(f64, f64)> {
    let plus: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + eps * b).collect();
    let minus: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - eps * b).collect();
    let f0 = field.eval(x)?;
    let fp = field.eval(&plus)?;
    let fm = field.eval(&minus)?;
    Ok((fp - f0, fp + fm - 2.0 * f0))
}

/// Δ_ε F(x) = ½ Σ_i w_i δ²_{ε y_i} F(x).
pub fn delta_eps(
    field: &dyn ScalarField,
    x: &[f64],
    eps: f64,
    quad: &SphericalQuadrature,
) -> Result<f64> {
    if !quad.symmetric {
        return Err(Error::InvalidSpec(
            "delta_eps requires a symmetric quadrature".into(),
        ));
    }
    if quad.dim != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: quad.dim,
        });
    }
    let mut acc = 0.0;
    for (node, &w) in quad.nodes.iter().zip(&quad.weights) {
        let (_, second) = delta_increments(field, x, node, eps)?;
        acc += 0.5 * w * second;
    }
    Ok(acc)
}

/// Convergence report for Δ_ε F/ε² → ΔF/(2d).
#[derive(Debug, Clone)]
pub struct LimitReport {
    /// (ε, Δ_εF/ε²) along the ladder.
    pub estimates: Vec<(f64, f64)>,
    /// Richardson limit from the last ladder pair (second-order model).
    pub fitted_limit: f64,
    /// Least-squares slope of log|Δ_εF/ε² − limit| against log ε; NaN when
    /// the ladder is exact (quadratic F) and every deviation is roundoff.
    pub observed_order: f64,
    /// Reference ΔF(x)/(2d).
    pub reference: f64,
}

impl LimitReport {
    pub fn limit_error(&self) -> f64 {
        (self.fitted_limit - self.reference).abs()
    }

    /// Second-order convergence or an exactly flat ladder.
    pub fn order_at_least(&self, want: f64) -> bool {
        self.observed_order.is_nan() || self.observed_order >= want
    }
}

/// Evaluate Δ_ε F(x)/ε² on the dyadic ladder ε = 2^{-k}, k ∈ [k_lo, k_hi],
/// fit the limit and the convergence order, and compare against the supplied
/// analytic Laplacian (the pointwise surrogate of the distributional limit).
pub fn check_delta_eps_limit(
    field: &dyn ScalarField,
    x: &[f64],
    quad: &SphericalQuadrature,
    laplacian: f64,
) -> Result<LimitReport> {
    let d = field.dim() as f64;
    let reference = laplacian / (2.0 * d);
    let mut estimates = Vec::new();
    for k in 1..=8 {
        let eps = 0.5f64.powi(k);
        estimates.push((eps, delta_eps(field, x, eps, quad)? / (eps * eps)));
    }
    let last = estimates[estimates.len() - 1];
    let prev = estimates[estimates.len() - 2];
    // r(ε) = L + Cε² with ε halving: L = (4 r(ε/2) − r(ε)) / 3.
    let fitted_limit = (4.0 * last.1 - prev.1) / 3.0;
    let scale = 1.0 + fitted_limit.abs();
    let points: Vec<(f64, f64)> = estimates
        .iter()
        .filter(|(_, r)| (r - fitted_limit).abs() > 1e-13 * scale)
        .map(|(eps, r)| (eps.ln(), (r - fitted_limit).abs().ln()))
        .collect();
    let observed_order = if points.len() < 2 {
        f64::NAN
    } else {
        let n = points.len() as f64;
        let sx: f64 = points.iter().map(|p| p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    };
    Ok(LimitReport {
        estimates,
        fitted_limit,
        observed_order,
        reference,
    })
}

/// One sampled row of an upper-bound check.
#[derive(Debug, Clone)]
pub struct BoundRow {
    pub x: Vec<f64>,
    pub eps: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundRow {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// Report for `Δ_ε F ≤ (ℓ/d)(ε²/2)`.
#[derive(Debug, Clone)]
pub struct BoundCheckReport {
    pub rows: Vec<BoundRow>,
    /// Most negative slack observed (positive means the bound held with
    /// room).
    pub min_slack: f64,
    /// First (x, ε) violating the bound beyond tolerance, if any.
    pub counterexample: Option<BoundRow>,
    pub tolerance: f64,
}

impl BoundCheckReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }

    /// CSV rows: x (or r), ε, lhs, rhs, slack.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "x,eps,lhs,rhs,slack")?;
        for row in &self.rows {
            let coords: Vec<String> = row.x.iter().map(|c| format!("{c:.12e}")).collect();
            writeln!(
                w,
                "{},{:.12e},{:.12e},{:.12e},{:.12e}",
                coords.join(";"),
                row.eps,
                row.lhs,
                row.rhs,
                row.slack()
            )?;
        }
        Ok(())
    }
}

/// Check `Δ_ε F(x) ≤ (ℓ/d)(ε²/2) + tolerance` at every sampled (x, ε).
///
/// `ell` must dominate ΔF on the ε-inflated sample region (caller-supplied
/// certificate). `tolerance` is 1e-10 for analytic fields; grid-interpolated
/// fields need an O(h²) allowance on top.
pub fn check_delta_eps_bound(
    field: &dyn ScalarField,
    ell: f64,
    points: &[Vec<f64>],
    eps_list: &[f64],
    quad: &SphericalQuadrature,
    tolerance: f64,
) -> Result<BoundCheckReport> {
    let d = field.dim() as f64;
    let mut rows = Vec::with_capacity(points.len() * eps_list.len());
    let mut min_slack = f64::INFINITY;
    let mut counterexample = None;
    for x in points {
        for &eps in eps_list {
            let lhs = delta_eps(field, x, eps, quad)?;
            let rhs = (ell / d) * eps * eps / 2.0;
            let row = BoundRow {
                x: x.clone(),
                eps,
                lhs,
                rhs,
            };
            min_slack = min_slack.min(row.slack());
            if lhs > rhs + tolerance && counterexample.is_none() {
                counterexample = Some(row.clone());
            }
            rows.push(row);
        }
    }
    Ok(BoundCheckReport {
        rows,
        min_slack,
        counterexample,
        tolerance,
    })
}

/// Deviation statistics at one probed radius.
#[derive(Debug, Clone)]
pub struct RadiusStats {
    pub radius: f64,
    /// max over the sphere |x| = r of | |T(x)| − j |.
    pub max_radial_deviation: f64,
    /// max angular deviation ∠(T(x), x) in radians.
    pub max_angle: f64,
}

/// Far-field decay report for `T(x) → j·x/|x|`.
#[derive(Debug, Clone)]
pub struct DecayReport {
    pub target_radius: f64,
    pub per_radius: Vec<RadiusStats>,
}

impl DecayReport {
    /// Radial deviation decreasing along the probed ladder.
    pub fn radial_deviation_decreasing(&self) -> bool {
        self.per_radius
            .windows(2)
            .all(|w| w[1].max_radial_deviation <= w[0].max_radial_deviation + 1e-12)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "r,eps,lhs,rhs,slack")?;
        for s in &self.per_radius {
            // lhs = radial deviation, rhs = angular deviation; the slack
            // column keeps the shared report schema.
            writeln!(
                w,
                "{:.12e},0,{:.12e},{:.12e},{:.12e}",
                s.radius,
                s.max_radial_deviation,
                s.max_angle,
                s.max_radial_deviation - s.max_angle
            )?;
        }
        Ok(())
    }
}

/// Probe | |T(x)| − j | and ∠(T(x), x) at sampled points on each sphere
/// |x| = r. Requires the target mass to live in B_j (compact support).
pub fn far_field_decay_probe(
    sol: &BrenierSolution,
    j: f64,
    radii: &[f64],
    samples_per_radius: usize,
) -> Result<DecayReport> {
    let d = sol.grid.dim;
    let mut per_radius = Vec::with_capacity(radii.len());
    for &r in radii {
        let points: Vec<Vec<f64>> = match d {
            1 => vec![vec![r], vec![-r]],
            2 => (0..samples_per_radius)
                .map(|k| {
                    let theta = 2.0 * std::f64::consts::PI * k as f64 / samples_per_radius as f64;
                    vec![r * theta.cos(), r * theta.sin()]
                })
                .collect(),
            _ => {
                let quad = SphericalQuadrature::icosahedron_12();
                quad.nodes.iter().map(|y| y.iter().map(|c| c * r).collect()).collect()
            }
        };
        let mut max_dev = 0.0f64;
        let mut max_angle = 0.0f64;
        for x in &points {
            if !sol.grid.contains(x) {
                return Err(Error::Domain { point: x.clone() });
            }
            let t = sol.map_at(x)?;
            let t_norm: f64 = t.iter().map(|c| c * c).sum::<f64>().sqrt();
            max_dev = max_dev.max((t_norm - j).abs());
            let x_norm: f64 = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            if t_norm > 1e-12 && x_norm > 1e-12 {
                let dot: f64 = t.iter().zip(x).map(|(a, b)| a * b).sum();
                let cos = (dot / (t_norm * x_norm)).clamp(-1.0, 1.0);
                max_angle = max_angle.max(cos.acos());
            }
        }
        per_radius.push(RadiusStats {
            radius: r,
            max_radial_deviation: max_dev,
            max_angle,
        });
    }
    Ok(DecayReport {
        target_radius: j,
        per_radius,
    })
}

/// Report for the convexity inequality
/// `Δ_ε φ(x) ≤ ε ⨍ ⟨δ_{εy} ∇φ(x), y⟩ dy` behind the divergence bound.
#[derive(Debug, Clone)]
pub struct PhiBoundReport {
    pub nodes_checked: usize,
    /// max over nodes of lhs − rhs (negative: inequality held strictly).
    pub max_violation: f64,
    pub tolerance: f64,
}

impl PhiBoundReport {
    pub fn passed(&self) -> bool {
        self.max_violation <= self.tolerance
    }
}

/// Check the discrete witness of the proof mechanism at every admissible
/// interior node of a transport solution.
///
/// Both sides interpolate solver fields, so the tolerance combines the 1e-8
/// base slack, an O(h²) interpolation allowance scaled by the largest Hessian
/// eigenvalue seen, and the measured map/potential consistency of the solver.
pub fn delta_eps_phi_bound_check(
    sol: &BrenierSolution,
    eps: f64,
    quad: &SphericalQuadrature,
) -> Result<PhiBoundReport> {
    let d = sol.grid.dim;
    if quad.dim != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: quad.dim,
        });
    }
    let h = sol.grid.max_spacing();
    let mut max_hess = 0.0f64;
    for entry in sol.hessian.iter().flatten() {
        max_hess = max_hess.max(entry.max_eigenvalue().abs());
    }
    let tolerance = 1e-8 + h * h * max_hess + 2.0 * eps * sol.meta.map_consistency;

    let mut nodes_checked = 0usize;
    let mut max_violation = f64::NEG_INFINITY;
    'nodes: for multi in sol.grid.interior_nodes(1) {
        let x = sol.grid.node(&multi);
        // Every probe x ± εy must stay inside the grid.
        for node in &quad.nodes {
            let probe: Vec<f64> = x.iter().zip(node).map(|(a, b)| a + eps * b).collect();
            if !sol.grid.contains(&probe) {
                continue 'nodes;
            }
        }
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for (node, &wgt) in quad.nodes.iter().zip(&quad.weights) {
            let plus: Vec<f64> = x.iter().zip(node).map(|(a, b)| a + eps * b).collect();
            let minus: Vec<f64> = x.iter().zip(node).map(|(a, b)| a - eps * b).collect();
            let phi_c = sol.potential.interpolate(&x)?;
            let phi_p = sol.potential.interpolate(&plus)?;
            let phi_m = sol.potential.interpolate(&minus)?;
            lhs += 0.5 * wgt * (phi_p + phi_m - 2.0 * phi_c);
            let grad_p = sol.map_at(&plus)?;
            let grad_c = sol.map_at(&x)?;
            let incr: f64 = grad_p
                .iter()
                .zip(&grad_c)
                .zip(node)
                .map(|((gp, gc), y)| (gp - gc) * y)
                .sum();
            rhs += wgt * eps * incr;
        }
        nodes_checked += 1;
        max_violation = max_violation.max(lhs - rhs);
    }
    if nodes_checked == 0 {
        return Err(Error::Degenerate("no admissible nodes for Δ_ε φ".into()));
    }
    Ok(PhiBoundReport {
        nodes_checked,
        max_violation,
        tolerance,
    })
}
