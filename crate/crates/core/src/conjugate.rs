//! Discrete Legendre–Fenchel conjugation and the Hessian duality
//! `∇²W*(∇W(x)) = ∇²W(x)⁻¹`.
//!
//! The 1D transform runs in linear time: the maximizer of x·y − W(x) over a
//! finite sample set always sits on the lower convex hull of the points
//! (x_i, W_i), and as the slope y grows it advances monotonically along the
//! hull, so sorted queries merge in one sweep. In d ≥ 2 the sup over a tensor
//! grid splits into d successive 1D transforms; that factorization is exact
//! for the discrete problem regardless of convexity, because an iterated max
//! is a max.
//!
//! +∞-masked nodes are skipped when building hulls, so conjugates of
//! truncated potentials come out finite everywhere. If the argmax for a
//! strictly interior dual node lands on an unmasked primal node at the grid
//! edge, the primal box was too small for that slope and the transform
//! reports a range-coverage error (the runtime form of the "dual box inside
//! the gradient range" precondition).

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::potential::{PotentialForm, PotentialSpec};
use crate::symcalc::{eval_good, GoodFunctionSpec, SymMatrix};

/// One line of the lower-hull merge: values, argmax positions, and whether
/// the argmax was an unmasked node at the very edge of the line.
fn conjugate_line(
    xs: &[f64],
    w: &dyn Fn(usize) -> f64,
    ys: &[f64],
    out_val: &mut [f64],
    out_arg: &mut [usize],
    out_edge: &mut [bool],
) {
    let n = xs.len();
    // Lower convex hull indices with strictly increasing edge slopes.
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let wi = w(i);
        if !wi.is_finite() {
            continue;
        }
        while hull.len() >= 2 {
            let b = hull[hull.len() - 1];
            let a = hull[hull.len() - 2];
            let s_ab = (w(b) - w(a)) / (xs[b] - xs[a]);
            let s_bi = (wi - w(b)) / (xs[i] - xs[b]);
            if s_bi <= s_ab {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    if hull.is_empty() {
        for j in 0..ys.len() {
            out_val[j] = f64::NEG_INFINITY;
            out_arg[j] = 0;
            out_edge[j] = false;
        }
        return;
    }
    let first_finite = hull[0];
    let last_finite = *hull.last().expect("non-empty hull");
    let mut v = 0usize;
    for (j, &y) in ys.iter().enumerate() {
        // Advance while the outgoing edge slope is below y; ties stay on the
        // leftmost maximizer.
        while v + 1 < hull.len() {
            let slope = (w(hull[v + 1]) - w(hull[v])) / (xs[hull[v + 1]] - xs[hull[v]]);
            if slope < y {
                v += 1;
            } else {
                break;
            }
        }
        let arg = hull[v];
        out_val[j] = xs[arg] * y - w(arg);
        out_arg[j] = arg;
        out_edge[j] = (arg == first_finite && arg == 0) || (arg == last_finite && arg == n - 1);
    }
}

/// W*(y) = sup_x ⟨x,y⟩ − W(x) over the primal sample grid, evaluated on the
/// dual grid. Analytic potentials are sampled onto their domain box with
/// `primal_n` nodes per axis; grid potentials use their own grid.
pub fn legendre_transform(
    w: &PotentialSpec,
    primal_n: usize,
    dual: &GridSpec,
) -> Result<GridField> {
    if !w.convex {
        return Err(Error::InvalidSpec(
            "legendre_transform requires the convex flag".into(),
        ));
    }
    if dual.dim != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            got: dual.dim,
        });
    }
    let primal_field;
    let field: &GridField = match &w.form {
        PotentialForm::Grid(f) => f,
        _ => {
            primal_field = w.sample(&w.domain_spec(primal_n)?)?;
            &primal_field
        }
    };
    conjugate_of_field(field, dual)
}

/// Discrete conjugate of a sampled field (the core of
/// [`legendre_transform`], reused for the back transform).
pub fn conjugate_of_field(field: &GridField, dual: &GridSpec) -> Result<GridField> {
    let (out, flags) = conjugate_with_flags(field, dual)?;
    // Argmax on the primal boundary is only legitimate for dual nodes that
    // are themselves on the dual boundary.
    for (idx, &flagged) in flags.iter().enumerate() {
        if flagged {
            let multi = dual.unflatten(idx);
            let interior = (0..dual.dim).all(|a| multi[a] > 0 && multi[a] + 1 < dual.n[a]);
            if interior {
                return Err(Error::RangeCoverage(multi));
            }
        }
    }
    Ok(out)
}

/// Conjugate plus per-node flags marking dual nodes whose argmax sat on an
/// unmasked primal grid edge (their discrete sup may understate the true
/// conjugate).
fn conjugate_with_flags(field: &GridField, dual: &GridSpec) -> Result<(GridField, Vec<bool>)> {
    let d = field.spec.dim;
    if dual.dim != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: dual.dim,
        });
    }
    // Working buffer: +∞ marks masked fibers; negated after each axis pass so
    // every pass maximizes x·y − buffer.
    let mut shape: Vec<usize> = field.spec.n.clone();
    let mut buffer: Vec<f64> = field
        .values
        .iter()
        .zip(&field.mask)
        .map(|(&v, &m)| if m { f64::INFINITY } else { v })
        .collect();
    let mut edge: Vec<bool> = vec![false; buffer.len()];

    for axis in 0..d {
        let xs: Vec<f64> = (0..field.spec.n[axis])
            .map(|i| field.spec.coord(axis, i))
            .collect();
        let ys: Vec<f64> = (0..dual.n[axis]).map(|j| dual.coord(axis, j)).collect();
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let n_old = shape[axis];
        let n_new = ys.len();
        let mut new_shape = shape.clone();
        new_shape[axis] = n_new;
        let new_len = new_shape.iter().product();
        let mut new_buffer = vec![0.0f64; new_len];
        let mut new_edge = vec![false; new_len];
        let mut vals = vec![0.0f64; n_new];
        let mut args = vec![0usize; n_new];
        let mut edges = vec![false; n_new];
        for p in 0..outer {
            for q in 0..inner {
                let line_at = |k: usize| buffer[(p * n_old + k) * inner + q];
                conjugate_line(&xs, &|k| line_at(k), &ys, &mut vals, &mut args, &mut edges);
                for j in 0..n_new {
                    let dst = (p * n_new + j) * inner + q;
                    // Negate so the next pass sees max(x·y − value) again;
                    // fully masked lines (−∞ sup) stay +∞-masked.
                    new_buffer[dst] = if vals[j].is_finite() {
                        -vals[j]
                    } else {
                        f64::INFINITY
                    };
                    new_edge[dst] = if vals[j].is_finite() {
                        edges[j] || edge[(p * n_old + args[j]) * inner + q]
                    } else {
                        false
                    };
                }
            }
        }
        shape = new_shape;
        buffer = new_buffer;
        edge = new_edge;
    }

    let values: Vec<f64> = buffer.iter().map(|&v| -v).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Mass(
            "conjugate undefined: potential masked on an entire fiber".into(),
        ));
    }
    Ok((GridField::new(dual.clone(), values, None)?, edge))
}

/// Max over interior primal nodes of |(W*)*(x) − W(x)|. First-order in the
/// primal spacing for convex C² inputs (the conjugate sees the piecewise
/// linear envelope). Compact (masked) potentials are compared only on their
/// finite region.
pub fn conjugate_involution_gap(
    w: &PotentialSpec,
    primal_n: usize,
    dual: &GridSpec,
) -> Result<f64> {
    let primal_spec = match &w.form {
        PotentialForm::Grid(f) => f.spec.clone(),
        _ => w.domain_spec(primal_n)?,
    };
    let conj = legendre_transform(w, primal_n, dual)?;
    // The back transform is allowed to run out of dual coverage near the
    // primal boundary (gradients there exceed the dual box); those nodes are
    // simply not recoverable and drop out of the max.
    let (back, flags) = conjugate_with_flags(&conj, &primal_spec)?;
    let mut gap = 0.0f64;
    let mut compared = 0usize;
    for multi in primal_spec.interior_nodes(1) {
        let idx = primal_spec.flat(&multi);
        if flags[idx] {
            continue;
        }
        let x = primal_spec.node(&multi);
        let original = w.eval(&x)?;
        if !original.is_finite() {
            continue;
        }
        let rebuilt = back
            .get(&multi)
            .ok_or_else(|| Error::Degenerate("masked back-transform node".into()))?;
        gap = gap.max((rebuilt - original).abs());
        compared += 1;
    }
    if compared == 0 {
        return Err(Error::Degenerate(
            "no recoverable interior nodes for the involution".into(),
        ));
    }
    Ok(gap)
}

/// Symmetric central-difference Hessian at an interior node: 3-point second
/// differences on the diagonal, 4-point cross stencils off it. Exact for
/// quadratics up to roundoff.
pub fn hessian_fd(field: &GridField, multi: &[usize]) -> Result<SymMatrix> {
    let d = field.spec.dim;
    for a in 0..d {
        if multi[a] == 0 || multi[a] + 1 >= field.spec.n[a] {
            return Err(Error::Stencil(multi.to_vec()));
        }
    }
    let value = |offsets: &[isize]| -> Result<f64> {
        let mut m = multi.to_vec();
        for a in 0..d {
            m[a] = (m[a] as isize + offsets[a]) as usize;
        }
        field
            .get(&m)
            .ok_or_else(|| Error::Stencil(multi.to_vec()))
    };
    let center = value(&vec![0; d])?;
    let mut h = SymMatrix::zeros(d);
    for a in 0..d {
        let ha = field.spec.spacing(a);
        let mut plus = vec![0isize; d];
        plus[a] = 1;
        let mut minus = vec![0isize; d];
        minus[a] = -1;
        let second = (value(&plus)? - 2.0 * center + value(&minus)?) / (ha * ha);
        h.set(a, a, second);
        for b in (a + 1)..d {
            let hb = field.spec.spacing(b);
            let mut pp = vec![0isize; d];
            pp[a] = 1;
            pp[b] = 1;
            let mut pm = vec![0isize; d];
            pm[a] = 1;
            pm[b] = -1;
            let mut mp = vec![0isize; d];
            mp[a] = -1;
            mp[b] = 1;
            let mut mm = vec![0isize; d];
            mm[a] = -1;
            mm[b] = -1;
            let cross =
                (value(&pp)? - value(&pm)? - value(&mp)? + value(&mm)?) / (4.0 * ha * hb);
            h.set(a, b, cross);
        }
    }
    Ok(h)
}

/// Grid resolutions for the duality-gap and dual-constant paths. The dual
/// grid is kept coarser than the primal one: hull rounding perturbs conjugate
/// values by O(h_p²), which second differences amplify by 1/h_d², so h_d ~
/// √h_p balances that noise against the O(h_d²) stencil truncation and gives
/// the advertised O(h) overall rate.
#[derive(Debug, Clone)]
pub struct ConjugateGrids {
    pub primal_n: usize,
    pub dual: GridSpec,
}

/// ‖∇²W*(∇W(x)) − (∇²W(x))⁻¹‖_F with ∇²W* from [`hessian_fd`] on the
/// conjugate grid (gradient snapped to the nearest interior dual node).
pub fn hessian_duality_gap(
    w: &PotentialSpec,
    x: &[f64],
    grids: &ConjugateGrids,
) -> Result<f64> {
    let y = w.grad(x, 1e-4)?;
    let hess = match w.hess_closed(x) {
        Some(h) => h,
        None => {
            return Err(Error::InvalidSpec(
                "hessian_duality_gap needs closed-form Hessians".into(),
            ));
        }
    };
    let min_eig = hess.min_eigenvalue();
    if min_eig <= 0.0 {
        return Err(Error::SingularMatrix { min_eig });
    }
    let inv = hess.inverse_spd()?;
    let conj = legendre_transform(w, grids.primal_n, &grids.dual)?;
    let mut snapped = Vec::with_capacity(y.len());
    for a in 0..grids.dual.dim {
        let h = grids.dual.spacing(a);
        let i = ((y[a] - grids.dual.low[a]) / h).round() as isize;
        if i < 1 || i as usize + 1 >= grids.dual.n[a] {
            return Err(Error::Domain { point: y });
        }
        snapped.push(i as usize);
    }
    let h_star = hessian_fd(&conj, &snapped)?;
    Ok(h_star.sub(&inv).norm_frobenius())
}

/// Empirical dual constant: ess-sup over interior dual nodes of
/// f(∇²W*(y)), reported with the spacing it was measured at.
#[derive(Debug, Clone)]
pub struct DualConstant {
    pub value: f64,
    pub dual_spacing: Vec<f64>,
    pub argmax: Vec<f64>,
    pub nodes: usize,
}

pub fn estimate_dual_constant(
    w: &PotentialSpec,
    f: &GoodFunctionSpec,
    grids: &ConjugateGrids,
) -> Result<DualConstant> {
    if f.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            got: f.dim(),
        });
    }
    let conj = legendre_transform(w, grids.primal_n, &grids.dual)?;
    let mut best = f64::NEG_INFINITY;
    let mut argmax = vec![f64::NAN; grids.dual.dim];
    let mut nodes = 0usize;
    for multi in grids.dual.interior_nodes(1) {
        let h = match hessian_fd(&conj, &multi) {
            Ok(h) => h,
            Err(Error::Stencil(_)) => continue,
            Err(e) => return Err(e),
        };
        let v = eval_good(f, &h)?;
        nodes += 1;
        if v > best {
            best = v;
            argmax = grids.dual.node(&multi);
        }
    }
    if nodes == 0 {
        return Err(Error::Degenerate(
            "no admissible interior dual nodes".into(),
        ));
    }
    Ok(DualConstant {
        value: best,
        dual_spacing: (0..grids.dual.dim).map(|a| grids.dual.spacing(a)).collect(),
        argmax,
        nodes,
    })
}
