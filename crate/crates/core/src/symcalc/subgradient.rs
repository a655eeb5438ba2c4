//! Subdifferentials of good functions and the positive-definite subgradient
//! construction.
//!
//! For a convex positively homogeneous f, every subgradient at any base point
//! lies in ∂f(0), and f(X) = sup_{Y ∈ ∂f(0)} ⟨X, Y⟩ with equality attained by
//! subgradients at X itself. For X ≻ 0 the subdifferential is contained in
//! the PSD cone, and a positive definite element E ∈ ∂f(0) always exists for
//! good f; `construct_pd_subgradient` builds one by averaging subgradients
//! against kernel directions until the kernel is trivial.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::symcalc::good::{eval_good, sample_psd, sample_symmetric, GoodFunctionSpec, GoodKind};
use crate::symcalc::matrix::SymMatrix;

/// Eigenvalues closer than this are treated as tied when assigning gauge
/// subgradient weights.
const TIE_TOL: f64 = 1e-12;

/// One element of a subdifferential, tagged with its base point.
#[derive(Debug, Clone)]
pub struct Subgradient {
    /// Base point (possibly 0).
    pub at: SymMatrix,
    /// The subgradient matrix Y ∈ ∂f(at).
    pub value: SymMatrix,
}

impl Subgradient {
    /// Check the supporting inequality f(Z) ≥ f(at) + ⟨Z − at, Y⟩ on one
    /// probe, within `1e-9 · (1 + ‖Z‖_F)`.
    pub fn supports(&self, f: &GoodFunctionSpec, z: &SymMatrix) -> Result<bool> {
        let fz = eval_good(f, z)?;
        let fat = eval_good(f, &self.at)?;
        let lin = z.sub(&self.at).inner(&self.value);
        Ok(fz + 1e-9 * (1.0 + z.norm_frobenius()) >= fat + lin)
    }
}

/// Gauge subgradient weights μ for the certified spectral kinds at eigenvalue
/// vector λ (descending). Ties at the S_k threshold share the remaining
/// weight equally, which makes the assembled matrix invariant under rotations
/// of tied eigenspaces.
fn gauge_subgradient(f: &GoodFunctionSpec, lambda: &[f64]) -> Vec<f64> {
    let d = lambda.len();
    match f.kind() {
        GoodKind::Trace => vec![1.0; d],
        GoodKind::LambdaMax => top_k_weights(lambda, 1),
        GoodKind::SumTopK(k) => top_k_weights(lambda, *k),
        GoodKind::PNormPositive(p) => {
            let norm = f.gauge(lambda);
            if norm <= 0.0 {
                // λ⁺ = 0: the zero matrix supports f ≥ 0 everywhere.
                return vec![0.0; d];
            }
            lambda
                .iter()
                .map(|&l| {
                    if l > 0.0 {
                        (l / norm).powf(p - 1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        _ => unreachable!("gauge subgradient only for certified spectral kinds"),
    }
}

/// Weights for ∂S_k: 1 on eigenvalues strictly above the k-th, the leftover
/// weight spread uniformly over the group tied with the k-th.
fn top_k_weights(lambda: &[f64], k: usize) -> Vec<f64> {
    let d = lambda.len();
    let threshold = lambda[k - 1];
    let scale = TIE_TOL * (1.0 + lambda[0].abs().max(lambda[d - 1].abs()));
    let mut weights = vec![0.0; d];
    let strict: Vec<usize> = (0..d).filter(|&i| lambda[i] > threshold + scale).collect();
    let tied: Vec<usize> = (0..d)
        .filter(|&i| (lambda[i] - threshold).abs() <= scale)
        .collect();
    for &i in &strict {
        weights[i] = 1.0;
    }
    let remaining = k as f64 - strict.len() as f64;
    let share = remaining / tied.len() as f64;
    for &i in &tied {
        weights[i] = share;
    }
    weights
}

/// One element of ∂f(X).
///
/// Spectral kinds assemble U·diag(μ)·Uᵀ from the cached eigenbasis with μ a
/// gauge subgradient at λ(X); the anisotropic kind returns Y itself. The H_k
/// variant has no certified convexity and is rejected.
pub fn subgradient_at(f: &GoodFunctionSpec, x: &SymMatrix) -> Result<Subgradient> {
    if f.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: x.dim(),
        });
    }
    let value = match f.kind() {
        GoodKind::HkVariant { .. } => {
            return Err(Error::UnsupportedKind(
                "HkVariant has no certified subdifferential".into(),
            ));
        }
        GoodKind::Anisotropic(y) => y.clone(),
        _ => {
            let eig = x.eigen();
            let weights = gauge_subgradient(f, &eig.values);
            SymMatrix::from_eigenbasis(x.dim(), &weights, &eig.vectors)
        }
    };
    Ok(Subgradient {
        at: x.clone(),
        value,
    })
}

/// Approximate f(X) as max over sampled Y ∈ ∂f(0) of ⟨X, Y⟩.
///
/// The sample set always contains a subgradient at X itself, so the result is
/// within 1e-9 of f(X); the random base points (which all yield elements of
/// ∂f(0) by homogeneity) exercise the sup representation from below.
pub fn support_representation_check(
    f: &GoodFunctionSpec,
    x: &SymMatrix,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if !f.is_certified() {
        return Err(Error::UnsupportedKind(format!(
            "{} is not certified good",
            f.kind().name()
        )));
    }
    let mut rng = rng_for(seed);
    let mut best = f64::NEG_INFINITY;
    let own = subgradient_at(f, x)?;
    best = best.max(x.inner(&own.value));
    for i in 0..samples {
        let base = if i % 2 == 0 {
            sample_psd(&mut rng, f.dim(), 2.0)
        } else {
            sample_symmetric(&mut rng, f.dim(), 5.0)
        };
        let sub = subgradient_at(f, &base)?;
        best = best.max(x.inner(&sub.value));
    }
    Ok(best)
}

/// β = min{ f(X) : X ⪰ 0, Tr X = 1 }, the constant in f(X) ≥ β·Tr(X).
///
/// Spectral kinds minimize the gauge over the probability simplex in
/// eigenvalue space by a coarse grid followed by shrinking local grids; the
/// anisotropic kind is exactly λ_min(Y). A goodness violation (β ≤ 0) is an
/// error, and the returned β is post-checked on 1000 seeded PSD samples.
pub fn beta_min(f: &GoodFunctionSpec) -> Result<f64> {
    if !f.is_certified() {
        return Err(Error::UnsupportedKind(format!(
            "{} is not certified good",
            f.kind().name()
        )));
    }
    let d = f.dim();
    let beta = match f.kind() {
        GoodKind::Anisotropic(y) => y.min_eigenvalue(),
        // The gauge reads eigenvalues in descending order; simplex points
        // are arbitrary, so sort before evaluating.
        _ => simplex_minimize(
            |lambda| {
                let mut sorted = lambda.to_vec();
                sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
                f.gauge(&sorted)
            },
            d,
        ),
    };
    if beta <= 0.0 {
        return Err(Error::GoodnessViolation(format!(
            "β = {beta} not strictly positive"
        )));
    }
    // f(X) ≥ β·Tr(X) - 1e-8 must hold on random PSD samples.
    let mut rng = rng_for(0xbe7a);
    for _ in 0..1000 {
        let x = sample_psd(&mut rng, d, 2.0);
        let fx = eval_good(f, &x)?;
        if fx < beta * x.trace() - 1e-8 {
            return Err(Error::GoodnessViolation(format!(
                "f(X) = {fx} < β·Tr(X) = {}",
                beta * x.trace()
            )));
        }
    }
    Ok(beta)
}

/// Minimize a symmetric gauge over {λ ⪰ 0, Σλ = 1}: evaluate a barycentric
/// grid, then repeatedly contract the grid toward the incumbent.
fn simplex_minimize(g: impl Fn(&[f64]) -> f64, d: usize) -> f64 {
    let resolution = 6usize;
    let base = simplex_grid(d, resolution);
    let mut center = vec![1.0 / d as f64; d];
    let mut best = g(&center);
    // Always consider the vertices: gauges like S_k minimize at corners of
    // faces, and the grid contains them only at full scale.
    for v in 0..d {
        let mut vertex = vec![0.0; d];
        vertex[v] = 1.0;
        let val = g(&vertex);
        if val < best {
            best = val;
            center = vertex;
        }
    }
    let mut scale = 1.0;
    for _ in 0..60 {
        let mut improved = false;
        for point in &base {
            let candidate: Vec<f64> = point
                .iter()
                .zip(&center)
                .map(|(&p, &c)| c + scale * (p - c))
                .collect();
            let val = g(&candidate);
            if val < best - 1e-15 {
                best = val;
                center = candidate;
                improved = true;
            }
        }
        if !improved {
            scale *= 0.5;
            if scale < 1e-12 {
                break;
            }
        }
    }
    best
}

/// All barycentric grid points (a₁,…,a_d)/m with Σa = m.
fn simplex_grid(d: usize, m: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; d];
    fill_simplex(&mut out, &mut current, 0, m, m);
    out
}

fn fill_simplex(out: &mut Vec<Vec<f64>>, current: &mut Vec<usize>, axis: usize, m: usize, left: usize) {
    if axis + 1 == current.len() {
        current[axis] = left;
        out.push(current.iter().map(|&a| a as f64 / m as f64).collect());
        return;
    }
    for a in 0..=left {
        current[axis] = a;
        fill_simplex(out, current, axis + 1, m, left - a);
    }
}

/// Build a positive definite E ∈ ∂f(0) for certified good f.
///
/// Start from a subgradient Y₁ at the deterministic base point
/// X₀ = diag(d, d-1, …, 1) (distinct eigenvalues avoid ties). While Y_n has a
/// kernel, take the smallest-eigenvalue direction v, fetch Y_v ∈ ∂f(0) from
/// the subgradient at vvᵀ (which satisfies ⟨v, Y_v v⟩ = f(vvᵀ) > 0), and set
/// Y_{n+1} = (Y_n + Y_v)/2. Kernels strictly shrink, so at most d rounds run.
pub fn construct_pd_subgradient(f: &GoodFunctionSpec) -> Result<SymMatrix> {
    if !f.is_certified() {
        return Err(Error::UnsupportedKind(format!(
            "{} is not certified good",
            f.kind().name()
        )));
    }
    let d = f.dim();
    let base = SymMatrix::diag(&(0..d).map(|i| (d - i) as f64).collect::<Vec<_>>());
    let mut current = subgradient_at(f, &base)?.value;
    for _ in 0..d {
        let min_eig = current.min_eigenvalue();
        let scale = 1.0 + current.max_eigenvalue().abs();
        if min_eig > 1e-12 * scale {
            return Ok(current);
        }
        let eig = current.eigen();
        let v = eig.vector(d - 1, d).to_vec();
        let y_v = subgradient_at(f, &SymMatrix::outer(&v))?.value;
        let moved = y_v.apply(&v);
        let norm: f64 = moved.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            return Err(Error::GoodnessViolation(format!(
                "no subgradient moves kernel direction {v:?}"
            )));
        }
        current = current.add(&y_v).scale(0.5);
    }
    let min_eig = current.min_eigenvalue();
    if min_eig > 0.0 {
        Ok(current)
    } else {
        Err(Error::GoodnessViolation(format!(
            "kernel not exhausted after {d} rounds (λ_min = {min_eig:.3e})"
        )))
    }
}

/// Test-support oracle: directional derivative of f at X along E by central
/// differences, for comparing against ⟨Y, E⟩ where f is smooth.
pub fn directional_derivative_fd(
    f: &GoodFunctionSpec,
    x: &SymMatrix,
    e: &SymMatrix,
    h: f64,
) -> Result<f64> {
    let plus = eval_good(f, &x.add(&e.scale(h)))?;
    let minus = eval_good(f, &x.sub(&e.scale(h)))?;
    Ok((plus - minus) / (2.0 * h))
}

/// Sample a random unit-trace PSD matrix (used by tests probing β).
pub fn sample_unit_trace_psd(rng: &mut impl Rng, dim: usize) -> SymMatrix {
    let x = sample_psd(rng, dim, 1.0);
    let tr = x.trace();
    if tr > 1e-12 {
        x.scale(1.0 / tr)
    } else {
        SymMatrix::identity(dim).scale(1.0 / dim as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_subgradient_is_identity() {
        let f = GoodFunctionSpec::trace(3);
        let x = SymMatrix::from_fn(3, |i, j| (i as f64 - j as f64).abs());
        let sub = subgradient_at(&f, &x).unwrap();
        assert!(sub.value.sub(&SymMatrix::identity(3)).norm_frobenius() < 1e-12);
    }

    #[test]
    fn lambda_max_subgradient_on_distinct_spectrum() {
        let f = GoodFunctionSpec::lambda_max(2);
        let sub = subgradient_at(&f, &SymMatrix::diag(&[3.0, 1.0])).unwrap();
        assert!(sub.value.sub(&SymMatrix::diag(&[1.0, 0.0])).norm_frobenius() < 1e-12);
    }

    #[test]
    fn p_norm_subgradient_matches_gradient() {
        let f = GoodFunctionSpec::p_norm_positive(2.0, 4).unwrap();
        let x = SymMatrix::diag(&[3.0, 4.0, 0.0, 0.0]);
        let sub = subgradient_at(&f, &x).unwrap();
        let expected = SymMatrix::diag(&[0.6, 0.8, 0.0, 0.0]);
        assert!(sub.value.sub(&expected).norm_frobenius() < 1e-12);
    }

    #[test]
    fn support_representation_trivial_trace() {
        let f = GoodFunctionSpec::trace(2);
        let x = SymMatrix::diag(&[1.0, 2.0]);
        let val = support_representation_check(&f, &x, 10, 0).unwrap();
        assert!((val - 3.0).abs() < 1e-12);
    }

    #[test]
    fn support_representation_negative_definite_p1() {
        let f = GoodFunctionSpec::p_norm_positive(1.0, 2).unwrap();
        let x = SymMatrix::identity(2).scale(-1.0);
        let val = support_representation_check(&f, &x, 100, 7).unwrap();
        assert!(val.abs() < 1e-9, "sup = {val}");
    }

    #[test]
    fn beta_min_closed_forms() {
        assert!((beta_min(&GoodFunctionSpec::trace(3)).unwrap() - 1.0).abs() < 1e-9);
        assert!((beta_min(&GoodFunctionSpec::lambda_max(2)).unwrap() - 0.5).abs() < 1e-7);
        let n2 = GoodFunctionSpec::p_norm_positive(2.0, 4).unwrap();
        assert!((beta_min(&n2).unwrap() - 0.5).abs() < 1e-7);
    }

    #[test]
    fn pd_subgradient_examples() {
        let e = construct_pd_subgradient(&GoodFunctionSpec::trace(3)).unwrap();
        assert!(e.sub(&SymMatrix::identity(3)).norm_frobenius() < 1e-12);

        let y = SymMatrix::diag(&[2.0, 0.5]);
        let f = GoodFunctionSpec::anisotropic(y.clone()).unwrap();
        assert!(construct_pd_subgradient(&f).unwrap().sub(&y).norm_frobenius() < 1e-12);

        let e = construct_pd_subgradient(&GoodFunctionSpec::lambda_max(2)).unwrap();
        assert!(e.sub(&SymMatrix::diag(&[0.5, 0.5])).norm_frobenius() < 1e-12);
    }

    #[test]
    fn hk_variant_subgradient_rejected() {
        let f = GoodFunctionSpec::new(GoodKind::HkVariant { k: 1, normalized: false }, 2).unwrap();
        assert!(matches!(
            subgradient_at(&f, &SymMatrix::identity(2)),
            Err(Error::UnsupportedKind(_))
        ));
    }
}
