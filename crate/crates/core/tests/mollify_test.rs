//! Integration tests for the mollification pipeline and its
//! estimate-preservation guarantees.

use brenier_bounds::conjugate::ConjugateGrids;
use brenier_bounds::grid::{GridField, GridSpec};
use brenier_bounds::mollify::{
    check_dual_preservation, check_laplacian_preservation, interpolate_with_gaussian,
    mollify_log_density, truncate_and_mollify_w, MollifierSpec,
};
use brenier_bounds::potential::{Perturbation, PotentialSpec};
use brenier_bounds::rng::rng_for;
use brenier_bounds::symcalc::{GoodFunctionSpec, SymMatrix};
use rand::Rng;

#[test]
fn mollified_gaussian_converges_on_t_ladder() {
    // max |V_t − V| over the central region decreases along t → 0.
    let v = PotentialSpec::gaussian_isotropic(1, 1.0, 5.0).unwrap();
    let padded = GridSpec::line(-5.0, 5.0, 2001).unwrap();
    let mut sups = Vec::new();
    for t in [0.4, 0.2, 0.1] {
        let out = mollify_log_density(&v, &MollifierSpec::new(t).unwrap(), &padded).unwrap();
        let field = out.field;
        let window = field.spec.central_window(0.6);
        let mut sup = 0.0f64;
        for multi in field.spec.interior_nodes(0) {
            if !multi.iter().zip(&window).all(|(&i, &(lo, hi))| i >= lo && i <= hi) {
                continue;
            }
            let x = field.spec.node(&multi);
            sup = sup.max((field.get(&multi).unwrap() - v.eval(&x).unwrap()).abs());
        }
        sups.push(sup);
    }
    assert!(sups[0] > sups[1] && sups[1] > sups[2], "ladder {sups:?}");
}

#[test]
fn mollification_preserves_mass() {
    // ∫ e^{-V_t} = ∫ e^{-V} within 1e-10 when the padding absorbs the kernel.
    // The box must be wide enough that the density at the shrunken inner
    // boundary sits below the 1e-10 budget (tail mass is what convolution
    // can leak across the edge).
    let v = PotentialSpec::gaussian_isotropic(1, 1.0, 8.0).unwrap();
    let padded = GridSpec::line(-8.0, 8.0, 1601).unwrap();
    let out = mollify_log_density(&v, &MollifierSpec::new(0.3).unwrap(), &padded).unwrap();
    let inner = &out.field.spec;
    let mut mass_t = 0.0;
    for idx in 0..out.field.values.len() {
        if !out.field.mask[idx] {
            mass_t += (-out.field.values[idx]).exp();
        }
    }
    mass_t *= inner.cell_volume();
    // Reference mass of e^{-V} over the same inner region.
    let mut mass = 0.0;
    for idx in 0..inner.len() {
        let x = inner.node(&inner.unflatten(idx));
        mass += (-v.eval(&x).unwrap()).exp();
    }
    mass *= inner.cell_volume();
    assert!((mass_t - mass).abs() <= 1e-10, "mass drift {:.3e}", mass_t - mass);
}

#[test]
fn density_convergence_is_locally_uniform() {
    // max over the central 60% of |e^{-V_t} − e^{-V}| decreases along the
    // ladder (the locally-uniform-convergence surrogate).
    let v = PotentialSpec::gaussian_isotropic(2, 1.0, 4.0).unwrap();
    let padded = GridSpec::cube(2, -4.0, 4.0, 161).unwrap();
    let mut sups = Vec::new();
    for t in [0.4, 0.2, 0.1] {
        let out = mollify_log_density(&v, &MollifierSpec::new(t).unwrap(), &padded).unwrap();
        let window = out.field.spec.central_window(0.6);
        let mut sup = 0.0f64;
        for multi in out.field.spec.interior_nodes(0) {
            if !multi.iter().zip(&window).all(|(&i, &(lo, hi))| i >= lo && i <= hi) {
                continue;
            }
            let x = out.field.spec.node(&multi);
            let dt = (-out.field.get(&multi).unwrap()).exp();
            let d0 = (-v.eval(&x).unwrap()).exp();
            sup = sup.max((dt - d0).abs());
        }
        sups.push(sup);
    }
    assert!(sups[0] > sups[1] && sups[1] > sups[2], "ladder {sups:?}");
}

#[test]
fn kink_is_smoothed_to_bounded_second_quotient() {
    // V = |x| + x²/2 has a kink; raw second quotients blow up like 1/h while
    // the mollified field plateaus at D²V_t(0) ≈ 1 + O(1/t).
    let spec_for = |n: usize| GridSpec::line(-2.0, 2.0, n).unwrap();
    let kink = |x: &[f64]| x[0].abs() + 0.5 * x[0] * x[0];
    let mut raw_quotients = Vec::new();
    let mut mollified_quotients = Vec::new();
    for n in [201, 401, 801] {
        let spec = spec_for(n);
        let h = spec.spacing(0);
        let raw = GridField::from_fn(spec.clone(), kink).unwrap();
        let center = n / 2;
        let q = (raw.values[center + 1] + raw.values[center - 1] - 2.0 * raw.values[center]) / (h * h);
        raw_quotients.push(q);

        let pot = PotentialSpec::grid_sampled(raw, true).unwrap();
        let out = mollify_log_density(&pot, &MollifierSpec::new(0.25).unwrap(), &spec).unwrap();
        let field = out.field;
        let mut max_q = 0.0f64;
        for multi in field.spec.interior_nodes(1) {
            let i = multi[0];
            if let (Some(a), Some(b), Some(c)) = (
                field.get(&[i - 1]),
                field.get(&[i]),
                field.get(&[i + 1]),
            ) {
                max_q = max_q.max(((a + c - 2.0 * b) / (h * h)).abs());
            }
        }
        mollified_quotients.push(max_q);
    }
    // Raw kink: quotient doubles with each refinement; mollified: plateau.
    assert!(raw_quotients[2] > 1.5 * raw_quotients[1]);
    assert!(
        mollified_quotients[2] <= 1.2 * mollified_quotients[1],
        "no plateau: {mollified_quotients:?}"
    );
}

#[test]
fn laplacian_preservation_for_quadratics() {
    // V = |x|²/2 in 2D, f = Trace, Λ_V = 2.
    let v = PotentialSpec::gaussian_isotropic(2, 1.0, 4.0).unwrap();
    let padded = GridSpec::cube(2, -4.0, 4.0, 161).unwrap();
    let f = GoodFunctionSpec::trace(2);
    let report = check_laplacian_preservation(
        &v,
        &MollifierSpec::new(0.2).unwrap(),
        &f,
        2.0,
        &padded,
    )
    .unwrap();
    assert!(report.passed(), "{:?}", report.counterexample);
    assert!(report.max_excess <= 1e-6, "excess {:.3e}", report.max_excess);
    assert!(report.matrix_min_gap >= -report.tolerance);

    // Anisotropic quadratic ⟨x, Ax⟩/2: ∇²V_t ⪯ A.
    let a = SymMatrix::diag(&[1.0, 0.5]);
    let v2 = PotentialSpec::quadratic_plus(a, Perturbation::CosAxis0, 0.0, 4.0, true);
    let report2 = check_laplacian_preservation(
        &v2,
        &MollifierSpec::new(0.2).unwrap(),
        &f,
        1.5,
        &padded,
    )
    .unwrap();
    assert!(report2.passed(), "{:?}", report2.counterexample);
}

#[test]
fn truncated_mollified_quadratic_examples() {
    // R far beyond the interesting region: W_t − W is spatially constant on
    // the center (convolving a quadratic only adds a constant).
    let w = PotentialSpec::gaussian_isotropic(1, 1.0, 3.0).unwrap();
    let grid = GridSpec::line(-3.0, 3.0, 1201).unwrap();
    let out = truncate_and_mollify_w(&w, &MollifierSpec::new(0.2).unwrap(), 2.5, &grid).unwrap();
    let window = grid.central_window(0.5);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for multi in grid.interior_nodes(0) {
        if !multi.iter().zip(&window).all(|(&i, &(l, h))| i >= l && i <= h) {
            continue;
        }
        if let Some(v) = out.field.get(&multi) {
            let x = grid.node(&multi);
            let diff = v - w.eval(&x).unwrap();
            lo = lo.min(diff);
            hi = hi.max(diff);
        }
    }
    assert!(hi - lo <= 1e-6, "difference not constant: spread {:.3e}", hi - lo);

    // Quadratic growth floor along rays: W ∗ η_t(x) ≥ (|x| − t)²/2 − c.
    for multi in grid.interior_nodes(0) {
        if let Some(v) = out.field.get(&multi) {
            let x = grid.node(&multi)[0];
            let floor = 0.5 * (x.abs() - 0.2).max(0.0).powi(2);
            assert!(v - out.c_t >= floor - 1e-9, "floor violated at {x}");
        }
    }
}

#[test]
fn truncation_recovers_potential_as_t_shrinks() {
    // t → 0 ladder: W_t − c_t approaches W on the truncated region.
    let w = PotentialSpec::gaussian_isotropic(1, 2.0, 2.0).unwrap();
    let grid = GridSpec::line(-1.6, 1.6, 801).unwrap();
    let mut sups = Vec::new();
    for t in [0.4, 0.2, 0.1] {
        let out = truncate_and_mollify_w(&w, &MollifierSpec::new(t).unwrap(), 1.0, &grid).unwrap();
        let mut sup = 0.0f64;
        for multi in grid.interior_nodes(0) {
            if let Some(v) = out.field.get(&multi) {
                let x = grid.node(&multi);
                sup = sup.max((v - out.c_t - w.eval(&x).unwrap()).abs());
            }
        }
        sups.push(sup);
    }
    assert!(sups[0] > sups[1] && sups[1] > sups[2], "ladder {sups:?}");
}

#[test]
fn dual_preservation_ladder() {
    let trace1 = GoodFunctionSpec::trace(1);

    // Gaussian, β = 2, λ_W = 1/β²: f(∇²W_t*) ≤ β² + 1e-4 (commensurate dual
    // grid keeps the conjugate exact on the quadratic part).
    let w = PotentialSpec::gaussian_isotropic(1, 2.0, 1.5).unwrap();
    let grid = GridSpec::line(-1.5, 1.5, 601).unwrap();
    let report = check_dual_preservation(
        &w,
        &MollifierSpec::new(0.2).unwrap(),
        &trace1,
        0.25,
        1.0,
        &grid,
        &ConjugateGrids {
            primal_n: 0,
            dual: GridSpec::line(-0.8, 0.8, 33).unwrap(),
        },
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "{:?}", report.counterexample);

    // Quadratic 2D: Jensen equality for the constant Hessian, so the matrix
    // spot-check gap is zero to roundoff.
    let w2 = PotentialSpec::quadratic_plus(
        SymMatrix::diag(&[1.0, 2.0]),
        Perturbation::CosAxis0,
        0.0,
        1.5,
        true,
    );
    let grid2 = GridSpec::cube(2, -1.5, 1.5, 301).unwrap();
    let trace2 = GoodFunctionSpec::trace(2);
    let report2 = check_dual_preservation(
        &w2,
        &MollifierSpec::new(0.2).unwrap(),
        &trace2,
        1.0 / 1.5,
        1.0,
        &grid2,
        &ConjugateGrids {
            primal_n: 0,
            dual: GridSpec::new(vec![-0.6, -0.6], vec![0.6, 0.6], vec![21, 21]).unwrap(),
        },
        1e-6,
    )
    .unwrap();
    assert!(report2.passed(), "{:?}", report2.counterexample);
    assert!(
        report2.matrix_min_gap.abs() <= 1e-9,
        "Jensen equality violated: {:.3e}",
        report2.matrix_min_gap
    );

    // Quartic 1D on the shipped t ladder.
    let w3 = PotentialSpec::quadratic_plus(
        SymMatrix::identity(1),
        Perturbation::QuarticRadial,
        1.0,
        1.5,
        true,
    );
    for t in [0.2, 0.1, 0.05] {
        let report3 = check_dual_preservation(
            &w3,
            &MollifierSpec::new(t).unwrap(),
            &trace1,
            1.0,
            1.0,
            &grid,
            &ConjugateGrids {
                primal_n: 0,
                dual: GridSpec::line(-1.2, 1.2, 25).unwrap(),
            },
            2e-2,
        )
        .unwrap();
        assert!(report3.passed(), "t = {t}: {:?}", report3.counterexample);
    }
}

#[test]
fn inversion_is_operator_convex_on_samples() {
    // (sA + (1-s)B)⁻¹ ⪯ s·A⁻¹ + (1-s)·B⁻¹ + 1e-9·Id on seeded PSD samples.
    let mut rng = rng_for(0xabc);
    for _ in 0..1000 {
        let d = rng.random_range(2..=5);
        let sample_spd = |rng: &mut rand_chacha::ChaCha8Rng| {
            let g: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            SymMatrix::from_fn(d, |i, j| {
                (0..d).map(|k| g[i * d + k] * g[j * d + k]).sum::<f64>()
                    + if i == j { 0.3 } else { 0.0 }
            })
        };
        let a = sample_spd(&mut rng);
        let b = sample_spd(&mut rng);
        let s: f64 = rng.random_range(0.0..=1.0);
        let mix = a.scale(s).add(&b.scale(1.0 - s));
        let lhs = mix.inverse_spd().unwrap();
        let rhs = a
            .inverse_spd()
            .unwrap()
            .scale(s)
            .add(&b.inverse_spd().unwrap().scale(1.0 - s));
        let gap = rhs.sub(&lhs).min_eigenvalue();
        assert!(gap >= -1e-9, "operator convexity violated: {gap:.3e}");
    }
}

#[test]
fn gaussian_interpolation_path_bounds_laplacian() {
    // ΔV_t = (1-t)·ΔV + t·Λ_V ≤ Λ_V exactly for the closed-form path.
    let v = PotentialSpec::quadratic_plus(
        SymMatrix::diag(&[0.5, 1.0]),
        Perturbation::CosAxis0,
        0.1,
        4.0,
        true,
    );
    let lambda_v = 2.1;
    let mut rng = rng_for(0x5a);
    for _ in 0..50 {
        let t: f64 = rng.random_range(0.0..=1.0);
        let vt = interpolate_with_gaussian(&v, t, lambda_v).unwrap();
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let lap_before = v.hess_closed(&x).unwrap().trace();
        let lap_after = vt.hess_closed(&x).unwrap().trace();
        assert!((lap_after - ((1.0 - t) * lap_before + t * lambda_v)).abs() <= 1e-12);
        assert!(lap_after <= lambda_v + 1e-12);
    }
}
