//! Integration tests for the Brenier solvers: quantile coupling in 1D,
//! entropic regularization in 2D, Monge–Ampère residuals, and the
//! cross-solver consistency invariants.

use brenier_bounds::grid::GridSpec;
use brenier_bounds::potential::{Perturbation, PotentialSpec};
use brenier_bounds::rng::rng_for;
use brenier_bounds::symcalc::{GoodFunctionSpec, SymMatrix};
use brenier_bounds::transport::{
    brenier_1d, monge_ampere_residual, solve, sup_good_hessian, BrenierSolution, EntropicConfig,
    SolverKind, TransportProblem,
};
use rand::Rng;

fn gaussian_1d(alpha: f64, beta: f64, n: usize) -> TransportProblem {
    TransportProblem {
        mu: PotentialSpec::gaussian_isotropic(1, alpha, 6.2 * alpha).unwrap(),
        nu: PotentialSpec::gaussian_isotropic(1, beta, 6.2 * beta).unwrap(),
        primal: GridSpec::line(-6.2 * alpha, 6.2 * alpha, n).unwrap(),
        dual: GridSpec::line(-6.2 * beta, 6.2 * beta, n).unwrap(),
        solver: SolverKind::Quantile1d,
        window_fraction: 0.6,
    }
}

fn map_error_against(sol: &BrenierSolution, exact: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    let mut worst = 0.0f64;
    for multi in sol.window_nodes() {
        let x = sol.grid.node(&multi);
        let want = exact(&x);
        for (comp, want_c) in sol.map.iter().zip(&want) {
            worst = worst.max((comp.get(&multi).unwrap() - want_c).abs());
        }
    }
    worst
}

#[test]
fn quantile_dilation_matches_closed_form() {
    // μ = N(0,1), ν = N(0,4): T(x) = 2x within 1e-6 on |x| ≤ 4.
    let problem = gaussian_1d(1.0, 2.0, 4001);
    let sol = brenier_1d(&problem).unwrap();
    let mut worst = 0.0f64;
    for multi in problem.primal.interior_nodes(0) {
        let x = problem.primal.node(&multi)[0];
        if x.abs() <= 4.0 {
            worst = worst.max((sol.map[0].get(&multi).unwrap() - 2.0 * x).abs());
        }
    }
    assert!(worst <= 1e-6, "max |T - 2x| = {worst:.3e}");
}

#[test]
fn quantile_tail_map_into_smoothed_uniform() {
    // ν = indicator of [-1,1] mollified and truncated back to [-1,1]: the
    // density is smooth inside, ≈ 1/2 of the plateau at the edges, and
    // vanishes outside, so T(±4) lands within 1e-3 of ±1 (tail-quantile
    // oracle: 1 - T(4) ≈ (1 - Φ(4)) / edge-density ≈ 1.2e-4).
    let edge = 0.15;
    let kernel_cdf = move |s: f64| -> f64 {
        // CDF of the bump kernel c·(1-u²)³ on [-1,1].
        let poly = |u: f64| u - u.powi(3) + 0.6 * u.powi(5) - u.powi(7) / 7.0;
        let u = s.clamp(-1.0, 1.0);
        (poly(u) - poly(-1.0)) / (poly(1.0) - poly(-1.0))
    };
    let plateau = move |y: f64| -> f64 {
        // Grid coordinates carry last-bit rounding; keep the |y| = 1 node in.
        if y.abs() > 1.0 + 1e-9 {
            0.0
        } else {
            kernel_cdf((1.0 - y.abs()) / edge)
        }
    };
    let spec = GridSpec::line(-1.2, 1.2, 961).unwrap();
    let field = brenier_bounds::grid::GridField::from_fn(spec.clone(), move |x| {
        let d = plateau(x[0]);
        if d > 0.0 {
            -d.ln()
        } else {
            f64::INFINITY
        }
    })
    .unwrap();
    let nu = PotentialSpec::grid_sampled(field, false).unwrap();
    let problem = TransportProblem {
        mu: PotentialSpec::gaussian_isotropic(1, 1.0, 6.2).unwrap(),
        nu,
        primal: GridSpec::line(-6.2, 6.2, 4001).unwrap(),
        dual: spec,
        solver: SolverKind::Quantile1d,
        window_fraction: 0.6,
    };
    let sol = brenier_1d(&problem).unwrap();
    let t_at = |x: f64| sol.map_at(&[x]).unwrap()[0];
    assert!((t_at(4.0) - 1.0).abs() <= 1e-3, "T(4) = {}", t_at(4.0));
    assert!((t_at(-4.0) + 1.0).abs() <= 1e-3, "T(-4) = {}", t_at(-4.0));
}

#[test]
fn scaling_equivariance() {
    // Solving (μ, ν) scaled by x → s·x rescales the map: T_s(x) = s·T(x/s).
    let base = gaussian_1d(1.0, 2.0, 2001);
    let sol = brenier_1d(&base).unwrap();
    let s = 2.0;
    let scaled = gaussian_1d(s, 2.0 * s, 2001);
    let sol_s = brenier_1d(&scaled).unwrap();
    let mut worst = 0.0f64;
    for multi in sol_s.window_nodes() {
        let x = sol_s.grid.node(&multi)[0];
        let expected = s * sol.map_at(&[x / s]).unwrap()[0];
        worst = worst.max((sol_s.map[0].get(&multi).unwrap() - expected).abs());
    }
    assert!(worst <= 1e-8, "equivariance gap {worst:.3e}");
}

#[test]
fn monge_ampere_residual_1d() {
    // Gaussian → Gaussian (α=1, β=2): closed form φ = x² gives r ≡ 0; the
    // discrete residual is bounded by stencil error on |x| ≤ 3.
    let problem = gaussian_1d(1.0, 2.0, 4001);
    let mut sol = brenier_1d(&problem).unwrap();
    // Widen the window to cover |x| ≤ 3 of the box [-6.2, 6.2].
    sol.window = problem.primal.central_window(0.97);
    let report = monge_ampere_residual(&sol, &problem).unwrap();
    let mut sup3 = 0.0f64;
    for multi in problem.primal.interior_nodes(1) {
        let x = problem.primal.node(&multi)[0];
        if x.abs() <= 3.0 {
            if let Some(r) = report.field.get(&multi) {
                sup3 = sup3.max(r.abs());
            }
        }
    }
    assert!(sup3 <= 1e-4, "sup |r| on |x| ≤ 3 is {sup3:.3e}");

    // μ = ν quadratic: residual at stencil roundoff.
    let same = gaussian_1d(1.0, 1.0, 2001);
    let sol_same = brenier_1d(&same).unwrap();
    let report_same = monge_ampere_residual(&sol_same, &same).unwrap();
    assert!(report_same.sup_abs <= 1e-8, "identity residual {:.3e}", report_same.sup_abs);
}

#[test]
fn entropic_identity_2d_within_1e3() {
    let mu = PotentialSpec::gaussian_isotropic(2, 1.0, 6.2).unwrap();
    let problem = TransportProblem {
        primal: GridSpec::cube(2, -6.2, 6.2, 71).unwrap(),
        dual: GridSpec::cube(2, -6.2, 6.2, 71).unwrap(),
        mu: mu.clone(),
        nu: mu,
        solver: SolverKind::Entropic(EntropicConfig::default()),
        window_fraction: 0.6,
    };
    let sol = solve(&problem).unwrap();
    let err = map_error_against(&sol, |x| x.to_vec());
    assert!(err <= 1e-3, "identity map error {err:.3e}");

    // Cyclical monotonicity of order 2 for the entropic map: the allowed
    // slack is 1e-6 times the box diameter.
    let tol_mono = 1e-6 * sol.grid.diameter();
    let nodes = sol.window_nodes();
    let mut rng = rng_for(0x3c);
    for _ in 0..2000 {
        let a = &nodes[rng.random_range(0..nodes.len())];
        let b = &nodes[rng.random_range(0..nodes.len())];
        let xa = sol.grid.node(a);
        let xb = sol.grid.node(b);
        let ta = [sol.map[0].get(a).unwrap(), sol.map[1].get(a).unwrap()];
        let tb = [sol.map[0].get(b).unwrap(), sol.map[1].get(b).unwrap()];
        let inner: f64 = (0..2).map(|k| (ta[k] - tb[k]) * (xa[k] - xb[k])).sum();
        assert!(inner >= -tol_mono, "monotonicity violated: {inner:.3e}");
    }
}

#[test]
fn entropic_dilation_2d() {
    // μ = N(0,I), ν = N(0,4I): ‖T(x) − 2x‖ ≤ 0.02·(1+|x|) on the window.
    let problem = TransportProblem {
        mu: PotentialSpec::gaussian_isotropic(2, 1.0, 6.2).unwrap(),
        nu: PotentialSpec::gaussian_isotropic(2, 2.0, 12.4).unwrap(),
        primal: GridSpec::cube(2, -6.2, 6.2, 63).unwrap(),
        dual: GridSpec::cube(2, -12.4, 12.4, 95).unwrap(),
        solver: SolverKind::Entropic(EntropicConfig::default()),
        window_fraction: 0.6,
    };
    let sol = solve(&problem).unwrap();
    let mut worst_rel = 0.0f64;
    for multi in sol.window_nodes() {
        let x = sol.grid.node(&multi);
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let t = [
            sol.map[0].get(&multi).unwrap(),
            sol.map[1].get(&multi).unwrap(),
        ];
        let err = ((t[0] - 2.0 * x[0]).powi(2) + (t[1] - 2.0 * x[1]).powi(2)).sqrt();
        worst_rel = worst_rel.max(err / (1.0 + r));
    }
    assert!(worst_rel <= 0.02, "relative map error {worst_rel:.3e}");

    // Affine exactness: ∇²φ spatially constant within 2% relative spread.
    let f = GoodFunctionSpec::trace(2);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for multi in sol.window_nodes() {
        if let Some(h) = sol.hessian_at(&multi) {
            let tr = h.trace();
            lo = lo.min(tr);
            hi = hi.max(tr);
        }
    }
    let spread = (hi - lo) / (0.5 * (hi + lo));
    assert!(spread <= 0.02, "Hessian spread {spread:.3e}");

    // f-matrix consistency: sup Tr ≥ sup λ_max node-wise and in the sups.
    let sup_tr = sup_good_hessian(&sol, &f).unwrap().value;
    let sup_lmax = sup_good_hessian(&sol, &GoodFunctionSpec::lambda_max(2)).unwrap().value;
    assert!(sup_tr >= sup_lmax);

    // φ is convex: Hessian nodes are PSD up to a -1e-6 eigenvalue slack.
    for multi in sol.window_nodes() {
        if let Some(h) = sol.hessian_at(&multi) {
            assert!(h.min_eigenvalue() >= -1e-6, "non-PSD Hessian node");
        }
    }

    // 2D residual: plateau of the ε ladder stays under 0.05 on the window.
    let report = monge_ampere_residual(&sol, &problem).unwrap();
    assert!(report.sup_abs <= 0.05, "2D residual sup {:.3e}", report.sup_abs);
    assert!(report.skipped == 0);

    // Push-forward metric is reported and small for this smooth pair.
    assert!(sol.meta.push_tol < 0.05, "push_tol {:.3e}", sol.meta.push_tol);
}

#[test]
fn entropic_matches_product_of_1d_quantile_maps() {
    // Separable target: ν ∝ e^{-(y₁⁴/4 + y₁²/2)} ⊗ N(0,1). The 2D map is the
    // product of the per-axis 1D quantile maps.
    let nu_2d = PotentialSpec::quadratic_plus(
        SymMatrix::identity(2),
        Perturbation::QuarticAxis0,
        1.0,
        3.5,
        true,
    );
    let problem = TransportProblem {
        mu: PotentialSpec::gaussian_isotropic(2, 1.0, 6.2).unwrap(),
        nu: nu_2d,
        primal: GridSpec::cube(2, -6.2, 6.2, 71).unwrap(),
        // Per-axis target box: the quartic marginal is tight, the Gaussian
        // axis must cover the identity image of the window.
        dual: GridSpec::new(vec![-3.5, -6.2], vec![3.5, 6.2], vec![71, 71]).unwrap(),
        solver: SolverKind::Entropic(EntropicConfig::default()),
        window_fraction: 0.6,
    };
    let sol = solve(&problem).unwrap();

    // Axis-0 oracle: 1D quantile map into e^{-(y⁴/4 + y²/2)}.
    let axis0 = TransportProblem {
        mu: PotentialSpec::gaussian_isotropic(1, 1.0, 6.2).unwrap(),
        nu: PotentialSpec::quadratic_plus(
            SymMatrix::identity(1),
            Perturbation::QuarticAxis0,
            1.0,
            3.5,
            true,
        ),
        primal: GridSpec::line(-6.2, 6.2, 2001).unwrap(),
        dual: GridSpec::line(-3.5, 3.5, 2001).unwrap(),
        solver: SolverKind::Quantile1d,
        window_fraction: 0.6,
    };
    let sol0 = brenier_1d(&axis0).unwrap();
    let err = map_error_against(&sol, |x| {
        vec![sol0.map_at(&[x[0]]).unwrap()[0], x[1]]
    });
    assert!(err <= 2e-2, "separable map error {err:.3e}");
}

#[test]
fn duality_consistency_1d_entropic_vs_quantile() {
    // φ from cumulative integration and from the entropic dual agree up to a
    // constant within 5e-3·osc(φ) on the window.
    let mut problem = gaussian_1d(1.0, 2.0, 201);
    problem.dual = GridSpec::line(-12.4, 12.4, 301).unwrap();
    let quantile = brenier_1d(&problem).unwrap();
    problem.solver = SolverKind::Entropic(EntropicConfig::default());
    let entropic = solve(&problem).unwrap();
    let mut drift_lo = f64::INFINITY;
    let mut drift_hi = f64::NEG_INFINITY;
    let mut osc_lo = f64::INFINITY;
    let mut osc_hi = f64::NEG_INFINITY;
    for multi in entropic.window_nodes() {
        let diff = entropic.potential.get(&multi).unwrap() - quantile.potential.get(&multi).unwrap();
        drift_lo = drift_lo.min(diff);
        drift_hi = drift_hi.max(diff);
        let phi = quantile.potential.get(&multi).unwrap();
        osc_lo = osc_lo.min(phi);
        osc_hi = osc_hi.max(phi);
    }
    let drift = drift_hi - drift_lo;
    let osc = osc_hi - osc_lo;
    assert!(drift <= 5e-3 * osc, "drift {drift:.3e} vs 5e-3·osc = {:.3e}", 5e-3 * osc);
}

#[test]
fn monotone_coupling_order_two() {
    // ⟨T(x) − T(x'), x − x'⟩ ≥ 0 on sampled pairs (1D quantile exact; 2D
    // entropic within the stated tolerance).
    let problem = gaussian_1d(1.0, 2.0, 1001);
    let sol = brenier_1d(&problem).unwrap();
    let mut rng = rng_for(0x77);
    for _ in 0..1000 {
        let i = rng.random_range(0..sol.grid.n[0]);
        let j = rng.random_range(0..sol.grid.n[0]);
        let (xi, xj) = (sol.grid.coord(0, i), sol.grid.coord(0, j));
        let (ti, tj) = (sol.map[0].values[i], sol.map[0].values[j]);
        assert!((ti - tj) * (xi - xj) >= 0.0);
    }
}

#[test]
fn hessian_cross_stencil_symmetry() {
    let problem = TransportProblem {
        mu: PotentialSpec::gaussian_isotropic(2, 1.0, 5.0).unwrap(),
        nu: PotentialSpec::gaussian_isotropic(2, 1.3, 6.5).unwrap(),
        primal: GridSpec::cube(2, -5.0, 5.0, 41).unwrap(),
        dual: GridSpec::cube(2, -6.5, 6.5, 41).unwrap(),
        solver: SolverKind::Entropic(EntropicConfig::default()),
        window_fraction: 0.6,
    };
    let sol = solve(&problem).unwrap();
    for multi in sol.window_nodes() {
        if let Some(h) = sol.hessian_at(&multi) {
            // Packed symmetric storage: the two cross entries are the same
            // slot by construction.
            assert_eq!(h.get(0, 1), h.get(1, 0));
        }
    }
}

#[test]
fn entropic_error_paths() {
    let mu = PotentialSpec::gaussian_isotropic(2, 1.0, 4.0).unwrap();
    let mut problem = TransportProblem {
        primal: GridSpec::cube(2, -4.0, 4.0, 21).unwrap(),
        dual: GridSpec::cube(2, -4.0, 4.0, 21).unwrap(),
        mu: mu.clone(),
        nu: mu,
        solver: SolverKind::Entropic(EntropicConfig {
            epsilon_schedule: vec![],
            max_iters: 1,
            tol: 1e-14,
        }),
        window_fraction: 0.6,
    };
    assert!(matches!(
        solve(&problem),
        Err(brenier_bounds::error::Error::Convergence { .. })
    ));

    problem.solver = SolverKind::Entropic(EntropicConfig {
        epsilon_schedule: vec![1.0, 2.0],
        max_iters: 100,
        tol: 1e-7,
    });
    assert!(matches!(
        solve(&problem),
        Err(brenier_bounds::error::Error::Schedule(_))
    ));
}
