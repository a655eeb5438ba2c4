//! Verify the sharp Gaussian case end to end and print the report:
//! μ = N(0, I), ν = N(0, 4·I) saturate ‖f(∇²φ)‖_∞ = √(Λ_V/λ_W) with
//! T(x) = 2x.
//!
//! Run with `cargo run --release --example sharp_gaussian`.

use brenier_bounds::symcalc::GoodFunctionSpec;
use brenier_bounds::verify::{registry_entry, solve_entry, verify_bound_with_solution};

fn main() -> Result<(), brenier_bounds::Error> {
    for id in ["gauss1d-sharp-a1-b2", "gauss2d-sharp-a1-b2"] {
        let entry = registry_entry(id)?;
        let sol = solve_entry(&entry)?;
        println!(
            "{id}: solved in {} iterations (marginal error {:.2e}, push W1 {:.2e})",
            sol.meta.iterations, sol.meta.marginal_error, sol.meta.push_tol
        );
        for f in [
            GoodFunctionSpec::trace(entry.dim),
            GoodFunctionSpec::lambda_max(entry.dim),
        ] {
            let report = verify_bound_with_solution(&entry, &f, &sol)?;
            println!(
                "  {:<10} sup f(∇²φ) = {:.6}  bound = {:.6}  ratio = {:.6} ± {:.1e}  {:?}",
                f.label(),
                report.sup_f_hessian_phi,
                report.bound,
                report.ratio,
                report.total_margin,
                report.verdict
            );
        }
    }
    Ok(())
}
