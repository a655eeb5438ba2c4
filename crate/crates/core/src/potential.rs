//! Convex potentials V, W defining log-concave densities e^{-V}.
//!
//! Analytic forms carry closed-form gradients and Hessians so duality checks
//! are not polluted by differentiation error; grid-sampled forms fall back to
//! interpolation and finite differences.

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::symcalc::SymMatrix;

/// Smooth perturbations available for the quadratic-plus form, with closed
/// derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    /// cos(x₀)
    CosAxis0,
    /// |x|⁴ / 4
    QuarticRadial,
    /// cosh(x₀) − 1
    CoshAxis0,
    /// x₀⁴ / 4
    QuarticAxis0,
}

impl Perturbation {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Perturbation::CosAxis0 => x[0].cos(),
            Perturbation::QuarticRadial => {
                let r2: f64 = x.iter().map(|c| c * c).sum();
                0.25 * r2 * r2
            }
            Perturbation::CoshAxis0 => x[0].cosh() - 1.0,
            Perturbation::QuarticAxis0 => 0.25 * x[0].powi(4),
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        match self {
            Perturbation::CosAxis0 => {
                let mut g = vec![0.0; d];
                g[0] = -x[0].sin();
                g
            }
            Perturbation::QuarticRadial => {
                let r2: f64 = x.iter().map(|c| c * c).sum();
                x.iter().map(|&c| r2 * c).collect()
            }
            Perturbation::CoshAxis0 => {
                let mut g = vec![0.0; d];
                g[0] = x[0].sinh();
                g
            }
            Perturbation::QuarticAxis0 => {
                let mut g = vec![0.0; d];
                g[0] = x[0].powi(3);
                g
            }
        }
    }

    pub fn hess(&self, x: &[f64]) -> SymMatrix {
        let d = x.len();
        match self {
            Perturbation::CosAxis0 => {
                let mut h = SymMatrix::zeros(d);
                h.set(0, 0, -x[0].cos());
                h
            }
            Perturbation::QuarticRadial => {
                let r2: f64 = x.iter().map(|c| c * c).sum();
                SymMatrix::from_fn(d, |i, j| {
                    let base = if i == j { r2 } else { 0.0 };
                    base + 2.0 * x[i] * x[j]
                })
            }
            Perturbation::CoshAxis0 => {
                let mut h = SymMatrix::zeros(d);
                h.set(0, 0, x[0].cosh());
                h
            }
            Perturbation::QuarticAxis0 => {
                let mut h = SymMatrix::zeros(d);
                h.set(0, 0, 3.0 * x[0] * x[0]);
                h
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Perturbation::CosAxis0 => "cos_axis0",
            Perturbation::QuarticRadial => "quartic_radial",
            Perturbation::CoshAxis0 => "cosh_axis0",
            Perturbation::QuarticAxis0 => "quartic_axis0",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "cos_axis0" => Ok(Perturbation::CosAxis0),
            "quartic_radial" => Ok(Perturbation::QuarticRadial),
            "cosh_axis0" => Ok(Perturbation::CoshAxis0),
            "quartic_axis0" => Ok(Perturbation::QuarticAxis0),
            other => Err(Error::Config(format!("unknown perturbation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum PotentialForm {
    /// V(x) = ½⟨x−m, Σ⁻¹(x−m)⟩ + ½(d·ln 2π + ln det Σ); e^{-V} is exactly the
    /// N(m, Σ) density.
    Gaussian { mean: Vec<f64>, covariance: SymMatrix },
    /// V(x) = ½⟨x, A x⟩ + amplitude · p(x), unnormalized.
    QuadraticPlus {
        base: SymMatrix,
        perturbation: Perturbation,
        amplitude: f64,
    },
    /// Sampled values on a grid, +∞ on masked nodes.
    Grid(GridField),
}

/// A convex potential with its evaluation domain.
#[derive(Debug, Clone)]
pub struct PotentialSpec {
    pub form: PotentialForm,
    pub convex: bool,
    pub domain_low: Vec<f64>,
    pub domain_high: Vec<f64>,
}

impl PotentialSpec {
    pub fn gaussian(mean: Vec<f64>, covariance: SymMatrix, box_half_width: f64) -> Result<Self> {
        let dim = mean.len();
        if covariance.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: covariance.dim(),
            });
        }
        if covariance.min_eigenvalue() <= 0.0 {
            return Err(Error::InvalidSpec(
                "Gaussian covariance must be positive definite".into(),
            ));
        }
        let low: Vec<f64> = mean.iter().map(|m| m - box_half_width).collect();
        let high: Vec<f64> = mean.iter().map(|m| m + box_half_width).collect();
        Ok(PotentialSpec {
            form: PotentialForm::Gaussian { mean, covariance },
            convex: true,
            domain_low: low,
            domain_high: high,
        })
    }

    /// Isotropic N(0, α²·Id) on the box [-half, half]^dim.
    pub fn gaussian_isotropic(dim: usize, alpha: f64, box_half_width: f64) -> Result<Self> {
        Self::gaussian(
            vec![0.0; dim],
            SymMatrix::identity(dim).scale(alpha * alpha),
            box_half_width,
        )
    }

    pub fn quadratic_plus(
        base: SymMatrix,
        perturbation: Perturbation,
        amplitude: f64,
        box_half_width: f64,
        convex: bool,
    ) -> Self {
        let dim = base.dim();
        PotentialSpec {
            form: PotentialForm::QuadraticPlus {
                base,
                perturbation,
                amplitude,
            },
            convex,
            domain_low: vec![-box_half_width; dim],
            domain_high: vec![box_half_width; dim],
        }
    }

    /// Wrap a sampled field. When `convex` is set, the field must pass the
    /// discrete midpoint-convexity scan along grid lines.
    pub fn grid_sampled(field: GridField, convex: bool) -> Result<Self> {
        if convex && !field.convexity_scan() {
            return Err(Error::InvalidSpec(
                "grid field marked convex fails the discrete convexity scan".into(),
            ));
        }
        let low = field.spec.low.clone();
        let high = field.spec.high.clone();
        Ok(PotentialSpec {
            form: PotentialForm::Grid(field),
            convex,
            domain_low: low,
            domain_high: high,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain_low.len()
    }

    pub fn domain_spec(&self, n: usize) -> Result<GridSpec> {
        GridSpec::new(
            self.domain_low.clone(),
            self.domain_high.clone(),
            vec![n; self.dim()],
        )
    }

    /// Evaluate the potential. Analytic forms extend beyond the domain box;
    /// grid forms return +∞ on masked cells and error outside the grid.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        match &self.form {
            PotentialForm::Gaussian { mean, covariance } => {
                let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
                let inv = covariance.inverse_spd()?;
                let quad = inv.quadratic_form(&diff);
                let log_det = covariance.log_det_spd()?;
                let d = self.dim() as f64;
                Ok(0.5 * quad + 0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det))
            }
            PotentialForm::QuadraticPlus {
                base,
                perturbation,
                amplitude,
            } => Ok(0.5 * base.quadratic_form(x) + amplitude * perturbation.eval(x)),
            PotentialForm::Grid(field) => match field.interpolate(x) {
                Ok(v) => Ok(v),
                Err(Error::Domain { point }) => {
                    if field.spec.contains(&point) {
                        Ok(f64::INFINITY)
                    } else {
                        Err(Error::Domain { point })
                    }
                }
                Err(e) => Err(e),
            },
        }
    }

    /// Closed-form gradient when the form is analytic.
    pub fn grad_closed(&self, x: &[f64]) -> Option<Vec<f64>> {
        match &self.form {
            PotentialForm::Gaussian { mean, covariance } => {
                let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
                covariance.inverse_spd().ok().map(|inv| inv.apply(&diff))
            }
            PotentialForm::QuadraticPlus {
                base,
                perturbation,
                amplitude,
            } => {
                let mut g = base.apply(x);
                let pg = perturbation.grad(x);
                for (gi, pi) in g.iter_mut().zip(pg) {
                    *gi += amplitude * pi;
                }
                Some(g)
            }
            PotentialForm::Grid(_) => None,
        }
    }

    /// Closed-form Hessian when the form is analytic.
    pub fn hess_closed(&self, x: &[f64]) -> Option<SymMatrix> {
        match &self.form {
            PotentialForm::Gaussian { covariance, .. } => covariance.inverse_spd().ok(),
            PotentialForm::QuadraticPlus {
                base,
                perturbation,
                amplitude,
            } => Some(base.add(&perturbation.hess(x).scale(*amplitude))),
            PotentialForm::Grid(_) => None,
        }
    }

    pub fn has_closed_derivatives(&self) -> bool {
        !matches!(self.form, PotentialForm::Grid(_))
    }

    /// Gradient: closed form when available, else fourth-order central
    /// differences of `eval` with step `h`.
    pub fn grad(&self, x: &[f64], h: f64) -> Result<Vec<f64>> {
        if let Some(g) = self.grad_closed(x) {
            return Ok(g);
        }
        let d = self.dim();
        let mut g = vec![0.0; d];
        for a in 0..d {
            let probe = |offset: f64| -> Result<f64> {
                let mut p = x.to_vec();
                p[a] += offset;
                self.eval(&p)
            };
            g[a] = (-probe(2.0 * h)? + 8.0 * probe(h)? - 8.0 * probe(-h)? + probe(-2.0 * h)?)
                / (12.0 * h);
        }
        Ok(g)
    }

    /// Sample onto a grid; non-finite values become masked nodes.
    pub fn sample(&self, spec: &GridSpec) -> Result<GridField> {
        if spec.dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: spec.dim,
            });
        }
        let len = spec.len();
        let mut values = vec![0.0; len];
        let mut mask = vec![false; len];
        for idx in 0..len {
            let x = spec.node(&spec.unflatten(idx));
            match self.eval(&x) {
                Ok(v) if v.is_finite() => values[idx] = v,
                Ok(_) => mask[idx] = true,
                Err(Error::Domain { .. }) => mask[idx] = true,
                Err(e) => return Err(e),
            }
        }
        GridField::new(spec.clone(), values, Some(mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_is_normalized_density() {
        // ∫ e^{-V} over a wide 1D grid should be 1.
        let v = PotentialSpec::gaussian_isotropic(1, 1.0, 8.0).unwrap();
        let spec = GridSpec::line(-8.0, 8.0, 2001).unwrap();
        let field = v.sample(&spec).unwrap();
        let mass: f64 = field.values.iter().map(|&w| (-w).exp()).sum::<f64>() * spec.spacing(0);
        assert!((mass - 1.0).abs() < 1e-6, "mass = {mass}");
    }

    #[test]
    fn quadratic_plus_derivatives_consistent() {
        let v = PotentialSpec::quadratic_plus(
            SymMatrix::identity(2),
            Perturbation::CosAxis0,
            0.1,
            4.0,
            true,
        );
        let x = [0.3, -0.2];
        let g = v.grad_closed(&x).unwrap();
        let h = 1e-5;
        for a in 0..2 {
            let mut plus = x.to_vec();
            plus[a] += h;
            let mut minus = x.to_vec();
            minus[a] -= h;
            let fd = (v.eval(&plus).unwrap() - v.eval(&minus).unwrap()) / (2.0 * h);
            assert!((fd - g[a]).abs() < 1e-8);
        }
        let hess = v.hess_closed(&x).unwrap();
        assert!((hess.get(0, 0) - (1.0 - 0.1 * x[0].cos())).abs() < 1e-12);
        assert!((hess.get(1, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_potential_masks_outside_support() {
        let spec = GridSpec::line(-2.0, 2.0, 41).unwrap();
        let field = GridField::from_fn(spec, |x| {
            if x[0].abs() <= 1.0 {
                x[0] * x[0]
            } else {
                f64::INFINITY
            }
        })
        .unwrap();
        let w = PotentialSpec::grid_sampled(field, true).unwrap();
        assert!(w.eval(&[0.5]).unwrap().is_finite());
        assert!(w.eval(&[1.9]).unwrap().is_infinite());
    }
}
