//! Good spectral functions on symmetric matrices.
//!
//! A continuous f: S_d → ℝ is *good* when it is convex, increasing on the PSD
//! cone (with f(X) > 0 for nonzero PSD X), and positively homogeneous. The
//! certified kinds here are the trace, the largest eigenvalue, partial
//! eigenvalue sums S_k, positive-part p-norms N_p, and linear forms ⟨X,Y⟩
//! with PSD Y. The H_k eigenvalue-product variant is carried as an
//! *uncertified* construction: [`check_goodness`] is the arbiter that
//! documents where it fails.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::symcalc::matrix::{dense_trace, sym_product_dense, SymMatrix};

#[derive(Debug, Clone, PartialEq)]
pub enum GoodKind {
    /// S_d(X) = Tr X.
    Trace,
    /// S_1(X) = λ_max(X).
    LambdaMax,
    /// S_k(X) = λ₁ + ⋯ + λ_k.
    SumTopK(usize),
    /// N_p(X) = ‖λ⁺‖_p, p ≥ 1.
    PNormPositive(f64),
    /// Eigenvalue-product variant H_k. Uncertified: both readings of the
    /// normalization fail goodness, which `check_goodness` exhibits.
    HkVariant { k: usize, normalized: bool },
    /// f(X) = ⟨X, Y⟩ with Y positive semidefinite.
    Anisotropic(SymMatrix),
}

impl GoodKind {
    pub fn name(&self) -> &'static str {
        match self {
            GoodKind::Trace => "Trace",
            GoodKind::LambdaMax => "LambdaMax",
            GoodKind::SumTopK(_) => "SumTopK",
            GoodKind::PNormPositive(_) => "PNormPositive",
            GoodKind::HkVariant { .. } => "HkVariant",
            GoodKind::Anisotropic(_) => "Anisotropic",
        }
    }
}

/// A candidate good function together with the dimension it acts on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GoodFunctionJson", into = "GoodFunctionJson")]
pub struct GoodFunctionSpec {
    kind: GoodKind,
    dim: usize,
}

impl GoodFunctionSpec {
    pub fn new(kind: GoodKind, dim: usize) -> Result<Self> {
        if dim == 0 || dim > super::matrix::MAX_DIM {
            return Err(Error::InvalidSpec(format!("dimension {dim} out of range")));
        }
        match &kind {
            GoodKind::SumTopK(k) | GoodKind::HkVariant { k, .. } => {
                if *k < 1 || *k > dim {
                    return Err(Error::InvalidSpec(format!(
                        "k = {k} outside 1..={dim}"
                    )));
                }
            }
            GoodKind::PNormPositive(p) => {
                if p.is_nan() || *p < 1.0 {
                    return Err(Error::InvalidSpec(format!("p = {p} must be ≥ 1")));
                }
            }
            GoodKind::Anisotropic(y) => {
                if y.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: y.dim(),
                    });
                }
                if !y.is_psd(1e-10 * (1.0 + y.max_eigenvalue().abs())) {
                    return Err(Error::InvalidSpec(format!(
                        "anisotropic Y must be PSD (λ_min = {:.3e})",
                        y.min_eigenvalue()
                    )));
                }
            }
            GoodKind::Trace | GoodKind::LambdaMax => {}
        }
        Ok(GoodFunctionSpec { kind, dim })
    }

    pub fn trace(dim: usize) -> Self {
        Self::new(GoodKind::Trace, dim).expect("valid")
    }

    pub fn lambda_max(dim: usize) -> Self {
        Self::new(GoodKind::LambdaMax, dim).expect("valid")
    }

    pub fn sum_top_k(k: usize, dim: usize) -> Result<Self> {
        Self::new(GoodKind::SumTopK(k), dim)
    }

    pub fn p_norm_positive(p: f64, dim: usize) -> Result<Self> {
        Self::new(GoodKind::PNormPositive(p), dim)
    }

    pub fn anisotropic(y: SymMatrix) -> Result<Self> {
        let dim = y.dim();
        Self::new(GoodKind::Anisotropic(y), dim)
    }

    pub fn kind(&self) -> &GoodKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Kinds whose goodness holds by construction. The H_k variant is never
    /// certified; an anisotropic form needs Y ≻ 0 for strict positivity.
    pub fn is_certified(&self) -> bool {
        match &self.kind {
            GoodKind::HkVariant { .. } => false,
            GoodKind::Anisotropic(y) => y.min_eigenvalue() > 0.0,
            _ => true,
        }
    }

    /// Short label used in report file names and CSV columns.
    pub fn label(&self) -> String {
        match &self.kind {
            GoodKind::Trace => "trace".into(),
            GoodKind::LambdaMax => "lambda_max".into(),
            GoodKind::SumTopK(k) => format!("s{k}"),
            GoodKind::PNormPositive(p) => format!("n{p}"),
            GoodKind::HkVariant { k, normalized } => {
                format!("h{k}{}", if *normalized { "_norm" } else { "" })
            }
            GoodKind::Anisotropic(_) => "anisotropic".into(),
        }
    }

    /// Evaluate the symmetric gauge g on an eigenvalue vector (descending
    /// order assumed for the partial sums).
    pub(crate) fn gauge(&self, lambda: &[f64]) -> f64 {
        match &self.kind {
            GoodKind::Trace => lambda.iter().sum(),
            GoodKind::LambdaMax => lambda[0],
            GoodKind::SumTopK(k) => lambda.iter().take(*k).sum(),
            GoodKind::PNormPositive(p) => {
                let sum: f64 = lambda
                    .iter()
                    .filter(|&&l| l > 0.0)
                    .map(|&l| l.powf(*p))
                    .sum();
                sum.powf(1.0 / p)
            }
            GoodKind::HkVariant { k, normalized } => {
                if lambda.iter().any(|&l| l <= 0.0) {
                    return 0.0;
                }
                // Each index appears k·C/d times across the C = C(d+k-1, k)
                // size-k multisets, so the tuple product collapses to a power
                // of ∏λ_i. The raw reading keeps the literal 1/k exponent;
                // the normalized one divides by the tuple count, giving the
                // (degree-one) geometric mean.
                let d = lambda.len() as f64;
                let count = multiset_count(lambda.len(), *k);
                let log_sum: f64 = lambda.iter().map(|&l| l.ln()).sum();
                let exponent = if *normalized {
                    1.0 / d
                } else {
                    count / d
                };
                (exponent * log_sum).exp()
            }
            GoodKind::Anisotropic(_) => unreachable!("anisotropic has no gauge"),
        }
    }
}

/// C(d+k-1, k) as f64 (number of size-k multisets over d symbols).
fn multiset_count(d: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (d + i) as f64 / (i + 1) as f64;
    }
    c
}

/// Evaluate f(X). Spectral kinds go through the cached eigendecomposition;
/// the anisotropic kind is the Frobenius pairing ⟨X, Y⟩.
///
/// The H_k variant returns 0 whenever some λ⁺ vanishes (every tuple in the
/// product picks up the zero factor).
pub fn eval_good(f: &GoodFunctionSpec, x: &SymMatrix) -> Result<f64> {
    if f.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: x.dim(),
        });
    }
    let value = match f.kind() {
        GoodKind::Anisotropic(y) => x.inner(y),
        _ => f.gauge(x.eigenvalues()),
    };
    if !value.is_finite() {
        return Err(Error::Degenerate(format!(
            "non-finite good-function value {value}"
        )));
    }
    Ok(value)
}

/// Outcome of probing one property over many sampled trials.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyOutcome {
    pub passes: usize,
    pub failures: usize,
    /// Human-readable description of the first failing sample, if any.
    pub first_counterexample: Option<String>,
}

impl PropertyOutcome {
    fn new() -> Self {
        PropertyOutcome {
            passes: 0,
            failures: 0,
            first_counterexample: None,
        }
    }

    fn record(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        if ok {
            self.passes += 1;
        } else {
            self.failures += 1;
            if self.first_counterexample.is_none() {
                self.first_counterexample = Some(describe());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Randomized goodness certificate: convexity, PSD monotonicity, strict
/// positivity on the PSD cone, and positive homogeneity.
#[derive(Debug, Clone, Serialize)]
pub struct GoodnessReport {
    pub trials: usize,
    pub seed: u64,
    pub convexity: PropertyOutcome,
    pub monotonicity: PropertyOutcome,
    pub positivity: PropertyOutcome,
    pub homogeneity: PropertyOutcome,
}

impl GoodnessReport {
    pub fn all_passed(&self) -> bool {
        self.convexity.passed()
            && self.monotonicity.passed()
            && self.positivity.passed()
            && self.homogeneity.passed()
    }
}

fn describe_matrix(x: &SymMatrix) -> String {
    let d = x.dim();
    let rows: Vec<String> = (0..d)
        .map(|i| {
            let cols: Vec<String> = (0..d).map(|j| format!("{:.6}", x.get(i, j))).collect();
            format!("[{}]", cols.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

/// Sample a symmetric matrix with entries in [-scale, scale].
pub(crate) fn sample_symmetric(rng: &mut impl Rng, dim: usize, scale: f64) -> SymMatrix {
    SymMatrix::from_fn(dim, |_, _| rng.random_range(-scale..scale))
}

/// Sample a PSD matrix G Gᵀ with the given rank.
pub(crate) fn sample_psd_rank(rng: &mut impl Rng, dim: usize, rank: usize, scale: f64) -> SymMatrix {
    let g: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..rank).map(|_| rng.random_range(-scale..scale)).collect())
        .collect();
    SymMatrix::from_fn(dim, |i, j| (0..rank).map(|r| g[i][r] * g[j][r]).sum())
}

pub(crate) fn sample_psd(rng: &mut impl Rng, dim: usize, scale: f64) -> SymMatrix {
    sample_psd_rank(rng, dim, dim, scale)
}

/// Probe the goodness properties of `f` on seeded random samples.
///
/// A failing property is a report outcome, not an error: the H_k variant is
/// expected to produce counterexamples here.
pub fn check_goodness(f: &GoodFunctionSpec, trials: usize, seed: u64) -> Result<GoodnessReport> {
    if trials < 1 {
        return Err(Error::InvalidSpec("trials must be ≥ 1".into()));
    }
    let d = f.dim();
    let mut rng = rng_for(seed);
    let mut report = GoodnessReport {
        trials,
        seed,
        convexity: PropertyOutcome::new(),
        monotonicity: PropertyOutcome::new(),
        positivity: PropertyOutcome::new(),
        homogeneity: PropertyOutcome::new(),
    };

    for _ in 0..trials {
        // Midpoint convexity on matrices with entries in [-10, 10].
        let x = sample_symmetric(&mut rng, d, 10.0);
        let z = sample_symmetric(&mut rng, d, 10.0);
        let mid = x.add(&z).scale(0.5);
        let fx = eval_good(f, &x)?;
        let fz = eval_good(f, &z)?;
        let fmid = eval_good(f, &mid)?;
        report.convexity.record(fmid <= 0.5 * (fx + fz) + 1e-9, || {
            format!(
                "midpoint convexity: f(mid) = {fmid} > (f(X)+f(Z))/2 = {} for X = {}, Z = {}",
                0.5 * (fx + fz),
                describe_matrix(&x),
                describe_matrix(&z)
            )
        });

        // Monotonicity 0 ⪯ X ⪯ X' with X' = X + PSD increment.
        let base = sample_psd(&mut rng, d, 2.0);
        let incr = sample_psd(&mut rng, d, 1.5);
        let bigger = base.add(&incr);
        let fb = eval_good(f, &base)?;
        let fbig = eval_good(f, &bigger)?;
        report.monotonicity.record(fb <= fbig + 1e-9, || {
            format!(
                "monotonicity: f(X) = {fb} > f(X + P) = {fbig} for X = {}, P = {}",
                describe_matrix(&base),
                describe_matrix(&incr)
            )
        });

        // Strict positivity on nonzero PSD samples of every rank.
        let rank = rng.random_range(1..=d);
        let pos = sample_psd_rank(&mut rng, d, rank, 2.0);
        let norm = pos.norm_frobenius();
        if norm > 1e-8 {
            let fp = eval_good(f, &pos)?;
            report.positivity.record(fp > 0.0, || {
                format!(
                    "positivity: f(X) = {fp} ≤ 0 for nonzero PSD X = {} (rank {rank})",
                    describe_matrix(&pos)
                )
            });
        }

        // Positive homogeneity at t ∈ {0.5, 2, 10}.
        let hx = sample_symmetric(&mut rng, d, 10.0);
        let fhx = eval_good(f, &hx)?;
        let mut homogeneous = true;
        let mut detail = String::new();
        for &t in &[0.5, 2.0, 10.0] {
            let ft = eval_good(f, &hx.scale(t))?;
            if (ft - t * fhx).abs() > 1e-10 * t * (1.0 + fhx.abs()) {
                homogeneous = false;
                detail = format!(
                    "homogeneity: f({t}·X) = {ft} vs t·f(X) = {} for X = {}",
                    t * fhx,
                    describe_matrix(&hx)
                );
                break;
            }
        }
        report.homogeneity.record(homogeneous, || detail);
    }
    Ok(report)
}

/// Frobenius Cauchy–Schwarz gap `Tr(HXH)·Tr(X⁻¹) − Tr(H)²` for X ≻ 0.
///
/// The gap is nonnegative up to roundoff: the two factors are
/// ⟨HX^{1/2}, HX^{1/2}⟩ and ⟨X^{-1/2}, X^{-1/2}⟩ while Tr(H) is their pairing.
pub fn frobenius_cs_gap(h: &SymMatrix, x: &SymMatrix) -> Result<f64> {
    if h.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: x.dim(),
        });
    }
    let min = x.min_eigenvalue();
    if min <= 1e-12 {
        return Err(Error::SingularMatrix { min_eig: min });
    }
    let d = h.dim();
    let hx = sym_product_dense(h, x);
    // Tr(HXH) = Σ_ij (HX)_ij H_ji.
    let mut tr_hxh = 0.0;
    for i in 0..d {
        for j in 0..d {
            tr_hxh += hx[i * d + j] * h.get(j, i);
        }
    }
    let tr_x_inv: f64 = x.eigenvalues().iter().map(|l| 1.0 / l).sum();
    let tr_h = dense_trace(&h.to_dense(), d);
    Ok(tr_hxh * tr_x_inv - tr_h * tr_h)
}

/// Scale factor for the roundoff slack of [`frobenius_cs_gap`].
pub fn frobenius_cs_scale(h: &SymMatrix, x: &SymMatrix) -> f64 {
    let x_inv_norm = x
        .inverse_spd()
        .map(|inv| inv.norm_frobenius())
        .unwrap_or(f64::INFINITY);
    (1.0 + h.norm_frobenius().powi(2)) * (1.0 + x_inv_norm)
}

#[derive(Serialize, Deserialize, Clone)]
struct GoodFunctionJson {
    kind: String,
    dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(rename = "Y", skip_serializing_if = "Option::is_none")]
    y: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    normalized: Option<bool>,
}

impl From<GoodFunctionSpec> for GoodFunctionJson {
    fn from(spec: GoodFunctionSpec) -> Self {
        let mut json = GoodFunctionJson {
            kind: spec.kind.name().to_string(),
            dim: spec.dim,
            k: None,
            p: None,
            y: None,
            normalized: None,
        };
        match spec.kind {
            GoodKind::SumTopK(k) => json.k = Some(k),
            GoodKind::PNormPositive(p) => json.p = Some(p),
            GoodKind::HkVariant { k, normalized } => {
                json.k = Some(k);
                json.normalized = Some(normalized);
            }
            GoodKind::Anisotropic(y) => json.y = Some(y.to_dense()),
            _ => {}
        }
        json
    }
}

impl TryFrom<GoodFunctionJson> for GoodFunctionSpec {
    type Error = Error;

    fn try_from(json: GoodFunctionJson) -> Result<Self> {
        let kind = match json.kind.as_str() {
            "Trace" => GoodKind::Trace,
            "LambdaMax" => GoodKind::LambdaMax,
            "SumTopK" => GoodKind::SumTopK(
                json.k
                    .ok_or_else(|| Error::Config("SumTopK requires \"k\"".into()))?,
            ),
            "PNormPositive" => GoodKind::PNormPositive(
                json.p
                    .ok_or_else(|| Error::Config("PNormPositive requires \"p\"".into()))?,
            ),
            "HkVariant" => GoodKind::HkVariant {
                k: json
                    .k
                    .ok_or_else(|| Error::Config("HkVariant requires \"k\"".into()))?,
                normalized: json.normalized.unwrap_or(false),
            },
            "Anisotropic" => {
                let y = json
                    .y
                    .ok_or_else(|| Error::Config("Anisotropic requires \"Y\"".into()))?;
                GoodKind::Anisotropic(SymMatrix::from_dense(json.dim, &y)?)
            }
            other => {
                return Err(Error::Config(format!("unknown good-function kind {other:?}")));
            }
        };
        GoodFunctionSpec::new(kind, json.dim)
    }
}
