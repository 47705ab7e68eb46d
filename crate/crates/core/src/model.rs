//! Nonlinearities of the biomass/nutrient system, the balance-condition and
//! structural-assumption validators, and the derived contraction exponent
//! kappa.
//!
//! The reaction terms are
//!   dM/dt = ... - f(M, rho),    drho/dt = ... - g(M, rho),
//! with f decomposing as `F5*M + f_tilde(M^beta, rho)` and g as
//! `G1*rho + g2(rho)*M`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type BinaryFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type UnaryFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Programmatic nonlinearity: evaluators plus the decomposition pieces.
#[derive(Clone)]
pub struct CustomSpec {
    /// f(M, rho)
    pub f: BinaryFn,
    /// g(M, rho)
    pub g: BinaryFn,
    /// f_tilde(s, rho) with s = M^beta
    pub f_tilde: BinaryFn,
    /// g2(rho)
    pub g2: UnaryFn,
    /// linear coefficient F5 in f = F5*M + f_tilde
    pub linear_coeff: f64,
}

impl fmt::Debug for CustomSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomSpec")
            .field("linear_coeff", &self.linear_coeff)
            .finish()
    }
}

/// Which f/g pair the model uses.
#[derive(Debug, Clone)]
pub enum NonlinearitySpec {
    /// f(M,rho) = M - (M^b/(M^b+1)) atan(rho),  g(M,rho) = rho + M rho/(rho+1).
    /// The sign-corrected variant; the only one satisfying all structural
    /// assumptions.
    Example2Corrected,
    /// f(M,rho) = -M + (M^b/(M^b+1)) atan(rho), as printed. Violates the
    /// lower bound f >= F2*M - F3 and the F5 > 0 requirement; kept for
    /// comparison runs.
    Example2Printed,
    /// f(M,rho) = -M, g = 0: the regime with an infinite-dimensional
    /// attractor for the M-component. Never assumption-conforming.
    Example1Counterexample,
    Custom(CustomSpec),
}

impl NonlinearitySpec {
    pub fn name(&self) -> &'static str {
        match self {
            NonlinearitySpec::Example2Corrected => "example2_corrected",
            NonlinearitySpec::Example2Printed => "example2_printed",
            NonlinearitySpec::Example1Counterexample => "example1_counterexample",
            NonlinearitySpec::Custom(_) => "custom",
        }
    }
}

/// Structural constants of assumptions (1.7)-(1.10), (1.12).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuralConstants {
    #[serde(rename = "F1")]
    pub f1: f64,
    #[serde(rename = "F2")]
    pub f2: f64,
    #[serde(rename = "F3")]
    pub f3: f64,
    #[serde(rename = "F5")]
    pub f5: f64,
    #[serde(rename = "G1")]
    pub g1: f64,
    #[serde(rename = "G2")]
    pub g2: f64,
    pub xi: f64,
}

impl Default for StructuralConstants {
    fn default() -> Self {
        // Smallest constants the sweep certifies for the corrected Example 2
        // nonlinearities: |f| <= M + pi/2 <= (1 + pi/2) sqrt(1 + M^2).
        Self {
            f1: 1.0 + PI / 2.0,
            f2: 0.5,
            f3: PI / 2.0,
            f5: 1.0,
            g1: 1.0,
            g2: 1.0,
            xi: 2.0,
        }
    }
}

/// Model parameters: exponents, nonlinearity choice and structural constants.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub spec: NonlinearitySpec,
    pub constants: StructuralConstants,
}

impl ModelParams {
    pub fn new(alpha: f64, gamma: f64, beta: f64, spec: NonlinearitySpec) -> Self {
        Self {
            alpha,
            gamma,
            beta,
            spec,
            constants: StructuralConstants::default(),
        }
    }

    /// Conforming default: corrected Example 2 with alpha=4, gamma=3.5, beta=3.2.
    pub fn example2_default() -> Self {
        Self::new(4.0, 3.5, 3.2, NonlinearitySpec::Example2Corrected)
    }

    /// Linear coefficient F5 in the decomposition f = F5*M + f_tilde.
    pub fn linear_coeff(&self) -> f64 {
        match &self.spec {
            NonlinearitySpec::Example2Corrected => self.constants.f5,
            NonlinearitySpec::Example2Printed => -1.0,
            NonlinearitySpec::Example1Counterexample => -1.0,
            NonlinearitySpec::Custom(c) => c.linear_coeff,
        }
    }

    /// f(M, rho) without the input checks; M, rho assumed nonnegative.
    pub(crate) fn f_raw(&self, m: f64, rho: f64) -> f64 {
        match &self.spec {
            NonlinearitySpec::Example2Corrected => {
                let s = m.powf(self.beta);
                m - s / (s + 1.0) * rho.atan()
            }
            NonlinearitySpec::Example2Printed => {
                let s = m.powf(self.beta);
                -m + s / (s + 1.0) * rho.atan()
            }
            NonlinearitySpec::Example1Counterexample => -m,
            NonlinearitySpec::Custom(c) => (c.f)(m, rho),
        }
    }

    /// f_tilde(s, rho) with s = M^beta.
    pub(crate) fn f_tilde_raw(&self, s: f64, rho: f64) -> f64 {
        match &self.spec {
            NonlinearitySpec::Example2Corrected => -s / (s + 1.0) * rho.atan(),
            NonlinearitySpec::Example2Printed => s / (s + 1.0) * rho.atan(),
            NonlinearitySpec::Example1Counterexample => 0.0,
            NonlinearitySpec::Custom(c) => (c.f_tilde)(s, rho),
        }
    }

    pub(crate) fn g_raw(&self, m: f64, rho: f64) -> f64 {
        match &self.spec {
            NonlinearitySpec::Example2Corrected | NonlinearitySpec::Example2Printed => {
                rho + m * rho / (rho + 1.0)
            }
            NonlinearitySpec::Example1Counterexample => 0.0,
            NonlinearitySpec::Custom(c) => (c.g)(m, rho),
        }
    }

    pub(crate) fn g2_raw(&self, rho: f64) -> f64 {
        match &self.spec {
            NonlinearitySpec::Example2Corrected | NonlinearitySpec::Example2Printed => {
                rho / (rho + 1.0)
            }
            NonlinearitySpec::Example1Counterexample => 0.0,
            NonlinearitySpec::Custom(c) => (c.g2)(rho),
        }
    }

    /// G1 of the decomposition g = G1*rho + g2(rho)*M.
    pub(crate) fn g_linear_coeff(&self) -> f64 {
        match &self.spec {
            NonlinearitySpec::Example1Counterexample => 0.0,
            _ => self.constants.g1,
        }
    }

    /// g2(rho)/rho, extended by its rho -> 0 limit. Used by the
    /// semi-implicit nutrient reaction step.
    pub(crate) fn g2_slope(&self, rho: f64) -> f64 {
        match &self.spec {
            NonlinearitySpec::Example2Corrected | NonlinearitySpec::Example2Printed => {
                1.0 / (rho + 1.0)
            }
            NonlinearitySpec::Example1Counterexample => 0.0,
            NonlinearitySpec::Custom(c) => {
                if rho > 1e-12 {
                    (c.g2)(rho) / rho
                } else {
                    ((c.g2)(1e-8) - (c.g2)(0.0)) / 1e-8
                }
            }
        }
    }
}

/// One checked condition: name, pass/fail, and how much slack remains.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub name: String,
    pub pass: bool,
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub conditions: Vec<ConditionReport>,
}

impl BalanceReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }
}

/// Check the balance conditions alpha > 0, 1 + alpha/2 < gamma < alpha and
/// beta > 1 + alpha/2. Failures are reported, not thrown.
pub fn validate_balance(alpha: f64, gamma: f64, beta: f64) -> BalanceReport {
    let cond = |name: &str, slack: f64| ConditionReport {
        name: name.to_string(),
        pass: slack > 0.0,
        slack,
    };
    BalanceReport {
        conditions: vec![
            cond("alpha > 0", alpha),
            cond("gamma > 1 + alpha/2", gamma - 1.0 - alpha / 2.0),
            cond("gamma < alpha", alpha - gamma),
            cond("beta > 1 + alpha/2", beta - 1.0 - alpha / 2.0),
        ],
    }
}

/// kappa = 2*(2*min(gamma, beta) - 2 - alpha)/(alpha + 2); strictly positive
/// under the balance conditions.
pub fn kappa(params: &ModelParams) -> Result<f64> {
    let report = validate_balance(params.alpha, params.gamma, params.beta);
    if !report.all_pass() {
        let failing: Vec<_> = report
            .conditions
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.clone())
            .collect();
        return Err(Error::BalanceViolation(failing.join(", ")));
    }
    let m = params.gamma.min(params.beta);
    Ok(2.0 * (2.0 * m - 2.0 - params.alpha) / (params.alpha + 2.0))
}

pub fn eval_f(params: &ModelParams, m: f64, rho: f64) -> Result<f64> {
    if m < 0.0 {
        return Err(Error::NegativeInput(format!("M = {m}")));
    }
    if rho < 0.0 {
        return Err(Error::NegativeInput(format!("rho = {rho}")));
    }
    Ok(params.f_raw(m, rho))
}

pub fn eval_g(params: &ModelParams, m: f64, rho: f64) -> Result<f64> {
    if m < 0.0 {
        return Err(Error::NegativeInput(format!("M = {m}")));
    }
    if rho < 0.0 {
        return Err(Error::NegativeInput(format!("rho = {rho}")));
    }
    Ok(params.g_raw(m, rho))
}

/// Worst violation found for one structural assumption. `margin <= 0` means
/// the assumption held on the whole sweep.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub name: String,
    pub pass: bool,
    pub worst_margin: f64,
    pub witness: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionSweep {
    pub reports: Vec<AssumptionReport>,
    pub sample_count: usize,
}

impl AssumptionSweep {
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }
}

/// Deterministic sweep over a log-spaced grid of (M, rho) in [0, 10^3]^2
/// checking assumptions (1+|M|^xi growth, linear lower bound, the g
/// decomposition, f(0,.)=0, g2(0)<=0) and the decomposition residual
/// |f - (F5*M + f_tilde(M^beta, rho))|.
pub fn validate_assumptions(params: &ModelParams, sample_count: usize) -> Result<AssumptionSweep> {
    if sample_count < 100 {
        return Err(Error::InvalidParameter(format!(
            "sample_count must be >= 100, got {sample_count}"
        )));
    }
    let per_axis = (sample_count as f64).sqrt().ceil() as usize;
    let mut samples = vec![0.0f64];
    for k in 0..per_axis {
        // log-spaced from 1e-3 to 1e3
        let t = k as f64 / (per_axis - 1) as f64;
        samples.push(10f64.powf(-3.0 + 6.0 * t));
    }

    let c = &params.constants;
    let f5 = params.linear_coeff();

    struct Tracker {
        name: &'static str,
        worst: f64,
        witness: Option<(f64, f64)>,
    }
    impl Tracker {
        fn new(name: &'static str) -> Self {
            Self {
                name,
                worst: f64::NEG_INFINITY,
                witness: None,
            }
        }
        fn observe(&mut self, margin: f64, m: f64, rho: f64) {
            if margin > self.worst {
                self.worst = margin;
                self.witness = Some((m, rho));
            }
        }
        fn finish(self, tol: f64) -> AssumptionReport {
            AssumptionReport {
                name: self.name.to_string(),
                pass: self.worst <= tol,
                worst_margin: self.worst,
                witness: self.witness,
            }
        }
    }

    let mut growth = Tracker::new("growth bound |f| <= F1 (1+|M|^xi)^(1/2)");
    let mut lower = Tracker::new("lower bound f >= F2 M - F3");
    let mut g_decomp = Tracker::new("g = G1 rho + g2(rho) M");
    let mut g2_bound = Tracker::new("|g2| <= G2");
    let mut f_zero = Tracker::new("f(0, rho) = 0");
    let mut residual = Tracker::new("f = F5 M + f_tilde(M^beta, rho)");

    for &m in &samples {
        for &rho in &samples {
            let f = params.f_raw(m, rho);
            let g = params.g_raw(m, rho);
            let g2v = params.g2_raw(rho);
            growth.observe(f.abs() - c.f1 * (1.0 + m.powf(c.xi)).sqrt(), m, rho);
            lower.observe(c.f2 * m - c.f3 - f, m, rho);
            g_decomp.observe(
                (g - (params.g_linear_coeff() * rho + g2v * m)).abs(),
                m,
                rho,
            );
            g2_bound.observe(g2v.abs() - c.g2, m, rho);
            residual.observe(
                (f - (f5 * m + params.f_tilde_raw(m.powf(params.beta), rho))).abs(),
                m,
                rho,
            );
        }
        f_zero.observe(params.f_raw(0.0, m).abs(), 0.0, m);
    }

    let mut reports = vec![
        growth.finish(1e-12),
        lower.finish(1e-12),
        g_decomp.finish(1e-12),
        g2_bound.finish(1e-12),
        f_zero.finish(1e-12),
        residual.finish(1e-12),
    ];
    reports.push(AssumptionReport {
        name: "g2(0) <= 0".to_string(),
        pass: params.g2_raw(0.0) <= 0.0,
        worst_margin: params.g2_raw(0.0),
        witness: Some((0.0, 0.0)),
    });
    reports.push(AssumptionReport {
        name: "F5 > 0".to_string(),
        pass: f5 > 0.0,
        worst_margin: -f5,
        witness: None,
    });

    Ok(AssumptionSweep {
        reports,
        sample_count: samples.len() * samples.len(),
    })
}

/// JSON-facing model configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub spec: String,
    #[serde(default)]
    pub constants: Option<StructuralConstants>,
}

impl ModelConfig {
    pub fn into_params(self) -> Result<ModelParams> {
        let spec = match self.spec.as_str() {
            "example2_corrected" => NonlinearitySpec::Example2Corrected,
            "example2_printed" => NonlinearitySpec::Example2Printed,
            "example1_counterexample" => NonlinearitySpec::Example1Counterexample,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown nonlinearity spec {other:?}; expected example2_corrected, \
                     example2_printed or example1_counterexample"
                )))
            }
        };
        Ok(ModelParams {
            alpha: self.alpha,
            gamma: self.gamma,
            beta: self.beta,
            spec,
            constants: self.constants.unwrap_or_default(),
        })
    }
}
