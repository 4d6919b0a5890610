//! Parametric preference and technology families, their closed-form
//! derivatives and inverses, and the stationary marginal bundle shared by
//! every equilibrium concept.
//!
//! The discount family is `alpha(c) = abar - (abar - alpha0) * exp(-a c)`:
//! strictly increasing, strictly concave, bounded by `abar < 1`. Utility is
//! the power family `u(c) = scale * c^(1-sigma) / (1-sigma)` with
//! `sigma in (0,1)`, and technology is `f(k) = A k^beta` net of depreciation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("inverse domain error: {value} outside [{lo}, {hi})")]
    InverseDomain { value: f64, lo: f64, hi: f64 },
    #[error("model violates assumptions: {}", .0.join("; "))]
    AssumptionViolated(Vec<String>),
}

/// Discount factor family `alpha(c) = abar - (abar - alpha0) e^(-a c)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DiscountFamily {
    pub alpha0: f64,
    pub alpha_bar: f64,
    pub curvature: f64,
}

impl DiscountFamily {
    pub fn new(alpha0: f64, alpha_bar: f64, curvature: f64) -> Result<Self, ModelError> {
        let fam = Self { alpha0, alpha_bar, curvature };
        fam.check()?;
        Ok(fam)
    }

    fn check(&self) -> Result<(), ModelError> {
        let mut problems = Vec::new();
        if !(self.alpha0 > 0.0) {
            problems.push(format!("(U2) alpha(0) = alpha0 must be positive, got {}", self.alpha0));
        }
        if !(self.alpha_bar < 1.0) {
            problems.push(format!("(U2) sup alpha = alpha_bar must be < 1, got {}", self.alpha_bar));
        }
        if !(self.alpha0 < self.alpha_bar) {
            problems.push(format!(
                "(U1) alpha must be strictly increasing: needs alpha0 < alpha_bar, got {} >= {}",
                self.alpha0, self.alpha_bar
            ));
        }
        if !(self.curvature > 0.0) {
            problems.push(format!("(U1) curvature must be positive, got {}", self.curvature));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::AssumptionViolated(problems))
        }
    }

    pub fn value(&self, c: f64) -> f64 {
        self.alpha_bar - (self.alpha_bar - self.alpha0) * (-self.curvature * c).exp()
    }

    pub fn d1(&self, c: f64) -> f64 {
        self.curvature * (self.alpha_bar - self.alpha0) * (-self.curvature * c).exp()
    }

    pub fn d2(&self, c: f64) -> f64 {
        -self.curvature * self.d1(c)
    }

    pub fn eval(&self, c: f64) -> Result<(f64, f64, f64), ModelError> {
        if c < 0.0 {
            return Err(ModelError::Domain(format!("discount factor needs c >= 0, got {c}")));
        }
        Ok((self.value(c), self.d1(c), self.d2(c)))
    }

    /// Inverse of `alpha` on `[alpha0, alpha_bar)`:
    /// `c = -ln((abar - v)/(abar - alpha0)) / a`.
    pub fn invert(&self, v: f64) -> Result<f64, ModelError> {
        if v < self.alpha0 || v >= self.alpha_bar {
            return Err(ModelError::InverseDomain { value: v, lo: self.alpha0, hi: self.alpha_bar });
        }
        Ok(-((self.alpha_bar - v) / (self.alpha_bar - self.alpha0)).ln() / self.curvature)
    }

    /// One-period discount rate `rho(c) = 1/alpha(c) - 1`.
    pub fn discount_rate(&self, c: f64) -> f64 {
        1.0 / self.value(c) - 1.0
    }
}

/// Power utility `u(c) = scale * c^(1-sigma) / (1-sigma)`, `sigma in (0,1)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct UtilityFamily {
    pub sigma: f64,
    pub scale: f64,
}

impl UtilityFamily {
    pub fn new(sigma: f64, scale: f64) -> Result<Self, ModelError> {
        let fam = Self { sigma, scale };
        fam.check()?;
        Ok(fam)
    }

    fn check(&self) -> Result<(), ModelError> {
        let mut problems = Vec::new();
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            problems.push(format!("(U3) sigma must lie in (0,1), got {}", self.sigma));
        }
        if !(self.scale > 0.0) {
            problems.push(format!("(U3) scale must be positive, got {}", self.scale));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::AssumptionViolated(problems))
        }
    }

    pub fn value(&self, c: f64) -> f64 {
        self.scale * c.powf(1.0 - self.sigma) / (1.0 - self.sigma)
    }

    pub fn d1(&self, c: f64) -> f64 {
        self.scale * c.powf(-self.sigma)
    }

    pub fn d2(&self, c: f64) -> f64 {
        -self.scale * self.sigma * c.powf(-self.sigma - 1.0)
    }

    pub fn eval(&self, c: f64) -> Result<(f64, f64, f64), ModelError> {
        if c < 0.0 {
            return Err(ModelError::Domain(format!("utility needs c >= 0, got {c}")));
        }
        if c == 0.0 {
            return Err(ModelError::Domain(
                "utility derivatives are unbounded at c = 0 for the power family".into(),
            ));
        }
        Ok((self.value(c), self.d1(c), self.d2(c)))
    }
}

/// Technology `f(k) = A k^beta`, net of depreciation, with `beta in (0,1)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct TechnologyFamily {
    pub tfp: f64,
    pub beta: f64,
}

impl TechnologyFamily {
    pub fn new(tfp: f64, beta: f64) -> Result<Self, ModelError> {
        let fam = Self { tfp, beta };
        fam.check()?;
        Ok(fam)
    }

    fn check(&self) -> Result<(), ModelError> {
        let mut problems = Vec::new();
        if !(self.tfp > 0.0) {
            problems.push(format!("(T1) A must be positive, got {}", self.tfp));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            problems.push(format!("(T1)/(T2) beta must lie in (0,1), got {}", self.beta));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::AssumptionViolated(problems))
        }
    }

    pub fn value(&self, k: f64) -> f64 {
        self.tfp * k.powf(self.beta)
    }

    pub fn d1(&self, k: f64) -> f64 {
        self.tfp * self.beta * k.powf(self.beta - 1.0)
    }

    pub fn d2(&self, k: f64) -> f64 {
        self.tfp * self.beta * (self.beta - 1.0) * k.powf(self.beta - 2.0)
    }

    pub fn eval(&self, k: f64) -> Result<(f64, f64, f64), ModelError> {
        if k < 0.0 {
            return Err(ModelError::Domain(format!("technology needs k >= 0, got {k}")));
        }
        if k == 0.0 {
            return Err(ModelError::Domain(
                "technology derivatives are unbounded at k = 0".into(),
            ));
        }
        Ok((self.value(k), self.d1(k), self.d2(k)))
    }

    /// Maximum sustainable capital: `f(k_m) = k_m`, so `k_m = A^(1/(1-beta))`.
    pub fn max_sustainable_capital(&self) -> f64 {
        self.tfp.powf(1.0 / (1.0 - self.beta))
    }

    /// Capital at which `f'(k) = slope`.
    pub fn capital_with_marginal_product(&self, slope: f64) -> f64 {
        (self.tfp * self.beta / slope).powf(1.0 / (1.0 - self.beta))
    }
}

/// An agent's preferences: discount family plus instantaneous utility.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Agent {
    pub discount: DiscountFamily,
    pub utility: UtilityFamily,
}

/// The full parametric bundle: two agents, technology, income shares.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ModelSpec {
    pub agent_i: Agent,
    pub agent_j: Agent,
    pub technology: TechnologyFamily,
    pub theta_i: f64,
}

impl ModelSpec {
    pub fn theta_j(&self) -> f64 {
        1.0 - self.theta_i
    }
}

/// Marginal quantities at a candidate stationary consumption.
///
/// `v_bar` is the prospective utility of the constant path, the fixed point
/// of the aggregator: `v = u(c) + alpha(c) v`. Off a stationary point the
/// aggregate value function must come from Bellman iteration instead, so the
/// bundle is meaningful only at candidate steady states.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MarginalBundle {
    pub c: f64,
    pub v_bar: f64,
    /// `U = u'(c) + alpha'(c) v_bar`, the marginal aggregator composite.
    pub marginal_u: f64,
    /// `W = u''(c) + alpha''(c) v_bar`, its curvature composite.
    pub curvature_w: f64,
    /// `delta = alpha'(c) / alpha(c)`.
    pub delta: f64,
    /// `omega = delta - W/U`.
    pub omega: f64,
}

pub fn marginal_bundle(agent: &Agent, c: f64) -> Result<MarginalBundle, ModelError> {
    if !(c > 0.0) {
        return Err(ModelError::Domain(format!("marginal bundle needs c > 0, got {c}")));
    }
    let alpha = agent.discount.value(c);
    let v_bar = agent.utility.value(c) / (1.0 - alpha);
    let marginal_u = agent.utility.d1(c) + agent.discount.d1(c) * v_bar;
    let curvature_w = agent.utility.d2(c) + agent.discount.d2(c) * v_bar;
    let delta = agent.discount.d1(c) / alpha;
    let omega = delta - curvature_w / marginal_u;
    Ok(MarginalBundle { c, v_bar, marginal_u, curvature_w, delta, omega })
}

/// One named assumption check.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Pass/fail report for every model assumption.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect()
    }

    /// Error form for callers that refuse invalid models.
    pub fn ensure(&self) -> Result<(), ModelError> {
        if self.passed() {
            Ok(())
        } else {
            Err(ModelError::AssumptionViolated(self.failures()))
        }
    }
}

pub const DOMINANCE_GRID: usize = 1000;

/// Checks every structural assumption plus the dominance condition
/// `alpha_i(c) >= alpha_j(c)` on a 1000-point grid over `comparison_interval`.
pub fn validate_model(spec: &ModelSpec, comparison_interval: (f64, f64)) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(AssumptionCheck { name: name.to_string(), passed, detail });
    };

    let finite = [
        spec.agent_i.discount.alpha0,
        spec.agent_i.discount.alpha_bar,
        spec.agent_i.discount.curvature,
        spec.agent_i.utility.sigma,
        spec.agent_i.utility.scale,
        spec.agent_j.discount.alpha0,
        spec.agent_j.discount.alpha_bar,
        spec.agent_j.discount.curvature,
        spec.agent_j.utility.sigma,
        spec.agent_j.utility.scale,
        spec.technology.tfp,
        spec.technology.beta,
        spec.theta_i,
    ]
    .iter()
    .all(|v| v.is_finite());
    push("finite", finite, "all parameters finite".into());
    if !finite {
        return ValidationReport { checks };
    }

    for (label, agent) in [("agent i", &spec.agent_i), ("agent j", &spec.agent_j)] {
        match agent.discount.check() {
            Ok(()) => push(&format!("(U1)-(U2) {label}"), true, "discount family admissible".into()),
            Err(ModelError::AssumptionViolated(v)) => {
                push(&format!("(U1)-(U2) {label}"), false, v.join("; "))
            }
            Err(e) => push(&format!("(U1)-(U2) {label}"), false, e.to_string()),
        }
        match agent.utility.check() {
            Ok(()) => push(&format!("(U3)-(U4) {label}"), true, "utility family admissible".into()),
            Err(ModelError::AssumptionViolated(v)) => {
                push(&format!("(U3)-(U4) {label}"), false, v.join("; "))
            }
            Err(e) => push(&format!("(U3)-(U4) {label}"), false, e.to_string()),
        }
    }

    match spec.technology.check() {
        Ok(()) => {
            let km = spec.technology.max_sustainable_capital();
            push("(T1) technology", true, format!("admissible, k_m = {km}"));
            // f'(0+) must dominate both 1/alpha(0); probe near zero
            let probe = 1e-9 * km;
            let fp0 = spec.technology.d1(probe);
            let need = f64::max(
                1.0 / spec.agent_i.discount.value(0.0),
                1.0 / spec.agent_j.discount.value(0.0),
            );
            push(
                "(T2) inada at 0",
                fp0 > need,
                format!("f'({probe:e}) = {fp0} vs max(1/alpha(0)) = {need}"),
            );
            let fpm = spec.technology.d1(km);
            push("(T2) f'(k_m) < 1", fpm < 1.0, format!("f'(k_m) = {fpm}"));
        }
        Err(ModelError::AssumptionViolated(v)) => push("(T1)-(T2) technology", false, v.join("; ")),
        Err(e) => push("(T1)-(T2) technology", false, e.to_string()),
    }

    let theta_ok = spec.theta_i > 0.0 && spec.theta_i < 1.0;
    push("shares in (0,1)", theta_ok, format!("theta_i = {}", spec.theta_i));
    push(
        "theta_i > theta_j",
        spec.theta_i > spec.theta_j(),
        format!("theta_i = {} vs theta_j = {}", spec.theta_i, spec.theta_j()),
    );

    // dominance: alpha_i >= alpha_j on the comparison grid
    let (lo, hi) = comparison_interval;
    let mut worst = f64::INFINITY;
    let mut worst_c = lo;
    for n in 0..DOMINANCE_GRID {
        let c = lo + (hi - lo) * n as f64 / (DOMINANCE_GRID - 1) as f64;
        let gap = spec.agent_i.discount.value(c) - spec.agent_j.discount.value(c);
        if gap < worst {
            worst = gap;
            worst_c = c;
        }
    }
    push(
        "dominance alpha_i >= alpha_j",
        worst >= 0.0,
        format!("worst margin {worst} at c = {worst_c}"),
    );

    ValidationReport { checks }
}

/// The canonical test model used by golden tests and the examples in the
/// repository: patient agent i, impatient agent j, equal discount curvature
/// and saturation gap so the dominance margin is constant.
pub fn canonical_m1() -> ModelSpec {
    ModelSpec {
        agent_i: Agent {
            discount: DiscountFamily { alpha0: 0.55, alpha_bar: 0.95, curvature: 2.0 },
            utility: UtilityFamily { sigma: 0.5, scale: 1.0 },
        },
        agent_j: Agent {
            discount: DiscountFamily { alpha0: 0.50, alpha_bar: 0.90, curvature: 2.0 },
            utility: UtilityFamily { sigma: 0.5, scale: 1.0 },
        },
        technology: TechnologyFamily { tfp: 1.0, beta: 0.3 },
        theta_i: 0.6,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1() -> ModelSpec {
        canonical_m1()
    }

    #[test]
    fn m1_validates() {
        let report = validate_model(&m1(), (0.0, 1.0));
        assert!(report.passed(), "failures: {:?}", report.failures());
    }

    #[test]
    fn alpha_bar_above_one_rejected() {
        let mut spec = m1();
        spec.agent_i.discount.alpha_bar = 1.2;
        let report = validate_model(&spec, (0.0, 1.0));
        assert!(!report.passed());
        let msg = report.failures().join(" ");
        assert!(msg.contains("(U2)"), "expected a (U2) failure, got: {msg}");
    }

    #[test]
    fn swapped_agents_fail_dominance() {
        let spec = m1();
        let swapped = ModelSpec {
            agent_i: spec.agent_j,
            agent_j: spec.agent_i,
            technology: spec.technology,
            theta_i: spec.theta_i,
        };
        let report = validate_model(&swapped, (0.0, 1.0));
        assert!(!report.passed());
        assert!(report.failures().join(" ").contains("dominance"));
    }

    #[test]
    fn discount_eval_closed_forms_at_zero() {
        let fam = DiscountFamily::new(0.5, 0.9, 2.0).unwrap();
        let (v, d1, d2) = fam.eval(0.0).unwrap();
        assert_eq!(v, 0.5);
        assert!((d1 - 0.8).abs() < 1e-15);
        assert!((d2 + 1.6).abs() < 1e-15);
    }

    #[test]
    fn technology_eval_closed_forms() {
        let fam = TechnologyFamily::new(1.0, 0.3).unwrap();
        let (v, d1, d2) = fam.eval(1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert!((d1 - 0.3).abs() < 1e-15);
        assert!((d2 + 0.21).abs() < 1e-15);
    }

    #[test]
    fn utility_eval_closed_forms() {
        // u(c) = 2 sqrt(c): u(4) = 4, u'(4) = 1/2, u''(4) = -1/16
        let fam = UtilityFamily::new(0.5, 1.0).unwrap();
        let (v, d1, d2) = fam.eval(4.0).unwrap();
        assert!((v - 4.0).abs() < 1e-15);
        assert!((d1 - 0.5).abs() < 1e-15);
        assert!((d2 + 0.0625).abs() < 1e-15);
    }

    #[test]
    fn utility_derivative_at_zero_rejected() {
        let fam = UtilityFamily::new(0.5, 1.0).unwrap();
        assert!(matches!(fam.eval(0.0), Err(ModelError::Domain(_))));
        assert!(matches!(fam.eval(-1.0), Err(ModelError::Domain(_))));
    }

    #[test]
    fn invert_alpha_at_lower_edge() {
        let fam = DiscountFamily::new(0.5, 0.9, 2.0).unwrap();
        assert_eq!(fam.invert(0.5).unwrap(), 0.0);
    }

    #[test]
    fn invert_alpha_round_trip() {
        let fam = DiscountFamily::new(0.5, 0.9, 2.0).unwrap();
        let v = fam.value(1.3);
        assert!((fam.invert(v).unwrap() - 1.3).abs() < 1e-12);
    }

    #[test]
    fn invert_alpha_above_bar_rejected() {
        let fam = DiscountFamily::new(0.5, 0.9, 2.0).unwrap();
        assert!(matches!(fam.invert(0.95), Err(ModelError::InverseDomain { .. })));
        assert!(matches!(fam.invert(0.90), Err(ModelError::InverseDomain { .. })));
    }

    #[test]
    fn bundle_golden_m1_agent_i() {
        // frozen from an independent evaluation of the closed forms
        let b = marginal_bundle(&m1().agent_i, 0.2).unwrap();
        assert!((b.v_bar - 2.8115322738886293).abs() < 1e-12);
        assert!((b.marginal_u - 3.7437691321107587).abs() < 1e-12);
        assert!((b.curvature_w - (-8.605572252971411)).abs() < 1e-11);
        assert!((b.delta - 0.7864467983878847).abs() < 1e-12);
        assert!((b.omega - 3.085085402772002).abs() < 1e-11);
        assert!(b.marginal_u > 0.0 && b.curvature_w < 0.0);
        assert!(b.omega > b.delta && b.delta > 0.0);
    }

    #[test]
    fn bundle_delta_decays_past_saturation() {
        let agent = m1().agent_i;
        let d1 = marginal_bundle(&agent, 1.0).unwrap().delta;
        let d10 = marginal_bundle(&agent, 10.0).unwrap().delta;
        assert!(d10 < d1);
    }

    #[test]
    fn bundle_vbar_is_aggregator_fixed_point() {
        let agent = m1().agent_i;
        let b = marginal_bundle(&agent, 0.2).unwrap();
        let reapplied = agent.utility.value(0.2) + agent.discount.value(0.2) * b.v_bar;
        assert!((reapplied - b.v_bar).abs() < 1e-12);
    }

    #[test]
    fn bundle_rejects_nonpositive_consumption() {
        assert!(marginal_bundle(&m1().agent_i, 0.0).is_err());
        assert!(marginal_bundle(&m1().agent_i, -0.5).is_err());
    }
}
