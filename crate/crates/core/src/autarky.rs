//! Single-agent benchmark: autarky steady states, their stability, the
//! autarky value function by Bellman iteration, and the consumption bound
//! that delimits an individual strategy space.

use serde::Serialize;
use thiserror::Error;

use crate::model::{marginal_bundle, Agent, MarginalBundle, ModelError, ModelSpec, TechnologyFamily};
use crate::numerics::{bisect, scan_brackets, GridFunction, NumericsError};

#[derive(Debug, Error)]
pub enum AutarkyError {
    #[error("no autarky equilibrium found on the scan interval")]
    NoEquilibrium,
    #[error("value iteration did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("no crossing for the consumption bound at k = {k}: value table too coarse")]
    NoCrossing { k: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A root of `alpha(f(k) - k) f'(k) = 1` with its stability diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct AutarkyEquilibrium {
    pub k_a: f64,
    pub c_a: f64,
    /// `eta = (alpha'/alpha)(f'-1) + f''/f'` at the steady state.
    pub eta: f64,
    pub stable: bool,
    pub bundle: MarginalBundle,
    pub residual: f64,
}

fn steady_state_gap(agent: &Agent, tech: &TechnologyFamily, k: f64) -> f64 {
    let c = tech.value(k) - k;
    agent.discount.value(c) * tech.d1(k) - 1.0
}

pub fn eta_at(agent: &Agent, tech: &TechnologyFamily, c: f64, k: f64) -> f64 {
    let alpha = agent.discount.value(c);
    let fp = tech.d1(k);
    agent.discount.d1(c) / alpha * (fp - 1.0) + tech.d2(k) / fp
}

/// All roots of the stationarity condition on `(1e-6 k_m, k_m)`, ascending.
pub fn solve_autarky(
    agent: &Agent,
    tech: &TechnologyFamily,
) -> Result<Vec<AutarkyEquilibrium>, AutarkyError> {
    let km = tech.max_sustainable_capital();
    let psi = |k: f64| steady_state_gap(agent, tech, k);
    let brackets = scan_brackets(psi, 1e-6 * km, km * (1.0 - 1e-12), 1000);
    if brackets.is_empty() {
        return Err(AutarkyError::NoEquilibrium);
    }
    let mut out = Vec::with_capacity(brackets.len());
    for b in brackets {
        let root = bisect(psi, b, 1e-12, 200)?;
        let k_a = root.root;
        let c_a = tech.value(k_a) - k_a;
        let bundle = marginal_bundle(agent, c_a)?;
        let eta = eta_at(agent, tech, c_a, k_a);
        out.push(AutarkyEquilibrium {
            k_a,
            c_a,
            eta,
            stable: eta < 0.0,
            bundle,
            residual: psi(k_a).abs(),
        });
    }
    Ok(out)
}

/// Both stability criteria at the steady state: the derivative condition
/// `eta < 0` and the slope comparison `|f''| > |(1/alpha)'|` of the two
/// curves as functions of k. At a root of the stationarity condition the two
/// are the same inequality after substituting `alpha f' = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityDiag {
    pub eta: f64,
    pub eta_negative: bool,
    /// `|f''(k)|`.
    pub slope_marginal_product: f64,
    /// `|(1/alpha(f(k)-k))'| = (alpha'/alpha^2)(f'-1)`.
    pub slope_inverse_discount: f64,
    pub slope_condition: bool,
    pub criteria_agree: bool,
}

pub fn autarky_stability(
    eq: &AutarkyEquilibrium,
    agent: &Agent,
    tech: &TechnologyFamily,
) -> StabilityDiag {
    let (c, k) = (eq.c_a, eq.k_a);
    let eta = eta_at(agent, tech, c, k);
    let alpha = agent.discount.value(c);
    let fp = tech.d1(k);
    let lhs = tech.d2(k).abs();
    let rhs = agent.discount.d1(c) / (alpha * alpha) * (fp - 1.0);
    let slope_condition = lhs > rhs;
    StabilityDiag {
        eta,
        eta_negative: eta < 0.0,
        slope_marginal_product: lhs,
        slope_inverse_discount: rhs,
        slope_condition,
        criteria_agree: (eta < 0.0) == slope_condition,
    }
}

/// The two sides of the off-steady-state slope comparison with the
/// stationarity substitution undone: `eta < 0` iff
/// `|f''| > (alpha'/alpha)(f'-1) f'` at any admissible k. Used by the
/// property tests; at a steady state the right side equals
/// `|(1/alpha)'|` exactly.
pub fn stability_criteria_at(agent: &Agent, tech: &TechnologyFamily, k: f64) -> (bool, bool) {
    let c = tech.value(k) - k;
    let eta = eta_at(agent, tech, c, k);
    let alpha = agent.discount.value(c);
    let fp = tech.d1(k);
    let rhs = agent.discount.d1(c) / alpha * (fp - 1.0) * fp;
    (eta < 0.0, tech.d2(k).abs() > rhs)
}

/// Autarky value function and consumption policy on a uniform capital grid.
#[derive(Debug, Clone, Serialize)]
pub struct ValueTable {
    pub values: GridFunction,
    pub policy: GridFunction,
    pub residual: f64,
    pub sweeps: usize,
}

/// Which argument `f'` takes in the envelope formula. `Derived` is the form
/// obtained by differentiating the Bellman equation; `Printed` evaluates the
/// marginal product at next-period capital instead (kept for comparison, see
/// the module tests).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeForm {
    Derived,
    Printed,
}

impl ValueTable {
    pub fn value(&self, k: f64) -> f64 {
        self.values.evaluate(k)
    }

    pub fn consumption(&self, k: f64) -> f64 {
        self.policy.evaluate(k)
    }

    /// Envelope derivative `v'(k) = [u'(c) + alpha'(c) v(f(k)-c)] f'(arg)`
    /// with `c` the tabulated policy at `k`.
    pub fn envelope_vprime(
        &self,
        agent: &Agent,
        tech: &TechnologyFamily,
        k: f64,
        form: EnvelopeForm,
    ) -> f64 {
        let k = k.max(1e-12);
        let c = self.consumption(k).max(1e-300);
        let k_next = (tech.value(k) - c).max(0.0);
        let inner = agent.utility.d1(c) + agent.discount.d1(c) * self.value(k_next);
        let arg = match form {
            EnvelopeForm::Derived => k,
            EnvelopeForm::Printed => k_next.max(1e-12),
        };
        inner * tech.d1(arg)
    }
}

const CONSUMPTION_SEARCH: usize = 500;
const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn bellman_best(agent: &Agent, values: &GridFunction, resource: f64) -> (f64, f64) {
    if resource <= 0.0 {
        // no output: consumption is zero and u(0) = 0
        return (agent.discount.value(0.0) * values.evaluate(0.0), 0.0);
    }
    let reward = |c: f64| {
        let c = c.max(0.0);
        agent.utility.value(c) + agent.discount.value(c) * values.evaluate(resource - c)
    };
    let step = resource / (CONSUMPTION_SEARCH - 1) as f64;
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = 0usize;
    for idx in 0..CONSUMPTION_SEARCH {
        let v = reward(step * idx as f64);
        if v > best {
            best = v;
            best_idx = idx;
        }
    }
    // one golden-section refinement inside the winning cell's neighborhood
    let mut lo = step * best_idx.saturating_sub(1) as f64;
    let mut hi = (step * (best_idx + 1) as f64).min(resource);
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = reward(x1);
    let mut f2 = reward(x2);
    for _ in 0..40 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = reward(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = reward(x1);
        }
    }
    let c = 0.5 * (lo + hi);
    (reward(c).max(best), if reward(c) >= best { c } else { step * best_idx as f64 })
}

/// One Bellman sweep; returns the updated table and the sup-norm change.
pub fn bellman_sweep(
    agent: &Agent,
    tech: &TechnologyFamily,
    values: &GridFunction,
) -> (GridFunction, GridFunction, f64) {
    let n = values.len();
    let mut new_v = values.clone();
    let mut policy = values.clone();
    let mut change: f64 = 0.0;
    for i in 0..n {
        let k = values.node(i);
        let (v, c) = if i == 0 {
            (0.0, 0.0)
        } else {
            bellman_best(agent, values, tech.value(k))
        };
        change = change.max((v - values.values()[i]).abs());
        new_v.values_mut()[i] = v;
        policy.values_mut()[i] = c;
    }
    (new_v, policy, change)
}

/// Value iteration on `[0, k_m]` until the sup-change drops below `tol`.
/// The aggregator contracts with modulus at most `sup alpha`, which bounds
/// the sweep count.
pub fn value_iterate(
    agent: &Agent,
    tech: &TechnologyFamily,
    n_grid: usize,
    tol: f64,
) -> Result<ValueTable, AutarkyError> {
    assert!(n_grid >= 100, "value iteration needs at least 100 nodes");
    assert!(tol > 0.0);
    let km = tech.max_sustainable_capital();
    let mut values = GridFunction::constant(0.0, km, n_grid, 0.0);
    let max_sweeps = (tol.ln() / agent.discount.alpha_bar.ln()).ceil() as usize + 100;
    for sweep in 1..=max_sweeps {
        let (new_v, policy, change) = bellman_sweep(agent, tech, &values);
        values = new_v;
        if change < tol {
            return Ok(ValueTable { values, policy, residual: change, sweeps: sweep });
        }
    }
    Err(AutarkyError::NoConvergence(max_sweeps))
}

/// Consumption bound `d` solving
/// `u'(d) + alpha'(d) v(R - d) = alpha(d) v'(R - d)` for a resource level
/// `R`. The left side falls and the right side rises in `d`, so the crossing
/// is unique when the table resolves it.
pub fn strategy_bound_with_resource(
    agent: &Agent,
    tech: &TechnologyFamily,
    vtab: &ValueTable,
    resource: f64,
) -> Result<f64, AutarkyError> {
    let gap = |d: f64| {
        let x = resource - d;
        let lhs = agent.utility.d1(d) + agent.discount.d1(d) * vtab.value(x);
        let rhs =
            agent.discount.value(d) * vtab.envelope_vprime(agent, tech, x, EnvelopeForm::Derived);
        lhs - rhs
    };
    let lo = 1e-9 * resource;
    let hi = resource * (1.0 - 1e-9);
    let brackets = scan_brackets(gap, lo, hi, 2000);
    let first = brackets.first().ok_or(AutarkyError::NoCrossing { k: resource })?;
    Ok(bisect(gap, *first, 1e-12, 200)?.root)
}

pub fn strategy_bound(
    agent: &Agent,
    tech: &TechnologyFamily,
    vtab: &ValueTable,
    k: f64,
) -> Result<f64, AutarkyError> {
    assert!(k > 0.0 && k <= tech.max_sustainable_capital() * (1.0 + 1e-12));
    strategy_bound_with_resource(agent, tech, vtab, tech.value(k))
}

/// Orderings of the two agents' autarky equilibria under dominance.
#[derive(Debug, Clone, Serialize)]
pub struct OrderingReport {
    pub k_a_i: f64,
    pub k_a_j: f64,
    pub c_a_i: f64,
    pub c_a_j: f64,
    pub capital_ordered: bool,
    pub consumption_ordered: bool,
}

/// Checks `0 < k_a^j <= k_a^i` and `0 < c_a^j <= c_a^i` using the smallest
/// root of each agent.
pub fn lemma1_check(model: &ModelSpec) -> Result<OrderingReport, AutarkyError> {
    let eq_i = solve_autarky(&model.agent_i, &model.technology)?;
    let eq_j = solve_autarky(&model.agent_j, &model.technology)?;
    let (i, j) = (&eq_i[0], &eq_j[0]);
    Ok(OrderingReport {
        k_a_i: i.k_a,
        k_a_j: j.k_a,
        c_a_i: i.c_a,
        c_a_j: j.c_a,
        capital_ordered: 0.0 < j.k_a && j.k_a <= i.k_a,
        consumption_ordered: 0.0 < j.c_a && j.c_a <= i.c_a,
    })
}
