//! Markovian equilibrium: strategic effect derivatives, the deflated
//! stationary point, the (a, b) stability classifier, the policy operator
//! `Th(k) = H[k, h(h(k))]` on a Lipschitz grid class, and the comparison
//! against the precommitment benchmark.

use serde::Serialize;
use thiserror::Error;

use crate::model::{marginal_bundle, Agent, MarginalBundle, ModelError, ModelSpec, TechnologyFamily};
use crate::numerics::{bisect, Bracket, GridFunction, NumericsError};
use crate::openloop::{admissible_bracket, OpenLoopError, OpenLoopSteadyState};

#[derive(Debug, Error)]
pub enum MarkovError {
    #[error("inner deflator fixed point did not converge at k = {k}")]
    InnerNoConvergence { k: f64 },
    #[error("no Markov stationary point in the scanned band [{lo}, {hi}]")]
    NoEquilibriumInBracket { lo: f64, hi: f64 },
    #[error("effect system singular: Delta1 = {0}")]
    SingularSystem(f64),
    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),
    #[error("degenerate classification boundary: {0}")]
    DegenerateClassification(String),
    #[error("policy operator pre-condition fails: governing root {0} outside (-1, 0)")]
    GoverningRootUnstable(f64),
    #[error("policy operator bracket failure at x = {x}: {why}")]
    BracketFailure { x: f64, why: String },
    #[error("policy operator did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    OpenLoop(#[from] OpenLoopError),
}

/// First-order strategic responses and the deflators they induce.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FirstOrderEffects {
    pub g1_i: f64,
    pub g1_j: f64,
    pub xi_ij: f64,
    pub xi_ji: f64,
    /// `a = f' - G1_i - G1_j > 0`.
    pub a: f64,
    pub delta1: f64,
    pub system_residual: f64,
    /// Residual of `(f' - G1_j) = xi_ij f'` and its twin.
    pub xi_identity_residual: f64,
}

pub fn first_order_effects(
    bundle_i: &MarginalBundle,
    bundle_j: &MarginalBundle,
    fprime: f64,
) -> Result<FirstOrderEffects, MarkovError> {
    let (di, oi) = (bundle_i.delta, bundle_i.omega);
    let (dj, oj) = (bundle_j.delta, bundle_j.omega);
    let delta1 = oi * oj + di * oj + oi * dj;
    if delta1.abs() <= 1e-14 {
        return Err(MarkovError::SingularSystem(delta1));
    }
    let g1_i = di * oj * fprime / delta1;
    let g1_j = oi * dj * fprime / delta1;
    let a = oi * oj * fprime / delta1;

    // residual of [d_i+w_i, d_i; d_j, d_j+w_j][G1] = [d_i f'; d_j f']
    let r1 = (di + oi) * g1_i + di * g1_j - di * fprime;
    let r2 = dj * g1_i + (dj + oj) * g1_j - dj * fprime;
    let scale = f64::max(1.0, fprime);
    let system_residual = f64::max(r1.abs(), r2.abs()) / scale;

    let xi_ij = (oi * oj + di * oj) / delta1;
    let xi_ji = (oi * oj + oi * dj) / delta1;
    let id1 = ((fprime - g1_j) - xi_ij * fprime).abs();
    let id2 = ((fprime - g1_i) - xi_ji * fprime).abs();
    let xi_identity_residual = f64::max(id1, id2) / scale;

    Ok(FirstOrderEffects { g1_i, g1_j, xi_ij, xi_ji, a, delta1, system_residual, xi_identity_residual })
}

/// Full first/second/third-order effect bundle at a candidate stationary
/// point. The policy second derivatives `g11_*` are inputs (zero unless
/// configured otherwise).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EffectDerivatives {
    pub first: FirstOrderEffects,
    pub nu_ij: f64,
    pub nu_ji: f64,
    pub g2_i: f64,
    pub g2_j: f64,
    pub g12_i: f64,
    pub g12_j: f64,
    pub g11_i: f64,
    pub g11_j: f64,
    /// `b = G2_i + G2_j`.
    pub b: f64,
    pub g2_system_residual: f64,
}

pub fn second_third_order_effects(
    bundle_i: &MarginalBundle,
    bundle_j: &MarginalBundle,
    fprime: f64,
    fsecond: f64,
    g11_i: f64,
    g11_j: f64,
    first: FirstOrderEffects,
) -> Result<EffectDerivatives, MarkovError> {
    let (di, oi) = (bundle_i.delta, bundle_i.omega);
    let (dj, oj) = (bundle_j.delta, bundle_j.omega);
    let d1 = first.delta1;
    if (fprime - first.g1_j).abs() < 1e-14 {
        return Err(MarkovError::DegenerateDenominator("f' - G1_j".into()));
    }
    if (fprime - first.g1_i).abs() < 1e-14 {
        return Err(MarkovError::DegenerateDenominator("f' - G1_i".into()));
    }
    let nu_ij = di * (fprime - 1.0) + (fsecond - g11_j) / (fprime - first.g1_j);
    let nu_ji = dj * (fprime - 1.0) + (fsecond - g11_i) / (fprime - first.g1_i);

    let g2_i = (di * oi * oj * oj + di * dj * (oi * oj - di * oj + oi * dj)) * fprime / (d1 * d1)
        - (di * oj + (dj + oj) * nu_ij - di * nu_ji) / d1;
    let g2_j = (oi * oi * dj * oj + di * dj * (oi * oj + di * oj - oi * dj)) * fprime / (d1 * d1)
        - (oi * dj - dj * nu_ij + (di + oi) * nu_ji) / d1;

    // residual of [d_i+w_i, d_i; d_j, d_j+w_j][G2] = [w_i, d_i; d_j, w_j][G1] - [d_i+nu_ij; d_j+nu_ji]
    let lhs1 = (di + oi) * g2_i + di * g2_j;
    let lhs2 = dj * g2_i + (dj + oj) * g2_j;
    let rhs1 = oi * first.g1_i + di * first.g1_j - (di + nu_ij);
    let rhs2 = dj * first.g1_i + oj * first.g1_j - (dj + nu_ji);
    let scale = f64::max(1.0, f64::max(rhs1.abs(), rhs2.abs()));
    let g2_system_residual = f64::max((lhs1 - rhs1).abs(), (lhs2 - rhs2).abs()) / scale;

    let g12_i = -(dj * g2_i + oj * g2_j) * (oi * oj + di * oj) * fprime / d1;
    let g12_j = -(oi * g2_i + di * g2_j) * (oi * oj + oi * dj) * fprime / d1;

    Ok(EffectDerivatives {
        first,
        nu_ij,
        nu_ji,
        g2_i,
        g2_j,
        g12_i,
        g12_j,
        g11_i,
        g11_j,
        b: g2_i + g2_j,
        g2_system_residual,
    })
}

/// Stationary Markov equilibrium: deflated stationarity conditions plus the
/// resource constraint.
#[derive(Debug, Clone, Serialize)]
pub struct MarkovSteadyState {
    pub k_star: f64,
    pub c_i: f64,
    pub c_j: f64,
    pub bundle_i: MarginalBundle,
    pub bundle_j: MarginalBundle,
    pub effects: EffectDerivatives,
    pub fprime: f64,
    pub fsecond: f64,
    pub residual_i: f64,
    pub residual_j: f64,
    pub resource_residual: f64,
}

/// Whether the stationary conditions carry the strategic deflators or the
/// unit deflators that collapse the system to the precommitment one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deflators {
    Strategic,
    Unity,
}

const INNER_DAMPING: f64 = 0.5;
const INNER_TOL: f64 = 1e-12;
const INNER_MAX: usize = 500;
const SCAN_NODES: usize = 400;

struct InnerSolver<'a> {
    model: &'a ModelSpec,
    deflators: Deflators,
}

impl<'a> InnerSolver<'a> {
    fn xi(&self, c_i: f64, c_j: f64) -> Result<(f64, f64), ModelError> {
        match self.deflators {
            Deflators::Unity => Ok((1.0, 1.0)),
            Deflators::Strategic => {
                let bi = marginal_bundle(&self.model.agent_i, c_i)?;
                let bj = marginal_bundle(&self.model.agent_j, c_j)?;
                let fx = first_order_effects(&bi, &bj, 1.0)
                    .map_err(|_| ModelError::Domain("singular deflator system".into()))?;
                Ok((fx.xi_ij, fx.xi_ji))
            }
        }
    }

    /// Start from the precommitment consumptions at this capital, clamped
    /// into the invertible range where the bracket extends past it.
    fn start(&self, fprime: f64) -> Result<(f64, f64), ModelError> {
        let clamped = |agent: &Agent| -> Result<f64, ModelError> {
            let d = &agent.discount;
            let v = (1.0 / fprime).clamp(d.alpha0 + 1e-9, d.alpha_bar - 1e-9);
            d.invert(v)
        };
        Ok((clamped(&self.model.agent_i)?, clamped(&self.model.agent_j)?))
    }

    /// Damped fixed point of `c_i = a_i^-1(1/(xi_ji f'))`,
    /// `c_j = a_j^-1(1/(xi_ij f'))` with the deflators refreshed from the
    /// current consumption pair.
    fn solve(&self, k: f64, start: (f64, f64)) -> Result<(f64, f64), MarkovError> {
        let fprime = self.model.technology.d1(k);
        let (mut c_i, mut c_j) = start;
        for _ in 0..INNER_MAX {
            let (xi_ij, xi_ji) = self.xi(c_i, c_j)?;
            let t_i = self.model.agent_i.discount.invert(1.0 / (xi_ji * fprime))?;
            let t_j = self.model.agent_j.discount.invert(1.0 / (xi_ij * fprime))?;
            let n_i = (1.0 - INNER_DAMPING) * c_i + INNER_DAMPING * t_i;
            let n_j = (1.0 - INNER_DAMPING) * c_j + INNER_DAMPING * t_j;
            let change = f64::max((n_i - c_i).abs(), (n_j - c_j).abs());
            c_i = n_i;
            c_j = n_j;
            if change < INNER_TOL {
                // undamped polish to squeeze the stationarity residual
                for _ in 0..100 {
                    let (xi_ij, xi_ji) = self.xi(c_i, c_j)?;
                    let t_i = self.model.agent_i.discount.invert(1.0 / (xi_ji * fprime))?;
                    let t_j = self.model.agent_j.discount.invert(1.0 / (xi_ij * fprime))?;
                    let change = f64::max((t_i - c_i).abs(), (t_j - c_j).abs());
                    c_i = t_i;
                    c_j = t_j;
                    if change < 1e-15 {
                        break;
                    }
                }
                return Ok((c_i, c_j));
            }
        }
        Err(MarkovError::InnerNoConvergence { k })
    }
}

pub fn solve_markov(model: &ModelSpec, g11: (f64, f64)) -> Result<MarkovSteadyState, MarkovError> {
    solve_markov_with(model, g11, Deflators::Strategic)
}

/// Full solve with a deflator override. `Deflators::Unity` reproduces the
/// precommitment stationary point.
pub fn solve_markov_with(
    model: &ModelSpec,
    g11: (f64, f64),
    deflators: Deflators,
) -> Result<MarkovSteadyState, MarkovError> {
    let tech = &model.technology;
    let solver = InnerSolver { model, deflators };
    let (ol_lo, ol_hi) = admissible_bracket(model)?;
    let scan_lo = 0.05 * ol_lo;
    let scan_hi = ol_hi;
    let step = (scan_hi - scan_lo) / (SCAN_NODES - 1) as f64;

    // ascending pass: warm starts where a neighbor solved, fresh otherwise
    let mut table: Vec<(f64, (f64, f64))> = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for n in 0..SCAN_NODES {
        let k = scan_lo + step * n as f64;
        let attempt = match prev {
            Some(warm) => solver.solve(k, warm).or_else(|_| {
                solver.start(tech.d1(k)).map_err(MarkovError::from).and_then(|s| solver.solve(k, s))
            }),
            None => solver
                .start(tech.d1(k))
                .map_err(MarkovError::from)
                .and_then(|s| solver.solve(k, s)),
        };
        match attempt {
            Ok(sol) => {
                table.push((k, sol));
                prev = Some(sol);
            }
            Err(_) => {
                prev = None;
            }
        }
    }
    if table.is_empty() {
        return Err(MarkovError::NoEquilibriumInBracket { lo: scan_lo, hi: scan_hi });
    }

    // descending extension below the lowest solved node: the deflated branch
    // can continue past the undisturbed inverse-domain bound
    let (mut k_edge, mut warm) = (table[0].0, table[0].1);
    loop {
        let k = k_edge - step;
        if k <= step * 1e-3 {
            break;
        }
        match solver.solve(k, warm) {
            Ok(sol) => {
                table.insert(0, (k, sol));
                k_edge = k;
                warm = sol;
            }
            Err(_) => break,
        }
    }

    let resource = |k: f64, sol: (f64, f64)| tech.value(k) - k - sol.0 - sol.1;
    let mut bracket: Option<(usize, usize)> = None;
    for w in 0..table.len() - 1 {
        let r0 = resource(table[w].0, table[w].1);
        let r1 = resource(table[w + 1].0, table[w + 1].1);
        if r0 == 0.0 {
            bracket = Some((w, w));
            break;
        }
        if r0 * r1 < 0.0 {
            bracket = Some((w, w + 1));
            break;
        }
    }
    let (lo_idx, hi_idx) =
        bracket.ok_or(MarkovError::NoEquilibriumInBracket { lo: scan_lo, hi: scan_hi })?;

    // warm-started bisection on the resource gap
    let mut cache: Vec<(f64, (f64, f64))> = vec![table[lo_idx], table[hi_idx]];
    let mut eval = |k: f64| -> Result<f64, MarkovError> {
        let nearest = cache
            .iter()
            .min_by(|a, b| (a.0 - k).abs().partial_cmp(&(b.0 - k).abs()).unwrap())
            .map(|e| e.1)
            .unwrap();
        let sol = solver.solve(k, nearest)?;
        cache.push((k, sol));
        Ok(resource(k, sol))
    };
    let (lo_k, hi_k) = (table[lo_idx].0, table[hi_idx].0);
    let root = if lo_idx == hi_idx {
        lo_k
    } else {
        let b = Bracket::new(lo_k, hi_k, eval(lo_k)?, eval(hi_k)?)?;
        let mut lo = b.lo;
        let mut hi = b.hi;
        let mut f_lo = b.f_lo;
        let tol = 1e-13 * f64::max(1.0, hi.abs());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let f_mid = eval(mid)?;
            if f_mid == 0.0 || hi - lo <= tol {
                break;
            }
            if f_mid.signum() == f_lo.signum() {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let nearest = cache
        .iter()
        .min_by(|a, b| (a.0 - root).abs().partial_cmp(&(b.0 - root).abs()).unwrap())
        .map(|e| e.1)
        .unwrap();
    let (c_i, c_j) = solver.solve(root, nearest)?;
    let fprime = tech.d1(root);
    let fsecond = tech.d2(root);
    let bundle_i = marginal_bundle(&model.agent_i, c_i)?;
    let bundle_j = marginal_bundle(&model.agent_j, c_j)?;
    let first = match deflators {
        Deflators::Strategic => first_order_effects(&bundle_i, &bundle_j, fprime)?,
        Deflators::Unity => FirstOrderEffects {
            g1_i: 0.0,
            g1_j: 0.0,
            xi_ij: 1.0,
            xi_ji: 1.0,
            a: fprime,
            delta1: bundle_i.omega * bundle_j.omega
                + bundle_i.delta * bundle_j.omega
                + bundle_i.omega * bundle_j.delta,
            system_residual: 0.0,
            xi_identity_residual: 0.0,
        },
    };
    let effects =
        second_third_order_effects(&bundle_i, &bundle_j, fprime, fsecond, g11.0, g11.1, first)?;
    let (xi_ij, xi_ji) = (first.xi_ij, first.xi_ji);
    Ok(MarkovSteadyState {
        k_star: root,
        c_i,
        c_j,
        residual_i: (model.agent_i.discount.value(c_i) * xi_ji * fprime - 1.0).abs(),
        residual_j: (model.agent_j.discount.value(c_j) * xi_ij * fprime - 1.0).abs(),
        resource_residual: (tech.value(root) - root - c_i - c_j).abs(),
        bundle_i,
        bundle_j,
        effects,
        fprime,
        fsecond,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StabilityLabel {
    Stable,
    Saddle,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModulusOrder {
    /// The smaller (sorted) root has the larger modulus.
    FirstLarger,
    /// The larger (sorted) root has the larger modulus.
    SecondLarger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MonotonicityGroup {
    I,
    II,
    III,
}

/// Second-order stability classification from `(a, b)`.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityClass {
    pub case_id: u8,
    /// `lambda1 = -a` exactly.
    pub lambda1: f64,
    /// `lambda2 = a / (1 + b)` exactly.
    pub lambda2: f64,
    /// The same pair sorted ascending, which is the labeling the case table
    /// uses.
    pub sorted: [f64; 2],
    pub label: StabilityLabel,
    pub modulus_order: ModulusOrder,
    pub group: MonotonicityGroup,
    pub h1: f64,
    pub h2: f64,
    /// Polynomial coefficients reconstructed from (a, b):
    /// `P(x) = psi1 + psi2 x + psi3 x^2`.
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
    pub p_at_minus_one: f64,
    pub p_at_zero: f64,
    pub p_at_one: f64,
    /// Vertex abscissa of the parabola.
    pub lambda_v: f64,
}

impl StabilityClass {
    pub fn eval_p(&self, x: f64) -> f64 {
        self.psi1 + self.psi2 * x + self.psi3 * x * x
    }
}

const CLASSIFY_TOL: f64 = 1e-12;

/// H partials from the eigenvalue pair: `H1 = l1 l2/(l1+l2)`,
/// `H2 = 1/(l1+l2)`, and the monotonicity group they imply.
pub fn h_partials_from(
    lambda1: f64,
    lambda2: f64,
) -> Result<(f64, f64, MonotonicityGroup), MarkovError> {
    let sum = lambda1 + lambda2;
    if sum.abs() <= CLASSIFY_TOL {
        return Err(MarkovError::DegenerateClassification("lambda1 + lambda2 = 0".into()));
    }
    let h1 = lambda1 * lambda2 / sum;
    let h2 = 1.0 / sum;
    let group = if h1 > 0.0 && h2 < 0.0 {
        MonotonicityGroup::I
    } else if h1 < 0.0 && h2 > 0.0 {
        MonotonicityGroup::II
    } else if h1 < 0.0 && h2 < 0.0 {
        MonotonicityGroup::III
    } else {
        return Err(MarkovError::DegenerateClassification(format!(
            "H partial signs outside the table: H1 = {h1}, H2 = {h2}"
        )));
    };
    Ok((h1, h2, group))
}

pub fn h_partials(cls: &StabilityClass) -> Result<(f64, f64, MonotonicityGroup), MarkovError> {
    h_partials_from(cls.lambda1, cls.lambda2)
}

pub fn classify_stability(a: f64, b: f64) -> Result<StabilityClass, MarkovError> {
    if !(a > 0.0) {
        return Err(MarkovError::DegenerateClassification(format!("a must be positive, got {a}")));
    }
    let near = |x: f64, target: f64, name: &str| -> Result<(), MarkovError> {
        if (x - target).abs() <= CLASSIFY_TOL {
            Err(MarkovError::DegenerateClassification(name.to_string()))
        } else {
            Ok(())
        }
    };
    near(b, -1.0, "b = -1 (lambda2 undefined)")?;
    near(a - b, 1.0, "a - b = 1 (lambda2 on the unit circle)")?;
    near(a + b, -1.0, "a + b = -1 (lambda2 on the unit circle)")?;
    near(a, 1.0, "a = 1 (lambda1 on the unit circle)")?;
    near(b, 0.0, "b = 0 (equal moduli)")?;
    near(b, 2.0, "b = 2 (excluded boundary)")?;
    near(b, -2.0, "b = -2 (repeated root)")?;

    let lambda1 = -a;
    let lambda2 = a / (1.0 + b);
    let sorted = if lambda1 <= lambda2 { [lambda1, lambda2] } else { [lambda2, lambda1] };

    let case_id: u8 = if b > 0.0 {
        if a < 1.0 {
            1
        } else if a - b < 1.0 {
            2
        } else {
            3
        }
    } else if b > -1.0 {
        if a > 1.0 {
            6
        } else if a - b < 1.0 {
            4
        } else {
            5
        }
    } else {
        // b < -1
        if a < 1.0 {
            if a + b < -1.0 {
                7
            } else {
                8
            }
        } else if a + b > -1.0 {
            9
        } else {
            // region not listed in the case table; its eigenvalue pattern
            // (one root inside the unit circle, one below -1) is the saddle
            // pattern of case 8
            8
        }
    };
    let label = match case_id {
        1 | 4 | 7 => StabilityLabel::Stable,
        2 | 5 | 8 => StabilityLabel::Saddle,
        _ => StabilityLabel::Unstable,
    };
    let modulus_order = if sorted[0].abs() > sorted[1].abs() {
        ModulusOrder::FirstLarger
    } else {
        ModulusOrder::SecondLarger
    };
    let (h1, h2, group) = h_partials_from(lambda1, lambda2)?;

    let (psi1, psi2, psi3) = (a * a, -a * b, -(1.0 + b));
    Ok(StabilityClass {
        case_id,
        lambda1,
        lambda2,
        sorted,
        label,
        modulus_order,
        group,
        h1,
        h2,
        psi1,
        psi2,
        psi3,
        p_at_minus_one: (a - 1.0) * (a + 1.0 + b),
        p_at_zero: a * a,
        p_at_one: (a + 1.0) * (a - 1.0 - b),
        lambda_v: -a * b / (2.0 * (1.0 + b)),
    })
}

/// Lower admissible Lipschitz bound: the negative root of `H1 + H2 l^2 = 0`
/// is `-sqrt(|l1 l2|)`, floored at -1.
pub fn lambda_lower(lambda1: f64, lambda2: f64) -> f64 {
    f64::max(-1.0, -(lambda1 * lambda2).abs().sqrt())
}

/// What drives the two-argument map H inside the policy operator.
pub enum OperatorDrive<'a> {
    /// H obtained by root-solving the reduced stationarity map with the
    /// strategy functions replaced by their first-order expansions around
    /// the stationary point.
    Model { steady_state: &'a MarkovSteadyState, technology: &'a TechnologyFamily },
    /// Exact linear H built from a chosen eigenvalue pair.
    Synthetic { k_star: f64, lambda1: f64, lambda2: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct OperatorConfig {
    /// Half-width of the interval around the stationary point; defaults to
    /// 0.05 k*.
    pub eps: Option<f64>,
    pub n_grid: usize,
    /// Lipschitz target; defaults to the midpoint of (lambda_lower, lambda1).
    pub lambda_lip: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation weight on the operator update; `None` picks 1 when the
    /// plain iteration is locally contractive at the slope level and the
    /// stabilizing weight otherwise.
    pub relaxation: Option<f64>,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self { eps: None, n_grid: 201, lambda_lip: None, tol: 1e-10, max_iter: 10_000, relaxation: None }
    }
}

/// Converged policy iterate of `Th(k) = H[k, h(h(k))]`.
#[derive(Debug, Clone, Serialize)]
pub struct PolicyFixedPoint {
    pub h: GridFunction,
    pub k_star: f64,
    pub iterations: usize,
    pub final_sup_change: f64,
    pub slope_at_kstar: f64,
    pub lipschitz: f64,
    pub lambda_lower: f64,
    pub lambda_lip: f64,
    pub relaxation: f64,
    pub lipschitz_violation: bool,
}

enum HMap<'a> {
    Linear { k_star: f64, h1: f64, h2: f64 },
    Reduced { ss: &'a MarkovSteadyState, tech: &'a TechnologyFamily },
}

impl HMap<'_> {
    fn eval(&self, x: f64, z: f64) -> Result<f64, MarkovError> {
        match self {
            HMap::Linear { k_star, h1, h2 } => Ok(k_star + h1 * (x - k_star) + h2 * (z - k_star)),
            HMap::Reduced { ss, tech } => reduced_h(ss, tech, x, z),
        }
    }
}

/// Solves the reduced stationarity map for the middle state: with
/// `G(x, y) ~ c* + G1 (x - k*) + G2 (y - k*)` (aggregated over agents),
/// the inner state is `w = f(x) - ctot(x, y)` and the defining equation is
/// `f(w) - ctot(w, z) - z = 0` in y.
fn reduced_h(ss: &MarkovSteadyState, tech: &TechnologyFamily, x: f64, z: f64) -> Result<f64, MarkovError> {
    let k = ss.k_star;
    let c_total = ss.c_i + ss.c_j;
    let g1 = ss.effects.first.g1_i + ss.effects.first.g1_j;
    let g2 = ss.effects.g2_i + ss.effects.g2_j;
    let psi = |y: f64| -> f64 {
        let w = tech.value(x) - c_total - g1 * (x - k) - g2 * (y - k);
        if w <= 0.0 {
            return f64::NAN;
        }
        tech.value(w) - c_total - g1 * (w - k) - g2 * (z - k) - z
    };
    // expanding bracket around k*
    let mut radius = 0.5 * (tech.value(x) - x).abs().max(1e-3 * k.max(1.0));
    for _ in 0..60 {
        let (lo, hi) = (k - radius, k + radius);
        let (f_lo, f_hi) = (psi(lo), psi(hi));
        if f_lo.is_finite() && f_hi.is_finite() && f_lo.signum() != f_hi.signum() {
            let b = Bracket::new(lo, hi, f_lo, f_hi)?;
            let tol = 1e-14 * f64::max(1.0, k.abs());
            return Ok(bisect(&psi, b, tol, 200)?.root);
        }
        radius *= if f_lo.is_finite() && f_hi.is_finite() { 2.0 } else { 0.5 };
    }
    Err(MarkovError::BracketFailure { x, why: "no sign change for the reduced map".into() })
}

pub fn operator_fixed_point(
    drive: OperatorDrive<'_>,
    config: OperatorConfig,
) -> Result<PolicyFixedPoint, MarkovError> {
    let (k_star, l1, l2) = match &drive {
        OperatorDrive::Synthetic { k_star, lambda1, lambda2 } => (*k_star, *lambda1, *lambda2),
        OperatorDrive::Model { steady_state, .. } => {
            let a = steady_state.effects.first.a;
            let b = steady_state.effects.b;
            (steady_state.k_star, -a, a / (1.0 + b))
        }
    };
    if !(l1 > -1.0 && l1 < 0.0) {
        return Err(MarkovError::GoverningRootUnstable(l1));
    }
    let lam_lower = lambda_lower(l1, l2);
    let lambda_lip = config.lambda_lip.unwrap_or(0.5 * (lam_lower + l1));
    let eps = config.eps.unwrap_or(0.05 * k_star);
    let n = config.n_grid;
    assert!(n >= 3 && eps > 0.0);

    let sum = l1 + l2;
    let hmap = match &drive {
        OperatorDrive::Synthetic { .. } => {
            if sum.abs() <= CLASSIFY_TOL {
                return Err(MarkovError::DegenerateClassification("lambda1 + lambda2 = 0".into()));
            }
            HMap::Linear { k_star, h1: l1 * l2 / sum, h2: 1.0 / sum }
        }
        OperatorDrive::Model { steady_state, technology } => {
            HMap::Reduced { ss: steady_state, tech: technology }
        }
    };

    // slope-map derivative at the target root decides whether plain
    // iteration contracts; otherwise relax
    let relaxation = config.relaxation.unwrap_or_else(|| {
        let g = 2.0 * l1 / sum;
        if g.abs() < 0.9 {
            1.0
        } else {
            (1.0 / (1.0 - g)).clamp(1e-4, 1.0)
        }
    });

    let mut h = GridFunction::constant(k_star - eps, k_star + eps, n, k_star);
    let mut iterations = 0usize;
    let mut final_change = f64::INFINITY;
    while iterations < config.max_iter {
        iterations += 1;
        let mut next = h.clone();
        let mut change: f64 = 0.0;
        for idx in 0..n {
            let x = h.node(idx);
            let z = h.compose_self(x);
            let t = hmap.eval(x, z)?;
            let updated = (1.0 - relaxation) * h.values()[idx] + relaxation * t;
            change = change.max((updated - h.values()[idx]).abs());
            next.values_mut()[idx] = updated;
        }
        h = next;
        final_change = change;
        if change < config.tol {
            break;
        }
    }
    if final_change >= config.tol {
        return Err(MarkovError::NoConvergence(config.max_iter));
    }

    let slope = h.slope_at(k_star);
    let lipschitz = h.lipschitz_constant();
    Ok(PolicyFixedPoint {
        lipschitz_violation: lipschitz > lambda_lip.abs() + 1e-6,
        slope_at_kstar: slope,
        lipschitz,
        lambda_lower: lam_lower,
        lambda_lip,
        relaxation,
        iterations,
        final_sup_change: final_change,
        k_star,
        h,
    })
}

/// Local stability diagnostics at the Markov stationary point.
#[derive(Debug, Clone, Serialize)]
pub struct MarkovStabilityReport {
    /// Left side of the aggregated stability condition.
    pub stability_lhs: f64,
    /// Per-agent stationarity derivative terms.
    pub condition_i: f64,
    pub condition_j: f64,
    /// `s'(k*) = f' - (G1_i + G1_j) - (G2_i + G2_j) = a - b`.
    pub s_prime: f64,
    pub s_increasing: bool,
    pub abs_s_prime_lt_one: bool,
}

pub fn markov_local_stability(ss: &MarkovSteadyState) -> MarkovStabilityReport {
    let e = &ss.effects;
    let (di, dj) = (ss.bundle_i.delta, ss.bundle_j.delta);
    let fp = ss.fprime;
    let fpp = ss.fsecond;
    let stability_lhs = di * dj * (fp - 1.0)
        + di * (fpp - e.g11_i - e.g12_i) / (fp - e.first.g1_i)
        + dj * (fpp - e.g11_j - e.g12_j) / (fp - e.first.g1_j);
    let condition_i = di * (e.first.g1_i + e.g2_i) + (fpp - e.g11_j - e.g12_j) / (fp - e.first.g1_j);
    let condition_j = dj * (e.first.g1_j + e.g2_j) + (fpp - e.g11_i - e.g12_i) / (fp - e.first.g1_i);
    let s_prime = e.first.a - e.b;
    MarkovStabilityReport {
        stability_lhs,
        condition_i,
        condition_j,
        s_prime,
        s_increasing: s_prime > 0.0,
        abs_s_prime_lt_one: s_prime.abs() < 1.0,
    }
}

/// Path of the policy iterate with linearized consumption readouts.
#[derive(Debug, Clone, Serialize)]
pub struct MarkovTrajectory {
    pub k: Vec<f64>,
    pub c_i: Vec<f64>,
    pub c_j: Vec<f64>,
    pub dev_k: Vec<f64>,
    /// True when the deviation flips sign every period over the tail half.
    pub oscillating: bool,
}

pub fn simulate_markov(
    fp: &PolicyFixedPoint,
    ss: &MarkovSteadyState,
    k0: f64,
    periods: usize,
) -> MarkovTrajectory {
    assert!(periods >= 1);
    let e = &ss.effects;
    let mut k = Vec::with_capacity(periods + 1);
    let mut dev = Vec::with_capacity(periods + 1);
    let mut c_i = Vec::with_capacity(periods);
    let mut c_j = Vec::with_capacity(periods);
    let mut cur = k0;
    for _ in 0..=periods {
        k.push(cur);
        dev.push(cur - ss.k_star);
        let next = fp.h.evaluate(cur);
        c_i.push(ss.c_i + e.first.g1_i * (cur - ss.k_star) + e.g2_i * (next - ss.k_star));
        c_j.push(ss.c_j + e.first.g1_j * (cur - ss.k_star) + e.g2_j * (next - ss.k_star));
        cur = next;
    }
    // sign flips over the tail, ignoring deviations at the numeric floor
    let floor = 64.0 * f64::EPSILON * f64::max(1.0, ss.k_star.abs());
    let tail = periods / 2;
    let mut checked = 0usize;
    let mut flips = 0usize;
    for t in tail..periods {
        if dev[t].abs() > floor && dev[t + 1].abs() > floor {
            checked += 1;
            if dev[t].signum() != dev[t + 1].signum() {
                flips += 1;
            }
        }
    }
    let oscillating = checked > 0 && flips == checked;
    MarkovTrajectory { k, c_i, c_j, dev_k: dev, oscillating }
}

/// Orderings between the Markov and precommitment stationary points.
#[derive(Debug, Clone, Serialize)]
pub struct MarkovComparisonReport {
    pub k_star_lt_k_bar: bool,
    pub xi_ordered: bool,
    /// Patient agent consumes more than under precommitment.
    pub c_i_shift_up: bool,
    /// Impatient agent consumes less than under precommitment.
    pub c_j_shift_down: bool,
    pub k_star: f64,
    pub k_bar: f64,
}

pub fn compare_openloop(mss: &MarkovSteadyState, ols: &OpenLoopSteadyState) -> MarkovComparisonReport {
    MarkovComparisonReport {
        k_star_lt_k_bar: mss.k_star < ols.k,
        xi_ordered: mss.effects.first.xi_ij < mss.effects.first.xi_ji,
        c_i_shift_up: mss.c_i >= ols.c_i,
        c_j_shift_down: mss.c_j <= ols.c_j,
        k_star: mss.k_star,
        k_bar: ols.k,
    }
}
