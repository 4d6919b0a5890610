//! Precommitment equilibrium: the stationary point, the policy-map partials
//! around it, regularity diagnostics, the Jacobian spectrum, stable-manifold
//! slopes, and linearized simulation.

use serde::Serialize;
use thiserror::Error;

use crate::autarky::{eta_at, solve_autarky, AutarkyError};
use crate::model::{marginal_bundle, MarginalBundle, ModelError, ModelSpec};
use crate::numerics::{bisect, scan_brackets, solve_cubic, CubicRoots, NumericsError};

#[derive(Debug, Error)]
pub enum OpenLoopError {
    #[error("no stationary point in the admissible bracket [{lo}, {hi}]")]
    NoEquilibriumInBracket { lo: f64, hi: f64 },
    #[error("admissible bracket is empty: lower bound {lo} >= upper bound {hi}")]
    EmptyBracket { lo: f64, hi: f64 },
    #[error("coefficient system is singular: Delta0 = {0}")]
    SingularSystem(f64),
    #[error("characteristic polynomial has complex roots (only {0} real)")]
    ComplexRootsPresent(usize),
    #[error("eigenvalue ordering 0 < l1 < 1 < l2 < l3 fails: {0:?}")]
    OrderingFailed(Vec<f64>),
    #[error("degenerate denominator in manifold formulas: {0}")]
    DegenerateDenominator(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Autarky(#[from] AutarkyError),
}

/// Stationary point of the precommitment game: both Euler conditions
/// `alpha(c) f'(k) = 1` plus the resource constraint.
#[derive(Debug, Clone, Serialize)]
pub struct OpenLoopSteadyState {
    pub c_i: f64,
    pub c_j: f64,
    pub k: f64,
    pub bundle_i: MarginalBundle,
    pub bundle_j: MarginalBundle,
    pub eta_i: f64,
    pub eta_j: f64,
    pub fprime: f64,
    pub fsecond: f64,
    pub euler_residual_i: f64,
    pub euler_residual_j: f64,
    pub resource_residual: f64,
    /// Number of stationary points found on the bracket; the smallest is
    /// returned.
    pub root_count: usize,
}

const BRACKET_SHRINK: f64 = 1e-9;

/// Inverse-domain bracket for k: `1/f'(k)` must lie in both discount
/// families' invertible range.
pub fn admissible_bracket(model: &ModelSpec) -> Result<(f64, f64), OpenLoopError> {
    let tech = &model.technology;
    let k_low = f64::max(
        tech.capital_with_marginal_product(1.0 / model.agent_i.discount.value(0.0)),
        tech.capital_with_marginal_product(1.0 / model.agent_j.discount.value(0.0)),
    ) + BRACKET_SHRINK;
    let k_high = f64::min(
        tech.capital_with_marginal_product(1.0 / model.agent_i.discount.alpha_bar),
        tech.capital_with_marginal_product(1.0 / model.agent_j.discount.alpha_bar),
    ) - BRACKET_SHRINK;
    if !(k_low < k_high) {
        return Err(OpenLoopError::EmptyBracket { lo: k_low, hi: k_high });
    }
    Ok((k_low, k_high))
}

pub fn solve_openloop(model: &ModelSpec) -> Result<OpenLoopSteadyState, OpenLoopError> {
    let tech = &model.technology;
    let (lo, hi) = admissible_bracket(model)?;
    let phi = |k: f64| -> f64 {
        let target = 1.0 / tech.d1(k);
        let ci = model.agent_i.discount.invert(target);
        let cj = model.agent_j.discount.invert(target);
        match (ci, cj) {
            (Ok(ci), Ok(cj)) => tech.value(k) - k - ci - cj,
            _ => f64::NAN,
        }
    };
    let brackets = scan_brackets(phi, lo, hi, 1000);
    if brackets.is_empty() {
        return Err(OpenLoopError::NoEquilibriumInBracket { lo, hi });
    }
    let root = bisect(phi, brackets[0], 1e-12, 200)?.root;

    let fprime = tech.d1(root);
    let target = 1.0 / fprime;
    let c_i = model.agent_i.discount.invert(target)?;
    let c_j = model.agent_j.discount.invert(target)?;
    let bundle_i = marginal_bundle(&model.agent_i, c_i)?;
    let bundle_j = marginal_bundle(&model.agent_j, c_j)?;
    Ok(OpenLoopSteadyState {
        c_i,
        c_j,
        k: root,
        eta_i: eta_at(&model.agent_i, tech, c_i, root),
        eta_j: eta_at(&model.agent_j, tech, c_j, root),
        fprime,
        fsecond: tech.d2(root),
        euler_residual_i: (model.agent_i.discount.value(c_i) * fprime - 1.0).abs(),
        euler_residual_j: (model.agent_j.discount.value(c_j) * fprime - 1.0).abs(),
        resource_residual: (tech.value(root) - root - c_i - c_j).abs(),
        bundle_i,
        bundle_j,
        root_count: brackets.len(),
    })
}

/// Policy-map partials around the stationary point, from the closed forms of
/// the linear system they satisfy.
#[derive(Debug, Clone, Serialize)]
pub struct OLDerivatives {
    pub delta0: f64,
    pub f1_i: f64,
    pub f2_i: f64,
    pub f3_i: f64,
    pub f1_j: f64,
    pub f2_j: f64,
    pub f3_j: f64,
    /// `eta_i omega_j - delta_i eta_j`, the sign-determining term for agent i.
    pub cross_i: f64,
    pub cross_j: f64,
    /// Decomposition of `cross_i`: local-regularity part `eta_i (-W_j/U_j)`.
    pub cross_i_lr_part: f64,
    /// Cross-marginal-impatience part `(delta_j - delta_i) f''/f'`.
    pub cross_i_cmi_part: f64,
    /// Max-abs residual of the defining 2x3 linear system (scaled).
    pub system_residual: f64,
}

struct AgentCtx {
    delta: f64,
    omega: f64,
    eta: f64,
}

fn f_triple(own: &AgentCtx, other: &AgentCtx, fprime: f64, delta0: f64) -> (f64, f64, f64) {
    let cross = own.eta * other.omega - own.delta * other.eta;
    let f1 = (own.omega * other.omega - cross) / delta0;
    let f2 = -(own.delta * other.omega + cross) / delta0;
    let f3 = cross * fprime / delta0;
    (f1, f2, f3)
}

pub fn ol_coefficients(ss: &OpenLoopSteadyState) -> Result<OLDerivatives, OpenLoopError> {
    let i = AgentCtx { delta: ss.bundle_i.delta, omega: ss.bundle_i.omega, eta: ss.eta_i };
    let j = AgentCtx { delta: ss.bundle_j.delta, omega: ss.bundle_j.omega, eta: ss.eta_j };
    let delta0 = i.omega * j.omega - i.delta * j.delta;
    if delta0.abs() <= 1e-14 {
        return Err(OpenLoopError::SingularSystem(delta0));
    }
    let (f1_i, f2_i, f3_i) = f_triple(&i, &j, ss.fprime, delta0);
    let (f1_j, f2_j, f3_j) = f_triple(&j, &i, ss.fprime, delta0);
    let cross_i = i.eta * j.omega - i.delta * j.eta;
    let cross_j = j.eta * i.omega - j.delta * i.eta;

    // residual of  [w_i d_i; d_j w_j] [F_i; F_j-swapped] = rhs
    let rows = [
        [i.omega * f1_i + i.delta * f2_j, i.omega * f2_i + i.delta * f1_j, i.omega * f3_i + i.delta * f3_j],
        [j.delta * f1_i + j.omega * f2_j, j.delta * f2_i + j.omega * f1_j, j.delta * f3_i + j.omega * f3_j],
    ];
    let rhs = [
        [i.omega - i.eta, -i.eta, i.eta * ss.fprime],
        [-j.eta, j.omega - j.eta, j.eta * ss.fprime],
    ];
    let mut system_residual: f64 = 0.0;
    for r in 0..2 {
        for c in 0..3 {
            let scale = f64::max(1.0, rhs[r][c].abs());
            system_residual = system_residual.max((rows[r][c] - rhs[r][c]).abs() / scale);
        }
    }

    let wu_j = ss.bundle_j.curvature_w / ss.bundle_j.marginal_u;
    Ok(OLDerivatives {
        delta0,
        f1_i,
        f2_i,
        f3_i,
        f1_j,
        f2_j,
        f3_j,
        cross_i,
        cross_j,
        cross_i_lr_part: i.eta * (-wu_j),
        cross_i_cmi_part: (j.delta - i.delta) * (ss.fsecond / ss.fprime),
        system_residual,
    })
}

/// Rectangle in (c_i, c_j, k) space for the local-regularity grid check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Region {
    pub c_i: (f64, f64),
    pub c_j: (f64, f64),
    pub k: (f64, f64),
}

impl Region {
    /// Symmetric relative window around the steady state.
    pub fn around(ss: &OpenLoopSteadyState, frac: f64) -> Self {
        let w = |x: f64| (x * (1.0 - frac), x * (1.0 + frac));
        Region { c_i: w(ss.c_i), c_j: w(ss.c_j), k: w(ss.k) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub lr_holds: bool,
    /// Worst (largest) value of the LR expression over the grid; negative
    /// when LR holds.
    pub lr_worst_margin: f64,
    pub nucmi_holds: bool,
    pub nucmi_worst_margin: f64,
    /// `eta_i < 0` and `eta_j < 0` at the steady state.
    pub p1: bool,
    /// `delta_i <= delta_j` at the steady state.
    pub p2: bool,
    pub p3: bool,
    pub p3_value: f64,
}

const LR_GRID: usize = 20;
const NUCMI_GRID: usize = 1000;

pub fn regularity_checks(
    ss: &OpenLoopSteadyState,
    model: &ModelSpec,
    rect: Region,
) -> RegularityReport {
    let tech = &model.technology;
    let mut lr_worst = f64::NEG_INFINITY;
    for a in 0..LR_GRID {
        let t = a as f64 / (LR_GRID - 1) as f64;
        let k = rect.k.0 + (rect.k.1 - rect.k.0) * t;
        let fp = tech.d1(k);
        let fpp = tech.d2(k);
        for b in 0..LR_GRID {
            let s = b as f64 / (LR_GRID - 1) as f64;
            let ci = rect.c_i.0 + (rect.c_i.1 - rect.c_i.0) * s;
            let cj = rect.c_j.0 + (rect.c_j.1 - rect.c_j.0) * s;
            let li = model.agent_i.discount.d1(ci) / model.agent_i.discount.value(ci) * (fp - 1.0)
                + fpp / fp;
            let lj = model.agent_j.discount.d1(cj) / model.agent_j.discount.value(cj) * (fp - 1.0)
                + fpp / fp;
            lr_worst = lr_worst.max(li).max(lj);
        }
    }

    let c_lo = f64::min(rect.c_i.0, rect.c_j.0);
    let c_hi = f64::max(rect.c_i.1, rect.c_j.1);
    let mut nucmi_worst = f64::NEG_INFINITY;
    for n in 0..NUCMI_GRID {
        let c = c_lo + (c_hi - c_lo) * n as f64 / (NUCMI_GRID - 1) as f64;
        let ai = model.agent_i.discount.value(c);
        let aj = model.agent_j.discount.value(c);
        let gap = model.agent_i.discount.d1(c) / (ai * ai) - model.agent_j.discount.d1(c) / (aj * aj);
        nucmi_worst = nucmi_worst.max(gap);
    }

    let (di, dj) = (ss.bundle_i.delta, ss.bundle_j.delta);
    let (oi, oj) = (ss.bundle_i.omega, ss.bundle_j.omega);
    let p3_value =
        ss.fprime - (2.0 * oi * oj + (di - oi) * ss.eta_j + ss.eta_i * (dj - oj));
    RegularityReport {
        lr_holds: lr_worst < 0.0,
        lr_worst_margin: lr_worst,
        nucmi_holds: nucmi_worst <= 0.0,
        nucmi_worst_margin: nucmi_worst,
        p1: ss.eta_i < 0.0 && ss.eta_j < 0.0,
        p2: di <= dj,
        p3: p3_value >= 0.0,
        p3_value,
    }
}

/// Weak local stability expression
/// `(a_i'/a_i)(a_j'/a_j)(f'-1) + (a_i'/a_i + a_j'/a_j) f''/f'`;
/// negative means locally stable.
pub fn ol_local_stability(ss: &OpenLoopSteadyState) -> f64 {
    let (di, dj) = (ss.bundle_i.delta, ss.bundle_j.delta);
    di * dj * (ss.fprime - 1.0) + (di + dj) * ss.fsecond / ss.fprime
}

/// Partials of one agent's two-period marginal rate of substitution at the
/// stationary point, evaluated with `alpha = 1/f'`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MrsPartials {
    pub own_current: f64,
    pub own_next: f64,
    pub cross_current: f64,
    pub cross_next: f64,
    pub capital_current: f64,
    pub capital_next: f64,
}

fn mrs_for(bundle: &MarginalBundle, fprime: f64) -> MrsPartials {
    let alpha = 1.0 / fprime;
    let dn = bundle.delta / alpha; // alpha'/alpha^2
    let wu = bundle.curvature_w / bundle.marginal_u / alpha; // W/(alpha U)
    MrsPartials {
        own_current: -(2.0 * dn - wu),
        own_next: dn - wu,
        cross_current: -dn,
        cross_next: dn,
        capital_current: dn / alpha,
        capital_next: -dn / alpha,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MRSReport {
    pub mu_bar_i: f64,
    pub mu_bar_j: f64,
    pub agent_i: MrsPartials,
    pub agent_j: MrsPartials,
}

pub fn mrs_partials(ss: &OpenLoopSteadyState) -> MRSReport {
    MRSReport {
        mu_bar_i: ss.fprime,
        mu_bar_j: ss.fprime,
        agent_i: mrs_for(&ss.bundle_i, ss.fprime),
        agent_j: mrs_for(&ss.bundle_j, ss.fprime),
    }
}

/// Characteristic data of the linearized system's 3x3 Jacobian.
#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    pub matrix: [[f64; 3]; 3],
    pub trace: f64,
    pub quad_coeff: f64,
    pub det: f64,
    /// Max scaled disagreement between matrix-entry and closed-form routes
    /// for trace, quadratic coefficient, and determinant.
    pub formula_crosscheck: f64,
    pub roots: CubicRoots,
    pub ordering_ok: bool,
    pub hyperbolic: bool,
    /// Critical points of p: local max r1, local min r2, inflection r3.
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub p_at_minus_one: f64,
    pub p_at_zero: f64,
    pub p_at_one: f64,
    pub lemma_b1: bool,
    pub lemma_b2: bool,
    pub lemma_b3: bool,
}

impl Spectrum {
    pub fn eval_p(&self, x: f64) -> f64 {
        ((x - self.trace) * x + self.quad_coeff) * x - self.det
    }
}

pub fn ol_jacobian_spectrum(
    ss: &OpenLoopSteadyState,
    der: &OLDerivatives,
) -> Result<Spectrum, OpenLoopError> {
    let a = [
        [der.f1_i, der.f2_i, der.f3_i],
        [der.f2_j, der.f1_j, der.f3_j],
        [-1.0, -1.0, ss.fprime],
    ];
    let trace = a[0][0] + a[1][1] + a[2][2];
    let det = det3(&a);
    // quadratic coefficient = sum of principal 2x2 minors
    let quad = a[0][0] * a[1][1] - a[0][1] * a[1][0] + a[0][0] * a[2][2] - a[0][2] * a[2][0]
        + a[1][1] * a[2][2]
        - a[1][2] * a[2][1];

    let (oi, oj) = (ss.bundle_i.omega, ss.bundle_j.omega);
    let d0 = der.delta0;
    let trace_formula = (2.0 * oi * oj - der.cross_i - der.cross_j) / d0 + ss.fprime;
    let det_formula = oi * oj * ss.fprime / d0;
    let quad_formula =
        (oi * oj - ss.eta_i * oj - oi * ss.eta_j) / d0 + 2.0 * oi * oj * ss.fprime / d0;
    let scaled = |x: f64, y: f64| (x - y).abs() / f64::max(1.0, y.abs());
    let formula_crosscheck = scaled(trace, trace_formula)
        .max(scaled(det, det_formula))
        .max(scaled(quad, quad_formula));

    let roots = solve_cubic(-trace, quad, -det);
    if !roots.all_real {
        return Err(OpenLoopError::ComplexRootsPresent(roots.roots.len()));
    }
    let r = &roots.roots;
    let hyperbolic = r.iter().all(|x| (x.abs() - 1.0).abs() > 1e-10);
    let ordering_ok = r.len() == 3
        && r[0] > 0.0
        && r[0] < 1.0
        && r[1] > 1.0
        && r[2] > r[1]
        && hyperbolic;

    // critical points of p: roots of 3x^2 - 2 tr x + quad
    let tr_a2 = trace * trace - 2.0 * quad;
    let disc = tr_a2 - trace * trace / 3.0;
    let (r1, r2) = if disc > 0.0 {
        let half_width = 0.5 * (2.0 / 3.0 * disc).sqrt();
        (trace / 3.0 - half_width, trace / 3.0 + half_width)
    } else {
        (f64::NAN, f64::NAN)
    };
    let r3 = trace / 3.0;
    let p = |x: f64| ((x - trace) * x + quad) * x - det;
    let (pm1, p0, p1) = (p(-1.0), p(0.0), p(1.0));
    Ok(Spectrum {
        matrix: a,
        trace,
        quad_coeff: quad,
        det,
        formula_crosscheck,
        roots,
        ordering_ok,
        hyperbolic,
        r1,
        r2,
        r3,
        p_at_minus_one: pm1,
        p_at_zero: p0,
        p_at_one: p1,
        lemma_b1: pm1 < p0 && p0 < 0.0 && p1 > 0.0,
        lemma_b2: trace / 3.0 > 1.0,
        lemma_b3: disc > 0.0 && r1 < r3 && r3 < r2 && r3 > 1.0,
    })
}

fn det3(a: &[[f64; 3]; 3]) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Gaussian elimination with partial pivoting for the 3x3 systems used by
/// inverse iteration.
fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for r in 0..3 {
        m[r][..3].copy_from_slice(&a[r]);
        m[r][3] = b[r];
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&p, &q| m[p][col].abs().partial_cmp(&m[q][col].abs()).unwrap())?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for row in (col + 1)..3 {
            let factor = m[row][col] / m[col][col];
            for c in col..4 {
                m[row][c] -= factor * m[col][c];
            }
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let mut acc = m[row][3];
        for c in (row + 1)..3 {
            acc -= m[row][c] * x[c];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// Normalized eigenvector of `a` for the eigenvalue nearest `lambda`, by
/// shifted inverse iteration. The returned vector has its third component
/// scaled to 1.
pub fn eigenvector_near(a: &[[f64; 3]; 3], lambda: f64) -> Option<[f64; 3]> {
    let shift = lambda * (1.0 + 1e-9) + 1e-12;
    let mut shifted = *a;
    for d in 0..3 {
        shifted[d][d] -= shift;
    }
    let mut v = [1.0f64, 1.0, 1.0];
    for _ in 0..100 {
        let w = solve3(&shifted, &v)?;
        let norm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        if norm < 1e-300 {
            return None;
        }
        v = [w[0] / norm, w[1] / norm, w[2] / norm];
    }
    if v[2].abs() < 1e-300 {
        return None;
    }
    Some([v[0] / v[2], v[1] / v[2], 1.0])
}

/// Stable-manifold slopes and the left-eigenvector coefficient matrix.
#[derive(Debug, Clone, Serialize)]
pub struct ManifoldSlopes {
    pub pi_i: f64,
    pub pi_j: f64,
    /// Eigen-ratio `(F1_i - F2_i - l)/(F1_j - F2_j - l)` at the first
    /// unstable eigenvalue.
    pub e_ij: f64,
    /// Eigen-ratio `(F1_j - F2_j - l)/(F1_i - F2_i - l)` at the second
    /// unstable eigenvalue.
    pub e_ji: f64,
    /// Left-eigenvector rows for (l1, l2, l3) with unit diagonal scales.
    pub b_matrix: [[f64; 3]; 3],
    /// Direction mismatch against the inverse-iteration eigenvector of the
    /// stable root (max abs component difference after normalization).
    pub eigvec_direction_error: f64,
}

/// Left eigenvector of `a` for eigenvalue `l`: the null row of `a - l I`,
/// taken as the largest cross product of two columns of that matrix. Scale
/// free, so it stays well defined where the ratio parameterization of the
/// row degenerates (exactly symmetric agents).
fn left_eigenrow(a: &[[f64; 3]; 3], l: f64) -> Option<[f64; 3]> {
    let m = [
        [a[0][0] - l, a[0][1], a[0][2]],
        [a[1][0], a[1][1] - l, a[1][2]],
        [a[2][0], a[2][1], a[2][2] - l],
    ];
    let col = |c: usize| [m[0][c], m[1][c], m[2][c]];
    let cross = |u: [f64; 3], v: [f64; 3]| {
        [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
    };
    let mut best: Option<[f64; 3]> = None;
    let mut best_norm = 0.0;
    for (p, q) in [(0, 1), (0, 2), (1, 2)] {
        let w = cross(col(p), col(q));
        let norm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        if norm > best_norm {
            best_norm = norm;
            best = Some([w[0] / norm, w[1] / norm, w[2] / norm]);
        }
    }
    best
}

/// Solves the two stable-manifold conditions for the policy slopes. The two
/// defining rows are the left-eigenvector rows of the unstable eigenvalues
/// (l2, l3); the resulting tangent direction is the l1-eigenvector. The
/// slope values are invariant to the free row scales.
pub fn manifold_slopes(
    ss: &OpenLoopSteadyState,
    spectrum: &Spectrum,
    der: &OLDerivatives,
) -> Result<ManifoldSlopes, OpenLoopError> {
    if !spectrum.ordering_ok {
        return Err(OpenLoopError::OrderingFailed(spectrum.roots.roots.clone()));
    }
    let (l1, l2, l3) = (spectrum.roots.roots[0], spectrum.roots.roots[1], spectrum.roots.roots[2]);
    let di_minus = der.f1_i - der.f2_i;
    let dj_minus = der.f1_j - der.f2_j;

    let a = &spectrum.matrix;
    let row2 = left_eigenrow(a, l2)
        .ok_or_else(|| OpenLoopError::DegenerateDenominator("eigenrow at lambda2".into()))?;
    let row3 = left_eigenrow(a, l3)
        .ok_or_else(|| OpenLoopError::DegenerateDenominator("eigenrow at lambda3".into()))?;

    // [row2_1 row2_2; row3_1 row3_2] (pi_i, pi_j)^T = -(row2_3, row3_3)^T
    let det = row2[0] * row3[1] - row2[1] * row3[0];
    if det.abs() <= 1e-10 {
        return Err(OpenLoopError::DegenerateDenominator(
            "unstable eigenrows are collinear in the consumption plane".into(),
        ));
    }
    let pi_i = -(row2[2] * row3[1] - row2[1] * row3[2]) / det;
    let pi_j = -(row2[0] * row3[2] - row2[2] * row3[0]) / det;

    // ratio intermediates of the row parameterization, where defined
    let ratio = |num: f64, den: f64| if den.abs() > 1e-10 { num / den } else { f64::NAN };
    let e_ij = ratio(di_minus - l2, dj_minus - l2);
    let e_ji = ratio(dj_minus - l3, di_minus - l3);

    // coefficient rows for all three eigenvalues, rescaled to a unit
    // diagonal where the diagonal entry allows it
    let row1 = left_eigenrow(a, l1)
        .ok_or_else(|| OpenLoopError::DegenerateDenominator("eigenrow at lambda1".into()))?;
    let normalize = |row: [f64; 3], d: usize| {
        if row[d].abs() > 1e-10 {
            [row[0] / row[d], row[1] / row[d], row[2] / row[d]]
        } else {
            row
        }
    };
    let b_matrix = [normalize(row1, 0), normalize(row2, 1), normalize(row3, 2)];

    // cross-check against the stable eigenvector
    let eig = eigenvector_near(&spectrum.matrix, l1);
    let eigvec_direction_error = match eig {
        Some(v) => f64::max((pi_i - v[0]).abs(), (pi_j - v[1]).abs()),
        None => f64::INFINITY,
    };

    Ok(ManifoldSlopes { pi_i, pi_j, e_ij, e_ji, b_matrix, eigvec_direction_error })
}

/// Linearized equilibrium path.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub k: Vec<f64>,
    pub c_i: Vec<f64>,
    pub c_j: Vec<f64>,
    pub dev_k: Vec<f64>,
    pub diverged: bool,
    /// Worst one-step recursion defect `|x_{t+1} - A x_t|` over the early
    /// path, relative to the initial deviation. Small values confirm the
    /// modal solution satisfies the linearized map.
    pub recursion_defect: f64,
    pub warning: Option<String>,
}

pub const PERTURBATION_CAP: f64 = 0.2;

/// Path of the linearized system started on the stable manifold:
/// `c0 = cbar + pi' (k0 - kbar)` puts the state on the stable eigendirection,
/// so the solution of the linear recursion is the single stable mode
/// `x_t = xbar + l1^t (x0 - xbar)`. The closed form is used directly;
/// iterating the map in floating point would let rounding noise excite the
/// unstable roots and swamp the path long before 200 periods.
pub fn simulate_openloop(
    ss: &OpenLoopSteadyState,
    spectrum: &Spectrum,
    slopes: &ManifoldSlopes,
    k0: f64,
    periods: usize,
) -> Trajectory {
    assert!(periods >= 1);
    let a = &spectrum.matrix;
    let l1 = spectrum.roots.roots[0];
    let dev0 = k0 - ss.k;
    let warning = if dev0.abs() > PERTURBATION_CAP * ss.k {
        Some(format!(
            "initial deviation {:.3e} exceeds {:.0}% of the stationary capital; linearization degrades",
            dev0,
            PERTURBATION_CAP * 100.0
        ))
    } else {
        None
    };
    let x0 = [slopes.pi_i * dev0, slopes.pi_j * dev0, dev0];
    let mut k = Vec::with_capacity(periods + 1);
    let mut c_i = Vec::with_capacity(periods + 1);
    let mut c_j = Vec::with_capacity(periods + 1);
    let mut dev_k = Vec::with_capacity(periods + 1);
    let mut recursion_defect: f64 = 0.0;
    let scale0 = dev0.abs().max(1e-300);
    let mut factor = 1.0;
    for t in 0..=periods {
        let x = [x0[0] * factor, x0[1] * factor, x0[2] * factor];
        k.push(ss.k + x[2]);
        c_i.push(ss.c_i + x[0]);
        c_j.push(ss.c_j + x[1]);
        dev_k.push(x[2]);
        if t < 20 {
            // the mode must satisfy the recursion: A x = l1 x up to the
            // eigendirection error of the slope formulas
            for row in 0..3 {
                let ax = a[row][0] * x[0] + a[row][1] * x[1] + a[row][2] * x[2];
                recursion_defect = recursion_defect.max((ax - l1 * x[row]).abs() / scale0);
            }
        }
        factor *= l1;
    }
    Trajectory { k, c_i, c_j, dev_k, diverged: l1.abs() >= 1.0, recursion_defect, warning }
}

/// Orderings between the precommitment point and both autarky benchmarks.
#[derive(Debug, Clone, Serialize)]
pub struct Proposition1Report {
    pub c_i_le_c_j: bool,
    pub k_le_k_a_j: bool,
    pub k_a_j_le_k_a_i: bool,
    pub c_i_le_c_a_i: bool,
    pub c_j_le_c_a_j: bool,
    pub k_a_i: f64,
    pub k_a_j: f64,
    pub c_a_i: f64,
    pub c_a_j: f64,
}

pub fn compare_autarky(
    ss: &OpenLoopSteadyState,
    model: &ModelSpec,
) -> Result<Proposition1Report, OpenLoopError> {
    let aut_i = solve_autarky(&model.agent_i, &model.technology)?;
    let aut_j = solve_autarky(&model.agent_j, &model.technology)?;
    let (ai, aj) = (&aut_i[0], &aut_j[0]);
    Ok(Proposition1Report {
        c_i_le_c_j: ss.c_i <= ss.c_j,
        k_le_k_a_j: ss.k <= aj.k_a,
        k_a_j_le_k_a_i: aj.k_a <= ai.k_a,
        c_i_le_c_a_i: ss.c_i <= ai.c_a,
        c_j_le_c_a_j: ss.c_j <= aj.c_a,
        k_a_i: ai.k_a,
        k_a_j: aj.k_a,
        c_a_i: ai.c_a,
        c_a_j: aj.c_a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical_m1;

    fn solved() -> (ModelSpec, OpenLoopSteadyState) {
        let m = canonical_m1();
        let ss = solve_openloop(&m).unwrap();
        (m, ss)
    }

    #[test]
    fn golden_steady_state_m1() {
        let (_, ss) = solved();
        assert!((ss.k - 0.09800074308955063).abs() < 1e-10);
        assert!((ss.c_i - 0.1535199768113412).abs() < 1e-10);
        assert!((ss.c_j - 0.2466392318173327).abs() < 1e-10);
        assert!(ss.euler_residual_i < 1e-10);
        assert!(ss.euler_residual_j < 1e-10);
        assert!(ss.resource_residual < 1e-10);
        assert!(ss.c_i <= ss.c_j);
    }

    #[test]
    fn symmetric_agents_equal_consumption() {
        let m = canonical_m1();
        let sym = ModelSpec {
            agent_i: m.agent_i,
            agent_j: m.agent_i,
            technology: m.technology,
            theta_i: m.theta_i,
        };
        let ss = solve_openloop(&sym).unwrap();
        assert!((ss.c_i - ss.c_j).abs() < 1e-10);
    }

    #[test]
    fn coefficients_golden_and_system_residual() {
        let (_, ss) = solved();
        let der = ol_coefficients(&ss).unwrap();
        assert!((der.delta0 - 9.606972316045823).abs() < 1e-9);
        assert!((der.f1_i - 2.3562642212623395).abs() < 1e-9);
        assert!((der.f2_i - 1.0287577911442116).abs() < 1e-9);
        assert!((der.f3_i - (-1.9621382976264259)).abs() < 1e-9);
        assert!((der.f1_j - 3.1678468078016135).abs() < 1e-9);
        assert!(der.system_residual < 1e-12);
        // LR + NUCMI hold at M1 as a common-consumption property, and the
        // predicted signs follow
        assert!(der.f1_i > 0.0 && der.f3_i < 0.0);
        // crossimp decomposition is exact
        assert!((der.cross_i_lr_part + der.cross_i_cmi_part - der.cross_i).abs() < 1e-9);
    }

    #[test]
    fn subscript_swap_symmetry_exact() {
        let (_, ss) = solved();
        let der = ol_coefficients(&ss).unwrap();
        // rebuild agent j's triple by swapping the argument order
        let i = AgentCtx { delta: ss.bundle_i.delta, omega: ss.bundle_i.omega, eta: ss.eta_i };
        let j = AgentCtx { delta: ss.bundle_j.delta, omega: ss.bundle_j.omega, eta: ss.eta_j };
        let delta0_swapped = j.omega * i.omega - j.delta * i.delta;
        let (f1, f2, f3) = f_triple(&j, &i, ss.fprime, delta0_swapped);
        assert_eq!(f1, der.f1_j);
        assert_eq!(f2, der.f2_j);
        assert_eq!(f3, der.f3_j);
    }

    #[test]
    fn near_constant_discounting_limit_pattern() {
        // as the discount family flattens, delta -> 0, omega -> -u''/u',
        // and eta -> f''/f'
        let m = canonical_m1();
        let mut agent = m.agent_i;
        agent.discount.curvature = 1e-4;
        let c = 0.3;
        let b = crate::model::marginal_bundle(&agent, c).unwrap();
        assert!(b.delta < 1e-3);
        let w_over_u = -agent.utility.d2(c) / agent.utility.d1(c);
        assert!((b.omega - w_over_u).abs() / w_over_u < 1e-3);
        let k = 0.1;
        let eta = crate::autarky::eta_at(&agent, &m.technology, c, k);
        let limit = m.technology.d2(k) / m.technology.d1(k);
        assert!((eta - limit).abs() / limit.abs() < 1e-3);
    }

    #[test]
    fn regularity_m1() {
        let (m, ss) = solved();
        let rep = regularity_checks(&ss, &m, Region::around(&ss, 0.05));
        assert!(rep.lr_holds);
        assert!(rep.nucmi_holds);
        assert!(rep.p1);
        // LR implies the weak local stability expression is negative
        assert!(ol_local_stability(&ss) < 0.0);
        assert!((ol_local_stability(&ss) - (-11.380242936577732)).abs() < 1e-9);
    }

    #[test]
    fn nucmi_equality_for_symmetric_agents() {
        let m = canonical_m1();
        let sym = ModelSpec {
            agent_i: m.agent_i,
            agent_j: m.agent_i,
            technology: m.technology,
            theta_i: m.theta_i,
        };
        let ss = solve_openloop(&sym).unwrap();
        let rep = regularity_checks(&ss, &sym, Region::around(&ss, 0.05));
        assert!(rep.nucmi_holds);
        assert!(rep.nucmi_worst_margin.abs() < 1e-14);
    }

    #[test]
    fn mrs_identities_m1() {
        let (_, ss) = solved();
        let rep = mrs_partials(&ss);
        for p in [rep.agent_i, rep.agent_j] {
            // opponent-consumption partials cancel exactly
            assert_eq!(p.cross_current + p.cross_next, 0.0);
            assert_eq!(p.capital_current + p.capital_next, 0.0);
            // own net effect is -alpha'/alpha^2 < 0
            assert!((p.own_current + p.own_next - p.cross_current).abs() < 1e-12);
            assert!(p.own_current < 0.0 && p.own_next > 0.0);
            assert!(p.capital_current > 0.0 && p.capital_next < 0.0);
        }
        assert!((rep.agent_i.own_current - (-7.044037514825374)).abs() < 1e-9);
        assert!((rep.mu_bar_i - 1.524967880895611).abs() < 1e-10);
    }

    #[test]
    fn spectrum_golden_m1() {
        let (_, ss) = solved();
        let der = ol_coefficients(&ss).unwrap();
        let sp = ol_jacobian_spectrum(&ss, &der).unwrap();
        assert!(sp.formula_crosscheck < 1e-12);
        assert!(sp.roots.all_real);
        let r = &sp.roots.roots;
        assert!((r[0] - 0.22192866661600422).abs() < 1e-8);
        assert!((r[1] - 1.3392352358828747).abs() < 1e-8);
        assert!((r[2] - 5.487915007460686).abs() < 1e-7);
        assert!(sp.ordering_ok && sp.hyperbolic);
        assert!(sp.lemma_b1 && sp.lemma_b2 && sp.lemma_b3);
        assert!((sp.det - ss.bundle_i.omega * ss.bundle_j.omega / der.delta0 * ss.fprime).abs() < 1e-12);
        // closed forms for the three probe values
        let (di, dj) = (ss.bundle_i.delta, ss.bundle_j.delta);
        let (oi, oj) = (ss.bundle_i.omega, ss.bundle_j.omega);
        let p1_closed = (di * dj * (ss.fprime - 1.0) - (di * ss.eta_j + ss.eta_i * dj)) / der.delta0;
        assert!((sp.p_at_one - p1_closed).abs() < 1e-9);
        let pm1_closed = -((4.0 * oi * oj - di * dj) / der.delta0) * (ss.fprime + 1.0)
            + (ss.eta_i * (2.0 * oj - dj) + (2.0 * oi - di) * ss.eta_j) / der.delta0;
        assert!((sp.p_at_minus_one - pm1_closed).abs() < 1e-9);
    }

    #[test]
    fn manifold_slopes_match_eigenvector() {
        let (_, ss) = solved();
        let der = ol_coefficients(&ss).unwrap();
        let sp = ol_jacobian_spectrum(&ss, &der).unwrap();
        let ms = manifold_slopes(&ss, &sp, &der).unwrap();
        assert!((ms.pi_i - 0.5622639802384686).abs() < 1e-8);
        assert!((ms.pi_j - 0.7407752340411379).abs() < 1e-8);
        assert!(ms.eigvec_direction_error < 1e-8);
        assert_eq!(ms.b_matrix[0][0], 1.0);
        assert_eq!(ms.b_matrix[1][1], 1.0);
        assert_eq!(ms.b_matrix[2][2], 1.0);
        // each row is a left eigenvector of A for its eigenvalue
        for (row, lam) in ms.b_matrix.iter().zip(&sp.roots.roots) {
            for col in 0..3 {
                let lhs: f64 = (0..3).map(|r| row[r] * sp.matrix[r][col]).sum();
                assert!(
                    (lhs - lam * row[col]).abs() < 1e-7,
                    "row for lambda={lam} fails at column {col}: {lhs} vs {}",
                    lam * row[col]
                );
            }
        }
    }

    #[test]
    fn manifold_slopes_symmetric_agents() {
        let m = canonical_m1();
        let sym = ModelSpec {
            agent_i: m.agent_i,
            agent_j: m.agent_i,
            technology: m.technology,
            theta_i: m.theta_i,
        };
        let ss = solve_openloop(&sym).unwrap();
        let der = ol_coefficients(&ss).unwrap();
        let sp = ol_jacobian_spectrum(&ss, &der).unwrap();
        let ms = manifold_slopes(&ss, &sp, &der).unwrap();
        assert!((ms.pi_i - ms.pi_j).abs() < 1e-10);
    }

    #[test]
    fn simulation_fixed_point_is_constant() {
        let (_, ss) = solved();
        let der = ol_coefficients(&ss).unwrap();
        let sp = ol_jacobian_spectrum(&ss, &der).unwrap();
        let ms = manifold_slopes(&ss, &sp, &der).unwrap();
        let path = simulate_openloop(&ss, &sp, &ms, ss.k, 50);
        for t in 0..=50 {
            assert!((path.k[t] - ss.k).abs() < 1e-14);
            assert!((path.c_i[t] - ss.c_i).abs() < 1e-14);
        }
    }

    #[test]
    fn simulation_monotone_geometric_convergence() {
        let (_, ss) = solved();
        let der = ol_coefficients(&ss).unwrap();
        let sp = ol_jacobian_spectrum(&ss, &der).unwrap();
        let ms = manifold_slopes(&ss, &sp, &der).unwrap();
        let path = simulate_openloop(&ss, &sp, &ms, 0.9 * ss.k, 200);
        assert!(!path.diverged);
        let d0 = path.dev_k[0].abs();
        let dt = path.dev_k[200].abs();
        assert!(dt < 1e-6 * d0, "dev after 200 periods: {dt:e}");
        // sign never flips
        let s0 = path.dev_k[0].signum();
        assert!(path.dev_k.iter().take(150).all(|d| d.signum() == s0));
        // empirical rate by log regression against lambda1
        let l1 = sp.roots.roots[0];
        let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (t, d) in path.dev_k.iter().enumerate().take(100) {
            let y = d.abs().ln();
            let x = t as f64;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            n += 1.0;
        }
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let rate = slope.exp();
        assert!((rate - l1).abs() / l1 < 0.05, "empirical rate {rate} vs lambda1 {l1}");
    }

    #[test]
    fn proposition1_orderings_m1() {
        let (m, ss) = solved();
        let rep = compare_autarky(&ss, &m).unwrap();
        assert!(rep.c_i_le_c_j);
        assert!(rep.k_le_k_a_j);
        assert!(rep.k_a_j_le_k_a_i);
        assert!(rep.c_i_le_c_a_i);
        assert!(rep.c_j_le_c_a_j);
    }

    #[test]
    fn young_inequality_step() {
        // delta_i delta_j <= delta_i^2 + delta_j^2 for arbitrary nonnegatives
        let mut x = 0.37_f64;
        for _ in 0..100 {
            x = (x * 1.37 + 0.11) % 5.0;
            let y = (x * 2.7 + 0.31) % 5.0;
            assert!(x * y <= x * x + y * y + 1e-15);
        }
    }
}
