//! Scalar root-finding, closed-form cubic roots, and piecewise-linear grid
//! functions shared by all solvers.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("invalid bracket: f({lo}) = {f_lo} and f({hi}) = {f_hi} do not change sign")]
    InvalidBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("bisection did not converge within {max_iter} iterations (width {width})")]
    NoConvergence { max_iter: usize, width: f64 },
    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),
}

/// A sign-change interval. `lo == hi` marks an exact hit at a grid node.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64, f_lo: f64, f_hi: f64) -> Result<Self, NumericsError> {
        if f_lo == 0.0 {
            return Ok(Self { lo, hi: lo, f_lo: 0.0, f_hi: 0.0 });
        }
        if f_hi == 0.0 {
            return Ok(Self { lo: hi, hi, f_lo: 0.0, f_hi: 0.0 });
        }
        if !(lo < hi) || f_lo.signum() == f_hi.signum() {
            return Err(NumericsError::InvalidBracket { lo, hi, f_lo, f_hi });
        }
        Ok(Self { lo, hi, f_lo, f_hi })
    }

    pub fn around<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> Result<Self, NumericsError> {
        Self::new(lo, hi, f(lo), f(hi))
    }

    pub fn is_exact_hit(&self) -> bool {
        self.lo == self.hi
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RootResult {
    pub root: f64,
    pub f_root: f64,
    pub iterations: usize,
    pub width: f64,
}

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_SCAN_GRID: usize = 1000;

/// Midpoint bisection on a valid bracket. Derivative-free and robust to flat
/// regions; the bracket width halves every iteration.
pub fn bisect<F: Fn(f64) -> f64>(
    f: F,
    bracket: Bracket,
    tol: f64,
    max_iter: usize,
) -> Result<RootResult, NumericsError> {
    if bracket.is_exact_hit() {
        return Ok(RootResult { root: bracket.lo, f_root: 0.0, iterations: 0, width: 0.0 });
    }
    let (mut lo, mut hi, mut f_lo) = (bracket.lo, bracket.hi, bracket.f_lo);
    for it in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if !f_mid.is_finite() {
            return Err(NumericsError::NonFinite("bisect midpoint evaluation"));
        }
        if f_mid == 0.0 {
            return Ok(RootResult { root: mid, f_root: 0.0, iterations: it + 1, width: hi - lo });
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol {
            let root = 0.5 * (lo + hi);
            return Ok(RootResult { root, f_root: f(root), iterations: it + 1, width: hi - lo });
        }
    }
    Err(NumericsError::NoConvergence { max_iter, width: hi - lo })
}

/// Evaluates `f` on `n_grid` uniform nodes over `[lo, hi]` and returns every
/// adjacent sign-change pair in ascending order. A root landing exactly on a
/// node is returned as a zero-width hit instead of a bracket.
pub fn scan_brackets<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n_grid: usize) -> Vec<Bracket> {
    assert!(n_grid >= 2, "scan_brackets needs at least 2 nodes");
    let mut out = Vec::new();
    let step = (hi - lo) / (n_grid - 1) as f64;
    let mut prev_x = lo;
    let mut prev_f = f(lo);
    if prev_f == 0.0 {
        out.push(Bracket { lo, hi: lo, f_lo: 0.0, f_hi: 0.0 });
    }
    for i in 1..n_grid {
        let x = if i == n_grid - 1 { hi } else { lo + step * i as f64 };
        let fx = f(x);
        if fx == 0.0 {
            out.push(Bracket { lo: x, hi: x, f_lo: 0.0, f_hi: 0.0 });
        } else if prev_f.is_finite() && fx.is_finite() && prev_f != 0.0 && prev_f.signum() != fx.signum() {
            out.push(Bracket { lo: prev_x, hi: x, f_lo: prev_f, f_hi: fx });
        }
        prev_x = x;
        prev_f = fx;
    }
    out
}

/// Real roots of the monic cubic `x^3 + c2 x^2 + c1 x + c0`, sorted ascending.
#[derive(Debug, Clone, Serialize)]
pub struct CubicRoots {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    pub roots: Vec<f64>,
    pub all_real: bool,
}

impl CubicRoots {
    pub fn eval(&self, x: f64) -> f64 {
        ((x + self.c2) * x + self.c1) * x + self.c0
    }

    /// Residual bound from the type invariant: |p(r)| < 1e-8 * max(1, |r|^3).
    pub fn max_scaled_residual(&self) -> f64 {
        self.roots
            .iter()
            .map(|&r| self.eval(r).abs() / f64::max(1.0, r.abs().powi(3)))
            .fold(0.0, f64::max)
    }
}

/// Closed-form real roots of a monic cubic via the depressed-cubic reduction:
/// the trigonometric method when all three roots are real, Cardano otherwise.
/// One Newton polish step per root tightens the residual.
pub fn solve_cubic(c2: f64, c1: f64, c0: f64) -> CubicRoots {
    assert!(
        c2.is_finite() && c1.is_finite() && c0.is_finite(),
        "solve_cubic requires finite coefficients"
    );
    // substitute x = t - c2/3: t^3 + p t + q = 0
    let shift = c2 / 3.0;
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2.powi(3) / 27.0 - c2 * c1 / 3.0 + c0;
    let disc = -4.0 * p.powi(3) - 27.0 * q * q;

    let mut roots: Vec<f64>;
    let all_real;
    if disc > 0.0 {
        // three distinct real roots
        let m = 2.0 * (-p / 3.0).sqrt();
        let theta = (3.0 * q / (p * m)).clamp(-1.0, 1.0).acos() / 3.0;
        roots = (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift)
            .collect();
        all_real = true;
    } else if disc == 0.0 {
        if p == 0.0 {
            roots = vec![-shift];
        } else {
            // double root and a simple root
            let t1 = 3.0 * q / p;
            let t2 = -t1 / 2.0;
            roots = vec![t1 - shift, t2 - shift, t2 - shift];
        }
        all_real = true;
    } else {
        // one real root (Cardano)
        let half_q = q / 2.0;
        let s = (half_q * half_q + p.powi(3) / 27.0).sqrt();
        let u = cbrt(-half_q + s);
        let v = cbrt(-half_q - s);
        roots = vec![u + v - shift];
        all_real = false;
    }

    // one Newton step per root against the original polynomial
    for r in roots.iter_mut() {
        let fx = ((*r + c2) * *r + c1) * *r + c0;
        let dfx = (3.0 * *r + 2.0 * c2) * *r + c1;
        if dfx.abs() > 1e-300 {
            let step = fx / dfx;
            if step.is_finite() && step.abs() < 1.0 + r.abs() {
                *r -= step;
            }
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    CubicRoots { c2, c1, c0, roots, all_real }
}

fn cbrt(x: f64) -> f64 {
    x.signum() * x.abs().powf(1.0 / 3.0)
}

/// Piecewise-linear function on uniform nodes over `[lo, hi]`. Out-of-range
/// arguments clamp to the interval; evaluation at a node returns its sample.
#[derive(Debug, Clone, Serialize)]
pub struct GridFunction {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Self {
        assert!(values.len() >= 3, "GridFunction needs at least 3 samples");
        assert!(lo < hi, "GridFunction needs lo < hi");
        Self { lo, hi, values }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(lo: f64, hi: f64, n: usize, f: F) -> Self {
        let g = (0..n).map(|i| f(lo + (hi - lo) * i as f64 / (n - 1) as f64)).collect();
        Self::new(lo, hi, g)
    }

    pub fn constant(lo: f64, hi: f64, n: usize, value: f64) -> Self {
        Self::new(lo, hi, vec![value; n])
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * i as f64 / (self.values.len() - 1) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.values.len() - 1) as f64
    }

    pub fn clamp_arg(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let x = self.clamp_arg(x);
        let n = self.values.len();
        let pos = (x - self.lo) / self.step();
        let nearest = pos.round();
        // exact sample at a node; the snap radius is far below one cell
        if (pos - nearest).abs() < 1e-9 && nearest >= 0.0 && (nearest as usize) < n {
            return self.values[nearest as usize];
        }
        let i = (pos.floor() as usize).min(n - 2);
        let t = pos - i as f64;
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    /// h(h(x)); the inner value clamps to the interval before re-evaluation.
    pub fn compose_self(&self, x: f64) -> f64 {
        let inner = self.clamp_arg(self.evaluate(x));
        self.evaluate(inner)
    }

    /// Central difference with step equal to one grid cell (one-sided at the ends).
    pub fn slope_at(&self, x: f64) -> f64 {
        let h = self.step();
        let x = self.clamp_arg(x);
        let (a, b) = if x - h < self.lo {
            (self.lo, self.lo + h)
        } else if x + h > self.hi {
            (self.hi - h, self.hi)
        } else {
            (x - h, x + h)
        };
        (self.evaluate(b) - self.evaluate(a)) / (b - a)
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "grid size mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest adjacent |dv/dx|; the Lipschitz constant of the interpolant.
    pub fn lipschitz_constant(&self) -> f64 {
        let h = self.step();
        self.values
            .windows(2)
            .map(|w| ((w[1] - w[0]) / h).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_sqrt2() {
        let b = Bracket::around(|x| x * x - 2.0, 1.0, 2.0).unwrap();
        let r = bisect(|x| x * x - 2.0, b, 1e-12, 200).unwrap();
        assert!((r.root - 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bisect_linear() {
        let b = Bracket::around(|x| x - 0.5, 0.0, 1.0).unwrap();
        let r = bisect(|x| x - 0.5, b, 1e-12, 200).unwrap();
        assert!((r.root - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bisect_rejects_no_sign_change() {
        let err = Bracket::around(|x| x * x + 1.0, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, NumericsError::InvalidBracket { .. }));
    }

    #[test]
    fn bisect_width_halves_each_iteration() {
        // run with increasing iteration caps and watch the reported width
        let f = |x: f64| x * x * x - 2.0;
        let b = Bracket::around(f, 0.0, 2.0).unwrap();
        let mut prev_width = 2.0;
        for it in 1..20 {
            let r = bisect(f, b, 0.0, it);
            let width = match r {
                Ok(res) => res.width,
                Err(NumericsError::NoConvergence { width, .. }) => width,
                Err(e) => panic!("{e}"),
            };
            assert!((width - prev_width / 2.0).abs() < 1e-15);
            prev_width = width;
        }
    }

    #[test]
    fn scan_finds_cubic_roots() {
        let f = |x: f64| (x - 1.0) * (x - 2.0) * (x - 3.0);
        let brs = scan_brackets(f, 0.0, 4.0, 400);
        assert_eq!(brs.len(), 3);
        for (b, expect) in brs.iter().zip([1.0, 2.0, 3.0]) {
            let r = bisect(f, *b, 1e-12, 200).unwrap();
            assert!((r.root - expect).abs() < 1e-10, "{} vs {}", r.root, expect);
        }
    }

    #[test]
    fn scan_no_roots_is_empty() {
        let brs = scan_brackets(|x| x * x + 1.0, 0.0, 4.0, 400);
        assert!(brs.is_empty());
    }

    #[test]
    fn scan_exact_node_hit_degenerate() {
        // root at x = 2.0, which is a node of a 5-point grid on [0, 4]
        let brs = scan_brackets(|x| x - 2.0, 0.0, 4.0, 5);
        assert_eq!(brs.len(), 1);
        assert!(brs[0].is_exact_hit());
        assert_eq!(brs[0].lo, 2.0);
        let r = bisect(|x| x - 2.0, brs[0], 1e-12, 200).unwrap();
        assert_eq!(r.root, 2.0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn cubic_known_roots() {
        let r = solve_cubic(-6.0, 11.0, -6.0);
        assert!(r.all_real);
        for (got, want) in r.roots.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn cubic_lambda_cubed_minus_lambda() {
        let r = solve_cubic(0.0, -1.0, 0.0);
        assert!(r.all_real);
        for (got, want) in r.roots.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn cubic_single_real_root() {
        // x^3 + x + 1: discriminant negative
        let r = solve_cubic(0.0, 1.0, 1.0);
        assert!(!r.all_real);
        assert_eq!(r.roots.len(), 1);
        assert!(r.eval(r.roots[0]).abs() < 1e-10);
    }

    #[test]
    fn cubic_residual_invariant() {
        let r = solve_cubic(-6.0, 11.0, -6.0);
        assert!(r.max_scaled_residual() < 1e-8);
    }

    #[test]
    fn grid_identity_midpoint() {
        let g = GridFunction::from_fn(0.0, 1.0, 11, |x| x);
        assert!((g.evaluate(0.37) - 0.37).abs() < 1e-15);
    }

    #[test]
    fn grid_constant_composition() {
        let kstar = 0.4;
        let g = GridFunction::constant(0.0, 1.0, 11, kstar);
        assert_eq!(g.compose_self(0.9), kstar);
        assert_eq!(g.compose_self(-5.0), kstar);
    }

    #[test]
    fn grid_linear_lipschitz() {
        let kstar = 0.5;
        let g = GridFunction::from_fn(0.3, 0.7, 41, |k| kstar - 0.5 * (k - kstar));
        assert!((g.lipschitz_constant() - 0.5).abs() < 1e-12);
        assert!((g.slope_at(kstar) - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn grid_node_evaluation_exact() {
        let g = GridFunction::from_fn(0.1, 0.9, 17, |x| x * x);
        for i in 0..g.len() {
            let x = g.node(i);
            assert_eq!(g.evaluate(x), g.values()[i]);
        }
    }

    #[test]
    fn grid_clamps_out_of_range() {
        let g = GridFunction::from_fn(0.0, 1.0, 5, |x| 2.0 * x);
        assert_eq!(g.evaluate(-3.0), 0.0);
        assert_eq!(g.evaluate(7.0), 2.0);
    }
}
