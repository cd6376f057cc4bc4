//! Iterative fixed-point solver for Lipschitz, strictly concave functions,
//! plus diagnostics for its assumptions.
//!
//! Given oracle access to `f` on `[0, a_bar]` with Lipschitz bound `L`, the
//! solver iterates the mixture `g(x) = α·f(x) + (1-α)·x`. For `α ≤ 1/(L+1)`
//! the mixture is a contraction on the decreasing branch of a nonincreasing
//! kernel, and for strictly concave kernels the iteration converges to a
//! fixed point of `f` from any positive start; `f` and `g` share their fixed
//! points exactly.
//!
//! The stopping rule is relative step size, not the residual of `f`,
//! because `f` may only be available as a noisy Monte-Carlo oracle; noisy
//! mode averages several oracle calls per evaluation.

use serde::Serialize;

/// A fixed-point problem: an oracle on `[0, a_bar]`, its Lipschitz bound,
/// and the mixture parameter.
pub struct FixedPointProblem<F: FnMut(f64) -> f64> {
    f: F,
    a_bar: f64,
    lipschitz: f64,
    alpha: f64,
    alpha_clamped: bool,
}

impl<F: FnMut(f64) -> f64> FixedPointProblem<F> {
    /// Builds a problem. A requested `alpha > 1/(L+1)` is clamped down to
    /// `1/(L+1)`, the largest value the convergence guarantee covers; the
    /// clamp is recorded on the report.
    ///
    /// # Panics
    /// If `a_bar` or `lipschitz` is not positive and finite, or `alpha <= 0`.
    pub fn new(f: F, a_bar: f64, lipschitz: f64, alpha: f64) -> Self {
        assert!(a_bar > 0.0 && a_bar.is_finite(), "domain bound must be positive and finite");
        assert!(lipschitz > 0.0 && lipschitz.is_finite(), "Lipschitz bound must be positive");
        assert!(alpha > 0.0, "alpha must be positive");
        let limit = 1.0 / (lipschitz + 1.0);
        let clamped = alpha > limit;
        FixedPointProblem {
            f,
            a_bar,
            lipschitz,
            alpha: if clamped { limit } else { alpha },
            alpha_clamped: clamped,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn domain_bound(&self) -> f64 {
        self.a_bar
    }
}

/// Solver controls. `oracle_calls_per_eval > 1` turns on noisy mode: each
/// evaluation of the kernel averages that many oracle calls.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub log_trajectory: bool,
    pub oracle_calls_per_eval: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-9, max_iter: 100_000, log_trajectory: false, oracle_calls_per_eval: 1 }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolveOptions { tol, ..Default::default() }
    }

    /// Noisy-mode default: 64 oracle calls averaged per evaluation.
    pub fn noisy(tol: f64) -> Self {
        SolveOptions { tol, oracle_calls_per_eval: 64, ..Default::default() }
    }
}

/// Outcome of a fixed-point solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    /// The certified iterate: `|g(x_star) - x_star| = residual`.
    pub x_star: f64,
    pub iterations: usize,
    /// Mixture residual `|g(x_star) - x_star|` at the reported point. On
    /// success this is at most `tol·max(1, x_star)`, which bounds the
    /// kernel residual `|f(x_star) - x_star|` by `tol/α·max(1, x_star)`.
    pub residual: f64,
    pub converged: bool,
    pub alpha_used: f64,
    pub alpha_clamped: bool,
    /// Last iterates (up to 32), oldest first; for diagnosing
    /// non-convergence.
    pub tail: Vec<f64>,
    /// Full trajectory when logging was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<f64>>,
}

/// The mixture `g(x) = α·f(x) + (1-α)·x`; shares f's fixed points.
pub fn mixture<F: Fn(f64) -> f64>(f: F, alpha: f64) -> impl Fn(f64) -> f64 {
    assert!((0.0..=1.0).contains(&alpha), "alpha must lie in [0, 1]");
    move |x| alpha * f(x) + (1.0 - alpha) * x
}

const TAIL_LEN: usize = 32;

/// Iterates `x_{t+1} = g(x_t)` from `x0 > 0` until the relative step
/// `|x_{t+1} - x_t| <= tol·max(1, x_t)` or `max_iter` is reached. Exceeding
/// `max_iter` yields a non-convergence report, not an error.
pub fn iterate_to_fixed_point<F: FnMut(f64) -> f64>(
    problem: &mut FixedPointProblem<F>,
    x0: f64,
    options: &SolveOptions,
) -> SolveReport {
    assert!(x0 > 0.0, "starting point must be positive, got {x0}");
    assert!(options.tol > 0.0, "tolerance must be positive");
    assert!(options.oracle_calls_per_eval >= 1);

    let alpha = problem.alpha;
    let calls = options.oracle_calls_per_eval;
    let eval = |x: f64, f: &mut F| -> f64 {
        let mut acc = 0.0;
        for _ in 0..calls {
            acc += f(x);
        }
        let kernel = acc / calls as f64;
        alpha * kernel + (1.0 - alpha) * x
    };

    let mut trajectory = options.log_trajectory.then(|| vec![x0]);
    let mut tail = std::collections::VecDeque::with_capacity(TAIL_LEN);
    tail.push_back(x0);

    let mut x = x0;
    let mut iterations = 0;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    while iterations < options.max_iter {
        let next = eval(x, &mut problem.f);
        iterations += 1;
        if let Some(t) = trajectory.as_mut() {
            t.push(next);
        }
        if tail.len() == TAIL_LEN {
            tail.pop_front();
        }
        tail.push_back(next);
        let step = (next - x).abs();
        if step <= options.tol * x.max(1.0) {
            // x (not next) is the certified point: its g-residual is the
            // step just measured.
            residual = step;
            converged = true;
            break;
        }
        x = next;
    }

    SolveReport {
        x_star: x,
        iterations,
        residual,
        converged,
        alpha_used: alpha,
        alpha_clamped: problem.alpha_clamped,
        tail: tail.into_iter().collect(),
        trajectory,
    }
}

/// Diagnostics for the contraction assumption on a mixture `g`: midpoint
/// concavity, the Lipschitz estimate on g's decreasing branch, and a
/// witness point with `g(b) < b` (whose existence rules out divergence).
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionDiagnostics {
    pub concavity_violations: Vec<(f64, f64, f64)>,
    /// Max finite-difference slope magnitude after g's argmax on the grid;
    /// `None` when the grid has no decreasing branch.
    pub decreasing_lipschitz: Option<f64>,
    /// Smallest grid point `b` with `g(b) < b`, if any.
    pub descent_witness: Option<f64>,
}

/// Probes `g` on a sorted grid of at least 3 points.
pub fn check_assumption_a2<F: Fn(f64) -> f64>(
    g: F,
    grid: &[f64],
    tol: f64,
) -> AssumptionDiagnostics {
    assert!(grid.len() >= 3, "grid needs at least 3 points");
    let diag = crate::values::probe_curve(&g, grid, tol).expect("validated grid");

    let ys: Vec<f64> = grid.iter().map(|&x| g(x)).collect();
    let argmax = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let decreasing_lipschitz = (argmax + 1 < grid.len()).then(|| {
        (argmax..grid.len() - 1)
            .map(|i| ((ys[i + 1] - ys[i]) / (grid[i + 1] - grid[i])).abs())
            .fold(0.0, f64::max)
    });
    let descent_witness = grid
        .iter()
        .zip(&ys)
        .find(|(x, y)| *y < *x)
        .map(|(x, _)| *x);

    AssumptionDiagnostics {
        concavity_violations: diag.concavity_violations,
        decreasing_lipschitz,
        descent_witness,
    }
}

/// The worked test kernels: `f1(x) = 4 - (x-2)^2` with fixed point 3, and
/// `f2 = f1/2` with fixed point 2.
pub mod builtin {
    pub fn f1(x: f64) -> f64 {
        4.0 - (x - 2.0) * (x - 2.0)
    }

    pub fn f2(x: f64) -> f64 {
        f1(x) / 2.0
    }

    /// Domain bound and Lipschitz constant of `f1`/`f2` on `[0, 4.5]`.
    pub const A_BAR: f64 = 4.5;
    pub const LIPSCHITZ_F1: f64 = 5.0;
    pub const LIPSCHITZ_F2: f64 = 2.5;
}
