//! Boundary value problems behind the optimal pricing function.
//!
//! On the increasing segment the optimal price solves
//! `φ′(y) = α·(φ − f′(y)) / h′(φ)`. The helpers here shoot that ODE backward
//! from its terminal condition, find the ratios `Γ₁`, `Γ₂` (and their
//! single-segment analogues) by bisection, and locate `(α*, ω*, u*)`.

use serde::{Deserialize, Serialize};

use crate::cost_model::{Setup, SetupCase};
use crate::error::{Error, Result};
use crate::numeric;

/// Default number of RK4 steps per IVP solve inside the root finders.
pub const DEFAULT_STEPS: usize = 4_000;
/// Samples per segment when a solution is stored in a pricing function.
pub const SAMPLE_STEPS: usize = 10_000;

/// Initial upper bracket for the ratio bisections.
const RATIO_BRACKET: f64 = 64.0;
/// Number of bracket doublings before giving up.
const BRACKET_DOUBLINGS: u32 = 10;
/// Absolute tolerance for the exponential-moment quadrature.
const QUAD_TOL: f64 = 1e-13;
const DENOM_GUARD: f64 = 1e-12;
const BELOW_MARGINAL_GUARD: f64 = 1e-9;

/// Sampled solution of a backward IVP, stored on an ascending grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IvpSolution {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub step: f64,
}

impl IvpSolution {
    /// Value at the left end of the interval.
    pub fn start_value(&self) -> f64 {
        self.values[0]
    }

    /// Value at the right end of the interval.
    pub fn end_value(&self) -> f64 {
        *self.values.last().expect("non-empty solution")
    }
}

/// Optimal ratio, threshold and (Case 1 only) stitch point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalParams {
    pub alpha_star: f64,
    pub omega_star: f64,
    pub u_star: Option<f64>,
    pub case: SetupCase,
    /// Named absolute residuals of the defining equations.
    pub residuals: Vec<(String, f64)>,
}

impl OptimalParams {
    pub fn residual(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }
}

/// Right-hand side `α(φ − f′(y))/h′(φ)` with degeneracy guards.
fn ode_rhs(setup: &Setup, alpha: f64, y: f64, phi: f64) -> Result<f64> {
    let fp = setup.cost.fp(y);
    let denom = setup.hp(phi);
    if !phi.is_finite() {
        return Err(Error::Integration { y, reason: "non-finite value".into() });
    }
    if denom < DENOM_GUARD {
        return Err(Error::Integration { y, reason: format!("h'(phi) = {denom:e} below guard") });
    }
    Ok(alpha * (phi - fp) / denom)
}

fn ode_check(setup: &Setup, cap: f64, y: f64, phi: f64) -> Result<()> {
    if !phi.is_finite() {
        return Err(Error::Integration { y, reason: "non-finite value".into() });
    }
    let fp = setup.cost.fp(y);
    if phi < fp - BELOW_MARGINAL_GUARD {
        return Err(Error::Integration {
            y,
            reason: format!("value {phi} dropped below marginal cost {fp}"),
        });
    }
    if phi > cap + BELOW_MARGINAL_GUARD {
        return Err(Error::Integration { y, reason: format!("value {phi} exceeds terminal {cap}") });
    }
    Ok(())
}

/// Integrates backward from `(end, terminal)` to `start`, returning the samples.
fn integrate_backward(
    setup: &Setup,
    start: f64,
    end: f64,
    terminal: f64,
    alpha: f64,
    steps: usize,
) -> Result<IvpSolution> {
    if !(start <= end) {
        return Err(Error::domain(format!("empty interval [{start}, {end}]")));
    }
    let mut pts = numeric::rk4(
        |y, v| ode_rhs(setup, alpha, y, v),
        end,
        terminal,
        start,
        steps,
        |y, v| ode_check(setup, terminal, y, v),
    )?;
    pts.reverse();
    let step = (end - start) / steps.max(1) as f64;
    let (grid, values) = pts.into_iter().unzip();
    Ok(IvpSolution { grid, values, step })
}

/// Backward IVP on `[ω, u]` with terminal condition `φ(u) = c̄`.
pub fn solve_ivp_case1(setup: &Setup, omega: f64, u: f64, alpha: f64, steps: usize) -> Result<IvpSolution> {
    if !(omega < u && u <= 1.0 && omega >= 0.0) {
        return Err(Error::domain(format!("need 0 <= omega < u <= 1, got omega={omega}, u={u}")));
    }
    if alpha < 1.0 {
        return Err(Error::domain(format!("alpha {alpha} below 1")));
    }
    if steps < 1000 {
        return Err(Error::domain(format!("at least 1000 steps required, got {steps}")));
    }
    integrate_backward(setup, omega, u, setup.c_high, alpha, steps)
}

/// Backward IVP on `[ω, ρ]` with terminal condition `φ(ρ) = p̄`.
pub fn solve_ivp_case3(setup: &Setup, omega: f64, rho: f64, alpha: f64, steps: usize) -> Result<IvpSolution> {
    if !(omega <= rho && rho <= 1.0 && omega >= 0.0) {
        return Err(Error::domain(format!("need 0 <= omega <= rho <= 1, got omega={omega}, rho={rho}")));
    }
    integrate_backward(setup, omega, rho, setup.p_high, alpha, steps)
}

/// Shooting bisection: the α at which the backward IVP from `(end, terminal)`
/// lands on `p̲` at `start`. Larger α yields a smaller landing value.
fn shoot_ratio(
    setup: &Setup,
    start: f64,
    end: f64,
    terminal: f64,
    tol: f64,
    steps: usize,
    what: &'static str,
) -> Result<f64> {
    let target = setup.p_low;
    // true when the landing value is still above p̲, i.e. α must grow
    let above = |alpha: f64| match integrate_backward(setup, start, end, terminal, alpha, steps) {
        Ok(sol) => sol.start_value() > target,
        Err(_) => false,
    };
    if !above(1.0) {
        return Ok(1.0);
    }
    let mut hi = RATIO_BRACKET;
    let mut doublings = 0;
    while above(hi) {
        if doublings == BRACKET_DOUBLINGS {
            return Err(Error::Bracket {
                what,
                detail: format!("landing value stays above p_low={target} up to alpha={hi}"),
            });
        }
        hi *= 2.0;
        doublings += 1;
    }
    let lo = if doublings == 0 { 1.0 } else { hi / 2.0 };
    let width = bisect_width(tol);
    Ok(numeric::bisect_by(lo, hi, width * hi, 300, above))
}

fn bisect_width(tol: f64) -> f64 {
    (tol * 1e-3).clamp(1e-15, 1e-9)
}

fn require_case(setup: &Setup, allowed: &[SetupCase], op: &str) -> Result<()> {
    if allowed.contains(&setup.case) {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("{op} is not defined for {}", setup.case)))
    }
}

/// `Γ₁(ω, u)`: the ratio making the `[ω, u]` IVP land on `p̲` at `ω`.
pub fn gamma1(setup: &Setup, omega: f64, u: f64, tol: f64) -> Result<f64> {
    gamma1_with_steps(setup, omega, u, tol, DEFAULT_STEPS)
}

pub fn gamma1_with_steps(setup: &Setup, omega: f64, u: f64, tol: f64, steps: usize) -> Result<f64> {
    require_case(setup, &[SetupCase::Case1], "gamma1")?;
    if !(0.0 < omega && omega < u && u < 1.0) {
        return Err(Error::domain(format!("need 0 < omega < u < 1, got omega={omega}, u={u}")));
    }
    shoot_ratio(setup, omega, u, setup.c_high, tol, steps, "gamma1")
}

/// `Γ̂₁(ω, ρ)`: Case-3 analogue of `Γ₁` with terminal value `p̄` at `ρ`.
pub fn gamma1_hat(setup: &Setup, omega: f64, rho: f64, tol: f64) -> Result<f64> {
    gamma1_hat_with_steps(setup, omega, rho, tol, DEFAULT_STEPS)
}

pub fn gamma1_hat_with_steps(setup: &Setup, omega: f64, rho: f64, tol: f64, steps: usize) -> Result<f64> {
    require_case(setup, &[SetupCase::Case3, SetupCase::DegenerateEqualBounds], "gamma1_hat")?;
    if !(0.0 <= omega && omega <= rho && rho <= setup.rho_high + 1e-15) {
        return Err(Error::domain(format!(
            "need 0 <= omega <= rho <= rho_high, got omega={omega}, rho={rho}"
        )));
    }
    shoot_ratio(setup, omega, rho, setup.p_high, tol, steps, "gamma1_hat")
}

/// `α·∫_a^1 f′(y)·e^{−α(y−a)} dy`.
fn exp_moment(setup: &Setup, a: f64, alpha: f64) -> f64 {
    if let Some(q) = setup.cost.linear_rate() {
        return q * (1.0 - (-alpha * (1.0 - a)).exp());
    }
    let cost = setup.cost;
    alpha * numeric::simpson(|y| cost.fp(y) * (-alpha * (y - a)).exp(), a, 1.0, QUAD_TOL)
}

/// Signed residual `start·1 − α∫_a^1 f′e^{−α(y−a)} − p̄e^{−α(1−a)}`, scaled by
/// `e^{−αa}` relative to the defining equation. Its sign equals the sign of
/// `φ(1) − p̄` for the exponential segment started at `(a, start)`, and it is
/// increasing in α.
pub fn exp_segment_residual(setup: &Setup, a: f64, start: f64, alpha: f64) -> f64 {
    start - exp_moment(setup, a, alpha) - setup.p_high * (-alpha * (1.0 - a)).exp()
}

/// Ratio at which the exponential segment started at `(a, start)` ends exactly at `p̄`.
fn exp_segment_ratio(setup: &Setup, a: f64, start: f64, tol: f64, what: &'static str) -> Result<f64> {
    let resid = |alpha: f64| exp_segment_residual(setup, a, start, alpha);
    if resid(1.0) >= 0.0 {
        return Ok(1.0);
    }
    let mut hi = RATIO_BRACKET;
    let mut doublings = 0;
    while resid(hi) < 0.0 {
        if doublings == BRACKET_DOUBLINGS {
            return Err(Error::Bracket {
                what,
                detail: format!("residual still negative at alpha={hi} (a={a})"),
            });
        }
        hi *= 2.0;
        doublings += 1;
    }
    let lo = if doublings == 0 { 1.0 } else { hi / 2.0 };
    let width = bisect_width(tol);
    Ok(numeric::bisect_by(lo, hi, width * hi, 300, |x| resid(x) < 0.0))
}

/// `Γ₂(u)`: the ratio for which the segment `φ(u) = c̄`, `φ′ = α(φ − f′)`
/// reaches `p̄` exactly at full capacity.
pub fn gamma2(setup: &Setup, u: f64, tol: f64) -> Result<f64> {
    require_case(setup, &[SetupCase::Case1], "gamma2")?;
    if !(0.0 < u && u < 1.0) {
        return Err(Error::domain(format!("need 0 < u < 1, got u={u}")));
    }
    exp_segment_ratio(setup, u, setup.c_high, tol, "gamma2")
}

/// `Γ̂₂(ω)`: Case-2 analogue of `Γ₂` started at `(ω, p̲)`.
///
/// Also defined for zero and linear costs, where it reproduces the analytic
/// exponential pricing.
pub fn gamma2_hat(setup: &Setup, omega: f64, tol: f64) -> Result<f64> {
    require_case(setup, &[SetupCase::Case2, SetupCase::DegenerateEqualBounds], "gamma2_hat")?;
    if !(0.0..1.0).contains(&omega) {
        return Err(Error::domain(format!("need 0 <= omega < 1, got omega={omega}")));
    }
    if setup.case == SetupCase::DegenerateEqualBounds && setup.c_high > setup.p_low {
        return Err(Error::Unsupported("gamma2_hat needs c_high <= p_low".into()));
    }
    exp_segment_ratio(setup, omega, setup.p_low, tol, "gamma2_hat")
}

/// Closed-form exponential segment `φ(y) = e^{α(y−a)}(start − α∫_a^y f′e^{−α(s−a)}ds)`
/// sampled on `n + 1` uniform points of `[a, b]`.
pub fn exp_segment_samples(setup: &Setup, a: f64, b: f64, start: f64, alpha: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = n.max(1);
    let h = (b - a) / n as f64;
    let cost = setup.cost;
    let g = |y: f64| cost.fp(y) * (-alpha * (y - a)).exp();
    let mut grid = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    grid.push(a);
    values.push(start);
    for i in 0..n {
        let y0 = a + h * i as f64;
        let y1 = if i + 1 == n { b } else { a + h * (i + 1) as f64 };
        acc += (y1 - y0) / 6.0 * (g(y0) + 4.0 * g(0.5 * (y0 + y1)) + g(y1));
        grid.push(y1);
        values.push((alpha * (y1 - a)).exp() * (start - alpha * acc));
    }
    (grid, values)
}

/// Optimal parameters with default steps.
pub fn solve_optimal(setup: &Setup, tol: f64) -> Result<OptimalParams> {
    solve_optimal_with_steps(setup, tol, DEFAULT_STEPS)
}

/// Optimal parameters for any supported setup.
///
/// Zero and linear costs use the closed form; strictly convex costs use the
/// nested bisections for their case.
pub fn solve_optimal_with_steps(setup: &Setup, tol: f64, steps: usize) -> Result<OptimalParams> {
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    if setup.case == SetupCase::DegenerateEqualBounds {
        return Ok(degenerate(setup));
    }
    if let Some(q) = setup.cost.linear_rate() {
        return Ok(analytic_linear(setup, q));
    }
    match setup.case {
        SetupCase::Case1 => solve_case1(setup, tol, steps),
        SetupCase::Case2 => solve_case2(setup, tol),
        SetupCase::Case3 => solve_case3(setup, tol, steps),
        SetupCase::DegenerateEqualBounds => unreachable!(),
    }
}

fn degenerate(setup: &Setup) -> OptimalParams {
    OptimalParams {
        alpha_star: 1.0,
        omega_star: setup.rho_low,
        u_star: None,
        case: setup.case,
        residuals: vec![(
            "flat_equation".into(),
            (setup.flat_profit(setup.rho_low) - setup.h(setup.p_low)).abs(),
        )],
    }
}

fn analytic_linear(setup: &Setup, q: f64) -> OptimalParams {
    let alpha = 1.0 + ((setup.p_high - q) / (setup.p_low - q)).ln();
    let omega = 1.0 / alpha;
    OptimalParams {
        alpha_star: alpha,
        omega_star: omega,
        u_star: None,
        case: setup.case,
        residuals: vec![(
            "flat_equation".into(),
            (alpha * setup.flat_profit(omega) - setup.h(setup.p_low)).abs(),
        )],
    }
}

/// `ω = F⁻¹(h(p̲)/α)` or `None` when α is below 1.
fn omega_for(setup: &Setup, alpha: f64) -> Option<f64> {
    if alpha < 1.0 {
        return None;
    }
    setup.profit_inverse(setup.h(setup.p_low) / alpha).ok()
}

fn solve_case1(setup: &Setup, tol: f64, steps: usize) -> Result<OptimalParams> {
    let width = bisect_width(tol);
    // GAP(u) = Γ₂(u) − Γ₁(ω(u), u) is increasing in u.
    let gap_negative = |u: f64| -> bool {
        let g2 = match gamma2(setup, u, tol) {
            Ok(g) => g,
            Err(_) => return false,
        };
        let omega = match omega_for(setup, g2) {
            Some(w) if w > 0.0 && w < u => w,
            _ => return true,
        };
        match gamma1_with_steps(setup, omega, u, tol, steps) {
            Ok(g1) => g2 < g1,
            Err(_) => true,
        }
    };
    let u = numeric::bisect_by(0.0, 1.0, width, 300, gap_negative);
    let alpha = gamma2(setup, u, tol)?;
    let omega = omega_for(setup, alpha).ok_or_else(|| Error::Bracket {
        what: "omega from gamma2",
        detail: format!("alpha={alpha} at u={u}"),
    })?;
    if !(omega < u) {
        return Err(Error::Bracket {
            what: "critical threshold",
            detail: format!("omega={omega} not below u={u}"),
        });
    }
    let g1 = gamma1_with_steps(setup, omega, u, tol, steps)?;
    let h = setup.h(setup.p_low);
    Ok(OptimalParams {
        alpha_star: alpha,
        omega_star: omega,
        u_star: Some(u),
        case: setup.case,
        residuals: vec![
            ("flat_equation".into(), (alpha * setup.flat_profit(omega) - h).abs()),
            ("gamma1_vs_gamma2".into(), (g1 - alpha).abs()),
            ("gamma2_equation".into(), exp_segment_residual(setup, u, setup.c_high, alpha).abs()),
        ],
    })
}

/// Shared fixed-point search `h(p̲)/F(ω) = Γ(ω)` on `(0, hi)`.
fn solve_fixed_point<G>(setup: &Setup, hi: f64, tol: f64, mut gamma: G) -> Result<(f64, f64)>
where
    G: FnMut(f64) -> Result<f64>,
{
    let h = setup.h(setup.p_low);
    let width = bisect_width(tol);
    let omega = numeric::bisect_by(0.0, hi, width, 300, |w| match gamma(w) {
        Ok(g) => h / setup.flat_profit(w) > g,
        Err(_) => false,
    });
    let alpha = gamma(omega)?;
    Ok((omega, alpha))
}

fn solve_case2(setup: &Setup, tol: f64) -> Result<OptimalParams> {
    let (omega, alpha) = solve_fixed_point(setup, 1.0, tol, |w| gamma2_hat(setup, w, tol))?;
    let h = setup.h(setup.p_low);
    Ok(OptimalParams {
        alpha_star: alpha,
        omega_star: omega,
        u_star: None,
        case: setup.case,
        residuals: vec![
            ("flat_equation".into(), (alpha * setup.flat_profit(omega) - h).abs()),
            ("gamma2_hat_equation".into(), exp_segment_residual(setup, omega, setup.p_low, alpha).abs()),
        ],
    })
}

/// Numeric Case-2 route, usable for zero and linear costs as an independent
/// check on the closed form.
pub fn solve_case2_numeric(setup: &Setup, tol: f64) -> Result<OptimalParams> {
    require_case(setup, &[SetupCase::Case2], "solve_case2_numeric")?;
    solve_case2(setup, tol)
}

fn solve_case3(setup: &Setup, tol: f64, steps: usize) -> Result<OptimalParams> {
    let rho = setup.rho_high;
    let (omega, alpha) = solve_fixed_point(setup, setup.rho_low, tol, |w| {
        gamma1_hat_with_steps(setup, w, rho, tol, steps)
    })?;
    let h = setup.h(setup.p_low);
    let landing = solve_ivp_case3(setup, omega, rho, alpha, steps)?.start_value();
    Ok(OptimalParams {
        alpha_star: alpha,
        omega_star: omega,
        u_star: None,
        case: setup.case,
        residuals: vec![
            ("flat_equation".into(), (alpha * setup.flat_profit(omega) - h).abs()),
            ("gamma1_hat_landing".into(), (landing - setup.p_low).abs()),
        ],
    })
}
