//! Pricing functions: construction, evaluation, inversion and scoring.

use serde::{Deserialize, Serialize};

use crate::bvp::{self, OptimalParams, SAMPLE_STEPS};
use crate::cost_model::{Setup, SetupCase};
use crate::error::{Error, Result};
use crate::numeric;

/// Posted price at some utilization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Price {
    Finite(f64),
    /// Beyond the pricing function's domain every request is refused.
    Infinite,
}

impl Price {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Price::Infinite)
    }

    /// Finite value or `f64::INFINITY`.
    pub fn value(&self) -> f64 {
        match *self {
            Price::Finite(p) => p,
            Price::Infinite => f64::INFINITY,
        }
    }
}

/// Increasing part of the pricing function, defined on `[omega, upper_bound]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    /// `q + scale·exp(rate·(y − ω))`.
    AnalyticExp { q: f64, scale: f64, rate: f64 },
    /// Piecewise-linear interpolation of non-decreasing samples.
    SampledMonotone { grid: Vec<f64>, values: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct PricingDoc {
    p_low: f64,
    omega: f64,
    alpha: f64,
    upper_bound: f64,
    segment: Segment,
}

/// Three-segment pricing function: flat at `p_low` on `[0, omega)`, increasing
/// on `[omega, upper_bound]`, infinite beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PricingDoc", into = "PricingDoc")]
pub struct PricingFunction {
    pub p_low: f64,
    pub omega: f64,
    pub upper_bound: f64,
    pub alpha: f64,
    segment: Segment,
    /// Cumulative integral of the interpolant at each grid point (sampled only).
    prefix: Vec<f64>,
}

impl TryFrom<PricingDoc> for PricingFunction {
    type Error = Error;
    fn try_from(d: PricingDoc) -> Result<Self> {
        PricingFunction::new(d.p_low, d.omega, d.upper_bound, d.alpha, d.segment)
    }
}

impl From<PricingFunction> for PricingDoc {
    fn from(p: PricingFunction) -> Self {
        PricingDoc {
            p_low: p.p_low,
            omega: p.omega,
            alpha: p.alpha,
            upper_bound: p.upper_bound,
            segment: p.segment,
        }
    }
}

const EDGE_TOL: f64 = 1e-12;

impl PricingFunction {
    /// Validates shape and precomputes integration tables.
    pub fn new(p_low: f64, omega: f64, upper_bound: f64, alpha: f64, segment: Segment) -> Result<Self> {
        let finite = [p_low, omega, upper_bound, alpha].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("pricing parameters must be finite"));
        }
        if !(0.0 <= omega && omega <= upper_bound && upper_bound <= 1.0) {
            return Err(Error::validation(format!(
                "need 0 <= omega <= upper_bound <= 1, got omega={omega}, upper_bound={upper_bound}"
            )));
        }
        let mut prefix = Vec::new();
        match &segment {
            Segment::AnalyticExp { q, scale, rate } => {
                if !(q.is_finite() && scale.is_finite() && rate.is_finite() && *scale >= 0.0 && *rate >= 0.0) {
                    return Err(Error::validation("analytic segment needs finite q and non-negative scale, rate"));
                }
            }
            Segment::SampledMonotone { grid, values } => {
                if grid.is_empty() || grid.len() != values.len() {
                    return Err(Error::validation("sampled segment needs equal-length, non-empty grid and values"));
                }
                if grid.iter().chain(values).any(|v| !v.is_finite()) {
                    return Err(Error::validation("sampled segment contains non-finite entries"));
                }
                if grid.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::validation("sampled grid must be strictly increasing"));
                }
                if values.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::validation("sampled values must be non-decreasing"));
                }
                let (g0, gn) = (grid[0], grid[grid.len() - 1]);
                if (g0 - omega).abs() > 1e-9 || (gn - upper_bound).abs() > 1e-9 {
                    return Err(Error::validation(format!(
                        "sampled grid [{g0}, {gn}] must span [omega, upper_bound] = [{omega}, {upper_bound}]"
                    )));
                }
                prefix.reserve(grid.len());
                prefix.push(0.0);
                for i in 1..grid.len() {
                    let area = 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
                    prefix.push(prefix[i - 1] + area);
                }
            }
        }
        Ok(PricingFunction { p_low, omega, upper_bound, alpha, segment, prefix })
    }

    pub fn segment(&self) -> &Segment {
        &self.segment
    }

    /// Increasing-segment value, `y` clamped into `[omega, upper_bound]`.
    pub fn segment_value(&self, y: f64) -> f64 {
        let y = y.clamp(self.omega, self.upper_bound);
        match &self.segment {
            Segment::AnalyticExp { q, scale, rate } => q + scale * (rate * (y - self.omega)).exp(),
            Segment::SampledMonotone { grid, values } => {
                let i = grid.partition_point(|&g| g <= y);
                if i == 0 {
                    return values[0];
                }
                if i == grid.len() {
                    return values[i - 1];
                }
                let (x0, x1) = (grid[i - 1], grid[i]);
                let t = (y - x0) / (x1 - x0);
                values[i - 1] + t * (values[i] - values[i - 1])
            }
        }
    }

    /// Posted price at utilization `y`.
    pub fn price_at(&self, y: f64) -> Price {
        if y < self.omega {
            Price::Finite(self.p_low)
        } else if y <= self.upper_bound + EDGE_TOL {
            Price::Finite(self.segment_value(y))
        } else {
            Price::Infinite
        }
    }

    /// Highest finite price, attained at `upper_bound`.
    pub fn max_price(&self) -> f64 {
        self.segment_value(self.upper_bound)
    }

    /// Utilization at which the increasing segment reaches price `p`.
    pub fn inverse_price(&self, p: f64) -> Result<f64> {
        let top = self.max_price();
        let tol = 1e-12 * top.abs().max(1.0);
        if !(p >= self.p_low - tol && p <= top + tol) {
            return Err(Error::domain(format!("price {p} outside [{}, {top}]", self.p_low)));
        }
        if p <= self.p_low {
            return Ok(self.omega);
        }
        let y = match &self.segment {
            Segment::AnalyticExp { q, scale, rate } => {
                if *scale == 0.0 || *rate == 0.0 {
                    self.omega
                } else {
                    self.omega + ((p - q) / scale).ln() / rate
                }
            }
            Segment::SampledMonotone { grid, values } => {
                let i = values.partition_point(|&v| v < p);
                if i == 0 {
                    grid[0]
                } else if i == values.len() {
                    grid[i - 1]
                } else {
                    let (v0, v1) = (values[i - 1], values[i]);
                    let t = if v1 > v0 { (p - v0) / (v1 - v0) } else { 0.0 };
                    grid[i - 1] + t * (grid[i] - grid[i - 1])
                }
            }
        };
        Ok(y.clamp(self.omega, self.upper_bound))
    }

    /// `∫_ω^ρ φ(y) dy` for `ρ ∈ [ω, upper_bound]`.
    pub fn segment_integral(&self, rho: f64) -> f64 {
        let rho = rho.clamp(self.omega, self.upper_bound);
        match &self.segment {
            Segment::AnalyticExp { q, scale, rate } => {
                let len = rho - self.omega;
                if *rate == 0.0 {
                    (q + scale) * len
                } else {
                    q * len + scale / rate * (rate * len).exp_m1()
                }
            }
            Segment::SampledMonotone { grid, .. } => {
                let i = grid.partition_point(|&g| g <= rho);
                if i == 0 {
                    return 0.0;
                }
                let base = self.prefix[i - 1];
                let x0 = grid[i - 1];
                base + 0.5 * (self.segment_value(x0) + self.segment_value(rho)) * (rho - x0)
            }
        }
    }

    /// Replace the certified ratio.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::validation(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::validation(format!("malformed pricing JSON: {e}")))
    }
}

/// Corollary-3 style exponential pricing for zero or linear cost.
fn build_linear(setup: &Setup, q: f64) -> Result<PricingFunction> {
    let params = bvp::solve_optimal(setup, 1e-8)?;
    let omega = params.omega_star;
    PricingFunction::new(
        setup.p_low,
        omega,
        setup.rho_high,
        params.alpha_star,
        Segment::AnalyticExp { q, scale: setup.p_low - q, rate: 1.0 / omega },
    )
}

/// Builds the optimal pricing function. `params` is solved on demand when absent.
pub fn build_optimal(setup: &Setup, params: Option<&OptimalParams>) -> Result<PricingFunction> {
    if let Some(q) = setup.cost.linear_rate() {
        return build_linear(setup, q);
    }
    let solved;
    let params = match params {
        Some(p) => p,
        None => {
            solved = bvp::solve_optimal(setup, 1e-8)?;
            &solved
        }
    };
    let omega = params.omega_star;
    let alpha = params.alpha_star;
    let h_over_f = setup.h(setup.p_low) / setup.flat_profit(omega);
    let tol = 1e-10;
    let (grid, values, cert_alpha) = match setup.case {
        SetupCase::DegenerateEqualBounds => (vec![omega], vec![setup.p_low], alpha),
        SetupCase::Case1 => {
            let u = params
                .u_star
                .ok_or_else(|| Error::Inconsistent("case 1 parameters lack u*".into()))?;
            let alpha1 = bvp::gamma1(setup, omega, u, tol)?;
            let left = bvp::solve_ivp_case1(setup, omega, u, alpha1, SAMPLE_STEPS)?;
            let (g2, v2) = bvp::exp_segment_samples(setup, u, 1.0, setup.c_high, alpha, SAMPLE_STEPS);
            let stitch = (left.end_value() - v2[0]).abs();
            if stitch > 1e-6 {
                return Err(Error::Inconsistent(format!("stitch mismatch {stitch:e} at u*={u}")));
            }
            let mut grid = left.grid;
            let mut values = left.values;
            grid.extend_from_slice(&g2[1..]);
            values.extend_from_slice(&v2[1..]);
            (grid, values, alpha.max(alpha1))
        }
        SetupCase::Case2 => {
            let (g, v) = bvp::exp_segment_samples(setup, omega, 1.0, setup.p_low, alpha, SAMPLE_STEPS);
            (g, v, alpha)
        }
        SetupCase::Case3 => {
            let sol = bvp::solve_ivp_case3(setup, omega, setup.rho_high, alpha, SAMPLE_STEPS)?;
            (sol.grid, sol.values, alpha)
        }
    };
    let start_gap = (values[0] - setup.p_low).abs();
    if start_gap > 1e-6 {
        return Err(Error::Inconsistent(format!("price at omega off by {start_gap:e}")));
    }
    let end_gap = (values[values.len() - 1] - setup.p_high).abs();
    if end_gap > 1e-6 {
        return Err(Error::Inconsistent(format!("terminal price off p_high by {end_gap:e}")));
    }
    let upper = *grid.last().expect("non-empty grid");
    PricingFunction::new(
        setup.p_low,
        omega,
        upper,
        cert_alpha.max(h_over_f),
        Segment::SampledMonotone { grid, values },
    )
}

/// Outcome of one sufficient condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub passed: bool,
    /// Smallest slack found; negative means violated.
    pub margin: f64,
}

/// Per-condition results of [`verify_sufficiency`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SufficiencyReport {
    pub flat: ConditionCheck,
    pub differential: ConditionCheck,
    pub boundary: ConditionCheck,
}

impl SufficiencyReport {
    pub fn passed(&self) -> bool {
        self.flat.passed && self.differential.passed && self.boundary.passed
    }
}

/// Checks the threshold, differential-inequality and boundary conditions at ratio `alpha`.
pub fn verify_sufficiency(setup: &Setup, phi: &PricingFunction, alpha: f64) -> SufficiencyReport {
    let h_low = setup.h(setup.p_low);
    let flat_margin = if phi.omega <= setup.rho_low + EDGE_TOL {
        setup.flat_profit(phi.omega) - h_low / alpha
    } else {
        -(phi.omega - setup.rho_low)
    };
    let flat = ConditionCheck { passed: flat_margin >= -1e-8, margin: flat_margin };

    let (a, b) = (phi.omega, phi.upper_bound);
    let spacing = 1e-3;
    let d = 0.5 * spacing;
    let mut worst = f64::INFINITY;
    if b - a > 2.0 * d {
        let n = ((b - a) / spacing).ceil() as usize;
        for i in 0..=n {
            let y = (a + i as f64 * spacing).clamp(a + d, b - d);
            let slope = (phi.segment_value(y + d) - phi.segment_value(y - d)) / (2.0 * d);
            let v = phi.segment_value(y);
            let hp = setup.hp(v);
            let rhs = if hp > 0.0 { alpha * (v - setup.cost.fp(y)) / hp } else { f64::INFINITY };
            let allowed = rhs * (1.0 + 1e-3) + 1e-9;
            worst = worst.min(allowed - slope);
        }
    }
    let differential = ConditionCheck { passed: worst >= 0.0, margin: worst };

    let start = (phi.segment_value(a) - setup.p_low).abs();
    let end = phi.segment_value(b) - setup.p_high;
    let boundary_margin = (1e-8 - start).min(end + 1e-8);
    let boundary = ConditionCheck { passed: boundary_margin >= 0.0, margin: (-start).min(end) };

    SufficiencyReport { flat, differential, boundary }
}

/// Worst-case ratio guaranteed by an arbitrary pricing function: the maximum
/// of the threshold term, the full-utilization term and the worst interior level.
pub fn evaluate_ratio(setup: &Setup, phi: &PricingFunction) -> Result<f64> {
    let omega = phi.omega;
    if !(omega > 0.0 && omega <= setup.rho_low + 1e-9) {
        return Err(Error::validation(format!(
            "threshold omega={omega} must lie in (0, rho_low={}]",
            setup.rho_low
        )));
    }
    if (phi.segment_value(omega) - setup.p_low).abs() > 1e-6 {
        return Err(Error::validation("pricing function must start at p_low"));
    }
    let top = phi.max_price();
    if top < setup.c_high.min(setup.p_high) - 1e-9 {
        return Err(Error::validation(format!(
            "pricing function ends at {top}, below min(c_high, p_high)"
        )));
    }
    let rho_bar = if setup.p_high <= top { phi.inverse_price(setup.p_high)? } else { phi.upper_bound };
    let welfare = |rho: f64| setup.p_low * omega + phi.segment_integral(rho) - setup.cost.cost(rho);
    let term = |rho: f64| setup.h(phi.segment_value(rho)) / welfare(rho);

    let t1 = setup.h(setup.p_low) / setup.flat_profit(omega);
    let t2 = setup.h(setup.p_high) / welfare(rho_bar);

    let step = 1e-3;
    let mut best = (omega, term(omega));
    let n = ((rho_bar - omega) / step).ceil().max(0.0) as usize;
    for i in 0..=n {
        let r = (omega + i as f64 * step).min(rho_bar);
        let t = term(r);
        if t > best.1 {
            best = (r, t);
        }
    }
    let lo = (best.0 - step).max(omega);
    let hi = (best.0 + step).min(rho_bar);
    let (_, refined) = numeric::golden_max(term, lo, hi, 1e-10);
    let t3 = best.1.max(refined);
    Ok(t1.max(t2).max(t3))
}

/// Per-slot pricing for the multi-slot model.
#[derive(Debug, Clone)]
pub struct MultiSlotPricing {
    pub functions: Vec<PricingFunction>,
    pub alphas: Vec<f64>,
    /// Single-slot setups with the inflated upper density.
    pub effective_setups: Vec<Setup>,
}

impl MultiSlotPricing {
    /// Ratio guaranteed for the whole mechanism.
    pub fn alpha(&self) -> f64 {
        self.alphas.iter().copied().fold(1.0, f64::max)
    }
}

/// Builds one pricing function per slot with terminal price
/// `p̄_t + Σ_{t̂≠t} h_t̂(p̄_t̂)`.
pub fn build_multislot(setups: &[Setup], tol: f64) -> Result<MultiSlotPricing> {
    if setups.is_empty() {
        return Err(Error::validation("at least one slot is required"));
    }
    let convex = setups[0].cost.is_strictly_convex();
    if setups.iter().any(|s| s.cost.is_strictly_convex() != convex) {
        return Err(Error::validation(
            "slots must be all strictly convex or all zero/linear cost",
        ));
    }
    let h_high: Vec<f64> = setups.iter().map(|s| s.h(s.p_high)).collect();
    let total: f64 = h_high.iter().sum();
    let mut out = MultiSlotPricing { functions: vec![], alphas: vec![], effective_setups: vec![] };
    for (t, s) in setups.iter().enumerate() {
        let tag = |e: Error| Error::Slot { slot: t, source: Box::new(e) };
        let p_eff = s.p_high + (total - h_high[t]);
        let eff = Setup::classify(s.cost, s.p_low, p_eff).map_err(tag)?;
        let params = bvp::solve_optimal(&eff, tol).map_err(tag)?;
        let phi = build_optimal(&eff, Some(&params)).map_err(tag)?;
        out.alphas.push(phi.alpha);
        out.functions.push(phi);
        out.effective_setups.push(eff);
    }
    Ok(out)
}
