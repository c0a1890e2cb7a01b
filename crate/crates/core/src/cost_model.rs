//! Supply cost functions and the quantities derived from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

/// Supply cost `f` on the unit capacity interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostModel {
    Zero,
    /// `f(y) = q·y`.
    Linear { q: f64 },
    /// `f(y) = a·y²/2`.
    Quadratic { a: f64 },
    /// `f(y) = k·y^s` with `s > 1`.
    PowerLaw { s: f64, k: f64 },
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, msg: &str| if c { Ok(()) } else { Err(Error::validation(msg)) };
        match *self {
            CostModel::Zero => Ok(()),
            CostModel::Linear { q } => ok(q.is_finite() && q >= 0.0, "linear cost requires finite q >= 0"),
            CostModel::Quadratic { a } => ok(a.is_finite() && a > 0.0, "quadratic cost requires finite a > 0"),
            CostModel::PowerLaw { s, k } => {
                ok(s.is_finite() && s > 1.0, "power-law cost requires finite s > 1")?;
                ok(k.is_finite() && k > 0.0, "power-law cost requires finite k > 0")
            }
        }
    }

    /// True for the quadratic and power-law families.
    pub fn is_strictly_convex(&self) -> bool {
        matches!(self, CostModel::Quadratic { .. } | CostModel::PowerLaw { .. })
    }

    /// Per-unit rate `q` for zero or linear cost.
    pub fn linear_rate(&self) -> Option<f64> {
        match *self {
            CostModel::Zero => Some(0.0),
            CostModel::Linear { q } => Some(q),
            _ => None,
        }
    }

    /// Cost `f(y)`; `+inf` beyond full capacity (the extended cost).
    pub fn cost(&self, y: f64) -> f64 {
        if y > 1.0 {
            return f64::INFINITY;
        }
        let y = y.max(0.0);
        match *self {
            CostModel::Zero => 0.0,
            CostModel::Linear { q } => q * y,
            CostModel::Quadratic { a } => 0.5 * a * y * y,
            CostModel::PowerLaw { s, k } => k * y.powf(s),
        }
    }

    /// Marginal cost `f′(y)`.
    pub fn marginal_cost(&self, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::domain(format!("utilization {y} outside [0, 1]")));
        }
        Ok(self.fp(y))
    }

    /// Unchecked marginal cost; `y` is clamped at zero.
    pub(crate) fn fp(&self, y: f64) -> f64 {
        let y = y.max(0.0);
        match *self {
            CostModel::Zero => 0.0,
            CostModel::Linear { q } => q,
            CostModel::Quadratic { a } => a * y,
            CostModel::PowerLaw { s, k } => k * s * y.powf(s - 1.0),
        }
    }

    /// Unchecked inverse marginal; only meaningful for strictly convex kinds.
    pub(crate) fn fp_inv(&self, p: f64) -> f64 {
        let p = p.max(0.0);
        match *self {
            CostModel::Quadratic { a } => p / a,
            CostModel::PowerLaw { s, k } => (p / (k * s)).powf(1.0 / (s - 1.0)),
            _ => f64::NAN,
        }
    }

    /// Inverse marginal `f′⁻¹(p)` on `[f′(0), f′(1)]`.
    pub fn inverse_marginal(&self, p: f64) -> Result<f64> {
        if !self.is_strictly_convex() {
            return Err(Error::Unsupported(
                "inverse marginal cost is undefined for zero or linear cost".into(),
            ));
        }
        let (lo, hi) = (self.fp(0.0), self.fp(1.0));
        if !(lo..=hi).contains(&p) {
            return Err(Error::domain(format!("price {p} outside [{lo}, {hi}]")));
        }
        Ok(self.fp_inv(p).min(1.0))
    }
}

/// Which of the structural regimes a setup falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetupCase {
    /// `c̲ < p̲ < c̄ < p̄`.
    Case1,
    /// `c̄ ≤ p̲`.
    Case2,
    /// `p̄ ≤ c̄`.
    Case3,
    /// `p̲ = p̄`.
    DegenerateEqualBounds,
}

impl std::fmt::Display for SetupCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SetupCase::Case1 => "case1",
            SetupCase::Case2 => "case2",
            SetupCase::Case3 => "case3",
            SetupCase::DegenerateEqualBounds => "degenerate_equal_bounds",
        };
        f.write_str(s)
    }
}

/// Supplier's prior information plus derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub cost: CostModel,
    pub p_low: f64,
    pub p_high: f64,
    pub c_low: f64,
    pub c_high: f64,
    pub rho_low: f64,
    pub rho_high: f64,
    pub case: SetupCase,
}

impl Setup {
    /// Validates the nice-setup conditions and derives `c̲, c̄, ρ̲, ρ̄` and the case.
    pub fn classify(cost: CostModel, p_low: f64, p_high: f64) -> Result<Setup> {
        cost.validate()?;
        if !p_low.is_finite() || !p_high.is_finite() {
            return Err(Error::validation("price bounds must be finite"));
        }
        if p_low > p_high {
            return Err(Error::validation(format!(
                "lower density bound p_low={p_low} exceeds upper bound p_high={p_high}"
            )));
        }
        let c_low = cost.fp(0.0);
        let c_high = cost.fp(1.0);
        if c_low >= p_low {
            return Err(Error::validation(format!(
                "nice-setup condition f'(0) < p_low violated: f'(0)={c_low}, p_low={p_low}"
            )));
        }
        let rho = |p: f64| {
            if cost.is_strictly_convex() && p > c_low && p < c_high {
                cost.fp_inv(p).min(1.0)
            } else {
                1.0
            }
        };
        let case = if p_low == p_high {
            SetupCase::DegenerateEqualBounds
        } else if c_high <= p_low {
            SetupCase::Case2
        } else if p_high <= c_high {
            SetupCase::Case3
        } else {
            SetupCase::Case1
        };
        Ok(Setup {
            cost,
            p_low,
            p_high,
            c_low,
            c_high,
            rho_low: rho(p_low),
            rho_high: rho(p_high),
            case,
        })
    }

    /// Convex conjugate `h(p) = sup_y p·y − f̄(y)`.
    pub fn conjugate(&self, p: f64) -> Result<f64> {
        if p < 0.0 || p.is_nan() {
            return Err(Error::domain(format!("negative price {p}")));
        }
        Ok(self.h(p))
    }

    pub(crate) fn h(&self, p: f64) -> f64 {
        let cost = &self.cost;
        if p > self.c_high {
            p - cost.cost(1.0)
        } else if p <= self.c_low || !cost.is_strictly_convex() {
            0.0
        } else {
            let y = cost.fp_inv(p).min(1.0);
            p * y - cost.cost(y)
        }
    }

    /// Derivative `h′(p)`: `f′⁻¹(p)` on `[c̲, c̄]`, 1 above.
    pub fn conjugate_derivative(&self, p: f64) -> Result<f64> {
        if p < self.c_low || p.is_nan() {
            return Err(Error::domain(format!("price {p} below f'(0)={}", self.c_low)));
        }
        Ok(self.hp(p))
    }

    pub(crate) fn hp(&self, p: f64) -> f64 {
        if p > self.c_high {
            1.0
        } else if !self.cost.is_strictly_convex() {
            0.0
        } else {
            self.cost.fp_inv(p).min(1.0)
        }
    }

    /// Profit `F_p(y) = p·y − f(y)`.
    pub fn profit(&self, p: f64, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::domain(format!(
                "utilization {y} outside [0, 1]; extended cost is infinite"
            )));
        }
        Ok(p * y - self.cost.cost(y))
    }

    /// `F_{p̲}(ω)` without range checks.
    pub(crate) fn flat_profit(&self, omega: f64) -> f64 {
        self.p_low * omega - self.cost.cost(omega)
    }

    /// Inverse of `ω ↦ F_{p̲}(ω)` on `[0, ρ̲]`.
    pub fn profit_inverse(&self, target: f64) -> Result<f64> {
        let top = self.flat_profit(self.rho_low);
        if !(target >= 0.0) || target > top * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::domain(format!(
                "profit target {target} outside [0, F(rho_low)={top}]"
            )));
        }
        let t = target.min(top);
        if t == 0.0 {
            return Ok(0.0);
        }
        let p = self.p_low;
        let w = match self.cost {
            CostModel::Zero => t / p,
            CostModel::Linear { q } => t / (p - q),
            CostModel::Quadratic { a } => {
                let disc = (p * p - 2.0 * a * t).max(0.0);
                2.0 * t / (p + disc.sqrt())
            }
            CostModel::PowerLaw { .. } => numeric::bisect(
                |w| self.flat_profit(w) - t,
                0.0,
                self.rho_low,
                1e-12,
                200,
            ),
        };
        Ok(w.min(self.rho_low))
    }
}
