//! The online posted-price mechanism, its primal/dual bookkeeping and the
//! online primal-dual certificate.

use serde::{Deserialize, Serialize};

use crate::cost_model::Setup;
use crate::error::{Error, Result};
use crate::pricing::{Price, PricingFunction};

/// Slack on `v − p·r ≥ 0` absorbing rounding in `v = density·r`.
pub const ACCEPT_SLACK: f64 = 1e-12;
/// Requirements above this are outside the small-request regime.
pub const INFINITESIMAL_LIMIT: f64 = 0.01;

/// One single-slot request: valuation `v` for requirement `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub v: f64,
    pub r: f64,
}

impl Agent {
    pub fn new(v: f64, r: f64) -> Self {
        Agent { v, r }
    }

    /// Valuation density `v/r`.
    pub fn density(&self) -> f64 {
        self.v / self.r
    }
}

/// Whether `density` lies in `[p_low, p_high]` up to relative rounding.
pub(crate) fn density_in_bounds(density: f64, p_low: f64, p_high: f64) -> bool {
    let eps = 1e-9;
    density >= p_low * (1.0 - eps) && density <= p_high * (1.0 + eps)
}

fn validate_agent(i: usize, a: &Agent) -> Result<()> {
    if !(a.v.is_finite() && a.v >= 0.0) {
        return Err(Error::validation(format!("agent {}: valuation {} must be finite and >= 0", i + 1, a.v)));
    }
    if !(a.r > 0.0 && a.r <= 1.0) {
        return Err(Error::validation(format!("agent {}: requirement {} outside (0, 1]", i + 1, a.r)));
    }
    Ok(())
}

/// Why a request was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    /// Valuation below the posted price.
    Price,
    /// Not enough remaining capacity.
    Capacity,
    /// Valuation density outside the setup's bounds.
    DensityBounds,
}

/// Per-agent record of a mechanism run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// 1-based arrival index.
    pub n: usize,
    pub v: f64,
    pub r: f64,
    pub accepted: bool,
    pub rejection: Option<Rejection>,
    pub payment: f64,
    /// Dual variable `γ̂_n = max(v − p̂_{n−1}·r, 0)`.
    pub utility: f64,
    pub y_after: f64,
    pub price_after: Price,
    pub primal: f64,
    pub dual: f64,
}

/// Full record of a single-slot run.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismTrace {
    pub p_low: f64,
    pub omega: f64,
    /// Dual objective before any arrival, `h(p̲)`.
    pub initial_dual: f64,
    pub steps: Vec<StepRecord>,
    /// Online welfare `Σ accepted v − f(ŷ_N)`.
    pub s_online: f64,
    pub final_utilization: f64,
    pub final_price: Price,
    /// True when some request exceeds the small-request limit.
    pub outside_infinitesimal: bool,
    pub density_violations: usize,
}

impl MechanismTrace {
    pub fn final_primal(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.primal)
    }

    pub fn final_dual(&self) -> f64 {
        self.steps.last().map_or(self.initial_dual, |s| s.dual)
    }
}

/// Dual price used in `h(·)`: the posted price, capped at the top of the
/// pricing function so the infinite segment maps to a finite dual.
fn dual_price(phi: &PricingFunction, price: Price) -> f64 {
    price.value().min(phi.max_price())
}

/// Runs the posted-price mechanism on an ordered instance.
pub fn run(setup: &Setup, phi: &PricingFunction, instance: &[Agent]) -> Result<MechanismTrace> {
    for (i, a) in instance.iter().enumerate() {
        validate_agent(i, a)?;
    }
    let mut y = 0.0;
    let mut price = phi.price_at(0.0);
    let mut value_sum = 0.0;
    let mut gamma_sum = 0.0;
    let mut steps = Vec::with_capacity(instance.len());
    let mut violations = 0;
    for (i, a) in instance.iter().enumerate() {
        let p = price.value();
        let gamma = if price.is_infinite() { 0.0 } else { (a.v - p * a.r).max(0.0) };
        let rejection = if !density_in_bounds(a.density(), setup.p_low, setup.p_high) {
            violations += 1;
            Some(Rejection::DensityBounds)
        } else if price.is_infinite() || a.v - p * a.r < -ACCEPT_SLACK {
            Some(Rejection::Price)
        } else if y + a.r > 1.0 {
            Some(Rejection::Capacity)
        } else {
            None
        };
        let accepted = rejection.is_none();
        let payment = if accepted { p * a.r } else { 0.0 };
        if accepted {
            y += a.r;
            value_sum += a.v;
            price = phi.price_at(y);
        }
        gamma_sum += gamma;
        steps.push(StepRecord {
            n: i + 1,
            v: a.v,
            r: a.r,
            accepted,
            rejection,
            payment,
            utility: gamma,
            y_after: y,
            price_after: price,
            primal: value_sum - setup.cost.cost(y),
            dual: gamma_sum + setup.h(dual_price(phi, price)),
        });
    }
    Ok(MechanismTrace {
        p_low: phi.p_low,
        omega: phi.omega,
        initial_dual: setup.h(phi.p_low),
        s_online: value_sum - setup.cost.cost(y),
        final_utilization: y,
        final_price: price,
        outside_infinitesimal: instance.iter().any(|a| a.r > INFINITESIMAL_LIMIT),
        density_violations: violations,
        steps,
    })
}

/// Result of checking the online primal-dual certificate on a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub alpha: f64,
    /// Number of arrivals served at the flat price (the step that reaches ω).
    pub k: usize,
    /// False when utilization never reaches ω; the online run then serves
    /// every admissible request and the inequalities below are not required.
    pub flat_filled: bool,
    /// `P_k − D_k/α`.
    pub initial_margin: f64,
    /// Smallest `(P_n − P_{n−1}) − (D_n − D_{n−1})/α` over `n > k`.
    pub worst_incremental_margin: f64,
    pub worst_incremental_step: Option<usize>,
    /// Number of steps whose incremental margin is below `−slack`.
    pub incremental_violations: usize,
    /// `P_N − D_N/α`.
    pub final_margin: f64,
    /// Welfare bound `D_N/α`.
    pub welfare_bound: f64,
    pub initial_ok: bool,
    pub incremental_ok: bool,
    pub final_ok: bool,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.initial_ok && self.incremental_ok && self.final_ok
    }
}

/// Per-step slack on the initial and incremental inequalities.
pub const CERT_STEP_SLACK: f64 = 1e-8;
/// Slack on the final chain `P_N ≥ D_N/α`.
pub const CERT_FINAL_SLACK: f64 = 1e-6;

/// Checks the initial, incremental and final inequalities at ratio `alpha`.
pub fn certificate(trace: &MechanismTrace, alpha: f64) -> CertificateReport {
    certificate_with_slack(trace, alpha, CERT_STEP_SLACK, CERT_FINAL_SLACK)
}

pub fn certificate_with_slack(trace: &MechanismTrace, alpha: f64, step_slack: f64, final_slack: f64) -> CertificateReport {
    let reach = trace.omega - 1e-12;
    let k = trace.steps.iter().position(|s| s.y_after >= reach).map(|i| i + 1);
    let pd = |n: usize| -> (f64, f64) {
        if n == 0 {
            (0.0, trace.initial_dual)
        } else {
            let s = &trace.steps[n - 1];
            (s.primal, s.dual)
        }
    };
    let n_total = trace.steps.len();
    let (pn, dn) = pd(n_total);
    let final_margin = pn - dn / alpha;
    let Some(k) = k else {
        return CertificateReport {
            alpha,
            k: n_total,
            flat_filled: false,
            initial_margin: pn - dn / alpha,
            worst_incremental_margin: f64::INFINITY,
            worst_incremental_step: None,
            incremental_violations: 0,
            final_margin,
            welfare_bound: dn / alpha,
            initial_ok: true,
            incremental_ok: true,
            final_ok: true,
        };
    };
    let (pk, dk) = pd(k);
    let initial_margin = pk - dk / alpha;
    let mut worst = f64::INFINITY;
    let mut worst_step = None;
    let mut violations = 0;
    let mut prev = (pk, dk);
    for n in (k + 1)..=n_total {
        let cur = pd(n);
        let margin = (cur.0 - prev.0) - (cur.1 - prev.1) / alpha;
        if margin < worst {
            worst = margin;
            worst_step = Some(n);
        }
        if margin < -step_slack {
            violations += 1;
        }
        prev = cur;
    }
    CertificateReport {
        alpha,
        k,
        flat_filled: true,
        initial_margin,
        worst_incremental_margin: worst,
        worst_incremental_step: worst_step,
        incremental_violations: violations,
        final_margin,
        welfare_bound: dn / alpha,
        initial_ok: initial_margin >= -step_slack,
        incremental_ok: violations == 0,
        final_ok: final_margin >= -final_slack,
    }
}

/// Truthful and misreport utilities of agent `idx` (0-based).
///
/// Utility is always measured with the true valuation. Reporting a smaller
/// requirement is infeasible (the request would be under-served) and is
/// refused; a larger requirement is served and charged at the reported size.
pub fn misreport_utility(
    setup: &Setup,
    phi: &PricingFunction,
    instance: &[Agent],
    idx: usize,
    reported: Agent,
) -> Result<(f64, f64)> {
    let truth = *instance
        .get(idx)
        .ok_or_else(|| Error::validation(format!("agent index {idx} out of range")))?;
    if reported.r < truth.r {
        return Err(Error::validation(format!(
            "requirement underreport {} < {} is infeasible",
            reported.r, truth.r
        )));
    }
    let utility = |trace: &MechanismTrace| {
        let s = &trace.steps[idx];
        if s.accepted {
            truth.v - s.payment
        } else {
            0.0
        }
    };
    let honest = run(setup, phi, instance)?;
    let mut altered = instance.to_vec();
    altered[idx] = reported;
    let lied = run(setup, phi, &altered)?;
    Ok((utility(&honest), utility(&lied)))
}

/// A request spanning several slots; `r[t] > 0` exactly on the active slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiAgent {
    pub v: f64,
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStepRecord {
    pub n: usize,
    pub accepted: bool,
    pub payment: f64,
    pub utility: f64,
    pub y_after: Vec<f64>,
    pub price_after: Vec<Price>,
    /// Per-slot revenue minus cost, `Σ r_t·p̂_t − f_t(ŷ_t)`.
    pub slot_primal: Vec<f64>,
    /// Per-slot dual term `h_t(p̂_t)`.
    pub slot_dual: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiSlotTrace {
    pub omegas: Vec<f64>,
    pub initial_slot_dual: Vec<f64>,
    pub steps: Vec<MultiStepRecord>,
    pub s_online: f64,
    pub final_utilization: Vec<f64>,
    pub final_prices: Vec<Price>,
}

impl MultiSlotTrace {
    pub fn initial_dual(&self) -> f64 {
        self.initial_slot_dual.iter().sum()
    }
}

/// Runs the multi-slot posted-price mechanism.
pub fn run_multislot(setups: &[Setup], phis: &[PricingFunction], instance: &[MultiAgent]) -> Result<MultiSlotTrace> {
    let t_count = setups.len();
    if t_count == 0 || phis.len() != t_count {
        return Err(Error::validation(format!(
            "need one pricing function per slot: {} setups, {} functions",
            t_count,
            phis.len()
        )));
    }
    for (i, a) in instance.iter().enumerate() {
        if a.r.len() != t_count {
            return Err(Error::validation(format!("agent {}: {} slot requirements, expected {t_count}", i + 1, a.r.len())));
        }
        if !(a.v.is_finite() && a.v >= 0.0) {
            return Err(Error::validation(format!("agent {}: invalid valuation {}", i + 1, a.v)));
        }
        if a.r.iter().any(|&r| !(0.0..=1.0).contains(&r)) || a.r.iter().all(|&r| r == 0.0) {
            return Err(Error::validation(format!("agent {}: requirements must be in [0, 1], not all zero", i + 1)));
        }
    }
    let mut y = vec![0.0; t_count];
    let mut prices: Vec<Price> = phis.iter().map(|p| p.price_at(0.0)).collect();
    let mut revenue = vec![0.0; t_count];
    let mut value_sum = 0.0;
    let mut gamma_sum = 0.0;
    let slot_dual = |prices: &[Price]| -> Vec<f64> {
        (0..t_count).map(|t| setups[t].h(dual_price(&phis[t], prices[t]))).collect()
    };
    let initial_slot_dual = slot_dual(&prices);
    let mut steps = Vec::with_capacity(instance.len());
    for (i, a) in instance.iter().enumerate() {
        let posted: f64 = (0..t_count)
            .filter(|&t| a.r[t] > 0.0)
            .map(|t| a.r[t] * prices[t].value())
            .sum();
        let gamma = if posted.is_finite() { (a.v - posted).max(0.0) } else { 0.0 };
        let fits = (0..t_count).all(|t| y[t] + a.r[t] <= 1.0);
        let accepted = posted.is_finite() && a.v - posted >= -ACCEPT_SLACK && fits;
        if accepted {
            for t in 0..t_count {
                if a.r[t] > 0.0 {
                    revenue[t] += a.r[t] * prices[t].value();
                    y[t] += a.r[t];
                    prices[t] = phis[t].price_at(y[t]);
                }
            }
            value_sum += a.v;
        }
        gamma_sum += gamma;
        let slot_primal: Vec<f64> = (0..t_count).map(|t| revenue[t] - setups[t].cost.cost(y[t])).collect();
        let sd = slot_dual(&prices);
        let cost: f64 = (0..t_count).map(|t| setups[t].cost.cost(y[t])).sum();
        steps.push(MultiStepRecord {
            n: i + 1,
            accepted,
            payment: if accepted { posted } else { 0.0 },
            utility: gamma,
            y_after: y.clone(),
            price_after: prices.clone(),
            primal: value_sum - cost,
            dual: gamma_sum + sd.iter().sum::<f64>(),
            slot_primal,
            slot_dual: sd,
        });
    }
    let cost: f64 = (0..t_count).map(|t| setups[t].cost.cost(y[t])).sum();
    Ok(MultiSlotTrace {
        omegas: phis.iter().map(|p| p.omega).collect(),
        initial_slot_dual,
        steps,
        s_online: value_sum - cost,
        final_utilization: y,
        final_prices: prices,
    })
}

/// Certificate for one slot of a multi-slot run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotCertificate {
    pub slot: usize,
    pub flat_filled: bool,
    pub k: usize,
    pub initial_margin: f64,
    pub worst_incremental_margin: f64,
    pub incremental_violations: usize,
    pub passed: bool,
}

/// Per-slot certificate of a multi-slot run at ratio `alpha`.
///
/// Each slot's revenue-minus-cost must dominate `h_t(p̂_t)/α` once its
/// threshold is reached, and grow at least as fast afterwards. Summed over
/// slots together with the agents' utilities this yields `P_N ≥ D_N/α`.
pub fn certificate_multislot(trace: &MultiSlotTrace, alpha: f64, step_slack: f64) -> Vec<SlotCertificate> {
    let t_count = trace.omegas.len();
    let at = |n: usize, t: usize| -> (f64, f64) {
        if n == 0 {
            (0.0, trace.initial_slot_dual[t])
        } else {
            let s = &trace.steps[n - 1];
            (s.slot_primal[t], s.slot_dual[t])
        }
    };
    (0..t_count)
        .map(|t| {
            let reach = trace.omegas[t] - 1e-12;
            let k = trace.steps.iter().position(|s| s.y_after[t] >= reach).map(|i| i + 1);
            let Some(k) = k else {
                return SlotCertificate {
                    slot: t,
                    flat_filled: false,
                    k: trace.steps.len(),
                    initial_margin: f64::NAN,
                    worst_incremental_margin: f64::INFINITY,
                    incremental_violations: 0,
                    passed: true,
                };
            };
            let (pk, dk) = at(k, t);
            let initial_margin = pk - dk / alpha;
            let mut worst = f64::INFINITY;
            let mut violations = 0;
            let mut prev = (pk, dk);
            for n in (k + 1)..=trace.steps.len() {
                let cur = at(n, t);
                let m = (cur.0 - prev.0) - (cur.1 - prev.1) / alpha;
                worst = worst.min(m);
                if m < -step_slack {
                    violations += 1;
                }
                prev = cur;
            }
            SlotCertificate {
                slot: t,
                flat_filled: true,
                k,
                initial_margin,
                worst_incremental_margin: worst,
                incremental_violations: violations,
                passed: initial_margin >= -step_slack && violations == 0,
            }
        })
        .collect()
}
