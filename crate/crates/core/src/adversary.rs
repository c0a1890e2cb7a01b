//! Structured and random arrival instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost_model::Setup;
use crate::error::{Error, Result};
use crate::mechanism::{Agent, MultiAgent};
use crate::pricing::PricingFunction;

/// Checks `p` against the density bounds and clamps sub-1e-6 numerical overshoot.
fn fit_density(setup: &Setup, p: f64) -> Result<f64> {
    let eps = 1e-6 * setup.p_high.abs().max(1.0);
    if p < setup.p_low - eps || p > setup.p_high + eps || !p.is_finite() {
        return Err(Error::validation(format!(
            "density {p} outside [{}, {}]",
            setup.p_low, setup.p_high
        )));
    }
    Ok(p.clamp(setup.p_low, setup.p_high))
}

/// Splits `total` into pieces of size `delta` (last one smaller) at density `p`.
fn block(p: f64, total: f64, delta: f64, out: &mut Vec<Agent>) {
    let mut left = total;
    while left > 1e-15 {
        let r = if left < delta * (1.0 + 1e-9) { left } else { delta };
        out.push(Agent::new(p * r, r));
        left -= r;
    }
}

/// `⌈total/delta⌉` agents of density `p`.
pub fn identical_density(setup: &Setup, p: f64, total: f64, delta: f64) -> Result<Vec<Agent>> {
    let p = fit_density(setup, p)?;
    if !(delta > 0.0) || !(total >= 0.0) {
        return Err(Error::validation("need delta > 0 and total >= 0"));
    }
    let mut out = Vec::new();
    block(p, total, delta, &mut out);
    Ok(out)
}

/// Three-group worst case for level `rho`: density `p̲` up to `ω`, a ramp
/// priced exactly at `φ` from `ω` to `rho`, then `⌈1/Δ⌉` agents at `φ(rho)`.
pub fn worst_case_rho(setup: &Setup, phi: &PricingFunction, rho: f64, delta: f64) -> Result<Vec<Agent>> {
    if !(phi.omega - 1e-12 <= rho && rho <= phi.upper_bound + 1e-12) {
        return Err(Error::validation(format!(
            "rho={rho} outside [omega={}, upper_bound={}]",
            phi.omega, phi.upper_bound
        )));
    }
    if !(delta > 0.0 && delta <= 1e-3) {
        return Err(Error::validation(format!("delta={delta} must lie in (0, 1e-3]")));
    }
    let rho = rho.clamp(phi.omega, phi.upper_bound);
    let top = fit_density(setup, phi.segment_value(rho))?;
    let mut out = Vec::new();
    block(setup.p_low, phi.omega, delta, &mut out);
    let b = ((rho - phi.omega) / delta - 1e-9).ceil().max(0.0) as usize;
    if b > 0 {
        let step = (rho - phi.omega) / b as f64;
        for i in 1..=b {
            let p = fit_density(setup, phi.segment_value(phi.omega + i as f64 * step))?;
            out.push(Agent::new(p * step, step));
        }
    }
    let count = (1.0 / delta - 1e-9).ceil() as usize;
    out.extend(std::iter::repeat(Agent::new(top * delta, delta)).take(count));
    Ok(out)
}

/// Instance of density groups plus the index just past each group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedInstance {
    pub agents: Vec<Agent>,
    /// `(density, end index)` for each ascending density group.
    pub groups: Vec<(f64, usize)>,
}

/// Density `p̲` up to `omega`, then groups of density `η` ascending from
/// `p̲` (exclusive) to `p_end` in steps of `eta_step`, each of total
/// requirement `h′(η)` split into agents of size at most `delta`.
pub fn density_groups(
    setup: &Setup,
    omega: f64,
    p_end: f64,
    delta: f64,
    eta_step: f64,
) -> Result<GroupedInstance> {
    let p_end = fit_density(setup, p_end)?;
    if !(delta > 0.0 && eta_step > 0.0) {
        return Err(Error::validation("need delta > 0 and eta_step > 0"));
    }
    if !(0.0..=setup.rho_low).contains(&omega) {
        return Err(Error::validation(format!("omega={omega} outside [0, rho_low]")));
    }
    let mut agents = Vec::new();
    block(setup.p_low, omega, delta, &mut agents);
    let mut groups = Vec::new();
    let m = ((p_end - setup.p_low) / eta_step - 1e-9).ceil().max(0.0) as usize;
    for j in 1..=m {
        let eta = if j == m { p_end } else { setup.p_low + j as f64 * eta_step };
        block(eta, setup.hp(eta), delta, &mut agents);
        groups.push((eta, agents.len()));
    }
    Ok(GroupedInstance { agents, groups })
}

/// Distribution of valuation densities for random instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityDist {
    /// Uniform on `[p̲, p̄]`.
    Uniform,
    /// `p̄` with probability `high_prob`, else `p̲`.
    TwoPoint { high_prob: f64 },
}

/// Distribution of requirements for random instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RequirementDist {
    Constant { delta: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// Seeded random instance; identical seeds give identical instances.
pub fn random_instance(
    setup: &Setup,
    seed: u64,
    n: usize,
    density: DensityDist,
    requirement: RequirementDist,
) -> Result<Vec<Agent>> {
    match requirement {
        RequirementDist::Constant { delta } if !(delta > 0.0 && delta <= 1.0) => {
            return Err(Error::validation(format!("constant requirement {delta} outside (0, 1]")))
        }
        RequirementDist::Uniform { lo, hi } if !(lo > 0.0 && lo <= hi && hi <= 1.0) => {
            return Err(Error::validation(format!("requirement range [{lo}, {hi}] invalid")))
        }
        _ => {}
    }
    if let DensityDist::TwoPoint { high_prob } = density {
        if !(0.0..=1.0).contains(&high_prob) {
            return Err(Error::validation(format!("high_prob={high_prob} outside [0, 1]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (setup.p_low, setup.p_high);
    let agents = (0..n)
        .map(|_| {
            let d = match density {
                DensityDist::Uniform if hi > lo => rng.gen_range(lo..=hi),
                DensityDist::Uniform => lo,
                DensityDist::TwoPoint { high_prob } => {
                    if rng.gen_bool(high_prob) {
                        hi
                    } else {
                        lo
                    }
                }
            };
            let r = match requirement {
                RequirementDist::Constant { delta } => delta,
                RequirementDist::Uniform { lo, hi } if hi > lo => rng.gen_range(lo..=hi),
                RequirementDist::Uniform { lo, .. } => lo,
            };
            Agent::new(d.clamp(lo, hi) * r, r)
        })
        .collect();
    Ok(agents)
}

/// Seeded multi-slot instance: each agent picks a random non-empty set of
/// slots, a requirement per active slot and a density per active slot drawn
/// within that slot's bounds; `v` is the sum of density times requirement.
pub fn random_multislot_instance(
    setups: &[Setup],
    seed: u64,
    n: usize,
    density: DensityDist,
    requirement: RequirementDist,
) -> Result<Vec<MultiAgent>> {
    if setups.is_empty() {
        return Err(Error::validation("at least one slot is required"));
    }
    let t_count = setups.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_slot: Vec<Vec<Agent>> = setups
        .iter()
        .enumerate()
        .map(|(t, s)| random_instance(s, seed.wrapping_add(t as u64 + 1), n, density, requirement))
        .collect::<Result<_>>()?;
    let agents = (0..n)
        .map(|i| {
            let mask: u64 = rng.gen_range(1..(1u64 << t_count.min(63)));
            let mut r = vec![0.0; t_count];
            let mut v = 0.0;
            for t in 0..t_count {
                if mask >> t & 1 == 1 {
                    r[t] = per_slot[t][i].r;
                    v += per_slot[t][i].v;
                }
            }
            MultiAgent { v, r }
        })
        .collect();
    Ok(agents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost_model::CostModel;
    use approx::assert_abs_diff_eq;

    fn setup() -> Setup {
        Setup::classify(CostModel::Quadratic { a: 1.0 }, 0.3, 3.0).unwrap()
    }

    #[test]
    fn identical_density_sizes() {
        let s = setup();
        let inst = identical_density(&s, 0.3, 0.0105, 0.001).unwrap();
        assert_eq!(inst.len(), 11);
        assert_abs_diff_eq!(inst.iter().map(|a| a.r).sum::<f64>(), 0.0105, epsilon = 1e-15);
        assert!(identical_density(&s, 0.3, 0.0, 0.001).unwrap().is_empty());
        assert!(identical_density(&s, 3.5, 0.1, 0.001).is_err());
    }

    #[test]
    fn random_is_deterministic() {
        let s = setup();
        let d = DensityDist::Uniform;
        let r = RequirementDist::Uniform { lo: 1e-4, hi: 1e-3 };
        assert_eq!(random_instance(&s, 7, 100, d, r).unwrap(), random_instance(&s, 7, 100, d, r).unwrap());
        assert_ne!(random_instance(&s, 7, 100, d, r).unwrap(), random_instance(&s, 8, 100, d, r).unwrap());
        assert!(random_instance(&s, 7, 0, d, r).unwrap().is_empty());
    }
}
