//! Offline benchmarks: fractional and exact welfare optima and the dual objective.

use serde::Serialize;

use crate::cost_model::Setup;
use crate::error::{Error, Result};
use crate::mechanism::Agent;

/// Largest instance accepted by [`exact_optimum`].
pub const EXACT_LIMIT: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OfflineKind {
    Fractional,
    ExactBinary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfflineResult {
    pub value: f64,
    /// Accepted fraction of each agent, in instance order.
    pub allocation: Vec<f64>,
    pub total_y: f64,
    pub kind: OfflineKind,
}

/// Optimum of the relaxed welfare problem via density-ordered greedy filling.
pub fn fractional_optimum(setup: &Setup, instance: &[Agent]) -> OfflineResult {
    let mut order: Vec<usize> = (0..instance.len()).collect();
    order.sort_by(|&a, &b| instance[b].density().total_cmp(&instance[a].density()));
    let cost = &setup.cost;
    let mut allocation = vec![0.0; instance.len()];
    let mut y = 0.0;
    for i in order {
        let a = instance[i];
        let d = a.density();
        if y >= 1.0 || d < cost.fp(y) {
            break;
        }
        // utilization at which marginal cost catches up with this density
        let stop = if cost.is_strictly_convex() && d < setup.c_high {
            cost.fp_inv(d).min(1.0)
        } else {
            1.0
        };
        let x = ((stop - y) / a.r).clamp(0.0, 1.0);
        allocation[i] = x;
        y += x * a.r;
        if x < 1.0 {
            break;
        }
    }
    let y = y.min(1.0);
    let value: f64 = instance.iter().zip(&allocation).map(|(a, x)| a.v * x).sum::<f64>() - cost.cost(y);
    OfflineResult { value, allocation, total_y: y, kind: OfflineKind::Fractional }
}

/// Exhaustive 0-1 optimum for at most [`EXACT_LIMIT`] agents.
pub fn exact_optimum(setup: &Setup, instance: &[Agent]) -> Result<OfflineResult> {
    let n = instance.len();
    if n > EXACT_LIMIT {
        return Err(Error::TooLarge { n, limit: EXACT_LIMIT });
    }
    let mut best = (0.0, 0u32, 0.0);
    for mask in 1u32..(1u32 << n) {
        let mut v = 0.0;
        let mut r = 0.0;
        let mut m = mask;
        while m != 0 {
            let i = m.trailing_zeros() as usize;
            v += instance[i].v;
            r += instance[i].r;
            m &= m - 1;
        }
        if r > 1.0 {
            continue;
        }
        let w = v - setup.cost.cost(r);
        if w > best.0 {
            best = (w, mask, r);
        }
    }
    let allocation = (0..n).map(|i| if best.1 >> i & 1 == 1 { 1.0 } else { 0.0 }).collect();
    Ok(OfflineResult { value: best.0, allocation, total_y: best.2, kind: OfflineKind::ExactBinary })
}

/// Dual objective `Σ max(v − p·r, 0) + h(p)` at price `p`.
pub fn dual_objective(setup: &Setup, instance: &[Agent], p: f64) -> Result<f64> {
    let h = setup.conjugate(p)?;
    Ok(instance.iter().map(|a| (a.v - p * a.r).max(0.0)).sum::<f64>() + h)
}
