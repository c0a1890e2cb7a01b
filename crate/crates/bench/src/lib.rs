//! Shared fixtures for the benchmarks.

use postprice::{build_optimal, CostModel, PricingFunction, Setup};

/// Quadratic-cost setups, one per case of the solver.
pub fn quadratic_setups() -> Vec<(&'static str, Setup)> {
    let q = CostModel::Quadratic { a: 1.0 };
    vec![
        ("case1", Setup::classify(q, 0.3, 3.0).expect("valid setup")),
        ("case2", Setup::classify(q, 1.1, 5.0).expect("valid setup")),
        ("case3", Setup::classify(q, 0.3, 0.8).expect("valid setup")),
    ]
}

/// The Case-1 setup with its optimal pricing function.
pub fn case1_pricing() -> (Setup, PricingFunction) {
    let (_, s) = quadratic_setups().remove(0);
    let phi = build_optimal(&s, None).expect("solvable setup");
    (s, phi)
}
