use std::f64::consts::E;
use std::sync::OnceLock;

use postprice::bvp::{exp_segment_samples, solve_case2_numeric};
use postprice::pricing::{build_multislot, evaluate_ratio, verify_sufficiency};
use postprice::{build_optimal, solve_optimal, CostModel, OptimalParams, Price, PricingFunction, Segment, Setup};

const QUAD: CostModel = CostModel::Quadratic { a: 1.0 };

struct Built {
    setup: Setup,
    params: OptimalParams,
    phi: PricingFunction,
}

fn built(pl: f64, ph: f64) -> Built {
    let setup = Setup::classify(QUAD, pl, ph).unwrap();
    let params = solve_optimal(&setup, 1e-9).unwrap();
    let phi = build_optimal(&setup, Some(&params)).unwrap();
    Built { setup, params, phi }
}

fn convex_cases() -> &'static [Built] {
    static B: OnceLock<Vec<Built>> = OnceLock::new();
    B.get_or_init(|| vec![built(0.3, 3.0), built(1.1, 5.0), built(0.3, 0.8)])
}

fn zero_cost() -> (Setup, PricingFunction) {
    let s = Setup::classify(CostModel::Zero, 1.0, E).unwrap();
    let phi = build_optimal(&s, None).unwrap();
    (s, phi)
}

#[test]
fn zero_cost_closed_form() {
    let (_, phi) = zero_cost();
    assert!((phi.alpha - 2.0).abs() < 1e-12);
    assert!((phi.omega - 0.5).abs() < 1e-12);
    assert_eq!(phi.price_at(0.0), Price::Finite(1.0));
    assert!((phi.price_at(1.0).value() - E).abs() < 1e-12);
    assert!(phi.price_at(phi.upper_bound + 0.01).is_infinite());
    assert!((phi.inverse_price(1.0).unwrap() - 0.5).abs() < 1e-12);
    assert!((phi.inverse_price(E).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn linear_cost_closed_form() {
    let s = Setup::classify(CostModel::Linear { q: 0.1 }, 0.2, 0.1 + 0.1 * 2f64.exp()).unwrap();
    let phi = build_optimal(&s, None).unwrap();
    assert!((phi.alpha - 3.0).abs() < 1e-9);
    assert!((phi.omega - 1.0 / 3.0).abs() < 1e-9);
    assert!((phi.price_at(1.0).value() - s.p_high).abs() < 1e-9);
}

#[test]
fn linear_analytic_matches_sampled_numeric_segment() {
    let s = Setup::classify(CostModel::Linear { q: 0.25 }, 0.5, 4.0).unwrap();
    let phi = build_optimal(&s, None).unwrap();
    let num = solve_case2_numeric(&s, 1e-11).unwrap();
    let (grid, values) = exp_segment_samples(&s, num.omega_star, 1.0, s.p_low, num.alpha_star, 10_000);
    let sampled = PricingFunction::new(s.p_low, num.omega_star, 1.0, num.alpha_star, Segment::SampledMonotone { grid, values }).unwrap();
    for i in 0..=200 {
        let y = i as f64 / 200.0;
        let (a, b) = (phi.price_at(y).value(), sampled.price_at(y).value());
        assert!((a - b).abs() < 1e-6, "y={y}: {a} vs {b}");
    }
}

#[test]
fn case1_boundary_values() {
    let b = &convex_cases()[0];
    let u = b.params.u_star.unwrap();
    assert!((b.phi.segment_value(b.params.omega_star) - 0.3).abs() < 1e-5);
    assert!((b.phi.segment_value(u) - 1.0).abs() < 1e-5);
    assert!((b.phi.segment_value(1.0) - 3.0).abs() < 1e-5);
}

#[test]
fn inverse_round_trip_on_a_grid() {
    let (_, z) = zero_cost();
    for phi in convex_cases().iter().map(|b| &b.phi).chain([&z]) {
        for i in 0..100 {
            let y = phi.omega + (phi.upper_bound - phi.omega) * (i as f64 + 0.5) / 100.0;
            let back = phi.inverse_price(phi.price_at(y).value()).unwrap();
            assert!((back - y).abs() < 1e-7, "y={y} came back as {back}");
        }
        assert!((phi.inverse_price(phi.p_low).unwrap() - phi.omega).abs() < 1e-9);
    }
}

#[test]
fn built_segments_solve_the_differential_equation() {
    for b in convex_cases() {
        let (a, hi) = (b.phi.omega, b.phi.upper_bound);
        let d = 1e-4;
        for i in 1..50 {
            let y = a + (hi - a) * i as f64 / 50.0;
            let v = b.phi.segment_value(y);
            let slope = (b.phi.segment_value(y + d) - b.phi.segment_value(y - d)) / (2.0 * d);
            let rhs = b.params.alpha_star * (v - b.setup.cost.marginal_cost(y).unwrap())
                / b.setup.conjugate_derivative(v).unwrap();
            assert!(((slope - rhs) / rhs).abs() < 1e-3, "{}: y={y}, {slope} vs {rhs}", b.setup.case);
        }
    }
}

#[test]
fn sufficiency_is_tight_at_the_optimum() {
    let (zs, z) = zero_cost();
    let all: Vec<(&Setup, &PricingFunction, f64)> = convex_cases()
        .iter()
        .map(|b| (&b.setup, &b.phi, b.params.alpha_star))
        .chain([(&zs, &z, 2.0)])
        .collect();
    for (s, phi, alpha) in all {
        let ok = verify_sufficiency(s, phi, alpha);
        assert!(ok.passed(), "{}: {ok:?}", s.case);
        let lower = verify_sufficiency(s, phi, alpha - 0.05);
        assert!(!lower.flat.passed, "{}: {lower:?}", s.case);
        assert!(!verify_sufficiency(s, phi, 0.9 * alpha).passed());
    }
}

#[test]
fn zero_threshold_fails_for_every_ratio() {
    let s = Setup::classify(CostModel::Zero, 1.0, E).unwrap();
    let phi = PricingFunction::new(1.0, 0.0, 1.0, 2.0, Segment::AnalyticExp { q: 0.0, scale: 1.0, rate: 1.0 }).unwrap();
    for alpha in [1.0, 10.0, 1e6] {
        assert!(!verify_sufficiency(&s, &phi, alpha).flat.passed);
    }
}

#[test]
fn ratio_of_the_optimal_function_is_alpha_star() {
    let (zs, z) = zero_cost();
    assert!((evaluate_ratio(&zs, &z).unwrap() - 2.0).abs() < 1e-3);
    for b in convex_cases() {
        let r = evaluate_ratio(&b.setup, &b.phi).unwrap();
        assert!((r - b.params.alpha_star).abs() < 1e-3, "{}: {r} vs {}", b.setup.case, b.params.alpha_star);
    }
}

#[test]
fn halving_the_threshold_hurts() {
    let (zs, _) = zero_cost();
    let phi = PricingFunction::new(1.0, 0.25, 0.75, 2.0, Segment::AnalyticExp { q: 0.0, scale: 1.0, rate: 2.0 }).unwrap();
    assert!(evaluate_ratio(&zs, &phi).unwrap() > 2.0 + 1e-3);

    let b = &convex_cases()[0];
    let w = b.params.omega_star / 2.0;
    let ramp = ramp(&b.setup, w);
    assert!(evaluate_ratio(&b.setup, &ramp).unwrap() > b.params.alpha_star);
}

fn ramp(s: &Setup, omega: f64) -> PricingFunction {
    let n = 1000;
    let grid: Vec<f64> = (0..=n).map(|i| omega + (1.0 - omega) * i as f64 / n as f64).collect();
    let values = grid.iter().map(|y| s.p_low + (s.p_high - s.p_low) * (y - omega) / (1.0 - omega)).collect();
    PricingFunction::new(s.p_low, omega, 1.0, 1.0, Segment::SampledMonotone { grid, values }).unwrap()
}

#[test]
fn linear_ramp_is_never_better() {
    let (zs, _) = zero_cost();
    let r = evaluate_ratio(&zs, &ramp(&zs, 0.5)).unwrap();
    assert!(r.is_finite() && r >= 2.0, "{r}");
    for b in convex_cases() {
        let r = evaluate_ratio(&b.setup, &ramp(&b.setup, b.params.omega_star)).unwrap();
        assert!(r.is_finite() && r >= b.params.alpha_star - 1e-9, "{}: {r}", b.setup.case);
    }
}

#[test]
fn json_round_trip_is_exact() {
    let (_, z) = zero_cost();
    for phi in convex_cases().iter().map(|b| &b.phi).chain([&z]) {
        let back = PricingFunction::from_json(&phi.to_json().unwrap()).unwrap();
        for i in 0..=500 {
            let y = i as f64 / 500.0;
            let (a, b) = (phi.price_at(y), back.price_at(y));
            assert!(a.is_infinite() == b.is_infinite());
            if !a.is_infinite() {
                assert!((a.value() - b.value()).abs() <= 1e-12);
            }
        }
        assert_eq!(phi.alpha, back.alpha);
    }
    assert!(PricingFunction::from_json(r#"{"p_low":1,"omega":0.5,"alpha":2,"upper_bound":0.4,"segment":{"kind":"analytic_exp","q":0,"scale":1,"rate":2}}"#).is_err());
}

#[test]
fn single_slot_multislot_is_the_single_slot_function() {
    let (zs, z) = zero_cost();
    let m = build_multislot(&[zs], 1e-9).unwrap();
    assert_eq!(m.functions[0], z);
    assert_eq!(m.alpha(), z.alpha);
}

#[test]
fn two_zero_cost_slots_use_the_inflated_upper_density() {
    let s = Setup::classify(CostModel::Zero, 1.0, 2.0).unwrap();
    let m = build_multislot(&[s, s], 1e-9).unwrap();
    let alpha = 1.0 + 4f64.ln();
    let omega = 1.0 / alpha;
    for (phi, eff) in m.functions.iter().zip(&m.effective_setups) {
        assert_eq!(eff.p_high, 4.0);
        assert!((phi.alpha - alpha).abs() < 1e-12);
        for i in 0..=100 {
            let y = omega + (1.0 - omega) * i as f64 / 100.0;
            let expected = (y / omega - 1.0).exp();
            assert!((phi.price_at(y).value() - expected).abs() < 1e-9);
        }
    }
}

#[test]
fn quadratic_slots_meet_the_inflated_boundary() {
    let a = Setup::classify(QUAD, 0.3, 3.0).unwrap();
    let b = Setup::classify(QUAD, 1.1, 5.0).unwrap();
    let m = build_multislot(&[a, b], 1e-8).unwrap();
    let need = [3.0 + b.conjugate(5.0).unwrap(), 5.0 + a.conjugate(3.0).unwrap()];
    for (phi, need) in m.functions.iter().zip(need) {
        assert!(phi.max_price() >= need - 1e-6, "{} < {need}", phi.max_price());
    }
    assert!(m.alpha() >= m.alphas[0] && m.alpha() >= m.alphas[1]);
}
