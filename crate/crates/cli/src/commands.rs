use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use postprice::adversary::{
    density_groups, identical_density, random_instance, random_multislot_instance, worst_case_rho, RequirementDist,
};
use postprice::mechanism::{certificate_multislot, certificate_with_slack, run as run_mechanism, run_multislot};
use postprice::offline::fractional_optimum;
use postprice::pricing::{build_multislot, evaluate_ratio, verify_sufficiency};
use postprice::report::{fmt_num, read_instance, write_instance, write_multislot_trace, write_trace};
use postprice::{build_optimal, solve_optimal, Agent, OptimalParams, PricingFunction, Setup};
use serde::Serialize;
use serde_json::json;

use crate::config::{classify, InstanceConfig, RunConfig, SweepParameter, DEFAULT_DELTA, DEFAULT_SEED, DEFAULT_TOL};
use crate::error::{io_err, CliError};
use crate::Common;

/// Config merged with command-line overrides.
struct Context {
    config: RunConfig,
    config_dir: PathBuf,
    out: PathBuf,
    tol: f64,
    delta: f64,
    seed: u64,
    jobs: usize,
}

impl Context {
    fn new(c: &Common) -> Result<Context, CliError> {
        let config = RunConfig::load(&c.config)?;
        let tol = c.tol.or(config.tolerances.tol).unwrap_or(DEFAULT_TOL);
        let delta = c.delta.or(config.delta).unwrap_or(DEFAULT_DELTA);
        let seed = c.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
        if !(tol > 0.0 && tol < 1.0) {
            return Err(CliError::Usage(format!("tol={tol} must lie in (0, 1)")));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(CliError::Usage(format!("delta={delta} must lie in (0, 1]")));
        }
        let jobs = c.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        let out = c.out.clone().unwrap_or_else(|| config.output.dir.clone());
        let config_dir = c.config.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Context { config, config_dir, out, tol, delta, seed, jobs })
    }

    fn out_file(&self, name: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))?;
        Ok(self.out.join(name))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.out_file(name)?;
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Compute(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.out_file(name)?;
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        Ok((path, BufWriter::new(file)))
    }
}

fn solved(setup: &Setup, tol: f64) -> Result<(OptimalParams, PricingFunction), CliError> {
    let params = solve_optimal(setup, tol)?;
    let phi = build_optimal(setup, Some(&params))?;
    Ok((params, phi))
}

#[derive(Serialize)]
struct SolveReport {
    case: String,
    p_low: f64,
    p_high: f64,
    alpha_star: f64,
    omega_star: f64,
    u_star: Option<f64>,
    /// Ratio certified by the exported pricing function.
    pricing_alpha: f64,
    residuals: serde_json::Map<String, serde_json::Value>,
}

fn solve_report(setup: &Setup, params: &OptimalParams, phi: &PricingFunction) -> SolveReport {
    SolveReport {
        case: setup.case.to_string(),
        p_low: setup.p_low,
        p_high: setup.p_high,
        alpha_star: params.alpha_star,
        omega_star: params.omega_star,
        u_star: params.u_star,
        pricing_alpha: phi.alpha,
        residuals: params.residuals.iter().map(|(k, v)| (k.clone(), json!(v))).collect(),
    }
}

fn print_params(params: &OptimalParams) {
    println!("alpha_star = {:.10}", params.alpha_star);
    println!("omega_star = {:.10}", params.omega_star);
    if let Some(u) = params.u_star {
        println!("u_star     = {u:.10}");
    }
    for (name, v) in &params.residuals {
        println!("residual {name} = {v:.3e}");
    }
}

pub fn solve(c: &Common) -> Result<(), CliError> {
    let ctx = Context::new(c)?;
    let setups = ctx.config.setups()?;
    if setups.len() == 1 {
        let setup = &setups[0];
        let (params, phi) = solved(setup, ctx.tol)?;
        println!("case       = {}", setup.case);
        print_params(&params);
        let pricing = ctx.out_file("pricing.json")?;
        fs::write(&pricing, phi.to_json()? + "\n").map_err(|e| io_err(&pricing, e))?;
        let report = ctx.write_json("solve.json", &solve_report(setup, &params, &phi))?;
        println!("wrote {} and {}", report.display(), pricing.display());
        return Ok(());
    }
    let m = build_multislot(&setups, ctx.tol)?;
    let mut slots = Vec::new();
    for (t, (eff, phi)) in m.effective_setups.iter().zip(&m.functions).enumerate() {
        let params = solve_optimal(eff, ctx.tol)?;
        println!("slot {t}: case {} with effective p_high {}", eff.case, fmt_num(eff.p_high));
        print_params(&params);
        let path = ctx.out_file(&format!("pricing_slot{t}.json"))?;
        fs::write(&path, phi.to_json()? + "\n").map_err(|e| io_err(&path, e))?;
        slots.push(solve_report(eff, &params, phi));
    }
    println!("mechanism alpha = {:.10}", m.alpha());
    let report = ctx.write_json("solve.json", &json!({ "alpha": m.alpha(), "slots": slots }))?;
    println!("wrote {}", report.display());
    Ok(())
}

fn build_instance(ctx: &Context, setup: &Setup, phi: &PricingFunction) -> Result<Vec<Agent>, CliError> {
    let spec = ctx
        .config
        .instance
        .as_ref()
        .ok_or_else(|| CliError::Usage("config has no `instance` section".into()))?;
    let agents = match spec {
        InstanceConfig::Random { n, density, requirement } => {
            let req = requirement.unwrap_or(RequirementDist::Constant { delta: ctx.delta });
            random_instance(setup, ctx.seed, *n, *density, req)?
        }
        InstanceConfig::WorstCaseRho { rho: Some(rho) } => worst_case_rho(setup, phi, *rho, ctx.delta)?,
        InstanceConfig::WorstCaseRho { rho: None } => {
            let mut best: Option<(f64, Vec<Agent>)> = None;
            for i in 0..=20 {
                let rho = phi.omega + (phi.upper_bound - phi.omega) * i as f64 / 20.0;
                let inst = worst_case_rho(setup, phi, rho, ctx.delta)?;
                let ratio = fractional_optimum(setup, &inst).value / run_mechanism(setup, phi, &inst)?.s_online;
                if best.as_ref().map_or(true, |(r, _)| ratio > *r) {
                    best = Some((ratio, inst));
                }
            }
            best.map(|(_, inst)| inst).unwrap_or_default()
        }
        InstanceConfig::IdenticalDensity { density, total } => identical_density(setup, *density, *total, ctx.delta)?,
        InstanceConfig::DensityGroups { p_end, eta_step } => {
            density_groups(setup, phi.omega, *p_end, ctx.delta, *eta_step)?.agents
        }
        InstanceConfig::Csv { path } => {
            let path = ctx.config_dir.join(path);
            let file = File::open(&path).map_err(|e| io_err(&path, e))?;
            read_instance(file)?
        }
        InstanceConfig::Empty => Vec::new(),
    };
    Ok(agents)
}

pub fn run(c: &Common) -> Result<(), CliError> {
    let ctx = Context::new(c)?;
    let setups = ctx.config.setups()?;
    if setups.len() > 1 {
        return run_slots(&ctx, &setups);
    }
    let setup = &setups[0];
    let (_, phi) = solved(setup, ctx.tol)?;
    let instance = build_instance(&ctx, setup, &phi)?;
    let trace = run_mechanism(setup, &phi, &instance)?;
    let offline = fractional_optimum(setup, &instance).value;
    let ratio = if trace.s_online > 0.0 {
        offline / trace.s_online
    } else if offline <= 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    let tol = &ctx.config.tolerances;
    let cert = certificate_with_slack(&trace, phi.alpha, tol.step_slack, tol.final_slack);

    let (trace_path, w) = ctx.create("trace.csv")?;
    write_trace(&trace, w)?;
    let (_, w) = ctx.create("instance.csv")?;
    write_instance(&instance, w)?;
    let summary = json!({
        "agents": instance.len(),
        "accepted": trace.steps.iter().filter(|s| s.accepted).count(),
        "s_online": trace.s_online,
        "s_offline": offline,
        "ratio": ratio,
        "alpha": phi.alpha,
        "final_utilization": trace.final_utilization,
        "density_violations": trace.density_violations,
        "outside_infinitesimal": trace.outside_infinitesimal,
        "certificate": cert,
        "certificate_passed": cert.passed(),
    });
    ctx.write_json("run.json", &summary)?;

    println!("agents     = {} ({} accepted)", instance.len(), summary["accepted"]);
    println!("S_online   = {}", fmt_num(trace.s_online));
    println!("S_offline  = {}", fmt_num(offline));
    println!("ratio      = {}", fmt_num(ratio));
    println!("alpha      = {}", fmt_num(phi.alpha));
    if trace.density_violations > 0 {
        println!("warning: {} agents outside the density bounds were rejected", trace.density_violations);
    }
    if trace.outside_infinitesimal {
        println!("warning: some requests exceed the small-request regime; the certificate may not apply");
    }
    println!(
        "certificate: {} (initial {}, worst step {}, final {})",
        if cert.passed() { "PASS" } else { "FAIL" },
        fmt_num(cert.initial_margin),
        fmt_num(cert.worst_incremental_margin),
        fmt_num(cert.final_margin)
    );
    println!("wrote {}", trace_path.display());
    Ok(())
}

fn run_slots(ctx: &Context, setups: &[Setup]) -> Result<(), CliError> {
    let m = build_multislot(setups, ctx.tol)?;
    let instance = match &ctx.config.instance {
        Some(InstanceConfig::Random { n, density, requirement }) => {
            let req = requirement.unwrap_or(RequirementDist::Constant { delta: ctx.delta });
            random_multislot_instance(setups, ctx.seed, *n, *density, req)?
        }
        Some(InstanceConfig::Empty) => Vec::new(),
        Some(_) => return Err(CliError::Usage("multi-slot runs support `random` and `empty` instances".into())),
        None => return Err(CliError::Usage("config has no `instance` section".into())),
    };
    let trace = run_multislot(setups, &m.functions, &instance)?;
    let certs = certificate_multislot(&trace, m.alpha(), ctx.config.tolerances.step_slack);
    let (trace_path, w) = ctx.create("trace.csv")?;
    write_multislot_trace(&trace, &instance, w)?;
    let (pn, dn) = trace.steps.last().map_or((0.0, trace.initial_dual()), |s| (s.primal, s.dual));
    let passed = certs.iter().all(|c| c.passed) && pn >= dn / m.alpha() - ctx.config.tolerances.final_slack;
    ctx.write_json(
        "run.json",
        &json!({
            "agents": instance.len(),
            "s_online": trace.s_online,
            "alpha": m.alpha(),
            "final_utilization": trace.final_utilization,
            "slot_certificates": certs,
            "certificate_passed": passed,
        }),
    )?;
    println!("agents     = {}", instance.len());
    println!("S_online   = {}", fmt_num(trace.s_online));
    println!("alpha      = {}", fmt_num(m.alpha()));
    for c in &certs {
        println!("slot {}: {}", c.slot, if c.passed { "PASS" } else { "FAIL" });
    }
    println!("certificate: {}", if passed { "PASS" } else { "FAIL" });
    println!("wrote {}", trace_path.display());
    Ok(())
}

struct SweepRow {
    value: f64,
    outcome: Result<(String, OptimalParams), String>,
}

pub fn sweep(c: &Common) -> Result<(), CliError> {
    let ctx = Context::new(c)?;
    let spec = ctx
        .config
        .sweep
        .clone()
        .ok_or_else(|| CliError::Usage("config has no `sweep` section".into()))?;
    if ctx.config.setup.slots.is_some() {
        return Err(CliError::Usage("sweeps take a single-slot setup".into()));
    }
    if spec.steps == 0 {
        return Err(CliError::Usage("sweep.steps must be at least 1".into()));
    }
    let base = &ctx.config.setup;
    let mut points = spec.points();
    points.sort_by(f64::total_cmp);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs)
        .build()
        .map_err(|e| CliError::Compute(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        use rayon::prelude::*;
        points
            .par_iter()
            .map(|&value| {
                let (pl, ph) = match spec.parameter {
                    SweepParameter::PHigh => (base.p_low, value),
                    SweepParameter::PLow => (value, base.p_high),
                };
                let outcome = classify("setup", base.cost, pl, ph)
                    .map_err(|e| e.to_string())
                    .and_then(|s| solve_optimal(&s, ctx.tol).map(|p| (s.case.to_string(), p)).map_err(|e| e.to_string()));
                SweepRow { value, outcome }
            })
            .collect()
    });

    let (path, w) = ctx.create("sweep.csv")?;
    let mut csv = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| CliError::Compute(format!("{}: {e}", path.display()));
    csv.write_record([spec.parameter.name(), "case", "alpha_star", "omega_star", "u_star", "error"]).map_err(csv_err)?;
    for row in &rows {
        let record = match &row.outcome {
            Ok((case, p)) => [
                fmt_num(row.value),
                case.clone(),
                fmt_num(p.alpha_star),
                fmt_num(p.omega_star),
                p.u_star.map(fmt_num).unwrap_or_default(),
                String::new(),
            ],
            Err(e) => [fmt_num(row.value), String::new(), String::new(), String::new(), String::new(), e.clone()],
        };
        csv.write_record(&record).map_err(csv_err)?;
    }
    csv.flush().map_err(|e| io_err(&path, e))?;

    let ok: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|(_, p)| (r.value, p.alpha_star)))
        .collect();
    for (v, a) in &ok {
        println!("{} = {}  alpha_star = {}", spec.parameter.name(), fmt_num(*v), fmt_num(*a));
    }
    println!("wrote {}", path.display());
    let failed = rows.len() - ok.len();
    let bad_pair = ok.windows(2).find(|w| match spec.parameter {
        SweepParameter::PHigh => w[1].1 <= w[0].1,
        SweepParameter::PLow => w[1].1 >= w[0].1,
    });
    if let Some(w) = bad_pair {
        return Err(CliError::Compute(format!(
            "alpha_star is not strictly monotone in {}: {} at {} vs {} at {}",
            spec.parameter.name(),
            fmt_num(w[0].1),
            fmt_num(w[0].0),
            fmt_num(w[1].1),
            fmt_num(w[1].0)
        )));
    }
    if failed > 0 {
        return Err(CliError::Compute(format!("{failed} of {} sweep points failed", rows.len())));
    }
    Ok(())
}

pub fn verify(c: &Common, pricing: &Path, alpha: Option<f64>) -> Result<(), CliError> {
    let ctx = Context::new(c)?;
    let setups = ctx.config.setups()?;
    if setups.len() > 1 {
        return Err(CliError::Usage("verify takes a single-slot setup".into()));
    }
    let setup = &setups[0];
    let text = fs::read_to_string(pricing).map_err(|e| io_err(pricing, e))?;
    let phi = PricingFunction::from_json(&text).map_err(|e| CliError::Compute(format!("{}: {e}", pricing.display())))?;
    let alpha = alpha.unwrap_or(phi.alpha);
    if !(alpha.is_finite() && alpha >= 1.0) {
        return Err(CliError::Usage(format!("alpha={alpha} must be finite and >= 1")));
    }
    let report = verify_sufficiency(setup, &phi, alpha);
    let ratio = evaluate_ratio(setup, &phi);
    let line = |name: &str, passed: bool, margin: f64| {
        println!("{name:<12} {} (margin {})", if passed { "PASS" } else { "FAIL" }, fmt_num(margin));
    };
    println!("alpha        = {}", fmt_num(alpha));
    line("flat", report.flat.passed, report.flat.margin);
    line("differential", report.differential.passed, report.differential.margin);
    line("boundary", report.boundary.passed, report.boundary.margin);
    match &ratio {
        Ok(r) => println!("guaranteed ratio = {}", fmt_num(*r)),
        Err(e) => println!("guaranteed ratio unavailable: {e}"),
    }
    println!("verdict: {}", if report.passed() { "PASS" } else { "FAIL" });
    ctx.write_json(
        "verify.json",
        &json!({
            "alpha": alpha,
            "passed": report.passed(),
            "conditions": report,
            "ratio": ratio.as_ref().ok(),
            "ratio_error": ratio.as_ref().err().map(|e| e.to_string()),
        }),
    )?;
    Ok(())
}
