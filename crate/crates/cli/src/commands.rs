//! Command implementations and their report schemas.
//!
//! Every command prints one pretty-printed JSON report to stdout;
//! diagnostics go to stderr. Reports use struct field order and ryu
//! float formatting (shortest round-trip), so identical inputs produce
//! byte-identical output.

use std::path::{Path, PathBuf};

use serde::Serialize;

use riskalloc::allocation::{
    self, evaluate_allocation, optimal_allocation, optimal_selector, optimal_value, psi_curve,
    AgentSpec, ComonotoneAllocation, LevelSelector, MarketProblem, RegularityReport,
};
use riskalloc::distortion::{risk_choquet_form, risk_quantile_form, DistortionKernel};
use riskalloc::distributions::PiecewiseMonotoneFn;
use riskalloc::duality::{
    cash_transfer_certificate, intersection_feasible, randomized_certificate_search, scenario_set,
    support_value, var_mean_certificate, Feasibility, FiniteSpace, InfeasibilityReport,
    UnboundednessCertificate, MAX_ATOMS,
};
use riskalloc::oracles::{
    brute_force_comonotone, fractional_probe, grid_gap_bound, lemma1_gap_check,
    moral_hazard_counterexample, monte_carlo_risk, remark4_check,
};
use riskalloc::{Result, RiskError};

use crate::spec::{DistributionSpec, KernelSpec, ProblemSpec};

fn print_json<T: Serialize>(report: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| RiskError::Validation(format!("report serialization: {e}")))?;
    println!("{text}");
    Ok(())
}

fn base_dir(spec_path: &Path) -> PathBuf {
    spec_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

// ---------------------------------------------------------------------------
// measure

#[derive(Serialize)]
struct MeasureEntry {
    kernel: String,
    quantile_form: f64,
    choquet_form: f64,
    difference: f64,
    domain_ok: bool,
    robust: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    regularity: Option<RegularityReport>,
}

#[derive(Serialize)]
struct MeasureReport {
    measures: Vec<MeasureEntry>,
}

pub fn cmd_measure(
    spec_path: &Path,
    kernel_id: Option<&str>,
    trunc: Option<Vec<f64>>,
    tol: f64,
) -> Result<i32> {
    let spec = ProblemSpec::load(spec_path)?;
    let total = spec.build_total(&base_dir(spec_path))?;
    let trunc = trunc.or_else(|| spec.options.trunc.clone());
    // either one kernel by shorthand/index, or every agent kernel
    let selected: Vec<(String, DistortionKernel)> = match kernel_id {
        Some(id) => {
            let ks = if let Ok(index) = id.parse::<usize>() {
                spec.agents
                    .get(index)
                    .ok_or_else(|| {
                        RiskError::Validation(format!("agent index {index} out of range"))
                    })?
                    .kernel
                    .clone()
            } else {
                KernelSpec::parse_shorthand(id)?
            };
            vec![(ks.label(), ks.build()?)]
        }
        None => spec
            .agents
            .iter()
            .map(|a| Ok((a.kernel.label(), a.kernel.build()?)))
            .collect::<Result<_>>()?,
    };
    let mut measures = Vec::new();
    for (label, kernel) in selected {
        let quantile_form = risk_quantile_form(&total, &kernel)?;
        let choquet_form = risk_choquet_form(&total, &kernel)?;
        let difference = (quantile_form - choquet_form).abs();
        if difference > tol.max(1e-9) {
            return Err(RiskError::Verification(format!(
                "the two risk forms disagree by {difference} for {label}"
            )));
        }
        let regularity = match &trunc {
            Some(levels) if !levels.is_empty() => {
                Some(allocation::regularity_check(&kernel, &total, levels)?)
            }
            _ => None,
        };
        measures.push(MeasureEntry {
            kernel: label,
            quantile_form,
            choquet_form,
            difference,
            domain_ok: true,
            robust: kernel.is_robust(),
            regularity,
        });
    }
    print_json(&MeasureReport { measures })?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// allocate

#[derive(Serialize)]
struct AgentRisk {
    index: usize,
    lambda: f64,
    risk: f64,
    weighted_risk: f64,
}

#[derive(Serialize)]
struct AllocateReport {
    value: f64,
    agents: Vec<AgentRisk>,
    selector: LevelSelector,
    components: Vec<PiecewiseMonotoneFn>,
}

pub fn cmd_allocate(spec_path: &Path, emit_csv: Option<&Path>, tol: f64) -> Result<i32> {
    let spec = ProblemSpec::load(spec_path)?;
    let agents = spec.build_agents()?;
    let total = spec.build_total(&base_dir(spec_path))?;
    let problem = MarketProblem::new(agents, total)?;
    let value = optimal_value(&problem)?;
    let selector = optimal_selector(problem.agents());
    let alloc = optimal_allocation(&problem)?;
    let cross = evaluate_allocation(&problem, &alloc)?;
    if (cross - value).abs() > tol.max(1e-9) * value.abs().max(1.0) {
        return Err(RiskError::Verification(format!(
            "allocation evaluates to {cross}, closed-form value is {value}"
        )));
    }
    let mut agent_risks = Vec::new();
    for (i, (agent, f)) in problem
        .agents()
        .iter()
        .zip(alloc.components())
        .enumerate()
    {
        let risk = riskalloc::distortion::risk_transformed(problem.total(), f, &agent.kernel)?;
        agent_risks.push(AgentRisk {
            index: i,
            lambda: agent.weight,
            risk,
            weighted_risk: agent.weight * risk,
        });
    }
    if let Some(dir) = emit_csv {
        emit_plot_data(dir, &problem, &selector, &alloc)?;
    }
    print_json(&AllocateReport {
        value,
        agents: agent_risks,
        selector,
        components: alloc.components().to_vec(),
    })?;
    Ok(0)
}

fn emit_plot_data(
    dir: &Path,
    problem: &MarketProblem,
    selector: &LevelSelector,
    alloc: &ComonotoneAllocation,
) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| RiskError::Validation(format!("{}: {e}", dir.display())))?;
    let write = |name: &str, contents: String| -> Result<()> {
        std::fs::write(dir.join(name), contents)
            .map_err(|e| RiskError::Validation(format!("{name}: {e}")))
    };
    let curve = psi_curve(problem.agents());
    let mut psi = String::from("t,psi\n");
    for p in &curve.pieces {
        psi.push_str(&format!("{},{}\n", p.start, p.value));
        psi.push_str(&format!(
            "{},{}\n",
            p.end,
            p.value + p.slope * (p.end - p.start)
        ));
    }
    write("psi.csv", psi)?;
    let mut sel = String::from("t,winner\n");
    for p in &selector.pieces {
        sel.push_str(&format!("{},{}\n", p.start, p.winner));
    }
    write("selector.csv", sel)?;
    for (i, f) in alloc.components().iter().enumerate() {
        let mut body = String::from("x,f\n");
        for &(x, y) in f.knots() {
            body.push_str(&format!("{x},{y}\n"));
        }
        let &(last_x, last_y) = f.knots().last().unwrap();
        body.push_str(&format!(
            "{},{}\n",
            last_x + 1.0,
            last_y + f.right_slope()
        ));
        write(&format!("alloc_{i}.csv"), body)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verify

#[derive(Serialize)]
struct BruteForceSection {
    claimed_value: f64,
    oracle_value: f64,
    gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap_bound: Option<f64>,
    pass: bool,
}

#[derive(Serialize)]
struct ConsistencySection {
    closed_form: f64,
    via_allocation: f64,
    pass: bool,
}

#[derive(Serialize)]
struct ProbeSection {
    bang_bang_value: f64,
    min_sampled: f64,
    samples: usize,
    pass: bool,
}

#[derive(Serialize)]
struct MonteCarloSection {
    kernel: String,
    exact: f64,
    estimate: f64,
    std_error: f64,
    pass: bool,
}

#[derive(Serialize)]
struct ConstancySection {
    reference: f64,
    max_deviation: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    consistency: ConsistencySection,
    brute_force: BruteForceSection,
    fractional_probe: ProbeSection,
    monte_carlo: Vec<MonteCarloSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    remark4: Option<ConstancySection>,
    pass: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_verify(
    spec_path: &Path,
    cells: Option<usize>,
    seed: Option<u64>,
    tol: f64,
    inject_error: f64,
) -> Result<i32> {
    let spec = ProblemSpec::load(spec_path)?;
    let agents = spec.build_agents()?;
    let total = spec.build_total(&base_dir(spec_path))?;
    let problem = MarketProblem::new(agents, total)?;
    let cells = cells.or(spec.options.cells).unwrap_or(6);
    let seed = seed.or(spec.options.seed).unwrap_or(0);

    let claimed = optimal_value(&problem)? + inject_error;

    let alloc = optimal_allocation(&problem)?;
    let via_allocation = evaluate_allocation(&problem, &alloc)?;
    let consistency = ConsistencySection {
        closed_form: claimed,
        via_allocation,
        pass: (claimed - via_allocation).abs() <= tol * claimed.abs().max(1.0),
    };

    let (assignment, oracle_value) = brute_force_comonotone(&problem, cells)?;
    let gap_bound = grid_gap_bound(&problem, &assignment.bounds).ok();
    let gap = oracle_value - claimed;
    let brute_pass = match gap_bound {
        Some(bound) => gap >= -tol && gap <= bound + tol,
        None => gap >= -tol,
    };
    let brute_force = BruteForceSection {
        claimed_value: claimed,
        oracle_value,
        gap,
        gap_bound,
        pass: brute_pass,
    };

    let probe = fractional_probe(&problem, cells, 1000, seed)?;
    let fractional = ProbeSection {
        bang_bang_value: probe.bang_bang_value,
        min_sampled: probe.min_sampled,
        samples: probe.samples,
        pass: probe.pass && probe.bang_bang_value >= claimed - tol,
    };

    let mut monte_carlo = Vec::new();
    for (i, agent) in problem.agents().iter().enumerate() {
        let exact = risk_quantile_form(problem.total(), &agent.kernel)?;
        let mc = monte_carlo_risk(problem.total(), &agent.kernel, 20_000, seed + i as u64)?;
        monte_carlo.push(MonteCarloSection {
            kernel: spec.agents[i].kernel.label(),
            exact,
            estimate: mc.estimate,
            std_error: mc.std_error,
            pass: (mc.estimate - exact).abs() <= 4.0 * mc.std_error + tol,
        });
    }

    let first = &problem.agents()[0];
    let shared_kernel = problem
        .agents()
        .iter()
        .all(|a| a.kernel == first.kernel && a.weight == 1.0);
    let remark4 = if shared_kernel {
        let r = remark4_check(
            &first.kernel,
            problem.total(),
            problem.agents().len(),
            100,
            seed,
        )?;
        Some(ConstancySection {
            reference: r.reference,
            max_deviation: r.max_deviation,
            pass: r.pass,
        })
    } else {
        None
    };

    let pass = consistency.pass
        && brute_force.pass
        && fractional.pass
        && monte_carlo.iter().all(|m| m.pass)
        && remark4.as_ref().map(|r| r.pass).unwrap_or(true);
    let report = VerifyReport {
        consistency,
        brute_force,
        fractional_probe: fractional,
        monte_carlo,
        remark4,
        pass,
    };
    print_json(&report)?;
    Ok(if pass { 0 } else { 4 })
}

// ---------------------------------------------------------------------------
// bounded

#[derive(Serialize)]
struct BoundedReport {
    verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    support_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feasible_point: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<UnboundednessCertificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    infeasibility: Option<InfeasibilityReport>,
    note: String,
}

pub fn cmd_bounded(
    spec_path: &Path,
    iters: Option<usize>,
    seed: Option<u64>,
) -> Result<i32> {
    let spec = ProblemSpec::load(spec_path)?;
    let agents = spec.build_agents()?;
    let total_dist = spec.build_total(&base_dir(spec_path))?;
    let iters = iters.or(spec.options.iters).unwrap_or(10_000);
    let seed = seed.or(spec.options.seed).unwrap_or(0);

    let Some((values, probs)) = total_dist.atoms() else {
        return Err(RiskError::Precondition(
            "boundedness analysis needs a discrete total (finite space)".into(),
        ));
    };
    if values.len() > MAX_ATOMS {
        return Err(RiskError::Precondition(format!(
            "boundedness analysis supports at most {MAX_ATOMS} atoms, got {}",
            values.len()
        )));
    }
    let space = FiniteSpace::new(probs)?;
    let total = values;

    // weight mismatch: constructive cash-transfer ray
    if agents.len() >= 2 && agents.iter().any(|a| a.weight != agents[0].weight) {
        let cert = cash_transfer_certificate(&agents, &space, &total)?
            .expect("unequal weights always yield a cash ray");
        print_json(&BoundedReport {
            verdict: "UNBOUNDED (certificate)".into(),
            support_value: None,
            feasible_point: None,
            certificate: Some(cert),
            infeasibility: None,
            note: "weights differ; transferring cash between agents drives the \
                   objective to minus infinity"
                .into(),
        })?;
        return Ok(0);
    }

    // coherent agents: the intersection criterion is exact
    if agents.iter().all(|a| a.kernel.is_convex()) {
        let sets = agents
            .iter()
            .map(|a| scenario_set(&a.kernel, &space))
            .collect::<Result<Vec<_>>>()?;
        let weights: Vec<f64> = agents.iter().map(|a| a.weight).collect();
        match intersection_feasible(&sets, &weights)? {
            Feasibility::Feasible(q) => {
                let sv = support_value(&sets, &weights, &total)?;
                print_json(&BoundedReport {
                    verdict: "BOUNDED (proved)".into(),
                    support_value: Some(sv),
                    feasible_point: Some(q),
                    certificate: None,
                    infeasibility: None,
                    note: "all kernels are convex and the weighted scenario sets \
                           intersect; the support value is the unconstrained optimum"
                        .into(),
                })?;
                return Ok(0);
            }
            Feasibility::Infeasible(report) => {
                print_json(&BoundedReport {
                    verdict: "UNBOUNDED (certificate)".into(),
                    support_value: None,
                    feasible_point: None,
                    certificate: None,
                    infeasibility: Some(report),
                    note: "coherent agents with an empty scenario intersection".into(),
                })?;
                return Ok(0);
            }
        }
    }

    // non-convex agents, equal weights: look for constructive rays
    let lambda = agents[0].weight;
    if agents.len() == 2 {
        let var_levels: Vec<Option<f64>> =
            agents.iter().map(|a| a.kernel.var_level()).collect();
        let mean = DistortionKernel::expectation();
        for (var_idx, mean_idx) in [(0usize, 1usize), (1, 0)] {
            if let Some(alpha) = var_levels[var_idx] {
                if agents[mean_idx].kernel == mean {
                    if let Some(cert) = var_mean_certificate(&space, alpha, lambda, &total)? {
                        // the certificate orders agents (VaR, E); swap if needed
                        let cert = if var_idx == 0 {
                            cert
                        } else {
                            cert.with_swapped_agents(0, 1)
                        };
                        print_json(&BoundedReport {
                            verdict: "UNBOUNDED (certificate)".into(),
                            support_value: None,
                            feasible_point: None,
                            certificate: Some(cert),
                            infeasibility: None,
                            note: "VaR-versus-expectation indicator ray".into(),
                        })?;
                        return Ok(0);
                    }
                }
            }
        }
    }
    match randomized_certificate_search(&agents, &space, iters, seed)? {
        Some(cert) => {
            print_json(&BoundedReport {
                verdict: "UNBOUNDED (certificate)".into(),
                support_value: None,
                feasible_point: None,
                certificate: Some(cert),
                infeasibility: None,
                note: "randomized search found a decreasing zero-sum ray".into(),
            })?;
            Ok(0)
        }
        None => {
            print_json(&BoundedReport {
                verdict: "UNKNOWN (no certificate found)".into(),
                support_value: None,
                feasible_point: None,
                certificate: None,
                infeasibility: None,
                note: format!(
                    "non-convex kernels; {iters} randomized candidates found no \
                     decreasing ray; this is not a proof of boundedness"
                ),
            })?;
            Ok(0)
        }
    }
}

// ---------------------------------------------------------------------------
// counterexample

#[derive(Serialize)]
struct CounterexampleReport {
    alpha: f64,
    beta: f64,
    comonotone_optimum: f64,
    non_comonotone_value: f64,
    gap: f64,
    lemma_constant: f64,
    threshold: f64,
    p_x1_positive: f64,
    pass: bool,
}

pub fn cmd_counterexample(alpha: f64, beta: f64, total_spec: &str, tol: f64) -> Result<i32> {
    let total = DistributionSpec::parse_shorthand(total_spec)?.build(Path::new("."))?;
    let report = moral_hazard_counterexample(alpha, beta, &total)?;
    let agents = vec![
        AgentSpec::new(DistortionKernel::var_at(alpha)?, 1.0)?,
        AgentSpec::new(DistortionKernel::var_at(beta)?, 1.0)?,
    ];
    let problem = MarketProblem::new(agents, total.clone())?;
    let comonotone = optimal_value(&problem)?;
    let gap_report = lemma1_gap_check(
        alpha,
        beta,
        &total,
        &[PiecewiseMonotoneFn::identity(), PiecewiseMonotoneFn::zero()],
    )?;
    let gap = comonotone - report.value;
    let pass = report.value + gap_report.c <= comonotone + tol && gap_report.all_pass;
    let out = CounterexampleReport {
        alpha,
        beta,
        comonotone_optimum: comonotone,
        non_comonotone_value: report.value,
        gap,
        lemma_constant: gap_report.c,
        threshold: report.threshold,
        p_x1_positive: report.p_x1_positive,
        pass,
    };
    print_json(&out)?;
    Ok(if pass { 0 } else { 4 })
}
