//! Independent verification oracles.
//!
//! Everything here cross-checks the closed-form allocation machinery
//! through a different route: exhaustive enumeration of grid-constant
//! marginal allocations evaluated through the per-agent quantile form
//! (never through the `Psi` integral), random fractional probes of the
//! bang-bang claim, the non-comonotone moral-hazard pair that beats every
//! admissible allocation, the strict-gap constant separating the two, a
//! seeded Monte Carlo estimator with bootstrap errors, and the constancy
//! of the aggregate risk under a shared kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::allocation::{
    evaluate_allocation, AgentSpec, ComonotoneAllocation, MarketProblem,
};
use crate::distortion::{risk_quantile_form, DistortionKernel};
use crate::distributions::{DistKind, LossDistribution, PiecewiseMonotoneFn};
use crate::error::{Result, RiskError};
use crate::exec;

/// Enumeration budget: `n_agents ^ cells` may not exceed this.
pub const MAX_ASSIGNMENTS: usize = 1_000_000;

/// Largest admissible cell count for the brute-force search.
pub const MAX_CELLS: usize = 8;

/// A grid-constant allocation: `owners[j]` owns `[bounds[j], bounds[j+1])`
/// and the final owner extends beyond the last bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridAssignment {
    pub bounds: Vec<f64>,
    pub owners: Vec<usize>,
}

/// Cell starts for a problem: aligned to the total's quantile breakpoints
/// when the total is atomic and they fit in `cells` (the region beyond the
/// last atom carries no mass and is folded into the last cell), thinned
/// evenly otherwise; equal-probability quantile cuts for continuous totals.
pub fn grid_bounds(problem: &MarketProblem, cells: usize) -> Result<Vec<f64>> {
    if cells == 0 {
        return Err(RiskError::Precondition("need at least one cell".into()));
    }
    let total = problem.total();
    if let Some((values, _)) = total.atoms() {
        let mut edges = vec![0.0];
        edges.extend(values[..values.len() - 1].iter().copied());
        edges.dedup();
        if edges.len() <= cells {
            return Ok(edges);
        }
        // thin evenly, always keeping the first and last candidates
        let k = edges.len();
        let mut picked: Vec<f64> = (0..cells)
            .map(|i| edges[i * (k - 1) / (cells - 1).max(1)])
            .collect();
        picked.dedup();
        Ok(picked)
    } else {
        let mut bounds = vec![0.0];
        for j in 1..cells {
            bounds.push(total.quantile_unchecked(j as f64 / cells as f64));
        }
        bounds.dedup();
        Ok(bounds)
    }
}

/// Random fractional shares for one cell: positive entries normalized to
/// sum exactly to one (the last entry absorbs the rounding).
fn random_share_column(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut col: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-9).collect();
    let s: f64 = col.iter().sum();
    for v in col.iter_mut() {
        *v /= s;
    }
    let head: f64 = col[..n - 1].iter().sum();
    col[n - 1] = 1.0 - head;
    col
}

fn shares_for(owners: &[usize], n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            owners
                .iter()
                .map(|&o| if o == i { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

fn decode_owners(mut index: usize, n: usize, cells: usize) -> Vec<usize> {
    // big-endian digits: index order is lexicographic assignment order
    let mut owners = vec![0usize; cells];
    for j in (0..cells).rev() {
        owners[j] = index % n;
        index /= n;
    }
    owners
}

/// Exhaustive minimum over all `n ^ cells` grid-constant integer
/// assignments, each evaluated through the per-agent quantile form. On a
/// grid aligned to the quantile breakpoints of an atomic total this equals
/// the closed-form optimal value exactly.
pub fn brute_force_comonotone(
    problem: &MarketProblem,
    cells: usize,
) -> Result<(GridAssignment, f64)> {
    if cells > MAX_CELLS {
        return Err(RiskError::Precondition(format!(
            "cells = {cells} exceeds the limit {MAX_CELLS}; use fewer cells"
        )));
    }
    let bounds = grid_bounds(problem, cells)?;
    let n = problem.agents().len();
    let k = bounds.len();
    let count = n.checked_pow(k as u32).filter(|&c| c <= MAX_ASSIGNMENTS);
    let Some(count) = count else {
        return Err(RiskError::Precondition(format!(
            "{n}^{k} assignments exceed the {MAX_ASSIGNMENTS} budget; use fewer cells"
        )));
    };
    let evaluate = |index: usize| -> f64 {
        let owners = decode_owners(index, n, k);
        ComonotoneAllocation::from_marginals(&bounds, &shares_for(&owners, n))
            .and_then(|alloc| evaluate_allocation(problem, &alloc))
            .unwrap_or(f64::INFINITY)
    };
    let (best_index, best_value) =
        exec::min_indexed(count, evaluate).expect("at least one assignment");
    if !best_value.is_finite() {
        return Err(RiskError::Domain(
            "every grid assignment has divergent risk".into(),
        ));
    }
    let owners = decode_owners(best_index, n, k);
    Ok((GridAssignment { bounds, owners }, best_value))
}

/// Random fractional probe of the bang-bang claim.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    /// Best integer (bang-bang) assignment value on the same grid.
    pub bang_bang_value: f64,
    /// Minimum over the sampled fractional assignments (sample 0 is the
    /// bang-bang optimum itself, so the probe set contains it).
    pub min_sampled: f64,
    pub samples: usize,
    /// No fractional sample beat the bang-bang value beyond tolerance.
    pub pass: bool,
}

/// Sample random fractional marginal-share assignments on the brute-force
/// grid and check none beats the bang-bang optimum by more than `1e-9`.
pub fn fractional_probe(
    problem: &MarketProblem,
    cells: usize,
    samples: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if samples == 0 {
        return Err(RiskError::Precondition("need at least one sample".into()));
    }
    let (best, bang_bang_value) = brute_force_comonotone(problem, cells)?;
    let bounds = best.bounds.clone();
    let n = problem.agents().len();
    let k = bounds.len();
    let values = exec::map_collect(samples, |trial| {
        if trial == 0 {
            let shares = shares_for(&best.owners, n);
            let alloc = ComonotoneAllocation::from_marginals(&bounds, &shares)
                .expect("bang-bang optimum is admissible");
            return evaluate_allocation(problem, &alloc).unwrap_or(f64::INFINITY);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let cols: Vec<Vec<f64>> = (0..k).map(|_| random_share_column(&mut rng, n)).collect();
        let shares: Vec<Vec<f64>> = (0..n)
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect();
        ComonotoneAllocation::from_marginals(&bounds, &shares)
            .and_then(|alloc| evaluate_allocation(problem, &alloc))
            .unwrap_or(f64::INFINITY)
    });
    let min_sampled = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ProbeReport {
        bang_bang_value,
        min_sampled,
        samples,
        pass: min_sampled >= bang_bang_value - 1e-9,
    })
}

/// The moral-hazard pair: `X1 = X0 1{X0 > VaR_alpha(X0)}`, `X2 = X0 - X1`.
#[derive(Debug, Clone, Serialize)]
pub struct MoralHazardReport {
    pub alpha: f64,
    pub beta: f64,
    /// `VaR_alpha(X0)`: the payout of agent 1 switches on above this.
    pub threshold: f64,
    /// `VaR_alpha(X1) + VaR_beta(X2) = VaR_{alpha+beta-1}(X0)`.
    pub value: f64,
    /// `P(X1 > 0) = 1 - alpha`, also the shift in the identity
    /// `F_{X2}(x) = F_{X0}(x) + (1 - alpha)` below the threshold.
    pub p_x1_positive: f64,
}

fn continuous_strictly_increasing(total: &LossDistribution) -> bool {
    matches!(
        total.kind,
        DistKind::Uniform { .. } | DistKind::Exponential { .. }
    )
}

fn check_counterexample_preconditions(
    alpha: f64,
    beta: f64,
    total: &LossDistribution,
) -> Result<()> {
    if !(alpha > 0.0 && alpha < beta && beta < 1.0) {
        return Err(RiskError::Precondition(format!(
            "need 0 < alpha < beta < 1, got alpha = {alpha}, beta = {beta}"
        )));
    }
    if alpha + beta <= 1.0 {
        return Err(RiskError::Precondition(format!(
            "need alpha + beta > 1, got {}",
            alpha + beta
        )));
    }
    if !continuous_strictly_increasing(total) {
        return Err(RiskError::Precondition(
            "total must be a continuous family with strictly increasing CDF \
             (uniform or exponential)"
                .into(),
        ));
    }
    if total.min_support() < 0.0 {
        return Err(RiskError::Precondition(
            "total must be positive almost surely".into(),
        ));
    }
    Ok(())
}

/// The non-comonotone allocation that undercuts every admissible one:
/// agent 1 takes the total only above its `alpha`-quantile, making its
/// VaR vanish, and agent 2's `beta`-VaR collapses to the
/// `(alpha+beta-1)`-quantile of the total.
pub fn moral_hazard_counterexample(
    alpha: f64,
    beta: f64,
    total: &LossDistribution,
) -> Result<MoralHazardReport> {
    check_counterexample_preconditions(alpha, beta, total)?;
    Ok(MoralHazardReport {
        alpha,
        beta,
        threshold: total.quantile(alpha)?,
        value: total.quantile(alpha + beta - 1.0)?,
        p_x1_positive: 1.0 - alpha,
    })
}

/// One candidate of a Lemma-1 strict-gap check.
#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    /// `VaR_alpha(f(X0)) + VaR_beta(X0 - f(X0))`.
    pub lhs: f64,
    pub pass: bool,
}

/// The strict gap between admissible allocations and the moral-hazard
/// value: every admissible split stays above `c + VaR_{alpha+beta-1}(X0)`
/// with `c = (VaR_alpha(X0) - VaR_{alpha+beta-1}(X0)) / 2`.
#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub c: f64,
    /// `VaR_{alpha+beta-1}(X0)`, the unreachable non-comonotone value.
    pub base_value: f64,
    pub rows: Vec<GapRow>,
    pub all_pass: bool,
}

/// Evaluate the Lemma-1 inequality for each candidate `f` (with `f` and
/// `id - f` non-negative and non-decreasing). VaR commutes with each
/// non-decreasing continuous candidate, which is how the left side is
/// evaluated.
pub fn lemma1_gap_check(
    alpha: f64,
    beta: f64,
    total: &LossDistribution,
    candidates: &[PiecewiseMonotoneFn],
) -> Result<GapReport> {
    check_counterexample_preconditions(alpha, beta, total)?;
    for (i, f) in candidates.iter().enumerate() {
        if !f.is_allocation_component(1e-9) {
            return Err(RiskError::Validation(format!(
                "candidate {i} is not a 1-Lipschitz non-decreasing function with f(0) = 0"
            )));
        }
    }
    let q_alpha = total.quantile(alpha)?;
    let q_beta = total.quantile(beta)?;
    let base_value = total.quantile(alpha + beta - 1.0)?;
    let c = (q_alpha - base_value) / 2.0;
    let threshold = c + base_value;
    let rows: Vec<GapRow> = candidates
        .iter()
        .map(|f| {
            let lhs = f.eval(q_alpha) + (q_beta - f.eval(q_beta));
            GapRow {
                lhs,
                pass: lhs > threshold,
            }
        })
        .collect();
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(GapReport {
        c,
        base_value,
        rows,
        all_pass,
    })
}

/// Seeded Monte Carlo risk estimate with a bootstrap standard error.
#[derive(Debug, Clone, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
    pub seed: u64,
}

const BOOTSTRAP_RESAMPLES: usize = 200;

/// Estimate the risk by drawing `n` inverse-transform samples, forming
/// the empirical law, and evaluating the quantile form on it; the
/// standard error comes from 200 bootstrap resamples. Deterministic for a
/// given seed.
pub fn monte_carlo_risk(
    dist: &LossDistribution,
    kernel: &DistortionKernel,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n < 100 {
        return Err(RiskError::Precondition(format!(
            "need at least 100 samples, got {n}"
        )));
    }
    let sample = dist.sample(n, seed)?;
    let (values, probs) = sample.atoms().unwrap();
    let merged = LossDistribution::discrete(values.clone(), probs)?;
    let estimate = risk_quantile_form(&merged, kernel)?;

    let raw: Vec<f64> = {
        // flat sorted copy of the sample for index resampling
        let mut v = Vec::with_capacity(n);
        let (vals, ps) = sample.atoms().unwrap();
        for (val, p) in vals.iter().zip(ps) {
            let count = (p * n as f64).round() as usize;
            v.extend(std::iter::repeat_n(*val, count));
        }
        v
    };
    let boots = exec::map_collect(BOOTSTRAP_RESAMPLES, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        rng.set_stream(b as u64 + 1);
        let mut draw: Vec<f64> = (0..n).map(|_| raw[rng.random_range(0..n)]).collect();
        draw.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let resampled = LossDistribution::empirical(draw).expect("non-empty");
        risk_quantile_form(&resampled, kernel).unwrap_or(f64::NAN)
    });
    let mean = boots.iter().sum::<f64>() / boots.len() as f64;
    let var = boots.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (boots.len() - 1) as f64;
    Ok(McEstimate {
        estimate,
        std_error: var.sqrt(),
        n,
        seed,
    })
}

/// Constancy of the aggregate risk under a shared kernel.
#[derive(Debug, Clone, Serialize)]
pub struct ConstancyReport {
    /// `rho(X0)`, the value every admissible allocation must reproduce.
    pub reference: f64,
    pub max_deviation: f64,
    pub trials: usize,
    pub pass: bool,
}

/// When every agent uses the same kernel (unit weights), the aggregate
/// risk of any admissible allocation equals the risk of the total. Sample
/// random fractional allocations and measure the worst deviation.
pub fn remark4_check(
    kernel: &DistortionKernel,
    total: &LossDistribution,
    n_agents: usize,
    trials: usize,
    seed: u64,
) -> Result<ConstancyReport> {
    if trials == 0 {
        return Err(RiskError::Precondition("need at least one trial".into()));
    }
    if n_agents == 0 {
        return Err(RiskError::Validation("need at least one agent".into()));
    }
    let reference = risk_quantile_form(total, kernel)?;
    let agents: Vec<AgentSpec> = (0..n_agents)
        .map(|_| AgentSpec::new(kernel.clone(), 1.0))
        .collect::<Result<_>>()?;
    let problem = MarketProblem::new(agents, total.clone())?;
    let bounds = grid_bounds(&problem, 6)?;
    let k = bounds.len();
    let deviations = exec::map_collect(trials, |trial| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64 + 1);
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|_| random_share_column(&mut rng, n_agents))
            .collect();
        let shares: Vec<Vec<f64>> = (0..n_agents)
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect();
        ComonotoneAllocation::from_marginals(&bounds, &shares)
            .and_then(|alloc| evaluate_allocation(&problem, &alloc))
            .map(|v| (v - reference).abs())
            .unwrap_or(f64::INFINITY)
    });
    let max_deviation = deviations.iter().copied().fold(0.0f64, f64::max);
    Ok(ConstancyReport {
        reference,
        max_deviation,
        trials,
        pass: max_deviation <= 1e-9,
    })
}

/// Exact upper bound on the relaxation gap of a grid: per cell, the
/// cheapest single owner can exceed the pointwise envelope by at most the
/// integrated difference between its weighted survival curve and `Psi`
/// along the cell. Zero on grids aligned to the quantile breakpoints.
/// Atomic totals only.
pub fn grid_gap_bound(problem: &MarketProblem, bounds: &[f64]) -> Result<f64> {
    let Some((values, probs)) = problem.total().atoms() else {
        return Err(RiskError::Precondition(
            "gap bound is defined for atomic totals".into(),
        ));
    };
    let cum = LossDistribution::cumulative(&values, &probs);
    let level_at = |s: f64| -> f64 {
        let k = values.partition_point(|&v| v <= s);
        if k == 0 {
            0.0
        } else {
            cum[k - 1]
        }
    };
    let ess_sup = *values.last().unwrap();
    let agents = problem.agents();
    let mut bound = 0.0;
    for (j, &start) in bounds.iter().enumerate() {
        let end = bounds.get(j + 1).copied().unwrap_or(ess_sup);
        if end <= start {
            continue;
        }
        // sub-intervals of constant level inside the cell
        let mut cuts = vec![start];
        cuts.extend(values.iter().copied().filter(|&v| v > start && v < end));
        cuts.push(end);
        let mut best = f64::INFINITY;
        for agent in agents {
            let mut integrated = 0.0;
            for w in cuts.windows(2) {
                let level = level_at(w[0]);
                let psi_level = agents
                    .iter()
                    .map(|a| a.curve(level))
                    .fold(f64::INFINITY, f64::min);
                integrated += (agent.curve(level) - psi_level) * (w[1] - w[0]);
            }
            best = best.min(integrated);
        }
        bound += best;
    }
    Ok(bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::optimal_value;

    fn var(alpha: f64) -> DistortionKernel {
        DistortionKernel::var_at(alpha).unwrap()
    }

    fn agents(kernels: &[DistortionKernel]) -> Vec<AgentSpec> {
        kernels
            .iter()
            .map(|k| AgentSpec::new(k.clone(), 1.0).unwrap())
            .collect()
    }

    fn quarter_total() -> LossDistribution {
        LossDistribution::discrete(vec![1.0, 2.0, 3.0, 4.0], vec![0.25; 4]).unwrap()
    }

    #[test]
    fn brute_force_var_expectation_grid() {
        let problem = MarketProblem::new(
            agents(&[var(0.6), DistortionKernel::expectation()]),
            quarter_total(),
        )
        .unwrap();
        let (best, value) = brute_force_comonotone(&problem, 4).unwrap();
        assert_eq!(value, 2.25);
        assert_eq!(best.bounds, vec![0.0, 1.0, 2.0, 3.0]);
        // agent 2 owns the deductible layer up to the 0.6-quantile, agent 1
        // the tail excess; the massless cell [0, 1) ties and the
        // lexicographic rule hands it to agent 1
        assert_eq!(best.owners, vec![0, 1, 1, 0]);
        assert_eq!(value, optimal_value(&problem).unwrap());
    }

    #[test]
    fn brute_force_single_agent() {
        let problem =
            MarketProblem::new(agents(&[DistortionKernel::cvar_at(0.5).unwrap()]), quarter_total())
                .unwrap();
        let (_, value) = brute_force_comonotone(&problem, 4).unwrap();
        assert_eq!(value, 3.5);
    }

    #[test]
    fn brute_force_var_pair_reaches_var_alpha() {
        let problem =
            MarketProblem::new(agents(&[var(0.7), var(0.8)]), quarter_total()).unwrap();
        let (_, value) = brute_force_comonotone(&problem, 4).unwrap();
        assert_eq!(value, quarter_total().quantile(0.7).unwrap());
        assert_eq!(value, optimal_value(&problem).unwrap());
    }

    #[test]
    fn brute_force_budget_guard() {
        let problem = MarketProblem::new(
            agents(&[var(0.5), var(0.6), var(0.7)]),
            quarter_total(),
        )
        .unwrap();
        assert!(matches!(
            brute_force_comonotone(&problem, 9),
            Err(RiskError::Precondition(_))
        ));
    }

    #[test]
    fn fractional_probe_contains_bang_bang() {
        let problem = MarketProblem::new(
            agents(&[var(0.6), DistortionKernel::expectation()]),
            quarter_total(),
        )
        .unwrap();
        let report = fractional_probe(&problem, 4, 200, 42).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.min_sampled >= report.bang_bang_value - 1e-9);
        assert_eq!(report.bang_bang_value, 2.25);
    }

    #[test]
    fn fractional_probe_constant_under_shared_kernel() {
        let problem = MarketProblem::new(
            agents(&[var(0.5), var(0.5)]),
            quarter_total(),
        )
        .unwrap();
        let report = fractional_probe(&problem, 4, 100, 7).unwrap();
        // every sample has the same aggregate risk
        assert!((report.min_sampled - report.bang_bang_value).abs() <= 1e-9);
    }

    #[test]
    fn moral_hazard_exponential_values() {
        let total = LossDistribution::exponential(1.0).unwrap();
        let report = moral_hazard_counterexample(0.7, 0.8, &total).unwrap();
        assert!((report.value - 2.0f64.ln()).abs() < 1e-12);
        assert!((report.p_x1_positive - 0.3).abs() < 1e-15);
        let comonotone = optimal_value(
            &MarketProblem::new(agents(&[var(0.7), var(0.8)]), total).unwrap(),
        )
        .unwrap();
        let gap = comonotone - report.value;
        assert!((gap - (-(0.3f64.ln()) - 2.0f64.ln())).abs() < 1e-12);
        assert!(gap > 0.0);
    }

    #[test]
    fn moral_hazard_precondition_boundary() {
        let total = LossDistribution::exponential(1.0).unwrap();
        assert!(matches!(
            moral_hazard_counterexample(0.3, 0.6, &total),
            Err(RiskError::Precondition(_))
        ));
        assert!(matches!(
            moral_hazard_counterexample(0.4, 0.6, &total),
            Err(RiskError::Precondition(_))
        ));
        assert!(matches!(
            moral_hazard_counterexample(0.7, 0.8, &quarter_total()),
            Err(RiskError::Precondition(_))
        ));
    }

    #[test]
    fn lemma1_gap_named_candidates() {
        let total = LossDistribution::exponential(1.0).unwrap();
        let id = PiecewiseMonotoneFn::identity();
        let zero = PiecewiseMonotoneFn::zero();
        let half = PiecewiseMonotoneFn::new(vec![(0.0, 0.0), (1.0, 0.5)], 0.5).unwrap();
        let report = lemma1_gap_check(0.7, 0.8, &total, &[id, zero, half]).unwrap();
        let q7 = -(0.3f64.ln());
        let q8 = -(0.2f64.ln());
        let q5 = 2.0f64.ln();
        assert!((report.c - (q7 - q5) / 2.0).abs() < 1e-12);
        assert!((report.rows[0].lhs - q7).abs() < 1e-12);
        assert!((report.rows[1].lhs - q8).abs() < 1e-12);
        assert!((report.rows[2].lhs - (0.5 * q7 + 0.5 * q8)).abs() < 1e-12);
        assert!(report.all_pass);
    }

    #[test]
    fn lemma1_rejects_bad_candidate() {
        let total = LossDistribution::exponential(1.0).unwrap();
        let steep = PiecewiseMonotoneFn::new(vec![(0.0, 0.0), (1.0, 2.0)], 2.0).unwrap();
        assert!(matches!(
            lemma1_gap_check(0.7, 0.8, &total, &[steep]),
            Err(RiskError::Validation(_))
        ));
    }

    #[test]
    fn monte_carlo_mean_and_quantile() {
        let d = LossDistribution::exponential(1.0).unwrap();
        let mean = monte_carlo_risk(&d, &DistortionKernel::expectation(), 20_000, 1).unwrap();
        assert!(
            (mean.estimate - 1.0).abs() <= 3.0 * mean.std_error,
            "{mean:?}"
        );
        let med = monte_carlo_risk(&d, &var(0.5), 20_000, 1).unwrap();
        assert!(
            (med.estimate - 2.0f64.ln()).abs() <= 3.0 * med.std_error,
            "{med:?}"
        );
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let d = quarter_total();
        let k = DistortionKernel::cvar_at(0.5).unwrap();
        let a = monte_carlo_risk(&d, &k, 500, 9).unwrap();
        let b = monte_carlo_risk(&d, &k, 500, 9).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.std_error, b.std_error);
        // converges toward the exact value
        let exact = risk_quantile_form(&d, &k).unwrap();
        let big = monte_carlo_risk(&d, &k, 50_000, 3).unwrap();
        assert!((big.estimate - exact).abs() <= 4.0 * big.std_error.max(1e-3));
    }

    #[test]
    fn remark4_constancy_cvar() {
        let report = remark4_check(
            &DistortionKernel::cvar_at(0.5).unwrap(),
            &quarter_total(),
            2,
            100,
            42,
        )
        .unwrap();
        assert!((report.reference - 3.5).abs() < 1e-12);
        assert!(report.pass, "max deviation {}", report.max_deviation);
    }

    #[test]
    fn remark4_single_agent_trivial() {
        let report = remark4_check(&var(0.5), &quarter_total(), 1, 3, 1).unwrap();
        assert_eq!(report.max_deviation, 0.0);
    }

    #[test]
    fn gap_bound_zero_on_aligned_grids() {
        let problem = MarketProblem::new(
            agents(&[var(0.6), DistortionKernel::expectation()]),
            quarter_total(),
        )
        .unwrap();
        let bounds = grid_bounds(&problem, 4).unwrap();
        assert_eq!(grid_gap_bound(&problem, &bounds).unwrap(), 0.0);
    }

    #[test]
    fn gap_bound_controls_coarse_grids() {
        let problem = MarketProblem::new(
            agents(&[var(0.6), DistortionKernel::expectation()]),
            quarter_total(),
        )
        .unwrap();
        // a deliberately coarse, misaligned grid
        let bounds = vec![0.0, 2.5];
        let shares_best = brute_force_on_bounds(&problem, &bounds);
        let optimal = optimal_value(&problem).unwrap();
        let bound = grid_gap_bound(&problem, &bounds).unwrap();
        assert!(shares_best >= optimal - 1e-12);
        assert!(
            shares_best <= optimal + bound + 1e-9,
            "{shares_best} vs {optimal} + {bound}"
        );
    }

    fn brute_force_on_bounds(problem: &MarketProblem, bounds: &[f64]) -> f64 {
        let n = problem.agents().len();
        let k = bounds.len();
        let mut best = f64::INFINITY;
        for index in 0..n.pow(k as u32) {
            let owners = decode_owners(index, n, k);
            let value = ComonotoneAllocation::from_marginals(bounds, &shares_for(&owners, n))
                .and_then(|alloc| evaluate_allocation(problem, &alloc))
                .unwrap_or(f64::INFINITY);
            best = best.min(value);
        }
        best
    }
}
