//! Co-monotone optimal risk allocation.
//!
//! Each of `n` agents prices risk with a distortion kernel `phi_i` and a
//! positive weight `lambda_i`. Over allocations `(f_1(X0), ..., f_n(X0))`
//! with every `f_i` non-decreasing, `f_i(0) = 0`, and `sum f_i = id`, the
//! weighted aggregate risk is minimized by a bang-bang rule: the level
//! curve `Psi(t) = min_i lambda_i (1 - phi_i(t))` selects, at every
//! probability level, the single agent attaining the minimum, the optimal
//! marginal allocations are the indicators of the selected regions pulled
//! back through the CDF of the total, and the optimal value is the
//! integral of `Psi` composed with that CDF over the loss axis.
//!
//! The selector depends only on the preferences `(phi_i, lambda_i)`, never
//! on the total risk; the total enters only through its CDF in the final
//! integration. All piecewise computations here use exact breakpoint
//! arithmetic; nothing is quadrature-based.

use serde::Serialize;

use crate::distortion::{self, domain_check, max_kernel, DistortionKernel};
use crate::distributions::{DistKind, LossDistribution, PiecewiseMonotoneFn, StepFn};
use crate::error::{Result, RiskError};

/// Gap tolerance under which the regularity report passes.
pub const REGULARITY_PASS_TOL: f64 = 1e-6;

/// Allocation-validity tolerance (sum to identity, Lipschitz slack).
pub const ALLOCATION_TOL: f64 = 1e-9;

/// One agent: a distortion kernel and a positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub kernel: DistortionKernel,
    pub weight: f64,
}

impl AgentSpec {
    pub fn new(kernel: DistortionKernel, weight: f64) -> Result<Self> {
        if !weight.is_finite() || weight <= 0.0 {
            return Err(RiskError::Validation(format!(
                "agent weight {weight} must be positive and finite"
            )));
        }
        Ok(Self { kernel, weight })
    }

    /// `lambda * (1 - phi(t))`, the weighted survival-of-the-kernel curve.
    pub(crate) fn curve(&self, t: f64) -> f64 {
        self.weight * (1.0 - self.kernel.phi(t))
    }

    fn curve_slope_at(&self, t: f64) -> f64 {
        -self.weight * self.kernel.slope_at(t)
    }
}

/// A market: agent preferences plus the non-negative total risk.
#[derive(Debug, Clone)]
pub struct MarketProblem {
    agents: Vec<AgentSpec>,
    total: LossDistribution,
}

impl MarketProblem {
    /// Validates the standing assumptions: at least one agent, a total with
    /// support in `[0, infinity)` and no mass below zero, and a finite
    /// (regular) risk for every agent kernel against this total.
    pub fn new(agents: Vec<AgentSpec>, total: LossDistribution) -> Result<Self> {
        if agents.is_empty() {
            return Err(RiskError::Validation("need at least one agent".into()));
        }
        if !total.is_nonneg() {
            return Err(RiskError::Precondition(
                "total risk must be non-negative with F(0-) = 0".into(),
            ));
        }
        for (i, agent) in agents.iter().enumerate() {
            domain_check(&total, &agent.kernel).map_err(|e| {
                RiskError::Domain(format!("agent {i} fails the regularity condition: {e}"))
            })?;
        }
        Ok(Self { agents, total })
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn total(&self) -> &LossDistribution {
        &self.total
    }
}

/// `Psi(t) = min_i lambda_i (1 - phi_i(t))` at a single level `t` in `[0, 1]`.
pub fn psi(agents: &[AgentSpec], t: f64) -> f64 {
    assert!((0.0..=1.0).contains(&t), "psi level {t} outside [0, 1]");
    agents
        .iter()
        .map(|a| a.curve(t))
        .fold(f64::INFINITY, f64::min)
}

/// One affine piece of the lower envelope on `[start, end)`:
/// `Psi(t) = value + slope * (t - start)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiPiece {
    pub start: f64,
    pub end: f64,
    pub value: f64,
    pub slope: f64,
}

/// Full piecewise representation of `Psi` on `[0, 1)`; `Psi(1) = 0` always.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiCurve {
    pub pieces: Vec<PsiPiece>,
}

impl PsiCurve {
    pub fn eval(&self, t: f64) -> f64 {
        if t >= 1.0 {
            return 0.0;
        }
        let i = self.pieces.partition_point(|p| p.start <= t);
        let p = &self.pieces[i - 1];
        if t == p.start {
            p.value
        } else {
            p.value + p.slope * (t - p.start)
        }
    }
}

/// The bang-bang selector: maximal intervals of `[0, 1)` with the winning
/// agent per interval, plus the regions where two or more agents tie for
/// the minimum (the winner there is the lowest index; alternative optima
/// swap owners inside tie regions).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSelector {
    pub pieces: Vec<SelectorPiece>,
    pub tie_regions: Vec<TieRegion>,
    n_agents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectorPiece {
    pub start: f64,
    pub end: f64,
    pub winner: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TieRegion {
    pub start: f64,
    pub end: f64,
    pub agents: Vec<usize>,
}

impl LevelSelector {
    /// Winner at level `t`. Levels at or above 1 fall back to the global
    /// tie at `Psi(1) = 0`, resolved to the lowest agent index; this drives
    /// the allocation beyond the essential supremum of the total.
    pub fn winner_at(&self, t: f64) -> usize {
        if t >= 1.0 {
            return 0;
        }
        let i = self.pieces.partition_point(|p| p.start <= t);
        self.pieces[i - 1].winner
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }
}

/// A refined envelope piece before merging.
#[derive(Debug, Clone)]
struct RefPiece {
    start: f64,
    end: f64,
    value: f64,
    slope: f64,
    attainers: Vec<usize>,
}

/// Refine the level axis so each agent curve is affine per piece and the
/// minimum is attained by a fixed set of agents per piece.
fn refine(agents: &[AgentSpec]) -> Vec<RefPiece> {
    let mut ts: Vec<f64> = agents
        .iter()
        .flat_map(|a| a.kernel.breakpoints().iter().copied())
        .collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    // pairwise crossings inside each merged segment
    let mut extra = Vec::new();
    for w in ts.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in 0..agents.len() {
            for j in i + 1..agents.len() {
                let (vi, si) = (agents[i].curve(a), agents[i].curve_slope_at(a));
                let (vj, sj) = (agents[j].curve(a), agents[j].curve_slope_at(a));
                if si != sj {
                    let t = a + (vj - vi) / (si - sj);
                    if t > a && t < b {
                        extra.push(t);
                    }
                }
            }
        }
    }
    ts.extend(extra);
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();

    let mut pieces = Vec::with_capacity(ts.len() - 1);
    for w in ts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = a + 0.5 * (b - a);
        let mids: Vec<f64> = agents.iter().map(|ag| ag.curve(mid)).collect();
        let min_mid = mids.iter().copied().fold(f64::INFINITY, f64::min);
        let attainers: Vec<usize> = mids
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v == min_mid)
            .map(|(i, _)| i)
            .collect();
        let winner = attainers[0];
        pieces.push(RefPiece {
            start: a,
            end: b,
            value: agents[winner].curve(a),
            slope: agents[winner].curve_slope_at(a),
            attainers,
        });
    }
    pieces
}

/// Full piecewise representation of `Psi` on `[0, 1)`, with affine
/// continuations merged so constant stretches are single pieces.
pub fn psi_curve(agents: &[AgentSpec]) -> PsiCurve {
    let refined = refine(agents);
    let mut pieces: Vec<PsiPiece> = Vec::with_capacity(refined.len());
    for r in refined {
        if let Some(last) = pieces.last_mut() {
            let continuation = last.value + last.slope * (r.start - last.start);
            if last.slope == r.slope && continuation == r.value {
                last.end = r.end;
                continue;
            }
        }
        pieces.push(PsiPiece {
            start: r.start,
            end: r.end,
            value: r.value,
            slope: r.slope,
        });
    }
    PsiCurve { pieces }
}

/// The bang-bang selector `k*`: winner and tie structure per maximal level
/// interval. Depends only on the preferences, never on the total risk.
pub fn optimal_selector(agents: &[AgentSpec]) -> LevelSelector {
    let refined = refine(agents);
    let mut pieces: Vec<SelectorPiece> = Vec::new();
    let mut ties: Vec<TieRegion> = Vec::new();
    for r in &refined {
        match pieces.last_mut() {
            Some(last) if last.winner == r.attainers[0] => last.end = r.end,
            _ => pieces.push(SelectorPiece {
                start: r.start,
                end: r.end,
                winner: r.attainers[0],
            }),
        }
        if r.attainers.len() >= 2 {
            match ties.last_mut() {
                Some(last) if last.end == r.start && last.agents == r.attainers => {
                    last.end = r.end
                }
                _ => ties.push(TieRegion {
                    start: r.start,
                    end: r.end,
                    agents: r.attainers.clone(),
                }),
            }
        }
    }
    LevelSelector {
        pieces,
        tie_regions: ties,
        n_agents: agents.len(),
    }
}

/// A co-monotone allocation: components `f_i` (non-decreasing, 1-Lipschitz,
/// `f_i(0) = 0`, summing to the identity) together with their marginal
/// allocations `h_i` (step functions with values in `[0, 1]` summing to one,
/// `f_i(x)` the integral of `h_i` up to `x`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComonotoneAllocation {
    components: Vec<PiecewiseMonotoneFn>,
    marginals: Vec<StepFn>,
}

impl ComonotoneAllocation {
    /// Build from per-cell marginal shares on a common grid. `bounds` are
    /// ascending cell starts beginning at 0; `shares[i][j]` is agent `i`'s
    /// share on `[bounds[j], bounds[j+1])` and `shares[i][last]` extends
    /// beyond the last bound.
    pub fn from_marginals(bounds: &[f64], shares: &[Vec<f64>]) -> Result<Self> {
        if shares.is_empty() {
            return Err(RiskError::Validation("no agents".into()));
        }
        if bounds.is_empty() || bounds[0] != 0.0 {
            return Err(RiskError::Validation("cell bounds must start at 0".into()));
        }
        let cells = bounds.len();
        if shares.iter().any(|s| s.len() != cells) {
            return Err(RiskError::Validation(
                "each agent needs one share per cell".into(),
            ));
        }
        for j in 0..cells {
            let col: f64 = shares.iter().map(|s| s[j]).sum();
            if (col - 1.0).abs() > ALLOCATION_TOL {
                return Err(RiskError::Validation(format!(
                    "cell {j} shares sum to {col}, expected 1"
                )));
            }
            if shares
                .iter()
                .any(|s| !(-ALLOCATION_TOL..=1.0 + ALLOCATION_TOL).contains(&s[j]))
            {
                return Err(RiskError::Validation(format!(
                    "cell {j} has a share outside [0, 1]"
                )));
            }
        }
        let mut components = Vec::with_capacity(shares.len());
        let mut marginals = Vec::with_capacity(shares.len());
        for s in shares {
            let mut knots = vec![(0.0, 0.0)];
            let mut y = 0.0;
            for j in 0..cells - 1 {
                y += s[j] * (bounds[j + 1] - bounds[j]);
                knots.push((bounds[j + 1], y));
            }
            components.push(PiecewiseMonotoneFn::new(
                knots,
                s[cells - 1].clamp(0.0, 1.0),
            )?);
            marginals.push(StepFn::new(bounds.to_vec(), s.clone())?);
        }
        let alloc = Self { components, marginals };
        alloc.validate(ALLOCATION_TOL)?;
        Ok(alloc)
    }

    /// Everything to agent `index` out of `n`.
    pub fn all_to_agent(index: usize, n: usize) -> Result<Self> {
        if index >= n {
            return Err(RiskError::Validation(format!(
                "agent index {index} out of range for {n} agents"
            )));
        }
        let shares: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![if i == index { 1.0 } else { 0.0 }])
            .collect();
        Self::from_marginals(&[0.0], &shares)
    }

    pub fn components(&self) -> &[PiecewiseMonotoneFn] {
        &self.components
    }

    pub fn marginals(&self) -> &[StepFn] {
        &self.marginals
    }

    pub fn n_agents(&self) -> usize {
        self.components.len()
    }

    /// Check the admissibility invariants within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let mut grid: Vec<f64> = self
            .components
            .iter()
            .flat_map(|f| f.knots().iter().map(|&(x, _)| x))
            .collect();
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();
        let top = grid.last().copied().unwrap_or(0.0) + 1.0;
        let mut probes = grid.clone();
        probes.extend(grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect::<Vec<_>>());
        probes.push(top);
        probes.push(2.0 * top);
        for f in &self.components {
            if f.eval(0.0).abs() > tol {
                return Err(RiskError::Validation("component has f(0) != 0".into()));
            }
            if f.max_slope() > 1.0 + tol {
                return Err(RiskError::Validation("component is not 1-Lipschitz".into()));
            }
        }
        for &x in &probes {
            let sum: f64 = self.components.iter().map(|f| f.eval(x)).sum();
            if (sum - x).abs() > tol * x.abs().max(1.0) {
                return Err(RiskError::Validation(format!(
                    "components sum to {sum} at x = {x}, expected the identity"
                )));
            }
        }
        Ok(())
    }
}

/// Maximal constant-winner runs on the loss axis: `(start, end, winner)`
/// with `end = None` for the unbounded tail.
fn winner_runs(
    selector: &LevelSelector,
    total: &LossDistribution,
) -> Vec<(f64, Option<f64>, usize)> {
    let mut raw: Vec<(f64, Option<f64>, usize)> = Vec::new();
    if let Some((values, probs)) = total.atoms() {
        let cum = LossDistribution::cumulative(&values, &probs);
        let mut edges = values.clone();
        if edges[0] > 0.0 {
            edges.insert(0, 0.0);
        }
        for j in 0..edges.len() {
            let k = values.partition_point(|&v| v <= edges[j]);
            let level = if k == 0 { 0.0 } else { cum[k - 1] };
            let end = if j + 1 < edges.len() {
                Some(edges[j + 1])
            } else {
                None
            };
            raw.push((edges[j], end, selector.winner_at(level)));
        }
    } else {
        let hi = total.max_support();
        for p in &selector.pieces {
            let s_lo = if p.start == 0.0 {
                0.0
            } else {
                total.quantile_unchecked(p.start)
            };
            let s_hi = if p.end == 1.0 {
                hi
            } else {
                Some(
                    total
                        .quantile_unchecked(p.end)
                        .min(hi.unwrap_or(f64::INFINITY)),
                )
            };
            if let Some(h) = s_hi {
                if h <= s_lo {
                    continue;
                }
            }
            raw.push((s_lo, s_hi, p.winner));
        }
        // beyond a bounded support the CDF sits at one
        if let Some(h) = hi {
            raw.push((h, None, selector.winner_at(1.0)));
        }
    }
    // merge adjacent same-winner runs
    let mut runs: Vec<(f64, Option<f64>, usize)> = Vec::new();
    for r in raw {
        match runs.last_mut() {
            Some(last) if last.2 == r.2 => last.1 = r.1,
            _ => runs.push(r),
        }
    }
    runs
}

/// The co-monotone optimum: bang-bang marginals `h_i(s)` equal to the
/// winner indicator at level `F(s)`, components integrated exactly from
/// the maximal winner runs.
pub fn optimal_allocation(problem: &MarketProblem) -> Result<ComonotoneAllocation> {
    let selector = optimal_selector(problem.agents());
    let runs = winner_runs(&selector, problem.total());
    let n = problem.agents().len();

    let mut components = Vec::with_capacity(n);
    for i in 0..n {
        let mut knots = vec![(0.0, 0.0)];
        let mut y = 0.0;
        let mut right_slope = 0.0;
        for (j, &(start, end, w)) in runs.iter().enumerate() {
            match end {
                Some(e) => {
                    if w == i {
                        y += e - start;
                    }
                    let next_owns = runs.get(j + 1).map(|r| r.2 == i).unwrap_or(false);
                    if next_owns != (w == i) {
                        knots.push((e, y));
                    }
                }
                None => right_slope = if w == i { 1.0 } else { 0.0 },
            }
        }
        components.push(PiecewiseMonotoneFn::new(knots, right_slope)?);
    }
    let bounds: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let marginals = (0..n)
        .map(|i| {
            StepFn::new(
                bounds.clone(),
                runs.iter()
                    .map(|r| if r.2 == i { 1.0 } else { 0.0 })
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let alloc = ComonotoneAllocation { components, marginals };
    debug_assert!(alloc.validate(ALLOCATION_TOL).is_ok());
    Ok(alloc)
}

/// The optimal value `int_0^infinity Psi(F(s)) ds`, evaluated exactly for
/// piecewise CDFs and in closed form for the parametric families.
pub fn optimal_value(problem: &MarketProblem) -> Result<f64> {
    let curve = psi_curve(problem.agents());
    let total = problem.total();
    if total.max_support().is_none()
        && problem
            .agents()
            .iter()
            .all(|a| a.kernel.jump_at_one() > 0.0)
    {
        return Err(RiskError::Domain(
            "every kernel has an atom at level 1 and the total is unbounded; \
             the value integral diverges (regularity fails)"
                .into(),
        ));
    }
    if let Some((values, probs)) = total.atoms() {
        let cum = LossDistribution::cumulative(&values, &probs);
        let mut edges = values.clone();
        if edges[0] > 0.0 {
            edges.insert(0, 0.0);
        }
        // merge constant runs of Psi(F) so each contributes one product
        let mut acc = 0.0;
        let mut run_start = edges[0];
        let mut run_value: Option<f64> = None;
        for &edge in &edges[..edges.len() - 1] {
            let k = values.partition_point(|&v| v <= edge);
            let level = if k == 0 { 0.0 } else { cum[k - 1] };
            let v = curve.eval(level);
            match run_value {
                Some(rv) if rv == v => {}
                Some(rv) => {
                    acc += rv * (edge - run_start);
                    run_start = edge;
                    run_value = Some(v);
                }
                None => run_value = Some(v),
            }
        }
        if let Some(rv) = run_value {
            acc += rv * (edges[edges.len() - 1] - run_start);
        }
        // beyond the last atom the level is 1 and Psi(1) = 0
        return Ok(acc);
    }
    match &total.kind {
        DistKind::Uniform { lower, upper } => {
            Ok(value_uniform(&curve, *lower, *upper, f64::INFINITY))
        }
        DistKind::Exponential { rate } => Ok(value_exponential(&curve, *rate, None)),
        DistKind::Truncated { base, cutoff } => match &**base {
            DistKind::Uniform { lower, upper } => Ok(value_uniform(&curve, *lower, *upper, *cutoff)),
            DistKind::Exponential { rate } => Ok(value_exponential(&curve, *rate, Some(*cutoff))),
            _ => unreachable!("truncation base is always a continuous family"),
        },
        _ => unreachable!("atomic families handled above"),
    }
}

fn value_uniform(curve: &PsiCurve, lower: f64, upper: f64, cutoff: f64) -> f64 {
    let top = upper.min(cutoff);
    let width = upper - lower;
    // CDF at the effective top of the support
    let tc = ((top - lower) / width).min(1.0);
    // below the support the level is 0
    let mut total = curve.eval(0.0) * lower;
    for p in &curve.pieces {
        let (a, b) = (p.start, p.end.min(tc));
        if b <= a {
            continue;
        }
        let s_lo = lower + a * width;
        let s_hi = lower + b * width;
        // the integrand is affine in s; its mean is the value at mid-level
        let mid_level = 0.5 * (a + b);
        total += (p.value + p.slope * (mid_level - p.start)) * (s_hi - s_lo);
    }
    total
}

fn value_exponential(curve: &PsiCurve, rate: f64, cutoff: Option<f64>) -> f64 {
    let tc = cutoff.map(|m| 1.0 - (-rate * m).exp());
    let mut total = 0.0;
    for p in &curve.pieces {
        let a = p.start;
        let b = match tc {
            Some(t) => p.end.min(t),
            None => p.end,
        };
        if b <= a {
            continue;
        }
        let s_lo = if a == 0.0 { 0.0 } else { -(-a).ln_1p() / rate };
        if b == 1.0 {
            // unbounded tail: Psi tends to zero here (the caller ruled out
            // the divergent case structurally), so
            // int_{s_lo}^inf slope * (F(s) - 1) ds = -slope * (1 - a) / rate
            total += -p.slope * (1.0 - a) / rate;
        } else {
            let s_hi = match (tc, cutoff) {
                (Some(t), Some(m)) if b == t => m,
                _ => -(-b).ln_1p() / rate,
            };
            // int (value + slope (F(s) - a)) ds, using e^{-rate s} = 1 - t
            // exactly at quantile endpoints
            total += (p.value + p.slope * (1.0 - a)) * (s_hi - s_lo) + p.slope / rate * (a - b);
        }
    }
    total
}

/// The weighted aggregate risk of an arbitrary admissible allocation:
/// `sum_i lambda_i rho_i(f_i(X0))`, each summand evaluated through the
/// quantile form of the transformed loss (never through the `Psi`
/// integral, so this is an independent route to the optimum).
pub fn evaluate_allocation(problem: &MarketProblem, alloc: &ComonotoneAllocation) -> Result<f64> {
    if alloc.n_agents() != problem.agents().len() {
        return Err(RiskError::Validation(format!(
            "allocation has {} components for {} agents",
            alloc.n_agents(),
            problem.agents().len()
        )));
    }
    alloc.validate(ALLOCATION_TOL)?;
    let mut total = 0.0;
    for (agent, f) in problem.agents().iter().zip(alloc.components()) {
        total += agent.weight * distortion::risk_transformed(problem.total(), f, &agent.kernel)?;
    }
    Ok(total)
}

/// The infimal-convolution kernel for equal weights: the pointwise maximum
/// of the agent kernels. The risk of the total under it equals the optimal
/// value.
pub fn convolution_kernel(agents: &[AgentSpec]) -> Result<DistortionKernel> {
    if agents.is_empty() {
        return Err(RiskError::Validation("need at least one agent".into()));
    }
    let w0 = agents[0].weight;
    if agents.iter().any(|a| a.weight != w0) {
        return Err(RiskError::Precondition(
            "convolution kernel requires equal weights; for weighted problems \
             use the optimal value directly"
                .into(),
        ));
    }
    let kernels: Vec<DistortionKernel> = agents.iter().map(|a| a.kernel.clone()).collect();
    max_kernel(&kernels)
}

/// One truncation level of a regularity report.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityRow {
    pub level: f64,
    pub truncated_risk: f64,
    pub gap: f64,
}

/// Report on the truncation-continuity condition `rho(X and m) -> rho(X)`:
/// the gap per requested level, passing when the largest level closes the
/// gap within [`REGULARITY_PASS_TOL`].
#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub risk: f64,
    pub rows: Vec<RegularityRow>,
    pub pass: bool,
}

pub fn regularity_check(
    kernel: &DistortionKernel,
    total: &LossDistribution,
    levels: &[f64],
) -> Result<RegularityReport> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RiskError::Validation(
            "truncation levels must be non-empty and ascending".into(),
        ));
    }
    let risk = distortion::risk_quantile_form(total, kernel)?;
    let mut rows = Vec::with_capacity(levels.len());
    for &m in levels {
        let truncated_risk = distortion::risk_quantile_form(&total.truncate(m)?, kernel)?;
        rows.push(RegularityRow {
            level: m,
            truncated_risk,
            gap: (truncated_risk - risk).abs(),
        });
    }
    let pass = rows.last().unwrap().gap <= REGULARITY_PASS_TOL;
    Ok(RegularityReport { risk, rows, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::risk_quantile_form;

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
    fn psi_of_two_var_agents() {
        let ag = agents(&[var(0.7), var(0.8)]);
        assert_eq!(psi(&ag, 0.65), 1.0);
        assert_eq!(psi(&ag, 0.75), 0.0);
    }

    #[test]
    fn psi_single_agent_is_weighted_survival() {
        let ag = vec![AgentSpec::new(DistortionKernel::cvar_at(0.5).unwrap(), 2.0).unwrap()];
        assert_eq!(psi(&ag, 0.25), 2.0);
        assert_eq!(psi(&ag, 0.75), 1.0);
    }

    #[test]
    fn psi_cvar_vs_expectation() {
        let ag = agents(&[
            DistortionKernel::cvar_at(0.5).unwrap(),
            DistortionKernel::expectation(),
        ]);
        // min(2(1-t), 1-t) at t = 0.8: the expectation agent wins
        assert!((psi(&ag, 0.8) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn selector_example3_var_pair() {
        let sel = optimal_selector(&agents(&[var(0.7), var(0.8)]));
        assert_eq!(sel.pieces.len(), 1);
        assert_eq!(sel.pieces[0].winner, 0);
        assert_eq!((sel.pieces[0].start, sel.pieces[0].end), (0.0, 1.0));
        // ties on [0, 0.7) and [0.8, 1)
        assert_eq!(sel.tie_regions.len(), 2);
        assert_eq!(
            (sel.tie_regions[0].start, sel.tie_regions[0].end),
            (0.0, 0.7)
        );
        assert_eq!(
            (sel.tie_regions[1].start, sel.tie_regions[1].end),
            (0.8, 1.0)
        );
    }

    #[test]
    fn selector_var_vs_expectation() {
        let sel = optimal_selector(&agents(&[var(0.6), DistortionKernel::expectation()]));
        assert_eq!(sel.pieces.len(), 2);
        assert_eq!(
            (sel.pieces[0].start, sel.pieces[0].end, sel.pieces[0].winner),
            (0.0, 0.6, 1)
        );
        assert_eq!(
            (sel.pieces[1].start, sel.pieces[1].end, sel.pieces[1].winner),
            (0.6, 1.0, 0)
        );
    }

    #[test]
    fn selector_identical_kernels_full_tie() {
        let sel = optimal_selector(&agents(&[var(0.5), var(0.5)]));
        assert_eq!(sel.pieces.len(), 1);
        assert_eq!(sel.pieces[0].winner, 0);
        assert_eq!(sel.tie_regions.len(), 1);
        assert_eq!(
            (sel.tie_regions[0].start, sel.tie_regions[0].end),
            (0.0, 1.0)
        );
        assert_eq!(sel.tie_regions[0].agents, vec![0, 1]);
    }

    #[test]
    fn selector_winners_partition_and_sum_to_one() {
        let ag = agents(&[
            var(0.3),
            DistortionKernel::cvar_at(0.5).unwrap(),
            DistortionKernel::expectation(),
        ]);
        let sel = optimal_selector(&ag);
        assert_eq!(sel.pieces[0].start, 0.0);
        assert_eq!(sel.pieces.last().unwrap().end, 1.0);
        for w in sel.pieces.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        for i in 0..=100 {
            let t = i as f64 / 101.0;
            let marks: usize = (0..ag.len())
                .map(|k| usize::from(sel.winner_at(t) == k))
                .sum();
            assert_eq!(marks, 1);
        }
    }

    #[test]
    fn allocation_var_vs_expectation_layers() {
        let problem = MarketProblem::new(
            agents(&[var(0.6), DistortionKernel::expectation()]),
            quarter_total(),
        )
        .unwrap();
        let alloc = optimal_allocation(&problem).unwrap();
        let f_var = &alloc.components()[0];
        let f_exp = &alloc.components()[1];
        for x in [0.0, 0.5, 1.0, 2.0, 3.0, 3.5, 4.0, 7.0] {
            assert_eq!(f_exp.eval(x), x.min(3.0), "x = {x}");
            assert_eq!(f_var.eval(x), (x - 3.0).max(0.0), "x = {x}");
        }
        for h in alloc.marginals() {
            for &v in &h.values {
                assert!(v == 0.0 || v == 1.0);
            }
        }
    }

    #[test]
    fn allocation_single_agent_is_identity() {
        let problem =
            MarketProblem::new(agents(&[DistortionKernel::expectation()]), quarter_total())
                .unwrap();
        let alloc = optimal_allocation(&problem).unwrap();
        assert_eq!(alloc.components()[0], PiecewiseMonotoneFn::identity());
    }

    #[test]
    fn allocation_example3_identity_to_agent_one() {
        for total in [quarter_total(), LossDistribution::exponential(1.0).unwrap()] {
            let problem = MarketProblem::new(agents(&[var(0.7), var(0.8)]), total).unwrap();
            let alloc = optimal_allocation(&problem).unwrap();
            for x in [0.0, 0.3, 1.0, 5.0] {
                assert_eq!(alloc.components()[0].eval(x), x);
                assert_eq!(alloc.components()[1].eval(x), 0.0);
            }
        }
    }

    #[test]
    fn value_example3_is_var_alpha_exact() {
        let problem = MarketProblem::new(agents(&[var(0.7), var(0.8)]), quarter_total()).unwrap();
        assert_eq!(
            optimal_value(&problem).unwrap(),
            quarter_total().quantile(0.7).unwrap()
        );
        let exp_problem = MarketProblem::new(
            agents(&[var(0.7), var(0.8)]),
            LossDistribution::exponential(1.0).unwrap(),
        )
        .unwrap();
        let got = optimal_value(&exp_problem).unwrap();
        let want = -(0.3f64.ln());
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }

    #[test]
    fn value_var_expectation_is_truncated_mean() {
        let problem = MarketProblem::new(
            agents(&[var(0.6), DistortionKernel::expectation()]),
            quarter_total(),
        )
        .unwrap();
        assert_eq!(optimal_value(&problem).unwrap(), 2.25);
        let alloc = optimal_allocation(&problem).unwrap();
        let via_eval = evaluate_allocation(&problem, &alloc).unwrap();
        assert!((via_eval - 2.25).abs() < 1e-12);
    }

    #[test]
    fn value_single_agent_is_weighted_risk() {
        for total in [
            quarter_total(),
            LossDistribution::exponential(2.0).unwrap(),
            LossDistribution::uniform(0.5, 3.0).unwrap(),
            LossDistribution::point_mass(5.0).unwrap(),
        ] {
            for kernel in [
                DistortionKernel::expectation(),
                var(0.4),
                DistortionKernel::cvar_at(0.3).unwrap(),
            ] {
                let ag = vec![AgentSpec::new(kernel.clone(), 1.5).unwrap()];
                let problem = MarketProblem::new(ag, total.clone()).unwrap();
                let want = 1.5 * risk_quantile_form(&total, &kernel).unwrap();
                let got = optimal_value(&problem).unwrap();
                assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn evaluate_all_to_one_is_that_agents_risk() {
        let problem = MarketProblem::new(
            agents(&[var(0.6), DistortionKernel::expectation()]),
            quarter_total(),
        )
        .unwrap();
        let alloc = ComonotoneAllocation::all_to_agent(0, 2).unwrap();
        let got = evaluate_allocation(&problem, &alloc).unwrap();
        assert_eq!(got, quarter_total().quantile(0.6).unwrap());
    }

    #[test]
    fn evaluate_rejects_non_identity_sum() {
        let bad = ComonotoneAllocation {
            components: vec![
                PiecewiseMonotoneFn::identity(),
                PiecewiseMonotoneFn::identity(),
            ],
            marginals: vec![
                StepFn::new(vec![0.0], vec![1.0]).unwrap(),
                StepFn::new(vec![0.0], vec![1.0]).unwrap(),
            ],
        };
        let problem = MarketProblem::new(
            agents(&[var(0.6), DistortionKernel::expectation()]),
            quarter_total(),
        )
        .unwrap();
        assert!(matches!(
            evaluate_allocation(&problem, &bad),
            Err(RiskError::Validation(_))
        ));
    }

    #[test]
    fn convolution_kernel_examples() {
        let ag = agents(&[var(0.7), var(0.8)]);
        assert_eq!(convolution_kernel(&ag).unwrap(), var(0.7));
        let single = agents(&[DistortionKernel::cvar_at(0.25).unwrap()]);
        assert_eq!(
            convolution_kernel(&single).unwrap(),
            DistortionKernel::cvar_at(0.25).unwrap()
        );
        let unequal = vec![
            AgentSpec::new(var(0.7), 1.0).unwrap(),
            AgentSpec::new(var(0.8), 2.0).unwrap(),
        ];
        assert!(matches!(
            convolution_kernel(&unequal),
            Err(RiskError::Precondition(_))
        ));
    }

    #[test]
    fn convolution_value_matches_optimal_value() {
        let ag = agents(&[
            DistortionKernel::cvar_at(0.25).unwrap(),
            DistortionKernel::cvar_at(0.5).unwrap(),
        ]);
        let problem = MarketProblem::new(ag.clone(), quarter_total()).unwrap();
        let conv = convolution_kernel(&ag).unwrap();
        let via_kernel = risk_quantile_form(&quarter_total(), &conv).unwrap();
        let via_value = optimal_value(&problem).unwrap();
        assert!(
            (via_kernel - via_value).abs() <= 1e-9,
            "{via_kernel} vs {via_value}"
        );
    }

    #[test]
    fn regularity_exponential_expectation_gap() {
        let total = LossDistribution::exponential(1.0).unwrap();
        let report =
            regularity_check(&DistortionKernel::expectation(), &total, &[1.0, 5.0, 10.0]).unwrap();
        for row in &report.rows {
            let want = (-row.level).exp();
            assert!((row.gap - want).abs() < 1e-12, "m = {}", row.level);
        }
        // e^{-10} is still above the pass threshold; m = 15 closes it
        assert!(!report.pass);
        let far = regularity_check(&DistortionKernel::expectation(), &total, &[15.0]).unwrap();
        assert!(far.pass);
    }

    #[test]
    fn regularity_bounded_total_closes_exactly() {
        let report = regularity_check(
            &DistortionKernel::cvar_at(0.5).unwrap(),
            &quarter_total(),
            &[4.0, 9.0],
        )
        .unwrap();
        assert_eq!(report.rows[0].gap, 0.0);
        assert!(report.pass);
    }

    #[test]
    fn regularity_var_unaffected_by_high_truncation() {
        let total = LossDistribution::exponential(1.0).unwrap();
        let report = regularity_check(&var(0.5), &total, &[1.0, 10.0]).unwrap();
        assert_eq!(report.rows[1].gap, 0.0);
        assert!(report.pass);
    }

    #[test]
    fn problem_rejects_negative_total() {
        let total = LossDistribution::discrete(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            MarketProblem::new(agents(&[var(0.5)]), total),
            Err(RiskError::Precondition(_))
        ));
    }

    #[test]
    fn problem_rejects_irregular_agent() {
        let total = LossDistribution::exponential(1.0).unwrap();
        assert!(matches!(
            MarketProblem::new(agents(&[var(1.0)]), total),
            Err(RiskError::Domain(_))
        ));
    }

    #[test]
    fn selector_is_total_independent() {
        // the selector never sees the total; structural equality across
        // problems with different totals is the separation property
        let ag = agents(&[var(0.6), DistortionKernel::cvar_at(0.3).unwrap()]);
        let s1 = optimal_selector(&ag);
        let s2 = optimal_selector(&ag);
        assert_eq!(s1, s2);
    }

    #[test]
    fn selector_invariant_under_common_scaling() {
        let base = agents(&[var(0.6), DistortionKernel::expectation()]);
        let scaled: Vec<AgentSpec> = base
            .iter()
            .map(|a| AgentSpec::new(a.kernel.clone(), a.weight * 4.0).unwrap())
            .collect();
        let s1 = optimal_selector(&base);
        let s2 = optimal_selector(&scaled);
        assert_eq!(s1.pieces, s2.pieces);
        assert_eq!(s1.tie_regions, s2.tie_regions);
        let p1 = MarketProblem::new(base, quarter_total()).unwrap();
        let p2 = MarketProblem::new(scaled, quarter_total()).unwrap();
        let v1 = optimal_value(&p1).unwrap();
        let v2 = optimal_value(&p2).unwrap();
        assert!((v2 - 4.0 * v1).abs() <= 1e-12);
    }

    #[test]
    fn tie_break_swap_keeps_value() {
        // identical kernels: any split of the tie region is optimal
        let ag = agents(&[var(0.5), var(0.5)]);
        let problem = MarketProblem::new(ag, quarter_total()).unwrap();
        let value = optimal_value(&problem).unwrap();
        let swapped = ComonotoneAllocation::all_to_agent(1, 2).unwrap();
        let via_swap = evaluate_allocation(&problem, &swapped).unwrap();
        assert_eq!(value, via_swap);
    }

    #[test]
    fn optimality_bound_all_to_one() {
        let ag = agents(&[var(0.6), DistortionKernel::cvar_at(0.4).unwrap()]);
        let problem = MarketProblem::new(ag.clone(), quarter_total()).unwrap();
        let value = optimal_value(&problem).unwrap();
        assert!(value >= 0.0);
        for agent in &ag {
            let direct = agent.weight * risk_quantile_form(&quarter_total(), &agent.kernel).unwrap();
            assert!(value <= direct + 1e-12);
        }
    }

    #[test]
    fn value_on_truncated_exponential_total() {
        // single expectation agent on Exp(1) truncated at 2:
        // value = E[min(X, 2)] = 1 - e^{-2}
        let total = LossDistribution::exponential(1.0)
            .unwrap()
            .truncate(2.0)
            .unwrap();
        let problem =
            MarketProblem::new(agents(&[DistortionKernel::expectation()]), total).unwrap();
        let got = optimal_value(&problem).unwrap();
        assert!((got - (1.0 - (-2.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn value_on_truncated_uniform_total() {
        let total = LossDistribution::uniform(0.0, 4.0)
            .unwrap()
            .truncate(2.5)
            .unwrap();
        let ag = agents(&[var(0.5), DistortionKernel::expectation()]);
        let problem = MarketProblem::new(ag, total).unwrap();
        let value = optimal_value(&problem).unwrap();
        let alloc = optimal_allocation(&problem).unwrap();
        let evaluated = evaluate_allocation(&problem, &alloc).unwrap();
        assert!((value - evaluated).abs() < 1e-12, "{value} vs {evaluated}");
        // E agent covers the layer up to q(0.5) = 2, VaR agent the excess;
        // value = E[min(X, 2)] with X the truncated uniform
        let expect_layer = problem.total().truncate(2.0).unwrap().expectation();
        assert!((value - expect_layer).abs() < 1e-12);
    }

    #[test]
    fn value_on_uniform_total_two_agents() {
        // (VaR_0.7, VaR_0.8) on U[0, 1]: value = q(0.7) = 0.7
        let problem = MarketProblem::new(
            agents(&[var(0.7), var(0.8)]),
            LossDistribution::uniform(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let got = optimal_value(&problem).unwrap();
        assert!((got - 0.7).abs() < 1e-15);
    }
}
