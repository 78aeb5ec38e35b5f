//! Dual scenario sets and boundedness certificates on finite spaces.
//!
//! On a finite probability space, the dual set of a coherent distortion
//! measure is the core of the distorted capacity: scenario measures `q`
//! with `q(A) <= g(P(A))` for every event `A`, `q >= 0`, `sum q = 1`, and
//! the risk is the support function `sup E_q[X]` over that set. The
//! unconstrained allocation problem for coherent agents is bounded exactly
//! when the weighted sets intersect, and the infimal-convolution value is
//! the support function of the intersection.
//!
//! For non-convex agents boundedness is only certified negatively: a
//! zero-sum allocation ray along which the weighted objective is affine
//! with strictly negative slope proves the infimum is minus infinity.
//! Constructors cover the weight-mismatch cash ray, the VaR-vs-expectation
//! indicator ray, and a seeded randomized search; finding nothing proves
//! nothing.

mod simplex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::allocation::AgentSpec;
use crate::distortion::{risk_quantile_form, DistortionKernel};
use crate::distributions::LossDistribution;
use crate::error::{Result, RiskError};
use crate::exec;
use simplex::{solve, LpOutcome, StandardLp};

/// Hard cap on the number of atoms (event constraints grow as `2^m`).
pub const MAX_ATOMS: usize = 12;

/// Constraint-satisfaction tolerance for feasibility and support values.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Certificates must drive the objective down at least this steeply.
pub const SLOPE_TOL: f64 = 1e-9;

/// A finite probability space: atom probabilities, all positive, summing
/// to one, at most [`MAX_ATOMS`] atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteSpace {
    probs: Vec<f64>,
}

impl FiniteSpace {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.len() > MAX_ATOMS {
            return Err(RiskError::Validation(format!(
                "finite space needs 1..={MAX_ATOMS} atoms, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !p.is_finite() || p <= 0.0) {
            return Err(RiskError::Validation(
                "atom probabilities must be positive".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(RiskError::Validation(format!(
                "atom probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Uniform space on `m` atoms.
    pub fn uniform(m: usize) -> Result<Self> {
        Self::new(vec![1.0 / m as f64; m])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `P(A)` for every event mask, indexed by the mask bits.
    fn event_probs(&self) -> Vec<f64> {
        let m = self.probs.len();
        let mut table = vec![0.0; 1 << m];
        for mask in 1usize..(1 << m) {
            let low = mask.trailing_zeros() as usize;
            table[mask] = table[mask & (mask - 1)] + self.probs[low];
        }
        table
    }

    /// The law of a value vector on this space.
    pub fn vector_law(&self, values: &[f64]) -> Result<LossDistribution> {
        if values.len() != self.probs.len() {
            return Err(RiskError::Validation(format!(
                "value vector has {} entries for {} atoms",
                values.len(),
                self.probs.len()
            )));
        }
        let mut pairs: Vec<(f64, f64)> = values
            .iter()
            .copied()
            .zip(self.probs.iter().copied())
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(LossDistribution::from_weighted_atoms(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        ))
    }
}

/// The dual scenario set of a coherent distortion kernel on a finite
/// space: every event `A` carries the constraint `q(A) <= g(P(A))`.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    space: FiniteSpace,
    /// `g(P(A))` per event mask.
    bounds: Vec<f64>,
}

/// Build the scenario set. Requires a convex kernel: for non-convex
/// kernels the distorted capacity is not the support function of this
/// polytope, and the minimal dominating coherent measure has no finite
/// construction here.
pub fn scenario_set(kernel: &DistortionKernel, space: &FiniteSpace) -> Result<ScenarioSet> {
    if !kernel.is_convex() {
        return Err(RiskError::Precondition(
            "scenario sets require a convex kernel (coherent risk measure)".into(),
        ));
    }
    let event_probs = space.event_probs();
    let dual = kernel.dual();
    let bounds = exec::map_collect(event_probs.len(), |mask| dual.g(event_probs[mask].min(1.0)));
    Ok(ScenarioSet {
        space: space.clone(),
        bounds,
    })
}

impl ScenarioSet {
    pub fn space(&self) -> &FiniteSpace {
        &self.space
    }

    /// `g(P(A))` for the event mask.
    pub fn bound(&self, mask: usize) -> f64 {
        self.bounds[mask]
    }

    /// Most violated event constraint of `lambda * this set` at `q`:
    /// `(mask, q(A) - lambda g(P(A)))` maximizing the violation.
    fn max_violation(&self, q_events: &[f64], lambda: f64) -> (usize, f64) {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (mask, (&q, &bound)) in q_events.iter().zip(&self.bounds).enumerate().skip(1) {
            let v = q - lambda * bound;
            if v > best.1 {
                best = (mask, v);
            }
        }
        best
    }
}

/// Why the stacked constraints admit no point.
#[derive(Debug, Clone, Serialize)]
pub struct InfeasibilityReport {
    pub reason: String,
}

/// Outcome of the intersection feasibility search.
#[derive(Debug, Clone)]
pub enum Feasibility {
    /// A point satisfying every constraint of every `lambda_i Delta_i`
    /// within [`FEASIBILITY_TOL`].
    Feasible(Vec<f64>),
    Infeasible(InfeasibilityReport),
}

enum Goal<'a> {
    Feasibility,
    Maximize(&'a [f64]),
}

/// Cutting-plane master loop: the `2^m` event constraints per agent are
/// enforced lazily through exact separation (a scan over all masks), so
/// the LP only ever sees the active handful.
fn optimize_over_intersection(
    sets: &[ScenarioSet],
    weights: &[f64],
    goal: Goal<'_>,
    extra_eq: &[(Vec<f64>, f64)],
) -> Result<std::result::Result<(Vec<f64>, f64), InfeasibilityReport>> {
    if sets.is_empty() || sets.len() != weights.len() {
        return Err(RiskError::Validation(
            "need one weight per scenario set".into(),
        ));
    }
    let m = sets[0].space.len();
    if sets.iter().any(|s| s.space.len() != m) {
        return Err(RiskError::Validation(
            "scenario sets must share one finite space".into(),
        ));
    }
    if weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
        return Err(RiskError::Validation("weights must be positive".into()));
    }
    let lambda = weights[0];
    if weights.iter().any(|&w| w != lambda) {
        // members of lambda_i Delta_i have total mass lambda_i; distinct
        // masses can never coincide
        return Ok(Err(InfeasibilityReport {
            reason: format!(
                "total-mass constraints conflict: sum(q) = {lambda} vs sum(q) = {}",
                weights.iter().find(|&&w| w != lambda).unwrap()
            ),
        }));
    }

    let c = match goal {
        Goal::Feasibility => vec![0.0; m],
        Goal::Maximize(x0) => {
            if x0.len() != m {
                return Err(RiskError::Validation(
                    "objective vector length must match the space".into(),
                ));
            }
            x0.to_vec()
        }
    };
    // working rows: (agent, mask); seed with the singleton constraints
    let mut rows: Vec<(usize, usize)> = Vec::new();
    for i in 0..sets.len() {
        for j in 0..m {
            rows.push((i, 1usize << j));
        }
    }
    let mut a_eq: Vec<Vec<f64>> = vec![vec![1.0; m]];
    let mut b_eq: Vec<f64> = vec![lambda];
    for (coeffs, rhs) in extra_eq {
        a_eq.push(coeffs.clone());
        b_eq.push(*rhs);
    }

    for _round in 0..10_000 {
        let a_ub: Vec<Vec<f64>> = rows
            .iter()
            .map(|&(_, mask)| {
                (0..m)
                    .map(|j| if mask & (1 << j) != 0 { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let b_ub: Vec<f64> = rows
            .iter()
            .map(|&(i, mask)| lambda * sets[i].bounds[mask])
            .collect();
        let lp = StandardLp {
            c: c.clone(),
            a_ub,
            b_ub,
            a_eq: a_eq.clone(),
            b_eq: b_eq.clone(),
        };
        let (q, value) = match solve(&lp) {
            LpOutcome::Optimal { x, value } => (x, value),
            LpOutcome::Infeasible => {
                return Ok(Err(InfeasibilityReport {
                    reason: "no scenario measure satisfies the stacked event and \
                             equality constraints"
                        .into(),
                }))
            }
            LpOutcome::Unbounded => {
                unreachable!("the scenario polytope is contained in the simplex")
            }
        };
        // exact separation over every event of every agent
        let mut q_events = vec![0.0; 1 << m];
        for mask in 1usize..(1 << m) {
            let low = mask.trailing_zeros() as usize;
            q_events[mask] = q_events[mask & (mask - 1)] + q[low];
        }
        let mut worst: Option<(usize, usize, f64)> = None;
        for (i, set) in sets.iter().enumerate() {
            let (mask, viol) = set.max_violation(&q_events, lambda);
            if viol > FEASIBILITY_TOL * 0.1 && !rows.contains(&(i, mask)) {
                rows.push((i, mask));
                if worst.map(|w| viol > w.2).unwrap_or(true) {
                    worst = Some((i, mask, viol));
                }
            }
        }
        if worst.is_none() {
            return Ok(Ok((q, value)));
        }
    }
    Err(RiskError::Verification(
        "cutting-plane loop failed to converge".into(),
    ))
}

/// Search the intersection of the weighted scenario sets for a feasible
/// point, or report why none exists.
pub fn intersection_feasible(sets: &[ScenarioSet], weights: &[f64]) -> Result<Feasibility> {
    Ok(
        match optimize_over_intersection(sets, weights, Goal::Feasibility, &[])? {
            Ok((q, _)) => Feasibility::Feasible(q),
            Err(report) => Feasibility::Infeasible(report),
        },
    )
}

/// `sup E_q[X0]` over the intersection of the weighted scenario sets: the
/// unconstrained infimal-convolution value for coherent agents.
pub fn support_value(sets: &[ScenarioSet], weights: &[f64], x0: &[f64]) -> Result<f64> {
    match optimize_over_intersection(sets, weights, Goal::Maximize(x0), &[])? {
        Ok((_, value)) => Ok(value),
        Err(report) => Err(RiskError::Precondition(format!(
            "intersection is empty: {}",
            report.reason
        ))),
    }
}

/// The weighted aggregate risk of an allocation given as value vectors.
pub fn objective_on_space(
    agents: &[AgentSpec],
    space: &FiniteSpace,
    allocation: &[Vec<f64>],
) -> Result<f64> {
    if agents.len() != allocation.len() {
        return Err(RiskError::Validation(
            "one value vector per agent required".into(),
        ));
    }
    let mut total = 0.0;
    for (agent, values) in agents.iter().zip(allocation) {
        total += agent.weight * risk_quantile_form(&space.vector_law(values)?, &agent.kernel)?;
    }
    Ok(total)
}

/// Look for a scenario measure certifying optimality of the given
/// allocation: `Y` in the intersection with `lambda_i rho_i(X_i) = E_Y[X_i]`
/// for every agent. `Some` certifies the allocation optimal for the
/// unconstrained problem; `None` means no certificate exists.
pub fn attainability_witness(
    agents: &[AgentSpec],
    space: &FiniteSpace,
    allocation: &[Vec<f64>],
) -> Result<Option<Vec<f64>>> {
    if agents.is_empty() || agents.len() != allocation.len() {
        return Err(RiskError::Validation(
            "one value vector per agent required".into(),
        ));
    }
    let sets: Vec<ScenarioSet> = agents
        .iter()
        .map(|a| scenario_set(&a.kernel, space))
        .collect::<Result<_>>()?;
    let weights: Vec<f64> = agents.iter().map(|a| a.weight).collect();
    let mut extra_eq = Vec::with_capacity(agents.len());
    for (agent, values) in agents.iter().zip(allocation) {
        let rho = risk_quantile_form(&space.vector_law(values)?, &agent.kernel)?;
        extra_eq.push((values.clone(), agent.weight * rho));
    }
    match optimize_over_intersection(&sets, &weights, Goal::Feasibility, &extra_eq)? {
        Ok((q, _)) => Ok(Some(q)),
        Err(_) => Ok(None),
    }
}

/// Objective value recorded along the certificate ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateCheck {
    pub c: f64,
    pub objective: f64,
}

/// A constructive proof of unboundedness: from `base`, moving `c` units
/// along the zero-sum `direction` changes the weighted objective exactly
/// affinely with strictly negative slope, so the infimum is minus
/// infinity. Verification values are recorded at `c` in `{1, 10, 100}`.
#[derive(Debug, Clone, Serialize)]
pub struct UnboundednessCertificate {
    pub base: Vec<Vec<f64>>,
    pub direction: Vec<Vec<f64>>,
    pub slope: f64,
    pub checks: Vec<CertificateCheck>,
    /// Which base component carries the total risk (swapped on rebase).
    #[serde(skip)]
    carrier: Option<usize>,
}

const CHECK_SCALES: [f64; 3] = [1.0, 10.0, 100.0];

impl UnboundednessCertificate {
    /// The allocation `base + c * direction`.
    pub fn ray_at(&self, c: f64) -> Vec<Vec<f64>> {
        self.base
            .iter()
            .zip(&self.direction)
            .map(|(b, d)| b.iter().zip(d).map(|(bv, dv)| bv + c * dv).collect())
            .collect()
    }

    /// Swap two agents' components (base, direction); the slope is
    /// unchanged. For matching a certificate built in canonical agent
    /// order to a problem stated in another order.
    pub fn with_swapped_agents(&self, i: usize, j: usize) -> Self {
        let mut out = self.clone();
        out.base.swap(i, j);
        out.direction.swap(i, j);
        out.carrier = match self.carrier {
            Some(c) if c == i => Some(j),
            Some(c) if c == j => Some(i),
            other => other,
        };
        out
    }

    /// The same ray anchored at a different total: the carrier component
    /// of the base is replaced, everything else is untouched. Certificate
    /// slopes do not depend on the total.
    pub fn rebased(&self, new_total: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        if let Some(i) = self.carrier {
            if new_total.len() != self.base[i].len() {
                return Err(RiskError::Validation(
                    "new total has the wrong number of atoms".into(),
                ));
            }
            out.base[i] = new_total.to_vec();
        }
        out.checks = Vec::new();
        Ok(out)
    }

    /// Recompute the ray objectives under the given market and check the
    /// certificate contract: zero-sum direction, exact affinity within
    /// [`FEASIBILITY_TOL`], slope matching within the same tolerance, and
    /// slope below `-`[`SLOPE_TOL`]. Returns the fresh check values.
    pub fn verify(
        &self,
        agents: &[AgentSpec],
        space: &FiniteSpace,
    ) -> Result<Vec<CertificateCheck>> {
        let m = space.len();
        for j in 0..m {
            let s: f64 = self.direction.iter().map(|d| d[j]).sum();
            if s != 0.0 {
                return Err(RiskError::Verification(format!(
                    "direction is not zero-sum at atom {j}: {s}"
                )));
            }
        }
        let checks: Vec<CertificateCheck> = CHECK_SCALES
            .iter()
            .map(|&c| {
                Ok(CertificateCheck {
                    c,
                    objective: objective_on_space(agents, space, &self.ray_at(c))?,
                })
            })
            .collect::<Result<_>>()?;
        verify_affine(&checks, self.slope)?;
        Ok(checks)
    }
}

fn verify_affine(checks: &[CertificateCheck], slope: f64) -> Result<()> {
    if slope >= -SLOPE_TOL {
        return Err(RiskError::Verification(format!(
            "certificate slope {slope} is not strictly negative"
        )));
    }
    let base = checks[0];
    for chk in &checks[1..] {
        let predicted = base.objective + slope * (chk.c - base.c);
        if (chk.objective - predicted).abs() > FEASIBILITY_TOL * chk.c.max(1.0) {
            return Err(RiskError::Verification(format!(
                "objective at c = {} is {}, affine prediction {predicted}",
                chk.c, chk.objective
            )));
        }
    }
    Ok(())
}

/// Assemble and validate a certificate from an objective evaluator;
/// `None` when the ray is not affine-decreasing.
fn finalize_certificate(
    base: Vec<Vec<f64>>,
    direction: Vec<Vec<f64>>,
    carrier: Option<usize>,
    eval: impl Fn(&[Vec<f64>]) -> Result<f64>,
) -> Result<Option<UnboundednessCertificate>> {
    let ray = |c: f64| -> Vec<Vec<f64>> {
        base.iter()
            .zip(&direction)
            .map(|(b, d)| b.iter().zip(d).map(|(bv, dv)| bv + c * dv).collect())
            .collect()
    };
    let mut checks = Vec::with_capacity(CHECK_SCALES.len());
    for &c in &CHECK_SCALES {
        checks.push(CertificateCheck {
            c,
            objective: eval(&ray(c))?,
        });
    }
    let slope = (checks[1].objective - checks[0].objective) / (checks[1].c - checks[0].c);
    let cert = UnboundednessCertificate {
        base,
        direction,
        slope,
        checks: checks.clone(),
        carrier,
    };
    match verify_affine(&checks, slope) {
        Ok(()) => Ok(Some(cert)),
        Err(_) => Ok(None),
    }
}

/// Weight mismatch makes the problem unbounded: transfer cash from the
/// highest-weighted agent to the lowest-weighted one. `None` when all
/// weights are equal.
pub fn cash_transfer_certificate(
    agents: &[AgentSpec],
    space: &FiniteSpace,
    total: &[f64],
) -> Result<Option<UnboundednessCertificate>> {
    if agents.len() < 2 || total.len() != space.len() {
        return Err(RiskError::Validation(
            "need at least two agents and a matching total vector".into(),
        ));
    }
    let lo = agents
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.weight.partial_cmp(&b.1.weight).unwrap())
        .unwrap()
        .0;
    let hi = agents
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.weight.partial_cmp(&b.1.weight).unwrap())
        .unwrap()
        .0;
    if agents[lo].weight == agents[hi].weight {
        return Ok(None);
    }
    let m = space.len();
    let n = agents.len();
    let mut base = vec![vec![0.0; m]; n];
    base[0] = total.to_vec();
    let mut direction = vec![vec![0.0; m]; n];
    direction[lo] = vec![1.0; m];
    direction[hi] = vec![-1.0; m];
    finalize_certificate(base, direction, Some(0), |alloc| {
        objective_on_space(agents, space, alloc)
    })
}

/// The VaR-versus-expectation ray: agents `(VaR_alpha, E)` with common
/// weight `lambda`. Any event `A` with `0 < P(A) <= 1 - alpha` (proper
/// subsets only) hides the loss `c 1_A` from the VaR agent while the
/// expectation agent books `-c P(A)`; the event of largest such
/// probability gives the steepest ray. `None` when every proper event is
/// too likely.
pub fn var_mean_certificate(
    space: &FiniteSpace,
    alpha: f64,
    lambda: f64,
    total: &[f64],
) -> Result<Option<UnboundednessCertificate>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(RiskError::Validation(format!(
            "VaR level {alpha} outside [0, 1]"
        )));
    }
    if !lambda.is_finite() || lambda <= 0.0 || total.len() != space.len() {
        return Err(RiskError::Validation(
            "need a positive weight and a matching total vector".into(),
        ));
    }
    let m = space.len();
    let cap = 1.0 - alpha;
    let event_probs = space.event_probs();
    let full = (1usize << m) - 1;
    let mut best: Option<(usize, f64)> = None;
    for (mask, &p) in event_probs.iter().enumerate().take(full).skip(1) {
        if p <= cap && best.map(|b| p > b.1).unwrap_or(true) {
            best = Some((mask, p));
        }
    }
    let Some((mask, _)) = best else {
        return Ok(None);
    };
    let indicator: Vec<f64> = (0..m)
        .map(|j| if mask & (1 << j) != 0 { 1.0 } else { 0.0 })
        .collect();
    let base = vec![vec![0.0; m], total.to_vec()];
    let negated: Vec<f64> = indicator.iter().map(|&v| if v == 0.0 { 0.0 } else { -v }).collect();
    let direction = vec![indicator.clone(), negated];
    // the VaR leg is evaluated directly so alpha = 0 (essential infimum)
    // stays expressible
    let eval = |alloc: &[Vec<f64>]| -> Result<f64> {
        let var_leg = space.vector_law(&alloc[0])?;
        let var_risk = if alpha == 0.0 {
            var_leg.min_support()
        } else {
            var_leg.quantile(alpha)?
        };
        let mean_leg = space.vector_law(&alloc[1])?;
        Ok(lambda * var_risk + lambda * mean_leg.expectation())
    };
    finalize_certificate(base, direction, Some(1), eval)
}

/// Seeded randomized search for a zero-sum direction with
/// `sum_i lambda_i rho_i(D_i) < -`[`SLOPE_TOL`]; positive homogeneity
/// turns any hit into a valid ray (anchored at the zero base). Candidates
/// alternate between pairwise indicator transfers and dense zero-sum
/// vectors; parallel probes resolve to the lowest-index hit, so the result
/// is deterministic for a given seed. **A `None` here proves nothing**:
/// the problem may still be unbounded.
pub fn randomized_certificate_search(
    agents: &[AgentSpec],
    space: &FiniteSpace,
    iterations: usize,
    seed: u64,
) -> Result<Option<UnboundednessCertificate>> {
    if iterations == 0 {
        return Err(RiskError::Precondition("iterations must be >= 1".into()));
    }
    if agents.len() < 2 {
        return Err(RiskError::Validation("need at least two agents".into()));
    }
    let n = agents.len();
    let m = space.len();
    let full = (1usize << m) - 1;

    let candidate = |it: usize| -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(it as u64 + 1);
        let mut direction = vec![vec![0.0; m]; n];
        if it.is_multiple_of(2) {
            // pairwise indicator transfer
            let mask = 1 + rng.random_range(0..full - 1);
            let give = rng.random_range(0..n);
            let take = (give + 1 + rng.random_range(0..n - 1)) % n;
            let indicator: Vec<f64> = (0..m)
                .map(|j| if mask & (1 << j) != 0 { 1.0 } else { 0.0 })
                .collect();
            direction[take] = indicator
                .iter()
                .map(|&v| if v == 0.0 { 0.0 } else { -v })
                .collect();
            direction[give] = indicator;
        } else {
            // dense zero-sum candidate
            for row in direction.iter_mut().take(n - 1) {
                for v in row.iter_mut() {
                    *v = rng.random_range(-1.0..1.0);
                }
            }
            let last: Vec<f64> = (0..m)
                .map(|j| {
                    let s: f64 = direction[..n - 1].iter().map(|row| row[j]).sum();
                    if s == 0.0 {
                        0.0
                    } else {
                        -s
                    }
                })
                .collect();
            direction[n - 1] = last;
        }
        direction
    };

    let hit = exec::first_some(iterations, |it| {
        let direction = candidate(it);
        match objective_on_space(agents, space, &direction) {
            Ok(slope) if slope < -SLOPE_TOL => Some(direction),
            _ => None,
        }
    });
    let Some((_, direction)) = hit else {
        return Ok(None);
    };
    let base = vec![vec![0.0; m]; n];
    finalize_certificate(base, direction, None, |alloc| {
        objective_on_space(agents, space, alloc)
    })
}
