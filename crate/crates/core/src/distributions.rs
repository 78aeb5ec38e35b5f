//! Loss distributions and monotone transforms.
//!
//! A [`LossDistribution`] is the law of a loss variable: an empirical
//! sample, discrete atoms, a uniform or exponential family, or a
//! truncation `min(X, m)` of a continuous family (continuous part plus an
//! atom at the cutoff). All queries are exact for the supported families;
//! no quadrature is used anywhere on these paths.
//!
//! The quantile convention throughout the crate is the lower quantile
//! `q(t) = inf { x : F(x) >= t }`, which is left-continuous in `t` and
//! commutes with non-decreasing continuous transforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, RiskError};

/// Absolute tolerance for probability bookkeeping (sums to one, etc.).
pub const PROB_TOL: f64 = 1e-12;

/// Grid size used when a continuous law must be materialized as discrete
/// atoms (see [`LossDistribution::pushforward`]). Equal-probability
/// midpoint cells: cell `j` maps to the quantile at `(j + 1/2) / N`.
pub const PUSHFORWARD_GRID: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum DistKind {
    /// Sorted sample values, equal weights, ties allowed (merged on query).
    Empirical { values: Vec<f64> },
    /// Strictly ascending atom values with positive probabilities.
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    /// Continuous uniform on `[lower, upper]`.
    Uniform { lower: f64, upper: f64 },
    /// Exponential with the given rate (mean `1/rate`).
    Exponential { rate: f64 },
    /// `min(X, cutoff)` for a continuous base law: continuous below the
    /// cutoff, atom of mass `S_base(cutoff)` at the cutoff.
    Truncated { base: Box<DistKind>, cutoff: f64 },
}

/// The law of a loss variable.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDistribution {
    pub(crate) kind: DistKind,
}

/// Merge sorted sample values into distinct atoms with exact cumulative
/// masses `prefix_count / n` (one division per boundary, no accumulation),
/// the last snapped to one.
fn empirical_merged(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let mut vs: Vec<f64> = Vec::new();
    let mut cum: Vec<f64> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if vs.last() == Some(&v) {
            *cum.last_mut().unwrap() = (i + 1) as f64 / n as f64;
        } else {
            vs.push(v);
            cum.push((i + 1) as f64 / n as f64);
        }
    }
    *cum.last_mut().unwrap() = 1.0;
    (vs, cum)
}

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(RiskError::Validation(format!("{what} must be finite")));
    }
    Ok(())
}

impl LossDistribution {
    /// Empirical sample with equal weights. Values are sorted; ties allowed.
    pub fn empirical(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(RiskError::Validation("empirical sample is empty".into()));
        }
        ensure_finite(&values, "sample values")?;
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self {
            kind: DistKind::Empirical { values },
        })
    }

    /// Discrete atoms: strictly ascending values, positive probabilities
    /// summing to one within [`PROB_TOL`].
    pub fn discrete(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(RiskError::Validation(
                "discrete atoms need matching non-empty value/probability lists".into(),
            ));
        }
        ensure_finite(&values, "atom values")?;
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RiskError::Validation(
                "atom values must be strictly ascending".into(),
            ));
        }
        if probs.iter().any(|&p| !p.is_finite() || p <= 0.0) {
            return Err(RiskError::Validation(
                "atom probabilities must be positive".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(RiskError::Validation(format!(
                "atom probabilities sum to {total}, expected 1 within {PROB_TOL}"
            )));
        }
        Ok(Self {
            kind: DistKind::Discrete { values, probs },
        })
    }

    /// Point mass at `c`.
    pub fn point_mass(c: f64) -> Result<Self> {
        Self::discrete(vec![c], vec![1.0])
    }

    /// Continuous uniform on `[lower, upper]`.
    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() || lower >= upper {
            return Err(RiskError::Validation(
                "uniform requires finite lower < upper".into(),
            ));
        }
        Ok(Self {
            kind: DistKind::Uniform { lower, upper },
        })
    }

    /// Exponential with rate `rate > 0`.
    pub fn exponential(rate: f64) -> Result<Self> {
        if !rate.is_finite() || rate <= 0.0 {
            return Err(RiskError::Validation("exponential rate must be > 0".into()));
        }
        Ok(Self {
            kind: DistKind::Exponential { rate },
        })
    }

    /// Support is contained in `[0, infinity)`; equivalently `F(0-) = 0`.
    pub fn is_nonneg(&self) -> bool {
        self.min_support() >= 0.0
    }

    /// Smallest point of the support.
    pub fn min_support(&self) -> f64 {
        match &self.kind {
            DistKind::Empirical { values } => values[0],
            DistKind::Discrete { values, .. } => values[0],
            DistKind::Uniform { lower, .. } => *lower,
            DistKind::Exponential { .. } => 0.0,
            DistKind::Truncated { base, .. } => Self { kind: (**base).clone() }.min_support(),
        }
    }

    /// Largest point of the support, `None` when unbounded above.
    pub fn max_support(&self) -> Option<f64> {
        match &self.kind {
            DistKind::Empirical { values } => Some(*values.last().unwrap()),
            DistKind::Discrete { values, .. } => Some(*values.last().unwrap()),
            DistKind::Uniform { upper, .. } => Some(*upper),
            DistKind::Exponential { .. } => None,
            DistKind::Truncated { cutoff, .. } => Some(*cutoff),
        }
    }

    /// Distinct atom values with merged probabilities, or `None` for laws
    /// with a continuous part. The final cumulative mass is forced to one.
    pub fn atoms(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.kind {
            DistKind::Discrete { values, probs } => Some((values.clone(), probs.clone())),
            DistKind::Empirical { values } => {
                let (vs, cum) = empirical_merged(values);
                let mut prev = 0.0;
                let ps = cum
                    .iter()
                    .map(|&c| {
                        let p = c - prev;
                        prev = c;
                        p
                    })
                    .collect();
                Some((vs, ps))
            }
            _ => None,
        }
    }

    /// Cumulative masses `F(v_j)` aligned with [`Self::atoms`], with the last
    /// entry snapped to exactly one.
    pub(crate) fn cumulative(values: &[f64], probs: &[f64]) -> Vec<f64> {
        let mut cum = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        for &p in probs {
            acc += p;
            cum.push(acc);
        }
        *cum.last_mut().unwrap() = 1.0;
        cum
    }

    /// Right-continuous CDF `F(x) = P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            DistKind::Empirical { values } => {
                let k = values.partition_point(|&v| v <= x);
                if k == values.len() {
                    1.0
                } else {
                    k as f64 / values.len() as f64
                }
            }
            DistKind::Discrete { values, probs } => {
                let k = values.partition_point(|&v| v <= x);
                if k == values.len() {
                    1.0
                } else {
                    probs[..k].iter().sum()
                }
            }
            DistKind::Uniform { lower, upper } => {
                ((x - lower) / (upper - lower)).clamp(0.0, 1.0)
            }
            DistKind::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            DistKind::Truncated { base, cutoff } => {
                if x >= *cutoff {
                    1.0
                } else {
                    Self { kind: (**base).clone() }.cdf(x)
                }
            }
        }
    }

    /// Survival function `S(x) = P(X > x)`.
    pub fn survival(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }

    /// Left limit `F(x-) = P(X < x)`; differs from `cdf` only at atoms.
    pub fn cdf_left(&self, x: f64) -> f64 {
        match &self.kind {
            DistKind::Empirical { values } => {
                let k = values.partition_point(|&v| v < x);
                if k == values.len() {
                    1.0
                } else {
                    k as f64 / values.len() as f64
                }
            }
            DistKind::Discrete { values, probs } => {
                let k = values.partition_point(|&v| v < x);
                if k == values.len() {
                    1.0
                } else {
                    probs[..k].iter().sum()
                }
            }
            DistKind::Truncated { base, cutoff } => {
                if x > *cutoff {
                    1.0
                } else {
                    Self { kind: (**base).clone() }.cdf(x)
                }
            }
            _ => self.cdf(x),
        }
    }

    /// Lower quantile `q(t) = inf { x : F(x) >= t }` for `t` in `(0, 1]`.
    ///
    /// `t = 0` is rejected (the infimum over the whole line), as are
    /// arguments outside `[0, 1]`. For unbounded laws `q(1)` is infinite.
    pub fn quantile(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) || t.is_nan() {
            return Err(RiskError::Domain(format!(
                "quantile level {t} outside [0, 1]"
            )));
        }
        if t == 0.0 {
            return Err(RiskError::Domain(
                "quantile at level 0 is the essential infimum over all reals".into(),
            ));
        }
        Ok(self.quantile_unchecked(t))
    }

    /// `quantile` without the argument checks; `t` must be in `(0, 1]`.
    pub(crate) fn quantile_unchecked(&self, t: f64) -> f64 {
        match &self.kind {
            DistKind::Empirical { values } => {
                let (vs, cum) = empirical_merged(values);
                let idx = cum.partition_point(|&c| c < t);
                vs[idx.min(vs.len() - 1)]
            }
            DistKind::Discrete { values, probs } => {
                let cum = Self::cumulative(values, probs);
                let idx = cum.partition_point(|&c| c < t);
                values[idx.min(values.len() - 1)]
            }
            DistKind::Uniform { lower, upper } => lower + t * (upper - lower),
            DistKind::Exponential { rate } => {
                if t == 1.0 {
                    f64::INFINITY
                } else {
                    -(-t).ln_1p() / rate
                }
            }
            DistKind::Truncated { base, cutoff } => {
                let q = Self { kind: (**base).clone() }.quantile_unchecked(t);
                q.min(*cutoff)
            }
        }
    }

    /// Expected value; exact for discrete and analytic for parametric laws.
    pub fn expectation(&self) -> f64 {
        match &self.kind {
            DistKind::Empirical { values } => {
                values.iter().sum::<f64>() / values.len() as f64
            }
            DistKind::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .map(|(v, p)| v * p)
                .sum(),
            DistKind::Uniform { lower, upper } => 0.5 * (lower + upper),
            DistKind::Exponential { rate } => 1.0 / rate,
            DistKind::Truncated { base, cutoff } => match &**base {
                // E[min(X, m)] for the base families.
                DistKind::Exponential { rate } => (1.0 - (-rate * cutoff).exp()) / rate,
                DistKind::Uniform { lower, upper } => {
                    let m = cutoff.min(*upper);
                    let w = upper - lower;
                    (m * m - lower * lower) / (2.0 * w) + m * (upper - m) / w
                }
                _ => unreachable!("truncation base is always a continuous family"),
            },
        }
    }

    /// Law of `min(X, m)`. Requires `m` above the smallest support point.
    pub fn truncate(&self, m: f64) -> Result<Self> {
        if !m.is_finite() || m <= self.min_support() {
            return Err(RiskError::Precondition(format!(
                "truncation level {m} must exceed the infimum of the support"
            )));
        }
        if let Some(hi) = self.max_support() {
            if m >= hi {
                return Ok(self.clone());
            }
        }
        let kind = match &self.kind {
            DistKind::Empirical { values } => DistKind::Empirical {
                values: values.iter().map(|&v| v.min(m)).collect(),
            },
            DistKind::Discrete { values, probs } => {
                let mut vs = Vec::new();
                let mut ps = Vec::new();
                let mut tail = 0.0;
                for (&v, &p) in values.iter().zip(probs) {
                    if v < m {
                        vs.push(v);
                        ps.push(p);
                    } else {
                        tail += p;
                    }
                }
                if tail > 0.0 {
                    vs.push(m);
                    ps.push(tail);
                }
                DistKind::Discrete { values: vs, probs: ps }
            }
            DistKind::Uniform { .. } | DistKind::Exponential { .. } => DistKind::Truncated {
                base: Box::new(self.kind.clone()),
                cutoff: m,
            },
            DistKind::Truncated { base, cutoff } => DistKind::Truncated {
                base: base.clone(),
                cutoff: cutoff.min(m),
            },
        };
        Ok(Self { kind })
    }

    /// Law of `f(X)` for non-decreasing `f`.
    ///
    /// Exact for atomic laws (atoms map through `f` and merge). Laws with a
    /// continuous part are materialized on an equal-probability grid of
    /// [`PUSHFORWARD_GRID`] cells; exact evaluation paths elsewhere in the
    /// crate never materialize the pushforward.
    pub fn pushforward(&self, f: &PiecewiseMonotoneFn) -> Self {
        match &self.kind {
            DistKind::Empirical { values } => Self {
                kind: DistKind::Empirical {
                    values: values.iter().map(|&v| f.eval(v)).collect(),
                },
            },
            DistKind::Discrete { values, probs } => {
                let mapped: Vec<f64> = values.iter().map(|&v| f.eval(v)).collect();
                Self::from_weighted_atoms(mapped, probs.clone())
            }
            _ => {
                let n = PUSHFORWARD_GRID;
                let mut mapped = Vec::with_capacity(n);
                for j in 0..n {
                    let t = (j as f64 + 0.5) / n as f64;
                    mapped.push(f.eval(self.quantile_unchecked(t)));
                }
                Self::from_weighted_atoms(mapped, vec![1.0 / n as f64; n])
            }
        }
    }

    /// Build a discrete law from non-decreasing values with weights,
    /// merging equal adjacent values.
    pub(crate) fn from_weighted_atoms(values: Vec<f64>, probs: Vec<f64>) -> Self {
        let mut vs: Vec<f64> = Vec::new();
        let mut ps: Vec<f64> = Vec::new();
        for (v, p) in values.into_iter().zip(probs) {
            if vs.last() == Some(&v) {
                *ps.last_mut().unwrap() += p;
            } else {
                vs.push(v);
                ps.push(p);
            }
        }
        Self {
            kind: DistKind::Discrete { values: vs, probs: ps },
        }
    }

    /// Draw `n` inverse-transform samples; deterministic for a given seed.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(RiskError::Precondition("sample size must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let mut r: f64 = rng.random();
            while r == 0.0 {
                r = rng.random();
            }
            // 1 - r lies in (0, 1)
            values.push(self.quantile_unchecked(1.0 - r));
        }
        Self::empirical(values)
    }

    /// Exact `int_a^b q(t) dt` for `0 <= a <= b <= 1`.
    ///
    /// Finite for every supported family except when `b = 1` and the law is
    /// unbounded above with a non-integrable tail; callers gate that case
    /// via the distortion-domain check (the exponential tail integral is
    /// finite, and is evaluated by its closed form).
    pub(crate) fn quantile_integral(&self, a: f64, b: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&a) && a <= b && b <= 1.0);
        if a == b {
            return 0.0;
        }
        match &self.kind {
            DistKind::Empirical { .. } | DistKind::Discrete { .. } => {
                let (values, cum) = match &self.kind {
                    DistKind::Empirical { values } => empirical_merged(values),
                    DistKind::Discrete { values, probs } => {
                        (values.clone(), Self::cumulative(values, probs))
                    }
                    _ => unreachable!(),
                };
                let mut total = 0.0;
                // first atom whose cumulative interval can overlap [a, b)
                let start = cum.partition_point(|&c| c < a);
                let mut lo = if start == 0 { 0.0 } else { cum[start - 1] };
                for (v, hi) in values[start..].iter().zip(cum[start..].iter()) {
                    let overlap = hi.min(b) - lo.max(a);
                    if overlap > 0.0 {
                        total += v * overlap;
                    }
                    lo = *hi;
                    if lo >= b {
                        break;
                    }
                }
                total
            }
            DistKind::Uniform { lower, upper } => {
                lower * (b - a) + 0.5 * (upper - lower) * (b * b - a * a)
            }
            DistKind::Exponential { rate } => {
                // antiderivative of -ln(1-t)/rate
                let anti = |t: f64| {
                    if t == 1.0 {
                        1.0 / rate
                    } else {
                        ((1.0 - t) * (1.0 - t).ln() + t) / rate
                    }
                };
                anti(b) - anti(a)
            }
            DistKind::Truncated { base, cutoff } => {
                let base_dist = Self { kind: (**base).clone() };
                let tc = base_dist.cdf(*cutoff);
                let mut total = 0.0;
                if a < tc {
                    total += base_dist.quantile_integral(a, b.min(tc));
                }
                if b > tc {
                    total += cutoff * (b - a.max(tc));
                }
                total
            }
        }
    }
}

/// Read an empirical sample from a CSV file with a single `loss` column.
pub fn ingest_csv(path: &std::path::Path) -> Result<LossDistribution> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| RiskError::Parse(format!("{}: {e}", path.display())))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| RiskError::Parse(format!("{}: {e}", path.display())))?;
        if headers.len() != 1 || headers.get(0) != Some("loss") {
            return Err(RiskError::Parse(format!(
                "{}: expected a single `loss` column, got {:?}",
                path.display(),
                headers
            )));
        }
    }
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, after the header
        let record =
            record.map_err(|e| RiskError::Parse(format!("{}:{row}: {e}", path.display())))?;
        let field = record.get(0).ok_or_else(|| {
            RiskError::Parse(format!("{}:{row}: missing loss value", path.display()))
        })?;
        let value: f64 = field.trim().parse().map_err(|_| {
            RiskError::Parse(format!(
                "{}:{row}: `{field}` is not a real number",
                path.display()
            ))
        })?;
        if !value.is_finite() {
            return Err(RiskError::Parse(format!(
                "{}:{row}: loss value must be finite",
                path.display()
            )));
        }
        values.push(value);
    }
    if values.is_empty() {
        return Err(RiskError::Parse(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    LossDistribution::empirical(values)
}

/// A non-decreasing piecewise-linear function given by knots plus an
/// extrapolation slope beyond the last knot.
///
/// Left of the first knot the first segment's slope extends (for a single
/// knot, the extrapolation slope). Allocation components additionally
/// satisfy `f(0) = 0` and are 1-Lipschitz; see
/// [`Self::is_allocation_component`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PiecewiseMonotoneFn {
    knots: Vec<(f64, f64)>,
    right_slope: f64,
}

impl PiecewiseMonotoneFn {
    pub fn new(knots: Vec<(f64, f64)>, right_slope: f64) -> Result<Self> {
        if knots.is_empty() {
            return Err(RiskError::Validation("need at least one knot".into()));
        }
        if knots.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(RiskError::Validation("knots must be finite".into()));
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(RiskError::Validation(
                    "knot x-coordinates must be strictly ascending".into(),
                ));
            }
            if w[1].1 < w[0].1 {
                return Err(RiskError::Validation(
                    "knot y-coordinates must be non-decreasing".into(),
                ));
            }
        }
        if !right_slope.is_finite() || right_slope < 0.0 {
            return Err(RiskError::Validation(
                "extrapolation slope must be finite and >= 0".into(),
            ));
        }
        Ok(Self { knots, right_slope })
    }

    /// The identity map.
    pub fn identity() -> Self {
        Self {
            knots: vec![(0.0, 0.0)],
            right_slope: 1.0,
        }
    }

    /// The zero map.
    pub fn zero() -> Self {
        Self {
            knots: vec![(0.0, 0.0)],
            right_slope: 0.0,
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn right_slope(&self) -> f64 {
        self.right_slope
    }

    fn left_slope(&self) -> f64 {
        if self.knots.len() >= 2 {
            self.segment_slope(0)
        } else {
            self.right_slope
        }
    }

    fn segment_slope(&self, i: usize) -> f64 {
        let (x0, y0) = self.knots[i];
        let (x1, y1) = self.knots[i + 1];
        (y1 - y0) / (x1 - x0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.knots.len();
        if x <= self.knots[0].0 {
            let (x0, y0) = self.knots[0];
            return y0 + self.left_slope() * (x - x0);
        }
        if x >= self.knots[n - 1].0 {
            let (x0, y0) = self.knots[n - 1];
            if x == x0 {
                return y0;
            }
            return y0 + self.right_slope * (x - x0);
        }
        let i = self.knots.partition_point(|&(kx, _)| kx <= x) - 1;
        let (x0, y0) = self.knots[i];
        y0 + self.segment_slope(i) * (x - x0)
    }

    /// Limit value as `x` tends to infinity when the function is eventually
    /// flat, else `None`.
    pub(crate) fn limit_at_infinity(&self) -> Option<f64> {
        if self.right_slope == 0.0 {
            Some(self.knots.last().unwrap().1)
        } else {
            None
        }
    }

    /// Largest slope over all segments and the extrapolation tail.
    pub fn max_slope(&self) -> f64 {
        let mut m = self.right_slope;
        for i in 0..self.knots.len().saturating_sub(1) {
            m = m.max(self.segment_slope(i));
        }
        m
    }

    /// Check the allocation-component contract: `f(0) = 0`, non-decreasing,
    /// 1-Lipschitz (all slopes in `[0, 1]` within `tol`).
    pub fn is_allocation_component(&self, tol: f64) -> bool {
        self.eval(0.0).abs() <= tol && self.max_slope() <= 1.0 + tol
    }

    /// Knot x-coordinates (the boundaries of the affine pieces).
    pub(crate) fn piece_bounds(&self) -> Vec<f64> {
        self.knots.iter().map(|&(x, _)| x).collect()
    }

    /// The affine piece containing `x` as `(x0, y0, slope)` with
    /// `f(t) = y0 + slope * (t - x0)` near `x`.
    pub(crate) fn affine_at(&self, x: f64) -> (f64, f64, f64) {
        let n = self.knots.len();
        if x < self.knots[0].0 {
            let (x0, y0) = self.knots[0];
            return (x0, y0, self.left_slope());
        }
        if x >= self.knots[n - 1].0 {
            let (x0, y0) = self.knots[n - 1];
            return (x0, y0, self.right_slope);
        }
        let i = self.knots.partition_point(|&(kx, _)| kx <= x) - 1;
        let (x0, y0) = self.knots[i];
        (x0, y0, self.segment_slope(i))
    }
}

/// A right-continuous step function on the loss axis: `values[i]` on
/// `[bounds[i], bounds[i+1])`, and `values[last]` beyond the last bound.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StepFn {
    pub bounds: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFn {
    pub fn new(bounds: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if bounds.is_empty() || bounds.len() != values.len() {
            return Err(RiskError::Validation(
                "step function needs matching non-empty bounds/values".into(),
            ));
        }
        if bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RiskError::Validation(
                "step bounds must be strictly ascending".into(),
            ));
        }
        Ok(Self { bounds, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.bounds.partition_point(|&b| b <= x);
        if i == 0 {
            self.values[0]
        } else {
            self.values[i - 1]
        }
    }
}
