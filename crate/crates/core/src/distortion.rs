//! Distortion kernels and distortion risk measures.
//!
//! A [`DistortionKernel`] is a non-decreasing cadlag map `phi` on `[0, 1]`
//! with `phi(0) = 0` and `phi(1) = 1`, stored as linear pieces plus jump
//! atoms. It induces a measure on `[0, 1]`, and the risk of a loss `X` is
//! the Lebesgue-Stieltjes integral of the lower quantile of `X` against
//! that measure ([`risk_quantile_form`]). The equivalent Choquet form
//! ([`risk_choquet_form`]) integrates the dual distortion
//! `g(x) = 1 - phi(1 - x)` of the survival function over the loss axis.
//!
//! Convention at atoms: an atom of `phi` at `t` picks up the
//! left-continuous quantile at `t`, and `g` is evaluated through the cadlag
//! `phi`, so it takes the lower value at its own jump points. Under this
//! pairing a unit jump at `alpha` reproduces the `alpha`-VaR exactly and
//! the two forms agree on atomic laws.

use crate::distributions::{DistKind, LossDistribution, PiecewiseMonotoneFn};
use crate::error::{Result, RiskError};

/// Pieces used to discretize the proportional-hazard kernel
/// `phi(t) = 1 - (1 - t)^r`. The discretization error is well below 1e-6
/// in risk for bounded losses; exact-arithmetic assertions exclude this
/// family.
pub const PROP_HAZARD_GRID: usize = 1024;

const MEASURE_TOL: f64 = 1e-12;

/// A distortion kernel: linear pieces plus jump atoms on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionKernel {
    /// Breakpoints `0 = ts[0] < ... < ts[k] = 1`.
    ts: Vec<f64>,
    /// Jump mass exactly at `ts[i]`; `jumps[0] == 0`.
    jumps: Vec<f64>,
    /// Constant density on `[ts[i], ts[i+1])`.
    slopes: Vec<f64>,
    /// Cached cadlag values `phi(ts[i])`; `vals[k]` is exactly one.
    vals: Vec<f64>,
}

/// One node of a user-supplied kernel: the cadlag value `phi` at `t`, with
/// an optional jump of the given mass arriving at `t`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelPoint {
    pub t: f64,
    pub phi: f64,
    #[serde(default)]
    pub jump: f64,
}

impl DistortionKernel {
    fn from_parts(ts: Vec<f64>, jumps: Vec<f64>, slopes: Vec<f64>, mut vals: Vec<f64>) -> Result<Self> {
        let k = ts.len();
        if k < 2 || jumps.len() != k || vals.len() != k || slopes.len() != k - 1 {
            return Err(RiskError::Validation("malformed kernel parts".into()));
        }
        if ts[0] != 0.0 || ts[k - 1] != 1.0 || ts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RiskError::Validation(
                "kernel breakpoints must ascend strictly from 0 to 1".into(),
            ));
        }
        if jumps[0] != 0.0 {
            return Err(RiskError::Validation(
                "phi(0) = 0 forbids an atom at level 0".into(),
            ));
        }
        if jumps.iter().any(|&j| j < 0.0 || !j.is_finite())
            || slopes.iter().any(|&s| s < 0.0 || !s.is_finite())
        {
            return Err(RiskError::Validation(
                "kernel slopes and jumps must be finite and non-negative".into(),
            ));
        }
        if vals[0] != 0.0 {
            return Err(RiskError::Validation("phi(0) must equal 0".into()));
        }
        if (vals[k - 1] - 1.0).abs() > MEASURE_TOL {
            return Err(RiskError::Validation(format!(
                "total kernel measure is {}, expected 1 within {MEASURE_TOL}",
                vals[k - 1]
            )));
        }
        // internal consistency of values vs. pieces (loose; guards drift)
        for i in 0..k - 1 {
            let left_limit = vals[i] + slopes[i] * (ts[i + 1] - ts[i]);
            if (left_limit - (vals[i + 1] - jumps[i + 1])).abs() > 1e-9 {
                return Err(RiskError::Validation(
                    "kernel pieces are inconsistent with breakpoint values".into(),
                ));
            }
        }
        vals[k - 1] = 1.0;
        Ok(Self { ts, jumps, slopes, vals })
    }

    /// The expectation kernel `phi(t) = t` (Net Premium Principle).
    pub fn expectation() -> Self {
        Self::from_parts(vec![0.0, 1.0], vec![0.0, 0.0], vec![1.0], vec![0.0, 1.0]).unwrap()
    }

    /// Value at Risk at level `alpha` in `(0, 1]`: a unit jump at `alpha`.
    pub fn var_at(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(RiskError::Validation(format!(
                "VaR level {alpha} outside (0, 1]"
            )));
        }
        if alpha == 1.0 {
            return Self::from_parts(vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0], vec![0.0, 1.0]);
        }
        Self::from_parts(
            vec![0.0, alpha, 1.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0],
            vec![0.0, 1.0, 1.0],
        )
    }

    /// Conditional Value at Risk at level `alpha` in `[0, 1)`:
    /// `phi(t) = (t - alpha) / (1 - alpha)` on `[alpha, 1]`.
    pub fn cvar_at(alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(RiskError::Validation(format!(
                "CVaR level {alpha} outside [0, 1)"
            )));
        }
        if alpha == 0.0 {
            return Ok(Self::expectation());
        }
        Self::from_parts(
            vec![0.0, alpha, 1.0],
            vec![0.0, 0.0, 0.0],
            vec![0.0, 1.0 / (1.0 - alpha)],
            vec![0.0, 0.0, 1.0],
        )
    }

    /// Proportional-hazard kernel `phi(t) = 1 - (1 - t)^r`, `r` in `(0, 1]`,
    /// discretized to [`PROP_HAZARD_GRID`] equal pieces.
    pub fn prop_hazard(r: f64) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(RiskError::Validation(format!(
                "proportional-hazard exponent {r} outside (0, 1]"
            )));
        }
        if r == 1.0 {
            return Ok(Self::expectation());
        }
        let n = PROP_HAZARD_GRID;
        let phi = |t: f64| 1.0 - (1.0 - t).powf(r);
        let mut ts = Vec::with_capacity(n + 1);
        let mut vals = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let t = i as f64 / n as f64;
            ts.push(t);
            vals.push(phi(t));
        }
        let slopes = (0..n)
            .map(|i| (vals[i + 1] - vals[i]) / (ts[i + 1] - ts[i]))
            .collect();
        Self::from_parts(ts, vec![0.0; n + 1], slopes, vals)
    }

    /// Kernel through explicit nodes; see [`KernelPoint`].
    pub fn from_points(points: &[KernelPoint]) -> Result<Self> {
        if points.len() < 2 {
            return Err(RiskError::Validation("need at least two kernel points".into()));
        }
        let ts: Vec<f64> = points.iter().map(|p| p.t).collect();
        let vals: Vec<f64> = points.iter().map(|p| p.phi).collect();
        let jumps: Vec<f64> = points.iter().map(|p| p.jump).collect();
        let mut slopes = Vec::with_capacity(points.len() - 1);
        for w in points.windows(2) {
            let width = w[1].t - w[0].t;
            if width <= 0.0 {
                return Err(RiskError::Validation(
                    "kernel points must have strictly ascending t".into(),
                ));
            }
            let rise = (w[1].phi - w[1].jump) - w[0].phi;
            if rise < -MEASURE_TOL {
                return Err(RiskError::Validation(
                    "kernel values must be non-decreasing between points".into(),
                ));
            }
            slopes.push(rise.max(0.0) / width);
        }
        Self::from_parts(ts, jumps, slopes, vals)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.ts
    }

    pub(crate) fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    pub(crate) fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Mass of the atom at level 1 (`1 - lim_{t -> 1} phi(t)`).
    pub fn jump_at_one(&self) -> f64 {
        *self.jumps.last().unwrap()
    }

    /// Cadlag evaluation `phi(t)` for `t` in `[0, 1]`.
    pub fn phi(&self, t: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&t));
        let i = self.ts.partition_point(|&x| x <= t);
        if i == self.ts.len() {
            return 1.0;
        }
        let i = i - 1;
        if t == self.ts[i] {
            self.vals[i]
        } else {
            self.vals[i] + self.slopes[i] * (t - self.ts[i])
        }
    }

    /// Left limit `phi(t-)`.
    pub fn phi_left(&self, t: f64) -> f64 {
        debug_assert!(t > 0.0 && t <= 1.0);
        let i = self.ts.partition_point(|&x| x < t);
        // ts[i-1] < t <= ts[i] (i >= 1 since ts[0] = 0 < t)
        if i < self.ts.len() && t == self.ts[i] {
            self.vals[i] - self.jumps[i]
        } else {
            self.vals[i - 1] + self.slopes[i - 1] * (t - self.ts[i - 1])
        }
    }

    /// Density of the linear piece containing `t` (not a breakpoint of the
    /// piece's right end).
    pub(crate) fn slope_at(&self, t: f64) -> f64 {
        let i = self.ts.partition_point(|&x| x <= t);
        if i == 0 {
            self.slopes[0]
        } else if i >= self.ts.len() {
            *self.slopes.last().unwrap()
        } else {
            self.slopes[i - 1]
        }
    }

    /// Dual distortion view `g(x) = 1 - phi(1 - x)`.
    pub fn dual(&self) -> DualDistortion<'_> {
        DualDistortion(self)
    }

    /// `Some(alpha)` iff this kernel is exactly a unit jump at `alpha`.
    pub fn var_level(&self) -> Option<f64> {
        let atom = self
            .jumps
            .iter()
            .enumerate()
            .filter(|&(_, &j)| j > 0.0)
            .collect::<Vec<_>>();
        if self.slopes.iter().all(|&s| s == 0.0) && atom.len() == 1 && *atom[0].1 == 1.0 {
            Some(self.ts[atom[0].0])
        } else {
            None
        }
    }

    /// True iff `phi` is convex: non-decreasing piece densities and no atom
    /// strictly inside `(0, 1)` (an atom at 1 acts as a terminal infinite
    /// density and is allowed).
    pub fn is_convex(&self) -> bool {
        let k = self.ts.len();
        for i in 1..k - 1 {
            if self.jumps[i] > 0.0 {
                return false;
            }
        }
        self.slopes.windows(2).all(|w| w[1] >= w[0])
    }

    /// Statistical-robustness flag: true iff the kernel measure puts no
    /// mass adjacent to the levels 0 and 1 (the first piece is flat and
    /// the last piece carries neither density nor an atom at 1). VaR is
    /// robust; the mean and CVaR are not.
    pub fn is_robust(&self) -> bool {
        self.slopes[0] == 0.0
            && *self.slopes.last().unwrap() == 0.0
            && self.jump_at_one() == 0.0
    }
}

/// Pointwise maximum of kernels; again a valid kernel.
pub fn max_kernel(kernels: &[DistortionKernel]) -> Result<DistortionKernel> {
    if kernels.is_empty() {
        return Err(RiskError::Validation("max_kernel of no kernels".into()));
    }
    if kernels.len() == 1 {
        return Ok(kernels[0].clone());
    }
    // merged breakpoints
    let mut ts: Vec<f64> = kernels.iter().flat_map(|k| k.ts.iter().copied()).collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    // insert pairwise crossings of the linear pieces
    let mut extra = Vec::new();
    for w in ts.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in 0..kernels.len() {
            for j in i + 1..kernels.len() {
                let (vi, si) = (kernels[i].phi(a), kernels[i].slope_at(a));
                let (vj, sj) = (kernels[j].phi(a), kernels[j].slope_at(a));
                if si != sj {
                    let dt = (vj - vi) / (si - sj);
                    let t = a + dt;
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

    let max_at = |t: f64| -> f64 { kernels.iter().map(|k| k.phi(t)).fold(f64::MIN, f64::max) };
    let max_left = |t: f64| -> f64 {
        kernels
            .iter()
            .map(|k| k.phi_left(t))
            .fold(f64::MIN, f64::max)
    };

    let m = ts.len();
    let mut vals = Vec::with_capacity(m);
    let mut jumps = Vec::with_capacity(m);
    let mut slopes = Vec::with_capacity(m - 1);
    for (idx, &t) in ts.iter().enumerate() {
        let v = max_at(t);
        vals.push(v);
        jumps.push(if idx == 0 { 0.0 } else { (v - max_left(t)).max(0.0) });
    }
    for w in ts.windows(2) {
        let mid = w[0] + 0.5 * (w[1] - w[0]);
        let winner = kernels
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| x.phi(mid).partial_cmp(&y.phi(mid)).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        slopes.push(kernels[winner].slope_at(mid));
    }
    // drop redundant interior breakpoints (no atom, same density on both
    // sides) so structurally-equal kernels compare equal
    let mut keep = vec![true; m];
    for i in 1..m - 1 {
        if jumps[i] == 0.0 && slopes[i - 1] == slopes[i] {
            keep[i] = false;
        }
    }
    let filter = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .enumerate()
            .filter(|&(i, _)| keep[i])
            .map(|(_, &x)| x)
            .collect()
    };
    let kept_slopes: Vec<f64> = slopes
        .iter()
        .enumerate()
        .filter(|&(i, _)| keep[i])
        .map(|(_, &s)| s)
        .collect();
    DistortionKernel::from_parts(filter(&ts), filter(&jumps), kept_slopes, filter(&vals))
}

/// The dual distortion `g(x) = 1 - phi(1 - x)`: non-decreasing with
/// `g(0) = 0` and `g(1) = 1`, applied to survival probabilities in the
/// Choquet form.
#[derive(Debug, Clone, Copy)]
pub struct DualDistortion<'a>(&'a DistortionKernel);

impl DualDistortion<'_> {
    pub fn g(&self, x: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&x));
        if x == 0.0 {
            return 0.0;
        }
        1.0 - self.0.phi(1.0 - x)
    }

    /// Affine pieces of `g`, ascending in `x`; piece `p` covers
    /// `(p.x_lo, p.x_hi]` with `g(x) = p.y_hi + p.slope * (x - p.x_hi)`.
    fn pieces(&self) -> Vec<GPiece> {
        let k = self.0.ts.len();
        let mut out = Vec::with_capacity(k - 1);
        for i in (0..k - 1).rev() {
            out.push(GPiece {
                x_lo: 1.0 - self.0.ts[i + 1],
                x_hi: 1.0 - self.0.ts[i],
                slope: self.0.slopes[i],
                y_hi: 1.0 - self.0.vals[i],
            });
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct GPiece {
    x_lo: f64,
    x_hi: f64,
    slope: f64,
    y_hi: f64,
}

/// Check that the quantile integral is finite for this pair: the only
/// divergent combination among the supported families is a kernel atom at
/// level 1 against an unbounded upper tail.
pub fn domain_check(dist: &LossDistribution, kernel: &DistortionKernel) -> Result<()> {
    if kernel.jump_at_one() > 0.0 && dist.max_support().is_none() {
        return Err(RiskError::Domain(
            "kernel has an atom at level 1 and the loss has an unbounded upper tail; \
             the upper tail integral diverges"
                .into(),
        ));
    }
    Ok(())
}

/// Risk in the quantile-integral form: the Lebesgue-Stieltjes integral of
/// the lower quantile against the kernel measure. Exact for the supported
/// families.
pub fn risk_quantile_form(dist: &LossDistribution, kernel: &DistortionKernel) -> Result<f64> {
    domain_check(dist, kernel)?;
    let mut total = 0.0;
    for (i, &jump) in kernel.jumps().iter().enumerate() {
        if jump > 0.0 {
            total += jump * dist.quantile_unchecked(kernel.breakpoints()[i]);
        }
    }
    for (i, &slope) in kernel.slopes().iter().enumerate() {
        if slope > 0.0 {
            total += slope * dist.quantile_integral(kernel.breakpoints()[i], kernel.breakpoints()[i + 1]);
        }
    }
    Ok(total)
}

/// Risk in the Choquet form: integral of `g(S(t))` over the positive axis
/// plus the integral of `g(S(t)) - 1` over the negative axis. Exact
/// (closed forms) for all supported families; agrees with
/// [`risk_quantile_form`] within 1e-9.
pub fn risk_choquet_form(dist: &LossDistribution, kernel: &DistortionKernel) -> Result<f64> {
    domain_check(dist, kernel)?;
    let g = kernel.dual();
    match &dist.kind {
        DistKind::Empirical { .. } | DistKind::Discrete { .. } => {
            let (values, probs) = dist.atoms().unwrap();
            let cum = LossDistribution::cumulative(&values, &probs);
            let mut total = 0.0;
            // below the smallest atom: S = 1, so g(S) - 1 = 0 on the
            // negative side and g(S) = 1 on the positive side
            if values[0] > 0.0 {
                total += values[0];
            }
            for j in 0..values.len() - 1 {
                // S = 1 - cum[j] on this interval; evaluate
                // g(S) = 1 - phi(1 - S) through the level directly so an
                // atom of phi sitting exactly at cum[j] is not lost to the
                // 1 - (1 - x) round trip
                let g_s = 1.0 - kernel.phi(cum[j]);
                let (lo, hi) = (values[j], values[j + 1]);
                let neg = (hi.min(0.0) - lo).max(0.0);
                let pos = (hi - lo.max(0.0)).max(0.0);
                if neg > 0.0 {
                    total += (g_s - 1.0) * neg;
                }
                if pos > 0.0 {
                    total += g_s * pos;
                }
            }
            // above the largest atom S = 0: g(0) = 0 contributes nothing on
            // the positive side; on the negative side g(0) - 1 = -1
            let top = *values.last().unwrap();
            if top < 0.0 {
                total += top;
            }
            Ok(total)
        }
        DistKind::Uniform { lower, upper } => {
            Ok(choquet_uniform(&g, *lower, *upper, f64::INFINITY))
        }
        DistKind::Exponential { rate } => Ok(choquet_exponential(kernel, *rate, f64::INFINITY)),
        DistKind::Truncated { base, cutoff } => match &**base {
            DistKind::Uniform { lower, upper } => Ok(choquet_uniform(&g, *lower, *upper, *cutoff)),
            DistKind::Exponential { rate } => Ok(choquet_exponential(kernel, *rate, *cutoff)),
            _ => unreachable!("truncation base is always a continuous family"),
        },
    }
}

/// Choquet integral for `X ~ U[a, b]` truncated at `cutoff` (pass infinity
/// for the untruncated law). `S(t)` is affine on `[a, b]`, so each affine
/// piece of `g` contributes an exact trapezoid.
fn choquet_uniform(g: &DualDistortion<'_>, a: f64, b: f64, cutoff: f64) -> f64 {
    let top = b.min(cutoff);
    let width = b - a;
    let survival = |t: f64| (b - t) / width;
    let mut total = 0.0;
    // t below the support (and below the cutoff): S = 1
    if a > 0.0 {
        total += a;
    }
    // above the (possibly truncated) support: S = 0, g(0) - 1 = -1 on the
    // negative side
    if top < 0.0 {
        total += top;
    }
    for piece in g.pieces() {
        // t-interval on which S(t) lies in (x_lo, x_hi]
        let t_hi = b - piece.x_hi * width; // S(t_hi) = x_hi
        let t_lo = b - piece.x_lo * width;
        let (lo, hi) = (t_hi.max(a), t_lo.min(top));
        if hi <= lo {
            continue;
        }
        let g_at = |t: f64| piece.y_hi + piece.slope * (survival(t) - piece.x_hi);
        // split at zero for the negative-part correction
        for (seg_lo, seg_hi, correction) in [
            (lo, hi.min(0.0), -1.0),
            (lo.max(0.0), hi, 0.0),
        ] {
            if seg_hi > seg_lo {
                let avg = 0.5 * (g_at(seg_lo) + g_at(seg_hi));
                total += (avg + correction) * (seg_hi - seg_lo);
            }
        }
    }
    total
}

/// Choquet integral for `X ~ Exp(rate)` truncated at `cutoff` (infinity for
/// the untruncated law). Substituting `x = e^{-rate * t}` makes each affine
/// piece of `g` integrate in closed form.
fn choquet_exponential(kernel: &DistortionKernel, rate: f64, cutoff: f64) -> f64 {
    let g = kernel.dual();
    let x_cut = if cutoff.is_finite() {
        (-rate * cutoff).exp()
    } else {
        0.0
    };
    let t_of = |x: f64| -x.ln() / rate;
    let mut total = 0.0;
    for piece in g.pieces() {
        let x_lo = piece.x_lo.max(x_cut);
        let x_hi = piece.x_hi;
        if x_hi <= x_lo {
            continue;
        }
        let beta = piece.slope;
        let t_hi = t_of(x_hi); // lower end of the t-interval
        if piece.x_lo == 0.0 && x_cut == 0.0 {
            // lowest piece of an unbounded law: the constant part of g is
            // structurally the atom of phi at 1, which domain_check has
            // already ruled out; only the linear term contributes
            total += beta / rate * x_hi;
        } else {
            let alpha = piece.y_hi - piece.slope * piece.x_hi;
            let t_lo = t_of(x_lo).min(cutoff);
            total += alpha * (t_lo - t_hi) + beta / rate * (x_hi - x_lo);
        }
    }
    total
}

/// Conditional Value at Risk: the normalized average of `VaR_t` over
/// `t` in `[alpha, 1]`; identical to the quantile form with the
/// [`DistortionKernel::cvar_at`] kernel.
pub fn cvar(dist: &LossDistribution, alpha: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(RiskError::Domain(format!(
            "CVaR level {alpha} outside [0, 1)"
        )));
    }
    risk_quantile_form(dist, &DistortionKernel::cvar_at(alpha)?)
}

/// Exact risk of the transform `f(X)` without materializing its law:
/// the quantile of `f(X)` is `f` composed with the quantile of `X` for
/// continuous non-decreasing `f`. Atomic laws take the materialized
/// pushforward path instead (same arithmetic, simpler bookkeeping).
pub fn risk_transformed(
    dist: &LossDistribution,
    f: &PiecewiseMonotoneFn,
    kernel: &DistortionKernel,
) -> Result<f64> {
    if dist.atoms().is_some() {
        return risk_quantile_form(&dist.pushforward(f), kernel);
    }
    if kernel.jump_at_one() > 0.0 && dist.max_support().is_none() && f.limit_at_infinity().is_none()
    {
        return Err(RiskError::Domain(
            "kernel has an atom at level 1 and f(X) is unbounded above; \
             the upper tail integral diverges"
                .into(),
        ));
    }
    let ts = kernel.breakpoints();
    let mut total = 0.0;
    for (i, &jump) in kernel.jumps().iter().enumerate() {
        if jump > 0.0 {
            let q = dist.quantile_unchecked(ts[i]);
            let fq = if q.is_finite() {
                f.eval(q)
            } else {
                f.limit_at_infinity().expect("checked above")
            };
            total += jump * fq;
        }
    }
    // levels at which the quantile crosses a knot of f; an atom of the
    // distribution at a knot makes the pullback an interval, so both the
    // left CDF limit and the cadlag value cut the level axis
    let knot_levels: Vec<f64> = f
        .piece_bounds()
        .iter()
        .flat_map(|&x| [dist.cdf_left(x), dist.cdf(x)])
        .filter(|&t| t > 0.0 && t < 1.0)
        .collect();
    for (i, &slope) in kernel.slopes().iter().enumerate() {
        if slope == 0.0 {
            continue;
        }
        let (a, b) = (ts[i], ts[i + 1]);
        let mut cuts: Vec<f64> = vec![a, b];
        cuts.extend(knot_levels.iter().copied().filter(|&t| t > a && t < b));
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for w in cuts.windows(2) {
            let (c, d) = (w[0], w[1]);
            if d <= c {
                continue;
            }
            let q_mid = dist.quantile_unchecked(c + 0.5 * (d - c));
            let (x0, y0, sf) = f.affine_at(q_mid);
            total += slope * ((y0 - sf * x0) * (d - c) + sf * dist.quantile_integral(c, d));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quarter_atoms() -> LossDistribution {
        LossDistribution::discrete(vec![1.0, 2.0, 3.0, 4.0], vec![0.25; 4]).unwrap()
    }

    #[test]
    fn cvar_half_on_quarter_atoms() {
        let k = DistortionKernel::cvar_at(0.5).unwrap();
        assert_eq!(risk_quantile_form(&quarter_atoms(), &k).unwrap(), 3.5);
        assert_eq!(risk_choquet_form(&quarter_atoms(), &k).unwrap(), 3.5);
        assert_eq!(cvar(&quarter_atoms(), 0.5).unwrap(), 3.5);
    }

    #[test]
    fn var_kernel_reproduces_quantile() {
        let d = quarter_atoms();
        for alpha in [0.1, 0.25, 0.5, 0.51, 0.75, 0.9, 1.0] {
            let k = DistortionKernel::var_at(alpha).unwrap();
            assert_eq!(
                risk_quantile_form(&d, &k).unwrap(),
                d.quantile(alpha).unwrap(),
                "alpha = {alpha}"
            );
        }
        let e = LossDistribution::exponential(1.0).unwrap();
        let k = DistortionKernel::var_at(0.5).unwrap();
        assert!((risk_quantile_form(&e, &k).unwrap() - 2.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn point_mass_risk_is_the_point() {
        let d = LossDistribution::point_mass(5.0).unwrap();
        for k in [
            DistortionKernel::expectation(),
            DistortionKernel::var_at(0.3).unwrap(),
            DistortionKernel::cvar_at(0.8).unwrap(),
            DistortionKernel::prop_hazard(0.5).unwrap(),
        ] {
            assert!((risk_quantile_form(&d, &k).unwrap() - 5.0).abs() < 1e-9);
            assert!((cvar(&d, 0.37).unwrap() - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cvar_at_zero_is_expectation() {
        let d = quarter_atoms();
        assert_eq!(cvar(&d, 0.0).unwrap(), d.expectation());
        assert!(cvar(&d, 1.0).is_err());
    }

    #[test]
    fn choquet_negative_support_symmetric_mean() {
        let d = LossDistribution::discrete(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let k = DistortionKernel::expectation();
        assert_eq!(risk_choquet_form(&d, &k).unwrap(), 0.0);
    }

    #[test]
    fn choquet_exponential_mean() {
        let d = LossDistribution::exponential(1.0).unwrap();
        let k = DistortionKernel::expectation();
        assert!((risk_choquet_form(&d, &k).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn domain_error_names_divergent_tail() {
        let d = LossDistribution::exponential(1.0).unwrap();
        let k = DistortionKernel::var_at(1.0).unwrap();
        let err = risk_quantile_form(&d, &k).unwrap_err();
        assert!(err.to_string().contains("tail"), "{err}");
    }

    #[test]
    fn convexity_classification() {
        assert!(DistortionKernel::cvar_at(0.5).unwrap().is_convex());
        assert!(!DistortionKernel::var_at(0.5).unwrap().is_convex());
        assert!(DistortionKernel::var_at(1.0).unwrap().is_convex());
        assert!(DistortionKernel::expectation().is_convex());
        assert!(DistortionKernel::prop_hazard(0.4).unwrap().is_convex());
    }

    #[test]
    fn robustness_classification() {
        assert!(DistortionKernel::var_at(0.5).unwrap().is_robust());
        assert!(!DistortionKernel::expectation().is_robust());
        assert!(!DistortionKernel::cvar_at(0.5).unwrap().is_robust());
        assert!(!DistortionKernel::var_at(1.0).unwrap().is_robust());
    }

    #[test]
    fn max_of_two_var_kernels() {
        let m = max_kernel(&[
            DistortionKernel::var_at(0.3).unwrap(),
            DistortionKernel::var_at(0.6).unwrap(),
        ])
        .unwrap();
        assert_eq!(m, DistortionKernel::var_at(0.3).unwrap());
    }

    #[test]
    fn max_of_two_cvar_kernels_pointwise() {
        let a = DistortionKernel::cvar_at(0.25).unwrap();
        let b = DistortionKernel::cvar_at(0.5).unwrap();
        let m = max_kernel(&[a.clone(), b.clone()]).unwrap();
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            let want = a.phi(t).max(b.phi(t));
            assert!((m.phi(t) - want).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn max_kernel_with_crossing_pieces() {
        // concave kernel min(2t, 1) crosses the expectation kernel only at
        // the endpoints but a shifted variant crosses strictly inside
        let concave = DistortionKernel::from_points(&[
            KernelPoint { t: 0.0, phi: 0.0, jump: 0.0 },
            KernelPoint { t: 0.5, phi: 1.0, jump: 0.0 },
            KernelPoint { t: 1.0, phi: 1.0, jump: 0.0 },
        ])
        .unwrap();
        let steep_late = DistortionKernel::from_points(&[
            KernelPoint { t: 0.0, phi: 0.0, jump: 0.0 },
            KernelPoint { t: 0.75, phi: 0.25, jump: 0.0 },
            KernelPoint { t: 1.0, phi: 1.0, jump: 0.0 },
        ])
        .unwrap();
        let m = max_kernel(&[concave.clone(), steep_late.clone()]).unwrap();
        for i in 0..=200 {
            let t = i as f64 / 200.0;
            let want = concave.phi(t).max(steep_late.phi(t));
            assert!((m.phi(t) - want).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn single_kernel_max_is_itself() {
        let k = DistortionKernel::cvar_at(0.3).unwrap();
        assert_eq!(max_kernel(std::slice::from_ref(&k)).unwrap(), k);
    }

    #[test]
    fn choquet_quarter_atoms_sums_unit_intervals() {
        // g(S) over unit intervals: 1 + 1 + 1 + 0.5
        let k = DistortionKernel::cvar_at(0.5).unwrap();
        let d = quarter_atoms();
        assert_eq!(risk_choquet_form(&d, &k).unwrap(), 3.5);
    }

    #[test]
    fn transformed_risk_matches_pushforward_on_atoms() {
        let d = quarter_atoms();
        let f = PiecewiseMonotoneFn::new(vec![(0.0, 0.0), (3.0, 3.0)], 0.0).unwrap();
        let k = DistortionKernel::cvar_at(0.5).unwrap();
        let direct = risk_transformed(&d, &f, &k).unwrap();
        let via_pf = risk_quantile_form(&d.pushforward(&f), &k).unwrap();
        assert_eq!(direct, via_pf);
    }

    #[test]
    fn transformed_risk_exact_on_exponential() {
        // E[min(X, m)] = 1 - e^{-m} for Exp(1)
        let d = LossDistribution::exponential(1.0).unwrap();
        let f = PiecewiseMonotoneFn::new(vec![(0.0, 0.0), (0.5, 0.5)], 0.0).unwrap();
        let k = DistortionKernel::expectation();
        let got = risk_transformed(&d, &f, &k).unwrap();
        assert!((got - (1.0 - (-0.5f64).exp())).abs() < 1e-14);
        // VaR_0.5 of min(X, 2) is still ln 2
        let f2 = PiecewiseMonotoneFn::new(vec![(0.0, 0.0), (2.0, 2.0)], 0.0).unwrap();
        let kv = DistortionKernel::var_at(0.5).unwrap();
        assert!((risk_transformed(&d, &f2, &kv).unwrap() - 2.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn transformed_risk_with_knot_at_truncation_atom() {
        // the total has an atom exactly at the cutoff; a transform with a
        // knot there must split the level axis at F(cutoff-), not only at
        // the cadlag value F(cutoff) = 1
        let cutoff = 1.6632945134159822;
        let d = LossDistribution::exponential(1.0).unwrap().truncate(cutoff).unwrap();
        let k = 0.6747892263463964;
        // flat between k and the cutoff, rising again beyond it
        let f = PiecewiseMonotoneFn::new(
            vec![(0.0, 0.0), (k, k), (cutoff, k)],
            1.0,
        )
        .unwrap();
        let kernel = DistortionKernel::from_points(&[
            KernelPoint { t: 0.0, phi: 0.0, jump: 0.0 },
            KernelPoint { t: 0.8081242067514128, phi: 0.0, jump: 0.0 },
            KernelPoint { t: 1.0, phi: 1.0, jump: 0.0 },
        ])
        .unwrap();
        // f(X) = min(X, k) almost surely, whose risk under any kernel is k
        // once the kernel mass sits above F(k)
        let got = risk_transformed(&d, &f, &kernel).unwrap();
        assert!((got - k).abs() < 1e-12, "{got} vs {k}");
    }

    #[test]
    fn flat_transform_of_unbounded_loss_is_fine_with_ess_sup_kernel() {
        let d = LossDistribution::exponential(1.0).unwrap();
        let k = DistortionKernel::var_at(1.0).unwrap();
        let f = PiecewiseMonotoneFn::new(vec![(0.0, 0.0), (1.0, 1.0)], 0.0).unwrap();
        assert_eq!(risk_transformed(&d, &f, &k).unwrap(), 1.0);
        assert!(risk_transformed(&d, &PiecewiseMonotoneFn::identity(), &k).is_err());
    }

    fn arb_kernel() -> impl Strategy<Value = DistortionKernel> {
        prop_oneof![
            Just(DistortionKernel::expectation()),
            (0..19u8).prop_map(|a| DistortionKernel::var_at((2 * a + 1) as f64 / 40.0).unwrap()),
            (0..19u8).prop_map(|a| DistortionKernel::cvar_at((2 * a + 1) as f64 / 40.0).unwrap()),
            // piecewise kernel with a mid jump
            (1..=8u8, 1..=8u8).prop_map(|(a, b)| {
                let t_mid = a as f64 / 10.0;
                let jump = b as f64 / 10.0 * (1.0 - t_mid) / 2.0;
                let phi_mid_before = t_mid * 0.5;
                DistortionKernel::from_points(&[
                    KernelPoint { t: 0.0, phi: 0.0, jump: 0.0 },
                    KernelPoint { t: t_mid, phi: phi_mid_before + jump, jump },
                    KernelPoint { t: 1.0, phi: 1.0, jump: 0.0 },
                ])
                .unwrap()
            }),
        ]
    }

    fn arb_dist() -> impl Strategy<Value = LossDistribution> {
        (1usize..8).prop_flat_map(|n| {
            (
                proptest::collection::vec(-50i32..50, n..=n),
                proptest::collection::vec(1u32..5, n..=n),
            )
                .prop_map(|(values, weights)| {
                    let mut vs: Vec<f64> = values.iter().map(|&v| v as f64).collect();
                    vs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    vs.dedup();
                    let w = &weights[..vs.len()];
                    let total: u32 = w.iter().sum();
                    let probs = w.iter().map(|&x| x as f64 / total as f64).collect();
                    LossDistribution::discrete(vs, probs).unwrap()
                })
        })
    }

    proptest! {
        // the two forms are the same functional
        #[test]
        fn forms_agree(d in arb_dist(), k in arb_kernel()) {
            let qf = risk_quantile_form(&d, &k).unwrap();
            let cf = risk_choquet_form(&d, &k).unwrap();
            prop_assert!((qf - cf).abs() <= 1e-9, "{qf} vs {cf}");
        }

        // positive homogeneity and translation equivariance
        #[test]
        fn homogeneity_and_translation(
            d in arb_dist(),
            k in arb_kernel(),
            lam in 1u8..40,
            c in -20i32..20,
        ) {
            let lam = lam as f64 / 8.0;
            let c = c as f64;
            let rho = risk_quantile_form(&d, &k).unwrap();
            let (vs, ps) = d.atoms().unwrap();
            let scaled = LossDistribution::discrete(
                vs.iter().map(|v| v * lam).collect(), ps.clone()).unwrap();
            let shifted = LossDistribution::discrete(
                vs.iter().map(|v| v + c).collect(), ps).unwrap();
            prop_assert!((risk_quantile_form(&scaled, &k).unwrap() - lam * rho).abs() <= 1e-9);
            prop_assert!((risk_quantile_form(&shifted, &k).unwrap() - (rho + c)).abs() <= 1e-9);
        }

        // comonotone additivity through pushforwards of a common loss
        #[test]
        fn comonotone_additivity(d in arb_dist(), k in arb_kernel(), s1 in 0u8..3, s2 in 0u8..3) {
            let f = PiecewiseMonotoneFn::new(
                vec![(-60.0, 0.0), (0.0, 60.0 * s1 as f64), (60.0, 60.0 * (s1 as f64 + 1.0))],
                1.0,
            ).unwrap();
            let h = PiecewiseMonotoneFn::new(
                vec![(-60.0, 0.0), (0.0, 60.0 * s2 as f64), (60.0, 60.0 * s2 as f64)],
                0.5,
            ).unwrap();
            let (vs, ps) = d.atoms().unwrap();
            let sum_vals: Vec<f64> = vs.iter().map(|&v| f.eval(v) + h.eval(v)).collect();
            let sum_dist = LossDistribution::from_weighted_atoms(sum_vals, ps);
            let lhs = risk_quantile_form(&sum_dist, &k).unwrap();
            let rhs = risk_quantile_form(&d.pushforward(&f), &k).unwrap()
                + risk_quantile_form(&d.pushforward(&h), &k).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9, "{lhs} vs {rhs}");
        }

        // a larger kernel never increases the risk of a non-negative loss
        #[test]
        fn kernel_monotonicity(d in arb_dist(), a in 1u8..=9) {
            let (vs, ps) = d.atoms().unwrap();
            let shift = -vs[0].min(0.0);
            let nonneg = LossDistribution::discrete(
                vs.iter().map(|v| v + shift).collect(), ps).unwrap();
            // cvar kernels grow pointwise as alpha shrinks
            let lo = DistortionKernel::cvar_at(a as f64 / 10.0).unwrap();
            let hi = DistortionKernel::cvar_at(a as f64 / 20.0).unwrap();
            // hi >= lo pointwise => risk(hi) <= risk(lo)
            let r_hi = risk_quantile_form(&nonneg, &hi).unwrap();
            let r_lo = risk_quantile_form(&nonneg, &lo).unwrap();
            prop_assert!(r_hi <= r_lo + 1e-12);
        }

        // law invariance: empirical and merged-atom representations agree
        #[test]
        fn law_invariance(k in arb_kernel(), raw in proptest::collection::vec(-20i32..20, 1..12)) {
            let values: Vec<f64> = raw.iter().map(|&v| v as f64).collect();
            let emp = LossDistribution::empirical(values.clone()).unwrap();
            let (vs, ps) = emp.atoms().unwrap();
            let disc = LossDistribution::discrete(vs, ps).unwrap();
            let a = risk_quantile_form(&emp, &k).unwrap();
            let b = risk_quantile_form(&disc, &k).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        // subadditivity on comonotone-free pairs holds for convex kernels
        #[test]
        fn subadditivity_when_convex(
            xs in proptest::collection::vec(-10i32..10, 4),
            ys in proptest::collection::vec(-10i32..10, 4),
            a in 0u8..=9,
        ) {
            let k = DistortionKernel::cvar_at(a as f64 / 10.0).unwrap();
            prop_assume!(k.is_convex());
            let probs = [0.25; 4];
            let to_dist = |v: &[f64]| {
                let mut pairs: Vec<(f64, f64)> = v.iter().copied().zip(probs.iter().copied()).collect();
                pairs.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
                LossDistribution::from_weighted_atoms(
                    pairs.iter().map(|p| p.0).collect(),
                    pairs.iter().map(|p| p.1).collect(),
                )
            };
            let x: Vec<f64> = xs.iter().map(|&v| v as f64).collect();
            let y: Vec<f64> = ys.iter().map(|&v| v as f64).collect();
            let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let lhs = risk_quantile_form(&to_dist(&z), &k).unwrap();
            let rhs = risk_quantile_form(&to_dist(&x), &k).unwrap()
                + risk_quantile_form(&to_dist(&y), &k).unwrap();
            prop_assert!(lhs <= rhs + 1e-9, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn forms_agree_on_continuous_families() {
        let dists = [
            LossDistribution::uniform(-1.0, 3.0).unwrap(),
            LossDistribution::uniform(0.5, 2.0).unwrap(),
            LossDistribution::exponential(1.0).unwrap(),
            LossDistribution::exponential(0.7).unwrap(),
            LossDistribution::exponential(1.0).unwrap().truncate(0.8).unwrap(),
            LossDistribution::uniform(0.0, 4.0).unwrap().truncate(2.5).unwrap(),
            LossDistribution::uniform(-2.0, 4.0).unwrap().truncate(1.5).unwrap(),
        ];
        let with_jump = DistortionKernel::from_points(&[
            KernelPoint { t: 0.0, phi: 0.0, jump: 0.0 },
            KernelPoint { t: 0.4, phi: 0.5, jump: 0.3 },
            KernelPoint { t: 1.0, phi: 1.0, jump: 0.0 },
        ])
        .unwrap();
        let kernels = [
            DistortionKernel::expectation(),
            DistortionKernel::var_at(0.3).unwrap(),
            DistortionKernel::cvar_at(0.6).unwrap(),
            DistortionKernel::prop_hazard(0.5).unwrap(),
            with_jump,
        ];
        for d in &dists {
            for k in &kernels {
                let qf = risk_quantile_form(d, k).unwrap();
                let cf = risk_choquet_form(d, k).unwrap();
                assert!((qf - cf).abs() <= 1e-9, "{d:?} {qf} vs {cf}");
            }
        }
    }

    #[test]
    fn var_subadditivity_counterexample() {
        // two independent-style unit losses: VaR_0.75 of each is 0, but the
        // sum has VaR_0.75 equal to 1
        let k = DistortionKernel::var_at(0.75).unwrap();
        let x = LossDistribution::discrete(vec![0.0, 1.0], vec![0.75, 0.25]).unwrap();
        let sum = LossDistribution::discrete(vec![0.0, 1.0, 2.0], vec![0.5625, 0.375, 0.0625])
            .unwrap();
        let rx = risk_quantile_form(&x, &k).unwrap();
        let rsum = risk_quantile_form(&sum, &k).unwrap();
        assert_eq!(rx, 0.0);
        assert_eq!(rsum, 1.0);
        assert!(rsum > 2.0 * rx, "VaR is not subadditive here");
    }
}
