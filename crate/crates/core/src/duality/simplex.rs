//! Dense two-phase simplex with Bland's rule.
//!
//! Sized for the duality module's programs: a dozen structural variables
//! against at most a few hundred working rows, so a dense tableau is the
//! simple and fast choice. Maximizes `c . x` subject to
//! `a_ub . x <= b_ub`, `a_eq . x = b_eq`, `x >= 0`.

const EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone)]
pub(crate) struct StandardLp {
    pub c: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    /// first artificial column; columns at or beyond it never re-enter
    art_start: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, j: usize, obj: &mut [f64], obj_rhs: &mut f64) {
        let p = self.rows[r][j];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r];
        for (r2, row) in self.rows.iter_mut().enumerate() {
            if r2 == r {
                continue;
            }
            let factor = row[j];
            if factor != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * pv;
                }
                self.rhs[r2] -= factor * pivot_rhs;
            }
        }
        let factor = obj[j];
        if factor != 0.0 {
            for (v, pv) in obj.iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
            *obj_rhs -= factor * pivot_rhs;
        }
        self.basis[r] = j;
    }

    /// Bland: smallest improving column, smallest basis variable on ratio
    /// ties. Returns false at optimality; None pivot row means unbounded.
    fn run(&mut self, obj: &mut [f64], obj_rhs: &mut f64) -> Result<(), LpOutcome> {
        for _ in 0..MAX_PIVOTS {
            let entering = (0..self.art_start).find(|&j| obj[j] < -EPS);
            let Some(j) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][j];
                if a > EPS {
                    let ratio = self.rhs[r] / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - EPS
                                || (ratio <= lratio + EPS && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, j, obj, obj_rhs),
                None => return Err(LpOutcome::Unbounded),
            }
        }
        unreachable!("simplex exceeded the pivot budget");
    }
}

pub(crate) fn solve(lp: &StandardLp) -> LpOutcome {
    let n = lp.c.len();
    let m_ub = lp.a_ub.len();
    let m_eq = lp.a_eq.len();
    let m = m_ub + m_eq;
    debug_assert!(lp.a_ub.iter().all(|r| r.len() == n));
    debug_assert!(lp.a_eq.iter().all(|r| r.len() == n));

    // structural + slack columns; artificials appended after
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rhs: Vec<f64> = Vec::with_capacity(m);
    let mut basis: Vec<usize> = vec![usize::MAX; m];
    let mut needs_art: Vec<usize> = Vec::new();
    for r in 0..m_ub {
        let mut row = vec![0.0; n + m_ub];
        row[..n].copy_from_slice(&lp.a_ub[r]);
        row[n + r] = 1.0;
        let mut b = lp.b_ub[r];
        if b < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
            b = -b;
            needs_art.push(r);
        } else {
            basis[r] = n + r;
        }
        rows.push(row);
        rhs.push(b);
    }
    for r in 0..m_eq {
        let mut row = vec![0.0; n + m_ub];
        row[..n].copy_from_slice(&lp.a_eq[r]);
        let mut b = lp.b_eq[r];
        if b < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
            b = -b;
        }
        needs_art.push(m_ub + r);
        rows.push(row);
        rhs.push(b);
    }
    let art_start = n + m_ub;
    let total_cols = art_start + needs_art.len();
    for row in rows.iter_mut() {
        row.resize(total_cols, 0.0);
    }
    for (k, &r) in needs_art.iter().enumerate() {
        rows[r][art_start + k] = 1.0;
        basis[r] = art_start + k;
    }
    let mut tab = Tableau { rows, rhs, basis, art_start };

    // phase 1: minimize the artificial sum, i.e. maximize its negation;
    // the reduced-cost row is minus the sum of the artificial rows
    if !needs_art.is_empty() {
        let mut obj = vec![0.0; total_cols];
        let mut obj_rhs = 0.0;
        for &r in &needs_art {
            for (v, rv) in obj.iter_mut().zip(&tab.rows[r]) {
                *v -= rv;
            }
            obj_rhs -= tab.rhs[r];
        }
        for k in 0..needs_art.len() {
            obj[art_start + k] = 0.0;
        }
        if tab.run(&mut obj, &mut obj_rhs).is_err() {
            unreachable!("phase-1 objective is bounded by zero");
        }
        if obj_rhs < -1e-9 {
            return LpOutcome::Infeasible;
        }
        // drive remaining artificials out of the basis where possible
        for r in 0..tab.rows.len() {
            if tab.basis[r] >= art_start {
                if let Some(j) = (0..art_start).find(|&j| tab.rows[r][j].abs() > EPS) {
                    let mut dummy = vec![0.0; total_cols];
                    let mut dummy_rhs = 0.0;
                    tab.pivot(r, j, &mut dummy, &mut dummy_rhs);
                }
                // a row with no structural coefficients is redundant; its
                // artificial stays basic at level zero
            }
        }
    }

    // phase 2
    let mut obj = vec![0.0; total_cols];
    for (o, c) in obj.iter_mut().zip(&lp.c) {
        *o = -c;
    }
    let mut obj_rhs = 0.0;
    for r in 0..tab.rows.len() {
        let b = tab.basis[r];
        if b < total_cols && obj[b] != 0.0 {
            let factor = obj[b];
            let row = tab.rows[r].clone();
            for (v, rv) in obj.iter_mut().zip(&row) {
                *v -= factor * rv;
            }
            obj_rhs -= factor * tab.rhs[r];
        }
    }
    if let Err(out) = tab.run(&mut obj, &mut obj_rhs) {
        return out;
    }
    let mut x = vec![0.0; n];
    for r in 0..tab.rows.len() {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.rhs[r];
        }
    }
    let value = lp.c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpOutcome::Optimal { x, value }
}
