//! Householder QR least squares.
//!
//! Columns are scaled to unit Euclidean norm before factorisation so that
//! rank and conditioning tests do not depend on counter magnitudes, which
//! routinely span several orders of magnitude.

/// A diagonal entry of R below this (on unit-norm columns) means the column
/// lies in the span of the preceding ones.
pub(crate) const RANK_TOL: f64 = 1e-10;

/// Smallest |R_kk| on unit-norm columns that does not raise a conditioning
/// warning.
pub(crate) const CONDITION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LstsqSolution {
    pub coef: Vec<f64>,
    pub ill_conditioned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LstsqError {
    TooFewRows,
    /// Index of the first column found to be dependent on earlier ones.
    RankDeficient(usize),
}

/// Minimises ||y - X b||² where `columns` are the columns of X.
pub(crate) fn lstsq(columns: &[Vec<f64>], y: &[f64]) -> Result<LstsqSolution, LstsqError> {
    let m = y.len();
    let n = columns.len();
    if n == 0 {
        return Ok(LstsqSolution {
            coef: vec![],
            ill_conditioned: false,
        });
    }
    if m < n {
        return Err(LstsqError::TooFewRows);
    }

    let mut scale = Vec::with_capacity(n);
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (j, col) in columns.iter().enumerate() {
        debug_assert_eq!(col.len(), m);
        let norm = norm2(col);
        if norm == 0.0 || !norm.is_finite() {
            return Err(LstsqError::RankDeficient(j));
        }
        scale.push(norm);
        a.push(col.iter().map(|v| v / norm).collect());
    }
    let mut qty = y.to_vec();
    let mut diag = vec![0.0; n];

    for k in 0..n {
        let (done, rest) = a.split_at_mut(k + 1);
        let col = &mut done[k];
        let x_norm = norm2(&col[k..]);
        if x_norm < RANK_TOL {
            return Err(LstsqError::RankDeficient(k));
        }
        let alpha = if col[k] > 0.0 { -x_norm } else { x_norm };
        // v = x - alpha e1 stored in place of x
        col[k] -= alpha;
        let v = &col[k..];
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        for other in rest.iter_mut() {
            reflect(v, vnorm2, &mut other[k..]);
        }
        reflect(v, vnorm2, &mut qty[k..]);
        diag[k] = alpha;
    }

    // back substitution on R (diag plus the upper triangle left in `a`)
    let mut coef = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = qty[k];
        for j in k + 1..n {
            s -= a[j][k] * coef[j];
        }
        coef[k] = s / diag[k];
    }
    let ill_conditioned = diag.iter().any(|d| d.abs() < CONDITION_TOL);
    for (c, s) in coef.iter_mut().zip(&scale) {
        *c /= s;
    }
    Ok(LstsqSolution {
        coef,
        ill_conditioned,
    })
}

fn reflect(v: &[f64], vnorm2: f64, target: &mut [f64]) {
    let dot: f64 = v.iter().zip(target.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * dot / vnorm2;
    for (t, vi) in target.iter_mut().zip(v) {
        *t -= f * vi;
    }
}

fn norm2(x: &[f64]) -> f64 {
    // scaled to avoid overflow on very large counter columns
    let max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 || !max.is_finite() {
        return max;
    }
    max * x.iter().map(|v| (v / max).powi(2)).sum::<f64>().sqrt()
}
