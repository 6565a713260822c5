//! Orthonormal bases of matrix ranges.

use crate::jet::{CMatrix, C64};

/// Relative pivot tolerance below which a column counts as dependent.
pub const PIVOT_TOL: f64 = 1e-10;

/// Orthonormal basis of `range(m)` by Gram–Schmidt with column pivoting on the
/// largest remaining column norm.
pub fn range_basis(m: &CMatrix) -> CMatrix {
    let (rows, cols) = m.shape();
    let mut w = m.clone();
    let mut norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm_squared()).collect();
    let scale = norms.iter().cloned().fold(0.0, f64::max).sqrt();
    let mut used = vec![false; cols];
    let mut q: Vec<nalgebra::DVector<C64>> = Vec::new();
    if scale == 0.0 {
        return CMatrix::zeros(rows, 0);
    }
    while q.len() < rows.min(cols) {
        let Some(j) = (0..cols).filter(|&j| !used[j]).max_by(|&a, &b| norms[a].total_cmp(&norms[b])) else {
            break;
        };
        if norms[j].sqrt() <= PIVOT_TOL * scale {
            break;
        }
        used[j] = true;
        let mut v = w.column(j).into_owned();
        // second pass keeps orthogonality at round-off level
        for qi in &q {
            let c = qi.dotc(&v);
            v -= qi * c;
        }
        let nv = v.norm();
        if nv <= PIVOT_TOL * scale {
            continue;
        }
        v /= C64::new(nv, 0.0);
        for k in 0..cols {
            if used[k] {
                continue;
            }
            let c = v.dotc(&w.column(k));
            let mut col = w.column_mut(k);
            col.axpy(-c, &v, C64::new(1.0, 0.0));
            norms[k] = col.norm_squared();
        }
        q.push(v);
    }
    if q.is_empty() {
        return CMatrix::zeros(rows, 0);
    }
    CMatrix::from_columns(&q)
}

/// `‖Q*Q − 1‖_max`.
pub fn orthonormality_residual(q: &CMatrix) -> f64 {
    let g = q.adjoint() * q;
    let n = g.nrows();
    (g - CMatrix::identity(n, n)).iter().map(|v| v.norm()).fold(0.0, f64::max)
}
