//! Bisection with Sturm counts for symmetric tridiagonal matrices.

/// Number of eigenvalues strictly below `shift` of the symmetric tridiagonal
/// matrix with diagonal `diag` and squared off-diagonal `off_sq`.
pub fn sturm_count(diag: &[f64], off_sq: &[f64], shift: f64) -> usize {
    let pivmin = f64::MIN_POSITIVE * off_sq.iter().copied().fold(1.0, f64::max);
    let mut count = 0;
    let mut q = diag[0] - shift;
    for i in 0..diag.len() {
        if i > 0 {
            q = diag[i] - shift - off_sq[i - 1] / q;
        }
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Gershgorin interval containing the whole spectrum.
pub fn gershgorin(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, d) in diag.iter().enumerate() {
        let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let right = off.get(i).map_or(0.0, |e| e.abs());
        lo = lo.min(d - left - right);
        hi = hi.max(d + left + right);
    }
    (lo, hi)
}

/// The `k`-th smallest eigenvalue (0-based) on `[lo, hi]`, bisected until the
/// bracket is below `tol` absolutely or machine precision relatively.
pub fn kth_eigenvalue(diag: &[f64], off: &[f64], k: usize, bracket: (f64, f64), tol: f64) -> f64 {
    assert_eq!(off.len() + 1, diag.len());
    assert!(k < diag.len());
    let off_sq: Vec<f64> = off.iter().map(|e| e * e).collect();
    let (mut lo, mut hi) = bracket;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, &off_sq, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
        let scale = lo.abs().max(hi.abs());
        if hi - lo <= tol.min(4.0 * f64::EPSILON * scale) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dense(diag: &[f64], off: &[f64]) -> DMatrix<f64> {
        let n = diag.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag[i]
            } else if i + 1 == j {
                off[i]
            } else if j + 1 == i {
                off[j]
            } else {
                0.0
            }
        })
    }

    #[test]
    fn matches_dense_eigensolver() {
        let diag = [2.0, -1.0, 0.5, 3.0, 1.5, 0.0];
        let off = [1.0, -0.3, 2.0, 0.7, 0.1];
        let mut reference: Vec<f64> = dense(&diag, &off)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        reference.sort_by(f64::total_cmp);
        let bracket = gershgorin(&diag, &off);
        for (k, want) in reference.iter().enumerate() {
            let got = kth_eigenvalue(&diag, &off, k, bracket, 1e-13);
            assert!((got - want).abs() < 1e-12, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn counts_are_monotone() {
        let diag = [1.0, 2.0, 3.0];
        let off_sq = [0.25, 0.25];
        let mut prev = 0;
        for i in -10..60 {
            let c = sturm_count(&diag, &off_sq, i as f64 * 0.1);
            assert!(c >= prev);
            prev = c;
        }
        assert_eq!(prev, 3);
    }
}
