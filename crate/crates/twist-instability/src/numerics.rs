//! Small dense-free linear algebra and scalar root/min finders.

/// Solves a tridiagonal system. `sub[i]` couples row i+1 to column i and
/// `sup[i]` couples row i to column i+1. Returns None on a zero pivot.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Some(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 || !piv.is_finite() {
        return None;
    }
    if n > 1 {
        c[0] = sup[0] / piv;
    }
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - sub[i - 1] * c[i - 1];
        if piv == 0.0 || !piv.is_finite() {
            return None;
        }
        if i < n - 1 {
            c[i] = sup[i] / piv;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// Number of eigenvalues of the symmetric tridiagonal matrix (diag, off)
/// strictly below `shift`, from the signs of the LDL^T pivots.
pub fn count_below(diag: &[f64], off: &[f64], shift: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..diag.len() {
        let e2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        d = diag[i] - shift - if i == 0 { 0.0 } else { e2 / d };
        if d == 0.0 {
            d = -f64::EPSILON * (diag[i].abs() + shift.abs() + 1.0);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// True when every LDL^T pivot of the symmetric tridiagonal matrix is positive.
pub fn is_positive_definite(diag: &[f64], off: &[f64]) -> bool {
    count_below(diag, off, 0.0) == 0
}

/// Gershgorin enclosure of the spectrum of a symmetric tridiagonal matrix.
pub fn gershgorin(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    (lo, hi)
}

/// Eigenvalue of index `j` (ascending, zero based) by bisection on the inertia.
pub fn tridiagonal_eigenvalue(diag: &[f64], off: &[f64], j: usize, rel_tol: f64) -> f64 {
    let (mut lo, mut hi) = gershgorin(diag, off);
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if count_below(diag, off, mid) > j {
            hi = mid;
        } else {
            lo = mid;
        }
        let width = hi - lo;
        if width <= rel_tol * mid.abs() || width <= 4.0 * f64::EPSILON * scale {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section search for a minimum of `f` on [a, b].
pub fn golden_section_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Bisection for a sign change of `f` on [a, b]. Returns None when the
/// endpoint values do not bracket a root.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol || m == a || m == b {
            return Some(m);
        }
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Safeguarded Newton iteration for an increasing function on a bracket
/// [a, b] with f(a) < 0 < f(b). Falls back to bisection whenever the
/// Newton step leaves the bracket. Iterates to machine precision.
pub fn newton_bracketed<F: FnMut(f64) -> (f64, f64)>(mut f: F, mut a: f64, mut b: f64) -> f64 {
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let mut next = x - fx / dfx;
        if !(next > a && next < b) || !next.is_finite() {
            next = 0.5 * (a + b);
        }
        if next == x || b - a <= f64::EPSILON * x.abs().max(1.0) {
            return next;
        }
        let step = (next - x).abs();
        x = next;
        if step <= 1e-15 * x.abs().max(1.0) {
            // one more evaluation to settle the last bit
            let (fx, dfx) = f(x);
            let polished = x - fx / dfx;
            return if polished.is_finite() && (polished - x).abs() <= 4.0 * step { polished } else { x };
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_solve_matches_manual_product() {
        let sub = [1.0, -0.5, 0.25];
        let diag = [4.0, 5.0, 6.0, 3.0];
        let sup = [0.5, 1.5, -1.0];
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut rhs = vec![0.0; 4];
        for i in 0..4 {
            rhs[i] = diag[i] * x[i];
            if i > 0 {
                rhs[i] += sub[i - 1] * x[i - 1];
            }
            if i < 3 {
                rhs[i] += sup[i] * x[i + 1];
            }
        }
        let got = solve_tridiagonal(&sub, &diag, &sup, &rhs).unwrap();
        for i in 0..4 {
            assert!((got[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn inertia_counts_known_spectrum() {
        // tridiag(-1, 2, -1) of size n has eigenvalues 2 - 2cos(j pi/(n+1))
        let n = 10;
        let diag = vec![2.0; n];
        let off = vec![-1.0; n - 1];
        for j in 0..n {
            let exact = 2.0 - 2.0 * ((j + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            let got = tridiagonal_eigenvalue(&diag, &off, j, 1e-14);
            assert!((got - exact).abs() < 1e-12, "{j}: {got} vs {exact}");
        }
        assert_eq!(count_below(&diag, &off, 0.0), 0);
        assert_eq!(count_below(&diag, &off, 4.0), n);
    }

    #[test]
    fn golden_and_bisect() {
        let (x, _) = golden_section_min(|x| (x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-8).is_none());
    }

    #[test]
    fn newton_reaches_machine_precision() {
        let r = newton_bracketed(|x| (x.powi(3) - 2.0, 3.0 * x * x), 0.0, 2.0);
        assert!((r - 2f64.cbrt()).abs() < 1e-15);
    }
}
