//! Spectral projected gradient method for smooth objectives on a box.

#[derive(Debug, Clone, Copy)]
pub struct SpgOptions {
    pub max_iter: usize,
    /// Stop once the projected gradient has sup-norm below this.
    pub tol: f64,
    /// Length of the nonmonotone line-search memory.
    pub memory: usize,
}

impl Default for SpgOptions {
    fn default() -> Self {
        SpgOptions { max_iter: 5000, tol: 1e-10, memory: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct SpgResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub pg_norm: f64,
}

pub fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn pg_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..x.len()).fold(0.0, |m, i| m.max(((x[i] - g[i]).clamp(lo[i], hi[i]) - x[i]).abs()))
}

/// Minimizes `f` over lo <= x <= hi. `f(x, grad)` returns the value and
/// writes the gradient.
pub fn spg<F>(mut f: F, x0: &[f64], lo: &[f64], hi: &[f64], opts: SpgOptions) -> SpgResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let (amin, amax) = (1e-12, 1e12);
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut history = vec![fx];
    let mut pgn = pg_norm(&x, &g, lo, hi);
    let mut alpha = if pgn > 0.0 { (1.0 / pgn).clamp(amin, amax) } else { 1.0 };
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut it = 0;
    let mut best = fx;
    let mut since_best = 0;
    while it < opts.max_iter && pgn > opts.tol && fx.is_finite() {
        it += 1;
        for i in 0..n {
            d[i] = (x[i] - alpha * g[i]).clamp(lo[i], hi[i]) - x[i];
        }
        let gd: f64 = (0..n).map(|i| g[i] * d[i]).sum();
        if gd >= 0.0 {
            break;
        }
        let fmax = history.iter().rev().take(opts.memory).fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut lam = 1.0;
        let mut fnew;
        let mut ok = false;
        for _ in 0..60 {
            for i in 0..n {
                xn[i] = x[i] + lam * d[i];
            }
            fnew = f(&xn, &mut gn);
            if fnew.is_finite() && fnew <= fmax + 1e-4 * lam * gd {
                ok = true;
                break;
            }
            let denom = fnew - fx - lam * gd;
            let trial = if fnew.is_finite() && denom > 0.0 { -0.5 * lam * lam * gd / denom } else { 0.5 * lam };
            lam = if trial >= 0.1 * lam && trial <= 0.9 * lam { trial } else { 0.5 * lam };
        }
        if !ok {
            break;
        }
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..n {
            let s = xn[i] - x[i];
            ss += s * s;
            sy += s * (gn[i] - g[i]);
        }
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut g, &mut gn);
        fx = f(&x, &mut g);
        history.push(fx);
        // roundoff-level progress only: the projected gradient cannot shrink further
        if fx < best - 1e-14 * best.abs().max(1e-300) {
            best = fx;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 5 * opts.memory {
                pgn = pg_norm(&x, &g, lo, hi);
                break;
            }
        }
        pgn = pg_norm(&x, &g, lo, hi);
        alpha = if sy <= 0.0 { amax } else { (ss / sy).clamp(amin, amax) };
    }
    SpgResult { x, f: fx, iterations: it, pg_norm: pgn }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_constrained_quadratic() {
        // min (x-2)^2 + 10 (y+1)^2 on [0,1]^2 -> (1, 0)
        let r = spg(
            |x, g| {
                g[0] = 2.0 * (x[0] - 2.0);
                g[1] = 20.0 * (x[1] + 1.0);
                (x[0] - 2.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2)
            },
            &[0.5, 0.5],
            &[0.0, 0.0],
            &[1.0, 1.0],
            SpgOptions::default(),
        );
        assert!((r.x[0] - 1.0).abs() < 1e-12 && r.x[1].abs() < 1e-12);
    }

    #[test]
    fn rosenbrock_interior() {
        let r = spg(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            &[-1.2, 1.0],
            &[-5.0, -5.0],
            &[5.0, 5.0],
            SpgOptions { max_iter: 20000, tol: 1e-9, memory: 10 },
        );
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r);
    }
}
