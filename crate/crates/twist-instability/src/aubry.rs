//! Variational side of the map: pinned relaxation, the S-function, the
//! minimizing and minimax homoclinics, the barrier between them and the
//! tail constant of the homoclinic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bisect, gershgorin, golden_section_min, is_positive_definite, solve_tridiagonal};
use crate::twistmap::{action_gradient, linearize_eigen, residual, window_action, Configuration, FixedPointData, GeneratingFunction};

#[derive(Debug, Clone, Copy)]
pub struct RelaxSettings {
    pub max_iter: usize,
    /// Residual below which Newton steps are attempted.
    pub newton_switch: f64,
}

impl Default for RelaxSettings {
    fn default() -> Self {
        RelaxSettings { max_iter: 400_000, newton_switch: 1e-3 }
    }
}

/// Tridiagonal second variation of the window action: diagonal entries and
/// the off-diagonal V12 couplings between neighbouring window sites.
pub fn action_hessian(gf: &GeneratingFunction, c: &Configuration) -> (Vec<f64>, Vec<f64>) {
    let n = c.len();
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    let mut prev = c.tail_left;
    for i in 0..n {
        let x = c.values[i];
        let next = if i + 1 < n { c.values[i + 1] } else { c.tail_right };
        diag.push(gf.v22(prev, x) + gf.v11(x, next));
        if i + 1 < n {
            off.push(gf.v12(x, next));
        }
        prev = x;
    }
    (diag, off)
}

fn masked_residual(g: &[f64], free: &[bool]) -> f64 {
    g.iter().zip(free).filter(|(_, &f)| f).fold(0.0, |m, (g, _)| m.max(g.abs()))
}

fn roundoff_slack(action: f64, n: usize) -> f64 {
    1e-14 * (1.0 + action.abs()) * (n as f64).sqrt().max(1.0)
}

/// Minimizes the window action over the unpinned sites by explicit
/// gradient-flow steps, switching to Newton steps close to a nondegenerate
/// minimum. Every accepted step lowers the action (up to roundoff).
pub fn relax_pinned(gf: &GeneratingFunction, c: &Configuration, pinned: &[i64], tol: f64) -> Result<Configuration> {
    relax_pinned_with(gf, c, pinned, tol, RelaxSettings::default()).map(|r| r.config)
}

#[derive(Debug, Clone)]
pub struct Relaxed {
    pub config: Configuration,
    pub residual: f64,
    pub iterations: usize,
    /// Window action after every accepted step, starting value first.
    pub action_trace_len: usize,
    pub max_action_increase: f64,
}

pub fn relax_pinned_with(
    gf: &GeneratingFunction,
    c: &Configuration,
    pinned: &[i64],
    tol: f64,
    settings: RelaxSettings,
) -> Result<Relaxed> {
    let n = c.len();
    let mut free = vec![true; n];
    for &p in pinned {
        if !c.contains(p) {
            return Err(Error::IndexOutOfWindow { index: p, lo: c.lo, hi: c.hi() });
        }
        free[(p - c.lo) as usize] = false;
    }
    let mut x = c.clone();
    let mut action = window_action(gf, &x);
    let mut g = action_gradient(gf, &x);
    let mut res = masked_residual(&g, &free);
    let mut step = f64::NAN;
    let mut accepted = 1;
    let mut max_increase: f64 = 0.0;
    let mut stalled = 0usize;

    for it in 0..settings.max_iter {
        if res <= tol {
            return Ok(Relaxed { config: x, residual: res, iterations: it, action_trace_len: accepted, max_action_increase: max_increase });
        }
        let slack = roundoff_slack(action, n);
        let mut moved = false;

        if res < settings.newton_switch {
            let (mut diag, mut off) = action_hessian(gf, &x);
            let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            for i in 0..n {
                if !free[i] {
                    diag[i] = 1.0;
                    rhs[i] = 0.0;
                    if i > 0 {
                        off[i - 1] = 0.0;
                    }
                    if i + 1 < n {
                        off[i] = 0.0;
                    }
                }
            }
            if is_positive_definite(&diag, &off) {
                if let Some(d) = solve_tridiagonal(&off, &diag, &off, &rhs) {
                    let mut t = 1.0;
                    for _ in 0..30 {
                        let mut y = x.clone();
                        for i in 0..n {
                            y.values[i] += t * d[i];
                        }
                        let a = window_action(gf, &y);
                        let gy = action_gradient(gf, &y);
                        let ry = masked_residual(&gy, &free);
                        if a <= action + slack && (ry < res || a < action - slack) {
                            max_increase = max_increase.max(a - action);
                            x = y;
                            action = a;
                            g = gy;
                            res = ry;
                            moved = true;
                            break;
                        }
                        t *= 0.5;
                    }
                }
            }
        }

        if !moved {
            let (diag, off) = action_hessian(gf, &x);
            let (lo, hi) = gershgorin(&diag, &off);
            let lip = lo.abs().max(hi.abs()).max(1e-12);
            if !step.is_finite() || step > 8.0 / lip {
                step = 1.0 / lip;
            }
            let gg: f64 = g.iter().zip(&free).filter(|(_, &f)| f).map(|(v, _)| v * v).sum();
            for _ in 0..60 {
                let mut y = x.clone();
                for i in 0..n {
                    if free[i] {
                        y.values[i] -= step * g[i];
                    }
                }
                let a = window_action(gf, &y);
                let armijo = a <= action - 1e-4 * step * gg;
                let gy = action_gradient(gf, &y);
                let ry = masked_residual(&gy, &free);
                if armijo || (a <= action + slack && ry < res) {
                    max_increase = max_increase.max(a - action);
                    x = y;
                    action = a;
                    g = gy;
                    res = ry;
                    moved = true;
                    step *= 1.5;
                    break;
                }
                step *= 0.5;
            }
        }

        if moved {
            accepted += 1;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > 3 {
                break;
            }
        }
    }
    if res <= tol {
        return Ok(Relaxed { config: x, residual: res, iterations: settings.max_iter, action_trace_len: accepted, max_action_increase: max_increase });
    }
    Err(Error::MaxIterations { iterations: settings.max_iter, residual: res })
}

/// Plain Newton iteration towards the nearest nondegenerate equilibrium,
/// saddles included. Used only to polish configurations that are already
/// equilibria to a few digits.
pub fn newton_polish(gf: &GeneratingFunction, c: &Configuration, tol: f64) -> Result<Configuration> {
    let mut x = c.clone();
    let mut g = action_gradient(gf, &x);
    let mut res = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for _ in 0..50 {
        if res <= tol {
            break;
        }
        let (diag, off) = action_hessian(gf, &x);
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let Some(d) = solve_tridiagonal(&off, &diag, &off, &rhs) else { break };
        let mut y = x.clone();
        for (v, dv) in y.values.iter_mut().zip(&d) {
            *v += dv;
        }
        let gy = action_gradient(gf, &y);
        let ry = gy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(ry < res) {
            break;
        }
        x = y;
        g = gy;
        res = ry;
    }
    if res <= tol.max(1e-8) {
        Ok(x)
    } else {
        Err(Error::MaxIterations { iterations: 50, residual: res })
    }
}

/// Monotone kink from y0 to y0+1 through `x` at site 0, decaying by `rate`.
pub fn kink_guess(y0: f64, x: f64, m: i64, rate: f64) -> Configuration {
    let values = (-m..=m)
        .map(|j| {
            if j < 0 {
                y0 + (x - y0) * rate.powi((-j) as i32)
            } else if j > 0 {
                y0 + 1.0 - (y0 + 1.0 - x) * rate.powi(j as i32)
            } else {
                x
            }
        })
        .collect();
    Configuration::new(-m, values, y0, y0 + 1.0)
}

pub const PINNED_TOL: f64 = 1e-12;

/// S(x) together with the pinned relaxed configuration, relaxing from `init`
/// with site 0 overwritten by x.
pub fn s_eval_from(gf: &GeneratingFunction, fp: &FixedPointData, x: f64, init: &Configuration) -> Result<(f64, Configuration)> {
    if !(x > fp.y0 && x < fp.y0 + 1.0) {
        return Err(Error::OutOfRange { x, lo: fp.y0, hi: fp.y0 + 1.0 });
    }
    let mut c = init.clone();
    c.set(0, x);
    let relaxed = relax_pinned(gf, &c, &[0], PINNED_TOL)?;
    let s = s_of(gf, fp, &relaxed);
    Ok((s, relaxed))
}

/// S-value of a configuration on [-M, M] with tails y0, y0+1: the action
/// renormalized by V(y0, y0) on every bond, boundary bonds included.
pub fn s_of(gf: &GeneratingFunction, fp: &FixedPointData, c: &Configuration) -> f64 {
    let base = gf.v(fp.y0, fp.y0);
    let mut s = gf.v(c.tail_left, c.values[0]) - base;
    for w in c.values.windows(2) {
        s += gf.v(w[0], w[1]) - base;
    }
    s + gf.v(c.values[c.len() - 1], c.tail_right) - base
}

fn kink_rate(gf: &GeneratingFunction, fp: &FixedPointData) -> f64 {
    let lam = fp.lambda.or_else(|| linearize_eigen(gf, fp).ok()).unwrap_or(2.0);
    (1.0 / lam).clamp(0.05, 0.8)
}

pub fn s_eval_config(gf: &GeneratingFunction, fp: &FixedPointData, x: f64, m: usize) -> Result<(f64, Configuration)> {
    let init = kink_guess(fp.y0, x, m as i64, kink_rate(gf, fp));
    s_eval_from(gf, fp, x, &init)
}

pub fn s_eval(gf: &GeneratingFunction, fp: &FixedPointData, x: f64, m: usize) -> Result<f64> {
    s_eval_config(gf, fp, x, m).map(|r| r.0)
}

/// Gradient component at the pinned site: the derivative of S in x.
fn pinned_slope(gf: &GeneratingFunction, c: &Configuration) -> f64 {
    gf.v2(c.get(-1), c.get(0)) + gf.v1(c.get(0), c.get(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicPair {
    pub z: Configuration,
    pub z_tilde: Configuration,
    pub s_samples: Vec<(f64, f64)>,
    pub delta0: f64,
    /// S at the refined minimizer and maximizer of S.
    pub s_min: f64,
    pub s_max: f64,
    /// Endpoints of E0, present once an energy level e0 is chosen.
    pub a0: Option<f64>,
    pub b0: Option<f64>,
    pub m: usize,
    pub lambda: f64,
    pub kappa1: f64,
}

impl HomoclinicPair {
    pub fn y0(&self) -> f64 {
        self.z.tail_left
    }

    pub fn energy_window(&self) -> Result<(f64, f64)> {
        match (self.a0, self.b0) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::MissingData("E0 endpoints not computed".into())),
        }
    }
}

/// Re-indexes c so that index `s` becomes 0, keeping the window [-m, m].
fn reindex(c: &Configuration, s: i64, m: i64) -> Configuration {
    let values = (-m..=m).map(|j| c.get(j + s)).collect();
    Configuration::new(-m, values, c.tail_left, c.tail_right)
}

struct Extremum {
    x: f64,
    s: f64,
    config: Configuration,
}

/// Refines an interior extremum of S near grid index i. `sign` is +1 for a
/// minimum and -1 for a maximum.
fn refine_extremum(
    gf: &GeneratingFunction,
    fp: &FixedPointData,
    grid: &[(f64, f64, Configuration)],
    i: usize,
    sign: f64,
) -> Result<Extremum> {
    let lo = if i > 0 { grid[i - 1].0 } else { 0.5 * (fp.y0 + grid[0].0) };
    let hi = if i + 1 < grid.len() { grid[i + 1].0 } else { 0.5 * (grid[i].0 + fp.y0 + 1.0) };
    let nearest = |x: f64| {
        let j = grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 .0 - x).abs().total_cmp(&(b.1 .0 - x).abs()))
            .map(|(j, _)| j)
            .unwrap_or(i);
        &grid[j].2
    };
    let eval = |x: f64| s_eval_from(gf, fp, x, nearest(x));

    let mut failure = None;
    let (xg, _) = golden_section_min(
        |x| match eval(x) {
            Ok((s, _)) => sign * s,
            Err(e) => {
                failure = Some(e);
                f64::INFINITY
            }
        },
        lo,
        hi,
        1e-6,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    // S is flat at the extremum, so finish with a sign change of dS/dx
    let slope = |x: f64| eval(x).map(|(_, c)| sign * pinned_slope(gf, &c)).unwrap_or(f64::NAN);
    let mut x = xg;
    for w in [1e-5, 1e-4, hi - lo] {
        let (a, b) = ((xg - w).max(lo), (xg + w).min(hi));
        if let Some(r) = bisect(slope, a, b, 1e-14) {
            x = r;
            break;
        }
    }
    let (s, config) = eval(x)?;
    Ok(Extremum { x, s, config })
}

/// Largest j-weighted tail deviation, ignoring deviations at the level of
/// floating-point noise.
pub fn kappa1_fit(pair: &HomoclinicPair, lambda: f64) -> f64 {
    kappa1_of(&pair.z_tilde, pair.y0(), lambda, pair.m as i64)
}

pub const TAIL_NOISE_FLOOR: f64 = 1e-12;

fn kappa1_of(zt: &Configuration, y0: f64, lambda: f64, m: i64) -> f64 {
    let mut k1: f64 = 0.0;
    for j in 0..=m {
        let left = (zt.get(-j) - y0).abs();
        let right = (zt.get(j) - y0 - 1.0).abs();
        let w = lambda.powi(j as i32 + 1);
        if left > TAIL_NOISE_FLOOR {
            k1 = k1.max(left * w);
        }
        if right > TAIL_NOISE_FLOOR {
            k1 = k1.max(right * w);
        }
    }
    k1
}

/// Violations of the interlacing chain z~_j < z_j < z~_{j+1} and of strict
/// monotonicity. Comparisons between values closer than the tail noise
/// floor are only required to hold non-strictly.
pub fn ordering_violations(pair: &HomoclinicPair) -> Vec<String> {
    let (z, zt) = (&pair.z, &pair.z_tilde);
    let y0 = pair.y0();
    let m = pair.m as i64;
    let mut out = Vec::new();
    let mut less = |a: f64, b: f64, what: String| {
        let strict_needed = (b - a).abs() > TAIL_NOISE_FLOOR || (a - y0).abs().min((a - y0 - 1.0).abs()) > TAIL_NOISE_FLOOR;
        if (strict_needed && !(a < b)) || a > b + TAIL_NOISE_FLOOR {
            out.push(format!("{what}: {a} !< {b}"));
        }
    };
    for j in -m..m {
        less(zt.get(j), z.get(j), format!("z~_{j} < z_{j}"));
        less(z.get(j), zt.get(j + 1), format!("z_{j} < z~_{}", j + 1));
        less(z.get(j), z.get(j + 1), format!("z_{j} < z_{}", j + 1));
        less(zt.get(j), zt.get(j + 1), format!("z~_{j} < z~_{}", j + 1));
    }
    for c in [z, zt] {
        for v in &c.values {
            if *v < y0 - TAIL_NOISE_FLOOR || *v > y0 + 1.0 + TAIL_NOISE_FLOOR {
                out.push(format!("value {v} outside [y0, y0+1]"));
            }
        }
    }
    out
}

/// Sum of V(z~_k, z~_{k+1}) - V(z_k, z_{k+1}) over every bond of the window.
pub fn delta0_direct(gf: &GeneratingFunction, pair: &HomoclinicPair) -> f64 {
    let (z, zt) = (&pair.z, &pair.z_tilde);
    let m = pair.m as i64;
    (-m - 1..=m).map(|k| gf.v(zt.get(k), zt.get(k + 1)) - gf.v(z.get(k), z.get(k + 1))).sum()
}

pub fn compute_homoclinics(gf: &GeneratingFunction, fp: &FixedPointData, m: usize, grid_n: usize) -> Result<HomoclinicPair> {
    if m < 4 || grid_n < 8 {
        return Err(Error::WindowTooSmall(format!("M = {m}, grid_n = {grid_n}")));
    }
    let lambda = match fp.lambda {
        Some(l) => l,
        None => linearize_eigen(gf, fp)?,
    };
    let fp = FixedPointData { lambda: Some(lambda), ..*fp };
    let y0 = fp.y0;
    let mi = m as i64;

    let xs: Vec<f64> = (0..grid_n).map(|i| y0 + (i + 1) as f64 / (grid_n + 1) as f64).collect();
    let grid: Vec<(f64, f64, Configuration)> = xs
        .par_iter()
        .map(|&x| s_eval_config(gf, &fp, x, m).map(|(s, c)| (x, s, c)))
        .collect::<Result<_>>()?;

    let imin = (0..grid_n).min_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1).then(a.cmp(&b))).unwrap();
    let lo_ext = refine_extremum(gf, &fp, &grid, imin, 1.0)?;

    let z_raw = relax_pinned(gf, &lo_ext.config, &[], PINNED_TOL)?;
    // z_{-1} <= y0 + 1/2 < z_0, so the maximizer of S between them is z~_0
    let s = (-mi..mi).rev().find(|&j| z_raw.get(j) <= y0 + 0.5).unwrap_or(0);
    let z = newton_polish(gf, &reindex(&z_raw, s + 1, mi), PINNED_TOL)?;

    let (zm1, z0) = (z.get(-1), z.get(0));
    let imax = (0..grid_n)
        .filter(|&i| xs[i] > zm1 && xs[i] < z0)
        .max_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1).then(b.cmp(&a)))
        .ok_or_else(|| Error::OrderingViolated(format!("no grid point between z_-1 = {zm1} and z_0 = {z0}")))?;
    let hi_ext = refine_extremum(gf, &fp, &grid, imax, -1.0)?;
    if !(hi_ext.x > zm1 && hi_ext.x < z0) {
        return Err(Error::OrderingViolated(format!("maximizer {} not between z_-1 and z_0", hi_ext.x)));
    }
    let zt = newton_polish(gf, &hi_ext.config, PINNED_TOL)?;

    let mut pair = HomoclinicPair {
        z,
        z_tilde: zt,
        s_samples: grid.iter().map(|g| (g.0, g.1)).collect(),
        delta0: hi_ext.s - lo_ext.s,
        s_min: lo_ext.s,
        s_max: hi_ext.s,
        a0: None,
        b0: None,
        m,
        lambda,
        kappa1: 0.0,
    };
    pair.kappa1 = kappa1_fit(&pair, lambda);

    let bad = ordering_violations(&pair);
    if !bad.is_empty() {
        return Err(Error::OrderingViolated(bad.join("; ")));
    }
    for (name, c) in [("z", &pair.z), ("z~", &pair.z_tilde)] {
        let r = residual(gf, c);
        if r > 1e-8 {
            return Err(Error::OrderingViolated(format!("{name} residual {r:e}")));
        }
    }
    let edge = pair.kappa1 * lambda.powi(-(m as i32));
    if !(edge < 1e-10) {
        return Err(Error::WindowTooSmall(format!("tail bound at window edge {edge:e} for M = {m}")));
    }
    Ok(pair)
}

/// Endpoints of the component of z_0 in {x : S(x) - S(z_0) <= e0}, within
/// [z~_0, z~_1].
pub fn energy_window(gf: &GeneratingFunction, fp: &FixedPointData, pair: &HomoclinicPair, e0: f64) -> Result<(f64, f64)> {
    let z0 = pair.z.get(0);
    if e0 <= 0.0 {
        return Ok((z0, z0));
    }
    if e0 >= pair.delta0 {
        return Err(Error::DegenerateInputs(format!("e0 = {e0} not below the barrier {}", pair.delta0)));
    }
    let fp = FixedPointData { lambda: Some(pair.lambda), ..*fp };
    let above = |x: f64| s_eval_from(gf, &fp, x, &pair.z).map(|(s, _)| s - pair.s_min - e0).unwrap_or(f64::NAN);
    // S can stay below e0 all the way to z~_0 or z~_1; E0 is then cut off there.
    let end = |edge: f64, side: &str| {
        if above(edge) <= 0.0 {
            Ok(edge)
        } else {
            bisect(above, z0, edge, 1e-12).ok_or_else(|| Error::DegenerateInputs(format!("no {side} endpoint of E0")))
        }
    };
    Ok((end(pair.z_tilde.get(0), "left")?, end(pair.z_tilde.get(1), "right")?))
}

pub fn with_energy_window(gf: &GeneratingFunction, fp: &FixedPointData, pair: &HomoclinicPair, e0: f64) -> Result<HomoclinicPair> {
    let (a0, b0) = energy_window(gf, fp, pair, e0)?;
    Ok(HomoclinicPair { a0: Some(a0), b0: Some(b0), ..pair.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twistmap::find_minimizing_fixed_point;

    fn k1() -> (GeneratingFunction, FixedPointData) {
        let gf = GeneratingFunction::standard(1.0);
        let fp = find_minimizing_fixed_point(&gf).unwrap();
        (gf, fp)
    }

    #[test]
    fn relax_constant_is_fixed() {
        let (gf, _) = k1();
        let c = Configuration::constant(-5, 5, 0.0);
        assert_eq!(relax_pinned(&gf, &c, &[], 1e-12).unwrap(), c);
    }

    #[test]
    fn relax_clamped_interpolation() {
        let (gf, _) = k1();
        let vals: Vec<f64> = (-32..=32).map(|j| (j + 32) as f64 / 64.0).collect();
        let c = Configuration::new(-32, vals, 0.0, 1.0);
        let r = relax_pinned_with(&gf, &c, &[-32, 32], 1e-10, RelaxSettings::default()).unwrap();
        assert!(r.residual <= 1e-10);
        let v = &r.config.values;
        assert!(v.windows(2).all(|w| w[0] <= w[1]));
        assert!(v.windows(2).filter(|w| w[0] > 1e-12 && w[1] < 1.0 - 1e-12).all(|w| w[0] < w[1]));
        assert!(r.max_action_increase <= 1e-12);
        let mut c2 = c.clone();
        c2.set(0, 0.5);
        let r2 = relax_pinned(&gf, &c2, &[-32, 0, 32], 1e-10).unwrap();
        assert_eq!(r2.get(0), 0.5);
    }

    #[test]
    fn s_eval_rejects_out_of_range() {
        let (gf, fp) = k1();
        assert!(matches!(s_eval(&gf, &fp, 1.2, 16), Err(Error::OutOfRange { .. })));
        let near_lo = s_eval(&gf, &fp, 1e-3, 32).unwrap();
        let near_hi = s_eval(&gf, &fp, 1.0 - 1e-3, 32).unwrap();
        assert!(near_lo.is_finite() && near_hi.is_finite() && near_lo > 0.0 && near_hi > 0.0);
    }

    #[test]
    fn kappa1_of_geometric_tails() {
        let lam: f64 = 3.0;
        // j = 0 enters both bounds, which needs c >= lambda / 2 here
        let c = 2.0;
        let m = 10;
        let vals = (-m..=m)
            .map(|j: i64| if j <= 0 { c * lam.powi(-(-j as i32 + 1)) } else { 1.0 - c * lam.powi(-(j as i32 + 1)) })
            .collect();
        let zt = Configuration::new(-m, vals, 0.0, 1.0);
        let k = kappa1_of(&zt, 0.0, lam, m);
        assert!((k - c).abs() < 1e-12, "{k}");
    }
}
