//! The lattice gradient flow dx_j/dt = -V2(x_{j-1}, x_j) - V1(x_j, x_{j+1})
//! on a window with clamped tails, the action-flux audit and the order
//! preservation check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aubry::HomoclinicPair;
use crate::error::{Error, Result};
use crate::instability::Landscape;
use crate::numerics::golden_section_min;
use crate::ode::{integrate_sampled, OdeOptions, StepStats};
use crate::twistmap::{Configuration, GeneratingFunction};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlowOptions {
    pub atol: f64,
    pub rtol: f64,
    pub sample_dt: f64,
    /// Step class X_K the configuration must stay in.
    pub step_class: f64,
    pub step_margin: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { atol: 1e-10, rtol: 1e-8, sample_dt: 0.1, step_class: 1.0, step_margin: 1e-6, h_min: 1e-12, max_steps: 20_000_000 }
    }
}

impl FlowOptions {
    fn ode(&self) -> OdeOptions {
        OdeOptions { atol: self.atol, rtol: self.rtol, h_min: self.h_min, max_steps: self.max_steps }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Configuration>,
    pub step_stats: StepStats,
}

/// Right-hand side of the flow on the window values with fixed tails.
pub fn flow_rhs(gf: &GeneratingFunction, tail_left: f64, tail_right: f64, x: &[f64], dx: &mut [f64]) {
    let n = x.len();
    let mut prev = tail_left;
    for i in 0..n {
        let next = if i + 1 < n { x[i + 1] } else { tail_right };
        dx[i] = -(gf.v2(prev, x[i]) + gf.v1(x[i], next));
        prev = x[i];
    }
}

fn step_check(c: &Configuration, t: f64, opts: &FlowOptions) -> Result<()> {
    let step = c.max_step();
    if step > opts.step_class + opts.step_margin {
        return Err(Error::StepClassViolation { t, step, bound: opts.step_class });
    }
    Ok(())
}

/// Integrates the flow from c0 for t in [0, t_end], recording the state
/// every `sample_dt`.
pub fn integrate(gf: &GeneratingFunction, c0: &Configuration, t_end: f64, opts: &FlowOptions) -> Result<Trajectory> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let stats = integrate_with(gf, c0, t_end, opts, |t, c| {
        times.push(t);
        states.push(c.clone());
        Ok(true)
    })?;
    Ok(Trajectory { times, states, step_stats: stats })
}

/// Like `integrate`, handing each sample to `visit` instead of storing it.
/// Returning false from `visit` stops the integration.
pub fn integrate_with<S>(gf: &GeneratingFunction, c0: &Configuration, t_end: f64, opts: &FlowOptions, mut visit: S) -> Result<StepStats>
where
    S: FnMut(f64, &Configuration) -> Result<bool>,
{
    let (tl, tr, lo) = (c0.tail_left, c0.tail_right, c0.lo);
    let mut state = c0.clone();
    integrate_sampled(
        |_, x, dx| flow_rhs(gf, tl, tr, x, dx),
        &c0.values,
        t_end,
        opts.sample_dt,
        opts.ode(),
        |t, x| {
            state.values.copy_from_slice(x);
            debug_assert_eq!(state.lo, lo);
            step_check(&state, t, opts)?;
            visit(t, &state)
        },
    )
}

/// 8 max|V1|,|V2| times max|V12| over |x - y| <= 2, by a dense grid over
/// one period and the offset range followed by local refinement.
pub fn kappa2(gf: &GeneratingFunction) -> f64 {
    kappa2_with(gf, 1024)
}

pub fn kappa2_with(gf: &GeneratingFunction, grid: usize) -> f64 {
    let at = |i: usize, j: usize| (i as f64 / grid as f64, -2.0 + 4.0 * j as f64 / (grid - 1) as f64);
    let best = |f: &(dyn Fn(f64, f64) -> f64 + Sync)| {
        let (v, i, j) = (0..grid)
            .into_par_iter()
            .map(|i| {
                (0..grid).fold((f64::NEG_INFINITY, 0, 0), |acc, j| {
                    let (x, d) = at(i, j);
                    let v = f(x, x + d);
                    if v > acc.0 {
                        (v, i, j)
                    } else {
                        acc
                    }
                })
            })
            .reduce(|| (f64::NEG_INFINITY, 0, 0), |a, b| if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) { b } else { a });
        // alternate one-dimensional refinements in x and in the offset
        let (mut x, mut d) = at(i, j);
        let mut val = v;
        let hx = 1.0 / grid as f64;
        let hd = 4.0 / (grid - 1) as f64;
        for _ in 0..4 {
            let (xn, fx) = golden_section_min(|s| -f(s, s + d), x - hx, x + hx, 1e-13);
            if -fx > val {
                val = -fx;
                x = xn;
            }
            let (dn, fd) = golden_section_min(|s| -f(x, x + s), (d - hd).max(-2.0), (d + hd).min(2.0), 1e-13);
            if -fd > val {
                val = -fd;
                d = dn;
            }
        }
        val
    };
    let m1 = best(&|x, y| gf.v1(x, y).abs().max(gf.v2(x, y).abs()));
    let m12 = best(&|x, y| gf.v12(x, y).abs());
    8.0 * m1 * m12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluxAuditRecord {
    pub t: f64,
    #[serde(rename = "dE_dt_numeric")]
    pub de_dt_numeric: f64,
    pub grad_norm_sq: f64,
    #[serde(rename = "F_reconstructed")]
    pub f_reconstructed: f64,
    /// F1 + ... + F8 evaluated directly from the state.
    #[serde(rename = "F_direct")]
    pub f_direct: f64,
    #[serde(rename = "F_bound")]
    pub f_bound: f64,
    pub components: [f64; 8],
    /// |F1| and its bound kappa2/4 |x_{-N+1} - z_{-N+1}|.
    pub f1_abs: f64,
    pub f1_bound: f64,
    /// |F2 + F5 + F6| and its bound kappa2/4 |x_{-N} - z_{-N}|.
    pub left_abs: f64,
    pub left_bound: f64,
}

impl FluxAuditRecord {
    /// |dE/dt - F + ||grad E||^2| using the directly evaluated flux.
    pub fn balance_residual(&self) -> f64 {
        (self.de_dt_numeric - self.f_direct + self.grad_norm_sq).abs()
    }
}

/// F1..F8 at state x for the perturbation h = [x - z] on -N+1..=N.
pub fn flux_components(gf: &GeneratingFunction, z: &Configuration, x: &Configuration, n: usize) -> [f64; 8] {
    let ni = n as i64;
    let (v1, v2) = (|a, b| gf.v1(a, b), |a, b| gf.v2(a, b));
    let xg = |i: i64| x.get(i);
    let zg = |i: i64| z.get(i);
    let g_left = v2(xg(-ni), xg(-ni + 1)) + v1(xg(-ni + 1), xg(-ni + 2));
    let g_right = v2(xg(ni - 1), xg(ni)) + v1(xg(ni), xg(ni + 1));
    let f1 = (v2(zg(-ni - 1), zg(-ni)) + v1(zg(-ni), xg(-ni + 1))).powi(2);
    let f2 = (v2(zg(-ni), xg(-ni + 1)) + v1(xg(-ni + 1), xg(-ni + 2))).powi(2);
    let f3 = (v2(xg(ni - 1), xg(ni)) + v1(xg(ni), zg(ni + 1))).powi(2);
    let f4 = (v2(xg(ni), zg(ni + 1)) + v1(zg(ni + 1), zg(ni + 2))).powi(2);
    let f5 = -v2(zg(-ni), xg(-ni + 1)) * g_left;
    let f6 = -v1(xg(-ni + 1), xg(-ni + 2)) * g_left;
    let f7 = -v2(xg(ni - 1), xg(ni)) * g_right;
    let f8 = -v1(xg(ni), zg(ni + 1)) * g_right;
    [f1, f2, f3, f4, f5, f6, f7, f8]
}

/// Fourth-order finite difference of uniformly spaced samples at index s,
/// one-sided near the ends.
fn fourth_order_derivative(f: &[f64], s: usize, h: f64) -> f64 {
    let m = f.len();
    let edge = |at: &dyn Fn(usize) -> f64| (-25.0 * at(0) + 48.0 * at(1) - 36.0 * at(2) + 16.0 * at(3) - 3.0 * at(4)) / (12.0 * h);
    let near = |at: &dyn Fn(usize) -> f64| (-3.0 * at(0) - 10.0 * at(1) + 18.0 * at(2) - 6.0 * at(3) + at(4)) / (12.0 * h);
    match s {
        0 => edge(&|k| f[k]),
        1 => near(&|k| f[k]),
        _ if s == m - 1 => -edge(&|k| f[m - 1 - k]),
        _ if s == m - 2 => -near(&|k| f[m - 1 - k]),
        _ => (f[s - 2] - 8.0 * f[s - 1] + 8.0 * f[s + 1] - f[s + 2]) / (12.0 * h),
    }
}

/// Audits dE/dt = F - ||grad E||^2 along a trajectory for the window of
/// half-width n around site 0.
pub fn flux_audit(gf: &GeneratingFunction, pair: &HomoclinicPair, traj: &Trajectory, n: usize) -> Result<Vec<FluxAuditRecord>> {
    flux_audit_with_kappa2(gf, pair, traj, n, kappa2(gf))
}

pub fn flux_audit_with_kappa2(gf: &GeneratingFunction, pair: &HomoclinicPair, traj: &Trajectory, n: usize, k2: f64) -> Result<Vec<FluxAuditRecord>> {
    let ni = n as i64;
    let land = Landscape::new(gf, pair, n)?;
    let z = &pair.z;
    let Some(first) = traj.states.first() else { return Ok(Vec::new()) };
    if !first.contains(-ni - 1) || !first.contains(ni + 2) {
        return Err(Error::WindowMismatch(format!("trajectory window [{}, {}] does not cover [{}, {}]", first.lo, first.hi(), -ni - 1, ni + 2)));
    }
    let hs: Vec<Vec<f64>> = traj.states.iter().map(|x| (1 - ni..=ni).map(|j| x.get(j) - z.get(j)).collect()).collect();
    let energies: Vec<f64> = hs.iter().map(|h| land.energy_raw(h)).collect();
    let m = traj.times.len();
    let mut out = Vec::new();
    if m < 5 {
        return Ok(out);
    }
    let dt = traj.times[1] - traj.times[0];
    for s in 0..m {
        let de_dt = fourth_order_derivative(&energies, s, dt);
        let g = land.gradient_raw(&hs[s]);
        let grad_norm_sq: f64 = g.iter().map(|v| v * v).sum();
        let x = &traj.states[s];
        let comps = flux_components(gf, z, x, n);
        let dev = |i: i64| (x.get(i) - z.get(i)).abs();
        let max_dev = [-ni, -ni + 1, ni, ni + 1].iter().fold(0.0f64, |acc, &i| acc.max(dev(i)));
        out.push(FluxAuditRecord {
            t: traj.times[s],
            de_dt_numeric: de_dt,
            grad_norm_sq,
            f_reconstructed: de_dt + grad_norm_sq,
            f_direct: comps.iter().sum(),
            f_bound: k2 * max_dev,
            components: comps,
            f1_abs: comps[0].abs(),
            f1_bound: 0.25 * k2 * dev(-ni + 1),
            left_abs: (comps[1] + comps[4] + comps[5]).abs(),
            left_bound: 0.25 * k2 * dev(-ni),
        });
    }
    Ok(out)
}

/// Integrates cx and cy in lockstep and checks cx <= cy + 1e-9 at every
/// sample.
pub fn order_preserved(gf: &GeneratingFunction, cx: &Configuration, cy: &Configuration, t_end: f64) -> Result<bool> {
    order_preserved_with(gf, cx, cy, t_end, &FlowOptions::default())
}

pub fn order_preserved_with(gf: &GeneratingFunction, cx: &Configuration, cy: &Configuration, t_end: f64, opts: &FlowOptions) -> Result<bool> {
    if cx.lo != cy.lo || cx.len() != cy.len() {
        return Err(Error::WindowMismatch("ordered pair must share a window".into()));
    }
    let n = cx.len();
    let mut y0 = cx.values.clone();
    y0.extend_from_slice(&cy.values);
    let mut ordered = true;
    integrate_sampled(
        |_, y, dy| {
            let (a, b) = y.split_at(n);
            let (da, db) = dy.split_at_mut(n);
            flow_rhs(gf, cx.tail_left, cx.tail_right, a, da);
            flow_rhs(gf, cy.tail_left, cy.tail_right, b, db);
        },
        &y0,
        t_end,
        opts.sample_dt,
        opts.ode(),
        |_, y| {
            let (a, b) = y.split_at(n);
            if a.iter().zip(b).any(|(p, q)| *p > *q + 1e-9) {
                ordered = false;
                return Ok(false);
            }
            Ok(true)
        },
    )?;
    Ok(ordered && cx.tail_left <= cy.tail_left + 1e-9 && cx.tail_right <= cy.tail_right + 1e-9)
}
