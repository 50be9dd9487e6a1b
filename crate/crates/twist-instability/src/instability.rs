//! The energy E(h) of perturbations of the minimizing homoclinic, its
//! gradient and tridiagonal second variation, the constrained level sets
//! and the instability measures built from them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aubry::{relax_pinned, HomoclinicPair};
use crate::error::{Error, Result};
use crate::numerics::{bisect, count_below, tridiagonal_eigenvalue};
use crate::spg::{project, spg, SpgOptions};
use crate::twistmap::{Configuration, FixedPointData, GeneratingFunction};

/// Perturbation h supported on sites -N+1..=N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationWindow {
    pub n: usize,
    pub h: Vec<f64>,
}

impl PerturbationWindow {
    pub fn zeros(n: usize) -> Self {
        PerturbationWindow { n, h: vec![0.0; 2 * n] }
    }

    pub fn first(&self) -> i64 {
        1 - self.n as i64
    }

    pub fn last(&self) -> i64 {
        self.n as i64
    }

    /// h_j, zero outside the window.
    #[inline]
    pub fn get(&self, j: i64) -> f64 {
        if j < self.first() || j > self.last() {
            0.0
        } else {
            self.h[(j - self.first()) as usize]
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        PerturbationWindow { n: self.n, h: self.h.iter().map(|v| v * s).collect() }
    }

    pub fn norm_inf(&self) -> f64 {
        self.h.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Truncation of a configuration difference x - z to the window.
    pub fn from_difference(x: &Configuration, z: &Configuration, n: usize) -> Self {
        let first = 1 - n as i64;
        PerturbationWindow { n, h: (0..2 * n).map(|i| x.get(first + i as i64) - z.get(first + i as i64)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBound {
    pub n: usize,
    pub u: Vec<f64>,
}

impl BoxBound {
    /// u_j = 2 kappa1 lambda^{-|j|} on the window of half-width n.
    pub fn new(kappa1: f64, lambda: f64, n: usize) -> Self {
        let first = 1 - n as i64;
        BoxBound { n, u: (0..2 * n).map(|i| 2.0 * kappa1 * lambda.powi(-((first + i as i64).abs() as i32))).collect() }
    }

    pub fn scaled(&self, s: f64) -> Self {
        BoxBound { n: self.n, u: self.u.iter().map(|v| v * s).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TridiagonalOperator {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl TridiagonalOperator {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.sub[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.sup[i] * v[i + 1];
                }
                s
            })
            .collect()
    }
}

/// E and its derivatives around the minimizing homoclinic z.
pub struct Landscape<'a> {
    gf: &'a GeneratingFunction,
    z: &'a Configuration,
    n: usize,
}

impl<'a> Landscape<'a> {
    pub fn new(gf: &'a GeneratingFunction, pair: &'a HomoclinicPair, n: usize) -> Result<Self> {
        Self::around(gf, &pair.z, n)
    }

    pub fn around(gf: &'a GeneratingFunction, z: &'a Configuration, n: usize) -> Result<Self> {
        let ni = n as i64;
        if n == 0 || !z.contains(-ni - 1) || !z.contains(ni + 2) {
            return Err(Error::WindowMismatch(format!(
                "perturbation half-width {n} needs z on [{}, {}], have [{}, {}]",
                -ni - 1,
                ni + 2,
                z.lo,
                z.hi()
            )));
        }
        Ok(Landscape { gf, z, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn check(&self, h: &PerturbationWindow) -> Result<()> {
        if h.n != self.n || h.h.len() != 2 * self.n {
            return Err(Error::WindowMismatch(format!("h has half-width {}, expected {}", h.n, self.n)));
        }
        Ok(())
    }

    #[inline]
    fn y(&self, h: &[f64], j: i64) -> f64 {
        let first = 1 - self.n as i64;
        let off = j - first;
        if off >= 0 && (off as usize) < h.len() {
            self.z.get(j) + h[off as usize]
        } else {
            self.z.get(j)
        }
    }

    /// Sum over bonds (k, k+1), k = -N..=N, of V(z+h) - V(z).
    pub fn energy_raw(&self, h: &[f64]) -> f64 {
        let ni = self.n as i64;
        let mut e = 0.0;
        for k in -ni..=ni {
            e += self.gf.v(self.y(h, k), self.y(h, k + 1)) - self.gf.v(self.z.get(k), self.z.get(k + 1));
        }
        e
    }

    /// Gradient components on sites -N..=N+1 (window plus the two echo sites).
    pub fn gradient_raw(&self, h: &[f64]) -> Vec<f64> {
        let ni = self.n as i64;
        (-ni..=ni + 1)
            .map(|i| {
                let (a, b, c) = (self.y(h, i - 1), self.y(h, i), self.y(h, i + 1));
                self.gf.v2(a, b) + self.gf.v1(b, c)
            })
            .collect()
    }

    /// ||grad E||^2 and its gradient with respect to the window entries.
    pub fn gradnorm_sq_raw(&self, h: &[f64], out: &mut [f64]) -> f64 {
        let ni = self.n as i64;
        let g = self.gradient_raw(h);
        // g[k] belongs to site k - N
        for (w, i) in (1 - ni..=ni).enumerate() {
            let (a, b, c) = (self.y(h, i - 1), self.y(h, i), self.y(h, i + 1));
            let k = (i + ni) as usize;
            let diag = self.gf.v22(a, b) + self.gf.v11(b, c);
            out[w] = 2.0 * (g[k - 1] * self.gf.v12(a, b) + g[k] * diag + g[k + 1] * self.gf.v12(b, c));
        }
        g.iter().map(|v| v * v).sum()
    }

    pub fn energy(&self, h: &PerturbationWindow) -> Result<f64> {
        self.check(h)?;
        Ok(self.energy_raw(&h.h))
    }

    pub fn gradient(&self, h: &PerturbationWindow) -> Result<Vec<f64>> {
        self.check(h)?;
        Ok(self.gradient_raw(&h.h))
    }

    pub fn hessian(&self, h: &PerturbationWindow) -> Result<TridiagonalOperator> {
        self.check(h)?;
        let ni = self.n as i64;
        let mut diag = Vec::with_capacity(2 * self.n);
        let mut off = Vec::with_capacity(2 * self.n - 1);
        for i in 1 - ni..=ni {
            let (a, b, c) = (self.y(&h.h, i - 1), self.y(&h.h, i), self.y(&h.h, i + 1));
            diag.push(self.gf.v22(a, b) + self.gf.v11(b, c));
            if i < ni {
                off.push(self.gf.v12(b, c));
            }
        }
        Ok(TridiagonalOperator { sub: off.clone(), diag, sup: off })
    }

    /// z + h on the window together with its echo sites, tails from z.
    fn configuration(&self, h: &[f64]) -> Configuration {
        let ni = self.n as i64;
        let values = (-ni..=ni + 1).map(|j| self.y(h, j)).collect();
        Configuration::new(-ni, values, self.z.get(-ni - 1), self.z.get(ni + 2))
    }

    /// Largest step |x_j - x_{j+1}| of z + h around the window.
    pub fn max_step(&self, h: &[f64]) -> f64 {
        let ni = self.n as i64;
        (-ni - 1..=ni + 1).fold(0.0, |m, j| m.max((self.y(h, j + 1) - self.y(h, j)).abs()))
    }

    /// Straight-segment test: E(s h) <= e + 1e-10 at 256 samples of s in [0, 1].
    pub fn segment_below(&self, h: &[f64], e: f64) -> bool {
        let mut s_h = vec![0.0; h.len()];
        (0..256).all(|i| {
            let s = i as f64 / 255.0;
            for (t, v) in s_h.iter_mut().zip(h) {
                *t = s * v;
            }
            self.energy_raw(&s_h) <= e + 1e-10
        })
    }

    /// Gradient descent on E from h; true if it reaches h = 0. E cannot
    /// increase along the descent, so the path stays below E(h).
    pub fn descends_to_zero(&self, h: &[f64], e: f64) -> bool {
        if self.energy_raw(h) > e + 1e-10 {
            return false;
        }
        let ni = self.n as i64;
        let c = self.configuration(h);
        match relax_pinned(self.gf, &c, &[-ni, ni + 1], 1e-11) {
            Ok(r) => (1 - ni..=ni).all(|j| (r.get(j) - self.z.get(j)).abs() <= 1e-8),
            Err(_) => false,
        }
    }
}

pub fn energy_e(gf: &GeneratingFunction, pair: &HomoclinicPair, h: &PerturbationWindow) -> Result<f64> {
    Landscape::new(gf, pair, h.n)?.energy(h)
}

pub fn grad_e(gf: &GeneratingFunction, pair: &HomoclinicPair, h: &PerturbationWindow) -> Result<Vec<f64>> {
    Landscape::new(gf, pair, h.n)?.gradient(h)
}

pub fn hessian(gf: &GeneratingFunction, pair: &HomoclinicPair, h: &PerturbationWindow) -> Result<TridiagonalOperator> {
    Landscape::new(gf, pair, h.n)?.hessian(h)
}

/// Smallest singular value of the second variation at h = 0 on the window
/// of half-width n, by bisection on the inertia of the shifted operator.
pub fn delta2(gf: &GeneratingFunction, pair: &HomoclinicPair, n: usize) -> Result<f64> {
    let a = hessian(gf, pair, &PerturbationWindow::zeros(n))?;
    Ok(smallest_singular_value(&a.diag, &a.sup))
}

pub fn smallest_singular_value(diag: &[f64], off: &[f64]) -> f64 {
    let m = diag.len();
    let neg = count_below(diag, off, 0.0);
    let tol = 1e-14;
    let s = if neg == 0 {
        tridiagonal_eigenvalue(diag, off, 0, tol).abs()
    } else if neg == m {
        tridiagonal_eigenvalue(diag, off, m - 1, tol).abs()
    } else {
        tridiagonal_eigenvalue(diag, off, neg - 1, tol).abs().min(tridiagonal_eigenvalue(diag, off, neg, tol).abs())
    };
    if s < 1e-12 {
        0.0
    } else {
        s
    }
}

pub fn in_box(h: &PerturbationWindow, u: &BoxBound) -> bool {
    h.h.len() == u.u.len() && h.h.iter().zip(&u.u).all(|(h, u)| h.abs() <= *u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Connectivity {
    #[default]
    Segment,
    /// Segment test, falling back to gradient descent towards 0.
    SegmentThenDescent,
}

pub fn connected_to_zero(gf: &GeneratingFunction, pair: &HomoclinicPair, h: &PerturbationWindow, e: f64) -> bool {
    connected_to_zero_with(gf, pair, h, e, Connectivity::Segment)
}

pub fn connected_to_zero_with(gf: &GeneratingFunction, pair: &HomoclinicPair, h: &PerturbationWindow, e: f64, mode: Connectivity) -> bool {
    let Ok(land) = Landscape::new(gf, pair, h.n) else { return false };
    connected(&land, &h.h, e, mode)
}

fn connected(land: &Landscape, h: &[f64], e: f64, mode: Connectivity) -> bool {
    land.segment_below(h, e) || (mode == Connectivity::SegmentThenDescent && land.descends_to_zero(h, e))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Delta1Options {
    pub e_grid: usize,
    pub n_starts: usize,
    /// Projected-gradient tolerance of the inner solver, relative to the
    /// objective scale.
    pub tol: f64,
    pub connectivity: Connectivity,
    pub seed: u64,
    /// Half-width of the perturbation window.
    pub window: usize,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for Delta1Options {
    fn default() -> Self {
        Delta1Options {
            e_grid: 33,
            n_starts: 4,
            tol: 1e-8,
            connectivity: Connectivity::Segment,
            seed: 0,
            window: 16,
            max_outer: 40,
            max_inner: 4000,
        }
    }
}

/// Best values found on one level set: over Ñ(e) and over N(e).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelOutcome {
    pub e: f64,
    pub any: Option<(f64, PerturbationWindow)>,
    pub connected: Option<(f64, PerturbationWindow)>,
}

fn better(a: &(f64, PerturbationWindow), b: &(f64, PerturbationWindow)) -> bool {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => a.1.h.iter().zip(&b.1.h).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y),
    }
}

fn keep_best(slot: &mut Option<(f64, PerturbationWindow)>, cand: &(f64, PerturbationWindow)) {
    if slot.as_ref().is_none_or(|b| better(cand, b)) {
        *slot = Some(cand.clone());
    }
}

/// First s in (0, 1] along s -> s d where E reaches e, by a scan followed
/// by bisection.
fn first_crossing(land: &Landscape, d: &[f64], e: f64) -> Option<f64> {
    let at = |s: f64| land.energy_raw(&d.iter().map(|v| s * v).collect::<Vec<_>>()) - e;
    let samples = 512;
    let mut prev = 0.0;
    for i in 1..=samples {
        let s = i as f64 / samples as f64;
        if at(s) >= 0.0 {
            return bisect(at, prev, s, 1e-15);
        }
        prev = s;
    }
    None
}

/// Moves h onto {E = e} along the box-projected E-gradient direction.
fn retract(land: &Landscape, h: &[f64], e: f64, lo: &[f64], hi: &[f64]) -> Option<Vec<f64>> {
    let g = land.gradient_raw(h);
    let dir: Vec<f64> = g[1..g.len() - 1].to_vec();
    let gg: f64 = dir.iter().map(|v| v * v).sum();
    let moved = |t: f64| {
        let mut y: Vec<f64> = h.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
        project(&mut y, lo, hi);
        y
    };
    let phi = |t: f64| land.energy_raw(&moved(t)) - e;
    let p0 = phi(0.0);
    if p0.abs() <= 1e-13 * (1.0 + e) {
        return Some(h.to_vec());
    }
    if gg == 0.0 {
        return None;
    }
    let mut t = -p0 / gg;
    let mut a: f64 = 0.0;
    for _ in 0..60 {
        if phi(t).signum() != p0.signum() {
            let root = bisect(phi, a.min(t), a.max(t), 0.0)?;
            let y = moved(root);
            return ((land.energy_raw(&y) - e).abs() <= 1e-10).then_some(y);
        }
        a = t;
        t *= 2.0;
    }
    None
}

struct LevelProblem<'a> {
    land: &'a Landscape<'a>,
    e: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
    opts: Delta1Options,
    step_bound: f64,
}

impl LevelProblem<'_> {
    fn candidate(&self, h: &[f64]) -> Option<(f64, PerturbationWindow, bool)> {
        let y = retract(self.land, h, self.e, &self.lo, &self.hi)?;
        if self.land.max_step(&y) > self.step_bound {
            return None;
        }
        let mut scratch = vec![0.0; y.len()];
        let f = self.land.gradnorm_sq_raw(&y, &mut scratch);
        let ok = connected(self.land, &y, self.e, self.opts.connectivity);
        Some((f, PerturbationWindow { n: self.land.n, h: y }, ok))
    }

    /// Augmented Lagrangian on ||grad E||^2 subject to E = e and the box.
    /// Every outer iterate is retracted onto the level set and offered as
    /// a candidate.
    fn solve(&self, start: &[f64], out: &mut Vec<(f64, PerturbationWindow, bool)>) {
        let land = self.land;
        let n = start.len();
        let mut h = start.to_vec();
        project(&mut h, &self.lo, &self.hi);
        if let Some(c) = self.candidate(&h) {
            out.push(c);
        }
        let mut scratch = vec![0.0; n];
        let f_scale = land.gradnorm_sq_raw(&h, &mut scratch).max(1e-8);
        let e_scale = self.e.max(1e-8);
        let mut mu = 0.0;
        let mut rho = 10.0;
        let mut prev_c = f64::INFINITY;
        let mut prev_f = f64::INFINITY;
        for _ in 0..self.opts.max_outer {
            let r = spg(
                |x, grad| {
                    let f = land.gradnorm_sq_raw(x, grad) / f_scale;
                    let c = (land.energy_raw(x) - self.e) / e_scale;
                    let g = land.gradient_raw(x);
                    let w = (rho * c - mu) / e_scale;
                    for i in 0..grad.len() {
                        grad[i] = grad[i] / f_scale + w * g[i + 1];
                    }
                    f - mu * c + 0.5 * rho * c * c
                },
                &h,
                &self.lo,
                &self.hi,
                SpgOptions { max_iter: self.opts.max_inner, tol: self.opts.tol, memory: 10 },
            );
            h = r.x;
            if let Some(c) = self.candidate(&h) {
                out.push(c);
            }
            let c = (land.energy_raw(&h) - self.e) / e_scale;
            mu -= rho * c;
            let violation = c.abs() * e_scale;
            let settled = (r.f - prev_f).abs() <= 1e-12 * r.f.abs().max(1e-12);
            if violation <= 1e-12 && (r.pg_norm <= self.opts.tol || settled) {
                break;
            }
            prev_f = r.f;
            if violation > 1e-8 && c.abs() > 0.25 * prev_c {
                rho *= 2.0;
            }
            prev_c = c.abs();
        }
    }
}

/// Minimizes ||grad E||^2 over {E = e} inside the box, from the two
/// saddle directions and `n_starts` random perturbations of them.
pub fn level_search(gf: &GeneratingFunction, pair: &HomoclinicPair, e: f64, u: &BoxBound, opts: &Delta1Options, stream: u64) -> Result<LevelOutcome> {
    let n = u.n;
    let land = Landscape::new(gf, pair, n)?;
    if e <= 0.0 {
        let zero = (0.0, PerturbationWindow::zeros(n));
        return Ok(LevelOutcome { e, any: Some(zero.clone()), connected: Some(zero) });
    }
    let first = 1 - n as i64;
    let dirs: Vec<Vec<f64>> = vec![
        (0..2 * n).map(|i| pair.z_tilde.get(first + i as i64) - pair.z.get(first + i as i64)).collect(),
        (0..2 * n).map(|i| pair.z_tilde.get(first + i as i64 + 1) - pair.z.get(first + i as i64)).collect(),
    ];
    let prob = LevelProblem {
        land: &land,
        e,
        lo: u.u.iter().map(|v| -v).collect(),
        hi: u.u.clone(),
        opts: *opts,
        step_bound: 2.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(stream);
    let mut starts = Vec::new();
    for d in &dirs {
        if let Some(s) = first_crossing(&land, d, e) {
            starts.push(d.iter().map(|v| s * v).collect::<Vec<f64>>());
        }
    }
    let base = starts.clone();
    for r in 0..opts.n_starts {
        let Some(b) = base.get(r % base.len().max(1)) else { break };
        let amp = 0.1 + 0.4 * rng.gen::<f64>();
        let mut s: Vec<f64> = b.iter().zip(&u.u).map(|(v, u)| v + amp * rng.gen_range(-1.0..1.0) * v.abs().min(*u)).collect();
        project(&mut s, &prob.lo, &prob.hi);
        starts.push(s);
    }
    let mut cands = Vec::new();
    for s in &starts {
        prob.solve(s, &mut cands);
    }
    let mut any = None;
    let mut conn = None;
    for (f, h, ok) in &cands {
        let c = (*f, h.clone());
        keep_best(&mut any, &c);
        if *ok {
            keep_best(&mut conn, &c);
        }
    }
    if any.is_none() {
        return Err(Error::Infeasible { level: e });
    }
    Ok(LevelOutcome { e, any, connected: conn })
}

pub fn min_gradnorm_on_level(
    gf: &GeneratingFunction,
    pair: &HomoclinicPair,
    e: f64,
    u: &BoxBound,
    opts: &Delta1Options,
) -> Result<(f64, PerturbationWindow)> {
    level_search(gf, pair, e, u, opts, 0)?.connected.ok_or(Error::Infeasible { level: e })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Delta1Result {
    pub delta1: f64,
    pub e_star: f64,
    pub delta1_tilde: f64,
    pub h_star: PerturbationWindow,
    pub levels: Vec<LevelRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelRecord {
    pub e: f64,
    pub inf_connected: Option<f64>,
    pub inf_any: f64,
}

/// Sup over a uniform grid of levels in [0, delta0/2] of the constrained
/// infimum, for both the connected and the unrestricted level sets.
pub fn delta1_both(gf: &GeneratingFunction, pair: &HomoclinicPair, fp: &FixedPointData, opts: &Delta1Options) -> Result<Delta1Result> {
    let _ = fp;
    let u = BoxBound::new(pair.kappa1, pair.lambda, opts.window);
    let m = opts.e_grid.max(2);
    let levels: Vec<f64> = (0..m).map(|i| 0.5 * pair.delta0 * i as f64 / (m - 1) as f64).collect();
    let outcomes: Vec<LevelOutcome> = levels
        .par_iter()
        .enumerate()
        .map(|(i, &e)| level_search(gf, pair, e, &u, opts, i as u64))
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, f64, PerturbationWindow)> = None;
    let mut tilde: f64 = 0.0;
    let mut records = Vec::new();
    for o in &outcomes {
        let any = o.any.as_ref().map(|a| a.0).unwrap_or(f64::NAN);
        let conn = o.connected.as_ref().map(|c| c.0);
        records.push(LevelRecord { e: o.e, inf_connected: conn, inf_any: any });
        tilde = tilde.max(any);
        if let Some((v, h)) = &o.connected {
            if best.as_ref().is_none_or(|b| *v > b.0) {
                best = Some((*v, o.e, h.clone()));
            }
        }
    }
    let (delta1, e_star, h_star) = best.ok_or(Error::Infeasible { level: pair.delta0 / 2.0 })?;
    Ok(Delta1Result { delta1, e_star, delta1_tilde: tilde, h_star, levels: records })
}

pub fn delta1(gf: &GeneratingFunction, pair: &HomoclinicPair, fp: &FixedPointData, opts: &Delta1Options) -> Result<Delta1Result> {
    delta1_both(gf, pair, fp, opts)
}

pub fn delta1_tilde(gf: &GeneratingFunction, pair: &HomoclinicPair, fp: &FixedPointData, opts: &Delta1Options) -> Result<f64> {
    delta1_both(gf, pair, fp, opts).map(|r| r.delta1_tilde)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilityReport {
    pub delta0: f64,
    pub delta1: f64,
    pub e_star: f64,
    pub delta1_tilde: Option<f64>,
    pub delta2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub lambda: f64,
    #[serde(rename = "N_min")]
    pub n_min: usize,
    pub entropy_bound: f64,
    /// delta1 / delta0^2, reported only.
    pub ratio_conjecture: f64,
    /// delta0 / delta2^3 and delta1 / delta2^4, reported only.
    pub ratio_delta0_delta2_cubed: f64,
    pub ratio_delta1_delta2_fourth: f64,
}

/// Standard random perturbation inside the box and inside the step class.
pub fn random_feasible(rng: &mut impl Rng, u: &BoxBound, cap: f64) -> PerturbationWindow {
    PerturbationWindow { n: u.n, h: u.u.iter().map(|u| rng.gen_range(-1.0..=1.0) * u.min(cap)).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_indexing() {
        let mut h = PerturbationWindow::zeros(3);
        h.h[0] = 1.0;
        h.h[5] = 2.0;
        assert_eq!((h.first(), h.last()), (-2, 3));
        assert_eq!(h.get(-2), 1.0);
        assert_eq!(h.get(3), 2.0);
        assert_eq!(h.get(4), 0.0);
    }

    #[test]
    fn box_membership() {
        let u = BoxBound::new(1.0, 2.0, 2);
        assert_eq!(u.u, vec![1.0, 2.0, 1.0, 0.5]);
        let h = PerturbationWindow { n: 2, h: u.u.clone() };
        assert!(in_box(&PerturbationWindow::zeros(2), &u));
        assert!(in_box(&h, &u));
        let mut h2 = h.clone();
        h2.h[1] += 1e-9;
        assert!(!in_box(&h2, &u));
    }

    #[test]
    fn singular_value_of_indefinite_matrix() {
        // diag(-3, 0.5, 2) with no coupling
        assert!((smallest_singular_value(&[-3.0, 0.5, 2.0], &[0.0, 0.0]) - 0.5).abs() < 1e-13);
        assert!((smallest_singular_value(&[-3.0, -0.25, -2.0], &[0.0, 0.0]) - 0.25).abs() < 1e-13);
        assert_eq!(smallest_singular_value(&[1.0, 1.0], &[1.0]), 0.0);
    }
}
