//! Generating functions, the induced twist map on the lifted cylinder, and
//! the correspondence between configurations and phase points.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bisect, golden_section_min, newton_bracketed};

pub type Scalar2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Standard,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partial {
    V,
    V1,
    V2,
    V11,
    V12,
    V22,
}

/// User supplied generating function with analytic derivatives.
#[derive(Clone)]
pub struct CustomMap {
    pub name: String,
    pub v: Scalar2,
    pub v1: Scalar2,
    pub v2: Scalar2,
    pub v11: Scalar2,
    pub v12: Scalar2,
    pub v22: Scalar2,
    /// Bracket half-width added to |p| when solving for x'.
    pub search_radius: f64,
}

/// V(x, x') together with its first and second partials.
#[derive(Clone)]
pub struct GeneratingFunction {
    kind: MapKind,
    k: f64,
    custom: Option<Arc<CustomMap>>,
}

impl fmt::Debug for GeneratingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.custom {
            Some(c) => write!(f, "GeneratingFunction::Custom({})", c.name),
            None => write!(f, "GeneratingFunction::Standard(k = {})", self.k),
        }
    }
}

const TAU: f64 = 2.0 * PI;

impl GeneratingFunction {
    /// V(x, x') = (x' - x)^2 / 2 - k cos(2 pi x) / (2 pi)
    pub fn standard(k: f64) -> Self {
        GeneratingFunction { kind: MapKind::Standard, k, custom: None }
    }

    pub fn custom(map: CustomMap) -> Self {
        GeneratingFunction { kind: MapKind::Custom, k: 0.0, custom: Some(Arc::new(map)) }
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    /// Coupling of the standard family; 0 for custom maps.
    pub fn k(&self) -> f64 {
        self.k
    }

    #[inline]
    pub fn v(&self, x: f64, y: f64) -> f64 {
        match &self.custom {
            None => 0.5 * (y - x) * (y - x) - self.k * (TAU * x).cos() / TAU,
            Some(c) => (c.v)(x, y),
        }
    }

    #[inline]
    pub fn v1(&self, x: f64, y: f64) -> f64 {
        match &self.custom {
            None => -(y - x) + self.k * (TAU * x).sin(),
            Some(c) => (c.v1)(x, y),
        }
    }

    #[inline]
    pub fn v2(&self, x: f64, y: f64) -> f64 {
        match &self.custom {
            None => y - x,
            Some(c) => (c.v2)(x, y),
        }
    }

    #[inline]
    pub fn v11(&self, x: f64, y: f64) -> f64 {
        match &self.custom {
            None => 1.0 + TAU * self.k * (TAU * x).cos(),
            Some(c) => (c.v11)(x, y),
        }
    }

    #[inline]
    pub fn v12(&self, x: f64, y: f64) -> f64 {
        match &self.custom {
            None => -1.0,
            Some(c) => (c.v12)(x, y),
        }
    }

    #[inline]
    pub fn v22(&self, x: f64, y: f64) -> f64 {
        match &self.custom {
            None => 1.0,
            Some(c) => (c.v22)(x, y),
        }
    }

    pub fn search_radius(&self, p: f64) -> f64 {
        match &self.custom {
            None => p.abs() + self.k.abs() + 2.0,
            Some(c) => p.abs() + c.search_radius,
        }
    }

    /// Samples the periodicity, twist and derivative-consistency conditions
    /// on a deterministic grid with |x - x'| <= 2.
    pub fn check_assumptions(&self, samples: usize) -> AssumptionReport {
        let mut periodicity_error: f64 = 0.0;
        let mut max_v12 = f64::NEG_INFINITY;
        let mut derivative_error: f64 = 0.0;
        let h = 1e-6;
        for i in 0..samples {
            let x = i as f64 / samples as f64;
            for j in 0..samples {
                let d = -2.0 + 4.0 * j as f64 / (samples - 1).max(1) as f64;
                let y = x + d;
                periodicity_error = periodicity_error.max((self.v(x + 1.0, y + 1.0) - self.v(x, y)).abs());
                max_v12 = max_v12.max(self.v12(x, y));
                let fd1 = (self.v(x + h, y) - self.v(x - h, y)) / (2.0 * h);
                let fd2 = (self.v(x, y + h) - self.v(x, y - h)) / (2.0 * h);
                let e1 = (fd1 - self.v1(x, y)).abs() / self.v1(x, y).abs().max(1.0);
                let e2 = (fd2 - self.v2(x, y)).abs() / self.v2(x, y).abs().max(1.0);
                derivative_error = derivative_error.max(e1).max(e2);
            }
        }
        AssumptionReport { periodicity_error, max_v12, derivative_error }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AssumptionReport {
    pub periodicity_error: f64,
    /// sup of V12 over the samples; the twist condition needs this negative.
    pub max_v12: f64,
    pub derivative_error: f64,
}

pub fn eval_generating(gf: &GeneratingFunction, x: f64, xp: f64, which: Partial) -> f64 {
    match which {
        Partial::V => gf.v(x, xp),
        Partial::V1 => gf.v1(x, xp),
        Partial::V2 => gf.v2(x, xp),
        Partial::V11 => gf.v11(x, xp),
        Partial::V12 => gf.v12(x, xp),
        Partial::V22 => gf.v22(x, xp),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: f64,
    pub p: f64,
}

impl PhasePoint {
    pub fn new(x: f64, p: f64) -> Self {
        PhasePoint { x, p }
    }
}

/// Finite window x_lo..=x_hi of a bi-infinite configuration, constant
/// `tail_left` below the window and `tail_right` above it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub lo: i64,
    pub values: Vec<f64>,
    pub tail_left: f64,
    pub tail_right: f64,
}

impl Configuration {
    pub fn new(lo: i64, values: Vec<f64>, tail_left: f64, tail_right: f64) -> Self {
        assert!(!values.is_empty(), "configuration window must be nonempty");
        Configuration { lo, values, tail_left, tail_right }
    }

    pub fn constant(lo: i64, hi: i64, c: f64) -> Self {
        Configuration::new(lo, vec![c; (hi - lo + 1) as usize], c, c)
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, i: i64) -> bool {
        i >= self.lo && i <= self.hi()
    }

    /// x_i, using the tails outside the window.
    #[inline]
    pub fn get(&self, i: i64) -> f64 {
        if i < self.lo {
            self.tail_left
        } else if i > self.hi() {
            self.tail_right
        } else {
            self.values[(i - self.lo) as usize]
        }
    }

    pub fn try_get(&self, i: i64) -> Result<f64> {
        if self.contains(i) {
            Ok(self.get(i))
        } else {
            Err(Error::IndexOutOfWindow { index: i, lo: self.lo, hi: self.hi() })
        }
    }

    pub fn set(&mut self, i: i64, v: f64) {
        let lo = self.lo;
        self.values[(i - lo) as usize] = v;
    }

    /// The configuration y with y_j = x_{j+n}.
    pub fn shifted(&self, n: i64) -> Configuration {
        Configuration { lo: self.lo - n, ..self.clone() }
    }

    /// Adds a constant to every value and to both tails.
    pub fn translated(&self, c: f64) -> Configuration {
        Configuration {
            lo: self.lo,
            values: self.values.iter().map(|v| v + c).collect(),
            tail_left: self.tail_left + c,
            tail_right: self.tail_right + c,
        }
    }

    /// sup |x_j - x_{j+1}| over the window and the two boundary bonds.
    pub fn max_step(&self) -> f64 {
        let mut m = (self.values[0] - self.tail_left).abs();
        for w in self.values.windows(2) {
            m = m.max((w[1] - w[0]).abs());
        }
        m.max((self.tail_right - self.values[self.len() - 1]).abs())
    }

    pub fn in_step_class(&self, k: f64) -> bool {
        self.max_step() <= k
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite()) && self.tail_left.is_finite() && self.tail_right.is_finite()
    }
}

/// Gradient of the formal action at every window site:
/// V2(x_{i-1}, x_i) + V1(x_i, x_{i+1}), tails included.
pub fn action_gradient(gf: &GeneratingFunction, c: &Configuration) -> Vec<f64> {
    let n = c.len();
    let mut g = Vec::with_capacity(n);
    let mut prev = c.tail_left;
    for i in 0..n {
        let x = c.values[i];
        let next = if i + 1 < n { c.values[i + 1] } else { c.tail_right };
        g.push(gf.v2(prev, x) + gf.v1(x, next));
        prev = x;
    }
    g
}

/// Sum of V over every bond touching the window, tails included.
pub fn window_action(gf: &GeneratingFunction, c: &Configuration) -> f64 {
    let mut s = gf.v(c.tail_left, c.values[0]);
    for w in c.values.windows(2) {
        s += gf.v(w[0], w[1]);
    }
    s + gf.v(c.values[c.len() - 1], c.tail_right)
}

/// Equilibrium residual: the largest gradient component over the window.
pub fn residual(gf: &GeneratingFunction, c: &Configuration) -> f64 {
    action_gradient(gf, c).iter().fold(0.0, |m, g| m.max(g.abs()))
}

/// Solves p = -V1(x, x') for x' and returns (x', V2(x, x')).
pub fn map_forward(gf: &GeneratingFunction, pt: PhasePoint) -> Result<PhasePoint> {
    let n = pt.x.floor();
    let x = pt.x - n;
    let p = pt.p;
    let r = gf.search_radius(p);
    // f is increasing in x' because V12 < 0
    let f = |y: f64| (-gf.v1(x, y) - p, -gf.v12(x, y));
    let (a, b) = (x - r, x + r);
    if !(f(a).0 < 0.0 && f(b).0 > 0.0) {
        return Err(Error::NoBracket { radius: r });
    }
    let y = newton_bracketed(f, a, b);
    Ok(PhasePoint { x: y + n, p: gf.v2(x, y) })
}

/// Solves p' = V2(x, x') for x and returns (x, -V1(x, x')).
pub fn map_inverse(gf: &GeneratingFunction, pt: PhasePoint) -> Result<PhasePoint> {
    let n = pt.x.floor();
    let y = pt.x - n;
    let q = pt.p;
    let r = gf.search_radius(q);
    let f = |x: f64| (q - gf.v2(x, y), -gf.v12(x, y));
    let (a, b) = (y - r, y + r);
    if !(f(a).0 < 0.0 && f(b).0 > 0.0) {
        return Err(Error::NoBracket { radius: r });
    }
    let x = newton_bracketed(f, a, b);
    Ok(PhasePoint { x: x + n, p: -gf.v1(x, y) })
}

pub fn point_from_config(gf: &GeneratingFunction, c: &Configuration) -> Result<PhasePoint> {
    let x0 = c.try_get(0)?;
    let x1 = c.try_get(1)?;
    Ok(PhasePoint { x: x0, p: -gf.v1(x0, x1) })
}

/// Orbit of `pt` as a configuration on [lo, hi]; the tails hold the next
/// orbit points beyond each end.
pub fn config_from_point(gf: &GeneratingFunction, pt: PhasePoint, lo: i64, hi: i64) -> Result<Configuration> {
    if !(lo <= 0 && 0 < hi) {
        return Err(Error::WindowMismatch(format!("need lo <= 0 < hi, got [{lo}, {hi}]")));
    }
    let mut fwd = vec![pt.x];
    let mut q = pt;
    for _ in 0..=hi {
        q = map_forward(gf, q)?;
        fwd.push(q.x);
    }
    let mut back = Vec::new();
    let mut q = pt;
    for _ in 0..=(-lo) {
        q = map_inverse(gf, q)?;
        back.push(q.x);
    }
    let tail_left = back[(-lo) as usize];
    let tail_right = fwd[(hi + 1) as usize];
    let mut values: Vec<f64> = back[..(-lo) as usize].iter().rev().copied().collect();
    values.extend_from_slice(&fwd[..=(hi as usize)]);
    Ok(Configuration::new(lo, values, tail_left, tail_right))
}

/// Fixed point and hyperbolicity data. `lambda` and `kappa1` are filled in
/// once they have been computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointData {
    pub y0: f64,
    pub p0: f64,
    pub lambda: Option<f64>,
    pub kappa1: Option<f64>,
}

pub const FIXED_POINT_GRID: usize = 1024;

/// Global minimum of x -> V(x, x) on [0, 1) without the uniqueness check.
/// Returns the refined minimizer and any rival grid minimum.
pub fn locate_minimum(gf: &GeneratingFunction, grid: usize) -> (f64, Option<f64>) {
    let w = |x: f64| gf.v(x, x);
    let vals: Vec<f64> = (0..grid).map(|i| w(i as f64 / grid as f64)).collect();
    let at = |i: isize| vals[i.rem_euclid(grid as isize) as usize];
    let minima: Vec<usize> = (0..grid)
        .filter(|&i| {
            let i = i as isize;
            at(i) <= at(i - 1) && at(i) <= at(i + 1)
        })
        .collect();
    let best = *minima
        .iter()
        .min_by(|&&a, &&b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)))
        .expect("a periodic sample always has a minimum");
    let rival = minima.iter().copied().find(|&j| {
        let d = (j as isize - best as isize).rem_euclid(grid as isize);
        let cyc = d.min(grid as isize - d);
        cyc >= 2 && (vals[j] - vals[best]).abs() <= 1e-9
    });

    let h = 1.0 / grid as f64;
    let xb = best as f64 * h;
    let (xg, _) = golden_section_min(w, xb - h, xb + h, 1e-9);
    // the golden-section search stalls near sqrt(eps); finish on the derivative
    let dw = |x: f64| gf.v1(x, x) + gf.v2(x, x);
    let mut y0 = xg;
    for width in [1e-8, 1e-6, h] {
        if let Some(r) = bisect(dw, xg - width, xg + width, 1e-15) {
            y0 = r;
            break;
        }
    }
    y0 -= y0.floor();
    if y0 >= 1.0 {
        y0 -= 1.0;
    }
    (y0, rival.map(|j| j as f64 * h))
}

pub fn find_minimizing_fixed_point(gf: &GeneratingFunction) -> Result<FixedPointData> {
    find_minimizing_fixed_point_with(gf, FIXED_POINT_GRID)
}

pub fn find_minimizing_fixed_point_with(gf: &GeneratingFunction, grid: usize) -> Result<FixedPointData> {
    let (y0, rival) = locate_minimum(gf, grid);
    if let Some(second) = rival {
        return Err(Error::NonUniqueMinimum { first: y0, second });
    }
    Ok(FixedPointData { y0, p0: -gf.v1(y0, y0), lambda: None, kappa1: None })
}

/// Trace of the Jacobian of the map at (y0, p0).
pub fn fixed_point_trace(gf: &GeneratingFunction, y0: f64) -> f64 {
    -(gf.v11(y0, y0) + gf.v22(y0, y0)) / gf.v12(y0, y0)
}

/// Expanding eigenvalue at the fixed point.
pub fn linearize_eigen(gf: &GeneratingFunction, fp: &FixedPointData) -> Result<f64> {
    let t = fixed_point_trace(gf, fp.y0);
    if t.abs() <= 2.0 + 1e-9 {
        return Err(Error::NotHyperbolic { trace: t });
    }
    let a = t.abs();
    Ok(0.5 * (a + (a * a - 4.0).sqrt()))
}

/// Least-squares slope of k -> x_k over the window.
pub fn rotation_number(c: &Configuration) -> f64 {
    let n = c.len() as f64;
    let mean_k = c.lo as f64 + (n - 1.0) / 2.0;
    let mean_x = c.values.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, x) in c.values.iter().enumerate() {
        let dk = (c.lo + i as i64) as f64 - mean_k;
        sxy += dk * (x - mean_x);
        sxx += dk * dk;
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}
