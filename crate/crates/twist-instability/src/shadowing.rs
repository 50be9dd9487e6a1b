//! Shadowing orbits for binary words: gluing of fixed-point and homoclinic
//! blocks, the order-sandwich and energy-ceiling sets, relaxation under the
//! gradient flow, itineraries, the choice of N and the entropy bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aubry::{newton_polish, with_energy_window, HomoclinicPair, TAIL_NOISE_FLOOR};
use crate::error::{Error, Result};
use crate::gradflow::{integrate_with, FlowOptions};
use crate::instability::{Connectivity, Delta1Result, InstabilityReport, Landscape};
use crate::twistmap::{map_forward, point_from_config, residual, Configuration, FixedPointData, GeneratingFunction, PhasePoint};

/// One period of a periodic binary word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolSequence {
    pub word: Vec<u8>,
    pub period: usize,
    /// Positions of the ones over one period, starting with the last one
    /// at or before 0.
    pub ones_positions: Vec<i64>,
}

impl SymbolSequence {
    pub fn new(word: Vec<u8>) -> Result<Self> {
        if word.is_empty() {
            return Err(Error::Validation("empty word".into()));
        }
        if let Some(b) = word.iter().find(|&&b| b > 1) {
            return Err(Error::Validation(format!("symbol {b} is not binary")));
        }
        let p = word.len() as i64;
        let mut ones: Vec<i64> = (0..p).filter(|&i| word[i as usize] == 1).collect();
        if let (Some(&first), Some(&last)) = (ones.first(), ones.last()) {
            if first != 0 {
                ones.pop();
                ones.insert(0, last - p);
            }
        }
        Ok(SymbolSequence { period: word.len(), word, ones_positions: ones })
    }

    pub fn symbol(&self, m: i64) -> u8 {
        self.word[m.rem_euclid(self.period as i64) as usize]
    }

    pub fn ones_per_period(&self) -> usize {
        self.ones_positions.len()
    }

    pub fn density(&self) -> f64 {
        self.ones_per_period() as f64 / self.period as f64
    }

    /// Number of ones in blocks [0, m), negative for m < 0.
    pub fn count_before(&self, m: i64) -> i64 {
        let p = self.period as i64;
        let full = m.div_euclid(p) * self.ones_per_period() as i64;
        full + self.word[..m.rem_euclid(p) as usize].iter().filter(|&&b| b == 1).count() as i64
    }
}

/// Glued configuration, its envelopes and the window bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShadowSets {
    pub x_omega: Configuration,
    pub x_minus: Configuration,
    pub x_plus: Configuration,
    #[serde(rename = "N")]
    pub n: usize,
    pub e0: f64,
    pub omega: SymbolSequence,
    pub n_periods: usize,
    pub first_block: i64,
    pub last_block: i64,
}

impl ShadowSets {
    /// Blocks carrying a one inside the window, with their integer offsets.
    pub fn ones_in_window(&self) -> Vec<(i64, i64)> {
        (self.first_block..=self.last_block)
            .filter(|&m| self.omega.symbol(m) == 1)
            .map(|m| (m, self.omega.count_before(m)))
            .collect()
    }

    /// First and last site of the middle period.
    pub fn middle_sites(&self) -> (i64, i64) {
        let n = self.n as i64;
        let p = self.omega.period as i64;
        (1 - n, 2 * (p - 1) * n + n)
    }
}

/// Smallest positive integer N >= (ln(4 k1 k2) - ln d1) / ln lambda.
pub fn choose_n_from(kappa1: f64, kappa2: f64, delta1: f64, lambda: f64) -> Result<usize> {
    if !(delta1 > 0.0) || !(lambda > 1.0) {
        return Err(Error::DegenerateInputs(format!("need delta1 > 0 and lambda > 1, got {delta1}, {lambda}")));
    }
    let bound = ((4.0 * kappa1 * kappa2).ln() - delta1.ln()) / lambda.ln();
    if !bound.is_finite() {
        return Err(Error::DegenerateInputs(format!("N bound is {bound}")));
    }
    Ok((bound.ceil().max(1.0)) as usize)
}

pub fn choose_n(report: &InstabilityReport) -> Result<usize> {
    choose_n_from(report.kappa1, report.kappa2, report.delta1, report.lambda)
}

pub fn entropy_lower_bound(n: usize) -> f64 {
    std::f64::consts::LN_2 / (2 * n) as f64
}

/// Assembles the report from the computed pieces; N comes from `choose_n_from`.
pub fn instability_report(pair: &HomoclinicPair, d1: &Delta1Result, delta2: f64, kappa2: f64) -> Result<InstabilityReport> {
    let n = choose_n_from(pair.kappa1, kappa2, d1.delta1, pair.lambda)?;
    Ok(InstabilityReport {
        delta0: pair.delta0,
        delta1: d1.delta1,
        e_star: d1.e_star,
        delta1_tilde: Some(d1.delta1_tilde),
        delta2,
        kappa1: pair.kappa1,
        kappa2,
        lambda: pair.lambda,
        n_min: n,
        entropy_bound: entropy_lower_bound(n),
        ratio_conjecture: d1.delta1 / (pair.delta0 * pair.delta0),
        ratio_delta0_delta2_cubed: pair.delta0 / delta2.powi(3),
        ratio_delta1_delta2_fourth: d1.delta1 / delta2.powi(4),
    })
}

/// A one at block `block` whose homoclinic runs from y0 + offset to y0 + offset + 1.
#[derive(Debug, Clone, Copy)]
struct One {
    block: i64,
    offset: i64,
}

struct Gluer<'a> {
    pair: &'a HomoclinicPair,
    omega: &'a SymbolSequence,
    n: i64,
    /// Stand-in ones for the all-zero word, one on each side of the window.
    virtual_ones: Option<(One, One)>,
}

impl Gluer<'_> {
    fn block_of(&self, i: i64) -> i64 {
        (i + self.n - 1).div_euclid(2 * self.n)
    }

    fn omega(&self, i: i64) -> f64 {
        let m = self.block_of(i);
        let c = self.omega.count_before(m) as f64;
        if self.omega.symbol(m) == 1 {
            self.pair.z.get(i - 2 * m * self.n) + c
        } else {
            self.pair.y0() + c
        }
    }

    /// Last one with 2Nq < i.
    fn one_before(&self, i: i64) -> One {
        if let Some((left, _)) = self.virtual_ones {
            return left;
        }
        let mut q = (i - 1).div_euclid(2 * self.n);
        while self.omega.symbol(q) != 1 {
            q -= 1;
        }
        One { block: q, offset: self.omega.count_before(q) }
    }

    /// First one with 2Nq >= i.
    fn one_after(&self, i: i64) -> One {
        if let Some((_, right)) = self.virtual_ones {
            return right;
        }
        let mut q = (i + 2 * self.n - 1).div_euclid(2 * self.n);
        while self.omega.symbol(q) != 1 {
            q += 1;
        }
        One { block: q, offset: self.omega.count_before(q) }
    }

    fn minus(&self, i: i64) -> f64 {
        let o = self.one_before(i);
        self.pair.z_tilde.get(i - 2 * o.block * self.n) + o.offset as f64
    }

    fn plus(&self, i: i64) -> f64 {
        let o = self.one_after(i);
        self.pair.z_tilde.get(i - 2 * o.block * self.n + 1) + o.offset as f64
    }

    fn sample(&self, lo: i64, hi: i64, f: impl Fn(i64) -> f64) -> Configuration {
        Configuration::new(lo, (lo..=hi).map(&f).collect(), f(lo - 1), f(hi + 1))
    }
}

/// Builds x^omega and its envelopes over `n_periods` periods of the word.
/// The middle period holds blocks 0..P, and the tails carry the glued values
/// just outside the window.
pub fn glue(pair: &HomoclinicPair, omega: &SymbolSequence, n: usize, n_periods: usize, e0: f64) -> Result<ShadowSets> {
    if n == 0 || n_periods == 0 {
        return Err(Error::Validation("N and n_periods must be positive".into()));
    }
    let m = pair.m as i64;
    if m < n as i64 + 2 {
        return Err(Error::WindowTooSmall(format!("homoclinic window {m} < N + 2 = {}", n + 2)));
    }
    let p = omega.period as i64;
    let before = ((n_periods - 1) / 2) as i64;
    let after = n_periods as i64 - 1 - before;
    let first_block = -before * p;
    let last_block = (after + 1) * p - 1;
    let ni = n as i64;
    let virtual_ones = omega.ones_positions.is_empty().then_some((
        One { block: first_block - 1, offset: -1 },
        One { block: last_block + 1, offset: 0 },
    ));
    let g = Gluer { pair, omega, n: ni, virtual_ones };
    let lo = 2 * first_block * ni - ni + 1;
    let hi = 2 * last_block * ni + ni;
    Ok(ShadowSets {
        x_omega: g.sample(lo, hi, |i| g.omega(i)),
        x_minus: g.sample(lo, hi, |i| g.minus(i)),
        x_plus: g.sample(lo, hi, |i| g.plus(i)),
        n,
        e0,
        omega: omega.clone(),
        n_periods,
        first_block,
        last_block,
    })
}

/// Adds independent uniform noise of size `amplitude` to every window site of
/// `c`, keeping the tails.
pub fn perturb(c: &Configuration, amplitude: f64, seed: u64) -> Configuration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = c.clone();
    for v in &mut out.values {
        *v += amplitude * rng.gen_range(-1.0..=1.0);
    }
    out
}

/// Sandwich x^- <= c <= x^+ on the window (up to the tail noise floor) and
/// c in the step class X_1.
pub fn in_a(c: &Configuration, sets: &ShadowSets) -> bool {
    if c.lo != sets.x_omega.lo || c.len() != sets.x_omega.len() {
        return false;
    }
    let sandwiched = c
        .values
        .iter()
        .zip(&sets.x_minus.values)
        .zip(&sets.x_plus.values)
        .all(|((x, lo), hi)| *lo - TAIL_NOISE_FLOOR <= *x && *x <= *hi + TAIL_NOISE_FLOOR);
    sandwiched && c.in_step_class(1.0)
}

/// Deviation of block q from z + offset, on the sites -N+1..N.
fn block_deviation(pair: &HomoclinicPair, c: &Configuration, n: usize, q: i64, offset: i64) -> Vec<f64> {
    let ni = n as i64;
    (1 - ni..=ni).map(|j| c.get(2 * q * ni + j) - offset as f64 - pair.z.get(j)).collect()
}

/// Energy ceiling E <= e0 and connection to 0 for the deviation at every one
/// in the window.
pub fn in_b(gf: &GeneratingFunction, pair: &HomoclinicPair, c: &Configuration, sets: &ShadowSets) -> bool {
    in_b_with(gf, pair, c, sets, Connectivity::Segment)
}

pub fn in_b_with(gf: &GeneratingFunction, pair: &HomoclinicPair, c: &Configuration, sets: &ShadowSets, mode: Connectivity) -> bool {
    let Ok(land) = Landscape::new(gf, pair, sets.n) else { return false };
    sets.ones_in_window().into_iter().all(|(q, offset)| {
        let h = block_deviation(pair, c, sets.n, q, offset);
        land.energy_raw(&h) <= sets.e0 + 1e-10
            && (land.segment_below(&h, sets.e0) || (mode == Connectivity::SegmentThenDescent && land.descends_to_zero(&h, sets.e0)))
    })
}

/// Reads the symbol of each block from its center site.
pub fn itinerary(pair: &HomoclinicPair, c: &Configuration, n: usize, first_block: i64, n_blocks: usize) -> Result<SymbolSequence> {
    let (a0, b0) = pair.energy_window()?;
    let zt0 = pair.z_tilde.get(0);
    let zt1 = pair.z_tilde.get(1);
    let mut word = Vec::with_capacity(n_blocks);
    for m in first_block..first_block + n_blocks as i64 {
        let v = c.try_get(2 * m * n as i64)?;
        let w = v - (v - (zt1 - 1.0)).floor();
        let s = if (a0..=b0).contains(&w) {
            1
        } else if (zt1 - 1.0..=zt0).contains(&w) {
            0
        } else {
            return Err(Error::Unclassifiable { block: m, value: v });
        };
        word.push(s);
    }
    SymbolSequence::new(word)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShadowOptions {
    /// Overrides the N chosen from the report.
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub n_periods: usize,
    pub tol: f64,
    pub t_max: f64,
    pub flow: FlowOptions,
    pub connectivity: Connectivity,
    /// Finish the relaxed equilibrium with Newton steps before mapping it to
    /// phase space.
    pub polish: bool,
}

impl Default for ShadowOptions {
    fn default() -> Self {
        ShadowOptions {
            n: None,
            n_periods: 3,
            tol: 1e-8,
            t_max: 2000.0,
            flow: FlowOptions::default(),
            connectivity: Connectivity::Segment,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorSample {
    pub t: f64,
    pub in_a: bool,
    pub in_b: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MonitorLog {
    pub samples: Vec<MonitorSample>,
}

impl MonitorLog {
    pub fn a_violations(&self) -> usize {
        self.samples.iter().filter(|s| !s.in_a).count()
    }

    pub fn b_violations(&self) -> usize {
        self.samples.iter().filter(|s| !s.in_b).count()
    }

    pub fn all_inside(&self) -> bool {
        self.samples.iter().all(|s| s.in_a && s.in_b)
    }

    pub fn summary(&self) -> MonitorSummary {
        MonitorSummary {
            samples: self.samples.len(),
            a_violations: self.a_violations(),
            b_violations: self.b_violations(),
            first_violation: self.samples.iter().find(|s| !(s.in_a && s.in_b)).map(|s| s.t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub samples: usize,
    pub a_violations: usize,
    pub b_violations: usize,
    pub first_violation: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShadowResult {
    pub word: SymbolSequence,
    #[serde(rename = "N")]
    pub n: usize,
    pub e0: f64,
    pub equilibrium: Configuration,
    pub residual: f64,
    pub itinerary: SymbolSequence,
    /// Phase points of every site of the middle period.
    pub orbit: Vec<PhasePoint>,
    /// Phase points at the block centers of the middle period and the next block.
    pub block_points: Vec<PhasePoint>,
    pub w1_distance: f64,
    pub monitor_log: MonitorLog,
    /// Largest gap between f^{2N} of a block point and the next block point.
    pub conjugacy_error: f64,
    /// Largest deviation of x_{i+2NP} - x_i from the ones per period, over the
    /// middle period.
    pub drift_error: f64,
    pub relax_time: f64,
}

/// Distance on the cylinder between two lifted phase points.
pub fn cylinder_distance(a: PhasePoint, b: PhasePoint) -> f64 {
    let dx = a.x - b.x;
    let dx = dx - dx.round();
    dx.hypot(a.p - b.p)
}

/// W1 distance of the empirical measure on `orbit` to the Dirac mass at the
/// fixed point: the mean distance.
pub fn w1_to_fixed_point(orbit: &[PhasePoint], fp: &FixedPointData) -> f64 {
    if orbit.is_empty() {
        return 0.0;
    }
    let target = PhasePoint::new(fp.y0, fp.p0);
    orbit.iter().map(|&q| cylinder_distance(q, target)).sum::<f64>() / orbit.len() as f64
}

/// Relaxes the glued configuration of `omega` to an equilibrium, monitoring
/// membership in both sets at every sample.
pub fn shadow_orbit(
    gf: &GeneratingFunction,
    pair: &HomoclinicPair,
    fp: &FixedPointData,
    omega: &SymbolSequence,
    report: &InstabilityReport,
    opts: &ShadowOptions,
) -> Result<ShadowResult> {
    let n = match opts.n {
        Some(n) => n,
        None => choose_n(report)?,
    };
    let e0 = report.e_star;
    let windowed;
    let pair = if pair.a0.is_some() && pair.b0.is_some() {
        pair
    } else {
        windowed = with_energy_window(gf, fp, pair, e0)?;
        &windowed
    };
    let sets = glue(pair, omega, n, opts.n_periods, e0)?;
    let mut log = MonitorLog::default();
    let mut state = sets.x_omega.clone();
    let mut res = residual(gf, &state);
    let mut t_last = 0.0;
    integrate_with(gf, &sets.x_omega, opts.t_max, &opts.flow, |t, c| {
        log.samples.push(MonitorSample { t, in_a: in_a(c, &sets), in_b: in_b_with(gf, pair, c, &sets, opts.connectivity) });
        res = residual(gf, c);
        t_last = t;
        state.values.copy_from_slice(&c.values);
        Ok(res > opts.tol)
    })?;
    if res > opts.tol {
        return Err(Error::RelaxationStalled { residual: res, t: t_last });
    }
    if opts.polish {
        if let Ok(p) = newton_polish(gf, &state, 1e-13) {
            let moved = p.values.iter().zip(&state.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if moved < 1e-6 {
                state = p;
                res = residual(gf, &state);
                log.samples.push(MonitorSample {
                    t: t_last,
                    in_a: in_a(&state, &sets),
                    in_b: in_b_with(gf, pair, &state, &sets, opts.connectivity),
                });
            }
        }
    }

    let p = omega.period;
    let ni = n as i64;
    let itin = itinerary(pair, &state, n, 0, p)?;
    let (mid_lo, mid_hi) = sets.middle_sites();
    let orbit = (mid_lo..=mid_hi).map(|i| point_from_config(gf, &state.shifted(i))).collect::<Result<Vec<_>>>()?;
    let block_points = (0..=p as i64).map(|m| point_from_config(gf, &state.shifted(2 * m * ni))).collect::<Result<Vec<_>>>()?;
    let mut conjugacy_error: f64 = 0.0;
    for w in block_points.windows(2) {
        let mut q = w[0];
        for _ in 0..2 * n {
            q = map_forward(gf, q)?;
        }
        conjugacy_error = conjugacy_error.max((q.x - w[1].x).abs()).max((q.p - w[1].p).abs());
    }
    let span = 2 * ni * p as i64;
    let k = omega.ones_per_period() as f64;
    let drift_error = (mid_lo..=mid_hi).fold(0.0f64, |m, i| m.max((state.get(i + span) - state.get(i) - k).abs()));
    let w1_distance = w1_to_fixed_point(&orbit, fp);
    Ok(ShadowResult {
        word: omega.clone(),
        n,
        e0,
        equilibrium: state,
        residual: res,
        itinerary: itin,
        orbit,
        block_points,
        w1_distance,
        monitor_log: log,
        conjugacy_error,
        drift_error,
        relax_time: t_last,
    })
}

/// `shadow_orbit` for several words in parallel.
pub fn shadow_many(
    gf: &GeneratingFunction,
    pair: &HomoclinicPair,
    fp: &FixedPointData,
    words: &[SymbolSequence],
    report: &InstabilityReport,
    opts: &ShadowOptions,
) -> Vec<Result<ShadowResult>> {
    let windowed = with_energy_window(gf, fp, pair, report.e_star);
    let pair = windowed.as_ref().unwrap_or(pair);
    words.par_iter().map(|w| shadow_orbit(gf, pair, fp, w, report, opts)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinRow {
    pub word: Vec<u8>,
    pub density: f64,
    pub w1: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub entropy_bound: f64,
    /// W1 / N: the right-hand side of the entropy inequality up to the
    /// unknown constant kappa3.
    pub rhs_over_kappa3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinReport {
    pub rows: Vec<WassersteinRow>,
    /// W1 strictly decreases as the density of ones decreases.
    pub strictly_decreasing: bool,
}

/// Tabulates W1 against the density of ones, densest word first.
pub fn wasserstein_report(results: &[ShadowResult], fp: &FixedPointData) -> WassersteinReport {
    let mut rows: Vec<WassersteinRow> = results
        .iter()
        .map(|r| {
            let w1 = w1_to_fixed_point(&r.orbit, fp);
            WassersteinRow {
                word: r.word.word.clone(),
                density: r.word.density(),
                w1,
                n: r.n,
                entropy_bound: entropy_lower_bound(r.n),
                rhs_over_kappa3: w1 / r.n as f64,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.density.total_cmp(&a.density));
    let strictly_decreasing = rows.windows(2).all(|w| w[1].density == w[0].density || w[1].w1 < w[0].w1);
    WassersteinReport { rows, strictly_decreasing }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_positions_convention() {
        assert_eq!(SymbolSequence::new(vec![1, 0, 1, 0]).unwrap().ones_positions, vec![0, 2]);
        assert_eq!(SymbolSequence::new(vec![0, 1, 0, 1]).unwrap().ones_positions, vec![-1, 1]);
        assert!(SymbolSequence::new(vec![0, 0]).unwrap().ones_positions.is_empty());
        assert!(SymbolSequence::new(vec![]).is_err());
        assert!(SymbolSequence::new(vec![2]).is_err());
    }

    #[test]
    fn counting_ones() {
        let w = SymbolSequence::new(vec![1, 0, 0]).unwrap();
        assert_eq!(w.count_before(0), 0);
        assert_eq!(w.count_before(1), 1);
        assert_eq!(w.count_before(3), 1);
        assert_eq!(w.count_before(4), 2);
        assert_eq!(w.count_before(-1), 0);
        assert_eq!(w.count_before(-3), -1);
        assert_eq!(w.count_before(-4), -1);
        assert_eq!(w.count_before(-6), -2);
    }

    #[test]
    fn choose_n_examples() {
        assert_eq!(choose_n_from(1.0, 24.0, 96.0, std::f64::consts::E).unwrap(), 1);
        assert_eq!(choose_n_from(1.0, 24.0, 0.96, std::f64::consts::E).unwrap(), 5);
        assert!(choose_n_from(1.0, 24.0, 0.0, 2.0).is_err());
        assert!(choose_n_from(1.0, 24.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy_lower_bound(1), std::f64::consts::LN_2 / 2.0);
        assert!((entropy_lower_bound(5) - 0.0693147).abs() < 1e-6);
    }

    #[test]
    fn cylinder_distance_wraps() {
        let d = cylinder_distance(PhasePoint::new(3.95, 0.0), PhasePoint::new(0.05, 0.0));
        assert!((d - 0.1).abs() < 1e-12);
    }
}
