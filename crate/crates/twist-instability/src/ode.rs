//! Dormand-Prince 5(4) with embedded error control and output at fixed
//! sample times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub atol: f64,
    pub rtol: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub max_error_estimate: f64,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order weights minus the embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates y' = f(t, y) from t = 0 and calls `sample(t, y)` at
/// t = 0, dt, 2 dt, ... up to t_end. Returning false from `sample` stops
/// the integration early.
pub fn integrate_sampled<F, S>(mut f: F, y0: &[f64], t_end: f64, dt: f64, opts: OdeOptions, mut sample: S) -> Result<StepStats>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    S: FnMut(f64, &[f64]) -> Result<bool>,
{
    let n = y0.len();
    let mut stats = StepStats::default();
    let mut y = y0.to_vec();
    let mut t = 0.0;
    if !sample(0.0, &y)? {
        return Ok(stats);
    }
    let n_samples = ((t_end / dt) + 1e-9).floor() as usize;
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    f(t, &y, &mut k1);

    let fnorm = (k1.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    let mut h = if fnorm > 0.0 { (0.01 / fnorm).min(dt) } else { dt };
    h = h.max(opts.h_min * 10.0);

    for s in 1..=n_samples {
        let target = s as f64 * dt;
        while t < target {
            let last = target - t <= h * (1.0 + 1e-12);
            let step = if last { target - t } else { h };
            for i in 0..n {
                tmp[i] = y[i] + step * A21 * k1[i];
            }
            f(t + C2 * step, &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + step * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * step, &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + step * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * step, &tmp, &mut k4);
            for i in 0..n {
                tmp[i] = y[i] + step * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * step, &tmp, &mut k5);
            for i in 0..n {
                tmp[i] = y[i] + step * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(t + step, &tmp, &mut k6);
            for i in 0..n {
                ynew[i] = y[i] + step * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            f(t + step, &ynew, &mut k7);
            let mut err = 0.0;
            for i in 0..n {
                let e = step * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sc) * (e / sc);
            }
            err = (err / n.max(1) as f64).sqrt();
            if err <= 1.0 {
                t = if last { target } else { t + step };
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                stats.accepted += 1;
                stats.max_error_estimate = stats.max_error_estimate.max(err);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    h = step * fac;
                }
            } else {
                stats.rejected += 1;
                h = step * if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            }
            if h < opts.h_min {
                return Err(Error::StepSizeUnderflow { t });
            }
            if stats.accepted + stats.rejected > opts.max_steps {
                return Err(Error::StepSizeUnderflow { t });
            }
        }
        if !sample(target, &y)? {
            break;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(tol: f64) -> OdeOptions {
        OdeOptions { atol: tol, rtol: tol, h_min: 1e-14, max_steps: 1_000_000 }
    }

    #[test]
    fn exponential_decay_at_sample_times() {
        let mut got = Vec::new();
        integrate_sampled(
            |_, y, dy| dy[0] = -2.0 * y[0],
            &[1.0],
            1.0,
            0.25,
            opts(1e-12),
            |t, y| {
                got.push((t, y[0]));
                Ok(true)
            },
        )
        .unwrap();
        assert_eq!(got.len(), 5);
        for (t, y) in got {
            assert!((y - (-2.0 * t).exp()).abs() < 1e-10, "{t} {y}");
        }
    }

    #[test]
    fn harmonic_oscillator_period() {
        let mut last = vec![];
        integrate_sampled(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            &[1.0, 0.0],
            2.0 * std::f64::consts::PI,
            2.0 * std::f64::consts::PI,
            opts(1e-11),
            |_, y| {
                last = y.to_vec();
                Ok(true)
            },
        )
        .unwrap();
        assert!((last[0] - 1.0).abs() < 1e-8 && last[1].abs() < 1e-8);
    }
}
