//! Adaptive Dormand-Prince 5(4) integrator over a small state trait, used
//! for profile orbits (real vectors) and Evans frames (complex matrices).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub trait OdeState: Clone {
    fn axpy(&mut self, a: f64, x: &Self);
    fn scale(&self, a: f64) -> Self;
    /// Weighted RMS of `err` against the larger of `y0`, `y1`.
    fn err_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64;
    fn is_finite(&self) -> bool;
}

impl OdeState for DVector<f64> {
    fn axpy(&mut self, a: f64, x: &Self) {
        self.axpy(a, x, 1.0);
    }
    fn scale(&self, a: f64) -> Self {
        self * a
    }
    fn err_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        let n = err.len().max(1) as f64;
        let s: f64 = (0..err.len())
            .map(|i| {
                let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
                (err[i] / sc).powi(2)
            })
            .sum();
        (s / n).sqrt()
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl OdeState for DMatrix<Complex64> {
    fn axpy(&mut self, a: f64, x: &Self) {
        self.zip_apply(x, |s, v| *s += v * a);
    }
    fn scale(&self, a: f64) -> Self {
        self * Complex64::new(a, 0.0)
    }
    fn err_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        // Frames are compared column-wise against the column norm so that a
        // growing frame is controlled relatively.
        let mut s = 0.0;
        let mut cnt = 0.0f64;
        for j in 0..err.ncols() {
            let sc = atol + rtol * y0.column(j).norm().max(y1.column(j).norm());
            for i in 0..err.nrows() {
                s += (err[(i, j)].norm() / sc).powi(2);
                cnt += 1.0;
            }
        }
        (s / cnt.max(1.0)).sqrt()
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            h0: 1e-3,
            h_max: f64::INFINITY,
            h_min: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("too many steps (stopped at t = {t})")]
    TooManySteps { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("right-hand side failed at t = {t}: {msg}")]
    Rhs { t: f64, msg: String },
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
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// What the observer wants after an accepted step.
pub enum Control {
    Continue,
    /// The observer replaced the state; the stored derivative is refreshed.
    Modified,
    Stop,
}

/// Integrate from `t0` to `t1` (either direction). The observer sees every
/// accepted step and may replace the state (for re-orthonormalization),
/// returning `Control::Modified` when it does. Steps are clipped to
/// land exactly on each entry of `stops` (which must be ordered along the
/// direction of integration).
pub fn dopri5<S, F, O>(
    mut f: F,
    t0: f64,
    y0: S,
    t1: f64,
    stops: &[f64],
    opts: &OdeOptions,
    mut observe: O,
) -> Result<(f64, S), OdeError>
where
    S: OdeState,
    F: FnMut(f64, &S) -> Result<S, String>,
    O: FnMut(f64, &mut S) -> Control,
{
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0;
    let mut h = opts.h0.min(opts.h_max).min((t1 - t0).abs()).max(opts.h_min);
    let rhs = |f: &mut F, t: f64, y: &S| -> Result<S, OdeError> {
        f(t, y).map_err(|msg| OdeError::Rhs { t, msg })
    };
    let mut k1 = rhs(&mut f, t, &y)?;
    let mut stop_idx = 0;
    while stop_idx < stops.len() && (stops[stop_idx] - t) * dir <= 0.0 {
        stop_idx += 1;
    }
    let mut steps = 0usize;
    while (t1 - t) * dir > 0.0 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(OdeError::TooManySteps { t });
        }
        let mut target = t1;
        if stop_idx < stops.len() && (stops[stop_idx] - t1) * dir < 0.0 {
            target = stops[stop_idx];
        }
        let mut clipped = false;
        if h >= (target - t).abs() {
            h = (target - t).abs();
            clipped = true;
        }
        let hs = h * dir;
        // A failed trial stage shrinks the step instead of aborting.
        let stages = (|| -> Result<_, OdeError> {
            let mut tmp = y.clone();
            tmp.axpy(hs * A21, &k1);
            let k2 = rhs(&mut f, t + C2 * hs, &tmp)?;
            let mut tmp = y.clone();
            tmp.axpy(hs * A31, &k1);
            tmp.axpy(hs * A32, &k2);
            let k3 = rhs(&mut f, t + C3 * hs, &tmp)?;
            let mut tmp = y.clone();
            tmp.axpy(hs * A41, &k1);
            tmp.axpy(hs * A42, &k2);
            tmp.axpy(hs * A43, &k3);
            let k4 = rhs(&mut f, t + C4 * hs, &tmp)?;
            let mut tmp = y.clone();
            tmp.axpy(hs * A51, &k1);
            tmp.axpy(hs * A52, &k2);
            tmp.axpy(hs * A53, &k3);
            tmp.axpy(hs * A54, &k4);
            let k5 = rhs(&mut f, t + C5 * hs, &tmp)?;
            let mut tmp = y.clone();
            tmp.axpy(hs * A61, &k1);
            tmp.axpy(hs * A62, &k2);
            tmp.axpy(hs * A63, &k3);
            tmp.axpy(hs * A64, &k4);
            tmp.axpy(hs * A65, &k5);
            let k6 = rhs(&mut f, t + hs, &tmp)?;
            let mut ynew = y.clone();
            ynew.axpy(hs * B1, &k1);
            ynew.axpy(hs * B3, &k3);
            ynew.axpy(hs * B4, &k4);
            ynew.axpy(hs * B5, &k5);
            ynew.axpy(hs * B6, &k6);
            let k7 = rhs(&mut f, t + hs, &ynew)?;
            Ok((k3, k4, k5, k6, ynew, k7))
        })();
        let (k3, k4, k5, k6, ynew, k7) = match stages {
            Ok(v) => v,
            Err(e) => {
                h *= 0.25;
                if h < opts.h_min {
                    return Err(e);
                }
                continue;
            }
        };
        let mut err = k1.scale(hs * E1);
        err.axpy(hs * E3, &k3);
        err.axpy(hs * E4, &k4);
        err.axpy(hs * E5, &k5);
        err.axpy(hs * E6, &k6);
        err.axpy(hs * E7, &k7);
        let en = S::err_norm(&err, &y, &ynew, opts.atol, opts.rtol);
        if !en.is_finite() || !ynew.is_finite() {
            h *= 0.25;
            if h < opts.h_min {
                return Err(OdeError::NonFinite { t });
            }
            continue;
        }
        if en <= 1.0 {
            t = if clipped { target } else { t + hs };
            y = ynew;
            k1 = k7;
            if clipped && stop_idx < stops.len() && target == stops[stop_idx] {
                stop_idx += 1;
            }
            match observe(t, &mut y) {
                Control::Continue => {}
                Control::Modified => k1 = rhs(&mut f, t, &y)?,
                Control::Stop => return Ok((t, y)),
            }
            let fac = if en == 0.0 {
                5.0
            } else {
                (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
            };
            if !clipped {
                h *= fac;
            } else {
                h = (h * fac).max(opts.h0.min(opts.h_max));
            }
        } else {
            let fac = (0.9 * en.powf(-0.2)).clamp(0.1, 0.9);
            h *= fac;
        }
        h = h.min(opts.h_max);
        if h < opts.h_min {
            return Err(OdeError::StepUnderflow { t });
        }
    }
    Ok((t, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_to_high_accuracy() {
        let y0 = DVector::from_vec(vec![1.0]);
        let opts = OdeOptions {
            rtol: 1e-12,
            atol: 1e-14,
            ..Default::default()
        };
        let (_, y) = dopri5(
            |_, y: &DVector<f64>| Ok(-y.clone()),
            0.0,
            y0,
            5.0,
            &[],
            &opts,
            |_, _| Control::Continue,
        )
        .unwrap();
        assert!((y[0] - (-5.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn backward_integration_and_stops() {
        let y0 = DVector::from_vec(vec![1.0]);
        let opts = OdeOptions {
            rtol: 1e-12,
            atol: 1e-14,
            ..Default::default()
        };
        let mut seen = vec![];
        let (_, y) = dopri5(
            |_, y: &DVector<f64>| Ok(y.clone()),
            0.0,
            y0,
            -2.0,
            &[-0.5, -1.0],
            &opts,
            |t, _| {
                seen.push(t);
                Control::Continue
            },
        )
        .unwrap();
        assert!(seen.contains(&-0.5) && seen.contains(&-1.0));
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-12);
    }
}
