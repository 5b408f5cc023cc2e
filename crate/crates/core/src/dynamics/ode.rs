//! Explicit Runge–Kutta steppers for small autonomous systems `ẏ = f(y)`
//! with state in `[f64; N]`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *y;
    for (o, ki) in out.iter_mut().zip(k) {
        *o += h * ki;
    }
    out
}

pub fn is_finite<const N: usize>(y: &[f64; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step<const N: usize, F>(f: &F, y: &[f64; N], h: f64) -> [f64; N]
where
    F: Fn(&[f64; N]) -> [f64; N],
{
    let k1 = f(y);
    let k2 = f(&axpy(y, 0.5 * h, &k1));
    let k3 = f(&axpy(y, 0.5 * h, &k2));
    let k4 = f(&axpy(y, h, &k3));
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

// Dormand–Prince 5(4) tableau; the system is autonomous so the nodes c_i are unused.
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
// b - b*, the difference between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive Dormand–Prince 5(4) with the standard mixed error norm
/// `sqrt(mean((err_i / (abs_tol + rel_tol·max(|y_i|, |y_new_i|)))²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Dopri5 {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }
}

impl Dopri5 {
    /// Advances `y` by exactly `span` starting at time `t0`. `h` is the step
    /// to try first and is updated to the step to try next.
    pub fn advance<const N: usize, F>(
        &self,
        f: &F,
        y: &mut [f64; N],
        t0: f64,
        span: f64,
        h: &mut f64,
    ) -> Result<(), OdeError>
    where
        F: Fn(&[f64; N]) -> [f64; N],
    {
        let t_end = t0 + span;
        let mut t = t0;
        let mut steps = 0usize;
        let mut k1 = f(y);
        while t < t_end {
            steps += 1;
            if steps > self.max_steps {
                return Err(OdeError::TooManySteps(self.max_steps));
            }
            let remaining = t_end - t;
            let trial = h.min(self.h_max);
            let last = trial >= remaining;
            let step = if last { remaining } else { trial };
            if step <= f64::EPSILON * t.abs().max(1.0) && !last {
                return Err(OdeError::StepUnderflow { t, h: step });
            }

            let mut tmp = [0.0; N];
            for i in 0..N {
                tmp[i] = y[i] + step * A21 * k1[i];
            }
            let k2 = f(&tmp);
            for i in 0..N {
                tmp[i] = y[i] + step * (A31 * k1[i] + A32 * k2[i]);
            }
            let k3 = f(&tmp);
            for i in 0..N {
                tmp[i] = y[i] + step * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            let k4 = f(&tmp);
            for i in 0..N {
                tmp[i] = y[i] + step * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            let k5 = f(&tmp);
            for i in 0..N {
                tmp[i] = y[i]
                    + step * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let k6 = f(&tmp);
            let mut y_new = [0.0; N];
            for i in 0..N {
                y_new[i] =
                    y[i] + step * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            let k7 = f(&y_new);

            let mut err_sq = 0.0;
            for i in 0..N {
                let e = step
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let scale = self.abs_tol + self.rel_tol * y[i].abs().max(y_new[i].abs());
                err_sq += (e / scale).powi(2);
            }
            let err = (err_sq / N as f64).sqrt();
            if !err.is_finite() {
                if !is_finite(&y_new) && step <= f64::EPSILON * t.abs().max(1.0) * 1e3 {
                    return Err(OdeError::NonFinite { t });
                }
                *h = step * 0.1;
                continue;
            }

            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t = if last { t_end } else { t + step };
                *y = y_new;
                k1 = k7;
                if !last || factor < 1.0 {
                    *h = step * factor;
                }
            } else {
                *h = step * factor.min(1.0);
            }
        }
        Ok(())
    }
}
