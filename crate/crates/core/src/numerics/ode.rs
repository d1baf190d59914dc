//! Explicit adaptive Dormand-Prince 5(4) integrator for small fixed-size systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-8, atol: 1e-10, max_steps: 1_000_000 }
    }
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

#[inline]
fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])], h: f64) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Stepper state: current time, state and the step size proposed for the next step.
pub struct DormandPrince<const N: usize, F>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    rhs: F,
    opts: OdeOptions,
    pub t: f64,
    pub y: [f64; N],
    h: f64,
    k1: [f64; N],
    steps: usize,
}

impl<const N: usize, F> DormandPrince<N, F>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    pub fn new(mut rhs: F, t0: f64, y0: [f64; N], opts: OdeOptions) -> Self {
        let k1 = rhs(t0, &y0);
        DormandPrince { rhs, opts, t: t0, y: y0, h: 0.0, k1, steps: 0 }
    }

    fn initial_step(&self, span: f64) -> f64 {
        // scale from the initial derivative; the monotone decays integrated here are smooth
        let mut rate: f64 = 0.0;
        for i in 0..N {
            let scale = self.opts.atol + self.opts.rtol * self.y[i].abs();
            rate = rate.max((self.k1[i] / scale).abs());
        }
        let guess = if rate > 0.0 { 0.01 * rate.powf(-1.0) } else { span };
        guess.min(span).max(span * 1e-12)
    }

    /// Advances to exactly `t_end`, calling `observe` after every accepted step.
    pub fn advance_to<O: FnMut(f64, &[f64; N])>(&mut self, t_end: f64, mut observe: O) -> Result<()> {
        let span = t_end - self.t;
        if span <= 0.0 {
            return Ok(());
        }
        if self.h <= 0.0 {
            self.h = self.initial_step(span);
        }
        while self.t < t_end {
            let remaining = t_end - self.t;
            let mut h = self.h.min(remaining);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            if h <= 1e-14 * self.t.abs().max(span) {
                return Err(Error::StepSizeUnderflow { t: self.t, temperature: self.y[0] });
            }
            self.steps += 1;
            if self.steps > self.opts.max_steps {
                return Err(Error::StepSizeUnderflow { t: self.t, temperature: self.y[0] });
            }
            let (t, y, k1) = (self.t, self.y, self.k1);
            let f = &mut self.rhs;
            let k2 = f(t + C2 * h, &axpy(&y, &[(A21, &k1)], h));
            let k3 = f(t + C3 * h, &axpy(&y, &[(A31, &k1), (A32, &k2)], h));
            let k4 = f(t + C4 * h, &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
            let k5 = f(t + C5 * h, &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h));
            let k6 = f(t + h, &axpy(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h));
            let y_new = axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
            let t_new = if last { t_end } else { t + h };
            let k7 = f(t_new, &y_new);

            let mut err: f64 = 0.0;
            for i in 0..N {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let scale = self.opts.atol + self.opts.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / scale).powi(2);
            }
            let err = (err / N as f64).sqrt();
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 && y_new.iter().all(|v| v.is_finite()) {
                self.t = t_new;
                self.y = y_new;
                self.k1 = k7;
                if !last || factor < 1.0 {
                    self.h = h * factor;
                }
                observe(self.t, &self.y);
            } else {
                self.h = h * factor.min(0.5);
            }
        }
        Ok(())
    }
}
