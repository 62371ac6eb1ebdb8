//! Adaptive Dormand–Prince 5(4) integration of complex vector ODEs.

use crate::error::{Error, Result};
use crate::operator::C64;

/// Relative and absolute error targets of the adaptive step control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
        }
    }
}

impl Tolerance {
    pub fn new(rtol: f64, atol: f64) -> Result<Self> {
        if !(rtol > 0.0 && atol > 0.0) {
            return Err(Error::Domain(format!(
                "tolerances must be positive (rtol {rtol}, atol {atol})"
            )));
        }
        Ok(Self { rtol, atol })
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
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrator with its scratch buffers; the step size carries over between
/// calls to `advance`.
pub struct Dopri5 {
    tol: Tolerance,
    h: f64,
    k: [Vec<C64>; 7],
    tmp: Vec<C64>,
    y_new: Vec<C64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Dopri5 {
    pub fn new(dim: usize, tol: Tolerance, h0: f64) -> Self {
        let z = vec![C64::new(0.0, 0.0); dim];
        Self {
            tol,
            h: h0,
            k: std::array::from_fn(|_| z.clone()),
            tmp: z.clone(),
            y_new: z,
            accepted_steps: 0,
            rejected_steps: 0,
        }
    }

    /// Integrates `y' = f(t, y)` from `t` to `t_end`, updating `y` in place.
    pub fn advance<F>(&mut self, f: &mut F, t: &mut f64, y: &mut [C64], t_end: f64) -> Result<()>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let n = y.len();
        while *t < t_end {
            let remaining = t_end - *t;
            if remaining <= 1e-13 * t_end.abs().max(1.0) {
                *t = t_end;
                break;
            }
            let h = self.h.min(remaining);
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::IntegrationFailure {
                    time_us: *t,
                    reason: format!("step size underflow (h = {h:e})"),
                });
            }
            let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
            let tmp = &mut self.tmp;
            f(*t, y, k1);
            for i in 0..n {
                tmp[i] = y[i] + h * (A21 * k1[i]);
            }
            f(*t + C2 * h, tmp, k2);
            for i in 0..n {
                tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(*t + C3 * h, tmp, k3);
            for i in 0..n {
                tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(*t + C4 * h, tmp, k4);
            for i in 0..n {
                tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(*t + C5 * h, tmp, k5);
            for i in 0..n {
                tmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(*t + h, tmp, k6);
            let y_new = &mut self.y_new;
            for i in 0..n {
                y_new[i] =
                    y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            f(*t + h, y_new, k7);

            let mut err2 = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let scale = self.tol.atol + self.tol.rtol * y[i].norm().max(y_new[i].norm());
                err2 += (e.norm() / scale).powi(2);
            }
            let err = (err2 / n as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::IntegrationFailure {
                    time_us: *t,
                    reason: "non-finite error estimate".into(),
                });
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                *t += h;
                y.copy_from_slice(y_new);
                self.accepted_steps += 1;
                // Keep the unclipped step when only the interval end shortened it.
                if h == self.h || factor < 1.0 {
                    self.h = h * factor;
                }
            } else {
                self.rejected_steps += 1;
                self.h = h * factor.min(1.0);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_and_rotation() {
        let lam = C64::new(-0.7, 3.0);
        let mut y = vec![C64::new(1.0, 0.0)];
        let mut t = 0.0;
        let mut ode = Dopri5::new(1, Tolerance::new(1e-10, 1e-12).unwrap(), 0.01);
        ode.advance(&mut |_, y: &[C64], dy: &mut [C64]| dy[0] = lam * y[0], &mut t, &mut y, 2.0)
            .unwrap();
        assert_eq!(t, 2.0);
        assert!((y[0] - (lam * 2.0).exp()).norm() < 1e-9);
    }

    #[test]
    fn polynomial_is_integrated_exactly() {
        // y' = 5t^4 is within the fifth-order method's exact class
        let mut y = vec![C64::new(0.0, 0.0)];
        let mut t = 0.0;
        let mut ode = Dopri5::new(1, Tolerance::default(), 0.3);
        ode.advance(&mut |t, _: &[C64], dy: &mut [C64]| dy[0] = C64::new(5.0 * t.powi(4), 0.0), &mut t, &mut y, 1.5)
            .unwrap();
        assert!((y[0].re - 1.5f64.powi(5)).abs() < 1e-10);
    }

    #[test]
    fn underflow_is_reported() {
        let mut y = vec![C64::new(1.0, 0.0)];
        let mut t = 0.0;
        let mut ode = Dopri5::new(1, Tolerance::default(), 0.1);
        let r = ode.advance(&mut |t, _: &[C64], dy: &mut [C64]| dy[0] = C64::new(1.0 / (0.5 - t), 0.0), &mut t, &mut y, 1.0);
        match r {
            Err(Error::IntegrationFailure { time_us, .. }) => assert!(time_us < 0.5 && time_us > 0.49),
            other => panic!("{other:?}"),
        }
    }
}
