//! Dormand-Prince 5(4) with dense output and step-wise driving.

use crate::error::{Error, Result};

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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-12, max_step: f64::INFINITY, max_steps: 1_000_000 }
    }
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep<const N: usize> {
    pub x0: f64,
    pub x1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    rcont: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    /// Fourth-order interpolant on [x0, x1].
    pub fn eval(&self, x: f64) -> [f64; N] {
        let h = self.x1 - self.x0;
        let t = (x - self.x0) / h;
        let t1 = 1.0 - t;
        let mut out = [0.0; N];
        for i in 0..N {
            let r = &self.rcont;
            out[i] = r[0][i] + t * (r[1][i] + t1 * (r[2][i] + t * (r[3][i] + t1 * r[4][i])));
        }
        out
    }

    /// Root of g along the step, assuming g changes sign between the ends.
    pub fn locate<G: Fn(f64, &[f64; N]) -> f64>(&self, g: G) -> (f64, [f64; N]) {
        let (mut a, mut b) = (self.x0, self.x1);
        let mut ga = g(a, &self.y0);
        let mut gb = g(b, &self.y1);
        if ga == 0.0 {
            return (a, self.y0);
        }
        if gb == 0.0 {
            return (b, self.y1);
        }
        // Illinois variant of regula falsi, falling back to bisection
        let mut side = 0i32;
        for _ in 0..200 {
            let mut x = (a * gb - b * ga) / (gb - ga);
            if !x.is_finite() || (x - a) * (x - b) > 0.0 {
                x = 0.5 * (a + b);
            }
            let y = self.eval(x);
            let gx = g(x, &y);
            if gx == 0.0 || (b - a).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
                return (x, y);
            }
            if (gx > 0.0) == (gb > 0.0) {
                b = x;
                gb = gx;
                if side == 1 {
                    ga *= 0.5;
                }
                side = 1;
            } else {
                a = x;
                ga = gx;
                if side == -1 {
                    gb *= 0.5;
                }
                side = -1;
            }
        }
        let x = 0.5 * (a + b);
        (x, self.eval(x))
    }
}

pub struct Dopri5<const N: usize, F> {
    f: F,
    x: f64,
    y: [f64; N],
    k1: [f64; N],
    h: f64,
    dir: f64,
    ctrl: StepControl,
    steps: usize,
    rejected_last: bool,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

fn finite<const N: usize>(v: &[f64; N]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl<const N: usize, F> Dopri5<N, F>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    /// Start at (x0, y0) integrating toward increasing x when `forward`, decreasing otherwise.
    pub fn new(mut f: F, x0: f64, y0: [f64; N], forward: bool, ctrl: StepControl) -> Result<Self> {
        let k1 = f(x0, &y0);
        if !finite(&k1) || !finite(&y0) {
            return Err(Error::NonFinite(format!("initial state at x = {x0}")));
        }
        let dir = if forward { 1.0 } else { -1.0 };
        let mut s = Self { f, x: x0, y: y0, k1, h: 0.0, dir, ctrl, steps: 0, rejected_last: false };
        s.h = s.initial_step();
        Ok(s)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn derivative(&self) -> &[f64; N] {
        &self.k1
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn scale(&self, a: &[f64; N], b: &[f64; N], i: usize) -> f64 {
        self.ctrl.abs_tol + self.ctrl.rel_tol * a[i].abs().max(b[i].abs())
    }

    fn initial_step(&mut self) -> f64 {
        let (y0, f0) = (self.y, self.k1);
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sk = self.scale(&y0, &y0, i);
            d0 += (y0[i] / sk).powi(2);
            d1 += (f0[i] / sk).powi(2);
        }
        d0 = (d0 / N as f64).sqrt();
        d1 = (d1 / N as f64).sqrt();
        let mut h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.ctrl.max_step);
        let y1 = axpy(&y0, self.dir * h0, &[(1.0, &f0)]);
        let f1 = (self.f)(self.x + self.dir * h0, &y1);
        let mut d2 = 0.0;
        for i in 0..N {
            let sk = self.scale(&y0, &y0, i);
            d2 += ((f1[i] - f0[i]) / sk).powi(2);
        }
        d2 = (d2 / N as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.ctrl.max_step)
    }

    /// Advance by one accepted step, never passing `x_end`.
    pub fn step(&mut self, x_end: f64) -> Result<DenseStep<N>> {
        loop {
            if self.steps >= self.ctrl.max_steps {
                return Err(Error::StepLimit(self.steps));
            }
            let remaining = (x_end - self.x) * self.dir;
            if remaining <= 0.0 {
                return Err(Error::InvalidParams(format!("step requested past x_end = {x_end}")));
            }
            let mut h = self.h.min(self.ctrl.max_step);
            let mut last = false;
            if h >= remaining {
                h = remaining;
                last = true;
            }
            if h <= 8.0 * f64::EPSILON * self.x.abs().max(1e-300) {
                return Err(Error::StepUnderflow { x: self.x });
            }
            let sh = self.dir * h;
            let x = self.x;
            let y = self.y;
            let k1 = self.k1;
            let f = &mut self.f;
            let k2 = f(x + C2 * sh, &axpy(&y, sh, &[(A21, &k1)]));
            let k3 = f(x + C3 * sh, &axpy(&y, sh, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(x + C4 * sh, &axpy(&y, sh, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(x + C5 * sh, &axpy(&y, sh, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
            let ys = axpy(&y, sh, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
            let k6 = f(x + sh, &ys);
            let y1 = axpy(&y, sh, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let x1 = if last { x_end } else { x + sh };
            let k7 = f(x1, &y1);
            self.steps += 1;

            let ok = [&k2, &k3, &k4, &k5, &k6, &k7, &y1].iter().all(|v| finite(v));
            if !ok {
                self.h = 0.25 * h;
                self.rejected_last = true;
                continue;
            }
            let mut err = 0.0;
            for i in 0..N {
                let e = sh * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                err += (e / self.scale(&y, &y1, i)).powi(2);
            }
            err = (err / N as f64).sqrt();
            let fac = if err == 0.0 { 10.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 10.0) };
            if err <= 1.0 {
                let mut rcont = [[0.0; N]; 5];
                for i in 0..N {
                    let dy = y1[i] - y[i];
                    let bspl = sh * k1[i] - dy;
                    rcont[0][i] = y[i];
                    rcont[1][i] = dy;
                    rcont[2][i] = bspl;
                    rcont[3][i] = dy - sh * k7[i] - bspl;
                    rcont[4][i] =
                        sh * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                let fac = if self.rejected_last { fac.min(1.0) } else { fac };
                self.rejected_last = false;
                // keep the proposed size when the step was clipped to x_end
                self.h = if last { self.h.max(h * fac) } else { h * fac };
                self.x = x1;
                self.y = y1;
                self.k1 = k7;
                return Ok(DenseStep { x0: x, x1, y0: y, y1, rcont });
            }
            self.rejected_last = true;
            self.h = h * fac.min(1.0);
        }
    }

    /// Integrate to `x_end`, returning the final state.
    pub fn integrate_to(&mut self, x_end: f64) -> Result<[f64; N]> {
        while (x_end - self.x) * self.dir > 0.0 {
            self.step(x_end)?;
        }
        Ok(self.y)
    }
}
