//! Explicit Runge-Kutta integrators.
//!
//! [`Dopri5`] is the Dormand-Prince 5(4) pair with its fourth-order continuous
//! extension, used wherever a quantity needs adaptive step
//! control with dense output. [`rk4_step`] is the classic fixed-step scheme
//! used by the covariance propagators, where the step is pinned externally.

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

/// Tolerances and step limits for [`Dopri5`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: Option<f64>,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            initial_step: None,
            max_step: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Default::default()
        }
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }
}

/// One accepted step together with its interpolation coefficients.
#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    h: f64,
    rcont: [Vec<f64>; 5],
}

/// Dense solution of an initial value problem on `[t0, t1]`.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    segments: Vec<Segment>,
    t_start: f64,
    t_end: f64,
    y_end: Vec<f64>,
    dim: usize,
    pub evaluations: usize,
}

impl DenseSolution {
    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn final_state(&self) -> &[f64] {
        &self.y_end
    }

    pub fn steps(&self) -> usize {
        self.segments.len()
    }

    /// Step boundaries, including both endpoints.
    pub fn mesh(&self) -> Vec<f64> {
        let mut mesh: Vec<f64> = self.segments.iter().map(|s| s.t0).collect();
        mesh.push(self.t_end);
        mesh
    }

    /// Interpolated state at `t`, clamped to the integration interval.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        if self.segments.is_empty() || t >= self.t_end {
            out.copy_from_slice(&self.y_end);
            return;
        }
        let t = t.max(self.t_start);
        let idx = match self
            .segments
            .binary_search_by(|s| s.t0.partial_cmp(&t).expect("finite mesh"))
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        let seg = &self.segments[idx];
        let theta = (t - seg.t0) / seg.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &seg.rcont;
        for i in 0..self.dim {
            out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
    }
}

/// Dormand-Prince 5(4) with PI-free classic step control.
pub struct Dopri5 {
    pub tol: Tolerances,
}

impl Dopri5 {
    pub fn new(tol: Tolerances) -> Self {
        Self { tol }
    }

    /// Integrate `y' = f(t, y)` from `t0` to `t1`.
    ///
    /// `check` is called after every accepted step with the new state and may
    /// abort the integration by returning an error.
    pub fn solve<F, C>(
        &self,
        mut f: F,
        t0: f64,
        y0: &[f64],
        t1: f64,
        mut check: C,
    ) -> Result<DenseSolution>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        C: FnMut(f64, &[f64]) -> Result<()>,
    {
        let n = y0.len();
        let direction = if t1 >= t0 { 1.0 } else { -1.0 };
        let span = (t1 - t0).abs();
        let mut sol = DenseSolution {
            segments: Vec::new(),
            t_start: t0,
            t_end: t1,
            y_end: y0.to_vec(),
            dim: n,
            evaluations: 0,
        };
        if span == 0.0 {
            return Ok(sol);
        }
        if direction < 0.0 {
            return Err(Error::Integration(
                "backward integration is not supported by the dense solver".into(),
            ));
        }

        let mut y = y0.to_vec();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut k5 = vec![0.0; n];
        let mut k6 = vec![0.0; n];
        let mut k7 = vec![0.0; n];
        let mut ytmp = vec![0.0; n];
        let mut ynew = vec![0.0; n];

        f(t0, &y, &mut k1);
        sol.evaluations += 1;

        let tol = &self.tol;
        let mut h = match tol.initial_step {
            Some(h) => h,
            None => initial_step(&y, &k1, tol, span),
        }
        .min(tol.max_step)
        .min(span);
        let mut t = t0;
        let mut steps = 0usize;
        let mut last_rejected = false;

        while t < t1 {
            if steps >= tol.max_steps {
                return Err(Error::Integration(format!(
                    "step budget of {} exhausted at t = {t}",
                    tol.max_steps
                )));
            }
            steps += 1;
            let mut last = false;
            if t + 1.01 * h >= t1 {
                h = t1 - t;
                last = true;
            }
            if h <= f64::EPSILON * t.abs().max(1.0) * 4.0 {
                return Err(Error::Integration(format!("step size underflow at t = {t}")));
            }

            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            f(t + C2 * h, &ytmp, &mut k2);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * h, &ytmp, &mut k3);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * h, &ytmp, &mut k4);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * h, &ytmp, &mut k5);
            for i in 0..n {
                ytmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(t + h, &ytmp, &mut k6);
            for i in 0..n {
                ynew[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            f(t + h, &ynew, &mut k7);
            sol.evaluations += 6;

            let mut err = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
                let sc = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = (err / n as f64).sqrt();
            if !err.is_finite() {
                h *= 0.2;
                last_rejected = true;
                continue;
            }

            if err <= 1.0 {
                let mut r2 = vec![0.0; n];
                let mut r3 = vec![0.0; n];
                let mut r4 = vec![0.0; n];
                let mut r5 = vec![0.0; n];
                for i in 0..n {
                    let dy = ynew[i] - y[i];
                    let bspl = h * k1[i] - dy;
                    r2[i] = dy;
                    r3[i] = bspl;
                    r4[i] = dy - h * k7[i] - bspl;
                    r5[i] = h
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                            + D7 * k7[i]);
                }
                sol.segments.push(Segment {
                    t0: t,
                    h,
                    rcont: [y.clone(), r2, r3, r4, r5],
                });
                t = if last { t1 } else { t + h };
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                check(t, &y)?;

                let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
                fac = fac.clamp(0.2, 10.0);
                if last_rejected {
                    fac = fac.min(1.0);
                }
                last_rejected = false;
                h = (h * fac).min(tol.max_step);
            } else {
                let fac = (0.9 * err.powf(-0.2)).max(0.2);
                h *= fac;
                last_rejected = true;
            }
        }
        sol.y_end = y;
        Ok(sol)
    }
}

fn initial_step(y: &[f64], dy: &[f64], tol: &Tolerances, span: f64) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (yi, fi) in y.iter().zip(dy) {
        let sc = tol.atol + tol.rtol * yi.abs();
        d0 += (yi / sc).powi(2);
        d1 += (fi / sc).powi(2);
    }
    let n = y.len().max(1) as f64;
    let d0 = (d0 / n).sqrt();
    let d1 = (d1 / n).sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.min(span * 0.01).max(1e-10)
}

/// One classic fourth-order Runge-Kutta step for `y' = f(t, y)`.
///
/// `work` must hold five scratch vectors of the state length; it is reused
/// across steps to keep the propagators allocation free.
pub fn rk4_step<F>(f: &mut F, t: f64, h: f64, y: &mut [f64], work: &mut Rk4Work)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let Rk4Work { k1, k2, k3, k4, tmp } = work;
    f(t, y, k1);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, tmp, k2);
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, tmp, k3);
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f(t + h, tmp, k4);
    let h6 = h / 6.0;
    for i in 0..n {
        y[i] += h6 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
    }
}

/// Scratch space for [`rk4_step`].
#[derive(Debug, Clone)]
pub struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    pub fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_check(_: f64, _: &[f64]) -> Result<()> {
        Ok(())
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let solver = Dopri5::new(Tolerances::new(1e-11, 1e-14));
        let sol = solver
            .solve(|_, y, dy| dy[0] = -0.7 * y[0], 0.0, &[2.0], 5.0, no_check)
            .unwrap();
        for &t in &[0.0f64, 0.3, 1.7, 2.5, 4.99, 5.0] {
            let exact = 2.0 * (-0.7 * t).exp();
            assert!((sol.eval(t)[0] - exact).abs() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn dense_output_resolves_oscillation_between_steps() {
        let solver = Dopri5::new(Tolerances::new(1e-10, 1e-13));
        let w = 3.0;
        let sol = solver
            .solve(
                |_, y, dy| {
                    dy[0] = y[1];
                    dy[1] = -w * w * y[0];
                },
                0.0,
                &[1.0, 0.0],
                10.0,
                no_check,
            )
            .unwrap();
        let mut max_err: f64 = 0.0;
        for k in 0..=1000 {
            let t = 10.0 * k as f64 / 1000.0;
            max_err = max_err.max((sol.eval(t)[0] - (w * t).cos()).abs());
        }
        assert!(max_err < 1e-8, "max error {max_err}");
    }

    #[test]
    fn check_callback_aborts() {
        let solver = Dopri5::new(Tolerances::default());
        let res = solver.solve(
            |_, _, dy| dy[0] = -1.0,
            0.0,
            &[1.0],
            3.0,
            |_, y| {
                if y[0] <= 0.0 {
                    Err(Error::Integration("crossed zero".into()))
                } else {
                    Ok(())
                }
            },
        );
        assert!(res.is_err());
    }

    #[test]
    fn rk4_is_fourth_order() {
        let run = |h: f64| {
            let mut y = [1.0];
            let mut work = Rk4Work::new(1);
            let steps = (1.0 / h).round() as usize;
            let mut f = |_: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0];
            for k in 0..steps {
                rk4_step(&mut f, k as f64 * h, h, &mut y, &mut work);
            }
            (y[0] - 1f64.exp()).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }
}
