//! The scaling function `b(t)` of the Lewis-Riesenfeld invariant and the
//! Ermakov equation `b̈ + ω²(t) b = ω₀²/b³` that ties it to the trap frequency.
//!
//! Two directions are supported:
//!
//! * reverse engineering: a polynomial `b(t)` satisfying the endpoint
//!   conditions fixes `ω²(t) = ω₀²/b⁴ - b̈/b` in closed form;
//! * forward integration: a given `ω²(t)` is integrated for `b(t)` with
//!   adaptive step control and dense output.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::ode::{DenseSolution, Dopri5, Tolerances};

/// Number of sample points used to certify `b > 0` on `[0, t_f]`.
pub const POSITIVITY_SAMPLES: usize = 4001;

/// `b` and its first three time derivatives at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPoint {
    pub b: f64,
    pub bdot: f64,
    pub bddot: f64,
    pub bdddot: f64,
}

impl ScalingPoint {
    pub const IDENTITY: Self = Self {
        b: 1.0,
        bdot: 0.0,
        bddot: 0.0,
        bdddot: 0.0,
    };
}

/// Anything that provides a scaling function on `[0, duration]`.
pub trait Scaling {
    fn point(&self, t: f64) -> ScalingPoint;
    fn duration(&self) -> f64;
    fn omega0(&self) -> f64;
}

/// Sixth-order polynomial `b(t) = Σ aₙ (t/t_f)ⁿ`.
///
/// Outside `[0, t_f]` the function is continued by its endpoint values, which
/// corresponds to holding the trap at `ω₀` before and `ω_f` after the stroke.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFunction {
    pub coefficients: [f64; 7],
    pub duration: f64,
    pub omega0: f64,
}

impl ScalingFunction {
    /// `b(t) ≡ 1` over `duration`.
    pub fn identity(omega0: f64, duration: f64) -> Self {
        let mut coefficients = [0.0; 7];
        coefficients[0] = 1.0;
        Self {
            coefficients,
            duration,
            omega0,
        }
    }

    /// Value and first three derivatives with respect to `s = t/t_f`.
    fn eval_s(&self, s: f64) -> [f64; 4] {
        [0, 1, 2, 3].map(|k| self.derivative_s(k, s))
    }

    /// Horner evaluation of the `order`-th derivative polynomial.
    fn derivative_s(&self, order: usize, s: f64) -> f64 {
        let a = &self.coefficients;
        let mut acc = 0.0;
        for n in (order..7).rev() {
            let mut fall = 1.0;
            for j in 0..order {
                fall *= (n - j) as f64;
            }
            acc = acc * s + fall * a[n];
        }
        acc
    }

    pub fn final_value(&self) -> f64 {
        self.coefficients.iter().sum()
    }

    /// Minimum of `b` on a dense sample of `[0, t_f]`, with its location.
    pub fn sampled_minimum(&self) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..POSITIVITY_SAMPLES {
            let s = k as f64 / (POSITIVITY_SAMPLES - 1) as f64;
            let v = self.eval_s(s)[0];
            if v < best.0 {
                best = (v, s * self.duration);
            }
        }
        best
    }

    pub fn check_positive(&self) -> Result<()> {
        let (value, time) = self.sampled_minimum();
        if !(value > 0.0) {
            return Err(Error::NonPositiveScaling { time, value });
        }
        Ok(())
    }
}

impl Scaling for ScalingFunction {
    fn point(&self, t: f64) -> ScalingPoint {
        let tf = self.duration;
        if t <= 0.0 {
            return ScalingPoint {
                b: self.coefficients[0],
                ..ScalingPoint::IDENTITY
            };
        }
        if t >= tf {
            return ScalingPoint {
                b: self.final_value(),
                ..ScalingPoint::IDENTITY
            };
        }
        let d = self.eval_s(t / tf);
        ScalingPoint {
            b: d[0],
            bdot: d[1] / tf,
            bddot: d[2] / (tf * tf),
            bdddot: d[3] / (tf * tf * tf),
        }
    }

    fn duration(&self) -> f64 {
        self.duration
    }

    fn omega0(&self) -> f64 {
        self.omega0
    }
}

/// Build the sixth-order scaling function meeting
/// `b(0)=1, ḃ(0)=b̈(0)=0, b(t_f)=√(ω₀/ω_f), ḃ(t_f)=b̈(t_f)=0` for the given `a₆`.
pub fn solve_boundary_coefficients(
    params: &ModelParams,
    duration: f64,
    a6: f64,
) -> Result<ScalingFunction> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::Domain(format!(
            "protocol duration must be positive, got {duration}"
        )));
    }
    let bf = (params.omega0 / params.omegaf).sqrt();
    let m = Matrix3::new(1.0, 1.0, 1.0, 3.0, 4.0, 5.0, 6.0, 12.0, 20.0);
    let rhs = Vector3::new(bf - 1.0 - a6, -6.0 * a6, -30.0 * a6);
    let x = m
        .lu()
        .solve(&rhs)
        .expect("endpoint system has determinant 2");
    let b = ScalingFunction {
        coefficients: [1.0, 0.0, 0.0, x[0], x[1], x[2], a6],
        duration,
        omega0: params.omega0,
    };
    b.check_positive()?;
    Ok(b)
}

/// Which family a frequency profile belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Ste,
    Quench,
    Ramp,
    Static,
    Custom,
}

/// Natural cubic spline through `(t, y)` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    t: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = t.len();
        if n < 2 || y.len() != n {
            return Err(Error::Config(
                "custom profile needs at least two (t, omega^2) samples of equal length".into(),
            ));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "custom profile times must be strictly increasing and values finite".into(),
            ));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm for the natural-spline moment equations.
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = t[i] - t[i - 1];
                let h1 = t[i + 1] - t[i];
                let rhs = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
                let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
                c[i] = h1 / diag;
                d[i] = (rhs - h0 * d[i - 1]) / diag;
            }
            for i in (1..n - 1).rev() {
                m[i] = d[i] - c[i] * m[i + 1];
            }
        }
        Ok(Self { t, y, m })
    }

    fn locate(&self, x: f64) -> usize {
        match self
            .t
            .binary_search_by(|v| v.partial_cmp(&x).expect("finite"))
        {
            Ok(i) => i.min(self.t.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.t.len() - 2),
        }
    }

    /// Value and first derivative; clamped to the end values outside the knots.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let n = self.t.len();
        if x <= self.t[0] {
            return (self.y[0], 0.0);
        }
        if x >= self.t[n - 1] {
            return (self.y[n - 1], 0.0);
        }
        let i = self.locate(x);
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - x) / h;
        let b = (x - self.t[i]) / h;
        let v = a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0;
        let dv = (self.y[i + 1] - self.y[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0;
        (v, dv)
    }

    pub fn knots(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }
}

/// Squared trap frequency as a function of time.
#[derive(Debug, Clone, PartialEq)]
pub enum FrequencyProfile {
    /// Reverse engineered from a scaling function.
    Ste(ScalingFunction),
    /// `ω(t > 0) = ω_f`.
    Quench { omega0: f64, omegaf: f64, duration: f64 },
    /// `ω₀ + Δω (10s³ - 15s⁴ + 6s⁵)`.
    Ramp { omega0: f64, omegaf: f64, duration: f64 },
    /// Constant frequency.
    Static { omega: f64, duration: f64 },
    /// Tabulated `ω²` with cubic interpolation.
    Custom { spline: CubicSpline, duration: f64 },
}

fn ramp_shape(s: f64) -> (f64, f64) {
    let s = s.clamp(0.0, 1.0);
    let p = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    let dp = 30.0 * s * s * (1.0 - s) * (1.0 - s);
    (p, dp)
}

impl FrequencyProfile {
    pub fn kind(&self) -> ProfileKind {
        match self {
            Self::Ste(_) => ProfileKind::Ste,
            Self::Quench { .. } => ProfileKind::Quench,
            Self::Ramp { .. } => ProfileKind::Ramp,
            Self::Static { .. } => ProfileKind::Static,
            Self::Custom { .. } => ProfileKind::Custom,
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            Self::Ste(b) => b.duration,
            Self::Quench { duration, .. }
            | Self::Ramp { duration, .. }
            | Self::Static { duration, .. }
            | Self::Custom { duration, .. } => *duration,
        }
    }

    /// Same profile with a different nominal duration. Only meaningful for
    /// families whose shape does not depend on it (quench, static).
    pub fn with_duration(&self, duration: f64) -> Self {
        let mut p = self.clone();
        match &mut p {
            Self::Ste(b) => b.duration = duration,
            Self::Quench { duration: d, .. }
            | Self::Ramp { duration: d, .. }
            | Self::Static { duration: d, .. }
            | Self::Custom { duration: d, .. } => *d = duration,
        }
        p
    }

    /// `ω²(t)` and `d(ω²)/dt`.
    pub fn omega_sq_with_rate(&self, t: f64) -> (f64, f64) {
        match self {
            Self::Ste(b) => {
                let p = b.point(t);
                let w0sq = b.omega0 * b.omega0;
                let w2 = w0sq / p.b.powi(4) - p.bddot / p.b;
                let dw2 = -4.0 * w0sq * p.bdot / p.b.powi(5)
                    - (p.bdddot * p.b - p.bddot * p.bdot) / (p.b * p.b);
                (w2, dw2)
            }
            Self::Quench { omega0, omegaf, .. } => {
                if t > 0.0 {
                    (omegaf * omegaf, 0.0)
                } else {
                    (omega0 * omega0, 0.0)
                }
            }
            Self::Ramp {
                omega0,
                omegaf,
                duration,
            } => {
                let (p, dp) = ramp_shape(t / duration);
                let dw = omegaf - omega0;
                let w = omega0 + dw * p;
                let wdot = if t > 0.0 && t < *duration {
                    dw * dp / duration
                } else {
                    0.0
                };
                (w * w, 2.0 * w * wdot)
            }
            Self::Static { omega, .. } => (omega * omega, 0.0),
            Self::Custom { spline, .. } => spline.eval(t),
        }
    }

    pub fn omega_sq(&self, t: f64) -> f64 {
        self.omega_sq_with_rate(t).0
    }

    /// Signed frequency `sign(ω²)·√|ω²|`; negative values flag an expulsive trap.
    pub fn omega(&self, t: f64) -> f64 {
        let w2 = self.omega_sq(t);
        w2.signum() * w2.abs().sqrt()
    }

    /// Largest `|ω|` over the protocol, on `samples` uniform points.
    pub fn max_omega(&self, samples: usize) -> f64 {
        let tf = self.duration();
        (0..samples)
            .map(|k| {
                let t = tf * k as f64 / (samples - 1).max(1) as f64;
                self.omega_sq(t).abs().sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Output of [`reverse_frequency`].
#[derive(Debug, Clone)]
pub struct ReversedProfile {
    pub profile: FrequencyProfile,
    pub min_omega_sq: f64,
    /// Set when the trap becomes expulsive (`ω² < 0`) somewhere.
    pub negative_omega_sq: bool,
}

pub fn reverse_frequency(b: &ScalingFunction) -> Result<ReversedProfile> {
    b.check_positive()?;
    let profile = FrequencyProfile::Ste(b.clone());
    let mut min_omega_sq = f64::INFINITY;
    for k in 0..POSITIVITY_SAMPLES {
        let t = b.duration * k as f64 / (POSITIVITY_SAMPLES - 1) as f64;
        min_omega_sq = min_omega_sq.min(profile.omega_sq(t));
    }
    Ok(ReversedProfile {
        profile,
        min_omega_sq,
        negative_omega_sq: min_omega_sq < 0.0,
    })
}

/// Numerical solution of the Ermakov equation for a prescribed `ω²(t)`.
#[derive(Debug, Clone)]
pub struct ErmakovSolution {
    solution: DenseSolution,
    profile: FrequencyProfile,
    omega0: f64,
}

impl ErmakovSolution {
    pub fn profile(&self) -> &FrequencyProfile {
        &self.profile
    }

    pub fn steps(&self) -> usize {
        self.solution.steps()
    }

    /// `b̈ + ω² b - ω₀²/b³` at `t`.
    pub fn residual(&self, t: f64) -> f64 {
        let p = self.point(t);
        p.bddot + self.profile.omega_sq(t) * p.b - self.omega0.powi(2) / p.b.powi(3)
    }
}

impl Scaling for ErmakovSolution {
    fn point(&self, t: f64) -> ScalingPoint {
        let y = self.solution.eval(t);
        let (b, bdot) = (y[0], y[1]);
        let (w2, dw2) = self.profile.omega_sq_with_rate(t);
        let w0sq = self.omega0 * self.omega0;
        let bddot = w0sq / b.powi(3) - w2 * b;
        let bdddot = -3.0 * w0sq * bdot / b.powi(4) - dw2 * b - w2 * bdot;
        ScalingPoint {
            b,
            bdot,
            bddot,
            bdddot,
        }
    }

    fn duration(&self) -> f64 {
        self.solution.t_end()
    }

    fn omega0(&self) -> f64 {
        self.omega0
    }
}

/// Integrate `b̈ = ω₀²/b³ - ω²(t) b` from `(b0, ḃ0)` over the profile duration.
pub fn forward_ermakov(
    profile: &FrequencyProfile,
    omega0: f64,
    b0: f64,
    bdot0: f64,
    tol: Tolerances,
) -> Result<ErmakovSolution> {
    if !(b0 > 0.0) {
        return Err(Error::Domain(format!("initial b must be positive, got {b0}")));
    }
    let w0sq = omega0 * omega0;
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = y[1];
        dy[1] = w0sq / (y[0] * y[0] * y[0]) - profile.omega_sq(t) * y[0];
    };
    let check = |t: f64, y: &[f64]| {
        if y[0] > 0.0 {
            Ok(())
        } else {
            Err(Error::NonPositiveScaling { time: t, value: y[0] })
        }
    };
    let solution = Dopri5::new(tol).solve(rhs, 0.0, &[b0, bdot0], profile.duration(), check)?;
    Ok(ErmakovSolution {
        solution,
        profile: profile.clone(),
        omega0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn compression() -> ModelParams {
        ModelParams::compression()
    }

    /// Boundary values by direct power-sum evaluation, independent of Horner.
    fn endpoint_values(b: &ScalingFunction, s: f64) -> [f64; 3] {
        let a = &b.coefficients;
        let tf = b.duration;
        let mut v = [0.0; 3];
        for n in 0..7 {
            let nf = n as f64;
            v[0] += a[n] * s.powi(n as i32);
            if n >= 1 {
                v[1] += a[n] * nf * s.powi(n as i32 - 1) / tf;
            }
            if n >= 2 {
                v[2] += a[n] * nf * (nf - 1.0) * s.powi(n as i32 - 2) / (tf * tf);
            }
        }
        v
    }

    #[test]
    fn boundary_conditions_hold() {
        for &(tf, a6) in &[(16.0, 0.0), (16.0, 1.0), (3.0, -2.5), (30.0, 7.0)] {
            let b = solve_boundary_coefficients(&compression(), tf, a6).unwrap();
            let start = endpoint_values(&b, 0.0);
            let end = endpoint_values(&b, 1.0);
            assert!((start[0] - 1.0).abs() < 1e-10);
            assert!(start[1].abs() < 1e-10 && start[2].abs() < 1e-10);
            assert!((end[0] - 1.0 / 3f64.sqrt()).abs() < 1e-10);
            assert!(end[1].abs() < 1e-10 && end[2].abs() < 1e-10, "{end:?}");
        }
    }

    #[test]
    fn horner_matches_power_sum() {
        let b = solve_boundary_coefficients(&compression(), 16.0, 1.0).unwrap();
        for k in 1..20 {
            let s = k as f64 / 20.0;
            let direct = endpoint_values(&b, s);
            let p = b.point(s * 16.0);
            assert!((p.b - direct[0]).abs() < 1e-13);
            assert!((p.bdot - direct[1]).abs() < 1e-13);
            assert!((p.bddot - direct[2]).abs() < 1e-13);
        }
        // third derivative against a central difference of the second
        let h = 1e-4;
        let t = 7.3;
        let fd = (b.point(t + h).bddot - b.point(t - h).bddot) / (2.0 * h);
        assert!((b.point(t).bdddot - fd).abs() < 1e-8);
    }

    #[test]
    fn identity_protocol() {
        let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        let b = solve_boundary_coefficients(&p, 10.0, 0.0).unwrap();
        assert_eq!(b.coefficients[0], 1.0);
        assert!(b.coefficients[1..].iter().all(|a| a.abs() < 1e-15));
        let rev = reverse_frequency(&b).unwrap();
        for k in 0..=10 {
            assert!((rev.profile.omega_sq(k as f64) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn final_value_for_compression() {
        let b = solve_boundary_coefficients(&compression(), 5.0, 0.0).unwrap();
        assert!((b.final_value() - 0.577350).abs() < 1e-6);
        assert!((b.point(5.0).b - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_scaling_gives_constant_frequency() {
        let c = 1.3;
        let mut b = ScalingFunction::identity(1.0, 4.0);
        b.coefficients[0] = c;
        let rev = reverse_frequency(&b).unwrap();
        assert!((rev.profile.omega_sq(2.0) - 1.0 / c.powi(4)).abs() < 1e-14);
    }

    #[test]
    fn positivity_violation_is_an_error() {
        let res = solve_boundary_coefficients(&compression(), 4.0, 400.0);
        assert!(matches!(res, Err(Error::NonPositiveScaling { .. })));
    }

    #[test]
    fn reversed_endpoints_recover_trap_frequencies() {
        let b = solve_boundary_coefficients(&compression(), 16.0, 0.0).unwrap();
        let rev = reverse_frequency(&b).unwrap();
        assert!((rev.profile.omega_sq(0.0) - 1.0).abs() < 1e-10);
        assert!((rev.profile.omega_sq(16.0) - 9.0).abs() < 1e-8);
        // analytic derivative of ω² against a central difference
        let h = 1e-5;
        let t = 5.5;
        let fd = (rev.profile.omega_sq(t + h) - rev.profile.omega_sq(t - h)) / (2.0 * h);
        assert!((rev.profile.omega_sq_with_rate(t).1 - fd).abs() < 1e-6);
    }

    #[test]
    fn static_fixed_point() {
        let profile = FrequencyProfile::Static {
            omega: 1.0,
            duration: 20.0,
        };
        let sol = forward_ermakov(&profile, 1.0, 1.0, 0.0, Tolerances::new(1e-10, 1e-12)).unwrap();
        for k in 0..=20 {
            assert!((sol.point(k as f64).b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quench_closed_form() {
        let (w0, wf) = (1.0, 3.0);
        let profile = FrequencyProfile::Quench {
            omega0: w0,
            omegaf: wf,
            duration: 16.0,
        };
        let sol = forward_ermakov(&profile, w0, 1.0, 0.0, Tolerances::new(1e-12, 1e-14)).unwrap();
        let mut max_err: f64 = 0.0;
        for k in 0..=10_000 {
            let t = 16.0 * k as f64 / 10_000.0;
            let exact = (wf * t).cos().powi(2) + (w0 / wf).powi(2) * (wf * t).sin().powi(2);
            max_err = max_err.max((sol.point(t).b.powi(2) - exact).abs());
        }
        assert!(max_err < 1e-8, "max error {max_err}");
    }

    #[test]
    fn expulsive_trap_crossing_zero_is_reported() {
        let profile = FrequencyProfile::Static {
            omega: 0.0,
            duration: 50.0,
        };
        // ω₀ = 1 in the Ermakov term with a collapsing start
        let res = forward_ermakov(&profile, 0.0, 1.0, -1.0, Tolerances::default());
        assert!(matches!(res, Err(Error::NonPositiveScaling { .. })));
    }

    #[test]
    fn spline_reproduces_cubic_interior() {
        let t: Vec<f64> = (0..=40).map(|k| k as f64 * 0.25).collect();
        let y: Vec<f64> = t.iter().map(|x| (0.3 * x).sin() + 2.0).collect();
        let s = CubicSpline::new(t, y).unwrap();
        for k in 1..80 {
            let x = 1.0 + k as f64 * 0.1;
            if x > 9.0 {
                break;
            }
            let (v, dv) = s.eval(x);
            assert!((v - ((0.3 * x).sin() + 2.0)).abs() < 1e-4);
            assert!((dv - 0.3 * (0.3 * x).cos()).abs() < 1e-3);
        }
        assert!(CubicSpline::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn ramp_shape_endpoints() {
        let p = FrequencyProfile::Ramp {
            omega0: 1.0,
            omegaf: 3.0,
            duration: 10.0,
        };
        assert!((p.omega(0.0) - 1.0).abs() < 1e-15);
        assert!((p.omega(10.0) - 3.0).abs() < 1e-15);
        assert!((p.omega(5.0) - 2.0).abs() < 1e-15);
        assert_eq!(p.omega_sq_with_rate(0.0).1, 0.0);
        assert_eq!(p.omega_sq_with_rate(10.0).1, 0.0);
    }
}
