//! Exact Gaussian dynamics of the oscillator plus a discretized bath.
//!
//! Quadratures are dimensionless and defined at the fixed frequency `ω₀`,
//! `R = (X, P, X₁, P₁, …)`, so that `H = ½ Rᵀ M(t) R` with system block
//! `diag(ω²/ω₀, ω₀)`, bath blocks `ω_n I₂` and couplings `g_n (X X_n + P P_n)`.
//! Covariances follow `σᵢⱼ = ½⟨{Rᵢ, Rⱼ}⟩`; the vacuum is `½ I`.
//!
//! Two propagators are provided. [`evolve_exact`] integrates the full
//! covariance `σ̇ = Aσ + σAᵀ`, `A = ΩM`, at `O(N²)` per step. The
//! [`ExactBenchmark`] only needs the reduced state at given times and
//! propagates the two system rows of the propagator backwards,
//! `dr/ds = -r A(s)`, at `O(N)` per step. For a product thermal initial state
//! the reduced covariance is then `Σ_k (n_k + ½)(r_X r_Xᵀ + r_P r_Pᵀ)_k`.

use nalgebra::{DMatrix, Matrix2};
use serde::Serialize;
use std::io::Write;
use std::path::Path;

use crate::ermakov::{FrequencyProfile, Scaling, ScalingPoint};
use crate::error::{Error, Result};
use crate::master::d_coefficients;
use crate::model::{discretize_bath, planck_occupation, BathModes, BathSpec, ModelParams};
use crate::ode::{rk4_step, Rk4Work};
use num_complex::Complex64;

pub type SystemCovariance = Matrix2<f64>;

/// Default fixed step of the exact propagators.
pub const DEFAULT_DT: f64 = 1e-3;

/// Tolerance below `¼` accepted for `det σ_S` before a run is rejected.
pub const PHYSICALITY_TOL: f64 = 1e-6;

/// Full covariance of system plus bath.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState {
    pub matrix: DMatrix<f64>,
    pub time: f64,
}

impl CovarianceState {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.dim() / 2 - 1
    }

    pub fn symmetry_error(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    /// Write the matrix as raw little-endian `f64` (row-major) after a single
    /// JSON header line.
    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Header {
            format: &'static str,
            dim: usize,
            time: f64,
            order: &'static str,
            dtype: &'static str,
            quadratures: &'static str,
        }
        let header = Header {
            format: "ste-covariance-v1",
            dim: self.dim(),
            time: self.time,
            order: "row-major",
            dtype: "f64-le",
            quadratures: "X,P,X1,P1,...",
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut f, &header)?;
        f.write_all(b"\n")?;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                f.write_all(&self.matrix[(i, j)].to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let nl = bytes
            .iter()
            .position(|&c| c == b'\n')
            .ok_or_else(|| Error::Config("checkpoint header missing".into()))?;
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nl])?;
        let dim = header["dim"]
            .as_u64()
            .ok_or_else(|| Error::Config("checkpoint header lacks dim".into()))?
            as usize;
        let time = header["time"].as_f64().unwrap_or(0.0);
        let body = &bytes[nl + 1..];
        if body.len() != dim * dim * 8 {
            return Err(Error::Config(format!(
                "checkpoint body has {} bytes, expected {}",
                body.len(),
                dim * dim * 8
            )));
        }
        let data: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            matrix: DMatrix::from_row_slice(dim, dim, &data),
            time,
        })
    }
}

/// Sparse generator `A = ΩM` of the linear Heisenberg equations.
#[derive(Debug, Clone)]
pub struct QuadraticGenerator {
    pub omega0: f64,
    pub modes: BathModes,
}

impl QuadraticGenerator {
    pub fn new(omega0: f64, modes: BathModes) -> Self {
        Self { omega0, modes }
    }

    pub fn dim(&self) -> usize {
        2 * self.modes.len() + 2
    }

    /// Dense `M` for a given `ω²`.
    pub fn hamiltonian_matrix(&self, omega_sq: f64) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        m[(0, 0)] = omega_sq / self.omega0;
        m[(1, 1)] = self.omega0;
        for (n, (&w, &g)) in self.modes.frequencies.iter().zip(&self.modes.couplings).enumerate() {
            let (x, p) = (2 + 2 * n, 3 + 2 * n);
            m[(x, x)] = w;
            m[(p, p)] = w;
            m[(0, x)] = g;
            m[(x, 0)] = g;
            m[(1, p)] = g;
            m[(p, 1)] = g;
        }
        m
    }

    /// Dense `A = ΩM`.
    pub fn drift_matrix(&self, omega_sq: f64) -> DMatrix<f64> {
        let m = self.hamiltonian_matrix(omega_sq);
        let d = self.dim();
        let mut a = DMatrix::zeros(d, d);
        for k in 0..d / 2 {
            for j in 0..d {
                a[(2 * k, j)] = m[(2 * k + 1, j)];
                a[(2 * k + 1, j)] = -m[(2 * k, j)];
            }
        }
        a
    }

    /// `out = r A` for a row vector `r`.
    pub fn apply_left(&self, r: &[f64], omega_sq: f64, out: &mut [f64]) {
        let w0 = self.omega0;
        let (rx, rp) = (r[0], r[1]);
        let mut ox = -rp * omega_sq / w0;
        let mut op = rx * w0;
        for (n, (&w, &g)) in self.modes.frequencies.iter().zip(&self.modes.couplings).enumerate() {
            let (x, p) = (2 + 2 * n, 3 + 2 * n);
            let (rxn, rpn) = (r[x], r[p]);
            ox -= rpn * g;
            op += rxn * g;
            out[x] = -rp * g - rpn * w;
            out[p] = rx * g + rxn * w;
        }
        out[0] = ox;
        out[1] = op;
    }

    /// `out = Aσ + (Aσ)ᵀ` for a row-major `σ`.
    pub fn apply_lyapunov(&self, sigma: &[f64], omega_sq: f64, out: &mut [f64]) {
        let d = self.dim();
        let w0 = self.omega0;
        let row = |i: usize| &sigma[i * d..(i + 1) * d];
        // out holds Aσ first
        {
            let (head, tail) = out.split_at_mut(2 * d);
            let (kx, kp) = head.split_at_mut(d);
            for j in 0..d {
                kx[j] = w0 * row(1)[j];
                kp[j] = -omega_sq / w0 * row(0)[j];
            }
            for (n, (&w, &g)) in self.modes.frequencies.iter().zip(&self.modes.couplings).enumerate() {
                let (x, p) = (2 + 2 * n, 3 + 2 * n);
                let (sx, sp) = (row(x), row(p));
                for j in 0..d {
                    kx[j] += g * sp[j];
                    kp[j] -= g * sx[j];
                }
                let o = &mut tail[(x - 2) * d..(x - 1) * d];
                for j in 0..d {
                    o[j] = w * sp[j] + g * row(1)[j];
                }
                let o = &mut tail[(p - 2) * d..(p - 1) * d];
                for j in 0..d {
                    o[j] = -w * sx[j] - g * row(0)[j];
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                let s = out[i * d + j] + out[j * d + i];
                out[i * d + j] = s;
                out[j * d + i] = s;
            }
        }
    }

    /// `½ Tr(Mσ)`.
    pub fn energy(&self, sigma: &DMatrix<f64>, omega_sq: f64) -> f64 {
        let mut e = omega_sq / self.omega0 * sigma[(0, 0)] + self.omega0 * sigma[(1, 1)];
        for (n, (&w, &g)) in self.modes.frequencies.iter().zip(&self.modes.couplings).enumerate() {
            let (x, p) = (2 + 2 * n, 3 + 2 * n);
            e += w * (sigma[(x, x)] + sigma[(p, p)]);
            e += 2.0 * g * (sigma[(0, x)] + sigma[(1, p)]);
        }
        0.5 * e
    }
}

/// `ω²` seen by the propagators. The quench switches at `0⁺`, so the
/// dynamics uses `ω_f` on the closed interval.
pub fn dynamical_omega_sq(profile: &FrequencyProfile, t: f64) -> f64 {
    match profile {
        FrequencyProfile::Quench { omegaf, .. } => omegaf * omegaf,
        p => p.omega_sq(t),
    }
}

/// Fixed step limited to `0.1/max ω` over `[0, t]`.
pub fn stable_step(profile: &FrequencyProfile, t: f64, dt: f64) -> f64 {
    let n = 4001;
    let wmax = (0..n)
        .map(|k| dynamical_omega_sq(profile, t * k as f64 / (n - 1) as f64).abs().sqrt())
        .fold(0.0, f64::max);
    if wmax > 0.0 {
        dt.min(0.1 / wmax)
    } else {
        dt
    }
}

/// `n_k + ½` for the system (index 0) and every bath mode.
pub fn thermal_weights(params: &ModelParams, modes: &BathModes) -> Result<Vec<f64>> {
    let mut w = Vec::with_capacity(modes.len() + 1);
    w.push(planck_occupation(params.omega0, params.temperature)? + 0.5);
    for &f in &modes.frequencies {
        w.push(planck_occupation(f, params.temperature)? + 0.5);
    }
    Ok(w)
}

/// Product Gibbs state of system and bath.
pub fn initial_covariance(params: &ModelParams, modes: &BathModes) -> Result<CovarianceState> {
    let w = thermal_weights(params, modes)?;
    let d = 2 * w.len();
    let mut m = DMatrix::zeros(d, d);
    for (k, &v) in w.iter().enumerate() {
        m[(2 * k, 2 * k)] = v;
        m[(2 * k + 1, 2 * k + 1)] = v;
    }
    Ok(CovarianceState { matrix: m, time: 0.0 })
}

/// Thermal state of `H = ½(ω²/ω₀ X² + ω₀ P²)` with occupation `n`.
pub fn thermal_covariance(n: f64, omega: f64, omega0: f64) -> SystemCovariance {
    let v = n + 0.5;
    Matrix2::new(v * omega0 / omega, 0.0, 0.0, v * omega / omega0)
}

/// Gibbs state at `ω_f`.
pub fn target_covariance(params: &ModelParams) -> Result<SystemCovariance> {
    let n = planck_occupation(params.omegaf, params.temperature)?;
    Ok(thermal_covariance(n, params.omegaf, params.omega0))
}

/// Squeezed thermal state `S(r, θ) ν S(r, θ)†` at the reference frequency.
pub fn squeezed_thermal_covariance(n: f64, r: f64, theta: f64) -> SystemCovariance {
    let v = n + 0.5;
    let (c, s) = ((2.0 * r).cosh(), (2.0 * r).sinh());
    let (ct, st) = (theta.cos(), theta.sin());
    Matrix2::new(v * (c - s * ct), -v * s * st, -v * s * st, v * (c + s * ct))
}

/// Covariance of a state with invariant moments `⟨c†c⟩ = n` and
/// `⟨c²⟩ = m` (Schrödinger picture) for the scaling point `p`.
pub fn invariant_state_covariance(
    n: f64,
    m: Complex64,
    p: &ScalingPoint,
    omega0: f64,
) -> SystemCovariance {
    let (d1, d2) = d_coefficients(p.b, p.bdot, omega0);
    let alpha = 0.5 * d1;
    let beta = 0.5 * d2.conj();
    let u = alpha + beta.conj();
    let v = -Complex64::i() * (alpha - beta.conj());
    let v0 = n + 0.5;
    let c = |x: Complex64, y: Complex64| (x * y * m).re + (x * y.conj()).re * v0;
    let xp = c(u, v);
    Matrix2::new(c(u, u), xp, xp, c(v, v))
}

pub fn reduce_system(state: &CovarianceState) -> SystemCovariance {
    state.matrix.fixed_view::<2, 2>(0, 0).into_owned()
}

pub fn symplectic_eigenvalue(s: &SystemCovariance) -> f64 {
    s.determinant().max(0.0).sqrt()
}

pub fn purity(s: &SystemCovariance) -> f64 {
    0.5 / symplectic_eigenvalue(s)
}

fn check_physical(s: &SystemCovariance, tol: f64) -> Result<()> {
    let det = s.determinant();
    let sym = (s[(0, 1)] - s[(1, 0)]).abs();
    if !(det >= 0.25 - tol) || s[(0, 0)] <= 0.0 || s[(1, 1)] <= 0.0 || sym > 1e-10 {
        return Err(Error::Unphysical(format!(
            "covariance [[{}, {}], [{}, {}]] has det {det}",
            s[(0, 0)],
            s[(0, 1)],
            s[(1, 0)],
            s[(1, 1)]
        )));
    }
    Ok(())
}

/// Uhlmann fidelity of two zero-mean single-mode Gaussian states,
/// `1 / (√(Δ + Λ) − √Λ)` with `Δ = det(σ₁+σ₂)` and
/// `Λ = 4(det σ₁ − ¼)(det σ₂ − ¼)`.
pub fn gaussian_fidelity(a: &SystemCovariance, b: &SystemCovariance) -> Result<f64> {
    check_physical(a, 1e-9)?;
    check_physical(b, 1e-9)?;
    let delta = (a + b).determinant();
    let lam = 4.0 * (a.determinant() - 0.25).max(0.0) * (b.determinant() - 0.25).max(0.0);
    let f = 1.0 / ((delta + lam).sqrt() - lam.sqrt());
    Ok(f.clamp(0.0, 1.0))
}

pub fn gaussian_entropy(s: &SystemCovariance) -> Result<f64> {
    check_physical(s, 1e-9)?;
    let nu = symplectic_eigenvalue(s);
    let (p, m) = (nu + 0.5, nu - 0.5);
    if m <= 1e-300 {
        return Ok(0.0);
    }
    Ok(p * p.ln() - m * m.ln())
}

/// Output of [`evolve_exact`].
#[derive(Debug, Clone)]
pub struct ExactTrajectory {
    pub times: Vec<f64>,
    pub system: Vec<SystemCovariance>,
    /// Full state at each requested checkpoint time.
    pub checkpoints: Vec<CovarianceState>,
    pub final_state: CovarianceState,
    pub steps: usize,
}

/// Full-covariance RK4 propagation. Samples the reduced block every
/// `sample_every` steps and stores full checkpoints at the given times.
pub fn evolve_exact(
    profile: &FrequencyProfile,
    generator: &QuadraticGenerator,
    sigma0: &CovarianceState,
    duration: f64,
    dt: f64,
    sample_every: usize,
    checkpoint_times: &[f64],
) -> Result<ExactTrajectory> {
    let d = generator.dim();
    if sigma0.dim() != d {
        return Err(Error::Config(format!(
            "initial covariance has dimension {}, generator needs {d}",
            sigma0.dim()
        )));
    }
    if !(dt > 0.0 && duration >= 0.0) {
        return Err(Error::Config(format!("bad step {dt} or duration {duration}")));
    }
    let dt = stable_step(profile, duration, dt);
    let steps = (duration / dt).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let mut y: Vec<f64> = sigma0.matrix.transpose().as_slice().to_vec();
    let mut work = Rk4Work::new(d * d);
    let mut f = |t: f64, s: &[f64], out: &mut [f64]| {
        generator.apply_lyapunov(s, dynamical_omega_sq(profile, t), out)
    };
    let block = |y: &[f64]| Matrix2::new(y[0], y[1], y[d], y[d + 1]);
    let every = sample_every.max(1);
    let mut times = vec![sigma0.time];
    let mut system = vec![block(&y)];
    let mut checkpoints = Vec::new();
    let mut pending: Vec<f64> = checkpoint_times.to_vec();
    pending.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut pending = pending.into_iter().peekable();
    let to_state = |y: &[f64], t: f64| CovarianceState {
        matrix: DMatrix::from_row_slice(d, d, y),
        time: t,
    };
    while let Some(&c) = pending.peek() {
        if c > 0.0 {
            break;
        }
        checkpoints.push(to_state(&y, 0.0));
        pending.next();
    }
    for k in 0..steps {
        let t = k as f64 * h;
        rk4_step(&mut f, t, h, &mut y, &mut work);
        let t1 = (k + 1) as f64 * h;
        if (k + 1) % every == 0 || k + 1 == steps {
            let s = block(&y);
            check_physical(&s, PHYSICALITY_TOL)
                .map_err(|e| Error::Integration(format!("at t = {t1}: {e}")))?;
            times.push(t1);
            system.push(s);
        }
        while let Some(&c) = pending.peek() {
            if c > t1 + 0.5 * h {
                break;
            }
            checkpoints.push(to_state(&y, t1));
            pending.next();
        }
    }
    Ok(ExactTrajectory {
        times,
        system,
        checkpoints,
        final_state: to_state(&y, duration),
        steps,
    })
}

/// Reduced-state evaluator for the exact dynamics from a product Gibbs state.
#[derive(Debug, Clone)]
pub struct ExactBenchmark {
    pub params: ModelParams,
    pub bath: BathSpec,
    pub generator: QuadraticGenerator,
    weights: Vec<f64>,
    pub dt: f64,
}

/// Final reduced state with its step-convergence check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExactRun {
    pub time: f64,
    pub covariance: [[f64; 2]; 2],
    pub fidelity: f64,
    pub dt: f64,
    /// Fidelity at `dt/2`.
    pub fidelity_half_step: f64,
    /// Largest change of a covariance entry between `dt` and `dt/2`.
    pub covariance_change: f64,
}

impl ExactRun {
    pub fn fidelity_change(&self) -> f64 {
        (self.fidelity - self.fidelity_half_step).abs()
    }
}

fn to_array(s: &SystemCovariance) -> [[f64; 2]; 2] {
    [[s[(0, 0)], s[(0, 1)]], [s[(1, 0)], s[(1, 1)]]]
}

impl ExactBenchmark {
    pub fn new(params: &ModelParams, bath: &BathSpec) -> Result<Self> {
        params.validate()?;
        bath.validate(params.omega0)?;
        let modes = discretize_bath(bath);
        Ok(Self::with_modes(params, bath, modes))
    }

    /// Benchmark with an explicit set of modes (e.g. decoupled).
    pub fn with_modes(params: &ModelParams, bath: &BathSpec, modes: BathModes) -> Self {
        let weights = thermal_weights(params, &modes).expect("validated params");
        Self {
            params: *params,
            bath: *bath,
            generator: QuadraticGenerator::new(params.omega0, modes),
            weights,
            dt: DEFAULT_DT,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    /// Reduced covariance at time `t` under `profile`.
    pub fn covariance_at(&self, profile: &FrequencyProfile, t: f64) -> Result<SystemCovariance> {
        self.covariance_with_step(profile, t, self.dt)
    }

    fn covariance_with_step(
        &self,
        profile: &FrequencyProfile,
        t: f64,
        dt: f64,
    ) -> Result<SystemCovariance> {
        self.bath.check_duration(t)?;
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        let d = self.generator.dim();
        let mut y = vec![0.0; 2 * d];
        y[0] = 1.0;
        y[d + 1] = 1.0;
        if t > 0.0 {
            let dt = stable_step(profile, t, dt);
            let steps = (t / dt).ceil() as usize;
            let h = t / steps as f64;
            let mut work = Rk4Work::new(2 * d);
            let gen = &self.generator;
            let mut f = |u: f64, r: &[f64], out: &mut [f64]| {
                let w2 = dynamical_omega_sq(profile, t - u);
                let (r1, r2) = r.split_at(d);
                let (o1, o2) = out.split_at_mut(d);
                gen.apply_left(r1, w2, o1);
                gen.apply_left(r2, w2, o2);
            };
            for k in 0..steps {
                rk4_step(&mut f, k as f64 * h, h, &mut y, &mut work);
            }
        }
        let (rx, rp) = y.split_at(d);
        let (mut sxx, mut sxp, mut spp) = (0.0, 0.0, 0.0);
        for (k, &w) in self.weights.iter().enumerate() {
            let (x, p) = (2 * k, 2 * k + 1);
            sxx += w * (rx[x] * rx[x] + rx[p] * rx[p]);
            sxp += w * (rx[x] * rp[x] + rx[p] * rp[p]);
            spp += w * (rp[x] * rp[x] + rp[p] * rp[p]);
        }
        let s = Matrix2::new(sxx, sxp, sxp, spp);
        check_physical(&s, PHYSICALITY_TOL)
            .map_err(|e| Error::Integration(format!("at t = {t}: {e}")))?;
        Ok(s)
    }

    /// Reduced covariance at every requested time.
    pub fn trajectory(
        &self,
        profile: &FrequencyProfile,
        times: &[f64],
    ) -> Result<Vec<SystemCovariance>> {
        times.iter().map(|&t| self.covariance_at(profile, t)).collect()
    }

    pub fn fidelity_at(&self, profile: &FrequencyProfile, t: f64) -> Result<f64> {
        let target = target_covariance(&self.params)?;
        gaussian_fidelity(&self.covariance_at(profile, t)?, &target)
    }

    /// Final state at `dt` and `dt/2`.
    pub fn converged_run(&self, profile: &FrequencyProfile, t: f64) -> Result<ExactRun> {
        let target = target_covariance(&self.params)?;
        let s1 = self.covariance_with_step(profile, t, self.dt)?;
        let s2 = self.covariance_with_step(profile, t, 0.5 * self.dt)?;
        Ok(ExactRun {
            time: t,
            covariance: to_array(&s1),
            fidelity: gaussian_fidelity(&s1, &target)?,
            dt: self.dt,
            fidelity_half_step: gaussian_fidelity(&s2, &target)?,
            covariance_change: (s1 - s2).amax(),
        })
    }
}

/// Master-equation reduced covariance from invariant moments at time `t`.
pub fn master_covariance<S: Scaling + ?Sized>(
    b: &S,
    t: f64,
    n: f64,
    squeeze_moment: Complex64,
) -> SystemCovariance {
    let p = b.point(t);
    let w0 = b.omega0();
    let phase = crate::master::dynamical_phase(b, t);
    let m = squeeze_moment * Complex64::from_polar(1.0, -2.0 * phase);
    invariant_state_covariance(n, m, &p, w0)
}
