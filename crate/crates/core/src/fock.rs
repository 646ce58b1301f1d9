//! Truncated Fock-space reference implementations.
//!
//! Operators live in the number basis of the oscillator at `ω₀`. Quadratic
//! operators are assembled as exact compressions of `a²`, `a†²` and
//! `a†a`, using `aa† = a†a + 1` rather than products of truncated matrices,
//! so the low part of every spectrum is free of truncation artifacts.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::ermakov::{FrequencyProfile, Scaling};
use crate::error::{Error, Result};
use crate::master::{bohr_frequency, d_coefficients, decay_rates, lamb_shift};
use crate::model::{BathSpec, ModelParams};
use crate::ode::{Dopri5, Tolerances};

pub type FockMatrix = DMatrix<Complex64>;
pub type FockVector = DVector<Complex64>;

/// Population allowed in the top level of a truncated state.
pub const BOUNDARY_TOL: f64 = 1e-8;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Truncated `a` and `a†` with `⟨n−1|a|n⟩ = √n`.
pub fn ladder_matrices(dim: usize) -> Result<(FockMatrix, FockMatrix)> {
    if dim < 2 {
        return Err(Error::Domain(format!("Fock dimension must be >= 2, got {dim}")));
    }
    let mut a = FockMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = c((n as f64).sqrt());
    }
    let ad = a.adjoint();
    Ok((a, ad))
}

pub fn number_operator(dim: usize) -> FockMatrix {
    FockMatrix::from_diagonal(&DVector::from_fn(dim, |n, _| c(n as f64)))
}

/// Compression of `α a² + β a†² + γ a†a + δ`.
pub fn quadratic_operator(
    alpha: Complex64,
    beta: Complex64,
    gamma: Complex64,
    delta: Complex64,
    dim: usize,
) -> FockMatrix {
    let mut m = FockMatrix::zeros(dim, dim);
    for n in 0..dim {
        m[(n, n)] = gamma * n as f64 + delta;
        if n + 2 < dim {
            let s = (((n + 1) * (n + 2)) as f64).sqrt();
            m[(n, n + 2)] = alpha * s;
            m[(n + 2, n)] = beta * s;
        }
    }
    m
}

/// `H_S = ½(ω²/ω₀ X² + ω₀ P²)` in units of `ħ`.
pub fn hamiltonian(omega_sq: f64, omega0: f64, dim: usize) -> FockMatrix {
    let (kx, kp) = (omega_sq / omega0, omega0);
    let off = c(0.25 * (kx - kp));
    quadratic_operator(off, off, c(0.5 * (kx + kp)), c(0.25 * (kx + kp)), dim)
}

/// Invariant `I = ½(b p − ḃ x)² + ½ ω₀² x²/b²` (`m = 1`).
pub fn invariant_matrix(b: f64, bdot: f64, params: &ModelParams, dim: usize) -> Result<FockMatrix> {
    if !(b > 0.0) {
        return Err(Error::Domain(format!("invariant needs b > 0, got {b}")));
    }
    let w0 = params.omega0;
    // b p − ḃ x = αP + βX with X, P at the reference frequency
    let alpha = b * w0.sqrt();
    let beta = -bdot / w0.sqrt();
    // ½[(α² P² + β² X² + αβ{X,P}) + (ω₀/b²) X²]
    let kx = beta * beta + w0 / (b * b);
    let kp = alpha * alpha;
    let cross = alpha * beta;
    // X² = (a² + a†² + 2N + 1)/2, P² = (−a² − a†² + 2N + 1)/2, {X,P} = −i(a² − a†²)
    let a2 = c(0.25 * (kx - kp)) - Complex64::i() * (0.5 * cross);
    let ad2 = c(0.25 * (kx - kp)) + Complex64::i() * (0.5 * cross);
    Ok(quadratic_operator(
        a2,
        ad2,
        c(0.5 * (kx + kp)),
        c(0.25 * (kx + kp)),
        dim,
    ))
}

/// `a_t = μ c + ν c†` between an invariant mode `c` and the instantaneous
/// oscillator mode `a_t` at frequency `ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BogoliubovPair {
    pub mu: Complex64,
    pub nu: Complex64,
}

impl BogoliubovPair {
    pub const IDENTITY: Self = Self {
        mu: Complex64::new(1.0, 0.0),
        nu: Complex64::new(0.0, 0.0),
    };

    pub fn norm(&self) -> f64 {
        self.mu.norm_sqr() - self.nu.norm_sqr()
    }

    /// Pure squeeze `μ = cosh r`, `ν = e^{iθ} sinh r`.
    pub fn squeeze(r: f64, theta: f64) -> Self {
        Self {
            mu: c(r.cosh()),
            nu: Complex64::from_polar(r.sinh(), theta),
        }
    }
}

pub fn bogoliubov_coefficients(b: f64, bdot: f64, omega: f64, omega0: f64) -> Result<BogoliubovPair> {
    if !(b > 0.0 && omega > 0.0 && omega0 > 0.0) {
        return Err(Error::Domain(format!(
            "Bogoliubov coefficients need b, omega, omega0 > 0 (got {b}, {omega}, {omega0})"
        )));
    }
    let r = (omega / omega0).sqrt();
    let cc = Complex64::new(bdot / omega0, -1.0 / b);
    let i = Complex64::i();
    Ok(BogoliubovPair {
        mu: 0.5 * (c(r * b) + i * cc / r),
        nu: 0.5 * (c(r * b) + i * cc.conj() / r),
    })
}

/// `c†c` with `c = μ* a − ν a†`, compressed to `dim`.
fn mode_number(pair: &BogoliubovPair, dim: usize) -> FockMatrix {
    let (mu, nu) = (pair.mu, pair.nu);
    // |μ|² a†a + |ν|² (a†a + 1) − μν a†² − μ*ν* a²
    quadratic_operator(
        -(mu * nu).conj(),
        -(mu * nu),
        c(mu.norm_sqr() + nu.norm_sqr()),
        c(nu.norm_sqr()),
        dim,
    )
}

/// Thermal state with occupation `n` of the mode `c` defined by `a = μ c + ν c†`.
pub fn bogoliubov_thermal_state(pair: &BogoliubovPair, n: f64, dim: usize) -> Result<FockMatrix> {
    if !(n >= 0.0) {
        return Err(Error::Domain(format!("occupation must be >= 0, got {n}")));
    }
    let eig = SymmetricEigen::new(mode_number(pair, dim));
    let weights = boltzmann_weights(eig.eigenvalues.as_slice(), n);
    let mut rho = FockMatrix::zeros(dim, dim);
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        rho += (&v * v.adjoint()) * c(w);
    }
    check_boundary(&rho)?;
    Ok(rho)
}

/// Normalized weights `∝ (n/(n+1))^λ` over the given spectrum of `c†c`.
fn boltzmann_weights(eigenvalues: &[f64], n: f64) -> Vec<f64> {
    let mut w: Vec<f64> = if n == 0.0 {
        let min = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        eigenvalues
            .iter()
            .map(|&l| if (l - min).abs() < 0.5 { 1.0 } else { 0.0 })
            .collect()
    } else {
        let lq = (n / (n + 1.0)).ln();
        eigenvalues.iter().map(|&l| (lq * l.max(0.0)).exp()).collect()
    };
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// Number-basis populations of [`bogoliubov_thermal_state`] without forming
/// the density matrix. A diagonal phase change makes `c†c` real, and it only
/// couples levels of equal parity.
pub fn bogoliubov_thermal_populations(pair: &BogoliubovPair, n: f64, dim: usize) -> Result<Vec<f64>> {
    if !(n >= 0.0) {
        return Err(Error::Domain(format!("occupation must be >= 0, got {n}")));
    }
    let (mu, nu) = (pair.mu, pair.nu);
    let off = (mu * nu).norm();
    let diag = |m: usize| (mu.norm_sqr() + nu.norm_sqr()) * m as f64 + nu.norm_sqr();
    let mut all_vals = Vec::with_capacity(dim);
    let mut sectors = Vec::with_capacity(2);
    for parity in 0..2 {
        let levels: Vec<usize> = (parity..dim).step_by(2).collect();
        let k = levels.len();
        if k == 0 {
            continue;
        }
        let mut m = DMatrix::<f64>::zeros(k, k);
        for (i, &lev) in levels.iter().enumerate() {
            m[(i, i)] = diag(lev);
            if i + 1 < k {
                let s = -off * (((lev + 1) * (lev + 2)) as f64).sqrt();
                m[(i, i + 1)] = s;
                m[(i + 1, i)] = s;
            }
        }
        let eig = SymmetricEigen::new(m);
        all_vals.extend(eig.eigenvalues.iter().cloned());
        sectors.push((levels, eig));
    }
    let weights = boltzmann_weights(&all_vals, n);
    let mut pops = vec![0.0; dim];
    let mut offset = 0;
    for (levels, eig) in &sectors {
        for j in 0..levels.len() {
            let w = weights[offset + j];
            if w == 0.0 {
                continue;
            }
            for (i, &lev) in levels.iter().enumerate() {
                pops[lev] += w * eig.eigenvectors[(i, j)].powi(2);
            }
        }
        offset += levels.len();
    }
    if pops[dim - 1] > BOUNDARY_TOL {
        return Err(Error::Truncation {
            dim,
            weight: pops[dim - 1],
            suggested: 2 * dim,
        });
    }
    Ok(pops)
}

/// Thermal state `diag((1−q) qⁿ)` renormalized to the truncation.
pub fn thermal_state(n: f64, dim: usize) -> FockMatrix {
    let q = if n > 0.0 { n / (n + 1.0) } else { 0.0 };
    let mut p: Vec<f64> = (0..dim).map(|k| q.powi(k as i32)).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    FockMatrix::from_diagonal(&DVector::from_fn(dim, |k, _| c(p[k])))
}

fn check_boundary(rho: &FockMatrix) -> Result<()> {
    let d = rho.nrows();
    let w = rho[(d - 1, d - 1)].re;
    if w > BOUNDARY_TOL {
        return Err(Error::Truncation {
            dim: d,
            weight: w,
            suggested: 2 * d,
        });
    }
    Ok(())
}

fn hermitian_eigen(m: &FockMatrix) -> SymmetricEigen<Complex64, nalgebra::Dyn> {
    let h = (m + m.adjoint()) * c(0.5);
    SymmetricEigen::new(h)
}

pub fn max_abs(m: &FockMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn validate_density(rho: &FockMatrix) -> Result<()> {
    let herm = max_abs(&(rho - rho.adjoint()));
    let tr = rho.trace();
    if herm > 1e-12 || (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
        return Err(Error::Unphysical(format!(
            "not a density matrix: hermiticity error {herm:e}, trace {tr}"
        )));
    }
    let min = hermitian_eigen(rho).eigenvalues.min();
    if min < -1e-10 {
        return Err(Error::Unphysical(format!("negative eigenvalue {min:e}")));
    }
    Ok(())
}

fn sqrt_psd(m: &FockMatrix) -> FockMatrix {
    let eig = hermitian_eigen(m);
    let d = m.nrows();
    let mut out = FockMatrix::zeros(d, d);
    for k in 0..d {
        let l = eig.eigenvalues[k];
        if l <= 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        out += (&v * v.adjoint()) * c(l.sqrt());
    }
    out
}

/// Uhlmann fidelity `(Tr √(√ρ₂ ρ₁ √ρ₂))²`.
pub fn fidelity_fock(rho1: &FockMatrix, rho2: &FockMatrix) -> Result<f64> {
    if rho1.shape() != rho2.shape() {
        return Err(Error::Domain("density matrices differ in dimension".into()));
    }
    validate_density(rho1)?;
    validate_density(rho2)?;
    let s2 = sqrt_psd(rho2);
    let m = &s2 * rho1 * &s2;
    let tr: f64 = hermitian_eigen(&m)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .sum();
    Ok((tr * tr).min(1.0))
}

/// `−Σ λ ln λ` over eigenvalues above `10⁻¹⁴`.
pub fn entropy_fock(rho: &FockMatrix) -> f64 {
    hermitian_eigen(rho)
        .eigenvalues
        .iter()
        .filter(|&&l| l > 1e-14)
        .map(|&l| -l * l.ln())
        .sum()
}

pub fn expectation(op: &FockMatrix, rho: &FockMatrix) -> Complex64 {
    (op * rho).trace()
}

/// Repeatedly double `dim` until `f` changes by less than `tol`.
pub fn converge_in_dim<F>(mut f: F, start: usize, max_dim: usize, tol: f64) -> Result<(f64, usize)>
where
    F: FnMut(usize) -> Result<f64>,
{
    let mut dim = start.max(2);
    let mut prev: Option<f64> = None;
    loop {
        match f(dim) {
            Ok(v) => {
                if let Some(p) = prev {
                    if (v - p).abs() < tol {
                        return Ok((v, dim));
                    }
                }
                prev = Some(v);
            }
            Err(Error::Truncation { .. }) => prev = None,
            Err(e) => return Err(e),
        }
        if 2 * dim > max_dim {
            return Err(Error::Truncation {
                dim,
                weight: f64::NAN,
                suggested: 2 * dim,
            });
        }
        dim *= 2;
    }
}

/// Pure-state trajectories of the closed system.
#[derive(Debug, Clone)]
pub struct ClosedTrajectory {
    pub times: Vec<f64>,
    /// `states[i][k]`: state `k` at `times[i]`.
    pub states: Vec<Vec<FockVector>>,
}

fn split_complex(v: &FockVector) -> Vec<f64> {
    let d = v.len();
    let mut y = vec![0.0; 2 * d];
    for i in 0..d {
        y[i] = v[i].re;
        y[d + i] = v[i].im;
    }
    y
}

fn join_complex(y: &[f64]) -> FockVector {
    let d = y.len() / 2;
    FockVector::from_fn(d, |i, _| Complex64::new(y[i], y[d + i]))
}

/// Integrate `iψ̇ = H_S(t)ψ` for each initial vector and sample at `times`.
pub fn closed_evolution(
    profile: &FrequencyProfile,
    omega0: f64,
    initial: &[FockVector],
    times: &[f64],
    tol: Tolerances,
) -> Result<ClosedTrajectory> {
    let dim = initial.first().map(|v| v.len()).unwrap_or(0);
    if dim < 2 {
        return Err(Error::Domain("closed evolution needs at least one state of dim >= 2".into()));
    }
    // H = κ (a² + a†²) + λ N + const, real and pentadiagonal
    let coeffs = |t: f64| {
        let w2 = crate::gaussian::dynamical_omega_sq(profile, t);
        let (kx, kp) = (w2 / omega0, omega0);
        (0.25 * (kx - kp), 0.5 * (kx + kp), 0.25 * (kx + kp))
    };
    let sq: Vec<f64> = (0..dim)
        .map(|n| if n + 2 < dim { (((n + 1) * (n + 2)) as f64).sqrt() } else { 0.0 })
        .collect();
    let apply = |t: f64, x: &[f64], out: &mut [f64]| {
        let (k, l, c0) = coeffs(t);
        for n in 0..dim {
            let mut v = (l * n as f64 + c0) * x[n];
            if n + 2 < dim {
                v += k * sq[n] * x[n + 2];
            }
            if n >= 2 {
                v += k * sq[n - 2] * x[n - 2];
            }
            out[n] = v;
        }
    };
    let mut per_state = Vec::with_capacity(initial.len());
    for psi0 in initial {
        if psi0.len() != dim {
            return Err(Error::Domain("initial states differ in dimension".into()));
        }
        let y0 = split_complex(psi0);
        let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
            let (re, im) = y.split_at(dim);
            let (dre, dim_) = dy.split_at_mut(dim);
            apply(t, im, dre);
            apply(t, re, dim_);
            dim_.iter_mut().for_each(|v| *v = -*v);
        };
        // piecewise between sample times so only one step's dense output is kept
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap());
        let mut sampled = vec![FockVector::zeros(dim); times.len()];
        let (mut t, mut y) = (0.0, y0);
        for &i in &order {
            if times[i] > t {
                let sol = Dopri5::new(tol).solve(&rhs, t, &y, times[i], |_, _| Ok(()))?;
                y = sol.final_state().to_vec();
                t = times[i];
            }
            let v = join_complex(&y);
            let edge = v[dim - 1].norm_sqr() + v[dim - 2].norm_sqr();
            if edge > BOUNDARY_TOL {
                return Err(Error::Truncation {
                    dim,
                    weight: edge,
                    suggested: 2 * dim,
                });
            }
            sampled[i] = v;
        }
        per_state.push(sampled);
    }
    let states = (0..times.len())
        .map(|i| per_state.iter().map(|s| s[i].clone()).collect())
        .collect();
    Ok(ClosedTrajectory {
        times: times.to_vec(),
        states,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct LindbladOptions {
    pub tol: Tolerances,
    pub lamb_shift: bool,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::new(1e-10, 1e-13),
            lamb_shift: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FockTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<FockMatrix>,
}

impl FockTrajectory {
    pub fn occupations(&self) -> Vec<f64> {
        let n = number_operator(self.states.first().map(|r| r.nrows()).unwrap_or(0));
        self.states.iter().map(|r| expectation(&n, r).re).collect()
    }
}

fn pack(m: &FockMatrix) -> Vec<f64> {
    let d = m.nrows();
    let mut y = vec![0.0; 2 * d * d];
    for (k, z) in m.iter().enumerate() {
        y[k] = z.re;
        y[d * d + k] = z.im;
    }
    y
}

fn unpack(y: &[f64], d: usize) -> FockMatrix {
    FockMatrix::from_iterator(d, d, (0..d * d).map(|k| Complex64::new(y[k], y[d * d + k])))
}

/// Interaction-picture Lindblad equation with jump operators `a`, `a†`
/// (continuous start, `a_I = a`):
///
/// `ρ̇ = −i[H_LS, ρ] + ½|D₁|² (γ₊ 𝒟[a] + γ₋ 𝒟[a†]) ρ`.
pub fn lindblad_propagate_fock<S: Scaling + ?Sized>(
    b: &S,
    bath: &BathSpec,
    params: &ModelParams,
    initial: &FockMatrix,
    times: &[f64],
    opts: &LindbladOptions,
) -> Result<FockTrajectory> {
    validate_density(initial)?;
    let d = initial.nrows();
    let (a, ad) = ladder_matrices(d)?;
    let n_op = &ad * &a;
    let nn_op = &a * &ad;
    let w0 = b.omega0();
    let temp = params.temperature;
    let mut failure: Option<Error> = None;
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let p = b.point(t);
        if !(p.b > 0.0) {
            failure.get_or_insert(Error::NonPositiveScaling { time: t, value: p.b });
            dy.fill(0.0);
            return;
        }
        let wt = bohr_frequency(&p, w0);
        let (d1, d2) = d_coefficients(p.b, p.bdot, w0);
        let (gp, gm) = decay_rates(wt, bath, temp).unwrap_or((0.0, 0.0));
        let (rp, rm) = (0.5 * d1.norm_sqr() * gp, 0.5 * d1.norm_sqr() * gm);
        let rho = unpack(y, d);
        let mut out = (&a * &rho * &ad - (&n_op * &rho + &rho * &n_op) * c(0.5)) * c(rp)
            + (&ad * &rho * &a - (&nn_op * &rho + &rho * &nn_op) * c(0.5)) * c(rm);
        if opts.lamb_shift {
            if let Ok(ls) = lamb_shift(wt, bath) {
                let h = ls.hamiltonian_coefficient(d1, d2);
                out -= (&n_op * &rho - &rho * &n_op) * Complex64::new(0.0, h);
            }
        }
        dy.copy_from_slice(&pack(&out));
    };
    let t1 = times.iter().cloned().fold(0.0, f64::max);
    let sol = Dopri5::new(opts.tol).solve(rhs, 0.0, &pack(initial), t1, |_, _| Ok(()))?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut states = Vec::with_capacity(times.len());
    for &t in times {
        let rho = unpack(&sol.eval(t), d);
        check_boundary(&rho)?;
        states.push(rho);
    }
    Ok(FockTrajectory {
        times: times.to_vec(),
        states,
    })
}

/// Write `rho` as row-major interleaved `(re, im)` little-endian `f64`
/// pairs after one JSON header line.
pub fn write_density_matrix(rho: &FockMatrix, path: &Path) -> Result<()> {
    let d = rho.nrows();
    let header = serde_json::json!({
        "format": "ste-fock-v1",
        "dim": d,
        "order": "row-major",
        "dtype": "complex128-le",
    });
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut f, &header)?;
    f.write_all(b"\n")?;
    for i in 0..d {
        for j in 0..d {
            f.write_all(&rho[(i, j)].re.to_le_bytes())?;
            f.write_all(&rho[(i, j)].im.to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}
