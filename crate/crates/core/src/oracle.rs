//! Reference solvers for the limits the chain simulation can be checked
//! against: closed Jaynes-Cummings dynamics, the Markovian master equation
//! without feedback, and quantum-regression correlations.
//!
//! The master equation uses the amplitude decay `kappa = kappa1 + kappa2`:
//!
//! ```text
//! d rho / dt = -i [H_S, rho] + 2 kappa (a rho a^dag - {a^dag a, rho} / 2)
//! ```

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{hamiltonian, ModelParams, SystemOps};
use crate::observables::{CorrelationKind, CorrelationSeries};
use crate::series::TimeSeries;
use crate::tensor::{matrix_exponential, ComplexTensor};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl DensityMatrix {
    pub fn new(dim: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "density matrix of dimension {dim} needs {} entries",
                dim * dim
            )));
        }
        let rho = Self { dim, data };
        rho.validate()?;
        Ok(rho)
    }

    pub fn pure(psi: &ComplexTensor) -> Result<Self> {
        let v = psi.data();
        let dim = v.len();
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                data[i * dim + j] = v[i] * v[j].conj();
            }
        }
        Self::new(dim, data)
    }

    fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::Validation(format!("density matrix trace {tr}")));
        }
        let n = self.dim;
        for i in 0..n {
            for j in 0..n {
                if (self.data[i * n + j] - self.data[j * n + i].conj()).norm() > 1e-10 {
                    return Err(Error::Validation("density matrix is not Hermitian".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn expectation(&self, op: &ComplexTensor) -> C64 {
        let n = self.dim;
        let o = op.data();
        let mut acc = ZERO;
        for i in 0..n {
            for k in 0..n {
                acc += o[i * n + k] * self.data[k * n + i];
            }
        }
        acc
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let (vals, _) = linalg::eigh(&self.data, self.dim)?;
        Ok(vals[0])
    }
}

fn n_fock_of(dim: usize) -> Result<usize> {
    if dim < 4 || dim % 2 != 0 {
        return Err(Error::Dimension(format!("system dimension {dim} is not 2 (n_fock + 1)")));
    }
    Ok(dim / 2 - 1)
}

/// Population of the two highest Fock levels.
fn top_levels(probs: &[f64], n_fock: usize) -> f64 {
    let d = n_fock + 1;
    let mut acc = 0.0;
    for s in 0..2 {
        acc += probs[s * d + n_fock] + probs[s * d + n_fock - 1];
    }
    acc
}

#[derive(Clone, Debug)]
pub struct OracleOutput {
    pub series: BTreeMap<String, TimeSeries>,
    /// Set when the cutoff is too small for the dynamics.
    pub warning: Option<String>,
}

impl OracleOutput {
    pub fn values(&self, name: &str) -> Option<Vec<f64>> {
        self.series.get(name).map(|s| s.real_values())
    }
}

struct Samples {
    t: Vec<f64>,
    cols: BTreeMap<&'static str, Vec<f64>>,
}

impl Samples {
    fn new(names: &[&'static str]) -> Self {
        Self {
            t: Vec::new(),
            cols: names.iter().map(|n| (*n, Vec::new())).collect(),
        }
    }

    fn push(&mut self, name: &'static str, v: f64) {
        self.cols.get_mut(name).unwrap().push(v);
    }

    fn finish(self) -> Result<BTreeMap<String, TimeSeries>> {
        let mut out = BTreeMap::new();
        for (name, v) in self.cols {
            out.insert(name.to_string(), TimeSeries::real(name, self.t.clone(), v)?);
        }
        Ok(out)
    }
}

fn g2_value(pair: f64, n: f64) -> f64 {
    if n < 1e-8 {
        f64::NAN
    } else {
        pair / (n * n)
    }
}

/// Schrödinger evolution by diagonalisation. Records `inversion`,
/// `tls_population`, `cavity_photons`, `instantaneous_g2` and `energy`.
pub fn closed_evolve(h: &ComplexTensor, psi0: &ComplexTensor, times: &[f64]) -> Result<OracleOutput> {
    let dim = psi0.len();
    if h.shape() != [dim, dim] {
        return Err(Error::Dimension(format!(
            "Hamiltonian shape {:?} for a state of length {dim}",
            h.shape()
        )));
    }
    if h.hermiticity_error()? > 1e-12 {
        return Err(Error::Validation("Hamiltonian is not Hermitian".into()));
    }
    if (psi0.frobenius_norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Validation("initial state is not normalised".into()));
    }
    let n_fock = n_fock_of(dim)?;
    let ops = SystemOps::new(n_fock);
    let (vals, vecs) = linalg::eigh(h.data(), dim)?;
    let coeff = linalg::matmul(&linalg::adjoint(&vecs, dim, dim), dim, dim, psi0.data(), 1);
    let mut s = Samples::new(&[
        "inversion",
        "tls_population",
        "cavity_photons",
        "instantaneous_g2",
        "energy",
    ]);
    let mut leak: f64 = 0.0;
    let real = |op: &ComplexTensor, psi: &[C64]| -> f64 {
        let v = linalg::matmul(op.data(), dim, dim, psi, 1);
        psi.iter().zip(&v).map(|(a, b)| (a.conj() * b).re).sum()
    };
    for &t in times {
        let rotated: Vec<C64> = coeff
            .iter()
            .zip(&vals)
            .map(|(c, e)| c * C64::from_polar(1.0, -e * t))
            .collect();
        let psi = linalg::matmul(&vecs, dim, dim, &rotated, 1);
        let probs: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
        leak = leak.max(top_levels(&probs, n_fock));
        let pe = real(&ops.n_tls, &psi);
        let n = real(&ops.n_cavity, &psi);
        s.t.push(t);
        s.push("tls_population", pe);
        s.push("inversion", 2.0 * pe - 1.0);
        s.push("cavity_photons", n);
        s.push("instantaneous_g2", g2_value(real(&ops.pair_cavity, &psi), n));
        s.push("energy", real(h, &psi));
    }
    Ok(OracleOutput {
        series: s.finish()?,
        warning: (leak > 1e-6).then(|| {
            format!("population {leak:.2e} in the top two Fock levels; raise n_fock")
        }),
    })
}

/// Dense Markovian generator acting on row-major density matrices.
struct Lindblad {
    d: usize,
    h: Vec<C64>,
    a: Vec<C64>,
    a_dag: Vec<C64>,
    n: Vec<C64>,
    rate: f64,
}

impl Lindblad {
    fn new(p: &ModelParams) -> Self {
        let ops = SystemOps::new(p.n_fock);
        Self {
            d: p.d_sys(),
            h: hamiltonian(p.g, p.drive_amplitude, p.delta, p.n_fock).into_data(),
            a: ops.a.into_data(),
            a_dag: ops.a_dag.into_data(),
            n: ops.n_cavity.into_data(),
            rate: 2.0 * (p.kappa1 + p.kappa2),
        }
    }

    fn mul(&self, x: &[C64], y: &[C64]) -> Vec<C64> {
        linalg::matmul(x, self.d, self.d, y, self.d)
    }

    fn apply(&self, rho: &[C64]) -> Vec<C64> {
        let i = C64::new(0.0, 1.0);
        let hr = self.mul(&self.h, rho);
        let rh = self.mul(rho, &self.h);
        let mut out: Vec<C64> = hr.iter().zip(&rh).map(|(x, y)| -i * (x - y)).collect();
        if self.rate > 0.0 {
            let jump = self.mul(&self.mul(&self.a, rho), &self.a_dag);
            let nr = self.mul(&self.n, rho);
            let rn = self.mul(rho, &self.n);
            for k in 0..out.len() {
                out[k] += self.rate * (jump[k] - 0.5 * (nr[k] + rn[k]));
            }
        }
        out
    }

    fn rk4(&self, rho: &[C64], h: f64) -> Vec<C64> {
        let axpy = |x: &[C64], k: &[C64], c: f64| -> Vec<C64> {
            x.iter().zip(k).map(|(a, b)| a + b * c).collect()
        };
        let k1 = self.apply(rho);
        let k2 = self.apply(&axpy(rho, &k1, h / 2.0));
        let k3 = self.apply(&axpy(rho, &k2, h / 2.0));
        let k4 = self.apply(&axpy(rho, &k3, h));
        (0..rho.len())
            .map(|j| rho[j] + (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) * (h / 6.0))
            .collect()
    }

    /// Superoperator matrix on `vec(rho)` with `vec(rho)[i d + j] = rho[i][j]`.
    fn superoperator(&self) -> Vec<C64> {
        let d = self.d;
        let dd = d * d;
        let mut l = vec![ZERO; dd * dd];
        let mut basis = vec![ZERO; dd];
        for col in 0..dd {
            basis[col] = ONE;
            let image = self.apply(&basis);
            for row in 0..dd {
                l[row * dd + col] = image[row];
            }
            basis[col] = ZERO;
        }
        l
    }
}

/// Relative tolerance for the step-doubling control of `lindblad_evolve`.
const LINDBLAD_TOL: f64 = 1e-11;

/// Master-equation evolution without feedback, fourth-order Runge-Kutta with
/// step doubling. Records `inversion`, `tls_population`, `cavity_photons`,
/// `instantaneous_g2`, `trace` and `min_eigenvalue`.
pub fn lindblad_evolve(p: &ModelParams, rho0: &DensityMatrix, times: &[f64]) -> Result<OracleOutput> {
    p.validate()?;
    if rho0.dim() != p.d_sys() {
        return Err(Error::Dimension(format!(
            "density matrix dimension {} for system dimension {}",
            rho0.dim(),
            p.d_sys()
        )));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("time grid must be increasing".into()));
    }
    let lind = Lindblad::new(p);
    let ops = SystemOps::new(p.n_fock);
    let d = p.d_sys();
    let mut rho = rho0.data().to_vec();
    let mut t = times.first().copied().unwrap_or(0.0);
    let mut h = 0.01 / (p.g.abs() + p.drive_amplitude.abs() + p.kappa1 + p.kappa2 + 1e-3);
    let mut s = Samples::new(&[
        "inversion",
        "tls_population",
        "cavity_photons",
        "instantaneous_g2",
        "trace",
        "min_eigenvalue",
    ]);
    let mut leak: f64 = 0.0;
    for &target in times {
        while t < target {
            let step = h.min(target - t);
            let full = lind.rk4(&rho, step);
            let half = lind.rk4(&lind.rk4(&rho, step / 2.0), step / 2.0);
            let err = full
                .iter()
                .zip(&half)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            if err <= LINDBLAD_TOL || step < 1e-12 {
                if step < 1e-12 && err > LINDBLAD_TOL {
                    return Err(Error::NoConvergence(format!(
                        "master equation step collapsed at t = {t} (error {err:.2e})"
                    )));
                }
                rho = half;
                t += step;
                let grow = if err == 0.0 { 2.0 } else { 0.9 * (LINDBLAD_TOL / err).powf(0.2) };
                if step == h {
                    h *= grow.clamp(1.0, 2.0);
                }
            } else {
                h = step * (0.9 * (LINDBLAD_TOL / err).powf(0.2)).clamp(0.1, 0.9);
            }
        }
        let dm = DensityMatrix { dim: d, data: rho.clone() };
        let probs: Vec<f64> = (0..d).map(|i| rho[i * d + i].re).collect();
        leak = leak.max(top_levels(&probs, p.n_fock));
        let pe = dm.expectation(&ops.n_tls).re;
        let n = dm.expectation(&ops.n_cavity).re;
        s.t.push(target);
        s.push("tls_population", pe);
        s.push("inversion", 2.0 * pe - 1.0);
        s.push("cavity_photons", n);
        s.push("instantaneous_g2", g2_value(dm.expectation(&ops.pair_cavity).re, n));
        s.push("trace", dm.trace().re);
        s.push("min_eigenvalue", dm.min_eigenvalue()?);
    }
    Ok(OracleOutput {
        series: s.finish()?,
        warning: (leak > 1e-6).then(|| {
            format!("population {leak:.2e} in the top two Fock levels; raise n_fock")
        }),
    })
}

/// Steady state of the master equation by a dense solve with the trace
/// condition replacing one equation.
pub fn steady_state(p: &ModelParams) -> Result<DensityMatrix> {
    p.validate()?;
    if p.kappa1 + p.kappa2 <= 0.0 {
        return Err(Error::Validation("steady state needs a nonzero decay rate".into()));
    }
    let lind = Lindblad::new(p);
    let d = lind.d;
    let dd = d * d;
    let l = lind.superoperator();
    let mut a = l.clone();
    let mut b = vec![ZERO; dd];
    for j in 0..dd {
        a[j] = ZERO;
    }
    for i in 0..d {
        a[i * d + i] = ONE;
    }
    b[0] = ONE;
    let x = linalg::solve(&a, dd, &b, 1)?;
    let residual = linalg::matmul(&l, dd, dd, &x, 1)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if residual > 1e-8 {
        return Err(Error::NoConvergence(format!(
            "steady-state residual {residual:.2e} above 1e-8"
        )));
    }
    // symmetrise away rounding
    let mut data = x;
    for i in 0..d {
        for j in i..d {
            let m = (data[i * d + j] + data[j * d + i].conj()) / 2.0;
            data[i * d + j] = m;
            data[j * d + i] = m.conj();
        }
    }
    DensityMatrix::new(d, data)
}

/// Output-field correlations of the Markovian model from the quantum
/// regression theorem, at lags `p * dt` for `p = 0..=max_lag`:
///
/// ```text
/// g1(tau) = Tr[a e^{L tau}(rho a^dag)] / <a^dag a>
/// g2(tau) = Tr[a^dag a e^{L tau}(a rho a^dag)] / <a^dag a>^2
/// ```
///
/// If the steady state populates the top Fock level above `1e-8` the cutoff
/// is raised by four once.
pub fn regression_correlations(
    p: &ModelParams,
    which: CorrelationKind,
    max_lag: usize,
    dt: f64,
) -> Result<CorrelationSeries> {
    let mut p = p.clone();
    let mut rho = steady_state(&p)?;
    let top = |rho: &DensityMatrix, nf: usize| {
        let d = nf + 1;
        rho.data()[nf * 2 * d + nf].re + rho.data()[(d + nf) * 2 * d + d + nf].re
    };
    if top(&rho, p.n_fock) > 1e-8 {
        p.n_fock += 4;
        rho = steady_state(&p)?;
        if top(&rho, p.n_fock) > 1e-8 {
            return Err(Error::Validation(format!(
                "steady state not contained in {} Fock levels",
                p.n_fock + 1
            )));
        }
    }
    let lind = Lindblad::new(&p);
    let d = lind.d;
    let dd = d * d;
    let ops = SystemOps::new(p.n_fock);
    let n = rho.expectation(&ops.n_cavity).re;
    if n < 1e-14 {
        return Err(Error::Singular("steady state has no cavity photons".into()));
    }
    let prop = {
        let l = ComplexTensor::new(vec![dd, dd], lind.superoperator())?;
        matrix_exponential(&l.scale(C64::new(dt, 0.0)))?
    };
    let (mut x, probe, norm) = match which {
        CorrelationKind::G1 => (lind.mul(rho.data(), &lind.a_dag), &ops.a, n),
        CorrelationKind::G2 => (
            lind.mul(&lind.mul(&lind.a, rho.data()), &lind.a_dag),
            &ops.n_cavity,
            n * n,
        ),
    };
    let trace_with = |x: &[C64]| -> C64 {
        let o = probe.data();
        let mut acc = ZERO;
        for i in 0..d {
            for k in 0..d {
                acc += o[i * d + k] * x[k * d + i];
            }
        }
        acc
    };
    let mut values = Vec::with_capacity(max_lag + 1);
    for step in 0..=max_lag {
        if step > 0 {
            x = linalg::matmul(prop.data(), dd, dd, &x, 1);
        }
        values.push(trace_with(&x) / norm);
    }
    Ok(CorrelationSeries {
        kind: which,
        tau: (0..=max_lag).map(|k| k as f64 * dt).collect(),
        values,
        base_time: f64::INFINITY,
        normalization: norm,
    })
}
