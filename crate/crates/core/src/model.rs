//! Physical parameters, the system Hamiltonian and the per-step generator.
//!
//! Basis convention for the system site: the two-level emitter index is the
//! slow index (`0 = |g>`, `1 = |e>`), the cavity Fock index the fast one, so
//! `|s, n>` sits at `s * (n_fock + 1) + n`. All quantities are in a frame
//! rotating at the emitter frequency.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{matrix_exponential, taylor_exponential, ComplexTensor, SvdPolicy};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Emitter-cavity coupling.
    pub g: f64,
    /// Coherent drive on the emitter.
    pub drive_amplitude: f64,
    /// Amplitude decay rate through the output mirror.
    pub kappa1: f64,
    /// Amplitude decay rate through the feedback mirror.
    pub kappa2: f64,
    /// Round-trip delay of the feedback loop; must be a multiple of `dt`.
    pub tau: f64,
    /// Composite feedback phase.
    pub phi: f64,
    /// Detuning of emitter and cavity from the rotating frame.
    pub delta: f64,
    pub dt: f64,
    /// Cavity Fock cutoff: states `|0>..|n_fock>`.
    pub n_fock: usize,
    /// Dimension of each time-bin Fock space.
    pub d_bin: usize,
    pub svd: SvdPolicy,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            g: 1.0,
            drive_amplitude: 0.0,
            kappa1: 0.0,
            kappa2: 0.0,
            tau: 1.0,
            phi: 0.0,
            delta: 0.0,
            dt: 0.01,
            n_fock: 4,
            d_bin: 3,
            svd: SvdPolicy::default(),
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("g", self.g),
            ("drive_amplitude", self.drive_amplitude),
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("tau", self.tau),
            ("phi", self.phi),
            ("delta", self.delta),
            ("dt", self.dt),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, v) in [("kappa1", self.kappa1), ("kappa2", self.kappa2)] {
            if v < 0.0 {
                return Err(Error::Validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.dt <= 0.0 {
            return Err(Error::Validation(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.n_fock < 1 {
            return Err(Error::Validation("n_fock must be >= 1".into()));
        }
        if self.d_bin < 2 {
            return Err(Error::Validation(format!("d_bin must be >= 2, got {}", self.d_bin)));
        }
        self.svd.validate()?;
        self.delay_steps().map(|_| ())
    }

    /// Number of time steps `L` spanned by the delay, `tau = L * dt`.
    pub fn delay_steps(&self) -> Result<usize> {
        let ratio = self.tau / self.dt;
        let l = ratio.round();
        if l < 1.0 || (self.tau - l * self.dt).abs() > 1e-9 * self.tau.abs() {
            let lo = ratio.floor().max(1.0);
            return Err(Error::Validation(format!(
                "tau = {} is not an integer multiple of dt = {} (tau/dt = {ratio}); \
                 try dt = {} or dt = {}",
                self.tau,
                self.dt,
                self.tau / lo,
                self.tau / (lo + 1.0)
            )));
        }
        Ok(l as usize)
    }

    pub fn d_sys(&self) -> usize {
        2 * (self.n_fock + 1)
    }

    pub fn has_feedback(&self) -> bool {
        self.kappa2 > 0.0
    }

    /// Same system with both mirrors merged into a single output channel:
    /// `kappa1 + kappa2` and no loop.
    pub fn without_feedback(&self) -> Self {
        Self {
            kappa1: self.kappa1 + self.kappa2,
            kappa2: 0.0,
            ..self.clone()
        }
    }

    /// `phi` folded into `[0, 2pi)`.
    pub fn phase(&self) -> f64 {
        self.phi.rem_euclid(2.0 * PI)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TlsInit {
    #[default]
    Ground,
    Excited,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CavityInit {
    #[default]
    Vacuum,
    Fock {
        n: usize,
    },
    /// Coherent state `|alpha>`, truncated to the cutoff and renormalised.
    Coherent {
        re: f64,
        #[serde(default)]
        im: f64,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemInit {
    pub tls: TlsInit,
    pub cavity: CavityInit,
}

impl SystemInit {
    pub fn ground_vacuum() -> Self {
        Self::default()
    }

    pub fn cavity_amplitudes(&self, n_fock: usize) -> Result<Vec<C64>> {
        let mut amp = vec![ZERO; n_fock + 1];
        match self.cavity {
            CavityInit::Vacuum => amp[0] = ONE,
            CavityInit::Fock { n } => {
                if n > n_fock {
                    return Err(Error::Validation(format!(
                        "Fock state |{n}> above cavity cutoff {n_fock}"
                    )));
                }
                amp[n] = ONE;
            }
            CavityInit::Coherent { re, im } => {
                let alpha = C64::new(re, im);
                if !alpha.re.is_finite() || !alpha.im.is_finite() {
                    return Err(Error::Validation("coherent amplitude must be finite".into()));
                }
                let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
                for (n, a) in amp.iter_mut().enumerate() {
                    if n > 0 {
                        c *= alpha / (n as f64).sqrt();
                    }
                    *a = c;
                }
                let norm = amp.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                for a in &mut amp {
                    *a /= norm;
                }
            }
        }
        Ok(amp)
    }

    /// Normalised system vector of length `2 (n_fock + 1)`.
    pub fn vector(&self, n_fock: usize) -> Result<ComplexTensor> {
        let cav = self.cavity_amplitudes(n_fock)?;
        let d = n_fock + 1;
        let mut v = vec![ZERO; 2 * d];
        let off = match self.tls {
            TlsInit::Ground => 0,
            TlsInit::Excited => d,
        };
        v[off..off + d].copy_from_slice(&cav);
        Ok(ComplexTensor::from_vec(v))
    }
}

/// Truncated bosonic annihilation operator on `d` levels.
pub fn annihilation(d: usize) -> ComplexTensor {
    let mut a = ComplexTensor::zeros(&[d, d]);
    for n in 1..d {
        a.set(&[n - 1, n], C64::new((n as f64).sqrt(), 0.0));
    }
    a
}

pub fn number(d: usize) -> ComplexTensor {
    ComplexTensor::diagonal(&(0..d).map(|n| C64::new(n as f64, 0.0)).collect::<Vec<_>>())
}

/// `b^dagger b^dagger b b` on `d` levels.
pub fn pair_number(d: usize) -> ComplexTensor {
    ComplexTensor::diagonal(
        &(0..d)
            .map(|n| C64::new((n * n.saturating_sub(1)) as f64, 0.0))
            .collect::<Vec<_>>(),
    )
}

/// Operators on the system site.
#[derive(Clone, Debug)]
pub struct SystemOps {
    pub a: ComplexTensor,
    pub a_dag: ComplexTensor,
    pub sigma_minus: ComplexTensor,
    pub sigma_plus: ComplexTensor,
    pub n_cavity: ComplexTensor,
    /// `sigma+ sigma-`, the excited-state projector.
    pub n_tls: ComplexTensor,
    /// `sigma_z` with eigenvalues +1 (excited) and -1 (ground).
    pub sigma_z: ComplexTensor,
    /// `a^dagger a^dagger a a`.
    pub pair_cavity: ComplexTensor,
}

impl SystemOps {
    pub fn new(n_fock: usize) -> Self {
        let d = n_fock + 1;
        let id_c = ComplexTensor::identity(d);
        let id_t = ComplexTensor::identity(2);
        let sm = ComplexTensor::matrix(2, 2, vec![ZERO, ONE, ZERO, ZERO]).unwrap();
        let a = id_t.kron(&annihilation(d)).unwrap();
        let sigma_minus = sm.kron(&id_c).unwrap();
        let ee = ComplexTensor::diagonal(&[ZERO, ONE]);
        let sz = ComplexTensor::diagonal(&[-ONE, ONE]);
        Self {
            a_dag: a.adjoint().unwrap(),
            sigma_plus: sigma_minus.adjoint().unwrap(),
            n_cavity: id_t.kron(&number(d)).unwrap(),
            n_tls: ee.kron(&id_c).unwrap(),
            sigma_z: sz.kron(&id_c).unwrap(),
            pair_cavity: id_t.kron(&pair_number(d)).unwrap(),
            a,
            sigma_minus,
        }
    }
}

/// `H_S = g (a^dag sigma- + sigma+ a) + E (sigma+ + sigma-) + delta (a^dag a + sigma+ sigma-)`.
pub fn system_hamiltonian(p: &ModelParams) -> Result<ComplexTensor> {
    p.validate()?;
    Ok(hamiltonian(p.g, p.drive_amplitude, p.delta, p.n_fock))
}

pub(crate) fn hamiltonian(g: f64, drive: f64, delta: f64, n_fock: usize) -> ComplexTensor {
    let ops = SystemOps::new(n_fock);
    let c = |x: f64| C64::new(x, 0.0);
    let jc = ops
        .a_dag
        .matmul(&ops.sigma_minus)
        .unwrap()
        .add(&ops.sigma_plus.matmul(&ops.a).unwrap())
        .unwrap();
    let drv = ops.sigma_plus.add(&ops.sigma_minus).unwrap();
    let det = ops.n_cavity.add(&ops.n_tls).unwrap();
    jc.scale(c(g))
        .add(&drv.scale(c(drive)))
        .unwrap()
        .add(&det.scale(c(delta)))
        .unwrap()
}

fn kron3(a: &ComplexTensor, b: &ComplexTensor, c: &ComplexTensor) -> ComplexTensor {
    a.kron(b).unwrap().kron(c).unwrap()
}

/// Generator with an explicit delayed-bin dimension; `d_old = 1` drops the
/// feedback channel entirely.
fn generator_dims(p: &ModelParams, d_old: usize) -> ComplexTensor {
    let d_new = p.d_bin;
    let h = hamiltonian(p.g, p.drive_amplitude, p.delta, p.n_fock);
    let ops = SystemOps::new(p.n_fock);
    let id_new = ComplexTensor::identity(d_new);
    let id_old = ComplexTensor::identity(d_old);
    let mut m = kron3(&id_new, &h, &id_old).scale(-I * p.dt);
    if p.kappa1 > 0.0 {
        let b = annihilation(d_new);
        let bd = b.adjoint().unwrap();
        let term = kron3(&bd, &ops.a, &id_old)
            .sub(&kron3(&b, &ops.a_dag, &id_old))
            .unwrap();
        m = m
            .add(&term.scale(C64::new((2.0 * p.kappa1 * p.dt).sqrt(), 0.0)))
            .unwrap();
    }
    if d_old > 1 && p.kappa2 > 0.0 {
        let b = annihilation(d_old);
        let bd = b.adjoint().unwrap();
        // the returning field then enters the cavity as e^{i phi} a(t - tau)
        let ph = C64::from_polar(1.0, -p.phi);
        let term = kron3(&id_new, &ops.a, &bd)
            .scale(ph)
            .sub(&kron3(&id_new, &ops.a_dag, &b).scale(ph.conj()))
            .unwrap();
        m = m
            .add(&term.scale(C64::new((2.0 * p.kappa2 * p.dt).sqrt(), 0.0)))
            .unwrap();
    }
    m
}

/// Anti-Hermitian step generator on (new bin, system, delayed bin):
/// `-i H_S dt + sqrt(2 k1 dt)(b_new^dag a - h.c.) + sqrt(2 k2 dt)(e^{-i phi} b_old^dag a - h.c.)`.
pub fn step_generator(p: &ModelParams) -> Result<ComplexTensor> {
    p.validate()?;
    Ok(generator_dims(p, p.d_bin))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    Exact,
    /// Truncated power series of the given order.
    Series(usize),
}

#[derive(Clone, Debug)]
pub struct StepUnitary {
    /// Square matrix on (new bin, system, delayed bin), row-major.
    pub matrix: ComplexTensor,
    pub d_new: usize,
    pub d_sys: usize,
    /// 1 when the step has no feedback channel.
    pub d_old: usize,
}

impl StepUnitary {
    /// The same operator with site order (delayed bin, system, new bin), the
    /// order in which these sites sit on the chain. For `d_old = 1` this is
    /// simply (system, new bin).
    pub fn chain_order(&self) -> ComplexTensor {
        let (n, s, o) = (self.d_new, self.d_sys, self.d_old);
        let d = n * s * o;
        let m = self.matrix.clone().reshape(&[n, s, o, n, s, o]).unwrap();
        m.permute(&[2, 1, 0, 5, 4, 3]).unwrap().reshape(&[d, d]).unwrap()
    }
}

fn unitary_from_generator(m: &ComplexTensor, mode: StepMode) -> Result<ComplexTensor> {
    match mode {
        StepMode::Exact => matrix_exponential(m),
        StepMode::Series(order) => {
            if order < 1 {
                return Err(Error::Validation("series order must be >= 1".into()));
            }
            taylor_exponential(m, order)
        }
    }
}

pub fn step_unitary(p: &ModelParams, mode: StepMode) -> Result<StepUnitary> {
    p.validate()?;
    let m = generator_dims(p, p.d_bin);
    Ok(StepUnitary {
        matrix: unitary_from_generator(&m, mode)?,
        d_new: p.d_bin,
        d_sys: p.d_sys(),
        d_old: p.d_bin,
    })
}

/// Step unitary without the delayed bin, for runs with `kappa2 = 0`.
pub fn markov_step_unitary(p: &ModelParams, mode: StepMode) -> Result<StepUnitary> {
    p.validate()?;
    let m = generator_dims(p, 1);
    Ok(StepUnitary {
        matrix: unitary_from_generator(&m, mode)?,
        d_new: p.d_bin,
        d_sys: p.d_sys(),
        d_old: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    fn weak_drive() -> ModelParams {
        ModelParams {
            g: 0.2,
            drive_amplitude: 0.01,
            kappa1: 0.6125 * 0.2,
            kappa2: 0.6 * 0.2,
            tau: 1.8 / 0.2,
            phi: PI / 2.0,
            dt: 0.1,
            n_fock: 2,
            d_bin: 2,
            ..Default::default()
        }
    }

    #[test]
    fn zero_hamiltonian() {
        let p = ModelParams {
            g: 0.0,
            ..Default::default()
        };
        assert_eq!(system_hamiltonian(&p).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn vacuum_rabi_block() {
        let p = ModelParams {
            n_fock: 1,
            ..Default::default()
        };
        let h = system_hamiltonian(&p).unwrap();
        // |e,0> = 2, |g,1> = 1
        assert_eq!(h.get(&[2, 1]), ONE);
        assert_eq!(h.get(&[1, 2]), ONE);
        let nonzero = h.data().iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 2);
        let (vals, _) = linalg::eigh(h.data(), 4).unwrap();
        let want = [-1.0, 0.0, 0.0, 1.0];
        for (v, w) in vals.iter().zip(want) {
            assert!((v - w).abs() < 1e-14);
        }
    }

    #[test]
    fn strong_drive_spectrum_matches_dense_oracle() {
        // dense assembly from explicit matrix elements
        let (g, e, nf) = (1.0, 2.0, 6);
        let d = nf + 1;
        let mut h = vec![ZERO; 4 * d * d];
        let idx = |s: usize, n: usize| s * d + n;
        for n in 0..d {
            if n + 1 < d {
                // |e,n> <-> |g,n+1>
                let v = C64::new(g * ((n + 1) as f64).sqrt(), 0.0);
                h[idx(1, n) * 2 * d + idx(0, n + 1)] = v;
                h[idx(0, n + 1) * 2 * d + idx(1, n)] = v;
            }
            h[idx(1, n) * 2 * d + idx(0, n)] = C64::new(e, 0.0);
            h[idx(0, n) * 2 * d + idx(1, n)] = C64::new(e, 0.0);
        }
        let p = ModelParams {
            g,
            drive_amplitude: e,
            n_fock: nf,
            ..Default::default()
        };
        let built = system_hamiltonian(&p).unwrap();
        assert!(built.hermiticity_error().unwrap() < 1e-14);
        let (a, _) = linalg::eigh(built.data(), 2 * d).unwrap();
        let (b, _) = linalg::eigh(&h, 2 * d).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_is_anti_hermitian() {
        for phi in [0.0, 0.3, PI, 5.0] {
            let p = ModelParams {
                phi,
                delta: 0.4,
                ..weak_drive()
            };
            let m = step_generator(&p).unwrap();
            let sum = m.add(&m.adjoint().unwrap()).unwrap();
            assert!(sum.max_abs() < 1e-13);
        }
    }

    #[test]
    fn no_decay_is_pure_system_evolution() {
        let p = ModelParams {
            kappa1: 0.0,
            kappa2: 0.0,
            ..weak_drive()
        };
        let m = step_generator(&p).unwrap();
        let h = system_hamiltonian(&p).unwrap();
        let id = ComplexTensor::identity(p.d_bin);
        let want = kron3(&id, &h, &id).scale(-I * p.dt);
        assert!(m.sub(&want).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn first_order_emission_amplitude() {
        let p = ModelParams {
            g: 0.0,
            kappa1: 0.5,
            dt: 1e-4,
            tau: 1e-4,
            n_fock: 1,
            d_bin: 2,
            ..Default::default()
        };
        let u = step_unitary(&p, StepMode::Exact).unwrap();
        let (ds, dn) = (p.d_sys(), p.d_bin);
        // |0_new, g 1_cav, 0_old> -> |1_new, g 0_cav, 0_old>
        let col = (0 * ds + 1) * dn;
        let row = (1 * ds + 0) * dn;
        let amp = u.matrix.get(&[row, col]);
        let want = (2.0 * p.kappa1 * p.dt).sqrt();
        assert!((amp.re - want).abs() < want * 1e-3);
    }

    #[test]
    fn phase_is_periodic() {
        let a = step_generator(&weak_drive()).unwrap();
        let b = step_generator(&ModelParams {
            phi: weak_drive().phi + 2.0 * PI,
            ..weak_drive()
        })
        .unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn phase_shift_by_pi_flips_feedback_terms() {
        let p = weak_drive();
        let q = ModelParams { phi: p.phi + PI, ..p.clone() };
        let without = ModelParams { kappa2: 0.0, ..p.clone() };
        let fb_p = step_generator(&p).unwrap().sub(&step_generator(&without).unwrap()).unwrap();
        let fb_q = step_generator(&q).unwrap().sub(&step_generator(&without).unwrap()).unwrap();
        assert!(fb_p.add(&fb_q).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn dt_scaling() {
        let p = weak_drive();
        let half = ModelParams { dt: p.dt / 2.0, tau: p.tau, ..p.clone() };
        let sys = |q: &ModelParams| step_generator(&ModelParams { kappa1: 0.0, kappa2: 0.0, ..q.clone() }).unwrap();
        let res = |q: &ModelParams| step_generator(q).unwrap().sub(&sys(q)).unwrap();
        assert!(sys(&half).scale(C64::new(2.0, 0.0)).sub(&sys(&p)).unwrap().max_abs() < 1e-15);
        let r = res(&half).scale(C64::new(2f64.sqrt(), 0.0)).sub(&res(&p)).unwrap();
        assert!(r.max_abs() < 1e-14);
    }

    #[test]
    fn zero_generator_gives_identity() {
        let p = ModelParams {
            g: 0.0,
            ..Default::default()
        };
        let u = step_unitary(&p, StepMode::Exact).unwrap();
        assert!(u.matrix.sub(&ComplexTensor::identity(u.matrix.shape()[0])).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn series_matches_exact() {
        let p = ModelParams {
            g: 1.0,
            dt: 0.01,
            tau: 0.05,
            n_fock: 3,
            ..Default::default()
        };
        let a = step_unitary(&p, StepMode::Exact).unwrap();
        let b = step_unitary(&p, StepMode::Series(4)).unwrap();
        assert!(a.matrix.sub(&b.matrix).unwrap().max_abs() <= 1e-9);
        assert!(step_unitary(&p, StepMode::Series(0)).is_err());
    }

    #[test]
    fn weak_drive_unitary_is_unitary() {
        let p = ModelParams {
            n_fock: 4,
            d_bin: 3,
            ..weak_drive()
        };
        let u = step_unitary(&p, StepMode::Exact).unwrap();
        assert!(u.matrix.unitarity_error().unwrap() < 1e-12);
    }

    #[test]
    fn chain_order_permutation() {
        let p = ModelParams { n_fock: 1, d_bin: 2, ..weak_drive() };
        let u = step_unitary(&p, StepMode::Exact).unwrap();
        let c = u.chain_order();
        let (n, s, o) = (u.d_new, u.d_sys, u.d_old);
        for (i1, j1, k1, i2, j2, k2) in [(1, 2, 0, 0, 3, 1), (0, 1, 1, 1, 0, 0), (1, 3, 1, 1, 3, 0)] {
            let a = u.matrix.get(&[(i1 * s + j1) * o + k1, (i2 * s + j2) * o + k2]);
            let b = c.get(&[(k1 * s + j1) * n + i1, (k2 * s + j2) * n + i2]);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn markov_unitary_matches_full_on_vacuum_delayed_bin() {
        let p = weak_drive();
        let p0 = ModelParams { kappa2: 0.0, ..p.clone() };
        let full = step_unitary(&p0, StepMode::Exact).unwrap();
        let mk = markov_step_unitary(&p0, StepMode::Exact).unwrap();
        let (n, s, o) = (full.d_new, full.d_sys, full.d_old);
        for i in 0..n * s {
            for j in 0..n * s {
                let a = full.matrix.get(&[i * o, j * o]);
                assert!((a - mk.matrix.get(&[i, j])).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn tau_validation() {
        let ok = ModelParams { tau: 1.8, dt: 0.1, ..Default::default() };
        assert_eq!(ok.delay_steps().unwrap(), 18);
        let bad = ModelParams { tau: 1.8, dt: 0.07, ..Default::default() };
        let err = bad.validate().unwrap_err().to_string();
        assert!(err.contains("tau"), "{err}");
        assert!(ModelParams { tau: 0.0, ..Default::default() }.validate().is_err());
        assert!(ModelParams { kappa1: -1.0, ..Default::default() }.validate().is_err());
        assert!(ModelParams { d_bin: 1, ..Default::default() }.validate().is_err());
        assert!(ModelParams { n_fock: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn coherent_initial_state() {
        let v = SystemInit {
            tls: TlsInit::Ground,
            cavity: CavityInit::Coherent { re: 6f64.sqrt(), im: 0.0 },
        }
        .vector(24)
        .unwrap();
        assert!((v.frobenius_norm() - 1.0).abs() < 1e-14);
        let ops = SystemOps::new(24);
        let nv = ops.n_cavity.apply(&v).unwrap();
        let n: C64 = v.data().iter().zip(nv.data()).map(|(a, b)| a.conj() * b).sum();
        assert!((n.re - 6.0).abs() < 1e-3);
    }

    #[test]
    fn excited_fock_init() {
        let v = SystemInit { tls: TlsInit::Excited, cavity: CavityInit::Fock { n: 1 } }
            .vector(2)
            .unwrap();
        assert_eq!(v.get(&[4]), ONE);
        assert!(SystemInit { tls: TlsInit::Ground, cavity: CavityInit::Fock { n: 3 } }
            .vector(2)
            .is_err());
    }
}
