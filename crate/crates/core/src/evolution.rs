//! Time stepping of the system plus waveguide chain.
//!
//! Chain layout at the start of step `k` (system site on the right):
//!
//! ```text
//! [ released outputs .., b_{k-L}, b_{k-L+1}, .., b_{k-1}, S ]
//!                        ^ orthogonality center
//! ```
//!
//! A fresh vacuum bin `b_k` is appended, `b_{k-L}` is swapped rightwards
//! until it neighbours `S`, the three-site step unitary acts on
//! `(b_{k-L}, S, b_k)`, `S` and `b_k` are exchanged and `b_{k-L}` is swapped
//! back. After the step `b_{k-L}` has met the system twice and is part of the
//! output field. Every bin left of the orthogonality center is released.
//!
//! Without feedback (`kappa2 = 0`) there is no register: the two-site step
//! acts on `(S, b_k)` and `b_k` is released immediately.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{markov_step_unitary, step_unitary, ModelParams, StepMode, SystemOps};
use crate::mps::{MpsState, SiteLabel};
use crate::series::TimeSeries;
use crate::tensor::ComplexTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recorder {
    /// `<sigma+ sigma->`.
    TlsPopulation,
    /// `<sigma_z> = 2 <sigma+ sigma-> - 1`.
    Inversion,
    CavityPhotons,
    /// Photon flux of the bin released in each step.
    OutputFlux,
    /// `<a^dag a^dag a a> / <a^dag a>^2`, `NaN` below the photon floor.
    InstantaneousG2,
    /// Largest bond extent on the chain after each step.
    BondStats,
    /// Cumulative discarded weight after each step.
    DiscardedWeight,
}

impl Recorder {
    pub const ALL: [Recorder; 7] = [
        Recorder::TlsPopulation,
        Recorder::Inversion,
        Recorder::CavityPhotons,
        Recorder::OutputFlux,
        Recorder::InstantaneousG2,
        Recorder::BondStats,
        Recorder::DiscardedWeight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Recorder::TlsPopulation => "tls_population",
            Recorder::Inversion => "inversion",
            Recorder::CavityPhotons => "cavity_photons",
            Recorder::OutputFlux => "output_flux",
            Recorder::InstantaneousG2 => "instantaneous_g2",
            Recorder::BondStats => "bond_stats",
            Recorder::DiscardedWeight => "discarded_weight",
        }
    }

    /// Whether the series starts at `t = 0` (system observables) or after the
    /// first step.
    fn has_initial_sample(self) -> bool {
        matches!(
            self,
            Recorder::TlsPopulation
                | Recorder::Inversion
                | Recorder::CavityPhotons
                | Recorder::InstantaneousG2
        )
    }
}

impl fmt::Display for Recorder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Recorder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Recorder::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown recorder '{s}'")))
    }
}

#[derive(Clone, Debug)]
pub struct RunPlan {
    pub params: ModelParams,
    pub n_steps: usize,
    /// Normalised system vector of length `2 (n_fock + 1)`.
    pub system_init: ComplexTensor,
    pub recorders: Vec<Recorder>,
    pub step_mode: StepMode,
    /// Record every `stride` steps.
    pub stride: usize,
    /// Abort once the cumulative discarded weight exceeds this.
    pub failure_threshold: f64,
    /// Keep at most this many released bins; older ones are dropped.
    pub retain_outputs: Option<usize>,
    /// Photon-number floor below which the instantaneous g2 is undefined.
    pub g2_floor: f64,
}

impl RunPlan {
    pub fn new(params: ModelParams, n_steps: usize, system_init: ComplexTensor) -> Self {
        Self {
            params,
            n_steps,
            system_init,
            recorders: vec![
                Recorder::TlsPopulation,
                Recorder::CavityPhotons,
                Recorder::OutputFlux,
            ],
            step_mode: StepMode::Exact,
            stride: 1,
            failure_threshold: 1e-4,
            retain_outputs: None,
            g2_floor: 1e-8,
        }
    }

    pub fn with_recorders(mut self, recorders: &[Recorder]) -> Self {
        self.recorders = recorders.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_steps < 1 {
            return Err(Error::Validation("n_steps must be >= 1".into()));
        }
        if self.recorders.is_empty() {
            return Err(Error::Validation("at least one recorder is required".into()));
        }
        if self.stride < 1 {
            return Err(Error::Validation("stride must be >= 1".into()));
        }
        if !(self.failure_threshold >= 0.0) {
            return Err(Error::Validation("failure threshold must be >= 0".into()));
        }
        if self.system_init.shape() != [self.params.d_sys()] {
            return Err(Error::Dimension(format!(
                "system state has shape {:?}, expected [{}]",
                self.system_init.shape(),
                self.params.d_sys()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub state: MpsState,
    pub series: BTreeMap<String, TimeSeries>,
    pub steps_completed: usize,
    pub max_bond: usize,
    pub discarded_weight: f64,
}

impl RunOutput {
    pub fn get(&self, r: Recorder) -> Option<&TimeSeries> {
        self.series.get(r.name())
    }

    /// Ordinal of the most recently released bin, the natural base for
    /// output correlations.
    pub fn newest_released_bin(&self) -> Option<i64> {
        (0..self.state.center()).rev().find_map(|i| match self.state.label(i) {
            SiteLabel::Bin(k) => Some(k),
            SiteLabel::System => None,
        })
    }
}

/// A run stopped early; `partial` holds everything recorded up to the
/// failing step.
#[derive(Debug)]
pub struct RunAbort {
    pub error: Error,
    pub partial: Option<RunOutput>,
}

impl fmt::Display for RunAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunAbort {}

impl From<Error> for RunAbort {
    fn from(error: Error) -> Self {
        Self {
            error,
            partial: None,
        }
    }
}

impl From<RunAbort> for Error {
    fn from(a: RunAbort) -> Self {
        a.error
    }
}

fn system_position(state: &MpsState) -> Result<usize> {
    state
        .position_of(SiteLabel::System)
        .ok_or_else(|| Error::Validation("chain has no system site".into()))
}

fn real_expectation(state: &MpsState, site: usize, op: &ComplexTensor) -> Result<f64> {
    Ok(state.expectation(&[(site, op)])?.re)
}

/// Photon flux `<b^dag b> / dt` carried by released bin `k`.
pub fn output_flux(state: &MpsState, k: i64, dt: f64) -> Result<f64> {
    let pos = state
        .position_of(SiteLabel::Bin(k))
        .ok_or_else(|| Error::Validation(format!("bin {k} is not on the chain")))?;
    if pos >= state.center() {
        return Err(Error::Validation(format!("bin {k} has not been released yet")));
    }
    let n = crate::model::number(state.physical_dim(pos));
    Ok(real_expectation(state, pos, &n)?.max(0.0) / dt)
}

/// Normal-ordered cavity `g2(0, t) = <a^dag a^dag a a> / <a^dag a>^2`;
/// `None` when `<a^dag a>` is below `floor`.
pub fn instantaneous_g2(state: &MpsState, floor: f64) -> Result<Option<f64>> {
    let s = system_position(state)?;
    let ops = SystemOps::new(state.physical_dim(s) / 2 - 1);
    Ok(g2_at(state, s, &ops, floor)?)
}

fn g2_at(state: &MpsState, s: usize, ops: &SystemOps, floor: f64) -> Result<Option<f64>> {
    let n = real_expectation(state, s, &ops.n_cavity)?;
    if n < floor {
        return Ok(None);
    }
    let pair = real_expectation(state, s, &ops.pair_cavity)?;
    Ok(Some(pair.max(0.0) / (n * n)))
}

struct Recording {
    recorders: Vec<Recorder>,
    data: BTreeMap<Recorder, (Vec<f64>, Vec<f64>)>,
}

impl Recording {
    fn new(recorders: &[Recorder]) -> Self {
        let mut rs = recorders.to_vec();
        rs.sort();
        rs.dedup();
        Self {
            data: rs.iter().map(|&r| (r, (Vec::new(), Vec::new()))).collect(),
            recorders: rs,
        }
    }

    fn wants(&self, r: Recorder) -> bool {
        self.data.contains_key(&r)
    }

    fn push(&mut self, r: Recorder, t: f64, v: f64) {
        if let Some((ts, vs)) = self.data.get_mut(&r) {
            ts.push(t);
            vs.push(v);
        }
    }

    fn system(&mut self, state: &MpsState, s: usize, ops: &SystemOps, t: f64, floor: f64) -> Result<()> {
        if self.wants(Recorder::TlsPopulation) || self.wants(Recorder::Inversion) {
            let pe = real_expectation(state, s, &ops.n_tls)?;
            self.push(Recorder::TlsPopulation, t, pe);
            self.push(Recorder::Inversion, t, 2.0 * pe - 1.0);
        }
        if self.wants(Recorder::CavityPhotons) {
            let n = real_expectation(state, s, &ops.n_cavity)?;
            self.push(Recorder::CavityPhotons, t, n);
        }
        if self.wants(Recorder::InstantaneousG2) {
            let g2 = g2_at(state, s, ops, floor)?;
            self.push(Recorder::InstantaneousG2, t, g2.unwrap_or(f64::NAN));
        }
        Ok(())
    }

    fn finish(self, params: &ModelParams) -> Result<BTreeMap<String, TimeSeries>> {
        let mut out = BTreeMap::new();
        for r in self.recorders {
            let (t, v) = self.data[&r].clone();
            out.insert(
                r.name().to_string(),
                TimeSeries::real(r.name(), t, v)?.with_meta(params.clone()),
            );
        }
        Ok(out)
    }
}

/// Advances the chain by `plan.n_steps` steps and returns the final state
/// with the recorded series.
pub fn run(plan: &RunPlan) -> std::result::Result<RunOutput, RunAbort> {
    plan.validate()?;
    let p = &plan.params;
    let l = p.delay_steps()?;
    let feedback = p.has_feedback();
    let ops = SystemOps::new(p.n_fock);
    let gate = if feedback {
        step_unitary(p, plan.step_mode)?.chain_order()
    } else {
        markov_step_unitary(p, plan.step_mode)?.chain_order()
    };
    let norm = plan.system_init.frobenius_norm();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!("system state has norm {norm}")).into());
    }
    let mut state = if feedback {
        let mut st = MpsState::init_state(&plan.system_init, l, p.d_bin, p.svd)?;
        st.move_center(0)?;
        st
    } else {
        MpsState::from_product(vec![(SiteLabel::System, plan.system_init.clone())], 0, p.svd)?
    };

    let mut rec = Recording::new(&plan.recorders);
    let s0 = system_position(&state)?;
    rec.system(&state, s0, &ops, 0.0, plan.g2_floor)?;

    let mut completed = 0;
    for k in 0..plan.n_steps {
        let t = (k + 1) as f64 * p.dt;
        let record = (k + 1) % plan.stride == 0;
        let step = if feedback {
            feedback_step(&mut state, &gate, k, l, p.d_bin)
        } else {
            markov_step(&mut state, &gate, k, p.d_bin)
        };
        let (s, out_pos) = match step {
            Ok(v) => v,
            Err(e) => return Err(abort(e, state, rec, p, completed)),
        };
        if record {
            // center sits next to the system site here, so both reads are local
            let r = (|| -> Result<()> {
                rec.system(&state, s, &ops, t, plan.g2_floor)?;
                if rec.wants(Recorder::OutputFlux) {
                    let n = crate::model::number(p.d_bin);
                    let flux = real_expectation(&state, out_pos, &n)?.max(0.0) / p.dt;
                    rec.push(Recorder::OutputFlux, t, flux);
                }
                Ok(())
            })();
            if let Err(e) = r {
                return Err(abort(e, state, rec, p, completed));
            }
        }
        let finish = if feedback {
            feedback_restore(&mut state, s, l)
        } else {
            markov_restore(&mut state, s)
        };
        if let Err(e) = finish {
            return Err(abort(e, state, rec, p, completed));
        }
        completed = k + 1;
        if record {
            rec.push(Recorder::BondStats, t, state.max_bond() as f64);
            rec.push(Recorder::DiscardedWeight, t, state.discarded_weight());
        }
        if state.discarded_weight() > plan.failure_threshold {
            let entropy_profile = state.bond_entropies().unwrap_or_default();
            let e = Error::Truncation {
                step: k,
                discarded: state.discarded_weight(),
                threshold: plan.failure_threshold,
                max_bond: state.max_bond(),
                entropy_profile,
            };
            return Err(abort(e, state, rec, p, completed));
        }
        if let Some(keep) = plan.retain_outputs {
            let released = state.center();
            if released > keep {
                if let Err(e) = state.drop_leading(released - keep) {
                    return Err(abort(e, state, rec, p, completed));
                }
            }
        }
    }
    let series = rec.finish(p)?;
    Ok(RunOutput {
        max_bond: state.max_bond_seen(),
        discarded_weight: state.discarded_weight(),
        steps_completed: completed,
        state,
        series,
    })
}

fn abort(
    error: Error,
    state: MpsState,
    rec: Recording,
    p: &ModelParams,
    completed: usize,
) -> RunAbort {
    // drop a half-written sample so every series stays aligned
    let mut rec = rec;
    for r in Recorder::ALL {
        if let Some((t, v)) = rec.data.get_mut(&r) {
            let limit = completed + usize::from(r.has_initial_sample());
            t.truncate(limit);
            v.truncate(limit);
        }
    }
    let partial = rec.finish(p).ok().map(|series| RunOutput {
        max_bond: state.max_bond_seen(),
        discarded_weight: state.discarded_weight(),
        steps_completed: completed,
        state,
        series,
    });
    RunAbort { error, partial }
}

/// Swaps the delayed bin next to the system and applies the step unitary.
/// Returns the system position and the position of the released bin; the
/// center is left on the new bin, right of the system.
fn feedback_step(
    state: &mut MpsState,
    gate: &ComplexTensor,
    k: usize,
    l: usize,
    d_bin: usize,
) -> Result<(usize, usize)> {
    let s = state.len() - 1;
    debug_assert_eq!(state.label(s), SiteLabel::System);
    debug_assert_eq!(state.center(), s - l);
    state.push_vacuum_bin(SiteLabel::Bin(k as i64), d_bin)?;
    for j in s - l..s - 1 {
        state.swap_sites(j)?;
    }
    state.apply_gate_with_center(gate, &[s - 1, s, s + 1], s + 1)?;
    Ok((s, s - 1))
}

fn feedback_restore(state: &mut MpsState, s: usize, l: usize) -> Result<()> {
    state.swap_sites(s)?;
    if l > 1 {
        state.move_center(s - 1)?;
        for j in (s - l..s - 1).rev() {
            state.swap_sites(j)?;
        }
        state.move_center(s - l + 1)?;
    }
    Ok(())
}

fn markov_step(
    state: &mut MpsState,
    gate: &ComplexTensor,
    k: usize,
    d_bin: usize,
) -> Result<(usize, usize)> {
    let s = state.len() - 1;
    state.push_vacuum_bin(SiteLabel::Bin(k as i64), d_bin)?;
    state.apply_gate_with_center(gate, &[s, s + 1], s)?;
    Ok((s, s + 1))
}

fn markov_restore(state: &mut MpsState, s: usize) -> Result<()> {
    state.swap_sites(s)?;
    Ok(())
}
